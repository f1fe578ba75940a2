fn main() {
    std::process::exit(resfit::cli::main());
}
