//! Axis-aligned bounding volume hierarchy over mesh triangles, used for exact
//! closest-point queries during voxelization.

use super::mesh::{closest_point_on_triangle, winding_contribution, TriangleMesh};
use crate::Vec3;

const LEAF_SIZE: usize = 4;
/// Far-field acceptance ratio for the dipole winding approximation.
const WINDING_BETA: f64 = 2.0;

#[derive(Clone, Copy, Debug)]
struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            lo: Vec3::repeat(f64::INFINITY),
            hi: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }

    fn dist2(&self, p: &Vec3) -> f64 {
        let d = (self.lo - p).sup(&(p - self.hi)).sup(&Vec3::zeros());
        d.norm_squared()
    }
}

enum Node {
    Leaf {
        bounds: Aabb,
        start: usize,
        end: usize,
    },
    Inner {
        bounds: Aabb,
        left: usize,
        right: usize,
    },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

/// First-order far-field summary of a node's triangles.
#[derive(Clone, Copy, Debug)]
struct Dipole {
    center: Vec3,
    area_normal: Vec3,
    radius: f64,
}

pub struct TriangleBvh<'m> {
    mesh: &'m TriangleMesh,
    order: Vec<usize>,
    nodes: Vec<Node>,
    dipoles: Vec<Dipole>,
}

impl<'m> TriangleBvh<'m> {
    pub fn build(mesh: &'m TriangleMesh) -> Self {
        let mut order: Vec<usize> = (0..mesh.triangles.len()).collect();
        let centroids: Vec<Vec3> = (0..mesh.triangles.len())
            .map(|t| {
                let [a, b, c] = mesh.corners(t);
                (a + b + c) / 3.0
            })
            .collect();
        let mut nodes = Vec::with_capacity(2 * mesh.triangles.len() / LEAF_SIZE + 1);
        if !order.is_empty() {
            build_node(
                mesh,
                &centroids,
                &mut order,
                0,
                mesh.triangles.len(),
                &mut nodes,
            );
        }
        let dipoles = nodes
            .iter()
            .map(|node| {
                let (start, end) = span(&nodes, node);
                dipole(mesh, &order[start..end])
            })
            .collect();
        Self {
            mesh,
            order,
            nodes,
            dipoles,
        }
    }

    /// Generalized winding number at `p`: about 1 inside a closed mesh, 0
    /// outside. Distant nodes use a dipole expansion.
    pub fn winding_number(&self, p: &Vec3) -> f64 {
        if self.nodes.is_empty() {
            return 0.0;
        }
        let mut w = 0.0;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let dp = &self.dipoles[n];
            let r = dp.center - p;
            let dist = r.norm();
            if dist > WINDING_BETA * dp.radius {
                w += r.dot(&dp.area_normal) / (4.0 * std::f64::consts::PI * dist * dist * dist);
                continue;
            }
            match &self.nodes[n] {
                Node::Leaf { start, end, .. } => {
                    for &t in &self.order[*start..*end] {
                        let [a, b, c] = self.mesh.corners(t);
                        w += winding_contribution(p, &a, &b, &c);
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(*left);
                    stack.push(*right);
                }
            }
        }
        w
    }

    /// Squared distance and closest point on the mesh.
    pub fn closest(&self, p: &Vec3) -> Option<(f64, Vec3)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (f64::INFINITY, Vec3::zeros());
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            if self.nodes[n].bounds().dist2(p) >= best.0 {
                continue;
            }
            match &self.nodes[n] {
                Node::Leaf { start, end, .. } => {
                    for &t in &self.order[*start..*end] {
                        let [a, b, c] = self.mesh.corners(t);
                        let q = closest_point_on_triangle(p, &a, &b, &c);
                        let d2 = (q - p).norm_squared();
                        if d2 < best.0 {
                            best = (d2, q);
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[*left].bounds().dist2(p);
                    let dr = self.nodes[*right].bounds().dist2(p);
                    // Visit the nearer child first.
                    if dl < dr {
                        stack.push(*right);
                        stack.push(*left);
                    } else {
                        stack.push(*left);
                        stack.push(*right);
                    }
                }
            }
        }
        Some(best)
    }
}

fn span(nodes: &[Node], node: &Node) -> (usize, usize) {
    match node {
        Node::Leaf { start, end, .. } => (*start, *end),
        Node::Inner { left, right, .. } => {
            (span(nodes, &nodes[*left]).0, span(nodes, &nodes[*right]).1)
        }
    }
}

fn dipole(mesh: &TriangleMesh, tris: &[usize]) -> Dipole {
    let mut area = 0.0;
    let mut center = Vec3::zeros();
    let mut area_normal = Vec3::zeros();
    for &t in tris {
        let [a, b, c] = mesh.corners(t);
        let cross = (b - a).cross(&(c - a));
        let ar = 0.5 * cross.norm();
        area += ar;
        center += ar * (a + b + c) / 3.0;
        area_normal += 0.5 * cross;
    }
    if area > 0.0 {
        center /= area;
    }
    let radius = tris
        .iter()
        .flat_map(|&t| mesh.corners(t))
        .map(|v| (v - center).norm())
        .fold(0.0, f64::max);
    Dipole {
        center,
        area_normal,
        radius,
    }
}

fn build_node(
    mesh: &TriangleMesh,
    centroids: &[Vec3],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let mut bounds = Aabb::empty();
    let mut cbounds = Aabb::empty();
    for &t in &order[start..end] {
        for v in mesh.corners(t) {
            bounds.grow(&v);
        }
        cbounds.grow(&centroids[t]);
    }
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { bounds, start, end });
        return id;
    }
    let extent = cbounds.hi - cbounds.lo;
    let axis = extent.imax();
    let mid = (start + end) / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        centroids[a][axis].total_cmp(&centroids[b][axis])
    });
    nodes.push(Node::Leaf { bounds, start, end });
    let left = build_node(mesh, centroids, order, start, mid, nodes);
    let right = build_node(mesh, centroids, order, mid, end, nodes);
    nodes[id] = Node::Inner {
        bounds,
        left,
        right,
    };
    id
}
