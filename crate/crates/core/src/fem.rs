//! Shared finite-element basics: quadratic/linear triangle bases, quadrature
//! rules, and the global P2 node map built on top of a triangulation.

use std::collections::BTreeMap;

pub type Point = [f64; 2];

/// Signed area of a triangle.
#[inline]
pub fn tri_signed_area(p0: Point, p1: Point, p2: Point) -> f64 {
    0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0]))
}

/// Barycentric-coordinate gradients and area of a triangle.
#[derive(Debug, Clone, Copy)]
pub struct TriGeom {
    pub area: f64,
    /// grad lambda_k in xy coordinates.
    pub grad_l: [[f64; 2]; 3],
}

pub fn tri_geom(p: [Point; 3]) -> TriGeom {
    let area = tri_signed_area(p[0], p[1], p[2]);
    let inv = 1.0 / (2.0 * area);
    let grad = |a: Point, b: Point| [(a[1] - b[1]) * inv, (b[0] - a[0]) * inv];
    TriGeom {
        area,
        grad_l: [grad(p[1], p[2]), grad(p[2], p[0]), grad(p[0], p[1])],
    }
}

/// Quadrature rule on the reference triangle in barycentric form; weights
/// sum to one and multiply the physical area.
pub struct TriQuad {
    pub points: &'static [[f64; 3]],
    pub weights: &'static [f64],
}

const DUNAVANT4_A1: f64 = 0.445948490915965;
const DUNAVANT4_B1: f64 = 1.0 - 2.0 * DUNAVANT4_A1;
const DUNAVANT4_A2: f64 = 0.091576213509771;
const DUNAVANT4_B2: f64 = 1.0 - 2.0 * DUNAVANT4_A2;
const DUNAVANT4_W1: f64 = 0.223381589678011;
const DUNAVANT4_W2: f64 = 0.109951743655322;

static TRI_QUAD_DEG4_PTS: [[f64; 3]; 6] = [
    [DUNAVANT4_A1, DUNAVANT4_A1, DUNAVANT4_B1],
    [DUNAVANT4_A1, DUNAVANT4_B1, DUNAVANT4_A1],
    [DUNAVANT4_B1, DUNAVANT4_A1, DUNAVANT4_A1],
    [DUNAVANT4_A2, DUNAVANT4_A2, DUNAVANT4_B2],
    [DUNAVANT4_A2, DUNAVANT4_B2, DUNAVANT4_A2],
    [DUNAVANT4_B2, DUNAVANT4_A2, DUNAVANT4_A2],
];
static TRI_QUAD_DEG4_WTS: [f64; 6] = [
    DUNAVANT4_W1, DUNAVANT4_W1, DUNAVANT4_W1, DUNAVANT4_W2, DUNAVANT4_W2, DUNAVANT4_W2,
];

/// Six-point rule, exact through polynomial degree 4.
pub fn tri_quad_deg4() -> TriQuad {
    TriQuad {
        points: &TRI_QUAD_DEG4_PTS,
        weights: &TRI_QUAD_DEG4_WTS,
    }
}

/// Three-point Gauss rule on [0, 1], exact through degree 5; pairs
/// (position, weight), weights summing to one.
pub fn edge_gauss3() -> [(f64, f64); 3] {
    let s = 0.5 * (0.6f64).sqrt();
    [
        (0.5 - s, 5.0 / 18.0),
        (0.5, 8.0 / 18.0),
        (0.5 + s, 5.0 / 18.0),
    ]
}

/// P2 shape values at a barycentric point; node order is the three vertices
/// followed by the midpoints of edges (0,1), (1,2), (2,0).
#[inline]
pub fn p2_shapes(l: [f64; 3]) -> [f64; 6] {
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
    ]
}

/// P2 shape gradients in xy at a barycentric point, given the barycentric
/// gradients of the triangle.
#[inline]
pub fn p2_grads(l: [f64; 3], g: &TriGeom) -> [[f64; 2]; 6] {
    let gl = &g.grad_l;
    let mut out = [[0.0; 2]; 6];
    for c in 0..2 {
        out[0][c] = (4.0 * l[0] - 1.0) * gl[0][c];
        out[1][c] = (4.0 * l[1] - 1.0) * gl[1][c];
        out[2][c] = (4.0 * l[2] - 1.0) * gl[2][c];
        out[3][c] = 4.0 * (l[1] * gl[0][c] + l[0] * gl[1][c]);
        out[4][c] = 4.0 * (l[2] * gl[1][c] + l[1] * gl[2][c]);
        out[5][c] = 4.0 * (l[0] * gl[2][c] + l[2] * gl[0][c]);
    }
    out
}

/// Global P2 node numbering: mesh vertices first, then one node per unique
/// triangle edge in first-encounter order (deterministic for a fixed
/// triangle list).
#[derive(Debug, Clone)]
pub struct P2Connectivity {
    pub n_vertices: usize,
    pub n_nodes: usize,
    pub tri_nodes: Vec<[usize; 6]>,
    edge_node: BTreeMap<(usize, usize), usize>,
}

impl P2Connectivity {
    pub fn build(n_vertices: usize, triangles: impl Iterator<Item = [usize; 3]>) -> Self {
        let mut edge_node = BTreeMap::new();
        let mut tri_nodes = Vec::new();
        let mut next = n_vertices;
        for t in triangles {
            let mut nodes = [0usize; 6];
            nodes[..3].copy_from_slice(&t);
            for (slot, (a, b)) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])].iter().enumerate() {
                let key = (*a.min(b), *a.max(b));
                let id = *edge_node.entry(key).or_insert_with(|| {
                    let id = next;
                    next += 1;
                    id
                });
                nodes[3 + slot] = id;
            }
            tri_nodes.push(nodes);
        }
        P2Connectivity {
            n_vertices,
            n_nodes: next,
            tri_nodes,
            edge_node,
        }
    }

    pub fn midpoint_node(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_node.get(&(a.min(b), a.max(b))).copied()
    }

    pub fn edge_nodes(&self) -> impl Iterator<Item = (&(usize, usize), &usize)> {
        self.edge_node.iter()
    }

    /// Physical positions of all P2 nodes for the given vertex positions.
    pub fn node_positions(&self, vertices: &[Point]) -> Vec<Point> {
        let mut pos = vec![[0.0; 2]; self.n_nodes];
        pos[..self.n_vertices].copy_from_slice(vertices);
        for (&(a, b), &id) in &self.edge_node {
            pos[id] = [
                0.5 * (vertices[a][0] + vertices[b][0]),
                0.5 * (vertices[a][1] + vertices[b][1]),
            ];
        }
        pos
    }
}

/// Evaluates a vector P2 field (two interleaved components per node) at a
/// barycentric point of a triangle.
#[inline]
pub fn eval_p2_vector(coeffs: &[f64], nodes: &[usize; 6], l: [f64; 3]) -> Point {
    let s = p2_shapes(l);
    let mut out = [0.0; 2];
    for k in 0..6 {
        out[0] += s[k] * coeffs[2 * nodes[k]];
        out[1] += s[k] * coeffs[2 * nodes[k] + 1];
    }
    out
}

/// Evaluates a vector P1 field (two interleaved components per vertex).
#[inline]
pub fn eval_p1_vector(coeffs: &[f64], verts: &[usize; 3], l: [f64; 3]) -> Point {
    let mut out = [0.0; 2];
    for k in 0..3 {
        out[0] += l[k] * coeffs[2 * verts[k]];
        out[1] += l[k] * coeffs[2 * verts[k] + 1];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deg4_rule_integrates_monomials_exactly() {
        // Reference triangle (0,0)-(1,0)-(0,1): integral of x^a y^b equals
        // a! b! / (a+b+2)!.
        let p = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let geom = tri_geom(p);
        let quad = tri_quad_deg4();
        let fact = |n: usize| (1..=n).product::<usize>() as f64;
        for a in 0..=4usize {
            for b in 0..=(4 - a) {
                let mut acc = 0.0;
                for (pt, w) in quad.points.iter().zip(quad.weights) {
                    let x = pt[1]; // lambda_1 is the x coordinate here
                    let y = pt[2];
                    acc += w * x.powi(a as i32) * y.powi(b as i32);
                }
                acc *= geom.area;
                let exact = fact(a) * fact(b) / fact(a + b + 2);
                assert!(
                    (acc - exact).abs() < 1e-15,
                    "x^{a} y^{b}: {acc} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn edge_gauss3_exact_through_degree_5() {
        let rule = edge_gauss3();
        for d in 0..=5usize {
            let acc: f64 = rule.iter().map(|(t, w)| w * t.powi(d as i32)).sum();
            assert!((acc - 1.0 / (d as f64 + 1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn p2_shapes_are_nodal() {
        let nodes = [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.5, 0.5, 0.0],
            [0.0, 0.5, 0.5],
            [0.5, 0.0, 0.5],
        ];
        for (i, l) in nodes.iter().enumerate() {
            let s = p2_shapes(*l);
            for (j, v) in s.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn p2_gradients_reproduce_linear_and_quadratic_fields() {
        let p = [[0.2, 0.1], [1.3, 0.4], [0.5, 1.7]];
        let geom = tri_geom(p);
        // f(x,y) = x^2 + 3xy interpolated at the 6 nodes; gradient at an
        // interior point must match 2x+3y, 3x exactly.
        let f = |q: Point| q[0] * q[0] + 3.0 * q[0] * q[1];
        let mid = |a: Point, b: Point| [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        let nodes_xy = [p[0], p[1], p[2], mid(p[0], p[1]), mid(p[1], p[2]), mid(p[2], p[0])];
        let coeffs: Vec<f64> = nodes_xy.iter().map(|q| f(*q)).collect();
        let l = [0.3, 0.45, 0.25];
        let x = [
            l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
            l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
        ];
        let grads = p2_grads(l, &geom);
        let mut g = [0.0, 0.0];
        for k in 0..6 {
            g[0] += coeffs[k] * grads[k][0];
            g[1] += coeffs[k] * grads[k][1];
        }
        assert!((g[0] - (2.0 * x[0] + 3.0 * x[1])).abs() < 1e-12);
        assert!((g[1] - 3.0 * x[0]).abs() < 1e-12);
    }

    #[test]
    fn p2_connectivity_shares_midpoints() {
        let tris = vec![[0usize, 1, 2], [1, 3, 2]];
        let c = P2Connectivity::build(4, tris.into_iter());
        assert_eq!(c.n_nodes, 4 + 5);
        // Shared edge (1,2) gets the same node in both triangles.
        assert_eq!(c.tri_nodes[0][4], c.tri_nodes[1][5]);
        assert_eq!(c.midpoint_node(2, 1), Some(c.tri_nodes[0][4]));
    }
}
