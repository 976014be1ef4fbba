//! Geometric kernel for closed interface polylines: element normals,
//! time-weighted normals, mass-lumped surface products, surface gradients,
//! enclosed areas, and the exact discrete volume identity.
//!
//! All functions work on plain vertex arrays; a closed polyline with `n`
//! vertices has edges `j -> (j, (j+1) mod n)`, ordered counterclockwise so
//! the element normals point from the interior toward the exterior.

use thiserror::Error;

pub type Point = [f64; 2];

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("zero-length edge at index {0}")]
    ZeroLengthEdge(usize),
    #[error("polyline is self-intersecting (edges {0} and {1})")]
    SelfIntersection(usize, usize),
    #[error("polyline needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
}

#[inline]
pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub fn scale(a: Point, s: f64) -> Point {
    [a[0] * s, a[1] * s]
}

#[inline]
pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

/// Orientation vector of the edge `q0 -> q1`: the edge vector rotated by
/// -90 degrees, NOT normalized. Its length equals the edge length.
#[inline]
pub fn orientation_vector(q0: Point, q1: Point) -> Point {
    let e = sub(q1, q0);
    [e[1], -e[0]]
}

/// Unit edge normal; for a counterclockwise polyline this points outward
/// (from the interior region toward the exterior).
pub fn element_normal(q0: Point, q1: Point) -> Result<Point, GeometryError> {
    let a = orientation_vector(q0, q1);
    let len = norm(a);
    if len == 0.0 {
        return Err(GeometryError::ZeroLengthEdge(0));
    }
    Ok(scale(a, 1.0 / len))
}

/// Time-weighted normal of an edge moving linearly from `(p0, p1)` at `t_m`
/// to `(q0, q1)` at `t_{m+1}`.
///
/// This is the time average of the orientation vector of the interpolated
/// edge, normalized by the OLD edge length. The orientation vector is affine
/// in `t` in two dimensions, so the average is exactly the midpoint value
/// `(A_old + A_new) / 2`.
pub fn time_weighted_normal(
    p0: Point,
    p1: Point,
    q0: Point,
    q1: Point,
) -> Result<Point, GeometryError> {
    let a_old = orientation_vector(p0, p1);
    let len = norm(a_old);
    if len == 0.0 {
        return Err(GeometryError::ZeroLengthEdge(0));
    }
    let a_new = orientation_vector(q0, q1);
    Ok(scale(add(a_old, a_new), 0.5 / len))
}

/// Edge lengths of a closed polyline.
pub fn edge_lengths(pos: &[Point]) -> Vec<f64> {
    let n = pos.len();
    (0..n).map(|j| norm(sub(pos[(j + 1) % n], pos[j]))).collect()
}

/// Total length of a closed polyline.
pub fn perimeter(pos: &[Point]) -> f64 {
    edge_lengths(pos).iter().sum()
}

/// Mass-lumped surface product of two scalar nodal fields over a closed
/// polyline: `sum_j |sigma_j|/2 * (u v at both endpoints)`.
pub fn lumped_inner_product(pos: &[Point], u: &[f64], v: &[f64]) -> f64 {
    let n = pos.len();
    let mut acc = 0.0;
    for j in 0..n {
        let k = (j + 1) % n;
        let len = norm(sub(pos[k], pos[j]));
        acc += 0.5 * len * (u[j] * v[j] + u[k] * v[k]);
    }
    acc
}

/// Mass-lumped product where the integrand at each edge endpoint is supplied
/// by a closure `(edge index, endpoint 0|1) -> value`; this is the general
/// form that admits one-sided limits of discontinuous integrands.
pub fn lumped_inner_product_with(pos: &[Point], f: impl Fn(usize, usize) -> f64) -> f64 {
    let n = pos.len();
    let mut acc = 0.0;
    for j in 0..n {
        let k = (j + 1) % n;
        let len = norm(sub(pos[k], pos[j]));
        acc += 0.5 * len * (f(j, 0) + f(j, 1));
    }
    acc
}

/// Lumped vertex weights: `w_k = (|sigma_{k-1}| + |sigma_k|) / 2`.
pub fn lumped_vertex_weights(pos: &[Point]) -> Vec<f64> {
    let n = pos.len();
    let lens = edge_lengths(pos);
    (0..n)
        .map(|k| 0.5 * (lens[(k + n - 1) % n] + lens[k]))
        .collect()
}

fn segments_properly_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = cross(sub(b, a), sub(c, a));
    let d2 = cross(sub(b, a), sub(d, a));
    let d3 = cross(sub(d, c), sub(a, c));
    let d4 = cross(sub(d, c), sub(b, c));
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

/// Checks a closed polyline for proper self-intersections between
/// non-adjacent edges.
pub fn check_simple(pos: &[Point]) -> Result<(), GeometryError> {
    let n = pos.len();
    if n < 3 {
        return Err(GeometryError::TooFewVertices(n));
    }
    for j in 0..n {
        for i in (j + 2)..n {
            if j == 0 && i == n - 1 {
                continue; // adjacent through the wrap-around
            }
            let (a, b) = (pos[j], pos[(j + 1) % n]);
            let (c, d) = (pos[i], pos[(i + 1) % n]);
            if segments_properly_intersect(a, b, c, d) {
                return Err(GeometryError::SelfIntersection(j, i));
            }
        }
    }
    Ok(())
}

/// Signed shoelace area of a closed polyline (positive for counterclockwise).
pub fn signed_area(pos: &[Point]) -> f64 {
    let n = pos.len();
    let mut acc = 0.0;
    for j in 0..n {
        acc += cross(pos[j], pos[(j + 1) % n]);
    }
    0.5 * acc
}

/// Enclosed area of a closed simple polyline; rejects self-intersections.
pub fn enclosed_area(pos: &[Point]) -> Result<f64, GeometryError> {
    check_simple(pos)?;
    Ok(signed_area(pos).abs())
}

/// First moments of the enclosed region: `(int x dA, int y dA)` for a
/// counterclockwise polyline (used for droplet centers of mass).
pub fn area_moments(pos: &[Point]) -> (f64, f64) {
    let n = pos.len();
    let (mut mx, mut my) = (0.0, 0.0);
    for j in 0..n {
        let a = pos[j];
        let b = pos[(j + 1) % n];
        let c = cross(a, b);
        mx += (a[0] + b[0]) * c;
        my += (a[1] + b[1]) * c;
    }
    (mx / 6.0, my / 6.0)
}

/// Surface gradient of a linear edge field with endpoint values `f0`, `f1`:
/// `((f1 - f0) / |sigma|) * unit tangent`, constant on the edge.
pub fn surface_gradient(f0: f64, f1: f64, q0: Point, q1: Point) -> Result<Point, GeometryError> {
    let e = sub(q1, q0);
    let len2 = dot(e, e);
    if len2 == 0.0 {
        return Err(GeometryError::ZeroLengthEdge(0));
    }
    Ok(scale(e, (f1 - f0) / len2))
}

/// Residual of the discrete volume identity
/// `<(X_new - X_old) . n^{m+1/2}, 1>^h - (area_new - area_old)`.
///
/// This vanishes to rounding for arbitrary vertex motions; it is an exact
/// algebraic identity of the lumped product with time-weighted normals, not
/// an approximation.
pub fn volume_identity_check(x_old: &[Point], x_new: &[Point]) -> f64 {
    assert_eq!(x_old.len(), x_new.len());
    let n = x_old.len();
    let mut lumped = 0.0;
    for j in 0..n {
        let k = (j + 1) % n;
        let a_old = orientation_vector(x_old[j], x_old[k]);
        let a_new = orientation_vector(x_new[j], x_new[k]);
        // |sigma_j^m| * n^{m+1/2} = (A_old + A_new) / 2
        let nw = scale(add(a_old, a_new), 0.5);
        let d0 = sub(x_new[j], x_old[j]);
        let d1 = sub(x_new[k], x_old[k]);
        lumped += 0.5 * dot(add(d0, d1), nw);
    }
    lumped - (signed_area(x_new) - signed_area(x_old))
}

/// Positions of a closed polyline after displacing each vertex.
pub fn displace(pos: &[Point], disp: &[Point]) -> Vec<Point> {
    pos.iter().zip(disp).map(|(p, d)| add(*p, *d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn regular_ngon(n: usize, r: f64, center: Point) -> Vec<Point> {
        (0..n)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                [center[0] + r * t.cos(), center[1] + r * t.sin()]
            })
            .collect()
    }

    #[test]
    fn element_normal_conventions() {
        assert_eq!(element_normal([0.0, 0.0], [0.0, 1.0]).unwrap(), [1.0, 0.0]);
        assert_eq!(element_normal([0.0, 0.0], [1.0, 0.0]).unwrap(), [0.0, -1.0]);
        assert_eq!(
            element_normal([0.0, 0.0], [0.0, 0.0]),
            Err(GeometryError::ZeroLengthEdge(0))
        );
    }

    #[test]
    fn ngon_normals_point_away_from_centroid() {
        let pos = regular_ngon(17, 0.8, [0.3, -0.2]);
        let n = pos.len();
        for j in 0..n {
            let k = (j + 1) % n;
            let nrm = element_normal(pos[j], pos[k]).unwrap();
            let mid = scale(add(pos[j], pos[k]), 0.5);
            let radial = sub(mid, [0.3, -0.2]);
            assert!(dot(nrm, radial) > 0.0, "edge {j} normal points inward");
        }
    }

    // Independent oracle: integrate the orientation vector of the linearly
    // interpolated edge with composite Simpson quadrature.
    fn time_weighted_normal_quadrature(p0: Point, p1: Point, q0: Point, q1: Point) -> Point {
        let a = |t: f64| {
            let e0 = add(scale(p0, 1.0 - t), scale(q0, t));
            let e1 = add(scale(p1, 1.0 - t), scale(q1, t));
            orientation_vector(e0, e1)
        };
        let m = 8;
        let mut acc = [0.0, 0.0];
        for i in 0..m {
            let t0 = i as f64 / m as f64;
            let t1 = (i + 1) as f64 / m as f64;
            let tm = 0.5 * (t0 + t1);
            let (f0, fm, f1) = (a(t0), a(tm), a(t1));
            for c in 0..2 {
                acc[c] += (t1 - t0) / 6.0 * (f0[c] + 4.0 * fm[c] + f1[c]);
            }
        }
        let len = norm(orientation_vector(p0, p1));
        scale(acc, 1.0 / len)
    }

    #[test]
    fn time_weighted_normal_stationary_edge() {
        let (p0, p1) = ([0.1, 0.2], [0.7, -0.4]);
        let nw = time_weighted_normal(p0, p1, p0, p1).unwrap();
        let n = element_normal(p0, p1).unwrap();
        assert!(norm(sub(nw, n)) < 1e-15);
    }

    #[test]
    fn time_weighted_normal_matches_quadrature_for_rotation() {
        // Edge rotated by 90 degrees over the step.
        let (p0, p1) = ([0.0, 0.0], [1.0, 0.0]);
        let (q0, q1) = ([0.0, 0.0], [0.0, 1.0]);
        let nw = time_weighted_normal(p0, p1, q0, q1).unwrap();
        let oracle = time_weighted_normal_quadrature(p0, p1, q0, q1);
        assert!(norm(sub(nw, oracle)) < 1e-14);
        assert!((norm(nw) - (2.0f64).sqrt() / 2.0).abs() < 1e-14);
    }

    #[test]
    fn time_weighted_normal_matches_quadrature_for_stretch() {
        let (p0, p1) = ([0.0, 0.0], [1.0, 0.0]);
        let (q0, q1) = ([0.0, 0.0], [2.0, 0.0]);
        let nw = time_weighted_normal(p0, p1, q0, q1).unwrap();
        let oracle = time_weighted_normal_quadrature(p0, p1, q0, q1);
        assert!(norm(sub(nw, oracle)) < 1e-14);
        let n = element_normal(p0, p1).unwrap();
        assert!(norm(sub(nw, scale(n, 1.5))) < 1e-14);
    }

    #[test]
    fn lumped_product_partition_of_unity() {
        let pos = regular_ngon(23, 0.4, [0.0, 0.0]);
        let ones = vec![1.0; pos.len()];
        let total = lumped_inner_product(&pos, &ones, &ones);
        assert!((total - perimeter(&pos)).abs() < 1e-14);
    }

    #[test]
    fn lumped_product_single_edge_value() {
        // One edge of length 1 with nodal values (0, 1): the lumped rule
        // gives 1/2 (the exact product integral would be 1/3).
        let pos = [[0.0, 0.0], [1.0, 0.0], [0.5, 10.0]];
        let u = [0.0, 1.0, 0.0];
        let n = pos.len();
        let j = 0;
        let k = 1;
        let len = norm(sub(pos[k], pos[j]));
        let contrib = 0.5 * len * (u[j] * u[j] + u[k] * u[k]);
        assert_eq!(contrib, 0.5);
        let _ = n;
    }

    #[test]
    fn closed_polyline_normal_closure() {
        // sum_j |sigma_j| n_j = 0 on any closed polygon; pairing the constant
        // field 1 with the piecewise-constant normal in the lumped product.
        let pos = regular_ngon(13, 0.7, [0.2, 0.1]);
        let n = pos.len();
        let mut acc = [0.0, 0.0];
        for j in 0..n {
            let k = (j + 1) % n;
            acc = add(acc, orientation_vector(pos[j], pos[k]));
        }
        assert!(norm(acc) < 1e-14);
    }

    #[test]
    fn enclosed_area_unit_square() {
        let pos = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert!((enclosed_area(&pos).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn enclosed_area_regular_polygon_closed_form() {
        for j in [8usize, 16, 64] {
            let r = 0.37;
            let pos = regular_ngon(j, r, [0.0, 0.0]);
            let expect = 0.5 * j as f64 * r * r * (2.0 * std::f64::consts::PI / j as f64).sin();
            assert!((enclosed_area(&pos).unwrap() - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn enclosed_area_ellipse_sampling() {
        let (a, b) = (0.3125, 0.2);
        let n = 64;
        let pos: Vec<Point> = (0..n)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                [a * t.cos(), b * t.sin()]
            })
            .collect();
        let exact = std::f64::consts::PI * a * b;
        let got = enclosed_area(&pos).unwrap();
        // Uniform-angle sampling gives the closed form (J/2) a b sin(2 pi / J);
        // the inscribed-polygon deficit at J = 64 is 1.607e-3 relative.
        let closed_form = 0.5 * n as f64 * a * b * (2.0 * std::f64::consts::PI / n as f64).sin();
        assert!((got - closed_form).abs() < 1e-15);
        assert!((got - exact).abs() / exact < 2e-3);
    }

    #[test]
    fn self_intersection_detected() {
        let bowtie = [[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(matches!(
            enclosed_area(&bowtie),
            Err(GeometryError::SelfIntersection(..))
        ));
    }

    #[test]
    fn surface_gradient_cases() {
        // Constant field.
        let g = surface_gradient(2.0, 2.0, [0.3, 0.4], [0.9, 1.4]).unwrap();
        assert_eq!(g, [0.0, 0.0]);
        // f = x on a horizontal edge reproduces (1, 0).
        let g = surface_gradient(0.2, 0.7, [0.2, 1.0], [0.7, 1.0]).unwrap();
        assert!(norm(sub(g, [1.0, 0.0])) < 1e-15);
    }

    #[test]
    fn surface_gradient_chain_rule_for_tension_law() {
        // gamma = 1 - E omega_a A on an edge: grad_s gamma = -E omega_a grad_s A.
        let (e, omega) = (0.35, 4.2);
        let (q0, q1) = ([0.1, -0.3], [0.45, 0.22]);
        let (a0, a1) = (0.83, 0.31);
        let g_gamma =
            surface_gradient(1.0 - e * omega * a0, 1.0 - e * omega * a1, q0, q1).unwrap();
        let g_a = surface_gradient(a0, a1, q0, q1).unwrap();
        assert!(norm(sub(g_gamma, scale(g_a, -e * omega))) < 1e-14);
    }

    #[test]
    fn volume_identity_rigid_translation() {
        let pos = regular_ngon(19, 0.5, [0.0, 0.0]);
        let moved: Vec<Point> = pos.iter().map(|p| add(*p, [0.3, -0.1])).collect();
        let res = volume_identity_check(&pos, &moved);
        assert!(res.abs() < 1e-14);
        assert!((signed_area(&moved) - signed_area(&pos)).abs() < 1e-14);
    }

    #[test]
    fn volume_identity_dilation() {
        let pos: Vec<Point> = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
            .iter()
            .map(|p| [p[0] - 0.5, p[1] - 0.5])
            .collect();
        let grown: Vec<Point> = pos.iter().map(|p| scale(*p, 1.01)).collect();
        assert!(volume_identity_check(&pos, &grown).abs() < 1e-12);
    }

    #[test]
    fn volume_identity_random_perturbations() {
        // Deterministic pseudo-random 1e-3 perturbations of a 64-gon.
        let pos = regular_ngon(64, 0.25, [0.0, 0.0]);
        let mut rng_state = 0x9e3779b97f4a7c15u64;
        let mut rnd = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((rng_state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 2e-3
        };
        for _ in 0..50 {
            let moved: Vec<Point> = pos.iter().map(|p| [p[0] + rnd(), p[1] + rnd()]).collect();
            assert!(volume_identity_check(&pos, &moved).abs() < 1e-12);
        }
    }

    #[test]
    fn lumped_product_symmetric_bilinear() {
        let pos = regular_ngon(9, 1.3, [0.0, 0.0]);
        let u: Vec<f64> = (0..9).map(|i| (i as f64).sin()).collect();
        let v: Vec<f64> = (0..9).map(|i| (i as f64 * 0.7).cos()).collect();
        let w: Vec<f64> = (0..9).map(|i| 0.2 * i as f64 - 0.4).collect();
        let ip = |a: &[f64], b: &[f64]| lumped_inner_product(&pos, a, b);
        assert!((ip(&u, &v) - ip(&v, &u)).abs() < 1e-15);
        let uv: Vec<f64> = u.iter().zip(&w).map(|(a, b)| 2.0 * a + 3.0 * b).collect();
        assert!((ip(&uv, &v) - (2.0 * ip(&u, &v) + 3.0 * ip(&w, &v))).abs() < 1e-13);
    }
}
