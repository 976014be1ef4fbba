//! Fitted bulk triangulation: generation around interface polylines
//! (constrained Delaunay with refinement), vertex motion, quality metrics,
//! and regeneration with field transfer.
//!
//! The interface polylines appear verbatim as mesh edges; every triangle
//! lies wholly in one phase region.

use std::collections::BTreeMap;

use spade::{
    ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation,
};
use thiserror::Error;

use crate::fem::{tri_signed_area, P2Connectivity};
use crate::geometry::{self, Point};
use crate::params::{InterfaceMeta, MeshMetadata, RegionKind};

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("polyline `{0}` is not simple or has too few vertices")]
    BadPolyline(String),
    #[error("polylines `{0}` and `{1}` intersect or are nested")]
    PolylinesIntersect(String, String),
    #[error("polyline `{0}` is not strictly inside the domain")]
    PolylineOutsideDomain(String),
    #[error("triangulation failed: {0}")]
    Triangulation(String),
    #[error("constraint edge of `{0}` was lost during meshing (marker spacing too small for target h?)")]
    ConstraintLost(String),
    #[error("element inversion: triangle {0} has non-positive area")]
    ElementInversion(usize),
    #[error("displacement field has wrong length: {got}, expected {expected}")]
    DisplacementLength { got: usize, expected: usize },
    #[error("point location failed for ({0}, {1}) in region {2}")]
    PointLocation(f64, f64, usize),
    #[error("periodic boundary subdivisions do not match")]
    PeriodicMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum RectSide {
    Left,
    Right,
    Bottom,
    Top,
}

/// Boundary-edge tag as the runner configures it: a no-slip wall, a free
/// (natural) segment, or one half of a periodic pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum BoundaryTag {
    Wall,
    Free,
    Periodic(u8),
}

#[derive(Debug, Clone, Copy)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }
    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

#[derive(Debug, Clone, Copy)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Triangle {
    pub v: [usize; 3],
    pub region: usize,
}

#[derive(Debug, Clone, Copy)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundaryEdge {
    pub v: (usize, usize),
    pub side: RectSide,
    pub tag: BoundaryTag,
}

#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InterfaceTopo {
    pub id: String,
    /// Ordered counterclockwise; edge j connects verts[j] -> verts[(j+1)%n].
    pub verts: Vec<usize>,
    pub region_minus: usize,
    pub region_plus: usize,
}

/// Bulk triangulation fitted to the interface polylines, with region labels
/// and boundary tags. Immutable between steps; operations return new values.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FittedMesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<Triangle>,
    pub region_names: Vec<String>,
    pub region_kinds: Vec<RegionKind>,
    pub interfaces: Vec<InterfaceTopo>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub rect: Rect,
    /// (slave, master) vertex pairs identifying the right boundary with the
    /// left one when the domain is x-periodic.
    pub periodic_vertex_pairs: Vec<(usize, usize)>,
    /// Matching (left edge, right edge) vertex pairs, each as (lo, hi).
    pub periodic_edge_pairs: Vec<((usize, usize), (usize, usize))>,
}

/// Per-step mesh motion data: vertex displacement, mesh velocity
/// (displacement / dt), and the per-triangle Jacobian of the backward map.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MeshMotionRecord {
    pub displacement: Vec<Point>,
    pub velocity: Vec<Point>,
    pub jacobian: Vec<f64>,
    pub dt: f64,
}

impl MeshMotionRecord {
    pub fn zero(mesh: &FittedMesh, dt: f64) -> Self {
        MeshMotionRecord {
            displacement: vec![[0.0; 2]; mesh.vertices.len()],
            velocity: vec![[0.0; 2]; mesh.vertices.len()],
            jacobian: vec![1.0; mesh.triangles.len()],
            dt,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MeshQuality {
    pub min_angle_deg: f64,
    pub max_area_ratio: f64,
    pub min_area: f64,
}

/// Inputs for [`generate_fitted_mesh`].
#[derive(Debug, Clone)]
pub struct DomainSpec {
    pub rect: Rect,
    pub target_h: f64,
    pub periodic_x: bool,
    /// Tags for the left, right, bottom, top sides.
    pub side_tags: [BoundaryTag; 4],
}

impl DomainSpec {
    pub fn tag_of(&self, side: RectSide) -> BoundaryTag {
        match side {
            RectSide::Left => self.side_tags[0],
            RectSide::Right => self.side_tags[1],
            RectSide::Bottom => self.side_tags[2],
            RectSide::Top => self.side_tags[3],
        }
    }
}

fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    // Crossing-number test; polyline vertices are assumed well away from p
    // (callers use triangle centroids or strict-containment checks).
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let t = (p[1] - a[1]) / (b[1] - a[1]);
            let x = a[0] + t * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn polylines_disjoint(a: &[Point], b: &[Point]) -> bool {
    // No proper segment intersections and no containment either way.
    for i in 0..a.len() {
        let (p0, p1) = (a[i], a[(i + 1) % a.len()]);
        for j in 0..b.len() {
            let (q0, q1) = (b[j], b[(j + 1) % b.len()]);
            let d = |u: Point, v: Point, w: Point| {
                (v[0] - u[0]) * (w[1] - u[1]) - (v[1] - u[1]) * (w[0] - u[0])
            };
            let d1 = d(p0, p1, q0);
            let d2 = d(p0, p1, q1);
            let d3 = d(q0, q1, p0);
            let d4 = d(q0, q1, p1);
            if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
                && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
            {
                return false;
            }
        }
    }
    if point_in_polygon(a[0], b) || point_in_polygon(b[0], a) {
        return false;
    }
    true
}

/// Builds a fitted mesh: the rectangle boundary is subdivided at spacing
/// ~`target_h`, the interface polylines are inserted verbatim as constraint
/// edges, and the interior is refined by constrained Delaunay refinement
/// that never splits a constraint edge.
pub fn generate_fitted_mesh(
    domain: &DomainSpec,
    polylines: &[(String, Vec<Point>)],
    interface_region_names: Option<&[String]>,
) -> Result<FittedMesh, MeshError> {
    let rect = domain.rect;
    let h = domain.target_h;

    // Normalize and validate the polylines.
    let mut loops: Vec<(String, Vec<Point>)> = Vec::with_capacity(polylines.len());
    for (id, pts) in polylines {
        if pts.len() < 3 || geometry::check_simple(pts).is_err() {
            return Err(MeshError::BadPolyline(id.clone()));
        }
        let mut pts = pts.clone();
        if geometry::signed_area(&pts) < 0.0 {
            pts.reverse();
        }
        for p in &pts {
            let eps = 1e-12 * (rect.width() + rect.height());
            if p[0] <= rect.x0 + eps
                || p[0] >= rect.x1 - eps
                || p[1] <= rect.y0 + eps
                || p[1] >= rect.y1 - eps
            {
                return Err(MeshError::PolylineOutsideDomain(id.clone()));
            }
        }
        loops.push((id.clone(), pts));
    }
    for i in 0..loops.len() {
        for j in (i + 1)..loops.len() {
            if !polylines_disjoint(&loops[i].1, &loops[j].1) {
                return Err(MeshError::PolylinesIntersect(
                    loops[i].0.clone(),
                    loops[j].0.clone(),
                ));
            }
        }
    }

    let mut cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::new();
    let ins = |cdt: &mut ConstrainedDelaunayTriangulation<Point2<f64>>, x: f64, y: f64| {
        cdt.insert(Point2::new(x, y))
            .map_err(|e| MeshError::Triangulation(format!("{e:?}")))
    };

    // Boundary subdivision; identical spacing on opposite sides so periodic
    // identification matches exactly.
    let nx = (rect.width() / h).round().max(1.0) as usize;
    let ny = (rect.height() / h).round().max(1.0) as usize;
    let mut side_handles: [Vec<spade::handles::FixedVertexHandle>; 4] =
        [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    // Bottom and top share the x subdivision, left and right the y one.
    let xs: Vec<f64> = (0..=nx)
        .map(|i| rect.x0 + rect.width() * i as f64 / nx as f64)
        .collect();
    let ys: Vec<f64> = (0..=ny)
        .map(|i| rect.y0 + rect.height() * i as f64 / ny as f64)
        .collect();
    let mut corner = BTreeMap::new();
    for (side_idx, side) in [RectSide::Left, RectSide::Right, RectSide::Bottom, RectSide::Top]
        .iter()
        .enumerate()
    {
        let pts: Vec<Point> = match side {
            RectSide::Left => ys.iter().map(|&y| [rect.x0, y]).collect(),
            RectSide::Right => ys.iter().map(|&y| [rect.x1, y]).collect(),
            RectSide::Bottom => xs.iter().map(|&x| [x, rect.y0]).collect(),
            RectSide::Top => xs.iter().map(|&x| [x, rect.y1]).collect(),
        };
        for p in pts {
            let key = (p[0].to_bits(), p[1].to_bits());
            let handle = if let Some(&h) = corner.get(&key) {
                h
            } else {
                let h = ins(&mut cdt, p[0], p[1])?;
                corner.insert(key, h);
                h
            };
            side_handles[side_idx].push(handle);
        }
    }
    for handles in &side_handles {
        for w in handles.windows(2) {
            cdt.add_constraint(w[0], w[1]);
        }
    }

    // Interface polylines as constraint loops.
    let mut loop_handles: Vec<Vec<spade::handles::FixedVertexHandle>> = Vec::new();
    for (_, pts) in &loops {
        let hs: Vec<_> = pts
            .iter()
            .map(|p| ins(&mut cdt, p[0], p[1]))
            .collect::<Result<_, _>>()?;
        for k in 0..hs.len() {
            cdt.add_constraint(hs[k], hs[(k + 1) % hs.len()]);
        }
        loop_handles.push(hs);
    }

    // Guard points on both sides of each polyline. Without them the refiner
    // leaves the shallow "ear" triangles of three consecutive markers in
    // place (it refuses to split constraint edges), which caps the minimum
    // angle at the polygon turn angle.
    for (_, pts) in &loops {
        let n = pts.len();
        for k in 0..n {
            let prev = pts[(k + n - 1) % n];
            let here = pts[k];
            let next = pts[(k + 1) % n];
            let n0 = geometry::element_normal(prev, here);
            let n1 = geometry::element_normal(here, next);
            let (Ok(n0), Ok(n1)) = (n0, n1) else { continue };
            let mut nv = [n0[0] + n1[0], n0[1] + n1[1]];
            let len = geometry::norm(nv);
            if len < 1e-12 {
                continue;
            }
            nv = [nv[0] / len, nv[1] / len];
            let spacing = geometry::norm(geometry::sub(next, here))
                .min(geometry::norm(geometry::sub(here, prev)));
            // Alternating offsets so the guard rings are not cocircular
            // (a circular guard ring would reproduce the same shallow ears
            // one layer in).
            let amp = if k % 2 == 0 { 0.52 } else { 0.78 };
            for side in [-amp, amp] {
                let q = [here[0] + side * spacing * nv[0], here[1] + side * spacing * nv[1]];
                let margin = 0.25 * spacing;
                if q[0] > rect.x0 + margin
                    && q[0] < rect.x1 - margin
                    && q[1] > rect.y0 + margin
                    && q[1] < rect.y1 - margin
                {
                    ins(&mut cdt, q[0], q[1])?;
                }
            }
        }
    }

    let max_area = 0.54 * h * h;
    // Quality refinement; constraint edges (the interface markers and the
    // boundary subdivision) are never split. The angle target near
    // constraints is then not always reachable directly; the smoothing
    // sweeps below repair what the refiner cannot.
    cdt.refine(
        RefinementParameters::<f64>::new()
            .exclude_outer_faces(true)
            .keep_constraint_edges()
            .with_max_allowed_area(max_area),
    );

    // Numbers of fixed vertices: boundary subdivision + polyline markers
    // were inserted first, in a deterministic order.
    let n_fixed = {
        let boundary: usize = corner.len();
        let markers: usize = loops.iter().map(|(_, p)| p.len()).sum();
        boundary + markers
    };

    // Lloyd-style smoothing: move free (Steiner/guard) vertices to the
    // area-weighted centroid of their triangle star, then rebuild the
    // constrained triangulation from the smoothed positions.
    let mut positions: Vec<Point> = {
        let mut v = vec![[0.0f64; 2]; cdt.num_vertices()];
        for vert in cdt.vertices() {
            let p = vert.position();
            v[vert.fix().index()] = [p.x, p.y];
        }
        v
    };
    let mut tris: Vec<[usize; 3]> = cdt
        .inner_faces()
        .map(|f| {
            let vs = f.vertices();
            [vs[0].fix().index(), vs[1].fix().index(), vs[2].fix().index()]
        })
        .collect();

    for _sweep in 0..6 {
        let n = positions.len();
        let mut acc = vec![[0.0f64; 3]; n]; // (sum area*cx, sum area*cy, sum area)
        for t in &tris {
            let (a, b, c) = (positions[t[0]], positions[t[1]], positions[t[2]]);
            let area = tri_signed_area(a, b, c).abs();
            let cx = (a[0] + b[0] + c[0]) / 3.0;
            let cy = (a[1] + b[1] + c[1]) / 3.0;
            for &v in t {
                acc[v][0] += area * cx;
                acc[v][1] += area * cy;
                acc[v][2] += area;
            }
        }
        for v in n_fixed..n {
            if acc[v][2] > 0.0 {
                positions[v] = [acc[v][0] / acc[v][2], acc[v][1] / acc[v][2]];
            }
        }
        // Rebuild the constrained triangulation on the smoothed points.
        let mut cdt2 = ConstrainedDelaunayTriangulation::<Point2<f64>>::new();
        let mut handles = Vec::with_capacity(n);
        let mut ok = true;
        for p in &positions {
            match cdt2.insert(Point2::new(p[0], p[1])) {
                Ok(h) => handles.push(h),
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok || handles.len() != n {
            break; // duplicate point after smoothing: keep previous mesh
        }
        for hs in &side_handles {
            for w in hs.windows(2) {
                cdt2.add_constraint(handles[w[0].index()], handles[w[1].index()]);
            }
        }
        for hs in &loop_handles {
            for k in 0..hs.len() {
                cdt2.add_constraint(
                    handles[hs[k].index()],
                    handles[hs[(k + 1) % hs.len()].index()],
                );
            }
        }
        tris = cdt2
            .inner_faces()
            .map(|f| {
                let vs = f.vertices();
                [vs[0].fix().index(), vs[1].fix().index(), vs[2].fix().index()]
            })
            .collect();
        for vert in cdt2.vertices() {
            let p = vert.position();
            positions[vert.fix().index()] = [p.x, p.y];
        }
    }

    // Constraint edges of the polylines must be edges of the final mesh;
    // verify with an edge set scan below (validate_fitted).
    let vertices = positions;

    // Region ids: 0 = plus, then one region per interface.
    let mut region_names = vec!["plus".to_string()];
    let mut region_kinds = vec![RegionKind::Plus];
    for (i, (id, _)) in loops.iter().enumerate() {
        let name = match interface_region_names {
            Some(names) => names[i].clone(),
            None => format!("minus:{id}"),
        };
        region_names.push(name);
        region_kinds.push(RegionKind::Minus(i));
    }

    let mut triangles = Vec::new();
    for t in &tris {
        let mut idx = *t;
        let (p0, p1, p2) = (vertices[idx[0]], vertices[idx[1]], vertices[idx[2]]);
        if tri_signed_area(p0, p1, p2) < 0.0 {
            idx.swap(1, 2);
        }
        let c = [
            (vertices[idx[0]][0] + vertices[idx[1]][0] + vertices[idx[2]][0]) / 3.0,
            (vertices[idx[0]][1] + vertices[idx[1]][1] + vertices[idx[2]][1]) / 3.0,
        ];
        let mut region = 0usize;
        for (i, (_, pts)) in loops.iter().enumerate() {
            if point_in_polygon(c, pts) {
                region = i + 1;
                break;
            }
        }
        triangles.push(Triangle { v: idx, region });
    }

    let interfaces = loops
        .iter()
        .zip(&loop_handles)
        .enumerate()
        .map(|(i, ((id, _), hs))| InterfaceTopo {
            id: id.clone(),
            verts: hs.iter().map(|h| h.index()).collect(),
            region_minus: i + 1,
            region_plus: 0,
        })
        .collect();

    let mut mesh = FittedMesh {
        vertices,
        triangles,
        region_names,
        region_kinds,
        interfaces,
        boundary_edges: Vec::new(),
        rect,
        periodic_vertex_pairs: Vec::new(),
        periodic_edge_pairs: Vec::new(),
    };
    mesh.rebuild_boundary(domain)?;
    mesh.validate_fitted()?;
    Ok(mesh)
}

impl FittedMesh {
    fn rebuild_boundary(&mut self, domain: &DomainSpec) -> Result<(), MeshError> {
        let rect = self.rect;
        let tol = 1e-9 * (rect.width() + rect.height());
        let mut edge_count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for t in &self.triangles {
            for (a, b) in [(t.v[0], t.v[1]), (t.v[1], t.v[2]), (t.v[2], t.v[0])] {
                *edge_count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        self.boundary_edges.clear();
        for (&(a, b), &count) in &edge_count {
            if count != 1 {
                continue;
            }
            let (pa, pb) = (self.vertices[a], self.vertices[b]);
            let side = if (pa[0] - rect.x0).abs() < tol && (pb[0] - rect.x0).abs() < tol {
                RectSide::Left
            } else if (pa[0] - rect.x1).abs() < tol && (pb[0] - rect.x1).abs() < tol {
                RectSide::Right
            } else if (pa[1] - rect.y0).abs() < tol && (pb[1] - rect.y0).abs() < tol {
                RectSide::Bottom
            } else if (pa[1] - rect.y1).abs() < tol && (pb[1] - rect.y1).abs() < tol {
                RectSide::Top
            } else {
                return Err(MeshError::Triangulation(format!(
                    "boundary edge ({a}, {b}) lies on no rectangle side"
                )));
            };
            self.boundary_edges.push(BoundaryEdge {
                v: (a, b),
                side,
                tag: domain.tag_of(side),
            });
        }

        if domain.periodic_x {
            let mut left: Vec<usize> = self.side_vertices(RectSide::Left);
            let mut right: Vec<usize> = self.side_vertices(RectSide::Right);
            let key = |v: &usize| self.vertices[*v][1];
            left.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
            right.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
            if left.len() != right.len() {
                return Err(MeshError::PeriodicMismatch);
            }
            for (l, r) in left.iter().zip(&right) {
                if (self.vertices[*l][1] - self.vertices[*r][1]).abs() > tol {
                    return Err(MeshError::PeriodicMismatch);
                }
            }
            self.periodic_vertex_pairs = right.iter().zip(&left).map(|(r, l)| (*r, *l)).collect();
            self.periodic_edge_pairs = left
                .windows(2)
                .zip(right.windows(2))
                .map(|(lw, rw)| {
                    (
                        (lw[0].min(lw[1]), lw[0].max(lw[1])),
                        (rw[0].min(rw[1]), rw[0].max(rw[1])),
                    )
                })
                .collect();
        }
        Ok(())
    }

    pub fn side_vertices(&self, side: RectSide) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .boundary_edges
            .iter()
            .filter(|e| e.side == side)
            .flat_map(|e| [e.v.0, e.v.1])
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn metadata(&self) -> MeshMetadata {
        MeshMetadata {
            regions: self.region_names.clone(),
            kinds: self.region_kinds.clone(),
            interfaces: self
                .interfaces
                .iter()
                .map(|i| InterfaceMeta {
                    id: i.id.clone(),
                    region_minus: i.region_minus,
                    region_plus: i.region_plus,
                })
                .collect(),
        }
    }

    pub fn interface_positions(&self, iface: usize) -> Vec<Point> {
        self.interfaces[iface]
            .verts
            .iter()
            .map(|&v| self.vertices[v])
            .collect()
    }

    pub fn tri_area(&self, t: usize) -> f64 {
        let v = self.triangles[t].v;
        tri_signed_area(self.vertices[v[0]], self.vertices[v[1]], self.vertices[v[2]])
    }

    pub fn p2(&self) -> P2Connectivity {
        P2Connectivity::build(self.vertices.len(), self.triangles.iter().map(|t| t.v))
    }

    /// Vertices incident to at least one triangle of `region`.
    pub fn region_vertices(&self, region: usize) -> Vec<usize> {
        let mut flag = vec![false; self.vertices.len()];
        for t in &self.triangles {
            if t.region == region {
                for &v in &t.v {
                    flag[v] = true;
                }
            }
        }
        flag.iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .collect()
    }

    /// Checks the fitted property: every interface edge is shared by exactly
    /// two triangles whose regions are the interface's minus and plus sides,
    /// and all triangles are positively oriented.
    pub fn validate_fitted(&self) -> Result<(), MeshError> {
        for (ti, _) in self.triangles.iter().enumerate() {
            if self.tri_area(ti) <= 0.0 {
                return Err(MeshError::ElementInversion(ti));
            }
        }
        let mut edge_tris: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (ti, t) in self.triangles.iter().enumerate() {
            for (a, b) in [(t.v[0], t.v[1]), (t.v[1], t.v[2]), (t.v[2], t.v[0])] {
                edge_tris.entry((a.min(b), a.max(b))).or_default().push(ti);
            }
        }
        for iface in &self.interfaces {
            let n = iface.verts.len();
            for j in 0..n {
                let (a, b) = (iface.verts[j], iface.verts[(j + 1) % n]);
                let key = (a.min(b), a.max(b));
                let tris = edge_tris
                    .get(&key)
                    .ok_or_else(|| MeshError::ConstraintLost(iface.id.clone()))?;
                if tris.len() != 2 {
                    return Err(MeshError::ConstraintLost(iface.id.clone()));
                }
                let regions = [
                    self.triangles[tris[0]].region,
                    self.triangles[tris[1]].region,
                ];
                let mut sorted = regions;
                sorted.sort_unstable();
                let mut expected = [iface.region_minus, iface.region_plus];
                expected.sort_unstable();
                if sorted != expected {
                    return Err(MeshError::ConstraintLost(iface.id.clone()));
                }
            }
            let pos = self.interface_positions(
                self.interfaces.iter().position(|i| i.id == iface.id).unwrap(),
            );
            if geometry::signed_area(&pos) <= 0.0 {
                return Err(MeshError::BadPolyline(iface.id.clone()));
            }
        }
        Ok(())
    }

    pub fn domain_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.tri_area(t)).sum()
    }
}

/// Advances vertex positions; connectivity, labels and tags are unchanged.
/// Fails (without producing a mesh) if any triangle would invert.
pub fn update_vertices(mesh: &FittedMesh, displacement: &[Point]) -> Result<FittedMesh, MeshError> {
    if displacement.len() != mesh.vertices.len() {
        return Err(MeshError::DisplacementLength {
            got: displacement.len(),
            expected: mesh.vertices.len(),
        });
    }
    let vertices: Vec<Point> = mesh
        .vertices
        .iter()
        .zip(displacement)
        .map(|(p, d)| [p[0] + d[0], p[1] + d[1]])
        .collect();
    for (ti, t) in mesh.triangles.iter().enumerate() {
        if tri_signed_area(vertices[t.v[0]], vertices[t.v[1]], vertices[t.v[2]]) <= 0.0 {
            return Err(MeshError::ElementInversion(ti));
        }
    }
    let mut out = mesh.clone();
    out.vertices = vertices;
    Ok(out)
}

/// Quality metrics over all triangles.
pub fn quality(mesh: &FittedMesh) -> MeshQuality {
    let mut min_angle = f64::INFINITY;
    let mut min_area = f64::INFINITY;
    let mut max_area = 0.0f64;
    for (ti, t) in mesh.triangles.iter().enumerate() {
        let area = mesh.tri_area(ti);
        min_area = min_area.min(area);
        max_area = max_area.max(area);
        let p = [
            mesh.vertices[t.v[0]],
            mesh.vertices[t.v[1]],
            mesh.vertices[t.v[2]],
        ];
        for k in 0..3 {
            let a = p[k];
            let b = p[(k + 1) % 3];
            let c = p[(k + 2) % 3];
            let u = [b[0] - a[0], b[1] - a[1]];
            let v = [c[0] - a[0], c[1] - a[1]];
            let cosang = geometry::dot(u, v) / (geometry::norm(u) * geometry::norm(v));
            let ang = cosang.clamp(-1.0, 1.0).acos().to_degrees();
            min_angle = min_angle.min(ang);
        }
    }
    MeshQuality {
        min_angle_deg: min_angle,
        max_area_ratio: max_area / min_area,
        min_area,
    }
}

/// Point location with a uniform bin grid, restricted per region.
pub struct TriLocator<'a> {
    mesh: &'a FittedMesh,
    bins: Vec<Vec<usize>>,
    nx: usize,
    ny: usize,
    min: Point,
    inv_cell: [f64; 2],
}

impl<'a> TriLocator<'a> {
    pub fn new(mesh: &'a FittedMesh) -> Self {
        let rect = mesh.rect;
        let n = (mesh.triangles.len() as f64).sqrt().ceil() as usize;
        let (nx, ny) = (n.max(1), n.max(1));
        let min = [rect.x0, rect.y0];
        let inv_cell = [
            nx as f64 / rect.width().max(1e-300),
            ny as f64 / rect.height().max(1e-300),
        ];
        let mut bins = vec![Vec::new(); nx * ny];
        for (ti, t) in mesh.triangles.iter().enumerate() {
            let ps = [
                mesh.vertices[t.v[0]],
                mesh.vertices[t.v[1]],
                mesh.vertices[t.v[2]],
            ];
            let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
            for p in ps {
                x0 = x0.min(p[0]);
                y0 = y0.min(p[1]);
                x1 = x1.max(p[0]);
                y1 = y1.max(p[1]);
            }
            let ix0 = (((x0 - min[0]) * inv_cell[0]).floor() as isize).clamp(0, nx as isize - 1);
            let ix1 = (((x1 - min[0]) * inv_cell[0]).floor() as isize).clamp(0, nx as isize - 1);
            let iy0 = (((y0 - min[1]) * inv_cell[1]).floor() as isize).clamp(0, ny as isize - 1);
            let iy1 = (((y1 - min[1]) * inv_cell[1]).floor() as isize).clamp(0, ny as isize - 1);
            for iy in iy0..=iy1 {
                for ix in ix0..=ix1 {
                    bins[iy as usize * nx + ix as usize].push(ti);
                }
            }
        }
        TriLocator {
            mesh,
            bins,
            nx,
            ny,
            min,
            inv_cell,
        }
    }

    fn barycentric(&self, ti: usize, p: Point) -> [f64; 3] {
        let t = &self.mesh.triangles[ti];
        let (a, b, c) = (
            self.mesh.vertices[t.v[0]],
            self.mesh.vertices[t.v[1]],
            self.mesh.vertices[t.v[2]],
        );
        let area = tri_signed_area(a, b, c);
        [
            tri_signed_area(p, b, c) / area,
            tri_signed_area(a, p, c) / area,
            tri_signed_area(a, b, p) / area,
        ]
    }

    fn candidates(&self, p: Point) -> impl Iterator<Item = usize> + '_ {
        let ix = (((p[0] - self.min[0]) * self.inv_cell[0]).floor() as isize)
            .clamp(0, self.nx as isize - 1) as usize;
        let iy = (((p[1] - self.min[1]) * self.inv_cell[1]).floor() as isize)
            .clamp(0, self.ny as isize - 1) as usize;
        self.bins[iy * self.nx + ix].iter().copied()
    }

    fn locate_impl(
        &self,
        p: Point,
        filter: impl Fn(usize) -> bool,
    ) -> Option<(usize, [f64; 3])> {
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        let mut consider = |ti: usize| {
            if !filter(ti) {
                return false;
            }
            let l = self.barycentric(ti, p);
            let min_l = l[0].min(l[1]).min(l[2]);
            if min_l >= -1e-12 {
                best = Some((ti, l, min_l));
                return true;
            }
            if best.map_or(true, |(_, _, m)| min_l > m) {
                best = Some((ti, l, min_l));
            }
            false
        };
        for ti in self.candidates(p) {
            if consider(ti) {
                let (ti, l, _) = best.unwrap();
                return Some((ti, l));
            }
        }
        // Bin miss (point on a cell boundary or slightly outside): scan all.
        for ti in 0..self.mesh.triangles.len() {
            if consider(ti) {
                break;
            }
        }
        match best {
            Some((ti, l, m)) if m > -1e-6 => {
                // Clamp tiny negative coordinates and renormalize.
                let mut l = [l[0].max(0.0), l[1].max(0.0), l[2].max(0.0)];
                let s = l[0] + l[1] + l[2];
                for v in &mut l {
                    *v /= s;
                }
                Some((ti, l))
            }
            _ => None,
        }
    }

    pub fn locate_in_region(&self, region: usize, p: Point) -> Option<(usize, [f64; 3])> {
        self.locate_impl(p, |ti| self.mesh.triangles[ti].region == region)
    }

    pub fn locate_any(&self, p: Point) -> Option<(usize, [f64; 3])> {
        self.locate_impl(p, |_| true)
    }
}


/// Result of a regeneration event: the new mesh plus all transferred fields.
pub struct RegenerationOutput {
    pub mesh: FittedMesh,
    pub fluid: crate::fluid::FluidState,
    pub species: crate::transport::SpeciesState,
    pub layout: crate::transport::SpeciesLayout,
    /// Per bulk species: integral after minus integral before (interpolation
    /// transfer is not exactly conservative; the runner logs these jumps).
    pub mass_jumps: Vec<f64>,
}

/// Rebuilds the bulk mesh around the CURRENT interface polylines (which are
/// kept verbatim, surface fields untouched) and transfers the bulk fields:
/// velocity and pressure by global interpolation, bulk species by per-region
/// interpolation that honors the side of doubled dofs, pressure re-projected
/// to zero mean.
pub fn regenerate_and_interpolate(
    old_mesh: &FittedMesh,
    domain: &DomainSpec,
    old_p2: &crate::fem::P2Connectivity,
    fluid: &crate::fluid::FluidState,
    network: &crate::params::CheckedNetwork,
    old_layout: &crate::transport::SpeciesLayout,
    species: &crate::transport::SpeciesState,
) -> Result<RegenerationOutput, MeshError> {
    let polylines: Vec<(String, Vec<Point>)> = old_mesh
        .interfaces
        .iter()
        .enumerate()
        .map(|(f, iface)| (iface.id.clone(), old_mesh.interface_positions(f)))
        .collect();
    let minus_names: Vec<String> = old_mesh.region_names[1..].to_vec();
    let mesh = generate_fitted_mesh(domain, &polylines, Some(&minus_names))?;

    let locator = TriLocator::new(old_mesh);
    let new_p2 = mesh.p2();

    // Velocity: P2 point evaluation of the old field at new node positions.
    let new_nodes = new_p2.node_positions(&mesh.vertices);
    let mut velocity = vec![0.0f64; 2 * new_p2.n_nodes];
    let mut max_velocity = 0.0f64;
    for (k, p) in new_nodes.iter().enumerate() {
        let (ti, l) = locator
            .locate_any(*p)
            .ok_or(MeshError::PointLocation(p[0], p[1], usize::MAX))?;
        let u = crate::fem::eval_p2_vector(&fluid.velocity, &old_p2.tri_nodes[ti], l);
        velocity[2 * k] = u[0];
        velocity[2 * k + 1] = u[1];
        max_velocity = max_velocity.max(u[0].hypot(u[1]));
    }

    // Pressure: continuous part by nodal interpolation, element part from
    // the total pressure at the new centroid (region-matched), then a
    // mean-zero shift.
    let nv_old = old_mesh.vertices.len();
    let nv_new = mesh.vertices.len();
    let mut p1_new = vec![0.0f64; nv_new];
    for (v, p) in mesh.vertices.iter().enumerate() {
        let (ti, l) = locator
            .locate_any(*p)
            .ok_or(MeshError::PointLocation(p[0], p[1], usize::MAX))?;
        let tv = old_mesh.triangles[ti].v;
        p1_new[v] =
            l[0] * fluid.pressure[tv[0]] + l[1] * fluid.pressure[tv[1]] + l[2] * fluid.pressure[tv[2]];
    }
    let mut p0_new = vec![0.0f64; mesh.triangles.len()];
    for (o, t) in mesh.triangles.iter().enumerate() {
        let c = [
            (mesh.vertices[t.v[0]][0] + mesh.vertices[t.v[1]][0] + mesh.vertices[t.v[2]][0]) / 3.0,
            (mesh.vertices[t.v[0]][1] + mesh.vertices[t.v[1]][1] + mesh.vertices[t.v[2]][1]) / 3.0,
        ];
        let (ti, l) = locator
            .locate_in_region(t.region, c)
            .ok_or(MeshError::PointLocation(c[0], c[1], t.region))?;
        let tv = old_mesh.triangles[ti].v;
        let p_total = l[0] * fluid.pressure[tv[0]]
            + l[1] * fluid.pressure[tv[1]]
            + l[2] * fluid.pressure[tv[2]]
            + fluid.pressure[nv_old + ti];
        let p1_c = (p1_new[t.v[0]] + p1_new[t.v[1]] + p1_new[t.v[2]]) / 3.0;
        p0_new[o] = p_total - p1_c;
    }
    let mut integral = 0.0;
    let mut total_area = 0.0;
    for (o, t) in mesh.triangles.iter().enumerate() {
        let area = mesh.tri_area(o);
        integral += area * ((p1_new[t.v[0]] + p1_new[t.v[1]] + p1_new[t.v[2]]) / 3.0 + p0_new[o]);
        total_area += area;
    }
    let mean = integral / total_area;
    for v in p1_new.iter_mut() {
        *v -= mean;
    }
    let mut pressure = p1_new;
    pressure.extend_from_slice(&p0_new);

    // Species: per-region nodal interpolation; surface fields verbatim.
    let layout = crate::transport::SpeciesLayout::build(&mesh, network);
    let mut values = vec![0.0f64; layout.n_dofs];
    let mut mass_jumps = Vec::with_capacity(network.bulk.len());
    for (s, b) in network.bulk.iter().enumerate() {
        for (slot, &region) in b.regions.iter().enumerate() {
            for &v in layout.bulk_vertices(s, slot) {
                let p = mesh.vertices[v];
                let (ti, l) = locator
                    .locate_in_region(region, p)
                    .ok_or(MeshError::PointLocation(p[0], p[1], region))?;
                let tv = old_mesh.triangles[ti].v;
                let mut val = 0.0;
                for k in 0..3 {
                    val += l[k] * species.values[old_layout.bulk_dof(s, slot, tv[k]).unwrap()];
                }
                values[layout.bulk_dof(s, slot, v).unwrap()] = val;
            }
        }
    }
    for (s, sp) in network.surface.iter().enumerate() {
        let n = mesh.interfaces[sp.interface].verts.len();
        for k in 0..n {
            values[layout.surf_dof(s, k)] = species.values[old_layout.surf_dof(s, k)];
        }
    }
    let new_species = crate::transport::SpeciesState { values, time: species.time };
    for (s, _) in network.bulk.iter().enumerate() {
        let before = crate::diagnostics::bulk_species_integral(
            old_mesh, network, old_layout, species, s,
        );
        let after = crate::diagnostics::bulk_species_integral(
            &mesh, network, &layout, &new_species, s,
        );
        mass_jumps.push(after - before);
    }

    Ok(RegenerationOutput {
        mesh,
        fluid: crate::fluid::FluidState { velocity, pressure, max_velocity },
        species: new_species,
        layout,
        mass_jumps,
    })
}
