//! Conforming 2D polygonal meshes: generators, red refinement, facet
//! topology and geometric quality numbers.

mod io;

pub use io::{read_mesh, write_mesh};

use std::collections::{BTreeSet, HashMap};
use std::sync::OnceLock;

use thiserror::Error;

use crate::coeffjet::Expr;
use crate::quadrature::{is_convex_ccw, segment_points, Point};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("operation requires a triangular mesh")]
    NonTriangular,
    #[error("element {0} is not convex; inradius computation is unsupported")]
    NonConvexElement(usize),
    #[error("element {0} is degenerate or not counter-clockwise")]
    BadOrientation(usize),
    #[error("mesh is not conforming: {0}")]
    NonConforming(String),
    #[error("invalid mesh input: {0}")]
    Invalid(String),
    #[error("mesh file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

/// Which elements a facet separates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FacetSide {
    /// `normal` points from `left` into `right`.
    Interior { left: usize, right: usize },
    Boundary { element: usize, tag: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    /// Endpoints, ordered counter-clockwise with respect to the first element.
    pub vertices: [usize; 2],
    /// Unit normal, outward from the first element (and from the domain on
    /// the boundary).
    pub normal: Point,
    pub length: f64,
    pub midpoint: Point,
    pub side: FacetSide,
}

impl Facet {
    pub fn is_boundary(&self) -> bool {
        matches!(self.side, FacetSide::Boundary { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    /// `h_E`, the largest vertex distance.
    pub diameter: f64,
    pub area: f64,
    pub perimeter: f64,
    /// Vertex centroid, used as expansion point `x^E`.
    pub centroid: Point,
}

#[derive(Debug, Clone)]
pub struct Mesh2D {
    vertices: Vec<Point>,
    elements: Vec<Vec<usize>>,
    facets: Vec<Facet>,
    element_facets: Vec<Vec<usize>>,
    geometry: Vec<ElementGeometry>,
    locator: OnceLock<Locator>,
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
}

impl Mesh2D {
    /// Builds facet topology. Boundary edges missing from `tags` get tag 0.
    pub fn new(vertices: Vec<Point>, elements: Vec<Vec<usize>>, tags: &HashMap<(usize, usize), u32>) -> Result<Self, MeshError> {
        let mut geometry = Vec::with_capacity(elements.len());
        for (e, cyc) in elements.iter().enumerate() {
            if cyc.len() < 3 || cyc.iter().any(|&v| v >= vertices.len()) {
                return Err(MeshError::Invalid(format!("element {e} has invalid vertex list {cyc:?}")));
            }
            let pts: Vec<Point> = cyc.iter().map(|&v| vertices[v]).collect();
            let area = signed_area(&pts);
            if !(area > 0.0) {
                return Err(MeshError::BadOrientation(e));
            }
            let n = pts.len();
            let perimeter = (0..n).map(|i| dist(pts[i], pts[(i + 1) % n])).sum();
            let mut diameter = 0.0f64;
            for i in 0..n {
                for j in (i + 1)..n {
                    diameter = diameter.max(dist(pts[i], pts[j]));
                }
            }
            let centroid = [
                pts.iter().map(|p| p[0]).sum::<f64>() / n as f64,
                pts.iter().map(|p| p[1]).sum::<f64>() / n as f64,
            ];
            geometry.push(ElementGeometry { diameter, area, perimeter, centroid });
        }

        // directed edge (a, b) -> element owning it counter-clockwise
        let mut owner: HashMap<(usize, usize), usize> = HashMap::new();
        for (e, cyc) in elements.iter().enumerate() {
            for i in 0..cyc.len() {
                let edge = (cyc[i], cyc[(i + 1) % cyc.len()]);
                if owner.insert(edge, e).is_some() {
                    return Err(MeshError::NonConforming(format!("edge {edge:?} used twice with the same orientation")));
                }
            }
        }
        let mut facets = Vec::new();
        let mut element_facets = vec![Vec::new(); elements.len()];
        for (e, cyc) in elements.iter().enumerate() {
            for i in 0..cyc.len() {
                let (a, b) = (cyc[i], cyc[(i + 1) % cyc.len()]);
                let side = match owner.get(&(b, a)) {
                    Some(&other) if other < e => continue,
                    Some(&other) => FacetSide::Interior { left: e, right: other },
                    None => {
                        let tag = tags.get(&(a, b)).or_else(|| tags.get(&(b, a))).copied().unwrap_or(0);
                        FacetSide::Boundary { element: e, tag }
                    }
                };
                let (pa, pb) = (vertices[a], vertices[b]);
                let length = dist(pa, pb);
                let normal = [(pb[1] - pa[1]) / length, -(pb[0] - pa[0]) / length];
                let midpoint = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
                let id = facets.len();
                facets.push(Facet { vertices: [a, b], normal, length, midpoint, side });
                element_facets[e].push(id);
                if let FacetSide::Interior { right, .. } = side {
                    element_facets[right].push(id);
                }
            }
        }
        // hanging nodes show up as boundary edges lying inside the domain;
        // detect them by checking that no boundary edge contains another vertex
        let ends: BTreeSet<usize> = facets.iter().filter(|f| f.is_boundary()).flat_map(|f| f.vertices).collect();
        for f in facets.iter().filter(|f| f.is_boundary()) {
            let (a, b) = (vertices[f.vertices[0]], vertices[f.vertices[1]]);
            let t = [b[0] - a[0], b[1] - a[1]];
            let len2 = t[0] * t[0] + t[1] * t[1];
            for &v in ends.iter().filter(|v| !f.vertices.contains(v)) {
                let x = vertices[v];
                let r = [x[0] - a[0], x[1] - a[1]];
                let along = (r[0] * t[0] + r[1] * t[1]) / len2;
                let off = (r[0] * t[1] - r[1] * t[0]).abs() / len2;
                if along > 1e-12 && along < 1.0 - 1e-12 && off < 1e-12 {
                    return Err(MeshError::NonConforming(format!("vertex {v} lies on boundary edge {:?}", f.vertices)));
                }
            }
        }
        Ok(Mesh2D { vertices, elements, facets, element_facets, geometry, locator: OnceLock::new() })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn elements(&self) -> &[Vec<usize>] {
        &self.elements
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    /// Facet ids of element `e`.
    pub fn element_facets(&self, e: usize) -> &[usize] {
        &self.element_facets[e]
    }

    pub fn geometry(&self, e: usize) -> &ElementGeometry {
        &self.geometry[e]
    }

    pub fn element_points(&self, e: usize) -> Vec<Point> {
        self.elements[e].iter().map(|&v| self.vertices[v]).collect()
    }

    pub fn is_triangular(&self) -> bool {
        self.elements.iter().all(|c| c.len() == 3)
    }

    pub fn total_area(&self) -> f64 {
        self.geometry.iter().map(|g| g.area).sum()
    }

    pub fn max_diameter(&self) -> f64 {
        self.geometry.iter().fold(0.0, |m, g| m.max(g.diameter))
    }

    /// Outward unit normal of facet `f` seen from element `e`.
    pub fn normal_from(&self, f: usize, e: usize) -> Point {
        let facet = &self.facets[f];
        match facet.side {
            FacetSide::Interior { right, .. } if right == e => [-facet.normal[0], -facet.normal[1]],
            _ => facet.normal,
        }
    }

    /// Copy with every interior facet's orientation reversed.
    pub fn with_flipped_interior_normals(&self) -> Mesh2D {
        let mut m = self.clone();
        for f in &mut m.facets {
            if let FacetSide::Interior { left, right } = f.side {
                f.side = FacetSide::Interior { left: right, right: left };
                f.normal = [-f.normal[0], -f.normal[1]];
                f.vertices = [f.vertices[1], f.vertices[0]];
            }
        }
        m.locator = OnceLock::new();
        m
    }

    /// Element containing `x` (first match), via a bucket grid.
    pub fn locate(&self, x: Point) -> Option<usize> {
        self.locator.get_or_init(|| Locator::build(self)).find(self, x)
    }

    /// Uniform red refinement: each triangle splits into four, child edges
    /// inherit boundary tags.
    pub fn refine(&self) -> Result<Mesh2D, MeshError> {
        if !self.is_triangular() {
            return Err(MeshError::NonTriangular);
        }
        let mut vertices = self.vertices.clone();
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point>| -> usize {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                let (pa, pb) = (vertices[a], vertices[b]);
                vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
                vertices.len() - 1
            })
        };
        let mut elements = Vec::with_capacity(4 * self.elements.len());
        for cyc in &self.elements {
            let (a, b, c) = (cyc[0], cyc[1], cyc[2]);
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            elements.push(vec![a, ab, ca]);
            elements.push(vec![ab, b, bc]);
            elements.push(vec![ca, bc, c]);
            elements.push(vec![ab, bc, ca]);
        }
        let mut tags = HashMap::new();
        for f in &self.facets {
            if let FacetSide::Boundary { tag, .. } = f.side {
                let [a, b] = f.vertices;
                let m = midpoint(a, b, &mut vertices);
                tags.insert((a, m), tag);
                tags.insert((m, b), tag);
            }
        }
        Mesh2D::new(vertices, elements, &tags)
    }

    /// Copy refined `levels` times.
    pub fn refined(&self, levels: usize) -> Result<Mesh2D, MeshError> {
        let mut m = self.clone();
        for _ in 0..levels {
            m = m.refine()?;
        }
        Ok(m)
    }

    /// Checks conformity: interior facets have two distinct elements with
    /// opposite normals, and the boundary is a union of closed loops.
    pub fn audit(&self) -> Result<(), MeshError> {
        let mut degree: HashMap<usize, i64> = HashMap::new();
        for (id, f) in self.facets.iter().enumerate() {
            match f.side {
                FacetSide::Interior { left, right } => {
                    if left == right {
                        return Err(MeshError::NonConforming(format!("facet {id} joins element {left} to itself")));
                    }
                    let (nl, nr) = (self.normal_from(id, left), self.normal_from(id, right));
                    if (nl[0] + nr[0]).abs() > 1e-14 || (nl[1] + nr[1]).abs() > 1e-14 {
                        return Err(MeshError::NonConforming(format!("facet {id} normals are not opposite")));
                    }
                }
                FacetSide::Boundary { .. } => {
                    *degree.entry(f.vertices[0]).or_default() += 1;
                    *degree.entry(f.vertices[1]).or_default() -= 1;
                }
            }
        }
        if let Some((v, _)) = degree.iter().find(|(_, &d)| d != 0) {
            return Err(MeshError::NonConforming(format!("boundary is not closed at vertex {v}")));
        }
        Ok(())
    }
}

/// Bucket grid over element bounding boxes.
#[derive(Debug, Clone)]
struct Locator {
    origin: Point,
    cell: Point,
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl Locator {
    fn build(mesh: &Mesh2D) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for v in &mesh.vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        let side = (mesh.num_elements() as f64).sqrt().ceil().max(1.0) as usize;
        let dims = [side, side];
        let cell = [((hi[0] - lo[0]) / side as f64).max(1e-300), ((hi[1] - lo[1]) / side as f64).max(1e-300)];
        let mut buckets = vec![Vec::new(); side * side];
        for e in 0..mesh.num_elements() {
            let pts = mesh.element_points(e);
            let (mut a, mut b) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for p in &pts {
                for k in 0..2 {
                    a[k] = a[k].min(p[k]);
                    b[k] = b[k].max(p[k]);
                }
            }
            let i0 = ((a[0] - lo[0]) / cell[0]).floor().max(0.0) as usize;
            let j0 = ((a[1] - lo[1]) / cell[1]).floor().max(0.0) as usize;
            let i1 = (((b[0] - lo[0]) / cell[0]).floor() as usize).min(side - 1);
            let j1 = (((b[1] - lo[1]) / cell[1]).floor() as usize).min(side - 1);
            for i in i0..=i1.max(i0).min(side - 1) {
                for j in j0.min(side - 1)..=j1 {
                    buckets[j * side + i].push(e);
                }
            }
        }
        Locator { origin: lo, cell, dims, buckets }
    }

    fn find(&self, mesh: &Mesh2D, x: Point) -> Option<usize> {
        let fi = (x[0] - self.origin[0]) / self.cell[0];
        let fj = (x[1] - self.origin[1]) / self.cell[1];
        if !(fi >= -1e-9 && fj >= -1e-9) {
            return None;
        }
        let i = (fi.max(0.0) as usize).min(self.dims[0] - 1);
        let j = (fj.max(0.0) as usize).min(self.dims[1] - 1);
        self.buckets[j * self.dims[0] + i].iter().copied().find(|&e| contains(&mesh.element_points(e), x))
    }
}

/// Point-in-convex-polygon test with a small tolerance.
fn contains(poly: &[Point], x: Point) -> bool {
    let n = poly.len();
    let scale = poly.iter().fold(0.0f64, |m, p| m.max(dist(*p, poly[0])));
    (0..n).all(|i| {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        (b[0] - a[0]) * (x[1] - a[1]) - (b[1] - a[1]) * (x[0] - a[0]) >= -1e-12 * scale * scale
    })
}

/// `n x n` squares on the unit square, each split along the diagonal from
/// its lower-left to its upper-right corner. Boundary tags: 1 bottom,
/// 2 right, 3 top, 4 left.
pub fn unit_square_tri(n: usize) -> Mesh2D {
    grid_tri(n, |_, _| true)
}

/// `(0,1)^2` minus `[0, 1/2]^2` on an `n x n` grid (`n` even). Tags as for
/// the unit square, plus 5 on the two re-entrant edges.
pub fn lshape_tri(n: usize) -> Result<Mesh2D, MeshError> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(MeshError::Invalid(format!("L-shape grid size must be even and positive, got {n}")));
    }
    Ok(grid_tri(n, |i, j| i >= n / 2 || j >= n / 2))
}

fn grid_tri(n: usize, keep: impl Fn(usize, usize) -> bool) -> Mesh2D {
    assert!(n >= 1, "grid size must be positive");
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut used = BTreeSet::new();
    let mut cells = Vec::new();
    for j in 0..n {
        for i in 0..n {
            if keep(i, j) {
                cells.push((i, j));
                used.extend([id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
    }
    let renumber: HashMap<usize, usize> = used.iter().enumerate().map(|(k, &v)| (v, k)).collect();
    let vertices: Vec<Point> = used.iter().map(|&v| [(v % (n + 1)) as f64 / n as f64, (v / (n + 1)) as f64 / n as f64]).collect();
    let r = |i: usize, j: usize| renumber[&id(i, j)];
    let mut elements = Vec::with_capacity(2 * cells.len());
    for &(i, j) in &cells {
        elements.push(vec![r(i, j), r(i + 1, j), r(i + 1, j + 1)]);
        elements.push(vec![r(i, j), r(i + 1, j + 1), r(i, j + 1)]);
    }
    // tag the boundary by position of the edge midpoint
    let mut tags = HashMap::new();
    let mut edge_use: HashMap<(usize, usize), usize> = HashMap::new();
    for cyc in &elements {
        for k in 0..3 {
            let (a, b) = (cyc[k], cyc[(k + 1) % 3]);
            *edge_use.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    for (&(a, b), &count) in &edge_use {
        if count != 1 {
            continue;
        }
        let m = [0.5 * (vertices[a][0] + vertices[b][0]), 0.5 * (vertices[a][1] + vertices[b][1])];
        let tag = if m[1] == 0.0 {
            1
        } else if m[0] == 1.0 {
            2
        } else if m[1] == 1.0 {
            3
        } else if m[0] == 0.0 {
            4
        } else {
            5
        };
        tags.insert((a, b), tag);
    }
    Mesh2D::new(vertices, elements, &tags).expect("generated grid is valid")
}

/// Geometric quality numbers of a mesh of convex elements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshQuality {
    /// `min_E ρ_E / h_E` with `ρ_E` the inradius.
    pub r_star: f64,
    /// `max_E max_{F ⊂ ∂E} h_E / h_F`.
    pub c_g: f64,
    /// Largest number of facets of an element.
    pub n_partial: usize,
    /// `h_E |∂E| <= (d / (ρ_E / h_E)) |E|` for every element.
    pub chunkiness_ok: bool,
    /// `max_E h_E |∂E| (ρ_E / h_E) / (d |E|)`; equals one for triangles.
    pub chunkiness_ratio: f64,
}

/// Radius of the largest inscribed circle of a convex counter-clockwise
/// polygon.
pub fn inradius(poly: &[Point]) -> Option<f64> {
    if !is_convex_ccw(poly) {
        return None;
    }
    let n = poly.len();
    if n == 3 {
        let perimeter: f64 = (0..3).map(|i| dist(poly[i], poly[(i + 1) % 3])).sum();
        return Some(2.0 * signed_area(poly) / perimeter);
    }
    // Chebyshev centre: maximise r subject to n_i·c + r <= b_i. The optimum
    // is attained where three constraints are active.
    let lines: Vec<(Point, f64)> = (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            let l = dist(a, b);
            let nrm = [(b[1] - a[1]) / l, -(b[0] - a[0]) / l];
            (nrm, nrm[0] * a[0] + nrm[1] * a[1])
        })
        .collect();
    let mut best = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                let rows = [lines[i], lines[j], lines[k]];
                let m = nalgebra::Matrix3::from_fn(|r, c| if c < 2 { rows[r].0[c] } else { 1.0 });
                let rhs = nalgebra::Vector3::new(rows[0].1, rows[1].1, rows[2].1);
                let Some(sol) = m.lu().solve(&rhs) else { continue };
                let (c, r) = ([sol[0], sol[1]], sol[2]);
                let feasible = lines.iter().all(|(nrm, b)| nrm[0] * c[0] + nrm[1] * c[1] + r <= b + 1e-12);
                if feasible && r > best {
                    best = r;
                }
            }
        }
    }
    Some(best)
}

pub fn quality(mesh: &Mesh2D) -> Result<MeshQuality, MeshError> {
    let d = 2.0;
    let mut q = MeshQuality { r_star: f64::INFINITY, c_g: 0.0, n_partial: 0, chunkiness_ok: true, chunkiness_ratio: 0.0 };
    for e in 0..mesh.num_elements() {
        let g = mesh.geometry(e);
        let rho = inradius(&mesh.element_points(e)).ok_or(MeshError::NonConvexElement(e))?;
        let rs = rho / g.diameter;
        q.r_star = q.r_star.min(rs);
        for &f in mesh.element_facets(e) {
            q.c_g = q.c_g.max(g.diameter / mesh.facets()[f].length);
        }
        q.n_partial = q.n_partial.max(mesh.element_facets(e).len());
        let lhs = g.diameter * g.perimeter;
        let rhs = d / rs * g.area;
        q.chunkiness_ok &= lhs <= rhs * (1.0 + 1e-12);
        q.chunkiness_ratio = q.chunkiness_ratio.max(lhs / rhs);
    }
    Ok(q)
}

/// Dirichlet or Neumann condition on a boundary facet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcKind {
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryFacet {
    pub kind: BcKind,
    /// `β·n < 0` at the sample point(s).
    pub inflow: bool,
}

/// Classification of every boundary facet, indexed by facet id (`None` on
/// interior facets).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTags {
    pub facets: Vec<Option<BoundaryFacet>>,
    pub warnings: Vec<String>,
}

impl BoundaryTags {
    pub fn get(&self, f: usize) -> Option<BoundaryFacet> {
        self.facets[f]
    }

    pub fn count(&self, kind: BcKind) -> usize {
        self.facets.iter().flatten().filter(|b| b.kind == kind).count()
    }
}

/// Labels boundary facets Dirichlet unless their tag is in `neumann_tags`,
/// and inflow iff `β·n < 0` at the facet midpoint. With `samples > 0` the
/// sign is also checked at that many Gauss points; sign changes and
/// Neumann inflow facets are reported as warnings.
pub fn classify_boundary(mesh: &Mesh2D, beta: &[Expr], neumann_tags: &[u32], samples: usize) -> BoundaryTags {
    let mut facets = vec![None; mesh.facets().len()];
    let mut warnings = Vec::new();
    let bn = |x: Point, n: Point| beta[0].eval(&x) * n[0] + beta[1].eval(&x) * n[1];
    for (id, f) in mesh.facets().iter().enumerate() {
        let FacetSide::Boundary { tag, .. } = f.side else { continue };
        let kind = if neumann_tags.contains(&tag) { BcKind::Neumann } else { BcKind::Dirichlet };
        let inflow = bn(f.midpoint, f.normal) < 0.0;
        let (a, b) = (mesh.vertices()[f.vertices[0]], mesh.vertices()[f.vertices[1]]);
        if samples > 0 {
            let pts = segment_points(a, b, 2 * samples - 1).expect("sample count within rule range");
            let signs: Vec<bool> = pts.iter().map(|(x, _)| bn(*x, f.normal) < 0.0).collect();
            if signs.iter().any(|&s| s != inflow) {
                warnings.push(format!("facet {id}: β·n changes sign along the facet"));
            }
            if kind == BcKind::Neumann && signs.iter().any(|&s| s) {
                warnings.push(format!("facet {id}: Neumann facet lies on the inflow boundary"));
            }
        } else if kind == BcKind::Neumann && inflow {
            warnings.push(format!("facet {id}: Neumann facet lies on the inflow boundary"));
        }
        facets[id] = Some(BoundaryFacet { kind, inflow });
    }
    if !facets.iter().flatten().any(|b| b.kind == BcKind::Dirichlet) {
        warnings.push("no Dirichlet facet: the Dirichlet boundary is empty".into());
    }
    BoundaryTags { facets, warnings }
}

/// `(Σ_E ∮_{∂E} w·n_E, ∮_{∂Ω} w·n)` for a constant vector field `w`.
pub fn facet_flux_audit(mesh: &Mesh2D, w: Point) -> (f64, f64) {
    let mut elements = 0.0;
    let mut boundary = 0.0;
    for e in 0..mesh.num_elements() {
        for &f in mesh.element_facets(e) {
            let n = mesh.normal_from(f, e);
            elements += (w[0] * n[0] + w[1] * n[1]) * mesh.facets()[f].length;
        }
    }
    for f in mesh.facets().iter().filter(|f| f.is_boundary()) {
        boundary += (w[0] * f.normal[0] + w[1] * f.normal[1]) * f.length;
    }
    (elements, boundary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffjet::parse;

    fn beta(a: &str, b: &str) -> Vec<Expr> {
        vec![parse(a, 2).unwrap(), parse(b, 2).unwrap()]
    }

    #[test]
    fn hanging_node_is_rejected() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [2.0, 2.0], [1.0, 2.0], [0.0, 2.0]];
        let e = vec![vec![0, 1, 6, 7], vec![1, 2, 3, 4], vec![4, 3, 5, 6]];
        let err = Mesh2D::new(v, e, &HashMap::new()).unwrap_err();
        assert!(matches!(err, MeshError::NonConforming(_)), "{err:?}");
    }

    #[test]
    fn unit_square_counts() {
        let m = unit_square_tri(1);
        assert_eq!(m.num_elements(), 2);
        assert_eq!(m.facets().len(), 5);
        assert_eq!(m.facets().iter().filter(|f| f.is_boundary()).count(), 4);
        assert_eq!(unit_square_tri(2).num_elements(), 8);
        for n in [1, 2, 3, 8, 17, 64] {
            let m = unit_square_tri(n);
            assert!((m.total_area() - 1.0).abs() < 1e-14);
            m.audit().unwrap();
        }
    }

    #[test]
    fn lshape_counts() {
        let m = lshape_tri(2).unwrap();
        assert_eq!(m.num_elements(), 6);
        for n in [2, 4, 10, 32] {
            let m = lshape_tri(n).unwrap();
            assert!((m.total_area() - 0.75).abs() < 1e-14);
            assert!((0..m.num_elements()).all(|e| signed_area(&m.element_points(e)) > 0.0));
            m.audit().unwrap();
        }
        assert!(lshape_tri(3).is_err());
        let m = lshape_tri(4).unwrap();
        let tags: BTreeSet<u32> = m
            .facets()
            .iter()
            .filter_map(|f| match f.side {
                FacetSide::Boundary { tag, .. } => Some(tag),
                _ => None,
            })
            .collect();
        assert_eq!(tags, BTreeSet::from([1, 2, 3, 4, 5]));
    }

    #[test]
    fn refinement() {
        let m = unit_square_tri(1);
        let r = m.refine().unwrap();
        assert_eq!(r.num_elements(), 8);
        assert!((r.max_diameter() - m.max_diameter() / 2.0).abs() < 1e-14);
        r.audit().unwrap();
        let rr = unit_square_tri(3).refined(2).unwrap();
        assert_eq!(rr.num_elements(), 18 * 16);
        rr.audit().unwrap();
        assert!((rr.total_area() - 1.0).abs() < 1e-13);
        for f in rr.facets() {
            if let FacetSide::Boundary { tag, .. } = f.side {
                let expect = if f.midpoint[1] == 0.0 {
                    1
                } else if f.midpoint[0] == 1.0 {
                    2
                } else if f.midpoint[1] == 1.0 {
                    3
                } else {
                    4
                };
                assert_eq!(tag, expect);
            }
        }
        let quad = Mesh2D::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], vec![vec![0, 1, 2, 3]], &HashMap::new()).unwrap();
        assert_eq!(quad.refine().unwrap_err(), MeshError::NonTriangular);
    }

    #[test]
    fn quality_examples() {
        let s3 = 3f64.sqrt();
        let eq = Mesh2D::new(vec![[0.0, 0.0], [1.0, 0.0], [0.5, s3 / 2.0]], vec![vec![0, 1, 2]], &HashMap::new()).unwrap();
        let q = quality(&eq).unwrap();
        assert!((q.r_star - 1.0 / (2.0 * s3)).abs() < 1e-15);
        let q = quality(&unit_square_tri(4)).unwrap();
        assert!((q.r_star - (2f64.sqrt() - 1.0) / 2.0).abs() < 1e-15);
        assert_eq!(q.n_partial, 3);
        assert!(q.chunkiness_ok);
        assert!((q.chunkiness_ratio - 1.0).abs() < 1e-14);
        assert!((q.c_g - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn inradius_of_square_and_rectangle() {
        let sq = [[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]];
        assert!((inradius(&sq).unwrap() - 1.0).abs() < 1e-14);
        let rect = [[0.0, 0.0], [4.0, 0.0], [4.0, 1.0], [0.0, 1.0]];
        assert!((inradius(&rect).unwrap() - 0.5).abs() < 1e-14);
        assert!(inradius(&[[0.0, 0.0], [1.0, 0.0], [0.2, 0.2], [0.0, 1.0]]).is_none());
    }

    #[test]
    fn quality_is_refinement_invariant() {
        let q0 = quality(&unit_square_tri(2)).unwrap();
        let q2 = quality(&unit_square_tri(2).refined(2).unwrap()).unwrap();
        assert!((q0.r_star - q2.r_star).abs() < 1e-12);
        assert!((q0.c_g - q2.c_g).abs() < 1e-12);
        let l0 = quality(&lshape_tri(4).unwrap()).unwrap();
        let l1 = quality(&lshape_tri(4).unwrap().refine().unwrap()).unwrap();
        assert!((l0.r_star - l1.r_star).abs() < 1e-12);
    }

    fn inflow_by_tag(m: &Mesh2D, t: &BoundaryTags) -> HashMap<u32, BTreeSet<bool>> {
        let mut out: HashMap<u32, BTreeSet<bool>> = HashMap::new();
        for (id, f) in m.facets().iter().enumerate() {
            if let FacetSide::Boundary { tag, .. } = f.side {
                out.entry(tag).or_default().insert(t.get(id).unwrap().inflow);
            }
        }
        out
    }

    #[test]
    fn classify_examples() {
        let m = unit_square_tri(4);
        let t = classify_boundary(&m, &beta("1", "0"), &[], 0);
        let by = inflow_by_tag(&m, &t);
        assert_eq!(by[&4], BTreeSet::from([true]));
        for tag in [1, 2, 3] {
            assert_eq!(by[&tag], BTreeSet::from([false]));
        }
        let t = classify_boundary(&m, &beta("-x2", "x1"), &[], 0);
        assert_eq!(inflow_by_tag(&m, &t)[&1], BTreeSet::from([true]));
        let t = classify_boundary(&m, &beta("0", "0"), &[], 3);
        assert!(t.facets.iter().flatten().all(|b| !b.inflow));
        assert!(t.warnings.is_empty());
    }

    #[test]
    fn classify_warnings() {
        let m = unit_square_tri(1);
        // β·n = x1 - 0.5 changes sign along the bottom edge (n = (0,-1))
        let t = classify_boundary(&m, &beta("0", "0.5 - x1"), &[], 2);
        assert!(t.warnings.iter().any(|w| w.contains("changes sign")));
        let t = classify_boundary(&m, &beta("1", "0"), &[4], 0);
        assert!(t.warnings.iter().any(|w| w.contains("inflow")));
        assert_eq!(t.count(BcKind::Neumann), 1);
        let t = classify_boundary(&m, &beta("1", "0"), &[1, 2, 3, 4], 0);
        assert!(t.warnings.iter().any(|w| w.contains("Dirichlet boundary is empty")));
    }

    #[test]
    fn facet_audit_cancels_interior_contributions() {
        for m in [unit_square_tri(5), lshape_tri(6).unwrap().refine().unwrap()] {
            for w in [[1.0, 0.0], [0.3, -2.0]] {
                let (e, b) = facet_flux_audit(&m, w);
                assert!((e - b).abs() < 1e-13 && b.abs() < 1e-13);
            }
        }
    }

    #[test]
    fn locate_points() {
        let m = unit_square_tri(7).refine().unwrap();
        for x in [[0.01, 0.02], [0.5, 0.5], [0.999, 0.3], [1.0, 1.0], [0.0, 0.0]] {
            let e = m.locate(x).unwrap();
            assert!(contains(&m.element_points(e), x));
        }
        assert!(m.locate([1.5, 0.5]).is_none());
        let l = lshape_tri(4).unwrap();
        assert!(l.locate([0.25, 0.25]).is_none());
        assert!(l.locate([0.75, 0.25]).is_some());
    }

    #[test]
    fn flipped_normals() {
        let m = unit_square_tri(2);
        let f = m.with_flipped_interior_normals();
        f.audit().unwrap();
        for (a, b) in m.facets().iter().zip(f.facets()) {
            if a.is_boundary() {
                assert_eq!(a, b);
            } else {
                assert_eq!(a.normal, [-b.normal[0], -b.normal[1]]);
            }
        }
    }

    #[test]
    fn non_conforming_input_is_rejected() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let err = Mesh2D::new(v.clone(), vec![vec![0, 1, 2], vec![0, 1, 2]], &HashMap::new()).unwrap_err();
        assert!(matches!(err, MeshError::NonConforming(_)));
        let err = Mesh2D::new(v, vec![vec![0, 2, 1]], &HashMap::new()).unwrap_err();
        assert_eq!(err, MeshError::BadOrientation(0));
    }
}
