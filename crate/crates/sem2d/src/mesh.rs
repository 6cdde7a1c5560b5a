//! Structured quadrilateral meshes with tensor GLL geometry nodes.
//!
//! Every mesh here is an n x n logical grid of Q^k elements whose geometry
//! nodes live on the global (kn+1)^2 lattice, so conformity (shared edge nodes
//! mapping to identical global indices and coordinates) is structural. Four
//! families cover the study matrix:
//!
//! - Cartesian rectangles,
//! - randomly perturbed rectangles (interior vertices displaced, elements
//!   rebuilt as bilinear quads, so the metric is non-smooth across interfaces),
//! - smoothly mapped squares (every geometry node pushed through a fixed
//!   diffeomorphism, so elements are curvilinear with a globally smooth metric),
//! - quarter annuli (straight-sided, fully curvilinear, or curved only at the
//!   physical boundary with transfinite interiors).
//!
//! Jacobians are always obtained by numerically differentiating the geometry
//! nodes with the reference differentiation matrix, never from analytic maps;
//! the discrete metric is part of the method being reproduced.

use crate::gll::{diff_matrix, gll_rule, GllError, QuadRule, RefElement};
use crate::rng::SplitMix64;

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn unit() -> Self {
        Rect { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 }
    }

    pub fn centered_pi() -> Self {
        use std::f64::consts::PI;
        Rect { x0: -PI, x1: PI, y0: -PI, y1: PI }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// Annulus geometry variants (quarter annulus, polar-logical grid).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnnulusVariant {
    /// All element edges straight: bilinear elements on the polar vertex grid.
    Straight,
    /// Every geometry node at the exact polar image of its logical preimage.
    Curvilinear,
    /// Boundary arcs exactly curved, all internal edges straight, element
    /// interiors filled by transfinite (Coons) interpolation of the edges.
    CurvedBoundaryStraightInterior,
}

/// How a mesh was built; determines the norm convention and what further
/// transformations are legal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeshFamily {
    Cartesian,
    RandomPerturbed { seed: u64, fraction: f64 },
    SmoothMapped,
    Annulus { variant: AnnulusVariant, r_inner: f64, r_outer: f64 },
}

/// Per-global-node boundary tag. Corners resolve bottom/top first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    Interior,
    Bottom,
    Right,
    Top,
    Left,
}

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("degenerate domain rectangle")]
    InvalidDomain,
    #[error("mesh polynomial degree must be >= 2, got {0}")]
    InvalidDegree(usize),
    #[error("cells per side must be >= 1, got {0}")]
    InvalidCells(usize),
    #[error("annulus radii must satisfy 0 < r_inner < r_outer, got ({0}, {1})")]
    InvalidRadii(f64, f64),
    #[error("element {elem} has non-positive jacobian determinant {det:.3e} at quadrature point {qp}")]
    DegenerateElement { elem: usize, qp: usize, det: f64 },
    #[error("{op} requires a Cartesian mesh")]
    RequiresCartesian { op: &'static str },
    #[error("smooth map requires the [-pi,pi]^2 Cartesian domain")]
    WrongDomain,
    #[error("shared node {node}: elements disagree by {dist:.3e} (conformity tolerance 1e-12)")]
    Conformity { node: usize, dist: f64 },
    #[error("random perturbation still produced degenerate elements after {0} resampling rounds")]
    PerturbationFailed(usize),
    #[error(transparent)]
    Gll(#[from] GllError),
}

/// One element's isoparametric geometry: the (k+1)^2 physical coordinates of
/// the tensor GLL reference nodes, indexed `j * (k+1) + i` with i the xi index.
#[derive(Debug, Clone)]
pub struct Element {
    pub id: usize,
    pub geom_nodes: Vec<[f64; 2]>,
}

/// Metric quantities at one quadrature point.
#[derive(Debug, Clone, Copy)]
pub struct QpMetric {
    /// Jacobian d(x,y)/d(xi,eta), row-major [[x_xi, x_eta], [y_xi, y_eta]].
    pub j: [[f64; 2]; 2],
    /// Inverse Jacobian.
    pub inv: [[f64; 2]; 2],
    /// det J.
    pub det: f64,
    /// Quadrature weight times det J (w_i w_j det J).
    pub wdet: f64,
}

/// Metric terms of one element at all (k+1)^2 quadrature points.
#[derive(Debug, Clone)]
pub struct MetricData {
    pub pts: Vec<QpMetric>,
}

/// A conforming n x n mesh of Q^k quadrilaterals.
#[derive(Debug, Clone)]
pub struct Mesh {
    /// Polynomial degree of both geometry and fields.
    pub k: usize,
    /// Elements per side.
    pub n: usize,
    /// Global node coordinates, lexicographic: index gy * (kn+1) + gx.
    pub coords: Vec<[f64; 2]>,
    /// Construction family (with its parameters).
    pub family: MeshFamily,
    /// Analytic area of the underlying domain.
    pub domain_area: f64,
    /// Minimum det J over all elements and quadrature points.
    pub min_detj: f64,
    /// Smallest distance between adjacent geometry nodes within any element.
    pub min_node_gap: f64,
    /// For rectangle-based meshes, the domain rectangle.
    pub rect: Option<Rect>,
}

impl Mesh {
    /// Nodes per side, kn+1.
    #[inline]
    pub fn nx(&self) -> usize {
        self.k * self.n + 1
    }

    /// Total global node count, (kn+1)^2.
    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.nx() * self.nx()
    }

    /// Total element count, n^2.
    #[inline]
    pub fn n_elems(&self) -> usize {
        self.n * self.n
    }

    /// Global node index of element-local tensor node (i, j) of element e.
    /// Elements are numbered ey * n + ex; the map is onto the global lattice.
    #[inline]
    pub fn global_of(&self, e: usize, i: usize, j: usize) -> usize {
        let (ex, ey) = (e % self.n, e / self.n);
        (ey * self.k + j) * self.nx() + ex * self.k + i
    }

    /// Whether global node g lies on the domain boundary.
    #[inline]
    pub fn is_boundary(&self, g: usize) -> bool {
        let nx = self.nx();
        let (gx, gy) = (g % nx, g / nx);
        gx == 0 || gy == 0 || gx == nx - 1 || gy == nx - 1
    }

    /// Boundary segment tag of global node g.
    pub fn boundary_tag(&self, g: usize) -> BoundaryTag {
        let nx = self.nx();
        let (gx, gy) = (g % nx, g / nx);
        if gy == 0 {
            BoundaryTag::Bottom
        } else if gy == nx - 1 {
            BoundaryTag::Top
        } else if gx == 0 {
            BoundaryTag::Left
        } else if gx == nx - 1 {
            BoundaryTag::Right
        } else {
            BoundaryTag::Interior
        }
    }

    /// Copy of element e's geometry.
    pub fn element(&self, e: usize) -> Element {
        let np = self.k + 1;
        let mut geom_nodes = Vec::with_capacity(np * np);
        for j in 0..np {
            for i in 0..np {
                geom_nodes.push(self.coords[self.global_of(e, i, j)]);
            }
        }
        Element { id: e, geom_nodes }
    }

    /// Norm-scaling h: half the cell edge for Cartesian meshes, and
    /// sqrt(domain area)/(2n) otherwise (the two agree for square domains).
    pub fn h_norm(&self) -> f64 {
        match (self.family, self.rect) {
            (MeshFamily::Cartesian, Some(r)) => (r.x1 - r.x0) / (2.0 * self.n as f64),
            _ => self.domain_area.sqrt() / (2.0 * self.n as f64),
        }
    }

    /// One-line CSV summary (header + row).
    pub fn summary_csv(&self) -> String {
        format!(
            "elements,nodes,min_detj\n{},{},{:.12e}\n",
            self.n_elems(),
            self.n_nodes(),
            self.min_detj
        )
    }
}

/// Metric terms of one element, by numerical differentiation of its geometry
/// nodes with the reference differentiation matrix (the analytic map, even
/// when known, is deliberately not consulted).
pub fn metric_terms(element: &Element, re: &RefElement) -> Result<MetricData, MeshError> {
    let np = re.np();
    let x = &element.geom_nodes;
    let mut pts = Vec::with_capacity(np * np);
    for jq in 0..np {
        for iq in 0..np {
            let mut j = [[0.0f64; 2]; 2];
            for m in 0..np {
                let dxi = re.d(iq, m);
                let p = x[jq * np + m];
                j[0][0] += dxi * p[0];
                j[1][0] += dxi * p[1];
                let deta = re.d(jq, m);
                let q = x[m * np + iq];
                j[0][1] += deta * q[0];
                j[1][1] += deta * q[1];
            }
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det <= 0.0 {
                return Err(MeshError::DegenerateElement {
                    elem: element.id,
                    qp: jq * np + iq,
                    det,
                });
            }
            let inv = [
                [j[1][1] / det, -j[0][1] / det],
                [-j[1][0] / det, j[0][0] / det],
            ];
            let wdet = re.rule.weights[iq] * re.rule.weights[jq] * det;
            pts.push(QpMetric { j, inv, det, wdet });
        }
    }
    Ok(MetricData { pts })
}

/// 1-D lattice of kn+1 global node coordinates over [a, b]:
/// n cells, each carrying the GLL images of its interval.
fn lattice_1d(a: f64, b: f64, n: usize, rule: &QuadRule) -> Vec<f64> {
    let k = rule.k;
    let len = (b - a) / n as f64;
    (0..=k * n)
        .map(|g| {
            let c = (g / k).min(n - 1);
            let i = g - c * k;
            a + c as f64 * len + 0.5 * (rule.nodes[i] + 1.0) * len
        })
        .collect()
}

/// Validate all element Jacobians, recording the mesh-wide minima.
fn finalize(mesh: &mut Mesh, re: &RefElement) -> Result<(), MeshError> {
    let np = re.np();
    let mut min_detj = f64::INFINITY;
    let mut min_gap = f64::INFINITY;
    for e in 0..mesh.n_elems() {
        let el = mesh.element(e);
        let md = metric_terms(&el, re)?;
        for p in &md.pts {
            min_detj = min_detj.min(p.det);
        }
        for j in 0..np {
            for i in 0..np {
                let here = el.geom_nodes[j * np + i];
                if i + 1 < np {
                    let right = el.geom_nodes[j * np + i + 1];
                    min_gap = min_gap.min((right[0] - here[0]).hypot(right[1] - here[1]));
                }
                if j + 1 < np {
                    let up = el.geom_nodes[(j + 1) * np + i];
                    min_gap = min_gap.min((up[0] - here[0]).hypot(up[1] - here[1]));
                }
            }
        }
    }
    mesh.min_detj = min_detj;
    mesh.min_node_gap = min_gap;
    Ok(())
}

fn validate_nk(n: usize, k: usize) -> Result<(QuadRule, RefElement), MeshError> {
    if k < 2 {
        return Err(MeshError::InvalidDegree(k));
    }
    if n == 0 {
        return Err(MeshError::InvalidCells(n));
    }
    let rule = gll_rule(k)?;
    let re = diff_matrix(&rule);
    Ok((rule, re))
}

/// Uniform Cartesian n x n mesh of `domain` with Q^k geometry nodes.
pub fn build_cartesian(domain: Rect, n: usize, k: usize) -> Result<Mesh, MeshError> {
    if !(domain.x1 > domain.x0 && domain.y1 > domain.y0) {
        return Err(MeshError::InvalidDomain);
    }
    let (rule, re) = validate_nk(n, k)?;
    let xs = lattice_1d(domain.x0, domain.x1, n, &rule);
    let ys = lattice_1d(domain.y0, domain.y1, n, &rule);
    let nx = k * n + 1;
    let mut coords = Vec::with_capacity(nx * nx);
    for gy in 0..nx {
        for gx in 0..nx {
            coords.push([xs[gx], ys[gy]]);
        }
    }
    let mut mesh = Mesh {
        k,
        n,
        coords,
        family: MeshFamily::Cartesian,
        domain_area: domain.area(),
        min_detj: 0.0,
        min_node_gap: 0.0,
        rect: Some(domain),
    };
    finalize(&mut mesh, &re)?;
    Ok(mesh)
}

/// Write-or-check assembly of per-element node coordinates into the global
/// array: the first writer owns the slot, later writers must agree to 1e-12.
struct CoordAssembler {
    coords: Vec<[f64; 2]>,
    written: Vec<bool>,
}

impl CoordAssembler {
    fn new(n_nodes: usize) -> Self {
        Self {
            coords: vec![[0.0, 0.0]; n_nodes],
            written: vec![false; n_nodes],
        }
    }

    fn set(&mut self, g: usize, p: [f64; 2]) -> Result<(), MeshError> {
        if self.written[g] {
            let q = self.coords[g];
            let dist = (p[0] - q[0]).hypot(p[1] - q[1]);
            if dist > 1e-12 {
                return Err(MeshError::Conformity { node: g, dist });
            }
        } else {
            self.coords[g] = p;
            self.written[g] = true;
        }
        Ok(())
    }

    fn into_coords(self) -> Vec<[f64; 2]> {
        debug_assert!(self.written.iter().all(|&w| w));
        self.coords
    }
}

/// Bilinear blend of four corners at parameters (u, v) in [0,1]^2.
#[inline]
fn bilinear(c00: [f64; 2], c10: [f64; 2], c01: [f64; 2], c11: [f64; 2], u: f64, v: f64) -> [f64; 2] {
    let mut p = [0.0; 2];
    for d in 0..2 {
        p[d] = (1.0 - u) * (1.0 - v) * c00[d]
            + u * (1.0 - v) * c10[d]
            + (1.0 - u) * v * c01[d]
            + u * v * c11[d];
    }
    p
}

/// Displace the interior element vertices of a Cartesian mesh by i.i.d.
/// uniform offsets in [-fraction*h, +fraction*h]^2 (h = half the cell edge)
/// and rebuild every element as the bilinear image of its perturbed corners.
///
/// Each vertex draws from its own SplitMix64 stream keyed by (seed, ivx, ivy),
/// so the realization is independent of traversal order. If any element comes
/// out with a non-positive Jacobian, the offending elements' vertices advance
/// to their next draw and the mesh is rebuilt (bounded rounds).
pub fn perturb_random(mesh: &Mesh, magnitude_fraction: f64, seed: u64) -> Result<Mesh, MeshError> {
    let rect = match (mesh.family, mesh.rect) {
        (MeshFamily::Cartesian, Some(r)) => r,
        _ => return Err(MeshError::RequiresCartesian { op: "perturb_random" }),
    };
    let (rule, re) = validate_nk(mesh.n, mesh.k)?;
    let (n, k) = (mesh.n, mesh.k);
    let nx = k * n + 1;
    let h = (rect.x1 - rect.x0) / (2.0 * n as f64);
    let hy = (rect.y1 - rect.y0) / (2.0 * n as f64);
    let amp = magnitude_fraction;

    // per-vertex streams; draws consumed in (dx, dy) pairs per round
    let mut streams: Vec<SplitMix64> = (0..(n + 1) * (n + 1))
        .map(|v| SplitMix64::keyed(seed, (v % (n + 1)) as u64, (v / (n + 1)) as u64))
        .collect();
    let base_vertex = |ivx: usize, ivy: usize| -> [f64; 2] {
        [mesh.coords[(ivy * k) * nx + ivx * k][0], mesh.coords[(ivy * k) * nx + ivx * k][1]]
    };
    let mut offsets = vec![[0.0f64; 2]; (n + 1) * (n + 1)];
    let draw = |s: &mut SplitMix64| -> [f64; 2] {
        let dx = s.next_symmetric();
        let dy = s.next_symmetric();
        [dx, dy]
    };
    for ivy in 0..=n {
        for ivx in 0..=n {
            let v = ivy * (n + 1) + ivx;
            let interior = ivx > 0 && ivy > 0 && ivx < n && ivy < n;
            let d = draw(&mut streams[v]);
            if interior {
                offsets[v] = [amp * h * d[0], amp * hy * d[1]];
            }
        }
    }

    const MAX_ROUNDS: usize = 32;
    for round in 0..=MAX_ROUNDS {
        let vertex = |ivx: usize, ivy: usize| -> [f64; 2] {
            let b = base_vertex(ivx, ivy);
            let o = offsets[ivy * (n + 1) + ivx];
            [b[0] + o[0], b[1] + o[1]]
        };
        let mut asm = CoordAssembler::new(nx * nx);
        for ey in 0..n {
            for ex in 0..n {
                let e = ey * n + ex;
                let c00 = vertex(ex, ey);
                let c10 = vertex(ex + 1, ey);
                let c01 = vertex(ex, ey + 1);
                let c11 = vertex(ex + 1, ey + 1);
                for j in 0..=k {
                    let v = 0.5 * (rule.nodes[j] + 1.0);
                    for i in 0..=k {
                        let u = 0.5 * (rule.nodes[i] + 1.0);
                        let g = mesh.global_of(e, i, j);
                        asm.set(g, bilinear(c00, c10, c01, c11, u, v))?;
                    }
                }
            }
        }
        let mut out = Mesh {
            k,
            n,
            coords: asm.into_coords(),
            family: MeshFamily::RandomPerturbed { seed, fraction: magnitude_fraction },
            domain_area: rect.area(),
            min_detj: 0.0,
            min_node_gap: 0.0,
            rect: Some(rect),
        };
        match finalize(&mut out, &re) {
            Ok(()) => return Ok(out),
            Err(MeshError::DegenerateElement { elem, .. }) if round < MAX_ROUNDS => {
                // advance the streams of this element's interior vertices
                let (ex, ey) = (elem % n, elem / n);
                for (ivx, ivy) in [(ex, ey), (ex + 1, ey), (ex, ey + 1), (ex + 1, ey + 1)] {
                    let interior = ivx > 0 && ivy > 0 && ivx < n && ivy < n;
                    if interior {
                        let v = ivy * (n + 1) + ivx;
                        let d = draw(&mut streams[v]);
                        offsets[v] = [amp * h * d[0], amp * hy * d[1]];
                    }
                }
            }
            Err(e) => return Err(e),
        }
    }
    Err(MeshError::PerturbationFailed(MAX_ROUNDS))
}

/// Push every geometry node of a Cartesian [-pi,pi]^2 mesh through
/// (x, y) = (xi + 0.1 sin xi sin eta, eta + 0.1 sin eta sin xi).
///
/// The map fixes the boundary (sin(+-pi) = 0), so the domain is unchanged,
/// but all interior elements become genuinely curvilinear with a smooth
/// global metric.
pub fn map_smooth(mesh: &Mesh) -> Result<Mesh, MeshError> {
    use std::f64::consts::PI;
    let ok_domain = matches!(
        (mesh.family, mesh.rect),
        (MeshFamily::Cartesian, Some(r))
            if (r.x0 + PI).abs() < 1e-12 && (r.x1 - PI).abs() < 1e-12
            && (r.y0 + PI).abs() < 1e-12 && (r.y1 - PI).abs() < 1e-12
    );
    if !ok_domain {
        return Err(MeshError::WrongDomain);
    }
    let (_, re) = validate_nk(mesh.n, mesh.k)?;
    let coords = mesh
        .coords
        .iter()
        .map(|&[xi, eta]| {
            let s = 0.1 * xi.sin() * eta.sin();
            [xi + s, eta + s]
        })
        .collect();
    let mut out = Mesh {
        k: mesh.k,
        n: mesh.n,
        coords,
        family: MeshFamily::SmoothMapped,
        domain_area: mesh.domain_area,
        min_detj: 0.0,
        min_node_gap: 0.0,
        rect: mesh.rect,
    };
    finalize(&mut out, &re)?;
    Ok(out)
}

/// Quarter-annulus mesh over the logical grid (r, theta) in
/// [r_inner, r_outer] x [0, pi/2], realized per `variant`.
pub fn build_annulus(
    r_inner: f64,
    r_outer: f64,
    n: usize,
    k: usize,
    variant: AnnulusVariant,
) -> Result<Mesh, MeshError> {
    use std::f64::consts::FRAC_PI_2;
    if !(r_inner > 0.0 && r_outer > r_inner) {
        return Err(MeshError::InvalidRadii(r_inner, r_outer));
    }
    let (rule, re) = validate_nk(n, k)?;
    let nx = k * n + 1;
    let r_lat = lattice_1d(r_inner, r_outer, n, &rule);
    let th_lat = lattice_1d(0.0, FRAC_PI_2, n, &rule);
    let polar = |r: f64, th: f64| -> [f64; 2] { [r * th.cos(), r * th.sin()] };

    let coords = match variant {
        AnnulusVariant::Curvilinear => {
            let mut coords = Vec::with_capacity(nx * nx);
            for gy in 0..nx {
                for gx in 0..nx {
                    coords.push(polar(r_lat[gx], th_lat[gy]));
                }
            }
            coords
        }
        AnnulusVariant::Straight => {
            let mut asm = CoordAssembler::new(nx * nx);
            for ey in 0..n {
                for ex in 0..n {
                    let c00 = polar(r_lat[ex * k], th_lat[ey * k]);
                    let c10 = polar(r_lat[(ex + 1) * k], th_lat[ey * k]);
                    let c01 = polar(r_lat[ex * k], th_lat[(ey + 1) * k]);
                    let c11 = polar(r_lat[(ex + 1) * k], th_lat[(ey + 1) * k]);
                    for j in 0..=k {
                        let v = 0.5 * (rule.nodes[j] + 1.0);
                        for i in 0..=k {
                            let u = 0.5 * (rule.nodes[i] + 1.0);
                            let g = (ey * k + j) * nx + ex * k + i;
                            asm.set(g, bilinear(c00, c10, c01, c11, u, v))?;
                        }
                    }
                }
            }
            asm.into_coords()
        }
        AnnulusVariant::CurvedBoundaryStraightInterior => {
            // Radial (theta = const) edges are straight lines under the polar
            // map already; only r = const arcs distinguish curved from straight.
            // Boundary arcs (r = r_inner at ex=0, r = r_outer at ex=n-1) stay
            // exact; internal arcs become chords; interiors are Coons patches.
            let np = k + 1;
            let mut asm = CoordAssembler::new(nx * nx);
            for ey in 0..n {
                for ex in 0..n {
                    let (r0, r1) = (r_lat[ex * k], r_lat[(ex + 1) * k]);
                    let (t0, t1) = (th_lat[ey * k], th_lat[(ey + 1) * k]);
                    let c00 = polar(r0, t0);
                    let c10 = polar(r1, t0);
                    let c01 = polar(r0, t1);
                    let c11 = polar(r1, t1);
                    // bottom/top edges: straight in physical space either way
                    let line = |a: [f64; 2], b: [f64; 2], s: f64| -> [f64; 2] {
                        [(1.0 - s) * a[0] + s * b[0], (1.0 - s) * a[1] + s * b[1]]
                    };
                    let bottom: Vec<[f64; 2]> = (0..np)
                        .map(|i| line(c00, c10, 0.5 * (rule.nodes[i] + 1.0)))
                        .collect();
                    let top: Vec<[f64; 2]> = (0..np)
                        .map(|i| line(c01, c11, 0.5 * (rule.nodes[i] + 1.0)))
                        .collect();
                    // left/right edges: exact arcs on the physical boundary,
                    // chords internally
                    let arc = |r: f64, j: usize| -> [f64; 2] { polar(r, th_lat[ey * k + j]) };
                    let left: Vec<[f64; 2]> = (0..np)
                        .map(|j| {
                            if ex == 0 {
                                arc(r0, j)
                            } else {
                                line(c00, c01, 0.5 * (rule.nodes[j] + 1.0))
                            }
                        })
                        .collect();
                    let right: Vec<[f64; 2]> = (0..np)
                        .map(|j| {
                            if ex == n - 1 {
                                arc(r1, j)
                            } else {
                                line(c10, c11, 0.5 * (rule.nodes[j] + 1.0))
                            }
                        })
                        .collect();
                    for j in 0..np {
                        let v = 0.5 * (rule.nodes[j] + 1.0);
                        for i in 0..np {
                            let u = 0.5 * (rule.nodes[i] + 1.0);
                            let g = (ey * k + j) * nx + ex * k + i;
                            let p = if j == 0 {
                                bottom[i]
                            } else if j == np - 1 {
                                top[i]
                            } else if i == 0 {
                                left[j]
                            } else if i == np - 1 {
                                right[j]
                            } else {
                                // transfinite interior from the four edges
                                let mut p = [0.0; 2];
                                for d in 0..2 {
                                    p[d] = (1.0 - v) * bottom[i][d]
                                        + v * top[i][d]
                                        + (1.0 - u) * left[j][d]
                                        + u * right[j][d]
                                        - ((1.0 - u) * (1.0 - v) * c00[d]
                                            + u * (1.0 - v) * c10[d]
                                            + (1.0 - u) * v * c01[d]
                                            + u * v * c11[d]);
                                }
                                p
                            };
                            asm.set(g, p)?;
                        }
                    }
                }
            }
            asm.into_coords()
        }
    };

    let mut mesh = Mesh {
        k,
        n,
        coords,
        family: MeshFamily::Annulus { variant, r_inner, r_outer },
        domain_area: std::f64::consts::PI * (r_outer * r_outer - r_inner * r_inner) / 4.0,
        min_detj: 0.0,
        min_node_gap: 0.0,
        rect: None,
    };
    finalize(&mut mesh, &re)?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_cell_cartesian_nodes() {
        let m = build_cartesian(Rect::unit(), 1, 2).unwrap();
        assert_eq!(m.n_nodes(), 9);
        assert_eq!(m.n_elems(), 1);
        let want = [0.0, 0.5, 1.0];
        for gy in 0..3 {
            for gx in 0..3 {
                let p = m.coords[gy * 3 + gx];
                assert_relative_eq!(p[0], want[gx], epsilon = 1e-15);
                assert_relative_eq!(p[1], want[gy], epsilon = 1e-15);
            }
        }
        assert_relative_eq!(m.h_norm(), 0.5);
    }

    #[test]
    fn node_count_and_tags() {
        let m = build_cartesian(Rect::centered_pi(), 4, 2).unwrap();
        assert_eq!(m.n_nodes(), 81);
        let m2 = build_cartesian(Rect::unit(), 2, 3).unwrap();
        assert_eq!(m2.n_nodes(), 49);
        let interior = (0..m2.n_nodes())
            .filter(|&g| m2.boundary_tag(g) == BoundaryTag::Interior)
            .count();
        assert_eq!(interior, 25);
        assert!(!m2.is_boundary(m2.nx() + 1));
        assert!(m2.is_boundary(0));
    }

    #[test]
    fn global_of_covers_lattice() {
        let m = build_cartesian(Rect::unit(), 3, 4).unwrap();
        let mut seen = vec![false; m.n_nodes()];
        for e in 0..m.n_elems() {
            for j in 0..=m.k {
                for i in 0..=m.k {
                    seen[m.global_of(e, i, j)] = true;
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(matches!(
            build_cartesian(Rect { x0: 1.0, x1: 1.0, y0: 0.0, y1: 1.0 }, 2, 2),
            Err(MeshError::InvalidDomain)
        ));
        assert!(matches!(build_cartesian(Rect::unit(), 2, 1), Err(MeshError::InvalidDegree(1))));
        assert!(matches!(build_cartesian(Rect::unit(), 0, 2), Err(MeshError::InvalidCells(0))));
        assert!(matches!(
            build_annulus(2.0, 1.0, 2, 2, AnnulusVariant::Straight),
            Err(MeshError::InvalidRadii(..))
        ));
    }

    #[test]
    fn metric_affine_square() {
        // cell edge 2h = 0.5 -> jacobian diag(h, h), det = h^2 at every point
        let m = build_cartesian(Rect::unit(), 2, 3).unwrap();
        let re = diff_matrix(&gll_rule(3).unwrap());
        let md = metric_terms(&m.element(0), &re).unwrap();
        let h = 0.25;
        for p in &md.pts {
            assert_relative_eq!(p.j[0][0], h, epsilon = 1e-13);
            assert_relative_eq!(p.j[1][1], h, epsilon = 1e-13);
            assert!(p.j[0][1].abs() < 1e-13 && p.j[1][0].abs() < 1e-13);
            assert_relative_eq!(p.det, h * h, epsilon = 1e-13);
            // inverse really inverts
            let id00 = p.inv[0][0] * p.j[0][0] + p.inv[0][1] * p.j[1][0];
            let id01 = p.inv[0][0] * p.j[0][1] + p.inv[0][1] * p.j[1][1];
            assert_relative_eq!(id00, 1.0, epsilon = 1e-12);
            assert!(id01.abs() < 1e-12);
        }
    }

    #[test]
    fn metric_parallelogram_constant() {
        // a sheared element: vertices of a parallelogram, bilinear -> affine
        let rule = gll_rule(2).unwrap();
        let re = diff_matrix(&rule);
        let (c00, c10, c01, c11) = ([0.0, 0.0], [1.0, 0.2], [0.3, 1.0], [1.3, 1.2]);
        let mut geom = Vec::new();
        for j in 0..3 {
            let v = 0.5 * (rule.nodes[j] + 1.0);
            for i in 0..3 {
                let u = 0.5 * (rule.nodes[i] + 1.0);
                geom.push(bilinear(c00, c10, c01, c11, u, v));
            }
        }
        let md = metric_terms(&Element { id: 0, geom_nodes: geom }, &re).unwrap();
        // analytic affine jacobian: x_xi = (c10-c00)/2, x_eta = (c01-c00)/2
        for p in &md.pts {
            assert_relative_eq!(p.j[0][0], 0.5, epsilon = 1e-13);
            assert_relative_eq!(p.j[1][0], 0.1, epsilon = 1e-13);
            assert_relative_eq!(p.j[0][1], 0.15, epsilon = 1e-13);
            assert_relative_eq!(p.j[1][1], 0.5, epsilon = 1e-13);
        }
    }

    #[test]
    fn metric_polar_convergence() {
        // curvilinear annulus jacobian approaches the analytic polar jacobian
        // at order >= k under refinement
        let (ri, ro) = (1.0, 2.0);
        let k = 4;
        let mut errs = Vec::new();
        for n in [2usize, 4, 8] {
            let m = build_annulus(ri, ro, n, k, AnnulusVariant::Curvilinear).unwrap();
            let re = diff_matrix(&gll_rule(k).unwrap());
            let rule = gll_rule(k).unwrap();
            let r_lat = lattice_1d(ri, ro, n, &rule);
            let th_lat = lattice_1d(0.0, std::f64::consts::FRAC_PI_2, n, &rule);
            let mut worst = 0.0f64;
            for e in 0..m.n_elems() {
                let (ex, ey) = (e % n, e / n);
                let md = metric_terms(&m.element(e), &re).unwrap();
                let dr = (ro - ri) / n as f64 / 2.0;
                let dth = std::f64::consts::FRAC_PI_2 / n as f64 / 2.0;
                for (q, p) in md.pts.iter().enumerate() {
                    let (iq, jq) = (q % (k + 1), q / (k + 1));
                    let r = r_lat[ex * k + iq];
                    let th = th_lat[ey * k + jq];
                    // analytic: x_xi = dr cos, x_eta = -r dth sin, etc.
                    let ja = [
                        [dr * th.cos(), -r * dth * th.sin()],
                        [dr * th.sin(), r * dth * th.cos()],
                    ];
                    for a in 0..2 {
                        for b in 0..2 {
                            worst = worst.max((p.j[a][b] - ja[a][b]).abs());
                        }
                    }
                }
            }
            errs.push(worst);
        }
        let rate1 = (errs[0] / errs[1]).log2();
        let rate2 = (errs[1] / errs[2]).log2();
        assert!(rate1 > k as f64 - 0.5 && rate2 > k as f64 - 0.5, "rates {rate1} {rate2}");
    }

    #[test]
    fn perturb_zero_fraction_is_identity() {
        let m = build_cartesian(Rect::centered_pi(), 4, 2).unwrap();
        let p = perturb_random(&m, 0.0, 42).unwrap();
        assert_eq!(m.coords, p.coords);
    }

    #[test]
    fn perturb_deterministic_and_bounded() {
        let m = build_cartesian(Rect::centered_pi(), 8, 2).unwrap();
        let p1 = perturb_random(&m, 0.25, 42).unwrap();
        let p2 = perturb_random(&m, 0.25, 42).unwrap();
        assert_eq!(p1.coords, p2.coords);
        let p3 = perturb_random(&m, 0.25, 43).unwrap();
        assert_ne!(p1.coords, p3.coords);
        // displacement bound h/4 on every vertex; boundary vertices pinned
        let h = m.h_norm();
        let (n, k, nx) = (m.n, m.k, m.nx());
        for ivy in 0..=n {
            for ivx in 0..=n {
                let g = (ivy * k) * nx + ivx * k;
                let dx = p1.coords[g][0] - m.coords[g][0];
                let dy = p1.coords[g][1] - m.coords[g][1];
                let interior = ivx > 0 && ivy > 0 && ivx < n && ivy < n;
                if interior {
                    assert!(dx.abs() <= 0.25 * h && dy.abs() <= 0.25 * h);
                } else {
                    assert_eq!((dx, dy), (0.0, 0.0));
                }
            }
        }
        assert!(p1.min_detj > 0.0);
    }

    #[test]
    fn perturb_requires_cartesian() {
        let m = build_cartesian(Rect::centered_pi(), 4, 2).unwrap();
        let p = perturb_random(&m, 0.25, 1).unwrap();
        assert!(matches!(
            perturb_random(&p, 0.25, 1),
            Err(MeshError::RequiresCartesian { .. })
        ));
    }

    #[test]
    fn smooth_map_fixed_points() {
        use std::f64::consts::PI;
        let m = build_cartesian(Rect::centered_pi(), 4, 2).unwrap();
        let s = map_smooth(&m).unwrap();
        let nx = m.nx();
        // (0,0) is the lattice center; corners are fixed
        let mid = (nx / 2) * nx + nx / 2;
        assert_eq!(s.coords[mid], [0.0, 0.0]);
        assert_relative_eq!(s.coords[0][0], -PI, epsilon = 1e-12);
        assert_relative_eq!(s.coords[0][1], -PI, epsilon = 1e-12);
        // (pi/2, pi/2) maps to (pi/2 + 0.1, pi/2 + 0.1): with n=4, k=2 that
        // lattice point is at gx = gy = 6
        let g = 6 * nx + 6;
        assert_relative_eq!(m.coords[g][0], PI / 2.0, epsilon = 1e-12);
        assert_relative_eq!(s.coords[g][0], PI / 2.0 + 0.1, epsilon = 1e-12);
        assert_relative_eq!(s.coords[g][1], PI / 2.0 + 0.1, epsilon = 1e-12);
        // wrong domain rejected
        let u = build_cartesian(Rect::unit(), 2, 2).unwrap();
        assert!(matches!(map_smooth(&u), Err(MeshError::WrongDomain)));
    }

    #[test]
    fn annulus_curvilinear_nodes_on_circles() {
        let (ri, ro) = (1.5, 3.0);
        let m = build_annulus(ri, ro, 3, 3, AnnulusVariant::Curvilinear).unwrap();
        let rule = gll_rule(3).unwrap();
        let r_lat = lattice_1d(ri, ro, 3, &rule);
        let nx = m.nx();
        for gy in 0..nx {
            for gx in 0..nx {
                let p = m.coords[gy * nx + gx];
                let r = p[0].hypot(p[1]);
                assert_relative_eq!(r, r_lat[gx], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn annulus_straight_midside_on_chord() {
        let (ri, ro) = (1.0, 2.0);
        let m = build_annulus(ri, ro, 1, 2, AnnulusVariant::Straight).unwrap();
        // outer edge runs from (2,0) to (0,2); its midside node must sit at
        // the chord midpoint (1,1), not on the arc (radius sqrt(2) != 2)
        let nx = m.nx();
        let mid = (nx / 2) * nx + (nx - 1);
        assert_relative_eq!(m.coords[mid][0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(m.coords[mid][1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn annulus_mixed_boundary_curved_interior_straight() {
        let (ri, ro) = (1.0, 2.0);
        let n = 2;
        let k = 2;
        let m = build_annulus(ri, ro, n, k, AnnulusVariant::CurvedBoundaryStraightInterior).unwrap();
        let nx = m.nx();
        // node on the outer boundary arc (gx = nx-1, odd gy): exact radius
        let outer_mid = 1 * nx + (nx - 1);
        assert_relative_eq!(m.coords[outer_mid][0].hypot(m.coords[outer_mid][1]), ro, epsilon = 1e-12);
        // node on the inner boundary arc
        let inner_mid = 1 * nx + 0;
        assert_relative_eq!(m.coords[inner_mid][0].hypot(m.coords[inner_mid][1]), ri, epsilon = 1e-12);
        // midside node of the internal arc (gx = k*1 = 2, gy = 1): on the chord
        // between the two internal vertices, hence radius < 1.5
        let internal = 1 * nx + k;
        let r_int = m.coords[internal][0].hypot(m.coords[internal][1]);
        assert!(r_int < 1.5 - 1e-4, "internal edge should be a chord, r = {r_int}");
        // and the curvilinear variant puts the same node exactly at 1.5
        let mc = build_annulus(ri, ro, n, k, AnnulusVariant::Curvilinear).unwrap();
        let r_curv = mc.coords[internal][0].hypot(mc.coords[internal][1]);
        assert_relative_eq!(r_curv, 1.5, epsilon = 1e-12);
    }

    #[test]
    fn annulus_dirichlet_radii_accepted() {
        let m = build_annulus(
            7.58834243450380438,
            14.37253667161758967,
            2,
            2,
            AnnulusVariant::Curvilinear,
        )
        .unwrap();
        assert!(m.min_detj > 0.0);
    }

    #[test]
    fn meshes_build_valid_proptest() {
        use proptest::prelude::*;
        proptest!(proptest::test_runner::Config::with_cases(24), |(n in 1usize..=6, k in 2usize..=5, seed in 0u64..1000)| {
            let m = build_cartesian(Rect::centered_pi(), n, k).unwrap();
            let p = perturb_random(&m, 0.25, seed).unwrap();
            prop_assert!(p.min_detj > 0.0);
            prop_assert_eq!(p.n_nodes(), (k * n + 1) * (k * n + 1));
            let a = build_annulus(1.0 + (seed % 7) as f64 * 0.5, 9.0, n, k,
                AnnulusVariant::CurvedBoundaryStraightInterior).unwrap();
            prop_assert!(a.min_detj > 0.0);
        });
    }

    #[test]
    fn summary_csv_shape() {
        let m = build_cartesian(Rect::unit(), 2, 2).unwrap();
        let s = m.summary_csv();
        assert!(s.starts_with("elements,nodes,min_detj\n4,25,"));
    }
}
