//! Matrix-free spectral-element discretization of
//! `L u = -div(a grad u) + b . grad u + c u` on a [`Mesh`].
//!
//! The weak form is collocated on the tensor GLL nodes: with diagonal mass
//! `M_g = sum w det J` and the stiffness action assembled element by element,
//! `(A u)_g = sum_e sum_q [ (grad phi_g)^T (w det J . J^-1 a J^-T) grad u
//!            + phi_g (w det J) (b . grad u + c u) ](q)`.
//!
//! Everything runs through one element kernel: four `O((k+1)^3)` tensor
//! contractions around a pointwise metric/coefficient multiply. The kernel is
//! generic over the node count per edge (monomorphized for k <= 8) and over a
//! lane count, so a real field (1 lane) and an interleaved complex field
//! (2 lanes, real coefficients) share the same instruction stream; the 2-lane
//! apply is bit-identical to two 1-lane applies of the real and imaginary
//! parts. Per-element work is parallelized over elements; the scatter into the
//! global vector is sequential in element order, so results are bitwise
//! independent of the worker-thread count.
//!
//! Coefficient fields are evaluated once per distinct time into a cache keyed
//! by the bit pattern of `t`; implicit solvers that apply the operator many
//! times per step hit the cache after the first application.

use std::sync::{Arc, Mutex, RwLock};

use rayon::prelude::*;

use crate::gll::{diff_matrix, gll_rule, GllError, RefElement};
use crate::krylov::{self, KrylovConfig, KrylovError, KrylovStats};
use crate::mesh::{metric_terms, Mesh, MeshError, MetricData};
use crate::Field;

/// Variable coefficients of `L u = -div(a grad u) + b . grad u + c u`.
/// `a` is a 2x2 matrix field (row-major), `b` a vector field, `c` scalar;
/// all may depend on time. Set `time_dependent: false` for autonomous
/// operators so the quadrature-point cache is built exactly once.
#[derive(Clone)]
pub struct Coefficients {
    pub a: Arc<dyn Fn(f64, f64, f64) -> [[f64; 2]; 2] + Send + Sync>,
    pub b: Arc<dyn Fn(f64, f64, f64) -> [f64; 2] + Send + Sync>,
    pub c: Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>,
    pub time_dependent: bool,
}

impl Coefficients {
    /// `-laplace`: a = I, b = 0, c = 0.
    pub fn laplace() -> Self {
        Self::scaled_laplace(1.0)
    }

    /// `-alpha laplace`: a = alpha I, b = 0, c = 0.
    pub fn scaled_laplace(alpha: f64) -> Self {
        Coefficients {
            a: Arc::new(move |_, _, _| [[alpha, 0.0], [0.0, alpha]]),
            b: Arc::new(|_, _, _| [0.0, 0.0]),
            c: Arc::new(|_, _, _| 0.0),
            time_dependent: false,
        }
    }

    /// `-alpha laplace + V(x,y)`: a = alpha I, b = 0, c = V.
    pub fn with_potential(alpha: f64, v: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>) -> Self {
        Coefficients {
            a: Arc::new(move |_, _, _| [[alpha, 0.0], [0.0, alpha]]),
            b: Arc::new(|_, _, _| [0.0, 0.0]),
            c: Arc::new(move |x, y, _| v(x, y)),
            time_dependent: false,
        }
    }
}

/// Boundary condition on the whole of the domain boundary.
#[derive(Clone)]
pub enum BoundaryCondition {
    /// u = 0 on the boundary; boundary nodes are constrained.
    DirichletHomogeneous,
    /// u = g(x, y, t) on the boundary; boundary nodes are constrained and
    /// [`SemOperator::lift_dirichlet`] evaluates g.
    DirichletLifted(Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>),
    /// Natural (zero-flux) condition; no nodes are constrained.
    Neumann,
}

impl BoundaryCondition {
    pub fn is_dirichlet(&self) -> bool {
        !matches!(self, BoundaryCondition::Neumann)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OperatorError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Gll(#[from] GllError),
    #[error(transparent)]
    Krylov(#[from] KrylovError),
    #[error("field length {got} does not match {expected} (= nodes x lanes)")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Cached quadrature-point data for one time level. Layout per quadrature
/// point: [g11, g12, g21, g22, bt1, bt2, ct, 0] where
/// g = (w det J) J^-1 a J^-T, bt = (w det J) J^-1 b, ct = (w det J) c.
struct CoeffCache {
    gq: Vec<f64>,
    /// Assembled diagonal of the raw stiffness A (no BC masking).
    diag: Vec<f64>,
}

const QP_STRIDE: usize = 8;

/// The discrete operator: diagonal mass plus matrix-free stiffness action.
pub struct SemOperator {
    pub mesh: Arc<Mesh>,
    pub re: RefElement,
    coeffs: Coefficients,
    pub bc: BoundaryCondition,
    metric: Vec<MetricData>,
    mass: Vec<f64>,
    constrained: Vec<bool>,
    warnings: Vec<String>,
    cache: RwLock<Option<(u64, Arc<CoeffCache>)>>,
    scratch: Mutex<Vec<Vec<f64>>>,
}

impl SemOperator {
    pub fn new(
        mesh: Arc<Mesh>,
        coeffs: Coefficients,
        bc: BoundaryCondition,
    ) -> Result<Self, OperatorError> {
        let re = diff_matrix(&gll_rule(mesh.k)?);
        let np = re.np();
        let mut metric = Vec::with_capacity(mesh.n_elems());
        for e in 0..mesh.n_elems() {
            metric.push(metric_terms(&mesh.element(e), &re)?);
        }
        // diagonal mass
        let mut mass = vec![0.0f64; mesh.n_nodes()];
        for e in 0..mesh.n_elems() {
            for j in 0..np {
                for i in 0..np {
                    mass[mesh.global_of(e, i, j)] += metric[e].pts[j * np + i].wdet;
                }
            }
        }
        let constrained: Vec<bool> = if bc.is_dirichlet() {
            (0..mesh.n_nodes()).map(|g| mesh.is_boundary(g)).collect()
        } else {
            vec![false; mesh.n_nodes()]
        };
        let mut op = SemOperator {
            mesh,
            re,
            coeffs,
            bc,
            metric,
            mass,
            constrained,
            warnings: Vec::new(),
            cache: RwLock::new(None),
            scratch: Mutex::new(Vec::new()),
        };
        op.check_coefficients(0.0);
        for w in &op.warnings {
            eprintln!("warning: {w}");
        }
        Ok(op)
    }

    /// Ellipticity / coercivity screening at t = 0: warns (never fails) when
    /// a(x,y,0) is not symmetric positive definite at some quadrature point,
    /// or when the pointwise sufficient coercivity condition
    /// 4 lambda_min(a) c >= |b|^2 is violated where b or negative c is active.
    fn check_coefficients(&mut self, t: f64) {
        let np = self.re.np();
        let mut min_eig = f64::INFINITY;
        let mut max_asym = 0.0f64;
        let mut worst_coercivity = f64::INFINITY;
        let mut has_b = false;
        for e in 0..self.mesh.n_elems() {
            for j in 0..np {
                for i in 0..np {
                    let [x, y] = self.mesh.coords[self.mesh.global_of(e, i, j)];
                    let a = (self.coeffs.a)(x, y, t);
                    let b = (self.coeffs.b)(x, y, t);
                    let c = (self.coeffs.c)(x, y, t);
                    max_asym = max_asym.max((a[0][1] - a[1][0]).abs());
                    let sym01 = 0.5 * (a[0][1] + a[1][0]);
                    let half_tr = 0.5 * (a[0][0] + a[1][1]);
                    let disc = (0.5 * (a[0][0] - a[1][1])).hypot(sym01);
                    let lam = half_tr - disc;
                    min_eig = min_eig.min(lam);
                    let b2 = b[0] * b[0] + b[1] * b[1];
                    if b2 > 0.0 {
                        has_b = true;
                    }
                    worst_coercivity = worst_coercivity.min(4.0 * lam * c - b2);
                }
            }
        }
        if max_asym > 1e-14 {
            self.warnings
                .push(format!("coefficient a is non-symmetric (max |a12 - a21| = {max_asym:.3e})"));
        }
        if min_eig <= 0.0 {
            self.warnings.push(format!(
                "coefficient a is not positive definite at t = {t} (min eigenvalue {min_eig:.6e})"
            ));
        } else if has_b && worst_coercivity < -1e-14 {
            self.warnings.push(format!(
                "pointwise coercivity condition 4 lambda_min(a) c >= |b|^2 fails by {:.3e}",
                -worst_coercivity
            ));
        }
    }

    /// Construction-time warnings (non-SPD a, possible loss of coercivity).
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.mesh.n_nodes()
    }

    /// The diagonal mass matrix (no BC masking), one weight per global node.
    pub fn mass_diagonal(&self) -> &[f64] {
        &self.mass
    }

    /// Which global nodes are constrained by the boundary condition.
    pub fn constrained(&self) -> &[bool] {
        &self.constrained
    }

    /// Boundary data lifted to a global field: g(x, y, t) at constrained
    /// nodes, zero elsewhere (identically zero for homogeneous/Neumann).
    pub fn lift_dirichlet(&self, t: f64) -> Field {
        let mut out = vec![0.0; self.mesh.n_nodes()];
        if let BoundaryCondition::DirichletLifted(g) = &self.bc {
            for (gn, &con) in self.constrained.iter().enumerate() {
                if con {
                    let [x, y] = self.mesh.coords[gn];
                    out[gn] = g(x, y, t);
                }
            }
        }
        out
    }

    fn coeff_cache(&self, t: f64) -> Arc<CoeffCache> {
        let key = if self.coeffs.time_dependent { t.to_bits() } else { 0 };
        if let Some((k, c)) = self.cache.read().unwrap().as_ref() {
            if *k == key {
                return Arc::clone(c);
            }
        }
        let built = Arc::new(self.build_cache(t));
        *self.cache.write().unwrap() = Some((key, Arc::clone(&built)));
        built
    }

    fn build_cache(&self, t: f64) -> CoeffCache {
        let np = self.re.np();
        let np2 = np * np;
        let ne = self.mesh.n_elems();
        let mut gq = vec![0.0f64; ne * np2 * QP_STRIDE];
        let mesh = &*self.mesh;
        let coeffs = &self.coeffs;
        let metric = &self.metric;
        // deterministic: disjoint per-element chunks, no reductions
        gq.par_chunks_mut(np2 * QP_STRIDE).enumerate().for_each(|(e, chunk)| {
            let (ex, ey) = (e % mesh.n, e / mesh.n);
            let nx = mesh.nx();
            let base = (ey * mesh.k) * nx + ex * mesh.k;
            for j in 0..np {
                for i in 0..np {
                    let q = j * np + i;
                    let [x, y] = mesh.coords[base + j * nx + i];
                    let a = (coeffs.a)(x, y, t);
                    let b = (coeffs.b)(x, y, t);
                    let c = (coeffs.c)(x, y, t);
                    let m = &metric[e].pts[q];
                    let inv = &m.inv;
                    let w = m.wdet;
                    // G = w (J^-1 a J^-T); rows of J^-1 are grad xi, grad eta
                    let ba = [
                        [
                            inv[0][0] * a[0][0] + inv[0][1] * a[1][0],
                            inv[0][0] * a[0][1] + inv[0][1] * a[1][1],
                        ],
                        [
                            inv[1][0] * a[0][0] + inv[1][1] * a[1][0],
                            inv[1][0] * a[0][1] + inv[1][1] * a[1][1],
                        ],
                    ];
                    let s = &mut chunk[q * QP_STRIDE..(q + 1) * QP_STRIDE];
                    s[0] = w * (ba[0][0] * inv[0][0] + ba[0][1] * inv[0][1]);
                    s[1] = w * (ba[0][0] * inv[1][0] + ba[0][1] * inv[1][1]);
                    s[2] = w * (ba[1][0] * inv[0][0] + ba[1][1] * inv[0][1]);
                    s[3] = w * (ba[1][0] * inv[1][0] + ba[1][1] * inv[1][1]);
                    s[4] = w * (inv[0][0] * b[0] + inv[0][1] * b[1]);
                    s[5] = w * (inv[1][0] * b[0] + inv[1][1] * b[1]);
                    s[6] = w * c;
                    s[7] = 0.0;
                }
            }
        });
        // assembled raw diagonal, used by the Jacobi preconditioner
        let mut diag = vec![0.0f64; mesh.n_nodes()];
        let d = |i: usize, m: usize| self.re.d(i, m);
        for e in 0..ne {
            let ec = &gq[e * np2 * QP_STRIDE..(e + 1) * np2 * QP_STRIDE];
            let at = |j: usize, i: usize, s: usize| ec[(j * np + i) * QP_STRIDE + s];
            for bj in 0..np {
                for ai in 0..np {
                    let mut v = (at(bj, ai, 1) + at(bj, ai, 2)) * d(ai, ai) * d(bj, bj)
                        + at(bj, ai, 4) * d(ai, ai)
                        + at(bj, ai, 5) * d(bj, bj)
                        + at(bj, ai, 6);
                    for q in 0..np {
                        v += at(bj, q, 0) * d(q, ai) * d(q, ai)
                            + at(q, ai, 3) * d(q, bj) * d(q, bj);
                    }
                    diag[mesh.global_of(e, ai, bj)] += v;
                }
            }
        }
        CoeffCache { gq, diag }
    }

    fn take_scratch(&self, len: usize) -> Vec<f64> {
        let mut pool = self.scratch.lock().unwrap();
        match pool.pop() {
            Some(mut v) => {
                v.resize(len, 0.0);
                v
            }
            None => vec![0.0; len],
        }
    }

    fn put_scratch(&self, v: Vec<f64>) {
        self.scratch.lock().unwrap().push(v);
    }

    fn check_len<const L: usize>(&self, u: &[f64], out: &[f64]) -> Result<(), OperatorError> {
        let expected = self.mesh.n_nodes() * L;
        for got in [u.len(), out.len()] {
            if got != expected {
                return Err(OperatorError::DimensionMismatch { expected, got });
            }
        }
        Ok(())
    }

    fn apply_lanes<const L: usize>(
        &self,
        t: f64,
        u: &[f64],
        out: &mut [f64],
        mask_in: bool,
        mask_out: bool,
    ) {
        let cache = self.coeff_cache(t);
        match self.re.np() {
            3 => self.apply_np::<3, L>(&cache, u, out, mask_in, mask_out),
            4 => self.apply_np::<4, L>(&cache, u, out, mask_in, mask_out),
            5 => self.apply_np::<5, L>(&cache, u, out, mask_in, mask_out),
            6 => self.apply_np::<6, L>(&cache, u, out, mask_in, mask_out),
            7 => self.apply_np::<7, L>(&cache, u, out, mask_in, mask_out),
            8 => self.apply_np::<8, L>(&cache, u, out, mask_in, mask_out),
            9 => self.apply_np::<9, L>(&cache, u, out, mask_in, mask_out),
            _ => self.apply_dyn::<L>(&cache, u, out, mask_in, mask_out),
        }
    }

    fn apply_np<const NP: usize, const L: usize>(
        &self,
        cache: &CoeffCache,
        u: &[f64],
        out: &mut [f64],
        mask_in: bool,
        mask_out: bool,
    ) {
        let mesh = &*self.mesh;
        let ne = mesh.n_elems();
        let np2 = NP * NP;
        let chunk = np2 * L;
        let nx = mesh.nx();
        let (n, k) = (mesh.n, mesh.k);
        let mut d = [[0.0f64; NP]; NP];
        for i in 0..NP {
            for m in 0..NP {
                d[i][m] = self.re.d(i, m);
            }
        }
        let constrained = &self.constrained;
        let gq = &cache.gq;
        let mut buf = self.take_scratch(ne * chunk);
        buf.par_chunks_mut(chunk).enumerate().for_each(|(e, oe)| {
            let (ex, ey) = (e % n, e / n);
            let base = (ey * k) * nx + ex * k;
            let mut ul = [[[0.0f64; L]; NP]; NP];
            for j in 0..NP {
                for i in 0..NP {
                    let g = base + j * nx + i;
                    if mask_in && constrained[g] {
                        ul[j][i] = [0.0; L];
                    } else {
                        for l in 0..L {
                            ul[j][i][l] = u[g * L + l];
                        }
                    }
                }
            }
            let mut rl = [[[0.0f64; L]; NP]; NP];
            elem_kernel::<NP, L>(&d, &gq[e * np2 * QP_STRIDE..(e + 1) * np2 * QP_STRIDE], &ul, &mut rl);
            for j in 0..NP {
                for i in 0..NP {
                    for l in 0..L {
                        oe[(j * NP + i) * L + l] = rl[j][i][l];
                    }
                }
            }
        });
        out.fill(0.0);
        for e in 0..ne {
            let (ex, ey) = (e % n, e / n);
            let base = (ey * k) * nx + ex * k;
            let oe = &buf[e * chunk..(e + 1) * chunk];
            for j in 0..NP {
                let row = base + j * nx;
                for i in 0..NP {
                    let g = row + i;
                    for l in 0..L {
                        out[g * L + l] += oe[(j * NP + i) * L + l];
                    }
                }
            }
        }
        if mask_out {
            for (g, &c) in constrained.iter().enumerate() {
                if c {
                    for l in 0..L {
                        out[g * L + l] = 0.0;
                    }
                }
            }
        }
        self.put_scratch(buf);
    }

    /// Runtime-sized fallback for degrees beyond the monomorphized range.
    fn apply_dyn<const L: usize>(
        &self,
        cache: &CoeffCache,
        u: &[f64],
        out: &mut [f64],
        mask_in: bool,
        mask_out: bool,
    ) {
        let mesh = &*self.mesh;
        let np = self.re.np();
        let np2 = np * np;
        let ne = mesh.n_elems();
        let chunk = np2 * L;
        let nx = mesh.nx();
        let (n, k) = (mesh.n, mesh.k);
        let re = &self.re;
        let constrained = &self.constrained;
        let gq = &cache.gq;
        let mut buf = self.take_scratch(ne * chunk);
        buf.par_chunks_mut(chunk).enumerate().for_each(|(e, oe)| {
            let (ex, ey) = (e % n, e / n);
            let base = (ey * k) * nx + ex * k;
            let mut ul = vec![[0.0f64; L]; np2];
            for j in 0..np {
                for i in 0..np {
                    let g = base + j * nx + i;
                    if !(mask_in && constrained[g]) {
                        for l in 0..L {
                            ul[j * np + i][l] = u[g * L + l];
                        }
                    }
                }
            }
            let ec = &gq[e * np2 * QP_STRIDE..(e + 1) * np2 * QP_STRIDE];
            let mut dxi = vec![[0.0f64; L]; np2];
            let mut deta = vec![[0.0f64; L]; np2];
            for j in 0..np {
                for i in 0..np {
                    let mut sx = [0.0; L];
                    let mut se = [0.0; L];
                    for m in 0..np {
                        let dim = re.d(i, m);
                        let djm = re.d(j, m);
                        for l in 0..L {
                            sx[l] = dim.mul_add(ul[j * np + m][l], sx[l]);
                            se[l] = djm.mul_add(ul[m * np + i][l], se[l]);
                        }
                    }
                    dxi[j * np + i] = sx;
                    deta[j * np + i] = se;
                }
            }
            let mut f1 = vec![[0.0f64; L]; np2];
            let mut f2 = vec![[0.0f64; L]; np2];
            let mut rl = vec![[0.0f64; L]; np2];
            for q in 0..np2 {
                let s = &ec[q * QP_STRIDE..(q + 1) * QP_STRIDE];
                for l in 0..L {
                    let dx = dxi[q][l];
                    let de = deta[q][l];
                    f1[q][l] = s[0].mul_add(dx, s[1] * de);
                    f2[q][l] = s[2].mul_add(dx, s[3] * de);
                    rl[q][l] = s[4].mul_add(dx, s[5].mul_add(de, s[6] * ul[q][l]));
                }
            }
            for j in 0..np {
                for i in 0..np {
                    let mut acc = rl[j * np + i];
                    for q in 0..np {
                        let dqi = re.d(q, i);
                        let dqj = re.d(q, j);
                        for l in 0..L {
                            acc[l] = dqi.mul_add(f1[j * np + q][l], acc[l]);
                            acc[l] = dqj.mul_add(f2[q * np + i][l], acc[l]);
                        }
                    }
                    rl[j * np + i] = acc;
                }
            }
            for q in 0..np2 {
                for l in 0..L {
                    oe[q * L + l] = rl[q][l];
                }
            }
        });
        out.fill(0.0);
        for e in 0..ne {
            let (ex, ey) = (e % n, e / n);
            let base = (ey * k) * nx + ex * k;
            let oe = &buf[e * chunk..(e + 1) * chunk];
            for j in 0..np {
                for i in 0..np {
                    let g = base + j * nx + i;
                    for l in 0..L {
                        out[g * L + l] += oe[(j * np + i) * L + l];
                    }
                }
            }
        }
        if mask_out {
            for (g, &c) in constrained.iter().enumerate() {
                if c {
                    for l in 0..L {
                        out[g * L + l] = 0.0;
                    }
                }
            }
        }
        self.put_scratch(buf);
    }

    /// Raw weak-form stiffness action `out = A(t) u` on a real field.
    /// No boundary masking: boundary rows and boundary coupling included.
    pub fn apply_stiffness(&self, t: f64, u: &[f64], out: &mut [f64]) -> Result<(), OperatorError> {
        self.check_len::<1>(u, out)?;
        self.apply_lanes::<1>(t, u, out, false, false);
        Ok(())
    }

    /// Evolution right-hand-side building block: `out = A(t) u` with the
    /// constrained rows of the *output* zeroed. The input keeps its boundary
    /// values, so interior rows see the true boundary coupling.
    pub fn apply_interior(&self, t: f64, u: &[f64], out: &mut [f64]) -> Result<(), OperatorError> {
        self.check_len::<1>(u, out)?;
        self.apply_lanes::<1>(t, u, out, false, true);
        Ok(())
    }

    /// As [`apply_stiffness`](Self::apply_stiffness) on an interleaved complex
    /// field ([re, im] per node). Coefficients are real, so this is
    /// bit-identical to two real applies on the separated planes.
    pub fn apply_stiffness_c(&self, t: f64, u: &[f64], out: &mut [f64]) -> Result<(), OperatorError> {
        self.check_len::<2>(u, out)?;
        self.apply_lanes::<2>(t, u, out, false, false);
        Ok(())
    }

    /// As [`apply_interior`](Self::apply_interior) on an interleaved complex field.
    pub fn apply_interior_c(&self, t: f64, u: &[f64], out: &mut [f64]) -> Result<(), OperatorError> {
        self.check_len::<2>(u, out)?;
        self.apply_lanes::<2>(t, u, out, false, true);
        Ok(())
    }

    /// Assembled diagonal of `shift * M + A(t)` with constrained rows replaced
    /// by 1 — the Jacobi preconditioner for [`solve_apply`](Self::solve_apply).
    pub fn diagonal_shifted(&self, t: f64, shift: f64) -> Vec<f64> {
        let cache = self.coeff_cache(t);
        (0..self.mesh.n_nodes())
            .map(|g| {
                if self.constrained[g] {
                    1.0
                } else {
                    shift * self.mass[g] + cache.diag[g]
                }
            })
            .collect()
    }

    /// The constrained linear operator `x -> shift * M x + A(t) x` acting on
    /// corrections that vanish on the boundary: constrained input entries are
    /// ignored, constrained output rows are the identity. Nonsingular for any
    /// Dirichlet problem with positive `shift * M + A` on the interior.
    pub fn solve_apply<'a>(&'a self, t: f64, shift: f64) -> impl Fn(&[f64], &mut [f64]) + 'a {
        move |x: &[f64], y: &mut [f64]| {
            self.apply_lanes::<1>(t, x, y, true, true);
            for g in 0..self.mesh.n_nodes() {
                if self.constrained[g] {
                    y[g] = x[g];
                } else {
                    y[g] += shift * self.mass[g] * x[g];
                }
            }
        }
    }

    /// Elliptic (Ritz) projection `R_h u`: solve `A_h(R_h u, v) = <minus_lu, v>_h`
    /// for all unconstrained test functions v, with `R_h u = g` on a Dirichlet
    /// boundary. `minus_lu` supplies the analytic values of `-L u + (lower
    /// order terms)` — i.e. of `L` applied to the target — at physical points.
    pub fn elliptic_projection(
        &self,
        t: f64,
        minus_lu: &dyn Fn(f64, f64) -> f64,
        cfg: &KrylovConfig,
    ) -> Result<(Field, KrylovStats), OperatorError> {
        let nn = self.mesh.n_nodes();
        let ug = self.lift_dirichlet(t);
        let mut rhs = vec![0.0; nn];
        // <f, v>_h = diagonal mass times nodal f
        for g in 0..nn {
            if !self.constrained[g] {
                let [x, y] = self.mesh.coords[g];
                rhs[g] = self.mass[g] * minus_lu(x, y);
            }
        }
        // move the lifted boundary data to the right-hand side
        let mut aug = vec![0.0; nn];
        self.apply_stiffness(t, &ug, &mut aug)?;
        for g in 0..nn {
            if !self.constrained[g] {
                rhs[g] -= aug[g];
            }
        }
        let x0 = vec![0.0; nn];
        let apply = self.solve_apply(t, 0.0);
        let mut cfg = cfg.clone();
        if cfg.precond_diag.is_none() {
            cfg.precond_diag = Some(self.diagonal_shifted(t, 0.0));
        }
        let (mut w, stats) = krylov::solve(&apply, &rhs, &x0, &cfg)?;
        for g in 0..nn {
            w[g] += ug[g];
        }
        Ok((w, stats))
    }

    /// Assemble `shift * M + A(t)` (with identity rows at constrained nodes
    /// when the BC is Dirichlet) in coordinate format by probing the
    /// matrix-free apply with unit vectors. Intended for small meshes.
    pub fn assemble_triplets(&self, t: f64, shift: f64) -> Vec<(usize, usize, f64)> {
        let nn = self.mesh.n_nodes();
        let apply = self.solve_apply(t, shift);
        let mut e = vec![0.0; nn];
        let mut col = vec![0.0; nn];
        let mut trips = Vec::new();
        for jcol in 0..nn {
            e[jcol] = 1.0;
            apply(&e, &mut col);
            e[jcol] = 0.0;
            for (irow, &v) in col.iter().enumerate() {
                if v != 0.0 {
                    trips.push((irow, jcol, v));
                }
            }
        }
        trips
    }
}

/// The element kernel: four tensor contractions around a pointwise
/// coefficient multiply, on `L` interleaved lanes. `u` and `r` are indexed
/// `[eta node][xi node]`.
#[inline(always)]
fn elem_kernel<const NP: usize, const L: usize>(
    d: &[[f64; NP]; NP],
    cf: &[f64],
    u: &[[[f64; L]; NP]; NP],
    r: &mut [[[f64; L]; NP]; NP],
) {
    let mut dxi = [[[0.0f64; L]; NP]; NP];
    let mut deta = [[[0.0f64; L]; NP]; NP];
    for j in 0..NP {
        for i in 0..NP {
            let mut sx = [0.0f64; L];
            let mut se = [0.0f64; L];
            for m in 0..NP {
                let dim = d[i][m];
                let djm = d[j][m];
                for l in 0..L {
                    sx[l] = dim.mul_add(u[j][m][l], sx[l]);
                    se[l] = djm.mul_add(u[m][i][l], se[l]);
                }
            }
            dxi[j][i] = sx;
            deta[j][i] = se;
        }
    }
    let mut f1 = [[[0.0f64; L]; NP]; NP];
    let mut f2 = [[[0.0f64; L]; NP]; NP];
    for j in 0..NP {
        for i in 0..NP {
            let s = &cf[(j * NP + i) * QP_STRIDE..(j * NP + i) * QP_STRIDE + 7];
            for l in 0..L {
                let dx = dxi[j][i][l];
                let de = deta[j][i][l];
                f1[j][i][l] = s[0].mul_add(dx, s[1] * de);
                f2[j][i][l] = s[2].mul_add(dx, s[3] * de);
                r[j][i][l] = s[4].mul_add(dx, s[5].mul_add(de, s[6] * u[j][i][l]));
            }
        }
    }
    for j in 0..NP {
        for i in 0..NP {
            let mut acc = r[j][i];
            for q in 0..NP {
                let dqi = d[q][i];
                let dqj = d[q][j];
                for l in 0..L {
                    acc[l] = dqi.mul_add(f1[j][q][l], acc[l]);
                    acc[l] = dqj.mul_add(f2[q][i][l], acc[l]);
                }
            }
            r[j][i] = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_cartesian, perturb_random, Rect};
    use approx::assert_relative_eq;

    fn laplace_op(n: usize, k: usize, bc: BoundaryCondition) -> SemOperator {
        let mesh = build_cartesian(Rect::unit(), n, k).unwrap();
        SemOperator::new(Arc::new(mesh), Coefficients::laplace(), bc).unwrap()
    }

    /// A full-coupling operator with non-symmetric a, convection, reaction,
    /// on a perturbed mesh: exercises every kernel term.
    fn messy_op(n: usize, k: usize) -> SemOperator {
        let mesh = build_cartesian(Rect::centered_pi(), n, k).unwrap();
        let mesh = perturb_random(&mesh, 0.2, 7).unwrap();
        let coeffs = Coefficients {
            a: Arc::new(|x, y, _| {
                [[2.0 + (x * 0.3).sin(), 0.2 * x * y / 10.0], [0.1 + 0.05 * y, 1.5 + (y * 0.2).cos()]]
            }),
            b: Arc::new(|x, y, _| [0.3 * y, -0.2 * x]),
            c: Arc::new(|x, y, _| 1.0 + 0.1 * (x + y)),
            time_dependent: false,
        };
        SemOperator::new(Arc::new(mesh), coeffs, BoundaryCondition::DirichletHomogeneous).unwrap()
    }

    #[test]
    fn mass_corner_unit_square_k2() {
        let op = laplace_op(1, 2, BoundaryCondition::Neumann);
        // corner: w0 w0 det = (1/3)(1/3)(1/4) = 1/36
        assert_relative_eq!(op.mass_diagonal()[0], 1.0 / 36.0, epsilon = 1e-15);
        let total: f64 = op.mass_diagonal().iter().sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-13);
    }

    #[test]
    fn mass_sums_to_area_everywhere() {
        for (n, k) in [(3, 2), (2, 5)] {
            let mesh = build_cartesian(Rect::centered_pi(), n, k).unwrap();
            let mesh = perturb_random(&mesh, 0.25, 3).unwrap();
            let op =
                SemOperator::new(Arc::new(mesh), Coefficients::laplace(), BoundaryCondition::Neumann)
                    .unwrap();
            let total: f64 = op.mass_diagonal().iter().sum();
            assert_relative_eq!(total, 4.0 * std::f64::consts::PI * std::f64::consts::PI, epsilon = 1e-10);
        }
    }

    #[test]
    fn laplace_annihilates_constants_and_is_symmetric() {
        let op = laplace_op(3, 3, BoundaryCondition::Neumann);
        let nn = op.n_nodes();
        let ones = vec![1.0; nn];
        let mut out = vec![0.0; nn];
        op.apply_stiffness(0.0, &ones, &mut out).unwrap();
        for v in &out {
            assert!(v.abs() < 1e-12, "constant not annihilated: {v}");
        }
        // symmetry via probing a few random columns
        let trips = {
            let mut e = vec![0.0; nn];
            let mut col = vec![0.0; nn];
            let mut m = vec![vec![0.0; nn]; nn];
            for j in 0..nn {
                e[j] = 1.0;
                op.apply_stiffness(0.0, &e, &mut col).unwrap();
                e[j] = 0.0;
                for i in 0..nn {
                    m[i][j] = col[i];
                }
            }
            m
        };
        for i in 0..nn {
            for j in 0..nn {
                assert!(
                    (trips[i][j] - trips[j][i]).abs() < 1e-12,
                    "asymmetry at ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn tensor_probe_reproduces_1d_stencils() {
        // On a y-constant field the 2-D Laplace apply reduces exactly to the
        // 1-D operator in x; probing unit 1-D columns recovers the classical
        // Q2 finite-difference stencils on a uniform grid.
        let n = 4;
        let op = laplace_op(n, 2, BoundaryCondition::Neumann);
        let nx = op.mesh.nx();
        let h = 1.0 / (2.0 * n as f64); // node spacing (k = 2: uniform)
        let row = |gx_row: usize| -> Vec<f64> {
            let mut vals = vec![0.0; nx];
            let nn = op.n_nodes();
            let mut u = vec![0.0; nn];
            let mut out = vec![0.0; nn];
            for gxp in 0..nx {
                for g in 0..nn {
                    u[g] = if g % nx == gxp { 1.0 } else { 0.0 };
                }
                op.apply_stiffness(0.0, &u, &mut out).unwrap();
                let g_probe = (nx / 2) * nx + gx_row; // middle y row
                vals[gxp] = -out[g_probe] / op.mass_diagonal()[g_probe];
            }
            vals
        };
        // odd (cell-midpoint) node: (1, -2, 1)/h^2
        let odd = row(3);
        let scale = 1.0 / (h * h);
        assert_relative_eq!(odd[2], 1.0 * scale, max_relative = 1e-12);
        assert_relative_eq!(odd[3], -2.0 * scale, max_relative = 1e-12);
        assert_relative_eq!(odd[4], 1.0 * scale, max_relative = 1e-12);
        for (i, v) in odd.iter().enumerate() {
            if !(2..=4).contains(&i) {
                assert!(v.abs() < 1e-12 * scale, "stray entry at {i}: {v}");
            }
        }
        // even (cell-vertex) node: (-1, 8, -14, 8, -1)/(4 h^2)
        let even = row(4);
        let want = [-1.0, 8.0, -14.0, 8.0, -1.0];
        for (o, w) in want.iter().enumerate() {
            assert_relative_eq!(even[2 + o], w / (4.0 * h * h), max_relative = 1e-12);
        }
    }

    #[test]
    fn lanes2_matches_two_real_applies_bitwise() {
        let op = messy_op(3, 4);
        let nn = op.n_nodes();
        let mut rng = crate::rng::SplitMix64::new(99);
        let re_part: Vec<f64> = (0..nn).map(|_| rng.next_symmetric()).collect();
        let im_part: Vec<f64> = (0..nn).map(|_| rng.next_symmetric()).collect();
        let mut out_re = vec![0.0; nn];
        let mut out_im = vec![0.0; nn];
        op.apply_stiffness(0.0, &re_part, &mut out_re).unwrap();
        op.apply_stiffness(0.0, &im_part, &mut out_im).unwrap();
        let mut z = vec![0.0; 2 * nn];
        for g in 0..nn {
            z[2 * g] = re_part[g];
            z[2 * g + 1] = im_part[g];
        }
        let mut out_z = vec![0.0; 2 * nn];
        op.apply_stiffness_c(0.0, &z, &mut out_z).unwrap();
        for g in 0..nn {
            assert_eq!(out_z[2 * g].to_bits(), out_re[g].to_bits(), "re lane at {g}");
            assert_eq!(out_z[2 * g + 1].to_bits(), out_im[g].to_bits(), "im lane at {g}");
        }
    }

    #[test]
    fn diagonal_matches_probed_columns() {
        let op = messy_op(2, 3);
        let nn = op.n_nodes();
        let diag = op.diagonal_shifted(0.0, 0.7);
        let apply = op.solve_apply(0.0, 0.7);
        let mut e = vec![0.0; nn];
        let mut col = vec![0.0; nn];
        for g in 0..nn {
            e[g] = 1.0;
            apply(&e, &mut col);
            e[g] = 0.0;
            assert_relative_eq!(diag[g], col[g], max_relative = 1e-12);
        }
    }

    #[test]
    fn masking_semantics() {
        let op = messy_op(2, 2);
        let nn = op.n_nodes();
        let mut rng = crate::rng::SplitMix64::new(5);
        let u: Vec<f64> = (0..nn).map(|_| rng.next_symmetric()).collect();
        // apply_interior zeroes exactly the constrained output rows
        let mut raw = vec![0.0; nn];
        let mut masked = vec![0.0; nn];
        op.apply_stiffness(0.0, &u, &mut raw).unwrap();
        op.apply_interior(0.0, &u, &mut masked).unwrap();
        for g in 0..nn {
            if op.constrained()[g] {
                assert_eq!(masked[g], 0.0);
            } else {
                assert_eq!(masked[g].to_bits(), raw[g].to_bits());
            }
        }
        // solve_apply is the identity on constrained rows
        let apply = op.solve_apply(0.0, 0.0);
        let mut y = vec![0.0; nn];
        apply(&u, &mut y);
        for g in 0..nn {
            if op.constrained()[g] {
                assert_eq!(y[g].to_bits(), u[g].to_bits());
            }
        }
    }

    #[test]
    fn dirichlet_interior_independent_of_masked_boundary_input() {
        let op = messy_op(2, 3);
        let nn = op.n_nodes();
        let apply = op.solve_apply(0.0, 0.3);
        let mut rng = crate::rng::SplitMix64::new(11);
        let mut u: Vec<f64> = (0..nn).map(|_| rng.next_symmetric()).collect();
        let mut y1 = vec![0.0; nn];
        apply(&u, &mut y1);
        // scribble on constrained entries: interior output must not change
        for g in 0..nn {
            if op.constrained()[g] {
                u[g] = 1e6;
            }
        }
        let mut y2 = vec![0.0; nn];
        apply(&u, &mut y2);
        for g in 0..nn {
            if !op.constrained()[g] {
                assert_eq!(y1[g].to_bits(), y2[g].to_bits());
            }
        }
    }

    #[test]
    fn lift_dirichlet_values() {
        let mesh = build_cartesian(Rect::unit(), 2, 2).unwrap();
        let g = Arc::new(|x: f64, y: f64, t: f64| x + 10.0 * y + 100.0 * t);
        let op = SemOperator::new(
            Arc::new(mesh),
            Coefficients::laplace(),
            BoundaryCondition::DirichletLifted(g),
        )
        .unwrap();
        let lift = op.lift_dirichlet(0.5);
        for gn in 0..op.n_nodes() {
            let [x, y] = op.mesh.coords[gn];
            if op.constrained()[gn] {
                assert_relative_eq!(lift[gn], x + 10.0 * y + 50.0, epsilon = 1e-12);
            } else {
                assert_eq!(lift[gn], 0.0);
            }
        }
    }

    #[test]
    fn elliptic_projection_approximates_smooth_target() {
        use std::f64::consts::PI;
        let op = laplace_op(4, 3, BoundaryCondition::DirichletHomogeneous);
        let minus_lu = |x: f64, y: f64| 2.0 * PI * PI * (PI * x).sin() * (PI * y).sin();
        let cfg = KrylovConfig::with_tol(1e-13, 10 * op.n_nodes());
        let (proj, stats) = op.elliptic_projection(0.0, &minus_lu, &cfg).unwrap();
        assert!(stats.converged, "krylov stats: {stats:?}");
        let mut worst = 0.0f64;
        for g in 0..op.n_nodes() {
            let [x, y] = op.mesh.coords[g];
            let exact = (PI * x).sin() * (PI * y).sin();
            worst = worst.max((proj[g] - exact).abs());
        }
        assert!(worst < 2e-4, "projection error {worst}");
    }

    #[test]
    fn triplets_match_dense_probe() {
        let op = messy_op(2, 2);
        let nn = op.n_nodes();
        let trips = op.assemble_triplets(0.0, 0.25);
        let mut dense = vec![0.0; nn * nn];
        for (i, j, v) in trips {
            dense[i * nn + j] += v;
        }
        let apply = op.solve_apply(0.0, 0.25);
        let mut rng = crate::rng::SplitMix64::new(2);
        let u: Vec<f64> = (0..nn).map(|_| rng.next_symmetric()).collect();
        let mut want = vec![0.0; nn];
        apply(&u, &mut want);
        for i in 0..nn {
            let got: f64 = (0..nn).map(|j| dense[i * nn + j] * u[j]).sum();
            assert_relative_eq!(got, want[i], max_relative = 1e-12, epsilon = 1e-13);
        }
    }

    #[test]
    fn nonsymmetric_a_warns() {
        let mesh = build_cartesian(Rect::unit(), 2, 2).unwrap();
        let coeffs = Coefficients {
            a: Arc::new(|_, _, _| [[1.0, 0.5], [-0.5, 1.0]]),
            b: Arc::new(|_, _, _| [0.0, 0.0]),
            c: Arc::new(|_, _, _| 0.0),
            time_dependent: false,
        };
        let op = SemOperator::new(Arc::new(mesh), coeffs, BoundaryCondition::Neumann).unwrap();
        assert!(op.warnings().iter().any(|w| w.contains("non-symmetric")));
    }

    #[test]
    fn indefinite_a_warns() {
        let mesh = build_cartesian(Rect::unit(), 2, 2).unwrap();
        let coeffs = Coefficients {
            a: Arc::new(|x, _, _| [[x - 0.5, 0.0], [0.0, 1.0]]),
            b: Arc::new(|_, _, _| [0.0, 0.0]),
            c: Arc::new(|_, _, _| 0.0),
            time_dependent: false,
        };
        let op = SemOperator::new(Arc::new(mesh), coeffs, BoundaryCondition::Neumann).unwrap();
        assert!(op.warnings().iter().any(|w| w.contains("not positive definite")));
    }

    #[test]
    fn laplace_has_no_warnings() {
        let op = laplace_op(2, 2, BoundaryCondition::Neumann);
        assert!(op.warnings().is_empty(), "{:?}", op.warnings());
    }

    #[test]
    fn time_dependent_cache_refreshes() {
        let mesh = build_cartesian(Rect::unit(), 2, 2).unwrap();
        let coeffs = Coefficients {
            a: Arc::new(|_, _, t| [[1.0 + t, 0.0], [0.0, 1.0 + t]]),
            b: Arc::new(|_, _, _| [0.0, 0.0]),
            c: Arc::new(|_, _, _| 0.0),
            time_dependent: true,
        };
        let op = SemOperator::new(Arc::new(mesh), coeffs, BoundaryCondition::Neumann).unwrap();
        let nn = op.n_nodes();
        let u: Vec<f64> = (0..nn).map(|g| (g as f64 * 0.37).sin()).collect();
        let mut out0 = vec![0.0; nn];
        let mut out1 = vec![0.0; nn];
        op.apply_stiffness(0.0, &u, &mut out0).unwrap();
        op.apply_stiffness(1.0, &u, &mut out1).unwrap();
        // a doubled => action doubled
        for g in 0..nn {
            assert_relative_eq!(out1[g], 2.0 * out0[g], max_relative = 1e-12, epsilon = 1e-13);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let op = laplace_op(2, 2, BoundaryCondition::Neumann);
        let u = vec![0.0; 3];
        let mut out = vec![0.0; op.n_nodes()];
        assert!(matches!(
            op.apply_stiffness(0.0, &u, &mut out),
            Err(OperatorError::DimensionMismatch { .. })
        ));
    }

    /// Elliptic-projection superconvergence with every coefficient feature
    /// active at once: full SPD tensor (variable diagonal + smooth
    /// off-diagonal), convection, and reaction. Guards the
    /// variable-coefficient assembly paths that the Laplace tests cannot
    /// see; a consistency error in any channel drags the nodal rate toward
    /// two. Target u = sin x sin y on (0, pi)^2, k = 2, expected rate k + 2.
    #[test]
    fn elliptic_projection_superconverges_with_full_coefficients() {
        use std::f64::consts::PI;
        let coeffs = Coefficients {
            a: Arc::new(|x: f64, y: f64, _| {
                let g = 0.25 * x.sin() * y.sin();
                [[1.0 + y + y * y + x * y.cos(), g], [g, 1.0 + x * x]]
            }),
            b: Arc::new(|x: f64, y: f64, _| [0.2 + x, 0.2 - y]),
            c: Arc::new(|x: f64, y: f64, _| 10.0 + x.powi(4) * y.powi(3)),
            time_dependent: false,
        };
        let u = |x: f64, y: f64| x.sin() * y.sin();
        let lu = |x: f64, y: f64| {
            let (ux, uy) = (x.cos() * y.sin(), x.sin() * y.cos());
            let uxy = x.cos() * y.cos();
            let a11 = 1.0 + y + y * y + x * y.cos();
            let a22 = 1.0 + x * x;
            let a12 = 0.25 * x.sin() * y.sin();
            let (dx_a11, dy_a12) = (y.cos(), 0.25 * x.sin() * y.cos());
            let dx_a12 = 0.25 * x.cos() * y.sin();
            (a11 + a22) * u(x, y) - 2.0 * a12 * uxy
                - (dx_a11 + dy_a12) * ux
                - dx_a12 * uy
                + (0.2 + x) * ux
                + (0.2 - y) * uy
                + (10.0 + x.powi(4) * y.powi(3)) * u(x, y)
        };
        let rect = Rect { x0: 0.0, x1: PI, y0: 0.0, y1: PI };
        let mut errs = Vec::new();
        for n in [4usize, 8, 16] {
            let mesh = build_cartesian(rect, n, 2).unwrap();
            let h = mesh.h_norm();
            let op = SemOperator::new(
                Arc::new(mesh),
                coeffs.clone(),
                BoundaryCondition::DirichletHomogeneous,
            )
            .unwrap();
            let cfg = KrylovConfig::with_tol(1e-12, 40 * op.n_nodes());
            let (proj, stats) = op.elliptic_projection(0.0, &lu, &cfg).unwrap();
            assert!(stats.converged, "krylov stalled: {stats:?}");
            let mut ss = 0.0f64;
            for gn in 0..op.n_nodes() {
                let [x, y] = op.mesh.coords[gn];
                ss += (proj[gn] - u(x, y)).powi(2);
            }
            errs.push(h * ss.sqrt());
        }
        let rate = (errs[1] / errs[2]).log2();
        assert!(
            rate > 3.5,
            "variable-coefficient projection lost superconvergence: errors {errs:?}, rate {rate:.3}"
        );
        assert!(errs[2] < 5e-5, "absolute error too large: {errs:?}");
    }

    /// Diagnostic: elliptic-projection convergence with each operator
    /// feature isolated, to localize any loss of nodal superconvergence.
    /// Target u = sin x sin y on (0, pi)^2, homogeneous Dirichlet, k = 2;
    /// a correct assembly gives rate ~4 in the discrete 2-norm per case.
    #[test]
    #[ignore]
    fn diag_elliptic_feature_bisect() {
        use std::f64::consts::PI;
        let beta = 1.16247429980596111e-2;
        // the parabolic benchmark's off-diagonal shape and derivatives
        let g0 = move |x: f64, y: f64| {
            1.0 + 0.5 * ((PI * x).sin() + x * x * x) * ((PI * y).sin() + y * y * y)
                + (x.powi(4) + y.powi(3)).cos()
        };
        let g0x = move |x: f64, y: f64| {
            0.5 * (PI * (PI * x).cos() + 3.0 * x * x) * ((PI * y).sin() + y * y * y)
                - 4.0 * x.powi(3) * (x.powi(4) + y.powi(3)).sin()
        };
        let g0y = move |x: f64, y: f64| {
            0.5 * ((PI * x).sin() + x * x * x) * (PI * (PI * y).cos() + 3.0 * y * y)
                - 3.0 * y * y * (x.powi(4) + y.powi(3)).sin()
        };
        let u = |x: f64, y: f64| x.sin() * y.sin();
        let ux = |x: f64, y: f64| x.cos() * y.sin();
        let uy = |x: f64, y: f64| x.sin() * y.cos();
        let uxy = |x: f64, y: f64| x.cos() * y.cos();
        type Lu = Box<dyn Fn(f64, f64) -> f64>;
        let ident = || -> Arc<dyn Fn(f64, f64, f64) -> [[f64; 2]; 2] + Send + Sync> {
            Arc::new(|_, _, _| [[1.0, 0.0], [0.0, 1.0]])
        };
        let zero_b = || -> Arc<dyn Fn(f64, f64, f64) -> [f64; 2] + Send + Sync> {
            Arc::new(|_, _, _| [0.0, 0.0])
        };
        let zero_c =
            || -> Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync> { Arc::new(|_, _, _| 0.0) };
        let cases: Vec<(&str, Coefficients, Lu)> = vec![
            (
                "laplace",
                Coefficients {
                    a: ident(),
                    b: zero_b(),
                    c: zero_c(),
                    time_dependent: false,
                },
                Box::new(move |x, y| 2.0 * u(x, y)),
            ),
            (
                "diag-a",
                Coefficients {
                    a: Arc::new(|x, y, _| {
                        [[1.0 + y + y * y + x * y.cos(), 0.0], [0.0, 1.0 + x * x]]
                    }),
                    b: zero_b(),
                    c: zero_c(),
                    time_dependent: false,
                },
                Box::new(move |x, y| {
                    let a11 = 1.0 + y + y * y + x * y.cos();
                    let a22 = 1.0 + x * x;
                    (a11 + a22) * u(x, y) - y.cos() * ux(x, y)
                }),
            ),
            (
                "offdiag-parabolic-shape",
                Coefficients {
                    a: Arc::new(move |x, y, _| {
                        let g = beta * g0(x, y);
                        [[1.0, g], [g, 1.0]]
                    }),
                    b: zero_b(),
                    c: zero_c(),
                    time_dependent: false,
                },
                Box::new(move |x, y| {
                    2.0 * u(x, y)
                        - 2.0 * beta * g0(x, y) * uxy(x, y)
                        - beta * g0x(x, y) * uy(x, y)
                        - beta * g0y(x, y) * ux(x, y)
                }),
            ),
            (
                "offdiag-smooth-quarter",
                Coefficients {
                    a: Arc::new(|x, y, _| {
                        let g = 0.25 * x.sin() * y.sin();
                        [[1.0, g], [g, 1.0]]
                    }),
                    b: zero_b(),
                    c: zero_c(),
                    time_dependent: false,
                },
                Box::new(move |x, y| {
                    let g = 0.25 * x.sin() * y.sin();
                    let gx = 0.25 * x.cos() * y.sin();
                    let gy = 0.25 * x.sin() * y.cos();
                    2.0 * u(x, y) - 2.0 * g * uxy(x, y) - gx * uy(x, y) - gy * ux(x, y)
                }),
            ),
            (
                "convection",
                Coefficients {
                    a: ident(),
                    b: Arc::new(|x, y, _| [0.2 + x, 0.2 - y]),
                    c: zero_c(),
                    time_dependent: false,
                },
                Box::new(move |x, y| {
                    2.0 * u(x, y) + (0.2 + x) * ux(x, y) + (0.2 - y) * uy(x, y)
                }),
            ),
            (
                "reaction",
                Coefficients {
                    a: ident(),
                    b: zero_b(),
                    c: Arc::new(|x, y, _| 10.0 + x.powi(4) * y.powi(3)),
                    time_dependent: false,
                },
                Box::new(move |x, y| (2.0 + 10.0 + x.powi(4) * y.powi(3)) * u(x, y)),
            ),
        ];
        let rect = Rect { x0: 0.0, x1: PI, y0: 0.0, y1: PI };
        for (name, coeffs, lu) in &cases {
            let mut prev: Option<f64> = None;
            for n in [4usize, 8, 16, 32] {
                let mesh = build_cartesian(rect, n, 2).unwrap();
                let h = mesh.h_norm();
                let op = SemOperator::new(
                    Arc::new(mesh),
                    coeffs.clone(),
                    BoundaryCondition::DirichletHomogeneous,
                )
                .unwrap();
                let cfg = KrylovConfig::with_tol(1e-12, 40 * op.n_nodes());
                let (proj, stats) = op.elliptic_projection(0.0, lu, &cfg).unwrap();
                let mut ss = 0.0f64;
                for gn in 0..op.n_nodes() {
                    let [x, y] = op.mesh.coords[gn];
                    let e = proj[gn] - u(x, y);
                    ss += e * e;
                }
                let l2 = h * ss.sqrt();
                let rate = prev.map(|p: f64| (p / l2).log2()).unwrap_or(f64::NAN);
                println!(
                    "{name:>24} n={n:>2} l2={l2:.6e} rate={rate:.3} iters={} conv={}",
                    stats.iterations, stats.converged
                );
                prev = Some(l2);
            }
        }
    }
}
