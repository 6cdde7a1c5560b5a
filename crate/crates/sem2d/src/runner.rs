//! Configuration-driven convergence studies.
//!
//! A [`RunConfig`] names a benchmark problem, a polynomial degree, a mesh
//! family and a refinement list; [`run`] executes every level (build mesh →
//! build operator → initial data → integrate to `T` → error norms) and emits
//! one CSV per study plus a human-readable rate table. [`run_suite`] executes
//! the whole benchmark matrix with desk-scale level caps.
//!
//! Everything here is deterministic: fixed seeds, fixed summation order, no
//! wall-clock output. Re-running an identical config reproduces every output
//! file byte for byte, independent of the rayon thread count.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::analysis::{discrete_l2, discrete_linf, ErrorReport, LevelRow, NormSeries};
use crate::gll::MAX_DEGREE;
use crate::krylov::KrylovConfig;
use crate::mesh::{
    build_annulus, build_cartesian, map_smooth, perturb_random, AnnulusVariant, Mesh,
};
use crate::operator::SemOperator;
use crate::problems::{Domain, DtRule, InitialRule, PdeKind, Problem};
use crate::rng::SplitMix64;
use crate::timeint::{ab4_start, ab4_step, bdf3_self_start, bdf3_step, wave_start, wave_step,
    Bdf3State};
use crate::{Error, Field, Result};

/// Fraction of the half cell edge used by the random-perturbation family.
pub const RANDOM_FRACTION: f64 = 0.25;
/// Cap on recorded error samples for the implicit/AB4 runs (wave samples
/// every step; see the analysis-module conventions).
pub const MAX_ERROR_SAMPLES: usize = 2000;

// ---------------------------------------------------------------------------
// mesh family selection
// ---------------------------------------------------------------------------

/// Mesh family requested by name. `Auto` defers to the problem's domain
/// (Cartesian on rectangles, curvilinear on the annulus).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilySpec {
    Auto,
    Cartesian,
    Random,
    Smooth,
    Annulus(AnnulusVariant),
}

impl FamilySpec {
    pub fn parse(name: &str) -> Result<FamilySpec> {
        Ok(match name {
            "auto" => FamilySpec::Auto,
            "cartesian" => FamilySpec::Cartesian,
            "random" => FamilySpec::Random,
            "smooth" => FamilySpec::Smooth,
            "annulus:straight" => FamilySpec::Annulus(AnnulusVariant::Straight),
            "annulus:curvilinear" => FamilySpec::Annulus(AnnulusVariant::Curvilinear),
            "annulus:mixed" => {
                FamilySpec::Annulus(AnnulusVariant::CurvedBoundaryStraightInterior)
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown mesh family '{other}' (expected cartesian | random | smooth | \
                     annulus:straight | annulus:curvilinear | annulus:mixed)"
                )))
            }
        })
    }

    /// Resolve `Auto` against the problem's domain and check compatibility.
    pub fn resolve(self, problem: &Problem) -> Result<FamilySpec> {
        let is_annulus = matches!(problem.domain, Domain::Annulus { .. });
        let resolved = match self {
            FamilySpec::Auto => {
                if is_annulus {
                    FamilySpec::Annulus(AnnulusVariant::Curvilinear)
                } else {
                    FamilySpec::Cartesian
                }
            }
            other => other,
        };
        let ok = match resolved {
            FamilySpec::Annulus(_) => is_annulus,
            FamilySpec::Auto => unreachable!(),
            _ => !is_annulus,
        };
        if !ok {
            return Err(Error::Config(format!(
                "mesh family {} does not apply to problem '{}'",
                resolved.name(),
                problem.name
            )));
        }
        Ok(resolved)
    }

    pub fn name(self) -> &'static str {
        match self {
            FamilySpec::Auto => "auto",
            FamilySpec::Cartesian => "cartesian",
            FamilySpec::Random => "random",
            FamilySpec::Smooth => "smooth",
            FamilySpec::Annulus(AnnulusVariant::Straight) => "annulus:straight",
            FamilySpec::Annulus(AnnulusVariant::Curvilinear) => "annulus:curvilinear",
            FamilySpec::Annulus(AnnulusVariant::CurvedBoundaryStraightInterior) => {
                "annulus:mixed"
            }
        }
    }

    /// Build the mesh for one refinement level of `problem`.
    pub fn build(self, problem: &Problem, n: usize, k: usize, seed: u64) -> Result<Mesh> {
        match (self, problem.domain) {
            (FamilySpec::Cartesian, Domain::Rect(r)) => Ok(build_cartesian(r, n, k)?),
            (FamilySpec::Random, Domain::Rect(r)) => {
                let base = build_cartesian(r, n, k)?;
                Ok(perturb_random(&base, RANDOM_FRACTION, seed)?)
            }
            (FamilySpec::Smooth, Domain::Rect(r)) => {
                let base = build_cartesian(r, n, k)?;
                Ok(map_smooth(&base)?)
            }
            (FamilySpec::Annulus(v), Domain::Annulus { r_inner, r_outer }) => {
                Ok(build_annulus(r_inner, r_outer, n, k, v)?)
            }
            _ => Err(Error::Config(format!(
                "mesh family {} does not apply to problem '{}'",
                self.name(),
                problem.name
            ))),
        }
    }
}

// ---------------------------------------------------------------------------
// run configuration
// ---------------------------------------------------------------------------

/// One convergence study: problem × degree × mesh family × refinement list.
///
/// Built from a flat `key=value` config file and/or CLI flag overrides (the
/// flags win, in the order they are applied).
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: String,
    pub k: usize,
    pub mesh: FamilySpec,
    pub levels: Vec<usize>,
    pub seed: u64,
    /// Wave time order override (4 or 6); `None` picks 4 for k <= 3, 6 above.
    pub order: Option<usize>,
    pub initial: Option<InitialRule>,
    pub out_dir: PathBuf,
    /// Also write a gnuplot log-log script next to the CSV.
    pub gnuplot: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: "square-dirichlet".to_string(),
            k: 2,
            mesh: FamilySpec::Auto,
            levels: vec![4, 8, 16],
            seed: 42,
            order: None,
            initial: None,
            out_dir: PathBuf::from("out"),
            gnuplot: false,
        }
    }
}

impl RunConfig {
    /// Apply one `key=value` pair (config-file line or CLI flag).
    pub fn apply_pair(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("bad value '{value}' for key '{what}'"));
        match key {
            "problem" => self.problem = value.to_string(),
            "k" => self.k = value.parse().map_err(|_| bad("k"))?,
            "mesh" => self.mesh = FamilySpec::parse(value)?,
            "levels" => {
                let mut levels = Vec::new();
                for tok in value.split(',') {
                    let tok = tok.trim();
                    if tok.is_empty() {
                        continue;
                    }
                    levels.push(tok.parse().map_err(|_| bad("levels"))?);
                }
                self.levels = levels;
            }
            "seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
            "order" => self.order = Some(value.parse().map_err(|_| bad("order"))?),
            "initial" => {
                self.initial = Some(match value {
                    "interpolant" => InitialRule::Interpolant,
                    "elliptic-projection" => InitialRule::EllipticProjection,
                    _ => return Err(bad("initial")),
                })
            }
            "out_dir" => self.out_dir = PathBuf::from(value),
            "gnuplot" => self.gnuplot = value.parse().map_err(|_| bad("gnuplot"))?,
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Parse a flat `key = value` config file (`#` comments, blank lines ok).
    pub fn apply_config_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "{}:{}: expected 'key = value', got '{raw}'",
                    path.display(),
                    lineno + 1
                ))
            })?;
            self.apply_pair(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=MAX_DEGREE).contains(&self.k) {
            return Err(Error::Config(format!(
                "k must be in 2..={MAX_DEGREE}, got {}",
                self.k
            )));
        }
        if self.levels.is_empty() {
            return Err(Error::Config("refinement list is empty".into()));
        }
        if !self.levels.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config(format!(
                "refinement list must be strictly ascending, got {:?}",
                self.levels
            )));
        }
        if let Some(o) = self.order {
            if o != 4 && o != 6 {
                return Err(Error::Config(format!("order must be 4 or 6, got {o}")));
            }
        }
        Problem::by_name(&self.problem)?;
        Ok(())
    }

    /// Output file stem: `<problem>_k<k>_<mesh>` with `:` sanitized.
    pub fn file_stem(&self, resolved_mesh: FamilySpec) -> String {
        format!(
            "{}_k{}_{}",
            self.problem,
            self.k,
            resolved_mesh.name().replace(':', "-")
        )
    }
}

// ---------------------------------------------------------------------------
// time-step selection
// ---------------------------------------------------------------------------

/// Apply the problem's time-step rule on one mesh, then round the step count
/// up so the final step lands exactly on `t_end`.
pub fn dt_and_steps(problem: &Problem, mesh: &Mesh, k: usize, n: usize) -> (f64, usize) {
    let edge = match problem.domain {
        Domain::Rect(r) => r.x1 - r.x0,
        Domain::Annulus { r_inner, r_outer } => r_outer - r_inner,
    };
    let dx = edge / (k * n) as f64; // degree-of-freedom spacing
    let (raw, min_steps) = match problem.dt_rule {
        DtRule::WaveCfl { coeff, a_max } => {
            (coeff * mesh.min_node_gap / ((k * k) as f64 * a_max.sqrt()), 2)
        }
        DtRule::ParabolicRule { b_max, f_max } => {
            ((dx / 10.0).min(dx / (10.0 * b_max)).min(f_max / 10.0), 3)
        }
        DtRule::SchrodingerRule { scale } => (dx * dx / scale, 4),
    };
    let steps = ((problem.t_end / raw - 1e-12).ceil() as usize).max(min_steps);
    (problem.t_end / steps as f64, steps)
}

// ---------------------------------------------------------------------------
// separable exact-solution profile (cheap per-step error sampling)
// ---------------------------------------------------------------------------

/// Spatially factorized exact solution `u(x, y, t) = S(x, y) * tau(t)`.
///
/// Every benchmark's exact solution separates; the factorization is verified
/// by sampling before use, and the caller falls back to direct closure
/// evaluation when verification fails. `S` holds the nodal values at `t = 0`,
/// `tau` tracks the exact solution at a reference node.
pub struct RealProfile {
    pub s: Vec<f64>,
    tau: Box<dyn Fn(f64) -> f64>,
}

impl RealProfile {
    pub fn tau(&self, t: f64) -> f64 {
        (self.tau)(t)
    }
}

fn real_profile(problem: &Problem, mesh: &Mesh) -> Option<RealProfile> {
    let nn = mesh.n_nodes();
    let mut s = Vec::with_capacity(nn);
    let mut g_star = 0usize;
    let mut best = 0.0f64;
    for (g, &[x, y]) in mesh.coords.iter().enumerate() {
        let v = problem.exact_re(x, y, 0.0);
        if v.abs() > best {
            best = v.abs();
            g_star = g;
        }
        s.push(v);
    }
    if best < 1e-8 {
        return None;
    }
    let [xr, yr] = mesh.coords[g_star];
    let s_star = s[g_star];
    let u = problem.exact.u.clone();
    let tau = move |t: f64| u(xr, yr, t).re / s_star;
    // verify the factorization at pseudo-random nodes and times
    let mut rng = SplitMix64::new(0x5E9A_12F0_77AA_31C4);
    for _ in 0..48 {
        let g = (rng.next_u64() % nn as u64) as usize;
        let t = rng.next_unit() * problem.t_end;
        let [x, y] = mesh.coords[g];
        let direct = problem.exact_re(x, y, t);
        if (direct - s[g] * tau(t)).abs() > 1e-11 * best.max(1.0) {
            return None;
        }
    }
    Some(RealProfile { s, tau: Box::new(tau) })
}

/// Error-norm sampler for the real-valued runs: uses the separable profile
/// when it verifies, otherwise evaluates the exact closure per node.
struct ErrSampler<'a> {
    problem: &'a Problem,
    mesh: &'a Mesh,
    profile: Option<RealProfile>,
    scratch: Vec<f64>,
}

impl<'a> ErrSampler<'a> {
    fn new(problem: &'a Problem, mesh: &'a Mesh) -> Self {
        let profile = real_profile(problem, mesh);
        ErrSampler { problem, mesh, profile, scratch: vec![0.0; mesh.n_nodes()] }
    }

    fn sample(&mut self, t: f64, u: &[f64]) -> (f64, f64) {
        let ErrSampler { problem, mesh, profile, scratch } = self;
        match profile {
            Some(p) => {
                let tau = p.tau(t);
                for (e, (&ui, &si)) in scratch.iter_mut().zip(u.iter().zip(&p.s)) {
                    *e = ui - si * tau;
                }
            }
            None => {
                for (g, e) in scratch.iter_mut().enumerate() {
                    let [x, y] = mesh.coords[g];
                    *e = u[g] - problem.exact_re(x, y, t);
                }
            }
        }
        (discrete_l2(scratch, mesh), discrete_linf(scratch))
    }
}

/// Uniform sampling stride that keeps at most [`MAX_ERROR_SAMPLES`] samples.
fn sample_stride(steps: usize) -> usize {
    steps.div_ceil(MAX_ERROR_SAMPLES).max(1)
}

// ---------------------------------------------------------------------------
// per-PDE evolution loops
// ---------------------------------------------------------------------------

fn interpolant(mesh: &Mesh, f: impl Fn(f64, f64) -> f64) -> Field {
    mesh.coords.iter().map(|&[x, y]| f(x, y)).collect()
}

/// Wave benchmark: two-step Taylor scheme of the given order on
/// `u_tt = -M^{-1} A u` (all wave benchmarks have `f = 0` and homogeneous
/// boundary data). Errors are recorded every step.
fn run_wave(
    problem: &Problem,
    op: &SemOperator,
    mesh: &Mesh,
    dt: f64,
    steps: usize,
    order: usize,
) -> Result<NormSeries> {
    if !problem.forcing_is_zero {
        return Err(Error::Config(format!(
            "wave runner requires f = 0 (problem '{}')",
            problem.name
        )));
    }
    if problem.boundary_data.is_some() {
        return Err(Error::Config(format!(
            "wave runner requires homogeneous boundary data (problem '{}')",
            problem.name
        )));
    }
    let nn = op.n_nodes();
    let mass = op.mass_diagonal();
    let constrained = op.constrained();
    let mut u0 = interpolant(mesh, |x, y| problem.exact_re(x, y, 0.0));
    let mut v0 = interpolant(mesh, |x, y| (problem.exact.u_t)(x, y, 0.0).re);
    for g in 0..nn {
        if constrained[g] {
            u0[g] = 0.0;
            v0[g] = 0.0;
        }
    }
    let mut q = |u: &[f64], out: &mut [f64]| {
        op.apply_interior(0.0, u, out).expect("wave stiffness apply");
        for g in 0..nn {
            out[g] = -out[g] / mass[g];
        }
    };
    let mut state = wave_start(&u0, &v0, 0.0, dt, order, &mut q)?;
    let mut sampler = ErrSampler::new(problem, mesh);
    let mut series = NormSeries::default();
    let (l2, linf) = sampler.sample(0.0, &state.u);
    series.push(0.0, l2, linf);
    for _ in 0..steps {
        wave_step(&mut state, &mut q);
        let (l2, linf) = sampler.sample(state.t, &state.u);
        series.push(state.t, l2, linf);
    }
    Ok(series)
}

/// Parabolic benchmark: BDF3 with exact-history startup (benchmark mode) or
/// elliptic-projection initial data plus Richardson/BDF2 self-start.
fn run_parabolic(
    problem: &Problem,
    op: &SemOperator,
    mesh: &Mesh,
    dt: f64,
    steps: usize,
    initial: InitialRule,
) -> Result<NormSeries> {
    let nn = op.n_nodes();
    let coords = mesh.coords.clone();
    let forcing = problem.forcing.clone();
    let mut f_nodal = move |t: f64, buf: &mut [f64]| {
        for (g, b) in buf.iter_mut().enumerate() {
            let [x, y] = coords[g];
            *b = forcing(x, y, t).re;
        }
    };
    let cfg = KrylovConfig::default_for(nn);
    let mut sampler = ErrSampler::new(problem, mesh);
    let mut series = NormSeries::default();
    let push = |sampler: &mut ErrSampler, t: f64, u: &[f64], series: &mut NormSeries| {
        let (l2, linf) = sampler.sample(t, u);
        series.push(t, l2, linf);
    };

    let mut state = match initial {
        InitialRule::Interpolant => {
            // benchmark mode: seed the three-level history with the exact
            // solution so no startup error pollutes the temporal order
            let lv = |t: f64| interpolant(mesh, |x, y| problem.exact_re(x, y, t));
            let (u2, u1, u) = (lv(0.0), lv(dt), lv(2.0 * dt));
            push(&mut sampler, 0.0, &u2, &mut series);
            push(&mut sampler, dt, &u1, &mut series);
            push(&mut sampler, 2.0 * dt, &u, &mut series);
            Bdf3State::from_history(u, u1, u2, 2.0 * dt, dt)
        }
        InitialRule::EllipticProjection => {
            let u_t0 = problem.exact.u_t.clone();
            let f0 = problem.forcing.clone();
            // u_t + Lu = f at t = 0  =>  (Lu)(x, y, 0) = f - u_t
            let lu = move |x: f64, y: f64| (f0(x, y, 0.0) - u_t0(x, y, 0.0)).re;
            let (u0, _) = op.elliptic_projection(0.0, &lu, &cfg)?;
            push(&mut sampler, 0.0, &u0, &mut series);
            let st = bdf3_self_start(u0, 0.0, dt, op, &mut f_nodal, &cfg)?;
            push(&mut sampler, dt, &st.u1, &mut series);
            push(&mut sampler, 2.0 * dt, &st.u, &mut series);
            st
        }
    };

    let stride = sample_stride(steps);
    for step in 3..=steps {
        bdf3_step(&mut state, op, &mut f_nodal, &cfg)?;
        if step % stride == 0 || step == steps {
            push(&mut sampler, state.t, &state.u, &mut series);
        }
    }
    Ok(series)
}

/// Verify that a space-time closure separates as `v(x, y, t) =
/// e^{-it} v(x, y, 0)` with real `v(., ., 0)`, sampling the domain.
fn verify_phase_separable(
    what: &str,
    v: &crate::problems::ScalarFn,
    domain: &Domain,
    t_end: f64,
) -> Result<()> {
    let Domain::Rect(r) = domain else {
        return Err(Error::Config(
            "schrodinger runner supports rectangle domains only".into(),
        ));
    };
    let mut rng = SplitMix64::new(0x9A55_E77E_C0FF_EE01);
    for _ in 0..16 {
        let x = r.x0 + (r.x1 - r.x0) * rng.next_unit();
        let y = r.y0 + (r.y1 - r.y0) * rng.next_unit();
        let t = t_end * rng.next_unit();
        let v0 = v(x, y, 0.0);
        if v0.im.abs() > 1e-13 {
            return Err(Error::Config(format!(
                "schrodinger fast path needs real {what} at t = 0; found Im = {:.3e}",
                v0.im
            )));
        }
        let phase = num_complex::Complex64::new(t.cos(), -t.sin());
        let diff = (v(x, y, t) - phase * v0).norm();
        if diff > 1e-12 * (1.0 + v0.norm()) {
            return Err(Error::Config(format!(
                "schrodinger fast path needs e^{{-it}}-separable {what}; \
                 deviation {diff:.3e} at ({x:.3}, {y:.3}, {t:.3})"
            )));
        }
    }
    Ok(())
}

/// Schrodinger benchmark: AB4 on the phase-lifted interior system.
///
/// With `u = w + e^{-it} G` (G the boundary lift, zero at interior nodes) and
/// separable forcing `f = e^{-it} f_0`, the interior rows obey
/// `i w_t = M^{-1} A w + e^{-it} v_0`, `v_0 = (M^{-1} A G + f_0)`, and `w`
/// vanishes identically on the boundary. Splitting `w = p + i q`:
/// `p' = M^{-1}(A q) - sin(t) v_0`, `q' = -M^{-1}(A p) - cos(t) v_0`.
fn run_schrodinger(
    problem: &Problem,
    op: &SemOperator,
    mesh: &Mesh,
    dt: f64,
    steps: usize,
) -> Result<NormSeries> {
    if let Some(g) = &problem.boundary_data {
        verify_phase_separable("boundary data", g, &problem.domain, problem.t_end)?;
    }
    if !problem.forcing_is_zero {
        verify_phase_separable("forcing", &problem.forcing, &problem.domain, problem.t_end)?;
    }
    let nn = op.n_nodes();
    let mass = op.mass_diagonal().to_vec();
    let constrained = op.constrained().to_vec();
    let lift = op.lift_dirichlet(0.0);

    // v0 = M^{-1} (A G)_interior + f(., 0), zero at constrained rows
    let mut v0 = vec![0.0; nn];
    op.apply_interior(0.0, &lift, &mut v0)?;
    for g in 0..nn {
        if constrained[g] {
            v0[g] = 0.0;
        } else {
            let [x, y] = mesh.coords[g];
            v0[g] = v0[g] / mass[g] + (problem.forcing)(x, y, 0.0).re;
        }
    }

    // profile of the error representation: err(t) = w - e^{-it} s
    let s_prof: Vec<f64> = mesh
        .coords
        .iter()
        .enumerate()
        .map(|(g, &[x, y])| (problem.exact.u)(x, y, 0.0).re - lift[g])
        .collect();

    // state: interleaved [p, q], boundary rows pinned at zero
    let mut y0 = vec![0.0; 2 * nn];
    for g in 0..nn {
        if !constrained[g] {
            y0[2 * g] = s_prof[g];
        }
    }

    let op_ref = op;
    let mut aw = vec![0.0; 2 * nn];
    let mut rhs = move |t: f64, y: &[f64], out: &mut [f64]| {
        op_ref.apply_interior_c(0.0, y, &mut aw).expect("schrodinger stiffness apply");
        let (st, ct) = t.sin_cos();
        for g in 0..nn {
            if constrained[g] {
                out[2 * g] = 0.0;
                out[2 * g + 1] = 0.0;
            } else {
                out[2 * g] = aw[2 * g + 1] / mass[g] - st * v0[g];
                out[2 * g + 1] = -aw[2 * g] / mass[g] - ct * v0[g];
            }
        }
    };

    let h = mesh.h_norm();
    let sample = |t: f64, y: &[f64]| -> (f64, f64) {
        let (st, ct) = t.sin_cos();
        let mut ss = 0.0f64;
        let mut mx = 0.0f64;
        for g in 0..nn {
            let re = y[2 * g] - s_prof[g] * ct;
            let im = y[2 * g + 1] + s_prof[g] * st;
            let m2 = re * re + im * im;
            ss += m2;
            mx = mx.max(m2);
        }
        (h * ss.sqrt(), mx.sqrt())
    };

    let mut series = NormSeries::default();
    let (l2, linf) = sample(0.0, &y0);
    series.push(0.0, l2, linf);
    let mut state = ab4_start(y0, 0.0, dt, &mut rhs);
    let stride = sample_stride(steps);
    if 3 % stride == 0 || steps == 3 {
        let (l2, linf) = sample(state.t, &state.y);
        series.push(state.t, l2, linf);
    }
    for step in 4..=steps {
        ab4_step(&mut state, &mut rhs);
        if step % stride == 0 || step == steps {
            let (l2, linf) = sample(state.t, &state.y);
            series.push(state.t, l2, linf);
        }
    }
    Ok(series)
}

// ---------------------------------------------------------------------------
// single study
// ---------------------------------------------------------------------------

/// Everything `run` produced: the report, the CSV text, where it was written,
/// and the meta lines (problem notes, operator warnings, per-level dt/steps).
#[derive(Debug)]
pub struct RunOutput {
    pub report: ErrorReport,
    pub meta: Vec<String>,
    pub csv: String,
    pub csv_path: PathBuf,
    pub gnuplot_path: Option<PathBuf>,
}

/// Execute one convergence study and write its CSV (and optional gnuplot
/// script) under `cfg.out_dir`.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let problem = Problem::by_name(&cfg.problem)?;
    let family = cfg.mesh.resolve(&problem)?;
    let order = cfg.order.unwrap_or(if cfg.k >= 4 { 6 } else { 4 });
    let initial = cfg.initial.unwrap_or(problem.initial);

    let mut meta = vec![
        format!("problem={}", problem.name),
        format!("k={}", cfg.k),
        format!("mesh={}", family.name()),
        format!(
            "levels={}",
            cfg.levels.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")
        ),
        format!("seed={}", cfg.seed),
    ];
    match problem.pde {
        PdeKind::Wave => meta.push(format!("time_scheme=taylor-two-step order={order}")),
        PdeKind::Parabolic => meta.push(format!(
            "time_scheme=bdf3 initial={}",
            match initial {
                InitialRule::Interpolant => "exact-history",
                InitialRule::EllipticProjection => "elliptic-projection+self-start",
            }
        )),
        PdeKind::Schrodinger => meta.push("time_scheme=ab4 (rk4 start, phase-lifted)".into()),
    }
    for note in &problem.notes {
        meta.push(format!("note={note}"));
    }

    let mut report = ErrorReport::default();
    for (level, &n) in cfg.levels.iter().enumerate() {
        let tag = |e: Error| Error::Config(format!("level {level} (n={n}): {e}"));
        let mesh = Arc::new(family.build(&problem, n, cfg.k, cfg.seed).map_err(&tag)?);
        let op = SemOperator::new(
            Arc::clone(&mesh),
            problem.coeffs.clone(),
            problem.boundary_condition(),
        )
        .map_err(|e| tag(e.into()))?;
        for w in op.warnings() {
            let line = format!("warning(level {level})={w}");
            if !meta.contains(&line) {
                meta.push(line);
            }
        }
        let (dt, steps) = dt_and_steps(&problem, &mesh, cfg.k, n);
        meta.push(format!("level {level}: n={n} dt={dt:.12e} steps={steps}"));
        let series = match problem.pde {
            PdeKind::Wave => run_wave(&problem, &op, &mesh, dt, steps, order),
            PdeKind::Parabolic => run_parabolic(&problem, &op, &mesh, dt, steps, initial),
            PdeKind::Schrodinger => run_schrodinger(&problem, &op, &mesh, dt, steps),
        }
        .map_err(&tag)?;
        let last = series.ts.len() - 1;
        report.push(LevelRow {
            level,
            n,
            h: mesh.h_norm(),
            l2: series.l2[last],
            linf: series.linf[last],
            ti_l2: series.ti_l2(),
            ti_linf: series.ti_linf(),
        });
    }

    let csv = report.to_csv(&meta);
    std::fs::create_dir_all(&cfg.out_dir)?;
    let stem = cfg.file_stem(family);
    let csv_path = cfg.out_dir.join(format!("{stem}.csv"));
    std::fs::write(&csv_path, &csv)?;
    let gnuplot_path = if cfg.gnuplot {
        let gp = crate::analysis::gnuplot_script(
            &[csv_path.display().to_string()],
            &stem,
            (cfg.k + 2) as f64,
        );
        let gp_path = cfg.out_dir.join(format!("{stem}.gp"));
        std::fs::write(&gp_path, gp)?;
        Some(gp_path)
    } else {
        None
    };
    Ok(RunOutput { report, meta, csv, csv_path, gnuplot_path })
}

/// Human-readable rate table for stdout.
pub fn render_table(report: &ErrorReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>5} {:>6} {:>13} {:>13} {:>8} {:>13} {:>8} {:>13} {:>13}",
        "level", "n", "h", "l2(T)", "rate", "linf(T)", "rate", "ti_l2", "ti_linf"
    );
    let rl2 = report.rates_l2().pairwise;
    let rli = report.rates_linf().pairwise;
    for (i, r) in report.rows.iter().enumerate() {
        let fr = |v: f64| if v.is_nan() { "-".into() } else { format!("{v:.3}") };
        let (a, b) = if i == 0 {
            (f64::NAN, f64::NAN)
        } else {
            (rl2[i - 1], rli[i - 1])
        };
        let _ = writeln!(
            out,
            "{:>5} {:>6} {:>13.4e} {:>13.4e} {:>8} {:>13.4e} {:>8} {:>13.4e} {:>13.4e}",
            r.level,
            r.n,
            r.h,
            r.l2,
            fr(a),
            r.linf,
            fr(b),
            r.ti_l2,
            r.ti_linf
        );
    }
    let _ = writeln!(
        out,
        "least-squares slopes: l2 {:.3}, linf {:.3}, ti_l2 {:.3}, ti_linf {:.3}",
        report.rates_l2().ls_slope,
        report.rates_linf().ls_slope,
        report.rates_ti_l2().ls_slope,
        report.rates_ti_linf().ls_slope
    );
    out
}

// ---------------------------------------------------------------------------
// conservation probes
// ---------------------------------------------------------------------------

/// Discrete-energy history of an `f = 0` wave run.
#[derive(Debug, Clone)]
pub struct EnergyProbe {
    pub ts: Vec<f64>,
    pub energy: Vec<f64>,
    /// max |E - E_ref| / |E_ref| over the sampled interior steps.
    pub rel_drift: f64,
}

/// Run the Dirichlet square mode at (n, k) and track the discrete energy
/// `E = 1/2 <v, v>_M + 1/2 u^T A u` with the fourth-order central velocity
/// proxy `v^m = (u^{m-2} - 8 u^{m-1} + 8 u^{m+1} - u^{m+2}) / (12 dt)`
/// (a five-level ring buffer; the first and last two steps carry no sample).
pub fn wave_energy_probe(n: usize, k: usize) -> Result<EnergyProbe> {
    let problem = crate::problems::square_mode(crate::problems::BcKind::Dirichlet)?;
    let mesh = Arc::new(FamilySpec::Cartesian.build(&problem, n, k, 0)?);
    let op = SemOperator::new(
        Arc::clone(&mesh),
        problem.coeffs.clone(),
        problem.boundary_condition(),
    )?;
    let (dt, steps) = dt_and_steps(&problem, &mesh, k, n);
    let nn = op.n_nodes();
    let mass = op.mass_diagonal();
    let constrained = op.constrained();
    let mut u0 = interpolant(&mesh, |x, y| problem.exact_re(x, y, 0.0));
    let mut v0 = interpolant(&mesh, |x, y| (problem.exact.u_t)(x, y, 0.0).re);
    for g in 0..nn {
        if constrained[g] {
            u0[g] = 0.0;
            v0[g] = 0.0;
        }
    }
    let order = if k >= 4 { 6 } else { 4 };
    let mut q = |u: &[f64], out: &mut [f64]| {
        op.apply_interior(0.0, u, out).expect("wave stiffness apply");
        for g in 0..nn {
            out[g] = -out[g] / mass[g];
        }
    };
    let mut state = wave_start(&u0, &v0, 0.0, dt, order, &mut q)?;

    let mut ring: std::collections::VecDeque<(f64, Vec<f64>)> =
        std::collections::VecDeque::with_capacity(5);
    ring.push_back((0.0, state.u.clone()));
    let mut ts = Vec::new();
    let mut energy = Vec::new();
    let mut au = vec![0.0; nn];
    let mut vel = vec![0.0; nn];
    for _ in 0..steps {
        wave_step(&mut state, &mut q);
        ring.push_back((state.t, state.u.clone()));
        if ring.len() == 5 {
            let (tc, uc) = (&ring[2].0, &ring[2].1);
            for g in 0..nn {
                vel[g] = (ring[0].1[g] - 8.0 * ring[1].1[g] + 8.0 * ring[3].1[g]
                    - ring[4].1[g])
                    / (12.0 * dt);
            }
            op.apply_interior(0.0, uc, &mut au)?;
            let mut kin = 0.0;
            let mut pot = 0.0;
            for g in 0..nn {
                kin += mass[g] * vel[g] * vel[g];
                pot += uc[g] * au[g];
            }
            ts.push(*tc);
            energy.push(0.5 * (kin + pot));
            ring.pop_front();
        }
    }
    let e_ref = energy.first().copied().ok_or_else(|| {
        Error::Config("energy probe needs at least 5 time levels".into())
    })?;
    let rel_drift = energy
        .iter()
        .map(|e| (e - e_ref).abs() / e_ref.abs())
        .fold(0.0f64, f64::max);
    Ok(EnergyProbe { ts, energy, rel_drift })
}

/// Mass-weighted l2 norm history of a literal `f = 0` Schrodinger evolution
/// with homogeneous Dirichlet walls (the only setting where the invariant
/// exists; the initial Gaussian is interpolated and clamped to zero on the
/// boundary).
#[derive(Debug, Clone)]
pub struct NormProbe {
    pub ts: Vec<f64>,
    pub norm: Vec<f64>,
    pub rel_drift: f64,
}

pub fn schrodinger_norm_probe(n: usize, k: usize) -> Result<NormProbe> {
    let problem = crate::problems::schrodinger_harmonic()?;
    let mesh = Arc::new(FamilySpec::Cartesian.build(&problem, n, k, 0)?);
    let op = SemOperator::new(
        Arc::clone(&mesh),
        problem.coeffs.clone(),
        crate::operator::BoundaryCondition::DirichletHomogeneous,
    )?;
    let (dt, steps) = dt_and_steps(&problem, &mesh, k, n);
    let nn = op.n_nodes();
    let mass = op.mass_diagonal().to_vec();
    let constrained = op.constrained().to_vec();

    let mut y0 = vec![0.0; 2 * nn];
    for (g, &[x, y]) in mesh.coords.iter().enumerate() {
        if !constrained[g] {
            y0[2 * g] = (problem.exact.u)(x, y, 0.0).re;
        }
    }
    let op_ref = &op;
    let mass_rhs = mass.clone();
    let constrained_rhs = constrained.clone();
    let mut aw = vec![0.0; 2 * nn];
    let mut rhs = move |_t: f64, y: &[f64], out: &mut [f64]| {
        op_ref.apply_interior_c(0.0, y, &mut aw).expect("schrodinger stiffness apply");
        for g in 0..nn {
            if constrained_rhs[g] {
                out[2 * g] = 0.0;
                out[2 * g + 1] = 0.0;
            } else {
                out[2 * g] = aw[2 * g + 1] / mass_rhs[g];
                out[2 * g + 1] = -aw[2 * g] / mass_rhs[g];
            }
        }
    };
    let m_norm = |y: &[f64]| -> f64 {
        let mut s = 0.0;
        for g in 0..nn {
            s += mass[g] * (y[2 * g] * y[2 * g] + y[2 * g + 1] * y[2 * g + 1]);
        }
        s.sqrt()
    };

    let mut ts = vec![0.0];
    let mut norm = vec![m_norm(&y0)];
    let mut state = ab4_start(y0, 0.0, dt, &mut rhs);
    const EVERY: usize = 128;
    for step in 4..=steps {
        ab4_step(&mut state, &mut rhs);
        if step % EVERY == 0 || step == steps {
            ts.push(state.t);
            norm.push(m_norm(&state.y));
        }
    }
    let n_ref = norm[0];
    let rel_drift = norm
        .iter()
        .map(|v| (v - n_ref).abs() / n_ref)
        .fold(0.0f64, f64::max);
    Ok(NormProbe { ts, norm, rel_drift })
}

// ---------------------------------------------------------------------------
// the full benchmark matrix
// ---------------------------------------------------------------------------

/// Which error column a suite case grades.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Time-integrated l2 (the wave studies).
    TiL2,
    /// Instantaneous l2 at the final time (the parabolic/Schrodinger tables).
    L2AtT,
}

impl Metric {
    fn name(self) -> &'static str {
        match self {
            Metric::TiL2 => "ti_l2",
            Metric::L2AtT => "l2",
        }
    }
}

/// One row of the benchmark matrix.
#[derive(Debug, Clone)]
pub struct SuiteCase {
    pub problem: &'static str,
    pub k: usize,
    pub mesh: &'static str,
    pub levels: Vec<usize>,
    pub metric: Metric,
    /// Expected order (k+2, k+1, ~k+5/3, or 2 depending on the study).
    pub target: f64,
    /// Informational pass band on the finest pairwise rate.
    pub band: (f64, f64),
}

/// The benchmark matrix with an optional cap on the finest refinement level.
pub fn suite_cases(max_n: Option<usize>) -> Vec<SuiteCase> {
    let mut cases = Vec::new();
    let wave_sq = vec![4usize, 8, 16, 32];
    let tab1 = vec![4usize, 8, 16, 32];
    let tab2 = vec![4usize, 8, 16]; // k=4 at n=32 alone costs ~1e6 AB4 steps
    let kp2 = |k: usize| ((k + 2) as f64, ((k as f64) + 1.7, (k as f64) + 2.6));
    let kp1 = |k: usize| ((k + 1) as f64, ((k as f64) + 0.6, (k as f64) + 1.4));
    let neum = |k: usize| (k as f64 + 5.0 / 3.0, ((k as f64) + 1.3, (k as f64) + 2.0));
    let tab = |k: usize| ((k + 2) as f64, ((k as f64) + 1.65, (k as f64) + 2.35));

    for k in [2usize, 4] {
        let (t, band) = kp2(k);
        for mesh in ["cartesian", "smooth"] {
            cases.push(SuiteCase {
                problem: "square-dirichlet",
                k,
                mesh,
                levels: wave_sq.clone(),
                metric: Metric::TiL2,
                target: t,
                band,
            });
        }
        let (t, band) = kp1(k);
        cases.push(SuiteCase {
            problem: "square-dirichlet",
            k,
            mesh: "random",
            levels: wave_sq.clone(),
            metric: Metric::TiL2,
            target: t,
            band,
        });
        let (t, band) = neum(k);
        cases.push(SuiteCase {
            problem: "square-neumann",
            k,
            mesh: "smooth",
            levels: wave_sq.clone(),
            metric: Metric::TiL2,
            target: t,
            band,
        });
        let (t, band) = kp2(k);
        for mesh in ["annulus:curvilinear", "annulus:mixed"] {
            cases.push(SuiteCase {
                problem: "annulus-dirichlet",
                k,
                mesh,
                levels: wave_sq.clone(),
                metric: Metric::TiL2,
                target: t,
                band,
            });
        }
        cases.push(SuiteCase {
            problem: "annulus-dirichlet",
            k,
            mesh: "annulus:straight",
            levels: wave_sq.clone(),
            metric: Metric::TiL2,
            target: 2.0,
            band: (1.6, 2.6),
        });
        cases.push(SuiteCase {
            problem: "annulus-neumann",
            k,
            mesh: "annulus:curvilinear",
            levels: wave_sq.clone(),
            metric: Metric::TiL2,
            target: t,
            band,
        });
    }
    for k in [2usize, 3, 4] {
        let (t, band) = tab(k);
        cases.push(SuiteCase {
            problem: "parabolic-table1",
            k,
            mesh: "cartesian",
            levels: tab1.clone(),
            metric: Metric::L2AtT,
            target: t,
            band,
        });
        cases.push(SuiteCase {
            problem: "schrodinger-table2",
            k,
            mesh: "cartesian",
            levels: tab2.clone(),
            metric: Metric::L2AtT,
            target: t,
            band,
        });
    }
    if let Some(cap) = max_n {
        for c in &mut cases {
            c.levels.retain(|&n| n <= cap);
        }
        cases.retain(|c| c.levels.len() >= 2);
    }
    cases
}

/// Outcome of one suite case.
#[derive(Debug, Clone)]
pub struct SuiteRow {
    pub case: SuiteCase,
    /// Finest pairwise rate of the case's metric, when the case ran.
    pub observed: Option<f64>,
    pub in_band: bool,
    pub error: Option<String>,
}

/// Outcome of the whole matrix.
#[derive(Debug)]
pub struct SuiteOutcome {
    pub rows: Vec<SuiteRow>,
    pub summary_csv: String,
    pub summary_path: PathBuf,
}

/// Run the benchmark matrix. Individual case failures are recorded in the
/// summary and do not stop the suite. Every case writes its own CSV under
/// `out_dir`; the comparison table lands in `out_dir/summary.csv`.
pub fn run_suite(max_n: Option<usize>, out_dir: &Path) -> Result<SuiteOutcome> {
    let mut rows = Vec::new();
    for case in suite_cases(max_n) {
        let cfg = RunConfig {
            problem: case.problem.to_string(),
            k: case.k,
            mesh: FamilySpec::parse(case.mesh)?,
            levels: case.levels.clone(),
            out_dir: out_dir.to_path_buf(),
            ..RunConfig::default()
        };
        let row = match run(&cfg) {
            Ok(out) => {
                let fit = match case.metric {
                    Metric::TiL2 => out.report.rates_ti_l2(),
                    Metric::L2AtT => out.report.rates_l2(),
                };
                let observed = fit.pairwise.last().copied().filter(|r| r.is_finite());
                let in_band = observed
                    .map(|r| r >= case.band.0 && r <= case.band.1)
                    .unwrap_or(false);
                SuiteRow { case, observed, in_band, error: None }
            }
            Err(e) => SuiteRow {
                case,
                observed: None,
                in_band: false,
                error: Some(e.to_string()),
            },
        };
        rows.push(row);
    }

    let mut csv = String::from("problem,mesh,k,metric,levels,observed_rate,target,status\n");
    for r in &rows {
        let levels = r
            .case
            .levels
            .iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        let observed = r
            .observed
            .map(|v| format!("{v:.6}"))
            .unwrap_or_else(|| "nan".to_string());
        let status = match (&r.error, r.in_band) {
            (Some(e), _) => format!("error: {}", e.replace(',', ";").replace('\n', " ")),
            (None, true) => "ok".to_string(),
            (None, false) => "out-of-band".to_string(),
        };
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{:.6},{}",
            r.case.problem,
            r.case.mesh.replace(':', "-"),
            r.case.k,
            r.case.metric.name(),
            levels,
            observed,
            r.case.target,
            status
        );
    }
    std::fs::create_dir_all(out_dir)?;
    let summary_path = out_dir.join("summary.csv");
    std::fs::write(&summary_path, &csv)?;
    Ok(SuiteOutcome { rows, summary_csv: csv, summary_path })
}

/// Run `f` inside a dedicated rayon pool of `threads` workers (0 = use the
/// global/default pool). The operator's scatter is sequential in element
/// order, so results are bit-identical across thread counts; this exists so
/// that determinism can be demonstrated rather than assumed.
pub fn with_thread_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    if threads == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("rayon pool");
    pool.install(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::BcKind;

    #[test]
    fn family_parse_roundtrip() {
        for name in [
            "cartesian",
            "random",
            "smooth",
            "annulus:straight",
            "annulus:curvilinear",
            "annulus:mixed",
        ] {
            assert_eq!(FamilySpec::parse(name).unwrap().name(), name);
        }
        assert!(FamilySpec::parse("hexagonal").is_err());
    }

    #[test]
    fn family_problem_compatibility() {
        let sq = crate::problems::square_mode(BcKind::Dirichlet).unwrap();
        let an = crate::problems::annulus_mode(BcKind::Dirichlet).unwrap();
        assert_eq!(
            FamilySpec::Auto.resolve(&sq).unwrap(),
            FamilySpec::Cartesian
        );
        assert_eq!(
            FamilySpec::Auto.resolve(&an).unwrap(),
            FamilySpec::Annulus(AnnulusVariant::Curvilinear)
        );
        assert!(FamilySpec::Cartesian.resolve(&an).is_err());
        assert!(FamilySpec::Annulus(AnnulusVariant::Straight).resolve(&sq).is_err());
    }

    #[test]
    fn config_pairs_and_file() {
        let mut cfg = RunConfig::default();
        cfg.apply_pair("problem", "parabolic-table1").unwrap();
        cfg.apply_pair("k", "3").unwrap();
        cfg.apply_pair("levels", "4, 8, 16").unwrap();
        cfg.apply_pair("mesh", "cartesian").unwrap();
        cfg.apply_pair("seed", "7").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.levels, vec![4, 8, 16]);
        assert!(cfg.apply_pair("colour", "blue").is_err());

        let dir = std::env::temp_dir().join("sem2d_cfg_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("study.cfg");
        std::fs::write(&path, "# comment\nproblem = square-neumann\nlevels = 2,4\n").unwrap();
        cfg.apply_config_file(&path).unwrap();
        assert_eq!(cfg.problem, "square-neumann");
        assert_eq!(cfg.levels, vec![2, 4]);
    }

    #[test]
    fn config_validation_rejects_bad_shapes() {
        let mut cfg = RunConfig::default();
        cfg.levels = vec![8, 4];
        assert!(cfg.validate().is_err());
        cfg.levels = vec![4, 8];
        cfg.k = 1;
        assert!(cfg.validate().is_err());
        cfg.k = 2;
        cfg.order = Some(5);
        assert!(cfg.validate().is_err());
        cfg.order = None;
        cfg.problem = "heat-death".into();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn dt_rule_wave_follows_min_gap() {
        let p = crate::problems::square_mode(BcKind::Dirichlet).unwrap();
        let mesh = build_cartesian(crate::mesh::Rect::centered_pi(), 16, 2).unwrap();
        let (dt, steps) = dt_and_steps(&p, &mesh, 2, 16);
        let DtRule::WaveCfl { coeff, a_max } = p.dt_rule else {
            panic!("wave problem carries a CFL rule")
        };
        // raw dt = coeff * h_min / (k^2 sqrt(a_max)), rounded to hit T exactly
        let raw = coeff * mesh.min_node_gap / (4.0 * a_max.sqrt());
        assert!(dt <= raw * (1.0 + 1e-12));
        assert!((steps as f64 * dt - p.t_end).abs() < 1e-12 * p.t_end);
    }

    #[test]
    fn dt_rule_parabolic_binds_on_convection() {
        let p = crate::problems::parabolic_manufactured().unwrap();
        let Domain::Rect(r) = p.domain else { panic!("parabolic domain is a rectangle") };
        let mesh = build_cartesian(r, 8, 2).unwrap();
        let (dt, steps) = dt_and_steps(&p, &mesh, 2, 8);
        let DtRule::ParabolicRule { b_max, f_max } = p.dt_rule else {
            panic!("parabolic problem carries a parabolic rule")
        };
        let dx = (r.x1 - r.x0) / 16.0;
        let raw = (dx / 10.0).min(dx / (10.0 * b_max)).min(f_max / 10.0);
        assert!(dt <= raw * (1.0 + 1e-12));
        assert!(dt > raw * 0.5, "T-exact rounding at most halves the step");
        assert!((steps as f64 * dt - p.t_end).abs() < 1e-12 * p.t_end.max(1.0));
    }

    #[test]
    fn separable_profile_verifies_on_square_mode() {
        let p = crate::problems::square_mode(BcKind::Dirichlet).unwrap();
        let mesh = build_cartesian(crate::mesh::Rect::centered_pi(), 4, 2).unwrap();
        let prof = real_profile(&p, &mesh).expect("square mode separates");
        // tau(t) = cos(sqrt(2) t)
        for t in [0.0, 0.3, 1.7] {
            assert!((prof.tau(t) - (std::f64::consts::SQRT_2 * t).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn wave_run_small_level_is_sane() {
        let cfg = RunConfig {
            problem: "square-dirichlet".into(),
            k: 2,
            levels: vec![2, 4],
            out_dir: std::env::temp_dir().join("sem2d_run_wave"),
            ..RunConfig::default()
        };
        let out = run(&cfg).unwrap();
        assert_eq!(out.report.rows.len(), 2);
        // errors decrease under refinement and the CSV has 2 data rows
        assert!(out.report.rows[1].ti_l2 < out.report.rows[0].ti_l2);
        let data_lines = out
            .csv
            .lines()
            .filter(|l| !l.starts_with('#') && !l.starts_with("level,"))
            .count();
        assert_eq!(data_lines, 2);
        assert!(out.csv_path.exists());
    }

    #[test]
    fn reruns_are_byte_identical() {
        let cfg = RunConfig {
            problem: "square-dirichlet".into(),
            k: 2,
            mesh: FamilySpec::Random,
            levels: vec![2, 4],
            seed: 42,
            out_dir: std::env::temp_dir().join("sem2d_run_det"),
            ..RunConfig::default()
        };
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a.csv, b.csv);
        let mut cfg2 = cfg.clone();
        cfg2.seed = 43;
        let c = run(&cfg2).unwrap();
        assert_ne!(a.report.rows[0].ti_l2, c.report.rows[0].ti_l2);
    }

    #[test]
    #[ignore]
    fn diag_parabolic_elliptic_projection() {
        let p = crate::problems::parabolic_manufactured().unwrap();
        let u_t0 = p.exact.u_t.clone();
        let f0 = p.forcing.clone();
        let lu = move |x: f64, y: f64| (f0(x, y, 0.0) - u_t0(x, y, 0.0)).re;
        let mut prev = f64::NAN;
        for n in [4usize, 8, 16, 32, 64, 128] {
            let mesh = Arc::new(FamilySpec::Cartesian.build(&p, n, 2, 0).unwrap());
            let op = SemOperator::new(
                Arc::clone(&mesh),
                p.coeffs.clone(),
                p.boundary_condition(),
            )
            .unwrap();
            let cfg = KrylovConfig::default_for(op.n_nodes());
            let (w, stats) = op.elliptic_projection(0.0, &lu, &cfg).unwrap();
            let mut err = vec![0.0; op.n_nodes()];
            for (g, &[x, y]) in mesh.coords.iter().enumerate() {
                err[g] = w[g] - p.exact_re(x, y, 0.0);
            }
            let e = discrete_l2(&err, &mesh);
            eprintln!(
                "n={n} proj l2={e:.6e} rate={:.3} iters={} conv={} res={:.3e} method={}",
                (prev / e).log2(),
                stats.iterations,
                stats.converged,
                stats.residual,
                stats.method
            );
            prev = e;
        }
    }

    #[test]
    #[ignore]
    fn diag_parabolic_dt_scaling() {
        let p = crate::problems::parabolic_manufactured().unwrap();
        let mesh =
            Arc::new(FamilySpec::Cartesian.build(&p, 16, 2, 0).unwrap());
        let op = SemOperator::new(
            Arc::clone(&mesh),
            p.coeffs.clone(),
            p.boundary_condition(),
        )
        .unwrap();
        let (dt0, steps0) = dt_and_steps(&p, &mesh, 2, 16);
        for f in [1usize, 2, 4, 8] {
            let series = run_parabolic(
                &p,
                &op,
                &mesh,
                dt0 / f as f64,
                steps0 * f,
                InitialRule::Interpolant,
            )
            .unwrap();
            let last = series.ts.len() - 1;
            eprintln!(
                "dt={:.3e} steps={} l2(T)={:.6e}",
                dt0 / f as f64,
                steps0 * f,
                series.l2[last]
            );
        }
    }

    /// Diagnostic: full BDF3 evolution of the parabolic benchmark at a given
    /// off-diagonal scale, printing the l2(T) ladder next to the published
    /// reference column (8.34e-3, 6.59e-4, 4.15e-5, 2.91e-6 at k = 2).
    #[test]
    #[ignore]
    fn diag_parabolic_beta_sweep() {
        let refs = [8.34e-3, 6.59e-4, 4.52e-5, 2.91e-6];
        for beta in [0.0, 1.16247429980596111e-2] {
            let p = crate::problems::parabolic_variant(beta).unwrap();
            eprintln!("beta = {beta:.6e}");
            let mut prev = f64::NAN;
            for (li, n) in [4usize, 8, 16, 32].into_iter().enumerate() {
                let mesh = Arc::new(FamilySpec::Cartesian.build(&p, n, 2, 0).unwrap());
                let op = SemOperator::new(
                    Arc::clone(&mesh),
                    p.coeffs.clone(),
                    p.boundary_condition(),
                )
                .unwrap();
                let (dt, steps) = dt_and_steps(&p, &mesh, 2, n);
                let series =
                    run_parabolic(&p, &op, &mesh, dt, steps, InitialRule::Interpolant).unwrap();
                let last = series.ts.len() - 1;
                let l2 = series.l2[last];
                eprintln!(
                    "  n={n:>2} l2(T)={l2:.6e} rate={:.3} ref={:.2e} ratio={:.2}",
                    (prev / l2).log2(),
                    refs[li],
                    l2 / refs[li]
                );
                prev = l2;
            }
        }
    }

    /// Diagnostic: the two readings of the Schrodinger benchmark against the
    /// published k = 2 error ladder (l2 refs 9.98e-4 .. 2.53e-7, linf refs
    /// 6.36e-4 .. 1.79e-7). The half-kinetic reading (ground-state pair,
    /// literal f = 0) reproduces the ladder — l2 at the 0.5000 norm-convention
    /// ratio, linf matching digit for digit; the display reading (alpha = 1,
    /// manufactured forcing) wobbles (l2 ratios 0.49/0.43/0.35/0.50).
    /// `cargo test -p sem2d --lib diag_schrodinger_reading_sweep -- --ignored --nocapture`
    #[test]
    #[ignore]
    fn diag_schrodinger_reading_sweep() {
        let refs_l2 = [9.98e-4, 6.65e-5, 4.10e-6, 2.53e-7];
        let refs_linf = [6.36e-4, 4.01e-5, 2.77e-6, 1.79e-7];
        for alpha in [0.5, 1.0] {
            let p = crate::problems::schrodinger_variant(alpha).unwrap();
            eprintln!("alpha = {alpha} (f = 0: {})", p.forcing_is_zero);
            let mut prev = f64::NAN;
            for (li, n) in [4usize, 8, 16, 32].into_iter().enumerate() {
                let mesh = Arc::new(FamilySpec::Cartesian.build(&p, n, 2, 0).unwrap());
                let op = SemOperator::new(
                    Arc::clone(&mesh),
                    p.coeffs.clone(),
                    p.boundary_condition(),
                )
                .unwrap();
                let (dt, steps) = dt_and_steps(&p, &mesh, 2, n);
                let series = run_schrodinger(&p, &op, &mesh, dt, steps).unwrap();
                let last = series.ts.len() - 1;
                let (l2, linf) = (series.l2[last], series.linf[last]);
                eprintln!(
                    "  n={n:>2} l2(T)={l2:.6e} rate={:.3} ratio={:.4} | \
                     linf(T)={linf:.6e} ratio={:.4}",
                    (prev / l2).log2(),
                    l2 / refs_l2[li],
                    linf / refs_linf[li]
                );
                prev = l2;
            }
        }
    }

    /// Diagnostic: dump the stiffness triplets, mass diagonal, and
    /// constrained mask for the t = 0 verbatim coefficient shapes on the
    /// unit square, so the discrete growth rate can be inspected offline.
    #[test]
    #[ignore]
    fn diag_unit_square_verbatim_dump() {
        use crate::mesh::{build_cartesian, Rect};
        use crate::operator::{BoundaryCondition, Coefficients, SemOperator};
        use std::f64::consts::PI;
        use std::io::Write;
        let coeffs = Coefficients {
            a: Arc::new(|x: f64, y: f64, _| {
                let a11 = 1.0 + y + y * y + x * y.cos();
                let a12 = 1.0
                    + 0.5 * ((PI * x).sin() + x * x * x) * ((PI * y).sin() + y * y * y)
                    + (x.powi(4) + y.powi(3)).cos();
                let a22 = 1.0 + x * x;
                [[0.75 * a11, 0.75 * a12], [0.75 * a12, 0.75 * a22]]
            }),
            b: Arc::new(|x: f64, y: f64, _| [0.75 * (0.2 + x), 0.75 * (0.2 - y)]),
            c: Arc::new(|x: f64, y: f64, _| 0.75 * (10.0 + x.powi(4) * y.powi(3))),
            time_dependent: false,
        };
        for n in [4usize, 8, 16] {
            let mesh = build_cartesian(Rect::unit(), n, 2).unwrap();
            let op = SemOperator::new(
                Arc::new(mesh),
                coeffs.clone(),
                BoundaryCondition::DirichletHomogeneous,
            )
            .unwrap();
            let trips = op.assemble_triplets(0.0, 0.0);
            let path = format!("/tmp/unit_verbatim_n{n}.csv");
            let mut f = std::fs::File::create(&path).unwrap();
            for g in 0..op.n_nodes() {
                writeln!(
                    f,
                    "meta,{},{},{}",
                    g,
                    op.mass_diagonal()[g],
                    op.constrained()[g] as u8
                )
                .unwrap();
            }
            for (i, j, v) in trips {
                writeln!(f, "t,{i},{j},{v:.17e}").unwrap();
            }
            eprintln!("wrote {path}");
        }
    }

    #[test]
    fn suite_case_matrix_shape() {
        let cases = suite_cases(None);
        assert!(cases.len() >= 20, "expected a full matrix, got {}", cases.len());
        let capped = suite_cases(Some(8));
        assert!(capped.iter().all(|c| c.levels.iter().all(|&n| n <= 8)));
        assert!(capped.iter().all(|c| c.levels.len() >= 2));
        // every problem name resolves
        for c in &cases {
            Problem::by_name(c.problem).unwrap();
            FamilySpec::parse(c.mesh).unwrap();
        }
    }
}
