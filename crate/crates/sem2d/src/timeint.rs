//! Time integrators matched to the spatial accuracy they transport.
//!
//! - Wave equation: the two-step modified-equation (Taylor / Lax-Wendroff)
//!   scheme at formal order 4 or 6. With `Q u = M^-1 (-A u)` the update
//!   `u+ = 2u - u- + dt^2 Q u + (dt^4/12) Q^2 u [+ (dt^6/360) Q^3 u]`
//!   matches the Taylor expansion of `u(t +- dt)` through the stated order
//!   for the autonomous semi-discrete system `u'' = Q u`.
//! - Parabolic problems: BDF3 with per-step Krylov solves, exact-history
//!   startup by default and a BDF1(Richardson)->BDF2 self-start alternative.
//! - Schrodinger: classical 4th-order Adams-Bashforth over a first-order
//!   system, started with three RK4 steps (one rhs evaluation per step after
//!   startup, which is what makes the long runs affordable).

use crate::krylov::{self, KrylovConfig, KrylovStats};
use crate::operator::{OperatorError, SemOperator};

#[derive(Debug, thiserror::Error)]
pub enum TimeintError {
    #[error("wave stepper order must be 4 or 6, got {0}")]
    BadOrder(usize),
    #[error(transparent)]
    Krylov(#[from] crate::krylov::KrylovError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

// ---------------------------------------------------------------------------
// wave: two-step Taylor scheme
// ---------------------------------------------------------------------------

/// State of the two-step wave integrator. `u` is the current level, `u_prev`
/// the one before; `t` is the time of `u`.
pub struct WaveState {
    pub u: Vec<f64>,
    pub u_prev: Vec<f64>,
    pub t: f64,
    pub dt: f64,
    pub order: usize,
    s1: Vec<f64>,
    s2: Vec<f64>,
    s3: Vec<f64>,
}

/// Build the starting pair (u^0, u^-1) from initial data `u0`, `v0 = u_t(0)`
/// by a one-sided Taylor expansion in `Q`:
/// `u^-1 = u0 - dt v0 + (dt^2/2) Q u0 - (dt^3/6) Q v0 + (dt^4/24) Q^2 u0`,
/// continued through the `dt^7` term at order 6 (see the comment below on why
/// the startup must be one order more accurate than the scheme itself).
pub fn wave_start(
    u0: &[f64],
    v0: &[f64],
    t0: f64,
    dt: f64,
    order: usize,
    mut q: impl FnMut(&[f64], &mut [f64]),
) -> Result<WaveState, TimeintError> {
    if order != 4 && order != 6 {
        return Err(TimeintError::BadOrder(order));
    }
    let n = u0.len();
    let mut qu = vec![0.0; n];
    let mut qv = vec![0.0; n];
    let mut qqu = vec![0.0; n];
    q(u0, &mut qu);
    q(v0, &mut qv);
    q(&qu, &mut qqu);
    let mut u_prev = vec![0.0; n];
    for i in 0..n {
        u_prev[i] = u0[i] - dt * v0[i] + dt * dt / 2.0 * qu[i] - dt.powi(3) / 6.0 * qv[i]
            + dt.powi(4) / 24.0 * qqu[i];
    }
    if order == 6 {
        // The two-step recurrence amplifies a one-time startup error eps into
        // a persistent mode of amplitude ~ eps / (omega dt), so global order 6
        // needs u^-1 accurate to O(dt^7): carry the Taylor series two terms
        // further than the order-4 branch.
        let mut qqv = vec![0.0; n];
        let mut q3u = vec![0.0; n];
        let mut q3v = vec![0.0; n];
        q(&qv, &mut qqv);
        q(&qqu, &mut q3u);
        q(&qqv, &mut q3v);
        for i in 0..n {
            u_prev[i] += -dt.powi(5) / 120.0 * qqv[i] + dt.powi(6) / 720.0 * q3u[i]
                - dt.powi(7) / 5040.0 * q3v[i];
        }
    }
    Ok(WaveState {
        u: u0.to_vec(),
        u_prev,
        t: t0,
        dt,
        order,
        s1: vec![0.0; n],
        s2: vec![0.0; n],
        s3: vec![0.0; n],
    })
}

/// Advance one step of `u'' = Q u`. `q` must be the same autonomous operator
/// used at startup.
pub fn wave_step(s: &mut WaveState, mut q: impl FnMut(&[f64], &mut [f64])) {
    let n = s.u.len();
    let dt2 = s.dt * s.dt;
    q(&s.u, &mut s.s1);
    q(&s.s1, &mut s.s2);
    if s.order == 6 {
        q(&s.s2, &mut s.s3);
    }
    for i in 0..n {
        let mut unew = 2.0 * s.u[i] - s.u_prev[i] + dt2 * s.s1[i] + dt2 * dt2 / 12.0 * s.s2[i];
        if s.order == 6 {
            unew += dt2 * dt2 * dt2 / 360.0 * s.s3[i];
        }
        // rotate: u_prev slot receives the new level, then swap
        s.u_prev[i] = unew;
    }
    std::mem::swap(&mut s.u, &mut s.u_prev);
    s.t += s.dt;
}

// ---------------------------------------------------------------------------
// parabolic: BDF3 with Krylov solves
// ---------------------------------------------------------------------------

/// Three-level BDF3 history: `u` at time `t`, `u1` at `t - dt`, `u2` at `t - 2 dt`.
pub struct Bdf3State {
    pub u: Vec<f64>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub t: f64,
    pub dt: f64,
}

impl Bdf3State {
    /// Startup from known history (e.g. the exact solution at the first
    /// three levels); `u` is the newest level, at time `t`.
    pub fn from_history(u: Vec<f64>, u1: Vec<f64>, u2: Vec<f64>, t: f64, dt: f64) -> Self {
        Bdf3State { u, u1, u2, t, dt }
    }
}

/// Shared implicit solve: `(shift M + A(t1)) u+ = rhs_weak` with Dirichlet
/// lifting at `t1`. `rhs_weak` holds the already mass-weighted right side at
/// interior rows. Returns the new level.
fn implicit_solve(
    op: &SemOperator,
    t1: f64,
    shift: f64,
    rhs_weak: &mut Vec<f64>,
    x0: &[f64],
    cfg: &KrylovConfig,
) -> Result<(Vec<f64>, KrylovStats), TimeintError> {
    let nn = op.n_nodes();
    let ug = op.lift_dirichlet(t1);
    let mut aug = vec![0.0; nn];
    op.apply_stiffness(t1, &ug, &mut aug)?;
    let constrained = op.constrained();
    for g in 0..nn {
        if constrained[g] {
            rhs_weak[g] = 0.0;
        } else {
            rhs_weak[g] -= aug[g];
        }
    }
    let mut x0m = x0.to_vec();
    for g in 0..nn {
        if constrained[g] {
            x0m[g] = 0.0;
        }
    }
    let apply = op.solve_apply(t1, shift);
    let mut cfg = cfg.clone();
    if cfg.precond_diag.is_none() {
        cfg.precond_diag = Some(op.diagonal_shifted(t1, shift));
    }
    let (mut w, stats) = krylov::solve(&apply, rhs_weak, &x0m, &cfg)?;
    for g in 0..nn {
        w[g] += ug[g];
    }
    Ok((w, stats))
}

/// One BDF3 step of `M u_t + A(t) u = M f(t)`:
/// `(11/(6 dt)) M u+ + A(t+) u+ = M (3 u - 3/2 u1 + 1/3 u2)/dt + M f(t+)`.
/// `f_nodal(t, buf)` fills nodal forcing values. The Krylov start vector is
/// the quadratic extrapolation of the history.
pub fn bdf3_step(
    s: &mut Bdf3State,
    op: &SemOperator,
    f_nodal: &mut dyn FnMut(f64, &mut [f64]),
    cfg: &KrylovConfig,
) -> Result<KrylovStats, TimeintError> {
    let nn = op.n_nodes();
    let t1 = s.t + s.dt;
    let mass = op.mass_diagonal();
    let mut fbuf = vec![0.0; nn];
    f_nodal(t1, &mut fbuf);
    let mut rhs = vec![0.0; nn];
    for g in 0..nn {
        let hist = (3.0 * s.u[g] - 1.5 * s.u1[g] + s.u2[g] / 3.0) / s.dt;
        rhs[g] = mass[g] * (hist + fbuf[g]);
    }
    // quadratic extrapolation as the initial iterate
    let x0: Vec<f64> = (0..nn).map(|g| 3.0 * s.u[g] - 3.0 * s.u1[g] + s.u2[g]).collect();
    let shift = 11.0 / (6.0 * s.dt);
    let (unew, stats) = implicit_solve(op, t1, shift, &mut rhs, &x0, cfg)?;
    // rotate history
    std::mem::swap(&mut s.u2, &mut s.u1);
    std::mem::swap(&mut s.u1, &mut s.u);
    s.u = unew;
    s.t = t1;
    Ok(stats)
}

/// Self-start for BDF3 from a single initial level: the first step is BDF1
/// with Richardson extrapolation (one full step and two half steps combined
/// to second order), the second step is BDF2. Both history levels then carry
/// O(dt^3) error, which is what third-order BDF3 needs.
pub fn bdf3_self_start(
    u0: Vec<f64>,
    t0: f64,
    dt: f64,
    op: &SemOperator,
    f_nodal: &mut dyn FnMut(f64, &mut [f64]),
    cfg: &KrylovConfig,
) -> Result<Bdf3State, TimeintError> {
    let nn = op.n_nodes();
    let mut fbuf = vec![0.0; nn];
    let mass = op.mass_diagonal();
    let bdf1 = |u: &[f64],
                t_from: f64,
                step: f64,
                fbuf: &mut Vec<f64>,
                f_nodal: &mut dyn FnMut(f64, &mut [f64])|
     -> Result<Vec<f64>, TimeintError> {
        let t1 = t_from + step;
        f_nodal(t1, fbuf);
        let mut rhs = vec![0.0; nn];
        for g in 0..nn {
            rhs[g] = mass[g] * (u[g] / step + fbuf[g]);
        }
        let (unew, _) = implicit_solve(op, t1, 1.0 / step, &mut rhs, u, cfg)?;
        Ok(unew)
    };
    // Richardson: u1 = 2 * (two half steps) - (one full step)
    let full = bdf1(&u0, t0, dt, &mut fbuf, f_nodal)?;
    let half = bdf1(&u0, t0, dt / 2.0, &mut fbuf, f_nodal)?;
    let half2 = bdf1(&half, t0 + dt / 2.0, dt / 2.0, &mut fbuf, f_nodal)?;
    let mut u1 = vec![0.0; nn];
    for g in 0..nn {
        u1[g] = 2.0 * half2[g] - full[g];
    }
    // boundary values must be the lifted data, not extrapolated
    let ug = op.lift_dirichlet(t0 + dt);
    for g in 0..nn {
        if op.constrained()[g] {
            u1[g] = ug[g];
        }
    }
    // BDF2 for the second level: (3 u+ - 4 u1 + u0) / (2 dt) + A u+ = f
    let t2 = t0 + 2.0 * dt;
    f_nodal(t2, &mut fbuf);
    let mut rhs = vec![0.0; nn];
    for g in 0..nn {
        rhs[g] = mass[g] * ((4.0 * u1[g] - u0[g]) / (2.0 * dt) + fbuf[g]);
    }
    let x0: Vec<f64> = (0..nn).map(|g| 2.0 * u1[g] - u0[g]).collect();
    let (u2new, _) = implicit_solve(op, t2, 3.0 / (2.0 * dt), &mut rhs, &x0, cfg)?;
    Ok(Bdf3State { u: u2new, u1, u2: u0, t: t2, dt })
}

// ---------------------------------------------------------------------------
// first-order systems: AB4 with RK4 startup
// ---------------------------------------------------------------------------

/// Adams-Bashforth-4 state over `y' = g(t, y)`. Keeps the last three rhs
/// evaluations; each step costs exactly one new evaluation.
pub struct Ab4State {
    pub y: Vec<f64>,
    pub t: f64,
    pub dt: f64,
    /// g at t - dt, t - 2 dt, t - 3 dt.
    hist: [Vec<f64>; 3],
    spare: Vec<f64>,
}

/// Three RK4 steps from `(t0, y0)`, recording the rhs at the step heads; the
/// returned state is at `t0 + 3 dt`, ready for [`ab4_step`].
pub fn ab4_start(
    y0: Vec<f64>,
    t0: f64,
    dt: f64,
    rhs: &mut impl FnMut(f64, &[f64], &mut [f64]),
) -> Ab4State {
    let n = y0.len();
    let mut y = y0;
    let mut g_heads: Vec<Vec<f64>> = Vec::with_capacity(3);
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    for step in 0..3 {
        let t = t0 + step as f64 * dt;
        rhs(t, &y, &mut k1);
        g_heads.push(k1.clone());
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * dt * k1[i];
        }
        rhs(t + 0.5 * dt, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * dt * k2[i];
        }
        rhs(t + 0.5 * dt, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + dt * k3[i];
        }
        rhs(t + dt, &tmp, &mut k4);
        for i in 0..n {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    // history: g at t2 (newest), t1, t0
    let g2 = g_heads.pop().unwrap();
    let g1 = g_heads.pop().unwrap();
    let g0 = g_heads.pop().unwrap();
    Ab4State { y, t: t0 + 3.0 * dt, dt, hist: [g2, g1, g0], spare: vec![0.0; n] }
}

/// One AB4 step:
/// `y+ = y + dt/24 (55 g(t,y) - 59 g_-1 + 37 g_-2 - 9 g_-3)`.
pub fn ab4_step(s: &mut Ab4State, rhs: &mut impl FnMut(f64, &[f64], &mut [f64])) {
    let n = s.y.len();
    let mut g = std::mem::take(&mut s.spare);
    rhs(s.t, &s.y, &mut g);
    let c = s.dt / 24.0;
    for i in 0..n {
        s.y[i] += c
            * (55.0 * g[i] - 59.0 * s.hist[0][i] + 37.0 * s.hist[1][i] - 9.0 * s.hist[2][i]);
    }
    s.t += s.dt;
    // rotate history: oldest buffer becomes the next spare
    let mid = std::mem::take(&mut s.hist[1]);
    let oldest = std::mem::replace(&mut s.hist[2], mid);
    s.hist[1] = std::mem::take(&mut s.hist[0]);
    s.hist[0] = g;
    s.spare = oldest;
}
