//! Matrix-free Krylov solvers for the implicit steps.
//!
//! [`solve`] drives a diagonally preconditioned BiCGStab and falls back to
//! restarted GMRES when BiCGStab breaks down or stagnates (the discrete
//! operators here are non-symmetric whenever convection is present, and
//! BiCGStab's short recurrence can break down on them; GMRES(30) is the
//! robust backstop). All reductions use Neumaier-compensated summation in a
//! fixed traversal order, so solves are deterministic and bit-identical
//! across worker-thread counts.

/// Which method [`solve`] may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KrylovMethod {
    /// BiCGStab only; breakdown is an error.
    BiCgStab,
    /// GMRES(restart) only.
    Gmres,
    /// BiCGStab first, GMRES on breakdown/stagnation (default).
    BiCgStabThenGmres,
}

/// Solver configuration. `max_iter` bounds the *combined* iteration count
/// (BiCGStab iterations plus GMRES inner iterations after a fallback).
#[derive(Debug, Clone)]
pub struct KrylovConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_iter: usize,
    pub restart: usize,
    pub method: KrylovMethod,
    /// Jacobi preconditioner: the diagonal of the system matrix.
    pub precond_diag: Option<Vec<f64>>,
}

impl KrylovConfig {
    /// Defaults pinned for the solver kit: rel_tol 1e-12, max_iter 10 n,
    /// BiCGStab with GMRES(30) fallback.
    pub fn default_for(n_dof: usize) -> Self {
        KrylovConfig {
            rel_tol: 1e-12,
            abs_tol: 0.0,
            max_iter: 10 * n_dof.max(1),
            restart: 30,
            method: KrylovMethod::BiCgStabThenGmres,
            precond_diag: None,
        }
    }

    pub fn with_tol(rel_tol: f64, max_iter: usize) -> Self {
        KrylovConfig { rel_tol, max_iter, ..KrylovConfig::default_for(1) }
    }
}

/// Outcome of a successful solve.
#[derive(Debug, Clone)]
pub struct KrylovStats {
    pub iterations: usize,
    pub residual: f64,
    pub method: &'static str,
    /// True when BiCGStab broke down and GMRES finished the solve.
    pub fallback: bool,
    pub converged: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum KrylovError {
    #[error(
        "krylov solve did not converge: {iterations} iterations, residual {residual:.3e} \
         (target {target:.3e}); recent residuals {history:?}"
    )]
    NoConvergence {
        iterations: usize,
        residual: f64,
        target: f64,
        history: Vec<f64>,
    },
    #[error("krylov breakdown at iteration {iterations} (residual {residual:.3e}): {what}")]
    Breakdown {
        iterations: usize,
        residual: f64,
        what: &'static str,
    },
    #[error("krylov input: {0}")]
    BadInput(String),
}

/// Neumaier-compensated dot product; deterministic fixed-order reduction.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for i in 0..a.len() {
        let p = a[i] * b[i];
        let t = s + p;
        c += if s.abs() >= p.abs() { (s - t) + p } else { (p - t) + s };
        s = t;
    }
    s + c
}

/// Euclidean norm via the compensated dot product.
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for i in 0..y.len() {
        y[i] = alpha.mul_add(x[i], y[i]);
    }
}

fn precond(z: &mut [f64], diag: Option<&[f64]>) {
    if let Some(d) = diag {
        for i in 0..z.len() {
            z[i] /= d[i];
        }
    }
}

struct History {
    ring: Vec<f64>,
    next: usize,
}

impl History {
    fn new() -> Self {
        History { ring: Vec::with_capacity(16), next: 0 }
    }
    fn push(&mut self, r: f64) {
        if self.ring.len() < 16 {
            self.ring.push(r);
        } else {
            self.ring[self.next] = r;
            self.next = (self.next + 1) % 16;
        }
    }
    fn chronological(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.ring.len());
        out.extend_from_slice(&self.ring[self.next..]);
        out.extend_from_slice(&self.ring[..self.next]);
        out
    }
}

/// Solve `A x = rhs` with the matrix-free action `apply(x, out)`.
/// Returns the solution and solve statistics, or a residual-history error.
pub fn solve<A>(
    apply: &A,
    rhs: &[f64],
    x0: &[f64],
    cfg: &KrylovConfig,
) -> Result<(Vec<f64>, KrylovStats), KrylovError>
where
    A: Fn(&[f64], &mut [f64]) + ?Sized,
{
    let n = rhs.len();
    if x0.len() != n {
        return Err(KrylovError::BadInput(format!(
            "x0 length {} does not match rhs length {}",
            x0.len(),
            n
        )));
    }
    if let Some(d) = &cfg.precond_diag {
        if d.len() != n {
            return Err(KrylovError::BadInput("preconditioner length mismatch".into()));
        }
        if d.iter().any(|&v| v == 0.0 || !v.is_finite()) {
            return Err(KrylovError::BadInput("preconditioner has zero/non-finite entries".into()));
        }
    }
    let bnorm = norm2(rhs);
    let target = (cfg.rel_tol * bnorm).max(cfg.abs_tol);
    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    apply(&x, &mut r);
    for i in 0..n {
        r[i] = rhs[i] - r[i];
    }
    let r0 = norm2(&r);
    if r0 <= target || bnorm == 0.0 {
        let x = if bnorm == 0.0 { vec![0.0; n] } else { x };
        return Ok((
            x,
            KrylovStats { iterations: 0, residual: r0.min(bnorm), method: "none", fallback: false, converged: true },
        ));
    }

    let mut iters_used = 0usize;
    let mut fallback = false;
    match cfg.method {
        KrylovMethod::Gmres => {}
        _ => {
            match bicgstab(apply, rhs, &mut x, r, target, cfg, &mut iters_used) {
                BicgOutcome::Converged(residual) => {
                    return Ok((
                        x,
                        KrylovStats {
                            iterations: iters_used,
                            residual,
                            method: "bicgstab",
                            fallback: false,
                            converged: true,
                        },
                    ));
                }
                BicgOutcome::Failed { residual, what, history } => {
                    if cfg.method == KrylovMethod::BiCgStab {
                        return if what == "max_iter" {
                            Err(KrylovError::NoConvergence {
                                iterations: iters_used,
                                residual,
                                target,
                                history,
                            })
                        } else {
                            Err(KrylovError::Breakdown {
                                iterations: iters_used,
                                residual,
                                what,
                            })
                        };
                    }
                    fallback = true;
                }
            }
        }
    }

    // GMRES (either requested directly or as the fallback), continuing from x
    let (residual, history) = gmres(apply, rhs, &mut x, target, cfg, &mut iters_used);
    if residual <= target {
        Ok((
            x,
            KrylovStats {
                iterations: iters_used,
                residual,
                method: "gmres",
                fallback,
                converged: true,
            },
        ))
    } else {
        Err(KrylovError::NoConvergence { iterations: iters_used, residual, target, history })
    }
}

enum BicgOutcome {
    Converged(f64),
    Failed { residual: f64, what: &'static str, history: Vec<f64> },
}

fn bicgstab<A>(
    apply: &A,
    _rhs: &[f64],
    x: &mut [f64],
    mut r: Vec<f64>,
    target: f64,
    cfg: &KrylovConfig,
    iters_used: &mut usize,
) -> BicgOutcome
where
    A: Fn(&[f64], &mut [f64]) + ?Sized,
{
    let n = r.len();
    let diag = cfg.precond_diag.as_deref();
    let rhat = r.clone();
    let rhat_norm = norm2(&rhat);
    let mut rho_prev = 1.0f64;
    let mut alpha = 1.0f64;
    let mut omega = 1.0f64;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut rnorm = norm2(&r);
    let mut hist = History::new();
    hist.push(rnorm);
    while *iters_used < cfg.max_iter {
        *iters_used += 1;
        let rho = dot(&rhat, &r);
        if rho.abs() <= 1e-60 * (rhat_norm * rnorm).max(1e-300) || !rho.is_finite() {
            return BicgOutcome::Failed { residual: rnorm, what: "rho breakdown", history: hist.chronological() };
        }
        let beta = (rho / rho_prev) * (alpha / omega);
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        phat.copy_from_slice(&p);
        precond(&mut phat, diag);
        apply(&phat, &mut v);
        let rv = dot(&rhat, &v);
        if rv == 0.0 || !rv.is_finite() {
            return BicgOutcome::Failed { residual: rnorm, what: "r-hat v breakdown", history: hist.chronological() };
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        let snorm = norm2(&s);
        if snorm <= target {
            axpy(alpha, &phat, x);
            return BicgOutcome::Converged(snorm);
        }
        shat.copy_from_slice(&s);
        precond(&mut shat, diag);
        apply(&shat, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 || !tt.is_finite() {
            return BicgOutcome::Failed { residual: snorm, what: "t breakdown", history: hist.chronological() };
        }
        omega = dot(&t, &s) / tt;
        if omega == 0.0 || !omega.is_finite() {
            return BicgOutcome::Failed { residual: snorm, what: "omega breakdown", history: hist.chronological() };
        }
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        rnorm = norm2(&r);
        hist.push(rnorm);
        if !rnorm.is_finite() {
            return BicgOutcome::Failed { residual: rnorm, what: "non-finite residual", history: hist.chronological() };
        }
        if rnorm <= target {
            return BicgOutcome::Converged(rnorm);
        }
        rho_prev = rho;
    }
    BicgOutcome::Failed { residual: rnorm, what: "max_iter", history: hist.chronological() }
}

/// Right-preconditioned restarted GMRES with modified Gram-Schmidt and Givens
/// rotations. Continues from the incoming `x`; returns the final residual
/// norm and recent residual history.
fn gmres<A>(
    apply: &A,
    rhs: &[f64],
    x: &mut [f64],
    target: f64,
    cfg: &KrylovConfig,
    iters_used: &mut usize,
) -> (f64, Vec<f64>)
where
    A: Fn(&[f64], &mut [f64]) + ?Sized,
{
    let n = rhs.len();
    let m = cfg.restart.max(1);
    let diag = cfg.precond_diag.as_deref();
    let mut hist = History::new();
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut beta;
    loop {
        // residual for this cycle
        apply(x, &mut w);
        let mut r = vec![0.0; n];
        for i in 0..n {
            r[i] = rhs[i] - w[i];
        }
        beta = norm2(&r);
        hist.push(beta);
        if beta <= target || *iters_used >= cfg.max_iter || !beta.is_finite() {
            return (beta, hist.chronological());
        }
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        for vi in r.iter_mut() {
            *vi /= beta;
        }
        v.push(r);
        let mut h = vec![vec![0.0f64; m]; m + 1];
        let mut cs = vec![0.0f64; m];
        let mut sn = vec![0.0f64; m];
        let mut g = vec![0.0f64; m + 1];
        g[0] = beta;
        let mut cols = 0usize;
        for j in 0..m {
            *iters_used += 1;
            z.copy_from_slice(&v[j]);
            precond(&mut z, diag);
            apply(&z, &mut w);
            for i in 0..=j {
                let hij = dot(&w, &v[i]);
                h[i][j] = hij;
                axpy(-hij, &v[i], &mut w);
            }
            let hj1 = norm2(&w);
            h[j + 1][j] = hj1;
            // apply accumulated rotations to the new column
            for i in 0..j {
                let tmp = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = tmp;
            }
            let denom = h[j][j].hypot(h[j + 1][j]);
            if denom == 0.0 {
                cols = j + 1;
                break;
            }
            cs[j] = h[j][j] / denom;
            sn[j] = h[j + 1][j] / denom;
            h[j][j] = denom;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            cols = j + 1;
            let res = g[j + 1].abs();
            hist.push(res);
            let happy = hj1 <= 1e-14 * beta;
            if res <= target || *iters_used >= cfg.max_iter || happy {
                break;
            }
            let mut vnext = w.clone();
            for vi in vnext.iter_mut() {
                *vi /= hj1;
            }
            v.push(vnext);
        }
        // back-substitute H y = g
        let mut y = vec![0.0f64; cols];
        for i in (0..cols).rev() {
            let mut s = g[i];
            for jj in i + 1..cols {
                s -= h[i][jj] * y[jj];
            }
            y[i] = if h[i][i] != 0.0 { s / h[i][i] } else { 0.0 };
        }
        // x += K^-1 (V y)
        z.fill(0.0);
        for (jj, yj) in y.iter().enumerate() {
            axpy(*yj, &v[jj], &mut z);
        }
        precond(&mut z, diag);
        for i in 0..n {
            x[i] += z[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn dense_apply(a: Vec<Vec<f64>>) -> impl Fn(&[f64], &mut [f64]) {
        move |x: &[f64], out: &mut [f64]| {
            for (i, row) in a.iter().enumerate() {
                out[i] = dot(row, x);
            }
        }
    }

    /// Random diagonally dominant matrix (nonsymmetric), plus a reference
    /// solution by Gaussian elimination with partial pivoting.
    fn random_system(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
        let mut rng = SplitMix64::new(seed);
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = 0.3 * rng.next_symmetric();
            }
            a[i][i] += n as f64;
        }
        let xstar: Vec<f64> = (0..n).map(|_| rng.next_symmetric()).collect();
        let b: Vec<f64> = (0..n).map(|i| dot(&a[i], &xstar)).collect();
        (a, xstar, b)
    }

    #[test]
    fn dot_compensation_beats_naive() {
        // large cancellation: sum of (1e16, 1, -1e16, 1, ...) pairs
        let a = vec![1.0; 6];
        let b = vec![1e16, 1.0, -1e16, 1.0, 1e16, -1e16];
        assert_eq!(dot(&a, &b), 2.0 + 1e16 - 1e16);
        let a2 = vec![1e100, 1.0, -1e100];
        let b2 = vec![1.0, 7.0, 1.0];
        assert_eq!(dot(&a2, &b2), 7.0);
    }

    #[test]
    fn identity_converges_immediately() {
        let apply = |x: &[f64], out: &mut [f64]| out.copy_from_slice(x);
        let rhs = vec![3.0, -1.0, 2.0];
        let cfg = KrylovConfig::default_for(3);
        let (x, stats) = solve(&apply, &rhs, &[0.0; 3], &cfg).unwrap();
        assert!(stats.converged);
        for (xi, bi) in x.iter().zip(&rhs) {
            assert!((xi - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let apply = |x: &[f64], out: &mut [f64]| out.copy_from_slice(x);
        let cfg = KrylovConfig::default_for(4);
        let (x, stats) = solve(&apply, &[0.0; 4], &[1.0; 4], &cfg).unwrap();
        assert_eq!(x, vec![0.0; 4]);
        assert!(stats.converged);
    }

    #[test]
    fn bicgstab_solves_nonsymmetric_system() {
        let (a, xstar, b) = random_system(40, 17);
        let apply = dense_apply(a);
        let cfg = KrylovConfig::default_for(40);
        let (x, stats) = solve(&apply, &b, &vec![0.0; 40], &cfg).unwrap();
        assert!(stats.converged && !stats.fallback, "{stats:?}");
        for (xi, xs) in x.iter().zip(&xstar) {
            assert!((xi - xs).abs() < 1e-10, "{xi} vs {xs}");
        }
    }

    #[test]
    fn gmres_solves_nonsymmetric_system() {
        let (a, xstar, b) = random_system(40, 23);
        let apply = dense_apply(a);
        let mut cfg = KrylovConfig::default_for(40);
        cfg.method = KrylovMethod::Gmres;
        let (x, stats) = solve(&apply, &b, &vec![0.0; 40], &cfg).unwrap();
        assert!(stats.converged, "{stats:?}");
        assert_eq!(stats.method, "gmres");
        for (xi, xs) in x.iter().zip(&xstar) {
            assert!((xi - xs).abs() < 1e-10);
        }
    }

    #[test]
    fn jacobi_preconditioning_helps_scaled_system() {
        // badly scaled diagonal system: unpreconditioned BiCGStab struggles,
        // Jacobi solves it essentially immediately
        let n = 50;
        let diag: Vec<f64> = (0..n).map(|i| 10f64.powi((i % 13) as i32 - 6)).collect();
        let d2 = diag.clone();
        let apply = move |x: &[f64], out: &mut [f64]| {
            for i in 0..x.len() {
                out[i] = d2[i] * x[i];
            }
        };
        let mut rng = SplitMix64::new(3);
        let xstar: Vec<f64> = (0..n).map(|_| rng.next_symmetric()).collect();
        let b: Vec<f64> = (0..n).map(|i| diag[i] * xstar[i]).collect();
        let mut cfg = KrylovConfig::default_for(n);
        cfg.precond_diag = Some(diag);
        let (x, stats) = solve(&apply, &b, &vec![0.0; n], &cfg).unwrap();
        assert!(stats.converged && stats.iterations <= 3, "{stats:?}");
        for (xi, xs) in x.iter().zip(&xstar) {
            assert!((xi - xs).abs() < 1e-9);
        }
    }

    #[test]
    fn no_convergence_reports_history() {
        let (a, _, b) = random_system(40, 31);
        let apply = dense_apply(a);
        let mut cfg = KrylovConfig::default_for(40);
        cfg.max_iter = 2;
        cfg.rel_tol = 1e-15;
        let err = solve(&apply, &b, &vec![0.0; 40], &cfg).unwrap_err();
        match err {
            KrylovError::NoConvergence { iterations, history, .. } => {
                assert!(iterations >= 2);
                assert!(!history.is_empty());
            }
            other => panic!("expected NoConvergence, got {other}"),
        }
    }

    #[test]
    fn singular_system_fails_cleanly() {
        // projection onto first n-1 coordinates: singular
        let apply = |x: &[f64], out: &mut [f64]| {
            out.copy_from_slice(x);
            let last = out.len() - 1;
            out[last] = 0.0;
        };
        let mut rhs = vec![0.0; 10];
        rhs[9] = 1.0; // outside the range
        let mut cfg = KrylovConfig::default_for(10);
        cfg.max_iter = 60;
        assert!(solve(&apply, &rhs, &vec![0.0; 10], &cfg).is_err());
    }

    #[test]
    fn warm_start_counts_as_converged() {
        let (a, xstar, b) = random_system(30, 5);
        let apply = dense_apply(a);
        let cfg = KrylovConfig::default_for(30);
        let (x, stats) = solve(&apply, &b, &xstar, &cfg).unwrap();
        assert_eq!(stats.iterations, 0);
        assert!(stats.converged);
        for (xi, xs) in x.iter().zip(&xstar) {
            assert_eq!(xi, xs);
        }
    }

    #[test]
    fn gmres_restart_cycles_work() {
        // force several restart cycles with a small restart length
        let (a, xstar, b) = random_system(60, 41);
        let apply = dense_apply(a);
        let mut cfg = KrylovConfig::default_for(60);
        cfg.method = KrylovMethod::Gmres;
        cfg.restart = 5;
        let (x, stats) = solve(&apply, &b, &vec![0.0; 60], &cfg).unwrap();
        assert!(stats.converged, "{stats:?}");
        for (xi, xs) in x.iter().zip(&xstar) {
            assert!((xi - xs).abs() < 1e-9);
        }
    }
}
