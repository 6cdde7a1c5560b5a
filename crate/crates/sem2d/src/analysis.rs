//! Error norms, time-integrated error functionals, convergence-rate fits,
//! and the CSV/gnuplot reporting used by the study harness.
//!
//! The spatial norms are the *discrete* (nodal) norms in which the
//! superconvergence statement lives: `l2 = h sqrt(sum_g e_g^2)` over all
//! global nodes with the mesh's norm scale `h` (half the Cartesian cell edge,
//! or `sqrt(area)/(2n)` on non-Cartesian meshes), and `linf = max_g |e_g|`.
//! They weight every node equally on purpose — superconvergence is a
//! statement about nodal values, not about the L2 function norm.

use crate::mesh::Mesh;

/// Discrete l2 norm: `h_norm * sqrt(sum e^2)`. With e = 1 on the 9 nodes of a
/// single Q2 cell over the unit square this is 0.5 * 3 = 1.5.
pub fn discrete_l2(err: &[f64], mesh: &Mesh) -> f64 {
    let s: f64 = crate::krylov::dot(err, err);
    mesh.h_norm() * s.sqrt()
}

/// Max nodal magnitude.
pub fn discrete_linf(err: &[f64]) -> f64 {
    err.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
}

/// Which time-integrated functional of a sampled norm series to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeIntegralKind {
    /// `sqrt( integral v(t)^2 dt )` by trapezoid on v^2.
    L2InTime,
    /// `integral v(t) dt` by trapezoid.
    L1InTime,
}

/// Trapezoid-rule time integral of a sampled norm series `(t_i, v_i)`.
/// Samples need not be uniformly spaced (the samplers cap their count on
/// long runs). A series with fewer than two samples integrates to zero.
pub fn time_integrated(ts: &[f64], vals: &[f64], kind: TimeIntegralKind) -> f64 {
    assert_eq!(ts.len(), vals.len(), "sample series length mismatch");
    if ts.len() < 2 {
        return 0.0;
    }
    let f = |v: f64| match kind {
        TimeIntegralKind::L2InTime => v * v,
        TimeIntegralKind::L1InTime => v,
    };
    let mut acc = 0.0;
    for i in 1..ts.len() {
        let dt = ts[i] - ts[i - 1];
        acc += 0.5 * dt * (f(vals[i]) + f(vals[i - 1]));
    }
    match kind {
        TimeIntegralKind::L2InTime => acc.max(0.0).sqrt(),
        TimeIntegralKind::L1InTime => acc,
    }
}

/// Incremental norm-sample recorder with a sample-count cap: on long runs it
/// keeps every `stride`-th step (stride chosen by the caller), but always
/// records the final time when asked.
#[derive(Debug, Clone, Default)]
pub struct NormSeries {
    pub ts: Vec<f64>,
    pub l2: Vec<f64>,
    pub linf: Vec<f64>,
}

impl NormSeries {
    pub fn push(&mut self, t: f64, l2: f64, linf: f64) {
        self.ts.push(t);
        self.l2.push(l2);
        self.linf.push(linf);
    }

    pub fn ti_l2(&self) -> f64 {
        time_integrated(&self.ts, &self.l2, TimeIntegralKind::L2InTime)
    }

    pub fn ti_linf(&self) -> f64 {
        time_integrated(&self.ts, &self.linf, TimeIntegralKind::L1InTime)
    }
}

/// Convergence-rate fit over a refinement sequence.
#[derive(Debug, Clone)]
pub struct RateFit {
    /// `log(e_{l-1}/e_l) / log(h_{l-1}/h_l)` per refinement step
    /// (NaN where either error vanishes or is not finite).
    pub pairwise: Vec<f64>,
    /// Least-squares slope of log e against log h over the finite samples.
    pub ls_slope: f64,
}

/// Fit observed orders from mesh scales `hs` and errors `errs` (same length,
/// coarse to fine).
pub fn fit_rates(hs: &[f64], errs: &[f64]) -> RateFit {
    assert_eq!(hs.len(), errs.len());
    let mut pairwise = Vec::new();
    for l in 1..hs.len() {
        let ok = errs[l - 1] > 0.0
            && errs[l] > 0.0
            && errs[l - 1].is_finite()
            && errs[l].is_finite();
        pairwise.push(if ok {
            (errs[l - 1] / errs[l]).ln() / (hs[l - 1] / hs[l]).ln()
        } else {
            f64::NAN
        });
    }
    // least squares on (log h, log e)
    let pts: Vec<(f64, f64)> = hs
        .iter()
        .zip(errs)
        .filter(|(_, &e)| e > 0.0 && e.is_finite())
        .map(|(&h, &e)| (h.ln(), e.ln()))
        .collect();
    let ls_slope = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    } else {
        f64::NAN
    };
    RateFit { pairwise, ls_slope }
}

/// One refinement level of a convergence study.
#[derive(Debug, Clone)]
pub struct LevelRow {
    pub level: usize,
    pub n: usize,
    pub h: f64,
    pub l2: f64,
    pub linf: f64,
    pub ti_l2: f64,
    pub ti_linf: f64,
}

/// A finished convergence study: per-level errors plus fitted rates.
#[derive(Debug, Clone, Default)]
pub struct ErrorReport {
    pub rows: Vec<LevelRow>,
}

impl ErrorReport {
    pub fn push(&mut self, row: LevelRow) {
        self.rows.push(row);
    }

    fn hs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.h).collect()
    }

    pub fn rates_l2(&self) -> RateFit {
        fit_rates(&self.hs(), &self.rows.iter().map(|r| r.l2).collect::<Vec<_>>())
    }

    pub fn rates_linf(&self) -> RateFit {
        fit_rates(&self.hs(), &self.rows.iter().map(|r| r.linf).collect::<Vec<_>>())
    }

    pub fn rates_ti_l2(&self) -> RateFit {
        fit_rates(&self.hs(), &self.rows.iter().map(|r| r.ti_l2).collect::<Vec<_>>())
    }

    pub fn rates_ti_linf(&self) -> RateFit {
        fit_rates(&self.hs(), &self.rows.iter().map(|r| r.ti_linf).collect::<Vec<_>>())
    }

    /// Render the fixed CSV schema
    /// `level,n,h,l2,linf,rate_l2,rate_linf,ti_l2,ti_linf`
    /// with `meta` lines as leading `#` comments. All floats print with
    /// `{:.12e}` so re-runs are byte-comparable; undefined rates print `nan`.
    pub fn to_csv(&self, meta: &[String]) -> String {
        let mut out = String::new();
        for m in meta {
            out.push_str("# ");
            out.push_str(m);
            out.push('\n');
        }
        out.push_str("level,n,h,l2,linf,rate_l2,rate_linf,ti_l2,ti_linf\n");
        let rl2 = self.rates_l2().pairwise;
        let rli = self.rates_linf().pairwise;
        for (i, r) in self.rows.iter().enumerate() {
            let rate_l2 = if i == 0 { f64::NAN } else { rl2[i - 1] };
            let rate_li = if i == 0 { f64::NAN } else { rli[i - 1] };
            out.push_str(&format!(
                "{},{},{:.12e},{:.12e},{:.12e},{},{},{:.12e},{:.12e}\n",
                r.level,
                r.n,
                r.h,
                r.l2,
                r.linf,
                fmt_rate(rate_l2),
                fmt_rate(rate_li),
                r.ti_l2,
                r.ti_linf,
            ));
        }
        out
    }
}

fn fmt_rate(r: f64) -> String {
    if r.is_nan() {
        "nan".to_string()
    } else {
        format!("{r:.6}")
    }
}

/// A self-contained gnuplot script plotting the l2 column of each CSV on a
/// log-log scale against h, with a reference slope.
pub fn gnuplot_script(csv_paths: &[String], title: &str, reference_order: f64) -> String {
    let mut s = String::new();
    s.push_str("set logscale xy\n");
    s.push_str("set key bottom right\n");
    s.push_str(&format!("set title '{title}'\n"));
    s.push_str("set xlabel 'h'\nset ylabel 'error'\n");
    s.push_str("set datafile separator ','\n");
    let mut plots: Vec<String> = csv_paths
        .iter()
        .map(|p| format!("'{p}' using 3:4 with linespoints title '{p}'"))
        .collect();
    plots.push(format!(
        "x**{reference_order} * 1e-1 with lines dashtype 2 title 'order {reference_order}'"
    ));
    s.push_str(&format!("plot {}\n", plots.join(", \\\n     ")));
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_cartesian, Rect};
    use approx::assert_relative_eq;

    #[test]
    fn discrete_l2_constant_reference_value() {
        let mesh = build_cartesian(Rect::unit(), 1, 2).unwrap();
        let e = vec![1.0; mesh.n_nodes()];
        assert_relative_eq!(discrete_l2(&e, &mesh), 1.5, epsilon = 1e-15);
        assert_relative_eq!(discrete_linf(&e), 1.0);
    }

    #[test]
    fn discrete_l2_scales_with_h() {
        // e = 1 everywhere: l2 = h sqrt((2n+1)^2) for k = 2
        let mesh = build_cartesian(Rect::unit(), 4, 2).unwrap();
        let e = vec![1.0; mesh.n_nodes()];
        let h = 1.0 / 8.0;
        assert_relative_eq!(discrete_l2(&e, &mesh), h * 9.0, epsilon = 1e-13);
    }

    #[test]
    fn time_integrals_on_linear_series() {
        let ts: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let vals: Vec<f64> = ts.clone();
        // trapezoid is exact for v(t) = t
        assert_relative_eq!(
            time_integrated(&ts, &vals, TimeIntegralKind::L1InTime),
            0.5,
            epsilon = 1e-14
        );
        // sqrt(int t^2) = sqrt(1/3); trapezoid error O(dt^2)
        assert_relative_eq!(
            time_integrated(&ts, &vals, TimeIntegralKind::L2InTime),
            (1.0f64 / 3.0).sqrt(),
            epsilon = 1e-4
        );
        assert_eq!(time_integrated(&[0.0], &[3.0], TimeIntegralKind::L1InTime), 0.0);
    }

    #[test]
    fn norm_series_accumulates() {
        let mut s = NormSeries::default();
        for i in 0..=10 {
            let t = i as f64 * 0.1;
            s.push(t, 2.0, 3.0);
        }
        assert_relative_eq!(s.ti_l2(), 2.0, epsilon = 1e-13);
        assert_relative_eq!(s.ti_linf(), 3.0, epsilon = 1e-13);
    }

    #[test]
    fn fit_rates_recovers_synthetic_order() {
        let hs: Vec<f64> = (0..5).map(|l| 0.5f64.powi(l)).collect();
        let errs: Vec<f64> = hs.iter().map(|h| 3.0 * h.powf(3.5)).collect();
        let fit = fit_rates(&hs, &errs);
        for r in &fit.pairwise {
            assert_relative_eq!(*r, 3.5, epsilon = 1e-10);
        }
        assert_relative_eq!(fit.ls_slope, 3.5, epsilon = 1e-10);
    }

    #[test]
    fn fit_rates_handles_vanishing_error() {
        let hs = vec![0.5, 0.25, 0.125];
        let errs = vec![1e-3, 0.0, 1e-5];
        let fit = fit_rates(&hs, &errs);
        assert!(fit.pairwise[0].is_nan() && fit.pairwise[1].is_nan());
        assert!(fit.ls_slope.is_finite()); // two finite points remain
    }

    #[test]
    fn csv_schema_and_formatting() {
        let mut rep = ErrorReport::default();
        rep.push(LevelRow { level: 0, n: 4, h: 0.125, l2: 1e-3, linf: 2e-3, ti_l2: 3e-3, ti_linf: 4e-3 });
        rep.push(LevelRow { level: 1, n: 8, h: 0.0625, l2: 1e-3 / 16.0, linf: 2e-3 / 16.0, ti_l2: 3e-3 / 16.0, ti_linf: 4e-3 / 16.0 });
        let csv = rep.to_csv(&["case=test".to_string()]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "# case=test");
        assert_eq!(
            lines.next().unwrap(),
            "level,n,h,l2,linf,rate_l2,rate_linf,ti_l2,ti_linf"
        );
        let row0 = lines.next().unwrap();
        assert!(row0.starts_with("0,4,1.250000000000e-1,1.000000000000e-3"));
        assert!(row0.contains(",nan,nan,"));
        let row1 = lines.next().unwrap();
        assert!(row1.contains(",4.000000,4.000000,"), "{row1}");
    }

    #[test]
    fn gnuplot_script_mentions_files() {
        let s = gnuplot_script(&["a.csv".into(), "b.csv".into()], "study", 4.0);
        assert!(s.contains("a.csv") && s.contains("b.csv") && s.contains("logscale"));
    }
}
