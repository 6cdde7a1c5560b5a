//! Command-line front end: `gll`, `op-probe`, `run`, `suite`.
//!
//! Every subcommand is a thin shell around the library; all numerics live in
//! `sem2d` proper. Output is deterministic — identical invocations reproduce
//! identical bytes, whatever the thread count.

use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use sem2d::operator::SemOperator;
use sem2d::problems::Problem;
use sem2d::runner::{self, FamilySpec, RunConfig};

#[derive(Parser)]
#[command(
    name = "sem2d",
    version,
    about = "Q^k Gauss-Lobatto spectral elements: wave, parabolic, and Schrodinger benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the degree-k Gauss-Lobatto nodes and weights as CSV.
    Gll {
        /// Polynomial degree (2..=16); prints k+1 node/weight pairs on [-1, 1].
        #[arg(long)]
        k: usize,
    },
    /// Assemble the operator on a small mesh and dump it in coordinate format.
    OpProbe {
        /// Benchmark problem supplying coefficients and boundary conditions.
        #[arg(long, default_value = "square-dirichlet")]
        problem: String,
        #[arg(long, default_value_t = 2)]
        k: usize,
        /// Elements per side.
        #[arg(long, default_value_t = 2)]
        n: usize,
        /// Mesh family (auto | cartesian | random | smooth | annulus:...).
        #[arg(long, default_value = "auto")]
        mesh: String,
        /// Assembly time for time-dependent coefficients.
        #[arg(long, default_value_t = 0.0)]
        t: f64,
        /// Dump `shift * M + A` instead of `A` alone.
        #[arg(long, default_value_t = 0.0)]
        shift: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Run one convergence study (config file and/or flag overrides).
    Run {
        /// Flat `key = value` config file; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        problem: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        mesh: Option<String>,
        /// Comma-separated refinement list, e.g. 4,8,16,32.
        #[arg(long)]
        levels: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Wave time-integration order (4 or 6).
        #[arg(long)]
        order: Option<usize>,
        /// Initial-data rule: interpolant | elliptic-projection.
        #[arg(long)]
        initial: Option<String>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Also write a gnuplot script next to the CSV.
        #[arg(long)]
        gnuplot: bool,
        /// Worker threads (0 = library default). Results are identical
        /// whatever the value; the flag exists to demonstrate that.
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Run the whole benchmark matrix and write per-case CSVs + summary.csv.
    Suite {
        /// Cap on the finest refinement level (e.g. 8 for a quick pass).
        #[arg(long)]
        max_n: Option<usize>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
}

fn main() {
    if let Err(e) = real_main() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn real_main() -> sem2d::Result<()> {
    match Cli::parse().cmd {
        Cmd::Gll { k } => cmd_gll(k),
        Cmd::OpProbe { problem, k, n, mesh, t, shift, seed } => {
            cmd_op_probe(&problem, k, n, &mesh, t, shift, seed)
        }
        Cmd::Run {
            config,
            problem,
            k,
            mesh,
            levels,
            seed,
            order,
            initial,
            out_dir,
            gnuplot,
            threads,
        } => {
            let mut cfg = RunConfig::default();
            if let Some(path) = config {
                cfg.apply_config_file(&path)?;
            }
            let mut set = |key: &str, v: Option<String>| -> sem2d::Result<()> {
                if let Some(v) = v {
                    cfg.apply_pair(key, &v)?;
                }
                Ok(())
            };
            set("problem", problem)?;
            set("k", k.map(|v| v.to_string()))?;
            set("mesh", mesh)?;
            set("levels", levels)?;
            set("seed", seed.map(|v| v.to_string()))?;
            set("order", order.map(|v| v.to_string()))?;
            set("initial", initial)?;
            set("out_dir", out_dir.map(|p| p.display().to_string()))?;
            if gnuplot {
                cfg.apply_pair("gnuplot", "true")?;
            }
            let out = runner::with_thread_pool(threads, || runner::run(&cfg))?;
            print!("{}", runner::render_table(&out.report));
            println!("wrote {}", out.csv_path.display());
            if let Some(gp) = &out.gnuplot_path {
                println!("wrote {}", gp.display());
            }
            Ok(())
        }
        Cmd::Suite { max_n, out_dir, threads } => {
            let outcome =
                runner::with_thread_pool(threads, || runner::run_suite(max_n, &out_dir))?;
            print!("{}", outcome.summary_csv);
            println!("wrote {}", outcome.summary_path.display());
            let errs = outcome.rows.iter().filter(|r| r.error.is_some()).count();
            let oob = outcome
                .rows
                .iter()
                .filter(|r| r.error.is_none() && !r.in_band)
                .count();
            println!(
                "{} cases: {} in band, {} out of band, {} errored",
                outcome.rows.len(),
                outcome.rows.len() - errs - oob,
                oob,
                errs
            );
            if errs > 0 {
                std::process::exit(1);
            }
            Ok(())
        }
    }
}

/// `gll --k`: nodes and weights at full double precision (17 digits after
/// the point = 18 significant digits, enough to reproduce the f64 exactly).
fn cmd_gll(k: usize) -> sem2d::Result<()> {
    let rule = sem2d::gll::gll_rule(k)?;
    println!("i,node,weight");
    for (i, (x, w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
        println!("{i},{x:.17e},{w:.17e}");
    }
    Ok(())
}

/// `op-probe`: coordinate-format dump of `shift * M + A` so external tools
/// (or a notebook) can check symmetry, Gershgorin bounds, or stencils.
fn cmd_op_probe(
    problem: &str,
    k: usize,
    n: usize,
    mesh_name: &str,
    t: f64,
    shift: f64,
    seed: u64,
) -> sem2d::Result<()> {
    let problem = Problem::by_name(problem)?;
    let family = FamilySpec::parse(mesh_name)?.resolve(&problem)?;
    let mesh = Arc::new(family.build(&problem, n, k, seed)?);
    let op = SemOperator::new(
        Arc::clone(&mesh),
        problem.coeffs.clone(),
        problem.boundary_condition(),
    )?;
    println!("# problem={} mesh={} k={k} n={n} t={t:.6} shift={shift:.6}", problem.name, family.name());
    println!("# n_nodes={} constrained={}", mesh.n_nodes(), op.constrained().iter().filter(|&&c| c).count());
    println!("row,col,value");
    for (r, c, v) in op.assemble_triplets(t, shift) {
        println!("{r},{c},{v:.17e}");
    }
    Ok(())
}

