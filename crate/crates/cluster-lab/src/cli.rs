//! Command-line entry point: one subcommand per verification suite.
//!
//! Every suite resolves its full configuration into the report, uses only
//! explicit seeds, and emits deterministic output: the same invocation
//! produces byte-identical bytes. Environment variables with the
//! `CLUSTER_LAB_` prefix mirror the corresponding flags.

use crate::covariance::{self, KernelParams};
use crate::gaussian::{self, CovarianceMatrix, Grid};
use crate::geometry::{self, PointConfiguration};
use crate::ksolver::{KsConfig, Solver};
use crate::model::{box_mask, Method, Model};
use crate::poly::Monomial;
use crate::report::Report;
use crate::trees;
use crate::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "cluster-lab", version, about = "Numerical laboratory for a continuous cluster expansion")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output path; stdout when absent.
    #[arg(long, global = true, env = "CLUSTER_LAB_OUT")]
    out: Option<PathBuf>,
    /// Report format. CSV is only available for tabular subcommands.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json, env = "CLUSTER_LAB_FORMAT")]
    format: Format,
    /// Worker threads; only 1 (fully deterministic) is implemented.
    #[arg(long, global = true, default_value_t = 1, env = "CLUSTER_LAB_THREADS")]
    threads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Args)]
struct SeedArg {
    /// Random seed; no wall-clock seeding anywhere.
    #[arg(long, default_value_t = 7, env = "CLUSTER_LAB_SEED")]
    seed: u64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate the regularized covariance, its full-range counterpart and
    /// the certified decay envelope.
    CovarianceTable {
        #[arg(long, default_value_t = 1)]
        dimension: usize,
        #[arg(long, default_value_t = 20.0)]
        r_max: f64,
        #[arg(long, default_value_t = 81)]
        steps: usize,
    },
    /// Random admissible configurations with their spanning and Steiner
    /// lengths and the bracketing inequality verdicts.
    TreeLengths {
        #[arg(long, default_value_t = 20)]
        count: usize,
        /// Points per configuration.
        #[arg(long, default_value_t = 6)]
        n: usize,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Exact tree-weight sum against the closed form.
    Lemma3 {
        #[arg(long, default_value_t = 6)]
        n: usize,
    },
    /// Interpolated-covariance positivity, the Wick engine dual routes and
    /// the moment constants.
    GaussianChecks {
        #[arg(long, default_value_t = 50_000, env = "CLUSTER_LAB_SAMPLES")]
        samples: usize,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Residual of the fundamental factorization identity.
    Identity13 {
        #[arg(long, default_value_t = 0.02, env = "CLUSTER_LAB_LAMBDA")]
        lambda: f64,
        /// Lattice spacing of the window.
        #[arg(long, default_value_t = 1.0, env = "CLUSTER_LAB_H")]
        h: f64,
        /// Half-width of the interaction window.
        #[arg(long, default_value_t = 3.0, env = "CLUSTER_LAB_WINDOW")]
        window: f64,
        /// Configuration length (1 or 2).
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 200_000, env = "CLUSTER_LAB_SAMPLES")]
        samples: usize,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Solve the fixed point, certify contraction and the operator norm,
    /// optionally resuming from a checkpoint.
    KsSolve {
        #[arg(long, default_value_t = 0.02, env = "CLUSTER_LAB_LAMBDA")]
        lambda: f64,
        #[arg(long, default_value_t = 3, env = "CLUSTER_LAB_NMAX")]
        nmax: usize,
        #[arg(long, default_value_t = 3, env = "CLUSTER_LAB_MMAX")]
        mmax: usize,
        #[arg(long, default_value_t = 4.0)]
        z_extent: f64,
        #[arg(long, default_value_t = 40_000, env = "CLUSTER_LAB_SAMPLES")]
        samples: usize,
        #[arg(long, default_value_t = 1e-10, env = "CLUSTER_LAB_TOL")]
        tol: f64,
        /// Coefficient cache file; loaded when present, written after the run.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Connected two-point function: expansion against brute-force
    /// differentiation of the generating functional.
    SchwingerCompare {
        #[arg(long, default_value_t = 0.02, env = "CLUSTER_LAB_LAMBDA")]
        lambda: f64,
        /// Separations; must be lattice multiples of 0.5.
        #[arg(long = "sep", default_values_t = vec![1.5, 2.0, 3.0])]
        seps: Vec<f64>,
        #[arg(long, default_value_t = 40_000, env = "CLUSTER_LAB_SAMPLES")]
        samples: usize,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// The whole battery at reduced scale; deterministic end to end.
    FullSuite {
        #[command(flatten)]
        seed: SeedArg,
    },
}

/// Parse the arguments and run; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return 2;
        }
    };
    match execute(&cli) {
        Ok(Output::Report(report)) => {
            let rendered = match cli.format {
                Format::Json => report.to_json(),
                Format::Text => report.to_text(),
                Format::Csv => {
                    eprintln!("error: CSV output is only available for tabular subcommands");
                    return 2;
                }
            };
            if emit(&cli, &rendered).is_err() {
                return 2;
            }
            if report.all_pass() {
                0
            } else {
                1
            }
        }
        Ok(Output::Table(csv)) => {
            if cli.format == Format::Text {
                eprintln!("error: tabular subcommands emit CSV");
                return 2;
            }
            if emit(&cli, &csv).is_err() {
                return 2;
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

enum Output {
    Report(Report),
    Table(String),
}

fn emit(cli: &Cli, rendered: &str) -> Result<()> {
    match &cli.out {
        Some(path) => {
            std::fs::write(path, rendered)?;
        }
        None => print!("{rendered}"),
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<Output> {
    if cli.threads != 1 {
        return Err(Error::Capability(
            "only --threads 1 is implemented; reports are strictly sequential".into(),
        ));
    }
    match &cli.command {
        Command::CovarianceTable {
            dimension,
            r_max,
            steps,
        } => covariance_table(*dimension, *r_max, *steps).map(Output::Table),
        Command::TreeLengths { count, n, seed } => {
            tree_lengths(*count, *n, seed.seed).map(Output::Report)
        }
        Command::Lemma3 { n } => lemma3(*n).map(Output::Report),
        Command::GaussianChecks { samples, seed } => {
            gaussian_checks(*samples, seed.seed).map(Output::Report)
        }
        Command::Identity13 {
            lambda,
            h,
            window,
            n,
            samples,
            seed,
        } => identity13(*lambda, *h, *window, *n, *samples, seed.seed).map(Output::Report),
        Command::KsSolve {
            lambda,
            nmax,
            mmax,
            z_extent,
            samples,
            tol,
            checkpoint,
            seed,
        } => ks_solve(
            *lambda,
            *nmax,
            *mmax,
            *z_extent,
            *samples,
            *tol,
            checkpoint.as_deref(),
            seed.seed,
        )
        .map(Output::Report),
        Command::SchwingerCompare {
            lambda,
            seps,
            samples,
            seed,
        } => schwinger_compare(*lambda, seps, *samples, seed.seed).map(Output::Report),
        Command::FullSuite { seed } => full_suite(seed.seed).map(Output::Report),
    }
}

fn covariance_table(dimension: usize, r_max: f64, steps: usize) -> Result<String> {
    if steps < 2 {
        return Err(Error::Domain("the table needs at least two rows".into()));
    }
    let params = KernelParams::new(dimension, 32)?;
    let cert = covariance::decay_constant(&params, r_max.max(10.0), 2000)?;
    let mut out = String::from("r,c_reg,c_full,envelope\n");
    for i in 0..steps {
        let r = r_max * i as f64 / (steps - 1) as f64;
        let creg = covariance::covariance_r(r, &params)?;
        let cfull = if r == 0.0 && dimension > 1 {
            f64::NAN
        } else {
            covariance::full_covariance_r(r, dimension)?
        };
        let envelope = cert.c1 * (-2.0 * r).exp();
        let _ = writeln!(out, "{r},{creg},{cfull},{envelope}");
    }
    Ok(out)
}

fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| vec![rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0)])
        .collect()
}

fn tree_lengths(count: usize, n: usize, seed: u64) -> Result<Report> {
    if !(2..=8).contains(&n) {
        return Err(Error::Domain("points per configuration must be 2..=8".into()));
    }
    let mut report = Report::new("tree-lengths");
    report.param("count", count);
    report.param("n", n);
    report.param("seed", seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..count {
        let points = random_points(&mut rng, n);
        let res = geometry::steiner_length_seeded(&points, 1e-7, seed ^ i as u64)?;
        report.record(&format!("mst_{i:03}"), res.mst_length);
        report.record(&format!("steiner_upper_{i:03}"), res.steiner_upper);
        report.record(&format!("steiner_lower_{i:03}"), res.steiner_lower);
        // bracket: lower <= upper <= spanning <= 2 * upper
        let ok = res.steiner_lower <= res.steiner_upper + 1e-9
            && res.steiner_upper <= res.mst_length + 1e-9
            && res.mst_length <= 2.0 * res.steiner_upper + 1e-9;
        report.check_flag(
            &format!("bracket_{i:03}"),
            ok,
            res.steiner_upper / res.mst_length.max(f64::MIN_POSITIVE),
        );
    }
    Ok(report)
}

fn lemma3(n: usize) -> Result<Report> {
    let mut report = Report::new("lemma3");
    report.param("n", n);
    let sum = trees::lemma3_sum(n)?;
    let closed = trees::catalan_closed_form(n);
    report.record("tree_sum", sum.to_f64().unwrap_or(f64::NAN));
    report.record("closed_form", closed.to_f64().unwrap_or(f64::NAN));
    report.check_flag(
        "exact_identity",
        sum == closed,
        sum.to_f64().unwrap_or(f64::NAN),
    );
    Ok(report)
}

fn gaussian_checks(samples: usize, seed: u64) -> Result<Report> {
    let mut report = Report::new("gaussian-checks");
    report.param("samples", samples);
    report.param("seed", seed);
    let params = KernelParams::d1();
    let grid = Grid::line(-3.0, 3.0, 1.0)?;
    let base = CovarianceMatrix::on_grid(&grid, &params)?;

    // interpolation positivity over random states
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_eig = f64::INFINITY;
    for _ in 0..50 {
        let pts = vec![vec![rng.gen_range(-2.0..0.0)], vec![rng.gen_range(1.1..2.0)]];
        let config = match PointConfiguration::new(pts) {
            Ok(c) => c,
            Err(_) => continue,
        };
        let t: Vec<f64> = (0..config.len()).map(|_| rng.gen()).collect();
        let state = gaussian::InterpolationState::new(t, config)?;
        let interp = gaussian::interpolate(&base, &grid, &state)?;
        min_eig = min_eig.min(interp.min_eigenvalue());
    }
    report.check_bound("interpolation_min_eigenvalue", -min_eig, 1e-10 * base.dim() as f64);

    // Wick dual routes through moderate degree
    let mut max_rel = 0.0f64;
    for degree in [4u32, 6, 8] {
        let mut m = Monomial::new();
        m.insert(0, degree / 2);
        m.insert(2, degree / 2);
        let a = gaussian::wick_moment(&base, &m)?;
        let b = gaussian::wick_moment_matchings(&base, &m)?;
        max_rel = max_rel.max((a - b).abs() / b.abs().max(1e-300));
    }
    report.check_residual("wick_dual_route_rel", max_rel, 1e-12);

    // stationary-point constant
    let c = gaussian::lemma1_constant();
    let xi = gaussian::lemma1_stationary_point();
    report.record("lemma1_xi", xi);
    report.check_residual(
        "lemma1_constant",
        c - xi.powi(4) * (2f64.powf(4.0 / 3.0) - 2.0),
        1e-10,
    );

    // absolute-moment envelope constants
    let externals = vec![vec![10.0], vec![14.0], vec![18.0]];
    let config = PointConfiguration::new(vec![vec![0.0], vec![1.5]])?;
    let scan = gaussian::lemma2_constant_scan(
        &params,
        &externals,
        &config,
        &[0.5, 0.5],
        3,
        2,
        samples,
        &mut rng,
    )?;
    report.record("lemma2_c3", scan.c3);
    report.record("lemma2_c4", scan.c4);
    report.check_flag(
        "lemma2_constants_finite",
        scan.c3.is_finite() && scan.c4.is_finite() && scan.c3 >= 1.0 && scan.c4 >= 1.0,
        scan.c3.max(scan.c4),
    );
    Ok(report)
}

fn identity13(
    lambda: f64,
    h: f64,
    window: f64,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<Report> {
    let mut report = Report::new("identity13");
    report.param("lambda", lambda);
    report.param("h", h);
    report.param("window", window);
    report.param("n", n);
    report.param("samples", samples);
    report.param("seed", seed);
    let grid = Grid::line(-window - 2.0, window + 2.0, h)?;
    let model = Model::new(grid, KernelParams::d1(), lambda)?;
    let region = box_mask(&model.grid, &[-window], &[window])?;
    let config = match n {
        1 => PointConfiguration::new(vec![vec![0.0]])?,
        2 => PointConfiguration::new(vec![vec![0.0], vec![(1.5 / h).ceil() * h]])?,
        _ => {
            return Err(Error::Capability(
                "identity check supports configurations of length 1 or 2".into(),
            ))
        }
    };
    let method = Method::Hybrid { samples, seed };
    let rep = model.identity13_residual(&region, &config, &method)?;
    report.record("lhs", rep.lhs);
    report.record("factorized", rep.factorized);
    report.record("tail", rep.tail);
    report.record("std_err", rep.std_err);
    report.check_residual("identity_residual", rep.residual, 3.0 * rep.std_err + 1e-8);
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn ks_solve(
    lambda: f64,
    nmax: usize,
    mmax: usize,
    z_extent: f64,
    samples: usize,
    tol: f64,
    checkpoint: Option<&std::path::Path>,
    seed: u64,
) -> Result<Report> {
    let mut report = Report::new("ks-solve");
    let cfg = KsConfig {
        lambda,
        n_max: nmax,
        m_max: mmax,
        z_extent,
        grid_extent: 2.0 * z_extent + 6.0,
        samples,
        seed,
        picard_tol: tol,
        ..KsConfig::default()
    };
    report.param("lambda", lambda);
    report.param("n_max", nmax);
    report.param("m_max", mmax);
    report.param("z_extent", z_extent);
    report.param("samples", samples);
    report.param("seed", seed);
    report.param("picard_tol", tol);
    let mut solver = Solver::new(cfg)?;
    if let Some(path) = checkpoint {
        if path.exists() {
            let restored = solver.load_checkpoint(path)?;
            report.record("checkpoint_entries_loaded", restored as f64);
        }
    }
    let sol = solver.solve_f0()?;
    report.record("picard_iterations", sol.iterations as f64);
    report.record("picard_final_change", sol.final_change);
    report.check_bound("picard_contraction_ratio", sol.contraction_ratio, 0.8);
    let norm = solver.a0_norm()?;
    report.check_bound("a0_norm", norm.norm_bound, 0.75);
    for (name, ratio) in &norm.witness_ratios {
        report.record(&format!("witness_{name}"), *ratio);
        report.check_bound(&format!("witness_{name}_below_norm"), *ratio, norm.norm_bound + 1e-12);
    }
    let f2 = solver.solve_f2(&sol.table, 0, 3)?;
    report.record("f2_norm", f2.norm2);
    report.check_flag("f2_norm_finite", f2.norm2.is_finite(), f2.norm2);
    report.record("truncation", solver.truncation);
    report.record("coefficient_std_err", solver.coefficient_std_err);
    report.record("cache_entries", solver.cache_len() as f64);
    if let Some(path) = checkpoint {
        solver.save_checkpoint(path)?;
    }
    Ok(report)
}

fn schwinger_compare(lambda: f64, seps: &[f64], samples: usize, seed: u64) -> Result<Report> {
    let mut report = Report::new("schwinger-compare");
    report.param("lambda", lambda);
    report.param("seps", seps);
    report.param("samples", samples);
    report.param("seed", seed);
    let h = 0.5;
    let cfg = KsConfig {
        lambda,
        samples,
        seed,
        ..KsConfig::default()
    };
    let mut solver = Solver::new(cfg)?;
    let f0 = solver.solve_f0()?.table;
    let params = KernelParams::d1();
    for &sep in seps {
        let units = (sep / h).round() as i64;
        if (units as f64 * h - sep).abs() > 1e-9 || units <= 0 {
            return Err(Error::Domain(format!(
                "separation {sep} is not a positive lattice multiple of {h}"
            )));
        }
        let expansion = solver.schwinger_two_point(&f0, units)?;
        let tag = format!("sep_{sep}");
        report.record(&format!("{tag}_expansion"), expansion.value);
        report.record(&format!("{tag}_expansion_std_err"), expansion.std_err);
        if lambda == 0.0 {
            let exact = covariance::covariance_r(sep, &params)?;
            report.record(&format!("{tag}_exact"), exact);
            report.check_residual(&format!("{tag}_free_residual"), expansion.value - exact, 1e-8);
        } else {
            let model = brute_force_model(lambda, sep)?;
            let region = vec![true; model.grid.len()];
            let a = model
                .grid
                .site_index(&[0.0])
                .ok_or_else(|| Error::Domain("anchor off the grid".into()))?;
            let b = model
                .grid
                .site_index(&[sep])
                .ok_or_else(|| Error::Domain("separation off the grid".into()))?;
            let brute = model.connected_two_point(
                &region,
                a,
                b,
                &Method::Hybrid {
                    samples: samples.max(200_000),
                    seed: seed ^ 0x5eed,
                },
            )?;
            report.record(&format!("{tag}_bruteforce"), brute.value);
            report.record(&format!("{tag}_bruteforce_std_err"), brute.std_err);
            let sigma = (expansion.std_err.powi(2) + brute.std_err.powi(2)).sqrt();
            let tolerance = 3.0 * sigma + solver.truncation.max(1e-6);
            report.record(&format!("{tag}_mc_sigma"), sigma);
            report.record(&format!("{tag}_truncation"), solver.truncation);
            report.check_residual(
                &format!("{tag}_oracle_residual"),
                expansion.value - brute.value,
                tolerance,
            );
        }
    }
    // decay regression over a separation ladder
    let mut points = Vec::new();
    for units in [3i64, 4, 5, 6, 7, 8] {
        let s = solver.schwinger_two_point(&f0, units)?;
        if s.value.abs() > 0.0 {
            points.push((units as f64 * h, s.value.abs().ln()));
        }
    }
    if points.len() >= 4 {
        let slope = regression_slope(&points);
        report.record("log_decay_slope", slope);
        report.check_bound("decay_slope", slope, -0.85);
    }
    Ok(report)
}

/// Brute-force window: the separation plus generous margins on both sides.
fn brute_force_model(lambda: f64, sep: f64) -> Result<Model> {
    let grid = Grid::line(-4.0, sep + 4.0, 0.5)?;
    Model::new(grid, KernelParams::d1(), lambda)
}

fn regression_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

fn full_suite(seed: u64) -> Result<Report> {
    let mut report = Report::new("full-suite");
    report.param("seed", seed);

    // exact combinatorics
    for n in 2..=8 {
        let sub = lemma3(n)?;
        merge(&mut report, &format!("lemma3_n{n}"), &sub);
    }

    // kernel decay certificate
    let params = KernelParams::d1();
    let cert = covariance::decay_constant(&params, 20.0, 2000)?;
    report.record("decay_c1", cert.c1);
    report.check_bound("decay_violation", cert.max_violation, 0.0);

    // geometry bracket on a deterministic battery
    let sub = tree_lengths(25, 5, seed)?;
    merge(&mut report, "geometry", &sub);

    // Gaussian layer
    let sub = gaussian_checks(50_000, seed)?;
    merge(&mut report, "gaussian", &sub);

    // fundamental identity at small coupling
    let sub = identity13(0.005, 1.0, 2.0, 1, 100_000, seed)?;
    merge(&mut report, "identity13", &sub);

    // reduced-scale fixed point and free-theory reconstruction
    let cfg = KsConfig {
        lambda: 0.01,
        z_extent: 3.0,
        grid_extent: 9.0,
        m_max: 2,
        samples: 20_000,
        seed,
        ..KsConfig::default()
    };
    let mut solver = Solver::new(cfg.clone())?;
    let sol = solver.solve_f0()?;
    report.check_bound("ks_contraction_ratio", sol.contraction_ratio, 0.8);
    let norm = solver.a0_norm()?;
    report.check_bound("ks_a0_norm", norm.norm_bound, 0.75);
    let mut free = Solver::new(KsConfig {
        lambda: 0.0,
        ..cfg
    })?;
    let f0 = free.solve_f0()?.table;
    let s = free.schwinger_two_point(&f0, 3)?;
    let exact = covariance::covariance_r(1.5, &params)?;
    report.check_residual("ks_free_two_point", s.value - exact, 1e-8);
    Ok(report)
}

/// Copy a sub-report into the suite report under a prefix.
fn merge(into: &mut Report, prefix: &str, sub: &Report) {
    for c in &sub.checks {
        into.checks.push(crate::report::Check {
            name: format!("{prefix}.{}", c.name),
            value: c.value,
            tolerance: c.tolerance,
            pass: c.pass,
        });
    }
    for (k, v) in &sub.values {
        into.values.insert(format!("{prefix}.{k}"), *v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["cluster-lab", "no-such-subcommand"]), 2);
        assert_eq!(run(["cluster-lab", "lemma3", "--bogus"]), 2);
    }

    #[test]
    fn lemma3_passes() {
        let report = lemma3(6).unwrap();
        assert!(report.all_pass());
        assert_eq!(report.values["tree_sum"], 42.0);
    }

    #[test]
    fn covariance_table_is_csv() {
        let csv = covariance_table(1, 5.0, 6).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[0], "r,c_reg,c_full,envelope");
        // every covariance value sits under its envelope
        for line in &lines[1..] {
            let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
            assert!(cols[1] <= cols[3] + 1e-12);
        }
    }

    #[test]
    fn tree_lengths_deterministic() {
        let a = tree_lengths(5, 4, 11).unwrap().to_json();
        let b = tree_lengths(5, 4, 11).unwrap().to_json();
        assert_eq!(a, b);
    }

    #[test]
    fn identity13_small_window_passes() {
        let report = identity13(0.0, 1.0, 2.0, 1, 100, 3).unwrap();
        assert!(report.all_pass(), "{}", report.to_text());
    }
}
