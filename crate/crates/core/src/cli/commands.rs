//! Subcommand bodies. Each turns a resolved config into a [`Report`].

use super::config::{ExperimentConfig, Mode};
use super::output::{Cell, Report, Table};
use super::CliError;
use crate::detector::DetectorConfig;
use crate::montecarlo::concentration::ConcentrationSetup;
use crate::montecarlo::export::write_outcomes_csv;
use crate::montecarlo::{
    concentration_experiment, default_horizon, derive_seed, estimate_delay_ratio, find_concentrated_matrix,
    ConcentrationForm, MonteCarloEstimate, Simulator, TrialSpec,
};
use crate::sensing::{build_matrix, generate_sparse_signal, projection_energy, Construction, SensingMatrix, Signal};
use crate::theory::{
    add_asymptotic, add_bounds_projection, add_upper_toeplitz, concentration_probability, db_to_linear,
    delay_ratio_bounds, plan_crossover, plan_measurements, prior_rate, BoundInputs, DelayBounds, PlanInputs,
    ToeplitzInputs,
};

const SIGNAL_STREAM: u64 = 0;
const MATRIX_STREAM: u64 = 1;
const GAMMA_STREAM_BASE: u64 = 16;

/// Runtime settings that never affect results.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunContext {
    pub threads: Option<usize>,
}

pub fn run(mode: Mode, cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Report, CliError> {
    match mode {
        Mode::Plan => plan(cfg),
        Mode::Bounds => bounds(cfg),
        Mode::Ratio => ratio(cfg, ctx),
        Mode::Simulate => simulate(cfg, ctx),
        Mode::SweepAlpha => sweep_alpha(cfg, ctx),
        Mode::SweepGamma => sweep_gamma(cfg, ctx),
        Mode::Concentration => concentration(cfg, ctx),
    }
}

fn snr(cfg: &ExperimentConfig) -> f64 {
    db_to_linear(cfg.problem.snr_db)
}

fn signal(cfg: &ExperimentConfig) -> Result<Signal, CliError> {
    let n = cfg.problem.n;
    let norm = (snr(cfg) * cfg.problem.sigma2).sqrt();
    let seed = derive_seed(cfg.simulation.seed, SIGNAL_STREAM);
    Ok(generate_sparse_signal(n, cfg.sparsity(n), norm, seed)?)
}

/// One matrix for the experiment: the first concentration-passing draw, or
/// the first draw outright.
fn draw_matrix(cfg: &ExperimentConfig, m: usize, s: &Signal, stream: u64) -> Result<(SensingMatrix, usize), CliError> {
    let p = &cfg.problem;
    let master = derive_seed(cfg.simulation.seed, stream);
    if cfg.simulation.require_concentration {
        Ok(find_concentrated_matrix(
            p.construction,
            m,
            p.n,
            s,
            cfg.theory.delta,
            master,
            cfg.simulation.max_attempts,
        )?)
    } else {
        Ok((build_matrix(p.construction, m, p.n, derive_seed(master, 0))?, 1))
    }
}

fn bound_inputs(cfg: &ExperimentConfig, alpha: f64, gamma: f64) -> BoundInputs {
    BoundInputs {
        alpha,
        rho: cfg.detector.rho,
        snr: snr(cfg),
        gamma,
        delta: cfg.theory.delta,
    }
}

fn check_trials(n: usize) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::Config("simulation.n_trials must be at least 1".into()));
    }
    Ok(())
}

fn simulator(
    cfg: &ExperimentConfig,
    ctx: &RunContext,
    matrix: &SensingMatrix,
    s: &Signal,
    alpha: f64,
    horizon: u64,
) -> Result<Simulator, CliError> {
    let d = &cfg.detector;
    let detector = DetectorConfig::for_alpha(d.rho, d.pi0, cfg.problem.sigma2, alpha)?;
    let spec = TrialSpec::new(matrix.clone(), s.clone(), detector, horizon, cfg.simulation.seed)?;
    Ok(Simulator::new(spec)?
        .with_model_named(&cfg.simulation.model)?
        .with_threads(ctx.threads))
}

struct Point {
    alpha: f64,
    matrix_seed: Option<u64>,
    attempts: usize,
    rows: usize,
    cols: usize,
    energy: f64,
    bounds: DelayBounds,
    add_realized: f64,
    horizon: u64,
    estimate: MonteCarloEstimate,
}

/// Simulates one (matrix, α) point, optionally writing per-trial outcomes.
fn simulate_point(
    cfg: &ExperimentConfig,
    ctx: &RunContext,
    (matrix, attempts): (&SensingMatrix, usize),
    s: &Signal,
    alpha: f64,
    outcomes_path: Option<&std::path::Path>,
) -> Result<Point, CliError> {
    check_trials(cfg.simulation.n_trials)?;
    let (rows, cols) = (matrix.rows(), matrix.cols());
    let bounds = add_bounds_projection(&bound_inputs(cfg, alpha, rows as f64 / cols as f64))?;
    let energy = projection_energy(matrix, s)?;
    let add_realized = add_asymptotic(alpha, cfg.detector.rho, energy / (2.0 * cfg.problem.sigma2))?;
    let horizon = cfg
        .simulation
        .horizon
        .unwrap_or_else(|| default_horizon(bounds.add_upper.max(add_realized), cfg.detector.rho));
    let sim = simulator(cfg, ctx, matrix, s, alpha, horizon)?;
    let outcomes = sim.outcomes(cfg.simulation.n_trials)?;
    if let Some(path) = outcomes_path {
        let file = std::fs::File::create(path)
            .map_err(|e| CliError::Other(format!("cannot create {}: {e}", path.display())))?;
        write_outcomes_csv(&outcomes, std::io::BufWriter::new(file))?;
    }
    Ok(Point {
        alpha,
        matrix_seed: matrix.seed(),
        attempts,
        rows,
        cols,
        energy,
        bounds,
        add_realized,
        horizon,
        estimate: MonteCarloEstimate::from_outcomes(&outcomes),
    })
}

const POINT_COLUMNS: [&str; 24] = [
    "alpha",
    "abs_log_alpha",
    "threshold_a",
    "m",
    "n",
    "gamma",
    "matrix_seed",
    "matrix_attempts",
    "projection_energy",
    "add_hat",
    "add_ci_half",
    "pfa_hat",
    "pfa_ci_half",
    "pfa_ci_low",
    "pfa_ci_high",
    "add_lower",
    "add_upper",
    "add_realized",
    "in_bracket",
    "n_detections",
    "n_false_alarms",
    "n_censored",
    "horizon",
    "valid",
];

fn push_point(report: &mut Report, p: &Point) {
    let e = &p.estimate;
    let slack = report.config.theory.slack;
    let valid = e.check_censoring().is_ok();
    if !valid {
        report.invalidate(format!(
            "alpha = {}, M = {}: censored fraction {} exceeds the limit",
            p.alpha,
            p.rows,
            e.censored_fraction()
        ));
    }
    report.table.push(vec![
        p.alpha.into(),
        p.alpha.ln().abs().into(),
        ((1.0 - p.alpha) / p.alpha).into(),
        p.rows.into(),
        p.cols.into(),
        (p.rows as f64 / p.cols as f64).into(),
        p.matrix_seed.into(),
        p.attempts.into(),
        p.energy.into(),
        e.add_hat.into(),
        e.add_ci_half.into(),
        e.pfa_hat.into(),
        e.pfa_ci_half.into(),
        e.pfa_exact_ci.map(|c| c.0).into(),
        e.pfa_exact_ci.map(|c| c.1).into(),
        p.bounds.add_lower.into(),
        p.bounds.add_upper.into(),
        p.add_realized.into(),
        e.add_hat.map(|a| p.bounds.contains(a, slack)).into(),
        e.n_detections.into(),
        e.n_false_alarms.into(),
        e.n_censored.into(),
        p.horizon.into(),
        valid.into(),
    ]);
}

fn note_signal(report: &mut Report, s: &Signal) {
    report.note("k", s.sparsity());
    report.note("signal_norm_sq", s.norm_sq());
}

fn plan(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let grid = cfg.sweep.n_grid.clone().unwrap_or_default();
    let constants = cfg.theory.constants();
    let template = |n: usize| PlanInputs {
        n,
        k: cfg.sparsity(n),
        delta: cfg.theory.delta,
        beta: cfg.theory.beta,
        r0: cfg.theory.r0,
        rho: cfg.detector.rho,
        snr: snr(cfg),
    };
    let mut table = Table::new(&["n", "k", "m1", "m2", "m", "gamma1", "gamma2", "gamma", "feasible"]);
    let mut infeasible = Vec::new();
    for &n in &grid {
        let plan = plan_measurements(&template(n), &constants)?;
        let nf = n as f64;
        let gamma2 = plan.m2 / nf;
        // γ = γ₂ exactly when the ratio requirement dominates
        let gamma = if plan.m2 >= plan.m1 { gamma2 } else { plan.m1 / nf };
        if !plan.feasible {
            infeasible.push(n);
        }
        table.push(vec![
            n.into(),
            cfg.sparsity(n).into(),
            plan.m1.into(),
            plan.m2.into(),
            plan.m.into(),
            (plan.m1 / nf).into(),
            gamma2.into(),
            gamma.into(),
            plan.feasible.into(),
        ]);
    }
    let mut report = Report::new(Mode::Plan, cfg.clone(), table);
    let k_scale = cfg.problem.k.is_none().then_some(cfg.problem.k_scale);
    let crossover = plan_crossover(&template(grid[0]), k_scale, &constants)?;
    report.note("crossover_n", crossover.map(|n| n as usize));
    report.note("infeasible_points", infeasible.len());
    if grid.len() == 1 && !infeasible.is_empty() {
        report.invalidate(format!("plan needs M > N at N = {}", grid[0]));
    }
    Ok(report)
}

fn bounds(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let alpha = cfg.detector.alpha;
    let gamma = cfg.gamma()?;
    let b = add_bounds_projection(&bound_inputs(cfg, alpha, gamma))?;
    let uncompressed = add_asymptotic(alpha, cfg.detector.rho, snr(cfg) / 2.0)?;
    let toeplitz = cfg.problem.construction == Construction::GaussianToeplitz;
    let mut columns = vec![
        "alpha",
        "rho",
        "snr_db",
        "gamma",
        "delta",
        "add_lower",
        "add_upper",
        "add_uncompressed",
    ];
    let mut row: Vec<Cell> = vec![
        alpha.into(),
        cfg.detector.rho.into(),
        cfg.problem.snr_db.into(),
        gamma.into(),
        cfg.theory.delta.into(),
        b.add_lower.into(),
        b.add_upper.into(),
        uncompressed.into(),
    ];
    if toeplitz {
        let n = cfg.problem.n;
        let t = add_upper_toeplitz(
            &ToeplitzInputs {
                alpha,
                rho: cfg.detector.rho,
                snr: snr(cfg),
                delta: cfg.theory.delta,
                n,
                k: cfg.sparsity(n),
                m: cfg.measurements()?,
            },
            &cfg.theory.constants(),
        )?;
        columns.extend(["toeplitz_add_upper", "toeplitz_prob_floor", "toeplitz_m_min"]);
        row.extend([t.add_upper.into(), t.prob_floor.into(), t.m_min.into()]);
    }
    let mut table = Table::new(&columns);
    table.push(row);
    let mut report = Report::new(Mode::Bounds, cfg.clone(), table);
    if b.add_lower == b.add_upper {
        report.note("add", b.add_lower);
    }
    Ok(report)
}

fn ratio(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Report, CliError> {
    let gamma = cfg.gamma()?;
    let r = delay_ratio_bounds(snr(cfg), cfg.detector.rho, gamma, cfg.theory.delta)?;
    let mut columns = vec!["gamma", "delta", "snr_db", "r_lower", "r_upper"];
    let mut row: Vec<Cell> = vec![
        gamma.into(),
        cfg.theory.delta.into(),
        cfg.problem.snr_db.into(),
        r.r_lower.into(),
        r.r_upper.into(),
    ];
    let mut invalid = None;
    let mut notes = Vec::new();
    if cfg.simulation.estimate_ratio {
        check_trials(cfg.simulation.n_trials)?;
        let s = signal(cfg)?;
        let (phi, attempts) = draw_matrix(cfg, cfg.measurements()?, &s, MATRIX_STREAM)?;
        let n = cfg.problem.n;
        let identity = build_matrix(Construction::Identity, n, n, 0)?;
        let alpha = cfg.detector.alpha;
        let upper = add_bounds_projection(&bound_inputs(cfg, alpha, phi.rows() as f64 / n as f64))?.add_upper;
        let realized = add_asymptotic(alpha, cfg.detector.rho, projection_energy(&phi, &s)? / (2.0 * cfg.problem.sigma2))?;
        let horizon = cfg
            .simulation
            .horizon
            .unwrap_or_else(|| default_horizon(upper.max(realized), cfg.detector.rho));
        let compressed = simulator(cfg, ctx, &phi, &s, alpha, horizon)?;
        let full = simulator(cfg, ctx, &identity, &s, alpha, horizon)?;
        let est = estimate_delay_ratio(&compressed, &full, cfg.simulation.n_trials)?;
        let slack = cfg.theory.slack;
        let inside = est.r_hat >= r.r_lower / slack && est.r_hat <= r.r_upper * slack;
        columns.extend(["r_hat", "r_ci_half", "add_compressed", "add_uncompressed", "in_bracket"]);
        row.extend([
            est.r_hat.into(),
            est.ci_half.into(),
            est.compressed.add_hat.into(),
            est.uncompressed.add_hat.into(),
            inside.into(),
        ]);
        for (label, e) in [("compressed", &est.compressed), ("uncompressed", &est.uncompressed)] {
            if e.check_censoring().is_err() {
                invalid = Some(format!("{label} run censored fraction {}", e.censored_fraction()));
            }
        }
        notes.push(("m", Cell::from(phi.rows())));
        notes.push(("matrix_seed", Cell::from(phi.seed())));
        notes.push(("matrix_attempts", Cell::from(attempts)));
        notes.push(("horizon", Cell::from(horizon)));
    }
    let mut table = Table::new(&columns);
    table.push(row);
    let mut report = Report::new(Mode::Ratio, cfg.clone(), table);
    for (k, v) in notes {
        report.note(k, v);
    }
    if let Some(reason) = invalid {
        report.invalidate(reason);
    }
    Ok(report)
}

fn simulate(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Report, CliError> {
    let s = signal(cfg)?;
    let (phi, attempts) = draw_matrix(cfg, cfg.measurements()?, &s, MATRIX_STREAM)?;
    let point = simulate_point(cfg, ctx, (&phi, attempts), &s, cfg.detector.alpha, cfg.output.outcomes.as_deref())?;
    let mut report = Report::new(Mode::Simulate, cfg.clone(), Table::new(&POINT_COLUMNS));
    note_signal(&mut report, &s);
    push_point(&mut report, &point);
    Ok(report)
}

/// Least-squares slope of `y` on `x`.
fn ols_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn sweep_alpha(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Report, CliError> {
    let alphas = cfg.sweep.alphas.clone().unwrap_or_default();
    let s = signal(cfg)?;
    let (phi, attempts) = draw_matrix(cfg, cfg.measurements()?, &s, MATRIX_STREAM)?;
    let mut report = Report::new(Mode::SweepAlpha, cfg.clone(), Table::new(&POINT_COLUMNS));
    note_signal(&mut report, &s);
    let mut fit = Vec::new();
    let mut energy = 0.0;
    for &alpha in &alphas {
        let p = simulate_point(cfg, ctx, (&phi, attempts), &s, alpha, None)?;
        if let Some(a) = p.estimate.add_hat {
            fit.push((alpha.ln().abs(), a));
        }
        energy = p.energy;
        push_point(&mut report, &p);
    }
    let predicted = 1.0 / (energy / (2.0 * cfg.problem.sigma2) + prior_rate(cfg.detector.rho));
    report.note("slope_predicted", predicted);
    if let Some(slope) = ols_slope(&fit) {
        report.note("slope_fit", slope);
        report.note("slope_rel_error", (slope - predicted).abs() / predicted);
    }
    Ok(report)
}

fn sweep_gamma(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Report, CliError> {
    let gammas = cfg.sweep.gammas.clone().unwrap_or_default();
    let n = cfg.problem.n;
    let s = signal(cfg)?;
    let mut report = Report::new(Mode::SweepGamma, cfg.clone(), Table::new(&POINT_COLUMNS));
    note_signal(&mut report, &s);
    let mut rejected = Vec::new();
    for (i, &gamma) in gammas.iter().enumerate() {
        let m = (gamma * n as f64).round();
        if !(m >= 1.0) || m > n as f64 {
            rejected.push(gamma.to_string());
            continue;
        }
        let (phi, attempts) = draw_matrix(cfg, m as usize, &s, GAMMA_STREAM_BASE + i as u64)?;
        let p = simulate_point(cfg, ctx, (&phi, attempts), &s, cfg.detector.alpha, None)?;
        push_point(&mut report, &p);
    }
    if !rejected.is_empty() {
        report.note("rejected_gammas", Cell::Text(rejected.join(" ")));
    }
    if report.table.rows.is_empty() {
        return Err(CliError::Config("no gamma gives 1 <= M <= N".into()));
    }
    Ok(report)
}

fn concentration(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Report, CliError> {
    let s = signal(cfg)?;
    let setup = ConcentrationSetup {
        construction: cfg.problem.construction,
        rows: cfg.measurements()?,
        cols: cfg.problem.n,
        delta: cfg.theory.delta,
        n_draws: cfg.simulation.n_draws,
        form: ConcentrationForm::Projection,
        master_seed: derive_seed(cfg.simulation.seed, MATRIX_STREAM),
    };
    let r = concentration_experiment(&setup, &s, ctx.threads)?;
    let mut table = Table::new(&[
        "construction",
        "m",
        "n",
        "delta",
        "n_draws",
        "n_inside",
        "empirical_prob",
        "theoretical_floor",
        "min_ratio",
        "max_ratio",
    ]);
    table.push(vec![
        setup.construction.name().into(),
        setup.rows.into(),
        setup.cols.into(),
        setup.delta.into(),
        r.n_draws.into(),
        r.n_inside.into(),
        r.empirical_prob.into(),
        concentration_probability(setup.rows, setup.delta, cfg.theory.c).into(),
        r.min_ratio.into(),
        r.max_ratio.into(),
    ]);
    let mut report = Report::new(Mode::Concentration, cfg.clone(), table);
    note_signal(&mut report, &s);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_a_line() {
        let pts = [(1.0, 3.0), (2.0, 5.0), (4.0, 9.0)];
        assert!((ols_slope(&pts).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(ols_slope(&pts[..1]), None);
    }

    #[test]
    fn plan_report_shape() {
        let cfg = ExperimentConfig::default().resolve(Mode::Plan).unwrap();
        let report = plan(&cfg).unwrap();
        assert_eq!(report.table.rows.len(), 17);
        assert!(report.notes.iter().any(|(k, v)| k == "crossover_n" && *v != Cell::Missing));
        assert!(report.invalid.is_none());
    }

    #[test]
    fn single_point_infeasible_plan_is_invalid() {
        let mut cfg = ExperimentConfig::default();
        cfg.sweep.n_grid = Some(vec![100]);
        let report = plan(&cfg.resolve(Mode::Plan).unwrap()).unwrap();
        assert!(report.invalid.is_some());
    }

    #[test]
    fn collapsed_bounds() {
        let mut cfg = ExperimentConfig::default();
        cfg.theory.delta = 0.0;
        cfg.problem.gamma = Some(1.0);
        let report = bounds(&cfg.clone().resolve(Mode::Bounds).unwrap()).unwrap();
        let lo = report.table.column("add_lower").unwrap()[0].as_f64().unwrap();
        let hi = report.table.column("add_upper").unwrap()[0].as_f64().unwrap();
        assert_eq!(lo, hi);
        assert!(report.notes.iter().any(|(k, _)| k == "add"));

        let report = ratio(&cfg.resolve(Mode::Ratio).unwrap(), &RunContext::default()).unwrap();
        assert_eq!(report.table.column("r_lower").unwrap()[0].as_f64(), Some(1.0));
        assert_eq!(report.table.column("r_upper").unwrap()[0].as_f64(), Some(1.0));
    }
}
