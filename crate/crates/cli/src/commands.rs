//! Subcommand implementations.

use std::path::PathBuf;

use radial_aggregation::asymptotics::{
    boundary_scaling_fit, largeq_1d, largeq_nd, smalleps_expansion, unit_mass_eigenfunction, BoundarySample,
    InverseOptions, LargeQApprox,
};
use radial_aggregation::dynamics::{
    conservation_report, evolve, fig2_initial, uniform_ball, DynamicsError, EvolveOptions,
};
use radial_aggregation::equilibrium::{check_monotonicity, solve_equilibrium, PowerOptions, SolverError};
use radial_aggregation::{mass, ModelParams, RadialGrid, RadialProfile, Regime as QuadratureRegime};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{InitialKind, Regime, RunConfig};
use crate::output::{emit, number, read_profile_csv, Table};
use crate::CliError;

fn params(cfg: &RunConfig, q: f64) -> Result<ModelParams, CliError> {
    ModelParams::new(cfg.n, q, cfg.mass).map_err(|e| CliError::Config(e.to_string()))
}

fn power_options(cfg: &RunConfig) -> PowerOptions {
    PowerOptions { tol: cfg.tol, max_iter: cfg.max_iter }
}

fn solver(e: SolverError) -> CliError {
    match e {
        SolverError::InvalidInput(m) => CliError::Config(m),
        SolverError::Model(m) => CliError::Config(m.to_string()),
        other => CliError::Solver(other.to_string()),
    }
}

fn dynamics(e: DynamicsError) -> CliError {
    match e {
        DynamicsError::InvalidStep(_) | DynamicsError::InvalidState(_) | DynamicsError::Model(_) => {
            CliError::Config(e.to_string())
        }
        other => CliError::Solver(other.to_string()),
    }
}

fn nonempty<'a>(list: &'a [f64], flag: &str) -> Result<&'a [f64], CliError> {
    if list.is_empty() {
        Err(CliError::Config(format!("--{flag} must list at least one value")))
    } else {
        Ok(list)
    }
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Exponent p of the diagonal behaviour |r − r′|^p of r′^{n−1}I(r, r′).
fn diagonal_exponent(p: &ModelParams) -> f64 {
    p.q() + p.n() as f64 - 3.0
}

pub fn run_steady(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let q = cfg.require_q()?;
    let p = params(cfg, q)?;
    let eq = solve_equilibrium(&p, cfg.intervals, power_options(cfg)).map_err(solver)?;
    let verdict = check_monotonicity(&eq.profile, q);
    let mut table = Table::new("profile", &["r", "rho"]);
    for (&r, &v) in eq.profile.nodes().iter().zip(eq.profile.values()) {
        table.push(vec![r, v]);
    }
    let result = json!({
        "lambda": number(eq.solution.lambda),
        "R": number(eq.solution.radius),
        "residual": number(eq.solution.residual),
        "iterations": eq.solution.iterations,
        "verdict": verdict.to_string(),
        "monotone": verdict.holds(),
        "singular": p.regime() == QuadratureRegime::Singular,
        "kernel_diagonal_exponent": number(diagonal_exponent(&p)),
        "weakly_singular_kernel": diagonal_exponent(&p) < 1.0,
        "mass": number(mass(&eq.profile, cfg.n)),
        "rho_max": number(eq.profile.max_value()),
    });
    emit(cfg, "steady", result, &[table])
}

fn custom_initial(cfg: &RunConfig) -> Result<RadialProfile, CliError> {
    let path = cfg
        .initial_csv
        .as_ref()
        .ok_or_else(|| CliError::Config("--initial custom needs --initial-csv".into()))?;
    let (r, rho) = read_profile_csv(path)?;
    if r.len() < 3 {
        return Err(CliError::Config(format!("{}: need at least 3 rows", path.display())));
    }
    let intervals = r.len() - 1;
    let edge = r[intervals];
    let grid = RadialGrid::uniform(edge, intervals).map_err(|e| CliError::Config(e.to_string()))?;
    let off = grid.nodes().iter().zip(&r).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if off > 1e-9 * edge {
        return Err(CliError::Config(format!("{}: radii must form a uniform grid starting at 0", path.display())));
    }
    RadialProfile::new(grid, rho).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn run_evolve(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let q = cfg.require_q()?;
    let p = params(cfg, q)?;
    let initial = match cfg.initial {
        InitialKind::PaperFig2 => fig2_initial(&p, cfg.intervals, cfg.r_max).map_err(dynamics)?,
        InitialKind::UniformBall => uniform_ball(&p, cfg.intervals, cfg.ball_radius).map_err(dynamics)?,
        InitialKind::Custom => custom_initial(cfg)?,
    };
    let reference = solve_equilibrium(&p, cfg.intervals, power_options(cfg)).map_err(solver)?.profile;
    let opts = EvolveOptions { t_final: cfg.t_final, dt: cfg.dt, sample_every: cfg.sample_every, reference: Some(reference) };
    let traj = evolve(&initial, &p, &opts).map_err(dynamics)?;
    let report = conservation_report(&traj);

    let mut trajectory = Table::new("trajectory", &["t", "particle", "r", "rho"]);
    for s in &traj.samples {
        for (i, (&r, &v)) in s.radii.iter().zip(&s.densities).enumerate() {
            trajectory.push(vec![s.time, i as f64, r, v]);
        }
    }
    let mut diagnostics = Table::new("diagnostics", &["t", "mass", "rho_max", "support_radius", "dist_to_equilibrium"]);
    for d in &traj.diagnostics {
        diagnostics.push(vec![d.time, d.mass, d.rho_max, d.support_radius, d.dist_to_equilibrium.unwrap_or(f64::NAN)]);
    }
    let dist = |d: Option<&radial_aggregation::dynamics::Diagnostics>| {
        d.and_then(|d| d.dist_to_equilibrium).map(number).unwrap_or(Value::Null)
    };
    let result = json!({
        "t_final": number(traj.final_state().time),
        "steps": traj.steps,
        "clamped": traj.clamped,
        "initial_mass": number(report.initial_mass),
        "max_relative_mass_drift": number(report.max_relative_mass_drift),
        "centre_of_mass": number(report.centre_of_mass),
        "ceiling": report.ceiling.map(number).unwrap_or(Value::Null),
        "ceiling_respected": report.ceiling_respected,
        "dist_initial": dist(traj.diagnostics.first()),
        "dist_final": dist(traj.diagnostics.last()),
    });
    emit(cfg, "evolve", result, &[trajectory, diagnostics])
}

fn largeq(cfg: &RunConfig, q: f64) -> Result<LargeQApprox, CliError> {
    let grid = RadialGrid::uniform(1.0, cfg.intervals).map_err(|e| CliError::Config(e.to_string()))?;
    if cfg.n == 1 { largeq_1d(q, &grid) } else { largeq_nd(cfg.n, q, &grid) }.map_err(solver)
}

pub fn run_asymp_largeq(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let qs = nonempty(&cfg.q_list, "q-list")?;
    for &q in qs {
        params(cfg, q)?;
    }
    let approx: Vec<LargeQApprox> = qs.par_iter().map(|&q| largeq(cfg, q)).collect::<Result<_, _>>()?;
    let mut table = Table::new("table", &["q", "lambda_coarse", "lambda_refined", "R_coarse", "R_refined"]);
    let mut profiles = Table::new("profiles", &["q", "r", "rho"]);
    for (&q, a) in qs.iter().zip(&approx) {
        table.push(vec![q, a.lambda_coarse, a.lambda_refined, a.r_coarse, a.r_refined]);
        for (&r, &v) in a.profile.nodes().iter().zip(a.profile.values()) {
            profiles.push(vec![q, r, v]);
        }
    }
    let result = json!({ "n": cfg.n, "count": qs.len() });
    emit(cfg, "asymp_largeq", result, &[table, profiles])
}

pub fn run_asymp_smalleps(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let exp = smalleps_expansion(cfg.n, cfg.intervals, None, InverseOptions::default()).map_err(solver)?;
    let mut rho0 = Table::new("rho0", &["r", "rho"]);
    for (&r, &v) in exp.rho0.nodes().iter().zip(exp.rho0.values()) {
        rho0.push(vec![r, v]);
    }
    let mut tables = vec![rho0];
    if !cfg.eps_list.is_empty() {
        let mut t = Table::new("table", &["eps", "lambda", "R"]);
        for &eps in &cfg.eps_list {
            t.push(vec![eps, exp.lambda_at(eps), exp.radius_at(eps)]);
        }
        tables.push(t);
    }
    let result = json!({
        "n": cfg.n,
        "lambda0": number(exp.lambda0),
        "lambda1": number(exp.lambda1),
        "lambda2": number(exp.lambda2),
    });
    emit(cfg, "asymp_smalleps", result, &tables)
}

#[derive(Debug, Clone, Copy)]
struct NumericPoint {
    lambda: f64,
    radius: f64,
    centre: f64,
    edge: f64,
}

fn numeric_point(cfg: &RunConfig, q: f64) -> Result<NumericPoint, CliError> {
    let p = params(cfg, q)?;
    let eq = solve_equilibrium(&p, cfg.intervals, power_options(cfg)).map_err(solver)?;
    let unit = unit_mass_eigenfunction(&eq.solution, cfg.n).map_err(solver)?;
    let v = unit.values();
    Ok(NumericPoint { lambda: eq.solution.lambda, radius: eq.solution.radius, centre: v[0], edge: v[v.len() - 1] })
}

const COMPARE_COLUMNS: [&str; 7] =
    ["lambda_numeric", "lambda_asymptotic", "R_numeric", "R_asymptotic", "R_relative_error", "rho_centre", "rho_edge"];

fn compare_table(key: &str, keys: &[f64], numeric: &[NumericPoint], asym: &[(f64, f64)]) -> Table {
    let mut columns = vec![key];
    columns.extend(COMPARE_COLUMNS);
    let mut t = Table::new("table", &columns);
    for ((&k, p), &(la, ra)) in keys.iter().zip(numeric).zip(asym) {
        t.push(vec![k, p.lambda, la, p.radius, ra, relative_error(p.radius, ra), p.centre, p.edge]);
    }
    t
}

pub fn run_compare(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let regime = cfg.regime.ok_or_else(|| CliError::Config("compare needs --regime largeq|smalleps".into()))?;
    match regime {
        Regime::Largeq => {
            let qs = nonempty(&cfg.q_list, "q-list")?;
            for &q in qs {
                params(cfg, q)?;
            }
            let rows: Vec<(NumericPoint, LargeQApprox)> = qs
                .par_iter()
                .map(|&q| Ok((numeric_point(cfg, q)?, largeq(cfg, q)?)))
                .collect::<Result<_, CliError>>()?;
            let numeric: Vec<NumericPoint> = rows.iter().map(|(p, _)| *p).collect();
            let asym: Vec<(f64, f64)> = rows.iter().map(|(_, a)| (a.lambda_refined, a.r_refined)).collect();
            let mut table = compare_table("q", qs, &numeric, &asym);
            table.columns.extend(["lambda_coarse".to_string(), "R_coarse".to_string()]);
            for (row, (_, a)) in table.rows.iter_mut().zip(&rows) {
                row.extend([a.lambda_coarse, a.r_coarse]);
            }
            let max_err = table.rows.iter().map(|r| r[5]).fold(0.0, f64::max);
            let result = json!({ "regime": "largeq", "n": cfg.n, "max_R_relative_error": number(max_err) });
            emit(cfg, "compare_largeq", result, &[table])
        }
        Regime::Smalleps => {
            let eps = nonempty(&cfg.eps_list, "eps-list")?;
            let shift = 2.0 - cfg.n as f64;
            for &e in eps {
                if !(e > 0.0) {
                    return Err(CliError::Config(format!("eps values must be positive, got {e}")));
                }
                params(cfg, e + shift)?;
            }
            let exp = smalleps_expansion(cfg.n, cfg.intervals, None, InverseOptions::default()).map_err(solver)?;
            let numeric: Vec<NumericPoint> =
                eps.par_iter().map(|&e| numeric_point(cfg, e + shift)).collect::<Result<_, _>>()?;
            let asym: Vec<(f64, f64)> = eps.iter().map(|&e| (exp.lambda_at(e), exp.radius_at(e))).collect();
            let table = compare_table("eps", eps, &numeric, &asym);
            let samples: Vec<BoundarySample> = eps
                .iter()
                .zip(&numeric)
                .map(|(&e, p)| BoundarySample { eps: e, rho_centre: p.centre, rho_edge: p.edge })
                .collect();
            let fit = match boundary_scaling_fit(&samples) {
                Ok(f) => json!({
                    "a": number(f.a),
                    "b": number(f.b),
                    "c": number(f.c),
                    "sqrt_residual": number(f.sqrt_residual),
                    "linear_edge_slope": number(f.linear_edge_slope),
                    "linear_edge_residual": number(f.linear_edge_residual),
                    "centre_residual": number(f.centre_residual),
                }),
                Err(e) => json!({ "skipped": e.to_string() }),
            };
            let result = json!({
                "regime": "smalleps",
                "n": cfg.n,
                "lambda0": number(exp.lambda0),
                "lambda1": number(exp.lambda1),
                "lambda2": number(exp.lambda2),
                "boundary_fit": fit,
            });
            emit(cfg, "compare_smalleps", result, &[table])
        }
    }
}
