//! Executes a scenario and writes `report.json`, `trajectory.csv` and
//! `trajectory.svg` into the output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use episwitch_core::endemic::{periodic_orbit, persistence_construction, stabilize};
use episwitch_core::jle::{build_extremal_norm, estimate_jle, verify_nonlinear_decrease, verify_nonstrict_lyapunov, JleConfig};
use episwitch_core::markov::{
    initial_moments, integrate_linear_moment_bound, l1_stability_test, monte_carlo_moments, simulate_jump, MarkovSpec,
};
use episwitch_core::signals::{Segment, SignalKind};
use episwitch_core::simulate::{flow, integrate, integrate_linear, IntegratorConfig, Trajectory};
use episwitch_core::{Mat, SisModel, SwitchedSisModel, SwitchingSignal};

use crate::csv::{parse_trajectory, write_trajectory};
use crate::scenario::{Scenario, SchemaError, SignalKindSpec, TaskParams};
use crate::svg;
use crate::CliError;

pub const REPORT_FILE: &str = "report.json";
pub const CSV_FILE: &str = "trajectory.csv";
pub const SVG_FILE: &str = "trajectory.svg";

/// Floor slack for persistence checks.
const FLOOR_SLACK: f64 = 1e-6;
/// Closure tolerance of the periodic orbit at integer times.
const CLOSURE_TOL: f64 = 1e-8;
/// Decay target for stabilized trajectories.
const DECAY_TOL: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub out_dir: PathBuf,
    pub report: Value,
}

impl From<episwitch_core::Error> for CliError {
    fn from(e: episwitch_core::Error) -> Self {
        if e.is_hypothesis_failure() {
            CliError::Hypothesis(e.to_string())
        } else {
            CliError::Failure(e.to_string())
        }
    }
}

impl From<SchemaError> for CliError {
    fn from(e: SchemaError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Failure(format!("{}: {e}", path.display()))
}

fn safe_name(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}

/// Reads, validates and runs a scenario file. The output directory is
/// `out`, else the scenario's `output` (relative to the file), else a
/// directory named after the scenario next to the file.
pub fn run_file(path: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<RunOutput, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let scenario = Scenario::parse(&text).map_err(|errs| {
        CliError::Usage(errs.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let out_dir = match (out, &scenario.output) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => base.join(o),
        (None, None) => base.join(safe_name(&scenario.name)),
    };
    run_scenario(&scenario, &out_dir, seed)
}

pub fn run_scenario(scenario: &Scenario, out_dir: &Path, seed_override: Option<u64>) -> Result<RunOutput, CliError> {
    let seed = scenario.effective_seed(seed_override)?;
    let started = Instant::now();
    let model = build_model(scenario)?;
    let (result, traj) = execute(scenario, &model, seed)?;

    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let csv_text = write_trajectory(&traj);
    let csv_path = out_dir.join(CSV_FILE);
    fs::write(&csv_path, &csv_text).map_err(|e| io_err(&csv_path, e))?;
    let parsed = parse_trajectory(&csv_text).map_err(CliError::Failure)?;
    let svg_path = out_dir.join(SVG_FILE);
    fs::write(&svg_path, svg::render(&parsed, &scenario.name)).map_err(|e| io_err(&svg_path, e))?;

    let report = json!({
        "tool": "episwitch",
        "version": env!("CARGO_PKG_VERSION"),
        "scenario": scenario.raw,
        "task": scenario.task.name(),
        "seed": seed,
        "result": result,
        "artifacts": { "csv": CSV_FILE, "svg": SVG_FILE },
        "wall_clock_seconds": started.elapsed().as_secs_f64(),
    });
    let report_path = out_dir.join(REPORT_FILE);
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Failure(e.to_string()))? + "\n";
    fs::write(&report_path, text).map_err(|e| io_err(&report_path, e))?;
    Ok(RunOutput { out_dir: out_dir.to_path_buf(), report })
}

fn build_model(s: &Scenario) -> Result<SwitchedSisModel<f64>, CliError> {
    let models = s
        .models
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let b = Mat::from_rows(&m.b).map_err(|e| CliError::Usage(format!("field `models[{k}].b`: {e}")))?;
            SisModel::new(m.d.clone(), b).map_err(|e| CliError::Usage(format!("field `models[{k}]`: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SwitchedSisModel::new(models)?)
}

fn signal_json(sig: &SwitchingSignal<f64>) -> Value {
    json!({
        "kind": sig.kind,
        "segments": sig.segments.iter().map(|s| json!({ "mode": s.mode + 1, "duration": s.duration })).collect::<Vec<_>>(),
    })
}

fn sup(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |a, &v| a.max(v.abs()))
}

fn execute(s: &Scenario, model: &SwitchedSisModel<f64>, seed: Option<u64>) -> Result<(Value, Trajectory<f64>), CliError> {
    let n = model.dim();
    let seed = seed.unwrap_or(0);
    match &s.params {
        TaskParams::Classify(p) => {
            let mut rows = Vec::new();
            for (k, m) in model.models().iter().enumerate() {
                let rep = m.classify(p.tol)?;
                let residual = match &rep.endemic {
                    Some(x) => Some(sup(&m.vector_field(x)?)),
                    None => None,
                };
                rows.push(json!({
                    "model": k + 1,
                    "r0": rep.r0,
                    "classification": rep.classification,
                    "dfe_gas": rep.dfe_gas,
                    "endemic": rep.endemic,
                    "endemic_residual": residual,
                    "tolerance": p.tol,
                }));
            }
            let cfg = IntegratorConfig::with_step(p.step);
            let x0 = p.x0.clone().unwrap_or_else(|| vec![0.1; n]);
            let traj = integrate(model, &SwitchingSignal::constant(0), &x0, p.horizon, &cfg)?;
            Ok((json!({ "models": rows, "trajectory_model": 1 }), traj))
        }
        TaskParams::Jle(p) => {
            let cfg = JleConfig { horizon: p.horizon, budget: p.budget, seed, t_block: p.t_block, depth: p.depth };
            let est = estimate_jle(model, &cfg)?;
            let traj = integrate(model, &est.witness_signal, &vec![1.0; n], p.sim_horizon, &IntegratorConfig::with_step(p.step))?;
            Ok((
                json!({
                    "lower": est.lower,
                    "upper": est.upper,
                    "gap": est.upper - est.lower,
                    "tolerance": 0.0,
                    "block_estimate": est.block_estimate,
                    "envelope_weights": est.envelope_weights,
                    "witness_signal": signal_json(&est.witness_signal),
                    "samples": est.samples,
                }),
                traj,
            ))
        }
        TaskParams::CertifyDfe(p) => {
            let cfg = JleConfig { horizon: p.jle_horizon, budget: p.budget, seed, ..JleConfig::default() };
            let est = estimate_jle(model, &cfg)?;
            if !(est.upper < 0.0) {
                return Err(CliError::Hypothesis(format!(
                    "upper JLE bound {:.6e} is not negative; the disease-free equilibrium cannot be certified",
                    est.upper
                )));
            }
            let norm = build_extremal_norm(model, est.upper, p.norm_budget, seed)?;
            let nonstrict = verify_nonstrict_lyapunov(model, &norm, p.samples, seed.wrapping_add(1))?;
            let big_l = p.big_l.unwrap_or(n as f64);
            let decrease = verify_nonlinear_decrease(model, &norm, p.ell, big_l, p.eps, p.samples, seed.wrapping_add(2))?;
            let traj = integrate(model, &est.witness_signal, &vec![1.0; n], p.horizon, &IntegratorConfig::with_step(p.step))?;
            Ok((
                json!({
                    "jle_lower": est.lower,
                    "jle_upper": est.upper,
                    "norm_generators": norm.generators.len(),
                    "nonstrict": {
                        "passed": nonstrict.passed,
                        "max_violation": nonstrict.max_violation,
                        "tolerance": nonstrict.tolerance,
                        "samples": nonstrict.samples,
                    },
                    "decrease": {
                        "passed": decrease.passed,
                        "worst_margin": decrease.worst_margin,
                        "tolerance": 0.0,
                        "samples": decrease.samples,
                        "ell": decrease.ell,
                        "big_l": decrease.big_l,
                        "eps": decrease.eps,
                    },
                    "certified": nonstrict.passed && decrease.passed,
                    "witness_signal": signal_json(&est.witness_signal),
                    "terminal_norm": sup(traj.terminal()),
                }),
                traj,
            ))
        }
        TaskParams::Persist(p) => {
            let cfg = IntegratorConfig::with_step(p.step);
            let per = persistence_construction(model, &p.kappa, &cfg)?;
            let traj = integrate(model, &per.signal, &per.v, p.horizon, &cfg)?;
            let min = traj.min_component();
            Ok((
                json!({
                    "period": per.period,
                    "delta": per.delta,
                    "v": per.v,
                    "advance": per.advance,
                    "signal": signal_json(&per.signal),
                    "horizon": p.horizon,
                    "min_component": min,
                    "floor_ok": min >= per.delta - FLOOR_SLACK,
                    "tolerance": FLOOR_SLACK,
                }),
                traj,
            ))
        }
        TaskParams::Orbit(p) => {
            let cfg = IntegratorConfig::with_step(p.step);
            let orb = periodic_orbit(model, &p.kappa, p.tol, &cfg)?;
            let closure = (1..=p.periods)
                .map(|k| Ok(sup(&sub(&flow(model, &orb.signal, &orb.x_star, k as f64, &cfg)?, &orb.x_star))))
                .collect::<Result<Vec<f64>, CliError>>()?;
            let traj = integrate(model, &orb.signal, &orb.x_star, p.periods as f64, &cfg)?;
            Ok((
                json!({
                    "x_star": orb.x_star,
                    "residual": orb.residual,
                    "tolerance": p.tol,
                    "signal_period": orb.signal_period,
                    "signal": signal_json(&orb.signal),
                    "interior_margin": orb.interior_margin,
                    "method": orb.method,
                    "iterations": orb.iterations,
                    "averaged_equilibrium": orb.seed,
                    "closure": closure,
                    "closure_tolerance": CLOSURE_TOL,
                    "closure_ok": closure.iter().all(|&c| c <= CLOSURE_TOL),
                }),
                traj,
            ))
        }
        TaskParams::Stabilize(p) => {
            let cfg = IntegratorConfig::with_step(p.step);
            let st = stabilize(model, p.horizon, p.budget, &cfg)?;
            let traj = integrate(model, &st.signal, &vec![1.0; n], p.horizon, &cfg)?;
            Ok((
                json!({
                    "kappa": st.kappa,
                    "period": st.period,
                    "alpha": st.alpha,
                    "v": st.v,
                    "signal": signal_json(&st.signal),
                    "iterated_defect": st.iterated_defect,
                    "envelope_constant": st.envelope_constant,
                    "envelope_ok": st.envelope_ok,
                    "terminal_norm": st.terminal_norm,
                    "decay_tolerance": DECAY_TOL,
                    "decayed": st.terminal_norm < DECAY_TOL,
                }),
                traj,
            ))
        }
        TaskParams::Markov(p) => {
            let spec = markov_spec(p)?;
            let sigma0 = p.sigma0 - 1;
            let xi0 = initial_moments(model.modes(), sigma0, &p.x0);
            let verdict = l1_stability_test(model, &spec, &xi0)?;
            let grid = time_grid(p.t_end, p.dt);
            let lin = integrate_linear_moment_bound(model, &spec, &xi0, &grid)?;
            let cfg = IntegratorConfig::with_step(p.step);
            let mc = monte_carlo_moments(model, &spec, &p.x0, sigma0, &grid, p.paths, seed, &cfg)?;
            let mut majorization_excess = f64::NEG_INFINITY;
            for k in 0..grid.len() {
                for i in 0..xi0.len() {
                    majorization_excess = majorization_excess.max(mc.xi_mean[k][i] - lin.xi[k][i] - 3.0 * mc.xi_ci[k][i]);
                }
            }
            let integral_excess = verdict.l1_bound.as_ref().map(|b| {
                (0..b.len()).map(|i| mc.integral[i] - b[i] - 3.0 * mc.integral_ci[i]).fold(f64::NEG_INFINITY, f64::max)
            });
            let path = simulate_jump(&spec, sigma0, p.t_end, seed)?;
            let traj = integrate(model, &path.to_signal()?, &p.x0, p.t_end, &cfg)?;
            Ok((
                json!({
                    "a_pi_bar": verdict.a_pi_bar.rows(),
                    "abscissa": verdict.abscissa,
                    "hurwitz": verdict.hurwitz,
                    "inverse_nonpositive": verdict.inverse_nonpositive,
                    "mean_square_stable": verdict.mean_square_stable,
                    "l1_bound": verdict.l1_bound,
                    "paths": mc.paths,
                    "grid": grid,
                    "xi_mean": mc.xi_mean,
                    "xi_ci95": mc.xi_ci,
                    "mean_x": mc.mean_x,
                    "mean_x_ci95": mc.mean_x_ci,
                    "xi_linear_bound": lin.xi,
                    "integral": mc.integral,
                    "integral_ci95": mc.integral_ci,
                    "majorization_excess": majorization_excess,
                    "majorization_ok": majorization_excess <= 0.0,
                    "integral_excess": integral_excess,
                    "integral_ok": integral_excess.map(|e| e <= 0.0),
                    "tolerance": "3 x 95% half-width",
                    "sample_path_jumps": path.jump_times.len(),
                }),
                traj,
            ))
        }
        TaskParams::Simulate(p) => {
            let kind = match p.signal.kind {
                SignalKindSpec::Periodic => SignalKind::Periodic,
                SignalKindSpec::PiecewiseConstant => SignalKind::PiecewiseConstant,
            };
            let segments = p.signal.segments.iter().map(|g| Segment { mode: g.mode - 1, duration: g.duration }).collect();
            let sig = SwitchingSignal::new(kind, segments)?;
            let cfg = IntegratorConfig::with_step(p.step);
            let traj = if p.linear {
                integrate_linear(model, &sig, &p.x0, p.horizon, &cfg)?
            } else {
                integrate(model, &sig, &p.x0, p.horizon, &cfg)?
            };
            let max = traj.states.iter().flatten().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
            Ok((
                json!({
                    "linear": p.linear,
                    "terminal": traj.terminal(),
                    "min_component": traj.min_component(),
                    "max_component": max,
                    "steps": traj.len() - 1,
                    "tolerance": cfg.tol_drift,
                }),
                traj,
            ))
        }
    }
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `0, dt, 2dt, ..` up to `t_end`, which is always included.
fn time_grid(t_end: f64, dt: f64) -> Vec<f64> {
    let k = (t_end / dt + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=k).map(|i| i as f64 * dt).filter(|&t| t < t_end - 1e-12 * t_end).collect();
    grid.push(t_end);
    grid
}

fn markov_spec(p: &crate::scenario::MarkovParams) -> Result<MarkovSpec<f64>, CliError> {
    let mat = |rows: &Vec<Vec<f64>>, field: &str| Mat::from_rows(rows).map_err(|e| CliError::Usage(format!("field `{field}`: {e}")));
    let usage = |e: episwitch_core::Error| CliError::Usage(format!("field `params`: {e}"));
    match (&p.pi, &p.schedule) {
        (Some(pi), _) => {
            let pi = mat(pi, "params.pi")?;
            match &p.pi_bar {
                Some(bar) => MarkovSpec::new(vec![(0.0, pi)], mat(bar, "params.pi_bar")?).map_err(usage),
                None => MarkovSpec::constant(pi).map_err(usage),
            }
        }
        (None, Some(schedule)) => {
            let steps = schedule
                .iter()
                .enumerate()
                .map(|(k, c)| Ok((c.start, mat(&c.pi, &format!("params.schedule[{k}].pi"))?)))
                .collect::<Result<Vec<_>, CliError>>()?;
            let bar = p.pi_bar.as_ref().ok_or_else(|| CliError::Usage("field `params.pi_bar`: required".into()))?;
            MarkovSpec::new(steps, mat(bar, "params.pi_bar")?).map_err(usage)
        }
        (None, None) => Err(CliError::Usage("field `params.pi`: missing".into())),
    }
}

/// Renders a trajectory CSV to SVG; `out` defaults to the input with an
/// `.svg` extension.
pub fn plot_file(csv: &Path, out: Option<&Path>) -> Result<PathBuf, CliError> {
    let text = fs::read_to_string(csv).map_err(|e| CliError::Usage(format!("{}: {e}", csv.display())))?;
    let traj = parse_trajectory(&text).map_err(|e| CliError::Usage(format!("{}: {e}", csv.display())))?;
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| csv.with_extension("svg"));
    let title = csv.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    fs::write(&out, svg::render(&traj, &title)).map_err(|e| io_err(&out, e))?;
    Ok(out)
}
