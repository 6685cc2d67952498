//! The six subcommands. `solve`, `impulse`, and `sampled` each solve one
//! problem and persist its trajectories; `converge` and `lemmas` run decay
//! studies and gate on the fitted orders; `oracle` cross-checks the
//! iterative solvers against dense factorizations at small sizes.
//!
//! Every command validates its configuration before computing and computes
//! before writing, so a failed run leaves no partial output. Output files
//! contain no timestamps or paths: rerunning with the same configuration
//! and seed reproduces them byte for byte.

use std::fs;
use std::path::Path;

use periheat::analysis::{
    default_target, experiment_compare3, experiment_intuitive, experiment_mollifier,
    random_target, run_convergence_study, ConvergenceReport, DecayCurve,
};
use periheat::heat::TimeGrid;
use periheat::impulse::{embed_impulse_control, solve_impulse};
use periheat::ocp::{solve_ocp, OcpConfig};
use periheat::oracle::{verify_impulse, verify_ocp, verify_sampled, OracleReport};
use periheat::report::{
    curves_csv, curves_json, holds_csv, impulses_csv, json_array, json_number, json_object,
    json_string, records_csv, report_json, sig17, source_csv, trajectory_csv,
};
use periheat::sampled::solve_sampled;
use periheat::spectral::{Domain1D, SpectralField};
use periheat::Source;

use crate::config::{Needs, RunConfig, TargetKind};
use crate::error::CliError;

const ORACLE_TOLERANCE: f64 = 1e-8;

fn say(run: &RunConfig, msg: &str) {
    if !run.quiet {
        println!("{msg}");
    }
}

fn prepare_out(run: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&run.out).map_err(|e| {
        CliError::Io(format!(
            "cannot create output directory {}: {e}",
            run.out.display()
        ))
    })
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn ocp_config(run: &RunConfig) -> Result<OcpConfig<f64>, CliError> {
    let domain = Domain1D::new(run.length, run.window.0, run.window.1)?;
    let grid = TimeGrid::new(run.horizon, run.timesteps)?;
    let target = match run.target {
        TargetKind::Default => default_target(run.modes, &grid)?,
        TargetKind::Zero => Source::zeros(run.modes, grid.steps()),
        TargetKind::Random => random_target(run.modes, &grid, run.seed)?,
    };
    let mut cfg = OcpConfig::new(domain, grid, run.modes, target)?;
    cfg.cg_tol = run.cg_tol;
    cfg.cg_max_iter = run.cg_max_iter;
    Ok(cfg)
}

// The configuration echo shared by the solution summaries.
fn config_pairs(run: &RunConfig) -> Vec<(&'static str, String)> {
    vec![
        ("modes", run.modes.to_string()),
        ("timesteps", run.timesteps.to_string()),
        ("length", json_number(run.length)),
        (
            "window",
            json_array([json_number(run.window.0), json_number(run.window.1)]),
        ),
        ("horizon", json_number(run.horizon)),
        ("target", json_string(run.target.label())),
        ("seed", run.seed.to_string()),
        ("cg_tol", json_number(run.cg_tol)),
    ]
}

pub fn solve(run: &RunConfig) -> Result<(), CliError> {
    run.validate(&Needs::BASE)?;
    let cfg = ocp_config(run)?;
    let sol = solve_ocp(&cfg)?;

    prepare_out(run)?;
    write_out(&run.out, "control.csv", &source_csv(&sol.control, &cfg.grid))?;
    write_out(&run.out, "state.csv", &trajectory_csv(&sol.state, &cfg.grid))?;
    write_out(&run.out, "adjoint.csv", &trajectory_csv(&sol.adjoint, &cfg.grid))?;
    let mut pairs = vec![("command", json_string("solve"))];
    pairs.extend(config_pairs(run));
    pairs.extend([
        ("cost", json_number(sol.cost)),
        ("iterations", sol.iterations.to_string()),
        ("residual", json_number(sol.residual)),
    ]);
    write_out(&run.out, "solution.json", &(json_object(&pairs) + "\n"))?;

    say(
        run,
        &format!(
            "distributed solve: cost={} iterations={} residual={:.3e}",
            sig17(sol.cost),
            sol.iterations,
            sol.residual
        ),
    );
    say(run, &format!("wrote control.csv, state.csv, adjoint.csv, solution.json to {}", run.out.display()));
    Ok(())
}

pub fn impulse(run: &RunConfig) -> Result<(), CliError> {
    run.validate(&Needs::IMPULSE)?;
    let cfg = ocp_config(run)?;
    let sol = solve_impulse(&cfg, run.subdivision)?;
    let embedded = embed_impulse_control(&sol.impulses, &cfg.grid)?;

    prepare_out(run)?;
    write_out(
        &run.out,
        "impulses.csv",
        &impulses_csv(&sol.impulses, &cfg.grid, run.subdivision)?,
    )?;
    write_out(&run.out, "control.csv", &source_csv(&embedded, &cfg.grid))?;
    write_out(
        &run.out,
        "state.csv",
        &trajectory_csv(&sol.state.flatten_post_jump(), &cfg.grid),
    )?;
    write_out(&run.out, "adjoint.csv", &trajectory_csv(&sol.adjoint, &cfg.grid))?;
    let mut pairs = vec![("command", json_string("impulse"))];
    pairs.extend(config_pairs(run));
    pairs.extend([
        ("subdivision", run.subdivision.to_string()),
        ("impulses", sol.impulses.count().to_string()),
        ("cost", json_number(sol.cost)),
        ("iterations", sol.iterations.to_string()),
        ("residual", json_number(sol.residual)),
    ]);
    write_out(&run.out, "solution.json", &(json_object(&pairs) + "\n"))?;

    say(
        run,
        &format!(
            "impulse solve (n={}): cost={} iterations={} residual={:.3e}",
            run.subdivision,
            sig17(sol.cost),
            sol.iterations,
            sol.residual
        ),
    );
    say(run, &format!("wrote impulses.csv, control.csv, state.csv, adjoint.csv, solution.json to {}", run.out.display()));
    Ok(())
}

pub fn sampled(run: &RunConfig) -> Result<(), CliError> {
    run.validate(&Needs::SAMPLED)?;
    let cfg = ocp_config(run)?;
    let sol = solve_sampled(&cfg, run.subdivision)?;

    prepare_out(run)?;
    write_out(&run.out, "holds.csv", &holds_csv(&sol.holds, &cfg.grid)?)?;
    write_out(&run.out, "control.csv", &source_csv(&sol.control, &cfg.grid))?;
    write_out(&run.out, "state.csv", &trajectory_csv(&sol.state, &cfg.grid))?;
    write_out(&run.out, "adjoint.csv", &trajectory_csv(&sol.adjoint, &cfg.grid))?;
    let mut pairs = vec![("command", json_string("sampled"))];
    pairs.extend(config_pairs(run));
    pairs.extend([
        ("subdivision", run.subdivision.to_string()),
        ("cost", json_number(sol.cost)),
        ("iterations", sol.iterations.to_string()),
        ("residual", json_number(sol.residual)),
    ]);
    write_out(&run.out, "solution.json", &(json_object(&pairs) + "\n"))?;

    say(
        run,
        &format!(
            "sampled solve (n={}): cost={} iterations={} residual={:.3e}",
            run.subdivision,
            sig17(sol.cost),
            sol.iterations,
            sol.residual
        ),
    );
    say(run, &format!("wrote holds.csv, control.csv, state.csv, adjoint.csv, solution.json to {}", run.out.display()));
    Ok(())
}

fn failing_checks(report: &ConvergenceReport<f64>) -> Vec<String> {
    let mut failing: Vec<String> = report
        .slopes
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.metric.to_string())
        .collect();
    if !report.sampled_cost_dominates {
        failing.push("sampled_cost_dominates".to_string());
    }
    failing
}

pub fn converge(run: &RunConfig) -> Result<(), CliError> {
    run.validate(&Needs::STUDY)?;
    let cfg = ocp_config(run)?;
    let report = run_convergence_study(&cfg, &run.n_list)?;

    prepare_out(run)?;
    write_out(&run.out, "records.csv", &records_csv(&report.records))?;
    write_out(&run.out, "report.json", &(report_json(&report) + "\n"))?;

    say(
        run,
        &format!(
            "baseline: cost={} iterations={}",
            sig17(report.baseline_cost),
            report.baseline_iterations
        ),
    );
    if report.degenerate {
        say(run, "degenerate study: every error vanished, no orders fitted");
    }
    for check in &report.slopes {
        say(
            run,
            &format!(
                "{}: slope={:.4} (rate {}, threshold {}) {}",
                check.metric,
                check.slope,
                check.rate,
                check.threshold,
                if check.pass { "ok" } else { "FAIL" }
            ),
        );
    }
    say(run, &format!("wrote records.csv, report.json to {}", run.out.display()));

    if report.pass {
        Ok(())
    } else {
        Err(CliError::Acceptance(format!(
            "fitted orders below threshold: {}",
            failing_checks(&report).join(", ")
        )))
    }
}

// Order checks for the lemmas command: each fitted slope must clear its
// bound, except for degenerate all-zero curves, which pass trivially.
struct OrderCheck {
    name: String,
    slope: Option<f64>,
    bound: f64,
    at_least: bool,
}

impl OrderCheck {
    fn passes(&self) -> bool {
        match self.slope {
            None => true,
            Some(s) => {
                if self.at_least {
                    s >= self.bound
                } else {
                    s <= self.bound
                }
            }
        }
    }
}

fn format_exponent(p: f64) -> String {
    if p.fract() == 0.0 && p.abs() < 1e6 {
        format!("{}", p as i64)
    } else {
        format!("{p}")
    }
}

pub fn lemmas(run: &RunConfig) -> Result<(), CliError> {
    run.validate(&Needs::LEMMAS)?;
    let params = &run.lemmas;
    let domain = Domain1D::new(run.length, run.window.0, run.window.1)?;
    let full = Domain1D::new(run.length, 0.0, run.length)?;

    let control = SpectralField::basis(run.modes, 1)?;
    let regularization = experiment_compare3(
        &control,
        &domain,
        &params.deltas,
        &params.exponents,
        0.0,
        run.horizon,
    )?;

    let z0 = SpectralField::basis(1, 1)?;
    let response_full = experiment_intuitive(&z0, &full, &params.spans, params.response_modes)?;
    let response_window =
        experiment_intuitive(&z0, &domain, &params.spans, params.response_modes)?;

    let mollifier = experiment_mollifier(
        &domain,
        &params.epsilons,
        &params.mollifier_exponents,
        params.mollifier_grid,
    )?;

    let mut named: Vec<(String, &DecayCurve<f64>)> = Vec::new();
    let mut checks: Vec<OrderCheck> = Vec::new();
    for (curve, &p) in regularization.iter().zip(&params.exponents) {
        let name = format!("source_regularization_p{}", format_exponent(p));
        checks.push(OrderCheck {
            name: name.clone(),
            slope: curve.slope,
            bound: 1.0 / p - 0.05,
            at_least: true,
        });
        named.push((name, curve));
    }
    checks.push(OrderCheck {
        name: "window_response_full".to_string(),
        slope: response_full.slope,
        bound: 0.45,
        at_least: true,
    });
    named.push(("window_response_full".to_string(), &response_full));
    checks.push(OrderCheck {
        name: "window_response_window".to_string(),
        slope: response_window.slope,
        bound: 0.20,
        at_least: true,
    });
    named.push(("window_response_window".to_string(), &response_window));
    for (curve, &p) in mollifier.distance.iter().zip(&params.mollifier_exponents) {
        let name = format!("mollifier_distance_p{}", format_exponent(p));
        checks.push(OrderCheck {
            name: name.clone(),
            slope: curve.slope,
            bound: 1.0 / p - 0.05,
            at_least: true,
        });
        named.push((name, curve));
    }
    for (curve, &p) in mollifier.gradient.iter().zip(&params.mollifier_exponents) {
        let name = format!("mollifier_gradient_p{}", format_exponent(p));
        checks.push(OrderCheck {
            name: name.clone(),
            slope: curve.slope,
            bound: -(1.0 - 1.0 / p) + 0.05,
            at_least: false,
        });
        named.push((name, curve));
    }

    let rows: Vec<(&str, &DecayCurve<f64>)> =
        named.iter().map(|(n, c)| (n.as_str(), *c)).collect();
    let all_pass = checks.iter().all(OrderCheck::passes);
    let checks_json = json_array(checks.iter().map(|c| {
        json_object(&[
            ("experiment", json_string(&c.name)),
            (
                "slope",
                c.slope.map_or_else(|| "null".to_string(), json_number),
            ),
            ("bound", json_number(c.bound)),
            (
                "direction",
                json_string(if c.at_least { "at_least" } else { "at_most" }),
            ),
            ("pass", c.passes().to_string()),
        ])
    }));
    let doc = json_object(&[
        ("command", json_string("lemmas")),
        ("curves", curves_json(&rows)),
        ("checks", checks_json),
        ("pass", all_pass.to_string()),
    ]);

    prepare_out(run)?;
    write_out(&run.out, "curves.csv", &curves_csv(&rows))?;
    write_out(&run.out, "lemmas.json", &(doc + "\n"))?;

    for c in &checks {
        let slope = c
            .slope
            .map_or_else(|| "degenerate".to_string(), |s| format!("{s:.4}"));
        let relation = if c.at_least { ">=" } else { "<=" };
        say(
            run,
            &format!(
                "{}: slope={} ({relation} {:.2}) {}",
                c.name,
                slope,
                c.bound,
                if c.passes() { "ok" } else { "FAIL" }
            ),
        );
    }
    say(run, &format!("wrote curves.csv, lemmas.json to {}", run.out.display()));

    if all_pass {
        Ok(())
    } else {
        let failing: Vec<&str> = checks
            .iter()
            .filter(|c| !c.passes())
            .map(|c| c.name.as_str())
            .collect();
        Err(CliError::Acceptance(format!(
            "fitted orders out of bounds: {}",
            failing.join(", ")
        )))
    }
}

fn oracle_entry(report: &OracleReport<f64>) -> String {
    json_object(&[
        ("dimension", report.dimension.to_string()),
        ("deviation", json_number(report.deviation)),
    ])
}

pub fn oracle(run: &RunConfig) -> Result<(), CliError> {
    run.validate(&Needs::ORACLE)?;
    let cfg = ocp_config(run)?;
    let distributed = verify_ocp(&cfg)?;
    let impulse = verify_impulse(&cfg, run.subdivision)?;
    let sampled = verify_sampled(&cfg, run.subdivision)?;
    let max_deviation = distributed
        .deviation
        .max(impulse.deviation)
        .max(sampled.deviation);
    let pass = max_deviation <= ORACLE_TOLERANCE;

    let mut pairs = vec![("command", json_string("oracle"))];
    pairs.extend(config_pairs(run));
    pairs.extend([
        ("subdivision", run.subdivision.to_string()),
        ("distributed", oracle_entry(&distributed)),
        ("impulse", oracle_entry(&impulse)),
        ("sampled", oracle_entry(&sampled)),
        ("max_deviation", json_number(max_deviation)),
        ("tolerance", json_number(ORACLE_TOLERANCE)),
        ("pass", pass.to_string()),
    ]);

    prepare_out(run)?;
    write_out(&run.out, "oracle.json", &(json_object(&pairs) + "\n"))?;

    say(
        run,
        &format!(
            "distributed: dimension={} deviation={:.3e}",
            distributed.dimension, distributed.deviation
        ),
    );
    say(
        run,
        &format!(
            "impulse: dimension={} deviation={:.3e}",
            impulse.dimension, impulse.deviation
        ),
    );
    say(
        run,
        &format!(
            "sampled: dimension={} deviation={:.3e}",
            sampled.dimension, sampled.deviation
        ),
    );
    say(run, &format!("wrote oracle.json to {}", run.out.display()));

    if pass {
        Ok(())
    } else {
        Err(CliError::Acceptance(format!(
            "max relative deviation {:.3e} exceeds {ORACLE_TOLERANCE:.0e}",
            max_deviation
        )))
    }
}
