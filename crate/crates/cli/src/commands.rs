//! The subcommands. Each writes its files into the output directory and
//! prints their paths.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use polysweep::discopt::{build_problem, solve, DiscoptError, Solution, SolveOptions};
use polysweep::format::to_json;
use polysweep::optimality::{
    recover_multipliers, MultiplierSet, OptimalityError, RecoveryOptions, ResidualReport,
};
use polysweep::scenario::{ControlSpec, Scenario, ScenarioError};
use polysweep::sweep::{
    analytic_oracle, catching_up, convergence_study, oracle_branch, trajectory_csv,
    ConvergenceReference, Scheme, SweepError,
};
use polysweep::{ConvergenceTable, SlaterReport};

use crate::bounds;

/// Error with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: String) -> Self {
        Failure { code: 1, message }
    }

    fn with(code: u8, message: String) -> Self {
        Failure { code, message }
    }
}

pub const EXIT_INFEASIBLE_SIMULATION: u8 = 2;
pub const EXIT_PROPERTY_VIOLATED: u8 = 3;
pub const EXIT_KKT_INFEASIBLE: u8 = 4;
pub const EXIT_BUDGET: u8 = 5;

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Sweep(s) => sweep_failure(s),
            e => Failure::usage(e.to_string()),
        }
    }
}

fn sweep_failure(e: SweepError) -> Failure {
    match e {
        SweepError::InfeasibleStart { .. } | SweepError::EmptyPolyhedronAtNode { .. } => {
            Failure::with(EXIT_INFEASIBLE_SIMULATION, e.to_string())
        }
        e => Failure::usage(e.to_string()),
    }
}

/// A scenario file path or `builtin:NAME`.
pub fn load_scenario(arg: &str) -> Result<Scenario, Failure> {
    if let Some(name) = arg.strip_prefix("builtin:") {
        return Ok(Scenario::builtin(name)?);
    }
    let text = std::fs::read_to_string(arg)
        .map_err(|e| Failure::usage(format!("cannot read {arg}: {e}")))?;
    Ok(Scenario::from_json(&text)?)
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents)
        .map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))?;
    println!("{}", path.display());
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = to_json(value).map_err(|e| Failure::usage(e.to_string()))?;
    write(path, &(text + "\n"))
}

#[derive(Serialize)]
struct LevelRun {
    steps: usize,
    h: f64,
    csv: String,
    endpoint: Vec<f64>,
    max_feasibility_residual: f64,
    max_stationarity_residual: f64,
    /// Per step, constraints active after the step.
    active_sets: Vec<Vec<usize>>,
}

#[derive(Serialize)]
struct RunReport {
    scenario: String,
    scheme: Scheme,
    levels: Vec<LevelRun>,
    #[serde(skip_serializing_if = "Option::is_none")]
    convergence: Option<ConvergenceTable>,
    /// `analytic` or `refined` (twice the finest level).
    #[serde(skip_serializing_if = "Option::is_none")]
    convergence_reference: Option<&'static str>,
}

fn simulate_one(
    scenario: &Scenario,
    levels: usize,
    scheme: Scheme,
    out: &Path,
) -> Result<(), Failure> {
    let base = scenario.mesh()?;
    let path = scenario.control()?;
    let levels = levels.max(1);
    let mut runs = Vec::with_capacity(levels);
    for k in 0..levels {
        let mesh = base.refine(1 << k);
        let tr = catching_up(&path, &scenario.x0, &mesh, scheme).map_err(sweep_failure)?;
        let name = if levels == 1 {
            format!("{}.csv", scenario.name)
        } else {
            format!("{}.level{k}.csv", scenario.name)
        };
        let csv = trajectory_csv(&tr).map_err(sweep_failure)?;
        write(&out.join(&name), &csv)?;
        let fmax = |v: Vec<f64>| v.into_iter().fold(0.0f64, f64::max);
        runs.push(LevelRun {
            steps: mesh.steps(),
            h: mesh.h(0),
            csv: name,
            endpoint: tr.endpoint().to_vec(),
            max_feasibility_residual: fmax(tr.feasibility_residuals(&path).map_err(sweep_failure)?),
            max_stationarity_residual: fmax(
                tr.stationarity_residuals(&path).map_err(sweep_failure)?,
            ),
            active_sets: tr.active_sets.clone(),
        });
    }
    let (convergence, reference) = if levels > 1 {
        let analytic = matches!(scenario.control, ControlSpec::Builtin(_))
            && oracle_branch(&scenario.x0).is_ok();
        if analytic {
            let x0 = scenario.x0.clone();
            let f = move |t: f64| analytic_oracle(&x0, t);
            let table = convergence_study(
                &path,
                &scenario.x0,
                &base,
                levels,
                &ConvergenceReference::Function(&f),
                scheme,
            )
            .map_err(sweep_failure)?;
            (Some(table), Some("analytic"))
        } else {
            let fine = base.refine(1 << levels);
            let tr = catching_up(&path, &scenario.x0, &fine, scheme).map_err(sweep_failure)?;
            let table = convergence_study(
                &path,
                &scenario.x0,
                &base,
                levels,
                &ConvergenceReference::Trajectory(&tr),
                scheme,
            )
            .map_err(sweep_failure)?;
            (Some(table), Some("refined"))
        }
    } else {
        (None, None)
    };
    let report = RunReport {
        scenario: scenario.name.clone(),
        scheme,
        levels: runs,
        convergence,
        convergence_reference: reference,
    };
    write_json(&out.join(format!("{}.run.json", scenario.name)), &report)
}

pub fn simulate(
    args: &[String],
    levels: usize,
    explicit: bool,
    threads: usize,
    out: &Path,
) -> Result<(), Failure> {
    let scheme = if explicit {
        Scheme::Explicit
    } else {
        Scheme::Implicit
    };
    let scenarios = args
        .iter()
        .map(|a| load_scenario(a))
        .collect::<Result<Vec<_>, _>>()?;
    let mut results: Vec<Result<(), Failure>> = Vec::with_capacity(scenarios.len());
    for batch in scenarios.chunks(threads.max(1)) {
        let batch_results: Vec<Result<(), Failure>> = std::thread::scope(|s| {
            let handles: Vec<_> = batch
                .iter()
                .map(|sc| s.spawn(move || simulate_one(sc, levels, scheme, out)))
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join()
                        .unwrap_or_else(|_| Err(Failure::usage("worker panicked".into())))
                })
                .collect()
        });
        results.extend(batch_results);
    }
    // first failure in input order decides the exit code
    results.into_iter().collect()
}

pub fn verify_bounds(
    arg: &str,
    samples: usize,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), Failure> {
    let scenario = load_scenario(arg)?;
    let seed = seed.unwrap_or(scenario.seed);
    let report = bounds::sweep(&scenario, samples, seed)?;
    write_json(&out.join(format!("{}.bounds.json", scenario.name)), &report)?;
    if report.passed {
        Ok(())
    } else {
        let names: Vec<&str> = report
            .properties
            .iter()
            .filter(|p| p.violations > 0)
            .map(|p| p.name.as_str())
            .collect();
        Err(Failure::with(
            EXIT_PROPERTY_VIOLATED,
            format!("violated: {}", names.join(", ")),
        ))
    }
}

#[derive(Serialize)]
struct SlaterOutput {
    scenario: String,
    /// `positive`, `degenerate` (zero margin) or `violated`.
    status: &'static str,
    refine: usize,
    #[serde(flatten)]
    report: SlaterReport,
}

pub fn slater(arg: &str, radius: f64, refine: usize, out: &Path) -> Result<(), Failure> {
    let scenario = load_scenario(arg)?;
    let path = scenario.control()?;
    let report = path
        .check_uniform_slater(radius, refine)
        .map_err(|e| Failure::usage(e.to_string()))?;
    let eps = report.epsilon;
    let status = if eps.abs() <= 1e-12 {
        "degenerate"
    } else if eps > 0.0 {
        "positive"
    } else {
        "violated"
    };
    let output = SlaterOutput {
        scenario: scenario.name.clone(),
        status,
        refine,
        report,
    };
    write_json(&out.join(format!("{}.slater.json", scenario.name)), &output)
}

/// What `optimize` writes and `check-kkt` reads.
#[derive(Serialize, Deserialize)]
pub struct SolutionFile {
    /// `optimal` or `budget_exhausted`.
    pub status: String,
    pub scenario: Scenario,
    pub options: SolveOptions,
    pub xi: f64,
    pub delta: f64,
    pub solution: Solution,
}

pub fn optimize(
    arg: &str,
    level: usize,
    seed: Option<u64>,
    budget: Option<u64>,
    out: &Path,
) -> Result<(), Failure> {
    let scenario = load_scenario(arg)?;
    let ocp = scenario.ocp()?;
    let inst = build_problem(&ocp, level).map_err(|e| Failure::usage(e.to_string()))?;
    let mut options = SolveOptions {
        seed: seed.unwrap_or(scenario.seed),
        penalty_tol: scenario.tolerances.feasibility,
        ..SolveOptions::default()
    };
    if let Some(b) = budget {
        options.budget = b as usize;
    }
    let (status, solution, failure) = match solve(&inst, &options) {
        Ok(s) => ("optimal", s, None),
        Err(DiscoptError::BudgetExhausted(s)) => (
            "budget_exhausted",
            *s,
            Some(Failure::with(
                EXIT_BUDGET,
                "evaluation budget exhausted; best triple so far written".into(),
            )),
        ),
        Err(e) => return Err(Failure::usage(e.to_string())),
    };
    let file = SolutionFile {
        status: status.to_string(),
        scenario: scenario.clone(),
        options,
        xi: inst.xi,
        delta: inst.delta,
        solution,
    };
    write_json(
        &out.join(format!("{}.level{level}.solution.json", scenario.name)),
        &file,
    )?;
    match failure {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct Certificate {
    /// `certified`, `infeasible` or `plicq_violated`.
    status: &'static str,
    scenario: String,
    level: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    normal: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    plicq_nodes: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    residuals: Option<ResidualReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    multipliers: Option<MultiplierSet>,
}

pub fn check_kkt(solution: &Path, out: &Path) -> Result<(), Failure> {
    let text = std::fs::read_to_string(solution)
        .map_err(|e| Failure::usage(format!("cannot read {}: {e}", solution.display())))?;
    let file: SolutionFile = serde_json::from_str(&text)
        .map_err(|e| Failure::usage(format!("bad solution file: {e}")))?;
    file.scenario.validate()?;
    let level = file.solution.level;
    let inst = build_problem(&file.scenario.ocp()?, level)
        .map_err(|e| Failure::usage(e.to_string()))?;
    let opts = RecoveryOptions {
        tol: file.scenario.tolerances.kkt,
        feasibility_tol: file.scenario.tolerances.feasibility,
        ..RecoveryOptions::default()
    };
    let stem = solution
        .file_stem()
        .and_then(|s| s.to_str())
        .map(|s| s.trim_end_matches(".solution").to_string())
        .unwrap_or_else(|| file.scenario.name.clone());
    let target: PathBuf = out.join(format!("{stem}.kkt.json"));
    let empty = |status, reason: String| Certificate {
        status,
        scenario: file.scenario.name.clone(),
        level,
        reason: Some(reason),
        normal: None,
        plicq_nodes: None,
        residuals: None,
        multipliers: None,
    };
    match recover_multipliers(&inst, &file.solution.triple, &opts) {
        Ok(rec) => {
            let cert = Certificate {
                status: "certified",
                scenario: file.scenario.name.clone(),
                level,
                reason: None,
                normal: Some(rec.normal),
                plicq_nodes: Some(rec.plicq_nodes),
                residuals: Some(rec.report.clone()),
                multipliers: Some(rec.multipliers),
            };
            write_json(&target, &cert)?;
            if rec.report.passes() {
                Ok(())
            } else {
                Err(Failure::with(
                    EXIT_KKT_INFEASIBLE,
                    format!("residuals above tolerance: {:?}", rec.report.flagged),
                ))
            }
        }
        Err(e @ OptimalityError::Infeasible(_)) => {
            write_json(&target, &empty("infeasible", e.to_string()))?;
            Err(Failure::with(EXIT_KKT_INFEASIBLE, e.to_string()))
        }
        Err(e @ OptimalityError::PlicqViolated { .. }) => {
            write_json(&target, &empty("plicq_violated", e.to_string()))?;
            Err(Failure::with(EXIT_KKT_INFEASIBLE, e.to_string()))
        }
        Err(e) => Err(Failure::usage(e.to_string())),
    }
}
