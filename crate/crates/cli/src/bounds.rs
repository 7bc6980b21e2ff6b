//! Randomized sweep over the scenario's moving set: truncation estimates,
//! the Slater-point error bound, and Hoffman ratios on the example21 grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use polysweep::builtin::example21_path;
use polysweep::scenario::Scenario;
use polysweep::{Mesh, Polyhedron};

use crate::commands::Failure;

/// Search box half-width for the Slater points behind the error bound.
const SLATER_RADIUS: f64 = 100.0;

#[derive(Clone, Debug, Serialize)]
pub struct WorstCase {
    pub t: f64,
    pub x: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PropertySummary {
    pub name: String,
    /// Samples where the property applied.
    pub evaluated: usize,
    pub violations: usize,
    /// Smallest `rhs - lhs` seen.
    pub worst_slack: Option<f64>,
    pub worst_case: Option<WorstCase>,
}

impl PropertySummary {
    fn new(name: &str) -> Self {
        PropertySummary {
            name: name.to_string(),
            evaluated: 0,
            violations: 0,
            worst_slack: None,
            worst_case: None,
        }
    }

    fn record(&mut self, case: WorstCase, tol: f64) {
        self.evaluated += 1;
        let slack = case.rhs - case.lhs;
        if slack < -tol * (1.0 + case.rhs.abs()) {
            self.violations += 1;
        }
        if self.worst_slack.is_none_or(|w| slack < w) {
            self.worst_slack = Some(slack);
            self.worst_case = Some(case);
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HoffmanRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub ratio: f64,
    /// `1 / t`.
    pub expected: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundsReport {
    pub scenario: String,
    pub samples: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub properties: Vec<PropertySummary>,
    pub hoffman: Vec<HoffmanRow>,
    pub passed: bool,
}

fn random_direction(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let r = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if r > 1e-3 && r <= 1.0 {
            return v.into_iter().map(|a| a / r).collect();
        }
    }
}

/// Uniform point of the ball `B(0, r)`.
fn in_ball(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vec<f64> {
    let s = r * rng.gen::<f64>().powf(1.0 / n as f64);
    random_direction(rng, n).into_iter().map(|a| a * s).collect()
}

fn geo(e: impl std::fmt::Display) -> Failure {
    Failure::usage(e.to_string())
}

/// Example21 at `x = (t^-3, 1)`: the ratio equals `1/t`.
fn hoffman_table() -> Result<Vec<HoffmanRow>, Failure> {
    let path = example21_path::<f64>(&Mesh::uniform(1.0, 1).map_err(geo)?);
    let mut rows = Vec::new();
    for t in [0.5, 0.2, 0.1, 0.05] {
        let p = path.polyhedron_at(t).map_err(geo)?;
        let x = vec![t.powi(-3), 1.0];
        let ratio = p.hoffman_ratio(&x).map_err(geo)?;
        let expected = 1.0 / t;
        rows.push(HoffmanRow {
            t,
            x,
            ratio,
            expected,
            relative_error: (ratio - expected).abs() / expected,
        });
    }
    Ok(rows)
}

pub fn sweep(scenario: &Scenario, samples: usize, seed: u64) -> Result<BoundsReport, Failure> {
    let tol = scenario.tolerances.property;
    let path = scenario.control()?;
    let horizon = scenario.mesh.horizon;
    let n = scenario.dimension;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut general = PropertySummary::new("truncation");
    let mut factor3 = PropertySummary::new("truncation_factor_3");
    let mut error_bound = PropertySummary::new("error_bound");

    for _ in 0..samples {
        let t = rng.gen_range(0.0..=horizon);
        let p: Polyhedron = path.polyhedron_at(t).map_err(geo)?;
        let d0 = p.distance(&vec![0.0; n]).map_err(geo)?;

        let r = d0 + rng.gen_range(0.05..5.0) * (1.0 + d0);
        let x = in_ball(&mut rng, n, r);
        let lhs = p.truncated_distance(&x, r).map_err(geo)?;
        let rhs = 2.0 * r / (r - d0) * p.distance(&x).map_err(geo)?;
        general.record(WorstCase { t, x, r: Some(r), lhs, rhs }, tol);

        let r = 3.0 * d0 + rng.gen_range(0.05..5.0) * (1.0 + d0);
        let x = in_ball(&mut rng, n, r);
        let lhs = p.truncated_distance(&x, r).map_err(geo)?;
        let rhs = 3.0 * p.distance(&x).map_err(geo)?;
        factor3.record(WorstCase { t, x, r: Some(r), lhs, rhs }, tol);

        let cert = p.slater_margin(SLATER_RADIUS).map_err(geo)?;
        if cert.margin > 0.0 {
            let scale = 1.0 + cert.point.iter().map(|a| a * a).sum::<f64>().sqrt();
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0) * scale).collect();
            if p.residual(&x).map_err(geo)?.0 > 0.0 {
                let lhs = p.distance(&x).map_err(geo)?;
                let rhs = p.distance_upper_bound(&x, &cert).map_err(geo)?;
                error_bound.record(WorstCase { t, x, r: None, lhs, rhs }, tol);
            }
        }
    }

    let (properties, hoffman) = if samples == 0 {
        (Vec::new(), Vec::new())
    } else {
        (vec![general, factor3, error_bound], hoffman_table()?)
    };
    let passed = properties.iter().all(|p| p.violations == 0)
        && hoffman.iter().all(|h| h.relative_error <= 1e-9);
    Ok(BoundsReport {
        scenario: scenario.name.clone(),
        samples,
        seed,
        tolerance: tol,
        properties,
        hoffman,
        passed,
    })
}
