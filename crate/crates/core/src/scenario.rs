//! JSON scenario files: moving polyhedron, mesh, initial state and an
//! optional optimal control block.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::builtin::{example21_path, example21_unit_path};
use crate::control::{ControlError, ControlPath, Mesh};
use crate::discopt::{simulated_reference, DiscoptError, Reference, SweepOCP, TerminalCost};
use crate::geometry::{GeometryError, Polyhedron};
use crate::sweep::{analytic_oracle, SweepError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unknown builtin scenario {0:?}")]
    UnknownBuiltin(String),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error(transparent)]
    Discopt(#[from] DiscoptError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    pub horizon: f64,
    pub steps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinControl {
    /// `u_1 = (0, 1), b_1 = 1, u_2(t) = (t, -1), b_2 = 0`.
    Example21,
    /// The same sets with `u_2` scaled to unit length.
    Example21Unit,
}

/// Either a builtin control pair or knots on the scenario mesh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlSpec {
    Builtin(BuiltinControl),
    Knots {
        u: Vec<Vec<Vec<f64>>>,
        b: Vec<Vec<f64>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyhedronSpec {
    pub normals: Vec<Vec<f64>>,
    pub offsets: Vec<f64>,
}

/// How the reference trajectory of the optimal control block is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceStates {
    /// Catching-up run of the control on the reference mesh.
    #[default]
    Simulated,
    /// Closed-form solution; example21 controls only.
    Analytic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcpSpec {
    pub terminal_cost: TerminalCost,
    pub target: PolyhedronSpec,
    pub epsilon: f64,
    pub delta0: f64,
    pub nu0: usize,
    /// The reference lives on `nu0 * 2^reference_levels` intervals.
    #[serde(default = "default_reference_levels")]
    pub reference_levels: u32,
    #[serde(default)]
    pub reference: ReferenceStates,
}

fn default_reference_levels() -> u32 {
    1
}

/// Tolerances a scenario may override.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioTolerances {
    /// Allowed violation in the randomized bound checks.
    pub property: f64,
    /// Feasibility tolerance for discrete triples.
    pub feasibility: f64,
    /// Threshold on every multiplier-condition residual.
    pub kkt: f64,
}

impl Default for ScenarioTolerances {
    fn default() -> Self {
        ScenarioTolerances {
            property: 1e-9,
            feasibility: 1e-8,
            kkt: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub dimension: usize,
    pub constraints: usize,
    pub mesh: MeshSpec,
    pub control: ControlSpec,
    pub x0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ocp: Option<OcpSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: ScenarioTolerances,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    /// `example21` (simulation from `(2, 0.5)`) or `steering` (the optimal
    /// control scenario on the same moving set).
    pub fn builtin(name: &str) -> Result<Self, ScenarioError> {
        let base = Scenario {
            name: name.to_string(),
            dimension: 2,
            constraints: 2,
            mesh: MeshSpec {
                horizon: 1.0,
                steps: 1000,
            },
            control: ControlSpec::Builtin(BuiltinControl::Example21),
            x0: vec![2.0, 0.5],
            ocp: None,
            seed: 0,
            tolerances: ScenarioTolerances::default(),
        };
        match name {
            "example21" => Ok(base),
            "steering" => Ok(Scenario {
                mesh: MeshSpec {
                    horizon: 1.0,
                    steps: 20,
                },
                control: ControlSpec::Builtin(BuiltinControl::Example21Unit),
                ocp: Some(OcpSpec {
                    terminal_cost: TerminalCost::Quadratic {
                        target: vec![1.0, 1.0],
                    },
                    target: PolyhedronSpec {
                        normals: vec![
                            vec![1.0, 0.0],
                            vec![-1.0, 0.0],
                            vec![0.0, 1.0],
                            vec![0.0, -1.0],
                        ],
                        offsets: vec![1.25, -0.75, 1.25, -0.75],
                    },
                    epsilon: 10.0,
                    delta0: 0.1,
                    nu0: 10,
                    reference_levels: 1,
                    reference: ReferenceStates::Analytic,
                }),
                ..base
            }),
            _ => Err(ScenarioError::UnknownBuiltin(name.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let (n, m) = (self.dimension, self.constraints);
        if n == 0 || m == 0 {
            return Err(ScenarioError::Invalid("dimension and constraints must be positive".into()));
        }
        if self.x0.len() != n {
            return Err(ScenarioError::Invalid(format!(
                "x0 has length {} but dimension is {n}",
                self.x0.len()
            )));
        }
        if !self.x0.iter().all(|v| v.is_finite()) {
            return Err(ScenarioError::Invalid("x0 is not finite".into()));
        }
        let mesh = self.mesh()?;
        match &self.control {
            ControlSpec::Builtin(_) => {
                if (n, m) != (2, 2) {
                    return Err(ScenarioError::Invalid(
                        "example21 controls have dimension 2 and 2 constraints".into(),
                    ));
                }
            }
            ControlSpec::Knots { .. } => {
                let p = self.control_on(&mesh)?;
                if p.dim() != n || p.num_constraints() != m {
                    return Err(ScenarioError::Invalid(format!(
                        "knots describe {} constraints in R^{}",
                        p.num_constraints(),
                        p.dim()
                    )));
                }
            }
        }
        if let Some(ocp) = &self.ocp {
            if ocp.terminal_cost.dim() != n {
                return Err(ScenarioError::Invalid("terminal cost dimension".into()));
            }
            let t = &ocp.target;
            if t.normals.len() != t.offsets.len() || t.normals.iter().any(|a| a.len() != n) {
                return Err(ScenarioError::Invalid("target polyhedron shape".into()));
            }
            if ocp.reference == ReferenceStates::Analytic
                && !matches!(self.control, ControlSpec::Builtin(_))
            {
                return Err(ScenarioError::Invalid(
                    "analytic reference states need an example21 control".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn mesh(&self) -> Result<Mesh<f64>, ScenarioError> {
        Ok(Mesh::uniform(self.mesh.horizon, self.mesh.steps)?)
    }

    /// Control on the scenario mesh.
    pub fn control(&self) -> Result<ControlPath<f64>, ScenarioError> {
        self.control_on(&self.mesh()?)
    }

    /// Control realized on `mesh`: builtins are sampled exactly, knot data
    /// is interpolated.
    pub fn control_on(&self, mesh: &Mesh<f64>) -> Result<ControlPath<f64>, ScenarioError> {
        Ok(match &self.control {
            ControlSpec::Builtin(BuiltinControl::Example21) => example21_path(mesh),
            ControlSpec::Builtin(BuiltinControl::Example21Unit) => example21_unit_path(mesh),
            ControlSpec::Knots { u, b } => {
                let own = ControlPath::new(self.mesh()?, u.clone(), b.clone())?;
                if own.mesh() == mesh {
                    own
                } else {
                    own.resample(mesh)?
                }
            }
        })
    }

    /// The optimal control problem of the `ocp` block.
    pub fn ocp(&self) -> Result<SweepOCP, ScenarioError> {
        let spec = self
            .ocp
            .as_ref()
            .ok_or_else(|| ScenarioError::Invalid("scenario has no ocp block".into()))?;
        let fine = Mesh::uniform(self.mesh.horizon, spec.nu0 << spec.reference_levels)?;
        let control = self.control_on(&fine)?;
        let reference = match spec.reference {
            ReferenceStates::Simulated => simulated_reference(control, &self.x0)?,
            ReferenceStates::Analytic => {
                let states = fine
                    .nodes()
                    .iter()
                    .map(|&t| analytic_oracle(&self.x0, t))
                    .collect::<Result<Vec<_>, _>>()?;
                Reference { control, states }
            }
        };
        let target = Polyhedron::new(spec.target.normals.clone(), spec.target.offsets.clone())?;
        Ok(SweepOCP::new(
            spec.terminal_cost.clone(),
            target,
            reference,
            spec.epsilon,
            spec.delta0,
            spec.nu0,
        )?)
    }
}
