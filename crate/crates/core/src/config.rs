//! Scenario files and their validated, matrix-valued form.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{CostWeights, DisturbanceBox, GameModel, NashGroundTruth, ParamMask, UTilde};
use crate::polytope::HPolytope;
use crate::riccati::{solve_coupled_care, NashSolution};

pub const CONTACT_ROBOT_TOML: &str = include_str!("../../../scenarios/contact_robot.toml");
pub const EXAMPLE2_TOML: &str = include_str!("../../../scenarios/example2.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSpec {
    /// Exogenous bound `|w_i| ≤ gamma_i`, used by the simulator.
    pub gamma: Vec<f64>,
    /// Lumped bound used for identification; defaults to
    /// `gamma_i + Σ_j |B2_ij|·|amplitude_j|`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lumped_gamma: Option<Vec<f64>>,
}

/// Initial parameter box, either explicit or as multiples of the true policy entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Omega0Spec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
    /// `[a, b]`: entry `θ_k` ranges between `a·θ*_k` and `b·θ*_k`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_multiple: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSettings {
    pub max_iterations: usize,
    pub stop_tol: f64,
    pub stop_patience: usize,
    pub vertex_cap: usize,
}

impl Default for AlgorithmSettings {
    fn default() -> Self {
        AlgorithmSettings {
            max_iterations: 40,
            stop_tol: 1e-3,
            stop_patience: 5,
            vertex_cap: crate::robust_design::DEFAULT_VERTEX_CAP,
        }
    }
}

/// Scenario file contents. Matrices are row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B1")]
    pub b1: Vec<Vec<f64>>,
    #[serde(rename = "B2")]
    pub b2: Vec<Vec<f64>>,
    #[serde(rename = "Q1")]
    pub q1: Vec<Vec<f64>>,
    #[serde(rename = "R1")]
    pub r1: Vec<Vec<f64>>,
    #[serde(rename = "Q2")]
    pub q2: Vec<Vec<f64>>,
    #[serde(rename = "R2")]
    pub r2: Vec<Vec<f64>>,
    #[serde(rename = "K2_star", default, skip_serializing_if = "Option::is_none")]
    pub k2_star: Option<Vec<Vec<f64>>>,
    pub u_tilde: UTilde,
    pub disturbance: DisturbanceSpec,
    pub param_mask: Vec<Vec<bool>>,
    pub x0: Vec<f64>,
    #[serde(rename = "T_update")]
    pub t_update: f64,
    pub dt_sample: f64,
    pub dt_integrate: f64,
    /// Truncation horizon for cost quadrature.
    pub horizon: f64,
    pub seed: u64,
    pub omega0: Omega0Spec,
    #[serde(default)]
    pub algorithm: AlgorithmSettings,
}

/// Everything derived from a scenario that the experiments need.
#[derive(Debug, Clone)]
pub struct Setup {
    pub model: GameModel,
    pub w1: CostWeights,
    pub w2: CostWeights,
    pub nash: NashSolution,
    pub truth: NashGroundTruth,
    /// Masked entries of the true `B2K2`.
    pub theta_true: DVector<f64>,
    pub exogenous_gamma: DVector<f64>,
    pub lumped: DisturbanceBox,
    pub omega0: HPolytope,
    pub omega0_lower: DVector<f64>,
    pub omega0_upper: DVector<f64>,
    pub x0: DVector<f64>,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "contact_robot" => Self::from_toml(CONTACT_ROBOT_TOML),
            "example2" => Self::from_toml(EXAMPLE2_TOML),
            other => Err(Error::Config(format!(
                "unknown built-in scenario {other:?}"
            ))),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Sample offsets within one update interval: `0, Δt, …` strictly below `T`.
    pub fn samples_per_update(&self) -> usize {
        ((self.t_update / self.dt_sample) - 1e-9).ceil().max(1.0) as usize
    }

    /// Integration steps per sampling interval.
    pub fn substeps(&self) -> usize {
        (self.dt_sample / self.dt_integrate).round() as usize
    }

    pub fn build(&self) -> Result<Setup> {
        positive("T_update", self.t_update)?;
        positive("dt_sample", self.dt_sample)?;
        positive("dt_integrate", self.dt_integrate)?;
        positive("horizon", self.horizon)?;
        let ratio = self.dt_sample / self.dt_integrate;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio || ratio.round() < 1.0 {
            return Err(Error::Config(
                "dt_sample must be an integer multiple of dt_integrate".into(),
            ));
        }
        let ratio = self.t_update / self.dt_sample;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio || ratio.round() < 1.0 {
            return Err(Error::Config(
                "T_update must be an integer multiple of dt_sample".into(),
            ));
        }
        let a = linalg::from_rows(&self.a)?;
        let b1 = linalg::from_rows(&self.b1)?;
        let b2 = linalg::from_rows(&self.b2)?;
        let mask = ParamMask::from_rows(&self.param_mask)?;
        let model = GameModel::new(a, b1, b2, mask)?;
        let nx = model.nx();
        let w1 = CostWeights::new(
            linalg::from_rows(&self.q1)?,
            linalg::from_rows(&self.r1)?,
            1,
        )?;
        let w2 = CostWeights::new(
            linalg::from_rows(&self.q2)?,
            linalg::from_rows(&self.r2)?,
            2,
        )?;
        if w1.q.nrows() != nx
            || w2.q.nrows() != nx
            || w1.r.nrows() != model.nu1()
            || w2.r.nrows() != model.nu2()
        {
            return Err(Error::Config(
                "weight dimensions do not match the dynamics".into(),
            ));
        }
        let nash = solve_coupled_care(&model.a, &model.b1, &model.b2, &w1.q, &w2.q, &w1.r, &w2.r)?;
        let k2 = match &self.k2_star {
            Some(rows) => linalg::from_rows(rows)?,
            None => nash.k2_star.clone(),
        };
        if k2.shape() != (model.nu2(), nx) {
            return Err(Error::Config("K2_star has the wrong shape".into()));
        }
        model.check_mask(&k2)?;
        let truth = NashGroundTruth::new(k2.clone(), self.u_tilde.clone())?;
        let theta_true = model.param_mask.extract(&(&model.b2 * &k2));

        if self.disturbance.gamma.len() != nx || self.disturbance.gamma.iter().any(|&g| !(g >= 0.0))
        {
            return Err(Error::Config(
                "disturbance.gamma needs nx nonnegative entries".into(),
            ));
        }
        let exogenous_gamma = DVector::from_column_slice(&self.disturbance.gamma);
        let lumped_gamma = match &self.disturbance.lumped_gamma {
            Some(g) => {
                if g.len() != nx {
                    return Err(Error::Config(
                        "disturbance.lumped_gamma needs nx entries".into(),
                    ));
                }
                DVector::from_column_slice(g)
            }
            None => {
                let env = self.u_tilde.envelope();
                DVector::from_fn(nx, |i, _| {
                    exogenous_gamma[i]
                        + (0..model.nu2())
                            .map(|j| model.b2[(i, j)].abs() * env[j])
                            .sum::<f64>()
                })
            }
        };
        // Axes with a zero bound would make every constraint an equality; keep a floor.
        let lumped_gamma = lumped_gamma.map(|g| g.max(1e-12));
        let lumped = DisturbanceBox::axis_aligned(&lumped_gamma)?;

        let p = model.param_mask.len();
        let (lower, upper) = match (
            &self.omega0.lower,
            &self.omega0.upper,
            &self.omega0.truth_multiple,
        ) {
            (Some(l), Some(u), None) => {
                (DVector::from_column_slice(l), DVector::from_column_slice(u))
            }
            (None, None, Some([m0, m1])) => {
                let lo = theta_true.map(|t| (m0 * t).min(m1 * t));
                let hi = theta_true.map(|t| (m0 * t).max(m1 * t));
                (lo, hi)
            }
            _ => {
                return Err(Error::Config(
                    "omega0 needs either lower and upper, or truth_multiple".into(),
                ))
            }
        };
        if lower.len() != p || upper.len() != p {
            return Err(Error::Config(format!("omega0 bounds need {p} entries")));
        }
        let omega0 = HPolytope::from_box(&lower, &upper)?;
        if self.x0.len() != nx {
            return Err(Error::Config("x0 has the wrong length".into()));
        }
        Ok(Setup {
            model,
            w1,
            w2,
            nash,
            truth,
            theta_true,
            exogenous_gamma,
            lumped,
            omega0,
            omega0_lower: lower,
            omega0_upper: upper,
            x0: DVector::from_column_slice(&self.x0),
        })
    }
}

impl Setup {
    /// Full true `B2K2`.
    pub fn true_policy(&self) -> DMatrix<f64> {
        self.model.param_mask.embed(&self.theta_true)
    }
}
