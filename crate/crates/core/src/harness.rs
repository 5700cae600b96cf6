//! The adaptive control loop, the least-squares comparison and result export.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Scenario, Setup};
use crate::epsilon_cert::{certify, CertificateInputs, EpsilonCertificate};
use crate::error::{Error, Result};
use crate::estimator::{
    constraints_from_sample, least_squares_estimate, Ellipsoid, ObeMonitor, OmegaSet,
};
use crate::linalg;
use crate::model::{evaluate_cost, GameModel, NashGroundTruth, UTilde};
use crate::polytope::{enumerate_vertices, HPolytope, HPolytopeRecord, VPolytope};
use crate::robust_design::{
    build_problem, solve_robust_lqr, verify_quadratic_stability, RobustLqrProblem, SdpSolution,
};
use crate::sim::{collect_samples, simulate, Trajectory};

/// Parameter dimension up to which vertex lists are stored in records.
const STORE_VERTICES_MAX_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub time: f64,
    pub k1: Vec<Vec<f64>>,
    pub volume: f64,
    pub volume_std_error: f64,
    pub vertex_count: usize,
    pub constraint_count: usize,
    pub objective: f64,
    /// `initial`, `solved` (Ω changed and the SDP was re-solved) or `reused`.
    pub status: String,
    /// Largest closed-loop spectral abscissa of the deployed gain over the vertices of Ω.
    pub max_vertex_abscissa: f64,
    pub omega: HPolytopeRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertices: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidRecord {
    pub row: usize,
    pub center: Vec<f64>,
    pub shape: Vec<Vec<f64>>,
    pub sigma2: f64,
}

impl EllipsoidRecord {
    pub fn from_ellipsoid(e: &Ellipsoid) -> Self {
        EllipsoidRecord {
            row: e.row,
            center: e.center.iter().copied().collect(),
            shape: linalg::to_rows(&e.shape),
            sigma2: e.sigma2,
        }
    }

    pub fn to_ellipsoid(&self) -> Result<Ellipsoid> {
        Ok(Ellipsoid {
            center: DVector::from_column_slice(&self.center),
            shape: linalg::from_rows(&self.shape)?,
            sigma2: self.sigma2,
            row: self.row,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalRecord {
    pub k1_final: Vec<Vec<f64>>,
    pub k1_star: Vec<Vec<f64>>,
    pub k2_star: Vec<Vec<f64>>,
    /// `‖K̂1 − K1*‖∞` (largest entry).
    pub gap_inf: f64,
    pub theta_true: Vec<f64>,
    pub truth_in_omega: bool,
    pub stop_reason: String,
    pub ellipsoids: Vec<EllipsoidRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<EpsilonCertificate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub config: Scenario,
    pub seed: u64,
    pub iterations: Vec<IterationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal: Option<TerminalRecord>,
}

impl ExperimentRecord {
    pub fn empty(config: Scenario) -> Self {
        ExperimentRecord {
            seed: config.seed,
            config,
            iterations: Vec::new(),
            terminal: None,
        }
    }

    pub fn volumes(&self) -> Vec<f64> {
        self.iterations.iter().map(|r| r.volume).collect()
    }
}

/// A finished run: the record plus the full state trajectory.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub record: ExperimentRecord,
    pub trajectory: Trajectory,
}

fn policies_of(setup: &Setup, v: &VPolytope) -> Vec<DMatrix<f64>> {
    v.vertices
        .iter()
        .map(|x| setup.model.param_mask.embed(x))
        .collect()
}

fn max_abscissa(model: &GameModel, k1: &DMatrix<f64>, policies: &[DMatrix<f64>]) -> f64 {
    policies
        .iter()
        .map(|d| linalg::spectral_abscissa(&(&model.a - d - &model.b1 * k1)))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn design(
    setup: &Setup,
    vertices: &VPolytope,
    cap: usize,
) -> Result<(RobustLqrProblem, SdpSolution)> {
    let problem = build_problem(
        &setup.model,
        &setup.w1,
        vertices,
        &setup.model.param_mask,
        cap,
    )?;
    let sol = solve_robust_lqr(&problem)?;
    Ok((problem, sol))
}

fn iteration_record(
    iteration: usize,
    time: f64,
    omega: &OmegaSet,
    vertices: &VPolytope,
    sol: &SdpSolution,
    status: &str,
    abscissa: f64,
    volume: (f64, f64),
) -> IterationRecord {
    IterationRecord {
        iteration,
        time,
        k1: linalg::to_rows(&sol.k1),
        volume: volume.0,
        volume_std_error: volume.1,
        vertex_count: vertices.len(),
        constraint_count: omega.hrep.num_constraints(),
        objective: sol.objective,
        status: status.to_string(),
        max_vertex_abscissa: abscissa,
        omega: omega.hrep.to_record(),
        vertices: (omega.hrep.dim() <= STORE_VERTICES_MAX_DIM).then(|| vertices.to_rows()),
    }
}

fn sample_times(scenario: &Scenario, t0: f64) -> Vec<f64> {
    (0..scenario.samples_per_update())
        .map(|k| t0 + k as f64 * scenario.dt_sample)
        .collect()
}

/// Runs the identification and re-design loop for one scenario.
pub fn run_algorithm1(scenario: &Scenario) -> Result<Experiment> {
    let setup = scenario.build()?;
    let settings = &scenario.algorithm;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let gamma = setup.lumped.per_axis_gamma.clone();
    let mut monitor = ObeMonitor::from_box(
        &setup.model.param_mask,
        &setup.omega0_lower,
        &setup.omega0_upper,
        &gamma,
    )?;

    let mut omega = OmegaSet::new(setup.omega0.clone());
    let vertices = omega.ensure_vertices()?.clone();
    let (_, mut sol) =
        design(&setup, &vertices, settings.vertex_cap).map_err(|e| e.at_iteration(0))?;
    let mut vertices = vertices;
    let mut policies = policies_of(&setup, &vertices);
    let vol = omega.hrep.volume()?;
    let mut volume = (vol.value, vol.std_error);
    let mut record = ExperimentRecord::empty(scenario.clone());
    record.iterations.push(iteration_record(
        0,
        0.0,
        &omega,
        &vertices,
        &sol,
        "initial",
        max_abscissa(&setup.model, &sol.k1, &policies),
        volume,
    ));

    let mut trajectory = Trajectory::default();
    let mut x = setup.x0.clone();
    let mut t = 0.0;
    let mut calm = 0usize;
    let mut sample_index = 0usize;
    let mut stop_reason = "max_iterations".to_string();
    for j in 1..=settings.max_iterations {
        let t1 = t + scenario.t_update;
        let seg = simulate(
            &setup.model,
            &sol.k1,
            &setup.truth,
            &setup.exogenous_gamma,
            &x,
            t,
            t1,
            scenario.dt_integrate,
            &mut rng,
        )
        .map_err(|e| e.at_iteration(j))?;
        let samples = collect_samples(&seg, &setup.model, &sample_times(scenario, t))
            .map_err(|e| e.at_iteration(j))?;
        let batch: Vec<_> = samples
            .iter()
            .map(|s| {
                constraints_from_sample(
                    s,
                    &setup.model.a,
                    &setup.model.b1,
                    &setup.lumped,
                    &setup.model.param_mask,
                )
            })
            .collect();
        for (k, s) in samples.iter().enumerate() {
            monitor
                .update(
                    s,
                    &setup.model.a,
                    &setup.model.b1,
                    &setup.model.param_mask,
                    sample_index + k,
                )
                .map_err(|e| e.at_iteration(j))?;
        }
        let next = omega
            .update(&batch, sample_index)
            .map_err(|e| e.at_iteration(j))?;
        sample_index += samples.len();
        let k_prev = sol.k1.clone();
        let status;
        omega = next;
        if omega.changed {
            vertices = omega
                .ensure_vertices()
                .map_err(|e| e.at_iteration(j))?
                .clone();
            policies = policies_of(&setup, &vertices);
            let (_, s) =
                design(&setup, &vertices, settings.vertex_cap).map_err(|e| e.at_iteration(j))?;
            sol = s;
            let vol = omega.hrep.volume().map_err(|e| e.at_iteration(j))?;
            volume = (vol.value, vol.std_error);
            status = "solved";
        } else {
            status = "reused";
        }
        x = seg.last_state().expect("segment is nonempty").clone();
        trajectory.extend(&seg);
        t = t1;
        record.iterations.push(iteration_record(
            j,
            t,
            &omega,
            &vertices,
            &sol,
            status,
            max_abscissa(&setup.model, &sol.k1, &policies),
            volume,
        ));
        let change = (&sol.k1 - &k_prev).amax();
        calm = if change < settings.stop_tol {
            calm + 1
        } else {
            0
        };
        if calm >= settings.stop_patience {
            stop_reason = "converged".to_string();
            break;
        }
    }

    let truth_policy = setup.true_policy();
    let cert_in = CertificateInputs {
        model: &setup.model,
        w1: &setup.w1,
        vertex_policies: &policies,
        k1_hat: &sol.k1,
        k1_star: &setup.nash.k1_star,
        x0: &setup.x0,
        ellipsoids: &monitor.ellipsoids,
        gamma: monitor.gamma.as_slice(),
    };
    let (certificate, certificate_error) = match certify(&cert_in) {
        Ok(c) => (Some(c), None),
        Err(e) => (None, Some(e.to_string())),
    };
    record.terminal = Some(TerminalRecord {
        k1_final: linalg::to_rows(&sol.k1),
        k1_star: linalg::to_rows(&setup.nash.k1_star),
        k2_star: linalg::to_rows(&setup.truth.k2_star),
        gap_inf: (&sol.k1 - &setup.nash.k1_star).amax(),
        theta_true: setup.theta_true.iter().copied().collect(),
        truth_in_omega: omega.contains(&setup.model.param_mask.extract(&truth_policy), 1e-9),
        stop_reason,
        ellipsoids: monitor
            .ellipsoids
            .iter()
            .map(EllipsoidRecord::from_ellipsoid)
            .collect(),
        certificate,
        certificate_error,
    });
    Ok(Experiment { record, trajectory })
}

/// Recomputes the certificate from a saved record.
pub fn certify_record(record: &ExperimentRecord) -> Result<EpsilonCertificate> {
    let setup = record.config.build()?;
    let last = record
        .iterations
        .last()
        .ok_or_else(|| Error::Certificate("the record has no iterations".into()))?;
    let terminal = record
        .terminal
        .as_ref()
        .ok_or_else(|| Error::Certificate("the record has no terminal section".into()))?;
    let omega = HPolytope::from_record(&last.omega)?;
    let vertices = enumerate_vertices(&omega)?;
    let policies = policies_of(&setup, &vertices);
    let k1_hat = linalg::from_rows(&terminal.k1_final)?;
    let ellipsoids = terminal
        .ellipsoids
        .iter()
        .map(EllipsoidRecord::to_ellipsoid)
        .collect::<Result<Vec<_>>>()?;
    let gamma: Vec<f64> = ellipsoids
        .iter()
        .map(|e| setup.lumped.per_axis_gamma[e.row])
        .collect();
    certify(&CertificateInputs {
        model: &setup.model,
        w1: &setup.w1,
        vertex_policies: &policies,
        k1_hat: &k1_hat,
        k1_star: &setup.nash.k1_star,
        x0: &setup.x0,
        ellipsoids: &ellipsoids,
        gamma: &gamma,
    })
}

/// Disturbance-free cost of player 1 against the equilibrium adversary,
/// by simulation and trapezoid quadrature over the scenario horizon.
pub fn disturbance_free_cost(setup: &Setup, scenario: &Scenario, k1: &DMatrix<f64>) -> Result<f64> {
    let truth = NashGroundTruth::new(setup.truth.k2_star.clone(), UTilde::zero(setup.model.nu2()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let traj = simulate(
        &setup.model,
        k1,
        &truth,
        &DVector::zeros(setup.model.nx()),
        &setup.x0,
        0.0,
        scenario.horizon,
        scenario.dt_integrate,
        &mut rng,
    )?;
    Ok(evaluate_cost(&traj, &setup.w1, k1)?.value)
}

/// `J1(K̂1) − J1(K1*)` without disturbance.
pub fn measured_cost_gap(scenario: &Scenario, k1_hat: &DMatrix<f64>) -> Result<f64> {
    let setup = scenario.build()?;
    Ok(disturbance_free_cost(&setup, scenario, k1_hat)?
        - disturbance_free_cost(&setup, scenario, &setup.nash.k1_star)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexTrace {
    pub vertex: Vec<f64>,
    pub robust_x1: Vec<f64>,
    pub ls_x1: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub seed: u64,
    pub data_gain: DataGain,
    pub n_samples: usize,
    pub vertices: Vec<Vec<f64>>,
    pub theta_ls: Vec<f64>,
    pub ls_in_omega: bool,
    pub k_robust: Vec<Vec<f64>>,
    pub k_ls: Vec<Vec<f64>>,
    pub robust_abscissa: Vec<f64>,
    pub ls_abscissa: Vec<f64>,
    pub robust_all_stable: bool,
    pub ls_all_stable: bool,
    /// Convex combinations checked by the quadratic-stability verifier.
    pub robust_verified: bool,
    pub trace_times: Vec<f64>,
    pub traces: Vec<VertexTrace>,
}

const TRACE_POINTS: usize = 201;
const TRACE_HORIZON: f64 = 10.0;
const TRACE_SUBSTEPS: usize = 10;

/// `x1(t)` of the noise-free linear closed loop `ẋ = A_cl x`, by RK4.
fn closed_loop_trace(a_cl: &DMatrix<f64>, x0: &DVector<f64>) -> Vec<f64> {
    let h = TRACE_HORIZON / ((TRACE_POINTS - 1) * TRACE_SUBSTEPS) as f64;
    let mut x = x0.clone();
    let mut out = Vec::with_capacity(TRACE_POINTS);
    out.push(x[0]);
    for _ in 1..TRACE_POINTS {
        for _ in 0..TRACE_SUBSTEPS {
            let k1 = a_cl * &x;
            let k2 = a_cl * (&x + &k1 * (0.5 * h));
            let k3 = a_cl * (&x + &k2 * (0.5 * h));
            let k4 = a_cl * (&x + &k3 * h);
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        out.push(if x[0].is_finite() {
            x[0]
        } else {
            f64::INFINITY
        });
    }
    out
}

/// Controller that generates the comparison data batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataGain {
    /// The equilibrium gain `K1*`: both players near equilibrium.
    Nash,
    /// The robust gain designed on Ω⁰.
    Initial,
}

impl std::str::FromStr for DataGain {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nash" => Ok(DataGain::Nash),
            "initial" => Ok(DataGain::Initial),
            other => Err(Error::Config(format!(
                "unknown data gain {other:?} (expected nash or initial)"
            ))),
        }
    }
}

/// One seeded batch of `n_samples` samples under `data_gain`; compares the
/// set-based robust gain with the gain designed at the least-squares point.
pub fn run_ls_comparison(
    scenario: &Scenario,
    n_samples: usize,
    seed: u64,
    data_gain: DataGain,
) -> Result<ComparisonRecord> {
    let setup = scenario.build()?;
    let p = setup.model.param_mask.len();
    if n_samples < p {
        return Err(Error::Input(format!(
            "least squares needs at least {p} samples"
        )));
    }
    let cap = scenario.algorithm.vertex_cap;
    let omega0 = OmegaSet::new(setup.omega0.clone());
    let v0 = enumerate_vertices(&omega0.hrep)?;
    let data_k1 = match data_gain {
        DataGain::Nash => setup.nash.k1_star.clone(),
        DataGain::Initial => design(&setup, &v0, cap)?.1.k1,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t1 = n_samples as f64 * scenario.dt_sample;
    let traj = simulate(
        &setup.model,
        &data_k1,
        &setup.truth,
        &setup.exogenous_gamma,
        &setup.x0,
        0.0,
        t1,
        scenario.dt_integrate,
        &mut rng,
    )?;
    let times: Vec<f64> = (0..n_samples)
        .map(|k| k as f64 * scenario.dt_sample)
        .collect();
    let samples = collect_samples(&traj, &setup.model, &times)?;
    let batch: Vec<_> = samples
        .iter()
        .map(|s| {
            constraints_from_sample(
                s,
                &setup.model.a,
                &setup.model.b1,
                &setup.lumped,
                &setup.model.param_mask,
            )
        })
        .collect();
    let mut omega = omega0.update(&batch, 0)?;
    let vertices = omega.ensure_vertices()?.clone();
    let policies = policies_of(&setup, &vertices);
    let (problem, robust) = design(&setup, &vertices, cap)?;
    let report = verify_quadratic_stability(&robust, &problem, 100, seed);

    let theta_ls = least_squares_estimate(
        &samples,
        &setup.model.a,
        &setup.model.b1,
        &setup.model.param_mask,
    )?;
    let ls_vertex = VPolytope {
        vertices: vec![theta_ls.clone()],
        lower_dimensional: true,
    };
    let (_, ls) = design(&setup, &ls_vertex, cap)?;

    let abscissa = |k: &DMatrix<f64>| -> Vec<f64> {
        policies
            .iter()
            .map(|d| linalg::spectral_abscissa(&(&setup.model.a - d - &setup.model.b1 * k)))
            .collect()
    };
    let robust_abscissa = abscissa(&robust.k1);
    let ls_abscissa = abscissa(&ls.k1);
    let traces = vertices
        .vertices
        .iter()
        .zip(&policies)
        .map(|(v, d)| VertexTrace {
            vertex: v.iter().copied().collect(),
            robust_x1: closed_loop_trace(
                &(&setup.model.a - d - &setup.model.b1 * &robust.k1),
                &setup.x0,
            ),
            ls_x1: closed_loop_trace(&(&setup.model.a - d - &setup.model.b1 * &ls.k1), &setup.x0),
        })
        .collect();
    Ok(ComparisonRecord {
        seed,
        data_gain,
        n_samples,
        vertices: vertices.to_rows(),
        ls_in_omega: omega.contains(&theta_ls, 1e-9),
        theta_ls: theta_ls.iter().copied().collect(),
        k_robust: linalg::to_rows(&robust.k1),
        k_ls: linalg::to_rows(&ls.k1),
        robust_all_stable: robust_abscissa.iter().all(|&a| a < 0.0),
        ls_all_stable: ls_abscissa.iter().all(|&a| a < 0.0),
        robust_verified: report.passed(),
        robust_abscissa,
        ls_abscissa,
        trace_times: (0..TRACE_POINTS)
            .map(|i| i as f64 * TRACE_HORIZON / (TRACE_POINTS - 1) as f64)
            .collect(),
        traces,
    })
}

/// Independent comparisons over many seeds, in parallel.
pub fn sweep_ls_comparison(
    scenario: &Scenario,
    n_samples: usize,
    seeds: &[u64],
    data_gain: DataGain,
) -> Vec<Result<ComparisonRecord>> {
    seeds
        .par_iter()
        .map(|&s| run_ls_comparison(scenario, n_samples, s, data_gain))
        .collect()
}

fn csv_row(fields: impl IntoIterator<Item = String>) -> String {
    let mut s = fields.into_iter().collect::<Vec<_>>().join(",");
    s.push('\n');
    s
}

fn flat(rows: &[Vec<f64>]) -> Vec<f64> {
    // Row-major flattening of a gain.
    rows.iter().flatten().copied().collect()
}

pub fn gains_csv(record: &ExperimentRecord) -> String {
    let star = record
        .terminal
        .as_ref()
        .map(|t| flat(&t.k1_star))
        .unwrap_or_default();
    let n = record
        .iterations
        .first()
        .map_or(star.len(), |r| flat(&r.k1).len());
    let mut header = vec!["iteration".to_string()];
    header.extend((1..=n).map(|i| format!("k1_{i}")));
    header.extend((1..=star.len()).map(|i| format!("k1_star_{i}")));
    let mut out = csv_row(header);
    for it in &record.iterations {
        let mut f = vec![it.iteration.to_string()];
        f.extend(flat(&it.k1).iter().map(f64::to_string));
        f.extend(star.iter().map(f64::to_string));
        out.push_str(&csv_row(f));
    }
    out
}

pub fn volume_csv(record: &ExperimentRecord) -> String {
    let mut out = csv_row(["iteration", "volume", "std_error", "vertex_count"].map(String::from));
    for it in &record.iterations {
        out.push_str(&csv_row([
            it.iteration.to_string(),
            it.volume.to_string(),
            it.volume_std_error.to_string(),
            it.vertex_count.to_string(),
        ]));
    }
    out
}

#[derive(Serialize)]
struct PolytopeFile<'a> {
    iteration: usize,
    #[serde(flatten)]
    omega: &'a HPolytopeRecord,
    #[serde(skip_serializing_if = "Option::is_none")]
    vertices: Option<&'a Vec<Vec<f64>>>,
}

/// Writes `summary.json`, `gains.csv`, `volume.csv`, `polytopes/iter_j.json`
/// and `trajectory.csv` under `dir`.
pub fn export_record(record: &ExperimentRecord, trajectory: &Trajectory, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir.join("polytopes"))?;
    std::fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(record)?,
    )?;
    std::fs::write(dir.join("gains.csv"), gains_csv(record))?;
    std::fs::write(dir.join("volume.csv"), volume_csv(record))?;
    for it in &record.iterations {
        let file = PolytopeFile {
            iteration: it.iteration,
            omega: &it.omega,
            vertices: it.vertices.as_ref(),
        };
        std::fs::write(
            dir.join("polytopes")
                .join(format!("iter_{}.json", it.iteration)),
            serde_json::to_string_pretty(&file)?,
        )?;
    }
    std::fs::write(dir.join("trajectory.csv"), trajectory.to_csv())?;
    Ok(())
}

pub fn load_record(path: &Path) -> Result<ExperimentRecord> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
