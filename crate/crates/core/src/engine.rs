//! The ADMM iteration, in matrix form and in the two message-passing forms.
//!
//! All forms are driven by the same `(z, λ)` state: the matrix form keeps the
//! stacked vectors, the distributed forms keep per-agent `(x, χ, Δ)` where
//! `χ(n) − Δ(n)` is the average over `σ(n)` of `z(n) − λ(n)/ρ`.

use std::io::Write;
use std::path::Path;

use nalgebra::Cholesky;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::linalg::{DenseMatrix, LinalgError, Vector};
use crate::objectives::{box_muller, ObjectiveError, ProblemInstance};
use crate::topology::{ComponentStructure, TopologyError};

pub const DEFAULT_MAX_ITERS: usize = 2000;
pub const DEFAULT_STOP_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Which implementation advances the iterates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    /// Stacked vectors and the mixing matrices.
    #[default]
    Matrix,
    /// Agents plus one averaging head per component.
    Distributed,
    /// Neighbour exchanges only; needs two-agent components.
    Edges,
}

/// Starting `(z_0, λ_0)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitPlan {
    #[default]
    Zero,
    /// Gaussian `ζ_0` with the given seed, split as `z_0 = Pζ_0/ρ`, `λ_0 = (I − P)ζ_0`.
    Random {
        seed: u64,
        #[serde(default = "unit_scale")]
        scale: f64,
    },
    /// `z_0 = 𝟙 ⊗ point`, `λ_0 = 0`.
    Consensus { point: Vec<f64> },
}

fn unit_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    pub rho: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_stop_tol")]
    pub stop_tol: f64,
    #[serde(default)]
    pub init: InitPlan,
    #[serde(default)]
    pub form: Form,
    /// Keep every `x_k` (and `ζ_k` in matrix form) in the trajectory.
    #[serde(default)]
    pub record_iterates: bool,
    #[serde(default)]
    pub execution: Execution,
}

fn default_max_iters() -> usize {
    DEFAULT_MAX_ITERS
}

fn default_stop_tol() -> f64 {
    DEFAULT_STOP_TOL
}

impl AdmmConfig {
    pub fn new(rho: f64) -> Self {
        Self {
            rho,
            max_iters: DEFAULT_MAX_ITERS,
            stop_tol: DEFAULT_STOP_TOL,
            init: InitPlan::Zero,
            form: Form::Matrix,
            record_iterates: false,
            execution: Execution::default(),
        }
    }
}

/// Stacked iterates. `ζ = λ + ρz`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub x: Vector,
    pub z: Vector,
    pub lambda: Vector,
    pub zeta: Vector,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub k: usize,
    pub rho: f64,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub lambda: Vec<f64>,
    pub zeta: Vec<f64>,
}

impl AdmmState {
    pub fn snapshot(&self, rho: f64) -> StateSnapshot {
        StateSnapshot {
            k: self.k,
            rho,
            x: self.x.iter().copied().collect(),
            z: self.z.iter().copied().collect(),
            lambda: self.lambda.iter().copied().collect(),
            zeta: self.zeta.iter().copied().collect(),
        }
    }

    pub fn from_snapshot(s: &StateSnapshot) -> Self {
        Self {
            x: Vector::from_column_slice(&s.x),
            z: Vector::from_column_slice(&s.z),
            lambda: Vector::from_column_slice(&s.lambda),
            zeta: Vector::from_column_slice(&s.zeta),
            k: s.k,
        }
    }
}

/// Per-agent memory of the message-passing forms.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub x: Vec<Vector>,
    pub chi: Vec<Vector>,
    pub delta: Vec<Vector>,
    pub k: usize,
}

impl AgentState {
    pub fn stacked_x(&self) -> Vector {
        stack(&self.x)
    }
}

fn stack(parts: &[Vector]) -> Vector {
    let k = parts.first().map_or(0, |v| v.len());
    let mut out = Vector::zeros(parts.len() * k);
    for (i, p) in parts.iter().enumerate() {
        out.rows_mut(i * k, k).copy_from(p);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Tolerance,
    MaxIters,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub err: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<IterationRecord>,
    /// `x_1, x_2, …` when iterates were recorded.
    pub xs: Vec<Vector>,
    /// `ζ_1, ζ_2, …` when iterates were recorded in matrix form.
    pub zetas: Vec<Vector>,
    pub x_star: Vector,
    pub stop: StopReason,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn errors(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.err).collect()
    }

    /// Columns `k, err, log_err, rate_est` with `rate_est = −log_err / k`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EngineError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "err", "log_err", "rate_est"])?;
        for r in &self.records {
            let log_err = r.err.ln();
            w.write_record([
                r.k.to_string(),
                format!("{:e}", r.err),
                log_err.to_string(),
                (-log_err / r.k as f64).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), EngineError> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// One `(topology, objectives, ρ)` triple with its precomputed operators.
pub struct AdmmEngine<'a> {
    cs: &'a ComponentStructure,
    instance: &'a ProblemInstance,
    rho: f64,
    execution: Execution,
    m: DenseMatrix,
    p: DenseMatrix,
    /// Factor of `Φ + ρM*M` and the stacked `c`, for all-quadratic instances.
    quadratic: Option<(Cholesky<f64, nalgebra::Dyn>, Vector)>,
}

impl<'a> AdmmEngine<'a> {
    pub fn new(
        cs: &'a ComponentStructure,
        instance: &'a ProblemInstance,
        rho: f64,
        execution: Execution,
    ) -> Result<Self, EngineError> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(EngineError::InvalidConfig(format!(
                "rho must be positive, got {rho}"
            )));
        }
        cs.ensure_valid()?;
        if instance.n_agents() != cs.n_agents() || instance.dim() != cs.dim() {
            return Err(EngineError::InvalidConfig(format!(
                "objectives are {} agents x dim {}, topology is {} x {}",
                instance.n_agents(),
                instance.dim(),
                cs.n_agents(),
                cs.dim()
            )));
        }
        let mix = cs.mixing_matrices();
        let quadratic = match instance.stacked_quadratic() {
            Some((phi, c)) => {
                let h = phi + (mix.m.transpose() * &mix.m) * rho;
                Some((Cholesky::new(h).ok_or(LinalgError::Singular)?, c))
            }
            None => None,
        };
        Ok(Self {
            cs,
            instance,
            rho,
            execution,
            m: mix.m,
            p: mix.p,
            quadratic,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn initial_state(&self, init: &InitPlan) -> Result<AdmmState, EngineError> {
        let k = self.cs.dim();
        let tk = self.cs.total_rows() * k;
        let nk = self.cs.n_agents() * k;
        match init {
            InitPlan::Zero => Ok(AdmmState {
                x: Vector::zeros(nk),
                z: Vector::zeros(tk),
                lambda: Vector::zeros(tk),
                zeta: Vector::zeros(tk),
                k: 0,
            }),
            InitPlan::Random { seed, scale } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let zeta = Vector::from_fn(tk, |_, _| scale * box_muller(&mut rng));
                Ok(self.split(Vector::zeros(nk), zeta, 0))
            }
            InitPlan::Consensus { point } => {
                if point.len() != k {
                    return Err(EngineError::InvalidConfig(format!(
                        "consensus point has length {}, dim is {k}",
                        point.len()
                    )));
                }
                let p = Vector::from_column_slice(point);
                let x = stack(&vec![p.clone(); self.cs.n_agents()]);
                let z = stack(&vec![p; self.cs.total_rows()]);
                let zeta = &z * self.rho;
                Ok(AdmmState {
                    x,
                    z,
                    lambda: Vector::zeros(tk),
                    zeta,
                    k: 0,
                })
            }
        }
    }

    fn split(&self, x: Vector, zeta: Vector, k: usize) -> AdmmState {
        let pz = &self.p * &zeta;
        let lambda = &zeta - &pz;
        AdmmState {
            x,
            z: pz / self.rho,
            lambda,
            zeta,
            k,
        }
    }

    /// One iteration on the stacked vectors.
    pub fn step_matrix_form(&self, state: &AdmmState) -> Result<AdmmState, EngineError> {
        let x = match &self.quadratic {
            Some((h, c)) => {
                // (Φ + ρM*M) x = M*(ρz − λ) − c
                let rhs = self.m.transpose() * (&state.z * self.rho - &state.lambda) - c;
                h.solve(&rhs)
            }
            None => {
                let k = self.cs.dim();
                let v = &state.z - &state.lambda / self.rho;
                let parts = self.execution.try_map_range(self.cs.n_agents(), |n| {
                    let sigma = self.cs.memberships(n);
                    let mut arg = Vector::zeros(k);
                    for &l in sigma {
                        let row = self.cs.row_of(l, n).expect("member row");
                        arg += v.rows(row * k, k);
                    }
                    arg /= sigma.len() as f64;
                    let t = 1.0 / (self.rho * sigma.len() as f64);
                    self.instance.oracle(n).prox(t, &arg)
                })?;
                stack(&parts)
            }
        };
        let zeta = &self.m * &x * self.rho + &state.lambda;
        Ok(self.split(x, zeta, state.k + 1))
    }

    /// Per-agent view of a stacked state.
    pub fn agent_state(&self, state: &AdmmState) -> AgentState {
        let k = self.cs.dim();
        let mut chi = Vec::with_capacity(self.cs.n_agents());
        let mut delta = Vec::with_capacity(self.cs.n_agents());
        for n in 0..self.cs.n_agents() {
            let sigma = self.cs.memberships(n);
            let mut c = Vector::zeros(k);
            let mut d = Vector::zeros(k);
            for &l in sigma {
                let row = self.cs.row_of(l, n).expect("member row");
                c += state.z.rows(row * k, k);
                d += state.lambda.rows(row * k, k);
            }
            chi.push(c / sigma.len() as f64);
            d /= self.rho * sigma.len() as f64;
            delta.push(d);
        }
        AgentState {
            x: (0..self.cs.n_agents())
                .map(|n| state.x.rows(n * k, k).into_owned())
                .collect(),
            chi,
            delta,
            k: state.k,
        }
    }

    fn prox_round(&self, agents: &AgentState) -> Result<Vec<Vector>, EngineError> {
        Ok(self.execution.try_map_range(self.cs.n_agents(), |n| {
            let t = 1.0 / (self.rho * self.cs.memberships(n).len() as f64);
            self.instance
                .oracle(n)
                .prox(t, &(&agents.chi[n] - &agents.delta[n]))
        })?)
    }

    /// One synchronous round with an averaging head per component.
    pub fn step_distributed_general(&self, agents: &AgentState) -> Result<AgentState, EngineError> {
        let k = self.cs.dim();
        let x = self.prox_round(agents)?;
        let heads: Vec<Vector> = self.execution.map(self.cs.components(), |members| {
            let mut s = Vector::zeros(k);
            for &n in members {
                s += &x[n];
            }
            s / members.len() as f64
        });
        let chi: Vec<Vector> = self.execution.map_range(self.cs.n_agents(), |n| {
            let sigma = self.cs.memberships(n);
            let mut s = Vector::zeros(k);
            for &l in sigma {
                s += &heads[l];
            }
            s / sigma.len() as f64
        });
        let delta = (0..self.cs.n_agents())
            .map(|n| &agents.delta[n] + &x[n] - &chi[n])
            .collect();
        Ok(AgentState {
            x,
            chi,
            delta,
            k: agents.k + 1,
        })
    }

    /// One synchronous round using neighbour averages only.
    pub fn step_distributed_edges(&self, agents: &AgentState) -> Result<AgentState, EngineError> {
        let neighbors = self
            .cs
            .neighbors()
            .map_err(|e| EngineError::InvalidTopology(e.to_string()))?;
        self.edges_round(agents, &neighbors)
    }

    fn edges_round(
        &self,
        agents: &AgentState,
        neighbors: &[Vec<usize>],
    ) -> Result<AgentState, EngineError> {
        let k = self.cs.dim();
        let x = self.prox_round(agents)?;
        let x_bar: Vec<Vector> = self.execution.map(neighbors, |nb| {
            let mut s = Vector::zeros(k);
            for &m in nb {
                s += &x[m];
            }
            s / nb.len() as f64
        });
        let chi = (0..x.len()).map(|n| (&x[n] + &x_bar[n]) * 0.5).collect();
        let delta = (0..x.len())
            .map(|n| &agents.delta[n] + (&x[n] - &x_bar[n]) * 0.5)
            .collect();
        Ok(AgentState {
            x,
            chi,
            delta,
            k: agents.k + 1,
        })
    }

    /// Iterates from `config.init` until `‖x_k − 𝟙⊗x*‖ ≤ stop_tol` or the
    /// iteration budget runs out.
    pub fn run(&self, config: &AdmmConfig, x_star: &Vector) -> Result<Trajectory, EngineError> {
        if x_star.len() != self.cs.dim() {
            return Err(EngineError::InvalidConfig(
                "x* has the wrong dimension".into(),
            ));
        }
        let target = stack(&vec![x_star.clone(); self.cs.n_agents()]);
        let neighbors = match config.form {
            Form::Edges => Some(
                self.cs
                    .neighbors()
                    .map_err(|e| EngineError::InvalidTopology(e.to_string()))?,
            ),
            _ => None,
        };
        let mut traj = Trajectory {
            records: Vec::new(),
            xs: Vec::new(),
            zetas: Vec::new(),
            x_star: x_star.clone(),
            stop: StopReason::MaxIters,
        };
        let mut state = self.initial_state(&config.init)?;
        let mut agents = self.agent_state(&state);
        for _ in 0..config.max_iters {
            let x = match config.form {
                Form::Matrix => {
                    state = self.step_matrix_form(&state)?;
                    if config.record_iterates {
                        traj.zetas.push(state.zeta.clone());
                    }
                    state.x.clone()
                }
                Form::Distributed => {
                    agents = self.step_distributed_general(&agents)?;
                    agents.stacked_x()
                }
                Form::Edges => {
                    agents = self.edges_round(&agents, neighbors.as_deref().expect("edges"))?;
                    agents.stacked_x()
                }
            };
            let err = (&x - &target).norm();
            let k = traj.records.len() + 1;
            traj.records.push(IterationRecord { k, err });
            if config.record_iterates {
                traj.xs.push(x);
            }
            if !err.is_finite() {
                return Err(EngineError::Objective(ObjectiveError::NonFinite(format!(
                    "iterate error at k = {k}"
                ))));
            }
            if err <= config.stop_tol {
                traj.stop = StopReason::Tolerance;
                break;
            }
        }
        Ok(traj)
    }
}

/// Solves for `x*` and runs.
pub fn run(
    cs: &ComponentStructure,
    instance: &ProblemInstance,
    config: &AdmmConfig,
) -> Result<Trajectory, EngineError> {
    let x_star = instance.solve_consensus_minimizer()?.x;
    AdmmEngine::new(cs, instance, config.rho, config.execution)?.run(config, &x_star)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{sample_experiment_objectives, ExperimentKind, ObjectiveOracle};

    fn isotropic_instance(sigma2: &[f64], centers: &[f64]) -> ProblemInstance {
        ProblemInstance::new(
            sigma2
                .iter()
                .zip(centers)
                .map(|(&s, &c)| ObjectiveOracle::isotropic(s, &[c]).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn zeta_split_holds_every_iteration() {
        let cs = ComponentStructure::ring(5, 1).unwrap();
        let inst = sample_experiment_objectives(ExperimentKind::Quadratic, 5, 3);
        let eng = AdmmEngine::new(&cs, &inst, 4.0, Execution::Sequential).unwrap();
        let p = cs.mixing_matrices().p;
        let mut s = eng
            .initial_state(&InitPlan::Random {
                seed: 9,
                scale: 1.0,
            })
            .unwrap();
        for _ in 0..30 {
            s = eng.step_matrix_form(&s).unwrap();
            assert!((&p * &s.zeta - &s.z * 4.0).amax() < 1e-10);
            assert!((&s.zeta - &p * &s.zeta - &s.lambda).amax() < 1e-10);
            for l in 0..cs.n_components() {
                let off = cs.component_offset(l);
                let sum: f64 = (0..cs.component(l).len()).map(|i| s.lambda[off + i]).sum();
                assert!(sum.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_objective_reaches_consensus() {
        let cs =
            ComponentStructure::new(5, 1, vec![vec![1, 2], vec![4, 5], vec![2, 3, 4]]).unwrap();
        let inst = ProblemInstance::new(vec![ObjectiveOracle::zero(1); 5]).unwrap();
        let eng = AdmmEngine::new(&cs, &inst, 1.0, Execution::Sequential).unwrap();
        let mut s = eng
            .initial_state(&InitPlan::Random {
                seed: 1,
                scale: 1.0,
            })
            .unwrap();
        for _ in 0..500 {
            s = eng.step_matrix_form(&s).unwrap();
        }
        let spread = s.x.max() - s.x.min();
        assert!(spread < 1e-8, "{spread}");
    }

    #[test]
    fn centralized_limit_is_weighted_mean() {
        let cs = ComponentStructure::centralized(3, 1).unwrap();
        let inst = isotropic_instance(&[2.0, 5.0, 9.0], &[1.0, -4.0, 3.0]);
        let want = (2.0 - 20.0 + 27.0) / 16.0;
        let traj = run(&cs, &inst, &AdmmConfig::new(5.0)).unwrap();
        assert_eq!(traj.stop, StopReason::Tolerance);
        assert!((traj.x_star[0] - want).abs() < 1e-14);
    }

    #[test]
    fn centralized_contraction_half_at_matching_rho() {
        let cs = ComponentStructure::centralized(4, 1).unwrap();
        let inst = isotropic_instance(&[16.0; 4], &[1.0, 2.0, -3.0, 5.0]);
        let mut cfg = AdmmConfig::new(16.0);
        cfg.init = InitPlan::Random {
            seed: 4,
            scale: 1.0,
        };
        let traj = run(&cs, &inst, &cfg).unwrap();
        let e = traj.errors();
        let ratio = e[20] / e[19];
        assert!((ratio - 0.5).abs() < 1e-6, "{ratio}");
    }

    #[test]
    fn consensus_start_stays_put() {
        let cs = ComponentStructure::ring(6, 1).unwrap();
        let inst = isotropic_instance(&[3.0; 6], &[2.0; 6]);
        let mut cfg = AdmmConfig::new(2.0);
        cfg.init = InitPlan::Consensus { point: vec![2.0] };
        cfg.max_iters = 50;
        cfg.stop_tol = 0.0;
        let traj = run(&cs, &inst, &cfg).unwrap();
        assert!(traj.errors().iter().all(|&e| e <= 1e-10));
    }

    #[test]
    fn forms_agree_on_ring() {
        let cs = ComponentStructure::ring(6, 1).unwrap();
        let inst = sample_experiment_objectives(ExperimentKind::Exponential, 6, 2);
        let eng = AdmmEngine::new(&cs, &inst, 3.0, Execution::Sequential).unwrap();
        let s0 = eng
            .initial_state(&InitPlan::Random {
                seed: 5,
                scale: 1.0,
            })
            .unwrap();
        let mut s = s0.clone();
        let mut g = eng.agent_state(&s0);
        let mut e = g.clone();
        for _ in 0..50 {
            s = eng.step_matrix_form(&s).unwrap();
            g = eng.step_distributed_general(&g).unwrap();
            e = eng.step_distributed_edges(&e).unwrap();
            assert!((&s.x - g.stacked_x()).amax() < 1e-10);
            assert!((g.stacked_x() - e.stacked_x()).amax() < 1e-12);
        }
    }

    #[test]
    fn single_edge_average() {
        let cs = ComponentStructure::from_edges(&[(1, 2)], 2, 1).unwrap();
        let inst = isotropic_instance(&[1.0, 2.0], &[0.0, 3.0]);
        let eng = AdmmEngine::new(&cs, &inst, 1.0, Execution::Sequential).unwrap();
        let a = eng.agent_state(&eng.initial_state(&InitPlan::Zero).unwrap());
        let b = eng.step_distributed_edges(&a).unwrap();
        let mid = (&b.x[0] + &b.x[1]) * 0.5;
        assert_eq!(b.chi[0], mid);
        assert_eq!(b.chi[1], mid);
    }

    #[test]
    fn edges_form_rejects_larger_components() {
        let cs = ComponentStructure::centralized(3, 1).unwrap();
        let inst = isotropic_instance(&[1.0; 3], &[0.0; 3]);
        let eng = AdmmEngine::new(&cs, &inst, 1.0, Execution::Sequential).unwrap();
        let a = eng.agent_state(&eng.initial_state(&InitPlan::Zero).unwrap());
        assert!(matches!(
            eng.step_distributed_edges(&a),
            Err(EngineError::InvalidTopology(_))
        ));
    }

    #[test]
    fn symmetric_pairs_stay_symmetric() {
        let cs = ComponentStructure::ring(4, 1).unwrap();
        let inst = isotropic_instance(&[5.0; 4], &[1.0, -1.0, 1.0, -1.0]);
        let eng = AdmmEngine::new(&cs, &inst, 2.0, Execution::Sequential).unwrap();
        let mut a = eng.agent_state(&eng.initial_state(&InitPlan::Zero).unwrap());
        for _ in 0..20 {
            a = eng.step_distributed_general(&a).unwrap();
            assert!((a.x[0][0] + a.x[1][0]).abs() < 1e-14);
            assert!((a.x[0][0] - a.x[2][0]).abs() < 1e-14);
        }
    }

    #[test]
    fn execution_modes_bitwise_identical() {
        let cs = ComponentStructure::ring(12, 1).unwrap();
        let inst = sample_experiment_objectives(ExperimentKind::Exponential, 12, 8);
        let mut cfg = AdmmConfig::new(2.0);
        cfg.form = Form::Distributed;
        cfg.execution = Execution::Sequential;
        let a = run(&cs, &inst, &cfg).unwrap();
        cfg.execution = Execution::Parallel;
        let b = run(&cs, &inst, &cfg).unwrap();
        assert_eq!(a.errors(), b.errors());
    }

    #[test]
    fn trajectory_csv_and_snapshot() {
        let cs = ComponentStructure::centralized(2, 1).unwrap();
        let inst = isotropic_instance(&[1.0, 1.0], &[0.0, 2.0]);
        let mut cfg = AdmmConfig::new(1.0);
        cfg.max_iters = 3;
        let traj = run(&cs, &inst, &cfg).unwrap();
        assert_eq!(traj.len(), 3);
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "k,err,log_err,rate_est");
        assert_eq!(text.lines().count(), 4);

        let eng = AdmmEngine::new(&cs, &inst, 1.0, Execution::Sequential).unwrap();
        let s = eng
            .step_matrix_form(&eng.initial_state(&InitPlan::Zero).unwrap())
            .unwrap();
        let json = serde_json::to_string(&s.snapshot(1.0)).unwrap();
        let back: StateSnapshot = serde_json::from_str(&json).unwrap();
        assert_eq!(AdmmState::from_snapshot(&back), s);
    }
}
