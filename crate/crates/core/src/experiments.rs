//! Config-driven experiments: rate reports, ρ sweeps, simulated runs with an
//! empirical rate fit, ρ optimization and topology generation.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{AdmmConfig, AdmmEngine, EngineError, Form, InitPlan, StopReason, Trajectory};
use crate::exec::Execution;
use crate::linalg::{DenseMatrix, LinalgError};
use crate::objectives::{
    sample_experiment_objectives, ExperimentKind, ObjectiveError, ObjectiveOracle, ObjectiveSpec,
    ProblemInstance,
};
use crate::rate::{
    affine_constant, centralized_alpha, log_grid, optimize_rho_with, ring_alpha,
    ring_optimal_alpha, ring_optimal_rho, RateAnalyzer, RateError, RateReport, RateReportJson,
};
use crate::topology::{
    random_geometric_graph_with_retries, ComponentStructure, RggSample, TopologyError,
    TopologyFile, RGG_MAX_RETRIES,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl ExperimentError {
    /// 2 for invalid input, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_)
            | Self::Topology(_)
            | Self::Io { .. }
            | Self::Json(_)
            | Self::Csv(_) => 2,
            Self::Objective(e) => objective_code(e),
            Self::Rate(e) => match e {
                RateError::InvalidParameter(_) | RateError::Topology(_) => 2,
                RateError::Objective(o) => objective_code(o),
                _ => 3,
            },
            Self::Engine(e) => match e {
                EngineError::InvalidTopology(_)
                | EngineError::InvalidConfig(_)
                | EngineError::Topology(_)
                | EngineError::Io(_)
                | EngineError::Csv(_)
                | EngineError::Json(_) => 2,
                EngineError::Objective(o) => objective_code(o),
                EngineError::Linalg(_) => 3,
            },
            Self::Linalg(_) => 3,
        }
    }
}

fn objective_code(e: &ObjectiveError) -> i32 {
    match e {
        ObjectiveError::DimensionMismatch(_)
        | ObjectiveError::Invalid(_)
        | ObjectiveError::InvalidWeight(_) => 2,
        _ => 3,
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologySpec {
    Centralized {
        n: usize,
    },
    Ring {
        n: usize,
    },
    /// One two-agent component per (1-based) edge.
    Edges {
        n: usize,
        edges: Vec<(usize, usize)>,
    },
    /// Arbitrary 1-based components.
    Components {
        n: usize,
        components: Vec<Vec<usize>>,
    },
    Rgg {
        n: usize,
        radius: f64,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default = "default_retries")]
        max_retries: usize,
    },
    /// A topology JSON file or a saved RGG sample.
    File {
        path: PathBuf,
    },
}

fn default_retries() -> usize {
    RGG_MAX_RETRIES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TopologyDocument {
    Components(TopologyFile),
    Rgg(RggSample),
}

/// A scalar curvature shared by all agents, or one per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Curvature {
    Shared(f64),
    PerAgent(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveConfig {
    /// `½σ_n²‖x − b_n‖²`; centers default to zero.
    Curvature {
        sigma2: Curvature,
        #[serde(default)]
        centers: Option<Vec<f64>>,
    },
    RandomQuadratic {
        #[serde(default)]
        seed: Option<u64>,
    },
    RandomExponential {
        #[serde(default)]
        seed: Option<u64>,
    },
    /// JSON array of objective specs.
    File {
        path: PathBuf,
    },
    Inline {
        oracles: Vec<ObjectiveSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RhoGrid {
    Values(Vec<f64>),
    Log { lo: f64, hi: f64, points: usize },
}

impl RhoGrid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Self::Values(v) => v.clone(),
            Self::Log { lo, hi, points } => log_grid(*lo, *hi, *points),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputPaths {
    #[serde(default)]
    pub report: Option<PathBuf>,
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub trajectory: Option<PathBuf>,
}

/// One JSON document per experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub topology: TopologySpec,
    pub objective: ObjectiveConfig,
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub rho_grid: Option<RhoGrid>,
    /// Ring sizes for a `(ρ, N)` sweep; ring topologies only.
    #[serde(default)]
    pub sweep_n: Option<Vec<usize>>,
    /// Search interval for the ρ optimizer.
    #[serde(default)]
    pub rho_range: Option<(f64, f64)>,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_stop_tol")]
    pub stop_tol: f64,
    #[serde(default)]
    pub init: InitPlan,
    #[serde(default = "default_window")]
    pub fit_window: (f64, f64),
    #[serde(default)]
    pub form: Form,
    /// Fallback for every seed not given explicitly.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub execution: Execution,
    #[serde(default)]
    pub outputs: OutputPaths,
}

fn one() -> usize {
    1
}

fn default_max_iters() -> usize {
    crate::engine::DEFAULT_MAX_ITERS
}

fn default_stop_tol() -> f64 {
    crate::engine::DEFAULT_STOP_TOL
}

fn default_window() -> (f64, f64) {
    (0.5, 0.9)
}

impl ExperimentConfig {
    pub fn new(topology: TopologySpec, objective: ObjectiveConfig) -> Self {
        Self {
            topology,
            objective,
            dim: 1,
            rho: None,
            rho_grid: None,
            sweep_n: None,
            rho_range: None,
            max_iters: default_max_iters(),
            stop_tol: default_stop_tol(),
            init: InitPlan::Zero,
            fit_window: default_window(),
            form: Form::Matrix,
            seed: None,
            execution: Execution::default(),
            outputs: OutputPaths::default(),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), ExperimentError> {
        if self.dim == 0 {
            return Err(ExperimentError::Config("dim must be at least 1".into()));
        }
        if let Some(rho) = self.rho {
            if !(rho > 0.0 && rho.is_finite()) {
                return Err(ExperimentError::Config(format!(
                    "rho must be positive, got {rho}"
                )));
            }
        }
        if let Some(grid) = &self.rho_grid {
            let v = grid.values();
            if v.is_empty() || v.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
                return Err(ExperimentError::Config(
                    "rho_grid must be nonempty and positive".into(),
                ));
            }
        }
        let (a, b) = self.fit_window;
        if !(0.0 <= a && a < b && b <= 1.0) {
            return Err(ExperimentError::Config(format!(
                "fit_window ({a}, {b}) must satisfy 0 <= a < b <= 1"
            )));
        }
        if let Some(ns) = &self.sweep_n {
            if !matches!(self.topology, TopologySpec::Ring { .. }) {
                return Err(ExperimentError::Config(
                    "sweep_n needs a ring topology".into(),
                ));
            }
            if ns.is_empty() {
                return Err(ExperimentError::Config("sweep_n must be nonempty".into()));
            }
        }
        Ok(())
    }

    fn seed_or(&self, own: Option<u64>) -> u64 {
        own.or(self.seed).unwrap_or(0)
    }

    /// The `ρ` field, required by single-ρ commands.
    pub fn require_rho(&self) -> Result<f64, ExperimentError> {
        self.rho
            .ok_or_else(|| ExperimentError::Config("rho is required for this command".into()))
    }

    /// Overrides the top-level seed and the init seed.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        if let InitPlan::Random { seed: s, .. } = &mut self.init {
            *s = seed;
        }
    }

    pub fn build_topology(
        &self,
    ) -> Result<(ComponentStructure, Option<RggSample>), ExperimentError> {
        let k = self.dim;
        let out = match &self.topology {
            TopologySpec::Centralized { n } => (ComponentStructure::centralized(*n, k)?, None),
            TopologySpec::Ring { n } => (ComponentStructure::ring(*n, k)?, None),
            TopologySpec::Edges { n, edges } => {
                (ComponentStructure::from_edges(edges, *n, k)?, None)
            }
            TopologySpec::Components { n, components } => {
                (ComponentStructure::new(*n, k, components.clone())?, None)
            }
            TopologySpec::Rgg {
                n,
                radius,
                seed,
                max_retries,
            } => {
                let sample = random_geometric_graph_with_retries(
                    *n,
                    *radius,
                    self.seed_or(*seed),
                    *max_retries,
                )?;
                (sample.topology(k)?, Some(sample))
            }
            TopologySpec::File { path } => {
                let text = fs::read_to_string(path).map_err(io_err(path))?;
                match serde_json::from_str::<TopologyDocument>(&text)? {
                    TopologyDocument::Components(f) => {
                        (ComponentStructure::from_file(&f)?.with_dim(k)?, None)
                    }
                    TopologyDocument::Rgg(s) => (s.topology(k)?, Some(s)),
                }
            }
        };
        let report = out.0.validate();
        if !report.is_valid() {
            return Err(TopologyError::Invalid(report).into());
        }
        Ok(out)
    }

    pub fn build_objectives(&self, n: usize) -> Result<ProblemInstance, ExperimentError> {
        let k = self.dim;
        let inst = match &self.objective {
            ObjectiveConfig::Curvature { sigma2, centers } => {
                let s: Vec<f64> = match sigma2 {
                    Curvature::Shared(v) => vec![*v; n],
                    Curvature::PerAgent(v) => v.clone(),
                };
                if s.len() != n {
                    return Err(ExperimentError::Config(format!(
                        "{} curvatures for {n} agents",
                        s.len()
                    )));
                }
                let centers = centers.clone().unwrap_or_else(|| vec![0.0; n]);
                if centers.len() != n {
                    return Err(ExperimentError::Config(format!(
                        "{} centers for {n} agents",
                        centers.len()
                    )));
                }
                let oracles = s
                    .iter()
                    .zip(&centers)
                    .map(|(&s, &c)| ObjectiveOracle::isotropic(s, &vec![c; k]))
                    .collect::<Result<Vec<_>, _>>()?;
                ProblemInstance::new(oracles)?
            }
            ObjectiveConfig::RandomQuadratic { seed } => {
                self.require_scalar()?;
                sample_experiment_objectives(ExperimentKind::Quadratic, n, self.seed_or(*seed))
            }
            ObjectiveConfig::RandomExponential { seed } => {
                self.require_scalar()?;
                sample_experiment_objectives(ExperimentKind::Exponential, n, self.seed_or(*seed))
            }
            ObjectiveConfig::File { path } => {
                let text = fs::read_to_string(path).map_err(io_err(path))?;
                let specs: Vec<ObjectiveSpec> = serde_json::from_str(&text)?;
                specs_to_instance(&specs)?
            }
            ObjectiveConfig::Inline { oracles } => specs_to_instance(oracles)?,
        };
        if inst.n_agents() != n || inst.dim() != k {
            return Err(ExperimentError::Config(format!(
                "objectives are {} agents x dim {}, topology is {n} x {k}",
                inst.n_agents(),
                inst.dim()
            )));
        }
        Ok(inst)
    }

    fn require_scalar(&self) -> Result<(), ExperimentError> {
        if self.dim != 1 {
            return Err(ExperimentError::Config(
                "sampled objectives are scalar; set dim = 1".into(),
            ));
        }
        Ok(())
    }

    /// The shared curvature when every agent has the same isotropic Hessian.
    fn equal_curvature(&self, instance: &ProblemInstance) -> Option<f64> {
        let first = instance.oracles().first()?.quadratic_form()?;
        let k = first.phi.nrows();
        let s = first.phi[(0, 0)];
        let iso = DenseMatrix::identity(k, k) * s;
        instance
            .oracles()
            .iter()
            .all(|o| o.quadratic_form().is_some_and(|q| q.phi == iso))
            .then_some(s)
    }
}

fn specs_to_instance(specs: &[ObjectiveSpec]) -> Result<ProblemInstance, ExperimentError> {
    let oracles = specs
        .iter()
        .map(ObjectiveSpec::to_oracle)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ProblemInstance::new(oracles)?)
}

/// Topology and objectives of one config, with the minimizer solved.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub topology: ComponentStructure,
    pub rgg: Option<RggSample>,
    pub instance: ProblemInstance,
    pub x_star: crate::linalg::Vector,
    pub hessians: Vec<DenseMatrix>,
}

impl Experiment {
    pub fn build(config: ExperimentConfig) -> Result<Self, ExperimentError> {
        config.check()?;
        let (topology, rgg) = config.build_topology()?;
        let instance = config.build_objectives(topology.n_agents())?;
        let min = instance.solve_consensus_minimizer()?;
        Ok(Self {
            config,
            topology,
            rgg,
            instance,
            x_star: min.x,
            hessians: min.hessians,
        })
    }

    pub fn analyzer(&self, rho: f64) -> Result<RateAnalyzer, ExperimentError> {
        Ok(RateAnalyzer::new(&self.topology, &self.hessians, rho)?)
    }

    pub fn alpha(&self, rho: f64) -> Result<f64, RateError> {
        RateAnalyzer::new(&self.topology, &self.hessians, rho)?
            .alpha()
            .map(|a| a.alpha)
    }

    /// Closed-form α and its regime label, where one applies.
    pub fn closed_form(&self, rho: f64) -> Result<Option<(f64, String)>, ExperimentError> {
        let Some(s2) = self.config.equal_curvature(&self.instance) else {
            return Ok(None);
        };
        match self.config.topology {
            TopologySpec::Centralized { .. } => {
                Ok(Some((centralized_alpha(rho, s2), "centralized".into())))
            }
            TopologySpec::Ring { n } => {
                let b = ring_alpha(rho, s2, n)?;
                let label = serde_json::to_value(b.regime)?
                    .as_str()
                    .unwrap_or_default()
                    .to_string();
                Ok(Some((b.closed_form.unwrap_or(b.alpha), label)))
            }
            _ => Ok(None),
        }
    }

    /// The full report at ρ, with the fixed point.
    pub fn rate_report(&self, rho: f64) -> Result<RateReport, ExperimentError> {
        let an = self.analyzer(rho)?;
        let c = affine_constant(&self.instance, &self.x_star)?;
        Ok(an.report(Some(&c))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    #[serde(flatten)]
    pub report: RateReportJson,
    pub x_star: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_closed_form: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<String>,
}

impl RateSummary {
    pub fn print(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "alpha={}", self.report.alpha)?;
        writeln!(out, "rho={}", self.report.rho)?;
        writeln!(out, "dim_kernel={}", self.report.dim_kernel)?;
        writeln!(out, "tight={}", self.report.tight)?;
        if let Some(note) = &self.report.tightness_note {
            writeln!(out, "tightness_note={note}")?;
        }
        if let Some(cf) = self.alpha_closed_form {
            writeln!(out, "alpha_closed_form={cf}")?;
        }
        Ok(())
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn cmd_rate(
    config: &ExperimentConfig,
    out: Option<&Path>,
) -> Result<RateSummary, ExperimentError> {
    let exp = Experiment::build(config.clone())?;
    let rho = config.require_rho()?;
    let report = exp.rate_report(rho)?;
    let cf = exp.closed_form(rho)?;
    let summary = RateSummary {
        report: report.to_json(),
        x_star: exp.x_star.iter().copied().collect(),
        alpha_closed_form: cf.as_ref().map(|c| c.0),
        regime: cf.map(|c| c.1),
    };
    if let Some(path) = out.or(config.outputs.report.as_deref()) {
        write_json(path, &summary)?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub rho: f64,
    pub alpha_general: f64,
    pub alpha_closed_form: Option<f64>,
    pub regime: Option<String>,
}

/// α over the ρ grid (and ring sizes, when given), in grid order.
pub fn cmd_sweep(
    config: &ExperimentConfig,
    out: Option<&Path>,
) -> Result<Vec<SweepRow>, ExperimentError> {
    let grid = config
        .rho_grid
        .as_ref()
        .ok_or_else(|| ExperimentError::Config("sweep needs rho_grid".into()))?
        .values();
    let mut rows = Vec::new();
    let sizes: Vec<Option<usize>> = match &config.sweep_n {
        Some(ns) => ns.iter().map(|&n| Some(n)).collect(),
        None => vec![None],
    };
    for n in sizes {
        let mut cfg = config.clone();
        if let Some(n) = n {
            cfg.topology = TopologySpec::Ring { n };
        }
        let exp = Experiment::build(cfg)?;
        let part = config.execution.try_map_range(
            grid.len(),
            |i| -> Result<SweepRow, ExperimentError> {
                let rho = grid[i];
                let cf = exp.closed_form(rho)?;
                Ok(SweepRow {
                    n,
                    rho,
                    alpha_general: exp.alpha(rho)?,
                    alpha_closed_form: cf.as_ref().map(|c| c.0),
                    regime: cf.map(|c| c.1),
                })
            },
        )?;
        rows.extend(part);
    }
    if let Some(path) = out.or(config.outputs.csv.as_deref()) {
        let file = fs::File::create(path).map_err(io_err(path))?;
        write_sweep_csv(file, &rows)?;
    }
    Ok(rows)
}

/// Columns `[n,] rho, alpha_general, alpha_closed_form, regime`; empty cells
/// where a closed form does not apply.
pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<(), ExperimentError> {
    let with_n = rows.iter().any(|r| r.n.is_some());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["rho", "alpha_general", "alpha_closed_form", "regime"];
    if with_n {
        header.insert(0, "n");
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.rho.to_string(),
            r.alpha_general.to_string(),
            r.alpha_closed_form
                .map(|v| v.to_string())
                .unwrap_or_default(),
            r.regime.clone().unwrap_or_default(),
        ];
        if with_n {
            rec.insert(0, r.n.map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| ExperimentError::Io {
        path: PathBuf::from("<csv>"),
        source: e,
    })?;
    Ok(())
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>, ExperimentError> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (i_rho, i_ag, i_cf, i_reg) = match (
        col("rho"),
        col("alpha_general"),
        col("alpha_closed_form"),
        col("regime"),
    ) {
        (Some(a), Some(b), Some(c), Some(d)) => (a, b, c, d),
        _ => {
            return Err(ExperimentError::Config(format!(
                "{}: unexpected sweep header",
                path.display()
            )))
        }
    };
    let i_n = col("n");
    let parse = |s: &str| -> Result<f64, ExperimentError> {
        s.parse()
            .map_err(|_| ExperimentError::Config(format!("bad number {s:?} in sweep csv")))
    };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let opt = |i: usize| rec.get(i).filter(|s| !s.is_empty());
        rows.push(SweepRow {
            n: match i_n.and_then(opt) {
                Some(s) => Some(
                    s.parse()
                        .map_err(|_| ExperimentError::Config(format!("bad ring size {s:?}")))?,
                ),
                None => None,
            },
            rho: parse(&rec[i_rho])?,
            alpha_general: parse(&rec[i_ag])?,
            alpha_closed_form: opt(i_cf).map(parse).transpose()?,
            regime: opt(i_reg).map(str::to_string),
        });
    }
    Ok(rows)
}

/// Least-squares fit of `log err` against `k` over a window of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalRateEstimate {
    pub slope: f64,
    pub k_min: usize,
    pub k_max: usize,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
    pub alpha_empirical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RateFit {
    Fitted(EmpiricalRateEstimate),
    /// Too few usable points, e.g. the run started at the floor.
    Degenerate {
        reason: String,
    },
}

/// Fits over iterations `[⌊a·k_end⌋, ⌊b·k_end⌋]` of the trajectory.
pub fn fit_rate(traj: &Trajectory, window: (f64, f64)) -> RateFit {
    let k_end = traj.len();
    let k_min = ((window.0 * k_end as f64).floor() as usize).max(1);
    let k_max = ((window.1 * k_end as f64).floor() as usize).min(k_end);
    let pts: Vec<(f64, f64)> = traj
        .records
        .iter()
        .filter(|r| r.k >= k_min && r.k <= k_max && r.err > 0.0 && r.err.is_finite())
        .map(|r| (r.k as f64, r.err.ln()))
        .collect();
    if pts.len() < 3 {
        return RateFit::Degenerate {
            reason: format!(
                "{} usable points in window [{k_min}, {k_max}] of a {k_end}-iteration run",
                pts.len()
            ),
        };
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let residual = (pts
        .iter()
        .map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    RateFit::Fitted(EmpiricalRateEstimate {
        slope,
        k_min,
        k_max,
        residual,
        alpha_empirical: slope.exp(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub rho: f64,
    pub alpha_theoretical: f64,
    pub iterations: usize,
    pub final_err: f64,
    pub stop: StopReason,
    pub fit: RateFit,
    pub x_star: Vec<f64>,
}

impl RunSummary {
    pub fn print(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "rho={}", self.rho)?;
        writeln!(out, "alpha_theoretical={}", self.alpha_theoretical)?;
        writeln!(out, "iterations={}", self.iterations)?;
        writeln!(out, "final_err={:e}", self.final_err)?;
        match &self.fit {
            RateFit::Fitted(e) => {
                writeln!(out, "alpha_empirical={}", e.alpha_empirical)?;
                writeln!(out, "fit_window=[{}, {}]", e.k_min, e.k_max)?;
            }
            RateFit::Degenerate { reason } => writeln!(out, "fit=degenerate ({reason})")?,
        }
        Ok(())
    }
}

/// Runs ADMM, writes the trajectory and reports the fitted rate next to the
/// theoretical one.
pub fn cmd_run(
    config: &ExperimentConfig,
    out: Option<&Path>,
) -> Result<(Trajectory, RunSummary), ExperimentError> {
    let exp = Experiment::build(config.clone())?;
    let rho = config.require_rho()?;
    let alpha = exp.rate_report(rho)?.alpha;
    let admm = AdmmConfig {
        rho,
        max_iters: config.max_iters,
        stop_tol: config.stop_tol,
        init: config.init.clone(),
        form: config.form,
        record_iterates: false,
        execution: config.execution,
    };
    let engine = AdmmEngine::new(&exp.topology, &exp.instance, rho, config.execution)?;
    let traj = engine.run(&admm, &exp.x_star)?;
    if let Some(path) = out.or(config.outputs.trajectory.as_deref()) {
        let file = fs::File::create(path).map_err(io_err(path))?;
        traj.write_csv(file)?;
    }
    let summary = RunSummary {
        rho,
        alpha_theoretical: alpha,
        iterations: traj.len(),
        final_err: traj.records.last().map_or(f64::NAN, |r| r.err),
        stop: traj.stop,
        fit: fit_rate(&traj, config.fit_window),
        x_star: exp.x_star.iter().copied().collect(),
    };
    if let Some(path) = &config.outputs.report {
        write_json(path, &summary)?;
    }
    Ok((traj, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalRho {
    pub rho: f64,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_closed_form: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_closed_form: Option<f64>,
}

impl OptimalRho {
    pub fn print(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "rho_opt={}", self.rho)?;
        writeln!(out, "alpha_opt={}", self.alpha)?;
        if let (Some(r), Some(a)) = (self.rho_closed_form, self.alpha_closed_form) {
            writeln!(out, "rho_closed_form={r}")?;
            writeln!(out, "alpha_closed_form={a}")?;
        }
        Ok(())
    }
}

/// Default search interval around the curvature scale.
fn default_range(exp: &Experiment) -> (f64, f64) {
    let scale = exp
        .hessians
        .iter()
        .map(|h| h.trace() / h.nrows() as f64)
        .sum::<f64>()
        / exp.hessians.len() as f64;
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let n = exp.topology.n_agents() as f64;
    (scale * 1e-3, scale * 10.0 * n.max(10.0))
}

pub fn cmd_optimal_rho(
    config: &ExperimentConfig,
    out: Option<&Path>,
) -> Result<OptimalRho, ExperimentError> {
    let exp = Experiment::build(config.clone())?;
    let (lo, hi) = config.rho_range.unwrap_or_else(|| default_range(&exp));
    let (rho, alpha) = optimize_rho_with(lo, hi, config.execution, |r| exp.alpha(r))?;
    let closed = match (config.equal_curvature(&exp.instance), &config.topology) {
        (Some(s2), TopologySpec::Centralized { .. }) => Some((s2, 0.5)),
        (Some(s2), TopologySpec::Ring { n }) if *n >= 4 => {
            Some((ring_optimal_rho(s2, *n), ring_optimal_alpha(*n)))
        }
        _ => None,
    };
    let result = OptimalRho {
        rho,
        alpha,
        rho_closed_form: closed.map(|c| c.0),
        alpha_closed_form: closed.map(|c| c.1),
    };
    if let Some(path) = out.or(config.outputs.report.as_deref()) {
        write_json(path, &result)?;
    }
    Ok(result)
}

/// Writes the topology as JSON: the RGG sample for `rgg`, the component
/// file otherwise.
pub fn gen_topology(
    config: &ExperimentConfig,
    out: Option<&Path>,
) -> Result<TopologyDocument, ExperimentError> {
    config.check()?;
    let (cs, rgg) = config.build_topology()?;
    let doc = match rgg {
        Some(s) => TopologyDocument::Rgg(s),
        None => TopologyDocument::Components(cs.to_file()),
    };
    if let Some(path) = out {
        write_json(path, &doc)?;
    }
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn centralized(sigma2: f64) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(
            TopologySpec::Centralized { n: 3 },
            ObjectiveConfig::Curvature {
                sigma2: Curvature::Shared(sigma2),
                centers: Some(vec![1.0, 2.0, 6.0]),
            },
        );
        c.rho = Some(16.0);
        c
    }

    #[test]
    fn config_json_defaults() {
        let c: ExperimentConfig = serde_json::from_str(
            r#"{"topology":{"kind":"ring","n":4},
                "objective":{"kind":"curvature","sigma2":16},
                "rho":8,
                "init":{"kind":"random","seed":3}}"#,
        )
        .unwrap();
        assert_eq!(c.dim, 1);
        assert_eq!(c.max_iters, 2000);
        assert_eq!(c.fit_window, (0.5, 0.9));
        assert_eq!(
            c.init,
            InitPlan::Random {
                seed: 3,
                scale: 1.0
            }
        );
        c.check().unwrap();
    }

    #[test]
    fn rate_summary_for_centralized() {
        let s = cmd_rate(&centralized(16.0), None).unwrap();
        assert!((s.report.alpha - 0.5).abs() < 1e-12);
        assert_eq!(s.alpha_closed_form, Some(0.5));
        assert!(s.report.tight);
        assert!((s.x_star[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn disconnected_topology_exit_code() {
        let mut c = centralized(16.0);
        c.topology = TopologySpec::Components {
            n: 4,
            components: vec![vec![1, 2], vec![3, 4]],
        };
        c.objective = ObjectiveConfig::Curvature {
            sigma2: Curvature::Shared(16.0),
            centers: None,
        };
        let err = cmd_rate(&c, None).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn fit_recovers_geometric_decay() {
        let traj = Trajectory {
            records: (1..=100)
                .map(|k| crate::engine::IterationRecord {
                    k,
                    err: 3.0 * 0.8f64.powi(k as i32),
                })
                .collect(),
            xs: vec![],
            zetas: vec![],
            x_star: crate::linalg::Vector::zeros(1),
            stop: StopReason::MaxIters,
        };
        let RateFit::Fitted(e) = fit_rate(&traj, (0.5, 0.9)) else {
            panic!("degenerate")
        };
        assert_eq!((e.k_min, e.k_max), (50, 90));
        assert!((e.alpha_empirical - 0.8).abs() < 1e-12);
        assert!(e.residual < 1e-12);
    }

    #[test]
    fn consensus_start_is_degenerate() {
        let mut c = centralized(4.0);
        c.objective = ObjectiveConfig::Curvature {
            sigma2: Curvature::Shared(4.0),
            centers: Some(vec![2.0; 3]),
        };
        c.init = InitPlan::Consensus { point: vec![2.0] };
        let (_, s) = cmd_run(&c, None).unwrap();
        assert!(matches!(s.fit, RateFit::Degenerate { .. }));
    }

    #[test]
    fn ring_surface_rows_in_grid_order() {
        let mut c = ExperimentConfig::new(
            TopologySpec::Ring { n: 4 },
            ObjectiveConfig::Curvature {
                sigma2: Curvature::Shared(16.0),
                centers: None,
            },
        );
        c.rho_grid = Some(RhoGrid::Values(vec![2.0, 8.0, 32.0]));
        c.sweep_n = Some(vec![4, 6]);
        let rows = cmd_sweep(&c, None).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[1].n, Some(4));
        assert_eq!(rows[1].rho, 8.0);
        assert!((rows[1].alpha_general - 0.5).abs() < 1e-8);
        assert_eq!(rows[4].n, Some(6));
    }
}
