//! Per-agent cost functions and the aggregate minimizer.
//!
//! Quadratic oracles carry `½xᵀΦx + cᵀx + d` in any dimension. Scalar oracles
//! (`K = 1`) expose value and first/second derivatives; their proximity
//! operator is a safeguarded Newton solve.

use std::fmt;
use std::sync::Arc;

use nalgebra::Cholesky;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{sym_eig, DenseMatrix, LinalgError, Vector};

/// Residual tolerance of the scalar prox solve.
pub const PROX_TOL: f64 = 1e-12;
const PROX_MAX_ITERS: usize = 200;

/// Relative gradient tolerance of the aggregate Newton solve.
pub const MINIMIZER_TOL: f64 = 1e-12;
const MINIMIZER_MAX_ITERS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("{what} did not converge within {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("negative second derivative {value:e} at w = {at}")]
    NonConvexDetected { at: f64, value: f64 },
    #[error("sum of Hessians at the minimizer is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    AssumptionViolated { min_eigenvalue: f64 },
    #[error("prox weight must be positive, got {0}")]
    InvalidWeight(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite evaluation: {0}")]
    NonFinite(String),
    #[error("invalid objective: {0}")]
    Invalid(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Smooth convex function of one real variable.
pub trait ScalarSmooth: Send + Sync {
    fn value(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;
    fn second_derivative(&self, x: f64) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    pub phi: DenseMatrix,
    pub c: Vector,
    pub d: f64,
}

#[derive(Clone)]
pub enum ObjectiveOracle {
    Quadratic(QuadraticObjective),
    /// `exp(βx)`.
    Exponential {
        beta: f64,
    },
    /// `a(x − b)²`.
    ScaledSquare {
        a: f64,
        b: f64,
    },
    Custom(Arc<dyn ScalarSmooth>),
}

impl fmt::Debug for ObjectiveOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Quadratic(q) => f.debug_tuple("Quadratic").field(q).finish(),
            Self::Exponential { beta } => {
                f.debug_struct("Exponential").field("beta", beta).finish()
            }
            Self::ScaledSquare { a, b } => f
                .debug_struct("ScaledSquare")
                .field("a", a)
                .field("b", b)
                .finish(),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl ObjectiveOracle {
    pub fn quadratic(phi: DenseMatrix, c: Vector, d: f64) -> Result<Self, ObjectiveError> {
        let k = c.len();
        if phi.shape() != (k, k) {
            return Err(ObjectiveError::DimensionMismatch(format!(
                "phi is {:?}, c has length {k}",
                phi.shape()
            )));
        }
        let eig = sym_eig(&phi)?;
        let scale = eig.values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        if eig.values.first().is_some_and(|&w| w < -1e-12 * scale) {
            return Err(ObjectiveError::Invalid(
                "phi is not positive semidefinite".into(),
            ));
        }
        if !d.is_finite() || c.iter().any(|v| !v.is_finite()) {
            return Err(ObjectiveError::NonFinite("quadratic coefficients".into()));
        }
        Ok(Self::Quadratic(QuadraticObjective { phi, c, d }))
    }

    /// `½σ²‖x − center‖²`.
    pub fn isotropic(sigma2: f64, center: &[f64]) -> Result<Self, ObjectiveError> {
        let k = center.len();
        let phi = DenseMatrix::identity(k, k) * sigma2;
        let center = Vector::from_column_slice(center);
        let c = -(&phi * &center);
        let d = 0.5 * sigma2 * center.norm_squared();
        Self::quadratic(phi, c, d)
    }

    pub fn zero(dim: usize) -> Self {
        Self::Quadratic(QuadraticObjective {
            phi: DenseMatrix::zeros(dim, dim),
            c: Vector::zeros(dim),
            d: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Quadratic(q) => q.c.len(),
            _ => 1,
        }
    }

    fn scalar(&self) -> Option<&dyn ScalarSmooth> {
        match self {
            Self::Quadratic(_) => None,
            Self::Exponential { .. } | Self::ScaledSquare { .. } => Some(self as &dyn ScalarSmooth),
            Self::Custom(f) => Some(f.as_ref()),
        }
    }

    fn check_dim(&self, x: &Vector) -> Result<(), ObjectiveError> {
        if x.len() != self.dim() {
            return Err(ObjectiveError::DimensionMismatch(format!(
                "oracle has dimension {}, point has {}",
                self.dim(),
                x.len()
            )));
        }
        Ok(())
    }

    pub fn value(&self, x: &Vector) -> Result<f64, ObjectiveError> {
        self.check_dim(x)?;
        Ok(match self {
            Self::Quadratic(q) => 0.5 * x.dot(&(&q.phi * x)) + q.c.dot(x) + q.d,
            _ => self.scalar().expect("scalar oracle").value(x[0]),
        })
    }

    pub fn gradient(&self, x: &Vector) -> Result<Vector, ObjectiveError> {
        self.check_dim(x)?;
        Ok(match self {
            Self::Quadratic(q) => &q.phi * x + &q.c,
            _ => Vector::from_element(1, self.scalar().expect("scalar oracle").derivative(x[0])),
        })
    }

    pub fn hessian(&self, x: &Vector) -> Result<DenseMatrix, ObjectiveError> {
        self.check_dim(x)?;
        Ok(match self {
            Self::Quadratic(q) => q.phi.clone(),
            _ => DenseMatrix::from_element(
                1,
                1,
                self.scalar()
                    .expect("scalar oracle")
                    .second_derivative(x[0]),
            ),
        })
    }

    /// `(Φ, c, d)` when the oracle is exactly quadratic.
    pub fn quadratic_form(&self) -> Option<QuadraticObjective> {
        match self {
            Self::Quadratic(q) => Some(q.clone()),
            Self::ScaledSquare { a, b } => Some(QuadraticObjective {
                phi: DenseMatrix::from_element(1, 1, 2.0 * a),
                c: Vector::from_element(1, -2.0 * a * b),
                d: a * b * b,
            }),
            _ => None,
        }
    }

    /// `argmin_w t·f(w) + ½‖w − v‖²`.
    pub fn prox(&self, t: f64, v: &Vector) -> Result<Vector, ObjectiveError> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(ObjectiveError::InvalidWeight(t));
        }
        self.check_dim(v)?;
        match self {
            Self::Quadratic(q) => {
                let k = v.len();
                let lhs = &q.phi * t + DenseMatrix::identity(k, k);
                let rhs = v - &q.c * t;
                let chol = Cholesky::new(lhs).ok_or(LinalgError::Singular)?;
                Ok(chol.solve(&rhs))
            }
            _ => {
                let f = self.scalar().expect("scalar oracle");
                Ok(Vector::from_element(1, scalar_prox(f, t, v[0])?))
            }
        }
    }
}

impl ScalarSmooth for ObjectiveOracle {
    fn value(&self, x: f64) -> f64 {
        match self {
            Self::Exponential { beta } => (beta * x).exp(),
            Self::ScaledSquare { a, b } => a * (x - b) * (x - b),
            Self::Custom(f) => f.value(x),
            Self::Quadratic(q) => 0.5 * q.phi[(0, 0)] * x * x + q.c[0] * x + q.d,
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        match self {
            Self::Exponential { beta } => beta * (beta * x).exp(),
            Self::ScaledSquare { a, b } => 2.0 * a * (x - b),
            Self::Custom(f) => f.derivative(x),
            Self::Quadratic(q) => q.phi[(0, 0)] * x + q.c[0],
        }
    }

    fn second_derivative(&self, x: f64) -> f64 {
        match self {
            Self::Exponential { beta } => beta * beta * (beta * x).exp(),
            Self::ScaledSquare { a, .. } => 2.0 * a,
            Self::Custom(f) => f.second_derivative(x),
            Self::Quadratic(q) => q.phi[(0, 0)],
        }
    }
}

/// Solves `t·f′(w) + w − v = 0` by Newton steps kept inside a sign-change
/// bracket; steps leaving the bracket are replaced by bisection.
pub fn scalar_prox(f: &dyn ScalarSmooth, t: f64, v: f64) -> Result<f64, ObjectiveError> {
    let residual = |w: f64| t * f.derivative(w) + w - v;
    let r0 = residual(v);
    if r0 == 0.0 {
        return Ok(v);
    }
    // f′ is nondecreasing, so the root lies between v and v − t·f′(v).
    // A huge residual gives a useless bracket; probe outward instead.
    let (mut lo, mut hi) = if r0.abs() <= 1e3 * (1.0 + v.abs()) {
        let other = v - r0;
        if r0 > 0.0 {
            (other, v)
        } else {
            (v, other)
        }
    } else {
        expand_bracket(&residual, v)?
    };
    let mut w = v;
    let mut r = r0;
    if !r.is_finite() {
        w = 0.5 * (lo + hi);
        r = residual(w);
    }
    let mut last_width = f64::INFINITY;
    for _ in 0..PROX_MAX_ITERS {
        if r.abs() <= PROX_TOL {
            return Ok(w);
        }
        if r > 0.0 {
            hi = w;
        } else {
            lo = w;
        }
        if hi - lo <= 4.0 * f64::EPSILON * w.abs().max(1.0) {
            return Ok(w);
        }
        let curvature = f.second_derivative(w);
        if curvature < 0.0 {
            return Err(ObjectiveError::NonConvexDetected {
                at: w,
                value: curvature,
            });
        }
        let slope = t * curvature + 1.0;
        // On steep branches the residual cannot get below slope·ulp(w).
        if (r / slope).abs() <= 2.0 * f64::EPSILON * w.abs().max(1.0) {
            return Ok(w);
        }
        let newton = w - r / slope;
        // Bisect when Newton leaves the bracket or stalls: the bracket must
        // at least halve every two steps.
        let width = hi - lo;
        let stalled = width > 0.5 * last_width;
        last_width = width;
        w = if newton.is_finite() && newton > lo && newton < hi && !stalled {
            newton
        } else {
            last_width = f64::INFINITY;
            0.5 * (lo + hi)
        };
        r = residual(w);
        if r.is_nan() {
            return Err(ObjectiveError::NonFinite(format!(
                "prox residual at w = {w}"
            )));
        }
    }
    if r.abs() <= PROX_TOL {
        return Ok(w);
    }
    Err(ObjectiveError::NoConvergence {
        what: "scalar prox",
        iterations: PROX_MAX_ITERS,
        residual: r,
    })
}

fn expand_bracket(residual: &dyn Fn(f64) -> f64, v: f64) -> Result<(f64, f64), ObjectiveError> {
    let r0 = residual(v);
    let mut step = 1.0_f64;
    for _ in 0..1100 {
        let probe = if r0 > 0.0 { v - step } else { v + step };
        let r = residual(probe);
        if r.is_finite() && (r <= 0.0) == (r0 > 0.0) {
            return Ok(if r0 > 0.0 { (probe, v) } else { (v, probe) });
        }
        step *= 2.0;
    }
    Err(ObjectiveError::NonFinite(format!(
        "cannot bracket prox root around {v}"
    )))
}

/// The `N` agent oracles of one problem.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    oracles: Vec<ObjectiveOracle>,
    dim: usize,
}

/// Aggregate minimizer and per-agent Hessians there.
#[derive(Debug, Clone)]
pub struct ConsensusMinimizer {
    pub x: Vector,
    pub hessians: Vec<DenseMatrix>,
    pub iterations: usize,
}

impl ProblemInstance {
    pub fn new(oracles: Vec<ObjectiveOracle>) -> Result<Self, ObjectiveError> {
        let dim = oracles
            .first()
            .map(ObjectiveOracle::dim)
            .ok_or_else(|| ObjectiveError::Invalid("no oracles".into()))?;
        if oracles.iter().any(|o| o.dim() != dim) {
            return Err(ObjectiveError::DimensionMismatch(
                "oracles have differing dimensions".into(),
            ));
        }
        Ok(Self { oracles, dim })
    }

    pub fn n_agents(&self) -> usize {
        self.oracles.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn oracles(&self) -> &[ObjectiveOracle] {
        &self.oracles
    }

    pub fn oracle(&self, n: usize) -> &ObjectiveOracle {
        &self.oracles[n]
    }

    /// True when every oracle is exactly quadratic.
    pub fn is_quadratic(&self) -> bool {
        self.oracles.iter().all(|o| o.quadratic_form().is_some())
    }

    /// Stacked `(blockdiag Φ_n, c)` for an all-quadratic instance.
    pub fn stacked_quadratic(&self) -> Option<(DenseMatrix, Vector)> {
        let k = self.dim;
        let n = self.oracles.len();
        let mut phi = DenseMatrix::zeros(n * k, n * k);
        let mut c = Vector::zeros(n * k);
        for (i, o) in self.oracles.iter().enumerate() {
            let q = o.quadratic_form()?;
            phi.view_mut((i * k, i * k), (k, k)).copy_from(&q.phi);
            c.rows_mut(i * k, k).copy_from(&q.c);
        }
        Some((phi, c))
    }

    /// Stacked gradient of `f(x) = Σ f_n(x(n))` at an `NK` vector.
    pub fn stacked_gradient(&self, x: &Vector) -> Result<Vector, ObjectiveError> {
        let k = self.dim;
        let mut g = Vector::zeros(self.oracles.len() * k);
        for (i, o) in self.oracles.iter().enumerate() {
            let xi = x.rows(i * k, k).into_owned();
            g.rows_mut(i * k, k).copy_from(&o.gradient(&xi)?);
        }
        Ok(g)
    }

    fn aggregate(&self, x: &Vector) -> Result<(Vector, DenseMatrix, f64), ObjectiveError> {
        let k = self.dim;
        let mut g = Vector::zeros(k);
        let mut h = DenseMatrix::zeros(k, k);
        let mut scale = 0.0;
        for o in &self.oracles {
            let gi = o.gradient(x)?;
            scale += gi.norm();
            g += gi;
            h += o.hessian(x)?;
        }
        Ok((g, h, scale))
    }

    /// Newton iteration on `Σ∇f_n(x) = 0` from the origin.
    pub fn solve_consensus_minimizer(&self) -> Result<ConsensusMinimizer, ObjectiveError> {
        self.solve_consensus_minimizer_from(&Vector::zeros(self.dim))
    }

    pub fn solve_consensus_minimizer_from(
        &self,
        start: &Vector,
    ) -> Result<ConsensusMinimizer, ObjectiveError> {
        let mut x = start.clone();
        let (mut g, mut h, mut scale) = self.aggregate(&x)?;
        let mut iterations = 0;
        loop {
            let gnorm = g.norm();
            if !gnorm.is_finite() {
                return Err(ObjectiveError::NonFinite("aggregate gradient".into()));
            }
            if gnorm <= MINIMIZER_TOL * (1.0 + scale) {
                break;
            }
            if iterations == MINIMIZER_MAX_ITERS {
                return Err(ObjectiveError::NoConvergence {
                    what: "consensus minimizer",
                    iterations,
                    residual: gnorm,
                });
            }
            iterations += 1;
            let step = match Cholesky::new(h.clone()) {
                Some(ch) => ch.solve(&g),
                None => h.clone().lu().solve(&g).ok_or(LinalgError::Singular)?,
            };
            // Damped Newton: halve until the gradient norm does not grow.
            let mut tau = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let trial = &x - &step * tau;
                if let Ok(next) = self.aggregate(&trial) {
                    if next.0.norm().is_finite() && next.0.norm() <= gnorm {
                        accepted = Some((trial, next));
                        break;
                    }
                }
                tau *= 0.5;
            }
            let Some((trial, next)) = accepted else {
                // No decrease possible: at the floating-point floor.
                break;
            };
            let moved = (&trial - &x).norm();
            x = trial;
            (g, h, scale) = next;
            if x.norm() > 1e12 {
                return Err(ObjectiveError::NoConvergence {
                    what: "consensus minimizer (diverging)",
                    iterations,
                    residual: g.norm(),
                });
            }
            if moved <= 4.0 * f64::EPSILON * (1.0 + x.norm()) {
                break;
            }
        }
        let min_eigenvalue = sym_eig(&((&h + h.transpose()) * 0.5))?
            .values
            .first()
            .copied()
            .unwrap_or(0.0);
        if min_eigenvalue <= 1e-10 {
            return Err(ObjectiveError::AssumptionViolated { min_eigenvalue });
        }
        let hessians = self
            .oracles
            .iter()
            .map(|o| o.hessian(&x))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ConsensusMinimizer {
            x,
            hessians,
            iterations,
        })
    }
}

/// Serialized oracle: `{"kind": "quadratic", "phi": [...], "c": [...], "d": 0}`,
/// `{"kind": "exponential", "beta": ...}` or `{"kind": "scaled_square", "a": ..., "b": ...}`.
/// `phi` is row-major `K×K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveSpec {
    Quadratic {
        phi: Vec<f64>,
        c: Vec<f64>,
        #[serde(default)]
        d: f64,
    },
    Exponential {
        beta: f64,
    },
    ScaledSquare {
        a: f64,
        b: f64,
    },
}

impl ObjectiveSpec {
    pub fn to_oracle(&self) -> Result<ObjectiveOracle, ObjectiveError> {
        match self {
            Self::Quadratic { phi, c, d } => {
                let k = c.len();
                if phi.len() != k * k {
                    return Err(ObjectiveError::DimensionMismatch(format!(
                        "phi has {} entries, expected {}",
                        phi.len(),
                        k * k
                    )));
                }
                ObjectiveOracle::quadratic(
                    DenseMatrix::from_row_slice(k, k, phi),
                    Vector::from_column_slice(c),
                    *d,
                )
            }
            Self::Exponential { beta } => Ok(ObjectiveOracle::Exponential { beta: *beta }),
            Self::ScaledSquare { a, b } => {
                if *a < 0.0 {
                    return Err(ObjectiveError::Invalid("scaled_square needs a >= 0".into()));
                }
                Ok(ObjectiveOracle::ScaledSquare { a: *a, b: *b })
            }
        }
    }

    pub fn from_oracle(oracle: &ObjectiveOracle) -> Option<Self> {
        match oracle {
            ObjectiveOracle::Quadratic(q) => {
                let k = q.c.len();
                Some(Self::Quadratic {
                    phi: (0..k * k).map(|i| q.phi[(i / k, i % k)]).collect(),
                    c: q.c.iter().copied().collect(),
                    d: q.d,
                })
            }
            ObjectiveOracle::Exponential { beta } => Some(Self::Exponential { beta: *beta }),
            ObjectiveOracle::ScaledSquare { a, b } => Some(Self::ScaledSquare { a: *a, b: *b }),
            ObjectiveOracle::Custom(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// `exp(β_n x)` with `β_n ~ U[−10, 10]`, then centered.
    Exponential,
    /// `a_n(x − b_n)²` with `a_n ~ U[1, 100]` and `b_n ~ N(5, 100)`.
    Quadratic,
}

/// Standard normal draw by Box–Muller.
pub(crate) fn box_muller(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn sample_experiment_objectives(kind: ExperimentKind, n: usize, seed: u64) -> ProblemInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let oracles = match kind {
        ExperimentKind::Exponential => {
            let mut beta: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..=10.0)).collect();
            let mean = beta.iter().sum::<f64>() / n as f64;
            for b in &mut beta {
                *b -= mean;
            }
            // Make the left-to-right sum exactly zero.
            if n > 1 {
                let head: f64 = beta[..n - 1].iter().sum();
                beta[n - 1] = -head;
            }
            beta.into_iter()
                .map(|beta| ObjectiveOracle::Exponential { beta })
                .collect()
        }
        ExperimentKind::Quadratic => (0..n)
            .map(|_| {
                let a = rng.random_range(1.0..=100.0);
                let b = 5.0 + 10.0 * box_muller(&mut rng);
                ObjectiveOracle::ScaledSquare { a, b }
            })
            .collect(),
    };
    ProblemInstance::new(oracles).expect("nonempty, scalar oracles")
}
