//! Exact linear rate of the iteration.
//!
//! With `H = blockdiag(∇²f_n(x*)) + ρM*M` and `Q = ρMH⁻¹M*`, the driver
//! sequence obeys `ζ_{k+1} = Rζ_k + d` (exactly for quadratics, to first order
//! otherwise) where `R = (I − P − Q)(I − 2P)`. The rate is
//! `α = sprad((Π_colsp(P+Q) − (P+Q))(I − 2P))`.

use std::f64::consts::PI;

use nalgebra::Cholesky;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::linalg::{
    colspace_projector, pinv, rank, real_eig, smallest_right_singular_vectors, sym_null_space,
    DenseMatrix, LinalgError, Spectrum, Vector,
};
use crate::objectives::{ObjectiveError, ProblemInstance};
use crate::topology::{ComponentStructure, TopologyError};

/// Distance from 1 under which an eigenvalue of `R` counts as a unit one.
pub const UNIT_EIGENVALUE_TOL: f64 = 1e-7;
/// Required agreement of the two α computations.
pub const ALPHA_AGREEMENT_TOL: f64 = 1e-8;
/// Below this norm the slow subspace is taken as invisible in `x`.
pub const TIGHTNESS_TOL: f64 = 1e-8;
/// Modulus window for collecting the eigenvalues that set the rate.
const RATE_MODULUS_TOL: f64 = 1e-6;

pub const RHO_GRID_POINTS: usize = 64;
pub const RHO_RELATIVE_WIDTH: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum RateError {
    #[error("H = blockdiag(hessians) + rho M*M is not positive definite")]
    SingularH,
    #[error("rate computations disagree: {0}")]
    Inconsistent(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

/// `ρM(H)⁻¹M*` for per-agent Hessians at the minimizer.
pub fn build_q(
    cs: &ComponentStructure,
    hessians: &[DenseMatrix],
    rho: f64,
) -> Result<DenseMatrix, RateError> {
    Ok(RateAnalyzer::new(cs, hessians, rho)?.q)
}

/// `(I − P − Q)(I − 2P)`.
pub fn build_r(cs: &ComponentStructure, q: &DenseMatrix) -> DenseMatrix {
    let p = cs.mixing_matrices().p;
    r_from(&p, q)
}

fn r_from(p: &DenseMatrix, q: &DenseMatrix) -> DenseMatrix {
    let n = p.nrows();
    let id = DenseMatrix::identity(n, n);
    (&id - p - q) * (&id - p * 2.0)
}

fn symmetrize(a: DenseMatrix) -> DenseMatrix {
    (&a + a.transpose()) * 0.5
}

/// Stacked `c = ∇f(𝟙⊗x*) − ∇²f(𝟙⊗x*)(𝟙⊗x*)`; the linear coefficient for
/// quadratics.
pub fn affine_constant(instance: &ProblemInstance, x_star: &Vector) -> Result<Vector, RateError> {
    let k = instance.dim();
    let mut c = Vector::zeros(instance.n_agents() * k);
    for (n, o) in instance.oracles().iter().enumerate() {
        let g = o.gradient(x_star)?;
        let h = o.hessian(x_star)?;
        c.rows_mut(n * k, k).copy_from(&(g - h * x_star));
    }
    Ok(c)
}

#[derive(Debug, Clone)]
pub struct KernelInfo {
    /// `dim ker(Q + P)`.
    pub dim: usize,
    /// Orthonormal basis of `ker(Q + P)` as columns.
    pub basis: DenseMatrix,
    /// `dim(ker Q ∩ ker P)` computed from the stacked matrix `[Q; P]`.
    pub dim_intersection: usize,
}

#[derive(Debug, Clone)]
pub struct AlphaResult {
    /// From the projector form.
    pub alpha: f64,
    /// From `R`'s spectrum with the unit eigenvalues removed.
    pub alpha_filtered: f64,
    pub spectrum: Spectrum,
    pub dim_kernel: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tightness {
    pub tight: bool,
    /// `‖Vᵀ(I − 2P)M‖` over the invariant subspaces of modulus-α eigenvalues.
    pub margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Operators of one `(topology, Hessians, ρ)` triple.
#[derive(Debug, Clone)]
pub struct RateAnalyzer {
    rho: f64,
    m: DenseMatrix,
    p: DenseMatrix,
    h: Cholesky<f64, nalgebra::Dyn>,
    q: DenseMatrix,
    r: DenseMatrix,
}

impl RateAnalyzer {
    pub fn new(
        cs: &ComponentStructure,
        hessians: &[DenseMatrix],
        rho: f64,
    ) -> Result<Self, RateError> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(RateError::InvalidParameter(format!(
                "rho must be positive, got {rho}"
            )));
        }
        cs.ensure_valid()?;
        let k = cs.dim();
        if hessians.len() != cs.n_agents() || hessians.iter().any(|h| h.shape() != (k, k)) {
            return Err(RateError::InvalidParameter(format!(
                "expected {} Hessians of size {k}x{k}",
                cs.n_agents()
            )));
        }
        let mix = cs.mixing_matrices();
        let nk = cs.n_agents() * k;
        let mut h = (mix.m.transpose() * &mix.m) * rho;
        for (n, hn) in hessians.iter().enumerate() {
            let mut block = h.view_mut((n * k, n * k), (k, k));
            block += hn;
        }
        debug_assert_eq!(h.nrows(), nk);
        let h = Cholesky::new(symmetrize(h)).ok_or(RateError::SingularH)?;
        let q = symmetrize(&mix.m * h.solve(&mix.m.transpose()) * rho);
        let r = r_from(&mix.p, &q);
        Ok(Self {
            rho,
            m: mix.m,
            p: mix.p,
            h,
            q,
            r,
        })
    }

    /// Uses the minimizer of `instance` and the Hessians there.
    pub fn from_instance(
        cs: &ComponentStructure,
        instance: &ProblemInstance,
        rho: f64,
    ) -> Result<(Self, Vector), RateError> {
        let min = instance.solve_consensus_minimizer()?;
        Ok((Self::new(cs, &min.hessians, rho)?, min.x))
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn q(&self) -> &DenseMatrix {
        &self.q
    }

    pub fn r(&self) -> &DenseMatrix {
        &self.r
    }

    pub fn p(&self) -> &DenseMatrix {
        &self.p
    }

    pub fn m(&self) -> &DenseMatrix {
        &self.m
    }

    fn reflection(&self) -> DenseMatrix {
        let n = self.p.nrows();
        DenseMatrix::identity(n, n) - &self.p * 2.0
    }

    pub fn kernel(&self) -> Result<KernelInfo, RateError> {
        let basis = sym_null_space(&symmetrize(&self.p + &self.q))?;
        let tk = self.p.nrows();
        let mut stacked = DenseMatrix::zeros(2 * tk, tk);
        stacked.rows_mut(0, tk).copy_from(&self.q);
        stacked.rows_mut(tk, tk).copy_from(&self.p);
        let dim_intersection = tk - rank(&stacked);
        let dim = basis.ncols();
        if dim != dim_intersection {
            return Err(RateError::Inconsistent(format!(
                "dim ker(Q+P) = {dim} but dim(ker Q ∩ ker P) = {dim_intersection}"
            )));
        }
        Ok(KernelInfo {
            dim,
            basis,
            dim_intersection,
        })
    }

    /// α by both routes; they must agree.
    pub fn alpha(&self) -> Result<AlphaResult, RateError> {
        let s = symmetrize(&self.p + &self.q);
        let proj = colspace_projector(&s)?;
        let alpha = real_eig(&((proj - &s) * self.reflection()))?.spectral_radius();

        let dim_kernel = self.kernel()?.dim;
        let spectrum = real_eig(&self.r)?;
        let (unit, rest): (Vec<Complex64>, Vec<Complex64>) = spectrum
            .eigenvalues
            .iter()
            .partition(|z| (*z - 1.0).norm() < UNIT_EIGENVALUE_TOL);
        if unit.len() != dim_kernel {
            return Err(RateError::Inconsistent(format!(
                "{} unit eigenvalues of R but dim ker(Q+P) = {dim_kernel}",
                unit.len()
            )));
        }
        let alpha_filtered = rest.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if (alpha - alpha_filtered).abs() > ALPHA_AGREEMENT_TOL {
            return Err(RateError::Inconsistent(format!(
                "projector form gives {alpha}, filtered spectrum gives {alpha_filtered}"
            )));
        }
        Ok(AlphaResult {
            alpha,
            alpha_filtered,
            spectrum,
            dim_kernel,
        })
    }

    /// `d = −ρMH⁻¹c`.
    pub fn offset(&self, c: &Vector) -> Vector {
        -(&self.m * self.h.solve(c)) * self.rho
    }

    /// `ζ̄ = ρ(I − 2P)(P − Q)♯MH⁻¹c`.
    pub fn fixed_point(&self, c: &Vector) -> Result<Vector, RateError> {
        let pq = pinv(&symmetrize(&self.p - &self.q))?;
        Ok(self.reflection() * (pq * (&self.m * self.h.solve(c))) * self.rho)
    }

    /// Primal point produced from a driver vector: `−H⁻¹(M*(I − 2P)ζ + c)`.
    pub fn primal_from(&self, zeta: &Vector, c: &Vector) -> Vector {
        -self
            .h
            .solve(&(self.m.transpose() * (self.reflection() * zeta) + c))
    }

    /// Whether the modulus-α invariant subspaces of `R` are visible through
    /// `(I − 2P)M`, i.e. whether generic starts converge at exactly rate α.
    pub fn tightness(&self, alpha: &AlphaResult) -> Result<Tightness, RateError> {
        if alpha.alpha < 1e-12 {
            return Ok(Tightness {
                tight: false,
                margin: 0.0,
                note: Some("rate is zero: the iterates settle in finitely many steps".into()),
            });
        }
        let b = self.reflection() * &self.m;
        let n = self.r.nrows();
        let id = DenseMatrix::identity(n, n);
        let mut targets: Vec<Complex64> = alpha
            .spectrum
            .eigenvalues
            .iter()
            .copied()
            .filter(|z| (*z - 1.0).norm() >= UNIT_EIGENVALUE_TOL)
            .filter(|z| (z.norm() - alpha.alpha).abs() <= RATE_MODULUS_TOL)
            .filter(|z| z.im >= 0.0)
            .collect();
        targets.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        // Cluster numerically repeated eigenvalues.
        let mut clusters: Vec<(Complex64, usize)> = Vec::new();
        for z in targets {
            match clusters.last_mut() {
                Some((c, m)) if (*c - z).norm() <= 1e-5 => {
                    *c = (*c * *m as f64 + z) / (*m as f64 + 1.0);
                    *m += 1;
                }
                _ => clusters.push((z, 1)),
            }
        }
        let mut margin = 0.0_f64;
        for (lambda, mult) in clusters {
            let (base, count) = if lambda.im.abs() < 1e-8 {
                (&self.r - &id * lambda.re, mult)
            } else {
                (
                    &self.r * &self.r - &self.r * (2.0 * lambda.re) + &id * lambda.norm_sqr(),
                    2 * mult,
                )
            };
            let mut op = base.clone();
            for _ in 1..mult {
                op = &op * &base;
            }
            let v = smallest_right_singular_vectors(&op, count.min(n));
            let proj = v.transpose() * &b;
            margin = margin.max(proj.clone().singular_values().max());
        }
        Ok(Tightness {
            tight: margin > TIGHTNESS_TOL,
            margin,
            note: None,
        })
    }

    /// Full report; `c` enables the fixed point.
    pub fn report(&self, c: Option<&Vector>) -> Result<RateReport, RateError> {
        let alpha = self.alpha()?;
        let tightness = self.tightness(&alpha)?;
        let zeta_star = c.map(|c| self.fixed_point(c)).transpose()?;
        Ok(RateReport {
            rho: self.rho,
            alpha: alpha.alpha,
            alpha_filtered: alpha.alpha_filtered,
            dim_kernel: alpha.dim_kernel,
            tightness,
            spectrum: alpha.spectrum,
            q: self.q.clone(),
            r: self.r.clone(),
            zeta_star,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RateReport {
    pub rho: f64,
    pub alpha: f64,
    pub alpha_filtered: f64,
    pub dim_kernel: usize,
    pub tightness: Tightness,
    pub spectrum: Spectrum,
    pub q: DenseMatrix,
    pub r: DenseMatrix,
    pub zeta_star: Option<Vector>,
}

/// Serialized report; matrices are omitted, the spectrum is `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReportJson {
    pub alpha: f64,
    pub rho: f64,
    pub dim_kernel: usize,
    pub tight: bool,
    pub tightness_margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tightness_note: Option<String>,
    pub spectrum: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta_star: Option<Vec<f64>>,
}

impl RateReport {
    pub fn to_json(&self) -> RateReportJson {
        RateReportJson {
            alpha: self.alpha,
            rho: self.rho,
            dim_kernel: self.dim_kernel,
            tight: self.tightness.tight,
            tightness_margin: self.tightness.margin,
            tightness_note: self.tightness.note.clone(),
            spectrum: self
                .spectrum
                .sorted()
                .iter()
                .map(|z| [z.re, z.im])
                .collect(),
            zeta_star: self.zeta_star.as_ref().map(|z| z.iter().copied().collect()),
        }
    }
}

/// Rate for every agent's Hessian at the minimizer of `instance`.
pub fn analyze(
    cs: &ComponentStructure,
    instance: &ProblemInstance,
    rho: f64,
) -> Result<RateReport, RateError> {
    let (an, x_star) = RateAnalyzer::from_instance(cs, instance, rho)?;
    let c = affine_constant(instance, &x_star)?;
    an.report(Some(&c))
}

/// α for one component structure and set of Hessians.
pub fn compute_alpha(
    cs: &ComponentStructure,
    hessians: &[DenseMatrix],
    rho: f64,
) -> Result<f64, RateError> {
    Ok(RateAnalyzer::new(cs, hessians, rho)?.alpha()?.alpha)
}

/// Single component, all Hessians equal to `σ²`.
pub fn centralized_alpha(rho: f64, sigma2: f64) -> f64 {
    rho.max(sigma2) / (rho + sigma2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RingRegime {
    /// Below the optimum: a real root of the slowest mode sets the rate.
    Low,
    /// Between the optimum and the upper boundary: a complex pair sets it.
    Mid,
    /// Above the upper boundary: the second root of the mean mode sets it.
    High,
    /// The piecewise intervals are ill-ordered; only the per-mode roots apply.
    Fallback,
}

/// The 2×2 symbol at frequency `k`: `λ² − trace·λ + det = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingMode {
    pub k: usize,
    pub trace: f64,
    pub det: f64,
    pub roots: [[f64; 2]; 2],
}

impl RingMode {
    pub fn roots_complex(&self) -> [Complex64; 2] {
        self.roots.map(|[re, im]| Complex64::new(re, im))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingRateBreakdown {
    pub regime: RingRegime,
    /// From the per-mode roots.
    pub alpha: f64,
    /// Piecewise expression, where its intervals are well-ordered.
    pub closed_form: Option<f64>,
    pub modes: Vec<RingMode>,
}

fn quadratic_roots(trace: f64, det: f64) -> [Complex64; 2] {
    let mut disc = trace * trace - 4.0 * det;
    // A discriminant at rounding level is a double root.
    if disc.abs() <= 8.0 * f64::EPSILON * (trace * trace).max(det.abs()) {
        disc = 0.0;
    }
    if disc >= 0.0 {
        let sq = disc.sqrt();
        // Stable pairing: larger-magnitude root first, the other from det.
        let big = 0.5 * (trace + trace.signum() * sq);
        let small = if big != 0.0 { det / big } else { 0.0 };
        [Complex64::new(big, 0.0), Complex64::new(small, 0.0)]
    } else {
        let im = 0.5 * (-disc).sqrt();
        [
            Complex64::new(0.5 * trace, im),
            Complex64::new(0.5 * trace, -im),
        ]
    }
}

/// ρ at which the slowest non-mean mode turns complex; optimal for `N ≥ 4`.
pub fn ring_optimal_rho(sigma2: f64, n: usize) -> f64 {
    sigma2 / (2.0 * (2.0 * PI / n as f64).sin())
}

/// Rate at [`ring_optimal_rho`].
pub fn ring_optimal_alpha(n: usize) -> f64 {
    let th = 2.0 * PI / n as f64;
    ((1.0 + th.cos()) / (2.0 * (1.0 + th.sin()))).sqrt()
}

/// Upper end of the complex-pair interval: `σ²/(2 tan²(π/N))`.
pub fn ring_upper_rho(sigma2: f64, n: usize) -> f64 {
    let t = (PI / n as f64).tan();
    sigma2 / (2.0 * t * t)
}

/// Rate of the ring with equal curvature `σ²` on every agent.
pub fn ring_alpha(rho: f64, sigma2: f64, n: usize) -> Result<RingRateBreakdown, RateError> {
    if n < 3 {
        return Err(RateError::InvalidParameter(format!(
            "ring needs N >= 3, got {n}"
        )));
    }
    if !(rho > 0.0 && sigma2 > 0.0) {
        return Err(RateError::InvalidParameter(
            "rho and sigma2 must be positive".into(),
        ));
    }
    let a = rho / (sigma2 + 2.0 * rho);
    let modes: Vec<RingMode> = (0..n)
        .map(|k| {
            let c = (2.0 * PI * k as f64 / n as f64).cos();
            let trace = (sigma2 + 2.0 * rho * (1.0 + c)) / (sigma2 + 2.0 * rho);
            let det = a * (1.0 + c);
            let roots = quadratic_roots(trace, det).map(|z| [z.re, z.im]);
            RingMode {
                k,
                trace,
                det,
                roots,
            }
        })
        .collect();
    // The mean mode carries the single unit eigenvalue; drop that root only.
    let mut alpha = 0.0_f64;
    for m in &modes {
        let mut roots = m.roots_complex().to_vec();
        if m.k == 0 {
            let unit = roots
                .iter()
                .enumerate()
                .min_by(|x, y| (*x.1 - 1.0).norm().total_cmp(&(*y.1 - 1.0).norm()))
                .map(|(i, _)| i)
                .expect("two roots");
            roots.remove(unit);
        }
        for z in roots {
            alpha = alpha.max(z.norm());
        }
    }

    let th = 2.0 * PI / n as f64;
    let cn = th.cos();
    let lo = ring_optimal_rho(sigma2, n);
    let hi = ring_upper_rho(sigma2, n);
    let (regime, closed_form) = if n < 4 || lo > hi {
        (RingRegime::Fallback, None)
    } else if rho <= lo {
        let root = quadratic_roots(1.0 + 2.0 * a * cn, a * (1.0 + cn))[0];
        (RingRegime::Low, Some(root.norm()))
    } else if rho <= hi {
        (RingRegime::Mid, Some((a * (1.0 + cn)).sqrt()))
    } else {
        (RingRegime::High, Some(2.0 * a))
    };
    Ok(RingRateBreakdown {
        regime,
        alpha,
        closed_form,
        modes,
    })
}

/// Minimizes `alpha(ρ)` over `[lo, hi]`: log-grid scan then golden section
/// around the best grid point.
pub fn optimize_rho_with<F>(
    lo: f64,
    hi: f64,
    execution: Execution,
    alpha: F,
) -> Result<(f64, f64), RateError>
where
    F: Fn(f64) -> Result<f64, RateError> + Sync + Send,
{
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(RateError::InvalidParameter(format!(
            "rho range must satisfy 0 < lo < hi, got [{lo}, {hi}]"
        )));
    }
    let grid = log_grid(lo, hi, RHO_GRID_POINTS);
    let values = execution.try_map_range(grid.len(), |i| alpha(grid[i]))?;
    let best = (0..grid.len())
        .min_by(|&i, &j| values[i].total_cmp(&values[j]))
        .expect("nonempty grid");
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(grid.len() - 1)];
    let (mut best_rho, mut best_alpha) = (grid[best], values[best]);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = alpha(x1)?;
    let mut f2 = alpha(x2)?;
    for (x, f) in [(x1, f1), (x2, f2)] {
        if f < best_alpha {
            (best_rho, best_alpha) = (x, f);
        }
    }
    while b - a > RHO_RELATIVE_WIDTH * 0.5 * (a + b) {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = alpha(x1)?;
            if f1 < best_alpha {
                (best_rho, best_alpha) = (x1, f1);
            }
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = alpha(x2)?;
            if f2 < best_alpha {
                (best_rho, best_alpha) = (x2, f2);
            }
        }
    }
    Ok((best_rho, best_alpha))
}

/// [`optimize_rho_with`] on [`compute_alpha`].
pub fn optimize_rho(
    cs: &ComponentStructure,
    hessians: &[DenseMatrix],
    lo: f64,
    hi: f64,
    execution: Execution,
) -> Result<(f64, f64), RateError> {
    optimize_rho_with(lo, hi, execution, |rho| compute_alpha(cs, hessians, rho))
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (l0, l1) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}
