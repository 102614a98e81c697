//! Dense real-matrix kernels used by the rate analysis.
//!
//! Matrices are plain `nalgebra::DMatrix<f64>`. Symmetric eigendecompositions
//! are delegated to nalgebra; the general real eigensolver (balancing,
//! Householder Hessenberg reduction, Francis double-shift QR) is implemented
//! here because the rate computations need the full complex spectrum of
//! non-symmetric matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

pub type DenseMatrix = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type ComplexScalar = Complex64;

/// Relative threshold separating "zero" from "nonzero" eigenvalues in
/// column-space and kernel decisions.
pub const RANK_TOL: f64 = 1e-10;

/// Relative asymmetry accepted by the symmetric routines.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Relative subdiagonal size at which the QR iteration deflates.
pub const QR_DEFLATION_TOL: f64 = 1e-12;

/// Maximum number of QR sweeps spent on a single eigenvalue.
pub const QR_MAX_SWEEPS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e}, tolerance {tolerance:e})")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("QR iteration did not converge after {sweeps} sweeps on eigenvalue {index}")]
    NoConvergence { index: usize, sweeps: usize },
    #[error("matrix is singular")]
    Singular,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Eigenvalues of a general real matrix, with algebraic multiplicity.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<ComplexScalar>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Eigenvalues sorted by real part, then imaginary part.
    pub fn sorted(&self) -> Vec<ComplexScalar> {
        let mut v = self.eigenvalues.clone();
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }
}

/// Symmetric eigendecomposition `a = V diag(w) Vᵀ` with ascending `w`.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

pub fn kron(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    a.kronecker(b)
}

pub fn max_abs(a: &DenseMatrix) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn ensure_square(a: &DenseMatrix) -> Result<(), LinalgError> {
    if a.nrows() != a.ncols() {
        return Err(LinalgError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(())
}

fn ensure_finite(a: &DenseMatrix) -> Result<(), LinalgError> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(LinalgError::NonFinite)
    }
}

fn ensure_symmetric(a: &DenseMatrix) -> Result<(), LinalgError> {
    ensure_square(a)?;
    ensure_finite(a)?;
    let n = a.nrows();
    let mut asym = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    let tolerance = SYMMETRY_TOL * max_abs(a).max(f64::MIN_POSITIVE);
    if asym > tolerance {
        return Err(LinalgError::NotSymmetric {
            asymmetry: asym,
            tolerance,
        });
    }
    Ok(())
}

pub fn sym_eig(a: &DenseMatrix) -> Result<SymEig, LinalgError> {
    ensure_symmetric(a)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(SymEig {
            values: Vec::new(),
            vectors: DenseMatrix::zeros(0, 0),
        });
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(SymEig { values, vectors })
}

/// Full complex spectrum of a general real square matrix.
pub fn real_eig(a: &DenseMatrix) -> Result<Spectrum, LinalgError> {
    ensure_square(a)?;
    ensure_finite(a)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(Spectrum {
            eigenvalues: Vec::new(),
        });
    }
    let mut h = a.clone();
    balance(&mut h);
    hessenberg_reduce(&mut h);
    let mut spectrum = hessenberg_qr(h)?;
    merge_defective_clusters(&mut spectrum.eigenvalues);
    Ok(spectrum)
}

/// Computed eigenvalues within `CLUSTER_FACTOR·sqrt(n·eps)` of each other,
/// relative to the spectral radius, are treated as one repeated eigenvalue.
pub const CLUSTER_FACTOR: f64 = 4.0;

/// Replaces each tight cluster by its centroid. A Jordan block of size two
/// splits under a backward error `δ` by about `sqrt(δ)`, with `δ` growing
/// like `n·eps`, while the centroid stays accurate to `δ`.
fn merge_defective_clusters(eigs: &mut [ComplexScalar]) {
    let radius = eigs.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let tol =
        CLUSTER_FACTOR * (eigs.len() as f64 * f64::EPSILON).sqrt() * radius.max(f64::MIN_POSITIVE);
    let mut clusters: Vec<(ComplexScalar, Vec<usize>)> = Vec::new();
    for (i, &z) in eigs.iter().enumerate() {
        match clusters.iter_mut().find(|(c, _)| (*c - z).norm() <= tol) {
            Some((c, members)) => {
                let m = members.len() as f64;
                *c = (*c * m + z) / (m + 1.0);
                members.push(i);
            }
            None => clusters.push((z, vec![i])),
        }
    }
    for (c, members) in clusters {
        if members.len() > 1 {
            for i in members {
                eigs[i] = c;
            }
        }
    }
}

pub fn sprad(a: &DenseMatrix) -> Result<f64, LinalgError> {
    Ok(real_eig(a)?.spectral_radius())
}

/// Moore–Penrose pseudo-inverse of a symmetric matrix.
pub fn pinv(a: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    let eig = sym_eig(a)?;
    let n = a.nrows();
    let tol = rank_threshold(&eig.values);
    let mut out = DenseMatrix::zeros(n, n);
    for (i, &w) in eig.values.iter().enumerate() {
        if w.abs() > tol {
            let v = eig.vectors.column(i);
            out += (v * v.transpose()) / w;
        }
    }
    Ok(out)
}

/// Orthogonal projector onto the column space of a symmetric PSD matrix.
pub fn colspace_projector(a: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    let eig = sym_eig(a)?;
    let n = a.nrows();
    let tol = rank_threshold(&eig.values);
    let mut out = DenseMatrix::zeros(n, n);
    for (i, &w) in eig.values.iter().enumerate() {
        if w > tol {
            let v = eig.vectors.column(i);
            out += v * v.transpose();
        }
    }
    Ok(out)
}

/// Orthonormal basis (as columns) of the null space of a symmetric matrix.
pub fn sym_null_space(a: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    let eig = sym_eig(a)?;
    let tol = rank_threshold(&eig.values);
    let cols: Vec<usize> = (0..eig.values.len())
        .filter(|&i| eig.values[i].abs() <= tol)
        .collect();
    Ok(DenseMatrix::from_fn(a.nrows(), cols.len(), |r, c| {
        eig.vectors[(r, cols[c])]
    }))
}

/// Numerical rank from singular values, relative threshold `RANK_TOL`.
pub fn rank(a: &DenseMatrix) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.clone().singular_values();
    let smax = sv.iter().fold(0.0_f64, |m, v| m.max(*v));
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * smax).count()
}

/// Right singular vectors for the `count` smallest singular values of `a`.
pub fn smallest_right_singular_vectors(a: &DenseMatrix, count: usize) -> DenseMatrix {
    let n = a.ncols();
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    // Thin SVD of a wide matrix omits part of the null space; pad with a full
    // decomposition of aᵀa in that case.
    if svd.singular_values.len() < n {
        let gram = a.transpose() * a;
        let eig = SymmetricEigen::new((&gram + gram.transpose()) * 0.5);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        return DenseMatrix::from_fn(n, count, |r, c| eig.eigenvectors[(r, idx[c])]);
    }
    DenseMatrix::from_fn(n, count, |r, c| v_t[(order[c], r)])
}

fn rank_threshold(values: &[f64]) -> f64 {
    RANK_TOL * values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Diagonal similarity scaling by powers of two to equalise row and column norms.
fn balance(a: &mut DenseMatrix) {
    const RADIX: f64 = 2.0;
    let n = a.nrows();
    let sqrdx = RADIX * RADIX;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= sqrdx;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= sqrdx;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let g = 1.0 / f;
                for j in 0..n {
                    a[(i, j)] *= g;
                }
                for j in 0..n {
                    a[(j, i)] *= f;
                }
            }
        }
    }
}

/// In-place Householder reduction to upper Hessenberg form.
fn hessenberg_reduce(a: &mut DenseMatrix) {
    let n = a.nrows();
    if n < 3 {
        return;
    }
    for k in 0..n - 2 {
        let len = n - k - 1;
        let mut v: Vec<f64> = (0..len).map(|i| a[(k + 1 + i, k)]).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            continue;
        }
        for x in v.iter_mut() {
            *x /= vnorm;
        }
        // A <- (I - 2vvᵀ) A on rows k+1..n
        for j in 0..n {
            let dot: f64 = (0..len).map(|i| v[i] * a[(k + 1 + i, j)]).sum();
            for i in 0..len {
                a[(k + 1 + i, j)] -= 2.0 * v[i] * dot;
            }
        }
        // A <- A (I - 2vvᵀ) on columns k+1..n
        for i in 0..n {
            let dot: f64 = (0..len).map(|j| a[(i, k + 1 + j)] * v[j]).sum();
            for j in 0..len {
                a[(i, k + 1 + j)] -= 2.0 * dot * v[j];
            }
        }
        for i in (k + 2)..n {
            a[(i, k)] = 0.0;
        }
    }
}

/// Eigenvalues of an upper Hessenberg matrix by Francis double-shift QR with
/// 1×1 / 2×2 deflation. Complex pairs are extracted from the trailing 2×2
/// blocks, so the sweep itself stays in real arithmetic.
fn hessenberg_qr(mut a: DenseMatrix) -> Result<Spectrum, LinalgError> {
    let n = a.nrows();
    let mut wr = vec![0.0; n];
    let mut wi = vec![0.0; n];
    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[(i, j)].abs();
        }
    }
    let mut t = 0.0;
    // `nn` is one past the last active row.
    let mut nn = n;
    while nn >= 1 {
        let mut its = 0usize;
        loop {
            let last = nn - 1;
            // Look for a negligible subdiagonal element.
            let mut l = 0;
            for ll in (1..=last).rev() {
                let mut s = a[(ll - 1, ll - 1)].abs() + a[(ll, ll)].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[(ll, ll - 1)].abs() <= QR_DEFLATION_TOL * s {
                    a[(ll, ll - 1)] = 0.0;
                    l = ll;
                    break;
                }
            }
            let mut x = a[(last, last)];
            if l == last {
                wr[last] = x + t;
                wi[last] = 0.0;
                nn -= 1;
                break;
            }
            let mut y = a[(last - 1, last - 1)];
            let mut w = a[(last, last - 1)] * a[(last - 1, last)];
            if l + 1 == last {
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let mut z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    z = p + z.copysign(p);
                    wr[last - 1] = x + z;
                    wr[last] = x + z;
                    if z != 0.0 {
                        wr[last] = x - w / z;
                    }
                    wi[last - 1] = 0.0;
                    wi[last] = 0.0;
                } else {
                    wr[last - 1] = x + p;
                    wr[last] = x + p;
                    wi[last - 1] = -z;
                    wi[last] = z;
                }
                nn -= 2;
                break;
            }
            if its == QR_MAX_SWEEPS {
                return Err(LinalgError::NoConvergence {
                    index: last,
                    sweeps: its,
                });
            }
            if its > 0 && its.is_multiple_of(10) {
                // Exceptional shift.
                t += x;
                for i in 0..=last {
                    a[(i, i)] -= x;
                }
                let s = a[(last, last - 1)].abs() + a[(last - 1, last - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            // Find two consecutive small subdiagonal elements.
            let mut m = last - 2;
            let (mut p, mut q, mut r);
            loop {
                let z = a[(m, m)];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / a[(m + 1, m)] + a[(m, m + 1)];
                q = a[(m + 1, m + 1)] - z - rr - ss;
                r = a[(m + 2, m + 1)];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[(m, m - 1)].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[(m - 1, m - 1)].abs() + z.abs() + a[(m + 1, m + 1)].abs());
                if u <= f64::EPSILON * v {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=last {
                a[(i, i - 2)] = 0.0;
                if i != m + 2 {
                    a[(i, i - 3)] = 0.0;
                }
            }
            // Double-shift QR step on rows l..=last, columns m..=last.
            let mut k = m;
            while k < last {
                if k != m {
                    p = a[(k, k - 1)];
                    q = a[(k + 1, k - 1)];
                    r = if k != last - 1 {
                        a[(k + 2, k - 1)]
                    } else {
                        0.0
                    };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = (p * p + q * q + r * r).sqrt().copysign(p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            a[(k, k - 1)] = -a[(k, k - 1)];
                        }
                    } else {
                        a[(k, k - 1)] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    let z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=last {
                        let mut pp = a[(k, j)] + q * a[(k + 1, j)];
                        if k != last - 1 {
                            pp += r * a[(k + 2, j)];
                            a[(k + 2, j)] -= pp * z;
                        }
                        a[(k + 1, j)] -= pp * y;
                        a[(k, j)] -= pp * x;
                    }
                    let mmin = last.min(k + 3);
                    for i in l..=mmin {
                        let mut pp = x * a[(i, k)] + y * a[(i, k + 1)];
                        if k != last - 1 {
                            pp += z * a[(i, k + 2)];
                            a[(i, k + 2)] -= pp * r;
                        }
                        a[(i, k + 1)] -= pp * q;
                        a[(i, k)] -= pp;
                    }
                }
                k += 1;
            }
        }
    }
    Ok(Spectrum {
        eigenvalues: wr
            .into_iter()
            .zip(wi)
            .map(|(re, im)| Complex64::new(re, im))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &DenseMatrix, b: &DenseMatrix, tol: f64) -> bool {
        a.shape() == b.shape() && (a - b).iter().all(|v| v.abs() <= tol)
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn kron_identity_and_stack() {
        let i2 = DenseMatrix::identity(2, 2);
        let i3 = DenseMatrix::identity(3, 3);
        assert_eq!(kron(&i2, &i3), DenseMatrix::identity(6, 6));
        let ones = DenseMatrix::from_element(2, 1, 1.0);
        let stacked = kron(&ones, &i2);
        assert_eq!(stacked.shape(), (4, 2));
        assert_eq!(stacked.rows(0, 2).into_owned(), i2);
        assert_eq!(stacked.rows(2, 2).into_owned(), i2);
    }

    #[test]
    fn sym_eig_examples() {
        let e = sym_eig(&DenseMatrix::identity(3, 3)).unwrap();
        assert!(e.values.iter().all(|&w| (w - 1.0).abs() < 1e-14));
        let j2 = DenseMatrix::from_element(2, 2, 0.5);
        let e = sym_eig(&j2).unwrap();
        assert!(e.values[0].abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sym_eig_rejects_asymmetric() {
        let a = DenseMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(sym_eig(&a), Err(LinalgError::NotSymmetric { .. })));
    }

    #[test]
    fn real_eig_diagonal_and_rotation() {
        let d = DenseMatrix::from_diagonal(&Vector::from_vec(vec![0.5, 0.75]));
        let s = real_eig(&d).unwrap().sorted();
        assert!((s[0].re - 0.5).abs() < 1e-14 && (s[1].re - 0.75).abs() < 1e-14);

        let rot = DenseMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let s = real_eig(&rot).unwrap().sorted();
        assert!(s[0].re.abs() < 1e-14 && (s[0].im + 1.0).abs() < 1e-14);
        assert!(s[1].re.abs() < 1e-14 && (s[1].im - 1.0).abs() < 1e-14);
    }

    #[test]
    fn real_eig_companion_matrix_roots() {
        // Companion matrix of (x-1)(x-2)(x-3)(x^2+1).
        // x^5 - 6x^4 + 12x^3 - 12x^2 + 11x - 6
        let coeffs = [-6.0, 11.0, -12.0, 12.0, -6.0];
        let mut c = DenseMatrix::zeros(5, 5);
        for i in 1..5 {
            c[(i, i - 1)] = 1.0;
        }
        for i in 0..5 {
            c[(i, 4)] = -coeffs[i];
        }
        let s = real_eig(&c).unwrap().sorted();
        let expected = [
            Complex64::new(0.0, -1.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(2.0, 0.0),
            Complex64::new(3.0, 0.0),
        ];
        for (got, want) in s.iter().zip(expected.iter()) {
            assert!((got - want).norm() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn real_eig_rejects_non_finite() {
        let a = DenseMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert_eq!(real_eig(&a), Err(LinalgError::NonFinite));
    }

    #[test]
    fn sprad_examples() {
        assert!((sprad(&DenseMatrix::identity(4, 4)).unwrap() - 1.0).abs() < 1e-14);
        let a = DenseMatrix::identity(3, 3) * 0.3;
        assert!((sprad(&a).unwrap() - 0.3).abs() < 1e-14);
    }

    #[test]
    fn pinv_examples() {
        assert!(close(
            &pinv(&DenseMatrix::identity(3, 3)).unwrap(),
            &DenseMatrix::identity(3, 3),
            1e-14
        ));
        let d = DenseMatrix::from_diagonal(&Vector::from_vec(vec![2.0, 0.0]));
        let want = DenseMatrix::from_diagonal(&Vector::from_vec(vec![0.5, 0.0]));
        assert!(close(&pinv(&d).unwrap(), &want, 1e-14));
    }

    #[test]
    fn colspace_projector_examples() {
        let i4 = DenseMatrix::identity(4, 4);
        assert!(close(&colspace_projector(&i4).unwrap(), &i4, 1e-14));
        let z = DenseMatrix::zeros(3, 3);
        assert_eq!(colspace_projector(&z).unwrap(), z);
    }

    #[test]
    fn rank_counts_independent_columns() {
        let a = DenseMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert_eq!(rank(&a), 1);
        assert_eq!(rank(&DenseMatrix::identity(4, 4)), 4);
    }

    fn random_symmetric_low_rank(n: usize, r: usize, seed: u64) -> DenseMatrix {
        let b = random_matrix(n, r, seed);
        let d = DenseMatrix::from_diagonal(&Vector::from_fn(r, |i, _| {
            if i % 2 == 0 {
                1.0 + i as f64
            } else {
                -(0.5 + i as f64)
            }
        }));
        let a = &b * d * b.transpose();
        (&a + a.transpose()) * 0.5
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn kron_mixed_product(seed in 0u64..10_000, m in 1usize..4, n in 1usize..4, p in 1usize..4) {
            let a = random_matrix(m, n, seed);
            let b = random_matrix(p, m, seed + 1);
            let c = random_matrix(n, p, seed + 2);
            let d = random_matrix(m, n, seed + 3);
            let lhs = kron(&a, &b) * kron(&c, &d);
            let rhs = kron(&(&a * &c), &(&b * &d));
            prop_assert!(close(&lhs, &rhs, 1e-10));
        }

        #[test]
        fn sym_eig_reconstructs(seed in 0u64..10_000, n in 1usize..12) {
            let b = random_matrix(n, n, seed);
            let a = (&b + b.transpose()) * 0.5;
            let e = sym_eig(&a).unwrap();
            let w = DenseMatrix::from_diagonal(&Vector::from_vec(e.values.clone()));
            let rec = &e.vectors * w * e.vectors.transpose();
            let scale = a.norm().max(1e-300);
            prop_assert!((&a - rec).norm() <= 1e-9 * scale);
            let gram = e.vectors.transpose() * &e.vectors;
            prop_assert!(close(&gram, &DenseMatrix::identity(n, n), 1e-10));
            prop_assert!(e.values.windows(2).all(|p| p[0] <= p[1]));
        }

        #[test]
        fn real_eig_matches_sym_eig(seed in 0u64..10_000, n in 1usize..16) {
            let b = random_matrix(n, n, seed);
            let a = (&b + b.transpose()) * 0.5;
            let sym = sym_eig(&a).unwrap().values;
            let gen = real_eig(&a).unwrap().sorted();
            prop_assert_eq!(gen.len(), n);
            for (g, s) in gen.iter().zip(sym.iter()) {
                prop_assert!((g.re - s).abs() <= 1e-8 && g.im.abs() <= 1e-8);
            }
        }

        #[test]
        fn real_eig_trace_and_det(seed in 0u64..10_000, n in 1usize..20) {
            let a = random_matrix(n, n, seed);
            let spec = real_eig(&a).unwrap();
            let sum: Complex64 = spec.eigenvalues.iter().sum();
            let prod: Complex64 = spec.eigenvalues.iter().product();
            prop_assert!((sum.re - a.trace()).abs() <= 1e-9 * (1.0 + a.norm()));
            prop_assert!(sum.im.abs() <= 1e-9);
            let det = a.clone().determinant();
            prop_assert!((prod.re - det).abs() <= 1e-8 * (1.0 + det.abs()));
        }

        #[test]
        fn pinv_penrose_identities(seed in 0u64..10_000, n in 2usize..10, r in 1usize..5) {
            let r = r.min(n - 1);
            let a = random_symmetric_low_rank(n, r, seed);
            let x = pinv(&a).unwrap();
            let tol = 1e-8 * (1.0 + a.norm()) * (1.0 + x.norm());
            prop_assert!(close(&(&a * &x * &a), &a, tol));
            prop_assert!(close(&(&x * &a * &x), &x, tol));
            let ax = &a * &x;
            let xa = &x * &a;
            prop_assert!(close(&ax, &ax.transpose(), tol));
            prop_assert!(close(&xa, &xa.transpose(), tol));
        }

        #[test]
        fn colspace_projector_is_orthogonal_projector(seed in 0u64..10_000, n in 2usize..10, r in 1usize..6) {
            let r = r.min(n);
            let b = random_matrix(n, r, seed);
            let a = &b * b.transpose();
            let a = (&a + a.transpose()) * 0.5;
            let x = colspace_projector(&a).unwrap();
            prop_assert!(close(&(&x * &x), &x, 1e-10));
            prop_assert!(close(&x, &x.transpose(), 1e-10));
            prop_assert!(close(&(&x * &a), &a, 1e-10 * (1.0 + a.norm())));
        }
    }
}
