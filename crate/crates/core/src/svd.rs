//! Truncated singular value decomposition via one-sided Gram
//! eigendecomposition.
//!
//! The decomposition forms the Gram matrix on the smaller side of the
//! input (`MᵀM` when the matrix is tall, `MMᵀ` when it is wide) and
//! diagonalizes it with cyclic Jacobi rotations. Singular values are the
//! square roots of the eigenvalues; the vectors on the larger side follow
//! from one matrix-vector product per kept triplet. For the flat-field
//! stacks this library targets, the Gram side is the channel count, so the
//! dense eigenproblem stays small no matter how many flat-fields are
//! stacked.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{invalid, Result};

/// Off-diagonal decay tolerance for the Jacobi sweeps, relative to the
/// Frobenius norm of the Gram matrix.
const JACOBI_TOL: f64 = 1e-12;
/// Maximum number of full Jacobi sweeps.
const JACOBI_MAX_SWEEPS: usize = 100;

/// The leading singular triplets of a matrix.
///
/// Columns of `left_vectors` and `right_vectors` are orthonormal; the
/// singular values are nonincreasing and nonnegative. The sign convention
/// makes each right vector's entry of largest magnitude positive so the
/// decomposition is deterministic.
#[derive(Debug, Clone)]
pub struct SingularTriplets {
    left_vectors: Array2<f64>,
    singular_values: Vec<f64>,
    right_vectors: Array2<f64>,
}

impl SingularTriplets {
    pub fn left_vectors(&self) -> &Array2<f64> {
        &self.left_vectors
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn right_vectors(&self) -> &Array2<f64> {
        &self.right_vectors
    }

    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// The rank-`l` reconstruction `Σ σᵢ Uᵢ Vᵢᵀ` over the stored triplets.
    pub fn reconstruct(&self) -> Array2<f64> {
        let q = self.left_vectors.dim().0;
        let m = self.right_vectors.dim().0;
        let mut out = Array2::zeros((q, m));
        for i in 0..self.rank() {
            let s = self.singular_values[i];
            for a in 0..q {
                let ua = s * self.left_vectors[[a, i]];
                for b in 0..m {
                    out[[a, b]] += ua * self.right_vectors[[b, i]];
                }
            }
        }
        out
    }
}

/// Leading `l` singular triplets of `matrix`.
///
/// Requires `1 <= l <= min(rows, cols)` and finite entries. By the
/// Eckart-Young-Mirsky theorem the reconstruction from the result is the
/// best rank-`l` approximation in both the spectral and Frobenius norms.
pub fn truncated_svd(matrix: ArrayView2<'_, f64>, l: usize) -> Result<SingularTriplets> {
    let (q, m) = matrix.dim();
    let max_rank = q.min(m);
    if l == 0 || l > max_rank {
        return Err(invalid(format!(
            "truncation rank {l} out of range 1..={max_rank}"
        )));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(invalid("matrix entries must be finite"));
    }

    // Diagonalize the Gram matrix on the smaller side.
    let tall = m <= q;
    let gram = if tall { gram_t(matrix) } else { gram(matrix) };
    let (eigvals, eigvecs) = jacobi_eigh(gram);

    let k = max_rank;
    let sigma: Vec<f64> = eigvals.iter().take(k).map(|&e| e.max(0.0).sqrt()).collect();

    // Small-side vectors come straight from the eigenvectors; large-side
    // vectors from one product per triplet, with orthonormal completion
    // where the singular value is numerically zero.
    let mut small = Array2::zeros((if tall { m } else { q }, l));
    for i in 0..l {
        for a in 0..small.dim().0 {
            small[[a, i]] = eigvecs[[a, i]];
        }
    }
    // Below this, a singular value is indistinguishable from zero at Gram
    // precision and dividing by it would amplify eigenvector noise, so the
    // matching large-side vector is filled by orthonormal completion.
    let cutoff = sigma[0] * 1e-8 * (small_dim(q, m) as f64).sqrt();
    let large_dim = if tall { q } else { m };
    let mut large = Array2::zeros((large_dim, l));
    for i in 0..l {
        if sigma[i] > cutoff && sigma[i] > 0.0 {
            for a in 0..large_dim {
                let mut acc = 0.0;
                for b in 0..small.dim().0 {
                    acc += if tall {
                        matrix[[a, b]] * small[[b, i]]
                    } else {
                        matrix[[b, a]] * small[[b, i]]
                    };
                }
                large[[a, i]] = acc / sigma[i];
            }
        } else {
            complete_orthonormal(&mut large, i);
        }
    }

    let (mut left, mut right) = if tall { (large, small) } else { (small, large) };

    // Sign convention: largest-magnitude entry of each right vector is
    // positive; the left vector follows.
    for i in 0..l {
        let mut best = 0usize;
        let mut best_abs = 0.0;
        for b in 0..right.dim().0 {
            let a = right[[b, i]].abs();
            if a > best_abs {
                best_abs = a;
                best = b;
            }
        }
        if right[[best, i]] < 0.0 {
            for b in 0..right.dim().0 {
                right[[b, i]] = -right[[b, i]];
            }
            for a in 0..left.dim().0 {
                left[[a, i]] = -left[[a, i]];
            }
        }
    }

    Ok(SingularTriplets {
        left_vectors: left,
        singular_values: sigma[..l].to_vec(),
        right_vectors: right,
    })
}

fn small_dim(q: usize, m: usize) -> usize {
    q.min(m)
}

/// All singular values of `matrix`, nonincreasing, length `min(rows, cols)`.
///
/// Squaring into the Gram matrix limits the resolution of tiny singular
/// values to roughly `sqrt(eps) * sigma_1`. When the spectrum has such a
/// cliff, the leading triplets are deflated and the tail recomputed from
/// the residual, so values far below `sigma_1` come out accurate relative
/// to the residual's own scale.
pub fn singular_values(matrix: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(invalid("matrix entries must be finite"));
    }
    Ok(singular_values_refined(matrix.to_owned(), 0))
}

fn singular_values_refined(matrix: Array2<f64>, depth: usize) -> Vec<f64> {
    const MAX_DEPTH: usize = 3;
    let (q, m) = matrix.dim();
    let k = q.min(m);
    let view = matrix.view();
    let gram = if m <= q { gram_t(view) } else { gram(view) };
    let gram_dim = gram.dim().0;
    let (eigvals, _) = jacobi_eigh(gram);
    let lambda_1 = eigvals[0].max(0.0);

    // Eigenvalues below the Gram noise floor are unresolved; deflate the
    // resolved triplets and recurse on the residual.
    let floor = lambda_1 * 1e-13 * gram_dim as f64;
    let resolved = eigvals
        .iter()
        .take(k)
        .filter(|&&e| e > floor && e > 0.0)
        .count();
    if depth < MAX_DEPTH && lambda_1 > 0.0 && resolved > 0 && resolved < k {
        if let Ok(triplets) = truncated_svd(view, resolved) {
            let residual = &matrix - &triplets.reconstruct();
            let tail = singular_values_refined(residual, depth + 1);
            let mut out = triplets.singular_values().to_vec();
            out.extend_from_slice(&tail[..k - resolved]);
            for i in 1..out.len() {
                out[i] = out[i].min(out[i - 1]);
            }
            return out;
        }
    }
    eigvals.iter().take(k).map(|&e| e.max(0.0).sqrt()).collect()
}

fn gram_t(matrix: ArrayView2<'_, f64>) -> Array2<f64> {
    // MᵀM, (cols, cols)
    let (q, m) = matrix.dim();
    let mut g = Array2::zeros((m, m));
    for a in 0..q {
        for i in 0..m {
            let v = matrix[[a, i]];
            if v != 0.0 {
                for j in i..m {
                    g[[i, j]] += v * matrix[[a, j]];
                }
            }
        }
    }
    for i in 0..m {
        for j in 0..i {
            g[[i, j]] = g[[j, i]];
        }
    }
    g
}

fn gram(matrix: ArrayView2<'_, f64>) -> Array2<f64> {
    // MMᵀ, (rows, rows)
    let (q, m) = matrix.dim();
    let mut g = Array2::zeros((q, q));
    for i in 0..q {
        for j in i..q {
            let mut acc = 0.0;
            for b in 0..m {
                acc += matrix[[i, b]] * matrix[[j, b]];
            }
            g[[i, j]] = acc;
            g[[j, i]] = acc;
        }
    }
    g
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Returns eigenvalues in nonincreasing order with matching eigenvector
/// columns. Sweeps stop when the off-diagonal Frobenius norm falls below
/// `JACOBI_TOL` times the matrix norm or after `JACOBI_MAX_SWEEPS` sweeps.
fn jacobi_eigh(mut a: Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.dim().0;
    let mut v: Array2<f64> = Array2::eye(n);
    if n == 1 {
        return (vec![a[[0, 0]]], v);
    }

    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = JACOBI_TOL * norm.max(f64::MIN_POSITIVE);

    // After the stopping tolerance is met, one extra sweep exploits the
    // quadratic convergence to polish eigenvector orthogonality.
    let mut polish = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off = off_diagonal_norm(&a);
        if off <= tol {
            if polish {
                break;
            }
            polish = true;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq.abs() <= tol / (n as f64) {
                    continue;
                }
                let app = a[[p, p]];
                let aqq = a[[q, q]];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].partial_cmp(&a[[i, i]]).unwrap());
    let eigvals: Vec<f64> = order.iter().map(|&i| a[[i, i]]).collect();
    let mut vecs = Array2::zeros((n, n));
    for (col, &i) in order.iter().enumerate() {
        for row in 0..n {
            vecs[[row, col]] = v[[row, i]];
        }
    }
    (eigvals, vecs)
}

fn off_diagonal_norm(a: &Array2<f64>) -> f64 {
    let n = a.dim().0;
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += a[[i, j]] * a[[i, j]];
            }
        }
    }
    acc.sqrt()
}

/// Fill column `col` with a unit vector orthogonal to columns 0..col.
fn complete_orthonormal(vectors: &mut Array2<f64>, col: usize) {
    let dim = vectors.dim().0;
    for candidate in 0..dim {
        let mut v = Array1::zeros(dim);
        v[candidate] = 1.0;
        for j in 0..col {
            let mut dot = 0.0;
            for a in 0..dim {
                dot += v[a] * vectors[[a, j]];
            }
            for a in 0..dim {
                v[a] -= dot * vectors[[a, j]];
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.5 {
            for a in 0..dim {
                vectors[[a, col]] = v[a] / norm;
            }
            return;
        }
    }
    // Unreachable for col < dim: the existing columns span at most `col`
    // dimensions, so some canonical vector keeps norm >= sqrt(1 - col/dim).
    panic!("orthonormal completion failed");
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use ndarray::Array2;

    fn random_matrix(rng: &mut Rng, q: usize, m: usize) -> Array2<f64> {
        Array2::from_shape_fn((q, m), |_| rng.uniform_in(-1.0, 1.0))
    }

    #[test]
    fn rank_one_outer_product() {
        // 5 * u v^T with unit u, v
        let u = [0.6, 0.8];
        let v = [1.0 / 3f64.sqrt(); 3];
        let m = Array2::from_shape_fn((2, 3), |(i, j)| 5.0 * u[i] * v[j]);
        let t = truncated_svd(m.view(), 1).unwrap();
        assert!((t.singular_values()[0] - 5.0).abs() < 1e-12);
        let rec = t.reconstruct();
        for (a, b) in rec.iter().zip(m.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_matrix() {
        let mut m = Array2::zeros((3, 3));
        m[[0, 0]] = 3.0;
        m[[1, 1]] = 2.0;
        m[[2, 2]] = 1.0;
        let t = truncated_svd(m.view(), 2).unwrap();
        assert!((t.singular_values()[0] - 3.0).abs() < 1e-12);
        assert!((t.singular_values()[1] - 2.0).abs() < 1e-12);
        let rec = t.reconstruct();
        let mut expect = Array2::zeros((3, 3));
        expect[[0, 0]] = 3.0;
        expect[[1, 1]] = 2.0;
        for (a, b) in rec.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn vectors_are_orthonormal() {
        let mut rng = Rng::seed_from_u64(99);
        for &(q, m) in &[(8usize, 5usize), (5, 8), (12, 12)] {
            let mat = random_matrix(&mut rng, q, m);
            let l = q.min(m);
            let t = truncated_svd(mat.view(), l).unwrap();
            for i in 0..l {
                for j in 0..l {
                    let want = if i == j { 1.0 } else { 0.0 };
                    let mut du = 0.0;
                    for a in 0..q {
                        du += t.left_vectors()[[a, i]] * t.left_vectors()[[a, j]];
                    }
                    let mut dv = 0.0;
                    for b in 0..m {
                        dv += t.right_vectors()[[b, i]] * t.right_vectors()[[b, j]];
                    }
                    assert!((du - want).abs() < 1e-10, "U not orthonormal: {du}");
                    assert!((dv - want).abs() < 1e-10, "V not orthonormal: {dv}");
                }
            }
        }
    }

    #[test]
    fn full_rank_reconstruction_is_exact() {
        let mut rng = Rng::seed_from_u64(12);
        let mat = random_matrix(&mut rng, 6, 4);
        let t = truncated_svd(mat.view(), 4).unwrap();
        let rec = t.reconstruct();
        for (a, b) in rec.iter().zip(mat.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn wide_and_tall_agree_on_singular_values() {
        let mut rng = Rng::seed_from_u64(4);
        let mat = random_matrix(&mut rng, 7, 4);
        let sv_tall = singular_values(mat.view()).unwrap();
        let sv_wide = singular_values(mat.t()).unwrap();
        assert_eq!(sv_tall.len(), sv_wide.len());
        for (a, b) in sv_tall.iter().zip(sv_wide.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn deterministic_signs() {
        let mut rng = Rng::seed_from_u64(8);
        let mat = random_matrix(&mut rng, 6, 3);
        let t1 = truncated_svd(mat.view(), 3).unwrap();
        let t2 = truncated_svd(mat.view(), 3).unwrap();
        for (a, b) in t1.right_vectors().iter().zip(t2.right_vectors().iter()) {
            assert_eq!(a, b);
        }
        // negating the matrix flips left vectors only, values unchanged
        let neg = mat.mapv(|v| -v);
        let t3 = truncated_svd(neg.view(), 3).unwrap();
        for (a, b) in t1.singular_values().iter().zip(t3.singular_values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_singular_values_get_completed_vectors() {
        // rank-1 matrix, ask for 2 triplets
        let m = Array2::from_shape_fn((4, 3), |(i, j)| (1.0 + i as f64) * (1.0 + j as f64));
        let t = truncated_svd(m.view(), 2).unwrap();
        assert!(t.singular_values()[1].abs() < 1e-10 * t.singular_values()[0]);
        let mut norm = 0.0;
        let mut dot = 0.0;
        for a in 0..4 {
            norm += t.left_vectors()[[a, 1]] * t.left_vectors()[[a, 1]];
            dot += t.left_vectors()[[a, 0]] * t.left_vectors()[[a, 1]];
        }
        assert!((norm - 1.0).abs() < 1e-10);
        assert!(dot.abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_rank_and_nonfinite() {
        let m = Array2::from_elem((3, 2), 1.0);
        assert!(truncated_svd(m.view(), 0).is_err());
        assert!(truncated_svd(m.view(), 3).is_err());
        let mut bad = m.clone();
        bad[[0, 0]] = f64::NAN;
        assert!(truncated_svd(bad.view(), 1).is_err());
    }
}
