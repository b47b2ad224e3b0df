//! Test-only spectral oracle, independent of the library's SVD path.
//!
//! The library computes singular triplets by cyclic Jacobi rotations on a
//! Gram matrix; this module reaches the same quantities through
//! Householder tridiagonalization followed by implicit-shift QL (the
//! classic EISPACK tred2/tql2 pair), so agreement between the two is a
//! meaningful cross-check rather than a tautology.
//!
//! The index-driven loops below transcribe the published algorithm
//! statement for statement.
#![allow(clippy::needless_range_loop)]
#![allow(clippy::manual_memcpy)]

/// Symmetric eigendecomposition; returns (eigenvalues, eigenvectors) with
/// eigenvalues in nonincreasing order and eigenvectors as matching columns.
pub fn eigh_sym(matrix: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = matrix.len();
    let mut z: Vec<Vec<f64>> = matrix.to_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut z, &mut d, &mut e);
    tql2(&mut d, &mut e, &mut z);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let mut vectors = vec![vec![0.0; n]; n];
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[row][col] = z[row][src];
        }
    }
    (values, vectors)
}

/// Householder reduction of a real symmetric matrix to tridiagonal form,
/// accumulating the orthogonal transform in `z`.
fn tred2(z: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) {
    let n = z.len();
    for j in 0..n {
        d[j] = z[n - 1][j];
    }

    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for v in d.iter().take(i) {
            scale += v.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = z[i - 1][j];
                z[i][j] = 0.0;
                z[j][i] = 0.0;
            }
        } else {
            for item in d.iter_mut().take(i) {
                *item /= scale;
                h += *item * *item;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for j in 0..i {
                e[j] = 0.0;
            }

            for j in 0..i {
                f = d[j];
                z[j][i] = f;
                g = e[j] + z[j][j] * f;
                for k in j + 1..i {
                    g += z[k][j] * d[k];
                    e[k] += z[k][j] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    z[k][j] -= f * e[k] + g * d[k];
                }
                d[j] = z[i - 1][j];
                z[i][j] = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..n - 1 {
        z[n - 1][i] = z[i][i];
        z[i][i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = z[k][i + 1] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += z[k][i + 1] * z[k][j];
                }
                for k in 0..=i {
                    z[k][j] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            z[k][i + 1] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = z[n - 1][j];
        z[n - 1][j] = 0.0;
    }
    z[n - 1][n - 1] = 1.0;
    e[0] = 0.0;
}

/// Implicit-shift QL iteration on the tridiagonal matrix, updating the
/// accumulated transform so `z` ends with the eigenvectors.
fn tql2(d: &mut [f64], e: &mut [f64], z: &mut [Vec<f64>]) {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0f64;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }

        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                assert!(iter < 60, "QL iteration failed to converge");

                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = (p * p + 1.0).sqrt();
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for item in d.iter_mut().take(n).skip(l + 2) {
                    *item -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = (p * p + e[i] * e[i]).sqrt();
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);

                    for row in z.iter_mut().take(n) {
                        h = row[i + 1];
                        row[i + 1] = s * row[i] + c * h;
                        row[i] = c * row[i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
}

/// Singular values of a rectangular matrix through the oracle eigensolver
/// on the smaller Gram matrix; nonincreasing, length `min(rows, cols)`.
pub fn singular_values(matrix: &[Vec<f64>]) -> Vec<f64> {
    let (gram, k) = smaller_gram(matrix);
    let (vals, _) = eigh_sym(&gram);
    vals.iter().take(k).map(|&v| v.max(0.0).sqrt()).collect()
}

/// Best rank-`l` reconstruction assembled from the oracle decomposition.
pub fn rank_l_reconstruction(matrix: &[Vec<f64>], l: usize) -> Vec<Vec<f64>> {
    let q = matrix.len();
    let m = matrix[0].len();
    let tall = m <= q;
    let (gram, _) = smaller_gram(matrix);
    let (vals, vecs) = eigh_sym(&gram);
    let small_dim = gram.len();

    let mut out = vec![vec![0.0; m]; q];
    for i in 0..l {
        let sigma = vals[i].max(0.0).sqrt();
        if sigma == 0.0 {
            continue;
        }
        let small: Vec<f64> = (0..small_dim).map(|a| vecs[a][i]).collect();
        // large-side vector = M * small / sigma (or M^T * small)
        let large_dim = if tall { q } else { m };
        let mut large = vec![0.0; large_dim];
        for (a, slot) in large.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (b, sv) in small.iter().enumerate() {
                acc += if tall { matrix[a][b] } else { matrix[b][a] } * sv;
            }
            *slot = acc / sigma;
        }
        for a in 0..q {
            for b in 0..m {
                let (u, v) = if tall {
                    (large[a], small[b])
                } else {
                    (small[a], large[b])
                };
                out[a][b] += sigma * u * v;
            }
        }
    }
    out
}

/// Spectral norm through the oracle eigensolver.
pub fn spectral_norm(matrix: &[Vec<f64>]) -> f64 {
    singular_values(matrix)[0]
}

pub fn frobenius_norm(matrix: &[Vec<f64>]) -> f64 {
    matrix
        .iter()
        .flat_map(|row| row.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

fn smaller_gram(matrix: &[Vec<f64>]) -> (Vec<Vec<f64>>, usize) {
    let q = matrix.len();
    let m = matrix[0].len();
    let k = q.min(m);
    if m <= q {
        let mut gram = vec![vec![0.0; m]; m];
        for row in matrix {
            for i in 0..m {
                for j in 0..m {
                    gram[i][j] += row[i] * row[j];
                }
            }
        }
        (gram, k)
    } else {
        let mut gram = vec![vec![0.0; q]; q];
        for i in 0..q {
            for j in 0..q {
                let mut acc = 0.0;
                for b in 0..m {
                    acc += matrix[i][b] * matrix[j][b];
                }
                gram[i][j] = acc;
            }
        }
        (gram, k)
    }
}
