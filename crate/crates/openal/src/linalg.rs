//! Small dense linear algebra helpers for the cluster statistics.
//!
//! Matrices are row-major `Vec<f64>` of length d*d. Dimensions here are
//! embedding-sized (tens), so plain loops are fine.

/// Arithmetic mean of a non-empty set of equal-length vectors.
pub fn mean(vectors: &[&[f64]]) -> Vec<f64> {
    let d = vectors[0].len();
    let mut m = vec![0.0; d];
    for v in vectors {
        for i in 0..d {
            m[i] += v[i];
        }
    }
    let n = vectors.len() as f64;
    for x in &mut m {
        *x /= n;
    }
    m
}

/// Sample covariance with divisor n-1. A single vector yields the zero matrix.
pub fn sample_covariance(vectors: &[&[f64]], mean: &[f64]) -> Vec<f64> {
    let d = mean.len();
    let mut cov = vec![0.0; d * d];
    let n = vectors.len();
    if n < 2 {
        return cov;
    }
    for v in vectors {
        for i in 0..d {
            let di = v[i] - mean[i];
            for j in i..d {
                cov[i * d + j] += di * (v[j] - mean[j]);
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            cov[i * d + j] /= denom;
            cov[j * d + i] = cov[i * d + j];
        }
    }
    cov
}

pub fn trace(m: &[f64], d: usize) -> f64 {
    (0..d).map(|i| m[i * d + i]).sum()
}

/// Cholesky factorization of a symmetric positive definite matrix.
/// Returns the lower factor L with A = L Lᵀ, or None if a pivot fails.
pub fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

/// Inverse of an SPD matrix via its Cholesky factor.
pub fn spd_inverse(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let l = cholesky(a, d)?;
    // invert L by forward substitution, column by column
    let mut linv = vec![0.0; d * d];
    for col in 0..d {
        for i in col..d {
            let mut s = if i == col { 1.0 } else { 0.0 };
            for k in col..i {
                s -= l[i * d + k] * linv[k * d + col];
            }
            linv[i * d + col] = s / l[i * d + i];
        }
    }
    // A⁻¹ = L⁻ᵀ L⁻¹
    let mut inv = vec![0.0; d * d];
    for i in 0..d {
        for j in i..d {
            let mut s = 0.0;
            for k in j..d {
                s += linv[k * d + i] * linv[k * d + j];
            }
            inv[i * d + j] = s;
            inv[j * d + i] = s;
        }
    }
    Some(inv)
}

/// Quadratic form xᵀ M x for symmetric M.
pub fn quadratic_form(m: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    let mut total = 0.0;
    for i in 0..d {
        let mut row = 0.0;
        for j in 0..d {
            row += m[i * d + j] * x[j];
        }
        total += x[i] * row;
    }
    total
}

pub fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let diff = x - y;
            diff * diff
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_covariance_of_square() {
        let pts: Vec<Vec<f64>> = vec![
            vec![0.0, 0.0],
            vec![2.0, 0.0],
            vec![0.0, 2.0],
            vec![2.0, 2.0],
        ];
        let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
        let m = mean(&refs);
        assert_eq!(m, vec![1.0, 1.0]);
        let cov = sample_covariance(&refs, &m);
        let expected = 4.0 / 3.0;
        assert!((cov[0] - expected).abs() < 1e-12);
        assert!((cov[3] - expected).abs() < 1e-12);
        assert!(cov[1].abs() < 1e-12);
    }

    #[test]
    fn spd_inverse_times_matrix_is_identity() {
        let d = 3;
        let a = vec![4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0];
        let inv = spd_inverse(&a, d).unwrap();
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += inv[i * d + k] * a[k * d + j];
                }
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((s - expected).abs() < 1e-10, "entry ({i},{j}) = {s}");
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = vec![1.0, 2.0, 2.0, 1.0];
        assert!(cholesky(&a, 2).is_none());
    }
}
