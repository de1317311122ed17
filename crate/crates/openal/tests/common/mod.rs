//! Shared independent oracles for the integration suites. Nothing here may
//! call the implementation paths it is used to verify.

use openal::linalg::squared_euclidean;

/// Gaussian elimination with partial pivoting; solves A x = b.
pub fn solve_linear(a: &[f64], b: &[f64], d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * (d + 1)];
    for i in 0..d {
        for j in 0..d {
            m[i * (d + 1) + j] = a[i * d + j];
        }
        m[i * (d + 1) + d] = b[i];
    }
    for col in 0..d {
        let pivot = (col..d)
            .max_by(|&i, &j| {
                m[i * (d + 1) + col]
                    .abs()
                    .partial_cmp(&m[j * (d + 1) + col].abs())
                    .unwrap()
            })
            .unwrap();
        if pivot != col {
            for j in 0..=d {
                m.swap(col * (d + 1) + j, pivot * (d + 1) + j);
            }
        }
        let p = m[col * (d + 1) + col];
        for row in (col + 1)..d {
            let factor = m[row * (d + 1) + col] / p;
            for j in col..=d {
                m[row * (d + 1) + j] -= factor * m[col * (d + 1) + j];
            }
        }
    }
    let mut x = vec![0.0; d];
    for row in (0..d).rev() {
        let mut s = m[row * (d + 1) + d];
        for j in (row + 1)..d {
            s -= m[row * (d + 1) + j] * x[j];
        }
        x[row] = s / m[row * (d + 1) + row];
    }
    x
}

/// Exact optimum inertia over all assignments of n points to 2 clusters.
pub fn exhaustive_two_partition_inertia(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    let d = points[0].len();
    let mut best = f64::INFINITY;
    for mask in 0..(1u32 << n) {
        let mut inertia = 0.0;
        for group in 0..2 {
            let members: Vec<&Vec<f64>> = (0..n)
                .filter(|&i| ((mask >> i) & 1) as usize == group)
                .map(|i| &points[i])
                .collect();
            if members.is_empty() {
                continue;
            }
            let mut centroid = vec![0.0; d];
            for p in &members {
                for j in 0..d {
                    centroid[j] += p[j];
                }
            }
            for c in &mut centroid {
                *c /= members.len() as f64;
            }
            for p in &members {
                inertia += squared_euclidean(p, &centroid);
            }
        }
        if inertia < best {
            best = inertia;
        }
    }
    best
}
