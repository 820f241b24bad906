//! Small dense-vector helpers shared by the kernels, scorers and metrics.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Unit-length copy; the zero vector is returned unchanged.
pub fn normalized(a: &[f64]) -> Vec<f64> {
    let n = norm(a);
    if n > 0.0 {
        a.iter().map(|x| x / n).collect()
    } else {
        a.to_vec()
    }
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn hadamard(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log-odds with `p` clamped to `[1e-15, 1 - 1e-15]`.
#[inline]
pub fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-15, 1.0 - 1e-15);
    (p / (1.0 - p)).ln()
}

/// Mean of a set of equal-length vectors; `None` for an empty set.
pub fn mean_vector<'a>(vs: impl IntoIterator<Item = &'a [f64]>) -> Option<Vec<f64>> {
    let mut it = vs.into_iter();
    let first = it.next()?;
    let mut acc = first.to_vec();
    let mut n = 1usize;
    for v in it {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
        n += 1;
    }
    let inv = 1.0 / n as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    Some(acc)
}

/// `log det` of a square row-major matrix by LU with partial pivoting.
///
/// Returns `-inf` when the determinant is zero or negative, which is how
/// singular or indefinite subsets score under the DPP objective.
pub fn log_det(matrix: &[f64], n: usize) -> f64 {
    assert_eq!(matrix.len(), n * n);
    if n == 0 {
        return 0.0;
    }
    let mut a = matrix.to_vec();
    let mut log_abs = 0.0;
    let mut sign = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .unwrap();
        let p = a[pivot * n + col];
        if p == 0.0 {
            return f64::NEG_INFINITY;
        }
        if pivot != col {
            for c in 0..n {
                a.swap(pivot * n + c, col * n + c);
            }
            sign = -sign;
        }
        if p < 0.0 {
            sign = -sign;
        }
        log_abs += p.abs().ln();
        for r in col + 1..n {
            let f = a[r * n + col] / p;
            if f != 0.0 {
                for c in col..n {
                    a[r * n + c] -= f * a[col * n + c];
                }
            }
        }
    }
    if sign > 0.0 {
        log_abs
    } else {
        f64::NEG_INFINITY
    }
}

/// Principal submatrix `M[idx, idx]` of a row-major `n×n` matrix.
pub fn principal_submatrix(matrix: &[f64], n: usize, idx: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(idx.len() * idx.len());
    for &i in idx {
        for &j in idx {
            out.push(matrix[i * n + j]);
        }
    }
    out
}
