//! Small dense linear algebra for `n ≤ 16`.

use alloc::vec::Vec;

use crate::math;

/// Determinant of the square matrix whose columns are `cols`, by Gaussian
/// elimination with partial pivoting.
pub fn det_columns(cols: &[&[f64]]) -> f64 {
    let n = cols.len();
    // Row-major copy of the matrix with A[i][j] = cols[j][i].
    let mut a: Vec<f64> = Vec::with_capacity(n * n);
    for i in 0..n {
        for c in cols {
            a.push(c[i]);
        }
    }
    det_in_place(&mut a, n)
}

/// Determinant of a row-major `n × n` matrix; the buffer is destroyed.
pub fn det_in_place(a: &mut [f64], n: usize) -> f64 {
    let mut det = 1.0;
    for k in 0..n {
        let mut piv = k;
        let mut best = math::abs(a[k * n + k]);
        for i in k + 1..n {
            let v = math::abs(a[i * n + k]);
            if v > best {
                best = v;
                piv = i;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if piv != k {
            for j in 0..n {
                a.swap(k * n + j, piv * n + j);
            }
            det = -det;
        }
        let d = a[k * n + k];
        det *= d;
        for i in k + 1..n {
            let f = a[i * n + k] / d;
            if f != 0.0 {
                for j in k + 1..n {
                    a[i * n + j] -= f * a[k * n + j];
                }
            }
        }
    }
    det
}

/// Solves `A x = b` for a row-major `n × n` matrix. Returns `None` when the
/// matrix is numerically singular.
pub fn solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    let scale = m.iter().fold(0.0f64, |s, v| s.max(math::abs(*v)));
    if scale == 0.0 {
        return None;
    }
    for k in 0..n {
        let mut piv = k;
        let mut best = math::abs(m[k * n + k]);
        for i in k + 1..n {
            let v = math::abs(m[i * n + k]);
            if v > best {
                best = v;
                piv = i;
            }
        }
        if best <= 1e-14 * scale {
            return None;
        }
        if piv != k {
            for j in 0..n {
                m.swap(k * n + j, piv * n + j);
            }
            x.swap(k, piv);
        }
        let d = m[k * n + k];
        for i in k + 1..n {
            let f = m[i * n + k] / d;
            if f != 0.0 {
                for j in k..n {
                    m[i * n + j] -= f * m[k * n + j];
                }
                x[i] -= f * x[k];
            }
        }
    }
    for k in (0..n).rev() {
        let mut s = x[k];
        for j in k + 1..n {
            s -= m[k * n + j] * x[j];
        }
        x[k] = s / m[k * n + k];
    }
    Some(x)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Incremental Gram–Schmidt: projects `v` off the orthonormal set `basis` and
/// returns the norm of the remainder, writing the normalized remainder into
/// `out` when it is nonzero.
pub fn orthogonal_residual(basis: &[Vec<f64>], v: &[f64], out: &mut Vec<f64>) -> f64 {
    out.clear();
    out.extend_from_slice(v);
    // Two passes keep the projection accurate for nearly dependent columns.
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, out);
            for (o, qi) in out.iter_mut().zip(q) {
                *o -= c * qi;
            }
        }
    }
    let r = math::norm2(out);
    if r > 0.0 {
        for o in out.iter_mut() {
            *o /= r;
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn det_known_values() {
        let c1 = [1.0, 0.0, 0.0];
        let c2 = [0.0, 2.0, 0.0];
        let c3 = [1.0, 1.0, 3.0];
        assert_eq!(det_columns(&[&c1, &c2, &c3]), 6.0);
        assert_eq!(det_columns(&[&c2, &c1, &c3]), -6.0);
        assert_eq!(det_columns(&[&c1, &c1, &c3]), 0.0);
    }

    #[test]
    fn solve_roundtrip() {
        let a = [4.0, 1.0, 2.0, 3.0];
        let x = solve(&a, &[1.0, 2.0], 2).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-14);
        assert!((2.0 * x[0] + 3.0 * x[1] - 2.0).abs() < 1e-14);
        assert!(solve(&[1.0, 2.0, 2.0, 4.0], &[1.0, 1.0], 2).is_none());
    }
}
