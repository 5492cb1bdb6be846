//! Dense symmetric positive-definite solves for the normal equations.

/// Row-major square matrix.
#[derive(Debug, Clone)]
pub(crate) struct SquareMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// Pivots below this fraction of the largest diagonal entry count as zero.
const RELATIVE_PIVOT_TOL: f64 = 1e-10;

/// Solves `a x = b` for symmetric positive-definite `a` by Cholesky
/// factorization. Returns `None` when `a` is singular or not positive
/// definite to working precision.
pub(crate) fn cholesky_solve(a: &SquareMatrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.n;
    assert_eq!(b.len(), n);
    let scale = (0..n).map(|i| a.at(i, i).abs()).fold(0.0, f64::max);
    if n > 0 && scale == 0.0 {
        return None;
    }
    let mut l = SquareMatrix::zeros(n);
    for j in 0..n {
        let mut d = a.at(j, j);
        for k in 0..j {
            d -= l.at(j, k) * l.at(j, k);
        }
        if !(d > RELATIVE_PIVOT_TOL * scale) {
            return None;
        }
        let d = d.sqrt();
        *l.at_mut(j, j) = d;
        for i in j + 1..n {
            let mut s = a.at(i, j);
            for k in 0..j {
                s -= l.at(i, k) * l.at(j, k);
            }
            *l.at_mut(i, j) = s / d;
        }
    }
    // forward: L z = b
    let mut z = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            z[i] -= l.at(i, k) * z[k];
        }
        z[i] /= l.at(i, i);
    }
    // backward: L^T x = z
    for i in (0..n).rev() {
        for k in i + 1..n {
            z[i] -= l.at(k, i) * z[k];
        }
        z[i] /= l.at(i, i);
    }
    Some(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd_system() {
        let a = SquareMatrix {
            n: 3,
            data: vec![4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0],
        };
        let x_true = [1.0, -2.0, 0.5];
        let b: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| a.at(i, j) * x_true[j]).sum())
            .collect();
        let x = cholesky_solve(&a, &b).unwrap();
        for (got, want) in x.iter().zip(x_true) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn detects_singular() {
        let a = SquareMatrix {
            n: 2,
            data: vec![1.0, 1.0, 1.0, 1.0],
        };
        assert!(cholesky_solve(&a, &[1.0, 1.0]).is_none());
        assert!(cholesky_solve(&SquareMatrix::zeros(2), &[0.0, 0.0]).is_none());
    }
}
