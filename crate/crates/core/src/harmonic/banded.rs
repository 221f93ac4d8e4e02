//! Symmetric envelope (skyline) storage with an `LDLᵀ` factorisation.

use crate::error::{Error, Result};

/// Lower triangle of a symmetric matrix; row `i` keeps columns
/// `first[i]..=i`. Factorisation creates no fill outside this profile.
#[derive(Debug, Clone)]
pub struct Envelope {
    first: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl Envelope {
    pub fn from_fn<F: FnMut(usize, usize) -> f64>(first: Vec<usize>, mut f: F) -> Self {
        let rows = first
            .iter()
            .enumerate()
            .map(|(i, &lo)| {
                assert!(lo <= i, "envelope row {i} starts after the diagonal");
                (lo..=i).map(|j| f(i, j)).collect()
            })
            .collect();
        Self { first, rows }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Largest distance from the diagonal kept in any row.
    pub fn bandwidth(&self) -> usize {
        self.first.iter().enumerate().map(|(i, lo)| i - lo).max().unwrap_or(0)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if j < self.first[i] {
            0.0
        } else {
            self.rows[i][j - self.first[i]]
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        for (i, row) in self.rows.iter().enumerate() {
            let lo = self.first[i];
            for (off, a) in row.iter().enumerate() {
                let j = lo + off;
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// `A = L D Lᵀ` with unit lower `L`, no pivoting.
    pub fn factor(&self) -> Result<Ldl> {
        let n = self.dim();
        let mut l: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut d = vec![0.0; n];
        let scale = (0..n).map(|i| self.get(i, i).abs()).fold(0.0f64, f64::max);
        for i in 0..n {
            let lo = self.first[i];
            let mut row = vec![0.0; i - lo];
            for j in lo..i {
                let mut v = self.rows[i][j - lo];
                let from = lo.max(self.first[j]);
                for k in from..j {
                    v -= row[k - lo] * d[k] * l[j][k - self.first[j]];
                }
                row[j - lo] = v / d[j];
            }
            let mut di = self.rows[i][i - lo];
            for k in lo..i {
                di -= row[k - lo] * row[k - lo] * d[k];
            }
            if !di.is_finite() || di.abs() <= 1e-15 * scale {
                return Err(Error::Singular(format!("zero pivot at row {i} of a {n}x{n} kernel")));
            }
            d[i] = di;
            l.push(row);
        }
        Ok(Ldl {
            first: self.first.clone(),
            l,
            d,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Ldl {
    first: Vec<usize>,
    l: Vec<Vec<f64>>,
    d: Vec<f64>,
}

impl Ldl {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.d.len();
        let mut x = b.to_vec();
        for i in 0..n {
            let lo = self.first[i];
            let s: f64 = self.l[i].iter().enumerate().map(|(off, v)| v * x[lo + off]).sum();
            x[i] -= s;
        }
        for (xi, di) in x.iter_mut().zip(&self.d) {
            *xi /= di;
        }
        for i in (0..n).rev() {
            let lo = self.first[i];
            let xi = x[i];
            for (off, v) in self.l[i].iter().enumerate() {
                x[lo + off] -= v * xi;
            }
        }
        x
    }

    /// Ratio of extreme pivots, a cheap lower bound on the condition number
    /// of a symmetric positive definite matrix.
    pub fn pivot_ratio(&self) -> f64 {
        let (lo, hi) = self
            .d
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())));
        hi / lo
    }

    pub fn is_positive_definite(&self) -> bool {
        self.d.iter().all(|&v| v > 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};

    fn sample(n: usize) -> Envelope {
        let first: Vec<usize> = (0..n).map(|i| i.saturating_sub(1 + i % 3)).collect();
        Envelope::from_fn(first, |i, j| if i == j { 4.0 + i as f64 * 0.1 } else { 1.0 / (1.0 + (i + 2 * j) as f64) })
    }

    #[test]
    fn solve_matches_dense() {
        let env = sample(40);
        let dense = DMatrix::from_fn(40, 40, |i, j| env.get(i, j));
        let b: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        let want = dense.lu().solve(&DVector::from_vec(b.clone())).unwrap();
        let ldl = env.factor().unwrap();
        assert!(ldl.is_positive_definite());
        let got = ldl.solve(&b);
        for i in 0..40 {
            assert_abs_diff_eq!(got[i], want[i], epsilon = 1e-13);
        }
        let back = env.mul(&got);
        for i in 0..40 {
            assert_abs_diff_eq!(back[i], b[i], epsilon = 1e-13);
        }
        assert_eq!(env.bandwidth(), 3);
    }

    #[test]
    fn singular_is_reported() {
        let env = Envelope::from_fn(vec![0, 0], |_, _| 1.0);
        assert!(env.factor().is_err());
    }
}
