//! Banded LU factorization with partial pivoting.
//!
//! Every linear system in the crate is banded: tridiagonal for the scalar
//! elliptic problems, and a bandwidth-5 system (plus one bordered row and
//! column, handled by the caller) for the coupled Newton step.
//!
//! Row `i` stores the absolute columns `i - kl ..= i + ku + kl`; the extra `kl`
//! columns on the right hold the fill-in produced by row interchanges.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    /// Tridiagonal matrix from its three diagonals. `lower[i]` multiplies
    /// `x[i - 1]` in row `i`, `upper[i]` multiplies `x[i + 1]`.
    pub fn tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::new(n, 1, 1);
        for i in 0..n {
            m.set(i, i, diag[i]);
            if i > 0 {
                m.set(i, i - 1, lower[i]);
            }
            if i + 1 < n {
                m.set(i, i + 1, upper[i]);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.n && j < self.n);
        debug_assert!(j + self.kl >= i && j <= i + self.ku + self.kl);
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.slot(i, j)]
        } else {
            0.0
        }
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(
            self.in_band(i, j),
            "entry ({i}, {j}) outside band kl={}, ku={}",
            self.kl,
            self.ku
        );
        let s = self.slot(i, j);
        self.data[s] = value;
    }

    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let s = self.slot(i, j);
        self.data[s] += value;
    }

    /// Replaces row `i` by the unit row `e_i`.
    pub fn set_identity_row(&mut self, i: usize) {
        let lo = i.saturating_sub(self.kl);
        let hi = (i + self.ku).min(self.n - 1);
        for j in lo..=hi {
            self.set(i, j, 0.0);
        }
        self.set(i, i, 1.0);
    }

    /// Largest absolute entry of row `i`.
    pub fn row_max_abs(&self, i: usize) -> f64 {
        let lo = i.saturating_sub(self.kl);
        let hi = (i + self.ku).min(self.n - 1);
        (lo..=hi).fold(0.0, |m, j| m.max(self.get(i, j).abs()))
    }

    pub fn scale_row(&mut self, i: usize, factor: f64) {
        let lo = i.saturating_sub(self.kl);
        let hi = (i + self.ku).min(self.n - 1);
        for j in lo..=hi {
            let s = self.slot(i, j);
            self.data[s] *= factor;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    pub fn factor(mut self) -> Result<BandedLu> {
        let n = self.n;
        let reach = self.kl + self.ku;
        let mut pivots = vec![0usize; n];
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.slot(k, k)].abs();
            for r in k + 1..=last_row {
                let v = self.data[self.slot(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::SingularSystem(k));
            }
            pivots[k] = p;
            let last_col = (k + reach).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let a = self.slot(k, j);
                    let b = self.slot(p, j);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.slot(k, k)];
            for r in k + 1..=last_row {
                let sr = self.slot(r, k);
                let l = self.data[sr] / pivot;
                self.data[sr] = l;
                if l != 0.0 {
                    for j in k + 1..=last_col {
                        let u = self.data[self.slot(k, j)];
                        let s = self.slot(r, j);
                        self.data[s] -= l * u;
                    }
                }
            }
        }
        Ok(BandedLu { a: self, pivots })
    }
}

/// Factorized banded matrix, reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct BandedLu {
    a: BandedMatrix,
    pivots: Vec<usize>,
}

impl BandedLu {
    pub fn solve(&self, rhs: &mut [f64]) {
        let a = &self.a;
        let n = a.n;
        assert_eq!(rhs.len(), n);
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                rhs.swap(k, p);
            }
            let bk = rhs[k];
            if bk != 0.0 {
                for r in k + 1..=(k + a.kl).min(n - 1) {
                    rhs[r] -= a.data[a.slot(r, k)] * bk;
                }
            }
        }
        let reach = a.kl + a.ku;
        for k in (0..n).rev() {
            let mut s = rhs[k];
            for j in k + 1..=(k + reach).min(n - 1) {
                s -= a.data[a.slot(k, j)] * rhs[j];
            }
            rhs[k] = s / a.data[a.slot(k, k)];
        }
    }
}

/// Factor and solve in one call.
pub fn solve_banded(matrix: BandedMatrix, rhs: &mut [f64]) -> Result<()> {
    let lu = matrix.factor()?;
    lu.solve(rhs);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Dense Gaussian elimination with partial pivoting, used as the oracle.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&x, &y| a[x][k].abs().partial_cmp(&a[y][k].abs()).unwrap())
                .unwrap();
            a.swap(k, p);
            b.swap(k, p);
            for r in k + 1..n {
                let l = a[r][k] / a[k][k];
                for j in k..n {
                    a[r][j] -= l * a[k][j];
                }
                b[r] -= l * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
            x[k] = (b[k] - s) / a[k][k];
        }
        x
    }

    #[test]
    fn matches_dense_elimination_on_random_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(n, kl, ku) in &[(7, 1, 1), (20, 5, 5), (13, 2, 4), (9, 3, 0)] {
            let mut m = BandedMatrix::new(n, kl, ku);
            let mut dense = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                    // weak diagonal forces row interchanges
                    let v: f64 = rng.gen_range(-1.0..1.0) + if i == j { 0.1 } else { 0.0 };
                    m.set(i, j, v);
                    dense[i][j] = v;
                }
            }
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let expected = dense_solve(dense, b.clone());
            let mut x = b.clone();
            solve_banded(m, &mut x).unwrap();
            for (a, e) in x.iter().zip(&expected) {
                assert!((a - e).abs() < 1e-9 * (1.0 + e.abs()), "{a} vs {e}");
            }
        }
    }

    #[test]
    fn tridiagonal_round_trip() {
        let n = 50;
        let lower = vec![-1.0; n];
        let diag = vec![2.5; n];
        let upper = vec![-1.0; n];
        let m = BandedMatrix::tridiagonal(&lower, &diag, &upper);
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = m.matvec(&x);
        solve_banded(m, &mut b).unwrap();
        for (a, e) in b.iter().zip(&x) {
            assert!((a - e).abs() < 1e-13);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        // rows 0 and 1 are identical
        let m = BandedMatrix::tridiagonal(&[0.0, 1.0, 1.0], &[1.0, 1.0, 1.0], &[1.0, 0.0, 0.0]);
        let mut b = vec![1.0, 2.0, 3.0];
        assert!(matches!(solve_banded(m, &mut b), Err(Error::SingularSystem(_))));
    }
}
