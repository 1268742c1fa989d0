//! Banded LU with partial pivoting, LAPACK band storage.
//!
//! Column `j` holds rows `j − ku … j + kl`; the array keeps `kl` extra upper
//! rows for pivoting fill-in, so the leading dimension is `2 kl + ku + 1` and
//! entry `(i, j)` lives at `ab[j * ldab + (kl + ku + i − j)]`. Mesh sizes here
//! are desk-scale, so a direct solver is the right tool; iterative methods
//! are out of scope.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandMatrix {
    pub n: usize,
    pub kl: usize,
    pub ku: usize,
    ldab: usize,
    ab: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        BandMatrix { n, kl, ku, ldab, ab: vec![0.0; ldab * n] }
    }

    #[inline]
    fn pos(&self, i: usize, j: usize) -> usize {
        j * self.ldab + (self.kl + self.ku + i - j)
    }

    /// Whether `(i, j)` lies in the declared (unfactored) band.
    #[inline]
    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && i + self.ku >= j && j + self.kl >= i
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band kl={} ku={}", self.kl, self.ku);
        let p = self.pos(i, j);
        self.ab[p] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.ab[self.pos(i, j)]
        } else {
            0.0
        }
    }

    /// In-place LU factorization with row partial pivoting.
    pub fn factor(&mut self) -> Result<Vec<usize>> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let kv = kl + ku; // working upper bandwidth after pivoting
        let mut ipiv = vec![0usize; n];
        for j in 0..n {
            let pmax = (j + kl).min(n - 1);
            let mut jp = j;
            let mut amax = self.ab[self.pos(j, j)].abs();
            for i in (j + 1)..=pmax {
                let v = self.ab[self.pos(i, j)].abs();
                if v > amax {
                    amax = v;
                    jp = i;
                }
            }
            ipiv[j] = jp;
            if amax == 0.0 {
                return Err(Error::Numerical(format!("singular band matrix at column {j}")));
            }
            let cmax = (j + kv).min(n - 1);
            if jp != j {
                for c in j..=cmax {
                    let (pj, pi) = (self.pos(j, c), self.pos(jp, c));
                    self.ab.swap(pj, pi);
                }
            }
            let pivot = self.ab[self.pos(j, j)];
            let imax = (j + kl).min(n - 1);
            for i in (j + 1)..=imax {
                let pij = self.pos(i, j);
                let l = self.ab[pij] / pivot;
                self.ab[pij] = l;
                if l != 0.0 {
                    for c in (j + 1)..=cmax {
                        let pj = self.pos(j, c);
                        let pi = self.pos(i, c);
                        self.ab[pi] -= l * self.ab[pj];
                    }
                }
            }
        }
        Ok(ipiv)
    }

    /// Solve with a factored matrix and its pivot vector.
    pub fn solve_factored(&self, ipiv: &[usize], b: &mut [f64]) {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let kv = kl + ku;
        for j in 0..n {
            b.swap(j, ipiv[j]);
            let imax = (j + kl).min(n - 1);
            let bj = b[j];
            if bj != 0.0 {
                for i in (j + 1)..=imax {
                    b[i] -= self.ab[self.pos(i, j)] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            let cmax = (j + kv).min(n - 1);
            let mut s = b[j];
            for c in (j + 1)..=cmax {
                s -= self.ab[self.pos(j, c)] * b[c];
            }
            b[j] = s / self.ab[self.pos(j, j)];
        }
    }

    /// Factor and solve in one call (consumes the matrix content).
    pub fn solve(mut self, b: &mut [f64]) -> Result<()> {
        let ipiv = self.factor()?;
        self.solve_factored(&ipiv, b);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_solve(a: &mut Vec<Vec<f64>>, b: &mut [f64]) {
        let n = b.len();
        for j in 0..n {
            let mut p = j;
            for i in j + 1..n {
                if a[i][j].abs() > a[p][j].abs() {
                    p = i;
                }
            }
            a.swap(j, p);
            b.swap(j, p);
            for i in j + 1..n {
                let l = a[i][j] / a[j][j];
                for c in j..n {
                    a[i][c] -= l * a[j][c];
                }
                b[i] -= l * b[j];
            }
        }
        for j in (0..n).rev() {
            for c in j + 1..n {
                b[j] -= a[j][c] * b[c];
            }
            b[j] /= a[j][j];
        }
    }

    #[test]
    fn matches_dense_on_random_band() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for &(n, kl, ku) in &[(12usize, 2usize, 3usize), (40, 5, 5), (25, 1, 4)] {
            let mut band = BandMatrix::zeros(n, kl, ku);
            let mut dense = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..n {
                    if band.in_band(i, j) {
                        let v: f64 = rng.gen_range(-1.0..1.0);
                        let v = if i == j { v + 4.0 } else { v };
                        band.add(i, j, v);
                        dense[i][j] = v;
                    }
                }
            }
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut x_band = b.clone();
            band.solve(&mut x_band).unwrap();
            let mut x_dense = b.clone();
            dense_solve(&mut dense.clone(), &mut x_dense);
            for (xb, xd) in x_band.iter().zip(&x_dense) {
                assert!((xb - xd).abs() < 1e-10, "band {xb} vs dense {xd}");
            }
        }
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        // [[0, 1], [1, 0]] x = [2, 3] → x = [3, 2]
        let mut m = BandMatrix::zeros(2, 1, 1);
        m.add(0, 1, 1.0);
        m.add(1, 0, 1.0);
        let mut b = vec![2.0, 3.0];
        m.solve(&mut b).unwrap();
        assert!((b[0] - 3.0).abs() < 1e-14 && (b[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn singular_matrix_rejected() {
        let mut m = BandMatrix::zeros(3, 1, 1);
        m.add(0, 0, 1.0);
        m.add(1, 1, 1.0);
        // column 2 entirely zero
        assert!(m.factor().is_err());
    }
}
