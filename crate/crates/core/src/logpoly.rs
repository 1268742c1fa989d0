//! Log-polynomials: finite sums `sum_{i,j} c_{i,j}(y') t^i (log t)^j`.
//!
//! These are the native objects of boundary expansions near `t = 0`. The
//! coefficients `c_{i,j}` are tangential [`Field`]s; `i` ranges over integers
//! (negative powers appear in intermediate ODE levels), `j >= 0` counts log
//! factors. Every value carries a truncation order `K`: terms with `i > K`
//! are unknown, and arithmetic propagates the truncation conservatively.
//!
//! Integration from `0` is the singular operation that creates logs: only
//! `t^{-1} (log t)^j` integrates to `(log t)^{j+1} / (j+1)`; terms with
//! `i < -1` are not integrable from zero and are rejected.
//!
//! # Example
//!
//! ```
//! use graphexp::logpoly::LogPolynomial;
//!
//! // p = t^2 + t^2 log t,  q = 2 t^{-1}
//! let p = LogPolynomial::from_scalar_terms(&[(2, 0, 1.0), (2, 1, 1.0)], 10);
//! let q = LogPolynomial::from_scalar_terms(&[(-1, 0, 2.0)], 10);
//!
//! // products track log powers; integration from zero creates the log
//! let pq = p.mul(&q).unwrap();
//! assert_eq!(pq.keys(), vec![(1, 0), (1, 1)]);
//! let int = q.integrate_from_zero().unwrap();
//! assert!((int.scalar_coeff(0, 1) - 2.0).abs() < 1e-15);
//!
//! // evaluation is a ring homomorphism
//! let t = 0.3;
//! assert!((pq.eval_scalar(t) - p.eval_scalar(t) * q.eval_scalar(t)).abs() < 1e-12);
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Field, Grid, GridField};

/// Coefficients below this sup-norm are dropped after arithmetic.
pub const PRUNE_TOL: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct LogPolynomial {
    /// Tangential grid on which grid-valued coefficients live (scalar grid
    /// for purely scalar expansions).
    pub grid: Grid,
    /// `(i, j) -> c_{i,j}`, ordered for deterministic iteration.
    pub terms: BTreeMap<(i32, u32), Field>,
    /// Powers `t^i` with `i <= trunc_order` are trusted.
    pub trunc_order: i32,
}

impl LogPolynomial {
    pub fn zero(grid: Grid, trunc_order: i32) -> Self {
        LogPolynomial { grid, terms: BTreeMap::new(), trunc_order }
    }

    /// Single term `c * t^i (log t)^j`.
    pub fn term(grid: Grid, i: i32, j: u32, c: Field, trunc_order: i32) -> Self {
        let mut p = LogPolynomial::zero(grid, trunc_order);
        p.add_term(i, j, c);
        p
    }

    /// Scalar-coefficient polynomial from `(i, j, value)` triples.
    pub fn from_scalar_terms(terms: &[(i32, u32, f64)], trunc_order: i32) -> Self {
        let mut p = LogPolynomial::zero(Grid::scalar(), trunc_order);
        for &(i, j, v) in terms {
            p.add_term(i, j, Field::constant(v));
        }
        p
    }

    /// Lowest power present (`trunc_order + 1` when empty).
    pub fn min_power(&self) -> i32 {
        self.terms.keys().map(|&(i, _)| i).min().unwrap_or(self.trunc_order + 1)
    }

    pub fn coeff(&self, i: i32, j: u32) -> Option<&Field> {
        self.terms.get(&(i, j))
    }

    /// Coefficient as a scalar; zero when absent. Panics on grid-valued
    /// coefficients (use [`Self::coeff`] for those).
    pub fn scalar_coeff(&self, i: i32, j: u32) -> f64 {
        match self.terms.get(&(i, j)) {
            None => 0.0,
            Some(f) => {
                assert!(
                    f.is_scalar_constant() || matches!(f, Field::Analytic(_)),
                    "scalar_coeff on a grid-valued coefficient"
                );
                f.eval_index(&Grid::scalar(), [0, 0])
            }
        }
    }

    /// Add `c` into the `(i, j)` slot (merging with any existing term).
    pub fn add_term(&mut self, i: i32, j: u32, c: Field) {
        if i > self.trunc_order {
            return;
        }
        let grid = self.grid.clone();
        match self.terms.remove(&(i, j)) {
            None => {
                self.terms.insert((i, j), c);
            }
            Some(old) => {
                let sum = old.add(&c, &grid).expect("coefficient grids must agree");
                self.terms.insert((i, j), sum);
            }
        }
        self.prune_slot(i, j);
    }

    fn prune_slot(&mut self, i: i32, j: u32) {
        let drop = match self.terms.get(&(i, j)) {
            Some(f) => f.sup_norm(&self.grid) < PRUNE_TOL,
            None => false,
        };
        if drop {
            self.terms.remove(&(i, j));
        }
    }

    fn prune(&mut self) {
        let grid = self.grid.clone();
        let keep_tol = PRUNE_TOL;
        self.terms.retain(|_, f| f.sup_norm(&grid) >= keep_tol);
    }

    fn merge_grid(a: &Grid, b: &Grid) -> Result<Grid> {
        if a.is_scalar() {
            Ok(b.clone())
        } else if b.is_scalar() || a.compatible(b) {
            Ok(a.clone())
        } else {
            Err(Error::GridMismatch("log-polynomial operands on different grids".into()))
        }
    }

    pub fn add(&self, o: &LogPolynomial) -> Result<LogPolynomial> {
        let grid = Self::merge_grid(&self.grid, &o.grid)?;
        let trunc = self.trunc_order.min(o.trunc_order);
        let mut r = LogPolynomial::zero(grid, trunc);
        for (&(i, j), c) in self.terms.iter().chain(o.terms.iter()) {
            r.add_term(i, j, c.clone());
        }
        Ok(r)
    }

    pub fn sub(&self, o: &LogPolynomial) -> Result<LogPolynomial> {
        self.add(&o.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> LogPolynomial {
        let mut r = self.clone();
        for c in r.terms.values_mut() {
            *c = c.scale(s);
        }
        r.prune();
        r
    }

    /// Multiply by the tangential field `f` (power structure unchanged).
    pub fn scale_field(&self, f: &Field) -> Result<LogPolynomial> {
        let mut r = self.clone();
        for c in r.terms.values_mut() {
            *c = c.mul(f, &self.grid)?;
        }
        r.prune();
        Ok(r)
    }

    /// Product. The result is trusted up to
    /// `min(K_a + min_pow(b), K_b + min_pow(a))`: an unknown `t^{K+1}` tail
    /// in one factor pollutes the product starting at that power.
    pub fn mul(&self, o: &LogPolynomial) -> Result<LogPolynomial> {
        let grid = Self::merge_grid(&self.grid, &o.grid)?;
        let trunc =
            (self.trunc_order + o.min_power()).min(o.trunc_order + self.min_power());
        let mut r = LogPolynomial::zero(grid.clone(), trunc);
        for (&(i1, j1), c1) in &self.terms {
            for (&(i2, j2), c2) in &o.terms {
                if i1 + i2 > trunc {
                    continue;
                }
                r.add_term(i1 + i2, j1 + j2, c1.mul(c2, &grid)?);
            }
        }
        Ok(r)
    }

    /// Multiply by `t^k` (`k` may be negative); truncation order shifts too.
    pub fn shift(&self, k: i32) -> LogPolynomial {
        let mut r = LogPolynomial::zero(self.grid.clone(), self.trunc_order + k);
        for (&(i, j), c) in &self.terms {
            r.add_term(i + k, j, c.clone());
        }
        r
    }

    /// Drop terms with `i > k` and set the truncation order to `k`.
    pub fn truncate(&self, k: i32) -> LogPolynomial {
        let mut r = LogPolynomial::zero(self.grid.clone(), k);
        for (&(i, j), c) in &self.terms {
            if i <= k {
                r.add_term(i, j, c.clone());
            }
        }
        r
    }

    /// `d/dt`: `t^i (log t)^j -> i t^{i-1} (log t)^j + j t^{i-1} (log t)^{j-1}`.
    pub fn dt(&self) -> LogPolynomial {
        let mut r = LogPolynomial::zero(self.grid.clone(), self.trunc_order - 1);
        for (&(i, j), c) in &self.terms {
            if i != 0 {
                r.add_term(i - 1, j, c.scale(i as f64));
            }
            if j > 0 {
                r.add_term(i - 1, j - 1, c.scale(j as f64));
            }
        }
        r
    }

    /// Tangential derivative of every coefficient along `axis`.
    pub fn dy(&self, axis: usize) -> Result<LogPolynomial> {
        let mut r = LogPolynomial::zero(self.grid.clone(), self.trunc_order);
        for (&(i, j), c) in &self.terms {
            r.add_term(i, j, c.deriv(axis, &self.grid)?);
        }
        Ok(r)
    }

    /// Reciprocal as a power series in `(self/a0 - 1)` about the `t^0` log-free
    /// part `a0`; requires `min_power() == 0`, a `(0, 0)` coefficient bounded
    /// away from zero, and no logs at power zero.
    pub fn recip(&self) -> Result<LogPolynomial> {
        let a0 = self.leading_invertible()?;
        let a0_inv = a0.recip(&self.grid)?;
        // e = self * a0^{-1} - 1 has min power >= 1
        let mut e = self.scale_field(&a0_inv)?;
        e.add_term(0, 0, Field::constant(-1.0));
        if e.min_power() < 1 {
            return Err(Error::SingularReciprocal(0.0));
        }
        let mut acc = LogPolynomial::term(
            self.grid.clone(),
            0,
            0,
            Field::constant(1.0),
            self.trunc_order,
        );
        let mut pow = acc.clone();
        let steps = (self.trunc_order.max(0)) as usize;
        for _ in 0..steps {
            pow = pow.mul(&e)?.scale(-1.0);
            pow.trunc_order = self.trunc_order;
            acc = acc.add(&pow)?;
        }
        acc.trunc_order = self.trunc_order;
        acc.scale_field(&a0_inv)
    }

    /// Square root via the binomial series about the `t^0` part; the `(0,0)`
    /// coefficient must be positive.
    pub fn sqrt(&self) -> Result<LogPolynomial> {
        let a0 = self.leading_invertible()?;
        let mins = match &a0 {
            f => {
                let s = f.sample(&self.grid)?;
                s.values.iter().fold(f64::INFINITY, |m, v| m.min(*v))
            }
        };
        if mins <= 0.0 {
            return Err(Error::Positivity("sqrt of log-polynomial with non-positive t^0 part".into()));
        }
        let mut e = self.scale_field(&a0.recip(&self.grid)?)?;
        e.add_term(0, 0, Field::constant(-1.0));
        let mut acc = LogPolynomial::term(
            self.grid.clone(),
            0,
            0,
            Field::constant(1.0),
            self.trunc_order,
        );
        let mut pow = acc.clone();
        let mut coef = 1.0;
        let steps = (self.trunc_order.max(0)) as usize;
        for k in 1..=steps {
            pow = pow.mul(&e)?;
            pow.trunc_order = self.trunc_order;
            coef *= (0.5 - (k as f64 - 1.0)) / k as f64;
            acc = acc.add(&pow.scale(coef))?;
        }
        acc.trunc_order = self.trunc_order;
        acc.scale_field(&a0.sqrt(&self.grid)?)
    }

    fn leading_invertible(&self) -> Result<Field> {
        if self.min_power() < 0 {
            return Err(Error::Representation(
                "series inversion needs min power 0".into(),
            ));
        }
        for (&(i, j), _) in &self.terms {
            if i == 0 && j > 0 {
                return Err(Error::Representation(
                    "series inversion with log terms at power zero".into(),
                ));
            }
        }
        match self.coeff(0, 0) {
            Some(c) => Ok(c.clone()),
            None => Err(Error::SingularReciprocal(0.0)),
        }
    }

    /// Antiderivative vanishing at `t = 0` (for integrable terms):
    ///
    /// - `i != -1`: repeated integration by parts in the log factor,
    ///   `∫ s^i (log s)^j = t^{i+1}(log t)^j/(i+1) - (j/(i+1)) ∫ s^i (log s)^{j-1}`;
    /// - `i == -1`: `(log t)^{j+1}/(j+1)` (the log-creating case);
    /// - `i < -1`: not integrable from zero, rejected.
    pub fn integrate_from_zero(&self) -> Result<LogPolynomial> {
        let mut r = LogPolynomial::zero(self.grid.clone(), self.trunc_order + 1);
        for (&(i, j), c) in &self.terms {
            if i < -1 {
                return Err(Error::DivergentIntegral { i, j });
            }
            if i == -1 {
                r.add_term(0, j + 1, c.scale(1.0 / (j as f64 + 1.0)));
            } else {
                // sum over remaining log powers from the by-parts recursion
                let mut factor = 1.0 / (i as f64 + 1.0);
                let mut jj = j;
                loop {
                    r.add_term(i + 1, jj, c.scale(factor));
                    if jj == 0 {
                        break;
                    }
                    factor *= -(jj as f64) / (i as f64 + 1.0);
                    jj -= 1;
                }
            }
        }
        Ok(r)
    }

    /// Antiderivative vanishing at `t = r` (`r > 0`): integrate formally and
    /// subtract the value at `r` as a `t^0` constant. Handles all integer
    /// powers, including `i < -1`.
    pub fn integrate_from_r(&self, r: f64) -> Result<LogPolynomial> {
        if !(r > 0.0) {
            return Err(Error::Domain(format!("integration base point r = {r} must be positive")));
        }
        let mut out = LogPolynomial::zero(self.grid.clone(), self.trunc_order + 1);
        for (&(i, j), c) in &self.terms {
            // formal antiderivative of t^i (log t)^j as (power, logpow, coef) list
            let mut parts: Vec<(i32, u32, f64)> = Vec::new();
            if i == -1 {
                parts.push((0, j + 1, 1.0 / (j as f64 + 1.0)));
            } else {
                let mut factor = 1.0 / (i as f64 + 1.0);
                let mut jj = j;
                loop {
                    parts.push((i + 1, jj, factor));
                    if jj == 0 {
                        break;
                    }
                    factor *= -(jj as f64) / (i as f64 + 1.0);
                    jj -= 1;
                }
            }
            let logr = r.ln();
            let at_r: f64 = parts
                .iter()
                .map(|&(p, lp, f)| f * r.powi(p) * logr.powi(lp as i32))
                .sum();
            for &(p, lp, f) in &parts {
                out.add_term(p, lp, c.scale(f));
            }
            out.add_term(0, 0, c.scale(-at_r));
        }
        Ok(out)
    }

    /// Evaluate at `(y' index, t)`; `t` must be positive.
    pub fn eval_index(&self, idx: [usize; 2], t: f64) -> f64 {
        assert!(t > 0.0, "log-polynomials are evaluated at t > 0");
        let lt = t.ln();
        self.terms
            .iter()
            .map(|(&(i, j), c)| {
                c.eval_index(&self.grid, idx) * t.powi(i) * lt.powi(j as i32)
            })
            .sum()
    }

    /// Evaluate a scalar-coefficient polynomial at `t`.
    pub fn eval_scalar(&self, t: f64) -> f64 {
        self.eval_index([0, 0], t)
    }

    /// Largest `j` appearing at power `i`.
    pub fn max_log_power(&self, i: i32) -> Option<u32> {
        self.terms.keys().filter(|&&(ii, _)| ii == i).map(|&(_, j)| j).max()
    }

    /// All `(i, j)` keys in deterministic order.
    pub fn keys(&self) -> Vec<(i32, u32)> {
        self.terms.keys().cloned().collect()
    }
}

/// Serialized form: coefficients are scalars or flat row-major arrays.
#[derive(Debug, Serialize, Deserialize)]
pub struct LogPolyJson {
    pub trunc_order: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridJson>,
    pub terms: Vec<TermJson>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GridJson {
    pub dims: usize,
    pub shape: [usize; 2],
    pub h: f64,
    pub origin: [f64; 2],
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TermJson {
    pub i: i32,
    pub j: u32,
    pub coeff: CoeffJson,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoeffJson {
    Scalar(f64),
    Array(Vec<f64>),
}

impl LogPolynomial {
    /// Serialize; analytic coefficients are sampled onto the grid.
    pub fn to_json(&self) -> Result<LogPolyJson> {
        let grid = if self.grid.is_scalar() {
            None
        } else {
            Some(GridJson {
                dims: self.grid.dims,
                shape: self.grid.shape,
                h: self.grid.h,
                origin: self.grid.origin,
            })
        };
        let mut terms = Vec::new();
        for (&(i, j), c) in &self.terms {
            let coeff = if self.grid.is_scalar() {
                CoeffJson::Scalar(c.eval_index(&self.grid, [0, 0]))
            } else {
                CoeffJson::Array(c.sample(&self.grid)?.values)
            };
            terms.push(TermJson { i, j, coeff });
        }
        Ok(LogPolyJson { trunc_order: self.trunc_order, grid, terms })
    }

    pub fn from_json(json: &LogPolyJson) -> Result<LogPolynomial> {
        let grid = match &json.grid {
            None => Grid::scalar(),
            Some(g) => Grid { dims: g.dims, shape: g.shape, h: g.h, origin: g.origin },
        };
        let mut p = LogPolynomial::zero(grid.clone(), json.trunc_order);
        for t in &json.terms {
            let field = match &t.coeff {
                CoeffJson::Scalar(v) => Field::constant(*v),
                CoeffJson::Array(vals) => {
                    Field::Grid(GridField::new(grid.clone(), vals.clone())?)
                }
            };
            p.add_term(t.i, t.j, field);
        }
        Ok(p)
    }

    pub fn to_json_string(&self) -> Result<String> {
        let j = self.to_json()?;
        serde_json::to_string_pretty(&j)
            .map_err(|e| Error::Representation(format!("json encode: {e}")))
    }

    pub fn from_json_str(s: &str) -> Result<LogPolynomial> {
        let j: LogPolyJson = serde_json::from_str(s)
            .map_err(|e| Error::Representation(format!("json decode: {e}")))?;
        LogPolynomial::from_json(&j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(terms: &[(i32, u32, f64)], k: i32) -> LogPolynomial {
        LogPolynomial::from_scalar_terms(terms, k)
    }

    #[test]
    fn mul_tracks_truncation() {
        // (t + t^2 + O(t^6)) * (t^2 + O(t^4)): trusted only to t^5.
        let a = scalar(&[(1, 0, 1.0), (2, 0, 1.0)], 5);
        let b = scalar(&[(2, 0, 1.0)], 3);
        let p = a.mul(&b).unwrap();
        assert_eq!(p.trunc_order, 4);
        assert_relative_eq!(p.scalar_coeff(3, 0), 1.0);
        assert_relative_eq!(p.scalar_coeff(4, 0), 1.0);
    }

    #[test]
    fn dt_product_rule_on_logs() {
        // d/dt [t^2 log t] = 2 t log t + t
        let p = scalar(&[(2, 1, 1.0)], 6);
        let d = p.dt();
        assert_relative_eq!(d.scalar_coeff(1, 1), 2.0);
        assert_relative_eq!(d.scalar_coeff(1, 0), 1.0);
    }

    #[test]
    fn integrate_from_zero_creates_logs_only_at_minus_one() {
        // ∫ (3/s) ds = 3 log t; ∫ s log s ds = t^2 log t / 2 - t^2/4.
        let p = scalar(&[(-1, 0, 3.0), (1, 1, 1.0)], 6);
        let q = p.integrate_from_zero().unwrap();
        assert_relative_eq!(q.scalar_coeff(0, 1), 3.0);
        assert_relative_eq!(q.scalar_coeff(2, 1), 0.5);
        assert_relative_eq!(q.scalar_coeff(2, 0), -0.25);

        let bad = scalar(&[(-2, 0, 1.0)], 6);
        assert!(matches!(
            bad.integrate_from_zero(),
            Err(Error::DivergentIntegral { i: -2, j: 0 })
        ));
    }

    #[test]
    fn integrate_from_r_vanishes_at_r() {
        let p = scalar(&[(-3, 0, 2.0), (-1, 2, 1.0), (2, 1, 0.5)], 6);
        let r = 0.37;
        let q = p.integrate_from_r(r).unwrap();
        assert!(q.eval_scalar(r).abs() < 1e-14);
        // check the derivative numerically at an interior point
        let t = 0.2;
        let eps = 1e-6;
        let num = (q.eval_scalar(t + eps) - q.eval_scalar(t - eps)) / (2.0 * eps);
        assert_relative_eq!(num, p.eval_scalar(t), epsilon = 1e-6);
    }

    #[test]
    fn recip_matches_pointwise() {
        let p = scalar(&[(0, 0, 2.0), (1, 0, -0.5), (3, 1, 0.25)], 6);
        let r = p.recip().unwrap();
        assert_eq!(r.trunc_order, 6);
        // truncation tail is O(t^7), so keep t small enough for 1e-9
        for &t in &[0.02, 0.05, 0.1] {
            let approx_inv = r.eval_scalar(t);
            let exact = 1.0 / p.eval_scalar(t);
            assert_relative_eq!(approx_inv, exact, epsilon = 1e-8);
        }
        let bad = scalar(&[(1, 0, 1.0)], 4);
        assert!(bad.recip().is_err());
        let logged = scalar(&[(0, 0, 1.0), (0, 1, 1.0)], 4);
        assert!(logged.recip().is_err());
    }

    #[test]
    fn sqrt_squares_back() {
        let p = scalar(&[(0, 0, 4.0), (2, 0, 1.0), (3, 1, -0.5)], 8);
        let s = p.sqrt().unwrap();
        let sq = s.mul(&s).unwrap();
        for (i, j, v) in [(0, 0, 4.0), (2, 0, 1.0), (3, 1, -0.5)] {
            assert_relative_eq!(sq.scalar_coeff(i, j), v, epsilon = 1e-12);
        }
        // spurious terms stay below the pruning scale
        for (i, j) in sq.keys() {
            if ![(0, 0), (2, 0), (3, 1)].contains(&(i, j)) {
                assert!(sq.scalar_coeff(i, j).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn json_round_trip_scalar_and_grid() {
        let p = scalar(&[(0, 0, 1.5), (2, 1, -0.75)], 4);
        let s = p.to_json_string().unwrap();
        let q = LogPolynomial::from_json_str(&s).unwrap();
        assert_eq!(q.trunc_order, 4);
        assert_relative_eq!(q.scalar_coeff(2, 1), -0.75);

        let grid = Grid::line(0.5, 7);
        let c = GridField::from_fn(grid.clone(), |p| p[0] + 2.0);
        let mut g = LogPolynomial::zero(grid.clone(), 3);
        g.add_term(2, 0, Field::Grid(c));
        let s2 = g.to_json_string().unwrap();
        let q2 = LogPolynomial::from_json_str(&s2).unwrap();
        let back = q2.coeff(2, 0).unwrap().sample(&grid).unwrap();
        assert_relative_eq!(back.values[0], 1.5, epsilon = 1e-14);
        assert_relative_eq!(back.values[6], 2.5, epsilon = 1e-14);
    }

    #[test]
    fn pruning_drops_tiny_terms() {
        let mut p = scalar(&[(1, 0, 1.0)], 4);
        p.add_term(1, 0, Field::constant(-1.0 + 1e-16));
        assert!(p.coeff(1, 0).is_none());
    }

    #[test]
    fn eval_matches_closed_form() {
        let p = scalar(&[(2, 1, 3.0), (-1, 0, 1.0)], 6);
        let t = 0.1f64;
        assert_relative_eq!(
            p.eval_scalar(t),
            3.0 * t * t * t.ln() + 1.0 / t,
            epsilon = 1e-13
        );
    }
}
