//! Formal boundary expansions of the minimal-graph operator.
//!
//! The operator is `Q(u) = Δu − u_i u_j u_ij / (1 + |Du|²) − n u_t / t` on the
//! half-strip, with tangential dimension `n − 1`. Writing
//! `u = φ + Σ c_{i,j}(y') t^i (log t)^j` and matching powers of `t` determines
//! every coefficient except the one at the resonant power `n + 1`, where the
//! indicial factor `i (i − 1 − n)` vanishes: there the log-free coefficient is
//! a free (nonlocal) input and a forced `t^{n+1} log t` coefficient appears.
//!
//! Coefficients are extracted numerically from [`apply_q`] output rather than
//! from hand-coded formulas, so one code path serves all `n`; the closed forms
//! for the quadratic coefficient and the `t^4 log t` coefficient in dimension
//! `n = 3` (the Willmore residual route) are kept as independent cross-checks.
//!
//! # Example
//!
//! ```
//! use graphexp::expansion::compute_local_coeffs;
//! use graphexp::fields::{AnalyticField, Field, Grid};
//!
//! // boundary data of the unit hemisphere, ambient dimension n = 2
//! let grid = Grid::line(0.2, 9);
//! let phi = Field::Analytic(AnalyticField::sphere_cap(1, 1.0));
//! let res = compute_local_coeffs(&phi, &grid, 2, 3).unwrap();
//!
//! // c_2 = sqrt(1 + |Dφ|²) H / 2 = 1/2 at the origin
//! let c2 = res.series.coeff(2, 0).unwrap().eval_index(&grid, [4, 0]);
//! assert!((c2 - 0.5).abs() < 1e-10);
//! ```

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::fields::{mean_curvature, willmore_residual, Field, Grid};
use crate::logpoly::LogPolynomial;

/// Where a coefficient came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Determined by the order-by-order recursion from φ alone.
    Local,
    /// Supplied externally (free coefficient at the resonant power).
    NonlocalInput,
    /// Estimated from data (fits, solver comparisons).
    Fitted,
}

impl Provenance {
    pub fn label(&self) -> &'static str {
        match self {
            Provenance::Local => "local",
            Provenance::NonlocalInput => "nonlocal-input",
            Provenance::Fitted => "fitted",
        }
    }
}

/// A formal expansion `u_k = φ + series`, with per-term provenance.
#[derive(Debug, Clone)]
pub struct ExpansionResult {
    pub n: usize,
    pub order: i32,
    pub grid: Grid,
    pub phi: Field,
    /// `u_k − φ`: terms start at `t²`.
    pub series: LogPolynomial,
    pub provenance: BTreeMap<(i32, u32), Provenance>,
    /// Sup-norm of the residual coefficients of `Q(u_k)` at powers below the
    /// guaranteed order `t^{k−1}` (should be at noise level).
    pub low_order_residual_sup: f64,
}

impl ExpansionResult {
    /// The full expansion including the `t^0` boundary term.
    pub fn u_full(&self) -> LogPolynomial {
        let mut u = self.series.clone();
        u.add_term(0, 0, self.phi.clone());
        u
    }

    pub fn eval_index(&self, idx: [usize; 2], t: f64) -> f64 {
        self.phi.eval_index(&self.grid, idx) + self.series.eval_index(idx, t)
    }
}

/// Apply `Q` to a log-polynomial ansatz and truncate the result at `t^k`.
///
/// `u` must contain no negative powers and its gradient factor `1 + |Du|²`
/// must have an invertible `t^0` part.
pub fn apply_q(u: &LogPolynomial, n: usize, k: i32) -> Result<LogPolynomial> {
    if u.min_power() < 0 {
        return Err(Error::Representation("Q applied to negative powers of t".into()));
    }
    let dims = n - 1;
    let ut = u.dt();
    let utt = ut.dt();

    let mut grads = Vec::new();
    for a in 0..dims {
        grads.push(u.dy(a)?);
    }

    // Δu = Δ'u + u_tt
    let mut lap = utt.clone();
    for a in 0..dims {
        lap = lap.add(&grads[a].dy(a)?)?;
    }

    // W = 1 + |D'u|² + u_t²
    let one = LogPolynomial::term(
        u.grid.clone(),
        0,
        0,
        Field::constant(1.0),
        u.trunc_order,
    );
    let mut w = one.add(&ut.mul(&ut)?)?;
    for g in &grads {
        w = w.add(&g.mul(g)?)?;
    }

    // u_i u_j u_ij over tangential and normal indices
    let mut quad = ut.mul(&ut)?.mul(&utt)?;
    for a in 0..dims {
        let uat = grads[a].dt();
        quad = quad.add(&grads[a].mul(&ut)?.mul(&uat)?.scale(2.0))?;
        for (b, gb) in grads.iter().enumerate() {
            let uab = grads[a].dy(b)?;
            quad = quad.add(&grads[a].mul(gb)?.mul(&uab)?)?;
        }
    }

    let q = lap
        .sub(&quad.mul(&w.recip()?)?)?
        .add(&ut.shift(-1).scale(-(n as f64)))?;
    Ok(q.truncate(k.min(q.trunc_order)))
}

/// Order-by-order expansion of `Q(u) = 0` from boundary data `φ`, through
/// `t^k`. Free coefficients at the resonant power `n + 1` are taken from
/// `nonlocal` (keyed by power, default zero). Each determined coefficient is
/// read off the residual; at a non-resonant power `i` the log levels are
/// solved top-down (the coupling in the log power is triangular), at the
/// resonance the residual at `(log t)^j` forces the coefficient at
/// `(log t)^{j+1}`.
pub fn compute_coeffs_with_nonlocal(
    phi: &Field,
    grid: &Grid,
    n: usize,
    k: i32,
    nonlocal: &BTreeMap<i32, Field>,
) -> Result<ExpansionResult> {
    if n < 2 {
        return Err(Error::Dimension(format!("ambient dimension n = {n} must be >= 2")));
    }
    if k < 2 {
        return Err(Error::Order(format!("expansion order k = {k} must be >= 2")));
    }
    let mut u = LogPolynomial::term(grid.clone(), 0, 0, phi.clone(), k);
    let mut provenance = BTreeMap::new();
    let nn = n as i32;

    for i in 2..=k {
        let q = apply_q(&u, n, i - 2)?;
        let jmax = q.max_log_power(i - 2).unwrap_or(0);
        let mut f: Vec<Field> = (0..=jmax)
            .map(|j| q.coeff(i - 2, j).cloned().unwrap_or(Field::constant(0.0)))
            .collect();
        // a t^i (log t)^j term contributes to the residual at t^{i-2} as
        //   A (log)^j + B_j (log)^{j-1} + C_j (log)^{j-2}
        let a = (i * (i - 1 - nn)) as f64;
        let b = |j: u32| (j as i32 * (2 * i - 1 - nn)) as f64;
        let c_coupling = |j: u32| (j * (j - 1)) as f64;

        if i != nn + 1 {
            for j in (0..=jmax).rev() {
                let cij = f[j as usize].scale(-1.0 / a);
                if cij.sup_norm(grid) >= crate::logpoly::PRUNE_TOL {
                    provenance.insert((i, j), Provenance::Local);
                }
                if j >= 1 {
                    f[(j - 1) as usize] =
                        f[(j - 1) as usize].add(&cij.scale(b(j)), grid)?;
                }
                if j >= 2 {
                    f[(j - 2) as usize] =
                        f[(j - 2) as usize].add(&cij.scale(c_coupling(j)), grid)?;
                }
                u.add_term(i, j, cij);
            }
        } else {
            // resonance: the indicial factor vanishes; the (log)^j residual
            // level is killed by the (log)^{j+1} coefficient
            for j in (0..=jmax).rev() {
                let cij1 = f[j as usize].scale(-1.0 / b(j + 1));
                if cij1.sup_norm(grid) >= crate::logpoly::PRUNE_TOL {
                    provenance.insert((i, j + 1), Provenance::Local);
                }
                if j >= 1 {
                    f[(j - 1) as usize] =
                        f[(j - 1) as usize].add(&cij1.scale(c_coupling(j + 1)), grid)?;
                }
                u.add_term(i, j + 1, cij1);
            }
            if let Some(free) = nonlocal.get(&i) {
                u.add_term(i, 0, free.clone());
                provenance.insert((i, 0), Provenance::NonlocalInput);
            }
        }
    }

    // residual below the guaranteed order t^{k-1} should be noise
    let q = apply_q(&u, n, k - 2)?;
    let mut low = 0.0f64;
    for (i, j) in q.keys() {
        if i <= k - 2 {
            if let Some(c) = q.coeff(i, j) {
                low = low.max(c.sup_norm(grid));
            }
        }
    }

    let mut series = u;
    series.terms.remove(&(0, 0));
    Ok(ExpansionResult {
        n,
        order: k,
        grid: grid.clone(),
        phi: phi.clone(),
        series,
        provenance,
        low_order_residual_sup: low,
    })
}

/// The local expansion `u_*`: coefficients determined by `φ` alone, through
/// `t^k`. Beyond the resonant power `n + 1` the free coefficient is taken as
/// zero; coefficients there are exact only when the true nonlocal coefficient
/// vanishes.
pub fn compute_local_coeffs(phi: &Field, grid: &Grid, n: usize, k: i32) -> Result<ExpansionResult> {
    compute_coeffs_with_nonlocal(phi, grid, n, k, &BTreeMap::new())
}

/// Closed form for the quadratic coefficient,
/// `c₂ = ½ sqrt(1+|Dφ|²) H`, kept as an independent oracle for the recursion.
pub fn c2_closed_form(phi: &Field, n: usize, grid: &Grid) -> Result<Field> {
    let dims = n - 1;
    let h = mean_curvature(phi, dims, grid)?;
    let mut w2 = Field::constant(1.0);
    for a in 0..dims {
        let g = phi.deriv(a, grid)?;
        w2 = w2.add(&g.mul(&g, grid)?, grid)?;
    }
    h.mul(&w2.sqrt(grid)?, grid).map(|f| f.scale(0.5 * dims as f64 / (n - 1) as f64))
}

/// Closed form for the `t⁴ log t` coefficient in ambient dimension 3:
/// `c_{4,1} = −(1/8) sqrt(1+|Dφ|²) (Δ_Σ H + 2H(H²−K))`.
pub fn willmore_c41(phi: &Field, grid: &Grid) -> Result<Field> {
    let res = willmore_residual(phi, 2, grid)?;
    let mut w2 = Field::constant(1.0);
    for a in 0..2 {
        let g = phi.deriv(a, grid)?;
        w2 = w2.add(&g.mul(&g, grid)?, grid)?;
    }
    res.mul(&w2.sqrt(grid)?, grid).map(|f| f.scale(-0.125))
}

/// Merge externally supplied coefficients (powers `i ≥ n+1`, log powers within
/// the bound `j ≤ ⌊(i−1)/n⌋`) into a local expansion and truncate at `k`.
pub fn build_uk(
    local: &ExpansionResult,
    nonlocal: &[(i32, u32, Field)],
    k: i32,
) -> Result<ExpansionResult> {
    let n = local.n as i32;
    let mut series = local.series.truncate(k);
    let mut provenance: BTreeMap<(i32, u32), Provenance> = local
        .provenance
        .iter()
        .filter(|(&(i, _), _)| i <= k)
        .map(|(&key, &p)| (key, p))
        .collect();
    for (i, j, c) in nonlocal {
        if *i < n + 1 {
            return Err(Error::Validation(format!(
                "nonlocal coefficient at power {i} below the first free power {}",
                n + 1
            )));
        }
        if *j > ((*i - 1) / n) as u32 {
            return Err(Error::Validation(format!(
                "log power {j} at t^{i} violates the bound floor((i-1)/n) = {}",
                (*i - 1) / n
            )));
        }
        if provenance.contains_key(&(*i, *j)) {
            return Err(Error::Validation(format!(
                "duplicate coefficient injection at (i, j) = ({i}, {j})"
            )));
        }
        if *i <= k {
            series.add_term(*i, *j, c.clone());
            provenance.insert((*i, *j), Provenance::NonlocalInput);
        }
    }
    Ok(ExpansionResult {
        n: local.n,
        order: k,
        grid: local.grid.clone(),
        phi: local.phi.clone(),
        series,
        provenance,
        low_order_residual_sup: local.low_order_residual_sup,
    })
}

/// Coefficients of the boundary expansion of the graph height function over a
/// positively curved domain boundary, plus the parameters of its model ODE.
#[derive(Debug, Clone)]
pub struct FGraphCoeffs {
    /// Leading coefficient `a₁ = sqrt(2/H)`.
    pub a1: Field,
    /// `a_{3,1} = (Δ_∂Ω H + 2H(H²−K)) / (4 sqrt 2 H^{5/2})` (ambient
    /// dimension 3 only).
    pub a31: Option<Field>,
    /// Model ODE `g_tt − (n−2) g_t/t − n g/t² = ...`: coefficients of the
    /// `g_t/t` and `g/t²` terms.
    pub p: i32,
    pub q: i32,
    /// Indicial roots: `(m_low, m_high) = (−1, n)`.
    pub m_low: i32,
    pub m_high: i32,
}

/// §-level coefficient formulas for the height-function expansion. `h` is the
/// boundary mean curvature (must be positive), `kappa` the Gauss curvature
/// (required for the `a_{3,1}` formula when `n = 3`). The surface Laplacian of
/// `H` is taken in the flat chart; curved-chart geometry is out of scope.
pub fn f_graph_coeffs(
    h: &Field,
    kappa: Option<&Field>,
    n: usize,
    grid: &Grid,
) -> Result<FGraphCoeffs> {
    let hmin = match h {
        Field::Analytic(a) => {
            a.sample(grid).values.iter().fold(f64::INFINITY, |m, v| m.min(*v))
        }
        Field::Grid(g) => g.values.iter().fold(f64::INFINITY, |m, v| m.min(*v)),
    };
    if hmin <= 0.0 {
        return Err(Error::Positivity(format!(
            "mean curvature must be positive (min = {hmin:.3e})"
        )));
    }
    let a1 = h.recip(grid)?.scale(2.0).sqrt(grid)?;
    let a31 = match (n, kappa) {
        (3, Some(k)) => {
            let dims = grid.dims.max(1);
            let mut lap_h = Field::constant(0.0);
            for a in 0..dims {
                lap_h = lap_h.add(&h.deriv(a, grid)?.deriv(a, grid)?, grid)?;
            }
            let h2 = h.mul(h, grid)?;
            let num = lap_h.add(&h.scale(2.0).mul(&h2.sub(k, grid)?, grid)?, grid)?;
            let hinv = h.recip(grid)?;
            let h_m52 = hinv.mul(&hinv, grid)?.mul(&hinv.sqrt(grid)?, grid)?;
            Some(
                num.mul(&h_m52, grid)?
                    .scale(1.0 / (4.0 * std::f64::consts::SQRT_2)),
            )
        }
        _ => None,
    };
    let ni = n as i32;
    Ok(FGraphCoeffs { a1, a31, p: -(ni - 2), q: -ni, m_low: -1, m_high: ni })
}
