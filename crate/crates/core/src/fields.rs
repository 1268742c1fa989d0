//! Tangential boundary data and its differential geometry.
//!
//! Boundary data lives on the tangential slice (dimension 1 or 2). It comes in
//! two flavors: sampled values on a uniform grid ([`GridField`], derivatives by
//! second-order finite differences) and closed-form data ([`AnalyticField`],
//! derivatives by exact jet arithmetic). [`Field`] unifies the two so the
//! expansion machinery has a single code path; analytic inputs stay analytic
//! through arithmetic, so curvature quantities and expansion coefficients can
//! be validated without discretization error.
//!
//! # Example
//!
//! ```
//! use graphexp::fields::{mean_curvature, AnalyticField, Field, Grid};
//!
//! // a sphere cap of radius R has mean curvature 1/R everywhere
//! let grid = Grid::line(0.2, 9);
//! let phi = Field::Analytic(AnalyticField::sphere_cap(1, 2.0));
//! let h = mean_curvature(&phi, 1, &grid).unwrap();
//! assert!((h.eval_index(&grid, [4, 0]) - 0.5).abs() < 1e-12);
//! ```

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::jet::Jet;

/// Uniform tangential grid on a box `[-w, w]^dims` (dims 0 means a scalar).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub dims: usize,
    pub shape: [usize; 2],
    pub h: f64,
    pub origin: [f64; 2],
}

impl Grid {
    pub fn scalar() -> Self {
        Grid { dims: 0, shape: [1, 1], h: 1.0, origin: [0.0, 0.0] }
    }

    /// Symmetric 1-d grid with `n` points on `[-w, w]`.
    pub fn line(w: f64, n: usize) -> Self {
        assert!(n >= 2);
        Grid { dims: 1, shape: [n, 1], h: 2.0 * w / (n - 1) as f64, origin: [-w, 0.0] }
    }

    /// Symmetric 2-d grid with `n x n` points on `[-w, w]^2`.
    pub fn square(w: f64, n: usize) -> Self {
        assert!(n >= 2);
        Grid { dims: 2, shape: [n, n], h: 2.0 * w / (n - 1) as f64, origin: [-w, -w] }
    }

    pub fn len(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_scalar(&self) -> bool {
        self.dims == 0
    }

    #[inline]
    pub fn index(&self, i: [usize; 2]) -> usize {
        i[1] * self.shape[0] + i[0]
    }

    #[inline]
    pub fn point(&self, i: [usize; 2]) -> [f64; 2] {
        [self.origin[0] + self.h * i[0] as f64, self.origin[1] + self.h * i[1] as f64]
    }

    pub fn indices(&self) -> impl Iterator<Item = [usize; 2]> {
        let (n0, n1) = (self.shape[0], self.shape[1]);
        (0..n1).flat_map(move |b| (0..n0).map(move |a| [a, b]))
    }

    pub fn compatible(&self, other: &Grid) -> bool {
        self.is_scalar()
            || other.is_scalar()
            || (self.dims == other.dims
                && self.shape == other.shape
                && (self.h - other.h).abs() <= 1e-12 * self.h.abs().max(1.0)
                && (self.origin[0] - other.origin[0]).abs() <= 1e-12
                && (self.origin[1] - other.origin[1]).abs() <= 1e-12)
    }

    /// True if the point at `i` lies strictly inside the ball of radius
    /// `radius - margin` (the usual mask for curvature checks).
    pub fn in_ball(&self, i: [usize; 2], radius: f64, margin: f64) -> bool {
        let p = self.point(i);
        let r2 = match self.dims {
            0 => 0.0,
            1 => p[0] * p[0],
            _ => p[0] * p[0] + p[1] * p[1],
        };
        r2.sqrt() < radius - margin
    }
}

/// Scalar function sampled on a [`Grid`].
#[derive(Debug, Clone)]
pub struct GridField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("non-finite value in grid field".into()));
        }
        Ok(GridField { grid, values })
    }

    pub fn constant(grid: Grid, v: f64) -> Self {
        let n = grid.len();
        GridField { grid, values: vec![v; n] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = grid.indices().map(|i| f(grid.point(i))).collect();
        GridField { grid, values }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    fn zip(&self, o: &GridField, f: impl Fn(f64, f64) -> f64) -> Result<GridField> {
        if !self.grid.compatible(&o.grid) {
            return Err(Error::GridMismatch("binary op on incompatible grids".into()));
        }
        // Broadcast a scalar grid against a real one.
        if self.grid.is_scalar() && !o.grid.is_scalar() {
            let s = self.values[0];
            return Ok(GridField {
                grid: o.grid.clone(),
                values: o.values.iter().map(|&y| f(s, y)).collect(),
            });
        }
        if o.grid.is_scalar() && !self.grid.is_scalar() {
            let s = o.values[0];
            return Ok(GridField {
                grid: self.grid.clone(),
                values: self.values.iter().map(|&x| f(x, s)).collect(),
            });
        }
        Ok(GridField {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&o.values).map(|(&x, &y)| f(x, y)).collect(),
        })
    }
}

/// Second-order finite-difference first derivative along `axis`.
///
/// Centered in the interior, one-sided (3-point) at the edges.
pub fn fd_derivative(f: &GridField, axis: usize) -> Result<GridField> {
    fd_apply(f, axis, false)
}

/// Second-order finite-difference second derivative along `axis`.
pub fn fd_second(f: &GridField, axis: usize) -> Result<GridField> {
    fd_apply(f, axis, true)
}

/// Mixed derivative `∂_0 ∂_1 f` (dims = 2 only).
pub fn fd_mixed(f: &GridField) -> Result<GridField> {
    if f.grid.dims != 2 {
        return Err(Error::Dimension("mixed derivative needs a 2-d grid".into()));
    }
    fd_derivative(&fd_derivative(f, 0)?, 1)
}

fn fd_apply(f: &GridField, axis: usize, second: bool) -> Result<GridField> {
    let g = &f.grid;
    if axis >= g.dims {
        return Err(Error::Dimension(format!("axis {} out of range for dims {}", axis, g.dims)));
    }
    let n = g.shape[axis];
    if n < 5 {
        return Err(Error::Shape(format!("need at least 5 points per axis, got {n}")));
    }
    let h = g.h;
    let mut out = vec![0.0; g.len()];
    let get = |i: [usize; 2]| f.values[g.index(i)];
    for idx in g.indices() {
        let k = idx[axis];
        let at = |d: i64| {
            let mut j = idx;
            j[axis] = (k as i64 + d) as usize;
            get(j)
        };
        let v = if second {
            if k == 0 {
                (2.0 * at(0) - 5.0 * at(1) + 4.0 * at(2) - at(3)) / (h * h)
            } else if k == n - 1 {
                (2.0 * at(0) - 5.0 * at(-1) + 4.0 * at(-2) - at(-3)) / (h * h)
            } else {
                (at(1) - 2.0 * at(0) + at(-1)) / (h * h)
            }
        } else if k == 0 {
            (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
        } else if k == n - 1 {
            (3.0 * at(0) - 4.0 * at(-1) + at(-2)) / (2.0 * h)
        } else {
            (at(1) - at(-1)) / (2.0 * h)
        };
        out[g.index(idx)] = v;
    }
    Ok(GridField { grid: g.clone(), values: out })
}

/// Closed-form tangential data: evaluates to a [`Jet`] of any requested order
/// at any point, so derivatives of arbitrary combinations stay exact.
#[derive(Clone)]
pub struct AnalyticField {
    dims: usize,
    f: Rc<dyn Fn([f64; 2], usize) -> Jet>,
}

impl std::fmt::Debug for AnalyticField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "AnalyticField(dims={})", self.dims)
    }
}

impl AnalyticField {
    /// Wraps `f` with per-node memoization keyed on (point bits, order).
    /// Expansion recursions share subexpressions through `Rc`, so caching at
    /// every node keeps evaluation cost proportional to the expression DAG
    /// size instead of the unfolded tree size.
    pub fn from_jet_fn(dims: usize, f: impl Fn([f64; 2], usize) -> Jet + 'static) -> Self {
        let cache: RefCell<HashMap<([u64; 2], usize), Jet>> = RefCell::new(HashMap::new());
        AnalyticField {
            dims,
            f: Rc::new(move |x: [f64; 2], ord: usize| {
                let key = ([x[0].to_bits(), x[1].to_bits()], ord);
                if let Some(j) = cache.borrow().get(&key) {
                    return j.clone();
                }
                let j = f(x, ord);
                cache.borrow_mut().insert(key, j.clone());
                j
            }),
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn constant(dims: usize, v: f64) -> Self {
        AnalyticField::from_jet_fn(dims, move |_, ord| Jet::constant(dims.max(1), ord, v))
    }

    pub fn coord(dims: usize, axis: usize) -> Self {
        AnalyticField::from_jet_fn(dims, move |x, ord| Jet::coord(dims.max(1), ord, axis, x[axis]))
    }

    /// `R - sqrt(R^2 - |y'|^2)`: the boundary trace of the hemisphere of
    /// radius `R`. Defined for `|y'| < R`.
    pub fn sphere_cap(dims: usize, radius: f64) -> Self {
        AnalyticField::from_jet_fn(dims, move |x, ord| {
            let jd = dims.max(1);
            let mut rho2 = Jet::zero(jd, ord);
            for axis in 0..dims.max(1).min(dims) {
                let c = Jet::coord(jd, ord, axis, x[axis]);
                rho2 = rho2.add(&c.mul(&c));
            }
            if dims == 0 {
                rho2 = Jet::zero(jd, ord);
            }
            let inner = Jet::constant(jd, ord, radius * radius).sub(&rho2);
            assert!(
                inner.value() > 0.0,
                "sphere_cap evaluated outside its domain (|y'| >= R)"
            );
            Jet::constant(jd, ord, radius).sub(&inner.sqrt())
        })
    }

    /// Polynomial in `y_1`: `sum_k coeffs[k] y_1^k`.
    pub fn polynomial(dims: usize, coeffs: Vec<f64>) -> Self {
        AnalyticField::from_jet_fn(dims, move |x, ord| {
            let jd = dims.max(1);
            let y = Jet::coord(jd, ord, 0, x[0]);
            let mut acc = Jet::zero(jd, ord);
            for &c in coeffs.iter().rev() {
                acc = acc.mul(&y).add(&Jet::constant(jd, ord, c));
            }
            acc
        })
    }

    /// `amp * sin(freq * y_1)`.
    pub fn trig(dims: usize, freq: f64, amp: f64) -> Self {
        AnalyticField::sin_axis(dims, 0, freq, amp)
    }

    /// `amp * sin(freq * y_axis)` (building block for richer test data).
    pub fn sin_axis(dims: usize, axis: usize, freq: f64, amp: f64) -> Self {
        AnalyticField::from_jet_fn(dims, move |x, ord| {
            let jd = dims.max(1);
            let mut j = Jet::zero(jd, ord);
            let mut fact = 1.0;
            for a in 0..=ord {
                if a > 0 {
                    fact *= a as f64;
                }
                let d = amp * freq.powi(a as i32)
                    * (freq * x[axis] + a as f64 * std::f64::consts::FRAC_PI_2).sin();
                j.set(if axis == 0 { (a, 0) } else { (0, a) }, d / fact);
            }
            j
        })
    }

    pub fn jet(&self, x: [f64; 2], order: usize) -> Jet {
        (self.f)(x, order)
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        self.jet(x, 0).value()
    }

    fn zip(&self, o: &AnalyticField, f: impl Fn(&Jet, &Jet) -> Jet + 'static) -> AnalyticField {
        assert_eq!(self.dims, o.dims, "analytic field dims mismatch");
        let a = self.f.clone();
        let b = o.f.clone();
        AnalyticField::from_jet_fn(self.dims, move |x, ord| f(&a(x, ord), &b(x, ord)))
    }

    pub fn add(&self, o: &AnalyticField) -> AnalyticField {
        self.zip(o, |a, b| a.add(b))
    }

    pub fn sub(&self, o: &AnalyticField) -> AnalyticField {
        self.zip(o, |a, b| a.sub(b))
    }

    pub fn mul(&self, o: &AnalyticField) -> AnalyticField {
        self.zip(o, |a, b| a.mul(b))
    }

    pub fn scale(&self, s: f64) -> AnalyticField {
        let a = self.f.clone();
        AnalyticField::from_jet_fn(self.dims, move |x, ord| a(x, ord).scale(s))
    }

    pub fn recip(&self) -> AnalyticField {
        let a = self.f.clone();
        AnalyticField::from_jet_fn(self.dims, move |x, ord| a(x, ord).recip())
    }

    pub fn sqrt(&self) -> AnalyticField {
        let a = self.f.clone();
        AnalyticField::from_jet_fn(self.dims, move |x, ord| a(x, ord).sqrt())
    }

    pub fn derivative(&self, axis: usize) -> AnalyticField {
        let a = self.f.clone();
        AnalyticField::from_jet_fn(self.dims, move |x, ord| a(x, ord + 1).derivative(axis))
    }

    pub fn sample(&self, grid: &Grid) -> GridField {
        GridField::from_fn(grid.clone(), |p| self.eval(p))
    }
}

/// A tangential scalar field: analytic or sampled. The universal coefficient
/// type for log-polynomials and expansions.
#[derive(Debug, Clone)]
pub enum Field {
    Analytic(AnalyticField),
    Grid(GridField),
}

impl Field {
    pub fn constant(v: f64) -> Field {
        Field::Grid(GridField::constant(Grid::scalar(), v))
    }

    pub fn is_scalar_constant(&self) -> bool {
        matches!(self, Field::Grid(g) if g.grid.is_scalar())
    }

    pub fn sample(&self, grid: &Grid) -> Result<GridField> {
        match self {
            Field::Analytic(a) => Ok(a.sample(grid)),
            Field::Grid(g) => {
                if g.grid.is_scalar() && !grid.is_scalar() {
                    Ok(GridField::constant(grid.clone(), g.values[0]))
                } else if g.grid.compatible(grid) {
                    Ok(g.clone())
                } else {
                    Err(Error::GridMismatch("cannot resample a grid field".into()))
                }
            }
        }
    }

    pub fn eval_index(&self, grid: &Grid, i: [usize; 2]) -> f64 {
        match self {
            Field::Analytic(a) => a.eval(grid.point(i)),
            Field::Grid(g) => {
                if g.grid.is_scalar() {
                    g.values[0]
                } else {
                    g.values[g.grid.index(i)]
                }
            }
        }
    }

    pub fn sup_norm(&self, grid: &Grid) -> f64 {
        match self {
            Field::Analytic(a) => a.sample(grid).sup_norm(),
            Field::Grid(g) => g.sup_norm(),
        }
    }

    fn binary(
        &self,
        o: &Field,
        grid: &Grid,
        fa: impl Fn(&AnalyticField, &AnalyticField) -> AnalyticField,
        fg: impl Fn(f64, f64) -> f64,
    ) -> Result<Field> {
        match (self, o) {
            (Field::Analytic(a), Field::Analytic(b)) => Ok(Field::Analytic(fa(a, b))),
            (Field::Analytic(a), Field::Grid(g)) if g.grid.is_scalar() => {
                Ok(Field::Analytic(fa(a, &AnalyticField::constant(a.dims(), g.values[0]))))
            }
            (Field::Grid(g), Field::Analytic(b)) if g.grid.is_scalar() => {
                Ok(Field::Analytic(fa(&AnalyticField::constant(b.dims(), g.values[0]), b)))
            }
            _ => {
                let a = self.sample(grid)?;
                let b = o.sample(grid)?;
                Ok(Field::Grid(a.zip(&b, fg)?))
            }
        }
    }

    pub fn add(&self, o: &Field, grid: &Grid) -> Result<Field> {
        self.binary(o, grid, |a, b| a.add(b), |x, y| x + y)
    }

    pub fn sub(&self, o: &Field, grid: &Grid) -> Result<Field> {
        self.binary(o, grid, |a, b| a.sub(b), |x, y| x - y)
    }

    pub fn mul(&self, o: &Field, grid: &Grid) -> Result<Field> {
        self.binary(o, grid, |a, b| a.mul(b), |x, y| x * y)
    }

    pub fn scale(&self, s: f64) -> Field {
        match self {
            Field::Analytic(a) => Field::Analytic(a.scale(s)),
            Field::Grid(g) => Field::Grid(GridField {
                grid: g.grid.clone(),
                values: g.values.iter().map(|v| v * s).collect(),
            }),
        }
    }

    pub fn recip(&self, grid: &Grid) -> Result<Field> {
        match self {
            Field::Analytic(a) => {
                let min = a.sample(grid).values.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
                if min < 1e-8 {
                    return Err(Error::SingularReciprocal(min));
                }
                Ok(Field::Analytic(a.recip()))
            }
            Field::Grid(g) => {
                let min = g.values.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
                if min < 1e-8 {
                    return Err(Error::SingularReciprocal(min));
                }
                Ok(Field::Grid(GridField {
                    grid: g.grid.clone(),
                    values: g.values.iter().map(|v| 1.0 / v).collect(),
                }))
            }
        }
    }

    pub fn sqrt(&self, _grid: &Grid) -> Result<Field> {
        match self {
            Field::Analytic(a) => Ok(Field::Analytic(a.sqrt())),
            Field::Grid(g) => {
                if g.values.iter().any(|&v| v <= 0.0) {
                    return Err(Error::Positivity("sqrt of a non-positive field".into()));
                }
                Ok(Field::Grid(GridField {
                    grid: g.grid.clone(),
                    values: g.values.iter().map(|v| v.sqrt()).collect(),
                }))
            }
        }
    }

    /// Tangential derivative along `axis`: exact for analytic fields,
    /// second-order finite differences for sampled ones. Scalar constants
    /// differentiate to zero.
    pub fn deriv(&self, axis: usize, grid: &Grid) -> Result<Field> {
        match self {
            Field::Analytic(a) => Ok(Field::Analytic(a.derivative(axis))),
            Field::Grid(g) if g.grid.is_scalar() => Ok(Field::constant(0.0)),
            Field::Grid(g) => {
                let _ = grid;
                Ok(Field::Grid(fd_derivative(g, axis)?))
            }
        }
    }
}

/// Spec'd bundle: gradient and Hessian of a sampled field by second-order
/// stencils. `order` is 1 (gradient only) or 2.
pub struct FdDerivatives {
    pub gradient: Vec<GridField>,
    pub hessian: Vec<Vec<GridField>>,
}

pub fn fd_derivatives(f: &GridField, order: usize) -> Result<FdDerivatives> {
    if order == 0 || order > 2 {
        return Err(Error::Order(format!("fd_derivatives supports order 1 or 2, got {order}")));
    }
    let d = f.grid.dims;
    let mut gradient = Vec::new();
    for a in 0..d {
        gradient.push(fd_derivative(f, a)?);
    }
    let mut hessian = Vec::new();
    if order == 2 {
        for a in 0..d {
            let mut row = Vec::new();
            for b in 0..d {
                row.push(if a == b {
                    fd_second(f, a)?
                } else {
                    fd_mixed(f)?
                });
            }
            hessian.push(row);
        }
    }
    Ok(FdDerivatives { gradient, hessian })
}

fn grad_and_w2(phi: &Field, dims: usize, grid: &Grid) -> Result<(Vec<Field>, Field)> {
    let mut grad = Vec::new();
    for a in 0..dims {
        grad.push(phi.deriv(a, grid)?);
    }
    let mut w2 = Field::constant(1.0);
    for g in &grad {
        w2 = w2.add(&g.mul(g, grid)?, grid)?;
    }
    Ok((grad, w2))
}

/// Mean curvature of the graph `x_n = phi(y')`, AVERAGE convention
/// (sum of principal curvatures divided by `dims`), signed so that a
/// sphere cap has positive mean curvature:
///
/// `H = (Δφ - φ_α φ_β φ_αβ / (1+|Dφ|²)) / (dims · sqrt(1+|Dφ|²))`.
///
/// The average convention is the one for which the quadratic boundary
/// coefficient satisfies `c₂ = ½ sqrt(1+|Dφ|²) H`.
pub fn mean_curvature(phi: &Field, dims: usize, grid: &Grid) -> Result<Field> {
    let (grad, w2) = grad_and_w2(phi, dims, grid)?;
    let mut lap = Field::constant(0.0);
    let mut quad = Field::constant(0.0);
    for a in 0..dims {
        for b in 0..dims {
            let pab = phi.deriv(a, grid)?.deriv(b, grid)?;
            if a == b {
                lap = lap.add(&pab, grid)?;
            }
            quad = quad.add(&grad[a].mul(&grad[b], grid)?.mul(&pab, grid)?, grid)?;
        }
    }
    let num = lap.sub(&quad.mul(&w2.recip(grid)?, grid)?, grid)?;
    let denom = w2.sqrt(grid)?.scale(dims as f64).recip(grid)?;
    num.mul(&denom, grid)
}

/// Gauss curvature of the graph `x_n = phi(y')` (dims = 2 only):
/// `K = det(Hess φ) / (1+|Dφ|²)²`.
pub fn gauss_curvature(phi: &Field, dims: usize, grid: &Grid) -> Result<Field> {
    if dims != 2 {
        return Err(Error::Dimension("gauss_curvature needs tangential dimension 2".into()));
    }
    let (_, w2) = grad_and_w2(phi, dims, grid)?;
    let p11 = phi.deriv(0, grid)?.deriv(0, grid)?;
    let p22 = phi.deriv(1, grid)?.deriv(1, grid)?;
    let p12 = phi.deriv(0, grid)?.deriv(1, grid)?;
    let det = p11.mul(&p22, grid)?.sub(&p12.mul(&p12, grid)?, grid)?;
    let w2inv = w2.recip(grid)?;
    det.mul(&w2inv, grid)?.mul(&w2inv, grid)
}

/// Laplace–Beltrami operator of the graph metric applied to `f`:
/// `Δ_Σ f = (1/sqrt g) ∂_α ( sqrt g g^{αβ} ∂_β f )` with
/// `g_{αβ} = δ_{αβ} + φ_α φ_β`, `det g = 1 + |Dφ|²`.
pub fn laplace_beltrami(phi: &Field, f: &Field, dims: usize, grid: &Grid) -> Result<Field> {
    let (grad, w2) = grad_and_w2(phi, dims, grid)?;
    let sqrtg = w2.sqrt(grid)?;
    let inv_sqrtg = sqrtg.recip(grid)?;
    let w2inv = w2.recip(grid)?;
    let mut acc = Field::constant(0.0);
    for a in 0..dims {
        // flux^a = sqrt g * g^{ab} f_b
        let mut flux = Field::constant(0.0);
        for b in 0..dims {
            let gab = if a == b {
                Field::constant(1.0).sub(&grad[a].mul(&grad[b], grid)?.mul(&w2inv, grid)?, grid)?
            } else {
                grad[a].mul(&grad[b], grid)?.mul(&w2inv, grid)?.scale(-1.0)
            };
            flux = flux.add(&gab.mul(&f.deriv(b, grid)?, grid)?, grid)?;
        }
        flux = flux.mul(&sqrtg, grid)?;
        acc = acc.add(&flux.deriv(a, grid)?, grid)?;
    }
    acc.mul(&inv_sqrtg, grid)
}

/// Willmore residual `Δ_Σ H + 2H(H² - K)` of the graph `x_n = phi(y')`
/// (dims = 2 only). Vanishes exactly on planes and spheres.
pub fn willmore_residual(phi: &Field, dims: usize, grid: &Grid) -> Result<Field> {
    if dims != 2 {
        return Err(Error::Dimension("willmore_residual needs tangential dimension 2".into()));
    }
    let h = mean_curvature(phi, dims, grid)?;
    let k = gauss_curvature(phi, dims, grid)?;
    let lb = laplace_beltrami(phi, &h, dims, grid)?;
    let h2 = h.mul(&h, grid)?;
    lb.add(&h.scale(2.0).mul(&h2.sub(&k, grid)?, grid)?, grid)
}
