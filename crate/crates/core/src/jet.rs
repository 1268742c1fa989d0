//! Truncated Taylor ("jet") arithmetic in one or two variables.
//!
//! A `Jet` holds the Taylor coefficients of a function at a point, up to a
//! requested total order. Arithmetic on jets propagates derivatives exactly,
//! so analytic boundary data can supply machine-precision derivatives of any
//! arithmetic combination (curvatures, expansion coefficients, ...) without
//! finite-difference error.
//!
//! Coefficients are monomial coefficients: `c[(a, b)] = ∂_x^a ∂_y^b f / (a! b!)`.
//! Storage is a rectangular `(order+1) x (order+1)` block; entries with
//! `a + b > order` are kept at zero.

#[derive(Debug, Clone)]
pub struct Jet {
    dims: usize,
    order: usize,
    c: Vec<f64>,
}

impl Jet {
    pub fn zero(dims: usize, order: usize) -> Self {
        let len = if dims <= 1 { order + 1 } else { (order + 1) * (order + 1) };
        Jet { dims, order, c: vec![0.0; len] }
    }

    pub fn constant(dims: usize, order: usize, v: f64) -> Self {
        let mut j = Jet::zero(dims, order);
        j.c[0] = v;
        j
    }

    /// The coordinate function `x_axis`, as a jet at base point `x0`.
    pub fn coord(dims: usize, order: usize, axis: usize, x0: f64) -> Self {
        let mut j = Jet::zero(dims, order);
        j.c[0] = x0;
        if order >= 1 {
            *j.at_mut(if axis == 0 { (1, 0) } else { (0, 1) }) = 1.0;
        }
        j
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    #[inline]
    fn idx(&self, a: usize, b: usize) -> usize {
        if self.dims <= 1 {
            a
        } else {
            a * (self.order + 1) + b
        }
    }

    pub fn at(&self, ab: (usize, usize)) -> f64 {
        let (a, b) = ab;
        if a + b > self.order || (self.dims <= 1 && b > 0) {
            return 0.0;
        }
        self.c[self.idx(a, b)]
    }

    fn at_mut(&mut self, ab: (usize, usize)) -> &mut f64 {
        let i = self.idx(ab.0, ab.1);
        &mut self.c[i]
    }

    /// Monomial coefficient setter; `a + b` must be within the order.
    pub fn set(&mut self, ab: (usize, usize), v: f64) {
        assert!(ab.0 + ab.1 <= self.order);
        *self.at_mut(ab) = v;
    }

    fn for_each_index(dims: usize, order: usize, mut f: impl FnMut(usize, usize)) {
        if dims <= 1 {
            for a in 0..=order {
                f(a, 0);
            }
        } else {
            for a in 0..=order {
                for b in 0..=(order - a) {
                    f(a, b);
                }
            }
        }
    }

    pub fn add(&self, o: &Jet) -> Jet {
        self.zip(o, |x, y| x + y)
    }

    pub fn sub(&self, o: &Jet) -> Jet {
        self.zip(o, |x, y| x - y)
    }

    fn zip(&self, o: &Jet, f: impl Fn(f64, f64) -> f64) -> Jet {
        assert_eq!(self.dims, o.dims);
        assert_eq!(self.order, o.order);
        let mut r = self.clone();
        for (a, b) in r.c.iter_mut().zip(&o.c) {
            *a = f(*a, *b);
        }
        r
    }

    pub fn scale(&self, s: f64) -> Jet {
        let mut r = self.clone();
        for a in r.c.iter_mut() {
            *a *= s;
        }
        r
    }

    pub fn mul(&self, o: &Jet) -> Jet {
        assert_eq!(self.dims, o.dims);
        assert_eq!(self.order, o.order);
        let mut r = Jet::zero(self.dims, self.order);
        let ord = self.order;
        Jet::for_each_index(self.dims, ord, |a1, b1| {
            let x = self.at((a1, b1));
            if x == 0.0 {
                return;
            }
            Jet::for_each_index(self.dims, ord - a1 - b1, |a2, b2| {
                let y = o.at((a2, b2));
                if y != 0.0 {
                    *r.at_mut((a1 + a2, b1 + b2)) += x * y;
                }
            });
        });
        r
    }

    /// `1 / self`; panics when the constant term is zero.
    pub fn recip(&self) -> Jet {
        let c0 = self.value();
        assert!(c0 != 0.0, "jet reciprocal of zero constant term");
        // self = c0 (1 + e) with e nilpotent; 1/self = (1/c0) sum (-e)^k.
        let mut e = self.scale(1.0 / c0);
        e.c[0] = 0.0;
        let mut acc = Jet::constant(self.dims, self.order, 1.0);
        let mut pow = Jet::constant(self.dims, self.order, 1.0);
        for _ in 1..=self.order {
            pow = pow.mul(&e).scale(-1.0);
            acc = acc.add(&pow);
        }
        acc.scale(1.0 / c0)
    }

    /// `sqrt(self)`; panics when the constant term is not positive.
    pub fn sqrt(&self) -> Jet {
        let c0 = self.value();
        assert!(c0 > 0.0, "jet sqrt needs a positive constant term (got {c0})");
        let mut e = self.scale(1.0 / c0);
        e.c[0] = 0.0;
        // binomial series (1 + e)^{1/2}
        let mut acc = Jet::constant(self.dims, self.order, 1.0);
        let mut pow = Jet::constant(self.dims, self.order, 1.0);
        let mut coef = 1.0;
        for k in 1..=self.order {
            pow = pow.mul(&e);
            coef *= (0.5 - (k as f64 - 1.0)) / k as f64;
            acc = acc.add(&pow.scale(coef));
        }
        acc.scale(c0.sqrt())
    }

    /// Jet of `∂f/∂x_axis`, one order lower.
    pub fn derivative(&self, axis: usize) -> Jet {
        assert!(self.order >= 1, "cannot differentiate an order-0 jet");
        let mut r = Jet::zero(self.dims, self.order - 1);
        Jet::for_each_index(self.dims, self.order - 1, |a, b| {
            let v = if axis == 0 {
                (a as f64 + 1.0) * self.at((a + 1, b))
            } else {
                (b as f64 + 1.0) * self.at((a, b + 1))
            };
            if v != 0.0 {
                *r.at_mut((a, b)) = v;
            }
        });
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mul_matches_product_rule() {
        // f = 2 + 3x, g = 1 - x + x^2 in one variable.
        let mut f = Jet::zero(1, 4);
        f.set((0, 0), 2.0);
        f.set((1, 0), 3.0);
        let mut g = Jet::zero(1, 4);
        g.set((0, 0), 1.0);
        g.set((1, 0), -1.0);
        g.set((2, 0), 1.0);
        let p = f.mul(&g);
        // (2 + 3x)(1 - x + x^2) = 2 + x - x^2 + 3x^3
        assert_relative_eq!(p.at((0, 0)), 2.0);
        assert_relative_eq!(p.at((1, 0)), 1.0);
        assert_relative_eq!(p.at((2, 0)), -1.0);
        assert_relative_eq!(p.at((3, 0)), 3.0);
    }

    #[test]
    fn recip_and_sqrt_round_trip() {
        let mut f = Jet::zero(2, 6);
        f.set((0, 0), 2.0);
        f.set((1, 0), 0.5);
        f.set((0, 1), -0.25);
        f.set((1, 1), 0.125);
        let r = f.recip();
        let one = f.mul(&r);
        assert_relative_eq!(one.value(), 1.0, epsilon = 1e-14);
        assert!(one.at((1, 1)).abs() < 1e-14);
        let s = f.sqrt();
        let back = s.mul(&s);
        assert_relative_eq!(back.at((1, 0)), 0.5, epsilon = 1e-13);
        assert_relative_eq!(back.at((1, 1)), 0.125, epsilon = 1e-13);
    }

    #[test]
    fn derivative_of_square() {
        // f = x^2 at x0 = 3: jet (9, 6, 1); derivative: (6, 2).
        let x = Jet::coord(1, 3, 0, 3.0);
        let f = x.mul(&x);
        let d = f.derivative(0);
        assert_relative_eq!(d.value(), 6.0);
        assert_relative_eq!(d.at((1, 0)), 2.0);
    }
}
