//! Graded tensor meshes on the half-strip `G_r = B'_w × (0, r)` and fields
//! sampled on them.
//!
//! Normal nodes are `t_j = r (j/M)^γ`, `j = 0 … M`: the `t = 0` row carries
//! Dirichlet data, the equation is enforced from `t_1 = r M^{−γ}` upward, and
//! grading `γ = 2` resolves the quadratic boundary behavior with uniform
//! relative accuracy. Tangentially the mesh is a uniform box `[−w, w]^dims`;
//! the tangential half-width is independent of the height `r` so thin strips
//! are available in dimension 2.

use crate::error::{Error, Result};
use crate::fields::Grid;

#[derive(Debug, Clone)]
pub struct HalfStripMesh {
    /// Tangential dimension (1 or 2).
    pub dims: usize,
    /// Tangential points per axis, including both boundary points.
    pub ny: usize,
    /// Tangential half-width.
    pub w: f64,
    /// Tangential spacing.
    pub hy: f64,
    /// Normal intervals; nodes are `j = 0 ..= m`.
    pub m: usize,
    /// Strip height.
    pub r: f64,
    /// Grading exponent.
    pub gamma: f64,
    /// Normal nodes, `t[0] = 0`.
    pub t: Vec<f64>,
}

impl HalfStripMesh {
    pub fn new(dims: usize, w: f64, ny: usize, r: f64, m: usize, gamma: f64) -> Result<Self> {
        if dims == 0 || dims > 2 {
            return Err(Error::Dimension(format!("tangential dimension {dims} not in {{1, 2}}")));
        }
        if ny < 5 || m < 4 {
            return Err(Error::Shape(format!("mesh too small: ny = {ny}, m = {m}")));
        }
        if gamma < 1.0 {
            return Err(Error::Validation(format!("grading exponent {gamma} must be >= 1")));
        }
        if !(w > 0.0 && r > 0.0) {
            return Err(Error::Domain("mesh extents must be positive".into()));
        }
        let t: Vec<f64> = (0..=m).map(|j| r * (j as f64 / m as f64).powf(gamma)).collect();
        Ok(HalfStripMesh { dims, ny, w, hy: 2.0 * w / (ny - 1) as f64, m, r, gamma, t })
    }

    pub fn t_min(&self) -> f64 {
        self.t[1]
    }

    /// Tangential nodes per level.
    pub fn ny_total(&self) -> usize {
        if self.dims == 1 {
            self.ny
        } else {
            self.ny * self.ny
        }
    }

    pub fn len(&self) -> usize {
        self.ny_total() * (self.m + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, iy: [usize; 2], j: usize) -> usize {
        let tang = if self.dims == 1 { iy[0] } else { iy[1] * self.ny + iy[0] };
        j * self.ny_total() + tang
    }

    #[inline]
    pub fn y(&self, iy: [usize; 2]) -> [f64; 2] {
        [
            -self.w + self.hy * iy[0] as f64,
            if self.dims == 2 { -self.w + self.hy * iy[1] as f64 } else { 0.0 },
        ]
    }

    /// All tangential multi-indices.
    pub fn tangential_indices(&self) -> Vec<[usize; 2]> {
        let mut out = Vec::with_capacity(self.ny_total());
        if self.dims == 1 {
            for a in 0..self.ny {
                out.push([a, 0]);
            }
        } else {
            for b in 0..self.ny {
                for a in 0..self.ny {
                    out.push([a, b]);
                }
            }
        }
        out
    }

    pub fn is_lateral_boundary(&self, iy: [usize; 2]) -> bool {
        iy[0] == 0
            || iy[0] == self.ny - 1
            || (self.dims == 2 && (iy[1] == 0 || iy[1] == self.ny - 1))
    }

    /// The matching tangential [`Grid`] for one `t`-level.
    pub fn tangential_grid(&self) -> Grid {
        Grid {
            dims: self.dims,
            shape: [self.ny, if self.dims == 2 { self.ny } else { 1 }],
            h: self.hy,
            origin: [-self.w, if self.dims == 2 { -self.w } else { 0.0 }],
        }
    }

    /// Interior unknown id for Newton systems (`None` on boundary nodes).
    /// Tangential index varies fastest, so normal coupling sits at band
    /// offset `(ny−2)^dims`.
    pub fn unknown_id(&self, iy: [usize; 2], j: usize) -> Option<usize> {
        if j == 0 || j == self.m || self.is_lateral_boundary(iy) {
            return None;
        }
        let nin = self.ny - 2;
        let tang = if self.dims == 1 { iy[0] - 1 } else { (iy[1] - 1) * nin + (iy[0] - 1) };
        let per_level = if self.dims == 1 { nin } else { nin * nin };
        Some((j - 1) * per_level + tang)
    }

    pub fn num_unknowns(&self) -> usize {
        let nin = self.ny - 2;
        let per_level = if self.dims == 1 { nin } else { nin * nin };
        per_level * (self.m - 1)
    }

    /// Semi-bandwidth of the Newton Jacobian: the largest unknown-id offset
    /// among stencil neighbors `(±1, ±1, ±1)`.
    pub fn bandwidth(&self) -> usize {
        let nin = self.ny - 2;
        if self.dims == 1 {
            nin + 1
        } else {
            nin * nin + nin + 1
        }
    }

    /// The refined mesh sharing every coarse node: tangential points double
    /// in density, normal intervals double (the grading law maps coarse node
    /// `j` to fine node `2j` exactly).
    pub fn refine(&self) -> Result<HalfStripMesh> {
        HalfStripMesh::new(self.dims, self.w, 2 * self.ny - 1, self.r, 2 * self.m, self.gamma)
    }
}

/// Values on every node of a [`HalfStripMesh`].
#[derive(Debug, Clone)]
pub struct DiscreteField {
    pub values: Vec<f64>,
}

impl DiscreteField {
    pub fn zeros(mesh: &HalfStripMesh) -> Self {
        DiscreteField { values: vec![0.0; mesh.len()] }
    }

    pub fn from_fn(mesh: &HalfStripMesh, f: impl Fn([f64; 2], f64) -> f64) -> Self {
        let mut values = vec![0.0; mesh.len()];
        for j in 0..=mesh.m {
            for iy in mesh.tangential_indices() {
                values[mesh.index(iy, j)] = f(mesh.y(iy), mesh.t[j]);
            }
        }
        DiscreteField { values }
    }

    #[inline]
    pub fn at(&self, mesh: &HalfStripMesh, iy: [usize; 2], j: usize) -> f64 {
        self.values[mesh.index(iy, j)]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}
