use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid sizes must be even and at least 2, got {0:?}")]
    OddSize(Vec<usize>),
    #[error("torus grids have dimension 1, 2 or 3, got {0}")]
    BadDim(usize),
}

/// Uniform grid on the Brillouin torus `T^d`, or the angular mesh of `S³`.
///
/// Torus nodes are `n_a ∈ [0, N_a)` with `k_a = −π + 2π n_a / N_a`, stored
/// lexicographically with `n₀` slowest. Node `0` on an axis is `k = π` and
/// node `N/2` is `k = 0`; the involution is `n ↦ (N − n) mod N`.
///
/// The sphere mesh of resolution `n` uses hyperspherical angles
/// `θ₁ = πi/n`, `θ₂ = πj/n` (`i, j ∈ [0, n]`) and `φ = −π + πl/n`
/// (`l ∈ [0, 2n)`, periodic), embedded as
/// `k¹ = cos θ₁`, `k² = sin θ₁ cos θ₂`, `k³ = sin θ₁ sin θ₂ cos φ`,
/// `k⁰ = sin θ₁ sin θ₂ sin φ`. Inversion through the `k⁰`-axis acts as
/// `(i, j, l) ↦ (n − i, n − j, n − l mod 2n)`, fixing the poles
/// `S = (n/2, n/2, n/2)` and `N = (n/2, n/2, 3n/2)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BZGrid {
    sphere: bool,
    sizes: Vec<usize>,
    fdomain_axis: usize,
}

impl BZGrid {
    pub fn torus(sizes: &[usize]) -> Result<Self, GridError> {
        if sizes.is_empty() || sizes.len() > 3 {
            return Err(GridError::BadDim(sizes.len()));
        }
        if sizes.iter().any(|&s| s < 2 || s % 2 == 1) {
            return Err(GridError::OddSize(sizes.to_vec()));
        }
        Ok(BZGrid { sphere: false, sizes: sizes.to_vec(), fdomain_axis: sizes.len() - 1 })
    }

    /// Cubic torus grid `N^d`.
    pub fn cubic(d: usize, n: usize) -> Result<Self, GridError> {
        Self::torus(&vec![n; d])
    }

    pub fn sphere3(n: usize) -> Result<Self, GridError> {
        if n < 2 || n % 2 == 1 {
            return Err(GridError::OddSize(vec![n]));
        }
        Ok(BZGrid { sphere: true, sizes: vec![n + 1, n + 1, 2 * n], fdomain_axis: 0 })
    }

    pub fn with_fdomain_axis(mut self, axis: usize) -> Self {
        assert!(axis < self.dim());
        self.fdomain_axis = axis;
        self
    }

    pub fn is_sphere(&self) -> bool {
        self.sphere
    }

    pub fn dim(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Sphere mesh resolution `n`.
    pub fn resolution(&self) -> usize {
        if self.sphere {
            self.sizes[0] - 1
        } else {
            self.sizes[0]
        }
    }

    pub fn fdomain_axis(&self) -> usize {
        self.fdomain_axis
    }

    pub fn n_nodes(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().zip(&self.sizes).fold(0, |acc, (&c, &s)| acc * s + c)
    }

    pub fn coords(&self, mut idx: usize) -> Vec<usize> {
        let mut c = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            c[a] = idx % self.sizes[a];
            idx /= self.sizes[a];
        }
        c
    }

    /// Whether the axis wraps around.
    pub fn periodic(&self, axis: usize) -> bool {
        !self.sphere || axis == 2
    }

    /// Neighbour `idx ± e_axis`, or `None` past a non-periodic end.
    pub fn shift(&self, idx: usize, axis: usize, delta: i64) -> Option<usize> {
        let mut c = self.coords(idx);
        let s = self.sizes[axis] as i64;
        let x = c[axis] as i64 + delta;
        if self.periodic(axis) {
            c[axis] = x.rem_euclid(s) as usize;
        } else if (0..s).contains(&x) {
            c[axis] = x as usize;
        } else {
            return None;
        }
        Some(self.index(&c))
    }

    pub fn k_point(&self, idx: usize) -> Vec<f64> {
        if self.sphere {
            let (t1, t2, ph) = self.angles(idx);
            vec![
                t1.sin() * t2.sin() * ph.sin(),
                t1.cos(),
                t1.sin() * t2.cos(),
                t1.sin() * t2.sin() * ph.cos(),
            ]
        } else {
            let c = self.coords(idx);
            c.iter().zip(&self.sizes).map(|(&n, &s)| -PI + 2.0 * PI * n as f64 / s as f64).collect()
        }
    }

    /// `(θ₁, θ₂, φ)` of a sphere node.
    pub fn angles(&self, idx: usize) -> (f64, f64, f64) {
        let c = self.coords(idx);
        let n = self.resolution() as f64;
        (PI * c[0] as f64 / n, PI * c[1] as f64 / n, -PI + PI * c[2] as f64 / n)
    }

    pub fn involution(&self, idx: usize) -> usize {
        let c = self.coords(idx);
        let img: Vec<usize> = if self.sphere {
            let n = self.resolution();
            vec![n - c[0], n - c[1], (n + 2 * n - c[2]) % (2 * n)]
        } else {
            c.iter().zip(&self.sizes).map(|(&x, &s)| (s - x) % s).collect()
        };
        self.index(&img)
    }

    /// Fixed nodes of the involution in node order.
    pub fn trims(&self) -> Vec<usize> {
        if self.sphere {
            let n = self.resolution();
            return vec![self.index(&[n / 2, n / 2, n / 2]), self.index(&[n / 2, n / 2, 3 * n / 2])];
        }
        let d = self.dim();
        let mut out = Vec::with_capacity(1 << d);
        for bits in 0..(1usize << d) {
            let c: Vec<usize> =
                (0..d).map(|a| if bits >> (d - 1 - a) & 1 == 1 { self.sizes[a] / 2 } else { 0 }).collect();
            out.push(self.index(&c));
        }
        out.sort_unstable();
        out
    }

    /// Sphere poles `(N, S)`.
    pub fn poles(&self) -> Option<(usize, usize)> {
        let t = self.trims();
        self.sphere.then(|| (t[1], t[0]))
    }

    /// `n_a ∈ [N_a/2, N_a]` on the fundamental-domain axis (torus, with
    /// `N_a ≡ 0`), or
    /// `θ₁ ≤ π/2` (sphere).
    pub fn in_fundamental_domain(&self, idx: usize) -> bool {
        let c = self.coords(idx)[self.fdomain_axis];
        if self.sphere {
            c <= self.resolution() / 2
        } else {
            c == 0 || c >= self.sizes[self.fdomain_axis] / 2
        }
    }

    /// Grid spacing `2π/N_a` (torus) or the angular step (sphere).
    pub fn spacing(&self, axis: usize) -> f64 {
        if self.sphere {
            PI / self.resolution() as f64
        } else {
            2.0 * PI / self.sizes[axis] as f64
        }
    }

    /// The 2-torus at fixed `n_normal = value`, as its own grid, together
    /// with the in-plane axes.
    pub fn plane(&self, normal: usize, value: usize) -> (BZGrid, [usize; 2]) {
        assert!(!self.sphere && self.dim() == 3 && value < self.sizes[normal]);
        let axes: Vec<usize> = (0..3).filter(|&a| a != normal).collect();
        let g = BZGrid::torus(&[self.sizes[axes[0]], self.sizes[axes[1]]]).expect("even sizes");
        (g, [axes[0], axes[1]])
    }

    /// Node of the parent grid for a node of [`BZGrid::plane`].
    pub fn embed_plane(&self, normal: usize, value: usize, plane: &BZGrid, idx: usize) -> usize {
        let pc = plane.coords(idx);
        let mut c = vec![0; 3];
        let mut it = pc.into_iter();
        for (a, slot) in c.iter_mut().enumerate() {
            *slot = if a == normal { value } else { it.next().unwrap() };
        }
        self.index(&c)
    }
}
