//! Cubical cochains on torus grids with the involution `n ↦ −n`, and the
//! descent that pushes a top-degree integral down to the fixed points.
//!
//! A `p`-cochain stores one real per oriented `p`-cube, a cube being an
//! anchor node `n` plus a sorted set `S` of axes; it spans `n + Σ_{i∈S} t_i e_i`,
//! `t_i ∈ [0, 1]`. The involution sends the cube `(n, S)` onto
//! `(−n − e_S, S)` with orientation `(−1)^{|S|}`, so
//! `(τ*c)(n, S) = (−1)^{|S|} c(−n − e_S, S)`.
//!
//! ```
//! use tki::bloch::BZGrid;
//! use tki::eqforms::{localise, Cochain};
//!
//! let g = BZGrid::cubic(3, 8).unwrap();
//! let c = Cochain::uniform_top(&g, 3.0);
//! let trace = localise(&c).unwrap();
//! assert!((trace.total - 3.0).abs() < 1e-12);
//! assert_eq!(trace.parity, -1);
//! ```

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bloch::{BZGrid, SewingField};
use crate::invariants::{wzw_density, WzwScheme};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormError {
    #[error("no cochains above the top degree")]
    TopDegree,
    #[error("expected a cochain of degree {expected}, got {got}")]
    WrongDegree { expected: usize, got: usize },
    #[error("cochain is not odd under the involution (residual {0:e})")]
    ParityViolation(f64),
    #[error("cochains live on torus grids only")]
    NotTorus,
    #[error("sewing field is too rough for sampling (smoothness {0:.3})")]
    RoughGauge(f64),
}

pub type Result<T> = std::result::Result<T, FormError>;

fn subsets(d: usize, p: usize) -> Vec<Vec<usize>> {
    (0u32..1 << d)
        .filter(|b| b.count_ones() as usize == p)
        .map(|b| (0..d).filter(|i| b >> i & 1 == 1).collect::<Vec<_>>())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Real `p`-cochain on a torus grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cochain {
    pub grid: BZGrid,
    pub degree: usize,
    /// Sorted axis sets in lexicographic order.
    pub axes: Vec<Vec<usize>>,
    /// `values[s * n_nodes + n]` for the cube anchored at `n` spanning `axes[s]`.
    pub values: Vec<f64>,
}

impl Cochain {
    pub fn zeros(grid: &BZGrid, degree: usize) -> Result<Self> {
        if grid.is_sphere() {
            return Err(FormError::NotTorus);
        }
        if degree > grid.dim() {
            return Err(FormError::TopDegree);
        }
        let axes = subsets(grid.dim(), degree);
        let values = vec![0.0; axes.len() * grid.n_nodes()];
        Ok(Cochain { grid: grid.clone(), degree, axes, values })
    }

    pub fn from_fn(grid: &BZGrid, degree: usize, mut f: impl FnMut(usize, &[usize]) -> f64) -> Result<Self> {
        let mut c = Self::zeros(grid, degree)?;
        let nn = grid.n_nodes();
        for s in 0..c.axes.len() {
            for n in 0..nn {
                c.values[s * nn + n] = f(n, &c.axes[s]);
            }
        }
        Ok(c)
    }

    /// Top cochain with the same value on every cube and total `total`.
    pub fn uniform_top(grid: &BZGrid, total: f64) -> Self {
        let v = total / grid.n_nodes() as f64;
        Self::from_fn(grid, grid.dim(), |_, _| v).expect("torus grid")
    }

    fn slot(&self, s: &[usize]) -> usize {
        self.axes.iter().position(|a| a == s).expect("axis set of matching degree")
    }

    pub fn get(&self, n: usize, s: &[usize]) -> f64 {
        self.values[self.slot(s) * self.grid.n_nodes() + n]
    }

    pub fn set(&mut self, n: usize, s: &[usize], v: f64) {
        let k = self.slot(s) * self.grid.n_nodes() + n;
        self.values[k] = v;
    }

    pub fn is_top(&self) -> bool {
        self.degree == self.grid.dim()
    }

    pub fn norm1(&self) -> f64 {
        self.values.iter().map(|x| x.abs()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, x| a.max(x.abs()))
    }

    fn zip_with(&self, other: &Cochain, f: impl Fn(f64, f64) -> f64) -> Cochain {
        assert_eq!((self.degree, &self.grid), (other.degree, &other.grid));
        let values = self.values.iter().zip(&other.values).map(|(a, b)| f(*a, *b)).collect();
        Cochain { values, ..self.clone() }
    }

    pub fn add(&self, other: &Cochain) -> Cochain {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Cochain) -> Cochain {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Cochain {
        Cochain { values: self.values.iter().map(|x| x * s).collect(), ..self.clone() }
    }
}

fn shift(g: &BZGrid, n: usize, axis: usize, delta: i64) -> usize {
    g.shift(n, axis, delta).expect("torus grids are periodic")
}

/// Coboundary `(dη)(n, S) = Σ_{i∈S} (−1)^{pos(i)} [η(n + e_i, S∖i) − η(n, S∖i)]`.
pub fn d(c: &Cochain) -> Result<Cochain> {
    let g = &c.grid;
    if c.degree >= g.dim() {
        return Err(FormError::TopDegree);
    }
    let mut out = Cochain::zeros(g, c.degree + 1)?;
    let nn = g.n_nodes();
    let axes = out.axes.clone();
    for (s, set) in axes.iter().enumerate() {
        let faces: Vec<(usize, f64, usize)> = set
            .iter()
            .enumerate()
            .map(|(pos, &i)| {
                let rest: Vec<usize> = set.iter().copied().filter(|&x| x != i).collect();
                (i, if pos % 2 == 0 { 1.0 } else { -1.0 }, c.slot(&rest))
            })
            .collect();
        out.values[s * nn..(s + 1) * nn].par_iter_mut().enumerate().for_each(|(n, v)| {
            *v = faces
                .iter()
                .map(|&(i, sign, slot)| sign * (c.values[slot * nn + shift(g, n, i, 1)] - c.values[slot * nn + n]))
                .sum();
        });
    }
    Ok(out)
}

/// Anchor of the image cube `−n − e_S`.
fn image_anchor(g: &BZGrid, n: usize, set: &[usize]) -> usize {
    set.iter().fold(g.involution(n), |m, &i| shift(g, m, i, -1))
}

pub fn involution_pullback(c: &Cochain) -> Cochain {
    let g = &c.grid;
    let nn = g.n_nodes();
    let mut out = c.clone();
    for (s, set) in c.axes.iter().enumerate() {
        let sign = if set.len() % 2 == 0 { 1.0 } else { -1.0 };
        for n in 0..nn {
            out.values[s * nn + n] = sign * c.values[s * nn + image_anchor(g, n, set)];
        }
    }
    out
}

/// `(½(1 + τ*)c, ½(1 − τ*)c)`.
pub fn project_pm(c: &Cochain) -> (Cochain, Cochain) {
    let t = involution_pullback(c);
    let plus = c.zip_with(&t, |a, b| 0.5 * (a + b));
    let minus = c.zip_with(&t, |a, b| 0.5 * (a - b));
    (plus, minus)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    All,
    /// Anchors with `n_a ∈ [N_a/2, N_a − 1]` on the grid's fundamental-domain
    /// axis.
    FundamentalDomain,
}

pub fn integrate(c: &Cochain, region: Region) -> Result<f64> {
    if !c.is_top() {
        return Err(FormError::WrongDegree { expected: c.grid.dim(), got: c.degree });
    }
    let g = &c.grid;
    let a = g.fdomain_axis();
    let half = g.sizes()[a] / 2;
    Ok(c.values
        .iter()
        .enumerate()
        .filter(|(n, _)| region == Region::All || g.coords(*n)[a] >= half)
        .map(|(_, v)| v)
        .sum())
}

/// Primitive `η` of a top cochain on the closed half `n_a ∈ [N/2, N]`,
/// vanishing on the slice `n_a = N/2` and supported on faces normal to `a`.
///
/// The values at the far slice `n_a = N` are stored at `n_a = 0`; cubes of
/// the other half are not covered, so `dη = c` only on the half.
pub fn primitive_on_half(c: &Cochain, axis: usize) -> Result<Cochain> {
    if !c.is_top() {
        return Err(FormError::WrongDegree { expected: c.grid.dim(), got: c.degree });
    }
    let g = &c.grid;
    let dim = g.dim();
    let mut eta = Cochain::zeros(g, dim - 1)?;
    let rest: Vec<usize> = (0..dim).filter(|&i| i != axis).collect();
    let sign = if axis % 2 == 0 { 1.0 } else { -1.0 };
    let nn = g.n_nodes();
    let slot = eta.slot(&rest);
    let full: Vec<usize> = (0..dim).collect();
    let cs = c.slot(&full);
    let n_a = g.sizes()[axis];
    for n in 0..nn {
        if g.coords(n)[axis] != n_a / 2 {
            continue;
        }
        let mut acc = 0.0;
        let mut at = n;
        for _ in n_a / 2..n_a {
            acc += sign * c.values[cs * nn + at];
            at = shift(g, at, axis, 1);
            eta.values[slot * nn + at] = acc;
        }
    }
    Ok(eta)
}

/// Torus of the axes other than `axis` (`None` when nothing is left), and
/// the embedding of its nodes at `n_axis = value`.
fn slice_grid(g: &BZGrid, axis: usize, value: usize) -> (Option<BZGrid>, Vec<usize>) {
    let sizes: Vec<usize> = (0..g.dim()).filter(|&i| i != axis).map(|i| g.sizes()[i]).collect();
    if sizes.is_empty() {
        return (None, vec![g.index(&[value])]);
    }
    let sg = BZGrid::torus(&sizes).expect("even sizes");
    let embed = (0..sg.n_nodes())
        .map(|m| {
            let mut c = sg.coords(m);
            c.insert(axis, value);
            g.index(&c)
        })
        .collect();
    (Some(sg), embed)
}

/// Values of `(−1)^{pos a}(η ± τ*η)` on the slices `n_a = 0` and `n_a = N/2`.
fn rho_values(eta: &Cochain, axis: usize, plus: bool) -> [(Option<BZGrid>, Vec<f64>); 2] {
    let g = &eta.grid;
    let rest: Vec<usize> = (0..g.dim()).filter(|&i| i != axis).collect();
    let sign = if axis % 2 == 0 { 1.0 } else { -1.0 };
    let pm = if plus { 1.0 } else { -1.0 };
    let tau = involution_pullback(eta);
    [0, g.sizes()[axis] / 2].map(|value| {
        let (sg, embed) = slice_grid(g, axis, value);
        let vals = embed.iter().map(|&n| sign * (eta.get(n, &rest) + pm * tau.get(n, &rest))).collect();
        (sg, vals)
    })
}

/// `ρ = (−1)^{pos a}(η ± τ*η)` restricted to the two boundary slices of the
/// half, each returned as a top cochain on its own `(d−1)`-torus:
/// `(slice n_a = 0, slice n_a = N/2)`. Needs `d ≥ 2`.
pub fn boundary_rho(eta: &Cochain, axis: usize, plus: bool) -> Result<(Cochain, Cochain)> {
    let dim = eta.grid.dim();
    if eta.degree + 1 != dim || dim < 2 {
        return Err(FormError::WrongDegree { expected: dim.saturating_sub(1), got: eta.degree });
    }
    let [top, bottom] = rho_values(eta, axis, plus).map(|(sg, vals)| {
        let sg = sg.expect("at least one axis left");
        Cochain { axes: vec![(0..sg.dim()).collect()], degree: sg.dim(), grid: sg, values: vals }
    });
    Ok((top, bottom))
}

/// One step of the descent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescentLevel {
    /// Dimension of the torus component carrying `rho`.
    pub dim: usize,
    /// Fixed coordinates `(axis, value)` of the component in the original grid.
    pub component: Vec<(usize, usize)>,
    pub rho: Cochain,
    /// Primitive of `rho` on the half of this component.
    pub eta: Cochain,
    pub integral: f64,
    /// `max |τ*ρ − (−1)^dim ρ|`.
    pub parity_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedValue {
    pub node: Vec<usize>,
    pub k: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalisationTrace {
    /// Axes in the order they were descended along.
    pub descent_axes: Vec<usize>,
    pub levels: Vec<DescentLevel>,
    pub fixed_values: Vec<FixedValue>,
    pub total: f64,
    pub parity: i8,
}

impl LocalisationTrace {
    /// Sum of component integrals per dimension, from the top down.
    pub fn level_integrals(&self) -> Vec<(usize, f64)> {
        let mut by_dim: BTreeMap<usize, f64> = BTreeMap::new();
        for l in &self.levels {
            *by_dim.entry(l.dim).or_default() += l.integral;
        }
        let fixed: f64 = self.fixed_values.iter().map(|f| f.value).sum();
        let mut out: Vec<(usize, f64)> = by_dim.into_iter().rev().collect();
        out.push((0, fixed));
        out
    }

    pub fn fixed_sum(&self) -> f64 {
        self.fixed_values.iter().map(|f| f.value).sum()
    }
}

fn parity_residual(c: &Cochain) -> f64 {
    let s = if c.degree % 2 == 0 { 1.0 } else { -1.0 };
    let t = involution_pullback(c);
    c.values.iter().zip(&t.values).map(|(a, b)| (b - s * a).abs()).fold(0.0, f64::max)
}

/// Descends a top cochain with `τ*c = (−1)^d c` to the fixed points, along
/// the axes `d−1, …, 0`.
pub fn localise(c: &Cochain) -> Result<LocalisationTrace> {
    if !c.is_top() {
        return Err(FormError::WrongDegree { expected: c.grid.dim(), got: c.degree });
    }
    let res = parity_residual(c);
    if res > 1e-10 * c.max_abs().max(1.0) {
        return Err(FormError::ParityViolation(res));
    }
    let root = c.grid.clone();
    let total = integrate(c, Region::All)?;
    let mut levels = vec![];
    let mut fixed_values = vec![];
    // (cochain, original axes of its grid, fixed coordinates)
    let mut stack: Vec<(Cochain, Vec<usize>, Vec<(usize, usize)>)> = vec![(c.clone(), (0..root.dim()).collect(), vec![])];
    let mut next = vec![];
    while !stack.is_empty() {
        for (rho, orig, comp) in stack.drain(..) {
            let dim = rho.grid.dim();
            let axis = dim - 1;
            let eta = primitive_on_half(&rho, axis)?;
            let slices = rho_values(&eta, axis, dim % 2 == 1);
            levels.push(DescentLevel {
                dim,
                component: comp.clone(),
                integral: integrate(&rho, Region::All)?,
                parity_residual: parity_residual(&rho),
                rho,
                eta,
            });
            let n_a = root.sizes()[orig[axis]];
            for ((sg, vals), value) in slices.into_iter().zip([0, n_a / 2]) {
                let mut comp = comp.clone();
                comp.push((orig[axis], value));
                match sg {
                    None => {
                        let mut node = vec![0; root.dim()];
                        for &(a, v) in &comp {
                            node[a] = v;
                        }
                        let idx = root.index(&node);
                        fixed_values.push(FixedValue { node, k: root.k_point(idx), value: vals[0] });
                    }
                    Some(sg) => {
                        let child = Cochain { axes: vec![(0..sg.dim()).collect()], degree: sg.dim(), grid: sg, values: vals };
                        next.push((child, orig[..axis].to_vec(), comp));
                    }
                }
            }
        }
        std::mem::swap(&mut stack, &mut next);
    }
    fixed_values.sort_by(|a, b| a.node.cmp(&b.node));
    let sum: f64 = fixed_values.iter().map(|f| f.value).sum();
    let k = sum.round();
    let parity = if (k as i64).rem_euclid(2) == 0 { 1 } else { -1 };
    Ok(LocalisationTrace { descent_axes: (0..root.dim()).rev().collect(), levels, fixed_values, total, parity })
}

/// The WZW 3-form sampled on the cubes of a torus grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledWzw {
    /// Odd part of the sampled density.
    pub cochain: Cochain,
    /// 1-norm of the discarded even part.
    pub discarded: f64,
}

pub fn sample_wzw(w: &SewingField, scheme: WzwScheme) -> Result<SampledWzw> {
    let g = &w.grid;
    if g.is_sphere() || g.dim() != 3 {
        return Err(FormError::NotTorus);
    }
    let dens = wzw_density(w, scheme);
    let raw = Cochain { grid: g.clone(), degree: 3, axes: vec![vec![0, 1, 2]], values: dens };
    let (plus, minus) = project_pm(&raw);
    Ok(SampledWzw { cochain: minus, discarded: plus.norm1() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(seed: u64, len: usize) -> Vec<f64> {
        let mut s = seed;
        (0..len)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect()
    }

    #[test]
    fn d_of_node_function_on_circle() {
        let g = BZGrid::torus(&[6]).unwrap();
        let f = Cochain::from_fn(&g, 0, |n, _| (n * n) as f64).unwrap();
        let df = d(&f).unwrap();
        for n in 0..6 {
            assert_eq!(df.get(n, &[0]), (((n + 1) % 6).pow(2) as f64) - (n * n) as f64);
        }
    }

    #[test]
    fn dd_vanishes() {
        let g = BZGrid::torus(&[6, 4, 8]).unwrap();
        let v = noise(3, g.n_nodes());
        let f = Cochain::from_fn(&g, 0, |n, _| v[n]).unwrap();
        let dd = d(&d(&f).unwrap()).unwrap();
        assert!(dd.max_abs() < 1e-12);
        let v = noise(4, 3 * g.n_nodes());
        let one = Cochain { values: v, ..Cochain::zeros(&g, 1).unwrap() };
        assert!(d(&d(&one).unwrap()).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn primitive_reproduces_the_cochain_on_the_half() {
        let g = BZGrid::torus(&[4, 6, 8]).unwrap();
        let v = noise(5, g.n_nodes());
        let c = Cochain::from_fn(&g, 3, |n, _| v[n]).unwrap();
        let eta = primitive_on_half(&c, 2).unwrap();
        let de = d(&eta).unwrap();
        for n in 0..g.n_nodes() {
            if g.coords(n)[2] >= 4 {
                assert!((de.values[n] - c.values[n]).abs() < 1e-12);
            }
            if g.coords(n)[2] == 4 {
                assert_eq!(eta.get(n, &[0, 1]), 0.0);
            }
        }
    }

    #[test]
    fn uniform_density_localises_on_the_all_pi_point() {
        let g = BZGrid::cubic(3, 8).unwrap();
        let t = localise(&Cochain::uniform_top(&g, 3.0)).unwrap();
        assert_eq!(t.fixed_values.len(), 8);
        for f in &t.fixed_values {
            let expect = if f.node == vec![0, 0, 0] { 3.0 } else { 0.0 };
            assert!((f.value - expect).abs() < 1e-12, "{f:?}");
        }
        for (_, i) in t.level_integrals() {
            assert!((i - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_parity_is_rejected() {
        let g = BZGrid::cubic(3, 4).unwrap();
        let v = noise(9, g.n_nodes());
        let c = Cochain::from_fn(&g, 3, |n, _| v[n]).unwrap();
        assert!(matches!(localise(&c), Err(FormError::ParityViolation(_))));
        let (_, minus) = project_pm(&c);
        let t = localise(&minus).unwrap();
        assert!((t.fixed_sum() - integrate(&minus, Region::All).unwrap()).abs() < 1e-12);
    }
}
