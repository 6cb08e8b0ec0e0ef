//! Occupied frames over a discretized Brillouin zone and the fields built
//! from them: smooth periodic gauges, the sewing matrix `w(k)`, and the
//! Berry connection.

mod grid;
mod homotopy;

pub use grid::{BZGrid, GridError};

use homotopy::{NullHomotopy, Obstruction, Shape};
use rayon::prelude::*;
use std::f64::consts::PI;
use thiserror::Error;

use crate::linalg::{hermitian_eig, polar_unitary, CMatrix, LinalgError, C64};
use crate::models::{BlochModel, Domain, TimeReversalOperator};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlochError {
    #[error("spectrum not gapped at node {node} (gap {gap:e})")]
    GaplessAt { node: usize, gap: f64 },
    #[error("grid is incompatible with the model or field")]
    IncompatibleGrid,
    #[error("nonzero Chern number {chern} in plane {plane:?}: no smooth periodic gauge exists")]
    ChernObstruction { plane: (usize, usize), chern: i64 },
    #[error("gauge construction failed: {0}")]
    ConvergenceFailure(String),
    #[error("gauge too rough (smoothness {smoothness:.3} > {limit})")]
    RoughGauge { smoothness: f64, limit: f64 },
    #[error("det w winds {winding} times along axis {axis}")]
    DetWinding { axis: usize, winding: i64 },
    #[error("connection and sewing field live on different grids")]
    GaugeMismatch,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, BlochError>;

/// Orthonormal occupied frames, one `n_bands × m` matrix per node.
#[derive(Clone, Debug)]
pub struct FrameField {
    pub grid: BZGrid,
    pub frames: Vec<CMatrix>,
    /// Occupied eigenvalues per node; empty when the frames did not come
    /// from a diagonalization.
    pub energies: Vec<Vec<f64>>,
    pub smoothness: f64,
}

impl FrameField {
    pub fn from_frames(grid: BZGrid, frames: Vec<CMatrix>) -> Self {
        assert_eq!(frames.len(), grid.n_nodes());
        let smoothness = smoothness(&grid, &frames);
        FrameField { grid, frames, energies: vec![], smoothness }
    }

    pub fn rank(&self) -> usize {
        self.frames[0].cols()
    }

    /// Frames on the 2-torus `n_normal = value` of a 3D grid.
    pub fn restrict_plane(&self, normal: usize, value: usize) -> FrameField {
        let (plane, _) = self.grid.plane(normal, value);
        let idx: Vec<usize> = (0..plane.n_nodes()).map(|i| self.grid.embed_plane(normal, value, &plane, i)).collect();
        let frames = idx.iter().map(|&i| self.frames[i].clone()).collect();
        let energies = if self.energies.is_empty() { vec![] } else { idx.iter().map(|&i| self.energies[i].clone()).collect() };
        let mut out = FrameField::from_frames(plane, frames);
        out.energies = energies;
        out
    }

    /// `u(n) ↦ u(n)·a(n)` for per-node unitaries `a`.
    pub fn gauge_transform(&self, a: &[CMatrix]) -> FrameField {
        let frames = self.frames.iter().zip(a).map(|(u, g)| u * g).collect();
        let mut out = FrameField::from_frames(self.grid.clone(), frames);
        out.energies = self.energies.clone();
        out
    }
}

/// Links `(n, n + e_a)` of the grid, skipping non-periodic ends.
fn links(grid: &BZGrid) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(grid.n_nodes() * grid.dim());
    for idx in 0..grid.n_nodes() {
        for a in 0..grid.dim() {
            if let Some(j) = grid.shift(idx, a, 1) {
                out.push((idx, j));
            }
        }
    }
    out
}

/// `max ‖1 − u(n)†u(n + e_a)‖₂` over links.
pub fn smoothness(grid: &BZGrid, frames: &[CMatrix]) -> f64 {
    let m = frames[0].cols();
    let id = CMatrix::identity(m);
    links(grid)
        .par_iter()
        .map(|&(i, j)| (&id - &frames[i].adjoint_mul(&frames[j])).norm2())
        .reduce(|| 0.0, f64::max)
}

fn check_grid(model: &BlochModel, grid: &BZGrid) -> Result<()> {
    match (model.domain, grid.is_sphere()) {
        (Domain::Torus(d), false) if d == grid.dim() => Ok(()),
        (Domain::Sphere3, true) => Ok(()),
        _ => Err(BlochError::IncompatibleGrid),
    }
}

/// Occupied eigenframes at every node, in whatever gauge the eigensolver
/// returns.
pub fn diagonalize_grid(model: &BlochModel, grid: &BZGrid) -> Result<FrameField> {
    check_grid(model, grid)?;
    let m = model.n_occ;
    let res: Vec<Result<(CMatrix, Vec<f64>)>> = (0..grid.n_nodes())
        .into_par_iter()
        .map(|idx| {
            let h = model.eval_unchecked(&grid.k_point(idx)).hermitian_part();
            let e = hermitian_eig(&h)?;
            let gap = (-e.values[m - 1]).min(e.values.get(m).copied().unwrap_or(f64::INFINITY));
            if gap <= 1e-8 {
                return Err(BlochError::GaplessAt { node: idx, gap });
            }
            Ok((e.vectors.columns(0, m), e.values[..m].to_vec()))
        })
        .collect();
    let mut frames = Vec::with_capacity(res.len());
    let mut energies = Vec::with_capacity(res.len());
    for r in res {
        let (u, e) = r?;
        frames.push(u);
        energies.push(e);
    }
    let mut out = FrameField::from_frames(grid.clone(), frames);
    out.energies = energies;
    Ok(out)
}

/// Tuning of [`smooth_gauge_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaugeOptions {
    /// Red-black harmonic relaxation sweeps after parallel transport
    /// (torus grids only). Zero disables relaxation.
    pub relax_sweeps: usize,
    /// Stop relaxing once no node rotates by more than this.
    pub relax_tol: f64,
    /// Over-relaxation factor in `[1, 2)`.
    pub relax_omega: f64,
}

impl Default for GaugeOptions {
    fn default() -> Self {
        GaugeOptions { relax_sweeps: 150, relax_tol: 1e-6, relax_omega: 1.8 }
    }
}

pub fn smooth_gauge(raw: &FrameField) -> Result<FrameField> {
    smooth_gauge_with(raw, &GaugeOptions::default())
}

/// Globally smooth, periodic frames spanning the same subspaces as `raw`.
///
/// Parallel transport along axis 0, then axis 1, then axis 2; after each
/// sweep the closing holonomies form a family over the axes already done,
/// which is contracted to the identity and unwound along the swept axis.
/// A family that cannot be contracted reveals a nonzero Chern number.
/// Finally the frames are relaxed towards a discrete harmonic map, which
/// roughly halves the link deficiency.
pub fn smooth_gauge_with(raw: &FrameField, opts: &GaugeOptions) -> Result<FrameField> {
    let mut frames = if raw.grid.is_sphere() { sphere_gauge(raw)? } else { torus_gauge(raw)? };
    if !raw.grid.is_sphere() && opts.relax_sweeps > 0 {
        relax(&raw.grid, &mut frames, opts.relax_sweeps, opts.relax_tol, opts.relax_omega)?;
    }
    let mut out = FrameField::from_frames(raw.grid.clone(), frames);
    out.energies = raw.energies.clone();
    Ok(out)
}

/// Transport `prev` into the subspace of `raw`.
fn transport(prev: &CMatrix, raw: &CMatrix) -> Result<CMatrix> {
    Ok(raw * &polar_unitary(&raw.adjoint_mul(prev))?)
}

fn obstruction(o: Obstruction, family_axes: &[usize], swept: usize) -> BlochError {
    match o {
        Obstruction::Winding { axis, winding } => {
            BlochError::ChernObstruction { plane: (family_axes[axis], swept), chern: winding }
        }
        Obstruction::Rough(msg) => BlochError::ConvergenceFailure(msg),
    }
}

fn torus_gauge(raw: &FrameField) -> Result<Vec<CMatrix>> {
    let g = &raw.grid;
    let d = g.dim();
    let sizes = g.sizes().to_vec();
    let mut out = raw.frames.clone();
    for level in 0..d {
        let n = sizes[level];
        let fam_grid: Vec<usize> = sizes[..level].to_vec();
        let fam_n: usize = fam_grid.iter().product();
        let base = |f: usize| {
            let mut c = vec![0; d];
            let mut r = f;
            for a in (0..level).rev() {
                c[a] = r % sizes[a];
                r /= sizes[a];
            }
            c
        };
        let sweeps: Vec<Result<(Vec<CMatrix>, CMatrix)>> = (0..fam_n)
            .into_par_iter()
            .map(|f| {
                let mut c = base(f);
                let mut line = Vec::with_capacity(n);
                line.push(out[g.index(&c)].clone());
                for j in 1..n {
                    c[level] = j;
                    let next = transport(&line[j - 1], &raw.frames[g.index(&c)])?;
                    line.push(next);
                }
                c[level] = 0;
                let end = transport(&line[n - 1], &raw.frames[g.index(&c)])?;
                let w = polar_unitary(&line[0].adjoint_mul(&end))?;
                Ok((line, w))
            })
            .collect();
        let mut lines = Vec::with_capacity(fam_n);
        let mut family = Vec::with_capacity(fam_n);
        for s in sweeps {
            let (l, w) = s?;
            lines.push(l);
            family.push(w);
        }
        let shape = match level {
            0 => Shape::Point,
            1 => Shape::Circle(sizes[0]),
            _ => Shape::Torus2(sizes[0], sizes[1]),
        };
        let axes: Vec<usize> = (0..level).collect();
        let hom = NullHomotopy::build(&family, shape).map_err(|o| obstruction(o, &axes, level))?;
        for j in 0..n {
            let p = hom.eval(j as f64 / n as f64);
            for (f, line) in lines.iter().enumerate() {
                let mut c = base(f);
                c[level] = j;
                out[g.index(&c)] = &line[j] * &p[f].adjoint();
            }
        }
    }
    Ok(out)
}

/// Transport along `θ₁` from the pole `θ₁ = 0`, then remove the clutching
/// map at `θ₁ = π`, a family over the 2-sphere `(θ₂, φ)`.
fn sphere_gauge(raw: &FrameField) -> Result<Vec<CMatrix>> {
    let g = &raw.grid;
    let n = g.resolution();
    let (rows, cols) = (n + 1, 2 * n);
    let start = raw.frames[0].clone();
    let sweeps: Vec<Result<Vec<CMatrix>>> = (0..rows * cols)
        .into_par_iter()
        .map(|f| {
            let (j, l) = (f / cols, f % cols);
            let mut line = vec![start.clone()];
            for i in 1..=n {
                let next = transport(&line[i - 1], &raw.frames[g.index(&[i, j, l])])?;
                line.push(next);
            }
            Ok(line)
        })
        .collect();
    let lines: Vec<Vec<CMatrix>> = sweeps.into_iter().collect::<Result<_>>()?;
    let far = &lines[0][n];
    let family: Vec<CMatrix> =
        lines.iter().map(|l| polar_unitary(&far.adjoint_mul(&l[n]))).collect::<std::result::Result<_, _>>()?;
    let hom = NullHomotopy::build(&family, Shape::Sphere2(rows, cols)).map_err(|o| obstruction(o, &[1, 2], 0))?;
    let mut out = raw.frames.clone();
    for i in 0..=n {
        let p = hom.eval(i as f64 / n as f64);
        for (f, line) in lines.iter().enumerate() {
            out[g.index(&[i, f / cols, f % cols])] = &line[i] * &p[f].adjoint();
        }
    }
    Ok(out)
}

/// Red-black Gauss-Seidel for the discrete harmonic map problem: each node
/// is rotated within its subspace to best align with its neighbours, with
/// the rotation extrapolated by `omega` (over-relaxation).
fn relax(grid: &BZGrid, frames: &mut [CMatrix], sweeps: usize, tol: f64, omega: f64) -> Result<usize> {
    let (nb, m) = (frames[0].rows(), frames[0].cols());
    if m > MAX_RANK {
        return Err(BlochError::ConvergenceFailure(format!("relaxation supports rank <= {MAX_RANK}")));
    }
    let blk = nb * m;
    let mut u: Vec<C64> = frames.iter().flat_map(|f| f.data().iter().copied()).collect();
    let colors: [Vec<usize>; 2] = {
        let mut c = [vec![], vec![]];
        for idx in 0..grid.n_nodes() {
            c[grid.coords(idx).iter().sum::<usize>() % 2].push(idx);
        }
        c
    };
    let nbrs: Vec<Vec<usize>> = (0..grid.n_nodes())
        .map(|idx| {
            (0..grid.dim()).flat_map(|a| [grid.shift(idx, a, 1), grid.shift(idx, a, -1)]).flatten().collect()
        })
        .collect();
    // The harmonic energy decreases monotonically but the worst link need
    // not: textures shrink before they unwind. Keep the smoothest iterate.
    let mut best = (smoothness(grid, frames), u.clone());
    let snapshot = |u: &[C64], frames: &mut [CMatrix]| {
        for (idx, f) in frames.iter_mut().enumerate() {
            f.data_mut().copy_from_slice(&u[idx * blk..(idx + 1) * blk]);
        }
    };
    let mut done = sweeps;
    for sweep in 0..sweeps {
        let mut change: f64 = 0.0;
        for color in &colors {
            let mut next = vec![C64::new(0.0, 0.0); color.len() * blk];
            let delta = next
                .par_chunks_mut(blk)
                .zip(color.par_iter())
                .map(|(out, &idx)| {
                    let me = &u[idx * blk..(idx + 1) * blk];
                    let mut s = [C64::new(0.0, 0.0); MAX_RANK * MAX_RANK];
                    for &j in &nbrs[idx] {
                        let other = &u[j * blk..(j + 1) * blk];
                        for r in 0..nb {
                            for a in 0..m {
                                let x = me[r * m + a].conj();
                                for b in 0..m {
                                    s[a * m + b] += x * other[r * m + b];
                                }
                            }
                        }
                    }
                    let mut q = small_polar(&s[..m * m], m);
                    if omega != 1.0 {
                        for a in 0..m {
                            for b in 0..m {
                                let id = if a == b { 1.0 } else { 0.0 };
                                s[a * m + b] = (q[a * m + b] - id) * omega + id;
                            }
                        }
                        q = small_polar(&s[..m * m], m);
                    }
                    let mut d: f64 = 0.0;
                    for a in 0..m {
                        for b in 0..m {
                            let id = if a == b { 1.0 } else { 0.0 };
                            d = d.max((q[a * m + b] - id).norm());
                        }
                    }
                    for r in 0..nb {
                        for b in 0..m {
                            let mut acc = C64::new(0.0, 0.0);
                            for a in 0..m {
                                acc += me[r * m + a] * q[a * m + b];
                            }
                            out[r * m + b] = acc;
                        }
                    }
                    d
                })
                .reduce(|| 0.0, f64::max);
            for (k, &idx) in color.iter().enumerate() {
                u[idx * blk..(idx + 1) * blk].copy_from_slice(&next[k * blk..(k + 1) * blk]);
            }
            change = change.max(delta);
        }
        if !change.is_finite() {
            return Err(BlochError::ConvergenceFailure("relaxation produced non-finite frames".into()));
        }
        let last = change < tol || sweep + 1 == sweeps;
        if last || (sweep + 1) % CHECK_EVERY == 0 {
            snapshot(&u, frames);
            let sm = smoothness(grid, frames);
            if sm < best.0 {
                best = (sm, u.clone());
            }
        }
        if change < tol {
            done = sweep + 1;
            break;
        }
    }
    snapshot(&best.1, frames);
    Ok(done)
}

const MAX_RANK: usize = 8;
const CHECK_EVERY: usize = 10;

/// Unitary polar factor of a small row-major matrix by scaled Newton-Schulz
/// iteration, falling back to the eigenvalue route.
fn small_polar(s: &[C64], m: usize) -> [C64; MAX_RANK * MAX_RANK] {
    let mut x = [C64::new(0.0, 0.0); MAX_RANK * MAX_RANK];
    let fro = s.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let scale = (m as f64).sqrt() / fro;
    for i in 0..m * m {
        x[i] = s[i] * scale;
    }
    for _ in 0..40 {
        // g = x†x
        let mut g = [C64::new(0.0, 0.0); MAX_RANK * MAX_RANK];
        for a in 0..m {
            for b in 0..m {
                let mut acc = C64::new(0.0, 0.0);
                for r in 0..m {
                    acc += x[r * m + a].conj() * x[r * m + b];
                }
                g[a * m + b] = acc;
            }
        }
        let mut err: f64 = 0.0;
        for a in 0..m {
            for b in 0..m {
                let id = if a == b { 1.0 } else { 0.0 };
                err = err.max((g[a * m + b] - id).norm());
                g[a * m + b] = (g[a * m + b] * -0.5) + 1.5 * id;
            }
        }
        if err < 1e-14 {
            return x;
        }
        if err > 1.5 {
            break;
        }
        let mut y = [C64::new(0.0, 0.0); MAX_RANK * MAX_RANK];
        for a in 0..m {
            for b in 0..m {
                let mut acc = C64::new(0.0, 0.0);
                for r in 0..m {
                    acc += x[a * m + r] * g[r * m + b];
                }
                y[a * m + b] = acc;
            }
        }
        x = y;
    }
    let full = CMatrix::from_vec(m, m, s.to_vec());
    match polar_unitary(&full) {
        Ok(p) => x[..m * m].copy_from_slice(p.data()),
        Err(_) => {
            for a in 0..m {
                for b in 0..m {
                    x[a * m + b] = if a == b { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
                }
            }
        }
    }
    x
}

/// Lattice Chern number of the occupied bundle on the 2-torus spanned by
/// `axes` through node `origin`, from gauge-invariant link determinants.
/// Returns the raw flux sum divided by `2π`, an integer up to rounding.
pub fn plane_chern(frames: &FrameField, axes: (usize, usize), origin: usize) -> f64 {
    let g = &frames.grid;
    let link = |i: usize, j: usize| frames.frames[i].adjoint_mul(&frames.frames[j]).det().unwrap_or(C64::new(0.0, 0.0));
    let (a, b) = axes;
    let mut total = 0.0;
    let mut row = origin;
    for _ in 0..g.sizes()[a] {
        let mut n = row;
        for _ in 0..g.sizes()[b] {
            let na = g.shift(n, a, 1).expect("periodic");
            let nb = g.shift(n, b, 1).expect("periodic");
            let nab = g.shift(na, b, 1).expect("periodic");
            total += (link(n, na) * link(na, nab) * link(nab, nb) * link(nb, n)).arg();
            n = nb;
        }
        row = g.shift(row, a, 1).expect("periodic");
    }
    total / (2.0 * PI)
}

/// One entry of [`plane_chern_numbers`].
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneChern {
    pub axes: (usize, usize),
    /// Coordinate of the plane along the remaining axis (0 in 2D).
    pub offset: usize,
    pub raw: f64,
}

/// Chern numbers of every coordinate 2-torus of a torus grid.
pub fn plane_chern_numbers(frames: &FrameField) -> Vec<PlaneChern> {
    let g = &frames.grid;
    assert!(!g.is_sphere());
    let d = g.dim();
    let mut out = vec![];
    for a in 0..d {
        for b in a + 1..d {
            let normal = (0..d).find(|&c| c != a && c != b);
            let count = normal.map_or(1, |c| g.sizes()[c]);
            for off in 0..count {
                let mut c = vec![0; d];
                if let Some(nc) = normal {
                    c[nc] = off;
                }
                out.push(PlaneChern { axes: (a, b), offset: off, raw: plane_chern(frames, (a, b), g.index(&c)) });
            }
        }
    }
    out
}

/// `w(k) = u(τk)† U conj(u(k))`, optionally reduced to unit determinant.
#[derive(Clone, Debug)]
pub struct SewingField {
    pub grid: BZGrid,
    pub w: Vec<CMatrix>,
    /// Continuous lift of `arg det w`; zero after [`su_reduce`].
    pub det_phase: Vec<f64>,
    pub su_reduced: bool,
}

impl SewingField {
    pub fn rank(&self) -> usize {
        self.w[0].rows()
    }

    pub fn unitarity_residual(&self) -> f64 {
        self.w.par_iter().map(|w| w.unitarity_residual()).reduce(|| 0.0, f64::max)
    }

    /// `max ‖w(τk) + w(k)ᵀ‖_max`.
    pub fn involution_residual(&self) -> f64 {
        (0..self.w.len())
            .into_par_iter()
            .map(|i| (&self.w[self.grid.involution(i)] + &self.w[i].transpose()).max_abs())
            .reduce(|| 0.0, f64::max)
    }

    /// `max ‖w + wᵀ‖_max` over fixed points.
    pub fn trim_skew_residual(&self) -> f64 {
        self.grid.trims().iter().map(|&i| (&self.w[i] + &self.w[i].transpose()).max_abs()).fold(0.0, f64::max)
    }
}

/// Default smoothness ceiling for [`sewing_field`].
pub const SEWING_SMOOTHNESS_LIMIT: f64 = 0.5;

pub fn sewing_field(frames: &FrameField, theta: &TimeReversalOperator) -> Result<SewingField> {
    sewing_field_with_limit(frames, theta, SEWING_SMOOTHNESS_LIMIT)
}

pub fn sewing_field_with_limit(frames: &FrameField, theta: &TimeReversalOperator, limit: f64) -> Result<SewingField> {
    if frames.smoothness > limit {
        return Err(BlochError::RoughGauge { smoothness: frames.smoothness, limit });
    }
    if theta.dim() != frames.frames[0].rows() {
        return Err(BlochError::IncompatibleGrid);
    }
    let g = &frames.grid;
    let w: Vec<CMatrix> = (0..g.n_nodes())
        .into_par_iter()
        .map(|i| frames.frames[g.involution(i)].adjoint_mul(&theta.apply(&frames.frames[i])))
        .collect();
    let det_phase = w.iter().map(|x| x.det().map(|z| z.arg()).unwrap_or(0.0)).collect();
    Ok(SewingField { grid: g.clone(), w, det_phase, su_reduced: false })
}

/// Removes the determinant: `w̃ = e^{−iL/m} w` with `L` a continuous,
/// involution-symmetric lift of `arg det w`.
pub fn su_reduce(field: &SewingField) -> Result<SewingField> {
    let g = &field.grid;
    let m = field.rank() as f64;
    let dets: Vec<C64> = field.w.iter().map(|w| w.det()).collect::<std::result::Result<_, _>>()?;
    if let Some(i) = dets.iter().position(|z| z.norm() < 1e-12) {
        return Err(BlochError::Linalg(LinalgError::ZeroEntry(i)));
    }
    let mut lift = vec![0.0; dets.len()];
    for idx in 0..dets.len() {
        let c = g.coords(idx);
        lift[idx] = match (0..g.dim()).rev().find(|&a| c[a] != 0) {
            None => dets[idx].arg(),
            Some(a) => {
                let p = g.shift(idx, a, -1).expect("interior predecessor");
                lift[p] + (dets[idx] / dets[p]).arg()
            }
        };
    }
    for idx in 0..dets.len() {
        for a in 0..g.dim() {
            if let Some(j) = g.shift(idx, a, 1) {
                let mismatch = lift[j] - lift[idx] - (dets[j] / dets[idx]).arg();
                let winding = (mismatch / (2.0 * PI)).round() as i64;
                if winding != 0 {
                    return Err(BlochError::DetWinding { axis: a, winding });
                }
            }
        }
    }
    let sym: Vec<f64> = (0..lift.len()).map(|i| 0.5 * (lift[i] + lift[g.involution(i)])).collect();
    let w = field.w.iter().zip(&sym).map(|(w, l)| w.scale(C64::from_polar(1.0, -l / m))).collect();
    Ok(SewingField { grid: g.clone(), w, det_phase: vec![0.0; lift.len()], su_reduced: true })
}

/// Forward-difference Berry connection on a torus grid.
#[derive(Clone, Debug)]
pub struct ConnectionField {
    pub grid: BZGrid,
    /// `a[n][μ]`, anti-Hermitian `m × m`.
    pub a: Vec<Vec<CMatrix>>,
    pub quaternionic_residual: f64,
}

/// `A_μ(n) = antiHerm(u†(n)(u(n + e_μ) − u(n)))/h_μ`.
pub fn berry_connection(frames: &FrameField) -> Result<ConnectionField> {
    let g = &frames.grid;
    if g.is_sphere() {
        return Err(BlochError::IncompatibleGrid);
    }
    let a = (0..g.n_nodes())
        .into_par_iter()
        .map(|i| {
            let u = &frames.frames[i];
            (0..g.dim())
                .map(|mu| {
                    let j = g.shift(i, mu, 1).expect("periodic");
                    (u.adjoint_mul(&(&frames.frames[j] - u))).anti_hermitian_part().scale_real(1.0 / g.spacing(mu))
                })
                .collect()
        })
        .collect();
    let mut out = ConnectionField { grid: g.clone(), a, quaternionic_residual: 0.0 };
    out.quaternionic_residual = f64::NAN;
    Ok(out)
}

/// Image of a connection under the quaternionic structure, written in the
/// frame of `w`: `[X†A(τn − e_μ)X − antiHerm(X† ∂w)]ᵀ` with `X` the unitary
/// part of the link average of `w`.
fn quaternionic_image(conn: &ConnectionField, wfield: &SewingField) -> Vec<Vec<CMatrix>> {
    let g = &conn.grid;
    (0..g.n_nodes())
        .into_par_iter()
        .map(|i| {
            (0..g.dim())
                .map(|mu| {
                    let j = g.shift(i, mu, 1).expect("periodic");
                    let (w0, w1) = (&wfield.w[i], &wfield.w[j]);
                    let x = polar_unitary(&(w0 + w1).scale_real(0.5)).unwrap_or_else(|_| w0.clone());
                    let dw = (w1 - w0).scale_real(1.0 / g.spacing(mu));
                    let src = g.shift(g.involution(i), mu, -1).expect("periodic");
                    let pulled = &x.adjoint_mul(&conn.a[src][mu]) * &x;
                    (&pulled - &x.adjoint_mul(&dw).anti_hermitian_part()).transpose()
                })
                .collect()
        })
        .collect()
}

fn max_diff(a: &[Vec<CMatrix>], b: &[Vec<CMatrix>]) -> f64 {
    a.par_iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).max_abs()).fold(0.0, f64::max))
        .reduce(|| 0.0, f64::max)
}

/// `A' = ½(A + Φ(A))`, the average over the quaternionic `Z₂` action.
pub fn quaternionic_average(conn: &ConnectionField, wfield: &SewingField) -> Result<ConnectionField> {
    if conn.grid != wfield.grid {
        return Err(BlochError::GaugeMismatch);
    }
    let img = quaternionic_image(conn, wfield);
    let a: Vec<Vec<CMatrix>> = conn
        .a
        .iter()
        .zip(&img)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p + q).scale_real(0.5)).collect())
        .collect();
    let mut out = ConnectionField { grid: conn.grid.clone(), a, quaternionic_residual: 0.0 };
    out.quaternionic_residual = quaternionic_residual(&out, wfield);
    Ok(out)
}

/// `max ‖A − Φ(A)‖_max`.
pub fn quaternionic_residual(conn: &ConnectionField, wfield: &SewingField) -> f64 {
    max_diff(&conn.a, &quaternionic_image(conn, wfield))
}
