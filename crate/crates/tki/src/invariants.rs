//! The Kane-Mele index by several independent routes.
//!
//! * fixed-point Pfaffians of the `SU(m)`-reduced sewing matrix,
//! * 2D plane invariants (boundary Berry phase in a time-reversal-constrained
//!   gauge minus curvature flux over half the plane), combined into weak and
//!   strong indices,
//! * the WZW integral `∫ w*H` and its winding-number form,
//! * the Chern-Simons invariant of a quaternionically averaged connection,
//! * on `S³`, full-sphere quadrature plus hemisphere descent to the poles.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bloch::{
    berry_connection, diagonalize_grid, quaternionic_average, sewing_field_with_limit, smooth_gauge_with, su_reduce,
    BZGrid, BlochError, ConnectionField, FrameField, GaugeOptions, SewingField,
};
use crate::eqforms;
use crate::linalg::{pfaffian, polar_unitary, unitary_log, vdot, vnorm, CMatrix, C64, ZERO};
use crate::models::{BlochModel, Domain, TimeReversalOperator};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InvariantError {
    #[error("sewing matrix is not skew at a fixed point (residual {0:e})")]
    NonSkewTrim(f64),
    #[error("fixed-point Pfaffian off the unit circle by {0:e}")]
    PfaffianOffCircle(f64),
    #[error("sewing field must be reduced to unit determinant first")]
    NotReduced,
    #[error("time-reversal-constrained boundary gauge failed: {0}")]
    BoundaryGaugeFailure(String),
    #[error("strong index differs between axes: {0:?}")]
    AxisInconsistency([i8; 3]),
    #[error("raw value {raw} is {distance:.3} away from the nearest lattice point")]
    NonConvergent { raw: f64, distance: f64 },
    #[error("connection is not quaternionic (residual {0:e})")]
    UnaveragedConnection(f64),
    #[error("method needs {0}")]
    WrongDomain(&'static str),
    #[error(transparent)]
    Bloch(#[from] BlochError),
    #[error(transparent)]
    Forms(#[from] eqforms::FormError),
}

pub type Result<T> = std::result::Result<T, InvariantError>;

/// Distance from `x` to the nearest integer beyond which a method refuses to
/// round.
pub const ROUNDING_LIMIT: f64 = 0.25;

fn parity_of(k: i64) -> i8 {
    if k.rem_euclid(2) == 0 {
        1
    } else {
        -1
    }
}

fn round_checked(x: f64, limit: f64) -> Result<i64> {
    let k = x.round();
    let distance = (x - k).abs();
    if !x.is_finite() || distance > limit {
        return Err(InvariantError::NonConvergent { raw: x, distance });
    }
    Ok(k as i64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrimPfaffian {
    pub parity: i8,
    /// `pf w̃(k)` at each fixed node, in node order.
    pub pfaffians: Vec<C64>,
    /// Real part of the product.
    pub raw: f64,
    /// `max ||pf| − 1|`.
    pub residual: f64,
}

/// `∏_k pf w̃(k)` over the fixed points of an `SU(m)`-reduced sewing field.
pub fn km_trim_pfaffian(w: &SewingField) -> Result<TrimPfaffian> {
    if !w.su_reduced {
        return Err(InvariantError::NotReduced);
    }
    let skew = w.trim_skew_residual();
    if skew > 1e-8 {
        return Err(InvariantError::NonSkewTrim(skew));
    }
    let mut pfs = vec![];
    for idx in w.grid.trims() {
        let a = &w.w[idx];
        let sk = (a - &a.transpose()).scale_real(0.5);
        pfs.push(pfaffian(&sk).map_err(BlochError::from)?);
    }
    let residual = pfs.iter().map(|p| (p.norm() - 1.0).abs()).fold(0.0, f64::max);
    if residual > 1e-4 {
        return Err(InvariantError::PfaffianOffCircle(residual));
    }
    let prod = pfs.iter().fold(C64::new(1.0, 0.0), |acc, p| acc * p);
    let parity = if prod.re < 0.0 { -1 } else { 1 };
    Ok(TrimPfaffian { parity, pfaffians: pfs, raw: prod.re, residual })
}

/// Orthonormal basis `[ψ₁, Θψ₁, ψ₂, Θψ₂, …]` of the occupied subspace at a
/// fixed point, so that `K† Θ K = ⊕ [[0, −1], [1, 0]]`.
pub fn kramers_frame(u: &CMatrix, theta: &TimeReversalOperator) -> Result<CMatrix> {
    let (n, m) = (u.rows(), u.cols());
    let mut basis: Vec<Vec<C64>> = vec![];
    let project_out = |v: &mut Vec<C64>, basis: &[Vec<C64>]| {
        for b in basis {
            let c = vdot(b, v);
            for (x, y) in v.iter_mut().zip(b) {
                *x -= c * y;
            }
        }
    };
    let mut col = 0;
    while basis.len() < m {
        if col >= m {
            return Err(InvariantError::BoundaryGaugeFailure("occupied space is not Kramers-paired".into()));
        }
        let mut v = u.column(col);
        col += 1;
        project_out(&mut v, &basis);
        let nv = vnorm(&v);
        if nv < 1e-6 {
            continue;
        }
        let v: Vec<C64> = v.into_iter().map(|x| x / nv).collect();
        let tv = theta.apply(&CMatrix::from_vec(n, 1, v.clone())).column(0);
        let mut tv2 = tv.clone();
        project_out(&mut tv2, &basis);
        let overlap = vdot(&v, &tv2).norm();
        if overlap > 1e-6 || (vnorm(&tv2) - 1.0).abs() > 1e-6 {
            return Err(InvariantError::BoundaryGaugeFailure(format!("Kramers partner overlap {overlap:e}")));
        }
        basis.push(v);
        basis.push(tv);
    }
    let mut k = CMatrix::zeros(n, m);
    for (j, b) in basis.iter().enumerate() {
        k.set_column(j, b);
    }
    Ok(k)
}

fn w_std(m: usize) -> CMatrix {
    let block = CMatrix::from_real(2, 2, &[0.0, -1.0, 1.0, 0.0]);
    let mut out = CMatrix::zeros(m, m);
    for b in 0..m / 2 {
        for i in 0..2 {
            for j in 0..2 {
                out[(2 * b + i, 2 * b + j)] = block[(i, j)];
            }
        }
    }
    out
}

/// Frames along a closed time-reversal-invariant line, built so that
/// `u(−k) = Θ u(k) w_std⁻¹`.
fn constrained_line(line: &[CMatrix], theta: &TimeReversalOperator) -> Result<Vec<CMatrix>> {
    let n = line.len();
    let half = n / 2;
    let m = line[0].cols();
    let mut out = vec![CMatrix::zeros(1, 1); n];
    out[0] = kramers_frame(&line[0], theta)?;
    for i in 1..=half {
        let raw = &line[i];
        let q = polar_unitary(&raw.adjoint_mul(&out[i - 1])).map_err(BlochError::from)?;
        out[i] = raw * &q;
    }
    let kh = kramers_frame(&line[half], theta)?;
    let v = kh.adjoint_mul(&out[half]);
    let log = unitary_log(&v.adjoint()).map_err(BlochError::from)?;
    for (i, u) in out.iter_mut().enumerate().take(half + 1).skip(1) {
        let c = crate::linalg::expm_anti_hermitian(&log.scale_real(i as f64 / half as f64)).map_err(BlochError::from)?;
        *u = &*u * &c;
    }
    out[half] = kh;
    let winv = w_std(m).adjoint();
    for i in half + 1..n {
        out[i] = &theta.apply(&out[n - i]) * &winv;
    }
    Ok(out)
}

fn link_phase(a: &CMatrix, b: &CMatrix) -> f64 {
    a.adjoint_mul(b).det().map(|z| z.arg()).unwrap_or(f64::NAN)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlaneInvariant {
    pub parity: i8,
    /// The integer `D` before reduction mod 2, unrounded.
    pub raw: f64,
    pub residual: f64,
}

/// 2D index of a time-reversal-invariant 2-torus from frames on it (any
/// gauge). Axis 0 of the plane runs along the invariant lines, axis 1 is
/// halved.
pub fn km_plane_invariant(frames: &FrameField, theta: &TimeReversalOperator) -> Result<PlaneInvariant> {
    let g = &frames.grid;
    if g.is_sphere() || g.dim() != 2 {
        return Err(InvariantError::WrongDomain("a 2-torus grid"));
    }
    let (nx, ny) = (g.sizes()[0], g.sizes()[1]);
    let u = |i: usize, j: usize| &frames.frames[g.index(&[i % nx, j % ny])];
    let berry = |j: usize| -> Result<f64> {
        let line: Vec<CMatrix> = (0..nx).map(|i| u(i, j).clone()).collect();
        let c = constrained_line(&line, theta)?;
        Ok((0..nx).map(|i| link_phase(&c[i], &c[(i + 1) % nx])).sum())
    };
    let bottom = berry(ny / 2)?;
    let top = berry(0)?;
    let mut flux = 0.0;
    for j in ny / 2..ny {
        for i in 0..nx {
            let (a, b, c, d) = (u(i, j), u(i + 1, j), u(i + 1, j + 1), u(i, j + 1));
            let z = a.adjoint_mul(b).det().map_err(BlochError::from)?
                * b.adjoint_mul(c).det().map_err(BlochError::from)?
                * c.adjoint_mul(d).det().map_err(BlochError::from)?
                * d.adjoint_mul(a).det().map_err(BlochError::from)?;
            flux += z.arg();
        }
    }
    let raw = (bottom - top - flux) / (2.0 * PI);
    let k = round_checked(raw, ROUNDING_LIMIT)?;
    Ok(PlaneInvariant { parity: parity_of(k), raw, residual: (raw - k as f64).abs() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakStrong {
    pub strong: i8,
    /// `ν(k_a = π)` per axis.
    pub weak: [i8; 3],
    /// `ν` at `n_a = 0` (`k_a = π`) and `n_a = N_a/2` (`k_a = 0`).
    pub planes: [[i8; 2]; 3],
    pub residual: f64,
}

pub fn km_weak_strong(model: &BlochModel, grid: &BZGrid) -> Result<WeakStrong> {
    if model.domain != Domain::Torus(3) {
        return Err(InvariantError::WrongDomain("a 3-torus model"));
    }
    let raw = diagonalize_grid(model, grid)?;
    km_weak_strong_frames(&raw, &model.theta)
}

/// As [`km_weak_strong`], from frames already on the grid.
pub fn km_weak_strong_frames(frames: &FrameField, theta: &TimeReversalOperator) -> Result<WeakStrong> {
    let g = &frames.grid;
    if g.is_sphere() || g.dim() != 3 {
        return Err(InvariantError::WrongDomain("a 3-torus grid"));
    }
    let mut planes = [[0i8; 2]; 3];
    let mut residual: f64 = 0.0;
    for (a, slot) in planes.iter_mut().enumerate() {
        for (s, value) in [0, g.sizes()[a] / 2].into_iter().enumerate() {
            let p = km_plane_invariant(&frames.restrict_plane(a, value), theta)?;
            slot[s] = p.parity;
            residual = residual.max(p.residual);
        }
    }
    let strongs = [planes[0][0] * planes[0][1], planes[1][0] * planes[1][1], planes[2][0] * planes[2][1]];
    if strongs.iter().any(|&s| s != strongs[0]) {
        return Err(InvariantError::AxisInconsistency(strongs));
    }
    Ok(WeakStrong { strong: strongs[0], weak: [planes[0][0], planes[1][0], planes[2][0]], planes, residual })
}

/// Discretization of `w⁻¹ ∂_μ w` on a link.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WzwScheme {
    /// `log(w(n)† w(n + e_μ))`, exact for one-parameter subgroups.
    #[default]
    LinkLog,
    /// `w(n)†(w(n + e_μ) − w(n))`.
    Forward,
}

fn link_generator(a: &CMatrix, b: &CMatrix, scheme: WzwScheme) -> CMatrix {
    let t = a.adjoint_mul(b);
    match scheme {
        WzwScheme::LinkLog => match polar_unitary(&t).and_then(|q| unitary_log(&q)) {
            Ok(l) => l,
            Err(_) => CMatrix::from_fn(t.rows(), t.cols(), |_, _| C64::new(f64::NAN, 0.0)),
        },
        WzwScheme::Forward => &t - &CMatrix::identity(t.rows()),
    }
}

/// `(1/24π²) Σ_σ sgn σ tr(D_σ₀ D_σ₁ D_σ₂)`, already multiplied by the cell
/// volume.
fn cell_value(d: &[CMatrix; 3]) -> f64 {
    let a = (&(&d[0] * &d[1]) * &d[2]).trace();
    let b = (&(&d[0] * &d[2]) * &d[1]).trace();
    // the three even (odd) permutations share one trace by cyclicity
    ((a - b) * 3.0).re / (24.0 * PI * PI)
}

/// Per-cell WZW values, indexed by anchor node. On sphere grids the cells
/// with an anchor on the last `θ₁` or `θ₂` row do not exist and hold 0.
pub fn wzw_density(w: &SewingField, scheme: WzwScheme) -> Vec<f64> {
    let g = &w.grid;
    assert_eq!(g.dim(), 3);
    (0..g.n_nodes())
        .into_par_iter()
        .map(|n| {
            let nb: Option<Vec<usize>> = (0..3).map(|a| g.shift(n, a, 1)).collect();
            match nb {
                Some(nb) => {
                    let d = [
                        link_generator(&w.w[n], &w.w[nb[0]], scheme),
                        link_generator(&w.w[n], &w.w[nb[1]], scheme),
                        link_generator(&w.w[n], &w.w[nb[2]], scheme),
                    ];
                    cell_value(&d)
                }
                None => 0.0,
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Wzw {
    pub integral: f64,
    pub parity: i8,
    pub residual: f64,
}

/// `∫ w*H` over the 3-torus as a Riemann sum in fixed node order.
pub fn km_wzw(w: &SewingField, scheme: WzwScheme) -> Result<Wzw> {
    if !w.su_reduced {
        return Err(InvariantError::NotReduced);
    }
    if w.grid.is_sphere() || w.grid.dim() != 3 {
        return Err(InvariantError::WrongDomain("a 3-torus grid"));
    }
    let integral: f64 = wzw_density(w, scheme).iter().sum();
    let k = round_checked(integral, ROUNDING_LIMIT)?;
    Ok(Wzw { integral, parity: parity_of(k), residual: (integral - k as f64).abs() })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Winding {
    pub index: i64,
    pub parity: i8,
    /// Per-slice integrals along the family axis.
    pub slices: Vec<f64>,
}

/// Degree of `θ ↦ exp(2πi ∫_{θ' ≤ θ} s)` with `s` the per-slice WZW integrals
/// transverse to `family_axis`.
pub fn km_winding(w: &SewingField, family_axis: usize, scheme: WzwScheme) -> Result<Winding> {
    if !w.su_reduced {
        return Err(InvariantError::NotReduced);
    }
    let g = &w.grid;
    if g.is_sphere() || g.dim() != 3 || family_axis > 2 {
        return Err(InvariantError::WrongDomain("a 3-torus grid"));
    }
    let dens = wzw_density(w, scheme);
    let mut slices = vec![0.0; g.sizes()[family_axis]];
    for (n, v) in dens.iter().enumerate() {
        slices[g.coords(n)[family_axis]] += v;
    }
    let total: f64 = slices.iter().sum();
    // u(θ) is only known at the slices; a step of half a turn or more is
    // ambiguous.
    if let Some(s) = slices.iter().find(|s| s.abs() >= 0.5) {
        return Err(InvariantError::NonConvergent { raw: total, distance: s.abs() });
    }
    let mut phase = 0.0;
    let mut z = C64::new(1.0, 0.0);
    for s in &slices {
        let next = z * C64::from_polar(1.0, 2.0 * PI * s);
        phase += (next / z).arg();
        z = next;
    }
    let index = (phase / (2.0 * PI)).round() as i64;
    round_checked(total, ROUNDING_LIMIT)?;
    Ok(Winding { index, parity: parity_of(index), slices })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChernSimons {
    pub cs: f64,
    pub parity: i8,
    /// `|cs + ½ ∫ w*H|`.
    pub relation_residual: f64,
    /// Distance of `cs` to the nearest half-integer.
    pub residual: f64,
}

/// Riemann sum of the Chern-Simons form of a quaternionic connection,
/// normalized so that `cs = −½ ∫ w*H`.
pub fn km_chern_simons(conn: &ConnectionField, wzw_integral: f64) -> Result<ChernSimons> {
    if !(conn.quaternionic_residual <= 1e-6) {
        return Err(InvariantError::UnaveragedConnection(conn.quaternionic_residual));
    }
    let g = &conn.grid;
    if g.dim() != 3 {
        return Err(InvariantError::WrongDomain("a 3-torus grid"));
    }
    let perms: [([usize; 3], f64); 6] =
        [([0, 1, 2], 1.0), ([1, 2, 0], 1.0), ([2, 0, 1], 1.0), ([0, 2, 1], -1.0), ([2, 1, 0], -1.0), ([1, 0, 2], -1.0)];
    let link = |n: usize, mu: usize| conn.a[n][mu].scale_real(g.spacing(mu));
    let step = |n: usize, mu: usize| g.shift(n, mu, 1).expect("periodic");
    // Cubical cup products: each factor sits on the face or edge it
    // belongs to along the path n → n+e_μ → n+e_μ+e_ν.
    let cs: f64 = (0..g.n_nodes())
        .into_par_iter()
        .map(|n| {
            let mut acc = ZERO;
            for (p, sign) in &perms {
                let [mu, nu, rho] = *p;
                let m = step(n, mu);
                let q = step(m, nu);
                let a_mu = link(n, mu);
                let da = &link(q, rho) - &link(m, rho);
                let t = (&a_mu * &da).trace() + (&(&a_mu * &link(m, nu)) * &link(q, rho)).trace() * (2.0 / 3.0);
                acc += t * *sign;
            }
            acc.re
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum::<f64>()
        / (8.0 * PI * PI);
    let relation_residual = (cs + 0.5 * wzw_integral).abs();
    let k = round_checked(2.0 * cs, 2.0 * ROUNDING_LIMIT)?;
    let parity = parity_of(k);
    if relation_residual > 0.1 {
        return Err(InvariantError::NonConvergent { raw: cs, distance: relation_residual });
    }
    Ok(ChernSimons { cs, parity, relation_residual, residual: (cs - k as f64 / 2.0).abs() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct S3Result {
    pub parity: i8,
    /// Full-sphere quadrature of the WZW density.
    pub upsilon: f64,
    pub rho0_n: f64,
    pub rho0_s: f64,
    /// `|ρ⁰(N) − ρ⁰(S) − υ̂|`.
    pub descent_residual: f64,
    pub smoothness: f64,
}

/// WZW quadrature over an angular `S³` mesh of resolution `mesh` and its
/// descent `S³ → S² → S¹ → {N, S}` along the hemispheres `θ₁ ≤ π/2`,
/// `θ₂ ≤ π/2` and the arc of `S¹` from `S` to `N` through `φ = 0`.
pub fn km_s3(model: &BlochModel, mesh: usize) -> Result<S3Result> {
    if model.domain != Domain::Sphere3 {
        return Err(InvariantError::WrongDomain("an S³ model"));
    }
    let g = BZGrid::sphere3(mesh).map_err(|_| InvariantError::WrongDomain("an even mesh"))?;
    let raw = diagonalize_grid(model, &g)?;
    let frames = smooth_gauge_with(&raw, &GaugeOptions { relax_sweeps: 0, ..GaugeOptions::default() })?;
    let w = sewing_field_with_limit(&frames, &model.theta, f64::INFINITY)?;
    let dens = wzw_density(&w, WzwScheme::LinkLog);
    let n = mesh;
    let cell = |i: usize, j: usize, l: usize| g.index(&[i, j, l % (2 * n)]);
    // cell (i, j, l) ↦ (n−1−i, n−1−j, n−1−l mod 2n) under the involution
    let mut omega = vec![0.0; g.n_nodes()];
    for i in 0..n {
        for j in 0..n {
            for l in 0..2 * n {
                let img = cell(n - 1 - i, n - 1 - j, (3 * n - 1 - l) % (2 * n));
                omega[cell(i, j, l)] = 0.5 * (dens[cell(i, j, l)] + dens[img]);
            }
        }
    }
    let upsilon: f64 = dens.iter().sum();
    let mut s = vec![vec![0.0; 2 * n]; n];
    for (j, row) in s.iter_mut().enumerate() {
        for (l, v) in row.iter_mut().enumerate() {
            *v = (0..n / 2).map(|i| omega[cell(i, j, l)]).sum();
        }
    }
    let rho2 = |j: usize, l: usize| s[j][l] + s[n - 1 - j][(3 * n - 1 - l) % (2 * n)];
    let t: Vec<f64> = (0..2 * n).map(|l| (0..n / 2).map(|j| rho2(j, l)).sum()).collect();
    let rho1 = |l: usize| t[l] + t[(3 * n - 1 - l) % (2 * n)];
    let rho0_n = 2.0 * (n / 2..3 * n / 2).map(rho1).sum::<f64>();
    let rho0_s = 0.0;
    let k = round_checked(upsilon, ROUNDING_LIMIT)?;
    Ok(S3Result {
        parity: parity_of(k),
        upsilon,
        rho0_n,
        rho0_s,
        descent_residual: (rho0_n - rho0_s - upsilon).abs(),
        smoothness: frames.smoothness,
    })
}

/// One method's contribution to a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub parity: i8,
    pub raw: f64,
    pub residual: f64,
    pub runtime_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub name: String,
    pub params: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub model: ModelInfo,
    pub grid: Vec<usize>,
    pub methods: BTreeMap<String, MethodResult>,
    pub trim_pfaffians: Vec<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub weak: Option<[i8; 3]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub strong: Option<i8>,
    pub consensus: bool,
    pub notes: Vec<String>,
}

impl InvariantReport {
    /// Whether some requested method failed to converge.
    pub fn has_nonconvergent(&self) -> bool {
        self.notes.iter().any(|n| n.contains("did not converge"))
    }
}

/// Extra data produced alongside method results.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportExtras {
    pub trim_pfaffians: Vec<C64>,
    pub weak: Option<[i8; 3]>,
    pub strong: Option<i8>,
}

/// Collects method outputs; failed methods become notes and are left out
/// of the consensus.
pub fn assemble_report(
    model: &BlochModel,
    grid: &[usize],
    outputs: Vec<(String, std::result::Result<MethodResult, String>)>,
    extras: ReportExtras,
) -> InvariantReport {
    let mut methods = BTreeMap::new();
    let mut notes = vec![];
    for (name, r) in outputs {
        match r {
            Ok(m) => {
                methods.insert(name, m);
            }
            Err(e) => notes.push(format!("{name}: {e}")),
        }
    }
    let mut parities = methods.values().map(|m| m.parity);
    let first = parities.next();
    let consensus = first.is_some() && parities.all(|p| Some(p) == first);
    if extras.weak.is_some() {
        notes.push("weak indices use the k_a = pi planes".into());
    }
    InvariantReport {
        model: ModelInfo { name: model.name.clone(), params: model.params.clone() },
        grid: grid.to_vec(),
        methods,
        trim_pfaffians: extras.trim_pfaffians.iter().map(|z| [z.re, z.im]).collect(),
        weak: extras.weak,
        strong: extras.strong,
        consensus,
        notes,
    }
}

/// Methods understood by [`compute`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Pfaffian,
    Planes,
    Wzw,
    Winding,
    Cs,
    S3,
    Localise,
}

impl Method {
    pub const ALL: [Method; 7] =
        [Method::Pfaffian, Method::Planes, Method::Wzw, Method::Winding, Method::Cs, Method::S3, Method::Localise];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Pfaffian => "pfaffian",
            Method::Planes => "planes",
            Method::Wzw => "wzw",
            Method::Winding => "winding",
            Method::Cs => "cs",
            Method::S3 => "s3",
            Method::Localise => "localise",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// Knobs of [`compute`].
#[derive(Clone, Debug, PartialEq)]
pub struct ComputeOptions {
    pub gauge: GaugeOptions,
    pub scheme: WzwScheme,
    /// Ceiling on frame smoothness for the sewing field.
    pub max_smoothness: f64,
    pub winding_axis: usize,
}

impl Default for ComputeOptions {
    fn default() -> Self {
        ComputeOptions {
            gauge: GaugeOptions::default(),
            scheme: WzwScheme::LinkLog,
            max_smoothness: crate::bloch::SEWING_SMOOTHNESS_LIMIT,
            winding_axis: 2,
        }
    }
}

/// Smooth frames, the sewing field and its reduction for a torus model.
pub struct Pipeline {
    pub raw: FrameField,
    pub frames: FrameField,
    pub sewing: SewingField,
    pub reduced: SewingField,
}

pub fn pipeline(model: &BlochModel, grid: &BZGrid, opts: &ComputeOptions) -> Result<Pipeline> {
    let raw = diagonalize_grid(model, grid)?;
    let frames = smooth_gauge_with(&raw, &opts.gauge)?;
    let sewing = sewing_field_with_limit(&frames, &model.theta, opts.max_smoothness)?;
    let reduced = su_reduce(&sewing)?;
    Ok(Pipeline { raw, frames, sewing, reduced })
}

fn describe(e: &InvariantError) -> String {
    match e {
        InvariantError::NonConvergent { raw, distance } => {
            format!("did not converge (raw {raw:.6}, distance {distance:.3})")
        }
        other => other.to_string(),
    }
}

/// Runs the requested methods and assembles the report. Sphere models only
/// support `s3`.
pub fn compute(model: &BlochModel, sizes: &[usize], methods: &[Method], opts: &ComputeOptions) -> Result<InvariantReport> {
    let mut outputs: Vec<(String, std::result::Result<MethodResult, String>)> = vec![];
    let mut extras = ReportExtras::default();
    let timed = |f: &mut dyn FnMut() -> Result<(i8, f64, f64)>| -> std::result::Result<MethodResult, String> {
        let t = Instant::now();
        let r = f();
        let runtime_ms = t.elapsed().as_secs_f64() * 1e3;
        r.map(|(parity, raw, residual)| MethodResult { parity, raw, residual, runtime_ms }).map_err(|e| describe(&e))
    };
    if model.domain == Domain::Sphere3 {
        let mut extras_notes = vec![];
        for m in methods {
            if *m == Method::S3 {
                let mesh = sizes[0];
                let mut descent = None;
                outputs.push((
                    "s3".into(),
                    timed(&mut || {
                        let r = km_s3(model, mesh)?;
                        descent = Some(r.descent_residual);
                        Ok((r.parity, r.upsilon, (r.upsilon - r.upsilon.round()).abs()))
                    }),
                ));
                if let Some(d) = descent {
                    extras_notes.push(format!("s3: hemisphere descent residual {d:.3e}"));
                }
            } else {
                outputs.push((m.name().into(), Err("not available on S3 models".into())));
            }
        }
        let mut report = assemble_report(model, sizes, outputs, extras);
        report.notes.extend(extras_notes);
        return Ok(report);
    }
    let grid = BZGrid::torus(sizes).map_err(|_| InvariantError::WrongDomain("even grid sizes"))?;
    if model.domain != Domain::Torus(grid.dim()) {
        return Err(InvariantError::WrongDomain("a grid matching the model dimension"));
    }
    let pipe = pipeline(model, &grid, opts)?;
    let three = grid.dim() == 3;
    let mut wzw_integral = None;
    for m in methods {
        let r = match m {
            Method::Pfaffian => timed(&mut || {
                let r = km_trim_pfaffian(&pipe.reduced)?;
                extras.trim_pfaffians = r.pfaffians.clone();
                Ok((r.parity, r.raw, (r.raw - r.parity as f64).abs()))
            }),
            Method::Planes if grid.dim() == 2 => timed(&mut || {
                let r = km_plane_invariant(&pipe.raw, &model.theta)?;
                Ok((r.parity, r.raw, r.residual))
            }),
            Method::Planes if three => timed(&mut || {
                let r = km_weak_strong_frames(&pipe.raw, &model.theta)?;
                extras.weak = Some(r.weak);
                extras.strong = Some(r.strong);
                Ok((r.strong, r.strong as f64, r.residual))
            }),
            Method::Wzw if three => timed(&mut || {
                let r = km_wzw(&pipe.reduced, opts.scheme)?;
                wzw_integral = Some(r.integral);
                Ok((r.parity, r.integral, r.residual))
            }),
            Method::Winding if three => timed(&mut || {
                let r = km_winding(&pipe.reduced, opts.winding_axis, opts.scheme)?;
                let total: f64 = r.slices.iter().sum();
                Ok((r.parity, r.index as f64, (total - r.index as f64).abs()))
            }),
            Method::Cs if three => timed(&mut || {
                let wz = match wzw_integral {
                    Some(x) => x,
                    None => km_wzw(&pipe.reduced, opts.scheme)?.integral,
                };
                let conn = quaternionic_average(&berry_connection(&pipe.frames)?, &pipe.sewing)?;
                let r = km_chern_simons(&conn, wz)?;
                Ok((r.parity, r.cs, r.relation_residual))
            }),
            Method::Localise if three => timed(&mut || {
                let c = eqforms::sample_wzw(&pipe.reduced, opts.scheme)?;
                let tr = eqforms::localise(&c.cochain)?;
                let k = round_checked(tr.total, ROUNDING_LIMIT)?;
                Ok((parity_of(k), tr.total, (tr.total - k as f64).abs()))
            }),
            Method::S3 => Err("needs an S3 model".into()),
            _ => Err("needs a 3-torus model".into()),
        };
        outputs.push((m.name().into(), r));
    }
    let mut report = assemble_report(model, sizes, outputs, extras);
    report.notes.push(format!("frames: smoothness {:.3}", pipe.frames.smoothness));
    Ok(report)
}
