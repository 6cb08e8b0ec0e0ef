//! Time-reversal-symmetric Bloch Hamiltonians.
//!
//! A [`BlochModel`] bundles an evaluator `k ↦ H(k)`, the unitary part `U` of
//! the antiunitary time reversal `Θψ = U·conj(ψ)`, and the number of occupied
//! bands below the Fermi energy 0. Only the odd case `Θ² = −1` is supported.
//!
//! Registered families (all 4-band models use the Dirac matrices of
//! [`gamma`], with `Γ₁` even and `Γ₂..Γ₅` odd under `Θ = (1 ⊗ iσ_y)K`):
//!
//! | name | domain | `H(k)` |
//! |------|--------|--------|
//! | `trivial` | `T^d` | `diag(−1 (m times), +1 (m times))` |
//! | `fkm3d` | `T³` | `d₁Γ₁ + d₂Γ₂ + λ(d₃Γ₃ + d₄Γ₄ + d₅Γ₅)` (diamond lattice) |
//! | `bhz2d` | `T²` | `(M − cos k₀ − cos k₁)Γ₁ + sin k₀ Γ₃ + sin k₁ Γ₄ + r(sin k₀ + sin k₁)Γ₂` |
//! | `layered3d` | `T³` | `bhz2d` with `t_z cos k₂` added to the mass and `λ_z sin k₂ Γ₅` |
//! | `dirac_s3` | `S³` | `k¹Γ₃ + k²Γ₄ + k³Γ₅ + (m + c(1 − k⁰))Γ₁` |
//!
//! For `fkm3d`: `d₁ = t + δt + t Σ cos k_j`, `d₂ = t Σ sin k_j`,
//! `d₃ = sin k₁ − sin k₀ − sin(k₁ − k₀)`, `d₄ = sin k₀ − sin k₂ − sin(k₀ − k₂)`,
//! `d₅ = sin k₂ − sin k₁ − sin(k₂ − k₁)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bloch::BZGrid;
use crate::linalg::{hermitian_eig, CMatrix, LinalgError, C64, ONE, ZERO};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("time-reversal contract violated (residual {residual:e})")]
    SymmetryViolation { residual: f64 },
    #[error("spectrum not gapped at the Fermi energy (gap {gap:e} at k = {k:?})")]
    Gapless { gap: f64, k: Vec<f64> },
    #[error("momentum {0:?} is outside the model domain")]
    OutOfDomain(Vec<f64>),
    #[error("grid is incompatible with the model domain")]
    IncompatibleGrid,
    #[error("schema error: {0}")]
    SchemaError(String),
    #[error("sampled grid sizes must be even, got {0:?}")]
    OddGrid(Vec<usize>),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Antiunitary `ψ ↦ U·conj(ψ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeReversalOperator {
    pub u: CMatrix,
}

impl TimeReversalOperator {
    /// Checks unitarity and `U·conj(U) = −1`.
    pub fn new(u: CMatrix) -> Result<Self> {
        let n = u.require_square()?;
        let unit = u.unitarity_residual();
        let sq = (&(&u * &u.conj()) + &CMatrix::identity(n)).max_abs();
        if unit > 1e-12 || sq > 1e-12 {
            return Err(ModelError::SymmetryViolation { residual: unit.max(sq) });
        }
        Ok(TimeReversalOperator { u })
    }

    /// `1_{n/2} ⊗ iσ_y`.
    pub fn standard(n: usize) -> Self {
        TimeReversalOperator { u: CMatrix::kron(&CMatrix::identity(n / 2), &isy()) }
    }

    pub fn dim(&self) -> usize {
        self.u.rows()
    }

    /// `Θ` applied to each column of `v`.
    pub fn apply(&self, v: &CMatrix) -> CMatrix {
        &self.u * &v.conj()
    }

    /// `Θ H Θ⁻¹ = U conj(H) U†`.
    pub fn conjugate(&self, h: &CMatrix) -> CMatrix {
        &(&self.u * &h.conj()) * &self.u.adjoint()
    }

    pub fn direct_sum(&self, other: &Self) -> Self {
        TimeReversalOperator { u: CMatrix::block_diag(&self.u, &other.u) }
    }
}

fn isy() -> CMatrix {
    CMatrix::from_real(2, 2, &[0.0, 1.0, -1.0, 0.0])
}

/// The Dirac matrices `Γ₁ = τ_x⊗1, Γ₂ = τ_y⊗1, Γ₃ = τ_z⊗σ_x, Γ₄ = τ_z⊗σ_y,
/// Γ₅ = τ_z⊗σ_z`, indexed `0..5`.
pub fn gamma() -> [CMatrix; 5] {
    let s0 = CMatrix::identity(2);
    let sx = CMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let sy = CMatrix::from_vec(2, 2, vec![ZERO, C64::new(0.0, -1.0), C64::new(0.0, 1.0), ZERO]);
    let sz = CMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, -1.0]);
    [
        CMatrix::kron(&sx, &s0),
        CMatrix::kron(&sy, &s0),
        CMatrix::kron(&sz, &sx),
        CMatrix::kron(&sz, &sy),
        CMatrix::kron(&sz, &sz),
    ]
}

fn dirac(d: [f64; 5], g: &[CMatrix; 5]) -> CMatrix {
    let mut h = CMatrix::zeros(4, 4);
    for (x, m) in d.iter().zip(g) {
        if *x != 0.0 {
            h = &h + &m.scale_real(*x);
        }
    }
    h
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Torus(usize),
    Sphere3,
}

type Evaluator = Arc<dyn Fn(&[f64]) -> CMatrix + Send + Sync>;

/// A gapped, time-reversal-symmetric band Hamiltonian.
#[derive(Clone)]
pub struct BlochModel {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub domain: Domain,
    pub n_bands: usize,
    pub n_occ: usize,
    pub theta: TimeReversalOperator,
    ham: Evaluator,
}

impl fmt::Debug for BlochModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlochModel")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("domain", &self.domain)
            .field("n_bands", &self.n_bands)
            .field("n_occ", &self.n_occ)
            .finish()
    }
}

impl BlochModel {
    /// Wraps an arbitrary evaluator without checking any contract.
    pub fn from_fn(
        name: &str,
        domain: Domain,
        n_occ: usize,
        theta: TimeReversalOperator,
        ham: impl Fn(&[f64]) -> CMatrix + Send + Sync + 'static,
    ) -> Self {
        BlochModel {
            name: name.to_string(),
            params: BTreeMap::new(),
            domain,
            n_bands: theta.dim(),
            n_occ,
            theta,
            ham: Arc::new(ham),
        }
    }

    pub fn dim(&self) -> usize {
        match self.domain {
            Domain::Torus(d) => d,
            Domain::Sphere3 => 3,
        }
    }

    /// `H(k)`. On `T^d`, `k` has `d` components; on `S³` it is a unit
    /// 4-vector `(k⁰, k¹, k², k³)`.
    pub fn evaluate(&self, k: &[f64]) -> Result<CMatrix> {
        match self.domain {
            Domain::Torus(d) if k.len() == d && k.iter().all(|x| x.is_finite()) => Ok((self.ham)(k)),
            Domain::Sphere3 if k.len() == 4 && (k.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-9 => {
                Ok((self.ham)(k))
            }
            _ => Err(ModelError::OutOfDomain(k.to_vec())),
        }
    }

    pub(crate) fn eval_unchecked(&self, k: &[f64]) -> CMatrix {
        (self.ham)(k)
    }

    /// Image of `k` under the involution: `−k` on the torus, inversion
    /// through the `k⁰`-axis on `S³`.
    pub fn involute(&self, k: &[f64]) -> Vec<f64> {
        match self.domain {
            Domain::Torus(_) => k.iter().map(|x| -x).collect(),
            Domain::Sphere3 => vec![k[0], -k[1], -k[2], -k[3]],
        }
    }

    /// `‖Θ H(k) Θ⁻¹ − H(τk)‖_max` at one point.
    pub fn tr_residual_at(&self, k: &[f64]) -> f64 {
        let h = self.eval_unchecked(k);
        let hm = self.eval_unchecked(&self.involute(k));
        (&self.theta.conjugate(&h) - &hm).max_abs()
    }

    /// `H_A ⊕ H_B` with `Θ_A ⊕ Θ_B`.
    pub fn direct_sum(&self, other: &BlochModel) -> Result<BlochModel> {
        if self.domain != other.domain {
            return Err(ModelError::BadParams("direct sum needs a common domain".into()));
        }
        let (a, b) = (self.ham.clone(), other.ham.clone());
        let mut params = BTreeMap::new();
        for (k, v) in &self.params {
            params.insert(format!("a.{k}"), *v);
        }
        for (k, v) in &other.params {
            params.insert(format!("b.{k}"), *v);
        }
        Ok(BlochModel {
            name: format!("{}+{}", self.name, other.name),
            params,
            domain: self.domain,
            n_bands: self.n_bands + other.n_bands,
            n_occ: self.n_occ + other.n_occ,
            theta: self.theta.direct_sum(&other.theta),
            ham: Arc::new(move |k| CMatrix::block_diag(&a(k), &b(k))),
        })
    }

    /// Adds the constant Zeeman-like term `ε (1 ⊗ σ_z ⊗ ...)`, which is odd
    /// under `Θ`. The result deliberately violates the time-reversal contract
    /// and is meant for negative tests.
    pub fn with_zeeman(&self, eps: f64) -> BlochModel {
        let n = self.n_bands;
        let z = CMatrix::diag_real(&(0..n).map(|i| if i % 2 == 0 { eps } else { -eps }).collect::<Vec<_>>());
        let h = self.ham.clone();
        let mut out = self.clone();
        out.name = format!("{}~zeeman", self.name);
        out.params.insert("zeeman".into(), eps);
        out.ham = Arc::new(move |k| &h(k) + &z);
        out
    }
}

fn param(params: &BTreeMap<String, f64>, key: &str, default: Option<f64>) -> Result<f64> {
    match params.get(key) {
        Some(v) if v.is_finite() => Ok(*v),
        Some(v) => Err(ModelError::BadParams(format!("{key} = {v} is not finite"))),
        None => default.ok_or_else(|| ModelError::BadParams(format!("missing parameter `{key}`"))),
    }
}

fn check_keys(params: &BTreeMap<String, f64>, allowed: &[&str]) -> Result<()> {
    for k in params.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(ModelError::BadParams(format!("unknown parameter `{k}` (expected one of {allowed:?})")));
        }
    }
    Ok(())
}

fn count(x: f64, what: &str) -> Result<usize> {
    if x >= 1.0 && x.fract() == 0.0 {
        Ok(x as usize)
    } else {
        Err(ModelError::BadParams(format!("{what} must be a positive integer, got {x}")))
    }
}

/// Names accepted by [`make_model`].
pub const REGISTRY: [&str; 5] = ["trivial", "fkm3d", "bhz2d", "layered3d", "dirac_s3"];

/// Default parameters of each registered family.
pub fn default_params(name: &str) -> Result<BTreeMap<String, f64>> {
    let kv: &[(&str, f64)] = match name {
        "trivial" => &[("d", 3.0), ("m", 2.0)],
        "fkm3d" => &[("t", 1.0), ("dt", 1.0), ("lambda", 0.125)],
        "bhz2d" => &[("M", 1.0), ("rashba", 0.0)],
        "layered3d" => &[("M", 1.0), ("tz", 0.5), ("lambda_z", 0.0), ("rashba", 0.0)],
        "dirac_s3" => &[("mass", -1.0), ("c", 1.5)],
        other => return Err(ModelError::UnknownModel(other.to_string())),
    };
    Ok(kv.iter().map(|(k, v)| (k.to_string(), *v)).collect())
}

/// Builds a registered model; missing parameters take their defaults. The
/// result is checked on a 16-per-axis sanity grid.
pub fn make_model(name: &str, params: &BTreeMap<String, f64>) -> Result<BlochModel> {
    let defaults = default_params(name)?;
    check_keys(params, &defaults.keys().map(String::as_str).collect::<Vec<_>>())?;
    let mut p = defaults;
    for (k, v) in params {
        p.insert(k.clone(), *v);
    }
    let g = gamma();
    let model = match name {
        "trivial" => {
            let d = count(param(&p, "d", None)?, "d")?;
            let m = count(param(&p, "m", None)?, "m")?;
            if m % 2 == 1 {
                return Err(ModelError::BadParams(format!("occupied rank m = {m} must be even")));
            }
            if !(1..=3).contains(&d) {
                return Err(ModelError::BadParams(format!("dimension d = {d} must be 1, 2 or 3")));
            }
            let diag: Vec<f64> = (0..2 * m).map(|i| if i < m { -1.0 } else { 1.0 }).collect();
            let h = CMatrix::diag_real(&diag);
            let u = CMatrix::kron(&CMatrix::identity(2), &CMatrix::kron(&isy(), &CMatrix::identity(m / 2)));
            BlochModel::from_fn("trivial", Domain::Torus(d), m, TimeReversalOperator::new(u)?, move |_| h.clone())
        }
        "fkm3d" => {
            let (t, dt, lam) = (param(&p, "t", None)?, param(&p, "dt", None)?, param(&p, "lambda", None)?);
            BlochModel::from_fn("fkm3d", Domain::Torus(3), 2, TimeReversalOperator::standard(4), move |k| {
                let (s, c): (Vec<f64>, Vec<f64>) = k.iter().map(|x| (x.sin(), x.cos())).unzip();
                let d1 = t + dt + t * (c[0] + c[1] + c[2]);
                let d2 = t * (s[0] + s[1] + s[2]);
                let d3 = lam * (s[1] - s[0] - (k[1] - k[0]).sin());
                let d4 = lam * (s[0] - s[2] - (k[0] - k[2]).sin());
                let d5 = lam * (s[2] - s[1] - (k[2] - k[1]).sin());
                dirac([d1, d2, d3, d4, d5], &g)
            })
        }
        "bhz2d" => {
            let (mm, r) = (param(&p, "M", None)?, param(&p, "rashba", None)?);
            BlochModel::from_fn("bhz2d", Domain::Torus(2), 2, TimeReversalOperator::standard(4), move |k| {
                let mass = mm - k[0].cos() - k[1].cos();
                dirac([mass, r * (k[0].sin() + k[1].sin()), k[0].sin(), k[1].sin(), 0.0], &g)
            })
        }
        "layered3d" => {
            let mm = param(&p, "M", None)?;
            let tz = param(&p, "tz", None)?;
            let lz = param(&p, "lambda_z", None)?;
            let r = param(&p, "rashba", None)?;
            BlochModel::from_fn("layered3d", Domain::Torus(3), 2, TimeReversalOperator::standard(4), move |k| {
                let mass = mm - k[0].cos() - k[1].cos() + tz * k[2].cos();
                dirac([mass, r * (k[0].sin() + k[1].sin()), k[0].sin(), k[1].sin(), lz * k[2].sin()], &g)
            })
        }
        "dirac_s3" => {
            let (mass, c) = (param(&p, "mass", None)?, param(&p, "c", None)?);
            if c <= 0.0 {
                return Err(ModelError::BadParams(format!("regulator c = {c} must be positive")));
            }
            BlochModel::from_fn("dirac_s3", Domain::Sphere3, 2, TimeReversalOperator::standard(4), move |k| {
                dirac([mass + c * (1.0 - k[0]), 0.0, k[1], k[2], k[3]], &g)
            })
        }
        other => return Err(ModelError::UnknownModel(other.to_string())),
    };
    let model = BlochModel { params: p, ..model };
    let sanity = match model.domain {
        Domain::Torus(d) => BZGrid::torus(&vec![16; d]).expect("even sizes"),
        Domain::Sphere3 => BZGrid::sphere3(16).expect("even mesh"),
    };
    let v = validate_model(&model, &sanity)?;
    if v.tr_residual > 1e-9 {
        return Err(ModelError::SymmetryViolation { residual: v.tr_residual });
    }
    if v.min_gap <= 1e-8 {
        return Err(ModelError::Gapless { gap: v.min_gap, k: v.min_gap_k });
    }
    Ok(model)
}

/// Result of [`validate_model`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelValidation {
    /// `max ‖Θ H(k) Θ⁻¹ − H(−k)‖_max` over nodes.
    pub tr_residual: f64,
    /// `min(−λ_{n_occ−1}, λ_{n_occ})` over nodes; equals `min |λ|` when the
    /// filling matches `n_occ`, negative when it does not.
    pub min_gap: f64,
    pub min_gap_k: Vec<f64>,
    /// Eigenvalues pair up at every fixed point.
    pub kramers_ok: bool,
    pub hermiticity_residual: f64,
    /// `max |⟨ψ, Θψ⟩|` over occupied eigenvectors at fixed points.
    pub kramers_overlap: f64,
    pub kramers_splitting: f64,
}

pub fn validate_model(model: &BlochModel, grid: &BZGrid) -> Result<ModelValidation> {
    match (model.domain, grid.is_sphere()) {
        (Domain::Torus(d), false) if d == grid.dim() => {}
        (Domain::Sphere3, true) => {}
        _ => return Err(ModelError::IncompatibleGrid),
    }
    let n_occ = model.n_occ;
    let per_node: Vec<Result<(f64, f64, f64)>> = (0..grid.n_nodes())
        .into_par_iter()
        .map(|idx| {
            let k = grid.k_point(idx);
            let h = model.eval_unchecked(&k);
            let herm = h.hermiticity_residual();
            let hm = model.eval_unchecked(&grid.k_point(grid.involution(idx)));
            let tr = (&model.theta.conjugate(&h) - &hm).max_abs();
            let e = hermitian_eig(&h.hermitian_part())?;
            let gap = if n_occ == 0 {
                e.values[0]
            } else if n_occ == model.n_bands {
                -e.values[n_occ - 1]
            } else {
                (-e.values[n_occ - 1]).min(e.values[n_occ])
            };
            Ok((tr, gap, herm))
        })
        .collect();
    let mut out = ModelValidation {
        tr_residual: 0.0,
        min_gap: f64::INFINITY,
        min_gap_k: vec![],
        kramers_ok: true,
        hermiticity_residual: 0.0,
        kramers_overlap: 0.0,
        kramers_splitting: 0.0,
    };
    for (idx, r) in per_node.into_iter().enumerate() {
        let (tr, gap, herm) = r?;
        out.tr_residual = out.tr_residual.max(tr);
        out.hermiticity_residual = out.hermiticity_residual.max(herm);
        if gap < out.min_gap {
            out.min_gap = gap;
            out.min_gap_k = grid.k_point(idx);
        }
    }
    for idx in grid.trims() {
        let h = model.eval_unchecked(&grid.k_point(idx));
        let e = hermitian_eig(&h.hermitian_part())?;
        for pair in e.values.chunks(2) {
            if pair.len() == 2 {
                out.kramers_splitting = out.kramers_splitting.max((pair[1] - pair[0]).abs());
            }
        }
        for j in 0..n_occ {
            let psi = e.vectors.columns(j, 1);
            let tpsi = model.theta.apply(&psi);
            let ov = psi.adjoint_mul(&tpsi)[(0, 0)].norm();
            out.kramers_overlap = out.kramers_overlap.max(ov);
        }
    }
    out.kramers_ok = out.kramers_splitting <= 1e-9 && out.kramers_overlap <= 1e-9;
    Ok(out)
}

/// Externally sampled Hamiltonian on a uniform torus grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledDocument {
    pub dim: usize,
    pub sizes: Vec<usize>,
    pub n_bands: usize,
    pub n_occ: usize,
    pub theta_real: Vec<f64>,
    pub theta_imag: Vec<f64>,
    pub h_real: Vec<f64>,
    pub h_imag: Vec<f64>,
}

/// Samples a torus model on `sizes` into the document format.
pub fn export_sampled(model: &BlochModel, sizes: &[usize]) -> Result<SampledDocument> {
    let grid = BZGrid::torus(sizes).map_err(|e| ModelError::BadParams(e.to_string()))?;
    if model.domain != Domain::Torus(sizes.len()) {
        return Err(ModelError::IncompatibleGrid);
    }
    let n = model.n_bands;
    let mut h_real = Vec::with_capacity(grid.n_nodes() * n * n);
    let mut h_imag = Vec::with_capacity(grid.n_nodes() * n * n);
    for idx in 0..grid.n_nodes() {
        let h = model.eval_unchecked(&grid.k_point(idx));
        for z in h.data() {
            h_real.push(z.re);
            h_imag.push(z.im);
        }
    }
    Ok(SampledDocument {
        dim: sizes.len(),
        sizes: sizes.to_vec(),
        n_bands: n,
        n_occ: model.n_occ,
        theta_real: model.theta.u.data().iter().map(|z| z.re).collect(),
        theta_imag: model.theta.u.data().iter().map(|z| z.im).collect(),
        h_real,
        h_imag,
    })
}

/// Builds a nearest-node model from a sampled document after checking the
/// schema, Hermiticity and the time-reversal contract (tolerance 1e−8).
pub fn ingest_sampled(doc: &SampledDocument) -> Result<BlochModel> {
    let schema = |m: String| Err(ModelError::SchemaError(m));
    if !(doc.dim == 2 || doc.dim == 3) {
        return schema(format!("dim must be 2 or 3, got {}", doc.dim));
    }
    if doc.sizes.len() != doc.dim {
        return schema(format!("sizes has {} entries, expected {}", doc.sizes.len(), doc.dim));
    }
    if doc.sizes.iter().any(|&s| s == 0 || s % 2 == 1) {
        return Err(ModelError::OddGrid(doc.sizes.clone()));
    }
    let n = doc.n_bands;
    if n == 0 || n % 2 == 1 {
        return schema(format!("n_bands must be a positive even count, got {n}"));
    }
    if doc.n_occ == 0 || doc.n_occ % 2 == 1 || doc.n_occ >= n {
        return schema(format!("n_occ must be even and in (0, n_bands), got {}", doc.n_occ));
    }
    if doc.theta_real.len() != n * n || doc.theta_imag.len() != n * n {
        return schema(format!("theta_real/theta_imag must have {} entries", n * n));
    }
    let nodes: usize = doc.sizes.iter().product();
    if doc.h_real.len() != nodes * n * n || doc.h_imag.len() != nodes * n * n {
        return schema(format!("h_real/h_imag must have {} entries", nodes * n * n));
    }
    let all = doc.theta_real.iter().chain(&doc.theta_imag).chain(&doc.h_real).chain(&doc.h_imag);
    if let Some(bad) = all.clone().find(|x| !x.is_finite()) {
        return schema(format!("non-finite number {bad}"));
    }
    let u = CMatrix::from_vec(
        n,
        n,
        doc.theta_real.iter().zip(&doc.theta_imag).map(|(&r, &i)| C64::new(r, i)).collect(),
    );
    let unit = u.unitarity_residual();
    let sq = (&(&u * &u.conj()) + &CMatrix::identity(n)).max_abs();
    if unit > 1e-8 || sq > 1e-8 {
        return Err(ModelError::SymmetryViolation { residual: unit.max(sq) });
    }
    let theta = TimeReversalOperator { u };
    let grid = BZGrid::torus(&doc.sizes).map_err(|e| ModelError::SchemaError(e.to_string()))?;
    let hs: Vec<CMatrix> = (0..nodes)
        .map(|idx| {
            let off = idx * n * n;
            CMatrix::from_vec(
                n,
                n,
                (0..n * n).map(|j| C64::new(doc.h_real[off + j], doc.h_imag[off + j])).collect(),
            )
        })
        .collect();
    let mut worst: f64 = 0.0;
    for (idx, h) in hs.iter().enumerate() {
        worst = worst.max(h.hermiticity_residual());
        worst = worst.max((&theta.conjugate(h) - &hs[grid.involution(idx)]).max_abs());
    }
    if worst > 1e-8 {
        return Err(ModelError::SymmetryViolation { residual: worst });
    }
    let hs: Arc<Vec<CMatrix>> = Arc::new(hs.into_iter().map(|h| h.hermitian_part()).collect());
    let sizes = doc.sizes.clone();
    let lookup = grid.clone();
    let mut model = BlochModel::from_fn("sampled", Domain::Torus(doc.dim), doc.n_occ, theta, move |k| {
        let coords: Vec<usize> = k
            .iter()
            .zip(&sizes)
            .map(|(&x, &s)| {
                let f = (x + PI) * s as f64 / (2.0 * PI);
                (f.round() as i64).rem_euclid(s as i64) as usize
            })
            .collect();
        hs[lookup.index(&coords)].clone()
    });
    model.params = doc.sizes.iter().enumerate().map(|(a, &s)| (format!("N{a}"), s as f64)).collect();
    let v = validate_model(&model, &grid)?;
    if v.min_gap <= 1e-8 {
        return Err(ModelError::Gapless { gap: v.min_gap, k: v.min_gap_k });
    }
    Ok(model)
}

/// Builds the trivial model's Θ-adapted constant frame used in the docs.
pub fn trivial_frame(m: usize) -> CMatrix {
    CMatrix::from_fn(2 * m, m, |i, j| if i == j { ONE } else { ZERO })
}
