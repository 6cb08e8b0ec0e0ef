//! Argument parsing and command implementations behind the `tki` binary.
//!
//! Every command returns an [`Outcome`] holding the text to write and the
//! process exit code, so tests can drive the CLI without spawning it.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use tki::bloch::{
    berry_connection, plane_chern_numbers, quaternionic_average, quaternionic_residual, BZGrid, BlochError,
};
use tki::eqforms::{self, Cochain};
use tki::invariants::{self, compute, pipeline, ComputeOptions, InvariantError, InvariantReport, Method};
use tki::models::{
    default_params, export_sampled, ingest_sampled, make_model, validate_model, BlochModel, Domain, ModelError,
    SampledDocument,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DISAGREEMENT: i32 = 2;
pub const EXIT_NONCONVERGENT: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "tki", version, about = "Kane-Mele Z2 invariants on discretized Brillouin zones")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Worker threads; falls back to TKI_THREADS, then to all cores.
    #[arg(long, global = true, env = "TKI_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compute the invariant by several methods and report their consensus.
    Invariant(InvariantArgs),
    /// Sweep one parameter and tabulate the parities as CSV.
    PhaseDiagram(PhaseArgs),
    /// Dump the fixed-point localisation trace of a 3-form.
    Localise(LocaliseArgs),
    /// Run the property suite on a set of models.
    Validate(ValidateArgs),
    /// Check a sampled-Hamiltonian document and write a normalized cache.
    Ingest(IngestArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct ModelArgs {
    /// Registered model name.
    #[arg(long)]
    pub model: Option<String>,
    /// Comma-separated `k=v` parameter overrides.
    #[arg(long, default_value = "")]
    pub params: String,
    /// Dimension of the trivial model.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Occupied rank of the trivial model.
    #[arg(long)]
    pub m: Option<usize>,
    /// Sampled-Hamiltonian document to use instead of a registered model.
    #[arg(long, conflicts_with = "model")]
    pub input: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct Tolerances {
    /// Largest worst-link deficiency accepted for the smooth gauge.
    #[arg(long, default_value_t = 0.5)]
    pub tol_smoothness: f64,
    /// Sewing unitarity, involution relation and fixed-point skewness.
    #[arg(long, default_value_t = 1e-8)]
    pub tol_sewing: f64,
    /// Time-reversal relation of the Hamiltonian.
    #[arg(long, default_value_t = 1e-9)]
    pub tol_symmetry: f64,
    /// Kramers splitting and `<psi, Theta psi>` overlap at fixed points.
    #[arg(long, default_value_t = 1e-9)]
    pub tol_kramers: f64,
    /// Plane Chern numbers.
    #[arg(long, default_value_t = 1e-6)]
    pub tol_chern: f64,
    /// Deviation of the averaged connection from its time-reversal image.
    #[arg(long, default_value_t = 1e-8)]
    pub tol_quaternionic: f64,
    /// Spectral gaps at or below this count as closed.
    #[arg(long, default_value_t = 1e-8)]
    pub tol_gap: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tol_smoothness: 0.5,
            tol_sewing: 1e-8,
            tol_symmetry: 1e-9,
            tol_kramers: 1e-9,
            tol_chern: 1e-6,
            tol_quaternionic: 1e-8,
            tol_gap: 1e-8,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct InvariantArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// `N` or `N,N,N`; the mesh resolution on S3.
    #[arg(long)]
    pub grid: Option<String>,
    /// Comma-separated subset of pfaffian,planes,wzw,winding,cs,s3,localise.
    #[arg(long)]
    pub methods: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub tol: Tolerances,
}

#[derive(Args, Debug, Clone)]
pub struct PhaseArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// `name=start:stop:points`, endpoints included.
    #[arg(long)]
    pub sweep: String,
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub tol: Tolerances,
}

#[derive(Args, Debug, Clone)]
pub struct LocaliseArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// `uniform:v` for the constant density of total v, or `wzw`.
    #[arg(long)]
    pub form: Option<String>,
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub tol: Tolerances,
}

#[derive(Args, Debug, Clone)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub grid: Option<String>,
    /// Seed for the random momenta of the symmetry check.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Add a Theta-odd Zeeman term of this size to every model.
    #[arg(long)]
    pub perturb: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub tol: Tolerances,
}

#[derive(Args, Debug, Clone)]
pub struct IngestArgs {
    pub path: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A failed command: message for the error stream and exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::usage(e.to_string())
    }
}

impl From<InvariantError> for CliError {
    fn from(e: InvariantError) -> Self {
        let code = match &e {
            InvariantError::NonConvergent { .. }
            | InvariantError::Bloch(BlochError::RoughGauge { .. })
            | InvariantError::Bloch(BlochError::ConvergenceFailure(_)) => EXIT_NONCONVERGENT,
            _ => EXIT_USAGE,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<BlochError> for CliError {
    fn from(e: BlochError) -> Self {
        InvariantError::Bloch(e).into()
    }
}

/// Text to emit plus exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub output: String,
    pub code: i32,
    pub out: Option<PathBuf>,
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `k=v,k=v`.
pub fn parse_params(s: &str) -> CliResult<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for item in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
        let (k, v) = item.split_once('=').ok_or_else(|| CliError::usage(format!("expected k=v, got `{item}`")))?;
        let v: f64 = v.trim().parse().map_err(|_| CliError::usage(format!("`{v}` is not a number")))?;
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}

/// Parses `N` (repeated over `dim` axes) or `N,N,N`. Sizes must be even and
/// at least 8.
pub fn parse_grid(s: &str, dim: usize) -> CliResult<Vec<usize>> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|_| CliError::usage(format!("bad grid size `{x}`"))))
        .collect::<CliResult<_>>()?;
    let sizes = match parts.len() {
        1 => vec![parts[0]; dim],
        n if n == dim => parts,
        n => return Err(CliError::usage(format!("grid has {n} sizes but the model has dimension {dim}"))),
    };
    if let Some(bad) = sizes.iter().find(|&&n| n < 8 || n % 2 == 1) {
        return Err(CliError::usage(format!("grid sizes must be even and at least 8, got {bad}")));
    }
    Ok(sizes)
}

pub fn parse_methods(s: &str) -> CliResult<Vec<Method>> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| Method::parse(x).ok_or_else(|| CliError::usage(format!("unknown method `{x}`"))))
        .collect()
}

fn read_document(path: &Path) -> CliResult<SampledDocument> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

/// Registered model name and parameters from `--model`/`--params`/`--dim`/`--m`.
fn named_params(args: &ModelArgs) -> CliResult<(String, BTreeMap<String, f64>)> {
    let name = args.model.clone().ok_or_else(|| CliError::usage("one of --model or --input is required"))?;
    let mut params = parse_params(&args.params)?;
    if let Some(d) = args.dim {
        params.insert("d".into(), d as f64);
    }
    if let Some(m) = args.m {
        params.insert("m".into(), m as f64);
    }
    Ok((name, params))
}

/// The model selected by `--model`/`--params`/`--dim`/`--m` or `--input`.
pub fn build_model(args: &ModelArgs) -> CliResult<BlochModel> {
    if let Some(path) = &args.input {
        return Ok(ingest_sampled(&read_document(path)?)?);
    }
    let (name, params) = named_params(args)?;
    Ok(make_model(&name, &params)?)
}

fn grid_for(model: &BlochModel, grid: Option<&str>) -> CliResult<Vec<usize>> {
    match model.domain {
        Domain::Sphere3 => parse_grid(grid.unwrap_or("48"), 1),
        Domain::Torus(d) => parse_grid(grid.unwrap_or("16"), d),
    }
}

fn default_methods(model: &BlochModel) -> Vec<Method> {
    match model.domain {
        Domain::Sphere3 => vec![Method::S3],
        Domain::Torus(3) => vec![Method::Pfaffian, Method::Planes, Method::Wzw, Method::Winding],
        Domain::Torus(_) => vec![Method::Pfaffian, Method::Planes],
    }
}

fn options(tol: &Tolerances) -> ComputeOptions {
    ComputeOptions { max_smoothness: tol.tol_smoothness, ..ComputeOptions::default() }
}

/// Exit code for a finished report.
pub fn report_exit_code(report: &InvariantReport) -> i32 {
    if report.has_nonconvergent() {
        EXIT_NONCONVERGENT
    } else if !report.consensus {
        EXIT_DISAGREEMENT
    } else {
        EXIT_OK
    }
}

pub fn cmd_invariant(args: &InvariantArgs) -> CliResult<Outcome> {
    let model = build_model(&args.model)?;
    let sizes = grid_for(&model, args.grid.as_deref())?;
    let methods = match &args.methods {
        Some(m) => parse_methods(m)?,
        None => default_methods(&model),
    };
    let report = compute(&model, &sizes, &methods, &options(&args.tol))?;
    let output = serde_json::to_string_pretty(&report).expect("reports serialize") + "\n";
    Ok(Outcome { output, code: report_exit_code(&report), out: args.out.clone() })
}

/// One row of the phase-diagram CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub param: f64,
    pub gap: f64,
    pub parity_pfaffian: f64,
    pub parity_planes: f64,
    pub parity_wzw: f64,
    pub consensus: bool,
    pub gapless: bool,
}

impl PhaseRow {
    fn gapless(param: f64) -> Self {
        PhaseRow {
            param,
            gap: f64::NAN,
            parity_pfaffian: f64::NAN,
            parity_planes: f64::NAN,
            parity_wzw: f64::NAN,
            consensus: false,
            gapless: true,
        }
    }
}

fn parse_sweep(s: &str) -> CliResult<(String, Vec<f64>)> {
    let err = || CliError::usage(format!("expected name=start:stop:points, got `{s}`"));
    let (name, range) = s.split_once('=').ok_or_else(err)?;
    let parts: Vec<&str> = range.split(':').collect();
    if parts.len() != 3 {
        return Err(err());
    }
    let a: f64 = parts[0].parse().map_err(|_| err())?;
    let b: f64 = parts[1].parse().map_err(|_| err())?;
    let n: usize = parts[2].parse().map_err(|_| err())?;
    if n == 0 {
        return Err(err());
    }
    let values = (0..n).map(|i| if n == 1 { a } else { a + (b - a) * i as f64 / (n - 1) as f64 }).collect();
    Ok((name.trim().to_string(), values))
}

fn phase_row(model: &BlochModel, sizes: &[usize], value: f64, tol: &Tolerances) -> CliResult<PhaseRow> {
    let mut row = PhaseRow::gapless(value);
    let grid = match model.domain {
        Domain::Sphere3 => BZGrid::sphere3(sizes[0]),
        Domain::Torus(_) => BZGrid::torus(sizes),
    }
    .map_err(|e| CliError::usage(e.to_string()))?;
    let v = validate_model(model, &grid)?;
    row.gap = v.min_gap;
    if v.min_gap <= tol.tol_gap {
        return Ok(row);
    }
    row.gapless = false;
    let methods = match model.domain {
        Domain::Sphere3 => vec![Method::S3],
        Domain::Torus(3) => vec![Method::Pfaffian, Method::Planes, Method::Wzw],
        Domain::Torus(_) => vec![Method::Pfaffian, Method::Planes],
    };
    let report = compute(model, sizes, &methods, &options(tol))?;
    let get = |name: &str| report.methods.get(name).map_or(f64::NAN, |m| m.parity as f64);
    row.parity_pfaffian = get("pfaffian");
    row.parity_planes = get("planes");
    row.parity_wzw = if model.domain == Domain::Sphere3 { get("s3") } else { get("wzw") };
    row.consensus = report.consensus && report.methods.len() == methods.len();
    Ok(row)
}

pub fn cmd_phase_diagram(args: &PhaseArgs) -> CliResult<Outcome> {
    let (name, values) = parse_sweep(&args.sweep)?;
    let base = build_model(&args.model)?;
    let known = args.model.input.is_none() && default_params(&base.name)?.contains_key(&name);
    if !known {
        eprintln!("note: `{name}` is not a parameter of `{}`; every row uses the same model", base.name);
    }
    let sizes = grid_for(&base, args.grid.as_deref())?;
    let mut writer = csv::Writer::from_writer(vec![]);
    let mut code = EXIT_OK;
    for value in values {
        let row = if known {
            let (mname, mut params) = named_params(&args.model)?;
            params.insert(name.clone(), value);
            match make_model(&mname, &params) {
                Ok(model) => phase_row(&model, &sizes, value, &args.tol)?,
                Err(ModelError::Gapless { gap, .. }) => PhaseRow { gap: gap.max(0.0), ..PhaseRow::gapless(value) },
                Err(e) => return Err(e.into()),
            }
        } else {
            phase_row(&base, &sizes, value, &args.tol)?
        };
        if !row.gapless && !row.consensus {
            code = EXIT_DISAGREEMENT;
        }
        writer.serialize(&row).map_err(|e| CliError::usage(e.to_string()))?;
    }
    let bytes = writer.into_inner().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(Outcome { output: String::from_utf8(bytes).expect("csv is utf-8"), code, out: args.out.clone() })
}

pub fn cmd_localise(args: &LocaliseArgs) -> CliResult<Outcome> {
    let form = args.form.clone().unwrap_or_else(|| "wzw".into());
    let (trace, expected) = if let Some(v) = form.strip_prefix("uniform:") {
        let total: f64 = v.parse().map_err(|_| CliError::usage(format!("bad uniform total `{v}`")))?;
        let sizes = parse_grid(args.grid.as_deref().unwrap_or("16"), 3)?;
        let grid = BZGrid::torus(&sizes).map_err(|e| CliError::usage(e.to_string()))?;
        (eqforms::localise(&Cochain::uniform_top(&grid, total)).map_err(InvariantError::from)?, None)
    } else if form == "wzw" {
        let model = build_model(&args.model)?;
        if model.domain != Domain::Torus(3) {
            return Err(CliError::usage("--form wzw needs a 3-torus model"));
        }
        let sizes = grid_for(&model, args.grid.as_deref())?;
        let grid = BZGrid::torus(&sizes).map_err(|e| CliError::usage(e.to_string()))?;
        let opts = options(&args.tol);
        let pipe = pipeline(&model, &grid, &opts)?;
        let sampled = eqforms::sample_wzw(&pipe.reduced, opts.scheme).map_err(InvariantError::from)?;
        let trace = eqforms::localise(&sampled.cochain).map_err(InvariantError::from)?;
        let pf = invariants::km_trim_pfaffian(&pipe.reduced)?;
        (trace, Some(pf.parity))
    } else {
        return Err(CliError::usage(format!("unknown form `{form}` (expected uniform:v or wzw)")));
    };
    let output = serde_json::to_string_pretty(&trace).expect("traces serialize") + "\n";
    let code = match expected {
        Some(p) if p != trace.parity => {
            eprintln!("localised parity {} disagrees with the Pfaffian parity {p}", trace.parity);
            EXIT_DISAGREEMENT
        }
        _ => EXIT_OK,
    };
    Ok(Outcome { output, code, out: args.out.clone() })
}

/// One checked property.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub model: String,
    pub property: String,
    /// Measured value; `null` when the property could not be evaluated.
    pub value: Option<f64>,
    pub limit: String,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub seed: u64,
    pub properties: Vec<PropertyResult>,
    pub all_pass: bool,
}

struct Recorder<'a> {
    model: &'a str,
    out: &'a mut Vec<PropertyResult>,
}

impl Recorder<'_> {
    fn at_most(&mut self, property: &str, value: f64, limit: f64) {
        self.out.push(PropertyResult {
            model: self.model.into(),
            property: property.into(),
            value: Some(value),
            limit: format!("<= {limit:e}"),
            pass: value <= limit,
            error: None,
        });
    }

    fn above(&mut self, property: &str, value: f64, limit: f64) {
        self.out.push(PropertyResult {
            model: self.model.into(),
            property: property.into(),
            value: Some(value),
            limit: format!("> {limit:e}"),
            pass: value > limit,
            error: None,
        });
    }

    fn failed(&mut self, property: &str, error: String) {
        self.out.push(PropertyResult {
            model: self.model.into(),
            property: property.into(),
            value: None,
            limit: String::new(),
            pass: false,
            error: Some(error),
        });
    }
}

fn validate_one(model: &BlochModel, sizes: &[usize], seed: u64, tol: &Tolerances, out: &mut Vec<PropertyResult>) {
    let label = model.name.clone();
    let mut rec = Recorder { model: &label, out };
    let grid = BZGrid::torus(sizes).expect("validated sizes");
    match validate_model(model, &grid) {
        Ok(v) => {
            rec.at_most("hamiltonian_hermiticity", v.hermiticity_residual, 1e-12);
            rec.at_most("time_reversal_on_grid", v.tr_residual, tol.tol_symmetry);
            rec.above("spectral_gap", v.min_gap, tol.tol_gap);
            rec.at_most("kramers_splitting", v.kramers_splitting, tol.tol_kramers);
            rec.at_most("kramers_overlap", v.kramers_overlap, tol.tol_kramers);
        }
        Err(e) => rec.failed("model_validation", e.to_string()),
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let worst = (0..100)
        .map(|_| {
            let k: Vec<f64> = (0..grid.dim()).map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)).collect();
            model.tr_residual_at(&k)
        })
        .fold(0.0, f64::max);
    rec.at_most("time_reversal_at_random_k", worst, tol.tol_symmetry);
    let opts = ComputeOptions { max_smoothness: f64::INFINITY, ..options(tol) };
    let pipe = match pipeline(model, &grid, &opts) {
        Ok(p) => p,
        Err(e) => {
            rec.failed("sewing_field", e.to_string());
            return;
        }
    };
    let chern = plane_chern_numbers(&pipe.raw).iter().map(|p| p.raw.abs()).fold(0.0, f64::max);
    rec.at_most("plane_chern_numbers", chern, tol.tol_chern);
    rec.at_most("frame_smoothness", pipe.frames.smoothness, tol.tol_smoothness);
    rec.at_most("sewing_unitarity", pipe.sewing.unitarity_residual(), tol.tol_sewing);
    rec.at_most("sewing_relation", pipe.sewing.involution_residual(), tol.tol_sewing);
    rec.at_most("sewing_trim_skewness", pipe.sewing.trim_skew_residual(), tol.tol_sewing);
    if grid.dim() == 3 {
        match berry_connection(&pipe.frames).and_then(|c| quaternionic_average(&c, &pipe.sewing)) {
            Ok(avg) => rec.at_most("quaternionic_connection", quaternionic_residual(&avg, &pipe.sewing), tol.tol_quaternionic),
            Err(e) => rec.failed("quaternionic_connection", e.to_string()),
        }
    }
    let methods = default_methods(model);
    match compute(model, sizes, &methods, &options(tol)) {
        Ok(r) => {
            let ok = r.consensus && r.methods.len() == methods.len();
            rec.out.push(PropertyResult {
                model: label.clone(),
                property: "method_consensus".into(),
                value: r.methods.get("pfaffian").map(|m| m.parity as f64),
                limit: format!("{} methods agree", methods.len()),
                pass: ok,
                error: (!ok).then(|| r.notes.join("; ")),
            });
        }
        Err(e) => rec.failed("method_consensus", e.to_string()),
    }
}

pub fn cmd_validate(args: &ValidateArgs) -> CliResult<Outcome> {
    let models: Vec<BlochModel> = if args.model.model.is_some() || args.model.input.is_some() {
        vec![build_model(&args.model)?]
    } else {
        let p = |kv: &[(&str, f64)]| kv.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        vec![
            make_model("trivial", &p(&[("d", 3.0), ("m", 2.0)]))?,
            make_model("bhz2d", &p(&[]))?,
            make_model("fkm3d", &p(&[]))?,
        ]
    };
    let mut properties = vec![];
    for model in models {
        let Domain::Torus(d) = model.domain else {
            return Err(CliError::usage("validate runs on torus models"));
        };
        let sizes = parse_grid(args.grid.as_deref().unwrap_or("16"), d)?;
        let model = match args.perturb {
            Some(eps) => model.with_zeeman(eps),
            None => model,
        };
        validate_one(&model, &sizes, args.seed, &args.tol, &mut properties);
    }
    let all_pass = properties.iter().all(|p| p.pass);
    let summary = ValidationSummary { seed: args.seed, properties, all_pass };
    for p in summary.properties.iter().filter(|p| !p.pass) {
        eprintln!("FAIL {} {}: {}", p.model, p.property, p.error.clone().unwrap_or_else(|| format!("{:?}", p.value)));
    }
    let output = serde_json::to_string_pretty(&summary).expect("summaries serialize") + "\n";
    Ok(Outcome { output, code: if all_pass { EXIT_OK } else { EXIT_VALIDATION }, out: args.out.clone() })
}

/// Contents of the cache written next to an ingested document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestCache {
    pub source: String,
    pub validation: tki::models::ModelValidation,
    /// The document with every `H(k)` replaced by its Hermitian part.
    pub document: SampledDocument,
}

/// `<stem>.cache.json` beside `path`.
pub fn cache_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "sampled".into());
    path.with_file_name(format!("{stem}.cache.json"))
}

pub fn cmd_ingest(args: &IngestArgs) -> CliResult<Outcome> {
    let doc = read_document(&args.path)?;
    let model = ingest_sampled(&doc)?;
    let grid = BZGrid::torus(&doc.sizes).map_err(|e| CliError::usage(e.to_string()))?;
    let validation = validate_model(&model, &grid)?;
    let cache = IngestCache {
        source: args.path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        validation: validation.clone(),
        document: export_sampled(&model, &doc.sizes)?,
    };
    let target = cache_path(&args.path);
    let text = serde_json::to_string(&cache).expect("caches serialize");
    std::fs::write(&target, text).map_err(|e| CliError::usage(format!("cannot write {}: {e}", target.display())))?;
    let output = serde_json::to_string_pretty(&validation).expect("validations serialize") + "\n";
    Ok(Outcome { output, code: EXIT_OK, out: args.out.clone() })
}

pub fn run(cli: &Cli) -> CliResult<Outcome> {
    match &cli.command {
        Command::Invariant(a) => cmd_invariant(a),
        Command::PhaseDiagram(a) => cmd_phase_diagram(a),
        Command::Localise(a) => cmd_localise(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Ingest(a) => cmd_ingest(a),
    }
}

/// Writes the outcome to `--out` or standard output.
pub fn emit(outcome: &Outcome) -> CliResult<()> {
    match &outcome.out {
        Some(path) => std::fs::write(path, &outcome.output)
            .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{}", outcome.output);
            Ok(())
        }
    }
}
