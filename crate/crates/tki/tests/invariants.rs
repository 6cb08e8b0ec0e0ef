use std::collections::BTreeMap;

use tki::invariants::{assemble_report, compute, km_s3, ComputeOptions, InvariantReport, Method, MethodResult, ReportExtras};
use tki::models::{make_model, BlochModel};

fn model(name: &str, kv: &[(&str, f64)]) -> BlochModel {
    make_model(name, &kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()).unwrap()
}

fn run(m: &BlochModel, n: usize, methods: &[Method]) -> InvariantReport {
    compute(m, &vec![n; m.dim()], methods, &ComputeOptions::default()).unwrap()
}

const TORUS3: [Method; 6] = [Method::Pfaffian, Method::Planes, Method::Wzw, Method::Winding, Method::Cs, Method::Localise];

#[test]
fn trivial_model_is_even_everywhere() {
    let r = run(&model("trivial", &[("d", 3.0), ("m", 2.0)]), 8, &TORUS3);
    assert_eq!(r.methods.len(), TORUS3.len(), "{:?}", r.notes);
    assert!(r.consensus);
    for (name, m) in &r.methods {
        assert_eq!(m.parity, 1, "{name}");
        assert!(m.raw.abs() < 1e-12 || name == "pfaffian" || name == "planes", "{name}: {}", m.raw);
    }
    assert_eq!(r.weak, Some([1, 1, 1]));
}

#[test]
fn bhz_parity_flips_at_the_transitions() {
    for (mm, want) in [(-3.0, 1), (-1.0, -1), (1.0, -1), (3.0, 1)] {
        let r = run(&model("bhz2d", &[("M", mm)]), 16, &[Method::Pfaffian, Method::Planes]);
        assert!(r.consensus, "M = {mm}: {:?}", r.notes);
        assert_eq!(r.methods["pfaffian"].parity, want, "M = {mm}");
    }
}

#[test]
fn strong_insulator_agrees_across_methods() {
    let r = run(&model("fkm3d", &[]), 16, &TORUS3);
    assert!(r.consensus, "{:?}", r.notes);
    assert_eq!(r.methods.len(), TORUS3.len(), "{:?}", r.notes);
    assert_eq!(r.methods["pfaffian"].parity, -1);
    assert_eq!(r.strong, Some(-1));
    assert_eq!(r.trim_pfaffians.len(), 8);
    assert!((r.methods["wzw"].raw + 2.0 * r.methods["cs"].raw).abs() < 0.1);
}

#[test]
fn weak_insulator_has_even_strong_index() {
    // Band inversion at the two TRIMs with k_2 = 0 only; stacked 2D insulators.
    let r = run(&model("layered3d", &[("M", 1.0), ("tz", 0.5), ("lambda_z", 0.5)]), 16, &[Method::Pfaffian, Method::Planes]);
    assert!(r.consensus, "{:?}", r.notes);
    assert_eq!(r.strong, Some(1));
    assert_eq!(r.weak, Some([1, 1, -1]));
}

#[test]
fn direct_sum_multiplies_parities() {
    let a = model("fkm3d", &[]);
    let s = a.direct_sum(&a).unwrap();
    let r = run(&s, 16, &[Method::Pfaffian, Method::Planes, Method::Wzw]);
    assert!(r.consensus, "{:?}", r.notes);
    assert_eq!(r.methods["pfaffian"].parity, 1);
    let wzw = r.methods["wzw"].raw;
    assert!((wzw / 2.0 - (wzw / 2.0).round()).abs() < 0.05, "{wzw}");
}

#[test]
fn dirac_sphere_parity_follows_the_mass_sign() {
    for (mass, want) in [(-1.0, -1), (1.0, 1)] {
        let r = km_s3(&model("dirac_s3", &[("mass", mass)]), 32).unwrap();
        assert_eq!(r.parity, want, "mass {mass}: upsilon {}", r.upsilon);
        assert!(r.descent_residual < 1e-9);
        assert_eq!(r.rho0_s, 0.0);
    }
}

#[test]
fn disagreement_clears_consensus() {
    let m = model("trivial", &[]);
    let one = |parity| Ok(MethodResult { parity, raw: parity as f64, residual: 0.0, runtime_ms: 0.0 });
    let r = assemble_report(
        &m,
        &[8, 8, 8],
        vec![("pfaffian".into(), one(1)), ("wzw".into(), one(-1)), ("winding".into(), Err("did not converge".into()))],
        ReportExtras::default(),
    );
    assert!(!r.consensus);
    assert_eq!(r.methods.len(), 2);
    assert!(r.has_nonconvergent());
}

#[test]
fn report_survives_json() {
    let r = run(&model("fkm3d", &[]), 16, &[Method::Pfaffian, Method::Planes]);
    let text = serde_json::to_string(&r).unwrap();
    let back: InvariantReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, r);
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in ["model", "grid", "methods", "trim_pfaffians", "weak", "strong", "consensus", "notes"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(v["model"]["params"]["dt"], 1.0);
    let _: BTreeMap<String, MethodResult> = serde_json::from_value(v["methods"].clone()).unwrap();
}

#[test]
fn sphere_models_only_take_s3() {
    let r = compute(&model("dirac_s3", &[]), &[16], &[Method::S3, Method::Wzw], &ComputeOptions::default()).unwrap();
    assert_eq!(r.methods.keys().collect::<Vec<_>>(), ["s3"]);
    assert!(r.notes.iter().any(|n| n.starts_with("wzw:")));
}
