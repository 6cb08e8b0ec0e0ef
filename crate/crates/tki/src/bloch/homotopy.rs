//! Null-homotopies `P(t)` of families of unitaries, `P(0) = 1`, `P(1) = W`.
//!
//! When the principal logarithm is continuous over the family we use
//! `exp(t log W)`. Otherwise the family is peeled column by column: the first
//! column `v` of each member is rotated onto a common unit vector `e` by the
//! unitary `R(v)` below, which is singular only at `e†v = −1`, and the
//! remaining `(m−1)`-block is treated recursively. A `U(1)` family at the
//! bottom needs a global phase lift, which exists exactly when no winding
//! (Chern number) obstructs it.

use crate::linalg::{expm_anti_hermitian, unitary_log, unitary_phases, vdot, vnorm, CMatrix, C64, ONE};
use std::f64::consts::PI;

/// Topology of the parameter space of a family. Members are stored row-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Shape {
    Point,
    /// Periodic circle.
    Circle(usize),
    /// Periodic in both directions.
    Torus2(usize, usize),
    /// `rows` samples from pole to pole (first and last rows are single
    /// points) times a periodic circle of `cols`.
    Sphere2(usize, usize),
}

impl Shape {
    fn len(&self) -> usize {
        match *self {
            Shape::Point => 1,
            Shape::Circle(n) => n,
            Shape::Torus2(a, b) | Shape::Sphere2(a, b) => a * b,
        }
    }

    fn links(&self) -> Vec<(usize, usize)> {
        match *self {
            Shape::Point => vec![],
            Shape::Circle(n) => (0..n).map(|i| (i, (i + 1) % n)).collect(),
            Shape::Torus2(a, b) => {
                let mut l = Vec::with_capacity(2 * a * b);
                for i in 0..a {
                    for j in 0..b {
                        l.push((i * b + j, ((i + 1) % a) * b + j));
                        l.push((i * b + j, i * b + (j + 1) % b));
                    }
                }
                l
            }
            Shape::Sphere2(r, c) => {
                let mut l = Vec::with_capacity(2 * r * c);
                for i in 0..r {
                    for j in 0..c {
                        if i + 1 < r {
                            l.push((i * c + j, (i + 1) * c + j));
                        }
                        l.push((i * c + j, i * c + (j + 1) % c));
                    }
                }
                l
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Obstruction {
    /// The determinant winds `winding` times along family axis `axis`.
    Winding { axis: usize, winding: i64 },
    /// The family varies too fast to be followed.
    Rough(String),
}

pub(crate) struct NullHomotopy {
    kind: Kind,
}

enum Kind {
    Log(Vec<CMatrix>),
    Phase(Vec<f64>),
    Column { e: Vec<C64>, v: Vec<Vec<C64>>, logf: CMatrix, inner: Box<NullHomotopy> },
}

/// `R` with `R v = e` for unit `v`, `e`; unitary, `det R = (1 + ᾱ)/(1 + α)`
/// with `α = e†v`.
fn rotation(v: &[C64], e: &[C64]) -> CMatrix {
    let m = v.len();
    let a = vdot(e, v);
    let r: Vec<C64> = v.iter().zip(e).map(|(x, y)| x - a * y).collect();
    let inv = (ONE + a).inv();
    let c_re = (ONE + a.conj()) * inv;
    CMatrix::from_fn(m, m, |i, j| {
        let mut x = (a.conj() - 1.0) * e[i] * e[j].conj() + e[i] * r[j].conj()
            - c_re * r[i] * e[j].conj()
            - r[i] * r[j].conj() * inv;
        if i == j {
            x += 1.0;
        }
        x
    })
}

fn candidates(m: usize) -> Vec<Vec<C64>> {
    let mut out = Vec::new();
    for i in 0..m {
        for ph in [ONE, C64::new(0.0, 1.0), -ONE, C64::new(0.0, -1.0)] {
            let mut e = vec![C64::new(0.0, 0.0); m];
            e[i] = ph;
            out.push(e);
        }
    }
    // deterministic pseudo-random directions
    let mut state: u64 = 0x9E37_79B9_7F4A_7C15;
    let mut next = move || {
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    for _ in 0..96 {
        let e: Vec<C64> = (0..m).map(|_| C64::new(next(), next())).collect();
        let n = vnorm(&e);
        out.push(e.into_iter().map(|x| x / n).collect());
    }
    out
}

struct Unwrapped {
    phases: Vec<f64>,
    winding: i64,
}

/// Plain unwrapping: consecutive steps taken in `(−π, π]`. Coarse families
/// are accepted here; roughness is judged later on the finished gauge.
fn phase_continue(z: &[C64]) -> Result<Unwrapped, Obstruction> {
    if let Some(i) = z.iter().position(|x| x.norm() < 1e-12) {
        return Err(Obstruction::Rough(format!("vanishing determinant at member {i}")));
    }
    let mut phases = vec![z[0].arg()];
    for w in z.windows(2) {
        let last = phases[phases.len() - 1];
        phases.push(last + (w[1] / w[0]).arg());
    }
    let winding = ((phases[phases.len() - 1] - phases[0]) / (2.0 * PI)).round() as i64;
    Ok(Unwrapped { phases, winding })
}

fn lift(shape: Shape, z: &[C64]) -> Result<Vec<f64>, Obstruction> {
    let shift_to = |phases: &mut [f64], start: f64| {
        let k = ((start - phases[0]) / (2.0 * PI)).round();
        for p in phases.iter_mut() {
            *p += 2.0 * PI * k;
        }
    };
    match shape {
        Shape::Point => Ok(vec![z[0].arg()]),
        Shape::Circle(n) => {
            let mut path: Vec<C64> = z.to_vec();
            path.push(z[0]);
            let p = phase_continue(&path)?;
            if p.winding != 0 {
                return Err(Obstruction::Winding { axis: 0, winding: p.winding });
            }
            Ok(p.phases[..n].to_vec())
        }
        Shape::Torus2(a, b) => {
            let mut col: Vec<C64> = (0..a).map(|i| z[i * b]).collect();
            col.push(z[0]);
            let pc = phase_continue(&col)?;
            if pc.winding != 0 {
                return Err(Obstruction::Winding { axis: 0, winding: pc.winding });
            }
            let mut out = vec![0.0; a * b];
            for i in 0..a {
                let mut row: Vec<C64> = (0..b).map(|j| z[i * b + j]).collect();
                row.push(z[i * b]);
                let mut pr = phase_continue(&row)?;
                if pr.winding != 0 {
                    return Err(Obstruction::Winding { axis: 1, winding: pr.winding });
                }
                shift_to(&mut pr.phases, pc.phases[i]);
                out[i * b..(i + 1) * b].copy_from_slice(&pr.phases[..b]);
            }
            Ok(out)
        }
        Shape::Sphere2(r, c) => {
            let base = z[0].arg();
            let mut out = vec![0.0; r * c];
            for l in 0..c {
                let path: Vec<C64> = (0..r).map(|j| z[j * c + l]).collect();
                let mut p = phase_continue(&path)?;
                shift_to(&mut p.phases, base);
                for j in 0..r {
                    out[j * c + l] = p.phases[j];
                }
            }
            let last = &out[(r - 1) * c..];
            if last.iter().any(|x| (x - last[0]).abs() > 1e-6) {
                return Err(Obstruction::Rough("phase lift disagrees at the far pole".into()));
            }
            Ok(out)
        }
    }
}

impl NullHomotopy {
    pub(crate) fn build(family: &[CMatrix], shape: Shape) -> Result<Self, Obstruction> {
        assert_eq!(family.len(), shape.len());
        let dets: Vec<C64> = family
            .iter()
            .map(|w| w.det())
            .collect::<Result<_, _>>()
            .map_err(|x| Obstruction::Rough(x.to_string()))?;
        let det_phase = lift(shape, &dets)?;
        Self::build_lifted(family, shape, det_phase)
    }

    /// `det_phase` is a lift of `arg det` over the family. Only the top level
    /// unwraps; below it the lift is carried through the column reductions,
    /// whose determinant factors have closed-form phases.
    fn build_lifted(family: &[CMatrix], shape: Shape, det_phase: Vec<f64>) -> Result<Self, Obstruction> {
        let m = family[0].rows();
        if m == 1 {
            return Ok(NullHomotopy { kind: Kind::Phase(det_phase) });
        }
        if let Some(logs) = Self::continuous_logs(family, shape) {
            return Ok(NullHomotopy { kind: Kind::Log(logs) });
        }
        let v: Vec<Vec<C64>> = family.iter().map(|w| w.column(0)).collect();
        let e1: Vec<C64> = (0..m).map(|i| if i == 0 { ONE } else { C64::new(0.0, 0.0) }).collect();
        let mut best: Option<(f64, Vec<C64>)> = None;
        for e in candidates(m) {
            if (ONE + vdot(&e1, &e)).norm() < 0.2 {
                continue;
            }
            let score = v.iter().map(|x| (ONE + vdot(&e, x)).norm()).fold(f64::INFINITY, f64::min);
            if best.as_ref().map_or(true, |(s, _)| score > *s) {
                best = Some((score, e));
            }
        }
        let (score, e) = best.expect("candidate list is never empty");
        if score < 1e-3 {
            return Err(Obstruction::Rough(format!("no admissible pivot direction (score {score:e})")));
        }
        let f = rotation(&e, &e1);
        let logf = unitary_log(&f).map_err(|x| Obstruction::Rough(x.to_string()))?;
        let lower: Vec<CMatrix> = family
            .iter()
            .zip(&v)
            .map(|(w, vi)| {
                let y = &(&f * &rotation(vi, &e)) * w;
                let b = y.submatrix(1, 1, m - 1, m - 1);
                crate::linalg::polar_unitary(&b).unwrap_or(b)
            })
            .collect();
        // det(F R_v w) = det F · (1 + ᾱ)/(1 + α) · det w with Re(1 + α) ≥ 0
        let f_phase = f.det().map_err(|x| Obstruction::Rough(x.to_string()))?.arg();
        let lower_phase: Vec<f64> = det_phase
            .iter()
            .zip(&v)
            .map(|(p, vi)| p + f_phase - 2.0 * (ONE + vdot(&e, vi)).arg())
            .collect();
        let inner = NullHomotopy::build_lifted(&lower, shape, lower_phase)?;
        Ok(NullHomotopy { kind: Kind::Column { e, v, logf, inner: Box::new(inner) } })
    }

    fn continuous_logs(family: &[CMatrix], shape: Shape) -> Option<Vec<CMatrix>> {
        let logs: Vec<CMatrix> = family.iter().map(unitary_log).collect::<Result<_, _>>().ok()?;
        if shape == Shape::Point {
            return Some(logs);
        }
        for w in family {
            let ph = unitary_phases(w).ok()?;
            if ph.iter().any(|t| t.abs() > PI - 0.3) {
                return None;
            }
        }
        for (a, b) in shape.links() {
            if (&logs[a] - &logs[b]).max_abs() > 0.5 {
                return None;
            }
        }
        Some(logs)
    }

    /// `P(t)` for every member.
    pub(crate) fn eval(&self, t: f64) -> Vec<CMatrix> {
        match &self.kind {
            Kind::Log(logs) => {
                logs.iter().map(|l| expm_anti_hermitian(&l.scale_real(t)).expect("anti-Hermitian")).collect()
            }
            Kind::Phase(ph) => ph.iter().map(|p| CMatrix::from_vec(1, 1, vec![C64::from_polar(1.0, t * p)])).collect(),
            Kind::Column { e, v, logf, inner } => {
                let ft = expm_anti_hermitian(&logf.scale_real(t)).expect("anti-Hermitian").adjoint();
                let inner_t = inner.eval(t);
                v.iter()
                    .zip(inner_t)
                    .map(|(vi, b)| {
                        let x: Vec<C64> = vi.iter().zip(e).map(|(a, b)| b * (1.0 - t) + a * t).collect();
                        let n = vnorm(&x);
                        let x: Vec<C64> = x.into_iter().map(|z| z / n).collect();
                        let rt = rotation(&x, e).adjoint();
                        let bt = CMatrix::block_diag(&CMatrix::identity(1), &b);
                        &(&rt * &ft) * &bt
                    })
                    .collect()
            }
        }
    }
}
