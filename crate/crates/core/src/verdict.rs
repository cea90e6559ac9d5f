//! Classification harness: curvature flags, the predicted integrability
//! table, seeded residual sweeps and their reports.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::Vector4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gca::ComponentTag;
use crate::riemann::{curvature_operator, decompose, MetricSpec, PointGeometry, RiemannError, P4};
use crate::twistor::{
    constraints_gen_j_at, constraints_j1_at, semi_integrability_residual_at, ConstraintResiduals,
    FiberPoint, SignFamily, TwistorError,
};

pub const DEFAULT_THRESHOLD: f64 = 1e-4;
/// Above `OBSTRUCTED_FACTOR · tol` a residual counts as obstructed.
pub const OBSTRUCTED_FACTOR: f64 = 10.0;
/// Samples stay this fraction of the box width away from its faces.
const INTERIOR_FRACTION: f64 = 0.1;

#[derive(Debug, Error)]
pub enum VerdictError {
    #[error(transparent)]
    Riemann(#[from] RiemannError),
    #[error(transparent)]
    Twistor(#[from] TwistorError),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("non-finite residual {value} at sample ({base}, {fiber})")]
    NonFinite {
        value: f64,
        base: usize,
        fiber: usize,
    },
    #[error("malformed report: {0}")]
    Report(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, VerdictError>;

/// Which integrability question is asked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Structure {
    /// The generalized almost complex structure `𝕁`.
    #[serde(rename = "J")]
    GenJ,
    /// The almost complex structure `𝕁₁`.
    #[serde(rename = "J1")]
    J1,
    /// Semi-integrability of `𝕁₁` (mixed components only).
    #[serde(rename = "semi")]
    Semi,
}

impl Structure {
    pub const ALL: [Structure; 3] = [Structure::GenJ, Structure::J1, Structure::Semi];

    pub fn symbol(self) -> &'static str {
        match self {
            Structure::GenJ => "J",
            Structure::J1 => "J1",
            Structure::Semi => "semi",
        }
    }

    pub fn applies_to(self, tag: ComponentTag) -> bool {
        self != Structure::Semi || tag.is_mixed()
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Structure {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "J" => Ok(Structure::GenJ),
            "J1" => Ok(Structure::J1),
            "semi" => Ok(Structure::Semi),
            other => Err(format!(
                "unknown structure '{other}' (expected J, J1 or semi)"
            )),
        }
    }
}

/// Sup-norms of the curvature blocks over the sampled points, and the
/// vanishing flags they imply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureFlags {
    pub wplus_zero: bool,
    pub wminus_zero: bool,
    pub einstein: bool,
    pub scalar_zero: bool,
    pub flat: bool,
    pub wplus_sup: f64,
    pub wminus_sup: f64,
    pub b_sup: f64,
    pub scalar_sup: f64,
    pub threshold: f64,
}

impl CurvatureFlags {
    fn from_sups(wplus: f64, wminus: f64, b: f64, s: f64, threshold: f64) -> Self {
        let (wp, wm, e, sz) = (
            wplus < threshold,
            wminus < threshold,
            b < threshold,
            s < threshold,
        );
        Self {
            wplus_zero: wp,
            wminus_zero: wm,
            einstein: e,
            scalar_zero: sz,
            flat: wp && wm && e && sz,
            wplus_sup: wplus,
            wminus_sup: wminus,
            b_sup: b,
            scalar_sup: s,
            threshold,
        }
    }
}

/// Seeded base points in the interior of the metric's domain. The first
/// `n` points do not depend on how many are requested after them.
pub fn sample_base_points(m: &MetricSpec, n: usize, seed: u64) -> Vec<P4> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    (0..n)
        .map(|_| {
            let t = P4::from_fn(|_, _| rng.random::<f64>());
            m.interior_point(&t, INTERIOR_FRACTION)
        })
        .collect()
}

/// Seeded fibers over base point `k`, one independent stream per base point.
pub fn sample_fibers(seed: u64, k: usize, n: usize, tag: ComponentTag) -> Vec<FiberPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64 + 1);
    (0..n).map(|_| FiberPoint::random(&mut rng, tag)).collect()
}

pub fn classify_metric(
    m: &MetricSpec,
    n_points: usize,
    seed: u64,
    threshold: f64,
) -> Result<CurvatureFlags> {
    if n_points == 0 {
        return Err(VerdictError::Parameter(
            "n_points must be at least 1".into(),
        ));
    }
    if !(threshold > 0.0) {
        return Err(VerdictError::Parameter(format!(
            "threshold must be positive, got {threshold}"
        )));
    }
    let blocks = sample_base_points(m, n_points, seed)
        .par_iter()
        .map(|p| Ok(decompose(&curvature_operator(m, p)?)?))
        .collect::<std::result::Result<Vec<_>, RiemannError>>()?;
    let sup = |f: &dyn Fn(&crate::riemann::CurvatureBlocks) -> f64| {
        blocks.iter().map(f).fold(0.0, f64::max)
    };
    Ok(CurvatureFlags::from_sups(
        sup(&|b| b.w_plus_norm()),
        sup(&|b| b.w_minus_norm()),
        sup(&|b| b.b_norm()),
        sup(&|b| b.s.abs()),
        threshold,
    ))
}

/// Predicted integrability for every component and structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionTable {
    /// Indexed like `ComponentTag::ALL`.
    pub gen_j: [bool; 4],
    pub j1: [bool; 4],
    /// Only the mixed entries are meaningful; pure ones are `false`.
    pub semi: [bool; 4],
}

impl PredictionTable {
    pub fn get(&self, tag: ComponentTag, s: Structure) -> Option<bool> {
        let k = ComponentTag::ALL.iter().position(|t| *t == tag)?;
        match s {
            Structure::GenJ => Some(self.gen_j[k]),
            Structure::J1 => Some(self.j1[k]),
            Structure::Semi if tag.is_mixed() => Some(self.semi[k]),
            Structure::Semi => None,
        }
    }
}

/// Expected integrability from the curvature flags, transcribed literally. "Anti-self-dual" on `Z⁺⁺`
/// means the `Λ⁺` Weyl block vanishes, whichever way the chart is oriented.
pub fn predict(flags: &CurvatureFlags) -> PredictionTable {
    let f = flags;
    let ricci_flat = f.einstein && f.scalar_zero;
    let mut table = PredictionTable {
        gen_j: [false; 4],
        j1: [false; 4],
        semi: [false; 4],
    };
    for (k, tag) in ComponentTag::ALL.iter().enumerate() {
        let (gen_j, j1, semi) = match tag {
            ComponentTag::PlusPlus => (
                f.wplus_zero && ricci_flat,
                f.wplus_zero && f.scalar_zero,
                false,
            ),
            ComponentTag::MinusMinus => (
                f.wminus_zero && ricci_flat,
                f.wminus_zero && f.scalar_zero,
                false,
            ),
            ComponentTag::PlusMinus => (f.flat, f.wplus_zero && f.einstein, f.einstein),
            ComponentTag::MinusPlus => (f.flat, f.wminus_zero && f.einstein, f.einstein),
        };
        table.gen_j[k] = gen_j;
        table.j1[k] = j1;
        table.semi[k] = semi;
    }
    table
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Integrable,
    Obstructed,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Integrable => "integrable",
            Verdict::Obstructed => "obstructed",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckParams {
    pub component: ComponentTag,
    pub structure: Structure,
    pub base_samples: usize,
    pub fiber_samples: usize,
    pub tolerance: f64,
    pub seed: u64,
    pub timing: bool,
}

impl CheckParams {
    pub fn new(component: ComponentTag, structure: Structure) -> Self {
        Self {
            component,
            structure,
            base_samples: 16,
            fiber_samples: 32,
            tolerance: DEFAULT_THRESHOLD,
            seed: 0,
            timing: false,
        }
    }

    pub fn samples(mut self, base: usize, fiber: usize) -> Self {
        self.base_samples = base;
        self.fiber_samples = fiber;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub metric: String,
    pub structure: Structure,
    pub component: ComponentTag,
    pub seed: u64,
    pub base_samples: usize,
    pub fiber_samples: usize,
    pub tolerance: f64,
    pub max_residual: f64,
    /// `|r(h) − r(2h)|` at the worst sample, `h` the metric's FD step.
    pub noise_estimate: f64,
    pub worst_point: [f64; 4],
    pub worst_fiber: FiberPoint,
    pub worst_constraint: String,
    pub flags: CurvatureFlags,
    pub prediction: bool,
    pub verdict: Verdict,
    pub agreement: bool,
    pub wall_time: Option<f64>,
}

impl RunReport {
    /// 0 when the measurement is conclusive and agrees, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.agreement && self.verdict != Verdict::Inconclusive {
            0
        } else {
            2
        }
    }
}

/// Residual of one fiber sample and the label of its largest constraint.
fn sample_residual(
    g: &PointGeometry,
    f: &FiberPoint,
    s: Structure,
) -> std::result::Result<(f64, &'static str), TwistorError> {
    let worst = |r: ConstraintResiduals| {
        r.items.iter().fold((0.0, r.items[0].label), |(m, l), c| {
            if c.max_norm > m {
                (c.max_norm, c.label)
            } else {
                (m, l)
            }
        })
    };
    Ok(match s {
        Structure::GenJ => worst(constraints_gen_j_at(g, f, SignFamily::Plus)),
        Structure::J1 => worst(constraints_j1_at(g, f, SignFamily::Plus)),
        Structure::Semi => (semi_integrability_residual_at(g, f)?, "C2'"),
    })
}

#[derive(Debug, Clone, Copy)]
struct Worst {
    value: f64,
    base: usize,
    fiber: usize,
    label: &'static str,
}

pub fn check(m: &MetricSpec, params: &CheckParams) -> Result<RunReport> {
    let start = Instant::now();
    let CheckParams {
        component,
        structure,
        base_samples,
        fiber_samples,
        tolerance,
        seed,
        timing,
    } = *params;
    if base_samples == 0 || fiber_samples == 0 {
        return Err(VerdictError::Parameter(
            "sample counts must be positive".into(),
        ));
    }
    if !(tolerance > 0.0) {
        return Err(VerdictError::Parameter(format!(
            "tolerance must be positive, got {tolerance}"
        )));
    }
    if !structure.applies_to(component) {
        return Err(VerdictError::Parameter(format!(
            "semi-integrability is only defined on the mixed components, not {component}"
        )));
    }
    let points = sample_base_points(m, base_samples, seed);
    let per_point = points
        .par_iter()
        .enumerate()
        .map(|(k, p)| -> Result<Worst> {
            let g = PointGeometry::at(m, p)?;
            let mut w = Worst {
                value: -1.0,
                base: k,
                fiber: 0,
                label: "",
            };
            for (j, f) in sample_fibers(seed, k, fiber_samples, component)
                .iter()
                .enumerate()
            {
                let (value, label) = sample_residual(&g, f, structure)?;
                if !value.is_finite() {
                    return Err(VerdictError::NonFinite {
                        value,
                        base: k,
                        fiber: j,
                    });
                }
                if value > w.value {
                    w = Worst {
                        value,
                        base: k,
                        fiber: j,
                        label,
                    };
                }
            }
            Ok(w)
        })
        .collect::<Result<Vec<_>>>()?;
    let worst = per_point
        .into_iter()
        .reduce(|a, b| if b.value > a.value { b } else { a })
        .expect("at least one base point");

    let p = points[worst.base];
    let f = sample_fibers(seed, worst.base, worst.fiber + 1, component)[worst.fiber];
    let coarse = m.clone().with_step(2.0 * m.step());
    let (value_2h, _) = sample_residual(&PointGeometry::at(&coarse, &p)?, &f, structure)?;
    let noise_estimate = (worst.value - value_2h).abs();

    let flags = classify_metric(m, base_samples, seed, DEFAULT_THRESHOLD)?;
    let prediction = predict(&flags)
        .get(component, structure)
        .expect("structure applies");
    let verdict = if noise_estimate > tolerance {
        Verdict::Inconclusive
    } else if worst.value < tolerance {
        Verdict::Integrable
    } else if worst.value > OBSTRUCTED_FACTOR * tolerance {
        Verdict::Obstructed
    } else {
        Verdict::Inconclusive
    };
    Ok(RunReport {
        metric: m.name().to_string(),
        structure,
        component,
        seed,
        base_samples,
        fiber_samples,
        tolerance,
        max_residual: worst.value,
        noise_estimate,
        worst_point: p.into(),
        worst_fiber: f,
        worst_constraint: worst.label.to_string(),
        flags,
        prediction,
        verdict,
        agreement: (worst.value < tolerance) == prediction,
        wall_time: timing.then(|| start.elapsed().as_secs_f64()),
    })
}

/// 17 significant digits; non-finite values become `null`.
fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".into()
    }
}

fn nums(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| num(*x)).collect();
    format!("[{}]", parts.join(","))
}

fn string(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

/// One JSON object with a fixed key order, so equal reports print identically.
pub fn report_json(r: &RunReport) -> String {
    let fl = &r.flags;
    let flags = [
        ("wplus_zero", fl.wplus_zero.to_string()),
        ("wminus_zero", fl.wminus_zero.to_string()),
        ("einstein", fl.einstein.to_string()),
        ("scalar_zero", fl.scalar_zero.to_string()),
        ("flat", fl.flat.to_string()),
        ("wplus_sup", num(fl.wplus_sup)),
        ("wminus_sup", num(fl.wminus_sup)),
        ("b_sup", num(fl.b_sup)),
        ("scalar_sup", num(fl.scalar_sup)),
        ("threshold", num(fl.threshold)),
    ];
    let fiber = format!(
        "{{\"a\":{},\"b\":{},\"tag\":{}}}",
        nums(&r.worst_fiber.a),
        nums(&r.worst_fiber.b),
        string(r.worst_fiber.tag.symbol())
    );
    let fields = [
        ("metric", string(&r.metric)),
        ("structure", string(r.structure.symbol())),
        ("component", string(r.component.symbol())),
        ("seed", r.seed.to_string()),
        ("base_samples", r.base_samples.to_string()),
        ("fiber_samples", r.fiber_samples.to_string()),
        ("tolerance", num(r.tolerance)),
        ("max_residual", num(r.max_residual)),
        ("noise_estimate", num(r.noise_estimate)),
        ("worst_point", nums(&r.worst_point)),
        ("worst_fiber", fiber),
        ("worst_constraint", string(&r.worst_constraint)),
        ("flags", object(&flags)),
        ("prediction", r.prediction.to_string()),
        ("verdict", string(&r.verdict.to_string())),
        ("agreement", r.agreement.to_string()),
        ("wall_time", r.wall_time.map_or("null".into(), num)),
    ];
    object(&fields)
}

fn object(fields: &[(&str, String)]) -> String {
    let mut out = String::from("{");
    for (k, (key, value)) in fields.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        write!(out, "{}:{}", string(key), value).expect("writing to a String");
    }
    out.push('}');
    out
}

pub fn parse_report(json: &str) -> Result<RunReport> {
    Ok(serde_json::from_str(json)?)
}

/// Per-point curvature summary for the `curvature` verb.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointCurvature {
    pub point: P4,
    pub w_plus: f64,
    pub w_minus: f64,
    pub b: f64,
    pub s: f64,
    pub symmetry_residual: f64,
}

pub fn point_curvature(m: &MetricSpec, p: &P4) -> Result<PointCurvature> {
    let op = curvature_operator(m, p)?;
    let blocks = decompose(&op)?;
    Ok(PointCurvature {
        point: *p,
        w_plus: blocks.w_plus_norm(),
        w_minus: blocks.w_minus_norm(),
        b: blocks.b_norm(),
        s: blocks.s,
        symmetry_residual: op.symmetry_residual(),
    })
}

pub fn point_curvature_json(c: &PointCurvature) -> String {
    object(&[
        ("point", nums(c.point.as_slice())),
        ("w_plus_norm", num(c.w_plus)),
        ("w_minus_norm", num(c.w_minus)),
        ("b_norm", num(c.b)),
        ("scalar", num(c.s)),
        ("symmetry_residual", num(c.symmetry_residual)),
    ])
}

/// Parse comma-separated numbers, e.g. `0.1,0.2,0.3,0.4`.
pub fn parse_list<const N: usize>(s: &str) -> std::result::Result<[f64; N], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(format!(
            "expected {N} comma-separated numbers, got {}",
            parts.len()
        ));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p.parse().map_err(|_| format!("'{p}' is not a number"))?;
    }
    Ok(out)
}

pub fn as_point(x: [f64; 4]) -> P4 {
    Vector4::from(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riemann::metric_by_name;

    fn flags(wp: bool, wm: bool, e: bool, s: bool) -> CurvatureFlags {
        let v = |z: bool| if z { 0.0 } else { 1.0 };
        CurvatureFlags::from_sups(v(wp), v(wm), v(e), v(s), DEFAULT_THRESHOLD)
    }

    #[test]
    fn flat_predicts_everything() {
        let t = predict(&flags(true, true, true, true));
        for tag in ComponentTag::ALL {
            for s in Structure::ALL {
                if s.applies_to(tag) {
                    assert_eq!(t.get(tag, s), Some(true), "{tag} {s}");
                }
            }
        }
    }

    #[test]
    fn round_sphere_table() {
        let t = predict(&flags(true, true, true, false));
        for tag in ComponentTag::ALL {
            assert_eq!(t.get(tag, Structure::GenJ), Some(false));
            assert_eq!(t.get(tag, Structure::J1), Some(tag.is_mixed()));
        }
        assert_eq!(t.get(ComponentTag::PlusMinus, Structure::Semi), Some(true));
        assert_eq!(t.get(ComponentTag::PlusPlus, Structure::Semi), None);
    }

    #[test]
    fn half_flat_ricci_flat_table() {
        let t = predict(&flags(false, true, true, true));
        assert_eq!(t.gen_j, [false, true, false, false]);
        assert_eq!(t.j1, [false, true, false, true]);
    }

    #[test]
    fn fiber_streams_are_prefixes() {
        let a = sample_fibers(5, 3, 4, ComponentTag::PlusMinus);
        let b = sample_fibers(5, 3, 9, ComponentTag::PlusMinus);
        assert_eq!(a[..], b[..4]);
        assert_ne!(sample_fibers(5, 2, 4, ComponentTag::PlusMinus), a);
    }

    #[test]
    fn json_round_trip() {
        let m = metric_by_name("s4").unwrap();
        let mut r = check(
            &m,
            &CheckParams::new(ComponentTag::PlusPlus, Structure::GenJ).samples(2, 3),
        )
        .unwrap();
        r.wall_time = Some(0.25);
        let back = parse_report(&report_json(&r)).unwrap();
        assert_eq!(back, r);
        assert!(back.max_residual >= 0.0);
    }

    #[test]
    fn list_parsing() {
        assert_eq!(parse_list::<2>("1, -2.5").unwrap(), [1.0, -2.5]);
        assert!(parse_list::<2>("1").is_err());
        assert!(parse_list::<1>("x").is_err());
    }
}
