//! Fiber geometry of the generalized twistor space `Z(M)` over a Riemannian
//! 4-manifold, the integrability constraints of the generalized structure
//! `𝕁` and of the almost complex structure `𝕁₁`, and a slow fully numeric
//! Nijenhuis oracle on an 8-dimensional chart of `Z(M)`.
//!
//! A point of the fiber over `m` is a pair `(u₁, u₂)` of unit complex
//! structures, each in `Λ⁺` or `Λ⁻`; in the `PM` basis the structure is
//! `u = diag(u₁, u₂)`. Both spheres are parameterized by unit 3-vectors `a`,
//! `b` through `u₁ = a·(I,J,K)^±`, `u₂ = b·(I,J,K)^±`.
//!
//! The pointwise constraints use the bivectors
//!
//! ```text
//! X_ab(i,j) = θᵢ∧θⱼ − u_aθᵢ∧u_bθⱼ
//! Y_ab(i,j) = u_aθᵢ∧θⱼ ± θᵢ∧u_bθⱼ
//! C(c; a,b) = [u_c, R_c(X_ab) + u_c R_c(Y_ab)]
//! ```
//!
//! `X_ab` is not antisymmetric in `(i, j)` when `a ≠ b`, so every residual is
//! taken over all sixteen ordered index pairs.

use nalgebra::{Matrix2, SMatrix, SVector, Vector2, Vector3, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cartan::{Calculus, CalculusError, ChartBox, GenVec};
use crate::gca::{
    block_diag, wedge, BasisTag, BivectorBasis, ComponentTag, GcaError, GenStructure, Mat4, Mat8,
};
use crate::riemann::{
    christoffel, orthonormal_frame, FrameData, MetricSpec, PointGeometry, RiemannError, P4,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TwistorError {
    #[error(transparent)]
    Riemann(#[from] RiemannError),
    #[error(transparent)]
    Gca(#[from] GcaError),
    #[error(transparent)]
    Domain(#[from] CalculusError),
    #[error("invalid fiber point: {0}")]
    InvalidFiber(String),
    #[error("{0}")]
    Usage(String),
    #[error("fiber chart singular: {0}")]
    Chart(String),
}

pub type Result<T> = std::result::Result<T, TwistorError>;

/// Unit vectors in the two `S²` factors of the fiber.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberPoint {
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub tag: ComponentTag,
}

impl FiberPoint {
    pub fn new(a: Vector3<f64>, b: Vector3<f64>, tag: ComponentTag) -> Result<Self> {
        for (name, v) in [("a", a), ("b", b)] {
            if (v.norm() - 1.0).abs() > 1e-12 {
                return Err(TwistorError::InvalidFiber(format!(
                    "|{name}| = {} is not 1",
                    v.norm()
                )));
            }
        }
        Ok(Self {
            a: a.into(),
            b: b.into(),
            tag,
        })
    }

    /// Normalize the inputs first.
    pub fn normalized(a: Vector3<f64>, b: Vector3<f64>, tag: ComponentTag) -> Result<Self> {
        if a.norm() == 0.0 || b.norm() == 0.0 {
            return Err(TwistorError::InvalidFiber("zero direction".into()));
        }
        Self::new(a.normalize(), b.normalize(), tag)
    }

    /// Uniform on `S² × S²` via normalized Gaussian vectors.
    pub fn random(rng: &mut impl Rng, tag: ComponentTag) -> Self {
        let mut draw = || loop {
            let v = Vector3::<f64>::from_fn(|_, _| rng.sample(StandardNormal));
            let n = v.norm();
            if n > 1e-8 {
                return v / n;
            }
        };
        let a = draw();
        let b = draw();
        Self {
            a: a.into(),
            b: b.into(),
            tag,
        }
    }

    pub fn a(&self) -> Vector3<f64> {
        Vector3::from(self.a)
    }

    pub fn b(&self) -> Vector3<f64> {
        Vector3::from(self.b)
    }
}

/// `(u₁, u₂)` for a fiber point.
pub fn fiber_to_structures(f: &FiberPoint) -> (Mat4, Mat4) {
    let basis = BivectorBasis::standard();
    (
        basis.combine(f.tag.first(), &f.a()),
        basis.combine(f.tag.second(), &f.b()),
    )
}

/// `2 + type(diag(u₁, u₂))`: the vertical factor is a complex structure on a
/// 4-dimensional space and contributes 2.
pub fn type_of_gen_j(f: &FiberPoint) -> Result<u8> {
    let (u1, u2) = fiber_to_structures(f);
    Ok(2 + GenStructure::from_pm_blocks(&u1, &u2)?.type_of()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StructureKind {
    /// The generalized almost complex structure on `TZ ⊕ T*Z`.
    GenJ,
    /// The almost complex structure on `TZ`.
    AlmostJ1,
}

/// Sign in front of `θᵢ∧u_bθⱼ` in `Y_ab`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SignFamily {
    /// `+`, as derived in the horizontal Nijenhuis computation.
    Plus,
    /// `−`, as printed in the headline integrability statements.
    Minus,
}

impl SignFamily {
    fn value(self) -> f64 {
        match self {
            SignFamily::Plus => 1.0,
            SignFamily::Minus => -1.0,
        }
    }
}

/// `(c; a, b)` index shapes of `C1..C6`, 1-based as in the labels.
pub const GEN_J_SHAPES: [(&str, usize, usize, usize); 6] = [
    ("C1", 1, 1, 1),
    ("C2", 2, 1, 1),
    ("C3", 1, 2, 2),
    ("C4", 2, 2, 2),
    ("C5", 1, 1, 2),
    ("C6", 2, 1, 2),
];

pub const J1_SHAPES: [(&str, usize, usize, usize); 2] = [("C1'", 1, 1, 1), ("C2'", 2, 1, 1)];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintResidual {
    pub label: &'static str,
    /// Value at the ordered pair with the largest Frobenius norm.
    pub worst: Mat4,
    pub worst_pair: (usize, usize),
    /// Largest Frobenius norm over the sixteen ordered pairs.
    pub max_norm: f64,
    /// `sqrt(Σ_{i,j} ‖C(i,j)‖²)`; independent of the choice of frame.
    pub tensor_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintResiduals {
    pub kind: StructureKind,
    pub sign: SignFamily,
    pub items: Vec<ConstraintResidual>,
}

impl ConstraintResiduals {
    pub fn max_norm(&self) -> f64 {
        self.items.iter().fold(0.0, |m, c| m.max(c.max_norm))
    }

    pub fn get(&self, label: &str) -> Option<&ConstraintResidual> {
        self.items.iter().find(|c| c.label == label)
    }
}

/// The frame vector `θᵢ` in frame components.
fn unit(i: usize) -> Vector4<f64> {
    Vector4::ith(i, 1.0)
}

fn pick<'a>(u1: &'a Mat4, u2: &'a Mat4, k: usize) -> &'a Mat4 {
    if k == 1 {
        u1
    } else {
        u2
    }
}

/// `(X_ab(i,j), Y_ab(i,j))` for explicit `u_a`, `u_b`.
pub fn constraint_bivectors(
    ua: &Mat4,
    ub: &Mat4,
    i: usize,
    j: usize,
    sign: SignFamily,
) -> (Mat4, Mat4) {
    let (ti, tj) = (unit(i), unit(j));
    let (uati, ubtj) = (ua * ti, ub * tj);
    let x = wedge(&ti, &tj) - wedge(&uati, &ubtj);
    let y = wedge(&uati, &tj) + wedge(&ti, &ubtj) * sign.value();
    (x, y)
}

/// `[u_c, R(X) + u_c R(Y)]`.
fn commutator_form(uc: &Mat4, rx: &Mat4, ry: &Mat4) -> Mat4 {
    let inner = rx + uc * ry;
    uc * inner - inner * uc
}

/// `C(c; a, b)` at one ordered pair, with `R_c` supplied as a linear map.
pub fn constraint_value(
    r: &impl Fn(&Mat4) -> Mat4,
    u1: &Mat4,
    u2: &Mat4,
    (c, a, b): (usize, usize, usize),
    i: usize,
    j: usize,
    sign: SignFamily,
) -> Mat4 {
    let (x, y) = constraint_bivectors(pick(u1, u2, a), pick(u1, u2, b), i, j, sign);
    commutator_form(pick(u1, u2, c), &r(&x), &r(&y))
}

fn residual_over_pairs(
    label: &'static str,
    value: impl Fn(usize, usize) -> Mat4,
) -> ConstraintResidual {
    let mut best = ConstraintResidual {
        label,
        worst: Mat4::zeros(),
        worst_pair: (0, 0),
        max_norm: 0.0,
        tensor_norm: 0.0,
    };
    let mut sum = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            let v = value(i, j);
            let n = v.norm();
            sum += n * n;
            if n > best.max_norm {
                best.max_norm = n;
                best.worst = v;
                best.worst_pair = (i, j);
            }
        }
    }
    best.tensor_norm = sum.sqrt();
    best
}

fn constraints_with(
    r: &impl Fn(&Mat4) -> Mat4,
    f: &FiberPoint,
    shapes: &[(&'static str, usize, usize, usize)],
    kind: StructureKind,
    sign: SignFamily,
) -> ConstraintResiduals {
    let (u1, u2) = fiber_to_structures(f);
    let items = shapes
        .iter()
        .map(|&(label, c, a, b)| {
            residual_over_pairs(label, |i, j| {
                constraint_value(r, &u1, &u2, (c, a, b), i, j, sign)
            })
        })
        .collect();
    ConstraintResiduals { kind, sign, items }
}

/// `C1..C6` at a precomputed base point.
pub fn constraints_gen_j_at(
    g: &PointGeometry,
    f: &FiberPoint,
    sign: SignFamily,
) -> ConstraintResiduals {
    constraints_with(
        &|w: &Mat4| g.apply(w),
        f,
        &GEN_J_SHAPES,
        StructureKind::GenJ,
        sign,
    )
}

/// `C1'`, `C2'` at a precomputed base point.
pub fn constraints_j1_at(
    g: &PointGeometry,
    f: &FiberPoint,
    sign: SignFamily,
) -> ConstraintResiduals {
    constraints_with(
        &|w: &Mat4| g.apply(w),
        f,
        &J1_SHAPES,
        StructureKind::AlmostJ1,
        sign,
    )
}

/// `C1..C6` with the derived `+` sign.
pub fn constraints_gen_j(m: &MetricSpec, p: &P4, f: &FiberPoint) -> Result<ConstraintResiduals> {
    Ok(constraints_gen_j_at(
        &PointGeometry::at(m, p)?,
        f,
        SignFamily::Plus,
    ))
}

/// `C1'`, `C2'` with the derived `+` sign.
pub fn constraints_j1(m: &MetricSpec, p: &P4, f: &FiberPoint) -> Result<ConstraintResiduals> {
    Ok(constraints_j1_at(
        &PointGeometry::at(m, p)?,
        f,
        SignFamily::Plus,
    ))
}

/// The `C2'` projection only; defined on the mixed components.
pub fn semi_integrability_residual_at(g: &PointGeometry, f: &FiberPoint) -> Result<f64> {
    if !f.tag.is_mixed() {
        return Err(TwistorError::Usage(format!(
            "semi-integrability is only defined on the mixed components, not {}",
            f.tag
        )));
    }
    let r = constraints_j1_at(g, f, SignFamily::Plus);
    Ok(r.get("C2'").map_or(0.0, |c| c.max_norm))
}

pub fn semi_integrability_residual(m: &MetricSpec, p: &P4, f: &FiberPoint) -> Result<f64> {
    semi_integrability_residual_at(&PointGeometry::at(m, p)?, f)
}

/// `R̂_g(X_ab) + u R̂_g(Y_ab)` with `u = diag(u₁,u₂)`, `R_g = diag(R_c,R_c)`
/// and `R̂_g = [u, R_g]`, as an 8×8 matrix in the `PM` basis.
pub fn theorem2_value(
    g: &PointGeometry,
    f: &FiberPoint,
    i: usize,
    j: usize,
    (a, b): (usize, usize),
    sign: SignFamily,
) -> Mat8 {
    theorem2_with(&|w: &Mat4| g.apply(w), f, i, j, (a, b), sign)
}

/// [`theorem2_value`] with an arbitrary linear `R_c`.
pub fn theorem2_with(
    r: &impl Fn(&Mat4) -> Mat4,
    f: &FiberPoint,
    i: usize,
    j: usize,
    (a, b): (usize, usize),
    sign: SignFamily,
) -> Mat8 {
    let (u1, u2) = fiber_to_structures(f);
    let u = block_diag(&u1, &u2);
    let (x, y) = constraint_bivectors(pick(&u1, &u2, a), pick(&u1, &u2, b), i, j, sign);
    let rg = |w: &Mat4| {
        let rw = r(w);
        block_diag(&rw, &rw)
    };
    let hat = |w: &Mat4| {
        let m = rg(w);
        u * m - m * u
    };
    hat(&x) + u * hat(&y)
}

pub fn theorem2_residual(
    m: &MetricSpec,
    p: &P4,
    f: &FiberPoint,
    i: usize,
    j: usize,
    which: (usize, usize),
) -> Result<Mat8> {
    Ok(theorem2_value(
        &PointGeometry::at(m, p)?,
        f,
        i,
        j,
        which,
        SignFamily::Plus,
    ))
}

/// Residuals of the `V*`-direction expressions, where the second structure
/// is replaced by `P = (u₁+u₂)/2`: for `a ∈ {1,2}` and `c ∈ {1,2}`,
/// `[u_c, R(θᵢ∧θⱼ − u_aθᵢ∧Pθⱼ) + u_c R(u_aθᵢ∧θⱼ + θᵢ∧Pθⱼ)]`.
/// Each is the average of two `C(c; a, ·)` values, so it can only be
/// nonzero where some `C` is.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualDirectionCheck {
    /// Largest Frobenius norm over `(c, a)` and ordered pairs.
    pub max_norm: f64,
}

pub fn dual_direction_check(g: &PointGeometry, f: &FiberPoint) -> DualDirectionCheck {
    let (u1, u2) = fiber_to_structures(f);
    let p = (u1 + u2) * 0.5;
    let mut max_norm: f64 = 0.0;
    for a in [1, 2] {
        for c in [1, 2] {
            for i in 0..4 {
                for j in 0..4 {
                    let (x, y) =
                        constraint_bivectors(pick(&u1, &u2, a), &p, i, j, SignFamily::Plus);
                    let v = commutator_form(pick(&u1, &u2, c), &g.apply(&x), &g.apply(&y));
                    max_norm = max_norm.max(v.norm());
                }
            }
        }
    }
    DualDirectionCheck { max_norm }
}

/// A point of `Z(M)` in the chart trivialized by the orthonormal frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwistorPoint {
    pub p: P4,
    pub f: FiberPoint,
    pub frame: FrameData,
}

impl TwistorPoint {
    pub fn new(m: &MetricSpec, p: P4, f: FiberPoint) -> Result<Self> {
        Ok(Self {
            p,
            f,
            frame: orthonormal_frame(m, &p)?,
        })
    }
}

// ---------------------------------------------------------------------------
// Numeric oracle
// ---------------------------------------------------------------------------

/// Stereographic chart on `S²`, named after its projection center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FiberChart {
    /// Projection from `(0,0,1)`; `s = (a₁,a₂)/(1−a₃)`.
    North,
    /// Projection from `(0,0,−1)`; `s = (a₁,a₂)/(1+a₃)`.
    South,
}

/// Points closer than this to a chart's projection center are rejected.
pub const POLE_MARGIN: f64 = 0.1;

impl FiberChart {
    /// The chart whose center lies in the opposite hemisphere.
    pub fn auto(a: &Vector3<f64>) -> Self {
        if a[2] <= 0.0 {
            FiberChart::North
        } else {
            FiberChart::South
        }
    }

    fn sign(self) -> f64 {
        match self {
            FiberChart::North => 1.0,
            FiberChart::South => -1.0,
        }
    }

    pub fn pole(self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, self.sign())
    }

    pub fn to_sphere(self, s: &Vector2<f64>) -> Vector3<f64> {
        let n2 = s.norm_squared();
        let d = 1.0 + n2;
        Vector3::new(2.0 * s[0] / d, 2.0 * s[1] / d, self.sign() * (n2 - 1.0) / d)
    }

    pub fn from_sphere(self, a: &Vector3<f64>) -> Vector2<f64> {
        let den = 1.0 - self.sign() * a[2];
        Vector2::new(a[0] / den, a[1] / den)
    }

    /// Differential of [`to_sphere`](Self::to_sphere), 3×2.
    pub fn d_to_sphere(self, s: &Vector2<f64>) -> SMatrix<f64, 3, 2> {
        let d = 1.0 + s.norm_squared();
        let mut m = SMatrix::<f64, 3, 2>::zeros();
        for l in 0..2 {
            for k in 0..2 {
                let delta = if k == l { 1.0 } else { 0.0 };
                m[(k, l)] = 2.0 * delta / d - 4.0 * s[k] * s[l] / (d * d);
            }
            m[(2, l)] = self.sign() * 4.0 * s[l] / (d * d);
        }
        m
    }

    /// Differential of [`from_sphere`](Self::from_sphere) as a map on ℝ³, 2×3.
    pub fn d_from_sphere(self, a: &Vector3<f64>) -> SMatrix<f64, 2, 3> {
        let sg = self.sign();
        let den = 1.0 - sg * a[2];
        let mut m = SMatrix::<f64, 2, 3>::zeros();
        m[(0, 0)] = 1.0 / den;
        m[(1, 1)] = 1.0 / den;
        m[(0, 2)] = sg * a[0] / (den * den);
        m[(1, 2)] = sg * a[1] / (den * den);
        m
    }
}

/// Basic fields on the twistor chart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BasicField {
    /// `θ̂ᵢ + θ̂ᵢ*`.
    HPlus(usize),
    /// `θ̂ᵢ − θ̂ᵢ*`.
    HMinus(usize),
    /// `θ̂ᵢ`.
    Horizontal(usize),
    /// `θ̂ᵢ*`.
    HorizontalDual(usize),
    /// `Â = [u, A]` for `A = diag(A₁, A₂)` constant in the frame.
    Vertical(Mat4, Mat4),
    /// The `k`-th element of the vertical coframe (annihilates `H`).
    VerticalDual(usize),
}

pub type Vec16 = SVector<f64, 16>;
type Mat16 = SMatrix<f64, 16, 16>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    /// Step of the outer differentiation on the twistor chart.
    pub step: f64,
    /// Force a stereographic chart on each sphere instead of choosing one.
    pub charts: Option<(FiberChart, FiberChart)>,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            step: 1e-3,
            charts: None,
        }
    }
}

/// Chart `(x, s₁, s₂) ∈ ℝ⁴ × ℝ² × ℝ²` of `Z(M)` around a twistor point.
pub struct TwistorChart<'m> {
    metric: &'m MetricSpec,
    tag: ComponentTag,
    charts: (FiberChart, FiberChart),
    basis: BivectorBasis,
}

/// Frame data of the chart at one point: `F = [[e, 0], [K, I]]` has the
/// horizontal lifts `θ̂ᵢ` as its first four columns and the coordinate
/// fiber vectors as the rest.
struct Adapted {
    f: Mat8,
    finv: Mat8,
    u1: Mat4,
    u2: Mat4,
    /// Natural complex structure on the fiber in fiber coordinates.
    jv: Mat4,
    /// `δu ↦ δs` per sphere (2×3 each) and `δs ↦ δa` (3×2 each).
    ds: [SMatrix<f64, 2, 3>; 2],
}

impl<'m> TwistorChart<'m> {
    pub fn new(metric: &'m MetricSpec, tp: &TwistorPoint, opts: &OracleOptions) -> Result<Self> {
        let (a, b) = (tp.f.a(), tp.f.b());
        let charts = match opts.charts {
            Some(c) => c,
            None => (FiberChart::auto(&a), FiberChart::auto(&b)),
        };
        for (v, c) in [(a, charts.0), (b, charts.1)] {
            if (v - c.pole()).norm() < POLE_MARGIN {
                return Err(TwistorError::Chart(format!(
                    "fiber direction {v:?} within {POLE_MARGIN} of the {c:?} projection center"
                )));
            }
        }
        Ok(Self {
            metric,
            tag: tp.f.tag,
            charts,
            basis: BivectorBasis::standard(),
        })
    }

    /// Chart coordinates of a twistor point.
    pub fn coordinates(&self, tp: &TwistorPoint) -> SVector<f64, 8> {
        let s1 = self.charts.0.from_sphere(&tp.f.a());
        let s2 = self.charts.1.from_sphere(&tp.f.b());
        SVector::<f64, 8>::from_fn(|k, _| match k {
            0..=3 => tp.p[k],
            4 | 5 => s1[k - 4],
            _ => s2[k - 6],
        })
    }

    fn split(q: &SVector<f64, 8>) -> (P4, Vector2<f64>, Vector2<f64>) {
        (
            P4::new(q[0], q[1], q[2], q[3]),
            Vector2::new(q[4], q[5]),
            Vector2::new(q[6], q[7]),
        )
    }

    /// Fiber-coordinate image of the vertical vector `([u₁, A₁], [u₂, A₂])`.
    fn vertical_coords(&self, ad: &Adapted, a1: &Mat4, a2: &Mat4) -> Vector4<f64> {
        let d1 = self
            .basis
            .project(self.tag.first(), &(ad.u1 * a1 - a1 * ad.u1));
        let d2 = self
            .basis
            .project(self.tag.second(), &(ad.u2 * a2 - a2 * ad.u2));
        let s1 = ad.ds[0] * d1;
        let s2 = ad.ds[1] * d2;
        Vector4::new(s1[0], s1[1], s2[0], s2[1])
    }

    fn adapted(&self, q: &SVector<f64, 8>) -> Result<Adapted> {
        let (x, s1, s2) = Self::split(q);
        let frame = orthonormal_frame(self.metric, &x)?;
        let conn = christoffel(self.metric, &x)?;
        let (c1, c2) = self.charts;
        let (a, b) = (c1.to_sphere(&s1), c2.to_sphere(&s2));
        let (o1, o2) = (self.tag.first(), self.tag.second());
        let u1 = self.basis.combine(o1, &a);
        let u2 = self.basis.combine(o2, &b);
        let ds = [c1.d_from_sphere(&a), c2.d_from_sphere(&b)];
        let dsig = [c1.d_to_sphere(&s1), c2.d_to_sphere(&s2)];
        // J_V: δa ↦ proj(u·δa), pulled back to the fiber coordinates.
        let mut jv = Mat4::zeros();
        for (k, (u, o)) in [(u1, o1), (u2, o2)].into_iter().enumerate() {
            let mut j3 = nalgebra::Matrix3::<f64>::zeros();
            for c in 0..3 {
                let img = self
                    .basis
                    .project(o, &(u * self.basis.combine(o, &Vector3::ith(c, 1.0))));
                j3.set_column(c, &img);
            }
            let block: Matrix2<f64> = ds[k] * j3 * dsig[k];
            jv.fixed_view_mut::<2, 2>(2 * k, 2 * k).copy_from(&block);
        }
        let mut ad = Adapted {
            f: Mat8::identity(),
            finv: Mat8::identity(),
            u1,
            u2,
            jv,
            ds,
        };
        let mut f = Mat8::zeros();
        f.fixed_view_mut::<4, 4>(0, 0).copy_from(&frame.e);
        f.fixed_view_mut::<4, 4>(4, 4).copy_from(&Mat4::identity());
        for i in 0..4 {
            let up = conn.upsilon[i];
            let k = self.vertical_coords(&ad, &up, &up);
            f.fixed_view_mut::<4, 1>(4, i).copy_from(&k);
        }
        let mut finv = Mat8::zeros();
        finv.fixed_view_mut::<4, 4>(0, 0).copy_from(&frame.einv);
        finv.fixed_view_mut::<4, 4>(4, 4)
            .copy_from(&Mat4::identity());
        let kblock: Mat4 = f.fixed_view::<4, 4>(4, 0).into();
        finv.fixed_view_mut::<4, 4>(4, 0)
            .copy_from(&(-kblock * frame.einv));
        ad.f = f;
        ad.finv = finv;
        Ok(ad)
    }

    /// `𝕁` in the adapted basis `(H, V, H*, V*)`.
    fn gen_j_adapted(&self, ad: &Adapted) -> Result<Mat16> {
        let tt = GenStructure::from_pm_blocks(&ad.u1, &ad.u2)?.change_basis(BasisTag::TT);
        let [p, q, r, s] = tt.tt_blocks();
        let mut j = Mat16::zeros();
        j.fixed_view_mut::<4, 4>(0, 0).copy_from(&p);
        j.fixed_view_mut::<4, 4>(0, 8).copy_from(&q);
        j.fixed_view_mut::<4, 4>(8, 0).copy_from(&r);
        j.fixed_view_mut::<4, 4>(8, 8).copy_from(&s);
        j.fixed_view_mut::<4, 4>(4, 4).copy_from(&ad.jv);
        j.fixed_view_mut::<4, 4>(12, 12)
            .copy_from(&(-ad.jv.transpose()));
        Ok(j)
    }

    fn to_coords(ad: &Adapted, v: &Vec16) -> GenVec<8> {
        let x = ad.f * v.fixed_rows::<8>(0);
        let xi = ad.finv.transpose() * v.fixed_rows::<8>(8);
        GenVec::new(x, xi)
    }

    fn to_adapted(ad: &Adapted, g: &GenVec<8>) -> Vec16 {
        let x = ad.finv * g.x;
        let xi = ad.f.transpose() * g.xi;
        Vec16::from_fn(|k, _| if k < 8 { x[k] } else { xi[k - 8] })
    }

    /// `𝕁` applied to a coordinate generalized vector at `q`.
    pub fn apply_gen_j(&self, q: &SVector<f64, 8>, v: &GenVec<8>) -> Result<GenVec<8>> {
        let ad = self.adapted(q)?;
        let j = self.gen_j_adapted(&ad)?;
        Ok(Self::to_coords(&ad, &(j * Self::to_adapted(&ad, v))))
    }

    /// `𝕁₁ = F·diag(u₁, J_V)·F⁻¹` applied to a coordinate vector at `q`.
    pub fn apply_j1(&self, q: &SVector<f64, 8>, v: &SVector<f64, 8>) -> Result<SVector<f64, 8>> {
        let ad = self.adapted(q)?;
        let mut j = Mat8::zeros();
        j.fixed_view_mut::<4, 4>(0, 0).copy_from(&ad.u1);
        j.fixed_view_mut::<4, 4>(4, 4).copy_from(&ad.jv);
        Ok(ad.f * j * ad.finv * v)
    }

    /// Adapted coefficients of a basic field at `q`.
    fn field_adapted(&self, ad: &Adapted, field: &BasicField) -> Vec16 {
        let mut v = Vec16::zeros();
        match *field {
            BasicField::HPlus(i) => {
                v[i] = 1.0;
                v[8 + i] = 1.0;
            }
            BasicField::HMinus(i) => {
                v[i] = 1.0;
                v[8 + i] = -1.0;
            }
            BasicField::Horizontal(i) => v[i] = 1.0,
            BasicField::HorizontalDual(i) => v[8 + i] = 1.0,
            BasicField::Vertical(a1, a2) => {
                let s = self.vertical_coords(ad, &a1, &a2);
                v.fixed_rows_mut::<4>(4).copy_from(&s);
            }
            BasicField::VerticalDual(k) => v[12 + k] = 1.0,
        }
        v
    }

    fn field(&self, q: &SVector<f64, 8>, field: &BasicField) -> Result<GenVec<8>> {
        let ad = self.adapted(q)?;
        Ok(Self::to_coords(&ad, &self.field_adapted(&ad, field)))
    }

    /// Express a coordinate generalized vector at `q` in the adapted basis.
    pub fn adapted_components(&self, q: &SVector<f64, 8>, v: &GenVec<8>) -> Result<Vec16> {
        Ok(Self::to_adapted(&self.adapted(q)?, v))
    }

    /// Fiber-coordinate components of the vertical vector `(δu₁, δu₂)` at `q`.
    pub fn vertical_from_structures(
        &self,
        q: &SVector<f64, 8>,
        du1: &Mat4,
        du2: &Mat4,
    ) -> Result<Vector4<f64>> {
        let ad = self.adapted(q)?;
        let d1 = ad.ds[0] * self.basis.project(self.tag.first(), du1);
        let d2 = ad.ds[1] * self.basis.project(self.tag.second(), du2);
        Ok(Vector4::new(d1[0], d1[1], d2[0], d2[1]))
    }

    /// `J_V` in fiber coordinates at `q`.
    pub fn vertical_complex_structure(&self, q: &SVector<f64, 8>) -> Result<Mat4> {
        Ok(self.adapted(q)?.jv)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleResult {
    /// The Nijenhuis value in adapted coefficients `(H, V, H*, V*)`; for
    /// `𝕁₁` only the first eight entries are used.
    pub adapted: Vec16,
    /// Largest change between steps `h` and `2h`.
    pub noise: f64,
}

/// Numeric Nijenhuis tensor of `𝕁` (Courant brackets) or `𝕁₁` (Lie
/// brackets) on two basic fields, built entirely from finite differences on
/// the twistor chart.
pub fn nijenhuis_numeric(
    m: &MetricSpec,
    tp: &TwistorPoint,
    pair: (BasicField, BasicField),
    kind: StructureKind,
    opts: &OracleOptions,
) -> Result<OracleResult> {
    let chart = TwistorChart::new(m, tp, opts)?;
    let q0 = chart.coordinates(tp);
    // The base part of every stencil point must leave room for the inner
    // differentiation of the metric.
    let inner = 2.0 * m.step();
    let dom = m.domain();
    let lo = std::array::from_fn(|k| {
        if k < 4 {
            dom.lo[k] + inner
        } else {
            f64::NEG_INFINITY
        }
    });
    let hi = std::array::from_fn(|k| {
        if k < 4 {
            dom.hi[k] - inner
        } else {
            f64::INFINITY
        }
    });
    let eval = |h: f64| -> Result<Vec16> {
        let calc = Calculus::<8> {
            h,
            domain: Some(ChartBox::new(lo, hi)),
        };
        let err = std::cell::RefCell::new(None);
        let record = |e: TwistorError| {
            err.borrow_mut().get_or_insert(e);
        };
        let out = match kind {
            StructureKind::GenJ => {
                let fy = |q: &SVector<f64, 8>| {
                    chart.field(q, &pair.0).unwrap_or_else(|e| {
                        record(e);
                        GenVec::zeros()
                    })
                };
                let fz = |q: &SVector<f64, 8>| {
                    chart.field(q, &pair.1).unwrap_or_else(|e| {
                        record(e);
                        GenVec::zeros()
                    })
                };
                let j = |q: &SVector<f64, 8>, v: &GenVec<8>| {
                    chart.apply_gen_j(q, v).unwrap_or_else(|e| {
                        record(e);
                        GenVec::zeros()
                    })
                };
                let n = calc.nijenhuis(j, fy, fz, &q0)?;
                chart.adapted_components(&q0, &n)?
            }
            StructureKind::AlmostJ1 => {
                let fy = |q: &SVector<f64, 8>| {
                    chart.field(q, &pair.0).map(|g| g.x).unwrap_or_else(|e| {
                        record(e);
                        SVector::zeros()
                    })
                };
                let fz = |q: &SVector<f64, 8>| {
                    chart.field(q, &pair.1).map(|g| g.x).unwrap_or_else(|e| {
                        record(e);
                        SVector::zeros()
                    })
                };
                let j = |q: &SVector<f64, 8>, v: &SVector<f64, 8>| {
                    chart.apply_j1(q, v).unwrap_or_else(|e| {
                        record(e);
                        SVector::zeros()
                    })
                };
                let n = calc.almost_complex_nijenhuis(j, fy, fz, &q0)?;
                chart.adapted_components(&q0, &GenVec::vector(n))?
            }
        };
        if let Some(e) = err.into_inner() {
            return Err(e);
        }
        Ok(out)
    };
    let fine = eval(opts.step)?;
    let coarse = eval(2.0 * opts.step)?;
    Ok(OracleResult {
        adapted: fine,
        noise: (fine - coarse).amax(),
    })
}

/// Closed form for horizontal pairs: the vertical vector
/// `(δu₁, δu₂) = ([u₁, R(X)] + σ·u₁[u₁, R(Y)], [u₂, R(X)] + σ·u₂[u₂, R(Y)])`
/// with `X, Y` built from `(u_a, u_b)` and the requested sign family, in
/// adapted coefficients. `overall` multiplies the result.
pub fn horizontal_closed_form(
    m: &MetricSpec,
    tp: &TwistorPoint,
    i: usize,
    j: usize,
    (a, b): (usize, usize),
    sign: SignFamily,
    opts: &OracleOptions,
) -> Result<Vec16> {
    let g = PointGeometry::at(m, &tp.p)?;
    let (u1, u2) = fiber_to_structures(&tp.f);
    let (x, y) = constraint_bivectors(pick(&u1, &u2, a), pick(&u1, &u2, b), i, j, sign);
    let (rx, ry) = (g.apply(&x), g.apply(&y));
    let du1 = commutator_form(&u1, &rx, &ry);
    let du2 = commutator_form(&u2, &rx, &ry);
    let chart = TwistorChart::new(m, tp, opts)?;
    let q0 = chart.coordinates(tp);
    let s = chart.vertical_from_structures(&q0, &du1, &du2)?;
    let mut v = Vec16::zeros();
    v.fixed_rows_mut::<4>(4).copy_from(&s);
    Ok(v)
}

/// Closed form of `Nij(θ̂ᵢ ± θ̂ᵢ*, B̂*)` for `B̂*` the `k`-th vertical coframe
/// element: the horizontal 1-form
/// `θ̂ⱼ ↦ −B̂*([u,R(X')] + u[u,R(Y')])` with `X' = θᵢ∧θⱼ − u_aθᵢ∧Pθⱼ`,
/// `Y' = u_aθᵢ∧θⱼ + θᵢ∧Pθⱼ`, `P = (u₁+u₂)/2`, and `a = 1` for `+`, `2` for `−`.
/// Only the `H*` entries (8..12) are produced: the full tensor also carries
/// an `H` vector part, which this formula does not describe.
pub fn dual_closed_form(
    m: &MetricSpec,
    tp: &TwistorPoint,
    i: usize,
    a: usize,
    k: usize,
    opts: &OracleOptions,
) -> Result<Vec16> {
    let g = PointGeometry::at(m, &tp.p)?;
    let (u1, u2) = fiber_to_structures(&tp.f);
    let p = (u1 + u2) * 0.5;
    let chart = TwistorChart::new(m, tp, opts)?;
    let q0 = chart.coordinates(tp);
    let mut v = Vec16::zeros();
    for j in 0..4 {
        let (x, y) = constraint_bivectors(pick(&u1, &u2, a), &p, i, j, SignFamily::Plus);
        let (rx, ry) = (g.apply(&x), g.apply(&y));
        let du1 = commutator_form(&u1, &rx, &ry);
        let du2 = commutator_form(&u2, &rx, &ry);
        let s = chart.vertical_from_structures(&q0, &du1, &du2)?;
        v[8 + j] = -s[k];
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gca::{orientation_of, Orientation};
    use crate::riemann::metric_by_name;

    #[test]
    fn basis_vector_gives_i_plus() {
        let f = FiberPoint::new(Vector3::x(), Vector3::y(), ComponentTag::PlusPlus).unwrap();
        let (u1, _) = fiber_to_structures(&f);
        assert_eq!(u1, BivectorBasis::standard().plus[0]);
    }

    #[test]
    fn rejects_non_unit() {
        assert!(FiberPoint::new(
            Vector3::new(1.0, 1.0, 0.0),
            Vector3::x(),
            ComponentTag::PlusPlus
        )
        .is_err());
    }

    #[test]
    fn type_cases() {
        let t = |a: Vector3<f64>, b: Vector3<f64>, tag| {
            type_of_gen_j(&FiberPoint::normalized(a, b, tag).unwrap()).unwrap()
        };
        assert_eq!(t(Vector3::x(), Vector3::x(), ComponentTag::PlusPlus), 4);
        assert_eq!(t(Vector3::x(), Vector3::y(), ComponentTag::PlusPlus), 2);
        assert_eq!(t(Vector3::x(), -Vector3::x(), ComponentTag::PlusPlus), 2);
        assert_eq!(t(Vector3::x(), Vector3::x(), ComponentTag::PlusMinus), 3);
    }

    #[test]
    fn flat_constraints_vanish() {
        let m = metric_by_name("flat").unwrap();
        let f = FiberPoint::normalized(
            Vector3::new(0.3, -0.4, 0.8),
            Vector3::new(0.1, 0.9, -0.2),
            ComponentTag::PlusMinus,
        )
        .unwrap();
        let r = constraints_gen_j(&m, &P4::zeros(), &f).unwrap();
        assert!(r.max_norm() < 1e-9);
    }

    #[test]
    fn theorem2_blocks_match_constraints() {
        let m = metric_by_name("fubini-study").unwrap();
        let g = PointGeometry::at(&m, &P4::new(0.1, 0.2, -0.3, 0.05)).unwrap();
        let f = FiberPoint::normalized(
            Vector3::new(0.3, -0.4, 0.8),
            Vector3::new(0.1, 0.9, -0.2),
            ComponentTag::MinusPlus,
        )
        .unwrap();
        let (u1, u2) = fiber_to_structures(&f);
        let r = |w: &Mat4| g.apply(w);
        for (a, b) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
            for i in 0..4 {
                for j in 0..4 {
                    let t = theorem2_value(&g, &f, i, j, (a, b), SignFamily::Plus);
                    let c1 = constraint_value(&r, &u1, &u2, (1, a, b), i, j, SignFamily::Plus);
                    let c2 = constraint_value(&r, &u1, &u2, (2, a, b), i, j, SignFamily::Plus);
                    assert!((t - block_diag(&c1, &c2)).amax() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn structures_have_requested_orientations() {
        let f = FiberPoint::normalized(
            Vector3::new(1.0, 2.0, 3.0),
            Vector3::new(-1.0, 0.5, 0.2),
            ComponentTag::MinusPlus,
        )
        .unwrap();
        let (u1, u2) = fiber_to_structures(&f);
        let basis = BivectorBasis::standard();
        assert_eq!(orientation_of(&basis, &u1).unwrap(), Orientation::Minus);
        assert_eq!(orientation_of(&basis, &u2).unwrap(), Orientation::Plus);
    }

    #[test]
    fn stereographic_round_trip() {
        for chart in [FiberChart::North, FiberChart::South] {
            let s = Vector2::new(0.3, -0.7);
            let a = chart.to_sphere(&s);
            assert!((a.norm() - 1.0).abs() < 1e-14);
            assert!((chart.from_sphere(&a) - s).norm() < 1e-14);
            let d = chart.d_from_sphere(&a) * chart.d_to_sphere(&s);
            assert!((d - Matrix2::identity()).amax() < 1e-12);
        }
    }

    #[test]
    fn semi_requires_mixed_tag() {
        let m = metric_by_name("flat").unwrap();
        let f = FiberPoint::new(Vector3::x(), Vector3::y(), ComponentTag::PlusPlus).unwrap();
        assert!(matches!(
            semi_integrability_residual(&m, &P4::zeros(), &f),
            Err(TwistorError::Usage(_))
        ));
    }
}
