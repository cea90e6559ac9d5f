//! Pointwise linear algebra of generalized almost complex structures on
//! `T ⊕ T*` for a 4-dimensional real vector space.
//!
//! Two bases are used throughout. `TT` is the split basis
//! `(θ₁..θ₄, θ₁*..θ₄*)` coming from an orthonormal frame; `PM` is the basis
//! `(θᵢ+θᵢ*, θᵢ−θᵢ*)` adapted to the eigenbundles of the metric endomorphism.
//! A metric-compatible structure is block diagonal `diag(u₁, u₂)` in `PM`
//! and has the shape `[[P, Q], [Q, P]]` in `TT`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix4, SMatrix, SVector, Vector3, Vector4, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Mat4 = Matrix4<f64>;
pub type Mat8 = SMatrix<f64, 8, 8>;
pub type Vec8 = SVector<f64, 8>;

/// Tolerance for identities that only involve exact algebra.
pub const EXACT_TOL: f64 = 1e-10;
/// Tolerance for the metric-compatibility checks (`uᵀ = −u`, block diagonal in `PM`).
pub const COMPAT_TOL: f64 = 1e-9;
/// Singular values below this fraction of the largest one count as zero.
pub const RANK_REL_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GcaError {
    #[error("basis mismatch: {0} vs {1}")]
    BasisMismatch(BasisTag, BasisTag),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("structure is not g-compatible (residual {0:.3e})")]
    NotCompatible(f64),
    #[error("invalid structure: {0}")]
    InvalidStructure(String),
    #[error("type computations disagree: Poisson block gives {primary}, eigenspace projection gives {oracle}")]
    TypeMismatch { primary: u8, oracle: u8 },
}

pub type Result<T> = std::result::Result<T, GcaError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BasisTag {
    TT,
    PM,
}

impl fmt::Display for BasisTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisTag::TT => write!(f, "TT"),
            BasisTag::PM => write!(f, "PM"),
        }
    }
}

/// Change-of-basis matrix whose columns are the `PM` vectors in `TT`
/// coordinates: `S = [[I, I], [I, −I]]`, with `S·S = 2·Id`.
pub fn pm_basis_matrix() -> Mat8 {
    let mut s = Mat8::zeros();
    for i in 0..4 {
        s[(i, i)] = 1.0;
        s[(i, i + 4)] = 1.0;
        s[(i + 4, i)] = 1.0;
        s[(i + 4, i + 4)] = -1.0;
    }
    s
}

/// Gram matrix of the pairing `⟨X+ξ, Y+η⟩ = ½(ξ(Y) + η(X))` in the given basis.
pub fn pseudo_metric(basis: BasisTag) -> Mat8 {
    let mut q = Mat8::zeros();
    match basis {
        BasisTag::TT => {
            for i in 0..4 {
                q[(i, i + 4)] = 0.5;
                q[(i + 4, i)] = 0.5;
            }
        }
        BasisTag::PM => {
            for i in 0..4 {
                q[(i, i)] = 1.0;
                q[(i + 4, i + 4)] = -1.0;
            }
        }
    }
    q
}

/// The metric viewed as an endomorphism, `G = [[0, g⁻¹], [g, 0]]`, in an
/// orthonormal `TT` basis.
pub fn metric_endomorphism() -> Mat8 {
    let mut g = Mat8::zeros();
    for i in 0..4 {
        g[(i, i + 4)] = 1.0;
        g[(i + 4, i)] = 1.0;
    }
    g
}

/// An element `X + ξ` of `T ⊕ T*`, stored as 8 coordinates in `basis`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenVector {
    pub v: Vec8,
    pub basis: BasisTag,
}

impl GenVector {
    pub fn new(v: Vec8, basis: BasisTag) -> Self {
        Self { v, basis }
    }

    /// Builds `X + ξ` in the `TT` basis.
    pub fn from_parts(x: Vector4<f64>, xi: Vector4<f64>) -> Self {
        let mut v = Vec8::zeros();
        v.fixed_rows_mut::<4>(0).copy_from(&x);
        v.fixed_rows_mut::<4>(4).copy_from(&xi);
        Self {
            v,
            basis: BasisTag::TT,
        }
    }

    /// `θᵢ` (0-based index) in the `TT` basis.
    pub fn tangent(i: usize) -> Self {
        let mut v = Vec8::zeros();
        v[i] = 1.0;
        Self {
            v,
            basis: BasisTag::TT,
        }
    }

    /// `θᵢ*` (0-based index) in the `TT` basis.
    pub fn cotangent(i: usize) -> Self {
        let mut v = Vec8::zeros();
        v[i + 4] = 1.0;
        Self {
            v,
            basis: BasisTag::TT,
        }
    }

    pub fn change_basis(&self, to: BasisTag) -> Self {
        if self.basis == to {
            return *self;
        }
        let s = pm_basis_matrix();
        let v = match to {
            BasisTag::TT => s * self.v,
            BasisTag::PM => s * self.v * 0.5,
        };
        Self { v, basis: to }
    }
}

impl std::ops::Add for GenVector {
    type Output = GenVector;
    fn add(self, rhs: GenVector) -> GenVector {
        let rhs = rhs.change_basis(self.basis);
        GenVector {
            v: self.v + rhs.v,
            basis: self.basis,
        }
    }
}

impl std::ops::Sub for GenVector {
    type Output = GenVector;
    fn sub(self, rhs: GenVector) -> GenVector {
        let rhs = rhs.change_basis(self.basis);
        GenVector {
            v: self.v - rhs.v,
            basis: self.basis,
        }
    }
}

/// `⟨v, w⟩` for two vectors expressed in the same basis.
pub fn pseudo_inner(v: &GenVector, w: &GenVector, basis: BasisTag) -> Result<f64> {
    if v.basis != basis {
        return Err(GcaError::BasisMismatch(v.basis, basis));
    }
    if w.basis != basis {
        return Err(GcaError::BasisMismatch(w.basis, basis));
    }
    Ok((v.v.transpose() * pseudo_metric(basis) * w.v)[(0, 0)])
}

/// Matrix of the bivector `x ∧ y` acting as an endomorphism: it sends `x` to
/// `|x|² y − (x·y) x`, so `θᵢ ∧ θⱼ` maps `θᵢ ↦ θⱼ` and `θⱼ ↦ −θᵢ`.
pub fn wedge(x: &Vector4<f64>, y: &Vector4<f64>) -> Mat4 {
    y * x.transpose() - x * y.transpose()
}

/// `θᵢ ∧ θⱼ` for 0-based indices.
pub fn basis_wedge(i: usize, j: usize) -> Mat4 {
    let mut m = Mat4::zeros();
    if i != j {
        m[(j, i)] += 1.0;
        m[(i, j)] -= 1.0;
    }
    m
}

/// `½ tr(AᵀB)`: the inner product on 2-forms for which `θᵢ∧θⱼ` (i<j) is orthonormal.
pub fn bivector_inner(a: &Mat4, b: &Mat4) -> f64 {
    0.5 * a.component_mul(b).sum()
}

fn perm_sign(p: [usize; 4]) -> f64 {
    let mut sign = 1.0;
    for i in 0..4 {
        for j in (i + 1)..4 {
            if p[i] == p[j] {
                return 0.0;
            }
            if p[i] > p[j] {
                sign = -sign;
            }
        }
    }
    sign
}

/// Hodge star on antisymmetric 4×4 matrices for the orientation `θ₁∧θ₂∧θ₃∧θ₄`.
pub fn hodge_star(m: &Mat4) -> Mat4 {
    let mut out = Mat4::zeros();
    for k in 0..4 {
        for l in (k + 1)..4 {
            let mut c = 0.0;
            for i in 0..4 {
                for j in (i + 1)..4 {
                    c += perm_sign([i, j, k, l]) * m[(j, i)];
                }
            }
            out += c * basis_wedge(k, l);
        }
    }
    out
}

/// `I⁺, J⁺, K⁺` (self-dual) and `I⁻, J⁻, K⁻` (anti-self-dual) as endomorphisms.
#[derive(Debug, Clone, PartialEq)]
pub struct BivectorBasis {
    pub plus: [Mat4; 3],
    pub minus: [Mat4; 3],
}

impl BivectorBasis {
    pub fn standard() -> Self {
        let w = basis_wedge;
        Self {
            plus: [w(0, 1) + w(2, 3), w(0, 2) - w(1, 3), w(0, 3) + w(1, 2)],
            minus: [w(0, 1) - w(2, 3), w(0, 2) + w(1, 3), w(0, 3) - w(1, 2)],
        }
    }

    pub fn triple(&self, orientation: Orientation) -> &[Mat4; 3] {
        match orientation {
            Orientation::Plus => &self.plus,
            Orientation::Minus => &self.minus,
        }
    }

    /// All six in the order `I⁺, J⁺, K⁺, I⁻, J⁻, K⁻`.
    pub fn all(&self) -> [Mat4; 6] {
        [
            self.plus[0],
            self.plus[1],
            self.plus[2],
            self.minus[0],
            self.minus[1],
            self.minus[2],
        ]
    }

    /// Coordinates of an antisymmetric matrix on the six basis elements.
    /// Each element has bivector norm² 2, hence the division.
    pub fn coefficients(&self, m: &Mat4) -> Vector6<f64> {
        let all = self.all();
        Vector6::from_fn(|k, _| bivector_inner(&all[k], m) / 2.0)
    }

    pub fn from_coefficients(&self, c: &Vector6<f64>) -> Mat4 {
        self.all()
            .iter()
            .zip(c.iter())
            .fold(Mat4::zeros(), |acc, (e, ci)| acc + e * *ci)
    }

    /// `a·(E₁, E₂, E₃)` for the triple of the given orientation.
    pub fn combine(&self, orientation: Orientation, a: &Vector3<f64>) -> Mat4 {
        let t = self.triple(orientation);
        t[0] * a[0] + t[1] * a[1] + t[2] * a[2]
    }

    /// Inverse of [`combine`](Self::combine) on the span of one triple.
    pub fn project(&self, orientation: Orientation, m: &Mat4) -> Vector3<f64> {
        let t = self.triple(orientation);
        Vector3::new(
            bivector_inner(&t[0], m) / 2.0,
            bivector_inner(&t[1], m) / 2.0,
            bivector_inner(&t[2], m) / 2.0,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    Plus,
    Minus,
}

impl Orientation {
    pub fn flip(self) -> Self {
        match self {
            Orientation::Plus => Orientation::Minus,
            Orientation::Minus => Orientation::Plus,
        }
    }
}

/// Connected component of the fiber: `Z⁺⁺`, `Z⁻⁻`, `Z⁺⁻`, `Z⁻⁺`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ComponentTag {
    PlusPlus,
    MinusMinus,
    PlusMinus,
    MinusPlus,
}

impl ComponentTag {
    pub const ALL: [ComponentTag; 4] = [
        ComponentTag::PlusPlus,
        ComponentTag::MinusMinus,
        ComponentTag::PlusMinus,
        ComponentTag::MinusPlus,
    ];

    pub fn from_orientations(first: Orientation, second: Orientation) -> Self {
        use Orientation::*;
        match (first, second) {
            (Plus, Plus) => ComponentTag::PlusPlus,
            (Minus, Minus) => ComponentTag::MinusMinus,
            (Plus, Minus) => ComponentTag::PlusMinus,
            (Minus, Plus) => ComponentTag::MinusPlus,
        }
    }

    pub fn first(self) -> Orientation {
        match self {
            ComponentTag::PlusPlus | ComponentTag::PlusMinus => Orientation::Plus,
            _ => Orientation::Minus,
        }
    }

    pub fn second(self) -> Orientation {
        match self {
            ComponentTag::PlusPlus | ComponentTag::MinusPlus => Orientation::Plus,
            _ => Orientation::Minus,
        }
    }

    pub fn is_mixed(self) -> bool {
        self.first() != self.second()
    }

    /// The component this one becomes when the orientation of the base is reversed.
    pub fn reversed(self) -> Self {
        Self::from_orientations(self.first().flip(), self.second().flip())
    }

    pub fn symbol(self) -> &'static str {
        match self {
            ComponentTag::PlusPlus => "++",
            ComponentTag::MinusMinus => "--",
            ComponentTag::PlusMinus => "+-",
            ComponentTag::MinusPlus => "-+",
        }
    }
}

impl fmt::Display for ComponentTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for ComponentTag {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "++" | "PP" | "pp" => Ok(ComponentTag::PlusPlus),
            "--" | "MM" | "mm" => Ok(ComponentTag::MinusMinus),
            "+-" | "PM" | "pm" => Ok(ComponentTag::PlusMinus),
            "-+" | "MP" | "mp" => Ok(ComponentTag::MinusPlus),
            other => Err(format!(
                "unknown component `{other}` (expected ++, --, +- or -+)"
            )),
        }
    }
}

impl Serialize for ComponentTag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.symbol())
    }
}

impl<'de> Deserialize<'de> for ComponentTag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn max_abs(m: &Mat8) -> f64 {
    m.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

fn max_abs4(m: &Mat4) -> f64 {
    m.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

fn block(m: &Mat8, r: usize, c: usize) -> Mat4 {
    m.fixed_view::<4, 4>(r, c).into_owned()
}

fn from_blocks(a: &Mat4, b: &Mat4, c: &Mat4, d: &Mat4) -> Mat8 {
    let mut m = Mat8::zeros();
    m.fixed_view_mut::<4, 4>(0, 0).copy_from(a);
    m.fixed_view_mut::<4, 4>(0, 4).copy_from(b);
    m.fixed_view_mut::<4, 4>(4, 0).copy_from(c);
    m.fixed_view_mut::<4, 4>(4, 4).copy_from(d);
    m
}

/// Block-diagonal 8×8 matrix `diag(a, b)`.
pub fn block_diag(a: &Mat4, b: &Mat4) -> Mat8 {
    from_blocks(a, &Mat4::zeros(), &Mat4::zeros(), b)
}

/// Numerical rank with singular values below `RANK_REL_TOL·σ_max` treated as zero.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().singular_values();
    let smax = sv.iter().fold(0.0_f64, |a, x| a.max(*x));
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > RANK_REL_TOL * smax).count()
}

/// A generalized almost complex structure: `m² = −Id` and orthogonal for the pairing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenStructure {
    m: Mat8,
    basis: BasisTag,
}

impl GenStructure {
    pub fn new(m: Mat8, basis: BasisTag) -> Result<Self> {
        let scale = 1.0 + max_abs(&m).powi(2);
        let sq = max_abs(&(m * m + Mat8::identity()));
        if sq > 1e-9 * scale {
            return Err(GcaError::InvalidInput(format!(
                "matrix does not square to -Id (residual {sq:.3e})"
            )));
        }
        let q = pseudo_metric(basis);
        let orth = max_abs(&(m.transpose() * q * m - q));
        if orth > 1e-9 * scale {
            return Err(GcaError::InvalidInput(format!(
                "matrix is not orthogonal for the pairing (residual {orth:.3e})"
            )));
        }
        Ok(Self { m, basis })
    }

    pub fn matrix(&self) -> &Mat8 {
        &self.m
    }

    pub fn basis(&self) -> BasisTag {
        self.basis
    }

    /// `𝒥_J = [[J, 0], [0, −Jᵀ]]` for an almost complex structure `J`.
    pub fn from_complex(j: &Mat4) -> Result<Self> {
        let res = max_abs4(&(j * j + Mat4::identity()));
        if res > 1e-12 * (1.0 + max_abs4(j).powi(2)) {
            return Err(GcaError::InvalidInput(format!(
                "J does not square to -Id (residual {res:.3e})"
            )));
        }
        let m = from_blocks(j, &Mat4::zeros(), &Mat4::zeros(), &(-j.transpose()));
        Self::new(m, BasisTag::TT)
    }

    /// `𝒥_w = [[0, −w⁻¹], [w, 0]]` for a non-degenerate 2-form `w`.
    pub fn from_symplectic(w: &Mat4) -> Result<Self> {
        let asym = max_abs4(&(w + w.transpose()));
        if asym > EXACT_TOL * (1.0 + max_abs4(w)) {
            return Err(GcaError::InvalidInput(format!(
                "w is not antisymmetric (residual {asym:.3e})"
            )));
        }
        if w.determinant().abs() <= 1e-12 {
            return Err(GcaError::InvalidInput("w is degenerate".into()));
        }
        let winv = w
            .try_inverse()
            .ok_or_else(|| GcaError::InvalidInput("w is degenerate".into()))?;
        let m = from_blocks(&Mat4::zeros(), &(-winv), w, &Mat4::zeros());
        Self::new(m, BasisTag::TT)
    }

    /// `diag(u₁, u₂)` in the `PM` basis.
    pub fn from_pm_blocks(u1: &Mat4, u2: &Mat4) -> Result<Self> {
        Self::new(block_diag(u1, u2), BasisTag::PM)
    }

    pub fn change_basis(&self, to: BasisTag) -> Self {
        if self.basis == to {
            return *self;
        }
        // S⁻¹ = S/2, so conjugation in either direction is S·m·S/2.
        let s = pm_basis_matrix();
        Self {
            m: s * self.m * s * 0.5,
            basis: to,
        }
    }

    pub fn apply(&self, v: &GenVector) -> GenVector {
        let v = v.change_basis(self.basis);
        GenVector {
            v: self.m * v.v,
            basis: self.basis,
        }
    }

    /// `e^{−B}·𝒥·e^{B}` with `e^{B} = [[Id, 0], [B, Id]]`.
    pub fn b_transform(&self, b: &Mat4) -> Result<Self> {
        let asym = max_abs4(&(b + b.transpose()));
        if asym > EXACT_TOL * (1.0 + max_abs4(b)) {
            return Err(GcaError::InvalidInput(format!(
                "B is not antisymmetric (residual {asym:.3e})"
            )));
        }
        let tt = self.change_basis(BasisTag::TT);
        let id = Mat4::identity();
        let eb = from_blocks(&id, &Mat4::zeros(), b, &id);
        let emb = from_blocks(&id, &Mat4::zeros(), &(-b), &id);
        Self::new(emb * tt.m * eb, BasisTag::TT)
    }

    /// The four 4×4 blocks in the `TT` basis.
    pub fn tt_blocks(&self) -> [Mat4; 4] {
        let m = self.change_basis(BasisTag::TT).m;
        [
            block(&m, 0, 0),
            block(&m, 0, 4),
            block(&m, 4, 0),
            block(&m, 4, 4),
        ]
    }

    /// The diagonal blocks `(u₁, u₂)` in the `PM` basis and the size of the
    /// off-diagonal blocks.
    pub fn pm_blocks(&self) -> (Mat4, Mat4, f64) {
        let m = self.change_basis(BasisTag::PM).m;
        let off = max_abs4(&block(&m, 0, 4)).max(max_abs4(&block(&m, 4, 0)));
        (block(&m, 0, 0), block(&m, 4, 4), off)
    }

    /// Residual of `uᵀ = −u` in the orthonormal `TT` basis.
    pub fn compatibility_residual(&self) -> f64 {
        let m = self.change_basis(BasisTag::TT).m;
        max_abs(&(m + m.transpose()))
    }

    pub fn is_g_compatible(&self) -> bool {
        self.compatibility_residual() <= COMPAT_TOL
    }

    /// Type from the Poisson block: `2 − rank(β)/2`.
    pub fn type_from_poisson_block(&self) -> Result<u8> {
        let beta = self.tt_blocks()[1];
        let r = numerical_rank(&DMatrix::from_iterator(4, 4, beta.iter().copied()));
        if r % 2 == 1 {
            return Err(GcaError::InvalidStructure(format!(
                "Poisson block has odd rank {r}"
            )));
        }
        Ok((2 - r / 2) as u8)
    }

    /// Type from the definition: codimension of the tangent projection of the
    /// `+i`-eigenspace `L`. `L` is the image of `½(Id − i·u)`; its tangent
    /// projection has complex rank equal to half the real rank of the
    /// realified 4×8 complex matrix.
    pub fn type_from_eigenspace(&self) -> u8 {
        let m = self.change_basis(BasisTag::TT).m;
        let mut re = DMatrix::<f64>::zeros(4, 8);
        let mut im = DMatrix::<f64>::zeros(4, 8);
        for r in 0..4 {
            re[(r, r)] = 0.5;
            for c in 0..8 {
                im[(r, c)] = -0.5 * m[(r, c)];
            }
        }
        let mut real = DMatrix::<f64>::zeros(8, 16);
        real.view_mut((0, 0), (4, 8)).copy_from(&re);
        real.view_mut((0, 8), (4, 8)).copy_from(&(-&im));
        real.view_mut((4, 0), (4, 8)).copy_from(&im);
        real.view_mut((4, 8), (4, 8)).copy_from(&re);
        let rank_c = numerical_rank(&real) / 2;
        (4 - rank_c.min(4)) as u8
    }

    /// Type, computed from the Poisson block and cross-checked against the
    /// eigenspace definition.
    pub fn type_of(&self) -> Result<u8> {
        let primary = self.type_from_poisson_block()?;
        let oracle = self.type_from_eigenspace();
        if primary != oracle {
            return Err(GcaError::TypeMismatch { primary, oracle });
        }
        Ok(primary)
    }

    /// Component of a metric-compatible structure, read off the orientation
    /// of the diagonal `PM` blocks.
    pub fn classify_component(&self) -> Result<ComponentTag> {
        let compat = self.compatibility_residual();
        if compat > COMPAT_TOL {
            return Err(GcaError::NotCompatible(compat));
        }
        let (u1, u2, off) = self.pm_blocks();
        if off > COMPAT_TOL {
            return Err(GcaError::NotCompatible(off));
        }
        let basis = BivectorBasis::standard();
        let o1 = orientation_of(&basis, &u1)?;
        let o2 = orientation_of(&basis, &u2)?;
        Ok(ComponentTag::from_orientations(o1, o2))
    }
}

/// Which of `Λ±` a unit complex structure `u ∈ so(4)` lies in.
pub fn orientation_of(basis: &BivectorBasis, u: &Mat4) -> Result<Orientation> {
    let c = basis.coefficients(u);
    let plus = c.fixed_rows::<3>(0).norm();
    let minus = c.fixed_rows::<3>(3).norm();
    let tol = COMPAT_TOL;
    if (plus - 1.0).abs() <= tol && minus <= tol {
        Ok(Orientation::Plus)
    } else if (minus - 1.0).abs() <= tol && plus <= tol {
        Ok(Orientation::Minus)
    } else {
        Err(GcaError::InvalidStructure(format!(
            "block is not a unit element of exactly one of Λ± (|Λ⁺ part| = {plus:.3e}, |Λ⁻ part| = {minus:.3e})"
        )))
    }
}

/// A generalized Kähler pair `(𝒥₁, 𝒥₂)` with `𝒥₁𝒥₂ = 𝒥₂𝒥₁ = −G`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KahlerPair {
    pub j1: GenStructure,
    pub j2: GenStructure,
}

impl KahlerPair {
    /// Residual of `𝒥₁𝒥₂ = 𝒥₂𝒥₁ = −G` in the `TT` basis.
    pub fn residual(&self) -> f64 {
        let a = self.j1.change_basis(BasisTag::TT).m;
        let b = self.j2.change_basis(BasisTag::TT).m;
        let g = metric_endomorphism();
        max_abs(&(a * b + g)).max(max_abs(&(b * a + g)))
    }
}

/// Partner `𝒥₂ = [[Q, P], [P, Q]]` of a compatible `𝒥₁ = [[P, Q], [Q, P]]`.
pub fn kahler_partner(j1: &GenStructure) -> Result<KahlerPair> {
    let compat = j1.compatibility_residual();
    if compat > COMPAT_TOL {
        return Err(GcaError::NotCompatible(compat));
    }
    let j1 = j1.change_basis(BasisTag::TT);
    let [p, q, _, _] = j1.tt_blocks();
    let j2 = GenStructure::new(from_blocks(&q, &p, &p, &q), BasisTag::TT)?;
    let pair = KahlerPair { j1, j2 };
    let res = pair.residual();
    if res > COMPAT_TOL {
        return Err(GcaError::InvalidStructure(format!(
            "partner fails J1·J2 = -G (residual {res:.3e})"
        )));
    }
    Ok(pair)
}

/// Whether every element of one quaternionic triple commutes with every
/// element of the other. Both triples must satisfy `I² = J² = K² = −Id` and
/// `IJ = ±K`.
pub fn distributions_commute(t1: &[DMatrix<f64>; 3], t2: &[DMatrix<f64>; 3]) -> Result<bool> {
    check_quaternionic(t1)?;
    check_quaternionic(t2)?;
    if t1[0].nrows() != t2[0].nrows() {
        return Err(GcaError::InvalidInput(
            "triples act on different dimensions".into(),
        ));
    }
    for a in t1 {
        for b in t2 {
            let c = a * b - b * a;
            if c.amax() > EXACT_TOL {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn check_quaternionic(t: &[DMatrix<f64>; 3]) -> Result<()> {
    let n = t[0].nrows();
    if n == 0 || !n.is_multiple_of(4) || t.iter().any(|m| m.nrows() != n || m.ncols() != n) {
        return Err(GcaError::InvalidInput(format!(
            "triple must consist of square matrices of dimension 4n (got {n})"
        )));
    }
    let id = DMatrix::<f64>::identity(n, n);
    for m in t {
        if (m * m + &id).amax() > EXACT_TOL {
            return Err(GcaError::InvalidInput(
                "triple element does not square to -Id".into(),
            ));
        }
    }
    // The span is what matters, so either orientation of the triple is accepted.
    let ij = &t[0] * &t[1];
    if (&ij - &t[2]).amax() > EXACT_TOL && (&ij + &t[2]).amax() > EXACT_TOL {
        return Err(GcaError::InvalidInput("triple fails IJ = ±K".into()));
    }
    Ok(())
}

/// The standard complex structure `I₀ = diag(rot90, rot90)`.
pub fn i0() -> Mat4 {
    BivectorBasis::standard().plus[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rot90_block() -> Mat4 {
        let mut m = Mat4::zeros();
        m[(0, 1)] = -1.0;
        m[(1, 0)] = 1.0;
        m[(2, 3)] = -1.0;
        m[(3, 2)] = 1.0;
        m
    }

    #[test]
    fn i_plus_is_i0_block_pattern() {
        assert_eq!(i0(), rot90_block());
    }

    #[test]
    fn quaternion_relations() {
        let b = BivectorBasis::standard();
        let id = Mat4::identity();
        for e in b.all() {
            assert_eq!(e * e, -id);
            assert_eq!(bivector_inner(&e, &e), 2.0);
        }
        assert_eq!(b.plus[0] * b.plus[1], b.plus[2]);
        for p in &b.plus {
            for m in &b.minus {
                assert_eq!(p * m, m * p);
            }
        }
    }

    #[test]
    fn hodge_eigenvalues_of_the_triples() {
        let b = BivectorBasis::standard();
        for e in &b.plus {
            assert_eq!(hodge_star(e), *e);
        }
        for e in &b.minus {
            assert_eq!(hodge_star(e), -e);
        }
    }

    #[test]
    fn pseudo_inner_examples() {
        let t1 = GenVector::tangent(0);
        let c1 = GenVector::cotangent(0);
        let c2 = GenVector::cotangent(1);
        assert_eq!(pseudo_inner(&t1, &c1, BasisTag::TT).unwrap(), 0.5);
        assert_eq!(pseudo_inner(&t1, &c2, BasisTag::TT).unwrap(), 0.0);
        assert_eq!(
            pseudo_inner(&(t1 + c1), &(t1 - c1), BasisTag::TT).unwrap(),
            0.0
        );
        let pm = t1.change_basis(BasisTag::PM);
        assert!(matches!(
            pseudo_inner(&pm, &c1, BasisTag::PM),
            Err(GcaError::BasisMismatch(..))
        ));
    }

    #[test]
    fn pm_basis_squares_to_twice_identity() {
        let s = pm_basis_matrix();
        assert_eq!(s * s, Mat8::identity() * 2.0);
    }

    #[test]
    fn from_complex_i0() {
        let j = GenStructure::from_complex(&i0()).unwrap();
        assert_eq!(*j.matrix(), block_diag(&i0(), &i0()));
        assert_eq!(j.matrix() * j.matrix(), -Mat8::identity());
        assert_eq!(j.type_of().unwrap(), 2);
    }

    #[test]
    fn from_complex_rejects_non_complex() {
        assert!(GenStructure::from_complex(&Mat4::identity()).is_err());
    }

    #[test]
    fn from_symplectic_i0() {
        let j = GenStructure::from_symplectic(&i0()).unwrap();
        assert_eq!(j.matrix() * j.matrix(), -Mat8::identity());
        assert_eq!(j.type_of().unwrap(), 0);
        let degenerate = basis_wedge(0, 1);
        assert!(GenStructure::from_symplectic(&degenerate).is_err());
    }

    #[test]
    fn b_transform_identity_and_rejection() {
        let j = GenStructure::from_complex(&i0()).unwrap();
        let same = j.b_transform(&Mat4::zeros()).unwrap();
        assert_eq!(same, j);
        assert!(j.b_transform(&Mat4::identity()).is_err());
    }

    #[test]
    fn b_transform_breaks_compatibility() {
        let j = GenStructure::from_complex(&i0()).unwrap();
        let b = basis_wedge(0, 2) * 0.7 - basis_wedge(1, 3) * 0.3;
        let jb = j.b_transform(&b).unwrap();
        assert_eq!(jb.type_of().unwrap(), 2);
        assert!(matches!(
            jb.classify_component(),
            Err(GcaError::NotCompatible(_))
        ));
    }

    #[test]
    fn change_basis_examples() {
        let b = BivectorBasis::standard();
        let ip = b.plus[0];
        let u = GenStructure::from_pm_blocks(&ip, &ip).unwrap();
        let tt = u.change_basis(BasisTag::TT);
        assert_eq!(tt.tt_blocks(), [ip, Mat4::zeros(), Mat4::zeros(), ip]);
        let u = GenStructure::from_pm_blocks(&ip, &(-ip)).unwrap();
        let tt = u.change_basis(BasisTag::TT);
        assert_eq!(tt.tt_blocks(), [Mat4::zeros(), ip, ip, Mat4::zeros()]);
        let back = tt.change_basis(BasisTag::PM);
        assert!(max_abs(&(back.matrix() - u.matrix())) < 1e-14);
    }

    #[test]
    fn classify_examples() {
        let b = BivectorBasis::standard();
        let c = |u1: &Mat4, u2: &Mat4| {
            GenStructure::from_pm_blocks(u1, u2)
                .unwrap()
                .classify_component()
                .unwrap()
        };
        assert_eq!(c(&b.plus[0], &b.plus[0]), ComponentTag::PlusPlus);
        assert_eq!(c(&b.plus[0], &b.minus[0]), ComponentTag::PlusMinus);
        assert_eq!(c(&b.minus[1], &b.minus[2]), ComponentTag::MinusMinus);
        assert_eq!(c(&b.minus[1], &b.plus[2]), ComponentTag::MinusPlus);
    }

    #[test]
    fn mixed_type_is_one() {
        let b = BivectorBasis::standard();
        let u = GenStructure::from_pm_blocks(&b.plus[0], &b.minus[0]).unwrap();
        assert_eq!(u.type_of().unwrap(), 1);
    }

    #[test]
    fn kahler_partner_of_complex_is_symplectic_shape() {
        let j1 = GenStructure::from_complex(&i0()).unwrap();
        let pair = kahler_partner(&j1).unwrap();
        let expected = GenStructure::from_symplectic(&i0()).unwrap();
        assert_eq!(pair.j2, expected);
        assert!(pair.residual() < 1e-15);
    }

    #[test]
    fn kahler_partner_rejects_incompatible() {
        let j = GenStructure::from_symplectic(&(i0() * 2.0)).unwrap();
        assert!(matches!(
            kahler_partner(&j),
            Err(GcaError::NotCompatible(_))
        ));
    }

    #[test]
    fn commuting_distributions() {
        let b = BivectorBasis::standard();
        let d = |m: &Mat4| DMatrix::from_iterator(4, 4, m.iter().copied());
        let plus = [d(&b.plus[0]), d(&b.plus[1]), d(&b.plus[2])];
        // I⁻J⁻ = −K⁻: the anti-self-dual triple has the opposite orientation.
        let minus = [d(&b.minus[0]), d(&b.minus[1]), d(&b.minus[2])];
        assert_eq!(&minus[0] * &minus[1], -&minus[2]);
        assert!(distributions_commute(&plus, &minus).unwrap());
        assert!(!distributions_commute(&plus, &plus).unwrap());
        let not_quaternionic = [d(&b.plus[0]), d(&b.plus[0]), d(&b.plus[2])];
        assert!(distributions_commute(&plus, &not_quaternionic).is_err());
    }
}
