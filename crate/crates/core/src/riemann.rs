//! Riemannian machinery on a single ℝ⁴ chart: orthonormal frames,
//! Christoffel symbols, the curvature operator on Λ² and its block
//! decomposition, the generalized connection and curvature, and a small
//! catalog of closed-form metrics.
//!
//! Curvature sign: `R_c(X, Y) = [∇_Y, ∇_X] + ∇_{[X,Y]}`, the negative of the
//! common textbook operator. With this sign the unit round sphere has
//! `R_c = +Id` on Λ² and `s = +12`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix3, Matrix6, Vector4};
use thiserror::Error;

use crate::cartan::{CalculusError, ChartBox};
use crate::gca::{bivector_inner, block_diag, BivectorBasis, Mat4, Mat8};

pub type P4 = Vector4<f64>;
pub type DomainBox = ChartBox<4>;
/// `Γ[k][i][j] = Γᵏᵢⱼ`.
pub type Christoffel = [[[f64; 4]; 4]; 4];

/// Default finite-difference step for charts with coordinates of order one.
pub const DEFAULT_STEP: f64 = 1e-3;
/// Frame connection coefficients more asymmetric than this are flagged.
pub const ANTISYMMETRY_WARN: f64 = 1e-6;
/// Allowed mismatch between `4·tr` of the two diagonal blocks, relative to `1 + |R|`.
pub const DECOMPOSE_TOL: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiemannError {
    #[error("metric is not positive definite at {0:?}")]
    NotPositiveDefinite([f64; 4]),
    #[error("metric has non-finite components at {0:?}")]
    NonFinite([f64; 4]),
    #[error(transparent)]
    Domain(#[from] CalculusError),
    #[error("inconsistent decomposition: 4·tr Λ⁺ = {plus:.6e}, 4·tr Λ⁻ = {minus:.6e}")]
    DecompositionInconsistent { plus: f64, minus: f64 },
    #[error("unknown metric '{0}' (known: flat, flat-perturbed, s4, fubini-study, eguchi-hanson, schwarzschild)")]
    UnknownMetric(String),
    #[error("frame rotation is not in SO(4)")]
    NotARotation,
}

pub type Result<T> = std::result::Result<T, RiemannError>;

#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    BuiltIn,
    Dsl { source: String },
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::BuiltIn => write!(f, "built-in"),
            Provenance::Dsl { source } => write!(f, "dsl:{source}"),
        }
    }
}

type MetricFn = dyn Fn(&P4) -> Mat4 + Send + Sync;

/// A Riemannian metric on a box in ℝ⁴.
#[derive(Clone)]
pub struct MetricSpec {
    name: String,
    domain: DomainBox,
    g: Arc<MetricFn>,
    provenance: Provenance,
    step: f64,
    rotation: Option<Mat4>,
}

impl fmt::Debug for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricSpec")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("provenance", &self.provenance)
            .field("step", &self.step)
            .finish_non_exhaustive()
    }
}

impl MetricSpec {
    pub fn new(
        name: impl Into<String>,
        domain: DomainBox,
        g: impl Fn(&P4) -> Mat4 + Send + Sync + 'static,
        provenance: Provenance,
    ) -> Self {
        Self {
            name: name.into(),
            domain,
            g: Arc::new(g),
            provenance,
            step: DEFAULT_STEP,
            rotation: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn with_step(mut self, h: f64) -> Self {
        self.step = h;
        self
    }

    /// Replace the Cholesky frame `e` by `e·R` for a constant `R ∈ SO(4)`.
    pub fn with_frame_rotation(mut self, r: Mat4) -> Result<Self> {
        let ortho = (r.transpose() * r - Mat4::identity()).amax();
        if ortho > 1e-10 || r.determinant() < 0.0 {
            return Err(RiemannError::NotARotation);
        }
        self.rotation = Some(r);
        Ok(self)
    }

    /// Symmetrized metric components at `p`.
    pub fn metric(&self, p: &P4) -> Mat4 {
        let g = (self.g)(p);
        (g + g.transpose()) * 0.5
    }

    /// The same metric in coordinates with axes `a` and `b` exchanged; this
    /// reverses the chart orientation and hence swaps Λ⁺ and Λ⁻.
    pub fn swapped(&self, a: usize, b: usize) -> MetricSpec {
        let mut perm = Mat4::identity();
        perm.swap_columns(a, b);
        let inner = self.g.clone();
        let mut domain = self.domain;
        domain.lo.swap(a, b);
        domain.hi.swap(a, b);
        MetricSpec {
            name: format!("{}[x{}<->x{}]", self.name, a + 1, b + 1),
            domain,
            g: Arc::new(move |p: &P4| {
                let q = perm * p;
                perm * inner(&q) * perm
            }),
            provenance: self.provenance.clone(),
            step: self.step,
            rotation: self.rotation,
        }
    }

    /// Central point of the domain box.
    pub fn center(&self) -> P4 {
        P4::from_fn(|i, _| 0.5 * (self.domain.lo[i] + self.domain.hi[i]))
    }

    /// Map `t ∈ [0,1]⁴` into the domain shrunk by `fraction` of each side on both ends.
    pub fn interior_point(&self, t: &P4, fraction: f64) -> P4 {
        P4::from_fn(|i, _| {
            let (lo, hi) = (self.domain.lo[i], self.domain.hi[i]);
            let w = hi - lo;
            lo + w * fraction + t[i] * w * (1.0 - 2.0 * fraction)
        })
    }

    /// Positive-definiteness and finiteness at the given points.
    pub fn validate(&self, points: &[P4]) -> Result<()> {
        for p in points {
            let g = self.metric(p);
            if g.iter().any(|v| !v.is_finite()) {
                return Err(RiemannError::NonFinite(arr(p)));
            }
            if g.cholesky().is_none() {
                return Err(RiemannError::NotPositiveDefinite(arr(p)));
            }
        }
        Ok(())
    }

    fn check(&self, p: &P4, margin: f64) -> Result<()> {
        Ok(self.domain.check_interior(p, margin)?)
    }

    /// `∂ₖg` for each axis.
    fn dg(&self, p: &P4) -> [Mat4; 4] {
        let h = self.step;
        std::array::from_fn(|k| {
            let mut acc = Mat4::zeros();
            for (o, w) in STENCIL {
                let mut q = *p;
                q[k] += o * h;
                acc += self.metric(&q) * w;
            }
            acc / h
        })
    }

    /// `∂ᵢ∂ⱼg` with the fourth-order 5-point stencil on the diagonal and the
    /// tensor product of first-derivative stencils off it.
    fn d2g(&self, p: &P4) -> [[Mat4; 4]; 4] {
        let h = self.step;
        let g0 = self.metric(p);
        let mut out = [[Mat4::zeros(); 4]; 4];
        for i in 0..4 {
            let mut acc = g0 * (-30.0 / 12.0);
            for (o, w) in [
                (-2.0, -1.0 / 12.0),
                (-1.0, 16.0 / 12.0),
                (1.0, 16.0 / 12.0),
                (2.0, -1.0 / 12.0),
            ] {
                let mut q = *p;
                q[i] += o * h;
                acc += self.metric(&q) * w;
            }
            out[i][i] = acc / (h * h);
            for j in (i + 1)..4 {
                let mut acc = Mat4::zeros();
                for (oi, wi) in STENCIL {
                    for (oj, wj) in STENCIL {
                        let mut q = *p;
                        q[i] += oi * h;
                        q[j] += oj * h;
                        acc += self.metric(&q) * (wi * wj);
                    }
                }
                out[i][j] = acc / (h * h);
                out[j][i] = out[i][j];
            }
        }
        out
    }
}

const STENCIL: [(f64, f64); 4] = [
    (-2.0, 1.0 / 12.0),
    (-1.0, -8.0 / 12.0),
    (1.0, 8.0 / 12.0),
    (2.0, -1.0 / 12.0),
];

fn arr(p: &P4) -> [f64; 4] {
    [p[0], p[1], p[2], p[3]]
}

/// Orthonormal coframe data: the columns of `e` are the frame vectors `θᵢ`
/// in coordinates; `einv` holds the dual coframe as rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameData {
    pub e: Mat4,
    pub einv: Mat4,
}

/// `e = L⁻ᵀ` for the Cholesky factor `g = LLᵀ`: upper triangular with a
/// positive diagonal, hence oriented and smooth in `p`.
pub fn orthonormal_frame(m: &MetricSpec, p: &P4) -> Result<FrameData> {
    let g = m.metric(p);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(RiemannError::NonFinite(arr(p)));
    }
    let chol = g
        .cholesky()
        .ok_or(RiemannError::NotPositiveDefinite(arr(p)))?;
    let l = chol.l();
    let linv = l
        .try_inverse()
        .ok_or(RiemannError::NotPositiveDefinite(arr(p)))?;
    let mut e = linv.transpose();
    let mut einv = l.transpose();
    if let Some(r) = m.rotation {
        e *= r;
        einv = r.transpose() * einv;
    }
    Ok(FrameData { e, einv })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConnectionData {
    pub gamma: Christoffel,
    /// `Υᵢ = ω(θᵢ)`, with `∇_X θ_b = Σₐ ω(X)ₐᵦ θₐ`.
    pub upsilon: [Mat4; 4],
    /// Largest `|Υᵢ + Υᵢᵀ|` entry before antisymmetrization.
    pub antisymmetry_residual: f64,
}

impl ConnectionData {
    pub fn quality_warning(&self) -> Option<String> {
        (self.antisymmetry_residual > ANTISYMMETRY_WARN).then(|| {
            format!(
                "frame connection antisymmetry residual {:.2e} exceeds {:.0e}",
                self.antisymmetry_residual, ANTISYMMETRY_WARN
            )
        })
    }
}

fn christoffel_from(ginv: &Mat4, dg: &[Mat4; 4]) -> Christoffel {
    let mut gamma = [[[0.0; 4]; 4]; 4];
    for k in 0..4 {
        for i in 0..4 {
            for j in i..4 {
                let mut s = 0.0;
                for l in 0..4 {
                    s += ginv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
                }
                gamma[k][i][j] = 0.5 * s;
                gamma[k][j][i] = 0.5 * s;
            }
        }
    }
    gamma
}

/// Coordinate Christoffel symbols only.
pub fn christoffel_symbols(m: &MetricSpec, p: &P4) -> Result<Christoffel> {
    m.check(p, 2.0 * m.step)?;
    let ginv = m
        .metric(p)
        .try_inverse()
        .ok_or(RiemannError::NotPositiveDefinite(arr(p)))?;
    Ok(christoffel_from(&ginv, &m.dg(p)))
}

/// Christoffel symbols and the frame connection coefficients
/// `(Υᵢ)ₐᵦ = θᵃ(∇_{θᵢ} θᵦ) = (e⁻¹)ᵃ_μ [θᵢ(e^μ_b) + Γ^μ_{νλ} e^ν_i e^λ_b]`.
pub fn christoffel(m: &MetricSpec, p: &P4) -> Result<ConnectionData> {
    let gamma = christoffel_symbols(m, p)?;
    let frame = orthonormal_frame(m, p)?;
    let h = m.step;
    let mut de = [Mat4::zeros(); 4];
    for (nu, d) in de.iter_mut().enumerate() {
        for (o, w) in STENCIL {
            let mut q = *p;
            q[nu] += o * h;
            *d += orthonormal_frame(m, &q)?.e * w;
        }
        *d /= h;
    }
    let e = frame.e;
    let mut upsilon = [Mat4::zeros(); 4];
    let mut residual: f64 = 0.0;
    for i in 0..4 {
        // Coordinate components of ∇_{θᵢ} θ_b, column b.
        let mut cov = Mat4::zeros();
        for nu in 0..4 {
            cov += de[nu] * e[(nu, i)];
        }
        for mu in 0..4 {
            for b in 0..4 {
                let mut s = 0.0;
                for nu in 0..4 {
                    for lam in 0..4 {
                        s += gamma[mu][nu][lam] * e[(nu, i)] * e[(lam, b)];
                    }
                }
                cov[(mu, b)] += s;
            }
        }
        let u = frame.einv * cov;
        residual = residual.max((u + u.transpose()).amax());
        upsilon[i] = (u - u.transpose()) * 0.5;
    }
    Ok(ConnectionData {
        gamma,
        upsilon,
        antisymmetry_residual: residual,
    })
}

/// Coordinate Riemann tensor `R[a][b][i][j] = Rᵃ_{bij}` for the textbook
/// operator `R(∂ᵢ,∂ⱼ)∂_b = Rᵃ_{bij} ∂ₐ`.
fn riemann_coordinate(m: &MetricSpec, p: &P4) -> Result<[[[[f64; 4]; 4]; 4]; 4]> {
    m.check(p, 2.0 * m.step)?;
    let g = m.metric(p);
    let ginv = g
        .try_inverse()
        .ok_or(RiemannError::NotPositiveDefinite(arr(p)))?;
    let dg = m.dg(p);
    let d2g = m.d2g(p);
    let gamma = christoffel_from(&ginv, &dg);
    // T[j][b][l] = ∂ⱼg_bl + ∂_b g_jl − ∂ₗg_jb and its derivatives.
    let mut t = [[[0.0; 4]; 4]; 4];
    for j in 0..4 {
        for b in 0..4 {
            for l in 0..4 {
                t[j][b][l] = dg[j][(b, l)] + dg[b][(j, l)] - dg[l][(j, b)];
            }
        }
    }
    // dgamma[i][a][j][b] = ∂ᵢΓᵃⱼᵦ.
    let mut dgamma = [[[[0.0; 4]; 4]; 4]; 4];
    for i in 0..4 {
        let dginv = -ginv * dg[i] * ginv;
        for a in 0..4 {
            for j in 0..4 {
                for b in 0..4 {
                    let mut s = 0.0;
                    for l in 0..4 {
                        let dt = d2g[i][j][(b, l)] + d2g[i][b][(j, l)] - d2g[i][l][(j, b)];
                        s += dginv[(a, l)] * t[j][b][l] + ginv[(a, l)] * dt;
                    }
                    dgamma[i][a][j][b] = 0.5 * s;
                }
            }
        }
    }
    let mut r = [[[[0.0; 4]; 4]; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            for i in 0..4 {
                for j in 0..4 {
                    let mut s = dgamma[i][a][j][b] - dgamma[j][a][i][b];
                    for c in 0..4 {
                        s += gamma[a][i][c] * gamma[c][j][b] - gamma[a][j][c] * gamma[c][i][b];
                    }
                    r[a][b][i][j] = s;
                }
            }
        }
    }
    Ok(r)
}

/// `R_c(θᵢ∧θⱼ)` as an endomorphism in the frame, for every ordered pair.
/// With `R_c = −R`, `[R_c(θᵢ, θⱼ)]ₐᵦ = −Rᵃ_{bij}` in frame components.
pub fn curvature_pairs(m: &MetricSpec, p: &P4) -> Result<[[Mat4; 4]; 4]> {
    let r = riemann_coordinate(m, p)?;
    let f = orthonormal_frame(m, p)?;
    Ok(frame_pairs(&r, &f))
}

fn frame_pairs(r: &[[[[f64; 4]; 4]; 4]; 4], f: &FrameData) -> [[Mat4; 4]; 4] {
    let e = &f.e;
    // First contract the two form indices, then conjugate the endomorphism.
    let mut out = [[Mat4::zeros(); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            let mut coord = Mat4::zeros();
            for a in 0..4 {
                for b in 0..4 {
                    let mut s = 0.0;
                    for k in 0..4 {
                        for l in 0..4 {
                            s += r[a][b][k][l] * e[(k, i)] * e[(l, j)];
                        }
                    }
                    coord[(a, b)] = s;
                }
            }
            out[i][j] = -(f.einv * coord * e);
        }
    }
    out
}

/// Apply `R_c` to a bivector given as an antisymmetric matrix, using the
/// pair values: `W = Σ_{i<j} W_{ji} θᵢ∧θⱼ`.
pub fn apply_pairs(pairs: &[[Mat4; 4]; 4], w: &Mat4) -> Mat4 {
    let mut out = Mat4::zeros();
    for i in 0..4 {
        for j in (i + 1)..4 {
            out += pairs[i][j] * w[(j, i)];
        }
    }
    out
}

/// `R_c` as a 6×6 matrix on the orthonormal basis `(I⁺,J⁺,K⁺,I⁻,J⁻,K⁻)/√2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureOperator {
    pub matrix: Matrix6<f64>,
}

impl CurvatureOperator {
    pub fn from_pairs(pairs: &[[Mat4; 4]; 4]) -> Self {
        let basis = BivectorBasis::standard().all().map(|b| b / 2f64.sqrt());
        let images = basis.map(|b| apply_pairs(pairs, &b));
        let matrix = Matrix6::from_fn(|a, b| bivector_inner(&basis[a], &images[b]));
        Self { matrix }
    }

    pub fn symmetry_residual(&self) -> f64 {
        (self.matrix - self.matrix.transpose()).amax()
    }

    /// `R_c(W)` reconstructed from the 6×6 matrix.
    pub fn apply(&self, w: &Mat4) -> Mat4 {
        let basis = BivectorBasis::standard().all().map(|b| b / 2f64.sqrt());
        let c = nalgebra::Vector6::from_fn(|k, _| bivector_inner(&basis[k], w));
        let out = self.matrix * c;
        (0..6).fold(Mat4::zeros(), |acc, k| acc + basis[k] * out[k])
    }
}

pub fn curvature_operator(m: &MetricSpec, p: &P4) -> Result<CurvatureOperator> {
    Ok(CurvatureOperator::from_pairs(&curvature_pairs(m, p)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureBlocks {
    pub w_plus: Matrix3<f64>,
    pub w_minus: Matrix3<f64>,
    pub s: f64,
    pub b: Matrix3<f64>,
}

impl CurvatureBlocks {
    pub fn reassemble(&self) -> CurvatureOperator {
        let d = Matrix3::identity() * (self.s / 12.0);
        let mut m = Matrix6::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&(self.w_plus + d));
        m.fixed_view_mut::<3, 3>(0, 3).copy_from(&self.b);
        m.fixed_view_mut::<3, 3>(3, 0)
            .copy_from(&self.b.transpose());
        m.fixed_view_mut::<3, 3>(3, 3)
            .copy_from(&(self.w_minus + d));
        CurvatureOperator { matrix: m }
    }

    pub fn w_plus_norm(&self) -> f64 {
        self.w_plus.norm()
    }

    pub fn w_minus_norm(&self) -> f64 {
        self.w_minus.norm()
    }

    pub fn b_norm(&self) -> f64 {
        self.b.norm()
    }
}

/// Split the operator as `[[W⁺ + s/12, B], [Bᵀ, W⁻ + s/12]]`.
pub fn decompose(r: &CurvatureOperator) -> Result<CurvatureBlocks> {
    let m = &r.matrix;
    let pp: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into();
    let mm: Matrix3<f64> = m.fixed_view::<3, 3>(3, 3).into();
    let pm: Matrix3<f64> = m.fixed_view::<3, 3>(0, 3).into();
    let plus = 4.0 * pp.trace();
    let minus = 4.0 * mm.trace();
    if (plus - minus).abs() > DECOMPOSE_TOL * (1.0 + m.amax()) {
        return Err(RiemannError::DecompositionInconsistent { plus, minus });
    }
    let s = plus;
    let d = Matrix3::identity() * (s / 12.0);
    Ok(CurvatureBlocks {
        w_plus: pp - d,
        w_minus: mm - d,
        s,
        b: pm,
    })
}

/// Everything the twistor engine needs at one base point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointGeometry {
    pub point: P4,
    pub frame: FrameData,
    pub connection: ConnectionData,
    pub pairs: [[Mat4; 4]; 4],
    pub operator: CurvatureOperator,
}

impl PointGeometry {
    pub fn at(m: &MetricSpec, p: &P4) -> Result<Self> {
        let connection = christoffel(m, p)?;
        let pairs = curvature_pairs(m, p)?;
        Ok(Self {
            point: *p,
            frame: orthonormal_frame(m, p)?,
            connection,
            operator: CurvatureOperator::from_pairs(&pairs),
            pairs,
        })
    }

    pub fn apply(&self, w: &Mat4) -> Mat4 {
        apply_pairs(&self.pairs, w)
    }
}

/// The generalized connection `η(θᵢ) = diag(Υᵢ, Υᵢ)` and curvature
/// `R_g = diag(R_c, R_c)`, both in the `PM` basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralizedCurvature {
    pub eta: [Mat8; 4],
    pub pairs: [[Mat4; 4]; 4],
}

impl GeneralizedCurvature {
    pub fn apply(&self, w: &Mat4) -> Mat8 {
        let r = apply_pairs(&self.pairs, w);
        block_diag(&r, &r)
    }

    pub fn pair(&self, i: usize, j: usize) -> Mat8 {
        block_diag(&self.pairs[i][j], &self.pairs[i][j])
    }
}

pub fn generalized_curvature(m: &MetricSpec, p: &P4) -> Result<GeneralizedCurvature> {
    let conn = christoffel(m, p)?;
    let pairs = curvature_pairs(m, p)?;
    Ok(GeneralizedCurvature {
        eta: conn.upsilon.map(|u| block_diag(&u, &u)),
        pairs,
    })
}

/// `−(dη + η∧η)(θᵢ, θⱼ)` computed by differentiating the connection form,
/// an independent route to `R_c` on frame pairs.
pub fn curvature_from_connection(m: &MetricSpec, p: &P4) -> Result<[[Mat4; 4]; 4]> {
    let h = m.step;
    m.check(p, 4.0 * h)?;
    // Coordinate components η_μ = Σᵢ Υᵢ (e⁻¹)ⁱ_μ.
    let eta_at = |q: &P4| -> Result<[Mat4; 4]> {
        let conn = christoffel(m, q)?;
        let f = orthonormal_frame(m, q)?;
        Ok(std::array::from_fn(|mu| {
            (0..4).fold(Mat4::zeros(), |acc, i| {
                acc + conn.upsilon[i] * f.einv[(i, mu)]
            })
        }))
    };
    let eta = eta_at(p)?;
    let mut deta = [[Mat4::zeros(); 4]; 4]; // deta[ν][μ] = ∂_ν η_μ
    for (nu, row) in deta.iter_mut().enumerate() {
        for (o, w) in STENCIL {
            let mut q = *p;
            q[nu] += o * h;
            let e = eta_at(&q)?;
            for mu in 0..4 {
                row[mu] += e[mu] * w;
            }
        }
        for d in row.iter_mut() {
            *d /= h;
        }
    }
    let f = orthonormal_frame(m, p)?;
    let mut omega = [[Mat4::zeros(); 4]; 4];
    for mu in 0..4 {
        for nu in 0..4 {
            omega[mu][nu] = deta[mu][nu] - deta[nu][mu] + eta[mu] * eta[nu] - eta[nu] * eta[mu];
        }
    }
    let mut out = [[Mat4::zeros(); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            let mut s = Mat4::zeros();
            for mu in 0..4 {
                for nu in 0..4 {
                    s += omega[mu][nu] * (f.e[(mu, i)] * f.e[(nu, j)]);
                }
            }
            out[i][j] = -s;
        }
    }
    Ok(out)
}

/// Largest entry of `−(dη+η∧η) − R_c` over all frame pairs.
pub fn connection_curvature_residual(m: &MetricSpec, p: &P4) -> Result<f64> {
    let a = curvature_from_connection(m, p)?;
    let b = curvature_pairs(m, p)?;
    let mut r: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            r = r.max((a[i][j] - b[i][j]).amax());
        }
    }
    Ok(r)
}

pub const CATALOG: [&str; 6] = [
    "flat",
    "flat-perturbed",
    "s4",
    "fubini-study",
    "eguchi-hanson",
    "schwarzschild",
];

pub fn metric_by_name(name: &str) -> Result<MetricSpec> {
    let unit = DomainBox::uniform(-1.0, 1.0);
    let built = |n: &str, d: DomainBox, g: Box<dyn Fn(&P4) -> Mat4 + Send + Sync>| {
        MetricSpec::new(n, d, g, Provenance::BuiltIn)
    };
    let spec = match name {
        "flat" => built(name, unit, Box::new(|_| Mat4::identity())),
        "flat-perturbed" => built(name, unit, Box::new(flat_perturbed)),
        "s4" => built(
            name,
            unit,
            Box::new(|p: &P4| {
                let c = 2.0 / (1.0 + p.norm_squared());
                Mat4::identity() * (c * c)
            }),
        ),
        "fubini-study" => built(name, unit, Box::new(fubini_study)),
        "eguchi-hanson" => built(
            name,
            DomainBox::new([1.2, 0.6, -1.0, -1.0], [2.0, 2.5, 1.0, 1.0]),
            Box::new(eguchi_hanson),
        ),
        "schwarzschild" => built(
            name,
            DomainBox::new([-1.0, 2.5, 0.6, -1.0], [1.0, 4.0, 2.5, 1.0]),
            Box::new(schwarzschild),
        ),
        other => return Err(RiemannError::UnknownMetric(other.to_string())),
    };
    Ok(spec)
}

/// Pullback of the Euclidean metric by `φ(x) = x + ε(sin x₂, sin x₃, sin x₄, sin x₁)`.
fn flat_perturbed(p: &P4) -> Mat4 {
    const EPS: f64 = 0.15;
    let mut d = Mat4::identity();
    d[(0, 1)] = EPS * p[1].cos();
    d[(1, 2)] = EPS * p[2].cos();
    d[(2, 3)] = EPS * p[3].cos();
    d[(3, 0)] = EPS * p[0].cos();
    d.transpose() * d
}

/// Fubini–Study on the affine chart ℂ² ⊂ ℂP², `z = (x₁+ix₂, x₃+ix₄)`.
fn fubini_study(p: &P4) -> Mat4 {
    let r2 = 1.0 + p.norm_squared();
    let a = *p;
    let b = P4::new(-p[1], p[0], -p[3], p[2]);
    (Mat4::identity() * r2 - a * a.transpose() - b * b.transpose()) / (r2 * r2)
}

/// Eguchi–Hanson with `a = 1` in `(r, θ, φ, ψ)`.
fn eguchi_hanson(p: &P4) -> Mat4 {
    let (r, th) = (p[0], p[1]);
    let f = 1.0 - 1.0 / r.powi(4);
    let q = r * r / 4.0;
    let mut g = Mat4::zeros();
    g[(0, 0)] = 1.0 / f;
    g[(1, 1)] = q;
    g[(2, 2)] = q * (th.sin().powi(2) + f * th.cos().powi(2));
    g[(3, 3)] = q * f;
    g[(2, 3)] = q * f * th.cos();
    g[(3, 2)] = g[(2, 3)];
    g
}

/// Euclidean Schwarzschild with `m = 1` in `(τ, r, θ, φ)`.
fn schwarzschild(p: &P4) -> Mat4 {
    let (r, th) = (p[1], p[2]);
    let f = 1.0 - 2.0 / r;
    Mat4::from_diagonal(&P4::new(f, 1.0 / f, r * r, r * r * th.sin().powi(2)))
}
