//! Chart-level differential calculus with fourth-order central differences:
//! Lie brackets, exterior derivatives, Lie derivatives of 1-forms, the
//! Courant bracket on `TM ⊕ T*M` and Nijenhuis tensors.
//!
//! Everything is generic over the chart dimension `N` so the same code runs
//! on ℝ⁴ charts of the base and on the 8-dimensional charts of the twistor
//! space used by the numeric oracle.

use nalgebra::{SMatrix, SVector};
use thiserror::Error;

pub type Point<const N: usize> = SVector<f64, N>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalculusError {
    #[error("point is within {margin:.3e} of the chart boundary on axis {axis} (coordinate {coordinate})")]
    Domain {
        axis: usize,
        coordinate: f64,
        margin: f64,
    },
}

/// Axis-aligned chart domain `[lo, hi]`; infinite bounds are allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartBox<const N: usize> {
    pub lo: [f64; N],
    pub hi: [f64; N],
}

impl<const N: usize> ChartBox<N> {
    pub fn new(lo: [f64; N], hi: [f64; N]) -> Self {
        Self { lo, hi }
    }

    pub fn uniform(lo: f64, hi: f64) -> Self {
        Self {
            lo: [lo; N],
            hi: [hi; N],
        }
    }

    /// Euclidean diameter over the finite axes.
    pub fn diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .filter(|(l, h)| l.is_finite() && h.is_finite())
            .map(|(l, h)| (h - l).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Errors unless `p` is at least `margin` inside every finite face.
    pub fn check_interior(&self, p: &Point<N>, margin: f64) -> Result<(), CalculusError> {
        for axis in 0..N {
            let x = p[axis];
            if !(x - margin >= self.lo[axis] && x + margin <= self.hi[axis]) {
                return Err(CalculusError::Domain {
                    axis,
                    coordinate: x,
                    margin,
                });
            }
        }
        Ok(())
    }
}

fn unit<const N: usize>(i: usize) -> Point<N> {
    let mut v = Point::<N>::zeros();
    v[i] = 1.0;
    v
}

const STENCIL_OFFSETS: [f64; 4] = [-2.0, -1.0, 1.0, 2.0];
const STENCIL_WEIGHTS: [f64; 4] = [1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0];

/// Fourth-order central-difference derivative of `f` along `dir` at `p`.
pub fn directional<const N: usize, const M: usize>(
    f: impl Fn(&Point<N>) -> SVector<f64, M>,
    p: &Point<N>,
    dir: &Point<N>,
    h: f64,
) -> SVector<f64, M> {
    let mut acc = SVector::<f64, M>::zeros();
    for (o, w) in STENCIL_OFFSETS.iter().zip(STENCIL_WEIGHTS) {
        acc += f(&(p + dir * (o * h))) * w;
    }
    acc / h
}

/// Jacobian `J[(i, j)] = ∂ⱼ fᵢ` at `p`.
pub fn jacobian<const N: usize, const M: usize>(
    f: impl Fn(&Point<N>) -> SVector<f64, M>,
    p: &Point<N>,
    h: f64,
) -> SMatrix<f64, M, N> {
    let mut jac = SMatrix::<f64, M, N>::zeros();
    for j in 0..N {
        let col = directional(&f, p, &unit::<N>(j), h);
        jac.set_column(j, &col);
    }
    jac
}

/// Gradient of a scalar function.
pub fn gradient<const N: usize>(f: impl Fn(&Point<N>) -> f64, p: &Point<N>, h: f64) -> Point<N> {
    let wrapped = |q: &Point<N>| SVector::<f64, 1>::new(f(q));
    jacobian(wrapped, p, h).transpose()
}

/// A section `X + ξ` of `TM ⊕ T*M` at one point, in coordinate components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenVec<const N: usize> {
    pub x: SVector<f64, N>,
    pub xi: SVector<f64, N>,
}

impl<const N: usize> GenVec<N> {
    pub fn new(x: SVector<f64, N>, xi: SVector<f64, N>) -> Self {
        Self { x, xi }
    }

    pub fn zeros() -> Self {
        Self {
            x: SVector::zeros(),
            xi: SVector::zeros(),
        }
    }

    pub fn vector(x: SVector<f64, N>) -> Self {
        Self {
            x,
            xi: SVector::zeros(),
        }
    }

    pub fn form(xi: SVector<f64, N>) -> Self {
        Self {
            x: SVector::zeros(),
            xi,
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            x: self.x * s,
            xi: self.xi * s,
        }
    }

    /// `½(ξ(Y) + η(X))`.
    pub fn pairing(&self, other: &Self) -> f64 {
        0.5 * (self.xi.dot(&other.x) + other.xi.dot(&self.x))
    }

    pub fn norm(&self) -> f64 {
        (self.x.norm_squared() + self.xi.norm_squared()).sqrt()
    }
}

impl<const N: usize> std::ops::Add for GenVec<N> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            x: self.x + o.x,
            xi: self.xi + o.xi,
        }
    }
}

impl<const N: usize> std::ops::Sub for GenVec<N> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self {
            x: self.x - o.x,
            xi: self.xi - o.xi,
        }
    }
}

/// Value and first derivatives of a generalized field at a point.
struct GenJet<const N: usize> {
    value: GenVec<N>,
    dx: SMatrix<f64, N, N>,
    dxi: SMatrix<f64, N, N>,
}

/// Finite-difference calculus on a chart with step `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calculus<const N: usize> {
    pub h: f64,
    pub domain: Option<ChartBox<N>>,
}

impl<const N: usize> Calculus<N> {
    pub fn new(h: f64) -> Self {
        Self { h, domain: None }
    }

    /// Step `1e-3 × diameter` on the given domain.
    pub fn for_domain(domain: ChartBox<N>) -> Self {
        let d = domain.diameter();
        let h = if d > 0.0 { 1e-3 * d } else { 1e-3 };
        Self {
            h,
            domain: Some(domain),
        }
    }

    pub fn with_step(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    fn check(&self, p: &Point<N>) -> Result<(), CalculusError> {
        match &self.domain {
            Some(b) => b.check_interior(p, 2.0 * self.h),
            None => Ok(()),
        }
    }

    fn jet(&self, f: impl Fn(&Point<N>) -> GenVec<N>, p: &Point<N>) -> GenJet<N> {
        let value = f(p);
        let mut dx = SMatrix::<f64, N, N>::zeros();
        let mut dxi = SMatrix::<f64, N, N>::zeros();
        for j in 0..N {
            let mut cx = SVector::<f64, N>::zeros();
            let mut cxi = SVector::<f64, N>::zeros();
            for (o, w) in STENCIL_OFFSETS.iter().zip(STENCIL_WEIGHTS) {
                let mut q = *p;
                q[j] += o * self.h;
                let v = f(&q);
                cx += v.x * w;
                cxi += v.xi * w;
            }
            dx.set_column(j, &(cx / self.h));
            dxi.set_column(j, &(cxi / self.h));
        }
        GenJet { value, dx, dxi }
    }

    /// `[X, Y] = (DY)X − (DX)Y`.
    pub fn lie_bracket(
        &self,
        x: impl Fn(&Point<N>) -> SVector<f64, N>,
        y: impl Fn(&Point<N>) -> SVector<f64, N>,
        p: &Point<N>,
    ) -> Result<SVector<f64, N>, CalculusError> {
        self.check(p)?;
        let dx = jacobian(&x, p, self.h);
        let dy = jacobian(&y, p, self.h);
        Ok(dy * x(p) - dx * y(p))
    }

    /// `(dξ)ᵢⱼ = ∂ᵢξⱼ − ∂ⱼξᵢ`.
    pub fn exterior_d(
        &self,
        form: impl Fn(&Point<N>) -> SVector<f64, N>,
        p: &Point<N>,
    ) -> Result<SMatrix<f64, N, N>, CalculusError> {
        self.check(p)?;
        let d = jacobian(&form, p, self.h);
        Ok(d.transpose() - d)
    }

    /// Differential of a function, `df = ∂ᵢf dxⁱ`.
    pub fn d_function(
        &self,
        f: impl Fn(&Point<N>) -> f64,
        p: &Point<N>,
    ) -> Result<SVector<f64, N>, CalculusError> {
        self.check(p)?;
        Ok(gradient(f, p, self.h))
    }

    /// `(dw)ᵢⱼₖ = ∂ᵢwⱼₖ + ∂ⱼwₖᵢ + ∂ₖwᵢⱼ`, returned as `out[i][(j, k)]`.
    pub fn exterior_d_two_form(
        &self,
        w: impl Fn(&Point<N>) -> SMatrix<f64, N, N>,
        p: &Point<N>,
    ) -> Result<Vec<SMatrix<f64, N, N>>, CalculusError> {
        self.check(p)?;
        let partials: Vec<SMatrix<f64, N, N>> = (0..N)
            .map(|i| {
                let dir = unit::<N>(i);
                let mut acc = SMatrix::<f64, N, N>::zeros();
                for (o, wt) in STENCIL_OFFSETS.iter().zip(STENCIL_WEIGHTS) {
                    acc += w(&(p + dir * (o * self.h))) * wt;
                }
                acc / self.h
            })
            .collect();
        let mut out = vec![SMatrix::<f64, N, N>::zeros(); N];
        for i in 0..N {
            for j in 0..N {
                for k in 0..N {
                    out[i][(j, k)] =
                        partials[i][(j, k)] + partials[j][(k, i)] + partials[k][(i, j)];
                }
            }
        }
        Ok(out)
    }

    /// `ℒ_X ξ = i_X dξ + d(i_X ξ)`.
    pub fn lie_derivative_form(
        &self,
        x: impl Fn(&Point<N>) -> SVector<f64, N>,
        xi: impl Fn(&Point<N>) -> SVector<f64, N>,
        p: &Point<N>,
    ) -> Result<SVector<f64, N>, CalculusError> {
        let dxi = self.exterior_d(&xi, p)?;
        let contraction = self.d_function(|q| x(q).dot(&xi(q)), p)?;
        Ok(dxi.transpose() * x(p) + contraction)
    }

    /// `[X+ξ, Y+η] = [X,Y] + ℒ_Xη − ℒ_Yξ − ½ d(i_Xη − i_Yξ)`.
    pub fn courant_bracket(
        &self,
        a: impl Fn(&Point<N>) -> GenVec<N>,
        b: impl Fn(&Point<N>) -> GenVec<N>,
        p: &Point<N>,
    ) -> Result<GenVec<N>, CalculusError> {
        self.check(p)?;
        let ja = self.jet(&a, p);
        let jb = self.jet(&b, p);
        Ok(courant_from_jets(&ja, &jb))
    }

    /// `Nij(Y, Z) = [𝒥Y, 𝒥Z] − 𝒥[𝒥Y, Z] − 𝒥[Y, 𝒥Z] − [Y, Z]` for a field of
    /// generalized structures given by its action `j(q, v)`.
    pub fn nijenhuis(
        &self,
        j: impl Fn(&Point<N>, &GenVec<N>) -> GenVec<N>,
        y: impl Fn(&Point<N>) -> GenVec<N>,
        z: impl Fn(&Point<N>) -> GenVec<N>,
        p: &Point<N>,
    ) -> Result<GenVec<N>, CalculusError> {
        self.check(p)?;
        let jy = |q: &Point<N>| j(q, &y(q));
        let jz = |q: &Point<N>| j(q, &z(q));
        let jet_y = self.jet(&y, p);
        let jet_z = self.jet(&z, p);
        let jet_jy = self.jet(jy, p);
        let jet_jz = self.jet(jz, p);
        let t1 = courant_from_jets(&jet_jy, &jet_jz);
        let t2 = j(p, &courant_from_jets(&jet_jy, &jet_z));
        let t3 = j(p, &courant_from_jets(&jet_y, &jet_jz));
        let t4 = courant_from_jets(&jet_y, &jet_z);
        Ok(t1 - t2 - t3 - t4)
    }

    /// Nijenhuis tensor of an almost complex structure with Lie brackets:
    /// `N(X, Y) = [JX, JY] − J[JX, Y] − J[X, JY] − [X, Y]`.
    pub fn almost_complex_nijenhuis(
        &self,
        j: impl Fn(&Point<N>, &SVector<f64, N>) -> SVector<f64, N>,
        x: impl Fn(&Point<N>) -> SVector<f64, N>,
        y: impl Fn(&Point<N>) -> SVector<f64, N>,
        p: &Point<N>,
    ) -> Result<SVector<f64, N>, CalculusError> {
        self.check(p)?;
        let jx = |q: &Point<N>| j(q, &x(q));
        let jy = |q: &Point<N>| j(q, &y(q));
        let (vx, dx) = (x(p), jacobian(&x, p, self.h));
        let (vy, dy) = (y(p), jacobian(&y, p, self.h));
        let (vjx, djx) = (jx(p), jacobian(jx, p, self.h));
        let (vjy, djy) = (jy(p), jacobian(jy, p, self.h));
        let br = |va: &SVector<f64, N>,
                  da: &SMatrix<f64, N, N>,
                  vb: &SVector<f64, N>,
                  db: &SMatrix<f64, N, N>| { db * va - da * vb };
        let t1 = br(&vjx, &djx, &vjy, &djy);
        let t2 = j(p, &br(&vjx, &djx, &vy, &dy));
        let t3 = j(p, &br(&vx, &dx, &vjy, &djy));
        let t4 = br(&vx, &dx, &vy, &dy);
        Ok(t1 - t2 - t3 - t4)
    }
}

fn courant_from_jets<const N: usize>(a: &GenJet<N>, b: &GenJet<N>) -> GenVec<N> {
    let (x, xi) = (a.value.x, a.value.xi);
    let (y, eta) = (b.value.x, b.value.xi);
    let lie = b.dx * x - a.dx * y;
    // d(i_X η) = (DX)ᵀη + (Dη)ᵀX, and dη = (Dη)ᵀ − Dη.
    let d_ix_eta = a.dx.transpose() * eta + b.dxi.transpose() * x;
    let d_iy_xi = b.dx.transpose() * xi + a.dxi.transpose() * y;
    let d_eta = b.dxi.transpose() - b.dxi;
    let d_xi = a.dxi.transpose() - a.dxi;
    let lie_x_eta = d_eta.transpose() * x + d_ix_eta;
    let lie_y_xi = d_xi.transpose() * y + d_iy_xi;
    GenVec {
        x: lie,
        xi: lie_x_eta - lie_y_xi - (d_ix_eta - d_iy_xi) * 0.5,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix4, Vector4};

    type P4 = Point<4>;

    #[test]
    fn coordinate_fields_commute() {
        let c = Calculus::<4>::new(1e-3);
        let p = P4::new(0.1, 0.2, 0.3, 0.4);
        let e1 = |_: &P4| Vector4::new(1.0, 0.0, 0.0, 0.0);
        let e2 = |_: &P4| Vector4::new(0.0, 1.0, 0.0, 0.0);
        assert!(c.lie_bracket(e1, e2, &p).unwrap().norm() < 1e-12);
    }

    #[test]
    fn linear_field_bracket() {
        let c = Calculus::<4>::new(1e-3);
        let p = P4::new(0.3, -0.2, 0.5, 0.1);
        let x1d2 = |q: &P4| Vector4::new(0.0, q[0], 0.0, 0.0);
        let d1 = |_: &P4| Vector4::new(1.0, 0.0, 0.0, 0.0);
        let br = c.lie_bracket(x1d2, d1, &p).unwrap();
        assert!((br - Vector4::new(0.0, -1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn exterior_derivative_of_x1_dx2() {
        let c = Calculus::<4>::new(1e-3);
        let p = P4::new(0.3, -0.2, 0.5, 0.1);
        let form = |q: &P4| Vector4::new(0.0, q[0], 0.0, 0.0);
        let d = c.exterior_d(form, &p).unwrap();
        let mut expected = Matrix4::zeros();
        expected[(0, 1)] = 1.0;
        expected[(1, 0)] = -1.0;
        assert!((d - expected).amax() < 1e-12);
    }

    #[test]
    fn d_squared_vanishes_with_numeric_gradient() {
        let c = Calculus::<4>::new(1e-3);
        let p = P4::new(0.3, -0.2, 0.5, 0.1);
        let f = |q: &P4| q[0] * q[1] * q[1];
        let df = |q: &P4| gradient(f, q, 1e-3);
        let ddf = c.exterior_d(df, &p).unwrap();
        assert!(ddf.amax() < 1e-6, "{}", ddf.amax());
    }

    #[test]
    fn domain_errors_near_boundary() {
        let c = Calculus::<4>::for_domain(ChartBox::uniform(-1.0, 1.0));
        assert!((c.h - 4e-3).abs() < 1e-15);
        let p = P4::new(0.999, 0.0, 0.0, 0.0);
        let e = |_: &P4| Vector4::new(1.0, 0.0, 0.0, 0.0);
        assert!(matches!(
            c.lie_bracket(e, e, &p),
            Err(CalculusError::Domain { axis: 0, .. })
        ));
    }
}
