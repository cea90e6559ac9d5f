//! Helpers shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{SMatrix, SVector};
use rand::Rng;

pub type V4 = SVector<f64, 4>;

/// Quadratic vector field with an exact Jacobian.
#[derive(Debug, Clone)]
pub struct Poly {
    pub c: [f64; 4],
    pub a: [[f64; 4]; 4],
    pub b: [[[f64; 4]; 4]; 4],
}

impl Poly {
    /// Coefficients uniform in `[-1, 1)`.
    pub fn random(rng: &mut impl Rng) -> Self {
        let mut r = || rng.random_range(-1.0..1.0);
        let mut p = Poly {
            c: [0.0; 4],
            a: [[0.0; 4]; 4],
            b: [[[0.0; 4]; 4]; 4],
        };
        for i in 0..4 {
            p.c[i] = r();
            for j in 0..4 {
                p.a[i][j] = r();
                for k in 0..4 {
                    p.b[i][j][k] = r();
                }
            }
        }
        p
    }

    pub fn eval(&self, p: &V4) -> V4 {
        V4::from_fn(|i, _| {
            let mut v = self.c[i];
            for j in 0..4 {
                v += self.a[i][j] * p[j];
                for k in 0..4 {
                    v += self.b[i][j][k] * p[j] * p[k];
                }
            }
            v
        })
    }

    /// `J[(i, j)] = ∂ⱼvᵢ`.
    pub fn jac(&self, p: &V4) -> SMatrix<f64, 4, 4> {
        SMatrix::from_fn(|i, j| {
            let mut v = self.a[i][j];
            for k in 0..4 {
                v += (self.b[i][j][k] + self.b[i][k][j]) * p[k];
            }
            v
        })
    }
}
