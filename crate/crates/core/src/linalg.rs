//! Minimal complex 2x2 algebra for spin-1/2 propagation.
//!
//! Everything here is closed form; no general eigensolver is needed because every
//! Hamiltonian in the crate is of the form `b · σ` per qubit.

use num_complex::Complex64;

pub type C64 = Complex64;
pub type Spinor = [C64; 2];

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

pub fn inner(a: &Spinor, b: &Spinor) -> C64 {
    a[0].conj() * b[0] + a[1].conj() * b[1]
}

pub fn norm_sqr(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Bloch vector `(⟨σx⟩, ⟨σy⟩, ⟨σz⟩)` of a normalized spinor.
pub fn bloch_vector(psi: &Spinor) -> [f64; 3] {
    let off = psi[0].conj() * psi[1];
    [
        2.0 * off.re,
        2.0 * off.im,
        psi[0].norm_sqr() - psi[1].norm_sqr(),
    ]
}

pub fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2(pub [[C64; 2]; 2]);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([[ONE, ZERO], [ZERO, ONE]]);

    /// `exp(-i dt b·σ)`.
    pub fn exp_su2(b: [f64; 3], dt: f64) -> Mat2 {
        let m = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
        if m == 0.0 {
            return Mat2::IDENTITY;
        }
        let (sn, c) = (m * dt).sin_cos();
        let s = sn / m;
        Mat2([
            [C64::new(c, -s * b[2]), C64::new(-s * b[1], -s * b[0])],
            [C64::new(s * b[1], -s * b[0]), C64::new(c, s * b[2])],
        ])
    }

    pub fn mul(&self, rhs: &Mat2) -> Mat2 {
        let a = &self.0;
        let b = &rhs.0;
        Mat2([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }

    pub fn apply(&self, v: &Spinor) -> Spinor {
        let a = &self.0;
        [
            a[0][0] * v[0] + a[0][1] * v[1],
            a[1][0] * v[0] + a[1][1] * v[1],
        ]
    }

    pub fn dagger(&self) -> Mat2 {
        let a = &self.0;
        Mat2([
            [a[0][0].conj(), a[1][0].conj()],
            [a[0][1].conj(), a[1][1].conj()],
        ])
    }

    /// Frobenius distance from the identity of `U†U`.
    pub fn unitarity_defect(&self) -> f64 {
        let p = self.dagger().mul(self);
        let mut acc = 0.0;
        for (i, row) in p.0.iter().enumerate() {
            for (j, z) in row.iter().enumerate() {
                let target = if i == j { ONE } else { ZERO };
                acc += (z - target).norm_sqr();
            }
        }
        acc.sqrt()
    }

    /// `(A ⊗ B) v` for a two-qubit amplitude vector ordered `|q1 q2⟩`.
    pub fn kron_apply(a: &Mat2, b: &Mat2, v: &[C64; 4]) -> [C64; 4] {
        let mut out = [ZERO; 4];
        for (i1, a_row) in a.0.iter().enumerate() {
            for (i2, b_row) in b.0.iter().enumerate() {
                let mut acc = ZERO;
                for (j1, aij) in a_row.iter().enumerate() {
                    for (j2, bij) in b_row.iter().enumerate() {
                        acc += aij * bij * v[2 * j1 + j2];
                    }
                }
                out[2 * i1 + i2] = acc;
            }
        }
        out
    }
}
