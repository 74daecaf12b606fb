//! Dirac algebra: 4x4 complex matrices, the gamma basis, and a small
//! Hermitian eigensolver for operator norms.

use crate::scalar::{r, Cx, Real};
use num_complex::Complex;

/// Dense 4x4 complex matrix, row major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat4<T: Real>(pub [[Cx<T>; 4]; 4]);

impl<T: Real> Mat4<T> {
    pub fn zero() -> Self {
        Mat4([[Cx::new(T::zero(), T::zero()); 4]; 4])
    }

    pub fn identity() -> Self {
        let mut m = Self::zero();
        for i in 0..4 {
            m.0[i][i] = Cx::new(T::one(), T::zero());
        }
        m
    }

    pub fn diag(d: [Cx<T>; 4]) -> Self {
        let mut m = Self::zero();
        for i in 0..4 {
            m.0[i][i] = d[i];
        }
        m
    }

    pub fn scale(&self, a: Cx<T>) -> Self {
        let mut m = *self;
        for row in m.0.iter_mut() {
            for e in row.iter_mut() {
                *e *= a;
            }
        }
        m
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut m = *self;
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] += other.0[i][j];
            }
        }
        m
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut m = *self;
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] -= other.0[i][j];
            }
        }
        m
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut m = Self::zero();
        for i in 0..4 {
            for k in 0..4 {
                let a = self.0[i][k];
                if a.norm_sqr().is_zero() {
                    continue;
                }
                for j in 0..4 {
                    m.0[i][j] += a * other.0[k][j];
                }
            }
        }
        m
    }

    pub fn mul_vec(&self, v: [Cx<T>; 4]) -> [Cx<T>; 4] {
        let mut out = [Cx::new(T::zero(), T::zero()); 4];
        for i in 0..4 {
            for j in 0..4 {
                out[i] += self.0[i][j] * v[j];
            }
        }
        out
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        let mut m = Self::zero();
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] = self.0[j][i].conj();
            }
        }
        m
    }

    pub fn frobenius(&self) -> T {
        let mut s = T::zero();
        for row in self.0.iter() {
            for e in row.iter() {
                s += e.norm_sqr();
            }
        }
        s.sqrt()
    }

    pub fn max_abs(&self) -> T {
        let mut s = T::zero();
        for row in self.0.iter() {
            for e in row.iter() {
                s = num_traits::Float::max(s, e.norm());
            }
        }
        s
    }

    /// Largest singular value, i.e. the L2 -> L2 operator norm.
    pub fn op_norm(&self) -> T {
        let h = self.dagger().mul(self);
        let ev = hermitian_eigenvalues(&h);
        let mut top = T::zero();
        for &e in ev.iter() {
            top = num_traits::Float::max(top, e);
        }
        num_traits::Float::max(top, T::zero()).sqrt()
    }
}

/// Eigenvalues of a Hermitian 4x4 matrix by cyclic complex Jacobi rotations.
/// Returns the four (real) eigenvalues in unspecified order.
pub fn hermitian_eigenvalues<T: Real>(h: &Mat4<T>) -> [T; 4] {
    let mut a = *h;
    // Symmetrize against roundoff in the input.
    for i in 0..4 {
        for j in (i + 1)..4 {
            let avg = (a.0[i][j] + a.0[j][i].conj()).scale(r::<T>(0.5));
            a.0[i][j] = avg;
            a.0[j][i] = avg.conj();
        }
        a.0[i][i] = Cx::new(a.0[i][i].re, T::zero());
    }
    let scale = num_traits::Float::max(a.frobenius(), T::min_positive_value());
    let tol = scale * r::<T>(1e-30).max(T::epsilon() * r::<T>(4.0));
    for _sweep in 0..40 {
        let mut off = T::zero();
        for p in 0..4 {
            for q in (p + 1)..4 {
                off += a.0[p][q].norm_sqr();
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..4 {
            for q in (p + 1)..4 {
                let g = a.0[p][q];
                let rad = g.norm();
                if rad <= tol {
                    continue;
                }
                let phase = g / Cx::new(rad, T::zero());
                let alpha = a.0[p][p].re;
                let beta = a.0[q][q].re;
                let tau = (alpha - beta) / (rad + rad);
                let sgn = if tau >= T::zero() { T::one() } else { -T::one() };
                let t = sgn / (tau.abs() + (T::one() + tau * tau).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                // Unitary U = I except U[p][p]=c, U[p][q]=-s*phase,
                // U[q][p]=s*conj(phase), U[q][q]=c; apply a <- U^H a U.
                let cs = Cx::new(c, T::zero());
                let sp = phase.scale_re(s);
                for k in 0..4 {
                    let akp = a.0[k][p];
                    let akq = a.0[k][q];
                    a.0[k][p] = akp * cs + akq * sp.conj();
                    a.0[k][q] = akq * cs - akp * sp;
                }
                for k in 0..4 {
                    let apk = a.0[p][k];
                    let aqk = a.0[q][k];
                    a.0[p][k] = apk * cs + aqk * sp;
                    a.0[q][k] = aqk * cs - apk * sp.conj();
                }
            }
        }
    }
    [a.0[0][0].re, a.0[1][1].re, a.0[2][2].re, a.0[3][3].re]
}

trait ScaleRe<T: Real> {
    fn scale_re(self, s: T) -> Self;
}

impl<T: Real> ScaleRe<T> for Cx<T> {
    #[inline]
    fn scale_re(self, s: T) -> Self {
        Complex::new(self.re * s, self.im * s)
    }
}

#[inline]
fn c<T: Real>(re: f64, im: f64) -> Cx<T> {
    Cx::new(r(re), r(im))
}

/// gamma^0 = diag(1, 1, -1, -1).
pub fn gamma0<T: Real>() -> Mat4<T> {
    Mat4::diag([c(1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0), c(-1.0, 0.0)])
}

/// Spatial gamma matrices, `gamma^j = [[0, p_j], [-p_j, 0]]` in 2x2 blocks.
///
/// The Pauli-type triple used here is `p_1 = sigma_1`, `p_2 = -sigma_2`,
/// `p_3 = -sigma_3`; it satisfies the same quaternionic relations
/// (`p_1 p_2 = i p_3` cyclically) as the standard triple, so the Clifford
/// relations hold, while making the two partial-wave sections
/// `(0, 1)` and `(w_1 + i w_2, w_3)`, `w = x/|x|`, exactly invariant under
/// the free Dirac flow. See `angular::radial_subspace` for that pairing.
pub fn gamma<T: Real>(j: usize) -> Mat4<T> {
    let p: [[Cx<T>; 4]; 3] = [
        // p_1 = [[0, 1], [1, 0]]
        [c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
        // p_2 = [[0, i], [-i, 0]]
        [c(0.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(0.0, 0.0)],
        // p_3 = [[-1, 0], [0, 1]]
        [c(-1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)],
    ];
    assert!((1..=3).contains(&j), "spatial index must be 1..=3");
    let b = p[j - 1];
    let mut m = Mat4::zero();
    // upper-right block +p
    m.0[0][2] = b[0];
    m.0[0][3] = b[1];
    m.0[1][2] = b[2];
    m.0[1][3] = b[3];
    // lower-left block -p
    m.0[2][0] = -b[0];
    m.0[2][1] = -b[1];
    m.0[3][0] = -b[2];
    m.0[3][1] = -b[3];
    m
}

/// beta = gamma^0, the mass matrix of the Hamiltonian form.
pub fn beta<T: Real>() -> Mat4<T> {
    gamma0()
}

/// alpha_j = gamma^0 gamma^j, the (Hermitian) velocity matrices.
pub fn alpha<T: Real>(j: usize) -> Mat4<T> {
    gamma0().mul(&gamma(j))
}

/// Pointwise Dirac pairing `psi^dagger gamma^0 phi` of two C^4 values.
#[inline]
pub fn dirac_pair<T: Real>(psi: &[Cx<T>; 4], phi: &[Cx<T>; 4]) -> Cx<T> {
    // gamma^0 = diag(1,1,-1,-1): pairing is conj(psi_0)phi_0 + conj(psi_1)phi_1
    // - conj(psi_2)phi_2 - conj(psi_3)phi_3.
    psi[0].conj() * phi[0] + psi[1].conj() * phi[1]
        - psi[2].conj() * phi[2]
        - psi[3].conj() * phi[3]
}
