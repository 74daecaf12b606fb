//! Scalar abstraction for the spectral kernel.

use num_complex::Complex;

/// Floating-point scalar the grid/transform layer is generic over.
///
/// `rustfft::FftNum` supplies what the FFT backend needs; the num-traits
/// bounds give literals, `PI`-style constants and transcendentals. Implemented
/// for `f32` and `f64`; the laboratory layers (dynamics, stationary states,
/// probes, io) pin `f64`.
pub trait Real:
    rustfft::FftNum
    + num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::NumAssign
    + std::fmt::Display
    + std::fmt::LowerExp
{
    fn from_f64(x: f64) -> Self {
        <Self as num_traits::FromPrimitive>::from_f64(x).expect("finite literal")
    }

    fn to_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("finite value")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for casting an `f64` constant into the working scalar.
#[inline]
pub fn r<T: Real>(x: f64) -> T {
    <T as Real>::from_f64(x)
}

pub type Cx<T> = Complex<T>;

/// `(m^2 + |xi|^2)^{1/2}`, the elliptic weight attached to mass `m`.
#[inline]
pub fn bracket<T: Real>(xi: [T; 3], m: T) -> T {
    (m * m + xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt()
}

/// Angle in `[0, pi]` between two nonzero vectors, clamped against roundoff.
pub fn angle_between<T: Real>(x: [T; 3], y: [T; 3]) -> T {
    let nx = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    let ny = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
    if nx.is_zero() || ny.is_zero() {
        return T::zero();
    }
    let c = (x[0] * y[0] + x[1] * y[1] + x[2] * y[2]) / (nx * ny);
    num_traits::Float::min(T::one(), num_traits::Float::max(-T::one(), c)).acos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bracket_matches_definition() {
        let xi = [3.0f64, 0.0, 4.0];
        assert!((bracket(xi, 0.0) - 5.0).abs() < 1e-15);
        assert!((bracket([0.0f64; 3], 2.5) - 2.5).abs() < 1e-15);
        let m: f32 = 1.5;
        assert!((bracket([1.0f32, 2.0, 2.0], m) - (m * m + 9.0).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn angle_endpoints() {
        let e1 = [1.0f64, 0.0, 0.0];
        assert!(angle_between(e1, e1).abs() < 1e-15);
        assert!((angle_between(e1, [-1.0, 0.0, 0.0]) - std::f64::consts::PI).abs() < 1e-15);
        assert!((angle_between(e1, [0.0, 2.0, 0.0]) - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }
}
