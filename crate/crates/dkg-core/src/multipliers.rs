//! Fourier multipliers: dyadic frequency blocks, spinor half-space
//! projectors, modulation filters, angular caps, frequency cubes, and
//! elliptic weights.
//!
//! Convention: every multiplier here takes and returns a field in Fourier
//! representation; callers convert explicitly. Dyadic blocks are powers of
//! two `1, 2, 4, ...`, the unit block collecting everything below 1.

use crate::error::{DkgError, Result};
use crate::field::{Field, WavePacketSum};
use crate::gamma::{alpha, gamma0, Mat4};
use crate::grid::{is_dyadic, GridSpec, TimeGrid};
use crate::scalar::{bracket, r, Cx, Real};
use crate::field::{Repr, Trajectory, WavePacket};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

/// Cutoff profile family shared by all localization operators.
///
/// `Sharp` uses characteristic functions of dyadic annuli; `Smooth` uses a
/// C-infinity bump built from a transition function, supported in
/// `(1/2, 2)` and tiling dyadically: `sum_j rho(t / 2^j) = 1` for `t > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Profile {
    Sharp,
    Smooth,
}

impl Profile {
    /// Transition function: 0 for `u <= 0`, 1 for `u >= 1`, rising smoothly
    /// in between (for `Sharp`, a step at 0).
    fn transition<T: Real>(self, u: T) -> T {
        match self {
            Profile::Sharp => {
                if u > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Profile::Smooth => {
                if u <= T::zero() {
                    T::zero()
                } else if u >= T::one() {
                    T::one()
                } else {
                    let a = (-T::one() / u).exp();
                    let b = (-T::one() / (T::one() - u)).exp();
                    a / (a + b)
                }
            }
        }
    }

    /// Unit-block bump `rho(t)`: sharp = indicator of `(1/2, 1]`, smooth
    /// supported in `(1/2, 2)`. Blocks tile exactly because consecutive
    /// blocks share the same transition values.
    pub fn rho<T: Real>(self, t: T) -> T {
        let two = r::<T>(2.0);
        self.transition(two * t - T::one()) - self.transition(t - T::one())
    }

    /// Cumulative cutoff `rho_le(t) = sum_{blocks <= 1} rho(t / block)`:
    /// sharp = indicator of `[0, 1]`, smooth = 1 below 1, decaying to 0 at 2.
    pub fn rho_le<T: Real>(self, t: T) -> T {
        T::one() - self.transition(t - T::one())
    }

    /// Weight of the dyadic block `lam` at radius `t` (`lam = 1` collects
    /// everything below 1).
    pub fn block_weight<T: Real>(self, t: T, lam: T) -> T {
        if lam == T::one() {
            self.rho_le(t)
        } else {
            self.rho(t / lam)
        }
    }
}

fn check_dyadic(lam: f64) -> Result<()> {
    if !is_dyadic(lam) {
        return Err(DkgError::NotDyadic(lam));
    }
    Ok(())
}

/// Dyadic frequency block `P_lam`: multiplier `rho(|xi| / lam)` (cumulative
/// for `lam = 1`). Fourier representation in and out.
pub fn littlewood_paley<T: Real>(f: &Field<T>, lam: T, profile: Profile) -> Result<Field<T>> {
    check_dyadic(lam.to_f64())?;
    let mut out = f.clone();
    out.apply_mode_map(|xi| {
        let t = (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt();
        Cx::new(profile.block_weight(t, lam), T::zero())
    })?;
    Ok(out)
}

/// All dyadic blocks needed to cover the grid's resolved modes (the largest
/// frequency magnitude is `sqrt(3)` times the per-axis Nyquist frequency);
/// the top block's annulus reaches past that corner frequency.
pub fn blocks_for_grid<T: Real>(grid: &GridSpec<T>) -> Vec<f64> {
    let top = grid.xi_nyquist().to_f64() * 3.0f64.sqrt();
    let mut out = vec![1.0];
    let mut lam = 2.0;
    while lam / 2.0 < top {
        out.push(lam);
        lam *= 2.0;
    }
    out
}

/// Symbol of the free Dirac Hamiltonian, `H(xi) = alpha . xi + M gamma^0`.
pub fn dirac_symbol<T: Real>(xi: [T; 3], m: T) -> Mat4<T> {
    let mut h = gamma0::<T>().scale(Cx::new(m, T::zero()));
    for j in 1..=3 {
        h = h.add(&alpha(j).scale(Cx::new(xi[j - 1], T::zero())));
    }
    h
}

/// Spectral projector of `H(xi)` onto the `sign * <xi>_M` eigenspace:
/// `1/2 (I + sign H(xi) / <xi>_M)`.
pub fn dirac_projector_matrix<T: Real>(xi: [T; 3], sign: i32, m: T) -> Mat4<T> {
    let br = bracket(xi, m);
    let s = r::<T>(sign as f64) / br;
    Mat4::identity()
        .add(&dirac_symbol(xi, m).scale(Cx::new(s, T::zero())))
        .scale(Cx::new(r::<T>(0.5), T::zero()))
}

/// Applies the half-space projector to a spinor field in Fourier space.
pub fn dirac_projector<T: Real>(f: &Field<T>, sign: i32, m: T) -> Result<Field<T>> {
    if sign != 1 && sign != -1 {
        return Err(DkgError::InvalidParam("projector sign must be +1 or -1".into()));
    }
    if !(m > T::zero()) {
        return Err(DkgError::InvalidParam("projector mass must be positive".into()));
    }
    let mut out = f.clone();
    out.apply_mode_matrix(|xi| dirac_projector_matrix(xi, sign, m))?;
    Ok(out)
}

/// Elliptic weight `<grad>_m^s`: multiplier `(m^2 + |xi|^2)^{s/2}`.
/// With `m = 0` and `s < 0` the zero mode must carry no amplitude.
pub fn bessel_potential<T: Real>(f: &Field<T>, s: T, m: T) -> Result<Field<T>> {
    f.expect_repr(Repr::Fourier)?;
    if m < T::zero() {
        return Err(DkgError::InvalidParam("mass must be nonnegative".into()));
    }
    if m.is_zero() && s < T::zero() {
        let nodes = f.grid().nodes();
        let zero_flat = f.grid().flat(0, 0, 0);
        for c in 0..f.ncomp() {
            if f.data()[c * nodes + zero_flat].norm() > T::zero() {
                return Err(DkgError::InvalidParam(
                    "negative homogeneous weight with a nonzero zero mode".into(),
                ));
            }
        }
    }
    let mut out = f.clone();
    let half = r::<T>(0.5);
    out.apply_mode_map(|xi| {
        let q = m * m + xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
        if q.is_zero() {
            // only reachable with m = 0, s >= 0; 0^0 = 1 keeps s = 0 the identity
            Cx::new(if s.is_zero() { T::one() } else { T::zero() }, T::zero())
        } else {
            Cx::new(q.powf(s * half), T::zero())
        }
    })?;
    Ok(out)
}

/// `(m^2 - Laplacian)^{-1}` with strictly positive mass.
pub fn inverse_helmholtz<T: Real>(f: &Field<T>, m: T) -> Result<Field<T>> {
    if !(m > T::zero()) {
        return Err(DkgError::InvalidParam(
            "inverse Helmholtz needs a positive mass".into(),
        ));
    }
    bessel_potential(f, -r::<T>(2.0), m)
}

/// Which modulation band to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModBand {
    /// The dyadic band at distance `d` from the characteristic surface.
    At,
    /// Everything at distance at most `d`.
    UpTo,
}

fn mod_weight<T: Real>(dist: T, d: T, band: ModBand, profile: Profile) -> T {
    match band {
        ModBand::At => profile.rho(dist / d),
        ModBand::UpTo => profile.rho_le(dist / d),
    }
}

/// Modulation filter on analytic packet sums (exact reference semantics).
///
/// A packet `(tau, xi)` sits at distance `|tau + sign <xi>_m|` from the
/// characteristic surface of `exp(-i sign t <grad>_m)`; its amplitude is
/// scaled by the band profile at that distance. Free-wave packets
/// (`tau = -sign <xi>_m`) are kept by every `UpTo` band.
pub fn modulation_filter_packets<T: Real>(
    sum: &WavePacketSum<T>,
    d: T,
    band: ModBand,
    sign: i32,
    m: T,
    profile: Profile,
) -> Result<WavePacketSum<T>> {
    if !(d > T::zero()) {
        return Err(DkgError::InvalidParam("modulation scale must be positive".into()));
    }
    let s = r::<T>(sign as f64);
    let packets = sum
        .packets
        .iter()
        .map(|p| {
            let dist = (p.tau + s * bracket(p.xi, m)).abs();
            let w = mod_weight(dist, d, band, profile);
            WavePacket {
                tau: p.tau,
                xi: p.xi,
                amp: p.amp.iter().map(|a| Cx::new(a.re * w, a.im * w)).collect(),
            }
        })
        .collect();
    WavePacketSum::new(sum.ncomp, packets)
}

/// Modulation filter on sampled trajectories via a windowed time DFT.
///
/// The frames are multiplied by a Hann window, transformed in time per
/// spatial mode, weighted by the band profile at
/// `|tau_k + sign <xi>_m|`, and transformed back. The result approximates
/// `C_d (w u)` for the windowed signal `w u`; no attempt is made to divide
/// the window back out. The discrete time frequencies resolve distances
/// between `2 pi / T` and `pi / dt`, so `d` outside that range is degenerate.
pub fn modulation_filter_trajectory<T: Real>(
    traj: &Trajectory<T>,
    d: T,
    band: ModBand,
    sign: i32,
    m: T,
    profile: Profile,
) -> Result<Trajectory<T>> {
    if !(d > T::zero()) {
        return Err(DkgError::InvalidParam("modulation scale must be positive".into()));
    }
    let nt = traj.frames.len();
    if nt < 8 {
        return Err(DkgError::WindowTooShort(format!(
            "windowed modulation filter needs at least 8 samples, got {nt}"
        )));
    }
    let orig_repr = traj.repr();
    let hat = traj.map_frames(|fr| fr.in_repr(Repr::Fourier))?;
    let grid = *hat.grid();
    let ncomp = hat.ncomp();
    let nodes = grid.nodes();
    let dt = hat.tgrid.dt;
    let s = r::<T>(sign as f64);

    // symmetric Hann window
    let win: Vec<T> = (0..nt)
        .map(|j| {
            let u = r::<T>(j as f64) / r::<T>((nt - 1) as f64);
            r::<T>(0.5) * (T::one() - (T::TAU() * u).cos())
        })
        .collect();

    let mut planner = FftPlanner::<T>::new();
    let fwd = planner.plan_fft_forward(nt);
    let inv = planner.plan_fft_inverse(nt);
    let mut scratch = vec![Cx::new(T::zero(), T::zero()); fwd.get_inplace_scratch_len().max(nt)];
    let norm = T::one() / r::<T>(nt as f64);

    // discrete time frequencies in the synthesis convention e^{i tau t}:
    // sample j carries e^{-2 pi i k j / nt} after a forward DFT, i.e.
    // tau_k = -2 pi wrap(k) / (nt dt).
    let tau_of: Vec<T> = (0..nt)
        .map(|k| {
            let kk = if k < nt / 2 { k as i64 } else { k as i64 - nt as i64 };
            -T::TAU() * r::<T>(kk as f64) / (dt * r::<T>(nt as f64))
        })
        .collect();

    let mut out_frames: Vec<Field<T>> = hat.frames.clone();
    let mut series = vec![Cx::new(T::zero(), T::zero()); nt];
    for (flat, ix, iy, iz) in grid.iter_indices() {
        let xi = grid.xi(ix, iy, iz);
        let br = bracket(xi, m);
        for c in 0..ncomp {
            for j in 0..nt {
                let v = hat.frames[j].data()[c * nodes + flat];
                series[j] = Cx::new(v.re * win[j], v.im * win[j]);
            }
            fwd.process_with_scratch(&mut series, &mut scratch);
            for (k, v) in series.iter_mut().enumerate() {
                let dist = (tau_of[k] + s * br).abs();
                let w = mod_weight(dist, d, band, profile) * norm;
                *v = Cx::new(v.re * w, v.im * w);
            }
            inv.process_with_scratch(&mut series, &mut scratch);
            for j in 0..nt {
                out_frames[j].data_mut()[c * nodes + flat] = series[j];
            }
        }
    }
    let out = Trajectory::new(hat.tgrid, out_frames)?;
    out.map_frames(|fr| fr.in_repr(orig_repr))
}

/// Finite collection of spherical caps covering the unit sphere, used for
/// angular sectors in frequency space. Centers follow a Fibonacci spiral;
/// every direction is assigned to the nearest center, so the sectors are
/// disjoint and exhaust the sphere.
#[derive(Debug, Clone)]
pub struct CapSet<T: Real> {
    pub alpha: T,
    pub centers: Vec<[T; 3]>,
}

impl<T: Real> CapSet<T> {
    pub fn new(alpha: T) -> Result<Self> {
        let a = alpha.to_f64();
        if !(a > 0.0 && a <= std::f64::consts::PI) {
            return Err(DkgError::InvalidParam(
                "cap radius must lie in (0, pi]".into(),
            ));
        }
        let count = ((4.0 / (a * a)).round() as usize).max(1);
        let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
        let centers = (0..count)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                let rho = (1.0 - z * z).sqrt();
                let phi = golden * i as f64;
                [
                    r::<T>(rho * phi.cos()),
                    r::<T>(rho * phi.sin()),
                    r::<T>(z),
                ]
            })
            .collect();
        Ok(CapSet { alpha, centers })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Index of the sector containing direction `v`; the zero vector goes to
    /// sector 0 by convention. Ties resolve to the lowest index.
    pub fn cap_of(&self, v: [T; 3]) -> usize {
        let n2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        if n2.is_zero() {
            return 0;
        }
        let mut best = 0usize;
        let mut bestdot = -T::infinity();
        for (i, ctr) in self.centers.iter().enumerate() {
            let d = v[0] * ctr[0] + v[1] * ctr[1] + v[2] * ctr[2];
            if d > bestdot {
                bestdot = d;
                best = i;
            }
        }
        best
    }
}

/// Keeps the modes whose direction falls in sector `cap` of `caps`.
pub fn cap_projector<T: Real>(f: &Field<T>, caps: &CapSet<T>, cap: usize) -> Result<Field<T>> {
    if cap >= caps.len() {
        return Err(DkgError::InvalidParam(format!(
            "cap index {cap} out of range ({} caps)",
            caps.len()
        )));
    }
    let mut out = f.clone();
    out.apply_mode_map(|xi| {
        if caps.cap_of(xi) == cap {
            Cx::new(T::one(), T::zero())
        } else {
            Cx::new(T::zero(), T::zero())
        }
    })?;
    Ok(out)
}

/// Integer label of the side-`mu` cube containing `xi` (half-open tiling).
pub fn cube_of<T: Real>(xi: [T; 3], mu: T) -> [i64; 3] {
    let mut q = [0i64; 3];
    for a in 0..3 {
        q[a] = (xi[a] / mu).floor().to_f64() as i64;
    }
    q
}

/// Keeps the modes inside the cube `q` of the side-`mu` tiling.
pub fn cube_projector<T: Real>(f: &Field<T>, mu: T, q: [i64; 3]) -> Result<Field<T>> {
    if !(mu > T::zero()) {
        return Err(DkgError::InvalidParam("cube side must be positive".into()));
    }
    let mut out = f.clone();
    out.apply_mode_map(|xi| {
        if cube_of(xi, mu) == q {
            Cx::new(T::one(), T::zero())
        } else {
            Cx::new(T::zero(), T::zero())
        }
    })?;
    Ok(out)
}

/// Restricts a packet sum to one dyadic frequency block (sharp).
pub fn packet_block_filter<T: Real>(
    sum: &WavePacketSum<T>,
    lam: T,
    profile: Profile,
) -> Result<WavePacketSum<T>> {
    check_dyadic(lam.to_f64())?;
    let packets = sum
        .packets
        .iter()
        .map(|p| {
            let t = (p.xi[0] * p.xi[0] + p.xi[1] * p.xi[1] + p.xi[2] * p.xi[2]).sqrt();
            let w = profile.block_weight(t, lam);
            WavePacket {
                tau: p.tau,
                xi: p.xi,
                amp: p.amp.iter().map(|a| Cx::new(a.re * w, a.im * w)).collect(),
            }
        })
        .collect();
    WavePacketSum::new(sum.ncomp, packets)
}

/// Sharp anti-alias mask: keeps `|xi| <= (2/3)` of the per-axis Nyquist
/// frequency. The radial (rather than per-axis) cutoff commutes with every
/// rotation-invariant multiplier and preserves the radial spinor pair.
pub fn dealias_mask<T: Real>(f: &mut Field<T>) -> Result<()> {
    let cut = f.grid().xi_nyquist() * r::<T>(2.0 / 3.0);
    let cut2 = cut * cut;
    f.apply_mode_map(|xi| {
        let q = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
        if q <= cut2 {
            Cx::new(T::one(), T::zero())
        } else {
            Cx::new(T::zero(), T::zero())
        }
    })
}

/// Convenience: evaluate `dist = |tau + sign <xi>_m|`, the modulation height
/// of a space-time frequency relative to one characteristic surface.
pub fn modulation_distance<T: Real>(tau: T, xi: [T; 3], sign: i32, m: T) -> T {
    (tau + r::<T>(sign as f64) * bracket(xi, m)).abs()
}

/// Uniform time grid helper for windowed filters: the resolvable modulation
/// band `[2 pi / window, pi / dt]`.
pub fn resolvable_modulations<T: Real>(tgrid: &TimeGrid<T>) -> (f64, f64) {
    let lo = std::f64::consts::TAU / tgrid.window().to_f64();
    let hi = std::f64::consts::PI / tgrid.dt.to_f64();
    (lo, hi)
}
