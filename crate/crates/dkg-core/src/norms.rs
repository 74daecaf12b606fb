//! Variation, modulation and dispersive norms on sampled trajectories.
//!
//! Everything here is a diagnostic on finitely sampled data: the p-variation
//! is the exact optimum over partitions of the sample times (an O(n²) DP),
//! the Y norm's modulation sup runs over the window-resolvable dyadic range
//! [2π/T, π/dt] only, and the dispersive norm's time integral is a trapezoid
//! rule. Where an operation is an approximation of the continuum object the
//! report says so; none of the definitions are weakened.

use crate::angular::{angular_blocks, angular_projector, AngularPlan};
use crate::error::{DkgError, Result};
use crate::field::{Field, Repr, Trajectory, WavePacketSum};
use crate::grid::GridSpec;
use crate::multipliers::{
    bessel_potential, dirac_projector, littlewood_paley, modulation_filter_packets,
    modulation_filter_trajectory, packet_block_filter, resolvable_modulations, ModBand, Profile,
};
use crate::propagators::half_wave;
use crate::scalar::{r, Real};

/// Exponents for the modulation norms.
///
/// `a` is the time integrability of the Y norm, `b` its low-modulation taper,
/// `s`/`sigma` the radial/angular regularity weights of the stacked norms and
/// `s0` the baseline regularity the parameters were derived from.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormParams<T: Real> {
    pub a: T,
    pub b: T,
    pub s: T,
    pub sigma: T,
    pub s0: T,
}

/// The two admissible small-parameter regimes: extra regularity with no
/// angular weight, or critical regularity carried by the angular weight.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum Regime<T: Real> {
    NonResonant { s0: T },
    Critical { sigma: T },
}

impl<T: Real> Regime<T> {
    pub fn s0(&self) -> T {
        match self {
            Regime::NonResonant { s0 } => *s0,
            Regime::Critical { .. } => T::zero(),
        }
    }

    pub fn sigma(&self) -> T {
        match self {
            Regime::NonResonant { .. } => T::zero(),
            Regime::Critical { sigma } => *sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Regime::NonResonant { s0 } => {
                if !(*s0 > T::zero() && *s0 < T::one()) {
                    return Err(DkgError::InvalidParam(format!(
                        "non-resonant regime needs 0 < s0 < 1, got {s0}"
                    )));
                }
            }
            Regime::Critical { sigma } => {
                if !(*sigma > T::zero() && *sigma < T::one()) {
                    return Err(DkgError::InvalidParam(format!(
                        "critical regime needs 0 < sigma < 1, got {sigma} \
                         (sigma = 0 has no angular weight to carry the regularity)"
                    )));
                }
            }
        }
        Ok(())
    }
}

impl<T: Real> NormParams<T> {
    /// Default exponents for a regime: `1/a = 1/2 + (sigma + s0)/16` and
    /// `b = 2 (1/a - 1/2)`, so the pair degenerates only when both small
    /// parameters vanish.
    pub fn from_regime(regime: Regime<T>) -> Result<Self> {
        regime.validate()?;
        let s0 = regime.s0();
        let sigma = regime.sigma();
        let half = r::<T>(0.5);
        let inv_a = half + (sigma + s0) / r::<T>(16.0);
        let p = NormParams {
            a: T::one() / inv_a,
            b: r::<T>(2.0) * (inv_a - half),
            s: s0,
            sigma,
            s0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > T::one() && self.a < r::<T>(2.0)) {
            return Err(DkgError::InvalidParam(format!(
                "time exponent a must lie in (1, 2), got {}",
                self.a
            )));
        }
        if !(self.b > T::zero()) {
            return Err(DkgError::InvalidParam(format!(
                "low-modulation taper b must be positive, got {}",
                self.b
            )));
        }
        if self.sigma < T::zero() {
            return Err(DkgError::InvalidParam("sigma must be non-negative".into()));
        }
        Ok(())
    }
}

/// Result of the p-variation optimum: the value and a maximizing partition
/// (strictly increasing sample indices).
#[derive(Debug, Clone)]
pub struct VariationResult<T: Real> {
    pub value: T,
    pub partition: Vec<usize>,
}

/// p-variation over an abstract index set with a distance callback:
/// maximizes `sum d(j_{k-1}, j_k)^p` over increasing index chains by dynamic
/// programming, then takes the p-th root.
pub fn p_variation_with<T: Real>(
    n: usize,
    p: T,
    mut dist: impl FnMut(usize, usize) -> T,
) -> Result<VariationResult<T>> {
    if n == 0 {
        return Err(DkgError::InvalidParam("p-variation of an empty sequence".into()));
    }
    if !(p >= T::one()) {
        return Err(DkgError::InvalidParam("p-variation needs p >= 1".into()));
    }
    let mut best = vec![T::zero(); n];
    let mut pred = vec![usize::MAX; n];
    for j in 1..n {
        for i in 0..j {
            let cand = best[i] + dist(i, j).powf(p);
            if cand > best[j] {
                best[j] = cand;
                pred[j] = i;
            }
        }
    }
    let mut end = 0;
    for j in 1..n {
        if best[j] > best[end] {
            end = j;
        }
    }
    let mut partition = vec![end];
    let mut cur = end;
    while pred[cur] != usize::MAX {
        cur = pred[cur];
        partition.push(cur);
    }
    partition.reverse();
    Ok(VariationResult { value: best[end].powf(T::one() / p), partition })
}

/// p-variation of a sequence of field snapshots in their common `L²`.
pub fn p_variation<T: Real>(frames: &[Field<T>], p: T) -> Result<VariationResult<T>> {
    if frames.is_empty() {
        return Err(DkgError::InvalidParam("p-variation of an empty sequence".into()));
    }
    let n = frames.len();
    for f in &frames[1..] {
        frames[0].check_compatible(f)?;
    }
    // direct pairwise distances: no cancellation, unlike the Gram shortcut
    let mut dist = vec![T::zero(); n * n];
    let weight = match frames[0].repr() {
        Repr::Physical => frames[0].grid().cell_volume(),
        Repr::Fourier => frames[0].grid().volume(),
    };
    for i in 0..n {
        for j in (i + 1)..n {
            let mut acc = T::zero();
            for (a, b) in frames[i].data().iter().zip(frames[j].data().iter()) {
                let dr = a.re - b.re;
                let di = a.im - b.im;
                acc += dr * dr + di * di;
            }
            let d = (weight * acc).sqrt();
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    p_variation_with(n, p, |i, j| dist[i * n + j])
}

/// `V²` norm adapted to the half-wave flow of (`sign`, `m`): undo the free
/// flow at each sample and add the sup of the resulting interaction-picture
/// frames to their 2-variation. A discrete free wave scores exactly its `L²`
/// norm.
pub fn v2_norm<T: Real>(traj: &Trajectory<T>, sign: i32, m: T) -> Result<T> {
    let mut frames = Vec::with_capacity(traj.frames.len());
    for (j, fr) in traj.frames.iter().enumerate() {
        let hat = fr.in_repr(Repr::Fourier)?;
        frames.push(half_wave(&hat, -traj.tgrid.t(j), sign, m)?);
    }
    let sup = frames
        .iter()
        .map(|f| f.l2_norm())
        .fold(T::zero(), |a, b| num_traits::Float::max(a, b));
    let var = p_variation(&frames, r::<T>(2.0))?;
    Ok(sup + var.value)
}

/// `V²` norm of a packet sum with exact flow semantics: the
/// interaction-picture amplitude of every lattice mode is evaluated in closed
/// form at the sample times, so a free wave of (`sign`, `m`) scores exactly
/// its `L²` norm with vanishing variation part.
pub fn v2_norm_packets<T: Real>(
    sum: &WavePacketSum<T>,
    grid: &GridSpec<T>,
    tgrid: &crate::grid::TimeGrid<T>,
    sign: i32,
    m: T,
) -> Result<T> {
    use std::collections::HashMap;
    if sign != 1 && sign != -1 {
        return Err(DkgError::InvalidParam("flow sign must be +1 or -1".into()));
    }
    sum.validate_on_grid(grid)?;
    let ns = tgrid.samples();
    let nc = sum.ncomp;
    // Slot per occupied mode; packets sharing a mode add coherently.
    let mut slot_of: HashMap<[i64; 3], usize> = HashMap::new();
    let mut shifted: Vec<(usize, T, &[crate::scalar::Cx<T>])> = Vec::new();
    for p in &sum.packets {
        let k = grid
            .mode_of([p.xi[0].to_f64(), p.xi[1].to_f64(), p.xi[2].to_f64()], 1e-9)
            .expect("validated packet");
        let next = slot_of.len();
        let slot = *slot_of.entry(k).or_insert(next);
        // Undoing exp(-i sign t <grad>_m) leaves the residual rate below.
        let delta = p.tau + r::<T>(sign as f64) * crate::scalar::bracket(p.xi, m);
        shifted.push((slot, delta, &p.amp));
    }
    let nmodes = slot_of.len();
    if nmodes == 0 {
        return Ok(T::zero());
    }
    let zero = crate::scalar::Cx::new(T::zero(), T::zero());
    let mut frames = vec![zero; ns * nmodes * nc];
    for j in 0..ns {
        let t = tgrid.t(j);
        let base = j * nmodes * nc;
        for (slot, delta, amp) in &shifted {
            let rot = crate::scalar::Cx::new(T::zero(), *delta * t).exp();
            for (c, a) in amp.iter().enumerate() {
                frames[base + slot * nc + c] += rot * *a;
            }
        }
    }
    let vol = grid.volume();
    let fnorm = |j: usize| -> T {
        let base = j * nmodes * nc;
        let mut s = T::zero();
        for v in &frames[base..base + nmodes * nc] {
            s += v.norm_sqr();
        }
        (vol * s).sqrt()
    };
    let sup = (0..ns).map(fnorm).fold(T::zero(), |a, b| num_traits::Float::max(a, b));
    let var = p_variation_with(ns, r::<T>(2.0), |i, j| {
        let (bi, bj) = (i * nmodes * nc, j * nmodes * nc);
        let mut s = T::zero();
        for k in 0..nmodes * nc {
            s += (frames[bi + k] - frames[bj + k]).norm_sqr();
        }
        (vol * s).sqrt()
    })?;
    Ok(sup + var.value)
}

/// Window-resolvable dyadic modulations `d = 2^k` in `[2π/T, π/dt]`.
pub fn resolvable_dyadic<T: Real>(tgrid: &crate::grid::TimeGrid<T>) -> Vec<f64> {
    let (lo, hi) = resolvable_modulations(tgrid);
    let klo = lo.log2().ceil() as i32;
    let khi = hi.log2().floor() as i32;
    (klo..=khi).map(|k| 2.0f64.powi(k)).collect()
}

fn l_a_t_of_l2<T: Real>(traj: &Trajectory<T>, a: T) -> T {
    let dt = traj.tgrid.dt;
    let half = r::<T>(0.5);
    let last = traj.frames.len() - 1;
    let mut acc = T::zero();
    for (j, f) in traj.frames.iter().enumerate() {
        let w = if j == 0 || j == last { dt * half } else { dt };
        acc += w * f.l2_norm().powf(a);
    }
    acc.powf(T::one() / a)
}

/// Y norm of a trajectory at spatial block `lam`:
/// `sup_d d^{1/a} (min(d,lam)/lam)^b ‖C_d P_lam u‖_{L^a_t L²_x}`,
/// with `d` running over the window-resolvable dyadic range and `C_d` the
/// windowed temporal filter (documented leakage). Zero for free waves.
pub fn y_norm<T: Real>(
    traj: &Trajectory<T>,
    lam: T,
    sign: i32,
    m: T,
    params: &NormParams<T>,
    profile: Profile,
) -> Result<T> {
    params.validate()?;
    let ds = resolvable_dyadic(&traj.tgrid);
    if ds.is_empty() {
        return Err(DkgError::WindowTooShort(
            "no dyadic modulation fits between 2pi/T and pi/dt".into(),
        ));
    }
    let hat = traj.map_frames(|f| f.in_repr(Repr::Fourier))?;
    let plam = hat.map_frames(|f| littlewood_paley(f, lam, profile))?;
    let mut best = T::zero();
    for d in ds {
        let dv = r::<T>(d);
        let filtered = modulation_filter_trajectory(&plam, dv, ModBand::At, sign, m, profile)?;
        let val = l_a_t_of_l2(&filtered, params.a);
        let w = dv.powf(T::one() / params.a)
            * (num_traits::Float::min(dv, lam) / lam).powf(params.b);
        best = num_traits::Float::max(best, w * val);
    }
    Ok(best)
}

/// Y norm with the exact packet semantics of `C_d` (the reference for the
/// windowed variant): same weight and sup, time integral by trapezoid on the
/// sample times.
pub fn y_norm_packets<T: Real>(
    sum: &WavePacketSum<T>,
    grid: &GridSpec<T>,
    tgrid: &crate::grid::TimeGrid<T>,
    lam: T,
    sign: i32,
    m: T,
    params: &NormParams<T>,
    profile: Profile,
) -> Result<T> {
    params.validate()?;
    sum.validate_on_grid(grid)?;
    let ds = resolvable_dyadic(tgrid);
    if ds.is_empty() {
        return Err(DkgError::WindowTooShort(
            "no dyadic modulation fits between 2pi/T and pi/dt".into(),
        ));
    }
    let blocked = packet_block_filter(sum, lam, profile)?;
    let mut best = T::zero();
    for d in ds {
        let dv = r::<T>(d);
        let kept = modulation_filter_packets(&blocked, dv, ModBand::At, sign, m, profile)?;
        if kept.packets.is_empty() {
            continue;
        }
        let half = r::<T>(0.5);
        let last = tgrid.samples() - 1;
        let mut acc = T::zero();
        for j in 0..tgrid.samples() {
            let w = if j == 0 || j == last { tgrid.dt * half } else { tgrid.dt };
            acc += w * kept.l2_norm_at(grid, tgrid.t(j)).powf(params.a);
        }
        let val = acc.powf(T::one() / params.a);
        let w = dv.powf(T::one() / params.a)
            * (num_traits::Float::min(dv, lam) / lam).powf(params.b);
        best = num_traits::Float::max(best, w * val);
    }
    Ok(best)
}

/// Dispersive norm `D^s_sigma`: for `sigma = 0` the space-time `L⁴` of
/// `⟨∇⟩^s u`; for `sigma > 0` the `ℓ²` sum over angular blocks weighted by
/// `N^{2 sigma}`. Radial data makes every block beyond the first vanish, so
/// the two paths agree there.
pub fn dispersive_norm<T: Real>(
    traj: &Trajectory<T>,
    s: T,
    sigma: T,
    plan: Option<&AngularPlan<T>>,
) -> Result<T> {
    if sigma < T::zero() {
        return Err(DkgError::InvalidParam("sigma must be non-negative".into()));
    }
    let four = r::<T>(4.0);
    let l4 = |frames: &Trajectory<T>| -> Result<T> {
        let phys = frames.map_frames(|f| {
            bessel_potential(&f.in_repr(Repr::Fourier)?, s, T::one())?.into_physical()
        })?;
        phys.mixed_norm(Some(four), Some(four))
    };
    if sigma.is_zero() {
        return l4(traj);
    }
    let plan = plan.ok_or_else(|| {
        DkgError::InvalidParam("sigma > 0 needs an angular plan".into())
    })?;
    let hat = traj.map_frames(|f| f.in_repr(Repr::Fourier))?;
    let mut acc = T::zero();
    for nb in angular_blocks(plan.lmax) {
        let block = hat.map_frames(|f| angular_projector(f, nb, plan, Profile::Sharp))?;
        if block.frames.iter().all(|f| f.l2_norm().is_zero()) {
            continue;
        }
        let val = l4(&block)?;
        acc += r::<T>(nb).powf(r::<T>(2.0) * sigma) * val * val;
    }
    Ok(acc.sqrt())
}

/// Which stacked norm to evaluate: variation only, modulation only, or their
/// sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StackKind {
    V,
    Y,
    F,
}

/// Stacked block norms: `ℓ²` over the `(lam, N)` blocks of the component
/// norms with weights `lam^s N^sigma`. Four-component trajectories are split
/// into the two Dirac projections, each measured along its own flow sign, and
/// combined in `ℓ²`; scalar trajectories use the given `sign`.
pub fn stacked_norms<T: Real>(
    traj: &Trajectory<T>,
    kind: StackKind,
    sign: i32,
    m: T,
    params: &NormParams<T>,
    plan: &AngularPlan<T>,
    profile: Profile,
) -> Result<T> {
    params.validate()?;
    let hat = traj.map_frames(|f| f.in_repr(Repr::Fourier))?;
    let parts: Vec<(i32, Trajectory<T>)> = if traj.ncomp() == 4 {
        vec![
            (1, hat.map_frames(|f| dirac_projector(f, 1, m))?),
            (-1, hat.map_frames(|f| dirac_projector(f, -1, m))?),
        ]
    } else {
        vec![(sign, hat)]
    };
    let lams = crate::multipliers::blocks_for_grid(traj.grid());
    let nbs = angular_blocks(plan.lmax);
    let mut v2_sq = T::zero();
    let mut y_sq = T::zero();
    for (part_sign, part) in parts.iter() {
        for &lam in &lams {
            let lamv = r::<T>(lam);
            let plam = part.map_frames(|f| littlewood_paley(f, lamv, profile))?;
            for &nb in &nbs {
                let block = plam.map_frames(|f| angular_projector(f, nb, plan, profile))?;
                if block.frames.iter().all(|f| f.l2_norm() < T::epsilon()) {
                    continue;
                }
                let weight =
                    lamv.powf(params.s) * r::<T>(nb).powf(params.sigma);
                if matches!(kind, StackKind::V | StackKind::F) {
                    let v = v2_norm(&block, *part_sign, m)?;
                    v2_sq += (weight * v).powi(2);
                }
                if matches!(kind, StackKind::Y | StackKind::F) {
                    let y = y_norm(&block, lamv, *part_sign, m, params, profile)?;
                    y_sq += (weight * y).powi(2);
                }
            }
        }
    }
    Ok(match kind {
        StackKind::V => v2_sq.sqrt(),
        StackKind::Y => y_sq.sqrt(),
        StackKind::F => v2_sq.sqrt() + y_sq.sqrt(),
    })
}

/// Extension by zero outside `[t_lo, t_hi]`: frames at sample times outside
/// the subwindow are zeroed; the time grid is unchanged. The subwindow
/// endpoints must land on sample times.
pub fn interval_restrict<T: Real>(
    traj: &Trajectory<T>,
    t_lo: T,
    t_hi: T,
) -> Result<Trajectory<T>> {
    if !(t_lo <= t_hi) {
        return Err(DkgError::InvalidParam("empty subwindow".into()));
    }
    let tg = &traj.tgrid;
    let locate = |t: T| -> Result<usize> {
        let j = ((t - tg.t0) / tg.dt).round();
        let ju = j.to_f64();
        if ju < 0.0 || ju > (tg.samples() - 1) as f64 {
            return Err(DkgError::InvalidParam("subwindow leaves the time window".into()));
        }
        let ju = ju as usize;
        if (tg.t(ju) - t).abs() > tg.dt * r::<T>(1e-9) {
            return Err(DkgError::InvalidParam(format!(
                "subwindow endpoint {t} does not land on a sample time"
            )));
        }
        Ok(ju)
    };
    let jl = locate(t_lo)?;
    let jh = locate(t_hi)?;
    let frames = traj
        .frames
        .iter()
        .enumerate()
        .map(|(j, f)| {
            if j >= jl && j <= jh {
                f.clone()
            } else {
                Field::zeros(*f.grid(), f.ncomp(), f.repr()).expect("same shape")
            }
        })
        .collect();
    Trajectory::new(*tg, frames)
}
