//! Complex fields on the box, their Fourier transforms, inner products,
//! space-time trajectories, and analytic wave-packet sums.

use crate::error::{DkgError, Result};
use crate::gamma::dirac_pair;
use crate::grid::{GridSpec, TimeGrid};
use crate::scalar::{bracket, r, Cx, Real};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Repr {
    Physical,
    Fourier,
}

impl Repr {
    fn name(self) -> &'static str {
        match self {
            Repr::Physical => "physical",
            Repr::Fourier => "fourier",
        }
    }
}

/// A field on the box with 1 (scalar) or 4 (spinor) complex components.
///
/// Storage is component-major: component `c` occupies
/// `data[c * grid.nodes() .. (c + 1) * grid.nodes()]` in row-major node order.
///
/// Fourier data uses the amplitude convention: the coefficient stored at mode
/// `k` is the amplitude of the plane wave `exp(i * xi_k . x)`, so the forward
/// transform is `(1/n^3) * sum` and the roundtrip is exact. With this choice
/// the weighted Parseval identity `h^3 sum_x |u|^2 = L^3 sum_k |u_hat|^2`
/// holds with each side carrying its own natural measure and no further
/// constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T: Real> {
    grid: GridSpec<T>,
    ncomp: usize,
    repr: Repr,
    data: Vec<Cx<T>>,
}

impl<T: Real> Field<T> {
    pub fn zeros(grid: GridSpec<T>, ncomp: usize, repr: Repr) -> Result<Self> {
        if ncomp != 1 && ncomp != 4 {
            return Err(DkgError::ComponentMismatch(format!(
                "fields carry 1 or 4 components, got {ncomp}"
            )));
        }
        Ok(Field {
            grid,
            ncomp,
            repr,
            data: vec![Cx::new(T::zero(), T::zero()); ncomp * grid.nodes()],
        })
    }

    pub fn scalar(grid: GridSpec<T>, repr: Repr) -> Self {
        Self::zeros(grid, 1, repr).expect("1 component is valid")
    }

    pub fn spinor(grid: GridSpec<T>, repr: Repr) -> Self {
        Self::zeros(grid, 4, repr).expect("4 components are valid")
    }

    /// Builds a physical-space field from a pointwise function of position.
    pub fn from_fn(
        grid: GridSpec<T>,
        ncomp: usize,
        mut f: impl FnMut([T; 3], usize) -> Cx<T>,
    ) -> Result<Self> {
        let mut out = Self::zeros(grid, ncomp, Repr::Physical)?;
        let nodes = grid.nodes();
        for (flat, ix, iy, iz) in grid.iter_indices() {
            let x = grid.x(ix, iy, iz);
            for c in 0..ncomp {
                out.data[c * nodes + flat] = f(x, c);
            }
        }
        Ok(out)
    }

    /// Builds a Fourier-space field from explicit mode amplitudes; entries are
    /// `(integer mode triple, component, amplitude)`.
    pub fn from_modes(
        grid: GridSpec<T>,
        ncomp: usize,
        modes: &[([i64; 3], usize, Cx<T>)],
    ) -> Result<Self> {
        let mut out = Self::zeros(grid, ncomp, Repr::Fourier)?;
        let nodes = grid.nodes();
        let half = (grid.n / 2) as i64;
        for &(k, c, a) in modes {
            if c >= ncomp {
                return Err(DkgError::ComponentMismatch(format!(
                    "component {c} out of range for {ncomp}-component field"
                )));
            }
            for ka in k {
                if !(-half..half).contains(&ka) {
                    return Err(DkgError::OffLattice([
                        k[0] as f64,
                        k[1] as f64,
                        k[2] as f64,
                    ]));
                }
            }
            let flat = grid.flat(
                grid.unwrap_mode(k[0]),
                grid.unwrap_mode(k[1]),
                grid.unwrap_mode(k[2]),
            );
            out.data[c * nodes + flat] += a;
        }
        Ok(out)
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    #[inline]
    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    #[inline]
    pub fn repr(&self) -> Repr {
        self.repr
    }

    #[inline]
    pub fn data(&self) -> &[Cx<T>] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [Cx<T>] {
        &mut self.data
    }

    #[inline]
    pub fn comp(&self, c: usize) -> &[Cx<T>] {
        let nodes = self.grid.nodes();
        &self.data[c * nodes..(c + 1) * nodes]
    }

    #[inline]
    pub fn comp_mut(&mut self, c: usize) -> &mut [Cx<T>] {
        let nodes = self.grid.nodes();
        &mut self.data[c * nodes..(c + 1) * nodes]
    }

    pub fn expect_repr(&self, repr: Repr) -> Result<()> {
        if self.repr != repr {
            return Err(DkgError::ReprMismatch {
                expected: repr.name(),
                found: self.repr.name(),
            });
        }
        Ok(())
    }

    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(DkgError::GridMismatch(format!(
                "n={} len={} vs n={} len={}",
                self.grid.n, self.grid.len, other.grid.n, other.grid.len
            )));
        }
        if self.ncomp != other.ncomp {
            return Err(DkgError::ComponentMismatch(format!(
                "{} vs {} components",
                self.ncomp, other.ncomp
            )));
        }
        if self.repr != other.repr {
            return Err(DkgError::ReprMismatch {
                expected: self.repr.name(),
                found: other.repr.name(),
            });
        }
        Ok(())
    }

    /// Forward transform into mode amplitudes. Consumes the field; errors if
    /// it is already in Fourier representation.
    pub fn into_fourier(mut self) -> Result<Self> {
        self.expect_repr(Repr::Physical)?;
        fft3(&mut self.data, self.grid.n, self.ncomp, true);
        let scale = T::one() / r::<T>(self.grid.nodes() as f64);
        for v in self.data.iter_mut() {
            *v = Cx::new(v.re * scale, v.im * scale);
        }
        self.repr = Repr::Fourier;
        Ok(self)
    }

    /// Inverse transform back to node values. Consumes the field; errors if
    /// it is already in physical representation.
    pub fn into_physical(mut self) -> Result<Self> {
        self.expect_repr(Repr::Fourier)?;
        fft3(&mut self.data, self.grid.n, self.ncomp, false);
        self.repr = Repr::Physical;
        Ok(self)
    }

    pub fn to_fourier(&self) -> Result<Self> {
        self.clone().into_fourier()
    }

    pub fn to_physical(&self) -> Result<Self> {
        self.clone().into_physical()
    }

    /// The field in the requested representation, transforming if needed.
    pub fn in_repr(&self, repr: Repr) -> Result<Self> {
        if self.repr == repr {
            Ok(self.clone())
        } else if repr == Repr::Fourier {
            self.to_fourier()
        } else {
            self.to_physical()
        }
    }

    /// Weighted L2 norm: `sqrt(h^3 sum |u|^2)` over nodes and components in
    /// physical space, `sqrt(L^3 sum |u_hat|^2)` over modes in Fourier space.
    pub fn l2_norm(&self) -> T {
        let w = match self.repr {
            Repr::Physical => self.grid.cell_volume(),
            Repr::Fourier => self.grid.volume(),
        };
        let s: T = self
            .data
            .iter()
            .fold(T::zero(), |acc, v| acc + v.norm_sqr());
        (w * s).sqrt()
    }

    /// Weighted L2 inner product (antilinear in `self`), summed over
    /// components. Both fields must share grid, components, representation.
    pub fn l2_inner(&self, other: &Self) -> Result<Cx<T>> {
        self.check_compatible(other)?;
        let w = match self.repr {
            Repr::Physical => self.grid.cell_volume(),
            Repr::Fourier => self.grid.volume(),
        };
        let mut acc = Cx::new(T::zero(), T::zero());
        for (a, b) in self.data.iter().zip(other.data.iter()) {
            acc += a.conj() * *b;
        }
        Ok(Cx::new(acc.re * w, acc.im * w))
    }

    pub fn sup_norm(&self) -> T {
        // Pointwise C^ncomp modulus, maximized over nodes.
        let nodes = self.grid.nodes();
        let mut best = T::zero();
        for i in 0..nodes {
            let mut s = T::zero();
            for c in 0..self.ncomp {
                s += self.data[c * nodes + i].norm_sqr();
            }
            best = num_traits::Float::max(best, s);
        }
        best.sqrt()
    }

    /// `(h^3 sum_x |u(x)|^p)^(1/p)` with the pointwise C^ncomp modulus;
    /// physical representation required.
    pub fn lp_norm(&self, p: T) -> Result<T> {
        self.expect_repr(Repr::Physical)?;
        if !(p >= T::one()) {
            return Err(DkgError::InvalidParam("Lp norm needs p >= 1".into()));
        }
        let nodes = self.grid.nodes();
        let mut s = T::zero();
        for i in 0..nodes {
            let mut m = T::zero();
            for c in 0..self.ncomp {
                m += self.data[c * nodes + i].norm_sqr();
            }
            s += m.powf(p / r::<T>(2.0));
        }
        Ok((self.grid.cell_volume() * s).powf(T::one() / p))
    }

    pub fn scale_in_place(&mut self, a: Cx<T>) {
        for v in self.data.iter_mut() {
            *v *= a;
        }
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: Cx<T>, other: &Self) -> Result<()> {
        self.check_compatible(other)?;
        for (x, y) in self.data.iter_mut().zip(other.data.iter()) {
            *x += a * *y;
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(Cx::new(T::one(), T::zero()), other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(Cx::new(-T::one(), T::zero()), other)?;
        Ok(out)
    }

    /// Applies a scalar Fourier multiplier `v(xi)` to every component.
    /// The field must be in Fourier representation.
    pub fn apply_mode_map(&mut self, f: impl Fn([T; 3]) -> Cx<T>) -> Result<()> {
        self.expect_repr(Repr::Fourier)?;
        let grid = self.grid;
        let nodes = grid.nodes();
        let n = grid.n;
        let mut flat = 0usize;
        for ix in 0..n {
            for iy in 0..n {
                for iz in 0..n {
                    let m = f(grid.xi(ix, iy, iz));
                    for c in 0..self.ncomp {
                        self.data[c * nodes + flat] *= m;
                    }
                    flat += 1;
                }
            }
        }
        Ok(())
    }

    /// Applies a matrix-valued Fourier multiplier to a 4-component field.
    pub fn apply_mode_matrix(
        &mut self,
        f: impl Fn([T; 3]) -> crate::gamma::Mat4<T>,
    ) -> Result<()> {
        self.expect_repr(Repr::Fourier)?;
        if self.ncomp != 4 {
            return Err(DkgError::ComponentMismatch(
                "matrix multipliers act on 4-component fields".into(),
            ));
        }
        let grid = self.grid;
        let nodes = grid.nodes();
        let n = grid.n;
        let mut flat = 0usize;
        for ix in 0..n {
            for iy in 0..n {
                for iz in 0..n {
                    let m = f(grid.xi(ix, iy, iz));
                    let v = [
                        self.data[flat],
                        self.data[nodes + flat],
                        self.data[2 * nodes + flat],
                        self.data[3 * nodes + flat],
                    ];
                    let w = m.mul_vec(v);
                    self.data[flat] = w[0];
                    self.data[nodes + flat] = w[1];
                    self.data[2 * nodes + flat] = w[2];
                    self.data[3 * nodes + flat] = w[3];
                    flat += 1;
                }
            }
        }
        Ok(())
    }
}

/// In-place 3d FFT on `ncomp` component blocks of an `n^3` row-major array.
/// `forward` uses the `exp(-i xi x)` kernel; no normalization is applied.
pub(crate) fn fft3<T: Real>(data: &mut [Cx<T>], n: usize, ncomp: usize, forward: bool) {
    let mut planner = FftPlanner::<T>::new();
    let fft = if forward {
        planner.plan_fft_forward(n)
    } else {
        planner.plan_fft_inverse(n)
    };
    let nodes = n * n * n;
    data.par_chunks_mut(nodes).take(ncomp).for_each(|block| {
        let mut scratch =
            vec![Cx::new(T::zero(), T::zero()); fft.get_inplace_scratch_len().max(n)];
        // z axis: contiguous lines
        for line in block.chunks_mut(n) {
            fft.process_with_scratch(line, &mut scratch);
        }
        // y axis: stride n within each x-slab
        let mut line = vec![Cx::new(T::zero(), T::zero()); n];
        for slab in block.chunks_mut(n * n) {
            for iz in 0..n {
                for iy in 0..n {
                    line[iy] = slab[iy * n + iz];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for iy in 0..n {
                    slab[iy * n + iz] = line[iy];
                }
            }
        }
        // x axis: stride n^2
        for iy in 0..n {
            for iz in 0..n {
                let base = iy * n + iz;
                for ix in 0..n {
                    line[ix] = block[ix * n * n + base];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for ix in 0..n {
                    block[ix * n * n + base] = line[ix];
                }
            }
        }
    });
}

/// Pointwise `psi^dagger gamma^0 phi` of two spinor fields in physical space;
/// the result is the scalar field `psi-bar phi`.
pub fn dirac_bilinear<T: Real>(psi: &Field<T>, phi: &Field<T>) -> Result<Field<T>> {
    psi.check_compatible(phi)?;
    psi.expect_repr(Repr::Physical)?;
    if psi.ncomp != 4 {
        return Err(DkgError::ComponentMismatch(
            "the Dirac bilinear needs 4-component fields".into(),
        ));
    }
    let mut out = Field::scalar(psi.grid, Repr::Physical);
    let nodes = psi.grid.nodes();
    for i in 0..nodes {
        let a = [
            psi.data[i],
            psi.data[nodes + i],
            psi.data[2 * nodes + i],
            psi.data[3 * nodes + i],
        ];
        let b = [
            phi.data[i],
            phi.data[nodes + i],
            phi.data[2 * nodes + i],
            phi.data[3 * nodes + i],
        ];
        out.data[i] = dirac_pair(&a, &b);
    }
    Ok(out)
}

/// A sequence of fields sampled on a uniform time grid.
#[derive(Debug, Clone)]
pub struct Trajectory<T: Real> {
    pub tgrid: TimeGrid<T>,
    pub frames: Vec<Field<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn new(tgrid: TimeGrid<T>, frames: Vec<Field<T>>) -> Result<Self> {
        if frames.is_empty() {
            return Err(DkgError::InvalidParam("trajectory needs at least one frame".into()));
        }
        if frames.len() != tgrid.samples() {
            return Err(DkgError::InvalidParam(format!(
                "{} frames for {} sample times",
                frames.len(),
                tgrid.samples()
            )));
        }
        for f in &frames[1..] {
            frames[0].check_compatible(f)?;
        }
        Ok(Trajectory { tgrid, frames })
    }

    pub fn grid(&self) -> &GridSpec<T> {
        self.frames[0].grid()
    }

    pub fn ncomp(&self) -> usize {
        self.frames[0].ncomp()
    }

    pub fn repr(&self) -> Repr {
        self.frames[0].repr()
    }

    /// Applies `f` to every frame (e.g. a multiplier or transform).
    pub fn map_frames(&self, mut f: impl FnMut(&Field<T>) -> Result<Field<T>>) -> Result<Self> {
        let mut frames = Vec::with_capacity(self.frames.len());
        for fr in &self.frames {
            frames.push(f(fr)?);
        }
        Trajectory::new(self.tgrid, frames)
    }

    /// `L^q_t L^r_x` mixed norm by trapezoid quadrature in time; `q = None`
    /// means the sup in time. Frames must be in physical representation.
    pub fn mixed_norm(&self, q: Option<T>, rr: Option<T>) -> Result<T> {
        let vals: Vec<T> = self
            .frames
            .iter()
            .map(|fr| match rr {
                Some(p) => fr.lp_norm(p),
                None => {
                    fr.expect_repr(Repr::Physical)?;
                    Ok(fr.sup_norm())
                }
            })
            .collect::<Result<_>>()?;
        match q {
            None => Ok(vals
                .into_iter()
                .fold(T::zero(), |a, b| num_traits::Float::max(a, b))),
            Some(q) => {
                if !(q >= T::one()) {
                    return Err(DkgError::InvalidParam("Lq norm needs q >= 1".into()));
                }
                let dt = self.tgrid.dt;
                let half = r::<T>(0.5);
                let mut acc = T::zero();
                let last = vals.len() - 1;
                for (j, v) in vals.iter().enumerate() {
                    let w = if j == 0 || j == last { dt * half } else { dt };
                    acc += w * v.powf(q);
                }
                Ok(acc.powf(T::one() / q))
            }
        }
    }
}

/// One analytic plane-wave packet `amp * exp(i (tau t + xi . x))`.
///
/// `tau` is the time frequency in the synthesis convention
/// `u(t) = integral u_hat(tau) e^{i t tau}`; a free wave of the propagator
/// `exp(-i sign t <grad>_m)` therefore carries `tau = -sign * <xi>_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct WavePacket<T: Real> {
    pub tau: T,
    pub xi: [T; 3],
    pub amp: Vec<Cx<T>>,
}

/// Finite sum of plane-wave packets with a common component count.
#[derive(Debug, Clone)]
pub struct WavePacketSum<T: Real> {
    pub ncomp: usize,
    pub packets: Vec<WavePacket<T>>,
}

impl<T: Real> WavePacketSum<T> {
    pub fn new(ncomp: usize, packets: Vec<WavePacket<T>>) -> Result<Self> {
        if ncomp != 1 && ncomp != 4 {
            return Err(DkgError::ComponentMismatch(format!(
                "packets carry 1 or 4 components, got {ncomp}"
            )));
        }
        for p in &packets {
            if p.amp.len() != ncomp {
                return Err(DkgError::ComponentMismatch(format!(
                    "packet amplitude has {} entries, expected {ncomp}",
                    p.amp.len()
                )));
            }
        }
        Ok(WavePacketSum { ncomp, packets })
    }

    /// Free-wave packets for the half-wave flow `exp(-i sign t <grad>_m)`:
    /// every mode gets `tau = -sign * <xi>_m`.
    pub fn free_waves(sign: i32, m: T, modes: Vec<([T; 3], Vec<Cx<T>>)>) -> Result<Self> {
        let ncomp = modes.first().map(|(_, a)| a.len()).unwrap_or(1);
        let s = r::<T>(sign as f64);
        let packets = modes
            .into_iter()
            .map(|(xi, amp)| WavePacket { tau: -s * bracket(xi, m), xi, amp })
            .collect();
        Self::new(ncomp, packets)
    }

    /// Checks every packet frequency lies on `grid`'s Fourier lattice.
    pub fn validate_on_grid(&self, grid: &GridSpec<T>) -> Result<()> {
        for p in &self.packets {
            grid.mode_of(
                [p.xi[0].to_f64(), p.xi[1].to_f64(), p.xi[2].to_f64()],
                1e-9,
            )?;
        }
        Ok(())
    }

    /// Exact `L^2_x` norm at time `t` (modes grouped, packets may repeat xi).
    pub fn l2_norm_at(&self, grid: &GridSpec<T>, t: T) -> T {
        use std::collections::HashMap;
        let mut by_mode: HashMap<[i64; 3], Vec<Cx<T>>> = HashMap::new();
        for p in &self.packets {
            let k = grid
                .mode_of([p.xi[0].to_f64(), p.xi[1].to_f64(), p.xi[2].to_f64()], 1e-9)
                .expect("validated packet");
            let rot = Cx::new(T::zero(), p.tau * t).exp();
            let entry = by_mode
                .entry(k)
                .or_insert_with(|| vec![Cx::new(T::zero(), T::zero()); self.ncomp]);
            for (e, a) in entry.iter_mut().zip(p.amp.iter()) {
                *e += rot * *a;
            }
        }
        let mut s = T::zero();
        for amps in by_mode.values() {
            for a in amps {
                s += a.norm_sqr();
            }
        }
        (grid.volume() * s).sqrt()
    }

    /// Samples the sum on a space-time grid; frame `j` holds
    /// `sum_p amp_p exp(i (tau_p t_j + xi_p . x))` at the nodes.
    pub fn sample(&self, grid: GridSpec<T>, tgrid: TimeGrid<T>) -> Result<Trajectory<T>> {
        self.validate_on_grid(&grid)?;
        let n = grid.n;
        let nodes = grid.nodes();
        // Per-axis phase tables e^{i xi_a x_a} for each packet.
        let tables: Vec<[Vec<Cx<T>>; 3]> = self
            .packets
            .iter()
            .map(|p| {
                let mut t: [Vec<Cx<T>>; 3] = [vec![], vec![], vec![]];
                for a in 0..3 {
                    t[a] = (0..n)
                        .map(|i| {
                            let x = grid.h() * r::<T>(grid.wrap(i) as f64);
                            Cx::new(T::zero(), p.xi[a] * x).exp()
                        })
                        .collect();
                }
                t
            })
            .collect();
        let frames: Vec<Field<T>> = (0..tgrid.samples())
            .into_par_iter()
            .map(|j| {
                let t = tgrid.t(j);
                let mut fr = Field::zeros(grid, self.ncomp, Repr::Physical)
                    .expect("component count validated");
                for (p, tab) in self.packets.iter().zip(tables.iter()) {
                    let rot = Cx::new(T::zero(), p.tau * t).exp();
                    for ix in 0..n {
                        let px = tab[0][ix];
                        for iy in 0..n {
                            let pxy = px * tab[1][iy];
                            let base = (ix * n + iy) * n;
                            for iz in 0..n {
                                let phase = pxy * tab[2][iz] * rot;
                                for c in 0..self.ncomp {
                                    fr.data[c * nodes + base + iz] += p.amp[c] * phase;
                                }
                            }
                        }
                    }
                }
                fr
            })
            .collect();
        Trajectory::new(tgrid, frames)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tau() -> f64 {
        std::f64::consts::TAU
    }

    fn random_field(grid: GridSpec<f64>, ncomp: usize, seed: u64) -> Field<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = Field::zeros(grid, ncomp, Repr::Physical).unwrap();
        for v in f.data_mut().iter_mut() {
            *v = Cx::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        f
    }

    #[test]
    fn roundtrip_is_identity() {
        let grid = GridSpec::new(8, 5.0).unwrap();
        let f = random_field(grid, 4, 7);
        let back = f.to_fourier().unwrap().into_physical().unwrap();
        let err = f.sub(&back).unwrap().l2_norm() / f.l2_norm();
        assert!(err < 1e-12, "roundtrip error {err}");
    }

    #[test]
    fn plane_wave_hits_single_mode() {
        let grid = GridSpec::new(16, tau()).unwrap();
        let k = [3i64, -2, 5];
        let f = Field::from_fn(grid, 1, |x, _| {
            Cx::new(0.0, k[0] as f64 * x[0] + k[1] as f64 * x[1] + k[2] as f64 * x[2]).exp()
        })
        .unwrap();
        let hat = f.into_fourier().unwrap();
        let flat = grid.flat(
            grid.unwrap_mode(k[0]),
            grid.unwrap_mode(k[1]),
            grid.unwrap_mode(k[2]),
        );
        assert!((hat.data()[flat] - Cx::new(1.0, 0.0)).norm() < 1e-12);
        let off: f64 = hat
            .data()
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != flat)
            .map(|(_, v)| v.norm())
            .fold(0.0, f64::max);
        assert!(off < 1e-13, "stray coefficients up to {off}");
    }

    #[test]
    fn parseval_weights_match() {
        let grid = GridSpec::new(8, 3.0).unwrap();
        let f = random_field(grid, 4, 11);
        let g = random_field(grid, 4, 13);
        let hat_f = f.to_fourier().unwrap();
        let hat_g = g.to_fourier().unwrap();
        assert!((f.l2_norm() - hat_f.l2_norm()).abs() < 1e-12 * f.l2_norm());
        let a = f.l2_inner(&g).unwrap();
        let b = hat_f.l2_inner(&hat_g).unwrap();
        assert!((a - b).norm() < 1e-12 * a.norm());
    }

    #[test]
    fn dirac_bilinear_signature() {
        let grid = GridSpec::new(4, 1.0).unwrap();
        let mut psi = Field::spinor(grid, Repr::Physical);
        for v in psi.comp_mut(0).iter_mut() {
            *v = Cx::new(1.0, 0.0);
        }
        let d = dirac_bilinear(&psi, &psi).unwrap();
        assert!(d.data().iter().all(|v| (v - Cx::new(1.0, 0.0)).norm() < 1e-15));
        let mut psi = Field::spinor(grid, Repr::Physical);
        for v in psi.comp_mut(2).iter_mut() {
            *v = Cx::new(1.0, 0.0);
        }
        let d = dirac_bilinear(&psi, &psi).unwrap();
        assert!(d.data().iter().all(|v| (v + Cx::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn mixed_norm_of_constant_modulus() {
        // |u| = 2 on a box of volume L^3 over a window T:
        // L^q_t L^r_x = 2 * L^(3/r) * T^(1/q).
        let grid = GridSpec::new(4, 3.0).unwrap();
        let tg = crate::grid::TimeGrid::new(0.0, 0.5, 4).unwrap();
        let frames: Vec<Field<f64>> = (0..tg.samples())
            .map(|j| {
                // rotate the phase per frame; the modulus stays 2
                Field::from_fn(grid, 1, |_, _| Cx::new(0.0, 0.3 * j as f64).exp() * 2.0).unwrap()
            })
            .collect();
        let traj = Trajectory::new(tg, frames).unwrap();
        let got = traj.mixed_norm(Some(4.0), Some(4.0)).unwrap();
        let want = 2.0 * 27.0f64.powf(0.25) * 2.0f64.powf(0.25);
        assert!((got - want).abs() < 1e-12 * want, "got {got} want {want}");
        let sup = traj.mixed_norm(None, Some(2.0)).unwrap();
        assert!((sup - 2.0 * 27.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn packet_sampling_matches_analytic_norm() {
        let grid = GridSpec::new(8, tau()).unwrap();
        let tg = crate::grid::TimeGrid::new(0.0, 0.25, 3).unwrap();
        let sum = WavePacketSum::free_waves(
            1,
            1.0,
            vec![
                ([1.0, 0.0, 0.0], vec![Cx::new(0.5, 0.0)]),
                ([0.0, 2.0, -1.0], vec![Cx::new(0.0, 0.25)]),
            ],
        )
        .unwrap();
        let traj = sum.sample(grid, tg).unwrap();
        for (j, fr) in traj.frames.iter().enumerate() {
            let want = sum.l2_norm_at(&grid, tg.t(j));
            assert!((fr.l2_norm() - want).abs() < 1e-10);
        }
        // distinct modes: norm is time independent, sqrt(L^3 (0.25 + 0.0625))
        let want = (tau().powi(3) * 0.3125).sqrt();
        assert!((traj.frames[0].l2_norm() - want).abs() < 1e-10);
    }

    #[test]
    fn off_lattice_packet_rejected() {
        let grid = GridSpec::new(8, tau()).unwrap();
        let sum = WavePacketSum::free_waves(1, 1.0, vec![([0.5, 0.0, 0.0], vec![Cx::new(1.0, 0.0)])])
            .unwrap();
        assert!(matches!(
            sum.validate_on_grid(&grid),
            Err(DkgError::OffLattice(_))
        ));
    }

    #[test]
    fn f32_kernel_roundtrip() {
        let grid = GridSpec::<f32>::new(8, 4.0).unwrap();
        let mut f = Field::<f32>::scalar(grid, Repr::Physical);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for v in f.data_mut().iter_mut() {
            *v = Cx::new(rng.gen_range(-1.0f32..1.0), rng.gen_range(-1.0f32..1.0));
        }
        let back = f.to_fourier().unwrap().into_physical().unwrap();
        let err = f.sub(&back).unwrap().l2_norm() / f.l2_norm();
        assert!(err < 1e-5, "f32 roundtrip error {err}");
    }
}
