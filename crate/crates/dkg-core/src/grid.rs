//! Periodic box discretization: spatial grid, Fourier lattice, time grid.

use crate::error::{DkgError, Result};
use crate::scalar::{r, Real};
use serde::{Deserialize, Serialize};

/// Uniform `n^3` grid on a periodic box of side `len`.
///
/// Physical nodes sit at `x_i = h * w(i)` with `h = len / n` and the centered
/// wrap `w(i) = i` for `i < n/2`, `w(i) = i - n` otherwise, so the box is
/// `[-len/2, len/2)^3` and the origin is a node. The Fourier lattice uses the
/// same wrap: mode `i` carries frequency `xi = (2*pi/len) * w(i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec<T: Real> {
    pub n: usize,
    pub len: T,
}

impl<T: Real> GridSpec<T> {
    pub fn new(n: usize, len: T) -> Result<Self> {
        if n < 4 || n % 2 != 0 {
            return Err(DkgError::InvalidParam(format!(
                "grid size must be even and at least 4, got {n}"
            )));
        }
        if !(len > T::zero()) {
            return Err(DkgError::InvalidParam("box length must be positive".into()));
        }
        Ok(GridSpec { n, len })
    }

    #[inline]
    pub fn nodes(&self) -> usize {
        self.n * self.n * self.n
    }

    /// Mesh width `h = len / n`.
    #[inline]
    pub fn h(&self) -> T {
        self.len / r(self.n as f64)
    }

    /// Volume element `h^3` of the physical quadrature.
    #[inline]
    pub fn cell_volume(&self) -> T {
        let h = self.h();
        h * h * h
    }

    #[inline]
    pub fn volume(&self) -> T {
        self.len * self.len * self.len
    }

    /// Frequency spacing `2*pi / len`.
    #[inline]
    pub fn dxi(&self) -> T {
        T::TAU() / self.len
    }

    /// Centered integer wrap of an array index.
    #[inline]
    pub fn wrap(&self, i: usize) -> i64 {
        if i < self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Array index of a centered integer (inverse of `wrap`).
    #[inline]
    pub fn unwrap_mode(&self, k: i64) -> usize {
        if k >= 0 {
            k as usize
        } else {
            (k + self.n as i64) as usize
        }
    }

    #[inline]
    pub fn flat(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.n + iy) * self.n + iz
    }

    /// Physical coordinates of node `(ix, iy, iz)`.
    #[inline]
    pub fn x(&self, ix: usize, iy: usize, iz: usize) -> [T; 3] {
        let h = self.h();
        [
            h * r(self.wrap(ix) as f64),
            h * r(self.wrap(iy) as f64),
            h * r(self.wrap(iz) as f64),
        ]
    }

    /// Frequency carried by Fourier index `(ix, iy, iz)`.
    #[inline]
    pub fn xi(&self, ix: usize, iy: usize, iz: usize) -> [T; 3] {
        let d = self.dxi();
        [
            d * r(self.wrap(ix) as f64),
            d * r(self.wrap(iy) as f64),
            d * r(self.wrap(iz) as f64),
        ]
    }

    /// Largest resolved frequency magnitude per axis, `(2*pi/len) * n/2`.
    #[inline]
    pub fn xi_nyquist(&self) -> T {
        self.dxi() * r((self.n / 2) as f64)
    }

    /// Checks that `xi` lies on the Fourier lattice (within `tol` relative to
    /// the frequency spacing) and is resolved; returns the integer triple.
    pub fn mode_of(&self, xi: [f64; 3], tol: f64) -> Result<[i64; 3]> {
        let d = self.dxi().to_f64();
        let mut k = [0i64; 3];
        for a in 0..3 {
            let q = xi[a] / d;
            let kq = q.round();
            if (q - kq).abs() > tol {
                return Err(DkgError::OffLattice(xi));
            }
            let half = (self.n / 2) as i64;
            let ki = kq as i64;
            if !(-half..half).contains(&ki) {
                return Err(DkgError::OffLattice(xi));
            }
            k[a] = ki;
        }
        Ok(k)
    }

    /// Iterates `(flat, ix, iy, iz)` in storage order.
    pub fn iter_indices(&self) -> impl Iterator<Item = (usize, usize, usize, usize)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |ix| {
            (0..n).flat_map(move |iy| (0..n).map(move |iz| (self.flat(ix, iy, iz), ix, iy, iz)))
        })
    }
}

/// One lattice shell: all indices whose centered integer triple has the same
/// exact `|k|^2 = s`. Shells are the finest radius-resolution the lattice
/// offers; every radial Fourier multiplier is constant on each of them.
#[derive(Debug, Clone)]
pub struct LatticeShell {
    /// Integer squared radius.
    pub s: u64,
    /// Flat indices of the member nodes.
    pub idx: Vec<u32>,
}

/// Groups all grid indices into lattice shells, sorted by squared radius.
/// The same decomposition serves both physical nodes (radius `h*sqrt(s)`) and
/// Fourier modes (radius `(2*pi/len)*sqrt(s)`).
pub fn lattice_shells<T: Real>(grid: &GridSpec<T>) -> Vec<LatticeShell> {
    let n = grid.n;
    let mut by_s: std::collections::BTreeMap<u64, Vec<u32>> = std::collections::BTreeMap::new();
    for ix in 0..n {
        let kx = grid.wrap(ix);
        for iy in 0..n {
            let ky = grid.wrap(iy);
            for iz in 0..n {
                let kz = grid.wrap(iz);
                let s = (kx * kx + ky * ky + kz * kz) as u64;
                by_s.entry(s).or_default().push(grid.flat(ix, iy, iz) as u32);
            }
        }
    }
    by_s.into_iter().map(|(s, idx)| LatticeShell { s, idx }).collect()
}

/// Uniform time grid: `steps` intervals of width `dt` starting at `t0`,
/// i.e. `steps + 1` sample times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid<T: Real> {
    pub t0: T,
    pub dt: T,
    pub steps: usize,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(t0: T, dt: T, steps: usize) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(DkgError::InvalidParam("dt must be positive".into()));
        }
        if steps == 0 {
            return Err(DkgError::InvalidParam("time grid needs at least one step".into()));
        }
        Ok(TimeGrid { t0, dt, steps })
    }

    #[inline]
    pub fn samples(&self) -> usize {
        self.steps + 1
    }

    #[inline]
    pub fn t(&self, j: usize) -> T {
        self.t0 + self.dt * r(j as f64)
    }

    /// Window length `steps * dt`.
    #[inline]
    pub fn window(&self) -> T {
        self.dt * r(self.steps as f64)
    }

    pub fn times(&self) -> impl Iterator<Item = T> + '_ {
        (0..self.samples()).map(move |j| self.t(j))
    }
}

/// `true` when `x` is an exact nonnegative power of two (1, 2, 4, ...).
pub fn is_dyadic(x: f64) -> bool {
    if !(x >= 1.0) || !x.is_finite() {
        return false;
    }
    let l = x.log2().round();
    (x - l.exp2()).abs() == 0.0
}

/// Dyadic blocks `1, 2, 4, ..., <= max`, at least `[1]`.
pub fn dyadic_blocks_up_to(max: f64) -> Vec<f64> {
    let mut out = vec![1.0];
    let mut l = 2.0;
    while l <= max {
        out.push(l);
        l *= 2.0;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_is_centered() {
        let g = GridSpec::new(8, 2.0f64 * std::f64::consts::PI).unwrap();
        let ks: Vec<i64> = (0..8).map(|i| g.wrap(i)).collect();
        assert_eq!(ks, vec![0, 1, 2, 3, -4, -3, -2, -1]);
        for i in 0..8 {
            assert_eq!(g.unwrap_mode(g.wrap(i)), i);
        }
    }

    #[test]
    fn frequencies_on_two_pi_box_are_integers() {
        let g = GridSpec::new(8, std::f64::consts::TAU).unwrap();
        let xi = g.xi(3, 0, 7);
        assert!((xi[0] - 3.0).abs() < 1e-14);
        assert!(xi[1].abs() < 1e-14);
        assert!((xi[2] + 1.0).abs() < 1e-14);
        assert_eq!(g.mode_of([3.0, 0.0, -1.0], 1e-9).unwrap(), [3, 0, -1]);
        assert!(g.mode_of([0.5, 0.0, 0.0], 1e-9).is_err());
        assert!(g.mode_of([4.0, 0.0, 0.0], 1e-9).is_err()); // nyquist excluded
    }

    #[test]
    fn shells_partition_the_grid() {
        let g = GridSpec::new(6, 1.0f64).unwrap();
        let shells = lattice_shells(&g);
        let total: usize = shells.iter().map(|s| s.idx.len()).sum();
        assert_eq!(total, g.nodes());
        // |k|^2 = 1 has the six unit vectors; |k|^2 = 2 the twelve diagonals.
        assert_eq!(shells.iter().find(|s| s.s == 1).unwrap().idx.len(), 6);
        assert_eq!(shells.iter().find(|s| s.s == 2).unwrap().idx.len(), 12);
        // sorted ascending, no duplicates
        for w in shells.windows(2) {
            assert!(w[0].s < w[1].s);
        }
    }

    #[test]
    fn time_grid_window() {
        let tg = TimeGrid::new(0.0f64, 0.25, 8).unwrap();
        assert_eq!(tg.samples(), 9);
        assert!((tg.window() - 2.0).abs() < 1e-15);
        assert!((tg.t(8) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn dyadic_predicate() {
        assert!(is_dyadic(1.0));
        assert!(is_dyadic(64.0));
        assert!(!is_dyadic(0.5));
        assert!(!is_dyadic(3.0));
        assert_eq!(dyadic_blocks_up_to(9.0), vec![1.0, 2.0, 4.0, 8.0]);
    }
}
