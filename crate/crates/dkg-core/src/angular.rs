//! Angular decompositions in frequency space.
//!
//! The angular blocks `H_N` act shell by shell on the Fourier lattice: every
//! set of modes with the same exact integer `|k|^2` carries a least-squares
//! spherical-harmonic analysis up to a per-shell degree cap chosen by
//! conditioning. Coefficients are weighted by the dyadic block profile in the
//! degree `l`; whatever the shell cannot resolve is assigned, as a residual,
//! to the block containing the lowest unresolved degree. Because the analysis
//! is shell-local, every `H_N` commutes exactly with radial multipliers, and
//! the blocks sum exactly to the identity.
//!
//! The same shell structure carries the projector onto the radial spinor
//! subspace spanned per mode by the two sections `(0, 1, 0, 0)` and
//! `(0, 0, nu_1 + i nu_2, nu_3)`, `nu = k/|k|`, which the free Dirac flow
//! preserves mode by mode.

use crate::error::{DkgError, Result};
use crate::field::{Field, Repr};
use crate::grid::{lattice_shells, GridSpec};
use crate::multipliers::Profile;
use crate::scalar::{r, Cx, Real};

/// Index of `(l, m)` in a degree-major table, `m` in `-l ..= l`.
#[inline]
pub fn lm_index(l: usize, m: i64) -> usize {
    (l * l) as usize + (m + l as i64) as usize
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on the
/// Legendre recurrence; exact for polynomials of degree `2n - 1`.
pub fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    assert!(n >= 1);
    let mut nodes = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    for i in 0..n {
        // Tricomi-style initial guess
        let mut x = r::<T>(
            (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos(),
        );
        for _ in 0..100 {
            // evaluate P_n and P_n' at x
            let mut p0 = T::one();
            let mut p1 = x;
            for k in 2..=n {
                let kk = r::<T>(k as f64);
                let p2 = ((r::<T>(2.0) * kk - T::one()) * x * p1 - (kk - T::one()) * p0) / kk;
                p0 = p1;
                p1 = p2;
            }
            let dpn = r::<T>(n as f64) * (x * p1 - p0) / (x * x - T::one());
            let dx = p1 / dpn;
            x -= dx;
            if dx.abs() <= T::epsilon() * r::<T>(4.0) {
                break;
            }
        }
        // recompute P_n' at the converged node for the weight
        let mut p0 = T::one();
        let mut p1 = x;
        for k in 2..=n {
            let kk = r::<T>(k as f64);
            let p2 = ((r::<T>(2.0) * kk - T::one()) * x * p1 - (kk - T::one()) * p0) / kk;
            p0 = p1;
            p1 = p2;
        }
        let dpn = r::<T>(n as f64) * (x * p1 - p0) / (x * x - T::one());
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = r::<T>(2.0) / ((T::one() - x * x) * dpn * dpn);
    }
    (nodes, weights)
}

/// All orthonormal spherical harmonics `Y_lm` with `l <= lmax` at the
/// direction `(ct, st, e_phi)` = (cos theta, sin theta, e^{i phi}), in
/// `lm_index` order. Fully normalized, Condon-Shortley phase.
pub fn sph_harm_all<T: Real>(lmax: usize, ct: T, st: T, e_phi: Cx<T>) -> Vec<Cx<T>> {
    let nb = (lmax + 1) * (lmax + 1);
    let mut out = vec![Cx::new(T::zero(), T::zero()); nb];
    let mut pmm = (T::one() / (r::<T>(4.0) * T::PI())).sqrt();
    let mut eimp = Cx::new(T::one(), T::zero());
    for m in 0..=lmax {
        if m > 0 {
            let mm = r::<T>(m as f64);
            pmm = -((mm + mm + T::one()) / (mm + mm)).sqrt() * st * pmm;
            eimp *= e_phi;
        }
        // l = m
        let mut plm2 = pmm; // P_{m}^{m}
        let ylm = eimp.scale_re(plm2);
        out[lm_index(m, m as i64)] = ylm;
        if m > 0 {
            let sgn = if m % 2 == 0 { T::one() } else { -T::one() };
            out[lm_index(m, -(m as i64))] = ylm.conj().scale_re(sgn);
        }
        if m == lmax {
            break;
        }
        // l = m + 1
        let mm = r::<T>(m as f64);
        let mut plm1 = (mm + mm + r::<T>(3.0)).sqrt() * ct * pmm; // P_{m+1}^{m}
        let ylm = eimp.scale_re(plm1);
        out[lm_index(m + 1, m as i64)] = ylm;
        if m > 0 {
            let sgn = if m % 2 == 0 { T::one() } else { -T::one() };
            out[lm_index(m + 1, -(m as i64))] = ylm.conj().scale_re(sgn);
        }
        // upward recurrence in l
        for l in (m + 2)..=lmax {
            let lf = r::<T>(l as f64);
            let mf = r::<T>(m as f64);
            let l2 = lf * lf;
            let a = ((r::<T>(4.0) * l2 - T::one()) / (l2 - mf * mf)).sqrt();
            let lm1 = lf - T::one();
            let b = (((lm1 * lm1 - mf * mf)) / (r::<T>(4.0) * lm1 * lm1 - T::one())).sqrt();
            let pl = a * (ct * plm1 - b * plm2);
            plm2 = plm1;
            plm1 = pl;
            let ylm = eimp.scale_re(pl);
            out[lm_index(l, m as i64)] = ylm;
            if m > 0 {
                let sgn = if m % 2 == 0 { T::one() } else { -T::one() };
                out[lm_index(l, -(m as i64))] = ylm.conj().scale_re(sgn);
            }
        }
    }
    out
}

trait ScaleRe<T: Real> {
    fn scale_re(self, s: T) -> Self;
}

impl<T: Real> ScaleRe<T> for Cx<T> {
    #[inline]
    fn scale_re(self, s: T) -> Self {
        Cx::new(self.re * s, self.im * s)
    }
}

/// Product quadrature on the unit sphere: Gauss-Legendre in `cos theta`
/// (`lmax + 1` nodes) times a uniform azimuthal grid (`2 lmax + 1` nodes).
/// Integrates products of harmonics up to combined degree `2 lmax` exactly.
#[derive(Debug, Clone)]
pub struct QuadSphere<T: Real> {
    pub lmax: usize,
    /// `(ct, st, e^{i phi}, weight)` per node.
    pub nodes: Vec<(T, T, Cx<T>, T)>,
}

impl<T: Real> QuadSphere<T> {
    pub fn new(lmax: usize) -> Self {
        let nt = lmax + 1;
        let np = 2 * lmax + 1;
        let (cts, wts) = gauss_legendre::<T>(nt);
        let wphi = T::TAU() / r::<T>(np as f64);
        let mut nodes = Vec::with_capacity(nt * np);
        for (ct, wt) in cts.iter().zip(wts.iter()) {
            let st = (T::one() - *ct * *ct).sqrt();
            for j in 0..np {
                let phi = T::TAU() * r::<T>(j as f64) / r::<T>(np as f64);
                nodes.push((*ct, st, Cx::new(phi.cos(), phi.sin()), *wt * wphi));
            }
        }
        QuadSphere { lmax, nodes }
    }

    /// Analysis: coefficients `c_lm = integral conj(Y_lm) f dS` of samples at
    /// the quadrature nodes. Exact for band-limited `f` (degree `<= lmax`).
    pub fn analyze(&self, values: &[Cx<T>]) -> Vec<Cx<T>> {
        assert_eq!(values.len(), self.nodes.len());
        let nb = (self.lmax + 1) * (self.lmax + 1);
        let mut out = vec![Cx::new(T::zero(), T::zero()); nb];
        for ((ct, st, ep, w), v) in self.nodes.iter().zip(values.iter()) {
            let y = sph_harm_all(self.lmax, *ct, *st, *ep);
            for (o, yy) in out.iter_mut().zip(y.iter()) {
                *o += yy.conj() * *v * Cx::new(*w, T::zero());
            }
        }
        out
    }

    /// Synthesis: pointwise sums `sum c_lm Y_lm` at the quadrature nodes.
    pub fn synthesize(&self, coeffs: &[Cx<T>]) -> Vec<Cx<T>> {
        let mut out = Vec::with_capacity(self.nodes.len());
        for (ct, st, ep, _) in self.nodes.iter() {
            let y = sph_harm_all(self.lmax, *ct, *st, *ep);
            let mut acc = Cx::new(T::zero(), T::zero());
            for (c, yy) in coeffs.iter().zip(y.iter()) {
                acc += *c * *yy;
            }
            out.push(acc);
        }
        out
    }
}

/// Per-shell analysis data of an [`AngularPlan`].
#[derive(Debug, Clone)]
struct ShellBasis<T: Real> {
    idx: Vec<u32>,
    /// unit directions of the member modes (the origin gets (0,0,1))
    dirs: Vec<[T; 3]>,
    /// resolvable spherical-harmonic degree on this shell
    lcap: usize,
    /// lower Cholesky factor of the Gram matrix A^H A, (lcap+1)^2 square
    chol: Vec<Cx<T>>,
}

/// Precomputed shell-by-shell spherical-harmonic analysis for one grid.
/// Immutable and shareable once built.
#[derive(Debug, Clone)]
pub struct AngularPlan<T: Real> {
    grid: GridSpec<T>,
    pub lmax: usize,
    shells: Vec<ShellBasis<T>>,
}

fn dir_of<T: Real>(k: [i64; 3]) -> [T; 3] {
    let n2 = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64;
    if n2 == 0.0 {
        return [T::zero(), T::zero(), T::one()];
    }
    let inv = 1.0 / n2.sqrt();
    [
        r::<T>(k[0] as f64 * inv),
        r::<T>(k[1] as f64 * inv),
        r::<T>(k[2] as f64 * inv),
    ]
}

fn angles_of<T: Real>(d: [T; 3]) -> (T, T, Cx<T>) {
    let ct = d[2];
    let st2 = d[0] * d[0] + d[1] * d[1];
    let st = st2.sqrt();
    let ep = if st.is_zero() {
        Cx::new(T::one(), T::zero())
    } else {
        Cx::new(d[0] / st, d[1] / st)
    };
    (ct, st, ep)
}

/// Cholesky of a Hermitian positive-definite matrix (lower factor), failing
/// if any pivot falls below `rel_tol` times the largest diagonal.
fn cholesky<T: Real>(g: &[Cx<T>], n: usize, rel_tol: T) -> Option<Vec<Cx<T>>> {
    let mut l = vec![Cx::new(T::zero(), T::zero()); n * n];
    let mut max_diag = T::zero();
    for i in 0..n {
        max_diag = num_traits::Float::max(max_diag, g[i * n + i].re);
    }
    if !(max_diag > T::zero()) {
        return None;
    }
    let floor = max_diag * rel_tol;
    for i in 0..n {
        for j in 0..=i {
            let mut s = g[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k].conj();
            }
            if i == j {
                if !(s.re > floor) {
                    return None;
                }
                l[i * n + i] = Cx::new(s.re.sqrt(), T::zero());
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn chol_solve<T: Real>(l: &[Cx<T>], n: usize, b: &mut [Cx<T>]) {
    // forward: L y = b
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    // backward: L^H x = y
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[k * n + i].conj() * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

impl<T: Real> AngularPlan<T> {
    /// Builds shell-by-shell analyses up to degree `lmax`. Shells that cannot
    /// support the full degree (too few or badly placed points) get a lower
    /// cap; the first unresolved degree is where their residual lands.
    pub fn new(grid: GridSpec<T>, lmax: usize) -> Result<Self> {
        if lmax < 1 || lmax > 64 {
            return Err(DkgError::InvalidParam(format!(
                "angular degree cap must lie in 1..=64, got {lmax}"
            )));
        }
        let raw = lattice_shells(&grid);
        let rel_tol = r::<T>(1e-7);
        let mut shells = Vec::with_capacity(raw.len());
        for shell in raw {
            let npts = shell.idx.len();
            let dirs: Vec<[T; 3]> = shell
                .idx
                .iter()
                .map(|&flat| {
                    let f = flat as usize;
                    let n = grid.n;
                    let iz = f % n;
                    let iy = (f / n) % n;
                    let ix = f / (n * n);
                    dir_of([grid.wrap(ix), grid.wrap(iy), grid.wrap(iz)])
                })
                .collect();
            // count bound: (l+1)^2 basis functions need at least that many points
            let lb = ((npts as f64).sqrt().floor() as usize).saturating_sub(1);
            let lstart = lmax.min(lb);
            // Gram at the largest candidate degree, leading blocks reused below
            let nb_max = (lstart + 1) * (lstart + 1);
            let mut gram = vec![Cx::new(T::zero(), T::zero()); nb_max * nb_max];
            for d in dirs.iter() {
                let (ct, st, ep) = angles_of(*d);
                let y = sph_harm_all(lstart, ct, st, ep);
                for i in 0..nb_max {
                    let yi = y[i].conj();
                    for j in 0..nb_max {
                        gram[i * nb_max + j] += yi * y[j];
                    }
                }
            }
            let mut chosen = None;
            for l in (0..=lstart).rev() {
                let nb = (l + 1) * (l + 1);
                let sub: Vec<Cx<T>> = (0..nb)
                    .flat_map(|i| (0..nb).map(move |j| (i, j)))
                    .map(|(i, j)| gram[i * nb_max + j])
                    .collect();
                if let Some(cl) = cholesky(&sub, nb, rel_tol) {
                    chosen = Some((l, cl));
                    break;
                }
            }
            let (lcap, chol) = chosen.expect("degree 0 Gram is the point count");
            shells.push(ShellBasis { idx: shell.idx, dirs, lcap, chol });
        }
        Ok(AngularPlan { grid, lmax, shells })
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    fn check_field(&self, f: &Field<T>) -> Result<()> {
        f.expect_repr(Repr::Fourier)?;
        if *f.grid() != self.grid {
            return Err(DkgError::GridMismatch(
                "field grid differs from the angular plan's grid".into(),
            ));
        }
        Ok(())
    }
}

/// Dyadic angular blocks covering degrees up to `lmax + 1` (the highest
/// degree a residual can carry).
pub fn angular_blocks(lmax: usize) -> Vec<f64> {
    let top = (lmax + 1) as f64;
    let mut out = vec![1.0];
    let mut n = 2.0;
    while n / 2.0 < top {
        out.push(n);
        n *= 2.0;
    }
    out
}

/// Angular block projector `H_N`: keeps spherical-harmonic degrees in the
/// dyadic block `N` (block 1 collects `l` in `{0, 1}`), shell by shell.
/// Fourier representation in and out.
pub fn angular_projector<T: Real>(
    f: &Field<T>,
    n_block: f64,
    plan: &AngularPlan<T>,
    profile: Profile,
) -> Result<Field<T>> {
    if !crate::grid::is_dyadic(n_block) {
        return Err(DkgError::NotDyadic(n_block));
    }
    if n_block / 2.0 >= (plan.lmax + 1) as f64 {
        return Err(DkgError::InvalidParam(format!(
            "block N = {n_block} lies beyond what a degree-{} plan can resolve",
            plan.lmax
        )));
    }
    plan.check_field(f)?;
    let nb_block = r::<T>(n_block);
    let mut out = Field::zeros(plan.grid, f.ncomp(), Repr::Fourier)?;
    let mut d: Vec<Cx<T>> = Vec::new();
    let mut rows: Vec<Cx<T>> = Vec::new();
    for shell in plan.shells.iter() {
        let npts = shell.idx.len();
        let nb = (shell.lcap + 1) * (shell.lcap + 1);
        // per-degree weights and the residual weight
        let mut wl = vec![T::zero(); shell.lcap + 1];
        for (l, w) in wl.iter_mut().enumerate() {
            *w = profile.block_weight(r::<T>(l as f64), nb_block);
        }
        let wres = profile.block_weight(r::<T>((shell.lcap + 1) as f64), nb_block);
        // harmonic rows for this shell
        rows.clear();
        rows.reserve(npts * nb);
        for dge in shell.dirs.iter() {
            let (ct, st, ep) = angles_of(*dge);
            let y = sph_harm_all(shell.lcap, ct, st, ep);
            rows.extend_from_slice(&y);
        }
        for c in 0..f.ncomp() {
            let comp = f.comp(c);
            d.clear();
            d.extend(shell.idx.iter().map(|&i| comp[i as usize]));
            // normal equations: coeffs = G^{-1} A^H d
            let mut coef = vec![Cx::new(T::zero(), T::zero()); nb];
            for (p, dv) in d.iter().enumerate() {
                let row = &rows[p * nb..(p + 1) * nb];
                for (ci, yv) in coef.iter_mut().zip(row.iter()) {
                    *ci += yv.conj() * *dv;
                }
            }
            chol_solve(&shell.chol, nb, &mut coef);
            // weighted coefficients for synthesis
            let mut wcoef = coef.clone();
            for l in 0..=shell.lcap {
                for m in -(l as i64)..=(l as i64) {
                    let i = lm_index(l, m);
                    wcoef[i] = wcoef[i].scale_re(wl[l]);
                }
            }
            let oc = out.comp_mut(c);
            for (p, &flat) in shell.idx.iter().enumerate() {
                let row = &rows[p * nb..(p + 1) * nb];
                let mut synth = Cx::new(T::zero(), T::zero());
                let mut recon = Cx::new(T::zero(), T::zero());
                for i in 0..nb {
                    synth += wcoef[i] * row[i];
                    recon += coef[i] * row[i];
                }
                let resid = d[p] - recon;
                oc[flat as usize] = synth + resid.scale_re(wres);
            }
        }
    }
    Ok(out)
}

/// The two orthonormal sections of the radial spinor subspace over a
/// direction `nu`: `(0, 1, 0, 0)` and `(0, 0, nu_1 + i nu_2, nu_3)`.
pub fn radial_sections<T: Real>(nu: [T; 3]) -> ([Cx<T>; 4], [Cx<T>; 4]) {
    let z = Cx::new(T::zero(), T::zero());
    let a = [z, Cx::new(T::one(), T::zero()), z, z];
    let b = [z, z, Cx::new(nu[0], nu[1]), Cx::new(nu[2], T::zero())];
    (a, b)
}

/// Shell table reused by the radial-subspace projector.
#[derive(Debug, Clone)]
pub struct ShellIndex<T: Real> {
    grid: GridSpec<T>,
    shells: Vec<(Vec<u32>, Vec<[T; 3]>)>,
}

impl<T: Real> ShellIndex<T> {
    pub fn new(grid: GridSpec<T>) -> Self {
        let shells = lattice_shells(&grid)
            .into_iter()
            .map(|s| {
                let dirs = s
                    .idx
                    .iter()
                    .map(|&flat| {
                        let f = flat as usize;
                        let n = grid.n;
                        let iz = f % n;
                        let iy = (f / n) % n;
                        let ix = f / (n * n);
                        dir_of::<T>([grid.wrap(ix), grid.wrap(iy), grid.wrap(iz)])
                    })
                    .collect();
                (s.idx, dirs)
            })
            .collect();
        ShellIndex { grid, shells }
    }
}

/// Orthogonal projection of a Fourier-space spinor field onto the radial
/// subspace: per shell, the span of a shell-constant coefficient on each of
/// the two sections. The zero mode keeps only the direction-free section.
pub fn h_projector<T: Real>(f: &Field<T>, shells: &ShellIndex<T>) -> Result<Field<T>> {
    f.expect_repr(Repr::Fourier)?;
    if f.ncomp() != 4 {
        return Err(DkgError::ComponentMismatch(
            "the radial subspace lives in 4-component fields".into(),
        ));
    }
    if *f.grid() != shells.grid {
        return Err(DkgError::GridMismatch(
            "field grid differs from the shell table's grid".into(),
        ));
    }
    let nodes = shells.grid.nodes();
    let mut out = Field::spinor(shells.grid, Repr::Fourier);
    let data = f.data();
    for (idx, dirs) in shells.shells.iter() {
        let npts = idx.len();
        let inv = T::one() / r::<T>(npts as f64);
        let origin = npts == 1 && idx[0] as usize == shells.grid.flat(0, 0, 0);
        // a = mean over the shell of component 1
        let mut a = Cx::new(T::zero(), T::zero());
        // b = mean of conj(nu_1 + i nu_2) psi_2 + nu_3 psi_3
        let mut b = Cx::new(T::zero(), T::zero());
        for (&flat, nu) in idx.iter().zip(dirs.iter()) {
            let i = flat as usize;
            a += data[nodes + i];
            b += Cx::new(nu[0], -nu[1]) * data[2 * nodes + i]
                + data[3 * nodes + i].scale_re(nu[2]);
        }
        a = a.scale_re(inv);
        b = b.scale_re(inv);
        if origin {
            b = Cx::new(T::zero(), T::zero());
        }
        let od = out.data_mut();
        for (&flat, nu) in idx.iter().zip(dirs.iter()) {
            let i = flat as usize;
            od[nodes + i] = a;
            if !origin {
                od[2 * nodes + i] = b * Cx::new(nu[0], nu[1]);
                od[3 * nodes + i] = b.scale_re(nu[2]);
            }
        }
    }
    Ok(out)
}

/// Relative distance of a Fourier spinor field from the radial subspace.
pub fn h_complement_fraction<T: Real>(f: &Field<T>, shells: &ShellIndex<T>) -> Result<T> {
    let p = h_projector(f, shells)?;
    let total = f.l2_norm();
    if total.is_zero() {
        return Ok(T::zero());
    }
    Ok(f.sub(&p)?.l2_norm() / total)
}

/// Physical-space spinor with the radial structure
/// `upper = f(r) (0, 1)`, `lower = g(r) (w_1 + i w_2, w_3)`, `w = x/r`;
/// `g` must vanish at the origin, where the direction degenerates.
pub fn radial_spinor<T: Real>(
    grid: GridSpec<T>,
    f: impl Fn(T) -> Cx<T>,
    g: impl Fn(T) -> Cx<T>,
) -> Result<Field<T>> {
    Field::from_fn(grid, 4, |x, c| {
        let rr = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        match c {
            0 => Cx::new(T::zero(), T::zero()),
            1 => f(rr),
            _ => {
                if rr.is_zero() {
                    Cx::new(T::zero(), T::zero())
                } else {
                    let nu = [x[0] / rr, x[1] / rr, x[2] / rr];
                    if c == 2 {
                        g(rr) * Cx::new(nu[0], nu[1])
                    } else {
                        g(rr).scale_re(nu[2])
                    }
                }
            }
        }
    })
}

/// Physical-space radial scalar field.
pub fn radial_scalar<T: Real>(grid: GridSpec<T>, f: impl Fn(T) -> Cx<T>) -> Result<Field<T>> {
    Field::from_fn(grid, 1, |x, _| {
        f((x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt())
    })
}
