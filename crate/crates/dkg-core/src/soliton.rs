//! Stationary states, radial profiles, and the non-scattering witness
//!
//! A phase-rotating pair `psi(t) = e^{i t omega} psi*`,
//! `phi = (m² − Δ)^{-1}(psibar* psi*)` solves the coupled system exactly when
//! the residual
//!
//! ```text
//!   R = omega γ⁰ psi* − i γ^j ∂_j psi* + M psi* − phi[psi*] psi*
//! ```
//!
//! vanishes. Profiles live on a uniform radial grid and are embedded through
//! the partial-wave sections (upper `f(r) (0,1)`, lower `g(r) (ν₁+iν₂, ν₃)`),
//! the lowest angular sector, which the flow preserves when `phi` is radial.
//! Stationarity is always measured through the full three-dimensional
//! residual operator; no radial ODE reduction is hard-coded.

use crate::angular::{h_projector, radial_spinor, ShellIndex};
use crate::error::{DkgError, Result};
use crate::field::{dirac_bilinear, Field, Repr, Trajectory};
use crate::fit::PowerLaw;
use crate::grid::{is_dyadic, GridSpec, TimeGrid};
use crate::multipliers::inverse_helmholtz;
use crate::scalar::{r, Cx, Real};

/// Radial samples of the two partial-wave profiles at `r_i = i dr`,
/// `i = 1..=nr`, `dr = rmax / nr`, together with the phase frequency.
#[derive(Debug, Clone)]
pub struct RadialProfilePair<T: Real> {
    pub rmax: T,
    pub f: Vec<Cx<T>>,
    pub g: Vec<Cx<T>>,
    pub omega: T,
}

impl<T: Real> RadialProfilePair<T> {
    pub fn new(rmax: T, f: Vec<Cx<T>>, g: Vec<Cx<T>>, omega: T) -> Result<Self> {
        if f.len() != g.len() || f.len() < 8 {
            return Err(DkgError::InvalidParam(
                "profiles need equal sample counts, at least 8".into(),
            ));
        }
        if !(rmax > T::zero()) {
            return Err(DkgError::InvalidParam("radial extent must be positive".into()));
        }
        if !(omega > T::zero()) {
            return Err(DkgError::InvalidParam("omega must be positive".into()));
        }
        Ok(RadialProfilePair { rmax, f, g, omega })
    }

    /// Weakly bound ansatz: a nodeless bump `f = a e^{-r²/2w²}` and the
    /// slaved small component `g = -i f' / (M + omega)`, which kills the
    /// lowest-order coupling of the two radial equations. The natural width
    /// for binding energy `M - omega` is `w ≈ 1/sqrt(2M(M-omega))`.
    pub fn gaussian(rmax: T, nr: usize, omega: T, mass_dirac: T, amp: T, width: T) -> Result<Self> {
        if !(width > T::zero()) {
            return Err(DkgError::InvalidParam("width must be positive".into()));
        }
        let dr = rmax / r::<T>(nr as f64);
        let mut f = Vec::with_capacity(nr);
        let mut g = Vec::with_capacity(nr);
        for i in 1..=nr {
            let rr = dr * r::<T>(i as f64);
            let e = (-rr * rr / (r::<T>(2.0) * width * width)).exp();
            f.push(Cx::new(amp * e, T::zero()));
            g.push(Cx::new(
                T::zero(),
                amp * rr * e / (width * width * (mass_dirac + omega)),
            ));
        }
        RadialProfilePair::new(rmax, f, g, omega)
    }

    pub fn nr(&self) -> usize {
        self.f.len()
    }

    pub fn dr(&self) -> T {
        self.rmax / r::<T>(self.nr() as f64)
    }

    pub fn peak(&self) -> T {
        self.f
            .iter()
            .chain(self.g.iter())
            .fold(T::zero(), |a, v| num_traits::Float::max(a, v.norm()))
    }

    /// Largest magnitude among the outermost samples, relative to the peak.
    pub fn tail_fraction(&self) -> T {
        let peak = self.peak();
        if peak == T::zero() {
            return T::zero();
        }
        let nr = self.nr();
        let mut tail = T::zero();
        for i in nr.saturating_sub(2)..nr {
            tail = num_traits::Float::max(tail, self.f[i].norm());
            tail = num_traits::Float::max(tail, self.g[i].norm());
        }
        tail / peak
    }

    pub fn eval_f(&self, rr: T) -> Cx<T> {
        stencil(rr, self.dr(), self.nr(), true).eval(&self.f)
    }

    pub fn eval_g(&self, rr: T) -> Cx<T> {
        stencil(rr, self.dr(), self.nr(), false).eval(&self.g)
    }
}

/// Interpolation weights at one radius, expressed over the stored samples.
#[derive(Debug, Clone, Copy)]
struct Stencil<T> {
    n: usize,
    idx: [usize; 5],
    w: [T; 5],
}

impl<T: Real> Stencil<T> {
    fn push(&mut self, i: usize, w: T) {
        for k in 0..self.n {
            if self.idx[k] == i {
                self.w[k] += w;
                return;
            }
        }
        self.idx[self.n] = i;
        self.w[self.n] = w;
        self.n += 1;
    }

    fn eval(&self, samples: &[Cx<T>]) -> Cx<T> {
        let mut acc = Cx::new(T::zero(), T::zero());
        for k in 0..self.n {
            acc += samples[self.idx[k]].scale(self.w[k]);
        }
        acc
    }
}

/// Catmull–Rom weights at radius `rr` over samples stored at `r_i = i dr`.
/// Ghost values encode the parity at the origin: even profiles take
/// `P(0) = (4 s₁ − s₂)/3` (zero slope) and `P(−dr) = s₁`; odd profiles are
/// pinned to zero at the origin with `P(−dr) = −s₁`. Radii beyond the last
/// sample interpolate to zero (the decay invariant makes that consistent).
fn stencil<T: Real>(rr: T, dr: T, nr: usize, even: bool) -> Stencil<T> {
    let mut out = Stencil { n: 0, idx: [0; 5], w: [T::zero(); 5] };
    let u = rr / dr;
    if !(u < r::<T>(nr as f64)) {
        return out;
    }
    let j = num_traits::Float::floor(u).to_f64() as i64;
    let t = u - r::<T>(j as f64);
    let t2 = t * t;
    let t3 = t2 * t;
    let half = r::<T>(0.5);
    let cr = [
        (-t3 + r::<T>(2.0) * t2 - t) * half,
        (r::<T>(3.0) * t3 - r::<T>(5.0) * t2 + r::<T>(2.0)) * half,
        (-r::<T>(3.0) * t3 + r::<T>(4.0) * t2 + t) * half,
        (t3 - t2) * half,
    ];
    for (off, &w) in (-1i64..=2).zip(cr.iter()) {
        let k = j + off;
        if k >= 1 && (k as usize) <= nr {
            out.push(k as usize - 1, w);
        } else if k == 0 {
            if even {
                let third = T::one() / r::<T>(3.0);
                out.push(0, r::<T>(4.0) * w * third);
                out.push(1, -w * third);
            }
        } else if k == -1 {
            out.push(0, if even { w } else { -w });
        }
        // k > nr: decayed, contributes nothing
    }
    out
}

/// Samples the partial-wave spinor `(0, f(|x|); g(|x|)(ν₁+iν₂, ν₃))` on the
/// grid. Rejects profiles that have not decayed by the box edge, since the
/// periodic extension would otherwise fold tails across images.
pub fn partial_wave_embed<T: Real>(
    grid: GridSpec<T>,
    profile: &RadialProfilePair<T>,
) -> Result<Field<T>> {
    let edge = grid.len * r::<T>(0.5);
    if profile.rmax > edge * (T::one() + r::<T>(1e-12)) {
        return Err(DkgError::InvalidParam(format!(
            "radial extent {} exceeds half the box {}",
            profile.rmax, edge
        )));
    }
    if profile.tail_fraction() > r::<T>(1e-8) {
        return Err(DkgError::InvalidParam(format!(
            "profile has not decayed at the box edge (tail fraction {:.2e})",
            profile.tail_fraction().to_f64()
        )));
    }
    embed_raw(grid, profile.rmax, &profile.f, &profile.g)
}

fn embed_raw<T: Real>(grid: GridSpec<T>, rmax: T, f: &[Cx<T>], g: &[Cx<T>]) -> Result<Field<T>> {
    let dr = rmax / r::<T>(f.len() as f64);
    let nr = f.len();
    radial_spinor(
        grid,
        |rr| stencil(rr, dr, nr, true).eval(f),
        |rr| stencil(rr, dr, nr, false).eval(g),
    )
}

/// Adjoint of the (complex-linear) embedding: for a physical spinor `w`,
/// returns the pairings `<E_i, w>` with every cardinal basis profile, f-slots
/// then g-slots. Gradients with respect to `Re/Im` of sample `i` are the
/// real/imaginary parts of slot `i`.
fn embed_adjoint<T: Real>(w: &Field<T>, rmax: T, nr: usize) -> Result<(Vec<Cx<T>>, Vec<Cx<T>>)> {
    w.expect_repr(Repr::Physical)?;
    if w.ncomp() != 4 {
        return Err(DkgError::ComponentMismatch("embed adjoint needs a spinor".into()));
    }
    let grid = *w.grid();
    let nodes = grid.nodes();
    let dr = rmax / r::<T>(nr as f64);
    let mut gf = vec![Cx::new(T::zero(), T::zero()); nr];
    let mut gg = vec![Cx::new(T::zero(), T::zero()); nr];
    let data = w.data();
    for (flat, ix, iy, iz) in grid.iter_indices() {
        let x = grid.x(ix, iy, iz);
        let rr = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        let sf = stencil(rr, dr, nr, true);
        if sf.n > 0 {
            let v = data[nodes + flat];
            for k in 0..sf.n {
                gf[sf.idx[k]] += v.scale(sf.w[k]);
            }
        }
        if !rr.is_zero() {
            let sg = stencil(rr, dr, nr, false);
            if sg.n > 0 {
                let nu = [x[0] / rr, x[1] / rr, x[2] / rr];
                // section^dagger w = conj(nu1 + i nu2) w_2 + nu3 w_3
                let v = Cx::new(nu[0], -nu[1]) * data[2 * nodes + flat]
                    + data[3 * nodes + flat].scale(nu[2]);
                for k in 0..sg.n {
                    gg[sg.idx[k]] += v.scale(sg.w[k]);
                }
            }
        }
    }
    let h3 = grid.cell_volume();
    for v in gf.iter_mut().chain(gg.iter_mut()) {
        *v = v.scale(h3);
    }
    Ok((gf, gg))
}

/// Absolute distance of a spinor from the partial-wave subspace.
pub fn h_complement_norm<T: Real>(psi: &Field<T>) -> Result<T> {
    let hat = psi.in_repr(Repr::Fourier)?;
    let shells = ShellIndex::new(*psi.grid());
    let proj = h_projector(&hat, &shells)?;
    Ok(hat.sub(&proj)?.l2_norm())
}

/// The scalar field sourced by a spinor: `phi = (m² − Δ)^{-1}(psibar psi)`,
/// physical and exactly real.
pub fn phi_from_spinor<T: Real>(psi: &Field<T>, m: T) -> Result<Field<T>> {
    let psi_p = psi.in_repr(Repr::Physical)?;
    let quad = dirac_bilinear(&psi_p, &psi_p)?;
    let mut phi = inverse_helmholtz(&quad.into_fourier()?, m)?.into_physical()?;
    // psibar psi is pointwise real, so phi is real up to transform roundoff
    for v in phi.data_mut().iter_mut() {
        *v = Cx::new(v.re, T::zero());
    }
    Ok(phi)
}

/// Symbol of the linear part of the residual: `-omega γ⁰ + γ^j ξ_j + M`.
///
/// The ω-term sign is the one under which the weakly bound branch exists for
/// ω ∈ (0, M): in Hamiltonian form the standing wave is an eigenvector with
/// eigenvalue +ω, and self-consistent scalar coupling pulls eigenvalues down
/// from the upper continuum edge only. (With the opposite sign the same
/// argument shows the residual has no small-amplitude zero at positive ω, and
/// descent drives the amplitude to zero instead.)
fn stationary_symbol<T: Real>(xi: [T; 3], omega: T, mass: T) -> crate::gamma::Mat4<T> {
    let mut a = crate::gamma::gamma0::<T>().scale(Cx::new(-omega, T::zero()));
    for j in 1..=3 {
        a = a.add(&crate::gamma::gamma(j).scale(Cx::new(xi[j - 1], T::zero())));
    }
    a.add(&crate::gamma::Mat4::identity().scale(Cx::new(mass, T::zero())))
}

fn check_omega<T: Real>(omega: T, mass_dirac: T) -> Result<()> {
    if !(omega > T::zero() && omega < mass_dirac) {
        return Err(DkgError::InvalidParam(format!(
            "omega must lie strictly inside (0, M); got omega = {omega}, M = {mass_dirac}"
        )));
    }
    Ok(())
}

/// Pointwise product of a real scalar field and a spinor, physical space.
fn mul_scalar<T: Real>(scalar: &Field<T>, spinor: &Field<T>) -> Result<Field<T>> {
    scalar.expect_repr(Repr::Physical)?;
    spinor.expect_repr(Repr::Physical)?;
    let nodes = spinor.grid().nodes();
    let mut out = spinor.clone();
    let s = scalar.data();
    let d = out.data_mut();
    for c in 0..spinor.ncomp() {
        for i in 0..nodes {
            d[c * nodes + i] = d[c * nodes + i].scale(s[i].re);
        }
    }
    Ok(out)
}

fn gamma0_apply<T: Real>(spinor: &Field<T>) -> Field<T> {
    let nodes = spinor.grid().nodes();
    let mut out = spinor.clone();
    let d = out.data_mut();
    for i in 2 * nodes..4 * nodes {
        d[i] = -d[i];
    }
    out
}

/// The full stationarity defect as a physical spinor field.
pub fn stationarity_residual_field<T: Real>(
    psi: &Field<T>,
    omega: T,
    mass_dirac: T,
    mass_wave: T,
) -> Result<Field<T>> {
    check_omega(omega, mass_dirac)?;
    let psi_p = psi.in_repr(Repr::Physical)?;
    let phi = phi_from_spinor(&psi_p, mass_wave)?;
    let mut lin = psi_p.to_fourier()?;
    lin.apply_mode_matrix(|xi| stationary_symbol(xi, omega, mass_dirac))?;
    let mut res = lin.into_physical()?;
    res.axpy(Cx::new(-T::one(), T::zero()), &mul_scalar(&phi, &psi_p)?)?;
    Ok(res)
}

/// `‖R‖_{L²}` of the stationarity defect.
pub fn stationarity_residual<T: Real>(
    psi: &Field<T>,
    omega: T,
    mass_dirac: T,
    mass_wave: T,
) -> Result<T> {
    Ok(stationarity_residual_field(psi, omega, mass_dirac, mass_wave)?.l2_norm())
}

/// Residual linearization around a fixed embedded state: shared by the
/// explicit gradient and the damped least-squares refinement.
struct ResidualOp<T: Real> {
    grid: GridSpec<T>,
    rmax: T,
    nr: usize,
    omega: T,
    mass_dirac: T,
    mass_wave: T,
    psi: Field<T>,
    phi: Field<T>,
}

impl<T: Real> ResidualOp<T> {
    fn new(
        grid: GridSpec<T>,
        rmax: T,
        f: &[Cx<T>],
        g: &[Cx<T>],
        omega: T,
        mass_dirac: T,
        mass_wave: T,
    ) -> Result<Self> {
        let psi = embed_raw(grid, rmax, f, g)?;
        let phi = phi_from_spinor(&psi, mass_wave)?;
        Ok(ResidualOp { grid, rmax, nr: f.len(), omega, mass_dirac, mass_wave, psi, phi })
    }

    fn residual(&self) -> Result<Field<T>> {
        let mut lin = self.psi.to_fourier()?;
        lin.apply_mode_matrix(|xi| stationary_symbol(xi, self.omega, self.mass_dirac))?;
        let mut res = lin.into_physical()?;
        res.axpy(Cx::new(-T::one(), T::zero()), &mul_scalar(&self.phi, &self.psi)?)?;
        Ok(res)
    }

    /// `J δ = A δψ − φ δψ − (m²−Δ)^{-1}(2 Re(psibar δψ)) ψ` with
    /// `δψ = embed(δf, δg)`. Real-linear in the sample perturbations.
    fn j_action(&self, df: &[Cx<T>], dg: &[Cx<T>]) -> Result<Field<T>> {
        let dpsi = embed_raw(self.grid, self.rmax, df, dg)?;
        let mut lin = dpsi.to_fourier()?;
        lin.apply_mode_matrix(|xi| stationary_symbol(xi, self.omega, self.mass_dirac))?;
        let mut out = lin.into_physical()?;
        out.axpy(Cx::new(-T::one(), T::zero()), &mul_scalar(&self.phi, &dpsi)?)?;
        let mut pair = dirac_bilinear(&self.psi, &dpsi)?;
        for v in pair.data_mut().iter_mut() {
            *v = Cx::new(r::<T>(2.0) * v.re, T::zero());
        }
        let dphi = inverse_helmholtz(&pair.into_fourier()?, self.mass_wave)?.into_physical()?;
        out.axpy(Cx::new(-T::one(), T::zero()), &mul_scalar(&dphi, &self.psi)?)?;
        Ok(out)
    }

    /// Transpose of [`j_action`] under the real inner product:
    /// `J† w = E†( A† w − φ w − 2 (m²−Δ)^{-1}(Re(w† ψ)) γ⁰ ψ )`.
    fn jt_action(&self, w: &Field<T>) -> Result<(Vec<Cx<T>>, Vec<Cx<T>>)> {
        let w_p = w.in_repr(Repr::Physical)?;
        let mut adj = w_p.to_fourier()?;
        adj.apply_mode_matrix(|xi| stationary_symbol(xi, self.omega, self.mass_dirac).dagger())?;
        let mut out = adj.into_physical()?;
        out.axpy(Cx::new(-T::one(), T::zero()), &mul_scalar(&self.phi, &w_p)?)?;
        // Re(w† ψ) pointwise
        let nodes = self.grid.nodes();
        let mut dot = Field::scalar(self.grid, Repr::Physical);
        {
            let wd = w_p.data();
            let pd = self.psi.data();
            let dd = dot.data_mut();
            for i in 0..nodes {
                let mut acc = T::zero();
                for c in 0..4 {
                    acc += (wd[c * nodes + i].conj() * pd[c * nodes + i]).re;
                }
                dd[i] = Cx::new(r::<T>(2.0) * acc, T::zero());
            }
        }
        let s = inverse_helmholtz(&dot.into_fourier()?, self.mass_wave)?.into_physical()?;
        out.axpy(Cx::new(-T::one(), T::zero()), &mul_scalar(&s, &gamma0_apply(&self.psi))?)?;
        embed_adjoint(&out, self.rmax, self.nr)
    }
}

/// Gradient of `‖R‖²_{L²}` with respect to the profile samples, packed as
/// complex numbers: real part is the derivative along `Re`, imaginary part
/// along `Im`. Returns the f-slots and g-slots.
pub fn residual_gradient<T: Real>(
    grid: GridSpec<T>,
    profile: &RadialProfilePair<T>,
    mass_dirac: T,
    mass_wave: T,
) -> Result<(Vec<Cx<T>>, Vec<Cx<T>>)> {
    check_omega(profile.omega, mass_dirac)?;
    let op = ResidualOp::new(
        grid,
        profile.rmax,
        &profile.f,
        &profile.g,
        profile.omega,
        mass_dirac,
        mass_wave,
    )?;
    let res = op.residual()?;
    let (mut gf, mut gg) = op.jt_action(&res)?;
    for v in gf.iter_mut().chain(gg.iter_mut()) {
        *v = v.scale(r::<T>(2.0));
    }
    Ok((gf, gg))
}

#[derive(Debug, Clone, Copy)]
pub struct RefineOptions<T: Real> {
    /// target for `‖R‖ / ‖ψ‖`
    pub tol: T,
    pub max_iters: usize,
    pub cg_iters: usize,
}

impl<T: Real> Default for RefineOptions<T> {
    fn default() -> Self {
        RefineOptions { tol: r::<T>(1e-3), max_iters: 40, cg_iters: 60 }
    }
}

#[derive(Debug, Clone)]
pub struct RefineReport<T: Real> {
    pub profile: RadialProfilePair<T>,
    /// `‖R‖ / ‖ψ‖` of the returned profile
    pub rel_residual: T,
    pub residual: T,
    /// accepted descent steps
    pub iterations: usize,
    /// set when the descent stopped above tolerance
    pub stalled: Option<String>,
}

fn pdot<T: Real>(a: &[Cx<T>], b: &[Cx<T>]) -> T {
    a.iter().zip(b.iter()).fold(T::zero(), |s, (x, y)| s + (x.conj() * *y).re)
}

/// Roll the outer samples smoothly to zero so the returned profile keeps the
/// decayed-tail invariant. True bound states decay like `e^{-sqrt(M²-ω²) r}`,
/// which is far above the embedding guard at any affordable box size; the
/// truncation defect is charged to the reported residual instead.
fn apodize_tail<T: Real>(p: &mut [Cx<T>], nr: usize, rmax: T) {
    let dr = rmax / r::<T>(nr as f64);
    let r0 = r::<T>(0.85) * rmax;
    let r1 = rmax - r::<T>(3.5) * dr;
    if !(r1 > r0) {
        return;
    }
    let half_pi = r::<T>(std::f64::consts::FRAC_PI_2);
    for (i, v) in p.iter_mut().enumerate() {
        let rr = dr * r::<T>((i % nr + 1) as f64);
        if rr >= r1 {
            *v = Cx::new(T::zero(), T::zero());
        } else if rr > r0 {
            let c = (half_pi * (rr - r0) / (r1 - r0)).cos();
            *v = v.scale(c * c);
        }
    }
}

/// One evaluated descent state.
struct Iterate<T: Real> {
    p: Vec<Cx<T>>,
    op: ResidualOp<T>,
    res: Field<T>,
    cost: T,
    rel: T,
}

fn evaluate<T: Real>(op: ResidualOp<T>, p: Vec<Cx<T>>) -> Result<Iterate<T>> {
    let res = op.residual()?;
    let cost = res.l2_norm().powi(2);
    let pn = op.psi.l2_norm();
    let rel = if pn > T::zero() { cost.sqrt() / pn } else { cost.sqrt() };
    Ok(Iterate { p, op, res, cost, rel })
}

/// Damped least-squares (Levenberg–Marquardt) descent over the profile
/// samples, `omega` held fixed. Steps are measured against the
/// scale-normalized misfit `‖R‖/‖ψ‖`: the raw square misfit has the trivial
/// descent direction `ψ → 0` (the residual is odd-degree homogeneous), which
/// the normalization removes. Normal equations are solved matrix-free by
/// conjugate gradients on `J†J + λ`; an analytic rescale along the exact
/// profile-scaling direction is applied whenever it helps. The normalized
/// residual is non-increasing across accepted steps; the best iterate is
/// returned with the achieved residual, and a stall above tolerance is
/// reported in the output rather than as an error. The returned profile keeps
/// the decayed-tail invariant (see [`apodize_tail`]), with the truncation
/// defect included in the reported residual.
pub fn refine_stationary<T: Real>(
    grid: GridSpec<T>,
    initial: &RadialProfilePair<T>,
    mass_dirac: T,
    mass_wave: T,
    opts: RefineOptions<T>,
) -> Result<RefineReport<T>> {
    check_omega(initial.omega, mass_dirac)?;
    let nr = initial.nr();
    let rmax = initial.rmax;
    let omega = initial.omega;
    let build = |p: Vec<Cx<T>>| -> Result<Iterate<T>> {
        let op = ResidualOp::new(grid, rmax, &p[..nr], &p[nr..], omega, mass_dirac, mass_wave)?;
        evaluate(op, p)
    };
    let mut cur = build(initial.f.iter().chain(initial.g.iter()).copied().collect())?;
    let mut best = (cur.p.clone(), cur.cost, cur.rel);
    let mut lambda = T::zero();
    let mut iterations = 0usize;
    let mut stalled = None;

    for _ in 0..opts.max_iters {
        if cur.rel <= opts.tol {
            break;
        }
        // exact line search along uniform rescales psi -> c psi:
        // R(c p) = c lin - c^3 cub, so the normalized misfit is quadratic in
        // c^2 and minimized in closed form
        let cub = mul_scalar(&cur.op.phi, &cur.op.psi)?;
        let mut lin = cur.res.clone();
        lin.axpy(Cx::new(T::one(), T::zero()), &cub)?;
        let cn2 = cub.l2_norm().powi(2);
        if cn2 > T::zero() {
            let u = lin.l2_inner(&cub)?.re / cn2;
            if u > T::zero() {
                let c = u.sqrt();
                if (c - T::one()).abs() > r::<T>(1e-12) {
                    let scaled: Vec<Cx<T>> = cur.p.iter().map(|v| v.scale(c)).collect();
                    let cand = build(scaled)?;
                    if cand.rel < cur.rel {
                        cur = cand;
                    }
                }
            }
        }
        if cur.rel <= opts.tol {
            break;
        }

        // gradient direction and a Rayleigh quotient to scale the damping
        let (gf, gg) = cur.op.jt_action(&cur.res)?;
        let g: Vec<Cx<T>> = gf.iter().chain(gg.iter()).copied().collect();
        let gnorm2 = pdot(&g, &g);
        if !(gnorm2 > T::zero()) {
            stalled = Some("zero gradient above tolerance".into());
            break;
        }
        if lambda == T::zero() {
            let jg = cur.op.j_action(&gf, &gg)?;
            lambda = r::<T>(1e-3) * jg.l2_norm().powi(2) / gnorm2;
        }

        let mut accepted = false;
        for _ in 0..10 {
            // CG on (J†J + λ) δ = −g
            let mut delta = vec![Cx::new(T::zero(), T::zero()); 2 * nr];
            let mut cg_r: Vec<Cx<T>> = g.iter().map(|v| -*v).collect();
            let mut cg_p = cg_r.clone();
            let mut rho = pdot(&cg_r, &cg_r);
            let rho0 = rho;
            for _ in 0..opts.cg_iters {
                if rho <= rho0 * r::<T>(2.5e-3) {
                    break;
                }
                let jp = cur.op.j_action(&cg_p[..nr], &cg_p[nr..])?;
                let (af, ag) = cur.op.jt_action(&jp)?;
                let mut ap: Vec<Cx<T>> = af.iter().chain(ag.iter()).copied().collect();
                for (a, q) in ap.iter_mut().zip(cg_p.iter()) {
                    *a += q.scale(lambda);
                }
                let denom = pdot(&cg_p, &ap);
                if !(denom > T::zero()) {
                    break;
                }
                let alpha = rho / denom;
                for i in 0..2 * nr {
                    delta[i] += cg_p[i].scale(alpha);
                    cg_r[i] -= ap[i].scale(alpha);
                }
                let rho_new = pdot(&cg_r, &cg_r);
                let betaf = rho_new / rho;
                rho = rho_new;
                for i in 0..2 * nr {
                    cg_p[i] = cg_r[i] + cg_p[i].scale(betaf);
                }
            }
            let cand_p: Vec<Cx<T>> = cur.p.iter().zip(delta.iter()).map(|(a, d)| *a + *d).collect();
            let cand = build(cand_p)?;
            if cand.rel < cur.rel {
                cur = cand;
                lambda = lambda * r::<T>(0.35);
                iterations += 1;
                accepted = true;
                break;
            }
            lambda = lambda * r::<T>(6.0);
        }
        if cur.rel < best.2 {
            best = (cur.p.clone(), cur.cost, cur.rel);
        }
        if !accepted {
            stalled = Some(format!(
                "no descent step accepted at relative residual {:.3e}",
                best.2.to_f64()
            ));
            break;
        }
    }
    if cur.rel < best.2 {
        best = (cur.p.clone(), cur.cost, cur.rel);
    }
    let mut profile = RadialProfilePair {
        rmax,
        f: best.0[..nr].to_vec(),
        g: best.0[nr..].to_vec(),
        omega,
    };
    let (mut rel, mut cost) = (best.2, best.1);
    if profile.tail_fraction() > r::<T>(1e-8) {
        let mut p = best.0;
        apodize_tail(&mut p, nr, rmax);
        let trimmed = build(p)?;
        profile.f = trimmed.p[..nr].to_vec();
        profile.g = trimmed.p[nr..].to_vec();
        rel = trimmed.rel;
        cost = trimmed.cost;
    }
    if stalled.is_none() && rel > opts.tol {
        stalled = Some(format!(
            "iteration budget exhausted at relative residual {:.3e}",
            rel.to_f64()
        ));
    }
    Ok(RefineReport {
        profile,
        rel_residual: rel,
        residual: cost.sqrt(),
        iterations,
        stalled,
    })
}

/// Dispersive norm of the exact phase evolution `e^{i t omega} psi*` over
/// `[0, T]` for each window in `ts`, with its log-log fit. The integrand is
/// constant in time, so the slope is exactly 1/4.
pub fn d_norm_growth<T: Real>(
    psi_star: &Field<T>,
    omega: T,
    s: T,
    sigma: T,
    ts: &[T],
    plan: Option<&crate::angular::AngularPlan<T>>,
) -> Result<PowerLaw<T>> {
    if ts.len() < 2 {
        return Err(DkgError::InvalidParam("need at least two window lengths".into()));
    }
    let hat = psi_star.in_repr(Repr::Fourier)?;
    let mut ys = Vec::with_capacity(ts.len());
    for &tw in ts {
        if !is_dyadic(tw.to_f64()) {
            return Err(DkgError::NotDyadic(tw.to_f64()));
        }
        let steps = 8;
        let tg = TimeGrid::new(T::zero(), tw / r::<T>(steps as f64), steps)?;
        let frames = tg
            .times()
            .map(|t| {
                let a = omega * t;
                let mut fr = hat.clone();
                fr.scale_in_place(Cx::new(a.cos(), a.sin()));
                fr
            })
            .collect();
        let traj = Trajectory::new(tg, frames)?;
        ys.push(crate::norms::dispersive_norm(&traj, s, sigma, plan)?);
    }
    PowerLaw::loglog(ts.to_vec(), ys)
}
