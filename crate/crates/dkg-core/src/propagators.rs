//! Free flows and retarded integrals.
//!
//! The half-wave flow with sign `s` and mass `m` is
//! `U^s_m(t) = exp(-i s t <grad>_m)`; the free Dirac flow splits through the
//! half-space projectors as `U_M(t) = U^+_M P_+ + U^-_M P_-`, which is the
//! unitary group of `i d/dt psi = (alpha . (-i grad) + M gamma^0) psi`.
//! All operators act in Fourier representation.

use crate::error::Result;
use crate::field::{Field, Trajectory};
use crate::grid::TimeGrid;
use crate::multipliers::dirac_projector_matrix;
use crate::scalar::{bracket, r, Cx, Real};

/// `exp(-i sign t <grad>_m)` applied to a Fourier-space field.
pub fn half_wave<T: Real>(f: &Field<T>, t: T, sign: i32, m: T) -> Result<Field<T>> {
    let s = r::<T>(sign as f64);
    let mut out = f.clone();
    out.apply_mode_map(|xi| Cx::new(T::zero(), -s * t * bracket(xi, m)).exp())?;
    Ok(out)
}

/// Free Dirac flow `U_M(t)` on a Fourier-space spinor field.
pub fn dirac_free<T: Real>(f: &Field<T>, t: T, m: T) -> Result<Field<T>> {
    let mut out = f.clone();
    out.apply_mode_matrix(|xi| {
        let br = bracket(xi, m);
        let ep = Cx::new(T::zero(), -t * br).exp();
        let em = Cx::new(T::zero(), t * br).exp();
        let pp = dirac_projector_matrix(xi, 1, m).scale(ep);
        let pm = dirac_projector_matrix(xi, -1, m).scale(em);
        pp.add(&pm)
    })?;
    Ok(out)
}

/// Retarded half-wave integral
/// `I[F](t_j) = i * integral_{t_0}^{t_j} U^s_m(t_j - t') F(t') dt'`
/// by trapezoid quadrature on the forcing trajectory's own time grid.
/// Input and output frames are in Fourier representation.
pub fn duhamel_half_wave<T: Real>(
    forcing: &Trajectory<T>,
    sign: i32,
    m: T,
) -> Result<Trajectory<T>> {
    let tgrid = forcing.tgrid;
    let hat = forcing.map_frames(|fr| fr.in_repr(crate::field::Repr::Fourier))?;
    // W(t) = U^s(-t) F(t); cumulative trapezoid; I(t_j) = i U^s(t_j) C_j.
    let mut cum = Field::zeros(*hat.grid(), hat.ncomp(), crate::field::Repr::Fourier)?;
    let half_dt = tgrid.dt * r::<T>(0.5);
    let i_unit = Cx::new(T::zero(), T::one());
    let mut out = Vec::with_capacity(hat.frames.len());
    let mut prev_w: Option<Field<T>> = None;
    for (j, fr) in hat.frames.iter().enumerate() {
        let w = half_wave(fr, -tgrid.t(j), sign, m)?;
        if let Some(pw) = prev_w.take() {
            let mut seg = pw;
            seg.axpy(Cx::new(T::one(), T::zero()), &w)?;
            seg.scale_in_place(Cx::new(half_dt, T::zero()));
            cum.axpy(Cx::new(T::one(), T::zero()), &seg)?;
        }
        prev_w = Some(w);
        let mut frame = half_wave(&cum, tgrid.t(j), sign, m)?;
        frame.scale_in_place(i_unit);
        out.push(frame);
    }
    Trajectory::new(tgrid, out)
}

/// Retarded Dirac integral: the solution with zero data of
/// `(-i gamma^mu d_mu + M) psi = G`, namely
/// `psi = sum_{s = +,-} I^{s,M}[P_s gamma^0 G]`.
pub fn duhamel_dirac<T: Real>(forcing: &Trajectory<T>, m: T) -> Result<Trajectory<T>> {
    let g0: crate::gamma::Mat4<T> = crate::gamma::gamma0();
    let hat = forcing.map_frames(|fr| {
        let mut h = fr.in_repr(crate::field::Repr::Fourier)?;
        h.apply_mode_matrix(|_| g0)?;
        Ok(h)
    })?;
    let mut parts = Vec::new();
    for sign in [1, -1] {
        let proj = hat.map_frames(|fr| crate::multipliers::dirac_projector(fr, sign, m))?;
        parts.push(duhamel_half_wave(&proj, sign, m)?);
    }
    let plus = parts.remove(0);
    let minus = parts.remove(0);
    let mut frames = Vec::with_capacity(plus.frames.len());
    for (a, b) in plus.frames.into_iter().zip(minus.frames.iter()) {
        let mut f = a;
        f.axpy(Cx::new(T::one(), T::zero()), b)?;
        frames.push(f);
    }
    Trajectory::new(forcing.tgrid, frames)
}

/// Samples the free flow of Fourier data `f` on a time grid (frames stay in
/// Fourier representation): `frame_j = U^s_m(t_j) f`.
pub fn half_wave_trajectory<T: Real>(
    f: &Field<T>,
    tgrid: TimeGrid<T>,
    sign: i32,
    m: T,
) -> Result<Trajectory<T>> {
    let frames = (0..tgrid.samples())
        .map(|j| half_wave(f, tgrid.t(j), sign, m))
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(tgrid, frames)
}

/// Samples the free Dirac flow on a time grid (Fourier frames).
pub fn dirac_free_trajectory<T: Real>(
    f: &Field<T>,
    tgrid: TimeGrid<T>,
    m: T,
) -> Result<Trajectory<T>> {
    let frames = (0..tgrid.samples())
        .map(|j| dirac_free(f, tgrid.t(j), m))
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(tgrid, frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Repr;
    use crate::grid::GridSpec;
    use crate::multipliers::dirac_projector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_fourier(grid: GridSpec<f64>, ncomp: usize, seed: u64) -> Field<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = Field::zeros(grid, ncomp, Repr::Fourier).unwrap();
        for v in f.data_mut().iter_mut() {
            *v = Cx::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        f
    }

    #[test]
    fn half_wave_group_and_unitarity() {
        let grid = GridSpec::new(8, 3.0).unwrap();
        let f = random_fourier(grid, 1, 1);
        let a = half_wave(&f, 0.3, 1, 1.5).unwrap();
        let b = half_wave(&a, 0.45, 1, 1.5).unwrap();
        let c = half_wave(&f, 0.75, 1, 1.5).unwrap();
        assert!(b.sub(&c).unwrap().l2_norm() < 1e-13 * f.l2_norm());
        assert!((a.l2_norm() - f.l2_norm()).abs() < 1e-13 * f.l2_norm());
        // opposite signs invert each other
        let d = half_wave(&a, 0.3, -1, 1.5).unwrap();
        assert!(d.sub(&f).unwrap().l2_norm() < 1e-13 * f.l2_norm());
    }

    #[test]
    fn half_wave_on_plane_wave_is_a_phase() {
        let grid = GridSpec::new(8, std::f64::consts::TAU).unwrap();
        let f = Field::from_modes(grid, 1, &[([2, 1, 0], 0, Cx::new(1.0, 0.0))]).unwrap();
        let m = 0.7;
        let t = 0.923;
        let g = half_wave(&f, t, 1, m).unwrap();
        let flat = grid.flat(2, 1, 0);
        let want = Cx::new(0.0, -t * (m * m + 5.0).sqrt()).exp();
        assert!((g.data()[flat] - want).norm() < 1e-14);
    }

    #[test]
    fn dirac_flow_solves_the_equation() {
        // centered difference of i d/dt psi against H psi, O(dt^2)
        let grid = GridSpec::new(8, 4.0).unwrap();
        let m = 1.0;
        let f = random_fourier(grid, 4, 2);
        let residual = |dt: f64| -> f64 {
            let up = dirac_free(&f, dt, m).unwrap();
            let dn = dirac_free(&f, -dt, m).unwrap();
            let mut ddt = up.sub(&dn).unwrap();
            ddt.scale_in_place(Cx::new(0.0, 1.0 / (2.0 * dt))); // i d/dt
            let mut h = f.clone();
            h.apply_mode_matrix(|xi| crate::multipliers::dirac_symbol(xi, m))
                .unwrap();
            ddt.sub(&h).unwrap().l2_norm()
        };
        let r1 = residual(1e-2);
        let r2 = residual(5e-3);
        assert!(r1 / r2 > 3.5 && r1 / r2 < 4.5, "order defect: {}", r1 / r2);
        // unitarity and group law
        let a = dirac_free(&f, 0.4, m).unwrap();
        assert!((a.l2_norm() - f.l2_norm()).abs() < 1e-12 * f.l2_norm());
        let b = dirac_free(&a, 0.6, m).unwrap();
        let c = dirac_free(&f, 1.0, m).unwrap();
        assert!(b.sub(&c).unwrap().l2_norm() < 1e-12 * f.l2_norm());
    }

    #[test]
    fn dirac_flow_restricted_to_projector_ranges() {
        // on the range of P_sign the Dirac flow is the half-wave flow
        let grid = GridSpec::new(8, 4.0).unwrap();
        let m = 1.3;
        let f = random_fourier(grid, 4, 3);
        for sign in [1, -1] {
            let p = dirac_projector(&f, sign, m).unwrap();
            let a = dirac_free(&p, 0.37, m).unwrap();
            let b = half_wave(&p, 0.37, sign, m).unwrap();
            assert!(a.sub(&b).unwrap().l2_norm() < 1e-12 * f.l2_norm());
        }
    }

    #[test]
    fn duhamel_constant_forcing_closed_form() {
        // F(t) = v e^{i k x}: I(t) = (1 - e^{-i s w t}) / (s w) * v, w = <k>_m
        let grid = GridSpec::new(8, std::f64::consts::TAU).unwrap();
        let m = 1.0;
        let k = [1i64, 2, 0];
        let w = (m * m + 5.0f64).sqrt();
        let tg = crate::grid::TimeGrid::new(0.0, 1e-3, 1000).unwrap();
        let v = Cx::new(0.6, -0.2);
        let f = Field::from_modes(grid, 1, &[(k, 0, v)]).unwrap();
        let frames = (0..tg.samples()).map(|_| f.clone()).collect();
        let forcing = Trajectory::new(tg, frames).unwrap();
        for sign in [1, -1] {
            let integ = duhamel_half_wave(&forcing, sign, m).unwrap();
            let s = sign as f64;
            let flat = grid.flat(1, 2, 0);
            for j in [100usize, 500, 1000] {
                let t = tg.t(j);
                let want = (Cx::new(1.0, 0.0) - Cx::new(0.0, -s * w * t).exp()) / (s * w) * v;
                let got = integ.frames[j].data()[flat];
                assert!(
                    (got - want).norm() < 1e-6,
                    "sign {sign} t {t}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn duhamel_solves_inhomogeneous_half_wave() {
        // (-i d/dt + s <grad>_m) I[F] = i * ... check: d/dt I = -i s <grad> I + i F
        // via centered differences at interior times.
        let grid = GridSpec::new(6, 2.0).unwrap();
        let m = 0.8;
        let tg = crate::grid::TimeGrid::<f64>::new(0.0, 5e-4, 400).unwrap();
        // forcing: fixed random field modulated by a smooth time profile
        let base = random_fourier(grid, 1, 9);
        let frames = (0..tg.samples())
            .map(|j| {
                let t = tg.t(j);
                let mut fr = base.clone();
                fr.scale_in_place(Cx::new((1.3 * t).cos(), 0.3 * (0.7 * t).sin()));
                fr
            })
            .collect();
        let forcing = Trajectory::new(tg, frames).unwrap();
        let sign = -1;
        let integ = duhamel_half_wave(&forcing, sign, m).unwrap();
        let j = 200usize;
        let dt = tg.dt;
        let mut ddt = integ.frames[j + 1].sub(&integ.frames[j - 1]).unwrap();
        ddt.scale_in_place(Cx::new(1.0 / (2.0 * dt), 0.0));
        // want d/dt I = -i s <grad>_m I + i F
        let mut rhs = integ.frames[j].clone();
        rhs.apply_mode_map(|xi| Cx::new(0.0, -(sign as f64) * bracket(xi, m)))
            .unwrap();
        rhs.axpy(Cx::new(0.0, 1.0), &forcing.frames[j]).unwrap();
        let err = ddt.sub(&rhs).unwrap().l2_norm() / forcing.frames[j].l2_norm();
        assert!(err < 1e-4, "duhamel equation residual {err}");
    }

    #[test]
    fn dirac_duhamel_solves_dirac_equation() {
        // (-i gamma^mu d_mu + M) psi = G at interior times, i.e.
        // gamma^0 (i d/dt - H) psi = -G with H the Dirac symbol; test
        // i d/dt psi - H psi + gamma^0 G = 0.
        let grid = GridSpec::new(6, 2.0).unwrap();
        let m = 1.1;
        let tg = crate::grid::TimeGrid::<f64>::new(0.0, 5e-4, 300).unwrap();
        let base = random_fourier(grid, 4, 10);
        let frames = (0..tg.samples())
            .map(|j| {
                let t = tg.t(j);
                let mut fr = base.clone();
                fr.scale_in_place(Cx::new((0.9 * t).cos(), -0.4 * (1.7 * t).sin()));
                fr
            })
            .collect();
        let forcing = Trajectory::new(tg, frames).unwrap();
        let psi = duhamel_dirac(&forcing, m).unwrap();
        let j = 150usize;
        let dt = tg.dt;
        let mut ddt = psi.frames[j + 1].sub(&psi.frames[j - 1]).unwrap();
        ddt.scale_in_place(Cx::new(0.0, 1.0 / (2.0 * dt))); // i d/dt psi
        let mut h = psi.frames[j].clone();
        h.apply_mode_matrix(|xi| crate::multipliers::dirac_symbol(xi, m))
            .unwrap();
        let mut g0g = forcing.frames[j].clone();
        g0g.apply_mode_matrix(|_| crate::gamma::gamma0()).unwrap();
        let mut resid = ddt.sub(&h).unwrap();
        resid.axpy(Cx::new(1.0, 0.0), &g0g).unwrap();
        let err = resid.l2_norm() / forcing.frames[j].l2_norm();
        assert!(err < 1e-4, "dirac duhamel residual {err}");
    }
}
