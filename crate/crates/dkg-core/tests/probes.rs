use dkg_core::gamma::{gamma0, Mat4};
use dkg_core::multipliers::dirac_projector_matrix;
use dkg_core::probes::{
    bilinear_fit, null_symbol_aligned, null_symbol_norm, null_symbol_ratio,
    resonance_lowerbound_fit, resonance_min, resonance_value, strichartz_fit, trilinear_gain,
    Annulus, BilinearConfig, InteractionCase, StrichartzConfig, StrichartzFamily, TrilinearConfig,
};
use dkg_core::scalar::{bracket, Cx};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Oracle: bisection root of a scalar function on [lo, hi].
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    assert!(f(lo) * f(hi) < 0.0, "bisection needs a sign change");
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(lo) * f(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Oracle: largest singular value by power iteration on the normal matrix,
/// no eigendecomposition involved.
fn op_norm_power(a: &Mat4<f64>) -> f64 {
    let ad = a.dagger();
    let mut v = [
        Cx::new(0.57, 0.1),
        Cx::new(-0.21, 0.4),
        Cx::new(0.33, -0.27),
        Cx::new(0.49, 0.18),
    ];
    let mut lam = 0.0f64;
    for _ in 0..400 {
        let w = ad.mul_vec(a.mul_vec(v));
        let n = (w.iter().map(|c| c.norm_sqr()).sum::<f64>()).sqrt();
        if n == 0.0 {
            return 0.0;
        }
        lam = n;
        for i in 0..4 {
            v[i] = w[i].scale(1.0 / n);
        }
    }
    lam.sqrt()
}

fn rand_dir(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.2 && n <= 1.0 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

#[test]
fn equal_argument_resonance_root_found_by_bisection() {
    // profile along equal arguments: 1 - 2 <r>_M has its root at r^2 = 1/4 - M^2
    let m_big = 0.25;
    let profile = |r: f64| 1.0 - 2.0 * bracket([0.0, 0.0, r], m_big);
    let root = bisect(profile, 0.0, 1.0, 1e-12);
    let expect = (3.0f64 / 16.0).sqrt();
    assert!((root - expect).abs() < 1e-8, "bisection root {root} vs {expect}");
    let xi = [0.0, 0.0, root];
    assert!(resonance_value(xi, xi, (1, -1), m_big, 1.0) < 2e-8);
    // the same profile has no root once 2M > m
    let m_big = 0.75;
    assert!((0..400).all(|i| {
        let r = i as f64 * 0.05;
        1.0 - 2.0 * bracket([0.0, 0.0, r], m_big) < 0.0
    }));
}

#[test]
fn null_symbol_against_power_iteration_and_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    // oracle comparison on random pairs and sign choices
    for _ in 0..100 {
        let x = rand_dir(&mut rng).map(|c| c * rng.gen_range(0.3..30.0));
        let y = rand_dir(&mut rng).map(|c| c * rng.gen_range(0.3..30.0));
        let signs = *[(1, 1), (1, -1), (-1, 1), (-1, -1)]
            .iter()
            .nth(rng.gen_range(0..4))
            .unwrap();
        let m_big = rng.gen_range(0.3..1.5);
        let a: Mat4<f64> = dirac_projector_matrix(x, signs.0, m_big)
            .mul(&gamma0())
            .mul(&dirac_projector_matrix(y, signs.1, m_big));
        let direct = null_symbol_norm(x, y, signs, m_big);
        let oracle = op_norm_power(&a);
        assert!((direct - oracle).abs() < 1e-8, "{direct} vs {oracle}");
    }
    // aligned same-sign closed form at a thousand frequencies
    for i in 0..1000 {
        let j = i as f64;
        let xi = [
            0.05 * j * (0.7 * j).sin(),
            0.05 * j * (1.3 * j).cos(),
            0.02 * j - 10.0,
        ];
        let got = null_symbol_norm(xi, xi, (1, 1), 1.0);
        assert!((got - null_symbol_aligned(xi, 1.0)).abs() < 1e-10);
    }
}

#[test]
fn null_symbol_ratio_is_bounded() {
    let report = null_symbol_ratio::<f64>(1500, (1, 1), 1.0, 23).unwrap();
    assert!(report.pass, "same-sign ratio exceeded the cap: {:?}", report.cells);
    let report = null_symbol_ratio::<f64>(1500, (1, -1), 1.0, 29).unwrap();
    assert!(report.pass, "opposite-sign ratio exceeded the cap: {:?}", report.cells);
    for cell in &report.cells {
        assert!(cell.statistic <= 10.0 && cell.samples > 0);
    }
}

#[test]
fn resonance_min_is_stable_under_nonresonant_mass() {
    // equal annuli at M = 1: the scaled minima stay within a factor 4
    let mut consts = Vec::new();
    for lam in [2.0, 4.0, 8.0, 16.0] {
        let res = resonance_min(
            Annulus::<f64>::dyadic(lam),
            Annulus::dyadic(lam),
            Annulus::dyadic(lam),
            (1, 1),
            1.0,
            1.0,
            20,
        )
        .unwrap();
        assert!(res.min > 0.0 && res.evaluations > 0);
        consts.push(res.min * lam);
    }
    let (lo, hi) = consts
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &c| (a.min(c), b.max(c)));
    assert!(hi / lo <= 4.0, "scaled minima spread too far: {consts:?}");
}

#[test]
fn resonance_min_detects_the_subcritical_zero() {
    // M = 1/4 < m/2: the (+,-) pair has an interior zero in these annuli
    let res = resonance_min(
        Annulus::<f64>::new(1.0 / 16.0, 0.25).unwrap(),
        Annulus::new(0.25, 0.5).unwrap(),
        Annulus::new(0.25, 0.5).unwrap(),
        (1, -1),
        0.25,
        1.0,
        24,
    )
    .unwrap();
    assert!(res.min <= 1e-3, "missed the resonant zero: min = {}", res.min);
    // the witness sits near the equal-radius root of the radial profile
    let a = (res.xi[0] * res.xi[0] + res.xi[1] * res.xi[1] + res.xi[2] * res.xi[2]).sqrt();
    assert!((0.42..0.47).contains(&a), "witness radius {a}");
}

#[test]
fn lowerbound_holds_for_low_output_interactions() {
    let report =
        resonance_lowerbound_fit::<f64>(InteractionCase::LowOutput, (1, 1), 1.0, 10_000, 31)
            .unwrap();
    assert!(report.pass, "{:?}", report.cells);
    for cell in &report.cells {
        assert!(cell.statistic >= 1e-2, "cell {cell:?}");
        assert_eq!(cell.samples, 10_000);
    }
    // stability across the input scale: no cell collapses relative to another
    let stats: Vec<f64> = report.cells.iter().map(|c| c.statistic).collect();
    let (lo, hi) = stats
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &c| (a.min(c), b.max(c)));
    assert!(hi / lo < 50.0, "infimum drifts across cells: {stats:?}");

    // opposite flows with unit Dirac mass keep the resonance pinned at the
    // input scale: nothing survives below the modulation cap and the
    // sampler must say so instead of scoring the bound off its domain
    let err = resonance_lowerbound_fit::<f64>(InteractionCase::LowOutput, (1, -1), 1.0, 10_000, 31)
        .unwrap_err();
    assert!(err.to_string().contains("modulation cap"), "unexpected error: {err}");
}

#[test]
fn lowerbound_holds_for_high_output_interactions() {
    let report =
        resonance_lowerbound_fit::<f64>(InteractionCase::HighOutput, (1, -1), 1.0, 10_000, 37)
            .unwrap();
    assert!(report.pass, "{:?}", report.cells);
    for cell in &report.cells {
        assert!(cell.statistic >= 1e-2);
    }
}

#[test]
fn shell_focus_strichartz_scaling() {
    let cfg = StrichartzConfig::<f64>::default();
    let report = strichartz_fit(
        StrichartzFamily::ShellFocus { mass: 1.0 },
        4.0,
        4.0,
        &[2.0, 4.0, 8.0, 16.0],
        &cfg,
    )
    .unwrap();
    assert!(
        report.pass,
        "slope {} outside 0.5 +- 0.15: {:?}",
        report.fit.slope, report.cells
    );
    // the unit block is admissible and finite
    let low = strichartz_fit(
        StrichartzFamily::ShellFocus { mass: 1.0 },
        4.0,
        4.0,
        &[1.0, 2.0, 4.0, 8.0],
        &cfg,
    )
    .unwrap();
    for cell in &low.cells {
        assert!(cell.statistic.is_finite() && cell.statistic > 0.0);
    }
}

#[test]
fn cube_on_shell_strichartz_scaling() {
    // the slimmest cube's coherence outlives the default window
    // (lifetime ~ lambda / mu^2), so stretch it and relax the focus
    // oversampling accordingly
    let cfg = StrichartzConfig::<f64> { window: 9.0, time_oversample: 2.0, ..Default::default() };
    let report = strichartz_fit(
        StrichartzFamily::CubeOnShell { lambda: 16.0, mass: 1.0 },
        4.0,
        4.0,
        &[2.0, 4.0, 8.0, 16.0],
        &cfg,
    )
    .unwrap();
    let target = 0.25;
    assert!(
        (report.fit.slope - target).abs() <= cfg.slope_band && report.pass,
        "slope {} vs target {target}: {:?}",
        report.fit.slope,
        report.cells
    );
}

#[test]
fn bilinear_transversality_and_null_gain() {
    let cfg = BilinearConfig::<f64>::default();
    let opposite = bilinear_fit((1, -1), &cfg).unwrap();
    assert!(
        opposite.pass,
        "opposite-sign slope {} outside +-{}: {:?}",
        opposite.fit.slope, cfg.opposite_band, opposite.cells
    );
    let same = bilinear_fit((1, 1), &cfg).unwrap();
    assert!(
        same.pass && same.fit.slope >= cfg.same_min_slope,
        "same-sign slope {} below {}: {:?}",
        same.fit.slope,
        cfg.same_min_slope,
        same.cells
    );
}

#[test]
fn trilinear_gain_is_positive() {
    let cfg = TrilinearConfig::<f64>::default();
    let report = trilinear_gain(&cfg).unwrap();
    assert!(
        report.pass && report.fit.slope >= cfg.min_gain,
        "gain slope {}: {:?}",
        report.fit.slope,
        report.cells
    );
    let theta0 = report
        .context
        .iter()
        .find(|(k, _)| k == "theta0")
        .map(|(_, v)| *v)
        .unwrap();
    assert!((0.0..1.0).contains(&theta0));
    for cell in &report.cells {
        assert!(cell.max_ratio.is_finite() && cell.samples >= 15);
    }
}
