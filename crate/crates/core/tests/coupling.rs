mod common;

use std::sync::Arc;

use common::{mean_se, quiet_limit, unit_layer, within};
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use regenjump::coupling::*;
use regenjump::model::{BallSet, LayerRange, LimitModel};
use regenjump::models::{make_cir_models, CirParams, RateFunction};
use regenjump::rng::StreamFactory;
use regenjump::util::stats::{ks_one_sample, wilson};
use regenjump::Error;
use statrs::distribution::{ContinuousCDF, Normal};

/// Marks uniform on `[0, 1]`, `y = z - 1/2` whatever `x` is, so
/// `Π(x, ·) = (1 - γ) δ_x + γ U[-1/2, 1/2]`.
fn reset_toy(gamma: f64) -> LimitModel {
    let mut m = quiet_limit(1, unit_layer(), 1.0);
    m.amplitude = Arc::new(|z, x, o| o[0] = z[0] - 0.5 - x[0]);
    m.rate = Arc::new(move |_, _| gamma);
    m
}

fn uniform_cdf(lo: f64, hi: f64) -> impl Fn(f64) -> f64 {
    move |y| ((y - lo) / (hi - lo)).clamp(0.0, 1.0)
}

fn toy_seeds(eta: f64) -> MinorizationSeeds {
    MinorizationSeeds {
        x0: vec![0.0],
        z0: vec![0.5],
        eta,
        mark_radius: 0.5,
    }
}

#[test]
fn jump_kernel_atom_and_law() {
    let m = reset_toy(0.5);
    let mut rng = StreamFactory::new(1).stream(0);
    let n = 20_000;
    let mut jumps = Vec::new();
    for _ in 0..n {
        let d = sample_jump_kernel(&m, 1, &[3.0], &mut rng).unwrap();
        match d.mark {
            None => assert_eq!(d.y, vec![3.0]),
            Some(_) => jumps.push(d.y[0]),
        }
    }
    let p = 1.0 - jumps.len() as f64 / n as f64;
    assert!(within(p, 0.5, (0.25 / n as f64).sqrt(), 3.0), "atom {p}");
    let ks = ks_one_sample(&jumps, uniform_cdf(-0.5, 0.5));
    assert!(ks.p_value > 0.01, "{ks:?}");

    let still = reset_toy(0.0);
    for _ in 0..100 {
        let d = sample_jump_kernel(&still, 1, &[3.0], &mut rng).unwrap();
        assert!(d.mark.is_none());
        assert_eq!(d.y, vec![3.0]);
    }
    assert!(sample_jump_kernel(&m, 2, &[0.0], &mut rng).is_err());
}

#[test]
fn toy_certificate() {
    let m = reset_toy(0.5);
    let cert = estimate_minorization(&m, 1, &toy_seeds(1.0), &MinorizationSettings::default()).unwrap();
    assert!((cert.beta_raw - 0.5).abs() < 1e-6, "{}", cert.beta_raw);
    assert!((cert.beta - 0.9 * cert.beta_raw).abs() < 1e-15);
    assert!(cert.regeneration.center[0].abs() < 1e-9);
    assert!((cert.regeneration.radius - 0.5).abs() < 1e-6);
    assert!((cert.nu_density() - 1.0).abs() < 1e-6);
    let check = verify_certificate(&m, &cert, &MinorizationSettings::default());
    assert_eq!(check.violations, 0);
    assert!(check.min_ratio >= 1.0);
}

#[test]
fn flat_amplitude_is_rank_deficient() {
    let mut m = reset_toy(0.5);
    m.amplitude = Arc::new(|_, x, o| o[0] = -x[0]);
    let err = estimate_minorization(&m, 1, &toy_seeds(1.0), &MinorizationSettings::default()).unwrap_err();
    assert!(matches!(err, Error::RankDeficient { .. }), "{err}");
    let bad = MinorizationSettings {
        safety: 1.5,
        ..MinorizationSettings::default()
    };
    assert!(estimate_minorization(&reset_toy(0.5), 1, &toy_seeds(1.0), &bad).is_err());
}

fn cir_coupling_model() -> (LimitModel, MinorizationCertificate) {
    let p = CirParams {
        sigma: 0.5,
        d: 4.0,
        b: 1.0,
        a: 8.0,
        rate: RateFunction::Constant { value: 1.0 },
        cuts: vec![3.0, 30.0],
        ..CirParams::default()
    };
    let (_, l) = make_cir_models(&p).unwrap();
    let seeds = MinorizationSeeds {
        x0: vec![(p.b + p.d) / p.a],
        z0: vec![1.5],
        eta: 0.6,
        mark_radius: 1.48,
    };
    let cert = estimate_minorization(&l, 1, &seeds, &MinorizationSettings::default()).unwrap();
    (l, cert)
}

#[test]
fn cir_certificate_is_positive_and_verified() {
    let (l, cert) = cir_coupling_model();
    assert!(cert.beta > 0.0);
    let check = verify_certificate(&l, &cert, &MinorizationSettings::default());
    assert_eq!(check.violations, 0, "{check:?}");
}

#[test]
fn split_kernel_branches() {
    let m = reset_toy(0.5);
    let cert = estimate_minorization(&m, 1, &toy_seeds(1.0), &MinorizationSettings::default()).unwrap();
    let f = StreamFactory::new(2);
    let (mut shared, mut o0, mut o1) = (f.stream(0), f.stream(1), f.stream(2));
    let (x, xp) = ([0.3], [-0.2]);

    let mut regen = Vec::new();
    let mut marginal = Vec::new();
    let n = 20_000;
    for _ in 0..n {
        let u = shared.random::<f64>() * cert.beta;
        let d = sample_split_kernel(&cert, &m, [&x, &xp], u, SplitRngs { shared: &mut shared, own: [&mut o0, &mut o1] }).unwrap();
        assert_eq!(d.branch, Branch::Regenerate);
        assert_eq!(d.y[0], d.y[1]);
        regen.push(d.y[0][0]);

        let u: f64 = shared.random();
        let d = sample_split_kernel(&cert, &m, [&x, &xp], u, SplitRngs { shared: &mut shared, own: [&mut o0, &mut o1] }).unwrap();
        assert_eq!(d.branch == Branch::Regenerate, u <= cert.beta);
        marginal.push(d.y[0][0]);
    }
    let nu = &cert.regeneration;
    let ks = ks_one_sample(&regen, uniform_cdf(nu.center[0] - nu.radius, nu.center[0] + nu.radius));
    assert!(ks.p_value > 0.01, "ν: {ks:?}");

    // averaged over u, each component follows Π(x, ·)
    let atoms = marginal.iter().filter(|y| **y == x[0]).count();
    let p = atoms as f64 / n as f64;
    assert!(within(p, 0.5, (0.25 / n as f64).sqrt(), 3.0), "atom {p}");
    let moved: Vec<f64> = marginal.iter().copied().filter(|y| *y != x[0]).collect();
    let ks = ks_one_sample(&moved, uniform_cdf(-0.5, 0.5));
    assert!(ks.p_value > 0.01, "marginal: {ks:?}");

    // outside C both use the same proposal, so equal inputs give equal outputs
    let far = [5.0];
    for _ in 0..100 {
        let u: f64 = shared.random();
        let d = sample_split_kernel(&cert, &m, [&far, &far], u, SplitRngs { shared: &mut shared, own: [&mut o0, &mut o1] }).unwrap();
        assert_eq!(d.branch, Branch::Synchronous);
        assert_eq!(d.y[0], d.y[1]);
    }
    assert!(sample_split_kernel(&cert, &m, [&x, &xp], 1.5, SplitRngs { shared: &mut shared, own: [&mut o0, &mut o1] }).is_err());
}

#[test]
fn global_small_set_couples_at_first_tick() {
    let m = reset_toy(1.0);
    let settings = MinorizationSettings {
        safety: 1.0,
        ..MinorizationSettings::default()
    };
    let cert = estimate_minorization(&m, 1, &toy_seeds(4.0), &settings).unwrap();
    assert!((cert.beta - 1.0).abs() < 1e-6);
    let cfg = CouplingConfig::new(0.01, 50.0, 3).with_pairs(10_000);
    let res = coupled_batch(&m, &cert, [&[-1.0], &[1.0]], &cfg).unwrap();
    let taus: Vec<f64> = res.iter().map(|r| r.tau_c.unwrap()).collect();
    for r in &res {
        assert_eq!(r.big_jumps.len(), 2);
        assert!(r.big_jumps[1].regenerated);
        assert_eq!(r.terminal[0], r.terminal[1]);
    }
    let (mean, se) = mean_se(&taus);
    assert!(within(mean, 1.0 / cert.rate_bound, se, 3.0), "{mean} ± {se}");
}

#[test]
fn equal_starts_stay_together_when_synchronous() {
    let (l, cert) = cir_coupling_model();
    let cfg = CouplingConfig::new(0.01, 5.0, 4)
        .with_pairs(20)
        .with_mode(CouplingMode::Synchronous)
        .recording();
    for r in coupled_batch(&l, &cert, [&[2.0], &[2.0]], &cfg).unwrap() {
        let [a, b] = r.paths.unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(r.terminal[0], r.terminal[1]);
    }
}

#[test]
fn coupled_marginals_match_the_solo_chain() {
    let (l, cert) = cir_coupling_model();
    let cfg = CouplingConfig::new(0.01, 3.0, 5).with_pairs(3000);
    let res = coupled_batch(&l, &cert, [&[0.0], &[3.0]], &cfg).unwrap();
    let coupled: Vec<f64> = res.iter().map(|r| r.terminal[0][0]).collect();
    let solo: Vec<f64> = regenjump::simulate::Simulator::limit(
        &l,
        &regenjump::simulate::SimConfig::new(0.01, 3.0, 6).with_paths(3000),
    )
    .unwrap()
    .terminals(&[0.0])
    .unwrap()
    .into_iter()
    .map(|v| v[0])
    .collect();
    let ks = regenjump::util::stats::ks_two_sample(&coupled, &solo);
    assert!(ks.p_value > 0.01, "{ks:?}");
}

#[test]
fn moments_of_known_laws() {
    let times = vec![Some(2.0); 50];
    let m = coupling_time_moments(&times, &[1.0, 2.0], 50, 1).unwrap();
    assert_eq!(m.moments[0].estimate, 2.0);
    assert_eq!(m.moments[1].estimate, 4.0);
    assert_eq!(m.survival_at(1.9), 1.0);
    assert_eq!(m.survival_at(2.0), 0.0);

    let mut rng = StreamFactory::new(7).stream(0);
    let mut times: Vec<Option<f64>> = (0..20_000).map(|_| Some(Exp1.sample(&mut rng))).collect();
    times.push(None);
    let m = coupling_time_moments(&times, &[1.0, 2.0], 200, 2).unwrap();
    assert_eq!(m.censored, 1);
    let second = &m.moments[1];
    assert!(second.ci_lo <= 2.0 && 2.0 <= second.ci_hi, "{second:?}");
    assert!(m.survival.windows(2).all(|w| w[1].1 <= w[0].1));
    assert!(within(m.survival_at(1.0), (-1.0f64).exp(), 0.004, 3.0));

    assert!(coupling_time_moments(&[None, None], &[1.0], 10, 0).is_err());
}

#[test]
fn control_probabilities() {
    let still = quiet_limit(1, unit_layer(), 1.0);
    let target = BallSet::new(vec![0.0], 0.5).unwrap();
    let cfg = ControlConfig {
        dt: 0.01,
        paths: 200,
        seed: 1,
        scheme: Default::default(),
    };
    let grid = vec![vec![0.0], vec![0.3], vec![1.0]];
    let est = control_probability(&still, LayerRange::All, &grid, &target, &cfg).unwrap();
    let p: Vec<f64> = est.points.iter().map(|q| q.estimate).collect();
    assert_eq!(p, vec![1.0, 1.0, 0.0]);
    assert_eq!(est.min.x, vec![1.0]);

    let mut bm = quiet_limit(1, unit_layer(), 1.0);
    bm.noise_dim = 1;
    bm.diffusion = Some(Arc::new(|_, o| o[0] = 1.0));
    let cfg = ControlConfig { paths: 20_000, ..cfg };
    let est = control_probability(&bm, LayerRange::All, &[vec![0.0], vec![1.0]], &target, &cfg).unwrap();
    let phi = Normal::new(0.0, 1.0).unwrap();
    for (q, want) in est.points.iter().zip([
        phi.cdf(0.5) - phi.cdf(-0.5),
        phi.cdf(-0.5) - phi.cdf(-1.5),
    ]) {
        let (lo, hi) = wilson((q.estimate * cfg.paths as f64).round() as usize, cfg.paths, 0.999);
        assert!(lo <= want && want <= hi, "{q:?} vs {want}");
    }
}

#[test]
fn exit_threshold_for_still_chain() {
    let m = reset_toy(0.5);
    let ball = BallSet::new(vec![0.0], 1.0).unwrap();
    let cfg = ExitConfig {
        dt: 0.01,
        trials: 100,
        start_points: 3,
        seed: 0,
        scheme: Default::default(),
    };
    let report = exit_time_threshold(&m, &ball, &cfg).unwrap();
    assert_eq!(report.rows[0].probability, 1.0);
    assert_eq!(report.threshold, Some((1, 1.0)));
}

/// `y = x + z`, `z` uniform on `[-1, 1]`: on `C = B(0, η)` the common
/// support is `[-1 + η, 1 - η]` with density 1/2, so `β = 1 - η`.
#[test]
fn uniform_shift_certificate() {
    let mut m = quiet_limit(1, vec![regenjump::model::Layer::lebesgue(regenjump::model::MarkSet::interval(-1.0, 1.0))], 1.0);
    m.amplitude = Arc::new(|z, _, o| o[0] = z[0]);
    m.rate = Arc::new(|_, _| 1.0);
    let seeds = MinorizationSeeds {
        x0: vec![0.0],
        z0: vec![0.0],
        eta: 0.5,
        mark_radius: 1.0,
    };
    let cert = estimate_minorization(&m, 1, &seeds, &MinorizationSettings::default()).unwrap();
    assert_eq!(cert.small_set.radius, 0.5);
    assert_eq!(cert.halvings, 0);
    assert!((cert.beta_raw - 0.5).abs() < 1e-9, "{}", cert.beta_raw);
    assert!((cert.beta - 0.45).abs() < 1e-9);
    assert!(cert.regeneration.center[0].abs() < 1e-9);
    assert!((cert.regeneration.radius - 0.5).abs() < 1e-9);
    assert_eq!(verify_certificate(&m, &cert, &MinorizationSettings::default()).violations, 0);
}
