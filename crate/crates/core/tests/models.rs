mod common;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use regenjump::coupling::sample_jump_kernel;
use regenjump::model::{validate_inhomogeneous, validate_limit, EvalGrid, LayerRange};
use regenjump::models::*;
use regenjump::rng::StreamFactory;
use regenjump::simulate::{Scheme, SimConfig, Simulator};
use regenjump::util::stats::ks_two_sample;

/// Direct simulation of the tagged particle and its `N - 1` neighbours:
/// exact exponential flows between events, each neighbour thinned
/// separately at rate `f₂(X²)`.
fn per_particle(p: &HawkesParams, x0: [f64; 2], horizon: f64, seed: u64, paths: usize) -> Vec<[f64; 2]> {
    let others = p.n - 1;
    let k = others as f64;
    let bound = p.f1.sup() + k * p.f2.sup();
    let streams = StreamFactory::new(seed);
    (0..paths as u64)
        .map(|i| {
            let mut rng = streams.stream(i);
            let [mut x1, mut x2] = x0;
            let mut t = 0.0;
            let flow = |x1: f64, x2: f64, s: f64| {
                let e = (-p.alpha * s).exp();
                (x1 * e, p.b / p.alpha + (x2 - p.b / p.alpha) * e)
            };
            loop {
                let e: f64 = Exp1.sample(&mut rng);
                let next = t + e / bound;
                if next > horizon {
                    (x1, x2) = flow(x1, x2, horizon - t);
                    return [x1, x2];
                }
                (x1, x2) = flow(x1, x2, next - t);
                t = next;
                let mut u = rng.random::<f64>() * bound;
                if u < p.f1.value(x1) {
                    x1 = 0.0;
                    continue;
                }
                u -= p.f1.sup();
                if u < 0.0 {
                    continue;
                }
                let j = ((u / p.f2.sup()) as usize).min(others - 1);
                let v = u - j as f64 * p.f2.sup();
                if v < p.f2.value(x2) {
                    x1 += 1.0 / k;
                    x2 -= p.c / k;
                }
            }
        })
        .collect()
}

#[test]
fn summary_chain_matches_per_particle_system() {
    let p = HawkesParams {
        n: 10,
        ..HawkesParams::default()
    };
    let m = make_hawkes_system(&p).unwrap();
    let horizon = 5.0;
    let paths = 10_000;
    let cfg = SimConfig::new(0.01, horizon, 21).with_paths(paths).with_scheme(Scheme::Rk4);
    let chain = Simulator::inhomogeneous(&m, 0.0, &cfg).unwrap().terminals(&[0.0, 0.0]).unwrap();
    let direct = per_particle(&p, [0.0, 0.0], horizon, 22, paths);
    for k in 0..2 {
        let a: Vec<f64> = chain.iter().map(|v| v[k]).collect();
        let b: Vec<f64> = direct.iter().map(|v| v[k]).collect();
        let ks = ks_two_sample(&a, &b);
        assert!(ks.p_value > 0.01, "coordinate {k}: {ks:?}");
    }
}

#[test]
fn hawkes_limit_settles_at_the_root() {
    let p = HawkesParams::default();
    let root = p.equilibrium_x2();
    assert!((-p.alpha * root - p.c * p.f2.value(root) + p.b).abs() < 1e-10);
    let l = make_hawkes_limit(&p).unwrap();
    let cfg = SimConfig::new(0.01, 30.0, 1).with_scheme(Scheme::Rk4);
    let end = Simulator::limit(&l, &cfg).unwrap().terminal(&[0.0, 3.0], 0).unwrap();
    assert!((end[1] - root).abs() < 1e-8, "{} vs {root}", end[1]);
}

#[test]
fn reset_variants() {
    let mut rng = StreamFactory::new(3).stream(0);
    let zero = make_hawkes_limit(&HawkesParams::default()).unwrap();
    let eps = 0.2;
    let random = make_hawkes_limit(&HawkesParams {
        reset: Reset::Random { eps },
        ..HawkesParams::default()
    })
    .unwrap();
    let x = [0.8, 0.4];
    let mut seen = 0;
    for _ in 0..2000 {
        let d = sample_jump_kernel(&zero, 1, &x, &mut rng).unwrap();
        if d.mark.is_some() {
            assert_eq!(d.y, vec![0.0, 0.4]);
        }
        let d = sample_jump_kernel(&random, 1, &x, &mut rng).unwrap();
        if d.mark.is_some() {
            assert!(d.y[0] > 0.0 && d.y[0] <= eps);
            assert_eq!(d.y[1], 0.4);
            seen += 1;
        }
    }
    assert!(seen > 100);
    assert!(make_hawkes_limit(&HawkesParams {
        reset: Reset::Random { eps: -1.0 },
        ..HawkesParams::default()
    })
    .is_err());
}

#[test]
fn hawkes_parameter_ranges() {
    assert!(make_hawkes_system(&HawkesParams { n: 1, ..HawkesParams::default() }).is_err());
    assert!(make_hawkes_limit(&HawkesParams { alpha: 0.0, ..HawkesParams::default() }).is_err());
    assert!(make_hawkes_schedule(&HawkesParams::default(), 0.0, 5.0).is_err());
    let s = make_hawkes_schedule(&HawkesParams::default(), 0.5, 4.0).unwrap();
    let mut out = [0.0; 2];
    (s.amplitude)(2.0, &[0.5], &[0.0, 0.0], &mut out);
    assert!((out[0] - (-1.0f64).exp()).abs() < 1e-15);
    assert!((s.rate_bound - 2.0f64.exp()).abs() < 1e-12);
}

#[test]
fn models_pass_validation() {
    let (m, l) = make_cir_models(&CirParams::default()).unwrap();
    let grid = EvalGrid::new(vec![0.0], vec![4.0]).with_points(9).with_times(vec![0.0, 1.0, 4.0]);
    let r = validate_limit(&l, &grid, LayerRange::Upto(2));
    assert!(r.passed(), "{:?}", r.checks);
    assert!(r.check("psd").unwrap().passed);
    let r = validate_inhomogeneous(&m, &grid);
    assert!(r.passed(), "{:?}", r.checks);

    let h = make_hawkes_system(&HawkesParams::default()).unwrap();
    let grid2 = EvalGrid::new(vec![0.0, -2.0], vec![2.0, 2.0]).with_points(5);
    assert!(validate_inhomogeneous(&h, &grid2).passed());
    let hl = make_hawkes_limit(&HawkesParams::default()).unwrap();
    assert!(validate_limit(&hl, &grid2, LayerRange::All).passed());
}

#[test]
fn cir_variance_conventions() {
    let f = 0.6;
    let base = CirParams {
        rate: RateFunction::Constant { value: f },
        ..CirParams::default()
    };
    let stated = CirParams {
        variance: LimitVariance::AsStated,
        ..base.clone()
    };
    let (_, a) = make_cir_models(&base).unwrap();
    let (_, b) = make_cir_models(&stated).unwrap();
    let (mut sa, mut sb) = ([0.0], [0.0]);
    (a.diffusion.as_ref().unwrap())(&[1.0], &mut sa);
    (b.diffusion.as_ref().unwrap())(&[1.0], &mut sb);
    assert!((sa[0] * sa[0] - base.sigma * base.sigma * f / 2.0).abs() < 1e-12);
    assert!((sb[0] * sb[0] - base.sigma * base.sigma * f).abs() < 1e-12);
    for bad in [
        CirParams { a: 0.0, ..CirParams::default() },
        CirParams { cuts: vec![2.0, 1.0], ..CirParams::default() },
        CirParams { cuts: vec![], ..CirParams::default() },
    ] {
        assert!(make_cir_models(&bad).is_err());
    }
}
