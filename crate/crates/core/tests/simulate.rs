mod common;

use std::sync::Arc;

use common::{mean_se, quiet_inhomogeneous, quiet_limit, unit_layer, within};
use regenjump::model::{EvalGrid, Layer, LayerRange, MarkSet};
use regenjump::models::{make_cir_models, CirParams, RateFunction};
use regenjump::rng::StreamFactory;
use regenjump::simulate::*;
use regenjump::util::stats::chi_square;

#[test]
fn constant_drift_is_exact() {
    let mut m = quiet_inhomogeneous(1, unit_layer(), 1.0);
    m.drift = Arc::new(|_, _, o| o[0] = 0.7);
    let cfg = SimConfig::new(0.05, 2.0, 1);
    let path = simulate_inhomogeneous(&m, &[1.0], 3.0, &cfg).unwrap();
    assert!(path.times_increasing());
    for i in 0..path.len() {
        let want = 1.0 + 0.7 * (path.times[i] - 3.0);
        assert!((path.state(i)[0] - want).abs() < 1e-12);
    }
    assert!((path.terminal()[0] - 2.4).abs() < 1e-12);
}

#[test]
fn saturated_rate_gives_poisson_counts() {
    let gamma = 2.5;
    let mut m = quiet_inhomogeneous(1, unit_layer(), gamma);
    m.rate = Arc::new(move |_, _, _| gamma);
    let horizon = 2.0;
    let sim = Simulator::inhomogeneous(&m, 0.0, &SimConfig::new(0.1, horizon, 2)).unwrap();
    let counts: Vec<f64> = (0..10_000)
        .map(|i| {
            let mut c = JumpCounter::default();
            let mut chain = sim.chain(&[0.0], i);
            sim.advance(&mut chain, horizon, &mut c).unwrap();
            assert_eq!(c.accepted, c.candidates);
            c.accepted as f64
        })
        .collect();
    let (m, se) = mean_se(&counts);
    assert!(within(m, gamma * horizon, se, 3.0), "{m} ± {se}");
}

/// Mean of the inhomogeneous CIR model with `f ≡ 1`: the centered band has
/// mean zero, the drift band gives `-a m`, and the slow band
/// `d ∫_0^{e^{2rt}} (1+z)^{-2} dz`.
#[test]
fn cir_mean_follows_moment_ode() {
    let p = CirParams {
        rate: RateFunction::Constant { value: 1.0 },
        ..CirParams::default()
    };
    let (m, _) = make_cir_models(&p).unwrap();
    let (x0, horizon) = (1.0, 3.0);
    let sim = Simulator::inhomogeneous(&m, 0.0, &SimConfig::new(0.002, horizon, 3).with_paths(10_000)).unwrap();
    let xs: Vec<f64> = sim.terminals(&[x0]).unwrap().into_iter().map(|v| v[0]).collect();
    let (mean, se) = mean_se(&xs);

    // Simpson rule for the slow-band drift, RK4 for the ODE.
    let slow = |t: f64| {
        let e = (2.0 * p.r * t).exp();
        let n = 2000;
        let h = e / n as f64;
        let g = |z: f64| p.d / ((1.0 + z) * (1.0 + z));
        let mut s = g(0.0) + g(e);
        for k in 1..n {
            s += g(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    let rhs = |t: f64, y: f64| p.b - p.a * y + slow(t);
    let (mut t, mut y, h) = (0.0, x0, 1e-3);
    while t < horizon - 1e-12 {
        let k1 = rhs(t, y);
        let k2 = rhs(t + h / 2.0, y + h / 2.0 * k1);
        let k3 = rhs(t + h / 2.0, y + h / 2.0 * k2);
        let k4 = rhs(t + h, y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += h;
    }
    assert!(within(mean, y, se, 3.0), "simulated {mean} ± {se}, ODE {y}");
}

#[test]
fn linear_flow_decays() {
    let mut m = quiet_limit(1, unit_layer(), 1.0);
    m.drift = Arc::new(|x, o| o[0] = -x[0]);
    let dt = 1e-3;
    let path = simulate_limit(&m, &[2.0], &SimConfig::new(dt, 1.5, 0)).unwrap();
    let want = 2.0 * (-1.5f64).exp();
    assert!((path.terminal()[0] - want).abs() < 2.0 * dt);
    let rk = Simulator::limit(&m, &SimConfig::new(0.01, 1.5, 0).with_scheme(Scheme::Rk4))
        .unwrap()
        .terminal(&[2.0], 0)
        .unwrap();
    assert!((rk[0] - want).abs() < 1e-9);
}

#[test]
fn brownian_variance() {
    let mut m = quiet_limit(2, unit_layer(), 1.0);
    m.noise_dim = 2;
    // σ = [[1, 0], [0.5, 2]], so σσᵀ = [[1, 0.5], [0.5, 4.25]]
    m.diffusion = Some(Arc::new(|_, o| o.copy_from_slice(&[1.0, 0.0, 0.5, 2.0])));
    let horizon = 2.0;
    let ends = Simulator::limit(&m, &SimConfig::new(0.1, horizon, 4).with_paths(20_000))
        .unwrap()
        .terminals(&[0.0, 0.0])
        .unwrap();
    let n = ends.len() as f64;
    let cov = |i: usize, j: usize| ends.iter().map(|v| v[i] * v[j]).sum::<f64>() / n;
    for (i, j, want) in [(0, 0, 1.0), (0, 1, 0.5), (1, 1, 4.25)] {
        let target = want * horizon;
        let var_ii = cov(i, i);
        let var_jj = cov(j, j);
        let se = ((var_ii * var_jj + cov(i, j).powi(2)) / n).sqrt();
        assert!(within(cov(i, j), target, se, 3.0), "({i},{j}): {} vs {target}", cov(i, j));
    }
}

#[test]
fn cir_limit_stationary_mean() {
    let p = CirParams {
        rate: RateFunction::Constant { value: 1.0 },
        cuts: vec![1.0, 10.0],
        ..CirParams::default()
    };
    let (_, l) = make_cir_models(&p).unwrap();
    let ends: Vec<f64> = Simulator::limit(&l, &SimConfig::new(0.01, 15.0, 5).with_paths(10_000))
        .unwrap()
        .terminals(&[0.0])
        .unwrap()
        .into_iter()
        .map(|v| v[0])
        .collect();
    let (m, se) = mean_se(&ends);
    assert!(within(m, (p.b + p.d) / p.a, se, 3.0), "{m} ± {se}");
    assert_eq!(p.stationary_mean_constant_rate(1.0), (p.b + p.d) / p.a);
}

fn jumping(layers: Vec<Layer>, gamma: f64) -> regenjump::model::LimitModel {
    let mut m = quiet_limit(1, layers, gamma);
    m.noise_dim = 1;
    m.diffusion = Some(Arc::new(|_, o| o[0] = 0.3));
    m.amplitude = Arc::new(|z, _, o| o[0] = z[0]);
    m.rate = Arc::new(move |_, _| gamma);
    m
}

#[test]
fn small_jump_process_skips_declared_layers() {
    let cfg = SimConfig::new(0.01, 3.0, 6);
    let m = jumping(unit_layer(), 2.0);
    let z = simulate_small_jump(&m, &[0.0], 1, &cfg).unwrap();
    assert!(z.events.is_empty());
    let diffusion_only = Simulator::truncated(&m, LayerRange::Between(0, 0), &cfg)
        .unwrap()
        .record(&[0.0], 0)
        .unwrap();
    assert_eq!(z.states, diffusion_only.states);

    let two = jumping(
        vec![
            Layer::lebesgue(MarkSet::interval(0.0, 1.0)),
            Layer::lebesgue(MarkSet::interval(1.0, 3.0)),
        ],
        2.0,
    );
    let path = simulate_small_jump(&two, &[0.0], 1, &cfg).unwrap();
    assert!(!path.events.is_empty());
    assert!(path.events.iter().all(|e| e.layer == 2 && e.mark[0] > 1.0));

    // accepted jumps over [0, T] are Poisson(μ(G_2 \ G_1) Γ T)
    let horizon = 3.0;
    let sim = Simulator::small_jump(&two, 1, &SimConfig::new(0.05, horizon, 7)).unwrap();
    let counts: Vec<f64> = (0..10_000)
        .map(|i| {
            let mut c = JumpCounter::default();
            let mut chain = sim.chain(&[0.0], i);
            sim.advance(&mut chain, horizon, &mut c).unwrap();
            c.accepted as f64
        })
        .collect();
    let (mean, se) = mean_se(&counts);
    assert!(mean <= 2.0 * 2.0 * horizon + 3.0 * se);
    assert!(within(mean, 2.0 * 2.0 * horizon, se, 3.0));
}

#[test]
fn truncation_to_full_support_changes_nothing() {
    let m = jumping(
        vec![
            Layer::lebesgue(MarkSet::interval(0.0, 1.0)),
            Layer::lebesgue(MarkSet::interval(1.0, 3.0)),
        ],
        1.0,
    );
    let cfg = SimConfig::new(0.01, 2.0, 8);
    let input = ControlBoundInput {
        grid: EvalGrid::new(vec![-2.0], vec![2.0]).with_points(9),
        rho: 0.1,
        constant: 1.0,
    };
    let full = simulate_limit(&m, &[0.0], &cfg).unwrap();
    let (trunc, report) = simulate_truncated(&m, &[0.0], LayerRange::All, &cfg, &input).unwrap();
    assert_eq!(full, trunc);
    assert_eq!(report.alpha_tail, 0.0);
    assert_eq!(report.bound, 0.0);
}

#[test]
fn cir_tail_coefficient() {
    let f = 0.8;
    let p = CirParams {
        rate: RateFunction::Constant { value: f },
        cuts: vec![2.0, 10.0],
        ..CirParams::default()
    };
    let (_, l) = make_cir_models(&p).unwrap();
    let input = ControlBoundInput {
        grid: EvalGrid::new(vec![0.0], vec![3.0]).with_points(7),
        rho: 0.5,
        constant: 1.0,
    };
    for (level, m) in [(1, 2.0), (2, 10.0)] {
        let r = truncation_bound(&l, LayerRange::Upto(level), 1.0, &input);
        let want = f * p.d / (1.0 + m);
        assert!((r.alpha_tail - want).abs() < 1e-6 * want, "level {level}: {} vs {want}", r.alpha_tail);
        assert!(r.bound > 0.0);
    }
}

#[test]
fn real_shocks() {
    let gamma = 2.0;
    let mut m = quiet_limit(1, unit_layer(), gamma);
    m.rate = Arc::new(move |_, _| gamma);
    let mut rng = StreamFactory::new(9).stream(0);
    for _ in 0..1000 {
        assert!(sample_real_shock(&m, LayerRange::All, &[0.0], &mut rng).unwrap().is_some());
    }

    m.rate = Arc::new(move |_, _| gamma / 2.0);
    let n = 40_000;
    let nulls = (0..n)
        .filter(|_| sample_real_shock(&m, LayerRange::All, &[0.0], &mut rng).unwrap().is_none())
        .count() as f64;
    let p = nulls / n as f64;
    assert!(within(p, 0.5, (0.25 / n as f64).sqrt(), 3.0), "{p}");

    // γ(z, y) = Γ z: accepted marks have density 2z on [0, 1]
    m.rate = Arc::new(move |z, _| gamma * z[0]);
    let bins = 20;
    let mut observed = vec![0usize; bins];
    let mut accepted = 0;
    while accepted < 40_000 {
        if let Some(z) = sample_real_shock(&m, LayerRange::All, &[0.0], &mut rng).unwrap() {
            observed[((z[0] * bins as f64) as usize).min(bins - 1)] += 1;
            accepted += 1;
        }
    }
    let expected: Vec<f64> = (0..bins)
        .map(|k| {
            let (a, b) = (k as f64 / bins as f64, (k + 1) as f64 / bins as f64);
            b * b - a * a
        })
        .collect();
    let test = chi_square(&observed, &expected);
    assert!(test.p_value > 0.01, "{test:?}");
}

fn flow_model(drift: f64, sigma: Option<f64>) -> regenjump::model::LimitModel {
    let mut m = quiet_limit(1, unit_layer(), 1.0);
    m.drift = Arc::new(move |x, o| o[0] = drift * x[0]);
    if let Some(s) = sigma {
        m.noise_dim = 1;
        m.diffusion = Some(Arc::new(move |_, o| o[0] = s));
    }
    m
}

#[test]
fn skeleton_flows() {
    let x = 1.7;
    let decay = skeleton_flow(&flow_model(-1.0, None), &[x], &Control::zero(), 1.0, 0.01).unwrap();
    for (t, y) in &decay {
        assert!((y[0] - x * (-t).exp()).abs() < 1e-8);
    }
    let lambda = 0.6;
    let lin = skeleton_flow(&flow_model(0.0, Some(1.0)), &[x], &Control::constant(vec![lambda]), 1.0, 0.01).unwrap();
    for (t, y) in &lin {
        assert!((y[0] - (x + lambda * t)).abs() < 1e-12);
    }
    let both = skeleton_flow(&flow_model(-1.0, Some(1.0)), &[x], &Control::constant(vec![lambda]), 1.0, 0.01).unwrap();
    for (t, y) in &both {
        let want = x * (-t).exp() + lambda * (1.0 - (-t).exp());
        assert!((y[0] - want).abs() < 1e-8);
    }
}

#[test]
fn skeleton_paths() {
    let m = flow_model(-1.0, Some(1.0));
    let h = Control::constant(vec![0.3]);
    let no_jumps = ControlSkeletonInput {
        times: vec![],
        marks: vec![],
        controls: vec![h.clone()],
    };
    let end = skeleton_path(&m, &[0.4], &no_jumps, LayerRange::All, 0.01).unwrap();
    let flow = skeleton_flow(&m, &[0.4], &h, 1.0, 0.01).unwrap();
    assert_eq!(end, flow.last().unwrap().1);

    let mut reset = quiet_limit(1, unit_layer(), 1.0);
    reset.amplitude = Arc::new(|_, x, o| o[0] = -x[0]);
    let one = ControlSkeletonInput {
        times: vec![0.5],
        marks: vec![vec![0.5]],
        controls: vec![Control::zero()],
    };
    assert_eq!(skeleton_path(&reset, &[3.0], &one, LayerRange::All, 0.01).unwrap(), vec![0.0]);

    // CIR limit without noise control: two linear flows around one jump
    let p = CirParams::default();
    let (_, l) = make_cir_models(&p).unwrap();
    let z = 0.5;
    let x = 2.0;
    let flow = |x: f64, t: f64| p.b / p.a + (x - p.b / p.a) * (-p.a * t).exp();
    let want = flow(flow(x, 0.5) + p.d / ((1.0 + z) * (1.0 + z)), 0.5);
    let input = ControlSkeletonInput {
        times: vec![0.5],
        marks: vec![vec![z]],
        controls: vec![Control::zero()],
    };
    let got = skeleton_path(&l, &[x], &input, LayerRange::Upto(1), 0.01).unwrap();
    assert!((got[0] - want).abs() < 1e-8, "{} vs {want}", got[0]);
    let outside = ControlSkeletonInput {
        marks: vec![vec![5.0]],
        ..input
    };
    assert!(skeleton_path(&l, &[x], &outside, LayerRange::Upto(1), 0.01).is_err());
}
