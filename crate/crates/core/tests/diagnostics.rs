mod common;

use std::sync::Arc;

use common::{quiet_limit, unit_layer};
use rand_distr::{Distribution, StandardNormal};
use regenjump::diagnostics::*;
use regenjump::generator::Dictionary;
use regenjump::model::InhomogeneousModel;
use regenjump::models::{make_hawkes_limit, HawkesParams};
use regenjump::rng::StreamFactory;
use statrs::distribution::{ContinuousCDF, Normal};

fn normal_law(n: usize, shift: f64, seed: u64) -> EmpiricalLaw {
    let mut rng = StreamFactory::new(seed).stream(0);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![shift + Distribution::<f64>::sample(&StandardNormal, &mut rng)])
        .collect();
    EmpiricalLaw::from_rows(&rows, LawMeta::default()).unwrap()
}

#[test]
fn gaussian_shift_tv_and_dictionary_bounds() {
    let exact = 2.0 * Normal::new(0.0, 1.0).unwrap().cdf(0.5) - 1.0;
    let (a, b) = (normal_law(20_000, 0.0, 1), normal_law(20_000, 1.0, 2));
    let tv = tv_estimate(&a, &b, &Binning::default()).unwrap();
    assert!(tv.ci_lo <= tv.value && tv.value <= tv.ci_hi);
    assert!((tv.value - exact).abs() < 0.02, "{tv:?} vs {exact}");

    let dict = Dictionary::new(&[-3.0], &[4.0], 64, 1).unwrap();
    let df = df_estimate(&a, &b, &dict, Pairing::Independent).unwrap();
    // every member is bounded by 1 and 1-Lipschitz
    assert!(df.value <= 2.0 * exact + 3.0 * df.se);
    assert!(df.value <= 1.0 + 3.0 * df.se);
    let (lo, hi) = df_interval(&a, &b, &dict, Pairing::Independent, 100, 3, 0.95).unwrap();
    assert!(lo <= df.value && df.value <= hi);
    assert!(lo > 0.0);
}

#[test]
fn paired_laws_need_matching_sizes() {
    let dict = Dictionary::new(&[-3.0], &[3.0], 8, 1).unwrap();
    let (a, b) = (normal_law(200, 0.0, 1), normal_law(300, 0.0, 2));
    assert!(df_estimate(&a, &b, &dict, Pairing::Paired).is_err());
    assert!(tv_estimate(&normal_law(50, 0.0, 1), &b, &Binning::default()).is_err());
    let weighted = a.clone().with_weights(vec![1.0; 200]).unwrap();
    assert!(df_estimate(&weighted, &a, &dict, Pairing::Paired).is_err());
}

fn ou() -> regenjump::model::LimitModel {
    let mut m = quiet_limit(1, unit_layer(), 1.0);
    m.name = "ou".into();
    m.drift = Arc::new(|x, o| o[0] = -x[0]);
    m.noise_dim = 1;
    m.diffusion = Some(Arc::new(|_, o| o[0] = 1.0));
    m
}

#[test]
fn ou_relaxes_to_its_reference() {
    let m = ou();
    let reference = build_reference(
        &m,
        &ReferenceConfig {
            burn_in: 5.0,
            ..ReferenceConfig::new(vec![0.0], 2000, 0.01, 1)
        },
    )
    .unwrap();
    assert!(reference.p_value > 1e-3);
    assert_eq!(reference.law.len(), 20_000);
    let col = reference.law.column(0);
    let var = col.iter().map(|x| x * x).sum::<f64>() / col.len() as f64;
    assert!((var - 0.5).abs() < 0.03, "{var}");

    let starts = [StartLaw::Point(vec![4.0]), StartLaw::Sample(reference.law.clone())];
    let ts = [0.25, 0.5, 1.0, 2.0];
    let gaps = equilibrium_gap(&m, &starts, &ts, &reference, &EquilibriumConfig::new(4000, 0.01, 2)).unwrap();
    assert!(gaps.tv[0].strictly_decreasing(), "{:?}", gaps.tv[0]);
    assert!(gaps.tv[0].points[0].gap > 0.9);
    for p in &gaps.tv[1].points {
        assert!(p.gap < 0.08, "stationary start drifted: {p:?}");
    }
    assert!(gaps.two_start_tv.is_some() && gaps.two_start_df.is_some());

    let mut csv = Vec::new();
    gaps.tv[0].write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("x,gap,ci_lo,ci_hi,estimator"));
    assert_eq!(text.lines().count(), 1 + ts.len());
}

#[test]
fn drifting_reference_is_rejected() {
    // a pure drift never settles: early and late halves differ
    let mut m = quiet_limit(1, unit_layer(), 1.0);
    m.drift = Arc::new(|_, o| o[0] = 1.0);
    m.noise_dim = 1;
    m.diffusion = Some(Arc::new(|_, o| o[0] = 0.1));
    let cfg = ReferenceConfig {
        burn_in: 1.0,
        ..ReferenceConfig::new(vec![0.0], 200, 0.01, 1)
    };
    assert!(build_reference(&m, &cfg).is_err());
}

#[test]
fn identical_dynamics_give_zero_pseudotrajectory_gap() {
    let p = HawkesParams::default();
    let limit = make_hawkes_limit(&p).unwrap();
    let model = InhomogeneousModel::from_limit(&limit).unwrap();
    let cfg = PseudoConfig {
        replicates: 20,
        ..PseudoConfig::new(vec![0.0, 0.0], vec![1.0, 2.0], 1.0, 300, 0.01, 4)
    };
    let gaps = pseudotrajectory_gap(&model, &limit, &cfg).unwrap();
    for p in &gaps.curve.points {
        assert_eq!(p.gap, 0.0);
        assert_eq!((p.ci_lo, p.ci_hi), (0.0, 0.0));
    }
    assert!(gaps.per_offset.iter().flatten().all(|v| *v == 0.0));
    assert_eq!(gaps.offsets, vec![0.25, 0.5, 0.75, 1.0]);
}
