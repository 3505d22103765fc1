//! One runner per experiment kind. Each returns the CSV artifacts, the key
//! numbers for the summary and the named checks it can evaluate.

use anyhow::{ensure, Context, Result};
use regenjump::coupling::{
    control_probability, coupled_batch, coupling_time_moments, estimate_minorization, verify_certificate,
    ControlConfig, CouplingConfig,
};
use regenjump::diagnostics::{
    build_reference, equilibrium_gap, pseudotrajectory_gap, EquilibriumConfig, PseudoConfig, ReferenceConfig, StartLaw,
};
use regenjump::generator::{
    epsilon_decay, lyapunov_check, regime_functionals, seminorm_report, Dictionary, GeneratorRule, GeneratorTarget,
};
use regenjump::model::{LayerRange, LyapunovSpec};
use regenjump::simulate::{SimConfig, Simulator};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::*;

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Default)]
pub struct Artifacts {
    /// File name and contents, in writing order.
    pub files: Vec<(String, Vec<u8>)>,
    pub results: Value,
    pub checks: Vec<CheckResult>,
}

impl Artifacts {
    fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(CheckResult {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }
}

/// Rows of plain numbers to CSV.
pub fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    Ok(w.into_inner().context("flushing csv")?)
}

fn join(x: &[f64]) -> String {
    x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn coords(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("{prefix}_{i}")).collect()
}

fn into_bytes(f: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

pub fn run(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let models = cfg.model.build()?;
    let seed = cfg.seed;
    match &cfg.experiment {
        Experiment::Simulate(s) => simulate(&models, s, seed),
        Experiment::Couple(s) => couple(&models, s, seed),
        Experiment::Minorize(s) => minorize(&models, s),
        Experiment::Lyapunov(s) => lyapunov(&models, s),
        Experiment::Regimes(s) => regimes(&models, s, cfg.model.decay_rate(), seed),
        Experiment::Pseudotrajectory(s) => pseudo(&models, s, seed),
        Experiment::Equilibrium(s) => equilibrium(&models, s, seed),
        Experiment::Control(s) => control(&models, s, seed),
        Experiment::Seminorms(s) => seminorms(&models, s),
    }
}

fn simulate(models: &Models, s: &SimulateSettings, seed: u64) -> Result<Artifacts> {
    let mut sim_cfg = SimConfig::new(s.dt, s.horizon, seed).with_paths(s.paths).with_scheme(s.scheme);
    sim_cfg.level = s.level;
    let (sim, d) = match s.process {
        Process::Limit => (Simulator::limit(&models.limit, &sim_cfg)?, models.limit.dim_state),
        Process::Inhomogeneous => {
            let m = models.inhomogeneous()?;
            (Simulator::inhomogeneous(m, s.t_start, &sim_cfg)?, m.dim_state)
        }
    };
    ensure!(s.x0.len() == d, "x0 has length {} but the model dimension is {d}", s.x0.len());
    let ends = sim.terminals(&s.x0)?;
    let mut out = Artifacts::default();
    let mut header = vec!["path".to_string()];
    header.extend(coords("x", d));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.files.push((
        "terminals.csv".into(),
        table(
            &header,
            ends.iter().enumerate().map(|(i, x)| {
                let mut r = vec![i.to_string()];
                r.extend(x.iter().map(|v| v.to_string()));
                r
            }),
        )?,
    ));
    if s.record_paths > 0 {
        let mut buf = Vec::new();
        for i in 0..s.record_paths {
            let rec = sim.record(&s.x0, i as u64)?;
            let mut one = Vec::new();
            rec.write_csv(&mut one)?;
            // prefix every row with the path index, header once
            for (k, line) in String::from_utf8(one)?.lines().enumerate() {
                if k == 0 && i > 0 {
                    continue;
                }
                let prefix = if k == 0 { "path".to_string() } else { i.to_string() };
                buf.extend_from_slice(format!("{prefix},{line}\n").as_bytes());
            }
        }
        out.files.push(("paths.csv".into(), buf));
    }
    let n = ends.len() as f64;
    let mean: Vec<f64> = (0..d).map(|k| ends.iter().map(|x| x[k]).sum::<f64>() / n).collect();
    let var: Vec<f64> = (0..d)
        .map(|k| ends.iter().map(|x| (x[k] - mean[k]).powi(2)).sum::<f64>() / (n - 1.0).max(1.0))
        .collect();
    let finite = ends.iter().flatten().all(|v| v.is_finite());
    out.results = json!({ "paths": s.paths, "horizon": s.horizon, "mean": mean, "variance": var });
    out.check("finite", finite, "all terminal states finite");
    Ok(out)
}

fn couple(models: &Models, s: &CoupleSettings, seed: u64) -> Result<Artifacts> {
    let l = &models.limit;
    let cert = estimate_minorization(l, s.level, &s.seeds, &s.minorization)?;
    let check = verify_certificate(l, &cert, &s.minorization);
    let cc = CouplingConfig::new(s.dt, s.horizon, seed).with_pairs(s.pairs).with_mode(s.mode);
    let res = coupled_batch(l, &cert, [&s.starts[0], &s.starts[1]], &cc)?;
    let taus: Vec<Option<f64>> = res.iter().map(|r| r.tau_c).collect();
    let mut out = Artifacts::default();
    out.files.push((
        "coupling_times.csv".into(),
        table(
            &["pair", "tau_c", "censored"],
            res.iter().map(|r| {
                vec![
                    r.pair.to_string(),
                    r.tau_c.map_or("inf".into(), |t| t.to_string()),
                    (r.tau_c.is_none() as u8).to_string(),
                ]
            }),
        )?,
    ));
    let mut first = Vec::new();
    res[0].write_csv(&mut first)?;
    out.files.push(("big_jumps.csv".into(), first));
    let moments = coupling_time_moments(&taus, &s.moments, s.replicates, seed).ok();
    if let Some(m) = &moments {
        out.files.push((
            "moments.csv".into(),
            table(
                &["p", "estimate", "ci_lo", "ci_hi"],
                m.moments
                    .iter()
                    .map(|r| vec![r.p.to_string(), r.estimate.to_string(), r.ci_lo.to_string(), r.ci_hi.to_string()]),
            )?,
        ));
    }
    let censored = taus.iter().filter(|t| t.is_none()).count();
    let survival: Vec<Value> = s
        .survival_times
        .iter()
        .map(|&t| json!({ "t": t, "survival": moments.as_ref().map_or(1.0, |m| m.survival_at(t)) }))
        .collect();
    out.results = json!({
        "beta": cert.beta,
        "beta_raw": cert.beta_raw,
        "small_set": cert.small_set,
        "regeneration": cert.regeneration,
        "certificate_violations": check.violations,
        "pairs": s.pairs,
        "censored": censored,
        "moments": moments.as_ref().map(|m| &m.moments),
        "tail_exponent": moments.as_ref().map(|m| m.tail_exponent),
        "survival": survival,
    });
    out.check("certificate", check.violations == 0, format!("{} of {} grid points violate", check.violations, check.points));
    out.check("coupled", moments.is_some(), format!("{} of {} pairs met", s.pairs - censored, s.pairs));
    out.check("no_censoring", censored == 0, format!("{censored} censored pairs"));
    let monotone = moments
        .as_ref()
        .is_none_or(|m| m.survival.windows(2).all(|w| w[1].1 <= w[0].1));
    out.check("survival_nonincreasing", monotone, "empirical survival function");
    Ok(out)
}

fn minorize(models: &Models, s: &MinorizeSettings) -> Result<Artifacts> {
    let cert = estimate_minorization(&models.limit, s.level, &s.seeds, &s.settings)?;
    let check = verify_certificate(&models.limit, &cert, &s.settings);
    let mut out = Artifacts::default();
    let rows = [
        ("level", cert.level as f64),
        ("eta", cert.small_set.radius),
        ("beta", cert.beta),
        ("beta_raw", cert.beta_raw),
        ("nu_radius", cert.regeneration.radius),
        ("grid_min_density", cert.grid_min_density),
        ("rate_bound", cert.rate_bound),
        ("halvings", cert.halvings as f64),
        ("verify_points", check.points as f64),
        ("verify_violations", check.violations as f64),
        ("verify_min_ratio", check.min_ratio),
    ];
    out.files.push((
        "minorization.csv".into(),
        table(&["quantity", "value"], rows.iter().map(|(k, v)| vec![k.to_string(), v.to_string()]))?,
    ));
    out.results = json!({ "certificate": cert, "verification": check });
    out.check("positive_beta", cert.beta > 0.0, format!("beta = {}", cert.beta));
    out.check("verified", check.violations == 0, format!("min ratio {}", check.min_ratio));
    Ok(out)
}

fn lyapunov(models: &Models, s: &LyapunovSettings) -> Result<Artifacts> {
    let mut spec = LyapunovSpec::quadratic(s.compact.clone());
    spec.b = s.b;
    spec.c = s.c;
    let target = match s.target {
        Target::Limit => GeneratorTarget::Limit(&models.limit),
        Target::Inhomogeneous => GeneratorTarget::Inhomogeneous {
            model: models.inhomogeneous()?,
            times: &s.times,
        },
    };
    let grid = s.grid.points();
    let o = lyapunov_check(target, &spec, &grid, &GeneratorRule::new(s.quadrature))?;
    let mut out = Artifacts::default();
    out.files.push((
        "lyapunov.csv".into(),
        table(
            &["t", "x", "v", "lv", "in_compact"],
            o.points.iter().map(|p| {
                vec![
                    p.t.map_or(String::new(), |t| t.to_string()),
                    join(&p.x),
                    p.v.to_string(),
                    p.lv.to_string(),
                    (p.in_compact as u8).to_string(),
                ]
            }),
        )?,
    ));
    out.results = json!({ "verified": o.verified, "b_fit": o.b_fit, "c_fit": o.c_fit, "violations": o.violations.len() });
    out.check("verified", o.verified, format!("fitted b = {}", o.b_fit));
    out.check("spec_holds", o.spec_holds(), format!("{} violating points", o.violations.len()));
    Ok(out)
}

fn regimes(models: &Models, s: &RegimeSettings, r: Option<f64>, seed: u64) -> Result<Artifacts> {
    let m = models.inhomogeneous()?;
    let rule = GeneratorRule::new(s.quadrature);
    let grid = s.grid.points();
    let mut rows = Vec::new();
    let mut worst_fast = 0.0f64;
    for &t in &s.times {
        for x in &grid {
            let f = regime_functionals(m, Some(&models.limit), t, x, &rule)?;
            let fast: Vec<f64> = f.fast_mean.iter().map(|e| e.value).collect();
            worst_fast = fast.iter().fold(worst_fast, |a, v| a.max(v.abs()));
            rows.push(vec![
                t.to_string(),
                join(x),
                join(&fast),
                join(&f.b_tilde.iter().map(|e| e.value).collect::<Vec<_>>()),
                f.third_moment.value.to_string(),
                f.second_moment_mid.value.to_string(),
                f.slow_gap.map_or(String::new(), |e| e.value.to_string()),
                f.eps.map_or(String::new(), |e| e.to_string()),
            ]);
        }
    }
    let mut out = Artifacts::default();
    out.files.push((
        "regimes.csv".into(),
        table(
            &["t", "x", "fast_mean", "b_tilde", "third_moment", "second_moment_mid", "slow_gap", "eps"],
            rows,
        )?,
    ));
    let dict = match s.dictionary_size {
        Some(k) => Some(Dictionary::new(&s.grid.lo, &s.grid.hi, k, seed)?),
        None => None,
    };
    let decay = epsilon_decay(m, &models.limit, &grid, &s.times, dict.as_ref(), &rule)?;
    out.files.push(("epsilon_decay.csv".into(), into_bytes(|b| decay.write_csv(b))?));
    out.results = json!({
        "fast_mean_max": worst_fast,
        "slope": decay.slope,
        "slope_se": decay.slope_se,
        "rate": decay.rate,
        "constant": decay.constant,
        "max_eps": decay.max_eps(),
        "dictionary": decay.dictionary,
    });
    out.check("fast_mean_zero", worst_fast <= 1e-10, format!("largest fast-band mean {worst_fast}"));
    out.check("epsilon_decaying", decay.decaying, format!("slope {}", decay.slope));
    if let Some(r) = r {
        let rel = (decay.rate - r).abs() / r;
        out.check(
            "epsilon_rate",
            rel <= s.rate_tolerance,
            format!("fitted rate {} against r = {r}", decay.rate),
        );
    }
    Ok(out)
}

fn pseudo(models: &Models, s: &PseudoSettings, seed: u64) -> Result<Artifacts> {
    let m = models.inhomogeneous()?;
    let cfg = PseudoConfig {
        s_grid: s.s_grid.clone(),
        dictionary_size: s.dictionary_size,
        replicates: s.replicates,
        level: s.level,
        ..PseudoConfig::new(s.x0.clone(), s.t_list.clone(), s.horizon, s.paths, s.dt, seed)
    };
    let g = pseudotrajectory_gap(m, &models.limit, &cfg)?;
    let mut out = Artifacts::default();
    out.files.push(("pseudo_gap.csv".into(), into_bytes(|b| g.curve.write_csv(b))?));
    let mut rows = Vec::new();
    for (t, per) in s.t_list.iter().zip(&g.per_offset) {
        for (off, v) in g.offsets.iter().zip(per) {
            rows.push(vec![t.to_string(), off.to_string(), v.to_string()]);
        }
    }
    out.files.push(("pseudo_offsets.csv".into(), table(&["t", "s", "gap"], rows)?));
    out.results = json!({ "curve": g.curve.points, "decay_rate": g.decay_rate });
    out.check(
        "decreasing",
        g.curve.strictly_decreasing(),
        match g.curve.first_overlap() {
            None => "intervals separated".to_string(),
            Some(i) => format!("intervals overlap after t = {}", s.t_list[i]),
        },
    );
    Ok(out)
}

fn equilibrium(models: &Models, s: &EquilibriumSettings, seed: u64) -> Result<Artifacts> {
    let l = &models.limit;
    let rs = &s.reference;
    let reference = build_reference(
        l,
        &ReferenceConfig {
            burn_in: rs.burn_in,
            thin: rs.thin,
            per_path: rs.per_path,
            ..ReferenceConfig::new(rs.x0.clone(), rs.paths, rs.dt, seed)
        },
    )?;
    let starts: Vec<StartLaw> = s.starts.iter().cloned().map(StartLaw::from).collect();
    let cfg = EquilibriumConfig {
        binning: s.binning.clone(),
        dictionary_size: s.dictionary_size,
        replicates: s.replicates,
        level: s.level,
        ..EquilibriumConfig::new(s.paths, s.dt, seed.wrapping_add(1))
    };
    let g = equilibrium_gap(l, &starts, &s.t_list, &reference, &cfg)?;
    let mut rows = Vec::new();
    for (estimator, curves) in [("tv", &g.tv), ("df", &g.df)] {
        for (i, c) in curves.iter().enumerate() {
            for p in &c.points {
                rows.push(vec![
                    i.to_string(),
                    estimator.to_string(),
                    p.x.to_string(),
                    p.gap.to_string(),
                    p.ci_lo.to_string(),
                    p.ci_hi.to_string(),
                ]);
            }
        }
    }
    let mut out = Artifacts::default();
    out.files.push((
        "equilibrium_gaps.csv".into(),
        table(&["start", "estimator", "t", "gap", "ci_lo", "ci_hi"], rows)?,
    ));
    out.results = json!({
        "reference_p_value": reference.p_value,
        "reference_halves_tv": reference.halves_tv,
        "tv_exponents": g.tv_exponents,
        "df_exponents": g.df_exponents,
        "tv": g.tv.iter().map(|c| &c.points).collect::<Vec<_>>(),
    });
    let monotone: Vec<usize> = (0..g.tv.len()).filter(|&i| !g.tv[i].strictly_decreasing()).collect();
    out.check(
        "monotone",
        monotone.is_empty(),
        if monotone.is_empty() {
            "every TV curve decreases outside its intervals".to_string()
        } else {
            format!("TV curves of starts {monotone:?} are not strictly decreasing")
        },
    );
    let low: Vec<f64> = g.tv_exponents.iter().copied().filter(|e| !(*e >= s.min_exponent)).collect();
    out.check(
        "decay_exponent",
        low.is_empty(),
        format!("exponents {:?}, required at least {}", g.tv_exponents, s.min_exponent),
    );
    Ok(out)
}

fn control(models: &Models, s: &ControlSettings, seed: u64) -> Result<Artifacts> {
    let g = s.level.map_or(LayerRange::All, LayerRange::Upto);
    let cfg = ControlConfig {
        dt: s.dt,
        paths: s.paths,
        seed,
        scheme: s.scheme,
    };
    let est = control_probability(&models.limit, g, &s.grid.points(), &s.target, &cfg)?;
    let mut out = Artifacts::default();
    out.files.push((
        "control.csv".into(),
        table(
            &["x", "estimate", "ci_lo", "ci_hi"],
            est.points
                .iter()
                .map(|p| vec![join(&p.x), p.estimate.to_string(), p.ci_lo.to_string(), p.ci_hi.to_string()]),
        )?,
    ));
    out.results = json!({ "min": est.min });
    out.check("positive", est.min.estimate > 0.0, format!("smallest estimate {} at {:?}", est.min.estimate, est.min.x));
    Ok(out)
}

fn seminorms(models: &Models, s: &SeminormExperiment) -> Result<Artifacts> {
    let r = seminorm_report(&models.limit, models.inhomogeneous.as_ref(), &s.grid, &s.settings)?;
    let mut out = Artifacts::default();
    out.files.push(("seminorms.csv".into(), into_bytes(|b| r.write_csv(b))?));
    let divergent: Vec<String> = r.divergent().iter().map(|s| s.to_string()).collect();
    out.results = json!({
        "theta": r.theta,
        "alpha_p": r.alpha_p,
        "gamma_q": r.gamma_q,
        "m1": if r.m1.is_finite() { json!(r.m1) } else { json!("inf") },
        "c_t0": r.c_t0,
        "divergent": divergent,
    });
    out.check("finite", divergent.is_empty(), format!("divergent terms: {divergent:?}"));
    Ok(out)
}
