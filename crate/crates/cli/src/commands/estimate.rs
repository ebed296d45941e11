use serde_json::{json, Value};

use sburgers_core::ergodics::{
    b_psi_dictionary, deviation_tail_probe, Envelope, ergodic_decay, hitting_times, invariant_estimate, mdp_ensemble,
    occupation_measure, sigma_squared_series, Bins, MdpConfig, Observable, SeriesObserver, TailSummary,
};
use sburgers_core::lyapunov::{exp_integral_moment, DriftConstants, LyapunovModel};
use sburgers_core::stats::{EstimateReport, RunningStats};

use super::Context;
use crate::config::{InitialSpec, ModeTerm};
use crate::error::CliError;
use crate::output::{estimate_record, num};

pub const ESTIMATORS: [&str; 7] = ["gamma", "sigma2", "mdp", "hitting", "expmoment", "occupation", "tailprobe"];

/// Records emitted by an estimator, written to `estimates.jsonl`.
type Records = Vec<Value>;

/// Per-path observable series after burn-in, with their sampling step.
type PathSeries = (Vec<Vec<f64>>, f64);

pub fn estimate(ctx: &mut Context, name: &str) -> Result<(), CliError> {
    let records = match name {
        "gamma" => gamma(ctx)?,
        "sigma2" => sigma2(ctx)?,
        "mdp" => mdp(ctx)?,
        "hitting" => hitting(ctx)?,
        "expmoment" => expmoment(ctx)?,
        "occupation" => occupation(ctx)?,
        "tailprobe" => tailprobe(ctx)?,
        other => {
            return Err(CliError::Usage(format!(
                "unknown estimator `{other}`; valid names: {}",
                ESTIMATORS.join(", ")
            )))
        }
    };
    ctx.out.jsonl("estimates.jsonl", records)
}

fn observable(ctx: &Context) -> Result<Observable, CliError> {
    let g = ctx.cfg.experiment.observable.clone().unwrap_or(Observable::Mode { k: 1 });
    g.validate().map_err(|e| CliError::Config(format!("experiment.observable: {e}")))?;
    Ok(g)
}

fn burn_in(ctx: &Context, default_fraction: f64) -> f64 {
    ctx.cfg.experiment.burn_in.unwrap_or(default_fraction * ctx.sim_cfg.horizon)
}

fn with_fields(r: &EstimateReport, extra: Value) -> Value {
    let mut v = estimate_record(r);
    if let (Some(obj), Value::Object(more)) = (v.as_object_mut(), extra) {
        obj.extend(more);
    }
    v
}

/// `μ̂(φ)` from the config or from a long run on stream 0.
fn reference(ctx: &mut Context, g: &Observable, records: &mut Records) -> Result<f64, CliError> {
    if let Some(r) = ctx.cfg.experiment.reference {
        return Ok(r);
    }
    ctx.out.use_streams(ctx.cfg.seed, 1);
    let summary = invariant_estimate(&ctx.sim, &ctx.x0, burn_in(ctx, 0.1), std::slice::from_ref(g))?;
    let mu = &summary.means[0];
    records.push(with_fields(mu, json!({ "role": "reference" })));
    Ok(mu.value)
}

fn gamma(ctx: &mut Context) -> Result<Records, CliError> {
    let n = ctx.n_traj(200)?;
    let dictionary = match &ctx.cfg.experiment.observable {
        Some(_) => vec![observable(ctx)?],
        None => b_psi_dictionary(),
    };
    let other = ctx
        .cfg
        .experiment
        .other_initial
        .clone()
        .unwrap_or(InitialSpec::Modes { terms: vec![ModeTerm { k: 1, value: 1.0 }] });
    let y = other.build(ctx.sim_cfg.n_modes, ctx.cfg.seed)?;
    ctx.out.use_streams(ctx.cfg.seed, n);
    let r = ergodic_decay(&ctx.sim, &ctx.x0, &y, &dictionary, n, ctx.mode)?;
    ctx.out.blow_ups += r.blow_ups;
    let (lo, hi) = r.window;
    let rows = (0..r.times.len()).map(|i| {
        vec![num(r.times[i]), num(r.distance[i]), num(r.distance_std_err[i]), ((lo..hi).contains(&i)).to_string()]
    });
    ctx.out.csv("decay.csv", &["time", "distance", "std_err", "fitted"], rows)?;
    let r_squared = r.fit.as_ref().map(|f| f.r_squared);
    Ok(vec![with_fields(&r.gamma, json!({ "r_squared": r_squared, "dictionary_size": dictionary.len() }))])
}

/// Batch-means `σ²` per path, averaged over `n_traj` independent paths.
fn sigma2(ctx: &mut Context) -> Result<Records, CliError> {
    let g = observable(ctx)?;
    let burn = burn_in(ctx, 0.1);
    let n = ctx.n_traj(1)?;
    // one observable of the chosen class and one bounded test function
    let observables = vec![g, Observable::Dictionary { index: 0 }];
    let series = sigma2_series(ctx, &observables, burn, n)?;
    let mut records = Vec::new();
    for (j, obs) in observables.iter().enumerate() {
        let per_path: Vec<EstimateReport> = series
            .iter()
            .map(|(s, dt)| sigma_squared_series(&s[j], *dt, &obs.name()))
            .collect::<Result<_, _>>()?;
        let report = if per_path.len() == 1 {
            per_path[0].clone()
        } else {
            let stats: RunningStats = per_path.iter().map(|r| r.value).collect();
            let mut r = EstimateReport::from_stats(per_path[0].name.clone(), &stats);
            for p in &per_path {
                for f in &p.flags {
                    r = r.with_flag(*f);
                }
            }
            r
        };
        let bounded = matches!(obs.envelope(), Envelope::Const(_));
        records.push(with_fields(&report, json!({ "observable": obs.name(), "bounded": bounded, "paths": per_path.len() })));
    }
    let summary = invariant_estimate(&ctx.sim, &ctx.x0, burn, &[])?;
    records.push(estimate_record(&summary.mu_psi));
    Ok(records)
}

fn sigma2_series(
    ctx: &mut Context,
    observables: &[Observable],
    burn: f64,
    n: usize,
) -> Result<Vec<PathSeries>, CliError> {
    ctx.out.use_streams(ctx.cfg.seed, n);
    let results = ctx.sim.ensemble(&ctx.x0, n, ctx.mode, |_| SeriesObserver::new(observables.to_vec(), burn));
    let mut out = Vec::with_capacity(n);
    for r in results {
        match r {
            Ok(o) => {
                let dt = ctx.sim_cfg.dt_save;
                out.push((o.series, dt));
            }
            Err(sburgers_core::integrator::SimError::BlowUp { .. }) => ctx.out.blow_ups += 1,
            Err(e) => return Err(e.into()),
        }
    }
    if out.is_empty() {
        return Err(CliError::Failed("every trajectory blew up".into()));
    }
    Ok(out)
}

fn mdp(ctx: &mut Context) -> Result<Records, CliError> {
    let g = observable(ctx)?;
    let mut records = Vec::new();
    let reference = reference(ctx, &g, &mut records)?;
    let exp = &ctx.cfg.experiment;
    let cfg = MdpConfig { p: exp.p.unwrap_or(0.25), scale: exp.b_scale.unwrap_or(1.0), observable: g, reference };
    let n = ctx.n_traj(100)?;
    ctx.out.use_streams(ctx.cfg.seed, n);
    let r = mdp_ensemble(&ctx.sim, &ctx.x0, &cfg, n, ctx.mode)?;
    ctx.out.blow_ups += r.blow_ups;
    let rows = r.values.iter().enumerate().map(|(i, v)| vec![i.to_string(), num(*v)]);
    ctx.out.csv("mdp.csv", &["trajectory", "value"], rows)?;
    records.push(with_fields(&r.mean, json!({ "b": r.b, "p": cfg.p, "reference": reference })));
    records.push(estimate_record(&r.clt_variance));
    Ok(records)
}

fn tail_records(family: &str, s: &TailSummary, horizon: f64) -> Records {
    let mut out = Vec::new();
    let r_squared = s.fit.as_ref().map(|f| f.r_squared);
    match &s.tail_rate {
        Some(rate) => {
            out.push(with_fields(rate, json!({ "family": family, "r_squared": r_squared, "censored": s.censored })));
            let half = s.exp_moment(0.5 * rate.value, horizon);
            out.push(with_fields(&half, json!({ "family": family, "lambda": 0.5 * rate.value })));
        }
        None => out.push(json!({ "name": "tail_rate", "family": family, "value": null, "censored": s.censored })),
    }
    for (lambda, m) in &s.moments {
        out.push(with_fields(m, json!({ "family": family, "lambda": lambda })));
    }
    out
}

fn hitting(ctx: &mut Context) -> Result<Records, CliError> {
    let mut model = LyapunovModel::from_config(&ctx.sim_cfg)?;
    if let Some(c1) = ctx.cfg.experiment.c1_override {
        let c = model.constants;
        model = model.with_constants(DriftConstants::with_c1(c.hs_norm_sq, c.m, c1));
    }
    let n = ctx.n_traj(500)?;
    let lambdas = ctx.cfg.experiment.lambdas.clone().unwrap_or_default();
    ctx.out.use_streams(ctx.cfg.seed, n);
    let r = hitting_times(&ctx.sim, &model.constants, &ctx.x0, n, &lambdas, ctx.mode)?;
    ctx.out.blow_ups += r.blow_ups;
    let opt = |t: &Option<f64>| t.map(num).unwrap_or_default();
    let rows = r.tau.samples.iter().zip(&r.tau_delayed.samples).enumerate().map(|(i, (a, b))| {
        vec![i.to_string(), opt(a), opt(b)]
    });
    ctx.out.csv("hitting.csv", &["trajectory", "tau", "tau_from_1"], rows)?;
    let survival = r
        .tau
        .survival
        .iter()
        .map(|(t, s)| vec!["tau".to_string(), num(*t), num(*s)])
        .chain(r.tau_delayed.survival.iter().map(|(t, s)| vec!["tau_from_1".to_string(), num(*t), num(*s)]));
    ctx.out.csv("survival.csv", &["family", "time", "survival"], survival)?;
    let mut records = vec![json!({ "name": "k_radius", "value": r.radius, "c1": model.constants.c1 })];
    records.extend(tail_records("tau", &r.tau, r.horizon));
    records.extend(tail_records("tau_from_1", &r.tau_delayed, r.horizon));
    Ok(records)
}

fn expmoment(ctx: &mut Context) -> Result<Records, CliError> {
    let exp = &ctx.cfg.experiment;
    let theta = exp.theta.unwrap_or(0.5);
    let lambda = exp.lambda.unwrap_or(0.5);
    let model = LyapunovModel::from_config(&ctx.sim_cfg)?;
    let n = ctx.n_traj(1000)?;
    ctx.out.use_streams(ctx.cfg.seed, n);
    let r = exp_integral_moment(&ctx.sim, &model, &ctx.x0, theta, lambda, n, ctx.mode)?;
    ctx.out.blow_ups += r.blow_ups;
    let params = json!({ "theta": theta, "lambda": lambda, "horizon": r.horizon });
    Ok(vec![
        with_fields(&r.estimate, json!({ "log_value": r.log_estimate, "bound": r.bound, "params": params })),
        with_fields(&r.z_estimate, json!({ "tail_exponent": r.tail_exponent })),
        json!({ "name": "closed_form_bound", "value": r.bound, "within_bound": r.estimate.lower() <= r.bound }),
    ])
}

fn occupation(ctx: &mut Context) -> Result<Records, CliError> {
    let g = observable(ctx)?;
    let exp = &ctx.cfg.experiment;
    let count = exp.bins.unwrap_or(50);
    let bins = match (exp.bin_low, exp.bin_high) {
        (Some(low), Some(high)) => Bins::Uniform { low, high, count },
        (None, None) => Bins::Auto { count },
        _ => return Err(CliError::Config("experiment: give both bin_low and bin_high or neither".into())),
    };
    let traj = ctx.single_path()?;
    let h = occupation_measure(&traj, &g, bins)?;
    let rows = h
        .masses()
        .into_iter()
        .enumerate()
        .map(|(i, m)| vec![num(h.edges[i]), num(h.edges[i + 1]), num(m)])
        .collect::<Vec<_>>();
    ctx.out.csv("occupation.csv", &["left", "right", "mass"], rows)?;
    Ok(vec![json!({ "name": "occupation", "observable": h.observable, "n_bins": h.n_bins(), "total_time": h.total_time })])
}

fn tailprobe(ctx: &mut Context) -> Result<Records, CliError> {
    let g = observable(ctx)?;
    let mut records = Vec::new();
    let reference = reference(ctx, &g, &mut records)?;
    let exp = ctx.cfg.experiment.clone();
    let burn = exp.burn_in.unwrap_or(0.0);
    let span = ctx.sim_cfg.horizon - burn;
    let t_grid = exp.t_grid.unwrap_or_else(|| vec![0.25 * span, 0.5 * span, span]);
    let r_grid = exp.r_grid.unwrap_or_else(|| vec![0.0, 0.05, 0.1]);
    let n = ctx.n_traj(200)?;
    ctx.out.use_streams(ctx.cfg.seed, n);
    let table = deviation_tail_probe(&ctx.sim, &ctx.x0, &g, reference, &r_grid, &t_grid, burn, n, ctx.mode)?;
    ctx.out.blow_ups += table.blow_ups;
    let rows = table.cells.iter().map(|c| {
        vec![
            num(c.t),
            num(c.r),
            c.count.to_string(),
            c.n.to_string(),
            num(c.probability),
            num(c.rate),
            c.lower_bound.to_string(),
        ]
    });
    ctx.out.csv("tailprobe.csv", &["t", "r", "count", "n", "probability", "rate", "lower_bound"], rows)?;
    records.push(json!({
        "name": "tailprobe",
        "observable": table.observable,
        "reference": reference,
        "cells": table.cells.len(),
        "monotone_in_r": table.monotone_in_r(),
    }));
    Ok(records)
}
