use serde_json::json;

use sburgers_core::integrator::{Recorder, SimError};
use sburgers_core::lyapunov::{
    h_upper, jump_taylor_remainder, supermartingale_check, v_norm_comparison, DriftConstants, LyapunovModel,
    INEQUALITY_TOL,
};
use sburgers_core::spectral::SpectralField;

use super::{state_row, Context};
use crate::error::CliError;
use crate::output::{estimate_record, num};

const MARK_QUANTILES: [f64; 4] = [0.1, 0.5, 0.9, 0.99];

struct Failure {
    check: &'static str,
    state: usize,
    parameter: f64,
    lhs: f64,
    rhs: f64,
}

#[derive(Default)]
struct Tally {
    checked: usize,
    failed: usize,
}

/// `x` scaled along `direction` so that `‖x‖_V = target`.
fn with_v_norm(direction: &SpectralField, target: f64) -> SpectralField {
    direction.scaled(target / direction.norm_v())
}

/// States straddling the boundary `‖x‖_V = 2c₁` of the drift set.
pub fn adversarial_states(n_modes: usize, radius: f64) -> Vec<SpectralField> {
    let mut directions: Vec<SpectralField> =
        (1..=n_modes.min(4)).map(|k| SpectralField::basis(n_modes, k)).collect();
    if n_modes >= 2 {
        let mut mix = SpectralField::basis(n_modes, 1);
        mix.add_scaled(1.0, &SpectralField::basis(n_modes, 2));
        directions.push(mix);
    }
    let mut out = Vec::new();
    for d in &directions {
        for rel in [-1e-3, -1e-9, 0.0, 1e-9, 1e-3] {
            out.push(with_v_norm(d, radius * (1.0 + rel)));
        }
    }
    out
}

/// Checks the drift condition, the `ψ_λ` comparison inequalities and the
/// jump Taylor bound on sampled and adversarial states, then runs the
/// supermartingale check. Deterministic failures make the command fail.
pub fn verify(ctx: &mut Context) -> Result<(), CliError> {
    let exp = ctx.cfg.experiment.clone();
    let n_states = exp.n_states.unwrap_or(1000);
    let n_traj = ctx.n_traj(10)?;
    if n_states == 0 {
        return Err(CliError::Usage("empty trajectory: experiment.n_states must be positive".into()));
    }
    let mut model = LyapunovModel::from_config(&ctx.sim_cfg)?;
    if let Some(c1) = exp.c1_override {
        let c = model.constants;
        model = model.with_constants(DriftConstants::with_c1(c.hs_norm_sq, c.m, c1));
    }
    let lambdas = exp.lambdas.clone().unwrap_or_else(|| vec![0.25, 0.5]);

    ctx.out.use_streams(ctx.cfg.seed, n_traj);
    let mut pool = Vec::new();
    for r in ctx.sim.ensemble(&ctx.x0, n_traj, ctx.mode, |_| Recorder::default()) {
        match r {
            Ok(rec) => pool.extend(rec.into_trajectory(&ctx.sim_cfg, 0).states),
            Err(SimError::BlowUp { .. }) => ctx.out.blow_ups += 1,
            Err(e) => return Err(e.into()),
        }
    }
    if pool.is_empty() {
        return Err(CliError::Usage("empty trajectory: no states to check".into()));
    }
    let step = pool.len() as f64 / n_states.min(pool.len()) as f64;
    let mut states: Vec<SpectralField> =
        (0..n_states.min(pool.len())).map(|i| pool[(i as f64 * step) as usize].clone()).collect();
    states.extend(adversarial_states(ctx.sim_cfg.n_modes, model.constants.k_radius));

    let mut failures = Vec::new();
    let mut tallies: Vec<(&'static str, Tally)> = ["drift_generator", "drift_classification", "v_norm_comparison", "jump_taylor", "h_upper"]
        .into_iter()
        .map(|n| (n, Tally::default()))
        .collect();
    let mut record = |tallies: &mut Vec<(&'static str, Tally)>, f: Failure, ok: bool| {
        let t = &mut tallies.iter_mut().find(|(n, _)| *n == f.check).expect("known check").1;
        t.checked += 1;
        if !ok {
            t.failed += 1;
            failures.push(f);
        }
    };

    let hyps: Vec<_> = lambdas.iter().map(|&l| model.hypothesis(l)).collect();
    for (i, x) in states.iter().enumerate() {
        let d = model.drift_condition_check(x);
        let threshold = if d.in_k { -model.constants.c1 } else { 0.5 };
        let c1 = model.constants.c1;
        record(
            &mut tallies,
            Failure { check: "drift_generator", state: i, parameter: c1, lhs: d.generator, rhs: d.bound },
            d.generator_ok,
        );
        record(
            &mut tallies,
            Failure { check: "drift_classification", state: i, parameter: c1, lhs: d.lhs, rhs: threshold },
            d.classification_ok,
        );
        for (&lambda, hyp) in lambdas.iter().zip(&hyps) {
            let (lhs, rhs) = v_norm_comparison(x, lambda);
            record(
                &mut tallies,
                Failure { check: "v_norm_comparison", state: i, parameter: lambda, lhs, rhs },
                lhs >= rhs - INEQUALITY_TOL,
            );
            if let Some(spec) = &ctx.sim_cfg.jumps {
                let g = spec.direction.apply(x);
                for q in MARK_QUANTILES {
                    let f = g.scaled(spec.mark.quantile(q));
                    let (lhs, rhs) = jump_taylor_remainder(x, &f, lambda);
                    record(
                        &mut tallies,
                        Failure { check: "jump_taylor", state: i, parameter: lambda, lhs, rhs },
                        lhs <= rhs * (1.0 + 1e-12) + INEQUALITY_TOL,
                    );
                }
            }
            if let Ok(hyp) = hyp {
                let exact = model.h_exact(x, lambda);
                let upper = h_upper(x, lambda, hyp.m_lambda, model.gaussian.hs_norm_sq());
                record(
                    &mut tallies,
                    Failure { check: "h_upper", state: i, parameter: lambda, lhs: exact, rhs: upper },
                    exact <= upper + INEQUALITY_TOL * (1.0 + upper.abs()),
                );
            }
        }
    }
    let mut records: Vec<_> = tallies
        .iter()
        .map(|(name, t)| json!({ "name": name, "checked": t.checked, "failures": t.failed }))
        .collect();

    let mc_traj = exp.mc_traj.unwrap_or(1000);
    let admissible: Vec<f64> =
        lambdas.iter().zip(&hyps).filter(|(_, h)| h.is_ok()).map(|(l, _)| *l).collect();
    let mut curve = Vec::new();
    if mc_traj > 0 && !admissible.is_empty() {
        ctx.out.use_streams(ctx.cfg.seed, mc_traj.max(n_traj));
        let checks = supermartingale_check(&ctx.sim, &model, &ctx.x0, &admissible, mc_traj, ctx.mode)?;
        for c in &checks {
            let mut r = estimate_record(&c.final_estimate());
            r["lambda"] = json!(c.lambda);
            r["worst_z"] = json!(c.worst_z());
            r["holds_3se"] = json!(c.holds(3.0));
            records.push(r);
            for (t, s) in c.times.iter().zip(&c.stats) {
                curve.push(vec![num(c.lambda), num(*t), num(s.mean()), num(s.std_err())]);
            }
        }
    }
    ctx.out.jsonl("verify.jsonl", records)?;
    ctx.out.csv("supermartingale.csv", &["lambda", "time", "mean", "std_err"], curve)?;

    let header: Vec<String> = ["check", "state", "parameter", "lhs", "rhs"]
        .into_iter()
        .map(String::from)
        .chain(ctx.state_header())
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = failures.iter().map(|f| {
        [f.check.to_string(), f.state.to_string(), num(f.parameter), num(f.lhs), num(f.rhs)]
            .into_iter()
            .chain(state_row(&states[f.state]))
            .collect()
    });
    ctx.out.csv("failures.csv", &header, rows)?;

    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!(
            "{} inequality failures over {} states; see failures.csv",
            failures.len(),
            states.len()
        )))
    }
}
