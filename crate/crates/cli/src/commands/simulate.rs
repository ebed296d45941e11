use serde_json::json;

use sburgers_core::integrator::{Recorder, SimError};

use super::{state_row, Context};
use crate::error::CliError;
use crate::output::num;

/// Writes one CSV of snapshots and one JSON-lines jump log per path. The
/// `tail_energy` column is the share of `‖x‖²_H` in the top quarter of modes.
pub fn simulate(ctx: &mut Context) -> Result<(), CliError> {
    let n = ctx.n_traj(1)?;
    ctx.out.use_streams(ctx.cfg.seed, n);
    let results = ctx.sim.ensemble(&ctx.x0, n, ctx.mode, |_| Recorder::default());
    let header: Vec<String> = std::iter::once("time".to_string())
        .chain(ctx.state_header())
        .chain(["norm_h", "norm_v", "tail_energy"].map(String::from))
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut blow_ups = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(rec) => {
                let traj = rec.into_trajectory(&ctx.sim_cfg, i as u64);
                let rows = traj
                    .times
                    .iter()
                    .zip(&traj.states)
                    .map(|(t, x)| {
                        std::iter::once(num(*t))
                            .chain(state_row(x))
                            .chain([x.norm_h(), x.norm_v(), x.tail_energy_fraction()].map(num))
                            .collect()
                    });
                ctx.out.csv(&format!("trajectory_{i:04}.csv"), &header, rows)?;
                let jumps = traj.jump_log.iter().map(|j| {
                    json!({ "trajectory": i, "time": j.time, "mark": j.mark, "pre_norm_h": j.pre_norm_h })
                });
                ctx.out.jsonl(&format!("jumps_{i:04}.jsonl"), jumps)?;
            }
            Err(SimError::BlowUp { time, norm_h, last_valid }) => {
                blow_ups.push(json!({
                    "trajectory": i,
                    "time": time,
                    "norm_h": norm_h,
                    "last_valid": last_valid.coeffs(),
                }));
            }
            Err(e) => return Err(e.into()),
        }
    }
    ctx.out.blow_ups = blow_ups.len();
    if !blow_ups.is_empty() {
        let count = blow_ups.len();
        ctx.out.jsonl("blowups.jsonl", blow_ups)?;
        return Err(CliError::Failed(format!("{count} of {n} trajectories blew up; see blowups.jsonl")));
    }
    Ok(())
}
