mod estimate;
mod simulate;
mod verify;

use std::path::PathBuf;

use sburgers_core::ensemble::ExecMode;
use sburgers_core::integrator::{SimConfig, SimError, Simulator, Trajectory};
use sburgers_core::spectral::SpectralField;

pub use estimate::{estimate, ESTIMATORS};
pub use simulate::simulate;
pub use verify::{adversarial_states, verify};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{num, RunOutput};

/// Everything a subcommand needs: the parsed config, the simulator, the
/// initial state and the open run directory.
pub struct Context {
    pub cfg: RunConfig,
    pub sim_cfg: SimConfig,
    pub sim: Simulator,
    pub x0: SpectralField,
    pub out: RunOutput,
    pub mode: ExecMode,
}

impl Context {
    pub fn new(cfg: RunConfig, out_dir: PathBuf) -> Result<Self, CliError> {
        let sim_cfg = cfg.sim_config()?;
        let sim = Simulator::new(sim_cfg.clone())?;
        let x0 = cfg.initial_state()?;
        let out = RunOutput::create(&out_dir, &cfg.hash())?;
        Ok(Self { cfg, sim_cfg, sim, x0, out, mode: ExecMode::Parallel })
    }

    pub fn n_traj(&self, default: usize) -> Result<usize, CliError> {
        match self.cfg.experiment.n_traj.unwrap_or(default) {
            0 => Err(CliError::Usage("experiment.n_traj must be positive".into())),
            n => Ok(n),
        }
    }

    /// Path of stream 0, counted as used.
    pub fn single_path(&mut self) -> Result<Trajectory, CliError> {
        self.out.use_streams(self.cfg.seed, 1);
        match self.sim.trajectory(&self.x0, 0) {
            Ok(t) => Ok(t),
            Err(e @ SimError::BlowUp { .. }) => {
                self.out.blow_ups += 1;
                Err(e.into())
            }
            Err(e) => Err(e.into()),
        }
    }

    pub fn state_header(&self) -> Vec<String> {
        (1..=self.sim_cfg.n_modes).map(|k| format!("a_{k}")).collect()
    }
}

pub fn state_row(x: &SpectralField) -> impl Iterator<Item = String> + '_ {
    x.coeffs().iter().map(|v| num(*v))
}
