use sburgers_core::ensemble::ExecMode;
use sburgers_core::integrator::{Recorder, SimConfig, Simulator, Trajectory};
use sburgers_core::spectral::SpectralField;

fn run(mode: ExecMode) -> Vec<Trajectory> {
    let sim = Simulator::new(SimConfig::default_model(16, 0.5)).unwrap();
    let x0 = SpectralField::basis(16, 1);
    sim.ensemble(&x0, 8, mode, |_| Recorder::default())
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.unwrap().into_trajectory(sim.config(), i as u64))
        .collect()
}

#[test]
fn ensembles_do_not_depend_on_execution_mode() {
    let a = run(ExecMode::Parallel);
    let b = run(ExecMode::Sequential);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.times, y.times);
        assert_eq!(x.states, y.states);
        assert_eq!(x.jump_log, y.jump_log);
    }
}

#[test]
fn streams_differ_between_trajectories() {
    let a = run(ExecMode::Sequential);
    assert_ne!(a[0].states.last(), a[1].states.last());
}

#[cfg(feature = "parallel")]
#[test]
fn thread_pool_size_does_not_change_results() {
    let reference = run(ExecMode::Parallel);
    for threads in [1, 3] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let other = pool.install(|| run(ExecMode::Parallel));
        for (x, y) in reference.iter().zip(&other) {
            assert_eq!(x.states, y.states);
        }
    }
}
