//! Landscape check: locally converged single-seed optimizations on the
//! controllable baseline should almost always land near the global optimum.

use alkspin::optimizer::{derive_seed, haar_random_state, multi_seed_search, Convergence};
use alkspin::{ControlConfiguration, OptimizerSettings, StatePrepProblem};

#[test]
fn converged_runs_reach_high_fidelity() {
    let config = ControlConfiguration::preset("cs-baseline").unwrap();
    let mut converged = Vec::new();
    for i in 0..5 {
        let target = haar_random_state(16, derive_seed(99, i)).unwrap();
        let problem = StatePrepProblem::from_stretched(config.clone(), target, 150.0, 0.1).unwrap();
        let settings = OptimizerSettings {
            seeds: 1,
            base_seed: i,
            ..OptimizerSettings::default()
        };
        let run = multi_seed_search(&problem, &settings).unwrap().runs.remove(0);
        if run.convergence != Convergence::MaxIterations {
            converged.push(run.fidelity);
        }
    }
    assert!(!converged.is_empty());
    let good = converged.iter().filter(|&&f| f > 0.9).count();
    assert!(
        good as f64 >= 0.9 * converged.len() as f64,
        "{good}/{} converged runs above 0.9: {converged:?}",
        converged.len()
    );
}
