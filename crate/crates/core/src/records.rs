//! Self-contained JSON records of optimization and simulation runs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonians::ControlConfiguration;
use crate::optimizer::{Convergence, OptimizationResult, OptimizerSettings, StatePrepProblem};
use crate::simulator::{fidelity, propagate, StateVector};
use crate::waveform::{interpolate, WaveformKnots};
use crate::wigner::SphereRadii;

pub const RUN_RECORD_FORMAT: &str = "alkspin-run/1";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Outcome of one restart, without its knots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub fidelity: f64,
    pub iterations: usize,
    pub convergence: Convergence,
}

/// A Wigner grid written next to the record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRef {
    pub time: f64,
    pub file: String,
    pub radii: SphereRadii,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub format: String,
    pub tool_version: String,
    pub command: String,
    pub config: ControlConfiguration,
    pub psi0: StateVector,
    pub target: Option<StateVector>,
    pub total_time: f64,
    pub dt: f64,
    pub settings: Option<OptimizerSettings>,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunSummary>,
    pub knots: WaveformKnots,
    /// Fidelity per iteration of the best restart.
    pub fidelity_history: Vec<f64>,
    pub final_fidelity: Option<f64>,
    pub snapshots: Vec<SnapshotRef>,
    pub wall_time_s: f64,
}

impl RunRecord {
    pub fn from_optimization(
        problem: &StatePrepProblem,
        settings: &OptimizerSettings,
        seeds: &[u64],
        result: &OptimizationResult,
        wall_time_s: f64,
    ) -> Self {
        let best = result.runs.iter().find(|r| r.seed == result.best_seed);
        RunRecord {
            format: RUN_RECORD_FORMAT.into(),
            tool_version: TOOL_VERSION.into(),
            command: "optimize".into(),
            config: problem.config.clone(),
            psi0: problem.psi0.clone(),
            target: Some(problem.target.clone()),
            total_time: problem.total_time,
            dt: problem.dt,
            settings: Some(settings.clone()),
            seeds: seeds.to_vec(),
            runs: result
                .runs
                .iter()
                .map(|r| RunSummary {
                    seed: r.seed,
                    fidelity: r.fidelity,
                    iterations: r.iterations,
                    convergence: r.convergence,
                })
                .collect(),
            knots: result.best_knots.clone(),
            fidelity_history: best.map(|r| r.history.clone()).unwrap_or_default(),
            final_fidelity: Some(result.best_fidelity),
            snapshots: Vec::new(),
            wall_time_s,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::parse("run record", e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let record: RunRecord =
            serde_json::from_str(text).map_err(|e| Error::parse("run record", e.to_string()))?;
        if record.format != RUN_RECORD_FORMAT {
            return Err(Error::parse(
                "run record",
                format!("format {:?}, expected {RUN_RECORD_FORMAT:?}", record.format),
            ));
        }
        record.knots.check_against(&record.config)?;
        Ok(record)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Re-simulates the stored knots with dense propagators and returns the
    /// fidelity to the stored target.
    pub fn replay_fidelity(&self) -> Result<f64> {
        let target = self
            .target
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("record has no target state".into()))?;
        let controls = interpolate(&self.knots, self.dt)?;
        let traj = propagate(&self.config, &controls, &self.psi0, &[])?;
        Ok(fidelity(target, traj.final_state()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::{multi_seed_search, SearchDirection};
    use crate::simulator::parse_state;

    #[test]
    fn json_round_trip_and_replay() {
        let config = ControlConfiguration::preset("cs-baseline").unwrap();
        let target = parse_state(&config.system, "stretched-plus-cat").unwrap();
        let problem = StatePrepProblem::from_stretched(config, target, 20.0, 0.1).unwrap();
        let settings = OptimizerSettings {
            max_iterations: 5,
            seeds: 2,
            direction: SearchDirection::Lbfgs,
            ..OptimizerSettings::default()
        };
        let result = multi_seed_search(&problem, &settings).unwrap();
        let record = RunRecord::from_optimization(&problem, &settings, &settings.seed_list(), &result, 0.5);
        let back = RunRecord::from_json(&record.to_json().unwrap()).unwrap();
        assert_eq!(back.knots, record.knots);
        assert_eq!(back.seeds, record.seeds);
        assert_eq!(back.fidelity_history, record.fidelity_history);
        assert_eq!(back.final_fidelity, record.final_fidelity);
        let replayed = back.replay_fidelity().unwrap();
        assert!((replayed - result.best_fidelity).abs() < 1e-8);

        let wrong = record.to_json().unwrap().replace(RUN_RECORD_FORMAT, "alkspin-run/0");
        assert!(RunRecord::from_json(&wrong).is_err());
    }
}
