//! Experiment configuration, simulation, metrics, export and the invariant
//! suite.

pub mod config;
pub mod csv_io;
pub mod metrics;
pub mod run;
pub mod verify;

use rayon::prelude::*;

pub use config::{
    example1_config, parse_value_list, ControllerKind, ExperimentConfig, ExperimentSetup,
    MatrixOrScalar,
};
pub use csv_io::{csv_header, export_csv, import_csv, parse_csv, to_csv_string, write_csv};
pub use metrics::{compute_metrics, MetricOptions, Metrics};
pub use run::{
    build_controller, initial_gain, run_experiment, run_setup, simulate, ControlRecord, Controller,
    TrajectoryLog, TrajectoryRow,
};
pub use verify::{verify, CheckOutcome, VerifyReport};

use crate::error::HarnessError;

/// Metric options matching a validated experiment.
pub fn metric_options(setup: &ExperimentSetup) -> MetricOptions {
    MetricOptions {
        reference: setup.reference,
        ..MetricOptions::default()
    }
}

/// One point of a parameter sweep.
#[derive(Debug)]
pub struct SweepPoint {
    pub value: String,
    pub result: Result<Metrics, HarnessError>,
}

/// Runs the configuration once per value of `dotted`, in parallel. Results
/// come back in input order.
pub fn sweep(cfg: &ExperimentConfig, dotted: &str, values: &[toml::Value]) -> Vec<SweepPoint> {
    values
        .par_iter()
        .map(|v| {
            let result = cfg.with_value(dotted, v.clone()).and_then(|c| {
                let setup = c.validate()?;
                let log = run_setup(&setup, setup.kind)?;
                let m = compute_metrics(&log, &metric_options(&setup));
                let lhs = (setup.rf.n_u() as f64).sqrt() * setup.params.xi_t;
                if m.compensator_increment_bound >= lhs {
                    log::warn!(
                        "{dotted} = {v}: logged delta_hat {:.3e} is not below sqrt(n_u)*xi_t = {lhs:.3e}",
                        m.compensator_increment_bound
                    );
                }
                Ok(m)
            });
            SweepPoint {
                value: v.to_string(),
                result,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_keeps_input_order() {
        let cfg = example1_config(0.8, true);
        let values = parse_value_list("0.0, 0.8, 2.0, 0.4").unwrap();
        let out = sweep(&cfg, "plant.delta", &values);
        let labels: Vec<_> = out.iter().map(|p| p.value.as_str()).collect();
        assert_eq!(labels, ["0.0", "0.8", "2.0", "0.4"]);
        let serial: Vec<_> = values
            .iter()
            .map(|v| {
                let c = cfg.with_value("plant.delta", v.clone()).unwrap();
                let setup = c.validate().unwrap();
                compute_metrics(&run_setup(&setup, setup.kind).unwrap(), &metric_options(&setup))
            })
            .collect();
        for (p, m) in out.iter().zip(serial) {
            assert_eq!(p.result.as_ref().unwrap(), &m);
        }
    }

    #[test]
    fn sweep_reports_bad_values_per_point() {
        let cfg = example1_config(0.8, true);
        let values = parse_value_list("2, -1").unwrap();
        let out = sweep(&cfg, "controller.N", &values);
        assert!(out[0].result.is_ok());
        assert!(out[1].result.as_ref().unwrap_err().is_config());
    }
}
