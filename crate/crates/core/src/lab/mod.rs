//! Configuration, experiment orchestration and result serialization.

pub mod config;
pub mod record;
pub mod run;

pub use config::{ComplexInput, Config, ExperimentConfig, GridConfig, ProblemConfig};
pub use record::{
    read_records, records_for, spectrum_distances, spectrum_records, verdict, write_records, RunRecord, SpectrumDistance,
    Verdict,
};
pub use run::*;
