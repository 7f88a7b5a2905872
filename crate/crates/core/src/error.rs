use std::path::PathBuf;

use crate::sim::CalibrationReport;
use crate::swarm::{CellAssignment, PartitionReport};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value failed validation. `key` is the dotted path of
    /// the offending entry, e.g. `field.width_m`.
    #[error("invalid configuration at `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("degenerate region: {0}")]
    DegenerateRegion(String),

    #[error("intensity is singular at zero distance")]
    SingularDistance,

    #[error("effectiveness is undefined: no pests present before treatment")]
    UndefinedMetric,

    #[error("population sizes differ: {before} before, {after} after")]
    PopulationMismatch { before: usize, after: usize },

    #[error("cannot split the field among {agents} agents: {reason}")]
    OverPartition { agents: usize, reason: String },

    /// Carries the last claimed cells and their pairwise overlap so the
    /// caller can diagnose the stall.
    #[error("boundary negotiation did not settle within {rounds} rounds (pairwise overlap {overlap_area_m2:.3} m²)")]
    NegotiationTimeout {
        rounds: usize,
        overlap_area_m2: f64,
        assignments: Vec<CellAssignment>,
    },

    #[error("partition refused before path feed: overlap {:.3} m², gap {:.3} m²", .0.overlap_area_m2, .0.gap_area_m2)]
    PartitionRefused(PartitionReport),

    #[error("calibration failed: best candidate k={:.6}, i_ref={:.6} misses a target by {:.4}", .0.best.k, .0.best.i_ref, .0.best_max_abs_error)]
    CalibrationFailure(Box<CalibrationReport>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
