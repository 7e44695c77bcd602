//! Vacuum Spiker: anomaly detection on univariate time series with a small
//! spiking network.
//!
//! Values are interval-coded into a single input spike per step, fed to a
//! layer of leaky integrate-and-fire neurons and trained with signed STDP on
//! normal data so that familiar inputs stop producing spikes. At detection
//! time the per-step spike count is the anomaly score. MAC counts serve as
//! the energy measure.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod checkpoint;
pub mod detector;
pub mod encoder;
pub mod energy;
pub mod grid;
pub mod lif;
pub mod metrics;
pub mod network;
pub mod stdp;
pub mod timeseries;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError};
pub use detector::{Detection, DetectorConfig, DetectorError};
pub use encoder::{EncoderConfig, EncoderError, EncoderState, Interval};
pub use energy::{
    baseline_macs, model_macs, vacuum_macs_for_run, vacuum_macs_per_step, EnergyError, LayerSpec,
    MacEstimate,
};
pub use grid::{grid_search, GridError, GridOptions, GridResults, GridSpec, RankMetric};
pub use lif::{LifError, LifLayerState, LifParams};
pub use metrics::{evaluate_run, EvaluationOptions, MetricsError, MetricsReport};
pub use network::{Network, NetworkConfig, NetworkError, SpikeSignal, StepOutput, WeightMatrix};
pub use stdp::{
    classify_behaviour, train, train_values, ConnectionKind, StdpError, StdpParams,
    SynapticBehaviour, TrainingReport,
};
pub use timeseries::{DataError, LabelWindow, TimeSeries};
