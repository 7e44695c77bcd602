//! Two-layer detector topology: interval-coded input layer `I` feeding a
//! LIF processing layer `R` through a dense connection, with an optional
//! dense recurrent connection `R -> R` delivered one step late.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{EncoderError, EncoderState};
use crate::lif::{LifError, LifLayerState, LifParams};
use crate::timeseries::TimeSeries;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Lif(#[from] LifError),
    #[error("cannot grow input layer from {current} to {requested} rows")]
    NotGrowing { current: usize, requested: usize },
    #[error("input layer of {requested} neurons exceeds cap {cap}")]
    NeuronCapExceeded { requested: usize, cap: usize },
    #[error("invalid network config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub n_r: usize,
    pub recurrent: bool,
    pub forward_init_mean: f64,
    pub forward_init_std: f64,
    /// Recurrent weights start at `scale * (I - 1)`: `-scale` off the
    /// diagonal, zero on it.
    pub recurrent_init_scale: f64,
    pub lif: LifParams,
    pub seed: u64,
    /// Optional `[min, max]` clamp applied after plasticity updates.
    pub weight_bounds: Option<(f64, f64)>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            n_r: 100,
            recurrent: false,
            forward_init_mean: 0.05,
            forward_init_std: 0.1,
            recurrent_init_scale: 0.025,
            lif: LifParams::default(),
            seed: 0,
            weight_bounds: None,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.n_r == 0 {
            return Err(NetworkError::BadConfig("n_r must be at least 1".into()));
        }
        if !(self.forward_init_std >= 0.0 && self.forward_init_std.is_finite())
            || !self.forward_init_mean.is_finite()
        {
            return Err(NetworkError::BadConfig("bad forward init distribution".into()));
        }
        if let Some((lo, hi)) = self.weight_bounds {
            if !(lo <= hi) {
                return Err(NetworkError::BadConfig("weight bounds inverted".into()));
            }
        }
        self.lif.validate()?;
        Ok(())
    }
}

/// Dense row-major matrix; row = presynaptic neuron, column = postsynaptic.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl WeightMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Option<Self> {
        (data.len() == rows * cols).then_some(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, w: f64) {
        self.data[row * self.cols + col] = w;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn row_mut(&mut self, row: usize) -> &mut [f64] {
        &mut self.data[row * self.cols..(row + 1) * self.cols]
    }

    fn push_row(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.cols);
        self.data.extend_from_slice(row);
        self.rows += 1;
    }
}

/// Forward weights for input neuron `row`.
///
/// Each row has its own ChaCha stream keyed by `(seed, row)`, so a row's
/// weights do not depend on when it was created.
pub fn forward_init_row(config: &NetworkConfig, row: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(row as u64);
    let normal = Normal::new(config.forward_init_mean, config.forward_init_std)
        .expect("validated init distribution");
    (0..config.n_r).map(|_| normal.sample(&mut rng)).collect()
}

fn recurrent_init(config: &NetworkConfig) -> WeightMatrix {
    let n = config.n_r;
    let mut w = WeightMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                w.set(i, j, -config.recurrent_init_scale);
            }
        }
    }
    w
}

/// Result of one inference step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutput {
    pub input_neuron: usize,
    pub spike_count: usize,
    pub alert: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub(crate) config: NetworkConfig,
    pub(crate) encoder: EncoderState,
    pub(crate) w_ir: WeightMatrix,
    pub(crate) w_rr: Option<WeightMatrix>,
    pub(crate) layer: LifLayerState,
    pub(crate) prev_spikes: Vec<bool>,
    pub(crate) step_counter: u64,
    current: Vec<f64>,
}

impl Network {
    pub fn build(config: NetworkConfig, encoder: EncoderState) -> Result<Self, NetworkError> {
        config.validate()?;
        let n_in = encoder.neuron_count();
        let mut w_ir = WeightMatrix::zeros(0, config.n_r);
        for r in 0..n_in {
            w_ir.push_row(&forward_init_row(&config, r));
        }
        let w_rr = config.recurrent.then(|| recurrent_init(&config));
        let layer = LifLayerState::at_rest(config.n_r, &config.lif)?;
        Ok(Self {
            prev_spikes: vec![false; config.n_r],
            current: vec![0.0; config.n_r],
            step_counter: 0,
            config,
            encoder,
            w_ir,
            w_rr,
            layer,
        })
    }

    /// Reassembles a network from checkpointed parts.
    pub(crate) fn from_parts(
        config: NetworkConfig,
        encoder: EncoderState,
        w_ir: WeightMatrix,
        w_rr: Option<WeightMatrix>,
        layer: LifLayerState,
        prev_spikes: Vec<bool>,
        step_counter: u64,
    ) -> Result<Self, NetworkError> {
        config.validate()?;
        encoder.validate()?;
        let n = config.n_r;
        let bad = |m: &str| Err(NetworkError::BadConfig(m.to_string()));
        if w_ir.rows() != encoder.neuron_count() || w_ir.cols() != n {
            return bad("forward weight shape does not match encoder and layer");
        }
        match &w_rr {
            Some(w) if !config.recurrent || w.rows() != n || w.cols() != n => {
                return bad("recurrent weight shape mismatch")
            }
            None if config.recurrent => return bad("recurrent weights missing"),
            _ => {}
        }
        if layer.len() != n || prev_spikes.len() != n {
            return bad("layer state size mismatch");
        }
        Ok(Self {
            config,
            encoder,
            w_ir,
            w_rr,
            layer,
            prev_spikes,
            step_counter,
            current: vec![0.0; n],
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn encoder(&self) -> &EncoderState {
        &self.encoder
    }

    pub fn forward_weights(&self) -> &WeightMatrix {
        &self.w_ir
    }

    pub fn recurrent_weights(&self) -> Option<&WeightMatrix> {
        self.w_rr.as_ref()
    }

    pub fn layer(&self) -> &LifLayerState {
        &self.layer
    }

    pub fn n_r(&self) -> usize {
        self.config.n_r
    }

    pub fn is_recurrent(&self) -> bool {
        self.w_rr.is_some()
    }

    pub fn step_counter(&self) -> u64 {
        self.step_counter
    }

    pub fn previous_spikes(&self) -> &[bool] {
        &self.prev_spikes
    }

    /// Overrides the spikes fed back on the next step.
    pub fn set_previous_spikes(&mut self, mask: &[bool]) {
        self.prev_spikes.copy_from_slice(mask);
    }

    /// Input current delivered to `R` on the most recent step.
    pub fn last_input_current(&self) -> &[f64] {
        &self.current
    }

    /// Appends freshly initialized forward rows up to `new_rows`.
    pub fn grow_input(&mut self, new_rows: usize) -> Result<(), NetworkError> {
        let current = self.w_ir.rows();
        if new_rows <= current {
            return Err(NetworkError::NotGrowing {
                current,
                requested: new_rows,
            });
        }
        let cap = self.encoder.config().max_neurons;
        if new_rows > cap {
            return Err(NetworkError::NeuronCapExceeded {
                requested: new_rows,
                cap,
            });
        }
        for r in current..new_rows {
            self.w_ir.push_row(&forward_init_row(&self.config, r));
        }
        Ok(())
    }

    /// Puts `R` back at rest and clears the feedback buffer. Weights and
    /// the encoder partition are kept.
    pub fn reset_dynamics(&mut self) {
        let p = &self.config.lif;
        self.layer.voltages.fill(p.rest);
        self.layer.refractory_remaining.fill(0);
        self.layer.spiked_last_step.fill(false);
        self.prev_spikes.fill(false);
        self.current.fill(0.0);
    }

    /// Encodes `v`, propagates `I -> R` (and `R -> R` from the previous
    /// step's spikes) and steps the layer. Returns the firing input neuron
    /// and the number of `R` spikes.
    pub(crate) fn advance(&mut self, v: f64) -> Result<(usize, usize), NetworkError> {
        let input = self.encoder.encode(v)?;
        let needed = self.encoder.neuron_count();
        if needed > self.w_ir.rows() {
            self.grow_input(needed)?;
        }
        self.current.copy_from_slice(self.w_ir.row(input));
        if let Some(w_rr) = &self.w_rr {
            for (j, _) in self.prev_spikes.iter().enumerate().filter(|(_, &s)| s) {
                for (c, w) in self.current.iter_mut().zip(w_rr.row(j)) {
                    *c += w;
                }
            }
        }
        let spikes = self.layer.step(&self.config.lif, &self.current)?;
        self.prev_spikes.copy_from_slice(&self.layer.spiked_last_step);
        self.step_counter += 1;
        Ok((input, spikes))
    }

    /// One detection step; alerts when the spike count strictly exceeds `theta`.
    pub fn infer_step(&mut self, v: f64, theta: f64) -> Result<StepOutput, NetworkError> {
        let (input_neuron, spike_count) = self.advance(v)?;
        Ok(StepOutput {
            input_neuron,
            spike_count,
            alert: spike_count as f64 > theta,
        })
    }

    pub fn run_series(
        &mut self,
        series: &TimeSeries,
        theta: f64,
    ) -> Result<SpikeSignal, NetworkError> {
        let mut signal = SpikeSignal::with_capacity(series.len());
        for (&t, &v) in series.timestamps().iter().zip(series.values()) {
            let out = self.infer_step(v, theta)?;
            signal.push(t, out.spike_count as u32, out.alert);
        }
        Ok(signal)
    }
}

/// Per-step `R` spike counts and alerts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpikeSignal {
    pub timestamps: Vec<f64>,
    pub counts: Vec<u32>,
    pub alerts: Vec<bool>,
}

impl SpikeSignal {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            timestamps: Vec::with_capacity(n),
            counts: Vec::with_capacity(n),
            alerts: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, t: f64, count: u32, alert: bool) {
        self.timestamps.push(t);
        self.counts.push(count);
        self.alerts.push(alert);
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total_spikes(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn as_scores(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| f64::from(c)).collect()
    }

    /// Writes `timestamp,spike_count,alert`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["timestamp", "spike_count", "alert"])?;
        for i in 0..self.len() {
            w.write_record([
                self.timestamps[i].to_string(),
                self.counts[i].to_string(),
                u8::from(self.alerts[i]).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
