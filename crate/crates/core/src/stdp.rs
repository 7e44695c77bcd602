//! Signed STDP with exponentially decaying eligibility traces.
//!
//! Both amplitudes may take either sign, so a connection can be driven
//! towards net potentiation or net depression regardless of spike order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{Network, NetworkError, WeightMatrix};
use crate::timeseries::TimeSeries;

pub const DEFAULT_TAU_MS: f64 = 1.051;
pub const MAX_EPOCHS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StdpError {
    #[error("trace/weight dimensions disagree: {0}")]
    DimensionMismatch(String),
    #[error("training data contains a labelled anomaly at index {0}")]
    AnomalyInTrainingData(usize),
    #[error("recurrent network needs recurrent STDP parameters")]
    MissingRecurrentParams,
    #[error("epochs must lie in 1..={MAX_EPOCHS}, got {0}")]
    BadEpochs(usize),
    #[error("STDP time constants must be positive")]
    BadTau,
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StdpParams {
    /// Scales updates when the postsynaptic neuron fires after the presynaptic one.
    pub a_plus: f64,
    /// Scales updates when the presynaptic neuron fires after the postsynaptic one.
    pub a_minus: f64,
    pub tau_plus: f64,
    pub tau_minus: f64,
}

impl Default for StdpParams {
    fn default() -> Self {
        Self::new(-0.1, -0.1)
    }
}

impl StdpParams {
    /// Amplitudes with the default time constants.
    pub fn new(a_minus: f64, a_plus: f64) -> Self {
        Self {
            a_plus,
            a_minus,
            tau_plus: DEFAULT_TAU_MS,
            tau_minus: DEFAULT_TAU_MS,
        }
    }

    pub fn validate(&self) -> Result<(), StdpError> {
        if self.tau_plus > 0.0 && self.tau_minus > 0.0 {
            Ok(())
        } else {
            Err(StdpError::BadTau)
        }
    }

    /// Closed-form weight change for a single spike pair, `dt = t_post - t_pre` in ms.
    pub fn pair_update(&self, dt: f64) -> f64 {
        if dt >= 0.0 {
            self.a_plus * (-dt / self.tau_plus).exp()
        } else {
            self.a_minus * (dt / self.tau_minus).exp()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TraceState {
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
}

impl TraceState {
    pub fn new(n_pre: usize, n_post: usize) -> Self {
        Self {
            pre: vec![0.0; n_pre],
            post: vec![0.0; n_post],
        }
    }

    pub fn clear(&mut self) {
        self.pre.fill(0.0);
        self.post.fill(0.0);
    }
}

/// One plasticity step for a dense connection.
///
/// Traces decay first; each postsynaptic spike then adds `a_plus * pre_trace`
/// to its incoming column, each presynaptic spike adds `a_minus * post_trace`
/// to its outgoing row, and finally the traces of neurons that fired are
/// set to 1. Spikes in the same step therefore do not pair with each other.
pub fn stdp_update(
    weights: &mut WeightMatrix,
    traces: &mut TraceState,
    pre_spikes: &[usize],
    post_spikes: &[usize],
    params: &StdpParams,
) -> Result<(), StdpError> {
    let (rows, cols) = (weights.rows(), weights.cols());
    if traces.pre.len() != rows || traces.post.len() != cols {
        return Err(StdpError::DimensionMismatch(format!(
            "weights {rows}x{cols}, traces {}/{}",
            traces.pre.len(),
            traces.post.len()
        )));
    }
    if let Some(&x) = pre_spikes.iter().find(|&&x| x >= rows) {
        return Err(StdpError::DimensionMismatch(format!("pre spike {x} >= {rows}")));
    }
    if let Some(&y) = post_spikes.iter().find(|&&y| y >= cols) {
        return Err(StdpError::DimensionMismatch(format!("post spike {y} >= {cols}")));
    }

    let pre_decay = (-1.0 / params.tau_plus).exp();
    let post_decay = (-1.0 / params.tau_minus).exp();
    traces.pre.iter_mut().for_each(|x| *x *= pre_decay);
    traces.post.iter_mut().for_each(|x| *x *= post_decay);

    if params.a_plus != 0.0 && !post_spikes.is_empty() {
        let data = weights.as_mut_slice();
        for (x, &trace) in traces.pre.iter().enumerate() {
            if trace == 0.0 {
                continue;
            }
            let row = &mut data[x * cols..(x + 1) * cols];
            for &y in post_spikes {
                row[y] += params.a_plus * trace;
            }
        }
    }
    if params.a_minus != 0.0 {
        for &x in pre_spikes {
            for (w, &trace) in weights.row_mut(x).iter_mut().zip(&traces.post) {
                *w += params.a_minus * trace;
            }
        }
    }

    for &x in pre_spikes {
        traces.pre[x] = 1.0;
    }
    for &y in post_spikes {
        traces.post[y] = 1.0;
    }
    Ok(())
}

/// Connection type, which decides how antisymmetric amplitudes resolve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConnectionKind {
    Forward,
    Recurrent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynapticBehaviour {
    Excitatory,
    Inhibitory,
    Balanced,
}

impl SynapticBehaviour {
    fn from_sign(x: f64) -> Self {
        if x > 0.0 {
            SynapticBehaviour::Excitatory
        } else if x < 0.0 {
            SynapticBehaviour::Inhibitory
        } else {
            SynapticBehaviour::Balanced
        }
    }
}

/// Prevalent behaviour a pair of amplitudes induces on a connection.
///
/// Same-signed amplitudes decide it outright. Otherwise the busier layer
/// decides: on a forward connection the input layer fires every step and
/// out-fires `R`, so `a_minus` dominates; on a recurrent connection pre and
/// post activity are identical, so the larger magnitude dominates and
/// exact antisymmetry is balanced.
pub fn classify_behaviour(kind: ConnectionKind, a_minus: f64, a_plus: f64) -> SynapticBehaviour {
    if a_minus > 0.0 && a_plus > 0.0 {
        return SynapticBehaviour::Excitatory;
    }
    if a_minus < 0.0 && a_plus < 0.0 {
        return SynapticBehaviour::Inhibitory;
    }
    match kind {
        ConnectionKind::Forward if a_minus != 0.0 => SynapticBehaviour::from_sign(a_minus),
        ConnectionKind::Forward => SynapticBehaviour::from_sign(a_plus),
        ConnectionKind::Recurrent => SynapticBehaviour::from_sign(a_minus + a_plus),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl WeightStats {
    pub fn of(w: &WeightMatrix) -> Self {
        let data = w.as_slice();
        let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for &x in data {
            min = min.min(x);
            max = max.max(x);
            sum += x;
        }
        Self {
            mean: sum / data.len().max(1) as f64,
            min,
            max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub spikes_per_epoch: Vec<u64>,
    pub input_neurons: usize,
    pub forward_behaviour: SynapticBehaviour,
    pub recurrent_behaviour: Option<SynapticBehaviour>,
    pub forward_weights: WeightStats,
    pub recurrent_weights: Option<WeightStats>,
}

/// Drives a network through a training stream with plasticity enabled.
pub struct Trainer<'a> {
    net: &'a mut Network,
    forward: StdpParams,
    recurrent: Option<StdpParams>,
    forward_traces: TraceState,
    recurrent_traces: TraceState,
    post_buf: Vec<usize>,
}

impl<'a> Trainer<'a> {
    pub fn new(
        net: &'a mut Network,
        forward: StdpParams,
        recurrent: Option<StdpParams>,
    ) -> Result<Self, StdpError> {
        forward.validate()?;
        let recurrent = match (net.is_recurrent(), recurrent) {
            (true, None) => return Err(StdpError::MissingRecurrentParams),
            (true, Some(p)) => {
                p.validate()?;
                Some(p)
            }
            (false, _) => None,
        };
        let n = net.n_r();
        Ok(Self {
            forward_traces: TraceState::new(net.forward_weights().rows(), n),
            recurrent_traces: TraceState::new(n, n),
            post_buf: Vec::with_capacity(n),
            net,
            forward,
            recurrent,
        })
    }

    pub fn network(&self) -> &Network {
        self.net
    }

    /// Starts an epoch: layer at rest, traces cleared.
    pub fn begin_epoch(&mut self) {
        self.net.reset_dynamics();
        self.forward_traces.clear();
        self.recurrent_traces.clear();
    }

    /// Feeds one value and applies plasticity. Returns the `R` spike count.
    pub fn step(&mut self, v: f64) -> Result<usize, StdpError> {
        let (input, spikes) = self.net.advance(v)?;
        let rows = self.net.w_ir.rows();
        if self.forward_traces.pre.len() < rows {
            self.forward_traces.pre.resize(rows, 0.0);
        }
        self.post_buf.clear();
        self.post_buf.extend(
            self.net.layer.spiked_last_step.iter().enumerate().filter(|(_, &s)| s).map(|(i, _)| i),
        );
        stdp_update(
            &mut self.net.w_ir,
            &mut self.forward_traces,
            &[input],
            &self.post_buf,
            &self.forward,
        )?;
        if let (Some(w_rr), Some(p)) = (self.net.w_rr.as_mut(), self.recurrent.as_ref()) {
            stdp_update(w_rr, &mut self.recurrent_traces, &self.post_buf, &self.post_buf, p)?;
        }
        if let Some((lo, hi)) = self.net.config.weight_bounds {
            let clamp = |w: &mut f64| *w = w.clamp(lo, hi);
            self.net.w_ir.row_mut(input).iter_mut().for_each(clamp);
            if !self.post_buf.is_empty() {
                self.net.w_ir.as_mut_slice().iter_mut().for_each(clamp);
                if let Some(w) = self.net.w_rr.as_mut() {
                    w.as_mut_slice().iter_mut().for_each(clamp);
                }
            }
        }
        Ok(spikes)
    }

    /// Leaves the network at rest, ready for detection.
    pub fn finish(self) {
        self.net.reset_dynamics();
    }
}

/// Trains on a stream of normal values for `epochs` passes.
pub fn train_values(
    net: &mut Network,
    values: &[f64],
    forward: StdpParams,
    recurrent: Option<StdpParams>,
    epochs: usize,
) -> Result<TrainingReport, StdpError> {
    if !(1..=MAX_EPOCHS).contains(&epochs) {
        return Err(StdpError::BadEpochs(epochs));
    }
    let recurrent_behaviour = match (net.is_recurrent(), recurrent) {
        (true, Some(p)) => Some(classify_behaviour(ConnectionKind::Recurrent, p.a_minus, p.a_plus)),
        _ => None,
    };
    let mut trainer = Trainer::new(net, forward, recurrent)?;
    let mut spikes_per_epoch = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        trainer.begin_epoch();
        let mut total = 0u64;
        for &v in values {
            total += trainer.step(v)? as u64;
        }
        spikes_per_epoch.push(total);
    }
    trainer.finish();
    Ok(TrainingReport {
        epochs,
        steps_per_epoch: values.len(),
        spikes_per_epoch,
        input_neurons: net.forward_weights().rows(),
        forward_behaviour: classify_behaviour(ConnectionKind::Forward, forward.a_minus, forward.a_plus),
        recurrent_behaviour,
        forward_weights: WeightStats::of(net.forward_weights()),
        recurrent_weights: net.recurrent_weights().map(WeightStats::of),
    })
}

/// Trains on a series that must not contain labelled anomalies.
pub fn train(
    net: &mut Network,
    series: &TimeSeries,
    forward: StdpParams,
    recurrent: Option<StdpParams>,
    epochs: usize,
) -> Result<TrainingReport, StdpError> {
    if let Some(i) = series.labels().and_then(|l| l.iter().position(|&b| b)) {
        return Err(StdpError::AnomalyInTrainingData(i));
    }
    train_values(net, series.values(), forward, recurrent, epochs)
}
