//! Discrete-time leaky integrate-and-fire layer with 1 ms steps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LifError {
    #[error("input has {got} currents, layer has {expected} neurons")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("layer must have at least one neuron")]
    EmptyLayer,
    #[error("invalid LIF parameters: {0}")]
    BadParams(&'static str),
}

/// `g_l` for a membrane time constant of `tau_ms` milliseconds.
pub fn leak_for_tau(tau_ms: f64) -> f64 {
    1.0 - (-1.0 / tau_ms).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LifParams {
    /// Capacitance (uF); input currents are divided by it.
    pub capacitance: f64,
    /// Per-step fraction of `V - E_L` that leaks away.
    pub leak: f64,
    pub rest: f64,
    pub reset: f64,
    pub threshold: f64,
    pub refractory_steps: u32,
}

impl Default for LifParams {
    fn default() -> Self {
        Self {
            capacitance: 1.0,
            leak: leak_for_tau(100.0),
            rest: -65.0,
            reset: -65.0,
            threshold: -55.0,
            refractory_steps: 5,
        }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<(), LifError> {
        if !(self.leak > 0.0 && self.leak < 1.0) {
            return Err(LifError::BadParams("leak must lie in (0, 1)"));
        }
        if !(self.capacitance > 0.0) {
            return Err(LifError::BadParams("capacitance must be positive"));
        }
        if !(self.threshold > self.rest) {
            return Err(LifError::BadParams("threshold must exceed resting potential"));
        }
        if !(self.rest.is_finite() && self.reset.is_finite() && self.threshold.is_finite()) {
            return Err(LifError::BadParams("potentials must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifLayerState {
    pub voltages: Vec<f64>,
    pub refractory_remaining: Vec<u32>,
    pub spiked_last_step: Vec<bool>,
}

impl LifLayerState {
    /// All neurons at rest, none refractory.
    pub fn at_rest(n: usize, params: &LifParams) -> Result<Self, LifError> {
        if n == 0 {
            return Err(LifError::EmptyLayer);
        }
        Ok(Self {
            voltages: vec![params.rest; n],
            refractory_remaining: vec![0; n],
            spiked_last_step: vec![false; n],
        })
    }

    pub fn len(&self) -> usize {
        self.voltages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voltages.is_empty()
    }

    pub fn spike_count(&self) -> usize {
        self.spiked_last_step.iter().filter(|&&s| s).count()
    }

    /// Advances one step: decay toward rest, integrate, threshold.
    ///
    /// Refractory neurons are held at the reset potential and ignore input.
    /// The spike mask is left in `spiked_last_step`; the number of spikes is
    /// returned.
    pub fn step(&mut self, params: &LifParams, input: &[f64]) -> Result<usize, LifError> {
        let n = self.voltages.len();
        if input.len() != n {
            return Err(LifError::DimensionMismatch {
                got: input.len(),
                expected: n,
            });
        }
        let retain = 1.0 - params.leak;
        let mut spikes = 0;
        for i in 0..n {
            if self.refractory_remaining[i] > 0 {
                self.refractory_remaining[i] -= 1;
                self.voltages[i] = params.reset;
                self.spiked_last_step[i] = false;
                continue;
            }
            let v = params.rest
                + (self.voltages[i] - params.rest) * retain
                + input[i] / params.capacitance;
            if v >= params.threshold {
                self.voltages[i] = params.reset;
                self.refractory_remaining[i] = params.refractory_steps;
                self.spiked_last_step[i] = true;
                spikes += 1;
            } else {
                self.voltages[i] = v;
                self.spiked_last_step[i] = false;
            }
        }
        Ok(spikes)
    }
}
