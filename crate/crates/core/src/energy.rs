//! MAC counting: per-step cost of the Vacuum Spiker and closed-form
//! estimates for common baseline layers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnergyError {
    #[error("spike count {s_r} exceeds layer size {n}")]
    SpikeCountOutOfRange { s_r: u64, n: u64 },
    #[error("layer size must be at least 1")]
    EmptyLayer,
    #[error("signal is empty")]
    EmptySignal,
    #[error("layer parameter `{0}` must be positive")]
    NonPositive(&'static str),
    #[error("architecture has no layers")]
    NoLayers,
    #[error("MAC count overflows")]
    Overflow,
}

/// MACs of one inference step, split into voltage updates and spike propagation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacEstimate {
    pub e_u: u64,
    pub e_s: u64,
    pub total: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_step_series: Option<Vec<u64>>,
}

/// Single-step cost: one input spike fans out to `n` neurons, `n` voltage
/// updates, and with recurrence every R spike reaches `n` neurons.
pub fn mac_estimate(n: u64, recurrent: bool, s_r: u64) -> Result<MacEstimate, EnergyError> {
    if n == 0 {
        return Err(EnergyError::EmptyLayer);
    }
    if s_r > n {
        return Err(EnergyError::SpikeCountOutOfRange { s_r, n });
    }
    let e_u = n;
    let e_s = if recurrent { n * (s_r + 1) } else { n };
    Ok(MacEstimate {
        e_u,
        e_s,
        total: e_u + e_s,
        per_step_series: None,
    })
}

/// `2n` without recurrence, `n(s_r + 2)` with it.
pub fn vacuum_macs_per_step(n: u64, recurrent: bool, s_r: u64) -> Result<u64, EnergyError> {
    mac_estimate(n, recurrent, s_r).map(|m| m.total)
}

/// Per-step MACs for a recorded run.
pub fn vacuum_macs_series(
    spike_counts: &[u32],
    n: u64,
    recurrent: bool,
) -> Result<Vec<u64>, EnergyError> {
    spike_counts
        .iter()
        .map(|&s| vacuum_macs_per_step(n, recurrent, u64::from(s)))
        .collect()
}

/// Mean per-step MACs and total over a recorded run.
pub fn vacuum_macs_for_run(
    spike_counts: &[u32],
    n: u64,
    recurrent: bool,
) -> Result<(f64, u64), EnergyError> {
    if spike_counts.is_empty() {
        return Err(EnergyError::EmptySignal);
    }
    let total = vacuum_macs_series(spike_counts, n, recurrent)?
        .into_iter()
        .try_fold(0u64, u64::checked_add)
        .ok_or(EnergyError::Overflow)?;
    Ok((total as f64 / spike_counts.len() as f64, total))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        n_in: u64,
        n_out: u64,
    },
    Conv1d {
        kernel: u64,
        c_in: u64,
        c_out: u64,
        output_len: u64,
    },
    Lstm {
        seq_len: u64,
        hidden: u64,
        input: u64,
    },
    BatchNorm {
        size: u64,
    },
    AvgPool {
        kernel: u64,
        output_size: u64,
    },
    Ocsvm {
        n_sv: u64,
        d: u64,
    },
    /// `n_train` is kept for reference; the per-query cost does not depend on it.
    Lof {
        d: u64,
        k: u64,
        #[serde(default)]
        n_train: Option<u64>,
    },
}

impl LayerSpec {
    fn params(&self) -> Vec<(&'static str, u64)> {
        match *self {
            LayerSpec::Dense { n_in, n_out } => vec![("n_in", n_in), ("n_out", n_out)],
            LayerSpec::Conv1d { kernel, c_in, c_out, output_len } => vec![
                ("kernel", kernel),
                ("c_in", c_in),
                ("c_out", c_out),
                ("output_len", output_len),
            ],
            LayerSpec::Lstm { seq_len, hidden, input } => {
                vec![("seq_len", seq_len), ("hidden", hidden), ("input", input)]
            }
            LayerSpec::BatchNorm { size } => vec![("size", size)],
            LayerSpec::AvgPool { kernel, output_size } => {
                vec![("kernel", kernel), ("output_size", output_size)]
            }
            LayerSpec::Ocsvm { n_sv, d } => vec![("n_sv", n_sv), ("d", d)],
            LayerSpec::Lof { d, k, n_train } => {
                let mut p = vec![("d", d), ("k", k)];
                if let Some(t) = n_train {
                    p.push(("n_train", t));
                }
                p
            }
        }
    }

    pub fn validate(&self) -> Result<(), EnergyError> {
        match self.params().into_iter().find(|&(_, v)| v == 0) {
            Some((name, _)) => Err(EnergyError::NonPositive(name)),
            None => Ok(()),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::Lstm { .. } => "lstm",
            LayerSpec::BatchNorm { .. } => "batch_norm",
            LayerSpec::AvgPool { .. } => "avg_pool",
            LayerSpec::Ocsvm { .. } => "ocsvm",
            LayerSpec::Lof { .. } => "lof",
        }
    }
}

fn mul(xs: &[u64]) -> Result<u64, EnergyError> {
    xs.iter()
        .try_fold(1u64, |acc, &x| acc.checked_mul(x))
        .ok_or(EnergyError::Overflow)
}

fn add(xs: &[u64]) -> Result<u64, EnergyError> {
    xs.iter()
        .try_fold(0u64, |acc, &x| acc.checked_add(x))
        .ok_or(EnergyError::Overflow)
}

pub fn baseline_macs(spec: &LayerSpec) -> Result<u64, EnergyError> {
    spec.validate()?;
    match *spec {
        LayerSpec::Dense { n_in, n_out } => mul(&[n_in, n_out]),
        LayerSpec::Conv1d { kernel, c_in, c_out, output_len } => {
            mul(&[kernel, c_in, c_out, output_len])
        }
        LayerSpec::Lstm { seq_len, hidden: n, input: c } => {
            let per_step = add(&[mul(&[4, n, c])?, mul(&[4, n, n])?, mul(&[12, n])?])?;
            mul(&[seq_len, per_step])
        }
        LayerSpec::BatchNorm { size } => Ok(size),
        LayerSpec::AvgPool { kernel, output_size } => mul(&[kernel, output_size]),
        LayerSpec::Ocsvm { n_sv, d } => mul(&[n_sv, add(&[mul(&[2, d])?, 2])?]),
        LayerSpec::Lof { d, k, .. } => {
            let k1 = add(&[k, 1])?;
            add(&[mul(&[2, d])?, mul(&[k1, k1])?, k1])
        }
    }
}

pub fn model_macs(specs: &[LayerSpec]) -> Result<u64, EnergyError> {
    if specs.is_empty() {
        return Err(EnergyError::NoLayers);
    }
    let per_layer = specs.iter().map(baseline_macs).collect::<Result<Vec<_>, _>>()?;
    add(&per_layer)
}

/// The Vacuum Spiker as an entry of an architecture file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VacuumSpikerSpec {
    pub n_r: u64,
    #[serde(default)]
    pub recurrent: bool,
    /// Spikes per step assumed for the recurrent cost.
    #[serde(default)]
    pub spike_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArchitectureEntry {
    Layer(LayerSpec),
    VacuumSpiker { vacuum_spiker: VacuumSpikerSpec },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerMacs {
    pub layer: String,
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub layers: Vec<LayerMacs>,
    pub total_macs: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joules_per_mac: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_joules: Option<f64>,
}

/// MACs per entry and in total; joules only when a multiplier is given.
pub fn energy_report(
    entries: &[ArchitectureEntry],
    joules_per_mac: Option<f64>,
) -> Result<EnergyReport, EnergyError> {
    if entries.is_empty() {
        return Err(EnergyError::NoLayers);
    }
    let mut layers = Vec::with_capacity(entries.len());
    for e in entries {
        let (layer, macs) = match e {
            ArchitectureEntry::Layer(spec) => (spec.kind().to_string(), baseline_macs(spec)?),
            ArchitectureEntry::VacuumSpiker { vacuum_spiker: v } => (
                "vacuum_spiker".to_string(),
                vacuum_macs_per_step(v.n_r, v.recurrent, v.spike_count)?,
            ),
        };
        layers.push(LayerMacs { layer, macs });
    }
    let total_macs = add(&layers.iter().map(|l| l.macs).collect::<Vec<_>>())?;
    Ok(EnergyReport {
        layers,
        total_macs,
        joules_per_mac,
        total_joules: joules_per_mac.map(|j| j * total_macs as f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn vacuum_examples() {
        assert_eq!(vacuum_macs_per_step(1000, false, 0).unwrap(), 2000);
        assert_eq!(vacuum_macs_per_step(1000, true, 0).unwrap(), 2000);
        assert_eq!(vacuum_macs_per_step(1000, true, 3).unwrap(), 5000);
        assert_eq!(
            vacuum_macs_per_step(10, true, 11),
            Err(EnergyError::SpikeCountOutOfRange { s_r: 11, n: 10 })
        );
        let m = mac_estimate(1000, true, 3).unwrap();
        assert_eq!((m.e_u, m.e_s, m.total), (1000, 4000, 5000));
    }

    #[test]
    fn run_examples() {
        assert_eq!(vacuum_macs_series(&[0, 1, 2], 10, true).unwrap(), vec![20, 30, 40]);
        assert_eq!(vacuum_macs_for_run(&[0, 1, 2], 10, true).unwrap(), (30.0, 90));
        assert_eq!(vacuum_macs_for_run(&[4, 0, 9, 1], 1000, false).unwrap().0, 2000.0);
        assert_eq!(vacuum_macs_for_run(&[], 10, true), Err(EnergyError::EmptySignal));
    }

    #[test]
    fn baseline_examples() {
        let dense = LayerSpec::Dense { n_in: 32, n_out: 64 };
        assert_eq!(baseline_macs(&dense).unwrap(), 2048);
        let lstm = LayerSpec::Lstm { seq_len: 10, hidden: 8, input: 4 };
        assert_eq!(baseline_macs(&lstm).unwrap(), 10 * (4 * 8 * 4 + 4 * 64 + 12 * 8));
        assert_eq!(baseline_macs(&lstm).unwrap(), 4800);
        let lof = LayerSpec::Lof { d: 10, k: 30, n_train: Some(5000) };
        assert_eq!(baseline_macs(&lof).unwrap(), 20 + 31 * 31 + 31);
        assert_eq!(baseline_macs(&LayerSpec::Ocsvm { n_sv: 100, d: 10 }).unwrap(), 2200);
        let conv = LayerSpec::Conv1d { kernel: 3, c_in: 2, c_out: 4, output_len: 10 };
        assert_eq!(baseline_macs(&conv).unwrap(), 240);
        assert_eq!(baseline_macs(&LayerSpec::BatchNorm { size: 64 }).unwrap(), 64);
        let pool = LayerSpec::AvgPool { kernel: 2, output_size: 16 };
        assert_eq!(baseline_macs(&pool).unwrap(), 32);
        assert_eq!(
            baseline_macs(&LayerSpec::Dense { n_in: 0, n_out: 3 }),
            Err(EnergyError::NonPositive("n_in"))
        );
    }

    #[test]
    fn model_examples() {
        let two = [
            LayerSpec::Dense { n_in: 10, n_out: 5 },
            LayerSpec::Dense { n_in: 5, n_out: 1 },
        ];
        assert_eq!(model_macs(&two).unwrap(), 55);
        assert_eq!(model_macs(&two[..1]).unwrap(), baseline_macs(&two[0]).unwrap());
        assert_eq!(model_macs(&[]), Err(EnergyError::NoLayers));
    }

    #[test]
    fn architecture_file_parses() {
        let json = r#"[
            {"type": "dense", "n_in": 32, "n_out": 64},
            {"type": "lof", "d": 10, "k": 30},
            {"vacuum_spiker": {"n_r": 1000}}
        ]"#;
        let entries: Vec<ArchitectureEntry> = serde_json::from_str(json).unwrap();
        let r = energy_report(&entries, None).unwrap();
        let macs: Vec<u64> = r.layers.iter().map(|l| l.macs).collect();
        assert_eq!(macs, vec![2048, 1012, 2000]);
        assert_eq!(r.total_macs, 5060);
        assert!(r.total_joules.is_none());
        let r = energy_report(&entries, Some(2.0)).unwrap();
        assert_eq!(r.total_joules, Some(10120.0));
    }

    proptest! {
        #[test]
        fn non_recurrent_cost_ignores_spikes(n in 1u64..5000, frac in 0.0f64..=1.0) {
            let s = (n as f64 * frac) as u64;
            prop_assert_eq!(vacuum_macs_per_step(n, false, s).unwrap(), 2 * n);
        }

        #[test]
        fn recurrent_cost_has_slope_n(n in 1u64..5000, frac in 0.0f64..1.0) {
            let s = ((n - 1) as f64 * frac) as u64;
            let a = vacuum_macs_per_step(n, true, s).unwrap();
            let b = vacuum_macs_per_step(n, true, s + 1).unwrap();
            prop_assert_eq!(b - a, n);
            prop_assert_eq!(a, n * (s + 2));
        }
    }
}
