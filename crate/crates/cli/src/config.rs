//! TOML run configuration.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use vacuum_spiker::detector::DetectorConfig;
use vacuum_spiker::grid::{GridSpec, RankMetric};
use vacuum_spiker::lif::LifParams;
use vacuum_spiker::metrics::EvaluationOptions;
use vacuum_spiker::stdp::StdpParams;
use vacuum_spiker::timeseries::{CsvSchema, ResampleOptions};

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Required here or via `--seed`.
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub data: DataSection,
    pub encoder: EncoderSection,
    pub network: NetworkSection,
    pub stdp: StdpSection,
    pub train: TrainSection,
    pub detector: DetectorConfig,
    pub evaluate: EvaluationOptions,
    pub grid: GridSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct DataSection {
    pub series: Option<PathBuf>,
    /// Anomaly windows, `{"name": [[start, end], ...]}`.
    pub labels: Option<PathBuf>,
    /// Key in the label file; may be omitted when it holds one dataset.
    pub dataset: Option<String>,
    #[serde(flatten)]
    pub schema: CsvSchema,
    /// Snap irregular timestamps onto the modal spacing.
    pub resample: bool,
    #[serde(flatten)]
    pub resample_options: ResampleOptions,
    /// Share of records used for training; detection runs on the rest.
    pub train_fraction: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    /// Interval length as a fraction of the training domain width.
    pub interval_fraction: Option<f64>,
    /// Absolute interval length, in series units.
    pub interval_length: Option<f64>,
    /// Initial domain; defaults to the range of the training data.
    pub domain: Option<[f64; 2]>,
    /// Values are clamped here; defaults to the domain reflected about its ends.
    pub clamp: Option<[f64; 2]>,
    pub max_neurons: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub n_r: usize,
    pub recurrent: bool,
    pub forward_init_mean: f64,
    pub forward_init_std: f64,
    pub recurrent_init_scale: f64,
    pub weight_bounds: Option<[f64; 2]>,
    pub lif: LifParams,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let n = vacuum_spiker::network::NetworkConfig::default();
        Self {
            n_r: n.n_r,
            recurrent: n.recurrent,
            forward_init_mean: n.forward_init_mean,
            forward_init_std: n.forward_init_std,
            recurrent_init_scale: n.recurrent_init_scale,
            weight_bounds: None,
            lif: n.lif,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StdpSection {
    pub forward: StdpParams,
    pub recurrent: Option<StdpParams>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self { epochs: 1 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct GridSection {
    pub folds: usize,
    pub rank_by: RankMetric,
    #[serde(flatten)]
    pub spec: GridSpec,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            folds: 5,
            rank_by: RankMetric::GMean,
            spec: GridSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        // relative paths are resolved against the config file
        let base = path.parent().unwrap_or(Path::new(""));
        let paths = [&mut cfg.data.series, &mut cfg.data.labels, &mut cfg.out_dir];
        for p in paths.into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn seed(&self, flag: Option<u64>) -> Result<u64, CliError> {
        flag.or(self.seed)
            .ok_or_else(|| CliError::Config("a seed is required (config `seed` or --seed)".into()))
    }

    pub fn series_path(&self) -> Result<&Path, CliError> {
        self.data
            .series
            .as_deref()
            .ok_or_else(|| CliError::Config("`data.series` is not set".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_config_parses() {
        let cfg: RunConfig = toml::from_str(
            r#"
            seed = 7
            [data]
            series = "s.csv"
            label_column = "label"
            train_fraction = 0.5
            [encoder]
            interval_length = 1.0
            clamp = [-10.0, 170.0]
            [network]
            n_r = 1000
            recurrent = true
            [network.lif]
            threshold = -55.0
            [stdp.forward]
            a_minus = 0.1
            a_plus = 0.1
            [stdp.recurrent]
            a_minus = -0.1
            a_plus = -0.1
            [train]
            epochs = 2
            [detector]
            smoothing_window = 100
            threshold = 3.0
            [grid]
            folds = 3
            n_r = [10]
            recurrence = [false]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.network.n_r, 1000);
        assert_eq!(cfg.network.lif.rest, -65.0);
        assert_eq!(cfg.stdp.recurrent.unwrap().a_plus, -0.1);
        assert_eq!(cfg.stdp.forward.tau_plus, 1.051);
        assert_eq!(cfg.data.schema.label_column.as_deref(), Some("label"));
        assert_eq!(cfg.grid.spec.n_r, vec![10]);
        assert_eq!(cfg.grid.spec.threshold.len(), 3);
        assert_eq!(cfg.detector.smoothing_window, Some(100));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("[network]\nnr = 3\n").is_err());
    }

    #[test]
    fn seed_is_mandatory() {
        let cfg = RunConfig::default();
        assert!(cfg.seed(None).is_err());
        assert_eq!(cfg.seed(Some(3)).unwrap(), 3);
    }
}
