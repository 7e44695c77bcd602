//! Grid search over detector configurations with expanding-window
//! cross-validation, run on a worker pool and ranked deterministically.

use std::cmp::Ordering;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::min_max;
use crate::encoder::{EncoderError, EncoderState, Interval};
use crate::energy::{vacuum_macs_for_run, EnergyError};
use crate::lif::{leak_for_tau, LifParams};
use crate::metrics::{evaluate_run, EvaluationOptions, MetricsError, MetricsReport};
use crate::network::{Network, NetworkConfig, NetworkError};
use crate::stdp::{train_values, StdpError, StdpParams, DEFAULT_TAU_MS};
use crate::timeseries::{expanding_folds, DataError, FoldSplit, TimeSeries};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid has no configurations")]
    EmptyGrid,
    #[error("fold {fold}: training data is empty")]
    EmptyTraining { fold: usize },
    #[error("worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Stdp(#[from] StdpError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Value sets swept by the grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub forward_a_minus: Vec<f64>,
    pub forward_a_plus: Vec<f64>,
    pub recurrent_a_minus: Vec<f64>,
    pub recurrent_a_plus: Vec<f64>,
    pub recurrence: Vec<bool>,
    pub n_r: Vec<usize>,
    pub threshold: Vec<f64>,
    pub leak: Vec<f64>,
    /// Interval length as a fraction of the training domain width.
    pub interval_fraction: Vec<f64>,
    pub epochs: Vec<usize>,
    pub tau: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            forward_a_minus: vec![-0.1, 0.1],
            forward_a_plus: vec![-0.1, 0.1],
            recurrent_a_minus: vec![-0.1, 0.1],
            recurrent_a_plus: vec![-0.1, 0.1],
            recurrence: vec![false, true],
            n_r: vec![100, 2000],
            threshold: vec![-62.0, -55.0, -40.0],
            leak: vec![leak_for_tau(100.0), leak_for_tau(150.0), leak_for_tau(200.0)],
            interval_fraction: vec![0.001, 0.1],
            epochs: vec![1, 2, 3, 4, 5],
            tau: DEFAULT_TAU_MS,
        }
    }
}

/// One point of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub id: usize,
    pub forward: StdpParams,
    pub recurrent: Option<StdpParams>,
    pub n_r: usize,
    pub threshold: f64,
    pub leak: f64,
    pub interval_fraction: f64,
    pub epochs: usize,
}

impl GridSpec {
    /// Cartesian product in a fixed order; ids follow that order.
    pub fn expand(&self) -> Vec<GridConfig> {
        let params = |a_minus, a_plus| StdpParams {
            tau_plus: self.tau,
            tau_minus: self.tau,
            ..StdpParams::new(a_minus, a_plus)
        };
        let mut recurrent_options = Vec::new();
        for &rec in &self.recurrence {
            if rec {
                for &am in &self.recurrent_a_minus {
                    for &ap in &self.recurrent_a_plus {
                        recurrent_options.push(Some(params(am, ap)));
                    }
                }
            } else {
                recurrent_options.push(None);
            }
        }
        let mut out = Vec::new();
        for &fm in &self.forward_a_minus {
            for &fp in &self.forward_a_plus {
                for rec in &recurrent_options {
                    for &n_r in &self.n_r {
                        for &threshold in &self.threshold {
                            for &leak in &self.leak {
                                for &interval_fraction in &self.interval_fraction {
                                    for &epochs in &self.epochs {
                                        out.push(GridConfig {
                                            id: out.len(),
                                            forward: params(fm, fp),
                                            recurrent: *rec,
                                            n_r,
                                            threshold,
                                            leak,
                                            interval_fraction,
                                            epochs,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMetric {
    #[default]
    GMean,
    F1,
    Auc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridOptions {
    pub folds: usize,
    pub evaluation: EvaluationOptions,
    /// Worker threads; 0 lets the pool decide.
    pub workers: usize,
    pub seed: u64,
    pub rank_by: RankMetric,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            folds: 5,
            evaluation: EvaluationOptions::default(),
            workers: 0,
            seed: 0,
            rank_by: RankMetric::GMean,
        }
    }
}

/// Result of one configuration on one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    /// `None` when the test block lacks one of the classes.
    pub g_mean: Option<f64>,
    pub f1: Option<f64>,
    pub auc: Option<f64>,
    pub mean_macs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub config: GridConfig,
    pub folds: Vec<FoldOutcome>,
    pub mean_g_mean: Option<f64>,
    pub mean_f1: Option<f64>,
    pub mean_auc: Option<f64>,
    pub mean_macs: f64,
    pub rank_g_mean: usize,
    pub rank_f1: usize,
    pub rank_auc: usize,
}

impl GridRow {
    pub fn metric(&self, m: RankMetric) -> Option<f64> {
        match m {
            RankMetric::GMean => self.mean_g_mean,
            RankMetric::F1 => self.mean_f1,
            RankMetric::Auc => self.mean_auc,
        }
    }

    pub fn rank(&self, m: RankMetric) -> usize {
        match m {
            RankMetric::GMean => self.rank_g_mean,
            RankMetric::F1 => self.rank_f1,
            RankMetric::Auc => self.rank_auc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResults {
    pub rank_by: RankMetric,
    pub fold_count: usize,
    /// Ordered by `rank_by`, best first.
    pub rows: Vec<GridRow>,
}

/// Smallest interval containing all values.
pub fn value_domain(values: &[f64]) -> Option<Interval> {
    min_max(values).map(|(lo, hi)| Interval::new(lo, hi))
}

/// Builds the network for `config` over the given training domain.
pub fn build_network(
    config: &GridConfig,
    domain: Interval,
    seed: u64,
) -> Result<Network, GridError> {
    let encoder = EncoderState::new(domain, config.interval_fraction, None)?;
    let net_config = NetworkConfig {
        n_r: config.n_r,
        recurrent: config.recurrent.is_some(),
        lif: LifParams {
            threshold: config.threshold,
            leak: config.leak,
            ..LifParams::default()
        },
        seed,
        ..NetworkConfig::default()
    };
    Ok(Network::build(net_config, encoder)?)
}

/// Trains on the fold's normal data, runs the test block and scores it.
pub fn run_fold(
    config: &GridConfig,
    train: &TimeSeries,
    test: &TimeSeries,
    fold: usize,
    seed: u64,
    evaluation: &EvaluationOptions,
) -> Result<(FoldOutcome, Option<MetricsReport>), GridError> {
    let domain = value_domain(train.values()).ok_or(GridError::EmptyTraining { fold })?;
    let mut net = build_network(config, domain, seed)?;
    train_values(&mut net, train.values(), config.forward, config.recurrent, config.epochs)?;
    let signal = net.run_series(test, config.n_r as f64)?;
    let (mean_macs, _) = vacuum_macs_for_run(&signal.counts, config.n_r as u64, net.is_recurrent())?;
    let labels = test.labels_or_normal();
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        let outcome = FoldOutcome { fold, g_mean: None, f1: None, auc: None, mean_macs };
        return Ok((outcome, None));
    }
    let report = evaluate_run(&signal.as_scores(), &labels, evaluation)?;
    let outcome = FoldOutcome {
        fold,
        g_mean: Some(report.g_mean.value),
        f1: Some(report.f1.value),
        auc: report.auc.map(|a| a.value),
        mean_macs,
    };
    Ok((outcome, Some(report)))
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Metric descending (missing last), then mean MACs ascending, then id.
fn compare(a: &GridRow, b: &GridRow, m: RankMetric) -> Ordering {
    let by_metric = match (a.metric(m), b.metric(m)) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    };
    by_metric
        .then(a.mean_macs.total_cmp(&b.mean_macs))
        .then(a.config.id.cmp(&b.config.id))
}

/// Fills the per-metric rank columns and orders rows by `rank_by`.
pub fn rank_rows(rows: &mut [GridRow], rank_by: RankMetric) {
    for m in [RankMetric::GMean, RankMetric::F1, RankMetric::Auc] {
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by(|&i, &j| compare(&rows[i], &rows[j], m));
        for (rank, i) in order.into_iter().enumerate() {
            match m {
                RankMetric::GMean => rows[i].rank_g_mean = rank + 1,
                RankMetric::F1 => rows[i].rank_f1 = rank + 1,
                RankMetric::Auc => rows[i].rank_auc = rank + 1,
            }
        }
    }
    rows.sort_by_key(|r| r.rank(rank_by));
}

/// Evaluates every configuration on every fold.
///
/// Each (configuration, fold) task owns its network and uses the same seed,
/// so results do not depend on the number of workers.
pub fn grid_search(
    series: &TimeSeries,
    spec: &GridSpec,
    opts: &GridOptions,
) -> Result<GridResults, GridError> {
    let configs = spec.expand();
    if configs.is_empty() {
        return Err(GridError::EmptyGrid);
    }
    let folds = expanding_folds(series, opts.folds)?;
    let views: Vec<(TimeSeries, TimeSeries)> = folds
        .iter()
        .map(|f: &FoldSplit| (f.train_view(series), f.test_view(series)))
        .collect();
    let tasks: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|c| (0..views.len()).map(move |f| (c, f)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| GridError::Pool(e.to_string()))?;
    let outcomes: Vec<FoldOutcome> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(c, f)| {
                let (train, test) = &views[f];
                run_fold(&configs[c], train, test, f, opts.seed, &opts.evaluation).map(|r| r.0)
            })
            .collect::<Result<_, _>>()
    })?;

    let k = views.len();
    let mut rows: Vec<GridRow> = configs
        .into_iter()
        .zip(outcomes.chunks(k))
        .map(|(config, folds)| GridRow {
            mean_g_mean: mean_of(folds.iter().map(|f| f.g_mean)),
            mean_f1: mean_of(folds.iter().map(|f| f.f1)),
            mean_auc: mean_of(folds.iter().map(|f| f.auc)),
            mean_macs: folds.iter().map(|f| f.mean_macs).sum::<f64>() / k as f64,
            folds: folds.to_vec(),
            config,
            rank_g_mean: 0,
            rank_f1: 0,
            rank_auc: 0,
        })
        .collect();
    rank_rows(&mut rows, opts.rank_by);
    Ok(GridResults {
        rank_by: opts.rank_by,
        fold_count: k,
        rows,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl GridResults {
    pub fn best(&self) -> Option<&GridRow> {
        self.rows.first()
    }

    /// One row per configuration: parameters, per-fold metrics, means, ranks.
    /// Empty fields mark metrics that are undefined.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = [
            "rank", "id", "forward_a_minus", "forward_a_plus", "recurrent",
            "recurrent_a_minus", "recurrent_a_plus", "n_r", "threshold", "g_l",
            "interval_fraction", "epochs",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for f in 0..self.fold_count {
            for m in ["g_mean", "f1", "auc", "macs"] {
                header.push(format!("fold{f}_{m}"));
            }
        }
        header.extend(
            ["mean_g_mean", "mean_f1", "mean_auc", "mean_macs", "rank_g_mean", "rank_f1", "rank_auc"]
                .iter()
                .map(|s| s.to_string()),
        );
        w.write_record(&header)?;
        for row in &self.rows {
            let c = &row.config;
            let mut rec = vec![
                row.rank(self.rank_by).to_string(),
                c.id.to_string(),
                c.forward.a_minus.to_string(),
                c.forward.a_plus.to_string(),
                c.recurrent.is_some().to_string(),
                opt(c.recurrent.map(|p| p.a_minus)),
                opt(c.recurrent.map(|p| p.a_plus)),
                c.n_r.to_string(),
                c.threshold.to_string(),
                c.leak.to_string(),
                c.interval_fraction.to_string(),
                c.epochs.to_string(),
            ];
            for f in &row.folds {
                rec.extend([opt(f.g_mean), opt(f.f1), opt(f.auc), f.mean_macs.to_string()]);
            }
            rec.extend([
                opt(row.mean_g_mean),
                opt(row.mean_f1),
                opt(row.mean_auc),
                row.mean_macs.to_string(),
                row.rank_g_mean.to_string(),
                row.rank_f1.to_string(),
                row.rank_auc.to_string(),
            ]);
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: usize, g: Option<f64>, macs: f64) -> GridRow {
        GridRow {
            config: GridConfig {
                id,
                forward: StdpParams::default(),
                recurrent: None,
                n_r: 10,
                threshold: -55.0,
                leak: leak_for_tau(100.0),
                interval_fraction: 0.1,
                epochs: 1,
            },
            folds: vec![],
            mean_g_mean: g,
            mean_f1: g,
            mean_auc: g,
            mean_macs: macs,
            rank_g_mean: 0,
            rank_f1: 0,
            rank_auc: 0,
        }
    }

    #[test]
    fn default_grid_size() {
        // 4 forward pairs x (1 + 4 recurrent pairs) x 2 x 3 x 3 x 2 x 5
        assert_eq!(GridSpec::default().expand().len(), 4 * 5 * 2 * 3 * 3 * 2 * 5);
        let ids: Vec<usize> = GridSpec::default().expand().iter().map(|c| c.id).collect();
        assert!(ids.iter().enumerate().all(|(i, &id)| i == id));
    }

    #[test]
    fn non_recurrent_only_grid() {
        let spec = GridSpec { recurrence: vec![false], ..Default::default() };
        assert!(spec.expand().iter().all(|c| c.recurrent.is_none()));
        let spec = GridSpec { n_r: vec![], ..Default::default() };
        assert!(spec.expand().is_empty());
    }

    #[test]
    fn ties_go_to_fewer_macs() {
        let mut rows = vec![row(0, Some(0.9), 5000.0), row(1, Some(0.9), 2000.0)];
        rank_rows(&mut rows, RankMetric::GMean);
        assert_eq!(rows[0].config.id, 1);
        assert_eq!((rows[0].rank_g_mean, rows[1].rank_g_mean), (1, 2));
    }

    #[test]
    fn ranking_order() {
        let mut rows = vec![
            row(0, None, 100.0),
            row(1, Some(0.5), 3000.0),
            row(2, Some(0.7), 9000.0),
            row(3, Some(0.5), 3000.0),
        ];
        rank_rows(&mut rows, RankMetric::Auc);
        let ids: Vec<usize> = rows.iter().map(|r| r.config.id).collect();
        assert_eq!(ids, vec![2, 1, 3, 0]);
    }

    #[test]
    fn fold_means_skip_undefined() {
        assert_eq!(mean_of([Some(1.0), None, Some(0.5)].into_iter()), Some(0.75));
        assert_eq!(mean_of([None, None].into_iter()), None);
    }

    #[test]
    fn single_config_table() {
        let values: Vec<f64> = (0..300).map(|i| (i as f64 * 0.2).sin()).collect();
        let labels: Vec<bool> = (0..300).map(|i| (270..285).contains(&i)).collect();
        let series = TimeSeries::from_values(values, 1.0).unwrap().with_labels(labels).unwrap();
        let spec = GridSpec {
            forward_a_minus: vec![-0.1],
            forward_a_plus: vec![-0.1],
            recurrence: vec![false],
            n_r: vec![20],
            threshold: vec![-55.0],
            leak: vec![leak_for_tau(100.0)],
            interval_fraction: vec![0.1],
            epochs: vec![1],
            ..Default::default()
        };
        let opts = GridOptions { workers: 2, seed: 7, ..Default::default() };
        let r = grid_search(&series, &spec, &opts).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.rows[0].folds.len(), 5);
        assert_eq!(r.rows[0].mean_macs, 40.0);
        // only the last test block contains anomalies
        assert!(r.rows[0].folds[..4].iter().all(|f| f.g_mean.is_none()));
        assert!(r.rows[0].folds[4].g_mean.is_some());
        assert_eq!(grid_search(&series, &spec, &opts).unwrap(), r);
    }
}
