use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use vacuum_spiker::checkpoint::{load_checkpoint, save_checkpoint};
use vacuum_spiker::detector::Detection;
use vacuum_spiker::encoder::{EncoderError, EncoderState, Interval, DEFAULT_MAX_NEURONS};
use vacuum_spiker::energy::{energy_report, vacuum_macs_for_run, ArchitectureEntry};
use vacuum_spiker::grid::{grid_search, value_domain, GridOptions};
use vacuum_spiker::metrics::{evaluate_run, MetricsReport};
use vacuum_spiker::network::{Network, NetworkConfig};
use vacuum_spiker::stdp::{train_values, TrainingReport};
use vacuum_spiker::timeseries::{
    load_csv, load_label_windows, resample_uniform, DataError, LabelWindow, TimeSeries,
};

use crate::config::RunConfig;
use crate::CliError;

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Globals {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

fn out_dir(cfg: &RunConfig, g: &Globals) -> Result<PathBuf, CliError> {
    let dir = g
        .out_dir
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    writeln!(w).map_err(io)?;
    w.flush().map_err(io)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn label_windows(cfg: &RunConfig) -> Result<Option<Vec<LabelWindow>>, CliError> {
    match &cfg.data.labels {
        Some(path) => Ok(Some(load_label_windows(path, cfg.data.dataset.as_deref())?)),
        None => Ok(None),
    }
}

/// Loads the configured series; `None` when the file holds no records.
fn load_series(cfg: &RunConfig) -> Result<Option<TimeSeries>, CliError> {
    let mut series = match load_csv(cfg.series_path()?, &cfg.data.schema) {
        Ok(s) => s,
        Err(DataError::EmptySeries) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    if cfg.data.resample {
        series = resample_uniform(&series, &cfg.data.resample_options)?;
    }
    if let Some(windows) = label_windows(cfg)? {
        series.apply_windows(&windows);
    }
    Ok(Some(series))
}

/// Index where detection starts; training uses the records before it.
fn split_point(cfg: &RunConfig, n: usize) -> Result<usize, CliError> {
    match cfg.data.train_fraction {
        None => Ok(n),
        Some(f) if f > 0.0 && f <= 1.0 => Ok(((f * n as f64).round() as usize).min(n)),
        Some(f) => Err(CliError::Config(format!("train_fraction {f} outside (0, 1]"))),
    }
}

fn interval(pair: [f64; 2]) -> Interval {
    Interval::new(pair[0], pair[1])
}

fn build_encoder(cfg: &RunConfig, train: &TimeSeries) -> Result<EncoderState, CliError> {
    let e = &cfg.encoder;
    let domain = match e.domain {
        Some(d) => interval(d),
        None => value_domain(train.values())
            .ok_or_else(|| CliError::Data("no normal records to train on".into()))?,
    };
    let length = match (e.interval_fraction, e.interval_length) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "set only one of `encoder.interval_fraction` and `encoder.interval_length`".into(),
            ))
        }
        (None, Some(len)) => len,
        (fraction, None) => {
            let f = fraction.unwrap_or(0.1);
            if !(f > 0.0 && f <= 1.0) {
                return Err(EncoderError::BadFraction(f).into());
            }
            f * domain.width()
        }
    };
    let cap = e.max_neurons.unwrap_or(DEFAULT_MAX_NEURONS);
    Ok(EncoderState::with_cap(domain, length, e.clamp.map(interval), cap)?)
}

fn network_config(cfg: &RunConfig, seed: u64) -> NetworkConfig {
    let n = &cfg.network;
    NetworkConfig {
        n_r: n.n_r,
        recurrent: n.recurrent,
        forward_init_mean: n.forward_init_mean,
        forward_init_std: n.forward_init_std,
        recurrent_init_scale: n.recurrent_init_scale,
        lif: n.lif.clone(),
        seed,
        weight_bounds: n.weight_bounds.map(|[lo, hi]| (lo, hi)),
    }
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    seed: u64,
    training_records: usize,
    dropped_anomalies: usize,
    domain: Interval,
    clamp: Interval,
    interval_length: f64,
    #[serde(flatten)]
    report: TrainingReport,
}

pub fn train(cfg: &RunConfig, g: &Globals) -> Result<(), CliError> {
    let seed = cfg.seed(g.seed)?;
    let series =
        load_series(cfg)?.ok_or_else(|| CliError::Data("series has no records".into()))?;
    let end = split_point(cfg, series.len())?;
    let normal: Vec<usize> = (0..end).filter(|&i| !series.is_anomalous(i)).collect();
    let train = series.select(&normal);
    let encoder = build_encoder(cfg, &train)?;
    let domain = encoder.domain();
    let (clamp, interval_length) = (encoder.config().clamp, encoder.interval_length());
    let mut net = Network::build(network_config(cfg, seed), encoder)?;
    let report = train_values(
        &mut net,
        train.values(),
        cfg.stdp.forward,
        cfg.stdp.recurrent,
        cfg.train.epochs,
    )?;

    let dir = out_dir(cfg, g)?;
    let cp = dir.join("checkpoint.json");
    save_checkpoint(&net, &cp).map_err(|e| CliError::Runtime(format!("{}: {e}", cp.display())))?;
    let summary = TrainSummary {
        seed,
        training_records: train.len(),
        dropped_anomalies: end - normal.len(),
        domain,
        clamp,
        interval_length,
        report,
    };
    write_json(&dir.join("train_summary.json"), &summary)?;
    println!(
        "trained on {} records, {} epoch(s); forward {:?}{}; checkpoint {}",
        summary.training_records,
        summary.report.epochs,
        summary.report.forward_behaviour,
        summary
            .report
            .recurrent_behaviour
            .map(|b| format!(", recurrent {b:?}"))
            .unwrap_or_default(),
        cp.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct MacReport {
    n_r: usize,
    recurrent: bool,
    steps: usize,
    /// Absent for an empty run.
    mean_macs_per_step: Option<f64>,
    total_macs: u64,
}

fn checkpoint_path(cfg: &RunConfig, g: &Globals, flag: Option<&Path>) -> PathBuf {
    match flag {
        Some(p) => p.to_path_buf(),
        None => g
            .out_dir
            .clone()
            .or_else(|| cfg.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."))
            .join("checkpoint.json"),
    }
}

/// Runs the checkpointed network over the detection part of the series.
fn run_detection(
    cfg: &RunConfig,
    g: &Globals,
    checkpoint: Option<&Path>,
) -> Result<(Detection, MacReport, Option<TimeSeries>), CliError> {
    let path = checkpoint_path(cfg, g, checkpoint);
    let mut net = load_checkpoint(&path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let part = match load_series(cfg)? {
        Some(s) => {
            let start = split_point(cfg, s.len())?;
            Some(s.slice(start..s.len())).filter(|p| !p.is_empty())
        }
        None => None,
    };
    let (timestamps, counts) = match &part {
        Some(p) => {
            let mut counts = Vec::with_capacity(p.len());
            for &v in p.values() {
                counts.push(net.infer_step(v, cfg.detector.threshold)?.spike_count as u32);
            }
            (p.timestamps().to_vec(), counts)
        }
        None => (Vec::new(), Vec::new()),
    };
    let (mean, total) = if counts.is_empty() {
        (None, 0)
    } else {
        let (m, t) = vacuum_macs_for_run(&counts, net.n_r() as u64, net.is_recurrent())?;
        (Some(m), t)
    };
    let macs = MacReport {
        n_r: net.n_r(),
        recurrent: net.is_recurrent(),
        steps: counts.len(),
        mean_macs_per_step: mean,
        total_macs: total,
    };
    Ok((Detection::from_counts(timestamps, counts, &cfg.detector)?, macs, part))
}

pub fn detect(cfg: &RunConfig, g: &Globals, checkpoint: Option<&Path>) -> Result<(), CliError> {
    let (detection, macs, _) = run_detection(cfg, g, checkpoint)?;
    let dir = out_dir(cfg, g)?;
    let csv_path = dir.join("detections.csv");
    detection
        .write_csv(create(&csv_path)?)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", csv_path.display())))?;
    write_json(&dir.join("mac_report.json"), &macs)?;
    let alerts = detection.alerts.iter().filter(|&&a| a).count();
    match macs.mean_macs_per_step {
        Some(m) => println!(
            "{} records, {alerts} alerts; mean MACs per step {m:.4}, total {}",
            detection.len(),
            macs.total_macs
        ),
        None => println!("0 records"),
    }
    Ok(())
}

fn key(t: f64) -> u64 {
    t.to_bits()
}

/// Labels for the given timestamps, from the label windows or from the
/// series' own label column.
fn labels_for(cfg: &RunConfig, timestamps: &[f64]) -> Result<Vec<bool>, CliError> {
    if let Some(windows) = label_windows(cfg)? {
        return Ok(timestamps.iter().map(|&t| windows.iter().any(|w| w.contains(t))).collect());
    }
    if cfg.data.schema.label_column.is_none() {
        return Err(CliError::Config(
            "evaluation needs `data.labels` or `data.label_column`".into(),
        ));
    }
    let series = load_series(cfg)?.ok_or_else(|| CliError::Data("series has no records".into()))?;
    let by_time: HashMap<u64, bool> = series
        .timestamps()
        .iter()
        .enumerate()
        .map(|(i, &t)| (key(t), series.is_anomalous(i)))
        .collect();
    timestamps
        .iter()
        .map(|&t| {
            by_time
                .get(&key(t))
                .copied()
                .ok_or_else(|| CliError::Data(format!("no label for timestamp {t}")))
        })
        .collect()
}

pub fn evaluate(
    cfg: &RunConfig,
    g: &Globals,
    detections: Option<&Path>,
    checkpoint: Option<&Path>,
) -> Result<(), CliError> {
    let (timestamps, counts) = match detections {
        Some(path) => {
            let f = File::open(path)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            Detection::read_counts(BufReader::new(f))
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        }
        None => {
            let (d, _, _) = run_detection(cfg, g, checkpoint)?;
            (d.timestamps, d.raw_counts)
        }
    };
    if counts.is_empty() {
        return Err(CliError::Data("nothing to evaluate: detection is empty".into()));
    }
    let labels = labels_for(cfg, &timestamps)?;
    let scores: Vec<f64> = counts.iter().map(|&c| f64::from(c)).collect();
    let report: MetricsReport = evaluate_run(&scores, &labels, &cfg.evaluate)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let dir = out_dir(cfg, g)?;
    write_json(&dir.join("metrics.json"), &report)?;
    let auc = report.auc.map(|a| format!("{:.4}", a.value)).unwrap_or_else(|| "n/a".into());
    println!(
        "G-Mean {:.4}  F1 {:.4}  AUC {auc}",
        report.g_mean.value, report.f1.value
    );
    Ok(())
}

pub fn grid(cfg: &RunConfig, g: &Globals) -> Result<(), CliError> {
    let seed = cfg.seed(g.seed)?;
    let series =
        load_series(cfg)?.ok_or_else(|| CliError::Data("series has no records".into()))?;
    let opts = GridOptions {
        folds: cfg.grid.folds,
        evaluation: cfg.evaluate.clone(),
        workers: g.workers.unwrap_or(0),
        seed,
        rank_by: cfg.grid.rank_by,
    };
    let results = grid_search(&series, &cfg.grid.spec, &opts)?;
    let dir = out_dir(cfg, g)?;
    let path = dir.join("grid_results.csv");
    results
        .write_csv(create(&path)?)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    if let Some(best) = results.best() {
        let m = best.metric(results.rank_by).map(|v| format!("{v:.4}"));
        println!(
            "{} configurations; best id {} ({:?} {}, mean MACs {})",
            results.rows.len(),
            best.config.id,
            results.rank_by,
            m.unwrap_or_else(|| "n/a".into()),
            best.mean_macs
        );
    }
    Ok(())
}

pub fn energy(
    spec: &Path,
    joules_per_mac: Option<f64>,
    cfg: &RunConfig,
    g: &Globals,
) -> Result<(), CliError> {
    let text = fs::read_to_string(spec)
        .map_err(|e| CliError::Data(format!("{}: {e}", spec.display())))?;
    let entries: Vec<ArchitectureEntry> = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", spec.display())))?;
    let report = energy_report(&entries, joules_per_mac)?;
    for l in &report.layers {
        println!("{:<14} {}", l.layer, l.macs);
    }
    println!("{:<14} {}", "total", report.total_macs);
    let dir = out_dir(cfg, g)?;
    write_json(&dir.join("energy.json"), &report)
}
