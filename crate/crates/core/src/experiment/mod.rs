//! Config-driven experiment harness: single runs that leave a full artifact
//! trail on disk, plus the three standard tables (missing-rate sweep,
//! momentum sweep, loss ablation) as CSV.
//!
//! Sweeps vary exactly one factor and derive each row's training seed as
//! `base seed + row index`, so every table is reproducible from its base
//! config alone. Per-row failures become row-level error markers; the table
//! is always emitted in full.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    generate_mask, load_views, normalize, read_mask_csv, synth_two_view, write_labels,
    write_view_csv, MaskSpec, MultiViewDataset,
};
use crate::error::{Error, Result};
use crate::evaluate::{build_common_representation, kmeans, pca_2d, score, MetricsReport};
use crate::networks::{init_model, save_checkpoint, ModelArch, ModelBundle};
use crate::trainer::{fit_with, History, HistoryWriter, TrainConfig};

/// Momentum grid used when the caller does not supply values.
pub const DEFAULT_MOMENTUM_GRID: [f64; 7] = [0.0, 0.5, 0.9, 0.99, 0.996, 0.999, 1.0];

/// Missing-rate grid: 0.0 through 0.9 in steps of 0.1.
pub fn missing_rate_grid() -> Vec<f64> {
    (0..10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Synthetic,
    Files,
}

/// Where the two views come from. Synthetic fields and file paths share one
/// struct so a config file stays a flat `[data]` section; `source` selects
/// which half is read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: SourceKind,
    /// Synthetic: sample count, cluster count, per-view dims, feature noise.
    pub n: usize,
    pub k: usize,
    pub d1: usize,
    pub d2: usize,
    pub noise_sd: f64,
    /// Seed for data generation, independent of the training seed so sweeps
    /// rerun on identical data.
    pub seed: u64,
    /// Files: exactly two feature CSVs, optional label file, optional
    /// explicit mask CSV (otherwise one is generated from `[mask]`).
    pub views: Vec<PathBuf>,
    pub labels: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    /// Min-max scale each feature column to [0, 1] after loading, keeping
    /// reconstruction magnitudes comparable across views. On by default;
    /// turn off for data that is already scaled.
    pub normalize: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: SourceKind::Synthetic,
            n: 600,
            k: 3,
            d1: 20,
            d2: 15,
            noise_sd: 0.3,
            seed: 0,
            views: Vec::new(),
            labels: None,
            mask: None,
            normalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskConfig {
    /// Fraction of rows observing only one view.
    pub missing_rate: f64,
    pub seed: u64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig {
            missing_rate: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Optional subdirectory under `dir`; sweeps set it per row.
    pub tag: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("runs"),
            tag: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub mask: MaskConfig,
    pub model: ModelArch,
    pub train: TrainConfig,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: 0,
            col: 0,
            msg: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match self.data.source {
            SourceKind::Synthetic => {
                if self.data.n == 0 || self.data.k < 2 || self.data.d1 == 0 || self.data.d2 == 0 {
                    return Err(Error::Config(
                        "synthetic data needs n > 0, k >= 2 and positive view dims".into(),
                    ));
                }
            }
            SourceKind::Files => {
                if self.data.views.len() != 2 {
                    return Err(Error::Config(format!(
                        "file source needs exactly 2 view paths, got {}",
                        self.data.views.len()
                    )));
                }
                for p in self
                    .data
                    .views
                    .iter()
                    .chain(self.data.labels.iter())
                    .chain(self.data.mask.iter())
                {
                    if !p.exists() {
                        return Err(Error::Config(format!("missing input: {}", p.display())));
                    }
                }
            }
        }
        MaskSpec::new(self.mask.missing_rate, self.mask.seed)?;
        self.train.validate()
    }

    /// Directory all artifacts of this run land in.
    pub fn out_dir(&self) -> PathBuf {
        if self.output.tag.is_empty() {
            self.output.dir.clone()
        } else {
            self.output.dir.join(&self.output.tag)
        }
    }
}

/// Builds the dataset a config describes, mask applied and (optionally)
/// feature columns scaled.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<MultiViewDataset> {
    let ds = match cfg.data.source {
        SourceKind::Synthetic => synth_two_view(
            cfg.data.n,
            cfg.data.k,
            cfg.data.d1,
            cfg.data.d2,
            cfg.data.noise_sd,
            cfg.data.seed,
        )?,
        SourceKind::Files => load_views(&cfg.data.views, cfg.data.labels.clone())?,
    };
    let mask = match (&cfg.data.source, &cfg.data.mask) {
        (SourceKind::Files, Some(path)) => read_mask_csv(path)?,
        _ => generate_mask(
            ds.n(),
            2,
            &MaskSpec::new(cfg.mask.missing_rate, cfg.mask.seed)?,
        )?,
    };
    let ds = ds.with_mask(mask)?;
    Ok(if cfg.data.normalize {
        normalize(&ds)
    } else {
        ds
    })
}

/// Everything a single run leaves behind, plus the trained model for
/// follow-up checks.
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub metrics: Option<MetricsReport>,
    pub history: History,
    pub bundle: ModelBundle,
}

/// Trains one model per the config and writes the artifact set:
/// `history.csv`, `checkpoint.bin`, predicted `labels.txt`, 2-D projections
/// `embedding_initial.csv` / `embedding_final.csv`, and `metrics.json` when
/// ground-truth labels exist. Rerunning the same config reproduces every
/// file byte for byte.
pub fn run(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let out = cfg.out_dir();
    fs::create_dir_all(&out).map_err(|e| Error::io(out.display().to_string(), e))?;
    let ds = load_dataset(cfg)?;

    // Before/after projections share the run seed, so "initial" is exactly
    // the model fit() starts from.
    let fresh = init_model(&ds.view_dims(), &cfg.model, cfg.train.k, cfg.train.seed)?;
    let z0 = build_common_representation(&fresh, &ds)?;
    write_view_csv(&out.join("embedding_initial.csv"), &pca_2d(&z0)?)?;

    log::info!(
        "training: {} rows, missing rate {}, {} epochs",
        ds.n(),
        cfg.mask.missing_rate,
        cfg.train.total_epochs
    );
    let mut writer = HistoryWriter::create(&out.join("history.csv"))?;
    let (bundle, history) = fit_with(&ds, &cfg.model, &cfg.train, |rec| writer.append(rec))?;

    let z = build_common_representation(&bundle, &ds)?;
    let clusters = kmeans(&z, cfg.train.k, cfg.train.seed)?;
    write_labels(&out.join("labels.txt"), &clusters.labels)?;
    write_view_csv(&out.join("embedding_final.csv"), &pca_2d(&z)?)?;
    save_checkpoint(&bundle, &out.join("checkpoint.bin"))?;

    let metrics = match ds.labels() {
        Some(truth) => {
            let report = score(&clusters.labels, truth)?;
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| Error::Contract(format!("metrics serialization: {e}")))?;
            let path = out.join("metrics.json");
            fs::write(&path, json + "\n").map_err(|e| Error::io(path.display().to_string(), e))?;
            log::info!(
                "scores: acc {:.4}, nmi {:.4}, ari {:.4}",
                report.acc,
                report.nmi,
                report.ari
            );
            Some(report)
        }
        None => None,
    };

    Ok(RunArtifacts {
        out_dir: out,
        metrics,
        history,
        bundle,
    })
}

/// One row of a single-factor sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub factor: f64,
    pub metrics: Option<MetricsReport>,
    pub error: Option<String>,
}

/// One row of the loss-ablation table.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    /// 1-based row number matching the published on/off grid.
    pub index: usize,
    /// Active terms as (rec, cml, pre, ccl).
    pub flags: (bool, bool, bool, bool),
    pub metrics: Option<MetricsReport>,
    pub error: Option<String>,
}

/// The 11-row on/off grid over (rec, cml, pre, ccl): each term alone, then
/// reconstruction paired with every subset of the other three.
pub const ABLATION_GRID: [(bool, bool, bool, bool); 11] = [
    (true, false, false, false),
    (false, true, false, false),
    (false, false, true, false),
    (false, false, false, true),
    (true, true, false, false),
    (true, false, true, false),
    (true, false, false, true),
    (true, true, true, false),
    (true, true, false, true),
    (true, false, true, true),
    (true, true, true, true),
];

/// Run tag (output subdirectory) for a missing-rate sweep row.
pub fn missing_run_tag(rate: f64) -> String {
    format!("eta_{rate:.1}")
}

/// Run tag for a momentum sweep row.
pub fn momentum_run_tag(m: f64) -> String {
    format!("m_{m}")
}

/// Run tag for an ablation row (1-based).
pub fn ablation_run_tag(index: usize) -> String {
    format!("ablate_{index:02}")
}

fn derived(base: &ExperimentConfig, tag: String, index: usize) -> ExperimentConfig {
    let mut cfg = base.clone();
    cfg.output.dir = base.out_dir();
    cfg.output.tag = tag;
    cfg.train.seed = base.train.seed + index as u64;
    cfg
}

fn run_row(cfg: &ExperimentConfig) -> (Option<MetricsReport>, Option<String>) {
    match run(cfg) {
        Ok(art) => match art.metrics {
            Some(m) => (Some(m), None),
            None => (None, Some("run produced no metrics (no labels)".into())),
        },
        Err(e) => (None, Some(e.to_string())),
    }
}

/// Runs each config, preserving order; `jobs > 1` fans rows out across a
/// thread pool when the `parallel` feature is on, and is ignored otherwise.
fn run_rows(
    configs: &[ExperimentConfig],
    jobs: usize,
) -> Vec<(Option<MetricsReport>, Option<String>)> {
    #[cfg(feature = "parallel")]
    {
        if jobs > 1 {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .expect("thread pool construction cannot fail with these settings");
            return pool.install(|| configs.par_iter().map(run_row).collect());
        }
    }
    let _ = jobs;
    configs.iter().map(run_row).collect()
}

/// CSV cells must stay un-quoted, so error text drops its separators.
fn sanitize(msg: &str) -> String {
    msg.replace([',', '\n', '\r'], ";")
}

fn metric_cells(m: &Option<MetricsReport>) -> String {
    match m {
        Some(m) => format!("{},{},{}", m.acc, m.nmi, m.ari),
        None => ",,".into(),
    }
}

/// Missing-rate sweep over 0.0..=0.9: ten single runs differing only in
/// mask rate (and derived seed), written to `sweep_missing.csv` under the
/// base output directory.
pub fn sweep_missing(base: &ExperimentConfig, jobs: usize) -> Result<Vec<SweepRow>> {
    base.validate()?;
    let rates = missing_rate_grid();
    let configs: Vec<ExperimentConfig> = rates
        .iter()
        .enumerate()
        .map(|(i, &rate)| {
            let mut cfg = derived(base, missing_run_tag(rate), i);
            cfg.mask.missing_rate = rate;
            cfg
        })
        .collect();
    let results = run_rows(&configs, jobs);
    let rows: Vec<SweepRow> = rates
        .iter()
        .zip(results)
        .map(|(&factor, (metrics, error))| SweepRow {
            factor,
            metrics,
            error,
        })
        .collect();
    write_sweep_csv(&base.out_dir().join("sweep_missing.csv"), "eta", &rows)?;
    Ok(rows)
}

/// Momentum sweep; `values` defaults to [`DEFAULT_MOMENTUM_GRID`]. Unlike
/// the missing-rate sweep, every row keeps the base training seed: the rows
/// then share init and batch order, so the comparison is paired and the
/// momentum coefficient is the only thing that varies. The `m = 1` row
/// additionally verifies that its run's target networks never moved during
/// the joint phase (they must equal those of a pretrain-only run); a
/// violation is recorded as that row's error.
pub fn sweep_momentum(
    base: &ExperimentConfig,
    values: Option<&[f64]>,
    jobs: usize,
) -> Result<Vec<SweepRow>> {
    base.validate()?;
    let values: Vec<f64> = values.unwrap_or(&DEFAULT_MOMENTUM_GRID).to_vec();
    if values.iter().any(|m| !(0.0..=1.0).contains(m)) {
        return Err(Error::Config("momentum values must lie in [0, 1]".into()));
    }
    let configs: Vec<ExperimentConfig> = values
        .iter()
        .map(|&m| {
            let mut cfg = derived(base, momentum_run_tag(m), 0);
            cfg.train.weights.momentum = m;
            cfg
        })
        .collect();
    let results = run_rows(&configs, jobs);
    let mut rows: Vec<SweepRow> = values
        .iter()
        .zip(results)
        .map(|(&factor, (metrics, error))| SweepRow {
            factor,
            metrics,
            error,
        })
        .collect();
    for (row, cfg) in rows.iter_mut().zip(&configs) {
        if row.factor == 1.0 && row.error.is_none() {
            if let Err(e) = verify_frozen_targets(cfg) {
                row.error = Some(e.to_string());
                row.metrics = None;
            }
        }
    }
    write_sweep_csv(&base.out_dir().join("sweep_momentum.csv"), "m", &rows)?;
    Ok(rows)
}

/// With momentum 1 the joint phase must leave target networks exactly where
/// the post-pretrain sync put them. Training is deterministic, so a
/// pretrain-only rerun reproduces that sync point for comparison.
fn verify_frozen_targets(cfg: &ExperimentConfig) -> Result<()> {
    let ds = load_dataset(cfg)?;
    let full = crate::trainer::fit(&ds, &cfg.model, &cfg.train)?;
    let mut probe_cfg = cfg.train.clone();
    probe_cfg.total_epochs = probe_cfg.pretrain_epochs;
    let probe = crate::trainer::fit(&ds, &cfg.model, &probe_cfg)?;
    let moved = full
        .0
        .target_params()
        .iter()
        .zip(probe.0.target_params())
        .any(|(a, b)| a.data() != b.data());
    if moved {
        return Err(Error::Contract(
            "target parameters moved during the joint phase despite momentum 1".into(),
        ));
    }
    Ok(())
}

/// The 11-row loss ablation. Weighted terms are disabled by zeroing their
/// weight (rec, cml); the two λ-shared terms are structurally skipped.
/// Disabling reconstruction also skips pretraining, so those rows genuinely
/// train without any reconstruction signal.
pub fn ablation(base: &ExperimentConfig, jobs: usize) -> Result<Vec<AblationRow>> {
    base.validate()?;
    let configs: Vec<ExperimentConfig> = ABLATION_GRID
        .iter()
        .enumerate()
        .map(|(i, &(rec, cml, pre, ccl))| {
            let mut cfg = derived(base, ablation_run_tag(i + 1), i);
            if !rec {
                cfg.train.weights.alpha = 0.0;
                cfg.train.pretrain_epochs = 0;
            }
            if !cml {
                cfg.train.weights.beta = 0.0;
            }
            cfg.train.enable_pre = pre;
            cfg.train.enable_ccl = ccl;
            cfg
        })
        .collect();
    let results = run_rows(&configs, jobs);
    let rows: Vec<AblationRow> = ABLATION_GRID
        .iter()
        .enumerate()
        .zip(results)
        .map(|((i, &flags), (metrics, error))| AblationRow {
            index: i + 1,
            flags,
            metrics,
            error,
        })
        .collect();
    write_ablation_csv(&base.out_dir().join("ablation.csv"), &rows)?;
    Ok(rows)
}

fn write_sweep_csv(path: &Path, factor_name: &str, rows: &[SweepRow]) -> Result<()> {
    let mut text = format!("{factor_name},acc,nmi,ari,error\n");
    for row in rows {
        let err = row.error.as_deref().map(sanitize).unwrap_or_default();
        text.push_str(&format!(
            "{},{},{err}\n",
            row.factor,
            metric_cells(&row.metrics)
        ));
    }
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_ablation_csv(path: &Path, rows: &[AblationRow]) -> Result<()> {
    let mut text = String::from("row,rec,cml,pre,ccl,acc,nmi,ari,error\n");
    for row in rows {
        let (rec, cml, pre, ccl) = row.flags;
        let err = row.error.as_deref().map(sanitize).unwrap_or_default();
        text.push_str(&format!(
            "{},{},{},{},{},{},{err}\n",
            row.index,
            rec as u8,
            cml as u8,
            pre as u8,
            ccl as u8,
            metric_cells(&row.metrics)
        ));
    }
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn parse_metric_cells(
    cells: &[&str],
    path: &Path,
    line: usize,
) -> Result<(Option<MetricsReport>, Option<String>)> {
    let parse_err = |col: usize, msg: String| Error::Parse {
        path: path.display().to_string(),
        line,
        col,
        msg,
    };
    let (acc, nmi, ari) = (cells[0].trim(), cells[1].trim(), cells[2].trim());
    let error = match cells[3].trim() {
        "" => None,
        e => Some(e.to_string()),
    };
    let metrics = if acc.is_empty() && nmi.is_empty() && ari.is_empty() {
        None
    } else {
        let mut vals = [0.0f64; 3];
        for (j, raw) in [acc, nmi, ari].into_iter().enumerate() {
            vals[j] = raw
                .parse()
                .map_err(|e| parse_err(j + 1, format!("bad metric: {e}")))?;
        }
        Some(MetricsReport {
            acc: vals[0],
            nmi: vals[1],
            ari: vals[2],
        })
    };
    Ok((metrics, error))
}

/// Loads a CSV written by [`sweep_missing`] or [`sweep_momentum`].
pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.display().to_string(),
        line,
        col: 1,
        msg,
    };
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 5 {
            return Err(parse_err(
                idx + 1,
                format!("expected 5 cells, got {}", cells.len()),
            ));
        }
        let factor: f64 = cells[0]
            .trim()
            .parse()
            .map_err(|e| parse_err(idx + 1, format!("bad factor: {e}")))?;
        let (metrics, error) = parse_metric_cells(&cells[1..], path, idx + 1)?;
        rows.push(SweepRow {
            factor,
            metrics,
            error,
        });
    }
    Ok(rows)
}

/// Loads a CSV written by [`ablation`].
pub fn read_ablation_csv(path: &Path) -> Result<Vec<AblationRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.display().to_string(),
        line,
        col: 1,
        msg,
    };
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 9 {
            return Err(parse_err(
                idx + 1,
                format!("expected 9 cells, got {}", cells.len()),
            ));
        }
        let index: usize = cells[0]
            .trim()
            .parse()
            .map_err(|e| parse_err(idx + 1, format!("bad row index: {e}")))?;
        let mut flags = [false; 4];
        for (j, slot) in flags.iter_mut().enumerate() {
            *slot = match cells[j + 1].trim() {
                "0" => false,
                "1" => true,
                other => return Err(parse_err(idx + 1, format!("bad flag: {other:?}"))),
            };
        }
        let (metrics, error) = parse_metric_cells(&cells[5..], path, idx + 1)?;
        rows.push(AblationRow {
            index,
            flags: (flags[0], flags[1], flags[2], flags[3]),
            metrics,
            error,
        });
    }
    Ok(rows)
}
