//! Emulated pool-based active learning.
//!
//! One run seeds the labeled set with random sentences, then alternates
//! between training from scratch on the labeled set, scoring the unlabeled
//! pool and revealing gold labels for the top-ranked batch. Gold labels live
//! behind an [`Annotator`] that counts every read, so tests can assert that
//! nothing peeks at unrevealed sentences.
//!
//! Records are persisted as `<config_hash>/<run_seed>.json`. Wall-clock
//! timings go to a `<run_seed>.timing.json` sidecar, which keeps the main
//! record byte-identical across reruns.

use std::cell::Cell;
use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{synth_corpus, SynthSpec};
use crate::corpus::{parse_conll, ColumnMap, Corpus, CorpusError, Labeled, Observed, Scheme, TagSet};
use crate::metrics::{aggregate_runs, span_f1, F1Report, LearningCurve, MetricsError};
use crate::model::{ModelError, ModelSpec, TrainedModel};
use crate::neural::McConfig;
use crate::seed::{self, STREAM_ACQ_TRAIN, STREAM_QUERY, STREAM_SEEDING, STREAM_SPLIT, STREAM_SUCC_TRAIN};
use crate::strategies::{score_pool, select_batch, PoolState, Strategy, StrategyError};

/// Invalid configuration value, naming the offending field.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

fn config_err(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { field: field.to_string(), message: message.into() }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("data: {0}")]
    Corpus(#[from] CorpusError),
    #[error("iteration {iteration}: training the {role} model failed: {source}")]
    Model {
        iteration: usize,
        role: &'static str,
        #[source]
        source: ModelError,
    },
    #[error("query: {0}")]
    Strategy(#[from] StrategyError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl EngineError {
    /// Whether the failure stems from the input data rather than the run.
    pub fn is_data_error(&self) -> bool {
        matches!(self, EngineError::Corpus(_))
    }
}

fn default_columns() -> ColumnMap {
    ColumnMap::CONLL2003
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    Files {
        train: PathBuf,
        test: PathBuf,
        #[serde(default)]
        scheme: Scheme,
        #[serde(default = "default_columns")]
        columns: ColumnMap,
    },
    /// Generated corpus; the first `spec.size` sentences form the training
    /// pool, the next `test_size` the test set.
    Synthetic { spec: SynthSpec, test_size: usize },
}

fn default_fraction() -> f64 {
    0.02
}
fn default_iterations() -> usize {
    24
}
fn default_dev_fraction() -> f64 {
    0.25
}
fn default_repeats() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub acquisition: ModelSpec,
    /// Model evaluated on the growing labeled set; the acquisition model when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub successor: Option<ModelSpec>,
    pub strategy: Strategy,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default = "default_fraction")]
    pub seed_fraction: f64,
    #[serde(default = "default_fraction")]
    pub step_fraction: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_dev_fraction")]
    pub dev_fraction: f64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// The part of a configuration that determines results; hashed and stored
/// in every record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub data: DataSource,
    pub acquisition: ModelSpec,
    pub successor: ModelSpec,
    pub strategy: Strategy,
    pub mc: McConfig,
    pub seed_fraction: f64,
    pub step_fraction: f64,
    pub iterations: usize,
    pub dev_fraction: f64,
}

impl ExperimentConfig {
    /// A configuration with protocol defaults.
    pub fn new(data: DataSource, acquisition: ModelSpec, strategy: Strategy) -> Self {
        ExperimentConfig {
            data,
            acquisition,
            successor: None,
            strategy,
            mc: McConfig::default(),
            seed_fraction: default_fraction(),
            step_fraction: default_fraction(),
            iterations: default_iterations(),
            dev_fraction: default_dev_fraction(),
            repeats: default_repeats(),
            base_seed: 0,
            output_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| config_err("config", e.to_string()))
    }

    pub fn successor_spec(&self) -> &ModelSpec {
        self.successor.as_ref().unwrap_or(&self.acquisition)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let unit = |field: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(config_err(field, format!("must be in (0, 1), got {v}")))
            }
        };
        unit("seed_fraction", self.seed_fraction)?;
        unit("step_fraction", self.step_fraction)?;
        unit("dev_fraction", self.dev_fraction)?;
        if self.iterations == 0 {
            return Err(config_err("iterations", "must be at least 1"));
        }
        let last = self.seed_fraction + self.iterations as f64 * self.step_fraction;
        if last > 1.0 + 1e-12 {
            return Err(config_err(
                "step_fraction",
                format!("seed_fraction + iterations * step_fraction = {last} exceeds 1"),
            ));
        }
        if self.repeats == 0 {
            return Err(config_err("repeats", "must be at least 1"));
        }
        self.acquisition.validate().map_err(|m| config_err("acquisition", m))?;
        if let Some(s) = &self.successor {
            s.validate().map_err(|m| config_err("successor", m))?;
        }
        self.mc.validate().map_err(|m| config_err("mc.passes", m))?;
        if self.strategy.needs_mc() {
            if !self.acquisition.is_stochastic() {
                return Err(config_err(
                    "strategy",
                    format!("{} needs a neural acquisition model", self.strategy),
                ));
            }
            if self.mc.variant == crate::neural::McVariant::None {
                return Err(config_err("mc.variant", format!("{} needs an mc variant other than NONE", self.strategy)));
            }
        }
        if let DataSource::Synthetic { spec, test_size } = &self.data {
            spec.validate().map_err(|e| config_err("data.spec", e.to_string()))?;
            if *test_size == 0 {
                return Err(config_err("data.test_size", "must be at least 1"));
            }
        }
        if let DataSource::Files { columns, .. } = &self.data {
            columns.validate().map_err(|e| config_err("data.columns", e.to_string()))?;
        }
        Ok(())
    }

    pub fn protocol(&self) -> Protocol {
        Protocol {
            data: self.data.clone(),
            acquisition: self.acquisition.clone(),
            successor: self.successor_spec().clone(),
            strategy: self.strategy,
            mc: self.mc,
            seed_fraction: self.seed_fraction,
            step_fraction: self.step_fraction,
            iterations: self.iterations,
            dev_fraction: self.dev_fraction,
        }
    }

    /// Stable 16-hex-digit digest of [`ExperimentConfig::protocol`].
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(&self.protocol()).expect("protocol serialises");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}

/// Training pool and test set under one tag set.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Corpus,
    pub test: Corpus,
    pub tagset: TagSet,
}

impl Dataset {
    pub fn load(source: &DataSource) -> Result<Self, EngineError> {
        match source {
            DataSource::Files { train, test, scheme, columns } => {
                let train = parse_conll(train, columns, *scheme)?;
                let test = parse_conll(test, columns, *scheme)?;
                let types: BTreeSet<String> =
                    train.tagset.entity_types().iter().chain(test.tagset.entity_types()).cloned().collect();
                let tagset = TagSet::new(types, *scheme)?;
                Ok(Dataset { train: train.relabel(tagset.clone())?, test: test.relabel(tagset.clone())?, tagset })
            }
            DataSource::Synthetic { spec, test_size } => {
                let mut all = spec.clone();
                all.size = spec.size + test_size;
                let corpus = synth_corpus(&all)?;
                let (train, test) = corpus.split_at(spec.size);
                let tagset = corpus.tagset.clone();
                Ok(Dataset { train, test, tagset })
            }
        }
    }
}

/// Counts reads of gold labels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessAudit {
    pub revealed_reads: usize,
    pub unrevealed_reads: usize,
}

/// Gold-label oracle that only hands out labels of revealed sentences.
pub struct Annotator<'a> {
    corpus: &'a Corpus,
    revealed: Vec<bool>,
    revealed_reads: Cell<usize>,
    unrevealed_reads: Cell<usize>,
}

impl<'a> Annotator<'a> {
    pub fn new(corpus: &'a Corpus) -> Self {
        Annotator {
            corpus,
            revealed: vec![false; corpus.len()],
            revealed_reads: Cell::new(0),
            unrevealed_reads: Cell::new(0),
        }
    }

    pub fn reveal(&mut self, ids: &[usize]) {
        for &id in ids {
            self.revealed[id] = true;
        }
    }

    /// Gold tags of a sentence. Reading an unrevealed sentence is recorded.
    pub fn label(&self, id: usize) -> Vec<usize> {
        if self.revealed[id] {
            self.revealed_reads.set(self.revealed_reads.get() + 1);
        } else {
            self.unrevealed_reads.set(self.unrevealed_reads.get() + 1);
        }
        self.corpus.tag_ids(id)
    }

    pub fn audit(&self) -> AccessAudit {
        AccessAudit { revealed_reads: self.revealed_reads.get(), unrevealed_reads: self.unrevealed_reads.get() }
    }
}

/// Wall-clock seconds of the phases of one iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    /// Acquisition model training.
    pub train_seconds: f64,
    /// Successor model training; zero when it coincides with the acquisition model.
    pub successor_train_seconds: f64,
    /// Pool scoring and batch selection.
    pub query_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub labeled_tokens: usize,
    pub labeled_sentences: usize,
    pub acquisition: F1Report,
    pub successor: F1Report,
    /// Sentences queried by this iteration's acquisition model. Empty after
    /// the final iteration, whose query is timed but not revealed.
    pub selected: Vec<usize>,
    /// Lower-layer forward passes spent on Monte Carlo scoring.
    pub lower_layer_passes: usize,
    #[serde(skip)]
    pub timing: PhaseTiming,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub run_seed: u64,
    pub protocol: Protocol,
    pub total_tokens: usize,
    /// The pool ran out before the final iteration.
    pub truncated: bool,
    pub entries: Vec<IterationRecord>,
}

impl RunRecord {
    pub fn timings(&self) -> Vec<PhaseTiming> {
        self.entries.iter().map(|e| e.timing).collect()
    }

    pub fn record_path(dir: &Path, config_hash: &str, run_seed: u64) -> PathBuf {
        dir.join(config_hash).join(format!("{run_seed}.json"))
    }

    pub fn timing_path(dir: &Path, config_hash: &str, run_seed: u64) -> PathBuf {
        dir.join(config_hash).join(format!("{run_seed}.timing.json"))
    }

    /// Writes the record and its timing sidecar under `dir`.
    pub fn save(&self, dir: &Path) -> Result<PathBuf, EngineError> {
        let path = Self::record_path(dir, &self.config_hash, self.run_seed);
        let parent = path.parent().expect("record path has a parent");
        fs::create_dir_all(parent).map_err(|source| EngineError::Io { path: parent.to_path_buf(), source })?;
        write_json(&Self::timing_path(dir, &self.config_hash, self.run_seed), &self.timings())?;
        write_json(&path, self)?;
        Ok(path)
    }

    /// Reads a record, attaching timings from its sidecar when present.
    pub fn load(path: &Path) -> Result<Self, EngineError> {
        let mut record: RunRecord = read_json(path)?;
        let sidecar = path.with_extension("timing.json");
        if sidecar.exists() {
            let timings: Vec<PhaseTiming> = read_json(&sidecar)?;
            for (e, t) in record.entries.iter_mut().zip(timings) {
                e.timing = t;
            }
        }
        Ok(record)
    }

    /// Loads every record below `dir` (one level of config-hash folders),
    /// ordered by config hash then run seed.
    pub fn load_dir(dir: &Path) -> Result<Vec<RunRecord>, EngineError> {
        let io = |source| EngineError::Io { path: dir.to_path_buf(), source };
        let mut paths = Vec::new();
        let mut push_records = |d: &Path| -> Result<(), EngineError> {
            for entry in fs::read_dir(d).map_err(io)? {
                let p = entry.map_err(io)?.path();
                let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
                if p.is_file() && name.ends_with(".json") && !name.ends_with(".timing.json") && name != "curve.json" {
                    paths.push(p);
                }
            }
            Ok(())
        };
        push_records(dir)?;
        for entry in fs::read_dir(dir).map_err(io)? {
            let p = entry.map_err(io)?.path();
            if p.is_dir() {
                push_records(&p)?;
            }
        }
        let mut records = paths.iter().map(|p| RunRecord::load(p)).collect::<Result<Vec<_>, _>>()?;
        records.sort_by(|a, b| a.config_hash.cmp(&b.config_hash).then(a.run_seed.cmp(&b.run_seed)));
        Ok(records)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), EngineError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| EngineError::Json { path: path.into(), source })?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|source| EngineError::Io { path: path.into(), source })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, EngineError> {
    let bytes = fs::read(path).map_err(|source| EngineError::Io { path: path.into(), source })?;
    serde_json::from_slice(&bytes).map_err(|source| EngineError::Json { path: path.into(), source })
}

/// A validated configuration with its data loaded.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub dataset: Dataset,
    hash: String,
    pool_obs: Vec<Observed>,
    test_obs: Vec<Observed>,
    test_gold: Vec<Vec<String>>,
}

/// Result of [`Experiment::run_all`].
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<RunRecord>,
    pub curve: LearningCurve,
    /// Seeds whose persisted records were reused.
    pub reused: Vec<u64>,
}

impl Experiment {
    pub fn prepare(config: ExperimentConfig) -> Result<Self, EngineError> {
        config.validate()?;
        let dataset = Dataset::load(&config.data)?;
        if dataset.train.is_empty() || dataset.train.token_count == 0 {
            return Err(CorpusError::Synth("training corpus has no tokens".into()).into());
        }
        let pool_obs = dataset.train.sentences.iter().map(|s| s.observed()).collect();
        let test_obs = dataset.test.sentences.iter().map(|s| s.observed()).collect();
        let test_gold =
            dataset.test.sentences.iter().map(|s| s.tokens.iter().map(|t| t.gold_tag.clone()).collect()).collect();
        let hash = config.config_hash();
        Ok(Experiment { config, dataset, hash, pool_obs, test_obs, test_gold })
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn total_tokens(&self) -> usize {
        self.dataset.train.token_count
    }

    fn evaluate(&self, model: &TrainedModel) -> F1Report {
        let ts = &self.dataset.tagset;
        let pred: Vec<Vec<&str>> = self.test_obs.par_iter().map(|o| ts.decode(&model.predict(o))).collect();
        span_f1(&pred, &self.test_gold, ts.scheme()).expect("predictions align with the test set")
    }

    fn train(
        &self,
        spec: &ModelSpec,
        annotator: &Annotator,
        train_ids: &[usize],
        dev_ids: &[usize],
        seed: u64,
        iteration: usize,
        role: &'static str,
    ) -> Result<TrainedModel, EngineError> {
        let gather = |ids: &[usize]| -> Vec<Labeled> {
            ids.iter().map(|&id| Labeled { obs: self.pool_obs[id].clone(), tags: annotator.label(id) }).collect()
        };
        let train = gather(train_ids);
        let dev = gather(dev_ids);
        spec.train(&train, &dev, &self.dataset.tagset, seed)
            .map_err(|source| EngineError::Model { iteration, role, source })
    }

    /// One seeded run. Deterministic in `run_seed` apart from timings.
    pub fn run(&self, run_seed: u64) -> Result<RunRecord, EngineError> {
        self.run_audited(run_seed).map(|(r, _)| r)
    }

    /// Like [`Experiment::run`], also returning the gold-label access audit.
    pub fn run_audited(&self, run_seed: u64) -> Result<(RunRecord, AccessAudit), EngineError> {
        let cfg = &self.config;
        let total = self.total_tokens();
        let lengths: Vec<usize> = self.dataset.train.sentences.iter().map(|s| s.len()).collect();
        let mut pool = PoolState::new(lengths);
        let mut annotator = Annotator::new(&self.dataset.train);
        let target = |fraction: f64| (fraction * total as f64).ceil() as usize;

        let mut order: Vec<usize> = (0..self.pool_obs.len()).collect();
        order.shuffle(&mut seed::rng(run_seed, &[STREAM_SEEDING]));
        let seed_target = target(cfg.seed_fraction).max(1);
        let mut seed_ids = Vec::new();
        let mut seed_tokens = 0;
        for id in order {
            if seed_tokens >= seed_target {
                break;
            }
            seed_tokens += pool.length(id);
            seed_ids.push(id);
        }
        pool.reveal(&seed_ids)?;
        annotator.reveal(&seed_ids);

        let acq_spec = &cfg.acquisition;
        let succ_spec = cfg.successor_spec();
        let same_models = acq_spec == succ_spec;
        let mut entries = Vec::with_capacity(cfg.iterations + 1);
        let mut truncated = false;

        for k in 0..=cfg.iterations {
            let mut labeled: Vec<usize> = pool.labeled().iter().copied().collect();
            labeled.shuffle(&mut seed::rng(run_seed, &[STREAM_SPLIT, k as u64]));
            let n_dev = ((cfg.dev_fraction * labeled.len() as f64).floor() as usize).min(labeled.len() - 1);
            let (dev_ids, train_ids) = labeled.split_at(n_dev);

            let started = Instant::now();
            let acq_seed = seed::derive(run_seed, &[STREAM_ACQ_TRAIN, k as u64]);
            let acq = self.train(acq_spec, &annotator, train_ids, dev_ids, acq_seed, k, "acquisition")?;
            let train_seconds = started.elapsed().as_secs_f64();
            let acq_report = self.evaluate(&acq);

            let (succ_report, successor_train_seconds) = if same_models {
                (acq_report.clone(), 0.0)
            } else {
                let started = Instant::now();
                let succ_seed = seed::derive(run_seed, &[STREAM_SUCC_TRAIN, k as u64]);
                let succ = self.train(succ_spec, &annotator, train_ids, dev_ids, succ_seed, k, "successor")?;
                let secs = started.elapsed().as_secs_f64();
                (self.evaluate(&succ), secs)
            };

            let started = Instant::now();
            let candidates: Vec<Observed> =
                pool.unlabeled().iter().map(|&id| self.pool_obs[id].clone()).collect();
            let scored = score_pool(&acq, &candidates, cfg.strategy, &cfg.mc, seed::derive(run_seed, &[STREAM_QUERY, k as u64]))?;
            let budget = target(cfg.seed_fraction + (k + 1) as f64 * cfg.step_fraction)
                .saturating_sub(pool.labeled_tokens())
                .max(1);
            let picked = select_batch(&scored.scores, &pool, budget);
            let query_seconds = started.elapsed().as_secs_f64();

            let reveal = k < cfg.iterations;
            entries.push(IterationRecord {
                iteration: k,
                labeled_tokens: pool.labeled_tokens(),
                labeled_sentences: pool.labeled().len(),
                acquisition: acq_report,
                successor: succ_report,
                selected: if reveal { picked.clone() } else { Vec::new() },
                lower_layer_passes: scored.lower_layer_passes,
                timing: PhaseTiming {
                    train_seconds: train_seconds.max(f64::MIN_POSITIVE),
                    successor_train_seconds,
                    query_seconds: query_seconds.max(f64::MIN_POSITIVE),
                },
            });
            if reveal {
                if picked.is_empty() {
                    truncated = true;
                    break;
                }
                pool.reveal(&picked)?;
                annotator.reveal(&picked);
            }
        }

        let record = RunRecord {
            config_hash: self.hash.clone(),
            run_seed,
            protocol: cfg.protocol(),
            total_tokens: total,
            truncated,
            entries,
        };
        Ok((record, annotator.audit()))
    }

    /// Runs (or reuses) one seed and persists the record when an output
    /// directory is configured. Returns the record and whether it was reused.
    pub fn run_persisted(&self, run_seed: u64, force: bool) -> Result<(RunRecord, bool), EngineError> {
        let Some(dir) = &self.config.output_dir else {
            return Ok((self.run(run_seed)?, false));
        };
        let path = RunRecord::record_path(dir, &self.hash, run_seed);
        if !force && path.exists() {
            if let Ok(r) = RunRecord::load(&path) {
                if r.entries.len() == self.config.iterations + 1 || r.truncated {
                    return Ok((r, true));
                }
            }
        }
        let record = self.run(run_seed)?;
        record.save(dir)?;
        Ok((record, false))
    }

    /// All repeats (seeds `base_seed`, `base_seed + 1`, ...), run concurrently.
    pub fn run_all(&self, force: bool) -> Result<ExperimentOutput, EngineError> {
        let seeds: Vec<u64> = (0..self.config.repeats as u64).map(|r| self.config.base_seed + r).collect();
        let results: Vec<Result<(RunRecord, bool), EngineError>> =
            seeds.par_iter().map(|&s| self.run_persisted(s, force)).collect();
        let mut records = Vec::with_capacity(results.len());
        let mut reused = Vec::new();
        for r in results {
            let (record, was_reused) = r?;
            if was_reused {
                reused.push(record.run_seed);
            }
            records.push(record);
        }
        let curve = aggregate_runs(&records)?;
        if let Some(dir) = &self.config.output_dir {
            write_json(&dir.join(&self.hash).join("curve.json"), &curve)?;
        }
        Ok(ExperimentOutput { records, curve, reused })
    }
}

/// One seeded run of `config`.
pub fn run_single(config: &ExperimentConfig, run_seed: u64) -> Result<RunRecord, EngineError> {
    Experiment::prepare(config.clone())?.run(run_seed)
}

/// All repeats of `config`, aggregated into a learning curve.
pub fn run_experiment(config: &ExperimentConfig, force: bool) -> Result<ExperimentOutput, EngineError> {
    Experiment::prepare(config.clone())?.run_all(force)
}

/// Runs with distinct acquisition and successor models. The successor is
/// trained on the same labeled sets the acquisition model selected.
pub fn run_mismatch(config: &ExperimentConfig, force: bool) -> Result<ExperimentOutput, EngineError> {
    if config.successor.is_none() {
        return Err(config_err("successor", "a mismatch run needs a successor model").into());
    }
    run_experiment(config, force)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crf::CrfParams;

    fn tiny_config() -> ExperimentConfig {
        let spec = SynthSpec::new(2, 300, (4, 10), 150, 7);
        let mut cfg = ExperimentConfig::new(
            DataSource::Synthetic { spec, test_size: 40 },
            ModelSpec::Crf(CrfParams { max_iter: 15, ..Default::default() }),
            Strategy::Mnlp,
        );
        cfg.seed_fraction = 0.1;
        cfg.step_fraction = 0.1;
        cfg.iterations = 3;
        cfg
    }

    #[test]
    fn config_validation_names_fields() {
        let mut c = tiny_config();
        c.seed_fraction = 1.5;
        assert_eq!(c.validate().unwrap_err().field, "seed_fraction");
        let mut c = tiny_config();
        c.iterations = 0;
        assert_eq!(c.validate().unwrap_err().field, "iterations");
        let mut c = tiny_config();
        c.iterations = 20;
        assert_eq!(c.validate().unwrap_err().field, "step_fraction");
        let mut c = tiny_config();
        c.strategy = Strategy::Bald;
        assert_eq!(c.validate().unwrap_err().field, "strategy");
        assert!(tiny_config().validate().is_ok());
    }

    #[test]
    fn config_json_rejects_unknown_keys() {
        let json = serde_json::to_string(&tiny_config()).unwrap();
        assert_eq!(ExperimentConfig::from_json(&json).unwrap(), tiny_config());
        let bad = json.replacen('{', r#"{"seed_fracton":0.1,"#, 1);
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }

    #[test]
    fn hash_ignores_bookkeeping_fields() {
        let a = tiny_config();
        let mut b = a.clone();
        b.repeats = 9;
        b.base_seed = 4;
        b.output_dir = Some("/tmp/x".into());
        assert_eq!(a.config_hash(), b.config_hash());
        b.successor = Some(b.acquisition.clone());
        assert_eq!(a.config_hash(), b.config_hash());
        b.strategy = Strategy::Random;
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash().len(), 16);
    }

    #[test]
    fn run_invariants() {
        let exp = Experiment::prepare(tiny_config()).unwrap();
        let (r, audit) = exp.run_audited(3).unwrap();
        assert_eq!(audit.unrevealed_reads, 0);
        assert!(audit.revealed_reads > 0);
        assert_eq!(r.entries.len(), 4);
        let total = exp.total_tokens();
        assert!(r.entries[0].labeled_tokens as f64 >= 0.1 * total as f64);
        let mut seen = BTreeSet::new();
        for w in r.entries.windows(2) {
            assert!(w[1].labeled_tokens > w[0].labeled_tokens);
        }
        for e in &r.entries {
            for &id in &e.selected {
                assert!(seen.insert(id), "sentence {id} selected twice");
            }
            assert!(e.timing.train_seconds > 0.0 && e.timing.query_seconds > 0.0);
        }
        let last = r.entries.last().unwrap();
        let frac = last.labeled_tokens as f64 / total as f64;
        assert!((0.4..0.45).contains(&frac), "{frac}");
        let json = |r: &RunRecord| serde_json::to_string(r).unwrap();
        assert_eq!(json(&r), json(&exp.run(3).unwrap()));
    }

    #[test]
    fn records_round_trip_with_timings() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config();
        cfg.output_dir = Some(dir.path().to_path_buf());
        cfg.repeats = 2;
        let out = run_experiment(&cfg, false).unwrap();
        assert!(out.reused.is_empty());
        assert_eq!(out.curve.repeats, 2);
        let again = run_experiment(&cfg, false).unwrap();
        assert_eq!(again.reused, vec![0, 1]);
        let loaded = RunRecord::load_dir(dir.path()).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded[0].timings(), out.records[0].timings());
        assert!(run_mismatch(&tiny_config(), false).is_err());
    }
}
