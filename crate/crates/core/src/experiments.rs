//! Run configuration and the experiment runners behind the command line.
//!
//! Every runner derives all of its randomness from the configured root seed
//! through named streams, writes its tables and plots into the output
//! directory, and finishes with a `manifest.json` that echoes the config.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::concepts::{
    fragment_items, group_items, overlap_metrics, random_selection, rank_groups, reference_selection, OverlapReport,
    Space,
};
use crate::data::{
    generate_concept_blocks, generate_synthetic, load_dataset, prepare_split, ConceptTruth, CsvOptions, DatasetSplit,
    SyntheticKind, SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::explain::{attribution_from_transform, explain_sample, AttributionMap, RecordExport, TransformationRecord};
use crate::fed::{
    aggregate_importance, contribution_compare, random_rank_overlap_baseline, shapley_exact, ClientPartition,
    ContributionReport,
};
use crate::games::{
    freq_rank, random_attributions, random_frequency_rankings, run_game, uniform_schedule, DeletionCurve,
    DeletionMode, Domain, Importance,
};
use crate::nn::{load_checkpoint, model_hash, save_checkpoint, Architecture, DenseNet, TrainConfig, Trainer};
use crate::report::{emit_report, fmt_f64, CsvTable, LinePlot, Report};
use crate::seed::derive_seed;
use crate::spectral::{verify_snr_increase, BiasMode, SnrTrialConfig, SnrTrialReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Train,
    Explain,
    Freqdig,
    Delins,
    Concepts,
    FedStep1,
    FedStep2,
    VerifyTheory,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Train => "train",
            Experiment::Explain => "explain",
            Experiment::Freqdig => "freqdig",
            Experiment::Delins => "delins",
            Experiment::Concepts => "concepts",
            Experiment::FedStep1 => "fed-step1",
            Experiment::FedStep2 => "fed-step2",
            Experiment::VerifyTheory => "verify-theory",
        }
    }

    pub fn default_epsilon(self) -> f64 {
        match self {
            Experiment::Concepts => 100.0,
            Experiment::FedStep1 | Experiment::FedStep2 => 1000.0,
            _ => 1.0,
        }
    }

    pub fn default_repetitions(self) -> usize {
        match self {
            Experiment::Delins | Experiment::Freqdig | Experiment::FedStep1 => 3,
            Experiment::Concepts => 15,
            Experiment::FedStep2 => 20,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSource {
    pub path: PathBuf,
    #[serde(default = "default_label")]
    pub label_column: String,
    #[serde(default)]
    pub categorical_columns: Vec<String>,
}

fn default_label() -> String {
    "label".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    Csv(CsvSource),
}

impl DatasetSource {
    pub fn planted_default() -> Self {
        DatasetSource::Synthetic(SyntheticSpec::planted_signal(1000, 50, 10, 0.5))
    }

    pub fn concepts_default() -> Self {
        DatasetSource::Synthetic(SyntheticSpec::concept_blocks(700, 8, 4, 5, 2, 0.3))
    }

    pub fn name(&self) -> String {
        match self {
            DatasetSource::Synthetic(spec) => match spec.kind {
                SyntheticKind::TwoFeatureBlobs => "two-feature-blobs".into(),
                SyntheticKind::PlantedSignal => "planted-signal".into(),
                SyntheticKind::ConceptBlocks => "concept-blocks".into(),
            },
            DatasetSource::Csv(c) => c
                .path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("dataset")
                .to_string(),
        }
    }

    /// Generates or reads the data, then splits and standardises it.
    pub fn load(&self, test_fraction: f64, root: u64) -> Result<DatasetSplit> {
        let split_seed = derive_seed(root, "split");
        match self {
            DatasetSource::Synthetic(spec) => {
                let data = generate_synthetic(spec, derive_seed(root, "data"))?;
                let groups = ClientPartition::singleton_groups(data.feature_count());
                prepare_split(&data, groups, test_fraction, split_seed)
            }
            DatasetSource::Csv(c) => {
                let options = CsvOptions {
                    label_column: c.label_column.clone(),
                    categorical_columns: c.categorical_columns.clone(),
                };
                load_dataset(&c.path, &options, test_fraction, split_seed)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingSettings {
    pub architecture: Architecture,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        Self {
            architecture: Architecture::default(),
            epochs: 30,
            learning_rate: 0.05,
            batch_size: 32,
        }
    }
}

impl TrainingSettings {
    /// Trainer whose init and shuffle seeds come from `root` and `tag`.
    pub fn trainer(&self, root: u64, tag: &str) -> Trainer {
        Trainer {
            architecture: self.architecture.clone(),
            config: TrainConfig {
                epochs: self.epochs,
                learning_rate: self.learning_rate,
                batch_size: self.batch_size,
                seed: derive_seed(root, &format!("train/{tag}")),
            },
            init_seed: derive_seed(root, &format!("init/{tag}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConceptSettings {
    pub k: usize,
    pub per_group: usize,
    pub restarts: usize,
    /// Samples (taken from the end of the dataset) whose fragments are clustered.
    pub items: usize,
    pub sweep_epsilons: Vec<f64>,
    pub sweep_repetitions: usize,
}

impl Default for ConceptSettings {
    fn default() -> Self {
        Self {
            k: 10,
            per_group: 10,
            restarts: 3,
            items: 100,
            sweep_epsilons: vec![1.0, 10.0, 100.0, 1000.0],
            sweep_repetitions: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FedSettings {
    pub clients: usize,
    pub top_k: usize,
}

impl Default for FedSettings {
    fn default() -> Self {
        Self { clients: 3, top_k: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TheorySettings {
    pub trials: usize,
    pub dims: Vec<usize>,
    pub bias_modes: Vec<BiasMode>,
}

impl Default for TheorySettings {
    fn default() -> Self {
        let d = SnrTrialConfig::default();
        Self {
            trials: d.trials,
            dims: d.dims,
            bias_modes: d.bias_modes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub allow_zero_epsilon: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Test samples explained and perturbed per repetition.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repetitions: Option<usize>,
    #[serde(default = "default_schedule_steps")]
    pub schedule_steps: usize,
    #[serde(default)]
    pub training: TrainingSettings,
    #[serde(default)]
    pub concepts: ConceptSettings,
    #[serde(default)]
    pub fed: FedSettings,
    #[serde(default)]
    pub theory: TheorySettings,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_test_fraction() -> f64 {
    0.25
}

fn default_samples() -> usize {
    200
}

fn default_schedule_steps() -> usize {
    10
}

impl RunConfig {
    pub fn new(experiment: Experiment, seed: u64) -> Self {
        Self {
            experiment,
            seed,
            epsilon: None,
            allow_zero_epsilon: false,
            dataset: None,
            checkpoint: None,
            out: default_out(),
            test_fraction: default_test_fraction(),
            samples: default_samples(),
            repetitions: None,
            schedule_steps: default_schedule_steps(),
            training: TrainingSettings::default(),
            concepts: ConceptSettings::default(),
            fed: FedSettings::default(),
            theory: TheorySettings::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let location = e
                .span()
                .map(|s| {
                    let line = text[..s.start].matches('\n').count() + 1;
                    format!("line {line}")
                })
                .unwrap_or_else(|| "config".into());
            Error::Parse {
                location,
                message: e.message().to_string(),
            }
        })
    }

    /// Reads a TOML config, or the `config` object of a `manifest.json`.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
                location: format!("line {}, column {}", e.line(), e.column()),
                message: e.to_string(),
            })?;
            let config = value.get("config").cloned().unwrap_or(value);
            return serde_json::from_value(config).map_err(|e| Error::Parse {
                location: path.display().to_string(),
                message: e.to_string(),
            });
        }
        Self::from_toml(&text)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or_else(|| self.experiment.default_epsilon())
    }

    pub fn repetitions(&self) -> usize {
        self.repetitions.unwrap_or_else(|| self.experiment.default_repetitions())
    }

    pub fn dataset(&self) -> DatasetSource {
        self.dataset.clone().unwrap_or_else(|| match self.experiment {
            Experiment::Concepts => DatasetSource::concepts_default(),
            _ => DatasetSource::planted_default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let eps = self.epsilon();
        if !eps.is_finite() || eps < 0.0 {
            return Err(Error::invalid(format!("epsilon must be finite and positive, got {eps}")));
        }
        if eps == 0.0 && !(self.experiment == Experiment::Explain && self.allow_zero_epsilon) {
            return Err(Error::invalid(
                "epsilon must be positive; zero is only accepted by explain with --allow-zero-epsilon",
            ));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::invalid("test_fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// What a run wrote and a few headline numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub experiment: Experiment,
    pub files: Vec<PathBuf>,
    pub headlines: Vec<(String, String)>,
    pub model_hash: Option<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: &'static str,
    seed: u64,
    epsilon: f64,
    dataset: String,
    model_hash: Option<&'a str>,
    outputs: Vec<String>,
    config: &'a RunConfig,
}

fn finish(cfg: &RunConfig, report: Report, headlines: Vec<(String, String)>, hash: Option<String>) -> Result<RunSummary> {
    let mut files = emit_report(&report, &cfg.out)?;
    let outputs = files
        .iter()
        .filter_map(|p| p.file_name().and_then(|n| n.to_str()).map(String::from))
        .collect();
    let manifest = Manifest {
        experiment: cfg.experiment.name(),
        seed: cfg.seed,
        epsilon: cfg.epsilon(),
        dataset: cfg.dataset().name(),
        model_hash: hash.as_deref(),
        outputs,
        config: cfg,
    };
    let path = cfg.out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::invalid(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    files.push(path);
    Ok(RunSummary {
        experiment: cfg.experiment,
        files,
        headlines,
        model_hash: hash,
    })
}

/// Runs the configured experiment and writes its outputs.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    match cfg.experiment {
        Experiment::Train => run_train(cfg),
        Experiment::Explain => run_explain(cfg),
        Experiment::Delins | Experiment::Freqdig => run_games(cfg),
        Experiment::Concepts => run_concepts(cfg),
        Experiment::FedStep1 => run_fed_step1(cfg),
        Experiment::FedStep2 => run_fed_step2(cfg),
        Experiment::VerifyTheory => run_verify_theory(cfg),
    }
}

fn rep_seed(root: u64, rep: usize) -> u64 {
    derive_seed(root, &format!("repetition-{rep}"))
}

/// The configured checkpoint if there is one, otherwise a freshly trained net
/// and its per-epoch test accuracy.
fn obtain_model(cfg: &RunConfig, split: &DatasetSplit, root: u64) -> Result<(DenseNet, Vec<f64>)> {
    if let Some(path) = &cfg.checkpoint {
        let net = load_checkpoint(path)?;
        if net.input_dim() != split.train.feature_count() || net.output_dim() != split.train.class_count() {
            return Err(Error::invalid(format!(
                "checkpoint expects {} features and {} classes; dataset has {} and {}",
                net.input_dim(),
                net.output_dim(),
                split.train.feature_count(),
                split.train.class_count()
            )));
        }
        return Ok((net, Vec::new()));
    }
    cfg.training.trainer(root, "model").fit_tracking(&split.train, &split.test)
}

fn curve_table(header: &str, values: &[f64]) -> CsvTable {
    let mut t = CsvTable::new(["epoch", header]);
    for (e, v) in values.iter().enumerate() {
        t.push(vec![(e + 1).to_string(), fmt_f64(*v)]);
    }
    t
}

fn indexed(values: &[f64]) -> Vec<(f64, f64)> {
    values.iter().enumerate().map(|(i, &v)| ((i + 1) as f64, v)).collect()
}

pub fn run_train(cfg: &RunConfig) -> Result<RunSummary> {
    let split = cfg.dataset().load(cfg.test_fraction, cfg.seed)?;
    let (net, curve) = cfg.training.trainer(cfg.seed, "model").fit_tracking(&split.train, &split.test)?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    save_checkpoint(&net, cfg.out.join("model.json"))?;
    let mut report = Report::default();
    report.table("training", curve_table("test_accuracy", &curve));
    report.plot(
        "training",
        LinePlot::new("Test accuracy during training", "epoch", "accuracy").with_series("all features", indexed(&curve)),
    );
    let hash = model_hash(&net);
    let mut summary = finish(
        cfg,
        report,
        vec![("final_test_accuracy".into(), fmt_f64(curve.last().copied().unwrap_or(f64::NAN)))],
        Some(hash),
    )?;
    summary.files.push(cfg.out.join("model.json"));
    Ok(summary)
}

/// Explains the first `count` test samples.
pub fn explain_samples(net: &DenseNet, samples: &[Vec<f64>], epsilon: f64) -> Result<Vec<TransformationRecord>> {
    use rayon::prelude::*;
    samples.par_iter().map(|x| explain_sample(net, x, epsilon)).collect()
}

pub fn run_explain(cfg: &RunConfig) -> Result<RunSummary> {
    let split = cfg.dataset().load(cfg.test_fraction, cfg.seed)?;
    let (net, _) = obtain_model(cfg, &split, cfg.seed)?;
    let hash = model_hash(&net);
    let count = cfg.samples.min(split.test.len());
    let records = explain_samples(&net, &split.test.samples()[..count], cfg.epsilon())?;
    let names = split.test.feature_names();
    let mut table = CsvTable::new(["sample_id", "feature", "x", "x_prime", "score", "rank"]);
    let mut exports: Vec<RecordExport> = Vec::with_capacity(count);
    for (id, record) in records.iter().enumerate() {
        let attribution = attribution_from_transform(record);
        let mut rank = vec![0; attribution.len()];
        attribution.ranking.iter().enumerate().for_each(|(r, &j)| rank[j] = r + 1);
        for j in 0..attribution.len() {
            table.push(vec![
                id.to_string(),
                names[j].clone(),
                fmt_f64(record.input[j]),
                fmt_f64(record.input_space_x_prime[j]),
                fmt_f64(attribution.scores[j]),
                rank[j].to_string(),
            ]);
        }
        exports.push(record.to_export(id, &hash));
    }
    let mut report = Report::default();
    report.table("attributions", table);
    report.json("records", &exports)?;
    finish(cfg, report, vec![("explained_samples".into(), count.to_string())], Some(hash))
}

/// FreqX curve next to the random-control curve for one game mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GamePair {
    pub mode: DeletionMode,
    pub freqx: DeletionCurve,
    pub control: DeletionCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameStudy {
    pub domain: Domain,
    pub repetitions: usize,
    pub samples: usize,
    pub pairs: Vec<GamePair>,
}

impl GameStudy {
    pub fn pair(&self, mode: DeletionMode) -> Option<&GamePair> {
        self.pairs.iter().find(|p| p.mode == mode)
    }
}

fn average_curves(curves: &[DeletionCurve]) -> DeletionCurve {
    let n = curves.len() as f64;
    let mut out = curves[0].clone();
    for s in 0..out.fractions.len() {
        out.mean_probability[s] = curves.iter().map(|c| c.mean_probability[s]).sum::<f64>() / n;
        out.flip_rate[s] = curves.iter().map(|c| c.flip_rate[s]).sum::<f64>() / n;
    }
    out
}

const GAME_MODES: [DeletionMode; 3] = [
    DeletionMode::DeleteMostImportant,
    DeletionMode::DeleteLeastImportant,
    DeletionMode::InsertMostImportant,
];

/// Deletion/insertion games with FreqX importance and a random control,
/// averaged over repetitions that each redraw data, split and model.
///
/// In the time domain features are ranked by `|x' - x|`; in the frequency
/// domain frequencies are ranked by the spectrum of the signed `x' - x`.
pub fn game_study(cfg: &RunConfig, domain: Domain) -> Result<GameStudy> {
    let reps = cfg.repetitions().max(1);
    let schedule = uniform_schedule(cfg.schedule_steps);
    let mut per_mode: Vec<(Vec<DeletionCurve>, Vec<DeletionCurve>)> = vec![(Vec::new(), Vec::new()); GAME_MODES.len()];
    let mut samples = 0;
    for rep in 0..reps {
        let root = rep_seed(cfg.seed, rep);
        let split = cfg.dataset().load(cfg.test_fraction, root)?;
        let (net, _) = obtain_model(cfg, &split, root)?;
        let count = cfg.samples.min(split.test.len());
        samples = count;
        let xs = &split.test.samples()[..count];
        let records = explain_samples(&net, xs, cfg.epsilon())?;
        let d = split.test.feature_count();
        let control_seed = derive_seed(root, "random-control");
        let (ours_maps, control_maps, ours_freq, control_freq);
        let (ours, control) = match domain {
            Domain::Time => {
                ours_maps = records.iter().map(attribution_from_transform).collect::<Vec<AttributionMap>>();
                control_maps = random_attributions(count, d, control_seed)?;
                (Importance::Time(&ours_maps), Importance::Time(&control_maps))
            }
            Domain::Frequency => {
                ours_freq = records.iter().map(|r| freq_rank(&r.input_delta())).collect::<Result<Vec<_>>>()?;
                control_freq = random_frequency_rankings(count, d, control_seed)?;
                (Importance::Frequency(&ours_freq), Importance::Frequency(&control_freq))
            }
        };
        for (m, &mode) in GAME_MODES.iter().enumerate() {
            per_mode[m].0.push(run_game(&net, xs, ours, &schedule, mode)?);
            per_mode[m].1.push(run_game(&net, xs, control, &schedule, mode)?);
        }
    }
    let pairs = GAME_MODES
        .iter()
        .zip(per_mode)
        .map(|(&mode, (ours, control))| GamePair {
            mode,
            freqx: average_curves(&ours),
            control: average_curves(&control),
        })
        .collect();
    Ok(GameStudy {
        domain,
        repetitions: reps,
        samples,
        pairs,
    })
}

fn mode_name(mode: DeletionMode) -> &'static str {
    match mode {
        DeletionMode::DeleteMostImportant => "delete_most",
        DeletionMode::DeleteLeastImportant => "delete_least",
        DeletionMode::InsertMostImportant => "insert_most",
    }
}

fn run_games(cfg: &RunConfig) -> Result<RunSummary> {
    let domain = if cfg.experiment == Experiment::Freqdig {
        Domain::Frequency
    } else {
        Domain::Time
    };
    let study = game_study(cfg, domain)?;
    let mut report = Report::default();
    let prefix = cfg.experiment.name();
    let mut headlines = Vec::new();
    for pair in &study.pairs {
        let name = format!("{prefix}_{}", mode_name(pair.mode));
        let mut t = CsvTable::new(["fraction", "mean_prob", "flip_rate", "random_mean_prob", "random_flip_rate"]);
        for s in 0..pair.freqx.len() {
            t.push(vec![
                fmt_f64(pair.freqx.fractions[s]),
                fmt_f64(pair.freqx.mean_probability[s]),
                fmt_f64(pair.freqx.flip_rate[s]),
                fmt_f64(pair.control.mean_probability[s]),
                fmt_f64(pair.control.flip_rate[s]),
            ]);
        }
        report.table(&name, t);
        let pts = |c: &DeletionCurve| c.fractions.iter().copied().zip(c.mean_probability.iter().copied()).collect();
        report.plot(
            &name,
            LinePlot::new(&format!("{prefix}: {}", mode_name(pair.mode)), "fraction", "original-class probability")
                .with_series("FreqX", pts(&pair.freqx))
                .with_series("random", pts(&pair.control)),
        );
    }
    if domain == Domain::Frequency {
        let flip_at = |mode| {
            study
                .pair(mode)
                .and_then(|p| p.freqx.fractions.iter().position(|&f| (f - 0.1).abs() < 1e-12).map(|i| p.freqx.flip_rate[i]))
        };
        if let (Some(top), Some(bottom)) = (
            flip_at(DeletionMode::DeleteMostImportant),
            flip_at(DeletionMode::DeleteLeastImportant),
        ) {
            let mut t = CsvTable::new(["deleted", "flip_rate"]);
            t.push(vec!["top_10_percent".into(), fmt_f64(top)]);
            t.push(vec!["bottom_10_percent".into(), fmt_f64(bottom)]);
            report.table("freqdig_top_vs_bottom", t);
            headlines.push(("flip_rate_top_10".into(), fmt_f64(top)));
            headlines.push(("flip_rate_bottom_10".into(), fmt_f64(bottom)));
        }
    }
    headlines.push(("samples_per_repetition".into(), study.samples.to_string()));
    finish(cfg, report, headlines, None)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConceptStudy {
    /// `(epsilon, overlap)` for the full pipeline.
    pub sweep: Vec<(f64, OverlapReport)>,
    pub full: OverlapReport,
    /// Clustering in the original space.
    pub g1: OverlapReport,
    /// Random members of the full pipeline's groups.
    pub g2: OverlapReport,
}

struct ConceptSetup {
    net: DenseNet,
    samples: Vec<Vec<f64>>,
    truth: ConceptTruth,
    block_width: usize,
}

fn concept_setup(cfg: &RunConfig) -> Result<ConceptSetup> {
    let spec = match cfg.dataset() {
        DatasetSource::Synthetic(spec) if spec.kind == SyntheticKind::ConceptBlocks => spec,
        _ => return Err(Error::invalid("the concepts experiment needs a concept-blocks synthetic dataset")),
    };
    let (data, truth) = generate_concept_blocks(&spec, derive_seed(cfg.seed, "data"))?;
    let items = cfg.concepts.items;
    if items == 0 || items >= data.len() {
        return Err(Error::invalid(format!("{items} item samples out of {}", data.len())));
    }
    let cut = data.len() - items;
    let train = data.select_rows(&(0..cut).collect::<Vec<_>>())?;
    let net = match &cfg.checkpoint {
        Some(p) => load_checkpoint(p)?,
        None => cfg.training.trainer(cfg.seed, "model").fit(&train)?,
    };
    let truth = ConceptTruth {
        concept: truth.concept[cut..].to_vec(),
        amplitude: truth.amplitude[cut..].to_vec(),
        ..truth
    };
    Ok(ConceptSetup {
        net,
        samples: data.samples()[cut..].to_vec(),
        truth,
        block_width: spec.block_width,
    })
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Pipeline {
    Full,
    OriginalSpace,
    RandomMembers,
}

fn concept_overlap(cfg: &RunConfig, setup: &ConceptSetup, epsilon: f64, reps: usize, pipeline: Pipeline) -> Result<OverlapReport> {
    let records = explain_samples(&setup.net, &setup.samples, epsilon)?;
    let attributions: Vec<AttributionMap> = records.iter().map(attribution_from_transform).collect();
    let moved: Vec<Vec<f64>> = records.into_iter().map(|r| r.input_space_x_prime).collect();
    let items = fragment_items(&setup.samples, &moved, &attributions, setup.block_width)?;
    let s = &cfg.concepts;
    let reference = reference_selection(&setup.truth, &items, s.k, s.per_group);
    let pairs = (0..reps)
        .map(|rep| {
            let kseed = derive_seed(cfg.seed, &format!("kmeans-{rep}"));
            let space = if pipeline == Pipeline::OriginalSpace {
                Space::Original
            } else {
                Space::Transformed
            };
            let grouping = group_items(&items, space, s.k, kseed, s.restarts)?;
            let ours = match pipeline {
                Pipeline::RandomMembers => random_selection(
                    &grouping,
                    &items,
                    s.per_group,
                    derive_seed(cfg.seed, &format!("random-control-{rep}")),
                ),
                _ => rank_groups(&grouping, &items, s.per_group),
            };
            Ok((ours, reference.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    overlap_metrics(&pairs)
}

pub fn concept_study(cfg: &RunConfig) -> Result<ConceptStudy> {
    let setup = concept_setup(cfg)?;
    let sweep = cfg
        .concepts
        .sweep_epsilons
        .iter()
        .map(|&e| Ok((e, concept_overlap(cfg, &setup, e, cfg.concepts.sweep_repetitions, Pipeline::Full)?)))
        .collect::<Result<Vec<_>>>()?;
    let eps = cfg.epsilon();
    let reps = cfg.repetitions();
    Ok(ConceptStudy {
        sweep,
        full: concept_overlap(cfg, &setup, eps, reps, Pipeline::Full)?,
        g1: concept_overlap(cfg, &setup, eps, reps, Pipeline::OriginalSpace)?,
        g2: concept_overlap(cfg, &setup, eps, reps, Pipeline::RandomMembers)?,
    })
}

fn overlap_row(label: String, o: &OverlapReport) -> Vec<String> {
    vec![
        label,
        fmt_f64(o.n),
        fmt_f64(o.m),
        fmt_f64(o.hit_rate),
        fmt_f64(o.n_max),
        fmt_f64(o.m_max),
        o.repetitions.to_string(),
    ]
}

fn run_concepts(cfg: &RunConfig) -> Result<RunSummary> {
    let study = concept_study(cfg)?;
    let header = ["setting", "n", "m", "hit_rate", "n_max", "m_max", "repetitions"];
    let mut sweep = CsvTable::new(header);
    for (e, o) in &study.sweep {
        sweep.push(overlap_row(fmt_f64(*e), o));
    }
    let mut ablation = CsvTable::new(header);
    ablation.push(overlap_row("full".into(), &study.full));
    ablation.push(overlap_row("g1".into(), &study.g1));
    ablation.push(overlap_row("g2".into(), &study.g2));
    let mut report = Report::default();
    report.table("concepts_epsilon_sweep", sweep);
    report.table("concepts_ablation", ablation);
    let log_eps = |f: fn(&OverlapReport) -> f64| study.sweep.iter().map(|(e, o)| (e.log10(), f(o))).collect();
    report.plot(
        "concepts_epsilon_sweep",
        LinePlot::new("Concept overlap against epsilon", "log10 epsilon", "count")
            .with_series("N", log_eps(|o| o.n))
            .with_series("M", log_eps(|o| o.m)),
    );
    let headlines = vec![
        ("full_n".into(), fmt_f64(study.full.n)),
        ("g1_n".into(), fmt_f64(study.g1.n)),
        ("g2_n".into(), fmt_f64(study.g2.n)),
    ];
    finish(cfg, report, headlines, None)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Step1Study {
    /// Mean per-epoch test accuracy over repetitions.
    pub all_features: Vec<f64>,
    pub top_k: Vec<f64>,
    pub random_k: Vec<f64>,
    pub selections: Vec<(Vec<usize>, Vec<usize>)>,
}

fn mean_curves(curves: &[Vec<f64>]) -> Vec<f64> {
    let len = curves.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|e| curves.iter().map(|c| c[e]).sum::<f64>() / curves.len() as f64)
        .collect()
}

/// Pre-trains on every feature, ranks features by `s_j`, and retrains fresh
/// nets on the top-k and on a random k.
pub fn step1_study(cfg: &RunConfig) -> Result<Step1Study> {
    use rand::seq::index::sample;
    let k = cfg.fed.top_k;
    let (mut all, mut top, mut random, mut selections) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for rep in 0..cfg.repetitions() {
        let root = rep_seed(cfg.seed, rep);
        let split = cfg.dataset().load(cfg.test_fraction, root)?;
        let d = split.train.feature_count();
        if k == 0 || k > d {
            return Err(Error::invalid(format!("top_k = {k} with {d} features")));
        }
        let (net, curve) = cfg.training.trainer(root, "model").fit_tracking(&split.train, &split.test)?;
        let importance = aggregate_importance(&net, &split.train, cfg.epsilon())?;
        let chosen = importance.top_k(k);
        let mut rng = crate::seed::stream(root, "random-k");
        let mut drawn: Vec<usize> = sample(&mut rng, d, k).into_vec();
        drawn.sort_unstable();
        let retrain = |features: &[usize]| {
            cfg.training
                .trainer(root, "retrain")
                .fit_tracking(&split.train.select_features(features)?, &split.test.select_features(features)?)
                .map(|(_, c)| c)
        };
        let mut chosen_columns = chosen.clone();
        chosen_columns.sort_unstable();
        all.push(curve);
        top.push(retrain(&chosen_columns)?);
        random.push(retrain(&drawn)?);
        selections.push((chosen, drawn));
    }
    Ok(Step1Study {
        all_features: mean_curves(&all),
        top_k: mean_curves(&top),
        random_k: mean_curves(&random),
        selections,
    })
}

fn run_fed_step1(cfg: &RunConfig) -> Result<RunSummary> {
    let study = step1_study(cfg)?;
    let mut t = CsvTable::new(["epoch", "all_features", "top_k", "random_k"]);
    for e in 0..study.all_features.len().min(study.top_k.len()).min(study.random_k.len()) {
        t.push(vec![
            (e + 1).to_string(),
            fmt_f64(study.all_features[e]),
            fmt_f64(study.top_k[e]),
            fmt_f64(study.random_k[e]),
        ]);
    }
    let mut sel = CsvTable::new(["repetition", "selection", "features"]);
    for (rep, (chosen, drawn)) in study.selections.iter().enumerate() {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
        sel.push(vec![rep.to_string(), "top_k".into(), join(chosen)]);
        sel.push(vec![rep.to_string(), "random_k".into(), join(drawn)]);
    }
    let mut report = Report::default();
    report.table("fed_step1_accuracy", t);
    report.table("fed_step1_selections", sel);
    report.plot(
        "fed_step1_accuracy",
        LinePlot::new("Retraining on selected features", "epoch", "test accuracy")
            .with_series("all features", indexed(&study.all_features))
            .with_series("top-k", indexed(&study.top_k))
            .with_series("random-k", indexed(&study.random_k)),
    );
    let last = |c: &[f64]| fmt_f64(c.last().copied().unwrap_or(f64::NAN));
    let headlines = vec![
        ("final_top_k_accuracy".into(), last(&study.top_k)),
        ("final_random_k_accuracy".into(), last(&study.random_k)),
    ];
    finish(cfg, report, headlines, None)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Step2Study {
    pub dataset: String,
    pub reports: Vec<ContributionReport>,
    /// Coalition value tables, one per repetition.
    pub coalition_values: Vec<Vec<f64>>,
    pub mean_overlap: Option<f64>,
    pub baseline: f64,
}

/// One pre-trained model and importance vector; each repetition draws a new
/// client partition and computes exact Shapley values for it.
pub fn step2_study(cfg: &RunConfig) -> Result<Step2Study> {
    let source = cfg.dataset();
    let reps = cfg.repetitions();
    let baseline = random_rank_overlap_baseline(cfg.fed.clients);
    if reps == 0 {
        return Ok(Step2Study {
            dataset: source.name(),
            reports: Vec::new(),
            coalition_values: Vec::new(),
            mean_overlap: None,
            baseline,
        });
    }
    let split = source.load(cfg.test_fraction, cfg.seed)?;
    let (net, _) = obtain_model(cfg, &split, cfg.seed)?;
    let importance = aggregate_importance(&net, &split.train, cfg.epsilon())?;
    let trainer = cfg.training.trainer(cfg.seed, "coalition");
    let mut reports = Vec::with_capacity(reps);
    let mut tables = Vec::with_capacity(reps);
    for rep in 0..reps {
        let partition = ClientPartition::even_random(
            &split.feature_groups,
            cfg.fed.clients,
            derive_seed(cfg.seed, &format!("partition-{rep}")),
        )?;
        let shapley = shapley_exact(&split.train, &split.test, &partition, &trainer)?;
        reports.push(contribution_compare(&importance, &partition, &shapley.values)?);
        tables.push(shapley.coalition_values);
    }
    let mean = reports.iter().map(|r| r.overlap_count as f64).sum::<f64>() / reps as f64;
    Ok(Step2Study {
        dataset: source.name(),
        reports,
        coalition_values: tables,
        mean_overlap: Some(mean),
        baseline,
    })
}

fn run_fed_step2(cfg: &RunConfig) -> Result<RunSummary> {
    let study = step2_study(cfg)?;
    let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
    let join_f = |v: &[f64]| v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(" ");
    let mut reps = CsvTable::new(["repetition", "ours_scores", "ours_rank", "shapley_values", "shapley_rank", "overlap"]);
    for (i, r) in study.reports.iter().enumerate() {
        reps.push(vec![
            i.to_string(),
            join_f(&r.ours_scores),
            join(&r.ours_rank),
            join_f(&r.shapley_values),
            join(&r.shapley_rank),
            r.overlap_count.to_string(),
        ]);
    }
    let mut table = CsvTable::new(["dataset", "repetitions", "ours", "baseline"]);
    if let Some(mean) = study.mean_overlap {
        table.push(vec![
            study.dataset.clone(),
            study.reports.len().to_string(),
            fmt_f64(mean),
            fmt_f64(study.baseline),
        ]);
    }
    let mut report = Report::default();
    report.table("fed_step2_repetitions", reps);
    report.table("fed_step2_overlap", table);
    let headlines = vec![
        (
            "mean_overlap".into(),
            study.mean_overlap.map_or_else(|| "none".into(), fmt_f64),
        ),
        ("baseline".into(), fmt_f64(study.baseline)),
    ];
    finish(cfg, report, headlines, None)
}

pub fn theory_config(cfg: &RunConfig) -> SnrTrialConfig {
    SnrTrialConfig {
        trials: cfg.theory.trials,
        seed: derive_seed(cfg.seed, "theory"),
        dims: cfg.theory.dims.clone(),
        bias_modes: cfg.theory.bias_modes.clone(),
    }
}

fn run_verify_theory(cfg: &RunConfig) -> Result<RunSummary> {
    let result: SnrTrialReport = verify_snr_increase(&theory_config(cfg))?;
    let mut t = CsvTable::new(["attempts", "checked", "passed", "skipped_degenerate", "excluded_inactive", "violations"]);
    t.push(vec![
        result.attempts.to_string(),
        result.checked.to_string(),
        result.passed.to_string(),
        result.skipped_degenerate.to_string(),
        result.excluded_inactive.to_string(),
        result.violations().to_string(),
    ]);
    let mut report = Report::default();
    report.table("theory", t);
    report.json("theory_failures", &result.failures)?;
    let headlines = vec![
        ("checked".into(), result.checked.to_string()),
        ("violations".into(), result.violations().to_string()),
    ];
    finish(cfg, report, headlines, None)
}
