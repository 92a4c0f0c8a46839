//! Dataset ingestion, standardisation, splitting and synthetic generators.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::LabeledDataset;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    /// Two Gaussian blobs in two features.
    TwoFeatureBlobs,
    /// Standard-normal features; labels depend only on the informative ones.
    PlantedSignal,
    /// Contiguous feature blocks that each carry one of several patterns.
    ConceptBlocks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n: usize,
    pub d: usize,
    pub class_count: usize,
    pub noise_sigma: f64,
    pub informative_indices: Vec<usize>,
    /// Block width for [`SyntheticKind::ConceptBlocks`].
    #[serde(default = "default_block_width")]
    pub block_width: usize,
}

fn default_block_width() -> usize {
    4
}

impl SyntheticSpec {
    pub fn two_feature_blobs(n: usize, noise_sigma: f64) -> Self {
        Self {
            kind: SyntheticKind::TwoFeatureBlobs,
            n,
            d: 2,
            class_count: 2,
            noise_sigma,
            informative_indices: vec![0, 1],
            block_width: default_block_width(),
        }
    }

    /// `d` features of which the first `informative` carry the label.
    pub fn planted_signal(n: usize, d: usize, informative: usize, noise_sigma: f64) -> Self {
        Self {
            kind: SyntheticKind::PlantedSignal,
            n,
            d,
            class_count: 2,
            noise_sigma,
            informative_indices: (0..informative).collect(),
            block_width: default_block_width(),
        }
    }

    /// `blocks` blocks of `block_width` features; the first `informative_blocks`
    /// carry the class pattern.
    pub fn concept_blocks(
        n: usize,
        blocks: usize,
        block_width: usize,
        informative_blocks: usize,
        class_count: usize,
        noise_sigma: f64,
    ) -> Self {
        Self {
            kind: SyntheticKind::ConceptBlocks,
            n,
            d: blocks * block_width,
            class_count,
            noise_sigma,
            informative_indices: (0..informative_blocks * block_width).collect(),
            block_width,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 || self.class_count < 2 {
            return Err(Error::invalid("synthetic data needs n > 0, d > 0 and at least 2 classes"));
        }
        if self.n < self.class_count {
            return Err(Error::invalid("fewer samples than classes"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise_sigma must be finite and non-negative"));
        }
        if self.informative_indices.len() > self.d {
            return Err(Error::invalid(format!(
                "{} informative indices do not fit in d = {}",
                self.informative_indices.len(),
                self.d
            )));
        }
        if let Some(&j) = self.informative_indices.iter().find(|&&j| j >= self.d) {
            return Err(Error::invalid(format!("informative index {j} outside [0, {})", self.d)));
        }
        match self.kind {
            SyntheticKind::TwoFeatureBlobs if self.d != 2 || self.class_count != 2 => {
                Err(Error::invalid("two-feature blobs need d = 2 and 2 classes"))
            }
            SyntheticKind::ConceptBlocks if self.block_width == 0 || !self.d.is_multiple_of(self.block_width) => {
                Err(Error::invalid("d must be a positive multiple of block_width"))
            }
            _ => Ok(()),
        }
    }
}

/// Ground truth behind a [`SyntheticKind::ConceptBlocks`] dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConceptTruth {
    pub block_width: usize,
    pub informative_blocks: Vec<bool>,
    /// `concept[sample][block]`: pattern id, unique across blocks.
    pub concept: Vec<Vec<usize>>,
    /// Per-sample strength with which every pattern is expressed.
    pub amplitude: Vec<f64>,
    pub patterns_per_block: usize,
}

impl ConceptTruth {
    pub fn blocks(&self) -> usize {
        self.informative_blocks.len()
    }

    pub fn concept_count(&self) -> usize {
        self.blocks() * self.patterns_per_block
    }

    pub fn concept_block(&self, concept: usize) -> usize {
        concept / self.patterns_per_block
    }
}

fn normal(rng: &mut seed::Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Labels cycle through the classes so every class is present.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<LabeledDataset> {
    match spec.kind {
        SyntheticKind::ConceptBlocks => generate_concept_blocks(spec, seed).map(|(d, _)| d),
        SyntheticKind::TwoFeatureBlobs => {
            spec.validate()?;
            let mut rng = seed::rng(seed);
            let mut samples = Vec::with_capacity(spec.n);
            let mut labels = Vec::with_capacity(spec.n);
            for i in 0..spec.n {
                let c = i % 2;
                let centre = if c == 0 { -1.5 } else { 1.5 };
                samples.push(vec![
                    centre + spec.noise_sigma * normal(&mut rng),
                    centre + spec.noise_sigma * normal(&mut rng),
                ]);
                labels.push(c);
            }
            LabeledDataset::unnamed(samples, labels, 2)
        }
        SyntheticKind::PlantedSignal => {
            spec.validate()?;
            let mut rng = seed::rng(seed);
            let k = spec.informative_indices.len();
            let class_weights: Vec<Vec<f64>> = (0..spec.class_count)
                .map(|_| (0..k).map(|_| normal(&mut rng)).collect())
                .collect();
            let mut samples = Vec::with_capacity(spec.n);
            let mut labels = Vec::with_capacity(spec.n);
            for _ in 0..spec.n {
                let x: Vec<f64> = (0..spec.d).map(|_| normal(&mut rng)).collect();
                let logits: Vec<f64> = class_weights
                    .iter()
                    .map(|w| {
                        let signal: f64 = spec.informative_indices.iter().zip(w).map(|(&j, w)| w * x[j]).sum();
                        signal + spec.noise_sigma * normal(&mut rng)
                    })
                    .collect();
                labels.push(crate::nn::argmax(&logits));
                samples.push(x);
            }
            ensure_all_classes(&mut labels, spec.class_count);
            LabeledDataset::unnamed(samples, labels, spec.class_count)
        }
    }
}

/// Relabels the last rows if some class never occurred, keeping the
/// dataset well-formed on tiny draws.
fn ensure_all_classes(labels: &mut [usize], classes: usize) {
    let mut counts = vec![0usize; classes];
    labels.iter().for_each(|&l| counts[l] += 1);
    for c in 0..classes {
        if counts[c] == 0 {
            if let Some(i) = (0..labels.len()).rev().find(|&i| counts[labels[i]] > 1) {
                counts[labels[i]] -= 1;
                labels[i] = c;
                counts[c] = 1;
            }
        }
    }
}

/// Concept-block data with its ground truth.
///
/// Every block holds one of `class_count` unit-RMS patterns scaled by the
/// sample's amplitude, plus Gaussian noise. Informative blocks show the
/// pattern of the sample's class; the others show a uniformly drawn pattern.
pub fn generate_concept_blocks(spec: &SyntheticSpec, seed: u64) -> Result<(LabeledDataset, ConceptTruth)> {
    if spec.kind != SyntheticKind::ConceptBlocks {
        return Err(Error::invalid("spec is not a concept-block spec"));
    }
    spec.validate()?;
    let mut rng = seed::rng(seed);
    let width = spec.block_width;
    let blocks = spec.d / width;
    let per_block = spec.class_count;
    let informative_blocks: Vec<bool> = (0..blocks)
        .map(|b| spec.informative_indices.iter().any(|&j| j / width == b))
        .collect();
    let patterns: Vec<Vec<Vec<f64>>> = (0..blocks)
        .map(|_| {
            (0..per_block)
                .map(|_| {
                    let p: Vec<f64> = (0..width).map(|_| normal(&mut rng)).collect();
                    let rms = (p.iter().map(|v| v * v).sum::<f64>() / width as f64).sqrt();
                    p.into_iter().map(|v| v / rms).collect()
                })
                .collect()
        })
        .collect();
    let amp = Uniform::new_inclusive(0.5, 2.0);
    let mut samples = Vec::with_capacity(spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    let mut concept = Vec::with_capacity(spec.n);
    let mut amplitude = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let class = i % spec.class_count;
        let a = amp.sample(&mut rng);
        let mut x = Vec::with_capacity(spec.d);
        let mut ids = Vec::with_capacity(blocks);
        for b in 0..blocks {
            let p = if informative_blocks[b] {
                class
            } else {
                rng.gen_range(0..per_block)
            };
            ids.push(b * per_block + p);
            x.extend(patterns[b][p].iter().map(|v| a * v + spec.noise_sigma * normal(&mut rng)));
        }
        samples.push(x);
        labels.push(class);
        concept.push(ids);
        amplitude.push(a);
    }
    let data = LabeledDataset::unnamed(samples, labels, spec.class_count)?;
    let truth = ConceptTruth {
        block_width: width,
        informative_blocks,
        concept,
        amplitude,
        patterns_per_block: per_block,
    };
    Ok((data, truth))
}

/// Per-feature mean and standard deviation fitted on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population standard deviation; zero-variance features use 1.
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(data: &LabeledDataset) -> Self {
        let d = data.feature_count();
        let n = data.len() as f64;
        let mut mean = vec![0.0; d];
        for s in data.samples() {
            mean.iter_mut().zip(s).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for s in data.samples() {
            var.iter_mut().zip(s.iter().zip(&mean)).for_each(|(acc, (v, m))| *acc += (v - m).powi(2));
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, data: &LabeledDataset) -> Result<LabeledDataset> {
        let samples = data
            .samples()
            .iter()
            .map(|s| {
                s.iter()
                    .zip(self.mean.iter().zip(&self.scale))
                    .map(|(v, (m, sd))| (v - m) / sd)
                    .collect()
            })
            .collect();
        LabeledDataset::new(
            samples,
            data.labels().to_vec(),
            data.class_count(),
            data.feature_names().to_vec(),
        )
    }
}

/// Stratified, seeded split. Every class keeps at least one sample on each side.
pub fn split_dataset(data: &LabeledDataset, test_fraction: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid("test fraction must lie in (0, 1)"));
    }
    let mut rng = seed::rng(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut rows) in data.indices_by_class().into_iter().enumerate() {
        if rows.len() < 2 {
            return Err(Error::invalid(format!("class {class} has too few samples to split")));
        }
        rows.shuffle(&mut rng);
        let n_test = ((rows.len() as f64 * test_fraction).round() as usize).clamp(1, rows.len() - 1);
        test.extend_from_slice(&rows[..n_test]);
        train.extend_from_slice(&rows[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((data.select_rows(&train)?, data.select_rows(&test)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvOptions {
    pub label_column: String,
    #[serde(default)]
    pub categorical_columns: Vec<String>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            label_column: "label".into(),
            categorical_columns: Vec::new(),
        }
    }
}

/// Parsed CSV with one-hot groups. `feature_groups` lists, per source column,
/// the encoded feature indices that must stay together.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub data: LabeledDataset,
    pub feature_groups: Vec<Vec<usize>>,
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        location: format!("line {line}"),
        message: message.into(),
    }
}

fn fetch_hint(path: &Path) -> String {
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_lowercase();
    let source = match name.as_str() {
        "diabetes" => "the CDC Diabetes Health Indicators dataset from the UCI repository",
        "phishing" => "the Phishing Websites dataset from the UCI repository",
        "bankmarketing" | "bank" | "bank-additional-full" => "the Bank Marketing dataset from the UCI repository",
        "spambase" => "the Spambase dataset from the UCI repository",
        _ => "the dataset",
    };
    format!("fetch {source}, export it as CSV with a header row and an integer or categorical label column")
}

/// Reads a CSV with a header row. Numeric columns are parsed as-is,
/// `categorical_columns` are one-hot encoded (categories in sorted order).
/// Labels that are all non-negative integers are used directly; any other
/// label values are mapped to indices in sorted order.
pub fn read_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<EncodedDataset> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingDataset {
            path: path.to_path_buf(),
            instructions: fetch_hint(path),
        });
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| parse_error(1, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let label_col = headers
        .iter()
        .position(|h| *h == options.label_column)
        .ok_or_else(|| parse_error(1, format!("missing label column '{}'", options.label_column)))?;
    for c in &options.categorical_columns {
        if !headers.contains(c) {
            return Err(parse_error(1, format!("missing categorical column '{c}'")));
        }
    }

    let mut rows: Vec<Vec<String>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| parse_error(line, e.to_string()))?;
        if record.len() != headers.len() {
            return Err(parse_error(
                line,
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        rows.push(record.iter().map(|f| f.trim().to_string()).collect());
    }
    if rows.is_empty() {
        return Err(parse_error(2, "no data rows"));
    }

    let mut names = Vec::new();
    let mut groups = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (c, header) in headers.iter().enumerate() {
        if c == label_col {
            continue;
        }
        if options.categorical_columns.contains(header) {
            let categories: Vec<String> = rows
                .iter()
                .map(|r| r[c].clone())
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            let start = columns.len();
            for cat in &categories {
                names.push(format!("{header}={cat}"));
                columns.push(rows.iter().map(|r| if r[c] == *cat { 1.0 } else { 0.0 }).collect());
            }
            groups.push((start..columns.len()).collect());
        } else {
            let values = rows
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    r[c].parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| parse_error(i + 2, format!("column '{header}': non-numeric value '{}'", r[c])))
                })
                .collect::<Result<Vec<_>>>()?;
            groups.push(vec![columns.len()]);
            names.push(header.clone());
            columns.push(values);
        }
    }

    let raw_labels: Vec<&str> = rows.iter().map(|r| r[label_col].as_str()).collect();
    let (labels, class_count) = encode_labels(&raw_labels)?;
    let samples = (0..rows.len()).map(|i| columns.iter().map(|col| col[i]).collect()).collect();
    let data = LabeledDataset::new(samples, labels, class_count, names).map_err(|e| match e {
        Error::InvalidInput(m) => parse_error(0, m),
        other => other,
    })?;
    Ok(EncodedDataset {
        data,
        feature_groups: groups,
    })
}

fn encode_labels(raw: &[&str]) -> Result<(Vec<usize>, usize)> {
    if let Ok(ints) = raw.iter().map(|s| s.parse::<usize>()).collect::<std::result::Result<Vec<_>, _>>() {
        let classes = ints.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; classes];
        ints.iter().for_each(|&l| seen[l] = true);
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(Error::Parse {
                location: "label column".into(),
                message: format!("class {c} has no samples"),
            });
        }
        return Ok((ints, classes));
    }
    let numeric: Option<Vec<f64>> = raw.iter().map(|s| s.parse::<f64>().ok()).collect();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    if let Some(values) = numeric {
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        let labels = values
            .iter()
            .map(|v| sorted.iter().position(|s| s == v).expect("present"))
            .collect();
        return Ok((labels, sorted.len()));
    }
    raw.iter().for_each(|s| {
        index.insert(s.to_string(), 0);
    });
    for (i, v) in index.values_mut().enumerate() {
        *v = i;
    }
    Ok((raw.iter().map(|s| index[*s]).collect(), index.len()))
}

/// Train/test split with z-scoring fitted on the training side.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub feature_groups: Vec<Vec<usize>>,
    pub standardizer: Standardizer,
}

pub fn prepare_split(
    data: &LabeledDataset,
    feature_groups: Vec<Vec<usize>>,
    test_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    let (train, test) = split_dataset(data, test_fraction, seed)?;
    let standardizer = Standardizer::fit(&train);
    Ok(DatasetSplit {
        train: standardizer.apply(&train)?,
        test: standardizer.apply(&test)?,
        feature_groups,
        standardizer,
    })
}

/// Reads, encodes, splits and standardises a CSV dataset.
pub fn load_dataset(path: impl AsRef<Path>, options: &CsvOptions, test_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    let encoded = read_csv(path, options)?;
    prepare_split(&encoded.data, encoded.feature_groups, test_fraction, seed)
}

/// Writes features plus a trailing `label` column.
pub fn write_csv(data: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let to_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut writer = csv::Writer::from_path(path).map_err(to_err)?;
    let mut header: Vec<String> = data.feature_names().to_vec();
    header.push("label".into());
    writer.write_record(&header).map_err(to_err)?;
    for (s, l) in data.samples().iter().zip(data.labels()) {
        let mut row: Vec<String> = s.iter().map(|v| v.to_string()).collect();
        row.push(l.to_string());
        writer.write_record(&row).map_err(to_err)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}
