//! Feature datasets: the JSONL interchange format, class statistics,
//! stratified splits and the synthetic modality-bias generator.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FEATURE_SCHEMA: &str = "cfmsa-features/1";

/// Label order used throughout: positive, neutral, negative.
pub const DEFAULT_LABELS: [&str; 3] = ["positive", "neutral", "negative"];

/// Processed MVSA-Single class counts (positive, neutral, negative).
pub const MVSA_SINGLE_COUNTS: [usize; 3] = [2683, 470, 1358];
/// Processed MVSA-Multiple class counts (positive, neutral, negative).
pub const MVSA_MULTIPLE_COUNTS: [usize; 3] = [9327, 1091, 6359];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub text: Option<Vec<f64>>,
    pub image: Option<Vec<f64>>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub d_t: usize,
    pub d_i: usize,
    pub labels: Vec<String>,
}

impl Header {
    pub fn new(d_t: usize, d_i: usize) -> Self {
        Header { d_t, d_i, labels: DEFAULT_LABELS.iter().map(|s| s.to_string()).collect() }
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }

    pub fn check_sample(&self, s: &Sample) -> Result<()> {
        if s.text.is_none() && s.image.is_none() {
            return Err(Error::InvalidInput(format!("sample `{}`: no modality present", s.id)));
        }
        if s.label >= self.num_classes() {
            return Err(Error::LabelOutOfRange { label: s.label, num_classes: self.num_classes() });
        }
        for (feat, dim, what) in [(&s.text, self.d_t, "text features"), (&s.image, self.d_i, "image features")] {
            if let Some(v) = feat {
                if v.len() != dim {
                    return Err(Error::DimMismatch { what, expected: dim, got: v.len() });
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite(what));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: Header,
    pub samples: Vec<Sample>,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    schema: String,
    d_t: usize,
    d_i: usize,
    labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    id: String,
    text: Option<Vec<f64>>,
    image: Option<Vec<f64>>,
    label: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses one sample record against `header`.
pub fn parse_record(line: &str, header: &Header) -> Result<Sample> {
    let rec: RecordLine = serde_json::from_str(line)?;
    let label = header
        .label_index(&rec.label)
        .ok_or_else(|| Error::InvalidInput(format!("unknown label `{}`", rec.label)))?;
    let s = Sample { id: rec.id, text: rec.text, image: rec.image, label };
    header.check_sample(&s)?;
    Ok(s)
}

fn record_line(s: &Sample, header: &Header) -> Result<String> {
    let rec = RecordLine {
        id: s.id.clone(),
        text: s.text.clone(),
        image: s.image.clone(),
        label: header.labels[s.label].clone(),
    };
    Ok(serde_json::to_string(&rec)?)
}

impl Dataset {
    pub fn new(header: Header, samples: Vec<Sample>, source: &str) -> Result<Self> {
        for s in &samples {
            header.check_sample(s)?;
        }
        let mut d = Dataset {
            header,
            samples,
            provenance: Provenance { source: source.to_string(), digest: String::new() },
        };
        d.provenance.digest = sha256_hex(d.to_jsonl()?.as_bytes());
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.header.num_classes()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Serializes to the feature JSONL format (LF line endings, trailing LF).
    pub fn to_jsonl(&self) -> Result<String> {
        let header = HeaderLine {
            schema: FEATURE_SCHEMA.to_string(),
            d_t: self.header.d_t,
            d_i: self.header.d_i,
            labels: self.header.labels.clone(),
        };
        let mut out = serde_json::to_string(&header)?;
        out.push('\n');
        for s in &self.samples {
            out.push_str(&record_line(s, &self.header)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        w.write_all(self.to_jsonl()?.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn parse_jsonl(text: &str, path: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse { path: path.to_path_buf(), line, message };
        let mut lines = text.split('\n').enumerate();
        let (_, first) = lines.next().ok_or_else(|| parse_err(1, "missing header".into()))?;
        let hl: HeaderLine =
            serde_json::from_str(first.trim_end_matches('\r')).map_err(|e| parse_err(1, format!("bad header: {e}")))?;
        if hl.schema != FEATURE_SCHEMA {
            return Err(parse_err(1, format!("unsupported schema `{}`", hl.schema)));
        }
        if hl.labels.is_empty() {
            return Err(parse_err(1, "header declares no labels".into()));
        }
        let header = Header { d_t: hl.d_t, d_i: hl.d_i, labels: hl.labels };
        let mut samples = Vec::new();
        for (idx, line) in lines {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let s = parse_record(line, &header).map_err(|e| parse_err(idx + 1, e.to_string()))?;
            samples.push(s);
        }
        Ok(Dataset {
            header,
            samples,
            provenance: Provenance {
                source: path.display().to_string(),
                digest: sha256_hex(text.as_bytes()),
            },
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::parse_jsonl(&text, path)
    }
}

pub fn load_features(path: impl AsRef<Path>) -> Result<Dataset> {
    Dataset::load(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub counts: Vec<usize>,
    pub frequencies: Vec<f64>,
    /// Inverse-frequency weights `total / count`; empty classes are treated
    /// as having a single sample so the weight stays finite.
    pub weights: Vec<f64>,
}

pub fn stats_from_counts(counts: &[usize]) -> Result<ClassStats> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyDataset);
    }
    let t = total as f64;
    Ok(ClassStats {
        counts: counts.to_vec(),
        frequencies: counts.iter().map(|&c| c as f64 / t).collect(),
        weights: counts.iter().map(|&c| t / c.max(1) as f64).collect(),
    })
}

pub fn class_stats(d: &Dataset) -> Result<ClassStats> {
    let mut counts = vec![0usize; d.num_classes()];
    for s in &d.samples {
        counts[s.label] += 1;
    }
    stats_from_counts(&counts)
}

/// Stratified seeded split. Each class is shuffled and cut at the cumulative
/// fractions; every resulting split is then shuffled.
pub fn split(d: &Dataset, fractions: &[f64], seed: u64) -> Result<Vec<Dataset>> {
    if fractions.is_empty() || fractions.iter().any(|f| !(*f >= 0.0)) {
        return Err(Error::config("fractions", "fractions must be non-negative"));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::config("fractions", format!("fractions sum to {sum}, expected 1")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: Vec<Vec<Sample>> = vec![Vec::new(); fractions.len()];
    for class in 0..d.num_classes() {
        let mut members: Vec<&Sample> = d.samples.iter().filter(|s| s.label == class).collect();
        members.shuffle(&mut rng);
        let n = members.len();
        let mut start = 0;
        let mut cum = 0.0;
        for (j, f) in fractions.iter().enumerate() {
            cum += f;
            let end = if j + 1 == fractions.len() { n } else { ((cum * n as f64).round() as usize).min(n) };
            parts[j].extend(members[start..end.max(start)].iter().map(|s| (*s).clone()));
            start = end.max(start);
        }
    }
    parts
        .into_iter()
        .enumerate()
        .map(|(j, mut samples)| {
            samples.shuffle(&mut rng);
            Dataset::new(d.header.clone(), samples, &format!("{}#split{j}", d.provenance.source))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasModality {
    Text,
    Image,
}

/// Generator settings for the synthetic modality-bias benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub d_t: usize,
    pub d_i: usize,
    pub class_priors: Vec<f64>,
    pub signal_scale: f64,
    pub noise_scale: f64,
    pub bias_dims: usize,
    /// Probability that the spurious cue names the true class in train/val.
    pub bias_strength: f64,
    /// Makes the cue uniformly random (label-independent) in the test split.
    pub bias_flip_at_test: bool,
    pub bias_modality: BiasModality,
    pub seed: u64,
}

/// Relative strength of the genuine signal in the biased modality.
pub const BIASED_SIGNAL_FACTOR: f64 = 0.3;

impl Default for SyntheticConfig {
    fn default() -> Self {
        let stats = stats_from_counts(&MVSA_SINGLE_COUNTS).expect("nonzero counts");
        SyntheticConfig {
            n_train: 3000,
            n_val: 500,
            n_test: 1000,
            d_t: 16,
            d_i: 16,
            class_priors: stats.frequencies,
            signal_scale: 1.0,
            noise_scale: 0.5,
            bias_dims: 4,
            bias_strength: 0.9,
            bias_flip_at_test: true,
            bias_modality: BiasModality::Text,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn num_classes(&self) -> usize {
        self.class_priors.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_classes();
        if k < 2 {
            return Err(Error::config("class_priors", "need at least two classes"));
        }
        if k > DEFAULT_LABELS.len() {
            return Err(Error::config("class_priors", format!("at most {} classes supported", DEFAULT_LABELS.len())));
        }
        if self.class_priors.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::config("class_priors", "priors must be non-negative"));
        }
        let sum: f64 = self.class_priors.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::config("class_priors", format!("priors sum to {sum}, expected 1")));
        }
        if !(0.0..=1.0).contains(&self.bias_strength) {
            return Err(Error::config(
                "bias_strength",
                format!("must lie in [0, 1], got {}", self.bias_strength),
            ));
        }
        if self.n_train == 0 {
            return Err(Error::config("n_train", "must be positive"));
        }
        if self.d_t == 0 || self.d_i == 0 {
            return Err(Error::config("d_t/d_i", "feature dims must be positive"));
        }
        let biased_dim = match self.bias_modality {
            BiasModality::Text => self.d_t,
            BiasModality::Image => self.d_i,
        };
        if self.bias_dims < k || self.bias_dims >= biased_dim {
            return Err(Error::config(
                "bias_dims",
                format!("must be in [{k}, {biased_dim}) to hold a one-hot cue plus signal dims"),
            ));
        }
        if !(self.signal_scale.is_finite() && self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::config("signal_scale/noise_scale", "must be finite, noise non-negative"));
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

fn unit_prototypes(rng: &mut ChaCha8Rng, k: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect()
}

fn sample_categorical(rng: &mut ChaCha8Rng, priors: &[f64]) -> usize {
    let u: f64 = rng.random::<f64>() * priors.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, p) in priors.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    priors.len() - 1
}

#[derive(Clone, Copy, PartialEq)]
enum CueRule {
    /// Cue equals the label with probability `rho`, otherwise a uniformly
    /// chosen different class.
    Correlated(f64),
    Independent,
}

struct Generator<'a> {
    cfg: &'a SyntheticConfig,
    rng: ChaCha8Rng,
    informative: Vec<Vec<f64>>,
    biased: Vec<Vec<f64>>,
}

impl Generator<'_> {
    fn cue(&mut self, y: usize, rule: CueRule) -> usize {
        let k = self.cfg.num_classes();
        match rule {
            CueRule::Independent => self.rng.random_range(0..k),
            CueRule::Correlated(rho) => {
                if self.rng.random::<f64>() < rho {
                    y
                } else {
                    let other = self.rng.random_range(0..k - 1);
                    if other >= y { other + 1 } else { other }
                }
            }
        }
    }

    fn noisy(&mut self, proto: &[f64], scale: f64) -> Vec<f64> {
        let noise = self.cfg.noise_scale;
        proto
            .iter()
            .map(|&m| {
                let n: f64 = StandardNormal.sample(&mut self.rng);
                scale * m + noise * n
            })
            .collect()
    }

    fn sample(&mut self, id: String, rule: CueRule) -> Sample {
        let cfg = self.cfg;
        let y = sample_categorical(&mut self.rng, &cfg.class_priors);
        let strong = self.informative[y].clone();
        let weak = self.biased[y].clone();
        let informative = self.noisy(&strong, cfg.signal_scale);
        let mut biased = self.noisy(&weak, cfg.signal_scale * BIASED_SIGNAL_FACTOR);
        let cue = self.cue(y, rule);
        let mut one_hot = vec![0.0; cfg.bias_dims];
        one_hot[cue] = cfg.signal_scale;
        biased.extend(one_hot);
        let (text, image) = match cfg.bias_modality {
            BiasModality::Text => (biased, informative),
            BiasModality::Image => (informative, biased),
        };
        Sample { id, text: Some(text), image: Some(image), label: y }
    }
}

/// Generates `(train, val, test)`.
///
/// The unbiased modality carries `signal_scale · μ_y + noise`. The biased
/// modality carries a weak copy of its own class prototype (scaled by
/// [`BIASED_SIGNAL_FACTOR`]) followed by `bias_dims` coordinates holding a
/// one-hot spurious cue.
pub fn gen_synthetic(cfg: &SyntheticConfig) -> Result<(Dataset, Dataset, Dataset)> {
    cfg.validate()?;
    let k = cfg.num_classes();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (informative_dim, biased_dim) = match cfg.bias_modality {
        BiasModality::Text => (cfg.d_i, cfg.d_t - cfg.bias_dims),
        BiasModality::Image => (cfg.d_t, cfg.d_i - cfg.bias_dims),
    };
    let informative = unit_prototypes(&mut rng, k, informative_dim);
    let biased = unit_prototypes(&mut rng, k, biased_dim);
    let mut g = Generator { cfg, rng, informative, biased };

    let header = Header {
        d_t: cfg.d_t,
        d_i: cfg.d_i,
        labels: DEFAULT_LABELS[..k].iter().map(|s| s.to_string()).collect(),
    };
    let correlated = CueRule::Correlated(cfg.bias_strength);
    let test_rule = if cfg.bias_flip_at_test { CueRule::Independent } else { correlated };
    let digest = cfg.digest();
    let mut make = |name: &str, n: usize, rule: CueRule| -> Result<Dataset> {
        let samples = (0..n).map(|i| g.sample(format!("{name}-{i:06}"), rule)).collect();
        let mut d = Dataset::new(header.clone(), samples, &format!("synthetic:{name}"))?;
        d.provenance.digest = format!("{digest}:{name}");
        Ok(d)
    };
    let train = make("train", cfg.n_train, correlated)?;
    let val = make("val", cfg.n_val, correlated)?;
    let test = make("test", cfg.n_test, test_rule)?;
    Ok((train, val, test))
}
