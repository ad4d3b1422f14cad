//! Masked-score assembly, SUM fusion, causal effects and debiased inference.
//!
//! When a modality is withheld its branch score is replaced by a constant
//! logit vector: `c1` for text, `c2` for image, and for the joint branch `c3`
//! (text kept, image withheld) or `c4` (image kept, text withheld).

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{argmax, log_sigmoid_scalar};

/// Initialization / learnability scheme for the masked-score constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CMode {
    /// Seeded standard-normal entries, frozen.
    Random,
    /// Log class frequencies of the training split, frozen.
    Prior,
    /// One learnable scalar shared by every constant and class.
    Uniform,
    /// Four learnable per-class vectors.
    Nonuniform,
}

impl CMode {
    pub const ALL: [CMode; 4] = [CMode::Random, CMode::Prior, CMode::Uniform, CMode::Nonuniform];

    pub fn is_learnable(self) -> bool {
        matches!(self, CMode::Uniform | CMode::Nonuniform)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CMode::Random => "random",
            CMode::Prior => "prior",
            CMode::Uniform => "uniform",
            CMode::Nonuniform => "nonuniform",
        }
    }
}

impl fmt::Display for CMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config("c_mode", format!("unknown c mode `{s}`")))
    }
}

/// The masked-score constants `c1..c4`.
///
/// `values` holds a single scalar in uniform mode and the four per-class
/// vectors back to back otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CParams {
    pub mode: CMode,
    pub num_classes: usize,
    pub values: Vec<f64>,
}

/// Floor applied to class frequencies before taking logs in prior mode.
pub const PRIOR_FREQ_FLOOR: f64 = 1e-12;

impl CParams {
    pub fn random(num_classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..4 * num_classes).map(|_| StandardNormal.sample(&mut rng)).collect();
        CParams { mode: CMode::Random, num_classes, values }
    }

    /// Every constant set to the log of the given class frequencies.
    pub fn prior(frequencies: &[f64]) -> Self {
        let logs: Vec<f64> = frequencies.iter().map(|f| f.max(PRIOR_FREQ_FLOOR).ln()).collect();
        let values = logs.iter().copied().cycle().take(4 * logs.len()).collect();
        CParams { mode: CMode::Prior, num_classes: frequencies.len(), values }
    }

    pub fn uniform(num_classes: usize, value: f64) -> Self {
        CParams { mode: CMode::Uniform, num_classes, values: vec![value] }
    }

    pub fn nonuniform(num_classes: usize) -> Self {
        CParams { mode: CMode::Nonuniform, num_classes, values: vec![0.0; 4 * num_classes] }
    }

    pub fn from_vectors(c: [Vec<f64>; 4]) -> Result<Self> {
        let k = c[0].len();
        if c.iter().any(|v| v.len() != k) {
            return Err(Error::InvalidInput("c vectors must share a length".into()));
        }
        Ok(CParams { mode: CMode::Nonuniform, num_classes: k, values: c.concat() })
    }

    /// Builds the constants for `mode`; `frequencies` is required for prior mode.
    pub fn for_mode(mode: CMode, num_classes: usize, seed: u64, frequencies: Option<&[f64]>) -> Result<Self> {
        Ok(match mode {
            CMode::Random => Self::random(num_classes, seed),
            CMode::Prior => {
                let f = frequencies
                    .ok_or_else(|| Error::config("c_mode", "prior mode needs class frequencies"))?;
                if f.len() != num_classes {
                    return Err(Error::DimMismatch {
                        what: "prior class frequencies",
                        expected: num_classes,
                        got: f.len(),
                    });
                }
                Self::prior(f)
            }
            CMode::Uniform => Self::uniform(num_classes, 0.0),
            CMode::Nonuniform => Self::nonuniform(num_classes),
        })
    }

    pub fn check_shape(&self) -> Result<()> {
        let want = if self.mode == CMode::Uniform { 1 } else { 4 * self.num_classes };
        if self.values.len() != want {
            return Err(Error::DimMismatch {
                what: "c parameters",
                expected: want,
                got: self.values.len(),
            });
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("c parameters"));
        }
        Ok(())
    }

    /// Expands the storage into the four per-class vectors `[c1, c2, c3, c4]`.
    pub fn resolve(&self) -> [Vec<f64>; 4] {
        let k = self.num_classes;
        if self.mode == CMode::Uniform {
            let v = vec![self.values[0]; k];
            [v.clone(), v.clone(), v.clone(), v]
        } else {
            std::array::from_fn(|j| self.values[j * k..(j + 1) * k].to_vec())
        }
    }

    /// Folds per-vector gradients back onto the stored parameters.
    pub fn reduce_grad(&self, d_c: &[Vec<f64>; 4]) -> Vec<f64> {
        match self.mode {
            CMode::Uniform => vec![d_c.iter().flatten().sum()],
            _ => d_c.concat(),
        }
    }
}

/// Inference rule applied to a [`ScoreBundle`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InferenceMode {
    #[serde(rename = "te")]
    TeBaseline,
    #[serde(rename = "tie-text")]
    TieText,
    #[serde(rename = "tie-image")]
    TieImage,
    #[serde(rename = "tie-joint")]
    TieJoint,
}

impl InferenceMode {
    pub const ALL: [InferenceMode; 4] = [
        InferenceMode::TeBaseline,
        InferenceMode::TieText,
        InferenceMode::TieImage,
        InferenceMode::TieJoint,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InferenceMode::TeBaseline => "te",
            InferenceMode::TieText => "tie-text",
            InferenceMode::TieImage => "tie-image",
            InferenceMode::TieJoint => "tie-joint",
        }
    }

    /// Human-readable condition, as used in comparison tables.
    pub fn label(self) -> &'static str {
        match self {
            InferenceMode::TeBaseline => "baseline (TE)",
            InferenceMode::TieText => "removing text bias",
            InferenceMode::TieImage => "removing image bias",
            InferenceMode::TieJoint => "removing text-image bias",
        }
    }

    /// Parses a comma-separated list such as `te,tie-text`; `all` expands to
    /// every mode.
    pub fn parse_list(s: &str) -> Result<Vec<InferenceMode>> {
        if s.trim() == "all" {
            return Ok(Self::ALL.to_vec());
        }
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let m: InferenceMode = part.parse()?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        if out.is_empty() {
            return Err(Error::config("modes", "no inference modes given"));
        }
        Ok(out)
    }
}

impl fmt::Display for InferenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InferenceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config("modes", format!("unknown inference mode `{s}`")))
    }
}

/// Per-sample branch scores, the constants they were assembled with, and the
/// three fused score vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreBundle {
    /// Text branch score, or `c1` when text was absent.
    pub z_t: Vec<f64>,
    /// Image branch score, or `c2` when the image was absent.
    pub z_i: Vec<f64>,
    /// Joint branch score, or the matching blocked constant.
    pub z_k: Vec<f64>,
    pub c: [Vec<f64>; 4],
    pub text_present: bool,
    pub image_present: bool,
    /// `h(z_t, z_i, z_k)`
    pub fused_full: Vec<f64>,
    /// `h(z_t, c2, c3)`: image and mediator blocked.
    pub fused_text_masked: Vec<f64>,
    /// `h(c1, z_i, c4)`: text and mediator blocked.
    pub fused_image_masked: Vec<f64>,
}

fn check_len(what: &'static str, v: &[f64], k: usize) -> Result<()> {
    if v.len() != k {
        return Err(Error::DimMismatch { what, expected: k, got: v.len() });
    }
    Ok(())
}

/// SUM fusion: `log σ(z_t + z_i + z_k)` elementwise.
pub fn fuse(z_t: &[f64], z_i: &[f64], z_k: &[f64]) -> Result<Vec<f64>> {
    check_len("fuse z_i", z_i, z_t.len())?;
    check_len("fuse z_k", z_k, z_t.len())?;
    if z_t.iter().chain(z_i).chain(z_k).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("fuse input"));
    }
    Ok(fuse_unchecked(z_t, z_i, z_k))
}

pub(crate) fn fuse_unchecked(a: &[f64], b: &[f64], c: &[f64]) -> Vec<f64> {
    a.iter()
        .zip(b)
        .zip(c)
        .map(|((x, y), z)| log_sigmoid_scalar(x + y + z))
        .collect()
}

/// Assembles a bundle from the scores of a sample with both modalities.
pub fn assemble(z_t: &[f64], z_i: &[f64], z_k: &[f64], c: &CParams) -> Result<ScoreBundle> {
    assemble_partial(Some(z_t), Some(z_i), Some(z_k), c)
}

/// Assembles a bundle, substituting constants for absent modalities.
///
/// `z_k` is only consulted when both modalities are present.
pub fn assemble_partial(
    z_t: Option<&[f64]>,
    z_i: Option<&[f64]>,
    z_k: Option<&[f64]>,
    c: &CParams,
) -> Result<ScoreBundle> {
    let k = c.num_classes;
    let resolved = c.resolve();
    let [c1, c2, c3, c4] = &resolved;
    let (text_present, image_present) = (z_t.is_some(), z_i.is_some());
    if !text_present && !image_present {
        return Err(Error::InvalidInput("no modality present".into()));
    }
    let z_t = z_t.map_or_else(|| c1.clone(), <[f64]>::to_vec);
    let z_i = z_i.map_or_else(|| c2.clone(), <[f64]>::to_vec);
    let z_k = match (text_present, image_present) {
        (true, true) => z_k
            .ok_or_else(|| Error::InvalidInput("joint score missing for a full sample".into()))?
            .to_vec(),
        (true, false) => c3.clone(),
        (false, true) => c4.clone(),
        (false, false) => unreachable!(),
    };
    check_len("z_t", &z_t, k)?;
    check_len("z_i", &z_i, k)?;
    check_len("z_k", &z_k, k)?;
    if z_t.iter().chain(&z_i).chain(&z_k).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("branch scores"));
    }
    let fused_full = fuse_unchecked(&z_t, &z_i, &z_k);
    let fused_text_masked = fuse_unchecked(&z_t, c2, c3);
    let fused_image_masked = fuse_unchecked(c1, &z_i, c4);
    Ok(ScoreBundle {
        z_t,
        z_i,
        z_k,
        c: resolved,
        text_present,
        image_present,
        fused_full,
        fused_text_masked,
        fused_image_masked,
    })
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

impl ScoreBundle {
    pub fn num_classes(&self) -> usize {
        self.fused_full.len()
    }

    /// All-masked reference `h(c1, c2, c3)`.
    pub fn all_masked(&self) -> Vec<f64> {
        fuse_unchecked(&self.c[0], &self.c[1], &self.c[2])
    }

    /// Natural direct effect of text: `h(z_t, c2, c3) − h(c1, c2, c3)`.
    pub fn nde_text(&self) -> Vec<f64> {
        sub(&self.fused_text_masked, &self.all_masked())
    }

    /// Natural direct effect of the image: `h(c1, z_i, c4) − h(c1, c2, c3)`.
    pub fn nde_image(&self) -> Vec<f64> {
        sub(&self.fused_image_masked, &self.all_masked())
    }

    fn both_present(&self) -> bool {
        self.text_present && self.image_present
    }

    /// Score vector that `mode` takes the argmax of.
    pub fn mode_scores(&self, mode: InferenceMode) -> Result<Vec<f64>> {
        if mode != InferenceMode::TeBaseline && !self.both_present() {
            return Err(Error::ModeUnavailable(mode));
        }
        Ok(match mode {
            InferenceMode::TeBaseline => self.fused_full.clone(),
            InferenceMode::TieText => tie_text(self),
            InferenceMode::TieImage => tie_image(self),
            InferenceMode::TieJoint => tie_joint(self),
        })
    }
}

/// `TE = h(z_t, z_i, z_k) − h(c1, c2, c3)`.
pub fn total_effect(b: &ScoreBundle) -> Vec<f64> {
    sub(&b.fused_full, &b.all_masked())
}

/// Text-debiased effect `h(z_t, z_i, z_k) − h(z_t, c2, c3)`.
pub fn tie_text(b: &ScoreBundle) -> Vec<f64> {
    sub(&b.fused_full, &b.fused_text_masked)
}

/// Image-debiased effect `h(z_t, z_i, z_k) − h(c1, z_i, c4)`.
pub fn tie_image(b: &ScoreBundle) -> Vec<f64> {
    sub(&b.fused_full, &b.fused_image_masked)
}

/// Jointly debiased effect `2·h(z_t, z_i, z_k) − h(z_t, c2, c3) − h(c1, z_i, c4)`.
pub fn tie_joint(b: &ScoreBundle) -> Vec<f64> {
    b.fused_full
        .iter()
        .zip(&b.fused_text_masked)
        .zip(&b.fused_image_masked)
        .map(|((f, t), i)| 2.0 * f - t - i)
        .collect()
}

/// Predicted class under `mode`; ties go to the lowest class index.
pub fn predict(b: &ScoreBundle, mode: InferenceMode) -> Result<usize> {
    Ok(argmax(&b.mode_scores(mode)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    const LN2: f64 = std::f64::consts::LN_2;

    fn random_vec(rng: &mut ChaCha8Rng, k: usize, scale: f64) -> Vec<f64> {
        (0..k).map(|_| rng.random_range(-scale..scale)).collect()
    }

    fn random_bundle(rng: &mut ChaCha8Rng) -> ScoreBundle {
        let c = CParams::from_vectors(std::array::from_fn(|_| random_vec(rng, 3, 3.0))).unwrap();
        assemble(
            &random_vec(rng, 3, 5.0),
            &random_vec(rng, 3, 5.0),
            &random_vec(rng, 3, 5.0),
            &c,
        )
        .unwrap()
    }

    #[test]
    fn fuse_examples() {
        let z = fuse(&[0.0; 3], &[0.0; 3], &[0.0; 3]).unwrap();
        assert!(z.iter().all(|&v| (v + LN2).abs() < 1e-15));

        // σ(2) = 1/(1+e^-2) = 0.880797...
        let z = fuse(&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]).unwrap();
        let want = (1.0 / (1.0 + (-2f64).exp())).ln();
        assert!((z[0] - want).abs() < 1e-15 && (z[1] - want).abs() < 1e-15);
        assert!((want + 0.126928).abs() < 1e-6);

        assert!(fuse(&[0.0; 3], &[0.0; 2], &[0.0; 3]).is_err());
    }

    #[test]
    fn zero_constants_and_scores() {
        let b = assemble(&[0.0; 3], &[0.0; 3], &[0.0; 3], &CParams::uniform(3, 0.0)).unwrap();
        for v in [&b.fused_full, &b.fused_text_masked, &b.fused_image_masked] {
            assert!(v.iter().all(|&x| (x + LN2).abs() < 1e-15));
        }
    }

    #[test]
    fn text_masked_ignores_image_and_joint() {
        let c = CParams::from_vectors([vec![0.1; 3], vec![-0.3; 3], vec![0.7; 3], vec![0.2; 3]]).unwrap();
        let a = assemble(&[1.0, 2.0, 3.0], &[0.5, 0.5, 0.5], &[1.0, 0.0, -1.0], &c).unwrap();
        let b = assemble(&[1.0, 2.0, 3.0], &[9.0, -4.0, 2.0], &[-3.0, 8.0, 0.0], &c).unwrap();
        assert_eq!(a.fused_text_masked, b.fused_text_masked);
        let d = assemble(&[-7.0, 0.0, 4.0], &[0.5, 0.5, 0.5], &[5.0, 5.0, 5.0], &c).unwrap();
        assert_eq!(a.fused_image_masked, d.fused_image_masked);
    }

    #[test]
    fn prior_constants_from_counts() {
        let counts = [2683.0, 470.0, 1358.0];
        let total: f64 = counts.iter().sum();
        assert_eq!(total, 4511.0);
        let freqs: Vec<f64> = counts.iter().map(|c| c / total).collect();
        for (f, want) in freqs.iter().zip([0.594769, 0.104190, 0.301042]) {
            assert!((f - want).abs() < 1e-6);
        }
        let c = CParams::prior(&freqs);
        for v in c.resolve() {
            for (x, f) in v.iter().zip(&freqs) {
                assert_eq!(*x, f.ln());
            }
        }
    }

    #[test]
    fn total_effect_vanishes_when_scores_equal_constants() {
        let c = CParams::from_vectors([vec![0.3, -0.1], vec![1.2, 0.4], vec![-0.5, 0.9], vec![0.0, 2.0]]).unwrap();
        let [c1, c2, c3, _] = c.resolve();
        let b = assemble(&c1, &c2, &c3, &c).unwrap();
        assert!(total_effect(&b).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn effects_match_fuse_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let b = random_bundle(&mut rng);
            let [c1, c2, c3, c4] = b.c.clone();
            let full = fuse(&b.z_t, &b.z_i, &b.z_k).unwrap();
            let tm = fuse(&b.z_t, &c2, &c3).unwrap();
            let im = fuse(&c1, &b.z_i, &c4).unwrap();
            let reference = fuse(&c1, &c2, &c3).unwrap();
            for y in 0..3 {
                assert!((total_effect(&b)[y] - (full[y] - reference[y])).abs() < 1e-12);
                assert!((tie_text(&b)[y] - (full[y] - tm[y])).abs() < 1e-12);
                assert!((tie_image(&b)[y] - (full[y] - im[y])).abs() < 1e-12);
                assert!((tie_joint(&b)[y] - (2.0 * full[y] - tm[y] - im[y])).abs() < 1e-12);
                let te_minus_nde = total_effect(&b)[y] - b.nde_text()[y];
                assert!((te_minus_nde - tie_text(&b)[y]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tie_image_is_mirror_of_tie_text() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let b = random_bundle(&mut rng);
            let [c1, c2, c3, c4] = b.c.clone();
            let swapped_c = CParams::from_vectors([c2, c1, c4, c3]).unwrap();
            let swapped = assemble(&b.z_i, &b.z_t, &b.z_k, &swapped_c).unwrap();
            let lhs = tie_image(&b);
            let rhs = tie_text(&swapped);
            for (x, y) in lhs.iter().zip(&rhs) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_equal_fusions_give_zero_effects() {
        let c = CParams::uniform(3, 0.0);
        // z_i = c2 and z_k = c3 makes full == text-masked
        let b = assemble(&[1.0, -2.0, 0.5], &[0.0; 3], &[0.0; 3], &c).unwrap();
        assert!(tie_text(&b).iter().all(|&v| v == 0.0));
        let b = assemble(&[0.0; 3], &[0.4, 0.1, -3.0], &[0.0; 3], &c).unwrap();
        assert!(tie_image(&b).iter().all(|&v| v == 0.0));
        let b = assemble(&[0.0; 3], &[0.0; 3], &[0.0; 3], &c).unwrap();
        assert!(tie_joint(&b).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn class_uniform_text_shift_keeps_argmax() {
        let c = CParams::uniform(3, -0.4);
        let z_i = [0.3, 1.1, -0.2];
        let z_k = [0.5, -0.5, 0.9];
        let a = assemble(&[0.2; 3], &z_i, &z_k, &c).unwrap();
        let b = assemble(&[2.7; 3], &z_i, &z_k, &c).unwrap();
        assert_ne!(tie_text(&a), tie_text(&b));
        assert_eq!(
            predict(&a, InferenceMode::TieText).unwrap(),
            predict(&a, InferenceMode::TeBaseline).unwrap()
        );
        assert_eq!(
            predict(&b, InferenceMode::TieText).unwrap(),
            predict(&b, InferenceMode::TeBaseline).unwrap()
        );
    }

    #[test]
    fn predict_examples() {
        let c = CParams::uniform(3, 0.0);
        let b = assemble(&[3.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0; 3], &c).unwrap();
        assert_eq!(predict(&b, InferenceMode::TeBaseline).unwrap(), 0);

        // biased text flips the baseline; removing its direct effect recovers class 1
        let b = assemble(&[4.0, 0.0, 0.0], &[0.0, 2.0, 0.0], &[0.0, 2.0, 0.0], &c).unwrap();
        // full: logσ([4,4,0]) -> tie at 0/1, lowest index wins
        // text-masked: logσ([4,0,0]); tie_text = [0, logσ(4)-logσ(0), 0]
        assert_eq!(predict(&b, InferenceMode::TeBaseline).unwrap(), 0);
        assert_eq!(predict(&b, InferenceMode::TieText).unwrap(), 1);
        let t = tie_text(&b);
        assert_eq!(t[0], 0.0);
        assert!((t[1] - (log_sigmoid_scalar(4.0) + LN2)).abs() < 1e-15);
    }

    #[test]
    fn absent_modalities_use_constants() {
        let c = CParams::from_vectors([vec![1.0; 2], vec![2.0; 2], vec![3.0; 2], vec![4.0; 2]]).unwrap();
        let b = assemble_partial(Some(&[0.5, 0.5]), None, None, &c).unwrap();
        assert_eq!(b.z_i, vec![2.0; 2]);
        assert_eq!(b.z_k, vec![3.0; 2]);
        assert_eq!(b.fused_full, b.fused_text_masked);
        assert!(predict(&b, InferenceMode::TeBaseline).is_ok());
        assert!(matches!(predict(&b, InferenceMode::TieText), Err(Error::ModeUnavailable(_))));

        let b = assemble_partial(None, Some(&[0.5, 0.5]), None, &c).unwrap();
        assert_eq!(b.z_t, vec![1.0; 2]);
        assert_eq!(b.z_k, vec![4.0; 2]);
        assert!(assemble_partial(None, None, None, &c).is_err());
    }

    #[test]
    fn uniform_grad_reduction_sums_everything() {
        let c = CParams::uniform(2, 0.0);
        let g = c.reduce_grad(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0], vec![7.0, 8.0]]);
        assert_eq!(g, vec![36.0]);
        let c = CParams::nonuniform(2);
        let g = c.reduce_grad(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0], vec![7.0, 8.0]]);
        assert_eq!(g, (1..=8).map(f64::from).collect::<Vec<_>>());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!(InferenceMode::parse_list("all").unwrap().len(), 4);
        assert_eq!(
            InferenceMode::parse_list("te, tie-joint").unwrap(),
            vec![InferenceMode::TeBaseline, InferenceMode::TieJoint]
        );
        assert!(InferenceMode::parse_list("te,bogus").is_err());
        assert_eq!("prior".parse::<CMode>().unwrap(), CMode::Prior);
        assert!("gaussian".parse::<CMode>().is_err());
    }
}
