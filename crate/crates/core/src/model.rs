//! Full model parameters (three branch scorers plus the masked-score
//! constants), per-sample forward/backward and the JSON checkpoint format.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::branches::{concat, BranchParams, ForwardCache};
use crate::counterfactual::{assemble_partial, CParams, ScoreBundle};
use crate::data::{Header, Sample};
use crate::error::{Error, Result};
use crate::losses::{breakdown, c_grad, cls_grad, LossBreakdown, LossTerm};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub d_t: usize,
    pub d_i: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
}

impl ModelDims {
    pub fn from_header(h: &Header, hidden_dim: usize) -> Self {
        ModelDims { d_t: h.d_t, d_i: h.d_i, hidden_dim, num_classes: h.num_classes() }
    }

    pub fn check_header(&self, h: &Header) -> Result<()> {
        let pairs = [
            ("text feature dim", self.d_t, h.d_t),
            ("image feature dim", self.d_i, h.d_i),
            ("number of classes", self.num_classes, h.num_classes()),
        ];
        for (what, expected, got) in pairs {
            if expected != got {
                return Err(Error::DimMismatch { what, expected, got });
            }
        }
        Ok(())
    }
}

/// Seeds the branches were initialized from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub model: u64,
    pub text: u64,
    pub image: u64,
    pub joint: u64,
    pub c: u64,
}

impl Seeds {
    pub fn derive(model: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(model);
        Seeds { model, text: rng.random(), image: rng.random(), joint: rng.random(), c: rng.random() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub seeds: Seeds,
    pub text: BranchParams,
    pub image: BranchParams,
    pub joint: BranchParams,
    pub c: CParams,
}

/// Gradients for every parameter tensor; `c` follows the storage layout of
/// [`CParams::values`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub text: Vec<f64>,
    pub image: Vec<f64>,
    pub joint: Vec<f64>,
    pub c: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(m: &ModelParams) -> Self {
        Gradients {
            text: vec![0.0; m.text.weights.len()],
            image: vec![0.0; m.image.weights.len()],
            joint: vec![0.0; m.joint.weights.len()],
            c: vec![0.0; m.c.values.len()],
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (dst, src) in [
            (&mut self.text, &other.text),
            (&mut self.image, &other.image),
            (&mut self.joint, &other.joint),
            (&mut self.c, &other.c),
        ] {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }
}

/// Forward state of one sample, kept for backprop.
pub struct SampleForward {
    pub bundle: ScoreBundle,
    text_cache: Option<ForwardCache>,
    image_cache: Option<ForwardCache>,
    joint: Option<(Vec<f64>, ForwardCache)>,
}

impl ModelParams {
    /// Fresh parameters. `c` is supplied by the caller since prior mode needs
    /// training-set statistics.
    pub fn init(dims: ModelDims, c: CParams, seed: u64) -> Result<Self> {
        let seeds = Seeds::derive(seed);
        let k = dims.num_classes;
        if c.num_classes != k {
            return Err(Error::DimMismatch { what: "c parameters classes", expected: k, got: c.num_classes });
        }
        c.check_shape()?;
        Ok(ModelParams {
            dims,
            seeds,
            text: BranchParams::init(dims.d_t, dims.hidden_dim, k, seeds.text)?,
            image: BranchParams::init(dims.d_i, dims.hidden_dim, k, seeds.image)?,
            joint: BranchParams::init(dims.d_t + dims.d_i, dims.hidden_dim, k, seeds.joint)?,
            c,
        })
    }

    fn check_sample(&self, s: &Sample) -> Result<()> {
        if s.text.is_none() && s.image.is_none() {
            return Err(Error::InvalidInput(format!("sample `{}`: no modality present", s.id)));
        }
        if s.label >= self.dims.num_classes {
            return Err(Error::LabelOutOfRange { label: s.label, num_classes: self.dims.num_classes });
        }
        for (feat, dim, what) in [(&s.text, self.dims.d_t, "text features"), (&s.image, self.dims.d_i, "image features")] {
            if let Some(v) = feat {
                if v.len() != dim {
                    return Err(Error::DimMismatch { what, expected: dim, got: v.len() });
                }
            }
        }
        Ok(())
    }

    pub fn forward(&self, s: &Sample) -> Result<SampleForward> {
        self.check_sample(s)?;
        let text = s.text.as_ref().map(|t| self.text.forward_unchecked(t));
        let image = s.image.as_ref().map(|i| self.image.forward_unchecked(i));
        let joint = match (&s.text, &s.image) {
            (Some(t), Some(i)) => {
                let x = concat(t, i);
                let (z, cache) = self.joint.forward_unchecked(&x);
                Some((x, z, cache))
            }
            _ => None,
        };
        let bundle = assemble_partial(
            text.as_ref().map(|(z, _)| z.as_slice()),
            image.as_ref().map(|(z, _)| z.as_slice()),
            joint.as_ref().map(|(_, z, _)| z.as_slice()),
            &self.c,
        )?;
        Ok(SampleForward {
            bundle,
            text_cache: text.map(|(_, c)| c),
            image_cache: image.map(|(_, c)| c),
            joint: joint.map(|(x, _, c)| (x, c)),
        })
    }

    pub fn bundle(&self, s: &Sample) -> Result<ScoreBundle> {
        Ok(self.forward(s)?.bundle)
    }

    /// Loss breakdown and gradients of the selected terms for one sample.
    ///
    /// Classification terms contribute only to branch gradients and the
    /// remaining terms only to `c`; when `c` is frozen its gradient is left
    /// at zero.
    pub fn sample_gradients(
        &self,
        s: &Sample,
        weights: &[f64],
        terms: &[LossTerm],
    ) -> Result<(LossBreakdown, Gradients)> {
        let fwd = self.forward(s)?;
        let b = &fwd.bundle;
        let losses = breakdown(b, s.label, weights)?;
        let mut g = Gradients::zeros_like(self);

        let cls_terms: Vec<LossTerm> = terms.iter().copied().filter(|t| LossTerm::CLS.contains(t)).collect();
        if !cls_terms.is_empty() {
            let sg = cls_grad(b, s.label, weights, &cls_terms)?;
            if let (Some(t), Some(cache)) = (&s.text, &fwd.text_cache) {
                self.text.backward(t, cache, &sg.d_z_t, &mut g.text);
            }
            if let (Some(i), Some(cache)) = (&s.image, &fwd.image_cache) {
                self.image.backward(i, cache, &sg.d_z_i, &mut g.image);
            }
            if let Some((x, cache)) = &fwd.joint {
                self.joint.backward(x, cache, &sg.d_z_k, &mut g.joint);
            }
        }

        let c_terms: Vec<LossTerm> = terms.iter().copied().filter(|t| LossTerm::C_TERMS.contains(t)).collect();
        if !c_terms.is_empty() && self.c.mode.is_learnable() {
            g.c = self.c.reduce_grad(&c_grad(b, &c_terms));
        }
        Ok((losses, g))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            dims: self.dims,
            seeds: self.seeds,
            branches: BranchWeights {
                text: self.text.weights.clone(),
                image: self.image.weights.clone(),
                joint: self.joint.weights.clone(),
            },
            c: CCheckpoint { mode: self.c.mode, values: self.c.values.clone() },
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        if ck.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported checkpoint schema_version {}",
                ck.schema_version
            )));
        }
        let d = ck.dims;
        let k = d.num_classes;
        let branch = |input: usize, weights: Vec<f64>| -> Result<BranchParams> {
            let p = BranchParams { input_dim: input, hidden_dim: d.hidden_dim, num_classes: k, weights };
            p.check_shape()?;
            Ok(p)
        };
        let c = CParams { mode: ck.c.mode, num_classes: k, values: ck.c.values };
        c.check_shape()?;
        Ok(ModelParams {
            dims: d,
            seeds: ck.seeds,
            text: branch(d.d_t, ck.branches.text)?,
            image: branch(d.d_i, ck.branches.image)?,
            joint: branch(d.d_t + d.d_i, ck.branches.joint)?,
            c,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_checkpoint()).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_checkpoint(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// SHA-256 of the serialized checkpoint.
    pub fn digest(&self) -> String {
        crate::data::sha256_hex(self.to_json().as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchWeights {
    pub text: Vec<f64>,
    pub image: Vec<f64>,
    pub joint: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CCheckpoint {
    pub mode: crate::counterfactual::CMode,
    pub values: Vec<f64>,
}

/// On-disk checkpoint document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub dims: ModelDims,
    pub seeds: Seeds,
    pub branches: BranchWeights,
    pub c: CCheckpoint,
}
