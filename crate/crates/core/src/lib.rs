//! Counterfactual multimodal fusion.
//!
//! Three branch scorers (text, image, joint) produce class logits that are
//! fused with `log σ(z_t + z_i + z_k)`. Replacing a modality's scores with
//! learned constants gives counterfactual fused scores, and subtracting those
//! from the factual score removes the direct effect of a biased modality at
//! inference time.
//!
//! Modules, bottom-up: [`numerics`], [`branches`], [`counterfactual`],
//! [`losses`], [`model`], [`optim`], [`trainer`], [`data`], [`eval`],
//! [`gradcheck`].

pub mod branches;
pub mod counterfactual;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod losses;
pub mod model;
pub mod numerics;
pub mod optim;
mod par;
pub mod trainer;

pub use counterfactual::{
    assemble, assemble_partial, fuse, predict, tie_image, tie_joint, tie_text, total_effect, CMode, CParams,
    InferenceMode, ScoreBundle,
};
pub use data::{class_stats, gen_synthetic, load_features, split, Dataset, Header, Sample, SyntheticConfig};
pub use error::{Error, Result};
pub use eval::{compare_report, evaluate, EvalReport};
pub use losses::{LossBreakdown, LossTerm};
pub use model::{ModelDims, ModelParams};
pub use trainer::{train, TrainConfig, TrainHistory};
