//! WebAssembly bindings for the browser demo.
//!
//! Every export takes a JSON request string and returns a JSON response
//! string; errors come back as JS exceptions carrying the message. The
//! `*_json` functions hold the logic and are callable natively.

use cfmsa_core::counterfactual::{assemble_partial, CParams, InferenceMode, ScoreBundle};
use cfmsa_core::data::class_stats;
use cfmsa_core::numerics::{argmax, softmax};
use cfmsa_core::{evaluate, gen_synthetic, train, CMode, SyntheticConfig, TrainConfig};
use serde::Deserialize;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn parse<T: for<'de> Deserialize<'de>>(req: &str) -> Result<T, String> {
    serde_json::from_str(req).map_err(|e| format!("bad request: {e}"))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExploreRequest {
    pub z_t: Vec<f64>,
    pub z_i: Vec<f64>,
    pub z_k: Vec<f64>,
    /// Four constant vectors `c1..c4`.
    pub c: [Vec<f64>; 4],
    #[serde(default = "yes")]
    pub text_present: bool,
    #[serde(default = "yes")]
    pub image_present: bool,
}

fn yes() -> bool {
    true
}

fn mode_entry(b: &ScoreBundle, m: InferenceMode) -> Value {
    match b.mode_scores(m) {
        Ok(s) => json!({ "available": true, "scores": s, "class": argmax(&s) }),
        Err(_) => json!({ "available": false }),
    }
}

/// Counterfactual scores and per-mode predictions for hand-set branch logits.
pub fn explore_json(req: &str) -> Result<String, String> {
    let r: ExploreRequest = parse(req)?;
    let c = CParams::from_vectors(r.c).map_err(|e| e.to_string())?;
    let b = assemble_partial(
        r.text_present.then_some(r.z_t.as_slice()),
        r.image_present.then_some(r.z_i.as_slice()),
        (r.text_present && r.image_present).then_some(r.z_k.as_slice()),
        &c,
    )
    .map_err(|e| e.to_string())?;
    let probs = |v: &[f64]| softmax(v).map_err(|e| e.to_string());
    let modes: serde_json::Map<String, Value> =
        InferenceMode::ALL.iter().map(|&m| (m.as_str().to_string(), mode_entry(&b, m))).collect();
    Ok(json!({
        "fused_full": b.fused_full,
        "fused_text_masked": b.fused_text_masked,
        "fused_image_masked": b.fused_image_masked,
        "all_masked": b.all_masked(),
        "p_full": probs(&b.fused_full)?,
        "p_text_masked": probs(&b.fused_text_masked)?,
        "p_image_masked": probs(&b.fused_image_masked)?,
        "nde_text": b.nde_text(),
        "nde_image": b.nde_image(),
        "modes": modes,
    })
    .to_string())
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentRequest {
    pub seed: u64,
    pub bias_strength: f64,
    pub n_train: usize,
    pub epochs: usize,
    pub c_mode: CMode,
    pub lr_main: f64,
}

impl Default for ExperimentRequest {
    fn default() -> Self {
        let t = TrainConfig::default();
        ExperimentRequest {
            seed: 0,
            bias_strength: SyntheticConfig::default().bias_strength,
            n_train: 1000,
            epochs: 8,
            c_mode: t.c_mode,
            lr_main: t.lr_main,
        }
    }
}

/// Generates a biased synthetic benchmark, trains on it and reports test
/// accuracy per inference mode.
pub fn experiment_json(req: &str) -> Result<String, String> {
    let r: ExperimentRequest = parse(req)?;
    let sc = SyntheticConfig {
        seed: r.seed,
        bias_strength: r.bias_strength,
        n_train: r.n_train,
        n_val: (r.n_train / 6).max(1),
        n_test: (r.n_train / 3).max(1),
        ..Default::default()
    };
    let (tr, va, te) = gen_synthetic(&sc).map_err(|e| e.to_string())?;
    let tc = TrainConfig { seed: r.seed, epochs: r.epochs, c_mode: r.c_mode, lr_main: r.lr_main, ..Default::default() };
    let (model, history) = train(&tc, &tr, &va).map_err(|e| e.to_string())?;
    let report = evaluate(&model, &te, &InferenceMode::ALL).map_err(|e| e.to_string())?;
    let modes: Vec<Value> = report
        .modes
        .iter()
        .map(|m| {
            json!({
                "mode": m.mode.as_str(),
                "label": m.mode.label(),
                "accuracy": m.accuracy,
                "macro_f1": m.macro_f1,
                "delta_accuracy": m.delta_accuracy,
            })
        })
        .collect();
    let losses: Vec<f64> = history.epochs.iter().map(|e| e.train_loss.total).collect();
    Ok(json!({
        "n_train": tr.len(),
        "n_test": te.len(),
        "modes": modes,
        "train_loss": losses,
        "c": model.c.values,
    })
    .to_string())
}

/// Class counts and how often the spurious text cue names the true class, in
/// the training and test splits.
pub fn dataset_summary_json(req: &str) -> Result<String, String> {
    let sc: SyntheticConfig = parse(req)?;
    let (tr, va, te) = gen_synthetic(&sc).map_err(|e| e.to_string())?;
    let cue_start = sc.d_t - sc.bias_dims;
    let split = |d: &cfmsa_core::Dataset| -> Result<Value, String> {
        let stats = class_stats(d).map_err(|e| e.to_string())?;
        let agree = d
            .samples
            .iter()
            .filter(|s| s.text.as_ref().is_some_and(|t| argmax(&t[cue_start..]) == s.label))
            .count();
        Ok(json!({
            "n": d.len(),
            "counts": stats.counts,
            "cue_agreement": agree as f64 / d.len().max(1) as f64,
        }))
    };
    Ok(json!({
        "labels": tr.header.labels,
        "train": split(&tr)?,
        "val": split(&va)?,
        "test": split(&te)?,
    })
    .to_string())
}

fn to_js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn explore(req: &str) -> Result<String, JsValue> {
    to_js(explore_json(req))
}

#[wasm_bindgen]
pub fn experiment(req: &str) -> Result<String, JsValue> {
    to_js(experiment_json(req))
}

#[wasm_bindgen]
pub fn dataset_summary(req: &str) -> Result<String, JsValue> {
    to_js(dataset_summary_json(req))
}
