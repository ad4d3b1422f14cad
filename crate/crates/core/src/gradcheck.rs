//! Analytic-versus-finite-difference verification of every loss term against
//! every parameter group.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::counterfactual::{CMode, CParams};
use crate::data::Sample;
use crate::error::Result;
use crate::losses::{breakdown, LossTerm, Routing};
use crate::model::{ModelDims, ModelParams};
use crate::numerics::{finite_diff_grad, relative_error, DEFAULT_FD_STEP};
use crate::trainer::PUBLISHED_CLASS_WEIGHTS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Text,
    Image,
    Joint,
    C,
}

impl Group {
    pub const ALL: [Group; 4] = [Group::Text, Group::Image, Group::Joint, Group::C];

    pub fn routing(self) -> Routing {
        if self == Group::C { Routing::CParams } else { Routing::BranchParams }
    }

    fn get(self, m: &ModelParams) -> &[f64] {
        match self {
            Group::Text => &m.text.weights,
            Group::Image => &m.image.weights,
            Group::Joint => &m.joint.weights,
            Group::C => &m.c.values,
        }
    }

    fn get_mut(self, m: &mut ModelParams) -> &mut Vec<f64> {
        match self {
            Group::Text => &mut m.text.weights,
            Group::Image => &mut m.image.weights,
            Group::Joint => &mut m.joint.weights,
            Group::C => &mut m.c.values,
        }
    }

    fn grad(self, g: &crate::model::Gradients) -> &[f64] {
        match self {
            Group::Text => &g.text,
            Group::Image => &g.image,
            Group::Joint => &g.joint,
            Group::C => &g.c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckConfig {
    pub dims: ModelDims,
    pub points: usize,
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            dims: ModelDims { d_t: 6, d_i: 5, hidden_dim: 8, num_classes: 3 },
            points: 100,
            seed: 0,
            step: DEFAULT_FD_STEP,
            tolerance: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckRow {
    pub term: LossTerm,
    pub group: Group,
    /// False when the term is routed away from the group; the check is then
    /// that the analytic gradient is exactly zero.
    pub routed: bool,
    pub max_rel_error: f64,
    pub max_abs_leak: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub points: usize,
    pub tolerance: f64,
    pub rows: Vec<GradcheckRow>,
}

impl GradcheckReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{:<12} {:<6} {:<8} {:>14} {:>10}  result", "term", "group", "check", "max rel err", "leak").unwrap();
        for r in &self.rows {
            let check = if r.routed { "fd" } else { "zero" };
            let group = serde_json::to_value(r.group).unwrap();
            writeln!(
                out,
                "{:<12} {:<6} {:<8} {:>14.3e} {:>10.1e}  {}",
                r.term.name(),
                group.as_str().unwrap_or(""),
                check,
                r.max_rel_error,
                r.max_abs_leak,
                if r.passed { "PASS" } else { "FAIL" }
            )
            .unwrap();
        }
        out
    }
}

fn random_point(cfg: &GradcheckConfig, p: usize, rng: &mut ChaCha8Rng) -> Result<(ModelParams, Sample)> {
    let d = cfg.dims;
    let k = d.num_classes;
    let mut c = if p % 2 == 0 {
        CParams::nonuniform(k)
    } else {
        CParams::uniform(k, 0.0)
    };
    for v in &mut c.values {
        *v = StandardNormal.sample(rng);
    }
    let mut model = ModelParams::init(d, c, rng.random())?;
    // nonzero biases so every parameter is exercised
    for g in [Group::Text, Group::Image, Group::Joint] {
        for w in g.get_mut(&mut model).iter_mut() {
            if *w == 0.0 {
                let n: f64 = StandardNormal.sample(rng);
                *w = 0.1 * n;
            }
        }
    }
    let feat = |n: usize, rng: &mut ChaCha8Rng| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(rng)).collect() };
    let sample = Sample {
        id: format!("point-{p}"),
        text: Some(feat(d.d_t, rng)),
        image: Some(feat(d.d_i, rng)),
        label: rng.random_range(0..k),
    };
    debug_assert_eq!(model.c.mode == CMode::Uniform, p % 2 == 1);
    Ok((model, sample))
}

fn class_weights(k: usize) -> Vec<f64> {
    if k == PUBLISHED_CLASS_WEIGHTS.len() {
        PUBLISHED_CLASS_WEIGHTS.to_vec()
    } else {
        vec![1.0; k]
    }
}

/// Checks every (term, group) pair at `cfg.points` random points.
pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let weights = class_weights(cfg.dims.num_classes);
    let mut rows: Vec<GradcheckRow> = LossTerm::ALL
        .iter()
        .flat_map(|&term| {
            Group::ALL.iter().map(move |&group| GradcheckRow {
                term,
                group,
                routed: term.routing() == group.routing(),
                max_rel_error: 0.0,
                max_abs_leak: 0.0,
                passed: true,
            })
        })
        .collect();

    for p in 0..cfg.points {
        let (model, sample) = random_point(cfg, p, &mut rng)?;
        for row in rows.iter_mut() {
            let (_, g) = model.sample_gradients(&sample, &weights, &[row.term])?;
            let analytic = row.group.grad(&g);
            if !row.routed {
                let leak = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                row.max_abs_leak = row.max_abs_leak.max(leak);
                continue;
            }
            let numeric = finite_diff_grad(
                |x| {
                    let mut m = model.clone();
                    row.group.get_mut(&mut m).copy_from_slice(x);
                    let b = m.bundle(&sample).expect("valid sample");
                    breakdown(&b, sample.label, &weights).expect("valid label").get(row.term)
                },
                row.group.get(&model),
                cfg.step,
            )?;
            let err = relative_error(analytic, &numeric, 1e-8);
            row.max_rel_error = row.max_rel_error.max(err);
        }
    }
    for row in &mut rows {
        row.passed = row.max_abs_leak == 0.0 && row.max_rel_error < cfg.tolerance;
    }
    Ok(GradcheckReport { points: cfg.points, tolerance: cfg.tolerance, rows })
}
