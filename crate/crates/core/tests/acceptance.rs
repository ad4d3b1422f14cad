//! Acceptance suite. Runs every primary criterion, prints one PASS/FAIL line
//! per criterion and exits non-zero if any fails.
//!
//! Run with `cargo test -p cfmsa-core --test acceptance`.

use std::time::{Duration, Instant};

use cfmsa_core::counterfactual::CParams;
use cfmsa_core::gradcheck::{run_gradcheck, GradcheckConfig};
use cfmsa_core::numerics::argmax;
use cfmsa_core::trainer::{StepGroups, Trainer};
use cfmsa_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const IDENTITY_TOL: f64 = 1e-12;
const SEEDS: u64 = 5;
const TIE_TEXT_MARGIN: f64 = 0.05;
const TIE_JOINT_MARGIN: f64 = 0.03;
const NULL_GAP: f64 = 0.02;
const ABLATION_SLACK: f64 = 0.01;

struct Outcome {
    name: &'static str,
    passed: bool,
    detail: String,
    elapsed: Duration,
    budget: Duration,
}

fn timed(name: &'static str, budget_secs: u64, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (passed, detail) = f();
    let elapsed = start.elapsed();
    let budget = Duration::from_secs(budget_secs);
    Outcome { name, passed: passed && elapsed <= budget, detail, elapsed, budget }
}

fn random_vec(rng: &mut ChaCha8Rng, k: usize, scale: f64) -> Vec<f64> {
    let n = Normal::new(0.0, scale).unwrap();
    (0..k).map(|_| n.sample(rng)).collect()
}

fn random_bundle(rng: &mut ChaCha8Rng) -> ScoreBundle {
    let k = rng.random_range(2..=6);
    let c = CParams::from_vectors([
        random_vec(rng, k, 2.0),
        random_vec(rng, k, 2.0),
        random_vec(rng, k, 2.0),
        random_vec(rng, k, 2.0),
    ])
    .unwrap();
    let (z_t, z_i, z_k) = (random_vec(rng, k, 4.0), random_vec(rng, k, 4.0), random_vec(rng, k, 4.0));
    assemble(&z_t, &z_i, &z_k, &c).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn algebraic_identities() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let b = random_bundle(&mut rng);
        let te = total_effect(&b);
        let sum: Vec<f64> = tie_text(&b).iter().zip(tie_image(&b)).map(|(x, y)| x + y).collect();
        worst = worst.max(max_abs_diff(&tie_joint(&b), &sum));
        let te_minus_nde: Vec<f64> = te.iter().zip(b.nde_text()).map(|(x, y)| x - y).collect();
        worst = worst.max(max_abs_diff(&te_minus_nde, &tie_text(&b)));
        let te_minus_nde: Vec<f64> = te.iter().zip(b.nde_image()).map(|(x, y)| x - y).collect();
        worst = worst.max(max_abs_diff(&te_minus_nde, &tie_image(&b)));
    }
    (worst <= IDENTITY_TOL, format!("1000 bundles, max deviation {worst:.2e} (tol {IDENTITY_TOL:.0e})"))
}

fn monotone_fusion() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let k = rng.random_range(2..=6);
        let (a, b, c) = (random_vec(&mut rng, k, 5.0), random_vec(&mut rng, k, 5.0), random_vec(&mut rng, k, 5.0));
        let sum: Vec<f64> = (0..k).map(|j| a[j] + b[j] + c[j]).collect();
        if argmax(&fuse(&a, &b, &c).unwrap()) != argmax(&sum) {
            mismatches += 1;
        }
    }
    (mismatches == 0, format!("1000 triples, {mismatches} argmax mismatches"))
}

fn gradient_suite() -> (bool, String) {
    let report = run_gradcheck(&GradcheckConfig::default()).unwrap();
    let worst = report.rows.iter().filter(|r| r.routed).map(|r| r.max_rel_error).fold(0.0, f64::max);
    let leak = report.rows.iter().filter(|r| !r.routed).map(|r| r.max_abs_leak).fold(0.0, f64::max);
    (
        report.all_passed(),
        format!(
            "{} points, {} term/group pairs, max rel err {worst:.2e} (tol {:.0e}), max unrouted leak {leak:.1e}",
            report.points,
            report.rows.len(),
            report.tolerance
        ),
    )
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn gradient_routing() -> (bool, String) {
    let cfg = SyntheticConfig { n_train: 160, n_val: 10, n_test: 10, ..Default::default() };
    let (tr, _, _) = gen_synthetic(&cfg).unwrap();
    let batches: Vec<Vec<&Sample>> = tr.samples.chunks(16).map(|c| c.iter().collect()).collect();
    // A large c learning rate makes any leak into c visible.
    let tc = TrainConfig { lr_c: 1e-2, ..Default::default() };

    let mut t = Trainer::for_dataset(tc.clone(), &tr).unwrap();
    let before = t.model.clone();
    for i in 0..100 {
        t.step_batch(&batches[i % batches.len()], StepGroups::C_ONLY).unwrap();
    }
    let branches_same = bits(&before.text.weights) == bits(&t.model.text.weights)
        && bits(&before.image.weights) == bits(&t.model.image.weights)
        && bits(&before.joint.weights) == bits(&t.model.joint.weights);
    let c_moved = bits(&before.c.values) != bits(&t.model.c.values);

    let mut t = Trainer::for_dataset(tc, &tr).unwrap();
    let before = t.model.clone();
    for i in 0..100 {
        t.step_batch(&batches[i % batches.len()], StepGroups::MAIN_ONLY).unwrap();
    }
    let c_same = bits(&before.c.values) == bits(&t.model.c.values);
    let branches_moved = bits(&before.text.weights) != bits(&t.model.text.weights);

    (
        branches_same && c_same && c_moved && branches_moved,
        format!(
            "c-only: branches unchanged={branches_same}, c moved={c_moved}; main-only: c unchanged={c_same}, branches moved={branches_moved}"
        ),
    )
}

/// Mean test accuracy per inference mode over the acceptance seeds.
fn seed_sweep(bias_strength: f64, c_mode: CMode) -> [f64; 4] {
    let mut acc = [0.0; 4];
    for seed in 0..SEEDS {
        let sc = SyntheticConfig { seed, bias_strength, ..Default::default() };
        let (tr, va, te) = gen_synthetic(&sc).unwrap();
        let tc = TrainConfig { seed, c_mode, ..Default::default() };
        let (model, _) = train(&tc, &tr, &va).unwrap();
        let report = evaluate(&model, &te, &InferenceMode::ALL).unwrap();
        for (j, mode) in InferenceMode::ALL.iter().enumerate() {
            acc[j] += report.accuracy(*mode).unwrap() / SEEDS as f64;
        }
    }
    acc
}

fn fmt_acc(acc: &[f64; 4]) -> String {
    format!("TE {:.4} TIE_TEXT {:.4} TIE_IMAGE {:.4} TIE_JOINT {:.4}", acc[0], acc[1], acc[2], acc[3])
}

fn debiasing() -> (bool, String) {
    let acc = seed_sweep(SyntheticConfig::default().bias_strength, CMode::Nonuniform);
    let text_gain = acc[1] - acc[0];
    let joint_gain = acc[3] - acc[0];
    (
        text_gain >= TIE_TEXT_MARGIN && joint_gain >= TIE_JOINT_MARGIN,
        format!(
            "{}; TIE_TEXT-TE {:+.2} pts (need >= {:.0}), TIE_JOINT-TE {:+.2} pts (need >= {:.0})",
            fmt_acc(&acc),
            100.0 * text_gain,
            100.0 * TIE_TEXT_MARGIN,
            100.0 * joint_gain,
            100.0 * TIE_JOINT_MARGIN
        ),
    )
}

fn null_bias() -> (bool, String) {
    let acc = seed_sweep(1.0 / 3.0, CMode::Nonuniform);
    let gap = (acc[1] - acc[0]).abs();
    (gap <= NULL_GAP, format!("{}; |gap| {:.2} pts (need <= {:.0})", fmt_acc(&acc), 100.0 * gap, 100.0 * NULL_GAP))
}

fn c_ablation() -> (bool, String) {
    let non = seed_sweep(SyntheticConfig::default().bias_strength, CMode::Nonuniform)[1];
    let uni = seed_sweep(SyntheticConfig::default().bias_strength, CMode::Uniform)[1];
    (
        non >= uni - ABLATION_SLACK,
        format!("TIE_TEXT acc nonuniform {non:.4} vs uniform {uni:.4} (need nonuniform >= uniform - {:.0} pt)", 100.0 * ABLATION_SLACK),
    )
}

fn determinism() -> (bool, String) {
    let sc = SyntheticConfig { n_train: 600, n_val: 100, n_test: 200, seed: 3, ..Default::default() };
    let run = || {
        let (tr, va, te) = gen_synthetic(&sc).unwrap();
        let tc = TrainConfig { seed: 3, epochs: 4, ..Default::default() };
        let (model, hist) = train(&tc, &tr, &va).unwrap();
        let report = evaluate(&model, &te, &InferenceMode::ALL).unwrap();
        (model.to_json(), hist.to_jsonl(), report.to_json(), compare_report(&[report]).unwrap())
    };
    let (a, b) = (run(), run());
    let same = [a.0 == b.0, a.1 == b.1, a.2 == b.2, a.3 == b.3];
    (
        same.iter().all(|&x| x),
        format!("checkpoint {}, history {}, report json {}, report table {}", same[0], same[1], same[2], same[3]),
    )
}

fn main() {
    let outcomes = vec![
        timed("algebraic identities", 1, algebraic_identities),
        timed("monotone fusion", 1, monotone_fusion),
        timed("gradient suite", 30, gradient_suite),
        timed("gradient routing", 10, gradient_routing),
        timed("debiasing experiment", 180, debiasing),
        timed("null-bias control", 180, null_bias),
        timed("c-hypothesis ablation", 300, c_ablation),
        timed("determinism", 120, determinism),
    ];
    let mut failed = 0;
    for o in &outcomes {
        let status = if o.passed { "PASS" } else { "FAIL" };
        println!(
            "{status} {:<22} [{:.2}s / {}s] {}",
            o.name,
            o.elapsed.as_secs_f64(),
            o.budget.as_secs(),
            o.detail
        );
        failed += usize::from(!o.passed);
    }
    println!("acceptance: {} passed, {failed} failed", outcomes.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
