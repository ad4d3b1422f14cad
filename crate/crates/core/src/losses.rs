//! The composite training objective and its analytic gradients.
//!
//! Classification terms reach only the branch scorers; the sharpness and
//! mutual-elimination terms reach only the masked-score constants. The split
//! is structural: each gradient function returns only the side it routes to.

use serde::{Deserialize, Serialize};

use crate::counterfactual::ScoreBundle;
use crate::error::{Error, Result};
use crate::numerics::{
    cross_entropy_grad, cross_entropy_unchecked, log_softmax_unchecked, sigmoid, softmax_unchecked,
};

/// Parameter group a loss term updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Routing {
    BranchParams,
    CParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossTerm {
    ClsJoint,
    ClsText,
    ClsImage,
    Kl1,
    Kl2,
    Ti,
}

impl LossTerm {
    pub const ALL: [LossTerm; 6] = [
        LossTerm::ClsJoint,
        LossTerm::ClsText,
        LossTerm::ClsImage,
        LossTerm::Kl1,
        LossTerm::Kl2,
        LossTerm::Ti,
    ];
    pub const CLS: [LossTerm; 3] = [LossTerm::ClsJoint, LossTerm::ClsText, LossTerm::ClsImage];
    pub const C_TERMS: [LossTerm; 3] = [LossTerm::Kl1, LossTerm::Kl2, LossTerm::Ti];

    pub fn routing(self) -> Routing {
        match self {
            LossTerm::ClsJoint | LossTerm::ClsText | LossTerm::ClsImage => Routing::BranchParams,
            LossTerm::Kl1 | LossTerm::Kl2 | LossTerm::Ti => Routing::CParams,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossTerm::ClsJoint => "l_cls_joint",
            LossTerm::ClsText => "l_cls_text",
            LossTerm::ClsImage => "l_cls_image",
            LossTerm::Kl1 => "l_kl1",
            LossTerm::Kl2 => "l_kl2",
            LossTerm::Ti => "l_ti",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_cls_joint: f64,
    pub l_cls_text: f64,
    pub l_cls_image: f64,
    pub l_kl1: f64,
    pub l_kl2: f64,
    pub l_ti: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn get(&self, term: LossTerm) -> f64 {
        match term {
            LossTerm::ClsJoint => self.l_cls_joint,
            LossTerm::ClsText => self.l_cls_text,
            LossTerm::ClsImage => self.l_cls_image,
            LossTerm::Kl1 => self.l_kl1,
            LossTerm::Kl2 => self.l_kl2,
            LossTerm::Ti => self.l_ti,
        }
    }

    pub fn l_cls(&self) -> f64 {
        self.l_cls_joint + self.l_cls_text + self.l_cls_image
    }

    pub fn l_kl(&self) -> f64 {
        self.l_kl1 + self.l_kl2
    }

    /// Adds `other` scaled by `scale`, term by term.
    pub fn accumulate(&mut self, other: &LossBreakdown, scale: f64) {
        self.l_cls_joint += scale * other.l_cls_joint;
        self.l_cls_text += scale * other.l_cls_text;
        self.l_cls_image += scale * other.l_cls_image;
        self.l_kl1 += scale * other.l_kl1;
        self.l_kl2 += scale * other.l_kl2;
        self.l_ti += scale * other.l_ti;
        self.total += scale * other.total;
    }
}

/// The three classification terms for one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClsLoss {
    pub joint: f64,
    pub text: f64,
    pub image: f64,
}

/// Gradient with respect to the raw branch scores `(z_t, z_i, z_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGrad {
    pub d_z_t: Vec<f64>,
    pub d_z_i: Vec<f64>,
    pub d_z_k: Vec<f64>,
}

impl ScoreGrad {
    pub fn zeros(k: usize) -> Self {
        ScoreGrad { d_z_t: vec![0.0; k], d_z_i: vec![0.0; k], d_z_k: vec![0.0; k] }
    }

    fn add_all(&mut self, d: &[f64]) {
        for j in 0..d.len() {
            self.d_z_t[j] += d[j];
            self.d_z_i[j] += d[j];
            self.d_z_k[j] += d[j];
        }
    }
}

/// Gradient with respect to the four per-class constants `c1..c4`.
pub type CGrad = [Vec<f64>; 4];

fn c_zeros(k: usize) -> CGrad {
    std::array::from_fn(|_| vec![0.0; k])
}

fn check_label(b: &ScoreBundle, label: usize, weights: &[f64]) -> Result<()> {
    let k = b.num_classes();
    if label >= k {
        return Err(Error::LabelOutOfRange { label, num_classes: k });
    }
    if weights.len() != k {
        return Err(Error::DimMismatch { what: "class weights", expected: k, got: weights.len() });
    }
    Ok(())
}

fn raw_sum(a: &[f64], b: &[f64], c: &[f64]) -> Vec<f64> {
    a.iter().zip(b).zip(c).map(|((x, y), z)| x + y + z).collect()
}

/// Weighted cross-entropy on the fused score, the text score and the image
/// score. A term whose modality is absent contributes zero.
pub fn l_cls(b: &ScoreBundle, label: usize, weights: &[f64]) -> Result<ClsLoss> {
    check_label(b, label, weights)?;
    let w = weights[label];
    Ok(ClsLoss {
        joint: cross_entropy_unchecked(&b.fused_full, label, w),
        text: if b.text_present { cross_entropy_unchecked(&b.z_t, label, w) } else { 0.0 },
        image: if b.image_present { cross_entropy_unchecked(&b.z_i, label, w) } else { 0.0 },
    })
}

/// Sharpness terms: cross-entropy of each masked distribution against the
/// full prediction `p(y|t,i,k)`, each scaled by `1/|Y|`.
pub fn l_kl(b: &ScoreBundle) -> (f64, f64) {
    let k = b.num_classes() as f64;
    let p = softmax_unchecked(&b.fused_full);
    let term = |masked: &[f64]| -> f64 {
        let log_q = log_softmax_unchecked(masked);
        -p.iter().zip(&log_q).map(|(pi, lq)| pi * lq).sum::<f64>() / k
    };
    (term(&b.fused_text_masked), term(&b.fused_image_masked))
}

/// Symmetric `1/|Y|`-scaled KL between the two masked distributions.
pub fn l_ti(b: &ScoreBundle) -> f64 {
    let k = b.num_classes() as f64;
    let log_p = log_softmax_unchecked(&b.fused_text_masked);
    let log_q = log_softmax_unchecked(&b.fused_image_masked);
    let mut forward = 0.0;
    let mut backward = 0.0;
    for (lp, lq) in log_p.iter().zip(&log_q) {
        forward += lp.exp() * (lp - lq);
        backward += lq.exp() * (lq - lp);
    }
    forward / k + backward / k
}

/// Combines the six scalars into a breakdown whose `total` is their sum.
pub fn total_loss(cls: ClsLoss, kl: (f64, f64), ti: f64) -> LossBreakdown {
    let total = (cls.joint + cls.text + cls.image) + (kl.0 + kl.1) + ti;
    LossBreakdown {
        l_cls_joint: cls.joint,
        l_cls_text: cls.text,
        l_cls_image: cls.image,
        l_kl1: kl.0,
        l_kl2: kl.1,
        l_ti: ti,
        total,
    }
}

pub fn breakdown(b: &ScoreBundle, label: usize, weights: &[f64]) -> Result<LossBreakdown> {
    Ok(total_loss(l_cls(b, label, weights)?, l_kl(b), l_ti(b)))
}

/// Gradient of the selected classification terms with respect to the branch
/// scores. Scores substituted by constants for absent modalities receive no
/// gradient.
pub fn cls_grad(b: &ScoreBundle, label: usize, weights: &[f64], terms: &[LossTerm]) -> Result<ScoreGrad> {
    check_label(b, label, weights)?;
    let k = b.num_classes();
    let w = weights[label];
    let mut g = ScoreGrad::zeros(k);
    if terms.contains(&LossTerm::ClsJoint) {
        let s = raw_sum(&b.z_t, &b.z_i, &b.z_k);
        let d_fused = cross_entropy_grad(&b.fused_full, label, w);
        // d log σ(s)/ds = σ(−s)
        let d: Vec<f64> = d_fused.iter().zip(&s).map(|(df, &sv)| df * sigmoid(-sv)).collect();
        g.add_all(&d);
    }
    if terms.contains(&LossTerm::ClsText) && b.text_present {
        for (gz, d) in g.d_z_t.iter_mut().zip(cross_entropy_grad(&b.z_t, label, w)) {
            *gz += d;
        }
    }
    if terms.contains(&LossTerm::ClsImage) && b.image_present {
        for (gz, d) in g.d_z_i.iter_mut().zip(cross_entropy_grad(&b.z_i, label, w)) {
            *gz += d;
        }
    }
    if !b.text_present {
        g.d_z_t.iter_mut().for_each(|v| *v = 0.0);
    }
    if !b.image_present {
        g.d_z_i.iter_mut().for_each(|v| *v = 0.0);
    }
    if !(b.text_present && b.image_present) {
        g.d_z_k.iter_mut().for_each(|v| *v = 0.0);
    }
    Ok(g)
}

/// Pushes a gradient on the text-masked fused score back onto the constants.
fn backprop_text_masked(b: &ScoreBundle, d_fused: &[f64], out: &mut CGrad) {
    let s = raw_sum(&b.z_t, &b.c[1], &b.c[2]);
    for y in 0..d_fused.len() {
        let d = d_fused[y] * sigmoid(-s[y]);
        out[1][y] += d;
        out[2][y] += d;
        if !b.text_present {
            // z_t is itself c1
            out[0][y] += d;
        }
    }
}

fn backprop_image_masked(b: &ScoreBundle, d_fused: &[f64], out: &mut CGrad) {
    let s = raw_sum(&b.c[0], &b.z_i, &b.c[3]);
    for y in 0..d_fused.len() {
        let d = d_fused[y] * sigmoid(-s[y]);
        out[0][y] += d;
        out[3][y] += d;
        if !b.image_present {
            out[1][y] += d;
        }
    }
}

/// Gradient of the selected sharpness / mutual-elimination terms with respect
/// to `c1..c4`. The full prediction is a fixed target and branch scores are
/// treated as constants.
pub fn c_grad(b: &ScoreBundle, terms: &[LossTerm]) -> CGrad {
    let k = b.num_classes();
    let kf = k as f64;
    let mut out = c_zeros(k);
    let p_text = softmax_unchecked(&b.fused_text_masked);
    let p_image = softmax_unchecked(&b.fused_image_masked);

    let wants_kl = terms.contains(&LossTerm::Kl1) || terms.contains(&LossTerm::Kl2);
    let target = if wants_kl { softmax_unchecked(&b.fused_full) } else { Vec::new() };

    if terms.contains(&LossTerm::Kl1) {
        // d/dg (−(1/K) Σ p log softmax(g)) = (softmax(g) − p) / K
        let d: Vec<f64> = p_text.iter().zip(&target).map(|(q, p)| (q - p) / kf).collect();
        backprop_text_masked(b, &d, &mut out);
    }
    if terms.contains(&LossTerm::Kl2) {
        let d: Vec<f64> = p_image.iter().zip(&target).map(|(q, p)| (q - p) / kf).collect();
        backprop_image_masked(b, &d, &mut out);
    }
    if terms.contains(&LossTerm::Ti) {
        let r: Vec<f64> = p_text
            .iter()
            .zip(&p_image)
            .map(|(p, q)| p.ln() - q.ln())
            .collect();
        let mean_p: f64 = p_text.iter().zip(&r).map(|(p, ri)| p * ri).sum();
        let mean_q: f64 = p_image.iter().zip(&r).map(|(q, ri)| q * ri).sum();
        let d_text: Vec<f64> = (0..k)
            .map(|y| (p_text[y] * (r[y] - mean_p) + (p_text[y] - p_image[y])) / kf)
            .collect();
        let d_image: Vec<f64> = (0..k)
            .map(|y| ((p_image[y] - p_text[y]) - p_image[y] * (r[y] - mean_q)) / kf)
            .collect();
        backprop_text_masked(b, &d_text, &mut out);
        backprop_image_masked(b, &d_image, &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counterfactual::{assemble, assemble_partial, CParams};
    use crate::numerics::{finite_diff_grad, kl_mean, relative_error, softmax, DEFAULT_FD_STEP};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const W1: [f64; 3] = [1.0, 1.0, 1.0];
    const PUBLISHED_W: [f64; 3] = [1.68, 9.3, 3.36];

    fn rv(rng: &mut ChaCha8Rng, scale: f64) -> Vec<f64> {
        (0..3).map(|_| rng.random_range(-scale..scale)).collect()
    }

    fn random_c(rng: &mut ChaCha8Rng) -> CParams {
        CParams::from_vectors(std::array::from_fn(|_| rv(rng, 2.0))).unwrap()
    }

    #[test]
    fn cls_zero_logits() {
        let b = assemble(&[0.0; 3], &[0.0; 3], &[0.0; 3], &CParams::uniform(3, 0.0)).unwrap();
        let l = l_cls(&b, 2, &W1).unwrap();
        let ln3 = 3f64.ln();
        // fused vector is constant so its softmax is uniform too
        for v in [l.joint, l.text, l.image] {
            assert!((v - ln3).abs() < 1e-15);
        }
    }

    #[test]
    fn cls_weighting_scales_neutral_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = random_c(&mut rng);
        let b = assemble(&rv(&mut rng, 2.0), &rv(&mut rng, 2.0), &rv(&mut rng, 2.0), &c).unwrap();
        let plain = l_cls(&b, 1, &W1).unwrap();
        let weighted = l_cls(&b, 1, &PUBLISHED_W).unwrap();
        assert!((weighted.joint - 9.3 * plain.joint).abs() < 1e-12);
        assert!((weighted.text - 9.3 * plain.text).abs() < 1e-12);
        assert!((weighted.image - 9.3 * plain.image).abs() < 1e-12);
        assert!(matches!(l_cls(&b, 3, &W1), Err(Error::LabelOutOfRange { .. })));
    }

    #[test]
    fn kl_terms_reduce_to_scaled_entropy() {
        // choose z so that z_i + z_k = c2 + c3 and z_t + z_k = c1 + c4
        let c = CParams::from_vectors([vec![0.5, -1.0, 0.2], vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]]).unwrap();
        let z_t = [0.5, -1.0, 0.2];
        let b = assemble(&z_t, &[0.0; 3], &[0.0; 3], &c).unwrap();
        assert_eq!(b.fused_full, b.fused_text_masked);
        assert_eq!(b.fused_full, b.fused_image_masked);
        let p = softmax(&b.fused_full).unwrap();
        let entropy: f64 = -p.iter().map(|x| x * x.ln()).sum::<f64>();
        let (k1, k2) = l_kl(&b);
        assert!((k1 - entropy / 3.0).abs() < 1e-15);
        assert!((k2 - entropy / 3.0).abs() < 1e-15);
    }

    #[test]
    fn kl_uniform_distributions() {
        let b = assemble(&[0.0; 3], &[0.0; 3], &[0.0; 3], &CParams::uniform(3, 0.0)).unwrap();
        let (k1, k2) = l_kl(&b);
        // (1/3) Σ_y −(1/3) ln(1/3) = (1/3) ln 3
        let want = 3f64.ln() / 3.0;
        assert!((k1 - want).abs() < 1e-15 && (k2 - want).abs() < 1e-15);
    }

    #[test]
    fn ti_zero_and_symmetric() {
        let b = assemble(&[0.0; 3], &[0.0; 3], &[0.0; 3], &CParams::uniform(3, 0.3)).unwrap();
        assert!(l_ti(&b).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let c = random_c(&mut rng);
            let b = assemble(&rv(&mut rng, 3.0), &rv(&mut rng, 3.0), &rv(&mut rng, 3.0), &c).unwrap();
            let mut swapped = b.clone();
            std::mem::swap(&mut swapped.fused_text_masked, &mut swapped.fused_image_masked);
            assert!((l_ti(&b) - l_ti(&swapped)).abs() < 1e-15);
            assert!(l_ti(&b) >= -1e-12);
        }
    }

    #[test]
    fn ti_two_class_example() {
        // fused vectors whose softmax are P = [0.5, 0.5] and Q = [0.25, 0.75]
        let mut b = assemble(&[0.0; 2], &[0.0; 2], &[0.0; 2], &CParams::uniform(2, 0.0)).unwrap();
        b.fused_text_masked = vec![-1.0, -1.0];
        b.fused_image_masked = vec![-2.0, -2.0 + 3f64.ln()];
        let p = [0.5, 0.5];
        let q = [0.25, 0.75];
        let want = kl_mean(&p, &q).unwrap() + kl_mean(&q, &p).unwrap();
        assert!((l_ti(&b) - want).abs() < 1e-15);
        assert!((kl_mean(&p, &q).unwrap() - 0.0719205).abs() < 1e-6);
        assert!((kl_mean(&q, &p).unwrap() - 0.0654060).abs() < 1e-6);
        assert!((l_ti(&b) - 0.1373265).abs() < 1e-6);
    }

    #[test]
    fn total_is_additive() {
        assert_eq!(total_loss(ClsLoss { joint: 0.0, text: 0.0, image: 0.0 }, (0.0, 0.0), 0.0).total, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let c = random_c(&mut rng);
            let b = assemble(&rv(&mut rng, 3.0), &rv(&mut rng, 3.0), &rv(&mut rng, 3.0), &c).unwrap();
            let l = breakdown(&b, 0, &PUBLISHED_W).unwrap();
            let sum = l.l_cls_joint + l.l_cls_text + l.l_cls_image + l.l_kl1 + l.l_kl2 + l.l_ti;
            assert!((l.total - sum).abs() < 1e-12);
        }
    }

    fn pack_scores(b: &ScoreBundle) -> Vec<f64> {
        [b.z_t.clone(), b.z_i.clone(), b.z_k.clone()].concat()
    }

    #[test]
    fn cls_grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for trial in 0..100 {
            let c = random_c(&mut rng);
            let b = assemble(&rv(&mut rng, 3.0), &rv(&mut rng, 3.0), &rv(&mut rng, 3.0), &c).unwrap();
            let label = trial % 3;
            for term in LossTerm::CLS {
                let g = cls_grad(&b, label, &PUBLISHED_W, &[term]).unwrap();
                let analytic = [g.d_z_t, g.d_z_i, g.d_z_k].concat();
                let numeric = finite_diff_grad(
                    |x| {
                        let bb = assemble(&x[0..3], &x[3..6], &x[6..9], &c).unwrap();
                        breakdown(&bb, label, &PUBLISHED_W).unwrap().get(term)
                    },
                    &pack_scores(&b),
                    DEFAULT_FD_STEP,
                )
                .unwrap();
                assert!(relative_error(&analytic, &numeric, 1e-8) < 1e-6, "{term:?}");
            }
        }
    }

    #[test]
    fn c_grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..100 {
            let c = random_c(&mut rng);
            let (z_t, z_i, z_k) = (rv(&mut rng, 3.0), rv(&mut rng, 3.0), rv(&mut rng, 3.0));
            let b = assemble(&z_t, &z_i, &z_k, &c).unwrap();
            for term in LossTerm::C_TERMS {
                let analytic = c_grad(&b, &[term]).concat();
                let numeric = finite_diff_grad(
                    |x| {
                        let cc = CParams { values: x.to_vec(), ..c.clone() };
                        let bb = assemble(&z_t, &z_i, &z_k, &cc).unwrap();
                        breakdown(&bb, 0, &W1).unwrap().get(term)
                    },
                    &c.values,
                    DEFAULT_FD_STEP,
                )
                .unwrap();
                assert!(relative_error(&analytic, &numeric, 1e-8) < 1e-6, "{term:?}");
            }
        }
    }

    #[test]
    fn c_grad_with_absent_modality() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..30 {
            let c = random_c(&mut rng);
            let z_t = rv(&mut rng, 2.0);
            let b = assemble_partial(Some(&z_t), None, None, &c).unwrap();
            // fused_full depends on c here; only the masked-branch paths are
            // differentiated, so compare against the l_ti term which has no
            // target
            let analytic = c_grad(&b, &[LossTerm::Ti]).concat();
            let numeric = finite_diff_grad(
                |x| {
                    let cc = CParams { values: x.to_vec(), ..c.clone() };
                    l_ti(&assemble_partial(Some(&z_t), None, None, &cc).unwrap())
                },
                &c.values,
                DEFAULT_FD_STEP,
            )
            .unwrap();
            assert!(relative_error(&analytic, &numeric, 1e-8) < 1e-6);
        }
    }

    #[test]
    fn absent_modalities_get_no_score_gradient() {
        let c = CParams::uniform(3, 0.1);
        let b = assemble_partial(Some(&[0.2, 0.5, -0.1]), None, None, &c).unwrap();
        let g = cls_grad(&b, 1, &W1, &LossTerm::CLS).unwrap();
        assert!(g.d_z_i.iter().chain(&g.d_z_k).all(|&v| v == 0.0));
        assert!(g.d_z_t.iter().any(|&v| v != 0.0));
        let l = l_cls(&b, 1, &W1).unwrap();
        assert_eq!(l.image, 0.0);
    }

    #[test]
    fn routing_tags() {
        for t in LossTerm::CLS {
            assert_eq!(t.routing(), Routing::BranchParams);
        }
        for t in LossTerm::C_TERMS {
            assert_eq!(t.routing(), Routing::CParams);
        }
    }
}
