//! Adversarial objective with an R1 gradient penalty, as pure functions of
//! discriminator logits.

use crate::diffcore::Tensor;
use crate::mpi::CameraPose;
use crate::{Error, Result};

pub const DEFAULT_ETA: f64 = 10.0;
pub const DEFAULT_LAMBDA: f64 = 0.5;

/// `f(x) = −log(1 + e^{−x})`, computed without overflow.
pub fn softplus_neg(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// `f'(x) = 1 / (1 + e^{x})`.
pub fn softplus_neg_grad(x: f64) -> f64 {
    if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// How each logit enters the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GanObjective {
    /// The loss as printed: `f(log σ(s))` for both fake and real logits,
    /// which simplifies to `−log(2 + e^{−s})`.
    #[default]
    Printed,
    /// The usual two-sided form `f(s_fake) + f(−s_real)`.
    NonSaturating,
}

fn printed_term(s: f64) -> f64 {
    // f(log σ(s)) = −log(1 + 1/σ(s)) = −log(2 + e^{−s})
    if s >= 0.0 {
        -(2.0 + (-s).exp()).ln()
    } else {
        s - (2.0 * s.exp()).ln_1p()
    }
}

fn printed_grad(s: f64) -> f64 {
    if s >= 0.0 {
        let e = (-s).exp();
        e / (2.0 + e)
    } else {
        1.0 / (1.0 + 2.0 * s.exp())
    }
}

/// `f(log σ(s))` evaluated literally; the reference for [`GanObjective::Printed`].
pub fn printed_term_direct(s: f64) -> f64 {
    softplus_neg(logistic(s).ln())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GanLossConfig {
    pub eta: f64,
    pub lambda: f64,
    pub objective: GanObjective,
}

impl Default for GanLossConfig {
    fn default() -> Self {
        GanLossConfig {
            eta: DEFAULT_ETA,
            lambda: DEFAULT_LAMBDA,
            objective: GanObjective::Printed,
        }
    }
}

/// Loss value and its partial derivatives with respect to every input.
#[derive(Debug, Clone, PartialEq)]
pub struct GanLoss {
    pub value: f64,
    pub d_fake: Vec<f64>,
    pub d_real: Vec<f64>,
    pub d_grad_real: Vec<Tensor>,
    pub d_lvc: f64,
}

type Scalar = fn(f64) -> f64;

/// `mean_fake term + mean_real term + η · mean ‖∇_real‖² + λ · lvc`.
///
/// `grad_real` holds the gradients of `log P(real)` with respect to each real
/// image; the penalty averages their squared norms (zero when empty).
pub fn gan_loss_with_r1(
    score_fake: &[f64],
    score_real: &[f64],
    grad_real: &[Tensor],
    lvc: f64,
    cfg: &GanLossConfig,
) -> Result<GanLoss> {
    if score_fake.is_empty() || score_real.is_empty() {
        return Err(Error::invalid("gan_loss_with_r1", "need at least one fake and one real logit"));
    }
    let finite = score_fake.iter().chain(score_real).all(|v| v.is_finite())
        && grad_real.iter().all(Tensor::is_finite)
        && lvc.is_finite()
        && cfg.eta.is_finite()
        && cfg.lambda.is_finite();
    if !finite {
        return Err(Error::NonFinite("gan_loss_with_r1"));
    }
    let (nf, nr) = (score_fake.len() as f64, score_real.len() as f64);
    let (fake_term, fake_grad, real_term, real_grad): (Scalar, Scalar, Scalar, Scalar) =
        match cfg.objective {
            GanObjective::Printed => (printed_term, printed_grad, printed_term, printed_grad),
            GanObjective::NonSaturating => (
                softplus_neg,
                softplus_neg_grad,
                |s| softplus_neg(-s),
                |s| -softplus_neg_grad(-s),
            ),
        };
    let mut value = 0.0;
    value += score_fake.iter().map(|&s| fake_term(s)).sum::<f64>() / nf;
    value += score_real.iter().map(|&s| real_term(s)).sum::<f64>() / nr;
    let ng = grad_real.len().max(1) as f64;
    value += cfg.eta * grad_real.iter().map(Tensor::squared_norm).sum::<f64>() / ng;
    value += cfg.lambda * lvc;
    Ok(GanLoss {
        value,
        d_fake: score_fake.iter().map(|&s| fake_grad(s) / nf).collect(),
        d_real: score_real.iter().map(|&s| real_grad(s) / nr).collect(),
        d_grad_real: grad_real.iter().map(|g| g.map(|v| 2.0 * cfg.eta * v / ng)).collect(),
        d_lvc: cfg.lambda,
    })
}

/// Toy pose-conditioned scorer `s = ⟨w, I⟩ + ⟨u, v(pose)⟩ + b` for exercising
/// the losses; not a trained discriminator.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDiscriminator {
    pub image_weights: Tensor,
    pub pose_weights: [f64; 3],
    pub bias: f64,
}

impl LinearDiscriminator {
    pub fn score(&self, image: &Tensor, pose: &CameraPose) -> Result<f64> {
        image.expect_shape("LinearDiscriminator", self.image_weights.shape())?;
        let v = pose.view_direction();
        let dot: f64 = image.data().iter().zip(self.image_weights.data()).map(|(a, b)| a * b).sum();
        Ok(dot + self.pose_weights.iter().zip(v.iter()).map(|(a, b)| a * b).sum::<f64>() + self.bias)
    }

    /// `∇_I log σ(s(I))`, the gradient penalized by the R1 term.
    pub fn log_real_grad(&self, image: &Tensor, pose: &CameraPose) -> Result<Tensor> {
        let s = self.score(image, pose)?;
        let k = softplus_neg_grad(s);
        Ok(self.image_weights.map(|w| k * w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_neg_values() {
        assert!((softplus_neg(0.0) + std::f64::consts::LN_2).abs() < 1e-15);
        assert!(softplus_neg(40.0) > -1e-17 && softplus_neg(40.0) <= 0.0);
        assert!((softplus_neg(-100.0) + 100.0).abs() < 1e-12);
        assert!(softplus_neg(-1e6).is_finite());
        for x in [-30.0, -2.5, -0.1, 0.0, 0.7, 3.0, 25.0] {
            assert!((softplus_neg(x) - softplus_neg(-x) - x).abs() < 1e-10);
        }
    }

    #[test]
    fn printed_simplification_matches_direct_composition() {
        for s in [-30.0, -8.0, -1.0, -1e-3, 0.0, 0.5, 4.0, 20.0] {
            assert!((printed_term(s) - printed_term_direct(s)).abs() < 1e-10, "{s}");
        }
    }

    #[test]
    fn zero_logits_printed_value() {
        let cfg = GanLossConfig {
            lambda: 0.0,
            ..GanLossConfig::default()
        };
        let l = gan_loss_with_r1(&[0.0], &[0.0], &[Tensor::zeros(&[2, 2, 3])], 0.7, &cfg).unwrap();
        // f(log ½) = −log(1 + 2) for each of the two terms
        assert!((l.value + 2.0 * 3f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn zero_gradients_add_no_penalty() {
        let cfg = GanLossConfig {
            lambda: 0.0,
            ..GanLossConfig::default()
        };
        let with = gan_loss_with_r1(&[0.3], &[-0.2], &[Tensor::zeros(&[3])], 0.0, &cfg).unwrap();
        let without = gan_loss_with_r1(&[0.3], &[-0.2], &[], 0.0, &cfg).unwrap();
        assert_eq!(with.value, without.value);
        assert_eq!(DEFAULT_ETA, 10.0);
        assert_eq!(DEFAULT_LAMBDA, 0.5);
    }

    #[test]
    fn rejects_non_finite() {
        let cfg = GanLossConfig::default();
        assert!(gan_loss_with_r1(&[f64::NAN], &[0.0], &[], 0.0, &cfg).is_err());
        assert!(gan_loss_with_r1(&[0.0], &[0.0], &[], f64::INFINITY, &cfg).is_err());
    }
}
