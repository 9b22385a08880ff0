//! Offline training of the cascade's classifiers.

use serde::{Deserialize, Serialize};

use super::{arm_input_len, arm_inputs, ArmModel, LabeledContext};
use crate::error::{Result, UssError};
use crate::glm::mle::{fit_on_sphere, fit_penalized, ObservationLog};

/// Parameters larger than this are treated as a degenerate fit and clipped
/// to the ball of this radius.
const TRAINING_NORM_BOUND: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedArm {
    pub model: ArmModel,
    /// The data held a single class, or the penalized optimum exceeded the
    /// norm bound; the parameters sit on the boundary of that ball.
    pub projected: bool,
    pub train_accuracy: f64,
}

/// Fits `min_θ mean log-loss + (reg/2)‖θ‖²` on the columns `cols` (and their
/// pairwise products when `quadratic`) plus an intercept. The intercept is
/// penalized like every other weight, so heavy regularization pulls
/// predictions toward 1/2.
///
/// Deterministic: the Newton solver starts from zero and uses no randomness.
pub fn train_arm(
    data: &[LabeledContext],
    cols: &[usize],
    quadratic: bool,
    reg: f64,
) -> Result<TrainedArm> {
    if data.is_empty() {
        return Err(UssError::Precondition(
            "cannot train on an empty dataset".into(),
        ));
    }
    let d = data[0].x.len();
    if let Some(c) = cols.iter().find(|&&c| c >= d) {
        return Err(UssError::Config(format!(
            "feature column {c} out of range for {d}-dimensional contexts"
        )));
    }
    if !(reg >= 0.0 && reg.is_finite()) {
        return Err(UssError::Config(format!(
            "regularization must be nonnegative, got {reg}"
        )));
    }
    let mut log = ObservationLog::new(arm_input_len(cols.len(), quadratic) + 1);
    let mut row = Vec::with_capacity(log.dim());
    for ctx in data {
        row.clear();
        row.push(1.0);
        arm_inputs(&ctx.x, cols, quadratic, &mut row);
        log.push(&row, ctx.y)?;
    }
    let single_class = data.iter().all(|c| c.y == data[0].y);
    let fit = if single_class {
        fit_on_sphere(&log, TRAINING_NORM_BOUND)?
    } else {
        fit_penalized(&log, reg * data.len() as f64, TRAINING_NORM_BOUND)?
    };
    let model = ArmModel {
        columns: cols.to_vec(),
        intercept: fit.theta[0],
        weights: fit.theta[1..].to_vec(),
        quadratic,
    };
    let correct = data
        .iter()
        .filter(|c| (model.prob(&c.x) > 0.5) == c.y)
        .count();
    Ok(TrainedArm {
        train_accuracy: correct as f64 / data.len() as f64,
        model,
        projected: fit.projected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::generate_synthetic;

    #[test]
    fn huge_regularization_gives_coin_flips() {
        let data = generate_synthetic(300, 1).unwrap();
        let arm = train_arm(&data, &[0, 1, 2], false, 1e6).unwrap();
        assert!(arm.model.weights.iter().all(|w| w.abs() < 1e-5));
        assert!(arm.model.intercept.abs() < 1e-5);
        for c in &data {
            assert!((arm.model.prob(&c.x) - 0.5).abs() < 1e-5);
        }
    }

    #[test]
    fn separable_toy_set_is_fit_perfectly() {
        let data: Vec<LabeledContext> = (0..40)
            .map(|k| {
                let v = -1.0 + 2.0 * (k as f64 + 0.5) / 40.0;
                LabeledContext {
                    x: vec![v, 0.3],
                    y: v > 0.1,
                }
            })
            .collect();
        let arm = train_arm(&data, &[0], false, 1e-4).unwrap();
        let acc = data
            .iter()
            .filter(|c| (arm.model.prob(&c.x) > 0.5) == c.y)
            .count() as f64
            / data.len() as f64;
        assert_eq!(acc, 1.0);
        assert_eq!(arm.train_accuracy, 1.0);
    }

    #[test]
    fn single_class_without_penalty_is_projected() {
        let data: Vec<LabeledContext> = (0..10)
            .map(|k| LabeledContext {
                x: vec![k as f64 / 10.0],
                y: true,
            })
            .collect();
        let arm = train_arm(&data, &[0], false, 0.0).unwrap();
        assert!(arm.projected);
        let norm = (arm.model.intercept.powi(2) + arm.model.weights[0].powi(2)).sqrt();
        assert!((norm - TRAINING_NORM_BOUND).abs() < 1e-6, "{norm} {arm:?}");
    }

    #[test]
    fn column_subset_is_respected() {
        let data = generate_synthetic(100, 2).unwrap();
        let arm = train_arm(&data, &[0, 2], false, 0.01).unwrap();
        assert_eq!(arm.model.columns, vec![0, 2]);
        assert_eq!(arm.model.weights.len(), 2);
        assert!(train_arm(&data, &[5], false, 0.01).is_err());
        assert!(train_arm(&[], &[0], false, 0.01).is_err());
    }

    #[test]
    fn quadratic_inputs_fit_the_synthetic_rule() {
        let data = generate_synthetic(2000, 6).unwrap();
        let lin = train_arm(&data, &[0, 1, 2], false, 1e-4).unwrap();
        let quad = train_arm(&data, &[0, 1, 2], true, 1e-4).unwrap();
        assert_eq!(quad.model.weights.len(), 9);
        assert!(quad.train_accuracy > 0.97, "{}", quad.train_accuracy);
        assert!(quad.train_accuracy > lin.train_accuracy + 0.05);
        // Hand evaluation of the logit for one context.
        let x = &data[3].x;
        let w = &quad.model.weights;
        let mut z = quad.model.intercept + w[0] * x[0] + w[1] * x[1] + w[2] * x[2];
        let prods = [
            x[0] * x[0],
            x[0] * x[1],
            x[0] * x[2],
            x[1] * x[1],
            x[1] * x[2],
            x[2] * x[2],
        ];
        for (k, p) in prods.iter().enumerate() {
            z += w[3 + k] * p;
        }
        assert!((quad.model.prob(x) - 1.0 / (1.0 + (-z).exp())).abs() < 1e-12);
    }

    #[test]
    fn training_is_deterministic() {
        let data = generate_synthetic(500, 4).unwrap();
        assert_eq!(
            train_arm(&data, &[0, 1, 2], false, 0.05).unwrap(),
            train_arm(&data, &[0, 1, 2], false, 0.05).unwrap()
        );
    }
}
