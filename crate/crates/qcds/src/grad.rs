//! Loss head (softmax + negative log-likelihood) and exact parameter-shift
//! gradients of the loss with respect to the circuit angles.

use rayon::prelude::*;

use crate::circuit::BoundCircuit;
use crate::error::{Error, Result};

/// Loss of one sample together with its class probabilities.
#[derive(Debug, Clone)]
pub struct LossValue {
    pub value: f64,
    pub per_class_probs: Vec<f64>,
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Negative log-likelihood of `label` under softmax(logits).
pub fn softmax_nll(logits: &[f64], label: usize) -> Result<LossValue> {
    if label >= logits.len() {
        return Err(Error::Label(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let probs = softmax(logits);
    Ok(LossValue {
        value: -probs[label].ln(),
        per_class_probs: probs,
    })
}

/// d(nll)/d(logits) = probs - onehot(label).
pub fn softmax_nll_grad(probs: &[f64], label: usize) -> Vec<f64> {
    probs
        .iter()
        .enumerate()
        .map(|(k, &p)| if k == label { p - 1.0 } else { p })
        .collect()
}

const SHIFT: f64 = std::f64::consts::FRAC_PI_2;

/// Jacobian d(output_k)/d(theta[l][i]) for one input, by the parameter-shift
/// rule: `(f(theta + pi/2 e) - f(theta - pi/2 e)) / 2` per parameter.
///
/// Returns `jac[l][i][k]`.
pub fn output_jacobian(circuit: &BoundCircuit, x: &[f64]) -> Result<Vec<Vec<Vec<f64>>>> {
    let mut shifted = circuit.clone();
    let (n_layers, n_qubits) = (circuit.design().n_layers(), circuit.design().n_qubits());
    let mut jac = vec![vec![Vec::new(); n_qubits]; n_layers];
    for l in 0..n_layers {
        for i in 0..n_qubits {
            let base = circuit.theta()[l][i];
            shifted.theta_mut()[l][i] = base + SHIFT;
            let plus = shifted.forward(x)?;
            shifted.theta_mut()[l][i] = base - SHIFT;
            let minus = shifted.forward(x)?;
            shifted.theta_mut()[l][i] = base;
            jac[l][i] = plus
                .iter()
                .zip(&minus)
                .map(|(p, m)| 0.5 * (p - m))
                .collect();
        }
    }
    Ok(jac)
}

/// Batch-averaged gradient of the softmax/NLL loss with respect to theta.
///
/// Samples are processed in parallel; the reduction sums in sample order so
/// results are bit-stable for a fixed batch.
pub fn param_shift_gradient(
    circuit: &BoundCircuit,
    batch: &[(Vec<f64>, usize)],
) -> Result<Vec<Vec<f64>>> {
    if batch.is_empty() {
        return Err(Error::Evaluation("gradient over an empty batch".into()));
    }
    let per_sample: Vec<Result<Vec<Vec<f64>>>> = batch
        .par_iter()
        .map(|(x, label)| {
            let logits = circuit.forward(x)?;
            let loss = softmax_nll(&logits, *label)?;
            let dloss = softmax_nll_grad(&loss.per_class_probs, *label);
            let jac = output_jacobian(circuit, x)?;
            Ok(jac
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|dk| dk.iter().zip(&dloss).map(|(a, b)| a * b).sum::<f64>())
                        .collect()
                })
                .collect())
        })
        .collect();

    let (n_layers, n_qubits) = (circuit.design().n_layers(), circuit.design().n_qubits());
    let mut grad = vec![vec![0.0; n_qubits]; n_layers];
    for sample in per_sample {
        let g = sample?;
        for l in 0..n_layers {
            for i in 0..n_qubits {
                grad[l][i] += g[l][i];
            }
        }
    }
    let scale = 1.0 / batch.len() as f64;
    for row in &mut grad {
        for v in row {
            *v *= scale;
        }
    }
    Ok(grad)
}

/// Batch-averaged loss (for monitoring; no gradients).
pub fn batch_loss(circuit: &BoundCircuit, batch: &[(Vec<f64>, usize)]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Evaluation("loss over an empty batch".into()));
    }
    let mut total = 0.0;
    for (x, label) in batch {
        total += softmax_nll(&circuit.forward(x)?, *label)?.value;
    }
    Ok(total / batch.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{make_benchmark, BenchmarkKind};
    use crate::design::{Design, FixedGate, QubitDecision, Rotation};
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn uniform_logits_give_ln3() {
        let loss = softmax_nll(&[0.0, 0.0, 0.0], 0).unwrap();
        assert_abs_diff_eq!(loss.value, 3.0f64.ln(), epsilon = 1e-12);
        for p in &loss.per_class_probs {
            assert_abs_diff_eq!(*p, 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn softmax_shift_invariance() {
        let a = softmax_nll(&[1.0, -1.0, -1.0], 1).unwrap();
        let b = softmax_nll(&[0.0, -2.0, -2.0], 1).unwrap();
        for (pa, pb) in a.per_class_probs.iter().zip(&b.per_class_probs) {
            assert_abs_diff_eq!(pa, pb, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(a.value, b.value, epsilon = 1e-12);
    }

    #[test]
    fn two_class_closed_form() {
        let loss = softmax_nll(&[1.0, -1.0], 0).unwrap();
        assert_abs_diff_eq!(loss.value, (1.0 + (-2.0f64).exp()).ln(), epsilon = 1e-12);
        assert!(softmax_nll(&[1.0, -1.0], 2).is_err());
    }

    #[test]
    fn probs_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let logits: Vec<f64> = (0..6).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let loss = softmax_nll(&logits, 3).unwrap();
            let sum: f64 = loss.per_class_probs.iter().sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
            assert!(loss.per_class_probs.iter().all(|&p| p > 0.0 && p < 1.0));
            assert!(loss.value >= 0.0);
        }
    }

    #[test]
    fn single_qubit_jacobian_is_analytic() {
        // RY(theta) RY(x) |0> has <sigma_z> = cos(theta + x); at x = 0 the
        // derivative is -sin(theta)
        let cell = QubitDecision {
            reupload: false,
            rotation: Rotation::RY,
            fixed_gate: FixedGate::H,
        };
        let d = Design::uniform(1, 1, cell).unwrap();
        // H then RY(theta): <sigma_z> = -sin(theta) for x = 0, so the
        // derivative is -cos(theta); check at theta = 0 and pi/2
        for (theta, expected) in [(0.0, -1.0), (PI / 2.0, 0.0)] {
            let c = BoundCircuit::new(d.clone(), vec![vec![theta]], 1).unwrap();
            let jac = output_jacobian(&c, &[0.0]).unwrap();
            assert_abs_diff_eq!(jac[0][0][0], expected, epsilon = 1e-12);
        }
    }

    fn finite_difference_loss_grad(
        circuit: &BoundCircuit,
        batch: &[(Vec<f64>, usize)],
        h: f64,
    ) -> Vec<Vec<f64>> {
        let mut shifted = circuit.clone();
        let (n_layers, n_qubits) = (
            circuit.design().n_layers(),
            circuit.design().n_qubits(),
        );
        let mut grad = vec![vec![0.0; n_qubits]; n_layers];
        for l in 0..n_layers {
            for i in 0..n_qubits {
                let base = circuit.theta()[l][i];
                shifted.theta_mut()[l][i] = base + h;
                let plus = batch_loss(&shifted, batch).unwrap();
                shifted.theta_mut()[l][i] = base - h;
                let minus = batch_loss(&shifted, batch).unwrap();
                shifted.theta_mut()[l][i] = base;
                grad[l][i] = (plus - minus) / (2.0 * h);
            }
        }
        grad
    }

    #[test]
    fn parameter_shift_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..5 {
            let d = Design::random(&mut rng, 4, 3).unwrap();
            let theta: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..4).map(|_| rng.gen_range(-PI..PI)).collect())
                .collect();
            let c = BoundCircuit::new(d, theta, 3).unwrap();
            let batch: Vec<(Vec<f64>, usize)> = (0..4)
                .map(|k| ((0..4).map(|_| rng.gen_range(0.0..PI)).collect(), k % 3))
                .collect();
            let exact = param_shift_gradient(&c, &batch).unwrap();
            let fd = finite_difference_loss_grad(&c, &batch, 1e-5);
            for (re, rf) in exact.iter().zip(&fd) {
                for (e, f) in re.iter().zip(rf) {
                    if e.abs() > 1e-2 {
                        assert!((e - f).abs() / e.abs() < 1e-6, "rel err: {e} vs {f}");
                    } else {
                        assert!((e - f).abs() < 1e-8, "abs err: {e} vs {f}");
                    }
                }
            }
        }
    }

    #[test]
    fn disconnected_lightcone_has_zero_gradient() {
        // no entangling gates anywhere, so parameters on unmeasured qubits
        // cannot influence the measured output
        let cell = QubitDecision {
            reupload: false,
            rotation: Rotation::RY,
            fixed_gate: FixedGate::Z,
        };
        let d = Design::uniform(4, 3, cell).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let theta: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..4).map(|_| rng.gen_range(-PI..PI)).collect())
            .collect();
        let c = BoundCircuit::new(d, theta, 1).unwrap();
        let batch = vec![(vec![0.3, 0.7, 1.1, 2.0], 0usize)];
        let grad = param_shift_gradient(&c, &batch).unwrap();
        for l in 0..3 {
            for i in 1..4 {
                assert_abs_diff_eq!(grad[l][i], 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn gradient_vanishes_at_separable_minimum() {
        // separable 2-qubit toy without entanglement: logits are
        // [cos(theta_0), cos(theta_1)], and for label 0 the loss attains its
        // global minimum at theta = (0, pi) where both sines vanish
        let cell = QubitDecision {
            reupload: false,
            rotation: Rotation::RY,
            fixed_gate: FixedGate::Z,
        };
        let d = Design::uniform(2, 1, cell).unwrap();
        let c = BoundCircuit::new(d, vec![vec![0.0, PI]], 2).unwrap();
        let batch = vec![(vec![0.0, 0.0], 0usize)];
        let grad = param_shift_gradient(&c, &batch).unwrap();
        assert_abs_diff_eq!(grad[0][0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(grad[0][1], 0.0, epsilon = 1e-12);
    }
}
