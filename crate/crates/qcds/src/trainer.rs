//! Mini-batch gradient-descent training of a bound circuit and metric
//! evaluation on dataset splits.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::BoundCircuit;
use crate::data::{Dataset, Split};
use crate::design::Design;
use crate::error::{Error, Result};
use crate::grad::{param_shift_gradient, softmax, softmax_nll};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    /// Angles start uniform in [-init_scale, init_scale].
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 8,
            learning_rate: 0.05,
            optimizer: Optimizer::Adam,
            seed: 0,
            init_scale: std::f64::consts::PI / 8.0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs < 1 || self.batch_size < 1 || self.learning_rate <= 0.0 {
            return Err(Error::Config(
                "epochs and batch_size must be >= 1, learning_rate > 0".into(),
            ));
        }
        Ok(())
    }
}

/// One epoch's worth of metrics. Losses are per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
    pub test_loss: Option<f64>,
    pub test_acc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn final_record(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Per-sample loss and accuracy over `rows`. Argmax ties break toward the
/// lowest class index.
pub fn evaluate(circuit: &BoundCircuit, rows: &[(Vec<f64>, usize)]) -> Result<(f64, f64)> {
    if rows.is_empty() {
        return Err(Error::Evaluation("cannot evaluate on zero rows".into()));
    }
    let mut loss_total = 0.0;
    let mut correct = 0usize;
    for (x, label) in rows {
        let logits = circuit.forward(x)?;
        loss_total += softmax_nll(&logits, *label)?.value;
        let probs = softmax(&logits);
        let mut argmax = 0usize;
        for (k, &p) in probs.iter().enumerate() {
            if p > probs[argmax] {
                argmax = k;
            }
        }
        if argmax == *label {
            correct += 1;
        }
    }
    Ok((
        loss_total / rows.len() as f64,
        correct as f64 / rows.len() as f64,
    ))
}

/// Train a design from scratch. Returns the final angles and the per-epoch
/// history. Deterministic for a fixed (design, config, split).
pub fn train(
    design: &Design,
    dataset: &Dataset,
    split: &Split,
    config: &TrainConfig,
) -> Result<(Vec<Vec<f64>>, TrainHistory)> {
    config.validate()?;
    if design.n_qubits() != dataset.n_features {
        return Err(Error::Config(format!(
            "design has {} qubits but dataset has {} features",
            design.n_qubits(),
            dataset.n_features
        )));
    }
    if dataset.n_classes > design.n_qubits() {
        return Err(Error::Config(format!(
            "{} classes need at least that many measured qubits, circuit has {}",
            dataset.n_classes,
            design.n_qubits()
        )));
    }
    if split.train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let theta: Vec<Vec<f64>> = (0..design.n_layers())
        .map(|_| {
            (0..design.n_qubits())
                .map(|_| rng.gen_range(-config.init_scale..=config.init_scale))
                .collect()
        })
        .collect();
    let mut circuit = BoundCircuit::new(design.clone(), theta, dataset.n_classes)?;

    let train_rows = dataset.rows(&split.train);
    let val_rows = dataset.rows(&split.validation);
    let test_rows = dataset.rows(&split.test);

    let n_params = circuit.n_params();
    let mut m1 = vec![0.0; n_params];
    let mut m2 = vec![0.0; n_params];
    let mut step = 0usize;

    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..train_rows.len()).collect();

    for epoch in 0..config.epochs {
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(Vec<f64>, usize)> =
                chunk.iter().map(|&i| train_rows[i].clone()).collect();
            let grad = param_shift_gradient(&circuit, &batch)?;
            step += 1;
            let n_qubits = design.n_qubits();
            for l in 0..design.n_layers() {
                for q in 0..n_qubits {
                    let g = grad[l][q];
                    let p = l * n_qubits + q;
                    let delta = match config.optimizer {
                        Optimizer::Sgd => config.learning_rate * g,
                        Optimizer::Adam => {
                            m1[p] = ADAM_BETA1 * m1[p] + (1.0 - ADAM_BETA1) * g;
                            m2[p] = ADAM_BETA2 * m2[p] + (1.0 - ADAM_BETA2) * g * g;
                            let m1_hat = m1[p] / (1.0 - ADAM_BETA1.powi(step as i32));
                            let m2_hat = m2[p] / (1.0 - ADAM_BETA2.powi(step as i32));
                            config.learning_rate * m1_hat / (m2_hat.sqrt() + ADAM_EPS)
                        }
                    };
                    circuit.theta_mut()[l][q] -= delta;
                }
            }
        }

        let (train_loss, train_acc) = evaluate(&circuit, &train_rows)?;
        let (val_loss, val_acc) = if val_rows.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate(&circuit, &val_rows)?;
            (Some(l), Some(a))
        };
        let (test_loss, test_acc) = if test_rows.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate(&circuit, &test_rows)?;
            (Some(l), Some(a))
        };
        history.records.push(EpochRecord {
            epoch: epoch + 1,
            train_loss,
            train_acc,
            val_loss,
            val_acc,
            test_loss,
            test_acc,
        });
    }

    Ok((circuit.theta().to_vec(), history))
}
