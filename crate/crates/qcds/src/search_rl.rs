//! Policy-gradient design search: a classical MLP controller and a hybrid
//! controller built from small fixed-structure PQCs, either suggesting whole
//! circuits or one layer replicated across the depth.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::BoundCircuit;
use crate::data::{Dataset, Split};
use crate::design::{Design, FixedGate, QubitDecision, Rotation};
use crate::error::{Error, Result};
use crate::trainer::{train, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleMode {
    /// The controller emits every cell of the grid.
    Whole,
    /// The controller emits one layer, replicated across the depth.
    Layer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    ValLoss,
    ValAcc,
}

/// Logits of the three decision heads for one design cell.
#[derive(Debug, Clone)]
pub struct HeadLogits {
    pub reupload: Vec<f64>,
    pub rotation: Vec<f64>,
    pub gate: Vec<f64>,
}

/// A sampled design with the data needed for the policy-gradient update.
#[derive(Debug, Clone)]
pub struct PolicySample {
    pub design: Design,
    pub log_prob: f64,
    pub entropy: f64,
    /// (reupload, rotation, gate) choice index per slot
    pub actions: Vec<[usize; 3]>,
}

/// Score-function gradient of `log pi(action)` with respect to the logits.
pub fn categorical_score(probs: &[f64], action: usize) -> Vec<f64> {
    probs
        .iter()
        .enumerate()
        .map(|(k, &p)| if k == action { 1.0 - p } else { -p })
        .collect()
}

/// Gradient of the entropy `H = -sum p log p` with respect to the logits.
pub fn entropy_logit_grad(probs: &[f64]) -> Vec<f64> {
    let h: f64 = -probs.iter().map(|&p| p * p.ln()).sum::<f64>();
    probs.iter().map(|&p| -p * (p.ln() + h)).collect()
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().map(|&p| p * p.ln()).sum::<f64>()
}

const SHARED_WIDTH_1: usize = 48;
const SHARED_WIDTH_2: usize = 12;
const INPUT_WIDTH: usize = 4;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Linear {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl Linear {
    fn zeros(rows: usize, cols: usize) -> Self {
        Linear {
            w: vec![vec![0.0; cols]; rows],
            b: vec![0.0; rows],
        }
    }

    fn random(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Self {
        Linear {
            w: (0..rows)
                .map(|_| (0..cols).map(|_| rng.gen_range(-scale..scale)).collect())
                .collect(),
            b: vec![0.0; rows],
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.w
            .iter()
            .zip(&self.b)
            .map(|(row, b)| row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b)
            .collect()
    }
}

/// Feed-forward controller: constant input, two shared layers (48 and 12
/// units, tanh) and one linear head per decision of every slot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassicalPolicy {
    n_slots: usize,
    gate_pool: Vec<FixedGate>,
    shared1: Linear,
    shared2: Linear,
    /// heads[slot] = [reupload(2), rotation(3), gate(pool)]
    heads: Vec<[Linear; 3]>,
}

impl ClassicalPolicy {
    pub fn new(rng: &mut impl Rng, n_slots: usize, gate_pool: Vec<FixedGate>) -> Self {
        // zero head weights start the policy exactly uniform
        let heads = (0..n_slots)
            .map(|_| {
                [
                    Linear::zeros(2, SHARED_WIDTH_2),
                    Linear::zeros(3, SHARED_WIDTH_2),
                    Linear::zeros(gate_pool.len(), SHARED_WIDTH_2),
                ]
            })
            .collect();
        ClassicalPolicy {
            n_slots,
            gate_pool,
            shared1: Linear::random(rng, SHARED_WIDTH_1, INPUT_WIDTH, 0.1),
            shared2: Linear::random(rng, SHARED_WIDTH_2, SHARED_WIDTH_1, 0.1),
            heads,
        }
    }

    fn hidden(&self) -> (Vec<f64>, Vec<f64>) {
        let input = vec![1.0; INPUT_WIDTH];
        let h1: Vec<f64> = self.shared1.forward(&input).iter().map(|v| v.tanh()).collect();
        let h2: Vec<f64> = self.shared2.forward(&h1).iter().map(|v| v.tanh()).collect();
        (h1, h2)
    }

    fn slot_logits(&self) -> Vec<HeadLogits> {
        let (_, h2) = self.hidden();
        self.heads
            .iter()
            .map(|[r, rot, g]| HeadLogits {
                reupload: r.forward(&h2),
                rotation: rot.forward(&h2),
                gate: g.forward(&h2),
            })
            .collect()
    }

    /// Ascend along the given per-head logit gradients.
    fn apply_logit_grads(&mut self, grads: &[HeadLogits], lr: f64) {
        let input = vec![1.0; INPUT_WIDTH];
        let (h1, h2) = self.hidden();
        let mut dh2 = vec![0.0; SHARED_WIDTH_2];
        for (slot, g) in grads.iter().enumerate() {
            let [head_r, head_rot, head_g] = &mut self.heads[slot];
            for (head, dz) in [
                (head_r, &g.reupload),
                (head_rot, &g.rotation),
                (head_g, &g.gate),
            ] {
                for (row, &dzi) in dz.iter().enumerate() {
                    for (col, &h2j) in h2.iter().enumerate() {
                        dh2[col] += head.w[row][col] * dzi;
                        head.w[row][col] += lr * dzi * h2j;
                    }
                    head.b[row] += lr * dzi;
                }
            }
        }
        // backprop into the shared trunk
        let da2: Vec<f64> = dh2.iter().zip(&h2).map(|(d, h)| d * (1.0 - h * h)).collect();
        let mut dh1 = vec![0.0; SHARED_WIDTH_1];
        for (row, &d) in da2.iter().enumerate() {
            for (col, &h1j) in h1.iter().enumerate() {
                dh1[col] += self.shared2.w[row][col] * d;
                self.shared2.w[row][col] += lr * d * h1j;
            }
            self.shared2.b[row] += lr * d;
        }
        let da1: Vec<f64> = dh1.iter().zip(&h1).map(|(d, h)| d * (1.0 - h * h)).collect();
        for (row, &d) in da1.iter().enumerate() {
            for (col, &xj) in input.iter().enumerate() {
                self.shared1.w[row][col] += lr * d * xj;
            }
            self.shared1.b[row] += lr * d;
        }
    }
}

const HYBRID_LOGIT_SCALE: f64 = 5.0;
const HYBRID_LAYERS: usize = 3;

/// One fixed-structure controller PQC: per layer, H on every qubit, one RY
/// per qubit, then a CZ between qubits 0 and 1; sigma_z measurements on the
/// first `n_meas` qubits, scaled into logits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControllerPqc {
    n_qubits: usize,
    n_meas: usize,
    /// theta[layer * n_qubits + qubit]
    theta: Vec<f64>,
}

impl ControllerPqc {
    fn new(rng: &mut impl Rng, n_qubits: usize, n_meas: usize) -> Self {
        ControllerPqc {
            n_qubits,
            n_meas,
            theta: (0..HYBRID_LAYERS * n_qubits)
                .map(|_| rng.gen_range(-0.1..0.1))
                .collect(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    fn expectations(&self, theta: &[f64]) -> Vec<f64> {
        use crate::qsim::{GateKind, GateOp, StateVector};
        let mut state = StateVector::zero(self.n_qubits).expect("small register");
        for layer in 0..HYBRID_LAYERS {
            for q in 0..self.n_qubits {
                state.apply(&GateOp::new(GateKind::H, vec![q])).unwrap();
            }
            for q in 0..self.n_qubits {
                state
                    .apply(&GateOp::rotation(
                        GateKind::RY,
                        q,
                        theta[layer * self.n_qubits + q],
                    ))
                    .unwrap();
            }
            state.apply(&GateOp::new(GateKind::CZ, vec![0, 1])).unwrap();
        }
        (0..self.n_meas)
            .map(|q| state.sigma_z_expectation(q).unwrap())
            .collect()
    }

    pub fn logits(&self) -> Vec<f64> {
        self.expectations(&self.theta)
            .iter()
            .map(|e| e * HYBRID_LOGIT_SCALE)
            .collect()
    }

    /// d(logit_k)/d(theta_j) by the parameter-shift rule.
    pub fn logits_jacobian(&self) -> Vec<Vec<f64>> {
        let shift = std::f64::consts::FRAC_PI_2;
        let mut scratch = self.theta.clone();
        (0..self.theta.len())
            .map(|j| {
                let base = scratch[j];
                scratch[j] = base + shift;
                let plus = self.expectations(&scratch);
                scratch[j] = base - shift;
                let minus = self.expectations(&scratch);
                scratch[j] = base;
                plus.iter()
                    .zip(&minus)
                    .map(|(p, m)| HYBRID_LOGIT_SCALE * 0.5 * (p - m))
                    .collect()
            })
            .collect()
    }

    fn ascend(&mut self, dlogits: &[f64], lr: f64) {
        let jac = self.logits_jacobian();
        for (j, row) in jac.iter().enumerate() {
            let g: f64 = row.iter().zip(dlogits).map(|(a, b)| a * b).sum();
            self.theta[j] += lr * g;
        }
    }
}

/// One small PQC per decision per slot: 3 qubits / 2 logits for reupload,
/// 3 qubits / 3 logits for rotation, 4 qubits / 4 logits for the gate
/// choice (pool reduced to the multi-qubit gates).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HybridPolicy {
    n_slots: usize,
    gate_pool: Vec<FixedGate>,
    /// pqcs[slot] = [reupload, rotation, gate]
    pqcs: Vec<[ControllerPqc; 3]>,
}

impl HybridPolicy {
    pub fn new(rng: &mut impl Rng, n_slots: usize, gate_pool: Vec<FixedGate>) -> Self {
        let pqcs = (0..n_slots)
            .map(|_| {
                [
                    ControllerPqc::new(rng, 3, 2),
                    ControllerPqc::new(rng, 3, 3),
                    ControllerPqc::new(rng, 4, gate_pool.len()),
                ]
            })
            .collect();
        HybridPolicy {
            n_slots,
            gate_pool,
            pqcs,
        }
    }

    fn slot_logits(&self) -> Vec<HeadLogits> {
        self.pqcs
            .iter()
            .map(|[r, rot, g]| HeadLogits {
                reupload: r.logits(),
                rotation: rot.logits(),
                gate: g.logits(),
            })
            .collect()
    }

    fn apply_logit_grads(&mut self, grads: &[HeadLogits], lr: f64) {
        for (slot, g) in grads.iter().enumerate() {
            self.pqcs[slot][0].ascend(&g.reupload, lr);
            self.pqcs[slot][1].ascend(&g.rotation, lr);
            self.pqcs[slot][2].ascend(&g.gate, lr);
        }
    }
}

/// Parameters of the design-sampling distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ControllerPolicy {
    Classical(ClassicalPolicy),
    Hybrid(HybridPolicy),
}

/// Nonparametric pool the classical controller draws from, at width `n`.
pub fn classical_gate_pool(n_qubits: usize) -> Vec<FixedGate> {
    FixedGate::ALL
        .iter()
        .copied()
        .filter(|g| g.arity() <= n_qubits)
        .collect()
}

/// Reduced pool for the hybrid controller.
pub fn hybrid_gate_pool(n_qubits: usize) -> Vec<FixedGate> {
    [FixedGate::CX, FixedGate::CZ, FixedGate::TOF, FixedGate::CSWAP]
        .iter()
        .copied()
        .filter(|g| g.arity() <= n_qubits)
        .collect()
}

impl ControllerPolicy {
    /// Controller for the given search dimensions. Hybrid controllers only
    /// support the repeated-layer mode.
    pub fn new_classical(
        rng: &mut impl Rng,
        mode: SampleMode,
        n_qubits: usize,
        n_layers: usize,
    ) -> Self {
        let n_slots = match mode {
            SampleMode::Whole => n_qubits * n_layers,
            SampleMode::Layer => n_qubits,
        };
        ControllerPolicy::Classical(ClassicalPolicy::new(
            rng,
            n_slots,
            classical_gate_pool(n_qubits),
        ))
    }

    pub fn new_hybrid(rng: &mut impl Rng, mode: SampleMode, n_qubits: usize) -> Result<Self> {
        if mode != SampleMode::Layer {
            return Err(Error::Config(
                "the hybrid controller suggests repeated layers only".into(),
            ));
        }
        Ok(ControllerPolicy::Hybrid(HybridPolicy::new(
            rng,
            n_qubits,
            hybrid_gate_pool(n_qubits),
        )))
    }

    pub fn slot_logits(&self) -> Vec<HeadLogits> {
        match self {
            ControllerPolicy::Classical(p) => p.slot_logits(),
            ControllerPolicy::Hybrid(p) => p.slot_logits(),
        }
    }

    pub fn n_slots(&self) -> usize {
        match self {
            ControllerPolicy::Classical(p) => p.n_slots,
            ControllerPolicy::Hybrid(p) => p.n_slots,
        }
    }

    pub fn gate_pool(&self) -> &[FixedGate] {
        match self {
            ControllerPolicy::Classical(p) => &p.gate_pool,
            ControllerPolicy::Hybrid(p) => &p.gate_pool,
        }
    }

    fn apply_logit_grads(&mut self, grads: &[HeadLogits], lr: f64) {
        match self {
            ControllerPolicy::Classical(p) => p.apply_logit_grads(grads, lr),
            ControllerPolicy::Hybrid(p) => p.apply_logit_grads(grads, lr),
        }
    }

    /// Joint policy entropy divided by the number of slots.
    pub fn entropy_per_slot(&self) -> f64 {
        let total: f64 = self
            .slot_logits()
            .iter()
            .map(|h| {
                entropy(&softmax(&h.reupload))
                    + entropy(&softmax(&h.rotation))
                    + entropy(&softmax(&h.gate))
            })
            .sum();
        total / self.n_slots() as f64
    }
}

fn decisions_to_design(
    policy: &ControllerPolicy,
    actions: &[[usize; 3]],
    mode: SampleMode,
    n_qubits: usize,
    n_layers: usize,
) -> Result<Design> {
    let pool = policy.gate_pool();
    let row_or_grid: Vec<QubitDecision> = actions
        .iter()
        .map(|&[r, rot, g]| QubitDecision {
            reupload: r == 1,
            rotation: Rotation::ALL[rot],
            fixed_gate: pool[g],
        })
        .collect();
    match mode {
        SampleMode::Layer => {
            Design::from_layer(row_or_grid, n_layers)
        }
        SampleMode::Whole => {
            let cells = row_or_grid
                .chunks(n_qubits)
                .map(|c| c.to_vec())
                .collect::<Vec<_>>();
            Design::new(n_qubits, cells)
        }
    }
}

/// Draw one design from the current policy.
pub fn sample_design(
    policy: &ControllerPolicy,
    mode: SampleMode,
    n_qubits: usize,
    n_layers: usize,
    rng: &mut impl Rng,
) -> Result<PolicySample> {
    let expected_slots = match mode {
        SampleMode::Layer => n_qubits,
        SampleMode::Whole => n_qubits * n_layers,
    };
    if policy.n_slots() != expected_slots {
        return Err(Error::Config(format!(
            "policy has {} slots but mode needs {expected_slots}",
            policy.n_slots()
        )));
    }
    let mut log_prob = 0.0;
    let mut total_entropy = 0.0;
    let mut actions = Vec::with_capacity(policy.n_slots());
    for head in policy.slot_logits() {
        let mut slot = [0usize; 3];
        for (k, logits) in [head.reupload, head.rotation, head.gate].iter().enumerate() {
            let probs = softmax(logits);
            let draw: f64 = rng.gen();
            let mut acc = 0.0;
            let mut choice = probs.len() - 1;
            for (idx, &p) in probs.iter().enumerate() {
                acc += p;
                if draw < acc {
                    choice = idx;
                    break;
                }
            }
            log_prob += probs[choice].ln();
            total_entropy += entropy(&probs);
            slot[k] = choice;
        }
        actions.push(slot);
    }
    let design = decisions_to_design(policy, &actions, mode, n_qubits, n_layers)?;
    Ok(PolicySample {
        design,
        log_prob,
        entropy: total_entropy,
        actions,
    })
}

/// Recompute the log-probability of a previously sampled action set under
/// the current policy (consistency checks).
pub fn log_prob_of(policy: &ControllerPolicy, actions: &[[usize; 3]]) -> f64 {
    policy
        .slot_logits()
        .iter()
        .zip(actions)
        .map(|(head, &[r, rot, g])| {
            softmax(&head.reupload)[r].ln()
                + softmax(&head.rotation)[rot].ln()
                + softmax(&head.gate)[g].ln()
        })
        .sum()
}

/// One REINFORCE step: gradient ascent on
/// `(reward - baseline) * log_prob + entropy_coeff * entropy`.
pub fn reinforce_update(
    policy: &mut ControllerPolicy,
    sample: &PolicySample,
    reward: f64,
    baseline: f64,
    entropy_coeff: f64,
    learning_rate: f64,
) {
    let advantage = reward - baseline;
    let grads: Vec<HeadLogits> = policy
        .slot_logits()
        .iter()
        .zip(&sample.actions)
        .map(|(head, &[r, rot, g])| {
            let grad_for = |logits: &[f64], action: usize| {
                let probs = softmax(logits);
                let score = categorical_score(&probs, action);
                let ent = entropy_logit_grad(&probs);
                score
                    .iter()
                    .zip(&ent)
                    .map(|(s, e)| advantage * s + entropy_coeff * e)
                    .collect::<Vec<f64>>()
            };
            HeadLogits {
                reupload: grad_for(&head.reupload, r),
                rotation: grad_for(&head.rotation, rot),
                gate: grad_for(&head.gate, g),
            }
        })
        .collect();
    policy.apply_logit_grads(&grads, learning_rate);
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RlLoopRecord {
    pub loop_index: usize,
    pub controller_loss: f64,
    pub metric_value: f64,
    pub entropy_per_slot: f64,
}

#[derive(Debug, Clone)]
pub struct RlOutcome {
    pub best_design: Design,
    pub best_metric: f64,
    pub best_val_acc: f64,
    pub best_val_loss: f64,
    pub curve: Vec<RlLoopRecord>,
    pub final_policy: ControllerPolicy,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RlConfig {
    pub mode: SampleMode,
    pub metric: Metric,
    pub hybrid: bool,
    pub inner_epochs: usize,
    pub max_loops: usize,
    pub controller_lr: f64,
    pub entropy_coeff: f64,
    /// stop once the per-slot policy entropy drops below this many nats
    pub entropy_threshold: f64,
    pub baseline_decay: f64,
    /// designs sampled and trained per feedback loop; batches > 1 use the
    /// batch mean as the baseline, which sharply reduces gradient noise
    pub children_per_loop: usize,
    pub seed: u64,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            mode: SampleMode::Layer,
            metric: Metric::ValLoss,
            hybrid: false,
            inner_epochs: 20,
            max_loops: 100,
            controller_lr: 0.1,
            entropy_coeff: 0.01,
            entropy_threshold: 0.05,
            baseline_decay: 0.9,
            children_per_loop: 1,
            seed: 0,
        }
    }
}

/// The controller-PQC feedback loop: sample a design, train it from scratch,
/// reward the controller with the validation metric, update the policy.
pub fn run_rl_search(
    config: &RlConfig,
    n_layers: usize,
    dataset: &Dataset,
    split: &Split,
    train_base: &TrainConfig,
) -> Result<RlOutcome> {
    if split.validation.is_empty() {
        return Err(Error::Config("RL search requires a validation split".into()));
    }
    let n_qubits = dataset.n_features;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut policy = if config.hybrid {
        ControllerPolicy::new_hybrid(&mut rng, config.mode, n_qubits)?
    } else {
        ControllerPolicy::new_classical(&mut rng, config.mode, n_qubits, n_layers)
    };

    let mut baseline: Option<f64> = None;
    // running scale of the advantage, for normalization
    let mut adv_sq_ema: Option<f64> = None;
    let mut curve = Vec::new();
    let mut best: Option<(Design, f64, f64, f64)> = None;
    let mut converged = false;

    let children = config.children_per_loop.max(1);
    for loop_index in 0..config.max_loops {
        let samples: Vec<PolicySample> = (0..children)
            .map(|_| sample_design(&policy, config.mode, n_qubits, n_layers, &mut rng))
            .collect::<Result<_>>()?;
        let evaluations: Vec<(f64, f64)> = samples
            .par_iter()
            .enumerate()
            .map(|(child, sample)| {
                let inner_seed = config
                    .seed
                    .wrapping_mul(0x1000_0000_1b3)
                    .wrapping_add((loop_index * children + child) as u64);
                let inner = TrainConfig {
                    epochs: config.inner_epochs,
                    seed: inner_seed,
                    ..train_base.clone()
                };
                let (_, history) = train(&sample.design, dataset, split, &inner)?;
                let last = history.final_record().expect("epochs >= 1");
                Ok((
                    last.val_loss.expect("validation split checked"),
                    last.val_acc.expect("validation split checked"),
                ))
            })
            .collect::<Result<_>>()?;

        let rewards: Vec<f64> = evaluations
            .iter()
            .map(|&(val_loss, val_acc)| match config.metric {
                Metric::ValLoss => -val_loss,
                Metric::ValAcc => val_acc,
            })
            .collect();
        let batch_mean = rewards.iter().sum::<f64>() / rewards.len() as f64;

        // normalized advantages: against the EMA baseline for single-child
        // loops, against the batch mean for batched loops
        let advantages: Vec<f64> = if children == 1 {
            let b = *baseline.get_or_insert(rewards[0]);
            let a = rewards[0] - b;
            let sq = adv_sq_ema.map_or(a * a, |e| {
                config.baseline_decay * e + (1.0 - config.baseline_decay) * a * a
            });
            adv_sq_ema = Some(sq);
            vec![a / sq.sqrt().max(1e-8)]
        } else {
            let var = rewards
                .iter()
                .map(|r| (r - batch_mean).powi(2))
                .sum::<f64>()
                / rewards.len() as f64;
            let scale = var.sqrt().max(1e-8);
            rewards.iter().map(|r| (r - batch_mean) / scale).collect()
        };
        baseline = Some(
            config.baseline_decay * baseline.unwrap_or(batch_mean)
                + (1.0 - config.baseline_decay) * batch_mean,
        );

        // surrogate loss the update descends, for the learning-curve export
        let controller_loss = samples
            .iter()
            .zip(&advantages)
            .map(|(s, &a)| -(a * s.log_prob + config.entropy_coeff * s.entropy))
            .sum::<f64>()
            / children as f64;
        for (sample, &advantage) in samples.iter().zip(&advantages) {
            reinforce_update(
                &mut policy,
                sample,
                advantage,
                0.0,
                config.entropy_coeff,
                config.controller_lr,
            );
        }

        let mut metric_value = f64::NAN;
        for (sample, &(val_loss, val_acc)) in samples.iter().zip(&evaluations) {
            let value = match config.metric {
                Metric::ValLoss => val_loss,
                Metric::ValAcc => val_acc,
            };
            let best_of_loop = match config.metric {
                Metric::ValLoss => !(metric_value <= value),
                Metric::ValAcc => !(metric_value >= value),
            };
            if best_of_loop {
                metric_value = value;
            }
            let better = match (&best, config.metric) {
                (None, _) => true,
                (Some((_, m, _, _)), Metric::ValLoss) => value < *m,
                (Some((_, m, _, _)), Metric::ValAcc) => value > *m,
            };
            if better {
                best = Some((sample.design.clone(), value, val_acc, val_loss));
            }
        }

        let entropy_per_slot = policy.entropy_per_slot();
        curve.push(RlLoopRecord {
            loop_index: loop_index + 1,
            controller_loss,
            metric_value,
            entropy_per_slot,
        });
        if entropy_per_slot < config.entropy_threshold {
            converged = true;
            break;
        }
    }

    let (best_design, best_metric, best_val_acc, best_val_loss) =
        best.expect("max_loops >= 1");
    Ok(RlOutcome {
        best_design,
        best_metric,
        best_val_acc,
        best_val_loss,
        curve,
        final_policy: policy,
        converged,
    })
}

/// Validation accuracy of a policy's greedy (argmax) suggestion after
/// training it from scratch.
pub fn greedy_design(policy: &ControllerPolicy, mode: SampleMode, n_layers: usize) -> Result<Design> {
    let actions: Vec<[usize; 3]> = policy
        .slot_logits()
        .iter()
        .map(|head| {
            let pick = |z: &[f64]| {
                let mut best = 0;
                for k in 1..z.len() {
                    if z[k] > z[best] {
                        best = k;
                    }
                }
                best
            };
            [pick(&head.reupload), pick(&head.rotation), pick(&head.gate)]
        })
        .collect();
    let n_qubits = match mode {
        SampleMode::Layer => actions.len(),
        SampleMode::Whole => actions.len() / n_layers,
    };
    decisions_to_design(policy, &actions, mode, n_qubits, n_layers)
}

/// Train-and-evaluate helper for a fixed design (used by search front ends).
pub fn evaluate_design(
    design: &Design,
    dataset: &Dataset,
    split: &Split,
    config: &TrainConfig,
) -> Result<(BoundCircuit, f64, f64)> {
    let (theta, history) = train(design, dataset, split, config)?;
    let last = history.final_record().expect("epochs >= 1");
    let circuit = BoundCircuit::new(design.clone(), theta, dataset.n_classes)?;
    Ok((
        circuit,
        last.val_loss.unwrap_or(f64::NAN),
        last.val_acc.unwrap_or(f64::NAN),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn uniform_policy(n_slots: usize) -> ControllerPolicy {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        ControllerPolicy::Classical(ClassicalPolicy::new(
            &mut rng,
            n_slots,
            classical_gate_pool(4),
        ))
    }

    #[test]
    fn fresh_policy_is_uniform_with_known_entropy() {
        let policy = uniform_policy(4);
        let expected = 2.0f64.ln() + 3.0f64.ln() + 8.0f64.ln();
        assert_abs_diff_eq!(policy.entropy_per_slot(), expected, epsilon = 1e-12);
        for head in policy.slot_logits() {
            for z in [head.reupload, head.rotation, head.gate] {
                let p = softmax(&z);
                for &pi in &p {
                    assert_abs_diff_eq!(pi, 1.0 / p.len() as f64, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn layer_mode_replicates_rows() {
        let policy = uniform_policy(4);
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let s = sample_design(&policy, SampleMode::Layer, 4, 6, &mut rng).unwrap();
        assert_eq!(s.design.n_layers(), 6);
        for l in 1..6 {
            for q in 0..4 {
                assert_eq!(s.design.cell(l, q), s.design.cell(0, q));
            }
        }
        assert!(s.log_prob <= 0.0);
        assert!(s.entropy >= 0.0);
    }

    #[test]
    fn whole_mode_needs_matching_slots() {
        let policy = uniform_policy(4);
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        assert!(sample_design(&policy, SampleMode::Whole, 4, 6, &mut rng).is_err());
        let policy = uniform_policy(24);
        let s = sample_design(&policy, SampleMode::Whole, 4, 6, &mut rng).unwrap();
        assert_eq!(s.design.n_layers(), 6);
        assert_eq!(s.design.n_qubits(), 4);
    }

    #[test]
    fn log_prob_is_consistent_with_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let mut policy = uniform_policy(4);
        // push the policy off uniform first
        for _ in 0..5 {
            let s = sample_design(&policy, SampleMode::Layer, 4, 6, &mut rng).unwrap();
            reinforce_update(&mut policy, &s, 1.0, 0.3, 0.01, 0.2);
        }
        let s = sample_design(&policy, SampleMode::Layer, 4, 6, &mut rng).unwrap();
        assert_abs_diff_eq!(s.log_prob, log_prob_of(&policy, &s.actions), epsilon = 1e-10);
    }

    #[test]
    fn zero_advantage_zero_entropy_coeff_is_a_no_op() {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let mut policy = uniform_policy(4);
        let before = serde_json::to_string(&policy).unwrap();
        let s = sample_design(&policy, SampleMode::Layer, 4, 6, &mut rng).unwrap();
        reinforce_update(&mut policy, &s, 0.7, 0.7, 0.0, 0.5);
        assert_eq!(before, serde_json::to_string(&policy).unwrap());
    }

    #[test]
    fn entropy_bonus_alone_pushes_toward_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(65);
        let mut policy = uniform_policy(2);
        // skew the policy, then apply pure entropy updates
        for _ in 0..30 {
            let s = sample_design(&policy, SampleMode::Layer, 2, 3, &mut rng).unwrap();
            reinforce_update(&mut policy, &s, 1.0, 0.0, 0.0, 0.3);
        }
        let skewed = policy.entropy_per_slot();
        for _ in 0..200 {
            let s = sample_design(&policy, SampleMode::Layer, 2, 3, &mut rng).unwrap();
            reinforce_update(&mut policy, &s, 0.0, 0.0, 0.5, 0.3);
        }
        assert!(policy.entropy_per_slot() > skewed);
    }

    #[test]
    fn bandit_policy_learns_the_rewarding_arm() {
        // reward 1 when the reupload decision of the single slot is "true",
        // otherwise 0: a two-armed bandit over that head
        let mut rng = ChaCha8Rng::seed_from_u64(66);
        let mut policy = uniform_policy(1);
        let mut baseline = 0.0;
        for _ in 0..200 {
            let s = sample_design(&policy, SampleMode::Layer, 1, 1, &mut rng).unwrap();
            let reward = if s.actions[0][0] == 1 { 1.0 } else { 0.0 };
            reinforce_update(&mut policy, &s, reward, baseline, 0.0, 0.1);
            baseline = 0.9 * baseline + 0.1 * reward;
        }
        let head = &policy.slot_logits()[0];
        let p = softmax(&head.reupload);
        assert!(p[1] > 0.9, "p(rewarding arm) = {}", p[1]);
    }

    #[test]
    fn score_function_estimator_matches_exact_gradient() {
        // fixed non-uniform bandit distribution; compare the averaged
        // stochastic score gradient against the enumerated exact gradient
        let logits = vec![0.4, -0.3];
        let probs = softmax(&logits);
        let rewards = [1.0, 0.0];
        let exact: Vec<f64> = {
            let mut g = vec![0.0; 2];
            for a in 0..2 {
                let score = categorical_score(&probs, a);
                for k in 0..2 {
                    g[k] += probs[a] * rewards[a] * score[k];
                }
            }
            g
        };
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let n = 10_000;
        let mut avg = vec![0.0; 2];
        for _ in 0..n {
            let draw: f64 = rng.gen();
            let a = if draw < probs[0] { 0 } else { 1 };
            let score = categorical_score(&probs, a);
            for k in 0..2 {
                avg[k] += rewards[a] * score[k] / n as f64;
            }
        }
        for k in 0..2 {
            let rel = (avg[k] - exact[k]).abs() / exact[k].abs();
            assert!(rel < 0.05, "coordinate {k}: {} vs {}", avg[k], exact[k]);
        }
    }

    #[test]
    fn hybrid_policy_shapes_and_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(68);
        let policy = ControllerPolicy::new_hybrid(&mut rng, SampleMode::Layer, 4).unwrap();
        assert!(ControllerPolicy::new_hybrid(&mut rng, SampleMode::Whole, 4).is_err());
        let heads = policy.slot_logits();
        assert_eq!(heads.len(), 4);
        for h in &heads {
            assert_eq!(h.reupload.len(), 2);
            assert_eq!(h.rotation.len(), 3);
            assert_eq!(h.gate.len(), 4);
            for z in h.reupload.iter().chain(&h.rotation).chain(&h.gate) {
                assert!(z.abs() <= HYBRID_LOGIT_SCALE);
            }
        }
        if let ControllerPolicy::Hybrid(p) = &policy {
            assert_eq!(p.pqcs[0][0].n_params(), 9);
            assert_eq!(p.pqcs[0][2].n_params(), 12);
            // parameter-shift jacobian vs finite differences
            let pqc = &p.pqcs[0][1];
            let jac = pqc.logits_jacobian();
            let h = 1e-6;
            for j in 0..pqc.n_params() {
                let mut t = pqc.theta.clone();
                t[j] += h;
                let plus = pqc.expectations(&t);
                t[j] -= 2.0 * h;
                let minus = pqc.expectations(&t);
                for k in 0..plus.len() {
                    let fd = HYBRID_LOGIT_SCALE * (plus[k] - minus[k]) / (2.0 * h);
                    assert!((jac[j][k] - fd).abs() < 1e-4, "{} vs {}", jac[j][k], fd);
                }
            }
        } else {
            unreachable!();
        }
    }

    #[test]
    fn hybrid_bandit_learns() {
        let mut rng = ChaCha8Rng::seed_from_u64(69);
        let mut policy = ControllerPolicy::new_hybrid(&mut rng, SampleMode::Layer, 3).unwrap();
        let mut baseline = 0.0;
        for _ in 0..300 {
            let s = sample_design(&policy, SampleMode::Layer, 3, 1, &mut rng).unwrap();
            let reward = if s.actions[0][0] == 1 { 1.0 } else { 0.0 };
            reinforce_update(&mut policy, &s, reward, baseline, 0.0, 0.2);
            baseline = 0.9 * baseline + 0.1 * reward;
        }
        let p = softmax(&policy.slot_logits()[0].reupload);
        assert!(p[1] > 0.8, "p(rewarding arm) = {}", p[1]);
    }
}
