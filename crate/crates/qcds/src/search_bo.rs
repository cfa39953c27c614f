//! Bayesian design search: the discrete design space is embedded into a
//! hyper-rectangle of unit sub-intervals, modeled with a Matérn-5/2
//! Gaussian process and explored with logarithmic expected improvement.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split};
use crate::design::{Design, FixedGate, QubitDecision, Rotation};
use crate::error::{Error, Result};
use crate::search_rl::{classical_gate_pool, SampleMode};
use crate::trainer::{train, TrainConfig};

/// Per-variable bounds of the continuous embedding: one (reupload,
/// rotation, gate) triple per emitted design cell.
#[derive(Debug, Clone)]
pub struct HyperRectangle {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    n_qubits: usize,
    n_layers: usize,
    mode: SampleMode,
    gate_pool: Vec<FixedGate>,
}

impl HyperRectangle {
    /// Bounds covering `k` unit sub-intervals are [-1/2, k - 1/2].
    pub fn new(n_qubits: usize, n_layers: usize, mode: SampleMode) -> Self {
        let gate_pool = classical_gate_pool(n_qubits);
        let n_slots = match mode {
            SampleMode::Whole => n_qubits * n_layers,
            SampleMode::Layer => n_qubits,
        };
        let mut lower = Vec::with_capacity(3 * n_slots);
        let mut upper = Vec::with_capacity(3 * n_slots);
        for _ in 0..n_slots {
            for k in [2usize, 3, gate_pool.len()] {
                lower.push(-0.5);
                upper.push(k as f64 - 0.5);
            }
        }
        HyperRectangle {
            lower,
            upper,
            n_qubits,
            n_layers,
            mode,
            gate_pool,
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| rng.gen_range(l..u))
            .collect()
    }

    /// Round each coordinate to its sub-interval index (half-way points go
    /// up) and map the integers back to design decisions. Out-of-bounds
    /// coordinates are clamped with a warning.
    pub fn decode(&self, x: &[f64]) -> Result<Design> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!(
                "point has {} coordinates, expected {}",
                x.len(),
                self.dim()
            )));
        }
        let mut cells = Vec::new();
        for (slot, triple) in x.chunks(3).enumerate() {
            let mut idx = [0usize; 3];
            for (k, &v) in triple.iter().enumerate() {
                let d = slot * 3 + k;
                let clamped = v.clamp(self.lower[d], self.upper[d]);
                if clamped != v {
                    eprintln!("warning: coordinate {d} = {v} clamped into bounds");
                }
                let max_index = (self.upper[d] + 0.5).round() as usize - 1;
                idx[k] = (((clamped + 0.5).floor()) as i64).clamp(0, max_index as i64) as usize;
            }
            cells.push(QubitDecision {
                reupload: idx[0] == 1,
                rotation: Rotation::ALL[idx[1]],
                fixed_gate: self.gate_pool[idx[2]],
            });
        }
        match self.mode {
            SampleMode::Layer => Design::from_layer(cells, self.n_layers),
            SampleMode::Whole => Design::new(
                self.n_qubits,
                cells
                    .chunks(self.n_qubits)
                    .map(|c| c.to_vec())
                    .collect(),
            ),
        }
    }

    /// Map a design onto the integer lattice of the embedding.
    pub fn encode(&self, design: &Design) -> Result<Vec<f64>> {
        if design.n_qubits() != self.n_qubits || design.n_layers() != self.n_layers {
            return Err(Error::Shape("design shape does not match bounds".into()));
        }
        let layers = match self.mode {
            SampleMode::Layer => 1,
            SampleMode::Whole => self.n_layers,
        };
        let mut out = Vec::with_capacity(self.dim());
        for l in 0..layers {
            for q in 0..self.n_qubits {
                let cell = design.cell(l, q);
                out.push(if cell.reupload { 1.0 } else { 0.0 });
                out.push(
                    Rotation::ALL
                        .iter()
                        .position(|&r| r == cell.rotation)
                        .unwrap() as f64,
                );
                out.push(
                    self.gate_pool
                        .iter()
                        .position(|&g| g == cell.fixed_gate)
                        .ok_or_else(|| {
                            Error::Shape(format!("{:?} not in the gate pool", cell.fixed_gate))
                        })? as f64,
                );
            }
        }
        Ok(out)
    }
}

fn matern52(r: f64) -> f64 {
    let s = 5.0_f64.sqrt() * r;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

/// Exact GP regression with a Matérn-5/2 ARD kernel on standardized
/// outputs (constant zero mean after standardization).
#[derive(Debug, Clone)]
pub struct GpModel {
    x: Vec<Vec<f64>>,
    y_mean: f64,
    y_std: f64,
    pub lengthscales: Vec<f64>,
    pub signal_var: f64,
    pub noise_var: f64,
    pub jitter: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

fn kernel_value(a: &[f64], b: &[f64], lengthscales: &[f64], signal_var: f64) -> f64 {
    let r2: f64 = a
        .iter()
        .zip(b)
        .zip(lengthscales)
        .map(|((&ai, &bi), &l)| ((ai - bi) / l).powi(2))
        .sum();
    signal_var * matern52(r2.sqrt())
}

fn kernel_matrix(
    x: &[Vec<f64>],
    lengthscales: &[f64],
    signal_var: f64,
    noise_var: f64,
    jitter: f64,
) -> DMatrix<f64> {
    let n = x.len();
    DMatrix::from_fn(n, n, |i, j| {
        let mut v = kernel_value(&x[i], &x[j], lengthscales, signal_var);
        if i == j {
            v += noise_var + jitter;
        }
        v
    })
}

/// Cholesky with escalating diagonal jitter; errs after 1e-4.
fn factorize(
    x: &[Vec<f64>],
    lengthscales: &[f64],
    signal_var: f64,
    noise_var: f64,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut jitter = 1e-8;
    while jitter <= 1e-4 {
        let k = kernel_matrix(x, lengthscales, signal_var, noise_var, jitter);
        if let Some(chol) = Cholesky::new(k) {
            return Ok((chol, jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::GpFit(
        "kernel matrix stayed singular up to jitter 1e-4".into(),
    ))
}

fn log_marginal_likelihood(chol: &Cholesky<f64, Dyn>, alpha: &DVector<f64>, ys: &DVector<f64>) -> f64 {
    let n = ys.len() as f64;
    let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum();
    -0.5 * ys.dot(alpha) - log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

impl GpModel {
    /// Fit with fixed hyperparameters.
    pub fn fit_with(
        x: &[Vec<f64>],
        y: &[f64],
        lengthscales: Vec<f64>,
        signal_var: f64,
        noise_var: f64,
    ) -> Result<GpModel> {
        if x.len() != y.len() || x.len() < 2 {
            return Err(Error::GpFit(format!(
                "need at least 2 matched observations, got {} inputs / {} outputs",
                x.len(),
                y.len()
            )));
        }
        let dim = x[0].len();
        if lengthscales.len() != dim || x.iter().any(|p| p.len() != dim) {
            return Err(Error::GpFit("inconsistent input dimensions".into()));
        }
        let y_mean = y.iter().sum::<f64>() / y.len() as f64;
        let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / y.len() as f64;
        let y_std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        let ys = DVector::from_iterator(y.len(), y.iter().map(|v| (v - y_mean) / y_std));
        let (chol, jitter) = factorize(x, &lengthscales, signal_var, noise_var)?;
        let alpha = chol.solve(&ys);
        Ok(GpModel {
            x: x.to_vec(),
            y_mean,
            y_std,
            lengthscales,
            signal_var,
            noise_var,
            jitter,
            chol,
            alpha,
        })
    }

    /// Posterior mean and standard deviation in the original output units.
    pub fn posterior(&self, x: &[f64]) -> (f64, f64) {
        let k_star = DVector::from_iterator(
            self.x.len(),
            self.x
                .iter()
                .map(|xi| kernel_value(xi, x, &self.lengthscales, self.signal_var)),
        );
        let mean_s = k_star.dot(&self.alpha);
        let v = self.chol.solve(&k_star);
        let var = (self.signal_var - k_star.dot(&v)).max(0.0);
        (self.y_mean + self.y_std * mean_s, self.y_std * var.sqrt())
    }
}

/// Fit hyperparameters by maximizing the marginal likelihood over a grid of
/// starts followed by multiplicative coordinate refinement.
pub fn gp_fit(x: &[Vec<f64>], y: &[f64]) -> Result<GpModel> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::GpFit(format!(
            "need at least 2 matched observations, got {} inputs / {} outputs",
            x.len(),
            y.len()
        )));
    }
    let dim = x[0].len();
    // per-dimension data spread anchors the ARD length-scales
    let ranges: Vec<f64> = (0..dim)
        .map(|d| {
            let lo = x.iter().map(|p| p[d]).fold(f64::INFINITY, f64::min);
            let hi = x.iter().map(|p| p[d]).fold(f64::NEG_INFINITY, f64::max);
            if hi - lo > 1e-12 {
                hi - lo
            } else {
                1.0
            }
        })
        .collect();

    let score = |scale: f64, signal: f64, noise: f64| -> Option<(GpModel, f64)> {
        let ls: Vec<f64> = ranges.iter().map(|r| r * scale).collect();
        let model = GpModel::fit_with(x, y, ls, signal, noise).ok()?;
        let ys = DVector::from_iterator(
            y.len(),
            y.iter().map(|v| (v - model.y_mean) / model.y_std),
        );
        let lml = log_marginal_likelihood(&model.chol, &model.alpha, &ys);
        Some((model, lml))
    };

    let mut best: Option<(GpModel, f64, (f64, f64, f64))> = None;
    for &scale in &[0.1, 0.3, 1.0, 3.0] {
        for &signal in &[0.5, 1.0, 2.0] {
            for &noise in &[1e-6, 1e-4, 1e-2] {
                if let Some((model, lml)) = score(scale, signal, noise) {
                    if best.as_ref().map_or(true, |(_, b, _)| lml > *b) {
                        best = Some((model, lml, (scale, signal, noise)));
                    }
                }
            }
        }
    }
    let (_, mut best_lml, mut params) =
        best.take().ok_or_else(|| Error::GpFit("no hyperparameter candidate fit".into()))?;
    // coordinate refinement with multiplicative steps
    for _ in 0..2 {
        for coord in 0..3 {
            for &factor in &[0.5, 2.0] {
                let mut trial = params;
                match coord {
                    0 => trial.0 *= factor,
                    1 => trial.1 *= factor,
                    _ => trial.2 *= factor,
                }
                if let Some((_, lml)) = score(trial.0, trial.1, trial.2) {
                    if lml > best_lml {
                        best_lml = lml;
                        params = trial;
                    }
                }
            }
        }
    }
    let (model, _) = score(params.0, params.1, params.2)
        .ok_or_else(|| Error::GpFit("refined hyperparameters failed to fit".into()))?;
    Ok(model)
}

const EI_FLOOR: f64 = 1e-300;

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Log expected improvement for minimization: improvement = best - f.
pub fn log_ei(mean: f64, std: f64, best_so_far: f64) -> f64 {
    let gap = best_so_far - mean;
    if std <= 0.0 {
        return gap.max(EI_FLOOR).ln();
    }
    let z = gap / std;
    let ei = gap * normal_cdf(z) + std * normal_pdf(z);
    ei.max(EI_FLOOR).ln()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoStep {
    pub iteration: usize,
    pub design_json: String,
    pub val_loss: f64,
    pub incumbent_loss: f64,
}

#[derive(Debug, Clone)]
pub struct BoOutcome {
    pub best_design: Design,
    pub best_val_loss: f64,
    pub best_val_acc: f64,
    pub trace: Vec<BoStep>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoConfig {
    pub budget: usize,
    pub n_init: usize,
    pub inner_epochs: usize,
    pub candidates_per_step: usize,
    pub mode: SampleMode,
    pub seed: u64,
}

impl Default for BoConfig {
    fn default() -> Self {
        BoConfig {
            budget: 30,
            n_init: 10,
            inner_epochs: 10,
            candidates_per_step: 2048,
            mode: SampleMode::Whole,
            seed: 0,
        }
    }
}

/// GP-guided search: random initial designs, then repeatedly fit the
/// surrogate, score a batch of uniform candidates with log-EI, and evaluate
/// the argmax. Duplicate proposals fall through to the next-best candidate.
pub fn run_bo(
    config: &BoConfig,
    n_layers: usize,
    dataset: &Dataset,
    split: &Split,
    train_base: &TrainConfig,
) -> Result<BoOutcome> {
    if config.budget < config.n_init || config.n_init == 0 {
        return Err(Error::Config(
            "BO needs budget >= n_init >= 1".into(),
        ));
    }
    if split.validation.is_empty() {
        return Err(Error::Config("BO requires a validation split".into()));
    }
    let bounds = HyperRectangle::new(dataset.n_features, n_layers, config.mode);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut seen: Vec<Vec<u8>> = Vec::new();
    let mut trace: Vec<BoStep> = Vec::new();
    let mut best: Option<(Design, f64, f64)> = None;

    let evaluate = |design: Design,
                        iteration: usize,
                        rng_seed: u64,
                        xs: &mut Vec<Vec<f64>>,
                        ys: &mut Vec<f64>,
                        seen: &mut Vec<Vec<u8>>,
                        trace: &mut Vec<BoStep>,
                        best: &mut Option<(Design, f64, f64)>|
     -> Result<()> {
        let inner = TrainConfig {
            epochs: config.inner_epochs,
            seed: rng_seed,
            ..train_base.clone()
        };
        let (_, history) = train(&design, dataset, split, &inner)?;
        let last = history.final_record().expect("epochs >= 1");
        let val_loss = last.val_loss.expect("validation split checked");
        let val_acc = last.val_acc.expect("validation split checked");
        xs.push(bounds.encode(&design)?);
        ys.push(val_loss);
        seen.push(design.token_sequence());
        let improved = best.as_ref().map_or(true, |(_, l, _)| val_loss < *l);
        if improved {
            *best = Some((design.clone(), val_loss, val_acc));
        }
        trace.push(BoStep {
            iteration,
            design_json: design.to_json(),
            val_loss,
            incumbent_loss: best.as_ref().unwrap().1,
        });
        Ok(())
    };

    for i in 0..config.n_init {
        let design = loop {
            let d = bounds.decode(&bounds.sample(&mut rng))?;
            if !seen.contains(&d.token_sequence()) {
                break d;
            }
        };
        let seed = config.seed.wrapping_mul(0x517c_c1b7_2722_0a95).wrapping_add(i as u64);
        evaluate(design, i + 1, seed, &mut xs, &mut ys, &mut seen, &mut trace, &mut best)?;
    }

    for i in config.n_init..config.budget {
        let model = gp_fit(&xs, &ys)?;
        let best_loss = best.as_ref().unwrap().1;
        let mut scored: Vec<(f64, Vec<f64>)> = (0..config.candidates_per_step)
            .map(|_| bounds.sample(&mut rng))
            .map(|c| {
                let (mean, std) = model.posterior(&c);
                (log_ei(mean, std, best_loss), c)
            })
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let mut proposal = None;
        for (_, candidate) in &scored {
            let d = bounds.decode(candidate)?;
            if !seen.contains(&d.token_sequence()) {
                proposal = Some(d);
                break;
            }
        }
        // every candidate decoded to an already-observed design
        let design = match proposal {
            Some(d) => d,
            None => Design::random(&mut rng, dataset.n_features, n_layers)?,
        };
        let seed = config.seed.wrapping_mul(0x517c_c1b7_2722_0a95).wrapping_add(i as u64);
        evaluate(design, i + 1, seed, &mut xs, &mut ys, &mut seen, &mut trace, &mut best)?;
    }

    let (best_design, best_val_loss, best_val_acc) = best.unwrap();
    Ok(BoOutcome {
        best_design,
        best_val_loss,
        best_val_acc,
        trace,
    })
}
