//! Random design search: dissimilarity-filtered pool generation and
//! survival-of-the-fittest successive halving.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split};
use crate::design::{design_similarity, Design};
use crate::error::{Error, Result};
use crate::trainer::{train, TrainConfig};

/// Search feedback for one trained design.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub pool_index: usize,
    pub rank: usize,
    pub epochs_trained: usize,
    pub val_loss: f64,
    pub val_acc: f64,
    pub test_loss: Option<f64>,
    pub test_acc: Option<f64>,
    pub seed: u64,
}

/// One halving stage: train every survivor for `epochs`, keep the best
/// `keep_fraction`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Stage {
    pub epochs: usize,
    pub keep_fraction: f64,
}

/// Rejection-sample `size` designs whose pairwise gestalt similarity stays at
/// or below `max_similarity`. Gives up after `100 * size` attempts and
/// returns the (possibly underfull) pool with a warning on stderr.
pub fn generate_pool(
    rng: &mut impl Rng,
    size: usize,
    max_similarity: f64,
    n_qubits: usize,
    n_layers: usize,
) -> Result<Vec<Design>> {
    if max_similarity <= 0.0 || max_similarity > 1.0 {
        return Err(Error::Config(format!(
            "max_similarity must be in (0, 1], got {max_similarity}"
        )));
    }
    let mut pool: Vec<Design> = Vec::with_capacity(size);
    let mut attempts = 0usize;
    let budget = size.saturating_mul(100);
    while pool.len() < size && attempts < budget {
        attempts += 1;
        let candidate = Design::random(rng, n_qubits, n_layers)?;
        let too_close = max_similarity < 1.0
            && pool
                .iter()
                .any(|d| design_similarity(d, &candidate).unwrap() > max_similarity);
        if !too_close {
            pool.push(candidate);
        }
    }
    if pool.len() < size {
        eprintln!(
            "warning: pool underfull ({}/{size}) after {attempts} attempts",
            pool.len()
        );
    }
    Ok(pool)
}

/// Outcome of `halving_search`: final ranked survivors plus the Spearman rank
/// correlation of survivor losses between consecutive stages.
#[derive(Debug, Clone)]
pub struct HalvingOutcome {
    pub ranked: Vec<TrialRecord>,
    pub stage_rank_correlations: Vec<f64>,
}

/// Spearman rank correlation of two equally long score lists.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let ranks = |xs: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..xs.len()).collect();
        idx.sort_by(|&i, &j| xs[i].partial_cmp(&xs[j]).unwrap().then(i.cmp(&j)));
        let mut r = vec![0.0; xs.len()];
        for (rank, &i) in idx.iter().enumerate() {
            r[i] = rank as f64;
        }
        r
    };
    let ra = ranks(a);
    let rb = ranks(b);
    let mean = (n as f64 - 1.0) / 2.0;
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for i in 0..n {
        num += (ra[i] - mean) * (rb[i] - mean);
        da += (ra[i] - mean).powi(2);
        db += (rb[i] - mean).powi(2);
    }
    num / (da * db).sqrt()
}

fn train_stage(
    survivors: &[(usize, &Design)],
    dataset: &Dataset,
    split: &Split,
    base: &TrainConfig,
    epochs: usize,
    master_seed: u64,
) -> Result<Vec<TrialRecord>> {
    let results: Vec<Result<TrialRecord>> = survivors
        .par_iter()
        .map(|&(pool_index, design)| {
            // one fixed seed per pool slot, stable across stages
            let seed = master_seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ pool_index as u64;
            let config = TrainConfig {
                epochs,
                seed,
                ..base.clone()
            };
            let (_, history) = train(design, dataset, split, &config)?;
            let last = history.final_record().expect("epochs >= 1");
            let val_loss = last.val_loss.ok_or_else(|| {
                Error::Config("halving search requires a validation split".into())
            })?;
            Ok(TrialRecord {
                pool_index,
                rank: 0,
                epochs_trained: epochs,
                val_loss,
                val_acc: last.val_acc.unwrap_or(0.0),
                test_loss: last.test_loss,
                test_acc: last.test_acc,
                seed,
            })
        })
        .collect();
    results.into_iter().collect()
}

/// Successive halving over the pool. Every stage retrains its survivors from
/// scratch for the stage's epoch count; survivors are the designs with the
/// lowest validation loss, ties broken by earlier pool index.
pub fn halving_search(
    pool: &[Design],
    schedule: &[Stage],
    final_epochs: usize,
    dataset: &Dataset,
    split: &Split,
    base: &TrainConfig,
    master_seed: u64,
) -> Result<HalvingOutcome> {
    if schedule.is_empty() {
        return Err(Error::Config("halving schedule must be nonempty".into()));
    }
    for stage in schedule {
        if stage.keep_fraction <= 0.0 || stage.keep_fraction > 1.0 || stage.epochs == 0 {
            return Err(Error::Config(format!(
                "invalid stage {stage:?}: epochs >= 1 and keep_fraction in (0, 1]"
            )));
        }
    }

    let mut survivors: Vec<(usize, &Design)> = pool.iter().enumerate().collect();
    let mut correlations = Vec::new();
    let mut previous_losses: Option<Vec<(usize, f64)>> = None;

    for stage in schedule {
        let mut records = train_stage(&survivors, dataset, split, base, stage.epochs, master_seed)?;
        records.sort_by(|a, b| {
            a.val_loss
                .partial_cmp(&b.val_loss)
                .unwrap()
                .then(a.pool_index.cmp(&b.pool_index))
        });
        // rank stability across stages, over the designs present in both
        if let Some(prev) = &previous_losses {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for r in &records {
                if let Some(&(_, prev_loss)) =
                    prev.iter().find(|(idx, _)| *idx == r.pool_index)
                {
                    xs.push(prev_loss);
                    ys.push(r.val_loss);
                }
            }
            if xs.len() >= 2 {
                correlations.push(spearman(&xs, &ys));
            }
        }
        previous_losses = Some(records.iter().map(|r| (r.pool_index, r.val_loss)).collect());

        let keep = ((survivors.len() as f64) * stage.keep_fraction).ceil() as usize;
        let keep = keep.clamp(1, survivors.len());
        let kept: Vec<usize> = records.iter().take(keep).map(|r| r.pool_index).collect();
        survivors.retain(|(idx, _)| kept.contains(idx));
    }

    let mut ranked = train_stage(&survivors, dataset, split, base, final_epochs, master_seed)?;
    ranked.sort_by(|a, b| {
        a.val_loss
            .partial_cmp(&b.val_loss)
            .unwrap()
            .then(a.pool_index.cmp(&b.pool_index))
    });
    for (i, r) in ranked.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok(HalvingOutcome {
        ranked,
        stage_rank_correlations: correlations,
    })
}
