//! Position Sensitivity Index and the vision-token permutation it relies on.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::TokenPartition;
use crate::tensor::Matrix;

/// Relative accuracy drop when vision tokens are shuffled.
///
/// Both accuracies must use the same units (fractions or percentages). The
/// result is a fraction: 0 means order-invariant, negative values mean the
/// permuted run scored higher.
pub fn psi(acc_original: f64, acc_permuted: f64) -> Result<f64> {
    if !(acc_original > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "original accuracy must be > 0, got {acc_original}"
        )));
    }
    if !acc_permuted.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "permuted accuracy is not finite: {acc_permuted}"
        )));
    }
    Ok((acc_original - acc_permuted) / acc_original)
}

/// Shuffles the rows at vision indices with a seeded uniform permutation.
/// Every other row is copied unchanged.
pub fn permute_vision_tokens(
    embeddings: &Matrix,
    partition: &TokenPartition,
    seed: u64,
) -> Result<Matrix> {
    partition.require_vision()?;
    partition.check_len(embeddings.rows(), "embeddings")?;
    let vision = partition.vision();
    let mut order = vision.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut out = embeddings.clone();
    for (&dst, &src) in vision.iter().zip(&order) {
        out.row_mut(dst).copy_from_slice(embeddings.row(src));
    }
    Ok(out)
}

/// Which arrangement of the vision tokens an evaluation run should see.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisionOrder {
    Original,
    Permuted { seed: u64 },
}

/// Anything that can score a model/dataset pair under a given vision-token
/// order. The index itself never interprets what "accuracy" means.
pub trait AccuracyEvaluator {
    fn accuracy(&mut self, order: VisionOrder) -> Result<f64>;
}

impl<F> AccuracyEvaluator for F
where
    F: FnMut(VisionOrder) -> Result<f64>,
{
    fn accuracy(&mut self, order: VisionOrder) -> Result<f64> {
        self(order)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiReport {
    pub acc_original: f64,
    pub acc_permuted: f64,
    pub psi: f64,
}

/// Runs the evaluator twice, original then permuted, and reports the index.
pub fn measure_psi(eval: &mut impl AccuracyEvaluator, seed: u64) -> Result<PsiReport> {
    let acc_original = eval.accuracy(VisionOrder::Original)?;
    let acc_permuted = eval.accuracy(VisionOrder::Permuted { seed })?;
    Ok(PsiReport {
        acc_original,
        acc_permuted,
        psi: psi(acc_original, acc_permuted)?,
    })
}
