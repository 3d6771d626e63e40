use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClassId, EvalError, Result};

/// Disjoint, exhaustive train/test index sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Classes present in the data but missing from `train`.
    pub warnings: Vec<String>,
}

/// `repetitions` random splits of `labels.len()` samples; deterministic under `seed`.
///
/// Each test set holds `round(n · test_fraction)` samples.
pub fn split_dataset(
    labels: &[ClassId],
    test_fraction: f64,
    seed: u64,
    repetitions: usize,
) -> Result<Vec<Partition>> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(EvalError::Config(format!(
            "test fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    if repetitions == 0 {
        return Err(EvalError::Config("at least one repetition required".into()));
    }
    let n = labels.len();
    if n < 2 {
        return Err(EvalError::Input("need at least two samples to split".into()));
    }
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();

    Ok((0..repetitions)
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let mut test = idx[..n_test].to_vec();
            let mut train = idx[n_test..].to_vec();
            test.sort_unstable();
            train.sort_unstable();
            let warnings = classes
                .iter()
                .filter(|&&c| !train.iter().any(|&i| labels[i] == c))
                .map(|c| format!("split {rep}: class {c} absent from training partition"))
                .collect();
            Partition {
                train,
                test,
                warnings,
            }
        })
        .collect())
}
