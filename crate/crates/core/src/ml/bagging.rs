use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, MlError};

/// `Resample(D)`: `|D|` rows drawn uniformly with replacement.
pub fn resample(data: &Dataset, seed: u64) -> Result<Dataset, MlError> {
    resample_with(data, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn resample_with<R: Rng + ?Sized>(data: &Dataset, rng: &mut R) -> Result<Dataset, MlError> {
    if data.is_empty() {
        return Err(MlError::EmptyDataset);
    }
    let n = data.len();
    let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    Ok(data.subset(&rows, data.role()))
}

/// `Aggregate(·)`: per-sample plurality vote over the models' predicted
/// labels. Ties go to the smallest class index, so the result does not depend
/// on the order of `predictions`.
pub fn aggregate(predictions: &[&[u32]], n_classes: u32) -> Result<Vec<u32>, MlError> {
    let first = predictions.first().ok_or(MlError::NoModels)?;
    let len = first.len();
    if let Some(p) = predictions.iter().find(|p| p.len() != len) {
        return Err(MlError::LengthMismatch(len, p.len()));
    }
    let mut votes = vec![0u32; n_classes as usize];
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        votes.iter_mut().for_each(|v| *v = 0);
        for p in predictions {
            let label = p[i];
            if label >= n_classes {
                return Err(MlError::LabelOutOfRange {
                    label,
                    classes: n_classes,
                });
            }
            votes[label as usize] += 1;
        }
        let mut best = 0usize;
        for (class, &count) in votes.iter().enumerate() {
            if count > votes[best] {
                best = class;
            }
        }
        out.push(best as u32);
    }
    Ok(out)
}
