use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, DatasetRole, MlError};

/// Seeded Gaussian-blob mixture with balanced classes.
///
/// Class centres sit on distinct vertices of the hypercube
/// `{-separation, +separation}^d` (or evenly along the first axis when
/// `2^d < L`); each sample adds unit-variance noise to its class centre.
/// A separation of zero makes labels independent of the features.
pub fn synthesize_dataset(n: usize, d: usize, classes: u32, separation: f64, seed: u64) -> Result<Dataset, MlError> {
    if classes < 2 {
        return Err(MlError::InvalidDimensions("at least two classes are required"));
    }
    if n < classes as usize {
        return Err(MlError::InvalidDimensions("need at least one sample per class"));
    }
    if d == 0 {
        return Err(MlError::InvalidDimensions("at least one feature is required"));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(MlError::InvalidDimensions("separation must be finite and non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres = class_centres(&mut rng, d, classes as usize, separation);

    let mut labels: Vec<u32> = (0..n).map(|i| (i % classes as usize) as u32).collect();
    labels.shuffle(&mut rng);
    let mut features = Vec::with_capacity(n * d);
    for &label in &labels {
        for &c in &centres[label as usize] {
            let noise: f64 = StandardNormal.sample(&mut rng);
            features.push(c + noise);
        }
    }
    Dataset::new(features, labels, d, classes, DatasetRole::Source)
}

fn class_centres<R: Rng>(rng: &mut R, d: usize, classes: usize, separation: f64) -> Vec<Vec<f64>> {
    let vertices_available = d >= 64 || (1u64 << d) >= classes as u64;
    if !vertices_available {
        return (0..classes)
            .map(|k| {
                let mut c = alloc::vec![0.0; d];
                c[0] = separation * (2.0 * k as f64 / (classes - 1) as f64 - 1.0);
                c
            })
            .collect();
    }
    let mut seen = BTreeSet::new();
    let mut centres = Vec::with_capacity(classes);
    while centres.len() < classes {
        let signs: Vec<bool> = (0..d).map(|_| rng.random::<bool>()).collect();
        if seen.insert(signs.clone()) {
            centres.push(
                signs
                    .iter()
                    .map(|&s| if s { separation } else { -separation })
                    .collect(),
            );
        }
    }
    centres
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_and_seeded() {
        let a = synthesize_dataset(100, 3, 4, 1.0, 7).unwrap();
        assert_eq!(a.class_counts(), alloc::vec![25, 25, 25, 25]);
        assert_eq!(a, synthesize_dataset(100, 3, 4, 1.0, 7).unwrap());
        assert_ne!(a, synthesize_dataset(100, 3, 4, 1.0, 8).unwrap());
    }

    #[test]
    fn invalid_dimensions() {
        assert!(synthesize_dataset(10, 2, 1, 1.0, 0).is_err());
        assert!(synthesize_dataset(2, 2, 3, 1.0, 0).is_err());
        assert!(synthesize_dataset(10, 0, 2, 1.0, 0).is_err());
        assert!(synthesize_dataset(10, 2, 2, f64::NAN, 0).is_err());
    }

    #[test]
    fn falls_back_to_axis_centres_for_many_classes() {
        let a = synthesize_dataset(40, 1, 4, 10.0, 1).unwrap();
        assert_eq!(a.class_counts(), alloc::vec![10; 4]);
    }
}
