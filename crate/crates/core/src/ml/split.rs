//! Public/private/validation/test partitioning.
//!
//! IID: a seeded shuffle of the original training set gives the public set
//! (`⌊κ·n⌋` rows) followed by `φ` private parts of `⌊ζ·n⌋` rows each.
//!
//! Non-IID: after the public set is removed, the samples of each class `k`
//! are shared out across the `N` miners in proportions `p_k ~ Dir_N(β)`,
//! rounded with the largest-remainder method so class counts are conserved
//! exactly.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use super::{Dataset, DatasetRole, MlError};
use crate::hash::derive_seed;

/// Redraws allowed when a Dirichlet draw leaves some miner with no samples.
pub const DIRICHLET_RETRIES: u32 = 20;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Heterogeneity {
    Iid,
    Dirichlet { beta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitPlan {
    /// Public dataset ratio `κ = |D_T| / |D̂_T|`.
    pub kappa: f64,
    /// Private dataset ratio `ζ = |D_S| / |D̂_T|` (IID only).
    pub zeta: f64,
    /// Number of IID private parts `φ`.
    pub partitions: usize,
    pub heterogeneity: Heterogeneity,
    pub seed: u64,
}

impl SplitPlan {
    pub fn validate(&self) -> Result<(), MlError> {
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(MlError::InfeasiblePlan("kappa must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.zeta) {
            return Err(MlError::InfeasiblePlan("zeta must lie in [0, 1]"));
        }
        if let Heterogeneity::Dirichlet { beta } = self.heterogeneity {
            if !(beta > 0.0 && beta.is_finite()) {
                return Err(MlError::InfeasiblePlan("beta must be positive"));
            }
        }
        Ok(())
    }

    pub fn public_len(&self, n: usize) -> usize {
        floor_ratio(self.kappa, n)
    }

    pub fn part_len(&self, n: usize) -> usize {
        floor_ratio(self.zeta, n)
    }
}

/// `⌊ratio·n⌋`, tolerant of the representation error in ratios like 0.06.
fn floor_ratio(ratio: f64, n: usize) -> usize {
    libm::floor(ratio * n as f64 + 1e-9) as usize
}

fn shuffled_rows(n: usize, seed: u64) -> Vec<usize> {
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    rows
}

/// Returns `(D_T, [D_S_1, …, D_S_φ])`.
pub fn split_iid(full: &Dataset, plan: &SplitPlan) -> Result<(Dataset, Vec<Dataset>), MlError> {
    plan.validate()?;
    if plan.heterogeneity != Heterogeneity::Iid {
        return Err(MlError::InfeasiblePlan("plan is not IID"));
    }
    let n = full.len();
    let public_len = plan.public_len(n);
    let part_len = plan.part_len(n);
    let needed = part_len
        .checked_mul(plan.partitions)
        .and_then(|p| p.checked_add(public_len))
        .ok_or(MlError::InfeasiblePlan("sizes overflow"))?;
    if needed > n {
        return Err(MlError::InfeasiblePlan("kappa + zeta * phi exceeds 1"));
    }
    if public_len == 0 {
        return Err(MlError::InfeasiblePlan("public dataset would be empty"));
    }
    let rows = shuffled_rows(n, derive_seed("split-iid", &[plan.seed]));
    let public = full.subset(&rows[..public_len], DatasetRole::PublicTrain);
    let parts = (0..plan.partitions)
        .map(|i| {
            let start = public_len + i * part_len;
            full.subset(&rows[start..start + part_len], DatasetRole::Private)
        })
        .collect();
    Ok((public, parts))
}

/// Which IID part each of `miners` receives: `D_S_i → M_i` for `i < φ`, and a
/// seeded uniform choice among the `φ` parts for the remaining miners.
/// Returns `None` entries when `φ = 0`.
pub fn assign_iid_parts(partitions: usize, miners: usize, seed: u64) -> Vec<Option<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed("assign-iid", &[seed]));
    (0..miners)
        .map(|i| match partitions {
            0 => None,
            p if i < p => Some(i),
            p => Some(rng.random_range(0..p)),
        })
        .collect()
}

/// Splits `total` items in proportion to `probs` with the largest-remainder
/// method. Remainder ties go to the smaller index. The result always sums to
/// `total`.
pub fn largest_remainder(total: usize, probs: &[f64]) -> Vec<usize> {
    let sum: f64 = probs.iter().sum();
    let mut counts = Vec::with_capacity(probs.len());
    let mut remainders = Vec::with_capacity(probs.len());
    for (j, p) in probs.iter().enumerate() {
        let quota = if sum > 0.0 { p / sum * total as f64 } else { 0.0 };
        let floor = libm::floor(quota);
        counts.push(floor as usize);
        remainders.push((quota - floor, j));
    }
    let assigned: usize = counts.iter().sum();
    let mut left = total.saturating_sub(assigned);
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut k = 0;
    while left > 0 && !remainders.is_empty() {
        counts[remainders[k % remainders.len()].1] += 1;
        left -= 1;
        k += 1;
    }
    counts
}

fn dirichlet_draw<R: Rng>(rng: &mut R, n: usize, beta: f64) -> Vec<f64> {
    let gamma = Gamma::new(beta, 1.0).expect("beta validated positive");
    loop {
        let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
        let sum: f64 = draws.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            return draws.into_iter().map(|g| g / sum).collect();
        }
    }
}

/// Returns `(D_T, [D_M_1, …, D_M_N])`.
pub fn split_dirichlet(full: &Dataset, plan: &SplitPlan, miners: usize) -> Result<(Dataset, Vec<Dataset>), MlError> {
    plan.validate()?;
    let Heterogeneity::Dirichlet { beta } = plan.heterogeneity else {
        return Err(MlError::InfeasiblePlan("plan is not Dirichlet"));
    };
    if miners == 0 {
        return Err(MlError::InvalidDimensions("at least one miner is required"));
    }
    let n = full.len();
    let public_len = plan.public_len(n);
    if public_len == 0 {
        return Err(MlError::InfeasiblePlan("public dataset would be empty"));
    }
    let rows = shuffled_rows(n, derive_seed("split-dirichlet", &[plan.seed]));
    let public = full.subset(&rows[..public_len], DatasetRole::PublicTrain);

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); full.n_classes() as usize];
    for &r in &rows[public_len..] {
        by_class[full.label(r) as usize].push(r);
    }
    if let Some(k) = by_class.iter().position(Vec::is_empty) {
        return Err(MlError::ClassWithoutPrivateSamples(k as u32));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed("dirichlet-draw", &[plan.seed]));
    for _ in 0..DIRICHLET_RETRIES {
        let mut per_miner: Vec<Vec<usize>> = vec![Vec::new(); miners];
        for class_rows in &by_class {
            let probs = dirichlet_draw(&mut rng, miners, beta);
            let counts = largest_remainder(class_rows.len(), &probs);
            let mut start = 0;
            for (j, c) in counts.into_iter().enumerate() {
                per_miner[j].extend_from_slice(&class_rows[start..start + c]);
                start += c;
            }
        }
        if per_miner.iter().all(|rows| !rows.is_empty()) {
            let parts = per_miner
                .iter()
                .map(|rows| full.subset(rows, DatasetRole::Private))
                .collect();
            return Ok((public, parts));
        }
    }
    Err(MlError::EmptyMiner(DIRICHLET_RETRIES))
}

/// Splits a held-out set into `(D_V, D_E)` with `|D_V| = ⌊n/2⌋`.
pub fn split_holdout(held: &Dataset, seed: u64) -> Result<(Dataset, Dataset), MlError> {
    if held.len() < 2 {
        return Err(MlError::InvalidDimensions("held-out set needs at least two rows"));
    }
    let rows = shuffled_rows(held.len(), derive_seed("split-holdout", &[seed]));
    let half = held.len() / 2;
    Ok((
        held.subset(&rows[..half], DatasetRole::Validation),
        held.subset(&rows[half..], DatasetRole::Test),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn source(n: usize, classes: u32) -> Dataset {
        let features = (0..n).map(|i| i as f64).collect();
        let labels = (0..n).map(|i| (i % classes as usize) as u32).collect();
        Dataset::new(features, labels, 1, classes, DatasetRole::Source).unwrap()
    }

    fn plan(kappa: f64, zeta: f64, partitions: usize) -> SplitPlan {
        SplitPlan {
            kappa,
            zeta,
            partitions,
            heterogeneity: Heterogeneity::Iid,
            seed: 3,
        }
    }

    #[test]
    fn cifar_sized_iid_split() {
        let full = source(50_000, 10);
        let (public, parts) = split_iid(&full, &plan(0.4, 0.06, 10)).unwrap();
        assert_eq!(public.len(), 20_000);
        assert!(parts.iter().all(|p| p.len() == 3000));
    }

    #[test]
    fn kappa_one_leaves_no_private_data() {
        let full = source(100, 2);
        let (public, parts) = split_iid(&full, &plan(1.0, 0.0, 0)).unwrap();
        assert_eq!(public.len(), 100);
        assert!(parts.is_empty());
        assert_eq!(assign_iid_parts(0, 3, 1), vec![None, None, None]);
    }

    #[test]
    fn infeasible_plan_is_rejected() {
        let full = source(100, 2);
        assert!(matches!(
            split_iid(&full, &plan(0.5, 0.1, 6)),
            Err(MlError::InfeasiblePlan(_))
        ));
        assert!(matches!(
            split_iid(&full, &plan(0.0, 0.1, 1)),
            Err(MlError::InfeasiblePlan(_))
        ));
    }

    #[test]
    fn extra_miners_reuse_parts() {
        let a = assign_iid_parts(3, 6, 5);
        assert_eq!(&a[..3], &[Some(0), Some(1), Some(2)]);
        assert!(a[3..].iter().all(|p| matches!(p, Some(i) if *i < 3)));
        assert_eq!(a, assign_iid_parts(3, 6, 5));
    }

    #[test]
    fn largest_remainder_conserves_and_breaks_ties_low() {
        assert_eq!(largest_remainder(10, &[0.5, 0.5]), vec![5, 5]);
        assert_eq!(largest_remainder(1, &[0.5, 0.5]), vec![1, 0]);
        assert_eq!(largest_remainder(7, &[0.2, 0.3, 0.5]), vec![1, 2, 4]);
        let c = largest_remainder(1001, &[0.1234, 0.4321, 0.0001, 0.4444]);
        assert_eq!(c.iter().sum::<usize>(), 1001);
    }

    #[test]
    fn holdout_halves() {
        let held = source(11, 2);
        let (v, e) = split_holdout(&held, 1).unwrap();
        assert_eq!((v.len(), e.len()), (5, 6));
        assert_eq!(v.role(), DatasetRole::Validation);
        assert_eq!(e.role(), DatasetRole::Test);
    }

    #[test]
    fn dirichlet_requires_private_samples_per_class() {
        let full = source(10, 2);
        let p = SplitPlan {
            kappa: 1.0,
            zeta: 0.0,
            partitions: 0,
            heterogeneity: Heterogeneity::Dirichlet { beta: 0.5 },
            seed: 1,
        };
        assert_eq!(
            split_dirichlet(&full, &p, 3),
            Err(MlError::ClassWithoutPrivateSamples(0))
        );
    }
}
