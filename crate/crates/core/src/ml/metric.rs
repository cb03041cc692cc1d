use core::cmp::Ordering;

use super::MlError;
use crate::codec::{Decode, DecodeError, Decoder, Encode, Encoder};

/// Exact accuracy as a `(correct, total)` count pair.
///
/// Counts are compared by cross-multiplication, so every miner reaches the
/// same verdict on "equals" and "greater than" checks without any floating
/// point in the loop. `total` is never zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Accuracy {
    correct: u32,
    total: u32,
}

impl Accuracy {
    /// Score of a Key Block that ranks no Ensemble Block.
    pub const ZERO: Accuracy = Accuracy { correct: 0, total: 1 };

    pub fn new(correct: u32, total: u32) -> Option<Self> {
        (total > 0 && correct <= total).then_some(Accuracy { correct, total })
    }

    pub fn correct(&self) -> u32 {
        self.correct
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn as_f64(&self) -> f64 {
        f64::from(self.correct) / f64::from(self.total)
    }

    /// Compares the ratios only, so `3/4` equals `6/8`.
    pub fn cmp_value(&self, other: &Self) -> Ordering {
        (u64::from(self.correct) * u64::from(other.total)).cmp(&(u64::from(other.correct) * u64::from(self.total)))
    }
}

impl Ord for Accuracy {
    fn cmp(&self, other: &Self) -> Ordering {
        let lhs = u64::from(self.correct) * u64::from(other.total);
        let rhs = u64::from(other.correct) * u64::from(self.total);
        // equal ratios fall back to the raw counts so Ord agrees with Eq
        lhs.cmp(&rhs)
            .then(self.total.cmp(&other.total))
            .then(self.correct.cmp(&other.correct))
    }
}

impl PartialOrd for Accuracy {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Encode for Accuracy {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_u32(self.correct);
        enc.put_u32(self.total);
    }
}

impl Decode for Accuracy {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let correct = dec.u32()?;
        let total = dec.u32()?;
        Accuracy::new(correct, total).ok_or(DecodeError::Invalid("accuracy counts"))
    }
}

/// `Metric_min`, in parts per million.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MetricFloor(u32);

impl MetricFloor {
    pub const PPM: u32 = 1_000_000;

    pub fn from_ppm(ppm: u32) -> Option<Self> {
        (ppm <= Self::PPM).then_some(MetricFloor(ppm))
    }

    /// Rounds `fraction` to the nearest part per million.
    pub fn from_fraction(fraction: f64) -> Option<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return None;
        }
        Self::from_ppm(libm::round(fraction * f64::from(Self::PPM)) as u32)
    }

    pub fn ppm(&self) -> u32 {
        self.0
    }

    pub fn as_f64(&self) -> f64 {
        f64::from(self.0) / f64::from(Self::PPM)
    }

    /// Strict `accuracy > floor`.
    pub fn is_exceeded_by(&self, acc: Accuracy) -> bool {
        u64::from(acc.correct) * u64::from(Self::PPM) > u64::from(self.0) * u64::from(acc.total)
    }
}

/// `Metric(pred, truth)`: the fraction of equal positions.
pub fn accuracy(pred: &[u32], truth: &[u32]) -> Result<Accuracy, MlError> {
    if pred.len() != truth.len() {
        return Err(MlError::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(MlError::EmptyDataset);
    }
    let correct = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    let total = u32::try_from(pred.len()).map_err(|_| MlError::InvalidDimensions("too many rows"))?;
    Ok(Accuracy {
        correct: correct as u32,
        total,
    })
}
