use alloc::vec::Vec;

use super::MlError;
use crate::codec::{Decode, DecodeError, Decoder, Encode, Encoder};

/// Which part of a task a dataset plays.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DatasetRole {
    /// Original data before splitting.
    Source,
    /// Public training set `D_T`, shared by every miner.
    PublicTrain,
    /// A miner's private set `D_M`.
    Private,
    /// Validation set `D_V`, published at the start of Phase II.
    Validation,
    /// Test set `D_E`, published at the start of Phase III.
    Test,
}

impl DatasetRole {
    fn tag(self) -> u8 {
        match self {
            DatasetRole::Source => 0,
            DatasetRole::PublicTrain => 1,
            DatasetRole::Private => 2,
            DatasetRole::Validation => 3,
            DatasetRole::Test => 4,
        }
    }

    fn from_tag(tag: u8) -> Result<Self, DecodeError> {
        Ok(match tag {
            0 => DatasetRole::Source,
            1 => DatasetRole::PublicTrain,
            2 => DatasetRole::Private,
            3 => DatasetRole::Validation,
            4 => DatasetRole::Test,
            tag => {
                return Err(DecodeError::InvalidTag {
                    what: "dataset role",
                    tag,
                })
            }
        })
    }
}

/// Row-major feature matrix plus class labels in `0..n_classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    n_features: usize,
    n_classes: u32,
    features: Vec<f64>,
    labels: Vec<u32>,
    role: DatasetRole,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<u32>,
        n_features: usize,
        n_classes: u32,
        role: DatasetRole,
    ) -> Result<Self, MlError> {
        if n_features == 0 {
            return Err(MlError::InvalidDimensions("at least one feature is required"));
        }
        if n_classes == 0 {
            return Err(MlError::InvalidDimensions("at least one class is required"));
        }
        if features.len() != labels.len() * n_features {
            return Err(MlError::ShapeMismatch {
                rows: features.len() / n_features,
                labels: labels.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(MlError::LabelOutOfRange {
                label,
                classes: n_classes,
            });
        }
        Ok(Dataset {
            n_features,
            n_classes,
            features,
            labels,
            role,
        })
    }

    /// An empty dataset with the given shape.
    pub fn empty(n_features: usize, n_classes: u32, role: DatasetRole) -> Self {
        Dataset {
            n_features,
            n_classes,
            features: Vec::new(),
            labels: Vec::new(),
            role,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> u32 {
        self.n_classes
    }

    pub fn role(&self) -> DatasetRole {
        self.role
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.features[row * self.n_features + feature]
    }

    pub fn label(&self, i: usize) -> u32 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn with_role(mut self, role: DatasetRole) -> Self {
        self.role = role;
        self
    }

    /// Rows at `indices`, in that order (repeats allowed).
    pub fn subset(&self, indices: &[usize], role: DatasetRole) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            n_features: self.n_features,
            n_classes: self.n_classes,
            features,
            labels,
            role,
        }
    }

    /// `self ∪ other`, rows of `self` first. Used for `D_T ∪ D_M`.
    pub fn concat(&self, other: &Dataset, role: DatasetRole) -> Result<Dataset, MlError> {
        if self.n_features != other.n_features || self.n_classes != other.n_classes {
            return Err(MlError::Incompatible("feature or class counts differ"));
        }
        let mut features = self.features.clone();
        features.extend_from_slice(&other.features);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(Dataset {
            n_features: self.n_features,
            n_classes: self.n_classes,
            features,
            labels,
            role,
        })
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = alloc::vec![0usize; self.n_classes as usize];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// The hash commitment a task publishes for this dataset.
    pub fn commitment(&self) -> crate::HashDigest {
        self.digest()
    }
}

impl Encode for Dataset {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_u8(self.role.tag());
        enc.put_u32(self.n_features as u32);
        enc.put_u32(self.n_classes);
        enc.put_len(self.labels.len());
        for i in 0..self.len() {
            for &v in self.row(i) {
                enc.put_f64(v);
            }
            enc.put_u32(self.labels[i]);
        }
    }
}

impl Decode for Dataset {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let role = DatasetRole::from_tag(dec.u8()?)?;
        let n_features = dec.u32()? as usize;
        let n_classes = dec.u32()?;
        let n = dec.length()?;
        let mut features = Vec::with_capacity(n * n_features);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            for _ in 0..n_features {
                features.push(dec.f64()?);
            }
            labels.push(dec.u32()?);
        }
        Dataset::new(features, labels, n_features, n_classes, role).map_err(|_| DecodeError::Invalid("dataset shape"))
    }
}
