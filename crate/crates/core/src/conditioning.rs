//! Target-domain labels and frame-wise extended features.
//!
//! A label is a one-hot vector over N+1 domains, index 0 for clean and
//! indices 1..=N for the noise types. Extending a feature matrix places the
//! broadcast label in the FIRST N+1 rows, above the spectral rows; every
//! consumer in the toolkit relies on that fixed order. Generator outputs
//! carry predicted label rows that are generally not one-hot, and nothing
//! here re-binarizes them.

use thiserror::Error;

use crate::autodiff::Tensor;

#[derive(Debug, Error)]
pub enum ConditioningError {
    #[error("domain index {index} out of range for {n_noise} noise types")]
    IndexOutOfRange { index: usize, n_noise: usize },
    #[error("label has {got} entries, extended feature expects {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("extended feature needs more than {label_rows} label rows, got {rows} total")]
    TooFewRows { rows: usize, label_rows: usize },
    #[error("label rows are not one-hot at frame {frame}")]
    NotOneHot { frame: usize },
    #[error("expected a rank-2 matrix, got shape {0:?}")]
    NotAMatrix(Vec<usize>),
}

pub type Result<T> = std::result::Result<T, ConditioningError>;

/// One-hot target-domain vector of length `n_noise + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainLabel {
    vec: Vec<f32>,
    n_noise: usize,
}

impl DomainLabel {
    /// `domain_index` 0 selects clean; `1..=n_noise` selects a noise type.
    pub fn new(domain_index: usize, n_noise: usize) -> Result<Self> {
        if domain_index > n_noise {
            return Err(ConditioningError::IndexOutOfRange { index: domain_index, n_noise });
        }
        let mut vec = vec![0.0; n_noise + 1];
        vec[domain_index] = 1.0;
        Ok(Self { vec, n_noise })
    }

    pub fn clean(n_noise: usize) -> Self {
        Self::new(0, n_noise).expect("index 0 is always valid")
    }

    pub fn values(&self) -> &[f32] {
        &self.vec
    }

    pub fn len(&self) -> usize {
        self.vec.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_noise(&self) -> usize {
        self.n_noise
    }

    pub fn domain_index(&self) -> usize {
        self.vec.iter().position(|&v| v == 1.0).expect("constructed one-hot")
    }

    /// The label repeated across `frames` columns, shape `[len, frames]`.
    pub fn broadcast(&self, frames: usize) -> Tensor {
        Tensor::from_fn(vec![self.vec.len(), frames], |idx| self.vec[idx / frames])
    }
}

/// Feature matrix with the label block stacked on top: `(F+N+1) x T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedFeature {
    matrix: Tensor,
    n_noise: usize,
}

impl ExtendedFeature {
    /// Wrap an existing `(F+N+1) x T` matrix, e.g. a generator output.
    pub fn from_matrix(matrix: Tensor, n_noise: usize) -> Result<Self> {
        let [rows, _cols] = matrix.shape() else {
            return Err(ConditioningError::NotAMatrix(matrix.shape().to_vec()));
        };
        if *rows <= n_noise + 1 {
            return Err(ConditioningError::TooFewRows { rows: *rows, label_rows: n_noise + 1 });
        }
        Ok(Self { matrix, n_noise })
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    pub fn into_matrix(self) -> Tensor {
        self.matrix
    }

    pub fn n_noise(&self) -> usize {
        self.n_noise
    }

    pub fn label_rows(&self) -> usize {
        self.n_noise + 1
    }

    pub fn rows(&self) -> usize {
        self.matrix.shape()[0]
    }

    pub fn feature_rows(&self) -> usize {
        self.rows() - self.label_rows()
    }

    pub fn frames(&self) -> usize {
        self.matrix.shape()[1]
    }

    /// Overwrite the label block; feature rows are copied bit-exactly.
    pub fn replace_label(&self, new_label: &DomainLabel) -> Result<Self> {
        if new_label.len() != self.label_rows() {
            return Err(ConditioningError::DimensionMismatch {
                got: new_label.len(),
                want: self.label_rows(),
            });
        }
        let frames = self.frames();
        let mut data = self.matrix.data().to_vec();
        for (r, &v) in new_label.values().iter().enumerate() {
            data[r * frames..(r + 1) * frames].fill(v);
        }
        let matrix = Tensor::new(self.matrix.shape().to_vec(), data).expect("same shape");
        Ok(Self { matrix, n_noise: self.n_noise })
    }

    /// Partition into `(features F x T, label rows (N+1) x T)`.
    ///
    /// Label rows come back exactly as stored; predicted labels stay
    /// continuous-valued.
    pub fn split_label(&self) -> (Tensor, Tensor) {
        let (frames, lr) = (self.frames(), self.label_rows());
        let data = self.matrix.data();
        let labels = Tensor::new(vec![lr, frames], data[..lr * frames].to_vec()).expect("shape");
        let features = Tensor::new(vec![self.feature_rows(), frames], data[lr * frames..].to_vec())
            .expect("shape");
        (features, labels)
    }

    /// Check that every frame's label block is exactly one-hot.
    ///
    /// Ground-truth batches must pass; generator outputs generally do not.
    pub fn validate_one_hot(&self) -> Result<()> {
        let frames = self.frames();
        let data = self.matrix.data();
        for t in 0..frames {
            let mut ones = 0usize;
            for r in 0..self.label_rows() {
                let v = data[r * frames + t];
                if v == 1.0 {
                    ones += 1;
                } else if v != 0.0 {
                    return Err(ConditioningError::NotOneHot { frame: t });
                }
            }
            if ones != 1 {
                return Err(ConditioningError::NotOneHot { frame: t });
            }
        }
        Ok(())
    }
}

/// Stack a broadcast label on top of an `F x T` feature matrix.
pub fn append_label(features: &Tensor, label: &DomainLabel) -> Result<ExtendedFeature> {
    let [f_rows, frames] = features.shape() else {
        return Err(ConditioningError::NotAMatrix(features.shape().to_vec()));
    };
    let (f_rows, frames) = (*f_rows, *frames);
    let lr = label.len();
    let mut data = Vec::with_capacity((f_rows + lr) * frames);
    for &v in label.values() {
        data.extend(std::iter::repeat_n(v, frames));
    }
    data.extend_from_slice(features.data());
    let matrix = Tensor::new(vec![f_rows + lr, frames], data).expect("shape");
    Ok(ExtendedFeature { matrix, n_noise: label.n_noise() })
}
