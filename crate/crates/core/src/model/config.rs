use serde::{Deserialize, Serialize};

use super::ModelError;

/// Network dimensions and regularizer weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    /// Word embedding size.
    pub d_e: usize,
    /// LSTM hidden size per direction.
    pub d_h: usize,
    /// Hidden units of the cluster-assignment MLP.
    pub d_mlp: usize,
    /// Number of semantic clusters.
    pub m: usize,
    /// Cluster vector size.
    pub d_c: usize,
    /// Hidden units of the classifier.
    pub d_cls: usize,
    pub n_classes: usize,
    /// Word-level entropy weight.
    pub lambda1: f64,
    /// Class-level peak reward weight.
    pub lambda2: f64,
}

impl ModelConfig {
    pub const DEFAULT_D_E: usize = 300;
    pub const DEFAULT_D_H: usize = 300;
    pub const DEFAULT_D_MLP: usize = 800;
    pub const DEFAULT_M: usize = 10;
    pub const AGNEWS_M: usize = 8;
    pub const DEFAULT_D_C: usize = 600;
    pub const DEFAULT_D_CLS: usize = 1000;
    pub const DEFAULT_LAMBDA: f64 = 0.001;

    /// Full-size configuration (300-d embeddings and LSTM, 800-unit
    /// clustering MLP, 600-d clusters, 1000-unit classifier, 10 clusters).
    pub fn standard(vocab_size: usize, n_classes: usize) -> Self {
        ModelConfig {
            vocab_size,
            d_e: Self::DEFAULT_D_E,
            d_h: Self::DEFAULT_D_H,
            d_mlp: Self::DEFAULT_D_MLP,
            m: Self::DEFAULT_M,
            d_c: Self::DEFAULT_D_C,
            d_cls: Self::DEFAULT_D_CLS,
            n_classes,
            lambda1: Self::DEFAULT_LAMBDA,
            lambda2: Self::DEFAULT_LAMBDA,
        }
    }

    /// Small dimensions for desk-scale experiments and tests.
    pub fn small(vocab_size: usize, n_classes: usize) -> Self {
        ModelConfig {
            vocab_size,
            d_e: 16,
            d_h: 16,
            d_mlp: 32,
            m: 4,
            d_c: 16,
            d_cls: 32,
            n_classes,
            lambda1: Self::DEFAULT_LAMBDA,
            lambda2: Self::DEFAULT_LAMBDA,
        }
    }

    /// Width of a contextual word vector `[x; h_fwd; h_bwd]`.
    pub fn d_r(&self) -> usize {
        self.d_e + 2 * self.d_h
    }

    /// Width of the text representation.
    pub fn d_s(&self) -> usize {
        self.m * self.d_c
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("d_e", self.d_e),
            ("d_h", self.d_h),
            ("d_mlp", self.d_mlp),
            ("m", self.m),
            ("d_c", self.d_c),
            ("d_cls", self.d_cls),
            ("n_classes", self.n_classes),
        ];
        for (field, v) in dims {
            if v == 0 {
                return Err(ModelError::InvalidConfig {
                    field,
                    reason: "must be at least 1".into(),
                });
            }
        }
        if self.vocab_size < 2 {
            return Err(ModelError::InvalidConfig {
                field: "vocab_size",
                reason: "must include <pad> and <unk>".into(),
            });
        }
        for (field, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ModelError::InvalidConfig {
                    field,
                    reason: format!("must be finite and non-negative, got {v}"),
                });
            }
        }
        Ok(())
    }
}
