//! Text classification by latent semantic clustering of contextual word
//! vectors.
//!
//! Words are encoded with a bi-directional LSTM, softly assigned to `m`
//! clusters, pooled into one vector per cluster, gated, and concatenated
//! into the text representation fed to a small classifier. Training adds a
//! word-level entropy penalty and a class-level peak-separation reward to
//! the cross-entropy objective.

pub mod analysis;
pub mod autodiff;
pub mod data;
pub mod losses;
pub mod model;
pub mod rng;
pub mod training;
