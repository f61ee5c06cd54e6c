use rand::seq::SliceRandom;

use super::{Example, PAD};
use crate::rng::{sub_stream_rng, Stream};

/// Padded `B×T` index matrix with its mask. `T` is the longest (possibly
/// truncated) sequence in the batch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    /// Row-major `B×T`; PAD beyond each length.
    pub indices: Vec<usize>,
    /// Row-major `B×T`; true iff `t < lengths[b]`.
    pub mask: Vec<bool>,
    pub labels: Vec<usize>,
    pub lengths: Vec<usize>,
    time: usize,
}

impl Batch {
    pub fn from_examples<'e, I>(examples: I, max_len: Option<usize>) -> Self
    where
        I: IntoIterator<Item = &'e Example>,
    {
        let examples: Vec<&Example> = examples.into_iter().collect();
        assert!(!examples.is_empty(), "empty batch");
        let cap = max_len.unwrap_or(usize::MAX).max(1);
        let lengths: Vec<usize> = examples.iter().map(|e| e.tokens.len().min(cap)).collect();
        let time = lengths.iter().copied().max().unwrap_or(1).max(1);
        let mut indices = vec![PAD; examples.len() * time];
        let mut mask = vec![false; examples.len() * time];
        for (b, (ex, &len)) in examples.iter().zip(&lengths).enumerate() {
            indices[b * time..b * time + len].copy_from_slice(&ex.tokens[..len]);
            mask[b * time..b * time + len].fill(true);
        }
        Batch {
            indices,
            mask,
            labels: examples.iter().map(|e| e.label).collect(),
            lengths,
            time,
        }
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn index(&self, b: usize, t: usize) -> usize {
        self.indices[b * self.time + t]
    }

    pub fn is_real(&self, b: usize, t: usize) -> bool {
        self.mask[b * self.time + t]
    }

    /// Token indices of every sample at time step `t`.
    pub fn column(&self, t: usize) -> Vec<usize> {
        (0..self.size()).map(|b| self.index(b, t)).collect()
    }

    pub fn mask_column(&self, t: usize) -> Vec<bool> {
        (0..self.size()).map(|b| self.is_real(b, t)).collect()
    }

    /// Token indices of sample `b` without padding.
    pub fn sequence(&self, b: usize) -> &[usize] {
        &self.indices[b * self.time..b * self.time + self.lengths[b]]
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BatchOptions {
    pub batch_size: usize,
    pub max_len: Option<usize>,
    /// `None` keeps corpus order.
    pub shuffle_seed: Option<u64>,
}

/// Iterator over the batches of one epoch.
pub struct Batches<'e> {
    examples: &'e [Example],
    order: Vec<usize>,
    pos: usize,
    opts: BatchOptions,
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.opts.batch_size).min(self.order.len());
        let batch = Batch::from_examples(
            self.order[self.pos..end].iter().map(|&i| &self.examples[i]),
            self.opts.max_len,
        );
        self.pos = end;
        Some(batch)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.order.len() - self.pos).div_ceil(self.opts.batch_size);
        (left, Some(left))
    }
}

/// Batches for `epoch`. With a shuffle seed the order is a permutation
/// drawn from (seed, epoch); the final partial batch is kept.
pub fn make_batches<'e>(examples: &'e [Example], opts: BatchOptions, epoch: u32) -> Batches<'e> {
    assert!(opts.batch_size >= 1, "batch_size must be at least 1");
    let mut order: Vec<usize> = (0..examples.len()).collect();
    if let Some(seed) = opts.shuffle_seed {
        order.shuffle(&mut sub_stream_rng(seed, Stream::Shuffle, epoch));
    }
    Batches {
        examples,
        order,
        pos: 0,
        opts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(len: usize, label: usize) -> Example {
        Example::new((2..2 + len).collect(), label)
    }

    #[test]
    fn pads_to_batch_max() {
        let exs = [ex(3, 0), ex(5, 1)];
        let b = Batch::from_examples(&exs, None);
        assert_eq!(b.time(), 5);
        assert_eq!(&b.mask[..5], &[true, true, true, false, false]);
        assert_eq!(&b.mask[5..], &[true; 5]);
        assert_eq!(&b.indices[3..5], &[PAD, PAD]);
        assert_eq!(b.lengths, vec![3, 5]);
    }

    #[test]
    fn truncates_to_max_len() {
        let exs = [ex(3, 0), ex(5, 1)];
        let b = Batch::from_examples(&exs, Some(4));
        assert_eq!(b.time(), 4);
        assert_eq!(b.lengths, vec![3, 4]);
        assert_eq!(b.sequence(1), &[2, 3, 4, 5]);
    }

    #[test]
    fn keeps_partial_batch_and_is_deterministic() {
        let exs: Vec<Example> = (0..10).map(|i| ex(1 + i % 4, i % 2)).collect();
        let opts = BatchOptions {
            batch_size: 4,
            max_len: None,
            shuffle_seed: Some(42),
        };
        let sizes: Vec<usize> = make_batches(&exs, opts, 0).map(|b| b.size()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
        let a: Vec<Batch> = make_batches(&exs, opts, 3).collect();
        let b: Vec<Batch> = make_batches(&exs, opts, 3).collect();
        assert_eq!(a, b);
        let c: Vec<Batch> = make_batches(&exs, opts, 4).collect();
        assert_ne!(a, c);
    }
}
