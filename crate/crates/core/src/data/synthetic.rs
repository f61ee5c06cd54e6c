//! Generated topic corpora with known word→topic ground truth.

use std::collections::HashMap;

use rand::Rng;

use super::{Corpus, TextRecord};
use crate::rng::{stream_rng, Stream};

const TOPIC_STEMS: [&str; 8] = ["sport", "market", "tech", "world", "health", "music", "film", "food"];

pub const FUNCTION_WORDS: [&str; 12] = [
    "the", "a", "of", "and", "to", "in", "is", "for", "on", "with", "at", ",",
];

#[derive(Clone, Debug)]
pub struct SyntheticSpec {
    pub topics: usize,
    pub words_per_topic: usize,
    /// Shared filler words, drawn from [`FUNCTION_WORDS`].
    pub function_words: usize,
    pub samples: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Probability that a position holds a filler word.
    pub function_rate: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Small corpus for overfitting checks: disjoint 10-word topic
    /// vocabularies, lengths 6–12.
    pub fn overfit(seed: u64) -> Self {
        SyntheticSpec {
            topics: 4,
            words_per_topic: 10,
            function_words: 0,
            samples: 32,
            min_len: 6,
            max_len: 12,
            function_rate: 0.0,
            seed,
        }
    }

    /// Larger corpus with shared filler words for clustering analysis. The
    /// filler rate keeps each filler rarer than a typical topic word, so
    /// per-cluster frequency rankings are led by topic vocabulary.
    pub fn clustering(samples: usize, seed: u64) -> Self {
        SyntheticSpec {
            topics: 4,
            words_per_topic: 30,
            function_words: 10,
            samples,
            min_len: 8,
            max_len: 16,
            function_rate: 0.15,
            seed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub topic_words: Vec<Vec<String>>,
    pub function_words: Vec<String>,
    topic_of: HashMap<String, usize>,
}

impl SyntheticCorpus {
    pub fn generate(spec: &SyntheticSpec) -> Self {
        assert!(spec.topics >= 1 && spec.words_per_topic >= 1);
        assert!(spec.min_len >= 1 && spec.min_len <= spec.max_len);
        assert!(spec.function_words <= FUNCTION_WORDS.len());

        let topic_words: Vec<Vec<String>> = (0..spec.topics)
            .map(|t| {
                let stem = TOPIC_STEMS
                    .get(t)
                    .map_or_else(|| format!("topic{t}w"), |s| s.to_string());
                (0..spec.words_per_topic).map(|k| format!("{stem}{k}")).collect()
            })
            .collect();
        let function_words: Vec<String> = FUNCTION_WORDS[..spec.function_words]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let topic_of = topic_words
            .iter()
            .enumerate()
            .flat_map(|(t, ws)| ws.iter().map(move |w| (w.clone(), t)))
            .collect();

        let mut rng = stream_rng(spec.seed, Stream::Init);
        let records = (0..spec.samples)
            .map(|i| {
                let label = i % spec.topics;
                let len = rng.gen_range(spec.min_len..=spec.max_len);
                let tokens = (0..len)
                    .map(|_| {
                        if !function_words.is_empty() && rng.gen_bool(spec.function_rate) {
                            function_words[rng.gen_range(0..function_words.len())].clone()
                        } else {
                            let words = &topic_words[label];
                            words[rng.gen_range(0..words.len())].clone()
                        }
                    })
                    .collect();
                TextRecord { tokens, label }
            })
            .collect();

        SyntheticCorpus {
            corpus: Corpus {
                records,
                n_classes: spec.topics,
                rejected_lines: Vec::new(),
            },
            topic_words,
            function_words,
            topic_of,
        }
    }

    /// Topic owning `token`, or `None` for filler and unknown words.
    pub fn topic_of(&self, token: &str) -> Option<usize> {
        self.topic_of.get(token).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overfit_corpus_shape() {
        let s = SyntheticCorpus::generate(&SyntheticSpec::overfit(1));
        assert_eq!(s.corpus.len(), 32);
        assert_eq!(s.corpus.class_counts(), vec![8; 4]);
        for r in &s.corpus.records {
            assert!((6..=12).contains(&r.tokens.len()));
            assert!(r.tokens.iter().all(|t| s.topic_of(t) == Some(r.label)));
        }
    }

    #[test]
    fn filler_words_have_no_topic() {
        let s = SyntheticCorpus::generate(&SyntheticSpec::clustering(50, 2));
        assert!(s.function_words.iter().all(|w| s.topic_of(w).is_none()));
        let fillers = s
            .corpus
            .records
            .iter()
            .flat_map(|r| &r.tokens)
            .filter(|t| s.topic_of(t).is_none())
            .count();
        assert!(fillers > 0);
    }
}
