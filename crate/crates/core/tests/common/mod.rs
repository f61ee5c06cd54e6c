#![allow(dead_code)]

pub mod oracle;

use lscr::autodiff::Scalar;
use lscr::data::{Batch, Example};
use lscr::model::{ModelConfig, Parameters};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The tiny configuration used for gradient checks.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        vocab_size: 20,
        d_e: 4,
        d_h: 4,
        d_mlp: 6,
        m: 3,
        d_c: 5,
        d_cls: 7,
        n_classes: 4,
        lambda1: 0.01,
        lambda2: 0.01,
    }
}

pub fn init_params<S: Scalar>(config: &ModelConfig, seed: u64) -> Parameters<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Parameters::init(config, &mut rng).unwrap()
}

/// Random batch of `b` samples with lengths in `1..=t_max` (at least one of
/// length `t_max`) over non-PAD token indices.
pub fn random_batch(rng: &mut ChaCha8Rng, config: &ModelConfig, b: usize, t_max: usize) -> Batch {
    let exs: Vec<Example> = (0..b)
        .map(|i| {
            let len = if i == 0 { t_max } else { rng.gen_range(1..=t_max) };
            let toks = (0..len).map(|_| rng.gen_range(1..config.vocab_size)).collect();
            Example::new(toks, rng.gen_range(0..config.n_classes))
        })
        .collect();
    Batch::from_examples(&exs, None)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Optional AGNews check: 20k training texts, 4 epochs, accuracy on 2k test
/// texts. Returns a one-line report; nothing is asserted.
pub fn agnews_subset(dir: &std::path::Path) -> String {
    use lscr::data::{load_corpus, load_embeddings, CorpusFormat, Vocabulary};
    use lscr::rng::{stream_rng, Stream};
    use lscr::training::{evaluate, train, EvalOptions, TrainData, TrainOptions};
    use rand::seq::SliceRandom;

    let format = CorpusFormat {
        n_classes: Some(4),
        has_header: false,
    };
    let load = |name: &str| load_corpus(&dir.join(name), &format);
    let (mut tr, mut te) = match (load("train.csv"), load("test.csv")) {
        (Ok(a), Ok(b)) => (a.records, b.records),
        (Err(e), _) | (_, Err(e)) => return format!("could not load AGNews: {e}"),
    };
    tr.shuffle(&mut stream_rng(1, Stream::Split));
    te.shuffle(&mut stream_rng(2, Stream::Split));
    tr.truncate(20_000);
    te.truncate(2_000);
    let vocab = Vocabulary::build(&tr, 2, Some(30_000));
    let mut cfg = ModelConfig::small(vocab.len(), 4);
    cfg.m = ModelConfig::AGNEWS_M;
    cfg.d_e = 100;
    cfg.d_h = 64;
    let mut init_rng = stream_rng(1, Stream::Init);
    let params = match std::env::var_os("LSCR_GLOVE") {
        Some(path) => {
            let mut oov = stream_rng(1, Stream::Oov);
            match load_embeddings(std::path::Path::new(&path), &vocab, None, &mut oov) {
                Ok(emb) => {
                    cfg.d_e = emb.table.dim();
                    Parameters::init_with_embeddings(&cfg, emb.table, &mut init_rng)
                }
                Err(e) => return format!("could not load embeddings: {e}"),
            }
        }
        None => Parameters::init(&cfg, &mut init_rng),
    }
    .expect("valid config");
    let train_ex: Vec<Example> = tr
        .iter()
        .map(|r| Example::new(vocab.encode(&r.tokens), r.label))
        .collect();
    let test_ex: Vec<Example> = te
        .iter()
        .map(|r| Example::new(vocab.encode(&r.tokens), r.label))
        .collect();
    let opts = TrainOptions {
        epochs: 4,
        seed: 1,
        max_len: Some(100),
        ..TrainOptions::default()
    };
    let out = match train(
        &cfg,
        params,
        &vocab,
        TrainData {
            train: &train_ex,
            validation: &[],
        },
        &opts,
    ) {
        Ok(o) => o,
        Err(e) => return format!("training failed: {e}"),
    };
    match evaluate(&out.best, &cfg, &test_ex, EvalOptions::default()) {
        Ok(ev) => format!(
            "AGNews 20k/2k subset test accuracy {:.4} (reference > 0.85)",
            ev.accuracy
        ),
        Err(e) => format!("evaluation failed: {e}"),
    }
}
