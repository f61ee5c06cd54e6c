mod common;

use common::{oracle, random_batch, tiny_config};
use lscr::autodiff::{grad_check, Tape};
use lscr::losses::objective;
use lscr::model::{forward, ParamVars, Parameters};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn objective_matches_scalar_oracle() {
    let cfg = tiny_config();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..5 {
        let params: Parameters<f64> = common::init_params(&cfg, seed);
        let batch = random_batch(&mut rng, &cfg, 3, 5);
        let mut tape = Tape::new();
        let vars = params.register(&mut tape);
        let g = forward(&mut tape, &vars, &batch, &cfg).unwrap();
        let obj = objective(&mut tape, &g, &batch, &cfg).unwrap();
        let got = tape.value(obj.total).item();

        let w = oracle::Weights::from_params(&params);
        let seqs: Vec<Vec<usize>> = (0..batch.size()).map(|b| batch.sequence(b).to_vec()).collect();
        let want = oracle::total_loss(&w, &seqs, &batch.labels, cfg.d_h, cfg.m, cfg.lambda1, cfg.lambda2);
        assert!(common::rel_err(got, want) < 1e-10, "{got} vs {want}");
    }
}

/// Moves the initial parameters to a generic point: unit-scale embeddings
/// and non-zero biases. At the raw initialization some ReLU inputs sit within
/// one finite-difference step of zero and several gradient entries are small
/// enough for f64 rounding in the numeric estimate to dominate.
fn generic_point(params: &mut Parameters<f64>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let set = params.set_mut();
    for i in 0..set.len() {
        let is_embedding = set.name(i) == "embedding";
        let t = set.tensor_mut(i);
        if is_embedding {
            t.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        } else if t.rank() == 1 {
            t.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.5..0.5));
        }
    }
    params.zero_pad_row();
}

#[test]
fn full_objective_gradients_match_finite_differences() {
    let cfg = tiny_config();
    for seed in 0..3 {
        let mut params: Parameters<f64> = common::init_params(&cfg, 21 + seed);
        generic_point(&mut params, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(5 + seed);
        let batch = random_batch(&mut rng, &cfg, 2, 5);
        let report = grad_check(params.set(), 1e-5, |tape, vars| -> Result<_, lscr::losses::LossError> {
            let pv = ParamVars::from_vars(vars.to_vec());
            let g = forward(tape, &pv, &batch, &cfg).map_err(|e| match e {
                lscr::model::ModelError::Tensor(t) => t,
                other => panic!("{other}"),
            })?;
            Ok(objective(tape, &g, &batch, &cfg)?.total)
        })
        .unwrap();
        assert!(report.passes(1e-4), "seed {seed}: {:?}", report.worst());
    }
}
