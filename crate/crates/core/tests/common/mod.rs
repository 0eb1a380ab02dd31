#![allow(dead_code)]

pub mod gradcheck;

use cloud_core::autodiff::{Rng, Tape, Var};
use cloud_core::corruption::CorruptionConfig;
use cloud_core::data::{
    five_core_filter, generate_synthetic_corpus, Corpus, Dataset, NeighborConfig, NegativeSpec, SyntheticConfig,
};
use cloud_core::model::{Model, ModelConfig, ModifierMode};

/// The desk-scale synthetic corpus: 200 users, 50 items.
pub fn synthetic_corpus(seed: u64) -> Corpus {
    let events = generate_synthetic_corpus(&SyntheticConfig::with_size(200, 50), &mut Rng::new(seed));
    let events = five_core_filter(events).expect("synthetic corpus survives 5-core");
    Corpus::from_events(&events, CorruptionConfig::default().max_raw_len)
        .expect("synthetic corpus builds")
        .0
}

pub fn synthetic_dataset(seed: u64) -> Dataset {
    Dataset::build(synthetic_corpus(seed), NeighborConfig::default(), NegativeSpec::default(), seed)
}

pub fn model_for(data: &Dataset, mode: ModifierMode, seed: u64) -> Model {
    let mut cfg = ModelConfig::new(data.n_items());
    cfg.mode = mode;
    Model::new(cfg, seed).expect("valid model config")
}

/// Relative error with a floor on the denominator.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Central-difference gradient check of every parameter entry that `loss`
/// touches. `loss` must build the scalar on the given tape. Returns the
/// largest relative error.
pub fn check_param_grads<F>(model: &mut Model, loss: F, h: f64) -> f64
where
    F: for<'p> Fn(&'p Model, &mut Tape<'p>) -> Var,
{
    let analytic = {
        let mut tape = Tape::with_params(&model.params);
        let out = loss(model, &mut tape);
        tape.backward(out).expect("scalar loss");
        tape.param_grads()
    };
    let eval = |m: &Model| {
        let mut tape = Tape::with_params(&m.params);
        let out = loss(m, &mut tape);
        tape.scalar(out)
    };
    let mut worst = 0.0f64;
    let ids: Vec<_> = analytic.iter().map(|(id, g)| (id, g.to_vec())).collect();
    for (id, g) in ids {
        for k in 0..g.len() {
            let orig = model.params.get(id).tensor.data[k];
            model.params.get_mut(id).tensor.data[k] = orig + h;
            let up = eval(model);
            model.params.get_mut(id).tensor.data[k] = orig - h;
            let down = eval(model);
            model.params.get_mut(id).tensor.data[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let e = rel_err(g[k], numeric);
            if e > worst {
                worst = e;
            }
        }
    }
    worst
}
