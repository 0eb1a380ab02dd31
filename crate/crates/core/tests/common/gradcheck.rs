//! Central finite-difference checks shared by the gradient tests and the
//! acceptance run.

use cloud_core::autodiff::{Activation, Rng, Tape, Tensor, Var};
use cloud_core::corruption::{corrupt, mask_for_recommender, CorruptionConfig, CorruptionExample, MaskPolicy, OperationLabel};
use cloud_core::model::{Model, ModelConfig, ModifierMode};
use cloud_core::train::{joint_loss, Objective, StepInput, StepRngs};

use super::{check_param_grads, rel_err};

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

fn random(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    Tensor::new(vec![rows, cols], data).unwrap()
}

fn positive(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.uniform_range(0.2, 1.0)).collect();
    Tensor::new(vec![rows, cols], data).unwrap()
}

/// Largest relative error of `d/dx Σ w ⊙ f(x)` over every input entry. `f`
/// must return a matrix whose shape does not depend on the input values.
pub fn op_error<F>(inputs: Vec<Tensor>, f: F) -> f64
where
    F: Fn(&mut Tape<'_>, &[Var]) -> Var,
{
    let weights = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars);
        let (r, c) = tape.shape(out);
        random(r, c, &mut Rng::new(99))
    };
    let objective = |tape: &mut Tape<'_>, vars: &[Var]| {
        let out = f(tape, vars);
        let w = tape.constant(weights.clone());
        let prod = tape.mul(out, w).unwrap();
        tape.sum(prod)
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = objective(&mut tape, &vars);
    tape.backward(out).unwrap();
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| tape.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; tape.data(v).len()]))
        .collect();

    let eval = |ins: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ins.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = objective(&mut tape, &vars);
        tape.scalar(out)
    };
    let mut worst = 0.0f64;
    for (i, input) in inputs.iter().enumerate() {
        for k in 0..input.data.len() {
            let mut up = inputs.clone();
            up[i].data[k] += H;
            let mut down = inputs.clone();
            down[i].data[k] -= H;
            let numeric = (eval(&up) - eval(&down)) / (2.0 * H);
            worst = worst.max(rel_err(analytic[i][k], numeric));
        }
    }
    worst
}

/// Worst error per tape primitive.
pub fn primitive_errors() -> Vec<(&'static str, f64)> {
    let mut rng = Rng::new(1);
    let (a, b, bt) = (random(3, 4, &mut rng), random(4, 5, &mut rng), random(5, 4, &mut rng));
    let a2 = random(3, 4, &mut rng);
    let row = random(1, 4, &mut rng);
    let col = random(3, 1, &mut rng);
    let t = random(4, 3, &mut rng);
    let (t_rows, t_cols) = (random(2, 3, &mut rng), random(4, 2, &mut rng));
    let s = random(3, 5, &mut rng);
    let (gain, bias) = (random(1, 5, &mut rng), random(1, 5, &mut rng));
    let probs = positive(3, 5, &mut rng);
    // entries kept away from the kink at 0
    let away = Tensor::new(
        s.shape.clone(),
        s.data.iter().map(|x| if x.abs() < 0.05 { x + 0.2 } else { *x }).collect(),
    )
    .unwrap();
    let allowed: Vec<bool> = (0..3).flat_map(|r| [true, r == 1, true, true, false]).collect();

    vec![
        ("matmul", op_error(vec![a.clone(), b], |t, v| t.matmul(v[0], v[1]).unwrap())),
        ("matmul_nt", op_error(vec![a.clone(), bt], |t, v| t.matmul_nt(v[0], v[1]).unwrap())),
        ("transpose", op_error(vec![a.clone()], |t, v| t.transpose(v[0]))),
        ("add", op_error(vec![a.clone(), a2.clone()], |t, v| t.add(v[0], v[1]).unwrap())),
        ("mul", op_error(vec![a.clone(), a2], |t, v| t.mul(v[0], v[1]).unwrap())),
        ("add_row", op_error(vec![a.clone(), row], |t, v| t.add_row(v[0], v[1]).unwrap())),
        ("mul_col", op_error(vec![a.clone(), col], |t, v| t.mul_col(v[0], v[1]).unwrap())),
        ("scale", op_error(vec![a], |t, v| t.scale(v[0], -1.7))),
        ("gather_rows", op_error(vec![t.clone()], |t, v| t.gather_rows(v[0], &[2, 0, 2, 3]).unwrap())),
        ("embedding", op_error(vec![t.clone()], |t, v| t.embedding(v[0], &[1, 1, 3]).unwrap())),
        ("concat_rows", op_error(vec![t.clone(), t_rows], |t, v| t.concat_rows(&[v[0], v[1]]).unwrap())),
        ("concat_cols", op_error(vec![t.clone(), t_cols], |t, v| t.concat_cols(&[v[0], v[1]]).unwrap())),
        ("slice_rows", op_error(vec![t.clone()], |t, v| t.slice_rows(v[0], 1, 2).unwrap())),
        ("slice_cols", op_error(vec![t.clone()], |t, v| t.slice_cols(v[0], 1, 2).unwrap())),
        ("mean_rows", op_error(vec![t.clone()], |t, v| t.mean_rows(v[0]))),
        ("sum", op_error(vec![t], |t, v| t.sum(v[0]))),
        ("gelu", op_error(vec![s.clone()], |t, v| t.gelu(v[0]))),
        ("tanh", op_error(vec![s.clone()], |t, v| t.tanh(v[0]))),
        ("relu", op_error(vec![away], |t, v| t.activation(v[0], Activation::Relu))),
        ("layer_norm", op_error(vec![s.clone(), gain, bias], |t, v| t.layer_norm(v[0], v[1], v[2]).unwrap())),
        ("dropout", op_error(vec![s.clone()], |t, v| t.dropout(v[0], 0.5, Some(&mut Rng::new(5))))),
        ("softmax_rows", op_error(vec![s.clone()], |t, v| t.softmax_rows(v[0], None).unwrap())),
        ("masked softmax_rows", op_error(vec![s.clone()], |t, v| t.softmax_rows(v[0], Some(&allowed)).unwrap())),
        ("softmax axis 0", op_error(vec![s.clone()], |t, v| t.softmax(v[0], 0).unwrap())),
        ("cross_entropy", op_error(vec![s], |t, v| t.cross_entropy(v[0], &[4, 0, 2]).unwrap())),
        ("nll_probs", op_error(vec![probs], |t, v| t.nll_probs(v[0], &[1, 1, 3]).unwrap())),
    ]
}

pub fn tiny_model(mode: ModifierMode, seed: u64) -> Model {
    let mut cfg = ModelConfig::new(12);
    cfg.dim = 8;
    cfg.mode = mode;
    Model::new(cfg, seed).unwrap()
}

const RAW: [usize; 8] = [0, 3, 5, 7, 2, 9, 4, 1];

fn neighbors() -> Vec<Vec<usize>> {
    vec![vec![0, 3, 5, 6, 8], vec![10, 3, 5, 11, 2, 4]]
}

/// A corruption with an insertion target and a noise item, so every part of
/// the modifier loss is exercised.
fn example_with_insertion(model: &Model) -> CorruptionExample {
    let cfg = CorruptionConfig::default();
    (0..)
        .map(|s| corrupt(&RAW, &cfg, model.tokens(), &mut Rng::new(s)).unwrap())
        .find(|ex| !ex.insert_targets.is_empty() && ex.labels.contains(&OperationLabel::Delete))
        .unwrap()
}

/// Modifier loss error for each mode.
pub fn modifier_loss_errors() -> Vec<(ModifierMode, f64)> {
    ModifierMode::ALL
        .into_iter()
        .map(|mode| {
            let mut model = tiny_model(mode, 11);
            let example = example_with_insertion(&model);
            let nbrs = neighbors();
            let worst = check_param_grads(
                &mut model,
                |m, tape| {
                    let refs: Vec<&[usize]> = nbrs.iter().map(Vec::as_slice).collect();
                    let ctx = m.neighbor_context(tape, &refs, None).unwrap();
                    m.modifier_loss(tape, &example, &ctx, None).unwrap().total
                },
                H,
            );
            (mode, worst)
        })
        .collect()
}

/// Recommender loss over a raw and a modified view.
pub fn recommender_loss_error() -> f64 {
    let mut model = tiny_model(ModifierMode::Cloud, 12);
    let mut rng = Rng::new(3);
    let tokens = model.tokens();
    let v1 = mask_for_recommender(&RAW, 0.5, MaskPolicy::Random, tokens, &mut rng).unwrap();
    let v2 = mask_for_recommender(&[4, 4, 6, 1], 0.5, MaskPolicy::Random, tokens, &mut rng).unwrap();
    check_param_grads(&mut model, |m, tape| m.recommender_loss(tape, &[&v1, &v2], None).unwrap(), H)
}

/// Joint loss summed over two sequences, dropout off.
pub fn joint_loss_error() -> f64 {
    let mut model = tiny_model(ModifierMode::Cloud, 13);
    let nbrs = neighbors();
    let other = vec![6, 2, 8, 8, 11, 0];
    let corruption = CorruptionConfig::default();
    check_param_grads(
        &mut model,
        |m, tape| {
            let refs: Vec<&[usize]> = nbrs.iter().map(Vec::as_slice).collect();
            let mut total = None;
            for (s, seq) in [&RAW[..], &other].into_iter().enumerate() {
                let input = StepInput {
                    raw: seq,
                    modified: Some(&[3, 5, 1]),
                    neighbors: refs.clone(),
                };
                let mut rngs = StepRngs::derived(5, 1, 1, s as u64);
                rngs.dropout = None;
                let l = joint_loss(m, tape, &input, &corruption, Objective::Joint, &mut rngs).unwrap().total;
                total = Some(match total {
                    None => l,
                    Some(t) => tape.add(t, l).unwrap(),
                });
            }
            total.unwrap()
        },
        H,
    )
}
