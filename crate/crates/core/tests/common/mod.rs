#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use infodeficit::encoders::{url_char_ids, PastStep};
use infodeficit::math::{Graph, ParamId, ParamSet, Tensor, Var};
use infodeficit::retention::retention_forward;
use infodeficit::{Ablation, ContextOrder, Model, ModelDims};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;
/// Gradients below this magnitude are compared on an absolute scale.
pub const FD_FLOOR: f64 = 1e-3;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FD_FLOOR)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), uniform(rng, n, -1.0, 1.0)).unwrap()
}

/// Reduces any node to a scalar with fixed random weights so that every
/// output element contributes to the checked gradient.
pub fn project(g: &mut Graph, out: Var, seed: u64) -> Var {
    let n = g.value(out).len();
    if n == 1 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let w =
        g.constant(Tensor::new(g.shape(out).to_vec(), uniform(&mut rng, n, -1.0, 1.0)).unwrap());
    let prod = g.mul(out, w).unwrap();
    g.sum(prod)
}

/// Largest relative error between analytic and central-difference
/// gradients over every scalar of every trainable tensor in `params`.
pub fn max_grad_error<F>(params: &ParamSet, f: F) -> (f64, usize)
where
    F: Fn(&mut Graph) -> Var,
{
    let analytic = {
        let mut g = Graph::new(params);
        let loss = f(&mut g);
        assert_eq!(g.value(loss).len(), 1, "loss must be scalar");
        g.backward(loss).unwrap()
    };
    let eval = |p: &ParamSet| {
        let mut g = Graph::new(p);
        let loss = f(&mut g);
        g.value(loss)[0]
    };
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut work = params.clone();
    for id in params.ids().collect::<Vec<ParamId>>() {
        if !params.get(id).requires_grad() {
            continue;
        }
        let zeros = vec![0.0; params.get(id).len()];
        let grad = analytic.param(id).unwrap_or(&zeros).to_vec();
        for (j, &g) in grad.iter().enumerate() {
            let x = params.get(id).values()[j];
            work.get_mut(id).values_mut()[j] = x + FD_STEP;
            let up = eval(&work);
            work.get_mut(id).values_mut()[j] = x - FD_STEP;
            let down = eval(&work);
            work.get_mut(id).values_mut()[j] = x;
            let numeric = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(g, numeric));
            checked += 1;
        }
    }
    (worst, checked)
}

pub fn tiny_dims(vocab_size: usize) -> ModelDims {
    ModelDims {
        vocab_size,
        embed_dim: 3,
        char_embed_dim: 2,
        hidden_dim: 3,
    }
}

/// A model whose weights are spread wider than the default initialization
/// so that every path carries a sizable gradient.
pub fn spread_model(dims: ModelDims, seed: u64) -> Model {
    let mut model = Model::new(dims, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000));
    let (word, chars) = (model.layout.embeddings.word, model.layout.embeddings.chars);
    for id in model.params.ids().collect::<Vec<_>>() {
        let t = model.params.get_mut(id);
        let pad = if id == word {
            dims.embed_dim
        } else if id == chars {
            dims.char_embed_dim
        } else {
            0
        };
        for v in t.values_mut()[pad..].iter_mut() {
            *v = rng.gen_range(-0.9..0.9);
        }
    }
    model
}

pub fn sample_past() -> Vec<PastStep> {
    vec![
        PastStep {
            query_ids: vec![3, 4],
            url_chars: url_char_ids(&["ab.io"], 16),
        },
        PastStep {
            query_ids: vec![2],
            url_chars: Vec::new(),
        },
    ]
}

/// Per-word cross-entropy of the retention head, as used in training.
pub fn retention_loss(
    g: &mut Graph,
    model: &Model,
    current: &[usize],
    past: &[PastStep],
    labels: &[u8],
    ablation: Ablation,
) -> Var {
    let probs = retention_forward(
        g,
        &model.layout,
        current,
        past,
        ablation,
        ContextOrder::default(),
    )
    .unwrap();
    let joined = g.concat(&probs, 0).unwrap();
    let targets: Vec<f64> = labels
        .iter()
        .flat_map(|&y| [1.0 - y as f64, y as f64])
        .collect();
    g.bce_loss(joined, &targets).unwrap()
}

/// Every op instance of the suite: name and worst relative error.
pub fn gradient_suite(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let mut run = |name: &'static str,
                   shapes: &[&[usize]],
                   build: &dyn Fn(&mut Graph, &[Var]) -> Var,
                   rng: &mut ChaCha8Rng| {
        let mut ps = ParamSet::new();
        let ids: Vec<ParamId> = shapes
            .iter()
            .enumerate()
            .map(|(i, s)| ps.add(format!("x{i}"), random_tensor(rng, s)))
            .collect();
        let (err, _) = max_grad_error(&ps, |g| {
            let xs: Vec<Var> = ids.iter().map(|&id| g.param(id)).collect();
            let y = build(g, &xs);
            project(g, y, seed)
        });
        out.push((name, err));
    };

    run(
        "matmul",
        &[&[3, 4], &[4, 2]],
        &|g, x| g.matmul(x[0], x[1]).unwrap(),
        &mut rng,
    );
    run(
        "matvec",
        &[&[3, 4], &[4]],
        &|g, x| g.matmul(x[0], x[1]).unwrap(),
        &mut rng,
    );
    run(
        "add",
        &[&[5], &[5]],
        &|g, x| g.add(x[0], x[1]).unwrap(),
        &mut rng,
    );
    run(
        "sub",
        &[&[2, 3], &[2, 3]],
        &|g, x| g.sub(x[0], x[1]).unwrap(),
        &mut rng,
    );
    run(
        "mul",
        &[&[6], &[6]],
        &|g, x| g.mul(x[0], x[1]).unwrap(),
        &mut rng,
    );
    run(
        "mul_same_input",
        &[&[4]],
        &|g, x| g.mul(x[0], x[0]).unwrap(),
        &mut rng,
    );
    run("sigmoid", &[&[6]], &|g, x| g.sigmoid(x[0]), &mut rng);
    run("tanh", &[&[6]], &|g, x| g.tanh(x[0]), &mut rng);
    run("softmax", &[&[5]], &|g, x| g.softmax(x[0]), &mut rng);
    run(
        "softmax_rows",
        &[&[3, 4]],
        &|g, x| g.softmax(x[0]),
        &mut rng,
    );
    run(
        "concat",
        &[&[3], &[2], &[4]],
        &|g, x| g.concat(x, 0).unwrap(),
        &mut rng,
    );
    run(
        "concat_inner",
        &[&[2, 3], &[2, 1]],
        &|g, x| g.concat(x, 1).unwrap(),
        &mut rng,
    );
    run(
        "slice",
        &[&[7]],
        &|g, x| g.slice(x[0], 2, 3).unwrap(),
        &mut rng,
    );
    run("sum", &[&[2, 4]], &|g, x| g.sum(x[0]), &mut rng);
    run("scale", &[&[5]], &|g, x| g.scale(x[0], -1.7), &mut rng);
    run(
        "affine",
        &[&[3, 2], &[2], &[3, 4], &[4], &[3]],
        &|g, x| g.affine(&[(x[0], x[1]), (x[2], x[3])], Some(x[4])).unwrap(),
        &mut rng,
    );
    run(
        "gate_mix",
        &[&[4], &[4], &[4]],
        &|g, x| {
            let gate = g.sigmoid(x[0]);
            g.gate_mix(gate, x[1], x[2]).unwrap()
        },
        &mut rng,
    );
    run(
        "gather",
        &[&[4, 3]],
        &|g, _| {
            let id = g.params().id("x0").unwrap();
            let a = g.gather(id, 1).unwrap();
            let b = g.gather(id, 3).unwrap();
            let c = g.gather(id, 1).unwrap();
            let ab = g.mul(a, b).unwrap();
            g.add(ab, c).unwrap()
        },
        &mut rng,
    );

    let targets: Vec<f64> = (0..6).map(|_| f64::from(rng.gen_bool(0.5) as u8)).collect();
    for (name, mae) in [("bce_loss", false), ("mae_loss", true)] {
        let mut ps = ParamSet::new();
        let id = ps.add("p", Tensor::vector(uniform(&mut rng, 6, 0.05, 0.95)));
        let t = targets.clone();
        let (err, _) = max_grad_error(&ps, |g| {
            let p = g.param(id);
            if mae {
                g.mae_loss(p, &t).unwrap()
            } else {
                g.bce_loss(p, &t).unwrap()
            }
        });
        out.push((name, err));
    }

    let model = spread_model(tiny_dims(6), seed);
    let labels = [u8::from(rng.gen_bool(0.5)), u8::from(rng.gen_bool(0.5))];
    let past = sample_past();
    for (name, ablation) in [
        ("retention_loss", Ablation::NONE),
        (
            "retention_loss_no_deficit",
            Ablation {
                disable_deficit: true,
                disable_context: false,
            },
        ),
    ] {
        let (err, _) = max_grad_error(&model.params, |g| {
            retention_loss(g, &model, &[5, 2], &past, &labels, ablation)
        });
        out.push((name, err));
    }
    out
}
