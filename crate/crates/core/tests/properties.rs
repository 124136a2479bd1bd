mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use infodeficit::data::synthetic::{gen_synthetic, SyntheticConfig};
use infodeficit::encoders::{
    encode_query, encode_result_chars, encode_session, info_deficit, EncodedResult, PastStep,
    PAD_ID,
};
use infodeficit::math::{AdamConfig, AdamState, Graph, ParamSet, Tensor};
use infodeficit::retention::{predict_retention, train_retention, RetentionExample};
use infodeficit::selection::{mrr_from_scores, select_next};
use infodeficit::train::{TrainConfig, Trainer};
use infodeficit::{Ablation, ContextOrder, Model, Task};

fn past_strategy(vocab: usize) -> impl Strategy<Value = Vec<PastStep>> {
    let step = (
        prop::collection::vec(1..vocab, 1..4),
        prop::collection::vec(0usize..131, 0..8),
    )
        .prop_map(|(query_ids, url_chars)| PastStep {
            query_ids,
            url_chars,
        });
    prop::collection::vec(step, 0..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn deficit_is_sum_of_step_differences(seed in 0u64..1000, past in past_strategy(8)) {
        let model = common::spread_model(common::tiny_dims(8), seed);
        let mut g = Graph::new(&model.params);
        let enc = encode_session(&mut g, &model.layout, &past, Ablation::NONE, ContextOrder::default()).unwrap();
        let d = g.value(enc.deficit).to_vec();

        let mut want = vec![0.0; 3];
        for step in &past {
            let q = encode_query(&mut g, &model.layout, &step.query_ids).unwrap();
            let u = encode_result_chars(&mut g, &model.layout, &step.url_chars).unwrap();
            let (z, u) = (g.value(q.z).to_vec(), g.value(u.u).to_vec());
            for k in 0..3 {
                want[k] += z[k] - u[k];
            }
        }
        prop_assert_eq!(d, want);
    }

    #[test]
    fn retention_probabilities_sum_to_one(
        seed in 0u64..1000,
        ids in prop::collection::vec(1usize..8, 1..6),
        past in past_strategy(8),
    ) {
        let model = common::spread_model(common::tiny_dims(8), seed);
        for p in predict_retention(&model, &ids, &past, Ablation::NONE, ContextOrder::default()).unwrap() {
            prop_assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
            prop_assert!(p[0] > 0.0 && p[1] > 0.0);
        }
    }

    #[test]
    fn candidate_order_does_not_change_choice_or_mrr(
        scores in prop::collection::vec(0.0f64..1.0, 2..12),
        truth_pick in 0usize..100,
        rot in 0usize..100,
    ) {
        let n = scores.len();
        let truth = truth_pick % n;
        let names: Vec<usize> = (0..n).collect();
        let chosen = names[select_next(&scores).unwrap()];
        let base = mrr_from_scores(std::slice::from_ref(&scores), &[truth]).unwrap().mrr;

        let r = rot % n;
        let mut s2 = scores.clone();
        let mut n2 = names.clone();
        s2.rotate_left(r);
        n2.rotate_left(r);
        let t2 = n2.iter().position(|&x| x == truth).unwrap();
        prop_assert_eq!(mrr_from_scores(&[s2.clone()], &[t2]).unwrap().mrr, base);
        // distinct maxima make the choice order free
        let max = scores.iter().cloned().fold(f64::MIN, f64::max);
        if scores.iter().filter(|&&s| s == max).count() == 1 {
            prop_assert_eq!(n2[select_next(&s2).unwrap()], chosen);
        }
    }
}

#[test]
fn encoder_output_is_product_of_directional_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..100 {
        let model = common::spread_model(common::tiny_dims(9), trial);
        let len = 1 + (trial as usize % 5);
        let ids: Vec<usize> = common::uniform(&mut rng, len, 1.0, 9.0)
            .into_iter()
            .map(|x| x as usize)
            .collect();
        let mut g = Graph::new(&model.params);
        let q = encode_query(&mut g, &model.layout, &ids).unwrap();
        let f = g.value(*q.forward.last().unwrap()).to_vec();
        let b = g.value(*q.backward.last().unwrap()).to_vec();
        let z = g.value(q.z);
        for k in 0..3 {
            assert_eq!(z[k], f[k] * b[k]);
        }
    }
}

#[test]
fn identical_query_and_result_have_no_deficit() {
    for trial in 0..100 {
        let model = common::spread_model(common::tiny_dims(9), trial);
        let mut g = Graph::new(&model.params);
        let q = encode_query(&mut g, &model.layout, &[1 + trial as usize % 8, 2]).unwrap();
        let d = info_deficit(&mut g, &q, &EncodedResult { u: q.z }).unwrap();
        assert!(g.value(d).iter().all(|&x| x == 0.0));
    }
}

/// Bias-corrected Adam written out for one scalar.
fn scalar_adam(x0: f64, grad: impl Fn(f64) -> f64, c: AdamConfig, steps: usize) -> Vec<f64> {
    let (mut x, mut m, mut v) = (x0, 0.0, 0.0);
    let mut out = Vec::new();
    for t in 1..=steps {
        let g = grad(x);
        m = c.beta1 * m + (1.0 - c.beta1) * g;
        v = c.beta2 * v + (1.0 - c.beta2) * g * g;
        let mh = m / (1.0 - c.beta1.powi(t as i32));
        let vh = v / (1.0 - c.beta2.powi(t as i32));
        x -= c.alpha * mh / (vh.sqrt() + c.epsilon);
        out.push(x);
    }
    out
}

#[test]
fn adam_follows_the_scalar_recurrence_on_a_quadratic() {
    let config = AdamConfig {
        alpha: 0.1,
        ..AdamConfig::default()
    };
    let want = scalar_adam(0.0, |x| 2.0 * (x - 3.0), config, 100);

    let mut ps = ParamSet::new();
    let id = ps.add("x", Tensor::scalar(0.0));
    let mut adam = AdamState::new(&ps, config);
    for (step, w) in want.iter().enumerate() {
        ps.zero_grads();
        let grads = {
            let mut g = Graph::new(&ps);
            let x = g.param(id);
            let three = g.constant(Tensor::scalar(3.0));
            let d = g.sub(x, three).unwrap();
            let sq = g.mul(d, d).unwrap();
            let loss = g.sum(sq);
            g.backward(loss).unwrap()
        };
        ps.accumulate(&grads);
        adam.step(&mut ps).unwrap();
        let x = ps.get(id).values()[0];
        assert!((x - w).abs() < 1e-12, "step {}: {x} vs {w}", step + 1);
    }
    assert!((ps.get(id).values()[0] - 3.0).abs() < 0.5);
}

#[test]
fn adam_with_zero_gradient_is_identity() {
    let mut ps = ParamSet::new();
    let id = ps.add("w", Tensor::vector(vec![0.5, -1.5]));
    let mut adam = AdamState::new(&ps, AdamConfig::default());
    for _ in 0..5 {
        ps.zero_grads();
        adam.step(&mut ps).unwrap();
    }
    assert_eq!(ps.get(id).values(), &[0.5, -1.5]);
}

fn padded_examples() -> Vec<RetentionExample> {
    vec![
        RetentionExample {
            current_ids: vec![PAD_ID, 2, 3],
            raw_words: vec![],
            past: vec![PastStep {
                query_ids: vec![PAD_ID, 4],
                url_chars: vec![PAD_ID, 40, PAD_ID, 60],
            }],
            labels: vec![0, 1, 1],
        },
        RetentionExample {
            current_ids: vec![4, 5],
            raw_words: vec![],
            past: vec![PastStep {
                query_ids: vec![2, PAD_ID],
                url_chars: vec![70, 71],
            }],
            labels: vec![1, 0],
        },
    ]
}

#[test]
fn padding_rows_stay_zero_through_training() {
    let model = Model::new(common::tiny_dims(6), 3).unwrap();
    let config = TrainConfig {
        epochs: 20,
        batch_size: 1,
        seed: 3,
        adam: AdamConfig {
            alpha: 0.05,
            ..AdamConfig::default()
        },
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(model, Task::Retention, config).unwrap();
    let before = trainer.model.clone();
    train_retention(&mut trainer, &padded_examples()).unwrap();
    let emb = &trainer.model.layout.embeddings;
    let dims = trainer.model.dims();
    let word = trainer.model.params.get(emb.word).values();
    let chars = trainer.model.params.get(emb.chars).values();
    assert!(word[..dims.embed_dim].iter().all(|&x| x == 0.0));
    assert!(chars[..dims.char_embed_dim].iter().all(|&x| x == 0.0));
    assert_ne!(trainer.model.params, before.params);
}

#[test]
fn every_trainable_tensor_receives_gradient() {
    let mut model = common::spread_model(common::tiny_dims(8), 21);
    model.set_trainable(Task::Retention, Ablation::NONE);
    let past = common::sample_past();
    let mut g = Graph::new(&model.params);
    let loss = common::retention_loss(
        &mut g,
        &model,
        &[5, 6, 2],
        &past,
        &[1, 0, 1],
        Ablation::NONE,
    );
    let grads = g.backward(loss).unwrap();
    for (id, name, t) in model.params.iter() {
        if !t.requires_grad() {
            assert!(name.starts_with("selection."), "{name} frozen");
            continue;
        }
        let grad = grads
            .param(id)
            .unwrap_or_else(|| panic!("{name}: no gradient"));
        assert!(grad.iter().any(|&x| x != 0.0), "{name}: all-zero gradient");
    }
}

fn retention_margin(strength: f64) -> f64 {
    let corpus = gen_synthetic(SyntheticConfig {
        n_sessions: 2000,
        vocab_size: 40,
        seed: 17,
        deficit_strength: strength,
    })
    .unwrap();
    let (mut need, mut noise) = ((0usize, 0usize), (0usize, 0usize));
    for s in &corpus.sessions {
        for pair in s.steps.windows(2) {
            for (w, &is_need) in pair[0].words.iter().zip(&pair[0].need) {
                let kept = usize::from(pair[1].words.contains(w));
                let slot = if is_need { &mut need } else { &mut noise };
                slot.0 += kept;
                slot.1 += 1;
            }
        }
    }
    need.0 as f64 / need.1 as f64 - noise.0 as f64 / noise.1 as f64
}

#[test]
fn synthetic_need_word_margin_grows_with_strength() {
    let margins: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 1.0]
        .iter()
        .map(|&s| retention_margin(s))
        .collect();
    assert!(margins[0] > 0.0, "{margins:?}");
    for w in margins.windows(2) {
        assert!(w[1] > w[0], "{margins:?}");
    }
}
