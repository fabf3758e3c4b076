//! Property tests over the public API.

use proptest::prelude::*;

use attriq::attribution::{integrated_gradients, IGConfig};
use attriq::autodiff::{Tape, TensorValue};
use attriq::datasets::{generate_synthetic, to_jsonl, parse_jsonl, GenConfig};
use attriq::models::{preprocess_matches, ClassifierModel, Instance, Model, TableQaModel, Vocabulary};
use attriq::tableexec::execute;

const WORDS: [&str; 8] = ["what", "color", "is", "the", "dog", "how", "many", "cats"];

fn vocab() -> Vocabulary {
    Vocabulary::from_tokens(WORDS)
}

fn question() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(WORDS.to_vec()), 0..7)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

fn classes() -> Vec<String> {
    vec!["a".into(), "b".into(), "c".into()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn classifier_ignores_token_order(seed in 0u64..1000, q in question(), rot in 0usize..7) {
        let m = ClassifierModel::random(vocab(), classes(), 6, seed);
        let mut shuffled = q.clone();
        if !shuffled.is_empty() {
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
        }
        let a = m.probabilities(&q).unwrap();
        let b = m.probabilities(&shuffled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-15);
        }
    }

    #[test]
    fn distributions_are_normalized(seed in 0u64..1000, q in question()) {
        let m = ClassifierModel::random(vocab(), classes(), 6, seed);
        let p = m.probabilities(&q).unwrap();
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);

        let d = generate_synthetic(&GenConfig { seed, ..GenConfig::default() }).unwrap();
        let inst = &d.instances[(seed as usize) % d.len()];
        let t = TableQaModel::random(d.vocab.clone(), 8, seed);
        let pred = t.predict(&inst.question, inst.table.as_ref().unwrap()).unwrap();
        for dist in pred.op_probs.iter().chain(&pred.col_probs) {
            prop_assert!(dist.iter().all(|&x| x >= 0.0));
            prop_assert!((dist.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn match_preprocessing_is_idempotent(seed in 0u64..200, pick in 0usize..300) {
        let d = generate_synthetic(&GenConfig { seed, ..GenConfig::default() }).unwrap();
        let inst = &d.instances[pick % d.len()];
        let table = inst.table.as_ref().unwrap();
        let once = preprocess_matches(&inst.question, table);
        let twice = preprocess_matches(&once.tokens, table);
        prop_assert_eq!(&once.tokens, &twice.tokens);
        prop_assert_eq!(&once.column_prior, &twice.column_prior);
        prop_assert!(once.column_prior.0.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn generated_gold_answers_execute(seed in 0u64..500) {
        let d = generate_synthetic(&GenConfig { seed, ..GenConfig::default() }).unwrap();
        for inst in &d.instances {
            let got = execute(inst.gold_program.as_ref().unwrap(), inst.table.as_ref().unwrap(), &inst.question).unwrap();
            prop_assert!(got.matches(&inst.gold_answer), "{}", inst.id);
        }
    }

    #[test]
    fn order_insensitive_gold_survives_row_permutation(seed in 0u64..200, rot in 1usize..8) {
        let d = generate_synthetic(&GenConfig { seed, ..GenConfig::default() }).unwrap();
        for inst in d.instances.iter().filter(|i| !i.order_sensitive) {
            let table = inst.table.as_ref().unwrap();
            let n = table.num_rows();
            // rotate every row but a trailing total row
            let pinned = usize::from(table.rows()[n - 1][0].text() == "total");
            let mut perm: Vec<usize> = (0..n - pinned).collect();
            let k = rot % perm.len();
            perm.rotate_left(k);
            perm.extend(n - pinned..n);
            let got = execute(inst.gold_program.as_ref().unwrap(), &table.permuted(&perm), &inst.question).unwrap();
            prop_assert!(got.matches(&inst.gold_answer), "{}", inst.id);
        }
    }

    #[test]
    fn jsonl_round_trip(seed in 0u64..100) {
        let d = generate_synthetic(&GenConfig { seed, ..GenConfig::default() }).unwrap();
        let text = to_jsonl(&d.instances).unwrap();
        let back: Vec<Instance> = parse_jsonl(&text, std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(&back, &d.instances);
        prop_assert_eq!(to_jsonl(&back).unwrap(), text);
    }

    #[test]
    fn classifier_completeness_and_zero_rows(seed in 0u64..1000, q in question()) {
        let mut m = ClassifierModel::random(vocab(), classes(), 6, seed);
        // "the" carries no embedding
        let the = m.vocab.id("the");
        m.embedding.row_mut(the).fill(0.0);
        let model = Model::Classifier(m);
        let inst = Instance::new("p", q.clone(), attriq::tableexec::Answer::label("a"));
        let r = integrated_gradients(&model, &inst, &IGConfig::with_steps(128)).unwrap();
        prop_assert!(r.residual <= 1e-4, "{}", r.residual);
        for (tok, feats) in r.tokens.iter().zip(&r.token_features) {
            if tok == "the" {
                prop_assert!(feats.iter().all(|&x| x == 0.0));
            }
        }
    }

    #[test]
    fn forward_is_deterministic_and_unreachable_inputs_get_zero(a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut tape = Tape::new();
        let x = tape.input(&[2]);
        let unused = tape.input(&[3]);
        let t = tape.tanh(x);
        let f = tape.sum(t);
        let bind = [TensorValue::vector(vec![a, b]), TensorValue::vector(vec![1.0, 2.0, 3.0])];
        let e1 = tape.forward(&bind).unwrap();
        let e2 = tape.forward(&bind).unwrap();
        prop_assert_eq!(e1.value(f).data()[0].to_bits(), e2.value(f).data()[0].to_bits());
        let g = tape.backward(&e1, f).unwrap();
        prop_assert!(g.input(1).data().iter().all(|&v| v == 0.0));
        let _ = unused;
    }
}
