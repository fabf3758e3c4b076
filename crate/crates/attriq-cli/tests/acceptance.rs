//! Acceptance criteria, one test per criterion. Each prints a single
//! `PASS`/`FAIL` line with the measured values; run with `--nocapture` to
//! see them all.

#[path = "../../attriq/tests/support/mod.rs"]
mod support;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use attriq::attribution::{
    attribute_all, axiom_suite, integrate_path, integrated_gradients, step_reports, IGConfig, Quadrature,
    TargetSelector,
};
use attriq::autodiff::grad_check;
use attriq::datasets::{generate_classifier, generate_synthetic, ClassifierGenConfig, Dataset, GenConfig};
use attriq::fixtures;
use attriq::models::{
    train, ClassifierModel, Model, TableQaModel, TrainConfig, PAD_TOKEN, STEPS,
};
use attriq::robustness::{
    accuracy, attack_efficacy_split, concat_attack, full_ranking, overstability_curve, row_reorder_attack,
    stopword_deletion_attack, top_attributed_vocab, AttackResult, EfficacyRecord, Position, ReorderMode,
    ThresholdPolicy, WordLists,
};
use attriq::tableexec::{execute, Operator, Program, PROGRAM_LEN};
use support::exec_oracle::{from_exec, random_question, random_table, run};

fn verdict(id: u32, name: &str, ok: bool, detail: String) {
    println!("{} criterion {id:02} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {id:02} {name} failed: {detail}");
}

struct Trained {
    table: Model,
    table_eval: Dataset,
    classifier: Model,
    classifier_data: Dataset,
}

/// Models trained once per test binary on the synthetic corpora.
fn trained() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let d = generate_synthetic(&GenConfig::default()).unwrap();
        let (head, tail) = d.split(0.8);
        let m = TableQaModel::random(d.vocab.clone(), 16, 0);
        let table = train(Model::TableQa(m), &head.instances, &TrainConfig::default()).unwrap().model;

        let c = generate_classifier(&ClassifierGenConfig { seed: 7, size: 400 });
        let m = ClassifierModel::random(c.vocab.clone(), c.classes(), 16, 7);
        let cfg = TrainConfig { seed: 7, ..TrainConfig::default() };
        let classifier = train(Model::Classifier(m), &c.instances, &cfg).unwrap().model;
        Trained {
            table,
            table_eval: tail,
            classifier,
            classifier_data: c,
        }
    })
}

/// Embedding width of models built by the CLI.
const DIM: usize = 16;

#[test]
fn criterion_01_gradients_match_finite_differences() {
    let start = Instant::now();
    let cd = generate_classifier(&ClassifierGenConfig { seed: 1, size: 20 });
    let td = generate_synthetic(&GenConfig { seed: 1, ..GenConfig::default() }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_c, mut worst_t): (f64, f64) = (0.0, 0.0);
    for point in 0..20u64 {
        let m = ClassifierModel::random(cd.vocab.clone(), cd.classes(), DIM, point);
        let inst = &cd.instances[point as usize];
        let mut g = m.graph(ClassifierModel::feature_tokens(&inst.question).len()).unwrap();
        let f = g.pick(rng.random_range(0..m.num_classes())).unwrap();
        let x = m.embed(&inst.question);
        worst_c = worst_c.max(grad_check(&g.tape, &[x], f, 1e-5));

        let m = TableQaModel::random(td.vocab.clone(), DIM, point);
        let inst = &td.instances[point as usize];
        let table = inst.table.as_ref().unwrap();
        let x = m.features(&inst.question, table).unwrap();
        let mut g = m.graph(x.question.shape()[0], table.num_columns()).unwrap();
        let step = rng.random_range(0..STEPS);
        let f = if point % 2 == 0 {
            g.pick(g.op_probs[step], rng.random_range(0..Operator::COUNT)).unwrap()
        } else {
            g.pick(g.col_probs[step], rng.random_range(0..table.num_columns())).unwrap()
        };
        worst_t = worst_t.max(grad_check(&g.tape, &x.bindings(), f, 1e-5));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        "grad check",
        worst_c <= 1e-6 && worst_t <= 1e-6 && secs < 10.0,
        format!("classifier {worst_c:.2e}, table {worst_t:.2e} (tol 1e-6) over 20 points each in {secs:.2}s"),
    );
}

#[test]
fn criterion_02_completeness() {
    let t = trained();
    let cfg = IGConfig::with_steps(512);
    let cls = &t.classifier_data.instances[..100];
    let worst_c = attribute_all(&t.classifier, cls, &cfg)
        .into_iter()
        .map(|r| r.unwrap().residual)
        .fold(0.0, f64::max);

    let Model::TableQa(tm) = &t.table else { unreachable!() };
    let mut worst_t: f64 = 0.0;
    for (i, inst) in t.table_eval.instances.iter().take(100).enumerate() {
        let p = tm.predict(&inst.question, inst.table.as_ref().unwrap()).unwrap().program;
        let step = i % STEPS;
        let target = if i % 2 == 0 {
            TargetSelector::Operator { step, op: p.steps()[step].op }
        } else {
            TargetSelector::Column { step, column: p.steps()[step].column }
        };
        let c = IGConfig { target: Some(target), ..cfg.clone() };
        worst_t = worst_t.max(integrated_gradients(&t.table, inst, &c).unwrap().residual);
    }

    let a = fixtures::affine();
    let affine = integrate_path(&a.tape, a.target, &a.input, &a.baseline, 1, Quadrature::Trapezoid)
        .unwrap()
        .residual();
    verdict(
        2,
        "completeness",
        worst_c <= 1e-4 && worst_t <= 1e-4 && affine <= 1e-12,
        format!("m=512 classifier {worst_c:.2e}, table {worst_t:.2e} (tol 1e-4); affine m=1 {affine:.2e} (tol 1e-12)"),
    );
}

#[test]
fn criterion_03_dummy_symmetry_linearity() {
    let t = trained();
    let cfg = IGConfig::with_steps(128);
    let c = axiom_suite(&t.classifier, &t.classifier_data.instances[..20], &cfg, None).unwrap();
    let tb = axiom_suite(&t.table, &t.table_eval.instances[..20], &cfg, None).unwrap();
    let colors = fixtures::color_corpus();
    let (f1, f2) = fixtures::linearity_pair(&colors.vocab);
    let inst = &colors.instances[0];
    let fx = axiom_suite(&Model::Classifier(f1.clone()), &colors.instances, &cfg, Some((&f1, &f2, inst))).unwrap();
    let dummy = c.max_dummy().max(tb.max_dummy()).max(fx.max_dummy());
    let symmetry = c.max_symmetry().max(tb.max_symmetry()).max(fx.max_symmetry());
    let linearity = fx.linearity.unwrap();
    verdict(
        3,
        "dummy, symmetry, linearity",
        dummy == 0.0 && symmetry <= 1e-10 && linearity <= 1e-8,
        format!("dummy {dummy:e} (exact 0), symmetry {symmetry:.2e} (tol 1e-10), linearity {linearity:.2e} (tol 1e-8)"),
    );
}

#[test]
fn criterion_04_product_splits_evenly() {
    let p = fixtures::product();
    let r = integrate_path(&p.tape, p.target, &p.input, &p.baseline, 512, Quadrature::Trapezoid).unwrap();
    let a = r.attributions[0].item().unwrap();
    let b = r.attributions[1].item().unwrap();
    // F(a, b) = ab from (0, 0) to (1, 1): each input's path integral is ∫ α dα = 1/2
    verdict(
        4,
        "product attribution",
        (a - 0.5).abs() <= 1e-6 && (b - 0.5).abs() <= 1e-6,
        format!("({a:.12}, {b:.12}) vs (0.5, 0.5) (tol 1e-6)"),
    );
}

#[test]
fn criterion_05_quadrature_convergence() {
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in 0..3 {
        let f = fixtures::tanh_mlp(seed);
        let res: Vec<f64> = [16, 32, 64, 128]
            .iter()
            .map(|&m| {
                integrate_path(&f.tape, f.target, &f.input, &f.baseline, m, Quadrature::Trapezoid)
                    .unwrap()
                    .residual()
            })
            .collect();
        let ratios: Vec<f64> = res.windows(2).map(|w| w[1] / w[0]).collect();
        ok &= ratios.iter().all(|&r| r <= 0.6);
        lines.push(format!(
            "seed {seed} ratios {}",
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join("/")
        ));
    }
    verdict(5, "quadrature convergence", ok, format!("{} (tol 0.6)", lines.join("; ")));
}

fn random_program(rng: &mut impl Rng, ops: &[Operator], columns: &[usize]) -> Program {
    let steps: [(Operator, usize); PROGRAM_LEN] =
        std::array::from_fn(|_| (ops[rng.random_range(0..ops.len())], columns[rng.random_range(0..columns.len())]));
    Program::new(steps)
}

#[test]
fn criterion_06_executor_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cases = 60_000;
    let mut disagreements = 0;
    for _ in 0..cases {
        let table = random_table(&mut rng);
        let question = random_question(&mut rng);
        let program = random_program(&mut rng, &Operator::ALL, &[0, 1]);
        if from_exec(execute(&program, &table, &question)) != run(&program, &table, &question) {
            disagreements += 1;
        }
    }
    verdict(6, "executor oracle", disagreements == 0, format!("{disagreements} disagreements in {cases} cases"));
}

#[test]
fn criterion_07_row_permutation_invariance() {
    let order_free: Vec<Operator> = Operator::ALL.iter().copied().filter(|o| !o.is_positional()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut violations = 0;
    for _ in 0..1_000 {
        let table = random_table(&mut rng);
        let question = random_question(&mut rng);
        let program = random_program(&mut rng, &order_free, &[0, 1, 2]);
        let mut perm: Vec<usize> = (0..table.num_rows()).collect();
        rand::seq::SliceRandom::shuffle(&mut perm[..], &mut rng);
        let same = match (execute(&program, &table, &question), execute(&program, &table.permuted(&perm), &question)) {
            (Ok(x), Ok(y)) => x.matches(&y),
            (Err(x), Err(y)) => x.to_string() == y.to_string(),
            _ => false,
        };
        violations += !same as usize;
    }
    verdict(7, "row permutation", violations == 0, format!("{violations} violations in 1000 triples"));
}

fn all_pad_accuracy(model: &Model, d: &Dataset) -> f64 {
    let hits = d
        .instances
        .iter()
        .filter(|i| {
            let q = vec![PAD_TOKEN.to_string(); i.question.len()];
            model.is_correct(&i.with_question(q)).unwrap()
        })
        .count();
    hits as f64 / d.len() as f64
}

#[test]
fn criterion_08_overstability_endpoints() {
    let t = trained();
    let Model::TableQa(tm) = &t.table else { unreachable!() };
    let cfg = IGConfig::with_steps(32);
    let reports: Vec<_> = t
        .table_eval
        .instances
        .iter()
        .flat_map(|i| step_reports(tm, i, &cfg).unwrap())
        .collect();
    let ranked = top_attributed_vocab(&reports, 5).unwrap();
    let n = full_ranking(&ranked, &t.table_eval).len();
    let curve = overstability_curve(&t.table, &t.table_eval, &ranked, &[0, 1, 2, 5, n]).unwrap();
    let empty = all_pad_accuracy(&t.table, &t.table_eval);
    let full = accuracy(&t.table, &t.table_eval.instances).unwrap();
    let first = curve.points[0].accuracy;
    let last = curve.points.last().unwrap().accuracy;

    let colors = fixtures::color_corpus();
    let cm = Model::Classifier(fixtures::color_only_classifier(&colors.vocab));
    let creports: Vec<_> = attribute_all(&cm, &colors.instances, &IGConfig::with_steps(64))
        .into_iter()
        .map(Result::unwrap)
        .collect();
    let cranked = top_attributed_vocab(&creports, 1).unwrap();
    let cn = full_ranking(&cranked, &colors).len();
    let ccurve = overstability_curve(&cm, &colors, &cranked, &[0, 1, cn]).unwrap();
    let k1 = ccurve.points[1].relative_accuracy;

    verdict(
        8,
        "overstability endpoints",
        first == empty && last == full && cranked.first().map(String::as_str) == Some("color") && k1 == Some(1.0),
        format!(
            "table k=0 {first:.4} vs empty {empty:.4}, k={n} {last:.4} vs full {full:.4}; color fixture top {:?}, k=1 relative {k1:?}",
            cranked.first()
        ),
    );
}

fn tokens(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

#[test]
fn criterion_09_attacks_preserve_gold_and_planted_drops() {
    let t = trained();
    let w = WordLists::shipped();
    let eval = &t.table_eval.instances;
    let mut results: Vec<AttackResult> = Vec::new();
    for phrase in &w.attack_phrases {
        for pos in [Position::Prefix, Position::Suffix] {
            results.push(concat_attack(&t.table, eval, &tokens(phrase), pos).unwrap());
        }
    }
    results.push(stopword_deletion_attack(&t.table, eval, &w.stopwords).unwrap());
    for mode in [ReorderMode::Shuffle, ReorderMode::AnswerFirst, ReorderMode::AnswerLast] {
        results.push(row_reorder_attack(&t.table, eval, mode, 0, &w.order_words).unwrap());
    }
    let checks: usize = results.iter().map(|r| r.gold_checks).sum();
    let failures: usize = results.iter().map(|r| r.gold_failures).sum();

    let planted = fixtures::planted_corpus(11);
    let mut vocab = planted.vocab.clone();
    for tok in fixtures::ATTACK_TOKENS {
        vocab.insert(tok);
    }
    let pm = Model::TableQa(fixtures::planted_table_model(&vocab));
    let concat = concat_attack(&pm, &planted.instances, &tokens("in not a lot of words"), Position::Prefix).unwrap();
    let stop = stopword_deletion_attack(&pm, &planted.instances, &w.stopwords).unwrap();
    let concat_drop = concat.baseline_accuracy - concat.attacked_accuracy;
    let stop_drop = stop.baseline_accuracy - stop.attacked_accuracy;
    // frozen from the planted fixture; any change means the attack or the
    // fixture changed behaviour
    let pinned = (concat.baseline_accuracy, concat.attacked_accuracy, stop.attacked_accuracy) == (PLANTED_BASELINE, PLANTED_CONCAT, PLANTED_STOP);
    verdict(
        9,
        "attack soundness and planted drops",
        checks > 0 && failures == 0 && concat_drop >= 0.10 && stop_drop >= 0.10 && pinned,
        format!(
            "gold re-execution {}/{checks} agree; planted baseline {:.2}, concat {:.2} (drop {:.0}pp), stopword {:.2} (drop {:.0}pp)",
            checks - failures,
            concat.baseline_accuracy,
            concat.attacked_accuracy,
            concat_drop * 100.0,
            stop.attacked_accuracy,
            stop_drop * 100.0
        ),
    );
}

const PLANTED_BASELINE: f64 = 1.0;
const PLANTED_CONCAT: f64 = 0.0;
const PLANTED_STOP: f64 = 0.8;

fn record(question: &str, attack: &str, success: bool, attributions: &[f64], tags: &str) -> EfficacyRecord {
    EfficacyRecord {
        question: tokens(question),
        attack_sentence: tokens(attack),
        success,
        attributions: attributions.to_vec(),
        pos_tags: tokens(tags),
    }
}

#[test]
fn criterion_10_efficacy_split() {
    // group 1: a high-attribution noun or adjective is missing from the
    // attack sentence, and every such attack fails
    let records = vec![
        record("what is the tallest building", "the short tree stands", false, &[0.1, 0.0, 0.0, 0.9, 0.8], "PRON VERB DET ADJ NOUN"),
        record("who scored the most goals", "a player scored the most runs", false, &[0.2, 0.1, 0.0, 0.5, 0.9], "PRON VERB DET ADJ NOUN"),
        record("which river is longest", "the lake is small", false, &[0.0, 1.0, 0.1, 0.3], "DET NOUN AUX ADJ"),
        // group 2: every high-attribution noun or adjective appears
        record("what is the tallest building", "the tallest building is red", true, &[0.1, 0.0, 0.0, 0.9, 0.8], "PRON VERB DET ADJ NOUN"),
        record("who scored the most goals", "nobody scored goals here", true, &[0.2, 0.9, 0.0, 0.1, 0.95], "PRON VERB DET ADJ NOUN"),
    ];
    let split = attack_efficacy_split(&records, ThresholdPolicy::default()).unwrap();
    verdict(
        10,
        "attack efficacy split",
        split.group1 == 3 && split.group2 == 2 && split.group1_failure_rate == Some(1.0) && split.group2_failure_rate == Some(0.0),
        format!(
            "group 1 {} records, failure rate {:?}; group 2 {} records, failure rate {:?}",
            split.group1, split.group1_failure_rate, split.group2, split.group2_failure_rate
        ),
    );
}

/// Runs the binary inside `dir` so every recorded path is relative.
fn attriq(dir: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_attriq"))
        .args(args)
        .current_dir(dir)
        .env_remove("ATTRIQ_SEED")
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn pipeline(root: &Path, jobs: &str) {
    let data = "gen/dataset.jsonl";
    let planted = ["--data", data, "--model", "fixture:planted", "--jobs", jobs];
    let run = |args: &[&str], out: &str| attriq(root, &[args, &planted[..], &["--out", out]].concat());
    attriq(root, &["gen", "--seed", "11", "--jobs", jobs, "--out", "gen"]);
    run(&["attribute", "--steps", "16"], "attr");
    run(&["attack", "--kind", "concat"], "concat");
    run(&["attack", "--kind", "reorder", "--mode", "shuffle"], "reorder");
    run(&["overstability", "--reports", "attr/attributions.jsonl", "--sizes", "0,1,2,5,10,all"], "curve");
}

#[test]
fn criterion_11_cli_reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path(), "1");
    pipeline(b.path(), "4");
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    let differing: Vec<_> = ta.iter().filter(|(k, v)| tb.get(*k) != Some(v)).map(|(k, _)| k.clone()).collect();
    verdict(
        11,
        "CLI determinism",
        ta.len() == tb.len() && differing.is_empty() && ta.len() >= 10,
        format!("{} files compared across --jobs 1 and --jobs 4, {} differ {:?}", ta.len(), differing.len(), differing),
    );
}

#[test]
fn criterion_12_golden_renders() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../attriq/tests/golden");
    let renders = support::render_fixtures::renders();
    let mismatched: Vec<&str> = renders
        .iter()
        .filter(|(name, actual)| fs::read_to_string(dir.join(name)).ok().as_deref() != Some(actual.as_str()))
        .map(|(name, _)| *name)
        .collect();
    verdict(
        12,
        "golden renders",
        mismatched.is_empty(),
        format!("{} of {} match; mismatched {mismatched:?}", renders.len() - mismatched.len(), renders.len()),
    );
}

