//! The executor against an independent brute-force interpreter, and the
//! row-order property for programs without positional operators.

mod support;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use attriq::tableexec::{execute, Operator, Program, PROGRAM_LEN};
use support::exec_oracle::{from_exec, random_question, random_table, run, OracleResult};

fn random_program(rng: &mut impl Rng, ops: &[Operator], columns: &[usize]) -> Program {
    let steps: [(Operator, usize); PROGRAM_LEN] =
        std::array::from_fn(|_| (ops[rng.random_range(0..ops.len())], columns[rng.random_range(0..columns.len())]));
    Program::new(steps)
}

#[test]
fn executor_matches_oracle_on_sampled_programs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut disagreements = Vec::new();
    let cases = 60_000;
    for _ in 0..cases {
        let table = random_table(&mut rng);
        let question = random_question(&mut rng);
        let program = random_program(&mut rng, &Operator::ALL, &[0, 1]);
        let got = from_exec(execute(&program, &table, &question));
        let want = run(&program, &table, &question);
        if got != want {
            disagreements.push((program, table, question, got, want));
        }
    }
    assert!(disagreements.is_empty(), "{} disagreements, first: {:?}", disagreements.len(), disagreements[0]);
}

#[test]
fn executor_matches_oracle_on_every_program_for_one_table() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let table = random_table(&mut rng);
    let question: Vec<String> = ["ann", "3"].iter().map(|s| s.to_string()).collect();
    for code in 0..Operator::COUNT.pow(4) {
        let mut c = code;
        let steps: [(Operator, usize); PROGRAM_LEN] = std::array::from_fn(|i| {
            let op = Operator::from_ordinal(c % Operator::COUNT).unwrap();
            c /= Operator::COUNT;
            (op, i % 2)
        });
        let p = Program::new(steps);
        assert_eq!(from_exec(execute(&p, &table, &question)), run(&p, &table, &question), "{p:?}");
    }
}

#[test]
fn row_order_does_not_matter_without_positional_operators() {
    let order_free: Vec<Operator> = Operator::ALL.iter().copied().filter(|o| !o.is_positional()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..1_000 {
        let table = random_table(&mut rng);
        let question = random_question(&mut rng);
        let program = random_program(&mut rng, &order_free, &[0, 1, 2]);
        let mut perm: Vec<usize> = (0..table.num_rows()).collect();
        rand::seq::SliceRandom::shuffle(&mut perm[..], &mut rng);
        let a = execute(&program, &table, &question);
        let b = execute(&program, &table.permuted(&perm), &question);
        match (a, b) {
            (Ok(x), Ok(y)) => assert!(x.matches(&y), "{program:?} {x:?} {y:?}"),
            (Err(x), Err(y)) => assert_eq!(x.to_string(), y.to_string()),
            (x, y) => panic!("{program:?}: {x:?} vs {y:?}"),
        }
    }
}

#[test]
fn oracle_sees_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let table = random_table(&mut rng);
    let max_on_names = Program::new([(Operator::Max, 0); PROGRAM_LEN]);
    assert_eq!(run(&max_on_names, &table, &[]), OracleResult::NonNumeric);
    let geq = Program::new([(Operator::Geq, 1); PROGRAM_LEN]);
    assert_eq!(run(&geq, &table, &[]), OracleResult::MissingPivot);
}
