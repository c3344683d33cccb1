use mcie::instructions::{decompose_rules, OpType};

#[test]
fn op_classification_matches_labeled_corpus() {
    let corpus = include_str!("fixtures/op_clauses.tsv");
    let mut n = 0;
    for line in corpus.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')) {
        let (label, clause) = line.split_once('\t').expect("label<TAB>clause");
        let expected: OpType = label.parse().unwrap();
        let ci = decompose_rules(clause, None).unwrap_or_else(|e| panic!("{clause:?}: {e}"));
        for sub in ci.subs() {
            assert_eq!(sub.op, expected, "{clause:?}");
        }
        n += 1;
    }
    assert_eq!(n, 50);
}

#[test]
fn two_clause_example_splits_by_op() {
    let ci = decompose_rules("add a red square; change the circle to blue", None).unwrap();
    let ops: Vec<OpType> = ci.subs().iter().map(|s| s.op).collect();
    assert_eq!(ops, [OpType::Add, OpType::Change]);
}

#[test]
fn synthetic_instructions_round_trip_through_rules() {
    use mcie::datapipe::generate_synthetic_corpus;
    for s in generate_synthetic_corpus(200, 4, 21).unwrap() {
        let ci = decompose_rules(&s.instruction.raw_text, Some(&s.src)).unwrap();
        let got: Vec<(OpType, &str)> = ci.subs().iter().map(|x| (x.op, x.text.as_str())).collect();
        let want: Vec<(OpType, &str)> = s.instruction.subs().iter().map(|x| (x.op, x.text.as_str())).collect();
        assert_eq!(got, want, "{}", s.instruction.raw_text);
        for (g, w) in ci.subs().iter().zip(s.instruction.subs()) {
            if w.op != OpType::Add {
                assert_eq!(g.bbox, w.bbox, "{}", w.text);
            } else {
                assert!(g.bbox.contains(w.bbox.center().0, w.bbox.center().1), "{}", w.text);
            }
        }
    }
}
