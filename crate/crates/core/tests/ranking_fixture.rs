use serde::Deserialize;
use vista_core::caption::Gazetteer;
use vista_core::metrics::*;

#[derive(Deserialize)]
struct Triple {
    reference: String,
    paraphrase: String,
    generic: String,
}

fn triples() -> Vec<Triple> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/ranking_triples.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn exact_beats_paraphrase_beats_generic() {
    let ev = Evaluator::new(Gazetteer::builtin(), MeteorScorer::new(MeteorParams::default(), SynonymTable::builtin()));
    let ts = triples();
    assert_eq!(ts.len(), 10);
    for (i, t) in ts.iter().enumerate() {
        let score = |c: &str| ev.score_caption(c, &[t.reference.as_str()], None).unwrap();
        let (e, p, g) = (score(&t.reference), score(&t.paraphrase), score(&t.generic));
        eprintln!("{i}: exact {e:?}\n   para {p:?}\n   gen {g:?}");
        assert!(e.ea_f1 > p.ea_f1 && p.ea_f1 > g.ea_f1, "triple {i} ea_f1");
        for (name, f) in [
            ("rouge_l", (|s: &SampleScores| s.rouge_l) as fn(&SampleScores) -> f64),
            ("meteor", |s| s.meteor),
            ("parascore", |s| s.parascore),
        ] {
            assert!(f(&e) >= f(&p) && f(&p) >= f(&g), "triple {i} {name}");
        }
    }
}
