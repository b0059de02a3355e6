mod common;

use common::{civic_path, run_civic};
use concept_induction::model::canonical_session_json;

#[test]
fn civic_run_matches_golden() {
    let json = canonical_session_json(&run_civic(2));
    let golden = civic_path("civic.golden.json");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&golden, &json).unwrap();
    }
    let expected = std::fs::read_to_string(&golden).expect("golden present; run with UPDATE_GOLDEN=1");
    assert_eq!(json, expected);
}

#[test]
fn civic_run_has_two_generations_and_verbatim_quotes() {
    let s = run_civic(2);
    let gens: std::collections::BTreeSet<u32> = s.concepts.iter().map(|c| c.generation).collect();
    assert_eq!(gens.into_iter().collect::<Vec<_>>(), vec![0, 1]);
    for q in s.quotes.iter() {
        let doc = s.document(&q.doc_id).unwrap();
        assert!(doc.text.contains(&q.text), "quote {:?} not in {}", q.text, q.doc_id);
    }
    assert_eq!(canonical_session_json(&s.replay()), canonical_session_json(&s));
}
