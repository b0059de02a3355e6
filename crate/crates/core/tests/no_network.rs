mod common;

use concept_induction::gateway::network_calls;

#[test]
fn scripted_runs_make_no_network_calls() {
    let before = network_calls();
    let s = common::run_civic(2);
    assert!(!s.concepts.is_empty());
    assert_eq!(network_calls(), before);
    assert_eq!(network_calls(), 0);
}
