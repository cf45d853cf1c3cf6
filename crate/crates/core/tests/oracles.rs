//! Library routines against independent dense or brute-force references.

mod support;

#[test]
fn semantic_graph_matches_brute_force_on_five_items() {
    support::semantic_graph_matches_brute_force_on_five_items();
}

#[test]
fn collaborative_encoder_matches_dense_reference() {
    support::collaborative_encoder_matches_dense_reference();
}

#[test]
fn auc_matches_pair_counting_on_random_sets() {
    support::auc_matches_pair_counting_on_random_sets();
}
