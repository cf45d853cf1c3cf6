//! Structural invariants of attention, contrastive losses, ranking metrics and
//! normalized adjacencies.

mod support;

#[test]
fn attention_weights_sum_to_one() {
    support::attention_weights_sum_to_one();
}

#[test]
fn contrastive_losses_strictly_positive() {
    support::contrastive_losses_strictly_positive();
}

#[test]
fn identical_embeddings_give_log_two_n_minus_one() {
    support::identical_embeddings_give_log_two_n_minus_one();
}

#[test]
fn recall_monotone_in_k() {
    support::recall_monotone_in_k();
}

#[test]
fn normalized_adjacency_finite_with_isolated_nodes() {
    support::normalized_adjacency_finite_with_isolated_nodes();
}
