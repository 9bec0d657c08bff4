//! Protocol-level properties of the active-learning loop.

use std::collections::BTreeSet;

use al_seqtag::corpus::SynthSpec;
use al_seqtag::crf::CrfParams;
use al_seqtag::engine::{run_single, DataSource, Experiment, ExperimentConfig, RunRecord};
use al_seqtag::model::ModelSpec;
use al_seqtag::neural::{McConfig, McVariant, NeuralParams};
use al_seqtag::strategies::Strategy;

fn small_data() -> DataSource {
    DataSource::Synthetic { spec: SynthSpec::new(3, 600, (4, 12), 300, 99), test_size: 60 }
}

fn fast_crf() -> ModelSpec {
    ModelSpec::Crf(CrfParams { max_iter: 20, ..Default::default() })
}

fn fast_neural() -> ModelSpec {
    ModelSpec::Neural(NeuralParams { epochs: 3, hidden: 16, embedding_dim: 8, hash_buckets: 1 << 12, ..Default::default() })
}

fn config(strategy: Strategy) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(small_data(), fast_crf(), strategy);
    c.seed_fraction = 0.05;
    c.step_fraction = 0.05;
    c.iterations = 4;
    c
}

fn check_invariants(r: &RunRecord, pool_size: usize) {
    let mut labeled: BTreeSet<usize> = BTreeSet::new();
    for w in r.entries.windows(2) {
        assert!(w[1].labeled_tokens > w[0].labeled_tokens);
        assert_eq!(w[1].labeled_sentences, w[0].labeled_sentences + w[0].selected.len());
    }
    for e in &r.entries {
        for &id in &e.selected {
            assert!(id < pool_size);
            assert!(labeled.insert(id), "reselected {id}");
        }
    }
}

#[test]
fn strategies_share_seed_sets_and_budgets() {
    let a = run_single(&config(Strategy::Random), 4).unwrap();
    let b = run_single(&config(Strategy::Mnlp), 4).unwrap();
    assert_eq!(a.entries.len(), b.entries.len());
    assert_eq!(a.entries[0].labeled_tokens, b.entries[0].labeled_tokens);
    // later budgets differ by at most one sentence of overshoot
    for (x, y) in a.entries.iter().zip(&b.entries) {
        assert_eq!(x.iteration, y.iteration);
        assert!(x.labeled_tokens.abs_diff(y.labeled_tokens) <= 12);
    }
    check_invariants(&a, 300);
    check_invariants(&b, 300);
}

#[test]
fn degenerate_mismatch_equals_single_model_run() {
    let plain = config(Strategy::Mnlp);
    let mut twin = plain.clone();
    twin.successor = Some(plain.acquisition.clone());
    let a = run_single(&plain, 1).unwrap();
    let b = run_single(&twin, 1).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn mismatch_records_both_models() {
    let mut c = config(Strategy::Mnlp);
    c.successor = Some(fast_neural());
    let exp = Experiment::prepare(c).unwrap();
    let (r, audit) = exp.run_audited(2).unwrap();
    assert_eq!(audit.unrevealed_reads, 0);
    assert!(r.entries.iter().all(|e| e.timing.successor_train_seconds > 0.0));
    assert!(r.entries.iter().any(|e| e.acquisition != e.successor));
}

#[test]
fn bald_run_uses_one_lower_pass_per_sentence() {
    let mut c = config(Strategy::Bald);
    c.acquisition = fast_neural();
    c.mc = McConfig::new(McVariant::Last, 10);
    c.iterations = 2;
    let exp = Experiment::prepare(c).unwrap();
    let (r, audit) = exp.run_audited(0).unwrap();
    assert_eq!(audit.unrevealed_reads, 0);
    for e in &r.entries {
        assert_eq!(e.lower_layer_passes, 300 - e.labeled_sentences);
    }
}

#[test]
fn budget_reaching_the_whole_pool() {
    let mut c = config(Strategy::Random);
    c.data = DataSource::Synthetic { spec: SynthSpec::new(2, 200, (3, 6), 12, 1), test_size: 10 };
    c.seed_fraction = 0.3;
    c.step_fraction = 0.35;
    c.iterations = 2;
    let r = run_single(&c, 0).unwrap();
    check_invariants(&r, 12);
    assert!(r.entries.last().unwrap().labeled_tokens as f64 >= 0.9 * r.total_tokens as f64);
}
