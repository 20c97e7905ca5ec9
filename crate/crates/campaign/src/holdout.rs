//! Oracle-labeled evaluation sets.

use sdnfuzz_core::fuzzer::initial_fuzz;
use sdnfuzz_core::rng::stream;
use sdnfuzz_core::{Label, LabeledDataset};
use sdnfuzz_harness::FailureOracle;

/// Draws `size` messages by initial fuzzing of the target template: half
/// unconditioned, half rejection-sampled to satisfy the oracle predicate.
/// Labels are the noise-free predicate.
pub fn heldout_set(oracle: &FailureOracle, size: usize, seed: u64) -> LabeledDataset {
    let template = oracle.schema.template();
    let mut rng = stream(seed, &[0x686f_6c64]);
    let mut ds = LabeledDataset::new(oracle.schema.field_names());
    let positives = size / 2;
    for _ in 0..size - positives {
        let msg = initial_fuzz(&template, &mut rng).after;
        let label = label_of(oracle, &msg);
        ds.push(msg.values().to_vec(), label, 0).expect("schema width");
    }
    let mut found = 0;
    while found < positives {
        let msg = initial_fuzz(&template, &mut rng).after;
        if oracle.truth(&msg).unwrap_or(false) {
            ds.push(msg.values().to_vec(), Label::Presence, 0).expect("schema width");
            found += 1;
        }
    }
    ds
}

fn label_of(oracle: &FailureOracle, msg: &sdnfuzz_core::ControlMessage) -> Label {
    if oracle.truth(msg).unwrap_or(false) {
        Label::Presence
    } else {
        Label::Absence
    }
}
