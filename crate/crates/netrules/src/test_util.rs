//! Shared helpers for unit tests.

use rand::prelude::*;
use rand_chacha::ChaCha20Rng;

use crate::rules::{Rule, RuleEntry, RuleList};
use crate::schema::FeatureSchema;

/// Grows a random prefix-free covering rule list over the schema by
/// recursively deciding, per node of the assignment tree, whether to stop
/// (emit a rule) or expand the next feature. Payload marks a random class.
pub(crate) fn random_partition(schema: &FeatureSchema, seed: u64) -> RuleList<bool> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    grow(schema, &mut rng, &mut Vec::new(), &mut entries);
    RuleList::new(entries, schema).expect("grown partition must be valid")
}

fn grow(
    schema: &FeatureSchema,
    rng: &mut ChaCha20Rng,
    prefix: &mut Vec<u8>,
    out: &mut Vec<RuleEntry<bool>>,
) {
    let depth = prefix.len();
    if depth == schema.feature_count() || rng.gen_bool(0.4) {
        out.push(RuleEntry {
            rule: Rule::from_values(prefix),
            payload: rng.gen_bool(0.5),
        });
        return;
    }
    for v in 0..schema.value_count(depth) {
        prefix.push(v as u8);
        grow(schema, rng, prefix, out);
        prefix.pop();
    }
}
