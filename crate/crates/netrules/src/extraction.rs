//! The extraction engine: canonical weight buckets, minimal activating
//! prefixes, per-neuron rule lists and the layer-by-layer driver.
//!
//! Every neuron is decomposed into a prefix-free covering list of
//! (rule, behavior) pairs. Layer 1 comes straight from the weight rows; each
//! later layer merges its input lists into one shared partition, combines
//! behaviors linearly per region, and re-decomposes the combined linear
//! function restricted to that region. The output neuron's sigmoid reduces to
//! the same >= 0 threshold test as ReLU, so its active regions are exactly
//! the class-1 rules.

use std::sync::Arc;

use rayon::prelude::*;
use smallvec::SmallVec;

use crate::error::Result;
use crate::model::Network;
use crate::rules::{Behavior, NeuronRuleList, OutputRuleList, Rule, RuleEntry, RuleList};
use crate::schema::{FeatureSchema, ValueVec};

/// Canonical per-feature weight buckets for a linear function over the
/// one-hot input.
///
/// Each bucket holds `(original value index, canonical weight)` pairs sorted
/// by weight descending (stable, so ties keep schema value order). Canonical
/// weights are shifted so every bucket's minimum is exactly 0; the subtracted
/// minima are absorbed into `bias`. Sums of selected canonical weights plus
/// `bias` reproduce the original function on full assignments.
#[derive(Debug, Clone)]
pub struct WeightBuckets {
    first_feature: usize,
    buckets: Vec<Vec<(u8, f64)>>,
    bias: f64,
    /// suffix_max[k] = sum of bucket maxima from bucket k on (last entry 0).
    suffix_max: Vec<f64>,
}

impl WeightBuckets {
    pub fn bias(&self) -> f64 {
        self.bias
    }

    /// Feature index the first bucket corresponds to.
    pub fn first_feature(&self) -> usize {
        self.first_feature
    }

    pub fn buckets(&self) -> &[Vec<(u8, f64)>] {
        &self.buckets
    }

    /// Sum of the canonical weights selected by a full assignment of the
    /// bucketed features, plus the canonical bias. Test hook for the
    /// recoverability invariant.
    pub fn assignment_sum(&self, values: &[u8]) -> f64 {
        let mut acc = 0.0;
        for (bucket, &v) in self.buckets.iter().zip(values) {
            let w = bucket
                .iter()
                .find(|(value, _)| *value == v)
                .expect("value index present in bucket")
                .1;
            acc += w;
        }
        acc + self.bias
    }

    /// Largest reachable selected-weight sum.
    pub fn max_sum(&self) -> f64 {
        self.suffix_max[0]
    }
}

/// Splits a linear function into canonical buckets over features
/// `first_feature..m`, folding `extra_bias` (the function's bias plus any
/// fixed-feature contributions) and the per-bucket minima into the bias.
fn canonicalize_span(
    weights: &[f64],
    extra_bias: f64,
    schema: &FeatureSchema,
    first_feature: usize,
    negate: bool,
) -> WeightBuckets {
    let m = schema.feature_count();
    let mut buckets = Vec::with_capacity(m - first_feature);
    let mut bias = extra_bias;
    for i in first_feature..m {
        let offset = schema.offset(i);
        let mut bucket: Vec<(u8, f64)> = (0..schema.value_count(i))
            .map(|v| {
                let w = weights[offset + v];
                (v as u8, if negate { -w } else { w })
            })
            .collect();
        bucket.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite weights"));
        let min = bucket.last().expect("feature has values").1;
        for entry in &mut bucket {
            entry.1 -= min;
        }
        bias += min;
        buckets.push(bucket);
    }
    let mut suffix_max = vec![0.0; buckets.len() + 1];
    for k in (0..buckets.len()).rev() {
        suffix_max[k] = buckets[k][0].1 + suffix_max[k + 1];
    }
    WeightBuckets {
        first_feature,
        buckets,
        bias,
        suffix_max,
    }
}

/// Canonicalizes a full-width behavior: per-bucket descending non-negative
/// weights with minimum exactly 0, minima absorbed into the bias.
pub fn canonicalize(behavior: &Behavior, schema: &FeatureSchema) -> WeightBuckets {
    assert_eq!(
        behavior.width(),
        schema.one_hot_width(),
        "behavior width must match the schema's one-hot width"
    );
    canonicalize_span(&behavior.weights, behavior.bias, schema, 0, false)
}

fn threshold_met(sum: f64, tau: f64, strict: bool) -> bool {
    if strict {
        sum > tau
    } else {
        sum >= tau
    }
}

/// Depth-first enumeration of minimal threshold-crossing prefixes.
///
/// `acc` carries the left-to-right partial sum of chosen canonical weights.
/// A prefix is emitted as soon as it crosses the threshold, so no emitted
/// prefix extends another. Within a bucket, weights descend, so once a value
/// yields nothing, no later value can (smaller start, same completions);
/// `suffix_max` prunes branches whose best completion cannot cross.
/// Returns whether the subtree emitted anything.
fn enumerate_prefixes(
    buckets: &WeightBuckets,
    k: usize,
    acc: f64,
    tau: f64,
    strict: bool,
    prefix: &mut ValueVec,
    visit: &mut impl FnMut(&[u8]),
) -> bool {
    if threshold_met(acc, tau, strict) {
        visit(prefix);
        return true;
    }
    if k == buckets.buckets.len() || !threshold_met(acc + buckets.suffix_max[k], tau, strict) {
        return false;
    }
    let mut produced = false;
    for &(v, w) in &buckets.buckets[k] {
        prefix.push(v);
        let sub = enumerate_prefixes(buckets, k + 1, acc + w, tau, strict, prefix, visit);
        prefix.pop();
        if !sub {
            break;
        }
        produced = true;
    }
    produced
}

/// All minimal activating prefixes of canonical buckets: rules whose selected
/// weight sum crosses `tau` (>= by default, > when `strict`) while their
/// parent prefix does not. The empty rule alone is returned when the sum 0
/// already crosses; an empty vec means no assignment can cross.
pub fn select_weights(buckets: &WeightBuckets, tau: f64, strict: bool) -> Vec<Rule> {
    assert_eq!(
        buckets.first_feature, 0,
        "select_weights expects full-range buckets"
    );
    let mut rules = Vec::new();
    let mut prefix = ValueVec::new();
    enumerate_prefixes(buckets, 0, 0.0, tau, strict, &mut prefix, &mut |p| {
        rules.push(Rule::from_values(p))
    });
    rules.sort();
    rules
}

/// Decomposes `behavior` restricted to completions of `precondition` into
/// (extended rule, active?) pieces, sorted lexicographically.
///
/// Active pieces are minimal prefixes where the function is >= 0 on every
/// completion; inactive pieces are minimal prefixes where it is < 0 on every
/// completion (the strict negation of the same threshold, so the boundary
/// value 0 always lands on the active side). Together the pieces partition
/// the precondition's region.
fn extend_region(
    behavior: &Behavior,
    precondition: &Rule,
    schema: &FeatureSchema,
) -> Vec<(Rule, bool)> {
    let k = precondition.len();
    let mut fixed_bias = behavior.bias;
    for (i, &v) in precondition.values().iter().enumerate() {
        fixed_bias += behavior.weights[schema.offset(i) + v as usize];
    }

    if k == schema.feature_count() {
        // No free features: the sign of the fully fixed function decides.
        // Matches the canonical zero-bucket computation on both sides.
        return vec![(precondition.clone(), fixed_bias >= 0.0)];
    }

    let mut out = Vec::new();
    let mut prefix = ValueVec::new();

    let pos = canonicalize_span(&behavior.weights, fixed_bias, schema, k, false);
    enumerate_prefixes(&pos, 0, 0.0, -pos.bias, false, &mut prefix, &mut |p| {
        out.push((precondition.extend(p), true))
    });

    let neg = canonicalize_span(&behavior.weights, -fixed_bias, schema, k, true);
    enumerate_prefixes(&neg, 0, 0.0, -neg.bias, true, &mut prefix, &mut |p| {
        out.push((precondition.extend(p), false))
    });

    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

/// The literal formulation: decompose over all features, then conjoin each
/// piece with the precondition, dropping incompatible pieces. Equivalent to
/// `extend_region`; kept for differential testing.
fn extend_region_literal(
    behavior: &Behavior,
    precondition: &Rule,
    schema: &FeatureSchema,
) -> Vec<(Rule, bool)> {
    let mut out: Vec<(Rule, bool)> = extend_region(behavior, &Rule::empty(), schema)
        .into_iter()
        .filter_map(|(rule, active)| rule.conjoin(precondition).map(|r| (r, active)))
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

fn assert_partition<A>(list: &RuleList<A>, schema: &FeatureSchema, context: &str) {
    if let Err(e) = list.validate_partition(schema) {
        panic!("{context}: {e}");
    }
}

/// Rule list of a neuron acting directly on the one-hot input: active regions
/// carry the original behavior, inactive regions the zero behavior.
pub fn lin_rule(behavior: &Behavior, schema: &FeatureSchema) -> NeuronRuleList {
    let active = Arc::new(behavior.clone());
    let zero = Arc::new(Behavior::zero(behavior.width()));
    let entries = extend_region(behavior, &Rule::empty(), schema)
        .into_iter()
        .map(|(rule, is_active)| RuleEntry {
            rule,
            payload: if is_active {
                active.clone()
            } else {
                zero.clone()
            },
        })
        .collect();
    let list = RuleList::from_sorted(entries);
    assert_partition(&list, schema, "lin_rule output");
    list
}

/// A region of the common refinement of several rule lists: the conjunction
/// rule plus, per input list, the index of the entry containing the region.
#[derive(Debug, Clone)]
pub struct MergedRegion {
    pub rule: Rule,
    pub sources: SmallVec<[u32; 8]>,
}

/// Common refinement of prefix-free covering lists, with source tracking.
#[derive(Debug)]
pub struct MergedPartition {
    pub regions: Vec<MergedRegion>,
}

/// Two-pointer pass over two sorted partitions: emit the longer rule of every
/// compatible pair, otherwise advance the lexicographically smaller side.
fn merge_two(a: Vec<MergedRegion>, b: Vec<MergedRegion>) -> Vec<MergedRegion> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let mut i = 0;
    let mut j = 0;
    let concat = |x: &MergedRegion, y: &MergedRegion, rule: &Rule| {
        let mut sources = x.sources.clone();
        sources.extend_from_slice(&y.sources);
        MergedRegion {
            rule: rule.clone(),
            sources,
        }
    };
    while i < a.len() && j < b.len() {
        let ra = &a[i];
        let rb = &b[j];
        if ra.rule == rb.rule {
            out.push(concat(ra, rb, &ra.rule));
            i += 1;
            j += 1;
        } else if ra.rule.is_prefix_of(&rb.rule) {
            out.push(concat(ra, rb, &rb.rule));
            j += 1;
        } else if rb.rule.is_prefix_of(&ra.rule) {
            out.push(concat(ra, rb, &ra.rule));
            i += 1;
        } else if ra.rule < rb.rule {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// Merges the sorted lists into their common refinement, reduced
/// tournament-style, keeping per-list source indices in original list order.
pub fn merge_partition(lists: &[&NeuronRuleList], schema: &FeatureSchema) -> MergedPartition {
    assert!(!lists.is_empty(), "merge_partition needs at least one list");
    let mut rounds: Vec<Vec<MergedRegion>> = lists
        .iter()
        .map(|list| {
            list.iter()
                .enumerate()
                .map(|(idx, e)| MergedRegion {
                    rule: e.rule.clone(),
                    sources: SmallVec::from_slice(&[idx as u32]),
                })
                .collect()
        })
        .collect();
    while rounds.len() > 1 {
        let mut next = Vec::with_capacity(rounds.len().div_ceil(2));
        let mut iter = rounds.into_iter();
        while let Some(a) = iter.next() {
            match iter.next() {
                Some(b) => next.push(merge_two(a, b)),
                None => next.push(a),
            }
        }
        rounds = next;
    }
    let regions = rounds.pop().unwrap();

    // Coverage certifies the merge: regions of a valid common refinement are
    // pairwise disjoint (prefix-free rules diverge somewhere), so tiling the
    // full space is equivalent to being a partition.
    let covered: u128 = regions.iter().map(|r| r.rule.region_size(schema)).sum();
    if covered != schema.assignment_count() {
        panic!(
            "merge_partition: inputs violate the partition invariant \
             ({covered} of {} assignments covered)",
            schema.assignment_count()
        );
    }
    MergedPartition { regions }
}

/// Linear combination of the source behaviors of one region:
/// `w' = sum_j c_j * w_j`, `b' = b + sum_j c_j * b_j`.
fn combine_behavior(
    width: usize,
    lists: &[&NeuronRuleList],
    sources: &[u32],
    combine_weights: &[f64],
    bias: f64,
) -> Behavior {
    let mut weights = vec![0.0; width];
    let mut b = bias;
    for (j, &src) in sources.iter().enumerate() {
        let c = combine_weights[j];
        let behavior = &lists[j].entries()[src as usize].payload;
        for (w, s) in weights.iter_mut().zip(&behavior.weights) {
            *w += c * s;
        }
        b += c * behavior.bias;
    }
    Behavior::new(weights, b)
}

/// Merges the input lists into their common refinement and annotates each
/// region with the linear combination of its source behaviors.
pub fn merge_rule_lists(
    lists: &[&NeuronRuleList],
    combine_weights: &[f64],
    bias: f64,
    schema: &FeatureSchema,
) -> NeuronRuleList {
    assert_eq!(lists.len(), combine_weights.len());
    let width = schema.one_hot_width();
    let merged = merge_partition(lists, schema);
    let entries = merged
        .regions
        .into_iter()
        .map(|region| RuleEntry {
            payload: Arc::new(combine_behavior(
                width,
                lists,
                &region.sources,
                combine_weights,
                bias,
            )),
            rule: region.rule,
        })
        .collect();
    let list = RuleList::from_sorted(entries);
    assert_partition(&list, schema, "merge_rule_lists output");
    list
}

/// How a region's combined behavior is re-decomposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExtensionStrategy {
    /// Substitute the precondition's fixed one-hot coordinates into the
    /// linear function and decompose over the free features only.
    #[default]
    Restricted,
    /// Decompose over all features, then conjoin with the precondition.
    /// Same output; kept for differential testing.
    LiteralConjoin,
}

/// (rule, Some(behavior) iff the neuron is active there) pieces of one
/// neuron, given the shared merged partition of its input lists.
fn neuron_pieces(
    weights: &[f64],
    bias: f64,
    inputs: &[&NeuronRuleList],
    merged: &MergedPartition,
    schema: &FeatureSchema,
    strategy: ExtensionStrategy,
) -> Vec<(Rule, Option<Arc<Behavior>>)> {
    let width = schema.one_hot_width();
    // Input-independent neuron: its behavior is the constant `bias`
    // everywhere, so the input partition is irrelevant and the list collapses
    // to a single always-active or always-inactive entry.
    if weights.iter().all(|&w| w == 0.0) {
        let constant = Behavior::new(vec![0.0; width], bias);
        return extend_region(&constant, &Rule::empty(), schema)
            .into_iter()
            .map(|(rule, active)| (rule, active.then(|| Arc::new(constant.clone()))))
            .collect();
    }

    let chunk = (merged.regions.len() / (rayon::current_num_threads() * 4)).max(64);
    merged
        .regions
        .par_chunks(chunk)
        .map(|regions| {
            let mut out = Vec::new();
            for region in regions {
                let combined = combine_behavior(width, inputs, &region.sources, weights, bias);
                let pieces = match strategy {
                    ExtensionStrategy::Restricted => extend_region(&combined, &region.rule, schema),
                    ExtensionStrategy::LiteralConjoin => {
                        extend_region_literal(&combined, &region.rule, schema)
                    }
                };
                let shared = Arc::new(combined);
                for (rule, active) in pieces {
                    out.push((rule, active.then(|| shared.clone())));
                }
            }
            out
        })
        .reduce(Vec::new, |mut acc, mut chunk| {
            acc.append(&mut chunk);
            acc
        })
}

fn pieces_to_list(
    pieces: Vec<(Rule, Option<Arc<Behavior>>)>,
    zero: &Arc<Behavior>,
    schema: &FeatureSchema,
    context: &str,
) -> NeuronRuleList {
    let entries = pieces
        .into_iter()
        .map(|(rule, behavior)| RuleEntry {
            rule,
            payload: behavior.unwrap_or_else(|| zero.clone()),
        })
        .collect();
    let list = RuleList::from_sorted(entries);
    assert_partition(&list, schema, context);
    list
}

/// Rule list of a ReLU neuron whose inputs are other neurons with known rule
/// lists: conjoin the input rules, combine the behaviors linearly, and
/// re-decompose each region's combined linear function.
pub fn neuron_rule(
    weights: &[f64],
    bias: f64,
    inputs: &[&NeuronRuleList],
    schema: &FeatureSchema,
    strategy: ExtensionStrategy,
) -> NeuronRuleList {
    assert_eq!(weights.len(), inputs.len());
    let zero = Arc::new(Behavior::zero(schema.one_hot_width()));
    let merged = if weights.iter().all(|&w| w == 0.0) {
        MergedPartition {
            regions: Vec::new(),
        }
    } else {
        merge_partition(inputs, schema)
    };
    let pieces = neuron_pieces(weights, bias, inputs, &merged, schema, strategy);
    pieces_to_list(pieces, &zero, schema, "neuron_rule output")
}

/// Extraction options; the defaults give the standard pipeline.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExtractOptions {
    pub strategy: ExtensionStrategy,
    /// Keep every hidden neuron's rule list alongside the output list.
    pub keep_hidden: bool,
}

/// Result of decomposing a network.
#[derive(Debug, PartialEq)]
pub struct Extraction {
    /// Output rule list: class 1 exactly where the final pre-activation
    /// is >= 0.
    pub output: OutputRuleList,
    /// Per hidden layer, per neuron rule lists (when `keep_hidden` was set).
    pub hidden_layers: Vec<Vec<NeuronRuleList>>,
}

/// Decomposes the network into an output rule list whose classes match
/// `predict` on every full assignment.
pub fn extract(net: &Network, schema: &FeatureSchema) -> Result<OutputRuleList> {
    extract_with(net, schema, ExtractOptions::default()).map(|e| e.output)
}

pub fn extract_with(
    net: &Network,
    schema: &FeatureSchema,
    options: ExtractOptions,
) -> Result<Extraction> {
    net.check_input_width(schema.one_hot_width())?;
    let layer_count = net.layers().len();
    let mut hidden_layers = Vec::new();

    // A network without hidden layers is a single linear threshold on the
    // input: decompose it directly.
    if layer_count == 1 {
        let layer = &net.layers()[0];
        let behavior = Behavior::new(layer.weights[0].clone(), layer.biases[0]);
        let entries = extend_region(&behavior, &Rule::empty(), schema)
            .into_iter()
            .map(|(rule, active)| RuleEntry {
                rule,
                payload: active,
            })
            .collect();
        let output = RuleList::from_sorted(entries);
        assert_partition(&output, schema, "output rule list");
        return Ok(Extraction {
            output,
            hidden_layers,
        });
    }

    // First hidden layer: direct decomposition of each weight row.
    let first = &net.layers()[0];
    let mut current: Vec<NeuronRuleList> = first
        .weights
        .par_iter()
        .zip(&first.biases)
        .map(|(row, &b)| lin_rule(&Behavior::new(row.clone(), b), schema))
        .collect();

    // Remaining hidden layers: one shared merge per layer, then per-neuron
    // behavior combination and re-decomposition.
    for layer in &net.layers()[1..layer_count - 1] {
        if options.keep_hidden {
            hidden_layers.push(current.clone());
        }
        let inputs: Vec<&NeuronRuleList> = current.iter().collect();
        let merged = merge_partition(&inputs, schema);
        let zero = Arc::new(Behavior::zero(schema.one_hot_width()));
        current = layer
            .weights
            .par_iter()
            .zip(&layer.biases)
            .map(|(row, &b)| {
                let pieces = neuron_pieces(row, b, &inputs, &merged, schema, options.strategy);
                pieces_to_list(pieces, &zero, schema, "hidden layer rule list")
            })
            .collect();
    }
    if options.keep_hidden {
        hidden_layers.push(current.clone());
    }

    // Output layer: sigmoid(y) >= 0.5 iff y >= 0, so the ReLU-style active
    // regions are exactly the class-1 rules.
    let out_layer = net.layers().last().unwrap();
    let inputs: Vec<&NeuronRuleList> = current.iter().collect();
    let merged = merge_partition(&inputs, schema);
    let pieces = neuron_pieces(
        &out_layer.weights[0],
        out_layer.biases[0],
        &inputs,
        &merged,
        schema,
        options.strategy,
    );
    let entries = pieces
        .into_iter()
        .map(|(rule, behavior)| RuleEntry {
            rule,
            payload: behavior.is_some(),
        })
        .collect();
    let output = RuleList::from_sorted(entries);
    assert_partition(&output, schema, "output rule list");
    Ok(Extraction {
        output,
        hidden_layers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, Layer};
    use rand::prelude::*;
    use rand_chacha::ChaCha20Rng;

    fn tomato_schema() -> FeatureSchema {
        FeatureSchema::parse("color: red, yellow\nsize: small, medium, big").unwrap()
    }

    fn tomato_network() -> Network {
        Network::new(
            5,
            vec![
                Layer {
                    weights: vec![
                        vec![4.0, 1.0, 1.0, 2.0, 2.0],
                        vec![3.0, 2.0, 2.0, 3.0, 3.0],
                    ],
                    biases: vec![-5.0, -5.0],
                    activation: Activation::Relu,
                },
                Layer {
                    weights: vec![vec![1.0, 1.0]],
                    biases: vec![-1.0],
                    activation: Activation::Sigmoid,
                },
            ],
        )
        .unwrap()
    }

    fn rule(values: &[u8]) -> Rule {
        Rule::from_values(values)
    }

    fn n1_behavior() -> Behavior {
        Behavior::new(vec![4.0, 1.0, 1.0, 2.0, 2.0], -5.0)
    }

    fn n2_behavior() -> Behavior {
        Behavior::new(vec![3.0, 2.0, 2.0, 3.0, 3.0], -5.0)
    }

    // Brute-force oracle: minimal threshold-crossing prefixes by direct
    // enumeration of every prefix, no pruning, fresh left-to-right sums.
    fn oracle_minimal_prefixes(buckets: &WeightBuckets, tau: f64, strict: bool) -> Vec<Rule> {
        fn prefix_sum(buckets: &WeightBuckets, prefix: &[u8]) -> f64 {
            let mut acc = 0.0;
            for (k, &v) in prefix.iter().enumerate() {
                acc += buckets.buckets()[k]
                    .iter()
                    .find(|(value, _)| *value == v)
                    .unwrap()
                    .1;
            }
            acc
        }
        fn all_prefixes(buckets: &WeightBuckets, prefix: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
            out.push(prefix.clone());
            if prefix.len() == buckets.buckets().len() {
                return;
            }
            let k = prefix.len();
            for &(v, _) in &buckets.buckets()[k] {
                prefix.push(v);
                all_prefixes(buckets, prefix, out);
                prefix.pop();
            }
        }
        let mut prefixes = Vec::new();
        all_prefixes(buckets, &mut Vec::new(), &mut prefixes);
        let mut out: Vec<Rule> = prefixes
            .into_iter()
            .filter(|p| {
                let sum = prefix_sum(buckets, p);
                if !threshold_met(sum, tau, strict) {
                    return false;
                }
                if p.is_empty() {
                    return true;
                }
                let parent = prefix_sum(buckets, &p[..p.len() - 1]);
                !threshold_met(parent, tau, strict)
            })
            .map(|p| Rule::from_values(&p))
            .collect();
        out.sort();
        out
    }

    #[test]
    fn canonicalize_worked_example() {
        let s = tomato_schema();
        let b = canonicalize(&n1_behavior(), &s);
        // color: red 4, yellow 1 -> red 3, yellow 0; size: medium/big 1, small 0.
        assert_eq!(b.buckets()[0], vec![(0, 3.0), (1, 0.0)]);
        assert_eq!(b.buckets()[1], vec![(1, 1.0), (2, 1.0), (0, 0.0)]);
        assert_eq!(b.bias(), -3.0);
        assert_eq!(b.max_sum(), 4.0);
    }

    #[test]
    fn canonicalize_all_equal_bucket() {
        let s = FeatureSchema::parse("f: a, b, c\ng: x, y").unwrap();
        let b = canonicalize(&Behavior::new(vec![2.5, 2.5, 2.5, 1.0, 0.0], 0.0), &s);
        assert_eq!(b.buckets()[0], vec![(0, 0.0), (1, 0.0), (2, 0.0)]);
        assert_eq!(b.bias(), 2.5);
    }

    #[test]
    fn canonicalize_is_idempotent_on_canonical_input() {
        let s = tomato_schema();
        // Already canonical: each bucket's minimum is 0.
        let b = Behavior::new(vec![3.0, 0.0, 0.0, 1.0, 1.0], -3.0);
        let canon = canonicalize(&b, &s);
        assert_eq!(canon.bias(), b.bias);
        assert_eq!(canon.buckets()[0], vec![(0, 3.0), (1, 0.0)]);
        assert_eq!(canon.buckets()[1], vec![(1, 1.0), (2, 1.0), (0, 0.0)]);
    }

    #[test]
    fn canonical_sums_recover_original_function() {
        let s = FeatureSchema::parse("a: p, q, r\nb: p, q\nc: p, q, r, s").unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..50 {
            let behavior = Behavior::new(
                (0..s.one_hot_width())
                    .map(|_| rng.gen_range(-3.0..3.0))
                    .collect(),
                rng.gen_range(-3.0..3.0),
            );
            let canon = canonicalize(&behavior, &s);
            for inst in s.assignments() {
                let direct = behavior.evaluate_instance(&inst, &s);
                let via_canon = canon.assignment_sum(inst.values());
                assert!(
                    (direct - via_canon).abs() <= 1e-12,
                    "canonical sum {via_canon} differs from {direct}"
                );
            }
        }
    }

    #[test]
    fn select_weights_worked_examples() {
        let s = tomato_schema();

        let n1 = canonicalize(&n1_behavior(), &s);
        assert_eq!(select_weights(&n1, 3.0, false), vec![rule(&[0])]);

        let n2 = canonicalize(&n2_behavior(), &s);
        assert_eq!(
            select_weights(&n2, 1.0, false),
            vec![rule(&[0]), rule(&[1, 1]), rule(&[1, 2])]
        );

        // Negated first neuron, strict threshold: (red, small) reaches
        // exactly 1 and is excluded by strictness.
        let neg = Behavior::new(vec![-4.0, -1.0, -1.0, -2.0, -2.0], 5.0);
        let canon = canonicalize(&neg, &s);
        assert_eq!(canon.buckets()[0], vec![(1, 3.0), (0, 0.0)]);
        assert_eq!(select_weights(&canon, 1.0, true), vec![rule(&[1])]);
    }

    #[test]
    fn select_weights_base_cases() {
        let s = tomato_schema();
        let canon = canonicalize(&n1_behavior(), &s);
        // Threshold above the best reachable sum: nothing crosses.
        assert!(select_weights(&canon, 10.0, false).is_empty());
        // Threshold already crossed by the empty sum: the empty rule alone.
        assert_eq!(select_weights(&canon, 0.0, false), vec![Rule::empty()]);
        assert_eq!(select_weights(&canon, -1.0, true), vec![Rule::empty()]);
    }

    #[test]
    fn select_weights_matches_oracle_on_random_buckets() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for case in 0..300 {
            let m = rng.gen_range(1..=5);
            let counts: Vec<usize> = (0..m).map(|_| rng.gen_range(2..=4)).collect();
            let schema = FeatureSchema::new(
                counts
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| crate::schema::Feature {
                        name: format!("f{i}"),
                        values: (0..c).map(|v| format!("v{v}")).collect(),
                    })
                    .collect(),
            )
            .unwrap();
            // Half the cases use a dyadic grid to engineer exact ties.
            let dyadic = case % 2 == 0;
            let behavior = Behavior::new(
                (0..schema.one_hot_width())
                    .map(|_| {
                        if dyadic {
                            rng.gen_range(-8..=8) as f64 * 0.25
                        } else {
                            rng.gen_range(-2.0..2.0)
                        }
                    })
                    .collect(),
                0.0,
            );
            let canon = canonicalize(&behavior, &schema);
            let tau = if case % 4 == 0 {
                // Land exactly on a reachable sum.
                let values: Vec<u8> = counts
                    .iter()
                    .map(|&c| rng.gen_range(0..c) as u8)
                    .collect();
                canon.assignment_sum(&values) - canon.bias()
            } else {
                rng.gen_range(-1.0..canon.max_sum() + 1.0)
            };
            for strict in [false, true] {
                let got = select_weights(&canon, tau, strict);
                let want = oracle_minimal_prefixes(&canon, tau, strict);
                assert_eq!(got, want, "case {case} strict={strict} tau={tau}");
            }
        }
    }

    #[test]
    fn returned_rules_stay_above_threshold_when_upgraded() {
        // Replacing any chosen value by a higher-weight value in the same
        // bucket keeps the sum above the threshold.
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let s = FeatureSchema::parse("a: p, q, r\nb: p, q, r\nc: p, q, r").unwrap();
        for _ in 0..50 {
            let behavior =
                Behavior::new((0..9).map(|_| rng.gen_range(-2.0..2.0)).collect(), 0.0);
            let canon = canonicalize(&behavior, &s);
            let tau = rng.gen_range(0.0..canon.max_sum());
            for r in select_weights(&canon, tau, false) {
                let positions: Vec<usize> = r
                    .values()
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| {
                        canon.buckets()[k]
                            .iter()
                            .position(|(value, _)| *value == v)
                            .unwrap()
                    })
                    .collect();
                for (k, &pos) in positions.iter().enumerate() {
                    for better in 0..pos {
                        let sum: f64 = positions
                            .iter()
                            .enumerate()
                            .map(|(kk, &p)| {
                                let idx = if kk == k { better } else { p };
                                canon.buckets()[kk][idx].1
                            })
                            .sum();
                        assert!(sum >= tau, "upgraded selection fell below threshold");
                    }
                }
            }
        }
    }

    #[test]
    fn lin_rule_worked_example() {
        let s = tomato_schema();
        let list = lin_rule(&n1_behavior(), &s);
        assert_eq!(list.len(), 2);
        assert_eq!(list.entries()[0].rule, rule(&[0]));
        assert_eq!(*list.entries()[0].payload, n1_behavior());
        assert_eq!(list.entries()[1].rule, rule(&[1]));
        assert_eq!(*list.entries()[1].payload, Behavior::zero(5));
    }

    #[test]
    fn lin_rule_constant_behaviors() {
        let s = tomato_schema();
        let always = lin_rule(&Behavior::new(vec![0.0; 5], 5.0), &s);
        assert_eq!(always.len(), 1);
        assert_eq!(always.entries()[0].rule, Rule::empty());
        assert_eq!(always.entries()[0].payload.bias, 5.0);

        let never = lin_rule(&Behavior::new(vec![0.0; 5], -5.0), &s);
        assert_eq!(never.len(), 1);
        assert_eq!(never.entries()[0].rule, Rule::empty());
        assert_eq!(*never.entries()[0].payload, Behavior::zero(5));
    }

    #[test]
    fn merge_worked_example() {
        let s = tomato_schema();
        let l1 = lin_rule(&n1_behavior(), &s);
        let l2 = lin_rule(&n2_behavior(), &s);
        let merged = merge_rule_lists(&[&l1, &l2], &[1.0, 1.0], -1.0, &s);
        let rules: Vec<Rule> = merged.iter().map(|e| e.rule.clone()).collect();
        assert_eq!(
            rules,
            vec![rule(&[0]), rule(&[1, 0]), rule(&[1, 1]), rule(&[1, 2])]
        );
        // (color=red): both neurons active, so w' = w1 + w2 and b' = -5-5-1.
        let red = &merged.entries()[0].payload;
        assert_eq!(red.weights, vec![7.0, 3.0, 3.0, 5.0, 5.0]);
        assert_eq!(red.bias, -11.0);
        // (yellow, small): both inactive, only the output bias remains.
        let ys = &merged.entries()[1].payload;
        assert_eq!(ys.weights, vec![0.0; 5]);
        assert_eq!(ys.bias, -1.0);
        // (yellow, medium): only the second neuron is active.
        let ym = &merged.entries()[2].payload;
        assert_eq!(ym.weights, n2_behavior().weights);
        assert_eq!(ym.bias, -6.0);
    }

    #[test]
    fn merge_identity_and_doubling() {
        let s = tomato_schema();
        let l = lin_rule(&n2_behavior(), &s);
        let trivial = lin_rule(&Behavior::new(vec![0.0; 5], -1.0), &s);
        assert_eq!(trivial.len(), 1);

        let same = merge_rule_lists(&[&l, &trivial], &[1.0, 0.0], 0.0, &s);
        assert_eq!(same.len(), l.len());
        for (a, b) in same.iter().zip(l.iter()) {
            assert_eq!(a.rule, b.rule);
            assert_eq!(*a.payload, *b.payload);
        }

        let doubled = merge_rule_lists(&[&l, &l], &[1.0, 1.0], 0.0, &s);
        assert_eq!(doubled.len(), l.len());
        for (a, b) in doubled.iter().zip(l.iter()) {
            assert_eq!(a.rule, b.rule);
            for (da, db) in a.payload.weights.iter().zip(&b.payload.weights) {
                assert_eq!(*da, 2.0 * db);
            }
        }
    }

    #[test]
    fn merge_size_is_bounded_by_input_sizes() {
        let s = FeatureSchema::parse("a: p, q\nb: p, q, r\nc: p, q\nd: p, q, r").unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..30 {
            let b1 = Behavior::new(
                (0..s.one_hot_width())
                    .map(|_| rng.gen_range(-2.0..2.0))
                    .collect(),
                rng.gen_range(-2.0..2.0),
            );
            let b2 = Behavior::new(
                (0..s.one_hot_width())
                    .map(|_| rng.gen_range(-2.0..2.0))
                    .collect(),
                rng.gen_range(-2.0..2.0),
            );
            let l1 = lin_rule(&b1, &s);
            let l2 = lin_rule(&b2, &s);
            let merged = merge_rule_lists(&[&l1, &l2], &[1.0, 1.0], 0.0, &s);
            assert!(merged.len() <= l1.len() + l2.len());
        }
    }

    #[test]
    fn neuron_rule_worked_example() {
        let s = tomato_schema();
        let l1 = lin_rule(&n1_behavior(), &s);
        let l2 = lin_rule(&n2_behavior(), &s);
        let out = neuron_rule(
            &[1.0, 1.0],
            -1.0,
            &[&l1, &l2],
            &s,
            ExtensionStrategy::Restricted,
        );
        let zero = Behavior::zero(5);
        let positive: Vec<Rule> = out
            .iter()
            .filter(|e| *e.payload != zero)
            .map(|e| e.rule.clone())
            .collect();
        assert_eq!(positive, vec![rule(&[0, 1]), rule(&[0, 2])]);
    }

    #[test]
    fn neuron_rule_ignores_inputs_when_weights_are_zero() {
        let s = tomato_schema();
        let l1 = lin_rule(&n1_behavior(), &s);
        let l2 = lin_rule(&n2_behavior(), &s);
        let out = neuron_rule(
            &[0.0, 0.0],
            1.0,
            &[&l1, &l2],
            &s,
            ExtensionStrategy::Restricted,
        );
        assert_eq!(out.len(), 1);
        assert_eq!(out.entries()[0].rule, Rule::empty());
        assert_eq!(out.entries()[0].payload.bias, 1.0);
    }

    #[test]
    fn neuron_rule_identity_preserves_region_map() {
        let s = tomato_schema();
        let l2 = lin_rule(&n2_behavior(), &s);
        let out = neuron_rule(&[1.0], 0.0, &[&l2], &s, ExtensionStrategy::Restricted);
        // Same region -> value map as the input refined by activation sign:
        // ReLU(n2) = n2 because n2 is itself a ReLU output.
        for inst in s.assignments() {
            let input_val = l2
                .lookup(&inst)
                .payload
                .evaluate_instance(&inst, &s)
                .max(0.0);
            let out_val = out
                .lookup(&inst)
                .payload
                .evaluate_instance(&inst, &s)
                .max(0.0);
            assert_eq!(input_val, out_val);
        }
    }

    #[test]
    fn extract_worked_example() {
        let s = tomato_schema();
        let net = tomato_network();
        let rules = extract(&net, &s).unwrap();
        let positive: Vec<Rule> = rules
            .iter()
            .filter(|e| e.payload)
            .map(|e| e.rule.clone())
            .collect();
        assert_eq!(positive, vec![rule(&[0, 1]), rule(&[0, 2])]);
        for inst in s.assignments() {
            assert_eq!(
                rules.classify_instance(&inst),
                net.predict_instance(&inst, &s)
            );
        }
    }

    #[test]
    fn extract_single_layer_constant_positive() {
        let s = tomato_schema();
        let net = Network::new(
            5,
            vec![Layer {
                weights: vec![vec![0.01, -0.02, 0.01, 0.0, -0.01]],
                biases: vec![10.0],
                activation: Activation::Sigmoid,
            }],
        )
        .unwrap();
        let rules = extract(&net, &s).unwrap();
        assert_eq!(rules.len(), 1);
        assert_eq!(rules.entries()[0].rule, Rule::empty());
        assert!(rules.entries()[0].payload);
    }

    fn random_small_schema(rng: &mut ChaCha20Rng) -> FeatureSchema {
        let m = rng.gen_range(2..=4);
        FeatureSchema::new(
            (0..m)
                .map(|i| crate::schema::Feature {
                    name: format!("f{i}"),
                    values: (0..rng.gen_range(2..=4))
                        .map(|v| format!("v{v}"))
                        .collect(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn extract_agrees_with_predict_exhaustively_on_random_networks() {
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        for _ in 0..40 {
            let schema = random_small_schema(&mut rng);
            let hidden: Vec<usize> = match rng.gen_range(0..3) {
                0 => vec![],
                1 => vec![rng.gen_range(1..=4)],
                _ => vec![rng.gen_range(1..=4), rng.gen_range(1..=3)],
            };
            let net =
                crate::model::init_network(schema.one_hot_width(), &hidden, &mut rng).unwrap();
            let rules = extract(&net, &schema).unwrap();
            for inst in schema.assignments() {
                assert_eq!(
                    rules.classify_instance(&inst),
                    net.predict_instance(&inst, &schema),
                    "mismatch on {:?}",
                    inst.values()
                );
            }
        }
    }

    #[test]
    fn hidden_behaviors_equal_relu_of_pre_activation() {
        let mut rng = ChaCha20Rng::seed_from_u64(101);
        for _ in 0..10 {
            let schema = random_small_schema(&mut rng);
            let net =
                crate::model::init_network(schema.one_hot_width(), &[3, 2], &mut rng).unwrap();
            let extraction = extract_with(
                &net,
                &schema,
                ExtractOptions {
                    keep_hidden: true,
                    ..ExtractOptions::default()
                },
            )
            .unwrap();
            assert_eq!(extraction.hidden_layers.len(), 2);
            for inst in schema.assignments() {
                let x = inst.encode_one_hot(&schema);
                let pass = net.forward(&x).unwrap();
                for (k, layer_lists) in extraction.hidden_layers.iter().enumerate() {
                    for (i, list) in layer_lists.iter().enumerate() {
                        let behavior = &list.lookup(&inst).payload;
                        let expected = pass.pre_activations[k][i].max(0.0);
                        let got = behavior.evaluate_instance(&inst, &schema);
                        assert!(
                            (got - expected).abs() <= 1e-9,
                            "layer {k} neuron {i}: {got} vs {expected}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn strategies_produce_identical_lists() {
        let mut rng = ChaCha20Rng::seed_from_u64(55);
        for _ in 0..20 {
            let schema = random_small_schema(&mut rng);
            let hidden = vec![rng.gen_range(1..=3), rng.gen_range(1..=2)];
            let net =
                crate::model::init_network(schema.one_hot_width(), &hidden, &mut rng).unwrap();
            let restricted = extract_with(
                &net,
                &schema,
                ExtractOptions {
                    strategy: ExtensionStrategy::Restricted,
                    keep_hidden: false,
                },
            )
            .unwrap();
            let literal = extract_with(
                &net,
                &schema,
                ExtractOptions {
                    strategy: ExtensionStrategy::LiteralConjoin,
                    keep_hidden: false,
                },
            )
            .unwrap();
            assert_eq!(restricted.output, literal.output);
        }
    }

    #[test]
    fn extraction_is_deterministic() {
        let s = tomato_schema();
        let net = tomato_network();
        let a = extract(&net, &s).unwrap();
        let b = extract(&net, &s).unwrap();
        assert_eq!(a, b);
    }
}
