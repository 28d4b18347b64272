//! Fidelity and accuracy metrics, exhaustive full-space verification,
//! support-based pruning and fidelity/comprehensibility tradeoff curves.

use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Network;
use crate::rules::{OutputRuleList, Rule};
use crate::schema::{Dataset, FeatureSchema, Instance};

/// Anything that assigns a binary class to an instance.
pub trait Classifier: Sync {
    fn classify(&self, schema: &FeatureSchema, instance: &Instance) -> bool;
}

impl Classifier for Network {
    fn classify(&self, schema: &FeatureSchema, instance: &Instance) -> bool {
        self.predict_instance(instance, schema)
    }
}

impl Classifier for OutputRuleList {
    fn classify(&self, _schema: &FeatureSchema, instance: &Instance) -> bool {
        self.classify_instance(instance)
    }
}

/// A prefix-free set of positive rules used as a default-negative predictor:
/// class 1 iff some rule matches.
#[derive(Debug, Clone)]
pub struct PositiveRuleSet {
    sorted: Vec<Rule>,
}

impl PositiveRuleSet {
    pub fn new(rules: impl IntoIterator<Item = Rule>) -> Self {
        let mut sorted: Vec<Rule> = rules.into_iter().collect();
        sorted.sort();
        PositiveRuleSet { sorted }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// True iff some rule matches. In a prefix-free set the only candidate is
    /// the greatest rule lexicographically <= the instance.
    pub fn matches(&self, instance: &Instance) -> bool {
        let key = instance.values();
        let idx = self.sorted.partition_point(|r| r.values() <= key);
        if idx == 0 {
            return false;
        }
        let candidate = &self.sorted[idx - 1];
        candidate.len() <= key.len() && candidate.values() == &key[..candidate.len()]
    }
}

impl Classifier for PositiveRuleSet {
    fn classify(&self, _schema: &FeatureSchema, instance: &Instance) -> bool {
        self.matches(instance)
    }
}

/// Fraction of instances where the model agrees with the network.
pub fn fidelity<'a, C: Classifier + ?Sized>(
    model: &C,
    net: &Network,
    schema: &FeatureSchema,
    instances: impl IntoIterator<Item = &'a Instance>,
) -> Result<f64> {
    let mut total = 0u64;
    let mut matches = 0u64;
    for inst in instances {
        total += 1;
        if model.classify(schema, inst) == net.predict_instance(inst, schema) {
            matches += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyInstanceSet);
    }
    Ok(matches as f64 / total as f64)
}

/// Fraction of labeled rows the model classifies correctly.
pub fn accuracy<C: Classifier + ?Sized>(
    model: &C,
    schema: &FeatureSchema,
    rows: &[(Instance, bool)],
) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::EmptyInstanceSet);
    }
    let hits = rows
        .iter()
        .filter(|(inst, y)| model.classify(schema, inst) == *y)
        .count();
    Ok(hits as f64 / rows.len() as f64)
}

/// Outcome of a full-space or sampled verification sweep.
#[derive(Debug, Clone)]
pub struct Verification {
    pub checked: u128,
    pub mismatch_count: u128,
    /// First counterexamples in lexicographic order (at most 100).
    pub counterexamples: Vec<Instance>,
}

impl Verification {
    pub fn passed(&self) -> bool {
        self.mismatch_count == 0
    }
}

pub const DEFAULT_VERIFY_CAP: u128 = 1_000_000;
const MAX_COUNTEREXAMPLES: usize = 100;

/// Enumerates every full assignment and compares the rule list's class with
/// the network prediction. Refuses spaces larger than `cap` (use
/// `verify_sampled` there).
pub fn verify_exhaustive(
    rules: &OutputRuleList,
    net: &Network,
    schema: &FeatureSchema,
    cap: u128,
) -> Result<Verification> {
    let total = schema.assignment_count();
    if total > cap {
        return Err(Error::CapExceeded { size: total, cap });
    }
    net.check_input_width(schema.one_hot_width())?;

    let block = 4096u128;
    let block_count = total.div_ceil(block) as usize;
    let results: Vec<(u128, Vec<Instance>)> = (0..block_count)
        .into_par_iter()
        .map(|bi| {
            let start = bi as u128 * block;
            let end = (start + block).min(total);
            let mut mismatches = 0u128;
            let mut examples = Vec::new();
            for idx in start..end {
                let inst = schema.instance_at(idx);
                if rules.classify_instance(&inst) != net.predict_instance(&inst, schema) {
                    mismatches += 1;
                    if examples.len() < MAX_COUNTEREXAMPLES {
                        examples.push(inst);
                    }
                }
            }
            (mismatches, examples)
        })
        .collect();

    let mut verification = Verification {
        checked: total,
        mismatch_count: 0,
        counterexamples: Vec::new(),
    };
    for (count, examples) in results {
        verification.mismatch_count += count;
        for e in examples {
            if verification.counterexamples.len() < MAX_COUNTEREXAMPLES {
                verification.counterexamples.push(e);
            }
        }
    }
    Ok(verification)
}

/// Sampling fallback for spaces above the exhaustive cap.
pub fn verify_sampled(
    rules: &OutputRuleList,
    net: &Network,
    schema: &FeatureSchema,
    samples: usize,
    seed: u64,
) -> Result<Verification> {
    net.check_input_width(schema.one_hot_width())?;
    let total = schema.assignment_count();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut verification = Verification {
        checked: samples as u128,
        mismatch_count: 0,
        counterexamples: Vec::new(),
    };
    for _ in 0..samples {
        let idx = rng.gen_range(0..total);
        let inst = schema.instance_at(idx);
        if rules.classify_instance(&inst) != net.predict_instance(&inst, schema) {
            verification.mismatch_count += 1;
            if verification.counterexamples.len() < MAX_COUNTEREXAMPLES {
                verification.counterexamples.push(inst);
            }
        }
    }
    Ok(verification)
}

/// Positive rules of the full list ordered by descending training support
/// (ties lexicographic), zero-support rules included at the tail.
pub fn support_sorted_positive(full: &OutputRuleList, train: &Dataset) -> Vec<(Rule, u64)> {
    let supports = crate::rules::list_supports(full, train);
    let mut positive: Vec<(Rule, u64)> = full
        .iter()
        .zip(&supports)
        .filter(|(e, _)| e.payload)
        .map(|(e, &s)| (e.rule.clone(), s))
        .collect();
    positive.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    positive
}

/// The support-pruned predictor: positive rules with non-zero training
/// support, ordered by descending support, predicting default-negative.
#[derive(Debug, Clone)]
pub struct SupportRuleList {
    entries: Vec<(Rule, u64)>,
    predictor: PositiveRuleSet,
}

impl SupportRuleList {
    /// Rules in support order (descending, ties lexicographic).
    pub fn entries(&self) -> &[(Rule, u64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Classifier for SupportRuleList {
    fn classify(&self, _schema: &FeatureSchema, instance: &Instance) -> bool {
        self.predictor.matches(instance)
    }
}

/// Keeps the positive rules with non-zero support on `train`, sorted by
/// descending support.
pub fn prune_by_support(full: &OutputRuleList, train: &Dataset) -> SupportRuleList {
    let entries: Vec<(Rule, u64)> = support_sorted_positive(full, train)
        .into_iter()
        .filter(|(_, s)| *s > 0)
        .collect();
    let predictor = PositiveRuleSet::new(entries.iter().map(|(r, _)| r.clone()));
    SupportRuleList { entries, predictor }
}

/// One row of the fidelity/accuracy-versus-rule-count tradeoff table.
#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub percent: usize,
    pub rule_count: usize,
    pub fidelity: f64,
    pub accuracy: f64,
}

/// Evaluates top-k default-negative predictors over prefixes of the
/// support-ordered positive rules, at every `step_percent` from 0 to 100.
/// The 100% point uses all positive rules and therefore replicates the full
/// list's predictions exactly. Values are reported as measured; no
/// monotonicity is implied.
pub fn tradeoff_curve(
    ordered: &[(Rule, u64)],
    net: &Network,
    schema: &FeatureSchema,
    test_rows: &[(Instance, bool)],
    step_percent: usize,
) -> Result<Vec<CurvePoint>> {
    if test_rows.is_empty() {
        return Err(Error::EmptyInstanceSet);
    }
    if step_percent == 0 || step_percent > 100 {
        return Err(Error::InvalidArgument(
            "curve step must be between 1 and 100".into(),
        ));
    }
    let net_predictions: Vec<bool> = test_rows
        .iter()
        .map(|(inst, _)| net.predict_instance(inst, schema))
        .collect();

    let mut points = Vec::new();
    let mut percent = 0;
    loop {
        let k = (percent * ordered.len() + 50) / 100;
        let predictor = PositiveRuleSet::new(ordered[..k].iter().map(|(r, _)| r.clone()));
        let mut fid = 0u64;
        let mut acc = 0u64;
        for ((inst, label), net_pred) in test_rows.iter().zip(&net_predictions) {
            let pred = predictor.matches(inst);
            if pred == *net_pred {
                fid += 1;
            }
            if pred == *label {
                acc += 1;
            }
        }
        points.push(CurvePoint {
            percent,
            rule_count: k,
            fidelity: fid as f64 / test_rows.len() as f64,
            accuracy: acc as f64 / test_rows.len() as f64,
        });
        if percent == 100 {
            break;
        }
        percent = (percent + step_percent).min(100);
    }
    Ok(points)
}

/// Fidelity restricted to test rows the network gets wrong.
#[derive(Debug, Clone, Copy)]
pub struct ErrorSetFidelity {
    pub value: f64,
    /// Set when the network makes no test errors (value reported as 1.0).
    pub no_errors: bool,
}

pub fn error_set_fidelity<C: Classifier + ?Sized>(
    model: &C,
    net: &Network,
    schema: &FeatureSchema,
    test: &Dataset,
) -> Result<ErrorSetFidelity> {
    if test.is_empty() {
        return Err(Error::EmptyInstanceSet);
    }
    let errors: Vec<&Instance> = test
        .rows()
        .iter()
        .filter(|(inst, y)| net.predict_instance(inst, schema) != *y)
        .map(|(inst, _)| inst)
        .collect();
    if errors.is_empty() {
        return Ok(ErrorSetFidelity {
            value: 1.0,
            no_errors: true,
        });
    }
    let value = fidelity(model, net, schema, errors)?;
    Ok(ErrorSetFidelity {
        value,
        no_errors: false,
    })
}

/// Number of distinct positive training instances: the cost of memorizing
/// the positive class as one rule per instance.
pub fn num_rules_memorization(train: &Dataset) -> usize {
    let mut positive: Vec<&Instance> = train
        .rows()
        .iter()
        .filter(|(_, y)| *y)
        .map(|(inst, _)| inst)
        .collect();
    positive.sort();
    positive.dedup();
    positive.len()
}

/// Per-method evaluation summary plus the dataset-level rule counts.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub fidelity: f64,
    pub accuracy: f64,
    pub error_set_fidelity: f64,
    pub error_set_empty: bool,
    pub rule_count_full: usize,
    pub rule_count_support: usize,
    pub num_rules_max: u128,
    pub num_rules_memorization: usize,
}

/// Computes every `MetricsReport` field for one model against the network
/// and the test split.
pub fn metrics_report<C: Classifier + ?Sized>(
    model: &C,
    net: &Network,
    schema: &FeatureSchema,
    train: &Dataset,
    test: &Dataset,
    rule_count_full: usize,
    rule_count_support: usize,
) -> Result<MetricsReport> {
    let fid = fidelity(model, net, schema, test.instances())?;
    let acc = accuracy(model, schema, test.rows())?;
    let esf = error_set_fidelity(model, net, schema, test)?;
    Ok(MetricsReport {
        fidelity: fid,
        accuracy: acc,
        error_set_fidelity: esf.value,
        error_set_empty: esf.no_errors,
        rule_count_full,
        rule_count_support,
        num_rules_max: schema.assignment_count(),
        num_rules_memorization: num_rules_memorization(train),
    })
}
