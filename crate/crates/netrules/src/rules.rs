//! Rules, linear behaviors and prefix-free covering rule lists.
//!
//! A rule assigns values to the first `k` features in the canonical schema
//! order, so it is stored as a dense prefix of value indices. This makes
//! prefix tests O(1)-per-term, keeps lexicographic order equal to derived
//! slice order, and lets conjunction reduce to a prefix check.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{Dataset, FeatureSchema, Instance, ValueVec};

/// One `feature = value` condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Term {
    pub feature: usize,
    pub value: usize,
}

/// An ordered prefix rule: term `t` assigns feature `t`. The empty rule
/// matches every instance.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Rule {
    values: ValueVec,
}

impl Rule {
    pub fn empty() -> Self {
        Rule::default()
    }

    /// Builds a rule from the value indices of its prefix.
    pub fn from_values(values: &[u8]) -> Self {
        Rule {
            values: ValueVec::from_slice(values),
        }
    }

    pub(crate) fn from_value_vec(values: ValueVec) -> Self {
        Rule { values }
    }

    /// Convenience constructor from `(feature_name, value_name)` pairs, which
    /// must assign features 0..k in schema order.
    pub fn from_named_terms(terms: &[(&str, &str)], schema: &FeatureSchema) -> Result<Self> {
        let mut values = ValueVec::new();
        for (i, (fname, vname)) in terms.iter().enumerate() {
            let fi = schema
                .feature_index(fname)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown feature `{fname}`")))?;
            if fi != i {
                return Err(Error::InvalidArgument(format!(
                    "term {} assigns feature `{fname}` (index {fi}); rules assign features in schema order without gaps",
                    i
                )));
            }
            let vi = schema
                .value_index(fi, vname)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown value `{vname}` for `{fname}`")))?;
            values.push(vi as u8);
        }
        Ok(Rule { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn terms(&self) -> impl Iterator<Item = Term> + '_ {
        self.values.iter().enumerate().map(|(feature, &v)| Term {
            feature,
            value: v as usize,
        })
    }

    /// True iff every term agrees with the instance.
    pub fn matches(&self, instance: &Instance) -> bool {
        self.values.as_slice() == &instance.values()[..self.values.len().min(instance.values().len())]
            && self.values.len() <= instance.values().len()
    }

    pub fn is_prefix_of(&self, other: &Rule) -> bool {
        self.values.len() <= other.values.len()
            && self.values.as_slice() == &other.values[..self.values.len()]
    }

    /// Conjunction of two prefix rules: the longer rule when one is a prefix
    /// of the other, `None` otherwise.
    pub fn conjoin(&self, other: &Rule) -> Option<Rule> {
        if self.is_prefix_of(other) {
            Some(other.clone())
        } else if other.is_prefix_of(self) {
            Some(self.clone())
        } else {
            None
        }
    }

    /// Extends this rule with a suffix assigning the next features.
    pub(crate) fn extend(&self, suffix: &[u8]) -> Rule {
        let mut values = self.values.clone();
        values.extend_from_slice(suffix);
        Rule { values }
    }

    /// Number of full assignments extending this rule.
    pub fn region_size(&self, schema: &FeatureSchema) -> u128 {
        (self.values.len()..schema.feature_count())
            .map(|i| schema.value_count(i) as u128)
            .product()
    }

    pub fn display<'a>(&'a self, schema: &'a FeatureSchema) -> RuleDisplay<'a> {
        RuleDisplay { rule: self, schema }
    }
}

pub struct RuleDisplay<'a> {
    rule: &'a Rule,
    schema: &'a FeatureSchema,
}

impl fmt::Display for RuleDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.rule.is_empty() {
            return write!(f, "TRUE");
        }
        for (i, term) in self.rule.terms().enumerate() {
            if i > 0 {
                write!(f, " AND ")?;
            }
            write!(
                f,
                "{}={}",
                self.schema.feature(term.feature).name,
                self.schema.feature(term.feature).values[term.value]
            )?;
        }
        Ok(())
    }
}

/// A linear function of the one-hot input: `w . x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Behavior {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Behavior {
    pub fn new(weights: Vec<f64>, bias: f64) -> Self {
        Behavior { weights, bias }
    }

    pub fn zero(width: usize) -> Self {
        Behavior {
            weights: vec![0.0; width],
            bias: 0.0,
        }
    }

    pub fn width(&self) -> usize {
        self.weights.len()
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }

    /// `w . x + b` over a one-hot vector, summed left to right.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::WidthMismatch {
                expected: self.weights.len(),
                found: x.len(),
            });
        }
        let mut acc = 0.0;
        for (w, xi) in self.weights.iter().zip(x) {
            acc += w * xi;
        }
        Ok(acc + self.bias)
    }

    /// Same value as `evaluate` on the instance's one-hot encoding: only the
    /// hot coordinates contribute, accumulated in feature order.
    pub fn evaluate_instance(&self, instance: &Instance, schema: &FeatureSchema) -> f64 {
        let mut acc = 0.0;
        for (i, &v) in instance.values().iter().enumerate() {
            acc += self.weights[schema.offset(i) + v as usize];
        }
        acc + self.bias
    }
}

/// An entry of a rule list: a rule plus its payload (a linear behavior for
/// hidden neurons, a class for the output list).
#[derive(Debug, Clone, PartialEq)]
pub struct RuleEntry<A> {
    pub rule: Rule,
    pub payload: A,
}

/// A prefix-free, space-covering list of rules sorted lexicographically by
/// term sequence. Every full instance matches exactly one entry.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleList<A> {
    entries: Vec<RuleEntry<A>>,
}

/// Rule list annotating each region with the neuron's linear behavior there.
pub type NeuronRuleList = RuleList<Arc<Behavior>>;

/// Rule list annotating each region with the predicted class.
pub type OutputRuleList = RuleList<bool>;

impl<A> RuleList<A> {
    /// Sorts the entries and validates the partition invariants.
    pub fn new(mut entries: Vec<RuleEntry<A>>, schema: &FeatureSchema) -> Result<Self> {
        entries.sort_by(|a, b| a.rule.cmp(&b.rule));
        let list = RuleList { entries };
        list.validate_partition(schema)?;
        Ok(list)
    }

    /// Builds from entries already in sorted order. Callers uphold the
    /// partition invariants; violations surface in `validate_partition` or
    /// as loud lookup failures.
    pub(crate) fn from_sorted(entries: Vec<RuleEntry<A>>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].rule < w[1].rule));
        RuleList { entries }
    }

    pub fn entries(&self) -> &[RuleEntry<A>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &RuleEntry<A>> {
        self.entries.iter()
    }

    /// Checks the invariants: sorted, prefix-free and covering (region sizes
    /// sum to the full assignment count). For a sorted list, prefix
    /// violations always occur between consecutive entries, and prefix-free
    /// rules are pairwise disjoint, so the size sum certifies exact cover.
    pub fn validate_partition(&self, schema: &FeatureSchema) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::InvariantViolation("rule list is empty".into()));
        }
        let mut total: u128 = 0;
        for (i, e) in self.entries.iter().enumerate() {
            if e.rule.len() > schema.feature_count()
                || e.rule
                    .terms()
                    .any(|t| t.value >= schema.value_count(t.feature))
            {
                return Err(Error::InvariantViolation(format!(
                    "entry {i} is not valid under the schema"
                )));
            }
            if i + 1 < self.entries.len() {
                let next = &self.entries[i + 1];
                if e.rule >= next.rule {
                    return Err(Error::InvariantViolation(format!(
                        "entries {i} and {} out of order or duplicated",
                        i + 1
                    )));
                }
                if e.rule.is_prefix_of(&next.rule) {
                    return Err(Error::InvariantViolation(format!(
                        "entry {i} is a prefix of entry {}",
                        i + 1
                    )));
                }
            }
            total += e.rule.region_size(schema);
        }
        if total != schema.assignment_count() {
            return Err(Error::InvariantViolation(format!(
                "rules cover {total} of {} assignments",
                schema.assignment_count()
            )));
        }
        Ok(())
    }

    /// Index of the unique entry matching the instance. Binary search for the
    /// greatest rule <= the instance's full assignment; on a prefix-free list
    /// that is the only possible match.
    ///
    /// Panics if no entry matches: that means the partition invariant is
    /// broken and any answer would be wrong.
    pub fn lookup_index(&self, instance: &Instance) -> usize {
        let key = instance.values();
        let idx = self
            .entries
            .partition_point(|e| e.rule.values.as_slice() <= key);
        if idx > 0 {
            let candidate = &self.entries[idx - 1];
            if candidate.rule.values.as_slice() == &key[..candidate.rule.len().min(key.len())]
                && candidate.rule.len() <= key.len()
            {
                return idx - 1;
            }
        }
        panic!(
            "rule list invariant violated: no rule matches instance {:?}",
            key
        );
    }

    /// The unique entry matching the instance.
    pub fn lookup(&self, instance: &Instance) -> &RuleEntry<A> {
        &self.entries[self.lookup_index(instance)]
    }

    pub fn map_payload<B>(self, f: impl FnMut(A) -> B) -> RuleList<B> {
        let mut f = f;
        RuleList {
            entries: self
                .entries
                .into_iter()
                .map(|e| RuleEntry {
                    rule: e.rule,
                    payload: f(e.payload),
                })
                .collect(),
        }
    }
}

impl OutputRuleList {
    /// Class for an instance (panics on a broken partition, like `lookup`).
    pub fn classify_instance(&self, instance: &Instance) -> bool {
        self.lookup(instance).payload
    }

    pub fn positive_count(&self) -> usize {
        self.entries.iter().filter(|e| e.payload).count()
    }
}

/// Number of dataset rows matched by the rule.
pub fn support(rule: &Rule, dataset: &Dataset) -> usize {
    dataset
        .rows()
        .iter()
        .filter(|(inst, _)| rule.matches(inst))
        .count()
}

/// Per-entry supports for a full list, computed by routing each row through
/// `lookup` (each row matches exactly one entry).
pub fn list_supports<A>(list: &RuleList<A>, dataset: &Dataset) -> Vec<u64> {
    let mut counts = vec![0u64; list.len()];
    for (inst, _) in dataset.rows() {
        counts[list.lookup_index(inst)] += 1;
    }
    counts
}

// ---------------------------------------------------------------------------
// Rule list files: a human-readable text form and a JSON mirror for reload.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct RuleListFile {
    rules: Vec<RuleFileEntry>,
}

#[derive(Serialize, Deserialize)]
struct RuleFileEntry {
    terms: Vec<(String, String)>,
    class: u8,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    support: Option<u64>,
}

/// Renders `f1=v AND f2=w ... => class (support=S)` lines.
pub fn render_rule_list_text(
    list: &OutputRuleList,
    supports: Option<&[u64]>,
    schema: &FeatureSchema,
) -> String {
    let mut out = String::new();
    for (i, e) in list.iter().enumerate() {
        let class = if e.payload { 1 } else { 0 };
        match supports {
            Some(s) => out.push_str(&format!(
                "{} => {} (support={})\n",
                e.rule.display(schema),
                class,
                s[i]
            )),
            None => out.push_str(&format!("{} => {}\n", e.rule.display(schema), class)),
        }
    }
    out
}

pub fn save_rule_list_json(
    path: impl AsRef<Path>,
    list: &OutputRuleList,
    supports: Option<&[u64]>,
    schema: &FeatureSchema,
) -> Result<()> {
    let path = path.as_ref();
    let file = RuleListFile {
        rules: list
            .iter()
            .enumerate()
            .map(|(i, e)| RuleFileEntry {
                terms: e
                    .rule
                    .terms()
                    .map(|t| {
                        (
                            schema.feature(t.feature).name.clone(),
                            schema.feature(t.feature).values[t.value].clone(),
                        )
                    })
                    .collect(),
                class: if e.payload { 1 } else { 0 },
                support: supports.map(|s| s[i]),
            })
            .collect(),
    };
    let text =
        serde_json::to_string_pretty(&file).map_err(|e| Error::MalformedRules(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reloads a JSON rule list and re-validates the partition invariants under
/// the given schema.
pub fn load_rule_list_json(
    path: impl AsRef<Path>,
    schema: &FeatureSchema,
) -> Result<(OutputRuleList, Option<Vec<u64>>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: RuleListFile =
        serde_json::from_str(&text).map_err(|e| Error::MalformedRules(e.to_string()))?;
    let mut entries = Vec::with_capacity(file.rules.len());
    let mut supports = Vec::with_capacity(file.rules.len());
    for (i, r) in file.rules.iter().enumerate() {
        let terms: Vec<(&str, &str)> = r
            .terms
            .iter()
            .map(|(f, v)| (f.as_str(), v.as_str()))
            .collect();
        let rule = Rule::from_named_terms(&terms, schema)
            .map_err(|e| Error::MalformedRules(format!("rule {i}: {e}")))?;
        let class = match r.class {
            0 => false,
            1 => true,
            other => {
                return Err(Error::MalformedRules(format!(
                    "rule {i}: class {other} is not 0 or 1"
                )))
            }
        };
        entries.push(RuleEntry {
            rule,
            payload: class,
        });
        supports.push(r.support);
    }
    let list = RuleList::new(entries, schema)?;
    let supports = if supports.iter().all(|s| s.is_some()) {
        Some(supports.into_iter().map(|s| s.unwrap()).collect())
    } else {
        None
    };
    Ok((list, supports))
}
