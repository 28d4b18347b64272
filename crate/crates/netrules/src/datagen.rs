//! Built-in benchmark generators.
//!
//! Four seeded synthetic datasets over the standard UCI-shaped categorical
//! schemas (category counts [3,3,4,3,4,4], [3,3,3,5,2,3,4,4],
//! [3,2,4,4,3,4,2,2,4] and [3,3,3,3,3,14,2,8,2]; assignment spaces 1728,
//! 12960, 18432 and 108864). Cars and nursery enumerate their full assignment
//! space with deterministic rule-based labels, the way those benchmarks were
//! originally constructed; contraception and adult sample from concentrated
//! per-feature marginals and label rows by a noisy additive score. Everything
//! is a pure function of the seed.

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha20Rng;

use crate::schema::{Dataset, Feature, FeatureSchema, Instance, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    Cars,
    Nursery,
    Contraception,
    AdultIncome,
}

impl Benchmark {
    pub fn all() -> [Benchmark; 4] {
        [
            Benchmark::Cars,
            Benchmark::Nursery,
            Benchmark::Contraception,
            Benchmark::AdultIncome,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Benchmark::Cars => "cars",
            Benchmark::Nursery => "nursery",
            Benchmark::Contraception => "contraception",
            Benchmark::AdultIncome => "adult",
        }
    }

    pub fn parse(name: &str) -> Option<Benchmark> {
        Benchmark::all().into_iter().find(|b| b.name() == name)
    }

    pub fn schema(&self) -> FeatureSchema {
        let features: Vec<(&str, Vec<&str>)> = match self {
            Benchmark::Cars => vec![
                ("price", vec!["low", "med", "high"]),
                ("maint", vec!["low", "med", "high"]),
                ("doors", vec!["two", "three", "four", "five"]),
                ("persons", vec!["two", "four", "more"]),
                ("boot", vec!["none", "small", "med", "big"]),
                ("safety", vec!["none", "low", "med", "high"]),
            ],
            Benchmark::Nursery => vec![
                ("parents", vec!["usual", "pretentious", "great_pret"]),
                ("housing", vec!["convenient", "less_conv", "critical"]),
                ("social", vec!["nonprob", "slightly_prob", "problematic"]),
                (
                    "has_nurs",
                    vec!["proper", "less_proper", "improper", "critical", "very_crit"],
                ),
                ("finance", vec!["convenient", "inconv"]),
                ("health", vec!["recommended", "priority", "not_recom"]),
                ("form", vec!["complete", "completed", "incomplete", "foster"]),
                ("children", vec!["one", "two", "three", "more"]),
            ],
            Benchmark::Contraception => vec![
                ("wife_age", vec!["young", "middle", "old"]),
                ("wife_religion", vec!["islam", "other"]),
                ("wife_education", vec!["low", "mid_low", "mid_high", "high"]),
                (
                    "husband_education",
                    vec!["low", "mid_low", "mid_high", "high"],
                ),
                ("children", vec!["few", "some", "many"]),
                (
                    "husband_occupation",
                    vec!["prof", "sales", "service", "manual"],
                ),
                ("wife_working", vec!["yes", "no"]),
                ("media_exposure", vec!["good", "poor"]),
                ("living_standard", vec!["low", "mid_low", "mid_high", "high"]),
            ],
            Benchmark::AdultIncome => vec![
                ("age", vec!["young", "middle", "senior"]),
                ("capital_gain", vec!["none", "low", "high"]),
                ("capital_loss", vec!["none", "low", "high"]),
                (
                    "hours_per_week",
                    vec!["part_time", "full_time", "over_time"],
                ),
                ("marital_status", vec!["single", "married", "separated"]),
                (
                    "occupation",
                    vec![
                        "adm_clerical",
                        "armed_forces",
                        "craft_repair",
                        "exec_managerial",
                        "farming_fishing",
                        "handlers_cleaners",
                        "machine_op_inspct",
                        "other_service",
                        "priv_house_serv",
                        "prof_specialty",
                        "protective_serv",
                        "sales",
                        "tech_support",
                        "transport_moving",
                    ],
                ),
                ("sex", vec!["female", "male"]),
                (
                    "education",
                    vec![
                        "dropout",
                        "hs_grad",
                        "some_college",
                        "assoc",
                        "bachelors",
                        "masters",
                        "professional",
                        "doctorate",
                    ],
                ),
                ("native_country", vec!["united_states", "other"]),
            ],
        };
        FeatureSchema::new(
            features
                .into_iter()
                .map(|(name, values)| Feature {
                    name: name.to_string(),
                    values: values.into_iter().map(str::to_string).collect(),
                })
                .collect(),
        )
        .expect("built-in schema is valid")
    }

    /// Rows generated for the sampled benchmarks (the enumerated ones always
    /// cover their full space).
    pub fn default_rows(&self) -> usize {
        match self {
            Benchmark::Cars => 1728,
            Benchmark::Nursery => 12960,
            Benchmark::Contraception => 6500,
            Benchmark::AdultIncome => 26000,
        }
    }

    /// Generates the labeled dataset. Deterministic in the seed.
    pub fn generate(&self, seed: u64) -> Dataset {
        let schema = self.schema();
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ hash_name(self.name()));
        let rows = match self {
            Benchmark::Cars => enumerate_and_label(&schema, &mut rng, cars_label),
            Benchmark::Nursery => enumerate_and_label(&schema, &mut rng, nursery_label),
            Benchmark::Contraception => sample_and_score(
                &schema,
                &mut rng,
                self.default_rows(),
                &CONTRACEPTION_MARGINALS,
                &CONTRACEPTION_SCORES,
                8.0,
                0.75,
                0.015,
            ),
            Benchmark::AdultIncome => sample_and_score(
                &schema,
                &mut rng,
                self.default_rows(),
                &ADULT_MARGINALS,
                &ADULT_SCORES,
                12.0,
                1.5,
                0.02,
            ),
        };
        Dataset::new(schema, rows, Split::Full).expect("generated rows are valid")
    }
}

fn hash_name(name: &str) -> u64 {
    name.bytes().fold(0xcbf29ce484222325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x100000001b3)
    })
}

fn enumerate_and_label(
    schema: &FeatureSchema,
    rng: &mut ChaCha20Rng,
    label: fn(&[u8]) -> bool,
) -> Vec<(Instance, bool)> {
    let mut rows: Vec<(Instance, bool)> = schema
        .assignments()
        .map(|inst| {
            let y = label(inst.values());
            (inst, y)
        })
        .collect();
    rows.shuffle(rng);
    rows
}

/// Acceptability of a car from price, maintenance, capacity and safety.
/// Deterministic hierarchical rule in the style of the original benchmark.
fn cars_label(v: &[u8]) -> bool {
    let (price, maint, doors, persons, boot, safety) =
        (v[0], v[1], v[2], v[3], v[4], v[5]);
    if safety == 0 || persons == 0 {
        return false;
    }
    let score = [4, 2, 0][price as usize]
        + [4, 2, 0][maint as usize]
        + [0, 2, 2, 2][doors as usize]
        + [0, 2, 2][persons as usize]
        + [0, 2, 2, 4][boot as usize]
        + [0, 2, 4, 6][safety as usize];
    score >= 12
}

/// Nursery admission from parental situation, housing and health.
fn nursery_label(v: &[u8]) -> bool {
    let (parents, housing, social, has_nurs, finance, health, form, children) =
        (v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]);
    if health == 2 {
        return false;
    }
    let score = [4, 2, 0][parents as usize]
        + [2, 2, 0][housing as usize]
        + [2, 0, 0][social as usize]
        + [6, 4, 2, 2, 0][has_nurs as usize]
        + [2, 0][finance as usize]
        + [4, 0][health as usize]
        + [2, 2, 0, 0][form as usize]
        + [2, 2, 0, 0][children as usize];
    score >= 14
}

// Concentrated marginals: the realized distribution has far less entropy
// than the full product space, the way survey data does.
const CONTRACEPTION_MARGINALS: [&[f64]; 9] = [
    &[0.55, 0.35, 0.10],
    &[0.92, 0.08],
    &[0.55, 0.25, 0.12, 0.08],
    &[0.60, 0.25, 0.10, 0.05],
    &[0.50, 0.40, 0.10],
    &[0.65, 0.20, 0.10, 0.05],
    &[0.85, 0.15],
    &[0.95, 0.05],
    &[0.55, 0.25, 0.12, 0.08],
];

// Signal concentrated on the early features: the learned boundary then
// resolves on short prefixes, keeping extracted rules broad.
const CONTRACEPTION_SCORES: [&[f64]; 9] = [
    &[0.0, 3.0, 1.0],
    &[1.0, 0.0],
    &[0.0, 2.0, 4.0, 6.0],
    &[0.0, 0.0, 1.0, 1.0],
    &[0.0, 2.0, 1.0],
    &[0.0, 0.0, 0.0, 1.0],
    &[0.0, 0.0],
    &[2.0, 0.0],
    &[0.0, 0.0, 0.0, 1.0],
];

const ADULT_MARGINALS: [&[f64]; 9] = [
    &[0.35, 0.45, 0.20],
    &[0.88, 0.08, 0.04],
    &[0.92, 0.05, 0.03],
    &[0.15, 0.65, 0.20],
    &[0.32, 0.55, 0.13],
    &[
        0.30, 0.01, 0.15, 0.12, 0.02, 0.03, 0.05, 0.08, 0.01, 0.10, 0.02, 0.06, 0.03, 0.02,
    ],
    &[0.33, 0.67],
    &[0.10, 0.35, 0.25, 0.08, 0.14, 0.05, 0.02, 0.01],
    &[0.92, 0.08],
];

const ADULT_SCORES: [&[f64]; 9] = [
    &[0.0, 3.0, 1.5],
    &[0.0, 3.0, 5.0],
    &[0.0, 1.0, 2.0],
    &[0.0, 2.5, 3.5],
    &[0.0, 5.0, 1.0],
    &[
        0.5, 0.5, 0.5, 1.5, 0.0, 0.0, 0.5, 0.0, 0.0, 1.5, 0.5, 1.0, 1.0, 0.5,
    ],
    &[0.0, 0.5],
    &[0.0, 0.5, 1.0, 1.0, 1.5, 2.0, 2.5, 2.5],
    &[0.5, 0.0],
];

/// Samples rows from independent per-feature marginals and labels them by a
/// thresholded additive score with uniform noise and a small label flip.
#[allow(clippy::too_many_arguments)]
fn sample_and_score(
    schema: &FeatureSchema,
    rng: &mut ChaCha20Rng,
    rows: usize,
    marginals: &[&[f64]],
    scores: &[&[f64]],
    threshold: f64,
    noise: f64,
    flip: f64,
) -> Vec<(Instance, bool)> {
    let samplers: Vec<WeightedIndex<f64>> = marginals
        .iter()
        .map(|w| WeightedIndex::new(w.iter().copied()).expect("valid marginals"))
        .collect();
    (0..rows)
        .map(|_| {
            let values: Vec<u8> = samplers.iter().map(|s| s.sample(rng) as u8).collect();
            let score: f64 = values
                .iter()
                .enumerate()
                .map(|(i, &v)| scores[i][v as usize])
                .sum();
            let mut label = score + rng.gen_range(-noise..noise) >= threshold;
            if rng.gen_bool(flip) {
                label = !label;
            }
            (
                Instance::new(values, schema).expect("sampled values are in range"),
                label,
            )
        })
        .collect()
}

/// Renders a dataset as CSV with the schema's feature columns plus a 0/1
/// label column.
pub fn render_csv(dataset: &Dataset, label_column: &str) -> String {
    let schema = dataset.schema();
    let mut out = String::new();
    let header: Vec<&str> = schema
        .features()
        .iter()
        .map(|f| f.name.as_str())
        .chain(std::iter::once(label_column))
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for (inst, y) in dataset.rows() {
        let mut cells: Vec<&str> = inst
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| schema.feature(i).values[v as usize].as_str())
            .collect();
        cells.push(if *y { "1" } else { "0" });
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}
