//! Categorical feature schema, instances and labeled datasets.
//!
//! A schema is an ordered list of categorical features, each with an ordered
//! value set. The order in the schema file is canonical: rules, one-hot
//! layouts and all lexicographic comparisons follow it.

use std::fmt;
use std::path::Path;

use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Value indices for a full or partial assignment. Inline up to 16 features.
pub(crate) type ValueVec = SmallVec<[u8; 16]>;

/// One categorical feature: a name and its ordered value set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Feature {
    pub name: String,
    pub values: Vec<String>,
}

/// Ordered categorical features defining the one-hot layout.
///
/// With `m` features where feature `i` has `n_i` values, the one-hot width is
/// `n = sum(n_i)` and feature `i` occupies the slice `[offset(i), offset(i) + n_i)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    features: Vec<Feature>,
    offsets: Vec<usize>,
    one_hot_width: usize,
}

impl FeatureSchema {
    /// Builds a schema, validating name uniqueness and value counts.
    pub fn new(features: Vec<Feature>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::InvalidArgument("schema has no features".into()));
        }
        for (i, f) in features.iter().enumerate() {
            if f.values.len() < 2 {
                return Err(Error::InvalidArgument(format!(
                    "feature `{}` has {} value(s); at least 2 required",
                    f.name,
                    f.values.len()
                )));
            }
            if f.values.len() > u8::MAX as usize {
                return Err(Error::InvalidArgument(format!(
                    "feature `{}` has {} values; at most {} supported",
                    f.name,
                    f.values.len(),
                    u8::MAX
                )));
            }
            for (a, v) in f.values.iter().enumerate() {
                if f.values[..a].contains(v) {
                    return Err(Error::InvalidArgument(format!(
                        "feature `{}` has duplicate value `{}`",
                        f.name, v
                    )));
                }
            }
            if features[..i].iter().any(|g| g.name == f.name) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate feature name `{}`",
                    f.name
                )));
            }
        }
        let mut offsets = Vec::with_capacity(features.len());
        let mut width = 0usize;
        for f in &features {
            offsets.push(width);
            width += f.values.len();
        }
        Ok(FeatureSchema {
            features,
            offsets,
            one_hot_width: width,
        })
    }

    /// Parses the line-oriented schema format: one feature per line,
    /// `name: value1, value2, ...`. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut features = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, rest) = line.split_once(':').ok_or_else(|| Error::SchemaParse {
                line: lineno + 1,
                message: "expected `name: value1, value2, ...`".into(),
            })?;
            let name = name.trim();
            if name.is_empty() {
                return Err(Error::SchemaParse {
                    line: lineno + 1,
                    message: "empty feature name".into(),
                });
            }
            let values: Vec<String> = rest
                .split(',')
                .map(|v| v.trim().to_string())
                .filter(|v| !v.is_empty())
                .collect();
            features.push(Feature {
                name: name.to_string(),
                values,
            });
        }
        Self::new(features).map_err(|e| match e {
            Error::InvalidArgument(message) => Error::SchemaParse { line: 0, message },
            other => other,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Renders the schema in the same line format `parse` accepts.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for f in &self.features {
            out.push_str(&f.name);
            out.push_str(": ");
            out.push_str(&f.values.join(", "));
            out.push('\n');
        }
        out
    }

    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    pub fn feature(&self, i: usize) -> &Feature {
        &self.features[i]
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn value_count(&self, i: usize) -> usize {
        self.features[i].values.len()
    }

    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    pub fn one_hot_width(&self) -> usize {
        self.one_hot_width
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn value_index(&self, feature: usize, value: &str) -> Option<usize> {
        self.features[feature].values.iter().position(|v| v == value)
    }

    /// Number of full assignments: the product of per-feature value counts.
    pub fn assignment_count(&self) -> u128 {
        self.features
            .iter()
            .map(|f| f.values.len() as u128)
            .product()
    }

    /// Decodes a mixed-radix index into an instance. Feature 0 is the most
    /// significant digit, so ascending indices enumerate assignments in
    /// lexicographic order.
    pub fn instance_at(&self, mut index: u128) -> Instance {
        let m = self.feature_count();
        let mut values: ValueVec = smallvec::smallvec![0u8; m];
        for i in (0..m).rev() {
            let n = self.value_count(i) as u128;
            values[i] = (index % n) as u8;
            index /= n;
        }
        Instance { values }
    }

    /// Iterates every full assignment in lexicographic order.
    pub fn assignments(&self) -> impl Iterator<Item = Instance> + '_ {
        let total = self.assignment_count();
        (0..total).map(move |i| self.instance_at(i))
    }

    pub fn contains_instance(&self, instance: &Instance) -> bool {
        instance.values.len() == self.feature_count()
            && instance
                .values
                .iter()
                .enumerate()
                .all(|(i, &v)| (v as usize) < self.value_count(i))
    }
}

/// A full assignment: one value index per feature.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Instance {
    values: ValueVec,
}

impl Instance {
    pub fn new(values: Vec<u8>, schema: &FeatureSchema) -> Result<Self> {
        let inst = Instance {
            values: ValueVec::from_vec(values),
        };
        if !schema.contains_instance(&inst) {
            return Err(Error::InvalidArgument(format!(
                "instance {:?} is not valid under the schema",
                inst.values
            )));
        }
        Ok(inst)
    }

    pub(crate) fn from_values(values: ValueVec) -> Self {
        Instance { values }
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn value(&self, feature: usize) -> usize {
        self.values[feature] as usize
    }

    /// One-hot encodes: a binary vector of length `n` with exactly one 1 per
    /// feature block, at `offset_i + value_i`.
    pub fn encode_one_hot(&self, schema: &FeatureSchema) -> Vec<f64> {
        let mut x = vec![0.0; schema.one_hot_width()];
        for (i, &v) in self.values.iter().enumerate() {
            x[schema.offset(i) + v as usize] = 1.0;
        }
        x
    }

    /// Recovers the instance from a one-hot vector (round trip of
    /// `encode_one_hot`).
    pub fn decode_one_hot(x: &[f64], schema: &FeatureSchema) -> Result<Self> {
        if x.len() != schema.one_hot_width() {
            return Err(Error::WidthMismatch {
                expected: schema.one_hot_width(),
                found: x.len(),
            });
        }
        let mut values = ValueVec::new();
        for i in 0..schema.feature_count() {
            let block = &x[schema.offset(i)..schema.offset(i) + schema.value_count(i)];
            let ones: Vec<usize> = block
                .iter()
                .enumerate()
                .filter(|(_, &b)| b != 0.0)
                .map(|(j, _)| j)
                .collect();
            if ones.len() != 1 {
                return Err(Error::InvalidArgument(format!(
                    "feature block {} has {} ones; expected exactly 1",
                    i,
                    ones.len()
                )));
            }
            values.push(ones[0] as u8);
        }
        Ok(Instance { values })
    }

    pub fn display<'a>(&'a self, schema: &'a FeatureSchema) -> InstanceDisplay<'a> {
        InstanceDisplay {
            instance: self,
            schema,
        }
    }
}

pub struct InstanceDisplay<'a> {
    instance: &'a Instance,
    schema: &'a FeatureSchema,
}

impl fmt::Display for InstanceDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, &v) in self.instance.values.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(
                f,
                "{}={}",
                self.schema.feature(i).name,
                self.schema.feature(i).values[v as usize]
            )?;
        }
        Ok(())
    }
}

/// Which side of a train/test split a dataset holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
    Full,
}

/// Labeled instances under a shared schema.
#[derive(Debug, Clone)]
pub struct Dataset {
    schema: FeatureSchema,
    rows: Vec<(Instance, bool)>,
    split: Split,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, rows: Vec<(Instance, bool)>, split: Split) -> Result<Self> {
        for (inst, _) in &rows {
            if !schema.contains_instance(inst) {
                return Err(Error::InvalidArgument(
                    "dataset row is not valid under the schema".into(),
                ));
            }
        }
        Ok(Dataset {
            schema,
            rows,
            split,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn rows(&self) -> &[(Instance, bool)] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn instances(&self) -> impl Iterator<Item = &Instance> {
        self.rows.iter().map(|(inst, _)| inst)
    }

    /// Splits into (train, test) by a seeded shuffle. `test_fraction` of the
    /// rows (rounded) go to the test side.
    pub fn split_train_test(&self, test_fraction: f64, seed: u64) -> (Dataset, Dataset) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;

        let mut indices: Vec<usize> = (0..self.rows.len()).collect();
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        indices.shuffle(&mut rng);
        let test_len = ((self.rows.len() as f64) * test_fraction).round() as usize;
        let (test_idx, train_idx) = indices.split_at(test_len.min(indices.len()));

        let collect = |idx: &[usize], split: Split| {
            let mut rows: Vec<(Instance, bool)> = idx.iter().map(|&i| self.rows[i].clone()).collect();
            // Keep a deterministic row order independent of shuffle internals.
            rows.sort();
            Dataset {
                schema: self.schema.clone(),
                rows,
                split,
            }
        };
        (
            collect(train_idx, Split::Train),
            collect(test_idx, Split::Test),
        )
    }
}

/// How to read labels from a CSV column.
#[derive(Debug, Clone)]
pub struct LabelSpec {
    pub column: String,
    /// When set, label 1 iff the cell equals this string; otherwise cells
    /// must literally be `0` or `1`.
    pub positive: Option<String>,
}

impl LabelSpec {
    pub fn binary(column: impl Into<String>) -> Self {
        LabelSpec {
            column: column.into(),
            positive: None,
        }
    }

    pub fn with_positive(column: impl Into<String>, positive: impl Into<String>) -> Self {
        LabelSpec {
            column: column.into(),
            positive: Some(positive.into()),
        }
    }

    fn parse(&self, row: usize, cell: &str) -> Result<bool> {
        match &self.positive {
            Some(p) => Ok(cell == p),
            None => match cell.trim() {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(Error::LabelParse {
                    row,
                    value: other.to_string(),
                }),
            },
        }
    }
}

/// Loads a CSV with a header row into a dataset. Every schema feature must
/// appear as a column; unknown categorical values are hard errors naming the
/// row and column.
pub fn load_csv(
    path: impl AsRef<Path>,
    schema: &FeatureSchema,
    label: &LabelSpec,
) -> Result<(Dataset, Vec<String>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (ds, warnings) = parse_csv(&text, schema, label)?;
    Ok((ds, warnings))
}

/// CSV parsing behind `load_csv`, separated for tests.
pub fn parse_csv(
    text: &str,
    schema: &FeatureSchema,
    label: &LabelSpec,
) -> Result<(Dataset, Vec<String>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| Error::CsvParse {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let header_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                name: name.to_string(),
            })
    };

    let feature_cols: Vec<usize> = schema
        .features()
        .iter()
        .map(|f| header_index(&f.name))
        .collect::<Result<_>>()?;
    let label_col = header_index(&label.column)?;

    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // Row numbers are 1-based data rows (the header is row 0).
        let row_no = i + 1;
        let record = record.map_err(|e| Error::CsvParse {
            row: row_no,
            message: e.to_string(),
        })?;
        let mut values = ValueVec::new();
        for (fi, &col) in feature_cols.iter().enumerate() {
            let cell = record.get(col).unwrap_or("");
            let vi = schema
                .value_index(fi, cell)
                .ok_or_else(|| Error::UnknownValue {
                    row: row_no,
                    column: schema.feature(fi).name.clone(),
                    value: cell.to_string(),
                })?;
            values.push(vi as u8);
        }
        let cell = record.get(label_col).unwrap_or("");
        let y = label.parse(row_no, cell)?;
        rows.push((Instance::from_values(values), y));
    }
    if rows.is_empty() {
        warnings.push("csv contains a header but no data rows".to_string());
    }
    let ds = Dataset::new(schema.clone(), rows, Split::Full)?;
    Ok((ds, warnings))
}
