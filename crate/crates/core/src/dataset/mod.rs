//! Labeled tabular data: attribute schemas, examples, class counts, and the
//! entropy / information-gain primitives that drive tree induction.

mod csv_io;
mod info;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use csv_io::{
    load_dataset, load_dataset_path, write_dataset, AttributeConfig, ConfigKind, SchemaConfig,
};
pub use info::{
    best_split, best_split_among, candidate_thresholds, entropy, information_gain, Split,
    SplitChoice,
};

/// Token used for a missing cell in dataset files and for the missing branch in trees.
pub const MISSING_TOKEN: &str = "?";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("row {row}, column {column} ({attribute}): {reason}")]
    Cell {
        row: usize,
        column: usize,
        attribute: String,
        reason: String,
    },
    #[error("row {row}: expected {expected} columns, found {found}")]
    RowWidth {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("duplicate attribute name `{0}`")]
    DuplicateAttribute(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("header is missing column `{0}`")]
    MissingColumn(String),
    #[error("header has unexpected column `{0}`")]
    UnexpectedColumn(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("label `{0}` is not one of the declared classes")]
    UnknownLabel(String),
    #[error("dataset declares no classes")]
    NoClasses,
    #[error("example has {found} values, schema has {expected} attributes")]
    ExampleWidth { expected: usize, found: usize },
    #[error("value for `{attribute}` does not match its schema: {reason}")]
    InvalidValue { attribute: String, reason: String },
    #[error("a threshold split was requested for categorical attribute `{0}`")]
    ThresholdOnCategorical(String),
    #[error("numeric attribute `{0}` needs a threshold split")]
    CategoricalOnNumeric(String),
    #[error("the example view is empty")]
    EmptyView,
    #[error("no attributes are available to split on")]
    NoAttributes,
    #[error("no informative split")]
    NoInformativeSplit,
    #[error("malformed input: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttributeKind {
    Categorical { values: Vec<String> },
    Numeric {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        unit: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub name: String,
    #[serde(flatten)]
    pub kind: AttributeKind,
    pub question: String,
}

impl AttributeSchema {
    pub fn categorical<S: Into<String>>(name: &str, values: &[&str], question: S) -> Self {
        Self {
            name: name.to_string(),
            kind: AttributeKind::Categorical {
                values: values.iter().map(|v| v.to_string()).collect(),
            },
            question: question.into(),
        }
    }

    pub fn numeric<S: Into<String>>(name: &str, unit: Option<&str>, question: S) -> Self {
        Self {
            name: name.to_string(),
            kind: AttributeKind::Numeric {
                unit: unit.map(str::to_string),
            },
            question: question.into(),
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self.kind, AttributeKind::Numeric { .. })
    }

    /// Checks a value against this attribute's kind and allowed categories.
    pub fn validate(&self, value: &AttributeValue) -> Result<(), DatasetError> {
        let bad = |reason: String| DatasetError::InvalidValue {
            attribute: self.name.clone(),
            reason,
        };
        match (&self.kind, value) {
            (_, AttributeValue::Missing) => Ok(()),
            (AttributeKind::Categorical { values }, AttributeValue::Category(c)) => {
                if values.iter().any(|v| v == c) {
                    Ok(())
                } else {
                    Err(bad(format!("`{c}` is not one of {values:?}")))
                }
            }
            (AttributeKind::Numeric { .. }, AttributeValue::Number(x)) => {
                if x.is_finite() {
                    Ok(())
                } else {
                    Err(bad(format!("{x} is not a finite number")))
                }
            }
            (AttributeKind::Categorical { .. }, AttributeValue::Number(x)) => {
                Err(bad(format!("expected a category, got number {x}")))
            }
            (AttributeKind::Numeric { .. }, AttributeValue::Category(c)) => {
                Err(bad(format!("expected a number, got `{c}`")))
            }
        }
    }

    /// Parses a text cell ("?" is missing).
    pub fn parse_value(&self, text: &str) -> Result<AttributeValue, String> {
        let text = text.trim();
        if text == MISSING_TOKEN {
            return Ok(AttributeValue::Missing);
        }
        match &self.kind {
            AttributeKind::Categorical { values } => {
                if values.iter().any(|v| v == text) {
                    Ok(AttributeValue::Category(text.to_string()))
                } else {
                    Err(format!("unknown category `{text}`, expected one of {values:?}"))
                }
            }
            AttributeKind::Numeric { .. } => {
                let cleaned: String = text.chars().filter(|c| *c != '_').collect();
                match cleaned.parse::<f64>() {
                    Ok(x) if x.is_finite() => Ok(AttributeValue::Number(x)),
                    _ => Err(format!("`{text}` is not a number")),
                }
            }
        }
    }
}

/// One cell of an example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AttributeValue {
    Category(String),
    Number(f64),
    #[default]
    Missing,
}

impl AttributeValue {
    pub fn category(s: &str) -> Self {
        Self::Category(s.to_string())
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, Self::Missing)
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Self::Number(x) => Some(*x),
            _ => None,
        }
    }
}

impl fmt::Display for AttributeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Category(c) => f.write_str(c),
            Self::Number(x) => write!(f, "{x}"),
            Self::Missing => f.write_str(MISSING_TOKEN),
        }
    }
}

/// Ordered attribute list with unique names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<AttributeSchema>", into = "Vec<AttributeSchema>")]
pub struct Schema {
    attributes: Vec<AttributeSchema>,
}

impl Schema {
    pub fn new(attributes: Vec<AttributeSchema>) -> Result<Self, DatasetError> {
        let mut seen = BTreeSet::new();
        for a in &attributes {
            if !seen.insert(a.name.as_str()) {
                return Err(DatasetError::DuplicateAttribute(a.name.clone()));
            }
            if a.name.trim().is_empty() {
                return Err(DatasetError::InvalidSchema("empty attribute name".into()));
            }
            if a.question.trim().is_empty() {
                return Err(DatasetError::InvalidSchema(format!(
                    "attribute `{}` has no question text",
                    a.name
                )));
            }
            if let AttributeKind::Categorical { values } = &a.kind {
                if values.is_empty() {
                    return Err(DatasetError::InvalidSchema(format!(
                        "categorical attribute `{}` has no values",
                        a.name
                    )));
                }
                let distinct: BTreeSet<_> = values.iter().collect();
                if distinct.len() != values.len() {
                    return Err(DatasetError::InvalidSchema(format!(
                        "categorical attribute `{}` repeats a value",
                        a.name
                    )));
                }
                if values.iter().any(|v| v == MISSING_TOKEN) {
                    return Err(DatasetError::InvalidSchema(format!(
                        "`{MISSING_TOKEN}` is reserved for missing values (attribute `{}`)",
                        a.name
                    )));
                }
            }
        }
        Ok(Self { attributes })
    }

    pub fn attributes(&self) -> &[AttributeSchema] {
        &self.attributes
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn get(&self, index: usize) -> &AttributeSchema {
        &self.attributes[index]
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn lookup(&self, name: &str) -> Result<(usize, &AttributeSchema), DatasetError> {
        self.position(name)
            .map(|i| (i, &self.attributes[i]))
            .ok_or_else(|| DatasetError::UnknownAttribute(name.to_string()))
    }

    /// Validates a full row of values in schema order.
    pub fn validate_values(&self, values: &[AttributeValue]) -> Result<(), DatasetError> {
        if values.len() != self.len() {
            return Err(DatasetError::ExampleWidth {
                expected: self.len(),
                found: values.len(),
            });
        }
        for (a, v) in self.attributes.iter().zip(values) {
            a.validate(v)?;
        }
        Ok(())
    }
}

impl TryFrom<Vec<AttributeSchema>> for Schema {
    type Error = DatasetError;
    fn try_from(v: Vec<AttributeSchema>) -> Result<Self, Self::Error> {
        Schema::new(v)
    }
}

impl From<Schema> for Vec<AttributeSchema> {
    fn from(s: Schema) -> Self {
        s.attributes
    }
}

/// A labeled case. `values` is aligned with the schema; missing is an explicit entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub values: Vec<AttributeValue>,
    pub label: String,
}

/// Per-class example counts, aligned with a dataset's class list.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<u64>", into = "Vec<u64>")]
pub struct ClassCounts {
    counts: Vec<u64>,
    total: u64,
}

impl ClassCounts {
    pub fn zeros(n_classes: usize) -> Self {
        Self {
            counts: vec![0; n_classes],
            total: 0,
        }
    }

    pub fn from_counts(counts: Vec<u64>) -> Self {
        let total = counts.iter().sum();
        Self { counts, total }
    }

    pub fn add(&mut self, class: usize) {
        self.add_n(class, 1);
    }

    pub fn add_n(&mut self, class: usize, n: u64) {
        self.counts[class] += n;
        self.total += n;
    }

    pub fn remove(&mut self, class: usize) {
        self.counts[class] -= 1;
        self.total -= 1;
    }

    pub fn merge(&mut self, other: &ClassCounts) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn get(&self, class: usize) -> u64 {
        self.counts[class]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    /// Number of classes with a nonzero count.
    pub fn support(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn is_pure(&self) -> bool {
        self.support() <= 1
    }

    /// Index of the largest count; ties go to the lowest index. Classes are kept in
    /// lexicographic order, so this is also the lexicographically smallest label.
    pub fn majority(&self) -> usize {
        let mut best = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = i;
            }
        }
        best
    }
}

impl From<Vec<u64>> for ClassCounts {
    fn from(v: Vec<u64>) -> Self {
        ClassCounts::from_counts(v)
    }
}

impl From<ClassCounts> for Vec<u64> {
    fn from(c: ClassCounts) -> Self {
        c.counts
    }
}

/// Labeled examples under a schema. Classes are stored sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    schema: Schema,
    classes: Vec<String>,
    examples: Vec<Example>,
}

impl Dataset {
    pub fn new(
        schema: Schema,
        classes: Vec<String>,
        examples: Vec<Example>,
    ) -> Result<Self, DatasetError> {
        let mut classes = classes;
        classes.sort();
        classes.dedup();
        if classes.is_empty() {
            return Err(DatasetError::NoClasses);
        }
        let ds = Self {
            schema,
            classes,
            examples: Vec::with_capacity(examples.len()),
        };
        let mut ds = ds;
        for e in examples {
            ds.push(e)?;
        }
        Ok(ds)
    }

    pub fn empty(schema: Schema, classes: Vec<String>) -> Result<Self, DatasetError> {
        Self::new(schema, classes, Vec::new())
    }

    pub fn push(&mut self, example: Example) -> Result<(), DatasetError> {
        self.schema.validate_values(&example.values)?;
        if self.class_index(&example.label).is_none() {
            return Err(DatasetError::UnknownLabel(example.label));
        }
        self.examples.push(example);
        Ok(())
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes
            .binary_search_by(|c| c.as_str().cmp(label))
            .ok()
    }

    /// A view over every example.
    pub fn view(&self) -> View<'_> {
        View::new(self, (0..self.examples.len()).collect())
    }

    /// A view over the listed example indices.
    pub fn subset(&self, rows: Vec<usize>) -> View<'_> {
        View::new(self, rows)
    }

    /// Copy holding only the listed rows.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            classes: self.classes.clone(),
            examples: rows.iter().map(|&i| self.examples[i].clone()).collect(),
        }
    }

    pub fn class_counts(&self) -> ClassCounts {
        self.view().class_counts()
    }

    /// SHA-256 over the canonical CSV encoding plus the class list.
    pub fn fingerprint(&self) -> String {
        let mut buf = Vec::new();
        write_dataset(self, &mut buf, "label").expect("writing to memory cannot fail");
        let mut h = Sha256::new();
        h.update(self.classes.join("\u{1f}").as_bytes());
        h.update([0u8]);
        h.update(&buf);
        hex::encode(h.finalize())
    }
}

/// A subset of a dataset's examples, identified by row index.
#[derive(Debug, Clone)]
pub struct View<'a> {
    dataset: &'a Dataset,
    rows: Vec<usize>,
    labels: Vec<usize>,
}

impl<'a> View<'a> {
    fn new(dataset: &'a Dataset, rows: Vec<usize>) -> Self {
        let labels = rows
            .iter()
            .map(|&r| {
                dataset
                    .class_index(&dataset.examples[r].label)
                    .expect("dataset labels are validated")
            })
            .collect();
        Self {
            dataset,
            rows,
            labels,
        }
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Class index of the i-th row in the view.
    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn value(&self, i: usize, attribute: usize) -> &'a AttributeValue {
        &self.dataset.examples[self.rows[i]].values[attribute]
    }

    pub fn class_counts(&self) -> ClassCounts {
        let mut c = ClassCounts::zeros(self.dataset.classes.len());
        for &l in &self.labels {
            c.add(l);
        }
        c
    }

    /// Restriction of this view to the positions in `keep` (indices into this view).
    pub fn restrict(&self, keep: &[usize]) -> View<'a> {
        View {
            dataset: self.dataset,
            rows: keep.iter().map(|&i| self.rows[i]).collect(),
            labels: keep.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}
