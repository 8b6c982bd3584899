use std::collections::BTreeSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    AttributeKind, AttributeSchema, AttributeValue, Dataset, DatasetError, Example, Schema,
    MISSING_TOKEN,
};

fn default_label() -> String {
    "label".to_string()
}

/// Schema description accompanying a CSV dataset, stored as TOML.
///
/// ```toml
/// label = "Credit"
/// classes = ["yes", "no"]
///
/// [[attributes]]
/// name = "Bankruptcy"
/// kind = "categorical"
/// values = ["yes", "no"]
/// question = "Did you ever declare bankruptcy?"
///
/// [[attributes]]
/// name = "Savings"
/// kind = "numeric"
/// unit = "dollars"
/// question = "How much do you have in savings?"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaConfig {
    #[serde(default = "default_label")]
    pub label: String,
    /// Declared class labels. When absent they are taken from the data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<String>>,
    pub attributes: Vec<AttributeConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeConfig {
    pub name: String,
    pub kind: ConfigKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    pub question: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfigKind {
    Categorical,
    Numeric,
}

impl SchemaConfig {
    pub fn from_toml(text: &str) -> Result<Self, DatasetError> {
        toml::from_str(text).map_err(|e| DatasetError::Malformed(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schema config serializes")
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| DatasetError::Malformed(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn schema(&self) -> Result<Schema, DatasetError> {
        let mut attrs = Vec::with_capacity(self.attributes.len());
        for a in &self.attributes {
            let kind = match a.kind {
                ConfigKind::Categorical => {
                    if a.unit.is_some() {
                        return Err(DatasetError::InvalidSchema(format!(
                            "categorical attribute `{}` cannot have a unit",
                            a.name
                        )));
                    }
                    AttributeKind::Categorical {
                        values: a.values.clone(),
                    }
                }
                ConfigKind::Numeric => {
                    if !a.values.is_empty() {
                        return Err(DatasetError::InvalidSchema(format!(
                            "numeric attribute `{}` cannot list values",
                            a.name
                        )));
                    }
                    AttributeKind::Numeric {
                        unit: a.unit.clone(),
                    }
                }
            };
            attrs.push(AttributeSchema {
                name: a.name.clone(),
                kind,
                question: a.question.clone(),
            });
        }
        if attrs.iter().any(|a| a.name == self.label) {
            return Err(DatasetError::InvalidSchema(format!(
                "label column `{}` collides with an attribute",
                self.label
            )));
        }
        Schema::new(attrs)
    }

    /// Builds the config describing an existing dataset.
    pub fn describe(dataset: &Dataset, label: &str) -> Self {
        let attributes = dataset
            .schema()
            .attributes()
            .iter()
            .map(|a| match &a.kind {
                AttributeKind::Categorical { values } => AttributeConfig {
                    name: a.name.clone(),
                    kind: ConfigKind::Categorical,
                    values: values.clone(),
                    unit: None,
                    question: a.question.clone(),
                },
                AttributeKind::Numeric { unit } => AttributeConfig {
                    name: a.name.clone(),
                    kind: ConfigKind::Numeric,
                    values: Vec::new(),
                    unit: unit.clone(),
                    question: a.question.clone(),
                },
            })
            .collect();
        Self {
            label: label.to_string(),
            classes: Some(dataset.classes().to_vec()),
            attributes,
        }
    }
}

/// Reads a comma-separated dataset with a header row. Rows are numbered from 1
/// (the header), columns from 1.
pub fn load_dataset<R: Read>(source: R, config: &SchemaConfig) -> Result<Dataset, DatasetError> {
    let schema = config.schema()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let mut records = reader.records();

    let header = match records.next() {
        Some(r) => r.map_err(|e| DatasetError::Malformed(e.to_string()))?,
        None => return Err(DatasetError::Malformed("empty file: no header row".into())),
    };
    let header: Vec<String> = header.iter().map(str::to_string).collect();

    let mut seen = BTreeSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(DatasetError::DuplicateAttribute(h.clone()));
        }
    }
    // column position of each schema attribute, and of the label
    let mut columns = Vec::with_capacity(schema.len());
    for a in schema.attributes() {
        let pos = header
            .iter()
            .position(|h| *h == a.name)
            .ok_or_else(|| DatasetError::MissingColumn(a.name.clone()))?;
        columns.push(pos);
    }
    let label_col = header
        .iter()
        .position(|h| *h == config.label)
        .ok_or_else(|| DatasetError::MissingColumn(config.label.clone()))?;
    if let Some(extra) = header
        .iter()
        .find(|h| **h != config.label && schema.position(h).is_none())
    {
        return Err(DatasetError::UnexpectedColumn(extra.clone()));
    }

    let declared: Option<BTreeSet<&str>> = config
        .classes
        .as_ref()
        .map(|c| c.iter().map(String::as_str).collect());

    let mut examples = Vec::new();
    let mut labels = BTreeSet::new();
    for (i, record) in records.enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| DatasetError::Malformed(format!("row {row}: {e}")))?;
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() != header.len() {
            return Err(DatasetError::RowWidth {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        let mut values = Vec::with_capacity(schema.len());
        for (a, &col) in schema.attributes().iter().zip(&columns) {
            let cell = &record[col];
            let v = a.parse_value(cell).map_err(|reason| DatasetError::Cell {
                row,
                column: col + 1,
                attribute: a.name.clone(),
                reason,
            })?;
            values.push(v);
        }
        let label = record[label_col].to_string();
        if label.is_empty() || label == MISSING_TOKEN {
            return Err(DatasetError::Cell {
                row,
                column: label_col + 1,
                attribute: config.label.clone(),
                reason: "label is required".into(),
            });
        }
        if let Some(d) = &declared {
            if !d.contains(label.as_str()) {
                return Err(DatasetError::Cell {
                    row,
                    column: label_col + 1,
                    attribute: config.label.clone(),
                    reason: format!("label `{label}` is not a declared class"),
                });
            }
        }
        labels.insert(label.clone());
        examples.push(Example { values, label });
    }

    let classes = match &config.classes {
        Some(c) => c.clone(),
        None => labels.into_iter().collect(),
    };
    Dataset::new(schema, classes, examples)
}

pub fn load_dataset_path(
    data: impl AsRef<Path>,
    config: &SchemaConfig,
) -> Result<Dataset, DatasetError> {
    let path = data.as_ref();
    let f = File::open(path)
        .map_err(|e| DatasetError::Malformed(format!("{}: {e}", path.display())))?;
    load_dataset(f, config)
}

/// Writes the dataset as CSV: schema attributes in order, then the label column.
pub fn write_dataset<W: Write>(
    dataset: &Dataset,
    out: W,
    label_column: &str,
) -> Result<(), DatasetError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let io = |e: csv::Error| DatasetError::Malformed(e.to_string());
    let mut header: Vec<&str> = dataset
        .schema()
        .attributes()
        .iter()
        .map(|a| a.name.as_str())
        .collect();
    header.push(label_column);
    w.write_record(&header).map_err(io)?;
    for e in dataset.examples() {
        let mut row: Vec<String> = e.values.iter().map(AttributeValue::to_string).collect();
        row.push(e.label.clone());
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| DatasetError::Malformed(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIGURE1_SCHEMA: &str = r#"
label = "Credit"
classes = ["yes", "no"]

[[attributes]]
name = "Employment"
kind = "categorical"
values = ["yes", "no"]
question = "Are you employed?"

[[attributes]]
name = "Years"
kind = "numeric"
unit = "years"
question = "How many years have you lived at your current address?"

[[attributes]]
name = "Savings"
kind = "numeric"
unit = "dollars"
question = "How much do you have in savings?"

[[attributes]]
name = "Bankruptcy"
kind = "categorical"
values = ["yes", "no"]
question = "Did you ever declare bankruptcy?"
"#;

    const FIGURE1_CSV: &str = "Employment,Years,Savings,Bankruptcy,Credit
no,10,100000,yes,yes
no,?,5000,yes,no
yes,1,2000,no,yes
";

    fn config() -> SchemaConfig {
        SchemaConfig::from_toml(FIGURE1_SCHEMA).unwrap()
    }

    #[test]
    fn loads_figure1_with_missing_years() {
        let ds = load_dataset(FIGURE1_CSV.as_bytes(), &config()).unwrap();
        assert_eq!(ds.len(), 3);
        let years = ds.schema().position("Years").unwrap();
        let missing: Vec<_> = ds
            .examples()
            .iter()
            .filter(|e| e.values[years].is_missing())
            .collect();
        assert_eq!(missing.len(), 1);
        assert_eq!(ds.examples()[0].values[2], AttributeValue::Number(100_000.0));
    }

    #[test]
    fn header_only_file_keeps_schema() {
        let ds = load_dataset("Employment,Years,Savings,Bankruptcy,Credit\n".as_bytes(), &config())
            .unwrap();
        assert_eq!(ds.len(), 0);
        assert_eq!(ds.schema().len(), 4);
    }

    #[test]
    fn unknown_category_reports_row_and_column() {
        let csv = "Employment,Years,Savings,Bankruptcy,Credit\nno,1,10,maybe,yes\n";
        match load_dataset(csv.as_bytes(), &config()) {
            Err(DatasetError::Cell {
                row,
                column,
                attribute,
                ..
            }) => {
                assert_eq!((row, column), (2, 4));
                assert_eq!(attribute, "Bankruptcy");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_rows_and_headers() {
        let wide = "Employment,Years,Savings,Bankruptcy,Credit\nno,1,10,yes\n";
        assert!(matches!(
            load_dataset(wide.as_bytes(), &config()),
            Err(DatasetError::RowWidth { row: 2, .. })
        ));
        let text = "Employment,Years,Savings,Bankruptcy,Credit\nno,ten,10,yes,no\n";
        assert!(matches!(
            load_dataset(text.as_bytes(), &config()),
            Err(DatasetError::Cell { row: 2, column: 2, .. })
        ));
        let dup = "Employment,Employment,Savings,Bankruptcy,Credit\n";
        assert_eq!(
            load_dataset(dup.as_bytes(), &config()),
            Err(DatasetError::DuplicateAttribute("Employment".into()))
        );
        let label = "Employment,Years,Savings,Bankruptcy,Credit\nno,1,10,yes,unsure\n";
        assert!(matches!(
            load_dataset(label.as_bytes(), &config()),
            Err(DatasetError::Cell { column: 5, .. })
        ));
    }

    #[test]
    fn duplicate_attribute_in_config() {
        let mut c = config();
        c.attributes.push(c.attributes[0].clone());
        assert_eq!(
            c.schema(),
            Err(DatasetError::DuplicateAttribute("Employment".into()))
        );
    }

    #[test]
    fn write_then_load_is_identity() {
        let ds = load_dataset(FIGURE1_CSV.as_bytes(), &config()).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf, "Credit").unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), FIGURE1_CSV);
        let again = load_dataset(buf.as_slice(), &config()).unwrap();
        assert_eq!(ds, again);
        let described = SchemaConfig::describe(&ds, "Credit");
        let from_toml = SchemaConfig::from_toml(&described.to_toml()).unwrap();
        assert_eq!(from_toml.schema().unwrap(), *ds.schema());
    }
}
