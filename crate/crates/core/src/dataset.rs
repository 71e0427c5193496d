//! Bank-marketing records: schema, CSV ingestion, integer encoding and
//! evidence filtering.
//!
//! Attributes are addressed by their 0-based position in the schema; the
//! familiar 1-based `x1..x16` numbering is `position + 1`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Binary response: did the client subscribe a term deposit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    No,
    Yes,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::No, Label::Yes];

    pub fn index(self) -> usize {
        match self {
            Label::No => 0,
            Label::Yes => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::No => "no",
            Label::Yes => "yes",
        }
    }

    pub fn parse(text: &str) -> Option<Label> {
        match text.trim().to_ascii_lowercase().as_str() {
            "no" | "0" | "false" => Some(Label::No),
            "yes" | "1" | "true" => Some(Label::Yes),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AttributeKind {
    /// Integer-valued; split by thresholds.
    Numeric,
    /// yes/no field stored as 0/1 and split like a numeric attribute.
    Flag,
    /// Category labels, coded `1..=labels.len()` in listing order.
    Categorical { labels: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub kind: AttributeKind,
    /// Campaign-controllable (contact month, call duration, ...) as opposed
    /// to a fixed trait of the customer.
    pub actionable: bool,
}

impl Attribute {
    pub fn numeric(name: &str) -> Self {
        Attribute { name: name.to_string(), kind: AttributeKind::Numeric, actionable: false }
    }

    pub fn flag(name: &str) -> Self {
        Attribute { name: name.to_string(), kind: AttributeKind::Flag, actionable: false }
    }

    pub fn categorical(name: &str, labels: &[&str]) -> Self {
        Attribute {
            name: name.to_string(),
            kind: AttributeKind::Categorical { labels: labels.iter().map(|s| s.to_string()).collect() },
            actionable: false,
        }
    }

    pub fn actionable(mut self) -> Self {
        self.actionable = true;
        self
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, AttributeKind::Categorical { .. })
    }

    /// Valid codes of a categorical attribute, ascending. Empty for the others.
    pub fn codes(&self) -> Vec<i64> {
        match &self.kind {
            AttributeKind::Categorical { labels } => (1..=labels.len() as i64).collect(),
            _ => Vec::new(),
        }
    }

    pub fn code_of(&self, label: &str) -> Option<i64> {
        match &self.kind {
            AttributeKind::Categorical { labels } => {
                let wanted = label.trim();
                labels
                    .iter()
                    .position(|l| l.eq_ignore_ascii_case(wanted))
                    .map(|i| i as i64 + 1)
            }
            AttributeKind::Flag => wanted_flag(label),
            AttributeKind::Numeric => label.trim().parse().ok(),
        }
    }

    pub fn label_of(&self, code: i64) -> Option<&str> {
        match &self.kind {
            AttributeKind::Categorical { labels } if code >= 1 => {
                labels.get(code as usize - 1).map(String::as_str)
            }
            _ => None,
        }
    }

    pub fn is_valid(&self, value: i64) -> bool {
        match &self.kind {
            AttributeKind::Numeric => true,
            AttributeKind::Flag => value == 0 || value == 1,
            AttributeKind::Categorical { labels } => value >= 1 && value <= labels.len() as i64,
        }
    }

    /// Human-readable rendering of a value of this attribute.
    pub fn display_value(&self, value: i64) -> String {
        match &self.kind {
            AttributeKind::Categorical { .. } => match self.label_of(value) {
                Some(l) => l.to_string(),
                None => value.to_string(),
            },
            _ => value.to_string(),
        }
    }
}

fn wanted_flag(text: &str) -> Option<i64> {
    match text.trim().to_ascii_lowercase().as_str() {
        "no" | "0" => Some(0),
        "yes" | "1" => Some(1),
        _ => None,
    }
}

/// Ordered input attributes plus the name of the binary target column.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub attributes: Vec<Attribute>,
    pub target: String,
}

pub const JOB_LABELS: [&str; 12] = [
    "admin.",
    "unknown",
    "unemployed",
    "management",
    "housemaid",
    "entrepreneur",
    "student",
    "blue-collar",
    "self-employed",
    "retired",
    "technician",
    "services",
];
pub const MARITAL_LABELS: [&str; 3] = ["married", "divorced", "single"];
pub const EDUCATION_LABELS: [&str; 4] = ["unknown", "secondary", "primary", "tertiary"];
pub const CONTACT_LABELS: [&str; 3] = ["unknown", "telephone", "cellular"];
pub const MONTH_LABELS: [&str; 12] =
    ["jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec"];
pub const POUTCOME_LABELS: [&str; 4] = ["unknown", "other", "failure", "success"];

// 0-based positions in the bank schema.
pub const AGE: usize = 0;
pub const JOB: usize = 1;
pub const MARITAL: usize = 2;
pub const EDUCATION: usize = 3;
pub const DEFAULT: usize = 4;
pub const BALANCE: usize = 5;
pub const HOUSING: usize = 6;
pub const LOAN: usize = 7;
pub const CONTACT: usize = 8;
pub const DAY: usize = 9;
pub const MONTH: usize = 10;
pub const DURATION: usize = 11;
pub const CAMPAIGN: usize = 12;
pub const PDAYS: usize = 13;
pub const PREVIOUS: usize = 14;
pub const POUTCOME: usize = 15;

impl Schema {
    pub fn new(attributes: Vec<Attribute>) -> Self {
        Schema { attributes, target: "y".to_string() }
    }

    /// The sixteen-input bank-marketing schema with its fixed code table.
    pub fn bank() -> Self {
        Schema::new(vec![
            Attribute::numeric("age"),
            Attribute::categorical("job", &JOB_LABELS),
            Attribute::categorical("marital", &MARITAL_LABELS),
            Attribute::categorical("education", &EDUCATION_LABELS),
            Attribute::flag("default"),
            Attribute::numeric("balance"),
            Attribute::flag("housing"),
            Attribute::flag("loan"),
            Attribute::categorical("contact", &CONTACT_LABELS).actionable(),
            Attribute::numeric("day").actionable(),
            Attribute::categorical("month", &MONTH_LABELS).actionable(),
            Attribute::numeric("duration").actionable(),
            Attribute::numeric("campaign").actionable(),
            Attribute::numeric("pdays"),
            Attribute::numeric("previous"),
            Attribute::categorical("poutcome", &POUTCOME_LABELS),
        ])
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn attribute(&self, pos: usize) -> Option<&Attribute> {
        self.attributes.get(pos)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        let name = name.trim();
        self.attributes.iter().position(|a| a.name.eq_ignore_ascii_case(name))
    }

    pub fn name(&self, pos: usize) -> &str {
        &self.attributes[pos].name
    }

    pub fn categorical_positions(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.attributes[i].is_categorical()).collect()
    }

    pub fn actionable_positions(&self) -> BTreeSet<usize> {
        (0..self.len()).filter(|&i| self.attributes[i].actionable).collect()
    }

    /// Checks that `x` has one valid value per attribute.
    pub fn validate(&self, x: &[i64]) -> Result<(), DataError> {
        if x.len() != self.len() {
            return Err(DataError::Arity { expected: self.len(), found: x.len() });
        }
        for (pos, (&v, attr)) in x.iter().zip(&self.attributes).enumerate() {
            if !attr.is_valid(v) {
                return Err(DataError::InvalidCode { attribute: self.name(pos).to_string(), code: v });
            }
        }
        Ok(())
    }

    /// Replaces categorical labels by their codes and maps the target to a
    /// label. `raw` holds the inputs in schema order followed by the target.
    pub fn encode(&self, raw: &RawRecord) -> Result<EncodedRecord, DataError> {
        let expected = self.len() + 1;
        if raw.values.len() != expected {
            return Err(DataError::Arity { expected, found: raw.values.len() });
        }
        let mut x = Vec::with_capacity(self.len());
        for (attr, text) in self.attributes.iter().zip(&raw.values) {
            let v = match &attr.kind {
                AttributeKind::Numeric => text.trim().parse::<i64>().map_err(|_| {
                    DataError::Numeric { attribute: attr.name.clone(), value: text.clone() }
                })?,
                AttributeKind::Flag | AttributeKind::Categorical { .. } => {
                    attr.code_of(text).ok_or_else(|| DataError::UnknownCategory {
                        attribute: attr.name.clone(),
                        value: text.clone(),
                    })?
                }
            };
            x.push(v);
        }
        let target = &raw.values[self.len()];
        let y = Label::parse(target).ok_or_else(|| DataError::UnknownCategory {
            attribute: self.target.clone(),
            value: target.clone(),
        })?;
        Ok(EncodedRecord { x, y })
    }

    /// Inverse of [`Schema::encode`] for the input part.
    pub fn decode(&self, x: &[i64]) -> Vec<String> {
        self.attributes
            .iter()
            .zip(x)
            .map(|(attr, &v)| match &attr.kind {
                AttributeKind::Flag => (if v == 1 { "yes" } else { "no" }).to_string(),
                _ => attr.display_value(v),
            })
            .collect()
    }

    /// Parses a comma-separated list of integer codes, e.g.
    /// `41,7,3,2,0,270,1,0,1,5,5,222,1,-1,0,1`.
    pub fn parse_codes(&self, text: &str) -> Result<Vec<i64>, DataError> {
        let x = text
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<i64>()
                    .map_err(|_| DataError::Numeric { attribute: "record".into(), value: t.to_string() })
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.validate(&x)?;
        Ok(x)
    }
}

/// One CSV data row: the inputs in schema order followed by the target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawRecord {
    pub values: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedRecord {
    pub x: Vec<i64>,
    pub y: Label,
}

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("missing or incomplete header: {0}")]
    Header(String),
    #[error("line {line}: expected {expected} fields, found {found}")]
    FieldCount { line: u64, expected: usize, found: usize },
    #[error("line {line}: {source}")]
    Row { line: u64, source: Box<DataError> },
    #[error("attribute `{attribute}`: `{value}` is not an integer")]
    Numeric { attribute: String, value: String },
    #[error("attribute `{attribute}`: unknown category `{value}`")]
    UnknownCategory { attribute: String, value: String },
    #[error("attribute `{attribute}`: invalid code {code}")]
    InvalidCode { attribute: String, code: i64 },
    #[error("expected {expected} values, found {found}")]
    Arity { expected: usize, found: usize },
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("attribute `{0}` constrained more than once")]
    DuplicateConstraint(String),
    #[error("cannot parse evidence clause `{0}`")]
    Evidence(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("io: {0}")]
    Io(String),
}

/// CSV dialect; the published UCI files use `;` with double quotes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dialect {
    pub delimiter: u8,
    pub quote: u8,
}

impl Default for Dialect {
    fn default() -> Self {
        Dialect { delimiter: b';', quote: b'"' }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: Option<String>,
    pub rows: usize,
    /// SHA-256 of the source bytes, hex.
    pub digest: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub schema: Schema,
    pub records: Vec<EncodedRecord>,
    pub provenance: Provenance,
}

impl Dataset {
    /// Builds an in-memory dataset, validating every record.
    pub fn from_records(schema: Schema, records: Vec<EncodedRecord>) -> Result<Self, DataError> {
        let mut hasher = Sha256::new();
        for r in &records {
            schema.validate(&r.x)?;
            for v in &r.x {
                hasher.update(v.to_le_bytes());
            }
            hasher.update([r.y.index() as u8]);
        }
        let provenance =
            Provenance { source: None, rows: records.len(), digest: hex(&hasher.finalize()) };
        Ok(Dataset { schema, records, provenance })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count_label(&self, label: Label) -> usize {
        self.records.iter().filter(|r| r.y == label).count()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.records.iter().map(|r| r.y).collect()
    }

    /// Records matching every predicate of `evidence`, in dataset order.
    pub fn filter(&self, evidence: &Evidence) -> FilterResult {
        let matches: Vec<usize> = self
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| evidence.matches(&r.x, Some(r.y)))
            .map(|(i, _)| i)
            .collect();
        FilterResult { count: matches.len(), matches }
    }

    /// Subset of records by index, keeping the schema.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let records = indices.iter().map(|&i| self.records[i].clone()).collect();
        Dataset::from_records(self.schema.clone(), records).expect("records already validated")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterResult {
    pub count: usize,
    pub matches: Vec<usize>,
}

/// Reads a delimited file with a header row naming every schema attribute
/// and the target. Columns may appear in any order.
pub fn load_csv<R: Read>(source: R, dialect: Dialect, schema: &Schema) -> Result<Dataset, DataError> {
    let mut bytes = Vec::new();
    let mut source = source;
    source.read_to_end(&mut bytes).map_err(|e| DataError::Io(e.to_string()))?;
    let digest = hex(&Sha256::digest(&bytes));

    let mut reader = csv::ReaderBuilder::new()
        .delimiter(dialect.delimiter)
        .quote(dialect.quote)
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes.as_slice());

    let mut rows = reader.records();
    let header = match rows.next() {
        Some(h) => h.map_err(|e| DataError::Csv(e.to_string()))?,
        None => return Err(DataError::Header("empty input".into())),
    };
    let names: Vec<String> = header.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
    let mut column_of = Vec::with_capacity(schema.len() + 1);
    let wanted = schema.attributes.iter().map(|a| a.name.as_str()).chain([schema.target.as_str()]);
    for name in wanted {
        let col = names
            .iter()
            .position(|n| n.eq_ignore_ascii_case(name))
            .ok_or_else(|| DataError::Header(format!("column `{name}` not found")))?;
        column_of.push(col);
    }
    let width = names.len();

    let mut records = Vec::new();
    for row in rows {
        let row = row.map_err(|e| DataError::Csv(e.to_string()))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() == 1 && row.get(0).is_some_and(|f| f.trim().is_empty()) {
            continue;
        }
        if row.len() != width {
            return Err(DataError::FieldCount { line, expected: width, found: row.len() });
        }
        let raw = RawRecord { values: column_of.iter().map(|&c| row[c].to_string()).collect() };
        let rec = schema
            .encode(&raw)
            .map_err(|e| DataError::Row { line, source: Box::new(e) })?;
        records.push(rec);
    }
    Ok(Dataset {
        schema: schema.clone(),
        provenance: Provenance { source: None, rows: records.len(), digest },
        records,
    })
}

/// Opens `path` and loads it with [`load_csv`], recording the path.
pub fn load_path(path: &std::path::Path, dialect: Dialect, schema: &Schema) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path).map_err(|e| DataError::Io(format!("{}: {e}", path.display())))?;
    let mut ds = load_csv(std::io::BufReader::new(file), dialect, schema)?;
    ds.provenance.source = Some(path.display().to_string());
    Ok(ds)
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// A constraint on a single attribute value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    Equals(i64),
    OneOf(BTreeSet<i64>),
    /// `min <= value < below`; either bound may be open.
    Range { min: Option<f64>, below: Option<f64> },
}

impl Predicate {
    pub fn matches(&self, value: i64) -> bool {
        match self {
            Predicate::Equals(v) => value == *v,
            Predicate::OneOf(set) => set.contains(&value),
            Predicate::Range { min, below } => {
                let v = value as f64;
                min.is_none_or(|m| v >= m) && below.is_none_or(|b| v < b)
            }
        }
    }

    fn validate(&self, attr: &Attribute) -> Result<(), DataError> {
        let check = |c: i64| {
            if attr.is_valid(c) {
                Ok(())
            } else {
                Err(DataError::InvalidCode { attribute: attr.name.clone(), code: c })
            }
        };
        match self {
            Predicate::Equals(v) => check(*v),
            Predicate::OneOf(set) => set.iter().try_for_each(|&c| check(c)),
            Predicate::Range { .. } if attr.is_categorical() => {
                Err(DataError::Evidence(format!("range on categorical `{}`", attr.name)))
            }
            Predicate::Range { .. } => Ok(()),
        }
    }
}

/// Partial knowledge about a customer or segment: at most one predicate per
/// attribute, plus an optional constraint on the recorded response.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub constraints: BTreeMap<usize, Predicate>,
    #[serde(default)]
    pub outcome: Option<Label>,
}

impl Evidence {
    pub fn new() -> Self {
        Evidence::default()
    }

    /// Adds a predicate; a second predicate on the same attribute is an error.
    pub fn with(mut self, attribute: usize, predicate: Predicate) -> Result<Self, DataError> {
        if self.constraints.contains_key(&attribute) {
            return Err(DataError::DuplicateConstraint(attribute.to_string()));
        }
        self.constraints.insert(attribute, predicate);
        Ok(self)
    }

    pub fn with_outcome(mut self, label: Label) -> Self {
        self.outcome = Some(label);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty() && self.outcome.is_none()
    }

    pub fn get(&self, attribute: usize) -> Option<&Predicate> {
        self.constraints.get(&attribute)
    }

    pub fn validate(&self, schema: &Schema) -> Result<(), DataError> {
        for (&pos, pred) in &self.constraints {
            let attr = schema
                .attribute(pos)
                .ok_or_else(|| DataError::UnknownAttribute(format!("#{}", pos + 1)))?;
            pred.validate(attr)?;
        }
        Ok(())
    }

    /// `y` is only checked when both the evidence and the caller supply it.
    pub fn matches(&self, x: &[i64], y: Option<Label>) -> bool {
        if let (Some(want), Some(have)) = (self.outcome, y) {
            if want != have {
                return false;
            }
        }
        self.constraints.iter().all(|(&pos, p)| p.matches(x[pos]))
    }

    /// Parses `;`-separated clauses such as
    /// `month=may|jun; duration<605.5; age>=30; poutcome=failure; y=yes`.
    ///
    /// Operators: `=` (alternatives separated by `|`), `<`, `>=`, and
    /// `in [lo,hi)`. Values of categorical and flag attributes may be given as
    /// labels or codes.
    pub fn parse(text: &str, schema: &Schema) -> Result<Evidence, DataError> {
        let mut ev = Evidence::new();
        for clause in text.split(';').map(str::trim).filter(|c| !c.is_empty()) {
            let bad = || DataError::Evidence(clause.to_string());
            let (name, op, rhs) = split_clause(clause).ok_or_else(bad)?;
            if name.eq_ignore_ascii_case(&schema.target) {
                if op != "=" {
                    return Err(bad());
                }
                ev.outcome = Some(Label::parse(rhs).ok_or_else(bad)?);
                continue;
            }
            let pos = schema.position(name).ok_or_else(|| DataError::UnknownAttribute(name.to_string()))?;
            let attr = &schema.attributes[pos];
            let value = |t: &str| -> Result<i64, DataError> {
                attr.code_of(t).or_else(|| t.trim().parse().ok()).ok_or_else(bad)
            };
            let number = |t: &str| -> Result<f64, DataError> { t.trim().parse::<f64>().map_err(|_| bad()) };
            let pred = match op {
                "=" => {
                    let alts = rhs.split('|').map(value).collect::<Result<BTreeSet<_>, _>>()?;
                    if alts.len() == 1 {
                        Predicate::Equals(*alts.iter().next().unwrap())
                    } else {
                        Predicate::OneOf(alts)
                    }
                }
                "<" => Predicate::Range { min: None, below: Some(number(rhs)?) },
                ">=" => Predicate::Range { min: Some(number(rhs)?), below: None },
                "in" => {
                    let inner = rhs.trim().strip_prefix('[').and_then(|r| r.strip_suffix(')')).ok_or_else(bad)?;
                    let (lo, hi) = inner.split_once(',').ok_or_else(bad)?;
                    Predicate::Range { min: Some(number(lo)?), below: Some(number(hi)?) }
                }
                _ => return Err(bad()),
            };
            if ev.constraints.contains_key(&pos) {
                return Err(DataError::DuplicateConstraint(attr.name.clone()));
            }
            ev.constraints.insert(pos, pred);
        }
        ev.validate(schema)?;
        Ok(ev)
    }
}

fn split_clause(clause: &str) -> Option<(&str, &str, &str)> {
    if let Some((l, r)) = clause.split_once(">=") {
        return Some((l.trim(), ">=", r.trim()));
    }
    if let Some((l, r)) = clause.split_once('<') {
        return Some((l.trim(), "<", r.trim()));
    }
    if let Some((l, r)) = clause.split_once('=') {
        return Some((l.trim(), "=", r.trim()));
    }
    let mut parts = clause.splitn(2, char::is_whitespace);
    let name = parts.next()?;
    let rest = parts.next()?.trim_start();
    let rhs = rest.strip_prefix("in")?;
    Some((name.trim(), "in", rhs.trim()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "\"age\";\"job\";\"marital\";\"education\";\"default\";\"balance\";\"housing\";\"loan\";\"contact\";\"day\";\"month\";\"duration\";\"campaign\";\"pdays\";\"previous\";\"poutcome\";\"y\"\n";

    fn load(text: &str) -> Result<Dataset, DataError> {
        load_csv(text.as_bytes(), Dialect::default(), &Schema::bank())
    }

    #[test]
    fn bank_schema_shape() {
        let s = Schema::bank();
        assert_eq!(s.len(), 16);
        assert_eq!(s.target, "y");
        // 1-based {2,3,4,9,11,16}
        let cats: Vec<usize> = s.categorical_positions().iter().map(|p| p + 1).collect();
        assert_eq!(cats, vec![2, 3, 4, 9, 11, 16]);
        for pos in s.categorical_positions() {
            let attr = &s.attributes[pos];
            let codes = attr.codes();
            assert_eq!(codes[0], 1);
            assert!(codes.windows(2).all(|w| w[1] == w[0] + 1));
        }
    }

    #[test]
    fn job_codes_follow_listing_order() {
        let s = Schema::bank();
        let job = &s.attributes[JOB];
        assert_eq!(job.code_of("blue-collar"), Some(8));
        assert_eq!(job.code_of("admin."), Some(1));
        assert_eq!(job.code_of("services"), Some(12));
        assert_eq!(s.attributes[EDUCATION].code_of("unknown"), Some(1));
        assert_eq!(s.attributes[MONTH].code_of("may"), Some(5));
        assert_eq!(s.attributes[POUTCOME].code_of("success"), Some(4));
    }

    #[test]
    fn categorical_round_trip() {
        let s = Schema::bank();
        for attr in &s.attributes {
            for code in attr.codes() {
                let label = attr.label_of(code).unwrap();
                assert_eq!(attr.code_of(label), Some(code));
            }
        }
    }

    #[test]
    fn encode_row() {
        let s = Schema::bank();
        let raw = RawRecord {
            values: "58;management;married;tertiary;no;2143;yes;no;unknown;5;may;261;1;-1;0;unknown;no"
                .split(';')
                .map(String::from)
                .collect(),
        };
        let rec = s.encode(&raw).unwrap();
        assert_eq!(rec.x, vec![58, 4, 1, 4, 0, 2143, 1, 0, 1, 5, 5, 261, 1, -1, 0, 1]);
        assert_eq!(rec.y, Label::No);
        assert_eq!(s.decode(&rec.x)[1], "management");
    }

    #[test]
    fn encode_rejects_unknown_label() {
        let s = Schema::bank();
        let mut values: Vec<String> =
            "58;astronaut;married;tertiary;no;2143;yes;no;unknown;5;may;261;1;-1;0;unknown;no"
                .split(';')
                .map(String::from)
                .collect();
        assert!(matches!(s.encode(&RawRecord { values: values.clone() }), Err(DataError::UnknownCategory { .. })));
        values[1] = "retired".into();
        values[16] = "maybe".into();
        assert!(s.encode(&RawRecord { values }).is_err());
    }

    #[test]
    fn header_only_file_is_empty_dataset() {
        let ds = load(HEADER).unwrap();
        assert_eq!(ds.len(), 0);
    }

    #[test]
    fn missing_header_and_short_rows_are_errors() {
        assert!(matches!(load(""), Err(DataError::Header(_))));
        assert!(matches!(load("age;job\n1;2\n"), Err(DataError::Header(_))));
        let short = format!("{HEADER}58;management;married;tertiary;no;2143;yes;no;unknown;5;may;261;1;-1;0;unknown\n");
        match load(&short) {
            Err(DataError::FieldCount { line: 2, expected: 17, found: 16 }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let bad_num = format!("{HEADER}5x;management;married;tertiary;no;2143;yes;no;unknown;5;may;261;1;-1;0;unknown;no\n");
        assert!(matches!(load(&bad_num), Err(DataError::Row { line: 2, .. })));
    }

    #[test]
    fn quoted_fields_and_negative_numbers() {
        let text = format!(
            "{HEADER}\"30\";\"blue-collar\";\"single\";\"primary\";\"no\";\"-120\";\"yes\";\"no\";\"cellular\";\"3\";\"feb\";\"90\";\"2\";\"-1\";\"0\";\"unknown\";\"yes\"\n"
        );
        let ds = load(&text).unwrap();
        assert_eq!(ds.records[0].x[BALANCE], -120);
        assert_eq!(ds.records[0].x[PDAYS], -1);
        assert_eq!(ds.records[0].y, Label::Yes);
    }

    #[test]
    fn evidence_parse_and_filter() {
        let s = Schema::bank();
        let ev = Evidence::parse("month=may|jun; duration<605.5; y=no", &s).unwrap();
        assert_eq!(ev.get(MONTH), Some(&Predicate::OneOf([5, 6].into())));
        assert_eq!(ev.get(DURATION), Some(&Predicate::Range { min: None, below: Some(605.5) }));
        assert_eq!(ev.outcome, Some(Label::No));
        let ev = Evidence::parse("age in [30,40); housing=yes", &s).unwrap();
        assert_eq!(ev.get(AGE), Some(&Predicate::Range { min: Some(30.0), below: Some(40.0) }));
        assert_eq!(ev.get(HOUSING), Some(&Predicate::Equals(1)));
        assert!(Evidence::parse("month=may; month=jun", &s).is_err());
        assert!(Evidence::parse("colour=red", &s).is_err());
        assert!(Evidence::parse("month<3", &s).is_err());
        assert!(Evidence::parse("job=13", &s).is_err());
    }

    #[test]
    fn empty_evidence_matches_everything() {
        let s = Schema::bank();
        let recs = vec![
            EncodedRecord { x: vec![41, 7, 3, 2, 0, 270, 1, 0, 1, 5, 5, 222, 1, -1, 0, 1], y: Label::No },
            EncodedRecord { x: vec![30, 8, 3, 3, 0, 10, 1, 0, 3, 5, 6, 700, 1, -1, 0, 4], y: Label::Yes },
        ];
        let ds = Dataset::from_records(s, recs).unwrap();
        assert_eq!(ds.filter(&Evidence::new()).count, 2);
        assert_eq!(ds.filter(&Evidence::new().with_outcome(Label::Yes)).matches, vec![1]);
    }
}
