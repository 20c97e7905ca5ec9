use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::LearnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Presence,
    Absence,
}

impl Label {
    pub fn other(self) -> Label {
        match self {
            Label::Presence => Label::Absence,
            Label::Absence => Label::Presence,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Presence => "presence",
            Label::Absence => "absence",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "presence" => Ok(Label::Presence),
            "absence" => Ok(Label::Absence),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}

/// One labeled sample, values in the dataset's field order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSample {
    pub values: Vec<u64>,
    pub label: Label,
}

/// Append-only accumulation of labeled samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    fields: Vec<String>,
    rows: Vec<Vec<u64>>,
    labels: Vec<Label>,
    iterations: Vec<u32>,
}

impl LabeledDataset {
    pub fn new(fields: Vec<String>) -> Self {
        Self {
            fields,
            rows: Vec::new(),
            labels: Vec::new(),
            iterations: Vec::new(),
        }
    }

    pub fn fields(&self) -> &[String] {
        &self.fields
    }

    pub fn push(&mut self, values: Vec<u64>, label: Label, iteration: u32) -> Result<(), LearnError> {
        if values.len() != self.fields.len() {
            return Err(LearnError::Shape {
                expected: self.fields.len(),
                actual: values.len(),
            });
        }
        self.rows.push(values);
        self.labels.push(label);
        self.iterations.push(iteration);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.rows
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn iterations(&self) -> &[u32] {
        &self.iterations
    }

    pub fn sample(&self, i: usize) -> LabeledSample {
        LabeledSample {
            values: self.rows[i].clone(),
            label: self.labels[i],
        }
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// The less frequent label; presence on ties.
    pub fn minority_label(&self) -> Label {
        if self.count(Label::Absence) < self.count(Label::Presence) {
            Label::Absence
        } else {
            Label::Presence
        }
    }

    /// The first `n` samples, i.e. the dataset as it stood earlier.
    pub fn prefix(&self, n: usize) -> LabeledDataset {
        let n = n.min(self.len());
        Self {
            fields: self.fields.clone(),
            rows: self.rows[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            iterations: self.iterations[..n].to_vec(),
        }
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        Self {
            fields: self.fields.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            iterations: indices.iter().map(|&i| self.iterations[i]).collect(),
        }
    }

    /// CSV with the field names plus `label` as header; decimal values.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), LearnError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.fields.iter().map(String::as_str).collect();
        header.push("label");
        w.write_record(&header)?;
        for (row, label) in self.rows.iter().zip(&self.labels) {
            let mut record: Vec<String> = row.iter().map(u64::to_string).collect();
            record.push(label.to_string());
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| LearnError::Csv(e.to_string()))?;
        Ok(())
    }

    /// Appends rows `from..` as CSV records without a header.
    pub fn write_csv_rows<W: Write>(&self, writer: W, from: usize) -> Result<(), LearnError> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for (row, label) in self.rows.iter().zip(&self.labels).skip(from) {
            let mut record: Vec<String> = row.iter().map(u64::to_string).collect();
            record.push(label.to_string());
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| LearnError::Csv(e.to_string()))?;
        Ok(())
    }

    /// Reads a dataset CSV. Provenance is not stored in the file, so every
    /// row gets iteration `0`.
    pub fn read_csv<R: Read>(reader: R) -> Result<LabeledDataset, LearnError> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let mut fields: Vec<String> = header.iter().map(str::to_string).collect();
        if fields.pop().as_deref() != Some("label") {
            return Err(LearnError::Csv("last column must be `label`".into()));
        }
        let mut ds = LabeledDataset::new(fields);
        for record in r.records() {
            let record = record?;
            let n = record.len();
            if n != ds.fields.len() + 1 {
                return Err(LearnError::Shape {
                    expected: ds.fields.len() + 1,
                    actual: n,
                });
            }
            let values = record
                .iter()
                .take(n - 1)
                .map(|v| v.parse::<u64>().map_err(|e| LearnError::Csv(format!("`{v}`: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            let label = record[n - 1].parse::<Label>().map_err(LearnError::Csv)?;
            ds.push(values, label, 0)?;
        }
        Ok(ds)
    }
}
