//! CSV ingestion driven by a JSON column schema.
//!
//! ```json
//! {
//!   "covariates": ["score", "rank"],
//!   "group": "gender",
//!   "treatment": {"column": "admitted", "positive": "1", "negative": "0"},
//!   "reward": "success",
//!   "groups": ["F", "M"]
//! }
//! ```
//!
//! `groups` fixes the label order (otherwise sorted labels of the training
//! file) and `delimiter` defaults to a comma.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use fairitr_core::data::{LabeledDataset, LabeledRow, TargetDataset, Treatment, Unit};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreatmentColumn {
    pub column: String,
    /// Cell value coding `A = +1`.
    pub positive: String,
    /// Cell value coding `A = −1`.
    pub negative: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub covariates: Vec<String>,
    pub group: String,
    pub treatment: TreatmentColumn,
    pub reward: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delimiter: Option<char>,
}

/// Target rows, with treatment and reward when the file carries them.
#[derive(Debug, Clone)]
pub struct TargetData {
    pub units: TargetDataset,
    pub labeled: Option<LabeledDataset>,
}

struct Table {
    header: Vec<String>,
    records: Vec<csv::StringRecord>,
}

impl Table {
    fn column(&self, path: &Path, name: &str) -> Result<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| Error::input(path, format!("missing column '{name}'")))
    }
}

fn parse_number(path: &Path, line: usize, column: &str, cell: &str) -> Result<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => {
            Err(Error::input(path, format!("line {line}, column '{column}': cannot read '{cell}' as a finite number")))
        }
    }
}

impl CsvSchema {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let schema: CsvSchema =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.covariates.is_empty() {
            return Err(Error::Config("schema lists no covariates".into()));
        }
        let mut seen = BTreeSet::new();
        let all = self.covariates.iter().chain([&self.group, &self.treatment.column, &self.reward]);
        for name in all {
            if !seen.insert(name.as_str()) {
                return Err(Error::Config(format!("column '{name}' is used twice in the schema")));
            }
        }
        if self.treatment.positive == self.treatment.negative {
            return Err(Error::Config("treatment codes for the two arms must differ".into()));
        }
        if let Some(groups) = &self.groups {
            if groups.is_empty() || groups.iter().collect::<BTreeSet<_>>().len() != groups.len() {
                return Err(Error::Config("schema groups must be nonempty and distinct".into()));
            }
        }
        if let Some(d) = self.delimiter {
            if !d.is_ascii() {
                return Err(Error::Config(format!("delimiter '{d}' is not a single-byte character")));
            }
        }
        Ok(())
    }

    fn delimiter(&self) -> u8 {
        self.delimiter.map_or(b',', |d| d as u8)
    }

    fn read_table(&self, path: &Path) -> Result<Table> {
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(self.delimiter())
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::input(path, e.to_string()))?;
        let header =
            reader.headers().map_err(|e| Error::input(path, e.to_string()))?.iter().map(str::to_string).collect();
        let records = reader
            .records()
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::input(path, e.to_string()))?;
        if records.is_empty() {
            return Err(Error::input(path, "no data rows"));
        }
        Ok(Table { header, records })
    }

    /// Group labels from the schema, or the sorted labels found in `path`.
    pub fn resolve_groups(&self, path: impl AsRef<Path>) -> Result<Vec<String>> {
        if let Some(groups) = &self.groups {
            return Ok(groups.clone());
        }
        let path = path.as_ref();
        let table = self.read_table(path)?;
        let col = table.column(path, &self.group)?;
        let labels: BTreeSet<String> = table.records.iter().map(|r| r[col].to_string()).collect();
        Ok(labels.into_iter().collect())
    }

    fn units(&self, path: &Path, table: &Table, groups: &[String]) -> Result<Vec<Unit>> {
        let cols = self.covariates.iter().map(|c| table.column(path, c)).collect::<Result<Vec<_>>>()?;
        let gcol = table.column(path, &self.group)?;
        table
            .records
            .iter()
            .enumerate()
            .map(|(i, rec)| {
                let line = i + 2;
                let x = cols
                    .iter()
                    .zip(&self.covariates)
                    .map(|(&c, name)| parse_number(path, line, name, &rec[c]))
                    .collect::<Result<Vec<_>>>()?;
                let label = &rec[gcol];
                let s = groups.iter().position(|g| g == label).ok_or_else(|| {
                    Error::input(path, format!("line {line}, column '{}': unknown group '{label}'", self.group))
                })?;
                Ok(Unit { x, s })
            })
            .collect()
    }

    fn labels(&self, path: &Path, table: &Table, units: Vec<Unit>, groups: &[String]) -> Result<LabeledDataset> {
        let acol = table.column(path, &self.treatment.column)?;
        let rcol = table.column(path, &self.reward)?;
        let rows = units
            .into_iter()
            .zip(&table.records)
            .enumerate()
            .map(|(i, (u, rec))| {
                let line = i + 2;
                let cell = &rec[acol];
                let a = if cell == self.treatment.positive {
                    Treatment::Treated
                } else if cell == self.treatment.negative {
                    Treatment::Control
                } else {
                    return Err(Error::input(
                        path,
                        format!(
                            "line {line}, column '{}': treatment '{cell}' is neither '{}' nor '{}'",
                            self.treatment.column, self.treatment.positive, self.treatment.negative
                        ),
                    ));
                };
                let r = parse_number(path, line, &self.reward, &rec[rcol])?;
                Ok(LabeledRow { x: u.x, s: u.s, a, r })
            })
            .collect::<Result<Vec<_>>>()?;
        LabeledDataset::new(self.covariates.len(), groups.to_vec(), rows).map_err(|e| Error::input(path, e.to_string()))
    }

    /// Reads rows with treatment and reward.
    pub fn read_labeled(&self, path: impl AsRef<Path>, groups: &[String]) -> Result<LabeledDataset> {
        let path = path.as_ref();
        let table = self.read_table(path)?;
        let units = self.units(path, &table, groups)?;
        self.labels(path, &table, units, groups)
    }

    /// Reads target rows; treatment and reward are picked up when both
    /// columns are present. Every group must occur at least once.
    pub fn read_target(&self, path: impl AsRef<Path>, groups: &[String]) -> Result<TargetData> {
        let path = path.as_ref();
        let table = self.read_table(path)?;
        let units = self.units(path, &table, groups)?;
        for (s, g) in groups.iter().enumerate() {
            if !units.iter().any(|u| u.s == s) {
                return Err(Error::input(path, format!("group '{g}' has no rows in the target file")));
            }
        }
        let has_labels = table.header.contains(&self.treatment.column) && table.header.contains(&self.reward);
        let labeled = if has_labels { Some(self.labels(path, &table, units.clone(), groups)?) } else { None };
        let units = TargetDataset::new(self.covariates.len(), groups.to_vec(), units)
            .map_err(|e| Error::input(path, e.to_string()))?;
        Ok(TargetData { units, labeled })
    }

    /// Writes `data` with this schema's column names and codes.
    pub fn write_labeled(&self, path: impl AsRef<Path>, data: &LabeledDataset) -> Result<()> {
        let path = path.as_ref();
        if data.d() != self.covariates.len() {
            return Err(Error::Config(format!(
                "schema has {} covariates but the data has {}",
                self.covariates.len(),
                data.d()
            )));
        }
        let mut writer = csv::WriterBuilder::new()
            .delimiter(self.delimiter())
            .from_path(path)
            .map_err(|e| Error::input(path, e.to_string()))?;
        let mut header: Vec<&str> = self.covariates.iter().map(String::as_str).collect();
        header.extend([self.group.as_str(), self.treatment.column.as_str(), self.reward.as_str()]);
        writer.write_record(&header).map_err(|e| Error::input(path, e.to_string()))?;
        for row in data.rows() {
            let mut rec: Vec<String> = row.x.iter().map(|v| v.to_string()).collect();
            rec.push(data.groups()[row.s].clone());
            rec.push(match row.a {
                Treatment::Treated => self.treatment.positive.clone(),
                Treatment::Control => self.treatment.negative.clone(),
            });
            rec.push(row.r.to_string());
            writer.write_record(&rec).map_err(|e| Error::input(path, e.to_string()))?;
        }
        writer.flush().map_err(|e| Error::io(path, e))
    }
}
