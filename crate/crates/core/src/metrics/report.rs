use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub name: String,
    pub value: f64,
}

/// Labeled real matrix attached to a report (per-factor or per-dimension
/// breakdowns).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub row_labels: Vec<String>,
    pub column_labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigEntry {
    pub key: String,
    pub value: String,
}

/// Named scalar results plus breakdown tables, configuration echo, warnings
/// and free-form notes. Insertion order is preserved everywhere.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metrics: Vec<MetricValue>,
    pub tables: Vec<Table>,
    pub config: Vec<ConfigEntry>,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
}

impl MetricReport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces a scalar.
    pub fn set_metric(&mut self, name: impl Into<String>, value: f64) {
        let name = name.into();
        match self.metrics.iter_mut().find(|m| m.name == name) {
            Some(m) => m.value = value,
            None => self.metrics.push(MetricValue { name, value }),
        }
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.name == name).map(|m| m.value)
    }

    pub fn set_config(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.config.iter_mut().find(|c| c.key == key) {
            Some(c) => c.value = value,
            None => self.config.push(ConfigEntry { key, value }),
        }
    }

    pub fn config_value(&self, key: &str) -> Option<&str> {
        self.config.iter().find(|c| c.key == key).map(|c| c.value.as_str())
    }

    pub fn add_table(
        &mut self,
        name: impl Into<String>,
        row_labels: Vec<String>,
        column_labels: Vec<String>,
        values: Vec<Vec<f64>>,
    ) {
        self.tables.push(Table {
            name: name.into(),
            row_labels,
            column_labels,
            values,
        });
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        self.warnings.push(message.into());
    }

    pub fn note(&mut self, message: impl Into<String>) {
        self.notes.push(message.into());
    }

    /// Checks that every value is finite and tables are rectangular.
    pub fn validate(&self) -> Result<()> {
        if let Some(m) = self.metrics.iter().find(|m| !m.value.is_finite()) {
            return Err(Error::Numerical(format!("metric {} is not finite", m.name)));
        }
        for t in &self.tables {
            if t.values.len() != t.row_labels.len()
                || t.values.iter().any(|r| r.len() != t.column_labels.len())
            {
                return Err(Error::Data(format!("table {} is not rectangular", t.name)));
            }
            if t.values.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("table {} has non-finite entries", t.name)));
            }
        }
        Ok(())
    }
}
