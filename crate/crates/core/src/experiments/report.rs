use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::ARTIFACT_VERSION;
use crate::error::{Error, Result};
use crate::spectral::BoundaryCondition;

/// CSV header; matches the field order of [`Row`].
pub const CSV_COLUMNS: [&str; 13] = [
    "experiment",
    "level",
    "bc",
    "k",
    "s",
    "q",
    "j",
    "index",
    "T",
    "dt",
    "quantity",
    "value",
    "reference",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::invalid(
                "format",
                format!("`{other}` is neither csv nor json"),
            )),
        }
    }
}

/// One labeled number together with the parameters that produced it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub experiment: String,
    pub level: usize,
    pub bc: BoundaryCondition,
    pub k: Option<u32>,
    pub s: Option<f64>,
    pub q: Option<f64>,
    pub j: Option<usize>,
    /// Basis index, derivative order or step count, depending on the quantity.
    pub index: Option<usize>,
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub quantity: String,
    pub value: f64,
    pub reference: Option<f64>,
}

impl Row {
    pub fn new(experiment: &str, level: usize, bc: BoundaryCondition) -> Self {
        Self {
            experiment: experiment.into(),
            level,
            bc,
            k: None,
            s: None,
            q: None,
            j: None,
            index: None,
            horizon: None,
            dt: None,
            quantity: String::new(),
            value: f64::NAN,
            reference: None,
        }
    }

    /// Copy of `self` carrying a quantity and its value.
    pub fn with(&self, quantity: &str, value: f64) -> Self {
        Self {
            quantity: quantity.into(),
            value,
            ..self.clone()
        }
    }

    pub fn reference(mut self, reference: f64) -> Self {
        self.reference = Some(reference);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    /// Passed only because there was nothing to check.
    pub vacuous: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            vacuous: false,
            detail: detail.into(),
        }
    }

    pub fn vacuous(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: true,
            vacuous: true,
            detail: "no rows to check".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub params: serde_json::Value,
    pub rows: Vec<Row>,
    pub verdicts: Vec<Verdict>,
    pub artifact_version: String,
    pub basis_fingerprint: Option<String>,
}

impl ExperimentReport {
    pub fn new(
        experiment: &str,
        params: serde_json::Value,
        basis_fingerprint: Option<String>,
    ) -> Self {
        Self {
            experiment: experiment.into(),
            params,
            rows: Vec::new(),
            verdicts: Vec::new(),
            artifact_version: ARTIFACT_VERSION.into(),
            basis_fingerprint,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    /// Rows with the given quantity, in insertion order.
    pub fn select<'a>(&'a self, quantity: &'a str) -> impl Iterator<Item = &'a Row> + 'a {
        self.rows.iter().filter(move |r| r.quantity == quantity)
    }

    /// Appends another report's rows and verdicts, prefixing verdict names.
    pub fn absorb(&mut self, other: ExperimentReport) {
        self.rows.extend(other.rows);
        self.verdicts
            .extend(other.verdicts.into_iter().map(|v| Verdict {
                name: format!("{}.{}", other.experiment, v.name),
                ..v
            }));
    }

    /// Metadata and verdicts as `#` comment lines, then the header and rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let fingerprint = self.basis_fingerprint.as_deref().unwrap_or("-");
        let _ = writeln!(
            out,
            "# experiment={} artifact_version={} basis_fingerprint={fingerprint}",
            self.experiment, self.artifact_version
        );
        let _ = writeln!(out, "# params={}", self.params);
        for v in &self.verdicts {
            let _ = writeln!(
                out,
                "# verdict {} passed={} vacuous={} {}",
                v.name, v.passed, v.vacuous, v.detail
            );
        }
        let mut writer = csv::Writer::from_writer(Vec::new());
        if self.rows.is_empty() {
            writer
                .write_record(CSV_COLUMNS)
                .expect("in-memory writes succeed");
        }
        for r in &self.rows {
            writer.serialize(r).expect("rows serialize to flat records");
        }
        let body = writer.into_inner().expect("in-memory writes succeed");
        out + &String::from_utf8(body).expect("csv output is UTF-8")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports hold only serializable values") + "\n"
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }

    pub fn write(&self, path: &Path, format: OutputFormat) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.render(format))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentReport {
        let mut r =
            ExperimentReport::new("demo", serde_json::json!({"level": 2}), Some("abc".into()));
        let base = Row {
            k: Some(1),
            s: Some(0.3),
            ..Row::new("demo", 2, BoundaryCondition::Dirichlet)
        };
        r.rows.push(base.with("ratio", 0.1).reference(0.25));
        r.rows.push(Row {
            j: Some(3),
            ..base.with("ratio", 1e-20)
        });
        r.verdicts
            .push(Verdict::new("bounded", true, "max/min 1.5"));
        r
    }

    #[test]
    fn csv_layout() {
        let csv = sample().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("# experiment=demo artifact_version="));
        assert_eq!(lines[3], CSV_COLUMNS.join(","));
        assert_eq!(lines[4], "demo,2,dirichlet,1,0.3,,,,,,ratio,0.1,0.25");
        assert_eq!(lines[5], "demo,2,dirichlet,1,0.3,,3,,,,ratio,1e-20,");
        for line in &lines[4..] {
            assert_eq!(line.split(',').count(), CSV_COLUMNS.len());
        }
    }

    #[test]
    fn json_mirrors_rows() {
        let v: serde_json::Value = serde_json::from_str(&sample().to_json()).unwrap();
        assert_eq!(v["rows"][0]["quantity"], "ratio");
        assert_eq!(v["rows"][0]["T"], serde_json::Value::Null);
        assert_eq!(v["rows"][1]["j"], 3);
        assert_eq!(v["verdicts"][0]["passed"], true);
    }

    #[test]
    fn absorb_prefixes_verdicts() {
        let mut all = ExperimentReport::new("verify", serde_json::Value::Null, None);
        all.absorb(sample());
        assert_eq!(all.rows.len(), 2);
        assert_eq!(all.verdicts[0].name, "demo.bounded");
        assert!(all.passed());
        all.verdicts.push(Verdict::new("x", false, ""));
        assert!(!all.passed());
    }
}
