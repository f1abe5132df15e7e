//! Machine-readable run summaries and the markdown report.

use serde::Serialize;
use std::path::{Path, PathBuf};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: String,
    pub description: String,
    pub value: f64,
    pub threshold: f64,
    /// "max" when pass means value <= threshold, "min" when >=
    pub sense: String,
    pub pass: bool,
}

impl CriterionResult {
    pub fn le(id: &str, description: &str, value: f64, threshold: f64) -> Self {
        Self {
            id: id.into(),
            description: description.into(),
            value,
            threshold,
            sense: "max".into(),
            pass: value <= threshold && value.is_finite(),
        }
    }

    pub fn ge(id: &str, description: &str, value: f64, threshold: f64) -> Self {
        Self {
            id: id.into(),
            description: description.into(),
            value,
            threshold,
            sense: "min".into(),
            pass: value >= threshold && value.is_finite(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub criteria: Vec<CriterionResult>,
    pub artifacts: Vec<String>,
    pub all_pass: bool,
}

pub struct ReportSink {
    pub out_dir: PathBuf,
    pub artifacts: Vec<String>,
}

impl ReportSink {
    pub fn new(out_dir: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(out_dir)?;
        Ok(Self {
            out_dir: out_dir.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> anyhow::Result<()> {
        let path = self.out_dir.join(name);
        css_core::io::write_csv(&path, header, rows)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    pub fn finish(
        self,
        scenario: &str,
        seed: u64,
        criteria: Vec<CriterionResult>,
    ) -> anyhow::Result<Summary> {
        let all_pass = criteria.iter().all(|c| c.pass);
        let summary = Summary {
            schema_version: SUMMARY_SCHEMA_VERSION,
            scenario: scenario.to_string(),
            seed,
            criteria,
            artifacts: self.artifacts,
            all_pass,
        };
        let json = serde_json::to_string_pretty(&summary)?;
        std::fs::write(self.out_dir.join("summary.json"), &json)?;
        std::fs::write(self.out_dir.join("report.md"), render_markdown(&summary))?;
        Ok(summary)
    }
}

pub fn render_markdown(s: &Summary) -> String {
    let mut out = String::new();
    out.push_str(&format!("# Scenario `{}`\n\n", s.scenario));
    out.push_str(&format!(
        "seed: {}  \noverall: **{}**\n\n",
        s.seed,
        if s.all_pass { "PASS" } else { "FAIL" }
    ));
    out.push_str("| check | value | threshold | sense | verdict |\n");
    out.push_str("|---|---|---|---|---|\n");
    for c in &s.criteria {
        out.push_str(&format!(
            "| {} — {} | {:.6e} | {:.6e} | {} | {} |\n",
            c.id,
            c.description,
            c.value,
            c.threshold,
            c.sense,
            if c.pass { "pass" } else { "FAIL" }
        ));
    }
    if !s.artifacts.is_empty() {
        out.push_str("\nArtifacts:\n");
        for a in &s.artifacts {
            out.push_str(&format!("- `{a}`\n"));
        }
    }
    out
}
