//! Machine-readable run reports: one CSV row per case plus a JSON manifest.
//! Output is byte-deterministic for a fixed (config, seed): rows are emitted
//! in generation order and floats use the shortest round-trip formatting.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Row {
    pub id: String,
    pub case: String,
    pub measured: f64,
    pub budget: f64,
    pub verdict: bool,
    pub note: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvStamp {
    pub grid_h: f64,
    pub k_max: u32,
    pub scale_count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub experiment: String,
    pub env: EnvStamp,
    pub rows: Vec<Row>,
    /// named summary statistics (max, median, trend slopes)
    pub summary: Vec<(String, f64)>,
    /// named JSON artifacts written next to the manifest
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub artifacts: Vec<(String, serde_json::Value)>,
}

impl RunReport {
    pub fn new(experiment: &str, env: EnvStamp) -> Self {
        RunReport {
            experiment: experiment.into(),
            env,
            rows: Vec::new(),
            summary: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn push(
        &mut self,
        id: impl Into<String>,
        case: impl Into<String>,
        measured: f64,
        budget: f64,
        verdict: bool,
        note: impl Into<String>,
    ) {
        self.rows.push(Row {
            id: id.into(),
            case: case.into(),
            measured,
            budget,
            verdict,
            note: note.into(),
        });
    }

    pub fn stat(&mut self, name: impl Into<String>, value: f64) {
        self.summary.push((name.into(), value));
    }

    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.verdict)
    }

    pub fn failed_rows(&self) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(|r| !r.verdict)
    }

    /// Keep only the row with the given id (the `--only` contract).
    pub fn retain_only(&mut self, id: &str) {
        self.rows.retain(|r| r.id == id);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,case,measured,budget,verdict,note\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                csv_field(&r.id),
                csv_field(&r.case),
                r.measured,
                r.budget,
                r.verdict,
                csv_field(&r.note)
            ));
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output dir {}", dir.display()))?;
        std::fs::write(dir.join("rows.csv"), self.to_csv())?;
        let manifest = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join("manifest.json"), manifest)?;
        for (name, value) in &self.artifacts {
            std::fs::write(
                dir.join(format!("{name}.json")),
                serde_json::to_string_pretty(value)?,
            )?;
        }
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join("manifest.json"))
            .with_context(|| format!("reading manifest from {}", dir.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Human-readable summary, one line per row plus the stats.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "experiment {} (h = {}, seed = {})\n",
            self.experiment, self.env.grid_h, self.env.seed
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "[{}] {} | {} | measured {:.6e} budget {:.6e}{}\n",
                if r.verdict { "PASS" } else { "FAIL" },
                r.id,
                r.case,
                r.measured,
                r.budget,
                if r.note.is_empty() { String::new() } else { format!(" | {}", r.note) }
            ));
        }
        for (name, value) in &self.summary {
            out.push_str(&format!("  {name} = {value:.6}\n"));
        }
        out.push_str(&format!(
            "{}: {} rows, {} failed\n",
            if self.pass() { "PASS" } else { "FAIL" },
            self.rows.len(),
            self.rows.iter().filter(|r| !r.verdict).count()
        ));
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Least-squares slope of y against x.
pub fn regression_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return 0.0;
    }
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
