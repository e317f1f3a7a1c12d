//! Run report structure and its on-disk forms: a JSON document holding
//! everything, and flat CSV tables with fixed column order.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::domain::Triplet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Triplet evolution with contrastive refinement.
    Evolution,
    /// Every prompt refined from the seed alone; no reproduction.
    SeedOnly,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Evolution => "evolution",
            Strategy::SeedOnly => "seed-only",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationTrace {
    pub generation: usize,
    pub triplets: Vec<Triplet>,
    /// PC of the evaluated prefix of `triplets`.
    pub fitness: Vec<f64>,
    pub elite: usize,
    /// Highest PC seen for this class up to and including this generation.
    pub best_so_far: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub generation: usize,
    pub triplet: usize,
    pub pc: f64,
    pub batch: usize,
    /// Distance between the batch mean and the victim's class mean.
    pub l2_distance: Option<f64>,
    pub tokens: Vec<usize>,
    pub initial_loss: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: usize,
    pub queries: usize,
    pub seeds: usize,
    pub positives: usize,
    pub negatives: usize,
    pub generations: Vec<GenerationTrace>,
    pub evaluations: Vec<EvalRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub k: usize,
    /// `None` where a class harvested too few positives for the k-NN radius.
    pub per_class: Vec<Option<f64>>,
    /// Mean over classes, counting undefined classes as zero coverage.
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub strategy: Strategy,
    pub attacker_accuracy: f64,
    pub recall: Option<RecallReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub strategy: Strategy,
    pub config: RunConfig,
    pub victim_accuracy: f64,
    pub total_queries: usize,
    pub classes: Vec<ClassReport>,
    pub attacker_accuracy: f64,
    pub attacker_accuracy_soft: Option<f64>,
    pub recall: Option<RecallReport>,
    pub ablation: Option<BaselineSummary>,
    pub wall_clock_secs: f64,
}

impl RunReport {
    /// Copy with timing zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_clock_secs: 0.0,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable")
    }

    pub fn from_json(s: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

pub const REPORT_FILE: &str = "report.json";
pub const FITNESS_FILE: &str = "fitness_trace.csv";
pub const PC_L2_FILE: &str = "pc_l2_pairs.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

pub const FITNESS_HEADER: [&str; 4] = ["class", "generation", "triplet", "pc"];
pub const PC_L2_HEADER: [&str; 5] = ["class", "generation", "triplet", "pc", "l2_distance"];
pub const SUMMARY_HEADER: [&str; 11] = [
    "seed",
    "strategy",
    "classes",
    "budget_per_class",
    "total_queries",
    "victim_accuracy",
    "attacker_accuracy",
    "attacker_accuracy_soft",
    "ablation_accuracy",
    "recall",
    "ablation_recall",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn table<const N: usize>(header: [&str; N], rows: impl IntoIterator<Item = [String; N]>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

pub fn fitness_csv(report: &RunReport) -> String {
    table(
        FITNESS_HEADER,
        report.classes.iter().flat_map(|c| {
            c.evaluations.iter().map(move |e| {
                [
                    c.class.to_string(),
                    e.generation.to_string(),
                    e.triplet.to_string(),
                    e.pc.to_string(),
                ]
            })
        }),
    )
}

pub fn pc_l2_csv(report: &RunReport) -> String {
    table(
        PC_L2_HEADER,
        report.classes.iter().flat_map(|c| {
            c.evaluations.iter().filter_map(move |e| {
                e.l2_distance.map(|d| {
                    [
                        c.class.to_string(),
                        e.generation.to_string(),
                        e.triplet.to_string(),
                        e.pc.to_string(),
                        d.to_string(),
                    ]
                })
            })
        }),
    )
}

pub fn summary_csv(report: &RunReport) -> String {
    let ablation = report.ablation.as_ref();
    table(
        SUMMARY_HEADER,
        [[
            report.seed.to_string(),
            report.strategy.as_str().to_string(),
            report.classes.len().to_string(),
            report.config.budget.to_string(),
            report.total_queries.to_string(),
            report.victim_accuracy.to_string(),
            report.attacker_accuracy.to_string(),
            opt(report.attacker_accuracy_soft),
            opt(ablation.map(|a| a.attacker_accuracy)),
            opt(report.recall.as_ref().map(|r| r.mean)),
            opt(ablation.and_then(|a| a.recall.as_ref()).map(|r| r.mean)),
        ]],
    )
}

/// Writes the JSON report and the CSV tables into `dir`; returns the paths.
pub fn emit_reports(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        (REPORT_FILE, report.to_json() + "\n"),
        (FITNESS_FILE, fitness_csv(report)),
        (PC_L2_FILE, pc_l2_csv(report)),
        (SUMMARY_FILE, summary_csv(report)),
    ];
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
