//! Report schema shared by every subcommand.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub const REPORT_FORMAT: &str = "crown-report-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format: String,
    pub tool: ToolInfo,
    pub command: String,
    pub network: NetworkInfo,
    pub norm: String,
    pub methods: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub search: Option<SearchInfo>,
    pub records: Vec<PointRecord>,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkInfo {
    pub path: String,
    pub sha256: String,
    pub activation: String,
    pub widths: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchInfo {
    pub target: String,
    pub rel_tol: f64,
    pub eps_init: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub id: String,
    pub label: Option<usize>,
    pub predicted: usize,
    /// Misclassified points are not certified.
    pub skipped: bool,
    /// Certification: one entry per (target, method).
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub targets: Vec<TargetRecord>,
    /// Bounds: one entry per method.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub bounds: Vec<BoundsRecord>,
    /// Compare: per target, improvement of each method over fastlin.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub improvements: Vec<ImprovementRecord>,
    pub time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRecord {
    pub target: usize,
    pub method: String,
    pub norm: String,
    pub radius: f64,
    pub iterations: usize,
    pub capped: bool,
    pub time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsRecord {
    pub method: String,
    pub norm: String,
    pub eps: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementRecord {
    pub target: usize,
    pub method: String,
    /// `(r_method − r_fastlin) / r_fastlin`; absent when fastlin certified nothing.
    pub improvement: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub points: usize,
    pub skipped: usize,
    /// Mean over certified points of the smallest radius across targets.
    pub mean_radius: BTreeMap<String, f64>,
    pub mean_time_ms: BTreeMap<String, f64>,
    /// Relative change of each method's mean radius against fastlin.
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub improvement_vs_fastlin: BTreeMap<String, f64>,
}
