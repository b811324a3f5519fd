//! Benchmark records and the aggregate metrics: shifted geometric mean
//! of solve times, LP gap, and per-method summary tables.

use crate::driver::{Answer, Method, VerifyReport};
use crate::rat::{format_rat, Rat};
use num_traits::Zero;
use serde::{Deserialize, Serialize};

/// One (instance, method) cell of a benchmark campaign.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct BenchRecord {
    pub instance: String,
    pub method: Method,
    pub answer: Answer,
    /// Absent when timings are excluded for reproducibility.
    pub verification_time_ms: Option<u64>,
    pub nodes: u64,
    pub root_lp_value: Option<String>,
    /// (z_LP − z*) / z̄_UB, as a rational string; only when the solve
    /// closed the instance and z̄_UB > 0.
    pub lp_gap: Option<String>,
    pub z_ub: i64,
    pub num_fixings: usize,
    pub num_two_var: usize,
    pub hull_cuts: usize,
    pub hit_time_limit: bool,
    pub status: String,
}

impl BenchRecord {
    pub fn from_report(instance: impl Into<String>, report: &VerifyReport) -> Self {
        let solve = report.solve.as_ref();
        let root = solve.and_then(|s| s.root_lp_value.clone());
        let lp_gap = compute_lp_gap_str(report);
        BenchRecord {
            instance: instance.into(),
            method: report.method,
            answer: report.answer,
            verification_time_ms: report.time_ms,
            nodes: solve.map_or(0, |s| s.nodes),
            root_lp_value: root,
            lp_gap,
            z_ub: report.z_ub,
            num_fixings: report.num_fixings,
            num_two_var: report.num_two_var,
            hull_cuts: report.hull_cuts,
            hit_time_limit: solve.is_some_and(|s| s.status == "time_limit"),
            status: solve.map_or_else(|| "none".to_string(), |s| s.status.clone()),
        }
    }
}

/// (z_LP − z*) / z̄_UB. None when z̄_UB = 0 (identical output rows).
pub fn lp_gap(z_lp: &Rat, z_star: &Rat, z_ub: &Rat) -> Option<Rat> {
    if z_ub.is_zero() {
        return None;
    }
    Some((*z_lp - *z_star) / *z_ub)
}

fn compute_lp_gap_str(report: &VerifyReport) -> Option<String> {
    let solve = report.solve.as_ref()?;
    if solve.status != "optimal" {
        return None;
    }
    let z_lp = crate::rat::parse_rat(solve.root_lp_value.as_ref()?).ok()?;
    let z_star = crate::rat::parse_rat(solve.incumbent_value.as_ref()?).ok()?;
    lp_gap(&z_lp, &z_star, &crate::rat::rat_int(report.z_ub as i128))
        .as_ref()
        .map(format_rat)
}

/// Shifted geometric mean (Π (vᵢ + shift))^{1/n} − shift; 0 for an empty
/// slice. Computed in log space to avoid overflow.
pub fn shifted_geomean(values: &[f64], shift: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let log_sum: f64 = values.iter().map(|v| (v + shift).ln()).sum();
    (log_sum / values.len() as f64).exp() - shift
}

/// Per-method aggregate row, mirroring the usual benchmark-table layout:
/// shifted geometric mean of times (shift 1, in seconds), arithmetic mean
/// LP gap, time-limit hits in a parenthesized count.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BenchAggregate {
    pub method: Method,
    pub instances: usize,
    pub verified: usize,
    pub falsified: usize,
    pub unknown: usize,
    pub geomean_time_s: Option<f64>,
    pub mean_lp_gap: Option<String>,
    pub median_nodes: u64,
    pub time_limit_hits: usize,
}

fn median(mut values: Vec<u64>) -> u64 {
    if values.is_empty() {
        return 0;
    }
    values.sort_unstable();
    values[(values.len() - 1) / 2]
}

/// Groups records by method (in `ALL_METHODS` order of first appearance
/// preserved by a stable sort on the method name) and aggregates.
pub fn aggregate(records: &[BenchRecord]) -> Vec<BenchAggregate> {
    let mut methods: Vec<Method> = Vec::new();
    for r in records {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    methods
        .into_iter()
        .map(|method| {
            let rows: Vec<&BenchRecord> =
                records.iter().filter(|r| r.method == method).collect();
            let times: Vec<f64> = rows
                .iter()
                .filter_map(|r| r.verification_time_ms)
                .map(|ms| ms as f64 / 1000.0)
                .collect();
            let gaps: Vec<Rat> = rows
                .iter()
                .filter_map(|r| r.lp_gap.as_deref())
                .filter_map(|s| crate::rat::parse_rat(s).ok())
                .collect();
            let mean_gap = if gaps.is_empty() {
                None
            } else {
                let n = gaps.len() as i128;
                let sum: Rat = gaps.iter().copied().sum();
                Some(format_rat(&(sum / crate::rat::rat_int(n))))
            };
            BenchAggregate {
                method,
                instances: rows.len(),
                verified: rows.iter().filter(|r| r.answer == Answer::Verified).count(),
                falsified: rows.iter().filter(|r| r.answer == Answer::Falsified).count(),
                unknown: rows.iter().filter(|r| r.answer == Answer::Unknown).count(),
                geomean_time_s: (!times.is_empty()).then(|| shifted_geomean(&times, 1.0)),
                mean_lp_gap: mean_gap,
                median_nodes: median(rows.iter().map(|r| r.nodes).collect()),
                time_limit_hits: rows.iter().filter(|r| r.hit_time_limit).count(),
            }
        })
        .collect()
}
