//! End-to-end verification drivers: the five solve methods, the
//! maximum-radius binary search, and the external-solver hook for models
//! with the quadratic ℓ2 constraint.

use crate::bnn::{BnnModel, InputSpec, ModelError, Norm};
use crate::cuts::{phase_one, phase_two, CutConfig, CutError, LayerCensus};
use crate::formulation::{
    build_many_ip, build_one_ip, FormulationError, OuterApprox, VerificationIp,
};
use crate::hull::{constraint_generation, HullError};
use crate::ip::IpModel;
use crate::mip::{solve_mip, SolveControls, SolveOutcome, SolveStatus};
use crate::rat::{format_rat, parse_rat, rat, rat_int, Rat};
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::PathBuf;
use std::process::Command;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

#[derive(Debug, thiserror::Error)]
pub enum DriverError {
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error(transparent)]
    Cut(#[from] CutError),
    #[error(transparent)]
    Hull(#[from] HullError),
    #[error(transparent)]
    Lp(#[from] crate::simplex::LpError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("external solver failed: {0}")]
    External(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "many-ip")]
    ManyIp,
    #[serde(rename = "1-ip")]
    OneIp,
    #[serde(rename = "1-ip+hg")]
    OneIpHg,
    #[serde(rename = "1-ip+fix")]
    OneIpFix,
    #[serde(rename = "1-ip+fix+2var")]
    OneIpFix2Var,
}

pub const ALL_METHODS: [Method; 5] = [
    Method::ManyIp,
    Method::OneIp,
    Method::OneIpHg,
    Method::OneIpFix,
    Method::OneIpFix2Var,
];

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::ManyIp => "many-ip",
            Method::OneIp => "1-ip",
            Method::OneIpHg => "1-ip+hg",
            Method::OneIpFix => "1-ip+fix",
            Method::OneIpFix2Var => "1-ip+fix+2var",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ALL_METHODS
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method `{s}` (expected one of many-ip, 1-ip, 1-ip+hg, 1-ip+fix, 1-ip+fix+2var)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Answer {
    Verified,
    Falsified,
    Unknown,
}

impl Answer {
    pub fn exit_code(self) -> i32 {
        match self {
            Answer::Verified => 0,
            Answer::Falsified => 1,
            Answer::Unknown => 2,
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Answer::Verified => "VERIFIED",
            Answer::Falsified => "FALSIFIED",
            Answer::Unknown => "UNKNOWN",
        })
    }
}

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub method: Method,
    pub time_limit_ms: u64,
    /// Budget for the cut phases (phase two / hull generation), capped by
    /// the remaining overall budget.
    pub cut_limit_ms: u64,
    pub cuts: CutConfig,
    /// Command invoked as `<cmd…> <lp-path> <result-path>` for models the
    /// internal engine cannot solve (the ℓ2 quadratic constraint).
    pub external_solver: Option<String>,
    /// Echo a falsifying input in the report when one is found.
    pub want_witness: bool,
    /// Timings make reports non-reproducible; off by default.
    pub include_timings: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            method: Method::OneIpFix2Var,
            time_limit_ms: 3_600_000,
            cut_limit_ms: 2_700_000,
            cuts: CutConfig::default(),
            external_solver: None,
            want_witness: false,
            include_timings: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct SolveSummary {
    pub status: String,
    pub incumbent_value: Option<String>,
    pub best_bound: String,
    pub nodes: u64,
    pub root_lp_value: Option<String>,
}

fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Optimal => "optimal",
        SolveStatus::BoundStop => "bound_stop",
        SolveStatus::IncumbentStop => "incumbent_stop",
        SolveStatus::NodeLimit => "node_limit",
        SolveStatus::TimeLimit => "time_limit",
        SolveStatus::Infeasible => "infeasible",
        SolveStatus::Unbounded => "unbounded",
        SolveStatus::QuadUnsupported => "quad_unsupported",
    }
}

impl SolveSummary {
    fn from_outcome(out: &SolveOutcome) -> Self {
        SolveSummary {
            status: status_name(out.status).to_string(),
            incumbent_value: out.incumbent_value.as_ref().map(format_rat),
            best_bound: format_rat(&out.best_bound),
            nodes: out.nodes_processed,
            root_lp_value: out.root_lp_value.as_ref().map(format_rat),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ClassSolve {
    pub class: usize,
    #[serde(flatten)]
    pub solve: SolveSummary,
}

/// A falsifying q-scaled input with the class it gets confused with.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Witness {
    pub y: Vec<i64>,
    pub class: usize,
    pub margin: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub answer: Answer,
    pub method: Method,
    pub norm: String,
    pub epsilon: String,
    pub true_class: usize,
    /// Closed-form upper bound on the margin objective (z̄_UB).
    pub z_ub: i64,
    pub num_fixings: usize,
    pub num_two_var: usize,
    pub census: Vec<LayerCensus>,
    pub hull_iterations: usize,
    pub hull_cuts: usize,
    pub hull_lp_trace: Vec<String>,
    /// Per-class solves (Many-IP only).
    pub per_class: Vec<ClassSolve>,
    pub solve: Option<SolveSummary>,
    pub witness: Option<Witness>,
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_ms: Option<u64>,
}

struct Clock {
    start: Instant,
    limit_ms: u64,
}

impl Clock {
    fn new(limit_ms: u64) -> Self {
        Clock {
            start: Instant::now(),
            limit_ms,
        }
    }
    fn elapsed_ms(&self) -> u64 {
        self.start.elapsed().as_millis() as u64
    }
    fn remaining_ms(&self) -> u64 {
        self.limit_ms.saturating_sub(self.elapsed_ms())
    }
}

fn final_controls(time_limit_ms: u64) -> SolveControls {
    SolveControls {
        node_limit: None,
        time_limit_ms: Some(time_limit_ms),
        stop_if_bound_at_most: Some(Rat::zero()),
        stop_if_incumbent_above: Some(Rat::zero()),
        collect_solution_pool: false,
    }
}

/// Maps a finished solve of a verification IP (maximize the margin) to an
/// answer: a proven bound ≤ 0 verifies, an incumbent > 0 falsifies.
fn classify(out: &SolveOutcome) -> (Answer, Option<String>) {
    match out.status {
        SolveStatus::Optimal => {
            if out.incumbent_value.as_ref().is_some_and(|v| *v > Rat::zero()) {
                (Answer::Falsified, None)
            } else {
                (Answer::Verified, None)
            }
        }
        SolveStatus::BoundStop => (Answer::Verified, None),
        SolveStatus::IncumbentStop => (Answer::Falsified, None),
        SolveStatus::NodeLimit | SolveStatus::TimeLimit => {
            if out.best_bound <= Rat::zero() {
                (Answer::Verified, None)
            } else if out.incumbent_value.as_ref().is_some_and(|v| *v > Rat::zero()) {
                (Answer::Falsified, None)
            } else {
                let which = status_name(out.status);
                (Answer::Unknown, Some(format!("{which} reached with bound > 0")))
            }
        }
        SolveStatus::Infeasible => (
            Answer::Unknown,
            Some("verification IP infeasible; this should not happen for a valid model".into()),
        ),
        SolveStatus::Unbounded => (
            Answer::Unknown,
            Some("verification IP unbounded; this should not happen".into()),
        ),
        SolveStatus::QuadUnsupported => (
            Answer::Unknown,
            Some("l2 ball needs an external solver (--external-solver)".into()),
        ),
    }
}

fn extract_witness(ip: &VerificationIp, out: &SolveOutcome) -> Option<Witness> {
    let point = out.incumbent_point.as_ref()?;
    Some(Witness {
        y: ip.extract_input(point),
        class: ip.extract_class(point)?,
        margin: format_rat(out.incumbent_value.as_ref()?),
    })
}

fn solve_ip(
    ip: &VerificationIp,
    controls: &SolveControls,
) -> Result<SolveOutcome, DriverError> {
    let heuristic = |p: &[Rat]| ip.rounding_heuristic(p);
    Ok(solve_mip(&ip.model, controls, Some(&heuristic))?)
}

/// Decides ε-robustness of the model around the spec's anchor with the
/// configured method and budgets.
pub fn verify_bnn(
    bnn: &BnnModel,
    spec: &InputSpec,
    config: &VerifyConfig,
) -> Result<VerifyReport, DriverError> {
    spec.validate(bnn)?;
    let clock = Clock::new(config.time_limit_ms);
    let mut report = VerifyReport {
        schema_version: 1,
        answer: Answer::Unknown,
        method: config.method,
        norm: spec.norm.to_string(),
        epsilon: format_rat(&spec.epsilon),
        true_class: spec.true_class,
        z_ub: bnn.margin_upper_bound(spec.true_class)?,
        num_fixings: 0,
        num_two_var: 0,
        census: Vec::new(),
        hull_iterations: 0,
        hull_cuts: 0,
        hull_lp_trace: Vec::new(),
        per_class: Vec::new(),
        solve: None,
        witness: None,
        reason: None,
        time_ms: None,
    };

    match config.method {
        Method::ManyIp => verify_many_ip(bnn, spec, config, &clock, &mut report)?,
        _ => verify_one_ip(bnn, spec, config, &clock, &mut report)?,
    }

    if config.include_timings {
        report.time_ms = Some(clock.elapsed_ms());
    }
    if !config.want_witness {
        report.witness = None;
    }
    Ok(report)
}

fn verify_many_ip(
    bnn: &BnnModel,
    spec: &InputSpec,
    config: &VerifyConfig,
    clock: &Clock,
    report: &mut VerifyReport,
) -> Result<(), DriverError> {
    let classes = bnn.num_classes();
    let per_class_budget = config.time_limit_ms / (classes as u64 - 1).max(1);
    let mut all_verified = true;
    let mut total_nodes = 0u64;
    let mut worst_bound: Option<Rat> = None;
    let mut best_incumbent: Option<Rat> = None;
    let mut best_root: Option<Rat> = None;

    for t in (0..classes).filter(|&t| t != spec.true_class) {
        let ip = build_many_ip(bnn, spec, t)?;
        let budget = per_class_budget.min(clock.remaining_ms());
        let out = solve_ip(&ip, &final_controls(budget))?;
        total_nodes += out.nodes_processed;
        if worst_bound.as_ref().is_none_or(|w| out.best_bound > *w) {
            worst_bound = Some(out.best_bound);
        }
        if let Some(v) = &out.incumbent_value {
            if best_incumbent.as_ref().is_none_or(|b| v > b) {
                best_incumbent = Some(*v);
            }
        }
        if let Some(r) = &out.root_lp_value {
            if best_root.as_ref().is_none_or(|b| r > b) {
                best_root = Some(*r);
            }
        }
        report.per_class.push(ClassSolve {
            class: t,
            solve: SolveSummary::from_outcome(&out),
        });
        let (answer, reason) = classify(&out);
        match answer {
            Answer::Falsified => {
                report.answer = Answer::Falsified;
                report.witness = extract_witness(&ip, &out);
                report.solve = synth_many_summary(
                    total_nodes,
                    &worst_bound,
                    &best_incumbent,
                    &best_root,
                );
                return Ok(());
            }
            Answer::Unknown => {
                all_verified = false;
                if report.reason.is_none() {
                    report.reason = reason.map(|r| format!("class {t}: {r}"));
                }
            }
            Answer::Verified => {}
        }
    }
    report.answer = if all_verified {
        Answer::Verified
    } else {
        Answer::Unknown
    };
    report.solve = synth_many_summary(total_nodes, &worst_bound, &best_incumbent, &best_root);
    Ok(())
}

fn synth_many_summary(
    nodes: u64,
    worst_bound: &Option<Rat>,
    best_incumbent: &Option<Rat>,
    best_root: &Option<Rat>,
) -> Option<SolveSummary> {
    Some(SolveSummary {
        status: "many_ip_aggregate".to_string(),
        incumbent_value: best_incumbent.as_ref().map(format_rat),
        best_bound: format_rat(worst_bound.as_ref()?),
        nodes,
        root_lp_value: best_root.as_ref().map(format_rat),
    })
}

fn verify_one_ip(
    bnn: &BnnModel,
    spec: &InputSpec,
    config: &VerifyConfig,
    clock: &Clock,
    report: &mut VerifyReport,
) -> Result<(), DriverError> {
    let with_fixings = matches!(config.method, Method::OneIpFix | Method::OneIpFix2Var);
    let mut outer = OuterApprox::empty(bnn.num_hidden());
    let mut cut_state = None;
    if with_fixings {
        let (o, inner, census) = phase_one(bnn, spec, &config.cuts)?;
        outer = o;
        cut_state = Some(inner);
        report.census = census;
    }

    let mut ip = build_one_ip(bnn, spec)?;
    ip.apply_outer_approx(&outer)?;

    if config.method == Method::OneIpFix2Var && ip.model.quad.is_none() {
        // Cheap probe: one node with the phase-1 fixings; only a
        // root-level decision skips phase two.
        let mut controls = final_controls(clock.remaining_ms());
        controls.node_limit = Some(1);
        let probe = solve_ip(&ip, &controls)?;
        let (answer, _) = classify(&probe);
        if answer != Answer::Unknown {
            report.answer = answer;
            report.witness = extract_witness(&ip, &probe);
            report.solve = Some(SolveSummary::from_outcome(&probe));
            finish_counts(report, &outer);
            return Ok(());
        }
    }

    if config.method == Method::OneIpFix2Var {
        let mut inner = cut_state.expect("phase one ran");
        let mut cuts = config.cuts.clone();
        cuts.phase_time_limit_ms = Some(config.cut_limit_ms.min(clock.remaining_ms()));
        phase_two(bnn, spec, &mut outer, &mut inner, &mut report.census, &cuts)?;
        ip = build_one_ip(bnn, spec)?;
        ip.apply_outer_approx(&outer)?;
    }

    if config.method == Method::OneIpHg {
        let hull = constraint_generation(
            &mut ip,
            Some(config.cut_limit_ms.min(clock.remaining_ms())),
        )?;
        report.hull_iterations = hull.iterations;
        report.hull_cuts = hull.cuts.len();
        report.hull_lp_trace = hull.lp_trace.iter().map(format_rat).collect();
    }

    let out = solve_ip(&ip, &final_controls(clock.remaining_ms()))?;
    if out.status == SolveStatus::QuadUnsupported {
        if let Some(cmd) = &config.external_solver {
            let (answer, reason, summary) = solve_external(cmd, &ip.model)?;
            report.answer = answer;
            report.reason = reason;
            report.solve = Some(summary);
            finish_counts(report, &outer);
            return Ok(());
        }
    }
    let (answer, reason) = classify(&out);
    report.answer = answer;
    report.reason = reason;
    report.witness = extract_witness(&ip, &out);
    report.solve = Some(SolveSummary::from_outcome(&out));
    finish_counts(report, &outer);
    Ok(())
}

fn finish_counts(report: &mut VerifyReport, outer: &OuterApprox) {
    report.num_fixings = outer.num_fixings();
    report.num_two_var = outer.num_two_var();
}

static EXTERNAL_RUN_ID: AtomicU64 = AtomicU64::new(0);

/// Exports the model in LP format, runs `<cmd…> <lp-path> <result-path>`,
/// and parses the result file. The result file holds one key per line:
/// `status optimal|limit|infeasible|unbounded`, optionally
/// `objective <rational>` and `bound <rational>` (integers, `a/b`, or
/// decimals).
fn solve_external(
    cmd: &str,
    model: &IpModel,
) -> Result<(Answer, Option<String>, SolveSummary), DriverError> {
    let id = EXTERNAL_RUN_ID.fetch_add(1, Ordering::Relaxed);
    let stem = format!("bnnverify-{}-{}", std::process::id(), id);
    let lp_path: PathBuf = std::env::temp_dir().join(format!("{stem}.lp"));
    let out_path: PathBuf = std::env::temp_dir().join(format!("{stem}.result"));
    {
        let mut file = std::fs::File::create(&lp_path)?;
        model.export_lp_text(&mut file)?;
    }

    let mut parts = cmd.split_whitespace();
    let program = parts
        .next()
        .ok_or_else(|| DriverError::External("empty solver command".into()))?;
    let status = Command::new(program)
        .args(parts)
        .arg(&lp_path)
        .arg(&out_path)
        .status()
        .map_err(|e| DriverError::External(format!("failed to launch `{program}`: {e}")))?;
    if !status.success() {
        return Err(DriverError::External(format!(
            "`{cmd}` exited with {status}"
        )));
    }
    let text = std::fs::read_to_string(&out_path)
        .map_err(|e| DriverError::External(format!("cannot read result file: {e}")))?;
    let _ = std::fs::remove_file(&lp_path);
    let _ = std::fs::remove_file(&out_path);

    let mut status_word = None;
    let mut objective = None;
    let mut bound = None;
    for line in text.lines() {
        let mut it = line.split_whitespace();
        match (it.next(), it.next()) {
            (Some("status"), Some(w)) => status_word = Some(w.to_string()),
            (Some("objective"), Some(v)) => {
                objective =
                    Some(parse_rat(v).map_err(|e| DriverError::External(e.to_string()))?)
            }
            (Some("bound"), Some(v)) => {
                bound = Some(parse_rat(v).map_err(|e| DriverError::External(e.to_string()))?)
            }
            _ => {}
        }
    }
    let status_word =
        status_word.ok_or_else(|| DriverError::External("result file lacks a status line".into()))?;

    let (answer, reason) = match status_word.as_str() {
        "optimal" => match &objective {
            Some(v) if *v > Rat::zero() => (Answer::Falsified, None),
            Some(_) => (Answer::Verified, None),
            None => (
                Answer::Unknown,
                Some("external solver reported optimal without an objective".to_string()),
            ),
        },
        "limit" => {
            if bound.as_ref().is_some_and(|b| *b <= Rat::zero()) {
                (Answer::Verified, None)
            } else if objective.as_ref().is_some_and(|v| *v > Rat::zero()) {
                (Answer::Falsified, None)
            } else {
                (Answer::Unknown, Some("external solver hit its limit".to_string()))
            }
        }
        "infeasible" | "unbounded" => (
            Answer::Unknown,
            Some(format!("external solver reported {status_word}")),
        ),
        other => {
            return Err(DriverError::External(format!(
                "unrecognized status `{other}` in result file"
            )))
        }
    };
    let summary = SolveSummary {
        status: format!("external_{status_word}"),
        incumbent_value: objective.as_ref().map(format_rat),
        best_bound: bound
            .as_ref()
            .or(objective.as_ref())
            .map(format_rat)
            .unwrap_or_else(|| "unknown".to_string()),
        nodes: 0,
        root_lp_value: None,
    };
    Ok((answer, reason, summary))
}

/// Norm-specific default starting radii for the binary search.
pub fn default_eps_init(norm: Norm) -> Rat {
    match norm {
        Norm::L1 => rat_int(1),
        Norm::Linf => rat(1, 255),
        Norm::L2 => rat(1, 32),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct EpsProbe {
    pub eps: String,
    pub answer: Answer,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct MaxEpsReport {
    pub schema_version: u32,
    pub method: Method,
    pub norm: String,
    pub eps_lb: String,
    pub eps_ub: Option<String>,
    pub trace: Vec<EpsProbe>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_ms: Option<u64>,
}

/// Binary search for the largest verified radius: verified probes raise
/// the lower bound and double ε (or bisect toward the upper bound);
/// falsified or unknown probes become the upper bound and bisect down.
pub fn max_eps(
    bnn: &BnnModel,
    spec: &InputSpec,
    config: &VerifyConfig,
    eps_init: Rat,
    max_iter: u32,
) -> Result<MaxEpsReport, DriverError> {
    let clock = Clock::new(config.time_limit_ms);
    let mut lb = Rat::zero();
    let mut ub: Option<Rat> = None;
    let mut eps = eps_init;
    let mut trace = Vec::new();
    for _ in 0..max_iter {
        let probe_spec = InputSpec {
            epsilon: eps,
            ..spec.clone()
        };
        let report = verify_bnn(bnn, &probe_spec, config)?;
        trace.push(EpsProbe {
            eps: format_rat(&eps),
            answer: report.answer,
        });
        // UNKNOWN counts as not verified: the bracket stays sound.
        if report.answer == Answer::Verified {
            lb = eps;
            eps = match &ub {
                None => eps * rat_int(2),
                Some(u) => (eps + *u) / rat_int(2),
            };
        } else {
            ub = Some(eps);
            eps = (eps + lb) / rat_int(2);
        }
    }
    Ok(MaxEpsReport {
        schema_version: 1,
        method: config.method,
        norm: spec.norm.to_string(),
        eps_lb: format_rat(&lb),
        eps_ub: ub.as_ref().map(format_rat),
        trace,
        time_ms: config.include_timings.then(|| clock.elapsed_ms()),
    })
}
