//! Exact branch-and-bound MILP solver on top of the rational simplex.
//!
//! Best-bound node selection (ties broken toward older nodes), branching
//! on the most fractional integer variable (ties toward the lowest
//! index). Supports the early-termination modes the verification
//! algorithms need: node/time limits, "stop once the global bound proves
//! <= tau", and "stop once an incumbent exceeds tau". Deterministic for
//! identical inputs and controls (time limits excepted).

use crate::ip::IpModel;
use crate::rat::{floor_int, rat_int, Rat};
use crate::simplex::{solve_lp, LpError, LpOutcome, LpProblem};
use num_traits::Zero;
use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::time::Instant;

#[derive(Debug, Clone, Default)]
pub struct SolveControls {
    pub node_limit: Option<u64>,
    pub time_limit_ms: Option<u64>,
    /// Stop (status BoundStop) once the global upper bound is <= this.
    pub stop_if_bound_at_most: Option<Rat>,
    /// Stop (status IncumbentStop) once an incumbent is > this.
    pub stop_if_incumbent_above: Option<Rat>,
    pub collect_solution_pool: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    BoundStop,
    IncumbentStop,
    NodeLimit,
    TimeLimit,
    Infeasible,
    Unbounded,
    QuadUnsupported,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub incumbent_value: Option<Rat>,
    pub incumbent_point: Option<Vec<Rat>>,
    /// Valid global upper bound on the optimum (maximization). For
    /// Infeasible / QuadUnsupported outcomes this is not meaningful.
    pub best_bound: Rat,
    pub nodes_processed: u64,
    pub solution_pool: Vec<Vec<Rat>>,
    pub root_lp_value: Option<Rat>,
}

/// Maps an LP-relaxation point to a (hopefully feasible) integral
/// assignment; the solver re-checks feasibility exactly before use.
pub type Heuristic<'a> = dyn Fn(&[Rat]) -> Option<Vec<Rat>> + 'a;

struct Node {
    bound: Rat,
    id: u64,
    lo: Vec<Option<Rat>>,
    hi: Vec<Option<Rat>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.id == other.id
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.bound, Reverse(self.id)).cmp(&(other.bound, Reverse(other.id)))
    }
}

pub fn solve_mip(
    model: &IpModel,
    controls: &SolveControls,
    heuristic: Option<&Heuristic>,
) -> Result<SolveOutcome, LpError> {
    let start = Instant::now();
    let mut outcome = SolveOutcome {
        status: SolveStatus::Optimal,
        incumbent_value: None,
        incumbent_point: None,
        best_bound: Rat::zero(),
        nodes_processed: 0,
        solution_pool: Vec::new(),
        root_lp_value: None,
    };
    if model.quad.is_some() {
        outcome.status = SolveStatus::QuadUnsupported;
        return Ok(outcome);
    }
    let base = LpProblem::from_ip(model)?;
    let integer_vars: Vec<usize> = model
        .vars()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.integral)
        .map(|(j, _)| j)
        .collect();

    let mut heap: BinaryHeap<Node> = BinaryHeap::new();
    let mut next_id = 0u64;
    heap.push(Node {
        // Placeholder bound for the root; replaced by its LP value.
        bound: Rat::zero(),
        id: next_id,
        lo: base.lo.clone(),
        hi: base.hi.clone(),
    });
    next_id += 1;
    let mut root = true;

    macro_rules! global_bound {
        ($heap:expr, $outcome:expr) => {{
            let mut gb = $outcome.incumbent_value;
            if let Some(top) = $heap.peek() {
                gb = Some(match gb {
                    Some(v) if v >= top.bound => v,
                    _ => top.bound,
                });
            }
            gb
        }};
    }

    loop {
        if let Some(limit) = controls.time_limit_ms {
            if start.elapsed().as_millis() as u64 >= limit && !root {
                outcome.status = SolveStatus::TimeLimit;
                break;
            }
        }
        if !root {
            if let (Some(tau), Some(gb)) =
                (&controls.stop_if_bound_at_most, global_bound!(heap, outcome))
            {
                if gb <= *tau {
                    outcome.status = SolveStatus::BoundStop;
                    outcome.best_bound = gb;
                    return Ok(outcome);
                }
            }
        }
        let Some(node) = heap.pop() else {
            if outcome.incumbent_value.is_some() {
                outcome.status = SolveStatus::Optimal;
                outcome.best_bound = outcome.incumbent_value.unwrap();
            } else {
                outcome.status = SolveStatus::Infeasible;
            }
            return Ok(outcome);
        };
        if let Some(limit) = controls.node_limit {
            if outcome.nodes_processed >= limit {
                outcome.status = SolveStatus::NodeLimit;
                heap.push(node);
                break;
            }
        }
        // A node whose inherited bound cannot beat the incumbent is pruned
        // without an LP solve.
        if let Some(inc) = &outcome.incumbent_value {
            if !root && node.bound <= *inc {
                continue;
            }
        }

        let mut lp = base.clone();
        lp.lo = node.lo.clone();
        lp.hi = node.hi.clone();
        outcome.nodes_processed += 1;
        let res = solve_lp(&lp)?;
        let (value, point) = match res {
            LpOutcome::Infeasible => {
                if root {
                    outcome.status = SolveStatus::Infeasible;
                    return Ok(outcome);
                }
                root = false;
                continue;
            }
            LpOutcome::Unbounded => {
                outcome.status = SolveStatus::Unbounded;
                return Ok(outcome);
            }
            LpOutcome::Optimal { value, point } => (value, point),
        };
        if root {
            outcome.root_lp_value = Some(value);
        }
        root = false;

        // Rounding heuristic: any exact-feasible point it returns can
        // become the incumbent.
        if let Some(h) = heuristic {
            if let Some(cand) = h(&point) {
                if model.is_feasible(&cand) {
                    let v = model.objective_value(&cand);
                    record_solution(model, controls, &mut outcome, v, cand);
                }
            }
        }

        if let Some(inc) = &outcome.incumbent_value {
            if value <= *inc {
                if stop_on_incumbent(controls, &outcome) {
                    outcome.status = SolveStatus::IncumbentStop;
                    outcome.best_bound = global_bound!(heap, outcome).unwrap_or(value);
                    return Ok(outcome);
                }
                continue;
            }
        }

        // Most fractional integer variable; ties toward the lowest index.
        let mut branch: Option<(usize, Rat)> = None; // (var, |frac - 1/2|)
        let half = Rat::new(1, 2);
        for &j in &integer_vars {
            let x = point[j];
            if x.is_integer() {
                continue;
            }
            let frac = x - rat_int(floor_int(&x));
            let dist = if frac >= half { frac - half } else { half - frac };
            match &branch {
                Some((_, best)) if dist >= *best => {}
                _ => branch = Some((j, dist)),
            }
        }

        match branch {
            None => {
                // Integral LP optimum: new incumbent (it beats the current
                // one, by the bound test above).
                debug_assert!(model.is_feasible(&point));
                record_solution(model, controls, &mut outcome, value, point);
            }
            Some((j, _)) => {
                let x = point[j];
                let floor = rat_int(floor_int(&x));
                let mut lo_child = node.lo.clone();
                let mut hi_child = node.hi.clone();
                hi_child[j] = Some(floor);
                heap.push(Node {
                    bound: value,
                    id: next_id,
                    lo: node.lo.clone(),
                    hi: hi_child,
                });
                next_id += 1;
                lo_child[j] = Some(floor + rat_int(1));
                heap.push(Node {
                    bound: value,
                    id: next_id,
                    lo: lo_child,
                    hi: node.hi.clone(),
                });
                next_id += 1;
            }
        }

        if stop_on_incumbent(controls, &outcome) {
            outcome.status = SolveStatus::IncumbentStop;
            outcome.best_bound = global_bound!(heap, outcome)
                .unwrap_or_else(|| outcome.incumbent_value.unwrap());
            return Ok(outcome);
        }
    }

    // Resource stop (NodeLimit / TimeLimit): report the tightest bound.
    outcome.best_bound = global_bound!(heap, outcome).unwrap_or_else(Rat::zero);
    Ok(outcome)
}

fn stop_on_incumbent(controls: &SolveControls, outcome: &SolveOutcome) -> bool {
    match (&controls.stop_if_incumbent_above, &outcome.incumbent_value) {
        (Some(tau), Some(inc)) => inc > tau,
        _ => false,
    }
}

fn record_solution(
    model: &IpModel,
    controls: &SolveControls,
    outcome: &mut SolveOutcome,
    value: Rat,
    point: Vec<Rat>,
) {
    debug_assert!(model.is_feasible(&point));
    let _ = model;
    if controls.collect_solution_pool && !outcome.solution_pool.contains(&point) {
        outcome.solution_pool.push(point.clone());
    }
    let better = match &outcome.incumbent_value {
        None => true,
        Some(v) => value > *v,
    };
    if better {
        outcome.incumbent_value = Some(value);
        outcome.incumbent_point = Some(point);
    }
}
