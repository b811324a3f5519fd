//! Layerwise derived valid inequalities: variable fixings and
//! two-variable inequalities.
//!
//! Phase one fixes neurons using analytic subproblem
//! solvers: closed forms over X⁰ for layer 1 (all three norms) and a
//! greedy rule for deeper layers whose previous-layer outer approximation
//! is fixings-only. Phase two (Algs. 3–4) revisits unfixed neurons and
//! candidate pairs with MILP-backed validity checks, screened by an inner
//! approximation of reachable points and ordered by a score, with a
//! consecutive-failure cutoff. Every threshold comparison against
//! c_i·R_i/2 is done in exact integer-scaled arithmetic.

use crate::bnn::{BnnModel, InputSpec, ModelError, Norm};
use crate::formulation::{build_input_domain, FormulationError, OuterApprox};
use crate::ip::{IpModel, Sense, VarRef};
use crate::mip::{solve_mip, SolveControls, SolveOutcome, SolveStatus};
use crate::rat::{floor_int, rat, rat_int, Int, Rat};
use crate::simplex::LpError;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::time::Instant;

#[derive(Debug, thiserror::Error)]
pub enum CutError {
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone)]
pub struct CutConfig {
    /// Consecutive failed two-variable candidates before giving up on a
    /// layer.
    pub max_fail: u32,
    /// Inner-approximation pool size per layer (FIFO eviction).
    pub pool_cap: usize,
    /// Per-candidate MILP budget; exceeding it yields Undecided.
    pub subproblem_node_budget: u64,
    pub subproblem_time_ms: u64,
    /// Generate two-variable inequalities at the first hidden layer
    /// (rarely productive on dense layers, so off by default).
    pub gen_twovar_layer1: bool,
    /// Overall budget for phase two, measured from its start.
    pub phase_time_limit_ms: Option<u64>,
}

impl Default for CutConfig {
    fn default() -> Self {
        CutConfig {
            max_fail: 100,
            pool_cap: 4096,
            subproblem_node_budget: 10_000,
            subproblem_time_ms: 1_000,
            gen_twovar_layer1: false,
            phase_time_limit_ms: None,
        }
    }
}

/// Per-layer tally of what the cut phases produced.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCensus {
    pub fixed0: usize,
    pub fixed1: usize,
    pub twovar: usize,
    pub screened: usize,
    pub undecided: usize,
}

/// Deduplicated FIFO pool.
#[derive(Debug, Clone)]
struct Pool<T: Ord + Clone> {
    cap: usize,
    order: VecDeque<T>,
    members: BTreeSet<T>,
}

impl<T: Ord + Clone> Pool<T> {
    fn new(cap: usize) -> Self {
        Pool {
            cap,
            order: VecDeque::new(),
            members: BTreeSet::new(),
        }
    }

    /// Returns true iff the value was new.
    fn insert(&mut self, v: T) -> bool {
        if self.members.contains(&v) {
            return false;
        }
        if self.order.len() >= self.cap {
            if let Some(old) = self.order.pop_front() {
                self.members.remove(&old);
            }
        }
        self.members.insert(v.clone());
        self.order.push_back(v);
        true
    }
}

/// Inner approximations: per layer, points known to be reachable from the
/// previous layer's outer approximation, used only to screen candidates.
#[derive(Debug, Clone)]
pub struct InnerApprox {
    x0: Pool<Vec<i64>>,
    /// hidden[ℓ-1]: binary pool for layer ℓ.
    hidden: Vec<Pool<Vec<u8>>>,
}

impl InnerApprox {
    pub fn new(num_hidden: usize, cap: usize) -> Self {
        InnerApprox {
            x0: Pool::new(cap),
            hidden: vec![Pool::new(cap); num_hidden],
        }
    }

    pub fn pool0(&self) -> &VecDeque<Vec<i64>> {
        &self.x0.order
    }

    /// Pool for hidden layer `layer` (1-based).
    pub fn pool(&self, layer: usize) -> &VecDeque<Vec<u8>> {
        &self.hidden[layer - 1].order
    }

    pub fn len(&self, layer: usize) -> usize {
        if layer == 0 {
            self.x0.order.len()
        } else {
            self.hidden[layer - 1].order.len()
        }
    }

    pub fn is_empty(&self, layer: usize) -> bool {
        self.len(layer) == 0
    }

    /// Inserts q-scaled inputs (members of X⁰) and their full propagation
    /// traces.
    pub fn update_from_inputs(
        &mut self,
        bnn: &BnnModel,
        points: &[Vec<i64>],
    ) -> Result<(), ModelError> {
        for y in points {
            if !self.x0.insert(y.clone()) {
                continue;
            }
            let prop = bnn.propagate(y)?;
            for (layer, bits) in prop.hidden.into_iter().enumerate() {
                self.hidden[layer].insert(bits);
            }
        }
        Ok(())
    }

    /// Inserts layer-ℓ points (ℓ ≥ 1) and propagates each fresh
    /// one forward through the remaining layers.
    pub fn update(
        &mut self,
        bnn: &BnnModel,
        layer: usize,
        points: &[Vec<u8>],
    ) -> Result<(), ModelError> {
        let num_hidden = bnn.num_hidden();
        for x in points {
            if !self.hidden[layer - 1].insert(x.clone()) {
                continue;
            }
            let mut cur = x.clone();
            for next in layer + 1..=num_hidden {
                let a = bnn.affine_hidden(next, &cur)?;
                cur = a.iter().map(|&v| (v >= 0) as u8).collect();
                self.hidden[next - 1].insert(cur.clone());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateKind {
    Fix,
    TwoVar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Valid,
    Invalid,
    Undecided,
}

#[derive(Debug, Clone)]
pub struct CandidateResult {
    pub kind: CandidateKind,
    pub layer: usize,
    pub i: usize,
    pub ci: i8,
    /// (k, c_k) for two-variable candidates.
    pub pair: Option<(usize, i8)>,
    pub verdict: Verdict,
    /// Subproblem value in the natural units of c_i Σ W_ij x_j, when one
    /// was computed.
    pub subproblem_value: Option<Rat>,
    pub harvested: usize,
    /// True when the inner pool settled the candidate without a solve.
    pub screened: bool,
}

/// Maximizes c_i Σ_j W¹_ij x_j over X⁰ in closed form; returns the exact
/// optimum and a witnessing q-scaled input. ℓ1: greedy unit moves within
/// the budget ⌊qε⌋. ℓ∞: per-coordinate clamp. ℓ2: the largest uniform
/// step level that fits the squared budget, then single increments on the
/// unsaturated coordinates.
pub fn solve_layer1_fix_subproblem(
    bnn: &BnnModel,
    spec: &InputSpec,
    i: usize,
    ci: i8,
) -> (Rat, Vec<i64>) {
    let q = bnn.q as i64;
    let w = &bnn.layers[0].weights[i];
    let s: Vec<i64> = w.iter().map(|&wj| ci as i64 * wj as i64).collect();
    let mut y = spec.anchor.clone();
    match spec.norm {
        Norm::Linf => {
            let radius = floor_int(&(spec.epsilon * rat_int(q as Int))) as i64;
            for (j, yj) in y.iter_mut().enumerate() {
                match s[j] {
                    1 => *yj = (*yj + radius).min(q),
                    -1 => *yj = (*yj - radius).max(0),
                    _ => {}
                }
            }
        }
        Norm::L1 => {
            let mut budget = floor_int(&(spec.epsilon * rat_int(q as Int))) as i64;
            for (j, yj) in y.iter_mut().enumerate() {
                if budget == 0 {
                    break;
                }
                let room = match s[j] {
                    1 => q - *yj,
                    -1 => *yj,
                    _ => 0,
                };
                let step = room.min(budget);
                *yj += s[j] * step;
                budget -= step;
            }
        }
        Norm::L2 => {
            let budget = floor_int(&(spec.epsilon * spec.epsilon * rat_int((q * q) as Int))) as i64;
            let caps: Vec<i64> = y
                .iter()
                .zip(&s)
                .map(|(&yj, &sj)| match sj {
                    1 => q - yj,
                    -1 => yj,
                    _ => 0,
                })
                .collect();
            let cost = |m: i64| caps.iter().map(|&c| c.min(m) * c.min(m)).sum::<i64>();
            let (mut lo, mut hi) = (0i64, q);
            while lo < hi {
                let mid = (lo + hi + 1) / 2;
                if cost(mid) <= budget {
                    lo = mid;
                } else {
                    hi = mid - 1;
                }
            }
            let m = lo;
            let mut levels: Vec<i64> = caps.iter().map(|&c| c.min(m)).collect();
            let mut rem = budget - cost(m);
            // One extra unit per unsaturated coordinate while the squared
            // budget allows; all candidates cost 2m+1, so index order is
            // as good as any.
            for (j, level) in levels.iter_mut().enumerate() {
                if caps[j] > *level && 2 * *level + 1 <= rem {
                    rem -= 2 * *level + 1;
                    *level += 1;
                }
            }
            for (j, yj) in y.iter_mut().enumerate() {
                *yj += s[j] * levels[j];
            }
        }
    }
    let z_num: i64 = s.iter().zip(&y).map(|(&sj, &yj)| sj * yj).sum();
    (rat(z_num as Int, q as Int), y)
}

/// Maximizes c_i Σ_j W_ij x_j over {0,1}^{n^{ℓ-1}} restricted by fixings
/// only: each free x_j goes to 1 exactly when c_i W_ij = 1.
pub fn solve_fixonly_subproblem(
    bnn: &BnnModel,
    layer: usize,
    i: usize,
    ci: i8,
    fixings: &BTreeMap<usize, u8>,
) -> (i64, Vec<u8>) {
    let w = &bnn.layers[layer - 1].weights[i];
    let x: Vec<u8> = w
        .iter()
        .enumerate()
        .map(|(j, &wj)| {
            fixings
                .get(&j)
                .copied()
                .unwrap_or((ci as i64 * wj as i64 == 1) as u8)
        })
        .collect();
    let z = x
        .iter()
        .zip(w)
        .map(|(&xj, &wj)| ci as i64 * wj as i64 * xj as i64)
        .sum();
    (z, x)
}

/// Translates a stopped solve into a verdict against the (scaled)
/// threshold τ: proven bound ≤ τ means the candidate is valid, an
/// incumbent > τ refutes it, anything else stays undecided.
fn interpret(out: &SolveOutcome, tau: &Rat) -> Verdict {
    match out.status {
        SolveStatus::Infeasible => Verdict::Valid,
        SolveStatus::QuadUnsupported => Verdict::Undecided,
        SolveStatus::Unbounded => Verdict::Invalid,
        SolveStatus::Optimal | SolveStatus::BoundStop => {
            if out.best_bound <= *tau {
                Verdict::Valid
            } else {
                Verdict::Invalid
            }
        }
        SolveStatus::IncumbentStop => Verdict::Invalid,
        SolveStatus::NodeLimit | SolveStatus::TimeLimit => {
            if out.best_bound <= *tau {
                Verdict::Valid
            } else if out.incumbent_value.as_ref().is_some_and(|v| v > tau) {
                Verdict::Invalid
            } else {
                Verdict::Undecided
            }
        }
    }
}

fn subproblem_controls(config: &CutConfig, tau: Rat) -> SolveControls {
    SolveControls {
        node_limit: Some(config.subproblem_node_budget),
        time_limit_ms: Some(config.subproblem_time_ms),
        stop_if_bound_at_most: Some(tau),
        stop_if_incumbent_above: Some(tau),
        collect_solution_pool: true,
    }
}

/// MILP subproblem over the layer-(ℓ−1) outer approximation (ℓ ≥ 2):
/// maximize 2 c_i Σ W_ij x_j, optionally under the two-variable side
/// constraint for (k, c_k). Harvests the solver's solution pool as binary
/// vectors.
fn solve_hidden_subproblem(
    bnn: &BnnModel,
    layer: usize,
    i: usize,
    ci: i8,
    side: Option<(usize, i8)>,
    outer: &OuterApprox,
    config: &CutConfig,
) -> Result<(SolveOutcome, Vec<Vec<u8>>, Rat), CutError> {
    let n_prev = bnn.width(layer - 1);
    let mut model = IpModel::new();
    let xs: Vec<VarRef> = (0..n_prev)
        .map(|j| model.add_var(&format!("x_{j}"), Rat::zero(), rat_int(1), true))
        .collect::<Result<_, _>>()
        .map_err(FormulationError::from)?;
    outer.constrain_layer(&mut model, layer - 1, &xs)?;
    if let Some((k, ck)) = side {
        // 2 c_k Σ W_kj x_j ≥ c_k R_k (q-free since ℓ ≥ 2).
        let rk = bnn.layer_constants(layer, k)?.r2q;
        let terms: Vec<(VarRef, Rat)> = bnn.layers[layer - 1].weights[k]
            .iter()
            .enumerate()
            .filter(|(_, &wj)| wj != 0)
            .map(|(j, &wj)| (xs[j], rat_int(2 * ck as Int * wj as Int)))
            .collect();
        model
            .add_constraint(
                terms,
                Sense::Ge,
                rat_int(ck as Int * rk as Int),
                format!("side[k={k}]"),
            )
            .map_err(FormulationError::from)?;
    }
    model.objective.terms = bnn.layers[layer - 1].weights[i]
        .iter()
        .enumerate()
        .filter(|(_, &wj)| wj != 0)
        .map(|(j, &wj)| (xs[j], rat_int(2 * ci as Int * wj as Int)))
        .collect();
    let tau = rat_int(ci as Int * bnn.layer_constants(layer, i)?.r2q as Int);
    let out = solve_mip(&model, &subproblem_controls(config, tau), None)?;
    let points = out
        .solution_pool
        .iter()
        .map(|p| xs.iter().map(|v| (p[v.0] == rat_int(1)) as u8).collect())
        .collect();
    Ok((out, points, tau))
}

/// MILP subproblem over X⁰ for layer-1 two-variable candidates: maximize
/// 2 c_i Σ W¹_ij y_j under the side constraint, thresholds scaled by 2q.
fn solve_input_subproblem(
    bnn: &BnnModel,
    spec: &InputSpec,
    i: usize,
    ci: i8,
    side: (usize, i8),
    config: &CutConfig,
) -> Result<(SolveOutcome, Vec<Vec<i64>>, Rat), CutError> {
    let (mut model, ys, _) = build_input_domain(bnn, spec)?;
    let (k, ck) = side;
    let rk = bnn.layer_constants(1, k)?.r2q; // = q·R_k
    let terms: Vec<(VarRef, Rat)> = bnn.layers[0].weights[k]
        .iter()
        .enumerate()
        .filter(|(_, &wj)| wj != 0)
        .map(|(j, &wj)| (ys[j], rat_int(2 * ck as Int * wj as Int)))
        .collect();
    model
        .add_constraint(
            terms,
            Sense::Ge,
            rat_int(ck as Int * rk as Int),
            format!("side[k={k}]"),
        )
        .map_err(FormulationError::from)?;
    model.objective.terms = bnn.layers[0].weights[i]
        .iter()
        .enumerate()
        .filter(|(_, &wj)| wj != 0)
        .map(|(j, &wj)| (ys[j], rat_int(2 * ci as Int * wj as Int)))
        .collect();
    let tau = rat_int(ci as Int * bnn.layer_constants(1, i)?.r2q as Int);
    let out = solve_mip(&model, &subproblem_controls(config, tau), None)?;
    let points = out
        .solution_pool
        .iter()
        .map(|p| ys.iter().map(|v| p[v.0].to_integer() as i64).collect())
        .collect();
    Ok((out, points, tau))
}

/// Checks the fixing candidate x_i^ℓ = (1−c_i)/2: screens against the
/// inner pool, then solves the validity subproblem — analytically at
/// layer 1 or when the previous layer's outer approximation is
/// fixings-only, by MILP otherwise. Harvested feasible points feed the
/// inner approximation.
#[allow(clippy::too_many_arguments)]
pub fn check_fixing(
    bnn: &BnnModel,
    spec: &InputSpec,
    layer: usize,
    i: usize,
    ci: i8,
    outer: &OuterApprox,
    inner: &mut InnerApprox,
    config: &CutConfig,
) -> Result<CandidateResult, CutError> {
    let mut result = CandidateResult {
        kind: CandidateKind::Fix,
        layer,
        i,
        ci,
        pair: None,
        verdict: Verdict::Invalid,
        subproblem_value: None,
        harvested: 0,
        screened: false,
    };
    // A cached layer-ℓ point with c_i x_i > (c_i−1)/2 already violates
    // the fixing, so skip the solve.
    let hot = ((1 + ci as i64) / 2) as u8;
    if inner.pool(layer).iter().any(|x| x[i] == hot) {
        result.screened = true;
        return Ok(result);
    }

    if layer == 1 {
        let (z, witness) = solve_layer1_fix_subproblem(bnn, spec, i, ci);
        inner.update_from_inputs(bnn, std::slice::from_ref(&witness))?;
        result.harvested = 1;
        let c = bnn.layer_constants(1, i)?;
        let tau = rat(ci as Int * c.r2q as Int, 2 * bnn.q as Int);
        result.verdict = if z <= tau {
            Verdict::Valid
        } else {
            Verdict::Invalid
        };
        result.subproblem_value = Some(z);
    } else if outer.two_var[layer - 2].is_empty() {
        let (z, witness) = solve_fixonly_subproblem(bnn, layer, i, ci, &outer.fixings[layer - 2]);
        let a = bnn.affine_hidden(layer, &witness)?;
        let image: Vec<u8> = a.iter().map(|&v| (v >= 0) as u8).collect();
        inner.update(bnn, layer, std::slice::from_ref(&image))?;
        result.harvested = 1;
        let r = bnn.layer_constants(layer, i)?.r2q;
        result.verdict = if 2 * z <= ci as i64 * r {
            Verdict::Valid
        } else {
            Verdict::Invalid
        };
        result.subproblem_value = Some(rat_int(z as Int));
    } else {
        let (out, points, tau) = solve_hidden_subproblem(bnn, layer, i, ci, None, outer, config)?;
        let images: Vec<Vec<u8>> = points
            .iter()
            .map(|x| {
                bnn.affine_hidden(layer, x)
                    .map(|a| a.iter().map(|&v| (v >= 0) as u8).collect())
            })
            .collect::<Result<_, _>>()?;
        result.harvested = images.len();
        inner.update(bnn, layer, &images)?;
        result.verdict = interpret(&out, &tau);
        result.subproblem_value = out.incumbent_value.map(|v| v / rat_int(2));
    }
    Ok(result)
}

/// Checks the two-variable candidate c_i x_i + c_k x_k ≤ (c_i+c_k)/2 via
/// the side-constrained subproblem (neuron k held active), with the same
/// screening and harvesting as `check_fixing`.
#[allow(clippy::too_many_arguments)]
pub fn check_twovar(
    bnn: &BnnModel,
    spec: &InputSpec,
    layer: usize,
    i: usize,
    ci: i8,
    k: usize,
    ck: i8,
    outer: &OuterApprox,
    inner: &mut InnerApprox,
    config: &CutConfig,
) -> Result<CandidateResult, CutError> {
    let mut result = CandidateResult {
        kind: CandidateKind::TwoVar,
        layer,
        i,
        ci,
        pair: Some((k, ck)),
        verdict: Verdict::Invalid,
        subproblem_value: None,
        harvested: 0,
        screened: false,
    };
    // Screen: 2(c_i x_i + c_k x_k) > c_i + c_k on a cached point.
    let rhs = ci as i64 + ck as i64;
    if inner
        .pool(layer)
        .iter()
        .any(|x| 2 * (ci as i64 * x[i] as i64 + ck as i64 * x[k] as i64) > rhs)
    {
        result.screened = true;
        return Ok(result);
    }

    if layer == 1 {
        let (out, points, tau) = solve_input_subproblem(bnn, spec, i, ci, (k, ck), config)?;
        result.harvested = points.len();
        inner.update_from_inputs(bnn, &points)?;
        result.verdict = interpret(&out, &tau);
        result.subproblem_value = out
            .incumbent_value
            .map(|v| v / rat_int(2 * bnn.q as Int));
    } else {
        let (out, points, tau) =
            solve_hidden_subproblem(bnn, layer, i, ci, Some((k, ck)), outer, config)?;
        let images: Vec<Vec<u8>> = points
            .iter()
            .map(|x| {
                bnn.affine_hidden(layer, x)
                    .map(|a| a.iter().map(|&v| (v >= 0) as u8).collect())
            })
            .collect::<Result<_, _>>()?;
        result.harvested = images.len();
        inner.update(bnn, layer, &images)?;
        result.verdict = interpret(&out, &tau);
        result.subproblem_value = out.incumbent_value.map(|v| v / rat_int(2));
    }
    Ok(result)
}

/// Score of a two-variable candidate against the layer-ℓ inner pool: the
/// fraction of cached points already at the fixed value, summed over both
/// neurons. Empty pool scores 0.
pub fn score(inner: &InnerApprox, layer: usize, i: usize, ci: i8, k: usize, ck: i8) -> Rat {
    let pool = inner.pool(layer);
    if pool.is_empty() {
        return Rat::zero();
    }
    let want_i = ((1 - ci as i64) / 2) as u8;
    let want_k = ((1 - ck as i64) / 2) as u8;
    let hits = pool.iter().filter(|x| x[i] == want_i).count()
        + pool.iter().filter(|x| x[k] == want_k).count();
    rat(hits as Int, pool.len() as Int)
}

/// Phase one: per layer and candidate sign, the analytic fixing check.
/// Layer-1 witnesses seed the inner approximation (they are genuine X⁰
/// members). Returns the fixings-only outer approximation, the populated
/// inner approximation, and the per-layer census.
pub fn phase_one(
    bnn: &BnnModel,
    spec: &InputSpec,
    config: &CutConfig,
) -> Result<(OuterApprox, InnerApprox, Vec<LayerCensus>), CutError> {
    spec.validate(bnn)?;
    let num_hidden = bnn.num_hidden();
    let mut outer = OuterApprox::empty(num_hidden);
    let mut inner = InnerApprox::new(num_hidden, config.pool_cap);
    let mut census = vec![LayerCensus::default(); num_hidden];
    inner.update_from_inputs(bnn, std::slice::from_ref(&spec.anchor))?;

    for layer in 1..=num_hidden {
        for i in 0..bnn.width(layer) {
            for ci in [-1i8, 1] {
                let valid = if layer == 1 {
                    let (z, witness) = solve_layer1_fix_subproblem(bnn, spec, i, ci);
                    inner.update_from_inputs(bnn, std::slice::from_ref(&witness))?;
                    let c = bnn.layer_constants(1, i)?;
                    z <= rat(ci as Int * c.r2q as Int, 2 * bnn.q as Int)
                } else {
                    let (z, _) =
                        solve_fixonly_subproblem(bnn, layer, i, ci, &outer.fixings[layer - 2]);
                    2 * z <= ci as i64 * bnn.layer_constants(layer, i)?.r2q
                };
                if valid {
                    let bit = ((1 - ci) / 2) as u8;
                    if outer.add_fixing(layer, i, bit)? {
                        if bit == 0 {
                            census[layer - 1].fixed0 += 1;
                        } else {
                            census[layer - 1].fixed1 += 1;
                        }
                    }
                }
            }
        }
    }
    Ok((outer, inner, census))
}

/// Phase two: optionally two-variable generation at layer 1, then per
/// deeper layer a fixing sweep followed by two-variable generation in
/// descending score order with the consecutive-failure cutoff.
pub fn phase_two(
    bnn: &BnnModel,
    spec: &InputSpec,
    outer: &mut OuterApprox,
    inner: &mut InnerApprox,
    census: &mut [LayerCensus],
    config: &CutConfig,
) -> Result<(), CutError> {
    let start = Instant::now();
    if config.gen_twovar_layer1 {
        gen_twovar_ineq(bnn, spec, 1, outer, inner, census, config, &start)?;
    }
    for layer in 2..=bnn.num_hidden() {
        phase_two_fix_var(bnn, spec, layer, outer, inner, census, config, &start)?;
        gen_twovar_ineq(bnn, spec, layer, outer, inner, census, config, &start)?;
    }
    Ok(())
}

fn expired(config: &CutConfig, start: &Instant) -> bool {
    config
        .phase_time_limit_ms
        .is_some_and(|ms| start.elapsed().as_millis() as u64 >= ms)
}

#[allow(clippy::too_many_arguments)]
fn phase_two_fix_var(
    bnn: &BnnModel,
    spec: &InputSpec,
    layer: usize,
    outer: &mut OuterApprox,
    inner: &mut InnerApprox,
    census: &mut [LayerCensus],
    config: &CutConfig,
    start: &Instant,
) -> Result<(), CutError> {
    let unfixed: Vec<usize> = (0..bnn.width(layer))
        .filter(|i| !outer.fixings[layer - 1].contains_key(i))
        .collect();
    for i in unfixed {
        for ci in [-1i8, 1] {
            if expired(config, start) {
                return Ok(());
            }
            let res = check_fixing(bnn, spec, layer, i, ci, outer, inner, config)?;
            if res.screened {
                census[layer - 1].screened += 1;
                continue;
            }
            match res.verdict {
                Verdict::Valid => {
                    let bit = ((1 - ci) / 2) as u8;
                    if outer.add_fixing(layer, i, bit)? {
                        if bit == 0 {
                            census[layer - 1].fixed0 += 1;
                        } else {
                            census[layer - 1].fixed1 += 1;
                        }
                    }
                }
                Verdict::Invalid => {}
                Verdict::Undecided => census[layer - 1].undecided += 1,
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn gen_twovar_ineq(
    bnn: &BnnModel,
    spec: &InputSpec,
    layer: usize,
    outer: &mut OuterApprox,
    inner: &mut InnerApprox,
    census: &mut [LayerCensus],
    config: &CutConfig,
    start: &Instant,
) -> Result<(), CutError> {
    let unfixed: Vec<usize> = (0..bnn.width(layer))
        .filter(|i| !outer.fixings[layer - 1].contains_key(i))
        .collect();
    // Candidates in (i, k, c_i, c_k) lexicographic order; the stable sort
    // by descending score keeps that order on ties.
    let mut candidates: Vec<(usize, i8, usize, i8)> = Vec::new();
    for (a, &i) in unfixed.iter().enumerate() {
        for &k in &unfixed[a + 1..] {
            for ci in [-1i8, 1] {
                for ck in [-1i8, 1] {
                    candidates.push((i, ci, k, ck));
                }
            }
        }
    }
    let mut scored: Vec<(Rat, (usize, i8, usize, i8))> = candidates
        .into_iter()
        .map(|c| (score(inner, layer, c.0, c.1, c.2, c.3), c))
        .collect();
    scored.sort_by(|a, b| b.0.cmp(&a.0));

    let mut fail_count = 0u32;
    for (_, (i, ci, k, ck)) in scored {
        if fail_count >= config.max_fail || expired(config, start) {
            break;
        }
        let res = check_twovar(bnn, spec, layer, i, ci, k, ck, outer, inner, config)?;
        if res.screened {
            census[layer - 1].screened += 1;
            continue;
        }
        match res.verdict {
            Verdict::Valid => {
                outer.two_var[layer - 1].push((i, ci, k, ck));
                census[layer - 1].twovar += 1;
                fail_count = 0;
            }
            Verdict::Invalid => fail_count += 1,
            Verdict::Undecided => {
                census[layer - 1].undecided += 1;
                fail_count += 1;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bnn::Layer;
    use crate::gen::{gen_input, gen_model, SplitMix64};
    use crate::oracle::{
        check_cut_validity, enumerate_x0, exact_reachable, Cut, CutCheck,
    };

    fn layer(weights: Vec<Vec<i8>>, biases: Vec<i64>) -> Layer {
        Layer { weights, biases }
    }

    fn spec(anchor: Vec<i64>, eps: Rat, norm: Norm, tbar: usize) -> InputSpec {
        InputSpec {
            anchor,
            epsilon: eps,
            norm,
            true_class: tbar,
        }
    }

    /// 2-input net whose first-layer row 0 is (1, -1); tail is irrelevant.
    fn row_net(q: u32) -> BnnModel {
        BnnModel::new(
            q,
            vec![
                layer(vec![vec![1, -1]], vec![0]),
                layer(vec![vec![1], vec![-1]], vec![0, 0]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn layer1_worked_examples() {
        // p=1: q=2, x̄=(0.5,0.5), ε=0.5 -> z* = 0.5
        let m = row_net(2);
        let s = spec(vec![1, 1], rat(1, 2), Norm::L1, 0);
        let (z, y) = solve_layer1_fix_subproblem(&m, &s, 0, 1);
        assert_eq!(z, rat(1, 2));
        assert_eq!(y, vec![2, 1]);

        // p=inf: q=4, x̄=(0.5,0.5), ε=0.25 -> x*=(0.75,0.25), z*=0.5
        let m = row_net(4);
        let s = spec(vec![2, 2], rat(1, 4), Norm::Linf, 0);
        let (z, y) = solve_layer1_fix_subproblem(&m, &s, 0, 1);
        assert_eq!(z, rat(1, 2));
        assert_eq!(y, vec![3, 1]);

        // p=2: q=2, x̄=(0.5,0.5), ε=0.5 -> z*=0.5
        let m = row_net(2);
        let s = spec(vec![1, 1], rat(1, 2), Norm::L2, 0);
        let (z, _) = solve_layer1_fix_subproblem(&m, &s, 0, 1);
        assert_eq!(z, rat(1, 2));

        // ε=0 -> z* at the anchor, any norm
        for norm in [Norm::L1, Norm::L2, Norm::Linf] {
            let s = spec(vec![1, 1], Rat::zero(), norm, 0);
            let (z, y) = solve_layer1_fix_subproblem(&m, &s, 0, 1);
            assert_eq!(z, Rat::zero()); // (1·1 + (-1)·1)/2
            assert_eq!(y, vec![1, 1]);
        }
    }

    /// Analytic layer-1 solvers agree with brute force over X⁰, all
    /// norms, and the witness is feasible and achieves the optimum.
    #[test]
    fn layer1_matches_brute_force() {
        let mut rng = SplitMix64::new(0xC0FFEE);
        for case in 0..40u64 {
            let n0 = 2 + (case % 3) as usize;
            let q = 1 + (rng.next_u64() % 3) as u32;
            let m = gen_model(&[n0, 2, 2], q, &rat(3, 4), -1, 1, rng.next_u64()).unwrap();
            let anchor: Vec<i64> = (0..n0).map(|_| rng.below(q as u64 + 1) as i64).collect();
            for norm in [Norm::L1, Norm::L2, Norm::Linf] {
                let eps = rat(rng.below(5) as Int, 2);
                let s = spec(anchor.clone(), eps, norm, 0);
                for i in 0..2 {
                    for ci in [-1i8, 1] {
                        let (z, witness) = solve_layer1_fix_subproblem(&m, &s, i, ci);
                        let w = &m.layers[0].weights[i];
                        let val = |y: &[i64]| {
                            let num: i64 = w
                                .iter()
                                .zip(y)
                                .map(|(&wj, &yj)| ci as i64 * wj as i64 * yj)
                                .sum();
                            rat(num as Int, q as Int)
                        };
                        let pts = enumerate_x0(&m, &s, 1_000_000).unwrap();
                        let best = pts.iter().map(|y| val(y)).max().unwrap();
                        assert_eq!(z, best, "case {case} norm {norm} i={i} ci={ci}");
                        assert!(pts.contains(&witness), "witness must be in X0");
                        assert_eq!(val(&witness), z, "witness must achieve z*");
                    }
                }
            }
        }
    }

    #[test]
    fn fixonly_worked_examples() {
        let m = BnnModel::new(
            1,
            vec![
                layer(vec![vec![1], vec![1], vec![1]], vec![0, 0, 0]),
                layer(vec![vec![1, -1, 0]], vec![2]),
                layer(vec![vec![1], vec![-1]], vec![0, 0]),
            ],
        )
        .unwrap();
        let none = BTreeMap::new();
        let (z, x) = solve_fixonly_subproblem(&m, 2, 0, 1, &none);
        assert_eq!((z, x), (1, vec![1, 0, 0]));

        let mut fix = BTreeMap::new();
        fix.insert(0usize, 0u8);
        let (z, _) = solve_fixonly_subproblem(&m, 2, 0, 1, &fix);
        assert_eq!(z, 0);

        let (z, x) = solve_fixonly_subproblem(&m, 2, 0, -1, &none);
        assert_eq!((z, x), (1, vec![0, 1, 0]));
    }

    /// The worked fixing example: ℓ=2 row (1,−1,0), b=2 over the full
    /// cube fixes the neuron to 1 (c=−1) and refutes c=+1.
    #[test]
    fn check_fixing_worked_example() {
        let m = BnnModel::new(
            1,
            vec![
                layer(
                    vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]],
                    vec![0, 0, 0],
                ),
                layer(vec![vec![1, -1, 0]], vec![2]),
                layer(vec![vec![1], vec![-1]], vec![0, 0]),
            ],
        )
        .unwrap();
        let s = spec(vec![0, 0, 0], rat(3, 1), Norm::L1, 0);
        let outer = OuterApprox::empty(2);
        let config = CutConfig::default();

        let mut inner = InnerApprox::new(2, 64);
        let res = check_fixing(&m, &s, 2, 0, -1, &outer, &mut inner, &config).unwrap();
        assert_eq!(res.verdict, Verdict::Valid);
        assert_eq!(res.subproblem_value, Some(rat_int(1))); // 1 <= 1.5

        let mut inner = InnerApprox::new(2, 64);
        let res = check_fixing(&m, &s, 2, 0, 1, &outer, &mut inner, &config).unwrap();
        assert_eq!(res.verdict, Verdict::Invalid); // 1 > -1.5
        assert!(!res.screened);
    }

    #[test]
    fn check_fixing_screen() {
        let m = BnnModel::new(
            1,
            vec![
                layer(vec![vec![1, 0], vec![0, 1]], vec![0, 0]),
                layer(vec![vec![1, 1], vec![-1, -1]], vec![0, 0]),
                layer(vec![vec![1, 0], vec![0, 1]], vec![0, 0]),
            ],
        )
        .unwrap();
        let s = spec(vec![0, 0], rat(2, 1), Norm::L1, 0);
        let outer = OuterApprox::empty(2);
        let config = CutConfig::default();
        let mut inner = InnerApprox::new(2, 64);
        // Cache a layer-2 point with x_0 = 0: candidate c=-1 (fix to 1)
        // is screened; x_0 = 1 in the pool does not screen it.
        inner.update(&m, 2, &[vec![1, 0]]).unwrap();
        let res = check_fixing(&m, &s, 2, 0, 1, &outer, &mut inner, &config).unwrap();
        assert!(res.screened);
        let res = check_fixing(&m, &s, 2, 0, -1, &outer, &mut inner, &config).unwrap();
        assert!(!res.screened);
    }

    /// Two-variable fixture: rows (1,1) and (−1,−1) with zero bias over the
    /// full layer-1 cube. Only c_i = c_k = −1 validates.
    fn twovar_fixture() -> (BnnModel, InputSpec) {
        let m = BnnModel::new(
            1,
            vec![
                layer(vec![vec![1, 0], vec![0, 1]], vec![0, 0]),
                layer(vec![vec![1, 1], vec![-1, -1]], vec![0, 0]),
                layer(vec![vec![1, 0], vec![0, 1]], vec![0, 0]),
            ],
        )
        .unwrap();
        let s = spec(vec![0, 0], rat(2, 1), Norm::L1, 0);
        (m, s)
    }

    #[test]
    fn check_twovar_worked_example() {
        let (m, s) = twovar_fixture();
        let outer = OuterApprox::empty(2);
        let config = CutConfig::default();

        let mut inner = InnerApprox::new(2, 64);
        let res = check_twovar(&m, &s, 2, 0, -1, 1, -1, &outer, &mut inner, &config).unwrap();
        assert_eq!(res.verdict, Verdict::Valid); // z* = -2 <= -0.5

        let mut inner = InnerApprox::new(2, 64);
        let res = check_twovar(&m, &s, 2, 0, 1, 1, -1, &outer, &mut inner, &config).unwrap();
        assert_eq!(res.verdict, Verdict::Invalid); // z* = 2 > 0.5
    }

    #[test]
    fn check_twovar_vacuous_on_infeasible_side() {
        // Neuron k with zero row and bias 5: R_k = -5, so the side
        // constraint for c_k = -1 demands 0 >= 5/2 — infeasible.
        let m = BnnModel::new(
            1,
            vec![
                layer(vec![vec![1, 0], vec![0, 1]], vec![0, 0]),
                layer(vec![vec![1, 1], vec![0, 0]], vec![0, 5]),
                layer(vec![vec![1, 0], vec![0, 1]], vec![0, 0]),
            ],
        )
        .unwrap();
        let s = spec(vec![0, 0], rat(2, 1), Norm::L1, 0);
        let outer = OuterApprox::empty(2);
        let mut inner = InnerApprox::new(2, 64);
        let res = check_twovar(
            &m,
            &s,
            2,
            0,
            1,
            1,
            -1,
            &outer,
            &mut inner,
            &CutConfig::default(),
        )
        .unwrap();
        assert_eq!(res.verdict, Verdict::Valid);
        assert_eq!(res.subproblem_value, None);
    }

    #[test]
    fn score_examples() {
        let (m, _) = twovar_fixture();
        let mut inner = InnerApprox::new(2, 64);
        assert_eq!(score(&inner, 2, 0, 1, 1, 1), Rat::zero()); // empty pool
        inner.update(&m, 2, &[vec![0, 0], vec![0, 1]]).unwrap();
        // candidate (i=0,+1,k=1,+1): x_0 = 0 twice, x_1 = 0 once -> 3/2
        assert_eq!(score(&inner, 2, 0, 1, 1, 1), rat(3, 2));
        // all members satisfy both sign conditions -> 2
        assert_eq!(score(&inner, 2, 0, 1, 1, -1), rat(3, 2));
        let mut inner = InnerApprox::new(2, 64);
        inner.update(&m, 2, &[vec![0, 0]]).unwrap();
        assert_eq!(score(&inner, 2, 0, 1, 1, 1), rat_int(2));
        assert_eq!(score(&inner, 2, 0, -1, 1, -1), Rat::zero());
    }

    #[test]
    fn update_in_approx_behaviour() {
        let (m, _) = twovar_fixture();
        let mut inner = InnerApprox::new(2, 64);
        // anchor trace: y=(0,0) -> x1=(0,0) -> x2=(0,1)
        inner.update_from_inputs(&m, &[vec![0, 0]]).unwrap();
        assert_eq!(inner.len(0), 1);
        assert_eq!(inner.pool(1).front().unwrap(), &vec![0, 0]);
        assert_eq!(inner.pool(2).front().unwrap(), &vec![0, 1]);

        // duplicate insert: unchanged
        inner.update_from_inputs(&m, &[vec![0, 0]]).unwrap();
        assert_eq!((inner.len(0), inner.len(1), inner.len(2)), (1, 1, 1));

        // two layer-1 points with the same layer-2 image
        inner.update(&m, 1, &[vec![1, 0], vec![0, 1]]).unwrap();
        assert_eq!(inner.len(1), 3);
        assert_eq!(inner.len(2), 2); // both map to (1,1)
    }

    #[test]
    fn pool_cap_fifo() {
        let (m, _) = twovar_fixture();
        let mut inner = InnerApprox::new(2, 2);
        inner.update_from_inputs(&m, &[vec![0, 0]]).unwrap();
        inner.update_from_inputs(&m, &[vec![1, 0]]).unwrap();
        inner.update_from_inputs(&m, &[vec![0, 1]]).unwrap();
        assert_eq!(inner.len(0), 2);
        // oldest evicted
        assert!(!inner.pool0().contains(&vec![0, 0]));
        assert!(inner.pool0().contains(&vec![0, 1]));
    }

    #[test]
    fn phase_one_fixes_constant_neuron() {
        // Zero row with b=0: a = 0 -> always 1.
        let m = BnnModel::new(
            1,
            vec![
                layer(vec![vec![1]], vec![0]),
                layer(vec![vec![0]], vec![0]),
                layer(vec![vec![1], vec![-1]], vec![0, 0]),
            ],
        )
        .unwrap();
        let s = spec(vec![0], rat(1, 1), Norm::L1, 0);
        let (outer, _, census) = phase_one(&m, &s, &CutConfig::default()).unwrap();
        assert_eq!(outer.fixings[1].get(&0), Some(&1));
        assert!(outer.fixings[0].is_empty());
        assert_eq!(census[1].fixed1, 1);
        assert_eq!(census[1].fixed0, 0);
    }

    #[test]
    fn phase_one_eps_zero_fixes_everything() {
        for seed in 0..6u64 {
            let m = gen_model(&[3, 3, 2, 2], 2, &rat(2, 3), -1, 1, seed).unwrap();
            let inp = gen_input(&m, seed + 99);
            let s = inp.to_spec(Rat::zero(), Norm::L1);
            let (outer, _, _) = phase_one(&m, &s, &CutConfig::default()).unwrap();
            let prop = m.propagate(&s.anchor).unwrap();
            for (l, bits) in prop.hidden.iter().enumerate() {
                assert_eq!(outer.fixings[l].len(), bits.len(), "seed {seed} layer {l}");
                for (i, &bit) in bits.iter().enumerate() {
                    assert_eq!(outer.fixings[l].get(&i), Some(&bit));
                }
            }
        }
    }

    #[test]
    fn phase_two_finds_worked_pair() {
        let (m, s) = twovar_fixture();
        let config = CutConfig::default();
        let (mut outer, mut inner, mut census) = phase_one(&m, &s, &config).unwrap();
        assert_eq!(outer.num_fixings(), 0);
        phase_two(&m, &s, &mut outer, &mut inner, &mut census, &config).unwrap();
        assert_eq!(outer.two_var[1], vec![(0, -1, 1, -1)]);
        assert_eq!(census[1].twovar, 1);
        // other sign patterns end screened once the (1,1) witness lands
        assert!(census[1].screened >= 1);

        // and the emitted cut is sound against the exact reachable set
        let r = exact_reachable(&m, &s, 10_000).unwrap();
        let cut = Cut::TwoVar {
            layer: 2,
            i: 0,
            ci: -1,
            k: 1,
            ck: -1,
        };
        assert_eq!(check_cut_validity(&m, &r, &cut), CutCheck::Valid);
    }

    #[test]
    fn phase_two_max_fail_zero() {
        let (m, s) = twovar_fixture();
        let config = CutConfig {
            max_fail: 0,
            ..Default::default()
        };
        let (mut outer, mut inner, mut census) = phase_one(&m, &s, &config).unwrap();
        phase_two(&m, &s, &mut outer, &mut inner, &mut census, &config).unwrap();
        assert_eq!(outer.num_two_var(), 0);
    }

    /// Every fixing and two-variable inequality produced by both phases
    /// is valid on the exact reachable sets.
    #[test]
    fn emitted_cuts_sound_on_seeded_instances() {
        for seed in 0..10u64 {
            let dims: &[usize] = if seed % 2 == 0 {
                &[3, 3, 3, 2]
            } else {
                &[2, 4, 3, 2]
            };
            let q = 1 + (seed % 2) as u32;
            let m = gen_model(dims, q, &rat(2, 3), -2, 2, seed).unwrap();
            let inp = gen_input(&m, seed + 7000);
            let norm = if seed % 2 == 0 { Norm::L1 } else { Norm::Linf };
            let s = inp.to_spec(rat(1 + (seed % 4) as Int, 2), norm);
            let config = CutConfig::default();
            let (mut outer, mut inner, mut census) = phase_one(&m, &s, &config).unwrap();
            phase_two(&m, &s, &mut outer, &mut inner, &mut census, &config).unwrap();

            let r = exact_reachable(&m, &s, 1_000_000).unwrap();
            for (l, fixings) in outer.fixings.iter().enumerate() {
                for (&i, &bit) in fixings {
                    let c = if bit == 1 { -1 } else { 1 };
                    let cut = Cut::Fix { layer: l + 1, i, c };
                    assert_eq!(
                        check_cut_validity(&m, &r, &cut),
                        CutCheck::Valid,
                        "seed {seed} fix ℓ={} i={i} bit={bit}",
                        l + 1
                    );
                }
            }
            for (l, pairs) in outer.two_var.iter().enumerate() {
                for &(i, ci, k, ck) in pairs {
                    let cut = Cut::TwoVar {
                        layer: l + 1,
                        i,
                        ci,
                        k,
                        ck,
                    };
                    assert_eq!(
                        check_cut_validity(&m, &r, &cut),
                        CutCheck::Valid,
                        "seed {seed} twovar ℓ={} ({i},{ci},{k},{ck})",
                        l + 1
                    );
                }
            }
        }
    }

    /// Screening soundness: whenever the screen fires, some pool member
    /// demonstrably violates the candidate.
    #[test]
    fn screen_implies_pool_violation() {
        let (m, s) = twovar_fixture();
        let config = CutConfig::default();
        let (outer, mut inner, _) = phase_one(&m, &s, &config).unwrap();
        for i in 0..2 {
            for ci in [-1i8, 1] {
                let before: Vec<Vec<u8>> = inner.pool(2).iter().cloned().collect();
                let res =
                    check_fixing(&m, &s, 2, i, ci, &outer, &mut inner, &config).unwrap();
                if res.screened {
                    let hot = ((1 + ci as i64) / 2) as u8;
                    assert!(before.iter().any(|x| x[i] == hot));
                }
            }
        }
    }
}
