//! Single-neuron convex-hull inequalities for hidden layers ℓ ≥ 2.
//!
//! For a neuron with ternary weight row w, threshold R, and activation
//! bounds LB/UB, every subset J of the weight support satisfies
//!
//!   Σ_{j∈J} (w_j(2x_j−1) − (2u−1)) ≥ (R−UB+1)·u          (lower)
//!   Σ_{j∈J} (w_j(2x_j−1) − (2u−1)) ≤ (R−LB−1)·(1−u)      (upper)
//!
//! on the graph {(x, u): x ∈ {0,1}^n, u = 1_{ℝ+}(a(x))}, and together
//! with the boxes these describe its convex hull. The family is
//! term-separable, so the most-violated subset at a fractional point is
//! found greedily: collect exactly the negative (lower side) or positive
//! (upper side) terms. `constraint_generation` runs the cutting loop on a
//! verification IP's LP relaxation.

use crate::bnn::{BnnModel, ModelError};
use crate::formulation::VerificationIp;
use crate::ip::{IpError, Sense, VarRef};
use crate::rat::{rat, rat_int, Int, Rat};
use crate::simplex::{solve_lp, LpError, LpOutcome, LpProblem};
use num_traits::{Signed, Zero};
use std::collections::BTreeSet;
use std::time::Instant;

#[derive(Debug, thiserror::Error)]
pub enum HullError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ip(#[from] IpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Side {
    Lower,
    Upper,
}

/// One realized hull inequality for neuron i of hidden layer ℓ ≥ 2.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct HullCut {
    pub layer: usize,
    pub i: usize,
    pub side: Side,
    /// Subset of the weight support, ascending; nonempty for emitted cuts.
    pub j_set: Vec<usize>,
}

/// Violation tolerance on rationally-reconstructed LP points.
fn tolerance() -> Rat {
    rat(1, 1_000_000_000)
}

impl HullCut {
    /// Σ_{j∈J} (w_j(2x_j−1) − (2u−1)) at a fractional point.
    pub fn lhs_at(&self, bnn: &BnnModel, x_prev: &[Rat], u: &Rat) -> Rat {
        let w = &bnn.layers[self.layer - 1].weights[self.i];
        let shift = rat_int(2) * *u - rat_int(1);
        self.j_set
            .iter()
            .map(|&j| {
                rat_int(w[j] as Int) * (rat_int(2) * x_prev[j] - rat_int(1)) - shift
            })
            .sum()
    }

    /// The inequality in IP variables, expanded to
    /// Σ 2 w_j x_j + c_u·u {≥,≤} rhs with everything on the left.
    pub fn realize(
        &self,
        bnn: &BnnModel,
        xs_prev: &[VarRef],
        u: VarRef,
    ) -> Result<(Vec<(VarRef, Rat)>, Sense, Rat, String), ModelError> {
        let w = &bnn.layers[self.layer - 1].weights[self.i];
        let c = bnn.layer_constants(self.layer, self.i)?;
        let len = self.j_set.len() as Int;
        let w_sum: Int = self.j_set.iter().map(|&j| w[j] as Int).sum();
        let mut terms: Vec<(VarRef, Rat)> = self
            .j_set
            .iter()
            .map(|&j| (xs_prev[j], rat_int(2 * w[j] as Int)))
            .collect();
        let (sense, u_coef, rhs, label) = match self.side {
            Side::Lower => (
                Sense::Ge,
                -(2 * len + c.r2q as Int - c.ub as Int + 1),
                w_sum - len,
                "lo",
            ),
            Side::Upper => (
                Sense::Le,
                -(2 * len) + c.r2q as Int - c.lb as Int - 1,
                w_sum - len + c.r2q as Int - c.lb as Int - 1,
                "up",
            ),
        };
        terms.push((u, rat_int(u_coef)));
        let js: Vec<String> = self.j_set.iter().map(|j| j.to_string()).collect();
        let tag = format!(
            "hull.{label}[l={},i={},J={{{}}}]",
            self.layer,
            self.i,
            js.join(",")
        );
        Ok((terms, sense, rat_int(rhs), tag))
    }
}

/// Greedy extreme subset of the weight support at a fractional point:
/// negative terms minimize the LHS (lower side), positive terms maximize
/// it (upper side). May be empty.
fn greedy_subset(w: &[i8], x_prev: &[Rat], u: &Rat, side: Side) -> Vec<usize> {
    let shift = rat_int(2) * *u - rat_int(1);
    (0..w.len())
        .filter(|&j| {
            if w[j] == 0 {
                return false;
            }
            let term = rat_int(w[j] as Int) * (rat_int(2) * x_prev[j] - rat_int(1)) - shift;
            match side {
                Side::Lower => term < Rat::zero(),
                Side::Upper => term > Rat::zero(),
            }
        })
        .collect()
}

/// Most-violated lower and upper hull cuts for neuron i of layer ℓ ≥ 2 at
/// a fractional point (x^{ℓ-1}, u = x_i^ℓ), each with its violation.
/// Empty greedy subsets are never emitted.
pub fn separate(
    bnn: &BnnModel,
    layer: usize,
    i: usize,
    x_prev: &[Rat],
    u: &Rat,
) -> Result<(Option<(HullCut, Rat)>, Option<(HullCut, Rat)>), ModelError> {
    let w = &bnn.layers[layer - 1].weights[i];
    let c = bnn.layer_constants(layer, i)?;
    let tol = tolerance();

    let mut lower = None;
    let j_set = greedy_subset(w, x_prev, u, Side::Lower);
    if !j_set.is_empty() {
        let cut = HullCut {
            layer,
            i,
            side: Side::Lower,
            j_set,
        };
        let lhs = cut.lhs_at(bnn, x_prev, u);
        let bound = rat_int(c.r2q as Int - c.ub as Int + 1) * *u;
        if lhs < bound - tol {
            let violation = bound - lhs;
            lower = Some((cut, violation));
        }
    }

    let mut upper = None;
    let j_set = greedy_subset(w, x_prev, u, Side::Upper);
    if !j_set.is_empty() {
        let cut = HullCut {
            layer,
            i,
            side: Side::Upper,
            j_set,
        };
        let lhs = cut.lhs_at(bnn, x_prev, u);
        let bound = rat_int(c.r2q as Int - c.lb as Int - 1) * (rat_int(1) - *u);
        if lhs > bound + tol {
            let violation = lhs - bound;
            upper = Some((cut, violation));
        }
    }
    Ok((lower, upper))
}

#[derive(Debug, Clone, Default)]
pub struct HullGenReport {
    pub iterations: usize,
    pub cuts: Vec<HullCut>,
    /// LP optimum after each iteration's solve.
    pub lp_trace: Vec<Rat>,
}

/// True when `new` is at least 1% below `old` (maximization: lower LP
/// optima are progress).
fn improved(old: &Rat, new: &Rat) -> bool {
    *new < *old && (*old - *new) * rat_int(100) >= old.abs()
}

/// Constraint generation on the verification IP: repeatedly solve the LP
/// relaxation and, per hidden neuron of layers 2…L, add the most-violated
/// lower and upper hull cut at the LP point. Stops when an iteration adds
/// no cut, when the LP optimum has not improved by 1% over the last ten
/// iterations, or when the time budget runs out. Duplicate cuts (same
/// layer, neuron, side, subset) are never re-added. Models with a
/// quadratic constraint (the ℓ2 ball) are returned untouched.
pub fn constraint_generation(
    ip: &mut VerificationIp,
    time_limit_ms: Option<u64>,
) -> Result<HullGenReport, HullError> {
    let mut report = HullGenReport::default();
    if ip.model.quad.is_some() {
        return Ok(report);
    }
    let start = Instant::now();
    let mut seen: BTreeSet<HullCut> = BTreeSet::new();
    loop {
        let lp = LpProblem::from_ip(&ip.model.lp_relaxation())?;
        let point = match solve_lp(&lp)? {
            LpOutcome::Optimal { value, point } => {
                report.lp_trace.push(value);
                point
            }
            // Infeasible/unbounded relaxations carry no point to cut at;
            // the branch-and-bound solve will report them.
            LpOutcome::Infeasible | LpOutcome::Unbounded => break,
        };
        report.iterations += 1;

        let mut added = 0usize;
        for layer in 2..=ip.bnn.num_hidden() {
            let x_prev: Vec<Rat> = ip.x[layer - 2].iter().map(|v| point[v.0]).collect();
            for (i, &uvar) in ip.x[layer - 1].iter().enumerate() {
                let u = point[uvar.0];
                let (lower, upper) = separate(&ip.bnn, layer, i, &x_prev, &u)?;
                for (cut, _) in lower.into_iter().chain(upper) {
                    if !seen.insert(cut.clone()) {
                        continue;
                    }
                    let (terms, sense, rhs, tag) =
                        cut.realize(&ip.bnn, &ip.x[layer - 2], uvar)?;
                    ip.model.add_constraint(terms, sense, rhs, tag)?;
                    report.cuts.push(cut);
                    added += 1;
                }
            }
        }
        if added == 0 {
            break;
        }
        let t = report.lp_trace.len();
        if t >= 11 && !improved(&report.lp_trace[t - 11], &report.lp_trace[t - 1]) {
            break;
        }
        if time_limit_ms.is_some_and(|ms| start.elapsed().as_millis() as u64 >= ms) {
            break;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bnn::{InputSpec, Layer, Norm};
    use crate::formulation::build_one_ip;
    use crate::gen::{gen_input, gen_model, SplitMix64};
    use crate::mip::{solve_mip, SolveControls, SolveStatus};
    use crate::oracle::{check_cut_validity, exact_reachable, Cut, CutCheck};
    use crate::simplex::LpRow;

    fn identity(n: usize) -> Layer {
        Layer {
            weights: (0..n)
                .map(|i| (0..n).map(|j| (i == j) as i8).collect())
                .collect(),
            biases: vec![0; n],
        }
    }

    /// Model whose layer-2 neuron 0 is the row under test.
    fn neuron_net(w: Vec<i8>, b: i64) -> BnnModel {
        let n = w.len();
        BnnModel::new(
            1,
            vec![
                identity(n),
                Layer {
                    weights: vec![w],
                    biases: vec![b],
                },
                Layer {
                    weights: vec![vec![1], vec![-1]],
                    biases: vec![0, 0],
                },
            ],
        )
        .unwrap()
    }

    fn activation(m: &BnnModel, x: &[u8]) -> u8 {
        (m.affine_hidden(2, x).unwrap()[0] >= 0) as u8
    }

    #[test]
    fn separate_worked_examples() {
        // w=(1,1), b=0: R=1, UB=4, LB=0.
        let m = neuron_net(vec![1, 1], 0);
        let c = m.layer_constants(2, 0).unwrap();
        assert_eq!((c.r2q, c.ub, c.lb), (1, 4, 0));

        let (lower, upper) =
            separate(&m, 2, 0, &[rat(2, 5), rat(1, 2)], &rat_int(1)).unwrap();
        let (cut, violation) = lower.unwrap();
        assert_eq!(cut.j_set, vec![0, 1]);
        assert_eq!(cut.lhs_at(&m, &[rat(2, 5), rat(1, 2)], &rat_int(1)), rat(-11, 5));
        assert_eq!(violation, rat(1, 5));
        assert!(upper.is_none());

        let (lower, upper) =
            separate(&m, 2, 0, &[rat(3, 10), Rat::zero()], &Rat::zero()).unwrap();
        assert!(lower.is_none());
        let (cut, violation) = upper.unwrap();
        assert_eq!(cut.j_set, vec![0]);
        assert_eq!(violation, rat(3, 5));
    }

    #[test]
    fn separate_integral_points_quiet() {
        let m = neuron_net(vec![1, 1], 0);
        for x in [[0u8, 0], [0, 1], [1, 0], [1, 1]] {
            let u = rat_int(activation(&m, &x) as Int);
            let xr = [rat_int(x[0] as Int), rat_int(x[1] as Int)];
            let (lower, upper) = separate(&m, 2, 0, &xr, &u).unwrap();
            assert!(lower.is_none() && upper.is_none(), "graph point {x:?} cut off");
        }
    }

    fn subsets(support: &[usize]) -> Vec<Vec<usize>> {
        (0..1usize << support.len())
            .map(|mask| {
                support
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| mask >> b & 1 == 1)
                    .map(|(_, &j)| j)
                    .collect()
            })
            .collect()
    }

    /// Both sides hold for every subset J at every graph point.
    #[test]
    fn hull_validity_exhaustive() {
        let mut rng = SplitMix64::new(0xD1CE);
        for _ in 0..25 {
            let n = 1 + rng.below(4) as usize;
            let w: Vec<i8> = (0..n).map(|_| rng.below(3) as i8 - 1).collect();
            let b = rng.below(7) as i64 - 3;
            let m = neuron_net(w.clone(), b);
            let c = m.layer_constants(2, 0).unwrap();
            let support: Vec<usize> = (0..n).filter(|&j| w[j] != 0).collect();
            for bits in 0..1u32 << n {
                let x: Vec<u8> = (0..n).map(|j| (bits >> j & 1) as u8).collect();
                let u = rat_int(activation(&m, &x) as Int);
                let xr: Vec<Rat> = x.iter().map(|&v| rat_int(v as Int)).collect();
                for j_set in subsets(&support) {
                    for side in [Side::Lower, Side::Upper] {
                        let cut = HullCut {
                            layer: 2,
                            i: 0,
                            side,
                            j_set: j_set.clone(),
                        };
                        let lhs = cut.lhs_at(&m, &xr, &u);
                        match side {
                            Side::Lower => assert!(
                                lhs >= rat_int(c.r2q as Int - c.ub as Int + 1) * u,
                                "w={w:?} b={b} x={x:?} J={j_set:?}"
                            ),
                            Side::Upper => assert!(
                                lhs <= rat_int(c.r2q as Int - c.lb as Int - 1)
                                    * (rat_int(1) - u),
                                "w={w:?} b={b} x={x:?} J={j_set:?}"
                            ),
                        }
                    }
                }
            }
        }
    }

    /// The greedy subset attains the extreme LHS over all 2^|support|
    /// subsets at fractional points.
    #[test]
    fn greedy_is_exact_separator() {
        let mut rng = SplitMix64::new(0xBEEF);
        for _ in 0..30 {
            let n = 2 + rng.below(9) as usize; // support up to 10
            let w: Vec<i8> = (0..n).map(|_| rng.below(3) as i8 - 1).collect();
            let m = neuron_net(w.clone(), 0);
            let x: Vec<Rat> = (0..n).map(|_| rat(rng.below(9) as Int, 8)).collect();
            let u = rat(rng.below(9) as Int, 8);
            let support: Vec<usize> = (0..n).filter(|&j| w[j] != 0).collect();
            for side in [Side::Lower, Side::Upper] {
                let greedy = HullCut {
                    layer: 2,
                    i: 0,
                    side,
                    j_set: greedy_subset(&w, &x, &u, side),
                };
                let glhs = greedy.lhs_at(&m, &x, &u);
                for j_set in subsets(&support) {
                    let lhs = HullCut {
                        layer: 2,
                        i: 0,
                        side,
                        j_set,
                    }
                    .lhs_at(&m, &x, &u);
                    match side {
                        Side::Lower => assert!(glhs <= lhs),
                        Side::Upper => assert!(glhs >= lhs),
                    }
                }
            }
        }
    }

    /// Is (x, u) a convex combination of the graph vertices? LP
    /// feasibility over the λ simplex.
    fn in_hull(m: &BnnModel, n: usize, point: &[Rat]) -> bool {
        let vertices: Vec<Vec<Rat>> = (0..1u32 << n)
            .map(|bits| {
                let x: Vec<u8> = (0..n).map(|j| (bits >> j & 1) as u8).collect();
                let mut v: Vec<Rat> = x.iter().map(|&b| rat_int(b as Int)).collect();
                v.push(rat_int(activation(m, &x) as Int));
                v
            })
            .collect();
        let nv = vertices.len();
        let mut rows: Vec<LpRow> = (0..=n)
            .map(|coord| LpRow {
                coeffs: (0..nv).map(|v| (v, vertices[v][coord])).collect(),
                sense: Sense::Eq,
                rhs: point[coord],
            })
            .collect();
        rows.push(LpRow {
            coeffs: (0..nv).map(|v| (v, rat_int(1))).collect(),
            sense: Sense::Eq,
            rhs: rat_int(1),
        });
        let lp = LpProblem {
            lo: vec![Some(Rat::zero()); nv],
            hi: vec![Some(rat_int(1)); nv],
            rows,
            obj: vec![Rat::zero(); nv],
            obj_const: Rat::zero(),
        };
        matches!(solve_lp(&lp).unwrap(), LpOutcome::Optimal { .. })
    }

    /// At tiny scale the full inequality family plus boxes is exactly the
    /// convex hull: a sampled point satisfies every subset inequality iff
    /// it is a convex combination of graph vertices.
    #[test]
    fn hull_completeness_tiny() {
        let mut rng = SplitMix64::new(0xFACADE);
        for _ in 0..12 {
            let n = 1 + rng.below(3) as usize;
            let w: Vec<i8> = (0..n).map(|_| rng.below(3) as i8 - 1).collect();
            let b = rng.below(5) as i64 - 2;
            let m = neuron_net(w.clone(), b);
            let c = m.layer_constants(2, 0).unwrap();
            // Non-constant neurons only: the family describes the hull of
            // a graph with both activation values reachable.
            if c.lb > c.r2q - 1 || c.ub < c.r2q + 1 {
                continue;
            }
            let support: Vec<usize> = (0..n).filter(|&j| w[j] != 0).collect();
            for _ in 0..60 {
                let point: Vec<Rat> =
                    (0..=n).map(|_| rat(rng.below(5) as Int, 4)).collect();
                let u = point[n];
                let satisfies = subsets(&support).into_iter().all(|j_set| {
                    let lower = HullCut {
                        layer: 2,
                        i: 0,
                        side: Side::Lower,
                        j_set: j_set.clone(),
                    };
                    let upper = HullCut {
                        layer: 2,
                        i: 0,
                        side: Side::Upper,
                        j_set,
                    };
                    lower.lhs_at(&m, &point[..n], &u)
                        >= rat_int(c.r2q as Int - c.ub as Int + 1) * u
                        && upper.lhs_at(&m, &point[..n], &u)
                            <= rat_int(c.r2q as Int - c.lb as Int - 1)
                                * (rat_int(1) - u)
                });
                assert_eq!(
                    satisfies,
                    in_hull(&m, n, &point),
                    "w={w:?} b={b} point={point:?}"
                );
            }
        }
    }

    fn l1_spec(m: &BnnModel, seed: u64, eps: Rat) -> InputSpec {
        gen_input(m, seed).to_spec(eps, Norm::L1)
    }

    #[test]
    fn generation_two_layer_loop_vacuous() {
        // L = 1: no layer in 2…L, so the first iteration adds nothing.
        let m = gen_model(&[3, 4, 2], 2, &rat(2, 3), -1, 1, 3).unwrap();
        let spec = l1_spec(&m, 31, rat(1, 2));
        let mut ip = build_one_ip(&m, &spec).unwrap();
        let before = ip.model.constraints.len();
        let report = constraint_generation(&mut ip, None).unwrap();
        assert_eq!(report.iterations, 1);
        assert!(report.cuts.is_empty());
        assert_eq!(ip.model.constraints.len(), before);
    }

    #[test]
    fn generation_skips_quadratic_models() {
        let m = gen_model(&[3, 3, 3, 2], 2, &rat(2, 3), -1, 1, 5).unwrap();
        let spec = gen_input(&m, 51).to_spec(rat(1, 2), Norm::L2);
        let mut ip = build_one_ip(&m, &spec).unwrap();
        let report = constraint_generation(&mut ip, None).unwrap();
        assert_eq!(report.iterations, 0);
        assert!(report.lp_trace.is_empty());
    }

    /// On seeded instances: the LP trace never increases, every emitted
    /// cut is valid on the exact reachable sets, and the strengthened IP
    /// has the same optimum as the original.
    #[test]
    fn generation_sound_on_seeded_instances() {
        let mut any_cuts = false;
        for seed in 0..8u64 {
            let m = gen_model(&[3, 3, 3, 2], 1, &rat(2, 3), -2, 2, seed).unwrap();
            let spec = l1_spec(&m, seed + 500, rat_int(1 + (seed % 3) as Int));
            let mut ip = build_one_ip(&m, &spec).unwrap();
            let base = solve_mip(&ip.model, &SolveControls::default(), None).unwrap();
            let report = constraint_generation(&mut ip, None).unwrap();
            any_cuts |= !report.cuts.is_empty();

            for pair in report.lp_trace.windows(2) {
                assert!(pair[1] <= pair[0], "seed {seed}: LP trace increased");
            }

            let reach = exact_reachable(&m, &spec, 1_000_000).unwrap();
            for cut in &report.cuts {
                let oracle_cut = match cut.side {
                    Side::Lower => Cut::HullLower {
                        layer: cut.layer,
                        i: cut.i,
                        j_set: cut.j_set.clone(),
                    },
                    Side::Upper => Cut::HullUpper {
                        layer: cut.layer,
                        i: cut.i,
                        j_set: cut.j_set.clone(),
                    },
                };
                assert_eq!(
                    check_cut_validity(&m, &reach, &oracle_cut),
                    CutCheck::Valid,
                    "seed {seed} cut {cut:?}"
                );
            }

            let strengthened =
                solve_mip(&ip.model, &SolveControls::default(), None).unwrap();
            assert_eq!(base.status, SolveStatus::Optimal);
            assert_eq!(strengthened.status, base.status);
            assert_eq!(strengthened.incumbent_value, base.incumbent_value);
            if let Some(first) = report.lp_trace.first() {
                assert!(report.lp_trace.last().unwrap() <= first);
            }
        }
        assert!(any_cuts, "no seed produced a hull cut; fixtures too easy");
    }
}
