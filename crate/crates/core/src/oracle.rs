//! Brute-force ground truth for small instances.
//!
//! Enumerates the perturbation set X⁰ exactly, computes the reachable
//! binary sets X^ℓ layer by layer, evaluates the true robustness margin
//! z*, and checks any candidate cut against the reachable sets. Nothing
//! here approximates: enumeration either completes or fails loudly with
//! `CapExceeded`.

use crate::bnn::{BnnModel, InputSpec, ModelError, Norm};
use crate::rat::{floor_int, rat_int, Int, Rat};
use num_traits::Zero;
use std::collections::BTreeSet;

pub const DEFAULT_ENUM_CAP: usize = 2_000_000;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("enumeration cap exceeded after {partial} points")]
    CapExceeded { partial: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Exact reachable sets: X⁰ as q-scaled integer vectors, X^ℓ (ℓ ≥ 1) as
/// deduplicated binary vectors, ordered for determinism.
#[derive(Debug, Clone)]
pub struct ReachableSets {
    pub x0: Vec<Vec<i64>>,
    /// hidden[ℓ-1] = X^ℓ for ℓ in 1..=L.
    pub hidden: Vec<BTreeSet<Vec<u8>>>,
}

impl ReachableSets {
    pub fn layer(&self, layer: usize) -> &BTreeSet<Vec<u8>> {
        &self.hidden[layer - 1]
    }
}

/// A candidate cut, in the shape the cut modules emit them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Cut {
    /// x_i^ℓ = (1-c)/2, c ∈ {−1, +1}.
    Fix { layer: usize, i: usize, c: i8 },
    /// c_i x_i^ℓ + c_k x_k^ℓ ≤ (c_i + c_k)/2.
    TwoVar {
        layer: usize,
        i: usize,
        ci: i8,
        k: usize,
        ck: i8,
    },
    /// Σ_{j∈J} (W_ij(2x_j−1) − (2u−1)) ≥ (R − UB + 1)u, with u = x_i^ℓ.
    HullLower {
        layer: usize,
        i: usize,
        j_set: Vec<usize>,
    },
    /// Σ_{j∈J} (W_ij(2x_j−1) − (2u−1)) ≤ (R − LB − 1)(1 − u).
    HullUpper {
        layer: usize,
        i: usize,
        j_set: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CutCheck {
    Valid,
    /// A reachable point that violates the cut. For hull cuts this is the
    /// layer-(ℓ−1) vector; otherwise a layer-ℓ vector.
    Violated { witness: Vec<u8> },
}

/// Streams every point of X⁰ in depth-first coordinate order, calling
/// `visit` on each. Fails with `CapExceeded` past `cap` points.
pub fn for_each_x0(
    model: &BnnModel,
    spec: &InputSpec,
    cap: usize,
    mut visit: impl FnMut(&[i64]),
) -> Result<usize, OracleError> {
    spec.validate(model)?;
    let n = model.num_inputs();
    let q = model.q as i64;
    let mut point = vec![0i64; n];
    let mut count = 0usize;

    match spec.norm {
        Norm::Linf => {
            // Per-coordinate ranges: |y_j - ȳ_j| <= floor(q ε).
            let radius = floor_int(&(spec.epsilon * rat_int(q as Int))) as i64;
            let lo: Vec<i64> = spec.anchor.iter().map(|&a| (a - radius).max(0)).collect();
            let hi: Vec<i64> = spec.anchor.iter().map(|&a| (a + radius).min(q)).collect();
            fn rec(
                j: usize,
                lo: &[i64],
                hi: &[i64],
                point: &mut Vec<i64>,
                count: &mut usize,
                cap: usize,
                visit: &mut impl FnMut(&[i64]),
            ) -> Result<(), OracleError> {
                if j == lo.len() {
                    *count += 1;
                    if *count > cap {
                        return Err(OracleError::CapExceeded { partial: cap });
                    }
                    visit(point);
                    return Ok(());
                }
                for v in lo[j]..=hi[j] {
                    point[j] = v;
                    rec(j + 1, lo, hi, point, count, cap, visit)?;
                }
                Ok(())
            }
            rec(0, &lo, &hi, &mut point, &mut count, cap, &mut visit)?;
        }
        Norm::L1 => {
            // Σ |y_j - ȳ_j| <= floor(q ε), all integer.
            let budget = floor_int(&(spec.epsilon * rat_int(q as Int))) as i64;
            rec_budget(
                model,
                spec,
                0,
                budget,
                &mut point,
                &mut count,
                cap,
                &mut visit,
                &|d| d.abs(),
            )?;
        }
        Norm::L2 => {
            // Σ (y_j - ȳ_j)² <= (q ε)², compared as exact rationals.
            let t = spec.epsilon * spec.epsilon * rat_int((q * q) as Int);
            // Integer budget: largest integer B with B <= t.
            let budget = if t < Rat::zero() {
                -1
            } else {
                floor_int(&t) as i64
            };
            rec_budget(
                model,
                spec,
                0,
                budget,
                &mut point,
                &mut count,
                cap,
                &mut visit,
                &|d| d * d,
            )?;
        }
    }
    Ok(count)
}

/// DFS with an integer budget consumed coordinate by coordinate by
/// `weigh(y_j - ȳ_j)`.
#[allow(clippy::too_many_arguments)]
fn rec_budget(
    model: &BnnModel,
    spec: &InputSpec,
    j: usize,
    budget: i64,
    point: &mut Vec<i64>,
    count: &mut usize,
    cap: usize,
    visit: &mut impl FnMut(&[i64]),
    weigh: &dyn Fn(i64) -> i64,
) -> Result<(), OracleError> {
    if budget < 0 {
        return Ok(());
    }
    if j == point.len() {
        *count += 1;
        if *count > cap {
            return Err(OracleError::CapExceeded { partial: cap });
        }
        visit(point);
        return Ok(());
    }
    let q = model.q as i64;
    for v in 0..=q {
        let cost = weigh(v - spec.anchor[j]);
        if cost > budget {
            continue;
        }
        point[j] = v;
        rec_budget(
            model,
            spec,
            j + 1,
            budget - cost,
            point,
            count,
            cap,
            visit,
            weigh,
        )?;
    }
    Ok(())
}

pub fn enumerate_x0(
    model: &BnnModel,
    spec: &InputSpec,
    cap: usize,
) -> Result<Vec<Vec<i64>>, OracleError> {
    let mut out = Vec::new();
    for_each_x0(model, spec, cap, |p| out.push(p.to_vec()))?;
    Ok(out)
}

/// Exact robustness margin: max over x⁰ ∈ X⁰ and t ≠ t̄ of f_t − f_t̄,
/// with a witnessing input and class. Ties broken first-found.
pub fn exact_zstar(
    model: &BnnModel,
    spec: &InputSpec,
    cap: usize,
) -> Result<(i64, Vec<i64>, usize), OracleError> {
    let tbar = spec.true_class;
    let mut best: Option<(i64, Vec<i64>, usize)> = None;
    for_each_x0(model, spec, cap, |y| {
        let p = model.propagate(y).expect("enumerated point is in X0");
        for (t, &out_t) in p.output.iter().enumerate() {
            if t == tbar {
                continue;
            }
            let margin = out_t - p.output[tbar];
            if best.as_ref().is_none_or(|(b, _, _)| margin > *b) {
                best = Some((margin, y.to_vec(), t));
            }
        }
    })?;
    Ok(best.expect("X0 is nonempty and there are >= 2 classes"))
}

/// Builds the exact reachable sets X⁰ … X^L.
pub fn exact_reachable(
    model: &BnnModel,
    spec: &InputSpec,
    cap: usize,
) -> Result<ReachableSets, OracleError> {
    let x0 = enumerate_x0(model, spec, cap)?;
    let num_hidden = model.num_hidden();
    let mut hidden: Vec<BTreeSet<Vec<u8>>> = Vec::with_capacity(num_hidden);

    let mut first = BTreeSet::new();
    for y in &x0 {
        let a = model.affine_first_scaled(y)?;
        first.insert(a.iter().map(|&v| (v >= 0) as u8).collect::<Vec<u8>>());
    }
    hidden.push(first);
    for layer in 2..=num_hidden {
        let mut next = BTreeSet::new();
        for x in &hidden[layer - 2] {
            let a = model.affine_hidden(layer, x)?;
            next.insert(a.iter().map(|&v| (v >= 0) as u8).collect::<Vec<u8>>());
        }
        hidden.push(next);
    }
    Ok(ReachableSets { x0, hidden })
}

/// Evaluates a cut over the exact reachable sets.
pub fn check_cut_validity(
    model: &BnnModel,
    reachable: &ReachableSets,
    cut: &Cut,
) -> CutCheck {
    match cut {
        Cut::Fix { layer, i, c } => {
            let want = (1 - *c as i64) / 2;
            for x in reachable.layer(*layer) {
                if x[*i] as i64 != want {
                    return CutCheck::Violated { witness: x.clone() };
                }
            }
            CutCheck::Valid
        }
        Cut::TwoVar { layer, i, ci, k, ck } => {
            // 2(c_i x_i + c_k x_k) <= c_i + c_k, kept integral.
            let rhs = *ci as i64 + *ck as i64;
            for x in reachable.layer(*layer) {
                let lhs = 2 * (*ci as i64 * x[*i] as i64 + *ck as i64 * x[*k] as i64);
                if lhs > rhs {
                    return CutCheck::Violated { witness: x.clone() };
                }
            }
            CutCheck::Valid
        }
        Cut::HullLower { layer, i, j_set } | Cut::HullUpper { layer, i, j_set } => {
            debug_assert!(*layer >= 2);
            let consts = model
                .layer_constants(*layer, *i)
                .expect("cut references a real neuron");
            let w = &model.layers[*layer - 1].weights[*i];
            let lower = matches!(cut, Cut::HullLower { .. });
            for x in reachable.layer(*layer - 1) {
                let a = model.affine_hidden(*layer, x).expect("dims match")[*i];
                let u = (a >= 0) as i64;
                let lhs: i64 = j_set
                    .iter()
                    .map(|&j| w[j] as i64 * (2 * x[j] as i64 - 1) - (2 * u - 1))
                    .sum();
                let ok = if lower {
                    lhs >= (consts.r2q - consts.ub + 1) * u
                } else {
                    lhs <= (consts.r2q - consts.lb - 1) * (1 - u)
                };
                if !ok {
                    return CutCheck::Violated { witness: x.clone() };
                }
            }
            CutCheck::Valid
        }
    }
}
