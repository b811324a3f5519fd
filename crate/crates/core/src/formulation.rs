//! Builds the verification integer programs.
//!
//! Two formulations decide robustness of an anchor x̄ within an ε-ball:
//! the per-alternative-class "Many-IP" (maximize f_t − f_t̄ for one fixed
//! t) and the single "1-IP" with class-selection binaries z_t and product
//! binaries v_ti. Both share the input-perturbation constraints and the
//! layer propagation constraints; x⁰ is eliminated in favor of integer
//! y = q·x⁰, so all layer-1 data is integral.

use crate::bnn::{BnnModel, InputSpec, ModelError, Norm};
use crate::ip::{IpError, IpModel, QuadConstraint, Sense, VarRef};
use crate::rat::{floor_int, rat, rat_int, round_half_away, Int, Rat};
use num_traits::Zero;
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum FormulationError {
    #[error("alternative class equals the true class ({0})")]
    AltIsTrueClass(usize),
    #[error("need at least two classes, model has {0}")]
    TooFewClasses(usize),
    #[error("outer approximation fixes neuron (ℓ={layer}, i={i}) to both 0 and 1")]
    InfeasibleOuterApprox { layer: usize, i: usize },
    #[error(transparent)]
    Ip(#[from] IpError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Layerwise outer approximation of the reachable sets: per hidden layer,
/// proven variable fixings and two-variable inequalities.
#[derive(Debug, Clone)]
pub struct OuterApprox {
    /// fixings[ℓ-1]: neuron → forced bit.
    pub fixings: Vec<BTreeMap<usize, u8>>,
    /// two_var[ℓ-1]: (i, c_i, k, c_k) with i < k, meaning
    /// c_i x_i + c_k x_k ≤ (c_i + c_k)/2.
    pub two_var: Vec<Vec<(usize, i8, usize, i8)>>,
}

impl OuterApprox {
    pub fn empty(num_hidden: usize) -> Self {
        OuterApprox {
            fixings: vec![BTreeMap::new(); num_hidden],
            two_var: vec![Vec::new(); num_hidden],
        }
    }

    pub fn num_fixings(&self) -> usize {
        self.fixings.iter().map(|m| m.len()).sum()
    }

    pub fn num_two_var(&self) -> usize {
        self.two_var.iter().map(|v| v.len()).sum()
    }

    /// Records a fixing, failing on a 0-vs-1 conflict.
    pub fn add_fixing(
        &mut self,
        layer: usize,
        i: usize,
        bit: u8,
    ) -> Result<bool, FormulationError> {
        match self.fixings[layer - 1].get(&i) {
            Some(&b) if b != bit => Err(FormulationError::InfeasibleOuterApprox { layer, i }),
            Some(_) => Ok(false),
            None => {
                self.fixings[layer - 1].insert(i, bit);
                Ok(true)
            }
        }
    }

    /// Imposes this approximation's layer-ℓ facts on `model`, where `xs`
    /// are the variables standing for x^ℓ. Fixings become bounds,
    /// two-variable inequalities become tagged constraints. Returns the
    /// number of linear constraints added.
    pub fn constrain_layer(
        &self,
        model: &mut IpModel,
        layer: usize,
        xs: &[VarRef],
    ) -> Result<usize, FormulationError> {
        for (&i, &bit) in &self.fixings[layer - 1] {
            let b = rat_int(bit as Int);
            model
                .tighten_bounds(xs[i], Some(b), Some(b))
                .map_err(|_| FormulationError::InfeasibleOuterApprox { layer, i })?;
        }
        let mut added = 0;
        for &(i, ci, k, ck) in &self.two_var[layer - 1] {
            model.add_constraint(
                vec![(xs[i], rat_int(ci as Int)), (xs[k], rat_int(ck as Int))],
                Sense::Le,
                rat((ci + ck) as Int, 2),
                format!("2var[ℓ={layer},({i},{k})]"),
            )?;
            added += 1;
        }
        Ok(added)
    }
}

/// A built verification IP plus the variable layout needed to interpret
/// solutions and to run the rounding heuristic.
#[derive(Debug, Clone)]
pub struct VerificationIp {
    pub model: IpModel,
    /// Integer inputs y_j = q·x⁰_j.
    pub y: Vec<VarRef>,
    /// ℓ1/ℓ2 auxiliaries (empty for ℓ∞).
    pub u: Vec<VarRef>,
    /// x[ℓ-1][i] = x_i^ℓ for hidden layers ℓ = 1…L.
    pub x: Vec<Vec<VarRef>>,
    /// 1-IP class selectors: (class t, variable). Empty for Many-IP.
    pub z: Vec<(usize, VarRef)>,
    /// 1-IP products v_ti, parallel to `z`.
    pub v: Vec<Vec<VarRef>>,
    /// Many-IP alternative class, if this is a Many-IP.
    pub alt_class: Option<usize>,
    pub bnn: BnnModel,
    pub spec: InputSpec,
}

/// X⁰ alone, as an IP: integer y variables (ℓ∞ radius folded into the
/// bounds) plus the u-variable norm machinery for ℓ1/ℓ2. Shared by the
/// full verification IPs and the layer-1 cut subproblems.
pub fn build_input_domain(
    bnn: &BnnModel,
    spec: &InputSpec,
) -> Result<(IpModel, Vec<VarRef>, Vec<VarRef>), FormulationError> {
    spec.validate(bnn)?;
    let mut model = IpModel::new();
    let q = bnn.q as i64;
    let n0 = bnn.num_inputs();

    // Input variables y_j ∈ [0, q] ∩ ℤ (quantization via bounds), with ℓ∞
    // tightening folded directly into the bounds.
    let mut y = Vec::with_capacity(n0);
    for j in 0..n0 {
        let (mut lo, mut hi) = (0i64, q);
        if spec.norm == Norm::Linf {
            let radius = floor_int(&(spec.epsilon * rat_int(q as Int))) as i64;
            lo = lo.max(spec.anchor[j] - radius);
            hi = hi.min(spec.anchor[j] + radius);
        }
        y.push(model.add_var(&format!("y_{j}"), rat_int(lo as Int), rat_int(hi as Int), true)?);
    }

    // Norm constraints: per-coordinate |y_j/q − x̄_j| ≤ u_j plus a budget
    // row (ℓ1) or the quadratic ball (ℓ2).
    let mut u = Vec::new();
    if matches!(spec.norm, Norm::L1 | Norm::L2) {
        for j in 0..n0 {
            let uj = model.add_var(&format!("u_{j}"), Rat::zero(), rat_int(1), false)?;
            // q·u_j − y_j ≥ −ȳ_j and q·u_j + y_j ≥ ȳ_j.
            model.add_constraint(
                vec![(uj, rat_int(q as Int)), (y[j], rat_int(-1))],
                Sense::Ge,
                rat_int(-spec.anchor[j] as Int),
                format!("norm.abs.pos[j={j}]"),
            )?;
            model.add_constraint(
                vec![(uj, rat_int(q as Int)), (y[j], rat_int(1))],
                Sense::Ge,
                rat_int(spec.anchor[j] as Int),
                format!("norm.abs.neg[j={j}]"),
            )?;
            u.push(uj);
        }
        match spec.norm {
            Norm::L1 => {
                model.add_constraint(
                    u.iter().map(|&v| (v, rat_int(1))).collect(),
                    Sense::Le,
                    spec.epsilon,
                    "norm.l1.budget",
                )?;
            }
            Norm::L2 => {
                model.set_quad(QuadConstraint {
                    squared_terms: u.iter().map(|&v| (v, rat_int(1))).collect(),
                    rhs: spec.epsilon * spec.epsilon,
                })?;
            }
            Norm::Linf => unreachable!(),
        }
    }
    Ok((model, y, u))
}

fn build_base(bnn: &BnnModel, spec: &InputSpec) -> Result<VerificationIp, FormulationError> {
    let (mut model, y, u) = build_input_domain(bnn, spec)?;
    let q = bnn.q as i64;
    let num_hidden = bnn.num_hidden();

    // Hidden activations and propagation constraints.
    let mut x: Vec<Vec<VarRef>> = Vec::with_capacity(num_hidden);
    for layer in 1..=num_hidden {
        let width = bnn.width(layer);
        let mut xs = Vec::with_capacity(width);
        for i in 0..width {
            xs.push(model.add_var(&format!("x{layer}_{i}"), Rat::zero(), rat_int(1), true)?);
        }
        for i in 0..width {
            let c = bnn.layer_constants(layer, i)?;
            let w_row = &bnn.layers[layer - 1].weights[i];
            if layer == 1 {
                // ×q-scaled propagation pair:
                // 2Σ W y − (qR − qLB + 1) x_i ≥ qLB
                // 2Σ W y − (qUB − qR + 1) x_i ≤ qR − 1
                let (qlb, qub, qr) = (q * c.lb, q * c.ub, c.r2q);
                let base: Vec<(VarRef, Rat)> = w_row
                    .iter()
                    .enumerate()
                    .filter(|(_, &w)| w != 0)
                    .map(|(j, &w)| (y[j], rat_int(2 * w as Int)))
                    .collect();
                let mut lower = base.clone();
                lower.push((xs[i], rat_int(-(qr - qlb + 1) as Int)));
                model.add_constraint(
                    lower,
                    Sense::Ge,
                    rat_int(qlb as Int),
                    format!("propIn.lower[i={i}]"),
                )?;
                let mut upper = base;
                upper.push((xs[i], rat_int(-(qub - qr + 1) as Int)));
                model.add_constraint(
                    upper,
                    Sense::Le,
                    rat_int((qr - 1) as Int),
                    format!("propIn.upper[i={i}]"),
                )?;
            } else {
                // Propagation pair for ℓ ≥ 2:
                // 2Σ W x^{ℓ-1} − (R − LB + 1) x_i ≥ LB
                // 2Σ W x^{ℓ-1} − (UB − R + 1) x_i ≤ R − 1
                let prev = &x[layer - 2];
                let base: Vec<(VarRef, Rat)> = w_row
                    .iter()
                    .enumerate()
                    .filter(|(_, &w)| w != 0)
                    .map(|(j, &w)| (prev[j], rat_int(2 * w as Int)))
                    .collect();
                let mut lower = base.clone();
                lower.push((xs[i], rat_int(-(c.r2q - c.lb + 1) as Int)));
                model.add_constraint(
                    lower,
                    Sense::Ge,
                    rat_int(c.lb as Int),
                    format!("propHid.lower[ℓ={layer},i={i}]"),
                )?;
                let mut upper = base;
                upper.push((xs[i], rat_int(-(c.ub - c.r2q + 1) as Int)));
                model.add_constraint(
                    upper,
                    Sense::Le,
                    rat_int((c.r2q - 1) as Int),
                    format!("propHid.upper[ℓ={layer},i={i}]"),
                )?;
            }
        }
        x.push(xs);
    }

    Ok(VerificationIp {
        model,
        y,
        u,
        x,
        z: Vec::new(),
        v: Vec::new(),
        alt_class: None,
        bnn: bnn.clone(),
        spec: spec.clone(),
    })
}

/// Output-layer margin data for class t versus the true class:
/// a_t − a_t̄ = Σ_i 2ΔW_i x_i^L − Σ_i ΔW_i + Δb with ΔW = W_t − W_t̄.
fn margin_coeffs(bnn: &BnnModel, tbar: usize, t: usize) -> (Vec<i64>, i64) {
    let out = bnn.layers.last().unwrap();
    let dw: Vec<i64> = out.weights[t]
        .iter()
        .zip(&out.weights[tbar])
        .map(|(&a, &b)| a as i64 - b as i64)
        .collect();
    let constant = -dw.iter().sum::<i64>() + out.biases[t] - out.biases[tbar];
    (dw, constant)
}

/// Per-class margin IP: maximize a_t^{L+1}(x^L) − a_t̄^{L+1}(x^L) for one fixed
/// alternative class t.
pub fn build_many_ip(
    bnn: &BnnModel,
    spec: &InputSpec,
    t: usize,
) -> Result<VerificationIp, FormulationError> {
    if t == spec.true_class {
        return Err(FormulationError::AltIsTrueClass(t));
    }
    if t >= bnn.num_classes() {
        return Err(FormulationError::Model(ModelError::BadTrueClass {
            got: t,
            classes: bnn.num_classes(),
        }));
    }
    let mut ip = build_base(bnn, spec)?;
    let (dw, constant) = margin_coeffs(bnn, spec.true_class, t);
    let last = ip.x.last().unwrap();
    ip.model.objective.terms = dw
        .iter()
        .enumerate()
        .filter(|(_, &d)| d != 0)
        .map(|(i, &d)| (last[i], rat_int(2 * d as Int)))
        .collect();
    ip.model.objective.constant = rat_int(constant as Int);
    ip.alt_class = Some(t);
    Ok(ip)
}

/// Combined formulation: one IP over all alternative classes with selector
/// binaries z_t and products v_ti = z_t·x_i^L.
pub fn build_one_ip(bnn: &BnnModel, spec: &InputSpec) -> Result<VerificationIp, FormulationError> {
    let classes = bnn.num_classes();
    if classes < 2 {
        return Err(FormulationError::TooFewClasses(classes));
    }
    let mut ip = build_base(bnn, spec)?;
    let tbar = spec.true_class;
    let last = ip.x.last().unwrap().clone();
    let n_last = last.len();

    let alt: Vec<usize> = (0..classes).filter(|&t| t != tbar).collect();
    let mut z = Vec::with_capacity(alt.len());
    let mut v = Vec::with_capacity(alt.len());
    for &t in &alt {
        z.push((
            t,
            ip.model
                .add_var(&format!("z_{t}"), Rat::zero(), rat_int(1), true)?,
        ));
    }
    for &t in &alt {
        let mut row = Vec::with_capacity(n_last);
        for i in 0..n_last {
            row.push(
                ip.model
                    .add_var(&format!("v_{t}_{i}"), Rat::zero(), rat_int(1), true)?,
            );
        }
        v.push(row);
    }

    // Σ_t z_t = 1.
    ip.model.add_constraint(
        z.iter().map(|&(_, zv)| (zv, rat_int(1))).collect(),
        Sense::Eq,
        rat_int(1),
        "class.sum",
    )?;
    // Σ_t v_ti = x_i^L.
    for i in 0..n_last {
        let mut terms: Vec<(VarRef, Rat)> =
            v.iter().map(|row| (row[i], rat_int(1))).collect();
        terms.push((last[i], rat_int(-1)));
        ip.model
            .add_constraint(terms, Sense::Eq, Rat::zero(), format!("prod.sum[i={i}]"))?;
    }
    // v_ti ≤ z_t.
    for (ti, &(t, zv)) in z.iter().enumerate() {
        for i in 0..n_last {
            ip.model.add_constraint(
                vec![(v[ti][i], rat_int(1)), (zv, rat_int(-1))],
                Sense::Le,
                Rat::zero(),
                format!("prod.link[t={t},i={i}]"),
            )?;
        }
    }

    // Objective: Σ_t Σ_i 2ΔW_ti v_ti + Σ_t (−Σ_i ΔW_ti + Δb_t) z_t,
    // with output-layer (L+1) weights and biases.
    let mut terms: Vec<(VarRef, Rat)> = Vec::new();
    for (ti, &(t, zv)) in z.iter().enumerate() {
        let (dw, constant) = margin_coeffs(bnn, tbar, t);
        for (i, &d) in dw.iter().enumerate() {
            if d != 0 {
                terms.push((v[ti][i], rat_int(2 * d as Int)));
            }
        }
        if constant != 0 {
            terms.push((zv, rat_int(constant as Int)));
        }
    }
    ip.model.objective.terms = terms;
    ip.model.objective.constant = Rat::zero();

    ip.z = z;
    ip.v = v;
    Ok(ip)
}

impl VerificationIp {
    /// Adds every layer's outer-approximation facts; returns the number
    /// of linear constraints added (fixings count as bounds, not rows).
    pub fn apply_outer_approx(
        &mut self,
        approx: &OuterApprox,
    ) -> Result<usize, FormulationError> {
        let mut added = 0;
        for layer in 1..=self.x.len() {
            added += approx.constrain_layer(&mut self.model, layer, &self.x[layer - 1])?;
        }
        Ok(added)
    }

    /// Rounding heuristic: snap the LP's y to the quantized grid, project
    /// it into the ε-ball by greedy single-step moves toward the anchor,
    /// propagate exactly, and fill every auxiliary variable consistently.
    /// The result is feasible by construction; the solver re-checks.
    pub fn rounding_heuristic(&self, lp_point: &[Rat]) -> Option<Vec<Rat>> {
        let q = self.bnn.q as i64;
        let spec = &self.spec;
        let mut y: Vec<i64> = self
            .y
            .iter()
            .map(|v| (round_half_away(&lp_point[v.0]) as i64).clamp(0, q))
            .collect();

        match spec.norm {
            Norm::Linf => {
                let radius = floor_int(&(spec.epsilon * rat_int(q as Int))) as i64;
                for (j, yj) in y.iter_mut().enumerate() {
                    let lo = (spec.anchor[j] - radius).max(0);
                    let hi = (spec.anchor[j] + radius).min(q);
                    *yj = (*yj).clamp(lo, hi);
                }
            }
            Norm::L1 => {
                let budget = floor_int(&(spec.epsilon * rat_int(q as Int))) as i64;
                loop {
                    let total: i64 = y
                        .iter()
                        .zip(&spec.anchor)
                        .map(|(&v, &a)| (v - a).abs())
                        .sum();
                    if total <= budget {
                        break;
                    }
                    let j = (0..y.len())
                        .max_by_key(|&j| (y[j] - spec.anchor[j]).abs())
                        .unwrap();
                    y[j] -= (y[j] - spec.anchor[j]).signum();
                }
            }
            Norm::L2 => {
                let budget = {
                    let t = spec.epsilon * spec.epsilon * rat_int((q * q) as Int);
                    if t < Rat::zero() {
                        return None;
                    }
                    floor_int(&t) as i64
                };
                loop {
                    let total: i64 = y
                        .iter()
                        .zip(&spec.anchor)
                        .map(|(&v, &a)| (v - a) * (v - a))
                        .sum();
                    if total <= budget {
                        break;
                    }
                    let j = (0..y.len())
                        .max_by_key(|&j| (y[j] - spec.anchor[j]).abs())
                        .unwrap();
                    y[j] -= (y[j] - spec.anchor[j]).signum();
                }
            }
        }

        let prop = self.bnn.propagate(&y).ok()?;
        let mut point = vec![Rat::zero(); self.model.num_vars()];
        for (j, &yj) in y.iter().enumerate() {
            point[self.y[j].0] = rat_int(yj as Int);
        }
        for (j, &uj) in self.u.iter().enumerate() {
            point[uj.0] = rat((y[j] - spec.anchor[j]).abs() as Int, q as Int);
        }
        for (layer_xs, bits) in self.x.iter().zip(&prop.hidden) {
            for (xv, &bit) in layer_xs.iter().zip(bits) {
                point[xv.0] = rat_int(bit as Int);
            }
        }
        if !self.z.is_empty() {
            // Select the alternative class with the best margin.
            let tbar = spec.true_class;
            let best = self
                .z
                .iter()
                .enumerate()
                .max_by_key(|(_, &(t, _))| (prop.output[t] - prop.output[tbar], std::cmp::Reverse(t)))
                .map(|(ti, _)| ti)
                .unwrap();
            let last_bits = prop.hidden.last().unwrap();
            for (ti, &(_, zv)) in self.z.iter().enumerate() {
                point[zv.0] = rat_int((ti == best) as Int);
                for (i, &vv) in self.v[ti].iter().enumerate() {
                    let val = if ti == best { last_bits[i] } else { 0 };
                    point[vv.0] = rat_int(val as Int);
                }
            }
        }
        Some(point)
    }

    /// Extracts the q-scaled input from a solver assignment.
    pub fn extract_input(&self, point: &[Rat]) -> Vec<i64> {
        self.y
            .iter()
            .map(|v| point[v.0].to_integer() as i64)
            .collect()
    }

    /// The alternative class selected by a 1-IP assignment, or the fixed
    /// Many-IP class.
    pub fn extract_class(&self, point: &[Rat]) -> Option<usize> {
        if let Some(t) = self.alt_class {
            return Some(t);
        }
        self.z
            .iter()
            .find(|&&(_, zv)| point[zv.0] == rat_int(1))
            .map(|&(t, _)| t)
    }
}
