//! Solver-independent integer-program representation.
//!
//! Holds variables with rational bounds and integrality flags, linear
//! constraints with provenance tags, at most one convex quadratic
//! constraint (the l2 ball), and a linear maximization objective.
//! Provides the LP-relaxation view and an LP-format text export for
//! external solvers.

use crate::rat::{to_exact_decimal, Rat};
use num_traits::Zero;
use std::collections::HashMap;
use std::io::{self, Write};

/// Opaque handle into an [`IpModel`]'s variable table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarRef(pub usize);

#[derive(Debug, Clone)]
pub struct VarInfo {
    pub name: String,
    pub lower: Rat,
    pub upper: Rat,
    pub integral: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct LinConstraint {
    pub terms: Vec<(VarRef, Rat)>,
    pub sense: Sense,
    pub rhs: Rat,
    /// Provenance label, e.g. "propHid.lower[ℓ=2,i=3]" or "fix[ℓ=1,i=7]".
    pub tag: String,
}

/// Convex constraint Σ c_j v_j² ≤ rhs with c_j ≥ 0.
#[derive(Debug, Clone)]
pub struct QuadConstraint {
    pub squared_terms: Vec<(VarRef, Rat)>,
    pub rhs: Rat,
}

#[derive(Debug, Clone, Default)]
pub struct Objective {
    pub terms: Vec<(VarRef, Rat)>,
    pub constant: Rat,
}

#[derive(Debug, Clone, Default)]
pub struct IpModel {
    vars: Vec<VarInfo>,
    name_index: HashMap<String, usize>,
    pub constraints: Vec<LinConstraint>,
    pub quad: Option<QuadConstraint>,
    /// Maximization objective.
    pub objective: Objective,
}

#[derive(Debug, thiserror::Error)]
pub enum IpError {
    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),
    #[error("variable `{name}`: lower bound {lower} exceeds upper bound {upper}")]
    BadBounds {
        name: String,
        lower: Rat,
        upper: Rat,
    },
    #[error("constraint `{tag}` repeats variable `{var}`")]
    DuplicateTerm { tag: String, var: String },
    #[error("constraint references unregistered variable id {0}")]
    UnknownVar(usize),
    #[error("quadratic constraint is not convex (negative coefficient or rhs)")]
    NonConvexQuad,
    #[error("model already has a quadratic constraint")]
    SecondQuad,
}

impl IpModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(
        &mut self,
        name: &str,
        lower: Rat,
        upper: Rat,
        integral: bool,
    ) -> Result<VarRef, IpError> {
        if lower > upper {
            return Err(IpError::BadBounds {
                name: name.to_string(),
                lower,
                upper,
            });
        }
        if self.name_index.contains_key(name) {
            return Err(IpError::DuplicateName(name.to_string()));
        }
        let id = self.vars.len();
        self.name_index.insert(name.to_string(), id);
        self.vars.push(VarInfo {
            name: name.to_string(),
            lower,
            upper,
            integral,
        });
        Ok(VarRef(id))
    }

    pub fn add_constraint(
        &mut self,
        terms: Vec<(VarRef, Rat)>,
        sense: Sense,
        rhs: Rat,
        tag: impl Into<String>,
    ) -> Result<(), IpError> {
        let tag = tag.into();
        let mut seen = vec![false; self.vars.len()];
        for &(v, _) in &terms {
            if v.0 >= self.vars.len() {
                return Err(IpError::UnknownVar(v.0));
            }
            if seen[v.0] {
                return Err(IpError::DuplicateTerm {
                    tag,
                    var: self.vars[v.0].name.clone(),
                });
            }
            seen[v.0] = true;
        }
        self.constraints.push(LinConstraint {
            terms,
            sense,
            rhs,
            tag,
        });
        Ok(())
    }

    pub fn set_quad(&mut self, quad: QuadConstraint) -> Result<(), IpError> {
        if self.quad.is_some() {
            return Err(IpError::SecondQuad);
        }
        if quad.rhs < Rat::zero() || quad.squared_terms.iter().any(|(_, c)| *c < Rat::zero()) {
            return Err(IpError::NonConvexQuad);
        }
        for &(v, _) in &quad.squared_terms {
            if v.0 >= self.vars.len() {
                return Err(IpError::UnknownVar(v.0));
            }
        }
        self.quad = Some(quad);
        Ok(())
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn var(&self, v: VarRef) -> &VarInfo {
        &self.vars[v.0]
    }

    pub fn vars(&self) -> &[VarInfo] {
        &self.vars
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarRef> {
        self.name_index.get(name).copied().map(VarRef)
    }

    /// Tightens a variable's bounds in place (used by Linf input handling
    /// and fixings). Returns an error if the interval would become empty.
    pub fn tighten_bounds(
        &mut self,
        v: VarRef,
        lower: Option<Rat>,
        upper: Option<Rat>,
    ) -> Result<(), IpError> {
        let info = &mut self.vars[v.0];
        if let Some(lo) = lower {
            if lo > info.lower {
                info.lower = lo;
            }
        }
        if let Some(hi) = upper {
            if hi < info.upper {
                info.upper = hi;
            }
        }
        if info.lower > info.upper {
            return Err(IpError::BadBounds {
                name: info.name.clone(),
                lower: info.lower,
                upper: info.upper,
            });
        }
        Ok(())
    }

    /// Evaluates the objective at a full assignment.
    pub fn objective_value(&self, point: &[Rat]) -> Rat {
        self.objective
            .terms
            .iter()
            .map(|&(v, ref c)| *c * point[v.0])
            .sum::<Rat>()
            + self.objective.constant
    }

    /// Exact feasibility check of a full assignment: bounds, integrality,
    /// linear constraints, and the quadratic constraint if present.
    pub fn is_feasible(&self, point: &[Rat]) -> bool {
        if point.len() != self.vars.len() {
            return false;
        }
        for (info, val) in self.vars.iter().zip(point) {
            if *val < info.lower || *val > info.upper {
                return false;
            }
            if info.integral && !val.is_integer() {
                return false;
            }
        }
        for con in &self.constraints {
            let lhs: Rat = con.terms.iter().map(|&(v, ref c)| *c * point[v.0]).sum();
            let ok = match con.sense {
                Sense::Le => lhs <= con.rhs,
                Sense::Ge => lhs >= con.rhs,
                Sense::Eq => lhs == con.rhs,
            };
            if !ok {
                return false;
            }
        }
        if let Some(q) = &self.quad {
            let lhs: Rat = q
                .squared_terms
                .iter()
                .map(|&(v, ref c)| *c * point[v.0] * point[v.0])
                .sum();
            if lhs > q.rhs {
                return false;
            }
        }
        true
    }

    /// Copy with all integrality flags cleared; everything else, including
    /// tags and the quadratic constraint, is preserved verbatim.
    pub fn lp_relaxation(&self) -> IpModel {
        let mut copy = self.clone();
        for v in &mut copy.vars {
            v.integral = false;
        }
        copy
    }

    pub fn num_integer_vars(&self) -> usize {
        self.vars.iter().filter(|v| v.integral).count()
    }

    /// Writes the model in LP format. Returns `true` when every number was
    /// printed exactly; inexact (non-terminating) rationals are rendered
    /// with 17 significant digits and flagged by a leading comment.
    pub fn export_lp_text(&self, sink: &mut dyn Write) -> io::Result<bool> {
        let mut exact = true;
        let mut body = String::new();
        let mut fmt = |r: &Rat| -> String {
            match to_exact_decimal(r) {
                Some(s) => s,
                None => {
                    exact = false;
                    crate::rat::to_approx_decimal(r)
                }
            }
        };

        body.push_str("Maximize\n obj:");
        if self.objective.terms.is_empty() && self.objective.constant.is_zero() {
            body.push_str(" 0");
        }
        for (i, (v, c)) in self.objective.terms.iter().enumerate() {
            push_term(&mut body, i == 0, c, &self.vars[v.0].name, &mut fmt);
        }
        if !self.objective.constant.is_zero() {
            push_term(
                &mut body,
                self.objective.terms.is_empty(),
                &self.objective.constant,
                "",
                &mut fmt,
            );
        }
        body.push_str("\nSubject To\n");

        let mut used_names: HashMap<String, usize> = HashMap::new();
        for con in &self.constraints {
            let base = sanitize_tag(&con.tag);
            let count = used_names.entry(base.clone()).or_insert(0);
            *count += 1;
            let name = if *count == 1 {
                base
            } else {
                format!("{base}_{count}")
            };
            body.push_str(&format!(" {name}:"));
            if con.terms.is_empty() {
                body.push_str(" 0");
            }
            for (i, (v, c)) in con.terms.iter().enumerate() {
                push_term(&mut body, i == 0, c, &self.vars[v.0].name, &mut fmt);
            }
            let op = match con.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            body.push_str(&format!(" {op} {}\n", fmt(&con.rhs)));
        }
        if let Some(q) = &self.quad {
            body.push_str(" qc: [");
            for (i, (v, c)) in q.squared_terms.iter().enumerate() {
                push_term(&mut body, i == 0, c, &self.vars[v.0].name, &mut fmt);
                body.push_str(" ^ 2");
            }
            body.push_str(&format!(" ] <= {}\n", fmt(&q.rhs)));
        }

        body.push_str("Bounds\n");
        for v in &self.vars {
            body.push_str(&format!(
                " {} <= {} <= {}\n",
                fmt(&v.lower),
                v.name,
                fmt(&v.upper)
            ));
        }

        let binaries: Vec<&str> = self
            .vars
            .iter()
            .filter(|v| v.integral && v.lower.is_zero() && v.upper == Rat::from_integer(1))
            .map(|v| v.name.as_str())
            .collect();
        let generals: Vec<&str> = self
            .vars
            .iter()
            .filter(|v| v.integral && !(v.lower.is_zero() && v.upper == Rat::from_integer(1)))
            .map(|v| v.name.as_str())
            .collect();
        if !generals.is_empty() {
            body.push_str("General\n");
            for n in generals {
                body.push_str(&format!(" {n}\n"));
            }
        }
        if !binaries.is_empty() {
            body.push_str("Binary\n");
            for n in binaries {
                body.push_str(&format!(" {n}\n"));
            }
        }
        body.push_str("End\n");

        if !exact {
            sink.write_all(
                b"\\ warning: some coefficients have non-terminating decimals; \
printed with 17 significant digits (lossy export)\n",
            )?;
        }
        sink.write_all(body.as_bytes())?;
        Ok(exact)
    }
}

fn push_term(
    body: &mut String,
    first: bool,
    coeff: &Rat,
    name: &str,
    fmt: &mut impl FnMut(&Rat) -> String,
) {
    let sign = if *coeff < Rat::zero() {
        "-"
    } else if first {
        ""
    } else {
        "+"
    };
    let mag = if *coeff < Rat::zero() { -coeff } else { *coeff };
    if first {
        body.push(' ');
    } else {
        body.push_str(&format!(" {sign} "));
    }
    if first && !sign.is_empty() {
        body.push_str(sign);
    }
    if name.is_empty() {
        body.push_str(&fmt(&mag));
    } else if mag == Rat::from_integer(1) {
        body.push_str(name);
    } else {
        body.push_str(&format!("{} {}", fmt(&mag), name));
    }
}

/// Converts a provenance tag into an LP-format-safe constraint name:
/// `ℓ` becomes `l`, `=` `]` `*` are dropped, every other non-alphanumeric
/// character becomes `_` (runs collapsed, ends trimmed), and names that
/// would start with a digit get a `c` prefix.
pub fn sanitize_tag(tag: &str) -> String {
    let mut out = String::with_capacity(tag.len());
    for ch in tag.chars() {
        match ch {
            'ℓ' => out.push('l'),
            '=' | ']' | '*' => {}
            c if c.is_ascii_alphanumeric() || c == '_' => out.push(c),
            _ => {
                if !out.ends_with('_') {
                    out.push('_');
                }
            }
        }
    }
    let trimmed = out.trim_matches('_');
    let mut name = String::new();
    let mut prev_underscore = false;
    for c in trimmed.chars() {
        if c == '_' {
            if prev_underscore {
                continue;
            }
            prev_underscore = true;
        } else {
            prev_underscore = false;
        }
        name.push(c);
    }
    if name.is_empty() {
        name.push('c');
    }
    if name.chars().next().unwrap().is_ascii_digit() {
        name.insert(0, 'c');
    }
    name
}

/// Minimal LP-format reader used to check export round-trips in tests.
/// Supports exactly the dialect produced by [`IpModel::export_lp_text`].
pub fn parse_lp_text(text: &str) -> Result<IpModel, String> {
    use crate::rat::parse_rat;

    #[derive(PartialEq)]
    enum Section {
        Preamble,
        Objective,
        Constraints,
        Bounds,
        General,
        Binary,
        Done,
    }

    struct RawCon {
        name: String,
        terms: Vec<(String, Rat)>,
        sense: Sense,
        rhs: Rat,
        quad: bool,
    }

    let mut section = Section::Preamble;
    let mut obj_terms: Vec<(String, Rat)> = Vec::new();
    let mut obj_constant = Rat::zero();
    let mut raw_cons: Vec<RawCon> = Vec::new();
    let mut bounds: Vec<(String, Rat, Rat)> = Vec::new();
    let mut generals: Vec<String> = Vec::new();
    let mut binaries: Vec<String> = Vec::new();

    let parse_expr = |tokens: &[&str]| -> Result<(Vec<(String, Rat)>, Rat), String> {
        let mut terms = Vec::new();
        let mut constant = Rat::zero();
        let mut sign = Rat::from_integer(1);
        let mut pending: Option<Rat> = None;
        for &tok in tokens {
            match tok {
                "+" => sign = Rat::from_integer(1),
                "-" => sign = -Rat::from_integer(1),
                _ => {
                    if let Ok(num) = parse_rat(tok) {
                        if let Some(c) = pending.take() {
                            // two numbers in a row: previous was a constant
                            constant += c;
                        }
                        pending = Some(sign * num);
                        sign = Rat::from_integer(1);
                    } else {
                        let coeff = pending.take().unwrap_or(sign);
                        sign = Rat::from_integer(1);
                        terms.push((tok.to_string(), coeff));
                    }
                }
            }
        }
        if let Some(c) = pending {
            constant += c;
        }
        Ok((terms, constant))
    };

    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('\\') {
            continue;
        }
        match line {
            "Maximize" => {
                section = Section::Objective;
                continue;
            }
            "Subject To" => {
                section = Section::Constraints;
                continue;
            }
            "Bounds" => {
                section = Section::Bounds;
                continue;
            }
            "General" => {
                section = Section::General;
                continue;
            }
            "Binary" => {
                section = Section::Binary;
                continue;
            }
            "End" => {
                section = Section::Done;
                continue;
            }
            _ => {}
        }
        match section {
            Section::Objective => {
                let body = line.split_once(':').map(|(_, b)| b).unwrap_or(line);
                let tokens: Vec<&str> = body.split_whitespace().collect();
                let (terms, constant) = parse_expr(&tokens)?;
                obj_terms.extend(terms);
                obj_constant += constant;
            }
            Section::Constraints => {
                let (name, body) = line
                    .split_once(':')
                    .ok_or_else(|| format!("constraint without name: {line}"))?;
                let quad = body.contains('[');
                let cleaned = body.replace(['[', ']'], " ").replace("^ 2", " ");
                let tokens: Vec<&str> = cleaned.split_whitespace().collect();
                let (op_idx, sense) = tokens
                    .iter()
                    .enumerate()
                    .find_map(|(i, &t)| match t {
                        "<=" => Some((i, Sense::Le)),
                        ">=" => Some((i, Sense::Ge)),
                        "=" => Some((i, Sense::Eq)),
                        _ => None,
                    })
                    .ok_or_else(|| format!("constraint without comparison: {line}"))?;
                let (terms, constant) = parse_expr(&tokens[..op_idx])?;
                let rhs = parse_rat(tokens[op_idx + 1]).map_err(|e| e.to_string())? - constant;
                raw_cons.push(RawCon {
                    name: name.trim().to_string(),
                    terms,
                    sense,
                    rhs,
                    quad,
                });
            }
            Section::Bounds => {
                let tokens: Vec<&str> = line.split_whitespace().collect();
                if tokens.len() != 5 || tokens[1] != "<=" || tokens[3] != "<=" {
                    return Err(format!("unsupported bounds line: {line}"));
                }
                let lo = parse_rat(tokens[0]).map_err(|e| e.to_string())?;
                let hi = parse_rat(tokens[4]).map_err(|e| e.to_string())?;
                bounds.push((tokens[2].to_string(), lo, hi));
            }
            Section::General => generals.push(line.to_string()),
            Section::Binary => binaries.push(line.to_string()),
            Section::Preamble | Section::Done => {}
        }
    }

    let mut model = IpModel::new();
    let mut refs: HashMap<String, VarRef> = HashMap::new();
    for (name, lo, hi) in &bounds {
        let integral = generals.iter().any(|g| g == name) || binaries.iter().any(|b| b == name);
        let v = model
            .add_var(name, *lo, *hi, integral)
            .map_err(|e| e.to_string())?;
        refs.insert(name.clone(), v);
    }
    let lookup = |refs: &HashMap<String, VarRef>, n: &str| -> Result<VarRef, String> {
        refs.get(n).copied().ok_or_else(|| format!("unknown var {n}"))
    };
    for (name, coeff) in obj_terms {
        let v = lookup(&refs, &name)?;
        model.objective.terms.push((v, coeff));
    }
    model.objective.constant = obj_constant;
    for con in raw_cons {
        let terms: Vec<(VarRef, Rat)> = con
            .terms
            .iter()
            .map(|(n, c)| lookup(&refs, n).map(|v| (v, *c)))
            .collect::<Result<_, _>>()?;
        if con.quad {
            model
                .set_quad(QuadConstraint {
                    squared_terms: terms,
                    rhs: con.rhs,
                })
                .map_err(|e| e.to_string())?;
        } else {
            model
                .add_constraint(terms, con.sense, con.rhs, con.name)
                .map_err(|e| e.to_string())?;
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::{rat, rat_int};

    fn r(n: i128) -> Rat {
        rat_int(n)
    }

    #[test]
    fn add_var_and_duplicates() {
        let mut m = IpModel::new();
        let y = m.add_var("y_3", r(0), r(4), true).unwrap();
        assert_eq!(m.var(y).name, "y_3");
        assert!(m.add_var("y_3", r(0), r(1), true).is_err());
        assert!(m.add_var("bad", r(1), r(0), false).is_err());
    }

    #[test]
    fn relaxation_clears_integrality_only() {
        let mut m = IpModel::new();
        let x = m.add_var("x", r(0), r(1), true).unwrap();
        let y = m.add_var("y", r(0), r(3), true).unwrap();
        m.add_var("w", r(0), r(1), false).unwrap();
        m.add_constraint(vec![(x, r(1)), (y, r(1))], Sense::Le, r(2), "tag[ℓ=1]")
            .unwrap();
        let relaxed = m.lp_relaxation();
        assert_eq!(relaxed.num_integer_vars(), 0);
        assert_eq!(relaxed.constraints.len(), 1);
        assert_eq!(relaxed.constraints[0].tag, "tag[ℓ=1]");
        // idempotent on a pure LP
        let again = relaxed.lp_relaxation();
        assert_eq!(again.num_integer_vars(), 0);
        assert_eq!(again.num_vars(), 3);
    }

    #[test]
    fn relaxation_keeps_integral_points_feasible() {
        let mut m = IpModel::new();
        let x = m.add_var("x", r(0), r(1), true).unwrap();
        m.add_constraint(vec![(x, r(2))], Sense::Le, r(3), "c").unwrap();
        let relaxed = m.lp_relaxation();
        for val in [r(0), r(1)] {
            if m.is_feasible(&[val]) {
                assert!(relaxed.is_feasible(&[val]));
            }
        }
    }

    #[test]
    fn sanitize_examples() {
        assert_eq!(sanitize_tag("fix[ℓ=1,i=7]"), "fix_l1_i7");
        assert_eq!(sanitize_tag("propHid.lower[ℓ=2,i=3]"), "propHid_lower_l2_i3");
        assert_eq!(sanitize_tag("2var[ℓ=2,(i,k)]"), "c2var_l2_i_k");
        assert_eq!(sanitize_tag("hull.lb[J]"), "hull_lb_J");
        assert_eq!(sanitize_tag(""), "c");
    }

    #[test]
    fn export_skeleton() {
        let mut m = IpModel::new();
        let x = m.add_var("x", r(0), r(1), false).unwrap();
        m.objective.terms.push((x, r(1)));
        m.add_constraint(vec![(x, r(1))], Sense::Le, r(1), "cap").unwrap();
        let mut buf = Vec::new();
        let exact = m.export_lp_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(exact);
        assert!(text.contains("Maximize"));
        assert!(text.contains("Bounds"));
        assert!(text.contains("End"));
        assert!(text.contains("cap: x <= 1"));
    }

    #[test]
    fn export_quadratic_section() {
        let mut m = IpModel::new();
        let u = m.add_var("u_0", r(0), r(1), false).unwrap();
        let w = m.add_var("u_1", r(0), r(1), false).unwrap();
        m.set_quad(QuadConstraint {
            squared_terms: vec![(u, r(1)), (w, r(1))],
            rhs: rat(1, 16),
        })
        .unwrap();
        let mut buf = Vec::new();
        m.export_lp_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("[ u_0 ^ 2 + u_1 ^ 2 ] <= 0.0625"));
    }

    #[test]
    fn export_lossy_warning() {
        let mut m = IpModel::new();
        let x = m.add_var("x", r(0), r(1), false).unwrap();
        m.add_constraint(vec![(x, rat(1, 3))], Sense::Le, r(1), "third")
            .unwrap();
        let mut buf = Vec::new();
        let exact = m.export_lp_text(&mut buf).unwrap();
        assert!(!exact);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("\\ warning"));
    }

    #[test]
    fn export_roundtrip() {
        let mut m = IpModel::new();
        let y = m.add_var("y_0", r(0), r(3), true).unwrap();
        let x = m.add_var("x1_0", r(0), r(1), true).unwrap();
        let u = m.add_var("u_0", r(0), r(1), false).unwrap();
        m.objective.terms.push((y, r(2)));
        m.objective.terms.push((x, rat(-1, 2)));
        m.objective.constant = r(5);
        m.add_constraint(
            vec![(y, r(2)), (x, r(-3))],
            Sense::Ge,
            rat(-1, 4),
            "propIn.lower[ℓ=1,i=0]",
        )
        .unwrap();
        m.add_constraint(vec![(x, r(1)), (u, r(1))], Sense::Eq, r(1), "mix")
            .unwrap();
        m.set_quad(QuadConstraint {
            squared_terms: vec![(u, r(1))],
            rhs: rat(9, 16),
        })
        .unwrap();

        let mut buf = Vec::new();
        assert!(m.export_lp_text(&mut buf).unwrap());
        let parsed = parse_lp_text(&String::from_utf8(buf).unwrap()).unwrap();
        assert_eq!(parsed.num_vars(), m.num_vars());
        assert_eq!(parsed.constraints.len(), m.constraints.len());
        assert_eq!(parsed.num_integer_vars(), m.num_integer_vars());
        assert_eq!(parsed.objective.constant, m.objective.constant);
        for (a, b) in parsed.objective.terms.iter().zip(&m.objective.terms) {
            assert_eq!(a.1, b.1);
        }
        for (pc, mc) in parsed.constraints.iter().zip(&m.constraints) {
            assert_eq!(pc.sense, mc.sense);
            assert_eq!(pc.rhs, mc.rhs);
            let pm: Vec<Rat> = pc.terms.iter().map(|t| t.1).collect();
            let mm: Vec<Rat> = mc.terms.iter().map(|t| t.1).collect();
            assert_eq!(pm, mm);
        }
        let pq = parsed.quad.as_ref().unwrap();
        assert_eq!(pq.rhs, rat(9, 16));
        for (vinfo, morig) in parsed.vars().iter().zip(m.vars()) {
            assert_eq!(vinfo.lower, morig.lower);
            assert_eq!(vinfo.upper, morig.upper);
            assert_eq!(vinfo.integral, morig.integral);
        }
    }

    #[test]
    fn feasibility_checks() {
        let mut m = IpModel::new();
        let x = m.add_var("x", r(0), r(1), true).unwrap();
        let y = m.add_var("y", r(0), r(2), false).unwrap();
        m.add_constraint(vec![(x, r(1)), (y, r(1))], Sense::Le, r(2), "c")
            .unwrap();
        assert!(m.is_feasible(&[r(1), r(1)]));
        assert!(!m.is_feasible(&[rat(1, 2), r(1)])); // fractional integer var
        assert!(!m.is_feasible(&[r(1), rat(3, 2)]) || r(1) + rat(3, 2) <= r(2));
        assert!(!m.is_feasible(&[r(1), r(2)])); // violates c
    }
}
