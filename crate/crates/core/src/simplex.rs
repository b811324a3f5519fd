//! Exact bounded-variable primal simplex over rationals.
//!
//! Two-phase dense tableau method. Slack variables carry the row senses;
//! artificial variables patch rows whose slack cannot absorb the initial
//! residual. Entering variable: Dantzig rule (most positive reduced-cost
//! improvement), falling back to Bland's rule after 1000 consecutive
//! degenerate pivots so termination is guaranteed. All arithmetic is
//! rational, so "optimal" means exactly optimal.

use crate::ip::{IpModel, Sense};
use crate::rat::Rat;
use num_traits::Zero;

#[derive(Debug, Clone)]
pub struct LpRow {
    pub coeffs: Vec<(usize, Rat)>,
    pub sense: Sense,
    pub rhs: Rat,
}

/// A pure LP in bounded-variable form, maximization. `None` bounds are
/// infinite. Structural variables must have at least one finite bound.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub lo: Vec<Option<Rat>>,
    pub hi: Vec<Option<Rat>>,
    pub rows: Vec<LpRow>,
    pub obj: Vec<Rat>,
    pub obj_const: Rat,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LpOutcome {
    Optimal { value: Rat, point: Vec<Rat> },
    Infeasible,
    Unbounded,
}

#[derive(Debug, thiserror::Error)]
pub enum LpError {
    #[error("variable {0} has no finite bound")]
    FreeVar(usize),
    #[error("variable {index}: lower bound exceeds upper bound")]
    EmptyBounds { index: usize },
    #[error("simplex iteration limit exceeded")]
    IterationLimit,
    #[error("quadratic constraints are not supported by the LP solver")]
    QuadUnsupported,
}

impl LpProblem {
    /// Builds a bounded LP from an IP model's relaxation (integrality is
    /// ignored here; the caller is responsible for relaxing). A quadratic
    /// constraint is rejected.
    pub fn from_ip(model: &IpModel) -> Result<LpProblem, LpError> {
        if model.quad.is_some() {
            return Err(LpError::QuadUnsupported);
        }
        let n = model.num_vars();
        let mut lo = Vec::with_capacity(n);
        let mut hi = Vec::with_capacity(n);
        for v in model.vars() {
            lo.push(Some(v.lower));
            hi.push(Some(v.upper));
        }
        let rows = model
            .constraints
            .iter()
            .map(|c| LpRow {
                coeffs: c.terms.iter().map(|&(v, coef)| (v.0, coef)).collect(),
                sense: c.sense,
                rhs: c.rhs,
            })
            .collect();
        let mut obj = vec![Rat::zero(); n];
        for &(v, ref c) in &model.objective.terms {
            obj[v.0] += *c;
        }
        Ok(LpProblem {
            lo,
            hi,
            rows,
            obj,
            obj_const: model.objective.constant,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarStatus {
    AtLower,
    AtUpper,
    Basic,
}

const DEGENERATE_PIVOT_LIMIT: u64 = 1000;
const ITERATION_LIMIT: u64 = 1_000_000;

struct Tableau {
    m: usize,
    ncols: usize,
    first_artificial: usize,
    /// tab[i][j] = (B^{-1} A)_{ij}
    tab: Vec<Vec<Rat>>,
    /// Current values of the basic variables, row by row.
    beta: Vec<Rat>,
    basic: Vec<usize>,
    status: Vec<VarStatus>,
    /// Bound a nonbasic variable currently sits at.
    xval: Vec<Rat>,
    lo: Vec<Option<Rat>>,
    hi: Vec<Option<Rat>>,
    banned: Vec<bool>,
    degenerate_streak: u64,
    iterations: u64,
}

enum StepResult {
    Optimal,
    Unbounded,
    Progress,
}

impl Tableau {
    fn new(p: &LpProblem) -> Result<Tableau, LpError> {
        let n = p.lo.len();
        let m = p.rows.len();
        for j in 0..n {
            if p.lo[j].is_none() && p.hi[j].is_none() {
                return Err(LpError::FreeVar(j));
            }
            if let (Some(l), Some(h)) = (&p.lo[j], &p.hi[j]) {
                if l > h {
                    return Err(LpError::EmptyBounds { index: j });
                }
            }
        }

        // Columns: structural | slacks | artificials (appended as needed).
        let mut lo = p.lo.clone();
        let mut hi = p.hi.clone();
        for row in &p.rows {
            match row.sense {
                Sense::Le => {
                    lo.push(Some(Rat::zero()));
                    hi.push(None);
                }
                Sense::Ge => {
                    lo.push(None);
                    hi.push(Some(Rat::zero()));
                }
                Sense::Eq => {
                    lo.push(Some(Rat::zero()));
                    hi.push(Some(Rat::zero()));
                }
            }
        }

        // Nonbasic structural variables start at a finite bound.
        let mut status = vec![VarStatus::AtLower; n + m];
        let mut xval = vec![Rat::zero(); n + m];
        for j in 0..n {
            match (&lo[j], &hi[j]) {
                (Some(l), _) => {
                    status[j] = VarStatus::AtLower;
                    xval[j] = *l;
                }
                (None, Some(h)) => {
                    status[j] = VarStatus::AtUpper;
                    xval[j] = *h;
                }
                _ => unreachable!(),
            }
        }

        let mut tab: Vec<Vec<Rat>> = Vec::with_capacity(m);
        let mut basic = vec![usize::MAX; m];
        let mut beta = vec![Rat::zero(); m];
        let mut artificial_rows: Vec<(usize, Rat)> = Vec::new();
        for (i, row) in p.rows.iter().enumerate() {
            let mut dense = vec![Rat::zero(); n + m];
            for &(j, ref c) in &row.coeffs {
                dense[j] += *c;
            }
            dense[n + i] = Rat::from_integer(1);
            tab.push(dense);

            let residual: Rat = row.rhs
                - row
                    .coeffs
                    .iter()
                    .map(|&(j, ref c)| *c * xval[j])
                    .sum::<Rat>();
            let slack = n + i;
            let within = match (&lo[slack], &hi[slack]) {
                (Some(l), Some(h)) => residual >= *l && residual <= *h,
                (Some(l), None) => residual >= *l,
                (None, Some(h)) => residual <= *h,
                (None, None) => true,
            };
            if within {
                status[slack] = VarStatus::Basic;
                basic[i] = slack;
                beta[i] = residual;
            } else {
                // Park the slack at its nearest bound; an artificial
                // column absorbs what remains.
                let parked = match (&lo[slack], &hi[slack]) {
                    (Some(l), _) if residual < *l => *l,
                    (_, Some(h)) => *h,
                    (Some(l), None) => *l,
                    _ => unreachable!(),
                };
                status[slack] = if Some(parked) == lo[slack] {
                    VarStatus::AtLower
                } else {
                    VarStatus::AtUpper
                };
                xval[slack] = parked;
                artificial_rows.push((i, residual - parked));
            }
        }

        let first_artificial = n + m;
        let ncols = n + m + artificial_rows.len();
        for row in &mut tab {
            row.resize(ncols, Rat::zero());
        }
        lo.resize(ncols, Some(Rat::zero()));
        hi.resize(ncols, None);
        status.resize(ncols, VarStatus::AtLower);
        xval.resize(ncols, Rat::zero());
        for (k, &(i, ref resid)) in artificial_rows.iter().enumerate() {
            let col = first_artificial + k;
            tab[i][col] = Rat::from_integer(1);
            // Scale the row so the basic artificial has value |residual|.
            if resid.is_negative_rat() {
                for (c, v) in tab[i].iter_mut().enumerate() {
                    if c != col {
                        *v = -*v;
                    }
                }
            }
            status[col] = VarStatus::Basic;
            basic[i] = col;
            beta[i] = if resid.is_negative_rat() {
                -*resid
            } else {
                *resid
            };
        }

        Ok(Tableau {
            m,
            ncols,
            first_artificial,
            tab,
            beta,
            basic,
            status,
            xval,
            lo,
            hi,
            banned: vec![false; ncols],
            degenerate_streak: 0,
            iterations: 0,
        })
    }

    fn has_artificials(&self) -> bool {
        self.ncols > self.first_artificial
    }

    fn value_of(&self, j: usize) -> Rat {
        if self.status[j] == VarStatus::Basic {
            let row = self.basic.iter().position(|&b| b == j).unwrap();
            self.beta[row]
        } else {
            self.xval[j]
        }
    }

    /// One simplex iteration for maximizing `cost`.
    fn step(&mut self, cost: &[Rat]) -> Result<StepResult, LpError> {
        self.iterations += 1;
        if self.iterations > ITERATION_LIMIT {
            return Err(LpError::IterationLimit);
        }
        let bland = self.degenerate_streak >= DEGENERATE_PIVOT_LIMIT;

        // Reduced costs d_j = c_j - c_B . tab[:, j].
        let cb: Vec<Rat> = self.basic.iter().map(|&b| cost[b]).collect();
        let mut entering: Option<(usize, Rat, i32)> = None; // (col, |d|, dir)
        for j in 0..self.ncols {
            if self.status[j] == VarStatus::Basic || self.banned[j] {
                continue;
            }
            if self.lo[j].is_some() && self.lo[j] == self.hi[j] {
                continue; // fixed variable can never improve
            }
            let mut d = cost[j];
            for i in 0..self.m {
                if !cb[i].is_zero() && !self.tab[i][j].is_zero() {
                    d -= cb[i] * self.tab[i][j];
                }
            }
            let dir = match self.status[j] {
                VarStatus::AtLower if d > Rat::zero() => 1,
                VarStatus::AtUpper if d < Rat::zero() => -1,
                _ => continue,
            };
            let mag = if d < Rat::zero() { -d } else { d };
            match &entering {
                None => entering = Some((j, mag, dir)),
                Some((_, best, _)) if !bland && mag > *best => entering = Some((j, mag, dir)),
                _ => {
                    if bland {
                        // Bland: first eligible index wins; stop scanning.
                        break;
                    }
                }
            }
            if bland {
                break;
            }
        }
        let Some((j, _, dir)) = entering else {
            return Ok(StepResult::Optimal);
        };
        let dir_rat = Rat::from_integer(dir as i128);

        // Ratio test.
        let mut t_best: Option<Rat> = None;
        let mut leave: Option<(usize, VarStatus)> = None; // (row, bound leaving var hits)
        if let (Some(l), Some(h)) = (&self.lo[j], &self.hi[j]) {
            t_best = Some(*h - *l);
        }
        for i in 0..self.m {
            let a = dir_rat * self.tab[i][j];
            if a.is_zero() {
                continue;
            }
            let b = self.basic[i];
            let (limit, hits) = if a > Rat::zero() {
                match &self.lo[b] {
                    Some(l) => ((self.beta[i] - *l) / a, VarStatus::AtLower),
                    None => continue,
                }
            } else {
                match &self.hi[b] {
                    Some(h) => ((self.beta[i] - *h) / a, VarStatus::AtUpper),
                    None => continue,
                }
            };
            let better = match &t_best {
                None => true,
                Some(t) => {
                    limit < *t
                        || (limit == *t
                            && match &leave {
                                None => false,
                                Some((r, _)) => self.basic[i] < self.basic[*r],
                            })
                }
            };
            if better {
                t_best = Some(limit);
                leave = Some((i, hits));
            }
        }
        let Some(t) = t_best else {
            return Ok(StepResult::Unbounded);
        };
        debug_assert!(t >= Rat::zero());
        if t.is_zero() {
            self.degenerate_streak += 1;
        } else {
            self.degenerate_streak = 0;
        }

        let delta = dir_rat * t;
        match leave {
            None => {
                // Bound flip: entering variable runs to its other bound.
                for i in 0..self.m {
                    let a = self.tab[i][j];
                    if !a.is_zero() {
                        self.beta[i] = self.beta[i] - a * delta;
                    }
                }
                self.xval[j] = self.xval[j] + delta;
                self.status[j] = if dir > 0 {
                    VarStatus::AtUpper
                } else {
                    VarStatus::AtLower
                };
            }
            Some((r, hits)) => {
                let new_entering_value = self.xval[j] + delta;
                for i in 0..self.m {
                    if i != r {
                        let a = self.tab[i][j];
                        if !a.is_zero() {
                            self.beta[i] = self.beta[i] - a * delta;
                        }
                    }
                }
                let leaving = self.basic[r];
                self.status[leaving] = hits;
                self.xval[leaving] = match hits {
                    VarStatus::AtLower => self.lo[leaving].unwrap(),
                    VarStatus::AtUpper => self.hi[leaving].unwrap(),
                    VarStatus::Basic => unreachable!(),
                };
                self.pivot(r, j);
                self.beta[r] = new_entering_value;
            }
        }
        Ok(StepResult::Progress)
    }

    /// Gaussian elimination making column `j` the unit vector of row `r`.
    fn pivot(&mut self, r: usize, j: usize) {
        let piv = self.tab[r][j];
        debug_assert!(!piv.is_zero());
        let inv = Rat::from_integer(1) / piv;
        for v in self.tab[r].iter_mut() {
            if !v.is_zero() {
                *v = *v * inv;
            }
        }
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let factor = self.tab[i][j];
            if factor.is_zero() {
                continue;
            }
            for col in 0..self.ncols {
                let val = self.tab[r][col];
                if !val.is_zero() {
                    self.tab[i][col] = self.tab[i][col] - factor * val;
                }
            }
        }
        self.status[j] = VarStatus::Basic;
        self.basic[r] = j;
    }

    fn run(&mut self, cost: &[Rat]) -> Result<StepResult, LpError> {
        loop {
            match self.step(cost)? {
                StepResult::Progress => continue,
                other => return Ok(other),
            }
        }
    }

    /// After phase 1: pivot artificials out of the basis or drop redundant
    /// rows, then ban them from ever re-entering.
    fn retire_artificials(&mut self) {
        let mut r = 0;
        while r < self.m {
            let b = self.basic[r];
            if b >= self.first_artificial {
                debug_assert!(self.beta[r].is_zero());
                let mut pivot_col = None;
                for j in 0..self.first_artificial {
                    if self.status[j] != VarStatus::Basic && !self.tab[r][j].is_zero() {
                        pivot_col = Some(j);
                        break;
                    }
                }
                match pivot_col {
                    Some(j) => {
                        let val = self.xval[j];
                        self.status[b] = VarStatus::AtLower;
                        self.xval[b] = Rat::zero();
                        self.pivot(r, j);
                        self.beta[r] = val;
                    }
                    None => {
                        // Row is redundant: remove it.
                        self.tab.remove(r);
                        self.beta.remove(r);
                        self.basic.remove(r);
                        self.status[b] = VarStatus::AtLower;
                        self.m -= 1;
                        continue;
                    }
                }
            }
            r += 1;
        }
        for j in self.first_artificial..self.ncols {
            self.banned[j] = true;
        }
    }
}

trait RatSign {
    fn is_negative_rat(&self) -> bool;
}
impl RatSign for Rat {
    fn is_negative_rat(&self) -> bool {
        *self < Rat::zero()
    }
}

/// Solves a bounded-variable LP exactly.
pub fn solve_lp(p: &LpProblem) -> Result<LpOutcome, LpError> {
    let n = p.lo.len();
    let mut t = Tableau::new(p)?;

    if t.has_artificials() {
        let mut phase1 = vec![Rat::zero(); t.ncols];
        for c in phase1.iter_mut().skip(t.first_artificial) {
            *c = -Rat::from_integer(1);
        }
        match t.run(&phase1)? {
            StepResult::Unbounded => unreachable!("phase-1 objective is bounded above by 0"),
            _ => {}
        }
        let infeas: Rat = (t.first_artificial..t.ncols).map(|j| t.value_of(j)).sum();
        if !infeas.is_zero() {
            return Ok(LpOutcome::Infeasible);
        }
        t.retire_artificials();
        t.degenerate_streak = 0;
    }

    let mut cost = vec![Rat::zero(); t.ncols];
    cost[..n].copy_from_slice(&p.obj);
    match t.run(&cost)? {
        StepResult::Unbounded => Ok(LpOutcome::Unbounded),
        _ => {
            let point: Vec<Rat> = (0..n).map(|j| t.value_of(j)).collect();
            let value: Rat = point
                .iter()
                .zip(&p.obj)
                .map(|(x, c)| *x * *c)
                .sum::<Rat>()
                + p.obj_const;
            Ok(LpOutcome::Optimal { value, point })
        }
    }
}
