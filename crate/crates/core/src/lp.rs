//! Dense two-phase tableau simplex for the small linear programs behind κ*.
//!
//! Bland's rule picks the entering variable. Ratio-test ties go to the
//! largest pivot, since a round-off sized pivot wrecks the tableau; the
//! iteration cap guards against the cycling this permits.

use crate::error::{Error, Result};

/// Entries at or below this magnitude are never used as pivots.
pub const PIVOT_TOL: f64 = 1e-9;

/// Phase-one objective above this value means the program is infeasible.
const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Self {
        Self {
            coeffs,
            relation,
            rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

/// Maximizes `objective · x` subject to `constraints`.
///
/// Variables are nonnegative unless flagged in `free` (an empty slice means
/// all nonnegative); free variables are split into a difference of two
/// nonnegative ones.
pub fn maximize(objective: &[f64], constraints: &[Constraint], free: &[bool]) -> Result<LpOutcome> {
    let n = objective.len();
    if n == 0 {
        return Err(Error::Input("linear program has no variables".into()));
    }
    if !free.is_empty() && free.len() != n {
        return Err(Error::Input("free-variable mask has the wrong length".into()));
    }
    for c in constraints {
        if c.coeffs.len() != n {
            return Err(Error::Input("constraint width does not match the objective".into()));
        }
        if !c.rhs.is_finite() || c.coeffs.iter().any(|a| !a.is_finite()) {
            return Err(Error::Input("non-finite constraint entry".into()));
        }
    }
    let is_free = |j: usize| free.get(j).copied().unwrap_or(false);

    // Column layout: structural (with negated copies for free vars), slacks/surpluses, artificials.
    let mut structural: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        structural.push((j, 1.0));
        if is_free(j) {
            structural.push((j, -1.0));
        }
    }
    let ns = structural.len();
    let m = constraints.len();
    let n_slack = constraints
        .iter()
        .filter(|c| c.relation != Relation::Eq)
        .count();

    // Orient every row so the right-hand side is nonnegative.
    let rows: Vec<(Vec<f64>, Relation, f64)> = constraints
        .iter()
        .map(|c| {
            let a: Vec<f64> = structural.iter().map(|&(j, s)| s * c.coeffs[j]).collect();
            if c.rhs < 0.0 {
                let flipped = match c.relation {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
                (a.iter().map(|v| -v).collect(), flipped, -c.rhs)
            } else {
                (a, c.relation, c.rhs)
            }
        })
        .collect();
    let n_art = rows.iter().filter(|r| r.1 != Relation::Le).count();
    let width = ns + n_slack + n_art;

    let mut tab = vec![vec![0.0; width + 1]; m];
    let mut basis = vec![0usize; m];
    let (mut slack_col, mut art_col) = (ns, ns + n_slack);
    for (r, (a, rel, b)) in rows.iter().enumerate() {
        tab[r][..ns].copy_from_slice(a);
        tab[r][width] = *b;
        match rel {
            Relation::Le => {
                tab[r][slack_col] = 1.0;
                basis[r] = slack_col;
                slack_col += 1;
            }
            Relation::Ge => {
                tab[r][slack_col] = -1.0;
                slack_col += 1;
                tab[r][art_col] = 1.0;
                basis[r] = art_col;
                art_col += 1;
            }
            Relation::Eq => {
                tab[r][art_col] = 1.0;
                basis[r] = art_col;
                art_col += 1;
            }
        }
    }
    let cap = 10 * (width + m).max(1);
    let mut t = Tableau { tab, basis, width };

    if n_art > 0 {
        let mut cost = vec![0.0; width];
        cost[ns + n_slack..].iter_mut().for_each(|c| *c = -1.0);
        match t.optimize(&cost, width, cap)? {
            Phase::Optimal => {}
            Phase::Unbounded => return Err(Error::Numerical("phase one reported unbounded".into())),
        }
        if -t.objective_value(&cost) > FEASIBILITY_TOL {
            return Ok(LpOutcome::Infeasible);
        }
        t.drive_out_artificials(ns + n_slack);
    }

    let mut cost = vec![0.0; width];
    for (col, &(j, s)) in structural.iter().enumerate() {
        cost[col] = s * objective[j];
    }
    match t.optimize(&cost, ns + n_slack, cap)? {
        Phase::Unbounded => Ok(LpOutcome::Unbounded),
        Phase::Optimal => {
            let mut x = vec![0.0; n];
            for (r, &b) in t.basis.iter().enumerate() {
                if b < ns {
                    let (j, s) = structural[b];
                    x[j] += s * t.tab[r][width];
                }
            }
            let value = objective.iter().zip(&x).map(|(c, v)| c * v).sum();
            Ok(LpOutcome::Optimal { x, value })
        }
    }
}

enum Phase {
    Optimal,
    Unbounded,
}

struct Tableau {
    tab: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn objective_value(&self, cost: &[f64]) -> f64 {
        self.basis
            .iter()
            .enumerate()
            .map(|(r, &b)| cost[b] * self.tab[r][self.width])
            .sum()
    }

    /// Maximizes `cost` using only columns `< allowed` as entering candidates.
    fn optimize(&mut self, cost: &[f64], allowed: usize, cap: usize) -> Result<Phase> {
        for _ in 0..cap {
            // reduced cost of column j: c_j − c_B · column_j
            let entering = (0..allowed).find(|&j| {
                if self.basis.contains(&j) {
                    return false;
                }
                let zj: f64 = self
                    .basis
                    .iter()
                    .enumerate()
                    .map(|(r, &b)| cost[b] * self.tab[r][j])
                    .sum();
                cost[j] - zj > PIVOT_TOL
            });
            let Some(col) = entering else {
                return Ok(Phase::Optimal);
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.tab.len() {
                let a = self.tab[r][col];
                if a > PIVOT_TOL {
                    let ratio = self.tab[r][self.width] / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            let tie = (ratio - lratio).abs() <= 1e-12 * (1.0 + lratio.abs());
                            let la = self.tab[lr][col];
                            let better_tie = a > la || (a == la && self.basis[r] < self.basis[lr]);
                            if (ratio < lratio && !tie) || (tie && better_tie) {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leave else {
                return Ok(Phase::Unbounded);
            };
            self.pivot(row, col);
        }
        Err(Error::Numerical(format!("simplex did not converge within {cap} pivots")))
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.tab[row][col];
        self.tab[row].iter_mut().for_each(|v| *v /= p);
        let pivot_row = self.tab[row].clone();
        for (r, line) in self.tab.iter_mut().enumerate() {
            if r == row {
                continue;
            }
            let f = line[col];
            if f != 0.0 {
                line.iter_mut().zip(&pivot_row).for_each(|(v, pv)| *v -= f * pv);
            }
        }
        self.basis[row] = col;
        // Round-off can leave basic values a hair below zero; a later division
        // by a small pivot would blow them up into real infeasibility.
        let w = self.width;
        self.tab.iter_mut().filter(|line| line[w] < 0.0).for_each(|line| line[w] = 0.0);
    }

    /// After phase one, pivots zero-level artificials out of the basis and
    /// drops rows that are redundant.
    fn drive_out_artificials(&mut self, first_artificial: usize) {
        let mut r = 0;
        while r < self.tab.len() {
            if self.basis[r] >= first_artificial {
                // The artificial sits at a level below the feasibility tolerance;
                // pin it to zero so the pivot cannot push other rows negative.
                self.tab[r][self.width] = 0.0;
                let col = (0..first_artificial)
                    .filter(|&j| self.tab[r][j].abs() > PIVOT_TOL)
                    .max_by(|&a, &b| self.tab[r][a].abs().total_cmp(&self.tab[r][b].abs()));
                match col {
                    Some(c) => {
                        self.pivot(r, c);
                        r += 1;
                    }
                    None => {
                        self.tab.remove(r);
                        self.basis.remove(r);
                    }
                }
            } else {
                r += 1;
            }
        }
    }
}
