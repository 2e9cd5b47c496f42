//! Uniform linear-program interface for every solver in the crate.
//!
//! The backend is an embedded dense two-phase simplex, generic over the
//! scalar type: with rationals every pivot is exact and `Infeasible` /
//! `Unbounded` are decided exactly; with floats the documented tolerances
//! apply. Pricing is Dantzig's rule with a permanent switch to Bland's
//! rule after a degenerate stall, which guarantees termination.

use crate::scalar::Scalar;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LpError {
    /// The solver hit its iteration cap without converging. Callers surface
    /// this; they never retry silently with looser tolerances.
    #[error("numerical failure: simplex did not converge within {iterations} iterations")]
    NumericalFailure { iterations: usize },
    #[error("malformed program: {0}")]
    BadSpec(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Rel {
    Le,
    Eq,
}

#[derive(Clone, Debug)]
struct Row<T> {
    coeffs: Vec<(usize, T)>,
    rel: Rel,
    rhs: T,
}

/// A minimization program: `min c.x` subject to sparse `<=` and `==` rows,
/// with per-variable non-negativity flags (free variables are split
/// internally).
#[derive(Clone, Debug)]
pub struct LpSpec<T> {
    num_vars: usize,
    objective: Vec<T>,
    rows: Vec<Row<T>>,
    nonneg: Vec<bool>,
}

impl<T: Scalar> LpSpec<T> {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            objective: vec![T::zero(); num_vars],
            rows: Vec::new(),
            nonneg: vec![true; num_vars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn set_objective(&mut self, var: usize, coeff: T) {
        self.objective[var] = coeff;
    }

    pub fn add_objective(&mut self, var: usize, coeff: T) {
        let c = self.objective[var].clone() + coeff;
        self.objective[var] = c;
    }

    pub fn mark_free(&mut self, var: usize) {
        self.nonneg[var] = false;
    }

    pub fn add_le(&mut self, coeffs: Vec<(usize, T)>, rhs: T) {
        self.rows.push(Row {
            coeffs,
            rel: Rel::Le,
            rhs,
        });
    }

    pub fn add_eq(&mut self, coeffs: Vec<(usize, T)>, rhs: T) {
        self.rows.push(Row {
            coeffs,
            rel: Rel::Eq,
            rhs,
        });
    }

    fn validate(&self) -> Result<(), LpError> {
        for (i, row) in self.rows.iter().enumerate() {
            for (j, _) in &row.coeffs {
                if *j >= self.num_vars {
                    return Err(LpError::BadSpec(format!(
                        "row {i} references variable {j} of {}",
                        self.num_vars
                    )));
                }
            }
        }
        Ok(())
    }

    /// Residual of every constraint at `x`: positive means violated.
    /// Lives outside the simplex so optimal bases can be cross-checked
    /// independently.
    pub fn residuals(&self, x: &[T]) -> Vec<T> {
        self.rows
            .iter()
            .map(|row| {
                let mut lhs = T::zero();
                for (j, c) in &row.coeffs {
                    lhs += c.clone() * x[*j].clone();
                }
                match row.rel {
                    Rel::Le => lhs - row.rhs.clone(),
                    Rel::Eq => (lhs - row.rhs.clone()).abs(),
                }
            })
            .collect()
    }

    /// Largest constraint violation at `x` (bound violations included).
    pub fn max_violation(&self, x: &[T]) -> T {
        let mut worst = T::zero();
        for r in self.residuals(x) {
            if r > worst {
                worst = r;
            }
        }
        for (j, flag) in self.nonneg.iter().enumerate() {
            if *flag && x[j] < T::zero() {
                let v = -x[j].clone();
                if v > worst {
                    worst = v;
                }
            }
        }
        worst
    }

    pub fn objective_value(&self, x: &[T]) -> T {
        let mut total = T::zero();
        for (c, v) in self.objective.iter().zip(x) {
            if !c.is_zero() {
                total += c.clone() * v.clone();
            }
        }
        total
    }
}

#[derive(Clone, Debug)]
pub struct LpSolution<T> {
    pub status: LpStatus,
    /// Primal values; empty unless `Optimal`.
    pub x: Vec<T>,
    /// Objective value; zero unless `Optimal`.
    pub objective: T,
    pub iterations: usize,
}

struct Tableau<T> {
    cells: Vec<T>,
    ncols: usize,
    nrows: usize,
    basis: Vec<usize>,
    /// First artificial column; columns past this never re-enter.
    art_start: usize,
    /// Phase-1 and phase-2 reduced-cost rows (objective value in the rhs slot).
    cost1: Vec<T>,
    cost2: Vec<T>,
    /// Unshifted right-hand side, carried through every pivot. The rhs
    /// column inside `cells` is the bound-shifted working copy that the
    /// ratio test sees; the solution is read from this one.
    orig: Vec<T>,
    /// Pivots update columns `0..active_end` plus the rhs. Once phase 1 is
    /// done the artificial block is dead weight and drops out of this
    /// range; nothing reads it afterwards.
    active_end: usize,
}

impl<T: Scalar> Tableau<T> {
    fn at(&self, i: usize, j: usize) -> &T {
        &self.cells[i * self.ncols + j]
    }

    fn rhs_col(&self) -> usize {
        self.ncols - 1
    }

    fn pivot(&mut self, prow: usize, pcol: usize) {
        let ncols = self.ncols;
        let rhs = ncols - 1;
        let end = self.active_end;
        let pivot = self.cells[prow * ncols + pcol].clone();
        let inv = T::one() / pivot;
        {
            let row = &mut self.cells[prow * ncols..(prow + 1) * ncols];
            for v in row[..end].iter_mut() {
                if !v.is_zero() {
                    *v = v.clone() * inv.clone();
                }
            }
            row[rhs] = row[rhs].clone() * inv.clone();
            row[pcol] = T::one();
        }
        self.orig[prow] = self.orig[prow].clone() * inv;
        let prow_cells: Vec<T> = self.cells[prow * ncols..(prow + 1) * ncols].to_vec();
        let prow_orig = self.orig[prow].clone();
        for i in 0..self.nrows {
            if i == prow {
                continue;
            }
            let factor = self.cells[i * ncols + pcol].clone();
            if factor.is_zero() {
                continue;
            }
            let row = &mut self.cells[i * ncols..(i + 1) * ncols];
            for (v, p) in row[..end].iter_mut().zip(&prow_cells[..end]) {
                if !p.is_zero() {
                    *v -= factor.clone() * p.clone();
                }
            }
            row[rhs] -= factor.clone() * prow_cells[rhs].clone();
            row[pcol] = T::zero();
            self.orig[i] -= factor * prow_orig.clone();
        }
        for cost in [&mut self.cost1, &mut self.cost2] {
            let factor = cost[pcol].clone();
            if factor.is_zero() {
                continue;
            }
            for (v, p) in cost[..end].iter_mut().zip(&prow_cells[..end]) {
                if !p.is_zero() {
                    *v -= factor.clone() * p.clone();
                }
            }
            cost[rhs] -= factor.clone() * prow_cells[rhs].clone();
            cost[pcol] = T::zero();
        }
        self.basis[prow] = pcol;
    }
}

/// Solves the program with the embedded two-phase simplex.
///
/// Deterministic for a fixed input. `Infeasible` and `Unbounded` are normal
/// outcomes reported in the status, not errors.
pub fn solve_lp<T: Scalar>(spec: &LpSpec<T>) -> Result<LpSolution<T>, LpError> {
    spec.validate()?;
    let tol = if T::EXACT {
        T::zero()
    } else {
        T::ratio(1, 1_000_000_000)
    };

    // Column layout: structural columns (free variables split into a
    // positive and negative part), then slacks, then artificials, then rhs.
    let mut col_of_var: Vec<(usize, Option<usize>)> = Vec::with_capacity(spec.num_vars);
    let mut nstruct = 0usize;
    for j in 0..spec.num_vars {
        if spec.nonneg[j] {
            col_of_var.push((nstruct, None));
            nstruct += 1;
        } else {
            col_of_var.push((nstruct, Some(nstruct + 1)));
            nstruct += 2;
        }
    }
    let nslack = spec.rows.iter().filter(|r| r.rel == Rel::Le).count();
    let m = spec.rows.len();
    let ncols_no_art = nstruct + nslack;

    // Dense rows with rhs made non-negative; track which rows start with a
    // basic slack and which need an artificial column.
    let mut dense: Vec<Vec<T>> = Vec::with_capacity(m);
    let mut rhs: Vec<T> = Vec::with_capacity(m);
    let mut slack_col_of_row: Vec<Option<usize>> = vec![None; m];
    let mut next_slack = nstruct;
    for row in &spec.rows {
        let mut coeffs = vec![T::zero(); ncols_no_art];
        for (j, c) in &row.coeffs {
            let (pos, neg) = &col_of_var[*j];
            coeffs[*pos] += c.clone();
            if let Some(neg) = neg {
                coeffs[*neg] -= c.clone();
            }
        }
        let idx = dense.len();
        if row.rel == Rel::Le {
            coeffs[next_slack] = T::one();
            slack_col_of_row[idx] = Some(next_slack);
            next_slack += 1;
        }
        dense.push(coeffs);
        rhs.push(row.rhs.clone());
    }

    // Bound shift against degenerate stalling (float mode only): pretend
    // every structural and slack variable has lower bound -shift_j instead
    // of 0. Substituting x = x' - shift moves the shift into the rhs
    // consistently, so redundant equality rows stay consistent and basic
    // values become generically nonzero, which keeps the ratio test making
    // real progress. The solution is later read off the final basis with
    // the unshifted rhs, which the shift never touches.
    let shift_of_col = |j: usize| -> T {
        if T::EXACT {
            T::zero()
        } else {
            let noise = (j as u64).wrapping_mul(0x9e3779b97f4a7c15) >> 40;
            T::ratio(1_000_000 + noise as i64, 1_000_000) * T::ratio(1, 1_000_000_000)
        }
    };
    let mut work = rhs.clone();
    if !T::EXACT {
        for i in 0..m {
            for (j, v) in dense[i].iter().enumerate() {
                if !v.is_zero() {
                    work[i] += v.clone() * shift_of_col(j);
                }
            }
        }
    }
    for i in 0..m {
        if work[i] < T::zero() {
            for v in dense[i].iter_mut() {
                if !v.is_zero() {
                    *v = -v.clone();
                }
            }
            work[i] = -work[i].clone();
            rhs[i] = -rhs[i].clone();
            // The slack coefficient flipped to -1; this row now needs an
            // artificial basis column like an equality row.
            slack_col_of_row[i] = None;
        }
    }

    let nart = slack_col_of_row.iter().filter(|s| s.is_none()).count();
    let ncols = ncols_no_art + nart + 1;
    let mut cells = vec![T::zero(); m * ncols];
    let mut basis = vec![0usize; m];
    let mut next_art = ncols_no_art;
    for i in 0..m {
        for (j, v) in dense[i].iter().enumerate() {
            if !v.is_zero() {
                cells[i * ncols + j] = v.clone();
            }
        }
        cells[i * ncols + ncols - 1] = work[i].clone();
        match slack_col_of_row[i] {
            Some(col) => basis[i] = col,
            None => {
                cells[i * ncols + next_art] = T::one();
                basis[i] = next_art;
                next_art += 1;
            }
        }
    }

    // Phase-2 reduced costs start as the raw objective (initial basic
    // columns all have zero objective coefficient).
    let mut cost2 = vec![T::zero(); ncols];
    for j in 0..spec.num_vars {
        let c = &spec.objective[j];
        if c.is_zero() {
            continue;
        }
        let (pos, neg) = &col_of_var[j];
        cost2[*pos] += c.clone();
        if let Some(neg) = neg {
            cost2[*neg] -= c.clone();
        }
    }
    // Phase-1 reduced costs: unit cost on artificials, reduced against the
    // rows where artificials are basic.
    let mut cost1 = vec![T::zero(); ncols];
    for i in 0..m {
        if basis[i] >= ncols_no_art {
            for j in 0..ncols {
                let v = cells[i * ncols + j].clone();
                if !v.is_zero() {
                    cost1[j] -= v;
                }
            }
        }
    }
    for j in ncols_no_art..ncols - 1 {
        cost1[j] += T::one();
    }

    let mut tab = Tableau {
        cells,
        ncols,
        nrows: m,
        basis,
        art_start: ncols_no_art,
        cost1,
        cost2,
        orig: rhs.clone(),
        active_end: ncols - 1,
    };

    let cap = 200 * (m + ncols) + 20_000;
    let mut iterations = 0usize;

    let phase1_needed = nart > 0;
    if phase1_needed {
        match run_phase::<T>(&mut tab, true, &tol, cap, &mut iterations)? {
            PhaseOutcome::Done => {}
            PhaseOutcome::Unbounded => {
                return Err(LpError::BadSpec(
                    "phase 1 reported unbounded, which cannot happen".into(),
                ))
            }
        }
        // cost1 holds -z1 in the rhs slot.
        let z1 = -tab.cost1[tab.rhs_col()].clone();
        if z1 > tol {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: Vec::new(),
                objective: T::zero(),
                iterations,
            });
        }
        // Pivot zero-level artificials out where possible; rows that are
        // all zero outside the artificial block are redundant and stay
        // inert (artificials are banned from pricing).
        for i in 0..tab.nrows {
            if tab.basis[i] >= tab.art_start {
                let target = (0..tab.art_start)
                    .find(|&j| tab.at(i, j).clone().abs() > tol);
                if let Some(j) = target {
                    tab.pivot(i, j);
                }
            }
        }
        tab.active_end = tab.art_start;
    }

    match run_phase::<T>(&mut tab, false, &tol, cap, &mut iterations)? {
        PhaseOutcome::Done => {}
        PhaseOutcome::Unbounded => {
            return Ok(LpSolution {
                status: LpStatus::Unbounded,
                x: Vec::new(),
                objective: T::zero(),
                iterations,
            });
        }
    }

    let mut x = vec![T::zero(); spec.num_vars];
    let mut value_of_col = vec![T::zero(); tab.art_start];
    for i in 0..tab.nrows {
        if tab.basis[i] < tab.art_start {
            let mut v = tab.orig[i].clone();
            // The final basis is optimal for the shifted program; applied
            // to the unshifted rhs its basic values may dip negative by
            // about the shift size. Clamp those, then gate on residuals.
            if !T::EXACT && v < T::zero() && v >= T::ratio(-1, 10_000_000) {
                v = T::zero();
            }
            value_of_col[tab.basis[i]] = v;
        }
    }
    for j in 0..spec.num_vars {
        let (pos, neg) = &col_of_var[j];
        let mut v = value_of_col[*pos].clone();
        if let Some(neg) = neg {
            v -= value_of_col[*neg].clone();
        }
        if !T::EXACT && v.abs() <= tol {
            v = T::zero();
        }
        x[j] = v;
    }
    if !T::EXACT {
        let worst = spec.max_violation(&x);
        if worst > T::lp_tol() {
            return Err(LpError::NumericalFailure {
                iterations,
            });
        }
    }
    let objective = spec.objective_value(&x);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        objective,
        iterations,
    })
}

enum PhaseOutcome {
    Done,
    Unbounded,
}

fn run_phase<T: Scalar>(
    tab: &mut Tableau<T>,
    phase1: bool,
    tol: &T,
    cap: usize,
    iterations: &mut usize,
) -> Result<PhaseOutcome, LpError> {
    let rhs_col = tab.rhs_col();
    let price_end = if phase1 { tab.ncols - 1 } else { tab.art_start };
    let mut bland = false;
    let mut stall = 0usize;
    // The bound shift keeps the working rhs away from degenerate zeros, so
    // stalls are rare; Bland's rule is the termination backstop for the
    // exact mode and for pathological float inputs.
    let stall_limit = 4 * tab.nrows + 64;

    loop {
        if *iterations >= cap {
            return Err(LpError::NumericalFailure { iterations: cap });
        }
        let cost: &Vec<T> = if phase1 { &tab.cost1 } else { &tab.cost2 };

        let entering = if bland {
            (0..price_end).find(|&j| cost[j] < -tol.clone())
        } else {
            let mut best: Option<(usize, T)> = None;
            for (j, c) in cost.iter().enumerate().take(price_end) {
                if *c < -tol.clone() {
                    match &best {
                        Some((_, b)) if *c >= *b => {}
                        _ => best = Some((j, c.clone())),
                    }
                }
            }
            best.map(|(j, _)| j)
        };
        let Some(q) = entering else {
            return Ok(PhaseOutcome::Done);
        };

        let mut leave: Option<(usize, T)> = None;
        for i in 0..tab.nrows {
            let a = tab.at(i, q);
            if *a > *tol {
                let mut b = tab.at(i, rhs_col).clone();
                if !T::EXACT && b < T::zero() {
                    b = T::zero();
                }
                let ratio = b / a.clone();
                let better = match &leave {
                    None => true,
                    Some((p, best)) => {
                        ratio < *best || (ratio == *best && tab.basis[i] < tab.basis[*p])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((p, ratio)) = leave else {
            return Ok(PhaseOutcome::Unbounded);
        };

        if ratio.is_zero() {
            stall += 1;
            if stall >= stall_limit {
                bland = true;
            }
        } else {
            stall = 0;
        }

        tab.pivot(p, q);
        *iterations += 1;
        if std::env::var_os("SCG_LP_TRACE").is_some() && *iterations % 5000 == 0 {
            eprintln!(
                "lp trace: phase{} iter {} obj {:?}",
                if phase1 { 1 } else { 2 },
                iterations,
                (if phase1 { &tab.cost1 } else { &tab.cost2 })[rhs_col].to_f64()
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rational;
    use num_traits::{One, Zero};

    #[test]
    fn lower_bound_is_hit() {
        // min x s.t. x >= 3
        let mut spec = LpSpec::<Rational>::new(1);
        spec.set_objective(0, Rational::one());
        spec.add_le(vec![(0, -Rational::one())], Rational::from_int(-3));
        let sol = solve_lp(&spec).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_eq!(sol.x[0], Rational::from_int(3));
        assert_eq!(sol.objective, Rational::from_int(3));
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        // min 0 s.t. x <= -1, x >= 0
        let mut spec = LpSpec::<Rational>::new(1);
        spec.add_le(vec![(0, Rational::one())], Rational::from_int(-1));
        let sol = solve_lp(&spec).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn open_direction_is_unbounded() {
        // min -x s.t. x >= 0
        let mut spec = LpSpec::<Rational>::new(1);
        spec.set_objective(0, -Rational::one());
        let sol = solve_lp(&spec).unwrap();
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn small_dense_program_exact() {
        // min -3x - 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18
        let mut spec = LpSpec::<Rational>::new(2);
        spec.set_objective(0, Rational::from_int(-3));
        spec.set_objective(1, Rational::from_int(-5));
        spec.add_le(vec![(0, Rational::one())], Rational::from_int(4));
        spec.add_le(vec![(1, Rational::from_int(2))], Rational::from_int(12));
        spec.add_le(
            vec![(0, Rational::from_int(3)), (1, Rational::from_int(2))],
            Rational::from_int(18),
        );
        let sol = solve_lp(&spec).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_eq!(sol.x, vec![Rational::from_int(2), Rational::from_int(6)]);
        assert_eq!(sol.objective, Rational::from_int(-36));
        assert!(spec.max_violation(&sol.x).is_zero());
    }

    #[test]
    fn equality_rows_and_free_variables() {
        // min |style| split: y free, min y s.t. y + x == 2, x <= 5, x >= 0.
        let mut spec = LpSpec::<f64>::new(2);
        spec.set_objective(1, 1.0);
        spec.mark_free(1);
        spec.add_eq(vec![(0, 1.0), (1, 1.0)], 2.0);
        spec.add_le(vec![(0, 1.0)], 5.0);
        let sol = solve_lp(&spec).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - (-3.0)).abs() < 1e-9);
        assert!((sol.x[0] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        // The same simplex face stated twice plus its sum.
        let mut spec = LpSpec::<Rational>::new(2);
        spec.set_objective(0, Rational::from_int(2));
        spec.set_objective(1, Rational::from_int(1));
        spec.add_eq(
            vec![(0, Rational::one()), (1, Rational::one())],
            Rational::one(),
        );
        spec.add_eq(
            vec![(0, Rational::one()), (1, Rational::one())],
            Rational::one(),
        );
        spec.add_eq(
            vec![(0, Rational::from_int(2)), (1, Rational::from_int(2))],
            Rational::from_int(2),
        );
        let sol = solve_lp(&spec).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_eq!(sol.objective, Rational::one());
        assert_eq!(sol.x[1], Rational::one());
    }

    #[test]
    fn permuted_rows_agree() {
        let mut rows = vec![
            (vec![(0, 1.0), (1, 2.0)], 7.0),
            (vec![(0, 3.0), (1, 1.0)], 8.0),
            (vec![(0, 1.0)], 3.0),
            (vec![(1, 1.0)], 3.5),
        ];
        let build = |rows: &[(Vec<(usize, f64)>, f64)]| {
            let mut spec = LpSpec::<f64>::new(2);
            spec.set_objective(0, -1.0);
            spec.set_objective(1, -1.0);
            for (coeffs, rhs) in rows {
                spec.add_le(coeffs.clone(), *rhs);
            }
            spec
        };
        let a = solve_lp(&build(&rows)).unwrap();
        rows.reverse();
        let b = solve_lp(&build(&rows)).unwrap();
        assert!((a.objective - b.objective).abs() < 1e-9);
    }

    #[test]
    fn degenerate_program_terminates() {
        // A classic cycling-prone program (Beale); the stall switch to
        // Bland's rule must terminate it.
        let mut spec = LpSpec::<Rational>::new(4);
        spec.set_objective(0, Rational::ratio(-3, 4));
        spec.set_objective(1, Rational::from_int(150));
        spec.set_objective(2, Rational::ratio(-1, 50));
        spec.set_objective(3, Rational::from_int(6));
        spec.add_le(
            vec![
                (0, Rational::ratio(1, 4)),
                (1, Rational::from_int(-60)),
                (2, Rational::ratio(-1, 25)),
                (3, Rational::from_int(9)),
            ],
            Rational::zero(),
        );
        spec.add_le(
            vec![
                (0, Rational::ratio(1, 2)),
                (1, Rational::from_int(-90)),
                (2, Rational::ratio(-1, 50)),
                (3, Rational::from_int(3)),
            ],
            Rational::zero(),
        );
        spec.add_le(vec![(2, Rational::one())], Rational::one());
        let sol = solve_lp(&spec).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_eq!(sol.objective, Rational::ratio(-1, 20));
    }

    #[test]
    fn residual_check_flags_violations() {
        let mut spec = LpSpec::<f64>::new(1);
        spec.add_le(vec![(0, 1.0)], 1.0);
        spec.add_eq(vec![(0, 2.0)], 1.0);
        let res = spec.residuals(&[1.0]);
        assert!(res[0].abs() < 1e-12);
        assert!((res[1] - 1.0).abs() < 1e-12);
        assert!(spec.max_violation(&[1.0]) > 0.5);
    }
}
