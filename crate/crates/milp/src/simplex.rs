//! Dense bounded-variable dual simplex.
//!
//! Every row `a·x (<=|>=|=) b` becomes `a·x + s = b` with a slack `s`
//! bounded by `[0, inf)`, `(-inf, 0]` or `[0, 0]`. Structural variables
//! always have finite bounds, so the all-slack basis with each structural
//! parked at the bound favoured by its cost is dual feasible; the dual
//! simplex then only has to restore primal feasibility. Branching only
//! changes bounds and cuts only append rows with basic slacks, both of which
//! keep a dual feasible basis dual feasible, so any node re-solves from the
//! basis left by the previous one without refactoring.

use crate::Scalar;

const REFACTOR_EVERY: usize = 64;
const DEGENERATE_BEFORE_BLAND: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Pos {
    Basic(usize),
    Lower,
    Upper,
}

/// Snapshot of a simplex basis: the basic column of every row plus the side
/// of its box each nonbasic column sits on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Basis {
    pub(crate) basic: Vec<usize>,
    pub(crate) at_upper: Vec<bool>,
}

impl Basis {
    pub fn num_rows(&self) -> usize {
        self.basic.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Outcome {
    Optimal,
    Infeasible,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum SimplexError {
    Unstable(f64),
    IterationLimit,
}

#[derive(Clone, Debug)]
pub(crate) struct Simplex<T> {
    n_struct: usize,
    rows: Vec<Vec<(usize, T)>>,
    rhs: Vec<T>,
    cost: Vec<T>,
    lb: Vec<T>,
    ub: Vec<T>,
    tab: Vec<Vec<T>>,
    basis: Vec<usize>,
    pos: Vec<Pos>,
    x: Vec<T>,
    d: Vec<T>,
    since_refactor: usize,
    primal_dirty: bool,
    pub(crate) iterations: usize,
    feas_tol: T,
    pivot_tol: T,
    dual_tol: T,
}

impl<T: Scalar> Simplex<T> {
    pub(crate) fn new(cost: Vec<T>, lb: Vec<T>, ub: Vec<T>, feas_tol: T) -> Self {
        let n = cost.len();
        let mut s = Self {
            n_struct: n,
            rows: Vec::new(),
            rhs: Vec::new(),
            cost,
            lb,
            ub,
            tab: Vec::new(),
            basis: Vec::new(),
            pos: vec![Pos::Lower; n],
            x: vec![T::zero(); n],
            d: vec![T::zero(); n],
            since_refactor: 0,
            primal_dirty: true,
            iterations: 0,
            feas_tol,
            pivot_tol: T::pivot_tol(),
            dual_tol: T::feasibility_tol(),
        };
        s.cold_start();
        s
    }

    fn ncols(&self) -> usize {
        self.n_struct + self.rows.len()
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.lb[j] == self.ub[j]
    }

    /// Appends `coeffs·x + s = rhs`; the new slack enters the basis.
    pub(crate) fn add_row(&mut self, coeffs: &[(usize, T)], sense: crate::Sense, rhs: T) {
        let inf = T::infinity();
        let (slb, sub) = match sense {
            crate::Sense::Le => (T::zero(), inf),
            crate::Sense::Ge => (-inf, T::zero()),
            crate::Sense::Eq => (T::zero(), T::zero()),
        };
        let mut merged: Vec<(usize, T)> = Vec::with_capacity(coeffs.len());
        let mut sorted = coeffs.to_vec();
        sorted.sort_by_key(|&(j, _)| j);
        for (j, a) in sorted {
            match merged.last_mut() {
                Some(last) if last.0 == j => last.1 += a,
                _ => merged.push((j, a)),
            }
        }
        merged.retain(|&(_, a)| a != T::zero());

        let k = self.rows.len();
        let col = self.n_struct + k;
        for row in &mut self.tab {
            row.push(T::zero());
        }
        // Express the new row in terms of the current nonbasic columns.
        let mut new_row = vec![T::zero(); col + 1];
        for &(j, a) in &merged {
            new_row[j] += a;
        }
        for (i, &bj) in self.basis.iter().enumerate() {
            let coef = if bj < self.n_struct {
                new_row[bj]
            } else {
                T::zero()
            };
            if coef != T::zero() {
                let ti = &self.tab[i];
                for (nr, &t) in new_row.iter_mut().zip(ti.iter()) {
                    *nr -= coef * t;
                }
                new_row[bj] = T::zero();
            }
        }
        new_row[col] = T::one();
        let activity: T = merged.iter().map(|&(j, a)| a * self.x[j]).sum();

        self.rows.push(merged);
        self.rhs.push(rhs);
        self.cost.push(T::zero());
        self.lb.push(slb);
        self.ub.push(sub);
        self.tab.push(new_row);
        self.basis.push(col);
        self.pos.push(Pos::Basic(k));
        self.x.push(rhs - activity);
        self.d.push(T::zero());
    }

    pub(crate) fn set_bounds(&mut self, j: usize, lb: T, ub: T) {
        if self.lb[j] == lb && self.ub[j] == ub {
            return;
        }
        self.lb[j] = lb;
        self.ub[j] = ub;
        match self.pos[j] {
            Pos::Basic(_) => {}
            Pos::Lower => {
                self.x[j] = lb;
                self.primal_dirty = true;
            }
            Pos::Upper => {
                self.x[j] = ub;
                self.primal_dirty = true;
            }
        }
    }

    pub(crate) fn basis(&self) -> Basis {
        Basis {
            basic: self.basis.clone(),
            at_upper: self.pos.iter().map(|p| *p == Pos::Upper).collect(),
        }
    }

    /// Adopts `hint` (extended with basic slacks for rows added since it was
    /// taken). Returns false and keeps a cold basis if it cannot be used.
    pub(crate) fn load_basis(&mut self, hint: &Basis) -> bool {
        let m = self.rows.len();
        if hint.basic.len() > m || hint.at_upper.len() > self.ncols() {
            return false;
        }
        let mut basic = hint.basic.clone();
        basic.extend((hint.basic.len()..m).map(|k| self.n_struct + k));
        if basic.iter().any(|&j| j >= self.ncols()) {
            return false;
        }
        let same = basic == self.basis;
        let mut pos = vec![Pos::Lower; self.ncols()];
        for (j, p) in pos.iter_mut().enumerate() {
            let upper = hint.at_upper.get(j).copied().unwrap_or(false);
            if upper && self.ub[j].is_finite() {
                *p = Pos::Upper;
            } else if !self.lb[j].is_finite() {
                *p = Pos::Upper;
            }
        }
        for (i, &j) in basic.iter().enumerate() {
            if matches!(pos[j], Pos::Basic(_)) {
                return false;
            }
            pos[j] = Pos::Basic(i);
        }
        let old = (self.basis.clone(), self.pos.clone());
        self.basis = basic;
        self.pos = pos;
        if !same && !self.refactor() {
            self.basis = old.0;
            self.pos = old.1;
            self.cold_start();
            return false;
        }
        self.place_nonbasics();
        self.primal_dirty = true;
        if !self.restore_dual_feasibility() {
            self.cold_start();
            return false;
        }
        true
    }

    fn place_nonbasics(&mut self) {
        for j in 0..self.ncols() {
            match self.pos[j] {
                Pos::Lower => self.x[j] = self.lb[j],
                Pos::Upper => self.x[j] = self.ub[j],
                Pos::Basic(_) => {}
            }
        }
    }

    pub(crate) fn cold_start(&mut self) {
        let m = self.rows.len();
        let nc = self.ncols();
        self.tab = (0..m)
            .map(|i| {
                let mut row = vec![T::zero(); nc];
                for &(j, a) in &self.rows[i] {
                    row[j] = a;
                }
                row[self.n_struct + i] = T::one();
                row
            })
            .collect();
        self.basis = (0..m).map(|i| self.n_struct + i).collect();
        self.pos = vec![Pos::Lower; nc];
        for i in 0..m {
            self.pos[self.n_struct + i] = Pos::Basic(i);
        }
        self.d = self.cost.clone();
        for i in 0..m {
            self.d[self.n_struct + i] = T::zero();
        }
        for j in 0..self.n_struct {
            if self.d[j] < T::zero() {
                self.pos[j] = Pos::Upper;
            }
        }
        self.place_nonbasics();
        self.since_refactor = 0;
        self.primal_dirty = true;
    }

    /// Rebuilds the tableau `B^-1 [A I]` from the current basis.
    fn refactor(&mut self) -> bool {
        let m = self.rows.len();
        let nc = self.ncols();
        let ns = self.n_struct;
        // Dense B, column i = column of basis[i].
        let mut b = vec![vec![T::zero(); m]; m];
        for (i, &j) in self.basis.iter().enumerate() {
            if j >= ns {
                b[j - ns][i] = T::one();
            }
        }
        for (k, row) in self.rows.iter().enumerate() {
            for &(j, a) in row {
                if let Pos::Basic(i) = self.pos[j] {
                    b[k][i] = a;
                }
            }
        }
        // Gauss-Jordan on [B | I]; the result rows are ordered by B's columns.
        let mut inv: Vec<Vec<T>> = (0..m)
            .map(|i| {
                let mut r = vec![T::zero(); m];
                r[i] = T::one();
                r
            })
            .collect();
        for c in 0..m {
            let mut p = c;
            let mut best = b[c][c].abs();
            for r in c + 1..m {
                let v = b[r][c].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best < self.pivot_tol {
                return false;
            }
            b.swap(c, p);
            inv.swap(c, p);
            let piv = b[c][c];
            for v in b[c].iter_mut() {
                *v /= piv;
            }
            for v in inv[c].iter_mut() {
                *v /= piv;
            }
            for r in 0..m {
                if r == c {
                    continue;
                }
                let f = b[r][c];
                if f == T::zero() {
                    continue;
                }
                let (src_b, dst_b) = if r < c {
                    let (lo, hi) = b.split_at_mut(c);
                    (&hi[0], &mut lo[r])
                } else {
                    let (lo, hi) = b.split_at_mut(r);
                    (&lo[c], &mut hi[0])
                };
                for (d, &s) in dst_b.iter_mut().zip(src_b.iter()) {
                    *d -= f * s;
                }
                let (src_i, dst_i) = if r < c {
                    let (lo, hi) = inv.split_at_mut(c);
                    (&hi[0], &mut lo[r])
                } else {
                    let (lo, hi) = inv.split_at_mut(r);
                    (&lo[c], &mut hi[0])
                };
                for (d, &s) in dst_i.iter_mut().zip(src_i.iter()) {
                    *d -= f * s;
                }
            }
        }
        // tab = inv * [A I]
        let mut tab = vec![vec![T::zero(); nc]; m];
        for (i, trow) in tab.iter_mut().enumerate() {
            let irow = &inv[i];
            for (k, row) in self.rows.iter().enumerate() {
                let f = irow[k];
                if f == T::zero() {
                    continue;
                }
                for &(j, a) in row {
                    trow[j] += f * a;
                }
                trow[ns + k] = f;
            }
        }
        for (i, &j) in self.basis.iter().enumerate() {
            for (r, trow) in tab.iter_mut().enumerate() {
                trow[j] = if r == i { T::one() } else { T::zero() };
            }
        }
        self.tab = tab;
        self.recompute_duals();
        self.since_refactor = 0;
        self.primal_dirty = true;
        true
    }

    fn recompute_duals(&mut self) {
        let nc = self.ncols();
        let mut d = self.cost.clone();
        for (i, &bj) in self.basis.iter().enumerate() {
            let cb = self.cost[bj];
            if cb == T::zero() {
                continue;
            }
            for (dj, &t) in d.iter_mut().zip(self.tab[i].iter()) {
                *dj -= cb * t;
            }
        }
        for &bj in &self.basis {
            d[bj] = T::zero();
        }
        debug_assert_eq!(d.len(), nc);
        self.d = d;
    }

    fn recompute_primal(&mut self) {
        let m = self.rows.len();
        let ns = self.n_struct;
        let mut r = self.rhs.clone();
        for (k, row) in self.rows.iter().enumerate() {
            for &(j, a) in row {
                if !matches!(self.pos[j], Pos::Basic(_)) {
                    r[k] -= a * self.x[j];
                }
            }
            let s = ns + k;
            if !matches!(self.pos[s], Pos::Basic(_)) {
                r[k] -= self.x[s];
            }
        }
        for i in 0..m {
            let row = &self.tab[i];
            let v: T = (0..m).map(|k| row[ns + k] * r[k]).sum();
            self.x[self.basis[i]] = v;
        }
        self.primal_dirty = false;
    }

    /// Flips nonbasic columns whose reduced cost has the wrong sign.
    fn restore_dual_feasibility(&mut self) -> bool {
        for j in 0..self.ncols() {
            if self.is_fixed(j) {
                continue;
            }
            match self.pos[j] {
                Pos::Lower if self.d[j] < -self.dual_tol => {
                    if !self.ub[j].is_finite() {
                        return false;
                    }
                    self.pos[j] = Pos::Upper;
                    self.x[j] = self.ub[j];
                    self.primal_dirty = true;
                }
                Pos::Upper if self.d[j] > self.dual_tol => {
                    if !self.lb[j].is_finite() {
                        return false;
                    }
                    self.pos[j] = Pos::Lower;
                    self.x[j] = self.lb[j];
                    self.primal_dirty = true;
                }
                _ => {}
            }
        }
        true
    }

    fn infeasibility(&self, j: usize) -> T {
        let v = self.x[j];
        (self.lb[j] - v).max(v - self.ub[j]).max(T::zero())
    }

    pub(crate) fn solve(&mut self, max_iter: usize) -> Result<Outcome, SimplexError> {
        if !self.restore_dual_feasibility() {
            self.cold_start();
        }
        if self.primal_dirty {
            self.recompute_primal();
        }
        let mut degenerate = 0usize;
        let mut verified = false;
        let start = self.iterations;
        loop {
            if self.iterations - start > max_iter {
                return Err(SimplexError::IterationLimit);
            }
            // Refactoring is cubic in the row count, pivots are linear in it.
            let every = REFACTOR_EVERY.max(self.rows.len() / 2);
            if self.since_refactor >= every {
                if !self.refactor() {
                    self.cold_start();
                }
                if !self.restore_dual_feasibility() {
                    self.cold_start();
                }
                self.recompute_primal();
            }
            let bland = degenerate > DEGENERATE_BEFORE_BLAND;
            let mut leave: Option<(usize, T)> = None;
            for (i, &bj) in self.basis.iter().enumerate() {
                let inf = self.infeasibility(bj);
                if inf <= self.feas_tol {
                    continue;
                }
                let better = match leave {
                    None => true,
                    Some((li, linf)) => {
                        if bland {
                            bj < self.basis[li]
                        } else {
                            inf > linf
                        }
                    }
                };
                if better {
                    leave = Some((i, inf));
                }
            }
            let Some((r, _)) = leave else {
                if !verified && self.since_refactor > 0 {
                    // Guard against drift in the incrementally updated values.
                    self.recompute_primal();
                    verified = true;
                    continue;
                }
                let res = self.max_residual();
                if res > T::residual_tol() {
                    if self.since_refactor > 0 && self.refactor() {
                        self.recompute_primal();
                        verified = true;
                        continue;
                    }
                    return Err(SimplexError::Unstable(res.to_f64().unwrap_or(f64::NAN)));
                }
                return Ok(Outcome::Optimal);
            };
            verified = false;
            let p = self.basis[r];
            let to_lower = self.x[p] < self.lb[p];
            let row = &self.tab[r];
            let mut enter: Option<(usize, T, T)> = None; // (col, ratio, |alpha|)
            for j in 0..self.ncols() {
                let pj = self.pos[j];
                if matches!(pj, Pos::Basic(_)) || self.is_fixed(j) {
                    continue;
                }
                let alpha = row[j];
                if alpha.abs() < self.pivot_tol {
                    continue;
                }
                let eligible = match (pj, to_lower) {
                    (Pos::Lower, true) => alpha < T::zero(),
                    (Pos::Upper, true) => alpha > T::zero(),
                    (Pos::Lower, false) => alpha > T::zero(),
                    (Pos::Upper, false) => alpha < T::zero(),
                    _ => false,
                };
                if !eligible {
                    continue;
                }
                let dj = match pj {
                    Pos::Lower => self.d[j].max(T::zero()),
                    _ => (-self.d[j]).max(T::zero()),
                };
                let ratio = dj / alpha.abs();
                let take = match enter {
                    None => true,
                    Some((_, best, best_alpha)) => {
                        let tie = T::lit(1e-12) * (T::one() + best.abs());
                        if ratio < best - tie {
                            true
                        } else if ratio <= best + tie {
                            !bland && alpha.abs() > best_alpha
                        } else {
                            false
                        }
                    }
                };
                if take {
                    enter = Some((j, ratio, alpha.abs()));
                }
            }
            let Some((q, ratio, _)) = enter else {
                // Dual ray: no column can repair row r.
                return Ok(Outcome::Infeasible);
            };
            if ratio <= T::lit(1e-12) {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            let bound = if to_lower { self.lb[p] } else { self.ub[p] };
            self.pivot(r, q, bound, to_lower);
        }
    }

    fn pivot(&mut self, r: usize, q: usize, bound: T, to_lower: bool) {
        let p = self.basis[r];
        let alpha_rq = self.tab[r][q];
        // Primal step.
        let step = (self.x[p] - bound) / alpha_rq;
        for (i, &bj) in self.basis.iter().enumerate() {
            if i != r {
                let a = self.tab[i][q];
                if a != T::zero() {
                    self.x[bj] -= a * step;
                }
            }
        }
        self.x[q] += step;
        self.x[p] = bound;
        // Dual step.
        let theta = self.d[q] / alpha_rq;
        if theta != T::zero() {
            let row = &self.tab[r];
            for (dj, &a) in self.d.iter_mut().zip(row.iter()) {
                *dj -= theta * a;
            }
        }
        self.d[q] = T::zero();
        self.d[p] = -theta;
        // Tableau.
        let inv = T::one() / alpha_rq;
        for v in self.tab[r].iter_mut() {
            *v *= inv;
        }
        let pivot_row = std::mem::take(&mut self.tab[r]);
        for (i, row) in self.tab.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[q];
            if f == T::zero() {
                continue;
            }
            for (v, &pr) in row.iter_mut().zip(pivot_row.iter()) {
                *v -= f * pr;
            }
            row[q] = T::zero();
        }
        self.tab[r] = pivot_row;
        self.tab[r][q] = T::one();

        self.basis[r] = q;
        self.pos[q] = Pos::Basic(r);
        self.pos[p] = if to_lower { Pos::Lower } else { Pos::Upper };
        self.since_refactor += 1;
        self.iterations += 1;
    }

    fn max_residual(&self) -> T {
        let mut worst = T::zero();
        for (k, row) in self.rows.iter().enumerate() {
            let act: T = row.iter().map(|&(j, a)| a * self.x[j]).sum();
            let res = (act + self.x[self.n_struct + k] - self.rhs[k]).abs();
            worst = worst.max(res);
        }
        for j in 0..self.ncols() {
            worst = worst.max(self.infeasibility(j));
        }
        worst
    }

    pub(crate) fn structural_values(&self) -> &[T] {
        &self.x[..self.n_struct]
    }

    pub(crate) fn objective(&self) -> T {
        self.cost[..self.n_struct]
            .iter()
            .zip(&self.x)
            .map(|(&c, &x)| c * x)
            .sum()
    }

    /// Row duals `y = c_B B^-1`.
    pub(crate) fn duals(&self) -> Vec<T> {
        (0..self.rows.len())
            .map(|k| -self.d[self.n_struct + k])
            .collect()
    }

    pub(crate) fn reduced_costs(&self) -> &[T] {
        &self.d[..self.n_struct]
    }
}
