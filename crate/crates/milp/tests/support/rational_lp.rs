//! Exact two-phase primal simplex over big rationals with Bland's rule.
//!
//! Deliberately shares nothing with the crate's dual simplex: it is the
//! higher-precision reference the floating-point solver is checked against.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub type Q = BigRational;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

pub struct RationalLp {
    pub cost: Vec<Q>,
    pub rows: Vec<(Vec<Q>, RowSense, Q)>,
    pub lb: Vec<Q>,
    pub ub: Vec<Q>,
}

pub fn q(v: i64) -> Q {
    BigRational::from_integer(BigInt::from(v))
}

pub fn q_frac(num: i64, den: i64) -> Q {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Exact rational value of a finite float.
pub fn q_f64(v: f64) -> Q {
    BigRational::from_float(v).expect("finite")
}

pub fn to_f64(v: &Q) -> f64 {
    let n: f64 = v.numer().to_string().parse().unwrap();
    let d: f64 = v.denom().to_string().parse().unwrap();
    n / d
}

/// Minimum objective, or `None` when infeasible. Bounds must be finite.
pub fn solve(lp: &RationalLp) -> Option<Q> {
    let n = lp.cost.len();
    // x = lb + x', 0 <= x' <= ub - lb
    let mut rows: Vec<(Vec<Q>, RowSense, Q)> = Vec::new();
    let mut offset = Q::zero();
    for j in 0..n {
        offset += &lp.cost[j] * &lp.lb[j];
    }
    for (a, s, b) in &lp.rows {
        let mut rhs = b.clone();
        for j in 0..n {
            rhs -= &a[j] * &lp.lb[j];
        }
        rows.push((a.clone(), *s, rhs));
    }
    for j in 0..n {
        let mut a = vec![Q::zero(); n];
        a[j] = Q::one();
        rows.push((a, RowSense::Le, &lp.ub[j] - &lp.lb[j]));
    }
    // Make every rhs nonnegative.
    for (a, s, b) in rows.iter_mut() {
        if b.is_negative() {
            for v in a.iter_mut() {
                *v = -v.clone();
            }
            *b = -b.clone();
            *s = match *s {
                RowSense::Le => RowSense::Ge,
                RowSense::Ge => RowSense::Le,
                RowSense::Eq => RowSense::Eq,
            };
        }
    }
    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 != RowSense::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != RowSense::Le).count();
    let total = n + n_slack + n_art;
    let mut t = vec![vec![Q::zero(); total + 1]; m];
    let mut basis = vec![0usize; m];
    let mut si = n;
    let mut ai = n + n_slack;
    let art_start = n + n_slack;
    for (i, (a, s, b)) in rows.iter().enumerate() {
        t[i][..n].clone_from_slice(a);
        t[i][total] = b.clone();
        match s {
            RowSense::Le => {
                t[i][si] = Q::one();
                basis[i] = si;
                si += 1;
            }
            RowSense::Ge => {
                t[i][si] = -Q::one();
                si += 1;
                t[i][ai] = Q::one();
                basis[i] = ai;
                ai += 1;
            }
            RowSense::Eq => {
                t[i][ai] = Q::one();
                basis[i] = ai;
                ai += 1;
            }
        }
    }
    // Phase 1: minimize sum of artificials.
    let mut c1 = vec![Q::zero(); total];
    for c in c1.iter_mut().skip(art_start) {
        *c = Q::one();
    }
    run(&mut t, &mut basis, &c1, total);
    let infeas = objective(&t, &basis, &c1, total);
    if infeas.is_positive() {
        return None;
    }
    // Drive zero-valued artificials out of the basis where possible.
    for i in 0..m {
        if basis[i] >= art_start {
            if let Some(j) = (0..art_start).find(|&j| !t[i][j].is_zero()) {
                pivot(&mut t, &mut basis, i, j);
            }
        }
    }
    let mut c2 = vec![Q::zero(); total];
    c2[..n].clone_from_slice(&lp.cost);
    // Forbid artificials from re-entering.
    for row in t.iter_mut() {
        for v in row.iter_mut().take(total).skip(art_start) {
            *v = Q::zero();
        }
    }
    for i in 0..m {
        if basis[i] >= art_start {
            // Redundant row; keep it basic at zero.
            t[i][basis[i]] = Q::one();
        }
    }
    run(&mut t, &mut basis, &c2, art_start);
    Some(objective(&t, &basis, &c2, total) + offset)
}

fn objective(t: &[Vec<Q>], basis: &[usize], c: &[Q], total: usize) -> Q {
    basis
        .iter()
        .enumerate()
        .map(|(i, &b)| &c[b] * &t[i][total])
        .fold(Q::zero(), |a, b| a + b)
}

fn run(t: &mut [Vec<Q>], basis: &mut [usize], c: &[Q], enter_limit: usize) {
    let m = t.len();
    let total = t[0].len() - 1;
    loop {
        // Bland: lowest-index column with negative reduced cost.
        let mut enter = None;
        for j in 0..enter_limit {
            if basis.contains(&j) {
                continue;
            }
            let mut d = c[j].clone();
            for i in 0..m {
                d -= &c[basis[i]] * &t[i][j];
            }
            if d.is_negative() {
                enter = Some(j);
                break;
            }
        }
        let Some(j) = enter else { return };
        let mut leave: Option<(usize, Q)> = None;
        for i in 0..m {
            if t[i][j].is_positive() {
                let ratio = &t[i][total] / &t[i][j];
                let better = match &leave {
                    None => true,
                    Some((li, lr)) => ratio < *lr || (ratio == *lr && basis[i] < basis[*li]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let (r, _) = leave.expect("bounded by construction");
        pivot(t, basis, r, j);
    }
}

fn pivot(t: &mut [Vec<Q>], basis: &mut [usize], r: usize, j: usize) {
    let p = t[r][j].clone();
    for v in t[r].iter_mut() {
        *v = &*v / &p;
    }
    let pr = t[r].clone();
    for (i, row) in t.iter_mut().enumerate() {
        if i == r || row[j].is_zero() {
            continue;
        }
        let f = row[j].clone();
        for (v, w) in row.iter_mut().zip(&pr) {
            if !w.is_zero() {
                *v -= &f * w;
            }
        }
    }
    basis[r] = j;
}
