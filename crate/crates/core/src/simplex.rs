//! Dense two-phase simplex with Bland's rule, for the small programs of the convexity criterion.
//!
//! Problems are in standard form: maximise `c.x` subject to `A x = b`, `x >= 0`.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal point (the phase-one point when infeasible).
    pub x: Vec<f64>,
    pub value: f64,
    /// Sum of artificial variables left after phase one.
    pub infeasibility: f64,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn pivot(&mut self, r: usize, j: usize) {
        let p = self.rows[r][j];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        self.rhs[r] /= p;
        let (pivot_row, pivot_rhs) = (self.rows[r].clone(), self.rhs[r]);
        for (q, row) in self.rows.iter_mut().enumerate() {
            if q == r {
                continue;
            }
            let f = row[j];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[j] = 0.0;
                self.rhs[q] -= f * pivot_rhs;
            }
        }
        self.basis[r] = j;
    }

    /// Maximises `cost . x` over columns `0..allowed`; returns false when unbounded.
    fn optimise(&mut self, cost: &[f64], allowed: usize, pivots: &mut usize) -> Result<bool> {
        loop {
            let entering = (0..allowed).find(|&j| {
                if self.basis.contains(&j) {
                    return false;
                }
                let reduced = cost[j] - self.rows.iter().zip(&self.basis).map(|(row, &b)| cost[b] * row[j]).sum::<f64>();
                reduced > COST_TOL
            });
            let Some(j) = entering else { return Ok(true) };
            let mut leave: Option<(usize, f64)> = None;
            for (r, row) in self.rows.iter().enumerate() {
                if row[j] > PIVOT_TOL {
                    let ratio = self.rhs[r].max(0.0) / row[j];
                    let better = match leave {
                        None => true,
                        Some((lr, best)) => {
                            ratio < best - 1e-14 || (ratio <= best + 1e-14 && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((r, _)) = leave else { return Ok(false) };
            self.pivot(r, j);
            *pivots += 1;
            if *pivots > MAX_PIVOTS {
                return Err(Error::LPNumericalFailure { reason: "pivot limit reached".into() });
            }
        }
    }
}

/// Maximise `c.x` subject to `a x = b`, `x >= 0`.
pub fn maximize(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Result<LpSolution> {
    let m = a.len();
    let n = c.len();
    if b.len() != m || a.iter().any(|row| row.len() != n) {
        return Err(Error::LPNumericalFailure { reason: "inconsistent problem shape".into() });
    }
    if a.iter().flatten().chain(b).chain(c).any(|v| !v.is_finite()) {
        return Err(Error::LPNumericalFailure { reason: "non-finite coefficient".into() });
    }
    let mut t = Tableau { rows: Vec::with_capacity(m), rhs: Vec::with_capacity(m), basis: (n..n + m).collect() };
    for (r, row) in a.iter().enumerate() {
        let sign = if b[r] < 0.0 { -1.0 } else { 1.0 };
        let mut full: Vec<f64> = row.iter().map(|v| sign * v).collect();
        full.extend((0..m).map(|q| if q == r { 1.0 } else { 0.0 }));
        t.rows.push(full);
        t.rhs.push(sign * b[r]);
    }
    let mut pivots = 0;
    let phase_one: Vec<f64> = (0..n + m).map(|j| if j < n { 0.0 } else { -1.0 }).collect();
    t.optimise(&phase_one, n + m, &mut pivots)?;
    let infeasibility: f64 = t.basis.iter().zip(&t.rhs).filter(|(&j, _)| j >= n).map(|(_, v)| v.max(0.0)).sum();
    let scale = b.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    if infeasibility > FEAS_TOL * scale {
        let x = primal(&t, n);
        return Ok(LpSolution { status: LpStatus::Infeasible, x, value: f64::NAN, infeasibility });
    }

    // Pivot remaining artificials out; rows where that is impossible are redundant.
    let mut r = 0;
    while r < t.rows.len() {
        if t.basis[r] >= n {
            let col = (0..n).filter(|&j| !t.basis.contains(&j)).max_by(|&x, &y| {
                t.rows[r][x].abs().total_cmp(&t.rows[r][y].abs()).then(y.cmp(&x))
            });
            match col {
                Some(j) if t.rows[r][j].abs() > 1e-9 => t.pivot(r, j),
                _ => {
                    t.rows.remove(r);
                    t.rhs.remove(r);
                    t.basis.remove(r);
                    continue;
                }
            }
        }
        r += 1;
    }

    let mut cost = c.to_vec();
    cost.extend(std::iter::repeat_n(0.0, m));
    let bounded = t.optimise(&cost, n, &mut pivots)?;
    let x = primal(&t, n);
    if !bounded {
        return Ok(LpSolution { status: LpStatus::Unbounded, x, value: f64::INFINITY, infeasibility });
    }
    let value = x.iter().zip(c).map(|(x, c)| x * c).sum();
    Ok(LpSolution { status: LpStatus::Optimal, x, value, infeasibility })
}

fn primal(t: &Tableau, n: usize) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for (&j, &v) in t.basis.iter().zip(&t.rhs) {
        if j < n {
            x[j] = v.max(0.0);
        }
    }
    x
}
