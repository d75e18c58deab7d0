//! Dense two-phase tableau simplex for `max c·x` s.t. `A x ≤ b`, `x ≥ 0`.
//!
//! Rows with `b_i < 0` are negated into `≥` rows and given an artificial
//! variable; phase one drives the artificials to zero. Pricing is Dantzig's
//! most-negative reduced cost, switching to Bland's rule after a run of
//! degenerate pivots so cycling cannot persist.

use ndarray::Array2;

use crate::exec::Execution;

const EPS: f64 = 1e-10;
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpOutcome {
    Optimal { value: f64, x: Vec<f64> },
    Infeasible,
    Unbounded,
    /// Pivot limit reached.
    Stalled,
}

struct Tableau {
    data: Vec<f64>,
    rows: usize,
    width: usize,
    basis: Vec<usize>,
    exec: Execution,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.width - 1)
    }

    fn objective_row(&self) -> &[f64] {
        &self.data[self.rows * self.width..]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width;
        let inv = 1.0 / self.at(pr, pc);
        self.data[pr * w..(pr + 1) * w]
            .iter_mut()
            .for_each(|v| *v *= inv);
        let pivot_row = self.data[pr * w..(pr + 1) * w].to_vec();
        self.exec.for_each_chunk_mut(&mut self.data, w, |r, row| {
            if r == pr {
                return;
            }
            let f = row[pc];
            if f != 0.0 {
                row.iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= f * p);
                row[pc] = 0.0;
            }
        });
        self.basis[pr] = pc;
    }

    /// Runs simplex iterations on the current objective row over columns
    /// `0..allowed` until no reduced cost is negative.
    fn optimize(&mut self, allowed: usize, max_pivots: usize) -> Result<(), LpOutcome> {
        let mut degenerate = 0;
        for _ in 0..max_pivots {
            let z = self.objective_row();
            let bland = degenerate >= DEGENERATE_RUN;
            let entering = if bland {
                (0..allowed).find(|&c| z[c] < -EPS)
            } else {
                let mut best = None;
                let mut most = -EPS;
                for (c, &d) in z[..allowed].iter().enumerate() {
                    if d < most {
                        most = d;
                        best = Some(c);
                    }
                }
                best
            };
            let Some(pc) = entering else {
                return Ok(());
            };

            let mut leaving: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > EPS {
                    let ratio = self.rhs(r).max(0.0) / a;
                    let better = match leaving {
                        None => true,
                        Some((lr, best)) => {
                            ratio < best - EPS
                                || (ratio <= best + EPS && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leaving = Some((r, ratio));
                    }
                }
            }
            let Some((pr, ratio)) = leaving else {
                return Err(LpOutcome::Unbounded);
            };
            degenerate = if ratio <= EPS { degenerate + 1 } else { 0 };
            self.pivot(pr, pc);
        }
        Err(LpOutcome::Stalled)
    }
}

/// Solves `max c·x` subject to `a x ≤ b`, `x ≥ 0`.
pub(crate) fn maximize(c: &[f64], a: &Array2<f64>, b: &[f64], exec: Execution) -> LpOutcome {
    let (rows, vars) = a.dim();
    assert_eq!(c.len(), vars);
    assert_eq!(b.len(), rows);
    let flipped: Vec<usize> = (0..rows).filter(|&r| b[r] < 0.0).collect();
    let slack0 = vars;
    let art0 = vars + rows;
    let width = art0 + flipped.len() + 1;
    let mut data = vec![0.0; (rows + 1) * width];
    let mut basis = vec![0; rows];
    let mut art = 0;
    for r in 0..rows {
        let sign = if b[r] < 0.0 { -1.0 } else { 1.0 };
        let row = &mut data[r * width..(r + 1) * width];
        for j in 0..vars {
            row[j] = sign * a[[r, j]];
        }
        row[slack0 + r] = sign;
        row[width - 1] = sign * b[r];
        if sign < 0.0 {
            row[art0 + art] = 1.0;
            basis[r] = art0 + art;
            art += 1;
        } else {
            basis[r] = slack0 + r;
        }
    }
    let mut t = Tableau {
        data,
        rows,
        width,
        basis,
        exec: exec.for_work((rows + 1) * width),
    };
    let max_pivots = 50 * (rows + width);

    if !flipped.is_empty() {
        // Phase one: maximize −Σ artificials, priced out against their rows.
        let z0 = rows * width;
        for &r in &flipped {
            for k in 0..width {
                t.data[z0 + k] -= t.data[r * width + k];
            }
        }
        for k in art0..width - 1 {
            t.data[z0 + k] = 0.0;
        }
        if let Err(outcome) = t.optimize(width - 1, max_pivots) {
            return outcome;
        }
        let scale = 1.0 + b.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if t.rhs(rows) < -1e-9 * scale {
            return LpOutcome::Infeasible;
        }
        // Pivot any artificial still basic (at zero) out of the basis.
        for r in 0..rows {
            if t.basis[r] >= art0 {
                if let Some(pc) = (0..art0).find(|&c| t.at(r, c).abs() > 1e-9) {
                    t.pivot(r, pc);
                }
            }
        }
    }

    // Phase two: reduced costs −c priced out against the basis.
    let z0 = rows * width;
    t.data[z0..].iter_mut().for_each(|v| *v = 0.0);
    for j in 0..vars {
        t.data[z0 + j] = -c[j];
    }
    for r in 0..rows {
        let bc = t.basis[r];
        let cost = if bc < vars { c[bc] } else { 0.0 };
        if cost != 0.0 {
            for k in 0..width {
                t.data[z0 + k] += cost * t.data[r * width + k];
            }
        }
    }
    if let Err(outcome) = t.optimize(art0, max_pivots) {
        return outcome;
    }

    let mut x = vec![0.0; vars];
    for r in 0..rows {
        if t.basis[r] < vars {
            x[t.basis[r]] = t.rhs(r).max(0.0);
        }
    }
    let value = c.iter().zip(&x).map(|(c, x)| c * x).sum();
    LpOutcome::Optimal { value, x }
}
