//! Dense two-phase simplex with Bland's anti-cycling rule.
//!
//! Solves `min c.x  s.t.  A x = b, x >= 0`. Both phases pivot on a
//! slightly raised right-hand side so that degenerate vertices (moment
//! systems have `b = e0`) do not stall in round-off, and the basic values
//! are then recomputed for the true `b` from `B^{-1}`, which the tableau
//! carries in its artificial columns. Pivot choices depend only on the
//! data, so identical inputs give bitwise-identical solutions.

/// Pivot tolerance.
const EPS: f64 = 1e-11;

/// Relative size of the right-hand-side perturbation.
const PERTURB: f64 = 1e-9;

/// Deterministic perturbation weights in `[1, 2)`.
fn perturbation(m: usize, scale: f64) -> Vec<f64> {
    (0..m).map(|i| PERTURB * scale * (1.0 + (i as f64 * 0.618_033_988_749_895).fract())).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    /// Phase one ended with positive artificial mass `residual`. `direction`
    /// is a Farkas vector `y` with `y.A <= 0` (up to round-off) and `y.b > 0`.
    Infeasible { residual: f64, direction: Vec<f64> },
    Unbounded,
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// `rows` constraint rows followed by the objective row; the last
    /// column holds the right-hand side.
    t: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * (self.cols + 1) + c]
    }

    fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let w = self.cols + 1;
        &mut self.t[r * w..(r + 1) * w]
    }

    /// Basic values for the (sign-adjusted) right-hand side `b`.
    fn basic_values(&self, n: usize, b: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|r| (0..self.rows).map(|i| self.at(r, n + i) * b[i]).sum()).collect()
    }

    fn set_rhs(&mut self, values: &[f64]) {
        let w = self.cols + 1;
        for (r, v) in values.iter().enumerate() {
            self.t[r * w + self.cols] = *v;
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.cols + 1;
        let p = self.at(r, c);
        self.row_mut(r).iter_mut().for_each(|v| *v /= p);
        let prow: Vec<f64> = self.t[r * w..(r + 1) * w].to_vec();
        for i in 0..=self.rows {
            if i == r {
                continue;
            }
            let f = self.at(i, c);
            if f != 0.0 {
                let row = self.row_mut(i);
                for (v, pv) in row.iter_mut().zip(&prow) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        for i in 0..self.rows {
            let v = &mut self.t[i * w + self.cols];
            if v.abs() < EPS {
                *v = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Runs simplex iterations over columns `< allowed`. Returns false
    /// when the objective is unbounded below.
    ///
    /// Dantzig pricing with the largest pivot among ratio ties; after a
    /// run of degenerate pivots it falls back to Bland's rule, which cannot
    /// cycle, until the objective moves again.
    fn optimize(&mut self, allowed: usize) -> bool {
        const DEGENERATE_RUN: usize = 50;
        let obj = self.rows;
        let mut stalled = 0usize;
        loop {
            let bland = stalled >= DEGENERATE_RUN;
            let entering = if bland {
                (0..allowed).find(|&c| self.at(obj, c) < -EPS)
            } else {
                let mut best: Option<(usize, f64)> = None;
                for c in 0..allowed {
                    let v = self.at(obj, c);
                    if v < -EPS && best.is_none_or(|(_, bv)| v < bv) {
                        best = Some((c, v));
                    }
                }
                best.map(|b| b.0)
            };
            let Some(c) = entering else {
                return true;
            };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, c);
                if a > EPS {
                    let ratio = self.at(r, self.cols).max(0.0) / a;
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bv)) => {
                            let tie = ratio <= bv + EPS;
                            let better_tie = if bland { self.basis[r] < self.basis[br] } else { a > self.at(br, c) };
                            if ratio < bv - EPS || (tie && better_tie) {
                                Some((r, ratio))
                            } else {
                                Some((br, bv))
                            }
                        }
                    };
                }
            }
            match best {
                None => return false,
                Some((r, ratio)) => {
                    if ratio > EPS {
                        stalled = 0;
                    } else {
                        stalled += 1;
                    }
                    self.pivot(r, c)
                }
            }
        }
    }
}

/// Solves `min c.x` subject to `A x = b`, `x >= 0`, with `A` given row-major
/// as `m` rows of length `n`.
pub fn solve(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> LpOutcome {
    let m = a.len();
    let n = c.len();
    debug_assert!(a.iter().all(|r| r.len() == n) && b.len() == m);
    let cols = n + m;
    let w = cols + 1;
    let mut t = vec![0.0; (m + 1) * w];
    let mut sign = vec![1.0; m];
    for i in 0..m {
        sign[i] = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i * w + j] = sign[i] * a[i][j];
        }
        t[i * w + n + i] = 1.0;
        t[i * w + cols] = sign[i] * b[i];
    }
    // phase one objective: sum of artificials, expressed in nonbasic terms
    for i in 0..m {
        for j in 0..n {
            t[m * w + j] -= t[i * w + j];
        }
        t[m * w + cols] -= t[i * w + cols];
    }
    let mut tab = Tableau {
        rows: m,
        cols,
        t,
        basis: (n..n + m).collect(),
    };
    let scale = b.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    let bflip: Vec<f64> = (0..m).map(|i| sign[i] * b[i]).collect();
    let bump = perturbation(m, scale);
    let raised: Vec<f64> = bflip.iter().zip(&bump).map(|(x, e)| x + e).collect();
    tab.set_rhs(&raised);
    tab.optimize(cols);
    let level = tab.basic_values(n, &bflip);
    let infeas: f64 = (0..m).filter(|&r| tab.basis[r] >= n).map(|r| level[r].max(0.0)).sum();
    if infeas > 1e-9 * scale {
        // reduced cost of artificial i is 1 - y_i in the flipped rows
        let direction = (0..m).map(|i| sign[i] * (1.0 - tab.at(m, n + i))).collect();
        return LpOutcome::Infeasible { residual: infeas, direction };
    }
    // drive zero-level artificials out of the basis
    for r in 0..m {
        if tab.basis[r] >= n {
            if let Some(c) = (0..n).find(|&c| tab.at(r, c).abs() > EPS) {
                tab.pivot(r, c);
            }
        }
    }
    // phase two: forbid artificials, install the true objective
    for j in 0..=cols {
        tab.t[m * w + j] = 0.0;
    }
    for j in 0..n {
        tab.t[m * w + j] = c[j];
    }
    for r in 0..m {
        let bc = tab.basis[r];
        if bc < n && c[bc] != 0.0 {
            let f = c[bc];
            for j in 0..=cols {
                tab.t[m * w + j] -= f * tab.t[r * w + j];
            }
        }
    }
    let level = tab.basic_values(n, &bflip);
    let raised: Vec<f64> = level.iter().zip(&bump).map(|(x, e)| x.max(0.0) + e).collect();
    tab.set_rhs(&raised);
    if !tab.optimize(n) {
        return LpOutcome::Unbounded;
    }
    let level = tab.basic_values(n, &bflip);
    let mut x = vec![0.0; n];
    for r in 0..m {
        if tab.basis[r] < n {
            x[tab.basis[r]] = level[r].max(0.0);
        }
    }
    let objective = x.iter().zip(c).map(|(a, b)| a * b).sum();
    LpOutcome::Optimal { x, objective }
}
