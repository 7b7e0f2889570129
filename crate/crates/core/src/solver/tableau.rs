//! Two-phase full-tableau simplex with Bland's rule. Shares no code with the revised
//! backend and is meant for cross-checking small problems.

use super::{LpSolution, SolverOptions, Status};
use crate::error::{Error, Result};
use crate::lp::{LpProblem, Sense};

/// How an original column is expressed through nonnegative tableau columns.
enum ColMap {
    /// x = lo + t
    Shift(usize, f64),
    /// x = up - t
    Mirror(usize, f64),
    /// x = t+ - t-
    Split(usize, usize),
}

struct Tableau {
    rows: usize,
    cols: usize,
    a: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * (self.cols + 1) + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.a[i * (self.cols + 1) + self.cols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.cols + 1;
        let piv = self.a[r * w + c];
        for k in 0..w {
            self.a[r * w + k] /= piv;
        }
        let prow: Vec<f64> = self.a[r * w..(r + 1) * w].to_vec();
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.a[i * w + c];
            if f != 0.0 {
                for k in 0..w {
                    self.a[i * w + k] -= f * prow[k];
                }
            }
        }
        self.basis[r] = c;
    }

    /// Minimizes `cost` over the current tableau. Columns flagged in `barred` never enter.
    fn optimize(&mut self, cost: &[f64], barred: &[bool], tol: f64, limit: usize) -> Result<Option<usize>> {
        let mut it = 0;
        loop {
            if it >= limit {
                return Err(Error::IterationLimit(it));
            }
            let mut entering = None;
            for j in 0..self.cols {
                if barred[j] || self.basis.contains(&j) {
                    continue;
                }
                let mut d = cost[j];
                for i in 0..self.rows {
                    d -= cost[self.basis[i]] * self.at(i, j);
                }
                if d < -tol {
                    entering = Some(j);
                    break;
                }
            }
            let Some(q) = entering else { return Ok(None) };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.at(i, q);
                if a > 1e-11 {
                    let ratio = self.rhs(i) / a;
                    let better = match best {
                        None => true,
                        Some((bi, br)) => {
                            ratio < br - 1e-12 || (ratio <= br + 1e-12 && self.basis[i] < self.basis[bi])
                        }
                    };
                    if better {
                        best = Some((i, ratio));
                    }
                }
            }
            match best {
                None => return Ok(Some(q)),
                Some((r, _)) => self.pivot(r, q),
            }
            it += 1;
        }
    }
}

pub(super) fn solve_tableau(p: &LpProblem, opts: &SolverOptions) -> Result<LpSolution> {
    let n = p.num_cols();
    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0;
    // extra rows for finite upper bounds of shifted columns
    let mut bound_rows: Vec<(usize, f64, usize)> = Vec::new();
    for j in 0..n {
        let (lo, up) = (p.lower[j], p.upper[j]);
        if lo.is_finite() {
            maps.push(ColMap::Shift(ncols, lo));
            if up.is_finite() {
                bound_rows.push((ncols, up - lo, j));
            }
            ncols += 1;
        } else if up.is_finite() {
            maps.push(ColMap::Mirror(ncols, up));
            ncols += 1;
        } else {
            maps.push(ColMap::Split(ncols, ncols + 1));
            ncols += 2;
        }
    }
    let m0 = p.num_rows();
    let m = m0 + bound_rows.len();
    // dense rows over tableau structurals
    let mut dense: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    let mut slack_sign = Vec::with_capacity(m);
    for row in &p.rows {
        let mut r = vec![0.0; ncols];
        let mut b = row.rhs;
        for &(j, a) in &row.coeffs {
            match maps[j] {
                ColMap::Shift(c, lo) => {
                    r[c] += a;
                    b -= a * lo;
                }
                ColMap::Mirror(c, up) => {
                    r[c] -= a;
                    b -= a * up;
                }
                ColMap::Split(c1, c2) => {
                    r[c1] += a;
                    r[c2] -= a;
                }
            }
        }
        dense.push(r);
        rhs.push(b);
        slack_sign.push(match row.sense {
            Sense::Le => 1.0,
            Sense::Ge => -1.0,
            Sense::Eq => 0.0,
        });
    }
    for &(c, width, _) in &bound_rows {
        let mut r = vec![0.0; ncols];
        r[c] = 1.0;
        dense.push(r);
        rhs.push(width);
        slack_sign.push(1.0);
    }
    // columns: structurals, slacks (one per inequality row), artificials (one per row)
    let slack_of: Vec<Option<usize>> = {
        let mut next = ncols;
        slack_sign
            .iter()
            .map(|&s| {
                if s != 0.0 {
                    next += 1;
                    Some(next - 1)
                } else {
                    None
                }
            })
            .collect()
    };
    let nslack = slack_of.iter().filter(|s| s.is_some()).count();
    let art0 = ncols + nslack;
    let cols = art0 + m;
    let w = cols + 1;
    let mut a = vec![0.0; m * w];
    let mut flip = vec![1.0; m];
    for i in 0..m {
        let f = if rhs[i] < 0.0 { -1.0 } else { 1.0 };
        flip[i] = f;
        for (c, v) in dense[i].iter().enumerate() {
            a[i * w + c] = f * v;
        }
        if let Some(s) = slack_of[i] {
            a[i * w + s] = f * slack_sign[i];
        }
        a[i * w + art0 + i] = 1.0;
        a[i * w + cols] = f * rhs[i];
    }
    let mut t = Tableau { rows: m, cols, a, basis: (art0..art0 + m).collect() };

    let tol = opts.opt_tol;
    let limit = opts.max_iterations;
    let mut phase1 = vec![0.0; cols];
    for c in phase1.iter_mut().skip(art0) {
        *c = 1.0;
    }
    let none = vec![false; cols];
    t.optimize(&phase1, &none, tol, limit)?;
    let infeas: f64 = (0..m).filter(|&i| t.basis[i] >= art0).map(|i| t.rhs(i)).sum();
    if infeas > opts.feas_tol * (1.0 + rhs.iter().map(|v| v.abs()).fold(0.0, f64::max)) {
        return Ok(LpSolution::empty(Status::Infeasible, p));
    }
    // drive remaining artificials out where possible
    for i in 0..m {
        if t.basis[i] >= art0 {
            if let Some(c) = (0..art0).find(|&c| t.at(i, c).abs() > 1e-9 && !t.basis.contains(&c)) {
                t.pivot(i, c);
            }
        }
    }

    let mut cost = vec![0.0; cols];
    for (j, mp) in maps.iter().enumerate() {
        match *mp {
            ColMap::Shift(c, _) => cost[c] = p.cost[j],
            ColMap::Mirror(c, _) => cost[c] = -p.cost[j],
            ColMap::Split(c1, c2) => {
                cost[c1] = p.cost[j];
                cost[c2] = -p.cost[j];
            }
        }
    }
    let mut barred = vec![false; cols];
    for b in barred.iter_mut().skip(art0) {
        *b = true;
    }
    if let Some(q) = t.optimize(&cost, &barred, tol, limit)? {
        let mut s = LpSolution::empty(Status::Unbounded, p);
        let mut dir = vec![0.0; cols];
        dir[q] = 1.0;
        for i in 0..m {
            dir[t.basis[i]] = -t.at(i, q);
        }
        s.ray = Some(recover(&maps, &dir, true));
        return Ok(s);
    }

    let mut vals = vec![0.0; cols];
    for i in 0..m {
        vals[t.basis[i]] = t.rhs(i);
    }
    let x = recover(&maps, &vals, false);
    // y_i = c_B B^{-1} e_i, read through the artificial columns
    let mut y = vec![0.0; m];
    for (i, yi) in y.iter_mut().enumerate() {
        let mut v = 0.0;
        for r in 0..m {
            v += cost[t.basis[r]] * t.at(r, art0 + i);
        }
        *yi = v * flip[i];
    }
    let mut row_dual = y[..m0].to_vec();
    for v in row_dual.iter_mut() {
        if v.abs() < 1e-12 {
            *v = 0.0;
        }
    }
    // column bound multipliers from reduced costs of original columns
    let mut aty = vec![0.0; n];
    for (i, row) in p.rows.iter().enumerate() {
        for &(j, a) in &row.coeffs {
            aty[j] += a * row_dual[i];
        }
    }
    let mut col_dual: Vec<f64> = (0..n).map(|j| p.cost[j] - aty[j]).collect();
    for v in col_dual.iter_mut() {
        if v.abs() <= tol {
            *v = 0.0;
        }
    }
    let objective = p.objective(&x);
    Ok(LpSolution {
        status: Status::Optimal,
        x,
        row_dual,
        col_dual,
        objective,
        iterations: 0,
        ray: None,
    })
}

fn recover(maps: &[ColMap], vals: &[f64], direction: bool) -> Vec<f64> {
    maps.iter()
        .map(|mp| match *mp {
            ColMap::Shift(c, lo) => vals[c] + if direction { 0.0 } else { lo },
            ColMap::Mirror(c, up) => if direction { -vals[c] } else { up - vals[c] },
            ColMap::Split(c1, c2) => vals[c1] - vals[c2],
        })
        .collect()
}
