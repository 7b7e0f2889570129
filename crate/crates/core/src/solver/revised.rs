//! Dense bounded revised simplex on `A x - s = 0` with bounds on both `x` and the row
//! activities `s`.

use log::{debug, trace};

use super::PivotRule;
use crate::error::{Error, Result};

/// Column-compressed constraint matrix with bounds on structurals and on row activities.
#[derive(Debug, Clone)]
pub(crate) struct CoreLp {
    pub n: usize,
    pub m: usize,
    pub col_start: Vec<usize>,
    pub row_index: Vec<usize>,
    pub value: Vec<f64>,
    /// Length `n + m`: structurals followed by one logical per row.
    pub cost: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl CoreLp {
    pub fn from_rows(n: usize, rows: &[Vec<(usize, f64)>]) -> Self {
        let m = rows.len();
        let mut counts = vec![0usize; n + 1];
        for r in rows {
            for &(j, _) in r {
                counts[j + 1] += 1;
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let nnz = counts[n];
        let mut row_index = vec![0; nnz];
        let mut value = vec![0.0; nnz];
        let mut next = counts.clone();
        for (i, r) in rows.iter().enumerate() {
            for &(j, a) in r {
                row_index[next[j]] = i;
                value[next[j]] = a;
                next[j] += 1;
            }
        }
        CoreLp {
            n,
            m,
            col_start: counts,
            row_index,
            value,
            cost: vec![0.0; n + m],
            lower: vec![f64::NEG_INFINITY; n + m],
            upper: vec![f64::INFINITY; n + m],
        }
    }

    fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.col_start[j], self.col_start[j + 1]);
        self.row_index[a..b].iter().copied().zip(self.value[a..b].iter().copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum CoreStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub(crate) struct CoreResult {
    pub status: CoreStatus,
    /// Values of structurals and logicals.
    pub x: Vec<f64>,
    /// Row duals, `d(objective)/d(activity bound)`.
    pub y: Vec<f64>,
    /// Reduced costs of structurals.
    pub d: Vec<f64>,
    pub ray: Option<Vec<f64>>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct CoreOptions {
    pub pivot: PivotRule,
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub max_iterations: usize,
    pub refactor_interval: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Place {
    Basic,
    Lower,
    Upper,
    Zero,
}

const PIVOT_TOL: f64 = 1e-9;
const STALL_LIMIT: usize = 50;

struct Simplex<'a> {
    lp: &'a CoreLp,
    opts: CoreOptions,
    m: usize,
    basis: Vec<usize>,
    pos: Vec<usize>,
    place: Vec<Place>,
    x: Vec<f64>,
    binv: Vec<f64>,
    y: Vec<f64>,
    alpha: Vec<f64>,
    cb: Vec<f64>,
    iterations: usize,
    since_refactor: usize,
}

impl<'a> Simplex<'a> {
    fn new(lp: &'a CoreLp, opts: CoreOptions) -> Self {
        let n = lp.n;
        let m = lp.m;
        let total = n + m;
        let mut place = vec![Place::Zero; total];
        let mut x = vec![0.0; total];
        for j in 0..n {
            let (lo, up) = (lp.lower[j], lp.upper[j]);
            if lo.is_finite() {
                place[j] = Place::Lower;
                x[j] = lo;
            } else if up.is_finite() {
                place[j] = Place::Upper;
                x[j] = up;
            }
        }
        let mut basis = Vec::with_capacity(m);
        let mut pos = vec![usize::MAX; total];
        for i in 0..m {
            basis.push(n + i);
            pos[n + i] = i;
            place[n + i] = Place::Basic;
        }
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = -1.0;
        }
        let mut s = Simplex {
            lp,
            opts,
            m,
            basis,
            pos,
            place,
            x,
            binv,
            y: vec![0.0; m],
            alpha: vec![0.0; m],
            cb: vec![0.0; m],
            iterations: 0,
            since_refactor: 0,
        };
        s.recompute_basics();
        s
    }

    /// `x_B = -B^{-1} N x_N`.
    fn recompute_basics(&mut self) {
        let m = self.m;
        let n = self.lp.n;
        let mut rhs = vec![0.0; m];
        for j in 0..n + m {
            if self.place[j] == Place::Basic || self.x[j] == 0.0 {
                continue;
            }
            let v = self.x[j];
            if j < n {
                for (i, a) in self.lp.column(j) {
                    rhs[i] -= a * v;
                }
            } else {
                rhs[j - n] += v;
            }
        }
        for p in 0..m {
            let row = &self.binv[p * m..(p + 1) * m];
            let v: f64 = row.iter().zip(&rhs).map(|(a, b)| a * b).sum();
            self.x[self.basis[p]] = v;
        }
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let n = self.lp.n;
        let mut b = vec![0.0; m * m];
        for (p, &v) in self.basis.iter().enumerate() {
            if v < n {
                for (i, a) in self.lp.column(v) {
                    b[i * m + p] = a;
                }
            } else {
                b[(v - n) * m + p] = -1.0;
            }
        }
        self.binv = invert(m, b).ok_or_else(|| Error::Solver("singular basis".into()))?;
        self.since_refactor = 0;
        self.recompute_basics();
        Ok(())
    }

    fn infeasibility(&self, v: usize) -> f64 {
        let x = self.x[v];
        let tol = self.opts.feas_tol * (1.0 + x.abs());
        if x < self.lp.lower[v] - tol {
            self.lp.lower[v] - x
        } else if x > self.lp.upper[v] + tol {
            x - self.lp.upper[v]
        } else {
            0.0
        }
    }

    fn set_costs(&mut self) -> bool {
        let mut phase1 = false;
        for p in 0..self.m {
            let v = self.basis[p];
            let x = self.x[v];
            let tol = self.opts.feas_tol * (1.0 + x.abs());
            self.cb[p] = if x < self.lp.lower[v] - tol {
                phase1 = true;
                -1.0
            } else if x > self.lp.upper[v] + tol {
                phase1 = true;
                1.0
            } else {
                0.0
            };
        }
        if !phase1 {
            for p in 0..self.m {
                self.cb[p] = self.lp.cost[self.basis[p]];
            }
        }
        phase1
    }

    fn compute_duals(&mut self) {
        let m = self.m;
        self.y.iter_mut().for_each(|v| *v = 0.0);
        for p in 0..m {
            let c = self.cb[p];
            if c == 0.0 {
                continue;
            }
            let row = &self.binv[p * m..(p + 1) * m];
            for (yk, b) in self.y.iter_mut().zip(row) {
                *yk += c * b;
            }
        }
    }

    fn reduced_cost(&self, j: usize, phase1: bool) -> f64 {
        let n = self.lp.n;
        let c = if phase1 { 0.0 } else { self.lp.cost[j] };
        if j < n {
            c - self.lp.column(j).map(|(i, a)| a * self.y[i]).sum::<f64>()
        } else {
            c + self.y[j - n]
        }
    }

    /// Returns the entering variable and its direction (+1 increase, -1 decrease).
    fn price(&self, phase1: bool, bland: bool) -> Option<(usize, f64)> {
        let tol = self.opts.opt_tol;
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.lp.n + self.m {
            let place = self.place[j];
            if place == Place::Basic || self.lp.lower[j] == self.lp.upper[j] {
                continue;
            }
            let d = self.reduced_cost(j, phase1);
            let dir = match place {
                Place::Lower if d < -tol => 1.0,
                Place::Upper if d > tol => -1.0,
                Place::Zero if d < -tol => 1.0,
                Place::Zero if d > tol => -1.0,
                _ => continue,
            };
            if bland {
                return Some((j, dir));
            }
            if best.is_none_or(|(_, _, s)| d.abs() > s) {
                best = Some((j, dir, d.abs()));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    fn column_ftran(&mut self, q: usize) {
        let m = self.m;
        let n = self.lp.n;
        if q < n {
            self.alpha.iter_mut().for_each(|v| *v = 0.0);
            for (i, a) in self.lp.column(q) {
                for p in 0..m {
                    self.alpha[p] += self.binv[p * m + i] * a;
                }
            }
        } else {
            let i = q - n;
            for p in 0..m {
                self.alpha[p] = -self.binv[p * m + i];
            }
        }
    }

    fn pivot(&mut self, r: usize) {
        let m = self.m;
        let piv = self.alpha[r];
        let (head, rest) = self.binv.split_at_mut(r * m);
        let (prow, tail) = rest.split_at_mut(m);
        for v in prow.iter_mut() {
            *v /= piv;
        }
        for p in 0..m {
            if p == r {
                continue;
            }
            let f = self.alpha[p];
            if f == 0.0 {
                continue;
            }
            let row = if p < r { &mut head[p * m..(p + 1) * m] } else { &mut tail[(p - r - 1) * m..(p - r) * m] };
            for (a, b) in row.iter_mut().zip(prow.iter()) {
                *a -= f * b;
            }
        }
    }

    fn run(&mut self) -> Result<CoreResult> {
        let n = self.lp.n;
        let m = self.m;
        let mut degenerate = 0usize;
        let mut verified = false;
        loop {
            if self.iterations >= self.opts.max_iterations {
                return Err(Error::IterationLimit(self.iterations));
            }
            if self.since_refactor >= self.opts.refactor_interval.max(1) {
                self.refactor()?;
            }
            let phase1 = self.set_costs();
            self.compute_duals();
            let bland = self.opts.pivot == PivotRule::Bland || degenerate > STALL_LIMIT;
            let Some((q, dir)) = self.price(phase1, bland) else {
                if !verified {
                    // confirm on a fresh factorization before declaring a result
                    self.refactor()?;
                    verified = true;
                    continue;
                }
                let status = if phase1 { CoreStatus::Infeasible } else { CoreStatus::Optimal };
                return Ok(self.finish(status, None));
            };
            verified = false;
            self.column_ftran(q);

            // ratio test
            let mut theta = f64::INFINITY;
            let mut leave: Option<(usize, Place)> = None;
            if self.lp.lower[q].is_finite() && self.lp.upper[q].is_finite() {
                theta = self.lp.upper[q] - self.lp.lower[q];
            }
            let mut cands: Vec<(usize, f64, Place)> = Vec::new();
            for p in 0..m {
                let a = self.alpha[p];
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let v = self.basis[p];
                let rate = -dir * a;
                let x = self.x[v];
                let (lo, up) = (self.lp.lower[v], self.lp.upper[v]);
                let tol = self.opts.feas_tol * (1.0 + x.abs());
                let hit = if x < lo - tol {
                    (rate > 0.0).then(|| ((lo - x) / rate, Place::Lower))
                } else if x > up + tol {
                    (rate < 0.0).then(|| ((x - up) / -rate, Place::Upper))
                } else if rate < 0.0 && lo.is_finite() {
                    Some((((x - lo) / -rate).max(0.0), Place::Lower))
                } else if rate > 0.0 && up.is_finite() {
                    Some((((up - x) / rate).max(0.0), Place::Upper))
                } else {
                    None
                };
                if let Some((t, pl)) = hit {
                    cands.push((p, t, pl));
                }
            }
            let tmin = cands.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
            if tmin < theta {
                theta = tmin;
                let slack = 1e-12 * (1.0 + tmin);
                let ties = cands.iter().filter(|c| c.1 <= tmin + slack);
                let chosen = if bland {
                    ties.min_by_key(|c| self.basis[c.0])
                } else {
                    ties.max_by(|a, b| {
                        self.alpha[a.0]
                            .abs()
                            .partial_cmp(&self.alpha[b.0].abs())
                            .unwrap()
                            .then(self.basis[b.0].cmp(&self.basis[a.0]))
                    })
                };
                let c = chosen.expect("tie set is non-empty");
                leave = Some((c.0, c.2));
            }
            if theta.is_infinite() {
                if phase1 {
                    return Err(Error::Solver("unbounded phase-one ray".into()));
                }
                let mut ray = vec![0.0; n + m];
                ray[q] = dir;
                for p in 0..m {
                    ray[self.basis[p]] = -dir * self.alpha[p];
                }
                return Ok(self.finish(CoreStatus::Unbounded, Some(ray)));
            }

            if theta <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            for p in 0..m {
                let a = self.alpha[p];
                if a != 0.0 {
                    self.x[self.basis[p]] -= theta * dir * a;
                }
            }
            self.x[q] += dir * theta;
            match leave {
                None => {
                    // bound flip
                    if dir > 0.0 {
                        self.x[q] = self.lp.upper[q];
                        self.place[q] = Place::Upper;
                    } else {
                        self.x[q] = self.lp.lower[q];
                        self.place[q] = Place::Lower;
                    }
                }
                Some((r, pl)) => {
                    let v = self.basis[r];
                    self.x[v] = if pl == Place::Lower { self.lp.lower[v] } else { self.lp.upper[v] };
                    self.place[v] = pl;
                    self.pos[v] = usize::MAX;
                    self.pivot(r);
                    self.basis[r] = q;
                    self.pos[q] = r;
                    self.place[q] = Place::Basic;
                    self.since_refactor += 1;
                }
            }
            self.iterations += 1;
            if self.iterations.is_multiple_of(1000) {
                let inf: f64 = (0..m).map(|p| self.infeasibility(self.basis[p])).sum();
                debug!("iter {} phase1 {} infeasibility {:.3e}", self.iterations, phase1, inf);
            }
            trace!("iter {} enter {} dir {} theta {:.3e}", self.iterations, q, dir, theta);
        }
    }

    fn finish(&mut self, status: CoreStatus, ray: Option<Vec<f64>>) -> CoreResult {
        let n = self.lp.n;
        if status == CoreStatus::Optimal {
            for p in 0..self.m {
                self.cb[p] = self.lp.cost[self.basis[p]];
            }
            self.compute_duals();
        }
        let d = (0..n)
            .map(|j| if self.place[j] == Place::Basic { 0.0 } else { self.reduced_cost(j, false) })
            .collect();
        CoreResult {
            status,
            x: self.x.clone(),
            y: self.y.clone(),
            d,
            ray,
            iterations: self.iterations,
        }
    }
}

/// Gauss-Jordan inverse with partial pivoting of a row-major `m × m` matrix.
pub(crate) fn invert(m: usize, mut a: Vec<f64>) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; m * m];
    for i in 0..m {
        inv[i * m + i] = 1.0;
    }
    for c in 0..m {
        let mut best = c;
        let mut bv = a[c * m + c].abs();
        for r in c + 1..m {
            let v = a[r * m + c].abs();
            if v > bv {
                best = r;
                bv = v;
            }
        }
        if bv < 1e-12 {
            return None;
        }
        if best != c {
            for k in 0..m {
                a.swap(c * m + k, best * m + k);
                inv.swap(c * m + k, best * m + k);
            }
        }
        let piv = a[c * m + c];
        for k in 0..m {
            a[c * m + k] /= piv;
            inv[c * m + k] /= piv;
        }
        let prow_a: Vec<f64> = a[c * m..(c + 1) * m].to_vec();
        let prow_i: Vec<f64> = inv[c * m..(c + 1) * m].to_vec();
        for r in 0..m {
            if r == c {
                continue;
            }
            let f = a[r * m + c];
            if f == 0.0 {
                continue;
            }
            for k in 0..m {
                a[r * m + k] -= f * prow_a[k];
                inv[r * m + k] -= f * prow_i[k];
            }
        }
    }
    Some(inv)
}

pub(crate) fn solve_core(lp: &CoreLp, opts: CoreOptions) -> Result<CoreResult> {
    for j in 0..lp.n + lp.m {
        if lp.lower[j] > lp.upper[j] {
            return Ok(CoreResult {
                status: CoreStatus::Infeasible,
                x: vec![0.0; lp.n + lp.m],
                y: vec![0.0; lp.m],
                d: vec![0.0; lp.n],
                ray: None,
                iterations: 0,
            });
        }
    }
    let mut s = Simplex::new(lp, opts);
    s.run()
}
