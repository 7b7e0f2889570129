//! LP solving: the bundled revised simplex, an independent tableau simplex, canonical dual
//! selection and a KKT audit.

mod kkt;
mod revised;
mod tableau;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{LpProblem, Sense};
use revised::{solve_core, CoreLp, CoreOptions, CoreStatus};

pub use kkt::{verify_kkt, KktReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Backend {
    /// Bounded revised simplex with an explicit basis inverse.
    Revised,
    /// Full-tableau two-phase simplex; small problems only.
    Tableau,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PivotRule {
    Bland,
    /// Largest reduced cost, falling back to Bland while stalled.
    Dantzig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DualSelection {
    /// Duals of the final basis.
    Vertex,
    /// Among all optimal duals, the one with the smallest sum of inequality multipliers.
    MinimalNorm,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverOptions {
    pub backend: Backend,
    pub pivot: PivotRule,
    pub duals: DualSelection,
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub max_iterations: usize,
    /// Leave rows flagged lazy out until violated.
    pub lazy_rows: bool,
    /// Basis reinversion period; 0 picks one from the row count.
    pub refactor_interval: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            backend: Backend::Revised,
            pivot: PivotRule::Bland,
            duals: DualSelection::MinimalNorm,
            feas_tol: 1e-9,
            opt_tol: 1e-9,
            max_iterations: 200_000,
            lazy_rows: true,
            refactor_interval: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: Status,
    pub x: Vec<f64>,
    /// Shadow prices `dF/d(rhs)`: non-positive on `<=` rows, non-negative on `>=` rows.
    pub row_dual: Vec<f64>,
    /// Multipliers of native column bounds, same orientation as `row_dual`.
    pub col_dual: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Improving direction when unbounded.
    pub ray: Option<Vec<f64>>,
}

impl LpSolution {
    /// Nonnegative multiplier of a row under the "lower-bound rows enter with a minus" convention:
    /// `-y` for `<=`, `y` for `>=` and equalities.
    pub fn multiplier(&self, problem: &LpProblem, row: usize) -> f64 {
        match problem.rows[row].sense {
            Sense::Le => -self.row_dual[row],
            Sense::Ge | Sense::Eq => self.row_dual[row],
        }
    }

    fn empty(status: Status, p: &LpProblem) -> Self {
        LpSolution {
            status,
            x: vec![0.0; p.num_cols()],
            row_dual: vec![0.0; p.num_rows()],
            col_dual: vec![0.0; p.num_cols()],
            objective: f64::NAN,
            iterations: 0,
            ray: None,
        }
    }
}

pub fn solve(problem: &LpProblem, opts: &SolverOptions) -> Result<LpSolution> {
    problem.validate()?;
    let mut sol = match opts.backend {
        Backend::Revised => solve_revised(problem, opts)?,
        Backend::Tableau => tableau::solve_tableau(problem, opts)?,
    };
    if sol.status == Status::Optimal && opts.duals == DualSelection::MinimalNorm {
        match minimal_norm_duals(problem, &sol, opts) {
            Ok((y, z)) => {
                sol.row_dual = y;
                sol.col_dual = z;
            }
            Err(e) => warn!("dual selection failed, keeping vertex duals: {e}"),
        }
    }
    Ok(sol)
}

#[derive(Debug, Clone, Copy)]
enum BoundSource {
    Native,
    Row(usize, f64),
}

/// Simple bounds implied by singleton rows, and which rows stay in the simplex.
struct Reduced {
    lower: Vec<f64>,
    upper: Vec<f64>,
    lo_src: Vec<BoundSource>,
    up_src: Vec<BoundSource>,
    core_rows: Vec<usize>,
    infeasible: bool,
}

fn reduce(p: &LpProblem, tol: f64) -> Reduced {
    let n = p.num_cols();
    let mut r = Reduced {
        lower: p.lower.clone(),
        upper: p.upper.clone(),
        lo_src: vec![BoundSource::Native; n],
        up_src: vec![BoundSource::Native; n],
        core_rows: Vec::new(),
        infeasible: false,
    };
    for (i, row) in p.rows.iter().enumerate() {
        match row.coeffs.len() {
            0 => {
                let ok = match row.sense {
                    Sense::Le => 0.0 <= row.rhs + tol,
                    Sense::Ge => 0.0 >= row.rhs - tol,
                    Sense::Eq => row.rhs.abs() <= tol,
                };
                if !ok {
                    r.infeasible = true;
                }
            }
            1 => {
                let (j, a) = row.coeffs[0];
                let v = row.rhs / a;
                let (sets_lo, sets_up) = match (row.sense, a > 0.0) {
                    (Sense::Eq, _) => (true, true),
                    (Sense::Le, true) | (Sense::Ge, false) => (false, true),
                    (Sense::Ge, true) | (Sense::Le, false) => (true, false),
                };
                if sets_lo && v > r.lower[j] {
                    r.lower[j] = v;
                    r.lo_src[j] = BoundSource::Row(i, a);
                }
                if sets_up && v < r.upper[j] {
                    r.upper[j] = v;
                    r.up_src[j] = BoundSource::Row(i, a);
                }
            }
            _ => r.core_rows.push(i),
        }
    }
    for j in 0..n {
        if r.lower[j] > r.upper[j] {
            if r.lower[j] - r.upper[j] <= tol * (1.0 + r.upper[j].abs()) {
                r.lower[j] = r.upper[j];
            } else {
                r.infeasible = true;
            }
        }
    }
    r
}

fn row_bounds(sense: Sense, rhs: f64) -> (f64, f64) {
    match sense {
        Sense::Le => (f64::NEG_INFINITY, rhs),
        Sense::Ge => (rhs, f64::INFINITY),
        Sense::Eq => (rhs, rhs),
    }
}

fn auto_refactor(m: usize) -> usize {
    (m / 2).clamp(50, 400)
}

fn solve_revised(p: &LpProblem, opts: &SolverOptions) -> Result<LpSolution> {
    let n = p.num_cols();
    let red = reduce(p, opts.feas_tol);
    if red.infeasible {
        return Ok(LpSolution::empty(Status::Infeasible, p));
    }
    let mut active: Vec<usize> = red
        .core_rows
        .iter()
        .copied()
        .filter(|&i| !(opts.lazy_rows && p.rows[i].lazy))
        .collect();
    let mut total_iterations = 0;
    loop {
        let rows: Vec<Vec<(usize, f64)>> = active.iter().map(|&i| p.rows[i].coeffs.clone()).collect();
        let mut core = CoreLp::from_rows(n, &rows);
        for j in 0..n {
            core.cost[j] = p.cost[j];
            core.lower[j] = red.lower[j];
            core.upper[j] = red.upper[j];
        }
        for (a, &i) in active.iter().enumerate() {
            let (lo, up) = row_bounds(p.rows[i].sense, p.rows[i].rhs);
            core.lower[n + a] = lo;
            core.upper[n + a] = up;
        }
        let copts = CoreOptions {
            pivot: opts.pivot,
            feas_tol: opts.feas_tol,
            opt_tol: opts.opt_tol,
            max_iterations: opts.max_iterations.saturating_sub(total_iterations),
            refactor_interval: if opts.refactor_interval == 0 { auto_refactor(active.len()) } else { opts.refactor_interval },
        };
        let res = solve_core(&core, copts)?;
        total_iterations += res.iterations;
        debug!("core solve: {} rows, {} iterations, {:?}", active.len(), res.iterations, res.status);
        match res.status {
            CoreStatus::Infeasible => {
                let mut s = LpSolution::empty(Status::Infeasible, p);
                s.iterations = total_iterations;
                return Ok(s);
            }
            CoreStatus::Unbounded => {
                let mut s = LpSolution::empty(Status::Unbounded, p);
                s.iterations = total_iterations;
                s.ray = res.ray.map(|r| r[..n].to_vec());
                return Ok(s);
            }
            CoreStatus::Optimal => {}
        }
        let x = &res.x[..n];
        let violated: Vec<usize> = red
            .core_rows
            .iter()
            .copied()
            .filter(|&i| p.rows[i].lazy && opts.lazy_rows && !active.contains(&i))
            .filter(|&i| {
                let row = &p.rows[i];
                let act = row.activity(x);
                let tol = opts.feas_tol * (1.0 + row.rhs.abs());
                match row.sense {
                    Sense::Le => act > row.rhs + tol,
                    Sense::Ge => act < row.rhs - tol,
                    Sense::Eq => (act - row.rhs).abs() > tol,
                }
            })
            .collect();
        if !violated.is_empty() {
            debug!("adding {} violated lazy rows", violated.len());
            active.extend(violated);
            active.sort_unstable();
            continue;
        }

        let mut row_dual = vec![0.0; p.num_rows()];
        for (a, &i) in active.iter().enumerate() {
            row_dual[i] = res.y[a];
        }
        let mut col_dual = vec![0.0; n];
        for j in 0..n {
            let d = res.d[j];
            if d.abs() <= opts.opt_tol {
                continue;
            }
            let src = if d > 0.0 { red.lo_src[j] } else { red.up_src[j] };
            match src {
                BoundSource::Native => col_dual[j] = d,
                BoundSource::Row(i, a) => row_dual[i] = d / a,
            }
        }
        let objective = p.objective(x);
        return Ok(LpSolution {
            status: Status::Optimal,
            x: x.to_vec(),
            row_dual,
            col_dual,
            objective,
            iterations: total_iterations,
            ray: None,
        });
    }
}

/// Re-selects the optimal dual with the smallest sum of inequality multipliers. Only rows and
/// bounds active at the primal optimum may carry a multiplier, which keeps every candidate
/// complementary to `sol.x`, hence optimal.
fn minimal_norm_duals(p: &LpProblem, sol: &LpSolution, opts: &SolverOptions) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = p.num_cols();
    let x = &sol.x;
    let act_tol = |v: f64| 1e-7 * (1.0 + v.abs());

    // face LP columns: (original row or bound, sign of y per unit of the column)
    enum Owner {
        Row(usize),
        Bound(usize),
    }
    let mut owners = Vec::new();
    let mut face = LpProblem::new();
    for (i, row) in p.rows.iter().enumerate() {
        let act = row.activity(x);
        let tight = (act - row.rhs).abs() <= act_tol(row.rhs);
        match row.sense {
            Sense::Eq => {
                face.add_col(0.0, f64::NEG_INFINITY, f64::INFINITY, "y");
            }
            Sense::Ge if tight => {
                face.add_col(1.0, 0.0, f64::INFINITY, "y");
            }
            Sense::Le if tight => {
                face.add_col(-1.0, f64::NEG_INFINITY, 0.0, "y");
            }
            _ => continue,
        }
        owners.push(Owner::Row(i));
    }
    for j in 0..n {
        let (lo, up) = (p.lower[j], p.upper[j]);
        let at_lo = lo.is_finite() && (x[j] - lo).abs() <= act_tol(lo);
        let at_up = up.is_finite() && (x[j] - up).abs() <= act_tol(up);
        let (l, u, c) = match (at_lo, at_up) {
            (true, true) => (f64::NEG_INFINITY, f64::INFINITY, 0.0),
            (true, false) => (0.0, f64::INFINITY, 1.0),
            (false, true) => (f64::NEG_INFINITY, 0.0, -1.0),
            (false, false) => continue,
        };
        face.add_col(c, l, u, "z");
        owners.push(Owner::Bound(j));
    }
    let mut cols_of: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (v, o) in owners.iter().enumerate() {
        match *o {
            Owner::Row(i) => {
                for &(j, a) in &p.rows[i].coeffs {
                    cols_of[j].push((v, a));
                }
            }
            Owner::Bound(j) => cols_of[j].push((v, 1.0)),
        }
    }
    for (j, terms) in cols_of.into_iter().enumerate() {
        face.add_row(terms, Sense::Eq, p.cost[j], "stationarity");
    }
    let inner = SolverOptions {
        duals: DualSelection::Vertex,
        lazy_rows: false,
        pivot: PivotRule::Dantzig,
        backend: Backend::Revised,
        ..opts.clone()
    };
    let res = solve_revised(&face, &inner)?;
    if res.status != Status::Optimal {
        return Err(Error::Solver(format!("dual face problem {:?}", res.status)));
    }
    let mut y = vec![0.0; p.num_rows()];
    let mut z = vec![0.0; n];
    for (v, o) in owners.iter().enumerate() {
        match *o {
            Owner::Row(i) => y[i] = res.x[v],
            Owner::Bound(j) => z[j] = res.x[v],
        }
    }
    Ok((y, z))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(cost: Vec<f64>, rows: Vec<(Vec<(usize, f64)>, Sense, f64)>) -> LpProblem {
        let mut p = LpProblem::new();
        for c in cost {
            p.add_col(c, f64::NEG_INFINITY, f64::INFINITY, "x");
        }
        for (coeffs, s, rhs) in rows {
            p.add_row(coeffs, s, rhs, "r");
        }
        p
    }

    fn all_backends() -> Vec<SolverOptions> {
        let mut v = Vec::new();
        for backend in [Backend::Revised, Backend::Tableau] {
            for pivot in [PivotRule::Bland, PivotRule::Dantzig] {
                for duals in [DualSelection::Vertex, DualSelection::MinimalNorm] {
                    v.push(SolverOptions { backend, pivot, duals, ..Default::default() });
                }
            }
        }
        v
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let p = lp(vec![1.0], vec![(vec![(0, 1.0)], Sense::Le, -1.0), (vec![(0, 1.0)], Sense::Ge, 0.0)]);
        for o in all_backends() {
            assert_eq!(solve(&p, &o).unwrap().status, Status::Infeasible, "{o:?}");
        }
    }

    #[test]
    fn unbounded_is_reported() {
        let p = lp(vec![-1.0, 0.0], vec![(vec![(0, 1.0), (1, -1.0)], Sense::Le, 1.0), (vec![(1, 1.0)], Sense::Ge, 0.0)]);
        for o in all_backends() {
            assert_eq!(solve(&p, &o).unwrap().status, Status::Unbounded, "{o:?}");
        }
    }

    #[test]
    fn small_lp_with_duals() {
        // min -3x - 5y, x <= 4, 2y <= 12, 3x + 2y <= 18, x, y >= 0
        let p = lp(
            vec![-3.0, -5.0],
            vec![
                (vec![(0, 1.0)], Sense::Le, 4.0),
                (vec![(1, 2.0)], Sense::Le, 12.0),
                (vec![(0, 3.0), (1, 2.0)], Sense::Le, 18.0),
                (vec![(0, 1.0)], Sense::Ge, 0.0),
                (vec![(1, 1.0)], Sense::Ge, 0.0),
            ],
        );
        for o in all_backends() {
            let s = solve(&p, &o).unwrap();
            assert_eq!(s.status, Status::Optimal);
            assert!((s.objective + 36.0).abs() < 1e-9, "{o:?}");
            assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 6.0).abs() < 1e-9);
            assert!(s.row_dual[0].abs() < 1e-9);
            assert!((s.row_dual[1] + 1.5).abs() < 1e-9, "{:?}", s.row_dual);
            assert!((s.row_dual[2] + 1.0).abs() < 1e-9);
            let k = verify_kkt(&p, &s, 1e-9);
            assert!(k.pass, "{k:?}");
        }
    }

    #[test]
    fn equality_and_free_variables() {
        // min x + 2y, x + y = 3, x - y free, x <= 1
        let p = lp(
            vec![1.0, 2.0],
            vec![(vec![(0, 1.0), (1, 1.0)], Sense::Eq, 3.0), (vec![(0, 1.0)], Sense::Le, 1.0)],
        );
        for o in all_backends() {
            let s = solve(&p, &o).unwrap();
            assert_eq!(s.status, Status::Optimal);
            assert!((s.objective - 5.0).abs() < 1e-9);
            assert!((s.row_dual[0] - 2.0).abs() < 1e-9);
            assert!((s.row_dual[1] + 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn lazy_rows_are_added_when_violated() {
        let mut p = lp(
            vec![-1.0, -1.0],
            vec![
                (vec![(0, 1.0), (1, 2.0)], Sense::Le, 4.0),
                (vec![(0, 2.0), (1, 1.0)], Sense::Le, 4.0),
                (vec![(0, 1.0)], Sense::Ge, 0.0),
                (vec![(1, 1.0)], Sense::Ge, 0.0),
                (vec![(0, 1.0), (1, 1.0)], Sense::Le, 10.0),
            ],
        );
        p.rows[1].lazy = true;
        p.rows[4].lazy = true;
        let s = solve(&p, &SolverOptions::default()).unwrap();
        assert!((s.objective + 8.0 / 3.0).abs() < 1e-9);
        assert!(s.row_dual[1] < -1e-6);
        assert_eq!(s.row_dual[4], 0.0);
        assert!(verify_kkt(&p, &s, 1e-9).pass);
    }

    #[test]
    fn native_bounds_carry_duals() {
        let mut p = LpProblem::new();
        p.add_col(1.0, 2.0, 5.0, "x");
        p.add_col(-1.0, 0.0, 3.0, "x");
        p.add_row(vec![(0, 1.0), (1, 1.0)], Sense::Ge, 1.0, "r");
        for o in all_backends() {
            let s = solve(&p, &o).unwrap();
            assert!((s.objective + 1.0).abs() < 1e-9);
            assert!((s.col_dual[0] - 1.0).abs() < 1e-9);
            assert!((s.col_dual[1] + 1.0).abs() < 1e-9);
            assert!(verify_kkt(&p, &s, 1e-9).pass, "{o:?}");
        }
    }

    #[test]
    fn minimal_norm_picks_smallest_multipliers() {
        // min x, x >= 1 written twice: any split of the unit dual is optimal
        let p = lp(
            vec![1.0],
            vec![(vec![(0, 1.0)], Sense::Ge, 1.0), (vec![(0, 2.0)], Sense::Ge, 2.0)],
        );
        let s = solve(&p, &SolverOptions::default()).unwrap();
        // putting the weight on the scaled row halves the L1 norm
        assert!((s.row_dual[1] - 0.5).abs() < 1e-9, "{:?}", s.row_dual);
        assert!(s.row_dual[0].abs() < 1e-9);
    }
}
