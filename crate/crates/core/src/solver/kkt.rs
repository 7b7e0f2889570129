use std::collections::BTreeMap;

use serde::Serialize;

use super::{LpSolution, Status};
use crate::lp::{LpProblem, Sense};

#[derive(Debug, Clone, Serialize)]
pub struct KktReport {
    pub primal: f64,
    /// Largest `|c - A'y - z|` per column group.
    pub stationarity: BTreeMap<String, f64>,
    /// Largest `|y * slack|` per row group (bound multipliers under "bounds").
    pub complementarity: BTreeMap<String, f64>,
    /// Largest wrong-signed multiplier.
    pub dual_sign: f64,
    /// `|c'x - dual objective|` divided by `max(1, |c'x|)`.
    pub gap: f64,
    pub tol: f64,
    pub pass: bool,
}

impl KktReport {
    pub fn max_stationarity(&self) -> f64 {
        self.stationarity.values().copied().fold(0.0, f64::max)
    }

    pub fn max_complementarity(&self) -> f64 {
        self.complementarity.values().copied().fold(0.0, f64::max)
    }

    pub fn worst(&self) -> f64 {
        self.primal
            .max(self.max_stationarity())
            .max(self.max_complementarity())
            .max(self.dual_sign)
            .max(self.gap)
    }
}

fn bump(map: &mut BTreeMap<String, f64>, key: &str, v: f64) {
    let e = map.entry(key.to_string()).or_insert(0.0);
    if v > *e {
        *e = v;
    }
}

/// Recomputes every optimality residual from the raw problem data.
pub fn verify_kkt(p: &LpProblem, sol: &LpSolution, tol: f64) -> KktReport {
    let n = p.num_cols();
    let x = &sol.x;
    let y = &sol.row_dual;
    let z = &sol.col_dual;
    let group = |g: &Vec<&'static str>, i: usize| g.get(i).copied().unwrap_or("all");

    let mut primal: f64 = 0.0;
    let mut stationarity = BTreeMap::new();
    let mut complementarity = BTreeMap::new();
    let mut dual_sign: f64 = 0.0;
    let mut dual_obj = 0.0;

    let mut aty = vec![0.0; n];
    for (i, row) in p.rows.iter().enumerate() {
        let act = row.activity(x);
        let slack = act - row.rhs;
        let viol = match row.sense {
            Sense::Le => slack.max(0.0),
            Sense::Ge => (-slack).max(0.0),
            Sense::Eq => slack.abs(),
        };
        primal = primal.max(viol);
        let wrong = match row.sense {
            Sense::Le => y[i].max(0.0),
            Sense::Ge => (-y[i]).max(0.0),
            Sense::Eq => 0.0,
        };
        dual_sign = dual_sign.max(wrong);
        if row.sense != Sense::Eq {
            bump(&mut complementarity, group(&p.row_group, i), (y[i] * slack).abs());
        }
        dual_obj += y[i] * row.rhs;
        for &(j, a) in &row.coeffs {
            aty[j] += a * y[i];
        }
    }
    for j in 0..n {
        let (lo, up) = (p.lower[j], p.upper[j]);
        primal = primal.max((lo - x[j]).max(0.0)).max((x[j] - up).max(0.0));
        let r = p.cost[j] - aty[j] - z[j];
        bump(&mut stationarity, group(&p.col_group, j), r.abs());
        if z[j] > 0.0 {
            if lo.is_finite() {
                bump(&mut complementarity, "bounds", (z[j] * (x[j] - lo)).abs());
                dual_obj += z[j] * lo;
            } else {
                dual_sign = dual_sign.max(z[j]);
            }
        } else if z[j] < 0.0 {
            if up.is_finite() {
                bump(&mut complementarity, "bounds", (z[j] * (x[j] - up)).abs());
                dual_obj += z[j] * up;
            } else {
                dual_sign = dual_sign.max(-z[j]);
            }
        }
    }
    let obj = p.objective(x);
    let gap = (obj - dual_obj).abs() / obj.abs().max(1.0);
    let mut report = KktReport {
        primal,
        stationarity,
        complementarity,
        dual_sign,
        gap,
        tol,
        pass: false,
    };
    report.pass = sol.status == Status::Optimal && report.worst() <= tol;
    report
}
