//! Building and solving the dispatch LP in one step, with keyed access to the result.

use std::io::Write;

use log::info;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::MarketInstance;
use crate::lp::{build_lp_with, BuildOptions, LpModel, Quantity, RowKey, VarKey};
use crate::solver::{solve, verify_kkt, KktReport, LpSolution, SolverOptions, Status};

#[derive(Debug, Clone)]
pub struct DispatchSolution {
    pub model: LpModel,
    pub lp: LpSolution,
    pub kkt: KktReport,
}

impl DispatchSolution {
    pub fn objective(&self) -> f64 {
        self.lp.objective
    }

    /// Primal value of a column; 0 for keys the model does not contain.
    pub fn value(&self, key: VarKey) -> f64 {
        self.model.col(key).map_or(0.0, |c| self.lp.x[c])
    }

    pub fn base(&self, q: Quantity, entity: usize, t: usize) -> f64 {
        self.value(VarKey::base(q, entity, t))
    }

    pub fn scen(&self, q: Quantity, entity: usize, t: usize, k: usize) -> f64 {
        self.value(VarKey::scen(q, entity, t, k))
    }

    /// Nonnegative multiplier of a row (free for equalities); 0 when the row is absent.
    pub fn multiplier(&self, key: RowKey) -> f64 {
        self.model.row(key).map_or(0.0, |r| self.lp.multiplier(&self.model.problem, r))
    }
}

/// One primal value in long format.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantityRecord {
    pub entity: String,
    pub quantity: &'static str,
    pub period: usize,
    /// `base` or a scenario id.
    pub scenario: String,
    pub value: f64,
}

impl DispatchSolution {
    /// Every column of the model, named by entity id.
    pub fn records(&self, inst: &MarketInstance) -> Vec<QuantityRecord> {
        let pairs = inst.trade_pairs();
        self.model
            .vars
            .keys()
            .iter()
            .zip(&self.lp.x)
            .map(|(key, &value)| {
                let entity = match key.quantity {
                    Quantity::ThermalEnergy
                    | Quantity::ThermalUp
                    | Quantity::ThermalDown
                    | Quantity::ThermalRedispatchUp
                    | Quantity::ThermalRedispatchDown => inst.thermal[key.entity].id.clone(),
                    Quantity::Trade => {
                        let (m, n) = pairs[key.entity];
                        format!("{}->{}", inst.regions[m].id, inst.regions[n].id)
                    }
                    _ => inst.renewables[key.entity].id.clone(),
                };
                let scenario = key.scenario.map_or_else(|| "base".to_string(), |k| inst.scenarios[k].id.clone());
                QuantityRecord { entity, quantity: key.quantity.symbol(), period: key.period, scenario, value }
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, inst: &MarketInstance, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in self.records(inst) {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Builds and solves. Infeasible and unbounded outcomes are returned as errors.
pub fn dispatch(inst: &MarketInstance, build: &BuildOptions, solver: &SolverOptions) -> Result<DispatchSolution> {
    let mut build = build.clone();
    build.lazy_flows = solver.lazy_rows;
    let model = build_lp_with(inst, &build)?;
    let mut lp = solve(&model.problem, solver)?;
    match lp.status {
        Status::Optimal => {}
        Status::Infeasible => return Err(Error::Infeasible),
        Status::Unbounded => return Err(Error::Unbounded),
    }
    if build.renewable_reserve {
        canonical_renewable_down(inst, &model, &mut lp.x);
    }
    let tol = 1e-6_f64.max(solver.feas_tol);
    let kkt = verify_kkt(&model.problem, &lp, tol);
    info!(
        "{}: {} rows, {} cols, {} iterations, objective {:.6}, KKT worst {:.2e}",
        inst.name,
        model.problem.num_rows(),
        model.problem.num_cols(),
        lp.iterations,
        lp.objective,
        kkt.worst()
    );
    Ok(DispatchSolution { model, lp, kkt })
}

/// Renewable downward reserve costs nothing and only loosens the rows it enters, so the
/// optimal face contains `r_dw = w`. Reporting that point makes the quantities unique.
fn canonical_renewable_down(inst: &MarketInstance, model: &LpModel, x: &mut [f64]) {
    for t in 0..inst.periods {
        for j in 0..inst.renewables.len() {
            let w = model.col(VarKey::base(Quantity::RenewableEnergy, j, t));
            let rd = model.col(VarKey::base(Quantity::RenewableDown, j, t));
            if let (Some(w), Some(rd)) = (w, rd) {
                if model.problem.upper[rd] >= x[w] && model.problem.lower[rd] <= x[w] {
                    x[rd] = x[w].max(0.0);
                }
            }
        }
    }
}
