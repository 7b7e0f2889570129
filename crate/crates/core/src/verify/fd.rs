use serde::Serialize;

use crate::dispatch::DispatchSolution;
use crate::error::{Error, Result};
use crate::instance::MarketInstance;
use crate::lp::{build_lp_with, BuildOptions, Freeze, Quantity as Q, UnitRef};
use crate::pricing::PriceBook;
use crate::solver::{solve, DualSelection, SolverOptions, Status};

/// Quantity whose marginal value is probed by re-solving.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FdTarget {
    LoadDemand { load: usize, period: usize },
    ThermalEnergy { unit: usize, period: usize },
    ThermalUp { unit: usize, period: usize },
    ThermalDown { unit: usize, period: usize },
    RenewableEnergy { unit: usize, period: usize },
    RenewableUp { unit: usize, period: usize },
    RenewableDown { unit: usize, period: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct FdReport {
    pub target: FdTarget,
    pub h: f64,
    /// Price implied by the step below and above the cleared value. A step that makes the
    /// market infeasible has value `+inf`, so the matching slope is infinite.
    pub left: f64,
    pub right: f64,
    /// `None` when either step is infeasible.
    pub central: Option<f64>,
    /// The price from the duals.
    pub analytic: f64,
}

impl FdReport {
    /// Distance from the analytic price to the interval spanned by the one-sided estimates.
    pub fn bracket_gap(&self) -> f64 {
        let lo = self.left.min(self.right);
        let hi = self.left.max(self.right);
        (lo - self.analytic).max(self.analytic - hi).max(0.0)
    }

    pub fn central_gap(&self) -> Option<f64> {
        self.central.map(|c| (c - self.analytic).abs())
    }

    /// True when one of the steps left the feasible region.
    pub fn one_sided(&self) -> bool {
        !self.left.is_finite() || !self.right.is_finite()
    }
}

/// Estimates the marginal value of `target` by perturbing it by `±h` and re-solving.
///
/// Loads: `(F(d+h) - F(d-h)) / 2h`. Unit quantities: the unit's period-t quantities become
/// parameters (its bid cost and private rows at t are dropped) and the price is
/// `-(F(q+h) - F(q-h)) / 2h` of the remaining market.
pub fn finite_difference_oracle(
    inst: &MarketInstance,
    sol: &DispatchSolution,
    book: &PriceBook,
    target: FdTarget,
    h: f64,
    opts: &SolverOptions,
) -> Result<FdReport> {
    let mut o = opts.clone();
    o.duals = DualSelection::Vertex;
    let base_build = BuildOptions { lazy_flows: o.lazy_rows, ..sol.model.options.clone() };
    let solve_value = |inst: &MarketInstance, build: &BuildOptions| -> Result<f64> {
        let model = build_lp_with(inst, build)?;
        let s = solve(&model.problem, &o)?;
        match s.status {
            Status::Optimal => Ok(s.objective),
            Status::Infeasible => Ok(f64::INFINITY),
            _ => Err(Error::Unbounded),
        }
    };

    let (values, analytic, sign) = match target {
        FdTarget::LoadDemand { load, period } => {
            let mut vals = [0.0; 3];
            for (slot, step) in [-h, 0.0, h].into_iter().enumerate() {
                let mut p = inst.clone();
                p.loads[load].demand[period] += step;
                vals[slot] = solve_value(&p, &base_build)?;
            }
            (vals, book.load[load].energy.total(period), 1.0)
        }
        _ => {
            let (unit, period, which) = unit_target(target);
            let (e, u, d) = match unit {
                UnitRef::Thermal(i) => (
                    sol.base(Q::ThermalEnergy, i, period),
                    sol.base(Q::ThermalUp, i, period),
                    sol.base(Q::ThermalDown, i, period),
                ),
                UnitRef::Renewable(j) => (
                    sol.base(Q::RenewableEnergy, j, period),
                    sol.base(Q::RenewableUp, j, period),
                    sol.base(Q::RenewableDown, j, period),
                ),
            };
            let mut vals = [0.0; 3];
            for (slot, step) in [-h, 0.0, h].into_iter().enumerate() {
                let mut fz = Freeze { unit, period, energy: e, up: u, down: d, outage_energy: e };
                match which {
                    0 => fz.energy += step,
                    1 => fz.up += step,
                    _ => fz.down += step,
                }
                let build = BuildOptions { freeze: Some(fz), ..base_build.clone() };
                vals[slot] = solve_value(inst, &build)?;
            }
            let analytic = match (unit, which) {
                (UnitRef::Thermal(i), 0) => book.thermal[i].energy.total(period),
                (UnitRef::Thermal(i), 1) => book.thermal[i].reserve_up.total(period),
                (UnitRef::Thermal(i), _) => book.thermal[i].reserve_down.total(period),
                (UnitRef::Renewable(j), 0) => book.renewable[j].energy.total(period),
                (UnitRef::Renewable(j), 1) => book.renewable[j].reserve_up.total(period),
                (UnitRef::Renewable(j), _) => book.renewable[j].reserve_down.total(period),
            };
            (vals, analytic, -1.0)
        }
    };
    let [lo, mid, hi] = values;
    if !mid.is_finite() || (!lo.is_finite() && !hi.is_finite()) {
        return Err(Error::InfeasiblePerturbation(h));
    }
    // F is convex in the perturbed quantity: an infeasible lower step means the slope from
    // the left is unbounded below, an infeasible upper step unbounded above
    let left = if lo.is_finite() { (mid - lo) / h } else { f64::NEG_INFINITY };
    let right = if hi.is_finite() { (hi - mid) / h } else { f64::INFINITY };
    let central = (lo.is_finite() && hi.is_finite()).then(|| sign * (hi - lo) / (2.0 * h));
    Ok(FdReport { target, h, left: sign * left, right: sign * right, central, analytic })
}

fn unit_target(t: FdTarget) -> (UnitRef, usize, u8) {
    match t {
        FdTarget::ThermalEnergy { unit, period } => (UnitRef::Thermal(unit), period, 0),
        FdTarget::ThermalUp { unit, period } => (UnitRef::Thermal(unit), period, 1),
        FdTarget::ThermalDown { unit, period } => (UnitRef::Thermal(unit), period, 2),
        FdTarget::RenewableEnergy { unit, period } => (UnitRef::Renewable(unit), period, 0),
        FdTarget::RenewableUp { unit, period } => (UnitRef::Renewable(unit), period, 1),
        FdTarget::RenewableDown { unit, period } => (UnitRef::Renewable(unit), period, 2),
        FdTarget::LoadDemand { .. } => unreachable!("load targets are handled separately"),
    }
}
