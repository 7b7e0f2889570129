//! Case A/B comparison and deviation-level sweeps.

use serde::Serialize;

use crate::dispatch::{dispatch, DispatchSolution};
use crate::error::Result;
use crate::instance::MarketInstance;
use crate::lp::BuildOptions;
use crate::pricing::{price_book, PriceBook};
use crate::scenario::synthetic::{synthetic_118, SyntheticConfig};
use crate::settlement::{settle, SettlementStatement};
use crate::solver::SolverOptions;

/// A cleared, priced and settled market.
#[derive(Debug, Clone)]
pub struct Cleared {
    pub dispatch: DispatchSolution,
    pub prices: PriceBook,
    pub statement: SettlementStatement,
}

pub fn clear(inst: &MarketInstance, build: &BuildOptions, opts: &SolverOptions) -> Result<Cleared> {
    let dispatch = dispatch(inst, build, opts)?;
    let prices = price_book(inst, &dispatch)?;
    let statement = settle(inst, &dispatch, &prices);
    Ok(Cleared { dispatch, prices, statement })
}

/// Aggregate outcome of one clearing.
#[derive(Debug, Clone, Serialize)]
pub struct CaseSummary {
    pub renewable_reserve: bool,
    pub cost: f64,
    pub thermal_profit: f64,
    pub renewable_profit: f64,
    /// Smallest individual renewable profit.
    pub renewable_min_profit: f64,
    pub load_payment: f64,
    pub congestion_rent: f64,
    /// Base-case price at bus-0 loads per period, or at the first load when none is there.
    pub reference_price: Vec<f64>,
}

impl CaseSummary {
    pub fn of(inst: &MarketInstance, c: &Cleared) -> Self {
        let st = &c.statement;
        let res: Vec<f64> = st.renewable.iter().map(|r| r.total()).collect();
        let l = inst.loads.iter().position(|l| l.bus == 0).unwrap_or(0);
        CaseSummary {
            renewable_reserve: c.dispatch.model.options.renewable_reserve,
            cost: c.dispatch.objective(),
            thermal_profit: st.thermal.iter().map(|g| g.base_profit()).sum(),
            renewable_profit: res.iter().sum(),
            renewable_min_profit: res.iter().copied().fold(f64::INFINITY, f64::min),
            load_payment: st.load.iter().map(|l| l.total()).sum(),
            congestion_rent: st.congestion_rent,
            reference_price: c.prices.load.get(l).map(|p| p.energy.totals()).unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub case_a: CaseSummary,
    pub case_b: CaseSummary,
}

impl Comparison {
    /// Renewable reserve can only lower the expected cost.
    pub fn cost_order_holds(&self, tol: f64) -> bool {
        self.case_a.cost <= self.case_b.cost + tol * self.case_b.cost.abs().max(1.0)
    }
}

/// Clears `inst` with renewable reserve allowed (Case A) and forbidden (Case B).
pub fn compare_cases(inst: &MarketInstance, opts: &SolverOptions) -> Result<Comparison> {
    let a = clear(inst, &BuildOptions::default(), opts)?;
    let b = clear(inst, &BuildOptions { renewable_reserve: false, ..BuildOptions::default() }, opts)?;
    Ok(Comparison { case_a: CaseSummary::of(inst, &a), case_b: CaseSummary::of(inst, &b) })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub deviation_level: f64,
    pub summary: CaseSummary,
}

/// Clears the synthetic system once per deviation level, everything else fixed.
pub fn deviation_sweep(base: &SyntheticConfig, levels: &[f64], opts: &SolverOptions) -> Result<Vec<SweepPoint>> {
    levels
        .iter()
        .map(|&level| {
            let cfg = SyntheticConfig { deviation_level: level, ..base.clone() };
            let inst = synthetic_118(&cfg)?;
            let c = clear(&inst, &BuildOptions::default(), opts)?;
            Ok(SweepPoint { deviation_level: level, summary: CaseSummary::of(&inst, &c) })
        })
        .collect()
}

/// Thermal profit never falls and renewable profit never rises as the level grows.
pub fn sweep_is_monotone(points: &[SweepPoint], tol: f64) -> bool {
    points.windows(2).all(|w| {
        let (a, b) = (&w[0].summary, &w[1].summary);
        b.thermal_profit >= a.thermal_profit - tol * a.thermal_profit.abs().max(1.0)
            && b.renewable_profit <= a.renewable_profit + tol * a.renewable_profit.abs().max(1.0)
    })
}
