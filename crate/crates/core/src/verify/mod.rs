//! Executable market properties: reserve-price uniformity and ordering, scenario
//! payment decomposition, individual rationality, cost recovery and revenue adequacy.

mod fd;
pub mod fuzz;

use std::fmt;

use serde::Serialize;

pub use fd::{finite_difference_oracle, FdReport, FdTarget};

use crate::dispatch::DispatchSolution;
use crate::error::{Error, Result};
use crate::instance::MarketInstance;
use crate::lp::{LpProblem, Multiplier as M, Quantity as Q, RowKey, Sense, VarKey};
use crate::pricing::PriceBook;
use crate::settlement::SettlementStatement;
use crate::solver::{solve, SolverOptions, Status};

#[derive(Debug, Clone, Serialize)]
pub struct PropertyResult {
    pub name: String,
    pub pass: bool,
    /// Largest violation found; 0 when nothing was violated.
    pub worst: f64,
    /// Where the worst residual occurred.
    pub witness: Option<String>,
    pub checked: usize,
    /// Cases outside the property's premise, left unchecked.
    pub skipped: usize,
}

impl PropertyResult {
    fn new(name: &str) -> Self {
        PropertyResult { name: name.to_string(), pass: true, worst: 0.0, witness: None, checked: 0, skipped: 0 }
    }

    /// Records one check whose violation is `residual` (<= 0 means satisfied).
    fn observe(&mut self, residual: f64, tol: f64, witness: impl FnOnce() -> String) {
        self.checked += 1;
        let r = if residual.is_nan() { f64::INFINITY } else { residual };
        if r > self.worst || (self.witness.is_none() && r > tol) {
            self.worst = r.max(self.worst);
            self.witness = Some(witness());
        }
        if r > tol {
            self.pass = false;
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct PropertyReport {
    pub tol: f64,
    pub results: Vec<PropertyResult>,
}

impl PropertyReport {
    pub fn pass(&self) -> bool {
        self.results.iter().all(|r| r.pass)
    }

    pub fn get(&self, name: &str) -> Option<&PropertyResult> {
        self.results.iter().find(|r| r.name == name)
    }

    pub fn failures(&self) -> Vec<&PropertyResult> {
        self.results.iter().filter(|r| !r.pass).collect()
    }
}

impl fmt::Display for PropertyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<32} {:>6} {:>8} {:>8} {:>12}  witness", "property", "result", "checks", "skipped", "worst")?;
        for r in &self.results {
            writeln!(
                f,
                "{:<32} {:>6} {:>8} {:>8} {:>12.3e}  {}",
                r.name,
                if r.pass { "pass" } else { "FAIL" },
                r.checked,
                r.skipped,
                r.worst,
                r.witness.as_deref().unwrap_or("-")
            )?;
        }
        Ok(())
    }
}

/// Pairs of renewables sharing a bus.
fn same_bus_renewables(inst: &MarketInstance) -> Vec<(usize, usize)> {
    let n = inst.renewables.len();
    let mut out = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if inst.renewables[a].bus == inst.renewables[b].bus {
                out.push((a, b));
            }
        }
    }
    out
}

/// Same-bus renewables clear at the same reserve prices.
pub fn check_theorem1(book: &PriceBook, inst: &MarketInstance, tol: f64) -> PropertyResult {
    let mut r = PropertyResult::new("same-bus RES reserve prices");
    for (a, b) in same_bus_renewables(inst) {
        let (pa, pb) = (&book.renewable[a], &book.renewable[b]);
        for t in 0..inst.periods {
            let du = (pa.reserve_up.total(t) - pb.reserve_up.total(t)).abs();
            let dd = (pa.reserve_down.total(t) - pb.reserve_down.total(t)).abs();
            r.observe(du.max(dd), tol, || format!("{}/{} t{t}", pa.id, pb.id));
        }
    }
    r
}

/// A renewable's upward reserve price is at least, and its downward price at most, that of a
/// thermal unit at the same bus.
pub fn check_corollary1(book: &PriceBook, inst: &MarketInstance, tol: f64) -> PropertyResult {
    let mut r = PropertyResult::new("RES vs thermal reserve order");
    for (j, w) in inst.renewables.iter().enumerate() {
        for (i, g) in inst.thermal.iter().enumerate() {
            if w.bus != g.bus {
                continue;
            }
            let (pw, pg) = (&book.renewable[j], &book.thermal[i]);
            for t in 0..inst.periods {
                let up = pg.reserve_up.total(t) - pw.reserve_up.total(t);
                let down = pw.reserve_down.total(t) - pg.reserve_down.total(t);
                r.observe(up.max(down), tol, || format!("{}/{} t{t}", w.id, g.id));
            }
        }
    }
    r
}

/// Upward and downward renewable reserve multipliers are never positive together.
pub fn check_reserve_exclusion(book: &PriceBook, tol: f64) -> PropertyResult {
    let mut r = PropertyResult::new("RES reserve multiplier exclusion");
    for p in &book.renewable {
        for (k, (up, down)) in p.reserve_up.scenario.iter().zip(&p.reserve_down.scenario).enumerate() {
            for t in 0..up.len() {
                r.observe(up[t] * down[t], tol, || format!("{} k{k} t{t}", p.id));
            }
        }
    }
    r
}

/// Every column's dual stationarity recomputed from raw data, plus the two derivations of the
/// thermal deviation price.
pub fn check_stationarity(sol: &DispatchSolution, book: &PriceBook, tol: f64) -> PropertyResult {
    let mut r = PropertyResult::new("stationarity residuals");
    for (group, v) in &sol.kkt.stationarity {
        r.observe(*v, tol, || format!("column group {group}"));
    }
    for p in &book.thermal {
        for (k, (a, b)) in p.deviation.iter().zip(&p.deviation_from_rows).enumerate() {
            for t in 0..a.len() {
                r.observe((a[t] - b[t]).abs(), tol, || format!("{} deviation price k{k} t{t}", p.id));
            }
        }
    }
    r
}

/// Scenario energy price seen by a unit, derived from its own up re-dispatch column rather
/// than from the balance and flow rows.
fn price_from_redispatch(inst: &MarketInstance, sol: &DispatchSolution, thermal: Option<usize>, j: usize, t: usize, k: usize) -> f64 {
    match thermal {
        Some(i) => {
            inst.scenarios[k].probability * inst.thermal[i].cost_redispatch_up
                + sol.multiplier(RowKey::scen(M::EtaUpper, i, t, k))
                - sol.multiplier(RowKey::scen(M::EtaLower, i, t, k))
        }
        None => sol.multiplier(RowKey::scen(M::TauUpper, j, t, k)) - sol.multiplier(RowKey::scen(M::TauLower, j, t, k)),
    }
}

/// Scenario payment decomposition for one unit: returns `(Pi_U + Pi_D, pi_k * dx)`.
pub fn payment_decomposition_terms(
    inst: &MarketInstance,
    sol: &DispatchSolution,
    book: &PriceBook,
    unit: crate::lp::UnitRef,
    k: usize,
    t: usize,
) -> (f64, f64) {
    use crate::lp::UnitRef;
    let eps = inst.scenarios[k].probability;
    match unit {
        UnitRef::Thermal(i) => {
            let u = &inst.thermal[i];
            let p = &book.thermal[i];
            let out = inst.outage_mask()[k][i];
            let up = sol.scen(Q::ThermalRedispatchUp, i, t, k);
            let dn = sol.scen(Q::ThermalRedispatchDown, i, t, k);
            let g = sol.base(Q::ThermalEnergy, i, t);
            let chi_minus = if out { p.deviation[k][t] * g } else { 0.0 };
            let pi_u = p.reserve_up.scenario[k][t] * sol.base(Q::ThermalUp, i, t) + eps * u.cost_redispatch_up * up;
            let pi_d = p.reserve_down.scenario[k][t] * sol.base(Q::ThermalDown, i, t)
                - eps * u.cost_redispatch_down * dn
                - chi_minus;
            (pi_u + pi_d, p.energy.scenario[k][t] * (up - dn))
        }
        UnitRef::Renewable(j) => {
            let u = &inst.renewables[j];
            let p = &book.renewable[j];
            let up = sol.scen(Q::RenewableRedispatchUp, j, t, k);
            let dn = sol.scen(Q::RenewableRedispatchDown, j, t, k);
            let pi_u = p.reserve_up.scenario[k][t] * sol.base(Q::RenewableUp, j, t) + p.surplus[k][t] * u.surplus[k][t];
            let pi_d = p.reserve_down.scenario[k][t] * sol.base(Q::RenewableDown, j, t) - p.deficit[k][t] * u.deficit[k][t];
            (pi_u + pi_d, p.energy.scenario[k][t] * (up - dn))
        }
    }
}

/// Scenario payments of each unit equal its re-dispatch valued at the scenario price; at a
/// bus, renewable and thermal scenario prices differ exactly by the scenario RPS price.
pub fn check_theorem2(inst: &MarketInstance, sol: &DispatchSolution, book: &PriceBook, tol: f64) -> Vec<PropertyResult> {
    use crate::lp::UnitRef;
    let mut ident = PropertyResult::new("scenario payment decomposition");
    let mut premium = PropertyResult::new("green premium");
    let mut uniform = PropertyResult::new("same-bus scenario prices (nu=0)");
    for k in 0..inst.scenarios.len() {
        for t in 0..inst.periods {
            for i in 0..inst.thermal.len() {
                let (lhs, rhs) = payment_decomposition_terms(inst, sol, book, UnitRef::Thermal(i), k, t);
                ident.observe((lhs - rhs).abs(), tol, || format!("{} k{k} t{t}", inst.thermal[i].id));
            }
            for j in 0..inst.renewables.len() {
                let (lhs, rhs) = payment_decomposition_terms(inst, sol, book, UnitRef::Renewable(j), k, t);
                ident.observe((lhs - rhs).abs(), tol, || format!("{} k{k} t{t}", inst.renewables[j].id));
            }
            for (j, w) in inst.renewables.iter().enumerate() {
                let nu = book.nu_scenario[k][w.region];
                let pw = price_from_redispatch(inst, sol, None, j, t, k);
                for (i, g) in inst.thermal.iter().enumerate() {
                    if g.bus != w.bus {
                        continue;
                    }
                    let pg = price_from_redispatch(inst, sol, Some(i), j, t, k);
                    let gap = (pw - pg - nu).abs();
                    premium.observe(gap, tol, || format!("{}/{} k{k} t{t}", w.id, g.id));
                    if nu.abs() <= tol {
                        uniform.observe((pw - pg).abs(), tol, || format!("{}/{} k{k} t{t}", w.id, g.id));
                    }
                }
            }
        }
    }
    vec![ident, premium, uniform]
}

fn maximize(p: &mut LpProblem, opts: &SolverOptions) -> Result<(f64, Vec<f64>)> {
    for c in p.cost.iter_mut() {
        *c = -*c;
    }
    let mut o = opts.clone();
    o.duals = crate::solver::DualSelection::Vertex;
    let s = solve(p, &o)?;
    match s.status {
        Status::Optimal => Ok((-s.objective, s.x)),
        Status::Infeasible => Err(Error::Infeasible),
        Status::Unbounded => Err(Error::Unbounded),
    }
}

/// Profit-maximizing LP of thermal unit i over its private constraints at fixed prices.
/// Columns are (g_t, ru_t, rd_t) for each t. Returns the problem and the unit's profit
/// coefficients.
pub fn thermal_profit_lp(inst: &MarketInstance, book: &PriceBook, i: usize) -> LpProblem {
    let u = &inst.thermal[i];
    let p = &book.thermal[i];
    let nt = inst.periods;
    let mut lp = LpProblem::new();
    for t in 0..nt {
        let dev: f64 = p.deviation.iter().map(|row| row[t]).sum();
        lp.add_col(p.energy.total(t) - dev - u.cost_energy, f64::NEG_INFINITY, f64::INFINITY, "g");
        lp.add_col(p.reserve_up.total(t) - u.cost_reserve_up, f64::NEG_INFINITY, f64::INFINITY, "r_ug");
        lp.add_col(p.reserve_down.total(t) - u.cost_reserve_down, f64::NEG_INFINITY, f64::INFINITY, "r_dg");
    }
    let (g, ru, rd) = (|t: usize| 3 * t, |t: usize| 3 * t + 1, |t: usize| 3 * t + 2);
    for t in 0..nt {
        lp.add_row(vec![(g(t), 1.0), (rd(t), -1.0)], Sense::Ge, u.g_min, "capacity");
        lp.add_row(vec![(g(t), 1.0), (ru(t), 1.0)], Sense::Le, u.g_max, "capacity");
        lp.add_row(vec![(ru(t), 1.0)], Sense::Ge, 0.0, "reserve");
        lp.add_row(vec![(ru(t), 1.0)], Sense::Le, u.reserve_up_max, "reserve");
        lp.add_row(vec![(rd(t), 1.0)], Sense::Ge, 0.0, "reserve");
        lp.add_row(vec![(rd(t), 1.0)], Sense::Le, u.reserve_down_max, "reserve");
    }
    for t in 0..nt.saturating_sub(1) {
        lp.add_row(vec![(g(t + 1), 1.0), (g(t), -1.0), (rd(t), -1.0)], Sense::Ge, -u.ramp_down, "ramp");
        lp.add_row(vec![(g(t + 1), 1.0), (g(t), -1.0), (ru(t), 1.0)], Sense::Le, u.ramp_up, "ramp");
    }
    lp
}

/// Profit-maximizing LP of renewable j: columns (w_t, ru_t, rd_t).
pub fn renewable_profit_lp(inst: &MarketInstance, book: &PriceBook, j: usize, reserve_allowed: bool) -> LpProblem {
    let u = &inst.renewables[j];
    let p = &book.renewable[j];
    let cap = if reserve_allowed { f64::INFINITY } else { 0.0 };
    let mut lp = LpProblem::new();
    for t in 0..inst.periods {
        let w = lp.add_col(p.energy.total(t), f64::NEG_INFINITY, f64::INFINITY, "w");
        let ru = lp.add_col(p.reserve_up.total(t), f64::NEG_INFINITY, cap, "r_uw");
        let rd = lp.add_col(p.reserve_down.total(t), f64::NEG_INFINITY, cap, "r_dw");
        lp.add_row(vec![(ru, 1.0)], Sense::Ge, 0.0, "capacity");
        lp.add_row(vec![(w, 1.0), (ru, 1.0)], Sense::Le, u.available[t], "capacity");
        lp.add_row(vec![(rd, 1.0)], Sense::Ge, 0.0, "capacity");
        lp.add_row(vec![(rd, 1.0), (w, -1.0)], Sense::Le, 0.0, "capacity");
    }
    lp
}

/// Largest renewable output reachable with the unit's own reserves at zero and every
/// other unit's reserve held at the cleared value. `None` when no such dispatch exists.
pub fn renewable_max_output(inst: &MarketInstance, sol: &DispatchSolution, j: usize, opts: &SolverOptions) -> Result<Option<Vec<f64>>> {
    let model = &sol.model;
    let mut p = model.problem.clone();
    for c in p.cost.iter_mut() {
        *c = 0.0;
    }
    for (c, key) in model.vars.keys().iter().enumerate() {
        let reserve = matches!(key.quantity, Q::ThermalUp | Q::ThermalDown | Q::RenewableUp | Q::RenewableDown);
        if !reserve {
            continue;
        }
        let own = matches!(key.quantity, Q::RenewableUp | Q::RenewableDown) && key.entity == j;
        let v = if own { 0.0 } else { sol.lp.x[c] };
        p.lower[c] = v;
        p.upper[c] = v;
    }
    let cols: Vec<usize> = (0..inst.periods)
        .map(|t| model.col(VarKey::base(Q::RenewableEnergy, j, t)).expect("renewable column"))
        .collect();
    for &c in &cols {
        p.cost[c] = 1.0;
    }
    match maximize(&mut p, opts) {
        Ok((_, x)) => Ok(Some(cols.iter().map(|&c| x[c]).collect())),
        Err(Error::Infeasible) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Each unit's cleared quantities maximize its own profit at the cleared prices, and a
/// renewable earns at least as much as it would by producing as much as possible.
pub fn check_individual_rationality(
    inst: &MarketInstance,
    sol: &DispatchSolution,
    book: &PriceBook,
    opts: &SolverOptions,
    tol: f64,
) -> Result<Vec<PropertyResult>> {
    let mut own = PropertyResult::new("individual profit optimality");
    let mut max_out = PropertyResult::new("RES reserve beats max output");
    let rel = |gap: f64, v: f64| gap / v.abs().max(1.0);
    for i in 0..inst.thermal.len() {
        let mut lp = thermal_profit_lp(inst, book, i);
        let at: Vec<f64> = (0..inst.periods)
            .flat_map(|t| [Q::ThermalEnergy, Q::ThermalUp, Q::ThermalDown].map(|q| sol.base(q, i, t)))
            .collect();
        let attained = lp.objective(&at);
        let (best, _) = maximize(&mut lp, opts)?;
        own.observe(rel(best - attained, best), tol, || format!("{} best {best:.6} cleared {attained:.6}", inst.thermal[i].id));
    }
    for (j, u) in inst.renewables.iter().enumerate() {
        let mut lp = renewable_profit_lp(inst, book, j, sol.model.options.renewable_reserve);
        let at: Vec<f64> = (0..inst.periods)
            .flat_map(|t| [Q::RenewableEnergy, Q::RenewableUp, Q::RenewableDown].map(|q| sol.base(q, j, t)))
            .collect();
        let attained = lp.objective(&at);
        let (best, _) = maximize(&mut lp, opts)?;
        own.observe(rel(best - attained, best), tol, || format!("{} best {best:.6} cleared {attained:.6}", u.id));

        // any reachable output lies in [0, W], so this bound is checked first and the
        // market re-solve only runs when it is not already beaten
        let p = &book.renewable[j];
        let bound: f64 = (0..inst.periods).map(|t| p.energy.total(t).max(0.0) * u.available[t]).sum();
        let alt = if bound - attained <= tol * bound.abs().max(1.0) {
            bound
        } else {
            let w_max = renewable_max_output(inst, sol, j, opts)?.unwrap_or_else(|| u.available.clone());
            (0..inst.periods).map(|t| p.energy.total(t) * w_max[t]).sum()
        };
        max_out.observe(rel(alt - attained, alt), tol, || {
            format!("{} cleared {attained:.6} vs max-output {alt:.6}", u.id)
        });
    }
    Ok(vec![own, max_out])
}

/// Closed-form capacity value of thermal unit i: the right-hand sides of its private
/// constraints weighted by their multipliers.
pub fn thermal_capacity_value(inst: &MarketInstance, sol: &DispatchSolution, i: usize) -> f64 {
    let u = &inst.thermal[i];
    let mut v = 0.0;
    for t in 0..inst.periods {
        v += sol.multiplier(RowKey::base(M::CapacityUpper, i, t)) * u.g_max
            - sol.multiplier(RowKey::base(M::CapacityLower, i, t)) * u.g_min
            + sol.multiplier(RowKey::base(M::EllUpUpper, i, t)) * u.reserve_up_max
            + sol.multiplier(RowKey::base(M::EllDownUpper, i, t)) * u.reserve_down_max
            + sol.multiplier(RowKey::base(M::GammaUp, i, t)) * u.ramp_up
            + sol.multiplier(RowKey::base(M::GammaDown, i, t)) * u.ramp_down;
    }
    v
}

/// Non-negative realized profit for every unit and realization, and the closed forms of
/// thermal and renewable profit. Thermal units held at a binding minimum output are
/// counted as skipped for the sign check; their closed form is still verified.
pub fn check_cost_recovery(
    inst: &MarketInstance,
    sol: &DispatchSolution,
    book: &PriceBook,
    st: &SettlementStatement,
    tol: f64,
) -> Vec<PropertyResult> {
    let mut nonneg = PropertyResult::new("cost recovery");
    let mut closed = PropertyResult::new("profit closed forms");
    for (i, g) in st.thermal.iter().enumerate() {
        let cap = thermal_capacity_value(inst, sol, i);
        // a binding minimum-output row is the one term that can make the closed form negative
        let must_run: f64 = (0..inst.periods)
            .map(|t| sol.multiplier(RowKey::base(M::CapacityLower, i, t)) * inst.thermal[i].g_min)
            .sum();
        let premise = must_run <= tol;
        if premise {
            nonneg.observe(-g.base_profit(), tol, || format!("{} base", g.id));
        } else {
            nonneg.skipped += 1 + st.scenario_ids.len();
        }
        for k in 0..st.scenario_ids.len() {
            let profit = g.realized_profit(k);
            if premise {
                nonneg.observe(-profit, tol, || format!("{} {}", g.id, st.scenario_ids[k]));
            }
            closed.observe((profit - cap).abs(), tol * cap.abs().max(1.0), || {
                format!("{} {} profit {profit:.6} vs {cap:.6}", g.id, st.scenario_ids[k])
            });
        }
        if st.scenario_ids.is_empty() {
            closed.observe((g.base_profit() - cap).abs(), tol * cap.abs().max(1.0), || format!("{} base", g.id));
        }
    }
    // the renewable bound rests on the unit choosing its own reserve, which Case B forbids
    let res_premise = sol.model.options.renewable_reserve;
    for (j, w) in st.renewable.iter().enumerate() {
        if res_premise {
            nonneg.observe(-w.total(), tol, || w.id.clone());
        } else {
            nonneg.skipped += 1;
        }
        let u = &inst.renewables[j];
        let p = &book.renewable[j];
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for t in 0..inst.periods {
            lhs += p.energy.total(t) * sol.base(Q::RenewableEnergy, j, t)
                + p.reserve_up.total(t) * sol.base(Q::RenewableUp, j, t)
                + p.reserve_down.total(t) * sol.base(Q::RenewableDown, j, t);
            rhs += sol.multiplier(RowKey::base(M::IotaUpUpper, j, t)) * u.available[t];
        }
        closed.observe((lhs - rhs).abs(), tol * rhs.abs().max(1.0), || format!("{} {lhs:.6} vs {rhs:.6}", u.id));
    }
    vec![nonneg, closed]
}

/// Congestion rent of the base case (`None`) or one scenario.
fn congestion_rent(inst: &MarketInstance, sol: &DispatchSolution, k: Option<usize>) -> f64 {
    let (up, lo) = match k {
        None => (M::MuUpper, M::MuLower),
        Some(_) => (M::ScenarioMuUpper, M::ScenarioMuLower),
    };
    let mut v = 0.0;
    for (l, line) in inst.network.lines.iter().enumerate() {
        for t in 0..inst.periods {
            let key = |m| RowKey { multiplier: m, entity: l, period: t, scenario: k };
            v += line.capacity * (sol.multiplier(key(up)) + sol.multiplier(key(lo)));
        }
    }
    v
}

/// Imports minus exports of region m at period t.
fn net_import(inst: &MarketInstance, sol: &DispatchSolution, m: usize, t: usize) -> (f64, f64) {
    let mut imp = 0.0;
    let mut exp = 0.0;
    for (p, &(from, to)) in inst.trade_pairs().iter().enumerate() {
        let e = sol.base(Q::Trade, p, t);
        if to == m {
            imp += e;
        }
        if from == m {
            exp += e;
        }
    }
    (imp, exp)
}

/// Merchandise surplus equals congestion rent in the base case, in each scenario and in
/// total, after the inter-regional credit transfers.
pub fn check_revenue_adequacy(
    inst: &MarketInstance,
    sol: &DispatchSolution,
    book: &PriceBook,
    st: &SettlementStatement,
    tol: f64,
) -> PropertyResult {
    let mut r = PropertyResult::new("revenue adequacy");
    let nt = inst.periods;
    let nm = inst.regions.len();
    let mask = inst.outage_mask();
    let rel = |v: f64| tol * v.abs().max(1.0);

    // base case
    let mut surplus = 0.0;
    for (l, d) in inst.loads.iter().enumerate() {
        surplus += (0..nt).map(|t| book.load[l].energy.base[t] * d.demand[t]).sum::<f64>();
    }
    for i in 0..inst.thermal.len() {
        surplus -= (0..nt).map(|t| book.thermal[i].energy.base[t] * sol.base(Q::ThermalEnergy, i, t)).sum::<f64>();
    }
    for j in 0..inst.renewables.len() {
        surplus -= (0..nt).map(|t| book.renewable[j].energy.base[t] * sol.base(Q::RenewableEnergy, j, t)).sum::<f64>();
    }
    let mut expected = congestion_rent(inst, sol, None);
    for m in 0..nm {
        for t in 0..nt {
            let (imp, exp) = net_import(inst, sol, m, t);
            expected += book.nu_base[m] * (imp - exp) - book.kappa[m][t] * exp;
        }
    }
    r.observe((surplus - expected).abs(), rel(expected), || format!("base: surplus {surplus:.6} vs {expected:.6}"));

    // scenarios
    for k in 0..inst.scenarios.len() {
        let eps = inst.scenarios[k].probability;
        let mut surplus = 0.0;
        for (l, d) in inst.loads.iter().enumerate() {
            surplus += (0..nt).map(|t| book.load[l].energy.scenario[k][t] * (d.demand[t] + d.deviation[k][t])).sum::<f64>();
        }
        for (i, u) in inst.thermal.iter().enumerate() {
            let p = &book.thermal[i];
            for t in 0..nt {
                let g = sol.base(Q::ThermalEnergy, i, t);
                let mut pay = p.energy.scenario[k][t] * g
                    + p.reserve_up.scenario[k][t] * sol.base(Q::ThermalUp, i, t)
                    + p.reserve_down.scenario[k][t] * sol.base(Q::ThermalDown, i, t)
                    + eps
                        * (u.cost_redispatch_up * sol.scen(Q::ThermalRedispatchUp, i, t, k)
                            - u.cost_redispatch_down * sol.scen(Q::ThermalRedispatchDown, i, t, k));
                if mask[k][i] {
                    pay -= p.deviation[k][t] * g;
                }
                surplus -= pay;
            }
        }
        for (j, u) in inst.renewables.iter().enumerate() {
            let p = &book.renewable[j];
            for t in 0..nt {
                surplus -= p.energy.scenario[k][t] * sol.base(Q::RenewableEnergy, j, t)
                    + p.reserve_up.scenario[k][t] * sol.base(Q::RenewableUp, j, t)
                    + p.reserve_down.scenario[k][t] * sol.base(Q::RenewableDown, j, t)
                    + p.surplus[k][t] * u.surplus[k][t]
                    - p.deficit[k][t] * u.deficit[k][t];
            }
        }
        let mut expected = congestion_rent(inst, sol, Some(k));
        for m in 0..nm {
            let net: f64 = (0..nt).map(|t| {
                let (imp, exp) = net_import(inst, sol, m, t);
                imp - exp
            }).sum();
            expected += book.nu_scenario[k][m] * net;
        }
        r.observe((surplus - expected).abs(), rel(expected), || {
            format!("{}: surplus {surplus:.6} vs {expected:.6}", inst.scenarios[k].id)
        });
    }

    // total
    r.observe((st.merchandise_surplus - st.congestion_rent).abs(), rel(st.congestion_rent), || {
        format!("total: MS {:.6} vs CR {:.6}", st.merchandise_surplus, st.congestion_rent)
    });
    r.observe(-st.merchandise_surplus, tol, || format!("MS {:.6} negative", st.merchandise_surplus));
    r
}

/// Deviations that lean against the system imbalance are not charged. Checked per period
/// where scenario k has no congested line and no binding RPS row. In a shortage the
/// charge must be zero; in a surplus, curtailing thermal output earns the system the
/// re-dispatch payback, so a charge of up to `eps_k * max C_down` per MW is admissible.
pub fn check_deviation_signs(inst: &MarketInstance, sol: &DispatchSolution, book: &PriceBook, tol: f64) -> PropertyResult {
    let mut r = PropertyResult::new("deviation credit signs");
    let energy: Vec<Vec<f64>> = (0..inst.thermal.len())
        .map(|i| (0..inst.periods).map(|t| sol.base(Q::ThermalEnergy, i, t)).collect())
        .collect();
    let payback = inst.thermal.iter().map(|u| u.cost_redispatch_down).fold(0.0, f64::max);
    for k in 0..inst.scenarios.len() {
        let eps = inst.scenarios[k].probability;
        let rps_binding = book.nu_scenario[k].iter().any(|v| v.abs() > tol);
        for t in 0..inst.periods {
            let congested = (0..inst.network.lines.len()).any(|l| {
                sol.multiplier(RowKey::scen(M::ScenarioMuUpper, l, t, k)) > tol
                    || sol.multiplier(RowKey::scen(M::ScenarioMuLower, l, t, k)) > tol
            });
            let imbalance = inst.net_imbalance(k, t, &energy);
            if congested || rps_binding || imbalance.abs() <= tol {
                r.skipped += 1;
                continue;
            }
            let allowance = if imbalance < 0.0 { eps * payback } else { 0.0 };
            for (j, u) in inst.renewables.iter().enumerate() {
                let p = &book.renewable[j];
                let own = u.deficit[k][t] - u.surplus[k][t];
                if own * imbalance < 0.0 {
                    let chi = p.surplus[k][t] * u.surplus[k][t] - p.deficit[k][t] * u.deficit[k][t];
                    r.observe(-chi - allowance * own.abs(), tol, || format!("{} {} t{t}", u.id, inst.scenarios[k].id));
                }
            }
            for (l, d) in inst.loads.iter().enumerate() {
                let own = d.deviation[k][t];
                if own * imbalance < 0.0 {
                    // for a load the deviation term is a payment, so a credit is a negative value
                    let chi = book.load[l].energy.scenario[k][t] * own;
                    r.observe(chi - allowance * own.abs(), tol, || format!("{} {} t{t}", d.id, inst.scenarios[k].id));
                }
            }
        }
    }
    r
}

/// Runs every property check on a solved, priced and settled instance.
pub fn verify_all(
    inst: &MarketInstance,
    sol: &DispatchSolution,
    book: &PriceBook,
    st: &SettlementStatement,
    opts: &SolverOptions,
    tol: f64,
) -> Result<PropertyReport> {
    let mut kkt = PropertyResult::new("KKT");
    kkt.observe(sol.kkt.worst(), tol, || "worst KKT residual".to_string());
    let mut results = vec![
        kkt,
        check_theorem1(book, inst, tol),
        check_corollary1(book, inst, tol),
        check_reserve_exclusion(book, tol),
        check_stationarity(sol, book, tol),
    ];
    results.extend(check_theorem2(inst, sol, book, tol));
    results.extend(check_individual_rationality(inst, sol, book, opts, tol)?);
    results.extend(check_cost_recovery(inst, sol, book, st, tol));
    results.push(check_revenue_adequacy(inst, sol, book, st, tol));
    results.push(check_deviation_signs(inst, sol, book, tol));
    Ok(PropertyReport { tol, results })
}
