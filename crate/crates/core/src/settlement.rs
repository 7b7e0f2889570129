//! Ex-ante energy, reserve and deviation credits, ex-post re-dispatch payments, and the
//! resulting merchandise surplus.

use std::io::Write;

use serde::Serialize;

use crate::dispatch::DispatchSolution;
use crate::error::Result;
use crate::instance::MarketInstance;
use crate::lp::{Multiplier as M, Quantity as Q, RowKey};
use crate::pricing::PriceBook;

#[derive(Debug, Clone, Serialize)]
pub struct ThermalStatement {
    pub id: String,
    pub energy: f64,
    pub reserve: f64,
    /// Deviation payment; only outaged units have one.
    pub deviation: f64,
    /// Deviation payment attributed to each scenario.
    pub deviation_by_scenario: Vec<f64>,
    /// Re-dispatch payment `D_k` if scenario k is realized.
    pub redispatch: Vec<f64>,
    /// Total bid-in cost `Xi_k` if scenario k is realized.
    pub cost: Vec<f64>,
    /// Energy and reserve bid costs only.
    pub ex_ante_cost: f64,
    pub expected: f64,
}

impl ThermalStatement {
    pub fn ex_ante(&self) -> f64 {
        self.energy + self.reserve + self.deviation
    }

    /// Payment `Gamma_k` when scenario k is realized.
    pub fn realized(&self, k: usize) -> f64 {
        self.ex_ante() + self.redispatch[k]
    }

    pub fn realized_profit(&self, k: usize) -> f64 {
        self.realized(k) - self.cost[k]
    }

    /// Profit if the base case is realized (no re-dispatch).
    pub fn base_profit(&self) -> f64 {
        self.ex_ante() - self.ex_ante_cost
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RenewableStatement {
    pub id: String,
    pub energy: f64,
    pub reserve: f64,
    pub deviation: f64,
    /// Surplus credit `chi+` and deficit charge `chi-` per scenario; `deviation` is the sum
    /// of `surplus_credit - deficit_charge`.
    pub surplus_credit: Vec<f64>,
    pub deficit_charge: Vec<f64>,
}

impl RenewableStatement {
    pub fn total(&self) -> f64 {
        self.energy + self.reserve + self.deviation
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LoadStatement {
    pub id: String,
    pub energy: f64,
    pub deviation: f64,
    pub deviation_by_scenario: Vec<f64>,
}

impl LoadStatement {
    pub fn total(&self) -> f64 {
        self.energy + self.deviation
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SettlementStatement {
    pub scenario_ids: Vec<String>,
    pub thermal: Vec<ThermalStatement>,
    pub renewable: Vec<RenewableStatement>,
    pub load: Vec<LoadStatement>,
    pub merchandise_surplus: f64,
    pub congestion_rent: f64,
}

/// Settles every participant at the prices in `book`.
pub fn settle(inst: &MarketInstance, sol: &DispatchSolution, book: &PriceBook) -> SettlementStatement {
    let nt = inst.periods;
    let nk = inst.scenarios.len();
    let mask = inst.outage_mask();

    let thermal = inst
        .thermal
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let p = &book.thermal[i];
            let mut energy = 0.0;
            let mut reserve = 0.0;
            let mut ex_ante_cost = 0.0;
            let mut by_k = vec![0.0; nk];
            let mut redispatch = vec![0.0; nk];
            for t in 0..nt {
                let g = sol.base(Q::ThermalEnergy, i, t);
                let ru = sol.base(Q::ThermalUp, i, t);
                let rd = sol.base(Q::ThermalDown, i, t);
                energy += p.energy.total(t) * g;
                reserve += p.reserve_up.total(t) * ru + p.reserve_down.total(t) * rd;
                ex_ante_cost += u.cost_energy * g + u.cost_reserve_up * ru + u.cost_reserve_down * rd;
                for k in 0..nk {
                    if mask[k][i] {
                        by_k[k] -= p.deviation[k][t] * g;
                    }
                    redispatch[k] += u.cost_redispatch_up * sol.scen(Q::ThermalRedispatchUp, i, t, k)
                        - u.cost_redispatch_down * sol.scen(Q::ThermalRedispatchDown, i, t, k);
                }
            }
            let deviation = by_k.iter().sum::<f64>();
            let expected = energy
                + reserve
                + deviation
                + inst.scenarios.iter().zip(&redispatch).map(|(s, d)| s.probability * d).sum::<f64>();
            ThermalStatement {
                id: u.id.clone(),
                energy,
                reserve,
                deviation,
                deviation_by_scenario: by_k,
                cost: redispatch.iter().map(|d| ex_ante_cost + d).collect(),
                redispatch,
                ex_ante_cost,
                expected,
            }
        })
        .collect();

    let renewable = inst
        .renewables
        .iter()
        .enumerate()
        .map(|(j, u)| {
            let p = &book.renewable[j];
            let mut energy = 0.0;
            let mut reserve = 0.0;
            let mut plus = vec![0.0; nk];
            let mut minus = vec![0.0; nk];
            for t in 0..nt {
                energy += p.energy.total(t) * sol.base(Q::RenewableEnergy, j, t);
                reserve += p.reserve_up.total(t) * sol.base(Q::RenewableUp, j, t)
                    + p.reserve_down.total(t) * sol.base(Q::RenewableDown, j, t);
                for k in 0..nk {
                    plus[k] += p.surplus[k][t] * u.surplus[k][t];
                    minus[k] += p.deficit[k][t] * u.deficit[k][t];
                }
            }
            let deviation = plus.iter().sum::<f64>() - minus.iter().sum::<f64>();
            RenewableStatement {
                id: u.id.clone(),
                energy,
                reserve,
                deviation,
                surplus_credit: plus,
                deficit_charge: minus,
            }
        })
        .collect();

    let load = inst
        .loads
        .iter()
        .enumerate()
        .map(|(l, d)| {
            let p = &book.load[l];
            let mut energy = 0.0;
            let mut by_k = vec![0.0; nk];
            for t in 0..nt {
                energy += p.energy.total(t) * d.demand[t];
                for k in 0..nk {
                    by_k[k] += p.energy.scenario[k][t] * d.deviation[k][t];
                }
            }
            LoadStatement { id: d.id.clone(), energy, deviation: by_k.iter().sum(), deviation_by_scenario: by_k }
        })
        .collect();

    let mut st = SettlementStatement {
        scenario_ids: inst.scenarios.iter().map(|s| s.id.clone()).collect(),
        thermal,
        renewable,
        load,
        merchandise_surplus: 0.0,
        congestion_rent: 0.0,
    };
    let (ms, cr) = merchandise_surplus(inst, &st, sol);
    st.merchandise_surplus = ms;
    st.congestion_rent = cr;
    st
}

/// Load payments minus expected generator payments, and the congestion rent
/// `sum f (mu+ + mu-)` over the base case and all scenarios.
pub fn merchandise_surplus(inst: &MarketInstance, st: &SettlementStatement, sol: &DispatchSolution) -> (f64, f64) {
    let paid: f64 = st.load.iter().map(|l| l.total()).sum();
    let received: f64 =
        st.thermal.iter().map(|g| g.expected).sum::<f64>() + st.renewable.iter().map(|w| w.total()).sum::<f64>();
    let mut rent = 0.0;
    for (l, line) in inst.network.lines.iter().enumerate() {
        for t in 0..inst.periods {
            let mut mu = sol.multiplier(RowKey::base(M::MuUpper, l, t)) + sol.multiplier(RowKey::base(M::MuLower, l, t));
            for k in 0..inst.scenarios.len() {
                mu += sol.multiplier(RowKey::scen(M::ScenarioMuUpper, l, t, k))
                    + sol.multiplier(RowKey::scen(M::ScenarioMuLower, l, t, k));
            }
            rent += line.capacity * mu;
        }
    }
    (paid - received, rent)
}

impl SettlementStatement {
    pub fn thermal(&self, id: &str) -> Option<&ThermalStatement> {
        self.thermal.iter().find(|s| s.id == id)
    }

    pub fn renewable(&self, id: &str) -> Option<&RenewableStatement> {
        self.renewable.iter().find(|s| s.id == id)
    }

    pub fn load(&self, id: &str) -> Option<&LoadStatement> {
        self.load.iter().find(|s| s.id == id)
    }

    /// One row: expected thermal payments, RES payments, load payments, congestion rent.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = Vec::new();
        let mut row: Vec<String> = Vec::new();
        for g in &self.thermal {
            header.push(g.id.clone());
            row.push(g.expected.to_string());
        }
        for r in &self.renewable {
            header.push(r.id.clone());
            row.push(r.total().to_string());
        }
        for l in &self.load {
            header.push(l.id.clone());
            row.push(l.total().to_string());
        }
        header.push("CR".into());
        row.push(self.congestion_rent.to_string());
        w.write_record(&header)?;
        w.write_record(&row)?;
        w.flush()?;
        Ok(())
    }

    /// Realized profit of every producer, one row per realization (base first).
    pub fn write_profit_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["scenario".to_string()];
        header.extend(self.thermal.iter().map(|g| g.id.clone()));
        header.extend(self.renewable.iter().map(|r| r.id.clone()));
        w.write_record(&header)?;
        let mut base = vec!["base".to_string()];
        base.extend(self.thermal.iter().map(|g| g.base_profit().to_string()));
        base.extend(self.renewable.iter().map(|r| r.total().to_string()));
        w.write_record(&base)?;
        for (k, id) in self.scenario_ids.iter().enumerate() {
            let mut row = vec![id.clone()];
            row.extend(self.thermal.iter().map(|g| g.realized_profit(k).to_string()));
            row.extend(self.renewable.iter().map(|r| r.total().to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}
