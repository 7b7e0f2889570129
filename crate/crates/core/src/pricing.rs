//! Energy, reserve and deviation prices read off the optimal duals.

use std::io::Write;

use serde::Serialize;

use crate::dispatch::DispatchSolution;
use crate::error::{Error, Result};
use crate::instance::MarketInstance;
use crate::lp::{Multiplier as M, RowKey};

/// A price per period, split into a base-case part and one fractional part per scenario.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PriceSeries {
    pub base: Vec<f64>,
    /// `[k][t]`
    pub scenario: Vec<Vec<f64>>,
}

impl PriceSeries {
    fn zeros(nt: usize, nk: usize) -> Self {
        PriceSeries { base: vec![0.0; nt], scenario: vec![vec![0.0; nt]; nk] }
    }

    pub fn total(&self, t: usize) -> f64 {
        self.base[t] + self.scenario.iter().map(|s| s[t]).sum::<f64>()
    }

    pub fn totals(&self) -> Vec<f64> {
        (0..self.base.len()).map(|t| self.total(t)).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ThermalPrices {
    pub id: String,
    pub energy: PriceSeries,
    pub reserve_up: PriceSeries,
    pub reserve_down: PriceSeries,
    /// Downward deviation price `[k][t]` in scenarios where the unit is out; 0 elsewhere.
    pub deviation: Vec<Vec<f64>>,
    /// The same price recomputed from the outage row multipliers.
    pub deviation_from_rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RenewablePrices {
    pub id: String,
    pub energy: PriceSeries,
    pub reserve_up: PriceSeries,
    pub reserve_down: PriceSeries,
    /// Price paid per MW of surplus `[k][t]`.
    pub surplus: Vec<Vec<f64>>,
    /// Price charged per MW of deficit `[k][t]`.
    pub deficit: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LoadPrices {
    pub id: String,
    /// The scenario parts double as the deviation prices.
    pub energy: PriceSeries,
}

#[derive(Debug, Clone, Serialize)]
pub struct PriceBook {
    pub periods: usize,
    pub scenario_ids: Vec<String>,
    pub thermal: Vec<ThermalPrices>,
    pub renewable: Vec<RenewablePrices>,
    pub load: Vec<LoadPrices>,
    /// Regional RPS multiplier, base case.
    pub nu_base: Vec<f64>,
    /// `[k][m]`
    pub nu_scenario: Vec<Vec<f64>>,
    /// Export-cap multiplier `[m][t]`.
    pub kappa: Vec<Vec<f64>>,
}

struct Duals<'a> {
    d: &'a DispatchSolution,
    inst: &'a MarketInstance,
}

impl Duals<'_> {
    fn required(&self, key: RowKey) -> Result<f64> {
        match self.d.model.row(key) {
            Some(_) => Ok(self.d.multiplier(key)),
            None => Err(Error::MissingDual(key.to_string())),
        }
    }

    /// Nodal energy component `lambda - S'mu` for the base case (`k = None`) or scenario k.
    fn nodal(&self, bus: usize, t: usize, k: Option<usize>) -> Result<f64> {
        let (lam, up, lo) = match k {
            None => (M::Lambda, M::MuUpper, M::MuLower),
            Some(_) => (M::ScenarioLambda, M::ScenarioMuUpper, M::ScenarioMuLower),
        };
        let key = |m: M, e: usize| RowKey { multiplier: m, entity: e, period: t, scenario: k };
        let mut v = self.required(key(lam, 0))?;
        for l in 0..self.inst.network.lines.len() {
            let s = self.inst.network.shift(l, bus);
            if s == 0.0 {
                continue;
            }
            let mu_up = self.required(key(up, l))?;
            // the reverse direction is absent when one-sided limits were requested
            let mu_lo = self.d.multiplier(key(lo, l));
            v -= s * (mu_up - mu_lo);
        }
        Ok(v)
    }
}

/// Computes every price of the instance from a solved dispatch.
pub fn price_book(inst: &MarketInstance, sol: &DispatchSolution) -> Result<PriceBook> {
    let q = Duals { d: sol, inst };
    let nt = inst.periods;
    let nk = inst.scenarios.len();
    let nm = inst.regions.len();
    let mask = inst.outage_mask();

    let nu_base: Vec<f64> = (0..nm).map(|m| q.required(RowKey::base(M::Nu, m, 0))).collect::<Result<_>>()?;
    let mut nu_scenario = vec![vec![0.0; nm]; nk];
    for (k, row) in nu_scenario.iter_mut().enumerate() {
        for (m, v) in row.iter_mut().enumerate() {
            *v = q.required(RowKey::scen(M::ScenarioNu, m, 0, k))?;
        }
    }
    let kappa: Vec<Vec<f64>> = (0..nm)
        .map(|m| (0..nt).map(|t| sol.multiplier(RowKey::base(M::ExportCap, m, t))).collect())
        .collect();

    // nodal components per bus, computed once
    let nb = inst.network.bus_count;
    let mut node_base = vec![vec![0.0; nt]; nb];
    let mut node_scen = vec![vec![vec![0.0; nt]; nk]; nb];
    for b in 0..nb {
        for t in 0..nt {
            node_base[b][t] = q.nodal(b, t, None)?;
            for k in 0..nk {
                node_scen[b][k][t] = q.nodal(b, t, Some(k))?;
            }
        }
    }

    let mut thermal = Vec::with_capacity(inst.thermal.len());
    for (i, u) in inst.thermal.iter().enumerate() {
        let energy = PriceSeries { base: node_base[u.bus].clone(), scenario: node_scen[u.bus].clone() };
        let mut up = PriceSeries::zeros(nt, nk);
        let mut down = PriceSeries::zeros(nt, nk);
        let mut deviation = vec![vec![0.0; nt]; nk];
        let mut from_rows = vec![vec![0.0; nt]; nk];
        for k in 0..nk {
            let eps = inst.scenarios[k].probability;
            for t in 0..nt {
                if mask[k][i] {
                    deviation[k][t] = energy.scenario[k][t] - eps * u.cost_redispatch_down;
                    from_rows[k][t] = q.required(RowKey::scen(M::BetaLower, i, t, k))?
                        - q.required(RowKey::scen(M::BetaUpper, i, t, k))?;
                } else {
                    up.scenario[k][t] = q.required(RowKey::scen(M::EtaUpper, i, t, k))?;
                    down.scenario[k][t] = q.required(RowKey::scen(M::BetaUpper, i, t, k))?;
                }
            }
        }
        thermal.push(ThermalPrices {
            id: u.id.clone(),
            energy,
            reserve_up: up,
            reserve_down: down,
            deviation,
            deviation_from_rows: from_rows,
        });
    }

    let mut renewable = Vec::with_capacity(inst.renewables.len());
    for (j, u) in inst.renewables.iter().enumerate() {
        let m = u.region;
        let mut energy = PriceSeries::zeros(nt, nk);
        let mut up = PriceSeries::zeros(nt, nk);
        let mut down = PriceSeries::zeros(nt, nk);
        for t in 0..nt {
            energy.base[t] = node_base[u.bus][t] + nu_base[m] + kappa[m][t];
            for k in 0..nk {
                energy.scenario[k][t] = node_scen[u.bus][k][t] + nu_scenario[k][m];
                up.scenario[k][t] = q.required(RowKey::scen(M::TauUpper, j, t, k))?;
                down.scenario[k][t] = q.required(RowKey::scen(M::ZetaUpper, j, t, k))?;
            }
        }
        let surplus = up.scenario.clone();
        let deficit = energy.scenario.clone();
        renewable.push(RenewablePrices {
            id: u.id.clone(),
            energy,
            reserve_up: up,
            reserve_down: down,
            surplus,
            deficit,
        });
    }

    let mut load = Vec::with_capacity(inst.loads.len());
    for (l, d) in inst.loads.iter().enumerate() {
        let m = d.region;
        let mut energy = PriceSeries::zeros(nt, nk);
        for t in 0..nt {
            energy.base[t] = node_base[d.bus][t] + inst.load_rps_base(l) * nu_base[m];
            for k in 0..nk {
                energy.scenario[k][t] = node_scen[d.bus][k][t] + inst.load_rps(l, k) * nu_scenario[k][m];
            }
        }
        load.push(LoadPrices { id: d.id.clone(), energy });
    }

    Ok(PriceBook {
        periods: nt,
        scenario_ids: inst.scenarios.iter().map(|s| s.id.clone()).collect(),
        thermal,
        renewable,
        load,
        nu_base,
        nu_scenario,
        kappa,
    })
}

impl PriceBook {
    pub fn thermal(&self, id: &str) -> Option<&ThermalPrices> {
        self.thermal.iter().find(|p| p.id == id)
    }

    pub fn renewable(&self, id: &str) -> Option<&RenewablePrices> {
        self.renewable.iter().find(|p| p.id == id)
    }

    pub fn load(&self, id: &str) -> Option<&LoadPrices> {
        self.load.iter().find(|p| p.id == id)
    }

    /// Largest gap between the two derivations of the thermal deviation price.
    pub fn deviation_mismatch(&self) -> f64 {
        self.thermal
            .iter()
            .flat_map(|p| {
                p.deviation.iter().zip(&p.deviation_from_rows).flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            })
            .fold(0.0, f64::max)
    }

    /// Long-format rows `(entity, period, scenario, price_kind, value)`. The scenario column
    /// holds `total`, `base` or a scenario id.
    pub fn records(&self) -> Vec<PriceRecord> {
        let mut out = Vec::new();
        let mut series = |entity: &str, kind: &'static str, s: &PriceSeries| {
            for t in 0..self.periods {
                out.push(PriceRecord::new(entity, t, "total", kind, s.total(t)));
                out.push(PriceRecord::new(entity, t, "base", kind, s.base[t]));
                for (k, id) in self.scenario_ids.iter().enumerate() {
                    out.push(PriceRecord::new(entity, t, id, kind, s.scenario[k][t]));
                }
            }
        };
        for p in &self.thermal {
            series(&p.id, "energy", &p.energy);
            series(&p.id, "reserve_up", &p.reserve_up);
            series(&p.id, "reserve_down", &p.reserve_down);
        }
        for p in &self.renewable {
            series(&p.id, "energy", &p.energy);
            series(&p.id, "reserve_up", &p.reserve_up);
            series(&p.id, "reserve_down", &p.reserve_down);
        }
        for p in &self.load {
            series(&p.id, "energy", &p.energy);
        }
        let mut grid = |entity: &str, kind: &'static str, g: &[Vec<f64>]| {
            for (k, id) in self.scenario_ids.iter().enumerate() {
                for t in 0..self.periods {
                    out.push(PriceRecord::new(entity, t, id, kind, g[k][t]));
                }
            }
        };
        for p in &self.thermal {
            grid(&p.id, "deviation_down", &p.deviation);
        }
        for p in &self.renewable {
            grid(&p.id, "deviation_surplus", &p.surplus);
            grid(&p.id, "deviation_deficit", &p.deficit);
        }
        for p in &self.load {
            grid(&p.id, "deviation", &p.energy.scenario);
        }
        out
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in self.records() {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceRecord {
    pub entity: String,
    pub period: usize,
    pub scenario: String,
    pub price_kind: &'static str,
    pub value: f64,
}

impl PriceRecord {
    fn new(entity: &str, period: usize, scenario: &str, kind: &'static str, value: f64) -> Self {
        PriceRecord { entity: entity.to_string(), period, scenario: scenario.to_string(), price_kind: kind, value }
    }
}
