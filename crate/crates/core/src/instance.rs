//! Market instance: network, resources, loads, regions and scenarios.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    /// Thermal limit in MW, applied in both directions unless the builder is told otherwise.
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub bus_count: usize,
    pub lines: Vec<Line>,
    /// Lines × buses. Row `l` gives the flow on line `l` per MW injected at each bus.
    pub shift_factors: Vec<Vec<f64>>,
}

impl Network {
    pub fn single_bus() -> Self {
        Network { bus_count: 1, lines: Vec::new(), shift_factors: Vec::new() }
    }

    pub fn shift(&self, line: usize, bus: usize) -> f64 {
        self.shift_factors[line][bus]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalUnit {
    pub id: String,
    pub bus: usize,
    pub region: usize,
    #[serde(default)]
    pub g_min: f64,
    pub g_max: f64,
    pub reserve_up_max: f64,
    pub reserve_down_max: f64,
    pub ramp_up: f64,
    pub ramp_down: f64,
    pub cost_energy: f64,
    pub cost_reserve_up: f64,
    pub cost_reserve_down: f64,
    /// Bid for upward re-dispatch (C̄).
    pub cost_redispatch_up: f64,
    /// Payback for downward re-dispatch (C̲).
    pub cost_redispatch_down: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewableUnit {
    pub id: String,
    pub bus: usize,
    pub region: usize,
    /// Available base-case output per period.
    pub available: Vec<f64>,
    /// `surplus[k][t]`: upward output deviation in scenario k.
    pub surplus: Vec<Vec<f64>>,
    /// `deficit[k][t]`: downward output deviation in scenario k.
    pub deficit: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadPoint {
    pub id: String,
    pub bus: usize,
    pub region: usize,
    pub demand: Vec<f64>,
    /// `deviation[k][t]`, signed.
    pub deviation: Vec<Vec<f64>>,
    /// Base RPS fraction for this load; falls back to the region's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rps_base: Option<f64>,
    /// Per-scenario RPS fractions for this load; empty means the region's.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub probability: f64,
    /// Ids of thermal units on outage.
    #[serde(default)]
    pub outages: Vec<String>,
    /// Per-region RPS fraction applied to deviated load.
    pub rps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: String,
    pub buses: Vec<usize>,
    pub rps_base: f64,
    /// Regions this one may sell renewable energy credits to.
    #[serde(default)]
    pub partners: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketInstance {
    #[serde(default)]
    pub name: String,
    pub periods: usize,
    pub network: Network,
    pub thermal: Vec<ThermalUnit>,
    pub renewables: Vec<RenewableUnit>,
    pub loads: Vec<LoadPoint>,
    pub regions: Vec<Region>,
    pub scenarios: Vec<Scenario>,
}

impl MarketInstance {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn scenario_count(&self) -> usize {
        self.scenarios.len()
    }

    pub fn base_probability(&self) -> f64 {
        1.0 - self.scenarios.iter().map(|s| s.probability).sum::<f64>()
    }

    pub fn thermal_index(&self, id: &str) -> Option<usize> {
        self.thermal.iter().position(|u| u.id == id)
    }

    pub fn renewable_index(&self, id: &str) -> Option<usize> {
        self.renewables.iter().position(|u| u.id == id)
    }

    pub fn load_index(&self, id: &str) -> Option<usize> {
        self.loads.iter().position(|u| u.id == id)
    }

    /// `mask[k][i]` is true when thermal unit i is out in scenario k (the diagonal of X_k).
    pub fn outage_mask(&self) -> Vec<Vec<bool>> {
        let ids: HashMap<&str, usize> =
            self.thermal.iter().enumerate().map(|(i, u)| (u.id.as_str(), i)).collect();
        self.scenarios
            .iter()
            .map(|s| {
                let mut m = vec![false; self.thermal.len()];
                for id in &s.outages {
                    if let Some(&i) = ids.get(id.as_str()) {
                        m[i] = true;
                    }
                }
                m
            })
            .collect()
    }

    pub fn load_rps_base(&self, l: usize) -> f64 {
        let load = &self.loads[l];
        load.rps_base.unwrap_or(self.regions[load.region].rps_base)
    }

    pub fn load_rps(&self, l: usize, k: usize) -> f64 {
        let load = &self.loads[l];
        if load.rps.is_empty() {
            self.scenarios[k].rps[load.region]
        } else {
            load.rps[k]
        }
    }

    /// Directed trading pairs (seller, buyer) in a fixed order.
    pub fn trade_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for (m, r) in self.regions.iter().enumerate() {
            for &n in &r.partners {
                if n != m && !pairs.contains(&(m, n)) {
                    pairs.push((m, n));
                }
            }
        }
        pairs
    }

    /// Net system shortfall in scenario k, period t: load increase plus RES deficit plus
    /// outaged capacity at `energy`, minus RES surplus.
    pub fn net_imbalance(&self, k: usize, t: usize, thermal_energy: &[Vec<f64>]) -> f64 {
        let mask = self.outage_mask();
        let mut v: f64 = self.loads.iter().map(|l| l.deviation[k][t]).sum();
        for u in &self.renewables {
            v += u.deficit[k][t] - u.surplus[k][t];
        }
        for (i, out) in mask[k].iter().enumerate() {
            if *out {
                v += thermal_energy[i][t];
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_usable(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn contains(&self, message: &str) -> bool {
        self.violations.iter().any(|v| v.message.contains(message))
    }

    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation { path: path.into(), message: message.into() });
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_usable() {
            Ok(())
        } else {
            let text: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
            Err(Error::Invalid(text.join("; ")))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return writeln!(f, "instance is valid");
        }
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

const TOL: f64 = 1e-9;

fn finite(x: f64) -> bool {
    x.is_finite()
}

/// Checks every structural and modelling invariant and lists the violations. Never fails.
pub fn validate_instance(inst: &MarketInstance) -> ValidationReport {
    let mut r = ValidationReport::default();
    let t_count = inst.periods;
    let k_count = inst.scenarios.len();
    let nb = inst.network.bus_count;
    let nr = inst.regions.len();

    if t_count == 0 {
        r.push("periods", "at least one period is required");
    }
    if nb == 0 {
        r.push("network.bus_count", "at least one bus is required");
    }

    let net = &inst.network;
    if net.shift_factors.len() != net.lines.len() {
        r.push("network.shift_factors", "shift-factor row count differs from line count");
    }
    for (l, row) in net.shift_factors.iter().enumerate() {
        if row.len() != nb {
            r.push(format!("network.shift_factors[{l}]"), "row length differs from bus count");
        }
        if row.iter().any(|v| !finite(*v)) {
            r.push(format!("network.shift_factors[{l}]"), "non-finite shift factor");
        }
    }
    for (l, line) in net.lines.iter().enumerate() {
        if !finite(line.capacity) || line.capacity < 0.0 {
            r.push(format!("network.lines[{l}]"), "line capacity must be finite and non-negative");
        }
        if line.from >= nb || line.to >= nb {
            r.push(format!("network.lines[{l}]"), "bus index out of range");
        }
    }

    // regions partition the buses
    let mut owner = vec![None; nb];
    for (m, reg) in inst.regions.iter().enumerate() {
        if !(0.0..=1.0).contains(&reg.rps_base) {
            r.push(format!("regions[{m}].rps_base"), "RPS fraction outside [0, 1]");
        }
        for &b in &reg.buses {
            if b >= nb {
                r.push(format!("regions[{m}].buses"), "bus index out of range");
            } else if let Some(prev) = owner[b] {
                r.push(format!("regions[{m}].buses"), format!("bus {b} already belongs to region {prev}"));
            } else {
                owner[b] = Some(m);
            }
        }
        for &n in &reg.partners {
            if n >= nr {
                r.push(format!("regions[{m}].partners"), "partner region out of range");
            }
        }
    }
    for (b, o) in owner.iter().enumerate() {
        if o.is_none() {
            r.push(format!("network.bus[{b}]"), "bus not assigned to any region");
        }
    }
    let check_location = |r: &mut ValidationReport, path: String, bus: usize, region: usize| {
        if bus >= nb {
            r.push(path.clone(), "bus index out of range");
        } else if region >= nr {
            r.push(path, "region index out of range");
        } else if owner[bus] != Some(region) {
            r.push(path, "entity region differs from the region owning its bus");
        }
    };

    let mut seen = HashMap::new();
    for (i, u) in inst.thermal.iter().enumerate() {
        let p = format!("thermal[{i}]");
        if seen.insert(u.id.clone(), p.clone()).is_some() {
            r.push(p.clone(), format!("duplicate id `{}`", u.id));
        }
        check_location(&mut r, p.clone(), u.bus, u.region);
        let fields = [
            u.g_min,
            u.g_max,
            u.reserve_up_max,
            u.reserve_down_max,
            u.ramp_up,
            u.ramp_down,
            u.cost_energy,
            u.cost_reserve_up,
            u.cost_reserve_down,
            u.cost_redispatch_up,
            u.cost_redispatch_down,
        ];
        if fields.iter().any(|v| !finite(*v)) {
            r.push(p.clone(), "non-finite parameter");
        }
        if u.g_min < 0.0 || u.g_min > u.g_max {
            r.push(p.clone(), "capacity bounds must satisfy 0 <= g_min <= g_max");
        }
        if u.reserve_up_max < 0.0 || u.reserve_down_max < 0.0 {
            r.push(p.clone(), "reserve caps must be non-negative");
        }
        if u.ramp_up < 0.0 || u.ramp_down < 0.0 {
            r.push(p.clone(), "ramp limits must be non-negative");
        }
        if fields[6..].iter().any(|v| *v < 0.0) {
            r.push(p.clone(), "bids must be non-negative");
        }
    }

    for (j, u) in inst.renewables.iter().enumerate() {
        let p = format!("renewables[{j}]");
        if seen.insert(u.id.clone(), p.clone()).is_some() {
            r.push(p.clone(), format!("duplicate id `{}`", u.id));
        }
        check_location(&mut r, p.clone(), u.bus, u.region);
        if u.available.len() != t_count {
            r.push(format!("{p}.available"), "period count mismatch");
        }
        if u.available.iter().any(|v| !finite(*v) || *v < 0.0) {
            r.push(format!("{p}.available"), "available output must be finite and non-negative");
        }
        for (name, dev) in [("surplus", &u.surplus), ("deficit", &u.deficit)] {
            if dev.len() != k_count || dev.iter().any(|row| row.len() != t_count) {
                r.push(format!("{p}.{name}"), "deviation must be dimensioned scenarios x periods");
                continue;
            }
            for (k, row) in dev.iter().enumerate() {
                for (t, v) in row.iter().enumerate() {
                    if !finite(*v) || *v < 0.0 {
                        r.push(format!("{p}.{name}[{k}][{t}]"), "deviation must be non-negative");
                    }
                    if name == "deficit" && t < u.available.len() && *v > u.available[t] + TOL {
                        r.push(format!("{p}.{name}[{k}][{t}]"), "deviation exceeds available output");
                    }
                }
            }
        }
    }

    for (l, d) in inst.loads.iter().enumerate() {
        let p = format!("loads[{l}]");
        if seen.insert(d.id.clone(), p.clone()).is_some() {
            r.push(p.clone(), format!("duplicate id `{}`", d.id));
        }
        check_location(&mut r, p.clone(), d.bus, d.region);
        if d.demand.len() != t_count {
            r.push(format!("{p}.demand"), "period count mismatch");
        }
        if d.demand.iter().any(|v| !finite(*v) || *v < 0.0) {
            r.push(format!("{p}.demand"), "demand must be finite and non-negative");
        }
        if d.deviation.len() != k_count || d.deviation.iter().any(|row| row.len() != t_count) {
            r.push(format!("{p}.deviation"), "deviation must be dimensioned scenarios x periods");
        } else {
            for (k, row) in d.deviation.iter().enumerate() {
                for (t, v) in row.iter().enumerate() {
                    if !finite(*v) {
                        r.push(format!("{p}.deviation[{k}][{t}]"), "non-finite deviation");
                    } else if t < d.demand.len() && d.demand[t] + v < -TOL {
                        r.push(format!("{p}.deviation[{k}][{t}]"), "deviated demand is negative");
                    }
                }
            }
        }
        if let Some(a) = d.rps_base {
            if !(0.0..=1.0).contains(&a) {
                r.push(format!("{p}.rps_base"), "RPS fraction outside [0, 1]");
            }
        }
        if !d.rps.is_empty() {
            if d.rps.len() != k_count {
                r.push(format!("{p}.rps"), "one RPS fraction per scenario is required");
            }
            if d.rps.iter().any(|a| !(0.0..=1.0).contains(a)) {
                r.push(format!("{p}.rps"), "RPS fraction outside [0, 1]");
            }
        }
    }

    let mut total = 0.0;
    for (k, s) in inst.scenarios.iter().enumerate() {
        let p = format!("scenarios[{k}]");
        if !(0.0..=1.0).contains(&s.probability) {
            r.push(format!("{p}.probability"), "probability outside [0, 1]");
        }
        total += s.probability;
        if s.rps.len() != nr {
            r.push(format!("{p}.rps"), "one RPS fraction per region is required");
        }
        if s.rps.iter().any(|a| !(0.0..=1.0).contains(a)) {
            r.push(format!("{p}.rps"), "RPS fraction outside [0, 1]");
        }
        for id in &s.outages {
            if inst.thermal_index(id).is_none() {
                r.push(format!("{p}.outages"), format!("unknown thermal unit `{id}`"));
            }
        }
    }
    if total > 1.0 + TOL {
        r.push("scenarios", "scenario probabilities exceed 1");
    }
    r
}
