//! Seeded synthetic 118-bus, three-area system with daily wind, solar and load shapes.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{inject_outage, reduce_scenarios, scale_deviation, scale_deviation_by_entity, weighted_average, ProfileEnsemble};
use crate::error::Result;
use crate::instance::{LoadPoint, MarketInstance, Region, RenewableUnit, Scenario, ThermalUnit};
use crate::network::{network_from_branches, Branch};

pub const BUSES: usize = 118;
pub const LINES: usize = 186;
pub const THERMAL_UNITS: usize = 54;
pub const WIND_UNITS: usize = 13;
pub const SOLAR_UNITS: usize = 9;
pub const LOADS: usize = 91;
/// First bus of each area.
const AREA_START: [usize; 3] = [0, 39, 79];
const WIND_MW: f64 = 20.0;
const SOLAR_MW: f64 = 40.0;
/// Thermal capacity over peak load.
const THERMAL_MARGIN: f64 = 1.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub periods: usize,
    /// Hour of day of the first period.
    pub start_hour: usize,
    /// Ensemble size before reduction (one member per day).
    pub members: usize,
    pub scenarios: usize,
    /// Target standard deviation of every renewable profile point, as a fraction of its mean.
    pub deviation_level: f64,
    /// The same for loads.
    pub load_deviation_level: f64,
    /// Base-case renewable energy over base-case load, both summed over a full day.
    pub penetration: f64,
    /// Line ratings scaled to the system peak; when false they are effectively unlimited.
    pub congested: bool,
    pub base_probability: f64,
    /// Number of scenarios (taken from the first) that also lose a thermal unit.
    pub outage_scenarios: usize,
    pub rps_base: f64,
    pub rps_scenario: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 118,
            periods: 1,
            start_hour: 12,
            members: 365,
            scenarios: 10,
            deviation_level: 0.10,
            load_deviation_level: 0.05,
            penetration: 1.0,
            congested: true,
            base_probability: 0.2,
            outage_scenarios: 1,
            rps_base: 0.4,
            rps_scenario: 0.2,
        }
    }
}

fn area_of(bus: usize) -> usize {
    AREA_START.iter().rposition(|&s| bus >= s).unwrap_or(0)
}

fn load_shape(hour: usize) -> f64 {
    let h = hour as f64;
    0.75 + 0.25 * ((h - 8.0) * std::f64::consts::PI / 12.0).sin().max(-0.6)
}

fn wind_shape(hour: usize) -> f64 {
    0.4 + 0.1 * ((hour as f64) * std::f64::consts::PI / 12.0).cos()
}

fn solar_shape(hour: usize) -> f64 {
    let x = (hour as f64 - 6.0) / 12.0;
    if (0.0..=1.0).contains(&x) {
        0.8 * (x * std::f64::consts::PI).sin()
    } else {
        0.0
    }
}

fn branches(rng: &mut ChaCha8Rng) -> Vec<Branch> {
    let mut out: Vec<Branch> = Vec::with_capacity(LINES);
    let add = |out: &mut Vec<Branch>, rng: &mut ChaCha8Rng, a: usize, b: usize| {
        let reactance = rng.gen_range(2..=20) as f64 / 100.0;
        // fraction of the system peak, scaled once the load is known
        let capacity = rng.gen_range(3..=11) as f64 / 100.0;
        out.push(Branch { from: a, to: b, reactance, capacity });
    };
    for b in 1..BUSES {
        let a = rng.gen_range(b.saturating_sub(4)..b);
        add(&mut out, rng, a, b);
    }
    while out.len() < LINES {
        let a = rng.gen_range(0..BUSES - 2);
        let b = (a + rng.gen_range(2..=8)).min(BUSES - 1);
        let dup = out.iter().any(|x| (x.from, x.to) == (a, b) || (x.from, x.to) == (b, a));
        if !dup {
            add(&mut out, rng, a, b);
        }
    }
    out
}

/// Builds the instance for `cfg`. Every call with the same configuration gives the same
/// instance. The base case is the nominal profile and the scenario deviations are centered
/// on it, so only the deviations change with `deviation_level`.
pub fn synthetic_118(cfg: &SyntheticConfig) -> Result<MarketInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let nt = cfg.periods.max(1);
    let hours: Vec<usize> = (0..nt).map(|t| (cfg.start_hour + t) % 24).collect();
    let mut lines = branches(&mut rng);

    // renewables have fixed nameplate ratings; loads are scaled so that base-case renewable
    // energy over a whole day is `penetration` times the daily load
    let kinds: Vec<bool> = (0..WIND_UNITS + SOLAR_UNITS).map(|j| j < WIND_UNITS).collect();
    let res_bus: Vec<usize> = kinds.iter().map(|_| rng.gen_range(0..BUSES)).collect();
    let site: Vec<f64> = kinds.iter().map(|_| rng.gen_range(80..=120) as f64 / 100.0).collect();
    let res_at = |j: usize, h: usize| {
        let (cap, shape) = if kinds[j] { (WIND_MW, wind_shape(h)) } else { (SOLAR_MW, solar_shape(h)) };
        (cap * site[j] * shape).min(cap)
    };
    let res_daily: f64 = (0..kinds.len()).map(|j| (0..24).map(|h| res_at(j, h)).sum::<f64>()).sum();

    let mut buses: Vec<usize> = (0..BUSES).collect();
    buses.shuffle(&mut rng);
    let load_buses = &buses[..LOADS];
    let weights: Vec<f64> = load_buses.iter().map(|_| rng.gen_range(20..=80) as f64).collect();
    let shape_daily: f64 = (0..24).map(load_shape).sum();
    let load_scale = res_daily / (cfg.penetration.max(1e-3) * shape_daily * weights.iter().sum::<f64>());
    let peaks: Vec<f64> = weights.iter().map(|w| w * load_scale).collect();
    let nominal_load: Vec<Vec<f64>> = peaks.iter().map(|p| hours.iter().map(|&h| p * load_shape(h)).collect()).collect();
    let peak_load: f64 = peaks.iter().sum::<f64>() * (0..24).map(load_shape).fold(0.0, f64::max);
    let nominal_res: Vec<Vec<f64>> = (0..kinds.len()).map(|j| hours.iter().map(|&h| res_at(j, h)).collect()).collect();

    for br in lines.iter_mut() {
        br.capacity *= peak_load * if cfg.congested { 1.0 } else { 100.0 };
    }
    let network = network_from_branches(BUSES, &lines, 0)?;

    // thermal fleet sized to cover the daily peak with margin
    let sizes: Vec<f64> = (0..THERMAL_UNITS).map(|_| rng.gen_range(6..=19) as f64).collect();
    let fleet = THERMAL_MARGIN * peak_load / sizes.iter().sum::<f64>();
    let thermal: Vec<ThermalUnit> = sizes
        .iter()
        .enumerate()
        .map(|(i, size)| {
            let bus = rng.gen_range(0..BUSES);
            let g_max = (size * fleet).round().max(1.0);
            ThermalUnit {
                id: format!("G{}", i + 1),
                bus,
                region: area_of(bus),
                g_min: 0.0,
                g_max,
                reserve_up_max: 0.3 * g_max,
                reserve_down_max: 0.3 * g_max,
                ramp_up: 0.5 * g_max,
                ramp_down: 0.5 * g_max,
                cost_energy: rng.gen_range(10..=45) as f64,
                cost_reserve_up: rng.gen_range(2..=8) as f64,
                cost_reserve_down: rng.gen_range(1..=5) as f64,
                cost_redispatch_up: rng.gen_range(5..=15) as f64,
                cost_redispatch_down: rng.gen_range(0..=4) as f64,
            }
        })
        .collect();

    // one year of daily members around the nominal profiles
    let mut entities: Vec<String> = (0..LOADS).map(|l| format!("L{}", l + 1)).collect();
    entities.extend(kinds.iter().enumerate().map(|(j, _)| res_id(&kinds, j)));
    let nominal: Vec<&Vec<f64>> = nominal_load.iter().chain(nominal_res.iter()).collect();
    let spread: Vec<f64> = (0..LOADS).map(|_| 0.08).chain(kinds.iter().map(|&w| if w { 0.35 } else { 0.25 })).collect();
    let z = Normal::new(0.0, 1.0).expect("unit normal");
    let mut members = Vec::with_capacity(cfg.members);
    for _ in 0..cfg.members {
        let common = [z.sample(&mut rng), z.sample(&mut rng), z.sample(&mut rng)];
        let mut m = Vec::with_capacity(entities.len() * nt);
        for (e, base) in nominal.iter().enumerate() {
            let group = if e < LOADS { 0 } else if kinds[e - LOADS] { 1 } else { 2 };
            let own = z.sample(&mut rng);
            for &v in base.iter() {
                let f = 1.0 + spread[e] * (0.7 * common[group] + 0.7 * own);
                m.push((v * f).max(0.0));
            }
        }
        members.push(m);
    }
    let ensemble = ProfileEnsemble::uniform(entities, nt, members);
    let levels: Vec<f64> =
        (0..ensemble.entities.len()).map(|e| if e < LOADS { cfg.load_deviation_level } else { cfg.deviation_level }).collect();
    let deviations = scale_deviation_by_entity(&ensemble, &levels);
    // select on a fixed weighting so that every level keeps the same members
    let mut reps = reduce_scenarios(&scale_deviation(&ensemble, 1.0), cfg.scenarios);
    for r in reps.iter_mut() {
        r.values = deviations.members[r.member].clone();
    }
    let center = weighted_average(&reps);
    let at = |e: usize, t: usize| e * nt + t;

    let loads: Vec<LoadPoint> = load_buses
        .iter()
        .enumerate()
        .map(|(l, &bus)| {
            let demand = nominal_load[l].clone();
            let deviation = reps
                .iter()
                .map(|r| (0..nt).map(|t| (r.values[at(l, t)] - center[at(l, t)]).max(-demand[t])).collect())
                .collect();
            LoadPoint { id: format!("L{}", l + 1), bus, region: area_of(bus), demand, deviation, rps_base: None, rps: vec![] }
        })
        .collect();

    let renewables: Vec<RenewableUnit> = (0..kinds.len())
        .map(|j| {
            let e = LOADS + j;
            let available = nominal_res[j].clone();
            let mut surplus = Vec::with_capacity(reps.len());
            let mut deficit = Vec::with_capacity(reps.len());
            for r in &reps {
                let d: Vec<f64> = (0..nt).map(|t| r.values[at(e, t)] - center[at(e, t)]).collect();
                surplus.push(d.iter().map(|v| v.max(0.0)).collect());
                deficit.push(d.iter().zip(&available).map(|(v, w)| (-v).max(0.0).min(*w)).collect());
            }
            RenewableUnit { id: res_id(&kinds, j), bus: res_bus[j], region: area_of(res_bus[j]), available, surplus, deficit }
        })
        .collect();

    let regions: Vec<Region> = (0..3)
        .map(|m| Region {
            id: format!("A{}", m + 1),
            buses: (0..BUSES).filter(|&b| area_of(b) == m).collect(),
            rps_base: cfg.rps_base,
            partners: (0..3).filter(|&n| n != m).collect(),
        })
        .collect();

    let mut inst = MarketInstance {
        name: format!("synthetic-118-{}", cfg.seed),
        periods: nt,
        network,
        thermal,
        renewables,
        loads,
        regions,
        scenarios: Vec::new(),
    };
    let weight = 1.0 - cfg.base_probability;
    let mut scenarios = Vec::with_capacity(reps.len());
    for (k, r) in reps.iter().enumerate() {
        let s = Scenario { id: format!("S{}", k + 1), probability: weight * r.probability, outages: vec![], rps: vec![cfg.rps_scenario; 3] };
        let s = if k < cfg.outage_scenarios {
            let unit = &inst.thermal[(7 * k + 3) % THERMAL_UNITS].id;
            inject_outage(&inst, &s, &[unit])?
        } else {
            s
        };
        scenarios.push(s);
    }
    inst.scenarios = scenarios;
    Ok(inst)
}

fn res_id(kinds: &[bool], j: usize) -> String {
    if kinds[j] {
        format!("WT{}", j + 1)
    } else {
        format!("PV{}", j + 1 - WIND_UNITS)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validate_instance;

    #[test]
    fn dimensions() {
        let inst = synthetic_118(&SyntheticConfig::default()).unwrap();
        assert_eq!(inst.network.bus_count, BUSES);
        assert_eq!(inst.network.lines.len(), LINES);
        assert_eq!(inst.thermal.len(), THERMAL_UNITS);
        assert_eq!(inst.renewables.len(), WIND_UNITS + SOLAR_UNITS);
        assert_eq!(inst.loads.len(), LOADS);
        assert_eq!(inst.regions.len(), 3);
        assert_eq!(inst.scenarios.len(), 10);
        assert!(validate_instance(&inst).is_usable(), "{}", validate_instance(&inst));
        let total: f64 = inst.scenarios.iter().map(|s| s.probability).sum();
        assert!((total - 0.8).abs() < 1e-12);
    }

    #[test]
    fn deterministic() {
        let c = SyntheticConfig::default();
        assert_eq!(synthetic_118(&c).unwrap(), synthetic_118(&c).unwrap());
    }

    #[test]
    fn base_profile_is_weighted_scenario_average() {
        let inst = synthetic_118(&SyntheticConfig::default()).unwrap();
        let total: f64 = inst.scenarios.iter().map(|s| s.probability).sum();
        for l in &inst.loads {
            let avg: f64 = inst.scenarios.iter().enumerate().map(|(k, s)| s.probability * l.deviation[k][0]).sum::<f64>() / total;
            assert!(avg.abs() < 1e-9, "{}: {avg}", l.id);
        }
    }
}
