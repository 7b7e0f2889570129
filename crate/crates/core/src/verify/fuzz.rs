//! Small random market instances for property fuzzing.

use std::collections::BTreeMap;
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::instance::{LoadPoint, MarketInstance, Region, RenewableUnit, Scenario, ThermalUnit};
use crate::error::{Error, Result};
use crate::lp::BuildOptions;
use crate::network::{network_from_branches, Branch};
use crate::solver::SolverOptions;
use crate::study::clear;
use crate::verify::verify_all;

#[derive(Debug, Clone)]
pub struct FuzzConfig {
    pub max_buses: usize,
    pub max_units: usize,
    pub max_scenarios: usize,
    pub max_periods: usize,
    /// Allow a second RPS region trading credits with the first.
    pub multi_region: bool,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig { max_buses: 5, max_units: 6, max_scenarios: 4, max_periods: 2, multi_region: true }
    }
}

fn int(rng: &mut ChaCha8Rng, lo: i32, hi: i32) -> f64 {
    rng.gen_range(lo..=hi) as f64
}

/// Draws an instance with integer-valued data. The same seed always yields the same instance.
pub fn random_instance(seed: u64, cfg: &FuzzConfig) -> MarketInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nb = rng.gen_range(1..=cfg.max_buses.max(1));
    let nt = rng.gen_range(1..=cfg.max_periods.max(1));
    let nk = rng.gen_range(0..=cfg.max_scenarios);
    let units = rng.gen_range(2..=cfg.max_units.max(2));
    let ng = rng.gen_range(1..units);
    let nw = units - ng;

    // spanning tree plus an occasional extra branch
    let mut branches = Vec::new();
    for b in 1..nb {
        let to = rng.gen_range(0..b);
        branches.push(Branch { from: b, to, reactance: int(&mut rng, 1, 4), capacity: int(&mut rng, 25, 120) });
    }
    if nb > 2 && rng.gen_bool(0.5) {
        let a = rng.gen_range(0..nb);
        let b = (a + 1 + rng.gen_range(0..nb - 1)) % nb;
        branches.push(Branch { from: a, to: b, reactance: int(&mut rng, 1, 4), capacity: int(&mut rng, 25, 120) });
    }
    let network = network_from_branches(nb, &branches, 0).expect("connected by construction");

    let two_regions = cfg.multi_region && nb >= 2 && rng.gen_bool(0.3);
    let split = if two_regions { rng.gen_range(1..nb) } else { nb };
    let region_of = |b: usize| usize::from(b >= split);
    let regions: Vec<Region> = if two_regions {
        vec![
            Region { id: "R1".into(), buses: (0..split).collect(), rps_base: int(&mut rng, 0, 2) / 10.0, partners: vec![1] },
            Region { id: "R2".into(), buses: (split..nb).collect(), rps_base: int(&mut rng, 0, 2) / 10.0, partners: vec![0] },
        ]
    } else {
        vec![Region { id: "R1".into(), buses: (0..nb).collect(), rps_base: int(&mut rng, 0, 2) / 10.0, partners: vec![] }]
    };

    let mut thermal = Vec::new();
    for i in 0..ng {
        let bus = rng.gen_range(0..nb);
        let g_max = int(&mut rng, 60, 160);
        let cost = int(&mut rng, 1, 10);
        thermal.push(ThermalUnit {
            id: format!("G{}", i + 1),
            bus,
            region: region_of(bus),
            g_min: int(&mut rng, 0, 10),
            g_max,
            reserve_up_max: int(&mut rng, 10, 50),
            reserve_down_max: int(&mut rng, 10, 50),
            ramp_up: int(&mut rng, 30, 160),
            ramp_down: int(&mut rng, 30, 160),
            cost_energy: cost,
            cost_reserve_up: int(&mut rng, 0, 4),
            cost_reserve_down: int(&mut rng, 0, 4),
            cost_redispatch_up: int(&mut rng, 0, 6),
            cost_redispatch_down: int(&mut rng, 0, 3),
        });
    }

    let mut renewables = Vec::new();
    for j in 0..nw {
        // put renewables next to each other now and then
        let bus = if j > 0 && rng.gen_bool(0.4) { renewables.last().map(|u: &RenewableUnit| u.bus).unwrap() } else { rng.gen_range(0..nb) };
        let available: Vec<f64> = (0..nt).map(|_| int(&mut rng, 10, 80)).collect();
        let mut surplus = vec![vec![0.0; nt]; nk];
        let mut deficit = vec![vec![0.0; nt]; nk];
        for k in 0..nk {
            for t in 0..nt {
                match rng.gen_range(0..3) {
                    0 => surplus[k][t] = int(&mut rng, 0, 10),
                    1 => deficit[k][t] = int(&mut rng, 0, available[t].min(10.0) as i32),
                    _ => {}
                }
            }
        }
        renewables.push(RenewableUnit { id: format!("W{}", j + 1), bus, region: region_of(bus), available, surplus, deficit });
    }

    let mut loads = Vec::new();
    for b in 0..nb {
        if b > 0 && rng.gen_bool(0.3) {
            continue;
        }
        let demand: Vec<f64> = (0..nt).map(|_| int(&mut rng, 10, 60)).collect();
        let deviation = (0..nk).map(|_| (0..nt).map(|t| int(&mut rng, -5, 8).max(-demand[t])).collect()).collect();
        loads.push(LoadPoint {
            id: format!("L{}", loads.len() + 1),
            bus: b,
            region: region_of(b),
            demand,
            deviation,
            rps_base: None,
            rps: vec![],
        });
    }

    let ids: Vec<String> = thermal.iter().map(|u| u.id.clone()).collect();
    let scenarios = (0..nk)
        .map(|k| Scenario {
            id: format!("S{}", k + 1),
            probability: int(&mut rng, 2, 20) / 100.0,
            outages: if ids.len() > 1 && rng.gen_bool(0.25) { vec![ids.choose(&mut rng).unwrap().clone()] } else { vec![] },
            rps: regions.iter().map(|_| int(&mut rng, 0, 2) / 10.0).collect(),
        })
        .collect();

    MarketInstance { name: format!("fuzz-{seed}"), periods: nt, network, thermal, renewables, loads, regions, scenarios }
}

/// Outcome of running the property suite over a range of seeds.
#[derive(Debug, Clone, Default, Serialize)]
pub struct FuzzSummary {
    /// Instances that solved and passed the KKT audit.
    pub verified: usize,
    /// Seeds whose instance has no feasible dispatch.
    pub infeasible: Vec<u64>,
    /// Seeds with at least one failed property, with the failed property names.
    pub failures: Vec<(u64, Vec<String>)>,
    /// Largest residual seen per property.
    pub worst: BTreeMap<String, f64>,
}

impl FuzzSummary {
    pub fn pass(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Clears, prices, settles and verifies the instance of every seed in `seeds`.
pub fn run_fuzz(seeds: Range<u64>, cfg: &FuzzConfig, opts: &SolverOptions, tol: f64) -> Result<FuzzSummary> {
    let mut out = FuzzSummary::default();
    for seed in seeds {
        let inst = random_instance(seed, cfg);
        let c = match clear(&inst, &BuildOptions::default(), opts) {
            Ok(c) => c,
            Err(Error::Infeasible) => {
                out.infeasible.push(seed);
                continue;
            }
            Err(e) => return Err(e),
        };
        let report = verify_all(&inst, &c.dispatch, &c.prices, &c.statement, opts, tol)?;
        if c.dispatch.kkt.worst() <= tol {
            out.verified += 1;
        }
        for r in &report.results {
            let w = out.worst.entry(r.name.clone()).or_insert(0.0);
            *w = w.max(r.worst);
        }
        if !report.pass() {
            out.failures.push((seed, report.failures().iter().map(|r| r.name.clone()).collect()));
        }
    }
    Ok(out)
}
