//! The two-bus reference system.

use crate::instance::{
    Line, LoadPoint, MarketInstance, Network, Region, RenewableUnit, Scenario, ThermalUnit,
};

fn thermal(id: &str, bus: usize, g_max: f64, reserve: f64, cg: f64, cr: f64, cre: f64) -> ThermalUnit {
    ThermalUnit {
        id: id.into(),
        bus,
        region: 0,
        g_min: 0.0,
        g_max,
        reserve_up_max: reserve,
        reserve_down_max: reserve,
        ramp_up: g_max,
        ramp_down: g_max,
        cost_energy: cg,
        cost_reserve_up: cr,
        cost_reserve_down: cr,
        cost_redispatch_up: cre,
        cost_redispatch_down: cre,
    }
}

/// Two buses joined by a 25 MW line, three thermal units, three wind units, two 80 MW loads and
/// six non-base scenarios (one with an outage of G1).
///
/// Both buses form a single RPS region; the per-bus RPS fractions of each scenario are carried
/// by the load at that bus.
pub fn build_two_bus_fixture() -> MarketInstance {
    // (probability, outages, L1 deviation, WT1 surplus, WT1 deficit, alpha L1, alpha L2)
    let table: [(f64, &[&str], f64, f64, f64, f64, f64); 6] = [
        (0.15, &[], -10.0, 0.0, 15.0, 0.5, 0.605),
        (0.15, &[], -20.0, 0.0, 15.0, 0.55, 0.605),
        (0.10, &[], 10.0, 20.0, 0.0, 0.605, 0.605),
        (0.15, &[], 20.0, 10.0, 0.0, 0.605, 0.605),
        (0.05, &[], 0.0, 0.0, 75.0, 0.0, 0.3125),
        (0.05, &["G1"], 40.0, 0.0, 0.0, 0.625, 0.3125),
    ];
    let k = table.len();
    let scenarios = table
        .iter()
        .enumerate()
        .map(|(i, s)| Scenario {
            id: format!("S{}", i + 1),
            probability: s.0,
            outages: s.1.iter().map(|x| x.to_string()).collect(),
            rps: vec![s.6],
        })
        .collect();

    let wind = |id: &str, bus: usize, cap: f64, surplus: Vec<f64>, deficit: Vec<f64>| RenewableUnit {
        id: id.into(),
        bus,
        region: 0,
        available: vec![cap],
        surplus: surplus.into_iter().map(|v| vec![v]).collect(),
        deficit: deficit.into_iter().map(|v| vec![v]).collect(),
    };
    let load = |id: &str, bus: usize, dev: Vec<f64>, alpha: Vec<f64>| LoadPoint {
        id: id.into(),
        bus,
        region: 0,
        demand: vec![80.0],
        deviation: dev.into_iter().map(|v| vec![v]).collect(),
        rps_base: Some(0.5),
        rps: alpha,
    };

    MarketInstance {
        name: "two-bus".into(),
        periods: 1,
        network: Network {
            bus_count: 2,
            lines: vec![Line { from: 0, to: 1, capacity: 25.0 }],
            shift_factors: vec![vec![1.0, 0.0]],
        },
        thermal: vec![
            thermal("G1", 0, 150.0, 20.0, 2.0, 1.0, 0.5),
            thermal("G2", 1, 200.0, 40.0, 4.0, 2.0, 1.0),
            thermal("G3", 0, 120.0, 10.0, 6.0, 3.0, 1.5),
        ],
        renewables: vec![
            wind(
                "WT1",
                0,
                75.0,
                table.iter().map(|s| s.3).collect(),
                table.iter().map(|s| s.4).collect(),
            ),
            wind("WT2", 1, 10.0, vec![0.0; k], vec![0.0; k]),
            wind("WT3", 1, 15.0, vec![0.0; k], vec![0.0; k]),
        ],
        loads: vec![
            load("L1", 0, table.iter().map(|s| s.2).collect(), table.iter().map(|s| s.5).collect()),
            load("L2", 1, vec![0.0; k], table.iter().map(|s| s.6).collect()),
        ],
        regions: vec![Region { id: "R1".into(), buses: vec![0, 1], rps_base: 0.5, partners: vec![] }],
        scenarios,
    }
}

/// One bus, one generator, one load and no scenarios.
pub fn single_bus_toy(demand: f64, cost: f64) -> MarketInstance {
    MarketInstance {
        name: "toy".into(),
        periods: 1,
        network: Network::single_bus(),
        thermal: vec![ThermalUnit {
            id: "G".into(),
            bus: 0,
            region: 0,
            g_min: 0.0,
            g_max: demand * 2.0 + 10.0,
            reserve_up_max: 0.0,
            reserve_down_max: 0.0,
            ramp_up: 1e3,
            ramp_down: 1e3,
            cost_energy: cost,
            cost_reserve_up: 0.0,
            cost_reserve_down: 0.0,
            cost_redispatch_up: 0.0,
            cost_redispatch_down: 0.0,
        }],
        renewables: vec![],
        loads: vec![LoadPoint {
            id: "L".into(),
            bus: 0,
            region: 0,
            demand: vec![demand],
            deviation: vec![],
            rps_base: None,
            rps: vec![],
        }],
        regions: vec![Region { id: "R".into(), buses: vec![0], rps_base: 0.0, partners: vec![] }],
        scenarios: vec![],
    }
}
