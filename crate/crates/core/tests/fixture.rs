use std::path::PathBuf;

use clearing_core::fixture::build_two_bus_fixture;
use clearing_core::lp::{Quantity as Q, UnitRef};
use clearing_core::settlement::merchandise_surplus;
use clearing_core::solver::{Backend, PivotRule, Status};
use clearing_core::study::{clear, Cleared};
use clearing_core::verify::payment_decomposition_terms;
use clearing_core::{validate_instance, BuildOptions, Error, MarketInstance, SolverOptions};

const TOL: f64 = 1e-6;

fn close(a: f64, b: f64, what: &str) {
    assert!((a - b).abs() <= TOL, "{what}: got {a}, expected {b}");
}

fn cleared() -> (MarketInstance, Cleared) {
    let inst = build_two_bus_fixture();
    let c = clear(&inst, &BuildOptions::default(), &SolverOptions::default()).unwrap();
    (inst, c)
}

fn data_file() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/two_bus.json")
}

#[test]
fn shipped_file_equals_builder() {
    let loaded = MarketInstance::load(data_file()).unwrap();
    assert_eq!(loaded, build_two_bus_fixture());
}

#[test]
fn fixture_is_valid_and_has_the_published_data() {
    let inst = build_two_bus_fixture();
    let report = validate_instance(&inst);
    assert!(report.is_usable(), "{report}");
    let g1 = &inst.thermal[0];
    assert_eq!((g1.cost_energy, g1.cost_reserve_up, g1.cost_redispatch_up), (2.0, 1.0, 0.5));
    let s6 = &inst.scenarios[5];
    assert_eq!(s6.outages, vec!["G1".to_string()]);
    close(s6.probability, 0.05, "S6 probability");
    let l1 = inst.load_index("L1").unwrap();
    close(inst.loads[l1].deviation[5][0], 40.0, "S6 L1 deviation");
    close(inst.scenarios.iter().map(|s| s.probability).sum(), 0.65, "sum of scenario probabilities");
    close(inst.base_probability(), 0.35, "base probability");
}

#[test]
fn validation_is_idempotent() {
    let mut inst = build_two_bus_fixture();
    inst.scenarios[0].probability = 0.7;
    let a = validate_instance(&inst).to_string();
    let b = validate_instance(&inst).to_string();
    assert_eq!(a, b);
}

#[test]
fn probability_overflow_is_reported() {
    let mut inst = build_two_bus_fixture();
    inst.scenarios[0].probability += 0.55;
    let report = validate_instance(&inst);
    assert!(!report.is_usable());
    assert!(report.contains("scenario probabilities exceed 1"), "{report}");
}

#[test]
fn deficit_above_available_is_reported() {
    let mut inst = build_two_bus_fixture();
    inst.renewables[1].deficit[0][0] = inst.renewables[1].available[0] + 1.0;
    let report = validate_instance(&inst);
    assert!(report.contains("deviation exceeds available output"), "{report}");
    assert!(matches!(report.into_result(), Err(Error::Invalid(_))));
}

/// (g, r_U, r_D, pi, pi_U, pi_D) per unit.
const GOLDEN_CLEARING: [(&str, [f64; 6]); 6] = [
    ("G1", [15.0, 20.0, 6.4, 6.0, 2.675, 1.0]),
    ("G2", [40.0, 40.0, 0.0, 4.0, 4.625, 1.275]),
    ("G3", [10.0, 10.0, 0.0, 6.0, 6.575, 1.55]),
    ("WT1", [70.0, 5.0, 70.0, 6.875, 6.875, 0.0]),
    ("WT2", [10.0, 0.0, 10.0, 4.875, 4.875, 0.0]),
    ("WT3", [15.0, 0.0, 15.0, 4.875, 4.875, 0.0]),
];

fn clearing_row(inst: &MarketInstance, c: &Cleared, id: &str) -> [f64; 6] {
    let d = &c.dispatch;
    if let Some(i) = inst.thermal_index(id) {
        let p = &c.prices.thermal[i];
        [
            d.base(Q::ThermalEnergy, i, 0),
            d.base(Q::ThermalUp, i, 0),
            d.base(Q::ThermalDown, i, 0),
            p.energy.total(0),
            p.reserve_up.total(0),
            p.reserve_down.total(0),
        ]
    } else {
        let j = inst.renewable_index(id).unwrap();
        let p = &c.prices.renewable[j];
        [
            d.base(Q::RenewableEnergy, j, 0),
            d.base(Q::RenewableUp, j, 0),
            d.base(Q::RenewableDown, j, 0),
            p.energy.total(0),
            p.reserve_up.total(0),
            p.reserve_down.total(0),
        ]
    }
}

#[test]
fn golden_clearing_on_every_backend() {
    let inst = build_two_bus_fixture();
    for backend in [Backend::Revised, Backend::Tableau] {
        let opts = SolverOptions { backend, pivot: PivotRule::Bland, ..SolverOptions::default() };
        let c = clear(&inst, &BuildOptions::default(), &opts).unwrap();
        assert_eq!(c.dispatch.lp.status, Status::Optimal);
        close(c.dispatch.objective(), 391.60, "objective");
        for (id, want) in GOLDEN_CLEARING {
            let got = clearing_row(&inst, &c, id);
            for (q, (g, w)) in got.iter().zip(want).enumerate() {
                close(*g, w, &format!("{backend:?} {id} column {q}"));
            }
        }
    }
}

#[test]
fn clearing_is_bit_identical_across_runs() {
    let (_, a) = cleared();
    let (_, b) = cleared();
    assert_eq!(a.dispatch.lp.x, b.dispatch.lp.x);
    assert_eq!(a.dispatch.lp.row_dual, b.dispatch.lp.row_dual);
}

#[test]
fn kkt_residuals_are_small() {
    let (_, c) = cleared();
    assert!(c.dispatch.kkt.pass, "{:?}", c.dispatch.kkt);
    assert!(c.dispatch.kkt.worst() <= TOL);
}

#[test]
fn golden_settlement() {
    let (inst, c) = cleared();
    let st = &c.statement;
    let want = [("G1", 89.6), ("G2", 349.0), ("G3", 127.25)];
    for (id, v) in want {
        close(st.thermal(id).unwrap().expected, v, id);
    }
    for (id, v) in [("WT1", 312.75), ("WT2", 48.75), ("WT3", 73.125)] {
        close(st.renewable(id).unwrap().total(), v, id);
    }
    close(st.load("L1").unwrap().total(), 688.125, "L1");
    close(st.load("L2").unwrap().total(), 362.35, "L2");
    close(st.congestion_rent, 50.0, "congestion rent");
    let (ms, cr) = merchandise_surplus(&inst, st, &c.dispatch);
    close(ms, 50.0, "merchandise surplus");
    close(cr, 50.0, "congestion rent from flows");
}

#[test]
fn realized_profits_of_thermal_units() {
    let (_, c) = cleared();
    for (id, v) in [("G1", 33.5), ("G2", 105.0), ("G3", 35.75)] {
        close(c.statement.thermal(id).unwrap().base_profit(), v, id);
    }
}

#[test]
fn case_b_is_infeasible_on_the_fixture() {
    // WT1 deficit in S5 exceeds what thermal up-reserve can cover without renewable reserve.
    let inst = build_two_bus_fixture();
    let build = BuildOptions { renewable_reserve: false, ..BuildOptions::default() };
    let err = clear(&inst, &build, &SolverOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Infeasible), "{err}");
}

/// (scenario, unit, pi_k, pi_k^u, pi_k^d, dx, Pi_U + Pi_D = pi_k dx).
const DECOMPOSITION_ROWS: [(usize, &str, f64, f64, f64, f64, f64); 12] = [
    (0, "G1", 0.075, 0.0, 0.0, 0.0, 0.0),
    (0, "WT1", 0.075, 0.075, 0.0, -10.0, -0.75),
    (1, "G1", -0.875, 0.0, 0.95, -6.4, 5.6),
    (1, "WT1", 0.0, 0.0, 0.0, -13.6, 0.0),
    (2, "G1", 0.0, 0.0, 0.05, -6.4, 0.0),
    (2, "WT1", 0.0, 0.0, 0.0, 16.4, 0.0),
    (3, "G1", 0.075, 0.0, 0.0, 5.0, 0.375),
    (3, "WT1", 0.075, 0.075, 0.0, 15.0, 1.125),
    (4, "G1", 2.7, 2.675, 0.0, 20.0, 54.0),
    (4, "WT1", 2.7, 2.7, 0.0, -70.0, -189.0),
    (5, "G1", 4.025, 0.0, 0.0, -15.0, -60.375),
    (5, "WT1", 4.025, 4.025, 0.0, 5.0, 20.125),
];

#[test]
fn scenario_payment_decomposition_rows() {
    let (inst, c) = cleared();
    let d = &c.dispatch;
    for (k, id, pi, pi_u, pi_d, dx, total) in DECOMPOSITION_ROWS {
        let row = format!("S{} {id}", k + 1);
        let (unit, prices, got_dx) = match inst.thermal_index(id) {
            Some(i) => {
                let p = &c.prices.thermal[i];
                let dx = d.scen(Q::ThermalRedispatchUp, i, 0, k) - d.scen(Q::ThermalRedispatchDown, i, 0, k);
                (UnitRef::Thermal(i), (p.energy.scenario[k][0], p.reserve_up.scenario[k][0], p.reserve_down.scenario[k][0]), dx)
            }
            None => {
                let j = inst.renewable_index(id).unwrap();
                let p = &c.prices.renewable[j];
                let dx = d.scen(Q::RenewableRedispatchUp, j, 0, k) - d.scen(Q::RenewableRedispatchDown, j, 0, k);
                (UnitRef::Renewable(j), (p.energy.scenario[k][0], p.reserve_up.scenario[k][0], p.reserve_down.scenario[k][0]), dx)
            }
        };
        close(prices.0, pi, &format!("{row} pi"));
        close(prices.1, pi_u, &format!("{row} pi_u"));
        close(prices.2, pi_d, &format!("{row} pi_d"));
        // S2/WT1 re-dispatch is priced at zero and not unique; the printed -13.6 is not pinned.
        if !(k == 1 && id == "WT1") {
            close(got_dx, dx, &format!("{row} dx"));
        }
        let (lhs, rhs) = payment_decomposition_terms(&inst, d, &c.prices, unit, k, 0);
        close(lhs, total, &format!("{row} Pi_U + Pi_D"));
        close(rhs, total, &format!("{row} pi dx"));
    }
}

#[test]
fn zero_rps_gives_uniform_prices_per_bus() {
    let mut inst = build_two_bus_fixture();
    for r in &mut inst.regions {
        r.rps_base = 0.0;
    }
    for s in &mut inst.scenarios {
        s.rps.iter_mut().for_each(|v| *v = 0.0);
    }
    for l in &mut inst.loads {
        l.rps_base = None;
        l.rps.clear();
    }
    let c = clear(&inst, &BuildOptions::default(), &SolverOptions::default()).unwrap();
    for (l, load) in inst.loads.iter().enumerate() {
        for (i, g) in inst.thermal.iter().enumerate().filter(|(_, g)| g.bus == load.bus) {
            close(c.prices.load[l].energy.total(0), c.prices.thermal[i].energy.total(0), &format!("{} vs {}", load.id, g.id));
        }
    }
    for (j, w) in inst.renewables.iter().enumerate() {
        for (i, g) in inst.thermal.iter().enumerate().filter(|(_, g)| g.bus == w.bus) {
            close(c.prices.renewable[j].energy.total(0), c.prices.thermal[i].energy.total(0), &format!("{} vs {}", w.id, g.id));
        }
    }
}

#[test]
fn price_csv_has_the_export_layout() {
    let (_, c) = cleared();
    let mut buf = Vec::new();
    c.prices.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "entity,period,scenario,price_kind,value");
    assert!(text.lines().any(|l| l == "WT1,0,total,energy,6.875"), "WT1 total energy row missing");
}
