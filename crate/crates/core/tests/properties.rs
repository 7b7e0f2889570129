use proptest::prelude::*;

use clearing_core::fixture::{build_two_bus_fixture, single_bus_toy};
use clearing_core::lp::objective_value;
use clearing_core::pricing::price_book;
use clearing_core::scenario::{
    inject_outage, outage_diagonal, reduce_scenarios, remove_outage, scale_deviation, ProfileEnsemble,
};
use clearing_core::settlement::settle;
use clearing_core::solver::verify_kkt;
use clearing_core::study::clear;
use clearing_core::verify::fuzz::{random_instance, FuzzConfig};
use clearing_core::verify::{finite_difference_oracle, verify_all, FdTarget};
use clearing_core::{validate_instance, BuildOptions, Error, SolverOptions};

const TOL: f64 = 1e-6;

#[test]
fn single_bus_toy_prices_at_marginal_cost() {
    let inst = single_bus_toy(10.0, 2.0);
    let opts = SolverOptions::default();
    let c = clear(&inst, &BuildOptions::default(), &opts).unwrap();
    assert!((c.dispatch.objective() - 20.0).abs() < 1e-9);
    assert!((c.prices.load[0].energy.total(0) - 2.0).abs() < 1e-9);
    assert!((c.prices.thermal[0].energy.total(0) - 2.0).abs() < 1e-9);
    assert_eq!(c.prices.thermal[0].reserve_up.total(0), 0.0);
    assert_eq!(c.prices.thermal[0].reserve_down.total(0), 0.0);
    assert_eq!(c.dispatch.kkt.gap, 0.0);

    let fd = finite_difference_oracle(&inst, &c.dispatch, &c.prices, FdTarget::LoadDemand { load: 0, period: 0 }, 1e-4, &opts)
        .unwrap();
    assert!((fd.central.unwrap() - 2.0).abs() < 1e-9, "{fd:?}");
}

#[test]
fn zero_load_settles_to_zero() {
    let inst = single_bus_toy(0.0, 2.0);
    let c = clear(&inst, &BuildOptions::default(), &SolverOptions::default()).unwrap();
    let model = &c.dispatch.model;
    assert_eq!(objective_value(&inst, model, &vec![0.0; model.problem.num_cols()]), 0.0);
    let st = &c.statement;
    assert!(st.thermal.iter().all(|g| g.expected == 0.0));
    assert!(st.load.iter().all(|l| l.total() == 0.0));
    assert_eq!(st.merchandise_surplus, 0.0);
}

#[test]
fn uncongested_fixture_has_no_surplus() {
    let mut inst = build_two_bus_fixture();
    inst.network.lines[0].capacity = 1e4;
    let c = clear(&inst, &BuildOptions::default(), &SolverOptions::default()).unwrap();
    assert!(c.statement.congestion_rent.abs() < TOL);
    assert!(c.statement.merchandise_surplus.abs() < TOL, "{}", c.statement.merchandise_surplus);
}

#[test]
fn zeroed_dual_is_caught_with_a_witness() {
    let inst = build_two_bus_fixture();
    let opts = SolverOptions::default();
    let mut c = clear(&inst, &BuildOptions::default(), &opts).unwrap();
    let sol = &mut c.dispatch;
    let row = (0..sol.lp.row_dual.len())
        .max_by(|&a, &b| sol.lp.row_dual[a].abs().total_cmp(&sol.lp.row_dual[b].abs()))
        .unwrap();
    assert!(sol.lp.row_dual[row].abs() > 1.0);
    sol.lp.row_dual[row] = 0.0;

    let kkt = verify_kkt(&sol.model.problem, &sol.lp, TOL);
    assert!(!kkt.pass);
    assert!(kkt.worst() > TOL);

    sol.kkt = kkt;
    let book = price_book(&inst, sol).unwrap();
    let st = settle(&inst, sol, &book);
    let report = verify_all(&inst, sol, &book, &st, &opts, TOL).unwrap();
    assert!(!report.pass());
    let kkt_row = report.get("KKT").unwrap();
    assert!(!kkt_row.pass);
    assert!(report.failures().iter().all(|f| f.witness.is_some()), "{report}");
}

#[test]
fn outage_of_unknown_unit_is_rejected() {
    let inst = build_two_bus_fixture();
    let err = inject_outage(&inst, &inst.scenarios[0], &["G9"]).unwrap_err();
    assert!(matches!(err, Error::UnknownUnit(ref id) if id == "G9"));
}

#[test]
fn fuzz_instances_are_valid_and_deterministic() {
    let cfg = FuzzConfig::default();
    for seed in 0..20 {
        let a = random_instance(seed, &cfg);
        assert!(validate_instance(&a).is_usable(), "seed {seed}: {}", validate_instance(&a));
        assert_eq!(a, random_instance(seed, &cfg));
    }
}

fn ensemble() -> impl Strategy<Value = ProfileEnsemble> {
    (1usize..4, 1usize..4, 2usize..12).prop_flat_map(|(entities, periods, members)| {
        prop::collection::vec(prop::collection::vec(1.0f64..100.0, entities * periods), members).prop_map(move |m| {
            ProfileEnsemble::uniform((0..entities).map(|e| format!("E{e}")).collect(), periods, m)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scaled_spread_is_proportional_to_mean(ens in ensemble(), k in 0.01f64..0.5) {
        let mu = ens.mean();
        let sigma = ens.std();
        let scaled = scale_deviation(&ens, k);
        let new_mu = scaled.mean();
        let new_sigma = scaled.std();
        for i in 0..ens.dim() {
            prop_assert!(new_mu[i].abs() <= 1e-9 * mu[i].abs().max(1.0));
            if sigma[i] > 1e-9 {
                prop_assert!((new_sigma[i] / mu[i] - k).abs() <= 1e-9, "{} vs {}", new_sigma[i] / mu[i], k);
            } else {
                prop_assert!(new_sigma[i] == 0.0);
            }
        }
    }

    #[test]
    fn reduction_conserves_probability(ens in ensemble(), target in 1usize..12) {
        let reps = reduce_scenarios(&ens, target);
        prop_assert_eq!(reps.len(), target.min(ens.len()));
        let total: f64 = reps.iter().map(|r| r.probability).sum();
        prop_assert!((total - ens.total_probability()).abs() <= 1e-12);
        let mut seen: Vec<usize> = reps.iter().flat_map(|r| r.absorbed.iter().copied()).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..ens.len()).collect::<Vec<_>>());
        for r in &reps {
            prop_assert!(r.absorbed.contains(&r.member));
            prop_assert_eq!(&r.values, &ens.members[r.member]);
        }
        prop_assert_eq!(reps, reduce_scenarios(&ens, target));
    }

    #[test]
    fn outage_injection_round_trips(mask in prop::collection::vec(any::<bool>(), 3), k in 0usize..6) {
        let inst = build_two_bus_fixture();
        let ids: Vec<&str> = inst.thermal.iter().zip(&mask).filter(|(_, m)| **m).map(|(u, _)| u.id.as_str()).collect();
        let base = &inst.scenarios[k];
        let s = inject_outage(&inst, base, &ids).unwrap();
        let diag = outage_diagonal(&inst, &s);
        for (i, u) in inst.thermal.iter().enumerate() {
            prop_assert_eq!(diag[i], mask[i] || base.outages.contains(&u.id));
        }
        let back = remove_outage(&inst, &s, &ids).unwrap();
        let kept: Vec<&String> = base.outages.iter().filter(|o| !ids.contains(&o.as_str())).collect();
        prop_assert_eq!(back.outages.iter().collect::<Vec<_>>(), kept);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fuzzed_markets_satisfy_every_property(seed in 1000u64..100_000) {
        let inst = random_instance(seed, &FuzzConfig::default());
        let opts = SolverOptions::default();
        match clear(&inst, &BuildOptions::default(), &opts) {
            Err(Error::Infeasible) => {}
            Err(e) => prop_assert!(false, "seed {seed}: {e}"),
            Ok(c) => {
                prop_assert!(c.dispatch.kkt.pass, "seed {seed}: {:?}", c.dispatch.kkt);
                let report = verify_all(&inst, &c.dispatch, &c.prices, &c.statement, &opts, TOL).unwrap();
                prop_assert!(report.pass(), "seed {seed}\n{report}");
            }
        }
    }
}
