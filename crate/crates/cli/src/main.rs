//! `clearing`: clear a market instance, verify its properties, compare Case A with Case B,
//! or sweep the renewable deviation level of the synthetic system.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, ValueEnum};
use log::info;
use serde_json::json;

use clearing_core::fixture::build_two_bus_fixture;
use clearing_core::instance::validate_instance;
use clearing_core::lp::BuildOptions;
use clearing_core::scenario::synthetic::{synthetic_118, SyntheticConfig};
use clearing_core::solver::{Backend, PivotRule, SolverOptions};
use clearing_core::study::{clear, compare_cases, deviation_sweep, sweep_is_monotone, CaseSummary, Cleared};
use clearing_core::verify::{finite_difference_oracle, FdReport, FdTarget};
use clearing_core::verify::fuzz::{run_fuzz, FuzzConfig};
use clearing_core::verify::verify_all;
use clearing_core::{Error, MarketInstance};

const OK: u8 = 0;
const INVALID: u8 = 2;
const INFEASIBLE: u8 = 3;
const SOLVER: u8 = 4;
const PROPERTY: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Clear,
    Verify,
    Sweep,
    CompareAb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Revised,
    Tableau,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PivotArg {
    /// Bland on small instances, Dantzig on large ones.
    Auto,
    Bland,
    Dantzig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Table,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "clearing", version, about = "Scenario-based energy and reserve market clearing")]
struct Cli {
    /// Instance JSON file, `fixture` for the two-bus system or `synthetic` for the seeded
    /// 118-bus system.
    #[arg(long, default_value = "fixture")]
    instance: String,
    #[arg(long, value_enum, default_value_t = Mode::Clear)]
    mode: Mode,
    #[arg(long, value_enum, default_value_t = BackendArg::Revised)]
    backend: BackendArg,
    #[arg(long, value_enum, default_value_t = PivotArg::Auto)]
    pivot: PivotArg,
    /// Tolerance for property checks.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Primal feasibility tolerance of the simplex.
    #[arg(long)]
    feas_tol: Option<f64>,
    /// Reduced-cost tolerance of the simplex.
    #[arg(long)]
    opt_tol: Option<f64>,
    /// Simplex iteration cap.
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Also write the LP as row/column/value triplets to `lp.txt` (clear mode).
    #[arg(long)]
    dump_lp: bool,
    /// Seed of the synthetic system, or the first fuzz seed.
    #[arg(long, default_value_t = 118)]
    seed: u64,
    /// Verify this many fuzzed instances instead of `--instance`.
    #[arg(long)]
    fuzz: Option<u64>,
    /// Let renewables offer reserve (Case A) or not (Case B).
    #[arg(long, value_enum, default_value_t = Switch::On)]
    res_reserve: Switch,
    /// Directory for CSV output.
    #[arg(long, env = "CLEARING_OUT_DIR", default_value = "clearing-out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Also bracket every energy and reserve price by finite differences (verify mode).
    #[arg(long)]
    fd_oracle: bool,
    #[arg(long, default_value_t = 1e-4)]
    fd_step: f64,
    /// Renewable penetration of the synthetic system.
    #[arg(long)]
    penetration: Option<f64>,
    /// Renewable deviation level of the synthetic system; sweep mode takes a list.
    #[arg(long, value_delimiter = ',')]
    deviation_level: Vec<f64>,
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<Error>() {
            Some(Error::Invalid(_) | Error::Dimension(_) | Error::UnknownUnit(_) | Error::Json(_)) => INVALID,
            Some(Error::Infeasible | Error::InfeasiblePerturbation(_)) => INFEASIBLE,
            Some(Error::Solver(_) | Error::Unbounded | Error::IterationLimit(_) | Error::MissingDual(_)) => SOLVER,
            _ => 1,
        };
        Failure { code, error }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

type Outcome = std::result::Result<u8, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    if let (Mode::Verify, Some(n)) = (cli.mode, cli.fuzz) {
        return cmd_fuzz(cli, n);
    }
    if cli.mode == Mode::Sweep {
        return cmd_sweep(cli);
    }
    let inst = load_instance(cli)?;
    let report = validate_instance(&inst);
    if !report.is_usable() {
        eprintln!("{report}");
        return Ok(INVALID);
    }
    let opts = solver_options(cli, &inst);
    match cli.mode {
        Mode::Clear => cmd_clear(cli, &inst, &opts),
        Mode::Verify => cmd_verify(cli, &inst, &opts),
        Mode::CompareAb => cmd_compare(cli, &inst, &opts),
        Mode::Sweep => unreachable!("handled above"),
    }
}

fn synthetic_config(cli: &Cli) -> SyntheticConfig {
    let mut cfg = SyntheticConfig { seed: cli.seed, ..SyntheticConfig::default() };
    if let Some(p) = cli.penetration {
        cfg.penetration = p;
    }
    if let Some(&d) = cli.deviation_level.first() {
        cfg.deviation_level = d;
    }
    cfg
}

fn load_instance(cli: &Cli) -> std::result::Result<MarketInstance, Failure> {
    match cli.instance.as_str() {
        "fixture" => Ok(build_two_bus_fixture()),
        "synthetic" => Ok(synthetic_118(&synthetic_config(cli))?),
        path => MarketInstance::load(path)
            .with_context(|| format!("reading instance {path}"))
            .map_err(|e| Failure { code: INVALID, error: e }),
    }
}

fn solver_options(cli: &Cli, inst: &MarketInstance) -> SolverOptions {
    let large = inst.thermal.len() + inst.renewables.len() + inst.loads.len() > 50;
    let pivot = match cli.pivot {
        PivotArg::Bland => PivotRule::Bland,
        PivotArg::Dantzig => PivotRule::Dantzig,
        PivotArg::Auto if large => PivotRule::Dantzig,
        PivotArg::Auto => PivotRule::Bland,
    };
    let backend = match cli.backend {
        BackendArg::Revised => Backend::Revised,
        BackendArg::Tableau => Backend::Tableau,
    };
    let d = SolverOptions::default();
    let max_iterations = cli.max_iterations.unwrap_or(if large { 2_000_000 } else { d.max_iterations });
    SolverOptions {
        backend,
        pivot,
        max_iterations,
        feas_tol: cli.feas_tol.unwrap_or(d.feas_tol),
        opt_tol: cli.opt_tol.unwrap_or(d.opt_tol),
        ..d
    }
}

fn build_options(cli: &Cli) -> BuildOptions {
    BuildOptions { renewable_reserve: cli.res_reserve == Switch::On, ..BuildOptions::default() }
}

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn cmd_clear(cli: &Cli, inst: &MarketInstance, opts: &SolverOptions) -> Outcome {
    let c = clear(inst, &build_options(cli), opts)?;
    if cli.dump_lp {
        let m = &c.dispatch.model;
        let mut w = create(&cli.out, "lp.txt")?;
        m.problem.write_triplets(&mut w, Some((&m.vars, &m.cons))).context("writing lp.txt")?;
        eprintln!("wrote lp.txt to {}", cli.out.display());
    }
    match cli.format {
        Format::Csv => {
            write_clearing_csv(&cli.out, inst, &c)?;
            println!("wrote dispatch.csv, prices.csv, settlement.csv, profits.csv to {}", cli.out.display());
        }
        Format::Json => {
            let doc = json!({
                "instance": inst.name,
                "objective": c.dispatch.objective(),
                "kkt_worst": c.dispatch.kkt.worst(),
                "quantities": c.dispatch.records(inst),
                "prices": c.prices.records(),
                "settlement": c.statement,
            });
            println!("{}", serde_json::to_string_pretty(&doc).map_err(anyhow::Error::from)?);
        }
        Format::Table => print_clearing(inst, &c),
    }
    Ok(OK)
}

fn write_clearing_csv(dir: &Path, inst: &MarketInstance, c: &Cleared) -> anyhow::Result<()> {
    c.dispatch.write_csv(inst, create(dir, "dispatch.csv")?)?;
    c.prices.write_csv(create(dir, "prices.csv")?)?;
    c.statement.write_summary_csv(create(dir, "settlement.csv")?)?;
    c.statement.write_profit_csv(create(dir, "profits.csv")?)?;
    Ok(())
}

fn print_clearing(inst: &MarketInstance, c: &Cleared) {
    use clearing_core::lp::Quantity as Q;
    let d = &c.dispatch;
    println!("{}: expected cost {:.3}  (KKT worst {:.1e})", inst.name, d.objective(), d.kkt.worst());
    for t in 0..inst.periods {
        println!("\nperiod {t}");
        println!("{:<8} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}", "unit", "energy", "r_up", "r_down", "price", "price_up", "price_dn");
        for (i, u) in inst.thermal.iter().enumerate() {
            let p = &c.prices.thermal[i];
            println!(
                "{:<8} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>10.3}",
                u.id,
                d.base(Q::ThermalEnergy, i, t),
                d.base(Q::ThermalUp, i, t),
                d.base(Q::ThermalDown, i, t),
                p.energy.total(t),
                p.reserve_up.total(t),
                p.reserve_down.total(t)
            );
        }
        for (j, u) in inst.renewables.iter().enumerate() {
            let p = &c.prices.renewable[j];
            println!(
                "{:<8} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>10.3}",
                u.id,
                d.base(Q::RenewableEnergy, j, t),
                d.base(Q::RenewableUp, j, t),
                d.base(Q::RenewableDown, j, t),
                p.energy.total(t),
                p.reserve_up.total(t),
                p.reserve_down.total(t)
            );
        }
        for (l, load) in inst.loads.iter().enumerate() {
            println!("{:<8} {:>10.3} {:>43.3}", load.id, load.demand[t], c.prices.load[l].energy.total(t));
        }
    }
    let st = &c.statement;
    println!("\nsettlement");
    println!("{:<8} {:>12} {:>12} {:>12} {:>12}", "entity", "energy", "reserve", "deviation", "expected");
    for g in &st.thermal {
        println!("{:<8} {:>12.3} {:>12.3} {:>12.3} {:>12.3}", g.id, g.energy, g.reserve, g.deviation, g.expected);
    }
    for w in &st.renewable {
        println!("{:<8} {:>12.3} {:>12.3} {:>12.3} {:>12.3}", w.id, w.energy, w.reserve, w.deviation, w.total());
    }
    for l in &st.load {
        println!("{:<8} {:>12.3} {:>12} {:>12.3} {:>12.3}", l.id, l.energy, "", l.deviation, l.total());
    }
    println!("merchandise surplus {:.3}, congestion rent {:.3}", st.merchandise_surplus, st.congestion_rent);
}

fn fd_targets(inst: &MarketInstance) -> Vec<FdTarget> {
    let mut out = Vec::new();
    for period in 0..inst.periods {
        out.extend((0..inst.loads.len()).map(|load| FdTarget::LoadDemand { load, period }));
        for unit in 0..inst.thermal.len() {
            out.push(FdTarget::ThermalEnergy { unit, period });
            out.push(FdTarget::ThermalUp { unit, period });
            out.push(FdTarget::ThermalDown { unit, period });
        }
        for unit in 0..inst.renewables.len() {
            out.push(FdTarget::RenewableEnergy { unit, period });
            out.push(FdTarget::RenewableUp { unit, period });
            out.push(FdTarget::RenewableDown { unit, period });
        }
    }
    out
}

fn cmd_verify(cli: &Cli, inst: &MarketInstance, opts: &SolverOptions) -> Outcome {
    let c = clear(inst, &build_options(cli), opts)?;
    let report = verify_all(inst, &c.dispatch, &c.prices, &c.statement, opts, cli.tol)?;
    let mut fd: Vec<FdReport> = Vec::new();
    if cli.fd_oracle {
        for target in fd_targets(inst) {
            fd.push(finite_difference_oracle(inst, &c.dispatch, &c.prices, target, cli.fd_step, opts)?);
        }
    }
    // slopes are exact up to rounding of the re-solved objective
    let fd_tol = cli.tol.max(1e-9 * c.dispatch.objective().abs() / cli.fd_step);
    let fd_fail: Vec<&FdReport> = fd.iter().filter(|r| r.bracket_gap() > fd_tol).collect();
    match cli.format {
        Format::Json => {
            let doc = json!({ "instance": inst.name, "pass": report.pass() && fd_fail.is_empty(), "properties": report, "finite_differences": fd });
            println!("{}", serde_json::to_string_pretty(&doc).map_err(anyhow::Error::from)?);
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(create(&cli.out, "properties.csv")?);
            for r in &report.results {
                w.serialize(r).map_err(anyhow::Error::from)?;
            }
            w.flush().map_err(anyhow::Error::from)?;
            println!("wrote properties.csv to {}", cli.out.display());
        }
        Format::Table => {
            print!("{report}");
            if !fd.is_empty() {
                println!("\n{:<44} {:>12} {:>12} {:>12}  bracket", "finite difference", "left", "right", "analytic");
                for r in &fd {
                    println!(
                        "{:<44} {:>12.4} {:>12.4} {:>12.4}  {}",
                        format!("{:?}", r.target),
                        r.left,
                        r.right,
                        r.analytic,
                        if r.bracket_gap() <= fd_tol { "ok" } else { "MISS" }
                    );
                }
            }
        }
    }
    Ok(if report.pass() && fd_fail.is_empty() { OK } else { PROPERTY })
}

fn cmd_fuzz(cli: &Cli, n: u64) -> Outcome {
    let opts = SolverOptions::default();
    let summary = run_fuzz(cli.seed..cli.seed + n, &FuzzConfig::default(), &opts, cli.tol)?;
    match cli.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&summary).map_err(anyhow::Error::from)?),
        _ => {
            println!("seeds {}..{}: {} KKT-verified, {} infeasible", cli.seed, cli.seed + n, summary.verified, summary.infeasible.len());
            for (name, w) in &summary.worst {
                println!("  {name:<32} worst {w:.3e}");
            }
            for (seed, names) in &summary.failures {
                println!("  seed {seed} failed: {}", names.join(", "));
            }
        }
    }
    Ok(if summary.pass() { OK } else { PROPERTY })
}

fn print_summary(label: &str, s: &CaseSummary) {
    println!(
        "{label:<8} {:>14.3} {:>14.3} {:>14.3} {:>14.3} {:>14.3}",
        s.cost, s.thermal_profit, s.renewable_profit, s.renewable_min_profit, s.congestion_rent
    );
}

fn cmd_compare(cli: &Cli, inst: &MarketInstance, opts: &SolverOptions) -> Outcome {
    let cmp = compare_cases(inst, opts).context("clearing Case A and Case B")?;
    let holds = cmp.cost_order_holds(cli.tol);
    match cli.format {
        Format::Json => {
            let doc = json!({ "instance": inst.name, "case_a": cmp.case_a, "case_b": cmp.case_b, "cost_order_holds": holds });
            println!("{}", serde_json::to_string_pretty(&doc).map_err(anyhow::Error::from)?);
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(create(&cli.out, "compare.csv")?);
            w.write_record(["case", "cost", "thermal_profit", "renewable_profit", "renewable_min_profit", "congestion_rent"])
                .map_err(anyhow::Error::from)?;
            for (name, s) in [("A", &cmp.case_a), ("B", &cmp.case_b)] {
                w.write_record([
                    name.to_string(),
                    s.cost.to_string(),
                    s.thermal_profit.to_string(),
                    s.renewable_profit.to_string(),
                    s.renewable_min_profit.to_string(),
                    s.congestion_rent.to_string(),
                ])
                .map_err(anyhow::Error::from)?;
            }
            w.flush().map_err(anyhow::Error::from)?;
            println!("wrote compare.csv to {}", cli.out.display());
        }
        Format::Table => {
            println!("{:<8} {:>14} {:>14} {:>14} {:>14} {:>14}", "case", "cost", "thermal", "renewable", "min RES", "cong. rent");
            print_summary("A", &cmp.case_a);
            print_summary("B", &cmp.case_b);
            println!("cost(A) <= cost(B): {holds}");
        }
    }
    Ok(if holds { OK } else { PROPERTY })
}

fn cmd_sweep(cli: &Cli) -> Outcome {
    if cli.instance != "synthetic" {
        return Err(Failure { code: INVALID, error: anyhow!("sweep mode needs --instance synthetic") });
    }
    let levels = if cli.deviation_level.is_empty() { vec![0.05, 0.10, 0.15] } else { cli.deviation_level.clone() };
    let cfg = synthetic_config(cli);
    let opts = solver_options(cli, &synthetic_118(&cfg)?);
    let points = deviation_sweep(&cfg, &levels, &opts)?;
    info!("swept {} levels", points.len());
    let monotone = sweep_is_monotone(&points, cli.tol);
    match cli.format {
        Format::Json => {
            let doc = json!({ "points": points, "monotone": monotone });
            println!("{}", serde_json::to_string_pretty(&doc).map_err(anyhow::Error::from)?);
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(create(&cli.out, "sweep.csv")?);
            w.write_record(["deviation_level", "cost", "thermal_profit", "renewable_profit", "renewable_min_profit"])
                .map_err(anyhow::Error::from)?;
            for p in &points {
                let s = &p.summary;
                w.write_record([p.deviation_level, s.cost, s.thermal_profit, s.renewable_profit, s.renewable_min_profit].map(|v| v.to_string()))
                    .map_err(anyhow::Error::from)?;
            }
            w.flush().map_err(anyhow::Error::from)?;
            println!("wrote sweep.csv to {}", cli.out.display());
        }
        Format::Table => {
            println!("{:<8} {:>14} {:>14} {:>14} {:>14} {:>14}", "level", "cost", "thermal", "renewable", "min RES", "cong. rent");
            for p in &points {
                print_summary(&format!("{:.2}", p.deviation_level), &p.summary);
            }
            println!("thermal profit rising and renewable profit falling: {monotone}");
        }
    }
    Ok(OK)
}
