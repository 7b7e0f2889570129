//! Assembly of the scenario-based dispatch LP with named rows and columns.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::MarketInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Quantity {
    ThermalEnergy,
    ThermalUp,
    ThermalDown,
    RenewableEnergy,
    RenewableUp,
    RenewableDown,
    Trade,
    ThermalRedispatchUp,
    ThermalRedispatchDown,
    RenewableRedispatchUp,
    RenewableRedispatchDown,
}

impl Quantity {
    pub fn symbol(self) -> &'static str {
        match self {
            Quantity::ThermalEnergy => "g",
            Quantity::ThermalUp => "r_ug",
            Quantity::ThermalDown => "r_dg",
            Quantity::RenewableEnergy => "w",
            Quantity::RenewableUp => "r_uw",
            Quantity::RenewableDown => "r_dw",
            Quantity::Trade => "e",
            Quantity::ThermalRedispatchUp => "dg+",
            Quantity::ThermalRedispatchDown => "dg-",
            Quantity::RenewableRedispatchUp => "dw+",
            Quantity::RenewableRedispatchDown => "dw-",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct VarKey {
    pub quantity: Quantity,
    /// Unit index within its class, or trade-pair index.
    pub entity: usize,
    pub period: usize,
    pub scenario: Option<usize>,
}

impl VarKey {
    pub fn base(quantity: Quantity, entity: usize, period: usize) -> Self {
        VarKey { quantity, entity, period, scenario: None }
    }

    pub fn scen(quantity: Quantity, entity: usize, period: usize, k: usize) -> Self {
        VarKey { quantity, entity, period, scenario: Some(k) }
    }
}

impl fmt::Display for VarKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.scenario {
            Some(k) => write!(f, "{}[{},t{},k{}]", self.quantity.symbol(), self.entity, self.period, k),
            None => write!(f, "{}[{},t{}]", self.quantity.symbol(), self.entity, self.period),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Family {
    Balance,
    Flow,
    RenewableCapacity,
    ThermalCapacity,
    ReserveCapability,
    Ramping,
    Rps,
    Trade,
    ScenarioBalance,
    ScenarioFlow,
    ThermalRedispatchUp,
    ThermalRedispatchDown,
    RenewableRedispatchUp,
    RenewableRedispatchDown,
    ScenarioRps,
}

impl Family {
    pub fn tag(self) -> &'static str {
        match self {
            Family::Balance => "balance",
            Family::Flow => "flow",
            Family::RenewableCapacity => "res-capacity",
            Family::ThermalCapacity => "thermal-capacity",
            Family::ReserveCapability => "reserve-capability",
            Family::Ramping => "ramping",
            Family::Rps => "rps",
            Family::Trade => "trade",
            Family::ScenarioBalance => "scenario-balance",
            Family::ScenarioFlow => "scenario-flow",
            Family::ThermalRedispatchUp => "thermal-redispatch-up",
            Family::ThermalRedispatchDown => "thermal-redispatch-down",
            Family::RenewableRedispatchUp => "res-redispatch-up",
            Family::RenewableRedispatchDown => "res-redispatch-down",
            Family::ScenarioRps => "scenario-rps",
        }
    }
}

/// Constraint multipliers. Names ending in `Lower` belong to lower-bound rows, `Upper` to
/// upper-bound rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Multiplier {
    Lambda,
    MuUpper,
    MuLower,
    IotaUpLower,
    IotaUpUpper,
    IotaDownLower,
    IotaDownUpper,
    CapacityLower,
    CapacityUpper,
    EllUpLower,
    EllUpUpper,
    EllDownLower,
    EllDownUpper,
    GammaDown,
    GammaUp,
    Nu,
    TradeLower,
    ExportCap,
    ScenarioLambda,
    ScenarioMuUpper,
    ScenarioMuLower,
    EtaLower,
    EtaUpper,
    BetaLower,
    BetaUpper,
    TauLower,
    TauUpper,
    ZetaLower,
    ZetaUpper,
    ScenarioNu,
}

impl Multiplier {
    pub fn family(self) -> Family {
        use Multiplier::*;
        match self {
            Lambda => Family::Balance,
            MuUpper | MuLower => Family::Flow,
            IotaUpLower | IotaUpUpper | IotaDownLower | IotaDownUpper => Family::RenewableCapacity,
            CapacityLower | CapacityUpper => Family::ThermalCapacity,
            EllUpLower | EllUpUpper | EllDownLower | EllDownUpper => Family::ReserveCapability,
            GammaDown | GammaUp => Family::Ramping,
            Nu => Family::Rps,
            TradeLower | ExportCap => Family::Trade,
            ScenarioLambda => Family::ScenarioBalance,
            ScenarioMuUpper | ScenarioMuLower => Family::ScenarioFlow,
            EtaLower | EtaUpper => Family::ThermalRedispatchUp,
            BetaLower | BetaUpper => Family::ThermalRedispatchDown,
            TauLower | TauUpper => Family::RenewableRedispatchUp,
            ZetaLower | ZetaUpper => Family::RenewableRedispatchDown,
            ScenarioNu => Family::ScenarioRps,
        }
    }

    pub fn symbol(self) -> &'static str {
        use Multiplier::*;
        match self {
            Lambda => "lambda",
            MuUpper => "mu+",
            MuLower => "mu-",
            IotaUpLower => "iota_U_lo",
            IotaUpUpper => "iota_U_up",
            IotaDownLower => "iota_D_lo",
            IotaDownUpper => "iota_D_up",
            CapacityLower => "i_lo",
            CapacityUpper => "i_up",
            EllUpLower => "ell_U_lo",
            EllUpUpper => "ell_U_up",
            EllDownLower => "ell_D_lo",
            EllDownUpper => "ell_D_up",
            GammaDown => "gamma_D",
            GammaUp => "gamma_U",
            Nu => "nu",
            TradeLower => "rho",
            ExportCap => "kappa",
            ScenarioLambda => "lambda_k",
            ScenarioMuUpper => "mu_k+",
            ScenarioMuLower => "mu_k-",
            EtaLower => "eta_lo",
            EtaUpper => "eta_up",
            BetaLower => "beta_lo",
            BetaUpper => "beta_up",
            TauLower => "tau_lo",
            TauUpper => "tau_up",
            ZetaLower => "zeta_lo",
            ZetaUpper => "zeta_up",
            ScenarioNu => "nu_k",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct RowKey {
    pub multiplier: Multiplier,
    /// Unit, line or region index depending on the family; 0 for balance rows.
    pub entity: usize,
    /// Period; 0 for horizon-wide RPS rows.
    pub period: usize,
    pub scenario: Option<usize>,
}

impl RowKey {
    pub fn base(multiplier: Multiplier, entity: usize, period: usize) -> Self {
        RowKey { multiplier, entity, period, scenario: None }
    }

    pub fn scen(multiplier: Multiplier, entity: usize, period: usize, k: usize) -> Self {
        RowKey { multiplier, entity, period, scenario: Some(k) }
    }
}

impl fmt::Display for RowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.scenario {
            Some(k) => write!(f, "{}[{},t{},k{}]", self.multiplier.symbol(), self.entity, self.period, k),
            None => write!(f, "{}[{},t{}]", self.multiplier.symbol(), self.entity, self.period),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct VariableMap {
    keys: Vec<VarKey>,
    index: HashMap<VarKey, usize>,
}

impl VariableMap {
    fn push(&mut self, key: VarKey) -> usize {
        let c = self.keys.len();
        let prev = self.index.insert(key, c);
        debug_assert!(prev.is_none(), "duplicate column {key}");
        self.keys.push(key);
        c
    }

    pub fn col(&self, key: &VarKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn key(&self, col: usize) -> VarKey {
        self.keys[col]
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[VarKey] {
        &self.keys
    }
}

#[derive(Debug, Clone, Default)]
pub struct ConstraintMap {
    keys: Vec<RowKey>,
    index: HashMap<RowKey, usize>,
}

impl ConstraintMap {
    fn push(&mut self, key: RowKey) -> usize {
        let r = self.keys.len();
        let prev = self.index.insert(key, r);
        debug_assert!(prev.is_none(), "duplicate row {key}");
        self.keys.push(key);
        r
    }

    pub fn row(&self, key: &RowKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn key(&self, row: usize) -> RowKey {
        self.keys[row]
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[RowKey] {
        &self.keys
    }

    pub fn count(&self, family: Family) -> usize {
        self.keys.iter().filter(|k| k.multiplier.family() == family).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    /// Hint that the solver may leave this row out until it is violated.
    pub lazy: bool,
}

impl Row {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }
}

/// Minimize `cost·x` subject to `rows` and `lower <= x <= upper`.
#[derive(Debug, Clone, Default)]
pub struct LpProblem {
    pub cost: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<Row>,
    /// Reporting group of each column and row, used by the KKT audit.
    pub col_group: Vec<&'static str>,
    pub row_group: Vec<&'static str>,
}

impl LpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_col(&mut self, cost: f64, lower: f64, upper: f64, group: &'static str) -> usize {
        self.cost.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.col_group.push(group);
        self.cost.len() - 1
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64, group: &'static str) -> usize {
        self.rows.push(Row { coeffs, sense, rhs, lazy: false });
        self.row_group.push(group);
        self.rows.len() - 1
    }

    pub fn num_cols(&self) -> usize {
        self.cost.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.cost.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_cols();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Dimension("bound vectors differ from column count".into()));
        }
        if self.cost.iter().any(|c| !c.is_finite()) {
            return Err(Error::Dimension("non-finite objective coefficient".into()));
        }
        for (i, r) in self.rows.iter().enumerate() {
            if !r.rhs.is_finite() {
                return Err(Error::Dimension(format!("row {i} has a non-finite right-hand side")));
            }
            for &(j, a) in &r.coeffs {
                if j >= n || !a.is_finite() {
                    return Err(Error::Dimension(format!("row {i} has a bad coefficient")));
                }
            }
        }
        Ok(())
    }

    /// Row/column/value triplets plus bounds, one record per line.
    pub fn write_triplets<W: Write>(&self, out: &mut W, names: Option<(&VariableMap, &ConstraintMap)>) -> std::io::Result<()> {
        let nnz: usize = self.rows.iter().map(|r| r.coeffs.len()).sum();
        writeln!(out, "# rows {} cols {} nnz {}", self.num_rows(), self.num_cols(), nnz)?;
        for (i, r) in self.rows.iter().enumerate() {
            let s = match r.sense {
                Sense::Le => "L",
                Sense::Ge => "G",
                Sense::Eq => "E",
            };
            match names {
                Some((_, cm)) => writeln!(out, "R {i} {s} {:e} {}", r.rhs, cm.key(i))?,
                None => writeln!(out, "R {i} {s} {:e}", r.rhs)?,
            }
        }
        for j in 0..self.num_cols() {
            match names {
                Some((vm, _)) => writeln!(
                    out,
                    "C {j} {:e} {:e} {:e} {}",
                    self.lower[j],
                    self.upper[j],
                    self.cost[j],
                    vm.key(j)
                )?,
                None => writeln!(out, "C {j} {:e} {:e} {:e}", self.lower[j], self.upper[j], self.cost[j])?,
            }
        }
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, a) in &r.coeffs {
                writeln!(out, "A {i} {j} {a:e}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum UnitRef {
    Thermal(usize),
    Renewable(usize),
}

/// Turns one unit's period-t quantities into parameters: its columns are fixed, its own
/// capacity, reserve and ramp rows at t are dropped and its bid costs at t removed.
/// In outage scenarios the outage deviation stays at `outage_energy`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Freeze {
    pub unit: UnitRef,
    pub period: usize,
    pub energy: f64,
    pub up: f64,
    pub down: f64,
    pub outage_energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildOptions {
    /// Emit the `flow >= -f` side of every line limit.
    pub two_sided_flows: bool,
    /// Allow renewable units to offer reserve; when false their reserve columns are fixed at 0.
    pub renewable_reserve: bool,
    /// Mark flow rows as lazy for solvers that support row generation.
    pub lazy_flows: bool,
    pub freeze: Option<Freeze>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { two_sided_flows: true, renewable_reserve: true, lazy_flows: false, freeze: None }
    }
}

#[derive(Debug, Clone)]
pub struct LpModel {
    pub problem: LpProblem,
    pub vars: VariableMap,
    pub cons: ConstraintMap,
    pub options: BuildOptions,
}

impl LpModel {
    pub fn col(&self, key: VarKey) -> Option<usize> {
        self.vars.col(&key)
    }

    pub fn row(&self, key: RowKey) -> Option<usize> {
        self.cons.row(&key)
    }
}

struct Builder {
    p: LpProblem,
    vars: VariableMap,
    cons: ConstraintMap,
}

impl Builder {
    fn var(&mut self, key: VarKey, cost: f64) -> usize {
        let c = self.vars.push(key);
        self.p.add_col(cost, f64::NEG_INFINITY, f64::INFINITY, key.quantity.symbol());
        c
    }

    fn row(&mut self, key: RowKey, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        let coeffs: Vec<(usize, f64)> = coeffs.into_iter().filter(|&(_, a)| a != 0.0).collect();
        self.cons.push(key);
        self.p.add_row(coeffs, sense, rhs, key.multiplier.family().tag());
    }
}

fn check_dims(inst: &MarketInstance) -> Result<()> {
    let k = inst.scenarios.len();
    let t = inst.periods;
    for u in &inst.renewables {
        if u.available.len() != t
            || u.surplus.len() != k
            || u.deficit.len() != k
            || u.surplus.iter().chain(&u.deficit).any(|r| r.len() != t)
        {
            return Err(Error::Dimension(format!("renewable {} lacks deviation entries", u.id)));
        }
    }
    for d in &inst.loads {
        if d.demand.len() != t || d.deviation.len() != k || d.deviation.iter().any(|r| r.len() != t) {
            return Err(Error::Dimension(format!("load {} lacks deviation entries", d.id)));
        }
        if !d.rps.is_empty() && d.rps.len() != k {
            return Err(Error::Dimension(format!("load {} lacks scenario RPS entries", d.id)));
        }
    }
    for s in &inst.scenarios {
        if s.rps.len() != inst.regions.len() {
            return Err(Error::Dimension(format!("scenario {} lacks regional RPS entries", s.id)));
        }
    }
    if inst.network.shift_factors.len() != inst.network.lines.len()
        || inst.network.shift_factors.iter().any(|r| r.len() != inst.network.bus_count)
    {
        return Err(Error::Dimension("shift-factor matrix shape".into()));
    }
    Ok(())
}

/// Builds the dispatch LP with default options.
pub fn build_lp(inst: &MarketInstance) -> Result<LpModel> {
    build_lp_with(inst, &BuildOptions::default())
}

pub fn build_lp_with(inst: &MarketInstance, opts: &BuildOptions) -> Result<LpModel> {
    use Multiplier as M;
    use Quantity as Q;
    check_dims(inst)?;

    let nt = inst.periods;
    let nk = inst.scenarios.len();
    let ng = inst.thermal.len();
    let nw = inst.renewables.len();
    let nl = inst.network.lines.len();
    let nm = inst.regions.len();
    let pairs = inst.trade_pairs();
    let mask = inst.outage_mask();
    let s = &inst.network.shift_factors;

    let frozen_thermal = |i: usize, t: usize| {
        matches!(opts.freeze, Some(Freeze { unit: UnitRef::Thermal(u), period, .. }) if u == i && period == t)
    };
    let frozen_renewable = |j: usize, t: usize| {
        matches!(opts.freeze, Some(Freeze { unit: UnitRef::Renewable(u), period, .. }) if u == j && period == t)
    };

    let mut b = Builder { p: LpProblem::new(), vars: VariableMap::default(), cons: ConstraintMap::default() };

    // columns, family-major
    for t in 0..nt {
        for (i, u) in inst.thermal.iter().enumerate() {
            b.var(VarKey::base(Q::ThermalEnergy, i, t), u.cost_energy);
        }
    }
    for t in 0..nt {
        for (i, u) in inst.thermal.iter().enumerate() {
            b.var(VarKey::base(Q::ThermalUp, i, t), u.cost_reserve_up);
        }
    }
    for t in 0..nt {
        for (i, u) in inst.thermal.iter().enumerate() {
            b.var(VarKey::base(Q::ThermalDown, i, t), u.cost_reserve_down);
        }
    }
    for q in [Q::RenewableEnergy, Q::RenewableUp, Q::RenewableDown] {
        for t in 0..nt {
            for j in 0..nw {
                let c = b.var(VarKey::base(q, j, t), 0.0);
                if q != Q::RenewableEnergy && !opts.renewable_reserve {
                    b.p.lower[c] = 0.0;
                    b.p.upper[c] = 0.0;
                }
            }
        }
    }
    for t in 0..nt {
        for p in 0..pairs.len() {
            b.var(VarKey::base(Q::Trade, p, t), 0.0);
        }
    }
    for k in 0..nk {
        let eps = inst.scenarios[k].probability;
        for t in 0..nt {
            for (i, u) in inst.thermal.iter().enumerate() {
                b.var(VarKey::scen(Q::ThermalRedispatchUp, i, t, k), eps * u.cost_redispatch_up);
            }
            for (i, u) in inst.thermal.iter().enumerate() {
                b.var(VarKey::scen(Q::ThermalRedispatchDown, i, t, k), -eps * u.cost_redispatch_down);
            }
            for j in 0..nw {
                b.var(VarKey::scen(Q::RenewableRedispatchUp, j, t, k), 0.0);
            }
            for j in 0..nw {
                b.var(VarKey::scen(Q::RenewableRedispatchDown, j, t, k), 0.0);
            }
        }
    }

    let col = |b: &Builder, q: Quantity, e: usize, t: usize, k: Option<usize>| {
        b.vars.col(&VarKey { quantity: q, entity: e, period: t, scenario: k }).expect("column")
    };

    if let Some(fz) = opts.freeze {
        let t = fz.period;
        let cols = match fz.unit {
            UnitRef::Thermal(i) => [
                (col(&b, Q::ThermalEnergy, i, t, None), fz.energy),
                (col(&b, Q::ThermalUp, i, t, None), fz.up),
                (col(&b, Q::ThermalDown, i, t, None), fz.down),
            ],
            UnitRef::Renewable(j) => [
                (col(&b, Q::RenewableEnergy, j, t, None), fz.energy),
                (col(&b, Q::RenewableUp, j, t, None), fz.up),
                (col(&b, Q::RenewableDown, j, t, None), fz.down),
            ],
        };
        for (c, v) in cols {
            b.p.lower[c] = v;
            b.p.upper[c] = v;
            b.p.cost[c] = 0.0;
        }
    }

    let injection_terms = |b: &Builder, t: usize, k: Option<usize>, weight: &dyn Fn(usize) -> f64| {
        let mut terms = Vec::new();
        for (i, u) in inst.thermal.iter().enumerate() {
            let a = weight(u.bus);
            if a == 0.0 {
                continue;
            }
            terms.push((col(b, Q::ThermalEnergy, i, t, None), a));
            if let Some(k) = k {
                terms.push((col(b, Q::ThermalRedispatchUp, i, t, Some(k)), a));
                terms.push((col(b, Q::ThermalRedispatchDown, i, t, Some(k)), -a));
            }
        }
        for (j, u) in inst.renewables.iter().enumerate() {
            let a = weight(u.bus);
            if a == 0.0 {
                continue;
            }
            terms.push((col(b, Q::RenewableEnergy, j, t, None), a));
            if let Some(k) = k {
                terms.push((col(b, Q::RenewableRedispatchUp, j, t, Some(k)), a));
                terms.push((col(b, Q::RenewableRedispatchDown, j, t, Some(k)), -a));
            }
        }
        terms
    };
    let demand = |t: usize, k: Option<usize>, weight: &dyn Fn(usize) -> f64| -> f64 {
        inst.loads
            .iter()
            .map(|d| weight(d.bus) * (d.demand[t] + k.map_or(0.0, |k| d.deviation[k][t])))
            .sum()
    };

    // base balance and flows
    for t in 0..nt {
        let terms = injection_terms(&b, t, None, &|_| 1.0);
        b.row(RowKey::base(M::Lambda, 0, t), terms, Sense::Eq, demand(t, None, &|_| 1.0));
    }
    for t in 0..nt {
        for l in 0..nl {
            let w = |bus: usize| s[l][bus];
            let terms = injection_terms(&b, t, None, &w);
            let load = demand(t, None, &w);
            let cap = inst.network.lines[l].capacity;
            b.row(RowKey::base(M::MuUpper, l, t), terms.clone(), Sense::Le, cap + load);
            if opts.two_sided_flows {
                b.row(RowKey::base(M::MuLower, l, t), terms, Sense::Ge, -cap + load);
            }
        }
    }

    // renewable output and reserve caps
    for t in 0..nt {
        for (j, u) in inst.renewables.iter().enumerate() {
            if frozen_renewable(j, t) {
                continue;
            }
            let w = col(&b, Q::RenewableEnergy, j, t, None);
            let ru = col(&b, Q::RenewableUp, j, t, None);
            let rd = col(&b, Q::RenewableDown, j, t, None);
            b.row(RowKey::base(M::IotaUpLower, j, t), vec![(ru, 1.0)], Sense::Ge, 0.0);
            b.row(RowKey::base(M::IotaUpUpper, j, t), vec![(w, 1.0), (ru, 1.0)], Sense::Le, u.available[t]);
            b.row(RowKey::base(M::IotaDownLower, j, t), vec![(rd, 1.0)], Sense::Ge, 0.0);
            b.row(RowKey::base(M::IotaDownUpper, j, t), vec![(rd, 1.0), (w, -1.0)], Sense::Le, 0.0);
        }
    }

    // thermal capacity
    for t in 0..nt {
        for (i, u) in inst.thermal.iter().enumerate() {
            if frozen_thermal(i, t) {
                continue;
            }
            let g = col(&b, Q::ThermalEnergy, i, t, None);
            let ru = col(&b, Q::ThermalUp, i, t, None);
            let rd = col(&b, Q::ThermalDown, i, t, None);
            b.row(RowKey::base(M::CapacityLower, i, t), vec![(g, 1.0), (rd, -1.0)], Sense::Ge, u.g_min);
            b.row(RowKey::base(M::CapacityUpper, i, t), vec![(g, 1.0), (ru, 1.0)], Sense::Le, u.g_max);
        }
    }

    // reserve capability
    for t in 0..nt {
        for (i, u) in inst.thermal.iter().enumerate() {
            if frozen_thermal(i, t) {
                continue;
            }
            let ru = col(&b, Q::ThermalUp, i, t, None);
            let rd = col(&b, Q::ThermalDown, i, t, None);
            b.row(RowKey::base(M::EllUpLower, i, t), vec![(ru, 1.0)], Sense::Ge, 0.0);
            b.row(RowKey::base(M::EllUpUpper, i, t), vec![(ru, 1.0)], Sense::Le, u.reserve_up_max);
            b.row(RowKey::base(M::EllDownLower, i, t), vec![(rd, 1.0)], Sense::Ge, 0.0);
            b.row(RowKey::base(M::EllDownUpper, i, t), vec![(rd, 1.0)], Sense::Le, u.reserve_down_max);
        }
    }

    // ramping between adjacent periods
    for t in 0..nt.saturating_sub(1) {
        for (i, u) in inst.thermal.iter().enumerate() {
            if frozen_thermal(i, t) || frozen_thermal(i, t + 1) {
                continue;
            }
            let g0 = col(&b, Q::ThermalEnergy, i, t, None);
            let g1 = col(&b, Q::ThermalEnergy, i, t + 1, None);
            let ru = col(&b, Q::ThermalUp, i, t, None);
            let rd = col(&b, Q::ThermalDown, i, t, None);
            b.row(
                RowKey::base(M::GammaDown, i, t),
                vec![(g1, 1.0), (g0, -1.0), (rd, -1.0)],
                Sense::Ge,
                -u.ramp_down,
            );
            b.row(
                RowKey::base(M::GammaUp, i, t),
                vec![(g1, 1.0), (g0, -1.0), (ru, 1.0)],
                Sense::Le,
                u.ramp_up,
            );
        }
    }

    // regional credit position q_m summed over the horizon
    let credit_terms = |b: &Builder, m: usize| {
        let mut terms = Vec::new();
        for t in 0..nt {
            for (j, u) in inst.renewables.iter().enumerate() {
                if u.region == m {
                    terms.push((col(b, Q::RenewableEnergy, j, t, None), 1.0));
                }
            }
            for (p, &(from, to)) in pairs.iter().enumerate() {
                if to == m {
                    terms.push((col(b, Q::Trade, p, t, None), 1.0));
                } else if from == m {
                    terms.push((col(b, Q::Trade, p, t, None), -1.0));
                }
            }
        }
        terms
    };
    for m in 0..nm {
        let terms = credit_terms(&b, m);
        let rhs: f64 = (0..inst.loads.len())
            .filter(|&l| inst.loads[l].region == m)
            .map(|l| inst.load_rps_base(l) * inst.loads[l].demand.iter().sum::<f64>())
            .sum();
        b.row(RowKey::base(M::Nu, m, 0), terms, Sense::Ge, rhs);
    }
    for t in 0..nt {
        for (p, _) in pairs.iter().enumerate() {
            let e = col(&b, Q::Trade, p, t, None);
            b.row(RowKey::base(M::TradeLower, p, t), vec![(e, 1.0)], Sense::Ge, 0.0);
        }
        for m in 0..nm {
            let exports: Vec<usize> = (0..pairs.len()).filter(|&p| pairs[p].0 == m).collect();
            if exports.is_empty() {
                continue;
            }
            let mut terms: Vec<(usize, f64)> =
                exports.iter().map(|&p| (col(&b, Q::Trade, p, t, None), 1.0)).collect();
            for (j, u) in inst.renewables.iter().enumerate() {
                if u.region == m {
                    terms.push((col(&b, Q::RenewableEnergy, j, t, None), -1.0));
                }
            }
            b.row(RowKey::base(M::ExportCap, m, t), terms, Sense::Le, 0.0);
        }
    }

    // scenario balance and flows
    for k in 0..nk {
        for t in 0..nt {
            let terms = injection_terms(&b, t, Some(k), &|_| 1.0);
            b.row(RowKey::scen(M::ScenarioLambda, 0, t, k), terms, Sense::Eq, demand(t, Some(k), &|_| 1.0));
        }
    }
    for k in 0..nk {
        for t in 0..nt {
            for l in 0..nl {
                let w = |bus: usize| s[l][bus];
                let terms = injection_terms(&b, t, Some(k), &w);
                let load = demand(t, Some(k), &w);
                let cap = inst.network.lines[l].capacity;
                b.row(RowKey::scen(M::ScenarioMuUpper, l, t, k), terms.clone(), Sense::Le, cap + load);
                if opts.two_sided_flows {
                    b.row(RowKey::scen(M::ScenarioMuLower, l, t, k), terms, Sense::Ge, -cap + load);
                }
            }
        }
    }

    // thermal re-dispatch bounded by reserve, outaged units lose their output
    for k in 0..nk {
        for t in 0..nt {
            for i in 0..ng {
                let up = col(&b, Q::ThermalRedispatchUp, i, t, Some(k));
                let ru = col(&b, Q::ThermalUp, i, t, None);
                let avail = if mask[k][i] { 0.0 } else { 1.0 };
                b.row(RowKey::scen(M::EtaLower, i, t, k), vec![(up, 1.0)], Sense::Ge, 0.0);
                b.row(RowKey::scen(M::EtaUpper, i, t, k), vec![(up, 1.0), (ru, -avail)], Sense::Le, 0.0);
            }
        }
    }
    for k in 0..nk {
        for t in 0..nt {
            for i in 0..ng {
                let dn = col(&b, Q::ThermalRedispatchDown, i, t, Some(k));
                let g = col(&b, Q::ThermalEnergy, i, t, None);
                let rd = col(&b, Q::ThermalDown, i, t, None);
                let pinned = opts.freeze.filter(|_| frozen_thermal(i, t)).map(|fz| fz.outage_energy);
                let (lo_terms, up_terms, rhs) = match (mask[k][i], pinned) {
                    (true, Some(v)) => (vec![(dn, 1.0)], vec![(dn, 1.0)], v),
                    (true, None) => (vec![(dn, 1.0), (g, -1.0)], vec![(dn, 1.0), (g, -1.0)], 0.0),
                    (false, _) => (vec![(dn, 1.0)], vec![(dn, 1.0), (rd, -1.0)], 0.0),
                };
                b.row(RowKey::scen(M::BetaLower, i, t, k), lo_terms, Sense::Ge, rhs);
                b.row(RowKey::scen(M::BetaUpper, i, t, k), up_terms, Sense::Le, rhs);
            }
        }
    }

    // renewable re-dispatch
    for k in 0..nk {
        for t in 0..nt {
            for (j, u) in inst.renewables.iter().enumerate() {
                let up = col(&b, Q::RenewableRedispatchUp, j, t, Some(k));
                let ru = col(&b, Q::RenewableUp, j, t, None);
                b.row(RowKey::scen(M::TauLower, j, t, k), vec![(up, 1.0)], Sense::Ge, 0.0);
                b.row(RowKey::scen(M::TauUpper, j, t, k), vec![(up, 1.0), (ru, -1.0)], Sense::Le, u.surplus[k][t]);
            }
        }
    }
    for k in 0..nk {
        for t in 0..nt {
            for (j, u) in inst.renewables.iter().enumerate() {
                let dn = col(&b, Q::RenewableRedispatchDown, j, t, Some(k));
                let rd = col(&b, Q::RenewableDown, j, t, None);
                b.row(RowKey::scen(M::ZetaLower, j, t, k), vec![(dn, 1.0)], Sense::Ge, u.deficit[k][t]);
                b.row(RowKey::scen(M::ZetaUpper, j, t, k), vec![(dn, 1.0), (rd, -1.0)], Sense::Le, u.deficit[k][t]);
            }
        }
    }

    // scenario RPS
    for k in 0..nk {
        for m in 0..nm {
            let mut terms = credit_terms(&b, m);
            for t in 0..nt {
                for (j, u) in inst.renewables.iter().enumerate() {
                    if u.region == m {
                        terms.push((col(&b, Q::RenewableRedispatchUp, j, t, Some(k)), 1.0));
                        terms.push((col(&b, Q::RenewableRedispatchDown, j, t, Some(k)), -1.0));
                    }
                }
            }
            let rhs: f64 = (0..inst.loads.len())
                .filter(|&l| inst.loads[l].region == m)
                .map(|l| {
                    let d = &inst.loads[l];
                    let total: f64 = (0..nt).map(|t| d.demand[t] + d.deviation[k][t]).sum();
                    inst.load_rps(l, k) * total
                })
                .sum();
            b.row(RowKey::scen(M::ScenarioNu, m, 0, k), terms, Sense::Ge, rhs);
        }
    }

    if opts.lazy_flows {
        for (r, key) in b.cons.keys.iter().enumerate() {
            if matches!(key.multiplier.family(), Family::Flow | Family::ScenarioFlow) {
                b.p.rows[r].lazy = true;
            }
        }
    }

    b.p.validate()?;
    Ok(LpModel { problem: b.p, vars: b.vars, cons: b.cons, options: opts.clone() })
}

/// Expected total cost of a primal point, computed from instance data rather than the LP's
/// cost vector.
pub fn objective_value(inst: &MarketInstance, model: &LpModel, x: &[f64]) -> f64 {
    let mut total = 0.0;
    for (c, key) in model.vars.keys().iter().enumerate() {
        let v = x[c];
        let cost = match key.quantity {
            Quantity::ThermalEnergy => inst.thermal[key.entity].cost_energy,
            Quantity::ThermalUp => inst.thermal[key.entity].cost_reserve_up,
            Quantity::ThermalDown => inst.thermal[key.entity].cost_reserve_down,
            Quantity::ThermalRedispatchUp => {
                inst.scenarios[key.scenario.unwrap()].probability * inst.thermal[key.entity].cost_redispatch_up
            }
            Quantity::ThermalRedispatchDown => {
                -inst.scenarios[key.scenario.unwrap()].probability * inst.thermal[key.entity].cost_redispatch_down
            }
            _ => 0.0,
        };
        total += cost * v;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::build_two_bus_fixture;

    #[test]
    fn fixture_row_counts() {
        let inst = build_two_bus_fixture();
        let m = build_lp(&inst).unwrap();
        assert_eq!(m.cons.count(Family::ScenarioBalance), 6);
        // one line, two directions, six scenarios
        assert_eq!(m.cons.count(Family::ScenarioFlow), 12);
        assert_eq!(m.cons.count(Family::Flow), 2);
        assert_eq!(m.cons.count(Family::Ramping), 0);
        assert_eq!(m.cons.count(Family::Rps), 1);
        assert_eq!(m.cons.count(Family::ScenarioRps), 6);
        // 3 thermal x (g, ru, rd) + 3 RES x (w, ru, rd) + 6 x (3 x 2 + 3 x 2)
        assert_eq!(m.vars.len(), 9 + 9 + 6 * 12);
    }

    #[test]
    fn one_sided_flag_drops_reverse_rows() {
        let inst = build_two_bus_fixture();
        let opts = BuildOptions { two_sided_flows: false, ..Default::default() };
        let m = build_lp_with(&inst, &opts).unwrap();
        assert_eq!(m.cons.count(Family::ScenarioFlow), 6);
        assert!(m.cons.keys().iter().all(|k| k.multiplier != Multiplier::MuLower));
    }

    #[test]
    fn maps_round_trip() {
        let inst = build_two_bus_fixture();
        let m = build_lp(&inst).unwrap();
        for c in 0..m.vars.len() {
            assert_eq!(m.vars.col(&m.vars.key(c)), Some(c));
        }
        for r in 0..m.cons.len() {
            assert_eq!(m.cons.row(&m.cons.key(r)), Some(r));
        }
        assert_eq!(m.problem.num_rows(), m.cons.len());
        assert_eq!(m.problem.num_cols(), m.vars.len());
    }

    #[test]
    fn outage_rows_pin_redispatch() {
        let inst = build_two_bus_fixture();
        let m = build_lp(&inst).unwrap();
        let g = m.col(VarKey::base(Quantity::ThermalEnergy, 0, 0)).unwrap();
        let dn = m.col(VarKey::scen(Quantity::ThermalRedispatchDown, 0, 0, 5)).unwrap();
        let up = m.col(VarKey::scen(Quantity::ThermalRedispatchUp, 0, 0, 5)).unwrap();
        let ru = m.col(VarKey::base(Quantity::ThermalUp, 0, 0)).unwrap();
        let lo = &m.problem.rows[m.row(RowKey::scen(Multiplier::BetaLower, 0, 0, 5)).unwrap()];
        let hi = &m.problem.rows[m.row(RowKey::scen(Multiplier::BetaUpper, 0, 0, 5)).unwrap()];
        assert_eq!(lo.coeffs, vec![(dn, 1.0), (g, -1.0)]);
        assert_eq!(hi.coeffs, vec![(dn, 1.0), (g, -1.0)]);
        assert_eq!((lo.rhs, hi.rhs), (0.0, 0.0));
        let eta = &m.problem.rows[m.row(RowKey::scen(Multiplier::EtaUpper, 0, 0, 5)).unwrap()];
        assert_eq!(eta.coeffs, vec![(up, 1.0)]);
        assert!(eta.coeffs.iter().all(|&(c, _)| c != ru));
    }

    #[test]
    fn deterministic_instance_has_no_scenario_rows() {
        let inst = crate::fixture::single_bus_toy(10.0, 2.0);
        let m = build_lp(&inst).unwrap();
        for f in [
            Family::ThermalRedispatchUp,
            Family::ThermalRedispatchDown,
            Family::RenewableRedispatchUp,
            Family::RenewableRedispatchDown,
        ] {
            assert_eq!(m.cons.count(f), 0);
        }
    }

    #[test]
    fn objective_matches_cost_vector() {
        let inst = build_two_bus_fixture();
        let m = build_lp(&inst).unwrap();
        let x: Vec<f64> = (0..m.vars.len()).map(|c| (c % 7) as f64 - 2.0).collect();
        let a = objective_value(&inst, &m, &x);
        let b = m.problem.objective(&x);
        assert!((a - b).abs() < 1e-9);
        assert_eq!(objective_value(&inst, &m, &vec![0.0; m.vars.len()]), 0.0);
    }

    #[test]
    fn triplet_dump_lists_every_nonzero() {
        let inst = build_two_bus_fixture();
        let m = build_lp(&inst).unwrap();
        let mut buf = Vec::new();
        m.problem.write_triplets(&mut buf, Some((&m.vars, &m.cons))).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let nnz: usize = m.problem.rows.iter().map(|r| r.coeffs.len()).sum();
        assert_eq!(text.lines().filter(|l| l.starts_with("A ")).count(), nnz);
        assert_eq!(text.lines().filter(|l| l.starts_with("C ")).count(), m.vars.len());
    }
}
