//! Power-system data model, scenario documents and network reduction.
//!
//! Machines use the classical model: constant EMF magnitude behind transient
//! reactance. Loads are folded into the bus admittance matrix as constant
//! admittances before the network is reduced to the machine internal nodes.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Supported scenario document version.
pub const DOCUMENT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Machine {
    pub id: u32,
    /// Inertia constant on system base (p.u.·s²/rad).
    pub inertia: f64,
    pub mech_power: f64,
    pub emf: f64,
    pub damping: f64,
}

impl Machine {
    pub fn new(id: u32, inertia: f64, mech_power: f64, emf: f64) -> Self {
        Machine {
            id,
            inertia,
            mech_power,
            emf,
            damping: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |c: bool, what: &str| {
            if c {
                Ok(())
            } else {
                Err(Error::Validation(format!("machine {}: {what}", self.id)))
            }
        };
        ok(
            self.inertia.is_finite() && self.inertia > 0.0,
            "inertia M must be > 0",
        )?;
        ok(self.emf.is_finite() && self.emf > 0.0, "EMF E must be > 0")?;
        ok(
            self.damping.is_finite() && self.damping >= 0.0,
            "damping must be >= 0",
        )?;
        ok(self.mech_power.is_finite(), "Pm must be finite")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageLabel {
    Prefault,
    Faulton,
    Postfault,
}

impl fmt::Display for StageLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StageLabel::Prefault => "prefault",
            StageLabel::Faulton => "faulton",
            StageLabel::Postfault => "postfault",
        })
    }
}

/// Admittance matrix reduced to machine internal nodes for one network stage.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkStage {
    pub label: StageLabel,
    pub ybus: CMatrix,
}

impl NetworkStage {
    pub fn new(label: StageLabel, ybus: CMatrix) -> Result<Self> {
        if !ybus.is_square() {
            return Err(Error::Validation(format!(
                "{label} matrix is {}x{}, must be square",
                ybus.nrows(),
                ybus.ncols()
            )));
        }
        if ybus.iter().any(|y| !y.re.is_finite() || !y.im.is_finite()) {
            return Err(Error::Validation(format!(
                "{label} matrix has non-finite entries"
            )));
        }
        Ok(NetworkStage { label, ybus })
    }

    pub fn dim(&self) -> usize {
        self.ybus.nrows()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..i).all(|j| (self.ybus[(i, j)] - self.ybus[(j, i)]).norm() <= tol))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedNetworkSet {
    pub prefault: NetworkStage,
    pub faulton: NetworkStage,
    pub postfault: NetworkStage,
}

impl ReducedNetworkSet {
    pub fn stage(&self, label: StageLabel) -> &NetworkStage {
        match label {
            StageLabel::Prefault => &self.prefault,
            StageLabel::Faulton => &self.faulton,
            StageLabel::Postfault => &self.postfault,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaultSpec {
    pub bus: u32,
    pub clearing_time: f64,
    /// Branches opened at clearing, as (from, to) bus pairs.
    pub trip_branches: Vec<(u32, u32)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSettings {
    pub dt: f64,
    pub horizon: f64,
    /// Initial absolute rotor angles (rad); the pre-fault SEP when absent.
    pub initial_delta: Option<Vec<f64>>,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            dt: 0.01,
            horizon: 1.4,
            initial_delta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    #[serde(default)]
    pub gs: f64,
    #[serde(default)]
    pub bs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: u32,
    pub to: u32,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance.
    #[serde(default)]
    pub b: f64,
    /// Off-nominal turns ratio on the `from` side; 0 is read as 1.
    #[serde(default = "one")]
    pub tap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub bus: u32,
    pub p: f64,
    pub q: f64,
    /// Bus voltage magnitude used to convert the load to a constant admittance.
    #[serde(default = "one")]
    pub v: f64,
}

fn one() -> f64 {
    1.0
}

/// Bus-level network description, kept so that stages can be rebuilt when
/// the fault location changes.
#[derive(Debug, Clone, PartialEq)]
pub struct BusNetwork {
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub loads: Vec<Load>,
    /// Terminal bus of each machine, in machine order.
    pub machine_buses: Vec<u32>,
    /// Transient reactance of each machine, in machine order.
    pub xd_prime: Vec<f64>,
}

impl BusNetwork {
    fn bus_index(&self) -> HashMap<u32, usize> {
        self.buses
            .iter()
            .enumerate()
            .map(|(k, b)| (b.id, k))
            .collect()
    }

    /// Full admittance matrix over buses followed by machine internal nodes,
    /// with the listed branches removed.
    pub fn full_ybus(&self, tripped: &[(u32, u32)]) -> Result<CMatrix> {
        let index = self.bus_index();
        let nb = self.buses.len();
        let n = nb + self.machine_buses.len();
        let mut y = CMatrix::zeros(n, n);
        let lookup = |bus: u32, what: &str| {
            index
                .get(&bus)
                .copied()
                .ok_or_else(|| Error::Validation(format!("{what} refers to unknown bus {bus}")))
        };

        let mut skip = vec![false; self.branches.len()];
        for &(a, b) in tripped {
            let pos = self
                .branches
                .iter()
                .enumerate()
                .position(|(k, br)| {
                    !skip[k] && ((br.from, br.to) == (a, b) || (br.from, br.to) == (b, a))
                })
                .ok_or_else(|| Error::Validation(format!("tripped branch {a}-{b} not found")))?;
            skip[pos] = true;
        }

        for (br, _) in self.branches.iter().zip(&skip).filter(|(_, s)| !**s) {
            let f = lookup(br.from, "branch")?;
            let t = lookup(br.to, "branch")?;
            let z = Complex64::new(br.r, br.x);
            if z.norm() == 0.0 {
                return Err(Error::Validation(format!(
                    "branch {}-{} has zero impedance",
                    br.from, br.to
                )));
            }
            let ys = z.inv();
            let half_b = Complex64::new(0.0, br.b / 2.0);
            let tap = if br.tap == 0.0 { 1.0 } else { br.tap };
            y[(f, f)] += (ys + half_b) / (tap * tap);
            y[(t, t)] += ys + half_b;
            y[(f, t)] -= ys / tap;
            y[(t, f)] -= ys / tap;
        }
        for (k, bus) in self.buses.iter().enumerate() {
            y[(k, k)] += Complex64::new(bus.gs, bus.bs);
        }
        for load in &self.loads {
            let k = lookup(load.bus, "load")?;
            if !(load.v > 0.0) {
                return Err(Error::Validation(format!(
                    "load at bus {} has v <= 0",
                    load.bus
                )));
            }
            y[(k, k)] += Complex64::new(load.p, -load.q) / (load.v * load.v);
        }
        for (m, (&bus, &xd)) in self.machine_buses.iter().zip(&self.xd_prime).enumerate() {
            let k = lookup(bus, "machine")?;
            if !(xd > 0.0) {
                return Err(Error::Validation(format!(
                    "machine {} has xd_prime <= 0",
                    m + 1
                )));
            }
            let yg = Complex64::new(0.0, -1.0 / xd);
            let g = nb + m;
            y[(k, k)] += yg;
            y[(g, g)] += yg;
            y[(k, g)] -= yg;
            y[(g, k)] -= yg;
        }
        Ok(y)
    }

    fn node_labels(&self) -> Vec<String> {
        self.buses
            .iter()
            .map(|b| b.id.to_string())
            .chain((1..=self.machine_buses.len()).map(|m| format!("internal-{m}")))
            .collect()
    }

    /// Reduced matrix for a network with `grounded` buses shorted to ground.
    pub fn reduce(&self, tripped: &[(u32, u32)], grounded: Option<u32>) -> Result<CMatrix> {
        let full = self.full_ybus(tripped)?;
        let mut labels = self.node_labels();
        let nb = self.buses.len();
        let (full, nb) = match grounded {
            None => (full, nb),
            Some(bus) => {
                let k = *self
                    .bus_index()
                    .get(&bus)
                    .ok_or_else(|| Error::Validation(format!("fault bus {bus} not in network")))?;
                labels.remove(k);
                (full.remove_row(k).remove_column(k), nb - 1)
            }
        };
        let retained: Vec<usize> = (nb..full.nrows()).collect();
        kron_reduce_labeled(&full, &retained, &labels)
    }

    pub fn stages(&self, fault: &FaultSpec) -> Result<ReducedNetworkSet> {
        Ok(ReducedNetworkSet {
            prefault: NetworkStage::new(StageLabel::Prefault, self.reduce(&[], None)?)?,
            faulton: NetworkStage::new(StageLabel::Faulton, self.reduce(&[], Some(fault.bus))?)?,
            postfault: NetworkStage::new(
                StageLabel::Postfault,
                self.reduce(&fault.trip_branches, None)?,
            )?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub machines: Vec<Machine>,
    pub stages: ReducedNetworkSet,
    pub fault: FaultSpec,
    pub sim: SimSettings,
    /// Present when the scenario was built from bus-level data.
    pub bus_network: Option<Arc<BusNetwork>>,
}

/// Command-line style overrides applied on top of a loaded scenario.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub clearing_time: Option<f64>,
    pub fault_bus: Option<u32>,
}

impl Scenario {
    pub fn new(
        name: impl Into<String>,
        machines: Vec<Machine>,
        stages: ReducedNetworkSet,
        fault: FaultSpec,
        sim: SimSettings,
    ) -> Result<Self> {
        let s = Scenario {
            name: name.into(),
            machines,
            stages,
            fault,
            sim,
            bus_network: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.machines.len()
    }

    pub fn stage(&self, label: StageLabel) -> &NetworkStage {
        self.stages.stage(label)
    }

    pub fn machine_index(&self, id: u32) -> Result<usize> {
        self.machines
            .iter()
            .position(|m| m.id == id)
            .ok_or(Error::UnknownMachine(id))
    }

    pub fn total_inertia(&self) -> f64 {
        self.machines.iter().map(|m| m.inertia).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.machines.is_empty() {
            return Err(Error::Validation("scenario has no machines".into()));
        }
        let mut ids = BTreeSet::new();
        for m in &self.machines {
            m.validate()?;
            if !ids.insert(m.id) {
                return Err(Error::Validation(format!("duplicate machine id {}", m.id)));
            }
        }
        let n = self.n();
        for label in [
            StageLabel::Prefault,
            StageLabel::Faulton,
            StageLabel::Postfault,
        ] {
            let st = self.stage(label);
            if st.label != label {
                return Err(Error::Validation(format!(
                    "stage {} stored as {label}",
                    st.label
                )));
            }
            if st.dim() != n {
                return Err(Error::Validation(format!(
                    "{label} matrix dimension {} does not match machine count {n}",
                    st.dim()
                )));
            }
        }
        let sim = &self.sim;
        if !(sim.dt.is_finite() && sim.dt > 0.0) {
            return Err(Error::Validation(format!(
                "dt must be > 0 (got {})",
                sim.dt
            )));
        }
        if !(self.fault.clearing_time.is_finite() && self.fault.clearing_time >= 0.0) {
            return Err(Error::Validation(format!(
                "clearing_time must be >= 0 (got {})",
                self.fault.clearing_time
            )));
        }
        if !(sim.horizon.is_finite() && sim.horizon >= self.fault.clearing_time) {
            return Err(Error::Validation(format!(
                "horizon {} must be >= clearing_time {}",
                sim.horizon, self.fault.clearing_time
            )));
        }
        if let Some(d0) = &sim.initial_delta {
            check_len(n, d0.len())?;
        }
        Ok(())
    }

    pub fn with_overrides(&self, o: &Overrides) -> Result<Self> {
        let mut s = self.clone();
        if let Some(dt) = o.dt {
            s.sim.dt = dt;
        }
        if let Some(h) = o.horizon {
            s.sim.horizon = h;
        }
        if let Some(tc) = o.clearing_time {
            s.fault.clearing_time = tc;
        }
        if let Some(bus) = o.fault_bus {
            let net = s.bus_network.clone().ok_or_else(|| {
                Error::Validation(
                    "fault bus override needs bus-level network data; scenario is pre-reduced"
                        .into(),
                )
            })?;
            s.fault.bus = bus;
            s.fault.trip_branches.clear();
            s.stages = net.stages(&s.fault)?;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn with_clearing_time(&self, tc: f64) -> Result<Self> {
        self.with_overrides(&Overrides {
            clearing_time: Some(tc),
            ..Overrides::default()
        })
    }

    /// Fault on `bus`, with `trip` opened at clearing. Needs bus-level data.
    pub fn with_fault(&self, bus: u32, trip: &[(u32, u32)], tc: f64) -> Result<Self> {
        let mut s = self.with_overrides(&Overrides {
            fault_bus: Some(bus),
            clearing_time: Some(tc),
            ..Overrides::default()
        })?;
        if !trip.is_empty() {
            s.fault.trip_branches = trip.to_vec();
            s.stages = s
                .bus_network
                .as_ref()
                .expect("checked above")
                .stages(&s.fault)?;
        }
        Ok(s)
    }
}

/// Precomputed products E_i·E_j·G_ij and E_i·E_j·B_ij for one stage.
#[derive(Debug, Clone)]
pub struct PowerModel {
    n: usize,
    eeg: Vec<f64>,
    eeb: Vec<f64>,
}

impl PowerModel {
    pub fn new(machines: &[Machine], stage: &NetworkStage) -> Result<Self> {
        let n = machines.len();
        check_len(n, stage.dim())?;
        let mut eeg = vec![0.0; n * n];
        let mut eeb = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let ee = machines[i].emf * machines[j].emf;
                let y = stage.ybus[(i, j)];
                eeg[i * n + j] = ee * y.re;
                eeb[i * n + j] = ee * y.im;
            }
        }
        Ok(PowerModel { n, eeg, eeb })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Electrical power of every machine; `delta.len()` must equal `n`.
    pub fn electrical_power_into(&self, delta: &[f64], pe: &mut [f64]) {
        let n = self.n;
        for (i, p) in pe.iter_mut().enumerate() {
            *p = self.eeg[i * n + i];
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let (s, c) = (delta[i] - delta[j]).sin_cos();
                let (gij, bij) = (self.eeg[i * n + j], self.eeb[i * n + j]);
                let (gji, bji) = (self.eeg[j * n + i], self.eeb[j * n + i]);
                // sin(δji) = -sin(δij), cos is even
                pe[i] += gij * c + bij * s;
                pe[j] += gji * c - bji * s;
            }
        }
    }

    /// Partial derivatives ∂Pe_i/∂δ_j, row-major.
    pub fn pe_jacobian(&self, delta: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        let mut jac = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let (s, c) = (delta[i] - delta[j]).sin_cos();
                let d = -self.eeg[i * n + j] * s + self.eeb[i * n + j] * c;
                jac[(i, i)] += d;
                jac[(i, j)] = -d;
            }
        }
        jac
    }
}

/// Classical-model electrical power injection of each machine.
pub fn electrical_power(
    delta: &[f64],
    machines: &[Machine],
    stage: &NetworkStage,
) -> Result<Vec<f64>> {
    check_len(machines.len(), delta.len())?;
    let model = PowerModel::new(machines, stage)?;
    let mut pe = vec![0.0; delta.len()];
    model.electrical_power_into(delta, &mut pe);
    Ok(pe)
}

/// Eliminates every node not in `retained` from a nodal admittance matrix.
///
/// Nodes are eliminated one at a time (Gaussian elimination on the Schur
/// complement), so a zero pivot identifies the offending node.
pub fn kron_reduce(ybus_full: &CMatrix, retained: &[usize]) -> Result<CMatrix> {
    let labels: Vec<String> = (0..ybus_full.nrows()).map(|k| k.to_string()).collect();
    kron_reduce_labeled(ybus_full, retained, &labels)
}

pub(crate) fn kron_reduce_labeled(
    y: &CMatrix,
    retained: &[usize],
    labels: &[String],
) -> Result<CMatrix> {
    let n = y.nrows();
    if !y.is_square() {
        return Err(Error::Validation("admittance matrix must be square".into()));
    }
    let mut keep = vec![false; n];
    for &r in retained {
        if r >= n || keep[r] {
            return Err(Error::Validation(format!(
                "invalid retained node index {r}"
            )));
        }
        keep[r] = true;
    }
    let mut work = y.clone();
    let scale = y.iter().map(|v| v.norm()).fold(1.0, f64::max);
    let mut alive = vec![true; n];
    for k in (0..n).filter(|&k| !keep[k]) {
        let pivot = work[(k, k)];
        if pivot.norm() <= 1e-12 * scale {
            return Err(Error::SingularReduction {
                bus: labels[k].clone(),
            });
        }
        alive[k] = false;
        let live: Vec<usize> = (0..n).filter(|&i| alive[i]).collect();
        for &i in &live {
            let lik = work[(i, k)] / pivot;
            if lik == Complex64::new(0.0, 0.0) {
                continue;
            }
            for &j in &live {
                let kj = work[(k, j)];
                work[(i, j)] -= lik * kj;
            }
        }
    }
    Ok(CMatrix::from_fn(retained.len(), retained.len(), |a, b| {
        work[(retained[a], retained[b])]
    }))
}

// ---------------------------------------------------------------------------
// Scenario documents

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    version: u32,
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    #[allow(dead_code)]
    base_mva: Option<f64>,
    machines: Vec<MachineDoc>,
    network: NetworkDoc,
    fault: FaultDoc,
    #[serde(default)]
    sim: SimDoc,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MachineDoc {
    id: u32,
    #[serde(rename = "M")]
    inertia: f64,
    #[serde(rename = "Pm")]
    mech_power: f64,
    #[serde(rename = "E")]
    emf: f64,
    #[serde(default)]
    damping: f64,
    #[serde(default)]
    bus: Option<u32>,
    #[serde(default)]
    xd_prime: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDoc {
    #[serde(default)]
    reduced: Option<ReducedDoc>,
    #[serde(default)]
    buses: Option<Vec<Bus>>,
    #[serde(default)]
    branches: Option<Vec<Branch>>,
    #[serde(default)]
    loads: Vec<Load>,
}

type ComplexRows = Vec<Vec<[f64; 2]>>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReducedDoc {
    prefault: ComplexRows,
    faulton: ComplexRows,
    postfault: ComplexRows,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FaultDoc {
    bus: u32,
    clearing_time: f64,
    #[serde(default)]
    trip_branches: Vec<(u32, u32)>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimDoc {
    #[serde(default = "default_dt")]
    dt: f64,
    #[serde(default = "default_horizon")]
    horizon: f64,
    #[serde(default)]
    initial_delta_deg: Option<Vec<f64>>,
}

impl Default for SimDoc {
    fn default() -> Self {
        SimDoc {
            dt: default_dt(),
            horizon: default_horizon(),
            initial_delta_deg: None,
        }
    }
}

fn default_dt() -> f64 {
    0.01
}

fn default_horizon() -> f64 {
    1.4
}

fn matrix_from_rows(label: StageLabel, rows: &ComplexRows) -> Result<NetworkStage> {
    let n = rows.len();
    if let Some((k, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(Error::Parse {
            path: format!("network.reduced.{label}[{k}]"),
            message: format!("row has {} entries, expected {n}", r.len()),
        });
    }
    let m = CMatrix::from_fn(n, n, |i, j| Complex64::new(rows[i][j][0], rows[i][j][1]));
    NetworkStage::new(label, m)
}

/// Parses and validates a scenario document (JSON).
pub fn load_scenario(text: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: ScenarioDoc = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    if doc.version != DOCUMENT_VERSION {
        return Err(Error::Parse {
            path: "version".into(),
            message: format!(
                "unsupported version {} (expected {DOCUMENT_VERSION})",
                doc.version
            ),
        });
    }
    let machines: Vec<Machine> = doc
        .machines
        .iter()
        .map(|m| Machine {
            id: m.id,
            inertia: m.inertia,
            mech_power: m.mech_power,
            emf: m.emf,
            damping: m.damping,
        })
        .collect();
    let fault = FaultSpec {
        bus: doc.fault.bus,
        clearing_time: doc.fault.clearing_time,
        trip_branches: doc.fault.trip_branches,
    };

    let net = doc.network;
    let (stages, bus_network) = match (net.reduced, net.buses, net.branches) {
        (Some(red), None, None) => {
            if !net.loads.is_empty() {
                return Err(Error::Parse {
                    path: "network.loads".into(),
                    message: "loads cannot be combined with pre-reduced matrices".into(),
                });
            }
            let stages = ReducedNetworkSet {
                prefault: matrix_from_rows(StageLabel::Prefault, &red.prefault)?,
                faulton: matrix_from_rows(StageLabel::Faulton, &red.faulton)?,
                postfault: matrix_from_rows(StageLabel::Postfault, &red.postfault)?,
            };
            (stages, None)
        }
        (None, Some(buses), Some(branches)) => {
            let mut machine_buses = Vec::with_capacity(doc.machines.len());
            let mut xd_prime = Vec::with_capacity(doc.machines.len());
            for (k, m) in doc.machines.iter().enumerate() {
                let missing = |field: &str| Error::Parse {
                    path: format!("machines[{k}].{field}"),
                    message: "required when the network is given at bus level".into(),
                };
                machine_buses.push(m.bus.ok_or_else(|| missing("bus"))?);
                xd_prime.push(m.xd_prime.ok_or_else(|| missing("xd_prime"))?);
            }
            let bn = BusNetwork {
                buses,
                branches,
                loads: net.loads,
                machine_buses,
                xd_prime,
            };
            let stages = bn.stages(&fault)?;
            (stages, Some(Arc::new(bn)))
        }
        _ => {
            return Err(Error::Parse {
                path: "network".into(),
                message: "expected either `reduced` or both `buses` and `branches`".into(),
            })
        }
    };

    let sim = SimSettings {
        dt: doc.sim.dt,
        horizon: doc.sim.horizon,
        initial_delta: doc
            .sim
            .initial_delta_deg
            .map(|v| v.into_iter().map(f64::to_radians).collect()),
    };
    let mut scenario = Scenario::new(
        doc.name.unwrap_or_else(|| "unnamed".into()),
        machines,
        stages,
        fault,
        sim,
    )?;
    scenario.bus_network = bus_network;
    Ok(scenario)
}
