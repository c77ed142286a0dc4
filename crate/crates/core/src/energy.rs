//! Individual-machine and superimposed transient energies along a trajectory.
//!
//! Per machine, in the COI frame:
//!
//! * IMKE_i = ½·M_i·ω_i²
//! * IMPE_i = −∫ f_i dδ_i along the simulated trajectory, trapezoidal on the
//!   simulation grid, zero at the fault-clearing sample. Samples before
//!   clearing use the post-fault accelerating power, integrated backwards.
//!
//! The superimposed energies (SMKE, SMPE, SMTE) are the machine sums.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::equilibria::{self, EquilibriumPoint};
use crate::error::{check_len, Error, Result};
use crate::format::{sig9, SCHEMA_VERSION};
use crate::simulator::{accel_into, Trajectory};
use crate::system::{Machine, PowerModel, Scenario, StageLabel};

/// Divergence threshold on IMPE/SMPE (p.u.).
pub const DEFAULT_THETA_DIV: f64 = 10.0;

/// Minimum number of sub-steps for ray integrals of the potential energy.
pub const MIN_RAY_SUBSTEPS: usize = 200;

#[derive(Debug, Clone, Serialize)]
pub struct EnergyTrace {
    pub machine_ids: Vec<u32>,
    pub dt: f64,
    pub times: Vec<f64>,
    /// `[sample][machine]`
    pub imke: Vec<Vec<f64>>,
    pub impe: Vec<Vec<f64>>,
    pub imte: Vec<Vec<f64>>,
    pub smke: Vec<f64>,
    pub smpe: Vec<f64>,
    pub smte: Vec<f64>,
    pub clearing_index: usize,
    /// Source trajectory stopped early on a non-finite state.
    pub truncated: bool,
}

impl EnergyTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn machine_index(&self, id: u32) -> Result<usize> {
        self.machine_ids
            .iter()
            .position(|&m| m == id)
            .ok_or(Error::UnknownMachine(id))
    }

    /// IMPE of machine index `i` over the whole timeline.
    pub fn impe_series(&self, i: usize) -> Vec<f64> {
        self.impe.iter().map(|row| row[i]).collect()
    }

    pub fn imke_series(&self, i: usize) -> Vec<f64> {
        self.imke.iter().map(|row| row[i]).collect()
    }

    pub fn is_static(&self) -> bool {
        self.imke
            .iter()
            .chain(&self.impe)
            .flatten()
            .all(|&x| x.abs() <= AT_REST_KE)
    }

    /// Gap in the residual-kinetic-energy identity at `smpp`:
    /// residual − (SMKE(c) − (SMPE(smpp) − SMPE(c))).
    pub fn residual_identity_gap(&self, smpp: &EnergyEvent) -> f64 {
        let c = self.clearing_index;
        let rhs = self.smke[c] - (self.smpe[smpp.index] - self.smpe[c]);
        smpp.residual_ke - rhs
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "# smte energy schema={SCHEMA_VERSION} quadrature=trapezoid dt={} datum=clearing_point clearing_time={}{}",
            self.dt,
            self.times[self.clearing_index],
            if self.truncated { " truncated" } else { "" }
        )?;
        let mut header = vec!["t".to_string()];
        for prefix in ["imke", "impe"] {
            header.extend(self.machine_ids.iter().map(|id| format!("{prefix}_{id}")));
        }
        header.extend(["smke", "smpe", "smte"].map(String::from));
        writeln!(w, "{}", header.join(","))?;
        for k in 0..self.len() {
            let mut row = vec![sig9(self.times[k])];
            row.extend(self.imke[k].iter().map(|&x| sig9(x)));
            row.extend(self.impe[k].iter().map(|&x| sig9(x)));
            row.extend([self.smke[k], self.smpe[k], self.smte[k]].map(sig9));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

pub fn machine_energy_trace(trajectory: &Trajectory) -> Result<EnergyTrace> {
    if trajectory.post_clearing_len() < 2 {
        return Err(Error::InsufficientData(format!(
            "energy trace needs >= 2 post-clearing samples, trajectory has {}",
            trajectory.post_clearing_len()
        )));
    }
    let scenario = &trajectory.scenario;
    let machines = &scenario.machines;
    let n = machines.len();
    let c = trajectory.clearing_index;
    let len = trajectory.len();

    // post-fault accelerating power at every sample
    let post = PowerModel::new(machines, scenario.stage(StageLabel::Postfault))?;
    let mut f_post = vec![vec![0.0; n]; len];
    for (k, fk) in f_post.iter_mut().enumerate() {
        let s = trajectory.sample(k);
        if k < c {
            accel_into(&post, machines, &s.delta_abs, fk);
        } else {
            fk.copy_from_slice(&s.f_coi);
        }
    }

    let mut impe = vec![vec![0.0; n]; len];
    for k in (c + 1)..len {
        let (a, b) = (trajectory.sample(k - 1), trajectory.sample(k));
        for i in 0..n {
            let step = 0.5 * (f_post[k - 1][i] + f_post[k][i]) * (b.delta_coi[i] - a.delta_coi[i]);
            impe[k][i] = impe[k - 1][i] - step;
        }
    }
    for k in (0..c).rev() {
        let (a, b) = (trajectory.sample(k), trajectory.sample(k + 1));
        for i in 0..n {
            let step = 0.5 * (f_post[k][i] + f_post[k + 1][i]) * (b.delta_coi[i] - a.delta_coi[i]);
            impe[k][i] = impe[k + 1][i] + step;
        }
    }

    let imke: Vec<Vec<f64>> = trajectory
        .samples()
        .map(|s| {
            s.omega_coi
                .iter()
                .zip(machines)
                .map(|(w, m)| 0.5 * m.inertia * w * w)
                .collect()
        })
        .collect();
    let imte: Vec<Vec<f64>> = imke
        .iter()
        .zip(&impe)
        .map(|(ke, pe)| ke.iter().zip(pe).map(|(a, b)| a + b).collect())
        .collect();
    let smke: Vec<f64> = imke.iter().map(|r| r.iter().sum()).collect();
    let smpe: Vec<f64> = impe.iter().map(|r| r.iter().sum()).collect();
    let smte = smke.iter().zip(&smpe).map(|(a, b)| a + b).collect();

    Ok(EnergyTrace {
        machine_ids: machines.iter().map(|m| m.id).collect(),
        dt: trajectory.dt,
        times: trajectory.samples().map(|s| s.t).collect(),
        imke,
        impe,
        imte,
        smke,
        smpe,
        smte,
        clearing_index: c,
        truncated: trajectory.diverged_numerically,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EventKind {
    /// Global post-clearing maximum of SMPE.
    #[serde(rename = "SMPP")]
    Smpp,
    /// Speed zero crossing of one machine (swing turnaround).
    #[serde(rename = "IDSP")]
    Idsp,
    /// Accelerating power turning back into the direction of motion.
    #[serde(rename = "IDLP")]
    Idlp,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Smpp => "SMPP",
            EventKind::Idsp => "IDSP",
            EventKind::Idlp => "IDLP",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyEvent {
    pub kind: EventKind,
    pub machine: Option<u32>,
    /// Sample time of the event.
    pub t: f64,
    /// IMPE (machine events) or SMPE (SMPP) at the event.
    pub value: f64,
    /// SMKE at an SMPP, IMKE at a machine event.
    pub residual_ke: f64,
    #[serde(skip)]
    pub index: usize,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub censored: bool,
}

/// Superimposed-machine potential energy peak over the post-clearing samples.
pub fn find_smpp(trace: &EnergyTrace) -> Result<EnergyEvent> {
    let c = trace.clearing_index;
    if c >= trace.len() {
        return Err(Error::InsufficientData("no post-clearing samples".into()));
    }
    let mut best = c;
    for k in c + 1..trace.len() {
        if trace.smpe[k] > trace.smpe[best] {
            best = k;
        }
    }
    let last = trace.len() - 1;
    let censored = best == last && last > c && trace.smpe[last] > trace.smpe[last - 1];
    Ok(EnergyEvent {
        kind: EventKind::Smpp,
        machine: None,
        t: trace.times[best],
        value: trace.smpe[best],
        residual_ke: trace.smke[best],
        index: best,
        censored,
    })
}

/// Kinetic energy below which a machine counts as at rest; sign flips of
/// roundoff-level speeds are not events.
pub(crate) const AT_REST_KE: f64 = 1e-12;

/// First post-clearing IDSP and IDLP of one machine, in time order.
///
/// IDSP: ω_i changes sign. IDLP: f_i turns from negative to non-negative
/// while the machine advances (ω_i > 0 on both samples). Crossings are
/// located by linear interpolation and snapped to the nearest sample. When
/// both snap to the same sample only the IDSP is kept.
pub fn find_idsp_idlp(
    trajectory: &Trajectory,
    trace: &EnergyTrace,
    machine_id: u32,
) -> Result<Vec<EnergyEvent>> {
    let i = trajectory.scenario.machine_index(machine_id)?;
    check_len(trajectory.len(), trace.len())?;
    let c = trace.clearing_index;
    if (c..trace.len()).all(|k| trace.imke[k][i] <= AT_REST_KE) {
        return Ok(Vec::new());
    }
    let omega: Vec<f64> = trajectory.samples().map(|s| s.omega_coi[i]).collect();
    let f: Vec<f64> = trajectory.samples().map(|s| s.f_coi[i]).collect();

    let snap = |k: usize, a: f64, b: f64| {
        // fraction of the step where the linear interpolant reaches zero
        let frac = a / (a - b);
        if frac <= 0.5 {
            k
        } else {
            k + 1
        }
    };
    let event = |kind, k: usize| EnergyEvent {
        kind,
        machine: Some(machine_id),
        t: trace.times[k],
        value: trace.impe[k][i],
        residual_ke: trace.imke[k][i],
        index: k,
        censored: false,
    };

    let mut idsp = None;
    let mut idlp = None;
    for k in c..trace.len().saturating_sub(1) {
        let (w0, w1) = (omega[k], omega[k + 1]);
        if idsp.is_none() && w0 != 0.0 && (w1 == 0.0 || w0.signum() != w1.signum()) {
            idsp = Some(snap(k, w0, w1));
        }
        let (f0, f1) = (f[k], f[k + 1]);
        if idlp.is_none() && w0 > 0.0 && w1 > 0.0 && f0 < 0.0 && f1 >= 0.0 {
            idlp = Some(snap(k, f0, f1));
        }
        if idsp.is_some() && idlp.is_some() {
            break;
        }
    }
    if let (Some(a), Some(b)) = (idsp, idlp) {
        if a == b {
            idlp = None;
        }
    }
    let mut events: Vec<EnergyEvent> = idsp
        .map(|k| event(EventKind::Idsp, k))
        .into_iter()
        .chain(idlp.map(|k| event(EventKind::Idlp, k)))
        .collect();
    events.sort_by_key(|e| e.index);
    Ok(events)
}

/// True when `series` has a local maximum within `radius` samples of `index`.
pub fn local_max_near(series: &[f64], index: usize, radius: usize) -> bool {
    let lo = index.saturating_sub(radius);
    let hi = (index + radius).min(series.len().saturating_sub(1));
    (lo..=hi).any(|j| {
        let left = j == 0 || series[j] >= series[j - 1];
        let right = j + 1 >= series.len() || series[j] >= series[j + 1];
        left && right
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MachineDrift {
    pub machine: u32,
    pub imte_at_clearing: f64,
    pub max_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConservationReport {
    pub smte_at_clearing: f64,
    pub max_drift: f64,
    /// `max_drift / max(|SMTE(c)|, 1)`
    pub relative_drift: f64,
    pub machines: Vec<MachineDrift>,
}

pub fn conservation_report(trace: &EnergyTrace) -> ConservationReport {
    let c = trace.clearing_index;
    let post = c..trace.len();
    let max_dev = |series: &mut dyn Iterator<Item = f64>, base: f64| {
        series.map(|v| (v - base).abs()).fold(0.0, f64::max)
    };
    let smte_c = trace.smte[c];
    let max_drift = max_dev(&mut trace.smte[post.clone()].iter().copied(), smte_c);
    let machines = trace
        .machine_ids
        .iter()
        .enumerate()
        .map(|(i, &id)| {
            let base = trace.imte[c][i];
            MachineDrift {
                machine: id,
                imte_at_clearing: base,
                max_drift: max_dev(&mut post.clone().map(|k| trace.imte[k][i]), base),
            }
        })
        .collect();
    ConservationReport {
        smte_at_clearing: smte_c,
        max_drift,
        relative_drift: max_drift / smte_c.abs().max(1.0),
        machines,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceStatus {
    Bounded,
    UnboundedNegative,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceReport {
    pub theta_div: f64,
    pub machines: Vec<(u32, DivergenceStatus)>,
    pub system: DivergenceStatus,
    /// Too little post-clearing data (or a truncated trace) for a verdict.
    pub censored: bool,
}

impl DivergenceReport {
    pub fn status_of(&self, id: u32) -> Option<DivergenceStatus> {
        self.machines
            .iter()
            .find(|(m, _)| *m == id)
            .map(|(_, s)| *s)
    }
}

/// A series is unbounded-negative when it ends below −θ and its final value
/// is below its value at the start of the last 10 % of post-clearing samples.
fn classify_tail(series: &[f64], theta: f64) -> DivergenceStatus {
    let last = series.len() - 1;
    let window = (series.len() as f64 * 0.1).ceil().max(1.0) as usize;
    let start = last.saturating_sub(window);
    if series[last] < -theta && series[last] < series[start] {
        DivergenceStatus::UnboundedNegative
    } else {
        DivergenceStatus::Bounded
    }
}

pub fn divergence_check(trace: &EnergyTrace, theta_div: f64) -> DivergenceReport {
    let post = trace.clearing_index..trace.len();
    let machines = trace
        .machine_ids
        .iter()
        .enumerate()
        .map(|(i, &id)| {
            let s: Vec<f64> = post.clone().map(|k| trace.impe[k][i]).collect();
            (id, classify_tail(&s, theta_div))
        })
        .collect();
    DivergenceReport {
        theta_div,
        machines,
        system: classify_tail(&trace.smpe[post.clone()], theta_div),
        censored: trace.truncated || post.len() < 10,
    }
}

/// Superimposed potential energy Σ_i −∫ f_i dδ_i along the straight segment
/// `from → to`, composite trapezoid over `substeps` intervals.
pub fn ray_potential(
    model: &PowerModel,
    machines: &[Machine],
    from: &[f64],
    to: &[f64],
    substeps: usize,
) -> Result<f64> {
    let n = machines.len();
    check_len(n, from.len())?;
    check_len(n, to.len())?;
    let steps = substeps.max(1);
    let dir: Vec<f64> = to.iter().zip(from).map(|(b, a)| b - a).collect();
    let mut delta = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut integrand = |alpha: f64| -> Result<f64> {
        for i in 0..n {
            delta[i] = from[i] + alpha * dir[i];
        }
        accel_into(model, machines, &delta, &mut f);
        let g: f64 = f.iter().zip(&dir).map(|(fi, d)| -fi * d).sum();
        if g.is_finite() {
            Ok(g)
        } else {
            Err(Error::NonFinite { alpha })
        }
    };
    let h = 1.0 / steps as f64;
    let mut acc = 0.5 * (integrand(0.0)? + integrand(1.0)?);
    for k in 1..steps {
        acc += integrand(k as f64 * h)?;
    }
    Ok(acc * h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AxisRange {
    pub min_deg: f64,
    pub max_deg: f64,
    pub steps: usize,
}

impl AxisRange {
    pub fn values_rad(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.min_deg.to_radians()];
        }
        let span = self.max_deg - self.min_deg;
        (0..self.steps)
            .map(|k| (self.min_deg + span * k as f64 / (self.steps - 1) as f64).to_radians())
            .collect()
    }
}

/// Rectangular grid in the angles of two axis machines, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub a: AxisRange,
    pub b: AxisRange,
}

impl FromStr for GridSpec {
    type Err = Error;

    /// `a_min:a_max:steps,b_min:b_max:steps`
    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Validation(format!(
                "grid `{s}`: expected a_min:a_max:steps,b_min:b_max:steps"
            ))
        };
        let axis = |part: &str| -> Result<AxisRange> {
            let f: Vec<&str> = part.trim().split(':').collect();
            if f.len() != 3 {
                return Err(bad());
            }
            let r = AxisRange {
                min_deg: f[0].trim().parse().map_err(|_| bad())?,
                max_deg: f[1].trim().parse().map_err(|_| bad())?,
                steps: f[2].trim().parse().map_err(|_| bad())?,
            };
            if r.steps == 0 || !(r.min_deg <= r.max_deg) || (r.steps > 1 && r.min_deg == r.max_deg)
            {
                return Err(Error::Validation(format!(
                    "grid axis `{part}` must be increasing with steps >= 1"
                )));
            }
            Ok(r)
        };
        let (a, b) = s.split_once(',').ok_or_else(bad)?;
        Ok(GridSpec {
            a: axis(a)?,
            b: axis(b)?,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PesGrid {
    pub axes: (u32, u32),
    /// Machine whose angle keeps the COI constraint; other machines sit at the SEP.
    pub absorber: u32,
    pub a_rad: Vec<f64>,
    pub b_rad: Vec<f64>,
    /// `values[ia][ib]`; `None` where the integrand was not finite.
    pub values: Vec<Vec<Option<f64>>>,
    /// Post-fault SEP, COI angles (rad).
    pub sep: Vec<f64>,
    pub substeps: usize,
    pub path: &'static str,
}

impl PesGrid {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "# smte pes schema={SCHEMA_VERSION} path=straight_ray_from_postfault_sep quadrature=trapezoid substeps={} axes={},{} absorber={}",
            self.substeps, self.axes.0, self.axes.1, self.absorber
        )?;
        writeln!(w, "delta_a_deg,delta_b_deg,smpe")?;
        for (ia, a) in self.a_rad.iter().enumerate() {
            for (ib, b) in self.b_rad.iter().enumerate() {
                let v = self.values[ia][ib].map_or_else(|| "nan".to_string(), sig9);
                writeln!(w, "{},{},{}", sig9(a.to_degrees()), sig9(b.to_degrees()), v)?;
            }
        }
        Ok(())
    }
}

/// COI angle vector with the axis machines at `(a, b)`, the absorber
/// restoring Σ M_i δ_i = 0 and everything else at `sep`.
fn grid_point(
    machines: &[Machine],
    sep: &[f64],
    axes: (usize, usize),
    absorber: usize,
    a: f64,
    b: f64,
) -> Vec<f64> {
    let mut d = sep.to_vec();
    d[axes.0] = a;
    d[axes.1] = b;
    let rest: f64 = machines
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != absorber)
        .map(|(k, m)| m.inertia * d[k])
        .sum();
    d[absorber] = -rest / machines[absorber].inertia;
    d
}

/// Samples the superimposed potential energy surface over a grid of two
/// machines' COI angles, datum at the post-fault SEP.
pub fn pes_sample(scenario: &Scenario, axes: (u32, u32), grid: &GridSpec) -> Result<PesGrid> {
    let sep = equilibria::solve_sep(scenario, StageLabel::Postfault)?;
    pes_sample_with_sep(scenario, &sep, axes, grid, 1000)
}

pub fn pes_sample_with_sep(
    scenario: &Scenario,
    sep: &EquilibriumPoint,
    axes: (u32, u32),
    grid: &GridSpec,
    substeps: usize,
) -> Result<PesGrid> {
    let machines = &scenario.machines;
    if machines.len() < 3 {
        return Err(Error::Validation(
            "PES sampling needs at least 3 machines".into(),
        ));
    }
    let ia = scenario.machine_index(axes.0)?;
    let ib = scenario.machine_index(axes.1)?;
    if ia == ib {
        return Err(Error::Validation("PES axis machines must differ".into()));
    }
    check_len(machines.len(), sep.delta_coi.len())?;
    let absorber = (0..machines.len())
        .filter(|&k| k != ia && k != ib)
        .fold(None::<usize>, |best, k| match best {
            Some(b) if machines[b].inertia >= machines[k].inertia => Some(b),
            _ => Some(k),
        })
        .expect("n >= 3");
    let substeps = substeps.max(MIN_RAY_SUBSTEPS);
    let model = PowerModel::new(machines, scenario.stage(StageLabel::Postfault))?;
    let a_rad = grid.a.values_rad();
    let b_rad = grid.b.values_rad();
    let values = a_rad
        .par_iter()
        .map(|&a| {
            b_rad
                .iter()
                .map(|&b| {
                    let p = grid_point(machines, &sep.delta_coi, (ia, ib), absorber, a, b);
                    ray_potential(&model, machines, &sep.delta_coi, &p, substeps).ok()
                })
                .collect()
        })
        .collect();
    Ok(PesGrid {
        axes,
        absorber: machines[absorber].id,
        a_rad,
        b_rad,
        values,
        sep: sep.delta_coi.clone(),
        substeps,
        path: "straight ray from post-fault SEP",
    })
}

#[derive(Serialize)]
struct EventsDoc<'a> {
    schema_version: u32,
    datum: &'static str,
    quadrature: &'static str,
    dt: f64,
    events: &'a [EnergyEvent],
}

pub fn write_events_json<W: Write>(
    trace: &EnergyTrace,
    events: &[EnergyEvent],
    w: W,
) -> serde_json::Result<()> {
    serde_json::to_writer_pretty(
        w,
        &EventsDoc {
            schema_version: SCHEMA_VERSION,
            datum: "clearing_point",
            quadrature: "trapezoid",
            dt: trace.dt,
            events,
        },
    )
}
