//! Stability verdicts from the individual-machine and superimposed-machine
//! views, their side-by-side comparison, and critical clearing time search.

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::energy::{
    divergence_check, find_idsp_idlp, find_smpp, machine_energy_trace, DivergenceReport,
    DivergenceStatus, EnergyEvent, EnergyTrace, EventKind, AT_REST_KE,
};
use crate::equilibria::Margin;
use crate::error::{check_len, Error, Result};
use crate::format::SCHEMA_VERSION;
use crate::simulator::{integrate, Trajectory};
use crate::system::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssessOptions {
    /// Critical when peak IMPE ≥ kappa × median peak IMPE.
    pub kappa: f64,
    pub theta_div: f64,
}

impl Default for AssessOptions {
    fn default() -> Self {
        AssessOptions {
            kappa: 3.0,
            theta_div: crate::energy::DEFAULT_THETA_DIV,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Stable,
    Unstable,
    Censored,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Stable => "stable",
            Status::Unstable => "unstable",
            Status::Censored => "censored",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MachineVerdict {
    pub machine: u32,
    pub status: Status,
    /// Earliest of the machine's IDSP/IDLP, which decides the first swing.
    pub first_event: Option<EnergyEvent>,
    pub events: Vec<EnergyEvent>,
    pub divergence: DivergenceStatus,
    /// Onset of loss of synchronism: IDLP time, else the last IMPE peak
    /// before divergence.
    pub onset: Option<f64>,
    /// Post-clearing speed zero crossings, snapped to samples.
    pub speed_zero_crossings: Vec<f64>,
    pub is_critical: bool,
    pub peak_impe: f64,
}

impl MachineVerdict {
    /// Number of speed zero crossings at or before `t`.
    pub fn swing_index_at(&self, t: f64) -> usize {
        self.speed_zero_crossings
            .iter()
            .filter(|&&x| x <= t + 1e-12)
            .count()
    }
}

fn speed_crossings(trajectory: &Trajectory, i: usize) -> Vec<f64> {
    let c = trajectory.clearing_index;
    let mut out = Vec::new();
    for k in c..trajectory.len().saturating_sub(1) {
        let (a, b) = (trajectory.sample(k), trajectory.sample(k + 1));
        let (w0, w1) = (a.omega_coi[i], b.omega_coi[i]);
        if w0 != 0.0 && (w1 == 0.0 || w0.signum() != w1.signum()) {
            let frac = w0 / (w0 - w1);
            out.push(if frac <= 0.5 { a.t } else { b.t });
        }
    }
    out.dedup();
    out
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len().is_multiple_of(2) {
        0.5 * (s[m - 1] + s[m])
    } else {
        s[m]
    }
}

pub fn individual_verdicts(
    trajectory: &Trajectory,
    trace: &EnergyTrace,
    opts: &AssessOptions,
) -> Result<Vec<MachineVerdict>> {
    check_len(trajectory.len(), trace.len())?;
    let div = divergence_check(trace, opts.theta_div);
    let c = trace.clearing_index;
    let n = trace.machine_ids.len();
    let peaks: Vec<f64> = (0..n)
        .map(|i| {
            (c..trace.len())
                .map(|k| trace.impe[k][i])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let med = median(&peaks);

    let mut out = Vec::with_capacity(n);
    for (i, &id) in trace.machine_ids.iter().enumerate() {
        let events = find_idsp_idlp(trajectory, trace, id)?;
        let first_event = events.first().cloned();
        let divergence = div.status_of(id).expect("same machines");
        let unbounded = divergence == DivergenceStatus::UnboundedNegative;
        let moving = (c..trace.len()).any(|k| trace.imke[k][i] > AT_REST_KE);
        let first_kind = first_event.as_ref().map(|e| e.kind);

        let status = match first_kind {
            _ if unbounded => Status::Unstable,
            Some(EventKind::Idlp) => Status::Unstable,
            Some(_) => Status::Stable,
            None if !moving => Status::Stable,
            None => Status::Censored,
        };
        let onset = match status {
            Status::Unstable => Some(match (&first_event, first_kind) {
                (Some(e), Some(EventKind::Idlp)) => e.t,
                _ => last_peak_time(trace, i),
            }),
            _ => None,
        };
        let is_critical =
            status == Status::Unstable || (peaks[i] > 1e-9 && peaks[i] >= opts.kappa * med);
        out.push(MachineVerdict {
            machine: id,
            status,
            first_event,
            events,
            divergence,
            onset,
            speed_zero_crossings: speed_crossings(trajectory, i),
            is_critical,
            peak_impe: peaks[i],
        });
    }
    Ok(out)
}

/// Time of the last post-clearing local maximum of IMPE_i.
fn last_peak_time(trace: &EnergyTrace, i: usize) -> f64 {
    let c = trace.clearing_index;
    let s = trace.impe_series(i);
    let mut best = c;
    for k in (c + 1)..s.len().saturating_sub(1) {
        if s[k] >= s[k - 1] && s[k] >= s[k + 1] {
            best = k;
        }
    }
    trace.times[best]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemVerdict {
    pub status: Status,
    pub leading_machine: Option<u32>,
}

/// Unstable if any machine is; otherwise censored if any machine is; the
/// leading machine has the earliest onset.
pub fn system_verdict(verdicts: &[MachineVerdict]) -> SystemVerdict {
    let leading = verdicts
        .iter()
        .filter(|v| v.status == Status::Unstable)
        .min_by(|a, b| {
            a.onset
                .unwrap_or(f64::INFINITY)
                .total_cmp(&b.onset.unwrap_or(f64::INFINITY))
        })
        .map(|v| v.machine);
    let status = if leading.is_some() {
        Status::Unstable
    } else if verdicts.iter().any(|v| v.status == Status::Censored) {
        Status::Censored
    } else {
        Status::Stable
    };
    SystemVerdict {
        status,
        leading_machine: leading,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SmVerdict {
    Stable,
    Critical,
    Unstable,
    Censored,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuperimposedPart {
    pub smpp: EnergyEvent,
    pub residual_smke: f64,
    pub smpe_divergence: DivergenceStatus,
    pub margin: Option<Margin>,
    pub verdict: SmVerdict,
}

/// Superimposed-machine view: SMPP, residual SMKE and a verdict from the
/// margin sign when a margin is given, else from SMPE divergence.
pub fn superimposed_verdict(
    trace: &EnergyTrace,
    margin: Option<Margin>,
    theta_div: f64,
) -> Result<SuperimposedPart> {
    let smpp = find_smpp(trace)?;
    let div = divergence_check(trace, theta_div);
    let verdict = if smpp.censored {
        SmVerdict::Censored
    } else if let Some(m) = &margin {
        match m.eta_sm {
            e if e > 0.0 => SmVerdict::Stable,
            e if e < 0.0 => SmVerdict::Unstable,
            _ => SmVerdict::Critical,
        }
    } else if div.system == DivergenceStatus::UnboundedNegative {
        SmVerdict::Unstable
    } else {
        SmVerdict::Stable
    };
    Ok(SuperimposedPart {
        residual_smke: smpp.residual_ke,
        smpp,
        smpe_divergence: div.system,
        margin,
        verdict,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SwingPhase {
    /// |ω| increasing: f and ω share a sign.
    Accelerating,
    Decelerating,
    AtRest,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventOffset {
    pub machine: u32,
    pub kind: EventKind,
    pub t_event: f64,
    /// t_event − t_SMPP
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwingState {
    pub machine: u32,
    pub phase: SwingPhase,
    /// 1-based swing number at the SMPP.
    pub swing: usize,
    pub delta_coi_deg: f64,
    pub omega_coi: f64,
    pub f_coi: f64,
    pub is_critical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualShare {
    pub machine: u32,
    pub imke: f64,
    pub is_max: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualDecomposition {
    pub total: f64,
    pub machines: Vec<ResidualShare>,
    pub max_contributor: Option<u32>,
}

/// Splits a residual SMKE into per-machine IMKE shares.
pub fn decompose_residual(ids: &[u32], imke: &[f64]) -> Result<ResidualDecomposition> {
    check_len(ids.len(), imke.len())?;
    let max_idx = imke
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k);
    Ok(ResidualDecomposition {
        total: imke.iter().sum(),
        machines: ids
            .iter()
            .zip(imke)
            .enumerate()
            .map(|(k, (&machine, &imke))| ResidualShare {
                machine,
                imke,
                is_max: Some(k) == max_idx,
            })
            .collect(),
        max_contributor: max_idx.map(|k| ids[k]),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Findings {
    pub event_offsets: Vec<EventOffset>,
    pub swing_states: Vec<SwingState>,
    pub residual: Option<ResidualDecomposition>,
    /// Most disturbed machine: the one with the largest peak IMPE.
    pub most_disturbed: Option<u32>,
}

impl Findings {
    pub fn is_empty(&self) -> bool {
        self.event_offsets.is_empty() && self.swing_states.is_empty() && self.residual.is_none()
    }

    fn empty() -> Self {
        Findings {
            event_offsets: vec![],
            swing_states: vec![],
            residual: None,
            most_disturbed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssessmentReport {
    pub schema_version: u32,
    pub scenario: String,
    pub dt: f64,
    pub clearing_time: f64,
    pub options: AssessOptions,
    pub superimposed: SuperimposedPart,
    pub individual: Vec<MachineVerdict>,
    pub system: SystemVerdict,
    pub leading_machine: Option<u32>,
    pub mismatch_findings: Findings,
}

impl AssessmentReport {
    pub fn write_json<W: Write>(&self, w: W) -> serde_json::Result<()> {
        serde_json::to_writer_pretty(w, self)
    }

    /// Plain-text tables of the findings.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let sm = &self.superimposed;
        let _ = writeln!(
            s,
            "scenario: {}  clearing: {:.3} s  dt: {} s",
            self.scenario, self.clearing_time, self.dt
        );
        let _ = writeln!(
            s,
            "superimposed: SMPP at {:.3} s, SMPE {:.4} p.u., residual SMKE {:.4} p.u., verdict {:?}",
            sm.smpp.t, sm.smpp.value, sm.residual_smke, sm.verdict
        );
        if let Some(m) = &sm.margin {
            let _ = writeln!(
                s,
                "margin: eta = {:.4} ({:?}, V_cr {:.4}, V_c {:.4})",
                m.eta_sm, m.source, m.v_cr, m.v_c
            );
        }
        let _ = writeln!(
            s,
            "individual: system {}  leading machine {}",
            self.system.status,
            self.leading_machine.map_or("-".into(), |m| m.to_string())
        );
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:>7} {:>9} {:>8} {:>6} {:>10} {:>10}",
            "machine", "status", "critical", "event", "t_event", "peak_impe"
        );
        for v in &self.individual {
            let (kind, t) = v
                .first_event
                .as_ref()
                .map_or(("-".to_string(), "-".to_string()), |e| {
                    (e.kind.to_string(), format!("{:.3}", e.t))
                });
            let _ = writeln!(
                s,
                "{:>7} {:>9} {:>8} {:>6} {:>10} {:>10.4}",
                v.machine, v.status, v.is_critical, kind, t, v.peak_impe
            );
        }
        let f = &self.mismatch_findings;
        if !f.swing_states.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(s, "state at SMPP:");
            let _ = writeln!(
                s,
                "{:>7} {:>13} {:>6} {:>11} {:>10} {:>10}",
                "machine", "phase", "swing", "delta_deg", "imke", "critical"
            );
            let shares = f.residual.as_ref().map(|r| &r.machines);
            for st in &f.swing_states {
                let imke = shares
                    .and_then(|v| v.iter().find(|r| r.machine == st.machine))
                    .map(|r| format!("{:.4}{}", r.imke, if r.is_max { "*" } else { "" }))
                    .unwrap_or_default();
                let _ = writeln!(
                    s,
                    "{:>7} {:>13} {:>6} {:>11.3} {:>10} {:>10}",
                    st.machine,
                    format!("{:?}", st.phase).to_lowercase(),
                    st.swing,
                    st.delta_coi_deg,
                    imke,
                    st.is_critical
                );
            }
        }
        if !f.event_offsets.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(s, "critical-machine events relative to SMPP:");
            for e in &f.event_offsets {
                let _ = writeln!(
                    s,
                    "  machine {:>3} {} at {:.3} s ({:+.3} s)",
                    e.machine, e.kind, e.t_event, e.offset
                );
            }
        }
        s
    }
}

pub fn comparative_report(
    trajectory: &Trajectory,
    trace: &EnergyTrace,
    margin: Option<Margin>,
    opts: &AssessOptions,
) -> Result<AssessmentReport> {
    let individual = individual_verdicts(trajectory, trace, opts)?;
    let system = system_verdict(&individual);
    let superimposed = superimposed_verdict(trace, margin, opts.theta_div)?;
    let k = superimposed.smpp.index;
    let t_smpp = superimposed.smpp.t;

    let findings = if trace.is_static() {
        Findings::empty()
    } else {
        let state = trajectory.sample(k);
        let event_offsets = individual
            .iter()
            .filter(|v| v.is_critical)
            .flat_map(|v| v.events.iter())
            .map(|e| EventOffset {
                machine: e.machine.expect("machine event"),
                kind: e.kind,
                t_event: e.t,
                offset: e.t - t_smpp,
            })
            .collect();
        let swing_states = individual
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let (w, f) = (state.omega_coi[i], state.f_coi[i]);
                let phase = if w == 0.0 {
                    SwingPhase::AtRest
                } else if w * f > 0.0 {
                    SwingPhase::Accelerating
                } else {
                    SwingPhase::Decelerating
                };
                SwingState {
                    machine: v.machine,
                    phase,
                    swing: v.swing_index_at(t_smpp) + 1,
                    delta_coi_deg: state.delta_coi[i].to_degrees(),
                    omega_coi: w,
                    f_coi: f,
                    is_critical: v.is_critical,
                }
            })
            .collect();
        let most_disturbed = individual
            .iter()
            .max_by(|a, b| a.peak_impe.total_cmp(&b.peak_impe))
            .map(|v| v.machine);
        Findings {
            event_offsets,
            swing_states,
            residual: Some(decompose_residual(&trace.machine_ids, &trace.imke[k])?),
            most_disturbed,
        }
    };

    Ok(AssessmentReport {
        schema_version: SCHEMA_VERSION,
        scenario: trajectory.scenario.name.clone(),
        dt: trajectory.dt,
        clearing_time: trajectory.clearing_time,
        options: *opts,
        leading_machine: system.leading_machine,
        superimposed,
        individual,
        system,
        mismatch_findings: findings,
    })
}

/// Everything computed for one clearing time.
#[derive(Debug, Clone)]
pub struct Assessed {
    pub trajectory: Trajectory,
    pub trace: EnergyTrace,
    pub verdicts: Vec<MachineVerdict>,
    pub system: SystemVerdict,
    pub divergence: DivergenceReport,
}

/// Simulate, build the energy trace and judge stability.
pub fn assess(scenario: &Scenario, opts: &AssessOptions) -> Result<Assessed> {
    let trajectory = integrate(scenario)?;
    let trace = machine_energy_trace(&trajectory)?;
    let verdicts = individual_verdicts(&trajectory, &trace, opts)?;
    let system = system_verdict(&verdicts);
    let divergence = divergence_check(&trace, opts.theta_div);
    Ok(Assessed {
        trajectory,
        trace,
        verdicts,
        system,
        divergence,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictSource {
    /// The unstable bracket end was decided by an IDLP.
    Individual,
    /// The unstable bracket end was decided by IMPE divergence.
    Divergence,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Probe {
    pub clearing_time: f64,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CctResult {
    pub cct: f64,
    /// (last stable, first unstable) clearing times.
    pub bracket: (f64, f64),
    pub resolution: f64,
    pub verdict_source: VerdictSource,
    /// Integration step used for every probe.
    pub dt: f64,
    pub probes: Vec<Probe>,
}

impl CctResult {
    pub fn write_json<W: Write>(&self, w: W) -> serde_json::Result<()> {
        let mut v = serde_json::to_value(self)?;
        v["schema_version"] = SCHEMA_VERSION.into();
        v["integrator"] = "rk4".into();
        serde_json::to_writer_pretty(w, &v)
    }
}

/// Integration step used when probing clearing times on a `resolution` grid:
/// the largest step not above `dt` that divides `resolution`.
pub fn probe_dt(dt: f64, resolution: f64) -> f64 {
    let k = (resolution / dt - 1e-9).ceil().max(1.0);
    resolution / k
}

/// Bisection for the critical clearing time on the grid `j·resolution`.
///
/// `probes_per_round` clearing times are simulated per round (in parallel on
/// the current rayon pool); 1 gives plain bisection. The returned bracket
/// does not depend on it as long as verdicts are monotone in clearing time.
pub fn find_cct(
    scenario: &Scenario,
    bracket: (f64, f64),
    resolution: f64,
    probes_per_round: usize,
    opts: &AssessOptions,
) -> Result<CctResult> {
    if !(resolution > 0.0) {
        return Err(Error::Validation("resolution must be > 0".into()));
    }
    let (mut lo, mut hi) = (
        (bracket.0 / resolution).round() as i64,
        (bracket.1 / resolution).round() as i64,
    );
    if lo < 0 || hi <= lo {
        return Err(Error::Validation(format!(
            "invalid bracket ({}, {})",
            bracket.0, bracket.1
        )));
    }
    let dt = probe_dt(scenario.sim.dt, resolution);
    let mut base = scenario.clone();
    base.sim.dt = dt;
    let probe = |j: i64| -> Result<(Status, Option<VerdictSource>)> {
        let s = base.with_clearing_time(j as f64 * resolution)?;
        let a = assess(&s, opts)?;
        let source = a.system.leading_machine.map(|m| {
            let v = a
                .verdicts
                .iter()
                .find(|v| v.machine == m)
                .expect("leading machine");
            match v.first_event.as_ref().map(|e| e.kind) {
                Some(EventKind::Idlp) => VerdictSource::Individual,
                _ => VerdictSource::Divergence,
            }
        });
        Ok((a.system.status, source))
    };

    let mut probes: Vec<(i64, Status)> = Vec::new();
    let ends: Vec<_> = [lo, hi]
        .par_iter()
        .map(|&j| probe(j))
        .collect::<Result<_>>()?;
    let (lo_status, hi_status) = (ends[0].0, ends[1].0);
    probes.push((lo, lo_status));
    probes.push((hi, hi_status));
    if lo_status != Status::Stable || hi_status != Status::Unstable {
        return Err(Error::Bracket {
            lo: lo as f64 * resolution,
            lo_status: lo_status.to_string(),
            hi: hi as f64 * resolution,
            hi_status: hi_status.to_string(),
        });
    }
    let mut hi_source = ends[1].1.unwrap_or(VerdictSource::Divergence);

    let k = probes_per_round.max(1) as i64;
    while hi - lo > 1 {
        let width = hi - lo;
        let mut points: Vec<i64> = (1..=k)
            .map(|p| lo + width * p / (k + 1))
            .filter(|&j| j > lo && j < hi)
            .collect();
        points.dedup();
        let results: Vec<_> = points
            .par_iter()
            .map(|&j| probe(j))
            .collect::<Result<_>>()?;
        for (&j, r) in points.iter().zip(&results) {
            probes.push((j, r.0));
        }
        if let Some(p) = results.iter().position(|r| r.0 == Status::Censored) {
            return Err(Error::NonMonotone(format!(
                "censored verdict at {} s; extend the horizon",
                points[p] as f64 * resolution
            )));
        }
        // first unstable point of this round; everything before it must be stable
        let first_unstable = results.iter().position(|r| r.0 == Status::Unstable);
        match first_unstable {
            Some(p) => {
                hi = points[p];
                hi_source = results[p].1.unwrap_or(VerdictSource::Divergence);
                if p > 0 {
                    lo = points[p - 1];
                }
            }
            None => lo = *points.last().expect("non-empty round"),
        }
    }

    // any stable probe above an unstable one means the verdicts are not monotone
    probes.sort_by_key(|p| p.0);
    let first_unstable = probes.iter().find(|p| p.1 == Status::Unstable).map(|p| p.0);
    if let Some(fu) = first_unstable {
        if probes.iter().any(|p| p.0 > fu && p.1 != Status::Unstable) {
            let listing: Vec<String> = probes
                .iter()
                .map(|p| format!("{:.4}s:{}", p.0 as f64 * resolution, p.1))
                .collect();
            return Err(Error::NonMonotone(listing.join(", ")));
        }
    }

    Ok(CctResult {
        cct: lo as f64 * resolution,
        bracket: (lo as f64 * resolution, hi as f64 * resolution),
        resolution,
        verdict_source: hi_source,
        dt,
        probes: probes
            .into_iter()
            .map(|(j, status)| Probe {
                clearing_time: j as f64 * resolution,
                status,
            })
            .collect(),
    })
}
