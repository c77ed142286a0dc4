//! Equilibrium points, critical transient energies and stability margins.
//!
//! Equilibria solve f_i-SYS(δ) = 0 in COI coordinates. The COI constraint
//! Σ M_i δ_i = 0 is enforced by eliminating the angle of the reference
//! machine (largest inertia), leaving an (n−1)-dimensional Newton system.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::energy::{find_smpp, ray_potential, EnergyTrace};
use crate::error::{check_len, Error, Result};
use crate::format::SCHEMA_VERSION;
use crate::simulator::{accel_into, Trajectory};
use crate::system::{Machine, PowerModel, Scenario, StageLabel};

pub const MAX_NEWTON_ITERATIONS: usize = 50;
/// Convergence threshold on ‖f‖∞ (p.u.).
pub const NEWTON_TOLERANCE: f64 = 1e-11;
/// Largest accepted mismatch on a returned equilibrium.
pub const MISMATCH_LIMIT: f64 = 1e-8;
/// α sub-steps for the UEP energy along the linear trajectory.
pub const UEP_ENERGY_SUBSTEPS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EquilibriumKind {
    #[serde(rename = "SEP")]
    Sep,
    #[serde(rename = "UEP")]
    Uep,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumPoint {
    pub kind: EquilibriumKind,
    /// COI-frame angles (rad).
    pub delta_coi: Vec<f64>,
    pub mismatch_norm: f64,
    /// Eigenvalues of the linearized dynamics with positive real part.
    pub jacobian_signature: usize,
    pub iterations: usize,
}

impl EquilibriumPoint {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": self.kind,
            "delta_coi_deg": self.delta_coi.iter().map(|d| d.to_degrees()).collect::<Vec<_>>(),
            "mismatch_norm": self.mismatch_norm,
            "jacobian_signature": self.jacobian_signature,
        })
    }
}

fn reference_machine(machines: &[Machine]) -> usize {
    machines.iter().enumerate().fold(0, |best, (k, m)| {
        if m.inertia > machines[best].inertia {
            k
        } else {
            best
        }
    })
}

fn to_coi(machines: &[Machine], delta: &[f64]) -> Vec<f64> {
    let mt: f64 = machines.iter().map(|m| m.inertia).sum();
    let mean: f64 = delta
        .iter()
        .zip(machines)
        .map(|(d, m)| m.inertia * d)
        .sum::<f64>()
        / mt;
    delta.iter().map(|d| d - mean).collect()
}

/// ∂f_i/∂δ_j of the COI-frame accelerating power, analytic.
pub fn accel_jacobian(model: &PowerModel, machines: &[Machine], delta: &[f64]) -> DMatrix<f64> {
    let n = machines.len();
    let jpe = model.pe_jacobian(delta);
    let mt: f64 = machines.iter().map(|m| m.inertia).sum();
    let col_sums: Vec<f64> = (0..n).map(|j| jpe.column(j).sum()).collect();
    DMatrix::from_fn(n, n, |i, j| {
        -jpe[(i, j)] + machines[i].inertia / mt * col_sums[j]
    })
}

/// Jacobian of the reduced system: rows/columns of all machines but `r`,
/// with δ_r = −Σ_{l≠r} M_l δ_l / M_r.
fn reduced_jacobian(full: &DMatrix<f64>, machines: &[Machine], r: usize) -> DMatrix<f64> {
    let idx: Vec<usize> = (0..machines.len()).filter(|&k| k != r).collect();
    let mr = machines[r].inertia;
    DMatrix::from_fn(idx.len(), idx.len(), |a, b| {
        let (i, l) = (idx[a], idx[b]);
        full[(i, l)] - machines[l].inertia / mr * full[(i, r)]
    })
}

/// Positive-real-part eigenvalue count of the linearized COI dynamics
/// ẍ = M⁻¹·J·x − M⁻¹·D·ẋ on the reduced coordinates.
pub fn jacobian_signature(model: &PowerModel, machines: &[Machine], delta_coi: &[f64]) -> usize {
    let n = machines.len();
    if n < 2 {
        return 0;
    }
    let r = reference_machine(machines);
    let jr = reduced_jacobian(&accel_jacobian(model, machines, delta_coi), machines, r);
    let idx: Vec<usize> = (0..n).filter(|&k| k != r).collect();
    let m = idx.len();
    let mut a = DMatrix::zeros(2 * m, 2 * m);
    for p in 0..m {
        a[(p, m + p)] = 1.0;
        let mach = &machines[idx[p]];
        for q in 0..m {
            a[(m + p, q)] = jr[(p, q)] / mach.inertia;
        }
        a[(m + p, m + p)] = -mach.damping / mach.inertia;
    }
    let eig = a.complex_eigenvalues();
    let scale = eig.iter().map(|z| z.norm()).fold(1.0, f64::max);
    eig.iter().filter(|z| z.re > 1e-7 * scale).count()
}

struct NewtonOutcome {
    delta: Vec<f64>,
    mismatch: f64,
    iterations: usize,
}

fn newton(model: &PowerModel, machines: &[Machine], guess: &[f64]) -> Result<NewtonOutcome> {
    let n = machines.len();
    let r = reference_machine(machines);
    let mr = machines[r].inertia;
    let idx: Vec<usize> = (0..n).filter(|&k| k != r).collect();
    let mut delta = to_coi(machines, guess);
    let mut f = vec![0.0; n];
    let mut history = Vec::new();

    let residual = |delta: &[f64], f: &mut [f64]| {
        accel_into(model, machines, delta, f);
        f.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    };
    let apply = |delta: &[f64], dx: &[f64], lambda: f64| {
        let mut d = delta.to_vec();
        for (p, &i) in idx.iter().enumerate() {
            d[i] += lambda * dx[p];
        }
        let rest: f64 = idx.iter().map(|&i| machines[i].inertia * d[i]).sum();
        d[r] = -rest / mr;
        d
    };

    let mut norm = residual(&delta, &mut f);
    for it in 0..=MAX_NEWTON_ITERATIONS {
        history.push(norm);
        if !norm.is_finite() {
            break;
        }
        if norm <= NEWTON_TOLERANCE {
            return Ok(NewtonOutcome {
                delta,
                mismatch: norm,
                iterations: it,
            });
        }
        if it == MAX_NEWTON_ITERATIONS {
            break;
        }
        let jr = reduced_jacobian(&accel_jacobian(model, machines, &delta), machines, r);
        let rhs = nalgebra::DVector::from_iterator(idx.len(), idx.iter().map(|&i| -f[i]));
        let Some(dx) = jr.lu().solve(&rhs) else {
            break;
        };
        // backtracking on the max-norm residual
        let mut lambda = 1.0;
        let mut f_trial = vec![0.0; n];
        let mut accepted = None;
        for _ in 0..30 {
            let trial = apply(&delta, dx.as_slice(), lambda);
            let tn = residual(&trial, &mut f_trial);
            if tn < norm {
                accepted = Some((trial, tn));
                break;
            }
            lambda *= 0.5;
        }
        let Some((d, tn)) = accepted else {
            break;
        };
        delta = d;
        norm = tn;
        accel_into(model, machines, &delta, &mut f);
    }
    Err(Error::NoConvergence {
        iterations: history.len().saturating_sub(1),
        history,
    })
}

fn solve(
    scenario: &Scenario,
    label: StageLabel,
    guess: &[f64],
) -> Result<(PowerModel, NewtonOutcome)> {
    check_len(scenario.n(), guess.len())?;
    let model = PowerModel::new(&scenario.machines, scenario.stage(label))?;
    let out = newton(&model, &scenario.machines, guess)?;
    Ok((model, out))
}

/// Stable equilibrium of `label`'s network from a flat start.
pub fn solve_sep(scenario: &Scenario, label: StageLabel) -> Result<EquilibriumPoint> {
    solve_sep_from(scenario, label, &vec![0.0; scenario.n()])
}

pub fn solve_sep_from(
    scenario: &Scenario,
    label: StageLabel,
    guess: &[f64],
) -> Result<EquilibriumPoint> {
    let (model, out) = solve(scenario, label, guess)?;
    let sig = jacobian_signature(&model, &scenario.machines, &out.delta);
    if sig != 0 {
        return Err(Error::Classification {
            expected: "SEP",
            positive: sig,
        });
    }
    Ok(EquilibriumPoint {
        kind: EquilibriumKind::Sep,
        delta_coi: out.delta,
        mismatch_norm: out.mismatch,
        jacobian_signature: 0,
        iterations: out.iterations,
    })
}

/// Post-fault unstable equilibrium reached by Newton from `guess`.
pub fn solve_uep(scenario: &Scenario, guess: &[f64]) -> Result<EquilibriumPoint> {
    let (model, out) = solve(scenario, StageLabel::Postfault, guess)?;
    let sig = jacobian_signature(&model, &scenario.machines, &out.delta);
    if sig == 0 {
        return Err(Error::ConvergedToSep);
    }
    Ok(EquilibriumPoint {
        kind: EquilibriumKind::Uep,
        delta_coi: out.delta,
        mismatch_norm: out.mismatch,
        jacobian_signature: sig,
        iterations: out.iterations,
    })
}

/// SEP angles with the machines at `reflect` (indices) moved to π − δ,
/// re-centred on the COI.
pub fn reflection_guess(machines: &[Machine], sep: &[f64], reflect: &[usize]) -> Vec<f64> {
    let mut d = sep.to_vec();
    for &i in reflect {
        d[i] = std::f64::consts::PI - d[i];
    }
    to_coi(machines, &d)
}

/// Machine indices ranked by fault-on acceleration f_i/M_i at the pre-fault SEP.
pub fn rank_by_faulton_acceleration(
    scenario: &Scenario,
    prefault_sep: &[f64],
) -> Result<Vec<usize>> {
    let machines = &scenario.machines;
    let model = PowerModel::new(machines, scenario.stage(StageLabel::Faulton))?;
    let mut f = vec![0.0; machines.len()];
    accel_into(&model, machines, prefault_sep, &mut f);
    let mut order: Vec<usize> = (0..machines.len()).collect();
    order.sort_by(|&a, &b| {
        let (xa, xb) = (f[a] / machines[a].inertia, f[b] / machines[b].inertia);
        xb.total_cmp(&xa).then(a.cmp(&b))
    });
    Ok(order)
}

/// Multi-start UEP search: reflect the k most accelerated machines for
/// k = 1..n−1, keep converged UEPs and return the one with the lowest
/// energy relative to `sep` (ties: lower mismatch).
pub fn solve_uep_multistart(
    scenario: &Scenario,
    sep: &EquilibriumPoint,
) -> Result<EquilibriumPoint> {
    let prefault = solve_sep(scenario, StageLabel::Prefault)?;
    let order = rank_by_faulton_acceleration(scenario, &prefault.delta_coi)?;
    let n = scenario.n();
    let found: Vec<(f64, EquilibriumPoint)> = (1..n)
        .into_par_iter()
        .filter_map(|k| {
            let guess = reflection_guess(&scenario.machines, &sep.delta_coi, &order[..k]);
            let uep = solve_uep(scenario, &guess).ok()?;
            let e = uep_energy(scenario, sep, &uep).ok()?;
            Some((e, uep))
        })
        .collect();
    found
        .into_iter()
        .min_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.mismatch_norm.total_cmp(&b.1.mismatch_norm))
        })
        .map(|(_, u)| u)
        .ok_or(Error::NoConvergence {
            iterations: MAX_NEWTON_ITERATIONS,
            history: vec![],
        })
}

/// Point α of the straight segment SEP → UEP.
pub fn linear_trajectory(sep: &[f64], uep: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_len(sep.len(), uep.len())?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Validation(format!("alpha {alpha} outside [0, 1]")));
    }
    Ok(sep
        .iter()
        .zip(uep)
        .map(|(s, u)| alpha * (u - s) + s)
        .collect())
}

/// SMPE at the UEP, integrated along the linear trajectory from the SEP.
pub fn uep_energy(
    scenario: &Scenario,
    sep: &EquilibriumPoint,
    uep: &EquilibriumPoint,
) -> Result<f64> {
    let model = PowerModel::new(&scenario.machines, scenario.stage(StageLabel::Postfault))?;
    ray_potential(
        &model,
        &scenario.machines,
        &sep.delta_coi,
        &uep.delta_coi,
        UEP_ENERGY_SUBSTEPS,
    )
}

/// Ray potential from the post-fault SEP to the clearing angles of
/// `trajectory`: the shift from the clearing-point datum to the SEP datum.
pub fn sep_datum_offset(trajectory: &Trajectory, sep: &EquilibriumPoint) -> Result<f64> {
    let scenario = &trajectory.scenario;
    let model = PowerModel::new(&scenario.machines, scenario.stage(StageLabel::Postfault))?;
    let clearing = &trajectory.sample(trajectory.clearing_index).delta_coi;
    ray_potential(
        &model,
        &scenario.machines,
        &sep.delta_coi,
        clearing,
        UEP_ENERGY_SUBSTEPS,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EnergySource {
    #[serde(rename = "SCTP")]
    Sctp,
    #[serde(rename = "UEP")]
    Uep,
}

/// Critical transient energy taken at the SMPP of a critically stable run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalEnergy {
    pub v_cr: f64,
    pub smke: f64,
    pub smpe: f64,
    pub t_smpp: f64,
    pub source: EnergySource,
    /// Run without any motion; `v_cr` is 0 and carries no information.
    pub degenerate: bool,
}

pub fn sctp_energy(_critical_stable: &Trajectory, trace: &EnergyTrace) -> Result<CriticalEnergy> {
    let smpp = find_smpp(trace)?;
    if smpp.censored {
        return Err(Error::Censored { t: smpp.t });
    }
    Ok(CriticalEnergy {
        v_cr: trace.smte[smpp.index],
        smke: trace.smke[smpp.index],
        smpe: trace.smpe[smpp.index],
        t_smpp: smpp.t,
        source: EnergySource::Sctp,
        degenerate: trace.is_static(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Margin {
    pub v_cr: f64,
    pub v_c: f64,
    pub v_ke_c: f64,
    #[serde(rename = "eta")]
    pub eta_sm: f64,
    pub eta_sys: f64,
    pub source: EnergySource,
}

impl Margin {
    pub fn write_json<W: Write>(&self, w: W) -> serde_json::Result<()> {
        let mut v = serde_json::to_value(self)?;
        v["schema_version"] = SCHEMA_VERSION.into();
        serde_json::to_writer_pretty(w, &v)
    }
}

/// η_SM = (V_cr − V_c)/V_KE,c; the system margin equals it.
pub fn margin(v_cr: f64, v_c: f64, v_ke_c: f64, source: EnergySource) -> Result<Margin> {
    if !(v_ke_c > 0.0) {
        return Err(Error::UndefinedMargin(v_ke_c));
    }
    let eta_sm = (v_cr - v_c) / v_ke_c;
    Ok(Margin {
        v_cr,
        v_c,
        v_ke_c,
        eta_sm,
        eta_sys: eta_sm,
        source,
    })
}

/// Clearing energy of a run on the SEP datum: SMKE at clearing plus the
/// ray potential from the SEP to the clearing angles.
pub fn clearing_energy(
    trajectory: &Trajectory,
    trace: &EnergyTrace,
    sep: &EquilibriumPoint,
) -> Result<(f64, f64)> {
    let ke = trace.smke[trace.clearing_index];
    Ok((ke + sep_datum_offset(trajectory, sep)?, ke))
}

/// Margin of `run` against the SMPP energy of a critically stable run, both
/// moved onto the SEP datum.
pub fn sctp_margin(
    critical: (&Trajectory, &EnergyTrace),
    run: (&Trajectory, &EnergyTrace),
    sep: &EquilibriumPoint,
) -> Result<Margin> {
    let cr = sctp_energy(critical.0, critical.1)?;
    let v_cr = cr.v_cr + sep_datum_offset(critical.0, sep)?;
    let (v_c, ke) = clearing_energy(run.0, run.1, sep)?;
    margin(v_cr, v_c, ke, EnergySource::Sctp)
}

/// Margin of `run` against the UEP energy.
pub fn uep_margin(
    run: (&Trajectory, &EnergyTrace),
    sep: &EquilibriumPoint,
    uep: &EquilibriumPoint,
) -> Result<Margin> {
    let v_cr = uep_energy(&run.0.scenario, sep, uep)?;
    let (v_c, ke) = clearing_energy(run.0, run.1, sep)?;
    margin(v_cr, v_c, ke, EnergySource::Uep)
}
