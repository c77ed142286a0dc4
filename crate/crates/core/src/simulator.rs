//! Fixed-step integration of the classical swing dynamics in the
//! center-of-inertia (COI) frame.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::equilibria;
use crate::error::{check_len, Error, Result};
use crate::format::{sig9, SCHEMA_VERSION};
use crate::system::{Machine, NetworkStage, PowerModel, Scenario, StageLabel};

/// One trajectory sample. Angles in radians, speeds in rad/s deviation from
/// synchronous speed, powers in p.u.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoiState {
    pub t: f64,
    pub delta_abs: Vec<f64>,
    pub delta_coi: Vec<f64>,
    pub omega_coi: Vec<f64>,
    pub f_coi: Vec<f64>,
    pub p_coi_total: f64,
    pub delta_sys: f64,
}

/// COI angle and the machine angles and speeds relative to it.
#[derive(Debug, Clone, PartialEq)]
pub struct CoiFrame {
    pub delta_sys: f64,
    pub omega_sys: f64,
    pub delta_coi: Vec<f64>,
    pub omega_coi: Vec<f64>,
}

pub fn coi_transform(
    delta_abs: &[f64],
    omega_abs: &[f64],
    machines: &[Machine],
) -> Result<CoiFrame> {
    check_len(machines.len(), delta_abs.len())?;
    check_len(machines.len(), omega_abs.len())?;
    let mt: f64 = machines.iter().map(|m| m.inertia).sum();
    let weighted = |v: &[f64]| {
        v.iter()
            .zip(machines)
            .map(|(x, m)| m.inertia * x)
            .sum::<f64>()
            / mt
    };
    let delta_sys = weighted(delta_abs);
    let omega_sys = weighted(omega_abs);
    Ok(CoiFrame {
        delta_sys,
        omega_sys,
        delta_coi: delta_abs.iter().map(|d| d - delta_sys).collect(),
        omega_coi: omega_abs.iter().map(|w| w - omega_sys).collect(),
    })
}

/// COI-frame accelerating power f_i = Pm_i − Pe_i − (M_i/M_T)·P_COI, written
/// into `f`; returns P_COI. Unweighted, the f_i sum to zero.
pub(crate) fn accel_into(
    model: &PowerModel,
    machines: &[Machine],
    delta: &[f64],
    f: &mut [f64],
) -> f64 {
    model.electrical_power_into(delta, f);
    let mut p_coi = 0.0;
    for (fi, m) in f.iter_mut().zip(machines) {
        *fi = m.mech_power - *fi;
        p_coi += *fi;
    }
    let mt: f64 = machines.iter().map(|m| m.inertia).sum();
    for (fi, m) in f.iter_mut().zip(machines) {
        *fi -= m.inertia / mt * p_coi;
    }
    p_coi
}

/// COI-frame accelerating power of every machine at angles `delta`
/// (absolute or COI; only angle differences matter).
pub fn accelerating_power(
    delta: &[f64],
    machines: &[Machine],
    stage: &NetworkStage,
) -> Result<Vec<f64>> {
    check_len(machines.len(), delta.len())?;
    let model = PowerModel::new(machines, stage)?;
    let mut f = vec![0.0; delta.len()];
    accel_into(&model, machines, delta, &mut f);
    Ok(f)
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    #[serde(skip)]
    pub scenario: Arc<Scenario>,
    pub dt: f64,
    /// Clearing time snapped to the integration grid.
    pub clearing_time: f64,
    /// Sample index of fault clearing in the combined timeline.
    pub clearing_index: usize,
    /// Samples 0..=clearing_index evaluated with the fault-on network.
    pub faulton: Vec<CoiState>,
    /// Samples from clearing to the horizon evaluated with the post-fault
    /// network; `postfault[0]` shares (δ, ω) with the last fault-on sample.
    pub postfault: Vec<CoiState>,
    pub diverged_numerically: bool,
}

impl Trajectory {
    pub fn machines(&self) -> &[Machine] {
        &self.scenario.machines
    }

    /// Number of samples in the combined timeline.
    pub fn len(&self) -> usize {
        if self.postfault.is_empty() {
            self.faulton.len()
        } else {
            self.faulton.len() - 1 + self.postfault.len()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sample `k` of the combined timeline. The clearing sample is the
    /// post-fault view of the clearing instant.
    pub fn sample(&self, k: usize) -> &CoiState {
        if self.postfault.is_empty() || k < self.clearing_index {
            &self.faulton[k]
        } else {
            &self.postfault[k - self.clearing_index]
        }
    }

    pub fn samples(&self) -> impl Iterator<Item = &CoiState> + '_ {
        (0..self.len()).map(move |k| self.sample(k))
    }

    /// Number of samples at or after clearing.
    pub fn post_clearing_len(&self) -> usize {
        self.postfault.len()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let ids: Vec<u32> = self.machines().iter().map(|m| m.id).collect();
        writeln!(
            w,
            "# smte trajectory schema={SCHEMA_VERSION} integrator=rk4 dt={} clearing_time={} angles=deg scenario={:?}{}",
            self.dt,
            self.clearing_time,
            self.scenario.name,
            if self.diverged_numerically { " diverged_numerically" } else { "" }
        )?;
        let mut header = vec!["t".to_string(), "delta_sys".to_string()];
        for prefix in ["delta_coi", "omega_coi", "f_coi"] {
            header.extend(ids.iter().map(|id| format!("{prefix}_{id}")));
        }
        writeln!(w, "{}", header.join(","))?;
        for s in self.samples() {
            let mut row = vec![sig9(s.t), sig9(s.delta_sys.to_degrees())];
            row.extend(s.delta_coi.iter().map(|d| sig9(d.to_degrees())));
            row.extend(s.omega_coi.iter().map(|&x| sig9(x)));
            row.extend(s.f_coi.iter().map(|&x| sig9(x)));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

struct Rk4<'a> {
    machines: &'a [Machine],
    model: PowerModel,
    n: usize,
}

impl Rk4<'_> {
    /// y = [δ; ω] in the absolute frame.
    fn deriv(&self, y: &[f64], dy: &mut [f64]) {
        let n = self.n;
        let (delta, omega) = y.split_at(n);
        let (ddelta, domega) = dy.split_at_mut(n);
        ddelta.copy_from_slice(omega);
        self.model.electrical_power_into(delta, domega);
        for i in 0..n {
            let m = &self.machines[i];
            domega[i] = (m.mech_power - domega[i] - m.damping * omega[i]) / m.inertia;
        }
    }

    fn step(&self, y: &mut [f64], dt: f64, scratch: &mut [Vec<f64>; 5]) {
        let [k1, k2, k3, k4, tmp] = scratch;
        self.deriv(y, k1);
        for (t, (yi, k)) in tmp.iter_mut().zip(y.iter().zip(k1.iter())) {
            *t = yi + 0.5 * dt * k;
        }
        self.deriv(tmp, k2);
        for (t, (yi, k)) in tmp.iter_mut().zip(y.iter().zip(k2.iter())) {
            *t = yi + 0.5 * dt * k;
        }
        self.deriv(tmp, k3);
        for (t, (yi, k)) in tmp.iter_mut().zip(y.iter().zip(k3.iter())) {
            *t = yi + dt * k;
        }
        self.deriv(tmp, k4);
        for i in 0..y.len() {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }

    fn state(&self, t: f64, y: &[f64], f: &mut [f64]) -> CoiState {
        let (delta, omega) = y.split_at(self.n);
        let frame = coi_transform(delta, omega, self.machines).expect("lengths fixed");
        let p_coi_total = accel_into(&self.model, self.machines, delta, f);
        CoiState {
            t,
            delta_abs: delta.to_vec(),
            delta_coi: frame.delta_coi,
            omega_coi: frame.omega_coi,
            f_coi: f.to_vec(),
            p_coi_total,
            delta_sys: frame.delta_sys,
        }
    }
}

/// Integrates the scenario from the pre-fault SEP (or the scenario's
/// explicit initial angles) at rest.
pub fn integrate(scenario: &Scenario) -> Result<Trajectory> {
    let delta0 = match &scenario.sim.initial_delta {
        Some(d) => d.clone(),
        None => equilibria::solve_sep(scenario, StageLabel::Prefault)?.delta_coi,
    };
    let omega0 = vec![0.0; scenario.n()];
    integrate_from(scenario, &delta0, &omega0)
}

/// Fixed-step RK4: fault-on network up to the grid-snapped clearing time,
/// post-fault network from there to the horizon.
pub fn integrate_from(scenario: &Scenario, delta0: &[f64], omega0: &[f64]) -> Result<Trajectory> {
    let n = scenario.n();
    check_len(n, delta0.len())?;
    check_len(n, omega0.len())?;
    let dt = scenario.sim.dt;
    let n_clear = (scenario.fault.clearing_time / dt).round() as usize;
    let n_total = ((scenario.sim.horizon / dt).round() as usize).max(n_clear);
    let machines = &scenario.machines;

    let faulted = Rk4 {
        machines,
        model: PowerModel::new(machines, scenario.stage(StageLabel::Faulton))?,
        n,
    };
    let cleared = Rk4 {
        machines,
        model: PowerModel::new(machines, scenario.stage(StageLabel::Postfault))?,
        n,
    };

    let mut y: Vec<f64> = delta0.iter().chain(omega0).copied().collect();
    let mut scratch: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; 2 * n]);
    let mut f = vec![0.0; n];
    let finite = |s: &CoiState| {
        s.delta_abs
            .iter()
            .chain(&s.omega_coi)
            .chain(&s.f_coi)
            .all(|x| x.is_finite())
    };

    let mut faulton = Vec::with_capacity(n_clear + 1);
    let mut postfault = Vec::with_capacity(n_total - n_clear + 1);
    let mut diverged = false;

    for k in 0..=n_clear {
        if k > 0 {
            faulted.step(&mut y, dt, &mut scratch);
        }
        let s = faulted.state(k as f64 * dt, &y, &mut f);
        if !finite(&s) {
            diverged = true;
            break;
        }
        faulton.push(s);
    }
    if !diverged {
        for k in n_clear..=n_total {
            if k > n_clear {
                cleared.step(&mut y, dt, &mut scratch);
            }
            let s = cleared.state(k as f64 * dt, &y, &mut f);
            if !finite(&s) {
                diverged = true;
                break;
            }
            postfault.push(s);
        }
    }
    if faulton.is_empty() {
        return Err(Error::Validation("initial state is not finite".into()));
    }

    Ok(Trajectory {
        scenario: Arc::new(scenario.clone()),
        dt,
        clearing_time: n_clear as f64 * dt,
        clearing_index: faulton.len() - 1,
        faulton,
        postfault,
        diverged_numerically: diverged,
    })
}

/// One point of a machine's accelerating-power-versus-angle curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KimbarkPoint {
    pub t: f64,
    pub delta_coi: f64,
    pub f_coi: f64,
    pub imke: f64,
}

/// The (δ_i-SYS, f_i-SYS, IMKE_i) curve of one machine, in time order.
pub fn kimbark_trace(trajectory: &Trajectory, machine_id: u32) -> Result<Vec<KimbarkPoint>> {
    let i = trajectory.scenario.machine_index(machine_id)?;
    let m = trajectory.machines()[i].inertia;
    Ok(trajectory
        .samples()
        .map(|s| KimbarkPoint {
            t: s.t,
            delta_coi: s.delta_coi[i],
            f_coi: s.f_coi[i],
            imke: 0.5 * m * s.omega_coi[i] * s.omega_coi[i],
        })
        .collect())
}
