//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAILURES` are reported as FAIL but do not fail
//! the run unless `SMTE_ACCEPT_STRICT=1`; any other failure does.

use std::time::{Duration, Instant};

use smte_core::data::{self, RunKind, SuiteRun, SUITE};
use smte_core::energy::{local_max_near, pes_sample_with_sep, AxisRange, GridSpec};
use smte_core::equilibria::{
    reflection_guess, sctp_margin, sep_datum_offset, uep_energy, EquilibriumKind, MISMATCH_LIMIT,
};
use smte_core::system::Overrides;
use smte_core::*;

const KNOWN_FAILURES: &[&str] = &["energy-conservation"];

type Check = std::result::Result<String, String>;

struct Gate {
    failed: Vec<&'static str>,
}

impl Gate {
    fn run(&mut self, name: &'static str, budget: Duration, check: impl FnOnce() -> Check) {
        let t0 = Instant::now();
        let outcome = check();
        let took = t0.elapsed();
        let outcome = match outcome {
            Ok(d) if took > budget => Err(format!("{d}; over budget {budget:?}")),
            o => o,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d.clone()),
            Err(d) => ("FAIL", d.clone()),
        };
        println!("{tag} {name} [{:.3} s] {detail}", took.as_secs_f64());
        if outcome.is_err() {
            self.failed.push(name);
        }
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn suite_runs(opts: &AssessOptions) -> std::result::Result<Vec<(SuiteRun, Assessed)>, String> {
    let mut out = Vec::new();
    for f in SUITE {
        let (_, runs) = f.runs(opts).map_err(e2s)?;
        for r in runs {
            let a = assess(&r.scenario, opts).map_err(e2s)?;
            out.push((r, a));
        }
    }
    Ok(out)
}

fn residual_sum() -> Check {
    let imke = [
        0.032, 0.080, 0.025, 0.051, 0.002, 0.007, 0.043, 0.818, 0.029, 0.064,
    ];
    let ids: Vec<u32> = (1..=10).collect();
    let d = decompose_residual(&ids, &imke).map_err(e2s)?;
    ensure((d.total - 1.151).abs() <= 1e-12 * 1.151, || {
        format!("sum {}", d.total)
    })?;
    Ok(format!("residual {:.3} p.u.", d.total))
}

fn conservation(opts: &AssessOptions) -> Check {
    let mut lines = Vec::new();
    let mut bad = Vec::new();
    for f in SUITE {
        let (_, runs) = f.runs(opts).map_err(e2s)?;
        for r in runs
            .iter()
            .filter(|r| matches!(r.kind, RunKind::Stable | RunKind::Unstable))
        {
            let t0 = Instant::now();
            let drift = |dt: f64| -> std::result::Result<f64, String> {
                let mut s = r.scenario.clone();
                s.sim.dt = dt;
                let tr = integrate(&s).map_err(e2s)?;
                Ok(conservation_report(&machine_energy_trace(&tr).map_err(e2s)?).relative_drift)
            };
            let (d1, d2) = (drift(0.01)?, drift(0.005)?);
            let took = t0.elapsed();
            let ok = d1 <= 1e-2 && d1 / d2 >= 3.0 && took < Duration::from_secs(5);
            let line = format!(
                "{} {:?} tc {:.2}: drift {d1:.2e} ratio {:.2}",
                f.label,
                r.kind,
                r.clearing_time,
                d1 / d2
            );
            if !ok {
                bad.push(line.clone());
            }
            lines.push(line);
        }
    }
    for l in &lines {
        println!("    {l}");
    }
    ensure(bad.is_empty(), || {
        format!(
            "{} of {} cases out of bound: {}",
            bad.len(),
            lines.len(),
            bad.join("; ")
        )
    })?;
    Ok(format!("{} cases", lines.len()))
}

fn smpp_and_residual(runs: &[(SuiteRun, Assessed)]) -> Check {
    let mut min_resid = f64::INFINITY;
    for (r, a) in runs {
        let smpp = find_smpp(&a.trace).map_err(e2s)?;
        let label = format!("{} {:?}", r.fault.label, r.kind);
        ensure(!smpp.censored && smpp.t >= r.clearing_time, || {
            format!("{label}: no SMPP")
        })?;
        ensure(smpp.residual_ke > 0.0, || {
            format!("{label}: residual {}", smpp.residual_ke)
        })?;
        min_resid = min_resid.min(smpp.residual_ke);
    }
    Ok(format!(
        "{} runs, min residual SMKE {min_resid:.4} p.u.",
        runs.len()
    ))
}

fn divergence(runs: &[(SuiteRun, Assessed)]) -> Check {
    let mut n = 0;
    for (r, a) in runs
        .iter()
        .filter(|(r, _)| matches!(r.kind, RunKind::Stable | RunKind::Unstable))
    {
        let label = format!("{} {:?}", r.fault.label, r.kind);
        let sm = a.divergence.system;
        if r.kind == RunKind::Unstable {
            let crit = a
                .verdicts
                .iter()
                .any(|v| v.is_critical && v.divergence == DivergenceStatus::UnboundedNegative);
            ensure(sm == DivergenceStatus::UnboundedNegative && crit, || {
                format!("{label}: SMPE {sm:?}, critical diverging {crit}")
            })?;
        } else {
            ensure(
                sm == DivergenceStatus::Bounded
                    && a.verdicts
                        .iter()
                        .all(|v| v.divergence == DivergenceStatus::Bounded),
                || format!("{label}: not all bounded"),
            )?;
        }
        n += 1;
    }
    Ok(format!("{n} stable/unstable runs"))
}

fn coupling(runs: &[(SuiteRun, Assessed)]) -> Check {
    let mut n = 0;
    for (r, a) in runs {
        for v in &a.verdicts {
            let i = a.trace.machine_index(v.machine).map_err(e2s)?;
            let impe = a.trace.impe_series(i);
            for e in &v.events {
                ensure(local_max_near(&impe, e.index, 1), || {
                    format!(
                        "{} {:?} m{} {} at {:.3} s",
                        r.fault.label, r.kind, v.machine, e.kind, e.t
                    )
                })?;
                n += 1;
            }
        }
    }
    Ok(format!("{n} events"))
}

fn superimposition(runs: &[(SuiteRun, Assessed)], opts: &AssessOptions) -> Check {
    let rel = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
    let mut samples = 0;
    for (r, a) in runs {
        let t = &a.trace;
        for k in 0..t.len() {
            let ke: f64 = t.imke[k].iter().sum();
            let pe: f64 = t.impe[k].iter().sum();
            ensure(
                rel(t.smke[k], ke) && rel(t.smpe[k], pe) && rel(t.smte[k], t.smke[k] + t.smpe[k]),
                || format!("{} {:?} sample {k}", r.fault.label, r.kind),
            )?;
        }
        samples += t.len();
    }
    let mut margins = 0;
    for f in SUITE {
        let (cct, _) = f.runs(opts).map_err(e2s)?;
        let crit = assess(&f.scenario(cct.cct).map_err(e2s)?, opts).map_err(e2s)?;
        let sep = solve_sep(&crit.trajectory.scenario, StageLabel::Postfault).map_err(e2s)?;
        for (r, a) in runs.iter().filter(|(r, _)| r.fault.label == f.label) {
            let m = sctp_margin(
                (&crit.trajectory, &crit.trace),
                (&a.trajectory, &a.trace),
                &sep,
            )
            .map_err(e2s)?;
            ensure(m.eta_sys.to_bits() == m.eta_sm.to_bits(), || {
                format!("{} {:?} eta differs", f.label, r.kind)
            })?;
            margins += 1;
        }
    }
    Ok(format!("{samples} samples, {margins} margins"))
}

fn equilibria() -> Check {
    let mut worst: f64 = 0.0;
    for s in [data::ts3_ninebus(), data::ts10_newengland()] {
        for l in [StageLabel::Prefault, StageLabel::Postfault] {
            let sep = solve_sep(&s, l).map_err(e2s)?;
            ensure(
                sep.mismatch_norm <= MISMATCH_LIMIT && sep.jacobian_signature == 0,
                || format!("{} {l} SEP", s.name),
            )?;
            worst = worst.max(sep.mismatch_norm);
        }
        let still = s
            .with_overrides(&Overrides {
                clearing_time: Some(0.0),
                horizon: Some(5.0),
                ..Default::default()
            })
            .map_err(e2s)?;
        let sep = solve_sep(&still, StageLabel::Postfault).map_err(e2s)?;
        let tr = integrate_from(&still, &sep.delta_coi, &vec![0.0; s.n()]).map_err(e2s)?;
        let drift = tr
            .samples()
            .flat_map(|st| {
                st.delta_coi
                    .iter()
                    .zip(&sep.delta_coi)
                    .map(|(a, b)| (a - b).abs())
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max);
        ensure(drift <= 1e-6, || {
            format!("{} SEP drifts {drift:.2e} rad over 5 s", s.name)
        })?;
    }

    let s = data::ts3_ninebus();
    let sep = solve_sep(&s, StageLabel::Postfault).map_err(e2s)?;
    let uep = solve_uep(&s, &reflection_guess(&s.machines, &sep.delta_coi, &[1])).map_err(e2s)?;
    ensure(
        uep.kind == EquilibriumKind::Uep
            && uep.jacobian_signature >= 1
            && uep.mismatch_norm <= MISMATCH_LIMIT,
        || {
            format!(
                "reflection UEP signature {} mismatch {:.1e}",
                uep.jacobian_signature, uep.mismatch_norm
            )
        },
    )?;
    worst = worst.max(uep.mismatch_norm);
    let zero = uep_energy(&s, &sep, &sep).map_err(e2s)?;
    ensure(zero == 0.0, || format!("uep_energy(sep, sep) = {zero}"))?;
    let point = |x: f64| AxisRange {
        min_deg: x.to_degrees(),
        max_deg: x.to_degrees(),
        steps: 1,
    };
    let grid = GridSpec {
        a: point(uep.delta_coi[1]),
        b: point(uep.delta_coi[2]),
    };
    let pes = pes_sample_with_sep(&s, &sep, (2, 3), &grid, 1000).map_err(e2s)?;
    let on_grid = pes.values[0][0].ok_or("PES grid point missing")?;
    let e = uep_energy(&s, &sep, &uep).map_err(e2s)?;
    ensure((on_grid - e).abs() <= 1e-4, || {
        format!("PES {on_grid} vs uep_energy {e}")
    })?;
    Ok(format!(
        "max mismatch {worst:.1e}, UEP signature {}, uep_energy {e:.4} vs grid {on_grid:.4}",
        uep.jacobian_signature
    ))
}

fn section_seven(opts: &AssessOptions) -> Check {
    let s = data::ts3_ninebus();
    let cct = find_cct(&s, (0.05, 0.6), 0.01, 4, opts).map_err(e2s)?;
    let crit = assess(&s.with_clearing_time(cct.cct).map_err(e2s)?, opts).map_err(e2s)?;
    let sep = solve_sep(&s, StageLabel::Postfault).map_err(e2s)?;
    let uep = solve_uep_multistart(&s, &sep).map_err(e2s)?;
    let v_uep = uep_energy(&s, &sep, &uep).map_err(e2s)?;
    let sctp = sctp_energy(&crit.trajectory, &crit.trace).map_err(e2s)?;
    let v_sctp = sctp.v_cr + sep_datum_offset(&crit.trajectory, &sep).map_err(e2s)?;
    let cons = conservation_report(&crit.trace);
    let bound = 1e-2 * cons.smte_at_clearing.abs().max(1.0);
    let gap = (v_uep - v_sctp).abs();
    ensure(gap > bound && gap > cons.max_drift, || {
        format!("gap {gap:.4} within drift bound {bound:.4}")
    })?;
    Ok(format!(
        "V_cr UEP {v_uep:.4} vs SCTP {v_sctp:.4} p.u. (tc {:.2} s), gap {gap:.4} > drift bound {bound:.4} (observed {:.1e})",
        cct.cct, cons.max_drift
    ))
}

fn cct_both(opts: &AssessOptions) -> Check {
    let mut out = Vec::new();
    for s in [data::ts3_ninebus(), data::ts10_newengland()] {
        let t0 = Instant::now();
        let r = find_cct(&s, (0.05, 0.6), 0.001, 4, opts).map_err(e2s)?;
        let (lo, hi) = r.bracket;
        ensure(hi - lo <= 0.001 + 1e-12 && lo < hi, || {
            format!("{} bracket {lo}..{hi}", s.name)
        })?;
        let mut p = s.clone();
        p.sim.dt = r.dt;
        let at = |tc: f64| assess(&p.with_clearing_time(tc)?, opts).map(|a| a.system.status);
        let (a, b) = (at(lo).map_err(e2s)?, at(hi).map_err(e2s)?);
        ensure(a == Status::Stable && b == Status::Unstable, || {
            format!("{} re-verify {a}/{b}", s.name)
        })?;
        let took = t0.elapsed();
        ensure(took < Duration::from_secs(120), || {
            format!("{} took {took:?}", s.name)
        })?;
        out.push(format!("{} [{lo:.3}, {hi:.3}] s", s.name));
    }
    Ok(out.join(", "))
}

fn comparative(opts: &AssessOptions) -> Check {
    let f = SUITE
        .iter()
        .find(|f| f.label == "ts10-bus2")
        .ok_or("fault missing")?;
    let (_, runs) = f.runs(opts).map_err(e2s)?;
    let r = runs
        .iter()
        .find(|r| r.kind == RunKind::Unstable)
        .ok_or("run missing")?;
    let a = assess(&r.scenario, opts).map_err(e2s)?;
    let rep = comparative_report(&a.trajectory, &a.trace, None, opts).map_err(e2s)?;
    let times: Vec<f64> = a
        .verdicts
        .iter()
        .filter(|v| v.is_critical)
        .flat_map(|v| v.events.iter().map(|e| e.t))
        .collect();
    let with_events = a
        .verdicts
        .iter()
        .filter(|v| v.is_critical && !v.events.is_empty())
        .count();
    ensure(with_events >= 2, || {
        format!("only {with_events} critical machines with events")
    })?;
    let lo = times.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let t = rep.superimposed.smpp.t;
    ensure(t >= lo && t <= hi, || {
        format!("SMPP {t:.3} outside [{lo:.3}, {hi:.3}]")
    })?;
    let states = &rep.mismatch_findings.swing_states;
    ensure(states.len() == a.verdicts.len(), || {
        "swing table incomplete".into()
    })?;
    Ok(format!(
        "{} tc {:.2}: SMPP {t:.3} s in [{lo:.3}, {hi:.3}] over {with_events} critical machines, {} swing states",
        f.label,
        r.clearing_time,
        states.len()
    ))
}

fn integrator_order() -> Check {
    let end = |dt: f64| -> std::result::Result<Vec<f64>, String> {
        let s = data::ts3_ninebus()
            .with_overrides(&Overrides {
                dt: Some(dt),
                horizon: Some(1.0),
                clearing_time: Some(0.1),
                ..Default::default()
            })
            .map_err(e2s)?;
        let tr = integrate(&s).map_err(e2s)?;
        let last = tr.sample(tr.len() - 1);
        Ok(last
            .delta_abs
            .iter()
            .chain(&last.omega_coi)
            .copied()
            .collect())
    };
    let (a, b, c) = (end(0.02)?, end(0.01)?, end(0.005)?);
    let norm = |x: &[f64], y: &[f64]| {
        x.iter()
            .zip(y)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max)
    };
    let order = (norm(&a, &b) / norm(&b, &c)).log2();
    ensure(order >= 3.5, || format!("observed order {order:.2}"))?;
    Ok(format!("observed order {order:.2}"))
}

fn main() {
    let opts = AssessOptions::default();
    let mut gate = Gate { failed: Vec::new() };
    let secs = Duration::from_secs;

    gate.run(
        "residual-decomposition-sum",
        Duration::from_millis(1),
        residual_sum,
    );
    gate.run("energy-conservation", secs(5 * 12), || conservation(&opts));

    let t0 = Instant::now();
    let runs = suite_runs(&opts).expect("bundled suite runs");
    let suite_time = t0.elapsed();
    println!(
        "    suite: {} runs over {} faults in {:.3} s",
        runs.len(),
        SUITE.len(),
        suite_time.as_secs_f64()
    );
    gate.run(
        "smpp-and-positive-residual",
        secs(30).saturating_sub(suite_time),
        || smpp_and_residual(&runs),
    );
    gate.run("energy-divergence", secs(30), || divergence(&runs));
    gate.run("event-energy-coupling", secs(30), || coupling(&runs));
    gate.run("superimposition-identities", secs(60), || {
        superimposition(&runs, &opts)
    });
    gate.run("equilibria", secs(60), equilibria);
    gate.run("uep-vs-sctp-critical-energy", secs(60), || {
        section_seven(&opts)
    });
    gate.run("cct-bisection", secs(240), || cct_both(&opts));
    gate.run("comparative-report", secs(30), || comparative(&opts));
    gate.run("integrator-order", secs(30), integrator_order);

    let strict = std::env::var("SMTE_ACCEPT_STRICT").is_ok_and(|v| v == "1");
    let unexpected: Vec<_> = gate
        .failed
        .iter()
        .filter(|n| strict || !KNOWN_FAILURES.contains(n))
        .collect();
    let known: Vec<_> = gate
        .failed
        .iter()
        .filter(|n| KNOWN_FAILURES.contains(n))
        .collect();
    println!(
        "acceptance: {} criteria, {} failed ({} known: {:?})",
        11,
        gate.failed.len(),
        known.len(),
        known
    );
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
