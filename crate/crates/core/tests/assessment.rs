mod common;

use approx::assert_relative_eq;
use num_complex::Complex64;
use smte_core::data::{RunKind, SUITE};
use smte_core::equilibria::{sctp_margin, EnergySource};
use smte_core::system::{CMatrix, FaultSpec, ReducedNetworkSet, SimSettings};
use smte_core::*;

fn opts() -> AssessOptions {
    AssessOptions::default()
}

/// Lossless two-machine system: a light machine exporting into a heavy one.
fn two_machine(clearing_time: f64) -> Scenario {
    let y = |b: f64| {
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 1)] = Complex64::new(0.0, b);
        m[(1, 0)] = Complex64::new(0.0, b);
        m[(0, 0)] = Complex64::new(0.0, -b);
        m[(1, 1)] = Complex64::new(0.0, -b);
        m
    };
    Scenario::new(
        "two-machine",
        vec![
            Machine::new(1, 0.03, 0.8, 1.0),
            Machine::new(2, 0.3, -0.8, 1.0),
        ],
        ReducedNetworkSet {
            prefault: NetworkStage::new(StageLabel::Prefault, y(2.0)).unwrap(),
            faulton: NetworkStage::new(StageLabel::Faulton, y(0.2)).unwrap(),
            postfault: NetworkStage::new(StageLabel::Postfault, y(1.5)).unwrap(),
        },
        FaultSpec {
            bus: 1,
            clearing_time,
            trip_branches: vec![],
        },
        SimSettings {
            dt: 0.005,
            horizon: 2.0,
            initial_delta: None,
        },
    )
    .unwrap()
}

fn verdict(vs: &[MachineVerdict], id: u32) -> &MachineVerdict {
    vs.iter().find(|v| v.machine == id).unwrap()
}

fn verdict_with(id: u32, status: Status, onset: Option<f64>) -> MachineVerdict {
    MachineVerdict {
        machine: id,
        status,
        first_event: None,
        events: vec![],
        divergence: DivergenceStatus::Bounded,
        onset,
        speed_zero_crossings: vec![],
        is_critical: status == Status::Unstable,
        peak_impe: 0.0,
    }
}

#[test]
fn residual_decomposes_to_its_sum() {
    let imke = [
        0.032, 0.080, 0.025, 0.051, 0.002, 0.007, 0.043, 0.818, 0.029, 0.064,
    ];
    let ids: Vec<u32> = (30..40).collect();
    let d = decompose_residual(&ids, &imke).unwrap();
    assert_relative_eq!(d.total, 1.151, max_relative = 1e-12);
    assert_eq!(d.max_contributor, Some(37));
    assert_eq!(d.machines.iter().filter(|m| m.is_max).count(), 1);
}

#[test]
fn equilibrium_run_is_quiet() {
    let s = common::toy3(0.0, 2.0);
    let sep = solve_sep(&s, StageLabel::Postfault).unwrap();
    let tr = integrate_from(&s, &sep.delta_coi, &[0.0; 3]).unwrap();
    let trace = machine_energy_trace(&tr).unwrap();
    let verdicts = individual_verdicts(&tr, &trace, &opts()).unwrap();
    let sys = system_verdict(&verdicts);
    let a = (verdicts, sys);
    assert!(a
        .0
        .iter()
        .all(|v| v.status == Status::Stable && !v.is_critical && v.events.is_empty()));
    assert_eq!(a.1.status, Status::Stable);
    assert_eq!(a.1.leading_machine, None);
    let r = comparative_report(&tr, &trace, None, &opts()).unwrap();
    assert!(r.mismatch_findings.is_empty());
}

#[test]
fn lone_accelerating_machine_is_the_only_critical_unstable_one() {
    let stable = assess(&two_machine(0.05), &opts()).unwrap();
    assert_eq!(stable.system.status, Status::Stable);

    let a = assess(&two_machine(0.3), &opts()).unwrap();
    let v1 = verdict(&a.verdicts, 1);
    let v2 = verdict(&a.verdicts, 2);
    assert_eq!(v1.status, Status::Unstable);
    assert_eq!(v1.first_event.as_ref().unwrap().kind, EventKind::Idlp);
    assert!(v1.is_critical);
    assert_ne!(v2.status, Status::Unstable);
    assert!(!v2.is_critical);
    assert_eq!(a.system.status, Status::Unstable);
    assert_eq!(a.system.leading_machine, Some(1));
}

#[test]
fn ten_machine_unstable_case_has_several_unstable_machines() {
    let f = SUITE.iter().find(|f| f.label == "ts10-bus19").unwrap();
    let a = assess(&f.scenario(0.23).unwrap(), &opts()).unwrap();
    let unstable: Vec<_> = a
        .verdicts
        .iter()
        .filter(|v| v.status == Status::Unstable)
        .collect();
    assert!(unstable.len() >= 2, "{} unstable", unstable.len());
    let quiet: Vec<f64> = a
        .verdicts
        .iter()
        .filter(|v| !v.is_critical)
        .map(|v| v.peak_impe)
        .collect();
    let loud = a
        .verdicts
        .iter()
        .filter(|v| v.is_critical)
        .map(|v| v.peak_impe)
        .fold(0.0, f64::max);
    assert!(!quiet.is_empty());
    assert!(quiet.iter().all(|&p| p < loud / 3.0));
}

#[test]
fn verdict_invariants_hold_on_every_machine() {
    for f in SUITE {
        let (_, runs) = f.runs(&opts()).unwrap();
        for r in runs {
            let a = assess(&r.scenario, &opts()).unwrap();
            for v in &a.verdicts {
                match v.status {
                    Status::Unstable => assert!(
                        v.first_event.as_ref().map(|e| e.kind) == Some(EventKind::Idlp)
                            || v.divergence == DivergenceStatus::UnboundedNegative
                    ),
                    Status::Stable if !v.events.is_empty() => {
                        assert_eq!(v.first_event.as_ref().unwrap().kind, EventKind::Idsp);
                        assert_eq!(
                            v.swing_index_at(v.first_event.as_ref().unwrap().t + 1e-9),
                            1
                        );
                    }
                    _ => {}
                }
            }
        }
    }
}

#[test]
fn leading_machine_is_the_earliest_onset() {
    let vs = vec![
        verdict_with(1, Status::Stable, None),
        verdict_with(8, Status::Unstable, Some(0.776)),
        verdict_with(9, Status::Unstable, Some(0.614)),
    ];
    let s = system_verdict(&vs);
    assert_eq!(s.status, Status::Unstable);
    assert_eq!(s.leading_machine, Some(9));

    let all_stable = vec![
        verdict_with(1, Status::Stable, None),
        verdict_with(2, Status::Stable, None),
    ];
    assert_eq!(system_verdict(&all_stable).leading_machine, None);
    let one_censored = vec![
        verdict_with(1, Status::Stable, None),
        verdict_with(2, Status::Censored, None),
    ];
    assert_eq!(system_verdict(&one_censored).status, Status::Censored);
}

#[test]
fn superimposed_verdict_follows_margin_then_divergence() {
    let a = assess(&common::ts3_at(0.35), &opts()).unwrap();
    let part = superimposed_verdict(&a.trace, None, 10.0).unwrap();
    assert_eq!(part.smpe_divergence, DivergenceStatus::UnboundedNegative);
    assert_eq!(part.verdict, SmVerdict::Unstable);
    assert!(part.residual_smke > 0.0);

    let zero = margin(2.0, 2.0, 0.5, EnergySource::Sctp).unwrap();
    let part = superimposed_verdict(&a.trace, Some(zero), 10.0).unwrap();
    assert_eq!(part.verdict, SmVerdict::Critical);
    assert_eq!(
        part.margin.as_ref().unwrap().eta_sys.to_bits(),
        part.margin.as_ref().unwrap().eta_sm.to_bits()
    );
}

#[test]
fn report_residual_is_the_sum_of_machine_shares() {
    for f in SUITE {
        let (_, runs) = f.runs(&opts()).unwrap();
        for r in runs {
            let a = assess(&r.scenario, &opts()).unwrap();
            let rep = comparative_report(&a.trajectory, &a.trace, None, &opts()).unwrap();
            let d = rep.mismatch_findings.residual.as_ref().unwrap();
            let sum: f64 = d.machines.iter().map(|m| m.imke).sum();
            assert_relative_eq!(sum, rep.superimposed.residual_smke, max_relative = 1e-12);
            assert_relative_eq!(
                d.total,
                rep.superimposed.residual_smke,
                max_relative = 1e-12
            );
            assert!(
                rep.superimposed.residual_smke > 0.0,
                "{} {:?}",
                f.label,
                r.kind
            );
        }
    }
}

#[test]
fn smpp_lies_among_critical_events_on_clearly_unstable_runs() {
    for f in SUITE {
        let (_, runs) = f.runs(&opts()).unwrap();
        let r = runs.iter().find(|r| r.kind == RunKind::Unstable).unwrap();
        let a = assess(&r.scenario, &opts()).unwrap();
        let rep = comparative_report(&a.trajectory, &a.trace, None, &opts()).unwrap();
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
        assert!(!rep.superimposed.smpp.censored);
        if with_events >= 2 {
            let lo = times.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let t = rep.superimposed.smpp.t;
            assert!(
                t >= lo && t <= hi,
                "{}: smpp {t} outside [{lo}, {hi}]",
                f.label
            );
        }
        assert_eq!(rep.mismatch_findings.swing_states.len(), a.verdicts.len());
    }
}

#[test]
fn cct_brackets_nest_and_ends_reverify() {
    let s = common::ts3_at(0.1);
    let coarse = find_cct(&s, (0.05, 0.6), 0.01, 1, &opts()).unwrap();
    let fine = find_cct(&s, coarse.bracket, 0.001, 3, &opts()).unwrap();
    assert!(coarse.bracket.1 - coarse.bracket.0 <= 0.01 + 1e-12);
    assert!(fine.bracket.1 - fine.bracket.0 <= 0.001 + 1e-12);
    assert!(
        fine.bracket.0 >= coarse.bracket.0 - 1e-12 && fine.bracket.1 <= coarse.bracket.1 + 1e-12
    );
    assert_eq!(fine.cct, fine.bracket.0);

    let mut probe = s.clone();
    probe.sim.dt = fine.dt;
    let lo = assess(&probe.with_clearing_time(fine.bracket.0).unwrap(), &opts()).unwrap();
    let hi = assess(&probe.with_clearing_time(fine.bracket.1).unwrap(), &opts()).unwrap();
    assert_eq!(lo.system.status, Status::Stable);
    assert_eq!(hi.system.status, Status::Unstable);
}

#[test]
fn cct_does_not_depend_on_probes_per_round() {
    let f = SUITE.iter().find(|f| f.label == "ts10-bus2").unwrap();
    let s = f.scenario(0.1).unwrap();
    let one = find_cct(&s, (0.05, 0.6), 0.01, 1, &opts()).unwrap();
    let four = find_cct(&s, (0.05, 0.6), 0.01, 4, &opts()).unwrap();
    assert_eq!(one.bracket, four.bracket);
}

#[test]
fn always_stable_bracket_is_rejected() {
    let s = common::ts3_at(0.1);
    let err = find_cct(&s, (0.0, 0.1), 0.01, 2, &opts()).unwrap_err();
    assert!(matches!(err, Error::Bracket { .. }), "{err}");
}

#[test]
fn margin_sign_agrees_with_verdict_near_the_cct() {
    for f in SUITE {
        let (cct, _) = f.runs(&opts()).unwrap();
        let crit = assess(&f.scenario(cct.cct).unwrap(), &opts()).unwrap();
        let sep = solve_sep(&crit.trajectory.scenario, StageLabel::Postfault).unwrap();
        for steps in [-2i32, -1, 1, 2] {
            let tc = ((cct.cct + steps as f64 * 0.01) * 100.0).round() / 100.0;
            let run = assess(&f.scenario(tc).unwrap(), &opts()).unwrap();
            let m = sctp_margin(
                (&crit.trajectory, &crit.trace),
                (&run.trajectory, &run.trace),
                &sep,
            )
            .unwrap();
            assert_eq!(
                m.eta_sm > 0.0,
                steps < 0,
                "{} tc {tc}: eta {}",
                f.label,
                m.eta_sm
            );
            assert_eq!(run.system.status == Status::Stable, steps < 0);
        }
    }
}
