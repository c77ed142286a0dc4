//! Bundled test systems.

use crate::assessment::{find_cct, AssessOptions, CctResult};
use crate::error::Result;
use crate::system::{load_scenario, Scenario};

pub const TS3_NINEBUS: &str = include_str!("../data/ts3_ninebus.json");
pub const TS10_NEWENGLAND: &str = include_str!("../data/ts10_newengland.json");

/// Names accepted by [`bundled`].
pub const BUNDLED: [&str; 2] = ["ts3", "ts10"];

/// Three-machine nine-bus system, fault at bus 7 with line 5-7 tripped.
pub fn ts3_ninebus() -> Scenario {
    load_scenario(TS3_NINEBUS).expect("bundled scenario is valid")
}

/// Ten-machine 39-bus system, fault at bus 2.
pub fn ts10_newengland() -> Scenario {
    load_scenario(TS10_NEWENGLAND).expect("bundled scenario is valid")
}

/// Looks up a bundled scenario by short name.
pub fn bundled(name: &str) -> Option<Result<Scenario>> {
    match name {
        "ts3" | "ts3_ninebus" => Some(load_scenario(TS3_NINEBUS)),
        "ts10" | "ts10_newengland" => Some(load_scenario(TS10_NEWENGLAND)),
        _ => None,
    }
}

/// One fault of the bundled benchmark suite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteFault {
    pub label: &'static str,
    /// Bundled system short name.
    pub system: &'static str,
    pub bus: u32,
    pub trip: &'static [(u32, u32)],
    pub horizon: f64,
}

impl SuiteFault {
    pub fn scenario(&self, clearing_time: f64) -> Result<Scenario> {
        let base = bundled(self.system).expect("suite names a bundled system")?;
        let mut s = base.with_fault(self.bus, self.trip, clearing_time)?;
        s.sim.horizon = self.horizon;
        Ok(s)
    }
}

pub const SUITE: [SuiteFault; 6] = [
    SuiteFault {
        label: "ts3-bus7",
        system: "ts3",
        bus: 7,
        trip: &[(7, 8)],
        horizon: 2.0,
    },
    SuiteFault {
        label: "ts3-bus3",
        system: "ts3",
        bus: 3,
        trip: &[],
        horizon: 2.0,
    },
    SuiteFault {
        label: "ts3-bus4",
        system: "ts3",
        bus: 4,
        trip: &[(4, 5)],
        horizon: 2.5,
    },
    SuiteFault {
        label: "ts10-bus2",
        system: "ts10",
        bus: 2,
        trip: &[],
        horizon: 2.0,
    },
    SuiteFault {
        label: "ts10-bus19",
        system: "ts10",
        bus: 19,
        trip: &[],
        horizon: 2.0,
    },
    SuiteFault {
        label: "ts10-bus22",
        system: "ts10",
        bus: 22,
        trip: &[],
        horizon: 2.0,
    },
];

/// Position of a suite run relative to the fault's critical clearing time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Stable,
    CriticalStable,
    CriticalUnstable,
    Unstable,
}

impl RunKind {
    pub const ALL: [RunKind; 4] = [
        RunKind::Stable,
        RunKind::CriticalStable,
        RunKind::CriticalUnstable,
        RunKind::Unstable,
    ];
}

/// Clearing-time offset of the plain stable and unstable runs from the CCT.
pub const SUITE_OFFSET: f64 = 0.05;
/// CCT grid used to place the critical runs; equal to the default step.
pub const SUITE_RESOLUTION: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct SuiteRun {
    pub fault: SuiteFault,
    pub kind: RunKind,
    pub clearing_time: f64,
    pub scenario: Scenario,
}

impl SuiteFault {
    /// The four runs of this fault: CCT − offset, CCT, CCT + resolution and
    /// CCT + offset, with the CCT found on the step grid.
    pub fn runs(&self, opts: &AssessOptions) -> Result<(CctResult, Vec<SuiteRun>)> {
        let cct = find_cct(&self.scenario(0.0)?, (0.05, 0.6), SUITE_RESOLUTION, 4, opts)?;
        let runs = RunKind::ALL
            .iter()
            .map(|&kind| {
                let tc = match kind {
                    RunKind::Stable => cct.bracket.0 - SUITE_OFFSET,
                    RunKind::CriticalStable => cct.bracket.0,
                    RunKind::CriticalUnstable => cct.bracket.1,
                    RunKind::Unstable => cct.bracket.1 - SUITE_RESOLUTION + SUITE_OFFSET,
                };
                let tc = (tc / SUITE_RESOLUTION).round() * SUITE_RESOLUTION;
                Ok(SuiteRun {
                    fault: *self,
                    kind,
                    clearing_time: tc,
                    scenario: self.scenario(tc)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok((cct, runs))
    }
}
