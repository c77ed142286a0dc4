//! Shared fixtures for the benchmarks.

use smte_core::{data, Scenario};

/// The ten-machine system with its bundled fault, as the benchmarks use it.
pub fn ts10() -> Scenario {
    data::ts10_newengland()
}

/// The three-machine system with its bundled fault.
pub fn ts3() -> Scenario {
    data::ts3_ninebus()
}
