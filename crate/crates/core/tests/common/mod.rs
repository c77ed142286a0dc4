#![allow(dead_code)]

use num_complex::Complex64;
use smte_core::system::{CMatrix, FaultSpec, NetworkStage, ReducedNetworkSet, SimSettings};
use smte_core::{Machine, Scenario, StageLabel};

/// Three-machine system with a lossy meshed network, a heavier fault-on
/// stage and a post-fault stage with one weakened tie.
pub fn toy3(clearing_time: f64, horizon: f64) -> Scenario {
    let machines = vec![
        Machine::new(1, 0.125, 0.72, 1.057),
        Machine::new(2, 0.034, 1.63, 1.050),
        Machine::new(3, 0.016, 0.85, 1.017),
    ];
    let y = |g: f64, b12: f64, b13: f64, b23: f64, self_b: f64| {
        let mut m = CMatrix::zeros(3, 3);
        let off = [(0, 1, b12), (0, 2, b13), (1, 2, b23)];
        for &(i, j, b) in &off {
            m[(i, j)] = Complex64::new(0.1 * g, b);
            m[(j, i)] = m[(i, j)];
        }
        for i in 0..3 {
            let s: f64 = off
                .iter()
                .filter(|o| o.0 == i || o.1 == i)
                .map(|o| o.2)
                .sum();
            m[(i, i)] = Complex64::new(g, -s - self_b);
        }
        m
    };
    Scenario::new(
        "toy3",
        machines,
        ReducedNetworkSet {
            prefault: NetworkStage::new(StageLabel::Prefault, y(0.8, 1.3, 1.2, 1.4, 0.9)).unwrap(),
            faulton: NetworkStage::new(StageLabel::Faulton, y(0.4, 0.3, 0.35, 0.25, 3.0)).unwrap(),
            postfault: NetworkStage::new(StageLabel::Postfault, y(0.8, 1.0, 1.2, 1.1, 0.9))
                .unwrap(),
        },
        FaultSpec {
            bus: 7,
            clearing_time,
            trip_branches: vec![],
        },
        SimSettings {
            dt: 0.01,
            horizon,
            initial_delta: None,
        },
    )
    .unwrap()
}

pub fn ts3_at(clearing_time: f64) -> Scenario {
    smte_core::data::ts3_ninebus()
        .with_clearing_time(clearing_time)
        .unwrap()
}
