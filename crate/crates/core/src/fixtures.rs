//! Built-in experiment data: the five-player ring, the energy-game
//! parameters, the three communication schedules and the bundled configs.

use crate::game::GameModel;
use crate::graph::{DirectedGraph, Edge};
use crate::schedule::Schedule;

pub const ENERGY_XQ: [f64; 5] = [10.0, 15.0, 20.0, 25.0, 30.0];
pub const ENERGY_R1: f64 = 0.1;
pub const ENERGY_R2: f64 = 5.0;
pub const ENERGY_X0: [f64; 5] = [21.0, 5.0, 1.0, 13.0, 16.0];

/// Published equilibrium of the energy game, four decimals.
pub const ENERGY_NE_PUBLISHED: [f64; 5] = [3.9379, 8.6996, 13.4609, 18.2236, 22.9854];

/// One-based `(from, to)` pairs of the ring: 1→5, 5→4, 4→3, 3→2, 2→1.
pub const RING_EDGES: [(usize, usize); 5] = [(1, 5), (5, 4), (4, 3), (3, 2), (2, 1)];

pub const PIC_PERIOD: f64 = 10.0;
pub const PIC_RATIO: f64 = 0.5;

pub const AIC_WINDOWS: [(f64, f64); 10] = [
    (0.0, 6.0),
    (10.0, 14.0),
    (20.0, 24.5),
    (29.0, 34.5),
    (41.0, 46.0),
    (50.0, 55.5),
    (60.0, 64.5),
    (72.0, 76.0),
    (80.0, 85.5),
    (90.0, 95.5),
];

pub const ACR_WINDOWS: [(f64, f64); 9] = [
    (0.0, 7.0),
    (10.0, 12.0),
    (16.0, 22.0),
    (29.0, 33.5),
    (38.0, 38.5),
    (48.0, 57.9),
    (63.0, 69.0),
    (76.0, 82.0),
    (87.0, 95.0),
];

/// Unit-weight five-player ring.
pub fn ring_graph() -> DirectedGraph {
    let edges: Vec<Edge> = RING_EDGES
        .iter()
        .map(|&(f, t)| Edge::new(f - 1, t - 1, 1.0))
        .collect();
    DirectedGraph::from_edges(5, &edges).expect("static ring is valid")
}

pub fn energy_game() -> GameModel {
    GameModel::energy(&ENERGY_XQ, ENERGY_R1, ENERGY_R2).expect("static parameters are valid")
}

pub fn pic_schedule(horizon: f64) -> Schedule {
    Schedule::periodic(PIC_PERIOD, PIC_RATIO, horizon).expect("static schedule is valid")
}

pub fn aic_schedule() -> Schedule {
    Schedule::from_intervals(&AIC_WINDOWS, 95.5).expect("static schedule is valid")
}

pub fn acr_schedule() -> Schedule {
    Schedule::from_intervals(&ACR_WINDOWS, 95.0).expect("static schedule is valid")
}

/// Bundled experiment configs as `(file name, JSON text)`.
pub const CONFIGS: [(&str, &str); 8] = [
    ("energy.json", include_str!("../fixtures/energy.json")),
    ("connectivity.json", include_str!("../fixtures/connectivity.json")),
    ("energy_pic.json", include_str!("../fixtures/energy_pic.json")),
    ("energy_aic.json", include_str!("../fixtures/energy_aic.json")),
    ("energy_acr.json", include_str!("../fixtures/energy_acr.json")),
    ("connectivity_pic.json", include_str!("../fixtures/connectivity_pic.json")),
    ("connectivity_aic.json", include_str!("../fixtures/connectivity_aic.json")),
    ("connectivity_acr.json", include_str!("../fixtures/connectivity_acr.json")),
];

/// Names of the six simulation fixtures.
pub const RUN_FIXTURES: [&str; 6] = [
    "energy_pic.json",
    "energy_aic.json",
    "energy_acr.json",
    "connectivity_pic.json",
    "connectivity_aic.json",
    "connectivity_acr.json",
];

pub fn config_text(name: &str) -> Option<&'static str> {
    CONFIGS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}
