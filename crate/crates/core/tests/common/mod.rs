#![allow(dead_code)]

use cox_intensity::experiment::stream_seed;
use cox_intensity::simulate::{simulate_cox, simulate_temperature, SeasonalOUParams, HOURS_PER_YEAR};
use cox_intensity::{EventRecord, SampledPath};

/// `1033.8 e^{−0.2x}` from the simulation study.
pub fn q_true(x: f64) -> f64 {
    1033.8 * (-0.2 * x).exp()
}

/// One simulated year on an hourly grid, time rescaled to `[0, 1]`.
pub fn year_path(seed: u64) -> SampledPath {
    years_path(1.0, seed)
}

pub fn years_path(years: f64, seed: u64) -> SampledPath {
    let hours = years * HOURS_PER_YEAR;
    simulate_temperature(&SeasonalOUParams::default(), hours, 1.0, stream_seed(seed, 0))
        .unwrap()
        .rescale_time(hours)
        .unwrap()
}

pub fn year_data(seed: u64) -> (SampledPath, EventRecord) {
    let path = year_path(seed);
    let events = simulate_cox(&path, q_true, 1, stream_seed(seed, 1)).unwrap();
    (path, events)
}
