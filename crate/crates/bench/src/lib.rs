//! Fixtures shared by the benchmarks.

use vlp_core::montecarlo::trial_seed;
use vlp_core::{default_scenario, Mode, ReceivedSignalSet, Scenario};

/// The default room at `a` watts, `fc` hertz, in the given mode.
pub fn fixture(mode: Mode, fc: f64, a: f64) -> Scenario {
    default_scenario()
        .with_amplitude(a)
        .with_center_frequency(fc)
        .with_mode(mode)
}

/// One noisy realization, trial 0 of `seed`.
pub fn received(s: &Scenario, seed: u64) -> ReceivedSignalSet {
    ReceivedSignalSet::synthesize(s, |i| trial_seed(seed, 0, i as u64)).expect("fixture scenario synthesizes")
}
