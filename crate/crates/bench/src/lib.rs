//! Fixtures shared by the pipeline benchmarks.

use volsplit_core::decomposition::SessionSignals;
use volsplit_core::virtual_machine::{simulate_session, CampaignConfig};

/// Two sessions of the standard machine over the built-in path, at the two
/// highest standard feeds so the benchmark stays short.
pub fn fixture_sessions() -> Vec<SessionSignals> {
    let config = CampaignConfig {
        feeds_mm_min: vec![10498.0, 18896.0],
        thermal_drift_um: Some(vec![[0.0; 3], [0.3, -0.2, 0.25]]),
        ..CampaignConfig::default()
    };
    (0..2)
        .map(|k| simulate_session(&config, k).expect("standard campaign simulates").signals())
        .collect()
}
