#![allow(dead_code)]

use std::path::Path;

use volsplit_core::decomposition::{
    decompose_reference, decompose_session, prepare_session, Decomposition, DecompositionConfig,
    PreparedSession, ReferenceArtifacts,
};
use volsplit_core::metrics::rms_errors;
use volsplit_core::virtual_machine::{simulate_session, CampaignConfig, GroundTruth, SimulatedSession};
use volsplit_core::{DeviationMatrix, MachineGeometry};

pub struct CampaignRun {
    pub geom: MachineGeometry,
    pub sessions: Vec<SimulatedSession>,
    pub prepared: Vec<PreparedSession>,
    pub reference: ReferenceArtifacts,
    pub decompositions: Vec<Decomposition>,
}

impl CampaignRun {
    /// Ground truth over the analysed window of session `k`.
    pub fn truth(&self, k: usize) -> GroundTruth {
        let d = &self.decompositions[k];
        self.sessions[k].truth.window(d.start_time, d.len()).unwrap()
    }
}

pub fn simulate_all(config: &CampaignConfig) -> Vec<SimulatedSession> {
    (0..config.feeds_mm_min.len())
        .map(|k| simulate_session(config, k).unwrap())
        .collect()
}

pub fn decompose_all(
    sessions: Vec<SimulatedSession>,
    reference_index: usize,
    geom: &MachineGeometry,
    dc: &DecompositionConfig,
) -> CampaignRun {
    let prepared: Vec<PreparedSession> = sessions
        .iter()
        .map(|s| prepare_session(&s.signals(), geom, dc).unwrap())
        .collect();
    let (ref_decomp, reference) = decompose_reference(&prepared[reference_index], geom, dc).unwrap();
    let decompositions = prepared
        .iter()
        .enumerate()
        .map(|(k, p)| {
            if k == reference_index {
                ref_decomp.clone()
            } else {
                decompose_session(p, &reference, geom).unwrap()
            }
        })
        .collect();
    CampaignRun {
        geom: geom.clone(),
        sessions,
        prepared,
        reference,
        decompositions,
    }
}

pub fn simulate_and_decompose(config: &CampaignConfig) -> CampaignRun {
    let geom = config.geometry().unwrap();
    decompose_all(simulate_all(config), config.reference_index, &geom, &DecompositionConfig::default())
}

/// Per-direction RMS (µm).
pub fn rms_um(m: &DeviationMatrix) -> [f64; 3] {
    rms_errors(m).unwrap().into()
}

/// Per-direction RMS of `a − b` (µm).
pub fn rms_diff_um(a: &DeviationMatrix, b: &DeviationMatrix) -> [f64; 3] {
    (a.rms_diff(b) * 1e3).into()
}

/// Every file below `dir`, relative path and contents, sorted by path.
pub fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}
