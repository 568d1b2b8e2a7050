use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use serde::Serialize;

use volsplit_core::decomposition::{
    self, decompose_reference, decompose_session, prepare_session, write_artifacts, DecompositionConfig,
    ReferenceArtifacts,
};
use volsplit_core::kinematics::{identify_link_errors, LinkErrorVector};
use volsplit_core::manifest::{CampaignManifest, ManifestSession, MANIFEST_FILE};
use volsplit_core::metrics::{power_law_svg, CampaignReport};
use volsplit_core::signal_io::{self, DelayMethod, SensorCalibration};
use volsplit_core::virtual_machine::{self as vm, CampaignConfig};
use volsplit_core::{MachineGeometry, MetricsReport, UM_PER_MM};

use crate::{Cli, Command, DelayMethodArg};

/// A failed command and its exit code.
pub enum Failure {
    /// Exit code 1.
    Data(anyhow::Error),
    /// Exit code 2.
    Config(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Data(_) => 1,
            Failure::Config(_) => 2,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Data(e) | Failure::Config(e) => e,
        }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

trait Classify<T> {
    fn config(self) -> Outcome<T>;
    fn data(self) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config(self) -> Outcome<T> {
        self.map_err(|e| Failure::Config(e.into()))
    }

    fn data(self) -> Outcome<T> {
        self.map_err(|e| Failure::Data(e.into()))
    }
}

/// One line of console output, attributed to a session.
fn say(session: &str, msg: impl std::fmt::Display) {
    println!("[{session}] {msg}");
}

pub fn run(cli: &Cli) -> Outcome {
    if !(cli.delay_window_ms.is_finite() && cli.delay_window_ms >= 0.0) {
        return Err(Failure::Config(anyhow!("--delay-window-ms must be non-negative")));
    }
    if cli.degree == 0 {
        return Err(Failure::Config(anyhow!("--degree must be at least 1")));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .context("cannot start the worker pool")
        .config()?;
    pool.install(|| match &cli.command {
        Command::Simulate => simulate(cli),
        Command::Decompose { manifest } => decompose(cli, manifest.as_deref()),
        Command::Identify { manifest } => identify(cli, manifest.as_deref()),
        Command::Report { artifacts } => report(cli, artifacts),
        Command::SyncCheck { manifest } => sync_check(cli, manifest.as_deref()),
    })
}

fn decomposition_config(cli: &Cli, calibration: SensorCalibration) -> DecompositionConfig {
    DecompositionConfig {
        degree: cli.degree,
        robust_motion_fit: cli.robust,
        max_condition: cli.max_condition,
        delay_window: cli.delay_window_ms * 1e-3,
        delay_method: match cli.delay_method {
            DelayMethodArg::Ssd => DelayMethod::SquaredDifference,
            DelayMethodArg::Xcorr => DelayMethod::CrossCorrelation,
            DelayMethodArg::Tag => DelayMethod::DEFAULT_TAG,
        },
        calibration,
        ..DecompositionConfig::default()
    }
}

fn load_manifest(cli: &Cli, positional: Option<&Path>) -> Outcome<CampaignManifest> {
    let path = positional
        .or(cli.config.as_deref())
        .ok_or_else(|| Failure::Config(anyhow!("no manifest given (positional argument or --config)")))?;
    CampaignManifest::load(path)
        .with_context(|| format!("cannot read manifest {}", path.display()))
        .config()
}

fn manifest_setup(cli: &Cli, manifest: &CampaignManifest) -> Outcome<(MachineGeometry, DecompositionConfig)> {
    let geom = manifest.geometry().context("cannot read geometry").config()?;
    let cal = manifest.calibration().context("cannot read calibration").config()?;
    Ok((geom, decomposition_config(cli, cal)))
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn simulate(cli: &Cli) -> Outcome {
    let mut config = match &cli.config {
        Some(p) => CampaignConfig::load(p)
            .with_context(|| format!("cannot read campaign config {}", p.display()))
            .config()?,
        None => CampaignConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate().config()?;
    let geom = config.geometry().config()?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("campaign"));
    std::fs::create_dir_all(&out)
        .with_context(|| format!("cannot create {}", out.display()))
        .data()?;

    let entries: Vec<_> = (0..config.feeds_mm_min.len())
        .into_par_iter()
        .map(|index| {
            let entry = vm::simulate_and_write(&config, index, &out);
            match &entry.result {
                Ok(_) => say(&entry.id, format_args!("simulated at {} mm/min", entry.feed_rate)),
                Err(e) => say(&entry.id, format_args!("failed: {e}")),
            }
            entry
        })
        .collect();

    let sessions: Vec<ManifestSession> = entries
        .iter()
        .filter(|e| e.result.is_ok())
        .map(|e| {
            let dir = PathBuf::from("sessions").join(&e.id);
            ManifestSession {
                id: e.id.clone(),
                feed_rate_mm_min: e.feed_rate,
                controller: dir.join(vm::CONTROLLER_FILE),
                encoder: dir.join(vm::ENCODER_FILE),
                sensor: dir.join(vm::SENSOR_FILE),
                truth: Some(dir.join(vm::TRUTH_FILE)),
            }
        })
        .collect();

    geom.save(out.join("geometry.json")).data()?;
    SensorCalibration::default().save(out.join("calibration.json")).data()?;
    write_json(&out.join("campaign.json"), &config).data()?;

    println!("{:<8} {:>12} {:>10} {:>10}", "session", "feed mm/min", "samples", "duration s");
    for e in &entries {
        if let Ok(w) = &e.result {
            println!("{:<8} {:>12} {:>10} {:>10.3}", e.id, e.feed_rate, w.samples, w.duration_s);
        } else {
            println!("{:<8} {:>12} {:>10} {:>10}", e.id, e.feed_rate, "failed", "-");
        }
    }

    let failed: Vec<&str> = entries.iter().filter(|e| e.result.is_err()).map(|e| e.id.as_str()).collect();
    let reference = config.session_id(config.reference_index);
    if sessions.iter().any(|s| s.id == reference) {
        let mut manifest = CampaignManifest::new(reference, sessions, &out);
        manifest.geometry = Some("geometry.json".into());
        manifest.calibration = Some("calibration.json".into());
        manifest.save(out.join(MANIFEST_FILE)).data()?;
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Data(anyhow!("simulation failed for {}", failed.join(", "))))
    }
}

fn decompose(cli: &Cli, positional: Option<&Path>) -> Outcome {
    let manifest = load_manifest(cli, positional)?;
    let (geom, config) = manifest_setup(cli, &manifest)?;
    let out = cli.out.clone().unwrap_or_else(|| manifest.output_dir());

    let reference_id = manifest.reference.clone();
    let (reference, artifacts) = (|| -> anyhow::Result<_> {
        let signals = manifest.load_session(&reference_id)?;
        let prepared = prepare_session(&signals, &geom, &config).map_err(|e| e.in_session(&reference_id))?;
        let (d, art) = decompose_reference(&prepared, &geom, &config).map_err(|e| e.in_session(&reference_id))?;
        write_artifacts(out.join(&d.id), &d)?;
        Ok((d, art))
    })()
    .context("the reference session could not be processed")
    .data()?;
    report_session(&reference);

    let failures: Vec<String> = manifest
        .sessions
        .par_iter()
        .filter(|s| s.id != reference_id)
        .filter_map(|s| match decompose_one(&manifest, &s.id, &artifacts, &geom, &config, &out) {
            Ok(d) => {
                report_session(&d);
                None
            }
            Err(e) => {
                say(&s.id, format_args!("failed: {e:#}"));
                Some(s.id.clone())
            }
        })
        .collect();

    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Data(anyhow!("decomposition failed for {}", failures.join(", "))))
    }
}

fn decompose_one(
    manifest: &CampaignManifest,
    id: &str,
    artifacts: &ReferenceArtifacts,
    geom: &MachineGeometry,
    config: &DecompositionConfig,
    out: &Path,
) -> anyhow::Result<decomposition::Decomposition> {
    let signals = manifest.load_session(id)?;
    let prepared = prepare_session(&signals, geom, config).map_err(|e| e.in_session(id))?;
    let d = decompose_session(&prepared, artifacts, geom).map_err(|e| e.in_session(id))?;
    write_artifacts(out.join(&d.id), &d)?;
    Ok(d)
}

fn report_session(d: &decomposition::Decomposition) {
    let td = d.thermal_offset * UM_PER_MM;
    say(
        &d.id,
        format_args!(
            "delay {:.1} ms, {} samples, td = ({:.3}, {:.3}, {:.3}) um, reconstruction {:.1e} mm{}",
            d.delay * 1e3,
            d.len(),
            td.x,
            td.y,
            td.z,
            d.reconstruction_error(),
            if d.is_reference { ", reference" } else { "" }
        ),
    );
}

#[derive(Serialize)]
struct ParameterEntry {
    name: &'static str,
    value: f64,
    standard_error: f64,
    unit: &'static str,
}

#[derive(Serialize)]
struct IdentifyOutput {
    session: String,
    samples: usize,
    condition_number: f64,
    max_condition: f64,
    residual_rms_um: f64,
    parameters: Vec<ParameterEntry>,
}

fn identify(cli: &Cli, positional: Option<&Path>) -> Outcome {
    let manifest = load_manifest(cli, positional)?;
    let (geom, config) = manifest_setup(cli, &manifest)?;
    let id = manifest.reference.clone();
    let result = (|| -> volsplit_core::Result<_> {
        let signals = manifest.load_session(&id)?;
        let prepared = prepare_session(&signals, &geom, &config)?;
        let residual = prepared.chi.checked_sub(&prepared.chi_enc)?;
        let ident = identify_link_errors(&prepared.encoder_poses, &residual, &geom, config.max_condition)?;
        Ok((prepared.len(), ident))
    })()
    .map_err(|e| e.in_session(&id))
    .data()?;
    let (samples, ident) = result;

    let micro = ident.dq.to_micro();
    let se = LinkErrorVector(ident.standard_errors).to_micro();
    let output = IdentifyOutput {
        session: id.clone(),
        samples,
        condition_number: ident.condition_number,
        max_condition: config.max_condition,
        residual_rms_um: ident.residual_rms * UM_PER_MM,
        parameters: LinkErrorVector::NAMES
            .iter()
            .enumerate()
            .map(|(j, name)| ParameterEntry {
                name,
                value: micro[j],
                standard_error: se[j],
                unit: if j == 7 { "um" } else { "urad" },
            })
            .collect(),
    };
    for p in &output.parameters {
        say(&id, format_args!("{:<8} {:>12.4} {:<4} (se {:.4})", p.name, p.value, p.unit, p.standard_error));
    }
    say(
        &id,
        format_args!(
            "condition number {:.3e} (limit {:.1e}), residual RMS {:.4} um",
            output.condition_number, output.max_condition, output.residual_rms_um
        ),
    );
    if let Some(dir) = &cli.out {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create {}", dir.display()))
            .data()?;
        write_json(&dir.join("link_errors.json"), &output).data()?;
    }
    Ok(())
}

fn report(cli: &Cli, artifacts: &Path) -> Outcome {
    let entries = std::fs::read_dir(artifacts)
        .with_context(|| format!("cannot read artifact directory {}", artifacts.display()))
        .data()?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(decomposition::SUMMARY_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Failure::Data(anyhow!(
            "no decomposition artifacts under {}",
            artifacts.display()
        )));
    }

    let sessions = dirs
        .par_iter()
        .map(|dir| -> anyhow::Result<MetricsReport> {
            let stored = decomposition::read_artifacts(dir)?;
            let c = &stored.contributions;
            let s = &stored.summary;
            Ok(MetricsReport::compute(
                &s.session,
                s.feed_rate_mm_min,
                [&c[0], &c[1], &c[2], &c[3], &c[4]],
            )
            .map_err(|e| e.in_session(&s.session))?)
        })
        .collect::<anyhow::Result<Vec<_>>>()
        .data()?;
    let report = CampaignReport::build(sessions).data()?;
    for w in &report.warnings {
        log::warn!("{w}");
        eprintln!("warning: {w}");
    }

    let out = cli.out.clone().unwrap_or_else(|| artifacts.to_path_buf());
    std::fs::create_dir_all(&out)
        .with_context(|| format!("cannot create {}", out.display()))
        .data()?;
    write_json(&out.join("report.json"), &report).data()?;
    let files = [
        ("shares.csv", report.shares_csv()),
        ("dynamic_rms.csv", report.rms_csv()),
        ("power_law.csv", report.power_law_csv()),
        ("dynamic_rms.svg", power_law_svg(&report)),
    ];
    for (name, text) in files {
        let path = out.join(name);
        std::fs::write(&path, text)
            .with_context(|| format!("cannot write {}", path.display()))
            .data()?;
    }
    print_tables(&report);
    Ok(())
}

fn print_tables(report: &CampaignReport) {
    println!("mean-norm shares (%)");
    println!("{:>10} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}", "F", "dc", "dl", "dm", "dtd", "dd", "sum");
    for row in &report.shares {
        let s = row.shares_percent.to_array();
        println!(
            "{:>10.0} {:>7.1} {:>7.1} {:>7.1} {:>7.1} {:>7.1} {:>7.1}",
            row.feed_rate_mm_min, s[0], s[1], s[2], s[3], s[4], row.sum_percent
        );
    }
    let q = &report.quasi_static_max;
    println!("quasi-static maxima (um)");
    for (name, v) in [("dl", q.link_um), ("dm", q.motion_um), ("dtd", q.thermal_um)] {
        println!("{name:>10} {:>8.2} {:>8.2} {:>8.2}", v[0], v[1], v[2]);
    }
    println!("contouring and dynamic maxima (um)");
    for row in &report.contouring_dynamic_max {
        let (c, d) = (row.contouring_max_um, row.dynamic_max_um);
        println!(
            "{:>10.0} dc {:>7.2} {:>7.2} {:>7.2}  dd {:>7.2} {:>7.2} {:>7.2}",
            row.feed_rate_mm_min, c[0], c[1], c[2], d[0], d[1], d[2]
        );
    }
    println!("dynamic RMS (um)");
    for row in &report.dynamic_rms {
        let r = row.dynamic_rms_um;
        println!("{:>10.0} {:>8.3} {:>8.3} {:>8.3}", row.feed_rate_mm_min, r[0], r[1], r[2]);
    }
    if let Some(fit) = &report.power_law {
        println!("power law rms = kappa * F^N");
        for (name, term) in ["x", "y", "z"].iter().zip(fit.directions()) {
            if let Some(t) = term {
                println!(
                    "{name:>10} kappa {:.4e} N {:.4} R2 {:.4}",
                    t.kappa, t.exponent, t.r_squared
                );
            }
        }
    }
}

fn sync_check(cli: &Cli, positional: Option<&Path>) -> Outcome {
    let manifest = load_manifest(cli, positional)?;
    let (_, config) = manifest_setup(cli, &manifest)?;
    let failures: Vec<String> = manifest
        .sessions
        .par_iter()
        .filter_map(|s| {
            let delay = (|| -> volsplit_core::Result<f64> {
                let signals = manifest.load_session(&s.id)?;
                let c = signal_io::resample(&signals.controller, config.analysis_rate)?;
                let e = signal_io::resample(&signals.encoder, config.analysis_rate)?;
                signal_io::estimate_delay(&c, &e, config.delay_window, config.delay_method)
            })();
            match delay {
                Ok(d) => {
                    say(&s.id, format_args!("delay {:.1} ms", d * 1e3));
                    None
                }
                Err(e) => {
                    say(&s.id, format_args!("failed: {e}"));
                    Some(s.id.clone())
                }
            }
        })
        .collect();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Data(anyhow!("delay estimation failed for {}", failures.join(", "))))
    }
}
