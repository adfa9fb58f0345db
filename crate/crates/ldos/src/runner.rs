//! End-to-end experiment driver: builds the model pair, computes the
//! oracle kernels, samples the circuit, runs the analysis, and writes all
//! artifacts with a manifest describing the run.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;

use crate::circuit::{conditional_from_joint, CircuitConfig};
use crate::config::{ExperimentConfig, OutputFormat};
use crate::error::{LdosError, Result};
use crate::models::MapPair;
use crate::oracle::{
    kernel_circuit_faithful, kernel_ideal_binning, ldos_aggregate, ldos_from_kernel,
    LdosProfile,
};
use crate::stats::{
    accumulate, estimate_kernel, predicted_gamma, profile_from_counts, regime_check,
    run_test, PhysicalContext, Regime, TestReport,
    DEFAULT_LLR_THRESHOLD,
};

#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    /// skip sampling and analysis, emitting only exact quantities
    pub oracle_only: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivedQuantities {
    pub sigma: f64,
    pub bandwidth: usize,
    pub rho_e: f64,
    pub gamma_predicted: f64,
    pub regime: Regime,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub dimension: usize,
    pub m_bins: usize,
    pub shots: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub derived: Option<DerivedQuantities>,
    pub timings_ms: BTreeMap<String, f64>,
    pub artifacts: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure_stage: Option<String>,
}

pub struct RunSummary {
    pub manifest: RunManifest,
    pub report: Option<TestReport>,
    pub out_dir: PathBuf,
}

/// Hex SHA-256 of the canonical (serde-serialized) configuration.
pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let canonical = serde_json::to_vec(cfg)
        .map_err(|e| LdosError::Config(format!("cannot serialize config: {e}")))?;
    let digest = Sha256::digest(&canonical);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn write_joint_counts_csv(path: &Path, counts: &Array2<u64>) -> Result<()> {
    let mut out = String::from("m,l,count\n");
    for m in 0..counts.nrows() {
        for l in 0..counts.ncols() {
            out.push_str(&format!("{m},{l},{}\n", counts[[m, l]]));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Kernel rows in `m,l,p,stderr` form; undefined rows are omitted.
fn write_kernel_csv(
    path: &Path,
    p: &Array2<f64>,
    stderr: Option<&Array2<f64>>,
    defined: &[bool],
) -> Result<()> {
    let mut out = String::from("m,l,p,stderr\n");
    for m in 0..p.nrows() {
        if !defined[m] {
            continue;
        }
        for l in 0..p.ncols() {
            let se = stderr.map_or(0.0, |s| s[[m, l]]);
            out.push_str(&format!("{m},{l},{},{se}\n", p[[m, l]]));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_profile_csv(path: &Path, profile: &LdosProfile) -> Result<()> {
    let m_bins = profile.m_bins();
    let mut out = String::from("offset,phi,weight\n");
    for (k, &off) in profile.offsets.iter().enumerate() {
        let phi = TAU * off as f64 / m_bins as f64;
        out.push_str(&format!("{off},{phi},{}\n", profile.weights[k]));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read a profile CSV back as (offsets, weights), in file order.
pub fn read_profile_csv(path: &Path) -> Result<(Vec<i64>, Vec<f64>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| {
        LdosError::Data(format!("{}: empty file", path.display()))
    })?;
    if header.trim() != "offset,phi,weight" {
        return Err(LdosError::Data(format!(
            "{}: expected header `offset,phi,weight`, got `{header}`",
            path.display()
        )));
    }
    let mut offsets = Vec::new();
    let mut weights = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(LdosError::Data(format!(
                "{}:{}: expected 3 fields, got {}",
                path.display(),
                i + 2,
                fields.len()
            )));
        }
        let off: i64 = fields[0].trim().parse().map_err(|e| {
            LdosError::Data(format!("{}:{}: bad offset: {e}", path.display(), i + 2))
        })?;
        let w: f64 = fields[2].trim().parse().map_err(|e| {
            LdosError::Data(format!("{}:{}: bad weight: {e}", path.display(), i + 2))
        })?;
        offsets.push(off);
        weights.push(w);
    }
    if offsets.is_empty() {
        return Err(LdosError::Data(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    Ok((offsets, weights))
}

fn write_matrix_json(path: &Path, m: &crate::linalg::CMatrix) -> Result<()> {
    let rows: Vec<Vec<[f64; 2]>> = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[[i, j]].re, m[[i, j]].im]).collect())
        .collect();
    fs::write(path, serde_json::to_string(&rows).map_err(|e| {
        LdosError::Data(format!("matrix serialization: {e}"))
    })?)?;
    Ok(())
}

struct ArtifactWriter {
    dir: PathBuf,
    written: Vec<String>,
}

impl ArtifactWriter {
    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.dir.join(name)
    }

    fn cleanup(&self) {
        for name in &self.written {
            let _ = fs::remove_file(self.dir.join(name));
        }
    }
}

pub fn run_experiment(
    cfg: &ExperimentConfig,
    overrides: &RunOverrides,
) -> Result<RunSummary> {
    cfg.validate()?;
    let seed = overrides.seed.unwrap_or(cfg.circuit.seed);
    let out_dir = overrides
        .out_dir
        .clone()
        .unwrap_or_else(|| cfg.output.directory.clone());
    fs::create_dir_all(&out_dir)?;

    let m_bins = cfg.circuit.m_bins;
    let shots = if overrides.oracle_only { 0 } else { cfg.circuit.shots };
    let mut timings: BTreeMap<String, f64> = BTreeMap::new();
    let mut writer = ArtifactWriter { dir: out_dir.clone(), written: Vec::new() };
    let hash = config_hash(cfg)?;

    let mut manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: hash,
        seed,
        dimension: 0,
        m_bins,
        shots,
        derived: None,
        timings_ms: BTreeMap::new(),
        artifacts: Vec::new(),
        failure_stage: None,
    };

    let result = run_stages(cfg, seed, shots, &mut timings, &mut writer, &mut manifest);
    manifest.timings_ms = timings;
    match result {
        Ok(report) => {
            manifest.artifacts = writer.written.clone();
            manifest.artifacts.push("manifest.json".to_string());
            let manifest_json = serde_json::to_string_pretty(&manifest)
                .map_err(|e| LdosError::Data(format!("manifest serialization: {e}")))?;
            fs::write(out_dir.join("manifest.json"), manifest_json)?;
            Ok(RunSummary { manifest, report, out_dir })
        }
        Err(e) => {
            writer.cleanup();
            manifest.artifacts.clear();
            if manifest.failure_stage.is_none() {
                manifest.failure_stage = Some("unknown".to_string());
            }
            if let Ok(json) = serde_json::to_string_pretty(&manifest) {
                let _ = fs::write(out_dir.join("manifest.json"), json);
            }
            Err(e)
        }
    }
}

fn run_stages(
    cfg: &ExperimentConfig,
    seed: u64,
    shots: u64,
    timings: &mut BTreeMap<String, f64>,
    writer: &mut ArtifactWriter,
    manifest: &mut RunManifest,
) -> Result<Option<TestReport>> {
    let stage = |manifest: &mut RunManifest, name: &str| {
        manifest.failure_stage = Some(name.to_string());
    };
    let csv = cfg.output.formats.contains(&OutputFormat::Csv);
    let json = cfg.output.formats.contains(&OutputFormat::Json);

    // -- model construction and diagonalization
    stage(manifest, "build_model");
    let t0 = Instant::now();
    let u = cfg.model.build()?;
    let v = cfg.perturbation.build(u.dim())?;
    let pair = MapPair::build(
        u,
        v,
        cfg.delta,
        cfg.coupling_threshold,
        cfg.bandwidth_mass_fraction,
    )?;
    manifest.dimension = pair.u.dim();
    timings.insert("build_model".to_string(), ms(t0));

    let thresholds = cfg
        .analysis
        .as_ref()
        .and_then(|a| a.regime_thresholds)
        .unwrap_or_default();
    let rho_e = pair.level_density;
    let gamma = predicted_gamma(pair.sigma, rho_e);
    let regime = regime_check(pair.sigma, rho_e, pair.bandwidth, &thresholds);
    manifest.derived = Some(DerivedQuantities {
        sigma: pair.sigma,
        bandwidth: pair.bandwidth,
        rho_e,
        gamma_predicted: gamma,
        regime,
    });

    // -- exact oracle kernels and profiles
    stage(manifest, "oracle");
    let t0 = Instant::now();
    let init = cfg.circuit.init_mode.build();
    let ideal = kernel_ideal_binning(&pair, m_bins_of(cfg), &init)?;
    let faithful = kernel_circuit_faithful(&pair, m_bins_of(cfg), &init)?;
    let (faithful_cond, faithful_defined) = conditional_from_joint(&faithful);
    let aggregate = ldos_aggregate(&faithful)?;
    timings.insert("oracle".to_string(), ms(t0));

    if csv {
        write_kernel_csv(&writer.path("kernel_ideal.csv"), &ideal.cond, None, &ideal.defined)?;
        write_kernel_csv(
            &writer.path("kernel_faithful.csv"),
            &faithful_cond,
            None,
            &faithful_defined,
        )?;
        for m in 0..m_bins_of(cfg) {
            if !ideal.defined[m] {
                continue;
            }
            let prof = ldos_from_kernel(&ideal.cond, &ideal.defined, m)?;
            write_profile_csv(&writer.path(&format!("profile_band_{m}.csv")), &prof)?;
        }
        write_profile_csv(&writer.path("profile_aggregate.csv"), &aggregate)?;
    }
    if json {
        let payload = serde_json::json!({
            "offsets": aggregate.offsets,
            "weights": aggregate.weights,
        });
        fs::write(
            writer.path("profile_aggregate.json"),
            serde_json::to_string_pretty(&payload)
                .map_err(|e| LdosError::Data(format!("profile serialization: {e}")))?,
        )?;
    }
    if cfg.output.persist_matrices {
        write_matrix_json(&writer.path("unitary.json"), pair.u.matrix())?;
        write_matrix_json(&writer.path("unitary_perturbed.json"), pair.u_perturbed.matrix())?;
    }

    // -- circuit sampling
    let mut sampled_counts: Option<crate::stats::JointCounts> = None;
    if shots > 0 {
        stage(manifest, "sampling");
        let t0 = Instant::now();
        let circuit_cfg = CircuitConfig {
            m_bins: m_bins_of(cfg),
            init_mode: init.clone(),
            shots,
            seed,
        };
        let records = crate::circuit::run_shots(&pair, &circuit_cfg)?;
        let jc = accumulate(&records, m_bins_of(cfg))?;
        let est = estimate_kernel(&jc);
        let sampled_profile = profile_from_counts(&jc)?;
        timings.insert("sampling".to_string(), ms(t0));

        if csv {
            write_joint_counts_csv(&writer.path("joint_counts.csv"), &jc.counts)?;
            write_kernel_csv(
                &writer.path("kernel_estimate.csv"),
                &est.p,
                Some(&est.stderr),
                &est.defined,
            )?;
            write_profile_csv(&writer.path("profile_sampled.csv"), &sampled_profile)?;
        }
        sampled_counts = Some(jc);
    }

    // -- hypothesis testing on the sampled offset profile
    let mut report = None;
    if let (Some(analysis), Some(jc)) = (&cfg.analysis, &sampled_counts) {
        if analysis.hypotheses.len() >= 2 {
            stage(manifest, "analysis");
            let t0 = Instant::now();
            let m_bins = m_bins_of(cfg);
            let mut offset_counts = vec![0u64; m_bins];
            for m in 0..m_bins {
                for l in 0..m_bins {
                    let k = crate::spectral::offset_index(
                        crate::spectral::wrap_offset(l, m, m_bins),
                        m_bins,
                    );
                    offset_counts[k] += jc.counts[[m, l]];
                }
            }
            let context = PhysicalContext {
                sigma: pair.sigma,
                rho_e,
                bandwidth: pair.bandwidth,
                gamma_predicted: gamma,
                regime,
            };
            let r = run_test(
                &offset_counts,
                &analysis.hypotheses[0],
                &analysis.hypotheses[1],
                analysis.epsilon,
                analysis.llr_threshold.unwrap_or(DEFAULT_LLR_THRESHOLD),
                Some(context),
            )?;
            timings.insert("analysis".to_string(), ms(t0));
            let report_json = serde_json::to_string_pretty(&r)
                .map_err(|e| LdosError::Data(format!("report serialization: {e}")))?;
            fs::write(writer.path("report.json"), report_json)?;
            report = Some(r);
        }
    }

    manifest.failure_stage = None;
    Ok(report)
}

fn m_bins_of(cfg: &ExperimentConfig) -> usize {
    cfg.circuit.m_bins
}

fn ms(t0: Instant) -> f64 {
    t0.elapsed().as_secs_f64() * 1e3
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::load_config;
    use crate::spectral::wrapped_offsets;

    fn config_json(dir: &Path, shots: u64) -> String {
        format!(
            r#"{{
                "model": {{"kind": "haar_random", "dimension": 16, "seed": 11}},
                "perturbation": {{"kind": "gue", "seed": 12}},
                "delta": 0.5,
                "circuit": {{
                    "m_bins": 8,
                    "init_mode": "maximally_mixed",
                    "shots": {shots},
                    "seed": 3
                }},
                "analysis": {{
                    "hypotheses": [
                        {{"family": "breit_wigner", "width": 0.3}},
                        {{"family": "breit_wigner", "width": 0.6}}
                    ]
                }},
                "output": {{"directory": "{}"}}
            }}"#,
            dir.display()
        )
    }

    #[test]
    fn full_run_writes_expected_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("cfg.json");
        std::fs::write(&cfg_path, config_json(dir.path(), 500)).unwrap();
        let cfg = load_config(&cfg_path).unwrap();
        let summary = run_experiment(&cfg, &RunOverrides::default()).unwrap();
        for name in [
            "kernel_ideal.csv",
            "kernel_faithful.csv",
            "profile_aggregate.csv",
            "joint_counts.csv",
            "kernel_estimate.csv",
            "profile_sampled.csv",
            "report.json",
            "manifest.json",
        ] {
            assert!(dir.path().join(name).exists(), "{name} missing");
        }
        assert!(summary.report.is_some());
        assert!(summary.manifest.failure_stage.is_none());
        assert!(summary.manifest.timings_ms.contains_key("sampling"));
        assert_eq!(summary.manifest.dimension, 16);
    }

    #[test]
    fn zero_shots_omits_sampling_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("cfg.json");
        std::fs::write(&cfg_path, config_json(dir.path(), 0)).unwrap();
        let cfg = load_config(&cfg_path).unwrap();
        let summary = run_experiment(&cfg, &RunOverrides::default()).unwrap();
        assert!(!dir.path().join("joint_counts.csv").exists());
        assert!(!dir.path().join("kernel_estimate.csv").exists());
        assert!(!dir.path().join("profile_sampled.csv").exists());
        assert!(!dir.path().join("report.json").exists());
        assert!(dir.path().join("kernel_ideal.csv").exists());
        assert!(dir.path().join("profile_aggregate.csv").exists());
        assert!(summary.report.is_none());
    }

    #[test]
    fn profile_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let prof = LdosProfile {
            offsets: wrapped_offsets(4),
            weights: vec![0.1, 0.2, 0.3, 0.4],
            anchor: crate::oracle::ProfileAnchor::Aggregated,
        };
        let p = dir.path().join("p.csv");
        write_profile_csv(&p, &prof).unwrap();
        let (offsets, weights) = read_profile_csv(&p).unwrap();
        assert_eq!(offsets, prof.offsets);
        assert_eq!(weights, prof.weights);
    }

    #[test]
    fn seed_override_changes_samples() {
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let cfg_path = dir1.path().join("cfg.json");
        std::fs::write(&cfg_path, config_json(dir1.path(), 300)).unwrap();
        let cfg = load_config(&cfg_path).unwrap();
        run_experiment(&cfg, &RunOverrides::default()).unwrap();
        run_experiment(
            &cfg,
            &RunOverrides {
                seed: Some(999),
                out_dir: Some(dir2.path().to_path_buf()),
                oracle_only: false,
            },
        )
        .unwrap();
        let a = std::fs::read_to_string(dir1.path().join("joint_counts.csv")).unwrap();
        let b = std::fs::read_to_string(dir2.path().join("joint_counts.csv")).unwrap();
        assert_ne!(a, b);
        // oracle artifacts are seed-independent
        let ka = std::fs::read_to_string(dir1.path().join("kernel_ideal.csv")).unwrap();
        let kb = std::fs::read_to_string(dir2.path().join("kernel_ideal.csv")).unwrap();
        assert_eq!(ka, kb);
    }
}
