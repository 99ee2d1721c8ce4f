//! Chunked, checkpointing execution of the sampled experiments.
//!
//! Samples are split into contiguous index chunks; each chunk is mapped
//! on the worker pool and its records appended to `checkpoint.jsonl`
//! before the manifest advances. Seeds are index-derived, so a resumed
//! run computes exactly the records an uninterrupted run would have,
//! and summaries are byte-identical for any worker count.

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};

use spectra_core::disorder::{sample_weights_block, DisorderSpec, SeedPolicy};
use spectra_core::experiments as exp;
use spectra_core::stats;

use crate::config::ExperimentConfig;
use crate::output;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
const DEFAULT_CHUNK: u64 = 2048;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub experiment: String,
    pub config_path: String,
    pub overrides: Vec<String>,
    pub seed_override: Option<u64>,
    pub config_hash: String,
    pub code_version: String,
    pub n_samples: u64,
    pub chunk_size: u64,
    pub completed_chunks: u64,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn store(&self, dir: &Path) -> Result<()> {
        let tmp = dir.join("manifest.json.tmp");
        std::fs::write(&tmp, serde_json::to_string_pretty(self)?)?;
        std::fs::rename(&tmp, dir.join("manifest.json"))?;
        Ok(())
    }
}

/// Hash of the run-relevant config: worker count and output paths do
/// not change what is computed.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let mut canon = config.clone();
    canon.workers = None;
    canon.out_dir = None;
    let mut hasher = Sha256::new();
    hasher.update(canon.canonical_json().as_bytes());
    hex_string(&hasher.finalize())
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// A sampled experiment with its prepared (calibrated) parameters.
pub enum Prepared {
    Wegner(exp::WegnerParams),
    Minami(exp::MinamiParams),
    Decorrelate(exp::DecorrelationParams),
    LevelStats(exp::LevelStatsParams, f64),
    Independence(exp::IndependenceParams, Vec<f64>),
    HeavyTail(exp::HeavyTailParams),
    Separation(exp::SeparationParams),
}

fn req<T: Copy>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| anyhow!("{name}: required"))
}

impl Prepared {
    /// Build experiment parameters from the config and run calibration
    /// and localization gates.
    pub fn from_config(config: &ExperimentConfig, seeds: &SeedPolicy) -> Result<Prepared> {
        let spec = &config.disorder;
        let n_samples = req(config.n_samples, "n_samples")?;
        match config.experiment.as_str() {
            "wegner" => {
                let params = exp::WegnerParams {
                    energy: req(config.energy, "energy")?,
                    epsilons: config.epsilons.clone().unwrap_or_default(),
                    n_sites: req(config.n_sites, "n_sites")?,
                    n_samples,
                };
                stats::check_reference_energy(
                    spec.beta0(),
                    params.energy,
                    config.allow_low_energy.unwrap_or(false),
                )?;
                // surface bad epsilons before any compute
                exp::wegner_summarize(spec, &params, &[vec![f64::INFINITY]])?;
                Ok(Prepared::Wegner(params))
            }
            "minami" => {
                let params = exp::MinamiParams {
                    interval: req(config.interval, "interval")?,
                    n_sites: req(config.n_sites, "n_sites")?,
                    n_samples,
                };
                exp::minami_summarize(spec, &params, &[vec![0.0]])?;
                Ok(Prepared::Minami(params))
            }
            "decorrelate" => {
                let params = exp::DecorrelationParams {
                    energy: req(config.energy, "energy")?,
                    energy_prime: req(config.energy_prime, "energy_prime")?,
                    l_list: config.l_list.clone().unwrap_or_default(),
                    alpha: req(config.alpha, "alpha")?,
                    beta: req(config.beta, "beta")?,
                    n_samples,
                    localization_threshold: config.localization_threshold,
                    skip_localization_gate: config.skip_localization_gate.unwrap_or(false),
                };
                if params.energy == params.energy_prime {
                    bail!("energy_prime: must differ from energy");
                }
                let gate_sites = params
                    .l_list
                    .iter()
                    .map(|&l| exp::small_box_sites(l, params.alpha))
                    .max()
                    .unwrap_or(65);
                exp::ensure_localized(
                    spec,
                    &[params.energy, params.energy_prime],
                    gate_sites,
                    seeds,
                    params.localization_threshold.unwrap_or(0.02),
                    12,
                    params.skip_localization_gate,
                )?;
                Ok(Prepared::Decorrelate(params))
            }
            "levelstats" => {
                let params = exp::LevelStatsParams {
                    energy: req(config.energy, "energy")?,
                    n_sites: req(config.n_sites, "n_sites")?,
                    n_samples,
                    windows: config.windows.clone().unwrap_or_default(),
                    calibration_samples: config.calibration_samples.unwrap_or(200),
                    bandwidth: config.bandwidth,
                    nu_override: config.nu_override,
                    localization_threshold: config.localization_threshold,
                    skip_localization_gate: config.skip_localization_gate.unwrap_or(false),
                    allow_low_energy: config.allow_low_energy.unwrap_or(false),
                };
                let nu = exp::levelstats_prepare(spec, &params, seeds)?;
                Ok(Prepared::LevelStats(params, nu))
            }
            "independence" => {
                let energies = config.energies.clone().unwrap_or_default();
                let windows = config
                    .windows_per_energy
                    .clone()
                    .unwrap_or_else(|| vec![vec![(-1.0, 1.0)]; energies.len()]);
                let k_targets = config
                    .k_targets
                    .clone()
                    .unwrap_or_else(|| windows.iter().map(|w| vec![0; w.len()]).collect());
                let params = exp::IndependenceParams {
                    energies,
                    windows,
                    k_targets,
                    n_sites: req(config.n_sites, "n_sites")?,
                    n_samples,
                    calibration_samples: config.calibration_samples.unwrap_or(200),
                    bandwidth: config.bandwidth,
                    nu_overrides: config.nu_overrides.clone(),
                    localization_threshold: config.localization_threshold,
                    skip_localization_gate: config.skip_localization_gate.unwrap_or(false),
                };
                let nus = exp::independence_prepare(spec, &params, seeds)?;
                Ok(Prepared::Independence(params, nus))
            }
            "heavytail" => {
                let l_big = config.l_list.as_ref().and_then(|v| v.first().copied());
                let params = exp::HeavyTailParams {
                    l_big: req(l_big, "l_list[0]")?,
                    delta: req(config.delta, "delta")?,
                    beta: req(config.beta, "beta")?,
                    epsilon: req(config.epsilon, "epsilon")?,
                    n_samples,
                    n_verify: config.n_verify.unwrap_or(128),
                    e_ref: config.e_ref.unwrap_or(1.0),
                };
                if !matches!(spec, DisorderSpec::HeavyNearZero { .. }) {
                    bail!("disorder: heavytail requires kind heavy_near_zero");
                }
                Ok(Prepared::HeavyTail(params))
            }
            "separation" => {
                let params = exp::SeparationParams {
                    energy: req(config.energy, "energy")?,
                    energy_prime: req(config.energy_prime, "energy_prime")?,
                    n_sites: req(config.n_sites, "n_sites")?,
                    n_samples,
                    radius: config.radius.unwrap_or(0.1),
                    localization_threshold: config.localization_threshold,
                    skip_localization_gate: config.skip_localization_gate.unwrap_or(false),
                };
                exp::ensure_localized(
                    spec,
                    &[params.energy, params.energy_prime],
                    params.n_sites,
                    seeds,
                    params.localization_threshold.unwrap_or(0.02),
                    12,
                    params.skip_localization_gate,
                )?;
                Ok(Prepared::Separation(params))
            }
            other => bail!("experiment '{other}' is not a sampled experiment"),
        }
    }

    pub fn n_samples(&self) -> u64 {
        match self {
            Prepared::Wegner(p) => p.n_samples,
            Prepared::Minami(p) => p.n_samples,
            Prepared::Decorrelate(p) => p.n_samples,
            Prepared::LevelStats(p, _) => p.n_samples,
            Prepared::Independence(p, _) => p.n_samples,
            Prepared::HeavyTail(p) => p.n_samples,
            Prepared::Separation(p) => p.n_samples,
        }
    }

    pub fn sample(
        &self,
        spec: &DisorderSpec,
        seeds: &SeedPolicy,
        index: u64,
    ) -> spectra_core::Result<Vec<f64>> {
        match self {
            Prepared::Wegner(p) => exp::wegner_sample(spec, seeds, p, index),
            Prepared::Minami(p) => exp::minami_sample(spec, seeds, p, index),
            Prepared::Decorrelate(p) => exp::decorrelation_sample(spec, seeds, p, index),
            Prepared::LevelStats(p, nu) => exp::levelstats_sample(spec, seeds, p, *nu, index),
            Prepared::Independence(p, nus) => {
                exp::independence_sample(spec, seeds, p, nus, index)
            }
            Prepared::HeavyTail(p) => exp::heavytail_sample(spec, seeds, p, index),
            Prepared::Separation(p) => exp::separation_sample(spec, seeds, p, index),
        }
    }

    pub fn summarize(
        &self,
        spec: &DisorderSpec,
        records: &[Vec<f64>],
    ) -> Result<Vec<exp::ExperimentResult>> {
        Ok(match self {
            Prepared::Wegner(p) => exp::wegner_summarize(spec, p, records)?,
            Prepared::Minami(p) => exp::minami_summarize(spec, p, records)?,
            Prepared::Decorrelate(p) => exp::decorrelation_summarize(p, records)?,
            Prepared::LevelStats(p, nu) => exp::levelstats_summarize(p, *nu, records)?.0,
            Prepared::Independence(p, nus) => exp::independence_summarize(p, nus, records)?,
            Prepared::HeavyTail(p) => exp::heavytail_summarize(p, records)?,
            Prepared::Separation(p) => exp::separation_summarize(p, records)?,
        })
    }

    /// Experiment-specific CSV outputs beyond `summary.csv`.
    pub fn write_extras(&self, dir: &Path, records: &[Vec<f64>]) -> Result<()> {
        if let Prepared::LevelStats(p, nu) = self {
            let (_, fit) = exp::levelstats_summarize(p, *nu, records)?;
            std::fs::write(dir.join("counts.csv"), output::counts_csv(&p.windows, records))?;
            std::fs::write(dir.join("fit.csv"), output::fit_csv(&fit))?;
        }
        Ok(())
    }
}

/// Arguments common to a fresh run.
pub struct RunArgs {
    pub config_path: PathBuf,
    pub sets: Vec<String>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

/// Derive the effective worker count: flag, then `SPECTRA_WORKERS`,
/// then the config, then all hardware threads.
pub fn worker_count(flag: Option<usize>, config: &ExperimentConfig) -> usize {
    flag.or_else(|| {
        std::env::var("SPECTRA_WORKERS")
            .ok()
            .and_then(|s| s.parse().ok())
    })
    .or(config.workers)
    .unwrap_or_else(num_threads)
    .max(1)
}

fn num_threads() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

pub fn out_dir(config: &ExperimentConfig) -> PathBuf {
    PathBuf::from(
        config
            .out_dir
            .clone()
            .unwrap_or_else(|| format!("out/{}", config.experiment)),
    )
}

/// Execute a sampled experiment from scratch.
pub fn run_sampled(args: &RunArgs, config: &ExperimentConfig) -> Result<()> {
    let dir = out_dir(config);
    std::fs::create_dir_all(&dir)?;
    let seeds = SeedPolicy::new(config.master_seed);
    let workers = worker_count(args.workers, config);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()?;

    pool.install(|| -> Result<()> {
        let prepared = Prepared::from_config(config, &seeds)?;
        let n_samples = prepared.n_samples();
        let chunk_size = config.checkpoint_interval.unwrap_or(DEFAULT_CHUNK).max(1);
        let manifest = RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            experiment: config.experiment.clone(),
            config_path: args.config_path.display().to_string(),
            overrides: args.sets.clone(),
            seed_override: args.seed,
            config_hash: config_hash(config),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            n_samples,
            chunk_size,
            completed_chunks: 0,
            started_unix: now_unix(),
            finished_unix: None,
        };
        // a fresh run invalidates any previous checkpoint in this directory
        let _ = std::fs::remove_file(dir.join("checkpoint.jsonl"));
        manifest.store(&dir)?;
        let records = Vec::new();
        finish_run(config, &seeds, &prepared, manifest, &dir, records)
    })
}

/// Resume a checkpointed run from its manifest.
pub fn resume(manifest_path: &Path, workers: Option<usize>) -> Result<()> {
    let manifest = RunManifest::load(manifest_path)?;
    if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
        bail!("manifest schema {} unsupported", manifest.schema_version);
    }
    let dir = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));

    let config = ExperimentConfig::load(
        Path::new(&manifest.config_path),
        &manifest.overrides,
        manifest.seed_override,
        None,
        None,
    )?;
    let found = config_hash(&config);
    if found != manifest.config_hash {
        bail!(
            "stale checkpoint: config hash {found} does not match manifest {}; refusing to resume",
            manifest.config_hash
        );
    }
    if manifest.finished_unix.is_some() {
        println!("run already complete; nothing to resume");
        return Ok(());
    }

    let seeds = SeedPolicy::new(config.master_seed);
    let workers = worker_count(workers, &config);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()?;
    pool.install(|| -> Result<()> {
        let prepared = Prepared::from_config(&config, &seeds)?;
        let records = read_checkpoint(&dir, &manifest)?;
        finish_run(&config, &seeds, &prepared, manifest, &dir, records)
    })
}

#[derive(Serialize, Deserialize)]
struct ChunkLine {
    chunk: u64,
    start: u64,
    records: Vec<Vec<f64>>,
}

fn read_checkpoint(dir: &Path, manifest: &RunManifest) -> Result<Vec<Vec<f64>>> {
    let path = dir.join("checkpoint.jsonl");
    let mut records = Vec::new();
    if manifest.completed_chunks == 0 {
        return Ok(records);
    }
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading checkpoint {}", path.display()))?;
    let mut next = 0u64;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let chunk: ChunkLine = serde_json::from_str(line)?;
        if chunk.chunk != next || chunk.start != records.len() as u64 {
            bail!("checkpoint corrupt: chunk {} out of order", chunk.chunk);
        }
        records.extend(chunk.records);
        next += 1;
        if next == manifest.completed_chunks {
            break;
        }
    }
    if next < manifest.completed_chunks {
        bail!(
            "checkpoint truncated: manifest says {} chunks, file has {next}",
            manifest.completed_chunks
        );
    }
    Ok(records)
}

/// Compute the remaining chunks, checkpointing after each, then write
/// all outputs.
fn finish_run(
    config: &ExperimentConfig,
    seeds: &SeedPolicy,
    prepared: &Prepared,
    mut manifest: RunManifest,
    dir: &Path,
    mut records: Vec<Vec<f64>>,
) -> Result<()> {
    use rayon::prelude::*;
    let n_samples = manifest.n_samples;
    let chunk_size = manifest.chunk_size;
    let n_chunks = n_samples.div_ceil(chunk_size);

    let mut checkpoint = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join("checkpoint.jsonl"))?;

    for chunk in manifest.completed_chunks..n_chunks {
        let start = chunk * chunk_size;
        let end = (start + chunk_size).min(n_samples);
        let chunk_records: Vec<Vec<f64>> = (start..end)
            .into_par_iter()
            .map(|i| prepared.sample(&config.disorder, seeds, i))
            .collect::<spectra_core::Result<Vec<_>>>()?;
        let line = ChunkLine {
            chunk,
            start,
            records: chunk_records.clone(),
        };
        writeln!(checkpoint, "{}", serde_json::to_string(&line)?)?;
        checkpoint.flush()?;
        records.extend(chunk_records);
        manifest.completed_chunks = chunk + 1;
        manifest.store(dir)?;
    }

    let results = prepared.summarize(&config.disorder, &records)?;
    output::write_results_jsonl(&dir.join("results.jsonl"), &results)?;
    std::fs::write(
        dir.join("summary.csv"),
        output::summary_csv(&config.experiment, &results),
    )?;
    prepared.write_extras(dir, &records)?;
    manifest.finished_unix = Some(now_unix());
    manifest.store(dir)?;
    for r in &results {
        println!(
            "{}: estimate {:.6e}{} [{}]",
            r.name,
            r.estimate,
            r.reference_bound
                .map(|b| format!(" vs bound {b:.6e}"))
                .unwrap_or_default(),
            match r.verdict {
                exp::Verdict::Pass => "pass",
                exp::Verdict::Fail => "FAIL",
                exp::Verdict::Report => "report",
            }
        );
    }
    Ok(())
}

/// Direct (non-checkpointed) commands: spectrum dumps, DOS curves and
/// the deterministic validation sweeps.
pub fn run_direct(args: &RunArgs, config: &ExperimentConfig) -> Result<()> {
    let dir = out_dir(config);
    std::fs::create_dir_all(&dir)?;
    let seeds = SeedPolicy::new(config.master_seed);
    let workers = worker_count(args.workers, config);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()?;

    pool.install(|| -> Result<()> {
        match config.experiment.as_str() {
            "sample-spectrum" => {
                let n_sites = config.n_sites.ok_or_else(|| anyhow!("n_sites: required"))?;
                let n_samples = config.n_samples.unwrap_or(1);
                for i in 0..n_samples {
                    let field = sample_weights_block(&config.disorder, n_sites, &seeds, 0, i as u32)?;
                    let decomp = spectra_core::eigen::decompose(&field)?;
                    field.to_csv(&dir.join(format!("field_{i:06}.csv")))?;
                    std::fs::write(
                        dir.join(format!("spectrum_{i:06}.csv")),
                        output::spectrum_csv(&decomp.eigenvalues),
                    )?;
                }
            }
            "dos" => {
                let est = stats::estimate_dos(
                    &config.disorder,
                    config.n_sites.ok_or_else(|| anyhow!("n_sites: required"))?,
                    config.n_samples.ok_or_else(|| anyhow!("n_samples: required"))?,
                    &seeds,
                    config.bandwidth,
                )?;
                std::fs::write(dir.join("dos.csv"), est.to_csv())?;
            }
            "check-determinants" => {
                let n_draws = config.n_draws.unwrap_or(1000);
                let rows = exp::check_determinants(&seeds, n_draws);
                std::fs::write(dir.join("summary.csv"), output::determinants_csv(&rows))?;
                for (case, draws, err) in rows {
                    println!("{case}: {draws} draws, max rel err {err:.3e}");
                }
            }
            "check-perturbation" => {
                let sizes = config.sizes.clone().unwrap_or_else(|| vec![16, 32, 64]);
                let checks = exp::check_perturbation(
                    &config.disorder,
                    &seeds,
                    &sizes,
                    config.n_fields.unwrap_or(8),
                    config.n_hessian.unwrap_or(2),
                )?;
                std::fs::write(dir.join("summary.csv"), output::perturbation_csv(&checks))?;
                let worst_grad = checks
                    .iter()
                    .map(|c| c.gradient_rel_err)
                    .fold(0.0f64, f64::max);
                println!(
                    "checked {} eigenpairs; worst gradient FD rel err {worst_grad:.3e}",
                    checks.len()
                );
            }
            "laplace-check" => {
                let n_draws = config.n_draws.unwrap_or(1000);
                let rows = laplace_sweep(&seeds, n_draws)?;
                std::fs::write(dir.join("summary.csv"), output::laplace_csv(&rows))?;
                for (case, draws, err) in rows {
                    println!("{case}: {draws} draws, max discrepancy {err:.3e}");
                }
            }
            other => bail!("experiment '{other}' is not a direct command"),
        }
        Ok(())
    })?;

    // direct commands still record a manifest for provenance
    let manifest = RunManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        experiment: config.experiment.clone(),
        config_path: args.config_path.display().to_string(),
        overrides: args.sets.clone(),
        seed_override: args.seed,
        config_hash: config_hash(config),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        n_samples: config.n_samples.unwrap_or(0),
        chunk_size: 0,
        completed_chunks: 0,
        started_unix: now_unix(),
        finished_unix: Some(now_unix()),
    };
    manifest.store(&out_dir(config))?;
    Ok(())
}

/// Random-pmf sweep plus the canonical laws for the Laplace identity.
fn laplace_sweep(seeds: &SeedPolicy, n_draws: u64) -> Result<Vec<(String, u64, f64)>> {
    use spectra_core::disorder::next_f64;
    let mut rng = seeds.stream(0);
    let mut worst = 0.0f64;
    for _ in 0..n_draws {
        let mut pmf = [0.0f64; 8];
        let mut total = 0.0;
        for v in pmf.iter_mut() {
            *v = next_f64(&mut rng) + 1e-9;
            total += *v;
        }
        for v in pmf.iter_mut() {
            *v /= total;
        }
        let a = [
            2.0 * next_f64(&mut rng) - 1.0,
            2.0 * next_f64(&mut rng) - 1.0,
            2.0 * next_f64(&mut rng) - 1.0,
        ];
        worst = worst.max(exp::laplace_identity_check(&pmf, a)?.max_discrepancy);
    }

    let independent = {
        let p = [0.3, 0.5, 0.8];
        let mut pmf = [0.0f64; 8];
        for (s, v) in pmf.iter_mut().enumerate() {
            *v = (0..3)
                .map(|i| if (s >> i) & 1 == 1 { p[i] } else { 1.0 - p[i] })
                .product();
        }
        exp::laplace_identity_check(&pmf, [1.0, 0.5, -0.7])?
    };
    let correlated = {
        let mut pmf = [0.0f64; 8];
        pmf[0] = 0.5;
        pmf[7] = 0.5;
        exp::laplace_identity_check(&pmf, [1.0, 1.0, 1.0])?
    };

    Ok(vec![
        ("random".into(), n_draws, worst),
        ("independent".into(), 1, independent.max_discrepancy),
        ("correlated".into(), 1, correlated.max_discrepancy),
    ])
}
