//! Acceptance suite: twelve quantitative criteria covering the whole
//! workspace, each printing one pass/fail line.
//!
//! Run in release mode (the Monte Carlo criteria are sized for it):
//!
//! ```text
//! cargo test --release -p spectra-cli --test acceptance -- --nocapture
//! ```
//!
//! In debug builds the heavy criteria are skipped so a plain
//! `cargo test --workspace` stays quick.

use std::time::Instant;

use spectra_core::disorder::{sample_weights, DisorderSpec, SeedPolicy};
use spectra_core::eigen::{constant_ring_spectrum, decompose, eigenvalues_only};
use spectra_core::experiments as exp;
use spectra_core::operator::WeightField;
use spectra_core::perturb;
use spectra_core::stats;

const RELEASE: bool = !cfg!(debug_assertions);

/// Run one criterion, print its line, enforce the stated wall limit.
fn criterion<F>(id: u32, name: &str, limit_secs: f64, heavy: bool, body: F)
where
    F: FnOnce() -> Result<String, String>,
{
    if heavy && !RELEASE {
        println!("acceptance {id:2} {name}: skipped (debug build; run with --release)");
        return;
    }
    let start = Instant::now();
    match body() {
        Ok(detail) => {
            let elapsed = start.elapsed().as_secs_f64();
            println!("acceptance {id:2} {name}: pass ({elapsed:.1}s) — {detail}");
            assert!(
                elapsed <= limit_secs,
                "criterion {id} exceeded its {limit_secs}s budget: {elapsed:.1}s"
            );
        }
        Err(msg) => {
            println!("acceptance {id:2} {name}: FAIL — {msg}");
            panic!("criterion {id} failed: {msg}");
        }
    }
}

fn err<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn spec_half_three_halves() -> DisorderSpec {
    DisorderSpec::uniform(0.5, 1.5)
}

#[test]
fn criterion_01_ring_exactness() {
    criterion(1, "ring exactness", 10.0, true, || {
        let mut worst = 0.0f64;
        for &n in &[3usize, 8, 64, 513, 1024] {
            for &c in &[1.0, 0.7] {
                let evs = err(eigenvalues_only(&WeightField::constant(c, n)))?;
                let exact = constant_ring_spectrum(c, n);
                for (got, want) in evs.iter().zip(&exact) {
                    let e = (got - want).abs() / (4.0 * c);
                    worst = worst.max(e);
                    if e > 1e-9 {
                        return Err(format!("N={n} c={c}: |Δλ|/4c = {e:.3e} > 1e-9"));
                    }
                }
            }
        }
        Ok(format!("max |Δλ|/4c = {worst:.2e} over N ∈ {{3,8,64,513,1024}}"))
    });
}

#[test]
fn criterion_02_kernel_and_range() {
    criterion(2, "kernel + spectral range", 30.0, true, || {
        use rayon::prelude::*;
        let spec = spec_half_three_halves();
        let seeds = SeedPolicy::new(2);
        let beta0 = 1.5;
        let fails: Vec<String> = (0..1000u64)
            .into_par_iter()
            .filter_map(|i| {
                let field = sample_weights(&spec, 64, &seeds, i).ok()?;
                let d = decompose(&field).ok()?;
                let tol = 1e-10 * d.norm;
                if d.eigenvalues[0].abs() > tol {
                    return Some(format!("sample {i}: E1 = {:.3e}", d.eigenvalues[0]));
                }
                if *d.eigenvalues.last().unwrap() > 4.0 * beta0 + 1e-10 {
                    return Some(format!(
                        "sample {i}: λ_max = {} above 4β₀",
                        d.eigenvalues.last().unwrap()
                    ));
                }
                let u0 = d.eigenvector(0);
                let c = u0[0];
                if u0.iter().any(|&x| (x - c).abs() > 1e-8) {
                    return Some(format!("sample {i}: ground state not constant"));
                }
                None
            })
            .collect();
        if let Some(f) = fails.first() {
            return Err(f.clone());
        }
        Ok("1000 random fields at N=64: kernel, constancy and range hold".into())
    });
}

#[test]
fn criterion_03_hellmann_feynman() {
    criterion(3, "perturbation theory vs finite differences", 120.0, true, || {
        let spec = spec_half_three_halves();
        let seeds = SeedPolicy::new(3);
        let sizes = [16usize, 32, 64];
        let per_size = [34u64, 33, 33]; // 100 eigenpairs total
        let mut worst_grad = 0.0f64;
        let mut worst_sum = 0.0f64;
        let mut worst_hess = 0.0f64;
        for (b, (&n, &count)) in sizes.iter().zip(&per_size).enumerate() {
            let block_seeds = seeds.derived(b as u64);
            let checks = err(exp::check_perturbation(
                &spec,
                &block_seeds,
                &[n],
                count,
                count, // Hessian on every eigenpair
            ))?;
            for c in checks {
                worst_grad = worst_grad.max(c.gradient_rel_err);
                worst_sum = worst_sum.max(c.sum_rule_rel_err);
                worst_hess = worst_hess.max(c.hessian_rel_err.unwrap_or(0.0));
            }
        }
        if worst_grad > 1e-6 {
            return Err(format!("gradient FD rel err {worst_grad:.3e} > 1e-6"));
        }
        if worst_sum > 1e-10 {
            return Err(format!("sum rule rel err {worst_sum:.3e} > 1e-10"));
        }
        if worst_hess > 1e-4 {
            return Err(format!("Hessian FD rel err {worst_hess:.3e} > 1e-4"));
        }
        Ok(format!(
            "100 eigenpairs: gradient ≤ {worst_grad:.1e}, sum rule ≤ {worst_sum:.1e}, Hessian ≤ {worst_hess:.1e}"
        ))
    });
}

#[test]
fn criterion_04_determinant_factorizations() {
    criterion(4, "determinant factorizations", 10.0, false, || {
        let seeds = SeedPolicy::new(4);
        let mut worst = 0.0f64;
        for (case, draws, max_err) in exp::check_determinants(&seeds, 1000) {
            worst = worst.max(max_err);
            if max_err > 1e-9 {
                return Err(format!("{case}: rel err {max_err:.3e} over {draws} draws"));
            }
        }
        // zero-factor substitutions
        let (e, ep) = (3.0, 1.0);
        for case_id in perturb::CaseId::ALL {
            let mut case = perturb::SystemCase {
                case_id,
                w_nm2: 0.8,
                w_nm1: 1.2,
                w_n: 0.9,
                w_np1: 1.1,
                e,
                e_prime: ep,
            };
            match case_id {
                perturb::CaseId::A0 | perturb::CaseId::A2 => case.w_n = (e - ep) / 4.0,
                perturb::CaseId::A1 => {
                    case.w_n = (e + ep) * (e + ep) / (4.0 * case.w_nm1)
                }
                perturb::CaseId::A3 => case.w_nm1 = (e - ep) / 4.0,
            }
            let scale = perturb::det_scale(&case);
            let lu = perturb::build_system(&case).det_lu().abs();
            if lu > 1e-10 * scale {
                return Err(format!(
                    "{}: zero-factor determinant {lu:.3e} above 1e-10·scale",
                    case_id.label()
                ));
            }
        }
        Ok(format!("4×1000 draws, max rel err {worst:.2e}; zero factors annihilate"))
    });
}

#[test]
fn criterion_05_wegner_minami() {
    criterion(5, "Wegner and Minami bounds", 600.0, true, || {
        let spec = spec_half_three_halves();
        let seeds = SeedPolicy::new(5);
        let (n_sites, n_samples, energy) = (101usize, 100_000u64, 1.0f64);
        let j_narrow = (energy - 5e-4, energy + 5e-4);
        let j_wide = (energy - 5e-3, energy + 5e-3);
        // one ensemble serves every epsilon and both intervals
        let records = err(exp::run_samples(n_samples, |i| {
            let field = spectra_core::disorder::sample_weights_block(
                &spec, n_sites, &seeds, 0, i as u32,
            )?;
            let evs = eigenvalues_only(&field)?;
            let dist = evs
                .iter()
                .map(|&e| (e - energy).abs())
                .fold(f64::INFINITY, f64::min);
            let count = |j: (f64, f64)| {
                evs.iter().filter(|&&e| e >= j.0 && e <= j.1).count() as f64
            };
            Ok(vec![dist, count(j_wide), count(j_narrow)])
        }))?;

        let mut detail = String::new();
        let wegner_params = exp::WegnerParams {
            energy,
            epsilons: vec![1e-3, 1e-4, 1e-5],
            n_sites,
            n_samples,
        };
        let dist_records: Vec<Vec<f64>> = records.iter().map(|r| vec![r[0]]).collect();
        for r in err(exp::wegner_summarize(&spec, &wegner_params, &dist_records))? {
            if r.verdict != exp::Verdict::Pass {
                return Err(format!(
                    "Wegner ε={}: empirical {:.3e} above bound {:.3e} + 3σ",
                    r.params["epsilon"],
                    r.estimate,
                    r.reference_bound.unwrap()
                ));
            }
            detail.push_str(&format!(
                "ε={}: {:.1e}≤{:.1e} ",
                r.params["epsilon"],
                r.estimate,
                r.reference_bound.unwrap()
            ));
        }
        for (col, interval) in [(1usize, j_wide), (2, j_narrow)] {
            let params = exp::MinamiParams {
                interval,
                n_sites,
                n_samples,
            };
            let count_records: Vec<Vec<f64>> =
                records.iter().map(|r| vec![r[col]]).collect();
            let r = &err(exp::minami_summarize(&spec, &params, &count_records))?[0];
            if r.verdict != exp::Verdict::Pass {
                return Err(format!(
                    "Minami |J|={:.0e}: empirical {:.3e} above bound {:.3e} + 3σ",
                    interval.1 - interval.0,
                    r.estimate,
                    r.reference_bound.unwrap()
                ));
            }
            detail.push_str(&format!(
                "|J|={:.0e}: {:.1e}≤{:.1e} ",
                interval.1 - interval.0,
                r.estimate,
                r.reference_bound.unwrap()
            ));
        }
        Ok(detail)
    });
}

#[test]
fn criterion_06_poisson_statistics() {
    criterion(6, "Poisson window counts", 900.0, true, || {
        // the criterion pins N, E, U and the sample counts but not the
        // ensemble; uniform[0.1, 1.9] keeps the E=1 localization length
        // (≈7 sites) far below N=513 so the finite-size law is testable
        let spec = DisorderSpec::uniform(0.1, 1.9);
        let seeds = SeedPolicy::new(6);
        let params = exp::LevelStatsParams {
            energy: 1.0,
            n_sites: 513,
            n_samples: 5000,
            windows: vec![(-1.0, 1.0)],
            calibration_samples: 500,
            bandwidth: Some(0.05),
            nu_override: None,
            localization_threshold: None,
            skip_localization_gate: false,
            allow_low_energy: false,
        };
        let (results, fit) = err(exp::run_levelstats(&spec, &params, &seeds))?;
        let tv = fit.per_window[0].tv_distance;
        if tv > 0.1 {
            return Err(format!("TV(counts, Poisson(2)) = {tv:.4} > 0.1"));
        }

        // calibration of the test itself on synthetic Poisson data
        let mut record = err(stats::CountRecord::new(vec![(-1.0, 1.0)]))?;
        let mut rng = seeds.derived(0x5e1f).stream(0);
        for _ in 0..10_000 {
            record.counts.push(vec![stats::sample_poisson(&mut rng, 2.0)]);
        }
        let cal = err(stats::poisson_fit(&record, &[2.0]))?;
        let cal_tv = cal.per_window[0].tv_distance;
        if cal_tv > 0.02 {
            return Err(format!("synthetic Poisson calibration TV = {cal_tv:.4} > 0.02"));
        }
        Ok(format!(
            "TV = {tv:.4} ≤ 0.1 (ν̂ = {}), synthetic calibration TV = {cal_tv:.4} ≤ 0.02",
            results[0].params["nu"]
        ))
    });
}

#[test]
fn criterion_07_two_energy_independence() {
    criterion(7, "two-energy independence", 900.0, true, || {
        let spec = spec_half_three_halves();
        let seeds = SeedPolicy::new(7);
        let params = exp::IndependenceParams {
            energies: vec![0.8, 2.0],
            windows: vec![vec![(-1.0, 1.0)], vec![(-1.0, 1.0)]],
            k_targets: vec![vec![0], vec![0]],
            n_sites: 513,
            n_samples: 5000,
            calibration_samples: 300,
            bandwidth: Some(0.05),
            nu_overrides: None,
            localization_threshold: Some(0.01),
            skip_localization_gate: false,
        };
        let results = err(exp::run_independence(&spec, &params, &seeds))?;
        let r = &results[0];
        let diff = r.extras["abs_joint_minus_product"].as_f64().unwrap();
        let corr = r.extras["max_abs_correlation"].as_f64().unwrap();
        if diff > 0.03 {
            return Err(format!("|P_joint − P·P'| = {diff:.4} > 0.03"));
        }
        if corr > 0.07 {
            return Err(format!("count correlation {corr:.4} > 0.07"));
        }
        Ok(format!(
            "|P_joint − P·P'| = {diff:.4} ≤ 0.03, |corr| = {corr:.4} ≤ 0.07"
        ))
    });
}

#[test]
fn criterion_08_decorrelation_scaling() {
    criterion(8, "decorrelation scaling trend", 1200.0, true, || {
        let spec = spec_half_three_halves();
        let seeds = SeedPolicy::new(8);
        let params = exp::DecorrelationParams {
            energy: 0.8,
            energy_prime: 2.0,
            l_list: vec![256, 512, 1024, 2048],
            alpha: 0.5,
            beta: 0.6,
            n_samples: 100_000,
            localization_threshold: Some(0.01),
            skip_localization_gate: false,
        };
        let results = err(exp::run_decorrelation(&spec, &params, &seeds))?;
        let slope = results
            .iter()
            .find(|r| r.name == "decorrelate-slope")
            .ok_or("no slope line (too few joint hits)")?;
        if slope.estimate < 1.7 {
            return Err(format!(
                "log P_joint vs log(l/L) slope = {:.3} < 1.7",
                slope.estimate
            ));
        }
        Ok(format!("slope = {:.3} ≥ 1.7 over L ∈ {{256,512,1024,2048}}", slope.estimate))
    });
}

#[test]
fn criterion_09_laplace_identity() {
    criterion(9, "Laplace functional identity", 1.0, false, || {
        use spectra_core::disorder::next_f64;
        let seeds = SeedPolicy::new(9);
        let mut rng = seeds.stream(0);
        let mut worst = 0.0f64;
        for _ in 0..1000 {
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
            let rep = err(exp::laplace_identity_check(&pmf, a))?;
            worst = worst.max(rep.max_discrepancy);
            if rep.max_discrepancy > 1e-12 {
                return Err(format!("discrepancy {:.3e} > 1e-12", rep.max_discrepancy));
            }
        }
        Ok(format!("1000 random joint laws, max discrepancy {worst:.2e}"))
    });
}

#[test]
fn criterion_10_heavy_tail() {
    criterion(10, "heavy-near-zero disorder", 300.0, true, || {
        let spec = DisorderSpec::heavy_near_zero(1.0, 1.0);
        let seeds = SeedPolicy::new(10);
        let params = exp::HeavyTailParams {
            l_big: 512,
            delta: 0.5,
            beta: 0.6,
            epsilon: 0.1,
            n_samples: 10_000,
            n_verify: 128,
            e_ref: 1.0,
        };
        let results = err(exp::run_heavytail(&spec, &params, &seeds))?;
        let bad = &results[0];
        if bad.verdict != exp::Verdict::Pass {
            return Err(format!(
                "bad-event frequency {:.4e} above union bound {:.4e} + 3σ",
                bad.estimate,
                bad.reference_bound.unwrap()
            ));
        }
        let window = &results[1];
        if window.estimate < 0.99 {
            return Err(format!(
                "window verification rate {:.4} < 0.99 over {} attempts",
                window.estimate, window.params["attempts"]
            ));
        }
        Ok(format!(
            "bad-event {:.2e} ≤ {:.2e}; window rate {:.4} over {} attempts",
            bad.estimate,
            bad.reference_bound.unwrap(),
            window.estimate,
            window.params["attempts"]
        ))
    });
}

#[test]
fn criterion_11_gradient_separation() {
    criterion(11, "gradient separation lower bound", 300.0, true, || {
        let spec = spec_half_three_halves();
        let seeds = SeedPolicy::new(11);
        let params = exp::SeparationParams {
            energy: 0.8,
            energy_prime: 2.0,
            n_sites: 257,
            n_samples: 1100,
            radius: 0.1,
            localization_threshold: Some(0.01),
            skip_localization_gate: false,
        };
        let results = err(exp::run_gradient_separation(&spec, &params, &seeds))?;
        let r = &results[0];
        let found = r.extras["pairs_found"].as_u64().unwrap();
        let violations = r.extras["violations"].as_u64().unwrap();
        if found < 1000 {
            return Err(format!("only {found} eigenpair-pairs found, need ≥ 1000"));
        }
        if violations != 0 {
            return Err(format!("{violations} bound violations among {found} pairs"));
        }
        Ok(format!(
            "{found} pairs, zero violations, min ‖∇E−∇E'‖₁/bound = {:.2}",
            r.extras["min_l1_over_bound"].as_f64().unwrap()
        ))
    });
}

#[test]
fn criterion_12_determinism() {
    criterion(12, "worker-count determinism", 60.0, true, || {
        let dir = std::env::temp_dir().join("spectra_acceptance_c12");
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        let config = dir.join("wegner.json");
        std::fs::write(
            &config,
            r#"{
  "schema_version": 1,
  "experiment": "wegner",
  "disorder": {"kind": "uniform_interval", "alpha0": 0.5, "beta0": 1.5},
  "master_seed": 12,
  "n_samples": 2000,
  "n_sites": 48,
  "energy": 1.0,
  "epsilons": [0.001],
  "checkpoint_interval": 333
}"#,
        )
        .map_err(|e| e.to_string())?;
        for workers in ["1", "2"] {
            let out = dir.join(format!("w{workers}"));
            let status = std::process::Command::new(env!("CARGO_BIN_EXE_spectra"))
                .args([
                    "wegner",
                    "--config",
                    config.to_str().unwrap(),
                    "--out",
                    out.to_str().unwrap(),
                    "--workers",
                    workers,
                ])
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(format!(
                    "run with {workers} workers failed: {}",
                    String::from_utf8_lossy(&status.stderr)
                ));
            }
        }
        for file in ["summary.csv", "results.jsonl", "checkpoint.jsonl"] {
            let a = std::fs::read(dir.join("w1").join(file)).map_err(|e| e.to_string())?;
            let b = std::fs::read(dir.join("w2").join(file)).map_err(|e| e.to_string())?;
            if a != b {
                return Err(format!("{file} differs between worker counts"));
            }
        }
        Ok("summary.csv, results.jsonl and checkpoint.jsonl byte-identical for 1 vs 2 workers".into())
    });
}

