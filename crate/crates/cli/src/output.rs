//! File writers: JSON-lines results and per-experiment summary CSVs.
//! All numbers are printed with Rust's shortest round-trip formatting,
//! so equal runs produce byte-identical files.

use anyhow::Result;
use spectra_core::experiments::{ExperimentResult, PerturbationCheck, Verdict};
use spectra_core::stats::PoissonFit;
use std::path::Path;

pub fn write_results_jsonl(path: &Path, results: &[ExperimentResult]) -> Result<()> {
    let mut out = String::new();
    for r in results {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
        Verdict::Report => "report",
    }
}

/// Summary CSV tailored to the experiment family.
pub fn summary_csv(experiment: &str, results: &[ExperimentResult]) -> String {
    match experiment {
        "wegner" => {
            let mut out = String::from(
                "energy,epsilon,n_sites,n_samples,empirical,ci_low,ci_high,bound,verdict\n",
            );
            for r in results {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    r.params["energy"],
                    r.params["epsilon"],
                    r.params["n_sites"],
                    r.params["n_samples"],
                    r.estimate,
                    r.ci_low,
                    r.ci_high,
                    r.reference_bound.unwrap_or(f64::NAN),
                    verdict_str(r.verdict),
                ));
            }
            out
        }
        "minami" => {
            let mut out = String::from(
                "a,b,n_sites,n_samples,empirical,ci_low,ci_high,bound,verdict\n",
            );
            for r in results {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    r.params["interval"][0],
                    r.params["interval"][1],
                    r.params["n_sites"],
                    r.params["n_samples"],
                    r.estimate,
                    r.ci_low,
                    r.ci_high,
                    r.reference_bound.unwrap_or(f64::NAN),
                    verdict_str(r.verdict),
                ));
            }
            out
        }
        "decorrelate" => {
            let mut out = String::from(
                "L,l,n_box,n_samples,p_joint,ci_low,ci_high,p_e,p_e_prime,product,joint_over_product,ref_scale\n",
            );
            for r in results.iter().filter(|r| r.name == "decorrelate") {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                    r.params["L"],
                    r.params["l"],
                    r.params["n_box"],
                    r.params["n_samples"],
                    r.estimate,
                    r.ci_low,
                    r.ci_high,
                    r.extras["p_marginal_e"],
                    r.extras["p_marginal_e_prime"],
                    r.extras["product_of_marginals"],
                    r.extras["joint_over_product"],
                    r.reference_bound.unwrap_or(f64::NAN),
                ));
            }
            if let Some(slope) = results.iter().find(|r| r.name == "decorrelate-slope") {
                out.push_str(&format!(
                    "# slope,{},over,{},scales\n",
                    slope.estimate, slope.extras["n_scales_with_hits"]
                ));
            }
            out
        }
        "levelstats" => {
            let mut out = String::from("window_lo,window_hi,intensity,n_samples,tv\n");
            for r in results {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.params["window"][0],
                    r.params["window"][1],
                    r.extras["intensity"],
                    r.params["n_samples"],
                    r.estimate,
                ));
            }
            out
        }
        "independence" => {
            let mut out = String::from(
                "n_samples,p_joint,ci_low,ci_high,product_of_marginals,abs_diff,poisson_product,max_abs_correlation\n",
            );
            for r in results {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    r.params["n_samples"],
                    r.estimate,
                    r.ci_low,
                    r.ci_high,
                    r.extras["product_of_marginals"],
                    r.extras["abs_joint_minus_product"],
                    r.extras["poisson_product"],
                    r.extras["max_abs_correlation"],
                ));
            }
            out
        }
        "heavytail" => {
            let mut out =
                String::from("check,estimate,ci_low,ci_high,bound,verdict\n");
            for r in results {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.name,
                    r.estimate,
                    r.ci_low,
                    r.ci_high,
                    r.reference_bound.unwrap_or(f64::NAN),
                    verdict_str(r.verdict),
                ));
            }
            out
        }
        "separation" => {
            let mut out = String::from(
                "n_sites,n_samples,pairs_found,violations,min_l1_over_bound,verdict\n",
            );
            for r in results {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.params["n_sites"],
                    r.params["n_samples"],
                    r.extras["pairs_found"],
                    r.extras["violations"],
                    r.extras["min_l1_over_bound"],
                    verdict_str(r.verdict),
                ));
            }
            out
        }
        _ => {
            let mut out = String::from("name,estimate,ci_low,ci_high,bound,verdict\n");
            for r in results {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.name,
                    r.estimate,
                    r.ci_low,
                    r.ci_high,
                    r.reference_bound.unwrap_or(f64::NAN),
                    verdict_str(r.verdict),
                ));
            }
            out
        }
    }
}

/// `sample,window,count` rows for a level-statistics run.
pub fn counts_csv(windows: &[(f64, f64)], records: &[Vec<f64>]) -> String {
    let mut out = String::from("sample,window,count\n");
    for (i, rec) in records.iter().enumerate() {
        for (j, &c) in rec.iter().enumerate() {
            let _ = windows;
            out.push_str(&format!("{i},{j},{c}\n"));
        }
    }
    out
}

/// `window,k,empirical,poisson,tv` rows.
pub fn fit_csv(fit: &PoissonFit) -> String {
    let mut out = String::from("window,k,empirical,poisson,tv\n");
    for (j, wf) in fit.per_window.iter().enumerate() {
        for (k, (&emp, &poi)) in wf.empirical.iter().zip(&wf.poisson).enumerate() {
            out.push_str(&format!("{j},{k},{emp},{poi},{}\n", wf.tv_distance));
        }
    }
    out
}

/// `index,eigenvalue` rows.
pub fn spectrum_csv(eigenvalues: &[f64]) -> String {
    let mut out = String::from("index,eigenvalue\n");
    for (i, e) in eigenvalues.iter().enumerate() {
        out.push_str(&format!("{i},{e}\n"));
    }
    out
}

/// `case,draws,max_rel_err` rows.
pub fn determinants_csv(rows: &[(&'static str, u64, f64)]) -> String {
    let mut out = String::from("case,draws,max_rel_err\n");
    for (case, draws, err) in rows {
        out.push_str(&format!("{case},{draws},{err}\n"));
    }
    out
}

/// `n_sites,eigenindex,gradient_rel_err,sum_rule_rel_err,hessian_rel_err` rows.
pub fn perturbation_csv(checks: &[PerturbationCheck]) -> String {
    let mut out = String::from("n_sites,eigenindex,gradient_rel_err,sum_rule_rel_err,hessian_rel_err\n");
    for c in checks {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            c.n_sites,
            c.eigenindex,
            c.gradient_rel_err,
            c.sum_rule_rel_err,
            c.hessian_rel_err
                .map(|h| h.to_string())
                .unwrap_or_default(),
        ));
    }
    out
}

/// `case,draws,max_discrepancy` rows.
pub fn laplace_csv(rows: &[(String, u64, f64)]) -> String {
    let mut out = String::from("case,draws,max_discrepancy\n");
    for (case, draws, err) in rows {
        out.push_str(&format!("{case},{draws},{err}\n"));
    }
    out
}
