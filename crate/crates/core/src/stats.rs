//! Spectral statistics: density of states, the rescaled local point
//! process, Poisson goodness of fit, and eigenvector localization
//! diagnostics.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::disorder::{next_f64, sample_weights, DisorderSpec, SeedPolicy};
use crate::eigen::{decompose, eigenvalues_only, SpectralDecomposition};
use crate::{Error, Result};

/// Reference energies below `0.05·4β₀` are refused by default: the
/// spectral estimates driving every reference bound degrade at the
/// bottom of the spectrum. Callers may override explicitly.
pub fn check_reference_energy(beta0: f64, energy: f64, allow_low_energy: bool) -> Result<()> {
    let floor = 0.05 * 4.0 * beta0;
    if energy < floor && !allow_low_energy {
        return Err(Error::Config(format!(
            "reference energy {energy} below guard {floor} (= 0.05·4β₀); \
             pass allow_low_energy to override"
        )));
    }
    Ok(())
}

/// Integrated density of states and smoothed density on an energy grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DosEstimate {
    /// Energy knots on `[0, 4β₀]`.
    pub grid: Vec<f64>,
    /// Empirical IDS at the knots (exact eigenvalue counting, no smoothing).
    pub n_hat: Vec<f64>,
    /// Kernel-smoothed density at the knots.
    pub nu_hat: Vec<f64>,
    pub n_samples: u64,
    pub n_sites: usize,
    pub bandwidth: f64,
}

impl DosEstimate {
    /// Linear interpolation of `nu_hat` at `energy`.
    pub fn nu_at(&self, energy: f64) -> f64 {
        interp(&self.grid, &self.nu_hat, energy)
    }

    /// Linear interpolation of `n_hat` at `energy`.
    pub fn n_at(&self, energy: f64) -> f64 {
        interp(&self.grid, &self.n_hat, energy)
    }

    /// Write `energy,N_hat,nu_hat` rows with header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("energy,N_hat,nu_hat\n");
        for i in 0..self.grid.len() {
            out.push_str(&format!("{},{},{}\n", self.grid[i], self.n_hat[i], self.nu_hat[i]));
        }
        out
    }
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let j = xs.partition_point(|&g| g <= x).min(xs.len() - 1);
    let (x0, x1) = (xs[j - 1], xs[j]);
    let s = (x - x0) / (x1 - x0);
    ys[j - 1] * (1.0 - s) + ys[j] * s
}

/// Default smoothing bandwidth `4β₀ · n_sites^{−1/3}`.
pub fn default_bandwidth(beta0: f64, n_sites: usize) -> f64 {
    4.0 * beta0 * (n_sites as f64).powf(-1.0 / 3.0)
}

const DOS_GRID_KNOTS: usize = 1025;

/// Estimate the integrated density of states and its derivative from a
/// disorder ensemble.
///
/// `n_hat(E)` is the mean fraction of eigenvalues `≤ E`, exactly.
/// `nu_hat` is a Gaussian kernel estimate over all pooled eigenvalues,
/// with mass reflected at the support edges `0` and `4β₀` so it
/// integrates to one.
pub fn estimate_dos(
    spec: &DisorderSpec,
    n_sites: usize,
    n_samples: u64,
    seeds: &SeedPolicy,
    bandwidth: Option<f64>,
) -> Result<DosEstimate> {
    spec.validate()?;
    if n_samples < 1 {
        return Err(Error::Config("n_samples must be ≥ 1".into()));
    }
    let beta0 = spec.beta0();
    let h = bandwidth.unwrap_or_else(|| default_bandwidth(beta0, n_sites));
    if !(h > 0.0) {
        return Err(Error::Config(format!("bandwidth {h} must be > 0")));
    }

    let mut pooled: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let field = sample_weights(spec, n_sites, seeds, i)?;
            eigenvalues_only(&field)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    pooled.sort_by(f64::total_cmp);

    let top = 4.0 * beta0;
    let grid: Vec<f64> = (0..DOS_GRID_KNOTS)
        .map(|i| top * i as f64 / (DOS_GRID_KNOTS - 1) as f64)
        .collect();
    let total = pooled.len() as f64;
    let n_hat: Vec<f64> = grid
        .iter()
        .map(|&e| pooled.partition_point(|&x| x <= e) as f64 / total)
        .collect();

    let inv = 1.0 / (total * h * (2.0 * std::f64::consts::PI).sqrt());
    let kernel = |d: f64| (-0.5 * d * d).exp();
    let nu_hat: Vec<f64> = grid
        .par_iter()
        .map(|&e| {
            // reflection at both edges keeps unit mass on [0, 4β₀]
            let mut acc = 0.0;
            for &x in &pooled {
                let d = (e - x) / h;
                if d.abs() < 8.0 {
                    acc += kernel(d);
                }
                let dr0 = (e + x) / h;
                if dr0.abs() < 8.0 {
                    acc += kernel(dr0);
                }
                let dr1 = (e - (2.0 * top - x)) / h;
                if dr1.abs() < 8.0 {
                    acc += kernel(dr1);
                }
            }
            acc * inv
        })
        .collect();

    Ok(DosEstimate {
        grid,
        n_hat,
        nu_hat,
        n_samples,
        n_sites,
        bandwidth: h,
    })
}

/// Provenance of a rescaled process.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SampleSource {
    pub master_seed: u64,
    pub index: u64,
    pub n_sites: usize,
}

/// The rescaled local point process `ξ_n = |Λ| ν(E) (E_n − E)`.
#[derive(Debug, Clone)]
pub struct RescaledProcess {
    pub reference_energy: f64,
    pub nu_at_e: f64,
    /// All `N` rescaled eigenvalues, in eigenvalue order.
    pub points: Vec<f64>,
    pub source: Option<SampleSource>,
}

/// Rescale a full eigenvalue list around a reference energy.
pub fn rescale(
    eigenvalues: &[f64],
    reference_energy: f64,
    nu_at_e: f64,
    source: Option<SampleSource>,
) -> Result<RescaledProcess> {
    if !(nu_at_e > 0.0) {
        return Err(Error::Config(format!(
            "density of states {nu_at_e} at the reference energy must be > 0"
        )));
    }
    let scale = eigenvalues.len() as f64 * nu_at_e;
    Ok(RescaledProcess {
        reference_energy,
        nu_at_e,
        points: eigenvalues
            .iter()
            .map(|&e| scale * (e - reference_energy))
            .collect(),
        source,
    })
}

impl RescaledProcess {
    /// Invert the rescaling.
    pub fn unrescale(&self) -> Vec<f64> {
        let scale = self.points.len() as f64 * self.nu_at_e;
        self.points
            .iter()
            .map(|&x| self.reference_energy + x / scale)
            .collect()
    }

    /// Number of points in the window `[a, b)`.
    pub fn count_in(&self, window: (f64, f64)) -> usize {
        self.points
            .iter()
            .filter(|&&x| x >= window.0 && x < window.1)
            .count()
    }
}

/// Validate that count windows are pairwise disjoint.
pub fn validate_windows(windows: &[(f64, f64)]) -> Result<()> {
    for (i, w) in windows.iter().enumerate() {
        if !(w.0 < w.1) {
            return Err(Error::InvalidInput(format!(
                "window {i} = [{}, {}) is empty or inverted",
                w.0, w.1
            )));
        }
        for (j, v) in windows.iter().enumerate().skip(i + 1) {
            if w.0 < v.1 && v.0 < w.1 {
                return Err(Error::InvalidInput(format!(
                    "windows {i} and {j} overlap"
                )));
            }
        }
    }
    Ok(())
}

/// Window counts for an ensemble of samples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CountRecord {
    pub windows: Vec<(f64, f64)>,
    /// `counts[sample][window]`.
    pub counts: Vec<Vec<u32>>,
}

impl CountRecord {
    pub fn new(windows: Vec<(f64, f64)>) -> Result<Self> {
        validate_windows(&windows)?;
        Ok(CountRecord {
            windows,
            counts: Vec::new(),
        })
    }

    pub fn push(&mut self, process: &RescaledProcess) {
        self.counts.push(
            self.windows
                .iter()
                .map(|&w| process.count_in(w) as u32)
                .collect(),
        );
    }
}

/// Poisson probability mass `λ^k e^{−λ} / k!`.
pub fn poisson_pmf(lambda: f64, k: u32) -> f64 {
    let mut log_p = -lambda + k as f64 * lambda.ln();
    for j in 1..=k {
        log_p -= (j as f64).ln();
    }
    if lambda == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    log_p.exp()
}

/// Draw from Poisson(λ) by inversion; adequate for the small intensities
/// used in calibration runs.
pub fn sample_poisson(rng: &mut ChaCha8Rng, lambda: f64) -> u32 {
    let u = next_f64(rng);
    let mut k = 0u32;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    while u > cdf && k < 10_000 {
        k += 1;
        p *= lambda / k as f64;
        cdf += p;
    }
    k
}

/// Per-window goodness-of-fit against the Poisson reference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowFit {
    pub window: (f64, f64),
    pub intensity: f64,
    /// Empirical pmf over `k = 0..=k_max`.
    pub empirical: Vec<f64>,
    /// Poisson pmf over the same range.
    pub poisson: Vec<f64>,
    /// Total-variation distance, tail mass included.
    pub tv_distance: f64,
}

/// A joint count-vector event with its empirical and reference weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointEvent {
    pub ks: Vec<u32>,
    pub empirical: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    /// Product `∏ pmf(k_j; |U_j|)`.
    pub poisson_product: f64,
}

/// Full fit report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoissonFit {
    pub per_window: Vec<WindowFit>,
    pub joint: Vec<JointEvent>,
    pub n_samples: u64,
}

/// 95% Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054f64;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let mid = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (mid - half).max(0.0) };
    let hi = if successes == trials {
        1.0
    } else {
        (mid + half).min(1.0)
    };
    (lo, hi)
}

/// Compare empirical window counts with the intensity-1 Poisson
/// reference: per-window pmf and total-variation distance, plus joint
/// count-vector probabilities against the product formula.
pub fn poisson_fit(record: &CountRecord, intensities: &[f64]) -> Result<PoissonFit> {
    let n_windows = record.windows.len();
    if intensities.len() != n_windows {
        return Err(Error::InvalidInput(format!(
            "{} intensities for {} windows",
            intensities.len(),
            n_windows
        )));
    }
    let n_samples = record.counts.len() as u64;
    if n_samples == 0 {
        return Err(Error::InvalidInput("no samples in count record".into()));
    }

    let mut per_window = Vec::with_capacity(n_windows);
    for (j, &w) in record.windows.iter().enumerate() {
        let lambda = intensities[j];
        let k_max = record
            .counts
            .iter()
            .map(|row| row[j])
            .max()
            .unwrap_or(0)
            .max((3.0 * lambda).ceil() as u32 + 3);
        let mut hist = vec![0u64; k_max as usize + 1];
        for row in &record.counts {
            hist[row[j] as usize] += 1;
        }
        let empirical: Vec<f64> = hist
            .iter()
            .map(|&c| c as f64 / n_samples as f64)
            .collect();
        let poisson: Vec<f64> = (0..=k_max).map(|k| poisson_pmf(lambda, k)).collect();
        let mut tv: f64 = empirical
            .iter()
            .zip(&poisson)
            .map(|(a, b)| (a - b).abs())
            .sum();
        tv += 1.0 - poisson.iter().sum::<f64>(); // Poisson tail beyond k_max
        per_window.push(WindowFit {
            window: w,
            intensity: lambda,
            empirical,
            poisson,
            tv_distance: 0.5 * tv,
        });
    }

    // joint count-vector events, keyed by the observed vectors
    let mut event_counts: std::collections::BTreeMap<Vec<u32>, u64> = Default::default();
    for row in &record.counts {
        *event_counts.entry(row.clone()).or_insert(0) += 1;
    }
    let joint = event_counts
        .into_iter()
        .map(|(ks, c)| {
            let (lo, hi) = wilson_interval(c, n_samples);
            let product = ks
                .iter()
                .zip(intensities)
                .map(|(&k, &l)| poisson_pmf(l, k))
                .product();
            JointEvent {
                ks,
                empirical: c as f64 / n_samples as f64,
                wilson_low: lo,
                wilson_high: hi,
                poisson_product: product,
            }
        })
        .collect();

    Ok(PoissonFit {
        per_window,
        joint,
        n_samples,
    })
}

/// Localization diagnostics of one eigenvector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocDiagnostic {
    pub index: usize,
    pub eigenvalue: f64,
    /// Largest maximizer of `|φ|` (ties resolve to the largest site).
    pub center: usize,
    /// Positive decay rate from the least-squares slope of `log |φ|`
    /// against ring distance to the center; `+∞` when the support is a
    /// single site.
    pub decay_rate: f64,
    /// Envelope check `|φ(x)| ≤ L^q e^{−ν|x − center|}` for supplied
    /// `(q, nu)`; `None` when no envelope was requested.
    pub sup_bound_ok: Option<bool>,
}

/// Sites excluded around the center when fitting the decay slope; the
/// pre-exponential factor contaminates the fit closer in.
const DECAY_FIT_CORE: usize = 5;
const DECAY_FLOOR: f64 = 1e-12;

/// Analyze all eigenvectors with eigenvalue inside `window`.
pub fn localization_diagnostics(
    decomp: &SpectralDecomposition,
    window: (f64, f64),
    envelope: Option<(f64, f64)>,
) -> Vec<LocDiagnostic> {
    (0..decomp.n())
        .filter(|&i| decomp.eigenvalues[i] >= window.0 && decomp.eigenvalues[i] <= window.1)
        .map(|i| {
            let u = decomp.eigenvector(i);
            // ring size from the vector itself: a decomposition may
            // carry fewer eigenpairs than sites
            let n_sites = u.len();
            let half_l = ((n_sites as f64) - 1.0) / 2.0;
            let mut center = 0usize;
            let mut best = 0.0f64;
            for (x, &v) in u.iter().enumerate() {
                if v.abs() >= best {
                    best = v.abs();
                    center = x;
                }
            }
            let ring_dist = |x: usize| {
                let d = (x as isize - center as isize).unsigned_abs();
                d.min(n_sites - d)
            };
            let mut pts: Vec<(f64, f64)> = Vec::new();
            for (x, &v) in u.iter().enumerate() {
                let d = ring_dist(x);
                if d > DECAY_FIT_CORE && v.abs() > DECAY_FLOOR {
                    pts.push((d as f64, v.abs().ln()));
                }
            }
            let decay_rate = if pts.len() < 2 {
                f64::INFINITY
            } else {
                -least_squares_slope(&pts)
            };
            let sup_bound_ok = envelope.map(|(q, nu)| {
                u.iter().enumerate().all(|(x, &v)| {
                    v.abs() <= half_l.max(2.0).powf(q) * (-nu * ring_dist(x) as f64).exp()
                })
            });
            LocDiagnostic {
                index: i,
                eigenvalue: decomp.eigenvalues[i],
                center,
                decay_rate,
                sup_bound_ok,
            }
        })
        .collect()
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Median decay rate of eigenvectors near `energy` over a probe
/// ensemble; the empirical localization certificate gating the
/// asymptotic-statistics experiments.
pub fn median_decay_rate(
    spec: &DisorderSpec,
    energy: f64,
    n_sites: usize,
    seeds: &SeedPolicy,
    n_probe: u64,
    window_halfwidth: f64,
) -> Result<f64> {
    let probe_seeds = seeds.derived(0x70b3);
    let mut rates: Vec<f64> = (0..n_probe)
        .into_par_iter()
        .map(|i| {
            let field = sample_weights(spec, n_sites, &probe_seeds, i)?;
            let d = decompose(&field)?;
            Ok(localization_diagnostics(
                &d,
                (energy - window_halfwidth, energy + window_halfwidth),
                None,
            )
            .into_iter()
            .map(|diag| diag.decay_rate)
            .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    if rates.is_empty() {
        return Err(Error::Config(format!(
            "no eigenvalues near {energy} in {n_probe} probe samples"
        )));
    }
    rates.sort_by(f64::total_cmp);
    Ok(rates[rates.len() / 2])
}
