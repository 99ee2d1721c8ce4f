//! The periodic finite-volume operator and its transfer-matrix machinery.
//!
//! Bond `γ` couples sites `γ` and `γ+1 (mod N)` on a ring of `N` sites,
//! so the eigenequation at site `n` involves bonds `n` and `n−1`:
//!
//! ```text
//! (H u)(n) = ω_n (u(n) − u(n+1)) − ω_{n−1} (u(n−1) − u(n)).
//! ```
//!
//! The matrix is symmetric tridiagonal with two corner entries; it is
//! positive semidefinite with the constant vector in its kernel and all
//! eigenvalues in `[0, 4 β₀]`.

use std::path::Path;

use crate::matrix::Matrix;
use crate::{Error, Result};

/// One realization of the bond weights on a periodic ring.
///
/// `weights[γ]` is the weight of the bond between sites `γ` and
/// `γ+1 (mod N)`; the number of bonds equals the number of sites.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightField {
    weights: Vec<f64>,
}

impl WeightField {
    pub fn new(weights: Vec<f64>) -> Self {
        WeightField { weights }
    }

    pub fn constant(value: f64, n_sites: usize) -> Self {
        WeightField {
            weights: vec![value; n_sites],
        }
    }

    /// Number of sites (= number of bonds).
    pub fn n_sites(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Bond weight with periodic index semantics: `weight(γ + N) = weight(γ)`.
    #[inline]
    pub fn weight(&self, gamma: isize) -> f64 {
        let n = self.weights.len() as isize;
        self.weights[gamma.rem_euclid(n) as usize]
    }

    pub fn min_weight(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }

    /// Cyclic relabeling of the bonds by `shift`.
    pub fn rotated(&self, shift: usize) -> Self {
        let n = self.weights.len();
        WeightField {
            weights: (0..n).map(|i| self.weights[(i + shift) % n]).collect(),
        }
    }

    /// Export as single-column CSV `omega` with header.
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("omega\n");
        for w in &self.weights {
            out.push_str(&format!("{w}\n"));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Import from single-column CSV `omega` with header.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        match lines.next().map(str::trim) {
            Some("omega") => {}
            other => {
                return Err(Error::Config(format!(
                    "expected CSV header 'omega', got {other:?}"
                )))
            }
        }
        let mut weights = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let w: f64 = line
                .parse()
                .map_err(|e| Error::Config(format!("line {}: bad weight: {e}", i + 2)))?;
            weights.push(w);
        }
        if weights.len() < 3 {
            return Err(Error::Config("weight field needs at least 3 bonds".into()));
        }
        Ok(WeightField { weights })
    }
}

/// Dense symmetric `N×N` matrix of the operator: diagonal entry `n` is
/// `ω_{n−1} + ω_n`, first off-diagonals `−ω_n`, corners `−ω_{N−1}`.
pub fn build_matrix(field: &WeightField) -> Matrix {
    let n = field.n_sites();
    assert!(n >= 3, "ring needs at least 3 sites");
    let w = field.weights();
    let mut h = Matrix::zeros(n);
    for i in 0..n {
        let prev = w[(i + n - 1) % n];
        h.set(i, i, prev + w[i]);
    }
    for i in 0..n - 1 {
        h.set(i, i + 1, -w[i]);
        h.set(i + 1, i, -w[i]);
    }
    h.set(0, n - 1, -w[n - 1]);
    h.set(n - 1, 0, -w[n - 1]);
    h
}

/// Matrix-free application `H u`.
///
/// Panics if `u.len()` differs from the number of sites.
pub fn apply(field: &WeightField, u: &[f64]) -> Vec<f64> {
    let n = field.n_sites();
    assert_eq!(u.len(), n, "vector length {} != ring size {}", u.len(), n);
    let w = field.weights();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let up = u[(i + 1) % n];
        let um = u[(i + n - 1) % n];
        let wm = w[(i + n - 1) % n];
        out[i] = w[i] * (u[i] - up) - wm * (um - u[i]);
    }
    out
}

/// The 2×2 transfer matrix propagating `(u(n+1), u(n))ᵗ` along the chain
/// at a fixed energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferMatrix {
    pub entries: [[f64; 2]; 2],
}

impl TransferMatrix {
    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.entries[0][0] * v[0] + self.entries[0][1] * v[1],
            self.entries[1][0] * v[0] + self.entries[1][1] * v[1],
        ]
    }

    pub fn det(&self) -> f64 {
        self.entries[0][0] * self.entries[1][1] - self.entries[0][1] * self.entries[1][0]
    }
}

/// Transfer matrix at site `n`:
///
/// ```text
/// [ (ω_n + ω_{n−1} − E)/ω_n   −ω_{n−1}/ω_n ]
/// [           1                     0       ]
/// ```
///
/// Rejects `ω_n = 0` (entries would be infinite).
pub fn transfer_matrix(field: &WeightField, n: usize, energy: f64) -> Result<TransferMatrix> {
    let wn = field.weight(n as isize);
    let wm = field.weight(n as isize - 1);
    if wn == 0.0 {
        return Err(Error::SingularBond { bond: n });
    }
    Ok(TransferMatrix {
        entries: [[(wn + wm - energy) / wn, -wm / wn], [1.0, 0.0]],
    })
}

/// `η = log C` where `C > 1` bounds `‖T‖` and `‖T⁻¹‖` uniformly over
/// `ω ∈ [alpha0, beta0]²` and `E ∈ [0, energy_max]`.
///
/// The documented bound: every entry of `T` and `T⁻¹` is one of
/// `±ω/ω'`, `(ω + ω' − E)/ω''`, `0` or `1`, hence bounded by
/// `m = max(1, β₀/α₀, max(2β₀, E_max − 2α₀)/α₀)`, and for a 2×2 matrix
/// `‖·‖₂ ≤ 2·max-entry`, so `C = 2m ≥ 2`.
pub fn growth_constant(alpha0: f64, beta0: f64, energy_max: f64) -> Result<f64> {
    if alpha0 <= 0.0 {
        return Err(Error::UnboundedTransfer);
    }
    if beta0 < alpha0 || energy_max < 0.0 {
        return Err(Error::Config(
            "need beta0 ≥ alpha0 > 0 and energy_max ≥ 0".into(),
        ));
    }
    let numerator = (2.0 * beta0).max(energy_max - 2.0 * alpha0);
    let m = (beta0 / alpha0).max(numerator / alpha0).max(1.0);
    Ok((2.0 * m).ln())
}

/// Window parameters for the eigenvector lower bound
/// `u²(k) + u²(k+1) ≥ e^{−L^β/2}` around the transfer-vector maximum.
#[derive(Debug, Clone, Copy)]
pub struct WindowParams {
    pub halfwidth: usize,
    pub threshold: f64,
}

impl WindowParams {
    /// Uniform-bound window: halfwidth `⌊κ L^β⌋` with `κ = 1/(8η)`.
    pub fn bounded(eta: f64, l: f64, beta: f64) -> Self {
        let kappa = 1.0 / (8.0 * eta);
        WindowParams {
            halfwidth: (kappa * l.powf(beta)).floor() as usize,
            threshold: (-l.powf(beta) / 2.0).exp(),
        }
    }

    /// Heavy-near-zero variant: halfwidth `¼ L^{β−ε}`, same threshold.
    pub fn heavy_tail(l: f64, beta: f64, epsilon: f64) -> Self {
        WindowParams {
            halfwidth: (0.25 * l.powf(beta - epsilon)).floor() as usize,
            threshold: (-l.powf(beta) / 2.0).exp(),
        }
    }
}

/// Outcome of the lower-bound window check for one eigenvector.
#[derive(Debug, Clone, Copy)]
pub struct WindowCheck {
    /// Site maximizing `‖(u(k+1), u(k))‖`.
    pub k0: usize,
    pub halfwidth: usize,
    /// True iff `u²(k) + u²(k+1) ≥ threshold` on the whole window
    /// (a false outcome is a data point, not an error).
    pub verified: bool,
}

/// Check `u²(k) + u²(k+1) ≥ threshold` for all `|k − k0| ≤ halfwidth`,
/// where `k0` maximizes `u²(k) + u²(k+1)`.
///
/// Windows are clipped at the periodic seam: the transfer recursion is
/// an interior statement, so positions whose pair `(k, k+1)` would wrap
/// are not tested.
pub fn lower_bound_window(u: &[f64], params: WindowParams) -> WindowCheck {
    let n = u.len();
    let pair = |k: usize| u[k] * u[k] + u[k + 1] * u[k + 1];
    let mut k0 = 0usize;
    let mut best = f64::NEG_INFINITY;
    for k in 0..n - 1 {
        let v = pair(k);
        if v > best {
            best = v;
            k0 = k;
        }
    }
    let lo = k0.saturating_sub(params.halfwidth);
    let hi = (k0 + params.halfwidth).min(n - 2);
    let verified = (lo..=hi).all(|k| pair(k) >= params.threshold);
    WindowCheck {
        k0,
        halfwidth: params.halfwidth,
        verified,
    }
}
