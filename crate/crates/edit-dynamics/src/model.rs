//! Closed-form group-size distribution, its discrete normalization,
//! maximum-likelihood fitting, and the hierarchy/fission predictions.
//!
//! The law is a square-root-growth, exponential-decay density in the
//! dimensionless variable `nu = 2*beta*(N-1)/n_bar`:
//!
//! ```text
//! psi(nu) = 4/sqrt(pi) * sqrt(nu) * exp(-nu) / n_bar,   N > 1
//! ```
//!
//! As printed the continuous density integrates to `1/beta` over
//! `N in [1, inf)`, so the discrete pmf is explicitly renormalized over its
//! support `N = 2..n_max` and the normalization constant `z` is reported.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;

use crate::scalar::Scalar;

/// Large negative sentinel standing in for `-inf` log-likelihood.
pub const LL_SENTINEL: f64 = -1e30;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("empty spectrum")]
    EmptySpectrum,
    #[error("underdetermined: spectrum has a single group size")]
    Underdetermined,
    #[error("non-convergent series: {0}")]
    NonConvergent(String),
}

/// Parameters of the group-size law.
///
/// `beta` is the dimensionless intolerance-for-contention parameter,
/// `n_bar` the group scale at which contention peaks, and `z` the
/// normalization constant of the discrete pmf over its default support
/// (computed, never free).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams<F: Scalar> {
    pub beta: F,
    pub n_bar: F,
    pub z: F,
}

impl<F: Scalar> ModelParams<F> {
    pub fn new(beta: F, n_bar: F) -> Result<Self, ModelError> {
        if !(beta > F::zero()) || !beta.is_finite() {
            return Err(ModelError::InvalidParams(format!("beta must be > 0, got {beta}")));
        }
        if !(n_bar > F::one()) || !n_bar.is_finite() {
            return Err(ModelError::InvalidParams(format!("n_bar must be > 1, got {n_bar}")));
        }
        let mut p = Self { beta, n_bar, z: F::zero() };
        let n_max = p.default_n_max();
        p.z = (2..=n_max).map(|n| p.psi_density(F::from_usize_lossy(n as usize))).sum();
        Ok(p)
    }

    /// Dimensionless contention variable `nu = 2*beta*(N-1)/n_bar`.
    pub fn nu(&self, n: u32) -> Result<F, ModelError> {
        if n < 1 {
            return Err(ModelError::Domain(format!("group size must be >= 1, got {n}")));
        }
        Ok(self.nu_continuous(F::from_usize_lossy(n as usize)))
    }

    fn nu_continuous(&self, n: F) -> F {
        let two = F::from_f64_lossy(2.0);
        two * self.beta * (n - F::one()) / self.n_bar
    }

    /// Continuous density `psi` evaluated at real group size `n >= 1`.
    pub fn psi_density(&self, n: F) -> F {
        let nu = self.nu_continuous(n);
        if nu <= F::zero() {
            return F::zero();
        }
        let prefactor = F::from_f64_lossy(4.0 / std::f64::consts::PI.sqrt());
        prefactor * nu.sqrt() * (-nu).exp() / self.n_bar
    }

    /// Continuous mode location `N* = 1 + n_bar/(4*beta)` (where `nu = 1/2`).
    pub fn continuous_mode(&self) -> F {
        let four = F::from_f64_lossy(4.0);
        F::one() + self.n_bar / (four * self.beta)
    }

    /// Continuous mean `N = 1 + 3*n_bar/(4*beta)` (from `<nu> = 3/2`).
    pub fn continuous_mean(&self) -> F {
        let three_quarters = F::from_f64_lossy(0.75);
        F::one() + three_quarters * self.n_bar / self.beta
    }

    /// Predicted fission rate `2*beta`, meaningful for `N >> 2*beta`.
    pub fn fission_ratio(&self) -> F {
        F::from_f64_lossy(2.0) * self.beta
    }

    /// Support bound leaving relative tail mass below `TAIL_EPS`.
    pub fn default_n_max(&self) -> u32 {
        // sqrt(nu) exp(-nu) < 1e-13 of total mass once nu > ~40
        let nu_cut = F::from_f64_lossy(40.0);
        let n = F::one() + nu_cut * self.n_bar / (F::from_f64_lossy(2.0) * self.beta);
        (n.to_f64().unwrap_or(f64::MAX).ceil() as u32).max(16)
    }
}

/// Discrete pmf over group sizes `N = 2..=n_max`, renormalized to sum to 1.
#[derive(Debug, Clone)]
pub struct Pmf<F: Scalar> {
    pub beta: F,
    pub n_bar: F,
    /// Normalization constant: sum of the unnormalized density over the support.
    pub z: F,
    pub n_max: u32,
    probs: Vec<F>, // index i holds pmf(i + 2)
    cdf: Vec<F>,
}

/// Discrete pmf of the group-size law over `N = 2..=n_max`.
pub fn pmf<F: Scalar>(params: &ModelParams<F>, n_max: u32) -> Result<Pmf<F>, ModelError> {
    if n_max < 3 {
        return Err(ModelError::Domain(format!("n_max must be >= 3, got {n_max}")));
    }
    let raw: Vec<F> = (2..=n_max)
        .map(|n| params.psi_density(F::from_usize_lossy(n as usize)))
        .collect();
    let z: F = raw.iter().copied().sum();
    if !(z > F::zero()) {
        return Err(ModelError::InvalidParams("density vanishes on support".into()));
    }
    let probs: Vec<F> = raw.into_iter().map(|v| v / z).collect();
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = F::zero();
    for &p in &probs {
        acc = acc + p;
        cdf.push(acc);
    }
    Ok(Pmf { beta: params.beta, n_bar: params.n_bar, z, n_max, probs, cdf })
}

impl<F: Scalar> Pmf<F> {
    /// Probability of group size `n`; zero outside the support.
    pub fn prob(&self, n: u32) -> F {
        if n < 2 || n > self.n_max {
            F::zero()
        } else {
            self.probs[(n - 2) as usize]
        }
    }

    pub fn support(&self) -> impl Iterator<Item = (u32, F)> + '_ {
        self.probs.iter().enumerate().map(|(i, &p)| (i as u32 + 2, p))
    }

    pub fn argmax(&self) -> u32 {
        let mut best = 2u32;
        let mut best_p = self.probs[0];
        for (n, p) in self.support() {
            if p > best_p {
                best_p = p;
                best = n;
            }
        }
        best
    }

    pub fn mean(&self) -> F {
        self.support().map(|(n, p)| F::from_usize_lossy(n as usize) * p).sum()
    }

    /// Inverse-CDF sample of a group size.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u = F::from_f64_lossy(rng.gen::<f64>());
        match self.cdf.partition_point(|&c| c < u) {
            i if i >= self.probs.len() => self.n_max,
            i => i as u32 + 2,
        }
    }
}

/// Normalized histogram of observed episode group sizes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroupSpectrum {
    counts: BTreeMap<u32, u64>,
    total: u64,
}

impl GroupSpectrum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_sizes<I: IntoIterator<Item = u32>>(sizes: I) -> Self {
        let mut s = Self::new();
        for n in sizes {
            s.add(n, 1);
        }
        s
    }

    pub fn add(&mut self, n: u32, count: u64) {
        *self.counts.entry(n).or_insert(0) += count;
        self.total += count;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, n: u32) -> u64 {
        self.counts.get(&n).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.counts.iter().map(|(&n, &c)| (n, c))
    }

    pub fn frequency(&self, n: u32) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.count(n) as f64 / self.total as f64
        }
    }

    pub fn mode(&self) -> Option<u32> {
        self.counts.iter().max_by_key(|(_, &c)| c).map(|(&n, _)| n)
    }

    pub fn mean(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.counts.iter().map(|(&n, &c)| n as f64 * c as f64).sum::<f64>() / self.total as f64
    }

    /// Total mass at `N >= 2`, the part the model describes.
    pub fn group_total(&self) -> u64 {
        self.total - self.count(0) - self.count(1)
    }

    /// Solo episodes (`N = 1`), excluded from fits.
    pub fn solo_count(&self) -> u64 {
        self.count(1)
    }

    /// Total-variation distance to a model pmf, over `N >= 2` frequencies.
    pub fn tv_distance<F: Scalar>(&self, pmf: &Pmf<F>) -> f64 {
        let total = self.group_total() as f64;
        if total == 0.0 {
            return 1.0;
        }
        let hi = self.counts.keys().copied().max().unwrap_or(2).max(pmf.n_max);
        let mut acc = 0.0;
        for n in 2..=hi {
            let emp = self.count(n) as f64 / total;
            let p = pmf.prob(n).to_f64().unwrap_or(0.0);
            acc += (emp - p).abs();
        }
        acc / 2.0
    }
}

/// Log-likelihood of a spectrum under the model, `sum_N count(N) * ln pmf(N)`.
///
/// Mass at `N = 1` is outside the model support and skipped; callers can
/// read the excluded count from [`GroupSpectrum::solo_count`].
pub fn log_likelihood<F: Scalar>(
    spectrum: &GroupSpectrum,
    params: &ModelParams<F>,
) -> Result<F, ModelError> {
    if spectrum.group_total() == 0 {
        return Err(ModelError::EmptySpectrum);
    }
    let n_max = params
        .default_n_max()
        .max(spectrum.counts().map(|(n, _)| n).max().unwrap_or(2) + 1);
    let pmf = pmf(params, n_max)?;
    log_likelihood_under(spectrum, &pmf)
}

fn log_likelihood_under<F: Scalar>(
    spectrum: &GroupSpectrum,
    pmf: &Pmf<F>,
) -> Result<F, ModelError> {
    let floor = F::from_f64_lossy(1e-300);
    let mut acc = F::zero();
    for (n, c) in spectrum.counts() {
        if n < 2 {
            continue;
        }
        let p = pmf.prob(n);
        if p < floor {
            return Ok(F::from_f64_lossy(LL_SENTINEL));
        }
        acc = acc + F::from_usize_lossy(c as usize) * p.ln();
    }
    Ok(acc)
}

/// Fit quality and uncertainty summary accompanying a fitted model.
#[derive(Debug, Clone)]
pub struct FitReport<F: Scalar> {
    pub log_likelihood: F,
    pub chi_square: f64,
    pub chi_square_dof: usize,
    pub p_value: f64,
    /// Profile-likelihood 1-unit interval for beta.
    pub beta_interval: (F, F),
    /// Profile-likelihood 1-unit interval for n_bar.
    pub n_bar_interval: (F, F),
    /// Set when the spectrum carries fewer than 100 grouped episodes.
    pub low_confidence: bool,
    /// Solo (`N = 1`) episodes excluded from the fit.
    pub solo_excluded: u64,
}

const BETA_GRID: (f64, f64, f64) = (0.5, 2.0, 0.01);
const REFINE_TOL: f64 = 1e-4;

/// Default group scale pinning the fit's ridge direction: the contention
/// maximum observed in this domain.
pub const DEFAULT_N_BAR_ANCHOR: f64 = 8.0;

fn grid_values(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

fn ll_at<F: Scalar>(spectrum: &GroupSpectrum, beta: f64, n_bar: f64) -> f64 {
    let params = match ModelParams::<F>::new(F::from_f64_lossy(beta), F::from_f64_lossy(n_bar)) {
        Ok(p) => p,
        Err(_) => return LL_SENTINEL,
    };
    log_likelihood(spectrum, &params)
        .map(|v| v.to_f64().unwrap_or(LL_SENTINEL))
        .unwrap_or(LL_SENTINEL)
}

/// Maximum-likelihood fit of `(beta, n_bar)` to an observed spectrum.
///
/// The law depends on its parameters only through the ratio `2*beta/n_bar`,
/// so the likelihood surface is flat along a scale ridge. The fit pins the
/// scale by holding `n_bar` at the contention-peak anchor
/// ([`DEFAULT_N_BAR_ANCHOR`]) and maximizing over beta: coarse grid search,
/// then step-halving refinement to `1e-4`. Grid ties break toward the
/// lowest beta. Use [`fit_with_scale`] to anchor at a measured contention
/// peak instead.
pub fn fit<F: Scalar>(
    spectrum: &GroupSpectrum,
) -> Result<(ModelParams<F>, FitReport<F>), ModelError> {
    fit_with_scale(spectrum, DEFAULT_N_BAR_ANCHOR)
}

pub fn fit_with_scale<F: Scalar>(
    spectrum: &GroupSpectrum,
    n_bar_anchor: f64,
) -> Result<(ModelParams<F>, FitReport<F>), ModelError> {
    if !(n_bar_anchor > 1.0) {
        return Err(ModelError::InvalidParams(format!(
            "n_bar anchor must be > 1, got {n_bar_anchor}"
        )));
    }
    let grouped: Vec<u32> = spectrum.counts().filter(|&(n, _)| n >= 2).map(|(n, _)| n).collect();
    if grouped.is_empty() {
        return Err(ModelError::EmptySpectrum);
    }
    if grouped.len() < 2 {
        return Err(ModelError::Underdetermined);
    }
    let low_confidence = spectrum.group_total() < 100;

    let betas = grid_values(BETA_GRID.0, BETA_GRID.1, BETA_GRID.2);
    let n_bar = n_bar_anchor;
    let lls: Vec<f64> = betas
        .par_iter()
        .map(|&b| ll_at::<F>(spectrum, b, n_bar))
        .collect();

    let mut best = 0usize;
    for (idx, &ll) in lls.iter().enumerate() {
        if ll > lls[best] {
            best = idx;
        }
    }
    let mut beta = betas[best];

    // Step-halving refinement from the best grid cell.
    let mut step_b = BETA_GRID.2;
    let mut cur = lls[best];
    while step_b > REFINE_TOL {
        let mut moved = false;
        for db in [step_b, -step_b] {
            let cb = (beta + db).max(1e-3);
            let ll = ll_at::<F>(spectrum, cb, n_bar);
            if ll > cur {
                beta = cb;
                cur = ll;
                moved = true;
            }
        }
        if !moved {
            step_b /= 2.0;
        }
    }

    let params = ModelParams::new(F::from_f64_lossy(beta), F::from_f64_lossy(n_bar))?;
    let ll_max = cur;

    // 1-unit likelihood interval for beta from the grid profile; the n_bar
    // interval is the same interval mapped along the ridge at fixed beta
    // (n_bar = 2*beta/c).
    let beta_interval = profile_interval(&betas, &lls, ll_max - 1.0, beta);
    let n_bar_interval = (
        n_bar * beta / beta_interval.1.max(1e-12),
        n_bar * beta / beta_interval.0.max(1e-12),
    );

    let (chi_square, chi_square_dof, p_value) = chi_square_gof(spectrum, &params)?;

    let report = FitReport {
        log_likelihood: F::from_f64_lossy(ll_max),
        chi_square,
        chi_square_dof,
        p_value,
        beta_interval: (F::from_f64_lossy(beta_interval.0), F::from_f64_lossy(beta_interval.1)),
        n_bar_interval: (F::from_f64_lossy(n_bar_interval.0), F::from_f64_lossy(n_bar_interval.1)),
        low_confidence,
        solo_excluded: spectrum.solo_count(),
    };
    Ok((params, report))
}

fn profile_interval(xs: &[f64], profile: &[f64], threshold: f64, center: f64) -> (f64, f64) {
    let mut lo = center;
    let mut hi = center;
    for (i, (&x, &ll)) in xs.iter().zip(profile).enumerate() {
        if ll >= threshold {
            if x < lo {
                // interpolate against the previous sub-threshold point
                lo = if i > 0 && profile[i - 1] < threshold {
                    let t = (threshold - profile[i - 1]) / (ll - profile[i - 1]);
                    xs[i - 1] + t * (x - xs[i - 1])
                } else {
                    x
                };
            }
            if x > hi {
                hi = if i + 1 < xs.len() && profile[i + 1] < threshold {
                    let t = (threshold - profile[i + 1]) / (ll - profile[i + 1]);
                    xs[i + 1] + t * (x - xs[i + 1])
                } else {
                    x
                };
            }
        }
    }
    (lo, hi)
}

/// Chi-square goodness of fit of observed vs expected counts; low-expectation
/// bins are pooled to keep expected counts above 5.
fn chi_square_gof<F: Scalar>(
    spectrum: &GroupSpectrum,
    params: &ModelParams<F>,
) -> Result<(f64, usize, f64), ModelError> {
    let total = spectrum.group_total() as f64;
    let n_hi = spectrum.counts().map(|(n, _)| n).max().unwrap_or(2);
    let pmf = pmf(params, params.default_n_max().max(n_hi + 1))?;

    let mut bins: Vec<(f64, f64)> = Vec::new(); // (observed, expected)
    let mut pending = (0.0, 0.0);
    for n in 2..=pmf.n_max {
        pending.0 += spectrum.count(n) as f64;
        pending.1 += total * pmf.prob(n).to_f64().unwrap_or(0.0);
        if pending.1 >= 5.0 {
            bins.push(pending);
            pending = (0.0, 0.0);
        }
    }
    if pending.1 > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += pending.0;
                last.1 += pending.1;
            }
            None => bins.push(pending),
        }
    }

    let chi2: f64 = bins.iter().map(|&(o, e)| (o - e) * (o - e) / e.max(1e-12)).sum();
    let dof = bins.len().saturating_sub(3).max(1);
    let dist = statrs::distribution::ChiSquared::new(dof as f64)
        .map_err(|e| ModelError::Domain(e.to_string()))?;
    use statrs::distribution::ContinuousCDF;
    let p_value = 1.0 - dist.cdf(chi2);
    Ok((chi2, dof, p_value))
}

/// Hierarchy of characteristic scales generated by iterating the ratio of
/// the contention maximum to the distribution mode.
///
/// Level 1 is the seed; each next level multiplies by
/// `seed_k / (1 + seed_k/(4*beta))`, the current peak-to-mode ratio.
pub fn dunbar_series<F: Scalar>(beta: F, seed: F, levels: u32) -> Result<Vec<F>, ModelError> {
    if !(seed > F::one()) {
        return Err(ModelError::Domain(format!("seed must be > 1, got {seed}")));
    }
    if levels < 1 {
        return Err(ModelError::Domain("levels must be >= 1".into()));
    }
    if !(beta > F::zero()) {
        return Err(ModelError::InvalidParams(format!("beta must be > 0, got {beta}")));
    }
    let four = F::from_f64_lossy(4.0);
    let mut series = Vec::with_capacity(levels as usize);
    let mut current = seed;
    series.push(current);
    for _ in 1..levels {
        let mode = F::one() + current / (four * beta);
        let ratio = current / mode;
        if !(ratio > F::one()) {
            return Err(ModelError::NonConvergent(format!(
                "peak-to-mode ratio {ratio} <= 1 at scale {current}"
            )));
        }
        current = current * ratio;
        series.push(current);
    }
    Ok(series)
}
