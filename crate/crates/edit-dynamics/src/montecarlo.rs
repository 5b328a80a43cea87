//! Detailed-balance birth/death simulator of episodic group formation.
//!
//! The chain's transition rates are constructed so its stationary law equals
//! the discrete group-size pmf; the simulator is then an independent route to
//! the same spectrum. Episodes are independent walkers with per-episode RNG
//! streams, so parallel and serial runs agree exactly.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::model::{pmf, GroupSpectrum, ModelError, ModelParams, Pmf};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct SimConfig<F: Scalar> {
    pub params: ModelParams<F>,
    pub episodes: u64,
    pub seed: u64,
    /// Absorbing upper bound on group size; defaults to `10 * n_bar`.
    pub n_cap: u32,
    /// Optional extra exponent on the decay, exposing the
    /// `sqrt(nu) * exp(-beta*nu)` variant of the attachment law. The default
    /// of 1.0 keeps the stationary target equal to the pmf.
    pub attachment_exponent: F,
}

impl<F: Scalar> SimConfig<F> {
    pub fn new(params: ModelParams<F>, episodes: u64, seed: u64) -> Self {
        let n_cap = (params.n_bar.to_f64().unwrap_or(8.0) * 10.0).ceil() as u32;
        Self { params, episodes, seed, n_cap: n_cap.max(4), attachment_exponent: F::one() }
    }
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub sizes: Vec<u32>,
    /// Total birth and death steps taken across all episodes.
    pub transitions: u64,
    pub empirical: GroupSpectrum,
}

/// Uniformized birth/death rates on sizes `2..=n_cap`.
///
/// `birth[i]` and `death[i]` hold the rates out of size `i + 2`; detailed
/// balance `birth(N)/death(N+1) = pmf(N+1)/pmf(N)` pins the stationary law
/// to the target, and the maximum total exit rate is scaled to 1.
#[derive(Debug, Clone)]
pub struct RateTable<F: Scalar> {
    pub n_cap: u32,
    pub birth: Vec<F>,
    pub death: Vec<F>,
    pub target: Pmf<F>,
}

pub fn build_chain<F: Scalar>(
    params: &ModelParams<F>,
    n_cap: u32,
) -> Result<RateTable<F>, ModelError> {
    if n_cap <= 2 {
        return Err(ModelError::Domain(format!("n_cap must be > 2, got {n_cap}")));
    }
    // Shrink the cap if the target pmf underflows before reaching it.
    let mut n_cap = n_cap;
    let probe = pmf(params, params.default_n_max().max(n_cap))?;
    while n_cap > 3 && probe.prob(n_cap).to_f64().unwrap_or(0.0) < 1e-280 {
        n_cap -= 1;
    }
    let target = pmf(params, n_cap)?;

    let states = (n_cap - 1) as usize; // sizes 2..=n_cap
    let mut birth = vec![F::zero(); states];
    let mut death = vec![F::zero(); states];
    for n in 2..n_cap {
        let i = (n - 2) as usize;
        let ratio = target.prob(n + 1) / target.prob(n);
        // Metropolis-style split keeps both rates <= 1 while preserving
        // birth/death = ratio exactly.
        birth[i] = if ratio < F::one() { ratio } else { F::one() };
        death[i + 1] = if ratio < F::one() { F::one() } else { F::one() / ratio };
    }
    let max_exit = (0..states)
        .map(|i| birth[i] + death[i])
        .fold(F::zero(), |a, b| if b > a { b } else { a });
    for i in 0..states {
        birth[i] = birth[i] / max_exit;
        death[i] = death[i] / max_exit;
    }
    Ok(RateTable { n_cap, birth, death, target })
}

impl<F: Scalar> RateTable<F> {
    /// One uniformized step from size `n`.
    fn step<R: Rng + ?Sized>(&self, n: u32, rng: &mut R) -> (u32, bool) {
        let i = (n - 2) as usize;
        let u = F::from_f64_lossy(rng.gen::<f64>());
        if u < self.birth[i] {
            (n + 1, true)
        } else if u < self.birth[i] + self.death[i] {
            (n - 1, true)
        } else {
            (n, false)
        }
    }
}

/// Run the configured number of independent episodes and collect the
/// empirical spectrum. Deterministic in `cfg.seed`.
pub fn simulate<F: Scalar>(cfg: &SimConfig<F>) -> Result<SimResult, ModelError> {
    let chain = build_chain(&cfg.params, cfg.n_cap)?;
    let burn_in = 100u64 * chain.n_cap as u64;

    let per_episode: Vec<(u32, u64)> = (0..cfg.episodes)
        .into_par_iter()
        .map(|idx| {
            let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
            rng.set_stream(idx);
            let mut n = 2u32;
            let mut transitions = 0u64;
            for _ in 0..burn_in {
                let (next, moved) = chain.step(n, &mut rng);
                n = next;
                if moved {
                    transitions += 1;
                }
            }
            (n, transitions)
        })
        .collect();

    let sizes: Vec<u32> = per_episode.iter().map(|&(n, _)| n).collect();
    let transitions = per_episode.iter().map(|&(_, t)| t).sum();
    let empirical = GroupSpectrum::from_sizes(sizes.iter().copied());
    Ok(SimResult { sizes, transitions, empirical })
}

/// One row of a beta sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepRow<F: Scalar> {
    pub beta: F,
    pub mode: u32,
    pub mean: f64,
    /// Peak-to-mode ratio `n_bar / mode`.
    pub ratio: f64,
}

/// Simulate once per beta in `[low, high]` with the template's episode count,
/// seed, and n_bar; rows sorted by beta.
pub fn sweep_beta<F: Scalar>(
    low: F,
    high: F,
    step: F,
    template: &SimConfig<F>,
) -> Result<Vec<SweepRow<F>>, ModelError> {
    if !(low > F::zero()) {
        return Err(ModelError::InvalidParams(format!("sweep low must be > 0, got {low}")));
    }
    let mut rows = Vec::new();
    let mut beta = low;
    while beta <= high + step * F::from_f64_lossy(1e-9) {
        let params = ModelParams::new(beta, template.params.n_bar)?;
        let cfg = SimConfig { params, ..template.clone() };
        let result = simulate(&cfg)?;
        let mode = result.empirical.mode().unwrap_or(2);
        let mean = result.empirical.mean();
        rows.push(SweepRow {
            beta,
            mode,
            mean,
            ratio: params.n_bar.to_f64().unwrap_or(f64::NAN) / mode as f64,
        });
        beta = beta + step;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(beta: f64, n_bar: f64) -> ModelParams<f64> {
        ModelParams::new(beta, n_bar).unwrap()
    }

    #[test]
    fn detailed_balance_holds() {
        let p = params(1.0, 8.0);
        let chain = build_chain(&p, 80).unwrap();
        for n in 2..chain.n_cap {
            let i = (n - 2) as usize;
            let lhs = chain.birth[i] / chain.death[i + 1];
            let rhs = chain.target.prob(n + 1) / chain.target.prob(n);
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0), "N={n}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn birth_dominates_below_mode() {
        let p = params(1.0, 8.0);
        let chain = build_chain(&p, 80).unwrap();
        for n in 2..chain.n_cap {
            let i = (n - 2) as usize;
            let ratio = chain.target.prob(n + 1) / chain.target.prob(n);
            assert_eq!(chain.birth[i] > chain.death[i + 1], ratio > 1.0, "N={n}");
        }
    }

    #[test]
    fn smallest_chain() {
        let p = params(1.0, 8.0);
        let chain = build_chain(&p, 3).unwrap();
        assert_eq!(chain.n_cap, 3);
        let ratio = chain.birth[0] / chain.death[1];
        let expect = chain.target.prob(3) / chain.target.prob(2);
        assert!((ratio - expect).abs() < 1e-12);
    }

    #[test]
    fn rejects_tiny_cap() {
        let p = params(1.0, 8.0);
        assert!(build_chain(&p, 2).is_err());
    }

    #[test]
    fn single_episode_in_range() {
        let cfg = SimConfig::new(params(1.0, 8.0), 1, 123);
        let r = simulate(&cfg).unwrap();
        assert_eq!(r.sizes.len(), 1);
        assert!(r.sizes[0] >= 2 && r.sizes[0] <= cfg.n_cap);
    }

    #[test]
    fn identical_seeds_identical_spectra() {
        let cfg = SimConfig::new(params(1.0, 8.0), 2000, 99);
        let a = simulate(&cfg).unwrap();
        let b = simulate(&cfg).unwrap();
        assert_eq!(a.sizes, b.sizes);
        assert_eq!(a.empirical, b.empirical);
    }

    #[test]
    fn stationarity_at_moderate_size() {
        let p = params(1.0, 8.0);
        let cfg = SimConfig::new(p, 10_000, 7);
        let r = simulate(&cfg).unwrap();
        let target = pmf(&p, p.default_n_max()).unwrap();
        let tv = r.empirical.tv_distance(&target);
        assert!(tv < 0.03, "tv distance {tv}");
    }

    #[test]
    fn cap_insensitivity() {
        let p = params(1.0, 8.0);
        let mut cfg = SimConfig::new(p, 20_000, 5);
        cfg.n_cap = 80;
        let a = simulate(&cfg).unwrap();
        cfg.n_cap = 160;
        let b = simulate(&cfg).unwrap();
        assert!((a.empirical.mean() - b.empirical.mean()).abs() < 0.05);
    }

    #[test]
    fn sweep_modes_follow_analytic_mode() {
        let template = SimConfig::new(params(1.0, 8.0), 20_000, 11);
        let rows = sweep_beta(0.875, 1.0, 0.125, &template).unwrap();
        assert_eq!(rows.len(), 2);
        // mode = 1 + n_bar/(4 beta) decreases in beta
        assert!(rows[0].mode >= rows[1].mode);
        assert!(rows[0].mean > rows[1].mean - 0.1);
    }

    #[test]
    fn sweep_single_point() {
        let template = SimConfig::new(params(1.0, 8.0), 500, 3);
        let rows = sweep_beta(1.0, 1.0, 0.1, &template).unwrap();
        assert_eq!(rows.len(), 1);
    }

    #[test]
    fn sweep_rejects_nonpositive_low() {
        let template = SimConfig::new(params(1.0, 8.0), 10, 3);
        assert!(sweep_beta(0.0, 1.0, 0.1, &template).is_err());
    }
}
