//! Paired-difference statistics, their band decomposition, and the
//! margin-variance criteria built on them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::basis::SpectralBasis;
use super::response::{estimate_frequency_response, ShrinkageProfile, SpatialOperator};
use crate::classifier::{forward_noise, DenoiseQuery, Denoiser, MCTrialSet, NoiseSchedule};
use crate::error::{Error, Result};
use crate::grid::TokenGrid;
use crate::rng::SeededRng;

/// Band weight `ω_k(t)` as a function of `(k, t)`.
pub type BandWeight<'a> = &'a (dyn Fn(usize, usize) -> f64 + Sync);

/// `ω_k(t) = 1`.
pub fn uniform_weight(_k: usize, _t: usize) -> f64 {
    1.0
}

/// Residuals `ε − ε_θ` of the true and the alternative class on one shared trial.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDraw {
    pub t: usize,
    pub e_true: TokenGrid,
    pub e_alt: TokenGrid,
}

impl PairedDraw {
    /// `D = ℓ(x, c_alt) − ℓ(x, c_true)`.
    pub fn difference(&self) -> f64 {
        let sq = |g: &TokenGrid| g.data().iter().map(|v| v * v).sum::<f64>();
        sq(&self.e_alt) - sq(&self.e_true)
    }
}

fn residual(pred: &TokenGrid, eps: &TokenGrid) -> Result<TokenGrid> {
    eps.axpby(1.0, pred, -1.0)
}

/// Draws `s` shared trials and records both residuals per trial.
pub fn paired_draws(
    x: &TokenGrid,
    c_true: usize,
    c_alt: usize,
    denoiser: &dyn Denoiser,
    sched: &NoiseSchedule,
    s: usize,
    rng: &mut SeededRng,
) -> Result<Vec<PairedDraw>> {
    for c in [c_true, c_alt] {
        if c >= denoiser.class_count() {
            return Err(Error::config("classes", format!("class {c} outside 0..{}", denoiser.class_count())));
        }
    }
    let trials = MCTrialSet::draw(s, (x.height(), x.width(), x.channels()), sched, rng);
    trials
        .trials()
        .par_iter()
        .map(|trial| {
            let x_t = forward_noise(x, trial.t, &trial.eps, sched)?;
            let query = DenoiseQuery {
                x_t: &x_t,
                t: trial.t,
                alpha_bar: sched.alpha_bar(trial.t)?,
                total_steps: sched.total_steps(),
                class: c_true,
                noise: &trial.eps,
            };
            let p_true = denoiser.predict(&query)?;
            let p_alt = denoiser.predict(&DenoiseQuery { class: c_alt, ..query })?;
            if p_true.plan_fingerprint != p_alt.plan_fingerprint {
                return Err(Error::Audit(format!(
                    "t = {}: classes {c_true} and {c_alt} used different reduction plans",
                    trial.t
                )));
            }
            Ok(PairedDraw {
                t: trial.t,
                e_true: residual(&p_true.eps, &trial.eps)?,
                e_alt: residual(&p_alt.eps, &trial.eps)?,
            })
        })
        .collect()
}

/// Sample mean and unbiased variance.
pub fn mean_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Moments of the paired difference and of its band decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandStats {
    pub trials: usize,
    pub mu_k: Vec<f64>,
    pub sigma2_k: Vec<f64>,
    pub w_k: Vec<f64>,
    /// Sample mean of `D = Σ_k ω_k Δ_k`.
    pub mu: f64,
    /// Unbiased sample variance of `D`.
    pub sigma2: f64,
    /// `Σ_k w_k μ_k`.
    pub band_mu: f64,
    /// `Σ_k w_k² σ_k²`.
    pub band_sigma2: f64,
    /// `Σ_{i≠j} w_i w_j Cov(Δ_i, Δ_j)`.
    pub cross_covariance: f64,
    /// Largest off-diagonal `|corr(Δ_i, Δ_j)|` among bands with nonzero variance.
    pub max_cross_correlation: f64,
}

/// `Δ_k` of one draw, summed over channels.
pub fn band_differences(draw: &PairedDraw, basis: &SpectralBasis) -> Result<Vec<f64>> {
    let alt = basis.project_grid(&draw.e_alt)?;
    let tru = basis.project_grid(&draw.e_true)?;
    let mut delta = vec![0.0; basis.len()];
    for (a, b) in alt.iter().zip(&tru) {
        for (k, d) in delta.iter_mut().enumerate() {
            *d += a[k] * a[k] - b[k] * b[k];
        }
    }
    Ok(delta)
}

pub fn band_stats(draws: &[PairedDraw], basis: &SpectralBasis, weight: BandWeight<'_>) -> Result<BandStats> {
    let s = draws.len();
    if s < 2 {
        return Err(Error::config("trials", format!("{s} trials; variance needs at least 2")));
    }
    let k_count = basis.len();
    let deltas = draws
        .par_iter()
        .map(|d| band_differences(d, basis))
        .collect::<Result<Vec<_>>>()?;
    let mut w_k = vec![0.0; k_count];
    let mut d_values = Vec::with_capacity(s);
    for (draw, delta) in draws.iter().zip(&deltas) {
        let mut d = 0.0;
        for (k, dk) in delta.iter().enumerate() {
            let w = weight(k, draw.t);
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::config("weight", format!("ω_{k}({}) = {w}", draw.t)));
            }
            w_k[k] += w;
            d += w * dk;
        }
        d_values.push(d);
    }
    w_k.iter_mut().for_each(|w| *w /= s as f64);
    let (mu, sigma2) = mean_variance(&d_values);

    let mut mu_k = vec![0.0; k_count];
    for delta in &deltas {
        for (m, d) in mu_k.iter_mut().zip(delta) {
            *m += d;
        }
    }
    mu_k.iter_mut().for_each(|m| *m /= s as f64);
    let mut cov = vec![0.0; k_count * k_count];
    for delta in &deltas {
        for i in 0..k_count {
            let di = delta[i] - mu_k[i];
            for j in i..k_count {
                cov[i * k_count + j] += di * (delta[j] - mu_k[j]);
            }
        }
    }
    for i in 0..k_count {
        for j in i..k_count {
            let v = cov[i * k_count + j] / (s - 1) as f64;
            cov[i * k_count + j] = v;
            cov[j * k_count + i] = v;
        }
    }
    let sigma2_k: Vec<f64> = (0..k_count).map(|k| cov[k * k_count + k].max(0.0)).collect();
    let mut cross_covariance = 0.0;
    let mut max_cross_correlation: f64 = 0.0;
    for i in 0..k_count {
        for j in 0..k_count {
            if i == j {
                continue;
            }
            cross_covariance += w_k[i] * w_k[j] * cov[i * k_count + j];
            let denom = (sigma2_k[i] * sigma2_k[j]).sqrt();
            if denom > 0.0 {
                max_cross_correlation = max_cross_correlation.max((cov[i * k_count + j] / denom).abs());
            }
        }
    }
    let band_mu = w_k.iter().zip(&mu_k).map(|(w, m)| w * m).sum();
    let band_sigma2 = w_k.iter().zip(&sigma2_k).map(|(w, v)| w * w * v).sum();
    Ok(BandStats {
        trials: s,
        mu_k,
        sigma2_k,
        w_k,
        mu,
        sigma2,
        band_mu,
        band_sigma2,
        cross_covariance,
        max_cross_correlation,
    })
}

/// Paired statistics of `c_alt` against `c_true` over `s` fresh shared
/// trials, with uniform band weights.
pub fn paired_diff_stats(
    x: &TokenGrid,
    c_true: usize,
    c_alt: usize,
    denoiser: &dyn Denoiser,
    sched: &NoiseSchedule,
    s: usize,
    rng: &mut SeededRng,
) -> Result<BandStats> {
    paired_diff_stats_weighted(x, c_true, c_alt, denoiser, sched, s, rng, &uniform_weight)
}

#[allow(clippy::too_many_arguments)]
pub fn paired_diff_stats_weighted(
    x: &TokenGrid,
    c_true: usize,
    c_alt: usize,
    denoiser: &dyn Denoiser,
    sched: &NoiseSchedule,
    s: usize,
    rng: &mut SeededRng,
    weight: BandWeight<'_>,
) -> Result<BandStats> {
    if s < 2 {
        return Err(Error::config("trials", format!("{s} trials; variance needs at least 2")));
    }
    let basis = super::dct_basis(x.height(), x.width())?;
    let draws = paired_draws(x, c_true, c_alt, denoiser, sched, s, rng)?;
    band_stats(&draws, &basis, weight)
}

/// `(σ²/S) / (μ² + σ²/S)`.
pub fn cantelli_bound(mu: f64, sigma2: f64, s: usize) -> Result<f64> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::Domain(format!("cantelli bound needs mu > 0, got {mu}")));
    }
    if !(sigma2.is_finite() && sigma2 >= 0.0) {
        return Err(Error::Domain(format!("variance {sigma2} is negative or non-finite")));
    }
    if s == 0 {
        return Err(Error::Domain("trial count must be at least 1".into()));
    }
    let v = sigma2 / s as f64;
    Ok(v / (mu * mu + v))
}

/// Margin-variance comparison before and after a reduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementReport {
    pub mu: f64,
    pub sigma2: f64,
    pub delta_mu: f64,
    pub delta_sigma2: f64,
    pub r: f64,
    pub r_prime: f64,
    pub exact_condition_holds: bool,
    pub first_order_condition_holds: bool,
    pub trials: usize,
    pub cantelli_before: f64,
    pub cantelli_after: f64,
}

/// Evaluates the exact and first-order improvement conditions for
/// `μ′ = μ − Δμ`, `σ′² = σ² − Δσ²`, with Cantelli bounds at `s` trials.
pub fn theorem1_check(mu: f64, sigma2: f64, delta_mu: f64, delta_sigma2: f64, s: usize) -> Result<ImprovementReport> {
    let values = [mu, sigma2, delta_mu, delta_sigma2];
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite argument".into()));
    }
    let mu_p = mu - delta_mu;
    let sigma2_p = sigma2 - delta_sigma2;
    if mu <= 0.0 || mu_p <= 0.0 {
        return Err(Error::Domain(format!("need mu > 0 and mu' > 0, got {mu} and {mu_p}")));
    }
    if sigma2 <= 0.0 || sigma2_p < 0.0 {
        return Err(Error::Domain(format!(
            "need sigma2 > 0 and sigma2' >= 0, got {sigma2} and {sigma2_p}"
        )));
    }
    let lead = 2.0 * sigma2 / mu * delta_mu;
    Ok(ImprovementReport {
        mu,
        sigma2,
        delta_mu,
        delta_sigma2,
        r: sigma2.sqrt() / mu,
        r_prime: sigma2_p.sqrt() / mu_p,
        exact_condition_holds: delta_sigma2 > lead - sigma2 / (mu * mu) * delta_mu * delta_mu,
        first_order_condition_holds: delta_sigma2 > lead,
        trials: s,
        cantelli_before: cantelli_bound(mu, sigma2, s)?,
        cantelli_after: cantelli_bound(mu_p, sigma2_p, s)?,
    })
}

/// `(Σ w_k H_k μ_k, Σ w_k² H_k² σ_k²)`.
pub fn predict_reduced(stats: &BandStats, profile: &ShrinkageProfile) -> Result<(f64, f64)> {
    if profile.len() != stats.mu_k.len() {
        return Err(Error::dim(format!(
            "{} band responses for {} bands",
            profile.len(),
            stats.mu_k.len()
        )));
    }
    let mut mu = 0.0;
    let mut sigma2 = 0.0;
    for (k, h) in profile.response.iter().enumerate() {
        mu += stats.w_k[k] * h * stats.mu_k[k];
        sigma2 += (stats.w_k[k] * h).powi(2) * stats.sigma2_k[k];
    }
    Ok((mu, sigma2))
}

/// Improvement report for the band model under `profile`.
pub fn profile_improvement(stats: &BandStats, profile: &ShrinkageProfile, s: usize) -> Result<ImprovementReport> {
    let (mu_p, sigma2_p) = predict_reduced(stats, profile)?;
    theorem1_check(stats.band_mu, stats.band_sigma2, stats.band_mu - mu_p, stats.band_sigma2 - sigma2_p, s)
}

/// Mean and variance of `D′ = ⟨P(e_alt − e_true), e_alt + e_true⟩`, the
/// paired difference with the operator acting on the class-dependent part.
pub fn simulate_reduced(draws: &[PairedDraw], op: &dyn SpatialOperator) -> Result<(f64, f64)> {
    if draws.len() < 2 {
        return Err(Error::config("trials", "variance needs at least 2 trials"));
    }
    let values = draws
        .par_iter()
        .map(|d| {
            let diff = d.e_alt.axpby(1.0, &d.e_true, -1.0)?;
            let sum = d.e_alt.axpby(1.0, &d.e_true, 1.0)?;
            let reduced = op.apply(&diff)?;
            if !reduced.same_shape(&diff) {
                return Err(Error::dim(format!("{} is not shape-preserving", op.name())));
            }
            Ok(crate::score::dot(reduced.data(), sum.data()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_variance(&values))
}

/// Band-model prediction against direct simulation for one operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionComparison {
    pub operator: String,
    pub predicted_mu: f64,
    pub predicted_sigma2: f64,
    pub simulated_mu: f64,
    pub simulated_sigma2: f64,
    pub mu_relative_error: f64,
    pub sigma2_relative_error: f64,
}

fn relative_error(predicted: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        if predicted == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        ((predicted - reference) / reference).abs()
    }
}

pub fn compare_reduction(
    draws: &[PairedDraw],
    basis: &SpectralBasis,
    op: &dyn SpatialOperator,
) -> Result<ReductionComparison> {
    let stats = band_stats(draws, basis, &uniform_weight)?;
    let profile = estimate_frequency_response(op, basis)?;
    let (predicted_mu, predicted_sigma2) = predict_reduced(&stats, &profile)?;
    let (simulated_mu, simulated_sigma2) = simulate_reduced(draws, op)?;
    Ok(ReductionComparison {
        operator: op.name(),
        predicted_mu,
        predicted_sigma2,
        simulated_mu,
        simulated_sigma2,
        mu_relative_error: relative_error(predicted_mu, simulated_mu),
        sigma2_relative_error: relative_error(predicted_sigma2, simulated_sigma2),
    })
}
