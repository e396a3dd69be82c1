//! Synthetic conditional noise predictors.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::TokenGrid;
use crate::reduce::{
    apply_merge, apply_unmerge, ie_kvd_downsample, nearest_upsample, ungated_merge_plan,
    MatchOptions, ReductionKind, ReductionSpec,
};
use crate::attention::build_merge_plan;
use crate::rng::SeededRng;
use crate::score::ScoringMethod;

/// Everything a noise predictor is handed for one evaluation.
///
/// The synthetic predictors see the injected noise directly; that is what
/// makes their error structure controllable.
#[derive(Debug, Clone, Copy)]
pub struct DenoiseQuery<'a> {
    pub x_t: &'a TokenGrid,
    pub t: usize,
    pub alpha_bar: f64,
    pub total_steps: usize,
    pub class: usize,
    pub noise: &'a TokenGrid,
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub eps: TokenGrid,
    /// Identity of the compression plan applied inside the predictor, if any.
    pub plan_fingerprint: Option<u64>,
}

/// `ε_θ(x_t, c, t)`.
pub trait Denoiser: Sync {
    fn class_count(&self) -> usize;
    fn predict(&self, query: &DenoiseQuery<'_>) -> Result<Prediction>;
}

/// Returns the injected noise exactly under the true class and a constant
/// offset of `penalty` per element otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleDenoiser {
    pub true_class: usize,
    pub class_count: usize,
    pub penalty: f64,
}

impl OracleDenoiser {
    pub fn new(true_class: usize, class_count: usize) -> Result<Self> {
        if true_class >= class_count {
            return Err(Error::config("denoiser.true_class", "outside class range"));
        }
        Ok(Self {
            true_class,
            class_count,
            penalty: 1.0,
        })
    }
}

impl Denoiser for OracleDenoiser {
    fn class_count(&self) -> usize {
        self.class_count
    }

    fn predict(&self, q: &DenoiseQuery<'_>) -> Result<Prediction> {
        let eps = if q.class == self.true_class {
            q.noise.clone()
        } else {
            let data = q.noise.data().iter().map(|v| v + self.penalty).collect();
            TokenGrid::new(q.noise.height(), q.noise.width(), q.noise.channels(), data)?
        };
        Ok(Prediction {
            eps,
            plan_fingerprint: None,
        })
    }
}

/// Token reduction applied to the predictor's hidden state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Compression {
    /// Any [`ReductionSpec`]; merge kinds use `scorer` for gating, `ie_kvd`
    /// downsamples and upsamples back with nearest neighbours.
    Spec {
        spec: ReductionSpec,
        scorer: ScoringMethod,
    },
    /// Similarity-only merging with random per-cell destinations, reseeded
    /// deterministically per timestep.
    Ungated { stride: usize, ratio: f64, seed: u64 },
}

impl Compression {
    pub fn validate(&self) -> Result<()> {
        match self {
            Compression::Spec { spec, .. } => spec.validate(),
            Compression::Ungated { stride, ratio, .. } => {
                if *stride == 0 {
                    return Err(Error::config("compression.stride", "must be positive"));
                }
                if !(0.0..1.0).contains(ratio) {
                    return Err(Error::config("compression.ratio", format!("{ratio} not in [0, 1)")));
                }
                Ok(())
            }
        }
    }

    /// Reduces and restores `x`; the result depends only on `x` and `t`.
    pub fn apply(&self, x: &TokenGrid, t: usize, total_steps: usize) -> Result<(TokenGrid, Option<u64>)> {
        let (h, w) = (x.height(), x.width());
        match self {
            Compression::Spec { spec, .. } if spec.kind == ReductionKind::None => Ok((x.clone(), None)),
            Compression::Spec { spec, .. } if spec.kind == ReductionKind::IeKvd => {
                spec.validate()?;
                // early denoising steps (large t) come first on the trajectory
                let step = total_steps.saturating_sub(t.min(total_steps));
                let alpha = spec.alpha_schedule.at(step, total_steps)?;
                let s = spec.downsample_factor;
                let small = ie_kvd_downsample(x, s, alpha, spec.nearest_anchor)?;
                let mut hasher = Sha256::new();
                hasher.update((s as u64).to_le_bytes());
                hasher.update(alpha.to_bits().to_le_bytes());
                let fp = u64::from_le_bytes(hasher.finalize()[..8].try_into().expect("32-byte digest"));
                Ok((nearest_upsample(&small, s, h, w)?, Some(fp)))
            }
            Compression::Spec { spec, scorer } => {
                let seq = x.to_sequence();
                let plan = build_merge_plan(&seq, spec, *scorer, h, w)?;
                let restored = apply_unmerge(&apply_merge(&seq, &plan)?, &plan)?;
                Ok((restored.into_grid(h, w)?, Some(plan.fingerprint())))
            }
            Compression::Ungated { stride, ratio, seed } => {
                let mut rng = SeededRng::new(*seed).fork(t as u64);
                let plan = ungated_merge_plan(x, *stride, *ratio, &MatchOptions::default(), &mut rng)?;
                let seq = x.to_sequence();
                let restored = apply_unmerge(&apply_merge(&seq, &plan)?, &plan)?;
                Ok((restored.into_grid(h, w)?, Some(plan.fingerprint())))
            }
        }
    }
}

/// Class-mean predictor: `ε̂ = ε + κ·(x̂₀ − μ_c)/scale` with the noise-blind
/// estimate `x̂₀ = x_t/√ᾱ_t`. With `snr_weighting` the correction is further
/// multiplied by `√ᾱ_t`, i.e. `ε̂ = ε + κ·(x_t − √ᾱ_t·μ_c)/scale`, which keeps
/// the error variance bounded as `ᾱ_t → 0`. An optional token reduction acts
/// on `x_t`.
///
/// The noise-dependent part of `x_t` gives every trial its own error, so
/// paired differences have a real variance that shrinks with more trials.
/// Without weighting, the class-dependent part of the residual is the same
/// on every trial, so band differences decorrelate across bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMeansDenoiser {
    means: Vec<TokenGrid>,
    pub kappa: f64,
    pub scale: f64,
    #[serde(default)]
    pub snr_weighting: bool,
    pub compression: Option<Compression>,
}

impl GaussianMeansDenoiser {
    pub fn new(means: Vec<TokenGrid>, kappa: f64, scale: f64) -> Result<Self> {
        if means.is_empty() {
            return Err(Error::config("denoiser.means", "need at least one class"));
        }
        if means.iter().any(|m| !m.same_shape(&means[0])) {
            return Err(Error::dim("class means differ in shape"));
        }
        if !(kappa.is_finite() && scale.is_finite() && scale > 0.0) {
            return Err(Error::config("denoiser", "kappa must be finite and scale positive"));
        }
        Ok(Self {
            means,
            kappa,
            scale,
            snr_weighting: false,
            compression: None,
        })
    }

    /// Random Gaussian templates rescaled so that the closest pair sits
    /// exactly `min_distance` apart.
    pub fn separable(
        class_count: usize,
        shape: (usize, usize, usize),
        min_distance: f64,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if class_count == 0 {
            return Err(Error::config("denoiser.class_count", "must be positive"));
        }
        let (h, w, c) = shape;
        let raw: Vec<TokenGrid> = (0..class_count).map(|_| rng.normal_grid(h, w, c)).collect();
        let mut closest = f64::INFINITY;
        for i in 0..class_count {
            for j in i + 1..class_count {
                closest = closest.min(raw[i].squared_distance(&raw[j])?.sqrt());
            }
        }
        let factor = if closest.is_finite() && closest > 0.0 {
            min_distance / closest
        } else {
            1.0
        };
        let means = raw
            .into_iter()
            .map(|m| m.axpby(factor, &TokenGrid::zeros(h, w, c)?, 0.0))
            .collect::<Result<Vec<_>>>()?;
        Self::new(means, 1.0, 1.0)
    }

    pub fn with_compression(mut self, compression: Compression) -> Result<Self> {
        compression.validate()?;
        self.compression = Some(compression);
        Ok(self)
    }

    pub fn with_snr_weighting(mut self, on: bool) -> Self {
        self.snr_weighting = on;
        self
    }

    pub fn means(&self) -> &[TokenGrid] {
        &self.means
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        let m = &self.means[0];
        (m.height(), m.width(), m.channels())
    }

    /// `μ_class + noise_std·z`.
    pub fn draw_sample(&self, class: usize, noise_std: f64, rng: &mut SeededRng) -> Result<TokenGrid> {
        let mean = self
            .means
            .get(class)
            .ok_or_else(|| Error::config("class", format!("{class} outside class range")))?;
        let (h, w, c) = self.shape();
        mean.axpby(1.0, &rng.normal_grid(h, w, c), noise_std)
    }
}

impl Denoiser for GaussianMeansDenoiser {
    fn class_count(&self) -> usize {
        self.means.len()
    }

    fn predict(&self, q: &DenoiseQuery<'_>) -> Result<Prediction> {
        let mean = self
            .means
            .get(q.class)
            .ok_or_else(|| Error::config("class", format!("{} outside class range", q.class)))?;
        if !(0.0..=1.0).contains(&q.alpha_bar) {
            return Err(Error::Domain(format!("alpha_bar {} outside [0, 1]", q.alpha_bar)));
        }
        // compressing x_t equals compressing x_t/√ᾱ up to scale: plans are
        // scale-invariant and merges are linear
        let (hidden, fp) = match &self.compression {
            Some(c) => c.apply(q.x_t, q.t, q.total_steps)?,
            None => (q.x_t.clone(), None),
        };
        let root = q.alpha_bar.sqrt();
        // gain·(x − √ᾱ·μ) is the weighted form; dividing by √ᾱ undoes the weight
        let mut gain = self.kappa / self.scale;
        if !self.snr_weighting {
            if root == 0.0 {
                return Err(Error::Domain("unweighted gaussian_means predictor needs alpha_bar > 0".into()));
            }
            gain /= root;
        }
        let data = q
            .noise
            .data()
            .iter()
            .zip(hidden.data().iter().zip(mean.data()))
            .map(|(e, (x, m))| e + gain * (x - root * m))
            .collect();
        Ok(Prediction {
            eps: TokenGrid::new(q.noise.height(), q.noise.width(), q.noise.channels(), data)?,
            plan_fingerprint: fp,
        })
    }
}

/// The predictors the harness can build from configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum SyntheticDenoiser {
    Oracle(OracleDenoiser),
    GaussianMeans(GaussianMeansDenoiser),
}

impl Denoiser for SyntheticDenoiser {
    fn class_count(&self) -> usize {
        match self {
            SyntheticDenoiser::Oracle(d) => d.class_count(),
            SyntheticDenoiser::GaussianMeans(d) => d.class_count(),
        }
    }

    fn predict(&self, query: &DenoiseQuery<'_>) -> Result<Prediction> {
        match self {
            SyntheticDenoiser::Oracle(d) => d.predict(query),
            SyntheticDenoiser::GaussianMeans(d) => d.predict(query),
        }
    }
}
