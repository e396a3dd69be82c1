//! Experiment configuration: built-in defaults, a TOML file, then
//! command-line overrides, validated as a whole before anything runs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{
    Compression, GaussianMeansDenoiser, NoiseSchedule, OracleDenoiser, PruningPolicy, SmoothTemplates,
    SpikeTemplates, SyntheticDenoiser, DEFAULT_TRAIN_STEPS, SCALED_LINEAR_BETA_END, SCALED_LINEAR_BETA_START,
};
use crate::error::{Error, Result};
use crate::reduce::{AlphaSchedule, ReductionKind, ReductionSpec};
use crate::rng::SeededRng;
use crate::score::ScoringMethod;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Score,
    Merge,
    Kvdown,
    Classify,
    Spectral,
    Bench,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Score => "score",
            ExperimentKind::Merge => "merge",
            ExperimentKind::Kvdown => "kvdown",
            ExperimentKind::Classify => "classify",
            ExperimentKind::Spectral => "spectral",
            ExperimentKind::Bench => "bench",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::config("format", format!("unknown format {other:?}; use csv or json"))),
        }
    }
}

/// What fills the input grid of score/merge/kvdown runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSource {
    #[default]
    Gaussian,
    Spikes,
    Smooth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub source: GridSource,
    /// Gaussian noise added on top of `spikes` and `smooth` grids.
    pub noise: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            height: 8,
            width: 8,
            channels: 4,
            source: GridSource::Gaussian,
            noise: 0.05,
        }
    }
}

impl GridConfig {
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttentionConfig {
    pub key_dim: usize,
    pub heads: usize,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self { key_dim: 2, heads: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub ratios: Vec<f64>,
    pub quantiles: Vec<f64>,
    pub factors: Vec<usize>,
    pub alphas: Vec<f64>,
    /// Scoring methods for `score` runs; empty means the configured scorer.
    pub methods: Vec<ScoringMethod>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            ratios: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
            quantiles: vec![0.25, 0.5, 0.75, 1.0],
            factors: vec![2, 3, 4, 5, 6, 7, 8],
            alphas: vec![0.9],
            methods: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenoiserKind {
    Oracle,
    #[default]
    GaussianMeans,
}

impl DenoiserKind {
    pub fn name(self) -> &'static str {
        match self {
            DenoiserKind::Oracle => "oracle",
            DenoiserKind::GaussianMeans => "gaussian_means",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    /// Random Gaussian templates rescaled to a minimum pairwise distance.
    #[default]
    Separable,
    Spikes,
    Smooth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenoiserConfig {
    pub kind: DenoiserKind,
    pub class_count: usize,
    /// Wrong-class offset of the oracle predictor.
    pub penalty: f64,
    pub templates: TemplateKind,
    pub min_distance: f64,
    pub spikes: SpikeTemplates,
    pub smooth: SmoothTemplates,
    pub kappa: f64,
    pub scale: f64,
    pub snr_weighting: bool,
    /// Standard deviation of the sample noise around a class template.
    pub noise_std: f64,
    pub compression: Option<Compression>,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            kind: DenoiserKind::GaussianMeans,
            class_count: 5,
            penalty: 1.0,
            templates: TemplateKind::Separable,
            min_distance: 10.0,
            spikes: SpikeTemplates::default(),
            smooth: SmoothTemplates::default(),
            kappa: 1.0,
            scale: 1.0,
            snr_weighting: false,
            noise_std: 1.0,
            compression: None,
        }
    }
}

impl DenoiserConfig {
    /// The class-mean predictor for this config; templates come from `rng`.
    pub fn gaussian_means(&self, shape: (usize, usize, usize), rng: &mut SeededRng) -> Result<GaussianMeansDenoiser> {
        let means = match self.templates {
            TemplateKind::Separable => {
                GaussianMeansDenoiser::separable(self.class_count, shape, self.min_distance, rng)?
                    .means()
                    .to_vec()
            }
            TemplateKind::Spikes => self.spikes.generate(self.class_count, shape, rng)?,
            TemplateKind::Smooth => self.smooth.generate(self.class_count, shape, rng)?,
        };
        let mut d = GaussianMeansDenoiser::new(means, self.kappa, self.scale)?.with_snr_weighting(self.snr_weighting);
        if let Some(c) = &self.compression {
            d = d.with_compression(c.clone())?;
        }
        Ok(d)
    }

    /// Oracle predictor whose true class is `label`.
    pub fn oracle(&self, label: usize) -> Result<SyntheticDenoiser> {
        let mut d = OracleDenoiser::new(label, self.class_count)?;
        d.penalty = self.penalty;
        Ok(SyntheticDenoiser::Oracle(d))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            steps: DEFAULT_TRAIN_STEPS,
            beta_start: SCALED_LINEAR_BETA_START,
            beta_end: SCALED_LINEAR_BETA_END,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::scaled_linear(self.steps, self.beta_start, self.beta_end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifyConfig {
    pub samples: usize,
    /// Staged pruning for top-1; otherwise every class gets `trials` trials.
    pub pruning: bool,
    pub policy: PruningPolicy,
    pub trials: usize,
    /// Also score every class without pruning and report mAP.
    pub map: bool,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            samples: 100,
            pruning: true,
            policy: PruningPolicy::default(),
            trials: 20,
            map: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Identity,
    GlobalMean,
    #[default]
    IeKvd,
    /// Merge-then-unmerge with the plan the configured reduction builds on
    /// the sample.
    MergePlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralConfig {
    pub trials: usize,
    pub alt_class: usize,
    pub operator: OperatorKind,
    pub factor: usize,
    pub alpha: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            trials: 1000,
            alt_class: 1,
            operator: OperatorKind::IeKvd,
            factor: 2,
            alpha: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub experiments: Vec<ExperimentKind>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            experiments: vec![
                ExperimentKind::Merge,
                ExperimentKind::Kvdown,
                ExperimentKind::Classify,
                ExperimentKind::Spectral,
            ],
        }
    }
}

fn default_reduction() -> ReductionSpec {
    ReductionSpec::lgtm(0.5, 2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub format: OutputFormat,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub grid: GridConfig,
    pub scoring: ScoringMethod,
    #[serde(default = "default_reduction")]
    pub reduction: ReductionSpec,
    pub attention: AttentionConfig,
    pub sweep: SweepConfig,
    pub schedule: ScheduleConfig,
    pub denoiser: DenoiserConfig,
    pub classify: ClassifyConfig,
    pub spectral: SpectralConfig,
    pub bench: BenchConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::Merge,
            seed: 0,
            format: OutputFormat::Csv,
            out: None,
            threads: None,
            grid: GridConfig::default(),
            scoring: ScoringMethod::LaplacianL1,
            reduction: default_reduction(),
            attention: AttentionConfig::default(),
            sweep: SweepConfig::default(),
            schedule: ScheduleConfig::default(),
            denoiser: DenoiserConfig::default(),
            classify: ClassifyConfig::default(),
            spectral: SpectralConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub kind: Option<ExperimentKind>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub ratio: Option<f64>,
    pub factor: Option<usize>,
    pub alpha: Option<f64>,
    pub method: Option<ScoringMethod>,
    pub threads: Option<usize>,
}

fn bad(field: &str, message: impl Into<String>) -> Error {
    Error::config(field, message)
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| bad("config", e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| bad("config", e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(k) = o.kind {
            self.kind = k;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(p) = &o.out {
            self.out = Some(p.clone());
        }
        if let Some(f) = o.format {
            self.format = f;
        }
        if let Some(r) = o.ratio {
            self.reduction.merge_ratio = r;
            self.sweep.ratios = vec![r];
        }
        if let Some(f) = o.factor {
            self.reduction.downsample_factor = f;
            self.spectral.factor = f;
            self.sweep.factors = vec![f];
        }
        if let Some(a) = o.alpha {
            self.reduction.alpha_schedule = AlphaSchedule::fixed(a);
            self.spectral.alpha = a;
            self.sweep.alphas = vec![a];
        }
        if let Some(m) = o.method {
            self.scoring = m;
            self.sweep.methods = vec![m];
        }
        if let Some(t) = o.threads {
            self.threads = Some(t);
        }
    }

    /// Defaults, then `path` if given, then `overrides`; validated.
    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Hex SHA-256 of everything that can change a metric; output
    /// location, format and thread count are left out.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = None;
        canonical.threads = None;
        canonical.format = OutputFormat::Csv;
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.height == 0 || g.width == 0 || g.channels == 0 {
            return Err(bad("grid", "height, width and channels must be positive"));
        }
        if !(g.noise.is_finite() && g.noise >= 0.0) {
            return Err(bad("grid.noise", "must be finite and nonnegative"));
        }
        if self.threads == Some(0) {
            return Err(bad("threads", "must be positive"));
        }
        if self.attention.key_dim == 0 || self.attention.heads == 0 {
            return Err(bad("attention", "key_dim and heads must be positive"));
        }
        let kinds = match self.kind {
            ExperimentKind::Bench => {
                if self.bench.experiments.is_empty() {
                    return Err(bad("bench.experiments", "nothing to run"));
                }
                if self.bench.experiments.contains(&ExperimentKind::Bench) {
                    return Err(bad("bench.experiments", "bench cannot nest"));
                }
                self.bench.experiments.clone()
            }
            k => vec![k],
        };
        for k in kinds {
            self.validate_kind(k)?;
        }
        Ok(())
    }

    fn validate_kind(&self, kind: ExperimentKind) -> Result<()> {
        let g = &self.grid;
        match kind {
            ExperimentKind::Score => {
                if g.source != GridSource::Gaussian {
                    self.sample_grid(&mut SeededRng::new(self.seed))?;
                }
            }
            ExperimentKind::Merge => {
                let spec = &self.reduction;
                if spec.kind == ReductionKind::IeKvd {
                    return Err(bad("reduction.kind", "merge runs need a merge kind; use kvdown for ie_kvd"));
                }
                let sweep: &[f64] = if spec.kind == ReductionKind::Abm {
                    &self.sweep.quantiles
                } else {
                    &self.sweep.ratios
                };
                if sweep.is_empty() && spec.kind != ReductionKind::None {
                    return Err(bad("sweep", "empty sweep"));
                }
                for &v in sweep {
                    let mut s = spec.clone();
                    s.merge_ratio = v;
                    s.threshold_quantile = v;
                    s.validate()?;
                }
                spec.validate()?;
                if spec.stage_blocks > 1 && self.attention.key_dim * self.attention.heads != g.channels {
                    return Err(bad(
                        "attention",
                        "chained blocks need key_dim * heads equal to grid.channels",
                    ));
                }
                self.sample_grid(&mut SeededRng::new(self.seed))?;
            }
            ExperimentKind::Kvdown => {
                if self.sweep.factors.is_empty() || self.sweep.alphas.is_empty() {
                    return Err(bad("sweep", "kvdown needs factors and alphas"));
                }
                if let Some(&f) = self.sweep.factors.iter().find(|&&f| f < 2) {
                    return Err(bad("sweep.factors", format!("factor {f} below 2")));
                }
                if let Some(&a) = self.sweep.alphas.iter().find(|a| !a.is_finite()) {
                    return Err(bad("sweep.alphas", format!("alpha {a} is not finite")));
                }
                self.sample_grid(&mut SeededRng::new(self.seed))?;
            }
            ExperimentKind::Classify => {
                let d = &self.denoiser;
                if d.class_count == 0 {
                    return Err(bad("denoiser.class_count", "must be positive"));
                }
                let c = &self.classify;
                if c.samples == 0 {
                    return Err(bad("classify.samples", "must be positive"));
                }
                if c.pruning {
                    c.policy.validate()?;
                    if c.policy.keep_list[0] > d.class_count {
                        return Err(bad(
                            "classify.policy.keep_list",
                            format!("keeps {} of {} classes", c.policy.keep_list[0], d.class_count),
                        ));
                    }
                } else if c.trials == 0 {
                    return Err(bad("classify.trials", "must be positive"));
                }
                if d.kind == DenoiserKind::Oracle && d.compression.is_some() {
                    return Err(bad("denoiser.compression", "the oracle predictor takes no compression"));
                }
                self.check_denoiser()?;
            }
            ExperimentKind::Spectral => {
                let d = &self.denoiser;
                if d.kind != DenoiserKind::GaussianMeans {
                    return Err(bad("denoiser.kind", "spectral runs need gaussian_means"));
                }
                if d.class_count < 2 || self.spectral.alt_class == 0 || self.spectral.alt_class >= d.class_count {
                    return Err(bad("spectral.alt_class", "must name a class other than 0"));
                }
                if self.spectral.trials < 2 {
                    return Err(bad("spectral.trials", "variance needs at least 2 trials"));
                }
                match self.spectral.operator {
                    OperatorKind::IeKvd => {
                        if self.spectral.factor < 2 {
                            return Err(bad("spectral.factor", "must be at least 2"));
                        }
                        if !self.spectral.alpha.is_finite() {
                            return Err(bad("spectral.alpha", "must be finite"));
                        }
                    }
                    OperatorKind::MergePlan => {
                        if !self.reduction.kind.is_merge() {
                            return Err(bad("reduction.kind", "merge_plan operator needs a merge kind"));
                        }
                        self.reduction.validate()?;
                    }
                    OperatorKind::Identity | OperatorKind::GlobalMean => {}
                }
                self.check_denoiser()?;
            }
            ExperimentKind::Bench => unreachable!("bench expanded by the caller"),
        }
        Ok(())
    }

    fn check_denoiser(&self) -> Result<()> {
        let d = &self.denoiser;
        for (field, v) in [("denoiser.noise_std", d.noise_std), ("denoiser.penalty", d.penalty)] {
            if !v.is_finite() || v < 0.0 {
                return Err(bad(field, "must be finite and nonnegative"));
            }
        }
        self.schedule.build()?;
        if d.kind == DenoiserKind::GaussianMeans {
            d.gaussian_means(self.grid.shape(), &mut SeededRng::new(self.seed))?;
        }
        Ok(())
    }

    /// The input grid for score/merge/kvdown runs.
    pub fn sample_grid(&self, rng: &mut SeededRng) -> Result<crate::grid::TokenGrid> {
        let (h, w, c) = self.grid.shape();
        let base = match self.grid.source {
            GridSource::Gaussian => return Ok(rng.normal_grid(h, w, c)),
            GridSource::Spikes => SpikeTemplates::default().generate(1, (h, w, c), rng)?,
            GridSource::Smooth => SmoothTemplates::default().generate(1, (h, w, c), rng)?,
        };
        base[0].axpby(1.0, &rng.normal_grid(h, w, c), self.grid.noise)
    }
}
