//! Experiment drivers. Every random draw comes from a stream forked off the
//! configured seed, and every parallel map is collected in input order, so
//! output depends on the config alone and not on the thread count.

use std::collections::BTreeSet;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{DenoiserKind, ExperimentConfig, ExperimentKind, OperatorKind};
use super::record::ResultRecord;
use crate::attention::{
    attention_forward, attention_with_kvd, build_merge_plan, flop_model, run_stage, AttentionParams, FlopReport,
};
use crate::classifier::{
    adaptive_classify, mean_average_precision, score_classes, top1_accuracy, ClassScoreTable, Denoiser,
    MCTrialSet, NoiseSchedule, SyntheticDenoiser,
};
use crate::error::{Error, Result};
use crate::grid::{TokenGrid, TokenSequence};
use crate::reduce::{apply_merge, apply_unmerge, ReductionKind};
use crate::rng::SeededRng;
use crate::score::score_tokens;
use crate::spectral::{
    band_stats, compare_reduction, dct_basis, estimate_frequency_response, paired_draws, profile_improvement,
    uniform_weight, GlobalMeanOperator, IdentityOperator, KvdOperator, PlanOperator, SpatialOperator,
};

// Fork streams off the config seed.
const STREAM_INPUT: u64 = 0;
const STREAM_PARAMS: u64 = 1;
const STREAM_TEMPLATES: u64 = 2;
const STREAM_SAMPLES: u64 = 3;
const STREAM_TRIALS: u64 = 4;

/// Validates `config`, then runs it on a pool of `config.threads` threads
/// (rayon's default when unset).
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    config.validate()?;
    match config.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::config("threads", e.to_string()))?;
            pool.install(|| dispatch(config))
        }
        None => dispatch(config),
    }
}

fn dispatch(config: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let hash = config.hash();
    match config.kind {
        ExperimentKind::Score => timed(|| run_score(config, &hash)),
        ExperimentKind::Merge => timed(|| run_merge(config, &hash)),
        ExperimentKind::Kvdown => timed(|| run_kvdown(config, &hash)),
        ExperimentKind::Classify => timed(|| run_classify(config, &hash)),
        ExperimentKind::Spectral => timed(|| run_spectral(config, &hash)),
        ExperimentKind::Bench => run_bench(config, &hash),
    }
}

/// Runs `f` and spreads its wall time evenly over the records it returns.
fn timed(f: impl FnOnce() -> Result<Vec<ResultRecord>>) -> Result<Vec<ResultRecord>> {
    let start = Instant::now();
    let mut records = f()?;
    let ms = start.elapsed().as_secs_f64() * 1e3 / records.len().max(1) as f64;
    for r in &mut records {
        r.wall_time_ms = ms;
    }
    Ok(records)
}

fn run_bench(config: &ExperimentConfig, hash: &str) -> Result<Vec<ResultRecord>> {
    let jobs: Vec<ExperimentConfig> = config
        .bench
        .experiments
        .iter()
        .map(|&kind| ExperimentConfig {
            kind,
            ..config.clone()
        })
        .collect();
    let results: Vec<Result<Vec<ResultRecord>>> = jobs.par_iter().map(dispatch).collect();
    let mut out = Vec::new();
    for r in results {
        for mut rec in r? {
            rec.label = format!("bench/{}", rec.label);
            rec.config_hash = hash.to_string();
            out.push(rec);
        }
    }
    Ok(out)
}

fn record(config: &ExperimentConfig, kind: ExperimentKind, label: impl Into<String>, hash: &str) -> ResultRecord {
    ResultRecord::new(kind.name(), label, hash, config.seed)
}

fn input_grid(config: &ExperimentConfig) -> Result<TokenGrid> {
    config.sample_grid(&mut SeededRng::new(config.seed).fork(STREAM_INPUT))
}

fn blocks(config: &ExperimentConfig, count: usize) -> Result<Vec<AttentionParams>> {
    let mut rng = SeededRng::new(config.seed).fork(STREAM_PARAMS);
    (0..count)
        .map(|_| AttentionParams::random(config.grid.channels, config.attention.key_dim, config.attention.heads, &mut rng))
        .collect()
}

fn run_score(config: &ExperimentConfig, hash: &str) -> Result<Vec<ResultRecord>> {
    let grid = input_grid(config)?;
    let methods = if config.sweep.methods.is_empty() {
        vec![config.scoring]
    } else {
        config.sweep.methods.clone()
    };
    methods
        .iter()
        .map(|&m| {
            let map = score_tokens(&grid, m)?;
            let s = map.scores();
            let n = s.len() as f64;
            let mean = s.iter().sum::<f64>() / n;
            let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let mut r = record(config, ExperimentKind::Score, m.name(), hash);
            r.metric("tokens", n)
                .metric("score_mean", mean)
                .metric("score_std", var.sqrt())
                .metric("score_min", s.iter().copied().fold(f64::INFINITY, f64::min))
                .metric("score_max", s.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            r.detail("scores", s.to_vec());
            Ok(r)
        })
        .collect()
}

fn flop_metrics(r: &mut ResultRecord, flops: &FlopReport, full: &FlopReport) {
    r.metric("qk_flops", flops.qk_flops as f64)
        .metric("av_flops", flops.av_flops as f64)
        .metric("softmax_flops", flops.softmax_flops as f64)
        .metric("projection_flops", flops.projection_flops as f64)
        .metric("total_flops", flops.total as f64)
        .metric(
            "attention_flop_ratio",
            flops.attention_flops() as f64 / full.attention_flops() as f64,
        )
        .metric("qk_flop_ratio", flops.qk_flops as f64 / full.qk_flops as f64);
}

fn relative_distance(a: &TokenSequence, b: &TokenSequence) -> f64 {
    let num: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.data().iter().map(|y| y * y).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

fn run_merge(config: &ExperimentConfig, hash: &str) -> Result<Vec<ResultRecord>> {
    let (h, w, _) = config.grid.shape();
    let x = input_grid(config)?.into_sequence();
    let base = &config.reduction;
    let stage = blocks(config, base.stage_blocks.max(1))?;
    let mut full_out = x.clone();
    let mut full_flops = FlopReport::default();
    for p in &stage {
        full_out = attention_forward(&full_out, p)?;
        full_flops.accumulate(&flop_model(x.count(), x.count(), p.model_dim(), p.key_dim(), p.heads()));
    }

    let points: Vec<(String, crate::reduce::ReductionSpec)> = match base.kind {
        ReductionKind::None => vec![("none".to_string(), base.clone())],
        ReductionKind::Abm => config
            .sweep
            .quantiles
            .iter()
            .map(|&q| {
                let mut s = base.clone();
                s.threshold_quantile = q;
                (format!("{} q={q}", base.kind.name()), s)
            })
            .collect(),
        _ => config
            .sweep
            .ratios
            .iter()
            .map(|&r| {
                let mut s = base.clone();
                s.merge_ratio = r;
                (format!("{} r={r}", base.kind.name()), s)
            })
            .collect(),
    };

    points
        .into_iter()
        .map(|(label, spec)| {
            let out = run_stage(&x, &stage, &spec, config.scoring, h, w, 1)?;
            let plan = build_merge_plan(&x, &spec, config.scoring, h, w)?;
            let round_trip = apply_unmerge(&apply_merge(&x, &plan)?, &plan)?;
            let mut r = record(config, ExperimentKind::Merge, label, hash);
            if spec.kind == ReductionKind::Abm {
                r.metric("quantile", spec.threshold_quantile);
            } else if spec.kind != ReductionKind::None {
                r.metric("ratio", spec.merge_ratio);
            }
            r.metric("tokens", x.count() as f64)
                .metric("reduced_tokens", plan.reduced_count() as f64)
                .metric("output_error", relative_distance(&out.output, &full_out))
                .metric("reconstruction_error", relative_distance(&round_trip, &x).powi(2));
            flop_metrics(&mut r, &out.flops, &full_flops);
            Ok(r)
        })
        .collect()
}

fn run_kvdown(config: &ExperimentConfig, hash: &str) -> Result<Vec<ResultRecord>> {
    let (h, w, _) = config.grid.shape();
    let x = input_grid(config)?.into_sequence();
    let params = blocks(config, 1)?.remove(0);
    let n = x.count();
    let full_out = attention_forward(&x, &params)?;
    let full_flops = flop_model(n, n, params.model_dim(), params.key_dim(), params.heads());
    let mut out = Vec::new();
    for &s in &config.sweep.factors {
        for &alpha in &config.sweep.alphas {
            let red = attention_with_kvd(&x, &params, s, alpha, config.reduction.nearest_anchor, h, w)?;
            let mut r = record(config, ExperimentKind::Kvdown, format!("ie_kvd s={s} alpha={alpha}"), hash);
            r.metric("factor", s as f64)
                .metric("alpha", alpha)
                .metric("tokens", n as f64)
                .metric("reduced_tokens", red.reduced_tokens as f64)
                .metric("output_error", relative_distance(&red.output, &full_out));
            flop_metrics(&mut r, &red.flops, &full_flops);
            out.push(r);
        }
    }
    Ok(out)
}

struct SampleOutcome {
    label: usize,
    prediction: usize,
    evaluations: usize,
    full_table: Option<ClassScoreTable>,
}

fn evaluations(table: &ClassScoreTable) -> usize {
    (0..table.class_count()).map(|c| table.trial_count(c)).sum()
}

fn run_classify(config: &ExperimentConfig, hash: &str) -> Result<Vec<ResultRecord>> {
    let d = &config.denoiser;
    let shape = config.grid.shape();
    let sched = config.schedule.build()?;
    let root = SeededRng::new(config.seed);
    let means = match d.kind {
        DenoiserKind::GaussianMeans => Some(d.gaussian_means(shape, &mut root.fork(STREAM_TEMPLATES))?),
        DenoiserKind::Oracle => None,
    };
    let classes: Vec<usize> = (0..d.class_count).collect();
    let c = &config.classify;
    let samples_rng = root.fork(STREAM_SAMPLES);
    let trials_rng = root.fork(STREAM_TRIALS);

    let outcomes: Vec<Result<SampleOutcome>> = (0..c.samples)
        .into_par_iter()
        .map(|i| {
            let mut srng = samples_rng.fork(i as u64);
            let label = srng.int_inclusive(0, d.class_count - 1);
            let (x, owned): (TokenGrid, SyntheticDenoiser) = match &means {
                Some(m) => (m.draw_sample(label, d.noise_std, &mut srng)?, SyntheticDenoiser::GaussianMeans(m.clone())),
                None => (srng.normal_grid(shape.0, shape.1, shape.2), d.oracle(label)?),
            };
            let den: &dyn Denoiser = &owned;
            let mut trng = trials_rng.fork(i as u64);
            let cls = if c.pruning {
                adaptive_classify(&x, &classes, &c.policy, den, &sched, &mut trng)?
            } else {
                let set = MCTrialSet::draw(c.trials, shape, &sched, &mut trng);
                score_classes(&x, &classes, &set, den, &sched)?
            };
            let full_table = if c.map {
                let count = if c.pruning { c.policy.total_trials() } else { c.trials };
                let set = MCTrialSet::draw(count, shape, &sched, &mut trials_rng.fork(i as u64).fork(1));
                Some(score_classes(&x, &classes, &set, den, &sched)?.table)
            } else {
                None
            };
            Ok(SampleOutcome {
                label,
                prediction: cls.prediction,
                evaluations: evaluations(&cls.table),
                full_table,
            })
        })
        .collect();
    let outcomes: Vec<SampleOutcome> = outcomes.into_iter().collect::<Result<_>>()?;

    let labels: Vec<usize> = outcomes.iter().map(|o| o.label).collect();
    let predictions: Vec<usize> = outcomes.iter().map(|o| o.prediction).collect();
    let mode = if c.pruning { "pruned" } else { "full" };
    let mut r = record(config, ExperimentKind::Classify, format!("{mode} {}", d.kind.name()), hash);
    r.metric("samples", c.samples as f64)
        .metric("classes", d.class_count as f64)
        .metric("accuracy", top1_accuracy(&predictions, &labels)?)
        .metric(
            "evaluations",
            outcomes.iter().map(|o| o.evaluations).sum::<usize>() as f64 / c.samples as f64,
        );
    if c.map {
        let tables: Vec<ClassScoreTable> = outcomes.iter().filter_map(|o| o.full_table.clone()).collect();
        let sets: Vec<BTreeSet<usize>> = labels.iter().map(|&l| BTreeSet::from([l])).collect();
        r.metric("map", mean_average_precision(&tables, &sets)?);
    }
    Ok(vec![r])
}

fn spectral_operator(config: &ExperimentConfig, x: &TokenGrid) -> Result<Box<dyn SpatialOperator>> {
    let s = &config.spectral;
    Ok(match s.operator {
        OperatorKind::Identity => Box::new(IdentityOperator),
        OperatorKind::GlobalMean => Box::new(GlobalMeanOperator),
        OperatorKind::IeKvd => Box::new(KvdOperator {
            factor: s.factor,
            alpha: s.alpha,
            anchor: config.reduction.nearest_anchor,
        }),
        OperatorKind::MergePlan => {
            let plan = build_merge_plan(&x.to_sequence(), &config.reduction, config.scoring, x.height(), x.width())?;
            Box::new(PlanOperator { plan })
        }
    })
}

fn run_spectral(config: &ExperimentConfig, hash: &str) -> Result<Vec<ResultRecord>> {
    let d = &config.denoiser;
    let s = &config.spectral;
    let shape = config.grid.shape();
    let sched: NoiseSchedule = config.schedule.build()?;
    let root = SeededRng::new(config.seed);
    let den = SyntheticDenoiser::GaussianMeans(d.gaussian_means(shape, &mut root.fork(STREAM_TEMPLATES))?);
    let x = match &den {
        SyntheticDenoiser::GaussianMeans(m) => m.draw_sample(0, d.noise_std, &mut root.fork(STREAM_SAMPLES))?,
        SyntheticDenoiser::Oracle(_) => unreachable!("validated"),
    };
    let draws = paired_draws(&x, 0, s.alt_class, &den, &sched, s.trials, &mut root.fork(STREAM_TRIALS))?;
    let basis = dct_basis(shape.0, shape.1)?;
    let stats = band_stats(&draws, &basis, &uniform_weight)?;
    let op = spectral_operator(config, &x)?;
    let profile = estimate_frequency_response(op.as_ref(), &basis)?;
    let cmp = compare_reduction(&draws, &basis, op.as_ref())?;

    let mut r = record(config, ExperimentKind::Spectral, cmp.operator.clone(), hash);
    r.metric("trials", s.trials as f64)
        .metric("mu", stats.mu)
        .metric("sigma2", stats.sigma2)
        .metric("band_mu", stats.band_mu)
        .metric("band_sigma2", stats.band_sigma2)
        .metric("cross_covariance", stats.cross_covariance)
        .metric("max_cross_correlation", stats.max_cross_correlation)
        .metric("predicted_mu", cmp.predicted_mu)
        .metric("predicted_sigma2", cmp.predicted_sigma2)
        .metric("simulated_mu", cmp.simulated_mu)
        .metric("simulated_sigma2", cmp.simulated_sigma2)
        .metric("mu_relative_error", cmp.mu_relative_error)
        .metric("sigma2_relative_error", cmp.sigma2_relative_error);
    match profile_improvement(&stats, &profile, s.trials) {
        Ok(rep) => {
            r.metric("delta_mu", rep.delta_mu)
                .metric("delta_sigma2", rep.delta_sigma2)
                .metric("r", rep.r)
                .metric("r_prime", rep.r_prime)
                .metric("exact_condition", f64::from(u8::from(rep.exact_condition_holds)))
                .metric("first_order_condition", f64::from(u8::from(rep.first_order_condition_holds)))
                .metric("cantelli_before", rep.cantelli_before)
                .metric("cantelli_after", rep.cantelli_after);
        }
        Err(e) => log::warn!("spectral: improvement check skipped: {e}"),
    }
    r.detail("mu_k", stats.mu_k.clone())
        .detail("sigma2_k", stats.sigma2_k.clone())
        .detail("w_k", stats.w_k.clone())
        .detail("response", profile.response.clone())
        .detail("leakage", profile.leakage.clone());
    Ok(vec![r])
}
