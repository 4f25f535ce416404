//! Experiment drivers: train the benchmark models, run steering and the
//! baselines, and assemble reports.
//!
//! Every driver takes a serializable config (echoed into the report) and a
//! base seed; repeats and per-dimension runs draw disjoint substreams, so
//! reports are reproducible bit for bit regardless of thread count.

use crate::bench::datasets::{
    chiral_toy_center, gen_chiral_toy_sampler, gen_hypercube_pair_sampler, Dataset2d,
    CHIRAL_TOY_DIM,
};
use crate::bench::metrics::{sliced_w2, success_rate};
use crate::bench::report::BenchmarkReport;
use crate::error::Result;
use crate::model::{Activation, ModelConfig, VelocityModel};
use crate::potentials::{normalized_chiral_volume, Geometry, Potential};
use crate::rng::{self, derive_seed, tag};
use crate::samplers::{
    GaussianMixture1d, GaussianSampler, IndependentPair, PointSampler, SingleCorner, UniformCube,
};
use crate::sde::{NoiseSchedule, ScoreSource};
use crate::steering::{
    fk_sample, importance_sample, multinomial_resample, sample_terminal, EstimateOrder,
    PotentialSchedule, ResampleKind, SteeringConfig,
};
use crate::train::{train_flow, Coupling, TrainConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Fk,
    Is,
}

impl Method {
    fn label(&self) -> &'static str {
        match self {
            Method::Fk => "FK",
            Method::Is => "IS",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypercubePotential {
    Indicator,
    Distance,
}

impl HypercubePotential {
    fn label(&self) -> &'static str {
        match self {
            HypercubePotential::Indicator => "indicator",
            HypercubePotential::Distance => "distance",
        }
    }

    fn build(&self, weight: f64) -> Potential {
        match self {
            HypercubePotential::Indicator => Potential::Indicator { weight },
            HypercubePotential::Distance => Potential::Distance { weight },
        }
    }
}

fn default_hidden() -> Vec<usize> {
    vec![128, 128, 128, 128]
}

fn model_config(hidden: &[usize], score_head: bool) -> ModelConfig {
    ModelConfig {
        hidden: hidden.to_vec(),
        activation: Activation::Silu,
        score_head,
    }
}

// ---------------------------------------------------------------------------
// Hypercube suite
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypercubeBenchConfig {
    pub dims: Vec<usize>,
    pub particles: usize,
    pub n_steps: usize,
    pub resample_every: usize,
    pub repeats: usize,
    pub potentials: Vec<HypercubePotential>,
    pub methods: Vec<Method>,
    pub lambda: f64,
    /// Potential weight w; large enough that exp(-lambda w) < 1e-6 puts the
    /// indicator in the hard-rejection regime.
    pub potential_weight: f64,
    pub corner_std: f64,
    pub sigma_bridge: f64,
    /// Diffusion level during inference (constant schedule), matching the
    /// bridge level used in training.
    pub inference_sigma: f64,
    pub train_batch: usize,
    pub train_steps_base: usize,
    pub train_steps_per_dim: usize,
    pub hidden: Vec<usize>,
    pub n_projections: usize,
    pub reference_samples: usize,
    pub schedule: PotentialSchedule,
    pub seed: u64,
}

impl HypercubeBenchConfig {
    pub fn smoke(seed: u64) -> Self {
        Self {
            dims: vec![2, 4, 6, 8],
            particles: 32,
            n_steps: 50,
            resample_every: 3,
            repeats: 10,
            potentials: vec![HypercubePotential::Indicator, HypercubePotential::Distance],
            methods: vec![Method::Fk, Method::Is],
            lambda: 1.0,
            potential_weight: 16.0,
            corner_std: 0.2,
            sigma_bridge: 2.0,
            inference_sigma: 2.0,
            train_batch: 512,
            train_steps_base: 1000,
            train_steps_per_dim: 375,
            hidden: default_hidden(),
            n_projections: 1024,
            reference_samples: 4096,
            schedule: PotentialSchedule::HarmonicSum,
            seed,
        }
    }

    pub fn paper(seed: u64) -> Self {
        Self {
            train_steps_base: 0,
            train_steps_per_dim: 1000,
            n_projections: 4096,
            ..Self::smoke(seed)
        }
    }

    fn train_steps(&self, d: usize) -> usize {
        self.train_steps_base + self.train_steps_per_dim * d
    }
}

/// Train the bridge-regularized flow+score model for one hypercube dimension.
pub fn train_hypercube_model(cfg: &HypercubeBenchConfig, d: usize) -> Result<VelocityModel> {
    let sampler = gen_hypercube_pair_sampler(d, cfg.corner_std)?;
    let train_cfg = TrainConfig {
        batch_size: cfg.train_batch,
        n_steps: cfg.train_steps(d),
        sigma_bridge: cfg.sigma_bridge,
        seed: derive_seed(cfg.seed, &[tag::TRAIN, d as u64]),
        ..TrainConfig::default()
    };
    let out = train_flow(&sampler, &model_config(&cfg.hidden, true), &train_cfg)?;
    Ok(out.model)
}

/// One steered or importance-sampled batch for the hypercube task.
fn hypercube_run(
    model: &VelocityModel,
    cfg: &HypercubeBenchConfig,
    d: usize,
    method: Method,
    potential: &Potential,
    run_seed: u64,
) -> Result<(Vec<Vec<f64>>, Option<f64>)> {
    let prior = UniformCube {
        dim: d,
        half_width: 1.0,
    };
    let noise = NoiseSchedule::constant(cfg.inference_sigma);
    match method {
        Method::Fk => {
            let steer = SteeringConfig {
                lambda: cfg.lambda,
                schedule: cfg.schedule,
                n_particles: cfg.particles,
                n_steps: cfg.n_steps,
                resample_every: cfg.resample_every,
                estimate: EstimateOrder::OneShot,
                deterministic: false,
                resample_kind: ResampleKind::Multinomial,
            };
            let out = fk_sample(
                model,
                &prior,
                &ScoreSource::Learned,
                &noise,
                potential,
                &steer,
                run_seed,
            )?;
            let ess_mean = out.diagnostics.iter().map(|s| s.ess).sum::<f64>()
                / out.diagnostics.len() as f64;
            Ok((out.samples, Some(ess_mean)))
        }
        Method::Is => {
            let samples = importance_sample(
                model,
                &prior,
                &ScoreSource::Learned,
                &noise,
                potential,
                cfg.lambda,
                cfg.particles,
                cfg.n_steps,
                run_seed,
            )?;
            Ok((samples, None))
        }
    }
}

pub fn run_hypercube_benchmark(cfg: &HypercubeBenchConfig) -> Result<BenchmarkReport> {
    let mut report = BenchmarkReport::new("hypercube", serde_json::to_value(cfg).unwrap());

    let t0 = Instant::now();
    let models: Vec<(usize, VelocityModel)> = cfg
        .dims
        .par_iter()
        .map(|&d| train_hypercube_model(cfg, d).map(|m| (d, m)))
        .collect::<Result<_>>()?;
    report.add_timing("train_all_dims", t0.elapsed().as_secs_f64());

    for (d, model) in &models {
        let d = *d;
        let mut ref_rng = rng::stream(cfg.seed, &[tag::REFERENCE, d as u64]);
        let reference = SingleCorner {
            dim: d,
            corner_std: cfg.corner_std,
        }
        .sample(cfg.reference_samples, &mut ref_rng);

        for (pi, pot_kind) in cfg.potentials.iter().enumerate() {
            let potential = pot_kind.build(cfg.potential_weight);
            let case = format!("d={d}/{}", pot_kind.label());
            for (mi, method) in cfg.methods.iter().enumerate() {
                let row_seed = derive_seed(
                    cfg.seed,
                    &[tag::REPEAT, d as u64, pi as u64, mi as u64],
                );
                let t_run = Instant::now();
                let results: Vec<(f64, f64, Option<f64>)> = (0..cfg.repeats)
                    .into_par_iter()
                    .map(|r| {
                        let run_seed = derive_seed(row_seed, &[r as u64]);
                        let (samples, ess) =
                            hypercube_run(model, cfg, d, *method, &potential, run_seed)?;
                        let succ = success_rate(&samples)?;
                        let w2 = sliced_w2(
                            &samples,
                            &reference,
                            cfg.n_projections,
                            derive_seed(run_seed, &[tag::PROJECTION]),
                        )?;
                        Ok((succ, w2, ess))
                    })
                    .collect::<Result<_>>()?;
                report.add_timing(
                    &format!("{case}/{}", method.label()),
                    t_run.elapsed().as_secs_f64(),
                );

                let succ: Vec<f64> = results.iter().map(|r| r.0).collect();
                let w2: Vec<f64> = results.iter().map(|r| r.1).collect();
                report.add_metric(&case, method.label(), "success_rate", row_seed, &succ);
                report.add_metric(&case, method.label(), "sliced_w2", row_seed, &w2);
                let ess: Vec<f64> = results.iter().filter_map(|r| r.2).collect();
                if !ess.is_empty() {
                    report.add_metric(&case, method.label(), "ess_mean", row_seed, &ess);
                }
            }
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Two-Gaussian mode isolation study
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoGaussianConfig {
    pub centers: [f64; 2],
    pub mixture_std: f64,
    pub particles: usize,
    pub n_steps: usize,
    pub resample_every: usize,
    pub lambda: f64,
    pub potential_weight: f64,
    pub sigma0: f64,
    pub schedule: PotentialSchedule,
    pub train_batch: usize,
    pub train_steps: usize,
    pub hidden: Vec<usize>,
    pub repeats: usize,
    pub seed: u64,
}

impl TwoGaussianConfig {
    pub fn smoke(seed: u64) -> Self {
        Self {
            centers: [-2.0, 2.0],
            mixture_std: 0.3,
            particles: 512,
            n_steps: 50,
            resample_every: 3,
            lambda: 2.0,
            potential_weight: 4.0,
            sigma0: 0.3,
            schedule: PotentialSchedule::HarmonicSum,
            train_batch: 256,
            train_steps: 1500,
            hidden: vec![64, 64, 64],
            repeats: 3,
            seed,
        }
    }

    pub fn paper(seed: u64) -> Self {
        Self {
            train_steps: 4000,
            hidden: default_hidden(),
            ..Self::smoke(seed)
        }
    }
}

pub fn train_two_gaussian_model(cfg: &TwoGaussianConfig) -> Result<VelocityModel> {
    let sampler = IndependentPair::new(
        Box::new(GaussianSampler::standard(1)),
        Box::new(GaussianMixture1d {
            centers: cfg.centers.to_vec(),
            std: cfg.mixture_std,
        }),
    );
    let train_cfg = TrainConfig {
        batch_size: cfg.train_batch,
        n_steps: cfg.train_steps,
        seed: derive_seed(cfg.seed, &[tag::TRAIN]),
        ..TrainConfig::default()
    };
    Ok(train_flow(&sampler, &model_config(&cfg.hidden, false), &train_cfg)?.model)
}

/// One steering run of the two-Gaussian study.
pub struct TwoGaussianRun {
    pub mode_fraction: f64,
    pub distinct_terminal_frac: f64,
    pub distinct_ancestor_frac: f64,
}

pub fn two_gaussian_run(
    model: &VelocityModel,
    cfg: &TwoGaussianConfig,
    deterministic: bool,
    lambda: f64,
    run_seed: u64,
) -> Result<TwoGaussianRun> {
    let prior = GaussianSampler::standard(1);
    let steer = SteeringConfig {
        lambda,
        schedule: cfg.schedule,
        n_particles: cfg.particles,
        n_steps: cfg.n_steps,
        resample_every: cfg.resample_every,
        estimate: EstimateOrder::OneShot,
        deterministic,
        resample_kind: ResampleKind::Multinomial,
    };
    let out = fk_sample(
        model,
        &prior,
        &ScoreSource::analytic_ot(),
        &NoiseSchedule::linear_decay(cfg.sigma0, 0.0),
        &Potential::Distance {
            weight: cfg.potential_weight,
        },
        &steer,
        run_seed,
    )?;
    let s = cfg.particles as f64;
    Ok(TwoGaussianRun {
        mode_fraction: out.samples.iter().filter(|x| x[0] > 0.0).count() as f64 / s,
        distinct_terminal_frac: out.distinct_terminal as f64 / s,
        distinct_ancestor_frac: out.distinct_ancestors as f64 / s,
    })
}

pub fn run_two_gaussian_study(cfg: &TwoGaussianConfig) -> Result<BenchmarkReport> {
    let mut report = BenchmarkReport::new("two_gaussian", serde_json::to_value(cfg).unwrap());
    let t0 = Instant::now();
    let model = train_two_gaussian_model(cfg)?;
    report.add_timing("train", t0.elapsed().as_secs_f64());

    let variants: [(&str, bool, f64); 3] = [
        ("FK", false, cfg.lambda),
        ("FK_deterministic", true, cfg.lambda),
        ("unsteered", false, 0.0),
    ];
    for (label, deterministic, lambda) in variants {
        let row_seed = derive_seed(cfg.seed, &[tag::REPEAT, deterministic as u64, lambda.to_bits()]);
        let runs: Vec<TwoGaussianRun> = (0..cfg.repeats)
            .into_par_iter()
            .map(|r| {
                two_gaussian_run(
                    &model,
                    cfg,
                    deterministic,
                    lambda,
                    derive_seed(row_seed, &[r as u64]),
                )
            })
            .collect::<Result<_>>()?;
        let modes: Vec<f64> = runs.iter().map(|r| r.mode_fraction).collect();
        let dterm: Vec<f64> = runs.iter().map(|r| r.distinct_terminal_frac).collect();
        let danc: Vec<f64> = runs.iter().map(|r| r.distinct_ancestor_frac).collect();
        report.add_metric("1d", label, "mode_fraction", row_seed, &modes);
        report.add_metric("1d", label, "distinct_terminal_frac", row_seed, &dterm);
        report.add_metric("1d", label, "distinct_ancestor_frac", row_seed, &danc);
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// 2D dataset suite
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Cfm,
    Ot,
}

impl ModelKind {
    fn label(&self) -> &'static str {
        match self {
            ModelKind::Cfm => "cfm",
            ModelKind::Ot => "ot",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoDBenchConfig {
    /// (source, target) dataset-name pairs.
    pub pairs: Vec<(String, String)>,
    pub model_kinds: Vec<ModelKind>,
    pub samples_per_batch: usize,
    pub particles: usize,
    pub n_steps: usize,
    pub resample_every: usize,
    pub repeats: usize,
    pub lambda: f64,
    /// The tilt used throughout the suite: a half-plane hinge on this axis.
    pub tilt_axis: usize,
    pub tilt_weight: f64,
    pub train_batch: usize,
    pub train_steps: usize,
    pub hidden: Vec<usize>,
    pub n_projections: usize,
    pub reference_pool: usize,
    pub reference_samples: usize,
    pub include_sanity: bool,
    pub schedule: PotentialSchedule,
    pub seed: u64,
}

impl TwoDBenchConfig {
    pub fn standard_pairs() -> Vec<(String, String)> {
        vec![
            ("circle".into(), "s_curve".into()),
            ("uniform_square".into(), "eight_gaussians".into()),
            ("eight_gaussians".into(), "moons".into()),
        ]
    }

    pub fn smoke(seed: u64) -> Self {
        Self {
            pairs: Self::standard_pairs(),
            model_kinds: vec![ModelKind::Cfm, ModelKind::Ot],
            samples_per_batch: 1024,
            particles: 128,
            n_steps: 40,
            resample_every: 10,
            repeats: 10,
            lambda: 1.0,
            tilt_axis: 1,
            tilt_weight: 4.0,
            train_batch: 256,
            train_steps: 3000,
            hidden: default_hidden(),
            n_projections: 1024,
            reference_pool: 65536,
            reference_samples: 8192,
            include_sanity: true,
            schedule: PotentialSchedule::HarmonicSum,
            seed,
        }
    }

    pub fn paper(seed: u64) -> Self {
        Self {
            train_steps: 8000,
            n_projections: 4096,
            ..Self::smoke(seed)
        }
    }

    fn tilt(&self) -> Potential {
        Potential::AxisDistance {
            axis: self.tilt_axis,
            weight: self.tilt_weight,
        }
    }
}

pub fn make_2d_pair(source: &str, target: &str) -> Result<IndependentPair> {
    Ok(IndependentPair::new(
        Box::new(Dataset2d::new(source)?),
        Box::new(Dataset2d::new(target)?),
    ))
}

pub fn train_2d_model(
    cfg: &TwoDBenchConfig,
    source: &str,
    target: &str,
    kind: ModelKind,
) -> Result<VelocityModel> {
    let sampler = make_2d_pair(source, target)?;
    let train_cfg = TrainConfig {
        batch_size: cfg.train_batch,
        n_steps: cfg.train_steps,
        coupling: match kind {
            ModelKind::Cfm => Coupling::Independent,
            ModelKind::Ot => Coupling::MinibatchOt,
        },
        seed: derive_seed(cfg.seed, &[tag::TRAIN, kind as u64]),
        ..TrainConfig::default()
    };
    Ok(train_flow(&sampler, &model_config(&cfg.hidden, false), &train_cfg)?.model)
}

/// Reference draw from the tilted target `p1(x) exp(-lambda U(x))` by
/// importance resampling a large pool of exact target samples.
pub fn tilted_reference(
    target: &str,
    potential: &Potential,
    lambda: f64,
    pool: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let mut rng = rng::stream(seed, &[tag::REFERENCE]);
    let points = Dataset2d::new(target)?.sample(pool, &mut rng);
    let log_w: Vec<f64> = points
        .iter()
        .map(|x| potential.energy(x).map(|u| -lambda * u))
        .collect::<Result<_>>()?;
    let max_lw = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_w.iter().map(|lw| (lw - max_lw).exp()).collect();
    let mut res_rng = rng::stream(seed, &[tag::RESAMPLE]);
    let idx = multinomial_resample(&weights, &mut res_rng)?;
    Ok(idx.into_iter().take(n).map(|i| points[i].clone()).collect())
}

/// One batch of `samples_per_batch` steered samples assembled from
/// independent particle ensembles.
fn fk_2d_batch(
    model: &VelocityModel,
    cfg: &TwoDBenchConfig,
    source: &str,
    potential: &Potential,
    lambda: f64,
    batch_seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let prior = Dataset2d::new(source)?;
    let n_runs = cfg.samples_per_batch.div_ceil(cfg.particles);
    let steer = SteeringConfig {
        lambda,
        schedule: cfg.schedule,
        n_particles: cfg.particles,
        n_steps: cfg.n_steps,
        resample_every: cfg.resample_every,
        estimate: EstimateOrder::OneShot,
        deterministic: true,
        resample_kind: ResampleKind::Multinomial,
    };
    let mut batch = Vec::with_capacity(cfg.samples_per_batch);
    for run in 0..n_runs {
        let out = fk_sample(
            model,
            &prior,
            &ScoreSource::analytic_ot(),
            &NoiseSchedule::zero(),
            potential,
            &steer,
            derive_seed(batch_seed, &[run as u64]),
        )?;
        batch.extend(out.samples);
    }
    batch.truncate(cfg.samples_per_batch);
    Ok(batch)
}

pub fn run_2d_benchmark(cfg: &TwoDBenchConfig) -> Result<BenchmarkReport> {
    let mut report = BenchmarkReport::new("twod", serde_json::to_value(cfg).unwrap());
    let tilt = cfg.tilt();

    // Train all (pair, kind) models up front, in parallel.
    let jobs: Vec<(usize, ModelKind)> = cfg
        .pairs
        .iter()
        .enumerate()
        .flat_map(|(pi, _)| cfg.model_kinds.iter().map(move |k| (pi, *k)))
        .collect();
    let t0 = Instant::now();
    let models: Vec<((usize, ModelKind), VelocityModel)> = jobs
        .par_iter()
        .map(|&(pi, kind)| {
            let (src, tgt) = &cfg.pairs[pi];
            train_2d_model(cfg, src, tgt, kind).map(|m| ((pi, kind), m))
        })
        .collect::<Result<_>>()?;
    report.add_timing("train_all_models", t0.elapsed().as_secs_f64());

    for ((pi, kind), model) in &models {
        let (src, tgt) = &cfg.pairs[*pi];
        let case = format!("{src}->{tgt}");
        let method = format!("FK_{}", kind.label());

        let ref_seed = derive_seed(cfg.seed, &[tag::REFERENCE, *pi as u64]);
        let tilted = tilted_reference(
            tgt,
            &tilt,
            cfg.lambda,
            cfg.reference_pool,
            cfg.reference_samples,
            ref_seed,
        )?;

        let row_seed = derive_seed(cfg.seed, &[tag::REPEAT, *pi as u64, *kind as u64]);
        let w2s: Vec<f64> = (0..cfg.repeats)
            .into_par_iter()
            .map(|r| {
                let batch_seed = derive_seed(row_seed, &[r as u64]);
                let batch = fk_2d_batch(model, cfg, src, &tilt, cfg.lambda, batch_seed)?;
                sliced_w2(
                    &batch,
                    &tilted,
                    cfg.n_projections,
                    derive_seed(batch_seed, &[tag::PROJECTION]),
                )
            })
            .collect::<Result<_>>()?;
        report.add_metric(&case, &method, "sliced_w2_tilted", row_seed, &w2s);

        if cfg.include_sanity {
            // lambda = 0 run and the plain unsteered model, both against the
            // untilted target.
            let mut ref_rng = rng::stream(ref_seed, &[tag::REFERENCE]);
            let untilted = Dataset2d::new(tgt)?.sample(cfg.reference_samples, &mut ref_rng);

            let sanity_seed = derive_seed(row_seed, &[u64::MAX]);
            let batch = fk_2d_batch(model, cfg, src, &tilt, 0.0, sanity_seed)?;
            let w2_zero = sliced_w2(
                &batch,
                &untilted,
                cfg.n_projections,
                derive_seed(sanity_seed, &[tag::PROJECTION]),
            )?;
            report.add_metric(
                &case,
                &format!("FK_lambda0_{}", kind.label()),
                "sliced_w2_untilted",
                sanity_seed,
                &[w2_zero],
            );

            let prior = Dataset2d::new(src)?;
            let unsteered = sample_terminal(
                model,
                &prior,
                &ScoreSource::analytic_ot(),
                &NoiseSchedule::zero(),
                cfg.samples_per_batch,
                cfg.n_steps,
                derive_seed(sanity_seed, &[1]),
            )?;
            let w2_un = sliced_w2(
                &unsteered,
                &untilted,
                cfg.n_projections,
                derive_seed(sanity_seed, &[2, tag::PROJECTION]),
            )?;
            report.add_metric(
                &case,
                &format!("unsteered_{}", kind.label()),
                "sliced_w2_untilted",
                sanity_seed,
                &[w2_un],
            );
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Chirality steering suite
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChiralBenchConfig {
    pub particles: usize,
    pub n_steps: usize,
    pub resample_every: usize,
    /// Multiplier applied to the tuned temperature.
    pub lambda_scale: f64,
    pub sigma0: f64,
    pub repeats: usize,
    pub tune_samples: usize,
    pub train_batch: usize,
    pub train_steps: usize,
    pub hidden: Vec<usize>,
    pub schedule: PotentialSchedule,
    pub seed: u64,
}

impl ChiralBenchConfig {
    pub fn smoke(seed: u64) -> Self {
        Self {
            particles: 512,
            n_steps: 50,
            resample_every: 3,
            lambda_scale: 4.0,
            sigma0: 0.3,
            repeats: 5,
            tune_samples: 1024,
            train_batch: 256,
            train_steps: 3000,
            hidden: default_hidden(),
            schedule: PotentialSchedule::HarmonicSum,
            seed,
        }
    }

    pub fn paper(seed: u64) -> Self {
        Self {
            train_steps: 8000,
            repeats: 10,
            ..Self::smoke(seed)
        }
    }
}

pub fn train_chiral_model(cfg: &ChiralBenchConfig) -> Result<VelocityModel> {
    let sampler = gen_chiral_toy_sampler();
    let train_cfg = TrainConfig {
        batch_size: cfg.train_batch,
        n_steps: cfg.train_steps,
        seed: derive_seed(cfg.seed, &[tag::TRAIN]),
        ..TrainConfig::default()
    };
    Ok(train_flow(&sampler, &model_config(&cfg.hidden, false), &train_cfg)?.model)
}

/// Fraction of geometries whose normalized volume sign matches the declared
/// handedness of the toy stereocenter.
pub fn correct_sign_fraction(samples: &[Vec<f64>]) -> Result<f64> {
    let center = chiral_toy_center();
    let mut correct = 0usize;
    for flat in samples {
        let g = Geometry::from_flat(flat)?;
        let v = normalized_chiral_volume(
            &g.positions[center.neighbors[0]],
            &g.positions[center.neighbors[1]],
            &g.positions[center.neighbors[2]],
            &g.positions[center.neighbors[3]],
        );
        if let Ok(v) = v {
            if center.handedness.sign() * v < 0.0 {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// Temperature at which the median tilt over wrong-handed unsteered samples
/// is `target` (0.1 by default): `lambda = ln(1/target) / median(U > 0)`.
pub fn tune_lambda(energies: &[f64], target: f64) -> f64 {
    let mut positive: Vec<f64> = energies.iter().copied().filter(|&u| u > 1e-9).collect();
    if positive.is_empty() {
        return 1.0;
    }
    positive.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = positive[positive.len() / 2];
    (1.0 / target).ln() / median
}

pub fn run_chiral_benchmark(cfg: &ChiralBenchConfig) -> Result<BenchmarkReport> {
    let mut config_echo = serde_json::to_value(cfg).unwrap();
    let t0 = Instant::now();
    let model = train_chiral_model(cfg)?;
    let train_secs = t0.elapsed().as_secs_f64();

    let potential = Potential::Chirality {
        centers: vec![chiral_toy_center()],
    };
    let prior = GaussianSampler::standard(CHIRAL_TOY_DIM);
    let noise = NoiseSchedule::linear_decay(cfg.sigma0, 0.0);
    let score = ScoreSource::analytic_ot();

    // Tune the temperature on unsteered samples and log it in the config
    // echo so every run records the value it used.
    let tune = sample_terminal(
        &model,
        &prior,
        &score,
        &noise,
        cfg.tune_samples,
        cfg.n_steps,
        derive_seed(cfg.seed, &[tag::REFERENCE]),
    )?;
    let energies: Vec<f64> = tune
        .iter()
        .map(|x| potential.energy(x))
        .collect::<Result<_>>()?;
    let lambda_tuned = tune_lambda(&energies, 0.1);
    let lambda = lambda_tuned * cfg.lambda_scale;
    config_echo["tuned_lambda"] = serde_json::json!(lambda_tuned);
    config_echo["effective_lambda"] = serde_json::json!(lambda);

    let mut report = BenchmarkReport::new("chiral", config_echo);
    report.add_timing("train", train_secs);

    let steer = SteeringConfig {
        lambda,
        schedule: cfg.schedule,
        n_particles: cfg.particles,
        n_steps: cfg.n_steps,
        resample_every: cfg.resample_every,
        estimate: EstimateOrder::OneShot,
        deterministic: false,
        resample_kind: ResampleKind::Multinomial,
    };

    let variants: [(&str, Option<f64>); 3] = [
        ("FK", Some(lambda)),
        ("FK_lambda0", Some(0.0)),
        ("unsteered", None),
    ];
    for (label, lam) in variants {
        let row_seed = derive_seed(cfg.seed, &[tag::REPEAT, lam.map_or(0, |l| l.to_bits())]);
        let fractions: Vec<f64> = (0..cfg.repeats)
            .into_par_iter()
            .map(|r| {
                let run_seed = derive_seed(row_seed, &[r as u64]);
                let samples = match lam {
                    Some(l) => {
                        fk_sample(
                            &model,
                            &prior,
                            &score,
                            &noise,
                            &potential,
                            &SteeringConfig {
                                lambda: l,
                                ..steer.clone()
                            },
                            run_seed,
                        )?
                        .samples
                    }
                    None => sample_terminal(
                        &model,
                        &prior,
                        &score,
                        &noise,
                        cfg.particles,
                        cfg.n_steps,
                        run_seed,
                    )?,
                };
                correct_sign_fraction(&samples)
            })
            .collect::<Result<_>>()?;
        report.add_metric("toy", label, "correct_sign_fraction", row_seed, &fractions);
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Marginal-preservation probe (used by the acceptance suite and CLI checks)
// ---------------------------------------------------------------------------

/// Compare SDE and ODE terminal batches: returns
/// `(w2(sde, ode), w2(ode, ode'))` for independent prior draws.
pub fn marginal_preservation_probe<M: crate::model::VelocityField + ?Sized>(
    model: &M,
    prior: &dyn PointSampler,
    score_source: &ScoreSource,
    noise: &NoiseSchedule,
    n: usize,
    n_steps: usize,
    n_proj: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let draw = |tag_val: u64| -> Result<Vec<Vec<f64>>> {
        let mut rng = rng::stream(seed, &[tag::INIT, tag_val]);
        Ok(prior.sample(n, &mut rng))
    };
    let ode_a = crate::ode::flow_terminal(model, &draw(0)?, n_steps)?;
    let ode_b = crate::ode::flow_terminal(model, &draw(1)?, n_steps)?;
    let sde = crate::sde::integrate_sde(
        model,
        score_source,
        noise,
        &draw(2)?,
        n_steps,
        derive_seed(seed, &[3]),
    )?;
    let w2_sde = sliced_w2(&sde, &ode_a, n_proj, derive_seed(seed, &[4]))?;
    let w2_floor = sliced_w2(&ode_b, &ode_a, n_proj, derive_seed(seed, &[5]))?;
    Ok((w2_sde, w2_floor))
}

/// Convenience used by the CLI `sample` command.
pub fn unsteered_terminal(
    model: &VelocityModel,
    prior: &dyn PointSampler,
    score_source: &ScoreSource,
    noise: &NoiseSchedule,
    n: usize,
    n_steps: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    sample_terminal(model, prior, score_source, noise, n, n_steps, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_two_gaussian(seed: u64) -> TwoGaussianConfig {
        TwoGaussianConfig {
            particles: 64,
            n_steps: 20,
            train_steps: 300,
            train_batch: 64,
            hidden: vec![24, 24],
            repeats: 2,
            ..TwoGaussianConfig::smoke(seed)
        }
    }

    #[test]
    fn two_gaussian_study_produces_rows() {
        let cfg = tiny_two_gaussian(5);
        let mut report = run_two_gaussian_study(&cfg).unwrap();
        assert!(report.median_of("1d", "FK", "mode_fraction").is_some());
        assert!(report
            .median_of("1d", "unsteered", "distinct_terminal_frac")
            .is_some());
        let csv = report.to_csv();
        assert!(csv.lines().count() > 6);
    }

    #[test]
    fn reports_reproduce_bit_exactly() {
        let cfg = tiny_two_gaussian(9);
        let a = run_two_gaussian_study(&cfg).unwrap().to_csv();
        let b = run_two_gaussian_study(&cfg).unwrap().to_csv();
        assert_eq!(a, b);
    }

    #[test]
    fn tune_lambda_hits_target() {
        let energies = vec![0.0, 0.0, 0.4, 0.4, 0.4, 0.8];
        let lambda = tune_lambda(&energies, 0.1);
        assert!(((-lambda * 0.4).exp() - 0.1).abs() < 1e-12);
        assert_eq!(tune_lambda(&[0.0, 0.0], 0.1), 1.0);
    }

    #[test]
    fn tilted_reference_prefers_upper_half_plane() {
        let tilt = Potential::AxisDistance {
            axis: 1,
            weight: 4.0,
        };
        let samples = tilted_reference("moons", &tilt, 1.0, 20000, 4000, 3).unwrap();
        let upper = samples.iter().filter(|p| p[1] >= 0.0).count() as f64 / 4000.0;
        let mut rng = rng::stream(3, &[tag::DATA]);
        let raw = Dataset2d::new("moons").unwrap().sample(4000, &mut rng);
        let raw_upper = raw.iter().filter(|p| p[1] >= 0.0).count() as f64 / 4000.0;
        assert!(
            upper > raw_upper + 0.1,
            "tilt did not shift mass up: {upper} vs {raw_upper}"
        );
    }
}
