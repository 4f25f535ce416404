//! Feynman-Kac particle steering over flow and SDE inference.
//!
//! A population of particles is propagated through the model; at resampling
//! events each particle is weighted by a potential built from cheap terminal
//! reward estimates and the population is resampled multinomially. Along any
//! surviving path the product of emitted weights telescopes to
//! `exp(-lambda U(x_final))`, so the population targets the terminal law
//! tilted by the energy `U`.
//!
//! Weights are handled in log space with max subtraction before
//! exponentiation; `lambda * U` overflows `exp` long before it loses float
//! precision.

use crate::error::{CoreError, Result};
use crate::model::VelocityField;
use crate::ode::{check_finite, euler_step};
use crate::potentials::Potential;
use crate::rng::{self, tag};
use crate::samplers::PointSampler;
use crate::sde::{batch_drift, integrate_sde, NoiseSchedule, ScoreSource};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// How the terminal tilt `exp(-lambda U)` is distributed across resampling
/// events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialSchedule {
    /// Weight by the change in estimated reward since the previous event.
    Difference,
    /// Weight by the running maximum of estimated rewards, with a terminal
    /// correction restoring the product condition.
    Max,
    /// Weight by the running sum, with the same terminal correction.
    Sum,
    /// Sum over rewards pre-scaled by `1 / ((L+1-l) H_L)`, damping early
    /// (inaccurate) estimates and sharpening late ones.
    HarmonicSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateOrder {
    /// Evaluate the energy at the current state.
    Zeroth,
    /// Single Euler extrapolation with the cached velocity.
    OneShot,
    /// Curvature-corrected extrapolation; valid only across ODE steps.
    SecondOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleKind {
    Multinomial,
    /// Optional low-variance alternative, off by default.
    Systematic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SteeringConfig {
    pub lambda: f64,
    pub schedule: PotentialSchedule,
    /// Particle count S.
    pub n_particles: usize,
    /// Integration steps K over t in [0, 1].
    pub n_steps: usize,
    /// Resample after every this many propagation steps; a final event at
    /// t = 1 always closes the run.
    pub resample_every: usize,
    pub estimate: EstimateOrder,
    /// Skip diffusion and drift correction entirely.
    pub deterministic: bool,
    pub resample_kind: ResampleKind,
}

impl SteeringConfig {
    pub fn new(lambda: f64, n_particles: usize, n_steps: usize) -> Self {
        Self {
            lambda,
            schedule: PotentialSchedule::HarmonicSum,
            n_particles,
            n_steps,
            resample_every: 3,
            estimate: EstimateOrder::OneShot,
            deterministic: false,
            resample_kind: ResampleKind::Multinomial,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(CoreError::InvalidConfig("n_particles must be >= 1".into()));
        }
        if self.n_steps == 0 {
            return Err(CoreError::InvalidConfig("n_steps must be >= 1".into()));
        }
        if self.resample_every == 0 || self.resample_every > self.n_steps {
            return Err(CoreError::InvalidConfig(
                "resample_every must lie in [1, n_steps]".into(),
            ));
        }
        if !self.lambda.is_finite() {
            return Err(CoreError::InvalidConfig("lambda must be finite".into()));
        }
        Ok(())
    }
}

/// Full horizon one-shot estimate: `y = x + (1 - t) v`.
pub fn one_shot_terminal_estimate(x: &[f64], v: &[f64], t: f64) -> Vec<f64> {
    one_shot_with_horizon(x, v, 1.0 - t)
}

/// One-shot estimate with an explicit residual horizon.
pub fn one_shot_with_horizon(x: &[f64], v: &[f64], horizon: f64) -> Vec<f64> {
    x.iter().zip(v).map(|(xi, vi)| xi + horizon * vi).collect()
}

/// Second-order estimate
/// `x + (1-t) v + (1-t)^2 / (2 (t - t_prev)) (v - v_prev)`.
///
/// The curvature term is only meaningful when the step from `t_prev` to `t`
/// was a plain ODE step; `prev_step_was_ode = false` is a contract violation.
pub fn second_order_terminal_estimate(
    x: &[f64],
    v: &[f64],
    v_prev: &[f64],
    t: f64,
    t_prev: f64,
    prev_step_was_ode: bool,
) -> Result<Vec<f64>> {
    if !prev_step_was_ode {
        return Err(CoreError::DiffusiveSecondOrder);
    }
    if !(t_prev < t) {
        return Err(CoreError::InvalidConfig(format!(
            "second-order estimate needs t_prev < t, got {t_prev} >= {t}"
        )));
    }
    let h = 1.0 - t;
    let curv = h * h / (2.0 * (t - t_prev));
    Ok(x.iter()
        .zip(v.iter().zip(v_prev))
        .map(|(xi, (vi, vp))| xi + h * vi + curv * (vi - vp))
        .collect())
}

/// Log of the potential `G` emitted at one resampling event for one particle.
///
/// `rewards` is the particle's reward history including the current event
/// (the last entry), with one entry per event so far. `event_index` is the
/// 0-based event counter, `total_events` the planned total L.
/// `prev_cum_log_g` is the sum of the particle's previously emitted log
/// weights; the terminal correction of the max/sum/harmonic schedules uses
/// it to restore the product condition exactly.
pub fn schedule_log_weight(
    kind: PotentialSchedule,
    lambda: f64,
    rewards: &[f64],
    event_index: usize,
    total_events: usize,
    prev_cum_log_g: f64,
    final_energy: Option<f64>,
) -> Result<f64> {
    if rewards.is_empty() {
        return Err(CoreError::InvalidConfig(
            "reward history must include the current event".into(),
        ));
    }
    let r_cur = *rewards.last().unwrap();
    let is_final = event_index + 1 == total_events;
    if is_final != final_energy.is_some() {
        return Err(CoreError::InvalidConfig(
            "final_energy must be provided exactly at the last event".into(),
        ));
    }

    let log_g = match kind {
        PotentialSchedule::Difference => {
            let r_prev = if rewards.len() >= 2 {
                rewards[rewards.len() - 2]
            } else {
                0.0
            };
            -lambda * (r_cur - r_prev)
        }
        PotentialSchedule::Max => {
            if let Some(u) = final_energy {
                -lambda * u - prev_cum_log_g
            } else {
                let m = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                -lambda * m
            }
        }
        PotentialSchedule::Sum => {
            if let Some(u) = final_energy {
                -lambda * u - prev_cum_log_g
            } else {
                -lambda * rewards.iter().sum::<f64>()
            }
        }
        PotentialSchedule::HarmonicSum => {
            if let Some(u) = final_energy {
                -lambda * u - prev_cum_log_g
            } else {
                let h_l: f64 = (1..=total_events).map(|j| 1.0 / j as f64).sum();
                let scaled: f64 = rewards
                    .iter()
                    .enumerate()
                    .map(|(j, r)| r / ((total_events - j) as f64 * h_l))
                    .sum();
                -lambda * scaled
            }
        }
    };
    if log_g.is_nan() {
        return Err(CoreError::DegenerateEnsemble("NaN schedule weight".into()));
    }
    Ok(log_g)
}

/// The potential value `G` itself.
pub fn schedule_weight(
    kind: PotentialSchedule,
    lambda: f64,
    rewards: &[f64],
    event_index: usize,
    total_events: usize,
    prev_cum_log_g: f64,
    final_energy: Option<f64>,
) -> Result<f64> {
    Ok(schedule_log_weight(
        kind,
        lambda,
        rewards,
        event_index,
        total_events,
        prev_cum_log_g,
        final_energy,
    )?
    .exp())
}

fn validate_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(CoreError::EmptyBatch);
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(CoreError::DegenerateEnsemble(
            "non-finite or negative resampling weight".into(),
        ));
    }
    if weights.iter().all(|&w| w == 0.0) {
        return Err(CoreError::DegenerateEnsemble("all weights zero".into()));
    }
    Ok(())
}

/// Draw `weights.len()` categorical indices proportional to the weights.
pub fn multinomial_resample(weights: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    validate_weights(weights)?;
    let mut cumulative = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for &w in weights {
        acc += w;
        cumulative.push(acc);
    }
    let total = acc;
    let n = weights.len();
    let indices = (0..n)
        .map(|_| {
            let u: f64 = rng.gen_range(0.0..total);
            match cumulative.binary_search_by(|c| c.partial_cmp(&u).unwrap()) {
                Ok(i) | Err(i) => i.min(n - 1),
            }
        })
        .collect();
    Ok(indices)
}

/// Systematic resampling: a single uniform offset with evenly spaced probes.
pub fn systematic_resample(weights: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    validate_weights(weights)?;
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    let step = total / n as f64;
    let offset: f64 = rng.gen_range(0.0..step);
    let mut indices = Vec::with_capacity(n);
    let mut acc = weights[0];
    let mut i = 0;
    for k in 0..n {
        let probe = offset + k as f64 * step;
        while acc < probe && i + 1 < n {
            i += 1;
            acc += weights[i];
        }
        indices.push(i);
    }
    Ok(indices)
}

/// `(sum w)^2 / sum w^2`, the standard degeneracy diagnostic in `[1, S]`.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    s * s / s2
}

/// Per-event diagnostics row.
#[derive(Debug, Clone, Serialize)]
pub struct StepDiagnostics {
    /// Propagation step index (1-based: the event fires after this step).
    pub step: usize,
    pub t: f64,
    pub ess: f64,
    /// Distinct initial ancestors among survivors after the resample.
    pub distinct_ancestors: usize,
    pub reward_min: f64,
    pub reward_median: f64,
    pub reward_max: f64,
}

/// Particle population state carried through a steering run.
pub struct ParticleEnsemble {
    pub states: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    /// Per-particle `(t, reward)` pairs, one per resampling event.
    pub reward_history: Vec<Vec<(f64, f64)>>,
    pub u_prev: Vec<f64>,
    /// Sum of emitted log weights along each particle's surviving path.
    pub cum_log_g: Vec<f64>,
    /// Resampling lineage: element 0 is the initial ancestor slot.
    pub ancestry: Vec<Vec<usize>>,
    /// Base seed from which per-particle substreams are derived.
    pub seed: u64,
}

impl ParticleEnsemble {
    fn init(states: Vec<Vec<f64>>, velocities: Vec<Vec<f64>>, seed: u64) -> Self {
        let s = states.len();
        Self {
            states,
            velocities,
            reward_history: vec![Vec::new(); s],
            u_prev: vec![0.0; s],
            cum_log_g: vec![0.0; s],
            ancestry: (0..s).map(|i| vec![i]).collect(),
            seed,
        }
    }

    fn reindex(&mut self, indices: &[usize]) {
        self.states = indices.iter().map(|&i| self.states[i].clone()).collect();
        self.velocities = indices.iter().map(|&i| self.velocities[i].clone()).collect();
        self.reward_history = indices
            .iter()
            .map(|&i| self.reward_history[i].clone())
            .collect();
        self.u_prev = indices.iter().map(|&i| self.u_prev[i]).collect();
        self.cum_log_g = indices.iter().map(|&i| self.cum_log_g[i]).collect();
        self.ancestry = indices
            .iter()
            .map(|&i| {
                let mut a = self.ancestry[i].clone();
                a.push(i);
                a
            })
            .collect();
    }

    pub fn distinct_ancestors(&self) -> usize {
        let mut roots: Vec<usize> = self.ancestry.iter().map(|a| a[0]).collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }
}

/// Steering output: terminal states plus the diagnostics the benchmark
/// drivers and telescoping checks consume.
pub struct FkOutput {
    pub samples: Vec<Vec<f64>>,
    pub diagnostics: Vec<StepDiagnostics>,
    /// Per-particle sum of emitted log weights along its surviving path.
    pub cum_log_weight: Vec<f64>,
    /// Terminal energy `U(x_final)` per particle.
    pub terminal_energy: Vec<f64>,
    /// Sum of `cum_log_weight`, a cheap reproducibility checksum.
    pub weight_product_checksum: f64,
    pub distinct_ancestors: usize,
    pub distinct_terminal: usize,
}

fn median_of(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Count exactly-distinct states by their bit patterns.
fn distinct_states(states: &[Vec<f64>]) -> usize {
    let mut keys: Vec<Vec<u64>> = states
        .iter()
        .map(|x| x.iter().map(|v| v.to_bits()).collect())
        .collect();
    keys.sort();
    keys.dedup();
    keys.len()
}

/// Run the steering loop: propagate, estimate terminal rewards, weight per
/// the configured schedule, resample, repeat. A final event at t = 1 always
/// closes the run so the emitted weights telescope to
/// `exp(-lambda U(x_final))` for every schedule.
pub fn fk_sample<M: VelocityField + ?Sized, P: PointSampler + ?Sized>(
    model: &M,
    prior: &P,
    score_source: &ScoreSource,
    noise: &NoiseSchedule,
    potential: &Potential,
    cfg: &SteeringConfig,
    seed: u64,
) -> Result<FkOutput> {
    cfg.validate()?;
    noise.validate()?;
    potential.validate()?;
    if prior.dim() != model.data_dim() {
        return Err(CoreError::DimensionMismatch {
            expected: model.data_dim(),
            got: prior.dim(),
        });
    }

    let s = cfg.n_particles;
    let k_steps = cfg.n_steps;
    let dt = 1.0 / k_steps as f64;

    // Planned resampling events: after every `resample_every`-th step, plus
    // the closing event at t = 1.
    let event_steps: Vec<usize> = (1..=k_steps)
        .filter(|k| k % cfg.resample_every == 0 || *k == k_steps)
        .collect();
    let total_events = event_steps.len();

    if cfg.estimate == EstimateOrder::SecondOrder && !cfg.deterministic && !noise.is_zero() {
        return Err(CoreError::DiffusiveSecondOrder);
    }

    let mut init_rng = rng::stream(seed, &[tag::INIT]);
    let states = prior.sample(s, &mut init_rng);
    check_finite(&states, 0)?;
    let velocities = model.velocity_batch(&states, 0.0)?;
    let mut ens = ParticleEnsemble::init(states, velocities, seed);
    let mut diagnostics = Vec::with_capacity(total_events);
    let mut event_index = 0usize;

    for k in 0..k_steps {
        let t = k as f64 * dt;
        let sigma_t = if cfg.deterministic { 0.0 } else { noise.sigma(t) };

        // Propagate with the velocities cached at (x, t); the drift
        // correction re-derives the score from them (analytic) or evaluates
        // the learned head at the pre-step states.
        let drift = if sigma_t == 0.0 {
            ens.velocities.clone()
        } else {
            batch_drift_from_cached(model, score_source, &ens.states, &ens.velocities, t, sigma_t)?
        };
        let prev_velocities = std::mem::take(&mut ens.velocities);
        let prev_t = t;
        let prev_step_diffusive = sigma_t > 0.0;

        for i in 0..s {
            ens.states[i] = if sigma_t == 0.0 {
                euler_step(&ens.states[i], &drift[i], dt)
            } else {
                let mut prng = rng::stream(seed, &[tag::DIFFUSION, i as u64, k as u64]);
                crate::sde::euler_maruyama_step(&ens.states[i], &drift[i], sigma_t, dt, &mut prng)
            };
        }
        check_finite(&ens.states, k + 1)?;

        let t_next = (k + 1) as f64 * dt;
        // Recompute velocities at the new states; the next step needs them
        // anyway, so the reward estimate reuses them for free.
        ens.velocities = model.velocity_batch(&ens.states, t_next.min(1.0 - f64::EPSILON))?;

        if event_index < total_events && k + 1 == event_steps[event_index] {
            let is_final = k + 1 == k_steps;
            let horizon = 1.0 - t_next;

            let mut rewards = Vec::with_capacity(s);
            for i in 0..s {
                let y = match cfg.estimate {
                    EstimateOrder::Zeroth => ens.states[i].clone(),
                    EstimateOrder::OneShot => {
                        one_shot_with_horizon(&ens.states[i], &ens.velocities[i], horizon)
                    }
                    EstimateOrder::SecondOrder => second_order_terminal_estimate(
                        &ens.states[i],
                        &ens.velocities[i],
                        &prev_velocities[i],
                        t_next,
                        prev_t,
                        !prev_step_diffusive,
                    )?,
                };
                rewards.push(potential.energy(&y)?);
            }

            let mut log_weights = Vec::with_capacity(s);
            for i in 0..s {
                ens.reward_history[i].push((t_next, rewards[i]));
                let history: Vec<f64> = ens.reward_history[i].iter().map(|(_, r)| *r).collect();
                let lg = schedule_log_weight(
                    cfg.schedule,
                    cfg.lambda,
                    &history,
                    event_index,
                    total_events,
                    ens.cum_log_g[i],
                    if is_final { Some(rewards[i]) } else { None },
                )?;
                ens.cum_log_g[i] += lg;
                ens.u_prev[i] = rewards[i];
                log_weights.push(lg);
            }

            // Max-subtraction before exponentiation.
            let max_lw = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !max_lw.is_finite() {
                return Err(CoreError::DegenerateEnsemble(
                    "all log weights are -inf or NaN".into(),
                ));
            }
            let weights: Vec<f64> = log_weights.iter().map(|lw| (lw - max_lw).exp()).collect();
            validate_weights(&weights)?;
            let ess = effective_sample_size(&weights);

            let mut res_rng = rng::stream(seed, &[tag::RESAMPLE, event_index as u64]);
            let indices = match cfg.resample_kind {
                ResampleKind::Multinomial => multinomial_resample(&weights, &mut res_rng)?,
                ResampleKind::Systematic => systematic_resample(&weights, &mut res_rng)?,
            };
            ens.reindex(&indices);

            diagnostics.push(StepDiagnostics {
                step: k + 1,
                t: t_next,
                ess,
                distinct_ancestors: ens.distinct_ancestors(),
                reward_min: rewards.iter().copied().fold(f64::INFINITY, f64::min),
                reward_median: median_of(rewards.clone()),
                reward_max: rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            });
            event_index += 1;
        }
    }

    let terminal_energy: Vec<f64> = ens
        .states
        .iter()
        .map(|x| potential.energy(x))
        .collect::<Result<_>>()?;
    let checksum = ens.cum_log_g.iter().sum();
    Ok(FkOutput {
        distinct_ancestors: ens.distinct_ancestors(),
        distinct_terminal: distinct_states(&ens.states),
        samples: ens.states,
        diagnostics,
        cum_log_weight: ens.cum_log_g,
        terminal_energy,
        weight_product_checksum: checksum,
    })
}

/// Corrected drift reusing already-computed velocities. The learned score
/// costs one extra head evaluation at the pre-step states.
fn batch_drift_from_cached<M: VelocityField + ?Sized>(
    model: &M,
    score_source: &ScoreSource,
    xs: &[Vec<f64>],
    vs: &[Vec<f64>],
    t: f64,
    sigma_t: f64,
) -> Result<Vec<Vec<f64>>> {
    match score_source {
        ScoreSource::AnalyticGaussian { schedule } => {
            let tc = t.clamp(crate::sde::SCORE_TIME_EPS, 1.0 - crate::sde::SCORE_TIME_EPS);
            xs.iter()
                .zip(vs)
                .map(|(x, v)| {
                    let score = crate::sde::gaussian_score_from_velocity(x, v, tc, schedule)?;
                    Ok(crate::sde::corrected_drift(v, &score, sigma_t))
                })
                .collect()
        }
        ScoreSource::Learned => batch_drift(model, score_source, xs, t, sigma_t),
    }
}

/// Importance-sampling baseline: unsteered terminal samples weighted by
/// `exp(-lambda U)` and resampled once.
pub fn importance_sample<M: VelocityField + ?Sized, P: PointSampler + ?Sized>(
    model: &M,
    prior: &P,
    score_source: &ScoreSource,
    noise: &NoiseSchedule,
    potential: &Potential,
    lambda: f64,
    n: usize,
    n_steps: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(CoreError::InvalidConfig("n must be >= 1".into()));
    }
    let terminal = sample_terminal(model, prior, score_source, noise, n, n_steps, seed)?;
    let log_w: Vec<f64> = terminal
        .iter()
        .map(|x| potential.energy(x).map(|u| -lambda * u))
        .collect::<Result<_>>()?;
    let max_lw = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max_lw.is_finite() {
        return Err(CoreError::DegenerateEnsemble("all weights vanish".into()));
    }
    let weights: Vec<f64> = log_w.iter().map(|lw| (lw - max_lw).exp()).collect();
    let mut res_rng = rng::stream(seed, &[tag::RESAMPLE, u64::MAX]);
    let indices = multinomial_resample(&weights, &mut res_rng)?;
    Ok(indices.into_iter().map(|i| terminal[i].clone()).collect())
}

/// Unsteered terminal samples through the SDE (or the ODE when the noise is
/// zero).
pub fn sample_terminal<M: VelocityField + ?Sized, P: PointSampler + ?Sized>(
    model: &M,
    prior: &P,
    score_source: &ScoreSource,
    noise: &NoiseSchedule,
    n: usize,
    n_steps: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let mut init_rng = rng::stream(seed, &[tag::INIT]);
    let x0 = prior.sample(n, &mut init_rng);
    integrate_sde(model, score_source, noise, &x0, n_steps, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::GaussianPathField;
    use crate::rng::{stream, tag};
    use crate::samplers::GaussianSampler;

    #[test]
    fn one_shot_values() {
        assert_eq!(one_shot_terminal_estimate(&[1.0, 2.0], &[9.0, 9.0], 1.0), vec![1.0, 2.0]);
        assert_eq!(one_shot_terminal_estimate(&[0.0, 0.0], &[3.0, 3.0], 0.0), vec![3.0, 3.0]);
        assert_eq!(one_shot_terminal_estimate(&[0.0, 0.0], &[2.0, 2.0], 0.5), vec![1.0, 1.0]);
    }

    #[test]
    fn second_order_values() {
        // equal velocities reduce to the one-shot estimate
        let x = [0.5, -0.5];
        let v = [1.0, 2.0];
        let got = second_order_terminal_estimate(&x, &v, &v, 0.5, 0.25, true).unwrap();
        assert_eq!(got, one_shot_terminal_estimate(&x, &v, 0.5));

        // zero horizon returns the state
        let got = second_order_terminal_estimate(&x, &v, &[0.0, 0.0], 1.0, 0.75, true).unwrap();
        assert_eq!(got, x.to_vec());

        // hand arithmetic: x=0, v=2, v_prev=0, t=0.5, t_prev=0.25
        let got = second_order_terminal_estimate(&[0.0], &[2.0], &[0.0], 0.5, 0.25, true).unwrap();
        assert!((got[0] - 2.0).abs() < 1e-15);

        assert!(matches!(
            second_order_terminal_estimate(&[0.0], &[1.0], &[1.0], 0.5, 0.25, false),
            Err(CoreError::DiffusiveSecondOrder)
        ));
    }

    #[test]
    fn zero_lambda_gives_unit_weights() {
        for kind in [
            PotentialSchedule::Difference,
            PotentialSchedule::Max,
            PotentialSchedule::Sum,
            PotentialSchedule::HarmonicSum,
        ] {
            let g = schedule_weight(kind, 0.0, &[3.0, 1.0], 1, 3, 0.0, None).unwrap();
            assert_eq!(g, 1.0);
            let g = schedule_weight(kind, 0.0, &[3.0, 1.0, 0.5], 2, 3, 0.0, Some(0.5)).unwrap();
            assert_eq!(g, 1.0);
        }
    }

    // Every schedule's emitted log weights must sum to -lambda * U(final)
    // along a path, with the terminal correction where the schedule needs it.
    #[test]
    fn telescoping_product_condition() {
        let mut rng = stream(6, &[tag::DATA]);
        for kind in [
            PotentialSchedule::Difference,
            PotentialSchedule::Max,
            PotentialSchedule::Sum,
            PotentialSchedule::HarmonicSum,
        ] {
            for _ in 0..50 {
                let lambda = 1.7;
                let total = 5;
                let rewards: Vec<f64> = (0..total).map(|_| rng.gen_range(0.0..4.0)).collect();
                let final_u = rewards[total - 1];
                let mut cum = 0.0;
                for e in 0..total {
                    let hist = &rewards[..=e];
                    let lg = schedule_log_weight(
                        kind,
                        lambda,
                        hist,
                        e,
                        total,
                        cum,
                        if e + 1 == total { Some(final_u) } else { None },
                    )
                    .unwrap();
                    cum += lg;
                }
                assert!(
                    (cum + lambda * final_u).abs() < 1e-9,
                    "{kind:?}: sum of log G = {cum}, want {}",
                    -lambda * final_u
                );
            }
        }
    }

    #[test]
    fn resample_degenerate_cases() {
        let mut rng = stream(1, &[tag::RESAMPLE]);
        assert!(multinomial_resample(&[0.0, 0.0], &mut rng).is_err());
        assert!(multinomial_resample(&[1.0, f64::NAN], &mut rng).is_err());
        assert!(multinomial_resample(&[], &mut rng).is_err());

        let idx = multinomial_resample(&[0.0, 5.0, 0.0], &mut rng).unwrap();
        assert!(idx.iter().all(|&i| i == 1));

        let idx = multinomial_resample(&[2.5], &mut rng).unwrap();
        assert_eq!(idx, vec![0]);
    }

    #[test]
    fn resample_is_deterministic_given_stream() {
        let w = vec![0.2, 0.5, 0.3, 1.0];
        let a = multinomial_resample(&w, &mut stream(9, &[tag::RESAMPLE, 0])).unwrap();
        let b = multinomial_resample(&w, &mut stream(9, &[tag::RESAMPLE, 0])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ess_values() {
        assert_eq!(effective_sample_size(&[0.5; 8]), 8.0);
        assert_eq!(effective_sample_size(&[0.0, 3.0, 0.0]), 1.0);
        assert!((effective_sample_size(&[1.0, 1.0, 2.0]) - 16.0 / 6.0).abs() < 1e-12);
    }

    fn mode_potential() -> Potential {
        Potential::Distance { weight: 4.0 }
    }

    // Steering an analytic standard-normal path toward the positive half
    // line concentrates the ensemble there; lambda = 0 leaves it symmetric.
    // The hinge tilt exp(-lambda w relu(-x)) keeps a boundary layer of mass
    // ~phi(0)/(lambda w) below zero, so lambda w must be large for a sharp
    // threshold.
    #[test]
    fn steering_isolates_half_line() {
        let field = GaussianPathField::new(vec![0.0]);
        let prior = GaussianSampler::standard(1);
        let cfg = SteeringConfig::new(8.0, 128, 30);
        let out = fk_sample(
            &field,
            &prior,
            &ScoreSource::analytic_ot(),
            &NoiseSchedule::default_decay(),
            &mode_potential(),
            &cfg,
            17,
        )
        .unwrap();
        let frac_pos = out.samples.iter().filter(|x| x[0] >= 0.0).count() as f64 / 128.0;
        assert!(frac_pos > 0.9, "positive fraction {frac_pos}");
        assert_eq!(out.diagnostics.len(), 10);

        let neutral = fk_sample(
            &field,
            &prior,
            &ScoreSource::analytic_ot(),
            &NoiseSchedule::default_decay(),
            &mode_potential(),
            &SteeringConfig {
                lambda: 0.0,
                ..cfg
            },
            17,
        )
        .unwrap();
        let frac_pos = neutral.samples.iter().filter(|x| x[0] >= 0.0).count() as f64 / 128.0;
        assert!((frac_pos - 0.5).abs() < 0.15, "neutral fraction {frac_pos}");
    }

    #[test]
    fn telescoping_holds_along_survivor_paths() {
        let field = GaussianPathField::new(vec![0.0]);
        let prior = GaussianSampler::standard(1);
        for schedule in [
            PotentialSchedule::Difference,
            PotentialSchedule::Max,
            PotentialSchedule::Sum,
            PotentialSchedule::HarmonicSum,
        ] {
            let cfg = SteeringConfig {
                schedule,
                ..SteeringConfig::new(1.3, 32, 20)
            };
            let out = fk_sample(
                &field,
                &prior,
                &ScoreSource::analytic_ot(),
                &NoiseSchedule::default_decay(),
                &mode_potential(),
                &cfg,
                5,
            )
            .unwrap();
            for (lw, u) in out.cum_log_weight.iter().zip(&out.terminal_energy) {
                assert!(
                    (lw + cfg.lambda * u).abs() < 1e-9,
                    "{schedule:?}: log product {lw} vs -lambda U {}",
                    -cfg.lambda * u
                );
            }
        }
    }

    #[test]
    fn deterministic_runs_reproduce() {
        let field = GaussianPathField::new(vec![1.0]);
        let prior = GaussianSampler::standard(1);
        let cfg = SteeringConfig::new(2.0, 64, 25);
        let run = |seed| {
            fk_sample(
                &field,
                &prior,
                &ScoreSource::analytic_ot(),
                &NoiseSchedule::default_decay(),
                &mode_potential(),
                &cfg,
                seed,
            )
            .unwrap()
        };
        let a = run(3);
        let b = run(3);
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.weight_product_checksum, b.weight_product_checksum);
        let c = run(4);
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn deterministic_flag_collapses_ancestry() {
        let field = GaussianPathField::new(vec![0.0]);
        let prior = GaussianSampler::standard(1);
        let cfg = SteeringConfig {
            deterministic: true,
            ..SteeringConfig::new(3.0, 64, 30)
        };
        let out = fk_sample(
            &field,
            &prior,
            &ScoreSource::analytic_ot(),
            &NoiseSchedule::default_decay(),
            &mode_potential(),
            &cfg,
            11,
        )
        .unwrap();
        // resampling without diffusion only ever merges paths
        let counts: Vec<usize> = out.diagnostics.iter().map(|d| d.distinct_ancestors).collect();
        for w in counts.windows(2) {
            assert!(w[1] <= w[0], "ancestor count increased: {counts:?}");
        }
        assert!(out.distinct_ancestors < 64);
    }

    #[test]
    fn second_order_rejected_on_diffusive_runs() {
        let field = GaussianPathField::new(vec![0.0]);
        let prior = GaussianSampler::standard(1);
        let cfg = SteeringConfig {
            estimate: EstimateOrder::SecondOrder,
            ..SteeringConfig::new(1.0, 8, 10)
        };
        assert!(matches!(
            fk_sample(
                &field,
                &prior,
                &ScoreSource::analytic_ot(),
                &NoiseSchedule::default_decay(),
                &mode_potential(),
                &cfg,
                1,
            ),
            Err(CoreError::DiffusiveSecondOrder)
        ));
        // but fine when deterministic
        let cfg = SteeringConfig {
            deterministic: true,
            ..cfg
        };
        assert!(fk_sample(
            &field,
            &prior,
            &ScoreSource::analytic_ot(),
            &NoiseSchedule::default_decay(),
            &mode_potential(),
            &cfg,
            1,
        )
        .is_ok());
    }

    #[test]
    fn importance_sampling_point_mass() {
        // a point-mass proposal returns the same point regardless of U
        let field = ConstantZeroField { d: 1 };
        let prior = GaussianSampler::new(vec![2.0], 0.0);
        let out = importance_sample(
            &field,
            &prior,
            &ScoreSource::analytic_ot(),
            &NoiseSchedule::zero(),
            &mode_potential(),
            5.0,
            16,
            10,
            7,
        )
        .unwrap();
        assert!(out.iter().all(|x| (x[0] - 2.0).abs() < 1e-12));
    }

    struct ConstantZeroField {
        d: usize,
    }

    impl crate::model::VelocityField for ConstantZeroField {
        fn data_dim(&self) -> usize {
            self.d
        }

        fn velocity_batch(&self, xs: &[Vec<f64>], _t: f64) -> crate::error::Result<Vec<Vec<f64>>> {
            Ok(vec![vec![0.0; self.d]; xs.len()])
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = SteeringConfig::new(1.0, 4, 10);
        cfg.resample_every = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = SteeringConfig::new(1.0, 4, 10);
        cfg.resample_every = 11;
        assert!(cfg.validate().is_err());
        let mut cfg = SteeringConfig::new(1.0, 0, 10);
        assert!(cfg.validate().is_err());
        cfg = SteeringConfig::new(f64::INFINITY, 4, 10);
        assert!(cfg.validate().is_err());
    }
}
