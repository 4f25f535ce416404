//! Regression training for velocity (and optional score) networks.
//!
//! Each step draws a fresh batch of `(x0, x1)` pairs, optionally re-pairs
//! them by exact minibatch OT, samples one conditional-path point per pair
//! and takes an Adam step on the combined squared-residual loss. All
//! randomness flows through substreams of the config seed, so identical
//! configs produce bit-identical weights.

use crate::coupling::{minibatch_ot_pairing, OT_PAIRING_CAP};
use crate::error::{CoreError, Result};
use crate::model::{ModelConfig, ParamSet, VelocityModel};
use crate::path::{sample_conditional_path, PathSample};
use crate::rng::{self, tag};
use crate::schedule::ScheduleParams;
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Source of training couples `(x0, x1)`.
pub trait PairSampler: Sync {
    fn dim(&self) -> usize;

    /// Draw `n` source points and `n` target points.
    fn sample_pairs(
        &self,
        n: usize,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> (Vec<Vec<f64>>, Vec<Vec<f64>>);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    Independent,
    MinibatchOt,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub n_steps: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Bridge noise level `sigma_b`; zero disables the bridge and the score
    /// targets.
    pub sigma_bridge: f64,
    /// Half-open margin of the time-sampling interval, applied when
    /// `sigma_bridge > 0` (the bridge variance vanishes at the endpoints).
    pub time_eps: f64,
    pub coupling: Coupling,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            n_steps: 2000,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            sigma_bridge: 0.0,
            time_eps: 1e-3,
            coupling: Coupling::Independent,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.n_steps == 0 {
            return Err(CoreError::InvalidConfig("counts must be positive".into()));
        }
        if !(self.time_eps > 0.0 && self.time_eps < 0.5) {
            return Err(CoreError::InvalidConfig("time_eps must lie in (0, 0.5)".into()));
        }
        if self.sigma_bridge < 0.0 {
            return Err(CoreError::InvalidConfig("sigma_bridge must be >= 0".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(CoreError::InvalidConfig("learning_rate must be > 0".into()));
        }
        if self.coupling == Coupling::MinibatchOt && self.batch_size > OT_PAIRING_CAP {
            return Err(CoreError::InvalidConfig(format!(
                "minibatch OT batch {} exceeds exact-assignment cap {}",
                self.batch_size, OT_PAIRING_CAP
            )));
        }
        Ok(())
    }
}

pub struct TrainResult {
    pub model: VelocityModel,
    /// Combined loss per step.
    pub loss_trace: Vec<f64>,
}

struct Adam {
    m: ParamSet,
    v: ParamSet,
    step: usize,
}

impl Adam {
    fn new(params: &ParamSet) -> Self {
        Self {
            m: ParamSet::zeros_like(params),
            v: ParamSet::zeros_like(params),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut ParamSet, grads: &ParamSet, cfg: &TrainConfig) {
        self.step += 1;
        let b1 = cfg.adam_beta1;
        let b2 = cfg.adam_beta2;
        let bc1 = 1.0 - b1.powi(self.step as i32);
        let bc2 = 1.0 - b2.powi(self.step as i32);
        let lr = cfg.learning_rate;
        let eps = cfg.adam_eps;

        let apply = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };

        for i in 0..params.weights.len() {
            let g = &grads.weights[i];
            let m = &mut self.m.weights[i];
            let v = &mut self.v.weights[i];
            for ((p, &gg), (mm, vv)) in params.weights[i]
                .iter_mut()
                .zip(g.iter())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                apply(p, gg, mm, vv);
            }
        }
        for i in 0..params.biases.len() {
            let g = &grads.biases[i];
            let m = &mut self.m.biases[i];
            let v = &mut self.v.biases[i];
            for ((p, &gg), (mm, vv)) in params.biases[i]
                .iter_mut()
                .zip(g.iter())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                apply(p, gg, mm, vv);
            }
        }
    }
}

/// Train a velocity model (optionally with a score head) against conditional
/// path targets. Aborts with diagnostics when the loss stops being finite.
pub fn train_flow<S: PairSampler + ?Sized>(
    sampler: &S,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    cfg.validate()?;
    model_cfg.validate()?;
    if model_cfg.score_head && cfg.sigma_bridge == 0.0 {
        return Err(CoreError::InvalidConfig(
            "score head requires sigma_bridge > 0 for its regression targets".into(),
        ));
    }
    let d = sampler.dim();
    let sched = ScheduleParams::optimal_transport();

    let mut init_rng = rng::stream(cfg.seed, &[tag::INIT]);
    let mut model = VelocityModel::init(d, model_cfg, &mut init_rng)?;
    let mut adam = Adam::new(&model.params);
    let mut loss_trace = Vec::with_capacity(cfg.n_steps);

    let (t_lo, t_hi) = if cfg.sigma_bridge > 0.0 {
        (cfg.time_eps, 1.0 - cfg.time_eps)
    } else {
        (0.0, 1.0)
    };

    for step in 0..cfg.n_steps {
        let mut step_rng = rng::stream(cfg.seed, &[tag::TRAIN, step as u64]);
        let (x0s, mut x1s) = sampler.sample_pairs(cfg.batch_size, &mut step_rng);
        if cfg.coupling == Coupling::MinibatchOt {
            let perm = minibatch_ot_pairing(&x0s, &x1s)?;
            x1s = perm.iter().map(|&j| x1s[j].clone()).collect();
        }

        let mut samples: Vec<PathSample> = Vec::with_capacity(cfg.batch_size);
        for (x0, x1) in x0s.iter().zip(&x1s) {
            let t = step_rng.gen_range(t_lo..t_hi);
            samples.push(sample_conditional_path(
                x0,
                x1,
                t,
                cfg.sigma_bridge,
                &sched,
                &mut step_rng,
            )?);
        }

        let xs: Vec<Vec<f64>> = samples.iter().map(|s| s.x_t.clone()).collect();
        let ts: Vec<f64> = samples.iter().map(|s| s.t).collect();
        let cache = model.forward_with_times(&xs, &ts)?;

        let n = cfg.batch_size as f64;
        let mut v_tgt = Array2::zeros((cfg.batch_size, d));
        for (i, s) in samples.iter().enumerate() {
            for j in 0..d {
                v_tgt[[i, j]] = s.v_target[j];
            }
        }
        let v_resid = &cache.velocity - &v_tgt;
        let mut loss = v_resid.mapv(|r| r * r).sum() / n;
        let d_velocity = v_resid * (2.0 / n);

        let d_score = if model_cfg.score_head {
            let mut s_tgt = Array2::zeros((cfg.batch_size, d));
            for (i, s) in samples.iter().enumerate() {
                let st = s.s_target.as_ref().expect("bridge active");
                for j in 0..d {
                    s_tgt[[i, j]] = st[j];
                }
            }
            let s_resid = cache.score.as_ref().expect("score head present") - &s_tgt;
            loss += s_resid.mapv(|r| r * r).sum() / n;
            Some(s_resid * (2.0 / n))
        } else {
            None
        };

        if !loss.is_finite() {
            let last = loss_trace.last().copied().unwrap_or(f64::NAN);
            return Err(CoreError::NonFiniteLoss {
                step,
                loss,
                detail: format!("last finite loss {last}; sigma_bridge {}", cfg.sigma_bridge),
            });
        }
        loss_trace.push(loss);

        let grads = model.backward(&cache, &d_velocity, d_score.as_ref());
        adam.update(&mut model.params, &grads, cfg);
    }

    Ok(TrainResult { model, loss_trace })
}

/// Disjoint block means of the loss trace, window `w`; the tail shorter than
/// `w` is dropped.
pub fn smoothed_blocks(trace: &[f64], w: usize) -> Vec<f64> {
    trace
        .chunks_exact(w)
        .map(|c| c.iter().sum::<f64>() / w as f64)
        .collect()
}
