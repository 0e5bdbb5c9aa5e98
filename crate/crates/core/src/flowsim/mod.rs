//! Flow-edit integration over a pluggable velocity field.
//!
//! Time runs from `t = 0` (data) to `t = 1` (noise); every sampler integrates
//! from high to low `t` on the uniform schedule `t_i = i / N` and never
//! queries the field at `t = 0`.
//!
//! The edit integrator never inverts the source. At each active step it
//! noises the source directly, shifts the noisy source by the current edit
//! offset to get a noisy target, and advances the edit by the difference of
//! the guided target and source velocities, averaged over several noise
//! draws.

mod oracle;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use oracle::{make_analytic_oracle, AnalyticKind, AnalyticOracle, GaussianParams, VelocityOracle};

use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid oracle: {0}")]
    InvalidOracle(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("velocity requested at t = {0}; t must be positive")]
    NonPositiveTime(f64),
    #[error("unknown condition {0:?}")]
    UnknownCondition(String),
    #[error("state must be non-empty and finite")]
    InvalidState,
    #[error("state became non-finite at step {step} (t = {t}, |z| = {norm})")]
    NonFinite { step: usize, t: f64, norm: f64 },
}

/// Integration and guidance settings.
///
/// `n_max` is the schedule index where editing starts, steps `n_max..n_min+1`
/// are edit steps, and the remaining `n_min..1` are plain guided sampling of
/// the target. The source velocity enters the edit direction with weight
/// `lambda_src`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowEditConfig<T> {
    pub steps: usize,
    pub n_max: usize,
    pub n_min: usize,
    pub n_avg: usize,
    pub cfg_source_scale: T,
    pub cfg_target_scale: T,
    pub lambda_src: T,
    pub rng_seed: u64,
}

impl<T: Scalar> Default for FlowEditConfig<T> {
    fn default() -> Self {
        Self {
            steps: 25,
            n_max: 15,
            n_min: 0,
            n_avg: 5,
            cfg_source_scale: T::of(1.5),
            cfg_target_scale: T::of(5.5),
            lambda_src: T::one(),
            rng_seed: 0,
        }
    }
}

impl<T: Scalar> FlowEditConfig<T> {
    pub fn validate(&self) -> Result<(), FlowError> {
        let bad = |m: String| Err(FlowError::InvalidConfig(m));
        if self.steps == 0 {
            return bad("steps must be at least 1".into());
        }
        if self.n_max > self.steps {
            return bad(format!("n_max {} exceeds steps {}", self.n_max, self.steps));
        }
        if self.n_min > self.n_max {
            return bad(format!("n_min {} exceeds n_max {}", self.n_min, self.n_max));
        }
        if self.n_avg == 0 {
            return bad("n_avg must be at least 1".into());
        }
        let finite = [self.cfg_source_scale, self.cfg_target_scale, self.lambda_src];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("guidance scales and lambda must be finite".into());
        }
        Ok(())
    }
}

/// A point in the flow's state space.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowState<T> {
    values: Vec<T>,
}

impl<T: Scalar> FlowState<T> {
    pub fn new(values: Vec<T>) -> Result<Self, FlowError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::InvalidState);
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }
}

fn norm<T: Scalar>(v: &[T]) -> f64 {
    v.iter().map(|x| x.as_f64().powi(2)).sum::<f64>().sqrt()
}

/// `t_i = i / N` for `i = 0..=N`.
pub fn linear_schedule<T: Scalar>(steps: usize) -> Vec<T> {
    let n = T::of(steps as f64);
    (0..=steps).map(|i| T::of(i as f64) / n).collect()
}

/// Classifier-free guidance: `v_uncond + scale * (v_cond - v_uncond)`.
pub fn cfg_combine<T: Scalar>(uncond: &[T], cond: &[T], scale: T) -> Result<Vec<T>, FlowError> {
    if uncond.len() != cond.len() {
        return Err(FlowError::DimensionMismatch { expected: uncond.len(), actual: cond.len() });
    }
    Ok(uncond.iter().zip(cond).map(|(&u, &c)| u + scale * (c - u)).collect())
}

/// Guided velocity from the conditional and unconditional branches.
pub fn guided_velocity<T: Scalar, O: VelocityOracle<T> + ?Sized>(
    oracle: &O,
    z: &[T],
    t: T,
    condition: &str,
    scale: T,
) -> Result<Vec<T>, FlowError> {
    let cond = oracle.evaluate(z, t, condition, true)?;
    let uncond = oracle.evaluate(z, t, condition, false)?;
    check_dim(oracle.dimension(), cond.len())?;
    cfg_combine(&uncond, &cond, scale)
}

fn check_dim(expected: usize, actual: usize) -> Result<(), FlowError> {
    if expected == actual {
        Ok(())
    } else {
        Err(FlowError::DimensionMismatch { expected, actual })
    }
}

/// Counter-based Gaussian noise: each `(step, draw)` pair owns an
/// independent ChaCha stream under the run seed, so draws do not depend on
/// evaluation order.
#[derive(Clone, Copy, Debug)]
pub struct NoiseStreams {
    seed: u64,
}

impl NoiseStreams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn normal<T: Scalar>(&self, step: u32, draw: u32, dimension: usize) -> Vec<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((u64::from(step) << 32) | u64::from(draw));
        (0..dimension)
            .map(|_| {
                let x: f64 = StandardNormal.sample(&mut rng);
                T::of(x)
            })
            .collect()
    }
}

/// Stream reserved for drawing sampler starting noise.
const START_NOISE_STEP: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepPhase {
    Edit,
    Sample,
}

/// One integration step of a run, for transcripts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub phase: StepPhase,
    pub t: f64,
    pub t_next: f64,
    /// Norm of the averaged edit direction (edit steps) or of the guided
    /// velocity (sampling steps).
    pub velocity_norm: f64,
    pub z_norm: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowRun<T> {
    pub output: FlowState<T>,
    pub transcript: Vec<StepRecord>,
}

fn guard_finite<T: Scalar>(z: &[T], step: usize, t: T) -> Result<(), FlowError> {
    if z.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(FlowError::NonFinite { step, t: t.as_f64(), norm: norm(z) })
    }
}

/// Plain Euler steps `i = from..1` on the guided target field, in place.
fn euler_steps<T: Scalar, O: VelocityOracle<T> + ?Sized>(
    oracle: &O,
    condition: &str,
    scale: T,
    times: &[T],
    from: usize,
    z: &mut [T],
    transcript: &mut Vec<StepRecord>,
) -> Result<(), FlowError> {
    for i in (1..=from).rev() {
        let (t, t_next) = (times[i], times[i - 1]);
        let v = guided_velocity(oracle, z, t, condition, scale)?;
        let dt = t_next - t;
        for (zi, vi) in z.iter_mut().zip(&v) {
            *zi = *zi + dt * *vi;
        }
        guard_finite(z, i, t)?;
        transcript.push(StepRecord {
            step: i,
            phase: StepPhase::Sample,
            t: t.as_f64(),
            t_next: t_next.as_f64(),
            velocity_norm: norm(&v),
            z_norm: norm(z),
        });
    }
    Ok(())
}

/// Integrates the guided field of `condition` from `start` at `t = 1` down
/// to `t = 0` with `config.steps` Euler steps and the target guidance scale.
pub fn euler_sample<T: Scalar, O: VelocityOracle<T> + ?Sized>(
    oracle: &O,
    condition: &str,
    config: &FlowEditConfig<T>,
    start: &FlowState<T>,
) -> Result<FlowRun<T>, FlowError> {
    config.validate()?;
    check_dim(oracle.dimension(), start.dimension())?;
    let times = linear_schedule::<T>(config.steps);
    let mut z = start.values.clone();
    let mut transcript = Vec::with_capacity(config.steps);
    euler_steps(oracle, condition, config.cfg_target_scale, &times, config.steps, &mut z, &mut transcript)?;
    Ok(FlowRun { output: FlowState { values: z }, transcript })
}

/// [`euler_sample`] from standard normal noise drawn from `draw`'s stream
/// under `config.rng_seed`.
pub fn euler_sample_from_noise<T: Scalar, O: VelocityOracle<T> + ?Sized>(
    oracle: &O,
    condition: &str,
    config: &FlowEditConfig<T>,
    draw: u32,
) -> Result<FlowRun<T>, FlowError> {
    let noise = NoiseStreams::new(config.rng_seed).normal(START_NOISE_STEP, draw, oracle.dimension());
    euler_sample(oracle, condition, config, &FlowState { values: noise })
}

/// Edits `source` from `source_condition` towards `target_condition`.
///
/// Starting from `Z = X_src` at schedule index `n_max`, each edit step `i`
/// draws `n_avg` noises `e`, forms `z_src = (1 - t_i) X_src + t_i e` and
/// `z_tgt = Z + z_src - X_src`, and moves `Z` by `(t_{i-1} - t_i)` times the
/// mean of `v_tgt(z_tgt) - lambda_src * v_src(z_src)`, each side guided with
/// its own scale. Below `n_min` the remaining steps are plain guided Euler
/// on `Z` under the target condition.
pub fn flowedit_run<T: Scalar, O: VelocityOracle<T> + ?Sized>(
    source: &FlowState<T>,
    source_condition: &str,
    target_condition: &str,
    oracle: &O,
    config: &FlowEditConfig<T>,
) -> Result<FlowRun<T>, FlowError> {
    config.validate()?;
    let dim = source.dimension();
    check_dim(oracle.dimension(), dim)?;
    let times = linear_schedule::<T>(config.steps);
    let noise = NoiseStreams::new(config.rng_seed);
    let x_src = &source.values;
    let mut z = x_src.clone();
    let mut transcript = Vec::with_capacity(config.n_max);
    let avg = T::of(config.n_avg as f64);

    for i in (config.n_min + 1..=config.n_max).rev() {
        let (t, t_next) = (times[i], times[i - 1]);
        let one_minus_t = T::one() - t;
        let mut delta = vec![T::zero(); dim];
        for draw in 0..config.n_avg {
            let eps = noise.normal::<T>(i as u32, draw as u32, dim);
            let z_src: Vec<T> = x_src
                .iter()
                .zip(&eps)
                .map(|(&x, &e)| one_minus_t * x + t * e)
                .collect();
            let z_tgt: Vec<T> = (0..dim).map(|k| z[k] + z_src[k] - x_src[k]).collect();
            let v_tgt = guided_velocity(oracle, &z_tgt, t, target_condition, config.cfg_target_scale)?;
            let v_src = guided_velocity(oracle, &z_src, t, source_condition, config.cfg_source_scale)?;
            for k in 0..dim {
                delta[k] = delta[k] + (v_tgt[k] - config.lambda_src * v_src[k]);
            }
        }
        let dt = t_next - t;
        for k in 0..dim {
            delta[k] = delta[k] / avg;
            z[k] = z[k] + dt * delta[k];
        }
        guard_finite(&z, i, t)?;
        transcript.push(StepRecord {
            step: i,
            phase: StepPhase::Edit,
            t: t.as_f64(),
            t_next: t_next.as_f64(),
            velocity_norm: norm(&delta),
            z_norm: norm(&z),
        });
    }

    euler_steps(
        oracle,
        target_condition,
        config.cfg_target_scale,
        &times,
        config.n_min,
        &mut z,
        &mut transcript,
    )?;
    Ok(FlowRun { output: FlowState { values: z }, transcript })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    #[test]
    fn schedule_values() {
        let t: Vec<f64> = linear_schedule(25);
        assert_eq!(t.len(), 26);
        assert_eq!(t[0], 0.0);
        assert!((t[15] - 0.6).abs() < 1e-15);
        assert_eq!(t[25], 1.0);
        assert_eq!(linear_schedule::<f32>(1), vec![0.0, 1.0]);
        for n in 1..60 {
            let t: Vec<f64> = linear_schedule(n);
            assert!(t.windows(2).all(|w| w[0] < w[1]));
            assert_eq!((t[0], t[n]), (0.0, 1.0));
        }
    }

    #[test]
    fn cfg_combine_cases() {
        assert_eq!(cfg_combine(&[0.3, 1.0], &[2.0, -1.0], 1.0).unwrap(), vec![2.0, -1.0]);
        assert_eq!(cfg_combine(&[0.3, 1.0], &[2.0, -1.0], 0.0).unwrap(), vec![0.3, 1.0]);
        assert_eq!(cfg_combine(&[0.0], &[1.0], 5.5).unwrap(), vec![5.5]);
        assert!(cfg_combine(&[0.0], &[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn config_validation() {
        let ok = FlowEditConfig::<f64>::default();
        assert!(ok.validate().is_ok());
        for bad in [
            FlowEditConfig { steps: 0, n_max: 0, ..ok.clone() },
            FlowEditConfig { n_max: 26, ..ok.clone() },
            FlowEditConfig { n_min: 16, ..ok.clone() },
            FlowEditConfig { n_avg: 0, ..ok.clone() },
            FlowEditConfig { lambda_src: f64::NAN, ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(FlowError::InvalidConfig(_))));
        }
    }

    #[test]
    fn one_step_euler_lands_on_anchor() {
        let o = AnalyticOracle::delta([("c", vec![0.25, -2.0])]).unwrap();
        let cfg = FlowEditConfig { steps: 1, n_max: 1, ..FlowEditConfig::default() };
        let start = FlowState::new(vec![1.7, 0.3]).unwrap();
        let out = euler_sample(&o, "c", &cfg, &start).unwrap().output;
        for (got, want) in out.values().iter().zip([0.25f64, -2.0]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn noise_streams_are_reproducible_and_distinct() {
        let n = NoiseStreams::new(9);
        let a: Vec<f64> = n.normal(3, 1, 4);
        assert_eq!(a, n.normal::<f64>(3, 1, 4));
        assert_ne!(a, n.normal::<f64>(3, 2, 4));
        assert_ne!(a, n.normal::<f64>(4, 1, 4));
        assert_ne!(a, NoiseStreams::new(10).normal::<f64>(3, 1, 4));
    }

    /// Records every time at which the field is queried.
    struct Recording<'a> {
        inner: AnalyticOracle<f64>,
        times: &'a Mutex<Vec<f64>>,
    }

    impl VelocityOracle<f64> for Recording<'_> {
        fn dimension(&self) -> usize {
            self.inner.dimension()
        }

        fn evaluate(&self, z: &[f64], t: f64, c: &str, cond: bool) -> Result<Vec<f64>, FlowError> {
            self.times.lock().unwrap().push(t);
            self.inner.evaluate(z, t, c, cond)
        }
    }

    #[test]
    fn never_queries_at_time_zero() {
        let times = Mutex::new(Vec::new());
        let o = Recording {
            inner: AnalyticOracle::delta([("s", vec![0.0]), ("g", vec![1.0])]).unwrap(),
            times: &times,
        };
        for (n_max, n_min) in [(15, 0), (15, 5), (25, 25), (1, 0)] {
            let cfg = FlowEditConfig { n_max, n_min, ..FlowEditConfig::default() };
            flowedit_run(&FlowState::new(vec![0.0]).unwrap(), "s", "g", &o, &cfg).unwrap();
            euler_sample(&o, "g", &cfg, &FlowState::new(vec![0.3]).unwrap()).unwrap();
        }
        let times = times.into_inner().unwrap();
        assert!(!times.is_empty());
        assert!(times.iter().all(|&t| t > 0.0));
    }

    #[test]
    fn n_min_equal_n_max_is_target_sampling_from_source() {
        let o = AnalyticOracle::affine_gaussian([("s", vec![0.0], 1.0), ("g", vec![2.0], 0.5)]).unwrap();
        let cfg = FlowEditConfig { n_max: 10, n_min: 10, ..FlowEditConfig::default() };
        let x = FlowState::new(vec![0.4]).unwrap();
        let edited = flowedit_run(&x, "s", "g", &o, &cfg).unwrap();
        assert!(edited.transcript.iter().all(|r| r.phase == StepPhase::Sample));

        // Same Euler steps by hand.
        let times: Vec<f64> = linear_schedule(25);
        let mut z = 0.4;
        for i in (1..=10).rev() {
            let v = o.evaluate(&[z], times[i], "g", true).unwrap()[0];
            z += (times[i - 1] - times[i]) * v;
        }
        assert_eq!(edited.output.values(), &[z]);
    }

    #[test]
    fn transcript_covers_every_step() {
        let o = AnalyticOracle::delta([("s", vec![0.0]), ("g", vec![1.0])]).unwrap();
        let cfg = FlowEditConfig { n_max: 12, n_min: 3, ..FlowEditConfig::default() };
        let run = flowedit_run(&FlowState::new(vec![0.0]).unwrap(), "s", "g", &o, &cfg).unwrap();
        let steps: Vec<usize> = run.transcript.iter().map(|r| r.step).collect();
        assert_eq!(steps, (1..=12).rev().collect::<Vec<_>>());
        assert_eq!(run.transcript.iter().filter(|r| r.phase == StepPhase::Edit).count(), 9);
    }

    #[test]
    fn divergent_field_aborts_with_diagnostics() {
        struct Explode;
        impl VelocityOracle<f64> for Explode {
            fn dimension(&self) -> usize {
                1
            }
            fn evaluate(&self, _: &[f64], _: f64, _: &str, _: bool) -> Result<Vec<f64>, FlowError> {
                Ok(vec![f64::INFINITY])
            }
        }
        let err = euler_sample(&Explode, "c", &FlowEditConfig::default(), &FlowState::new(vec![0.0]).unwrap())
            .unwrap_err();
        assert!(matches!(err, FlowError::NonFinite { step: 25, .. }));
    }

    #[test]
    fn single_precision_edit_displacement() {
        let o = AnalyticOracle::delta([("s", vec![2.0f32]), ("g", vec![5.0f32])]).unwrap();
        let out = flowedit_run(&FlowState::new(vec![7.0f32]).unwrap(), "s", "g", &o, &FlowEditConfig::default())
            .unwrap()
            .output;
        assert!((out.values()[0] - 10.0).abs() < 1e-4);
    }
}
