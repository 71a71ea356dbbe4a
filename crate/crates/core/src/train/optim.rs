use std::collections::BTreeMap;
use std::f64::consts::PI;

use super::TrainError;
use crate::tensor::{ParamStore, Real};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.99;
pub const ADAM_EPS: f64 = 1e-8;

/// Single-cycle cosine annealing over `total_steps` optimizer steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleConfig {
    pub eta_max: f64,
    pub eta_min: f64,
    pub total_steps: u64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            eta_max: 1e-3,
            eta_min: 0.0,
            total_steps: 1,
        }
    }
}

/// `eta_min + ½(eta_max − eta_min)(1 + cos(π t / T))`, with `t` clamped to
/// `[0, T]`.
pub fn cosine_lr(step: u64, schedule: &ScheduleConfig) -> f64 {
    let total = schedule.total_steps.max(1);
    let t = step.min(total) as f64;
    let span = schedule.eta_max - schedule.eta_min;
    schedule.eta_min + 0.5 * span * (1.0 + (PI * t / total as f64).cos())
}

/// First and second moments per parameter, plus the shared step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: BTreeMap<String, Vec<T>>,
    pub v: BTreeMap<String, Vec<T>>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    /// Zero moments shaped like `params`.
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros = |n: usize| vec![T::zero(); n];
        AdamState {
            m: params.iter().map(|(k, p)| (k.to_string(), zeros(p.numel()))).collect(),
            v: params.iter().map(|(k, p)| (k.to_string(), zeros(p.numel()))).collect(),
            t: 0,
        }
    }

    pub fn cast<U: Real>(&self) -> AdamState<U> {
        let conv = |map: &BTreeMap<String, Vec<T>>| {
            map.iter()
                .map(|(k, v)| (k.clone(), v.iter().map(|x| U::lit(x.as_f64())).collect()))
                .collect()
        };
        AdamState {
            m: conv(&self.m),
            v: conv(&self.v),
            t: self.t,
        }
    }
}

/// One Adam update of every parameter from its accumulated gradient.
pub fn adam_step<T: Real>(params: &mut ParamStore<T>, state: &mut AdamState<T>, lr: f64) -> Result<(), TrainError> {
    adam_step_filtered(params, state, lr, |_| true)
}

/// Adam update restricted to the parameters accepted by `select`. Moments of
/// the other parameters are left untouched; `t` still advances once.
pub fn adam_step_filtered<T: Real>(
    params: &mut ParamStore<T>,
    state: &mut AdamState<T>,
    lr: f64,
    select: impl Fn(&str) -> bool,
) -> Result<(), TrainError> {
    for (name, p) in params.iter() {
        if select(name) && p.grad().is_none() {
            return Err(TrainError::MissingGrad(name.to_string()));
        }
        if !state.m.contains_key(name) {
            return Err(TrainError::Config(format!("optimizer state has no entry for `{name}`")));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (T::lit(ADAM_BETA1), T::lit(ADAM_BETA2));
    let (one, eps, lr) = (T::one(), T::lit(ADAM_EPS), T::lit(lr));
    let c1 = T::lit(1.0 - ADAM_BETA1.powi(t));
    let c2 = T::lit(1.0 - ADAM_BETA2.powi(t));
    for (name, p) in params.iter_mut() {
        if !select(name) {
            continue;
        }
        let g = p.grad().expect("checked above").to_vec();
        let m = state.m.get_mut(name).expect("checked above");
        let v = state.v.get_mut(name).expect("checked above");
        for (((w, &g), m), v) in p.data_mut().iter_mut().zip(&g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
