use serde::{Deserialize, Serialize};

use super::model::Params;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    /// Multiply the rate by `decay_factor` at each listed epoch.
    Step { decay_factor: f64, decay_epochs: Vec<usize> },
    /// Half-cosine from the peak down to zero over the post-warmup epochs.
    Cosine,
    Constant,
}

/// Fields missing from a config take their [`Default`] values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub peak_lr: f64,
    pub warmup_epochs: usize,
    pub schedule: Schedule,
    pub momentum: f64,
    pub nesterov: bool,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Record the probability trace after every this many epochs (and after the last).
    pub trace_every: usize,
}

impl Default for OptimizerConfig {
    /// Nesterov momentum 0.9 with a short warmup, scaled down to desk-size runs.
    fn default() -> Self {
        OptimizerConfig {
            peak_lr: 0.1,
            warmup_epochs: 5,
            schedule: Schedule::Cosine,
            momentum: 0.9,
            nesterov: true,
            weight_decay: 1e-4,
            batch_size: 32,
            epochs: 100,
            trace_every: 1,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return Err(Error::config("peak_lr must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay must be nonnegative"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if self.trace_every == 0 {
            return Err(Error::config("trace_every must be >= 1"));
        }
        if let Schedule::Step { decay_factor, decay_epochs } = &self.schedule {
            if !(*decay_factor >= 0.0) {
                return Err(Error::config("decay_factor must be nonnegative"));
            }
            if decay_epochs.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::config("decay_epochs must be strictly increasing"));
            }
            if decay_epochs.last().is_some_and(|&e| e >= self.epochs) {
                return Err(Error::config("decay_epochs must be < epochs"));
            }
        }
        Ok(())
    }

    /// Whether the trace is recorded after `epoch` (zero-based).
    pub fn traces_epoch(&self, epoch: usize) -> bool {
        (epoch + 1) % self.trace_every == 0 || epoch + 1 == self.epochs
    }

    /// Learning rate in effect during `epoch`. Defined for `0..=epochs`; the value at
    /// `epochs` is where the schedule ends.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch < self.warmup_epochs {
            return self.peak_lr * (epoch + 1) as f64 / self.warmup_epochs as f64;
        }
        match &self.schedule {
            Schedule::Constant => self.peak_lr,
            Schedule::Step { decay_factor, decay_epochs } => {
                let n = decay_epochs.iter().filter(|&&d| d <= epoch).count();
                self.peak_lr * decay_factor.powi(n as i32)
            }
            Schedule::Cosine => {
                let span = self.epochs.saturating_sub(self.warmup_epochs).max(1) as f64;
                let progress = ((epoch - self.warmup_epochs) as f64 / span).min(1.0);
                (0.5 * self.peak_lr * (1.0 + (std::f64::consts::PI * progress).cos())).max(0.0)
            }
        }
    }
}

/// SGD with (optionally Nesterov) momentum. Weight decay is folded into the gradient by the loss.
#[derive(Debug, Clone)]
pub struct Sgd {
    momentum: f64,
    nesterov: bool,
    velocity: Params,
}

impl Sgd {
    pub fn new(params: &Params, momentum: f64, nesterov: bool) -> Self {
        let mut velocity = params.clone();
        for l in &mut velocity.layers {
            l.w.fill(0.0);
            l.b.fill(0.0);
        }
        Sgd { momentum, nesterov, velocity }
    }

    pub fn step(&mut self, params: &mut Params, grads: &Params, lr: f64) {
        let mu = self.momentum;
        for ((p, g), v) in params.layers.iter_mut().zip(&grads.layers).zip(&mut self.velocity.layers) {
            update(p.w.as_slice_mut().unwrap(), g.w.as_slice().unwrap(), v.w.as_slice_mut().unwrap(), lr, mu, self.nesterov);
            update(p.b.as_slice_mut().unwrap(), g.b.as_slice().unwrap(), v.b.as_slice_mut().unwrap(), lr, mu, self.nesterov);
        }
    }
}

fn update(p: &mut [f64], g: &[f64], v: &mut [f64], lr: f64, mu: f64, nesterov: bool) {
    for ((p, &g), v) in p.iter_mut().zip(g).zip(v.iter_mut()) {
        *v = mu * *v + g;
        let d = if nesterov { g + mu * *v } else { *v };
        *p -= lr * d;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(schedule: Schedule) -> OptimizerConfig {
        OptimizerConfig { peak_lr: 1.0, warmup_epochs: 15, schedule, epochs: 450, ..Default::default() }
    }

    #[test]
    fn warmup_is_linear() {
        let c = cfg(Schedule::Cosine);
        for e in 0..15 {
            assert_eq!(c.lr_at(e), (e + 1) as f64 / 15.0);
        }
        assert_eq!(c.lr_at(15), 1.0);
    }

    #[test]
    fn step_schedule_decays_at_listed_epochs() {
        let c = cfg(Schedule::Step { decay_factor: 0.1, decay_epochs: vec![200, 300, 400] });
        c.validate().unwrap();
        assert_eq!(c.lr_at(199), 1.0);
        assert!((c.lr_at(200) - 0.1).abs() < 1e-15);
        assert!((c.lr_at(350) - 0.01).abs() < 1e-15);
        assert!((c.lr_at(449) - 0.001).abs() < 1e-15);
    }

    #[test]
    fn cosine_ends_at_zero_and_stays_nonnegative() {
        let c = cfg(Schedule::Cosine);
        assert!(c.lr_at(450).abs() < 1e-9);
        assert!((0..=450).all(|e| c.lr_at(e) >= 0.0));
        assert!((15..450).all(|e| c.lr_at(e + 1) <= c.lr_at(e)));
    }

    #[test]
    fn rejects_bad_decay_epochs() {
        let c = cfg(Schedule::Step { decay_factor: 0.1, decay_epochs: vec![300, 200] });
        assert!(c.validate().is_err());
        let c = cfg(Schedule::Step { decay_factor: 0.1, decay_epochs: vec![450] });
        assert!(c.validate().is_err());
    }

    #[test]
    fn nesterov_step_matches_hand_computation() {
        use crate::nn::model::{ModelSpec, Params};
        let spec = ModelSpec::uniform(0, 0, 1, 1, 0);
        let mut p = Params::zeros(&spec);
        let mut g = Params::zeros(&spec);
        g.layers[0].w[[0, 0]] = 1.0;
        let mut opt = Sgd::new(&p, 0.9, true);
        opt.step(&mut p, &g, 0.1);
        // v = 1, d = 1 + 0.9
        assert!((p.layers[0].w[[0, 0]] + 0.19).abs() < 1e-15);
        opt.step(&mut p, &g, 0.1);
        // v = 1.9, d = 1 + 1.71
        assert!((p.layers[0].w[[0, 0]] + 0.19 + 0.271).abs() < 1e-15);
    }
}
