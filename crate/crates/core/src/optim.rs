//! Adam over the trainable stages of a [`StreamableNet`].

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::net::{GradientSet, StageBlocks, StreamableNet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Epochs between logged (epoch, loss, psnr) rows.
    pub log_every: usize,
    /// Samples per optimizer step; `None` means full batch.
    pub batch_size: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 150,
            seed: 0,
            log_every: 100,
            batch_size: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(Error::arg("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::arg("betas must lie in [0, 1)"));
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Error::arg("eps must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::arg("epochs must be at least 1"));
        }
        if self.log_every == 0 {
            return Err(Error::arg("log interval must be at least 1"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::arg("batch size must be at least 1"));
        }
        Ok(())
    }
}

/// First and second moments for a contiguous range of stages.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    first: usize,
    m: Vec<StageBlocks>,
    v: Vec<StageBlocks>,
    t: u64,
}

impl AdamState {
    /// Zero moments for every unfrozen stage of `net`.
    pub fn for_net(net: &StreamableNet) -> Self {
        let zeros = GradientSet::zeros_for(net);
        AdamState { first: zeros.first_stage() - 1, m: zeros.blocks().to_vec(), v: zeros.blocks().to_vec(), t: 0 }
    }

    pub fn timestep(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update of the stages covered by `grads`.
    pub fn step(&mut self, net: &mut StreamableNet, grads: &GradientSet, cfg: &TrainConfig) -> Result<()> {
        net.check_grads(grads)?;
        let g_first = grads.first_stage() - 1;
        if g_first < self.first || g_first + grads.blocks().len() > self.first + self.m.len() {
            return Err(Error::arg("optimizer state does not cover the gradient stages"));
        }
        self.t += 1;
        let t = self.t as f64;
        let bc1 = 1.0 - libm::pow(cfg.beta1, t);
        let bc2 = 1.0 - libm::pow(cfg.beta2, t);
        for (i, g) in grads.blocks().iter().enumerate() {
            let idx = g_first + i;
            let m = &mut self.m[idx - self.first];
            let v = &mut self.v[idx - self.first];
            let params = net.stage_blocks_mut(idx);
            for (((p, g), m), v) in params.slices_mut().zip(g.slices()).zip(m.slices_mut()).zip(v.slices_mut()) {
                for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= cfg.lr * m_hat / (libm::sqrt(v_hat) + cfg.eps);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::ActivationConfig;
    use crate::tensor::RngState;

    fn net() -> StreamableNet {
        let mut rng = RngState::new(7);
        let mut net = StreamableNet::new(1, 1, 2, 2, ActivationConfig::default(), &mut rng).unwrap();
        net.grow(3, &mut rng).unwrap();
        net
    }

    fn filled(net: &StreamableNet, value: f64) -> GradientSet {
        let mut g = GradientSet::zeros_for(net);
        for b in g.blocks_mut() {
            b.slices_mut().for_each(|s| s.fill(value));
        }
        g
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut n = net();
        let before = n.clone();
        let mut st = AdamState::for_net(&n);
        let g = GradientSet::zeros_for(&n);
        for _ in 0..5 {
            st.step(&mut n, &g, &TrainConfig::default()).unwrap();
        }
        assert_eq!(n, before);
        assert_eq!(st.timestep(), 5);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut n = net();
        let before = n.clone();
        let mut st = AdamState::for_net(&n);
        let cfg = TrainConfig { lr: 0.1, ..TrainConfig::default() };
        let g = filled(&n, 1.0);
        st.step(&mut n, &g, &cfg).unwrap();
        for (a, b) in n.stage(2).unwrap().blocks().values().zip(before.stage(2).unwrap().blocks().values()) {
            assert!((a - b + 0.1).abs() < 1e-7);
        }
        assert_eq!(n.stage(1), before.stage(1));
    }

    #[test]
    fn rejects_frozen_targets() {
        let mut n = net();
        let mut st = AdamState::for_net(&n);
        let mut full = n.clone();
        full.unfreeze_all();
        let g = GradientSet::zeros_for(&full);
        assert!(st.step(&mut n, &g, &TrainConfig::default()).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { lr: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { beta1: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
    }
}
