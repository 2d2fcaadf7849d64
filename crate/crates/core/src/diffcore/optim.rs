use super::ParamStore;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

/// One SGD step with classic (coupled) weight decay and heavy-ball momentum:
/// `g += wd·w; v = m·v + g; w -= lr·v`.
pub fn sgd_step(params: &mut ParamStore, cfg: &SgdConfig) -> Result<()> {
    for (_, p) in params.iter_mut() {
        let mut g = p.grad.clone();
        g.axpy(cfg.weight_decay, &p.value)?;
        let mut v = p.momentum.scale(cfg.momentum)?;
        v.axpy(1.0, &g)?;
        if cfg.lr != 0.0 {
            p.value.axpy(-cfg.lr, &v)?;
        }
        p.momentum = v;
    }
    Ok(())
}

/// Step decay: `base · gamma^floor(epoch / every)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    pub base_lr: f64,
    pub gamma: f64,
    pub every: usize,
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule {
            base_lr: 0.01,
            gamma: 0.1,
            every: 40,
        }
    }
}

impl StepSchedule {
    pub fn lr(&self, epoch: usize) -> f64 {
        let drops = (epoch / self.every.max(1)) as i32;
        self.base_lr * self.gamma.powi(drops)
    }
}
