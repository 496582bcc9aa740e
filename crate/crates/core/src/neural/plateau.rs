use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct PlateauConfig {
    /// Multiplier applied to the learning rate on a plateau, in (0, 1).
    pub factor: f64,
    /// Non-improving epochs tolerated before decaying.
    pub patience: usize,
    pub min_lr: f64,
    /// Minimum decrease that counts as an improvement.
    pub threshold: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        Self {
            factor: 0.5,
            patience: 3,
            min_lr: 1e-6,
            threshold: 1e-8,
        }
    }
}

/// Reduce-on-plateau schedule over a minimized quantity.
#[derive(Clone, Debug, PartialEq)]
pub struct PlateauState {
    pub config: PlateauConfig,
    pub best: f64,
    pub bad_epochs: usize,
}

impl PlateauState {
    pub fn new(config: PlateauConfig) -> Self {
        assert!(
            config.factor > 0.0 && config.factor < 1.0,
            "plateau factor must lie in (0, 1)"
        );
        Self {
            config,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Records one epoch's loss and returns the learning rate to use next.
    pub fn update(&mut self, epoch_loss: f64, lr: f64) -> f64 {
        if epoch_loss < self.best - self.config.threshold {
            self.best = epoch_loss;
            self.bad_epochs = 0;
            return lr;
        }
        self.bad_epochs += 1;
        if self.bad_epochs > self.config.patience {
            self.bad_epochs = 0;
            return (lr * self.config.factor).max(self.config.min_lr);
        }
        lr
    }
}
