#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleConfig {
    pub lr: f64,
    /// Non-improving checkpoints before the learning rate is halved.
    pub halve_patience: u32,
    /// Non-improving checkpoints before training stops.
    pub stop_patience: u32,
    pub max_checkpoints: u32,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            lr: 3e-4,
            halve_patience: 3,
            stop_patience: 8,
            max_checkpoints: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    NoImprovement,
    MaxCheckpoints,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub checkpoint: u32,
    pub improved: bool,
    pub halved: bool,
    pub stop: Option<StopReason>,
    /// Learning rate for the next epoch.
    pub lr: f64,
}

/// Learning-rate halving and early stopping driven by dev perplexity.
/// Improvement means strictly below the best value so far; both counters
/// restart on improvement, and the halving counter also restarts after each
/// halving.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    cfg: ScheduleConfig,
    lr: f64,
    best: Option<f64>,
    best_checkpoint: u32,
    since_best: u32,
    since_halve: u32,
    checkpoints: u32,
}

impl Schedule {
    pub fn new(cfg: ScheduleConfig) -> Self {
        Schedule {
            cfg,
            lr: cfg.lr,
            best: None,
            best_checkpoint: 0,
            since_best: 0,
            since_halve: 0,
            checkpoints: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    /// 1-based index of the best checkpoint, 0 before the first.
    pub fn best_checkpoint(&self) -> u32 {
        self.best_checkpoint
    }

    pub fn checkpoints(&self) -> u32 {
        self.checkpoints
    }

    pub fn observe(&mut self, dev_perplexity: f64) -> Outcome {
        self.checkpoints += 1;
        let improved = self.best.is_none_or(|b| dev_perplexity < b);
        let mut halved = false;
        if improved {
            self.best = Some(dev_perplexity);
            self.best_checkpoint = self.checkpoints;
            self.since_best = 0;
            self.since_halve = 0;
        } else {
            self.since_best += 1;
            self.since_halve += 1;
            if self.since_halve >= self.cfg.halve_patience {
                self.lr /= 2.0;
                self.since_halve = 0;
                halved = true;
            }
        }
        let stop = if self.since_best >= self.cfg.stop_patience {
            Some(StopReason::NoImprovement)
        } else if self.checkpoints >= self.cfg.max_checkpoints {
            Some(StopReason::MaxCheckpoints)
        } else {
            None
        };
        Outcome {
            checkpoint: self.checkpoints,
            improved,
            halved,
            stop,
            lr: self.lr,
        }
    }
}
