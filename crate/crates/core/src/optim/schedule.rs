pub const BASE_LR: f64 = 2e-4;
pub const LR_DECAY: f64 = 0.7;
pub const LR_INTERVAL: usize = 20;
pub const LR_FLOOR: f64 = 1e-6;

/// Step decay: `max(floor, base · decay^⌊epoch / interval⌋)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub decay: f64,
    pub interval: usize,
    pub floor: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            base_lr: BASE_LR,
            decay: LR_DECAY,
            interval: LR_INTERVAL,
            floor: LR_FLOOR,
        }
    }
}

impl LrSchedule {
    pub fn with_base(base_lr: f64) -> Self {
        Self {
            base_lr,
            ..Self::default()
        }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let k = (epoch / self.interval.max(1)) as i32;
        (self.base_lr * self.decay.powi(k)).max(self.floor)
    }
}
