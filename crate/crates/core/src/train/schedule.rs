use super::{Schedule, TrainConfig};

/// Number of warmup steps for a run of `total` steps.
pub fn warmup_steps(cfg: &TrainConfig, total: usize) -> usize {
    ((cfg.warmup_fraction * total as f64).ceil() as usize).min(total)
}

/// Learning rate at optimizer step `step` (0-based) of `total`.
///
/// Linear warmup reaches `peak_lr` on the last warmup step; the cosine phase
/// then decays to exactly zero on the final step.
pub fn learning_rate(cfg: &TrainConfig, step: usize, total: usize) -> f64 {
    let warm = warmup_steps(cfg, total);
    if step < warm {
        return cfg.peak_lr * (step + 1) as f64 / warm as f64;
    }
    match cfg.schedule {
        Schedule::Constant => cfg.peak_lr,
        Schedule::Cosine => {
            let decay = (total - warm) as f64;
            let progress = ((step - warm + 1) as f64 / decay).min(1.0);
            cfg.peak_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
        }
    }
}
