//! Diversity score to temperature.
//!
//! Every strategy is monotone nonincreasing in the score: a high score means a
//! narrow decoding space, so the distribution is sharpened. The offset `t0` is
//! calibrated so the corpus-mean score maps to exactly `T = 1`.
//!
//! | strategy        | raw map                     | offset                          |
//! |-----------------|-----------------------------|---------------------------------|
//! | linear          | `t0 - h s`                  | `1 + h s_mean`                  |
//! | exponential     | `h^s + t0`, `0 < h < 1`     | `1 - h^s_mean`                  |
//! | inverse sigmoid | `h / (h + e^(s/h)) + t0`    | `1 - h / (h + e^(s_mean/h))`    |
//! | identity        | `1`                         | unused                          |
//!
//! The raw value is finally clamped to `[t_min, t_max]`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::head::DiversityScore;
use crate::prob::Temperature;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingStrategy {
    Linear,
    Exponential,
    InverseSigmoid,
    /// Always `T = 1`: the fixed-temperature baseline expressed as a mapping.
    Identity,
}

impl MappingStrategy {
    /// Sharpness used when none is given.
    pub fn default_h(self) -> f64 {
        match self {
            MappingStrategy::Linear => 5.0,
            MappingStrategy::Exponential => 0.01,
            MappingStrategy::InverseSigmoid => 0.02,
            MappingStrategy::Identity => 1.0,
        }
    }
}

pub const DEFAULT_T_MIN: f64 = 0.05;
pub const DEFAULT_T_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MappingConfig {
    pub strategy: MappingStrategy,
    pub h: f64,
    #[serde(default = "default_t_min")]
    pub t_min: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
}

fn default_t_min() -> f64 {
    DEFAULT_T_MIN
}

fn default_t_max() -> f64 {
    DEFAULT_T_MAX
}

impl MappingConfig {
    pub fn new(strategy: MappingStrategy) -> Self {
        Self {
            strategy,
            h: strategy.default_h(),
            t_min: DEFAULT_T_MIN,
            t_max: DEFAULT_T_MAX,
        }
    }

    pub fn with_h(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h.is_finite() && self.h > 0.0) {
            return invalid(format!("mapping sharpness h must be positive, got {}", self.h));
        }
        match self.strategy {
            MappingStrategy::Exponential if self.h >= 1.0 => {
                return invalid("exponential mapping needs h < 1")
            }
            MappingStrategy::InverseSigmoid if self.h > 1.0 => {
                return invalid("inverse sigmoid mapping needs h <= 1")
            }
            _ => {}
        }
        if !(self.t_min > 0.0 && self.t_min < self.t_max && self.t_max.is_finite()) {
            return invalid(format!(
                "clamp bounds must satisfy 0 < t_min < t_max, got [{}, {}]",
                self.t_min, self.t_max
            ));
        }
        if !(self.t_min <= 1.0 && 1.0 <= self.t_max) {
            return invalid("clamp bounds must contain T = 1");
        }
        Ok(())
    }

    /// Unclamped map for a given offset.
    pub fn raw(&self, t0: f64, s: f64) -> f64 {
        let h = self.h;
        match self.strategy {
            MappingStrategy::Linear => t0 - h * s,
            MappingStrategy::Exponential => h.powf(s) + t0,
            MappingStrategy::InverseSigmoid => h / (h + (s / h).exp()) + t0,
            MappingStrategy::Identity => 1.0,
        }
    }

    /// The offset that puts `s_mean` at `T = 1`.
    pub fn offset_for(&self, s_mean: f64) -> f64 {
        let h = self.h;
        match self.strategy {
            MappingStrategy::Linear => 1.0 + h * s_mean,
            MappingStrategy::Exponential => 1.0 - h.powf(s_mean),
            MappingStrategy::InverseSigmoid => 1.0 - h / (h + (s_mean / h).exp()),
            MappingStrategy::Identity => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MappingCalibration {
    pub s_mean: f64,
    pub t0: f64,
}

pub fn calibrate(config: &MappingConfig, scores: &[DiversityScore]) -> Result<MappingCalibration> {
    config.validate()?;
    if scores.is_empty() {
        return invalid("calibration needs at least one score");
    }
    // Running mean: exact when every score is equal.
    let mut s_mean = 0.0;
    for (k, s) in scores.iter().enumerate() {
        s_mean += (s.value() - s_mean) / (k + 1) as f64;
    }
    Ok(MappingCalibration {
        s_mean,
        t0: config.offset_for(s_mean),
    })
}

/// The calibration point itself maps to exactly `T = 1`.
pub fn map_score(config: &MappingConfig, calib: &MappingCalibration, s: DiversityScore) -> Temperature {
    if s.value() == calib.s_mean {
        return Temperature::ONE;
    }
    let raw = config.raw(calib.t0, s.value());
    let t = if raw.is_nan() { 1.0 } else { raw.clamp(config.t_min, config.t_max) };
    Temperature::new(t).expect("clamped temperature is positive")
}

#[cfg(test)]
mod tests {
    use super::*;

    const STRATEGIES: [MappingStrategy; 3] = [
        MappingStrategy::Linear,
        MappingStrategy::Exponential,
        MappingStrategy::InverseSigmoid,
    ];

    fn s(v: f64) -> DiversityScore {
        DiversityScore::new(v)
    }

    fn scores(vs: &[f64]) -> Vec<DiversityScore> {
        vs.iter().map(|&v| s(v)).collect()
    }

    #[test]
    fn mean_maps_to_one() {
        for strategy in STRATEGIES {
            for data in [&[0.2, 0.9, 0.4][..], &[0.61], &[0.0, 1.0], &[0.95, 0.97, 0.99]] {
                let cfg = MappingConfig::new(strategy);
                let cal = calibrate(&cfg, &scores(data)).unwrap();
                assert!((cfg.raw(cal.t0, cal.s_mean) - 1.0).abs() < 1e-9);
                let t = map_score(&cfg, &cal, s(cal.s_mean));
                assert!((t.value() - 1.0).abs() < 1e-9, "{strategy:?}");
            }
        }
    }

    #[test]
    fn constant_labels_map_to_exactly_one() {
        for strategy in STRATEGIES {
            for v in [0.1, 0.3, 0.385, 0.7] {
                let cfg = MappingConfig::new(strategy);
                let cal = calibrate(&cfg, &scores(&[v; 7])).unwrap();
                assert_eq!(cal.s_mean, v);
                assert_eq!(map_score(&cfg, &cal, s(v)).value(), 1.0);
            }
        }
    }

    #[test]
    fn identity_is_flat() {
        let cfg = MappingConfig::new(MappingStrategy::Identity);
        let cal = calibrate(&cfg, &scores(&[0.3, 0.8])).unwrap();
        for i in 0..=10 {
            assert_eq!(map_score(&cfg, &cal, s(i as f64 / 10.0)).value(), 1.0);
        }
    }

    #[test]
    fn linear_hand_values() {
        let cfg = MappingConfig::new(MappingStrategy::Linear);
        let cal = calibrate(&cfg, &scores(&[0.5])).unwrap();
        assert!((cal.t0 - 3.5).abs() < 1e-12);
        assert!((map_score(&cfg, &cal, s(0.6)).value() - 0.5).abs() < 1e-12);
        // far above the mean the lower clamp engages
        assert_eq!(map_score(&cfg, &cal, s(1.0)).value(), DEFAULT_T_MIN);
        assert_eq!(map_score(&cfg, &cal, s(0.0)).value(), DEFAULT_T_MAX);
    }

    #[test]
    fn exponential_strictly_decreasing_on_grid() {
        let cfg = MappingConfig::new(MappingStrategy::Exponential);
        let cal = calibrate(&cfg, &scores(&[0.5])).unwrap();
        let vals: Vec<f64> = (0..=10).map(|i| cfg.raw(cal.t0, i as f64 / 10.0)).collect();
        for w in vals.windows(2) {
            assert!(w[1] < w[0]);
        }
        // 0.01^s + 0.9
        assert!((vals[0] - 1.9).abs() < 1e-12);
        assert!((vals[10] - 0.91).abs() < 1e-12);
    }

    #[test]
    fn monotone_and_valid_on_dense_grid() {
        for strategy in STRATEGIES {
            for h_scale in [0.5, 1.0] {
                let cfg = MappingConfig::new(strategy).with_h(strategy.default_h() * h_scale);
                let cal = calibrate(&cfg, &scores(&[0.35, 0.8])).unwrap();
                let mut prev = f64::INFINITY;
                for i in 0..=1000 {
                    let t = map_score(&cfg, &cal, s(i as f64 / 1000.0)).value();
                    assert!(t.is_finite() && t > 0.0);
                    assert!(t <= prev + 1e-15, "{strategy:?} not monotone at {i}");
                    prev = t;
                }
            }
        }
    }

    #[test]
    fn clamp_only_outside_bounds() {
        let cfg = MappingConfig::new(MappingStrategy::Linear).with_h(1.0);
        let cal = calibrate(&cfg, &scores(&[0.5])).unwrap();
        for i in 0..=100 {
            let v = i as f64 / 100.0;
            let raw = cfg.raw(cal.t0, v);
            let t = map_score(&cfg, &cal, s(v)).value();
            if (cfg.t_min..=cfg.t_max).contains(&raw) {
                assert_eq!(t, raw);
            }
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(calibrate(&MappingConfig::new(MappingStrategy::Linear), &[]).is_err());
        assert!(MappingConfig::new(MappingStrategy::Exponential).with_h(1.0).validate().is_err());
        assert!(MappingConfig::new(MappingStrategy::InverseSigmoid).with_h(1.5).validate().is_err());
        assert!(MappingConfig::new(MappingStrategy::Linear).with_h(0.0).validate().is_err());
        let mut c = MappingConfig::new(MappingStrategy::Linear);
        c.t_min = 2.0;
        assert!(c.validate().is_err());
    }
}
