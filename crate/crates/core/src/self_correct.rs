//! Teacher-student bookkeeping: EMA parameter updates, the area-dependent
//! score threshold for teacher predictions, and loss composition.

use alloc::vec::Vec;

use crate::label::PseudoLabel;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmaConfig {
    pub momentum: f64,
}

impl Default for EmaConfig {
    fn default() -> Self {
        Self { momentum: 0.9995 }
    }
}

impl EmaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.momentum >= 0.0 && self.momentum < 1.0) {
            return Err(Error::OutOfRange { what: "ema momentum", value: self.momentum });
        }
        Ok(())
    }
}

/// `teacher <- m * teacher + (1 - m) * student`, elementwise.
pub fn ema_update(teacher: &[f64], student: &[f64], cfg: &EmaConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if teacher.len() != student.len() {
        return Err(Error::LengthMismatch { left: teacher.len(), right: student.len() });
    }
    let m = cfg.momentum;
    Ok(teacher.iter().zip(student).map(|(t, s)| m * t + (1.0 - m) * s).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicThresholdParams {
    pub theta_small: f64,
    pub theta_large: f64,
    pub gamma: f64,
}

impl Default for DynamicThresholdParams {
    fn default() -> Self {
        Self { theta_small: 0.3, theta_large: 0.7, gamma: 200.0 }
    }
}

impl DynamicThresholdParams {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| v > 0.0 && v < 1.0;
        if !in_unit(self.theta_small) {
            return Err(Error::OutOfRange { what: "theta_small", value: self.theta_small });
        }
        if !in_unit(self.theta_large) || self.theta_large <= self.theta_small {
            return Err(Error::OutOfRange { what: "theta_large", value: self.theta_large });
        }
        if !(self.gamma.is_finite() && self.gamma > 1.0) {
            return Err(Error::OutOfRange { what: "gamma", value: self.gamma });
        }
        Ok(())
    }
}

/// Score cutoff for a mask covering fraction `a` of the image:
/// `(1 - (1 - a)^gamma) * (theta_large - theta_small) + theta_small`.
///
/// The end points are accepted and give exactly `theta_small` (a = 0) and
/// `theta_large` (a = 1).
pub fn dynamic_threshold(a: f64, params: &DynamicThresholdParams) -> Result<f64> {
    params.validate()?;
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::OutOfRange { what: "area ratio", value: a });
    }
    let ramp = 1.0 - libm::pow(1.0 - a, params.gamma);
    Ok(ramp * (params.theta_large - params.theta_small) + params.theta_small)
}

/// Keeps predictions whose score strictly exceeds the dynamic threshold for
/// their area ratio.
pub fn filter_teacher_labels(
    predictions: &[PseudoLabel],
    image_area_px: u64,
    params: &DynamicThresholdParams,
) -> Result<Vec<PseudoLabel>> {
    params.validate()?;
    if image_area_px == 0 {
        return Err(Error::ZeroDimension);
    }
    let mut kept = Vec::new();
    for (index, p) in predictions.iter().enumerate() {
        let score = p.score.ok_or(Error::MissingScore { index })?;
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::OutOfRange { what: "score", value: score });
        }
        let a = p.area_px as f64 / image_area_px as f64;
        if score > dynamic_threshold(a, params)? {
            kept.push(p.clone());
        }
    }
    Ok(kept)
}

/// Segmentation losses from the two supervision sources, weighted equally.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub loss_initial: f64,
    pub loss_teacher: f64,
    pub total: f64,
}

pub fn compose_losses(loss_initial: f64, loss_teacher: f64) -> Result<LossReport> {
    for (what, v) in [("initial loss", loss_initial), ("teacher loss", loss_teacher)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::OutOfRange { what, value: v });
        }
    }
    Ok(LossReport { loss_initial, loss_teacher, total: loss_initial + loss_teacher })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::Stage;
    use crate::rle::RleMask;

    fn scored(area_px: u64, score: f64) -> PseudoLabel {
        let mut l = PseudoLabel::new(RleMask::empty(1, 1), Stage::Refined, 0.0).with_score(score);
        l.area_px = area_px;
        l
    }

    #[test]
    fn ema_cases() {
        let cfg = EmaConfig::default();
        assert_eq!(ema_update(&[1.0], &[0.0], &cfg).unwrap(), vec![0.9995]);
        assert_eq!(ema_update(&[3.0, -1.0], &[7.0, 2.0], &EmaConfig { momentum: 0.0 }).unwrap(), vec![7.0, 2.0]);
        assert!(ema_update(&[1.0], &[1.0, 2.0], &cfg).is_err());
        assert!(ema_update(&[1.0], &[1.0], &EmaConfig { momentum: 1.0 }).is_err());
    }

    #[test]
    fn threshold_limits() {
        let p = DynamicThresholdParams::default();
        assert_eq!(dynamic_threshold(1e-300, &p).unwrap(), 0.3);
        assert_eq!(dynamic_threshold(0.0, &p).unwrap(), 0.3);
        assert!((dynamic_threshold(1.0 - 1e-16, &p).unwrap() - 0.7).abs() < 1e-15);
        assert!(dynamic_threshold(-0.1, &p).is_err());
        assert!(dynamic_threshold(f64::NAN, &p).is_err());
        let bad = DynamicThresholdParams { gamma: 1.0, ..p };
        assert!(dynamic_threshold(0.5, &bad).is_err());
    }

    #[test]
    fn filter_rules() {
        let p = DynamicThresholdParams::default();
        let area = 1_000_000u64;
        let tiny = scored(1, 0.5);
        let full = scored(area, 0.5);
        let kept = filter_teacher_labels(&[tiny.clone(), full], area, &p).unwrap();
        assert_eq!(kept, vec![tiny]);

        // Score equal to the threshold is not "exceeding" it.
        let at = dynamic_threshold(0.25, &p).unwrap();
        let boundary = scored(area / 4, at);
        assert!(filter_teacher_labels(&[boundary], area, &p).unwrap().is_empty());

        let mut unscored = scored(10, 0.9);
        unscored.score = None;
        assert_eq!(
            filter_teacher_labels(&[scored(3, 0.9), unscored], area, &p),
            Err(Error::MissingScore { index: 1 })
        );
    }

    #[test]
    fn loss_composition() {
        assert_eq!(compose_losses(0.0, 0.0).unwrap().total, 0.0);
        assert_eq!(compose_losses(1.0, 2.0).unwrap().total, 3.0);
        assert_eq!(compose_losses(0.25, 1.5).unwrap().total, compose_losses(1.5, 0.25).unwrap().total);
        assert!(compose_losses(-1.0, 0.0).is_err());
    }
}
