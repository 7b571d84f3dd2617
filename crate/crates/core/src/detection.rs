//! Detector output vectors: box, objectness and per-class scores.

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::error::{Error, Result};

/// A single detector proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionVector {
    #[serde(rename = "box")]
    pub bbox: BBox,
    /// Probability that the box holds any object. Two-stage detectors
    /// without an explicit objectness report 1.
    #[serde(default = "one")]
    pub objectness: f64,
    #[serde(rename = "scores")]
    pub class_scores: Vec<f64>,
}

fn one() -> f64 {
    1.0
}

fn is_prob(v: f64) -> bool {
    v.is_finite() && (0.0..=1.0).contains(&v)
}

impl DetectionVector {
    pub fn new(bbox: BBox, objectness: f64, class_scores: Vec<f64>) -> Result<Self> {
        let d = Self { bbox, objectness, class_scores };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_scores.is_empty() {
            return Err(Error::invalid("class score vector is empty"));
        }
        if !is_prob(self.objectness) {
            return Err(Error::invalid(format!("objectness {} outside [0, 1]", self.objectness)));
        }
        if let Some(s) = self.class_scores.iter().find(|s| !is_prob(**s)) {
            return Err(Error::invalid(format!("class score {s} outside [0, 1]")));
        }
        // BBox deserialization already enforces ordering; re-check for struct literals.
        BBox::new(self.bbox.x1, self.bbox.y1, self.bbox.x2, self.bbox.y2)?;
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.class_scores.len()
    }

    /// Index of the highest class score; lowest index on ties.
    pub fn top_class(&self) -> usize {
        let mut best = 0;
        for (i, &s) in self.class_scores.iter().enumerate() {
            if s > self.class_scores[best] {
                best = i;
            }
        }
        best
    }

    /// `objectness * max(class_scores)`, used for score-floor filtering.
    pub fn confidence(&self) -> f64 {
        self.objectness * self.class_scores[self.top_class()]
    }
}

/// The detection an explanation is computed for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub target: DetectionVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl TargetSpec {
    pub fn new(target: DetectionVector) -> Result<Self> {
        target.validate()?;
        Ok(Self { target, label: None })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }
}

/// All proposals a detector returned for one image.
pub type ProposalSet = Vec<DetectionVector>;

/// Cosine of the angle between two score vectors; 0 if either has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "score vectors differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_examples() {
        assert!((cosine(&[0.2, 0.8], &[0.2, 0.8]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn cosine_zero_norm_and_mismatch() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(cosine(&[1.0], &[1.0, 0.0]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn detection_json_shape() {
        let d: DetectionVector =
            serde_json::from_str(r#"{"box":[1,2,3,4],"objectness":0.5,"scores":[0.1,0.9]}"#)
                .unwrap();
        assert_eq!(d.top_class(), 1);
        assert!((d.confidence() - 0.45).abs() < 1e-12);
        // objectness defaults to 1 for two-stage backends
        let d: DetectionVector = serde_json::from_str(r#"{"box":[0,0,1,1],"scores":[1]}"#).unwrap();
        assert_eq!(d.objectness, 1.0);
    }

    #[test]
    fn validation() {
        let b = BBox::new(0., 0., 1., 1.).unwrap();
        assert!(DetectionVector::new(b, 0.5, vec![]).is_err());
        assert!(DetectionVector::new(b, 1.5, vec![0.1]).is_err());
        assert!(DetectionVector::new(b, 0.5, vec![-0.1]).is_err());
        assert!(DetectionVector::new(b, 0.5, vec![0.1]).is_ok());
    }

    proptest! {
        #[test]
        fn cosine_symmetric_scale_invariant(
            a in prop::collection::vec(0.0..1.0f64, 4),
            b in prop::collection::vec(0.0..1.0f64, 4),
            lambda in 0.01..100.0f64,
        ) {
            let ab = cosine(&a, &b).unwrap();
            prop_assert!((ab - cosine(&b, &a).unwrap()).abs() < 1e-12);
            let scaled: Vec<f64> = a.iter().map(|v| v * lambda).collect();
            prop_assert!((ab - cosine(&scaled, &b).unwrap()).abs() < 1e-9);
        }
    }
}
