use crate::error::{FlrError, Result};
use crate::geometry::{gyro_transform, Convention, Direction, PhasePoint};

/// Coordinates in which an ensemble's points are expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    Physical,
    /// Filtered coordinates `(y, w)`; the gyrophase is implied by the owner
    /// (`t/ε` for the scaled system, absent for the limit system).
    Gyro,
}

/// Weighted macro-particles sampling a phase-space density.
///
/// Weights are fixed at construction: there is no mutable access to them, so
/// positivity and total mass are preserved by every push.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    points: Vec<PhasePoint>,
    weights: Vec<f64>,
    frame: Frame,
}

impl Ensemble {
    pub fn new(points: Vec<PhasePoint>, weights: Vec<f64>, frame: Frame) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(FlrError::InvalidArgument(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite()) {
            return Err(FlrError::NonFinite(format!("particle weight {w}")));
        }
        if let Some(w) = weights.iter().find(|&&w| w <= 0.0) {
            return Err(FlrError::InvalidArgument(format!(
                "particle weights must be positive, got {w}"
            )));
        }
        Ok(Ensemble { points, weights, frame })
    }

    /// Equal weights `1/N`.
    pub fn uniform(points: Vec<PhasePoint>, frame: Frame) -> Result<Self> {
        let w = 1.0 / points.len() as f64;
        let weights = vec![w; points.len()];
        Ensemble::new(points, weights, frame)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[PhasePoint] {
        &self.points
    }

    pub fn points_mut(&mut self) -> &mut [PhasePoint] {
        &mut self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    /// Compensated sum of the weights.
    pub fn total_weight(&self) -> f64 {
        neumaier_sum(self.weights.iter().copied())
    }

    /// `Σ w |v|²`.
    pub fn kinetic(&self) -> f64 {
        neumaier_sum(
            self.points
                .iter()
                .zip(&self.weights)
                .map(|(p, w)| w * (p.v[0] * p.v[0] + p.v[1] * p.v[1] + p.v[2] * p.v[2])),
        )
    }

    /// Re-expresses the ensemble at gyrophase `theta` in the requested frame.
    pub fn to_frame(&self, frame: Frame, theta: f64, conv: Convention) -> Ensemble {
        let dir = match (self.frame, frame) {
            (a, b) if a == b => return self.clone(),
            (Frame::Physical, Frame::Gyro) => Direction::PhysToGyro,
            _ => Direction::GyroToPhys,
        };
        let points = self
            .points
            .iter()
            .map(|&p| gyro_transform(p, theta, dir, conv))
            .collect();
        Ensemble {
            points,
            weights: self.weights.clone(),
            frame,
        }
    }
}

/// Neumaier-compensated summation.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
