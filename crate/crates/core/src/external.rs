//! Prescribed electric fields given as truncated Fourier series.

use std::f64::consts::PI;
use std::fmt;

use crate::error::{FlrError, Result};
use crate::field::{GridSpec, ScalarField, VectorField};
use crate::geometry::Vec3;

/// Largest admissible mode number per direction.
pub const MAX_MODE: i32 = 2;

/// One term `amplitude · cos(2π k·x + phase)` added to component `component`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldTerm {
    pub component: usize,
    pub mode: [i32; 3],
    pub amplitude: f64,
    pub phase: f64,
}

/// A smooth, time-independent field `E(x)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExternalField {
    terms: Vec<FieldTerm>,
}

impl ExternalField {
    pub fn new(terms: Vec<FieldTerm>) -> Result<Self> {
        for t in &terms {
            if t.component > 2 {
                return Err(FlrError::InvalidArgument(format!(
                    "field component {} out of range 0..=2",
                    t.component
                )));
            }
            if t.mode.iter().any(|m| m.abs() > MAX_MODE) {
                return Err(FlrError::InvalidArgument(format!(
                    "field mode {:?} exceeds |k| <= {MAX_MODE}",
                    t.mode
                )));
            }
            if !(t.amplitude.is_finite() && t.phase.is_finite()) {
                return Err(FlrError::NonFinite("external field coefficient".into()));
            }
        }
        Ok(ExternalField { terms })
    }

    /// Uniform field `e`.
    pub fn uniform(e: Vec3) -> Self {
        let terms = (0..3)
            .filter(|&c| e[c] != 0.0)
            .map(|c| FieldTerm {
                component: c,
                mode: [0; 3],
                amplitude: e[c],
                phase: 0.0,
            })
            .collect();
        ExternalField { terms }
    }

    pub fn terms(&self) -> &[FieldTerm] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.amplitude == 0.0)
    }

    #[inline]
    pub fn eval(&self, x: Vec3) -> Vec3 {
        let mut e = [0.0; 3];
        for t in &self.terms {
            let arg = 2.0 * PI * (t.mode[0] as f64 * x[0] + t.mode[1] as f64 * x[1] + t.mode[2] as f64 * x[2]);
            e[t.component] += t.amplitude * (arg + t.phase).cos();
        }
        e
    }

    /// Node samples of the field.
    pub fn sample(&self, spec: GridSpec) -> VectorField {
        VectorField {
            comps: [0, 1, 2].map(|c| ScalarField::from_fn(spec, |x| self.eval(x)[c])),
        }
    }

    /// Parses comma-separated terms `component:k1:k2:k3:amplitude[:phase]`.
    /// Components are `1`, `2` or `par` (equivalently `3`).
    pub fn parse(text: &str) -> Result<Self> {
        let mut terms = Vec::new();
        for raw in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let parts: Vec<&str> = raw.split(':').map(str::trim).collect();
            if parts.len() != 5 && parts.len() != 6 {
                return Err(FlrError::InvalidArgument(format!(
                    "field term `{raw}` must be component:k1:k2:k3:amplitude[:phase]"
                )));
            }
            let component = match parts[0] {
                "1" => 0,
                "2" => 1,
                "3" | "par" => 2,
                other => {
                    return Err(FlrError::InvalidArgument(format!(
                        "unknown field component `{other}` in `{raw}`"
                    )))
                }
            };
            let int = |s: &str| {
                s.parse::<i32>()
                    .map_err(|_| FlrError::InvalidArgument(format!("bad mode `{s}` in `{raw}`")))
            };
            let real = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| FlrError::InvalidArgument(format!("bad number `{s}` in `{raw}`")))
            };
            terms.push(FieldTerm {
                component,
                mode: [int(parts[1])?, int(parts[2])?, int(parts[3])?],
                amplitude: real(parts[4])?,
                phase: if parts.len() == 6 { real(parts[5])? } else { 0.0 },
            });
        }
        ExternalField::new(terms)
    }
}

impl fmt::Display for ExternalField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            let comp = ["1", "2", "par"][t.component];
            write!(
                f,
                "{comp}:{}:{}:{}:{}:{}",
                t.mode[0], t.mode[1], t.mode[2], t.amplitude, t.phase
            )?;
        }
        Ok(())
    }
}
