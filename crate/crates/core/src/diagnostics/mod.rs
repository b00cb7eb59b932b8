//! Monitored functionals: energy parts, density and field norms, weak
//! pairings against a fixed test battery, two-scale profiles and parallel
//! wave spectra.

mod norms;
mod spectrum;
mod two_scale;
mod weak;

use std::collections::BTreeMap;

pub use norms::{density_norms, energy_parts, epar_weak_norm, mixed_norm, par_mode_one, DensityNorms, EnergyParts};
pub use spectrum::{parallel_spectrum, PAD_FACTOR};
pub use two_scale::TwoScaleProfile;
pub use weak::{weak_error, weak_error_gyroavg, TestBattery};

/// Fixed CSV columns, before the extras.
pub const CSV_COLUMNS: [&str; 10] = [
    "t",
    "kinetic",
    "field_l2",
    "field_perp",
    "field_par",
    "energy_total",
    "mass",
    "rho_l32",
    "e_mixed_norm",
    "epar_weak",
];

/// One time sample of every monitored quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub kinetic: f64,
    /// `ε∫V²`.
    pub field_l2: f64,
    /// `ε∫|∇_⊥V|²`.
    pub field_perp: f64,
    /// `ε³∫|∇_par V|²`.
    pub field_par: f64,
    pub energy_total: f64,
    pub mass: f64,
    pub rho_l32: f64,
    pub e_mixed_norm: f64,
    pub epar_weak: f64,
    /// Additional named values, written in key order.
    pub extra: BTreeMap<String, f64>,
}

impl DiagnosticsRecord {
    /// Values in [`CSV_COLUMNS`] order.
    pub fn fixed_values(&self) -> [f64; 10] {
        [
            self.t,
            self.kinetic,
            self.field_l2,
            self.field_perp,
            self.field_par,
            self.energy_total,
            self.mass,
            self.rho_l32,
            self.e_mixed_norm,
            self.epar_weak,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.fixed_values()
            .iter()
            .chain(self.extra.values())
            .all(|v| v.is_finite())
    }
}
