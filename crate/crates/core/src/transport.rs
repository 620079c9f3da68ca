//! Bedload transport rate per flow regime.
//!
//! Bed shear stress from Manning's law under uniform flow, converted to the
//! Shields number and fed to the Meyer-Peter-Müller formula. The volumetric
//! rate (m³/s) is then expressed as a fraction of the reach capacity per day.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::regime::RegimeChain;

const SECONDS_PER_DAY: f64 = 86_400.0;

/// Channel geometry and sediment material. Missing JSON keys fall back to
/// [`SedimentProperties::default`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SedimentProperties {
    /// Gravitational acceleration (m/s²).
    pub g: f64,
    /// Channel width (m).
    #[serde(rename = "B")]
    pub width: f64,
    /// Bed slope (dimensionless).
    #[serde(rename = "l")]
    pub slope: f64,
    /// Manning roughness (m^(-1/3)·s).
    #[serde(rename = "n")]
    pub manning: f64,
    /// Water density (kg/m³).
    pub rho: f64,
    /// Sediment density (kg/m³).
    pub rho_s: f64,
    /// Particle diameter (m).
    #[serde(rename = "gamma")]
    pub diameter: f64,
    /// Storable sediment volume of the reach (m³).
    pub capacity: f64,
    /// Critical Shields number.
    pub theta_c: f64,
}

impl Default for SedimentProperties {
    fn default() -> Self {
        Self {
            g: 9.81,
            width: 25.0,
            slope: 0.001,
            manning: 0.035,
            rho: 1000.0,
            rho_s: 2600.0,
            diameter: 5.0e-3,
            capacity: 100.0,
            theta_c: 0.047,
        }
    }
}

impl SedimentProperties {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("g", self.g),
            ("B", self.width),
            ("l", self.slope),
            ("n", self.manning),
            ("rho", self.rho),
            ("rho_s", self.rho_s),
            ("gamma", self.diameter),
            ("capacity", self.capacity),
            ("theta_c", self.theta_c),
        ];
        if let Some((name, v)) = fields.iter().find(|(_, v)| !(*v > 0.0) || !v.is_finite()) {
            return input(format!("sediment property {name} = {v} must be finite and > 0"));
        }
        if self.rho_s <= self.rho {
            return input("sediment density must exceed water density");
        }
        Ok(())
    }

    /// Submerged specific gravity `ρ_s/ρ − 1`.
    pub fn sigma(&self) -> f64 {
        self.rho_s / self.rho - 1.0
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let props: Self = serde_json::from_reader(std::fs::File::open(path)?)?;
        props.validate()?;
        Ok(props)
    }
}

fn check_discharge(q: f64) -> Result<()> {
    if q >= 0.0 && q.is_finite() {
        Ok(())
    } else {
        input(format!("discharge must be finite and >= 0, got {q}"))
    }
}

/// Bed shear stress (N/m²): `ρ g n^{3/5} l^{7/10} B^{-3/5} q^{3/5}`.
pub fn shear_stress(q: f64, props: &SedimentProperties) -> Result<f64> {
    check_discharge(q)?;
    let p = props;
    Ok(p.rho * p.g * p.manning.powf(0.6) * p.slope.powf(0.7) * p.width.powf(-0.6) * q.powf(0.6))
}

/// Shields number of the bed shear stress.
pub fn shields_number(q: f64, props: &SedimentProperties) -> Result<f64> {
    Ok(shear_stress(q, props)? / (props.rho * props.sigma() * props.g * props.diameter))
}

/// Meyer-Peter-Müller bedload rate (m³/s).
pub fn transport_rate_physical(q: f64, props: &SedimentProperties) -> Result<f64> {
    let excess = (shields_number(q, props)? - props.theta_c).max(0.0);
    let p = props;
    Ok(8.0 * p.width * p.diameter.powf(1.5) * (p.g * p.sigma()).sqrt() * excess.powf(1.5))
}

/// Transport rate as a fraction of the reach capacity per day.
pub fn normalized_rate(q: f64, props: &SedimentProperties) -> Result<f64> {
    Ok(transport_rate_physical(q, props)? * SECONDS_PER_DAY / props.capacity)
}

/// Normalized rate `S_i` at each regime discharge.
pub fn rates_for_chain(chain: &RegimeChain, props: &SedimentProperties) -> Result<Vec<f64>> {
    props.validate()?;
    chain.discharges().iter().map(|&q| normalized_rate(q, props)).collect()
}
