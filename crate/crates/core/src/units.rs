//! Unit conventions.
//!
//! Everything inside the crate is expressed with `hbar = k_B = 1`. In the
//! physical system the time unit is the picosecond, so frequencies are in
//! rad/ps and energies (including `k_B T`) are converted to rad/ps by
//! dividing by `hbar`.

use serde::{Deserialize, Serialize};

/// Reduced Planck constant in meV ps.
pub const HBAR_MEV_PS: f64 = 0.6582119569;

/// Boltzmann constant in meV/K.
pub const KB_MEV_PER_K: f64 = 8.617333262e-2;

/// Picoseconds per second.
pub const PS_PER_S: f64 = 1e12;

/// How user-facing quantities are expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum UnitsMode {
    /// Time in ps, energies in meV, temperature in K.
    Physical,
    /// Dimensionless time and frequency with `hbar = k_B = 1`.
    #[default]
    Natural,
}

impl UnitsMode {
    /// Converts an energy (meV in physical mode) to an internal angular frequency.
    pub fn energy_to_frequency(self, energy: f64) -> f64 {
        match self {
            UnitsMode::Physical => energy / HBAR_MEV_PS,
            UnitsMode::Natural => energy,
        }
    }

    pub fn frequency_to_energy(self, omega: f64) -> f64 {
        match self {
            UnitsMode::Physical => omega * HBAR_MEV_PS,
            UnitsMode::Natural => omega,
        }
    }

    /// Converts a temperature (K in physical mode) to the thermal frequency `k_B T / hbar`.
    pub fn temperature_to_frequency(self, temperature: f64) -> f64 {
        match self {
            UnitsMode::Physical => temperature * KB_MEV_PER_K / HBAR_MEV_PS,
            UnitsMode::Natural => temperature,
        }
    }

    pub fn frequency_to_temperature(self, omega: f64) -> f64 {
        match self {
            UnitsMode::Physical => omega * HBAR_MEV_PS / KB_MEV_PER_K,
            UnitsMode::Natural => omega,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            UnitsMode::Physical => "physical",
            UnitsMode::Natural => "natural",
        }
    }
}

impl std::str::FromStr for UnitsMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "physical" => Ok(UnitsMode::Physical),
            "natural" => Ok(UnitsMode::Natural),
            other => Err(format!("unknown units mode '{other}'")),
        }
    }
}

/// Converts a coupling constant given in `s^k` to `ps^k`.
pub fn seconds_power_to_ps(value: f64, power: i32) -> f64 {
    value * PS_PER_S.powi(power)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn physical_round_trips() {
        let m = UnitsMode::Physical;
        for &e in &[1e-6, 0.37, 2.0, 505.0, 1e5] {
            let back = m.frequency_to_energy(m.energy_to_frequency(e));
            assert!(((back - e) / e).abs() < 1e-12);
            let back = m.frequency_to_temperature(m.temperature_to_frequency(e));
            assert!(((back - e) / e).abs() < 1e-12);
        }
    }

    #[test]
    fn natural_is_identity() {
        let m = UnitsMode::Natural;
        assert_eq!(m.energy_to_frequency(3.5), 3.5);
        assert_eq!(m.temperature_to_frequency(1e4), 1e4);
    }

    #[test]
    fn two_mev_is_about_three_rad_per_ps() {
        let w = UnitsMode::Physical.energy_to_frequency(2.0);
        assert!((w - 3.038535).abs() < 1e-5);
    }

    #[test]
    fn parses_mode_names() {
        assert_eq!("Physical".parse::<UnitsMode>().unwrap(), UnitsMode::Physical);
        assert!("metric".parse::<UnitsMode>().is_err());
    }
}
