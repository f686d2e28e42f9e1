//! Scenario parameters shared by every stage of the simulator.
//!
//! Powers are stored in watts. When read from JSON a power may be given
//! either as a bare number (watts) or as `{"dbm": <value>}`.

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

/// Propagation speed used for wavelengths and path loss (m/s).
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Converts a power level in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PowerRepr {
    Watts(f64),
    Dbm { dbm: f64 },
    W { watts: f64 },
}

fn de_power<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(match PowerRepr::deserialize(d)? {
        PowerRepr::Watts(w) | PowerRepr::W { watts: w } => w,
        PowerRepr::Dbm { dbm } => dbm_to_watts(dbm),
    })
}

/// Small-scale fading model for the user channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Fading {
    /// Deterministic line-of-sight coefficient `a = 1`.
    #[default]
    UnitLos,
    /// Circularly-symmetric complex Gaussian `CN(0, 1)`.
    Rayleigh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// Base-station antennas `N`.
    pub n_antennas: usize,
    /// Primary users, one pre-configured beam each (`K`).
    pub n_primary: usize,
    /// Secondary users `M`.
    pub n_secondary: usize,
    /// Beamsteering codebook size `N_Q`.
    pub codebook_size: usize,
    pub carrier_hz: f64,
    /// Antenna spacing in meters; half a wavelength by default.
    pub antenna_spacing: f64,
    /// Molecular absorption coefficient (1/m).
    pub absorption: f64,
    pub path_loss_exponent: f64,
    #[serde(deserialize_with = "de_power")]
    pub noise_power: f64,
    /// Transmit power of every primary beam.
    #[serde(deserialize_with = "de_power")]
    pub primary_power: f64,
    /// Total power budget shared by the secondary users.
    #[serde(deserialize_with = "de_power")]
    pub secondary_budget: f64,
    /// Primary target rates in bits per channel use; a single entry applies to every beam.
    pub target_rates: Vec<f64>,
    /// Edge of the square the primary users are dropped in (m).
    pub primary_square: f64,
    /// Edge of the square the secondary users are dropped in (m).
    pub secondary_square: f64,
    /// Penalty weight on co-beam secondary power.
    pub penalty: f64,
    pub fading: Fading,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        let carrier_hz = 300e9;
        Self {
            n_antennas: 10,
            n_primary: 4,
            n_secondary: 1,
            codebook_size: 10,
            carrier_hz,
            antenna_spacing: SPEED_OF_LIGHT / (2.0 * carrier_hz),
            absorption: 5e-3,
            path_loss_exponent: 2.0,
            noise_power: dbm_to_watts(-90.0),
            primary_power: dbm_to_watts(30.0),
            secondary_budget: dbm_to_watts(30.0),
            target_rates: vec![1.0],
            primary_square: 10.0,
            secondary_square: 10.0,
            penalty: 1e8,
            fading: Fading::UnitLos,
            seed: 0,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_antennas == 0 || self.n_primary == 0 || self.n_secondary == 0 {
            return bad("antenna, primary and secondary counts must be at least 1".into());
        }
        if self.n_primary > self.n_antennas {
            return bad(format!(
                "{} primary users exceed {} antennas",
                self.n_primary, self.n_antennas
            ));
        }
        if self.codebook_size == 0 {
            return bad("codebook must contain at least one codeword".into());
        }
        let positive = [
            ("carrier_hz", self.carrier_hz),
            ("antenna_spacing", self.antenna_spacing),
            ("noise_power", self.noise_power),
            ("primary_power", self.primary_power),
            ("primary_square", self.primary_square),
            ("secondary_square", self.secondary_square),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.secondary_budget >= 0.0 && self.secondary_budget.is_finite()) {
            return bad(format!(
                "secondary_budget must be non-negative, got {}",
                self.secondary_budget
            ));
        }
        if !(self.absorption >= 0.0 && self.path_loss_exponent >= 0.0) {
            return bad("absorption and path-loss exponent must be non-negative".into());
        }
        if self.target_rates.len() != 1 && self.target_rates.len() != self.n_primary {
            return bad(format!(
                "target_rates must have 1 or {} entries, got {}",
                self.n_primary,
                self.target_rates.len()
            ));
        }
        if self.target_rates.iter().any(|r| !(*r >= 0.0)) {
            return bad("target rates must be non-negative".into());
        }
        if !(self.penalty >= 1.0) {
            return bad(format!("penalty must be at least 1, got {}", self.penalty));
        }
        Ok(())
    }

    /// Target rate of primary user `k` (0-based).
    pub fn target_rate(&self, k: usize) -> f64 {
        if self.target_rates.len() == 1 {
            self.target_rates[0]
        } else {
            self.target_rates[k]
        }
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_scenario() {
        let cfg = SystemConfig::default();
        cfg.validate().unwrap();
        assert!((cfg.noise_power - 1e-12).abs() < 1e-24);
        assert!((cfg.primary_power - 1.0).abs() < 1e-12);
        assert!((cfg.antenna_spacing - 5e-4).abs() < 1e-15);
    }

    #[test]
    fn dbm_conversion() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-12);
        assert!((dbm_to_watts(0.0) - 1e-3).abs() < 1e-15);
        assert!((watts_to_dbm(1e-12) + 90.0).abs() < 1e-9);
    }

    #[test]
    fn powers_accept_dbm_or_watts() {
        let cfg: SystemConfig = serde_json::from_str(
            r#"{"noise_power": {"dbm": -90}, "primary_power": 2.0, "secondary_budget": {"watts": 0.5}}"#,
        )
        .unwrap();
        assert!((cfg.noise_power - 1e-12).abs() < 1e-24);
        assert_eq!(cfg.primary_power, 2.0);
        assert_eq!(cfg.secondary_budget, 0.5);
    }

    #[test]
    fn rejects_more_primaries_than_antennas() {
        let cfg = SystemConfig {
            n_primary: 5,
            n_antennas: 4,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn rejects_mismatched_targets() {
        let cfg = SystemConfig {
            target_rates: vec![1.0, 2.0],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
