//! Radio front-end constants shared by the simulator and the RD pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// OFDM sounding parameters of the monostatic transceiver.
///
/// Defaults describe a 6 GHz channel 79 link: 6.345 GHz carrier, 160 MHz
/// bandwidth, 512 subcarriers and 40 Hz frame rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    pub carrier_freq: f64,
    pub bandwidth: f64,
    pub num_subcarriers: usize,
    pub frame_interval: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            carrier_freq: 6.345e9,
            bandwidth: 160e6,
            num_subcarriers: 512,
            frame_interval: 0.025,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_subcarriers < 2 {
            return Err(Error::Config(format!(
                "num_subcarriers must be >= 2, got {}",
                self.num_subcarriers
            )));
        }
        if !(self.frame_interval > 0.0) || !self.frame_interval.is_finite() {
            return Err(Error::Config("frame_interval must be positive".into()));
        }
        if !(self.bandwidth > 0.0) || !(self.carrier_freq > 0.0) {
            return Err(Error::Config(
                "bandwidth and carrier_freq must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Subcarrier spacing Δf = B / N.
    pub fn subcarrier_spacing(&self) -> f64 {
        self.bandwidth / self.num_subcarriers as f64
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    /// Native range bin c / (2B).
    pub fn range_resolution(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.bandwidth)
    }

    /// Unambiguous Doppler half-span 1 / (2T).
    pub fn max_doppler(&self) -> f64 {
        0.5 / self.frame_interval
    }

    /// Unambiguous velocity half-span λ / (4T).
    pub fn max_velocity(&self) -> f64 {
        self.wavelength() / (4.0 * self.frame_interval)
    }

    /// Round-trip delay of a scatterer at `range` metres.
    pub fn range_to_delay(range: f64) -> f64 {
        2.0 * range / SPEED_OF_LIGHT
    }

    pub fn delay_to_range(delay: f64) -> f64 {
        delay * SPEED_OF_LIGHT / 2.0
    }

    /// Doppler shift of a radial velocity `v = dR/dt`; receding targets
    /// (positive `v`) have negative Doppler.
    pub fn velocity_to_doppler(&self, v: f64) -> f64 {
        -2.0 * v / self.wavelength()
    }

    pub fn doppler_to_velocity(&self, f_d: f64) -> f64 {
        -f_d * self.wavelength() / 2.0
    }

    /// Sample period of the time-domain LTF, 1 / B.
    pub fn sample_period(&self) -> f64 {
        1.0 / self.bandwidth
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_quantities() {
        let cfg = RadioConfig::default();
        assert!((cfg.subcarrier_spacing() * 512.0 - 160e6).abs() < 1e-6);
        assert!((cfg.wavelength() - 0.047249).abs() < 1e-5);
        assert!((cfg.range_resolution() - 0.936851).abs() < 1e-5);
        assert!((cfg.max_velocity() - 0.47249).abs() < 1e-4);
        assert!((cfg.max_doppler() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn doppler_sign_convention() {
        let cfg = RadioConfig::default();
        assert!(cfg.velocity_to_doppler(0.3) < 0.0);
        let v = cfg.doppler_to_velocity(cfg.velocity_to_doppler(-0.2));
        assert!((v + 0.2).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = RadioConfig {
            num_subcarriers: 1,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = RadioConfig {
            frame_interval: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
