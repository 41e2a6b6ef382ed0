use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::transform::{DopplerTransform, RangeTransform};
use super::{estimate_noise_floor, to_db, Heatmap, RDGrid};
use crate::error::{Error, Result};
use crate::radio::RadioConfig;
use crate::sim::{running_mean, ChannelMatrix};

/// How subcarriers are combined before the Doppler transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SpectrogramMode {
    /// Keep only delay gates up to `threshold` metres.
    RangeFiltered { threshold: f64 },
    /// Range-agnostic view: per-subcarrier Doppler power averaged over all
    /// subcarriers, as seen by a link without delay resolution.
    AllSubcarriers,
}

impl std::str::FromStr for SpectrogramMode {
    type Err = Error;

    /// Parses `range_filtered=<metres>`, `off` or `all_subcarriers`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "off" || s == "all_subcarriers" {
            return Ok(Self::AllSubcarriers);
        }
        if let Some(v) = s.strip_prefix("range_filtered=") {
            let threshold = v
                .parse()
                .map_err(|_| Error::Config(format!("bad range threshold {v:?}")))?;
            return Ok(Self::RangeFiltered { threshold });
        }
        Err(Error::Config(format!(
            "unknown spectrogram mode {s:?}; use range_filtered=<m> or off"
        )))
    }
}

/// Time × velocity power in dB, time-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrogram {
    pub mode: SpectrogramMode,
    pub times: Vec<f64>,
    pub velocities: Vec<f64>,
    pub values: Vec<f64>,
    /// Median cell power (dB).
    pub noise_floor: f64,
}

impl Spectrogram {
    pub fn row(&self, t: usize) -> &[f64] {
        let n = self.velocities.len();
        &self.values[t * n..(t + 1) * n]
    }

    /// Velocity index of the strongest cell at every time step.
    pub fn peak_track(&self) -> Vec<usize> {
        (0..self.times.len())
            .map(|t| {
                let row = self.row(t);
                (0..row.len()).fold(0, |b, i| if row[i] > row[b] { i } else { b })
            })
            .collect()
    }

    /// Values of one velocity cell over time.
    pub fn velocity_trace(&self, v: usize) -> Vec<f64> {
        (0..self.times.len()).map(|t| self.row(t)[v]).collect()
    }

    pub fn heatmap(&self) -> Heatmap {
        Heatmap {
            row_label: "time_s".into(),
            col_label: "velocity_mps".into(),
            row_axis: self.times.clone(),
            col_axis: self.velocities.clone(),
            values: self.values.clone(),
        }
    }
}

/// Subtracts the per-column mean of a frames × cols block.
pub(crate) fn remove_mean(block: &mut [Complex64], cols: usize) {
    let mean = running_mean(block, cols);
    for row in block.chunks_exact_mut(cols) {
        for (v, m) in row.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
}

/// Velocity spectrogram of a synchronized stream, one column per CPI.
/// Self-interference is cancelled per CPI. Both modes share the same power
/// scale: a target lying wholly inside the retained gates has equal power in
/// either mode.
pub fn velocity_spectrogram(
    d: &ChannelMatrix,
    radio: &RadioConfig,
    grid: &RDGrid,
    mode: SpectrogramMode,
) -> Result<Spectrogram> {
    grid.validate()?;
    radio.validate()?;
    let n_cpi = grid.num_cpis(d.frames());
    if n_cpi == 0 {
        return Err(Error::Shape(format!(
            "stream of {} frames is shorter than one CPI",
            d.frames()
        )));
    }
    let m = grid.cpi_frames;
    let velocities = grid.velocities();
    let doppler = DopplerTransform::new(radio, &velocities, m, grid.doppler_window);
    let n_sc = d.subcarriers();
    let n_v = velocities.len();

    let (block, cols, gain) = match mode {
        SpectrogramMode::RangeFiltered { threshold } => {
            let max = radio.range_resolution() * n_sc as f64;
            if !(threshold > 0.0 && threshold < max) {
                return Err(Error::Config(format!(
                    "range threshold {threshold} outside (0, {max}) m"
                )));
            }
            let gates: Vec<f64> = (0..)
                .map(|i| i as f64 * grid.range_cell)
                .take_while(|r| *r <= threshold + 1e-12)
                .collect();
            let rt = RangeTransform::new(radio, &gates);
            let gain = grid.range_cell / radio.range_resolution() / n_sc as f64;
            (rt.apply(d)?, gates.len(), gain)
        }
        SpectrogramMode::AllSubcarriers => (d.data().to_vec(), n_sc, 1.0 / n_sc as f64),
    };

    let columns: Vec<Vec<f64>> = (0..n_cpi)
        .into_par_iter()
        .map(|k| {
            let s = k * grid.cpi_hop;
            let mut cpi = block[s * cols..(s + m) * cols].to_vec();
            remove_mean(&mut cpi, cols);
            let mut out = vec![0.0; n_v];
            for g in 0..cols {
                doppler.accumulate_power(&cpi, cols, g, &mut out, gain);
            }
            out
        })
        .collect();
    let power: Vec<f64> = columns.into_iter().flatten().collect();
    Ok(Spectrogram {
        mode,
        times: (0..n_cpi).map(|k| grid.cpi_time(k, radio)).collect(),
        velocities,
        noise_floor: estimate_noise_floor(&power)?,
        values: power.into_iter().map(to_db).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{synthesize_channel, ImpairmentSpec, TargetState, TargetTrack};

    fn radio() -> RadioConfig {
        RadioConfig {
            num_subcarriers: 128,
            ..Default::default()
        }
    }

    fn scene(targets: &[(f64, f64, f64)], frames: usize, noise: f64) -> ChannelMatrix {
        let r = radio();
        let tracks: Vec<TargetTrack> = targets
            .iter()
            .map(|&(range, v, a)| {
                let s = TargetState::new(RadioConfig::range_to_delay(range), r.velocity_to_doppler(v), a);
                TargetTrack::constant(s, frames)
            })
            .collect();
        let imp = ImpairmentSpec {
            noise_power: noise,
            rng_seed: 5,
            ..Default::default()
        };
        synthesize_channel(&r, &tracks, &imp, frames).unwrap()
    }

    #[test]
    fn parses_modes() {
        assert_eq!(
            "range_filtered=1.0".parse::<SpectrogramMode>().unwrap(),
            SpectrogramMode::RangeFiltered { threshold: 1.0 }
        );
        assert_eq!(
            "off".parse::<SpectrogramMode>().unwrap(),
            SpectrogramMode::AllSubcarriers
        );
        assert!("range_filtered=x".parse::<SpectrogramMode>().is_err());
        assert!("sideways".parse::<SpectrogramMode>().is_err());
    }

    #[test]
    fn modes_agree_on_a_near_target() {
        // equal up to the sinc² mass falling outside the 1 m gate window
        let d = scene(&[(0.45, 0.2, 1.0)], 64, 0.0);
        let g = RDGrid::default();
        let a = velocity_spectrogram(&d, &radio(), &g, SpectrogramMode::AllSubcarriers).unwrap();
        let f = velocity_spectrogram(
            &d,
            &radio(),
            &g,
            SpectrogramMode::RangeFiltered { threshold: 1.0 },
        )
        .unwrap();
        assert_eq!(a.peak_track(), f.peak_track());
        let v = g.velocity_index(0.2);
        let diff = a.row(0)[v] - f.row(0)[v];
        assert!(diff > 0.0 && diff < 2.0, "{diff}");
    }

    #[test]
    fn filtering_attenuates_far_mover() {
        let d = scene(&[(0.2, 0.1, 1.0), (8.0, -0.3, 1.0)], 64, 0.0);
        let g = RDGrid::default();
        let a = velocity_spectrogram(&d, &radio(), &g, SpectrogramMode::AllSubcarriers).unwrap();
        let f = velocity_spectrogram(
            &d,
            &radio(),
            &g,
            SpectrogramMode::RangeFiltered { threshold: 1.0 },
        )
        .unwrap();
        let v = g.velocity_index(-0.3);
        assert!(a.row(0)[v] - f.row(0)[v] > 20.0);
    }

    #[test]
    fn static_scene_is_cancelled() {
        let d = scene(&[(0.3, 0.0, 5.0)], 40, 1e-6);
        let s =
            velocity_spectrogram(&d, &radio(), &RDGrid::default(), SpectrogramMode::AllSubcarriers).unwrap();
        assert!(s.values.iter().all(|&x| x < -40.0));
        assert_eq!(s.times.len(), 3);
    }

    #[test]
    fn rejects_bad_threshold_and_short_stream() {
        let d = scene(&[], 40, 1.0);
        let g = RDGrid::default();
        for t in [0.0, -1.0, 1e6, f64::NAN] {
            assert!(
                velocity_spectrogram(&d, &radio(), &g, SpectrogramMode::RangeFiltered { threshold: t })
                    .is_err()
            );
        }
        let short = scene(&[], 10, 1.0);
        assert!(velocity_spectrogram(&short, &radio(), &g, SpectrogramMode::AllSubcarriers).is_err());
    }
}
