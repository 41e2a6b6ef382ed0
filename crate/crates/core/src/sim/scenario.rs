//! Scenario files: the JSON description of what to synthesize.
//!
//! A scenario holds a radio configuration and a list of recordings. Each
//! recording is one continuous stream of OFDM frames with its own targets,
//! impairments and metadata. A `dataset` block expands deterministically into
//! many recordings (users × gestures × repetitions).

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    apply_impairments, background_mover_track_with, gesture_track_with, synthesize_channel, ChannelMatrix,
    GestureKind, ImpairmentSpec, KinematicsConfig, MoverConfig, TargetTrack,
};
use crate::error::{Error, Result};
use crate::radio::RadioConfig;

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Gesture {
        gesture: GestureKind,
        base_range: f64,
        #[serde(default = "one")]
        speed_scale: f64,
        /// Start time within the recording (s).
        start: f64,
        duration: f64,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default)]
        seed: u64,
    },
    Background {
        range: f64,
        velocity: f64,
        /// Overrides the mover amplitude law when set.
        #[serde(default)]
        amplitude: Option<f64>,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recording {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub user: u32,
    #[serde(default = "default_location")]
    pub location: String,
    pub num_frames: usize,
    #[serde(default)]
    pub impairments: ImpairmentSpec,
    #[serde(default)]
    pub targets: Vec<TargetSpec>,
}

fn default_location() -> String {
    "A".into()
}

/// Ground-truth gesture interval in OFDM frames, `start..end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub label: GestureKind,
    pub start_frame: usize,
    pub end_frame: usize,
}

/// A synthesized recording: impaired channel matrix plus its ground truth.
#[derive(Debug, Clone)]
pub struct Synthesized {
    pub name: String,
    pub user: u32,
    pub location: String,
    pub matrix: ChannelMatrix,
    pub tracks: Vec<TargetTrack>,
    pub annotations: Vec<Annotation>,
}

impl Recording {
    pub fn synthesize(
        &self,
        radio: &RadioConfig,
        kin: &KinematicsConfig,
        mover: &MoverConfig,
    ) -> Result<Synthesized> {
        let mut tracks = Vec::with_capacity(self.targets.len());
        let mut annotations = Vec::new();
        let duration = self.num_frames as f64 * radio.frame_interval;
        for target in &self.targets {
            match *target {
                TargetSpec::Gesture {
                    gesture,
                    base_range,
                    speed_scale,
                    start,
                    duration: g_dur,
                    amplitude,
                    seed,
                } => {
                    let track =
                        gesture_track_with(kin, gesture, base_range, speed_scale, g_dur, radio, seed)?
                            .scaled(amplitude);
                    if !(start >= 0.0) {
                        return Err(Error::Config(format!("gesture start {start} < 0")));
                    }
                    let start_frame = (start / radio.frame_interval).round() as usize;
                    annotations.push(Annotation {
                        label: gesture,
                        start_frame,
                        end_frame: start_frame + track.len(),
                    });
                    tracks.push(track.placed(start_frame, self.num_frames)?);
                }
                TargetSpec::Background {
                    range,
                    velocity,
                    amplitude,
                } => {
                    let mut track = background_mover_track_with(mover, range, velocity, duration, radio)?;
                    track.states.truncate(self.num_frames);
                    if let Some(a) = amplitude {
                        let gain = a / mover.amplitude_at(range);
                        track = track.scaled(gain);
                    }
                    tracks.push(track);
                }
            }
        }
        let clean = synthesize_channel(radio, &tracks, &self.impairments, self.num_frames)?;
        let mut matrix = apply_impairments(&clean, &self.impairments);
        matrix.doppler_aliased = clean.doppler_aliased;
        Ok(Synthesized {
            name: self.name.clone(),
            user: self.user,
            location: self.location.clone(),
            matrix,
            tracks,
            annotations,
        })
    }
}

/// Randomized background movers added to every recording of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MoverSpec {
    pub count: usize,
    pub min_range: f64,
    pub max_range: f64,
    pub min_speed: f64,
    pub max_speed: f64,
}

impl Default for MoverSpec {
    fn default() -> Self {
        Self {
            count: 1,
            min_range: 1.0,
            max_range: 2.0,
            min_speed: 0.08,
            max_speed: 0.25,
        }
    }
}

/// Synthetic gesture dataset: `users × gestures × reps` single-gesture
/// recordings with per-user kinematic jitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub users: u32,
    pub reps: u32,
    pub gestures: Vec<GestureKind>,
    /// OFDM frames per recording.
    pub num_frames: usize,
    /// Location of each user, cycled; empty means "A".
    pub user_locations: Vec<String>,
    /// Replaces every user's location when set.
    pub location_override: Option<String>,
    pub noise_power: f64,
    /// Leakage power above a unit hand reflection (dB).
    pub coupling_db: f64,
    pub phase_drift_std: f64,
    /// Timing offsets are drawn uniformly from ±this many samples.
    pub max_timing_offset: f64,
    pub min_gesture_duration: f64,
    pub max_gesture_duration: f64,
    pub movers: Option<MoverSpec>,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            users: 5,
            reps: 20,
            gestures: GestureKind::ALL.to_vec(),
            num_frames: 156,
            user_locations: vec!["A".into(), "A".into(), "B".into(), "B".into(), "B".into()],
            location_override: None,
            noise_power: 1.0,
            coupling_db: 30.0,
            phase_drift_std: 0.005,
            max_timing_offset: 2.5,
            min_gesture_duration: 1.8,
            max_gesture_duration: 2.4,
            movers: None,
            seed: 0,
        }
    }
}

/// SplitMix64 finalizer, used to derive independent seeds from tuples.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

struct UserProfile {
    base_range: f64,
    speed_scale: f64,
    duration: f64,
    amplitude: f64,
}

impl DatasetSpec {
    fn user_profile(&self, user: u32) -> UserProfile {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[self.seed, 1, user as u64]));
        UserProfile {
            base_range: rng.gen_range(0.16..0.34),
            speed_scale: rng.gen_range(0.8..1.2),
            duration: rng.gen_range(self.min_gesture_duration..=self.max_gesture_duration),
            amplitude: rng.gen_range(0.8..1.2),
        }
    }

    pub fn location_of(&self, user: u32) -> String {
        if let Some(loc) = &self.location_override {
            return loc.clone();
        }
        if self.user_locations.is_empty() {
            return "A".into();
        }
        self.user_locations[user as usize % self.user_locations.len()].clone()
    }

    /// Expands into recordings ordered by (user, gesture, rep).
    pub fn recordings(&self, radio: &RadioConfig) -> Vec<Recording> {
        let total = self.num_frames as f64 * radio.frame_interval;
        let coupling = 10f64.powf(self.coupling_db / 20.0);
        let mut out = Vec::new();
        for user in 0..self.users {
            let profile = self.user_profile(user);
            for &gesture in &self.gestures {
                for rep in 0..self.reps {
                    let key = [self.seed, 2, user as u64, gesture.index() as u64, rep as u64];
                    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&key));
                    let duration =
                        (profile.duration * rng.gen_range(0.93..1.07)).clamp(0.5, (total - 1.0).max(0.5));
                    let latest = (total - 0.45 - duration).max(0.45);
                    let start = rng.gen_range(0.45..=latest);
                    let mut targets = vec![TargetSpec::Gesture {
                        gesture,
                        base_range: (profile.base_range + rng.gen_range(-0.03..0.03)).max(0.1),
                        speed_scale: profile.speed_scale * rng.gen_range(0.9..1.1),
                        start,
                        duration,
                        amplitude: profile.amplitude * rng.gen_range(0.9..1.1),
                        seed: rng.gen(),
                    }];
                    let impairments = ImpairmentSpec {
                        coupling_amplitude: Complex64::from_polar(
                            coupling,
                            rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
                        ),
                        noise_power: self.noise_power,
                        timing_offset: if self.max_timing_offset > 0.0 {
                            rng.gen_range(-self.max_timing_offset..=self.max_timing_offset)
                        } else {
                            0.0
                        },
                        phase_drift_std: self.phase_drift_std,
                        rng_seed: rng.gen(),
                    };
                    if let Some(m) = &self.movers {
                        let mut mrng =
                            ChaCha8Rng::seed_from_u64(mix_seed(&[key[0], 3, key[2], key[3], key[4]]));
                        for _ in 0..m.count {
                            targets.push(random_mover(&mut mrng, m, total));
                        }
                    }
                    out.push(Recording {
                        name: format!("u{user}-{}-r{rep:02}", gesture.name()),
                        user,
                        location: self.location_of(user),
                        num_frames: self.num_frames,
                        impairments,
                        targets,
                    });
                }
            }
        }
        out
    }
}

fn random_mover<R: Rng>(rng: &mut R, m: &MoverSpec, duration: f64) -> TargetSpec {
    let span = m.max_range - m.min_range;
    let speed_cap = (span / duration).max(m.min_speed);
    let speed = rng.gen_range(m.min_speed..=m.max_speed.min(speed_cap).max(m.min_speed));
    let velocity = if rng.gen_bool(0.5) { speed } else { -speed };
    let travel = velocity * duration;
    let lo = m.min_range + (-travel).max(0.0);
    let hi = (m.max_range - travel.max(0.0)).max(lo);
    TargetSpec::Background {
        range: rng.gen_range(lo..=hi),
        velocity,
        amplitude: None,
    }
}

/// Top-level scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub radio: RadioConfig,
    #[serde(default)]
    pub kinematics: KinematicsConfig,
    #[serde(default)]
    pub mover: MoverConfig,
    #[serde(default)]
    pub recordings: Vec<Recording>,
    #[serde(default)]
    pub dataset: Option<DatasetSpec>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            schema_version: SCENARIO_SCHEMA_VERSION,
            radio: RadioConfig::default(),
            kinematics: KinematicsConfig::default(),
            mover: MoverConfig::default(),
            recordings: Vec::new(),
            dataset: None,
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        if s.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(Error::Version {
                expected: SCENARIO_SCHEMA_VERSION,
                found: s.schema_version,
            });
        }
        s.radio.validate()?;
        Ok(s)
    }

    /// Explicit recordings followed by the expanded dataset, if any.
    pub fn all_recordings(&self) -> Vec<Recording> {
        let mut out = self.recordings.clone();
        if let Some(ds) = &self.dataset {
            out.extend(ds.recordings(&self.radio));
        }
        out
    }

    pub fn synthesize_all(&self) -> Result<Vec<Synthesized>> {
        use rayon::prelude::*;
        self.all_recordings()
            .par_iter()
            .map(|r| r.synthesize(&self.radio, &self.kinematics, &self.mover))
            .collect()
    }
}
