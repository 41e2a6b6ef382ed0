use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use rdsense_core::dataio::{SplitProtocol, SplitSpec};
use rdsense_core::learn::{CnnGruSpec, TrainConfig};
use rdsense_core::rdpipe::{PipelineConfig, SpectrogramMode};
use rdsense_core::RadioConfig;

/// Environment variable naming the root under which runs write their outputs.
pub const OUTPUT_ROOT_ENV: &str = "RDSENSE_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "rdsense-out";
pub const EFFECTIVE_CONFIG: &str = "effective_config.json";

/// Input files of a run. Kept in the config so that the echoed
/// `effective_config.json` alone reproduces the run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub scenario: Option<PathBuf>,
    pub archive: Option<PathBuf>,
    pub store: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Split descriptor for `eval`; replaces the `split` block.
    pub split: Option<PathBuf>,
}

/// Figure selection for `export-figure`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FigureConfig {
    /// `rd`, `spectrogram` or `clip`.
    pub kind: String,
    /// Recording name (archive figures) or clip index (clip figures).
    pub recording: Option<String>,
    pub clip: usize,
    /// CPI of an RD figure or frame of a clip figure.
    pub index: usize,
    pub mode: Option<SpectrogramMode>,
}

impl Default for FigureConfig {
    fn default() -> Self {
        Self {
            kind: "rd".into(),
            recording: None,
            clip: 0,
            index: 0,
            mode: None,
        }
    }
}

/// Complete configuration of one invocation: a JSON file merged with flag
/// overrides. Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// When set, replaces the seeds of the split, the training runs and the
    /// scenario dataset block.
    pub rng_seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub inputs: Inputs,
    /// Replaces the scenario's radio block in `simulate`.
    pub radio: Option<RadioConfig>,
    pub pipeline: PipelineConfig,
    /// Spectrogram figures emitted by `pipeline`.
    pub spectrogram: Vec<SpectrogramMode>,
    pub model: CnnGruSpec,
    pub train: TrainConfig,
    pub split: SplitSpec,
    /// Also fit the nearest-centroid baseline in `train`.
    pub baseline: bool,
    pub figure: FigureConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Pushes the global seed into the blocks that carry their own.
    pub fn resolve_seed(&mut self) {
        if let Some(seed) = self.rng_seed {
            self.train.rng_seed = seed;
            self.split.rng_seed = seed;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.split.validate()?;
        if let Some(r) = &self.radio {
            r.validate()?;
        }
        Ok(())
    }

    /// Output directory: the explicit setting, else `<root>/<command>`.
    pub fn resolve_output(&mut self, root: &Path, command: &str) -> PathBuf {
        let dir = self.output_dir.clone().unwrap_or_else(|| root.join(command));
        self.output_dir = Some(dir.clone());
        dir
    }

    pub fn write_echo(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join(EFFECTIVE_CONFIG), serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

/// Parses `in_domain`, `loo:<user>` or `cross:<train,locs>:<test>`.
pub fn parse_protocol(s: &str) -> Result<SplitProtocol> {
    let s = s.trim();
    if s == "in_domain" {
        return Ok(SplitProtocol::InDomain);
    }
    if let Some(user) = s.strip_prefix("loo:") {
        let user = user.parse().with_context(|| format!("bad user id {user:?}"))?;
        return Ok(SplitProtocol::LeaveOneUserOut { user });
    }
    if let Some(rest) = s.strip_prefix("cross:") {
        if let Some((train, test)) = rest.split_once(':') {
            let train_locations: Vec<String> = train.split(',').map(|l| l.trim().to_string()).collect();
            if train_locations.iter().any(String::is_empty) || test.trim().is_empty() {
                bail!("empty location in {s:?}");
            }
            return Ok(SplitProtocol::CrossLocation {
                train_locations,
                test_location: test.trim().to_string(),
            });
        }
    }
    bail!("unknown split protocol {s:?}; use in_domain, loo:<user> or cross:<A,B>:<C>")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"train":{"epochs":3}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus":1}"#).is_err());
        let c: RunConfig = serde_json::from_str(r#"{"train":{"max_epochs":3},"rng_seed":9}"#).unwrap();
        assert_eq!(c.train.max_epochs, 3);
    }

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig {
            rng_seed: Some(4),
            spectrogram: vec![SpectrogramMode::AllSubcarriers],
            ..Default::default()
        };
        c.resolve_seed();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.split.rng_seed, 4);
    }

    #[test]
    fn protocols_parse() {
        assert_eq!(parse_protocol("in_domain").unwrap(), SplitProtocol::InDomain);
        assert_eq!(
            parse_protocol("loo:3").unwrap(),
            SplitProtocol::LeaveOneUserOut { user: 3 }
        );
        assert_eq!(
            parse_protocol("cross:A,B:C").unwrap(),
            SplitProtocol::CrossLocation {
                train_locations: vec!["A".into(), "B".into()],
                test_location: "C".into()
            }
        );
        assert!(parse_protocol("cross:A").is_err());
        assert!(parse_protocol("random").is_err());
    }
}
