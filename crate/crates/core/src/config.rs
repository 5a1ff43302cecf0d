//! Experiment configuration files (TOML) and the bundled presets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{Ladder, RunSpec, Scheme};
use crate::model::{JumpCoefficient, ModelParams};
use crate::solver::SolverConfig;

const PRESET_SET1: &str = include_str!("../presets/set1.toml");
const PRESET_SET2: &str = include_str!("../presets/set2.toml");

/// Names accepted by [`ExperimentConfig::preset`].
pub const PRESETS: [&str; 2] = ["set1", "set2"];

pub const FAST_PATHS: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeChoice {
    #[default]
    Tjabem,
    Bem,
    Both,
}

impl SchemeChoice {
    pub fn schemes(&self) -> Vec<Scheme> {
        match self {
            SchemeChoice::Tjabem => vec![Scheme::Tjabem],
            SchemeChoice::Bem => vec![Scheme::Bem],
            SchemeChoice::Both => vec![Scheme::Tjabem, Scheme::Bem],
        }
    }
}

impl std::str::FromStr for SchemeChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tjabem" => Ok(Self::Tjabem),
            "bem" => Ok(Self::Bem),
            "both" => Ok(Self::Both),
            other => Err(Error::Input(format!("unknown scheme '{other}' (tjabem, bem, both)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpBlock {
    /// `linear`, `sine`, `rational` or `zero`.
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<f64>,
}

impl JumpBlock {
    pub fn coefficient(&self) -> Result<JumpCoefficient> {
        match self.param {
            Some(p) => format!("{}:{}", self.family, p).parse(),
            None => self.family.parse(),
        }
    }

    pub fn from_coefficient(h: &JumpCoefficient) -> Result<Self> {
        let text = h.to_string();
        match text.split_once(':') {
            Some((family, param)) => Ok(Self {
                family: family.to_string(),
                param: Some(param.parse().map_err(|_| Error::Input(format!("jump '{text}' has no numeric parameter")))?),
            }),
            None => Ok(Self { family: text, param: None }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderBlock {
    pub m_list: Vec<usize>,
    pub m_ref: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    #[serde(default = "default_label")]
    pub label: String,
    #[serde(default)]
    pub scheme: SchemeChoice,
    pub n_paths: u64,
    pub seed: u64,
    /// Worker threads, `0` for all cores. Left out of report echoes because
    /// it does not change results.
    #[serde(default, skip_serializing)]
    pub parallelism: usize,
    #[serde(default)]
    pub fast: bool,
}

fn default_label() -> String {
    "custom".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: PathBuf,
    /// Subset of `csv`, `json`.
    pub formats: Vec<String>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            formats: vec!["csv".into(), "json".into()],
        }
    }
}

impl OutputBlock {
    pub fn wants(&self, format: &str) -> bool {
        self.formats.iter().any(|f| f.eq_ignore_ascii_case(format))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PositivityBlock {
    /// Preset names; empty means the configured model alone.
    pub sets: Vec<String>,
    pub families: Vec<String>,
    pub m_list: Vec<usize>,
}

impl Default for PositivityBlock {
    fn default() -> Self {
        Self {
            sets: vec!["set1".into(), "set2".into()],
            families: vec!["linear:-0.5".into(), "linear:0.5".into(), "sine:1".into()],
            m_list: vec![32, 64, 128],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MomentsBlock {
    pub m: usize,
    pub p: Vec<f64>,
}

impl Default for MomentsBlock {
    fn default() -> Self {
        Self {
            m: 128,
            p: vec![-2.0, 0.0, 1.0, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsBlock {
    /// Defaults to half of the admissible upper bound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub p: f64,
}

impl Default for DiagnosticsBlock {
    fn default() -> Self {
        Self { epsilon: None, p: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelParams,
    pub jump: JumpBlock,
    pub ladder: LadderBlock,
    pub run: RunBlock,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub positivity: PositivityBlock,
    #[serde(default)]
    pub moments: MomentsBlock,
    #[serde(default)]
    pub diagnostics: DiagnosticsBlock,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Input(format!("config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "set1" => Self::from_toml(PRESET_SET1),
            "set2" => Self::from_toml(PRESET_SET2),
            other => Err(Error::Input(format!("unknown preset '{other}' (available: {})", PRESETS.join(", ")))),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn jump_coefficient(&self) -> Result<JumpCoefficient> {
        self.jump.coefficient()
    }

    /// Applies fast mode: 1000 paths and every grid size halved. The result
    /// has `fast = false` so that it can be fed back unchanged.
    pub fn resolved(&self) -> Result<Self> {
        let mut out = self.clone();
        if out.run.fast {
            out.run.n_paths = FAST_PATHS;
            let halve = |m: usize| -> Result<usize> {
                if m < 2 || !m.is_multiple_of(2) {
                    return Err(Error::Input(format!("fast mode cannot halve M = {m}")));
                }
                Ok(m / 2)
            };
            out.ladder.m_ref = halve(out.ladder.m_ref)?;
            out.ladder.m_list = out.ladder.m_list.iter().map(|&m| halve(m)).collect::<Result<_>>()?;
            out.run.fast = false;
        }
        Ok(out)
    }

    pub fn ladder(&self) -> Ladder {
        Ladder {
            m_list: self.ladder.m_list.clone(),
            m_ref: self.ladder.m_ref,
        }
    }

    pub fn run_spec(&self) -> RunSpec {
        RunSpec {
            n_paths: self.run.n_paths,
            global_seed: self.run.seed,
            parallelism: self.run.parallelism,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_parameter_sets() {
        let one = ExperimentConfig::preset("set1").unwrap();
        assert_eq!(one.model, ModelParams::set_one());
        let two = ExperimentConfig::preset("set2").unwrap();
        assert_eq!(two.model, ModelParams::set_two());
        assert_eq!(one.jump_coefficient().unwrap().to_string(), "linear:-0.5");
        assert!(ExperimentConfig::preset("set3").is_err());
    }

    #[test]
    fn round_trip() {
        let mut c = ExperimentConfig::preset("set1").unwrap();
        c.run.parallelism = 0;
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn fast_mode_halves_ladder() {
        let mut c = ExperimentConfig::preset("set1").unwrap();
        c.run.fast = true;
        let r = c.resolved().unwrap();
        assert_eq!(r.run.n_paths, 1000);
        assert_eq!(r.ladder.m_list, vec![16, 32, 64, 128, 256]);
        assert_eq!(r.ladder.m_ref, 2048);
        assert!(!r.run.fast);
        assert_eq!(r.resolved().unwrap(), r);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = PRESET_SET1.replace("x0 = 1.0", "x0 = 1.0\nbogus = 3");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn jump_block_round_trip() {
        for h in ["linear:-0.5", "sine:1", "rational:2", "zero"] {
            let c: JumpCoefficient = h.parse().unwrap();
            let b = JumpBlock::from_coefficient(&c).unwrap();
            assert_eq!(b.coefficient().unwrap().to_string(), h);
        }
    }
}
