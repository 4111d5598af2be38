use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::permgmm::{FitOptions, InitMode};
use crate::permselect::SelectConfig;
use crate::sharedgmm::SharedOptions;
use crate::trackio::{AttackSide, IngestOptions};

/// How the permutation mixture is initialized.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InitSpec {
    /// Shared-fit formation and min-rule weights. With more than one regime
    /// the chronological split is used, still with the shared-fit weights.
    /// A path points to a saved shared fit; without one the fit of the
    /// current run is used.
    Shared(Option<PathBuf>),
    Possession,
    Chrono,
    IdentityHalf,
}

impl InitSpec {
    /// Multi-regime mode used when more than one regime is requested.
    pub fn multi_regime_mode(&self) -> InitMode {
        match self {
            InitSpec::Shared(_) | InitSpec::Chrono => InitMode::ChronologicalSplit,
            InitSpec::Possession => InitMode::FromPossession,
            InitSpec::IdentityHalf => InitMode::IdentityHalf,
        }
    }
}

impl fmt::Display for InitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitSpec::Shared(None) => f.write_str("shared"),
            InitSpec::Shared(Some(p)) => write!(f, "shared:{}", p.display()),
            InitSpec::Possession => f.write_str("possession"),
            InitSpec::Chrono => f.write_str("chrono"),
            InitSpec::IdentityHalf => f.write_str("identity-half"),
        }
    }
}

impl FromStr for InitSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared" => Ok(InitSpec::Shared(None)),
            "possession" => Ok(InitSpec::Possession),
            "chrono" => Ok(InitSpec::Chrono),
            "identity-half" => Ok(InitSpec::IdentityHalf),
            _ => match s.strip_prefix("shared:") {
                Some(p) if !p.is_empty() => Ok(InitSpec::Shared(Some(PathBuf::from(p)))),
                _ => Err(Error::Config(format!(
                    "unknown init {s:?}; expected shared[:<path>], possession, chrono or identity-half"
                ))),
            },
        }
    }
}

impl Serialize for InitSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for InitSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Every tunable of the end-to-end run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub stride: usize,
    pub min_segment_sec: f64,
    /// One entry for all segments, or one per surviving segment.
    pub attack_sides: Vec<AttackSide>,
    pub p_thresh: f64,
    pub o_thresh: f64,
    pub alpha: f64,
    pub gmm_components: usize,
    pub candidate_cap: usize,
    pub train_factor: usize,
    pub regimes: usize,
    pub init: InitSpec,
    pub max_iter: usize,
    pub tol: f64,
    pub prune: f64,
    pub seed: u64,
    /// Also fit the other of {1, 2} regimes and report the overlap comparison.
    pub compare_regimes: bool,
    /// Team label written into the per-segment formation files.
    pub team: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            stride: 5,
            min_segment_sec: 300.0,
            attack_sides: vec![AttackSide::Right],
            p_thresh: 0.025,
            o_thresh: 0.05,
            alpha: 0.05,
            gmm_components: 8,
            candidate_cap: 10_000,
            train_factor: 4,
            regimes: 1,
            init: InitSpec::Shared(None),
            max_iter: 200,
            tol: 1e-7,
            prune: 1e-10,
            seed: 0,
            compare_regimes: false,
            team: None,
        }
    }
}

fn open_unit(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in (0, 1), got {x}")))
    }
}

impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&s)
    }

    pub fn validate(&self) -> Result<()> {
        open_unit("p_thresh", self.p_thresh)?;
        open_unit("o_thresh", self.o_thresh)?;
        open_unit("alpha", self.alpha)?;
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if self.regimes == 0 {
            return Err(Error::Config("regimes must be at least 1".into()));
        }
        if self.gmm_components == 0 {
            return Err(Error::Config("gmm_components must be at least 1".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        if !(self.tol >= 0.0) || !(self.prune >= 0.0) || !(self.min_segment_sec >= 0.0) {
            return Err(Error::Config(
                "tol, prune and min_segment_sec must be non-negative".into(),
            ));
        }
        if self.attack_sides.is_empty() {
            return Err(Error::Config("attack_sides must not be empty".into()));
        }
        Ok(())
    }

    pub fn ingest(&self) -> IngestOptions {
        IngestOptions {
            stride: self.stride,
            min_segment_sec: self.min_segment_sec,
            attack_sides: self.attack_sides.clone(),
        }
    }

    pub fn shared(&self) -> SharedOptions {
        SharedOptions {
            max_iter: self.max_iter,
            tol: self.tol,
        }
    }

    pub fn select(&self, seed: u64) -> SelectConfig {
        SelectConfig {
            p_thresh: self.p_thresh,
            o_thresh: self.o_thresh,
            alpha: self.alpha,
            gmm_components: self.gmm_components,
            candidate_cap: self.candidate_cap,
            train_factor: self.train_factor,
            skip_gmm: false,
            seed,
        }
    }

    pub fn fit(&self) -> FitOptions {
        FitOptions {
            max_iter: self.max_iter,
            tol: self.tol,
            prune: self.prune,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = PipelineConfig::default();
        let s = toml::to_string(&cfg).unwrap();
        assert_eq!(PipelineConfig::from_toml_str(&s).unwrap(), cfg);
        assert_eq!(PipelineConfig::from_toml_str("").unwrap(), cfg);
    }

    #[test]
    fn partial_toml_overrides() {
        let cfg = PipelineConfig::from_toml_str("regimes = 3\ninit = \"identity-half\"\nseed = 7\n").unwrap();
        assert_eq!(cfg.regimes, 3);
        assert_eq!(cfg.init, InitSpec::IdentityHalf);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.stride, 5);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(PipelineConfig::from_toml_str("p_thresh = 1.5").is_err());
        assert!(PipelineConfig::from_toml_str("stride = 0").is_err());
        assert!(PipelineConfig::from_toml_str("regimes = 0").is_err());
        assert!(PipelineConfig::from_toml_str("no_such_key = 1").is_err());
        assert!(PipelineConfig::from_toml_str("init = \"bogus\"").is_err());
    }

    #[test]
    fn init_spec_parsing() {
        assert_eq!("shared".parse::<InitSpec>().unwrap(), InitSpec::Shared(None));
        assert_eq!(
            "shared:a/b.json".parse::<InitSpec>().unwrap(),
            InitSpec::Shared(Some("a/b.json".into()))
        );
        assert!("shared:".parse::<InitSpec>().is_err());
        for s in ["possession", "chrono", "identity-half", "shared:x.json"] {
            assert_eq!(s.parse::<InitSpec>().unwrap().to_string(), s);
        }
    }
}
