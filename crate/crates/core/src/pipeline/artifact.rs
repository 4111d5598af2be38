//! JSON and CSV artifacts. Every JSON document carries `schema_version`.

use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gausscore::Formation;
use crate::permgmm::{e_step, RegimeModel};
use crate::permselect::CandidateSet;
use crate::sharedgmm::SharedFit;
use crate::trackio::NormalizedFrame;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Versioned<T> {
    pub schema_version: u32,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Versioned<T> {
    pub fn new(body: T) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            body,
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&Versioned::new(value)).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json(value)?).map_err(|e| Error::io(path, e))
}

pub fn from_json<T: DeserializeOwned>(s: &str) -> Result<T> {
    let v: Versioned<T> = serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))?;
    if v.schema_version != SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            v.schema_version
        )));
    }
    Ok(v.body)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&s)
}

/// Output of the shared-component fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharedArtifact {
    pub formation: Formation,
    pub pi: Vec<Vec<f64>>,
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub reseeded: usize,
    pub seed: u64,
}

impl SharedArtifact {
    pub fn new(fit: SharedFit, seed: u64) -> Self {
        Self {
            formation: fit.formation,
            pi: fit.pi,
            loglik_trace: fit.loglik_trace,
            iterations: fit.iterations,
            converged: fit.converged,
            reseeded: fit.reseeded,
            seed,
        }
    }
}

/// Selected support with the evidence for every candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermsArtifact {
    pub d: usize,
    #[serde(flatten)]
    pub set: CandidateSet,
}

/// A fitted permutation mixture and how it was started.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub init: String,
    #[serde(flatten)]
    pub model: RegimeModel,
}

/// A single formation, optionally tagged with its team and segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormationArtifact {
    #[serde(flatten)]
    pub formation: Formation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub team: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment: Option<u32>,
    /// Seconds covered by the frames the formation was fitted on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
}

impl FormationArtifact {
    pub fn bare(formation: Formation) -> Self {
        Self {
            formation,
            team: None,
            segment: None,
            duration: None,
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AnyFormation {
    Bare(FormationArtifact),
    Shared { formation: Formation },
    Model { regimes: Vec<crate::permgmm::Regime> },
}

/// Load a formation from a formation file, a shared-fit file, or a one-regime
/// model file.
pub fn load_formation(path: &Path) -> Result<FormationArtifact> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match from_json::<AnyFormation>(&s)? {
        AnyFormation::Bare(f) => Ok(f),
        AnyFormation::Shared { formation } => Ok(FormationArtifact::bare(formation)),
        AnyFormation::Model { mut regimes } if regimes.len() == 1 => {
            Ok(FormationArtifact::bare(regimes.remove(0).formation))
        }
        AnyFormation::Model { .. } => Err(Error::Format(format!(
            "{} holds a multi-regime model; a single formation is required",
            path.display()
        ))),
    }
}

pub fn load_model(path: &Path) -> Result<RegimeModel> {
    let m: ModelArtifact = read_json(path)?;
    m.model.validate()?;
    Ok(m.model)
}

/// `frame_index, t, v_1..v_l, w_identity_1..w_identity_l`. Frames whose
/// likelihood underflows get empty probability fields.
pub fn write_posteriors<W: Write>(w: W, frames: &[NormalizedFrame], model: &RegimeModel) -> Result<()> {
    let id = model
        .identity_index()
        .ok_or_else(|| Error::ContractViolation("support lacks the identity".into()))?;
    let e = e_step(frames, model)?;
    let l = model.n_regimes();
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["frame_index".to_string(), "t".to_string()];
    header.extend((1..=l).map(|r| format!("v_{r}")));
    header.extend((1..=l).map(|r| format!("w_identity_{r}")));
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    out.write_record(&header).map_err(csv_err)?;
    for (i, (f, p)) in frames.iter().zip(&e.posteriors).enumerate() {
        let mut rec = vec![i.to_string(), f.timestamp.to_string()];
        match p {
            Some(p) => {
                rec.extend(p.v.iter().map(|x| x.to_string()));
                rec.extend(p.w.iter().map(|w| w[id].to_string()));
            }
            None => rec.extend(std::iter::repeat_n(String::new(), 2 * l)),
        }
        out.write_record(&rec).map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::Format(e.to_string()))
}
