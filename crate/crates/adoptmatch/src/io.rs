//! JSON files for instances and strategy profiles.

use std::fs;
use std::path::Path;

use adoptmatch_core::{Instance, Matrix, Params, StrategyProfile};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

/// On-disk form of an instance; field names are part of the format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub n: usize,
    pub m: usize,
    pub v_child: Vec<Vec<f64>>,
    pub v_family: Vec<Vec<f64>>,
    #[serde(rename = "delta_C")]
    pub delta_c: f64,
    #[serde(rename = "delta_F")]
    pub delta_f: f64,
    #[serde(rename = "kappa_C")]
    pub kappa_c: f64,
    #[serde(rename = "kappa_F")]
    pub kappa_f: f64,
    pub p: f64,
}

impl From<&Instance> for InstanceFile {
    fn from(inst: &Instance) -> Self {
        let prm = inst.params();
        InstanceFile {
            n: inst.n(),
            m: inst.m(),
            v_child: inst.child_values().to_rows(),
            v_family: inst.family_values().to_rows(),
            delta_c: prm.delta_c,
            delta_f: prm.delta_f,
            kappa_c: prm.kappa_c,
            kappa_f: prm.kappa_f,
            p: prm.p,
        }
    }
}

impl InstanceFile {
    pub fn into_instance(self) -> Result<Instance, String> {
        let params = Params {
            delta_c: self.delta_c,
            delta_f: self.delta_f,
            kappa_c: self.kappa_c,
            kappa_f: self.kappa_f,
            p: self.p,
        };
        let inst = Instance::from_rows(&self.v_child, &self.v_family, params).map_err(|e| e.to_string())?;
        if inst.n() != self.n || inst.m() != self.m {
            return Err(format!("declared {} x {}, tables are {} x {}", self.n, self.m, inst.n(), inst.m()));
        }
        Ok(inst)
    }
}

/// On-disk form of a strategy profile: `child_interest` is `n x m`,
/// `family_interest` is `m x n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileFile {
    pub child_interest: Vec<Vec<bool>>,
    pub family_interest: Vec<Vec<bool>>,
}

impl From<&StrategyProfile> for ProfileFile {
    fn from(s: &StrategyProfile) -> Self {
        ProfileFile { child_interest: s.child_interest.to_rows(), family_interest: s.family_interest.to_rows() }
    }
}

impl ProfileFile {
    pub fn into_profile(self) -> Result<StrategyProfile, String> {
        let ci = Matrix::from_rows(&self.child_interest).map_err(|e| e.to_string())?;
        let fi = Matrix::from_rows(&self.family_interest).map_err(|e| e.to_string())?;
        StrategyProfile::new(ci, fi).map_err(|e| e.to_string())
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, FileError> {
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| FileError::Io { path: display.clone(), source })?;
    serde_json::from_str(&text).map_err(|source| FileError::Json { path: display, source })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FileError> {
    let display = path.display().to_string();
    let mut text = serde_json::to_string_pretty(value).map_err(|source| FileError::Json { path: display.clone(), source })?;
    text.push('\n');
    fs::write(path, text).map_err(|source| FileError::Io { path: display, source })
}

pub fn instance_from_json(text: &str) -> Result<Instance, String> {
    let file: InstanceFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
    file.into_instance()
}

pub fn instance_to_json(inst: &Instance) -> String {
    serde_json::to_string_pretty(&InstanceFile::from(inst)).expect("instance files always serialise")
}

pub fn read_instance(path: &Path) -> Result<Instance, FileError> {
    let file: InstanceFile = read_json(path)?;
    file.into_instance().map_err(|message| FileError::Invalid { path: path.display().to_string(), message })
}

pub fn write_instance(path: &Path, inst: &Instance) -> Result<(), FileError> {
    write_json(path, &InstanceFile::from(inst))
}

pub fn read_profile(path: &Path) -> Result<StrategyProfile, FileError> {
    let file: ProfileFile = read_json(path)?;
    file.into_profile().map_err(|message| FileError::Invalid { path: path.display().to_string(), message })
}

pub fn write_profile(path: &Path, s: &StrategyProfile) -> Result<(), FileError> {
    write_json(path, &ProfileFile::from(s))
}
