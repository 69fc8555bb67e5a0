//! Versioned JSON instance files.

use std::fs;
use std::path::{Path, PathBuf};

use kemeny_core::{GeneratorSpec, Profile};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const INSTANCE_FORMAT_VERSION: u32 = 1;

/// Where an instance came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    Generator { spec: GeneratorSpec, index: usize },
    Ingest { format: String, path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub format_version: u32,
    pub n: usize,
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    /// 0-based items, most preferred first.
    pub rankings: Vec<Vec<usize>>,
    pub provenance: Provenance,
}

impl InstanceFile {
    pub fn from_profile(profile: &Profile, provenance: Provenance) -> Self {
        Self {
            format_version: INSTANCE_FORMAT_VERSION,
            n: profile.n(),
            m: profile.m(),
            labels: profile.labels().map(<[String]>::to_vec),
            rankings: profile.rankings().iter().map(|r| r.order().to_vec()).collect(),
            provenance,
        }
    }

    pub fn to_profile(&self) -> CliResult<Profile> {
        if self.format_version != INSTANCE_FORMAT_VERSION {
            return Err(CliError::Data(format!(
                "unsupported instance format version {} (expected {INSTANCE_FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.rankings.len() != self.m {
            return Err(CliError::Data(format!(
                "declared m = {} but found {} rankings",
                self.m,
                self.rankings.len()
            )));
        }
        if let Some((k, r)) = self.rankings.iter().enumerate().find(|(_, r)| r.len() != self.n) {
            return Err(CliError::Data(format!(
                "ranking {k} has {} items, declared n = {}",
                r.len(),
                self.n
            )));
        }
        let profile = Profile::from_orders(self.rankings.iter().cloned())?;
        Ok(match &self.labels {
            Some(labels) => profile.with_labels(labels.clone())?,
            None => profile,
        })
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("instance serializes");
        text.push('\n');
        text
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        fs::write(path, self.to_json()).map_err(|e| CliError::io(path, e))
    }
}

/// `random_n10_m8_seed1234_0003.json`
pub fn generated_file_name(spec: &GeneratorSpec, base_seed: u64, index: usize) -> String {
    format!(
        "{}_n{}_m{}_seed{}_{:04}.json",
        spec.kind.as_str(),
        spec.n,
        spec.m,
        base_seed,
        index
    )
}

/// A file, or every `*.json` directly inside a directory, sorted by name.
pub fn instance_paths(path: &Path) -> CliResult<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = fs::read_dir(path).map_err(|e| CliError::io(path, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| CliError::io(path, e))?.path();
        if p.is_file() && p.extension().is_some_and(|e| e == "json") {
            paths.push(p);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Data(format!("no instance files in {}", path.display())));
    }
    Ok(paths)
}

/// Instance id used in reports: the file stem.
pub fn instance_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use kemeny_core::{generate, GeneratorKind};

    #[test]
    fn round_trip() {
        let spec = GeneratorSpec::new(GeneratorKind::Jiggling, 7, 4, 3);
        let p = generate(&spec).unwrap();
        let file = InstanceFile::from_profile(&p, Provenance::Generator { spec: spec.clone(), index: 0 });
        let back: InstanceFile = serde_json::from_str(&file.to_json()).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.to_profile().unwrap(), p);
        assert_eq!(generated_file_name(&spec, 3, 12), "jiggling_n7_m4_seed3_0012.json");
    }

    #[test]
    fn count_mismatch_rejected() {
        let p = Profile::from_orders([vec![0, 1, 2]]).unwrap();
        let mut f = InstanceFile::from_profile(
            &p,
            Provenance::Ingest {
                format: "x".into(),
                path: "y".into(),
            },
        );
        f.m = 2;
        assert!(f.to_profile().is_err());
        f.m = 1;
        f.n = 4;
        assert!(f.to_profile().is_err());
        f.n = 3;
        f.rankings[0] = vec![0, 0, 2];
        assert!(f.to_profile().is_err());
    }
}
