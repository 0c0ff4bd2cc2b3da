//! On-disk forms of benchmark cases and the run manifest. Volumes live in
//! sibling CTV1 files; everything else is structured text.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::volume::{read_volume, write_volume};

use super::{BenchCase, BenchError, CaseOracle, ReportFacts, SyntheticSpec};

#[derive(Debug, Serialize, Deserialize)]
struct CaseDoc {
    case_id: String,
    /// CTV1 volume path, relative to this file.
    volume: String,
    spec: SyntheticSpec,
    facts: ReportFacts,
    oracle: CaseOracle,
}

/// Manifest of one benchmark run: tree document, seed, optional default
/// mode, and case file paths, all relative to the manifest location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tree: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    pub cases: Vec<String>,
}

impl Manifest {
    pub fn to_document(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("manifest always serializes");
        text.push('\n');
        text
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| BenchError::Spec(format!("manifest: {e}")))
    }
}

/// Writes `<stem>.json` and `<stem>.ctv` under `dir`.
pub fn save_case(case: &BenchCase, dir: &Path, stem: &str) -> Result<PathBuf, BenchError> {
    std::fs::create_dir_all(dir)?;
    let volume_name = format!("{stem}.ctv");
    write_volume(&case.volume, dir.join(&volume_name))?;
    let doc = CaseDoc {
        case_id: case.case_id.clone(),
        volume: volume_name,
        spec: case.spec.clone(),
        facts: case.facts.clone(),
        oracle: case.oracle.clone(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("case doc always serializes");
    text.push('\n');
    let path = dir.join(format!("{stem}.json"));
    std::fs::write(&path, text)?;
    Ok(path)
}

pub fn load_case(path: &Path) -> Result<BenchCase, BenchError> {
    let text = std::fs::read_to_string(path)?;
    let doc: CaseDoc =
        serde_json::from_str(&text).map_err(|e| BenchError::Spec(format!("case file: {e}")))?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let volume = read_volume(dir.join(&doc.volume))?;
    Ok(BenchCase {
        case_id: doc.case_id,
        spec: doc.spec,
        volume,
        facts: doc.facts,
        oracle: doc.oracle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{gen_case, LesionSpec};
    use crate::executor::{PatientRecord, Phase};
    use crate::guideline::shipped;
    use crate::volume::Dims;

    #[test]
    fn case_files_round_trip() {
        let tree = shipped::liver();
        let spec = SyntheticSpec {
            seed: 7,
            organ: "liver".to_string(),
            dims: Dims::new(36, 36, 36).unwrap(),
            spacing_mm: [1.0, 1.0, 1.0],
            lesions: vec![LesionSpec {
                center_mm: [18.0, 18.0, 18.0],
                diameter_mm: 7.0,
                category: "benign".to_string(),
            }],
            patient: PatientRecord {
                patient_id: "pt".to_string(),
                age_years: 44,
                sex: "M".to_string(),
                flags: Default::default(),
                phase: Phase::Venous,
            },
        };
        let case = gen_case(&spec, &tree).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = save_case(&case, dir.path(), "case-0000").unwrap();
        let back = load_case(&path).unwrap();
        assert_eq!(back, case);
    }

    #[test]
    fn manifest_round_trips() {
        let manifest = Manifest {
            tree: "tree.json".to_string(),
            seed: 17,
            mode: None,
            cases: vec!["cases/a.json".to_string(), "cases/b.json".to_string()],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        std::fs::write(&path, manifest.to_document()).unwrap();
        assert_eq!(Manifest::load(&path).unwrap(), manifest);
    }
}
