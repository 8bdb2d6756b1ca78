use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{Material, WeldCategory, WeldType};
use crate::error::{Error, Result};

/// One sample of a corpus. Paths are relative to the manifest's directory
/// unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sample_id: String,
    pub audio_path: PathBuf,
    pub video_path: PathBuf,
    pub category: WeldCategory,
    pub weld_type: WeldType,
    pub material: Material,
    pub duration_s: f64,
}

const FIELDS: [&str; 7] = [
    "sample_id",
    "audio_path",
    "video_path",
    "category",
    "weld_type",
    "material",
    "duration_s",
];

/// JSONL index of a corpus, one entry per line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory relative paths resolve against.
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.sample_id.as_str()) {
                return Err(Error::DuplicateId(e.sample_id.clone()));
            }
        }
        Ok(Manifest {
            entries,
            base_dir: base_dir.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, sample_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.sample_id == sample_id)
    }

    pub fn categories(&self) -> Vec<WeldCategory> {
        self.entries.iter().map(|e| e.category).collect()
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn audio_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.resolve(&entry.audio_path)
    }

    pub fn video_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.resolve(&entry.video_path)
    }

    pub fn category_counts(&self) -> BTreeMap<WeldCategory, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(e.category).or_insert(0) += 1;
        }
        counts
    }

    /// Strict load: stops at the first malformed line or duplicate id.
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry = parse_entry(&line).map_err(|(field, message)| Error::Manifest {
                path: path.to_path_buf(),
                line: i + 1,
                field,
                message,
            })?;
            if !seen.insert(entry.sample_id.clone()) {
                return Err(Error::DuplicateId(entry.sample_id));
            }
            entries.push(entry);
        }
        Ok(Manifest {
            entries,
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for e in &self.entries {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n").map_err(|err| Error::io(path, err))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

type FieldError = (String, String);

fn field<'a>(
    obj: &'a Map<String, Value>,
    name: &str,
) -> std::result::Result<&'a Value, FieldError> {
    obj.get(name)
        .ok_or_else(|| (name.to_string(), "missing".to_string()))
}

fn string_field<'a>(
    obj: &'a Map<String, Value>,
    name: &str,
) -> std::result::Result<&'a str, FieldError> {
    field(obj, name)?
        .as_str()
        .ok_or_else(|| (name.to_string(), "expected a string".to_string()))
}

fn parse_entry(line: &str) -> std::result::Result<ManifestEntry, FieldError> {
    let value: Value =
        serde_json::from_str(line).map_err(|e| ("<line>".to_string(), e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| ("<line>".to_string(), "expected a JSON object".to_string()))?;
    if let Some(extra) = obj.keys().find(|k| !FIELDS.contains(&k.as_str())) {
        return Err((extra.clone(), "unknown field".to_string()));
    }
    let sample_id = string_field(obj, "sample_id")?;
    if sample_id.is_empty() {
        return Err(("sample_id".to_string(), "empty".to_string()));
    }
    let category = string_field(obj, "category")?
        .parse::<WeldCategory>()
        .map_err(|e| ("category".to_string(), e.to_string()))?;
    let weld_type: WeldType =
        serde_json::from_value(field(obj, "weld_type")?.clone()).map_err(|_| {
            (
                "weld_type".to_string(),
                "expected `fillet` or `non_fillet`".to_string(),
            )
        })?;
    let material: Material =
        serde_json::from_value(field(obj, "material")?.clone()).map_err(|_| {
            (
                "material".to_string(),
                "expected one of 7mm-FE410, 3mm-FE410, 7mm-BSK46, 3mm-BSK46".to_string(),
            )
        })?;
    let duration_s = field(obj, "duration_s")?
        .as_f64()
        .filter(|d| *d > 0.0 && d.is_finite())
        .ok_or_else(|| {
            (
                "duration_s".to_string(),
                "expected a positive number".to_string(),
            )
        })?;
    Ok(ManifestEntry {
        sample_id: sample_id.to_string(),
        audio_path: string_field(obj, "audio_path")?.into(),
        video_path: string_field(obj, "video_path")?.into(),
        category,
        weld_type,
        material,
        duration_s,
    })
}

/// Everything wrong with a manifest file, collected rather than fail-fast.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub entries: usize,
    pub category_counts: BTreeMap<WeldCategory, usize>,
    /// `line: field: message` for lines that did not parse.
    pub malformed: Vec<String>,
    pub duplicate_ids: Vec<String>,
    pub missing_files: Vec<PathBuf>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.malformed.is_empty() && self.duplicate_ids.is_empty() && self.missing_files.is_empty()
    }
}

/// Lenient pass over a manifest file: reports schema errors, category typos,
/// duplicate ids and referenced files that do not exist.
pub fn validate_manifest(path: &Path) -> Result<ValidationReport> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut report = ValidationReport::default();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_entry(&line) {
            Err((field, message)) => report
                .malformed
                .push(format!("{}: {field}: {message}", i + 1)),
            Ok(entry) => {
                report.entries += 1;
                *report.category_counts.entry(entry.category).or_insert(0) += 1;
                if !seen.insert(entry.sample_id.clone()) {
                    report.duplicate_ids.push(entry.sample_id.clone());
                }
                for p in [&entry.audio_path, &entry.video_path] {
                    let full = if p.is_absolute() {
                        p.clone()
                    } else {
                        base.join(p)
                    };
                    if !full.exists() {
                        report.missing_files.push(full);
                    }
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, category: WeldCategory) -> ManifestEntry {
        ManifestEntry {
            sample_id: id.to_string(),
            audio_path: format!("audio/{id}.wav").into(),
            video_path: format!("video/{id}.emb").into(),
            category,
            weld_type: WeldType::Fillet,
            material: Material::Fe410Thick,
            duration_s: 3.0,
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let m = Manifest::new(
            vec![
                entry("a", WeldCategory::Good),
                entry("b", WeldCategory::LackOfFusion),
            ],
            dir.path(),
        )
        .unwrap();
        m.save(&path).unwrap();
        assert_eq!(Manifest::load(&path).unwrap(), m);
    }

    #[test]
    fn empty_manifest_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(Manifest::load(&path).unwrap().is_empty());
        assert!(validate_manifest(&path).unwrap().is_valid());
    }

    #[test]
    fn duplicate_id_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let line = serde_json::to_string(&entry("w17", WeldCategory::Good)).unwrap();
        std::fs::write(&path, format!("{line}\n{line}\n")).unwrap();
        let err = Manifest::load(&path).unwrap_err();
        assert!(err.to_string().contains("w17"));
        assert_eq!(validate_manifest(&path).unwrap().duplicate_ids, vec!["w17"]);
    }

    #[test]
    fn errors_carry_line_and_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let good = serde_json::to_string(&entry("a", WeldCategory::Good)).unwrap();
        let typo = good
            .replace("\"a\"", "\"b\"")
            .replace("\"good\"", "\"porosityy\"");
        std::fs::write(&path, format!("{good}\n{typo}\n")).unwrap();
        match Manifest::load(&path).unwrap_err() {
            Error::Manifest { line, field, .. } => {
                assert_eq!(line, 2);
                assert_eq!(field, "category");
            }
            other => panic!("unexpected {other}"),
        }
        let report = validate_manifest(&path).unwrap();
        assert_eq!(report.malformed.len(), 1);
        assert_eq!(report.missing_files.len(), 2);
    }

    #[test]
    fn labels_are_accepted_for_category() {
        let line = serde_json::to_string(&entry("a", WeldCategory::Good))
            .unwrap()
            .replace("\"good\"", "\"Lack Of Fusion\"");
        assert_eq!(
            parse_entry(&line).unwrap().category,
            WeldCategory::LackOfFusion
        );
    }

    #[test]
    fn reference_counts_sum() {
        let total: usize = WeldCategory::ALL.iter().map(|c| c.reference_count()).sum();
        assert_eq!(total, 4040);
        let entries = WeldCategory::ALL
            .iter()
            .flat_map(|&c| {
                (0..c.reference_count()).map(move |i| entry(&format!("{}_{i}", c.id()), c))
            })
            .collect();
        let m = Manifest::new(entries, ".").unwrap();
        assert_eq!(m.len(), 4040);
        assert_eq!(m.category_counts()[&WeldCategory::Porosity], 340);
    }
}
