use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::mix_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    Unassigned,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s.trim() {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            "" | "unassigned" => Some(Split::Unassigned),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub image_path: PathBuf,
    pub label: String,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    /// Declared class names; a record's class index is its position here.
    pub classes: Vec<String>,
    pub records: Vec<Record>,
}

impl DatasetManifest {
    pub fn new(classes: Vec<String>, records: Vec<Record>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(&r.image_path) {
                return Err(Error::Manifest {
                    line: 0,
                    reason: format!("duplicate path {}", r.image_path.display()),
                });
            }
            if !classes.contains(&r.label) {
                return Err(Error::UnknownLabel { label: r.label.clone() });
            }
        }
        Ok(DatasetManifest { classes, records })
    }

    pub fn class_index(&self, label: &str) -> Result<usize> {
        self.classes
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| Error::UnknownLabel { label: label.into() })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        w.write_record(["path", "label", "split"]).expect("in-memory write");
        for r in &self.records {
            w.write_record([&r.image_path.to_string_lossy(), r.label.as_str(), r.split.as_str()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::codec::write_text(path, &self.to_csv())
    }
}

/// Parses a `path,label[,split]` CSV. With no declared class list the classes
/// are the sorted distinct labels.
pub fn parse_manifest(text: &str, declared: Option<&[String]>) -> Result<DatasetManifest> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Manifest { line: 1, reason: e.to_string() })?
        .clone();
    let names: Vec<&str> = headers.iter().collect();
    if names.len() < 2 || names[0] != "path" || names[1] != "label" || (names.len() == 3 && names[2] != "split") || names.len() > 3 {
        return Err(Error::Manifest {
            line: 1,
            reason: format!("header must be `path,label[,split]`, got `{}`", names.join(",")),
        });
    }
    let has_split = names.len() == 3;

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Manifest { line, reason: e.to_string() })?;
        let expected = if has_split { 3 } else { 2 };
        if row.len() != expected && !(has_split && row.len() == 2) {
            return Err(Error::Manifest {
                line,
                reason: format!("expected {expected} fields, got {}", row.len()),
            });
        }
        let path = row.get(0).unwrap_or_default();
        let label = row.get(1).unwrap_or_default();
        if path.is_empty() || label.is_empty() {
            return Err(Error::Manifest { line, reason: "empty path or label".into() });
        }
        let split = match row.get(2) {
            Some(s) => Split::parse(s).ok_or_else(|| Error::Manifest {
                line,
                reason: format!("unknown split `{s}`"),
            })?,
            None => Split::Unassigned,
        };
        if !seen.insert(path.to_string()) {
            return Err(Error::Manifest { line, reason: format!("duplicate path {path}") });
        }
        if let Some(classes) = declared {
            if !classes.iter().any(|c| c == label) {
                return Err(Error::Manifest { line, reason: format!("unknown label `{label}`") });
            }
        }
        records.push(Record {
            image_path: PathBuf::from(path),
            label: label.to_string(),
            split,
        });
    }
    let classes = match declared {
        Some(c) => c.to_vec(),
        None => {
            let mut c: Vec<String> = records.iter().map(|r| r.label.clone()).collect();
            c.sort();
            c.dedup();
            c
        }
    };
    Ok(DatasetManifest { classes, records })
}

pub fn load_manifest(path: &Path, declared: Option<&[String]>) -> Result<DatasetManifest> {
    parse_manifest(&crate::codec::read_text(path)?, declared)
}

/// `(train, val, test)` counts for a group of `n`: val and test are rounded
/// targets, the remainder goes to train.
pub fn split_counts(n: usize, fractions: [f64; 3]) -> (usize, usize, usize) {
    let val = ((n as f64) * fractions[1]).round() as usize;
    let test = ((n as f64) * fractions[2]).round() as usize;
    let val = val.min(n);
    let test = test.min(n - val);
    (n - val - test, val, test)
}

/// Seeded (optionally per-class stratified) train/val/test assignment.
/// Classes with fewer than three samples go entirely to train.
pub fn split_dataset(manifest: &DatasetManifest, fractions: [f64; 3], seed: u64, stratified: bool) -> Result<DatasetManifest> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::config("fractions", format!("{fractions:?} must be in [0,1] and sum to 1")));
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, r) in manifest.records.iter().enumerate() {
        let key = if stratified { manifest.class_index(&r.label)? } else { 0 };
        groups.entry(key).or_default().push(i);
    }
    let mut out = manifest.clone();
    for (key, mut members) in groups {
        if members.len() < 3 {
            log::warn!(
                "class `{}` has {} sample(s); assigning all to train",
                manifest.classes.get(key).map(String::as_str).unwrap_or("?"),
                members.len()
            );
            for &i in &members {
                out.records[i].split = Split::Train;
            }
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[key as u64]));
        members.shuffle(&mut rng);
        let (n_train, n_val, _) = split_counts(members.len(), fractions);
        for (pos, &i) in members.iter().enumerate() {
            out.records[i].split = if pos < n_train {
                Split::Train
            } else if pos < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(n: usize, classes: usize) -> DatasetManifest {
        let text = std::iter::once("path,label".to_string())
            .chain((0..n).map(|i| format!("img{i}.png,c{}", i % classes)))
            .collect::<Vec<_>>()
            .join("\n");
        parse_manifest(&text, None).unwrap()
    }

    #[test]
    fn parses_three_rows() {
        let m = parse_manifest("path,label\na.png,x\nb.png,y\nc.png,x\n", None).unwrap();
        assert_eq!(m.records.len(), 3);
        assert_eq!(m.classes, vec!["x", "y"]);
        assert!(m.records.iter().all(|r| r.split == Split::Unassigned));
    }

    #[test]
    fn duplicate_path_names_path() {
        let err = parse_manifest("path,label\na.png,x\na.png,y\n", None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("a.png") && msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn header_only_is_empty() {
        let m = parse_manifest("path,label,split\n", None).unwrap();
        assert!(m.records.is_empty());
    }

    #[test]
    fn unknown_label_and_malformed_rows() {
        let declared = vec!["x".to_string()];
        let err = parse_manifest("path,label\na.png,z\n", Some(&declared)).unwrap_err();
        assert!(matches!(err, Error::Manifest { line: 2, .. }));
        assert!(parse_manifest("path,label\na.png\n", None).is_err());
        assert!(parse_manifest("file,class\na.png,x\n", None).is_err());
        assert!(parse_manifest("path,label,split\na.png,x,holdout\n", None).is_err());
    }

    #[test]
    fn split_column_round_trips() {
        let m = split_dataset(&uniform(20, 2), [0.7, 0.1, 0.2], 4, true).unwrap();
        let back = parse_manifest(&m.to_csv(), Some(&m.classes)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn seventy_ten_twenty() {
        let m = split_dataset(&uniform(100, 1), [0.7, 0.1, 0.2], 1, true).unwrap();
        assert_eq!((m.count(Split::Train), m.count(Split::Val), m.count(Split::Test)), (70, 10, 20));
        let m = split_dataset(&uniform(10, 1), [0.7, 0.1, 0.2], 1, true).unwrap();
        assert_eq!((m.count(Split::Train), m.count(Split::Val), m.count(Split::Test)), (7, 1, 2));
    }

    #[test]
    fn same_seed_same_assignment() {
        let a = split_dataset(&uniform(60, 3), [0.7, 0.1, 0.2], 9, true).unwrap();
        let b = split_dataset(&uniform(60, 3), [0.7, 0.1, 0.2], 9, true).unwrap();
        assert_eq!(a, b);
        let c = split_dataset(&uniform(60, 3), [0.7, 0.1, 0.2], 10, true).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn tiny_class_goes_to_train() {
        let m = parse_manifest("path,label\na,x\nb,x\nc,y\nd,y\ne,y\n", None).unwrap();
        let s = split_dataset(&m, [0.7, 0.1, 0.2], 0, true).unwrap();
        assert!(s.records[..2].iter().all(|r| r.split == Split::Train));
    }

    #[test]
    fn rejects_bad_fractions() {
        assert!(split_dataset(&uniform(10, 1), [0.7, 0.2, 0.2], 0, true).is_err());
    }

    #[test]
    fn split_is_a_partition() {
        let m = uniform(97, 5);
        let s = split_dataset(&m, [0.7, 0.1, 0.2], 3, true).unwrap();
        assert_eq!(s.records.len(), m.records.len());
        for (a, b) in m.records.iter().zip(&s.records) {
            assert_eq!((&a.image_path, &a.label), (&b.image_path, &b.label));
            assert_ne!(b.split, Split::Unassigned);
        }
    }
}
