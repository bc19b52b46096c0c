//! Benchmark datasets: on-disk formats, validation, and splitting.
//!
//! A benchmark is a manifest (TOML) declaring the domain list plus a set
//! of dataset splits, each stored as JSON lines of `{"text", "label"}`
//! objects. In-distribution splits carry domain labels; out-of-
//! distribution test sets carry the reserved sentinel label `"OOD"`.
//! Loading validates everything up front: file formats, label coherence
//! per role, per-domain coverage, and declared example counts.

pub mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reserved label marking an out-of-distribution example. Never a valid
/// domain name.
pub const OOD_LABEL: &str = "OOD";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: {message}", path.display())]
    ManifestParse { path: PathBuf, message: String },
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("{}:{line}: {message}", path.display())]
    MalformedLine {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}: expected {expected} examples, found {found}", path.display())]
    CountMismatch {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("{}: split file contains no examples", path.display())]
    EmptySplit { path: PathBuf },
    #[error("{}: {message}", path.display())]
    InvalidSplit { path: PathBuf, message: String },
    #[error("stratified split infeasible: {0}")]
    Stratify(String),
}

/// One query with its gold routing label: a manifest domain, or
/// [`OOD_LABEL`] for queries no domain should accept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub text: String,
    pub label: String,
}

impl LabeledExample {
    pub fn new(text: impl Into<String>, label: impl Into<String>) -> Self {
        Self { text: text.into(), label: label.into() }
    }

    pub fn is_ood(&self) -> bool {
        self.label == OOD_LABEL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRole {
    Train,
    Valid,
    TestId,
    TestOod,
}

impl SplitRole {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitRole::Train => "train",
            SplitRole::Valid => "valid",
            SplitRole::TestId => "test_id",
            SplitRole::TestOod => "test_ood",
        }
    }
}

/// Why an OOD test set is out of distribution. `None` for every
/// in-distribution role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OodCategory {
    Unsafe,
    OtherLanguage,
    OtherDomain,
    #[default]
    None,
}

/// Manifest entry describing one split file. `path` is resolved against
/// the manifest's directory by [`load_manifest`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitDescriptor {
    pub name: String,
    pub role: SplitRole,
    pub ood_category: OodCategory,
    pub path: PathBuf,
    pub expected_count: Option<usize>,
}

/// A loaded split: examples in file order, with the role/label coherence
/// invariants already enforced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub name: String,
    pub role: SplitRole,
    pub ood_category: OodCategory,
    pub examples: Vec<LabeledExample>,
}

/// Declarative description of a guarded-routing benchmark.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchmarkManifest {
    pub domains: Vec<String>,
    pub unsafe_set: Vec<String>,
    pub splits: Vec<SplitDescriptor>,
}

impl BenchmarkManifest {
    /// Number of routing domains k.
    pub fn k(&self) -> usize {
        self.domains.len()
    }
}

/// Manifest plus all of its splits, loaded and validated together.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub manifest: BenchmarkManifest,
    pub splits: Vec<DatasetSplit>,
}

impl Benchmark {
    pub fn split(&self, name: &str) -> Option<&DatasetSplit> {
        self.splits.iter().find(|s| s.name == name)
    }

    pub fn splits_with_role(&self, role: SplitRole) -> impl Iterator<Item = &DatasetSplit> {
        self.splits.iter().filter(move |s| s.role == role)
    }

    /// Training examples across all train splits, in manifest order.
    pub fn train_examples(&self) -> Vec<&LabeledExample> {
        self.splits_with_role(SplitRole::Train)
            .flat_map(|s| s.examples.iter())
            .collect()
    }

    pub fn valid_examples(&self) -> Vec<&LabeledExample> {
        self.splits_with_role(SplitRole::Valid)
            .flat_map(|s| s.examples.iter())
            .collect()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    schema_version: u32,
    domains: Vec<String>,
    #[serde(default)]
    unsafe_set: Vec<String>,
    #[serde(default)]
    splits: Vec<RawSplit>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSplit {
    name: String,
    role: SplitRole,
    #[serde(default)]
    ood_category: OodCategory,
    path: String,
    #[serde(default)]
    expected_count: Option<usize>,
}

/// Loads and fully validates a benchmark manifest, including every split
/// file it references. Returns just the manifest; use [`load_benchmark`]
/// to keep the loaded splits.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<BenchmarkManifest, CorpusError> {
    load_benchmark(path).map(|b| b.manifest)
}

/// Loads the manifest and all referenced splits, enforcing every
/// invariant: schema version, k ≥ 2 distinct case-normalized domains,
/// role/category coherence, labels restricted to declared domains (or
/// the OOD sentinel in test_ood splits), per-domain train/valid/test_id
/// coverage, declared counts, and unsafe_set membership.
pub fn load_benchmark(path: impl AsRef<Path>) -> Result<Benchmark, CorpusError> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let raw: RawManifest = toml::from_str(&content).map_err(|e| CorpusError::ManifestParse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if raw.schema_version != 1 {
        return Err(CorpusError::ManifestParse {
            path: path.to_path_buf(),
            message: format!("unsupported schema_version {}", raw.schema_version),
        });
    }

    let domains: Vec<String> = raw.domains.iter().map(|d| d.to_lowercase()).collect();
    if domains.len() < 2 {
        return Err(CorpusError::InvalidManifest(format!(
            "domains: need at least 2 domains, got {}",
            domains.len()
        )));
    }
    let mut seen = BTreeSet::new();
    for d in &domains {
        if d.trim().is_empty() {
            return Err(CorpusError::InvalidManifest("domains: empty domain name".into()));
        }
        if d.eq_ignore_ascii_case(OOD_LABEL) {
            return Err(CorpusError::InvalidManifest(format!(
                "domains: {OOD_LABEL:?} is reserved for out-of-distribution labels"
            )));
        }
        if !seen.insert(d.clone()) {
            return Err(CorpusError::InvalidManifest(format!(
                "domains: duplicate domain name {d:?}"
            )));
        }
    }

    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut descriptors = Vec::with_capacity(raw.splits.len());
    let mut names = BTreeSet::new();
    for s in raw.splits {
        if !names.insert(s.name.clone()) {
            return Err(CorpusError::InvalidManifest(format!(
                "splits: duplicate split name {:?}",
                s.name
            )));
        }
        let is_ood_role = s.role == SplitRole::TestOod;
        let has_category = s.ood_category != OodCategory::None;
        if is_ood_role != has_category {
            return Err(CorpusError::InvalidManifest(format!(
                "split {:?}: ood_category must be set exactly when role is test_ood",
                s.name
            )));
        }
        let resolved = base.join(&s.path);
        if !resolved.is_file() {
            return Err(CorpusError::InvalidManifest(format!(
                "split {:?}: missing referenced file {}",
                s.name,
                resolved.display()
            )));
        }
        descriptors.push(SplitDescriptor {
            name: s.name,
            role: s.role,
            ood_category: s.ood_category,
            path: resolved,
            expected_count: s.expected_count,
        });
    }

    for name in &raw.unsafe_set {
        let found = descriptors
            .iter()
            .any(|d| d.name == *name && d.role == SplitRole::TestOod);
        if !found {
            return Err(CorpusError::InvalidManifest(format!(
                "unsafe_set: {name:?} is not the name of a test_ood split"
            )));
        }
    }

    let mut splits = Vec::with_capacity(descriptors.len());
    for descriptor in &descriptors {
        let split = load_split(descriptor)?;
        if split.role != SplitRole::TestOod {
            for ex in &split.examples {
                if !domains.contains(&ex.label) {
                    return Err(CorpusError::InvalidSplit {
                        path: descriptor.path.clone(),
                        message: format!(
                            "label {:?} is not a declared domain",
                            ex.label
                        ),
                    });
                }
            }
        }
        splits.push(split);
    }

    for d in &domains {
        for role in [SplitRole::Train, SplitRole::Valid, SplitRole::TestId] {
            let covered = splits
                .iter()
                .filter(|s| s.role == role)
                .any(|s| s.examples.iter().any(|ex| ex.label == *d));
            if !covered {
                return Err(CorpusError::InvalidManifest(format!(
                    "domain {d:?} has no examples in any {} split",
                    role.as_str()
                )));
            }
        }
    }

    let manifest = BenchmarkManifest {
        domains,
        unsafe_set: raw.unsafe_set,
        splits: descriptors,
    };
    Ok(Benchmark { manifest, splits })
}

/// Loads one split file: JSON lines of `{"text", "label"}`. Labels are
/// lowercased, except any case variant of the OOD sentinel, which
/// canonicalizes to `"OOD"`. Enforces non-empty text, the declared
/// example count, and label/role coherence (OOD labels appear in
/// test_ood splits and nowhere else).
pub fn load_split(descriptor: &SplitDescriptor) -> Result<DatasetSplit, CorpusError> {
    let path = &descriptor.path;
    let content = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.clone(),
        source,
    })?;
    let mut examples = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        let mut ex: LabeledExample =
            serde_json::from_str(line).map_err(|e| CorpusError::MalformedLine {
                path: path.clone(),
                line: line_no,
                message: e.to_string(),
            })?;
        ex.text = ex.text.trim().to_string();
        if ex.text.is_empty() {
            return Err(CorpusError::MalformedLine {
                path: path.clone(),
                line: line_no,
                message: "empty text field".into(),
            });
        }
        ex.label = canonicalize_label(&ex.label);
        let is_ood = ex.is_ood();
        let want_ood = descriptor.role == SplitRole::TestOod;
        if is_ood != want_ood {
            return Err(CorpusError::MalformedLine {
                path: path.clone(),
                line: line_no,
                message: if want_ood {
                    format!("test_ood split contains non-OOD label {:?}", ex.label)
                } else {
                    format!("{} split contains an OOD label", descriptor.role.as_str())
                },
            });
        }
        examples.push(ex);
    }
    if examples.is_empty() {
        return Err(CorpusError::EmptySplit { path: path.clone() });
    }
    if let Some(expected) = descriptor.expected_count {
        if examples.len() != expected {
            return Err(CorpusError::CountMismatch {
                path: path.clone(),
                expected,
                found: examples.len(),
            });
        }
    }
    Ok(DatasetSplit {
        name: descriptor.name.clone(),
        role: descriptor.role,
        ood_category: descriptor.ood_category,
        examples,
    })
}

/// Lowercases a label, canonicalizing any case variant of the OOD
/// sentinel to exactly `"OOD"`.
pub fn canonicalize_label(label: &str) -> String {
    if label.eq_ignore_ascii_case(OOD_LABEL) {
        OOD_LABEL.to_string()
    } else {
        label.to_lowercase()
    }
}

/// Writes examples as JSON lines, the inverse of [`load_split`]'s file
/// format.
pub fn write_examples(
    path: impl AsRef<Path>,
    examples: &[LabeledExample],
) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut out = String::new();
    for ex in examples {
        out.push_str(&serde_json::to_string(ex).expect("example serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Splits labeled examples into train/valid/test_id parts with per-label
/// proportions within ±1 example of the requested fractions (largest-
/// remainder apportionment per label). Deterministic for a fixed seed;
/// each output preserves the input order of its members.
pub fn stratified_split(
    examples: &[LabeledExample],
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(DatasetSplit, DatasetSplit, DatasetSplit), CorpusError> {
    let (f_train, f_valid, f_test) = fractions;
    if !(f_train > 0.0 && f_valid > 0.0 && f_test > 0.0) {
        return Err(CorpusError::Stratify("fractions must be positive".into()));
    }
    if (f_train + f_valid + f_test - 1.0).abs() > 1e-9 {
        return Err(CorpusError::Stratify(format!(
            "fractions must sum to 1, got {}",
            f_train + f_valid + f_test
        )));
    }
    if let Some(ex) = examples.iter().find(|ex| ex.is_ood()) {
        return Err(CorpusError::Stratify(format!(
            "example {:?} carries the OOD label; only in-distribution data can be stratified",
            ex.text
        )));
    }

    let mut by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, ex) in examples.iter().enumerate() {
        by_label.entry(ex.label.as_str()).or_default().push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assigned: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (label, mut indices) in by_label {
        let m = indices.len();
        let targets = apportion(m, [f_train, f_valid, f_test]);
        if targets.iter().any(|&n| n == 0) {
            return Err(CorpusError::Stratify(format!(
                "label {label:?} has only {m} examples; every split needs at least one"
            )));
        }
        indices.shuffle(&mut rng);
        let mut cursor = 0;
        for (part, &n) in targets.iter().enumerate() {
            assigned[part].extend_from_slice(&indices[cursor..cursor + n]);
            cursor += n;
        }
    }

    let build = |name: &str, role: SplitRole, mut idx: Vec<usize>| {
        idx.sort_unstable();
        DatasetSplit {
            name: name.to_string(),
            role,
            ood_category: OodCategory::None,
            examples: idx.into_iter().map(|i| examples[i].clone()).collect(),
        }
    };
    let [train_idx, valid_idx, test_idx] = assigned;
    Ok((
        build("train", SplitRole::Train, train_idx),
        build("valid", SplitRole::Valid, valid_idx),
        build("test_id", SplitRole::TestId, test_idx),
    ))
}

/// Largest-remainder apportionment of `total` items into parts
/// proportional to `fractions`. Ties favor earlier parts.
fn apportion(total: usize, fractions: [f64; 3]) -> [usize; 3] {
    let mut counts = [0usize; 3];
    let mut remainders = [(0.0f64, 0usize); 3];
    let mut allocated = 0;
    for (i, &f) in fractions.iter().enumerate() {
        let exact = f * total as f64;
        counts[i] = exact.floor() as usize;
        allocated += counts[i];
        remainders[i] = (exact - exact.floor(), i);
    }
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take(total - allocated) {
        counts[i] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use std::fs;

    use super::*;

    fn ex(text: &str, label: &str) -> LabeledExample {
        LabeledExample::new(text, label)
    }

    fn write_lines(path: &Path, lines: &[&str]) {
        fs::write(path, lines.join("\n") + "\n").unwrap();
    }

    fn descriptor(path: &Path, role: SplitRole) -> SplitDescriptor {
        SplitDescriptor {
            name: "test".into(),
            role,
            ood_category: if role == SplitRole::TestOod {
                OodCategory::OtherDomain
            } else {
                OodCategory::None
            },
            path: path.to_path_buf(),
            expected_count: None,
        }
    }

    #[test]
    fn load_split_preserves_file_order_and_normalizes_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mixed.jsonl");
        write_lines(
            &path,
            &[
                r#"{"text":"contest a will","label":"Law"}"#,
                r#"{"text":"  mortgage rates  ","label":"finance"}"#,
                r#"{"text":"fever dosage","label":"HEALTH"}"#,
            ],
        );
        let split = load_split(&descriptor(&path, SplitRole::Train)).unwrap();
        assert_eq!(
            split.examples,
            vec![
                ex("contest a will", "law"),
                ex("mortgage rates", "finance"),
                ex("fever dosage", "health"),
            ]
        );
    }

    #[test]
    fn load_split_reports_malformed_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        write_lines(
            &path,
            &[
                r#"{"text":"ok","label":"law"}"#,
                r#"{"text":"missing label"}"#,
            ],
        );
        let err = load_split(&descriptor(&path, SplitRole::Train)).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedLine { line: 2, .. }), "{err}");
    }

    #[test]
    fn load_split_rejects_empty_text() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty_text.jsonl");
        write_lines(&path, &[r#"{"text":"   ","label":"law"}"#]);
        let err = load_split(&descriptor(&path, SplitRole::Train)).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedLine { line: 1, .. }), "{err}");
    }

    #[test]
    fn load_split_enforces_expected_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.jsonl");
        write_lines(&path, &[r#"{"text":"a","label":"law"}"#]);
        let mut d = descriptor(&path, SplitRole::Train);
        d.expected_count = Some(3);
        let err = load_split(&d).unwrap_err();
        assert!(
            matches!(err, CorpusError::CountMismatch { expected: 3, found: 1, .. }),
            "{err}"
        );
    }

    #[test]
    fn load_split_rejects_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("none.jsonl");
        fs::write(&path, "").unwrap();
        let err = load_split(&descriptor(&path, SplitRole::Train)).unwrap_err();
        assert!(matches!(err, CorpusError::EmptySplit { .. }), "{err}");
    }

    #[test]
    fn ood_sentinel_is_canonicalized_not_lowercased() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ood.jsonl");
        write_lines(
            &path,
            &[
                r#"{"text":"чужой запрос","label":"ood"}"#,
                r#"{"text":"quasar flux","label":"OOD"}"#,
            ],
        );
        let split = load_split(&descriptor(&path, SplitRole::TestOod)).unwrap();
        assert!(split.examples.iter().all(|e| e.label == "OOD"));
    }

    #[test]
    fn role_label_coherence_is_enforced_both_ways() {
        let dir = tempfile::tempdir().unwrap();
        let train = dir.path().join("train.jsonl");
        write_lines(&train, &[r#"{"text":"x","label":"OOD"}"#]);
        let err = load_split(&descriptor(&train, SplitRole::Train)).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedLine { line: 1, .. }), "{err}");

        let ood = dir.path().join("ood.jsonl");
        write_lines(&ood, &[r#"{"text":"x","label":"law"}"#]);
        let err = load_split(&descriptor(&ood, SplitRole::TestOod)).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedLine { line: 1, .. }), "{err}");
    }

    #[test]
    fn split_round_trips_through_the_line_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("round.jsonl");
        let examples = vec![
            ex("contest a will", "law"),
            ex("право и закон", "OOD"),
        ];
        write_examples(&path, &examples).unwrap();
        let d = SplitDescriptor {
            name: "round".into(),
            role: SplitRole::TestOod,
            ood_category: OodCategory::OtherLanguage,
            path: path.clone(),
            expected_count: Some(2),
        };
        // Mixed-label file cannot load as test_ood; check the pure-OOD
        // subset round-trips exactly, then the mixed file errors.
        let ood_only = vec![examples[1].clone()];
        write_examples(&path, &ood_only).unwrap();
        let mut d2 = d.clone();
        d2.expected_count = Some(1);
        let loaded = load_split(&d2).unwrap();
        assert_eq!(loaded.examples, ood_only);
        write_examples(&path, &examples).unwrap();
        assert!(load_split(&d).is_err());
    }

    fn write_minimal_benchmark(dir: &Path) -> PathBuf {
        for (file, label) in [
            ("law_train.jsonl", "law"),
            ("law_valid.jsonl", "law"),
            ("law_test.jsonl", "law"),
            ("fin_train.jsonl", "finance"),
            ("fin_valid.jsonl", "finance"),
            ("fin_test.jsonl", "finance"),
        ] {
            write_lines(
                &dir.join(file),
                &[&format!(r#"{{"text":"query about {label}","label":"{label}"}}"#)],
            );
        }
        write_lines(&dir.join("ood.jsonl"), &[r#"{"text":"quasar","label":"OOD"}"#]);
        let manifest = r#"
schema_version = 1
domains = ["Law", "Finance"]
unsafe_set = []

[[splits]]
name = "law_train"
role = "train"
path = "law_train.jsonl"

[[splits]]
name = "law_valid"
role = "valid"
path = "law_valid.jsonl"

[[splits]]
name = "law_test"
role = "test_id"
path = "law_test.jsonl"

[[splits]]
name = "fin_train"
role = "train"
path = "fin_train.jsonl"

[[splits]]
name = "fin_valid"
role = "valid"
path = "fin_valid.jsonl"

[[splits]]
name = "fin_test"
role = "test_id"
path = "fin_test.jsonl"

[[splits]]
name = "ood"
role = "test_ood"
ood_category = "other_domain"
path = "ood.jsonl"
"#;
        let path = dir.join("benchmark.toml");
        fs::write(&path, manifest).unwrap();
        path
    }

    #[test]
    fn load_manifest_accepts_a_coherent_benchmark() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_minimal_benchmark(dir.path());
        let m = load_manifest(&path).unwrap();
        assert_eq!(m.domains, ["law", "finance"]);
        assert_eq!(m.k(), 2);
        assert_eq!(m.splits.len(), 7);
        let b = load_benchmark(&path).unwrap();
        assert_eq!(b.splits_with_role(SplitRole::TestOod).count(), 1);
        assert!(b.split("law_train").is_some());
    }

    #[test]
    fn load_manifest_rejects_duplicate_domains() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_minimal_benchmark(dir.path());
        let text = fs::read_to_string(&path)
            .unwrap()
            .replace(r#"["Law", "Finance"]"#, r#"["Law", "law"]"#);
        fs::write(&path, text).unwrap();
        let err = load_manifest(&path).unwrap_err();
        assert!(err.to_string().contains("duplicate domain"), "{err}");
    }

    #[test]
    fn load_manifest_rejects_ood_label_in_train_split() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_minimal_benchmark(dir.path());
        write_lines(
            &dir.path().join("law_train.jsonl"),
            &[
                r#"{"text":"a will","label":"law"}"#,
                r#"{"text":"stray","label":"OOD"}"#,
            ],
        );
        let err = load_manifest(&path).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedLine { line: 2, .. }), "{err}");
    }

    #[test]
    fn load_manifest_rejects_undeclared_label() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_minimal_benchmark(dir.path());
        write_lines(
            &dir.path().join("law_train.jsonl"),
            &[r#"{"text":"a will","label":"health"}"#],
        );
        let err = load_manifest(&path).unwrap_err();
        assert!(err.to_string().contains("not a declared domain"), "{err}");
    }

    #[test]
    fn load_manifest_rejects_missing_file_and_uncovered_domain() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_minimal_benchmark(dir.path());
        fs::remove_file(dir.path().join("fin_valid.jsonl")).unwrap();
        let err = load_manifest(&path).unwrap_err();
        assert!(err.to_string().contains("missing referenced file"), "{err}");

        // Restore the file but strip its finance coverage by pointing the
        // valid split at law data: finance then lacks a valid example.
        write_lines(
            &dir.path().join("fin_valid.jsonl"),
            &[r#"{"text":"a will","label":"law"}"#],
        );
        let err = load_manifest(&path).unwrap_err();
        assert!(
            err.to_string().contains("\"finance\" has no examples in any valid split"),
            "{err}"
        );
    }

    #[test]
    fn load_manifest_rejects_bad_unsafe_set_and_category_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_minimal_benchmark(dir.path());
        let text = fs::read_to_string(&path)
            .unwrap()
            .replace("unsafe_set = []", r#"unsafe_set = ["law_train"]"#);
        fs::write(&path, text).unwrap();
        let err = load_manifest(&path).unwrap_err();
        assert!(err.to_string().contains("unsafe_set"), "{err}");

        let path2 = write_minimal_benchmark(dir.path());
        let text = fs::read_to_string(&path2)
            .unwrap()
            .replace("ood_category = \"other_domain\"\n", "");
        fs::write(&path2, text).unwrap();
        let err = load_manifest(&path2).unwrap_err();
        assert!(err.to_string().contains("ood_category"), "{err}");
    }

    #[test]
    fn load_manifest_rejects_wrong_schema_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_minimal_benchmark(dir.path());
        let text = fs::read_to_string(&path)
            .unwrap()
            .replace("schema_version = 1", "schema_version = 9");
        fs::write(&path, text).unwrap();
        let err = load_manifest(&path).unwrap_err();
        assert!(err.to_string().contains("schema_version"), "{err}");
    }

    #[test]
    fn stratified_split_hits_exact_proportions() {
        let mut examples = Vec::new();
        for i in 0..50 {
            examples.push(ex(&format!("law query {i}"), "law"));
            examples.push(ex(&format!("finance query {i}"), "finance"));
        }
        let (train, valid, test) = stratified_split(&examples, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!((train.examples.len(), valid.examples.len(), test.examples.len()), (80, 10, 10));
        for split in [&train, &valid, &test] {
            let law = split.examples.iter().filter(|e| e.label == "law").count();
            assert_eq!(law * 2, split.examples.len(), "imbalanced {}", split.name);
        }
        assert_eq!(train.role, SplitRole::Train);
        assert_eq!(valid.role, SplitRole::Valid);
        assert_eq!(test.role, SplitRole::TestId);
    }

    #[test]
    fn stratified_split_is_deterministic_and_a_partition() {
        let examples: Vec<_> = (0..37)
            .map(|i| ex(&format!("q{i}"), if i % 3 == 0 { "law" } else { "finance" }))
            .collect();
        let a = stratified_split(&examples, (0.6, 0.2, 0.2), 42).unwrap();
        let b = stratified_split(&examples, (0.6, 0.2, 0.2), 42).unwrap();
        assert_eq!(a.0.examples, b.0.examples);
        assert_eq!(a.1.examples, b.1.examples);
        assert_eq!(a.2.examples, b.2.examples);

        let mut union: Vec<_> = a
            .0
            .examples
            .iter()
            .chain(&a.1.examples)
            .chain(&a.2.examples)
            .map(|e| e.text.clone())
            .collect();
        union.sort();
        let mut input: Vec<_> = examples.iter().map(|e| e.text.clone()).collect();
        input.sort();
        assert_eq!(union, input);

        let c = stratified_split(&examples, (0.6, 0.2, 0.2), 43).unwrap();
        assert_ne!(
            (a.1.examples.clone(), a.2.examples.clone()),
            (c.1.examples.clone(), c.2.examples.clone()),
            "different seeds should shuffle differently"
        );
    }

    #[test]
    fn stratified_split_preserves_input_order_within_each_part() {
        let examples: Vec<_> = (0..30).map(|i| ex(&format!("q{i:02}"), "law")).collect();
        let (train, ..) = stratified_split(&examples, (0.5, 0.25, 0.25), 3).unwrap();
        let texts: Vec<_> = train.examples.iter().map(|e| e.text.clone()).collect();
        let mut sorted = texts.clone();
        sorted.sort();
        assert_eq!(texts, sorted);
    }

    #[test]
    fn stratified_split_rejects_infeasible_inputs() {
        let tiny = vec![ex("a", "law"), ex("b", "law"), ex("c", "law")];
        assert!(matches!(
            stratified_split(&tiny, (0.8, 0.1, 0.1), 1),
            Err(CorpusError::Stratify(_))
        ));
        let some = vec![ex("a", "law"), ex("b", "law"), ex("c", "law"), ex("d", "law")];
        assert!(matches!(
            stratified_split(&some, (0.5, 0.2, 0.2), 1),
            Err(CorpusError::Stratify(_))
        ));
        let with_ood = vec![ex("a", "law"), ex("b", "OOD")];
        assert!(matches!(
            stratified_split(&with_ood, (0.4, 0.3, 0.3), 1),
            Err(CorpusError::Stratify(_))
        ));
    }
}
