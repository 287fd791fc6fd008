//! Batch dataset generation with a per-case quota table, deterministic
//! per-sample seeding, document-level train/test splits and a line-oriented
//! manifest.
//!
//! Output layout under the dataset root:
//!
//! ```text
//! manifest.jsonl                       header line, then one entry per line
//! skipped.jsonl                        samples that failed and were backfilled
//! originals/<document_id>.png|.json    untouched source pages and annotations
//! <case>/<split>/<document_id>_<index>.png        forged page
//! <case>/<split>/<document_id>_<index>.mask.png   {0,255} ground truth
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bridge::{BridgeGenerator, CommandSpec};
use crate::corpus::{OcrAnnotation, TargetPolicy};
use crate::edit::InpaintParams;
use crate::patterns::{self, CaseKey, EditPattern, EditRecord, Generator, InRepoGenerator, PatternContext, PatternError};
use crate::raster::{DocumentImage, Mask, RasterError};

pub const MANIFEST_FORMAT: &str = "fdvied-manifest";
pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const ORIGINALS_DIR: &str = "originals";
/// Attempts per document before moving on to another document.
pub const ATTEMPTS_PER_DOCUMENT: u32 = 8;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Per-case image counts (training, test), in `CaseKey::ALL` order.
pub const REFERENCE_COUNTS: [(CaseKey, u64, u64); 9] = [
    (CaseKey::ALL[0], 5796, 728),
    (CaseKey::ALL[1], 6122, 798),
    (CaseKey::ALL[2], 3019, 394),
    (CaseKey::ALL[3], 6088, 790),
    (CaseKey::ALL[4], 3061, 399),
    (CaseKey::ALL[5], 5598, 704),
    (CaseKey::ALL[6], 5598, 704),
    (CaseKey::ALL[7], 5796, 728),
    (CaseKey::ALL[8], 5796, 728),
];
pub const REFERENCE_TRAIN_TOTAL: u64 = 46_874;
pub const REFERENCE_TEST_TOTAL: u64 = 5_973;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("duplicate document id {0:?} in corpus")]
    DuplicateDocument(String),
    #[error("invalid build config: {0}")]
    InvalidConfig(String),
    #[error("cannot write output under {path}: {source}")]
    OutputUnwritable {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{case}/{split}: sample {index} could not be generated from any document (last error: {last})")]
    QuotaUnreachable { case: CaseKey, split: Split, index: u32, last: String },
    #[error("no manifest entry matches the selection")]
    EmptySelection,
    #[error("malformed manifest line {line}: {msg}")]
    MalformedManifest { line: usize, msg: String },
    #[error("verification failed for {path}: {msg}")]
    Verification { path: String, msg: String },
    #[error("dataset i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

fn unwritable(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::OutputUnwritable { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub const ALL: [Split; 2] = [Split::Train, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskStyle {
    /// Exactly the modified pixels.
    #[default]
    ChangedPixels,
    /// Bounding rectangle of the modified pixels.
    BoundingRect,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorChoice {
    #[default]
    InRepo,
    ExternalBridge {
        command: CommandSpec,
        #[serde(default = "default_bridge_timeout")]
        timeout_secs: u64,
    },
}

fn default_bridge_timeout() -> u64 {
    60
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseCount {
    pub case: CaseKey,
    pub train: u64,
    pub test: u64,
}

fn default_version() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    pub case_counts: Vec<CaseCount>,
    pub master_seed: u64,
    #[serde(default)]
    pub target_policy: TargetPolicy,
    #[serde(default)]
    pub mask_style: MaskStyle,
    #[serde(default)]
    pub generator: GeneratorChoice,
    #[serde(default)]
    pub blend_radius: u32,
    #[serde(default)]
    pub inpaint: InpaintParams,
}

/// How fractional quotas are turned into integer counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rounding {
    /// Each cell rounded independently (half away from zero).
    PerCell,
    /// Largest-remainder apportionment so each split total equals
    /// `round(reference_total * scale)`; ties go to the earlier case.
    LargestRemainder,
}

fn scaled_split(counts: &[u64; 9], total: u64, scale: f64, rounding: Rounding) -> [u64; 9] {
    match rounding {
        Rounding::PerCell => counts.map(|c| (c as f64 * scale).round() as u64),
        Rounding::LargestRemainder => {
            let target = (total as f64 * scale).round() as u64;
            let exact: Vec<f64> = counts.iter().map(|&c| c as f64 * target as f64 / total as f64).collect();
            let mut out: [u64; 9] = std::array::from_fn(|i| exact[i].floor() as u64);
            let mut order: Vec<usize> = (0..9).collect();
            order.sort_by(|&a, &b| {
                let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
                rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
            });
            let missing = target.saturating_sub(out.iter().sum());
            for &i in order.iter().take(missing as usize) {
                out[i] += 1;
            }
            out
        }
    }
}

impl BuildConfig {
    pub fn new(case_counts: Vec<CaseCount>, master_seed: u64) -> Self {
        BuildConfig {
            version: 1,
            case_counts,
            master_seed,
            target_policy: TargetPolicy::default(),
            mask_style: MaskStyle::default(),
            generator: GeneratorChoice::default(),
            blend_radius: 0,
            inpaint: InpaintParams::default(),
        }
    }

    /// Quota table proportional to the reference per-case counts.
    pub fn reference(scale: f64, rounding: Rounding, master_seed: u64) -> Self {
        let train: [u64; 9] = std::array::from_fn(|i| REFERENCE_COUNTS[i].1);
        let test: [u64; 9] = std::array::from_fn(|i| REFERENCE_COUNTS[i].2);
        let tr = scaled_split(&train, REFERENCE_TRAIN_TOTAL, scale, rounding);
        let te = scaled_split(&test, REFERENCE_TEST_TOTAL, scale, rounding);
        let counts = (0..9)
            .map(|i| CaseCount { case: REFERENCE_COUNTS[i].0, train: tr[i], test: te[i] })
            .collect();
        BuildConfig::new(counts, master_seed)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.version != 1 {
            return Err(DatasetError::InvalidConfig(format!("unsupported config version {}", self.version)));
        }
        let mut seen = BTreeSet::new();
        for c in &self.case_counts {
            if !seen.insert(c.case) {
                return Err(DatasetError::InvalidConfig(format!("case {} listed twice", c.case)));
            }
        }
        if self.case_counts.iter().all(|c| c.train == 0 && c.test == 0) {
            return Err(DatasetError::InvalidConfig("all case counts are zero".into()));
        }
        if self.blend_radius > crate::edit::MAX_BLEND_RADIUS {
            return Err(DatasetError::InvalidConfig(format!("blend radius {} exceeds 4", self.blend_radius)));
        }
        if let GeneratorChoice::ExternalBridge { timeout_secs, .. } = &self.generator {
            if !(1..=600).contains(timeout_secs) {
                return Err(DatasetError::InvalidConfig(format!("bridge timeout {timeout_secs}s outside [1, 600]")));
            }
        }
        Ok(())
    }

    pub fn count(&self, case: CaseKey, split: Split) -> u64 {
        self.case_counts
            .iter()
            .find(|c| c.case == case)
            .map(|c| match split {
                Split::Train => c.train,
                Split::Test => c.test,
            })
            .unwrap_or(0)
    }

    pub fn total(&self, split: Split) -> u64 {
        CaseKey::ALL.iter().map(|&c| self.count(c, split)).sum()
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub forged_path: String,
    pub original_id: String,
    pub mask_path: String,
    pub split: Split,
    pub index: u32,
    pub record: EditRecord,
}

impl ManifestEntry {
    fn sort_key(&self) -> (usize, Split, &str, u32) {
        let case_pos = CaseKey::ALL.iter().position(|c| *c == self.record.case).unwrap_or(usize::MAX);
        (case_pos, self.split, self.original_id.as_str(), self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ManifestHeader {
    format: String,
    version: u32,
    tool_version: String,
    config_hash: String,
    mask_style: MaskStyle,
    /// Directory that entry paths are relative to, itself relative to the
    /// manifest file unless absolute.
    root: String,
    entries: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub config_hash: String,
    pub tool_version: String,
    pub mask_style: MaskStyle,
    pub root: String,
}

impl DatasetManifest {
    pub fn empty() -> Self {
        DatasetManifest {
            entries: Vec::new(),
            config_hash: String::new(),
            tool_version: TOOL_VERSION.to_string(),
            mask_style: MaskStyle::default(),
            root: ".".into(),
        }
    }

    pub fn sort(&mut self) {
        self.entries.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    }

    pub fn to_jsonl(&self) -> String {
        let header = ManifestHeader {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            tool_version: self.tool_version.clone(),
            config_hash: self.config_hash.clone(),
            mask_style: self.mask_style,
            root: self.root.clone(),
            entries: self.entries.len(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn parse_jsonl(src: &str) -> Result<Self, DatasetError> {
        let mut lines = src.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines
            .next()
            .ok_or(DatasetError::MalformedManifest { line: 1, msg: "missing header".into() })?;
        let header: ManifestHeader =
            serde_json::from_str(first).map_err(|e| DatasetError::MalformedManifest { line: 1, msg: e.to_string() })?;
        if header.format != MANIFEST_FORMAT || header.version != MANIFEST_VERSION {
            return Err(DatasetError::MalformedManifest {
                line: 1,
                msg: format!("unsupported format {} v{}", header.format, header.version),
            });
        }
        let mut entries = Vec::with_capacity(header.entries);
        for (i, l) in lines {
            let e: ManifestEntry =
                serde_json::from_str(l).map_err(|e| DatasetError::MalformedManifest { line: i + 1, msg: e.to_string() })?;
            entries.push(e);
        }
        if entries.len() != header.entries {
            return Err(DatasetError::MalformedManifest {
                line: 1,
                msg: format!("header announces {} entries, found {}", header.entries, entries.len()),
            });
        }
        Ok(DatasetManifest {
            entries,
            config_hash: header.config_hash,
            tool_version: header.tool_version,
            mask_style: header.mask_style,
            root: header.root,
        })
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let src = fs::read_to_string(path).map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
        Self::parse_jsonl(&src)
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        fs::write(path, self.to_jsonl()).map_err(unwritable(path))
    }

    /// Directory entry paths resolve against, given the manifest's location.
    pub fn root_dir(&self, manifest_path: &Path) -> PathBuf {
        let root = Path::new(&self.root);
        if root.is_absolute() {
            root.to_path_buf()
        } else {
            manifest_path.parent().unwrap_or(Path::new(".")).join(root)
        }
    }
}

/// Deterministic 64-bit seed from labeled parts.
pub fn derive_seed(master_seed: u64, parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Per-sample seed from the master seed, document, case, index and attempt.
pub fn sample_seed(master_seed: u64, document_id: &str, case: CaseKey, index: u32, attempt: u32) -> u64 {
    derive_seed(
        master_seed,
        &[
            document_id.as_bytes(),
            case.slug().as_bytes(),
            &index.to_le_bytes(),
            &attempt.to_le_bytes(),
        ],
    )
}

/// Assigns whole documents to splits. Documents are ordered by a seeded
/// hash of their id and the first `ceil(n * test_fraction)` go to test,
/// keeping at least one document in every split that has a nonzero quota.
pub fn split_documents(ids: &[&str], master_seed: u64, train_needed: bool, test_needed: bool, test_fraction: f64) -> BTreeMap<Split, Vec<String>> {
    let mut order: Vec<(u64, &str)> = ids.iter().map(|id| (derive_seed(master_seed, &[b"split", id.as_bytes()]), *id)).collect();
    order.sort();
    let n = order.len();
    let mut n_test = (n as f64 * test_fraction).ceil() as usize;
    if test_needed {
        n_test = n_test.max(1);
    } else {
        n_test = 0;
    }
    if train_needed && n_test >= n {
        n_test = n.saturating_sub(1);
    }
    if !train_needed {
        n_test = n;
    }
    let mut out = BTreeMap::new();
    let mut test: Vec<String> = order[..n_test].iter().map(|(_, id)| id.to_string()).collect();
    let mut train: Vec<String> = order[n_test..].iter().map(|(_, id)| id.to_string()).collect();
    test.sort();
    train.sort();
    out.insert(Split::Test, test);
    out.insert(Split::Train, train);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedSample {
    pub case: CaseKey,
    pub split: Split,
    pub index: u32,
    pub document_id: String,
    pub attempt: u32,
    pub reason: String,
}

#[derive(Debug)]
pub struct BuildOutput {
    pub manifest: DatasetManifest,
    pub skipped: Vec<SkippedSample>,
}

struct Sample {
    entry: ManifestEntry,
    image: DocumentImage,
    mask: Mask,
}

fn sample_paths(case: CaseKey, split: Split, doc: &str, index: u32) -> (String, String) {
    let base = format!("{}/{}/{}_{:05}", case.slug(), split, doc, index);
    (format!("{base}.png"), format!("{base}.mask.png"))
}

/// Generates the dataset into `out_dir` and writes its manifest.
pub fn build_dataset(
    config: &BuildConfig,
    corpus: &[(DocumentImage, OcrAnnotation)],
    out_dir: &Path,
) -> Result<BuildOutput, DatasetError> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(DatasetError::EmptyCorpus);
    }
    let mut by_id: HashMap<&str, &(DocumentImage, OcrAnnotation)> = HashMap::new();
    for doc in corpus {
        if by_id.insert(doc.1.document_id.as_str(), doc).is_some() {
            return Err(DatasetError::DuplicateDocument(doc.1.document_id.clone()));
        }
    }
    fs::create_dir_all(out_dir).map_err(unwritable(out_dir))?;

    let ids: Vec<&str> = {
        let mut v: Vec<&str> = by_id.keys().copied().collect();
        v.sort();
        v
    };
    let (train_total, test_total) = (config.total(Split::Train), config.total(Split::Test));
    let test_fraction = test_total as f64 / (train_total + test_total) as f64;
    let splits = split_documents(&ids, config.master_seed, train_total > 0, test_total > 0, test_fraction);

    let scratch = out_dir.join(".bridge-scratch");
    let generator: Box<dyn Generator> = match &config.generator {
        GeneratorChoice::InRepo => Box::new(InRepoGenerator { inpaint: config.inpaint }),
        GeneratorChoice::ExternalBridge { command, timeout_secs } => {
            Box::new(BridgeGenerator::new(command.clone(), scratch.clone(), Duration::from_secs(*timeout_secs)))
        }
    };
    let ctx = PatternContext {
        policy: &config.target_policy,
        generator: generator.as_ref(),
        blend_radius: config.blend_radius,
    };

    let mut jobs = Vec::new();
    for case in CaseKey::ALL {
        for split in Split::ALL {
            for index in 0..config.count(case, split) as u32 {
                jobs.push((case, split, index));
            }
        }
    }

    let results: Vec<Result<(Sample, Vec<SkippedSample>), DatasetError>> = jobs
        .par_iter()
        .map(|&(case, split, index)| {
            let docs = &splits[&split];
            if docs.is_empty() {
                return Err(DatasetError::QuotaUnreachable {
                    case,
                    split,
                    index,
                    last: "no documents assigned to split".into(),
                });
            }
            let offset = derive_seed(config.master_seed, &[b"offset", case.slug().as_bytes(), split.as_str().as_bytes()]);
            let base = (offset % docs.len() as u64) as usize + index as usize;
            let mut skipped = Vec::new();
            for k in 0..docs.len() {
                let doc_id = &docs[(base + k) % docs.len()];
                let (image, annot) = by_id[doc_id.as_str()];
                for attempt in 0..ATTEMPTS_PER_DOCUMENT {
                    let seed = sample_seed(config.master_seed, doc_id, case, index, attempt);
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    match patterns::apply_case(case, image, annot, &ctx, seed, &mut rng) {
                        Ok(out) => {
                            let mask = match config.mask_style {
                                MaskStyle::ChangedPixels => out.mask,
                                MaskStyle::BoundingRect => patterns::bounding_rect_mask(&out.mask),
                            };
                            let (forged_path, mask_path) = sample_paths(case, split, doc_id, index);
                            let entry = ManifestEntry {
                                forged_path,
                                original_id: doc_id.clone(),
                                mask_path,
                                split,
                                index,
                                record: out.record,
                            };
                            return Ok((Sample { entry, image: out.image, mask }, skipped));
                        }
                        Err(e) => {
                            log::debug!("{case}/{split}/{index}: {doc_id} attempt {attempt}: {e}");
                            let permanent = matches!(
                                e,
                                PatternError::NoMatchingTarget | PatternError::NoDonorWord | PatternError::InvalidCase(_)
                            );
                            skipped.push(SkippedSample {
                                case,
                                split,
                                index,
                                document_id: doc_id.clone(),
                                attempt,
                                reason: e.to_string(),
                            });
                            if permanent {
                                break;
                            }
                        }
                    }
                }
            }
            let last = skipped.last().map(|s| s.reason.clone()).unwrap_or_default();
            Err(DatasetError::QuotaUnreachable { case, split, index, last })
        })
        .collect();

    if scratch.exists() {
        let _ = fs::remove_dir_all(&scratch);
    }
    let mut samples = Vec::with_capacity(results.len());
    let mut skipped = Vec::new();
    for r in results {
        let (s, sk) = r?;
        samples.push(s);
        skipped.extend(sk);
    }

    // Write outputs.
    let dirs: BTreeSet<PathBuf> = samples
        .iter()
        .filter_map(|s| Path::new(&s.entry.forged_path).parent().map(|p| out_dir.join(p)))
        .collect();
    for d in dirs.iter().chain(std::iter::once(&out_dir.join(ORIGINALS_DIR))) {
        fs::create_dir_all(d).map_err(unwritable(d))?;
    }
    samples.par_iter().try_for_each(|s| -> Result<(), DatasetError> {
        s.image.save_png(&out_dir.join(&s.entry.forged_path))?;
        s.mask.save_png(&out_dir.join(&s.entry.mask_path))?;
        Ok(())
    })?;
    let used: BTreeSet<&str> = samples.iter().map(|s| s.entry.original_id.as_str()).collect();
    used.par_iter().try_for_each(|id| -> Result<(), DatasetError> {
        let (image, annot) = by_id[id];
        image.save_png(&out_dir.join(ORIGINALS_DIR).join(format!("{id}.png")))?;
        let json = out_dir.join(ORIGINALS_DIR).join(format!("{id}.json"));
        let mut a = annot.clone();
        a.image = Some(format!("{id}.png"));
        fs::write(&json, a.to_json()).map_err(unwritable(&json))
    })?;

    let mut manifest = DatasetManifest {
        entries: samples.into_iter().map(|s| s.entry).collect(),
        config_hash: config.digest(),
        tool_version: TOOL_VERSION.to_string(),
        mask_style: config.mask_style,
        root: ".".into(),
    };
    manifest.sort();
    manifest.save(&out_dir.join(MANIFEST_FILE))?;

    skipped.sort_by(|a, b| {
        (CaseKey::ALL.iter().position(|c| *c == a.case), a.split, a.index, &a.document_id, a.attempt).cmp(&(
            CaseKey::ALL.iter().position(|c| *c == b.case),
            b.split,
            b.index,
            &b.document_id,
            b.attempt,
        ))
    });
    let skipped_path = out_dir.join("skipped.jsonl");
    let body: String = skipped
        .iter()
        .map(|s| serde_json::to_string(s).expect("skip record serializes") + "\n")
        .collect();
    fs::write(&skipped_path, body).map_err(unwritable(&skipped_path))?;
    if !skipped.is_empty() {
        log::info!("{} sample attempts were skipped and backfilled", skipped.len());
    }
    Ok(BuildOutput { manifest, skipped })
}

/// Entry counts per case and split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseTable {
    pub rows: Vec<CaseCount>,
    pub train_total: u64,
    pub test_total: u64,
}

impl CaseTable {
    pub fn get(&self, case: CaseKey, split: Split) -> u64 {
        self.rows
            .iter()
            .find(|r| r.case == case)
            .map(|r| if split == Split::Train { r.train } else { r.test })
            .unwrap_or(0)
    }
}

impl fmt::Display for CaseTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<22} {:<12} {:>10} {:>10}", "pattern", "method", "train", "test")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<22} {:<12} {:>10} {:>10}",
                r.case.pattern().label(),
                r.case.method().label(),
                r.train,
                r.test
            )?;
        }
        write!(f, "{:<22} {:<12} {:>10} {:>10}", "", "total", self.train_total, self.test_total)
    }
}

pub fn compute_stats(manifest: &DatasetManifest) -> CaseTable {
    let mut rows: Vec<CaseCount> = CaseKey::ALL.iter().map(|&case| CaseCount { case, train: 0, test: 0 }).collect();
    for e in &manifest.entries {
        if let Some(r) = rows.iter_mut().find(|r| r.case == e.record.case) {
            match e.split {
                Split::Train => r.train += 1,
                Split::Test => r.test += 1,
            }
        }
    }
    let train_total = rows.iter().map(|r| r.train).sum();
    let test_total = rows.iter().map(|r| r.test).sum();
    CaseTable { rows, train_total, test_total }
}

/// Uniform subsample (without replacement) of the entries whose case
/// satisfies `predicate`, at most `cap` of them, in manifest order.
pub fn filter_subset(
    manifest: &DatasetManifest,
    predicate: impl Fn(CaseKey) -> bool,
    cap: usize,
    seed: u64,
) -> Result<DatasetManifest, DatasetError> {
    let matching: Vec<&ManifestEntry> = manifest.entries.iter().filter(|e| predicate(e.record.case)).collect();
    if matching.is_empty() {
        return Err(DatasetError::EmptySelection);
    }
    let chosen: Vec<ManifestEntry> = if matching.len() <= cap {
        matching.into_iter().cloned().collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = sample(&mut rng, matching.len(), cap).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| matching[i].clone()).collect()
    };
    Ok(DatasetManifest {
        entries: chosen,
        config_hash: manifest.config_hash.clone(),
        tool_version: manifest.tool_version.clone(),
        mask_style: manifest.mask_style,
        root: manifest.root.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerifySummary {
    pub checked: usize,
    pub forged_pixels: u64,
}

fn verify_entry(root: &Path, style: MaskStyle, e: &ManifestEntry) -> Result<u64, DatasetError> {
    let fail = |msg: String| DatasetError::Verification { path: e.forged_path.clone(), msg };
    let originals = root.join(ORIGINALS_DIR);
    let original = DocumentImage::load(e.original_id.clone(), &originals.join(format!("{}.png", e.original_id)))?;
    let forged = DocumentImage::load(e.original_id.clone(), &root.join(&e.forged_path))?;
    let mask = Mask::load_png(&root.join(&e.mask_path))?;
    if (forged.width(), forged.height()) != (original.width(), original.height())
        || (mask.width(), mask.height()) != (original.width(), original.height())
    {
        return Err(fail("image, mask and original dimensions differ".into()));
    }
    let diff = forged.diff_mask(&original)?;
    match style {
        MaskStyle::ChangedPixels => {
            if diff != mask {
                let extra = mask.count() as i64 - mask.intersection(&diff).expect("dims").count() as i64;
                let missing = diff.count() as i64 - diff.intersection(&mask).expect("dims").count() as i64;
                return Err(fail(format!(
                    "forged image differs from original off-mask at {missing} pixels; mask marks {extra} unchanged pixels"
                )));
            }
        }
        MaskStyle::BoundingRect => {
            if patterns::bounding_rect_mask(&diff) != mask {
                return Err(fail("mask is not the bounding rectangle of the changed pixels".into()));
            }
        }
    }
    let f = mask.fraction();
    if !(f > 0.0 && f < patterns::MAX_FORGED_FRACTION) {
        return Err(fail(format!("forged fraction {f:.4} outside (0, 0.5)")));
    }
    let annot_path = originals.join(format!("{}.json", e.original_id));
    if annot_path.exists() {
        let annot = crate::corpus::parse_annotations(&annot_path).map_err(|err| fail(err.to_string()))?;
        match e.record.case.pattern() {
            EditPattern::TextAddition | EditPattern::BackgroundAddition => {
                if let Some(w) = annot.words.iter().find(|w| diff.count_in(w.rect) > 0) {
                    return Err(fail(format!("addition touched word {:?} at {}", w.text, w.rect)));
                }
            }
            EditPattern::TextRemoval | EditPattern::TextReplacement => {
                if diff.count_in(e.record.target_region) == 0 {
                    return Err(fail("target word left untouched".into()));
                }
            }
        }
    }
    Ok(mask.count())
}

/// Re-checks every entry against its original page. Stops at the first
/// violation in manifest order.
pub fn verify_dataset(manifest: &DatasetManifest, manifest_path: &Path) -> Result<VerifySummary, DatasetError> {
    let root = manifest.root_dir(manifest_path);
    let results: Vec<Result<u64, DatasetError>> = manifest
        .entries
        .par_iter()
        .map(|e| verify_entry(&root, manifest.mask_style, e))
        .collect();
    let mut forged_pixels = 0;
    for r in results {
        forged_pixels += r?;
    }
    Ok(VerifySummary { checked: manifest.entries.len(), forged_pixels })
}
