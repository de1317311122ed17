//! Sample data model: record storage, annotation bookkeeping, file ingestion
//! and synthetic pool generation.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const OALF_MAGIC: &[u8; 4] = b"OALF";
const OALF_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub id: u64,
    pub features: Vec<f64>,
    /// Raw class label from the source data. Hidden from strategies; read only
    /// through the oracle and evaluator.
    pub true_label: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnnotationState {
    Unlabeled,
    /// Fine-grained target class index in [0, K).
    LabeledTarget(usize),
    QueriedNonTarget,
}

#[derive(Debug, Clone)]
pub struct SamplePool {
    records: Vec<SampleRecord>,
    states: Vec<AnnotationState>,
    index: HashMap<u64, usize>,
    dim: usize,
    /// Raw labels designated as target classes, sorted. The fine-grained class
    /// index of a target sample is its label's rank in this list.
    target_labels: Vec<u32>,
    nontarget_label_count: usize,
    unlabeled_count: usize,
    labeled_target_count: usize,
    queried_nontarget_count: usize,
}

impl SamplePool {
    pub fn from_records(records: Vec<SampleRecord>) -> Result<Self> {
        let dim = records.first().map(|r| r.features.len()).unwrap_or(0);
        let mut index = HashMap::with_capacity(records.len());
        for (pos, rec) in records.iter().enumerate() {
            if rec.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: rec.features.len(),
                });
            }
            if index.insert(rec.id, pos).is_some() {
                return Err(Error::DuplicateId {
                    row: pos + 1,
                    id: rec.id,
                });
            }
        }
        let labels: BTreeSet<u32> = records.iter().map(|r| r.true_label).collect();
        let n = records.len();
        let pool = SamplePool {
            records,
            states: vec![AnnotationState::Unlabeled; n],
            index,
            dim,
            target_labels: labels.into_iter().collect(),
            nontarget_label_count: 0,
            unlabeled_count: n,
            labeled_target_count: 0,
            queried_nontarget_count: 0,
        };
        pool.debug_check_partition();
        Ok(pool)
    }

    /// Designate which raw labels are target classes. Must be called before
    /// any annotation; labels not present in the pool are ignored.
    pub fn set_target_labels(&mut self, labels: &[u32]) {
        assert_eq!(
            self.unlabeled_count,
            self.records.len(),
            "target classes must be fixed before annotation"
        );
        let present: BTreeSet<u32> = self.records.iter().map(|r| r.true_label).collect();
        let wanted: BTreeSet<u32> = labels.iter().copied().collect();
        self.target_labels = present.intersection(&wanted).copied().collect();
        self.nontarget_label_count = present.len() - self.target_labels.len();
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of target classes K.
    pub fn target_class_count(&self) -> usize {
        self.target_labels.len()
    }

    /// Number of non-target classes L.
    pub fn nontarget_class_count(&self) -> usize {
        self.nontarget_label_count
    }

    pub fn target_labels(&self) -> &[u32] {
        &self.target_labels
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn record(&self, id: u64) -> Option<&SampleRecord> {
        self.index.get(&id).map(|&pos| &self.records[pos])
    }

    pub fn features(&self, id: u64) -> Option<&[f64]> {
        self.record(id).map(|r| r.features.as_slice())
    }

    pub fn state(&self, id: u64) -> Option<AnnotationState> {
        self.index.get(&id).map(|&pos| self.states[pos])
    }

    fn is_target_label(&self, label: u32) -> bool {
        self.target_labels.binary_search(&label).is_ok()
    }

    /// Fine class index (rank among target labels) for a target-class label.
    pub fn fine_class_of_label(&self, label: u32) -> Option<usize> {
        self.target_labels.binary_search(&label).ok()
    }

    /// Ids in ascending order for each annotation partition.
    pub fn unlabeled_ids(&self) -> Vec<u64> {
        self.ids_in_state(|s| matches!(s, AnnotationState::Unlabeled))
    }

    pub fn labeled_target_ids(&self) -> Vec<u64> {
        self.ids_in_state(|s| matches!(s, AnnotationState::LabeledTarget(_)))
    }

    pub fn queried_nontarget_ids(&self) -> Vec<u64> {
        self.ids_in_state(|s| matches!(s, AnnotationState::QueriedNonTarget))
    }

    fn ids_in_state(&self, pred: impl Fn(AnnotationState) -> bool) -> Vec<u64> {
        let mut ids: Vec<u64> = self
            .records
            .iter()
            .zip(&self.states)
            .filter(|(_, &s)| pred(s))
            .map(|(r, _)| r.id)
            .collect();
        ids.sort_unstable();
        ids
    }

    pub fn unlabeled_count(&self) -> usize {
        self.unlabeled_count
    }

    pub fn labeled_target_count(&self) -> usize {
        self.labeled_target_count
    }

    pub fn queried_nontarget_count(&self) -> usize {
        self.queried_nontarget_count
    }

    /// Labeled target samples grouped by fine class index, ids ascending.
    pub fn labeled_targets_by_class(&self) -> Vec<(usize, Vec<u64>)> {
        let mut groups: HashMap<usize, Vec<u64>> = HashMap::new();
        for (rec, &state) in self.records.iter().zip(&self.states) {
            if let AnnotationState::LabeledTarget(fine) = state {
                groups.entry(fine).or_default().push(rec.id);
            }
        }
        let mut out: Vec<(usize, Vec<u64>)> = groups.into_iter().collect();
        out.sort_unstable_by_key(|(fine, _)| *fine);
        for (_, ids) in &mut out {
            ids.sort_unstable();
        }
        out
    }

    /// Applies the oracle's answer for one queried sample. Returns true when
    /// the sample was a target class sample. Re-annotation is a hard error.
    pub fn annotate(&mut self, id: u64) -> Result<bool> {
        let pos = *self.index.get(&id).ok_or(Error::UnknownId(id))?;
        if self.states[pos] != AnnotationState::Unlabeled {
            return Err(Error::AlreadyAnnotated(id));
        }
        let label = self.records[pos].true_label;
        let is_target = self.is_target_label(label);
        if is_target {
            let fine = self.fine_class_of_label(label).unwrap();
            self.states[pos] = AnnotationState::LabeledTarget(fine);
            self.labeled_target_count += 1;
        } else {
            self.states[pos] = AnnotationState::QueriedNonTarget;
            self.queried_nontarget_count += 1;
        }
        self.unlabeled_count -= 1;
        self.debug_check_partition();
        Ok(is_target)
    }

    fn debug_check_partition(&self) {
        debug_assert_eq!(
            self.unlabeled_count + self.labeled_target_count + self.queried_nontarget_count,
            self.records.len()
        );
    }
}

/// Loads the `id,label,f0,...,f{d-1}` CSV format.
pub fn load_csv(path: &Path) -> Result<SamplePool> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?
        .ok_or_else(|| Error::MalformedHeader {
            path: path.display().to_string(),
            detail: "empty file".into(),
        })?;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 3 || cols[0] != "id" || cols[1] != "label" {
        return Err(Error::MalformedHeader {
            path: path.display().to_string(),
            detail: format!("expected `id,label,f0,...`, found `{}`", header.trim()),
        });
    }
    for (i, col) in cols[2..].iter().enumerate() {
        if *col != format!("f{i}") {
            return Err(Error::MalformedHeader {
                path: path.display().to_string(),
                detail: format!("feature column {} named `{col}`, expected `f{i}`", i + 2),
            });
        }
    }
    let dim = cols.len() - 2;

    let mut records = Vec::new();
    let mut seen = HashMap::new();
    for (lineno, line) in lines.enumerate() {
        let row = lineno + 2; // 1-based, after header
        let line = line.map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != dim + 2 {
            return Err(Error::RowWidth {
                row,
                expected: dim + 2,
                found: fields.len(),
            });
        }
        let id: u64 = fields[0].parse().map_err(|_| Error::NonNumericField {
            row,
            field: fields[0].to_string(),
        })?;
        if let Some(prev) = seen.insert(id, row) {
            let _ = prev;
            return Err(Error::DuplicateId { row, id });
        }
        let label: u32 = fields[1].parse().map_err(|_| Error::NonNumericField {
            row,
            field: fields[1].to_string(),
        })?;
        let mut features = Vec::with_capacity(dim);
        for field in &fields[2..] {
            let v: f64 = field.parse().map_err(|_| Error::NonNumericField {
                row,
                field: field.to_string(),
            })?;
            features.push(v);
        }
        records.push(SampleRecord {
            id,
            features,
            true_label: label,
        });
    }
    SamplePool::from_records(records)
}

pub fn write_csv(pool: &SamplePool, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    let io_err = |source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    let mut header = String::from("id,label");
    for i in 0..pool.dim() {
        header.push_str(&format!(",f{i}"));
    }
    writeln!(w, "{header}").map_err(io_err)?;
    for rec in pool.records() {
        let feats: Vec<String> = rec.features.iter().map(|f| f.to_string()).collect();
        writeln!(w, "{},{},{}", rec.id, rec.true_label, feats.join(",")).map_err(io_err)?;
    }
    Ok(())
}

/// Loads the binary "OALF" pool format. Feature values are stored as 32-bit
/// floats and widened to f64 on load.
pub fn load_binary(path: &Path) -> Result<SamplePool> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut r = BufReader::new(file);

    fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
        r.read_exact(buf)
            .map_err(|_| Error::Truncated(what.to_string()))
    }

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != OALF_MAGIC {
        return Err(Error::BadMagic);
    }
    let mut b2 = [0u8; 2];
    read_exact(&mut r, &mut b2, "version")?;
    let version = u16::from_le_bytes(b2);
    if version != OALF_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let mut b8 = [0u8; 8];
    read_exact(&mut r, &mut b8, "sample count")?;
    let n = u64::from_le_bytes(b8) as usize;
    let mut b4 = [0u8; 4];
    read_exact(&mut r, &mut b4, "dimension")?;
    let dim = u32::from_le_bytes(b4) as usize;

    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        read_exact(&mut r, &mut b8, &format!("record {i} id"))?;
        let id = u64::from_le_bytes(b8);
        read_exact(&mut r, &mut b4, &format!("record {i} label"))?;
        let label = u32::from_le_bytes(b4);
        let mut features = Vec::with_capacity(dim);
        for _ in 0..dim {
            read_exact(&mut r, &mut b4, &format!("record {i} features"))?;
            features.push(f32::from_le_bytes(b4) as f64);
        }
        records.push(SampleRecord {
            id,
            features,
            true_label: label,
        });
    }
    SamplePool::from_records(records)
}

pub fn write_binary(pool: &SamplePool, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    let mut buf = Vec::new();
    buf.extend_from_slice(OALF_MAGIC);
    buf.extend_from_slice(&OALF_VERSION.to_le_bytes());
    buf.extend_from_slice(&(pool.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(pool.dim() as u32).to_le_bytes());
    for rec in pool.records() {
        buf.extend_from_slice(&rec.id.to_le_bytes());
        buf.extend_from_slice(&rec.true_label.to_le_bytes());
        for &f in &rec.features {
            buf.extend_from_slice(&(f as f32).to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Per-class recipe for a synthetic Gaussian pool.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthClassSpec {
    pub count: usize,
    pub mean: Vec<f64>,
    /// Diagonal covariance scale: features are drawn N(mean_i, scale).
    pub cov_scale: f64,
    pub target: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub dim: usize,
    pub classes: Vec<SynthClassSpec>,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("synth dimension must be >= 1".into()));
        }
        if self.classes.is_empty() {
            return Err(Error::Config("synth spec has no classes".into()));
        }
        if !self.classes.iter().any(|c| c.target) {
            return Err(Error::Config("synth spec marks no target classes".into()));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if c.count == 0 {
                return Err(Error::Config(format!("class {i} has count 0")));
            }
            if c.mean.len() != self.dim {
                return Err(Error::Config(format!(
                    "class {i} mean has dimension {}, spec says {}",
                    c.mean.len(),
                    self.dim
                )));
            }
            if c.cov_scale < 0.0 {
                return Err(Error::Config(format!("class {i} has negative cov_scale")));
            }
        }
        Ok(())
    }
}

/// Draws a pool from per-class multivariate normals with diagonal covariance.
/// Deterministic for a given spec (including seed).
pub fn synth_pool(spec: &SynthSpec) -> Result<SamplePool> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut records = Vec::new();
    let mut next_id: u64 = 0;
    let mut target_labels = Vec::new();
    for (label, class) in spec.classes.iter().enumerate() {
        if class.target {
            target_labels.push(label as u32);
        }
        let sigma = class.cov_scale.sqrt();
        for _ in 0..class.count {
            let features: Vec<f64> = if sigma == 0.0 {
                class.mean.clone()
            } else {
                let normal = Normal::new(0.0, sigma).expect("finite sigma");
                class
                    .mean
                    .iter()
                    .map(|&m| m + normal.sample(&mut rng))
                    .collect()
            };
            records.push(SampleRecord {
                id: next_id,
                features,
                true_label: label as u32,
            });
            next_id += 1;
        }
    }
    let mut pool = SamplePool::from_records(records)?;
    pool.set_target_labels(&target_labels);
    Ok(pool)
}

/// Stratified test split over target classes only. Holds out
/// floor(fraction * class_count) samples per target class, at least 1.
/// Non-target samples never enter the test set.
pub fn split_test(
    pool: &SamplePool,
    fraction: f64,
    seed: u64,
) -> Result<(SamplePool, Vec<SampleRecord>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::FractionOutOfRange(fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_ids = BTreeSet::new();
    for (fine, &label) in pool.target_labels().iter().enumerate() {
        let mut class_ids: Vec<u64> = pool
            .records()
            .iter()
            .filter(|r| r.true_label == label)
            .map(|r| r.id)
            .collect();
        if class_ids.is_empty() {
            return Err(Error::EmptyTargetClass(fine));
        }
        class_ids.sort_unstable();
        let take = ((fraction * class_ids.len() as f64).floor() as usize).max(1);
        class_ids.shuffle(&mut rng);
        test_ids.extend(class_ids.into_iter().take(take));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for rec in pool.records() {
        if test_ids.contains(&rec.id) {
            test.push(rec.clone());
        } else {
            train.push(rec.clone());
        }
    }
    let target_labels = pool.target_labels().to_vec();
    let mut train_pool = SamplePool::from_records(train)?;
    train_pool.set_target_labels(&target_labels);
    test.sort_unstable_by_key(|r| r.id);
    Ok((train_pool, test))
}
