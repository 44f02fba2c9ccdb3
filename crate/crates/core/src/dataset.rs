//! Training datasets of exact intersection numbers.
//!
//! On disk a dataset is a directory holding
//!
//! * `meta.json` — the [`DatasetManifest`],
//! * `B.jsonl` — the `B` tensor as COO entries `[i, j, k, "p/q"]`, one per line,
//!   shared by every record,
//! * `records.jsonl` — one [`DatasetRecord`] object per line.
//!
//! The `C` tensor is deliberately not part of the training input.

use std::collections::BTreeMap;
use std::path::Path;

use num_traits::Zero;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::airy::{generate_coo, partitions_with_length, CooEntry, Partition, SurfaceClass, TensorKind};
use crate::error::{Error, Result};
use crate::numerics::{format_rational, log10_of_rational, parse_rational};
use crate::recursion::{intersection_number_with, AmplitudeCache};

pub const DATASET_VERSION: &str = "airygeom-dataset/1";

/// One training sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub g: u32,
    pub n: u32,
    pub d: Partition,
    /// Exact value as `p/q`.
    pub target: String,
    pub log10_target: f64,
    /// The sample sees the `B` entries with all indices `≤ b_ref`
    /// (`d_{g,n}` at build time).
    pub b_ref: u32,
}

impl DatasetRecord {
    /// Checks the build-time invariants. Counterfactually shuffled records
    /// are not expected to pass.
    pub fn validate(&self) -> Result<()> {
        let dim = SurfaceClass::new(self.g, self.n).dimension();
        if self.d.len() != self.n as usize || dim != Some(self.d.weight()) {
            return Err(Error::Domain(format!(
                "record g={} n={} d={} is off-dimension",
                self.g, self.n, self.d
            )));
        }
        let value = parse_rational(&self.target)?;
        if value <= Zero::zero() {
            return Err(Error::Domain(format!("non-positive target {}", self.target)));
        }
        let lv = log10_of_rational(&value).log10_magnitude;
        if (lv - self.log10_target).abs() > 1e-9 * lv.abs().max(1.0) {
            return Err(Error::Domain(format!(
                "log10_target {} disagrees with target {}",
                self.log10_target, self.target
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockCount {
    pub g: u32,
    pub n: u32,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: String,
    pub dim_max: u32,
    pub g_min: u32,
    pub g_max: u32,
    pub n_min: u32,
    pub n_max: u32,
    pub counts: Vec<BlockCount>,
    pub b_coo_entries: usize,
    pub b_coo_sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildConfig {
    pub g_min: u32,
    pub g_max: u32,
    pub n_min: u32,
    pub n_max: u32,
    pub dim_max: u32,
    pub parallel: bool,
}

impl BuildConfig {
    pub fn new(g_min: u32, g_max: u32, dim_max: u32) -> Self {
        BuildConfig { g_min, g_max, n_min: 1, n_max: 4, dim_max, parallel: false }
    }

    pub fn with_n_range(mut self, n_min: u32, n_max: u32) -> Self {
        self.n_min = n_min;
        self.n_max = n_max;
        self
    }

    /// Stable `(g, n)` blocks covered, in build order.
    pub fn blocks(&self) -> Vec<SurfaceClass> {
        let mut out = Vec::new();
        for g in self.g_min..=self.g_max {
            for n in self.n_min.max(1)..=self.n_max {
                let s = SurfaceClass::new(g, n);
                if s.is_stable() {
                    out.push(s);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub records: Vec<DatasetRecord>,
    pub b_coo: Vec<CooEntry>,
}

pub fn coo_to_jsonl(entries: &[CooEntry]) -> Result<String> {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_coo_jsonl(text: &str) -> Result<Vec<CooEntry>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

pub fn records_to_jsonl(records: &[DatasetRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_records_jsonl(text: &str) -> Result<Vec<DatasetRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn block_records(s: SurfaceClass, cache: &AmplitudeCache, parallel: bool) -> Vec<DatasetRecord> {
    let dim = s.dimension().expect("blocks are stable");
    let make = |d: Partition| {
        let value = intersection_number_with(s.g, &d, cache);
        DatasetRecord {
            g: s.g,
            n: s.n,
            log10_target: log10_of_rational(&value).log10_magnitude,
            target: format_rational(&value),
            d,
            b_ref: dim as u32,
        }
    };
    let parts = partitions_with_length(dim, s.n as usize);
    if parallel {
        parts.into_par_iter().map(make).collect()
    } else {
        parts.into_iter().map(make).collect()
    }
}

/// Generates every record of the configured blocks, the shared `B` tensor and
/// the manifest.
pub fn build_records(config: &BuildConfig, cache: &AmplitudeCache) -> Result<Dataset> {
    let blocks = config.blocks();
    if let Some(bad) = blocks.iter().find(|s| s.dimension().unwrap() > config.dim_max as u64) {
        return Err(Error::Domain(format!(
            "d_(g,n) = {} for (g, n) = ({}, {}) exceeds dim_max = {}",
            bad.dimension().unwrap(),
            bad.g,
            bad.n,
            config.dim_max
        )));
    }
    let mut records = Vec::new();
    let mut counts = Vec::new();
    for s in blocks {
        let block = block_records(s, cache, config.parallel);
        counts.push(BlockCount { g: s.g, n: s.n, count: block.len() });
        records.extend(block);
    }
    let b_coo = generate_coo(TensorKind::B, config.dim_max)?;
    let manifest = DatasetManifest {
        version: DATASET_VERSION.to_string(),
        dim_max: config.dim_max,
        g_min: config.g_min,
        g_max: config.g_max,
        n_min: config.n_min,
        n_max: config.n_max,
        counts,
        b_coo_entries: b_coo.len(),
        b_coo_sha256: sha256_hex(coo_to_jsonl(&b_coo)?.as_bytes()),
    };
    Ok(Dataset { manifest, records, b_coo })
}

impl Dataset {
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&self.manifest)? + "\n")?;
        std::fs::write(dir.join("B.jsonl"), coo_to_jsonl(&self.b_coo)?)?;
        std::fs::write(dir.join("records.jsonl"), records_to_jsonl(&self.records)?)?;
        Ok(())
    }

    /// Reads a dataset directory and verifies version and `B` checksum.
    pub fn read_dir(dir: &Path) -> Result<Dataset> {
        let manifest: DatasetManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.join("meta.json"))?)?;
        if manifest.version != DATASET_VERSION {
            return Err(Error::Parse(format!("unsupported dataset version {:?}", manifest.version)));
        }
        let b_text = std::fs::read_to_string(dir.join("B.jsonl"))?;
        if sha256_hex(b_text.as_bytes()) != manifest.b_coo_sha256 {
            return Err(Error::Parse("B.jsonl checksum mismatch".into()));
        }
        let b_coo = parse_coo_jsonl(&b_text)?;
        let records = parse_records_jsonl(&std::fs::read_to_string(dir.join("records.jsonl"))?)?;
        Ok(Dataset { manifest, records, b_coo })
    }
}

/// `train` holds `g ≤ g_cut`, `ood` the rest; input order is kept.
pub fn split_by_genus(records: &[DatasetRecord], g_cut: u32) -> (Vec<DatasetRecord>, Vec<DatasetRecord>) {
    records.iter().cloned().partition(|r| r.g <= g_cut)
}

/// Input feature re-bound by a counterfactual shuffle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modality {
    /// Number of marked points.
    N,
    /// The `B` slice reference.
    B,
    /// The partition.
    D,
}

impl std::str::FromStr for Modality {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" => Ok(Modality::N),
            "B" | "b" => Ok(Modality::B),
            "d" => Ok(Modality::D),
            other => Err(Error::UnknownModality(other.to_string())),
        }
    }
}

/// Seeded permutation of `0..len`, preferring one without fixed points.
fn derangement_preferring(len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut best: Vec<usize> = (0..len).collect();
    if len < 2 {
        return best;
    }
    let mut best_fixed = len;
    for _ in 0..64 {
        let mut perm: Vec<usize> = (0..len).collect();
        perm.shuffle(rng);
        let fixed = perm.iter().enumerate().filter(|(i, p)| i == *p).count();
        if fixed < best_fixed {
            best_fixed = fixed;
            best = perm;
            if fixed == 0 {
                break;
            }
        }
    }
    best
}

/// Within each genus, permutes the chosen modality across records while
/// every other field stays with its record.
pub fn counterfactual_shuffle(records: &[DatasetRecord], modality: Modality, seed: u64) -> Vec<DatasetRecord> {
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry(r.g).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = records.to_vec();
    for idx in groups.values() {
        let perm = derangement_preferring(idx.len(), &mut rng);
        for (dst, &src) in idx.iter().zip(perm.iter().map(|&p| &idx[p])) {
            let from = &records[src];
            let to = &mut out[*dst];
            match modality {
                Modality::N => to.n = from.n,
                Modality::B => to.b_ref = from.b_ref,
                Modality::D => to.d = from.d.clone(),
            }
        }
    }
    out
}
