//! Deterministic workload generators at desk scale, plus key-file
//! ingestion. Every generator is a pure function of its parameters and
//! seed, so experiment runs are reproducible bit for bit.

use std::io::BufRead;
use std::path::{Path, PathBuf};

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::model::{AggregationState, KeyMultiset};
use crate::{Error, PartitionId, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadKind {
    /// Single-destination fragments holding integer ranges whose adjacent
    /// overlap realizes a requested Jaccard similarity.
    RangeOverlap,
    /// Identical fragments whose keys repeat with a fixed multiplicity.
    Duplicates,
    /// All-to-all mapping with one overloaded destination partition.
    Imbalance,
    /// Zipf-distributed keys over a range-partitioned domain, so popular
    /// low keys concentrate on the first fragments.
    ZipfSkew,
    /// Keys read from text files, one per line.
    File,
}

/// Declarative workload description, usually deserialized from the
/// experiment config. Fields irrelevant to a kind are ignored by it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    #[serde(default = "default_node_count")]
    pub node_count: usize,
    #[serde(default)]
    pub tuples_per_node: u64,
    /// Defaults to the experiment seed when absent.
    #[serde(default)]
    pub seed: Option<u64>,
    /// range_overlap: adjacent-fragment similarity in [0, 1].
    #[serde(default)]
    pub jaccard: f64,
    /// duplicates: multiplicity of every key. imbalance: approximate mean
    /// multiplicity per destination partition (sizes the drawn key domain).
    #[serde(default = "default_dup_factor")]
    pub dup_factor: u64,
    /// imbalance: tuples destined for fragment 0; the remainder spreads
    /// evenly over the other fragments.
    #[serde(default)]
    pub hot_tuples: u64,
    /// zipf_skew: skew exponent, 0 = uniform.
    #[serde(default)]
    pub exponent: f64,
    /// zipf_skew: key domain size; 0 derives node_count * tuples_per_node.
    #[serde(default)]
    pub key_domain: u64,
    /// file: inputs assigned round-robin to fragments.
    #[serde(default)]
    pub files: Vec<PathBuf>,
    /// file: number of hash partitions; 0 derives node_count.
    #[serde(default)]
    pub partition_count: usize,
}

fn default_node_count() -> usize {
    8
}

fn default_dup_factor() -> u64 {
    1
}

/// Build the initial cluster state for a spec. The tuple width belongs to
/// the cost model, so it arrives from the experiment, not the spec; the
/// seed is the spec's own seed or the experiment fallback.
pub fn generate(spec: &WorkloadSpec, fallback_seed: u64, tuple_width: f64) -> Result<AggregationState> {
    let seed = spec.seed.unwrap_or(fallback_seed);
    match spec.kind {
        WorkloadKind::RangeOverlap => {
            gen_range_overlap(spec.node_count, spec.tuples_per_node, spec.jaccard, tuple_width)
        }
        WorkloadKind::Duplicates => {
            gen_duplicates(spec.node_count, spec.tuples_per_node, spec.dup_factor, tuple_width)
        }
        WorkloadKind::Imbalance => gen_imbalance(
            spec.node_count,
            spec.tuples_per_node,
            spec.hot_tuples,
            spec.dup_factor,
            seed,
            tuple_width,
        ),
        WorkloadKind::ZipfSkew => gen_zipf_skew(
            spec.node_count,
            spec.tuples_per_node,
            spec.exponent,
            spec.key_domain,
            seed,
            tuple_width,
        ),
        WorkloadKind::File => {
            let parts = if spec.partition_count == 0 {
                spec.node_count
            } else {
                spec.partition_count
            };
            load_keys_file(&spec.files, spec.node_count, parts, tuple_width)
        }
    }
}

/// Fragments hold consecutive integer ranges of k keys each, shifted so two
/// neighbors share exactly o keys with o/(2k - o) = jaccard; the overlap is
/// rounded to whole keys. Fragment 0 is the single destination.
pub fn gen_range_overlap(
    node_count: usize,
    tuples_per_node: u64,
    jaccard: f64,
    tuple_width: f64,
) -> Result<AggregationState> {
    if node_count < 2 || tuples_per_node == 0 {
        return Err(Error::InvalidWorkload(format!(
            "need at least 2 fragments and 1 tuple each, got {node_count} and {tuples_per_node}"
        )));
    }
    if !jaccard.is_finite() || !(0.0..=1.0).contains(&jaccard) {
        return Err(Error::InvalidWorkload(format!(
            "similarity must lie in [0, 1], got {jaccard}"
        )));
    }
    let k = tuples_per_node;
    let overlap = (2.0 * k as f64 * jaccard / (1.0 + jaccard)).round() as u64;
    let stride = k - overlap;
    let rows = (0..node_count as u64)
        .map(|i| vec![KeyMultiset::from_keys(i * stride..i * stride + k)])
        .collect();
    AggregationState::new(rows, vec![0], tuple_width)
}

/// Every fragment holds the same tuples_per_node / dup_factor keys, each
/// repeated dup_factor times. Fragment 0 is the single destination.
pub fn gen_duplicates(
    node_count: usize,
    tuples_per_node: u64,
    dup_factor: u64,
    tuple_width: f64,
) -> Result<AggregationState> {
    if node_count < 2 || tuples_per_node == 0 {
        return Err(Error::InvalidWorkload(format!(
            "need at least 2 fragments and 1 tuple each, got {node_count} and {tuples_per_node}"
        )));
    }
    if dup_factor == 0 || !tuples_per_node.is_multiple_of(dup_factor) {
        return Err(Error::InvalidWorkload(format!(
            "multiplicity {dup_factor} must divide the {tuples_per_node} tuples per fragment"
        )));
    }
    let distinct = tuples_per_node / dup_factor;
    let mut holding = KeyMultiset::new();
    for key in 0..distinct {
        holding.insert(key, dup_factor);
    }
    let rows = (0..node_count).map(|_| vec![holding.clone()]).collect();
    AggregationState::new(rows, vec![0], tuple_width)
}

/// All-to-all instance with one hot destination: partition 0 collects
/// hot_tuples tuples, every other partition an equal share of the rest.
/// Sources hold equal slices of every partition; keys are drawn uniformly
/// from a per-partition domain sized total/dup_factor, so fragments destined
/// for the same partition overlap and invite pre-destination merging.
pub fn gen_imbalance(
    node_count: usize,
    tuples_per_node: u64,
    hot_tuples: u64,
    dup_factor: u64,
    seed: u64,
    tuple_width: f64,
) -> Result<AggregationState> {
    if node_count < 2 || tuples_per_node == 0 {
        return Err(Error::InvalidWorkload(format!(
            "need at least 2 fragments and 1 tuple each, got {node_count} and {tuples_per_node}"
        )));
    }
    if dup_factor == 0 {
        return Err(Error::InvalidWorkload("dup_factor must be at least 1".into()));
    }
    let total = tuples_per_node * node_count as u64;
    let peers = node_count as u64 - 1;
    if hot_tuples > total {
        return Err(Error::InvalidWorkload(format!(
            "hot share {hot_tuples} exceeds the {total} total tuples"
        )));
    }
    let rest = total - hot_tuples;
    if !rest.is_multiple_of(peers) {
        return Err(Error::InvalidWorkload(format!(
            "non-integral split: {rest} leftover tuples do not divide over {peers} fragments"
        )));
    }
    let cold_tuples = rest / peers;
    for (name, q) in [("hot", hot_tuples), ("cold", cold_tuples)] {
        if q % node_count as u64 != 0 {
            return Err(Error::InvalidWorkload(format!(
                "non-integral split: {name} partition of {q} tuples does not divide over {node_count} sources"
            )));
        }
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut rows: Vec<Vec<KeyMultiset>> = vec![vec![]; node_count];
    // Per-partition key bases keep partitions disjoint without coordination.
    let base = |j: u64| j << 40;
    for row in rows.iter_mut() {
        for j in 0..node_count as u64 {
            let partition_total = if j == 0 { hot_tuples } else { cold_tuples };
            let share = partition_total / node_count as u64;
            let domain = partition_total.div_ceil(dup_factor).max(1);
            let mut holding = KeyMultiset::new();
            for _ in 0..share {
                holding.insert(base(j) + rng.random_range(0..domain), 1);
            }
            row.push(holding);
        }
    }
    AggregationState::new(rows, (0..node_count).collect(), tuple_width)
}

/// Keys 1..=domain weighted proportionally to 1/key^exponent, drawn by
/// inversion over the cumulative weights. The mapping is range-based with
/// equal-width slices, so the popular low keys land on fragment 0.
pub fn gen_zipf_skew(
    node_count: usize,
    tuples_per_node: u64,
    exponent: f64,
    key_domain: u64,
    seed: u64,
    tuple_width: f64,
) -> Result<AggregationState> {
    if node_count < 2 || tuples_per_node == 0 {
        return Err(Error::InvalidWorkload(format!(
            "need at least 2 fragments and 1 tuple each, got {node_count} and {tuples_per_node}"
        )));
    }
    if !exponent.is_finite() || exponent < 0.0 {
        return Err(Error::InvalidWorkload(format!(
            "skew exponent must be nonnegative, got {exponent}"
        )));
    }
    let domain = if key_domain == 0 {
        node_count as u64 * tuples_per_node
    } else {
        key_domain
    };
    if domain < node_count as u64 {
        return Err(Error::InvalidWorkload(format!(
            "key domain {domain} is smaller than the {node_count} fragments"
        )));
    }

    let mut cumulative = Vec::with_capacity(domain as usize);
    let mut acc = 0.0f64;
    for key in 1..=domain {
        acc += (key as f64).powf(-exponent);
        cumulative.push(acc);
    }
    let width = domain.div_ceil(node_count as u64);
    let partition_of = |key: u64| -> PartitionId { ((key - 1) / width) as PartitionId };

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut rows: Vec<Vec<KeyMultiset>> =
        vec![vec![KeyMultiset::new(); node_count]; node_count];
    for row in rows.iter_mut() {
        for _ in 0..tuples_per_node {
            let u = rng.random_range(0.0..acc);
            let idx = cumulative.partition_point(|&c| c <= u);
            let key = idx as u64 + 1;
            row[partition_of(key)].insert(key, 1);
        }
    }
    AggregationState::new(rows, (0..node_count).collect(), tuple_width)
}

/// 64-bit FNV-1a, the stable hash used for non-integer key tokens.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Read one key per line from each file, assigning files to fragments
/// round-robin and keys to partitions with the given function. Lines parse
/// as unsigned integers when possible and hash otherwise; blank lines and
/// `#` comments are skipped. Duplicate lines accumulate multiplicity.
pub fn load_keys_file_with(
    paths: &[PathBuf],
    node_count: usize,
    partition_count: usize,
    tuple_width: f64,
    partition_of: impl Fn(u64) -> PartitionId,
) -> Result<AggregationState> {
    if paths.is_empty() {
        return Err(Error::InvalidWorkload("no input files".into()));
    }
    if node_count < 2 || partition_count == 0 {
        return Err(Error::InvalidWorkload(format!(
            "need at least 2 fragments and 1 partition, got {node_count} and {partition_count}"
        )));
    }
    let mut rows: Vec<Vec<KeyMultiset>> =
        vec![vec![KeyMultiset::new(); partition_count]; node_count];
    for (f, path) in paths.iter().enumerate() {
        let fragment = f % node_count;
        for (key, _line) in read_key_file(path)? {
            let l = partition_of(key);
            if l >= partition_count {
                return Err(Error::InvalidWorkload(format!(
                    "partition function returned {l} for key {key}, only {partition_count} partitions exist"
                )));
            }
            rows[fragment][l].insert(key, 1);
        }
    }
    let mapping = (0..partition_count).map(|l| l % node_count).collect();
    AggregationState::new(rows, mapping, tuple_width)
}

/// load_keys_file_with using the default modulo partitioner.
pub fn load_keys_file(
    paths: &[PathBuf],
    node_count: usize,
    partition_count: usize,
    tuple_width: f64,
) -> Result<AggregationState> {
    load_keys_file_with(paths, node_count, partition_count, tuple_width, |key| {
        (key % partition_count as u64) as PartitionId
    })
}

fn read_key_file(path: &Path) -> Result<Vec<(u64, usize)>> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::KeyFile {
        path: display.clone(),
        line: 0,
        msg: e.to_string(),
    })?;
    let mut keys = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::KeyFile {
            path: display.clone(),
            line: line_no,
            msg: e.to_string(),
        })?;
        let token = line.trim();
        if token.is_empty() || token.starts_with('#') {
            continue;
        }
        let key = token
            .parse::<u64>()
            .unwrap_or_else(|_| fnv1a64(token.as_bytes()));
        keys.push((key, line_no));
    }
    Ok(keys)
}
