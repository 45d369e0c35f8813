//! Minhash signatures and the per-node, per-partition cardinality ledger the
//! planner consults instead of touching real data.
//!
//! A signature stores, per hash function, the minimum hash value over a key
//! set. Merging two signatures by pairwise minimum yields the signature of
//! the set union, so similarity and union sizes of never-materialized unions
//! stay estimable as planning moves data around.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::{Error, NodeId, PartitionId, Result};

/// Largest prime below 2^62; hash outputs are always < this.
pub const MERSENNE_61: u64 = (1 << 61) - 1;

/// Sentinel for "no value": strictly greater than any hash output, so it is
/// the absorbing identity under pairwise-minimum merges.
pub const EMPTY: u64 = u64::MAX;

/// Family of n universal hash functions h_j(x) = (a_j * x + b_j) mod p.
#[derive(Debug, Clone, PartialEq)]
pub struct HashFamily {
    params: Vec<(u64, u64)>,
    modulus: u64,
}

impl HashFamily {
    /// Draw n functions from a seeded generator over the fixed large prime
    /// modulus. All multipliers are nonzero.
    pub fn new(n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidHashFamily("need at least 1 function".into()));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let params = (0..n)
            .map(|_| {
                (
                    rng.random_range(1..MERSENNE_61),
                    rng.random_range(0..MERSENNE_61),
                )
            })
            .collect();
        Ok(HashFamily {
            params,
            modulus: MERSENNE_61,
        })
    }

    /// Explicit (a, b) pairs over a caller-chosen prime modulus; used by tests
    /// that pin tiny hand-evaluable functions.
    pub fn from_params(params: Vec<(u64, u64)>, modulus: u64) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::InvalidHashFamily("need at least 1 function".into()));
        }
        if !(2..=MERSENNE_61).contains(&modulus) {
            return Err(Error::InvalidHashFamily(format!(
                "modulus must be in [2, 2^61 - 1], got {modulus}"
            )));
        }
        for (j, (a, _)) in params.iter().enumerate() {
            if a % modulus == 0 {
                return Err(Error::InvalidHashFamily(format!(
                    "multiplier of function {j} is 0 mod {modulus}"
                )));
            }
        }
        Ok(HashFamily { params, modulus })
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn hash(&self, j: usize, x: u64) -> u64 {
        let (a, b) = self.params[j];
        ((a as u128 * x as u128 + b as u128) % self.modulus as u128) as u64
    }
}

/// Per-function minimum hash values of a key set; all-[`EMPTY`] encodes the
/// empty set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinhashSignature {
    values: Vec<u64>,
}

impl MinhashSignature {
    pub fn empty(n: usize) -> Self {
        MinhashSignature {
            values: vec![EMPTY; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.iter().all(|&v| v == EMPTY)
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }
}

/// Signature of a key collection: per function, the minimum hash value.
/// Order- and multiplicity-insensitive; the empty collection maps to the
/// all-[`EMPTY`] signature.
pub fn signature(keys: impl IntoIterator<Item = u64>, fam: &HashFamily) -> MinhashSignature {
    let mut values = vec![EMPTY; fam.len()];
    for k in keys {
        for (j, slot) in values.iter_mut().enumerate() {
            let h = fam.hash(j, k);
            if h < *slot {
                *slot = h;
            }
        }
    }
    MinhashSignature { values }
}

/// Pairwise minimum of two signatures = signature of the set union.
pub fn merge(a: &MinhashSignature, b: &MinhashSignature) -> Result<MinhashSignature> {
    if a.len() != b.len() {
        return Err(Error::SignatureMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let values = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(&x, &y)| x.min(y))
        .collect();
    Ok(MinhashSignature { values })
}

/// Jaccard similarity estimate: the fraction of functions whose minima agree.
/// Two all-empty signatures have no defined similarity.
pub fn est_jaccard(a: &MinhashSignature, b: &MinhashSignature) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::SignatureMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() && b.is_empty() {
        return Err(Error::DegenerateInput(
            "jaccard of two empty signatures".into(),
        ));
    }
    let matches = a
        .values
        .iter()
        .zip(&b.values)
        .filter(|(x, y)| x == y)
        .count();
    Ok(matches as f64 / a.len() as f64)
}

/// Believed cardinalities and signatures per (node, partition). The planner
/// mutates this as it schedules transfers; no real data is consulted.
#[derive(Debug, Clone)]
pub struct SketchState {
    node_count: usize,
    partition_count: usize,
    card: Vec<f64>,
    minh: Vec<MinhashSignature>,
}

impl SketchState {
    /// Build from per-(node, partition) distinct cardinalities and signatures.
    /// A zero cardinality must coincide with an all-empty signature.
    pub fn new(card: Vec<Vec<f64>>, minh: Vec<Vec<MinhashSignature>>) -> Result<Self> {
        let node_count = card.len();
        if node_count == 0 || minh.len() != node_count {
            return Err(Error::InvalidState(format!(
                "cardinality rows {} vs signature rows {}",
                node_count,
                minh.len()
            )));
        }
        let partition_count = card[0].len();
        if partition_count == 0 {
            return Err(Error::InvalidState("no partitions".into()));
        }
        let sig_len = minh[0].first().map(|s| s.len()).unwrap_or(0);
        let mut flat_card = Vec::with_capacity(node_count * partition_count);
        let mut flat_minh = Vec::with_capacity(node_count * partition_count);
        for (v, (crow, mrow)) in card.into_iter().zip(minh).enumerate() {
            if crow.len() != partition_count || mrow.len() != partition_count {
                return Err(Error::InvalidState(format!(
                    "row {v} has ragged partition count"
                )));
            }
            for (l, (c, m)) in crow.into_iter().zip(mrow).enumerate() {
                if c < 0.0 || !c.is_finite() {
                    return Err(Error::InvalidState(format!(
                        "negative or non-finite cardinality at ({v}, {l})"
                    )));
                }
                if m.len() != sig_len {
                    return Err(Error::SignatureMismatch {
                        left: sig_len,
                        right: m.len(),
                    });
                }
                if (c == 0.0) != m.is_empty() {
                    return Err(Error::InvalidState(format!(
                        "cardinality {c} at ({v}, {l}) disagrees with signature emptiness"
                    )));
                }
                flat_card.push(c);
                flat_minh.push(m);
            }
        }
        Ok(SketchState {
            node_count,
            partition_count,
            card: flat_card,
            minh: flat_minh,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn partition_count(&self) -> usize {
        self.partition_count
    }

    pub fn card(&self, v: NodeId, l: PartitionId) -> f64 {
        self.card[v * self.partition_count + l]
    }

    pub fn minh(&self, v: NodeId, l: PartitionId) -> &MinhashSignature {
        &self.minh[v * self.partition_count + l]
    }

    /// Estimated |X(s) union X(t)| for partition l via the identity
    /// |S u T| = (|S| + |T|) / (1 + J). At least one side must be nonempty;
    /// one empty side degrades gracefully to the other side's cardinality.
    pub fn est_card(&self, s: NodeId, t: NodeId, l: PartitionId) -> Result<f64> {
        let cs = self.card(s, l);
        let ct = self.card(t, l);
        if cs == 0.0 && ct == 0.0 {
            return Err(Error::DegenerateInput(format!(
                "union estimate of two empty holdings (nodes {s}, {t}, partition {l})"
            )));
        }
        let ms = self.minh(s, l);
        let mt = self.minh(t, l);
        // One-sided emptiness: no index can match, so the estimate is cs + ct.
        let j = if ms.is_empty() || mt.is_empty() {
            0.0
        } else {
            est_jaccard(ms, mt)?
        };
        Ok((cs + ct) / (1.0 + j))
    }

    /// Record the transfer s -> t of partition l: the receiver's cardinality
    /// becomes the union estimate, its signature the merged signature; the
    /// sender's entry is cleared.
    pub fn update(&mut self, s: NodeId, t: NodeId, l: PartitionId) -> Result<()> {
        let est = self.est_card(s, t, l)?;
        let merged = merge(self.minh(s, l), self.minh(t, l))?;
        let m = self.partition_count;
        self.card[t * m + l] = est;
        self.minh[t * m + l] = merged;
        self.card[s * m + l] = 0.0;
        self.minh[s * m + l] = MinhashSignature::empty(self.minh[s * m + l].len());
        Ok(())
    }
}
