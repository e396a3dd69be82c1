use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::TokenSequence;

/// Index form of the shape-preserving pair `(M, U)`.
///
/// Every original token is either a destination (kept, possibly receiving
/// merged sources) or a merged source assigned to exactly one destination.
/// Row `j` of `M` averages destination `j` together with its sources with
/// equal weights; `U` copies each reduced row back to every member of its
/// group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PlanRepr", into = "PlanRepr")]
pub struct MergePlan {
    original_count: usize,
    destinations: Vec<usize>,
    assignments: BTreeMap<usize, usize>,
    slot_of: Vec<usize>,
    weights: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct PlanRepr {
    original_count: usize,
    destinations: Vec<usize>,
    assignments: BTreeMap<usize, usize>,
}

impl TryFrom<PlanRepr> for MergePlan {
    type Error = Error;

    fn try_from(r: PlanRepr) -> Result<Self> {
        MergePlan::new(r.original_count, r.destinations, r.assignments)
    }
}

impl From<MergePlan> for PlanRepr {
    fn from(p: MergePlan) -> Self {
        PlanRepr {
            original_count: p.original_count,
            destinations: p.destinations,
            assignments: p.assignments,
        }
    }
}

impl MergePlan {
    /// `destinations` may be in any order; it is stored ascending.
    pub fn new(
        original_count: usize,
        mut destinations: Vec<usize>,
        assignments: BTreeMap<usize, usize>,
    ) -> Result<Self> {
        if original_count == 0 {
            return Err(Error::dim("merge plan over zero tokens"));
        }
        destinations.sort_unstable();
        if destinations.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::dim("duplicate destination index"));
        }
        let mut slot_of = vec![usize::MAX; original_count];
        for (slot, &d) in destinations.iter().enumerate() {
            if d >= original_count {
                return Err(Error::dim(format!("destination {d} >= {original_count}")));
            }
            slot_of[d] = slot;
        }
        let mut weights = vec![1usize; destinations.len()];
        for (&src, &dst) in &assignments {
            if src >= original_count {
                return Err(Error::dim(format!("source {src} >= {original_count}")));
            }
            if slot_of[src] != usize::MAX {
                return Err(Error::dim(format!("token {src} is both source and destination")));
            }
            let slot = destinations
                .binary_search(&dst)
                .map_err(|_| Error::dim(format!("source {src} assigned to non-destination {dst}")))?;
            slot_of[src] = slot;
            weights[slot] += 1;
        }
        if let Some(orphan) = slot_of.iter().position(|&s| s == usize::MAX) {
            return Err(Error::dim(format!("token {orphan} is neither kept nor merged")));
        }
        Ok(Self {
            original_count,
            destinations,
            assignments,
            slot_of,
            weights,
        })
    }

    pub fn identity(original_count: usize) -> Result<Self> {
        Self::new(original_count, (0..original_count).collect(), BTreeMap::new())
    }

    pub fn original_count(&self) -> usize {
        self.original_count
    }

    pub fn reduced_count(&self) -> usize {
        self.destinations.len()
    }

    pub fn destinations(&self) -> &[usize] {
        &self.destinations
    }

    /// Merged source → destination token index.
    pub fn assignments(&self) -> &BTreeMap<usize, usize> {
        &self.assignments
    }

    /// Group size per destination, in `destinations()` order.
    pub fn weights(&self) -> &[usize] {
        &self.weights
    }

    /// Position in the reduced sequence that original token `i` reads from.
    pub fn slot_of(&self, i: usize) -> usize {
        self.slot_of[i]
    }

    pub fn is_identity(&self) -> bool {
        self.assignments.is_empty()
    }

    /// True if token `i` shares its group with at least one other token.
    pub fn is_merged(&self, i: usize) -> bool {
        self.weights[self.slot_of[i]] > 1
    }

    /// Stable content hash, used to audit that every class sees the same plan.
    pub fn fingerprint(&self) -> u64 {
        let mut hasher = Sha256::new();
        hasher.update((self.original_count as u64).to_le_bytes());
        for &d in &self.destinations {
            hasher.update((d as u64).to_le_bytes());
        }
        hasher.update(u64::MAX.to_le_bytes());
        for (&s, &d) in &self.assignments {
            hasher.update((s as u64).to_le_bytes());
            hasher.update((d as u64).to_le_bytes());
        }
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
    }
}

/// `M·X`: each reduced row is the equal-weight mean of its group.
pub fn apply_merge(seq: &TokenSequence, plan: &MergePlan) -> Result<TokenSequence> {
    if seq.count() != plan.original_count() {
        return Err(Error::dim(format!(
            "plan built for {} tokens applied to {}",
            plan.original_count(),
            seq.count()
        )));
    }
    let c = seq.channels();
    let mut out = vec![0.0; plan.reduced_count() * c];
    for (i, row) in seq.rows().enumerate() {
        let slot = plan.slot_of(i);
        for (o, v) in out[slot * c..(slot + 1) * c].iter_mut().zip(row) {
            *o += v;
        }
    }
    for (slot, &w) in plan.weights().iter().enumerate() {
        if w > 1 {
            let inv = 1.0 / w as f64;
            out[slot * c..(slot + 1) * c].iter_mut().for_each(|v| *v *= inv);
        }
    }
    TokenSequence::new(plan.reduced_count(), c, out)
}

/// `U·Z`: broadcasts each reduced row back to every member of its group.
pub fn apply_unmerge(reduced: &TokenSequence, plan: &MergePlan) -> Result<TokenSequence> {
    if reduced.count() != plan.reduced_count() {
        return Err(Error::dim(format!(
            "plan expects {} reduced tokens, got {}",
            plan.reduced_count(),
            reduced.count()
        )));
    }
    let c = reduced.channels();
    let mut out = Vec::with_capacity(plan.original_count() * c);
    for i in 0..plan.original_count() {
        out.extend_from_slice(reduced.row(plan.slot_of(i)));
    }
    TokenSequence::new(plan.original_count(), c, out)
}
