//! Data placement `{Z_k}` and every combinatorial quantity derived from it.
//!
//! Batches, workers and packets are 1-based throughout this module. Packet
//! `(n, i)`, slot `i` of update `v_n`, has global index `n + (i - 1) * N`.

use std::collections::BTreeSet;

use itertools::Itertools;
use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on K for the all-subsets checker.
pub const ALL_SUBSETS_MAX_K: usize = 20;

/// Cap on K for the relabeling search.
pub const RELABEL_MAX_K: usize = 8;

/// K workers, N batches, and the batch index set of each worker.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PlacementDoc", into = "PlacementDoc")]
pub struct Placement {
    k: usize,
    n: usize,
    z: Vec<BTreeSet<usize>>,
}

/// JSON form: `{"K": int, "N": int, "Z": [[int, ...], ...]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlacementDoc {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "Z")]
    pub z: Vec<Vec<usize>>,
}

impl TryFrom<PlacementDoc> for Placement {
    type Error = Error;

    fn try_from(doc: PlacementDoc) -> Result<Placement> {
        for (w, zk) in doc.z.iter().enumerate() {
            if zk.iter().duplicates().next().is_some() {
                return Err(Error::InvalidPlacement(format!(
                    "Z_{} lists a batch twice",
                    w + 1
                )));
            }
        }
        Placement::new(
            doc.k,
            doc.n,
            doc.z
                .into_iter()
                .map(|zk| zk.into_iter().collect())
                .collect(),
        )
    }
}

impl From<Placement> for PlacementDoc {
    fn from(p: Placement) -> PlacementDoc {
        PlacementDoc {
            k: p.k,
            n: p.n,
            z: p.z.into_iter().map(|zk| zk.into_iter().collect()).collect(),
        }
    }
}

impl Placement {
    pub fn new(k: usize, n: usize, z: Vec<BTreeSet<usize>>) -> Result<Placement> {
        if k < 2 {
            return Err(Error::InvalidPlacement(format!("K = {k}, need K >= 2")));
        }
        if n < 1 {
            return Err(Error::InvalidPlacement("N = 0".into()));
        }
        if z.len() != k {
            return Err(Error::InvalidPlacement(format!(
                "{} index sets for K = {k}",
                z.len()
            )));
        }
        for (w, zk) in z.iter().enumerate() {
            if zk.is_empty() {
                return Err(Error::InvalidPlacement(format!("Z_{} is empty", w + 1)));
            }
            if let Some(bad) = zk.iter().find(|&&b| b == 0 || b > n) {
                return Err(Error::InvalidPlacement(format!(
                    "Z_{} contains batch {bad} outside [1, {n}]",
                    w + 1
                )));
            }
        }
        Ok(Placement { k, n, z })
    }

    /// Convenience constructor from slices.
    pub fn from_sets(k: usize, n: usize, z: &[&[usize]]) -> Result<Placement> {
        Placement::new(
            k,
            n,
            z.iter().map(|s| s.iter().copied().collect()).collect(),
        )
    }

    pub fn from_json(s: &str) -> Result<Placement> {
        serde_json::from_str::<PlacementDoc>(s)?.try_into()
    }

    pub fn workers(&self) -> usize {
        self.k
    }

    pub fn batches(&self) -> usize {
        self.n
    }

    /// `Z_k` for 1-based `k`.
    pub fn stored(&self, k: usize) -> &BTreeSet<usize> {
        &self.z[k - 1]
    }

    pub fn sets(&self) -> &[BTreeSet<usize>] {
        &self.z
    }

    /// Worker `j` of the result is worker `order[j - 1]` of `self`.
    pub fn relabeled(&self, order: &[usize]) -> Result<Placement> {
        let mut sorted = order.to_vec();
        sorted.sort_unstable();
        if sorted != (1..=self.k).collect::<Vec<_>>() {
            return Err(Error::InvalidPlacement(format!(
                "{order:?} is not a permutation of 1..={}",
                self.k
            )));
        }
        Placement::new(
            self.k,
            self.n,
            order.iter().map(|&w| self.z[w - 1].clone()).collect(),
        )
    }

    /// `K_n`: workers storing batch `n`, indexed by `n - 1`.
    pub fn holders(&self) -> Vec<BTreeSet<usize>> {
        (1..=self.n)
            .map(|b| {
                (1..=self.k)
                    .filter(|&w| self.z[w - 1].contains(&b))
                    .collect()
            })
            .collect()
    }

    /// `I_z`: batches stored exactly `z` times, indexed by `z` in `0..=K`.
    pub fn multiplicity_classes(&self) -> Vec<BTreeSet<usize>> {
        let mut classes = vec![BTreeSet::new(); self.k + 1];
        for (i, h) in self.holders().iter().enumerate() {
            classes[h.len()].insert(i + 1);
        }
        classes
    }

    pub fn derive(&self) -> Result<Derived> {
        self.derive_with(DeriveOptions::default())
    }

    pub fn derive_with(&self, opts: DeriveOptions) -> Result<Derived> {
        Derived::new(self, opts)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct DeriveOptions {
    /// Accept workers with `d_k = 0`; they transmit nothing.
    pub permit_zero_d: bool,
}

/// Global index of packet `slot` (1-based) of batch `batch`.
pub fn packet_index(batch: usize, slot: usize, n: usize) -> usize {
    batch + (slot - 1) * n
}

/// Inverse of [`packet_index`]: `(batch, slot)`.
pub fn packet_origin(index: usize, n: usize) -> (usize, usize) {
    ((index - 1) % n + 1, (index - 1) / n + 1)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Derived {
    pub k: usize,
    pub n: usize,
    /// Computation loads `r_k = |Z_k|`.
    pub r: Vec<usize>,
    /// Average computation load.
    #[serde(with = "crate::loads::fraction")]
    pub mean_r: Rational64,
    /// `K_n`: workers storing batch `n`, indexed by `n - 1`.
    pub holders: Vec<BTreeSet<usize>>,
    /// `I_z`: batches stored exactly `z` times, indexed by `z` in `0..=K`.
    pub multiplicity: Vec<BTreeSet<usize>>,
    /// Coded packets sent by each worker.
    pub d: Vec<usize>,
    pub s: usize,
    /// `P_k`: packets worker `k` cannot compute, indexed by `k - 1`.
    pub p: Vec<BTreeSet<usize>>,
    /// Broadcast size in packets.
    pub lambda: usize,
}

impl Derived {
    fn new(p: &Placement, opts: DeriveOptions) -> Result<Derived> {
        let (k, n) = (p.k, p.n);
        let r: Vec<usize> = p.z.iter().map(BTreeSet::len).collect();
        let total: usize = r.iter().sum();
        let mut d = Vec::with_capacity(k);
        for (w, &rk) in r.iter().enumerate() {
            let dk = n as i64 + (k as i64 - 1) * rk as i64 - total as i64;
            if dk < 0 || (dk == 0 && !opts.permit_zero_d) {
                return Err(Error::Infeasible {
                    worker: w + 1,
                    d: dk,
                });
            }
            d.push(dk as usize);
        }
        let s = d.iter().sum();

        let holders = p.holders();
        let multiplicity = p.multiplicity_classes();

        let packets: Vec<BTreeSet<usize>> =
            p.z.iter()
                .map(|zk| {
                    (0..k - 1)
                        .flat_map(|shift| {
                            (1..=n)
                                .filter(|b| !zk.contains(b))
                                .map(move |b| b + shift * n)
                        })
                        .collect()
                })
                .collect();
        let min_r = *r.iter().min().expect("K >= 2");
        let lambda = (k - 1) * (n - min_r);

        Ok(Derived {
            k,
            n,
            mean_r: Rational64::new(total as i64, k as i64),
            r,
            holders,
            multiplicity,
            d,
            s,
            p: packets,
            lambda,
        })
    }

    /// Number of packet columns, `N (K - 1)`.
    pub fn packet_count(&self) -> usize {
        self.n * (self.k - 1)
    }

    pub fn total_load(&self) -> usize {
        self.r.iter().sum()
    }

    /// `P_k` as sorted 0-based column indices.
    pub fn missing_columns(&self, k: usize) -> Vec<usize> {
        self.p[k - 1].iter().map(|&j| j - 1).collect()
    }

    /// Complement of `P_k` as sorted 0-based column indices.
    pub fn known_columns(&self, k: usize) -> Vec<usize> {
        (0..self.packet_count())
            .filter(|j| !self.p[k - 1].contains(&(j + 1)))
            .collect()
    }

    /// Row range of worker `k`'s block in A and P.
    pub fn block_rows(&self, k: usize) -> std::ops::Range<usize> {
        let start: usize = self.d[..k - 1].iter().sum();
        start..start + self.d[k - 1]
    }

    /// `S - sum_{i in I} d_i` for a 1-based worker set.
    pub fn budget(&self, workers: &[usize]) -> i64 {
        self.s as i64 - workers.iter().map(|&w| self.d[w - 1] as i64).sum::<i64>()
    }

    fn masks(&self) -> Vec<PacketMask> {
        self.p
            .iter()
            .map(|pk| PacketMask::from_set(pk, self.packet_count()))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct PacketMask(Vec<u64>);

impl PacketMask {
    fn from_set(set: &BTreeSet<usize>, len: usize) -> PacketMask {
        let mut words = vec![0u64; len.div_ceil(64).max(1)];
        for &j in set {
            words[(j - 1) / 64] |= 1 << ((j - 1) % 64);
        }
        PacketMask(words)
    }

    fn and_assign(&mut self, other: &PacketMask) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a &= *b;
        }
    }

    fn count(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConditionMode {
    /// `|P_1 ∩ ... ∩ P_k| <= S - (d_1 + ... + d_k)` for k = 1..K.
    Prefix,
    /// The same inequality for every nonempty worker subset.
    #[default]
    AllSubsets,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// 1-based workers whose packet sets were intersected.
    pub workers: Vec<usize>,
    pub intersection: usize,
    pub budget: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub mode: ConditionMode,
    pub holds: bool,
    pub violation: Option<Violation>,
}

pub fn check_condition1(d: &Derived, mode: ConditionMode) -> Result<Verdict> {
    check_condition1_with_limit(d, mode, ALL_SUBSETS_MAX_K)
}

/// As [`check_condition1`] with an explicit cap on K for all-subsets mode.
/// The violation reported is the first one found in order of subset size,
/// then lexicographically.
pub fn check_condition1_with_limit(
    d: &Derived,
    mode: ConditionMode,
    max_k: usize,
) -> Result<Verdict> {
    let masks = d.masks();
    let violation = match mode {
        ConditionMode::Prefix => {
            let mut acc = masks[0].clone();
            (1..=d.k).find_map(|k| {
                if k > 1 {
                    acc.and_assign(&masks[k - 1]);
                }
                let workers: Vec<usize> = (1..=k).collect();
                violated(d, &workers, acc.count())
            })
        }
        ConditionMode::AllSubsets => {
            if d.k > max_k {
                return Err(Error::TooManyWorkers {
                    k: d.k,
                    limit: max_k,
                });
            }
            (1..=d.k).find_map(|size| {
                (1..=d.k).combinations(size).find_map(|workers| {
                    let mut acc = masks[workers[0] - 1].clone();
                    for &w in &workers[1..] {
                        acc.and_assign(&masks[w - 1]);
                    }
                    let count = acc.count();
                    violated(d, &workers, count)
                })
            })
        }
    };
    Ok(Verdict {
        mode,
        holds: violation.is_none(),
        violation,
    })
}

fn violated(d: &Derived, workers: &[usize], intersection: usize) -> Option<Violation> {
    let budget = d.budget(workers);
    (intersection as i64 > budget).then(|| Violation {
        workers: workers.to_vec(),
        intersection,
        budget,
    })
}

/// Search worker orders (K <= 8) for one under which the prefix form holds.
/// Returns the first order found in lexicographic order.
pub fn find_prefix_order(p: &Placement, opts: DeriveOptions) -> Result<Option<Vec<usize>>> {
    if p.k > RELABEL_MAX_K {
        return Err(Error::TooManyWorkers {
            k: p.k,
            limit: RELABEL_MAX_K,
        });
    }
    for order in (1..=p.k).permutations(p.k) {
        let q = p.relabeled(&order)?;
        let d = q.derive_with(opts)?;
        if check_condition1(&d, ConditionMode::Prefix)?.holds {
            return Ok(Some(order));
        }
    }
    Ok(None)
}

/// Partition of `P_k` into blocks `P_{k,1}, ..., P_{k,k-1}` with
/// `|P_{k,i}| = d_i` and `P_{k,i} ∩ P_i = ∅`, plus the remainder `P_{k,k}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HallPartition {
    pub worker: usize,
    pub blocks: Vec<BTreeSet<usize>>,
    pub remainder: BTreeSet<usize>,
}

impl HallPartition {
    /// Checks the defining set predicates against `d`.
    pub fn validate(&self, d: &Derived) -> Result<()> {
        let k = self.worker;
        let pk = &d.p[k - 1];
        let mut union = BTreeSet::new();
        for (i, block) in self.blocks.iter().enumerate() {
            if block.len() != d.d[i] {
                return Err(Error::Property(format!(
                    "|P_{{{k},{}}}| = {} but d_{} = {}",
                    i + 1,
                    block.len(),
                    i + 1,
                    d.d[i]
                )));
            }
            if !block.is_disjoint(&d.p[i]) {
                return Err(Error::Property(format!(
                    "P_{{{k},{}}} meets P_{}",
                    i + 1,
                    i + 1
                )));
            }
            if !block.is_subset(pk) {
                return Err(Error::Property(format!("P_{{{k},{}}} leaves P_{k}", i + 1)));
            }
            if !union.is_disjoint(block) {
                return Err(Error::Property(format!(
                    "P_{{{k},{}}} overlaps earlier blocks",
                    i + 1
                )));
            }
            union.extend(block.iter().copied());
        }
        let expected: BTreeSet<usize> = pk.difference(&union).copied().collect();
        if expected != self.remainder {
            return Err(Error::Property(format!("remainder of P_{k} is wrong")));
        }
        Ok(())
    }
}

/// Bipartite matching of labelled slots (`d_i` per earlier worker `i`) onto
/// the packets of `P_k`, where a slot of worker `i` may take any packet in
/// `P_k \ P_i`. A perfect matching of the slots yields the partition; a
/// deficient one yields a Hall violator.
pub fn hall_partition(d: &Derived, k: usize) -> Result<HallPartition> {
    if k == 0 || k > d.k {
        return Err(Error::IndexOutOfRange {
            index: k,
            bound: d.k,
        });
    }
    let right: Vec<usize> = d.p[k - 1].iter().copied().collect();
    let slot_owner: Vec<usize> = (1..k)
        .flat_map(|i| std::iter::repeat_n(i, d.d[i - 1]))
        .collect();
    let adjacency: Vec<Vec<usize>> = slot_owner
        .iter()
        .map(|&i| {
            right
                .iter()
                .enumerate()
                .filter(|(_, y)| !d.p[i - 1].contains(y))
                .map(|(idx, _)| idx)
                .collect()
        })
        .collect();

    let mut match_right: Vec<Option<usize>> = vec![None; right.len()];
    let mut unmatched = None;
    for slot in 0..slot_owner.len() {
        let mut visited = vec![false; right.len()];
        if !augment(slot, &adjacency, &mut visited, &mut match_right) && unmatched.is_none() {
            unmatched = Some(slot);
        }
    }

    if let Some(start) = unmatched {
        return Err(deficiency(k, start, &slot_owner, &adjacency, &match_right));
    }

    let mut blocks = vec![BTreeSet::new(); k - 1];
    for (y, owner) in match_right.iter().enumerate() {
        if let Some(slot) = owner {
            blocks[slot_owner[*slot] - 1].insert(right[y]);
        }
    }
    let used: BTreeSet<usize> = blocks.iter().flatten().copied().collect();
    let remainder = d.p[k - 1].difference(&used).copied().collect();
    Ok(HallPartition {
        worker: k,
        blocks,
        remainder,
    })
}

fn augment(
    slot: usize,
    adjacency: &[Vec<usize>],
    visited: &mut [bool],
    match_right: &mut [Option<usize>],
) -> bool {
    for &y in &adjacency[slot] {
        if visited[y] {
            continue;
        }
        visited[y] = true;
        let free = match match_right[y] {
            None => true,
            Some(other) => augment(other, adjacency, visited, match_right),
        };
        if free {
            match_right[y] = Some(slot);
            return true;
        }
    }
    false
}

/// Alternating-path closure from an unmatched slot. The slots reached have
/// fewer neighbours than members, which is the Hall violator.
fn deficiency(
    k: usize,
    start: usize,
    slot_owner: &[usize],
    adjacency: &[Vec<usize>],
    match_right: &[Option<usize>],
) -> Error {
    let mut slots = BTreeSet::from([start]);
    let mut seen_right = BTreeSet::new();
    let mut queue = vec![start];
    while let Some(s) = queue.pop() {
        for &y in &adjacency[s] {
            if seen_right.insert(y) {
                if let Some(next) = match_right[y] {
                    if slots.insert(next) {
                        queue.push(next);
                    }
                }
            }
        }
    }
    let deficient: BTreeSet<usize> = slots.iter().map(|&s| slot_owner[s]).collect();
    Error::HallDeficiency {
        worker: k,
        deficient: deficient.into_iter().collect(),
        slots: slots.len(),
        neighbours: seen_right.len(),
    }
}
