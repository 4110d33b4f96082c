//! One simulated iteration: packetize, uplink encode, server recombination,
//! broadcast, worker decode and load accounting.

use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Phase, Result};
use crate::field::{FieldDescriptor, FieldElement, FieldSpec};
use crate::loads::{self, fraction};
use crate::placement::Placement;
use crate::scheme::{matrix_to_rows, Scheme};
use crate::GfMatrix;

/// Local update value `v_n` of batch `n` (1-based).
#[derive(Clone, Debug, PartialEq)]
pub struct LocalUpdate {
    pub batch: usize,
    pub payload: Vec<FieldElement>,
}

/// `v̂`: the `N (K - 1)` packets stacked so that packet `(n, i)` sits at
/// global index `n + (i - 1) N` (row `index - 1`).
#[derive(Clone, Debug, PartialEq)]
pub struct PacketVector {
    pub k: usize,
    pub n: usize,
    /// Update length before padding.
    pub logical_len: usize,
    /// Zeros appended to every update.
    pub pad: usize,
    pub packets: GfMatrix,
}

impl PacketVector {
    pub fn packet_len(&self) -> usize {
        self.packets.cols()
    }

    pub fn padded_len(&self) -> usize {
        self.logical_len + self.pad
    }

    /// Packet at 1-based global index.
    pub fn packet(&self, index: usize) -> &[FieldElement] {
        self.packets.row(index - 1)
    }

    /// Inverse of [`packetize`]: strips the padding.
    pub fn depacketize(&self) -> Vec<LocalUpdate> {
        let len = self.packet_len();
        (1..=self.n)
            .map(|n| {
                let mut payload = Vec::with_capacity(self.padded_len());
                for i in 1..self.k {
                    payload.extend_from_slice(self.packet(n + (i - 1) * self.n));
                }
                debug_assert_eq!(payload.len(), len * (self.k - 1));
                payload.truncate(self.logical_len);
                LocalUpdate { batch: n, payload }
            })
            .collect()
    }
}

/// Split each of the `N` updates into `K - 1` equal packets, zero-padding to
/// a multiple of `K - 1`. Updates must cover batches `1..=N` in order.
pub fn packetize(updates: &[LocalUpdate], k: usize, field: FieldSpec) -> Result<PacketVector> {
    if k < 2 {
        return Err(Error::Protocol(format!("need at least 2 workers, got {k}")));
    }
    let n = updates.len();
    for (i, u) in updates.iter().enumerate() {
        if u.batch != i + 1 {
            return Err(Error::Protocol(format!(
                "update {} carries batch {} (expected batches 1..={n} in order)",
                i + 1,
                u.batch
            )));
        }
    }
    let logical_len = updates.first().map_or(0, |u| u.payload.len());
    if let Some(u) = updates.iter().find(|u| u.payload.len() != logical_len) {
        return Err(Error::Protocol(format!(
            "batch {} has length {} but batch 1 has length {logical_len}",
            u.batch,
            u.payload.len()
        )));
    }
    let slots = k - 1;
    let packet_len = logical_len.div_ceil(slots);
    let pad = packet_len * slots - logical_len;
    let packets = GfMatrix::from_fn(n * slots, packet_len, field, |row, col| {
        let (batch, slot) = (row % n, row / n);
        updates[batch]
            .payload
            .get(slot * packet_len + col)
            .copied()
            .unwrap_or_else(|| field.zero())
    })?;
    Ok(PacketVector {
        k,
        n,
        logical_len,
        pad,
        packets,
    })
}

/// `X_k = P_k v̂`, reading only packets worker `k` can compute.
pub fn uplink_encode(scheme: &Scheme, k: usize, v: &PacketVector) -> Result<GfMatrix> {
    let d = &scheme.derived;
    let pk = scheme.p_block(k);
    for &j in &d.missing_columns(k) {
        if !pk.is_column_zero(j) {
            return Err(Error::Locality {
                worker: k,
                packet: j + 1,
            });
        }
    }
    let known = d.known_columns(k);
    pk.select_cols(&known)?
        .matmul(&v.packets.select_rows(&known)?)
}

/// `A^{-1} X = B v̂` from the stacked messages.
pub fn recover_coded(scheme: &Scheme, messages: &[GfMatrix]) -> Result<GfMatrix> {
    let d = &scheme.derived;
    if messages.len() != d.k {
        return Err(Error::Protocol(format!(
            "expected {} uplink messages, got {}",
            d.k,
            messages.len()
        )));
    }
    let len = messages.iter().map(GfMatrix::cols).max().unwrap_or(0);
    for (i, m) in messages.iter().enumerate() {
        if m.rows() != d.d[i] || m.cols() != len {
            return Err(Error::Protocol(format!(
                "message of worker {} is {}x{}, expected {}x{len}",
                i + 1,
                m.rows(),
                m.cols(),
                d.d[i]
            )));
        }
    }
    let x = GfMatrix::vstack(messages, len, scheme.field)?;
    if d.s == 0 {
        return Ok(x);
    }
    scheme.a.solve(&x)
}

/// The broadcast `B' v̂`: first λ rows of `A^{-1} X`.
pub fn server_recombine(scheme: &Scheme, messages: &[GfMatrix]) -> Result<GfMatrix> {
    recover_coded(scheme, messages)?.row_range(0, scheme.derived.lambda)
}

/// Recover all of `v̂` at worker `k` from the broadcast and its own packets.
/// Only rows of `local` that worker `k` can compute are read.
pub fn worker_decode(
    scheme: &Scheme,
    k: usize,
    broadcast: &GfMatrix,
    local: &PacketVector,
) -> Result<PacketVector> {
    let d = &scheme.derived;
    let missing = d.missing_columns(k);
    let known = d.known_columns(k);
    let mut out = local.clone();
    if missing.is_empty() {
        return Ok(out);
    }
    if broadcast.rows() < missing.len() {
        return Err(Error::Protocol(format!(
            "broadcast has {} packets, worker {k} needs {}",
            broadcast.rows(),
            missing.len()
        )));
    }
    let rows: Vec<usize> = (0..missing.len()).collect();
    let square = scheme.b.submatrix(&rows, &missing)?;
    let side = scheme.b.submatrix(&rows, &known)?;
    let y = broadcast
        .select_rows(&rows)?
        .sub(&side.matmul(&local.packets.select_rows(&known)?)?)?;
    let u = square.solve(&y).map_err(|e| match e {
        Error::Singular { .. } => Error::MdsViolation {
            worker: k,
            rank: square.rank(),
            cols: missing.len(),
        },
        other => other,
    })?;
    for (r, &j) in missing.iter().enumerate() {
        for c in 0..u.cols() {
            out.packets.set(j, c, *u.get(r, c));
        }
    }
    Ok(out)
}

/// Global aggregation `(ω_1, ..., ω_K) = φ(v_1, ..., v_N)`.
pub trait GlobalUpdate: Sync {
    fn apply(&self, updates: &[LocalUpdate], workers: usize) -> Vec<Vec<FieldElement>>;
}

/// Demonstration stand-in for a learning rule: `ω_k[e] = (w^k Σ_n v_n[e])^3`.
/// It only shows where the aggregation plugs in.
#[derive(Clone, Copy, Debug, Default)]
pub struct DemoUpdate;

impl GlobalUpdate for DemoUpdate {
    fn apply(&self, updates: &[LocalUpdate], workers: usize) -> Vec<Vec<FieldElement>> {
        let Some(first) = updates.first() else {
            return vec![Vec::new(); workers];
        };
        let field = first.payload.first().map(FieldElement::field);
        let Some(field) = field else {
            return vec![Vec::new(); workers];
        };
        let sum: Vec<FieldElement> = (0..first.payload.len())
            .map(|e| {
                updates
                    .iter()
                    .fold(field.zero(), |acc, u| acc + u.payload[e])
            })
            .collect();
        (1..=workers)
            .map(|k| {
                let wk = field.element_from_power(k as i64);
                sum.iter()
                    .map(|&s| {
                        let t = wk * s;
                        t * t * t
                    })
                    .collect()
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RoundOptions {
    pub payload_seed: u64,
    /// Logical update length `E`.
    pub update_len: usize,
}

/// Deterministic uniform payloads.
pub fn random_updates(field: FieldSpec, n: usize, len: usize, seed: u64) -> Vec<LocalUpdate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (1..=n)
        .map(|batch| LocalUpdate {
            batch,
            payload: (0..len)
                .map(|_| {
                    field
                        .element(rng.gen_range(0..field.order()))
                        .expect("sampled below order")
                })
                .collect(),
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct WorkerMessage {
    pub worker: usize,
    pub packets: Vec<Vec<u32>>,
    /// `T_k`
    pub symbols: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecodeResult {
    pub worker: usize,
    pub recovered_packets: usize,
    pub exact: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct AchievedLoads {
    #[serde(rename = "L_up", with = "fraction")]
    pub up: Rational64,
    #[serde(rename = "L_down", with = "fraction")]
    pub down: Rational64,
    #[serde(rename = "L_up_star", with = "fraction")]
    pub up_star: Rational64,
    #[serde(rename = "L_down_star", with = "fraction")]
    pub down_star: Rational64,
    pub optimal: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RoundTranscript {
    pub payload_seed: u64,
    pub field: FieldDescriptor,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub update_len: usize,
    pub padded_len: usize,
    pub pad: usize,
    pub packet_len: usize,
    pub payloads: Vec<Vec<u32>>,
    pub packets: Vec<Vec<u32>>,
    pub uplink: Vec<WorkerMessage>,
    pub broadcast: Vec<Vec<u32>>,
    /// `T`
    pub broadcast_symbols: usize,
    pub decodes: Vec<DecodeResult>,
    pub global_update: Vec<Vec<u32>>,
    /// Symbol counts divided by the padded length.
    pub loads: AchievedLoads,
    pub all_exact: bool,
}

/// Run every phase on seeded payloads; errors carry the phase they came from.
pub fn run_round(
    placement: &Placement,
    scheme: &Scheme,
    opts: RoundOptions,
    hook: &dyn GlobalUpdate,
) -> Result<RoundTranscript> {
    if placement != &scheme.placement {
        return Err(Error::Protocol(
            "scheme was built for a different placement".into(),
        ));
    }
    let d = &scheme.derived;
    let field = scheme.field;
    let updates = random_updates(field, d.n, opts.update_len, opts.payload_seed);
    let v = packetize(&updates, d.k, field).map_err(|e| e.in_phase(Phase::Packetize))?;

    let messages: Vec<GfMatrix> = (1..=d.k)
        .into_par_iter()
        .map(|k| uplink_encode(scheme, k, &v))
        .collect::<Result<_>>()
        .map_err(|e| e.in_phase(Phase::Uplink))?;

    let broadcast =
        server_recombine(scheme, &messages).map_err(|e| e.in_phase(Phase::Recombine))?;

    let decoded: Vec<PacketVector> = (1..=d.k)
        .into_par_iter()
        .map(|k| {
            let out = worker_decode(scheme, k, &broadcast, &v)?;
            if out.packets != v.packets {
                return Err(Error::Protocol(format!(
                    "worker {k} reconstructed a different packet vector"
                )));
            }
            Ok(out)
        })
        .collect::<Result<_>>()
        .map_err(|e| e.in_phase(Phase::Decode))?;

    let omega: Vec<Vec<FieldElement>> = decoded
        .iter()
        .enumerate()
        .map(|(i, pv)| {
            let mut all = hook.apply(&pv.depacketize(), d.k);
            if all.len() != d.k {
                return Err(Error::Protocol(format!(
                    "global update returned {} models for {} workers",
                    all.len(),
                    d.k
                )));
            }
            Ok(all.swap_remove(i))
        })
        .collect::<Result<_>>()
        .map_err(|e| e.in_phase(Phase::GlobalUpdate))?;

    let packet_len = v.packet_len();
    let padded = v.padded_len();
    let uplink_symbols: usize = messages.iter().map(|m| m.rows() * packet_len).sum();
    let broadcast_symbols = broadcast.rows() * packet_len;
    let ratio = |symbols: usize| {
        if padded == 0 {
            Rational64::from_integer(0)
        } else {
            Rational64::new(symbols as i64, padded as i64)
        }
    };
    let bounds = loads::lower_bounds(d);
    let (up, down) = if padded == 0 {
        let achieved = loads::scheme_loads(d);
        (achieved.up, achieved.down)
    } else {
        (ratio(uplink_symbols), ratio(broadcast_symbols))
    };

    Ok(RoundTranscript {
        payload_seed: opts.payload_seed,
        field: field.into(),
        k: d.k,
        n: d.n,
        update_len: v.logical_len,
        padded_len: padded,
        pad: v.pad,
        packet_len,
        payloads: updates
            .iter()
            .map(|u| u.payload.iter().map(FieldElement::value).collect())
            .collect(),
        packets: matrix_to_rows(&v.packets),
        uplink: messages
            .iter()
            .enumerate()
            .map(|(i, m)| WorkerMessage {
                worker: i + 1,
                packets: matrix_to_rows(m),
                symbols: m.rows() * packet_len,
            })
            .collect(),
        broadcast: matrix_to_rows(&broadcast),
        broadcast_symbols,
        decodes: (1..=d.k)
            .map(|k| DecodeResult {
                worker: k,
                recovered_packets: d.p[k - 1].len(),
                exact: true,
            })
            .collect(),
        global_update: omega
            .iter()
            .map(|w| w.iter().map(FieldElement::value).collect())
            .collect(),
        loads: AchievedLoads {
            up,
            down,
            up_star: bounds.up,
            down_star: bounds.down,
            optimal: up == bounds.up && down == bounds.down,
        },
        all_exact: true,
    })
}
