//! Construction of the downlink matrix `B`, the per-worker encoders `A_k`,
//! the stacked encoder `A` and the uplink matrix `P = A B`.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldDescriptor, FieldSpec};
use crate::placement::{DeriveOptions, Derived, Placement};
use crate::GfMatrix;

/// How the downlink matrix is generated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// `1 / (x_i + y_j)` with distinct, disjoint node sets; superregular.
    #[default]
    Cauchy,
    /// `w^(i j)`; only the sub-squares the scheme uses are verified.
    Vandermonde,
}

impl Strategy {
    /// Minimum field order for an `rows x cols` matrix.
    pub fn required_order(self, rows: usize, cols: usize) -> u64 {
        match self {
            Strategy::Cauchy => (rows + cols) as u64,
            Strategy::Vandermonde => rows.max(cols) as u64 + 1,
        }
    }

    /// Smallest field, or the forced degree after checking it is large enough.
    pub fn select_field(self, rows: usize, cols: usize, forced: Option<u32>) -> Result<FieldSpec> {
        let required = self.required_order(rows, cols);
        match forced {
            None => FieldSpec::with_order_at_least(required),
            Some(m) => {
                let f = FieldSpec::new(m)?;
                if (f.order() as u64) < required {
                    return Err(Error::Unsupported(format!(
                        "GF(2^{m}) has {} elements, {self:?} needs {required}",
                        f.order()
                    )));
                }
                Ok(f)
            }
        }
    }
}

/// Cauchy matrix `1 / (x_i + y_j)` with node labels taken from a seeded
/// shuffle of the field.
///
/// Structured labels (consecutive integers, or powers of `w`) are avoided:
/// in characteristic 2 they align the column spaces of different workers
/// and can make the stacked encoder singular even though `B` is MDS.
pub fn cauchy_matrix(field: FieldSpec, rows: usize, cols: usize, seed: u64) -> Result<GfMatrix> {
    let needed = rows + cols;
    if needed as u64 > field.order() as u64 {
        return Err(Error::FieldTooSmall {
            required: needed as u64,
        });
    }
    let mut labels: Vec<u32> = (0..field.order()).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (xs, ys) = labels[..needed].split_at(rows);
    GfMatrix::from_fn(rows, cols, field, |i, j| {
        let x = field.element(xs[i]).expect("label in field");
        let y = field.element(ys[j]).expect("label in field");
        (x + y).inv().expect("disjoint labels")
    })
}

/// Vandermonde matrix with entry `(i, j) = w^(i (j + 1))`, 0-based: row 0 is
/// all ones, row 1 is `w^1 .. w^cols`.
pub fn vandermonde_matrix(field: FieldSpec, rows: usize, cols: usize) -> Result<GfMatrix> {
    GfMatrix::from_fn(rows, cols, field, |i, j| {
        field.element_from_power(i as i64 * (j as i64 + 1))
    })
}

/// Build `B` (S x N(K-1)) and verify the sub-squares the scheme relies on.
pub fn build_downlink_matrix(
    d: &Derived,
    strategy: Strategy,
    field: FieldSpec,
    seed: u64,
) -> Result<GfMatrix> {
    let cols = d.packet_count();
    let b = match strategy {
        Strategy::Cauchy => cauchy_matrix(field, d.s, cols, seed)?,
        Strategy::Vandermonde => vandermonde_matrix(field, d.s, cols)?,
    };
    verify_downlink(d, &b)?;
    Ok(b)
}

/// Full column rank of every `B_k` and invertibility of every decode
/// square `B(first |P_k| rows, P_k)`.
pub fn verify_downlink(d: &Derived, b: &GfMatrix) -> Result<()> {
    verify_encoder_inputs(d, b)?;
    for k in 1..=d.k {
        let missing = d.missing_columns(k);
        let rows: Vec<usize> = (0..missing.len()).collect();
        let square = b.submatrix(&rows, &missing)?;
        if square.rank() < missing.len() {
            return Err(Error::Construction(format!(
                "decode submatrix B([{}], P_{k}) is singular",
                missing.len()
            )));
        }
    }
    Ok(())
}

fn verify_encoder_inputs(d: &Derived, b: &GfMatrix) -> Result<Vec<usize>> {
    if b.shape() != (d.s, d.packet_count()) {
        return Err(Error::DimensionMismatch {
            op: "downlink matrix",
            left: b.shape(),
            right: (d.s, d.packet_count()),
        });
    }
    let mut ranks = Vec::with_capacity(d.k);
    for k in 1..=d.k {
        let missing = d.missing_columns(k);
        let rank = b.select_cols(&missing)?.rank();
        if rank < missing.len() {
            return Err(Error::Construction(format!(
                "B_{k} = B([S], P_{k}) has rank {rank} < {}",
                missing.len()
            )));
        }
        ranks.push(rank);
    }
    Ok(ranks)
}

/// `A_k`: RREF basis of the left null space of `B_k = B(:, missing)`.
pub fn build_worker_encoder(b: &GfMatrix, missing: &[usize], worker: usize) -> Result<GfMatrix> {
    let bk = b.select_cols(missing)?;
    let ns = bk.left_null_space();
    if !ns.full_column_rank {
        return Err(Error::MdsViolation {
            worker,
            rank: bk.rank(),
            cols: missing.len(),
        });
    }
    Ok(ns.basis)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SchemeKind {
    /// Uplink plus broadcast.
    Dmtl,
    /// Uplink only; the first `n_c (K - 1)` rows of `B` carry the demand.
    Lsc { n_c: usize },
}

/// Checks performed at assembly time.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub a_rank: usize,
    pub b_k_ranks: Vec<usize>,
    pub encoders_annihilate: bool,
    pub p_equals_ab: bool,
    pub zero_columns: bool,
    /// Decode squares; not applicable to uplink-only schemes.
    pub decode_squares: Option<bool>,
    /// Degree of the smallest admissible field, when a larger one was needed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub escalated_from: Option<u32>,
}

/// Extra field degrees [`Scheme::build`] tries after a failed assembly.
pub const FIELD_ESCALATION: u32 = 3;

#[derive(Clone, Copy, Debug, Default)]
pub struct BuildOptions {
    pub strategy: Strategy,
    pub seed: u64,
    pub field_degree: Option<u32>,
    pub permit_zero_d: bool,
}

#[derive(Clone, Debug)]
pub struct Scheme {
    pub field: FieldSpec,
    pub placement: Placement,
    pub derived: Derived,
    pub strategy: Strategy,
    pub seed: u64,
    pub permit_zero_d: bool,
    pub kind: SchemeKind,
    pub b: GfMatrix,
    pub a: GfMatrix,
    pub p: GfMatrix,
    pub evidence: Evidence,
}

impl Scheme {
    /// Derive, pick a field, build `B` and assemble. Condition checking is
    /// left to the caller.
    ///
    /// Without a forced degree, a failed assembly is retried in up to
    /// [`FIELD_ESCALATION`] larger fields: a superregular `B` over a small
    /// field can still yield a singular `A`. The first error is returned if
    /// every attempt fails.
    pub fn build(placement: &Placement, opts: &BuildOptions) -> Result<Scheme> {
        let derived = placement.derive_with(DeriveOptions {
            permit_zero_d: opts.permit_zero_d,
        })?;
        let first =
            opts.strategy
                .select_field(derived.s, derived.packet_count(), opts.field_degree)?;
        let last = match opts.field_degree {
            Some(m) => m,
            None => (first.degree() + FIELD_ESCALATION).min(16),
        };
        let mut first_err = None;
        for m in first.degree()..=last {
            let field = FieldSpec::new(m)?;
            let attempt = build_downlink_matrix(&derived, opts.strategy, field, opts.seed)
                .and_then(|b| assemble(placement, derived.clone(), b, opts));
            match attempt {
                Ok(mut s) => {
                    if m > first.degree() {
                        s.evidence.escalated_from = Some(first.degree());
                    }
                    return Ok(s);
                }
                Err(e @ (Error::SingularEncoder { .. } | Error::Construction(_))) => {
                    first_err.get_or_insert(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(first_err.expect("at least one field tried"))
    }

    pub fn workers(&self) -> usize {
        self.derived.k
    }

    /// Broadcast coefficients: the first λ rows of `B`.
    pub fn b_prime(&self) -> GfMatrix {
        self.b.row_range(0, self.derived.lambda).expect("λ <= S")
    }

    /// Rows of `B` after the first λ.
    pub fn b_double_prime(&self) -> GfMatrix {
        self.b
            .row_range(self.derived.lambda, self.derived.s)
            .expect("λ <= S")
    }

    /// `B_k = B(:, P_k)`
    pub fn b_block(&self, k: usize) -> GfMatrix {
        self.b
            .select_cols(&self.derived.missing_columns(k))
            .expect("P_k within columns")
    }

    /// `A_k`
    pub fn a_block(&self, k: usize) -> GfMatrix {
        let r = self.derived.block_rows(k);
        self.a.row_range(r.start, r.end).expect("block within A")
    }

    /// `P_k`, the uplink coefficients of worker `k`.
    pub fn p_block(&self, k: usize) -> GfMatrix {
        let r = self.derived.block_rows(k);
        self.p.row_range(r.start, r.end).expect("block within P")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SchemeDoc::from(self))?)
    }

    /// Reload a scheme and re-verify every structural invariant.
    pub fn from_json(s: &str) -> Result<Scheme> {
        let doc: SchemeDoc = serde_json::from_str(s)?;
        doc.into_scheme()
    }
}

/// Stack the `A_k`, check `A` is invertible, and form `P = A B`.
pub fn assemble(
    placement: &Placement,
    derived: Derived,
    b: GfMatrix,
    opts: &BuildOptions,
) -> Result<Scheme> {
    assemble_kind(placement, derived, b, opts, SchemeKind::Dmtl)
}

pub(crate) fn assemble_kind(
    placement: &Placement,
    derived: Derived,
    b: GfMatrix,
    opts: &BuildOptions,
    kind: SchemeKind,
) -> Result<Scheme> {
    let field = b.context();
    let b_k_ranks = verify_encoder_inputs(&derived, &b)?;
    let blocks: Vec<GfMatrix> = (1..=derived.k)
        .into_par_iter()
        .map(|k| build_worker_encoder(&b, &derived.missing_columns(k), k))
        .collect::<Result<_>>()?;
    for (k, block) in blocks.iter().enumerate() {
        debug_assert_eq!(block.rows(), derived.d[k]);
    }
    let a = GfMatrix::vstack(&blocks, derived.s, field)?;
    let a_rank = check_invertible(&derived, &blocks)?;
    let p = a.matmul(&b)?;
    let decode_squares = match kind {
        SchemeKind::Dmtl => {
            verify_downlink(&derived, &b)?;
            Some(true)
        }
        SchemeKind::Lsc { .. } => None,
    };
    let scheme = Scheme {
        field,
        placement: placement.clone(),
        derived,
        strategy: opts.strategy,
        seed: opts.seed,
        permit_zero_d: opts.permit_zero_d,
        kind,
        b,
        a,
        p,
        evidence: Evidence {
            a_rank,
            b_k_ranks,
            encoders_annihilate: true,
            p_equals_ab: true,
            zero_columns: true,
            decode_squares,
            escalated_from: None,
        },
    };
    verify_structure(&scheme)?;
    Ok(scheme)
}

/// Rank of `A`, or the first block that is dependent on the ones above it.
fn check_invertible(d: &Derived, blocks: &[GfMatrix]) -> Result<usize> {
    let field = blocks.first().map(|b| b.context());
    let Some(field) = field else {
        return Ok(0);
    };
    let mut expected = 0;
    for k in 1..=d.k {
        expected += d.d[k - 1];
        if d.d[k - 1] == 0 {
            continue;
        }
        let stacked = GfMatrix::vstack(&blocks[..k], d.s, field)?;
        let rank = stacked.rank();
        if rank < expected {
            return Err(Error::SingularEncoder {
                worker: k,
                rank,
                expected,
            });
        }
    }
    Ok(expected)
}

/// `A_k B_k = 0`, `P = A B`, `P_k` zero on the columns of `P_k`, `A` invertible.
pub fn verify_structure(s: &Scheme) -> Result<()> {
    let d = &s.derived;
    if s.a.shape() != (d.s, d.s) || s.p.shape() != (d.s, d.packet_count()) {
        return Err(Error::Property("scheme matrices have wrong shapes".into()));
    }
    for k in 1..=d.k {
        let ak = s.a_block(k);
        if !ak.matmul(&s.b_block(k))?.is_zero() {
            return Err(Error::Property(format!("A_{k} B_{k} != 0")));
        }
        let pk = s.p_block(k);
        for &j in &d.missing_columns(k) {
            if !pk.is_column_zero(j) {
                return Err(Error::Locality {
                    worker: k,
                    packet: j + 1,
                });
            }
        }
    }
    if s.a.matmul(&s.b)? != s.p {
        return Err(Error::Property("P != A B".into()));
    }
    if s.a.rank() != d.s {
        return Err(Error::Property("A is singular".into()));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DimensionCheck {
    pub k: usize,
    pub expected: usize,
    pub actual: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SubspaceReport {
    pub checks: Vec<DimensionCheck>,
    pub holds: bool,
}

impl SubspaceReport {
    pub fn ensure(&self) -> Result<()> {
        match self.checks.iter().find(|c| c.expected != c.actual) {
            None => Ok(()),
            Some(c) => Err(Error::Property(format!(
                "dim of intersection of B_1..B_{} column spaces is {} (expected {})",
                c.k, c.actual, c.expected
            ))),
        }
    }
}

/// Basis (as columns) of `col(u) ∩ col(v)`, from the null space of `[u | v]`.
pub fn intersect_column_spaces(u: &GfMatrix, v: &GfMatrix) -> Result<GfMatrix> {
    let field = u.context();
    let rows = u.rows();
    if u.cols() == 0 || v.cols() == 0 {
        return Ok(GfMatrix::zeros(rows, 0, field));
    }
    let joint = u.hstack(v)?;
    let null = joint.right_null_space();
    let coeffs: Vec<usize> = (0..u.cols()).collect();
    let x = null.select_cols(&coeffs)?;
    // each null vector (x, y) gives u x = -v y in the intersection
    let spanning = x.matmul(&u.transpose())?;
    let reduced = spanning.rref();
    let basis_rows: Vec<usize> = (0..reduced.pivots.len()).collect();
    Ok(reduced.matrix.select_rows(&basis_rows)?.transpose())
}

/// `dim(col(B_1) ∩ ... ∩ col(B_k)) = S - (d_1 + ... + d_k)` for each
/// `k <= up_to_k`, computed by iterated intersection without using `A`.
pub fn verify_subspace_dimensions(scheme: &Scheme, up_to_k: usize) -> Result<SubspaceReport> {
    let d = &scheme.derived;
    let up_to_k = up_to_k.min(d.k);
    let mut checks = Vec::with_capacity(up_to_k);
    let mut basis: Option<GfMatrix> = None;
    for k in 1..=up_to_k {
        let bk = scheme.b_block(k);
        let next = match basis {
            None => {
                let reduced = bk.transpose().rref();
                let rows: Vec<usize> = (0..reduced.pivots.len()).collect();
                reduced.matrix.select_rows(&rows)?.transpose()
            }
            Some(ref cur) => intersect_column_spaces(cur, &bk)?,
        };
        checks.push(DimensionCheck {
            k,
            expected: d.s - d.d[..k].iter().sum::<usize>(),
            actual: next.cols(),
        });
        basis = Some(next);
    }
    let holds = checks.iter().all(|c| c.expected == c.actual);
    Ok(SubspaceReport { checks, holds })
}

/// Wire form of a scheme: matrices as row-major integer arrays.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SchemeDoc {
    pub field: FieldDescriptor,
    pub placement: Placement,
    pub strategy: Strategy,
    pub seed: u64,
    pub permit_zero_d: bool,
    pub kind: SchemeKind,
    pub dimensions: Dimensions,
    pub d: Vec<usize>,
    pub b: Vec<Vec<u32>>,
    pub a: Vec<Vec<u32>>,
    pub p: Vec<Vec<u32>>,
    pub evidence: Evidence,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimensions {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "S")]
    pub s: usize,
    pub lambda: usize,
    pub packets: usize,
}

pub fn matrix_to_rows(m: &GfMatrix) -> Vec<Vec<u32>> {
    m.iter_rows()
        .map(|r| r.iter().map(|e| e.value()).collect())
        .collect()
}

pub fn matrix_from_rows(field: FieldSpec, rows: &[Vec<u32>], cols: usize) -> Result<GfMatrix> {
    let parsed = rows
        .iter()
        .map(|r| {
            r.iter()
                .map(|&v| field.element(v))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    if parsed.is_empty() {
        return Ok(GfMatrix::zeros(0, cols, field));
    }
    let m = GfMatrix::from_rows(field, parsed)?;
    if m.cols() != cols {
        return Err(Error::DimensionMismatch {
            op: "matrix document",
            left: m.shape(),
            right: (m.rows(), cols),
        });
    }
    Ok(m)
}

impl From<&Scheme> for SchemeDoc {
    fn from(s: &Scheme) -> SchemeDoc {
        let d = &s.derived;
        SchemeDoc {
            field: s.field.into(),
            placement: s.placement.clone(),
            strategy: s.strategy,
            seed: s.seed,
            permit_zero_d: s.permit_zero_d,
            kind: s.kind,
            dimensions: Dimensions {
                k: d.k,
                n: d.n,
                s: d.s,
                lambda: d.lambda,
                packets: d.packet_count(),
            },
            d: d.d.clone(),
            b: matrix_to_rows(&s.b),
            a: matrix_to_rows(&s.a),
            p: matrix_to_rows(&s.p),
            evidence: s.evidence.clone(),
        }
    }
}

impl SchemeDoc {
    pub fn into_scheme(self) -> Result<Scheme> {
        let field = FieldSpec::try_from(self.field)?;
        let derived = self.placement.derive_with(DeriveOptions {
            permit_zero_d: self.permit_zero_d,
        })?;
        let dims = Dimensions {
            k: derived.k,
            n: derived.n,
            s: derived.s,
            lambda: derived.lambda,
            packets: derived.packet_count(),
        };
        if dims != self.dimensions || derived.d != self.d {
            return Err(Error::Property(
                "scheme dimensions do not match its placement".into(),
            ));
        }
        let cols = derived.packet_count();
        let scheme = Scheme {
            field,
            b: matrix_from_rows(field, &self.b, cols)?,
            a: matrix_from_rows(field, &self.a, derived.s)?,
            p: matrix_from_rows(field, &self.p, cols)?,
            placement: self.placement,
            derived,
            strategy: self.strategy,
            seed: self.seed,
            permit_zero_d: self.permit_zero_d,
            kind: self.kind,
            evidence: self.evidence,
        };
        if scheme.b.rows() != scheme.derived.s {
            return Err(Error::Property("B has the wrong number of rows".into()));
        }
        verify_structure(&scheme)?;
        if scheme.kind == SchemeKind::Dmtl {
            verify_downlink(&scheme.derived, &scheme.b)?;
        }
        Ok(scheme)
    }
}

/// Packets (1-based) a worker block touches with a nonzero coefficient.
pub fn used_packets(block: &GfMatrix) -> BTreeSet<usize> {
    (0..block.cols())
        .filter(|&j| !block.is_column_zero(j))
        .map(|j| j + 1)
        .collect()
}
