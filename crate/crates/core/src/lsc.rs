//! Uplink-only linearly separable computation: the server recovers
//! `F (v_1; ...; v_N)` for an `N_c x N` demand matrix `F`.
//!
//! `F` is expanded to packet granularity: row `c (K - 1) + i` of `B`
//! (0-based `c`, `i`) carries `F(c, n)` at the column of packet `(n, i)`.
//! The remaining rows of `B` come from the Cauchy construction.

use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Phase, Result};
use crate::field::{FieldDescriptor, FieldElement, FieldSpec};
use crate::loads::fraction;
use crate::placement::{DeriveOptions, Derived, Placement};
use crate::protocol::{self, random_updates, LocalUpdate};
use crate::scheme::{self, matrix_to_rows, BuildOptions, Scheme, SchemeKind, Strategy};
use crate::GfMatrix;

/// Demand document: `{"Nc": 2, "F": [[...], ...], "seed": 7}`. Without `F`,
/// the entries are drawn uniformly from the field using `seed`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LscDemand {
    #[serde(rename = "Nc")]
    pub n_c: usize,
    #[serde(rename = "F", default, skip_serializing_if = "Option::is_none")]
    pub f: Option<Vec<Vec<u32>>>,
    #[serde(default)]
    pub seed: u64,
}

impl LscDemand {
    pub fn random(n_c: usize, seed: u64) -> LscDemand {
        LscDemand { n_c, f: None, seed }
    }

    pub fn explicit(f: Vec<Vec<u32>>) -> LscDemand {
        LscDemand {
            n_c: f.len(),
            f: Some(f),
            seed: 0,
        }
    }

    pub fn from_json(s: &str) -> Result<LscDemand> {
        Ok(serde_json::from_str(s)?)
    }

    /// Check the demand against a derived placement.
    pub fn validate(&self, d: &Derived) -> Result<()> {
        if self.n_c == 0 {
            return Err(Error::InvalidDemand("N_c must be at least 1".into()));
        }
        if self.n_c > d.n {
            return Err(Error::InvalidDemand(format!(
                "N_c = {} exceeds N = {}",
                self.n_c, d.n
            )));
        }
        if self.n_c * (d.k - 1) > d.s {
            return Err(Error::InvalidDemand(format!(
                "N_c (K - 1) = {} exceeds the row budget S = {}",
                self.n_c * (d.k - 1),
                d.s
            )));
        }
        if let Some(f) = &self.f {
            if f.len() != self.n_c || f.iter().any(|r| r.len() != d.n) {
                return Err(Error::InvalidDemand(format!(
                    "F must be {} x {}",
                    self.n_c, d.n
                )));
            }
        }
        Ok(())
    }

    /// `F` as a field matrix.
    pub fn matrix(&self, field: FieldSpec, n: usize) -> Result<GfMatrix> {
        match &self.f {
            Some(rows) => scheme::matrix_from_rows(field, rows, n),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                GfMatrix::from_fn(self.n_c, n, field, |_, _| {
                    field
                        .element(rng.gen_range(0..field.order()))
                        .expect("sampled below order")
                })
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct LscOptions {
    pub seed: u64,
    pub field_degree: Option<u32>,
    pub permit_zero_d: bool,
    /// Extra attempts after a construction failure. Each retry reseeds the
    /// Cauchy rows and, for a random demand, `F` as well.
    pub retries: u32,
}

#[derive(Clone, Debug)]
pub struct LscScheme {
    pub scheme: Scheme,
    pub f: GfMatrix,
    pub demand: LscDemand,
    /// Attempt that succeeded, starting at 0.
    pub attempt: u32,
}

impl LscScheme {
    pub fn n_c(&self) -> usize {
        self.f.rows()
    }
}

/// `B` with the slot-wise expansion of `F` on top and Cauchy rows below.
pub fn lsc_downlink_matrix(d: &Derived, f: &GfMatrix, seed: u64) -> Result<GfMatrix> {
    let field = f.context();
    let slots = d.k - 1;
    let demand_rows = f.rows() * slots;
    let cols = d.packet_count();
    let rest = scheme::cauchy_matrix(field, d.s - demand_rows, cols, seed)?;
    GfMatrix::from_fn(d.s, cols, field, |row, col| {
        if row < demand_rows {
            let (c, i) = (row / slots, row % slots);
            let (n, slot) = (col % d.n, col / d.n);
            if slot == i {
                *f.get(c, n)
            } else {
                field.zero()
            }
        } else {
            *rest.get(row - demand_rows, col)
        }
    })
}

/// Build an uplink-only scheme whose first `N_c (K - 1)` coded rows are the
/// demanded combinations.
pub fn build_lsc_scheme(
    placement: &Placement,
    demand: &LscDemand,
    opts: &LscOptions,
) -> Result<LscScheme> {
    let derived = placement.derive_with(DeriveOptions {
        permit_zero_d: opts.permit_zero_d,
    })?;
    demand.validate(&derived)?;
    let field =
        Strategy::Cauchy.select_field(derived.s, derived.packet_count(), opts.field_degree)?;
    let mut last = None;
    for attempt in 0..=opts.retries {
        let attempt_demand = LscDemand {
            seed: demand.seed.wrapping_add(attempt as u64),
            ..demand.clone()
        };
        let f = attempt_demand.matrix(field, derived.n)?;
        let build = BuildOptions {
            strategy: Strategy::Cauchy,
            seed: opts.seed.wrapping_add(attempt as u64),
            field_degree: opts.field_degree,
            permit_zero_d: opts.permit_zero_d,
        };
        let result = lsc_downlink_matrix(&derived, &f, build.seed).and_then(|b| {
            scheme::assemble_kind(
                placement,
                derived.clone(),
                b,
                &build,
                SchemeKind::Lsc { n_c: demand.n_c },
            )
        });
        match result {
            Ok(scheme) => {
                return Ok(LscScheme {
                    scheme,
                    f,
                    demand: attempt_demand,
                    attempt,
                })
            }
            Err(e @ (Error::Construction(_) | Error::SingularEncoder { .. })) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

#[derive(Clone, Debug, Serialize)]
pub struct LscTranscript {
    pub payload_seed: u64,
    pub field: FieldDescriptor,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "Nc")]
    pub n_c: usize,
    #[serde(rename = "F")]
    pub f: Vec<Vec<u32>>,
    pub update_len: usize,
    pub padded_len: usize,
    pub pad: usize,
    pub payloads: Vec<Vec<u32>>,
    pub uplink: Vec<Vec<Vec<u32>>>,
    pub uplink_symbols: usize,
    /// The `N_c` recovered combinations, each of logical length.
    pub result: Vec<Vec<u32>>,
    pub matches_oracle: bool,
    #[serde(rename = "L_up", with = "fraction")]
    pub l_up: Rational64,
}

/// Direct `F (v_1; ...; v_N)`.
pub fn oracle(f: &GfMatrix, updates: &[LocalUpdate]) -> Result<GfMatrix> {
    let len = updates.first().map_or(0, |u| u.payload.len());
    let v = GfMatrix::from_fn(updates.len(), len, f.context(), |n, e| {
        updates[n].payload[e]
    })?;
    f.matmul(&v)
}

/// Server side: read the demanded combinations off `A^{-1} X`.
pub fn lsc_decode(lsc: &LscScheme, messages: &[GfMatrix], logical_len: usize) -> Result<GfMatrix> {
    let coded = protocol::recover_coded(&lsc.scheme, messages)?;
    let slots = lsc.scheme.derived.k - 1;
    let packet_len = coded.cols();
    GfMatrix::from_fn(lsc.n_c(), logical_len, lsc.scheme.field, |c, e| {
        *coded.get(c * slots + e / packet_len, e % packet_len)
    })
}

pub fn run_lsc_round(
    lsc: &LscScheme,
    payload_seed: u64,
    update_len: usize,
) -> Result<LscTranscript> {
    let s = &lsc.scheme;
    let d = &s.derived;
    let updates = random_updates(s.field, d.n, update_len, payload_seed);
    let v =
        protocol::packetize(&updates, d.k, s.field).map_err(|e| e.in_phase(Phase::Packetize))?;
    let messages: Vec<GfMatrix> = (1..=d.k)
        .into_par_iter()
        .map(|k| protocol::uplink_encode(s, k, &v))
        .collect::<Result<_>>()
        .map_err(|e| e.in_phase(Phase::Uplink))?;
    let result =
        lsc_decode(lsc, &messages, update_len).map_err(|e| e.in_phase(Phase::Recombine))?;
    let expected = oracle(&lsc.f, &updates)?;
    if result != expected {
        return Err(
            Error::Property("server output differs from F v".into()).in_phase(Phase::Recombine)
        );
    }
    let uplink_symbols: usize = messages.iter().map(|m| m.rows() * v.packet_len()).sum();
    let l_up = if v.padded_len() == 0 {
        Rational64::new(d.s as i64, (d.k - 1) as i64)
    } else {
        Rational64::new(uplink_symbols as i64, v.padded_len() as i64)
    };
    Ok(LscTranscript {
        payload_seed,
        field: s.field.into(),
        k: d.k,
        n: d.n,
        n_c: lsc.n_c(),
        f: matrix_to_rows(&lsc.f),
        update_len,
        padded_len: v.padded_len(),
        pad: v.pad,
        payloads: updates
            .iter()
            .map(|u| u.payload.iter().map(FieldElement::value).collect())
            .collect(),
        uplink: messages.iter().map(matrix_to_rows).collect(),
        uplink_symbols,
        result: matrix_to_rows(&result),
        matches_oracle: true,
        l_up,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> Placement {
        Placement::from_sets(4, 5, &[&[1, 3, 4], &[1, 2, 5], &[2, 4], &[3, 5]]).unwrap()
    }

    #[test]
    fn demand_json() {
        let d = LscDemand::from_json(r#"{"Nc": 2, "seed": 7}"#).unwrap();
        assert_eq!(d, LscDemand::random(2, 7));
        let e = LscDemand::from_json(r#"{"Nc": 1, "F": [[1, 2, 3]], "seed": 0}"#).unwrap();
        assert_eq!(e.f, Some(vec![vec![1, 2, 3]]));
    }

    #[test]
    fn random_demand_matches_oracle() {
        let p = example();
        let demand = LscDemand::random(2, 11);
        let opts = LscOptions {
            retries: 8,
            ..Default::default()
        };
        let lsc = build_lsc_scheme(&p, &demand, &opts).unwrap();
        assert_eq!(lsc.scheme.kind, SchemeKind::Lsc { n_c: 2 });
        for seed in 0..5 {
            let t = run_lsc_round(&lsc, seed, 6).unwrap();
            assert!(t.matches_oracle);
            assert_eq!(t.result.len(), 2);
            assert_eq!(t.l_up, Rational64::new(10, 3));
        }
    }

    #[test]
    fn zero_payloads_give_zero_results() {
        let lsc = build_lsc_scheme(
            &example(),
            &LscDemand::random(1, 3),
            &LscOptions {
                retries: 8,
                ..Default::default()
            },
        )
        .unwrap();
        let s = &lsc.scheme;
        let zeros: Vec<LocalUpdate> = (1..=5)
            .map(|batch| LocalUpdate {
                batch,
                payload: vec![s.field.zero(); 3],
            })
            .collect();
        let v = protocol::packetize(&zeros, 4, s.field).unwrap();
        let msgs: Vec<GfMatrix> = (1..=4)
            .map(|k| protocol::uplink_encode(s, k, &v).unwrap())
            .collect();
        assert!(lsc_decode(&lsc, &msgs, 3).unwrap().is_zero());
    }

    #[test]
    fn identity_demand_recovers_every_update() {
        // each batch stored once, so S = N (K - 1)
        let p = Placement::from_sets(3, 3, &[&[1], &[2], &[3]]).unwrap();
        let f = vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]];
        let lsc = build_lsc_scheme(&p, &LscDemand::explicit(f), &LscOptions::default()).unwrap();
        let t = run_lsc_round(&lsc, 2, 4).unwrap();
        assert_eq!(t.result, t.payloads);
    }

    #[test]
    fn row_budget_and_size_rejections() {
        let p = example();
        // S = 10, K - 1 = 3: N_c = 4 needs 12 rows
        let err =
            build_lsc_scheme(&p, &LscDemand::random(4, 0), &LscOptions::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidDemand(_)));
        let err =
            build_lsc_scheme(&p, &LscDemand::random(6, 0), &LscOptions::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidDemand(_)));
        let bad = LscDemand::explicit(vec![vec![1, 2]]);
        assert!(matches!(
            build_lsc_scheme(&p, &bad, &LscOptions::default()),
            Err(Error::InvalidDemand(_))
        ));
    }

    #[test]
    fn unusable_demand_is_reported() {
        // a zero row of F can never support an invertible A
        let p = example();
        let f = vec![vec![0; 5]];
        let err = build_lsc_scheme(
            &p,
            &LscDemand::explicit(f),
            &LscOptions {
                retries: 2,
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(
            matches!(err, Error::Construction(_) | Error::SingularEncoder { .. }),
            "{err:?}"
        );
    }
}
