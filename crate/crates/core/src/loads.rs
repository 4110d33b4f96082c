//! Communication loads as exact fractions: lower bounds, the loads this
//! scheme achieves, and two baseline schemes for comparison.
//!
//! All loads are normalized by the update length E.

use std::collections::BTreeSet;

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::placement::{Derived, Placement};

/// Serde adapter writing a fraction as `{"num": int, "den": int}`.
pub mod fraction {
    use num_rational::Rational64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Frac {
        num: i64,
        den: i64,
    }

    pub fn serialize<S: Serializer>(v: &Rational64, s: S) -> Result<S::Ok, S::Error> {
        Frac {
            num: *v.numer(),
            den: *v.denom(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational64, D::Error> {
        let f = Frac::deserialize(d)?;
        if f.den == 0 {
            return Err(serde::de::Error::custom("zero denominator"));
        }
        Ok(Rational64::new(f.num, f.den))
    }

    /// `"10/3"`, or `"3"` for integers.
    pub fn display(v: &Rational64) -> String {
        if *v.denom() == 1 {
            v.numer().to_string()
        } else {
            format!("{}/{}", v.numer(), v.denom())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadPair {
    #[serde(with = "fraction")]
    pub up: Rational64,
    #[serde(with = "fraction")]
    pub down: Rational64,
}

/// Lower bounds on uplink and downlink load:
/// `L_up* = (KN - sum_z z |I_z|) / (K - 1)`, `L_down* = N - min_k |Z_k|`.
pub fn lower_bounds(d: &Derived) -> LoadPair {
    let k = d.k as i64;
    let n = d.n as i64;
    let weighted: i64 = d
        .multiplicity
        .iter()
        .enumerate()
        .map(|(z, batches)| z as i64 * batches.len() as i64)
        .sum();
    let min_r = *d.r.iter().min().expect("K >= 2") as i64;
    LoadPair {
        up: Rational64::new(k * n - weighted, k - 1),
        down: Rational64::from_integer(n - min_r),
    }
}

/// Loads of the coded scheme: `S / (K - 1)` up and `λ / (K - 1)` down.
pub fn scheme_loads(d: &Derived) -> LoadPair {
    let split = d.k as i64 - 1;
    LoadPair {
        up: Rational64::new(d.s as i64, split),
        down: Rational64::new(d.lambda as i64, split),
    }
}

/// `|Z_k ∩ Z_j ∩ I_z|`
fn triple(p: &Placement, classes: &[BTreeSet<usize>], k: usize, j: usize, z: usize) -> i64 {
    p.stored(k)
        .intersection(p.stored(j))
        .filter(|b| classes[z].contains(b))
        .count() as i64
}

/// `|Z_k ∩ I_z|`
fn held(p: &Placement, classes: &[BTreeSet<usize>], k: usize, z: usize) -> i64 {
    p.stored(k)
        .iter()
        .filter(|b| classes[z].contains(b))
        .count() as i64
}

fn min_triple(p: &Placement, classes: &[BTreeSet<usize>], k: usize, z: usize) -> i64 {
    (1..=p.workers())
        .map(|j| triple(p, classes, k, j, z))
        .min()
        .expect("K >= 2")
}

fn min_held(p: &Placement, classes: &[BTreeSet<usize>], z: usize) -> i64 {
    (1..=p.workers())
        .map(|k| held(p, classes, k, z))
        .min()
        .expect("K >= 2")
}

/// Closed-form loads of the earlier scheme that requires N = K:
/// `L_up = N - sum_{z in [K]} sum_k (1/z) min_j |Z_k ∩ Z_j ∩ I_z|`,
/// `L_down = N - sum_{z in [K]} min_k |Z_k ∩ I_z|`.
pub fn baseline_square(p: &Placement) -> Result<LoadPair> {
    if p.batches() != p.workers() {
        return Err(Error::Unsupported(format!(
            "baseline requires N = K (got K = {}, N = {})",
            p.workers(),
            p.batches()
        )));
    }
    let classes = p.multiplicity_classes();
    let n = Rational64::from_integer(p.batches() as i64);
    let mut up = n;
    let mut down = n;
    for z in 1..=p.workers() {
        for k in 1..=p.workers() {
            up -= Rational64::new(min_triple(p, &classes, k, z), z as i64);
        }
        down -= Rational64::from_integer(min_held(p, &classes, z));
    }
    Ok(LoadPair { up, down })
}

/// Upper bound on the hierarchical scheme's loads with the fixed choice
/// `α_k^z = 1/z` when `|Z_k ∩ I_z| != 0`, else 0:
/// `L_up = sum_{z in [K-1]} sum_k α_k^z (|Z_k ∩ I_z| - min_j |Z_k ∩ Z_j ∩ I_z|)`,
/// `L_down = N - sum_{z in [K-1]} min_k |Z_k ∩ I_z|`.
pub fn baseline_fixed_alpha(p: &Placement) -> LoadPair {
    let classes = p.multiplicity_classes();
    let mut up = Rational64::from_integer(0);
    let mut down = Rational64::from_integer(p.batches() as i64);
    for z in 1..p.workers() {
        for k in 1..=p.workers() {
            let h = held(p, &classes, k, z);
            if h != 0 {
                up += Rational64::new(h - min_triple(p, &classes, k, z), z as i64);
            }
        }
        down -= Rational64::from_integer(min_held(p, &classes, z));
    }
    LoadPair { up, down }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    #[serde(with = "fraction")]
    pub sum_r: Rational64,
    #[serde(with = "fraction")]
    pub r: Rational64,
    #[serde(rename = "L_up", with = "fraction")]
    pub l_up: Rational64,
    #[serde(rename = "L_down", with = "fraction")]
    pub l_down: Rational64,
    #[serde(rename = "L_up_star", with = "fraction")]
    pub l_up_star: Rational64,
    #[serde(rename = "L_down_star", with = "fraction")]
    pub l_down_star: Rational64,
    /// Earlier N = K scheme, when applicable.
    pub baseline_square: Option<LoadPair>,
    /// Fixed-α upper bound on the hierarchical scheme.
    pub baseline_fixed_alpha: LoadPair,
    pub optimal_up: bool,
    pub optimal_down: bool,
    pub optimal: bool,
}

impl LoadReport {
    /// Formula loads for a placement. `L_up`/`L_down` are the scheme's
    /// loads, which are only achievable when the scheme assembles.
    pub fn compute(p: &Placement, d: &Derived) -> LoadReport {
        Self::with_achieved(p, d, scheme_loads(d))
    }

    /// Report with the scheme loads replaced by measured ones.
    pub fn with_achieved(p: &Placement, d: &Derived, achieved: LoadPair) -> LoadReport {
        let star = lower_bounds(d);
        let optimal_up = achieved.up == star.up;
        let optimal_down = achieved.down == star.down;
        LoadReport {
            sum_r: Rational64::from_integer(d.total_load() as i64),
            r: d.mean_r,
            l_up: achieved.up,
            l_down: achieved.down,
            l_up_star: star.up,
            l_down_star: star.down,
            baseline_square: baseline_square(p).ok(),
            baseline_fixed_alpha: baseline_fixed_alpha(p),
            optimal_up,
            optimal_down,
            optimal: optimal_up && optimal_down,
        }
    }

    pub const CSV_HEADER: [&'static str; 8] = [
        "sum_r",
        "r",
        "L_up",
        "L_up_star",
        "L_down",
        "L_down_star",
        "baseline_up",
        "baseline_down",
    ];

    /// One CSV record in [`Self::CSV_HEADER`] order, fractions as `a/b`.
    pub fn csv_record(&self) -> [String; 8] {
        [
            fraction::display(&self.sum_r),
            fraction::display(&self.r),
            fraction::display(&self.l_up),
            fraction::display(&self.l_up_star),
            fraction::display(&self.l_down),
            fraction::display(&self.l_down_star),
            fraction::display(&self.baseline_fixed_alpha.up),
            fraction::display(&self.baseline_fixed_alpha.down),
        ]
    }
}
