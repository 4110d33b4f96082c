#![allow(dead_code)]

use std::ops::RangeInclusive;

use codedmtl::placement::check_condition1;
use codedmtl::{ConditionMode, Placement};
use rand::seq::SliceRandom;
use rand::Rng;

/// Ten K = 4, N = 6 placements with total load 8 through 17.
pub const K4_N6: [[&[usize]; 4]; 10] = [
    [&[1, 2], &[1, 4], &[2, 6], &[3, 5]],
    [&[1, 2, 3], &[1, 4], &[2, 6], &[3, 5]],
    [&[1, 2, 3], &[1, 4, 5], &[2, 6], &[3, 5]],
    [&[1, 2, 3], &[1, 4, 5], &[2, 4, 6], &[3, 5]],
    [&[1, 2, 3], &[1, 4, 5], &[2, 4, 6], &[3, 5, 6]],
    [&[1, 2, 3], &[1, 4, 5], &[1, 2, 4, 6], &[3, 5, 6]],
    [&[1, 2, 3], &[1, 4, 5], &[1, 2, 4, 6], &[2, 3, 5, 6]],
    [&[1, 2, 3], &[1, 3, 4, 5], &[1, 2, 4, 6], &[2, 3, 5, 6]],
    [&[1, 2, 3, 4], &[1, 3, 4, 5], &[1, 2, 4, 6], &[2, 3, 5, 6]],
    [
        &[1, 2, 3, 4],
        &[1, 3, 4, 5],
        &[1, 2, 4, 5, 6],
        &[2, 3, 5, 6],
    ],
];

pub fn k4_n6() -> Vec<Placement> {
    K4_N6
        .iter()
        .map(|z| Placement::from_sets(4, 6, z).unwrap())
        .collect()
}

pub fn worked_example() -> Placement {
    Placement::from_sets(4, 5, &[&[1, 3, 4], &[1, 2, 5], &[2, 4], &[3, 5]]).unwrap()
}

/// Each worker stores a uniformly sized, uniformly chosen nonempty subset.
pub fn random_placement<R: Rng>(
    rng: &mut R,
    k: RangeInclusive<usize>,
    n: RangeInclusive<usize>,
) -> Placement {
    let k = rng.gen_range(k);
    let n = rng.gen_range(n);
    let batches: Vec<usize> = (1..=n).collect();
    let z = (0..k)
        .map(|_| {
            let r = rng.gen_range(1..=n);
            batches.choose_multiple(rng, r).copied().collect()
        })
        .collect();
    Placement::new(k, n, z).unwrap()
}

/// Random placements with every `d_k > 0` that pass the all-subsets check.
pub fn random_feasible<R: Rng>(
    rng: &mut R,
    count: usize,
    k: RangeInclusive<usize>,
    n: RangeInclusive<usize>,
) -> Vec<Placement> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let p = random_placement(rng, k.clone(), n.clone());
        let Ok(d) = p.derive() else { continue };
        if check_condition1(&d, ConditionMode::AllSubsets)
            .unwrap()
            .holds
        {
            out.push(p);
        }
    }
    out
}
