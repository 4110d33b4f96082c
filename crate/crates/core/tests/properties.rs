mod common;

use codedmtl::loads::{baseline_fixed_alpha, baseline_square, lower_bounds, scheme_loads};
use codedmtl::placement::{check_condition1, hall_partition};
use codedmtl::protocol::{run_round, DemoUpdate, RoundOptions};
use codedmtl::scheme::{verify_subspace_dimensions, BuildOptions};
use codedmtl::{ConditionMode, DeriveOptions, Placement, Scheme};
use proptest::prelude::*;

fn placement() -> impl Strategy<Value = Placement> {
    (2usize..=6, 1usize..=8).prop_flat_map(|(k, n)| {
        prop::collection::vec(prop::collection::btree_set(1..=n, 1..=n), k)
            .prop_map(move |z| Placement::new(k, n, z).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn derived_identities(p in placement()) {
        let d = p.derive_with(DeriveOptions { permit_zero_d: true });
        prop_assume!(d.is_ok());
        let d = d.unwrap();
        let sum_r: usize = d.r.iter().sum();
        prop_assert_eq!(d.s, d.k * d.n - sum_r);
        for k in 0..d.k {
            prop_assert_eq!(d.p[k].len(), d.s - d.d[k]);
        }
        prop_assert_eq!(d.lambda, d.p.iter().map(|s| s.len()).max().unwrap());
        prop_assert_eq!(scheme_loads(&d), lower_bounds(&d));
    }

    #[test]
    fn all_subsets_implies_prefix(p in placement()) {
        let Ok(d) = p.derive_with(DeriveOptions { permit_zero_d: true }) else {
            return Ok(());
        };
        let all = check_condition1(&d, ConditionMode::AllSubsets).unwrap();
        let prefix = check_condition1(&d, ConditionMode::Prefix).unwrap();
        prop_assert!(!all.holds || prefix.holds);
        if let Some(v) = all.violation {
            prop_assert!(v.intersection as i64 > v.budget);
        }
    }

    #[test]
    fn hall_partitions_are_valid(p in placement()) {
        let Ok(d) = p.derive() else { return Ok(()) };
        prop_assume!(check_condition1(&d, ConditionMode::AllSubsets).unwrap().holds);
        for k in 1..=d.k {
            let h = hall_partition(&d, k).unwrap();
            h.validate(&d).unwrap();
            prop_assert_eq!(h.blocks.len(), k - 1);
        }
    }

    #[test]
    fn baselines_dominate_bounds(p in placement()) {
        let Ok(d) = p.derive_with(DeriveOptions { permit_zero_d: true }) else {
            return Ok(());
        };
        // a batch nobody stores makes the instance meaningless
        prop_assume!(d.multiplicity[0].is_empty());
        let star = lower_bounds(&d);
        let fixed = baseline_fixed_alpha(&p);
        prop_assert!(fixed.down >= star.down);
        if let Ok(base) = baseline_square(&p) {
            prop_assert!(base.up >= star.up && base.down >= star.down);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn feasible_placements_run_exactly(p in placement(), seed in 0u64..1000, len in 1usize..8) {
        let Ok(d) = p.derive() else { return Ok(()) };
        prop_assume!(check_condition1(&d, ConditionMode::AllSubsets).unwrap().holds);
        let s = Scheme::build(&p, &BuildOptions { seed, ..Default::default() }).unwrap();
        prop_assert!(verify_subspace_dimensions(&s, d.k).unwrap().holds);
        let t = run_round(&p, &s, RoundOptions { payload_seed: seed, update_len: len }, &DemoUpdate).unwrap();
        prop_assert!(t.all_exact && t.loads.optimal);
    }

    #[test]
    fn builds_are_deterministic_and_reload(p in placement(), seed in 0u64..50) {
        let Ok(d) = p.derive() else { return Ok(()) };
        prop_assume!(check_condition1(&d, ConditionMode::AllSubsets).unwrap().holds);
        let opts = BuildOptions { seed, ..Default::default() };
        let a = Scheme::build(&p, &opts).unwrap().to_json().unwrap();
        let b = Scheme::build(&p, &opts).unwrap().to_json().unwrap();
        prop_assert_eq!(&a, &b);
        let back = Scheme::from_json(&a).unwrap();
        prop_assert_eq!(back.to_json().unwrap(), a);
    }
}

#[test]
fn rows_violating_the_condition_cannot_assemble() {
    let opts = BuildOptions {
        permit_zero_d: true,
        ..Default::default()
    };
    for (i, p) in common::k4_n6().iter().enumerate() {
        let d = p
            .derive_with(DeriveOptions {
                permit_zero_d: true,
            })
            .unwrap();
        let holds = check_condition1(&d, ConditionMode::AllSubsets)
            .unwrap()
            .holds;
        assert_eq!(holds, Scheme::build(p, &opts).is_ok(), "row {}", i + 1);
        assert_eq!(holds, ![0, 2].contains(&i), "row {}", i + 1);
    }
}
