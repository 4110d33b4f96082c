//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use codedmtl::error::Error;
use codedmtl::loads::{baseline_fixed_alpha, baseline_square, lower_bounds, scheme_loads};
use codedmtl::lsc::{build_lsc_scheme, run_lsc_round, LscDemand, LscOptions};
use codedmtl::matrix::DEFAULT_SUPERREGULAR_BUDGET;
use codedmtl::placement::{check_condition1, hall_partition};
use codedmtl::protocol::{
    packetize, random_updates, run_round, uplink_encode, DemoUpdate, RoundOptions,
};
use codedmtl::scheme::{cauchy_matrix, verify_subspace_dimensions, BuildOptions, Strategy};
use codedmtl::{ConditionMode, DeriveOptions, FieldSpec, Load, Placement, Scheme};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn criterion(id: usize, name: &str, limit: Duration, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f));
    let elapsed = start.elapsed();
    let (mut ok, detail) = match outcome {
        Ok(Ok(d)) => (true, d),
        Ok(Err(e)) => (false, e),
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        }
    };
    let mut detail = detail;
    if ok && elapsed > limit {
        ok = false;
        detail = format!("over time limit; {detail}");
    }
    println!(
        "{} [{id}] {name} ({:.2?}, limit {:?}): {detail}",
        if ok { "PASS" } else { "FAIL" },
        elapsed,
        limit
    );
    ok
}

struct Instance {
    placement: Placement,
    scheme: Scheme,
}

fn worked_example() -> Check {
    let p = common::worked_example();
    let d = p.derive().map_err(|e| e.to_string())?;
    ensure(d.d == vec![4, 4, 1, 1], || format!("d = {:?}", d.d))?;
    ensure(d.s == 10 && d.lambda == 9, || {
        format!("S = {}, λ = {}", d.s, d.lambda)
    })?;
    let p1: BTreeSet<usize> = [2, 5, 7, 10, 12, 15].into_iter().collect();
    ensure(d.p[0] == p1, || format!("P_1 = {:?}", d.p[0]))?;

    for strategy in [Strategy::Cauchy, Strategy::Vandermonde] {
        let opts = BuildOptions {
            strategy,
            field_degree: Some(5),
            ..Default::default()
        };
        let s = Scheme::build(&p, &opts).map_err(|e| format!("{strategy:?}: {e}"))?;
        ensure(s.field.degree() >= 5, || "field too small".into())?;
        ensure(s.a.rank() == 10, || {
            format!("{strategy:?}: rank A = {}", s.a.rank())
        })?;
        for k in 1..=4 {
            let pk = s.p_block(k);
            for &j in &d.p[k - 1] {
                ensure(pk.is_column_zero(j - 1), || {
                    format!("{strategy:?}: P_{k} column {j} not zero")
                })?;
            }
        }
        let t = run_round(
            &p,
            &s,
            RoundOptions {
                payload_seed: 0,
                update_len: 3,
            },
            &DemoUpdate,
        )
        .map_err(|e| e.to_string())?;
        ensure(t.loads.up == Load::new(10, 3), || {
            format!("L_up = {}", t.loads.up)
        })?;
        ensure(t.loads.down == Load::from_integer(3), || {
            format!("L_down = {}", t.loads.down)
        })?;
        ensure(t.all_exact && t.decodes.iter().all(|r| r.exact), || {
            "inexact decode".into()
        })?;
    }
    Ok("d = (4,4,1,1), S = 10, λ = 9, A invertible, loads (10/3, 3), exact decode (Cauchy and Vandermonde)".into())
}

fn k4_n6_sweep() -> Check {
    let mut failures = Vec::new();
    for (i, p) in common::k4_n6().iter().enumerate() {
        let row = i + 1;
        let d = match p.derive_with(DeriveOptions {
            permit_zero_d: true,
        }) {
            Ok(d) => d,
            Err(e) => {
                failures.push(format!("row {row}: {e}"));
                continue;
            }
        };
        let verdict = check_condition1(&d, ConditionMode::AllSubsets).map_err(|e| e.to_string())?;
        if let Some(v) = &verdict.violation {
            failures.push(format!(
                "row {row}: condition fails for workers {:?} (|∩P| = {} > {})",
                v.workers, v.intersection, v.budget
            ));
        }
        let opts = BuildOptions {
            permit_zero_d: true,
            ..Default::default()
        };
        let outcome = Scheme::build(p, &opts).and_then(|s| {
            run_round(
                p,
                &s,
                RoundOptions {
                    payload_seed: row as u64,
                    update_len: 6,
                },
                &DemoUpdate,
            )
        });
        match outcome {
            Err(e) => failures.push(format!("row {row}: {e}")),
            Ok(t) => {
                let star = lower_bounds(&d);
                if t.loads.up != star.up || t.loads.down != star.down {
                    failures.push(format!(
                        "row {row}: achieved ({}, {}) vs bounds ({}, {})",
                        t.loads.up, t.loads.down, star.up, star.down
                    ));
                }
            }
        }
    }
    if failures.is_empty() {
        Ok("all 10 rows pass the condition and achieve both lower bounds".into())
    } else {
        Err(failures.join("; "))
    }
}

fn random_suite(instances: &[Instance], rng: &mut ChaCha8Rng) -> Check {
    for (i, inst) in instances.iter().enumerate() {
        let p = &inst.placement;
        let opts = RoundOptions {
            payload_seed: rng.gen(),
            update_len: rng.gen_range(1..=9),
        };
        let t = run_round(p, &inst.scheme, opts, &DemoUpdate)
            .map_err(|e| format!("instance {i} {p:?}: {e}"))?;
        let d = &inst.scheme.derived;
        let star = lower_bounds(d);
        ensure(t.all_exact, || format!("instance {i}: inexact decode"))?;
        ensure(t.loads.up == star.up && t.loads.down == star.down, || {
            format!(
                "instance {i}: achieved ({}, {}) vs bounds ({}, {})",
                t.loads.up, t.loads.down, star.up, star.down
            )
        })?;
        ensure(scheme_loads(d) == star, || {
            format!("instance {i}: formula loads differ")
        })?;
    }
    Ok(format!(
        "{} instances assembled, decoded exactly, loads equal bounds",
        instances.len()
    ))
}

fn subspace_suite(instances: &[Instance]) -> Check {
    let mut checks = 0;
    for (i, inst) in instances.iter().enumerate() {
        let report = verify_subspace_dimensions(&inst.scheme, inst.scheme.derived.k)
            .map_err(|e| e.to_string())?;
        report.ensure().map_err(|e| format!("instance {i}: {e}"))?;
        checks += report.checks.len();
    }
    Ok(format!("{checks} intersection dimensions match"))
}

fn hall_suite(instances: &[Instance]) -> Check {
    let mut partitions = 0;
    for (i, inst) in instances.iter().enumerate() {
        let d = &inst.scheme.derived;
        for k in 1..=d.k {
            let h = hall_partition(d, k).map_err(|e| format!("instance {i}, k = {k}: {e}"))?;
            h.validate(d)
                .map_err(|e| format!("instance {i}, k = {k}: {e}"))?;
            partitions += 1;
        }
    }
    // violations: duplicated singleton, and the K = 4, N = 6 row with r = 2
    let dup = Placement::from_sets(2, 2, &[&[1], &[1]])
        .unwrap()
        .derive()
        .unwrap();
    ensure(
        matches!(hall_partition(&dup, 2), Err(Error::HallDeficiency { .. })),
        || "duplicate placement: no deficiency reported".into(),
    )?;
    let row1 = common::k4_n6()[0].derive().unwrap();
    ensure(
        matches!(hall_partition(&row1, 2), Err(Error::HallDeficiency { .. })),
        || "r = 2 row: no deficiency reported at k = 2".into(),
    )?;
    Ok(format!(
        "{partitions} partitions valid; deficiencies reported on 2 violations"
    ))
}

fn mds_oracle() -> Check {
    let f = FieldSpec::new(6).unwrap();
    let mut checked = 0;
    for rows in 1..=6 {
        for cols in 1..=9 {
            for seed in [0, 5] {
                let c = cauchy_matrix(f, rows, cols, seed).map_err(|e| e.to_string())?;
                let ok = c
                    .is_superregular(DEFAULT_SUPERREGULAR_BUDGET)
                    .map_err(|e| e.to_string())?;
                ensure(ok, || {
                    format!("Cauchy {rows}x{cols} seed {seed} not superregular")
                })?;
                checked += 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let mut c = cauchy_matrix(f, 6, 9, rng.gen_range(1..1000)).unwrap();
        c.set(rng.gen_range(0..6), rng.gen_range(0..9), f.zero());
        ensure(
            !c.is_superregular(DEFAULT_SUPERREGULAR_BUDGET).unwrap(),
            || "planted zero passed".into(),
        )?;
    }
    // nonzero entries with a singular 2x2 minor
    let mut c = cauchy_matrix(f, 6, 9, 0).unwrap();
    let v = *c.get(0, 0) * *c.get(1, 1) / *c.get(1, 0);
    c.set(0, 1, v);
    ensure(
        !c.is_superregular(DEFAULT_SUPERREGULAR_BUDGET).unwrap(),
        || "planted singular minor passed".into(),
    )?;
    Ok(format!(
        "{checked} Cauchy matrices up to 6x9 over GF(64) superregular; 21 planted defects rejected"
    ))
}

fn poisoning(instances: &[Instance], rng: &mut ChaCha8Rng) -> Check {
    let mut messages = 0;
    let example = Scheme::build(&common::worked_example(), &BuildOptions::default())
        .map_err(|e| e.to_string())?;
    let all: Vec<&Scheme> = std::iter::once(&example)
        .chain(instances.iter().map(|i| &i.scheme))
        .collect();
    for s in all {
        let d = &s.derived;
        let len = rng.gen_range(1..=6);
        let v = packetize(&random_updates(s.field, d.n, len, rng.gen()), d.k, s.field).unwrap();
        for k in 1..=d.k {
            let clean = uplink_encode(s, k, &v).map_err(|e| e.to_string())?;
            for _ in 0..3 {
                let mut poisoned = v.clone();
                for j in d.missing_columns(k) {
                    for c in 0..poisoned.packet_len() {
                        let sentinel = s.field.element(rng.gen_range(1..s.field.order())).unwrap();
                        poisoned.packets.set(j, c, sentinel);
                    }
                }
                let x = uplink_encode(s, k, &poisoned).map_err(|e| e.to_string())?;
                ensure(x == clean, || {
                    format!("worker {k} output changed under poisoning")
                })?;
                messages += 1;
            }
        }
    }
    // a coefficient on an unavailable packet must be refused
    let mut tampered = example.clone();
    tampered.p.set(0, 1, tampered.field.one());
    let v = packetize(&random_updates(tampered.field, 5, 3, 1), 4, tampered.field).unwrap();
    ensure(
        matches!(
            uplink_encode(&tampered, 1, &v),
            Err(Error::Locality {
                worker: 1,
                packet: 2
            })
        ),
        || "tampered encoder accepted".into(),
    )?;
    Ok(format!(
        "{messages} poisoned encodes unchanged; tampered encoder refused"
    ))
}

fn lsc_suite(rng: &mut ChaCha8Rng) -> Check {
    let mut successes = 0;
    let mut failed_builds = 0;
    let mut attempts = 0;
    while successes < 50 {
        attempts += 1;
        if attempts > 5000 {
            return Err(format!(
                "only {successes} constructions after 5000 attempts"
            ));
        }
        let p = common::random_feasible(rng, 1, 2..=4, 2..=6).remove(0);
        let d = p.derive().unwrap();
        let max_nc = 3.min(d.n).min(d.s / (d.k - 1));
        if max_nc == 0 {
            continue;
        }
        let demand = LscDemand::random(rng.gen_range(1..=max_nc), rng.gen());
        let opts = LscOptions {
            seed: rng.gen(),
            ..Default::default()
        };
        let lsc = match build_lsc_scheme(&p, &demand, &opts) {
            Ok(l) => l,
            Err(Error::Construction(_) | Error::SingularEncoder { .. }) => {
                failed_builds += 1;
                continue;
            }
            Err(e) => return Err(format!("{p:?}: {e}")),
        };
        let t = run_lsc_round(&lsc, rng.gen(), rng.gen_range(1..=8))
            .map_err(|e| format!("{p:?}: {e}"))?;
        ensure(t.matches_oracle, || "oracle mismatch".into())?;
        ensure(t.l_up == Load::new(d.s as i64, d.k as i64 - 1), || {
            format!("L_up = {}", t.l_up)
        })?;
        successes += 1;
    }
    // N_c (K - 1) > S
    let p = common::worked_example();
    ensure(
        matches!(
            build_lsc_scheme(&p, &LscDemand::random(4, 0), &LscOptions::default()),
            Err(Error::InvalidDemand(_))
        ),
        || "row budget violation accepted".into(),
    )?;
    Ok(format!(
        "50 rounds equal F v exactly ({failed_builds} random demands failed construction); row-budget violation rejected"
    ))
}

fn baseline_ordering(instances: &[Instance]) -> Check {
    let mut square: Vec<Placement> = instances
        .iter()
        .map(|i| i.placement.clone())
        .filter(|p| p.workers() == p.batches())
        .collect();
    square.push(Placement::from_sets(4, 4, &[&[1, 2], &[2, 3], &[3, 4], &[4, 1]]).unwrap());
    square.push(Placement::from_sets(3, 3, &[&[1], &[2], &[3]]).unwrap());
    square.push(Placement::from_sets(3, 3, &[&[1, 2], &[2, 3], &[1, 3]]).unwrap());
    for p in &square {
        let star = lower_bounds(
            &p.derive_with(DeriveOptions {
                permit_zero_d: true,
            })
            .unwrap(),
        );
        let base = baseline_square(p).unwrap();
        ensure(base.up >= star.up && base.down >= star.down, || {
            format!(
                "{p:?}: baseline ({}, {}) below bounds ({}, {})",
                base.up, base.down, star.up, star.down
            )
        })?;
    }
    for (i, p) in common::k4_n6().iter().enumerate() {
        let d = p
            .derive_with(DeriveOptions {
                permit_zero_d: true,
            })
            .unwrap();
        let ours = scheme_loads(&d);
        let fixed = baseline_fixed_alpha(p);
        ensure(fixed.down >= ours.down, || {
            format!(
                "row {}: fixed-α downlink {} < ours {}",
                i + 1,
                fixed.down,
                ours.down
            )
        })?;
        if d.mean_r == Load::from_integer(3) {
            ensure(fixed.down == ours.down && fixed.up == ours.up, || {
                format!(
                    "r = 3 row: fixed-α ({}, {}) vs ours ({}, {})",
                    fixed.up, fixed.down, ours.up, ours.down
                )
            })?;
        }
    }
    Ok(format!(
        "{} N = K placements above bounds; fixed-α downlink >= ours on all 10 rows, equal at r = 3",
        square.len()
    ))
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut results = Vec::new();

    results.push(criterion(
        1,
        "worked example end to end",
        Duration::from_secs(1),
        worked_example,
    ));
    results.push(criterion(
        2,
        "K = 4, N = 6 sweep achieves both bounds",
        Duration::from_secs(5),
        k4_n6_sweep,
    ));

    let build_start = Instant::now();
    let placements = common::random_feasible(&mut rng, 200, 2..=6, 2..=8);
    let mut instances = Vec::with_capacity(placements.len());
    let mut build_error = None;
    for p in placements {
        match Scheme::build(
            &p,
            &BuildOptions {
                seed: rng.gen_range(0..4),
                ..Default::default()
            },
        ) {
            Ok(scheme) => instances.push(Instance {
                placement: p,
                scheme,
            }),
            Err(e) => {
                build_error.get_or_insert(format!("{p:?}: {e}"));
            }
        }
    }
    let build_time = build_start.elapsed();
    results.push(criterion(
        3,
        "random placements assemble and decode",
        Duration::from_secs(120),
        || {
            if let Some(e) = &build_error {
                return Err(format!("assembly failed: {e}"));
            }
            random_suite(&instances, &mut rng).map(|s| format!("{s} (assembly {build_time:.2?})"))
        },
    ));
    results.push(criterion(
        4,
        "intersection dimensions",
        Duration::from_secs(60),
        || subspace_suite(&instances),
    ));
    results.push(criterion(
        5,
        "matching partitions",
        Duration::from_secs(30),
        || hall_suite(&instances),
    ));
    results.push(criterion(
        6,
        "superregularity oracle",
        Duration::from_secs(60),
        mds_oracle,
    ));
    results.push(criterion(
        7,
        "encode locality under poisoning",
        Duration::from_secs(10),
        || poisoning(&instances, &mut rng),
    ));
    results.push(criterion(
        8,
        "linearly separable computation",
        Duration::from_secs(30),
        || lsc_suite(&mut rng),
    ));
    results.push(criterion(
        9,
        "baseline ordering",
        Duration::from_secs(5),
        || baseline_ordering(&instances),
    ));

    let passed = results.iter().filter(|&&ok| ok).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
