use std::path::{Path, PathBuf};

use codedmtl::placement::check_condition1;
use codedmtl::protocol::{run_round, DemoUpdate, RoundOptions};
use codedmtl::scheme::BuildOptions;
use codedmtl::{ConditionMode, LoadPair, LoadReport, Placement, Scheme, Strategy};
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::json;

use crate::{emit, load_placement, read, CmdResult, Failure, Global};

/// `{"placements": [...], "strategy": "cauchy", "seeds": [0], ...}`.
/// Placement entries are file paths (relative to the spec) or inline objects.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSpec {
    placements: Vec<Entry>,
    #[serde(default)]
    strategy: Option<Strategy>,
    #[serde(default = "default_seeds")]
    seeds: Vec<u64>,
    #[serde(default)]
    update_len: Option<usize>,
    #[serde(default)]
    permit_zero_d: bool,
    #[serde(default)]
    output: Option<PathBuf>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Entry {
    Path(PathBuf),
    Inline(Placement),
}

struct Row {
    label: String,
    report: Option<LoadReport>,
    error: Option<codedmtl::Error>,
}

fn evaluate(p: &Placement, opts: &BuildOptions, seeds: &[u64], update_len: Option<usize>) -> Row {
    let mut row = Row {
        label: String::new(),
        report: None,
        error: None,
    };
    let d = match p.derive_with(codedmtl::DeriveOptions {
        permit_zero_d: opts.permit_zero_d,
    }) {
        Ok(d) => d,
        Err(e) => {
            row.error = Some(e);
            return row;
        }
    };
    row.report = Some(LoadReport::compute(p, &d));
    let achieved = (|| {
        let verdict = check_condition1(&d, ConditionMode::AllSubsets)?;
        if let Some(v) = verdict.violation {
            return Err(codedmtl::Error::Property(format!(
                "condition fails for workers {:?}: intersection {} > budget {}",
                v.workers, v.intersection, v.budget
            )));
        }
        let scheme = Scheme::build(p, opts)?;
        let mut achieved: Option<LoadPair> = None;
        for &seed in seeds {
            let round = RoundOptions {
                payload_seed: seed,
                update_len: update_len.unwrap_or(d.k - 1),
            };
            let t = run_round(p, &scheme, round, &DemoUpdate)?;
            let loads = LoadPair {
                up: t.loads.up,
                down: t.loads.down,
            };
            if achieved.is_some_and(|a| a != loads) {
                return Err(codedmtl::Error::Property(
                    "achieved loads differ between seeds".into(),
                ));
            }
            achieved = Some(loads);
        }
        achieved.ok_or_else(|| codedmtl::Error::Protocol("sweep has no seeds".into()))
    })();
    match achieved {
        Ok(a) => row.report = Some(LoadReport::with_achieved(p, &d, a)),
        Err(e) => row.error = Some(e),
    }
    row
}

pub(crate) fn cmd_sweep(g: &Global, path: &Path, output: Option<&Path>) -> CmdResult {
    let spec: SweepSpec = serde_json::from_str(&read(path)?)
        .map_err(|e| Failure::input("json", format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut placements = Vec::with_capacity(spec.placements.len());
    for (i, entry) in spec.placements.into_iter().enumerate() {
        placements.push(match entry {
            Entry::Path(rel) => {
                let full = base.join(&rel);
                (rel.display().to_string(), load_placement(&full)?)
            }
            Entry::Inline(p) => (format!("#{}", i + 1), p),
        });
    }
    let opts = BuildOptions {
        strategy: spec.strategy.unwrap_or(g.strategy.into()),
        permit_zero_d: spec.permit_zero_d || g.permit_zero_d,
        ..g.build_options()
    };
    let rows: Vec<Row> = placements
        .par_iter()
        .map(|(label, p)| Row {
            label: label.clone(),
            ..evaluate(p, &opts, &spec.seeds, spec.update_len)
        })
        .collect();

    let mut w = csv::Writer::from_writer(Vec::new());
    let io_err = |e: csv::Error| Failure::input("io", e.to_string());
    w.write_record(LoadReport::CSV_HEADER).map_err(io_err)?;
    let mut failed = 0;
    for row in &rows {
        let mut record = match &row.report {
            Some(r) => r.csv_record(),
            None => Default::default(),
        };
        if let Some(e) = &row.error {
            failed += 1;
            // achieved loads are unknown for a failed row
            record[2].clear();
            record[4].clear();
            eprintln!(
                "{}",
                json!({ "placement": row.label, "error": e.kind(), "message": e.to_string() })
            );
        }
        w.write_record(&record).map_err(io_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Failure::input("io", e.to_string()))?;
    let out = output
        .map(Path::to_path_buf)
        .or(spec.output.map(|o| base.join(o)));
    emit(
        out.as_deref(),
        &String::from_utf8(bytes).expect("utf-8 csv"),
    )?;
    if failed > 0 {
        return Err(Failure::domain(
            "sweep_failed",
            format!("{failed} of {} placements failed", rows.len()),
        ));
    }
    Ok(())
}
