use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use codedmtl::lsc::{self, LscDemand, LscOptions};
use codedmtl::matrix::DEFAULT_SUPERREGULAR_BUDGET;
use codedmtl::placement::{check_condition1, Verdict};
use codedmtl::protocol::{run_round, DemoUpdate, RoundOptions};
use codedmtl::scheme::{matrix_from_rows, BuildOptions, SchemeKind};
use codedmtl::{ConditionMode, DeriveOptions, FieldSpec, LoadReport, Placement, Scheme, Strategy};
use serde::{Deserialize, Serialize};
use serde_json::json;

mod sweep;

#[derive(Parser)]
#[command(
    name = "codedmtl",
    version,
    about = "Coded uplink/downlink scheme for distributed multi-task learning"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct Global {
    /// Force the extension degree m of GF(2^m).
    #[arg(long, global = true)]
    field_degree: Option<u32>,
    #[arg(long, global = true, value_enum, default_value_t = StrategyArg::Cauchy)]
    strategy: StrategyArg,
    /// Seed for the Cauchy node labels of the downlink matrix.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Allow workers with d_k = 0; they send nothing.
    #[arg(long, global = true)]
    permit_zero_d: bool,
}

impl Global {
    fn build_options(&self) -> BuildOptions {
        BuildOptions {
            strategy: self.strategy.into(),
            seed: self.seed,
            field_degree: self.field_degree,
            permit_zero_d: self.permit_zero_d,
        }
    }

    fn derive_options(&self) -> DeriveOptions {
        DeriveOptions {
            permit_zero_d: self.permit_zero_d,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Cauchy,
    Vandermonde,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Strategy {
        match s {
            StrategyArg::Cauchy => Strategy::Cauchy,
            StrategyArg::Vandermonde => Strategy::Vandermonde,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Prefix,
    All,
}

impl From<ModeArg> for ConditionMode {
    fn from(m: ModeArg) -> ConditionMode {
        match m {
            ModeArg::Prefix => ConditionMode::Prefix,
            ModeArg::All => ConditionMode::AllSubsets,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Check the intersection condition on a placement.
    Check {
        placement: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::All)]
        mode: ModeArg,
    },
    /// Lower bounds, scheme loads and baselines.
    Loads {
        placement: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Build and verify a scheme.
    Build {
        placement: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Attempt assembly even if the condition fails.
        #[arg(long)]
        no_check: bool,
    },
    /// Simulate one round with a saved scheme.
    Simulate {
        scheme: PathBuf,
        #[arg(long, default_value_t = 0)]
        payload_seed: u64,
        /// Logical update length E (default K - 1).
        #[arg(long)]
        update_len: Option<usize>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Build and simulate a list of placements, writing a load CSV.
    Sweep {
        spec: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Uplink-only linearly separable computation round.
    Lsc {
        placement: PathBuf,
        demand: PathBuf,
        #[arg(long, default_value_t = 0)]
        payload_seed: u64,
        #[arg(long)]
        update_len: Option<usize>,
        /// Extra construction attempts with fresh seeds.
        #[arg(long, default_value_t = 0)]
        retries: u32,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Exhaustively check that every square submatrix is invertible.
    MdsVerify {
        matrix: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SUPERREGULAR_BUDGET)]
        budget: u128,
    },
}

#[derive(Debug)]
enum Failure {
    /// Malformed input or unsupported parameters (exit 2).
    Input { kind: &'static str, message: String },
    /// The input is fine but a condition or verification failed (exit 1).
    Domain { kind: &'static str, message: String },
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Domain { .. } => 1,
            Failure::Input { .. } => 2,
        }
    }

    fn report(&self) {
        let (kind, message) = match self {
            Failure::Input { kind, message } | Failure::Domain { kind, message } => (kind, message),
        };
        let body = json!({ "error": kind, "message": message, "exit_code": self.code() });
        eprintln!("{body}");
    }

    fn input(kind: &'static str, message: impl Into<String>) -> Failure {
        Failure::Input {
            kind,
            message: message.into(),
        }
    }

    fn domain(kind: &'static str, message: impl Into<String>) -> Failure {
        Failure::Domain {
            kind,
            message: message.into(),
        }
    }
}

impl From<codedmtl::Error> for Failure {
    fn from(e: codedmtl::Error) -> Failure {
        if e.is_input_error() {
            Failure::input(e.kind(), e.to_string())
        } else {
            Failure::domain(e.kind(), e.to_string())
        }
    }
}

type CmdResult = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::input("io", format!("{}: {e}", path.display())))
}

fn load_placement(path: &Path) -> Result<Placement, Failure> {
    Placement::from_json(&read(path)?).map_err(|e| match e {
        codedmtl::Error::Json(j) => Failure::input("json", format!("{}: {j}", path.display())),
        other => other.into(),
    })
}

fn emit(output: Option<&Path>, text: &str) -> CmdResult {
    match output {
        Some(path) => fs::write(path, text)
            .map_err(|e| Failure::input("io", format!("{}: {e}", path.display()))),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::input("io", e.to_string())),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            f.report();
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> CmdResult {
    let g = cli.global;
    match cli.command {
        Command::Check { placement, mode } => cmd_check(&g, &placement, mode.into()),
        Command::Loads { placement, format } => cmd_loads(&g, &placement, format),
        Command::Build {
            placement,
            output,
            no_check,
        } => cmd_build(&g, &placement, output.as_deref(), no_check),
        Command::Simulate {
            scheme,
            payload_seed,
            update_len,
            output,
        } => cmd_simulate(&scheme, payload_seed, update_len, output.as_deref()),
        Command::Sweep { spec, output } => sweep::cmd_sweep(&g, &spec, output.as_deref()),
        Command::Lsc {
            placement,
            demand,
            payload_seed,
            update_len,
            retries,
            output,
        } => cmd_lsc(
            &g,
            &placement,
            &demand,
            payload_seed,
            update_len,
            retries,
            output.as_deref(),
        ),
        Command::MdsVerify { matrix, budget } => cmd_mds_verify(&matrix, budget),
    }
}

fn violation_failure(v: &Verdict) -> Failure {
    let w = v.violation.as_ref().expect("failed verdict has a witness");
    Failure::domain(
        "condition_violated",
        format!(
            "intersection of P over workers {:?} has {} packets, budget {}",
            w.workers, w.intersection, w.budget
        ),
    )
}

fn cmd_check(g: &Global, path: &Path, mode: ConditionMode) -> CmdResult {
    let p = load_placement(path)?;
    let d = p.derive_with(g.derive_options())?;
    let verdict = check_condition1(&d, mode)?;
    emit(None, &to_json(&verdict))?;
    if verdict.holds {
        Ok(())
    } else {
        Err(violation_failure(&verdict))
    }
}

fn cmd_loads(g: &Global, path: &Path, format: Format) -> CmdResult {
    let p = load_placement(path)?;
    let d = p.derive_with(g.derive_options())?;
    let report = LoadReport::compute(&p, &d);
    match format {
        Format::Json => emit(None, &to_json(&report)),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let io_err = |e: csv::Error| Failure::input("io", e.to_string());
            w.write_record(LoadReport::CSV_HEADER).map_err(io_err)?;
            w.write_record(report.csv_record()).map_err(io_err)?;
            let bytes = w
                .into_inner()
                .map_err(|e| Failure::input("io", e.to_string()))?;
            emit(None, &String::from_utf8(bytes).expect("utf-8 csv"))
        }
    }
}

fn cmd_build(g: &Global, path: &Path, output: Option<&Path>, no_check: bool) -> CmdResult {
    let p = load_placement(path)?;
    if !no_check {
        let d = p.derive_with(g.derive_options())?;
        let verdict = check_condition1(&d, ConditionMode::AllSubsets)?;
        if !verdict.holds {
            return Err(violation_failure(&verdict));
        }
    }
    let scheme = Scheme::build(&p, &g.build_options())?;
    emit(output, &(scheme.to_json()? + "\n"))
}

fn cmd_simulate(
    path: &Path,
    payload_seed: u64,
    update_len: Option<usize>,
    output: Option<&Path>,
) -> CmdResult {
    let scheme = Scheme::from_json(&read(path)?)?;
    if scheme.kind != SchemeKind::Dmtl {
        return Err(Failure::input(
            "unsupported",
            "uplink-only schemes are simulated with the lsc command",
        ));
    }
    let opts = RoundOptions {
        payload_seed,
        update_len: update_len.unwrap_or(scheme.derived.k - 1),
    };
    let transcript = run_round(&scheme.placement, &scheme, opts, &DemoUpdate)?;
    emit(output, &to_json(&transcript))
}

fn cmd_lsc(
    g: &Global,
    placement: &Path,
    demand: &Path,
    payload_seed: u64,
    update_len: Option<usize>,
    retries: u32,
    output: Option<&Path>,
) -> CmdResult {
    let p = load_placement(placement)?;
    let demand = LscDemand::from_json(&read(demand)?)?;
    let opts = LscOptions {
        seed: g.seed,
        field_degree: g.field_degree,
        permit_zero_d: g.permit_zero_d,
        retries,
    };
    let scheme = lsc::build_lsc_scheme(&p, &demand, &opts)?;
    let len = update_len.unwrap_or(p.workers() - 1);
    let transcript = lsc::run_lsc_round(&scheme, payload_seed, len)?;
    emit(output, &to_json(&transcript))
}

#[derive(Deserialize)]
struct MatrixDoc {
    field_degree: u32,
    entries: Vec<Vec<u32>>,
}

fn cmd_mds_verify(path: &Path, budget: u128) -> CmdResult {
    let doc: MatrixDoc = serde_json::from_str(&read(path)?)
        .map_err(|e| Failure::input("json", format!("{}: {e}", path.display())))?;
    let field = FieldSpec::new(doc.field_degree)?;
    let cols = doc.entries.first().map_or(0, Vec::len);
    let m = matrix_from_rows(field, &doc.entries, cols)?;
    let superregular = m.is_superregular(budget)?;
    let body = json!({
        "rows": m.rows(),
        "cols": m.cols(),
        "sub_squares": m.sub_square_count().to_string(),
        "superregular": superregular,
    });
    emit(None, &to_json(&body))?;
    if superregular {
        Ok(())
    } else {
        Err(Failure::domain(
            "not_superregular",
            "a square submatrix is singular",
        ))
    }
}
