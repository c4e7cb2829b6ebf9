mod error;

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use drfs_core::dataset::{parse_csv, parse_libsvm, standardize, LabelColumn};
use drfs_core::grid::{lambda_from_ratio, write_grid_csv, GridSpec};
use drfs_core::{
    build_reference, fit_weighted_erm, lambda_max, run_grid, screen, verify_no_false_elimination,
    Dataset, FitConfig, FittedModel, GapTolerance, LossKind, ScreeningReport, Task, WeightBox,
};
use serde::Serialize;

use crate::error::CliError;

type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Parser)]
#[command(
    name = "drfs",
    version,
    about = "Safe feature screening under bounded weight shift"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the L1-regularized model with unit (or given) weights.
    Solve(SolveArgs),
    /// Print the smallest penalty giving an all-zero coefficient vector.
    LambdaMax(DataArgs),
    /// Screen features for every weighting within the uncertainty box.
    Screen(ScreenArgs),
    /// Removed-feature ratios over a grid of V and penalty ratios.
    Grid(GridArgs),
    /// Screen, then re-solve under sampled weightings to check for false removals.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Libsvm,
    Csv,
}

#[derive(Debug, Args)]
struct DataArgs {
    input: PathBuf,
    /// Input format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Label column for CSV input: a 0-based index or a header name.
    #[arg(long, default_value = "0")]
    label_column: String,
    #[arg(long, default_value = "squared", value_parser = parse_loss)]
    loss: LossKind,
    /// Skip centering and scaling of the features.
    #[arg(long)]
    no_standardize: bool,
}

#[derive(Debug, Args)]
struct LambdaArgs {
    /// Penalty as a multiple of lambda_max.
    #[arg(long, default_value_t = 0.1, conflicts_with = "lambda_absolute")]
    lambda_ratio: f64,
    #[arg(long)]
    lambda_absolute: Option<f64>,
}

#[derive(Debug, Args)]
struct TolArgs {
    /// Duality-gap tolerance relative to the intercept-only objective.
    #[arg(long, default_value_t = 1e-9)]
    gap_tol: f64,
    /// Absolute duality-gap tolerance; overrides --gap-tol.
    #[arg(long)]
    gap_tol_absolute: Option<f64>,
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
}

impl TolArgs {
    fn config(&self) -> FitConfig {
        let tol = match self.gap_tol_absolute {
            Some(g) => GapTolerance::Absolute(g),
            None => GapTolerance::Relative(self.gap_tol),
        };
        FitConfig {
            max_iterations: self.max_iter,
            ..FitConfig::default()
        }
        .with_gap_tolerance(tol)
    }
}

#[derive(Debug, Args)]
struct BoxArgs {
    /// Uncertainty size: the largest L1 distance of a weighting from all-ones.
    #[arg(long = "V", default_value_t = 0.0, conflicts_with = "delta")]
    v: f64,
    /// Per-instance half-width of the weight box; alternative to --V.
    #[arg(long)]
    delta: Option<f64>,
}

impl BoxArgs {
    fn weight_box(&self, n: usize) -> Result<WeightBox> {
        Ok(match self.delta {
            Some(d) => WeightBox::new(n, d)?,
            None => WeightBox::from_v(self.v, n)?,
        })
    }
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    lambda: LambdaArgs,
    #[command(flatten)]
    tol: TolArgs,
    /// File with one positive weight per instance.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScreenArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    lambda: LambdaArgs,
    #[command(flatten)]
    tol: TolArgs,
    #[command(flatten)]
    uncertainty: BoxArgs,
    /// Report JSON destination (stdout when omitted).
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Also write per-feature bounds as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GridArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    tol: TolArgs,
    /// Comma-separated V values (default: 0 and 1e-5 .. 1 in half decades).
    #[arg(long = "V-values", value_delimiter = ',')]
    v_values: Option<Vec<f64>>,
    /// Comma-separated ratios of lambda_max (default: 1 .. 1e-2 in half decades).
    #[arg(long, value_delimiter = ',')]
    lambda_ratios: Option<Vec<f64>>,
    /// CSV destination (stdout when omitted).
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    lambda: LambdaArgs,
    #[command(flatten)]
    tol: TolArgs,
    #[command(flatten)]
    uncertainty: BoxArgs,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    #[arg(long, env = "DRFS_SEED", default_value_t = 0)]
    seed: u64,
    /// Mark the largest active coefficient as removed; the run must then fail.
    #[arg(long)]
    self_test: bool,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    s.parse::<LossKind>().map_err(|e| e.to_string())
}

fn load(args: &DataArgs) -> Result<Dataset> {
    let path = &args.input;
    let file = File::open(path).map_err(|source| CliError::Read {
        path: path.clone(),
        source,
    })?;
    let task = match args.loss {
        LossKind::Squared => Task::Regression,
        LossKind::Logistic => Task::BinaryClassification,
    };
    let format = args
        .format
        .unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Libsvm,
        });
    let reader = BufReader::new(file);
    let parsed = match format {
        Format::Libsvm => parse_libsvm(reader, task),
        Format::Csv => {
            let label = match args.label_column.parse::<usize>() {
                Ok(i) => LabelColumn::Index(i),
                Err(_) => LabelColumn::Name(args.label_column.clone()),
            };
            parse_csv(reader, &label, task)
        }
    };
    let ds = parsed.map_err(|source| CliError::Load {
        path: path.clone(),
        source,
    })?;
    if args.no_standardize {
        return Ok(ds);
    }
    let (ds, report) = standardize(&ds)?;
    if !report.dropped_constant.is_empty() {
        eprintln!(
            "dropped constant columns (0-based): {:?}",
            report.dropped_constant
        );
    }
    Ok(ds)
}

fn resolve_lambda(args: &LambdaArgs, lmax: f64) -> Result<f64> {
    match args.lambda_absolute {
        Some(l) if l > 0.0 && l.is_finite() => Ok(l),
        Some(l) => Err(CliError::Usage(format!(
            "--lambda-absolute must be > 0, got {l}"
        ))),
        None => {
            lambda_from_ratio(args.lambda_ratio, lmax).map_err(|e| CliError::Usage(e.to_string()))
        }
    }
}

fn read_weights(path: &Path, n: usize) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let w = text
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| CliError::Usage(format!("{}: bad weight {tok:?}", path.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    if w.len() != n {
        return Err(CliError::Usage(format!(
            "{}: {} weights for {n} instances",
            path.display(),
            w.len()
        )));
    }
    Ok(w)
}

/// Writes to `path`, or to stdout when no path is given.
fn emit(path: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<()> {
    let res = match path {
        Some(p) => File::create(p).and_then(|f| {
            let mut out = BufWriter::new(f);
            write(&mut out)?;
            out.flush()
        }),
        None => {
            let stdout = io::stdout();
            let mut out = stdout.lock();
            write(&mut out).and_then(|_| out.flush())
        }
    };
    res.map_err(|source| CliError::Write {
        path: path.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf),
        source,
    })
}

fn emit_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("output serializes");
    emit(path, |out| writeln!(out, "{text}"))
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    loss: LossKind,
    lambda: f64,
    lambda_max: f64,
    b: &'a [f64],
    b0: f64,
    gap: f64,
    gap_tolerance: f64,
    iterations: usize,
    support: Vec<usize>,
}

fn fit_unit(ds: &Dataset, loss: LossKind, lambda: f64, tol: &TolArgs) -> Result<FittedModel> {
    let ones = vec![1.0; ds.n()];
    Ok(fit_weighted_erm(ds, &ones, loss, lambda, &tol.config())?)
}

fn cmd_solve(args: &SolveArgs) -> Result<()> {
    let ds = load(&args.data)?;
    let loss = args.data.loss;
    let w = match &args.weights {
        Some(p) => read_weights(p, ds.n())?,
        None => vec![1.0; ds.n()],
    };
    let lmax = lambda_max(&ds, &w, loss)?;
    let lambda = resolve_lambda(&args.lambda, lmax)?;
    let m = fit_weighted_erm(&ds, &w, loss, lambda, &args.tol.config())?;
    emit_json(
        args.output.as_deref(),
        &SolveOutput {
            loss,
            lambda,
            lambda_max: lmax,
            b: &m.b,
            b0: m.b0,
            gap: m.gap,
            gap_tolerance: m.gap_tolerance,
            iterations: m.iterations,
            support: m.support(),
        },
    )
}

fn cmd_lambda_max(args: &DataArgs) -> Result<()> {
    let ds = load(args)?;
    let lmax = lambda_max(&ds, &vec![1.0; ds.n()], args.loss)?;
    emit(None, |out| writeln!(out, "{lmax}"))
}

fn screened(
    data: &DataArgs,
    lambda: &LambdaArgs,
    tol: &TolArgs,
    uncertainty: &BoxArgs,
) -> Result<(Dataset, f64, WeightBox, FittedModel, ScreeningReport)> {
    let ds = load(data)?;
    let wbox = uncertainty.weight_box(ds.n())?;
    let lmax = lambda_max(&ds, &vec![1.0; ds.n()], data.loss)?;
    let lam = resolve_lambda(lambda, lmax)?;
    let model = fit_unit(&ds, data.loss, lam, tol)?;
    let reference = build_reference(&model, &ds, data.loss, &wbox)?;
    let report = screen(&ds, &reference, lam, &wbox)?;
    Ok((ds, lam, wbox, model, report))
}

fn cmd_screen(args: &ScreenArgs) -> Result<()> {
    let (_, _, _, _, report) = screened(&args.data, &args.lambda, &args.tol, &args.uncertainty)?;
    emit_json(args.output.as_deref(), &report)?;
    if let Some(p) = &args.csv {
        emit(Some(p), |out| report.write_csv(out))?;
    }
    eprintln!(
        "removed {}/{} features (ratio {})",
        report.removed_count(),
        report.removed.len(),
        report.removed_ratio()
    );
    Ok(())
}

fn cmd_grid(args: &GridArgs) -> Result<()> {
    let ds = load(&args.data)?;
    let mut spec = GridSpec::standard(args.data.loss);
    if let Some(v) = &args.v_values {
        spec.v_values.clone_from(v);
    }
    if let Some(r) = &args.lambda_ratios {
        spec.lambda_ratios.clone_from(r);
    }
    spec.validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let rows = run_grid(&ds, &spec, &args.tol.config())?;
    emit(args.output.as_deref(), |out| write_grid_csv(&rows, out))
}

fn cmd_verify(args: &VerifyArgs) -> Result<()> {
    let (ds, lam, wbox, model, mut report) =
        screened(&args.data, &args.lambda, &args.tol, &args.uncertainty)?;
    if args.self_test {
        let (j, _) = model
            .b
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .ok_or_else(|| {
                CliError::Usage("--self-test needs at least one active feature".into())
            })?;
        report.removed[j] = true;
        eprintln!("self-test: feature {j} marked as removed");
    }
    let outcome = verify_no_false_elimination(
        &ds,
        args.data.loss,
        lam,
        &wbox,
        &report,
        args.trials as usize,
        args.seed,
    )?;
    emit_json(args.output.as_deref(), &outcome)?;
    if let Some(v) = outcome.violations.first() {
        return Err(CliError::Violation(format!(
            "{} violation(s); first: feature {} has |b| = {:e} under weights\n{:?}",
            outcome.violations.len(),
            v.feature,
            v.coefficient,
            v.weights
        )));
    }
    if !outcome.inconclusive.is_empty() {
        return Err(CliError::Inconclusive(format!(
            "{} trial(s) did not converge",
            outcome.inconclusive.len()
        )));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::LambdaMax(a) => cmd_lambda_max(a),
        Command::Screen(a) => cmd_screen(a),
        Command::Grid(a) => cmd_grid(a),
        Command::Verify(a) => cmd_verify(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
