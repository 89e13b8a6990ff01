//! `oed`: pool-based experimental design from the command line.
//!
//! Pipeline: `gram` turns a pool CSV into a binary Gram file, `select` builds
//! a design from a Gram, `evaluate` scores a design with ridge regression,
//! and `experiment` runs the built-in studies.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use oed_core::experiments::kernel_design_method_tag;
use oed_core::nalgebra::DMatrix;
use oed_core::regression::one_hot;
use oed_core::selection::{DesignResult, Subsample};
use oed_core::{
    greedy_fast, greedy_naive, make_gram, ridge_fit, run_double_descent, run_kernel_design,
    run_t_study, select_k_centers_gram, select_random, select_variance_only, test_mse,
    CriterionParams, DoubleDescentConfig, GramMatrix, GreedyOptions, KernelDesignConfig,
    KernelSpec, PoolMatrix, TStudyConfig, TStudyDataset, Tradeoff,
};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "oed",
    about = "Experimental design for overparameterized regression",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a Gram matrix from a pool CSV and write it in binary form.
    Gram(GramArgs),
    /// Select a design from a precomputed Gram matrix.
    Select(SelectArgs),
    /// Fit ridge regression on a design and report test MSE.
    Evaluate(EvaluateArgs),
    /// Run a built-in experiment.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Copy, Clone, ValueEnum)]
enum KernelName {
    Linear,
    Rbf,
    Poly,
    NtkFc,
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long, value_enum)]
    kernel: KernelName,
    /// RBF bandwidth (required for --kernel rbf).
    #[arg(long)]
    gamma: Option<f64>,
    /// Polynomial degree (required for --kernel poly).
    #[arg(long)]
    degree: Option<u32>,
    /// Polynomial additive constant.
    #[arg(long, default_value_t = 1.0)]
    coef0: f64,
    /// Number of layers of the fully connected NTK (required for ntk-fc).
    #[arg(long)]
    depth: Option<u32>,
}

impl KernelArgs {
    fn spec(&self) -> Result<KernelSpec> {
        let spec = match self.kernel {
            KernelName::Linear => KernelSpec::Linear,
            KernelName::Rbf => KernelSpec::Rbf {
                gamma: self.gamma.context("--kernel rbf requires --gamma")?,
            },
            KernelName::Poly => KernelSpec::Polynomial {
                degree: self.degree.context("--kernel poly requires --degree")?,
                coef0: self.coef0,
            },
            KernelName::NtkFc => KernelSpec::NtkFc {
                depth: self.depth.context("--kernel ntk-fc requires --depth")?,
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args)]
struct GramArgs {
    /// Pool CSV: one point per line, comma-separated reals, no header.
    #[arg(long)]
    input: PathBuf,
    /// Skip the first line of the input.
    #[arg(long)]
    header: bool,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Copy, Clone, ValueEnum)]
enum SelectMethod {
    Greedy,
    GreedyNaive,
    Random,
    Kcenters,
    Variance,
}

#[derive(Args)]
struct SelectArgs {
    /// Binary Gram file produced by `oed gram`.
    #[arg(long)]
    gram: PathBuf,
    /// Design size.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Bias-variance tradeoff: a nonnegative real, or `inf` for variance-only.
    #[arg(long, default_value = "0")]
    t: Tradeoff,
    #[arg(long, value_enum)]
    method: SelectMethod,
    /// RNG seed for random/kcenters and for candidate subsampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Evaluate at most this many random candidates per greedy step.
    #[arg(long)]
    subsample: Option<usize>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    pool: PathBuf,
    /// Labels CSV: one row per pool point; a real value (regression) or an
    /// integer class id (with --classes).
    #[arg(long)]
    labels: PathBuf,
    /// Number of classes; labels become one-hot regression targets.
    #[arg(long)]
    classes: Option<usize>,
    /// Skip the first line of each CSV input.
    #[arg(long)]
    header: bool,
    #[arg(long)]
    design: PathBuf,
    #[arg(long)]
    test_pool: PathBuf,
    #[arg(long)]
    test_labels: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Synthetic double-descent study: random vs variance-only vs bias-aware
    /// designs under min-norm regression.
    DoubleDescent(DoubleDescentArgs),
    /// Kernel ridge regression MSE curves for greedy designs at several
    /// (lambda, t) settings.
    KernelDesign(KernelDesignArgs),
    /// t = 0 vs t = lambda win/tie counts on labeled datasets.
    TStudy(TStudyArgs),
}

#[derive(Args)]
struct DoubleDescentArgs {
    #[arg(long, default_value_t = 100)]
    d: usize,
    #[arg(long, default_value_t = 500)]
    pool: usize,
    #[arg(long, default_value_t = 100)]
    test: usize,
    #[arg(long, default_value_t = 0.2)]
    sigma: f64,
    #[arg(long, default_value_t = 120)]
    max_n: usize,
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// Base seed; repetition r uses RNG stream r of this seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tradeoff of the bias-aware arm; defaults to sigma².
    #[arg(long)]
    t: Option<f64>,
    /// Index base of the covariance spectrum exp(−2.5·i/d): 0 or 1.
    #[arg(long, default_value_t = 1)]
    sigma_index_base: u32,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct KernelDesignArgs {
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    header: bool,
    #[arg(long)]
    test_pool: PathBuf,
    #[arg(long)]
    test_labels: PathBuf,
    #[command(flatten)]
    kernel: KernelArgs,
    /// One design arm as `LAMBDA,T` where T is a real, `inf`, or `lambda`.
    /// Repeatable; defaults to 0,0 0,0.5 0.5625,0 0.5625,lambda.
    #[arg(long = "arm")]
    arms: Vec<String>,
    /// Comma-separated design sizes to report (strictly increasing).
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    /// Report sizes 1..=MAX_N when --sizes is absent.
    #[arg(long, default_value_t = 100)]
    max_n: usize,
    /// Evaluate at most this many random candidates per greedy step.
    #[arg(long)]
    subsample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct TStudyArgs {
    /// Dataset CSV (repeatable): features in all columns but the last, which
    /// holds an integer class id.
    #[arg(long = "data", required = true)]
    datasets: Vec<PathBuf>,
    #[arg(long)]
    header: bool,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Comma-separated ridge coefficients to compare at.
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.01,0.1,1,10")]
    lambdas: Vec<f64>,
    /// Design size per arm.
    #[arg(long, default_value_t = 50)]
    n: usize,
    /// Relative margin under which the two arms count as tied.
    #[arg(long, default_value_t = 0.05)]
    tie_margin: f64,
    #[arg(long)]
    output: PathBuf,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gram(args) => cmd_gram(args),
        Command::Select(args) => cmd_select(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Experiment(ExperimentCommand::DoubleDescent(args)) => cmd_double_descent(args),
        Command::Experiment(ExperimentCommand::KernelDesign(args)) => cmd_kernel_design(args),
        Command::Experiment(ExperimentCommand::TStudy(args)) => cmd_t_study(args),
    }
}

fn cmd_gram(args: GramArgs) -> Result<()> {
    let spec = args.kernel.spec()?;
    let pool = PoolMatrix::from_csv_path(&args.input, args.header)
        .with_context(|| format!("reading pool {}", args.input.display()))?;
    let gram = make_gram(&pool, &spec)?;
    gram.save_path(&args.output)
        .with_context(|| format!("writing {}", args.output.display()))?;
    eprintln!(
        "gram: {} points, kernel {:?}, checksum {}",
        gram.size(),
        spec,
        gram.checksum()
    );
    Ok(())
}

fn cmd_select(args: SelectArgs) -> Result<()> {
    let gram = GramMatrix::load_path(&args.gram)
        .with_context(|| format!("reading Gram {}", args.gram.display()))?;
    let params = CriterionParams::new(args.lambda, args.t)?;
    let opts = GreedyOptions {
        subsample: args.subsample.map(|size| Subsample {
            size,
            seed: args.seed,
        }),
        ..Default::default()
    };
    let mut design = match args.method {
        SelectMethod::Greedy => greedy_fast(&gram, args.n, &params, &opts)?,
        SelectMethod::GreedyNaive => greedy_naive(&gram, args.n, &params, &opts)?,
        SelectMethod::Random => select_random(gram.size(), args.n, args.seed)?,
        SelectMethod::Kcenters => select_k_centers_gram(&gram, args.n, args.seed)?,
        SelectMethod::Variance => select_variance_only(&gram, args.n, args.lambda)?,
    };
    if design.pool_checksum.is_empty() {
        design.pool_checksum = gram.checksum();
    }
    write_design(&design, &args.output)?;
    eprintln!(
        "select: method {}, n {}, wall time {:.3}s",
        design.method,
        design.indices.len(),
        design.wall_time_secs
    );
    Ok(())
}

fn write_design(design: &DesignResult, path: &Path) -> Result<()> {
    let mut w =
        BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, design)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Reads a labels CSV as regression targets; with `classes` set, single-column
/// integer ids become one-hot rows.
fn read_targets(path: &Path, header: bool, classes: Option<usize>) -> Result<DMatrix<f64>> {
    let rows = oed_core::pool::parse_numeric_csv(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
        header,
    )?;
    if rows.is_empty() {
        bail!("{}: no label rows", path.display());
    }
    let cols = rows[0].len();
    match classes {
        None => Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j])),
        Some(l) => {
            if cols != 1 {
                bail!("{}: class labels must be a single column", path.display());
            }
            let ids = rows
                .iter()
                .enumerate()
                .map(|(line, r)| {
                    let v = r[0];
                    if v.fract() != 0.0 || v < 0.0 || v >= l as f64 {
                        bail!(
                            "{} line {}: class id {v} outside 0..{l}",
                            path.display(),
                            line + 1
                        );
                    }
                    Ok(v as usize)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(one_hot(&ids, l)?)
        }
    }
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let pool = PoolMatrix::from_csv_path(&args.pool, args.header)?;
    let y_pool = read_targets(&args.labels, args.header, args.classes)?;
    let test_pool = PoolMatrix::from_csv_path(&args.test_pool, args.header)?;
    let y_test = read_targets(&args.test_labels, args.header, args.classes)?;
    if y_pool.nrows() != pool.num_points() {
        bail!(
            "{} labels for {} pool points",
            y_pool.nrows(),
            pool.num_points()
        );
    }
    if y_test.nrows() != test_pool.num_points() {
        bail!(
            "{} labels for {} test points",
            y_test.nrows(),
            test_pool.num_points()
        );
    }
    let design: DesignResult = serde_json::from_reader(
        File::open(&args.design).with_context(|| format!("opening {}", args.design.display()))?,
    )
    .with_context(|| format!("parsing {}", args.design.display()))?;
    design.validate(pool.num_points())?;

    let s = &design.indices;
    let x = pool.select_rows(s);
    let y = DMatrix::from_fn(s.len(), y_pool.ncols(), |i, j| y_pool[(s[i], j)]);
    let model = ridge_fit(&x, &y, args.lambda)?;
    let mse = test_mse(&model, test_pool.matrix(), &y_test)?;

    let result = serde_json::json!({
        "method": design.method,
        "n": s.len(),
        "lambda": args.lambda,
        "mse": mse,
    });
    let mut w = BufWriter::new(File::create(&args.output)?);
    serde_json::to_writer_pretty(&mut w, &result)?;
    w.write_all(b"\n")?;
    eprintln!("evaluate: mse {mse}");
    Ok(())
}

fn cmd_double_descent(args: DoubleDescentArgs) -> Result<()> {
    let config = DoubleDescentConfig {
        d: args.d,
        pool_size: args.pool,
        test_size: args.test,
        sigma: args.sigma,
        max_n: args.max_n,
        repetitions: args.seeds,
        base_seed: args.seed,
        t: args.t.unwrap_or(args.sigma * args.sigma),
        sigma_index_base: args.sigma_index_base,
    };
    eprintln!("double-descent: {config:?}");
    let table = run_double_descent(&config)?;
    table.write_csv(BufWriter::new(File::create(&args.output)?))?;
    eprintln!(
        "double-descent: {} rows -> {}",
        table.rows.len(),
        args.output.display()
    );
    Ok(())
}

fn parse_arm(s: &str) -> Result<(f64, Tradeoff)> {
    let (l, t) = s
        .split_once(',')
        .with_context(|| format!("arm '{s}' is not LAMBDA,T"))?;
    let lambda: f64 = l
        .trim()
        .parse()
        .with_context(|| format!("bad lambda in arm '{s}'"))?;
    let t = t.trim();
    let t = if t.eq_ignore_ascii_case("lambda") {
        Tradeoff::Finite(lambda)
    } else {
        t.parse::<Tradeoff>().map_err(anyhow::Error::msg)?
    };
    Ok((lambda, t))
}

fn cmd_kernel_design(args: KernelDesignArgs) -> Result<()> {
    let pool = PoolMatrix::from_csv_path(&args.pool, args.header)?;
    let y_pool = read_targets(&args.labels, args.header, args.classes)?;
    let test_pool = PoolMatrix::from_csv_path(&args.test_pool, args.header)?;
    let y_test = read_targets(&args.test_labels, args.header, args.classes)?;
    let arm_specs: Vec<(f64, Tradeoff)> = if args.arms.is_empty() {
        vec![
            (0.0, Tradeoff::Finite(0.0)),
            (0.0, Tradeoff::Finite(0.5)),
            (0.5625, Tradeoff::Finite(0.0)),
            (0.5625, Tradeoff::Finite(0.5625)),
        ]
    } else {
        args.arms
            .iter()
            .map(|s| parse_arm(s))
            .collect::<Result<_>>()?
    };
    let params = arm_specs
        .into_iter()
        .map(|(l, t)| CriterionParams::new(l, t))
        .collect::<oed_core::Result<Vec<_>>>()?;
    let sizes = if args.sizes.is_empty() {
        (1..=args.max_n).collect()
    } else {
        args.sizes.clone()
    };
    let config = KernelDesignConfig {
        kernel: args.kernel.spec()?,
        params,
        sizes,
        subsample: args.subsample.map(|size| Subsample {
            size,
            seed: args.seed,
        }),
    };
    eprintln!(
        "kernel-design: kernel {:?}, arms {:?}, {} sizes",
        config.kernel,
        config
            .params
            .iter()
            .map(kernel_design_method_tag)
            .collect::<Vec<_>>(),
        config.sizes.len()
    );
    let table = run_kernel_design(&pool, &y_pool, &test_pool, &y_test, &config)?;
    table.write_csv(BufWriter::new(File::create(&args.output)?))?;
    eprintln!(
        "kernel-design: {} rows -> {}",
        table.rows.len(),
        args.output.display()
    );
    Ok(())
}

fn cmd_t_study(args: TStudyArgs) -> Result<()> {
    let mut datasets = Vec::new();
    for path in &args.datasets {
        let rows = oed_core::pool::parse_numeric_csv(
            File::open(path).with_context(|| format!("opening {}", path.display()))?,
            args.header,
        )?;
        if rows.is_empty() || rows[0].len() < 2 {
            bail!(
                "{}: need at least one feature column plus a label column",
                path.display()
            );
        }
        let d = rows[0].len() - 1;
        let features = PoolMatrix::new(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))?;
        let labels = rows
            .iter()
            .enumerate()
            .map(|(line, r)| {
                let v = r[d];
                if v.fract() != 0.0 || v < 0.0 {
                    bail!(
                        "{} line {}: label {v} is not a class id",
                        path.display(),
                        line + 1
                    );
                }
                Ok(v as usize)
            })
            .collect::<Result<Vec<_>>>()?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        datasets.push(TStudyDataset {
            name,
            features,
            labels,
        });
    }
    let config = TStudyConfig {
        kernel: args.kernel.spec()?,
        lambdas: args.lambdas.clone(),
        design_size: args.n,
        tie_margin: args.tie_margin,
    };
    let (rows, warnings) = run_t_study(&datasets, &config)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let mut out = BufWriter::new(File::create(&args.output)?);
    out.write_all(b"lambda,wins_t0,wins_tlambda,ties\n")?;
    for row in &rows {
        writeln!(
            out,
            "{},{},{},{}",
            row.lambda, row.wins_t0, row.wins_tlambda, row.ties
        )?;
    }
    eprintln!(
        "t-study: {} lambdas -> {}",
        rows.len(),
        args.output.display()
    );
    Ok(())
}
