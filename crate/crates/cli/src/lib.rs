//! The `hamspace` command-line tool and HTTP service.

pub mod args;
pub mod server;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use hamspace::bench::{
    engine_for, render_svg, run_bench, BenchConfig, BenchReport, CorrelationModel,
};
use hamspace::permutation::{kernighan_lin_run, objective, BlockMask};
use hamspace::{
    apply_permutation, estimate_correlations, load_index, parse_code_hex, save_dataset, save_index,
    Error, Permutation, SearchEngine, SearchStrategy, SubCodeLayout, SubcodeInvertedIndex,
};

use args::{Cli, Command, IndexFiles, ModelArg};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

/// Failure of a subcommand, classified for the exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_data_error() {
            CliError::Data(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Entry point shared by the binary and tests; returns the exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match args::parse_args(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .try_init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn print_json(value: &impl serde::Serialize) -> CliResult {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer(&mut out, value).map_err(|e| CliError::Data(e.to_string()))?;
    writeln!(out).map_err(|e| CliError::Data(e.to_string()))
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

/// Loads an engine from an index file and the dataset (and permutation)
/// it was built from.
pub fn load_engine(files: &IndexFiles, term_match: bool) -> hamspace::Result<SearchEngine> {
    let index = load_index(&files.index)?;
    let data = files
        .data
        .clone()
        .unwrap_or_else(|| sibling(&files.index, "fbin"));
    let ds = hamspace::code_store::load_any_dataset(&data)?;
    let builder = SearchEngine::builder(ds).term_match(term_match);
    let builder = if index.perm_hash() == 0 {
        builder.with_index(index)
    } else {
        let perm_path = files
            .perm
            .clone()
            .unwrap_or_else(|| sibling(&files.index, "perm"));
        let perm = Permutation::load(&perm_path)?;
        builder.filtered(false).with_permuted_index(perm, index)
    };
    builder.build()
}

fn gen(
    n: usize,
    m: u32,
    model: ModelArg,
    block: u32,
    flip: f64,
    seed: u64,
    out: &Path,
) -> CliResult {
    let model = match model {
        ModelArg::Uniform => CorrelationModel::Uniform,
        ModelArg::Clustered => CorrelationModel::Clustered { block, flip },
    };
    let ds = hamspace::bench::generate_synthetic(n, m, model, seed)?;
    save_dataset(&ds, out)?;
    log::info!("wrote {n} codes of {m} bits to {}", out.display());
    Ok(())
}

fn permute(data: &Path, out: Option<PathBuf>, width: u32, seed: u64) -> CliResult {
    let ds = hamspace::code_store::load_any_dataset(data)?;
    let layout = SubCodeLayout::with_width(ds.code_len(), width)?;
    let mat = estimate_correlations(&ds, seed)?;
    let outcome = kernighan_lin_run(&mat, &layout, seed)?;
    let mask = BlockMask::from_layout(&layout);
    let before = objective(&mat, &Permutation::identity(ds.code_len()), &mask)?;
    let after = objective(&mat, &outcome.permutation, &mask)?;
    let out = out.unwrap_or_else(|| sibling(data, "perm"));
    outcome.permutation.save(&out)?;
    print_json(&serde_json::json!({
        "permutation": out,
        "hash": format!("{:016x}", outcome.permutation.hash64()),
        "identity_objective": before,
        "objective": after,
        "passes": outcome.passes,
    }))
}

fn build(data: &Path, perm: Option<PathBuf>, width: u32, out: Option<PathBuf>) -> CliResult {
    let ds = hamspace::code_store::load_any_dataset(data)?;
    let layout = SubCodeLayout::with_width(ds.code_len(), width)?;
    let index = match perm {
        Some(path) => {
            let perm = Permutation::load(&path)?;
            let permuted = apply_permutation(&ds, &perm)?;
            SubcodeInvertedIndex::build_tagged(&permuted, layout, perm.hash64())?
        }
        None => SubcodeInvertedIndex::build(&ds, layout)?,
    };
    let out = out.unwrap_or_else(|| sibling(data, "fidx"));
    save_index(&index, &out)?;
    log::info!("wrote index over {} codes to {}", ds.len(), out.display());
    Ok(())
}

fn query(
    files: &IndexFiles,
    code: &str,
    radius: Option<u32>,
    k: Option<usize>,
    strategy: Option<SearchStrategy>,
    term_match: bool,
) -> CliResult {
    let engine = load_engine(
        files,
        term_match || strategy == Some(SearchStrategy::TermMatch),
    )?;
    let q = parse_code_hex(code, engine.code_len())?;
    let strategy = strategy.unwrap_or_else(|| engine.default_strategy());
    let result = match (radius, k) {
        (Some(r), None) => engine.search(strategy, &q, r)?,
        (None, Some(k)) => engine.knn(strategy, &q, k)?,
        _ => {
            return Err(CliError::Usage(
                "give exactly one of --radius or --k".into(),
            ))
        }
    };
    print_json(&result)
}

fn bench(
    file: Option<PathBuf>,
    output: Option<PathBuf>,
    csv: Option<PathBuf>,
    plot: Option<PathBuf>,
    queries: Option<usize>,
    seed: Option<u64>,
    throughput: bool,
) -> CliResult {
    let mut cfg = match file {
        Some(path) => BenchConfig::load(path)?,
        None => BenchConfig::default(),
    };
    cfg.output = output.or(cfg.output);
    cfg.csv = csv.or(cfg.csv);
    cfg.queries = queries.unwrap_or(cfg.queries);
    cfg.seed = seed.unwrap_or(cfg.seed);
    cfg.throughput |= throughput;
    let report = run_bench(&cfg, engine_for(&cfg))?;
    eprint!("{}", report.summary_table());
    if let Some(path) = plot {
        std::fs::write(&path, render_svg(&report))
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    }
    if cfg.output.is_none() {
        print_json(&report)?;
    }
    Ok(())
}

fn serve(files: &IndexFiles, listen: &str, term_match: bool) -> CliResult {
    let engine = Arc::new(load_engine(files, term_match)?);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Data(e.to_string()))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(listen)
            .await
            .map_err(|e| CliError::Usage(format!("cannot listen on {listen}: {e}")))?;
        let addr = listener
            .local_addr()
            .map_err(|e| CliError::Data(e.to_string()))?;
        println!("listening on http://{addr}");
        let _ = std::io::stdout().flush();
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        server::serve(listener, engine, shutdown)
            .await
            .map_err(|e| CliError::Data(e.to_string()))
    })
}

fn plot(report: &Path, out: &Path) -> CliResult {
    let report = BenchReport::load_json(report)?;
    std::fs::write(out, render_svg(&report))
        .map_err(|e| CliError::Data(format!("{}: {e}", out.display())))
}

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Gen {
            n,
            m,
            model,
            block,
            flip,
            seed,
            out,
        } => gen(n, m, model, block, flip, seed, &out),
        Command::Permute {
            data,
            out,
            width,
            seed,
        } => permute(&data, out, width, seed),
        Command::Build {
            data,
            perm,
            width,
            out,
        } => build(&data, perm, width, out),
        Command::Query {
            files,
            code,
            radius,
            k,
            strategy,
            term_match,
        } => query(&files, &code, radius, k, strategy, term_match),
        Command::Bench {
            file,
            output,
            csv,
            plot,
            queries,
            seed,
            throughput,
        } => bench(file, output, csv, plot, queries, seed, throughput),
        Command::Serve {
            files,
            listen,
            term_match,
        } => serve(&files, &listen, term_match),
        Command::Plot { report, out } => plot(&report, &out),
    }
}
