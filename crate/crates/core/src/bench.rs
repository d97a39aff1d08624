//! Latency benchmark across strategies and radii.
//!
//! Queries are sampled from the dataset without replacement. For each radius
//! every enabled strategy first runs a few warmup queries, then each query is
//! timed per strategy with a monotonic clock around the search call only.
//! All strategies must return identical neighbor lists for every query;
//! a mismatch aborts the run.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::code_store::{load_any_dataset, CodeDataset};
use crate::engine::{Neighbor, SearchEngine, SearchStrategy, DEFAULT_FILTER_WIDTH};
use crate::error::{invalid, Error, Result};
use crate::hamming::{words_for_bits, BinaryCode};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

const TIMING_NOTE: &str = "latencies are in-process wall times in microseconds; \
only relative comparisons between strategies are meaningful";

/// How bit columns of a synthetic dataset relate to each other.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorrelationModel {
    /// Independent fair bits.
    Uniform,
    /// Bit columns grouped into clusters of `block` columns at scattered
    /// positions; each column copies its cluster's shared random bit, flipped
    /// independently with probability `flip`.
    Clustered { block: u32, flip: f64 },
}

/// Deterministic synthetic dataset of `n` codes of `m` bits.
pub fn generate_synthetic(
    n: usize,
    m: u32,
    model: CorrelationModel,
    seed: u64,
) -> Result<CodeDataset> {
    if n == 0 || m == 0 {
        return Err(invalid!("n and m must be positive (n={n}, m={m})"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stride = words_for_bits(m);
    let mut words = vec![0u64; n * stride];
    match model {
        CorrelationModel::Uniform => {
            let tail = m % 64;
            for code in words.chunks_exact_mut(stride) {
                for w in code.iter_mut() {
                    *w = rng.gen();
                }
                if tail != 0 {
                    code[stride - 1] &= (1u64 << tail) - 1;
                }
            }
        }
        CorrelationModel::Clustered { block, flip } => {
            if block == 0 || block > m {
                return Err(invalid!("cluster block {block} must be in 1..={m}"));
            }
            if !(0.0..=0.5).contains(&flip) {
                return Err(invalid!("flip probability {flip} must be in [0, 0.5]"));
            }
            let mut positions: Vec<u32> = (0..m).collect();
            positions.shuffle(&mut rng);
            let clusters: Vec<&[u32]> = positions.chunks(block as usize).collect();
            for code in words.chunks_exact_mut(stride) {
                for cluster in &clusters {
                    let shared: bool = rng.gen();
                    for &p in *cluster {
                        if shared ^ rng.gen_bool(flip) {
                            code[(p / 64) as usize] |= 1 << (p % 64);
                        }
                    }
                }
            }
        }
    }
    CodeDataset::from_words(m, words)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSource {
    /// FBIN or text dataset on disk.
    File {
        path: PathBuf,
    },
    Synthetic {
        n: usize,
        model: CorrelationModel,
    },
}

fn default_radii() -> Vec<u32> {
    vec![5, 10, 15, 20]
}

fn default_strategies() -> Vec<SearchStrategy> {
    SearchStrategy::ALL.to_vec()
}

fn default_warmup() -> usize {
    3
}

fn default_filter_width() -> u32 {
    DEFAULT_FILTER_WIDTH
}

fn default_queries() -> usize {
    1000
}

fn default_m() -> u32 {
    128
}

fn default_dataset() -> DatasetSource {
    DatasetSource::Synthetic {
        n: 500_000,
        model: CorrelationModel::Uniform,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default = "default_dataset")]
    pub dataset: DatasetSource,
    /// Code length for synthetic data; checked against file datasets.
    #[serde(default = "default_m")]
    pub m: u32,
    #[serde(default = "default_queries")]
    pub queries: usize,
    #[serde(default = "default_radii")]
    pub radii: Vec<u32>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<SearchStrategy>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
    #[serde(default = "default_filter_width")]
    pub filter_width: u32,
    /// JSON report destination.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Optional CSV of raw per-query samples.
    #[serde(default)]
    pub csv: Option<PathBuf>,
    /// Also measure concurrent query throughput.
    #[serde(default)]
    pub throughput: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            dataset: default_dataset(),
            m: default_m(),
            queries: default_queries(),
            radii: default_radii(),
            strategies: default_strategies(),
            seed: 0,
            warmup: default_warmup(),
            filter_width: default_filter_width(),
            output: None,
            csv: None,
            throughput: false,
        }
    }
}

impl BenchConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("bench config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("bench config: {e}")))
        } else {
            Self::from_toml_str(&text)
        }
    }

    fn validate(&self, n: usize, m: u32) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(invalid!("no strategies selected"));
        }
        if self.queries == 0 || self.queries > n {
            return Err(invalid!("query count {} must be in 1..={n}", self.queries));
        }
        if let Some(r) = self.radii.iter().find(|&&r| r > m) {
            return Err(invalid!("radius {r} exceeds code length {m}"));
        }
        if self.radii.is_empty() {
            return Err(invalid!("no radii selected"));
        }
        Ok(())
    }

    pub fn load_dataset(&self) -> Result<CodeDataset> {
        match &self.dataset {
            DatasetSource::File { path } => {
                let ds = load_any_dataset(path)?;
                if ds.code_len() != self.m {
                    return Err(invalid!(
                        "config says m={} but {} holds {}-bit codes",
                        self.m,
                        path.display(),
                        ds.code_len()
                    ));
                }
                Ok(ds)
            }
            DatasetSource::Synthetic { n, model } => {
                generate_synthetic(*n, self.m, *model, self.seed)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub os: String,
    pub arch: String,
    pub cpus: usize,
    pub tool_version: String,
    pub unix_time: u64,
    pub note: String,
}

impl Environment {
    fn capture() -> Self {
        Environment {
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            unix_time: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            note: TIMING_NOTE.to_string(),
        }
    }
}

/// Aggregates for one (strategy, radius) cell, plus the raw samples they
/// were computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub strategy: SearchStrategy,
    pub radius: u32,
    pub mean_us: f64,
    pub std_us: f64,
    pub median_us: f64,
    pub p95_us: f64,
    pub mean_candidate_fraction: f64,
    pub mean_neighbors: f64,
    pub samples_us: Vec<f64>,
    pub candidate_counts: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub throughput_qps: Option<f64>,
}

impl CellReport {
    fn from_samples(
        strategy: SearchStrategy,
        radius: u32,
        n: usize,
        samples_us: Vec<f64>,
        candidate_counts: Vec<usize>,
        neighbor_counts: &[usize],
    ) -> Self {
        let stats = LatencyStats::of(&samples_us);
        let mean_fraction = candidate_counts
            .iter()
            .map(|&c| c as f64 / n as f64)
            .sum::<f64>()
            / candidate_counts.len().max(1) as f64;
        CellReport {
            strategy,
            radius,
            mean_us: stats.mean,
            std_us: stats.std,
            median_us: stats.median,
            p95_us: stats.p95,
            mean_candidate_fraction: mean_fraction,
            mean_neighbors: neighbor_counts.iter().sum::<usize>() as f64
                / neighbor_counts.len().max(1) as f64,
            samples_us,
            candidate_counts,
            throughput_qps: None,
        }
    }
}

/// Summary statistics of a latency sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyStats {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std: f64,
    pub median: f64,
    /// Nearest-rank 95th percentile.
    pub p95: f64,
}

impl LatencyStats {
    pub fn of(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return LatencyStats {
                mean: 0.0,
                std: 0.0,
                median: 0.0,
                p95: 0.0,
            };
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let std = if samples.len() > 1 {
            (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let len = sorted.len();
        let median = if len % 2 == 1 {
            sorted[len / 2]
        } else {
            0.5 * (sorted[len / 2 - 1] + sorted[len / 2])
        };
        let rank = ((0.95 * n).ceil() as usize).clamp(1, len);
        LatencyStats {
            mean,
            std,
            median,
            p95: sorted[rank - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub environment: Environment,
    pub config: BenchConfig,
    pub m: u32,
    pub n: usize,
    pub query_ids: Vec<u32>,
    pub engine_build_ms: f64,
    pub results: Vec<CellReport>,
}

impl BenchReport {
    pub fn cell(&self, strategy: SearchStrategy, radius: u32) -> Option<&CellReport> {
        self.results
            .iter()
            .find(|c| c.strategy == strategy && c.radius == radius)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)
            .map_err(|e| Error::io(path, e.into()))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("bench report: {e}")))
    }

    /// One row per (strategy, radius, query).
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let csv_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["strategy", "radius", "query_id", "latency_us", "candidates"])
            .map_err(csv_err)?;
        for cell in &self.results {
            for (k, (&lat, &cand)) in cell
                .samples_us
                .iter()
                .zip(&cell.candidate_counts)
                .enumerate()
            {
                w.write_record([
                    cell.strategy.as_str().to_string(),
                    cell.radius.to_string(),
                    self.query_ids[k].to_string(),
                    format!("{lat:.3}"),
                    cand.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Plain-text table of means and standard deviations.
    pub fn summary_table(&self) -> String {
        let mut radii: Vec<u32> = self.results.iter().map(|c| c.radius).collect();
        radii.dedup();
        radii.sort_unstable();
        radii.dedup();
        let strategies = &self.config.strategies;
        let mut out = format!("{:>6}", "r");
        for s in strategies {
            out.push_str(&format!(" {:>28}", s.as_str()));
        }
        out.push('\n');
        for r in radii {
            out.push_str(&format!("{r:>6}"));
            for &s in strategies {
                match self.cell(s, r) {
                    Some(c) => out.push_str(&format!(
                        " {:>16.2} ({:>8.2}) {:>1}",
                        c.mean_us, c.std_us, ""
                    )),
                    None => out.push_str(&format!(" {:>28}", "-")),
                }
            }
            out.push('\n');
        }
        out
    }
}

fn sample_queries(ds: &CodeDataset, count: usize, seed: u64) -> Vec<u32> {
    // Offset the seed so query choice is independent of data generation.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0F0E_41E5);
    sample(&mut rng, ds.len(), count)
        .into_iter()
        .map(|i| i as u32)
        .collect()
}

fn throughput(
    engine: &SearchEngine,
    strategy: SearchStrategy,
    queries: &[BinaryCode],
    r: u32,
) -> Result<f64> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let chunk = queries.len().div_ceil(threads);
    let start = Instant::now();
    std::thread::scope(|scope| {
        let handles: Vec<_> = queries
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || -> Result<()> {
                    for q in part {
                        engine.search(strategy, q, r)?;
                    }
                    Ok(())
                })
            })
            .collect();
        handles
            .into_iter()
            .try_for_each(|h| h.join().expect("throughput worker panicked"))
    })?;
    Ok(queries.len() as f64 / start.elapsed().as_secs_f64())
}

fn describe_mismatch(a: &[Neighbor], b: &[Neighbor]) -> String {
    let only_a: Vec<_> = a.iter().filter(|n| !b.contains(n)).take(5).collect();
    let only_b: Vec<_> = b.iter().filter(|n| !a.contains(n)).take(5).collect();
    format!(
        "{} vs {} neighbors; first only-left {:?}, first only-right {:?}",
        a.len(),
        b.len(),
        only_a,
        only_b
    )
}

/// Runs the benchmark on the configured dataset, building the engine with
/// `factory`.
pub fn run_bench<F>(cfg: &BenchConfig, factory: F) -> Result<BenchReport>
where
    F: FnOnce(Arc<CodeDataset>) -> Result<SearchEngine>,
{
    let ds = Arc::new(cfg.load_dataset()?);
    run_bench_on(cfg, ds, factory)
}

/// Like [`run_bench`] with an already loaded dataset.
pub fn run_bench_on<F>(cfg: &BenchConfig, ds: Arc<CodeDataset>, factory: F) -> Result<BenchReport>
where
    F: FnOnce(Arc<CodeDataset>) -> Result<SearchEngine>,
{
    cfg.validate(ds.len(), ds.code_len())?;
    let build_start = Instant::now();
    let engine = factory(ds)?;
    let engine_build_ms = build_start.elapsed().as_secs_f64() * 1e3;
    measure(cfg, &engine, engine_build_ms)
}

/// Benchmarks an existing engine over its own dataset. The config's dataset
/// source is ignored.
pub fn run_bench_with_engine(cfg: &BenchConfig, engine: &SearchEngine) -> Result<BenchReport> {
    measure(cfg, engine, 0.0)
}

fn measure(cfg: &BenchConfig, engine: &SearchEngine, engine_build_ms: f64) -> Result<BenchReport> {
    let ds = engine.dataset();
    let (n, m) = (ds.len(), ds.code_len());
    cfg.validate(n, m)?;
    for &s in &cfg.strategies {
        if !engine.supports(s) {
            return Err(Error::NotReady(format!("engine was built without {s}")));
        }
    }
    let query_ids = sample_queries(ds, cfg.queries, cfg.seed);
    let queries: Vec<BinaryCode> = query_ids.iter().map(|&id| ds.code(id as usize)).collect();

    let mut results = Vec::new();
    for &r in &cfg.radii {
        // Each strategy runs as its own block (warmup, then every query) so
        // its timings reflect its own cache footprint rather than whatever
        // the previous strategy left behind. The first strategy's answers
        // are the reference the others must reproduce.
        let mut reference: Vec<Vec<Neighbor>> = Vec::with_capacity(queries.len());
        for (si, &s) in cfg.strategies.iter().enumerate() {
            for q in queries.iter().take(cfg.warmup) {
                engine.search(s, q, r)?;
            }
            let mut samples = Vec::with_capacity(queries.len());
            let mut candidates = Vec::with_capacity(queries.len());
            for (qi, q) in queries.iter().enumerate() {
                let start = Instant::now();
                let res = engine.search(s, q, r)?;
                samples.push(start.elapsed().as_secs_f64() * 1e6);
                candidates.push(res.candidate_count);
                if si == 0 {
                    reference.push(res.neighbors);
                } else if reference[qi] != res.neighbors {
                    return Err(Error::CorrectnessFailure {
                        query: query_ids[qi] as usize,
                        radius: r,
                        detail: format!(
                            "{} vs {s}: {}",
                            cfg.strategies[0],
                            describe_mismatch(&reference[qi], &res.neighbors)
                        ),
                    });
                }
            }
            let neighbor_counts: Vec<usize> = reference.iter().map(Vec::len).collect();
            let mut cell = CellReport::from_samples(s, r, n, samples, candidates, &neighbor_counts);
            if cfg.throughput {
                cell.throughput_qps = Some(throughput(engine, s, &queries, r)?);
            }
            log::info!(
                "r={r:>3} {s:<18} mean {:>10.2}us median {:>10.2}us candidates {:.5}",
                cell.mean_us,
                cell.median_us,
                cell.mean_candidate_fraction
            );
            results.push(cell);
        }
    }

    let report = BenchReport {
        schema_version: REPORT_SCHEMA_VERSION,
        environment: Environment::capture(),
        config: cfg.clone(),
        m,
        n,
        query_ids,
        engine_build_ms,
        results,
    };
    if let Some(path) = &cfg.output {
        report.save_json(path)?;
    }
    if let Some(path) = &cfg.csv {
        report.save_csv(path)?;
    }
    Ok(report)
}

/// Engine factory matching a benchmark config: every component the selected
/// strategies need, with the permutation optimized under `cfg.seed`.
pub fn engine_for(cfg: &BenchConfig) -> impl FnOnce(Arc<CodeDataset>) -> Result<SearchEngine> + '_ {
    move |ds| {
        let wants = |s| cfg.strategies.contains(&s);
        let mut builder = SearchEngine::builder(ds)
            .filter_width(cfg.filter_width)
            .term_match(wants(SearchStrategy::TermMatch))
            .filtered(wants(SearchStrategy::Filtered));
        if wants(SearchStrategy::FilteredPermuted) {
            builder = builder.optimize_permutation(cfg.seed);
        }
        builder.build()
    }
}

/// Mean latency versus radius, one line per strategy, log-scaled y axis.
pub fn render_svg(report: &BenchReport) -> String {
    const W: f64 = 720.0;
    const H: f64 = 440.0;
    const LEFT: f64 = 80.0;
    const RIGHT: f64 = 190.0;
    const TOP: f64 = 40.0;
    const BOTTOM: f64 = 60.0;
    const COLORS: [&str; 4] = ["#d62728", "#ff7f0e", "#2ca02c", "#1f77b4"];

    let mut radii: Vec<u32> = report.results.iter().map(|c| c.radius).collect();
    radii.sort_unstable();
    radii.dedup();
    let means = report.results.iter().map(|c| c.mean_us.max(1e-3));
    let (lo, hi) = means.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    let (lo, hi) = if lo.is_finite() {
        (
            lo.log10().floor(),
            hi.log10().ceil().max(lo.log10().floor() + 1.0),
        )
    } else {
        (0.0, 1.0)
    };
    let (rmin, rmax) = match (radii.first(), radii.last()) {
        (Some(&a), Some(&b)) if b > a => (a as f64, b as f64),
        (Some(&a), _) => (a as f64 - 1.0, a as f64 + 1.0),
        _ => (0.0, 1.0),
    };
    let plot_w = W - LEFT - RIGHT;
    let plot_h = H - TOP - BOTTOM;
    let x = |r: f64| LEFT + (r - rmin) / (rmax - rmin) * plot_w;
    let y = |v: f64| TOP + (hi - v.max(1e-3).log10()) / (hi - lo) * plot_h;

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">Mean search latency, m = {}, n = {}</text>\n",
        LEFT + plot_w / 2.0,
        report.m,
        report.n
    );
    svg.push_str(&format!(
        "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" stroke=\"#444\"/>\n"
    ));
    for decade in lo as i32..=hi as i32 {
        let yy = y(10f64.powi(decade));
        svg.push_str(&format!(
            "<line x1=\"{LEFT}\" y1=\"{yy:.1}\" x2=\"{:.1}\" y2=\"{yy:.1}\" stroke=\"#ddd\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">1e{decade}</text>\n",
            LEFT + plot_w,
            LEFT - 6.0,
            yy + 4.0
        ));
    }
    for &r in &radii {
        let xx = x(r as f64);
        svg.push_str(&format!(
            "<text x=\"{xx:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{r}</text>\n",
            TOP + plot_h + 18.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">radius r</text>\n\
         <text x=\"18\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.1})\">mean latency (us, log scale)</text>\n",
        LEFT + plot_w / 2.0,
        H - 16.0,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    ));
    for (k, &s) in report.config.strategies.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let points: Vec<String> = radii
            .iter()
            .filter_map(|&r| report.cell(s, r))
            .map(|c| format!("{:.1},{:.1}", x(c.radius as f64), y(c.mean_us)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            points.join(" ")
        ));
        for p in &points {
            let (px, py) = p.split_once(',').unwrap();
            svg.push_str(&format!(
                "<circle cx=\"{px}\" cy=\"{py}\" r=\"3\" fill=\"{color}\"/>\n"
            ));
        }
        let ly = TOP + 16.0 + 20.0 * k as f64;
        svg.push_str(&format!(
            "<line x1=\"{0:.1}\" y1=\"{ly:.1}\" x2=\"{1:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>\n\
             <text x=\"{2:.1}\" y=\"{3:.1}\">{s}</text>\n",
            W - RIGHT + 12.0,
            W - RIGHT + 36.0,
            W - RIGHT + 42.0,
            ly + 4.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
