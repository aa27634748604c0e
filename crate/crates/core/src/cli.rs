//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use crate::aggtree::{doubling_search, AggTree, BuildOptions, RadiusRule, RootSummary};
use crate::count::{pc_count, JoinIndex};
use crate::cube::PseudoCube;
use crate::error::{Error, Result};
use crate::eval::{approx_metric, estimate_diameter, evaluate};
use crate::instance::JoinInstance;
use crate::loss::{Dataset, LossModel, Theta};
use crate::materialize::{materialize, DEFAULT_CAP};
use crate::pipeline::{build_trees, weigh_trees, CoresetConfig, Part};
use crate::points::Points;
use crate::report::Report;
use crate::sample::uniform_sample;
use crate::schema::{JoinSpec, Table};
use crate::synth::{generate, write_instance, Shape, SynthConfig};
use crate::train::{train, TrainOptions};
use crate::weights::{exact_weights, format_num, lonely_light_cubes, block_distance, Coreset, DEFAULT_M_CAP};

#[derive(Debug, Parser)]
#[command(name = "relcoreset", version, about = "Coresets over acyclic joins without materializing the join")]
pub struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "RELCORESET_THREADS")]
    pub threads: Option<usize>,
    /// Print failures as a JSON object on standard error.
    #[arg(long, global = true)]
    pub error_json: bool,
    /// Write a JSON run report here.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check that the join is acyclic and print its size.
    Validate(SpecArgs),
    /// Write the full join as CSV.
    Materialize(MaterializeArgs),
    /// Count join tuples inside pseudo-cubes read from a TOML file.
    Count(CountArgs),
    /// Draw uniform samples from the join, optionally inside cubes.
    Sample(SampleArgs),
    /// Build the aggregation tree and write the root centers.
    Build(BuildArgs),
    /// Weight the root centers of an earlier build.
    Weigh(WeighArgs),
    /// Build and weigh in one go.
    Coreset(CoresetArgs),
    /// Fit a model to a (weighted) CSV.
    Train(TrainArgs),
    /// Compare a coreset with the full join for one loss.
    Evaluate(EvaluateArgs),
    /// Write a synthetic instance.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct SpecArgs {
    /// Join file (TOML) listing the table CSVs.
    #[arg(long)]
    pub spec: PathBuf,
}

#[derive(Debug, Args)]
pub struct MaterializeArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    pub cap: u128,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CountArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    /// TOML file with `[[cube]]` entries.
    #[arg(long)]
    pub cube: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub cube: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RuleArg {
    Doubling,
    SubspaceCount,
}

impl From<RuleArg> for RadiusRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Doubling => RadiusRule::Doubling,
            RuleArg::SubspaceCount => RadiusRule::SubspaceCount,
        }
    }
}

#[derive(Debug, Args)]
pub struct TreeArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Growth factor of the level bounds.
    #[arg(long, value_enum, default_value = "doubling")]
    pub radius_rule: RuleArg,
    /// Build per class of this feature (overrides the label in the join file).
    #[arg(long)]
    pub label: Option<String>,
    /// Double k up to this value until sampled coverage reaches --target.
    #[arg(long, requires = "target")]
    pub k_max: Option<usize>,
    #[arg(long)]
    pub target: Option<f64>,
    /// Doubling-dimension guess for the r0 diagnostic.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Cross-check against the materialized join when it fits under the cap.
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[command(flatten)]
    pub tree: TreeArgs,
    /// Root centers as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WeightArgs {
    #[arg(long, default_value_t = 0.5)]
    pub eps1: f64,
    #[arg(long, default_value_t = 0.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.05)]
    pub lambda: f64,
    /// Ceiling on the per-cube sample size.
    #[arg(long, default_value_t = DEFAULT_M_CAP)]
    pub m_cap: u64,
}

#[derive(Debug, Args)]
pub struct WeighArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Report written by `build`.
    #[arg(long)]
    pub build: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub weights: WeightArgs,
    #[arg(long)]
    pub oracle: bool,
    /// Coreset CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CoresetArgs {
    #[command(flatten)]
    pub tree: TreeArgs,
    #[command(flatten)]
    pub weights: WeightArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelArg {
    Kmeans,
    Logistic,
    Svm,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub model: ModelArg,
    /// Number of k-means centers.
    #[arg(long, default_value_t = 10)]
    pub centers: usize,
    /// k-means continuity trade-off.
    #[arg(long, default_value_t = 0.1)]
    pub kmeans_eps: f64,
    /// Logistic L2 penalty.
    #[arg(long, default_value_t = 0.0)]
    pub l2: f64,
    /// Weight of the mean hinge in the SVM objective.
    #[arg(long, default_value_t = 1.0)]
    pub svm_lambda: f64,
    /// Label column for logistic and SVM.
    #[arg(long)]
    pub label: Option<String>,
}

impl ModelArgs {
    fn model(&self) -> LossModel {
        match self.model {
            ModelArg::Kmeans => LossModel::KMeans {
                centers: self.centers,
                eps: self.kmeans_eps,
            },
            ModelArg::Logistic => LossModel::Logistic { l2: self.l2 },
            ModelArg::Svm => LossModel::Svm {
                lambda_reg: self.svm_lambda,
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// CSV with a header; a `weight` column is used as point weights.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 300)]
    pub max_iter: usize,
    /// θ as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Coreset CSV with a `weight` column.
    #[arg(long)]
    pub coreset: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// θ as JSON; when absent, models are trained on the coreset and on
    /// the full join.
    #[arg(long)]
    pub theta: Option<PathBuf>,
    /// Final radius of the coreset.
    #[arg(long, default_value_t = 0.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 0.5)]
    pub eps1: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    pub cap: u128,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ShapeArg {
    Star,
    Chain,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory for the CSV files and `join.toml`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub tables: usize,
    #[arg(long, default_value_t = 200)]
    pub rows: usize,
    #[arg(long, default_value_t = 20)]
    pub anchors: usize,
    #[arg(long, default_value_t = 6)]
    pub features: usize,
    #[arg(long, value_enum, default_value = "star")]
    pub shape: ShapeArg,
    #[arg(long, default_value_t = 4)]
    pub clusters: usize,
    #[arg(long, default_value_t = 1.0)]
    pub cluster_skew: f64,
    #[arg(long, default_value_t = 1)]
    pub far_clusters: usize,
    #[arg(long, default_value_t = 0.0)]
    pub key_skew: f64,
    #[arg(long)]
    pub label: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Load { .. } | Error::Spec(_) | Error::Cyclic { .. } | Error::Contract(_) => 2,
        Error::Overflow
        | Error::CapExceeded { .. }
        | Error::EmptyRegion
        | Error::Build(_)
        | Error::Diverged { .. } => 3,
        Error::Io { .. } | Error::Csv(_) | Error::Json(_) => 4,
    }
}

/// Parses arguments, runs the command, and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let threads = cli.threads.unwrap_or(0);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return 3;
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(()) => 0,
        Err(err) => {
            if cli.error_json {
                let body = json!({
                    "error": err.kind(),
                    "message": err.to_string(),
                    "exit_code": exit_code(&err),
                });
                eprintln!("{body}");
            } else {
                eprintln!("error: {err}");
            }
            exit_code(&err)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let started = Instant::now();
    let mut report = match &cli.command {
        Command::Validate(a) => cmd_validate(a)?,
        Command::Materialize(a) => cmd_materialize(a)?,
        Command::Count(a) => cmd_count(a)?,
        Command::Sample(a) => cmd_sample(a)?,
        Command::Build(a) => cmd_build(a)?,
        Command::Weigh(a) => cmd_weigh(a)?,
        Command::Coreset(a) => cmd_coreset(a)?,
        Command::Train(a) => cmd_train(a)?,
        Command::Evaluate(a) => cmd_evaluate(a)?,
        Command::Synth(a) => cmd_synth(a)?,
    };
    report.timing("total_secs", started.elapsed().as_secs_f64());
    if let Some(path) = &cli.report {
        report.write(path)?;
    }
    Ok(())
}

/// Loads the join file and records every input file in the report.
fn load(spec_path: &Path, report: &mut Report) -> Result<(JoinSpec, JoinInstance)> {
    let spec = JoinSpec::from_file(spec_path)?;
    report.input(spec_path)?;
    for p in spec.input_paths() {
        report.input(&p)?;
    }
    let instance = JoinInstance::from_spec(&spec)?;
    Ok((spec, instance))
}

/// Writes to `path`, or to standard output when absent.
fn with_output<F>(path: Option<&Path>, write: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    match path {
        Some(p) => {
            let file = std::fs::File::create(p).map_err(|e| Error::io(p, e))?;
            let mut buf = std::io::BufWriter::new(file);
            write(&mut buf)?;
            buf.flush().map_err(|e| Error::io(p, e))
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            lock.flush().map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn write_points_csv(out: &mut dyn Write, header: &[String], points: &Points) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for p in points.iter() {
        w.write_record(p.iter().map(|v| format_num(*v)))?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

fn cmd_validate(a: &SpecArgs) -> Result<Report> {
    let mut report = Report::new("validate", None);
    let (_, instance) = load(&a.spec, &mut report)?;
    let n = JoinIndex::new(&instance)?.join_size();
    println!("acyclic, n={n}");
    report.result("acyclic", true)?;
    report.result("join_size", n)?;
    report.result("tables", instance.tables())?;
    report.result("features", &instance.partition.full)?;
    Ok(report)
}

fn cmd_materialize(a: &MaterializeArgs) -> Result<Report> {
    let mut report = Report::new("materialize", None);
    let (_, instance) = load(&a.spec.spec, &mut report)?;
    let index = JoinIndex::new(&instance)?;
    let dm = materialize(&index, a.cap)?;
    with_output(a.out.as_deref(), |w| write_points_csv(w, &dm.features, &dm.points))?;
    report.param("cap", a.cap)?;
    report.result("rows", dm.len())?;
    Ok(report)
}

#[derive(Debug, Deserialize)]
struct CubeFile {
    cube: Vec<CubeEntry>,
}

#[derive(Debug, Deserialize)]
struct CubeEntry {
    radius: f64,
    balls: Vec<BallEntry>,
}

#[derive(Debug, Deserialize)]
struct BallEntry {
    table: String,
    center: Vec<f64>,
}

fn read_cubes(path: &Path, instance: &JoinInstance) -> Result<Vec<PseudoCube>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: CubeFile = toml::from_str(&text).map_err(|e| Error::Spec(format!("{}: {e}", path.display())))?;
    file.cube
        .into_iter()
        .map(|entry| {
            let mut balls: Vec<(usize, Vec<f64>)> = Vec::with_capacity(entry.balls.len());
            for b in entry.balls {
                let t = instance
                    .tables
                    .iter()
                    .position(|t| t.name() == b.table)
                    .ok_or_else(|| Error::contract(format!("cube references unknown table {}", b.table)))?;
                balls.push((t, b.center));
            }
            balls.sort_by_key(|(t, _)| *t);
            let index_set = balls.iter().map(|(t, _)| *t).collect();
            let center = balls.into_iter().flat_map(|(_, c)| c).collect();
            let cube = PseudoCube::new(index_set, center, entry.radius);
            cube.validate(&instance.partition)?;
            Ok(cube)
        })
        .collect()
}

fn cmd_count(a: &CountArgs) -> Result<Report> {
    let mut report = Report::new("count", None);
    let (_, instance) = load(&a.spec.spec, &mut report)?;
    report.input(&a.cube)?;
    let cubes = read_cubes(&a.cube, &instance)?;
    let index = JoinIndex::new(&instance)?;
    let n = pc_count(&index, &cubes)?;
    println!("{n}");
    report.result("count", n)?;
    Ok(report)
}

fn cmd_sample(a: &SampleArgs) -> Result<Report> {
    let mut report = Report::new("sample", Some(a.seed));
    let (_, instance) = load(&a.spec.spec, &mut report)?;
    let cubes = match &a.cube {
        Some(p) => {
            report.input(p)?;
            read_cubes(p, &instance)?
        }
        None => Vec::new(),
    };
    let index = JoinIndex::new(&instance)?;
    let pts = uniform_sample(&index, &cubes, a.m, a.seed)?;
    with_output(a.out.as_deref(), |w| write_points_csv(w, &instance.partition.full, &pts))?;
    report.param("m", a.m)?;
    report.result("samples", pts.len())?;
    Ok(report)
}

fn coreset_config(t: &TreeArgs, spec: &JoinSpec, w: Option<&WeightArgs>) -> CoresetConfig {
    let mut cfg = CoresetConfig::new(t.k, t.seed);
    cfg.radius_rule = t.radius_rule.into();
    cfg.label = t.label.clone().or_else(|| spec.label.clone());
    if let Some(w) = w {
        cfg.eps1 = w.eps1;
        cfg.beta = w.beta;
        cfg.lambda = w.lambda;
        cfg.m_cap = w.m_cap;
    }
    cfg
}

fn tree_record(part: &Part, tree: &AggTree) -> serde_json::Value {
    let merges: Vec<_> = tree
        .nodes
        .iter()
        .filter(|n| n.children.is_some())
        .map(|n| {
            json!({
                "level": n.level,
                "index_set": n.index_set,
                "grid": n.grid,
                "survivors": n.survivors,
                "centers": n.centers.len(),
                "cover_radius": n.cover_radius2.sqrt(),
            })
        })
        .collect();
    json!({
        "class": part.class,
        "join_size": part.index.join_size(),
        "k": tree.options.k,
        "levels": tree.radii,
        "merges": merges,
        "final_radius": tree.summary.final_radius,
        "centers": tree.summary.centers,
        "counts": tree.summary.counts,
        "dropped": tree.summary.dropped,
    })
}

/// Builds trees for every part, honoring doubling search and rho options.
fn build_all(t: &TreeArgs, parts: &[Part], cfg: &CoresetConfig, report: &mut Report) -> Result<Vec<AggTree>> {
    let mut trees = match (t.k_max, t.target) {
        (Some(k_max), Some(target)) => {
            let mut trees = Vec::with_capacity(parts.len());
            let mut searches = Vec::with_capacity(parts.len());
            for (i, p) in parts.iter().enumerate() {
                let options = BuildOptions {
                    k: cfg.k,
                    seed: crate::seed::derive(cfg.seed, "k-search-part", i as u64),
                    radius_rule: cfg.radius_rule,
                };
                let (tree, search) = doubling_search(&p.index, cfg.k, k_max, target, 1000, &options)?;
                trees.push(tree);
                searches.push(search);
            }
            report.result("k_search", &searches)?;
            trees
        }
        _ => build_trees(parts, cfg)?,
    };
    if let Some(rho) = t.rho {
        for (tree, part) in trees.iter_mut().zip(parts) {
            let sample = uniform_sample(&part.index, &[], 2000, crate::seed::derive(cfg.seed, "diameter", 0))?;
            let delta = estimate_diameter(&sample).value;
            tree.radii.r0_hint = Some(crate::aggtree::r0_hint(delta, tree.options.k, rho));
        }
    }
    Ok(trees)
}

/// Coverage of the root cubes and per-level bounds against the materialized join.
fn oracle_tree_check(part: &Part, tree: &AggTree) -> Result<serde_json::Value> {
    let dm = match materialize(&part.index, DEFAULT_CAP) {
        Ok(dm) => dm,
        Err(Error::CapExceeded { estimated, .. }) => {
            return Ok(json!({ "skipped": format!("join has {estimated} rows") }));
        }
        Err(e) => return Err(e),
    };
    let partition = part.index.partition();
    let uncovered = dm
        .points
        .iter()
        .filter(|p| !tree.summary.cubes.iter().any(|c| c.contains(partition, p)))
        .count();
    let mut node_violations = 0;
    for node in &tree.nodes {
        let cols = node.columns(&part.index);
        let proj = dm.points.select_columns(&cols);
        let d2 = crate::kcenter::directed_hausdorff2(&proj, &node.centers)?;
        if d2 > node.bound * node.bound {
            node_violations += 1;
        }
    }
    Ok(json!({ "rows": dm.len(), "uncovered_rows": uncovered, "node_bound_violations": node_violations }))
}

fn cmd_build(a: &BuildArgs) -> Result<Report> {
    let t = &a.tree;
    let mut report = Report::new("build", Some(t.seed));
    let (spec, instance) = load(&t.spec.spec, &mut report)?;
    let cfg = coreset_config(t, &spec, None);
    report.param("k", cfg.k)?;
    report.param("radius_rule", cfg.radius_rule)?;
    report.param("label", &cfg.label)?;
    let parts = Part::split(&instance, cfg.label.as_deref())?;
    let trees = build_all(t, &parts, &cfg, &mut report)?;
    let records: Vec<_> = parts.iter().zip(&trees).map(|(p, t)| tree_record(p, t)).collect();
    report.result("features", &instance.partition.full)?;
    report.result("parts", &records)?;
    if t.oracle {
        let checks = parts
            .iter()
            .zip(&trees)
            .map(|(p, t)| oracle_tree_check(p, t))
            .collect::<Result<Vec<_>>>()?;
        report.result("oracle", &checks)?;
    }
    add_tree_timings(&mut report, &trees);
    let mut centers = Points::new(instance.dim());
    for tree in &trees {
        for c in tree.summary.centers.iter() {
            centers.push(c);
        }
    }
    with_output(a.out.as_deref(), |w| write_points_csv(w, &instance.partition.full, &centers))?;
    Ok(report)
}

fn add_tree_timings(report: &mut Report, trees: &[AggTree]) {
    report.timing("leaves_secs", trees.iter().map(|t| t.timings.leaves_secs).sum());
    report.timing("merges_secs", trees.iter().map(|t| t.timings.merges_secs).sum());
    report.timing("root_secs", trees.iter().map(|t| t.timings.root_secs).sum());
}

#[derive(Debug, Deserialize)]
struct BuildReport {
    parameters: BuildParams,
    result: BuildResult,
}

#[derive(Debug, Deserialize)]
struct BuildParams {
    label: Option<String>,
}

#[derive(Debug, Deserialize)]
struct BuildResult {
    parts: Vec<BuildPart>,
}

#[derive(Debug, Deserialize)]
struct BuildPart {
    class: Option<f64>,
    final_radius: f64,
    centers: Vec<Vec<f64>>,
}

fn coreset_record(pieces: &[Coreset], coreset: &Coreset, parts: &[Part]) -> serde_json::Value {
    let per_part: Vec<_> = pieces
        .iter()
        .zip(parts)
        .map(|(c, p)| {
            json!({
                "class": p.class,
                "params": c.params,
                "final_radius": c.final_radius,
                "total_weight": c.total_weight(),
                "heavy": c.cubes.iter().filter(|d| d.heavy).count(),
                "cubes": c.cubes,
            })
        })
        .collect();
    let (points, _) = coreset.heavy();
    json!({
        "size": points.len(),
        "total_weight": coreset.total_weight(),
        "final_radius": coreset.final_radius,
        "parts": per_part,
    })
}

fn oracle_weight_check(part: &Part, piece: &Coreset) -> Result<serde_json::Value> {
    let dm = match materialize(&part.index, DEFAULT_CAP) {
        Ok(dm) => dm,
        Err(Error::CapExceeded { estimated, .. }) => {
            return Ok(json!({ "skipped": format!("join has {estimated} rows") }));
        }
        Err(e) => return Err(e),
    };
    let partition = part.index.partition();
    let cubes: Vec<PseudoCube> = piece
        .points
        .iter()
        .map(|c| PseudoCube::full(partition, c, piece.final_radius))
        .collect();
    let exact = exact_weights(partition, &cubes, &piece.heavy_flags(), &dm);
    let lonely = lonely_light_cubes(piece, |a, b| block_distance(partition, a, b));
    Ok(json!({ "exact_weights": exact, "light_without_heavy_neighbor": lonely }))
}

fn write_coreset(path: Option<&Path>, coreset: &Coreset) -> Result<()> {
    with_output(path, |w| coreset.write_csv(w))
}

fn cmd_weigh(a: &WeighArgs) -> Result<Report> {
    let mut report = Report::new("weigh", Some(a.seed));
    let (_, instance) = load(&a.spec.spec, &mut report)?;
    report.input(&a.build)?;
    let text = std::fs::read_to_string(&a.build).map_err(|e| Error::io(&a.build, e))?;
    let build: BuildReport = serde_json::from_str(&text)?;
    let mut cfg = CoresetConfig::new(1, a.seed);
    cfg.label = build.parameters.label.clone();
    cfg.eps1 = a.weights.eps1;
    cfg.beta = a.weights.beta;
    cfg.lambda = a.weights.lambda;
    cfg.m_cap = a.weights.m_cap;
    report.param("weights", &a.weights_json())?;
    let parts = Part::split(&instance, cfg.label.as_deref())?;
    if parts.len() != build.result.parts.len()
        || parts.iter().zip(&build.result.parts).any(|(p, b)| p.class.map(f64::to_bits) != b.class.map(f64::to_bits))
    {
        return Err(Error::contract("build report does not match the join's classes"));
    }
    let started = Instant::now();
    let mut trees = Vec::with_capacity(parts.len());
    for (p, b) in parts.iter().zip(&build.result.parts) {
        let summary = root_summary(&p.index, &b.centers, b.final_radius)?;
        trees.push(AggTree {
            options: BuildOptions::new(b.centers.len(), a.seed),
            nodes: Vec::new(),
            root: 0,
            radii: Default::default(),
            summary,
            timings: Default::default(),
        });
    }
    let (pieces, coreset) = weigh_trees(&parts, &trees, &cfg)?;
    report.timing("weights_secs", started.elapsed().as_secs_f64());
    report.result("coreset", coreset_record(&pieces, &coreset, &parts))?;
    if a.oracle {
        let checks = parts
            .iter()
            .zip(&pieces)
            .map(|(p, c)| oracle_weight_check(p, c))
            .collect::<Result<Vec<_>>>()?;
        report.result("oracle", &checks)?;
    }
    write_coreset(a.out.as_deref(), &coreset)?;
    Ok(report)
}

impl WeighArgs {
    fn weights_json(&self) -> serde_json::Value {
        json!({
            "eps1": self.weights.eps1,
            "beta": self.weights.beta,
            "lambda": self.weights.lambda,
            "m_cap": self.weights.m_cap,
        })
    }
}

/// Root cubes for given centers; empty cubes are dropped.
fn root_summary(index: &JoinIndex, centers: &[Vec<f64>], radius: f64) -> Result<RootSummary> {
    let partition = index.partition();
    let mut counter = index.counter();
    let mut kept = Points::new(partition.dim());
    let mut cubes = Vec::new();
    let mut counts = Vec::new();
    let mut dropped = 0;
    for c in centers {
        if c.len() != partition.dim() {
            return Err(Error::contract("center dimension does not match the join"));
        }
        let cube = PseudoCube::full(partition, c, radius);
        let n = counter.count_cubes(std::slice::from_ref(&cube))?;
        if n == 0 {
            dropped += 1;
            continue;
        }
        kept.push(c);
        cubes.push(cube);
        counts.push(n);
    }
    Ok(RootSummary {
        centers: kept,
        final_radius: radius,
        cubes,
        counts,
        dropped,
    })
}

fn cmd_coreset(a: &CoresetArgs) -> Result<Report> {
    let t = &a.tree;
    let mut report = Report::new("coreset", Some(t.seed));
    let (spec, instance) = load(&t.spec.spec, &mut report)?;
    let cfg = coreset_config(t, &spec, Some(&a.weights));
    report.param("config", &cfg)?;
    let parts = Part::split(&instance, cfg.label.as_deref())?;
    let trees = build_all(t, &parts, &cfg, &mut report)?;
    let started = Instant::now();
    let (pieces, coreset) = weigh_trees(&parts, &trees, &cfg)?;
    report.timing("weights_secs", started.elapsed().as_secs_f64());
    add_tree_timings(&mut report, &trees);
    let records: Vec<_> = parts.iter().zip(&trees).map(|(p, t)| tree_record(p, t)).collect();
    report.result("features", &instance.partition.full)?;
    report.result("trees", &records)?;
    report.result("coreset", coreset_record(&pieces, &coreset, &parts))?;
    if t.oracle {
        let mut checks = Vec::new();
        for ((p, tree), piece) in parts.iter().zip(&trees).zip(&pieces) {
            checks.push(json!({
                "tree": oracle_tree_check(p, tree)?,
                "weights": oracle_weight_check(p, piece)?,
            }));
        }
        report.result("oracle", &checks)?;
    }
    write_coreset(a.out.as_deref(), &coreset)?;
    Ok(report)
}

/// Reads a numeric CSV, splitting off a `weight` column if present.
fn read_weighted_csv(path: &Path) -> Result<(Table, Option<Vec<f64>>)> {
    let table = Table::from_csv("data", path, None)?;
    let weights = table.column("weight").map(<[f64]>::to_vec);
    if weights.is_none() {
        return Ok((table, None));
    }
    let keep: Vec<String> = table.feature_names().filter(|f| *f != "weight").map(str::to_string).collect();
    let table = Table::from_csv("data", path, Some(&keep))?;
    Ok((table, weights))
}

fn table_points(table: &Table) -> Points {
    let mut p = Points::with_capacity(table.columns().len(), table.rows());
    for r in 0..table.rows() {
        p.push(&table.row(r));
    }
    p
}

fn dataset(points: &Points, features: &[String], model: &ModelArgs) -> Result<Dataset> {
    let m = model.model();
    if !m.needs_labels() {
        return Ok(Dataset::unlabeled(points.clone()));
    }
    let label = model
        .label
        .as_deref()
        .ok_or_else(|| Error::contract("this model needs --label"))?;
    let col = features
        .iter()
        .position(|f| f == label)
        .ok_or_else(|| Error::contract(format!("label column {label} not found")))?;
    Dataset::with_label_column(points, col)
}

fn cmd_train(a: &TrainArgs) -> Result<Report> {
    let mut report = Report::new("train", Some(a.seed));
    report.input(&a.data)?;
    let (table, weights) = read_weighted_csv(&a.data)?;
    let features: Vec<String> = table.feature_names().map(str::to_string).collect();
    let data = dataset(&table_points(&table), &features, &a.model)?;
    let model = a.model.model();
    let options = TrainOptions {
        max_iter: a.max_iter,
        ..TrainOptions::default()
    };
    report.param("model", model)?;
    report.param("train", options)?;
    let started = Instant::now();
    let theta = train(&model, &data, weights.as_deref(), &options, a.seed)?;
    report.timing("train_secs", started.elapsed().as_secs_f64());
    let objective = model.weighted_objective(&theta, &data, weights.as_deref())?;
    report.result("objective", objective)?;
    report.result("theta", &theta)?;
    with_output(a.out.as_deref(), |w| {
        serde_json::to_writer_pretty(&mut *w, &theta)?;
        writeln!(w).map_err(|e| Error::io("<theta>", e))
    })?;
    Ok(report)
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<Report> {
    let mut report = Report::new("evaluate", Some(a.seed));
    let (_, instance) = load(&a.spec.spec, &mut report)?;
    report.input(&a.coreset)?;
    let index = JoinIndex::new(&instance)?;
    let dm = materialize(&index, a.cap)?;
    let (table, weights) = read_weighted_csv(&a.coreset)?;
    let weights = weights.ok_or_else(|| Error::contract("coreset CSV needs a weight column"))?;
    let features: Vec<String> = table.feature_names().map(str::to_string).collect();
    if features != dm.features {
        return Err(Error::contract("coreset columns differ from the join's features"));
    }
    let model = a.model.model();
    let full = dataset(&dm.points, &dm.features, &a.model)?;
    let small = dataset(&table_points(&table), &features, &a.model)?;
    let diameter = estimate_diameter(&dm.points);
    report.param("model", model)?;
    report.param("eps1", a.eps1)?;
    report.param("radius", a.radius)?;
    let options = TrainOptions::default();
    let result = match &a.theta {
        Some(p) => {
            report.input(p)?;
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let theta: Theta = serde_json::from_str(&text)?;
            let eval = evaluate(&model, &theta, &full, &small, &weights, diameter, a.radius, a.eps1)?;
            json!({ "eval": eval })
        }
        None => {
            let started = Instant::now();
            let theta_c = train(&model, &small, Some(&weights), &options, a.seed)?;
            let theta_star = train(&model, &full, None, &options, a.seed)?;
            report.timing("train_secs", started.elapsed().as_secs_f64());
            let at_coreset = evaluate(&model, &theta_c, &full, &small, &weights, diameter, a.radius, a.eps1)?;
            let at_full = evaluate(&model, &theta_star, &full, &small, &weights, diameter, a.radius, a.eps1)?;
            json!({
                "theta_coreset": theta_c,
                "theta_full": theta_star,
                "eval_at_coreset_theta": at_coreset,
                "eval_at_full_theta": at_full,
                "approx": approx_metric(&model, &full, &theta_c, &theta_star)?,
            })
        }
    };
    report.result("evaluation", &result)?;
    with_output(a.out.as_deref(), |w| {
        serde_json::to_writer_pretty(&mut *w, &result)?;
        writeln!(w).map_err(|e| Error::io("<eval>", e))
    })?;
    Ok(report)
}

fn cmd_synth(a: &SynthArgs) -> Result<Report> {
    let mut report = Report::new("synth", Some(a.seed));
    let cfg = SynthConfig {
        tables: a.tables,
        rows: a.rows,
        anchors: a.anchors,
        features: a.features,
        shape: match a.shape {
            ShapeArg::Star => Shape::Star,
            ShapeArg::Chain => Shape::Chain,
        },
        clusters: a.clusters,
        cluster_skew: a.cluster_skew,
        far_clusters: a.far_clusters,
        key_skew: a.key_skew,
        label: a.label,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let tables = generate(&cfg)?;
    let spec = write_instance(&tables, &a.out, a.label.then_some("y"))?;
    println!("{}", spec.display());
    report.param("synth", &cfg)?;
    report.result("spec", spec.display().to_string())?;
    Ok(report)
}
