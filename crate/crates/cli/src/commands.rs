//! Command-line front end.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use clustcube_core::cube::{AggregateMode, ClustCube, CubeConfig};
use clustcube_core::lattice::{enumerate_lattice, select_cuboids, DimensionSpec, SelectionPolicy};
use clustcube_core::mdclust::{kmeans, silhouette, FeatureMatrix, KMeansParams};
use clustcube_core::star::{load_schema_manifest, validate_star, write_csv, StarData};
use clustcube_core::tourism::{self, GenConfig, Scale};
use serde_json::json;

use crate::error::AppError;
use crate::server;
use crate::views;
use crate::workspace::{base_config, build_cube, materialize, BuildParams, CuboidDef, Workspace};

/// Largest lattice `select` scores exhaustively.
const MAX_SELECT_CANDIDATES: u128 = 1 << 14;

#[derive(Debug, Parser)]
#[command(name = "clustcube", version, about = "Clustered OLAP cubes over star-schema data")]
struct Cli {
    /// Directory holding schema.json and the table CSVs.
    #[arg(long, global = true, default_value = ".")]
    data_dir: PathBuf,
    /// Print machine-readable JSON on standard output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Recluster,
    #[value(name = "merge_stats", alias = "merge-stats")]
    MergeStats,
}

impl From<ModeArg> for AggregateMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Recluster => AggregateMode::Recluster,
            ModeArg::MergeStats => AggregateMode::MergeStats,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args, Default)]
struct CubeArgs {
    /// Lattice node, `dim=level,...`; `ALL` for the apex.
    #[arg(long)]
    at: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    min_cell_size: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Regression response attribute.
    #[arg(long)]
    target: Option<String>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    threads: Option<usize>,
}

impl CubeArgs {
    fn params(&self) -> BuildParams {
        BuildParams {
            at: self.at.clone(),
            k: self.k,
            seed: self.seed,
            min_cell_size: self.min_cell_size,
            max_iter: self.max_iter,
            tol: self.tol,
            lambda: self.lambda,
            target: self.target.clone(),
            threads: self.threads,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the synthetic tourism dataset.
    Generate {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "tiny")]
        scale: String,
        /// Output directory; defaults to --data-dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Load a star schema manifest and its CSVs into the data directory.
    Ingest {
        /// Manifest to ingest; table files resolve relative to it. Without
        /// it, the data directory's own tables are loaded and summarized.
        #[arg(long)]
        schema: Option<PathBuf>,
    },
    /// Check foreign keys, hierarchies and measures.
    Validate,
    /// Materialize the objects of a cuboid definition or a query file.
    Objects {
        #[arg(long, conflicts_with = "codq")]
        cuboid: Option<String>,
        #[arg(long)]
        codq: Option<PathBuf>,
        /// Objects to print; all of them with --all.
        #[arg(long, default_value_t = 20)]
        limit: usize,
        #[arg(long)]
        all: bool,
    },
    /// Count the cuboids of a lattice.
    Lattice {
        /// Number of flat dimensions.
        #[arg(long, conflicts_with_all = ["levels", "cuboid"])]
        dims: Option<usize>,
        /// Comma-separated level counts, one per dimension.
        #[arg(long, conflicts_with = "cuboid")]
        levels: Option<String>,
        /// Lattice of a cuboid definition's coordinate dimensions.
        #[arg(long)]
        cuboid: Option<String>,
        /// Also list every cuboid name.
        #[arg(long)]
        list: bool,
    },
    /// Rank lattice nodes of a definition by cell-occupancy entropy.
    Select {
        #[arg(long)]
        cuboid: String,
        #[arg(long, default_value_t = 5)]
        top: usize,
        /// Return these nodes instead of ranking.
        #[arg(long = "pin")]
        pinned: Vec<String>,
    },
    /// Build a cube and save it under cubes/.
    Build {
        #[arg(long)]
        cuboid: String,
        /// Define (or redefine) a user cuboid from this query file first.
        #[arg(long)]
        codq: Option<PathBuf>,
        #[command(flatten)]
        cube: CubeArgs,
    },
    /// Roll a cube up one step along a dimension.
    Rollup {
        #[arg(long)]
        cuboid: String,
        #[arg(long)]
        dim: String,
        #[arg(long, value_enum, default_value = "recluster")]
        mode: ModeArg,
        #[command(flatten)]
        cube: CubeArgs,
    },
    /// Cluster the cells of a cuboid, or the rows of a numeric CSV.
    Cluster {
        #[arg(long, required_unless_present = "input", conflicts_with = "input")]
        cuboid: Option<String>,
        /// Numeric CSV with a header row.
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        cube: CubeArgs,
    },
    /// Fit the per-cell regressions of a cuboid.
    Regress {
        #[arg(long)]
        cuboid: String,
        /// Known noise standard deviation; adds coefficient standard errors.
        #[arg(long)]
        sigma: Option<f64>,
        #[command(flatten)]
        cube: CubeArgs,
    },
    /// Print a saved cube.
    Export {
        #[arg(long)]
        cuboid: String,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Keep cells whose member matches, `dim:member`; repeatable.
        #[arg(long)]
        slice: Vec<String>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        #[arg(long, env = "CLUSTCUBE_TOKEN")]
        auth_token: Option<String>,
    },
}

struct Output {
    json: serde_json::Value,
    text: Option<String>,
}

impl Output {
    fn json(json: serde_json::Value) -> Output {
        Output { json, text: None }
    }

    fn with_text(json: serde_json::Value, text: String) -> Output {
        Output { json, text: Some(text) }
    }
}

/// Runs the command line and returns the process exit code: 0 on success,
/// 1 on a domain error and 2 on a usage error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let json_mode = cli.json;
    match execute(cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            let rendered = match (&out.text, json_mode) {
                (Some(text), false) => text.clone(),
                _ => serde_json::to_string(&out.json).expect("serializable"),
            };
            let _ = writeln!(stdout, "{rendered}");
            0
        }
        Err(AppError::BadRequest(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(cli: Cli) -> Result<Output, AppError> {
    let dir = cli.data_dir;
    match cli.command {
        Command::Generate { seed, scale, out } => generate(seed, &scale, out.unwrap_or(dir)),
        Command::Ingest { schema } => ingest(&dir, schema.as_deref()),
        Command::Validate => validate(&dir),
        Command::Objects {
            cuboid,
            codq,
            limit,
            all,
        } => objects(&dir, cuboid, codq, if all { usize::MAX } else { limit }),
        Command::Lattice {
            dims,
            levels,
            cuboid,
            list,
        } => lattice(&dir, dims, levels, cuboid, list),
        Command::Select { cuboid, top, pinned } => select(&dir, &cuboid, top, &pinned),
        Command::Build { cuboid, codq, cube } => build(&dir, &cuboid, codq.as_deref(), &cube),
        Command::Rollup {
            cuboid,
            dim,
            mode,
            cube,
        } => rollup(&dir, &cuboid, &dim, mode.into(), &cube),
        Command::Cluster { cuboid, input, cube } => match (cuboid, input) {
            (_, Some(input)) => cluster_file(&input, &cube),
            (Some(name), None) => {
                let (ws, cube) = rebuild(&dir, &name, &cube)?;
                ws.save_cube(&name, &cube)?;
                Ok(Output::json(views::clustering(&cube)?))
            }
            (None, None) => Err(AppError::BadRequest("--cuboid or --input is required".into())),
        },
        Command::Regress { cuboid, sigma, cube } => {
            let (ws, cube) = rebuild(&dir, &cuboid, &cube)?;
            ws.save_cube(&cuboid, &cube)?;
            Ok(Output::json(views::regression(&cube, sigma)?))
        }
        Command::Export { cuboid, format, slice } => export(&dir, &cuboid, format, &slice),
        Command::Serve { bind, auth_token } => {
            let ws = Workspace::open(&dir)?;
            let runtime = tokio::runtime::Runtime::new().map_err(|e| AppError::io(&dir, e))?;
            runtime.block_on(server::serve(ws, bind, auth_token))?;
            Ok(Output::json(json!({"stopped": true})))
        }
    }
}

fn generate(seed: u64, scale: &str, out: PathBuf) -> Result<Output, AppError> {
    let scale = Scale::parse(scale)
        .ok_or_else(|| AppError::BadRequest(format!("unknown scale `{scale}`; expected tiny, small or medium")))?;
    let (data, truth) = tourism::generate(&GenConfig {
        seed,
        scale,
        out: out.clone(),
    })?;
    let presets: Vec<_> = tourism::presets()
        .into_iter()
        .map(|p| json!({"name": p.name, "dimensions": p.dimensions}))
        .collect();
    let dims: Vec<&str> = data.schema.dimensions.iter().map(|d| d.table.as_str()).collect();
    let json = json!({
        "out": out,
        "seed": seed,
        "scale": scale.name(),
        "fact": data.schema.fact,
        "fact_rows": truth.fact_rows,
        "tables": data.tables.len(),
        "dimension_tables": dims,
        "presets": presets,
    });
    let text = format!(
        "wrote {} tables ({} reservations) to {}",
        data.tables.len(),
        truth.fact_rows,
        out.display()
    );
    Ok(Output::with_text(json, text))
}

fn table_summary(data: &StarData) -> serde_json::Value {
    let rows: serde_json::Map<String, serde_json::Value> =
        data.tables.iter().map(|(n, t)| (n.clone(), t.len().into())).collect();
    json!({"fact": data.schema.fact, "tables": rows})
}

fn ingest(dir: &Path, schema: Option<&Path>) -> Result<Output, AppError> {
    let data = match schema {
        None => StarData::load_dir(dir)?,
        Some(path) => {
            let manifest = load_schema_manifest(path)?;
            let base = path.parent().unwrap_or(Path::new("."));
            let mut tables = Vec::new();
            for def in &manifest.tables {
                let file = base.join(def.file_name());
                tables.push(clustcube_core::star::ingest_csv(&manifest, &def.name, file)?);
            }
            let data = StarData::new(manifest, tables)?;
            fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
            let mut schema = data.schema.clone();
            for t in &mut schema.tables {
                t.file = None;
            }
            let path = dir.join("schema.json");
            fs::write(&path, schema.to_json_pretty() + "\n").map_err(|e| AppError::io(&path, e))?;
            for def in &schema.tables {
                write_csv(&data.tables[&def.name], dir.join(def.file_name()))?;
            }
            data
        }
    };
    let total: usize = data.tables.values().map(|t| t.len()).sum();
    let text = format!("{} tables, {total} rows", data.tables.len());
    Ok(Output::with_text(table_summary(&data), text))
}

fn validate(dir: &Path) -> Result<Output, AppError> {
    let data = StarData::load_dir(dir)?;
    let report = validate_star(&data);
    let json = json!({
        "valid": report.is_empty(),
        "foreign_key_violations": report.foreign_key_violations(),
        "hierarchy_violations": report.hierarchy_violations(),
        "violations": report.violations,
    });
    if !report.is_empty() {
        // The report is the useful output even though validation failed.
        println!("{}", serde_json::to_string(&json).expect("serializable"));
        return Err(AppError::Document {
            path: dir.to_path_buf(),
            message: format!("{} violations", report.violations.len()),
        });
    }
    Ok(Output::with_text(json, "valid".into()))
}

fn objects(dir: &Path, cuboid: Option<String>, codq: Option<PathBuf>, limit: usize) -> Result<Output, AppError> {
    let data = StarData::load_dir(dir)?;
    let text = match (&cuboid, &codq) {
        (_, Some(path)) => fs::read_to_string(path).map_err(|e| AppError::io(path, e))?,
        (Some(name), None) => Workspace::open(dir)?.def(name)?.codq.clone(),
        (None, None) => return Err(AppError::BadRequest("--cuboid or --codq is required".into())),
    };
    let q = clustcube_core::codq::GlobalCodq::from_text(&text)?;
    let set = clustcube_core::codq::materialize_objects(&q, &data)?;
    let rows: Vec<&Vec<clustcube_core::Value>> = set.objects.iter().take(limit).collect();
    let json = json!({
        "count": set.len(),
        "attributes": set.schema.attributes,
        "objects": rows,
    });
    let text = format!("{} objects with {} attributes", set.len(), set.schema.attributes.len());
    Ok(Output::with_text(json, text))
}

fn lattice(
    dir: &Path,
    dims: Option<usize>,
    levels: Option<String>,
    cuboid: Option<String>,
    list: bool,
) -> Result<Output, AppError> {
    let specs: Vec<DimensionSpec> = match (dims, levels, cuboid) {
        (Some(n), _, _) => (0..n).map(|i| DimensionSpec::flat(format!("D{i}"))).collect(),
        (None, Some(levels), _) => levels
            .split(',')
            .enumerate()
            .map(|(i, l)| {
                let count: usize = l
                    .trim()
                    .parse()
                    .map_err(|_| AppError::BadRequest(format!("level count `{l}` is not a number")))?;
                let names: Vec<String> = (0..count).map(|j| format!("L{j}")).collect();
                let refs: Vec<&str> = names.iter().map(String::as_str).collect();
                Ok(DimensionSpec::new(format!("D{i}"), &refs))
            })
            .collect::<Result<_, AppError>>()?,
        (None, None, Some(name)) => {
            let ws = Workspace::open(dir)?;
            let ctx = materialize(ws.def(&name)?, &ws.data)?;
            ctx.shape().dimensions().to_vec()
        }
        (None, None, None) => {
            return Err(AppError::BadRequest(
                "one of --dims, --levels or --cuboid is required".into(),
            ))
        }
    };
    let lattice = enumerate_lattice(specs)?;
    let mut json = json!({"cuboids": lattice.len()});
    if list {
        let names: Vec<String> = lattice
            .cuboids()
            .iter()
            .map(|c| lattice.shape().format_cuboid(c))
            .collect();
        json["names"] = names.into();
    }
    Ok(Output::json(json))
}

fn select(dir: &Path, name: &str, top: usize, pinned: &[String]) -> Result<Output, AppError> {
    let ws = Workspace::open(dir)?;
    let ctx = materialize(ws.def(name)?, &ws.data)?;
    let shape = ctx.shape();
    let (policy, candidates) = if pinned.is_empty() {
        if shape.count() > MAX_SELECT_CANDIDATES {
            return Err(AppError::BadRequest(format!(
                "lattice has {} cuboids; selection scores at most {MAX_SELECT_CANDIDATES}",
                shape.count()
            )));
        }
        let n = ctx.objects().len();
        let candidates: Vec<_> = shape
            .iter()
            .map(|c| {
                let mut counts: HashMap<Vec<clustcube_core::Value>, u64> = HashMap::new();
                for o in 0..n {
                    if let Some(key) = ctx.key_of(&c, o) {
                        *counts.entry(key).or_default() += 1;
                    }
                }
                let mut counts: Vec<u64> = counts.into_values().collect();
                counts.sort_unstable();
                (c, counts)
            })
            .collect();
        (SelectionPolicy::BalancedOccupancy, candidates)
    } else {
        let list = pinned
            .iter()
            .map(|p| shape.parse_cuboid(p))
            .collect::<Result<Vec<_>, _>>()?;
        (SelectionPolicy::Pinned(list), Vec::new())
    };
    let chosen = select_cuboids(shape, &candidates, &policy, top)?;
    let rows: Vec<_> = chosen
        .iter()
        .map(|c| {
            let counts = candidates.iter().find(|(x, _)| x == c).map(|(_, n)| n);
            json!({
                "cuboid": shape.format_cuboid(c),
                "level": c.level(),
                "cells": counts.map(|n| n.len()),
                "entropy": counts.map(|n| clustcube_core::lattice::occupancy_entropy(n)),
            })
        })
        .collect();
    Ok(Output::json(json!({"candidates": candidates.len(), "selected": rows})))
}

/// Rebuilds a definition from its saved setup, overridden by `args`.
fn rebuild(dir: &Path, name: &str, args: &CubeArgs) -> Result<(Workspace, ClustCube), AppError> {
    let ws = Workspace::open(dir)?;
    let def = ws.def(name)?.clone();
    let saved = ws.saved_setup(name)?;
    let (base, at): (CubeConfig, Option<String>) = match saved {
        Some((config, at)) => (config, Some(at)),
        None => (base_config(&def), None),
    };
    let ctx = materialize(&def, &ws.data)?;
    let cube = build_cube(&def, &ctx, base, &args.params(), at.as_deref())?;
    Ok((ws, cube))
}

fn build_summary(name: &str, cube: &ClustCube, path: &Path, started: Instant) -> Output {
    let json = json!({
        "name": name,
        "cuboid": cube.cuboid_name(),
        "cells": cube.cells.len(),
        "object_count": cube.object_count(),
        "placed_count": cube.placed_count(),
        "unplaced_count": cube.unplaced.len(),
        "saved": path,
        "elapsed_ms": started.elapsed().as_secs_f64() * 1e3,
    });
    let text = format!(
        "{name} at [{}]: {} cells, {} of {} objects placed; saved {}",
        cube.cuboid_name(),
        cube.cells.len(),
        cube.placed_count(),
        cube.object_count(),
        path.display()
    );
    Output::with_text(json, text)
}

fn build(dir: &Path, name: &str, codq: Option<&Path>, args: &CubeArgs) -> Result<Output, AppError> {
    let started = Instant::now();
    if let Some(path) = codq {
        let mut ws = Workspace::open(dir)?;
        let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        ws.register(CuboidDef {
            name: name.to_string(),
            codq: text,
            default_cuboid: args.at.clone().unwrap_or_default(),
            default_k: 3,
            target: None,
            dimensions: Vec::new(),
            preset: false,
        })?;
        let old = ws.cube_path(name);
        if old.exists() {
            fs::remove_file(&old).map_err(|e| AppError::io(&old, e))?;
        }
    }
    let (ws, cube) = rebuild(dir, name, args)?;
    let path = ws.save_cube(name, &cube)?;
    Ok(build_summary(name, &cube, &path, started))
}

fn rollup(dir: &Path, name: &str, dim: &str, mode: AggregateMode, args: &CubeArgs) -> Result<Output, AppError> {
    let (ws, cube) = rebuild(dir, name, args)?;
    let parent = cube.roll_up(dim, mode)?;
    ws.save_cube(name, &parent)?;
    Ok(Output::json(crate::workspace::cube_document(name, &parent)))
}

fn cluster_file(path: &Path, args: &CubeArgs) -> Result<Output, AppError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| AppError::Document {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| AppError::Document {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let row = record
            .iter()
            .map(|f| f.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| AppError::Document {
                path: path.to_path_buf(),
                message: format!("row {} has a non-numeric field", i + 1),
            })?;
        rows.push(row);
    }
    let defaults = KMeansParams::default();
    let m = FeatureMatrix::from_rows(&rows);
    let c = kmeans(
        &m,
        args.k.unwrap_or(defaults.k),
        args.seed.unwrap_or(defaults.seed),
        args.max_iter.unwrap_or(defaults.max_iter),
        args.tol.unwrap_or(defaults.tol),
    )?;
    let s = if c.k >= 2 { Some(silhouette(&m, &c)?) } else { None };
    let mut json = serde_json::to_value(&c).expect("serializable");
    json["sizes"] = c.sizes().into();
    json["silhouette"] = json!(s);
    Ok(Output::json(json))
}

fn member_text(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn export(dir: &Path, name: &str, format: Format, slices: &[String]) -> Result<Output, AppError> {
    let ws = Workspace::open(dir)?;
    ws.def(name)?;
    let mut doc = ws
        .saved_cube(name)?
        .ok_or_else(|| AppError::NotBuilt(name.to_string()))?;
    let filters = views::parse_slices(slices)?;
    if !filters.is_empty() {
        let dims: Vec<String> = doc["dimensions"]
            .as_array()
            .map(|a| a.iter().map(member_text).collect())
            .unwrap_or_default();
        let mut tests = Vec::new();
        for (dim, members) in &filters {
            let pos = dims
                .iter()
                .position(|d| d == dim)
                .ok_or_else(|| AppError::Cube(clustcube_core::cube::CubeError::UnknownDimension(dim.clone())))?;
            tests.push((pos, members));
        }
        if let Some(cells) = doc["cells"].as_array_mut() {
            cells.retain(|c| {
                tests
                    .iter()
                    .all(|(pos, members)| members.contains(&member_text(&c["key"][*pos])))
            });
        }
        doc["unplaced"] = json!([]);
        doc["unplaced_count"] = 0.into();
    }
    match format {
        Format::Json => Ok(Output::json(doc)),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header: Vec<String> = doc["dimensions"]
                .as_array()
                .map(|a| a.iter().map(member_text).collect())
                .unwrap_or_default();
            header.extend(
                [
                    "count",
                    "clusters",
                    "sse",
                    "regression_n",
                    "r2",
                    "rmse",
                    "lambda",
                    "insufficient_rows",
                ]
                .map(String::from),
            );
            w.write_record(&header).expect("in-memory write");
            for c in doc["cells"].as_array().into_iter().flatten() {
                let mut rec: Vec<String> = c["key"].as_array().into_iter().flatten().map(member_text).collect();
                rec.push(member_text(&c["count"]));
                rec.push(member_text(&c["clustering"]["k"]));
                rec.push(member_text(&c["clustering"]["sse"]));
                rec.push(member_text(&c["regression"]["n"]));
                rec.push(member_text(&c["regression"]["r2"]));
                rec.push(member_text(&c["regression"]["rmse"]));
                rec.push(member_text(&c["regression"]["lambda"]));
                rec.push(c["insufficient_rows"].as_bool().unwrap_or(false).to_string());
                w.write_record(&rec).expect("in-memory write");
            }
            let text = String::from_utf8(w.into_inner().expect("flushed")).expect("utf-8");
            Ok(Output::with_text(json!({"csv": text}), text.trim_end().to_string()))
        }
    }
}
