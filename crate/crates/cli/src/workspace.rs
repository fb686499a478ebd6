//! A data directory: star schema and tables, cuboid definitions and saved
//! cubes.
//!
//! ```text
//! <data-dir>/schema.json, <table>.csv     star data
//! <data-dir>/presets/index.json           preset cuboid definitions
//! <data-dir>/cuboids/<name>.json          user-defined cuboid definitions
//! <data-dir>/cubes/<name>.json            last built cube per definition
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clustcube_core::codq::{materialize_objects, GlobalCodq, ObjectSet};
use clustcube_core::cube::{build, ClustCube, CubeConfig, CubeContext, ExecMode};
use clustcube_core::lattice::CuboidId;
use clustcube_core::star::StarData;
use clustcube_core::tourism::CuboidPreset;
use serde::{Deserialize, Serialize};

use crate::error::AppError;

/// A named object definition plus the lattice node it is built at by default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuboidDef {
    pub name: String,
    pub codq: String,
    /// `dim=level,...`; empty means the apex.
    #[serde(default)]
    pub default_cuboid: String,
    #[serde(default = "default_k")]
    pub default_k: usize,
    #[serde(default)]
    pub target: Option<String>,
    #[serde(default)]
    pub dimensions: Vec<String>,
    #[serde(default)]
    pub preset: bool,
}

fn default_k() -> usize {
    3
}

impl From<CuboidPreset> for CuboidDef {
    fn from(p: CuboidPreset) -> Self {
        CuboidDef {
            name: p.name,
            codq: p.codq,
            default_cuboid: p.default_cuboid,
            default_k: p.default_k,
            target: Some(p.target),
            dimensions: p.dimensions,
            preset: true,
        }
    }
}

/// Optional overrides applied on top of a base [`CubeConfig`].
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildParams {
    pub at: Option<String>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub min_cell_size: Option<usize>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub lambda: Option<f64>,
    pub target: Option<String>,
    pub threads: Option<usize>,
}

impl BuildParams {
    pub fn apply(&self, mut config: CubeConfig) -> CubeConfig {
        if let Some(k) = self.k {
            config.k = k;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(m) = self.min_cell_size {
            config.min_cell_size = m;
        }
        if let Some(m) = self.max_iter {
            config.max_iter = m;
        }
        if let Some(t) = self.tol {
            config.tol = t;
        }
        if let Some(l) = self.lambda {
            config.lambda = l;
        }
        if let Some(t) = &self.target {
            config.target = Some(t.clone());
        }
        match self.threads {
            Some(1) => config.mode = ExecMode::Sequential,
            Some(n) => config.mode = ExecMode::Concurrent(n),
            None => {}
        }
        config
    }
}

/// Cube configuration a definition starts from when nothing was saved.
pub fn base_config(def: &CuboidDef) -> CubeConfig {
    CubeConfig {
        k: def.default_k,
        target: def.target.clone(),
        ..CubeConfig::default()
    }
}

pub fn materialize(def: &CuboidDef, data: &StarData) -> Result<Arc<CubeContext>, AppError> {
    let q = GlobalCodq::from_text(&def.codq)?;
    let objects: Arc<ObjectSet> = Arc::new(materialize_objects(&q, data)?);
    Ok(Arc::new(CubeContext::new(objects, data)?))
}

/// Builds `def` over `ctx`, resolving the lattice node from `params.at` or
/// `fallback_at`, else the definition default.
pub fn build_cube(
    def: &CuboidDef,
    ctx: &Arc<CubeContext>,
    base: CubeConfig,
    params: &BuildParams,
    fallback_at: Option<&str>,
) -> Result<ClustCube, AppError> {
    let at = params.at.as_deref().or(fallback_at).unwrap_or(&def.default_cuboid);
    let cuboid: CuboidId = ctx.shape().parse_cuboid(at)?;
    let config = params.apply(base);
    Ok(build(ctx, &cuboid, &config)?)
}

/// Export document with the definition name attached.
pub fn cube_document(name: &str, cube: &ClustCube) -> serde_json::Value {
    let mut doc = cube.export();
    doc["name"] = name.into();
    doc
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, AppError> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| AppError::Document {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), AppError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| AppError::io(parent, e))?;
    }
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    fs::write(path, text).map_err(|e| AppError::io(path, e))
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

#[derive(Debug, Clone)]
pub struct Workspace {
    pub dir: PathBuf,
    pub data: Arc<StarData>,
    pub defs: BTreeMap<String, CuboidDef>,
}

impl Workspace {
    pub fn open(dir: impl AsRef<Path>) -> Result<Workspace, AppError> {
        let dir = dir.as_ref().to_path_buf();
        let data = Arc::new(StarData::load_dir(&dir)?);
        let mut defs = BTreeMap::new();
        let index = dir.join("presets").join("index.json");
        if index.exists() {
            let presets: Vec<CuboidPreset> = read_json(&index)?;
            for p in presets {
                defs.insert(p.name.clone(), CuboidDef::from(p));
            }
        }
        let user_dir = dir.join("cuboids");
        if user_dir.is_dir() {
            let mut paths: Vec<PathBuf> = fs::read_dir(&user_dir)
                .map_err(|e| AppError::io(&user_dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            paths.sort();
            for p in paths {
                let def: CuboidDef = read_json(&p)?;
                defs.insert(def.name.clone(), CuboidDef { preset: false, ..def });
            }
        }
        Ok(Workspace { dir, data, defs })
    }

    pub fn def(&self, name: &str) -> Result<&CuboidDef, AppError> {
        self.defs
            .get(name)
            .ok_or_else(|| AppError::UnknownCuboid(name.to_string()))
    }

    /// Checks and stores a user-defined cuboid.
    pub fn register(&mut self, def: CuboidDef) -> Result<(), AppError> {
        check_definition(&def, &self.data)?;
        if self.defs.get(&def.name).is_some_and(|d| d.preset) {
            return Err(AppError::BadRequest(format!(
                "`{}` is a preset and cannot be redefined",
                def.name
            )));
        }
        let def = CuboidDef { preset: false, ..def };
        write_json(&self.dir.join("cuboids").join(format!("{}.json", def.name)), &def)?;
        self.defs.insert(def.name.clone(), def);
        Ok(())
    }

    pub fn cube_path(&self, name: &str) -> PathBuf {
        self.dir.join("cubes").join(format!("{name}.json"))
    }

    pub fn save_cube(&self, name: &str, cube: &ClustCube) -> Result<PathBuf, AppError> {
        let path = self.cube_path(name);
        write_json(&path, &cube_document(name, cube))?;
        Ok(path)
    }

    pub fn saved_cube(&self, name: &str) -> Result<Option<serde_json::Value>, AppError> {
        let path = self.cube_path(name);
        if !path.exists() {
            return Ok(None);
        }
        read_json(&path).map(Some)
    }

    /// Configuration and lattice node of the saved cube, if any.
    pub fn saved_setup(&self, name: &str) -> Result<Option<(CubeConfig, String)>, AppError> {
        let Some(doc) = self.saved_cube(name)? else {
            return Ok(None);
        };
        let config: CubeConfig = serde_json::from_value(doc["config"].clone()).map_err(|e| AppError::Document {
            path: self.cube_path(name),
            message: e.to_string(),
        })?;
        let cuboid = doc["cuboid"].as_str().unwrap_or_default().to_string();
        Ok(Some((config, cuboid)))
    }
}

/// Rejects definitions whose name is unusable as a file name or whose query
/// does not resolve against the schema.
pub fn check_definition(def: &CuboidDef, data: &StarData) -> Result<(), AppError> {
    if !valid_name(&def.name) {
        return Err(AppError::BadRequest(format!(
            "cuboid name `{}` must be non-empty and use only letters, digits, `_` and `-`",
            def.name
        )));
    }
    let q = GlobalCodq::from_text(&def.codq)?;
    clustcube_core::codq::derive_object_schema(&q, &data.schema)?;
    Ok(())
}
