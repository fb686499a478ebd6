//! ClustCube cubes: cells keyed by dimension members, each holding the
//! complex objects it contains together with their clustering and
//! regression, plus the OLAP operators over them.
//!
//! Encoding is done once per object set. Every cell of every cuboid clusters
//! rows of the same feature matrix and regresses on the same design, so
//! roll-ups can merge statistics and reclustering at a parent is identical to
//! building there directly.

mod plan;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use plan::{plan_processing, run_indexed, Dependency, ExecMode, PlanError, ProcessingPlan};

use crate::codq::{ObjectSet, Role};
use crate::lattice::{CuboidId, DimensionSpec, LatticeError, LatticeShape, LevelChoice};
use crate::mdclust::{featurize, kmeans, ClusterError, Clustering, FeatureMatrix, FeaturizeConfig};
use crate::mdregress::{fit, RegressError, RegressionDesign, RegressionFit, RegressionStats};
use crate::star::StarData;
use crate::value::Value;

/// Largest k accepted in a cube configuration.
pub const MAX_CLUSTERS: usize = 256;

pub type CellKey = Vec<Value>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CubeError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Regress(#[from] RegressError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("cannot resolve coordinate attribute `{0}`")]
    UnresolvedCoordinate(String),
    #[error("dimension `{dimension}` has no level `{level}` for member `{member}`")]
    HierarchyLevelMissing {
        dimension: String,
        level: String,
        member: String,
    },
    #[error("members of one `{dimension}` cell map to several parent members")]
    HierarchyInconsistent { dimension: String },
    #[error("unknown dimension `{0}`")]
    UnknownDimension(String),
    #[error("dimension `{0}` is already ALL in this cuboid")]
    DimensionIsAll(String),
    #[error("dimension `{0}` is already at its finest level")]
    FinestLevel(String),
    #[error("invalid cube configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CubeConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    /// Cells with fewer objects are not clustered.
    pub min_cell_size: usize,
    pub lambda: f64,
    /// Response attribute; defaults to the one with role `target`, if any.
    pub target: Option<String>,
    pub impute: bool,
    pub mode: ExecMode,
}

impl Default for CubeConfig {
    fn default() -> Self {
        CubeConfig {
            k: 3,
            seed: 0,
            max_iter: 100,
            tol: 1e-6,
            min_cell_size: 3,
            lambda: 0.0,
            target: None,
            impute: true,
            mode: ExecMode::Auto,
        }
    }
}

impl CubeConfig {
    pub fn check(&self) -> Result<(), CubeError> {
        if self.k == 0 || self.k > MAX_CLUSTERS {
            return Err(CubeError::InvalidConfig(format!(
                "k must be between 1 and {MAX_CLUSTERS}, got {}",
                self.k
            )));
        }
        if self.max_iter == 0 {
            return Err(CubeError::InvalidConfig("max_iter must be at least 1".into()));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(CubeError::InvalidConfig(format!(
                "tol must be non-negative, got {}",
                self.tol
            )));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(CubeError::InvalidConfig(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if self.mode == ExecMode::Concurrent(0) {
            return Err(PlanError::ZeroLimit.into());
        }
        Ok(())
    }
}

/// Objects plus the member of every object at every level of every
/// coordinate dimension.
#[derive(Debug, Clone)]
pub struct CubeContext {
    objects: Arc<ObjectSet>,
    shape: LatticeShape,
    /// `members[dim][level][object]`.
    members: Vec<Vec<Vec<Value>>>,
}

impl CubeContext {
    /// One dimension per `coordinate` attribute, named after the attribute.
    ///
    /// If the attribute's source column is a level of a hierarchy on its
    /// source table, the dimension's levels are that level and every coarser
    /// one, looked up through the table's rows. Otherwise the dimension is
    /// flat.
    pub fn new(objects: Arc<ObjectSet>, data: &StarData) -> Result<CubeContext, CubeError> {
        let mut dims = Vec::new();
        let mut members = Vec::new();
        for (idx, attr) in objects.schema.with_role(Role::Coordinate) {
            let table = data
                .table(&attr.table)
                .ok_or_else(|| CubeError::UnresolvedCoordinate(attr.name.clone()))?;
            let levels: Vec<String> = data
                .schema
                .hierarchy(&attr.table)
                .and_then(|h| {
                    h.levels
                        .iter()
                        .position(|l| *l == attr.column)
                        .map(|p| h.levels[p..].to_vec())
                })
                .unwrap_or_else(|| vec![attr.column.clone()]);

            let base: Vec<Value> = (0..objects.len()).map(|o| objects.value(o, idx).clone()).collect();
            let base_col = table
                .column_index(&levels[0])
                .ok_or_else(|| CubeError::UnresolvedCoordinate(attr.name.clone()))?;
            let mut per_level = vec![base];
            for level in &levels[1..] {
                let missing = |member: &Value| CubeError::HierarchyLevelMissing {
                    dimension: attr.name.clone(),
                    level: level.clone(),
                    member: member.render(),
                };
                let col = table.column_index(level).ok_or_else(|| missing(&Value::Null))?;
                let mut map: HashMap<&Value, &Value> = HashMap::new();
                for row in &table.rows {
                    map.entry(&row[base_col]).or_insert(&row[col]);
                }
                let mapped = per_level[0]
                    .iter()
                    .map(|m| {
                        if m.is_null() {
                            Ok(Value::Null)
                        } else {
                            map.get(m).map(|v| (*v).clone()).ok_or_else(|| missing(m))
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                per_level.push(mapped);
            }
            dims.push(DimensionSpec {
                name: attr.name.clone(),
                levels,
            });
            members.push(per_level);
        }
        CubeContext::with_members(objects, dims, members)
    }

    /// Builds a context from explicit member columns, `members[dim][level]`
    /// holding one value per object.
    pub fn with_members(
        objects: Arc<ObjectSet>,
        dims: Vec<DimensionSpec>,
        members: Vec<Vec<Vec<Value>>>,
    ) -> Result<CubeContext, CubeError> {
        let shape = LatticeShape::new(dims)?;
        let ok = members.len() == shape.dimensions().len()
            && members
                .iter()
                .zip(shape.dimensions())
                .all(|(m, d)| m.len() == d.levels.len() && m.iter().all(|col| col.len() == objects.len()));
        if !ok {
            return Err(CubeError::InvalidConfig(
                "member columns do not match the dimensions and objects".into(),
            ));
        }
        Ok(CubeContext {
            objects,
            shape,
            members,
        })
    }

    pub fn objects(&self) -> &Arc<ObjectSet> {
        &self.objects
    }

    pub fn shape(&self) -> &LatticeShape {
        &self.shape
    }

    pub fn member(&self, dim: usize, level: usize, object: usize) -> &Value {
        &self.members[dim][level][object]
    }

    /// Cell key of an object in a cuboid; `None` if any member is null.
    pub fn key_of(&self, cuboid: &CuboidId, object: usize) -> Option<CellKey> {
        let mut key = Vec::new();
        for (dim, choice) in cuboid.choices().iter().enumerate() {
            if let LevelChoice::Level(l) = choice {
                let v = &self.members[dim][*l][object];
                if v.is_null() {
                    return None;
                }
                key.push(v.clone());
            }
        }
        Some(key)
    }

    /// Groups the given objects (ascending) by cell key.
    fn group(
        &self,
        cuboid: &CuboidId,
        objects: impl Iterator<Item = usize>,
    ) -> (BTreeMap<CellKey, Vec<usize>>, Vec<usize>) {
        let mut cells: BTreeMap<CellKey, Vec<usize>> = BTreeMap::new();
        let mut unplaced = Vec::new();
        for o in objects {
            match self.key_of(cuboid, o) {
                Some(k) => cells.entry(k).or_default().push(o),
                None => unplaced.push(o),
            }
        }
        (cells, unplaced)
    }

    fn dim_index(&self, name: &str) -> Result<usize, CubeError> {
        self.shape
            .dimension_index(name)
            .ok_or_else(|| CubeError::UnknownDimension(name.to_string()))
    }
}

/// Encodings shared by all cells of cubes over one object set.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub features: Option<FeatureMatrix>,
    pub design: Option<RegressionDesign>,
}

impl Prepared {
    pub fn new(objects: &ObjectSet, config: &CubeConfig) -> Result<Prepared, CubeError> {
        let features = match featurize(objects, FeaturizeConfig { impute: config.impute }) {
            Ok(m) => Some(m),
            Err(ClusterError::NoFeatures) => None,
            Err(e) => return Err(e.into()),
        };
        let design = match RegressionDesign::new(objects, config.target.as_deref()) {
            Ok(d) => Some(d),
            Err(RegressError::NoTarget) => None,
            Err(e) => return Err(e.into()),
        };
        Ok(Prepared { features, design })
    }
}

/// Per-child summary kept when a roll-up merges statistics instead of
/// reclustering.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChildSummary {
    pub key: CellKey,
    pub count: usize,
    /// Size-weighted mean of the child's cluster centroids.
    pub centroid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergedClusters {
    pub total_count: usize,
    /// Previously unplaced objects that joined this cell.
    pub absorbed_unplaced: usize,
    pub children: Vec<ChildSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub key: CellKey,
    /// Ascending indices into the cube's object set.
    pub object_indices: Vec<usize>,
    /// Assignment positions follow `object_indices`.
    pub clustering: Option<Clustering>,
    pub regression: Option<RegressionFit>,
    pub reg_stats: Option<RegressionStats>,
    /// Regression stats exist but have fewer rows than predictors.
    pub insufficient_rows: bool,
    pub merged_clusters: Option<MergedClusters>,
}

impl Cell {
    pub fn count(&self) -> usize {
        self.object_indices.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateMode {
    Recluster,
    MergeStats,
}

#[derive(Debug, Clone)]
pub struct ClustCube {
    pub cuboid: CuboidId,
    pub context: Arc<CubeContext>,
    pub prepared: Arc<Prepared>,
    pub cells: BTreeMap<CellKey, Cell>,
    pub unplaced: Vec<usize>,
    pub config: CubeConfig,
    pub plan: ProcessingPlan,
}

const PHASES: [&str; 3] = ["materialize", "cluster", "regress"];

fn build_plan(mode: ExecMode) -> Result<ProcessingPlan, CubeError> {
    let deps = [
        Dependency::new(PHASES[0], PHASES[1]),
        Dependency::new(PHASES[0], PHASES[2]),
    ];
    let elements: Vec<String> = PHASES.iter().map(|s| s.to_string()).collect();
    Ok(plan_processing(&elements, &deps, mode, false)?)
}

fn finish_regression(
    stats: Option<RegressionStats>,
    lambda: f64,
) -> Result<(Option<RegressionFit>, Option<RegressionStats>, bool), CubeError> {
    match stats {
        None => Ok((None, None, false)),
        Some(s) if s.n == 0 || (s.n as usize) < s.d => Ok((None, Some(s), true)),
        Some(s) => Ok((Some(fit(&s, lambda)?), Some(s), false)),
    }
}

fn run_phases(
    prepared: &Prepared,
    config: &CubeConfig,
    plan: &ProcessingPlan,
    groups: Vec<(CellKey, Vec<usize>)>,
    cluster: bool,
) -> Result<BTreeMap<CellKey, Cell>, CubeError> {
    let mut clusterings: Vec<Option<Clustering>> = vec![None; groups.len()];
    let mut regressions: Vec<(Option<RegressionFit>, Option<RegressionStats>, bool)> =
        vec![(None, None, false); groups.len()];
    for phase in &plan.order {
        match phase.as_str() {
            "cluster" if cluster => {
                if let Some(m) = &prepared.features {
                    let out = run_indexed(plan.limit, groups.len(), |i| {
                        let objs = &groups[i].1;
                        if objs.len() < config.min_cell_size.max(1) {
                            return Ok(None);
                        }
                        let sub = m.subset(objs);
                        kmeans(&sub, config.k.min(objs.len()), config.seed, config.max_iter, config.tol).map(Some)
                    });
                    clusterings = out.into_iter().collect::<Result<_, _>>()?;
                }
            }
            "regress" => {
                if let Some(design) = &prepared.design {
                    let out = run_indexed(plan.limit, groups.len(), |i| {
                        finish_regression(Some(design.stats(&groups[i].1)), config.lambda)
                    });
                    regressions = out.into_iter().collect::<Result<_, _>>()?;
                }
            }
            _ => {}
        }
    }
    Ok(groups
        .into_iter()
        .zip(clusterings)
        .zip(regressions)
        .map(
            |(((key, objs), clustering), (regression, reg_stats, insufficient_rows))| {
                (
                    key.clone(),
                    Cell {
                        key,
                        object_indices: objs,
                        clustering,
                        regression,
                        reg_stats,
                        insufficient_rows,
                        merged_clusters: None,
                    },
                )
            },
        )
        .collect())
}

/// Groups the context's objects at `cuboid` and analyzes every cell.
pub fn build(context: &Arc<CubeContext>, cuboid: &CuboidId, config: &CubeConfig) -> Result<ClustCube, CubeError> {
    config.check()?;
    let prepared = Arc::new(Prepared::new(context.objects(), config)?);
    build_prepared(context, prepared, cuboid, config)
}

/// [`build`] with encodings already computed for `config`.
pub fn build_prepared(
    context: &Arc<CubeContext>,
    prepared: Arc<Prepared>,
    cuboid: &CuboidId,
    config: &CubeConfig,
) -> Result<ClustCube, CubeError> {
    config.check()?;
    context.shape.check(cuboid)?;
    let plan = build_plan(config.mode)?;
    let (groups, unplaced) = context.group(cuboid, 0..context.objects.len());
    let cells = run_phases(&prepared, config, &plan, groups.into_iter().collect(), true)?;
    Ok(ClustCube {
        cuboid: cuboid.clone(),
        context: Arc::clone(context),
        prepared,
        cells,
        unplaced,
        config: config.clone(),
        plan,
    })
}

impl ClustCube {
    pub fn cuboid_name(&self) -> String {
        self.context.shape.format_cuboid(&self.cuboid)
    }

    /// Names of the non-ALL dimensions, in key order.
    pub fn key_dimensions(&self) -> Vec<&str> {
        self.active()
            .map(|(d, _)| self.context.shape.dimensions()[d].name.as_str())
            .collect()
    }

    fn active(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.cuboid
            .choices()
            .iter()
            .enumerate()
            .filter_map(|(d, c)| c.level().map(|l| (d, l)))
    }

    pub fn object_count(&self) -> usize {
        self.context.objects.len()
    }

    pub fn placed_count(&self) -> usize {
        self.cells.values().map(Cell::count).sum()
    }

    /// Same encodings, same configuration, another cuboid.
    pub fn rebuild_at(&self, cuboid: &CuboidId) -> Result<ClustCube, CubeError> {
        build_prepared(&self.context, Arc::clone(&self.prepared), cuboid, &self.config)
    }

    fn key_position(&self, dim: usize) -> Option<usize> {
        self.active().position(|(d, _)| d == dim)
    }

    /// Moves one step coarser along `dim`.
    pub fn roll_up(&self, dim: &str, mode: AggregateMode) -> Result<ClustCube, CubeError> {
        let d = self.context.dim_index(dim)?;
        let parent = self
            .context
            .shape
            .coarsen(&self.cuboid, d)
            .ok_or_else(|| CubeError::DimensionIsAll(dim.to_string()))?;
        match mode {
            AggregateMode::Recluster => self.rebuild_at(&parent),
            AggregateMode::MergeStats => self.merge_up(&parent, dim),
        }
    }

    fn merge_up(&self, parent: &CuboidId, dim: &str) -> Result<ClustCube, CubeError> {
        let mut children: BTreeMap<CellKey, Vec<&Cell>> = BTreeMap::new();
        for cell in self.cells.values() {
            let mut keys = cell.object_indices.iter().map(|&o| self.context.key_of(parent, o));
            let first = keys.next().flatten().expect("placed objects have non-null keys");
            if keys.any(|k| k.as_ref() != Some(&first)) {
                return Err(CubeError::HierarchyInconsistent {
                    dimension: dim.to_string(),
                });
            }
            children.entry(first).or_default().push(cell);
        }

        // Objects set aside for a null member of `dim` become placeable once
        // it is rolled to ALL.
        let (mut absorbed, unplaced) = self.context.group(parent, self.unplaced.iter().copied());

        let design = self.prepared.design.as_ref();
        let mut cells = BTreeMap::new();
        let mut keys: Vec<CellKey> = children.keys().chain(absorbed.keys()).cloned().collect();
        keys.sort();
        keys.dedup();
        for key in keys {
            let kids = children.remove(&key).unwrap_or_default();
            let extra = absorbed.remove(&key).unwrap_or_default();
            let mut object_indices: Vec<usize> = kids
                .iter()
                .flat_map(|c| c.object_indices.iter().copied())
                .chain(extra.iter().copied())
                .collect();
            object_indices.sort_unstable();
            let stats = match design {
                Some(design) => {
                    let extra_stats = design.stats(&extra);
                    Some(RegressionStats::merge_all(
                        design.d(),
                        kids.iter()
                            .map(|c| c.reg_stats.as_ref().expect("cells carry stats when a design exists"))
                            .chain(std::iter::once(&extra_stats)),
                    )?)
                }
                None => None,
            };
            let (regression, reg_stats, insufficient_rows) = finish_regression(stats, self.config.lambda)?;
            let summary = MergedClusters {
                total_count: object_indices.len(),
                absorbed_unplaced: extra.len(),
                children: kids
                    .iter()
                    .map(|c| ChildSummary {
                        key: c.key.clone(),
                        count: c.count(),
                        centroid: c.clustering.as_ref().map(weighted_centroid),
                    })
                    .collect(),
            };
            cells.insert(
                key.clone(),
                Cell {
                    key,
                    object_indices,
                    clustering: None,
                    regression,
                    reg_stats,
                    insufficient_rows,
                    merged_clusters: Some(summary),
                },
            );
        }
        Ok(ClustCube {
            cuboid: parent.clone(),
            cells,
            unplaced,
            ..self.clone()
        })
    }

    /// Moves one step finer along `dim`. `MergeStats` fits each child from
    /// its rows and skips clustering.
    pub fn drill_down(&self, dim: &str, mode: AggregateMode) -> Result<ClustCube, CubeError> {
        let d = self.context.dim_index(dim)?;
        let child = self
            .context
            .shape
            .refine(&self.cuboid, d)
            .ok_or_else(|| CubeError::FinestLevel(dim.to_string()))?;
        match mode {
            AggregateMode::Recluster => self.rebuild_at(&child),
            AggregateMode::MergeStats => {
                let placed = self.cells.values().flat_map(|c| c.object_indices.iter().copied());
                let (groups, mut unplaced) = self.context.group(&child, placed);
                unplaced.extend(self.unplaced.iter().copied());
                unplaced.sort_unstable();
                let cells = run_phases(
                    &self.prepared,
                    &self.config,
                    &self.plan,
                    groups.into_iter().collect(),
                    false,
                )?;
                Ok(ClustCube {
                    cuboid: child,
                    cells,
                    unplaced,
                    ..self.clone()
                })
            }
        }
    }

    /// Keeps cells whose member on `dim` renders as `member`.
    pub fn slice(&self, dim: &str, member: &str) -> Result<ClustCube, CubeError> {
        self.dice(&[(dim.to_string(), vec![member.to_string()])])
    }

    /// Keeps cells whose member on each listed dimension is in its set.
    pub fn dice(&self, predicate: &[(String, Vec<String>)]) -> Result<ClustCube, CubeError> {
        let mut tests = Vec::new();
        for (dim, members) in predicate {
            let d = self.context.dim_index(dim)?;
            let pos = self
                .key_position(d)
                .ok_or_else(|| CubeError::DimensionIsAll(dim.clone()))?;
            tests.push((pos, members));
        }
        if tests.is_empty() {
            return Ok(self.clone());
        }
        let cells = self
            .cells
            .iter()
            .filter(|(key, _)| tests.iter().all(|(pos, members)| members.contains(&key[*pos].render())))
            .map(|(k, c)| (k.clone(), c.clone()))
            .collect();
        Ok(ClustCube {
            cells,
            unplaced: Vec::new(),
            ..self.clone()
        })
    }

    /// Cube export document.
    pub fn export(&self) -> serde_json::Value {
        let predictor_names = self.prepared.design.as_ref().map(|d| d.predictor_names.clone());
        let cells: Vec<serde_json::Value> = self
            .cells
            .values()
            .map(|c| {
                let mut obj = serde_json::Map::new();
                obj.insert("key".into(), c.key.iter().map(Value::to_json).collect());
                obj.insert("count".into(), c.count().into());
                obj.insert("objects".into(), c.object_indices.clone().into());
                if let Some(cl) = &c.clustering {
                    obj.insert(
                        "clustering".into(),
                        serde_json::json!({
                            "k": cl.k,
                            "seed": cl.seed,
                            "sse": cl.sse,
                            "iterations": cl.iterations,
                            "sizes": cl.sizes(),
                            "centroids": cl.centroids,
                            "assignment": cl.assignment,
                        }),
                    );
                }
                if let Some(r) = &c.regression {
                    obj.insert("regression".into(), r.export(predictor_names.as_deref().unwrap_or(&[])));
                }
                if c.insufficient_rows {
                    obj.insert("insufficient_rows".into(), true.into());
                }
                if let Some(m) = &c.merged_clusters {
                    obj.insert("merged_clusters".into(), serde_json::to_value(m).expect("serializable"));
                }
                serde_json::Value::Object(obj)
            })
            .collect();
        serde_json::json!({
            "cuboid": self.cuboid_name(),
            "dimensions": self.key_dimensions(),
            "cells": cells,
            "unplaced": self.unplaced,
            "unplaced_count": self.unplaced.len(),
            "object_count": self.object_count(),
            "config": self.config,
            "encoding_report": self.prepared.features.as_ref().map(|m| &m.encoding),
            "predictor_names": predictor_names,
            "plan": self.plan,
        })
    }

    /// One CSV row per cell.
    pub fn export_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = self.key_dimensions().iter().map(|s| s.to_string()).collect();
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
        let opt = |v: Option<String>| v.unwrap_or_default();
        for c in self.cells.values() {
            let mut rec: Vec<String> = c.key.iter().map(Value::render).collect();
            rec.push(c.count().to_string());
            rec.push(opt(c.clustering.as_ref().map(|cl| cl.k.to_string())));
            rec.push(opt(c.clustering.as_ref().map(|cl| cl.sse.to_string())));
            rec.push(opt(c.reg_stats.as_ref().map(|s| s.n.to_string())));
            rec.push(opt(c.regression.as_ref().map(|r| r.r2.to_string())));
            rec.push(opt(c.regression.as_ref().map(|r| r.rmse.to_string())));
            rec.push(opt(c.regression.as_ref().map(|r| r.lambda.to_string())));
            rec.push(c.insufficient_rows.to_string());
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flushed")).expect("utf-8")
    }
}

fn weighted_centroid(c: &Clustering) -> Vec<f64> {
    let sizes = c.sizes();
    let total: usize = sizes.iter().sum();
    let d = c.centroids.first().map_or(0, Vec::len);
    let mut out = vec![0.0; d];
    for (centroid, &s) in c.centroids.iter().zip(&sizes) {
        for (o, v) in out.iter_mut().zip(centroid) {
            *o += v * s as f64;
        }
    }
    out.iter_mut().for_each(|v| *v /= total as f64);
    out
}
