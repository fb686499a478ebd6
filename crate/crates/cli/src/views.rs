//! JSON views over a built cube shared by the CLI and the HTTP service.

use std::collections::BTreeMap;

use clustcube_core::cube::ClustCube;
use clustcube_core::mdclust::silhouette;
use clustcube_core::mdregress::standard_errors;
use clustcube_core::Value;
use serde_json::{json, Map};

use crate::error::AppError;

fn key_object(cube: &ClustCube, key: &[Value]) -> serde_json::Value {
    let mut m = Map::new();
    for (dim, v) in cube.key_dimensions().iter().zip(key) {
        m.insert(dim.to_string(), v.to_json());
    }
    serde_json::Value::Object(m)
}

/// Parses `dim:member` filters; several members of one dimension are OR-ed.
pub fn parse_slices(filters: &[String]) -> Result<Vec<(String, Vec<String>)>, AppError> {
    let mut by_dim: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for f in filters {
        let (dim, member) = f
            .split_once(':')
            .ok_or_else(|| AppError::BadRequest(format!("slice `{f}` is not of the form dim:member")))?;
        by_dim.entry(dim.to_string()).or_default().push(member.to_string());
    }
    Ok(by_dim.into_iter().collect())
}

/// One compact row per cell: key, count, clustering and regression summary.
pub fn cells(cube: &ClustCube) -> serde_json::Value {
    let rows: Vec<serde_json::Value> = cube
        .cells
        .values()
        .map(|c| {
            json!({
                "key": key_object(cube, &c.key),
                "count": c.count(),
                "k": c.clustering.as_ref().map(|cl| cl.k),
                "sizes": c.clustering.as_ref().map(|cl| cl.sizes()),
                "sse": c.clustering.as_ref().map(|cl| cl.sse),
                "r2": c.regression.as_ref().map(|r| r.r2),
                "rmse": c.regression.as_ref().map(|r| r.rmse),
                "regression_n": c.reg_stats.as_ref().map(|s| s.n),
                "insufficient_rows": c.insufficient_rows,
            })
        })
        .collect();
    json!({
        "cuboid": cube.cuboid_name(),
        "dimensions": cube.key_dimensions(),
        "cells": rows,
        "unplaced_count": cube.unplaced.len(),
        "object_count": cube.object_count(),
    })
}

/// Per-cell clustering results with silhouette (null for k < 2).
pub fn clustering(cube: &ClustCube) -> Result<serde_json::Value, AppError> {
    let mut rows = Vec::new();
    for c in cube.cells.values() {
        let mut row = Map::new();
        row.insert("key".into(), key_object(cube, &c.key));
        row.insert("count".into(), c.count().into());
        if let Some(cl) = &c.clustering {
            let s = match &cube.prepared.features {
                Some(m) if cl.k >= 2 => Some(silhouette(&m.subset(&c.object_indices), cl)?),
                _ => None,
            };
            row.insert("k".into(), cl.k.into());
            row.insert("sizes".into(), cl.sizes().into());
            row.insert("sse".into(), cl.sse.into());
            row.insert("iterations".into(), cl.iterations.into());
            row.insert("centroids".into(), json!(cl.centroids));
            row.insert("silhouette".into(), json!(s));
        }
        rows.push(serde_json::Value::Object(row));
    }
    Ok(json!({
        "cuboid": cube.cuboid_name(),
        "dimensions": cube.key_dimensions(),
        "k": cube.config.k,
        "seed": cube.config.seed,
        "features": cube.prepared.features.as_ref().map(|m| &m.encoding),
        "cells": rows,
    }))
}

/// Per-cell regression fits; with `sigma`, coefficient standard errors for
/// that known noise level.
pub fn regression(cube: &ClustCube, sigma: Option<f64>) -> Result<serde_json::Value, AppError> {
    let names = cube
        .prepared
        .design
        .as_ref()
        .map(|d| d.predictor_names.clone())
        .unwrap_or_default();
    let mut rows = Vec::new();
    for c in cube.cells.values() {
        let mut row = Map::new();
        row.insert("key".into(), key_object(cube, &c.key));
        row.insert("count".into(), c.count().into());
        if let Some(r) = &c.regression {
            row.insert("regression".into(), r.export(&names));
            if let (Some(sigma), Some(stats)) = (sigma, &c.reg_stats) {
                let se = standard_errors(stats, r.lambda, sigma)?;
                row.insert("std_errors".into(), json!(se));
            }
        }
        if c.insufficient_rows {
            row.insert("insufficient_rows".into(), true.into());
        }
        if let Some(m) = &c.merged_clusters {
            row.insert("merged_clusters".into(), json!(m));
        }
        rows.push(serde_json::Value::Object(row));
    }
    Ok(json!({
        "cuboid": cube.cuboid_name(),
        "dimensions": cube.key_dimensions(),
        "target": cube.prepared.design.as_ref().map(|d| d.target.clone()),
        "lambda": cube.config.lambda,
        "predictor_names": names,
        "cells": rows,
    }))
}
