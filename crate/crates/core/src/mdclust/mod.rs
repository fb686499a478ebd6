//! Clustering of complex objects: feature encoding, seeded k-means and the
//! silhouette score.

mod kmeans;
mod silhouette;

use serde::Serialize;

pub use kmeans::{kmeans, Clustering, KMeansParams};
pub use silhouette::silhouette;

use crate::codq::{ObjectSet, Role};
use crate::value::{ColumnType, Value};

/// Category label used for imputed categorical nulls.
pub const NULL_CATEGORY: &str = "⟨null⟩";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClusterError {
    #[error("the object set has no attribute with role `feature`")]
    NoFeatures,
    #[error("attribute `{attribute}` is null for object {object}")]
    NullFeature { attribute: String, object: usize },
    #[error("k = {k} is invalid for {n} objects (need 1 <= k <= n)")]
    InvalidK { k: usize, n: usize },
    #[error("max_iter must be at least 1")]
    InvalidMaxIter,
    #[error("tolerance must be a non-negative number, got {0}")]
    InvalidTolerance(f64),
    #[error("silhouette needs k >= 2, got k = {0}")]
    SilhouetteNeedsTwoClusters(usize),
    #[error("cluster {0} is empty")]
    EmptyCluster(usize),
    #[error("clustering covers {clustering} objects but the matrix has {matrix} rows")]
    RowMismatch { clustering: usize, matrix: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FeaturizeConfig {
    /// Replace numeric nulls by the column mean and categorical nulls by
    /// [`NULL_CATEGORY`]; otherwise any null is an error.
    pub impute: bool,
}

/// How one source attribute became matrix columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "encoding", rename_all = "snake_case")]
pub enum Encoding {
    ZScore {
        mean: f64,
        std: f64,
        imputed: usize,
    },
    /// Numeric column with a single distinct value; encoded as zeros.
    Constant {
        imputed: usize,
    },
    OneHot {
        categories: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EncodingEntry {
    pub attribute: String,
    #[serde(flatten)]
    pub encoding: Encoding,
}

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureMatrix {
    /// Object index of each row.
    pub row_ids: Vec<usize>,
    pub columns: Vec<String>,
    pub values: Vec<f64>,
    pub encoding: Vec<EncodingEntry>,
}

impl FeatureMatrix {
    /// Builds a matrix from raw rows (no encoding report).
    pub fn from_rows(rows: &[Vec<f64>]) -> FeatureMatrix {
        let d = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == d), "ragged rows");
        FeatureMatrix {
            row_ids: (0..rows.len()).collect(),
            columns: (0..d).map(|j| format!("x{j}")).collect(),
            values: rows.iter().flatten().copied().collect(),
            encoding: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_cols();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_rows()).map(move |i| self.values[i * self.n_cols() + j])
    }

    /// Rows at the given positions, in that order.
    pub fn subset(&self, positions: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(positions.len() * self.n_cols());
        for &p in positions {
            values.extend_from_slice(self.row(p));
        }
        FeatureMatrix {
            row_ids: positions.iter().map(|&p| self.row_ids[p]).collect(),
            columns: self.columns.clone(),
            values,
            encoding: self.encoding.clone(),
        }
    }
}

pub(crate) fn population_mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Encodes the `feature` attributes of every object.
///
/// Numeric attributes are z-scored with the population standard deviation;
/// a column holding one distinct value becomes all zeros. Text and boolean
/// attributes are one-hot encoded with categories in first-appearance order.
pub fn featurize(objects: &ObjectSet, config: FeaturizeConfig) -> Result<FeatureMatrix, ClusterError> {
    let features: Vec<_> = objects.schema.with_role(Role::Feature).collect();
    if features.is_empty() {
        return Err(ClusterError::NoFeatures);
    }
    let n = objects.len();
    let mut columns = Vec::new();
    let mut encoded: Vec<Vec<f64>> = Vec::new();
    let mut encoding = Vec::new();

    for (idx, attr) in features {
        let null_at = (0..n).find(|&o| objects.value(o, idx).is_null());
        if let (Some(object), false) = (null_at, config.impute) {
            return Err(ClusterError::NullFeature {
                attribute: attr.name.clone(),
                object,
            });
        }

        if attr.ty.is_numeric() {
            let present: Vec<f64> = (0..n).filter_map(|o| objects.value(o, idx).as_f64()).collect();
            let imputed = n - present.len();
            let fill = if present.is_empty() {
                0.0
            } else {
                present.iter().sum::<f64>() / present.len() as f64
            };
            let raw: Vec<f64> = (0..n).map(|o| objects.value(o, idx).as_f64().unwrap_or(fill)).collect();
            let constant = raw.windows(2).all(|w| w[0].to_bits() == w[1].to_bits());
            let (mean, std) = population_mean_std(&raw);
            if constant || std == 0.0 {
                encoded.push(vec![0.0; n]);
                encoding.push(EncodingEntry {
                    attribute: attr.name.clone(),
                    encoding: Encoding::Constant { imputed },
                });
            } else {
                encoded.push(raw.iter().map(|x| (x - mean) / std).collect());
                encoding.push(EncodingEntry {
                    attribute: attr.name.clone(),
                    encoding: Encoding::ZScore { mean, std, imputed },
                });
            }
            columns.push(attr.name.clone());
        } else {
            let labels: Vec<String> = (0..n)
                .map(|o| match objects.value(o, idx) {
                    Value::Null => NULL_CATEGORY.to_string(),
                    v => v.render(),
                })
                .collect();
            let mut categories: Vec<String> = Vec::new();
            for l in &labels {
                if !categories.contains(l) {
                    categories.push(l.clone());
                }
            }
            for cat in &categories {
                encoded.push(labels.iter().map(|l| f64::from(l == cat)).collect());
                columns.push(format!("{}={}", attr.name, cat));
            }
            debug_assert!(matches!(attr.ty, ColumnType::Text | ColumnType::Boolean));
            encoding.push(EncodingEntry {
                attribute: attr.name.clone(),
                encoding: Encoding::OneHot { categories },
            });
        }
    }

    let d = encoded.len();
    let mut values = vec![0.0; n * d];
    for (j, col) in encoded.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            values[i * d + j] = *v;
        }
    }
    Ok(FeatureMatrix {
        row_ids: (0..n).collect(),
        columns,
        values,
        encoding,
    })
}
