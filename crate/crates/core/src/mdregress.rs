//! Ordinary least squares over mergeable sufficient statistics.
//!
//! [`RegressionStats`] is closed under [`RegressionStats::merge`], so a parent
//! cell's fit can be computed from its children's stats without the raw rows.
//! Parallel callers should accumulate per shard and then merge shards left to
//! right in shard order; that fixed order is what makes results replayable.

use serde::{Deserialize, Serialize};

use crate::codq::{ObjectSet, Role};
use crate::value::Value;

/// Condition estimate above which an unridged system counts as singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegressError {
    #[error("expected {expected} predictors (including the intercept), got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cannot fit a regression on zero rows")]
    NoRows,
    #[error("lambda must be a finite non-negative number, got {0}")]
    InvalidLambda(f64),
    #[error("normal equations are singular even after ridge fallback")]
    Singular,
    #[error("the object set has no attribute with role `target`")]
    NoTarget,
    #[error("unknown target attribute `{0}`")]
    UnknownTarget(String),
    #[error("target attribute `{0}` is not numeric")]
    NonNumericTarget(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionStats {
    pub d: usize,
    pub n: u64,
    /// Row-major d×d.
    pub xtx: Vec<f64>,
    pub xty: Vec<f64>,
    pub yty: f64,
    pub sum_y: f64,
}

impl RegressionStats {
    pub fn zero(d: usize) -> RegressionStats {
        RegressionStats {
            d,
            n: 0,
            xtx: vec![0.0; d * d],
            xty: vec![0.0; d],
            yty: 0.0,
            sum_y: 0.0,
        }
    }

    pub fn xtx_at(&self, i: usize, j: usize) -> f64 {
        self.xtx[i * self.d + j]
    }

    /// Adds one row. `x` must include the leading 1.
    pub fn accumulate(&mut self, x: &[f64], y: f64) -> Result<(), RegressError> {
        if x.len() != self.d {
            return Err(RegressError::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        let d = self.d;
        for i in 0..d {
            for j in 0..d {
                self.xtx[i * d + j] += x[i] * x[j];
            }
            self.xty[i] += x[i] * y;
        }
        self.yty += y * y;
        self.sum_y += y;
        self.n += 1;
        Ok(())
    }

    /// Fieldwise sum.
    pub fn merge(&self, other: &RegressionStats) -> Result<RegressionStats, RegressError> {
        if self.d != other.d {
            return Err(RegressError::DimensionMismatch {
                expected: self.d,
                got: other.d,
            });
        }
        let add = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + y).collect();
        Ok(RegressionStats {
            d: self.d,
            n: self.n + other.n,
            xtx: add(&self.xtx, &other.xtx),
            xty: add(&self.xty, &other.xty),
            yty: self.yty + other.yty,
            sum_y: self.sum_y + other.sum_y,
        })
    }

    /// Left fold of [`merge`](Self::merge) in slice order.
    pub fn merge_all<'a>(
        d: usize,
        parts: impl IntoIterator<Item = &'a RegressionStats>,
    ) -> Result<RegressionStats, RegressError> {
        parts
            .into_iter()
            .try_fold(RegressionStats::zero(d), |acc, s| acc.merge(s))
    }

    pub fn from_rows<'a>(
        d: usize,
        rows: impl IntoIterator<Item = (&'a [f64], f64)>,
    ) -> Result<RegressionStats, RegressError> {
        let mut s = RegressionStats::zero(d);
        for (x, y) in rows {
            s.accumulate(x, y)?;
        }
        Ok(s)
    }

    fn penalized(&self, lambda: f64) -> Vec<f64> {
        let mut a = self.xtx.clone();
        for i in 1..self.d {
            a[i * self.d + i] += lambda;
        }
        a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub beta: Vec<f64>,
    pub r2: f64,
    pub rmse: f64,
    pub lambda: f64,
    pub n: u64,
}

impl RegressionFit {
    pub fn export(&self, predictor_names: &[String]) -> serde_json::Value {
        serde_json::json!({
            "beta": self.beta,
            "r2": self.r2,
            "rmse": self.rmse,
            "lambda": self.lambda,
            "n": self.n,
            "predictor_names": predictor_names,
        })
    }
}

/// Cholesky factor of a Jacobi-scaled symmetric matrix.
struct ScaledCholesky {
    d: usize,
    scale: Vec<f64>,
    l: Vec<f64>,
}

impl ScaledCholesky {
    fn new(a: &[f64], d: usize) -> Option<ScaledCholesky> {
        let mut scale = Vec::with_capacity(d);
        for i in 0..d {
            let aii = a[i * d + i];
            if !(aii.is_finite() && aii > 0.0) {
                return None;
            }
            scale.push(1.0 / aii.sqrt());
        }
        let mut l = vec![0.0; d * d];
        for j in 0..d {
            let mut diag = a[j * d + j] * scale[j] * scale[j];
            for k in 0..j {
                diag -= l[j * d + k] * l[j * d + k];
            }
            if diag.is_nan() || diag <= 0.0 {
                return None;
            }
            let ljj = diag.sqrt();
            l[j * d + j] = ljj;
            for i in j + 1..d {
                let mut v = a[i * d + j] * scale[i] * scale[j];
                for k in 0..j {
                    v -= l[i * d + k] * l[j * d + k];
                }
                l[i * d + j] = v / ljj;
            }
        }
        Some(ScaledCholesky { d, scale, l })
    }

    /// Squared ratio of the extreme diagonal entries of L.
    fn condition_estimate(&self) -> f64 {
        let diag = (0..self.d).map(|i| self.l[i * self.d + i]);
        let (lo, hi) = diag.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
        (hi / lo).powi(2)
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let d = self.d;
        let mut z: Vec<f64> = b.iter().zip(&self.scale).map(|(b, s)| b * s).collect();
        for i in 0..d {
            for k in 0..i {
                z[i] -= self.l[i * d + k] * z[k];
            }
            z[i] /= self.l[i * d + i];
        }
        for i in (0..d).rev() {
            for k in i + 1..d {
                z[i] -= self.l[k * d + i] * z[k];
            }
            z[i] /= self.l[i * d + i];
        }
        z.iter().zip(&self.scale).map(|(z, s)| z * s).collect()
    }
}

fn factor(s: &RegressionStats, lambda: f64) -> Result<(ScaledCholesky, f64), RegressError> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(RegressError::InvalidLambda(lambda));
    }
    if s.n == 0 {
        return Err(RegressError::NoRows);
    }
    if lambda == 0.0 {
        if let Some(c) = ScaledCholesky::new(&s.xtx, s.d) {
            if c.condition_estimate() <= MAX_CONDITION {
                return Ok((c, 0.0));
            }
        }
        let trace: f64 = (0..s.d).map(|i| s.xtx_at(i, i)).sum();
        let fallback = 1e-8 * trace / s.d as f64;
        return ScaledCholesky::new(&s.penalized(fallback), s.d)
            .map(|c| (c, fallback))
            .ok_or(RegressError::Singular);
    }
    ScaledCholesky::new(&s.penalized(lambda), s.d)
        .map(|c| (c, lambda))
        .ok_or(RegressError::Singular)
}

/// Solves `(xtx + λ·I')β = xty`, where `I'` leaves the intercept unpenalized.
pub fn fit(s: &RegressionStats, lambda: f64) -> Result<RegressionFit, RegressError> {
    let (chol, used) = factor(s, lambda)?;
    let beta = chol.solve(&s.xty);

    let d = s.d;
    let mut bxtxb = 0.0;
    for i in 0..d {
        let mut row = 0.0;
        for (j, b) in beta.iter().enumerate() {
            row += s.xtx_at(i, j) * b;
        }
        bxtxb += beta[i] * row;
    }
    let bxty: f64 = beta.iter().zip(&s.xty).map(|(b, v)| b * v).sum();
    let raw_ssr = s.yty - 2.0 * bxty + bxtxb;
    // Below the cancellation floor of the three terms the residual is noise.
    let floor = 64.0 * f64::EPSILON * (s.yty.abs() + 2.0 * bxty.abs() + bxtxb.abs());
    let ssr = if raw_ssr <= floor { 0.0 } else { raw_ssr };

    let n = s.n as f64;
    let sst = (s.yty - s.sum_y * s.sum_y / n).max(0.0);
    let r2 = if sst <= 1e-12 {
        if ssr <= 1e-12 {
            1.0
        } else {
            0.0
        }
    } else {
        (1.0 - ssr / sst).min(1.0)
    };
    Ok(RegressionFit {
        beta,
        r2,
        rmse: (ssr / n).sqrt(),
        lambda: used,
        n: s.n,
    })
}

/// `sigma · sqrt(diag(A⁻¹))` with `A = xtx + λ·I'`: coefficient standard
/// errors for a known noise level.
pub fn standard_errors(s: &RegressionStats, lambda: f64, sigma: f64) -> Result<Vec<f64>, RegressError> {
    let (chol, _) = factor(s, lambda)?;
    Ok((0..s.d)
        .map(|i| {
            let mut e = vec![0.0; s.d];
            e[i] = 1.0;
            sigma * chol.solve(&e)[i].max(0.0).sqrt()
        })
        .collect())
}

/// Regression design over an object set: `feature` attributes become
/// predictors and one numeric attribute is the response.
///
/// Numeric predictors are used raw. Categorical predictors are one-hot
/// encoded in first-appearance order with the last category dropped. Objects
/// with a null predictor or target have no row.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDesign {
    pub target: String,
    /// Starts with `intercept`.
    pub predictor_names: Vec<String>,
    rows: Vec<Option<(Vec<f64>, f64)>>,
}

impl RegressionDesign {
    /// `target` defaults to the single attribute with role `target`.
    pub fn new(objects: &ObjectSet, target: Option<&str>) -> Result<RegressionDesign, RegressError> {
        let (t_idx, t_attr) = match target {
            Some(name) => {
                let i = objects
                    .schema
                    .index_of(name)
                    .ok_or_else(|| RegressError::UnknownTarget(name.to_string()))?;
                (i, &objects.schema.attributes[i])
            }
            None => objects
                .schema
                .with_role(Role::Target)
                .next()
                .ok_or(RegressError::NoTarget)?,
        };
        if !t_attr.ty.is_numeric() {
            return Err(RegressError::NonNumericTarget(t_attr.name.clone()));
        }

        let n = objects.len();
        let usable: Vec<bool> = (0..n)
            .map(|o| {
                !objects.value(o, t_idx).is_null()
                    && objects
                        .schema
                        .with_role(Role::Feature)
                        .all(|(i, _)| !objects.value(o, i).is_null())
            })
            .collect();

        let mut predictor_names = vec!["intercept".to_string()];
        // Per feature: None for numeric, Some(kept categories) for one-hot.
        let mut plan: Vec<(usize, Option<Vec<String>>)> = Vec::new();
        for (idx, attr) in objects.schema.with_role(Role::Feature) {
            if idx == t_idx {
                continue;
            }
            if attr.ty.is_numeric() {
                predictor_names.push(attr.name.clone());
                plan.push((idx, None));
            } else {
                let mut cats: Vec<String> = Vec::new();
                for o in (0..n).filter(|&o| usable[o]) {
                    let label = objects.value(o, idx).render();
                    if !cats.contains(&label) {
                        cats.push(label);
                    }
                }
                cats.pop();
                predictor_names.extend(cats.iter().map(|c| format!("{}={c}", attr.name)));
                plan.push((idx, Some(cats)));
            }
        }

        let rows = (0..n)
            .map(|o| {
                if !usable[o] {
                    return None;
                }
                let mut x = Vec::with_capacity(predictor_names.len());
                x.push(1.0);
                for (idx, cats) in &plan {
                    let v = objects.value(o, *idx);
                    match cats {
                        None => x.push(v.as_f64().expect("usable rows have numeric values")),
                        Some(cats) => {
                            let label = v.render();
                            x.extend(cats.iter().map(|c| f64::from(*c == label)));
                        }
                    }
                }
                let y = match objects.value(o, t_idx) {
                    Value::Integer(i) => *i as f64,
                    Value::Real(r) => *r,
                    _ => unreachable!("target is numeric and non-null"),
                };
                Some((x, y))
            })
            .collect();

        Ok(RegressionDesign {
            target: t_attr.name.clone(),
            predictor_names,
            rows,
        })
    }

    pub fn d(&self) -> usize {
        self.predictor_names.len()
    }

    /// Predictor row and response of an object, if it has no nulls.
    pub fn row(&self, object: usize) -> Option<(&[f64], f64)> {
        self.rows[object].as_ref().map(|(x, y)| (x.as_slice(), *y))
    }

    /// Stats over the given objects, accumulated in the given order.
    pub fn stats(&self, objects: &[usize]) -> RegressionStats {
        RegressionStats::from_rows(self.d(), objects.iter().filter_map(|&o| self.row(o)))
            .expect("design rows have width d")
    }
}
