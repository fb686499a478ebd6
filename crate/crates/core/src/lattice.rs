//! Cuboid lattices.
//!
//! A cuboid picks, for every dimension of a cube, either one hierarchy level
//! or `ALL` (the dimension rolled away). Coarsening one dimension by one step
//! moves to a parent; refining moves to a child. Navigation works on the
//! dimension list alone, so huge lattices can be walked without being
//! enumerated.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Lattices larger than this are refused by [`enumerate_lattice`].
pub const MAX_ENUMERATED_CUBOIDS: u128 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LatticeError {
    #[error("dimension `{0}` listed twice")]
    DuplicateDimension(String),
    #[error("dimension `{0}` has no levels")]
    NoLevels(String),
    #[error("dimension `{dimension}` repeats level `{level}`")]
    DuplicateLevel { dimension: String, level: String },
    #[error("lattice has {0} cuboids, more than the enumeration bound of 2^20")]
    TooLarge(u128),
    #[error("cuboid `{0}` is not in the lattice")]
    UnknownCuboid(String),
    #[error("unknown dimension `{0}`")]
    UnknownDimension(String),
    #[error("dimension `{dimension}` has no level `{level}`")]
    UnknownLevel { dimension: String, level: String },
    #[error("malformed cuboid name `{0}`: expected `dim=level` pairs separated by `,`")]
    MalformedName(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionSpec {
    pub name: String,
    /// Finest first.
    pub levels: Vec<String>,
}

impl DimensionSpec {
    pub fn new(name: impl Into<String>, levels: &[&str]) -> Self {
        DimensionSpec {
            name: name.into(),
            levels: levels.iter().map(|l| l.to_string()).collect(),
        }
    }

    pub fn flat(name: impl Into<String>) -> Self {
        let name = name.into();
        DimensionSpec {
            levels: vec![name.clone()],
            name,
        }
    }
}

/// Consolidation choice for one dimension. `Level(0)` is the finest level;
/// `All` sorts after every level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LevelChoice {
    Level(usize),
    All,
}

impl LevelChoice {
    pub fn level(self) -> Option<usize> {
        match self {
            LevelChoice::Level(l) => Some(l),
            LevelChoice::All => None,
        }
    }
}

/// One choice per cube dimension, in the cube's dimension order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CuboidId(pub Vec<LevelChoice>);

impl CuboidId {
    pub fn choices(&self) -> &[LevelChoice] {
        &self.0
    }

    /// Number of dimensions that are not rolled away.
    pub fn level(&self) -> usize {
        self.0.iter().filter(|c| **c != LevelChoice::All).count()
    }
}

impl fmt::Display for CuboidId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            match c {
                LevelChoice::Level(l) => write!(f, "{l}")?,
                LevelChoice::All => f.write_str("*")?,
            }
        }
        f.write_str("]")
    }
}

/// The validated dimension list of a lattice; supports navigation without
/// enumeration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeShape {
    dims: Vec<DimensionSpec>,
}

impl LatticeShape {
    pub fn new(dims: Vec<DimensionSpec>) -> Result<LatticeShape, LatticeError> {
        let mut names = HashSet::new();
        for d in &dims {
            if !names.insert(d.name.as_str()) {
                return Err(LatticeError::DuplicateDimension(d.name.clone()));
            }
            if d.levels.is_empty() {
                return Err(LatticeError::NoLevels(d.name.clone()));
            }
            let mut levels = HashSet::new();
            for l in &d.levels {
                if !levels.insert(l.as_str()) {
                    return Err(LatticeError::DuplicateLevel {
                        dimension: d.name.clone(),
                        level: l.clone(),
                    });
                }
            }
        }
        Ok(LatticeShape { dims })
    }

    pub fn dimensions(&self) -> &[DimensionSpec] {
        &self.dims
    }

    pub fn dimension_index(&self, name: &str) -> Option<usize> {
        self.dims.iter().position(|d| d.name == name)
    }

    /// Closed-form cuboid count: the product of (levels + 1).
    pub fn count(&self) -> u128 {
        self.dims
            .iter()
            .map(|d| d.levels.len() as u128 + 1)
            .try_fold(1u128, |acc, n| acc.checked_mul(n))
            .unwrap_or(u128::MAX)
    }

    /// Length of every maximal chain from base to apex.
    pub fn height(&self) -> usize {
        self.dims.iter().map(|d| d.levels.len()).sum()
    }

    pub fn base(&self) -> CuboidId {
        CuboidId(vec![LevelChoice::Level(0); self.dims.len()])
    }

    pub fn apex(&self) -> CuboidId {
        CuboidId(vec![LevelChoice::All; self.dims.len()])
    }

    pub fn contains(&self, c: &CuboidId) -> bool {
        c.0.len() == self.dims.len()
            && c.0.iter().zip(&self.dims).all(|(choice, d)| match choice {
                LevelChoice::Level(l) => *l < d.levels.len(),
                LevelChoice::All => true,
            })
    }

    pub fn check(&self, c: &CuboidId) -> Result<(), LatticeError> {
        if self.contains(c) {
            Ok(())
        } else {
            Err(LatticeError::UnknownCuboid(c.to_string()))
        }
    }

    /// Steps from `c` up to the apex.
    pub fn rank(&self, c: &CuboidId) -> usize {
        c.0.iter()
            .zip(&self.dims)
            .map(|(choice, d)| match choice {
                LevelChoice::Level(l) => d.levels.len() - l,
                LevelChoice::All => 0,
            })
            .sum()
    }

    /// One-step coarsening of dimension `dim`, if it is not already `ALL`.
    pub fn coarsen(&self, c: &CuboidId, dim: usize) -> Option<CuboidId> {
        let next = match c.0[dim] {
            LevelChoice::Level(l) if l + 1 < self.dims[dim].levels.len() => LevelChoice::Level(l + 1),
            LevelChoice::Level(_) => LevelChoice::All,
            LevelChoice::All => return None,
        };
        let mut out = c.clone();
        out.0[dim] = next;
        Some(out)
    }

    /// One-step refinement of dimension `dim`, if it is not already finest.
    pub fn refine(&self, c: &CuboidId, dim: usize) -> Option<CuboidId> {
        let next = match c.0[dim] {
            LevelChoice::All => LevelChoice::Level(self.dims[dim].levels.len() - 1),
            LevelChoice::Level(0) => return None,
            LevelChoice::Level(l) => LevelChoice::Level(l - 1),
        };
        let mut out = c.clone();
        out.0[dim] = next;
        Some(out)
    }

    pub fn parents(&self, c: &CuboidId) -> Result<BTreeSet<CuboidId>, LatticeError> {
        self.check(c)?;
        Ok((0..self.dims.len()).filter_map(|d| self.coarsen(c, d)).collect())
    }

    pub fn children(&self, c: &CuboidId) -> Result<BTreeSet<CuboidId>, LatticeError> {
        self.check(c)?;
        Ok((0..self.dims.len()).filter_map(|d| self.refine(c, d)).collect())
    }

    /// All cuboids in ascending [`CuboidId`] order, generated lazily.
    pub fn iter(&self) -> impl Iterator<Item = CuboidId> + '_ {
        let n = self.dims.len();
        let mut next = Some(self.base());
        std::iter::from_fn(move || {
            let current = next.take()?;
            let mut succ = current.clone();
            let mut i = n;
            loop {
                if i == 0 {
                    break;
                }
                i -= 1;
                let max = self.dims[i].levels.len();
                match succ.0[i] {
                    LevelChoice::Level(l) if l + 1 < max => {
                        succ.0[i] = LevelChoice::Level(l + 1);
                        next = Some(succ);
                        break;
                    }
                    LevelChoice::Level(_) => {
                        succ.0[i] = LevelChoice::All;
                        next = Some(succ);
                        break;
                    }
                    LevelChoice::All => succ.0[i] = LevelChoice::Level(0),
                }
            }
            Some(current)
        })
    }

    /// Parses `dim=level,dim=level`; omitted dimensions are `ALL`. The empty
    /// string and `ALL` name the apex.
    pub fn parse_cuboid(&self, name: &str) -> Result<CuboidId, LatticeError> {
        let mut out = self.apex();
        let trimmed = name.trim();
        if trimmed.is_empty() || trimmed.eq_ignore_ascii_case("all") {
            return Ok(out);
        }
        let mut seen = HashSet::new();
        for pair in trimmed.split(',') {
            let (dim, level) = pair
                .split_once('=')
                .ok_or_else(|| LatticeError::MalformedName(name.to_string()))?;
            let (dim, level) = (dim.trim(), level.trim());
            let di = self
                .dimension_index(dim)
                .ok_or_else(|| LatticeError::UnknownDimension(dim.to_string()))?;
            if !seen.insert(di) {
                return Err(LatticeError::MalformedName(name.to_string()));
            }
            let li =
                self.dims[di]
                    .levels
                    .iter()
                    .position(|l| l == level)
                    .ok_or_else(|| LatticeError::UnknownLevel {
                        dimension: dim.to_string(),
                        level: level.to_string(),
                    })?;
            out.0[di] = LevelChoice::Level(li);
        }
        Ok(out)
    }

    /// Inverse of [`LatticeShape::parse_cuboid`]; the apex formats as the empty string.
    pub fn format_cuboid(&self, c: &CuboidId) -> String {
        c.0.iter()
            .zip(&self.dims)
            .filter_map(|(choice, d)| choice.level().map(|l| format!("{}={}", d.name, d.levels[l])))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// An eagerly enumerated lattice.
#[derive(Debug, Clone)]
pub struct CuboidLattice {
    shape: LatticeShape,
    cuboids: Vec<CuboidId>,
}

impl CuboidLattice {
    pub fn shape(&self) -> &LatticeShape {
        &self.shape
    }

    pub fn cuboids(&self) -> &[CuboidId] {
        &self.cuboids
    }

    pub fn len(&self) -> usize {
        self.cuboids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuboids.is_empty()
    }
}

pub fn enumerate_lattice(dims: Vec<DimensionSpec>) -> Result<CuboidLattice, LatticeError> {
    let shape = LatticeShape::new(dims)?;
    let count = shape.count();
    if count > MAX_ENUMERATED_CUBOIDS {
        return Err(LatticeError::TooLarge(count));
    }
    let mut cuboids = Vec::with_capacity(count as usize);
    cuboids.extend(shape.iter());
    Ok(CuboidLattice { shape, cuboids })
}

pub fn parents(lattice: &LatticeShape, c: &CuboidId) -> Result<BTreeSet<CuboidId>, LatticeError> {
    lattice.parents(c)
}

pub fn children(lattice: &LatticeShape, c: &CuboidId) -> Result<BTreeSet<CuboidId>, LatticeError> {
    lattice.children(c)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SelectionPolicy {
    /// Return exactly these cuboids, in this order.
    Pinned(Vec<CuboidId>),
    /// Rank by the Shannon entropy of the cell-occupancy distribution.
    BalancedOccupancy,
}

/// Shannon entropy (natural log) of a list of cell counts. Zero counts and an
/// empty list contribute nothing.
pub fn occupancy_entropy(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Picks at most `k` cuboids.
///
/// `occupancy` lists the candidates with the object count of each of their
/// non-empty cells. Under [`SelectionPolicy::BalancedOccupancy`] candidates are
/// ranked by entropy (descending), then lattice level (ascending), then
/// [`CuboidId`]. When `k >= 2` and the candidates cover at least two levels the
/// result does too: if the top `k` share one level, the worst of them is
/// swapped for the best candidate from another level.
pub fn select_cuboids(
    lattice: &LatticeShape,
    occupancy: &[(CuboidId, Vec<u64>)],
    policy: &SelectionPolicy,
    k: usize,
) -> Result<Vec<CuboidId>, LatticeError> {
    match policy {
        SelectionPolicy::Pinned(list) => {
            for c in list {
                lattice.check(c)?;
            }
            Ok(list.iter().take(k).cloned().collect())
        }
        SelectionPolicy::BalancedOccupancy => {
            let mut ranked: Vec<(f64, usize, &CuboidId)> = Vec::with_capacity(occupancy.len());
            for (c, counts) in occupancy {
                lattice.check(c)?;
                ranked.push((occupancy_entropy(counts), c.level(), c));
            }
            ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then_with(|| a.2.cmp(b.2)));
            ranked.dedup_by(|a, b| a.2 == b.2);

            let take = k.min(ranked.len());
            let mut chosen: Vec<usize> = (0..take).collect();
            let levels_all: BTreeSet<usize> = ranked.iter().map(|r| r.1).collect();
            if take >= 2 && levels_all.len() >= 2 {
                let levels_chosen: BTreeSet<usize> = chosen.iter().map(|&i| ranked[i].1).collect();
                if levels_chosen.len() == 1 {
                    if let Some(swap) = (take..ranked.len()).find(|&i| !levels_chosen.contains(&ranked[i].1)) {
                        chosen[take - 1] = swap;
                    }
                }
            }
            Ok(chosen.into_iter().map(|i| ranked[i].2.clone()).collect())
        }
    }
}
