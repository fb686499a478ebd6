//! Processing plans: which analysis elements run, in what order, and how many
//! at once.

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    Sequential,
    Concurrent(usize),
    /// Limit taken from the platform's available parallelism.
    #[default]
    Auto,
}

impl ExecMode {
    /// Worker limit; at least 1.
    pub fn limit(self) -> usize {
        match self {
            ExecMode::Sequential => 1,
            ExecMode::Concurrent(n) => n.max(1),
            ExecMode::Auto => std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

/// `after` cannot start until `before` has finished.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dependency {
    pub before: String,
    pub after: String,
}

impl Dependency {
    pub fn new(before: impl Into<String>, after: impl Into<String>) -> Self {
        Dependency {
            before: before.into(),
            after: after.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProcessingPlan {
    pub elements: Vec<String>,
    pub dependencies: Vec<Dependency>,
    pub mode: ExecMode,
    pub limit: usize,
    pub order: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("dependency references unknown element `{0}`")]
    UnknownElement(String),
    #[error("element `{0}` listed twice")]
    DuplicateElement(String),
    #[error("dependency cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("concurrency limit must be at least 1")]
    ZeroLimit,
}

/// Orders `elements` topologically, breaking ties by input order.
///
/// With `include_dependents`, `dependencies` acts as a registry: every
/// element that transitively depends on a requested one joins the plan,
/// appended in discovery order, and edges touching elements outside the
/// plan are ignored. Without it, every edge must connect listed elements.
pub fn plan_processing(
    elements: &[String],
    dependencies: &[Dependency],
    mode: ExecMode,
    include_dependents: bool,
) -> Result<ProcessingPlan, PlanError> {
    if mode == ExecMode::Concurrent(0) {
        return Err(PlanError::ZeroLimit);
    }
    let mut nodes: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for e in elements {
        if index.insert(e.clone(), nodes.len()).is_some() {
            return Err(PlanError::DuplicateElement(e.clone()));
        }
        nodes.push(e.clone());
    }

    if include_dependents {
        let mut i = 0;
        while i < nodes.len() {
            let current = nodes[i].clone();
            for dep in dependencies.iter().filter(|d| d.before == current) {
                if !index.contains_key(&dep.after) {
                    index.insert(dep.after.clone(), nodes.len());
                    nodes.push(dep.after.clone());
                }
            }
            i += 1;
        }
    } else if let Some(d) = dependencies
        .iter()
        .find(|d| !index.contains_key(&d.before) || !index.contains_key(&d.after))
    {
        let missing = if index.contains_key(&d.before) {
            &d.after
        } else {
            &d.before
        };
        return Err(PlanError::UnknownElement(missing.clone()));
    }

    let edges: Vec<Dependency> = dependencies
        .iter()
        .filter(|d| index.contains_key(&d.before) && index.contains_key(&d.after))
        .cloned()
        .collect();
    let n = nodes.len();
    let mut indegree = vec![0usize; n];
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut pred: Vec<Vec<usize>> = vec![Vec::new(); n];
    for e in &edges {
        let (a, b) = (index[&e.before], index[&e.after]);
        succ[a].push(b);
        pred[b].push(a);
        indegree[b] += 1;
    }

    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &j in &succ[i] {
            indegree[j] -= 1;
            if indegree[j] == 0 {
                ready.insert(j);
            }
        }
    }
    if order.len() < n {
        return Err(PlanError::Cycle(find_cycle(&indegree, &pred, &nodes)));
    }

    Ok(ProcessingPlan {
        limit: mode.limit(),
        elements: nodes.clone(),
        dependencies: edges,
        mode,
        order: order.into_iter().map(|i| nodes[i].clone()).collect(),
    })
}

/// Walks predecessor edges among unprocessed nodes until one repeats.
fn find_cycle(indegree: &[usize], pred: &[Vec<usize>], nodes: &[String]) -> Vec<String> {
    let stuck = |i: usize| indegree[i] > 0;
    let mut at = (0..nodes.len()).find(|&i| stuck(i)).expect("a node is stuck");
    let mut path = vec![at];
    loop {
        at = *pred[at]
            .iter()
            .find(|&&p| stuck(p))
            .expect("stuck nodes have stuck predecessors");
        if let Some(pos) = path.iter().position(|&p| p == at) {
            let mut cycle: Vec<String> = path[pos..].iter().rev().map(|&i| nodes[i].clone()).collect();
            cycle.push(cycle[0].clone());
            return cycle;
        }
        path.push(at);
    }
}

/// Runs `task(0..n)` on up to `limit` threads and returns results by index.
pub fn run_indexed<T, F>(limit: usize, n: usize, task: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = limit.max(1).min(n);
    if workers <= 1 {
        return (0..n).map(task).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let out = task(i);
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|o| o.expect("every index ran"))
        .collect()
}
