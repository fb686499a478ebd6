use super::{ClusterError, Clustering, FeatureMatrix};

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean silhouette coefficient over all rows, using Euclidean distance.
///
/// Rows in singleton clusters contribute 0, as does any row whose intra- and
/// nearest-cluster mean distances are both 0.
pub fn silhouette(m: &FeatureMatrix, c: &Clustering) -> Result<f64, ClusterError> {
    if c.k < 2 {
        return Err(ClusterError::SilhouetteNeedsTwoClusters(c.k));
    }
    let n = m.n_rows();
    if c.assignment.len() != n {
        return Err(ClusterError::RowMismatch {
            clustering: c.assignment.len(),
            matrix: n,
        });
    }
    let sizes = c.sizes();
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(ClusterError::EmptyCluster(empty));
    }

    let mut total = 0.0;
    let mut sums = vec![0.0; c.k];
    for i in 0..n {
        let own = c.assignment[i];
        if sizes[own] == 1 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if j != i {
                sums[c.assignment[j]] += dist(m.row(i), m.row(j));
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..c.k)
            .filter(|&l| l != own)
            .map(|l| sums[l] / sizes[l] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}
