//! Hierarchical merging of sub-clusters over transition barrier weights.
//!
//! Validated transitions become edges of a graph over the sub-cluster
//! centers, weighted by the barrier value f(t) = -ln p(t). Single-linkage
//! agglomeration merges the smallest barrier first (highest-density
//! crossings join earliest), which is exactly minimum-spanning-tree
//! clustering; cutting the resulting dendrogram at K recovers the K-cluster
//! partition.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::landscape::{
    assign_basin, Landscape, DEFAULT_GRAD_TOL, DEFAULT_MAX_ITER, DEFAULT_STEP,
};
use crate::tev::TransitionRecord;

/// Symmetric weighted graph over sub-cluster centers. Pairs without a
/// validated transition carry infinite weight; self-loops are forbidden.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjacencyGraph {
    n: usize,
    w: Vec<f64>,
}

impl AdjacencyGraph {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Edge weight; +infinity for absent pairs and self-loops.
    pub fn weight(&self, a: usize, b: usize) -> f64 {
        if a == b || a >= self.n || b >= self.n {
            return f64::INFINITY;
        }
        self.w[a * self.n + b]
    }

    /// Finite edges as (a, b, weight) with a < b, sorted by (a, b).
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for a in 0..self.n {
            for b in (a + 1)..self.n {
                let w = self.w[a * self.n + b];
                if w.is_finite() {
                    out.push((a, b, w));
                }
            }
        }
        out
    }
}

/// One agglomeration event: clusters named by their smallest original
/// vertex are joined at the given barrier weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeStep {
    pub step: usize,
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Ordered merge sequence over `n_leaves` sub-clusters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n_leaves: usize,
    pub merges: Vec<MergeStep>,
}

impl Dendrogram {
    /// Labels after replaying merges until `k` clusters remain.
    ///
    /// Mirrors [`merge_to_k`]: if the sequence ends (disconnected graph)
    /// before reaching `k`, the replay stops there and the labels reflect
    /// the achieved count.
    pub fn cut(&self, k: usize) -> Result<Vec<usize>> {
        if k < 1 || k > self.n_leaves {
            return Err(Error::InvalidArgument("cut level must be between 1 and the leaf count"));
        }
        let mut reps: Vec<usize> = (0..self.n_leaves).collect();
        let take = self.n_leaves - k;
        for m in self.merges.iter().take(take) {
            for r in reps.iter_mut() {
                if *r == m.b {
                    *r = m.a;
                }
            }
        }
        Ok(compact_labels(&reps))
    }

    /// Indented text rendering of the merge forest. Nodes 0..n_leaves are
    /// leaves; each merge adds an internal node and becomes the current
    /// node of its representative.
    pub fn render_text(&self) -> String {
        let mut node_of: Vec<usize> = (0..self.n_leaves).collect();
        let mut kids: Vec<[usize; 2]> = Vec::new();
        let mut weight: Vec<f64> = Vec::new();
        for m in &self.merges {
            let new = self.n_leaves + kids.len();
            kids.push([node_of[m.a], node_of[m.b]]);
            weight.push(m.weight);
            node_of[m.a] = new;
        }
        let total = self.n_leaves + kids.len();
        let mut is_child = vec![false; total];
        for ks in &kids {
            for &c in ks {
                is_child[c] = true;
            }
        }
        fn render(
            node: usize,
            depth: usize,
            n_leaves: usize,
            kids: &[[usize; 2]],
            weight: &[f64],
            out: &mut String,
        ) {
            for _ in 0..depth {
                out.push_str("  ");
            }
            if node < n_leaves {
                out.push_str(&format!("- leaf {node}\n"));
            } else {
                out.push_str(&format!("- merge w={:.6}\n", weight[node - n_leaves]));
                for &c in &kids[node - n_leaves] {
                    render(c, depth + 1, n_leaves, kids, weight, out);
                }
            }
        }
        let mut out = String::new();
        for node in (0..total).rev() {
            if !is_child[node] {
                render(node, 0, self.n_leaves, &kids, &weight, &mut out);
            }
        }
        out
    }
}

/// Builds the barrier-weighted graph over `n` sub-clusters. Duplicate
/// (a, b) records keep the minimum weight; indices must be in range.
pub fn build_graph(n: usize, tevs: &[TransitionRecord]) -> Result<AdjacencyGraph> {
    let mut w = vec![f64::INFINITY; n * n];
    for r in tevs {
        if r.a >= n || r.b >= n {
            return Err(Error::InvalidArgument("transition names a sub-cluster out of range"));
        }
        if r.a == r.b {
            return Err(Error::InvalidArgument("transition cannot join a sub-cluster to itself"));
        }
        let (a, b) = (r.a, r.b);
        if r.f_value < w[a * n + b] {
            w[a * n + b] = r.f_value;
            w[b * n + a] = r.f_value;
        }
    }
    Ok(AdjacencyGraph { n, w })
}

/// Result of agglomerating to a target cluster count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeOutcome {
    /// Vertex -> cluster id, ids compacted in order of smallest member.
    pub labels: Vec<usize>,
    /// Clusters actually reached; exceeds the target only when the graph
    /// disconnects before enough finite-weight merges exist.
    pub achieved: usize,
    /// The merges performed, in order.
    pub dendrogram: Dendrogram,
}

/// Single-linkage agglomeration: repeatedly joins the minimum-weight pair
/// (ties broken by lexicographic representative pair) with the min-rule
/// distance update, until `k` clusters remain or only infinite weights are
/// left.
pub fn merge_to_k(g: &AdjacencyGraph, k: usize) -> Result<MergeOutcome> {
    if k < 1 || k > g.n {
        return Err(Error::InvalidArgument("target cluster count must be between 1 and n"));
    }
    let n = g.n;
    let mut d = g.w.clone();
    let mut active: Vec<bool> = vec![true; n];
    let mut reps: Vec<usize> = (0..n).collect();
    let mut merges: Vec<MergeStep> = Vec::new();
    let mut clusters = n;
    while clusters > k {
        // Lexicographic scan with strict improvement keeps the smallest
        // (a, b) among ties.
        let mut best = f64::INFINITY;
        let mut pair = None;
        for a in 0..n {
            if !active[a] {
                continue;
            }
            for b in (a + 1)..n {
                if !active[b] {
                    continue;
                }
                if d[a * n + b] < best {
                    best = d[a * n + b];
                    pair = Some((a, b));
                }
            }
        }
        let (a, b) = match pair {
            Some(p) => p,
            None => break,
        };
        merges.push(MergeStep { step: merges.len(), a, b, weight: best });
        for c in 0..n {
            if active[c] && c != a && c != b {
                let ac = d[a * n + c].min(d[b * n + c]);
                d[a * n + c] = ac;
                d[c * n + a] = ac;
            }
        }
        active[b] = false;
        for r in reps.iter_mut() {
            if *r == b {
                *r = a;
            }
        }
        clusters -= 1;
    }
    Ok(MergeOutcome {
        labels: compact_labels(&reps),
        achieved: clusters,
        dendrogram: Dendrogram { n_leaves: n, merges },
    })
}

/// Agglomerates to a single cluster (or until disconnection).
pub fn full_dendrogram(g: &AdjacencyGraph) -> Dendrogram {
    // k = 1 is always in range for n >= 1.
    merge_to_k(g, 1).map(|o| o.dendrogram).unwrap_or(Dendrogram {
        n_leaves: 0,
        merges: Vec::new(),
    })
}

/// Per-row outcome of labeling a dataset through basin assignment and the
/// merge map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataLabel {
    /// Final cluster id (labels_map applied to the basin's sub-cluster).
    pub cluster: usize,
    /// Sub-cluster whose basin the row's ascent flow reached.
    pub sub_cluster: usize,
    /// The ascent flow reached its terminator.
    pub converged: bool,
    /// Endpoint sat near two centers at once; the assignment is a tie-break.
    pub boundary: bool,
}

/// Assigns every row to the basin of a sub-cluster center via gradient
/// ascent, then maps sub-clusters to merged clusters. Flow diagnostics are
/// carried per row rather than failing the whole labeling.
pub fn label_dataset(
    ls: &Landscape,
    labels_map: &[usize],
    data: &Dataset,
) -> Result<Vec<DataLabel>> {
    if labels_map.len() != ls.model().k() {
        return Err(Error::InvalidArgument("labels map must cover every sub-cluster"));
    }
    let centers = ls.model().means().to_vec();
    let mut out = Vec::with_capacity(data.n());
    for i in 0..data.n() {
        let a = assign_basin(
            ls,
            data.row(i),
            &centers,
            f64::INFINITY,
            DEFAULT_STEP,
            DEFAULT_GRAD_TOL,
            DEFAULT_MAX_ITER,
        );
        out.push(DataLabel {
            cluster: labels_map[a.center],
            sub_cluster: a.center,
            converged: a.converged,
            boundary: a.boundary,
        });
    }
    Ok(out)
}

/// Renames cluster representatives to consecutive ids ordered by smallest
/// member vertex.
fn compact_labels(reps: &[usize]) -> Vec<usize> {
    let mut map: Vec<Option<usize>> = vec![None; reps.len()];
    let mut next = 0;
    let mut out = Vec::with_capacity(reps.len());
    for &r in reps {
        let id = match map[r] {
            Some(id) => id,
            None => {
                let id = next;
                map[r] = Some(id);
                next += 1;
                id
            }
        };
        out.push(id);
    }
    out
}
