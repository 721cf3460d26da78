//! Greedy agglomerative modularity maximisation on a weighted graph.

use std::fmt::Write as _;

use super::interactions::InteractionMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct CommunityPartition {
    /// Community id per node, numbered by first appearance.
    pub assignment: Vec<usize>,
    pub q: f64,
}

impl CommunityPartition {
    pub fn n_communities(&self) -> usize {
        self.assignment.iter().copied().max().map_or(0, |m| m + 1)
    }
}

/// Weighted modularity of `assignment` on a symmetric `n x n` adjacency.
/// Zero for a graph without edges.
pub fn modularity(adj: &[f64], n: usize, assignment: &[usize]) -> f64 {
    let deg: Vec<f64> = (0..n).map(|i| (0..n).map(|j| adj[i * n + j]).sum()).collect();
    let two_m: f64 = deg.iter().sum();
    if two_m <= 0.0 {
        return 0.0;
    }
    let k = assignment.iter().copied().max().map_or(0, |m| m + 1);
    let mut inner = vec![0.0; k];
    let mut tot = vec![0.0; k];
    for i in 0..n {
        tot[assignment[i]] += deg[i];
        for j in 0..n {
            if assignment[i] == assignment[j] {
                inner[assignment[i]] += adj[i * n + j];
            }
        }
    }
    (0..k).map(|c| inner[c] / two_m - (tot[c] / two_m).powi(2)).sum()
}

fn renumber(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::BTreeMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Merge communities while some merge raises modularity, always taking the
/// largest gain (ties to the smallest community indices). Returns whether
/// anything merged.
fn merge_phase(adj: &[f64], n: usize, two_m: f64, label: &mut [usize]) -> bool {
    // e[a][b]: weight fraction between communities a and b
    let mut e = vec![vec![0.0; n]; n];
    let mut a_tot = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            e[label[i]][label[j]] += adj[i * n + j] / two_m;
            a_tot[label[i]] += adj[i * n + j] / two_m;
        }
    }
    let mut alive = vec![false; n];
    label.iter().for_each(|&l| alive[l] = true);
    let mut any = false;
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in (0..n).filter(|&i| alive[i]) {
            for j in (i + 1..n).filter(|&j| alive[j]) {
                if e[i][j] <= 0.0 {
                    continue;
                }
                let gain = 2.0 * (e[i][j] - a_tot[i] * a_tot[j]);
                if gain > 0.0 && best.is_none_or(|(g, ..)| gain > g) {
                    best = Some((gain, i, j));
                }
            }
        }
        let Some((_, i, j)) = best else { return any };
        any = true;
        for k in 0..n {
            if k != i && k != j {
                e[i][k] += e[j][k];
                e[k][i] = e[i][k];
            }
        }
        e[i][i] += e[j][j] + 2.0 * e[i][j];
        a_tot[i] += a_tot[j];
        alive[j] = false;
        label.iter_mut().filter(|l| **l == j).for_each(|l| *l = i);
    }
}

/// Move single nodes to the community that gains the most modularity until
/// no move gains. Returns whether anything moved.
fn move_phase(adj: &[f64], n: usize, two_m: f64, label: &mut [usize]) -> bool {
    const EPS: f64 = 1e-12;
    let k: Vec<f64> = (0..n).map(|i| (0..n).map(|j| adj[i * n + j]).sum::<f64>() / two_m).collect();
    let mut tot = vec![0.0; n];
    let mut size = vec![0usize; n];
    for i in 0..n {
        tot[label[i]] += k[i];
        size[label[i]] += 1;
    }
    let mut any = false;
    let mut w = vec![0.0; n];
    loop {
        let mut moved = false;
        for i in 0..n {
            let own = label[i];
            w.iter_mut().for_each(|v| *v = 0.0);
            for j in (0..n).filter(|&j| j != i) {
                w[label[j]] += adj[i * n + j] / two_m;
            }
            let stay = w[own] - k[i] * (tot[own] - k[i]);
            let mut best = (stay, own);
            // an empty community scores 0, the value of standing alone
            let mut empty_seen = size[own] == 1;
            for c in 0..n {
                if c == own {
                    continue;
                }
                if size[c] == 0 {
                    if empty_seen {
                        continue;
                    }
                    empty_seen = true;
                }
                let v = w[c] - k[i] * tot[c];
                if v > best.0 + EPS {
                    best = (v, c);
                }
            }
            if best.1 != own {
                tot[own] -= k[i];
                size[own] -= 1;
                tot[best.1] += k[i];
                size[best.1] += 1;
                label[i] = best.1;
                moved = true;
                any = true;
            }
        }
        if !moved {
            return any;
        }
    }
}

/// Perturbation rounds are quadratic in the node count per candidate, so
/// they only run on small graphs.
pub const KICK_MAX_NODES: usize = 64;

/// One perturbation round: force a single node into another (or a fresh)
/// community, a pair of nodes into a fresh community, or two communities
/// together; let the mover settle and keep the first result that raises
/// modularity.
fn kick_phase(adj: &[f64], n: usize, two_m: f64, label: &mut Vec<usize>, q: f64) -> Option<f64> {
    let try_candidate = |cand: &mut Vec<usize>| {
        move_phase(adj, n, two_m, cand);
        let r = renumber(cand);
        (modularity(adj, n, &r), r)
    };
    let base = renumber(label);
    let k = base.iter().copied().max().map_or(0, |m| m + 1);
    for i in 0..n {
        for c in 0..=k {
            if c == base[i] {
                continue;
            }
            let mut cand = base.clone();
            cand[i] = c;
            let (nq, r) = try_candidate(&mut cand);
            if nq > q + 1e-12 {
                *label = r;
                return Some(nq);
            }
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let mut cand = base.clone();
            cand[i] = k;
            cand[j] = k;
            let (nq, r) = try_candidate(&mut cand);
            if nq > q + 1e-12 {
                *label = r;
                return Some(nq);
            }
        }
    }
    for a in 0..k {
        for b in a + 1..k {
            let mut cand: Vec<usize> = base.iter().map(|&l| if l == b { a } else { l }).collect();
            let (nq, r) = try_candidate(&mut cand);
            if nq > q + 1e-12 {
                *label = r;
                return Some(nq);
            }
        }
    }
    None
}

/// Start from singletons and repeatedly merge the pair of communities with
/// the largest modularity gain, then refine by single-node moves and, on
/// graphs of at most [`KICK_MAX_NODES`] nodes, perturbation rounds until
/// nothing raises modularity.
pub fn greedy_modularity_adj(adj: &[f64], n: usize) -> CommunityPartition {
    let two_m: f64 = adj.iter().sum();
    let mut label: Vec<usize> = (0..n).collect();
    if two_m <= 0.0 {
        return CommunityPartition { assignment: label, q: 0.0 };
    }
    merge_phase(adj, n, two_m, &mut label);
    move_phase(adj, n, two_m, &mut label);
    let mut q = modularity(adj, n, &renumber(&label));
    if n <= KICK_MAX_NODES {
        while let Some(nq) = kick_phase(adj, n, two_m, &mut label, q) {
            q = nq;
        }
    }
    let assignment = renumber(&label);
    let q = modularity(adj, n, &assignment);
    CommunityPartition { assignment, q }
}

/// 75th percentile (nearest rank) of the positive off-diagonal weights.
pub fn default_edge_threshold(m: &InteractionMatrix) -> f64 {
    let v = m.len();
    let mut w: Vec<f64> = (0..v)
        .flat_map(|i| (i + 1..v).map(move |j| (i, j)))
        .map(|(i, j)| m.get(i, j))
        .filter(|&x| x > 0.0)
        .collect();
    if w.is_empty() {
        return 0.0;
    }
    w.sort_by(f64::total_cmp);
    let rank = ((0.75 * w.len() as f64).ceil() as usize).clamp(1, w.len());
    w[rank - 1]
}

/// Communities on the graph keeping pairs with weight `>= threshold`.
pub fn greedy_modularity(m: &InteractionMatrix, threshold: f64) -> CommunityPartition {
    let v = m.len();
    let adj: Vec<f64> = (0..v * v)
        .map(|k| {
            let (i, j) = (k / v, k % v);
            let w = m.get(i, j);
            if i != j && w > 0.0 && w >= threshold {
                w
            } else {
                0.0
            }
        })
        .collect();
    greedy_modularity_adj(&adj, v)
}

pub fn communities_csv(m: &InteractionMatrix, p: &CommunityPartition) -> String {
    let mut s = String::from("variant,community_id\n");
    for (v, c) in m.variants.iter().zip(&p.assignment) {
        let _ = writeln!(s, "{v},{c}");
    }
    let _ = writeln!(s, "Q={}", p.q);
    s
}
