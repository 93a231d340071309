use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{Adjacency, Graph};
use crate::model::BlockAssignment;

const MAX_ROUNDS: usize = 100;

/// Initial partition by asynchronous label propagation, reduced to at most
/// `k_max` blocks by modularity-greedy merging.
///
/// Nodes without neighbors carry no signal and share one block. Ties in the
/// label vote are broken at random, so the result depends on `seed` only.
pub fn init_blocks(g: &Graph, k_max: usize, seed: u64) -> BlockAssignment {
    let n = g.n();
    let k_max = k_max.max(1);
    if n == 0 {
        return BlockAssignment::from_labels(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = label_propagation(g, &mut rng);

    // isolated nodes first, so they form block 0 when present
    let isolated = usize::MAX;
    let raw: Vec<usize> = (0..n)
        .map(|i| {
            if g.degree(i) == 0 {
                isolated
            } else {
                labels[i]
            }
        })
        .collect();
    let mut ids: HashMap<usize, usize> = HashMap::new();
    if raw.contains(&isolated) {
        ids.insert(isolated, 0);
    }
    let dense: Vec<usize> = raw
        .iter()
        .map(|&l| {
            let next = ids.len();
            *ids.entry(l).or_insert(next)
        })
        .collect();
    let z = BlockAssignment::from_labels(dense);
    if z.k() <= k_max {
        return z;
    }
    merge_to(g, z, k_max)
}

fn label_propagation(g: &Graph, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = g.n();
    let mut labels: Vec<usize> = (0..n).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut counts: HashMap<usize, usize> = HashMap::new();
    let mut best: Vec<usize> = Vec::new();
    for _ in 0..MAX_ROUNDS {
        order.shuffle(rng);
        let mut changed = false;
        for &i in &order {
            let nb = g.neighbors(i);
            if nb.is_empty() {
                continue;
            }
            counts.clear();
            for &j in nb {
                *counts.entry(labels[j]).or_insert(0) += 1;
            }
            let top = *counts.values().max().expect("non-empty");
            best.clear();
            best.extend(counts.iter().filter(|(_, &c)| c == top).map(|(&l, _)| l));
            // keeping the current label on ties guarantees termination
            if best.contains(&labels[i]) {
                continue;
            }
            best.sort_unstable();
            labels[i] = best[rng.random_range(0..best.len())];
            changed = true;
        }
        if !changed {
            break;
        }
    }
    labels
}

/// Repeatedly merges the smallest block into the partner with the largest
/// modularity gain `e_ab/m − vol_a·vol_b/(2m²)`, considering adjacent blocks
/// and the block of least volume.
fn merge_to(g: &Graph, z: BlockAssignment, k_max: usize) -> BlockAssignment {
    let k = z.k();
    let m = g.m().max(1) as f64;
    let mut size = z.sizes();
    let mut vol = vec![0f64; k];
    let mut links: Vec<HashMap<usize, f64>> = vec![HashMap::new(); k];
    for i in 0..g.n() {
        let a = z.block(i);
        vol[a] += g.degree(i) as f64;
        for &j in g.neighbors(i) {
            let b = z.block(j);
            if a != b && i < j {
                *links[a].entry(b).or_insert(0.0) += 1.0;
                *links[b].entry(a).or_insert(0.0) += 1.0;
            }
        }
    }
    let mut alive = vec![true; k];
    let mut parent: Vec<usize> = (0..k).collect();
    let mut remaining = k;

    while remaining > k_max {
        let small = (0..k)
            .filter(|&c| alive[c])
            .min_by_key(|&c| (size[c], c))
            .expect("at least two blocks alive");
        let min_vol = (0..k)
            .filter(|&c| alive[c] && c != small)
            .min_by(|&a, &b| vol[a].total_cmp(&vol[b]).then(a.cmp(&b)))
            .expect("at least two blocks alive");
        let gain = |c: usize| {
            links[small].get(&c).copied().unwrap_or(0.0) / m - vol[small] * vol[c] / (2.0 * m * m)
        };
        let mut target = min_vol;
        let mut best = gain(min_vol);
        let mut candidates: Vec<usize> = links[small].keys().copied().collect();
        candidates.sort_unstable();
        for c in candidates {
            let v = gain(c);
            if v > best || (v == best && c < target) {
                best = v;
                target = c;
            }
        }

        alive[small] = false;
        parent[small] = target;
        size[target] += size[small];
        vol[target] += vol[small];
        let moved = std::mem::take(&mut links[small]);
        for (c, w) in moved {
            links[c].remove(&small);
            if c != target {
                *links[target].entry(c).or_insert(0.0) += w;
                *links[c].entry(target).or_insert(0.0) += w;
            }
        }
        remaining -= 1;
    }

    let find = |mut c: usize| {
        while parent[c] != c {
            c = parent[c];
        }
        c
    };
    BlockAssignment::from_labels(z.labels().iter().map(|&l| find(l)).collect()).compacted()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block_em::adjusted_rand_index;

    fn clique_pair() -> Graph {
        let mut e = Vec::new();
        for base in [0, 5] {
            for i in 0..5 {
                for j in i + 1..5 {
                    e.push((base + i, base + j));
                }
            }
        }
        Graph::from_edge_list(e, 10).unwrap()
    }

    #[test]
    fn disjoint_cliques_separate() {
        let z = init_blocks(&clique_pair(), 5, 1);
        assert_eq!(z.k(), 2);
        let truth = BlockAssignment::new((0..10).map(|i| i / 5).collect(), 2).unwrap();
        assert!((adjusted_rand_index(&z, &truth).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_graph_one_block() {
        let z = init_blocks(&Graph::empty(6), 3, 0);
        assert_eq!(z.k(), 1);
        assert!(z.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn seeded_runs_repeat() {
        let g = clique_pair();
        assert_eq!(init_blocks(&g, 5, 42), init_blocks(&g, 5, 42));
    }

    #[test]
    fn merges_down_to_cap() {
        // five disjoint triangles
        let e: Vec<_> = (0..5)
            .flat_map(|t| {
                let b = 3 * t;
                [(b, b + 1), (b + 1, b + 2), (b, b + 2)]
            })
            .collect();
        let g = Graph::from_edge_list(e, 15).unwrap();
        assert_eq!(init_blocks(&g, 10, 3).k(), 5);
        let z = init_blocks(&g, 2, 3);
        assert_eq!(z.k(), 2);
        // triangles are never split
        for t in 0..5 {
            let b = 3 * t;
            assert!(z.block(b) == z.block(b + 1) && z.block(b) == z.block(b + 2));
        }
        assert_eq!(init_blocks(&g, 1, 3).k(), 1);
    }
}
