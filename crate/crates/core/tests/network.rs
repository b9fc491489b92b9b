use std::collections::{BTreeSet, VecDeque};

use cwbsim::network::{
    closeness, closeness_all, common_neighbors, degree_gini, generate_homophily_pa, homophily_index, SocialGraph,
};
use cwbsim::rng::stream;
use cwbsim::Execution;
use proptest::prelude::*;

fn graph_strategy(max_n: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2..=max_n).prop_flat_map(|n| {
        let pairs = proptest::collection::vec((0..n, 0..n), 0..(n * 3));
        pairs.prop_map(move |ps| {
            let edges: BTreeSet<(usize, usize)> = ps
                .into_iter()
                .filter(|(a, b)| a != b)
                .map(|(a, b)| (a.min(b), a.max(b)))
                .collect();
            (n, edges.into_iter().collect())
        })
    })
}

fn bfs_oracle(n: usize, edges: &[(usize, usize)], src: usize) -> Option<f64> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut dist = vec![usize::MAX; n];
    dist[src] = 0;
    let mut q = VecDeque::from([src]);
    while let Some(v) = q.pop_front() {
        for &w in &adj[v] {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                q.push_back(w);
            }
        }
    }
    let reached: Vec<usize> = dist.into_iter().filter(|&d| d != usize::MAX).collect();
    (reached.len() > 1).then(|| (reached.len() - 1) as f64 / reached.iter().sum::<usize>() as f64)
}

proptest! {
    #[test]
    fn closeness_matches_bfs((n, edges) in graph_strategy(50)) {
        let g = SocialGraph::from_edges(n, edges.iter().copied()).unwrap();
        for v in 0..n {
            prop_assert_eq!(closeness(&g, v).ok(), bfs_oracle(n, &edges, v));
        }
        let all = closeness_all(&g, Execution::Parallel);
        prop_assert_eq!(all, closeness_all(&g, Execution::Sequential));
    }

    #[test]
    fn common_neighbors_matches_double_loop((n, edges) in graph_strategy(30)) {
        let g = SocialGraph::from_edges(n, edges.iter().copied()).unwrap();
        let linked = |a: usize, b: usize| edges.contains(&(a.min(b), a.max(b)));
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                let naive = (0..n).filter(|&c| c != a && c != b && linked(a, c) && linked(b, c)).count();
                prop_assert_eq!(common_neighbors(&g, a, b).unwrap(), naive);
            }
        }
    }

    #[test]
    fn measures_invariant_under_relabeling((n, edges) in graph_strategy(25), seed in any::<u64>()) {
        prop_assume!(!edges.is_empty());
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = stream(seed, &[]);
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let g = SocialGraph::from_edges(n, edges.iter().copied()).unwrap();
        let h = SocialGraph::from_edges(n, edges.iter().map(|&(a, b)| (perm[a], perm[b]))).unwrap();
        prop_assert!((degree_gini(&g).unwrap() - degree_gini(&h).unwrap()).abs() < 1e-12);
        for (v, &pv) in perm.iter().enumerate() {
            prop_assert_eq!(closeness(&g, v).ok(), closeness(&h, pv).ok());
        }
        let opinions: Vec<f64> = (0..n).map(|i| (i as f64 / n as f64) * 2.0 - 1.0).collect();
        let permuted: Vec<f64> = {
            let mut o = vec![0.0; n];
            for v in 0..n {
                o[perm[v]] = opinions[v];
            }
            o
        };
        let a = homophily_index(&g, &opinions).unwrap();
        let b = homophily_index(&h, &permuted).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn generated_graph_is_simple_with_closed_form_size(n in 2usize..80, m in 1usize..6, h in 0.05f64..2.0, seed in any::<u64>()) {
        prop_assume!(n > m);
        let mut rng = stream(seed, &[]);
        let opinions: Vec<f64> = (0..n).map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0).collect();
        let g = generate_homophily_pa(n, m, &opinions, h, &mut rng).unwrap();
        prop_assert_eq!(g.edge_count(), m * (m + 1) / 2 + m * (n - m - 1));
        for v in (m + 1)..n {
            let earlier = g.neighbors(v).iter().filter(|&&u| u < v).count();
            prop_assert_eq!(earlier, m);
        }
    }
}

#[test]
fn clustered_opinions_attach_within_cluster() {
    let n = 20;
    let opinions: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { -0.9 } else { 0.9 }).collect();
    let (mut same, mut cross) = (0usize, 0usize);
    for seed in 0..1000 {
        let mut rng = stream(seed, &[]);
        let g = generate_homophily_pa(n, 1, &opinions, 0.1, &mut rng).unwrap();
        for (a, b) in g.edges() {
            if a.max(b) < 2 {
                continue;
            }
            if opinions[a] == opinions[b] {
                same += 1;
            } else {
                cross += 1;
            }
        }
    }
    assert!(cross < same, "cross {cross} same {same}");
}

/// Node 4 attaches once; its target frequencies follow exp(-|Δo|/h).
#[test]
fn attachment_frequency_follows_kernel() {
    let opinions = [0.0, 0.2, 0.6, 1.0, 0.0];
    let h = 0.3;
    let trials = 40_000;
    let mut hits = [0usize; 4];
    for seed in 0..trials {
        let mut rng = stream(seed, &[1]);
        let g = generate_homophily_pa(5, 1, &opinions, h, &mut rng).unwrap();
        let target = g.neighbors(4).iter().copied().find(|&u| u < 4).unwrap();
        hits[target] += 1;
    }
    let weights: Vec<f64> = opinions[..4].iter().map(|o| (-(o - 0.0f64).abs() / h).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut chi2 = 0.0;
    for j in 0..4 {
        let expected = trials as f64 * weights[j] / total;
        chi2 += (hits[j] as f64 - expected).powi(2) / expected;
    }
    // 0.999 quantile of chi-square with 3 degrees of freedom.
    assert!(chi2 < 16.27, "chi2 {chi2} hits {hits:?}");
    assert!(hits[0] > hits[1] && hits[1] > hits[2] && hits[2] > hits[3]);
}
