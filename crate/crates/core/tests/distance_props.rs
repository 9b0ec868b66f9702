use gdnn_core::distance::{bfs_distances, encode_features, select_targets, TargetKind, TargetStrategy, UNREACHABLE};
use gdnn_core::graph::Graph;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_graph(n: usize, p: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    for u in 0..n as u32 {
        for v in u + 1..n as u32 {
            if rng.gen_bool(p) {
                pairs.push((u, v));
            }
        }
    }
    Graph::build(&pairs, n).unwrap()
}

/// All-pairs hop counts; `None` for unreachable pairs.
fn floyd_warshall(g: &Graph) -> Vec<Vec<Option<u32>>> {
    let n = g.num_nodes();
    let mut d = vec![vec![None; n]; n];
    for (u, row) in d.iter_mut().enumerate() {
        row[u] = Some(0);
        for &v in g.neighbors(u as u32) {
            row[v as usize] = Some(1);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(a), Some(b)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|c| a + b < c) {
                        d[i][j] = Some(a + b);
                    }
                }
            }
        }
    }
    d
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bfs_matches_floyd_warshall(n in 1usize..40, p in 0.0f64..0.6, seed in any::<u64>()) {
        let g = random_graph(n, p, seed);
        let oracle = floyd_warshall(&g);
        for s in 0..n {
            let got = bfs_distances(&g, s as u32);
            let want: Vec<u32> = oracle[s].iter().map(|d| d.unwrap_or(UNREACHABLE)).collect();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn distances_are_symmetric_and_obey_the_triangle_inequality(n in 2usize..30, p in 0.05f64..0.5, seed in any::<u64>()) {
        let g = random_graph(n, p, seed);
        let all: Vec<Vec<u32>> = (0..n as u32).map(|s| bfs_distances(&g, s)).collect();
        for u in 0..n {
            for v in 0..n {
                prop_assert_eq!(all[u][v], all[v][u]);
                for w in 0..n {
                    let (a, b, c) = (all[u][w], all[u][v], all[v][w]);
                    if b != UNREACHABLE && c != UNREACHABLE {
                        prop_assert!(a <= b + c);
                    }
                }
            }
        }
    }

    #[test]
    fn columns_have_a_single_zero_and_bounded_entries(n in 1usize..40, p in 0.0f64..0.5, k in 1usize..10, seed in any::<u64>()) {
        let g = random_graph(n, p, seed);
        let k = k.min(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let targets = select_targets(&g, TargetStrategy { kind: TargetKind::Random, k }, &mut rng).unwrap();
        let f = encode_features::<f64>(&g, &targets).unwrap();
        prop_assert_eq!(f.unreachable_sentinel, n as f64);
        for (j, &t) in targets.iter().enumerate() {
            let zeros: Vec<usize> = (0..n).filter(|&v| f.data.get(v, j) == 0.0).collect();
            prop_assert_eq!(zeros, vec![t as usize]);
        }
        prop_assert!(f.data.data().iter().all(|&x| (0.0..=n as f64).contains(&x)));
        let again = encode_features::<f64>(&g, &targets).unwrap();
        let bits = |m: &gdnn_core::Matrix<f64>| m.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&f.data), bits(&again.data));
    }

    #[test]
    fn degree_strategies_pick_extremes(n in 1usize..30, p in 0.0f64..0.5, k in 1usize..8, seed in any::<u64>()) {
        let g = random_graph(n, p, seed);
        let k = k.min(n);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut by_degree: Vec<u32> = (0..n as u32).collect();
        by_degree.sort_by_key(|&v| (g.degree(v), v));
        let mut want_min = by_degree[..k].to_vec();
        want_min.sort_unstable();
        by_degree.sort_by_key(|&v| (std::cmp::Reverse(g.degree(v)), v));
        let mut want_max = by_degree[..k].to_vec();
        want_max.sort_unstable();
        let min = select_targets(&g, TargetStrategy { kind: TargetKind::MinDegree, k }, &mut rng).unwrap();
        let max = select_targets(&g, TargetStrategy { kind: TargetKind::MaxDegree, k }, &mut rng).unwrap();
        prop_assert_eq!(min, want_min);
        prop_assert_eq!(max, want_max);
    }
}

#[test]
fn encode_matches_floyd_warshall_with_sentinel() {
    for seed in 0..20 {
        let n = 10 + seed as usize * 2;
        let g = random_graph(n, 0.08, seed);
        let oracle = floyd_warshall(&g);
        let targets: Vec<u32> = (0..n as u32).step_by(3).collect();
        let f = encode_features::<f64>(&g, &targets).unwrap();
        for v in 0..n {
            for (j, &t) in targets.iter().enumerate() {
                let want = oracle[v][t as usize].map_or(n as f64, f64::from);
                assert_eq!(f.data.get(v, j), want);
            }
        }
    }
}

#[test]
fn k_equal_to_n_gives_a_zero_diagonal() {
    let g = random_graph(12, 0.3, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let targets = select_targets(&g, TargetStrategy { kind: TargetKind::Random, k: 12 }, &mut rng).unwrap();
    assert_eq!(targets, (0..12).collect::<Vec<u32>>());
    let f = encode_features::<f64>(&g, &targets).unwrap();
    for v in 0..12 {
        assert_eq!(f.data.get(v, v), 0.0);
    }
}
