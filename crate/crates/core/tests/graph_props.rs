use gdnn_core::graph::Graph;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn simple_pairs(max_nodes: u32) -> impl Strategy<Value = (usize, Vec<(u32, u32)>)> {
    (2..=max_nodes).prop_flat_map(|n| {
        let pair = (0..n, 0..n).prop_filter("no self-loops", |(u, v)| u != v);
        (Just(n as usize), prop::collection::vec(pair, 0..80))
    })
}

proptest! {
    #[test]
    fn build_ignores_order_and_orientation((n, pairs) in simple_pairs(24), seed in any::<u64>()) {
        let g = Graph::build(&pairs, n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shuffled: Vec<(u32, u32)> = pairs
            .iter()
            .map(|&(u, v)| if rand::Rng::gen_bool(&mut rng, 0.5) { (v, u) } else { (u, v) })
            .collect();
        shuffled.shuffle(&mut rng);
        prop_assert_eq!(Graph::build(&shuffled, n).unwrap(), g);
    }

    #[test]
    fn csr_invariants((n, pairs) in simple_pairs(24)) {
        let g = Graph::build(&pairs, n).unwrap();
        let degree_sum: usize = (0..n as u32).map(|v| g.degree(v)).sum();
        prop_assert_eq!(degree_sum, 2 * g.num_edges());
        prop_assert_eq!(g.row_offsets()[n], 2 * g.num_edges());
        for u in 0..n as u32 {
            let nbrs = g.neighbors(u);
            prop_assert!(nbrs.windows(2).all(|w| w[0] < w[1]));
            for (v, e) in g.neighbor_edges(u) {
                prop_assert!(v != u);
                prop_assert_eq!(g.edge_id(v, u), Some(e));
                let (a, b) = g.edges()[e as usize];
                prop_assert_eq!((a, b), (u.min(v), u.max(v)));
            }
        }
        let mut canonical: Vec<(u32, u32)> = pairs.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();
        canonical.sort_unstable();
        canonical.dedup();
        prop_assert_eq!(g.edges(), &canonical[..]);
    }

    #[test]
    fn sampling_is_a_subset((n, pairs) in simple_pairs(16), fanout in 1usize..6, seed in any::<u64>()) {
        let g = Graph::build(&pairs, n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in 0..n as u32 {
            let sample = g.sample_neighbors(v, fanout, &mut rng);
            prop_assert_eq!(sample.len(), fanout.min(g.degree(v)));
            prop_assert!(sample.windows(2).all(|w| w[0].0 < w[1].0));
            for (j, e) in sample {
                prop_assert_eq!(g.edge_id(v, j), Some(e));
            }
        }
    }

    #[test]
    fn sampling_with_large_fanout_is_the_full_neighborhood((n, pairs) in simple_pairs(16), seed in any::<u64>()) {
        let g = Graph::build(&pairs, n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fanout = g.max_degree().max(1);
        for v in 0..n as u32 {
            let sample = g.sample_neighbors(v, fanout, &mut rng);
            let full: Vec<_> = g.neighbor_edges(v).collect();
            prop_assert_eq!(sample, full);
        }
    }
}
