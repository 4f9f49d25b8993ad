mod common;

use corridor_nav::prelude::*;
use proptest::prelude::*;

use common::{adjacency, bfs_hops, covered_points, decomposition_violations, random_grid};

fn layers() -> impl Strategy<Value = LayerSpec> {
    prop_oneof![Just(LayerSpec::Single), (1usize..4).prop_map(|thickness| LayerSpec::Uniform { thickness })]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decomposition_invariants_hold(
        seed in any::<u64>(),
        nx in 1usize..14,
        ny in 1usize..14,
        nz in 1usize..6,
        density in 0.0f64..0.6,
        layers in layers(),
        unknown_blocks in any::<bool>(),
    ) {
        let mut grid = random_grid(seed, [nx, ny, nz], density);
        for n in (0..grid.len()).step_by(5) {
            if grid.cell_at_linear(n) == Cell::Free {
                grid.set_linear(n, Cell::Unknown);
            }
        }
        let unknown = if unknown_blocks { UnknownPolicy::Blocked } else { UnknownPolicy::Free };
        let cfg = DecompositionConfig { layers, unknown };
        let graph = decompose(&grid, &cfg);
        let violations = decomposition_violations(&grid, &cfg, &graph);
        prop_assert!(violations.is_empty(), "{:?}", violations);
        let again = decompose(&grid, &cfg);
        prop_assert_eq!(graph.vertices(), again.vertices());
    }

    #[test]
    fn corridor_is_a_shortest_valid_chain(
        seed in any::<u64>(),
        nx in 2usize..20,
        ny in 2usize..20,
        density in 0.0f64..0.5,
        a in any::<prop::sample::Index>(),
        b in any::<prop::sample::Index>(),
    ) {
        let grid = random_grid(seed, [nx, ny, 2], density);
        let graph = decompose(&grid, &DecompositionConfig::default());
        let points = covered_points(&graph);
        prop_assume!(!points.is_empty());
        let (start, goal) = (*a.get(&points), *b.get(&points));
        let verts = graph.vertices();
        let first = (0..verts.len()).find(|&c| verts[c].contains(start)).unwrap();
        let goals: Vec<usize> = (0..verts.len()).filter(|&c| verts[c].contains(goal)).collect();
        let oracle = bfs_hops(&adjacency(&graph), first, &goals);
        match select_corridors(&graph, start, goal, &SearchConfig::default()) {
            Ok(c) => {
                prop_assert_eq!(Some(c.hops()), oracle);
                prop_assert!(c.contains(0, start) && c.contains(c.len() - 1, goal));
                for n in 0..c.hops() {
                    prop_assert!(c.junction(n).is_some());
                }
            }
            Err(e) => {
                prop_assert_eq!(e, CorridorError::GoalUnreachable);
                prop_assert_eq!(oracle, None);
            }
        }
    }
}
