macro_rules! example_test {
    ($module:ident, $file:literal, $test:ident) => {
        mod $module {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }

        #[test]
        fn $test() {
            $module::run_example().expect(concat!($file, " should run"));
        }
    };
}

example_test!(occupancy_mapping, "occupancy_mapping.rs", occupancy_mapping_runs);
example_test!(decompose_l_shape, "decompose_l_shape.rs", decompose_l_shape_runs);
example_test!(corridor_search, "corridor_search.rs", corridor_search_runs);
example_test!(bernstein_waypoints, "bernstein_waypoints.rs", bernstein_waypoints_runs);
example_test!(time_optimal_trajectory, "time_optimal_trajectory.rs", time_optimal_trajectory_runs);
example_test!(depth_fusion, "depth_fusion.rs", depth_fusion_runs);
example_test!(replan_supervisor, "replan_supervisor.rs", replan_supervisor_runs);
example_test!(dead_end_escape, "dead_end_escape.rs", dead_end_escape_runs);
example_test!(nbv_exploration, "nbv_exploration.rs", nbv_exploration_runs);
example_test!(cli_pipeline, "cli_pipeline.rs", cli_pipeline_runs);
