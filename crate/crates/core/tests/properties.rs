use beamnet::fixtures;
use beamnet::kinematics::*;
use beamnet::network::{assemble_coupling, node_residual, End};
use beamnet::par::Execution;
use beamnet::planner::{build_plan, check_sufficient_conditions, PlanInput, Solve};
use beamnet::solver::{cfl_dt, solve_forward, SolverOptions, TimeGrid};
use nalgebra::DVector;
use proptest::prelude::*;

fn endpoint(db: &beamnet::beam::DiagonalizedBeam, e: End) -> &beamnet::beam::Coefficients {
    if e.is_finish() { db.samples.last().unwrap() } else { &db.samples[0] }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    // Outgoing invariants produced by the coupling satisfy the physical node conditions.
    #[test]
    fn star_center_coupling_closes_node(k in 2usize..6, seed in proptest::collection::vec(-1.0f64..1.0, 78)) {
        let net = fixtures::star_network(k);
        let dbs = net.diagonalize_uniform(4, Execution::Sequential).unwrap();
        let coupling = assemble_coupling(&net, &dbs, 0).unwrap();
        let r_in = DVector::from_fn(6 * k, |i, _| seed[i % 72]);
        let q = Vec6::from_fn(|i, _| seed[72 + i]);
        let states = coupling.merge(&coupling.apply(&r_in, &q), &r_in);
        let y = |b: usize, e: End| {
            let a = coupling.order.iter().position(|i| i.beam == b && i.end == e).unwrap();
            endpoint(&dbs[b], e).l_inv * states[a]
        };
        prop_assert!(node_residual(&net, &dbs, 0, y, &q).max() < 1e-10);
    }

    // Star networks controlled at every leaf are planned in one sidewise phase.
    #[test]
    fn controlled_stars_plan_in_one_phase(k in 1usize..7) {
        let net = fixtures::star_network(k);
        let input = PlanInput { charged: vec![0], controlled: (1..=k).collect(), path_edges: (0..k).collect() };
        prop_assert!(check_sufficient_conditions(&net, &input).unwrap().holds());
        let plan = build_plan(&net, &input).unwrap();
        prop_assert_eq!(plan.phases.len(), 1);
        let from_center = plan.phases[0].solves.iter().all(|s| matches!(s, Solve::Sidewise { anchor: 0, .. }));
        prop_assert!(from_center);
    }

    // The forward problem is linear in small data up to the quadratic terms.
    #[test]
    fn forward_solution_scales_with_data(scale in 0.1f64..2.0) {
        let net = fixtures::path_network(2);
        let dbs = net.diagonalize_uniform(16, Execution::Sequential).unwrap();
        let grid = TimeGrid::for_horizon(0.5, cfl_dt(&dbs, 0.9));
        let opts = SolverOptions { strict_compat: false, ..Default::default() };
        let bump = |eps: f64| -> Vec<Vec<Vec12>> {
            dbs.iter()
                .map(|db| (0..=db.n_cells()).map(|j| Vec12::from_fn(|k, _| if k == 1 { eps * (std::f64::consts::PI * db.x(j)).sin().powi(3) } else { 0.0 })).collect())
                .collect()
        };
        let base = solve_forward(&net, &dbs, &bump(1e-6), &grid, &opts, None).unwrap().max_abs();
        let scaled = solve_forward(&net, &dbs, &bump(1e-6 * scale), &grid, &opts, None).unwrap().max_abs();
        prop_assert!((scaled - scale * base).abs() <= 1e-9 * base.max(1e-12) + 1e-15);
    }
}
