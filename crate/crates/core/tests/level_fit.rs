#[path = "support/qp_oracle.rs"]
mod qp_oracle;

use qp_oracle::{simplex_projection, DenseQp, Instance};
use tdamc_core::model::{GeoHierarchy, Schema, Universe};
use tdamc_core::noise::{BudgetAllocation, MeasurementPlan, NoisyMeasurement, QueryGroup};
use tdamc_core::rng::SeedStream;
use tdamc_core::topdown::{integerize, solve_level};

fn measurement(
    unit: usize,
    level: usize,
    group_index: usize,
    answers: &[f64],
    variance: f64,
) -> NoisyMeasurement {
    NoisyMeasurement {
        unit: format!("u{unit}"),
        unit_index: unit,
        level,
        group: format!("g{group_index}"),
        group_index,
        answers: answers.to_vec(),
        variance,
    }
}

/// Plan over levels `root, block` with the given groups everywhere.
fn plan(schema: &Schema, children: usize, groups: &[QueryGroup]) -> MeasurementPlan {
    let levels = vec!["root".to_string(), "block".to_string()];
    let hier = GeoHierarchy::from_fanouts(levels.clone(), &[children]).unwrap();
    MeasurementPlan::new(
        &BudgetAllocation::uniform(1.0, &levels, groups),
        schema,
        &hier,
    )
    .unwrap()
}

#[test]
fn random_instances_match_exhaustive_oracle() {
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let gap = Instance::random(seed).max_gap();
        assert!(gap <= 1e-6, "instance {seed}: gap {gap}");
        worst = worst.max(gap);
    }
    eprintln!("largest gap over 100 instances: {worst:e}");
}

/// Cells are fitted separately under detailed-only measurements; cell 0
/// carries the hand example.
#[test]
fn two_children_hand_oracle() {
    let schema = Schema::from_pairs(Universe::Person, &[("a", 2)]).unwrap();
    let plan = plan(&schema, 2, &[QueryGroup::detailed(&schema)]);
    let m1 = measurement(1, 1, 0, &[3.2, 1.0], 1.0);
    let m2 = measurement(2, 1, 0, &[-1.0, 1.0], 1.0);
    let sol = solve_level(&plan, 1, 2, &[vec![&m1], vec![&m2]], Some(&[2, 2]), None).unwrap();
    assert!((sol.values[0][0] - 2.0).abs() < 1e-6);
    assert!(sol.values[1][0].abs() < 1e-6);

    // Grid search over the feasible segment x1 + x2 = 2.
    let (mut best, mut arg) = (f64::INFINITY, 0.0);
    for i in 0..=20_000 {
        let x1 = i as f64 * 1e-4;
        let x2 = 2.0 - x1;
        let f = (x1 - 3.2).powi(2) + (x2 + 1.0).powi(2);
        if f < best {
            best = f;
            arg = x1;
        }
    }
    assert!((sol.values[0][0] - arg).abs() < 1e-4);
}

#[test]
fn smaller_variance_pulls_harder() {
    let schema = Schema::from_pairs(Universe::Person, &[("a", 2)]).unwrap();
    // Two groups with the same cells: the one-way marginal of the only
    // attribute, and the detailed query.
    let plan = plan(
        &schema,
        1,
        &[QueryGroup::new("a", &["a"]), QueryGroup::detailed(&schema)],
    );
    let fit = |v1: f64| {
        let a = measurement(1, 1, 0, &[10.0, 10.0], v1);
        let b = measurement(1, 1, 1, &[20.0, 20.0], 2.0);
        solve_level(&plan, 1, 2, &[vec![&a, &b]], None, None)
            .unwrap()
            .values[0][0]
    };
    // Weighted average with weights 1/v.
    let closed = |v1: f64| (10.0 / v1 + 20.0 / 2.0) / (1.0 / v1 + 1.0 / 2.0);
    assert!((fit(2.0) - closed(2.0)).abs() < 1e-6);
    assert!((fit(1.0) - closed(1.0)).abs() < 1e-6);
    assert!(fit(1.0) < fit(2.0));
}

/// One state with two blocks and two cells, detailed measurements only.
#[test]
fn state_and_blocks_match_simplex_projection() {
    let schema = Schema::from_pairs(Universe::Person, &[("a", 2)]).unwrap();
    let levels = vec!["state".to_string(), "block".to_string()];
    let hier = GeoHierarchy::from_fanouts(levels.clone(), &[2]).unwrap();
    let groups = [QueryGroup::detailed(&schema)];
    let plan = MeasurementPlan::new(
        &BudgetAllocation::uniform(1.0, &levels, &groups),
        &schema,
        &hier,
    )
    .unwrap();
    let total = 7u64;
    let state = measurement(0, 0, 0, &[5.4, 3.3], 1.0);
    let sol = solve_level(&plan, 0, 2, &[vec![&state]], None, Some(&[total])).unwrap();
    let want = simplex_projection(&[5.4, 3.3], total as f64);
    for (a, b) in sol.values[0].iter().zip(&want) {
        assert!((a - b).abs() < 1e-6, "{:?} vs {want:?}", sol.values[0]);
    }
    let oracle = DenseQp::from_measurements(&plan, 0, 2, &[vec![&state]], None, Some(&[total]))
        .solve_exhaustive();
    assert!((oracle[0] - want[0]).abs() < 1e-6 && (oracle[1] - want[1]).abs() < 1e-6);

    let mut rng = SeedStream::new(3).rng();
    let parent = integerize(&sol.values, None, Some(&[total]), &mut rng)
        .unwrap()
        .remove(0);
    assert_eq!(parent.iter().sum::<u64>(), total);
    let b1 = measurement(1, 1, 0, &[5.5, 1.2], 1.0);
    let b2 = measurement(2, 1, 0, &[-0.5, 0.4], 1.0);
    let blocks = solve_level(&plan, 1, 2, &[vec![&b1], vec![&b2]], Some(&parent), None).unwrap();
    for cell in 0..2 {
        let y = [b1.answers[cell], b2.answers[cell]];
        let want = simplex_projection(&y, parent[cell] as f64);
        for c in 0..2 {
            assert!((blocks.values[c][cell] - want[c]).abs() < 1e-6);
        }
    }
}
