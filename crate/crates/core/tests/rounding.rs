use proptest::prelude::*;
use rand::Rng;

use tdamc_core::rng::SeedStream;
use tdamc_core::topdown::integerize;

fn col_sums(m: &[Vec<u64>]) -> Vec<u64> {
    (0..m[0].len())
        .map(|j| m.iter().map(|r| r[j]).sum())
        .collect()
}

fn max_move(real: &[Vec<f64>], int: &[Vec<u64>]) -> f64 {
    real.iter()
        .flatten()
        .zip(int.iter().flatten())
        .map(|(a, &b)| (a - b as f64).abs())
        .fold(0.0, f64::max)
}

/// Ten children whose real cell values sum to 37 in every cell.
#[test]
fn ten_children_summing_to_37() {
    let stream = SeedStream::new(2024);
    for i in 0..1000u64 {
        let mut rng = stream.index(i).rng();
        let cells = rng.random_range(1..=5);
        let mut real = vec![vec![0.0; cells]; 10];
        for j in 0..cells {
            let w: Vec<f64> = (0..10).map(|_| rng.random::<f64>().powi(3)).collect();
            let s: f64 = w.iter().sum();
            for (c, wc) in w.iter().enumerate() {
                real[c][j] = 37.0 * wc / s;
            }
        }
        let parent = vec![37; cells];
        let out = integerize(
            &real,
            Some(&parent),
            None,
            &mut stream.label("round").index(i).rng(),
        )
        .unwrap();
        assert_eq!(col_sums(&out), parent, "instance {i}");
        let d = max_move(&real, &out);
        assert!(d < 1.0, "instance {i}: moved {d}");
    }
}

/// Integer matrix plus a margin-preserving perturbation on random 2x2
/// rectangles.
fn perturbed() -> impl Strategy<Value = (Vec<Vec<u64>>, Vec<Vec<f64>>)> {
    (2usize..5, 2usize..5)
        .prop_flat_map(|(r, k)| {
            (
                prop::collection::vec(prop::collection::vec(0u64..20, k), r),
                prop::collection::vec((0..r, 0..r, 0..k, 0..k, 0.0f64..1.0), 0..6),
            )
        })
        .prop_map(|(ints, moves)| {
            let mut real: Vec<Vec<f64>> = ints
                .iter()
                .map(|r| r.iter().map(|&v| v as f64).collect())
                .collect();
            for (a, b, i, j, t) in moves {
                if a == b || i == j {
                    continue;
                }
                let d = t * real[a][j].min(real[b][i]);
                real[a][i] += d;
                real[b][j] += d;
                real[a][j] -= d;
                real[b][i] -= d;
            }
            (ints, real)
        })
}

proptest! {
    #[test]
    fn both_margins_are_kept((ints, real) in perturbed(), seed in any::<u64>()) {
        let parent = col_sums(&ints);
        let totals: Vec<u64> = ints.iter().map(|r| r.iter().sum()).collect();
        let out = integerize(&real, Some(&parent), Some(&totals), &mut SeedStream::new(seed).rng()).unwrap();
        prop_assert_eq!(col_sums(&out), parent);
        prop_assert_eq!(out.iter().map(|r| r.iter().sum::<u64>()).collect::<Vec<_>>(), totals);
        prop_assert!(max_move(&real, &out) < 1.0);
    }

    #[test]
    fn row_totals_only(row in prop::collection::vec(0.0f64..30.0, 1..8), seed in any::<u64>()) {
        // Scale so the row sums to an integer.
        let s: f64 = row.iter().sum();
        let t = s.round().max(1.0);
        let real = vec![row.iter().map(|v| if s > 0.0 { v * t / s } else { t / row.len() as f64 }).collect::<Vec<_>>()];
        let out = integerize(&real, None, Some(&[t as u64]), &mut SeedStream::new(seed).rng()).unwrap();
        prop_assert_eq!(out[0].iter().sum::<u64>(), t as u64);
        prop_assert!(max_move(&real, &out) < 1.0);
    }

    #[test]
    fn integral_input_is_unchanged(ints in prop::collection::vec(prop::collection::vec(0u64..50, 3), 1..5), seed in any::<u64>()) {
        let real: Vec<Vec<f64>> = ints.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
        let parent = col_sums(&ints);
        let out = integerize(&real, Some(&parent), None, &mut SeedStream::new(seed).rng()).unwrap();
        prop_assert_eq!(out, ints);
    }
}
