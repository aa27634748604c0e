mod common;

use proptest::prelude::*;
use rand::Rng;
use relcoreset::aggtree::{build_tree, BuildOptions};
use relcoreset::kcenter::directed_hausdorff2;
use relcoreset::loss::{Dataset, LossModel, Theta};
use relcoreset::materialize::DEFAULT_CAP;
use relcoreset::pipeline::{run, CoresetConfig};
use relcoreset::train::objective_gradient;
use relcoreset::weights::exact_weights;
use relcoreset::{directed_hausdorff, gonzalez, materialize, JoinIndex, Points, PseudoCube};

use common::*;

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

fn point_set(max_n: usize, dim: usize) -> impl Strategy<Value = Points> {
    prop::collection::vec(prop::collection::vec(-5.0f64..5.0, dim), 1..=max_n)
        .prop_map(move |rows| Points::from_rows(dim, &rows))
}

proptest! {
    #![proptest_config(cfg(64))]

    #[test]
    fn gonzalez_is_a_two_approximation(pts in point_set(12, 2), k in 1usize..4, seed in any::<u64>()) {
        let set = gonzalez(&pts, k, seed);
        let opt = exhaustive_kcenter(&pts, k);
        prop_assert!(set.cover_radius() <= 2.0 * opt * (1.0 + 1e-12) + 1e-12);
        prop_assert!(set.centers.len() <= k);
        // Reported radius is the real coverage distance.
        let real = directed_hausdorff2(&pts, &set.centers).unwrap();
        prop_assert!(set.cover_radius2 >= real);
        prop_assert!(set.cover_radius() * set.cover_radius() >= real);
    }

    #[test]
    fn gonzalez_is_seed_deterministic(pts in point_set(20, 3), k in 1usize..6, seed in any::<u64>()) {
        prop_assert_eq!(gonzalez(&pts, k, seed), gonzalez(&pts, k, seed));
    }

    #[test]
    fn hausdorff_matches_definition(a in point_set(10, 3), b in point_set(10, 3)) {
        let ours = directed_hausdorff(&a, &b).unwrap();
        let theirs = hausdorff(&a.to_rows(), &b.to_rows());
        prop_assert!((ours - theirs).abs() <= 1e-12 * (1.0 + theirs));
        prop_assert_eq!(directed_hausdorff(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn hausdorff_triangle_inequality(a in point_set(8, 2), b in point_set(8, 2), c in point_set(8, 2)) {
        let ab = directed_hausdorff(&a, &b).unwrap();
        let bc = directed_hausdorff(&b, &c).unwrap();
        let ac = directed_hausdorff(&a, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-9);
    }

    #[test]
    fn kmeans_loss_is_continuous(
        p in prop::collection::vec(-5.0f64..5.0, 3),
        q in prop::collection::vec(-5.0f64..5.0, 3),
        centers in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..5),
        eps in 0.01f64..1.0,
    ) {
        let model = LossModel::KMeans { centers: centers.len(), eps };
        let theta = Theta::Centers(centers);
        let v = model.continuity_violation(&theta, &[(&p, &q), (&q, &p)], None).unwrap();
        prop_assert!(v <= 1e-9, "violation {}", v);
    }

    #[test]
    fn linear_losses_are_lipschitz(
        p in prop::collection::vec(-5.0f64..5.0, 4),
        q in prop::collection::vec(-5.0f64..5.0, 4),
        w in prop::collection::vec(-3.0f64..3.0, 4),
        b in -3.0f64..3.0,
        label: bool,
    ) {
        let theta = Theta::Linear { w, b };
        for model in [LossModel::Logistic { l2: 0.1 }, LossModel::Svm { lambda_reg: 1.0 }] {
            let v = model.continuity_violation(&theta, &[(&p, &q)], Some(label)).unwrap();
            prop_assert!(v <= 1e-9, "{} violation {}", model.name(), v);
        }
    }

    #[test]
    fn logistic_gradient_matches_finite_differences(
        rows in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 2..20),
        w in prop::collection::vec(-1.0f64..1.0, 3),
        b in -1.0f64..1.0,
        l2 in 0.0f64..0.5,
        seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let y: Vec<bool> = rows.iter().map(|_| r.random_bool(0.5)).collect();
        let weights: Vec<f64> = rows.iter().map(|_| r.random_range(0.1..3.0)).collect();
        let data = Dataset { x: Points::from_rows(3, &rows), y: Some(y) };
        let model = LossModel::Logistic { l2 };
        let theta = Theta::Linear { w: w.clone(), b };
        let (value, gw, gb) = objective_gradient(&model, &data, Some(&weights), &theta).unwrap();
        let f = |w: Vec<f64>, b: f64| model.weighted_objective(&Theta::Linear { w, b }, &data, Some(&weights)).unwrap();
        prop_assert!((value - f(w.clone(), b)).abs() < 1e-10);
        let h = 1e-6;
        for j in 0..3 {
            let mut up = w.clone();
            up[j] += h;
            let mut down = w.clone();
            down[j] -= h;
            let fd = (f(up, b) - f(down, b)) / (2.0 * h);
            prop_assert!((fd - gw[j]).abs() < 1e-5, "d/dw{}: {} vs {}", j, fd, gw[j]);
        }
        let fd = (f(w.clone(), b + h) - f(w.clone(), b - h)) / (2.0 * h);
        prop_assert!((fd - gb).abs() < 1e-5);
    }

    #[test]
    fn svm_subgradient_matches_away_from_kinks(
        rows in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 2), 2..15),
        w in prop::collection::vec(-1.0f64..1.0, 2),
        b in -1.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let y: Vec<bool> = rows.iter().map(|_| r.random_bool(0.5)).collect();
        let data = Dataset { x: Points::from_rows(2, &rows), y: Some(y.clone()) };
        // Skip points that sit near a hinge kink.
        let margin_ok = rows.iter().zip(&y).all(|(x, &yi)| {
            let t = w[0] * x[0] + w[1] * x[1] + b;
            let s = if yi { 1.0 } else { -1.0 };
            (1.0 - s * t).abs() > 1e-3
        });
        prop_assume!(margin_ok);
        let model = LossModel::Svm { lambda_reg: 2.0 };
        let (_, gw, gb) = objective_gradient(&model, &data, None, &Theta::Linear { w: w.clone(), b }).unwrap();
        let f = |w: Vec<f64>, b: f64| model.weighted_objective(&Theta::Linear { w, b }, &data, None).unwrap();
        let h = 1e-7;
        for j in 0..2 {
            let mut up = w.clone();
            up[j] += h;
            let mut down = w.clone();
            down[j] -= h;
            let fd = (f(up, b) - f(down, b)) / (2.0 * h);
            prop_assert!((fd - gw[j]).abs() < 1e-5);
        }
        let fd = (f(w.clone(), b + h) - f(w.clone(), b - h)) / (2.0 * h);
        prop_assert!((fd - gb).abs() < 1e-5);
    }
}

proptest! {
    #![proptest_config(cfg(24))]

    #[test]
    fn tree_nodes_respect_their_bounds(seed in any::<u64>(), k in 1usize..5) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 4, 10, 8);
        let index = JoinIndex::new(&inst).unwrap();
        prop_assume!(index.join_size() > 0);
        let tree = build_tree(&index, &BuildOptions::new(k, seed)).unwrap();
        let dm = materialize(&index, DEFAULT_CAP).unwrap();
        for node in &tree.nodes {
            let proj = dm.points.select_columns(&node.columns(&index));
            let d2 = directed_hausdorff2(&proj, &node.centers).unwrap();
            prop_assert!(d2 <= node.bound * node.bound, "node {} at level {}", node.id, node.level);
        }
        for p in dm.points.iter() {
            prop_assert!(tree.summary.cubes.iter().any(|c| in_cube(&inst, c, p)));
        }
    }

    #[test]
    fn root_counts_are_exact(seed in any::<u64>(), k in 1usize..5) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 3, 10, 6);
        let index = JoinIndex::new(&inst).unwrap();
        prop_assume!(index.join_size() > 0);
        let tree = build_tree(&index, &BuildOptions::new(k, seed)).unwrap();
        let rows = brute_join(&inst);
        for (cube, &n) in tree.summary.cubes.iter().zip(&tree.summary.counts) {
            prop_assert!(n > 0);
            prop_assert_eq!(n, brute_count(&inst, &rows, std::slice::from_ref(cube)));
        }
    }

    #[test]
    fn weights_are_seed_deterministic(seed in any::<u64>(), k in 1usize..5) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 3, 10, 6);
        prop_assume!(JoinIndex::new(&inst).unwrap().join_size() > 0);
        let mut config = CoresetConfig::new(k, seed);
        config.m_cap = 20_000;
        let a = run(&inst, &config).unwrap().coreset;
        let b = run(&inst, &config).unwrap().coreset;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn first_covering_conserves_mass(seed in any::<u64>(), k in 1usize..5) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 3, 10, 6);
        let index = JoinIndex::new(&inst).unwrap();
        prop_assume!(index.join_size() > 0);
        let tree = build_tree(&index, &BuildOptions::new(k, seed)).unwrap();
        let dm = materialize(&index, DEFAULT_CAP).unwrap();
        let all = vec![true; tree.summary.cubes.len()];
        let w = exact_weights(&inst.partition, &tree.summary.cubes, &all, &dm);
        prop_assert_eq!(w.iter().sum::<u128>(), index.join_size());
    }

    #[test]
    fn separated_cubes_get_their_counts(seed in any::<u64>(), k in 4usize..12) {
        // Zero-radius cubes never overlap, so every cube is heavy with its
        // exact count and the total is the join size.
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 3, 4, 6);
        let index = JoinIndex::new(&inst).unwrap();
        prop_assume!(index.join_size() > 0);
        let dm = materialize(&index, DEFAULT_CAP).unwrap();
        let mut config = CoresetConfig::new(k, seed);
        config.m_cap = 20_000;
        let c = run(&inst, &config).unwrap().coreset;
        prop_assume!(c.final_radius == 0.0);
        prop_assert_eq!(c.total_weight(), index.join_size() as f64);
        for (p, &w) in c.points.iter().zip(&c.weights) {
            let cube = PseudoCube::full(&inst.partition, p, 0.0);
            prop_assert_eq!(w, brute_count(&inst, &dm.points.to_rows(), &[cube]) as f64);
        }
    }
}
