mod common;

use std::collections::BTreeSet;

use num::rational::BigRational;
use num::{BigInt, One};
use proptest::prelude::*;
use rand::Rng;
use relcoreset::materialize::{join_tuples, DEFAULT_CAP};
use relcoreset::{check_acyclic, materialize, pc_count, JoinIndex, JoinSampler, PseudoCube};

use common::*;

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(cfg(64))]

    #[test]
    fn counts_match_nested_loop_join(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 4, 12, 8);
        let index = JoinIndex::new(&inst).unwrap();
        let rows = brute_join(&inst);
        prop_assert_eq!(index.join_size(), rows.len() as u128);
        for _ in 0..4 {
            let s = inst.tables();
            let a = random_subset(&mut r, s);
            let cubes = vec![random_cube(&mut r, &inst, a)];
            prop_assert_eq!(pc_count(&index, &cubes).unwrap(), brute_count(&inst, &rows, &cubes));
        }
    }

    #[test]
    fn disjoint_cubes_intersect(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 4, 10, 8);
        let s = inst.tables();
        prop_assume!(s >= 2);
        let index = JoinIndex::new(&inst).unwrap();
        let rows = brute_join(&inst);
        let split = r.random_range(1..s);
        let left: Vec<usize> = (0..split).collect();
        let right: Vec<usize> = (split..s).collect();
        let cubes = vec![random_cube(&mut r, &inst, left), random_cube(&mut r, &inst, right)];
        prop_assert_eq!(pc_count(&index, &cubes).unwrap(), brute_count(&inst, &rows, &cubes));
    }

    #[test]
    fn count_is_monotone_in_radius(seed in any::<u64>(), grow in 0.0f64..2.0) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 4, 12, 8);
        let index = JoinIndex::new(&inst).unwrap();
        let a = random_subset(&mut r, inst.tables());
        let small = random_cube(&mut r, &inst, a);
        let big = PseudoCube::new(small.index_set.clone(), small.center.clone(), small.radius + grow);
        let n_small = pc_count(&index, std::slice::from_ref(&small)).unwrap();
        let n_big = pc_count(&index, std::slice::from_ref(&big)).unwrap();
        prop_assert!(n_small <= n_big);
        prop_assert!(n_big <= index.join_size());
    }

    #[test]
    fn materialize_is_the_join(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 4, 10, 8);
        let index = JoinIndex::new(&inst).unwrap();
        let dm = materialize(&index, DEFAULT_CAP).unwrap();
        prop_assert_eq!(&dm.features, &inst.partition.full);
        let ours = sorted(dm.points.to_rows());
        let theirs = sorted(brute_join(&inst));
        prop_assert_eq!(ours, theirs);
    }

    #[test]
    fn partition_blocks_are_disjoint_and_cover(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 5, 3, 8);
        let p = &inst.partition;
        let mut seen = BTreeSet::new();
        for (i, block) in p.disjoint.iter().enumerate() {
            for f in block {
                prop_assert!(seen.insert(f.clone()), "feature {} in two blocks", f);
                prop_assert!(p.per_table[i].contains(f));
                // D̂_i holds exactly the features of table i not seen earlier.
                prop_assert!(p.per_table[..i].iter().all(|t| !t.contains(f)));
            }
        }
        let full: BTreeSet<String> = p.full.iter().cloned().collect();
        prop_assert_eq!(seen, full);
    }

    #[test]
    fn acyclicity_matches_exhaustive_tree_search(
        edges in prop::collection::vec(prop::collection::btree_set(0u8..6, 1..4), 1..6)
    ) {
        let edges: Vec<BTreeSet<String>> = edges
            .into_iter()
            .map(|e| e.into_iter().map(|v| format!("a{v}")).collect())
            .collect();
        let tables = schema_tables(&edges);
        let ours = check_acyclic(&tables);
        prop_assert_eq!(ours.is_ok(), has_join_tree(&edges));
        if let Ok(tree) = ours {
            prop_assert!(tree.satisfies_running_intersection(&tables));
        }
    }

    #[test]
    fn sampler_picks_every_tuple_with_probability_one_over_n(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 4, 8, 8);
        let index = JoinIndex::new(&inst).unwrap();
        prop_assume!(index.join_size() > 0);
        let sampler = JoinSampler::new(&index, &vec![None; inst.tables()]).unwrap();
        let tuples = join_tuples(&index, DEFAULT_CAP).unwrap();
        let s = inst.tables();
        let n = BigRational::from_integer(BigInt::from(index.join_size()));
        for rows in tuples.chunks(s) {
            let mut p = BigRational::one();
            for (num, den) in sampler.descent_factors(rows) {
                p *= BigRational::new(BigInt::from(num), BigInt::from(den));
            }
            prop_assert_eq!(p * &n, BigRational::one());
        }
    }

    #[test]
    fn cube_samples_stay_inside(seed in any::<u64>()) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, 4, 10, 8);
        let index = JoinIndex::new(&inst).unwrap();
        let a = random_subset(&mut r, inst.tables());
        let cube = random_cube(&mut r, &inst, a);
        match relcoreset::uniform_sample(&index, std::slice::from_ref(&cube), 50, seed) {
            Ok(pts) => {
                prop_assert_eq!(pts.len(), 50);
                for p in pts.iter() {
                    prop_assert!(in_cube(&inst, &cube, p));
                }
            }
            Err(relcoreset::Error::EmptyRegion) => {
                prop_assert_eq!(pc_count(&index, &[cube]).unwrap(), 0);
            }
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }
}

