use std::collections::HashMap;

use forest_cslam::cg::PartialPermutation;
use forest_cslam::clear::*;
use forest_cslam::RngSeed;
use nalgebra::SymmetricEigen;
use rand::seq::SliceRandom;
use rand::Rng;

fn random_instance(rng: &mut impl Rng) -> (Vec<usize>, Vec<PairwiseInput>) {
    let n = rng.random_range(2..8);
    let sizes: Vec<usize> = (0..n).map(|_| rng.random_range(0..7)).collect();
    let mut pairwise = Vec::new();
    for s in 0..n {
        for t in s + 1..n {
            if !rng.random_bool(0.7) {
                continue;
            }
            let mut targets: Vec<usize> = (0..sizes[t]).collect();
            targets.shuffle(rng);
            let pairs: Vec<(usize, usize)> =
                (0..sizes[s]).zip(targets).filter(|_| rng.random_bool(0.6)).collect();
            let perm = PartialPermutation::from_pairs(sizes[s], sizes[t], &pairs).unwrap();
            pairwise.push(PairwiseInput { s, t, perm });
        }
    }
    (sizes, pairwise)
}

// P_tu ∘ P_st ⊆ P_su for every ordered triple, on the maps induced by `g`.
fn triples_consistent(g: &GlobalAssociation) -> bool {
    let n = g.maps.len();
    let full: Vec<Vec<PartialPermutation>> =
        (0..n).map(|s| (0..n).map(|t| g.compose_pairwise(s, t)).collect()).collect();
    for s in 0..n {
        for t in 0..n {
            for u in 0..n {
                if s == t || t == u || s == u {
                    continue;
                }
                for (i, j) in full[s][t].pairs() {
                    if let Some(k) = full[t][u].get(j) {
                        if full[s][u].get(i) != Some(k) {
                            return false;
                        }
                    }
                }
            }
        }
    }
    true
}

fn injective_per_submap(g: &GlobalAssociation) -> bool {
    g.maps.iter().all(|m| {
        let mut seen = vec![false; g.universe_size];
        m.iter().all(|&u| u < g.universe_size && !std::mem::replace(&mut seen[u], true))
    })
}

fn same_partition(a: &[Vec<usize>], b: &[Vec<usize>]) -> bool {
    let mut fwd = HashMap::new();
    let mut bwd = HashMap::new();
    for (ra, rb) in a.iter().zip(b) {
        if ra.len() != rb.len() {
            return false;
        }
        for (&x, &y) in ra.iter().zip(rb) {
            if *fwd.entry(x).or_insert(y) != y || *bwd.entry(y).or_insert(x) != x {
                return false;
            }
        }
    }
    true
}

fn component_count(sizes: &[usize], pairwise: &[PairwiseInput]) -> usize {
    let offsets: Vec<usize> = sizes.iter().scan(0, |acc, &n| {
        let o = *acc;
        *acc += n;
        Some(o)
    }).collect();
    let total: usize = sizes.iter().sum();
    let mut parent: Vec<usize> = (0..total).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        r
    }
    for p in pairwise {
        for (i, j) in p.perm.pairs() {
            let (a, b) = (find(&mut parent, offsets[p.s] + i), find(&mut parent, offsets[p.t] + j));
            parent[a] = b;
        }
    }
    (0..total).filter(|&x| find(&mut parent, x) == x).count()
}

#[test]
fn adversarial_inputs_give_cycle_consistent_output() {
    let mut rng = RngSeed(41).rng();
    for cfg in [ClearConfig::default(), ClearConfig { refine: false, ..ClearConfig::default() }, ClearConfig {
        assignment: Assignment::Hungarian,
        ..ClearConfig::default()
    }] {
        for _ in 0..500 {
            let (sizes, pairwise) = random_instance(&mut rng);
            let g = clear_solve(&sizes, &pairwise, &cfg).unwrap();
            assert_eq!(g.sizes(), sizes);
            assert!(injective_per_submap(&g));
            assert!(triples_consistent(&g));
            let used: std::collections::HashSet<usize> = g.maps.iter().flatten().copied().collect();
            assert_eq!(used.len(), g.universe_size);
            assert!(check_cycle_consistency(&sizes, &g.induced_pairwise()).unwrap().consistent);
        }
    }
}

#[test]
fn noise_free_input_is_recovered_exactly() {
    for pair_prob in [1.0, 0.5] {
        for s in 0..100 {
            let spec = SyntheticSpec { universe: 20, submaps: 10, observe_prob: 0.5, pair_prob, corrupt_frac: 0.0 };
            let inst = synthetic_instance(&spec, RngSeed(s));
            let g = clear_solve(&inst.sizes, &inst.pairwise, &ClearConfig::default()).unwrap();
            if pair_prob == 1.0 {
                assert!(same_partition(&g.maps, &inst.truth), "seed {s}");
            } else {
                let induced = g.induced_pairwise();
                let (correct, total) = match_counts(&induced, &inst.truth);
                assert_eq!(correct, total, "seed {s}");
                let (_, input_total) = match_counts(&inst.pairwise, &inst.truth);
                assert!(total >= input_total);
            }
        }
    }
}

#[test]
fn universe_estimate_near_truth() {
    let mut within = 0;
    let trials = 100;
    for s in 0..trials {
        let spec = SyntheticSpec { universe: 20, submaps: 10, observe_prob: 0.5, pair_prob: 1.0, corrupt_frac: 0.0 };
        let inst = synthetic_instance(&spec, RngSeed(1000 + s));
        let observed: std::collections::HashSet<usize> = inst.truth.iter().flatten().copied().collect();
        let g = build_aggregate(&inst.sizes, &inst.pairwise).unwrap();
        let m = estimate_universe_size(&normalized_laplacian(&g), 0.5);
        assert_eq!(m, observed.len(), "clean seed {s}");
        let noisy = SyntheticSpec { corrupt_frac: 0.05, ..spec };
        let inst = synthetic_instance(&noisy, RngSeed(1000 + s));
        let g = build_aggregate(&inst.sizes, &inst.pairwise).unwrap();
        let m = estimate_universe_size(&normalized_laplacian(&g), 0.5);
        if m.abs_diff(observed.len()) <= 1 {
            within += 1;
        }
    }
    assert!(within * 10 >= trials * 9, "{within}/{trials}");
}

#[test]
fn zero_eigenvalues_count_components() {
    let mut rng = RngSeed(43).rng();
    for _ in 0..100 {
        let (sizes, pairwise) = random_instance(&mut rng);
        let g = build_aggregate(&sizes, &pairwise).unwrap();
        let want = component_count(&sizes, &pairwise);
        if want == 0 {
            continue;
        }
        for l in [laplacian(&g), normalized_laplacian(&g)] {
            let zeros = SymmetricEigen::new(l).eigenvalues.iter().filter(|e| e.abs() < 1e-9).count();
            assert_eq!(zeros, want);
        }
    }
}

#[test]
fn bad_pairwise_shapes_are_rejected() {
    let perm = PartialPermutation::from_pairs(2, 3, &[(0, 0)]).unwrap();
    assert!(clear_solve(&[2, 2], &[PairwiseInput { s: 0, t: 1, perm: perm.clone() }], &ClearConfig::default()).is_err());
    assert!(clear_solve(&[2, 3], &[PairwiseInput { s: 0, t: 5, perm }], &ClearConfig::default()).is_err());
}
