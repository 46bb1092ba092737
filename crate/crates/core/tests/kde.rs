use densde::grid::torus_diff;
use densde::mollifier::{kde_at_particles, kde_at_points, MollifierKernel, ParticleEnsemble};
use densde::StreamFactory;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn cloud(n: usize, dim: usize, l: f64, seed: u64) -> Vec<f64> {
    let mut r = StreamFactory::new(seed).auxiliary(0x4B, n as u64);
    (0..n * dim).map(|_| r.random::<f64>() * l).collect()
}

fn brute(pos: &[f64], dim: usize, l: f64, k: &MollifierKernel, x: &[f64]) -> f64 {
    let n = pos.len() / dim;
    let s: f64 = pos
        .chunks_exact(dim)
        .map(|y| {
            let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| torus_diff(*a, *b, l)).collect();
            k.eval(&d)
        })
        .sum();
    s / n as f64
}

#[test]
fn cell_list_matches_brute_force_2d() {
    let l = 6.0;
    for (trial, n) in [1usize, 7, 100, 700].into_iter().enumerate() {
        let pos = cloud(n, 2, l, trial as u64);
        let ens = ParticleEnsemble::new(pos.clone(), 2, l, 0.0).unwrap();
        let k = MollifierKernel::bump(1.0, 2).unwrap().scaled(n, 0.2).unwrap();
        let fast = kde_at_particles(&ens, &k).unwrap();
        for (i, x) in pos.chunks_exact(2).enumerate() {
            assert!((fast[i] - brute(&pos, 2, l, &k, x)).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn permutation_leaves_values_unchanged(n in 1usize..400, seed in any::<u64>(), dim in 1usize..3) {
        let l = 5.0;
        let pos = cloud(n, dim, l, seed);
        let k = MollifierKernel::bump(1.0, dim).unwrap().scaled(n, 0.2).unwrap();
        let ens = ParticleEnsemble::new(pos.clone(), dim, l, 0.0).unwrap();
        let queries = cloud(50, dim, l, seed ^ 1);
        let base = kde_at_points(&ens, &k, &queries).unwrap();
        let at_particles = kde_at_particles(&ens, &k).unwrap();

        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut StreamFactory::new(seed).auxiliary(9, 0));
        let shuffled: Vec<f64> = perm.iter().flat_map(|&i| pos[i * dim..(i + 1) * dim].to_vec()).collect();
        let ens2 = ParticleEnsemble::new(shuffled, dim, l, 0.0).unwrap();
        prop_assert_eq!(&base, &kde_at_points(&ens2, &k, &queries).unwrap());
        let at2 = kde_at_particles(&ens2, &k).unwrap();
        for (j, &i) in perm.iter().enumerate() {
            prop_assert_eq!(at2[j].to_bits(), at_particles[i].to_bits());
        }
    }

    #[test]
    fn far_particles_do_not_matter(n in 2usize..300, seed in any::<u64>(), jump in 0.0f64..1.0) {
        let l = 10.0;
        let mut pos = cloud(n, 1, l, seed);
        let k = MollifierKernel::bump(1.0, 1).unwrap().scaled(n, 0.25).unwrap();
        let r = k.support_radius();
        let q = [pos[0]];
        let before = kde_at_points(&ParticleEnsemble::new(pos.clone(), 1, l, 0.0).unwrap(), &k, &q).unwrap()[0];
        // Move particle 1 (if far) to another far spot.
        if torus_diff(pos[1], q[0], l).abs() > 2.0 * r {
            let target = densde::grid::wrap(q[0] + 2.0 * r + 1e-9 + jump * (l - 4.0 * r - 2e-9), l);
            pos[1] = target;
            let after = kde_at_points(&ParticleEnsemble::new(pos, 1, l, 0.0).unwrap(), &k, &q).unwrap()[0];
            prop_assert_eq!(before, after);
        }
    }

    #[test]
    fn scaling_identity(n in 1usize..300, seed in any::<u64>(), theta in 0.05f64..0.45) {
        let l = 12.0;
        let base = MollifierKernel::bump(1.0, 1).unwrap();
        let k = base.scaled(n, theta).unwrap();
        let s = (n as f64).powf(-theta);
        let pos = cloud(n, 1, l, seed);
        let queries = cloud(20, 1, l, seed ^ 7);
        let small: Vec<f64> = pos.iter().map(|x| x * s).collect();
        let small_q: Vec<f64> = queries.iter().map(|x| x * s).collect();
        let got = kde_at_points(&ParticleEnsemble::new(small, 1, l * s, 0.0).unwrap(), &k, &small_q).unwrap();
        for (g, q) in got.iter().zip(&queries) {
            let want = brute(&pos, 1, l, &base, &[*q]) / s;
            prop_assert!((g - want).abs() <= 1e-11 * want.abs().max(1.0));
        }
    }
}
