mod common;

use common::*;
use optithresh_core::*;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_subset<R: Rng>(rng: &mut R, cutoffs: &[f64], k: usize) -> Vec<f64> {
    let mut idx = sample(rng, cutoffs.len(), k).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| cutoffs[i]).collect()
}

#[test]
fn base_grid_matches_bin_quantile() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for h in random_histograms(&mut rng, 30, 9, 0.3) {
        let got = quantile_grid(&h, 57).unwrap();
        let want = bin_grid(h.edges(), h.masses(), 57);
        for (a, b) in got.values().iter().zip(&want) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }
}

#[test]
fn l1_matches_hand_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let hs = random_histograms(&mut rng, 7, 12, 0.0);
        let c = Cohort::from_histograms(hs.clone()).unwrap();
        let k = rng.random_range(0..=5);
        let t = random_subset(&mut rng, c.shared_cutoffs().unwrap(), k);
        let spec = LossSpec::l1().with_grid_size(80).unwrap();
        let got = loss_l1(&c, &ThresholdSet::new(t.clone()).unwrap(), &spec).unwrap();
        let want = l1_reference(&hs, &t, 80);
        assert!(close(got, want, 1e-9), "{got} vs {want}");
    }
}

#[test]
fn l2_matches_pairwise_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..20 {
        let hs = random_histograms(&mut rng, 8, 12, 0.0);
        let c = Cohort::from_histograms(hs.clone()).unwrap();
        let k = rng.random_range(1..=5);
        let t = random_subset(&mut rng, c.shared_cutoffs().unwrap(), k);
        let spec = LossSpec::l2().with_grid_size(64).unwrap();
        let got = loss_l2(&c, &ThresholdSet::new(t.clone()).unwrap(), &spec).unwrap();
        let want = l2_reference(&hs, &t, 64);
        assert!(close(got, want, 1e-9), "{got} vs {want}");
    }
}

#[test]
fn bray_curtis_loss_matches_pairwise_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..20 {
        let hs = random_histograms(&mut rng, 9, 12, 0.25);
        let c = Cohort::from_histograms(hs.clone()).unwrap();
        let k = rng.random_range(1..=6);
        let t = random_subset(&mut rng, c.shared_cutoffs().unwrap(), k);
        let got = loss_l2_braycurtis(&c, &ThresholdSet::new(t.clone()).unwrap()).unwrap();
        let want = l2_bc_reference(&hs, &t);
        assert!(close(got, want, 1e-12) || (got - want).abs() < 1e-15, "{got} vs {want}");
    }
}

#[test]
fn bray_curtis_of_disjoint_and_equal() {
    assert_eq!(bray_curtis(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
    assert_eq!(bray_curtis(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
    assert!(bray_curtis(&[0.3], &[0.3, 0.7]).is_err());
}

#[test]
fn cached_pairwise_is_transparent() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut c = random_cohort(&mut rng, 12, 10, 0.2);
    let t = ThresholdSet::new(vec![3.0, 7.0]).unwrap();
    let before = loss_l2(&c, &t, &LossSpec::l2()).unwrap();
    c.cache_pairwise();
    assert!(c.pairwise().is_some());
    let after = loss_l2(&c, &t, &LossSpec::l2()).unwrap();
    assert_eq!(before.to_bits(), after.to_bits());
    c.clear_pairwise();
    assert_eq!(loss_l2(&c, &t, &LossSpec::l2()).unwrap().to_bits(), before.to_bits());
}

#[test]
fn empirical_sample_grid_is_order_statistics() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let d = Domain::new(0.0, 100.0).unwrap();
    for n in [1usize, 2, 7, 200, 1000] {
        let vals: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..100.0)).collect();
        let s = EmpiricalSample::new(d, vals.clone(), None).unwrap();
        let mut sorted = vals;
        sorted.sort_by(f64::total_cmp);
        let m = 200;
        let g = quantile_grid(&s, m).unwrap();
        for (k, &q) in g.values().iter().enumerate() {
            // smallest order statistic x_(r) with r / n >= u_k, compared in integers
            let r = (1..=n).find(|&r| r * (m + 1) >= (k + 1) * n).unwrap();
            assert_eq!(q, sorted[r - 1], "n={n} k={k}");
        }
    }
}
