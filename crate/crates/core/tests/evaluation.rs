use optithresh_core::evaluation::{
    compare_thresholds, comparison_markdown, fit_univariate_logistic, range_labels, tir_summary,
    NamedThresholds,
};
use optithresh_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn nll(x: &[f64], y: &[bool], b0: f64, b1: f64) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let p = 1.0 / (1.0 + (-(b0 + b1 * xi)).exp());
            -if yi { p.ln() } else { (1.0 - p).ln() }
        })
        .sum()
}

#[test]
fn tir_matches_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let d = Domain::cgm();
    let samples: Vec<EmpiricalSample> = (0..15)
        .map(|_| {
            let n = rng.random_range(1..300);
            let v = (0..n).map(|_| rng.random_range(40..=400) as f64).collect();
            EmpiricalSample::new(d, v, None).unwrap()
        })
        .collect();
    let c = Cohort::from_samples(samples.clone()).unwrap();
    let t = [54.0, 70.0, 181.0, 251.0];
    let tir = tir_summary(&c, &ThresholdSet::new(t.to_vec()).unwrap()).unwrap();
    assert_eq!(tir.range_labels, ["<54", "54–69", "70–180", "181–250", "≥251"]);
    for (s, got) in samples.iter().zip(&tir.per_subject) {
        let n = s.len() as f64;
        let mut edges = vec![f64::NEG_INFINITY];
        edges.extend(t);
        edges.push(f64::INFINITY);
        for k in 0..=t.len() {
            let count = s
                .values()
                .iter()
                .filter(|&&v| v >= edges[k] && v < edges[k + 1])
                .count();
            assert_eq!(got[k], count as f64 / n);
        }
    }
}

#[test]
fn labels_for_non_integer_thresholds() {
    assert_eq!(range_labels(&[70.5, 180.0]), ["<70.5", "[70.5, 180)", "≥180"]);
    assert_eq!(range_labels(&[]), ["all"]);
}

#[test]
fn logistic_fit_beats_a_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..5 {
        let n = 80;
        let y: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
        let x: Vec<f64> = y
            .iter()
            .map(|&yi| {
                let c: f64 = if yi { 0.55 } else { 0.4 };
                (c + rng.random_range(-0.3..0.3)).clamp(0.0, 1.0)
            })
            .collect();
        let fit = fit_univariate_logistic(&x, &y).unwrap();
        let fitted = nll(&x, &y, fit.intercept, fit.slope);
        let mut best = f64::INFINITY;
        for i in 0..=400 {
            for j in 0..=400 {
                let b0 = -10.0 + 20.0 * i as f64 / 400.0;
                let b1 = -30.0 + 60.0 * j as f64 / 400.0;
                best = best.min(nll(&x, &y, b0, b1));
            }
        }
        assert!(fitted <= best + 1e-9, "{fitted} vs grid {best}");
        let hits = x.iter().zip(&y).filter(|(&xi, &yi)| fit.predict(xi) == yi).count();
        assert_eq!(fit.accuracy, hits as f64 / n as f64);
        let b = fit.decision_boundary.unwrap();
        assert!((fit.intercept + fit.slope * b).abs() < 1e-9);
    }
}

#[test]
fn separable_data_is_classified_perfectly() {
    let x = [0.05, 0.1, 0.2, 0.25, 0.6, 0.7, 0.9];
    let y = [false, false, false, false, true, true, true];
    let fit = fit_univariate_logistic(&x, &y).unwrap();
    assert_eq!(fit.accuracy, 1.0);
    let b = fit.decision_boundary.unwrap();
    assert!(b > 0.25 && b < 0.6, "{b}");
    assert!(fit.slope <= evaluation::SLOPE_CAP);
}

#[test]
fn logistic_input_checks() {
    assert!(fit_univariate_logistic(&[0.1, 0.2], &[true, true]).is_err());
    assert!(fit_univariate_logistic(&[0.1, 1.2], &[true, false]).is_err());
    assert!(fit_univariate_logistic(&[0.1], &[true, false]).is_err());
    assert!(fit_univariate_logistic(&[], &[]).is_err());
}

fn group(rng: &mut ChaCha8Rng, n: usize, sd: f64) -> Cohort {
    let d = Domain::cgm();
    let s = (0..n)
        .map(|_| {
            let centre = rng.random_range(120.0..150.0);
            let v = (0..500)
                .map(|_| {
                    let z: f64 = rng.sample(rand_distr::StandardNormal);
                    (centre + sd * z).round().clamp(40.0, 400.0)
                })
                .collect();
            EmpiricalSample::new(d, v, None).unwrap()
        })
        .collect();
    Cohort::from_samples(s).unwrap()
}

#[test]
fn comparison_report_is_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let a = group(&mut rng, 12, 10.0);
    let b = group(&mut rng, 12, 60.0);
    let sets = [
        NamedThresholds {
            name: "consensus".into(),
            thresholds: ThresholdSet::new(vec![70.0, 181.0]).unwrap(),
        },
        NamedThresholds {
            name: "narrow".into(),
            thresholds: ThresholdSet::new(vec![110.0, 160.0]).unwrap(),
        },
    ];
    let r = compare_thresholds(&a, &b, &sets, 0, 100).unwrap();
    assert_eq!((r.n_group_a, r.n_group_b), (12, 12));
    assert_eq!(r.sets[0].l1_reduction_pct, 0.0);
    let combined = a.concat(&b).unwrap();
    for e in &r.sets {
        let l2 = loss_l2(&combined, &e.thresholds, &LossSpec::l2().with_grid_size(100).unwrap()).unwrap();
        assert!((e.l2 - l2).abs() <= 1e-12 * l2);
        let want = 100.0 * (r.sets[0].l2 - e.l2) / r.sets[0].l2;
        assert!((e.l2_reduction_pct - want).abs() < 1e-9);
    }
    // the wide group spends far more time outside 110-159
    let mid = r.sets[1].ranges[1].classifier.as_ref().unwrap();
    assert!(mid.slope < 0.0);
    assert!(mid.accuracy >= 0.9);
    let md = comparison_markdown(&r);
    assert!(md.contains("consensus Ranges"));
    // header, separator, three ranges, blank line, one summary line per set
    assert_eq!(md.lines().count(), 2 + 3 + 1 + 2);
}

#[test]
fn symmetric_data_puts_the_boundary_at_one_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for _ in 0..60 {
        // mirrored pairs: a point and its reflection about 0.5 with the opposite label
        let a: f64 = rng.random_range(0.0..0.3);
        let yi = rng.random_bool(0.7);
        x.extend([0.5 + a, 0.5 - a]);
        y.extend([yi, !yi]);
    }
    let fit = fit_univariate_logistic(&x, &y).unwrap();
    let b = fit.decision_boundary.unwrap();
    assert!((b - 0.5).abs() <= 0.05, "{b}");

    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=400 {
        let bound = 0.3 + 0.4 * i as f64 / 400.0;
        for j in 1..=200 {
            let s = 0.1 * j as f64;
            let v = nll(&x, &y, -s * bound, s);
            if v < best.0 {
                best = (v, bound);
            }
        }
    }
    assert!((best.1 - b).abs() <= 0.002, "grid {} vs fit {b}", best.1);
}

#[test]
fn uninformative_predictor_scores_the_prevalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let n = 2000;
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let y: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
    let fit = fit_univariate_logistic(&x, &y).unwrap();
    let prevalence = y.iter().filter(|&&v| v).count() as f64 / n as f64;
    let majority = prevalence.max(1.0 - prevalence);
    assert!((fit.accuracy - majority).abs() <= 0.05, "{} vs {majority}", fit.accuracy);
}

#[test]
fn identical_groups_score_near_the_baseline() {
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    let a = group(&mut rng, 20, 30.0);
    let sets = [NamedThresholds {
        name: "consensus".into(),
        thresholds: ThresholdSet::new(vec![70.0, 181.0]).unwrap(),
    }];
    let r = compare_thresholds(&a, &a, &sets, 0, 100).unwrap();
    for range in &r.sets[0].ranges {
        if let Some(c) = &range.classifier {
            assert!((c.accuracy - 0.5).abs() <= 0.05, "{}: {}", range.label, c.accuracy);
        }
    }
}

#[test]
fn wide_group_owns_the_upper_tail() {
    // every wide subject has quantiles above every narrow subject's in the upper tail
    let spec = simulation::TwoPopulationSpec::default();
    let (narrow, wide) = simulation::generate_two_populations(&spec, 3).unwrap();
    assert_eq!((narrow.len(), wide.len()), (spec.n_per_group, spec.n_per_group));
    let share_above = |c: &Cohort, t: f64| -> Vec<f64> {
        c.members()
            .iter()
            .map(|m| {
                let s = m.as_sample().unwrap();
                s.values().iter().filter(|&&v| v >= t).count() as f64 / s.len() as f64
            })
            .collect()
    };
    let hi_n = share_above(&narrow, 181.0);
    let hi_w = share_above(&wide, 181.0);
    let max_n = hi_n.iter().cloned().fold(0.0, f64::max);
    let min_w = hi_w.iter().cloned().fold(1.0, f64::min);
    assert!(min_w > max_n, "{min_w} vs {max_n}");
    let sets = [NamedThresholds {
        name: "upper".into(),
        thresholds: ThresholdSet::new(vec![181.0]).unwrap(),
    }];
    let r = compare_thresholds(&narrow, &wide, &sets, 0, 100).unwrap();
    let top = r.sets[0].ranges[1].classifier.as_ref().unwrap();
    assert_eq!(top.accuracy, 1.0);
}
