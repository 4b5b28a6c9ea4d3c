//! Random cohorts and straight-line reference computations shared by the
//! integration tests. Nothing here calls the library's quantile or loss code.

#![allow(dead_code)]

use optithresh_core::{Cohort, Domain, Histogram};
use rand::Rng;

/// `n` histograms on `[0, j + 1]` with unit cutoffs `1..=j`. Each bin is
/// empty with probability `zero_prob`.
pub fn random_histograms<R: Rng>(rng: &mut R, n: usize, j: usize, zero_prob: f64) -> Vec<Histogram> {
    let domain = Domain::new(0.0, (j + 1) as f64).unwrap();
    let cutoffs: Vec<f64> = (1..=j).map(|k| k as f64).collect();
    (0..n)
        .map(|_| {
            let mut w: Vec<f64> = (0..=j)
                .map(|_| {
                    if rng.random::<f64>() < zero_prob {
                        0.0
                    } else {
                        rng.random_range(0.05..1.0)
                    }
                })
                .collect();
            if w.iter().all(|&x| x == 0.0) {
                w[rng.random_range(0..=j)] = 1.0;
            }
            Histogram::new(domain, cutoffs.clone(), normalize(&w), None).unwrap()
        })
        .collect()
}

pub fn random_cohort<R: Rng>(rng: &mut R, n: usize, j: usize, zero_prob: f64) -> Cohort {
    Cohort::from_histograms(random_histograms(rng, n, j, zero_prob)).unwrap()
}

pub fn normalize(w: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    let mut out: Vec<f64> = w.iter().map(|x| x / s).collect();
    // push the rounding residue into the largest entry
    let r = 1.0 - out.iter().sum::<f64>();
    let big = (0..out.len())
        .max_by(|&a, &b| out[a].total_cmp(&out[b]))
        .unwrap();
    out[big] += r;
    out
}

/// Left-continuous quantile of a density that is constant inside each bin.
/// Bins with zero mass are never entered for `u` in `(0, 1]`.
pub fn bin_quantile(edges: &[f64], masses: &[f64], u: f64) -> f64 {
    let mut cum = 0.0;
    let mut last = 0;
    for (k, &w) in masses.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        last = k;
        if u <= cum + w {
            let frac = ((u - cum) / w).clamp(0.0, 1.0);
            return edges[k] + frac * (edges[k + 1] - edges[k]);
        }
        cum += w;
    }
    edges[last + 1]
}

pub fn bin_grid(edges: &[f64], masses: &[f64], m: usize) -> Vec<f64> {
    (1..=m)
        .map(|k| bin_quantile(edges, masses, k as f64 / (m + 1) as f64))
        .collect()
}

/// Bin masses after merging the bins of `h` at the thresholds `t`, for `t`
/// drawn from the cutoffs.
pub fn merged(h: &Histogram, t: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = h.edges();
    let mut edges = vec![d[0]];
    edges.extend_from_slice(t);
    edges.push(d[d.len() - 1]);
    let mut masses = vec![0.0; t.len() + 1];
    for (k, &w) in h.masses().iter().enumerate() {
        let left = d[k];
        let slot = t.iter().filter(|&&x| x <= left).count();
        masses[slot] += w;
    }
    (edges, masses)
}

pub fn sq_sum(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// L1 by hand for histograms with no empty bins.
pub fn l1_reference(hs: &[Histogram], t: &[f64], m: usize) -> f64 {
    let mut total = 0.0;
    for h in hs {
        let base = bin_grid(h.edges(), h.masses(), m);
        let (e, w) = merged(h, t);
        let lin = bin_grid(&e, &w, m);
        total += sq_sum(&base, &lin) / (m + 1) as f64;
    }
    total / hs.len() as f64
}

/// L2 by a double loop over ordered pairs, for histograms with no empty bins.
pub fn l2_reference(hs: &[Histogram], t: &[f64], m: usize) -> f64 {
    let base: Vec<Vec<f64>> = hs.iter().map(|h| bin_grid(h.edges(), h.masses(), m)).collect();
    let lin: Vec<Vec<f64>> = hs
        .iter()
        .map(|h| {
            let (e, w) = merged(h, t);
            bin_grid(&e, &w, m)
        })
        .collect();
    let n = hs.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d0 = (sq_sum(&base[i], &base[j]) / (m + 1) as f64).sqrt();
            let d1 = (sq_sum(&lin[i], &lin[j]) / (m + 1) as f64).sqrt();
            total += (d0 - d1) * (d0 - d1);
        }
    }
    total / (n * (n - 1)) as f64
}

pub fn bc_reference(x: &[f64], y: &[f64]) -> f64 {
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum();
    let den: f64 = x.iter().zip(y).map(|(a, b)| a + b).sum();
    num / den
}

pub fn l2_bc_reference(hs: &[Histogram], t: &[f64]) -> f64 {
    let coarse: Vec<Vec<f64>> = hs.iter().map(|h| merged(h, t).1).collect();
    let n = hs.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d0 = bc_reference(hs[i].masses(), hs[j].masses());
            let d1 = bc_reference(&coarse[i], &coarse[j]);
            total += (d0 - d1) * (d0 - d1);
        }
    }
    total / (n * (n - 1)) as f64
}

/// All size-`k` subsets of `0..j` in lexicographic order, by recursion.
pub fn subsets(j: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, j: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for x in start..j {
            cur.push(x);
            go(x + 1, j, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, j, k, &mut Vec::new(), &mut out);
    out
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}
