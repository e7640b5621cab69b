//! Independent reference implementations and random fixtures shared by the
//! integration tests. Nothing here calls into the code paths it checks.

#![allow(dead_code)]

use dtfusion::fusion::{DecisionProfile, ProbMatrix, RowSumPolicy};
use dtfusion::MeasureKind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Row-stochastic rows; sometimes sparse or one-hot to hit edge cells.
pub fn stochastic_rows(rng: &mut ChaCha8Rng, k: usize, c: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|_| {
            let style = rng.random_range(0..6);
            if style == 0 {
                let hot = rng.random_range(0..c);
                return (0..c).map(|i| if i == hot { 1.0 } else { 0.0 }).collect();
            }
            let mut w: Vec<f64> = (0..c)
                .map(|_| {
                    if style == 1 && rng.random_bool(0.5) {
                        0.0
                    } else {
                        rng.random::<f64>().powi(if style == 2 { 4 } else { 1 })
                    }
                })
                .collect();
            if w.iter().all(|&x| x == 0.0) {
                w[0] = 1.0;
            }
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= s);
            w
        })
        .collect()
}

pub fn profile(rng: &mut ChaCha8Rng, k: usize, c: usize) -> DecisionProfile {
    DecisionProfile::from_rows(stochastic_rows(rng, k, c), RowSumPolicy::Strict).unwrap()
}

pub fn matrix(rng: &mut ChaCha8Rng, k: usize, c: usize) -> ProbMatrix {
    ProbMatrix::from_rows(&stochastic_rows(rng, k, c)).unwrap()
}

fn cell(m: &[Vec<f64>], k: usize, i: usize) -> f64 {
    m[k][i]
}

/// Textbook double-loop evaluation of each measure.
pub fn naive_measure(kind: MeasureKind, dt: &[Vec<f64>], dp: &[Vec<f64>]) -> f64 {
    let kk = dt.len();
    let cc = dt[0].len();
    let mut sum_min = 0.0;
    let mut sum_max = 0.0;
    let mut sum_dt = 0.0;
    let mut sup_abs: f64 = 0.0;
    let mut inf_max_compl: f64 = f64::INFINITY;
    let mut sup_min: f64 = f64::NEG_INFINITY;
    let mut sum_sq = 0.0;
    for k in 0..kk {
        for i in 0..cc {
            let a = cell(dt, k, i);
            let b = cell(dp, k, i);
            sum_min += if a < b { a } else { b };
            sum_max += if a > b { a } else { b };
            sum_dt += a;
            let d = if a > b { a - b } else { b - a };
            if d > sup_abs {
                sup_abs = d;
            }
            let comp = 1.0 - a;
            let mc = if comp > b { comp } else { b };
            if mc < inf_max_compl {
                inf_max_compl = mc;
            }
            let mn = if a < b { a } else { b };
            if mn > sup_min {
                sup_min = mn;
            }
            sum_sq += (a - b) * (a - b);
        }
    }
    match kind {
        MeasureKind::S1 => sum_min / sum_max,
        MeasureKind::S2 => 1.0 - sup_abs,
        MeasureKind::I1 => sum_min / sum_dt,
        MeasureKind::I2 => inf_max_compl,
        MeasureKind::C => sup_min,
        MeasureKind::N => 1.0 - sum_sq / (kk * cc) as f64,
    }
}

/// Per-class mean by collecting members first, then summing (two passes).
pub fn mean_templates(profiles: &[Vec<Vec<f64>>], labels: &[usize], c: usize) -> Vec<Vec<Vec<f64>>> {
    (0..c)
        .map(|class| {
            let members: Vec<&Vec<Vec<f64>>> = profiles
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == class)
                .map(|(p, _)| p)
                .collect();
            let k = members[0].len();
            let cols = members[0][0].len();
            let mut out = vec![vec![0.0; cols]; k];
            for row in 0..k {
                for col in 0..cols {
                    let total: f64 = members.iter().map(|m| m[row][col]).sum();
                    out[row][col] = total / members.len() as f64;
                }
            }
            out
        })
        .collect()
}

/// Majority vote; ties by larger mean confidence, then lowest label.
/// Each entry is (label, confidence).
pub fn brute_vote(votes: &[(usize, f64)]) -> usize {
    let mut labels: Vec<usize> = votes.iter().map(|v| v.0).collect();
    labels.sort_unstable();
    labels.dedup();
    let count = |l: usize| votes.iter().filter(|v| v.0 == l).count();
    let top = labels.iter().map(|&l| count(l)).max().unwrap();
    let tied: Vec<usize> = labels.into_iter().filter(|&l| count(l) == top).collect();
    let mean = |l: usize| {
        let cs: Vec<f64> = votes.iter().filter(|v| v.0 == l).map(|v| v.1).collect();
        cs.iter().sum::<f64>() / cs.len() as f64
    };
    let mut best = tied[0];
    for &l in &tied[1..] {
        if mean(l) > mean(best) {
            best = l;
        }
    }
    best
}

/// Lowest-index argmax by explicit comparison.
pub fn first_argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for i in 0..xs.len() {
        if xs[i] > xs[best] {
            best = i;
        }
    }
    best
}

/// (samples, fused-correct) per stratum: both wrong, first wrong, second wrong, both fine.
pub fn brute_stratify(fused: &[usize], a: &[usize], b: &[usize], truth: &[usize]) -> [(u64, u64); 4] {
    let mut out = [(0u64, 0u64); 4];
    for i in 0..truth.len() {
        let slot = match (a[i] == truth[i], b[i] == truth[i]) {
            (false, false) => 0,
            (false, true) => 1,
            (true, false) => 2,
            (true, true) => 3,
        };
        out[slot].0 += 1;
        if fused[i] == truth[i] {
            out[slot].1 += 1;
        }
    }
    out
}

pub fn permute_cols(m: &[Vec<f64>], perm: &[usize]) -> Vec<Vec<f64>> {
    // column j moves to perm[j]
    m.iter()
        .map(|row| {
            let mut out = vec![0.0; row.len()];
            for (j, &v) in row.iter().enumerate() {
                out[perm[j]] = v;
            }
            out
        })
        .collect()
}

pub fn permute_rows(m: &[Vec<f64>], perm: &[usize]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new(); m.len()];
    for (j, row) in m.iter().enumerate() {
        out[perm[j]] = row.clone();
    }
    out
}

pub fn random_perm(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        p.swap(i, j);
    }
    p
}
