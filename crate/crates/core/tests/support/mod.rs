//! Independent reference computations shared by the integration tests.
//! Nothing here calls the crate's own likelihood or optimizer code.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn chisq1_cdf(x: f64) -> f64 {
    ChiSquared::new(1.0).unwrap().cdf(x)
}

pub fn chisq1_quantile(p: f64) -> f64 {
    ChiSquared::new(1.0).unwrap().inverse_cdf(p)
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / m).abs().max(((i + 1) as f64 / m - f).abs())
        })
        .fold(0.0, f64::max)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Penalized log-likelihood of the intercept-only model
/// (q = 1, dz = 1), written out directly from the mixture density.
/// `theta = (alpha, beta, lambda, ln sigma2, gamma)`.
pub fn tiny_objective(y: &[f64], d: &[f64], theta: &[f64; 5], pen: f64) -> f64 {
    let [alpha, beta, lambda, ls2, gamma] = *theta;
    let s2 = ls2.exp();
    let p = sigmoid(gamma);
    let norm = |r: f64| (-0.5 * r * r / s2).exp() / (2.0 * std::f64::consts::PI * s2).sqrt();
    let mut ll = 0.0;
    for (&yi, &di) in y.iter().zip(d) {
        let r0 = yi - alpha - di * beta;
        let r1 = r0 - di * lambda;
        let dens = p * norm(r1) + (1.0 - p) * norm(r0);
        ll += if dens > 0.0 { dens.ln() } else { f64::NEG_INFINITY };
    }
    ll - pen * gamma.abs()
}

/// Nelder-Mead maximization with standard coefficients.
pub fn nelder_mead_max<const K: usize>(
    f: impl Fn(&[f64; K]) -> f64,
    start: [f64; K],
    step: [f64; K],
    iters: usize,
) -> ([f64; K], f64) {
    let mut simplex: Vec<([f64; K], f64)> = Vec::with_capacity(K + 1);
    simplex.push((start, f(&start)));
    for j in 0..K {
        let mut p = start;
        p[j] += step[j];
        simplex.push((p, f(&p)));
    }
    let combine = |a: &[f64; K], b: &[f64; K], t: f64| {
        let mut out = [0.0; K];
        for j in 0..K {
            out[j] = a[j] + t * (b[j] - a[j]);
        }
        out
    };
    for _ in 0..iters {
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        let mut centroid = [0.0; K];
        for (p, _) in &simplex[..K] {
            for j in 0..K {
                centroid[j] += p[j] / K as f64;
            }
        }
        let worst = simplex[K];
        let refl = combine(&centroid, &worst.0, -1.0);
        let fr = f(&refl);
        if fr > simplex[0].1 {
            let exp = combine(&centroid, &worst.0, -2.0);
            let fe = f(&exp);
            simplex[K] = if fe > fr { (exp, fe) } else { (refl, fr) };
        } else if fr > simplex[K - 1].1 {
            simplex[K] = (refl, fr);
        } else {
            let con = combine(&centroid, &worst.0, 0.5);
            let fc = f(&con);
            if fc > worst.1 {
                simplex[K] = (con, fc);
            } else {
                let best = simplex[0].0;
                for s in simplex.iter_mut().skip(1) {
                    s.0 = combine(&best, &s.0, 0.5);
                    s.1 = f(&s.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
    simplex[0]
}

/// Grid search over all five parameters, polished by Nelder-Mead from the
/// best few grid points. Returns the best objective value found.
pub fn tiny_oracle(y: &[f64], d: &[f64], pen: f64, lambda_max: f64) -> f64 {
    let n = y.len() as f64;
    let ybar = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - ybar).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let lin = |lo: f64, hi: f64, k: usize| (0..k).map(move |i| lo + (hi - lo) * i as f64 / (k - 1) as f64);
    let bounded = |t: &[f64; 5]| {
        if t[2] < 0.0 || t[2] > lambda_max || t[3] < (1e-8f64).ln() {
            f64::NEG_INFINITY
        } else {
            tiny_objective(y, d, t, pen)
        }
    };
    let mut grid: Vec<([f64; 5], f64)> = Vec::new();
    for a in lin(ybar - 2.0 * sd, ybar + 2.0 * sd, 9) {
        for b in lin(-2.5 * sd, 2.5 * sd, 9) {
            for l in lin(0.0, (3.0 * sd).min(lambda_max), 9) {
                for ls2 in lin((0.05 * sd * sd).ln(), (1.5 * sd * sd).ln(), 7) {
                    for g in lin(-3.0, 3.0, 9) {
                        let t = [a, b, l, ls2, g];
                        grid.push((t, bounded(&t)));
                    }
                }
            }
        }
    }
    grid.sort_by(|a, b| b.1.total_cmp(&a.1));
    let step = [0.3 * sd, 0.3 * sd, 0.3 * sd, 0.3, 0.5];
    let mut best = grid[0].1;
    for (t, _) in grid.iter().take(4) {
        let mut cur = *t;
        // restart a few times so the simplex does not stall
        for _ in 0..4 {
            let (p, v) = nelder_mead_max(bounded, cur, step, 1500);
            cur = p;
            best = best.max(v);
        }
    }
    best
}

/// `n` rows of the intercept-only model, as plain vectors.
pub fn tiny_instance(seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(20..=50);
    let lift = if seed % 2 == 0 { 0.0 } else { rng.gen_range(1.0..3.0) };
    let mut y = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    for i in 0..n {
        let di = if i % 2 == 0 { 1.0 } else { 0.0 };
        let delta = rng.gen_bool(0.5);
        let eps: f64 = rng.sample(rand_distr::StandardNormal);
        y.push(0.5 + di * (1.0 + if delta { lift } else { 0.0 }) + eps);
        d.push(di);
    }
    (y, d)
}

/// Independent subgradient check for the weighted L1 logistic problem.
pub fn kkt_gap(z: &[f64], dz: usize, w: &[f64], gamma: &[f64], pen: f64) -> f64 {
    let n = w.len();
    let mut gap: f64 = 0.0;
    for j in 0..dz {
        let mut g = 0.0;
        for i in 0..n {
            let row = &z[i * dz..(i + 1) * dz];
            let eta: f64 = row.iter().zip(gamma).map(|(a, b)| a * b).sum();
            g += row[j] * (w[i] - sigmoid(eta));
        }
        let v = if gamma[j] == 0.0 { (g.abs() - pen).max(0.0) } else { (g - pen * gamma[j].signum()).abs() };
        gap = gap.max(v);
    }
    gap
}
