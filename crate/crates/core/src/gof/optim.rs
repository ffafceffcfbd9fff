//! Box-constrained multi-start Nelder–Mead.
//!
//! The search runs in normalized coordinates `u ∈ [0,1]^d`; every trial
//! point is clamped to the box before evaluation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::family::ParamBox;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_iterations: usize,
    /// Stop once the simplex diameter falls below `tolerance · diam(Θ)`.
    pub tolerance: f64,
    /// Initial simplex edge in normalized coordinates.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_iterations: 5000, tolerance: 1e-8, initial_step: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub theta: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Starting points: the `5^d` lattice at cell midpoints for `d ≤ 3`, else
/// 125 points of a Latin hypercube with fixed permutations.
pub fn starting_lattice(dim: usize) -> Vec<Vec<f64>> {
    const LEVELS: usize = 5;
    let mid = |i: usize, m: usize| (i as f64 + 0.5) / m as f64;
    if dim <= 3 {
        let total = LEVELS.pow(dim as u32);
        return (0..total)
            .map(|mut idx| {
                (0..dim)
                    .map(|_| {
                        let l = idx % LEVELS;
                        idx /= LEVELS;
                        mid(l, LEVELS)
                    })
                    .collect()
            })
            .collect();
    }
    let m = LEVELS.pow(3);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1a71);
    let perms: Vec<Vec<usize>> = (0..dim)
        .map(|_| {
            let mut p: Vec<usize> = (0..m).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    (0..m).map(|i| perms.iter().map(|p| mid(p[i], m)).collect()).collect()
}

/// Single Nelder–Mead run from `start` (normalized coordinates).
pub fn nelder_mead<F>(f: &F, bounds: &ParamBox, start: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    let d = bounds.dim();
    let free: Vec<usize> = (0..d).filter(|&j| bounds.hi()[j] > bounds.lo()[j]).collect();
    let k = free.len();
    let embed = |v: &[f64]| {
        let mut u = start.to_vec();
        for (i, &j) in free.iter().enumerate() {
            u[j] = v[i];
        }
        bounds.point(&u)
    };
    let eval = |v: &[f64]| {
        let y = f(&embed(v));
        if y.is_nan() {
            f64::INFINITY
        } else {
            y
        }
    };
    if k == 0 {
        let theta = bounds.point(start);
        let value = f(&theta);
        return Minimum { theta, value, iterations: 0, converged: true };
    }
    let clamp = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x = x.clamp(0.0, 1.0));

    let widths: Vec<f64> = free.iter().map(|&j| bounds.hi()[j] - bounds.lo()[j]).collect();
    let box_diam = widths.iter().map(|w| w * w).sum::<f64>().sqrt();
    let diameter = |s: &[Vec<f64>]| {
        let mut best = 0.0f64;
        for a in 0..s.len() {
            for b in a + 1..s.len() {
                let d2: f64 = s[a].iter().zip(&s[b]).zip(&widths).map(|((x, y), w)| ((x - y) * w).powi(2)).sum();
                best = best.max(d2);
            }
        }
        best.sqrt()
    };

    let x0: Vec<f64> = free.iter().map(|&j| start[j].clamp(0.0, 1.0)).collect();
    let mut simplex = vec![x0.clone()];
    for i in 0..k {
        let mut v = x0.clone();
        v[i] = if v[i] + opts.initial_step <= 1.0 { v[i] + opts.initial_step } else { v[i] - opts.initial_step };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        let mut order: Vec<usize> = (0..=k).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        if diameter(&simplex) < opts.tolerance * box_diam {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..k).map(|j| simplex[..k].iter().map(|v| v[j]).sum::<f64>() / k as f64).collect();
        let along = |t: f64| {
            let mut v: Vec<f64> = centroid.iter().zip(&simplex[k]).map(|(c, w)| c + t * (c - w)).collect();
            clamp(&mut v);
            v
        };
        let xr = along(alpha);
        let fr = eval(&xr);
        if fr < values[0] {
            let xe = along(gamma);
            let fe = eval(&xe);
            if fe < fr {
                simplex[k] = xe;
                values[k] = fe;
            } else {
                simplex[k] = xr;
                values[k] = fr;
            }
            continue;
        }
        if fr < values[k - 1] {
            simplex[k] = xr;
            values[k] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[k] {
            let xc = along(rho * alpha);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(-rho);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < values[k].min(fr) {
            simplex[k] = xc;
            values[k] = fc;
            continue;
        }
        for i in 1..=k {
            let v: Vec<f64> = simplex[0].iter().zip(&simplex[i]).map(|(b, x)| b + sigma * (x - b)).collect();
            values[i] = eval(&v);
            simplex[i] = v;
        }
    }
    let best = (0..=k).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    Minimum { theta: embed(&simplex[best]), value: values[best], iterations, converged }
}

/// Best of Nelder–Mead runs from every lattice point; ties go to the
/// earlier start.
pub fn minimize<F>(f: &F, bounds: &ParamBox, opts: &NelderMeadOptions) -> Vec<Minimum>
where
    F: Fn(&[f64]) -> f64 + Sync + ?Sized,
{
    let starts = starting_lattice(bounds.dim());
    starts.par_iter().map(|s| nelder_mead(f, bounds, s, opts)).collect()
}

/// Index of the best run.
pub fn best_index(runs: &[Minimum]) -> usize {
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.value < runs[best].value {
            best = i;
        }
    }
    best
}
