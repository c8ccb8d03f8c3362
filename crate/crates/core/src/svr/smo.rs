//! Pairwise coordinate solver for the ε-insensitive SVR dual.
//!
//! The `2n` dual variables are `β = (α, α*)` with signs `y = (+1…, −1…)`.
//! The solver minimizes `½ βᵀQβ + pᵀβ` subject to `yᵀβ = 0`,
//! `0 ≤ β ≤ C`, where `Q_st = y_s y_t K(s mod n, t mod n)` and
//! `p = (ε − z, ε + z)`. Each iteration picks the maximal KKT violator `i`
//! and the partner `j` with the largest second-order decrease, updates the
//! pair analytically and stops once the violation gap falls below the
//! tolerance.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::kernel::KernelColumns;
use super::SvrHyper;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone)]
pub(crate) struct DualSolution {
    /// `α_i − α*_i` per training row.
    pub coef: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
}

pub(crate) fn solve<X: AsRef<[f64]> + Sync>(xs: &[X], z: &[f64], hyper: &SvrHyper, seed: u64) -> DualSolution {
    let n = xs.len();
    let l = 2 * n;
    let c = hyper.c;
    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let p: Vec<f64> = (0..l)
        .map(|t| if t < n { hyper.epsilon - z[t] } else { hyper.epsilon + z[t - n] })
        .collect();
    let mut beta = vec![0.0; l];
    let mut grad = p.clone();
    let mut cols = KernelColumns::new(xs, hyper.kernel_scale);

    // Seeded rank: decides which index wins exact ties.
    let mut order: Vec<usize> = (0..l).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut rank = vec![0usize; l];
    for (r, &t) in order.iter().enumerate() {
        rank[t] = r;
    }
    let wins = |v: f64, t: usize, best: f64, best_t: usize| v > best || (v == best && best_t != usize::MAX && rank[t] < rank[best_t]);

    let max_iter = hyper.max_passes.saturating_mul(n.max(1));
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        // i: maximal violator in I_up; gmax2 over I_low.
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        let mut gmax2 = f64::NEG_INFINITY;
        for t in 0..n {
            let (b, g) = (beta[t], grad[t]);
            if b < c && wins(-g, t, gmax, i) {
                gmax = -g;
                i = t;
            }
            if b > 0.0 && g > gmax2 {
                gmax2 = g;
            }
        }
        for t in n..l {
            let (b, g) = (beta[t], grad[t]);
            if b > 0.0 && wins(g, t, gmax, i) {
                gmax = g;
                i = t;
            }
            if b < c && -g > gmax2 {
                gmax2 = -g;
            }
        }
        if i == usize::MAX || gmax + gmax2 < hyper.tolerance {
            converged = true;
            break;
        }

        cols.load(i % n, None);
        let yi = sign(i);
        let mut j = usize::MAX;
        let mut best = f64::NEG_INFINITY;
        {
            let ki = cols.column(i % n);
            // maximize b²/a over I_low with b = gmax + y_t G_t > 0
            // (K_ii = K_tt = 1 for the Gaussian kernel)
            for t in 0..l {
                let (in_low, yg) = if t < n { (beta[t] > 0.0, grad[t]) } else { (beta[t] < c, -grad[t]) };
                let b = gmax + yg;
                if !in_low || b <= 0.0 {
                    continue;
                }
                let a = (2.0 - 2.0 * ki[t % n]).max(TAU);
                let gain = b * b / a;
                if wins(gain, t, best, j) {
                    best = gain;
                    j = t;
                }
            }
        }
        if j == usize::MAX {
            converged = true;
            break;
        }
        cols.load(j % n, Some(i % n));
        let yj = sign(j);
        let kij = cols.column(i % n)[j % n];
        let q_ij = yi * yj * kij;
        let (old_i, old_j) = (beta[i], beta[j]);

        if yi != yj {
            let quad = (2.0 + 2.0 * q_ij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = beta[i] - beta[j];
            beta[i] += delta;
            beta[j] += delta;
            if diff > 0.0 {
                if beta[j] < 0.0 {
                    beta[j] = 0.0;
                    beta[i] = diff;
                }
            } else if beta[i] < 0.0 {
                beta[i] = 0.0;
                beta[j] = -diff;
            }
            if diff > 0.0 {
                if beta[i] > c {
                    beta[i] = c;
                    beta[j] = c - diff;
                }
            } else if beta[j] > c {
                beta[j] = c;
                beta[i] = c + diff;
            }
        } else {
            let quad = (2.0 - 2.0 * q_ij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = beta[i] + beta[j];
            beta[i] -= delta;
            beta[j] += delta;
            if sum > c {
                if beta[i] > c {
                    beta[i] = c;
                    beta[j] = sum - c;
                }
            } else if beta[j] < 0.0 {
                beta[j] = 0.0;
                beta[i] = sum;
            }
            if sum > c {
                if beta[j] > c {
                    beta[j] = c;
                    beta[i] = sum - c;
                }
            } else if beta[i] < 0.0 {
                beta[i] = 0.0;
                beta[j] = sum;
            }
        }

        let di = beta[i] - old_i;
        let dj = beta[j] - old_j;
        let ki = cols.column(i % n);
        let kj = cols.column(j % n);
        let (si, sj) = (yi * di, yj * dj);
        for t in 0..n {
            let upd = si * ki[t] + sj * kj[t];
            grad[t] += upd;
            grad[t + n] -= upd;
        }
        iterations += 1;
    }

    let rho = compute_rho(&beta, &grad, n, c);
    let objective = 0.5 * beta.iter().zip(grad.iter().zip(&p)).map(|(b, (g, p))| b * (g + p)).sum::<f64>();
    let coef = (0..n).map(|t| beta[t] - beta[t + n]).collect();
    DualSolution {
        coef,
        rho,
        iterations,
        converged,
        objective,
    }
}

/// Offset `ρ` (bias is `−ρ`): mean of `y·G` over free variables, or the
/// midpoint of the feasible interval when none is free.
fn compute_rho(beta: &[f64], grad: &[f64], n: usize, c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free = 0usize;
    let mut sum_free = 0.0;
    for t in 0..2 * n {
        let y = if t < n { 1.0 } else { -1.0 };
        let yg = y * grad[t];
        if beta[t] >= c {
            if y < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if beta[t] <= 0.0 {
            if y > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    if free > 0 {
        sum_free / free as f64
    } else {
        0.5 * (ub + lb)
    }
}
