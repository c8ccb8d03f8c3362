use std::collections::{HashMap, VecDeque};

use crate::exec;

/// `exp(-‖x − y‖² / scale²)`.
pub fn gaussian_kernel(x: &[f64], y: &[f64], scale: f64) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-d2 / (scale * scale)).exp()
}

/// Dense `n × n` Gram matrix, row-major. Rows are computed in parallel.
pub fn gram_matrix<X: AsRef<[f64]> + Sync>(xs: &[X], scale: f64) -> Vec<f64> {
    let n = xs.len();
    let mut k = vec![0.0; n * n];
    if n == 0 {
        return k;
    }
    exec::fill_rows(&mut k, n, |i, row| {
        let xi = xs[i].as_ref();
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = gaussian_kernel(xi, xs[j].as_ref(), scale);
        }
    });
    k
}

/// Training sets up to this size get a precomputed Gram matrix; larger ones
/// compute kernel columns on demand behind a bounded cache.
pub const DENSE_GRAM_MAX_ROWS: usize = 4096;
const COLUMN_CACHE_BYTES: usize = 1 << 30;

/// Kernel columns `K[:, r]` over a fixed training set.
pub(crate) enum KernelColumns<'a, X> {
    Dense {
        n: usize,
        gram: Vec<f64>,
    },
    Lazy {
        xs: &'a [X],
        scale: f64,
        capacity: usize,
        cache: HashMap<usize, Vec<f64>>,
        order: VecDeque<usize>,
    },
}

impl<'a, X: AsRef<[f64]> + Sync> KernelColumns<'a, X> {
    pub fn new(xs: &'a [X], scale: f64) -> Self {
        let n = xs.len();
        if n <= DENSE_GRAM_MAX_ROWS {
            KernelColumns::Dense {
                n,
                gram: gram_matrix(xs, scale),
            }
        } else {
            KernelColumns::Lazy {
                xs,
                scale,
                capacity: (COLUMN_CACHE_BYTES / (8 * n)).max(2),
                cache: HashMap::new(),
                order: VecDeque::new(),
            }
        }
    }

    /// Makes column `r` resident without evicting column `keep` (no-op for
    /// the dense store).
    pub fn load(&mut self, r: usize, keep: Option<usize>) {
        if let KernelColumns::Lazy {
            xs,
            scale,
            capacity,
            cache,
            order,
        } = self
        {
            if cache.contains_key(&r) {
                return;
            }
            while cache.len() >= *capacity {
                let Some(old) = order.pop_front() else { break };
                if Some(old) == keep {
                    order.push_back(old);
                    continue;
                }
                cache.remove(&old);
            }
            let xr = xs[r].as_ref();
            let scale = *scale;
            let col = exec::map_slice(xs, |x| gaussian_kernel(x.as_ref(), xr, scale));
            cache.insert(r, col);
            order.push_back(r);
        }
    }

    /// Column `r`; must be resident.
    pub fn column(&self, r: usize) -> &[f64] {
        match self {
            KernelColumns::Dense { n, gram } => &gram[r * n..(r + 1) * n],
            KernelColumns::Lazy { cache, .. } => cache.get(&r).expect("column loaded"),
        }
    }
}
