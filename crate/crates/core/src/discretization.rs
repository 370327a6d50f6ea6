//! Finite state spaces: the income chain and the asset/AIME grids.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Discrete Markov chain on log-income deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovChain {
    nodes: Vec<f64>,
    transition: Vec<Vec<f64>>,
    initial: Vec<f64>,
}

impl MarkovChain {
    /// Validates and wraps an explicit chain.
    pub fn new(nodes: Vec<f64>, transition: Vec<Vec<f64>>, initial: Vec<f64>) -> Result<Self> {
        let n = nodes.len();
        if n == 0 {
            return Err(Error::Argument("chain needs at least one node".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Argument("chain nodes must be strictly increasing".into()));
        }
        if transition.len() != n || transition.iter().any(|row| row.len() != n) {
            return Err(Error::Argument("transition matrix must be n x n".into()));
        }
        for (i, row) in transition.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if row.iter().any(|p| *p < 0.0) || (s - 1.0).abs() > 1e-12 {
                return Err(Error::Argument(format!("transition row {i} is not a distribution")));
            }
        }
        let s: f64 = initial.iter().sum();
        if initial.len() != n || initial.iter().any(|p| *p < 0.0) || (s - 1.0).abs() > 1e-12 {
            return Err(Error::Argument("initial law is not a distribution over the nodes".into()));
        }
        Ok(Self {
            nodes,
            transition,
            initial,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    #[inline]
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.transition[from][to]
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// Replaces the initial law by `N(0, sigma^2)` binned at the midpoints
    /// between nodes. A zero `sigma` puts all mass on the node(s) closest to 0.
    pub fn with_initial_normal(mut self, sigma: f64) -> Result<Self> {
        if sigma < 0.0 {
            return Err(Error::Argument("initial dispersion must be non-negative".into()));
        }
        let n = self.nodes.len();
        let mut init = vec![0.0; n];
        if sigma == 0.0 || n == 1 {
            let best = self
                .nodes
                .iter()
                .map(|x| x.abs())
                .fold(f64::INFINITY, f64::min);
            let hits: Vec<usize> = (0..n)
                .filter(|&i| (self.nodes[i].abs() - best).abs() <= 1e-12 * best.max(1.0))
                .collect();
            for &i in &hits {
                init[i] = 1.0 / hits.len() as f64;
            }
        } else {
            let normal = Normal::new(0.0, sigma).map_err(|e| Error::Argument(e.to_string()))?;
            let mut prev = 0.0;
            for i in 0..n {
                let upper = if i + 1 < n {
                    normal.cdf(0.5 * (self.nodes[i] + self.nodes[i + 1]))
                } else {
                    1.0
                };
                init[i] = upper - prev;
                prev = upper;
            }
        }
        let s: f64 = init.iter().sum();
        init.iter_mut().for_each(|p| *p /= s);
        self.initial = init;
        Ok(self)
    }

    /// Stationary law by power iteration.
    pub fn stationary(&self) -> Vec<f64> {
        let n = self.len();
        let mut pi = vec![1.0 / n as f64; n];
        for _ in 0..100_000 {
            let mut next = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    next[j] += pi[i] * self.transition[i][j];
                }
            }
            let diff = next
                .iter()
                .zip(&pi)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            pi = next;
            if diff < 1e-16 {
                break;
            }
        }
        pi
    }
}

/// Rouwenhorst discretisation of `x' = rho x + e`, `e ~ N(0, sigma^2)`.
pub fn discretize_ar1(rho: f64, sigma: f64, n: usize) -> Result<MarkovChain> {
    if n < 2 {
        return Err(Error::Argument(format!("need at least 2 nodes, got {n}")));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Argument(format!("persistence must lie in [0,1), got {rho}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::Argument(format!("innovation sd must be positive, got {sigma}")));
    }
    let p = (1.0 + rho) / 2.0;
    let mut mat = vec![vec![p, 1.0 - p], vec![1.0 - p, p]];
    for m in 3..=n {
        let mut next = vec![vec![0.0; m]; m];
        for i in 0..m - 1 {
            for j in 0..m - 1 {
                let v = mat[i][j];
                next[i][j] += p * v;
                next[i][j + 1] += (1.0 - p) * v;
                next[i + 1][j] += (1.0 - p) * v;
                next[i + 1][j + 1] += p * v;
            }
        }
        for row in next.iter_mut().take(m - 1).skip(1) {
            row.iter_mut().for_each(|x| *x /= 2.0);
        }
        mat = next;
    }
    for row in mat.iter_mut() {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= s);
    }
    let sd = sigma / (1.0 - rho * rho).sqrt();
    let psi = sd * ((n - 1) as f64).sqrt();
    let nodes: Vec<f64> = (0..n)
        .map(|i| -psi + 2.0 * psi * i as f64 / (n - 1) as f64)
        .collect();
    // Binomial(n-1, 1/2) is the exact stationary law of this construction.
    let mut initial = vec![0.0; n];
    let mut c = 1.0f64;
    for (k, slot) in initial.iter_mut().enumerate() {
        if k > 0 {
            c *= (n - k) as f64 / k as f64;
        }
        *slot = c * 0.5f64.powi((n - 1) as i32);
    }
    MarkovChain::new(nodes, mat, initial)
}

/// Ordered grid of currency values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    points: Vec<f64>,
    curvature: f64,
}

impl Grid {
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Argument("grid needs at least 2 points".into()));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Argument("grid points must be strictly increasing".into()));
        }
        Ok(Self {
            points,
            curvature: f64::NAN,
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.points[0]
    }

    pub fn max(&self) -> f64 {
        *self.points.last().unwrap()
    }

    /// Spacing exponent; NaN for grids built from explicit points.
    pub fn curvature(&self) -> f64 {
        self.curvature
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.points[i]
    }

    /// Bracketing nodes and the weight on the upper one. Values beyond the
    /// ends are clamped.
    pub fn interp_weights(&self, value: f64) -> (usize, usize, f64) {
        let n = self.points.len();
        if value <= self.points[0] {
            return (0, 0, 0.0);
        }
        if value >= self.points[n - 1] {
            return (n - 1, n - 1, 0.0);
        }
        let hi = self.points.partition_point(|p| *p <= value);
        let lo = hi - 1;
        let w = (value - self.points[lo]) / (self.points[hi] - self.points[lo]);
        if w == 0.0 {
            (lo, lo, 0.0)
        } else {
            (lo, hi, w)
        }
    }

    /// Index of the closest node, ties to the lower one.
    pub fn nearest(&self, value: f64) -> usize {
        let (lo, hi, w) = self.interp_weights(value);
        if w > 0.5 {
            hi
        } else {
            lo
        }
    }
}

/// `points[i] = min + (max - min) (i/(n-1))^curvature`.
pub fn build_grid(min: f64, max: f64, n: usize, curvature: f64) -> Result<Grid> {
    if !(min < max) {
        return Err(Error::Argument(format!("grid bounds must satisfy min < max ({min}, {max})")));
    }
    if n < 2 {
        return Err(Error::Argument(format!("grid needs at least 2 points, got {n}")));
    }
    if !(curvature >= 1.0) {
        return Err(Error::Argument(format!("curvature must be >= 1, got {curvature}")));
    }
    let points = (0..n)
        .map(|i| {
            if i == n - 1 {
                max
            } else {
                min + (max - min) * (i as f64 / (n - 1) as f64).powf(curvature)
            }
        })
        .collect();
    let mut g = Grid::from_points(points)?;
    g.curvature = curvature;
    Ok(g)
}

/// Largest index whose point does not exceed `value`.
pub fn snap_down(value: f64, grid: &Grid) -> Result<usize> {
    if value.is_nan() || value < grid.min() {
        return Err(Error::Domain(format!(
            "value {value} below grid minimum {}",
            grid.min()
        )));
    }
    Ok(grid.points.partition_point(|p| *p <= value) - 1)
}
