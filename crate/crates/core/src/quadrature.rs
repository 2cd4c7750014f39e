//! Gauss-Legendre quadrature with dyadic panel refinement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureConfig {
    pub nodes_per_panel: usize,
    /// Accepted disagreement between a panel and its two halves, per unit length.
    pub tolerance: f64,
    /// Maximum bisection depth below an initial panel.
    pub max_splits: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            nodes_per_panel: 32,
            tolerance: 1e-10,
            max_splits: 20,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes_per_panel == 0 || self.max_splits == 0 {
            return Err(Error::Config("quadrature counts must be positive".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config(
                "quadrature tolerance must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Nodes and weights of the n-point Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi's initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: &F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let s: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum();
        s * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

/// Integrates `f` over `[0, 1]`, starting from panels split at `breakpoints`
/// and bisecting each panel until its estimate agrees with the sum over its
/// halves. Non-finite panel values are returned as-is.
pub fn integrate_unit<F: Fn(f64) -> f64>(f: F, breakpoints: &[f64], cfg: &QuadratureConfig) -> f64 {
    let rule = GaussLegendre::new(cfg.nodes_per_panel);
    let edges = panel_edges(breakpoints);
    edges
        .windows(2)
        .map(|w| {
            let whole = rule.integrate(&f, w[0], w[1]);
            refine(&rule, &f, w[0], w[1], whole, 0, cfg)
        })
        .sum()
}

fn refine<F: Fn(f64) -> f64>(
    rule: &GaussLegendre,
    f: &F,
    a: f64,
    b: f64,
    whole: f64,
    depth: usize,
    cfg: &QuadratureConfig,
) -> f64 {
    if !whole.is_finite() {
        return whole;
    }
    let m = 0.5 * (a + b);
    let left = rule.integrate(f, a, m);
    let right = rule.integrate(f, m, b);
    let split = left + right;
    if !split.is_finite() {
        return split;
    }
    if (split - whole).abs() <= cfg.tolerance * (b - a) || depth + 1 >= cfg.max_splits {
        return split;
    }
    refine(rule, f, a, m, left, depth + 1, cfg) + refine(rule, f, m, b, right, depth + 1, cfg)
}

/// Sorted, deduplicated panel edges `{0, 1} ∪ (breakpoints ∩ [0, 1])`.
pub fn panel_edges(breakpoints: &[f64]) -> Vec<f64> {
    let mut edges: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|x| x.is_finite() && *x > 0.0 && *x < 1.0)
        .collect();
    edges.push(0.0);
    edges.push(1.0);
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    edges
}
