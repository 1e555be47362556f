//! Gauss–Legendre panels on interface-aligned intervals.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point rule on [-1, 1], `n ≥ 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            // p1 = P_n(x), p0 = P_{n-1}(x)
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// A fixed-size rule: `panels` equal panels of `order` Gauss points on [a, b].
///
/// The node count does not depend on the interval length, so integrals over
/// moving intervals vary smoothly.
#[derive(Debug, Clone)]
pub struct PanelRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl PanelRule {
    pub fn new(order: usize) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        PanelRule { nodes, weights }
    }

    /// Appends nodes and weights for [a, b] split into `panels` pieces.
    pub fn push(&self, a: f64, b: f64, panels: usize, xs: &mut Vec<f64>, ws: &mut Vec<f64>) {
        let width = (b - a) / panels as f64;
        for p in 0..panels {
            let lo = a + p as f64 * width;
            let mid = lo + 0.5 * width;
            for (t, w) in self.nodes.iter().zip(&self.weights) {
                xs.push(mid + 0.5 * width * t);
                ws.push(0.5 * width * w);
            }
        }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }
}
