//! Gauss–Legendre rules and the geometric time grids used near `t = 0`,
//! where degenerate semigroups are only bounded, not continuous.

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
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
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Rule {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    Rule {
        nodes: x.iter().map(|&t| mid + half * t).collect(),
        weights: w.iter().map(|&v| v * half).collect(),
    }
}

/// A quadrature rule: `sum w_i f(x_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Points per panel of the composite time rules.
pub const PANEL_ORDER: usize = 4;
/// Relative start of the geometric grid, `t_0 = T * GEOMETRIC_START`.
pub const GEOMETRIC_START: f64 = 1e-6;

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Composite 4-point Gauss rule on `[0, T]`: one panel `[0, t_0]` with
    /// `t_0 = T * start`, then geometric panels up to `T`. `total_nodes` is
    /// rounded up to a multiple of the panel order.
    pub fn geometric(total: f64, total_nodes: usize, start: f64) -> Rule {
        assert!(total > 0.0, "time horizon must be positive");
        let panels = (total_nodes.div_ceil(PANEL_ORDER)).max(2);
        let t0 = total * start;
        let ratio = (total / t0).powf(1.0 / (panels - 1) as f64);
        let mut edges = Vec::with_capacity(panels + 1);
        edges.push(0.0);
        let mut t = t0;
        for _ in 0..(panels - 1) {
            edges.push(t);
            t *= ratio;
        }
        edges.push(total);
        Self::from_edges(&edges)
    }

    /// Composite 4-point Gauss rule on uniform panels of `[a, b]`.
    pub fn uniform(a: f64, b: f64, total_nodes: usize) -> Rule {
        let panels = total_nodes.div_ceil(PANEL_ORDER).max(1);
        let edges: Vec<f64> = (0..=panels)
            .map(|k| a + (b - a) * k as f64 / panels as f64)
            .collect();
        Self::from_edges(&edges)
    }

    pub fn from_edges(edges: &[f64]) -> Rule {
        let (x, w) = gauss_legendre(PANEL_ORDER);
        let mut nodes = Vec::with_capacity(PANEL_ORDER * edges.len());
        let mut weights = Vec::with_capacity(PANEL_ORDER * edges.len());
        for pair in edges.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(mid + half * xi);
                weights.push(wi * half);
            }
        }
        Rule { nodes, weights }
    }
}

/// Policy for node doubling in time integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Refinement {
    pub initial_nodes: usize,
    pub max_doublings: usize,
    pub target_change: f64,
    pub unstable_change: f64,
    pub absolute_floor: f64,
}

impl Default for Refinement {
    fn default() -> Self {
        Self {
            initial_nodes: 256,
            max_doublings: 3,
            target_change: 1e-3,
            unstable_change: 0.1,
            absolute_floor: 1e-13,
        }
    }
}

impl Refinement {
    pub fn fixed(nodes: usize) -> Self {
        Self {
            initial_nodes: nodes,
            max_doublings: 0,
            ..Self::default()
        }
    }

    /// Evaluate `compute(nodes)` with doubling node counts until the relative
    /// change drops below `target_change`. Fails if the last doubling still
    /// moves the value by more than `unstable_change`.
    pub fn run<F>(&self, quantity: &str, compute: F) -> Result<f64>
    where
        F: Fn(usize) -> Result<f64>,
    {
        let mut nodes = self.initial_nodes;
        let mut value = compute(nodes)?;
        for _ in 0..self.max_doublings {
            nodes *= 2;
            let next = compute(nodes)?;
            let change = (next - value).abs();
            let scale = next.abs();
            value = next;
            if change <= self.target_change * scale + self.absolute_floor {
                return Ok(value);
            }
            if nodes >= self.initial_nodes << self.max_doublings
                && change > self.unstable_change * scale + self.absolute_floor
            {
                return Err(Error::QuadratureUnstable {
                    quantity: quantity.to_string(),
                    relative_change: change / scale.max(f64::MIN_POSITIVE),
                });
            }
        }
        Ok(value)
    }
}
