//! Gauss–Legendre rules and a few composite/adaptive integrators built on them.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Gauss–Legendre rule on the reference interval [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the `m`-point rule by Newton iteration on the Legendre polynomial.
    pub fn new(m: usize) -> Self {
        assert!(m >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; m];
        let mut weights = vec![0.0; m];
        for i in 0..(m + 1) / 2 {
            let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(m, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(m, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[m - 1 - i] = x;
            weights[i] = w;
            weights[m - 1 - i] = w;
        }
        if m % 2 == 1 {
            nodes[m / 2] = 0.0;
        }
        Self { nodes, weights }
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

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights mapped to [a, b].
    pub fn points(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (c + h * x, h * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.points(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=m {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if m == 0 {
        return (1.0, 0.0);
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Shared 16-point rule.
pub fn gl16() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(16))
}

/// Shared 24-point rule.
pub fn gl24() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(24))
}

/// Shared rule with `m` nodes for m in {8, 16, 24, 32, 64, 128, 256, 512, 1024}.
pub fn shared(m: usize) -> &'static GaussLegendre {
    static RULES: OnceLock<Vec<(usize, GaussLegendre)>> = OnceLock::new();
    let rules = RULES.get_or_init(|| {
        [8, 16, 24, 32, 64, 128, 256, 512, 1024]
            .iter()
            .map(|&k| (k, GaussLegendre::new(k)))
            .collect()
    });
    &rules
        .iter()
        .find(|(k, _)| *k == m)
        .unwrap_or_else(|| panic!("no shared Gauss-Legendre rule with {m} nodes"))
        .1
}

/// Integral over [a, b] whose integrand has an endpoint singularity at `a`,
/// using the substitution x = a + (b − a)·t⁴.
pub fn endpoint_graded<F: FnMut(f64) -> f64>(a: f64, b: f64, mut f: F) -> f64 {
    let h = b - a;
    gl24().integrate(0.0, 1.0, |t| {
        let t2 = t * t;
        4.0 * h * t2 * t * f(a + h * t2 * t2)
    })
}

/// Breakpoints on [0, len] clustered geometrically toward 0 with smallest panel `delta`.
pub fn geometric_breaks(len: f64, delta: f64) -> Vec<f64> {
    let mut breaks = vec![0.0];
    if delta <= 0.0 || delta >= 0.25 * len {
        let panels = 4;
        breaks.extend((1..=panels).map(|k| len * k as f64 / panels as f64));
        return breaks;
    }
    let mut x = delta;
    while x < 0.5 * len {
        breaks.push(x);
        x *= 2.0;
    }
    let last = *breaks.last().unwrap();
    let rest = 4;
    breaks.extend((1..=rest).map(|k| last + (len - last) * k as f64 / rest as f64));
    breaks
}

/// Adaptive bisection with a 16-point rule per panel compared against its two halves.
pub fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let whole = gl16().integrate(a, b, f);
    adaptive_rec(f, a, b, whole, tol, 0)
}

fn adaptive_rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let left = gl16().integrate(a, m, f);
    let right = gl16().integrate(m, b, f);
    let both = left + right;
    if depth >= 40 || (both - whole).abs() <= tol.max(1e-14 * both.abs()) {
        return both;
    }
    adaptive_rec(f, a, m, left, 0.5 * tol, depth + 1)
        + adaptive_rec(f, m, b, right, 0.5 * tol, depth + 1)
}
