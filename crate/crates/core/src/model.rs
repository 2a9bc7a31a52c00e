//! Model parameters, geometric constants, radial grids and profiles.

use std::f64::consts::PI;

use statrs::function::gamma::gamma;
use thiserror::Error;

use crate::quadrature::gl16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("dimension must be at least 1, got {0}")]
    InvalidDimension(usize),
    #[error("attraction exponent q = {q} is not admissible in dimension {n}: need q > {}", 2.0 - *n as f64)]
    InadmissibleExponent { n: usize, q: f64 },
    #[error("total mass must be positive and finite, got {0}")]
    InvalidMass(f64),
    #[error("singular regime q = {q} is only supported in dimensions 1 and 3 (got n = {n})")]
    SingularRegimeUnsupported { n: usize, q: f64 },
    #[error("dimension {n} is only supported for q >= 2 (got q = {q})")]
    UnsupportedDimension { n: usize, q: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
}

/// Quadrature regime of the radial kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// q > 3 − n: the radial kernel is bounded on the diagonal.
    Regular,
    /// 2 − n < q ≤ 3 − n: the kernel blows up on the diagonal and needs product integration.
    Singular,
}

/// Dimension `n`, attraction exponent `q` and total mass `M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    n: usize,
    q: f64,
    mass: f64,
}

impl ModelParams {
    pub fn new(n: usize, q: f64, mass: f64) -> Result<Self, ModelError> {
        validate(Self { n, q, mass })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// ε = α = n + q − 2.
    pub fn eps(&self) -> f64 {
        self.n as f64 + self.q - 2.0
    }

    pub fn regime(&self) -> Regime {
        regime_of(self.n, self.q)
    }

    pub fn geometry(&self) -> GeometryConstants {
        GeometryConstants::new(self.n)
    }

    /// Constant in front of the radial integral of T₁: (n+q−2)·angular_prefactor, or q − 1 for n = 1.
    pub fn operator_scale(&self) -> f64 {
        self.eps() * self.geometry().flow_prefactor()
    }

    pub fn with_mass(&self, mass: f64) -> Result<Self, ModelError> {
        Self::new(self.n, self.q, mass)
    }
}

fn regime_of(n: usize, q: f64) -> Regime {
    if q <= 3.0 - n as f64 {
        Regime::Singular
    } else {
        Regime::Regular
    }
}

/// Checks admissibility of the parameters and returns them unchanged.
pub fn validate(params: ModelParams) -> Result<ModelParams, ModelError> {
    let ModelParams { n, q, mass } = params;
    if n == 0 {
        return Err(ModelError::InvalidDimension(n));
    }
    if !(mass.is_finite() && mass > 0.0) {
        return Err(ModelError::InvalidMass(mass));
    }
    if !q.is_finite() || q <= 2.0 - n as f64 {
        return Err(ModelError::InadmissibleExponent { n, q });
    }
    if n > 3 && q < 2.0 {
        return Err(ModelError::UnsupportedDimension { n, q });
    }
    if regime_of(n, q) == Regime::Singular && n == 2 {
        return Err(ModelError::SingularRegimeUnsupported { n, q });
    }
    Ok(params)
}

/// Geometric constants of the unit ball in dimension `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryConstants {
    pub n: usize,
    /// Volume of the unit ball.
    pub omega_n: f64,
    /// n·ω_n.
    pub sphere_area: f64,
    /// ∫₀^π sin^{n−2}θ dθ, defined for n ≥ 2.
    pub angular_norm: Option<f64>,
    /// n·ω_n / angular_norm, defined for n ≥ 2.
    pub angular_prefactor: Option<f64>,
}

impl GeometryConstants {
    pub fn new(n: usize) -> Self {
        let omega_n = match n {
            1 => 2.0,
            2 => PI,
            3 => 4.0 * PI / 3.0,
            _ => PI.powf(0.5 * n as f64) / gamma(0.5 * n as f64 + 1.0),
        };
        let angular_norm = match n {
            0 | 1 => None,
            2 => Some(PI),
            3 => Some(2.0),
            _ => Some(PI.sqrt() * gamma(0.5 * (n as f64 - 1.0)) / gamma(0.5 * n as f64)),
        };
        let sphere_area = n as f64 * omega_n;
        Self {
            n,
            omega_n,
            sphere_area,
            angular_norm,
            angular_prefactor: angular_norm.map(|a| sphere_area / a),
        }
    }

    /// Angular prefactor for n ≥ 2 and 1 for the folded one-dimensional kernel.
    pub fn flow_prefactor(&self) -> f64 {
        self.angular_prefactor.unwrap_or(1.0)
    }

    /// Factor converting Σ Wⱼρⱼ (Jacobian weights) into mass: n·ω_n, or 2 for n = 1.
    pub fn mass_factor(&self) -> f64 {
        if self.n == 1 {
            2.0
        } else {
            self.sphere_area
        }
    }
}

/// Uniform nodes rⱼ = j·h on [0, R_edge] with trapezoid weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    nodes: Vec<f64>,
    h: f64,
    weights: Vec<f64>,
}

impl RadialGrid {
    pub fn uniform(r_edge: f64, intervals: usize) -> Result<Self, ModelError> {
        if intervals == 0 {
            return Err(ModelError::InvalidGrid("need at least one interval".into()));
        }
        if !(r_edge.is_finite() && r_edge > 0.0) {
            return Err(ModelError::InvalidGrid(format!("edge radius must be positive, got {r_edge}")));
        }
        let h = r_edge / intervals as f64;
        let mut nodes: Vec<f64> = (0..=intervals).map(|j| j as f64 * h).collect();
        nodes[intervals] = r_edge;
        let mut weights = vec![h; intervals + 1];
        weights[0] = 0.5 * h;
        weights[intervals] = 0.5 * h;
        Ok(Self { nodes, h, weights })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn r_edge(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// Same number of intervals on [0, factor·R_edge].
    pub fn scaled(&self, factor: f64) -> Result<Self, ModelError> {
        Self::uniform(self.r_edge() * factor, self.intervals())
    }
}

/// Weights Wⱼ = ∫ r^{n−1} φⱼ(r) dr for the piecewise-linear hat functions on `nodes`.
pub fn jacobian_weights(nodes: &[f64], n: usize) -> Vec<f64> {
    let mut w = vec![0.0; nodes.len()];
    for k in 0..nodes.len().saturating_sub(1) {
        let (wl, wr) = interval_moments(nodes[k], nodes[k + 1], n);
        w[k] += wl;
        w[k + 1] += wr;
    }
    w
}

/// (∫ r^{n−1}(b−r)/h dr, ∫ r^{n−1}(r−a)/h dr) over [a, b].
pub fn interval_moments(a: f64, b: f64, n: usize) -> (f64, f64) {
    let h = b - a;
    if h <= 0.0 {
        return (0.0, 0.0);
    }
    let m = n as i32 - 1;
    let mut wl = 0.0;
    let mut wr = 0.0;
    for (r, w) in gl16().points(a, b) {
        let jac = w * r.powi(m);
        let t = (r - a) / h;
        wl += jac * (1.0 - t);
        wr += jac * t;
    }
    (wl, wr)
}

/// Nonnegative density values on a radial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    grid: RadialGrid,
    values: Vec<f64>,
}

impl RadialProfile {
    pub fn new(grid: RadialGrid, values: Vec<f64>) -> Result<Self, ModelError> {
        if values.len() != grid.len() {
            return Err(ModelError::InvalidProfile(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(ModelError::InvalidProfile(format!(
                "value {} at node {j} is negative or not finite",
                values[j]
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: RadialGrid, f: F) -> Result<Self, ModelError> {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nodes(&self) -> &[f64] {
        self.grid.nodes()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Piecewise-linear interpolant, zero beyond the grid edge.
    pub fn interpolate(&self, r: f64) -> f64 {
        let nodes = self.grid.nodes();
        let edge = self.grid.r_edge();
        if r < 0.0 || r > edge {
            return 0.0;
        }
        let k = ((r / self.grid.h()) as usize).min(nodes.len() - 2);
        let t = ((r - nodes[k]) / (nodes[k + 1] - nodes[k])).clamp(0.0, 1.0);
        self.values[k] * (1.0 - t) + self.values[k + 1] * t
    }

    /// Profile with every value multiplied by `c ≥ 0`.
    pub fn scaled_values(&self, c: f64) -> Result<Self, ModelError> {
        Self::new(self.grid.clone(), self.values.iter().map(|v| v * c).collect())
    }
}

/// n·ω_n ∫ r^{n−1}ρ dr for the piecewise-linear profile (2∫ρ dr for n = 1).
pub fn mass(profile: &RadialProfile, n: usize) -> f64 {
    let w = jacobian_weights(profile.nodes(), n);
    let s: f64 = w.iter().zip(profile.values()).map(|(w, v)| w * v).sum();
    GeometryConstants::new(n).mass_factor() * s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn validation_examples() {
        let p = ModelParams::new(3, 2.0, 1.0).unwrap();
        assert_eq!(p.regime(), Regime::Regular);
        let p = ModelParams::new(3, -0.5, 1.0).unwrap();
        assert_eq!(p.regime(), Regime::Singular);
        assert!(matches!(
            ModelParams::new(2, 0.5, 1.0),
            Err(ModelError::SingularRegimeUnsupported { .. })
        ));
        assert!(ModelParams::new(3, -1.0, 1.0).is_err());
        assert!(ModelParams::new(1, 1.0, 1.0).is_err());
        assert!(ModelParams::new(1, 1.5, 0.0).is_err());
        assert!(ModelParams::new(0, 2.0, 1.0).is_err());
        assert!(ModelParams::new(4, 1.0, 1.0).is_err());
        assert!(ModelParams::new(4, 3.0, 1.0).is_ok());
        assert_eq!(ModelParams::new(1, 2.0, 1.0).unwrap().regime(), Regime::Singular);
        assert_eq!(ModelParams::new(3, 0.0, 1.0).unwrap().regime(), Regime::Singular);
        assert_eq!(ModelParams::new(3, 0.5, 1.0).unwrap().regime(), Regime::Regular);
    }

    #[test]
    fn geometry_constants() {
        assert_eq!(GeometryConstants::new(1).omega_n, 2.0);
        assert_eq!(GeometryConstants::new(2).omega_n, PI);
        assert_relative_eq!(GeometryConstants::new(3).omega_n, 4.0 * PI / 3.0);
        let g3 = GeometryConstants::new(3);
        assert_eq!(g3.angular_norm, Some(2.0));
        assert_relative_eq!(g3.angular_prefactor.unwrap(), 2.0 * PI, max_relative = 1e-15);
        assert!(GeometryConstants::new(1).angular_norm.is_none());
        for n in [2usize, 3] {
            let g = GeometryConstants::new(n);
            let lower = GeometryConstants::new(n - 1);
            let rhs = (n - 1) as f64 * lower.omega_n * g.angular_norm.unwrap();
            assert_relative_eq!(g.sphere_area, rhs, max_relative = 1e-15);
        }
        let g5 = GeometryConstants::new(5);
        assert_relative_eq!(g5.omega_n, 8.0 * PI * PI / 15.0, max_relative = 1e-13);
        assert_relative_eq!(g5.angular_norm.unwrap(), 4.0 / 3.0, max_relative = 1e-13);
    }

    #[test]
    fn grid_invariants() {
        let g = RadialGrid::uniform(0.7, 35).unwrap();
        assert_eq!(g.nodes()[0], 0.0);
        assert_eq!(g.r_edge(), 0.7);
        assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
        assert_relative_eq!(g.weights().iter().sum::<f64>(), 0.7, max_relative = 1e-14);
        assert!(RadialGrid::uniform(1.0, 0).is_err());
        assert!(RadialGrid::uniform(-1.0, 4).is_err());
    }

    #[test]
    fn mass_examples() {
        let r = (4.0 * PI).powf(-1.0 / 3.0);
        let p = RadialProfile::from_fn(RadialGrid::uniform(r, 50).unwrap(), |_| 3.0).unwrap();
        assert_relative_eq!(mass(&p, 3), 1.0, max_relative = 1e-13);
        let z = RadialProfile::from_fn(RadialGrid::uniform(1.0, 10).unwrap(), |_| 0.0).unwrap();
        assert_eq!(mass(&z, 3), 0.0);
        let h = RadialProfile::from_fn(RadialGrid::uniform(1.0, 10).unwrap(), |_| 0.5).unwrap();
        assert_relative_eq!(mass(&h, 1), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn profile_rejects_negative() {
        let g = RadialGrid::uniform(1.0, 2).unwrap();
        assert!(RadialProfile::new(g.clone(), vec![1.0, -1.0, 0.0]).is_err());
        assert!(RadialProfile::new(g, vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn interpolation() {
        let p = RadialProfile::from_fn(RadialGrid::uniform(2.0, 4).unwrap(), |r| r).unwrap();
        assert_relative_eq!(p.interpolate(1.3), 1.3, epsilon = 1e-15);
        assert_eq!(p.interpolate(2.5), 0.0);
        assert_relative_eq!(p.interpolate(2.0), 2.0);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn mass_is_linear(n in 1usize..=3, edge in 0.1f64..3.0, c in 0.0f64..10.0, seed in 0u64..1000) {
                let grid = RadialGrid::uniform(edge, 30).unwrap();
                let f = |r: f64| 1.0 + ((seed as f64 + 7.0 * r).sin()).abs();
                let g = |r: f64| r * r;
                let pf = RadialProfile::from_fn(grid.clone(), f).unwrap();
                let pg = RadialProfile::from_fn(grid.clone(), g).unwrap();
                let sum = RadialProfile::from_fn(grid, |r| c * f(r) + g(r)).unwrap();
                let lhs = mass(&sum, n);
                let rhs = c * mass(&pf, n) + mass(&pg, n);
                prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
            }

            #[test]
            fn jacobian_weights_integrate_the_volume(n in 1usize..=4, edge in 0.1f64..3.0, m in 1usize..60) {
                let grid = RadialGrid::uniform(edge, m).unwrap();
                let w = jacobian_weights(grid.nodes(), n);
                prop_assert!(w.iter().all(|&x| x >= 0.0));
                let total: f64 = w.iter().sum();
                let exact = edge.powi(n as i32) / n as f64;
                prop_assert!((total - exact).abs() <= 1e-12 * exact);
            }

            #[test]
            fn params_reject_nonintegrable_q(n in 1usize..=3, d in 0.0f64..3.0, mass in 0.1f64..5.0) {
                prop_assert!(ModelParams::new(n, 2.0 - n as f64 - d, mass).is_err());
                prop_assert!(ModelParams::new(n, 2.5 + d, mass).is_ok());
                prop_assert!(ModelParams::new(n, 2.5 + d, -mass).is_err());
            }
        }
    }
}
