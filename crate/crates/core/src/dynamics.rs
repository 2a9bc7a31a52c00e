//! Radial evolution along characteristics: dr/dt = v(r), dρ/dt = −ρ∇·v, integrated with RK4.

use thiserror::Error;

use std::sync::OnceLock;

use crate::kernels::{KernelError, PairKernel};
use crate::model::{mass, GeometryConstants, ModelError, ModelParams, RadialGrid, RadialProfile};
use crate::quadrature::{shared, GaussLegendre};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("characteristics crossed at t = {time} (particles {index} and {})", index + 1)]
    CharacteristicCrossing { time: f64, index: usize },
    #[error("non-finite state at t = {time}")]
    NonFinite { time: f64 },
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Particle radii and carried densities.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicState {
    pub time: f64,
    pub radii: Vec<f64>,
    pub densities: Vec<f64>,
    /// ∫₀^{rᵢ} r^{n−1}ρ dr at seeding; constant along each characteristic.
    pub enclosed: Vec<f64>,
    pub params: ModelParams,
}

impl CharacteristicState {
    /// Seeds one particle per grid node of `profile`.
    pub fn from_profile(profile: &RadialProfile, params: &ModelParams) -> Self {
        let radii = profile.nodes().to_vec();
        let densities = profile.values().to_vec();
        let mut enclosed = vec![0.0; radii.len()];
        for (k, part) in interval_masses(&radii, &densities, params.n()).into_iter().enumerate() {
            enclosed[k + 1] = enclosed[k] + part;
        }
        Self { time: 0.0, radii, densities, enclosed, params: *params }
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    /// n·ω_n ∫ r^{n−1}ρ dr of the piecewise-quintic density on the current radii (2∫ρ dr for n = 1).
    pub fn mass(&self) -> f64 {
        let n = self.params.n();
        GeometryConstants::new(n).mass_factor() * interval_masses(&self.radii, &self.densities, n).iter().sum::<f64>()
    }

    pub fn rho_max(&self) -> f64 {
        self.densities.iter().cloned().fold(0.0, f64::max)
    }

    /// Largest rᵢ with ρᵢ > 1e−8·ρ_max.
    pub fn support_radius(&self) -> f64 {
        let floor = SUPPORT_THRESHOLD * self.rho_max();
        self.radii
            .iter()
            .zip(&self.densities)
            .filter(|(_, &d)| d > floor)
            .map(|(&r, _)| r)
            .fold(0.0, f64::max)
    }

    /// max |ρᵢ − ρ̄(min(rᵢ, R))| against an equilibrium on [0, R].
    pub fn distance_to(&self, reference: &RadialProfile) -> f64 {
        let edge = reference.grid().r_edge();
        self.radii
            .iter()
            .zip(&self.densities)
            .map(|(&r, &d)| (d - reference.interpolate(r.min(edge))).abs())
            .fold(0.0, f64::max)
    }

    /// max over particles of |Δr| and |Δρ|.
    pub fn deviation_from(&self, other: &CharacteristicState) -> f64 {
        let dr = self.radii.iter().zip(&other.radii).map(|(a, b)| (a - b).abs());
        let dd = self.densities.iter().zip(&other.densities).map(|(a, b)| (a - b).abs());
        dr.chain(dd).fold(0.0, f64::max)
    }
}

/// Relative threshold of the support-radius estimate.
pub const SUPPORT_THRESHOLD: f64 = 1e-8;

/// Gauss points per interval for the density integrals.
const INTERVAL_POINTS: usize = 3;

/// Nodes in the Lagrange stencil of the density interpolant.
const STENCIL: usize = 6;

fn interval_rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(INTERVAL_POINTS))
}

/// (t^k, k·t^{k−1}w) on [0, 1] for integrals with an endpoint singularity |u|^p.
/// k(1 + p) ≥ 4, so the singular factor becomes a polynomial in t.
fn graded_rule(p: f64) -> Vec<(f64, f64)> {
    let k = if p >= 0.0 { 4 } else { ((4.0 / (1.0 + p)).ceil() as i32).clamp(4, 40) };
    let points = match k {
        0..=12 => 8,
        13..=24 => 16,
        _ => 24,
    };
    shared(points)
        .points(0.0, 1.0)
        .map(|(t, w)| (t.powi(k), k as f64 * t.powi(k - 1) * w))
        .collect()
}

/// Intervals on each side treated as near field when the kernel has an unbounded derivative on the diagonal.
const NEAR_INTERVALS: usize = 4;

fn near_rule() -> &'static GaussLegendre {
    shared(8)
}

/// Exponent p of the diagonal behaviour |r − x|^p of r^{n−1}I(r, x).
fn diagonal_exponent(params: &ModelParams) -> f64 {
    params.q() + params.n() as f64 - 3.0
}

/// Value at `x` in interval k of the piecewise-quintic Lagrange interpolant through the particles.
pub fn interpolate_density(radii: &[f64], densities: &[f64], k: usize, x: f64) -> f64 {
    let m = radii.len();
    let p = m.min(STENCIL);
    let s = k.saturating_sub(STENCIL / 2 - 1).min(m - p);
    let mut total = 0.0;
    for l in s..s + p {
        let mut basis = 1.0;
        for j in s..s + p {
            if j != l {
                basis *= (x - radii[j]) / (radii[l] - radii[j]);
            }
        }
        total += basis * densities[l];
    }
    total
}

/// Per-interval contributions ∫ r^{n−1}ρ dr of the piecewise-quintic density.
pub fn interval_masses(radii: &[f64], densities: &[f64], n: usize) -> Vec<f64> {
    let rule = interval_rule();
    (0..radii.len().saturating_sub(1))
        .map(|k| {
            let (a, b) = (radii[k], radii[k + 1]);
            if b <= a {
                return 0.0;
            }
            rule.points(a, b)
                .map(|(x, w)| w * x.powi(n as i32 - 1) * interpolate_density(radii, densities, k, x))
                .sum()
        })
        .collect()
}

/// Velocity and density right-hand sides of the characteristic system.
#[derive(Debug, Clone)]
pub struct FlowField {
    params: ModelParams,
    pair: PairKernel,
    prefactor: f64,
    scale: f64,
    graded: Vec<(f64, f64)>,
    /// Intervals on each side of a particle integrated with the graded or near-field rule.
    near: usize,
}

/// Time derivatives of all radii and densities.
#[derive(Debug, Clone, PartialEq)]
pub struct Rates {
    pub velocity: Vec<f64>,
    pub density: Vec<f64>,
}

impl FlowField {
    pub fn new(params: &ModelParams) -> Result<Self, DynamicsError> {
        Ok(Self {
            params: *params,
            pair: PairKernel::new(params)?,
            prefactor: params.geometry().flow_prefactor(),
            scale: params.operator_scale(),
            graded: graded_rule(diagonal_exponent(params)),
            near: if diagonal_exponent(params) < 1.0 { NEAR_INTERVALS } else { 1 },
        })
    }

    /// (I(r, x), J(r, x)), with the axis limits at r = 0.
    #[inline]
    fn kernels(&self, r: f64, x: f64) -> (f64, f64) {
        self.kernels_with_gap(r, x, (r - x).abs())
    }

    #[inline]
    fn kernels_with_gap(&self, r: f64, x: f64, gap: f64) -> (f64, f64) {
        if r == 0.0 {
            let n = self.params.n() as i32;
            (self.pair.axis_weighted(x) / x.powi(n - 1), 0.0)
        } else {
            let (i, j, _) = self.pair.pair_with_gap(r, x, gap);
            (i, j)
        }
    }

    /// Σ (I(r, xₖ), J(r, xₖ))·wₖ over points away from r.
    /// `scaled` holds wₖ/xₖ.
    fn accumulate(&self, r: f64, points: &[f64], weights: &[f64], scaled: &[f64]) -> (f64, f64) {
        let mut div = 0.0;
        let mut att = 0.0;
        match &self.pair {
            PairKernel::ThreeD { pq, q } if r > 0.0 && *q != 0.0 => {
                let inv_q = 1.0 / q;
                let c2 = 2.0 / (q + 2.0);
                let r2 = r * r;
                for (&x, &w) in points.iter().zip(scaled) {
                    let a = r + x;
                    let b = (r - x).abs();
                    let aq = pq.pow(a);
                    let bq = pq.pow(b);
                    let d = (aq - bq) * w;
                    div += d;
                    att += (r2 - x * x) * 2.0 * d + q * c2 * (aq * a * a - bq * b * b) * w;
                }
                (div * inv_q / r, att * inv_q / (4.0 * r2))
            }
            PairKernel::OneD { pm2, pm1, .. } if r > 0.0 => {
                for (&x, &w) in points.iter().zip(weights) {
                    let a = r + x;
                    let b = (r - x).abs();
                    div += (pm2.pow(a) + pm2.pow(b)) * w;
                    let jb = pm1.pow(b);
                    att += (pm1.pow(a) + if r >= x { jb } else { -jb }) * w;
                }
                (div, att)
            }
            _ => {
                for (&x, &w) in points.iter().zip(weights) {
                    let (ik, jk) = self.kernels(r, x);
                    div += ik * w;
                    att += jk * w;
                }
                (div, att)
            }
        }
    }

    /// v(rᵢ) and dρᵢ/dt for all particles.
    pub fn rates(&self, radii: &[f64], densities: &[f64], enclosed: &[f64]) -> Rates {
        let m = radii.len();
        let n = self.params.n() as i32;
        let rule = interval_rule();
        let g = INTERVAL_POINTS;
        let mut points = Vec::with_capacity((m - 1) * g);
        let mut weighted = Vec::with_capacity((m - 1) * g);
        for k in 0..m - 1 {
            let (a, b) = (radii[k], radii[k + 1]);
            for (x, w) in rule.points(a, b) {
                points.push(x);
                weighted.push(if b > a { w * x.powi(n - 1) * interpolate_density(radii, densities, k, x) } else { 0.0 });
            }
        }
        let scaled: Vec<f64> = points.iter().zip(&weighted).map(|(x, w)| w / x).collect();
        let mut velocity = vec![0.0; m];
        let mut density = vec![0.0; m];
        for i in 0..m {
            let ri = radii[i];
            let lo = i.saturating_sub(self.near) * g;
            let hi = ((i + self.near) * g).min(points.len());
            let (d1, a1) = self.accumulate(ri, &points[..lo], &weighted[..lo], &scaled[..lo]);
            let (d2, a2) = self.accumulate(ri, &points[hi..], &weighted[hi..], &scaled[hi..]);
            let mut div = d1 + d2;
            let mut att = a1 + a2;
            for k in i.saturating_sub(self.near)..(i + self.near).min(m - 1) {
                if k + 1 < i || k > i {
                    let (a, b) = (radii[k], radii[k + 1]);
                    if b <= a {
                        continue;
                    }
                    for (x, w) in near_rule().points(a, b) {
                        let f = w * x.powi(n - 1) * interpolate_density(radii, densities, k, x);
                        let (ik, jk) = self.kernels(ri, x);
                        div += ik * f;
                        att += jk * f;
                    }
                    continue;
                }
                let (far, sign) = if k == i { (radii[k + 1], 1.0) } else { (radii[k], -1.0) };
                let h = (far - ri) * sign;
                if h <= 0.0 {
                    continue;
                }
                for &(u, w) in &self.graded {
                    let x = ri + sign * h * u;
                    let f = h * w * interpolate_density(radii, densities, k, x);
                    if ri == 0.0 {
                        div += self.pair.axis_weighted(x) * f;
                    } else {
                        let (ik, jk) = self.kernels_with_gap(ri, x, h * u);
                        let f = f * x.powi(n - 1);
                        div += ik * f;
                        att += jk * f;
                    }
                }
            }
            velocity[i] = if ri == 0.0 { 0.0 } else { enclosed[i] / ri.powi(n - 1) - self.prefactor * att };
            density[i] = -densities[i] * (densities[i] - self.scale * div);
        }
        Rates { velocity, density }
    }

    /// dr/dt at particle i.
    pub fn radial_velocity(&self, state: &CharacteristicState, i: usize) -> f64 {
        self.rates(&state.radii, &state.densities, &state.enclosed).velocity[i]
    }

    /// dρ/dt at particle i.
    pub fn density_rhs(&self, state: &CharacteristicState, i: usize) -> f64 {
        self.rates(&state.radii, &state.densities, &state.enclosed).density[i]
    }
}

/// dr/dt at particle i of `state`.
pub fn radial_velocity(state: &CharacteristicState, i: usize) -> Result<f64, DynamicsError> {
    Ok(FlowField::new(&state.params)?.radial_velocity(state, i))
}

/// dρ/dt at particle i of `state`.
pub fn density_rhs(state: &CharacteristicState, i: usize) -> Result<f64, DynamicsError> {
    Ok(FlowField::new(&state.params)?.density_rhs(state, i))
}

/// Result of one RK4 step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: CharacteristicState,
    /// Number of densities clamped to zero in this step.
    pub clamped: usize,
}

/// One classical RK4 step of size `dt ≥ 0`.
pub fn step_rk4(flow: &FlowField, state: &CharacteristicState, dt: f64) -> Result<Step, DynamicsError> {
    if !(dt.is_finite() && dt >= 0.0) {
        return Err(DynamicsError::InvalidStep(dt));
    }
    if dt == 0.0 {
        return Ok(Step { state: state.clone(), clamped: 0 });
    }
    let m = state.len();
    let e = &state.enclosed;
    let axpy = |x: &[f64], k: &[f64], s: f64| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + s * b).collect() };
    let k1 = flow.rates(&state.radii, &state.densities, e);
    let k2 = flow.rates(&axpy(&state.radii, &k1.velocity, 0.5 * dt), &axpy(&state.densities, &k1.density, 0.5 * dt), e);
    let k3 = flow.rates(&axpy(&state.radii, &k2.velocity, 0.5 * dt), &axpy(&state.densities, &k2.density, 0.5 * dt), e);
    let k4 = flow.rates(&axpy(&state.radii, &k3.velocity, dt), &axpy(&state.densities, &k3.density, dt), e);
    let combine = |x: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64]| -> Vec<f64> {
        (0..m).map(|i| x[i] + dt / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i])).collect()
    };
    let radii = combine(&state.radii, &k1.velocity, &k2.velocity, &k3.velocity, &k4.velocity);
    let mut densities = combine(&state.densities, &k1.density, &k2.density, &k3.density, &k4.density);
    let time = state.time + dt;
    if radii.iter().chain(&densities).any(|v| !v.is_finite()) {
        return Err(DynamicsError::NonFinite { time });
    }
    if let Some(index) = radii.windows(2).position(|w| w[1] <= w[0]) {
        return Err(DynamicsError::CharacteristicCrossing { time, index });
    }
    let mut clamped = 0;
    for d in densities.iter_mut() {
        if *d < 0.0 {
            *d = 0.0;
            clamped += 1;
        }
    }
    Ok(Step {
        state: CharacteristicState { time, radii, densities, enclosed: state.enclosed.clone(), params: state.params },
        clamped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveOptions {
    pub t_final: f64,
    pub dt: f64,
    /// Record a sample every this many steps (the final state is always recorded).
    pub sample_every: usize,
    /// Equilibrium used for the distance diagnostic.
    pub reference: Option<RadialProfile>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { t_final: 10.0, dt: 1e-3, sample_every: 100, reference: None }
    }
}

/// One row of the diagnostics table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub time: f64,
    pub mass: f64,
    pub rho_max: f64,
    pub support_radius: f64,
    pub dist_to_equilibrium: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub params: ModelParams,
    pub samples: Vec<CharacteristicState>,
    pub diagnostics: Vec<Diagnostics>,
    pub steps: usize,
    pub clamped: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> &CharacteristicState {
        self.samples.last().expect("trajectory has at least the initial sample")
    }
}

fn diagnose(state: &CharacteristicState, reference: Option<&RadialProfile>) -> Diagnostics {
    Diagnostics {
        time: state.time,
        mass: state.mass(),
        rho_max: state.rho_max(),
        support_radius: state.support_radius(),
        dist_to_equilibrium: reference.map(|r| state.distance_to(r)),
    }
}

/// Integrates from `initial` to `t_final` with fixed steps (the last one shortened if needed).
pub fn evolve(initial: &RadialProfile, params: &ModelParams, opts: &EvolveOptions) -> Result<Trajectory, DynamicsError> {
    evolve_state(CharacteristicState::from_profile(initial, params), opts)
}

pub fn evolve_state(initial: CharacteristicState, opts: &EvolveOptions) -> Result<Trajectory, DynamicsError> {
    if !(opts.dt.is_finite() && opts.dt > 0.0) {
        return Err(DynamicsError::InvalidStep(opts.dt));
    }
    if !(opts.t_final.is_finite() && opts.t_final >= 0.0) {
        return Err(DynamicsError::InvalidState(format!("t_final must be nonnegative, got {}", opts.t_final)));
    }
    if initial.len() < 2 {
        return Err(DynamicsError::InvalidState("need at least two particles".into()));
    }
    let params = initial.params;
    let flow = FlowField::new(&params)?;
    let reference = opts.reference.as_ref();
    let every = opts.sample_every.max(1);
    let full = (opts.t_final / opts.dt * (1.0 + 1e-12)).floor() as usize;
    let rest = opts.t_final - full as f64 * opts.dt;
    let total = if rest > 1e-12 * opts.dt.max(opts.t_final) { full + 1 } else { full };
    let mut state = initial;
    let mut samples = vec![state.clone()];
    let mut diagnostics = vec![diagnose(&state, reference)];
    let mut clamped = 0;
    for step in 1..=total {
        let dt = if step <= full { opts.dt } else { rest };
        let next = step_rk4(&flow, &state, dt)?;
        clamped += next.clamped;
        state = next.state;
        if step == total {
            state.time = opts.t_final;
        }
        if step % every == 0 || step == total {
            diagnostics.push(diagnose(&state, reference));
            samples.push(state.clone());
        }
    }
    Ok(Trajectory { params, samples, diagnostics, steps: total, clamped })
}

/// Mass drift, centre of mass and the density ceiling.
#[derive(Debug, Clone, PartialEq)]
pub struct ConservationReport {
    pub initial_mass: f64,
    pub max_relative_mass_drift: f64,
    /// Identically zero for radial data.
    pub centre_of_mass: f64,
    /// (t, ρ_max) at every diagnostics row.
    pub rho_max: Vec<(f64, f64)>,
    /// C^{n/(n+q−2)} with C = nω_n + M(n+q−2), for q < 2.
    pub ceiling: Option<f64>,
    /// Whether ρ_max stays below the ceiling over the second half of the run.
    pub ceiling_respected: Option<bool>,
}

/// A-priori density bound C^{n/(n+q−2)}, C = nω_n + M(n+q−2), available for q < 2.
pub fn density_ceiling(params: &ModelParams) -> Option<f64> {
    if params.q() >= 2.0 {
        return None;
    }
    let eps = params.eps();
    let c = GeometryConstants::new(params.n()).mass_factor() + params.mass() * eps;
    Some(c.powf(params.n() as f64 / eps))
}

pub fn conservation_report(trajectory: &Trajectory) -> ConservationReport {
    let d = &trajectory.diagnostics;
    let m0 = d[0].mass;
    let drift = d.iter().map(|x| ((x.mass - m0) / m0).abs()).fold(0.0, f64::max);
    let ceiling = density_ceiling(&trajectory.params);
    let t_end = d.last().map(|x| x.time).unwrap_or(0.0);
    let ceiling_respected = ceiling.map(|c| d.iter().filter(|x| x.time >= 0.5 * t_end).all(|x| x.rho_max <= c));
    ConservationReport {
        initial_mass: m0,
        max_relative_mass_drift: drift,
        centre_of_mass: 0.0,
        rho_max: d.iter().map(|x| (x.time, x.rho_max)).collect(),
        ceiling,
        ceiling_respected,
    }
}

/// (0.2 − 20r² + 1000r⁴)·exp(−40r²)/c on [0, r_max] with c fixing the mass to M.
pub fn fig2_initial(params: &ModelParams, intervals: usize, r_max: f64) -> Result<RadialProfile, DynamicsError> {
    let grid = RadialGrid::uniform(r_max, intervals)?;
    let raw = RadialProfile::from_fn(grid, |r| {
        let r2 = r * r;
        (0.2 - 20.0 * r2 + 1000.0 * r2 * r2) * (-40.0 * r2).exp()
    })?;
    let m = mass(&raw, params.n());
    Ok(raw.scaled_values(params.mass() / m)?)
}

/// Constant density of mass M on [0, radius].
pub fn uniform_ball(params: &ModelParams, intervals: usize, radius: f64) -> Result<RadialProfile, DynamicsError> {
    let raw = RadialProfile::from_fn(RadialGrid::uniform(radius, intervals)?, |_| 1.0)?;
    let m = mass(&raw, params.n());
    Ok(raw.scaled_values(params.mass() / m)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{solve_equilibrium, PowerOptions};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn q2_velocity_outside_support() {
        let p = ModelParams::new(3, 2.0, 1.0).unwrap();
        let a = 0.5;
        let mut profile = uniform_ball(&p, 50, a).unwrap();
        let grid = RadialGrid::uniform(1.0, 100).unwrap();
        let c = profile.values()[0];
        profile = RadialProfile::from_fn(grid, |r| if r <= a + 1e-12 { c } else { 0.0 }).unwrap();
        let state = CharacteristicState::from_profile(&profile, &p);
        let m = state.mass();
        let v = radial_velocity(&state, 100).unwrap();
        assert_relative_eq!(v, m / (4.0 * PI) - m, max_relative = 1e-10);
    }

    #[test]
    fn q2_uniform_density_rate() {
        let p = ModelParams::new(3, 2.0, 1.0).unwrap();
        let profile = uniform_ball(&p, 40, 0.3).unwrap();
        let state = CharacteristicState::from_profile(&profile, &p);
        let c = profile.values()[0];
        let m = state.mass();
        for i in [0, 10, 40] {
            assert_relative_eq!(density_rhs(&state, i).unwrap(), -c * (c - 3.0 * m), max_relative = 1e-10);
        }
    }

    #[test]
    fn zero_density_gives_zero_rates() {
        let p = ModelParams::new(3, 1.5, 1.0).unwrap();
        let profile = RadialProfile::from_fn(RadialGrid::uniform(1.0, 10).unwrap(), |_| 0.0).unwrap();
        let state = CharacteristicState::from_profile(&profile, &p);
        for i in 0..=10 {
            assert_eq!(radial_velocity(&state, i).unwrap(), 0.0);
            assert_eq!(density_rhs(&state, i).unwrap(), 0.0);
        }
    }

    #[test]
    fn equilibrium_is_nearly_stationary() {
        for q in [1.5, 4.0] {
            let p = ModelParams::new(3, q, 1.0).unwrap();
            let eq = solve_equilibrium(&p, 100, PowerOptions::default()).unwrap();
            let state = CharacteristicState::from_profile(&eq.profile, &p);
            let flow = FlowField::new(&p).unwrap();
            let rates = flow.rates(&state.radii, &state.densities, &state.enclosed);
            let rmax = state.rho_max();
            let vscale = state.enclosed.last().unwrap() / state.radii.last().unwrap().powi(2);
            for i in 1..state.len() - 1 {
                assert!(rates.velocity[i].abs() <= 1e-3 * vscale, "q={q} i={i} v={}", rates.velocity[i]);
                assert!(rates.density[i].abs() <= 1e-3 * rmax * rmax, "q={q} i={i}");
            }
        }
    }

    #[test]
    fn zero_step_is_identity() {
        let p = ModelParams::new(3, 1.5, 1.0).unwrap();
        let state = CharacteristicState::from_profile(&fig2_initial(&p, 40, 0.8).unwrap(), &p);
        let flow = FlowField::new(&p).unwrap();
        assert_eq!(step_rk4(&flow, &state, 0.0).unwrap().state, state);
        assert!(step_rk4(&flow, &state, -1.0).is_err());
    }

    #[test]
    fn t_final_zero_echoes_initial() {
        let p = ModelParams::new(3, 1.5, 1.0).unwrap();
        let init = fig2_initial(&p, 20, 0.8).unwrap();
        let traj = evolve(&init, &p, &EvolveOptions { t_final: 0.0, ..Default::default() }).unwrap();
        assert_eq!(traj.samples.len(), 1);
        assert_eq!(traj.samples[0].densities, init.values());
        assert_eq!(traj.steps, 0);
    }

    #[test]
    fn fig2_datum_has_requested_mass() {
        let p = ModelParams::new(3, 1.5, 2.5).unwrap();
        let init = fig2_initial(&p, 100, 0.8).unwrap();
        assert_relative_eq!(mass(&init, 3), 2.5, max_relative = 1e-13);
        assert!(init.values().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn ceiling_formula() {
        let p = ModelParams::new(3, 1.5, 1.0).unwrap();
        let c: f64 = 4.0 * PI + 2.5;
        assert_relative_eq!(density_ceiling(&p).unwrap(), c.powf(1.2), max_relative = 1e-14);
        assert!(density_ceiling(&ModelParams::new(3, 2.0, 1.0).unwrap()).is_none());
    }

    #[test]
    fn short_run_conserves_mass() {
        let p = ModelParams::new(1, 3.0, 1.0).unwrap();
        let init = fig2_initial(&p, 60, 0.8).unwrap();
        let traj = evolve(&init, &p, &EvolveOptions { t_final: 0.05, dt: 1e-3, sample_every: 10, reference: None }).unwrap();
        let rep = conservation_report(&traj);
        assert!(rep.max_relative_mass_drift < 1e-5, "{}", rep.max_relative_mass_drift);
        assert_eq!(rep.centre_of_mass, 0.0);
        assert_eq!(traj.diagnostics.len(), 6);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(8))]

            #[test]
            fn short_runs_keep_order_and_mass(s in 0.0f64..1.0, n in prop::sample::select(vec![1usize, 3]), mass_in in 0.2f64..4.0) {
                let q = 3.0 - n as f64 - 0.9 + 10.0 * s;
                let p = ModelParams::new(n, q, mass_in).unwrap();
                let initial = fig2_initial(&p, 60, 0.8).unwrap();
                let t_final = 0.01 / mass_in;
                let opts = EvolveOptions { t_final, dt: t_final / 20.0, sample_every: 5, reference: None };
                let traj = evolve(&initial, &p, &opts).unwrap();
                let last = traj.final_state();
                prop_assert!(last.radii.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(last.densities.iter().all(|&d| d >= 0.0));
                prop_assert_eq!(&last.enclosed, &traj.samples[0].enclosed);
                prop_assert!(conservation_report(&traj).max_relative_mass_drift <= 1e-6);
            }
        }
    }
}
