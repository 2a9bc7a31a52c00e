//! Large-q and small-ε approximations of the principal eigenpair of T₁.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use statrs::function::beta::beta;
use statrs::function::gamma::{gamma, ln_gamma};

use crate::equilibrium::{support_radius, EigenSolution, SolverError};
use crate::kernels::{eval_i1, eval_i_explicit_3d};
use crate::model::{jacobian_weights, mass, GeometryConstants, RadialGrid, RadialProfile};
use crate::quadrature::{adaptive, endpoint_graded, gl16};

/// Coarse and refined large-q approximations.
#[derive(Debug, Clone, PartialEq)]
pub struct LargeQApprox {
    pub lambda_coarse: f64,
    pub lambda_refined: f64,
    pub r_coarse: f64,
    pub r_refined: f64,
    /// Approximate unit-mass profile on [0, 1].
    pub profile: RadialProfile,
}

/// Smallest q accepted by the large-q approximations.
pub const LARGE_Q_MIN: f64 = 5.0;

fn check_large_q(q: f64) -> Result<(), SolverError> {
    if !(q.is_finite() && q >= LARGE_Q_MIN) {
        return Err(SolverError::InvalidInput(format!("large-q approximations need q >= {LARGE_Q_MIN}, got {q}")));
    }
    Ok(())
}

/// (q/2^{q+1})((1+x)^{q−1} + (1−x)^{q−1}), which has unit mass on [−1, 1].
pub fn largeq_1d_profile_value(q: f64, x: f64) -> f64 {
    q / 2f64.powf(q + 1.0) * ((1.0 + x).powf(q - 1.0) + (1.0 - x).powf(q - 1.0))
}

/// λ ≈ 2^{q−1} (coarse) and 2^{q−2} (refined) in one dimension.
pub fn largeq_1d(q: f64, grid: &RadialGrid) -> Result<LargeQApprox, SolverError> {
    check_large_q(q)?;
    if (grid.r_edge() - 1.0).abs() > 1e-14 {
        return Err(SolverError::NotUnitGrid(grid.r_edge()));
    }
    let lambda_coarse = 2f64.powf(q - 1.0);
    let lambda_refined = 2f64.powf(q - 2.0);
    Ok(LargeQApprox {
        lambda_coarse,
        lambda_refined,
        r_coarse: support_radius(lambda_coarse, 1, q),
        r_refined: support_radius(lambda_refined, 1, q),
        profile: RadialProfile::from_fn(grid.clone(), |x| largeq_1d_profile_value(q, x))?,
    })
}

/// (n−1)ω_{n−1}·2^{n+q−3}·Γ((n−1)/2)Γ((n+q−1)/2)/Γ(n−1+q/2).
pub fn largeq_nd_coarse(n: usize, q: f64) -> Result<f64, SolverError> {
    if n < 2 {
        return Err(SolverError::InvalidInput(format!("the Beta/Gamma formula needs n >= 2, got {n}")));
    }
    let nf = n as f64;
    let lower = GeometryConstants::new(n - 1);
    let area = (nf - 1.0) * lower.omega_n;
    let (a, b, c) = (0.5 * (nf - 1.0), 0.5 * (nf + q - 1.0), nf - 1.0 + 0.5 * q);
    if c < 170.0 {
        Ok(area * 2f64.powf(nf + q - 3.0) * gamma(a) * (gamma(b) / gamma(c)))
    } else {
        Ok(area * ((nf + q - 3.0) * 2f64.ln() + ln_gamma(a) + ln_gamma(b) - ln_gamma(c)).exp())
    }
}

/// Stirling form of the coarse eigenvalue, Γ((n+q−1)/2)/Γ(n−1+q/2) ≈ (q/2)^{−(n−1)/2}.
pub fn largeq_nd_coarse_stirling(n: usize, q: f64) -> f64 {
    let nf = n as f64;
    let area = (nf - 1.0) * GeometryConstants::new(n - 1).omega_n;
    area * 2f64.powf(nf + q - 3.0) * gamma(0.5 * (nf - 1.0)) * (0.5 * q).powf(-0.5 * (nf - 1.0))
}

/// g(r) = ∫₀^π sin^{n−2}θ (√(1−r²sin²θ) − r cosθ)^{n+q−2} dθ, proportional to T₁1.
pub fn largeq_nd_shape(n: usize, q: f64, r: f64) -> f64 {
    let alpha = n as f64 + q - 2.0;
    let sp = n as i32 - 2;
    let f = |t: f64| {
        let (s, c) = t.sin_cos();
        let root = (1.0 - r * r * s * s).max(0.0).sqrt();
        let base = if c > 0.0 { (1.0 - r * r) / (root + r * c) } else { root - r * c };
        s.powi(sp) * base.max(0.0).powf(alpha)
    };
    let half = 0.5 * PI;
    adaptive(&f, 0.0, half, 1e-14) + adaptive(&f, half, PI, 1e-14 * 2f64.powf(alpha))
}

/// g(1) = 2^{n+q−3}·B((n−1)/2, (n+q−1)/2).
pub fn largeq_nd_shape_at_one(n: usize, q: f64) -> f64 {
    let nf = n as f64;
    2f64.powf(nf + q - 3.0) * beta(0.5 * (nf - 1.0), 0.5 * (nf + q - 1.0))
}

/// Normalisation constant C with n·ω_n ∫₀¹ r^{n−1} C·g(r) dr = 1.
pub fn largeq_nd_normalisation(n: usize, q: f64) -> f64 {
    let sp = n as i32 - 1;
    let g1 = largeq_nd_shape_at_one(n, q);
    let f = |r: f64| r.powi(sp) * largeq_nd_shape(n, q, r);
    let m = GeometryConstants::new(n).sphere_area * adaptive(&f, 0.0, 1.0, 1e-12 * g1);
    1.0 / m
}

/// Unit-mass profile C·g(r) on `grid`.
pub fn largeq_nd_profile(n: usize, q: f64, grid: &RadialGrid) -> Result<RadialProfile, SolverError> {
    if n < 2 {
        return Err(SolverError::InvalidInput(format!("the boundary-concentrated profile needs n >= 2, got {n}")));
    }
    if (grid.r_edge() - 1.0).abs() > 1e-14 {
        return Err(SolverError::NotUnitGrid(grid.r_edge()));
    }
    let c = largeq_nd_normalisation(n, q);
    Ok(RadialProfile::from_fn(grid.clone(), |r| c * largeq_nd_shape(n, q, r))?)
}

/// Laplace-method comparison curve C·(1+r)^{n+q−2}·½Γ((n−1)/2)·((n+q−2)r/2)^{−(n−1)/2}, r > 0,
/// with the same constant C as [`largeq_nd_profile`].
pub fn laplace_profile(n: usize, q: f64, r: f64) -> f64 {
    let nf = n as f64;
    let alpha = nf + q - 2.0;
    let c = largeq_nd_normalisation(n, q);
    c * (1.0 + r).powf(alpha) * 0.5 * gamma(0.5 * (nf - 1.0)) * (0.5 * alpha * r).powf(-0.5 * (nf - 1.0))
}

/// Second power-method iterate λ⁽²⁾ = (T₁g)(1)/g(1) with g ∝ T₁1.
pub fn largeq_nd_refined(n: usize, q: f64) -> Result<f64, SolverError> {
    if n < 2 {
        return Err(SolverError::InvalidInput(format!("the refined eigenvalue needs n >= 2, got {n}")));
    }
    let geo = GeometryConstants::new(n);
    let scale = (n as f64 + q - 2.0) * geo.angular_prefactor.unwrap();
    let sp = n as i32 - 1;
    let kernel = |rp: f64| -> f64 {
        if n == 3 {
            eval_i_explicit_3d(1.0, rp, q).unwrap_or(f64::INFINITY)
        } else {
            eval_i1(rp, n, q).unwrap_or(f64::INFINITY)
        }
    };
    let f = |rp: f64| rp.powi(sp) * largeq_nd_shape(n, q, rp) * kernel(rp);
    let g1 = largeq_nd_shape_at_one(n, q);
    let top = 2f64.powf(q) * g1;
    let integral = adaptive(&f, 0.0, 0.5, 1e-13 * top) + adaptive(&f, 0.5, 1.0, 1e-13 * top);
    Ok(scale * integral / g1)
}

/// Coarse, refined and profile approximations for n ≥ 2.
pub fn largeq_nd(n: usize, q: f64, grid: &RadialGrid) -> Result<LargeQApprox, SolverError> {
    check_large_q(q)?;
    let lambda_coarse = largeq_nd_coarse(n, q)?;
    let lambda_refined = largeq_nd_refined(n, q)?;
    Ok(LargeQApprox {
        lambda_coarse,
        lambda_refined,
        r_coarse: support_radius(lambda_coarse, n, q),
        r_refined: support_radius(lambda_refined, n, q),
        profile: largeq_nd_profile(n, q, grid)?,
    })
}

/// Options for the inverse iteration of the O(ε) problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseOptions {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for InverseOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_sweeps: 200 }
    }
}

/// Limiting profile ρ⁽⁰⁾ and first correction λ₁.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallEpsLimit {
    pub n: usize,
    /// Unit-mass ρ⁽⁰⁾ on [0, 1] with ρ⁽⁰⁾(1) = 0.
    pub rho0: RadialProfile,
    /// Nodes of the grid the problem was solved on ([−1, 1] for n = 1, [0, 1] otherwise).
    pub nodes: Vec<f64>,
    /// ρ⁽⁰⁾ at `nodes`.
    pub values: Vec<f64>,
    /// Eigenvalue of the discrete O(ε) operator.
    pub lambda1: f64,
    /// λ₁ from the integrated form ∫ρ⁽⁰⁾ℓ / ∫ρ⁽⁰⁾.
    pub lambda1_quotient: f64,
    pub sweeps: usize,
}

/// λ_ε ≈ λ₀ + λ₁ε + λ₂ε².
#[derive(Debug, Clone, PartialEq)]
pub struct SmallEpsExpansion {
    pub n: usize,
    pub lambda0: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub rho0: RadialProfile,
}

impl SmallEpsExpansion {
    pub fn lambda_at(&self, eps: f64) -> f64 {
        self.lambda0 + self.lambda1 * eps + self.lambda2 * eps * eps
    }

    pub fn radius_at(&self, eps: f64) -> f64 {
        self.lambda_at(eps).powf(-1.0 / eps)
    }
}

/// Leading eigenvalue λ₀: 2 for n = 1, n·ω_n otherwise.
pub fn smalleps_lambda0(n: usize) -> f64 {
    GeometryConstants::new(n).mass_factor()
}

#[derive(Clone, Copy, PartialEq)]
enum Weight {
    Plain,
    Log,
}

/// Difference operator (Dρ)(xᵢ) = ∫ K(xᵢ, y)(ρ(y) − ρ(xᵢ)) dy for piecewise-linear ρ.
/// `kernel(i, y)` is the full kernel, `near(i, y)` is |y − xᵢ|·K used on adjacent intervals.
fn difference_operator<K, N>(nodes: &[f64], rows: &[usize], cols: &[usize], kernel: K, near: N) -> DMatrix<f64>
where
    K: Fn(usize, f64) -> f64,
    N: Fn(usize, f64) -> f64,
{
    let m = nodes.len();
    let mut full = DMatrix::<f64>::zeros(rows.len(), m);
    for (ri, &i) in rows.iter().enumerate() {
        for k in 0..m - 1 {
            let (a, b) = (nodes[k], nodes[k + 1]);
            let h = b - a;
            if k == i || k + 1 == i {
                let (other, start, end) = if k == i { (k + 1, a, b) } else { (k, b, a) };
                let c = endpoint_graded(start, end, |y| near(i, y)) * (end - start).signum() / h;
                full[(ri, other)] += c;
                full[(ri, i)] -= c;
            } else {
                let mut wl = 0.0;
                let mut wr = 0.0;
                for (y, w) in gl16().points(a, b) {
                    let kv = w * kernel(i, y);
                    let t = (y - a) / h;
                    wl += kv * (1.0 - t);
                    wr += kv * t;
                }
                full[(ri, k)] += wl;
                full[(ri, k + 1)] += wr;
                full[(ri, i)] -= wl + wr;
            }
        }
    }
    let mut out = DMatrix::<f64>::zeros(rows.len(), cols.len());
    for (cj, &j) in cols.iter().enumerate() {
        out.set_column(cj, &full.column(j));
    }
    out
}

struct Discretisation {
    n: usize,
    nodes: Vec<f64>,
    unknowns: Vec<usize>,
    weights: Vec<f64>,
    potential: Vec<f64>,
}

impl Discretisation {
    fn new(n: usize, intervals: usize) -> Result<Self, SolverError> {
        if intervals < 2 {
            return Err(SolverError::InvalidInput("need at least two intervals".into()));
        }
        if n == 1 {
            let m = 2 * intervals;
            let h = 1.0 / intervals as f64;
            let mut nodes: Vec<f64> = (0..=m).map(|k| -1.0 + k as f64 * h).collect();
            nodes[intervals] = 0.0;
            nodes[m] = 1.0;
            let unknowns: Vec<usize> = (1..m).collect();
            let mut weights = vec![h; m + 1];
            weights[0] = 0.5 * h;
            weights[m] = 0.5 * h;
            let potential = unknowns.iter().map(|&i| (1.0 - nodes[i] * nodes[i]).ln()).collect();
            Ok(Self { n, nodes, unknowns, weights, potential })
        } else if n == 2 || n == 3 {
            let grid = RadialGrid::uniform(1.0, intervals)?;
            let nodes = grid.nodes().to_vec();
            let unknowns: Vec<usize> = (0..intervals).collect();
            let geo = GeometryConstants::new(n);
            let weights = jacobian_weights(&nodes, n).iter().map(|w| geo.sphere_area * w).collect();
            let potential = unknowns
                .iter()
                .map(|&i| 0.5 * geo.sphere_area * (1.0 - nodes[i] * nodes[i]).ln())
                .collect();
            Ok(Self { n, nodes, unknowns, weights, potential })
        } else {
            Err(SolverError::InvalidInput(format!("the small-eps problem is implemented for n in {{1, 2, 3}}, got {n}")))
        }
    }

    fn operator(&self, weight: Weight) -> DMatrix<f64> {
        let nodes = &self.nodes;
        let u = &self.unknowns;
        match self.n {
            1 => {
                let kernel = |i: usize, y: f64| {
                    let d = (y - nodes[i]).abs();
                    match weight {
                        Weight::Plain => 1.0 / d,
                        Weight::Log => d.ln() / d,
                    }
                };
                let near = |i: usize, y: f64| match weight {
                    Weight::Plain => 1.0,
                    Weight::Log => (y - nodes[i]).abs().ln(),
                };
                difference_operator(nodes, u, u, kernel, near)
            }
            n => {
                let p = GeometryConstants::new(n).angular_prefactor.unwrap();
                let kernel = move |i: usize, y: f64| radial_kernel(n, p, weight, nodes[i], y);
                let near = move |i: usize, y: f64| (y - nodes[i]).abs() * radial_kernel(n, p, weight, nodes[i], y);
                difference_operator(nodes, u, u, kernel, near)
            }
        }
    }

    /// Σ wᵢ f(ρᵢ) over unknown nodes.
    fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.unknowns.iter().enumerate().map(|(k, &i)| self.weights[i] * a[k] * b[k]).sum()
    }

    fn sum(&self, a: &[f64]) -> f64 {
        self.unknowns.iter().enumerate().map(|(k, &i)| self.weights[i] * a[k]).sum()
    }

    fn quotient(&self, rho: &[f64]) -> f64 {
        self.dot(rho, &self.potential) / self.sum(rho)
    }
}

/// P·r′^{n−1}·I(r, r′) at q = 2 − n (plain) and its q-derivative (log), n ∈ {2, 3}.
fn radial_kernel(n: usize, p: f64, weight: Weight, r: f64, rp: f64) -> f64 {
    if n == 3 {
        if r == 0.0 {
            return match weight {
                Weight::Plain => 2.0 * p / rp,
                Weight::Log => 2.0 * p * rp.ln() / rp,
            };
        }
        let a = r + rp;
        let b = (r - rp).abs();
        match weight {
            Weight::Plain => 2.0 * p * rp * rp / (r.max(rp) * a * b),
            Weight::Log => p * rp / r * ((1.0 + b.ln()) / b - (1.0 + a.ln()) / a),
        }
    } else {
        if r == 0.0 {
            return match weight {
                Weight::Plain => p * PI / rp,
                Weight::Log => p * PI * rp.ln() / rp,
            };
        }
        let d = (r * r - rp * rp).abs();
        match weight {
            Weight::Plain => p * rp * PI / d,
            Weight::Log => p * rp * PI / d * (d / r.max(rp)).ln(),
        }
    }
}

fn sup_normalise(v: &mut [f64]) {
    let s = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let sign = if v.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    for x in v.iter_mut() {
        *x *= sign / s;
    }
}

fn solve_limit(
    disc: &Discretisation,
    initial: Option<&RadialProfile>,
    opts: InverseOptions,
) -> Result<(Vec<f64>, f64, usize), SolverError> {
    let l = {
        let mut d = disc.operator(Weight::Plain);
        for k in 0..disc.unknowns.len() {
            d[(k, k)] += disc.potential[k];
        }
        d
    };
    let mut rho: Vec<f64> = disc
        .unknowns
        .iter()
        .map(|&i| {
            let x = disc.nodes[i];
            match initial {
                Some(p) => p.interpolate(x.abs() * p.grid().r_edge()),
                None => 1.0 - x * x,
            }
        })
        .collect();
    if rho.iter().all(|v| *v <= 0.0) {
        return Err(SolverError::InvalidInitial);
    }
    sup_normalise(&mut rho);
    let m = rho.len();
    let mut change = f64::INFINITY;
    for sweep in 1..=opts.max_sweeps {
        let shift = disc.quotient(&rho);
        let mut a = l.clone();
        for k in 0..m {
            a[(k, k)] -= shift;
        }
        let y = a
            .lu()
            .solve(&DVector::from_column_slice(&rho))
            .ok_or(SolverError::SingularShift(shift))?;
        let mut next: Vec<f64> = y.iter().cloned().collect();
        sup_normalise(&mut next);
        change = next.iter().zip(&rho).fold(0.0f64, |mx, (a, b)| mx.max((a - b).abs()));
        rho = next;
        if change <= opts.tol {
            let lr = &l * DVector::from_column_slice(&rho);
            let lambda1 = lr.dot(&DVector::from_column_slice(&rho)) / rho.iter().map(|b| b * b).sum::<f64>();
            return Ok((rho, lambda1, sweep));
        }
    }
    Err(SolverError::InverseNotConverged { sweeps: opts.max_sweeps, change })
}

fn finish_limit(disc: &Discretisation, rho: Vec<f64>, lambda1: f64, sweeps: usize) -> Result<SmallEpsLimit, SolverError> {
    let mut values = vec![0.0; disc.nodes.len()];
    for (k, &i) in disc.unknowns.iter().enumerate() {
        values[i] = rho[k].max(0.0);
    }
    let total: f64 = values.iter().zip(&disc.weights).map(|(v, w)| v * w).sum();
    for v in values.iter_mut() {
        *v /= total;
    }
    let radial: Vec<f64> = if disc.n == 1 {
        values[disc.nodes.len() / 2..].to_vec()
    } else {
        values.clone()
    };
    let intervals = radial.len() - 1;
    let rho0 = RadialProfile::new(RadialGrid::uniform(1.0, intervals)?, radial)?;
    let unknown_vals: Vec<f64> = disc.unknowns.iter().map(|&i| values[i]).collect();
    Ok(SmallEpsLimit {
        n: disc.n,
        rho0,
        nodes: disc.nodes.clone(),
        lambda1,
        lambda1_quotient: disc.quotient(&unknown_vals),
        values,
        sweeps,
    })
}

/// ρ⁽⁰⁾ and λ₁ of ∫(ρ(y)−ρ(x))/|y−x| dy = (λ₁ − ln(1−x²))ρ(x) on [−1, 1] with ρ(±1) = 0.
/// `intervals` is per half of [−1, 1]; `initial` is a profile on [0, R] sampled at |x|·R.
pub fn smalleps_limit_1d(
    intervals: usize,
    initial: Option<&RadialProfile>,
    opts: InverseOptions,
) -> Result<SmallEpsLimit, SolverError> {
    let disc = Discretisation::new(1, intervals)?;
    let (rho, lambda1, sweeps) = solve_limit(&disc, initial, opts)?;
    finish_limit(&disc, rho, lambda1, sweeps)
}

/// Radial analogue on the unit ball of dimension n ∈ {2, 3}, weight (nω_n/2)ln(1−r²).
pub fn smalleps_limit_nd(
    n: usize,
    intervals: usize,
    initial: Option<&RadialProfile>,
    opts: InverseOptions,
) -> Result<SmallEpsLimit, SolverError> {
    if n != 2 && n != 3 {
        return Err(SolverError::InvalidInput(format!("smalleps_limit_nd needs n in {{2, 3}}, got {n}")));
    }
    let disc = Discretisation::new(n, intervals)?;
    let (rho, lambda1, sweeps) = solve_limit(&disc, initial, opts)?;
    finish_limit(&disc, rho, lambda1, sweeps)
}

fn lambda2_from(disc: &Discretisation, values: &[f64], boundary_weight: impl Fn(f64) -> f64) -> f64 {
    let rho: Vec<f64> = disc.unknowns.iter().map(|&i| values[i]).collect();
    let dln = disc.operator(Weight::Log) * DVector::from_column_slice(&rho);
    let ell: Vec<f64> = disc.unknowns.iter().map(|&i| boundary_weight(disc.nodes[i])).collect();
    let rr = disc.dot(&rho, &rho);
    let cross = disc.dot(&rho, dln.as_slice());
    let pot: f64 = disc
        .unknowns
        .iter()
        .enumerate()
        .map(|(k, &i)| disc.weights[i] * ell[k] * rho[k] * rho[k])
        .sum();
    (cross + pot) / rr
}

/// λ₂ from the solvability condition in one dimension.
pub fn smalleps_lambda2_1d(limit: &SmallEpsLimit) -> Result<f64, SolverError> {
    if limit.n != 1 {
        return Err(SolverError::InvalidInput("expected a one-dimensional limit".into()));
    }
    let intervals = (limit.nodes.len() - 1) / 2;
    let disc = Discretisation::new(1, intervals)?;
    Ok(lambda2_from(&disc, &limit.values, |x| {
        let a = (1.0 - x).ln();
        let b = (1.0 + x).ln();
        0.5 * (a * a + b * b)
    }))
}

/// k⁽²⁾(r) = (nω_n / (2∫sin^{n−2})) ∫₀^π sin^{n−2}θ ln²(√(1−r²sin²θ) − r cosθ) dθ.
pub fn k2(n: usize, r: f64) -> f64 {
    let geo = GeometryConstants::new(n);
    let sp = n as i32 - 2;
    let f = |t: f64| {
        let (s, c) = t.sin_cos();
        let root = (1.0 - r * r * s * s).max(0.0).sqrt();
        let g = if c > 0.0 { (1.0 - r * r) / (root + r * c) } else { root - r * c };
        let l = g.ln();
        s.powi(sp) * l * l
    };
    let w = (1.0 - r * r).max(1e-300).sqrt();
    let mid = 0.5 * PI;
    let mut breaks = vec![0.0];
    let mut d = 0.5;
    while d > w && d > 1e-12 {
        breaks.push(mid - d);
        d *= 0.5;
    }
    breaks.push(mid);
    let left = breaks.clone();
    for b in left.iter().rev().skip(1) {
        breaks.push(PI - b);
    }
    let total: f64 = breaks.windows(2).map(|p| adaptive(&f, p[0], p[1], 1e-13)).sum();
    geo.sphere_area / (2.0 * geo.angular_norm.unwrap()) * total
}

/// λ₂ from the solvability condition for n ∈ {2, 3}.
pub fn smalleps_lambda2_nd(limit: &SmallEpsLimit) -> Result<f64, SolverError> {
    if limit.n != 2 && limit.n != 3 {
        return Err(SolverError::InvalidInput("expected a two- or three-dimensional limit".into()));
    }
    let disc = Discretisation::new(limit.n, limit.nodes.len() - 1)?;
    let n = limit.n;
    Ok(lambda2_from(&disc, &limit.values, |r| k2(n, r)))
}

/// λ₀, λ₁, λ₂ and ρ⁽⁰⁾ for n ∈ {1, 2, 3}.
pub fn smalleps_expansion(
    n: usize,
    intervals: usize,
    initial: Option<&RadialProfile>,
    opts: InverseOptions,
) -> Result<SmallEpsExpansion, SolverError> {
    let (limit, lambda2) = if n == 1 {
        let l = smalleps_limit_1d(intervals, initial, opts)?;
        let l2 = smalleps_lambda2_1d(&l)?;
        (l, l2)
    } else {
        let l = smalleps_limit_nd(n, intervals, initial, opts)?;
        let l2 = smalleps_lambda2_nd(&l)?;
        (l, l2)
    };
    Ok(SmallEpsExpansion {
        n,
        lambda0: smalleps_lambda0(n),
        lambda1: limit.lambda1,
        lambda2,
        rho0: limit.rho0,
    })
}

/// ρ̄₁ rescaled to unit mass on [0, 1].
pub fn unit_mass_eigenfunction(sol: &EigenSolution, n: usize) -> Result<RadialProfile, SolverError> {
    let m = mass(&sol.rho1, n);
    Ok(sol.rho1.scaled_values(1.0 / m)?)
}

/// One ε sample: unit-mass ρ̄₁^ε at the centre and the edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySample {
    pub eps: f64,
    pub rho_centre: f64,
    pub rho_edge: f64,
}

/// Least-squares fits ρ̄₁^ε(1) ≈ √(aε) and ρ̄₁^ε(0) ≈ b + cε.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// RMS residual of the square-root law for the edge value.
    pub sqrt_residual: f64,
    /// RMS residual of the competing law ρ̄₁^ε(1) ≈ βε.
    pub linear_edge_residual: f64,
    pub linear_edge_slope: f64,
    /// RMS residual of the centre fit.
    pub centre_residual: f64,
}

pub fn boundary_scaling_fit(samples: &[BoundarySample]) -> Result<BoundaryFit, SolverError> {
    if samples.len() < 4 {
        return Err(SolverError::InvalidInput(format!("need at least 4 eps samples, got {}", samples.len())));
    }
    if samples.iter().any(|s| !(s.eps > 0.0 && s.eps <= 1.0)) {
        return Err(SolverError::InvalidInput("eps samples must lie in (0, 1]".into()));
    }
    let m = samples.len() as f64;
    let rms = |f: &dyn Fn(&BoundarySample) -> f64| (samples.iter().map(|s| f(s).powi(2)).sum::<f64>() / m).sqrt();
    let k = samples.iter().map(|s| s.rho_edge * s.eps.sqrt()).sum::<f64>() / samples.iter().map(|s| s.eps).sum::<f64>();
    let beta = samples.iter().map(|s| s.rho_edge * s.eps).sum::<f64>() / samples.iter().map(|s| s.eps * s.eps).sum::<f64>();
    let me = samples.iter().map(|s| s.eps).sum::<f64>() / m;
    let mc = samples.iter().map(|s| s.rho_centre).sum::<f64>() / m;
    let sxy: f64 = samples.iter().map(|s| (s.eps - me) * (s.rho_centre - mc)).sum();
    let sxx: f64 = samples.iter().map(|s| (s.eps - me).powi(2)).sum();
    let c = sxy / sxx;
    let b = mc - c * me;
    Ok(BoundaryFit {
        a: k * k,
        b,
        c,
        sqrt_residual: rms(&|s| s.rho_edge - k * s.eps.sqrt()),
        linear_edge_residual: rms(&|s| s.rho_edge - beta * s.eps),
        linear_edge_slope: beta,
        centre_residual: rms(&|s| s.rho_centre - b - c * s.eps),
    })
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::eval_i_explicit_3d;
    use crate::quadrature::geometric_breaks;
    use approx::assert_relative_eq;

    fn theta_integral<F: Fn(f64) -> f64>(f: F) -> f64 {
        let half = 0.5 * PI;
        adaptive(&f, 0.0, half, 1e-14) + adaptive(&f, half, PI, 1e-14)
    }

    fn peaked_theta_integral<F: Fn(f64) -> f64>(f: F, width: f64) -> f64 {
        let breaks = geometric_breaks(PI, 0.25 * width);
        let scale = f(0.0).abs() * width;
        breaks.windows(2).map(|p| adaptive(&f, p[0], p[1], 1e-13 * scale)).sum()
    }

    #[test]
    fn largeq_1d_examples() {
        let grid = RadialGrid::uniform(1.0, 100).unwrap();
        let a = largeq_1d(10.0, &grid).unwrap();
        assert_relative_eq!(a.r_refined, 2f64.powf(-8.0 / 9.0), max_relative = 1e-14);
        assert_relative_eq!(a.r_refined, 0.540030, epsilon = 1e-6);
        assert_relative_eq!(a.lambda_refined, 0.5 * a.lambda_coarse, max_relative = 1e-15);
        assert_relative_eq!(largeq_1d_profile_value(10.0, 1.0), 2.5, max_relative = 1e-13);
        assert_relative_eq!(largeq_1d_profile_value(10.0, 0.0), 0.009765625, max_relative = 1e-13);
        assert!(largeq_1d(4.0, &grid).is_err());
    }

    #[test]
    fn largeq_1d_profile_has_unit_mass() {
        for q in [5.0, 10.0, 20.0, 40.0] {
            let m = 2.0 * adaptive(&|x| largeq_1d_profile_value(q, x), 0.0, 1.0, 1e-14);
            assert_relative_eq!(m, 1.0, max_relative = 1e-10);
        }
    }

    #[test]
    fn coarse_closed_forms() {
        assert_relative_eq!(largeq_nd_coarse(3, 2.0).unwrap(), 4.0 * PI, max_relative = 1e-13);
        assert_relative_eq!(largeq_nd_coarse(3, 4.0).unwrap(), 32.0 * PI / 3.0, max_relative = 1e-13);
        assert_relative_eq!(largeq_nd_coarse(3, 4.0).unwrap(), 33.5103, epsilon = 1e-4);
        let sqrt_pi = PI.sqrt();
        let oracle = 2.0 * 8.0 * sqrt_pi * (0.75 * sqrt_pi) / 2.0;
        assert_relative_eq!(largeq_nd_coarse(2, 4.0).unwrap(), oracle, max_relative = 1e-13);
        assert_relative_eq!(oracle, 6.0 * PI, max_relative = 1e-14);
        for q in [10.0, 40.0, 400.0] {
            let exact = (4.0 * PI * (q * 2f64.ln()).exp()) / (q + 2.0);
            assert_relative_eq!(largeq_nd_coarse(3, q).unwrap(), exact, max_relative = 1e-11);
        }
        assert!(largeq_nd_coarse(1, 10.0).is_err());
    }

    #[test]
    fn coarse_equals_operator_on_constant_at_edge() {
        for q in [4.0, 10.0] {
            let scale = (q + 1.0) * 2.0 * PI;
            let f = |rp: f64| rp * rp * eval_i_explicit_3d(1.0, rp, q).unwrap();
            let t1 = scale * (adaptive(&f, 0.0, 0.5, 1e-14) + adaptive(&f, 0.5, 1.0, 1e-14));
            assert_relative_eq!(t1, largeq_nd_coarse(3, q).unwrap(), max_relative = 1e-10);
        }
    }

    #[test]
    fn stirling_form_approaches_coarse() {
        let rel = |q: f64| (largeq_nd_coarse_stirling(3, q) / largeq_nd_coarse(3, q).unwrap() - 1.0).abs();
        assert!(rel(1000.0) < 1e-2);
        assert!(rel(1000.0) < rel(100.0));
    }

    #[test]
    fn shape_endpoints() {
        for n in [2usize, 3] {
            let norm = GeometryConstants::new(n).angular_norm.unwrap();
            assert_relative_eq!(largeq_nd_shape(n, 10.0, 0.0), norm, max_relative = 1e-12);
            for q in [5.0, 10.0, 20.0] {
                assert_relative_eq!(largeq_nd_shape(n, q, 1.0), largeq_nd_shape_at_one(n, q), max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn nd_profile_is_increasing_with_unit_mass() {
        let grid = RadialGrid::uniform(1.0, 2000).unwrap();
        let p = largeq_nd_profile(3, 20.0, &grid).unwrap();
        assert!(p.values().windows(2).all(|w| w[1] > w[0]));
        assert_relative_eq!(mass(&p, 3), 1.0, max_relative = 1e-5);
        let c = largeq_nd_normalisation(3, 20.0);
        let m = 4.0 * PI * adaptive(&|r: f64| r * r * c * largeq_nd_shape(3, 20.0, r), 0.0, 1.0, 1e-12);
        assert_relative_eq!(m, 1.0, max_relative = 1e-8);
    }

    #[test]
    fn laplace_curve_approaches_profile() {
        let error = |q: f64, r: f64| {
            let c = largeq_nd_normalisation(3, q);
            (laplace_profile(3, q, r) / (c * largeq_nd_shape(3, q, r)) - 1.0).abs()
        };
        for r in [0.3, 0.5, 0.8, 1.0] {
            assert!(error(200.0, r) < error(50.0, r));
            assert!(error(1000.0, r) < error(200.0, r));
            assert!(error(200.0, r) < 0.01);
        }
    }

    #[test]
    fn refined_eigenvalue() {
        assert_relative_eq!(largeq_nd_refined(3, 2.0).unwrap(), 4.0 * PI, max_relative = 1e-9);
        for q in [5.0, 10.0, 20.0, 40.0] {
            assert!(largeq_nd_refined(3, q).unwrap() <= largeq_nd_coarse(3, q).unwrap());
        }
        let grid = RadialGrid::uniform(1.0, 50).unwrap();
        let approx = largeq_nd(3, 10.0, &grid).unwrap();
        assert!(approx.r_refined > 0.0 && approx.r_refined < 1.0);
        assert!(approx.r_coarse > 0.0 && approx.r_coarse < 1.0);
        assert!(largeq_nd(3, 4.0, &grid).is_err());
    }

    #[test]
    fn leading_eigenvalues() {
        assert_eq!(smalleps_lambda0(1), 2.0);
        assert_relative_eq!(smalleps_lambda0(2), 2.0 * PI, max_relative = 1e-15);
        assert_relative_eq!(smalleps_lambda0(3), 4.0 * PI, max_relative = 1e-15);
    }

    #[test]
    fn limit_1d_profile() {
        let limit = smalleps_limit_1d(100, None, InverseOptions::default()).unwrap();
        let v = &limit.values;
        let m = v.len();
        assert_eq!(v[0], 0.0);
        assert_eq!(v[m - 1], 0.0);
        for k in 0..m {
            assert!((v[k] - v[m - 1 - k]).abs() <= 1e-10);
        }
        assert!((limit.rho0.values()[0] - 0.5944).abs() <= 0.01);
        assert_relative_eq!(mass(&limit.rho0, 1), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn quotients_are_scale_invariant() {
        let limit = smalleps_limit_1d(50, None, InverseOptions::default()).unwrap();
        let disc = Discretisation::new(1, 50).unwrap();
        let rho: Vec<f64> = disc.unknowns.iter().map(|&i| limit.values[i]).collect();
        let scaled: Vec<f64> = rho.iter().map(|v| 7.3 * v).collect();
        assert_relative_eq!(disc.quotient(&rho), disc.quotient(&scaled), max_relative = 1e-13);
        let ell = |x: f64| 0.5 * ((1.0 - x).ln().powi(2) + (1.0 + x).ln().powi(2));
        let big: Vec<f64> = limit.values.iter().map(|v| 7.3 * v).collect();
        assert_relative_eq!(lambda2_from(&disc, &limit.values, ell), lambda2_from(&disc, &big, ell), max_relative = 1e-12);
    }

    #[test]
    fn lambda2_is_grid_stable() {
        let l2 = |n: usize| {
            let limit = smalleps_limit_1d(n, None, InverseOptions::default()).unwrap();
            smalleps_lambda2_1d(&limit).unwrap()
        };
        let (a, b) = (l2(400), l2(800));
        assert!(((a - b) / b).abs() <= 1e-3, "{a} {b}");
    }

    #[test]
    fn log_kernels_match_angular_quadrature() {
        for n in [2usize, 3] {
            let p = GeometryConstants::new(n).angular_prefactor.unwrap();
            let sp = n as i32 - 2;
            for (r, rp) in [(0.3, 0.7), (0.8, 0.2), (0.5, 0.55), (0.9, 0.95)] {
                let dist2 = |t: f64| r * r + rp * rp - 2.0 * r * rp * t.cos();
                let width = (r - rp).abs() / (r * rp).sqrt();
                let plain = peaked_theta_integral(|t| t.sin().powi(sp) * dist2(t).powf(-0.5 * n as f64), width);
                let log = peaked_theta_integral(|t| t.sin().powi(sp) * dist2(t).powf(-0.5 * n as f64) * 0.5 * dist2(t).ln(), width);
                let jac = p * rp.powi(n as i32 - 1);
                assert_relative_eq!(radial_kernel(n, p, Weight::Plain, r, rp), jac * plain, max_relative = 1e-9);
                assert_relative_eq!(radial_kernel(n, p, Weight::Log, r, rp), jac * log, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn limit_3d_profile() {
        let limit = smalleps_limit_nd(3, 60, None, InverseOptions::default()).unwrap();
        let v = limit.rho0.values();
        assert_eq!(*v.last().unwrap(), 0.0);
        assert!(v.windows(2).all(|w| w[1] <= w[0]));
        assert_relative_eq!(mass(&limit.rho0, 3), 1.0, max_relative = 1e-12);
        assert!(smalleps_limit_nd(4, 60, None, InverseOptions::default()).is_err());
    }

    #[test]
    fn k2_values() {
        assert!(k2(3, 0.0).abs() < 1e-14);
        let direct = |n: usize, r: f64| {
            let geo = GeometryConstants::new(n);
            let sp = n as i32 - 2;
            let f = |t: f64| {
                let (s, c) = t.sin_cos();
                let g = (1.0 - r * r * s * s).sqrt() - r * c;
                s.powi(sp) * g.ln().powi(2)
            };
            geo.sphere_area / (2.0 * geo.angular_norm.unwrap()) * theta_integral(f)
        };
        for n in [2usize, 3] {
            for r in [0.3, 0.6] {
                assert_relative_eq!(k2(n, r), direct(n, r), max_relative = 1e-9);
            }
        }
        assert!(k2(3, 0.99) > k2(3, 0.5));
    }

    #[test]
    fn boundary_fit_recovers_exact_laws() {
        let samples: Vec<BoundarySample> = [0.05, 0.1, 0.2, 0.4]
            .iter()
            .map(|&eps| BoundarySample { eps, rho_centre: 0.5944 - 0.0936 * eps, rho_edge: (0.253 * eps).sqrt() })
            .collect();
        let fit = boundary_scaling_fit(&samples).unwrap();
        assert_relative_eq!(fit.a, 0.253, max_relative = 1e-12);
        assert_relative_eq!(fit.b, 0.5944, max_relative = 1e-12);
        assert_relative_eq!(fit.c, -0.0936, max_relative = 1e-10);
        assert!(fit.sqrt_residual < 1e-12);
        assert!(fit.linear_edge_residual > fit.sqrt_residual);
        assert!(boundary_scaling_fit(&samples[..3]).is_err());
        let mut bad = samples.clone();
        bad[0].eps = 1.5;
        assert!(boundary_scaling_fit(&bad).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn refined_is_half_coarse_in_one_dimension(q in 5.0f64..200.0) {
                let a = largeq_1d(q, &RadialGrid::uniform(1.0, 20).unwrap()).unwrap();
                prop_assert!((a.lambda_refined - 0.5 * a.lambda_coarse).abs() <= 1e-14 * a.lambda_coarse);
                prop_assert!(a.r_refined > a.r_coarse - 1e-15);
                prop_assert!(a.r_refined < 1.0);
            }

            #[test]
            fn coarse_three_dimensional_closed_form(q in 2.0f64..300.0) {
                let v = largeq_nd_coarse(3, q).unwrap();
                let exact = 4.0 * PI * 2f64.powf(q) / (q + 2.0);
                prop_assert!((v - exact).abs() <= 1e-11 * exact);
            }

            #[test]
            fn largeq_1d_profile_is_even_and_positive(q in 5.0f64..60.0, x in 0.0f64..1.0) {
                let a = largeq_1d_profile_value(q, x);
                prop_assert!(a > 0.0);
                prop_assert!((a - largeq_1d_profile_value(q, -x)).abs() <= 1e-14 * a);
            }
        }
    }
}
