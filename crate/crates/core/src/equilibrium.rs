//! The eigenvalue problem T₁ρ̄₁ = λρ̄₁, support radius R = λ^{−1/(n+q−2)} and mass-M steady states.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::kernels::{KernelError, RadialKernel};
use crate::model::{mass, ModelError, ModelParams, RadialGrid, RadialProfile};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("power method did not converge after {iterations} iterations (last residual {residual:e}, lambda {lambda})")]
    NotConverged { iterations: usize, residual: f64, lambda: f64 },
    #[error("inverse iteration did not converge after {sweeps} sweeps (last change {change:e})")]
    InverseNotConverged { sweeps: usize, change: f64 },
    #[error("initial iterate must be strictly positive and match the operator grid")]
    InvalidInitial,
    #[error("operator grid must span [0, 1], got [0, {0}]")]
    NotUnitGrid(f64),
    #[error("singular linear system at shift {0}")]
    SingularShift(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Dense discretisation of the radial operator on a grid.
#[derive(Debug, Clone)]
pub struct RadialOperator {
    pub params: ModelParams,
    pub grid: RadialGrid,
    pub matrix: DMatrix<f64>,
}

impl RadialOperator {
    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(values);
        (&self.matrix * x).as_slice().to_vec()
    }
}

/// Matrix of (n+q−2)·P·∫₀^{R_edge} r′^{n−1}I(r,r′)ρ(r′)dr′ at the nodes of `grid`
/// (folded kernel times q−1 for n = 1).
pub fn assemble_radial(grid: &RadialGrid, params: &ModelParams) -> Result<RadialOperator, SolverError> {
    let kernel = RadialKernel::new(params)?;
    let scale = params.operator_scale();
    let m = grid.len();
    let mut matrix = DMatrix::zeros(m, m);
    for i in 0..m {
        let row = kernel.row_weights(grid.nodes(), i);
        for (j, w) in row.into_iter().enumerate() {
            matrix[(i, j)] = scale * w;
        }
    }
    Ok(RadialOperator { params: *params, grid: grid.clone(), matrix })
}

/// The operator T₁ on a grid over [0, 1].
pub fn assemble_t1(grid: &RadialGrid, params: &ModelParams) -> Result<RadialOperator, SolverError> {
    if (grid.r_edge() - 1.0).abs() > 1e-14 {
        return Err(SolverError::NotUnitGrid(grid.r_edge()));
    }
    assemble_radial(grid, params)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 200_000 }
    }
}

/// Principal eigenpair of T₁.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSolution {
    pub lambda: f64,
    /// Eigenfunction on [0, 1] with sup-norm 1.
    pub rho1: RadialProfile,
    pub radius: f64,
    pub iterations: usize,
    /// ‖T₁ρ̄₁ − λρ̄₁‖_∞ / (λ‖ρ̄₁‖_∞).
    pub residual: f64,
}

/// Power iteration with sup-norm normalisation.
pub fn power_method(
    op: &RadialOperator,
    initial: &RadialProfile,
    opts: PowerOptions,
) -> Result<EigenSolution, SolverError> {
    if initial.grid() != &op.grid || initial.values().iter().any(|&v| v <= 0.0) {
        return Err(SolverError::InvalidInitial);
    }
    let sup = |v: &DVector<f64>| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut x = DVector::from_column_slice(initial.values());
    let s0 = sup(&x);
    x /= s0;
    let mut y = DVector::zeros(x.len());
    let mut lambda = 0.0;
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        op.matrix.mul_to(&x, &mut y);
        lambda = sup(&y);
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(SolverError::NotConverged { iterations: it, residual, lambda });
        }
        y /= lambda;
        residual = (&y - &x).iter().fold(0.0f64, |m, d| m.max(d.abs()));
        std::mem::swap(&mut x, &mut y);
        if residual <= opts.tol {
            let rho1 = RadialProfile::new(op.grid.clone(), x.iter().map(|v| v.max(0.0)).collect())?;
            return Ok(EigenSolution {
                lambda,
                rho1,
                radius: support_radius(lambda, op.params.n(), op.params.q()),
                iterations: it,
                residual,
            });
        }
    }
    Err(SolverError::NotConverged { iterations: opts.max_iter, residual, lambda })
}

/// R = λ^{−1/(n+q−2)}.
pub fn support_radius(lambda: f64, n: usize, q: f64) -> f64 {
    lambda.powf(-1.0 / (n as f64 + q - 2.0))
}

/// ρ̄(r) = c·ρ̄₁(r/R) on [0, R] with c fixed by the total mass.
pub fn scale_to_mass(sol: &EigenSolution, params: &ModelParams) -> Result<RadialProfile, SolverError> {
    let n = params.n();
    let grid = sol.rho1.grid().scaled(sol.radius)?;
    let m1 = mass(&sol.rho1, n);
    let c = params.mass() / (sol.radius.powi(n as i32) * m1);
    Ok(RadialProfile::new(grid, sol.rho1.values().iter().map(|v| c * v).collect())?)
}

/// Equilibrium on a uniform grid with `intervals` intervals, started from ρ ≡ 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub solution: EigenSolution,
    pub profile: RadialProfile,
}

pub fn solve_equilibrium(
    params: &ModelParams,
    intervals: usize,
    opts: PowerOptions,
) -> Result<Equilibrium, SolverError> {
    let grid = RadialGrid::uniform(1.0, intervals)?;
    let op = assemble_t1(&grid, params)?;
    let initial = RadialProfile::from_fn(grid, |_| 1.0)?;
    let solution = power_method(&op, &initial, opts)?;
    let profile = scale_to_mass(&solution, params)?;
    Ok(Equilibrium { solution, profile })
}

/// Pointwise ρ̄(rᵢ) − (T_Rρ̄)(rᵢ), with T_R integrated on a grid `refine` times finer
/// against the linear interpolant of ρ̄.
pub fn equilibrium_residual(
    profile: &RadialProfile,
    params: &ModelParams,
    refine: usize,
) -> Result<Vec<f64>, SolverError> {
    let refine = refine.max(1);
    let coarse = profile.grid();
    let fine = RadialGrid::uniform(coarse.r_edge(), coarse.intervals() * refine)?;
    let fine_vals: Vec<f64> = fine.nodes().iter().map(|&r| profile.interpolate(r)).collect();
    let kernel = RadialKernel::new(params)?;
    let scale = params.operator_scale();
    Ok(coarse
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let row = kernel.row_weights(fine.nodes(), i * refine);
            let t: f64 = row.iter().zip(&fine_vals).map(|(w, v)| w * v).sum();
            profile.values()[i] - scale * t
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trend {
    Decreasing,
    Increasing,
    Constant,
}

impl fmt::Display for Trend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Trend::Decreasing => "decreasing",
            Trend::Increasing => "increasing",
            Trend::Constant => "constant",
        })
    }
}

/// Outcome of the monotonicity check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonotonicityVerdict {
    Holds(Trend),
    /// First node `index` whose difference to its predecessor breaks `expected`.
    Violated { expected: Trend, index: usize },
}

impl MonotonicityVerdict {
    pub fn holds(&self) -> bool {
        matches!(self, MonotonicityVerdict::Holds(_))
    }
}

impl fmt::Display for MonotonicityVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MonotonicityVerdict::Holds(t) => write!(f, "{t}"),
            MonotonicityVerdict::Violated { expected, index } => {
                write!(f, "violated ({expected} expected, node {index})")
            }
        }
    }
}

/// Relative noise floor for successive differences.
pub const MONOTONICITY_NOISE: f64 = 1e-10;

/// Nonincreasing for q < 2, nondecreasing for q > 2, constant for q = 2.
pub fn check_monotonicity(profile: &RadialProfile, q: f64) -> MonotonicityVerdict {
    let v = profile.values();
    let floor = MONOTONICITY_NOISE * profile.max_value();
    let expected = if q < 2.0 {
        Trend::Decreasing
    } else if q > 2.0 {
        Trend::Increasing
    } else {
        Trend::Constant
    };
    for j in 1..v.len() {
        let d = v[j] - v[j - 1];
        let bad = match expected {
            Trend::Decreasing => d > floor,
            Trend::Increasing => d < -floor,
            Trend::Constant => (v[j] - v[0]).abs() > 1e3 * floor,
        };
        if bad {
            return MonotonicityVerdict::Violated { expected, index: j };
        }
    }
    MonotonicityVerdict::Holds(expected)
}
