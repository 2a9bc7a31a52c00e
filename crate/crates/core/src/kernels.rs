//! Angular kernels I, I₁, I₂, I₃, the explicit three-dimensional kernels and
//! product-integration weights for the radial operator.

use statrs::function::beta::beta;
use thiserror::Error;

use crate::model::{ModelError, ModelParams, RadialGrid, Regime};
use crate::quadrature::{geometric_breaks, gl16, shared};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("I1 diverges at s = 1 for n = {n}, q = {q} (needs q > 3 - n)")]
    Divergent { n: usize, q: f64 },
    #[error("kernel is singular at r = r' = {r} for q = {q}")]
    Singular { r: f64, q: f64 },
    #[error("angular kernels need n >= 2, got {0}")]
    Dimension(usize),
    #[error("s = {0} is outside [0, 1]")]
    OutOfRange(f64),
    #[error("product-integration weights are not available for n = {n}, q = {q}: {reason}")]
    Unsupported { n: usize, q: f64, reason: &'static str },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// x^p specialised for integer and half-integer exponents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FastPow {
    Int(i32),
    Half(i32),
    Real(f64),
}

impl FastPow {
    pub fn new(p: f64) -> Self {
        if p == p.round() && p.abs() < 64.0 {
            FastPow::Int(p as i32)
        } else if 2.0 * p == (2.0 * p).round() && p.abs() < 64.0 {
            FastPow::Half((p - 0.5).round() as i32)
        } else {
            FastPow::Real(p)
        }
    }

    #[inline]
    pub fn pow(&self, x: f64) -> f64 {
        match *self {
            FastPow::Int(k) => powi_inline(x, k),
            FastPow::Half(k) => powi_inline(x, k) * x.sqrt(),
            FastPow::Real(p) => x.powf(p),
        }
    }
}

#[inline(always)]
fn powi_inline(x: f64, k: i32) -> f64 {
    let mut e = k.unsigned_abs();
    let mut base = x;
    let mut acc = 1.0;
    while e > 0 {
        if e & 1 == 1 {
            acc *= base;
        }
        base *= base;
        e >>= 1;
    }
    if k < 0 {
        1.0 / acc
    } else {
        acc
    }
}

fn check_angular(s: f64, n: usize) -> Result<(), KernelError> {
    if n < 2 {
        return Err(KernelError::Dimension(n));
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(KernelError::OutOfRange(s));
    }
    Ok(())
}

/// ∫₀^π (1+s²−2s cosθ)^{q/2−1} w(θ) sin^{n−2}θ dθ with w given in terms of sin²(θ/2).
fn angular_integral<W: Fn(f64) -> f64>(s: f64, n: usize, q: f64, weight: W) -> f64 {
    let delta = 1.0 - s;
    let e = 0.5 * q - 1.0;
    let sin_pow = n as i32 - 2;
    let integrand = |theta: f64| {
        let half = 0.5 * theta;
        let sh = half.sin();
        let sh2 = sh * sh;
        let base = delta * delta + 4.0 * s * sh2;
        let sin_t = 2.0 * sh * half.cos();
        base.powf(e) * weight(sh2) * sin_t.powi(sin_pow)
    };
    let breaks = geometric_breaks(std::f64::consts::PI, 0.5 * delta);
    let panel_sum = |m: usize| -> f64 {
        let rule = shared(m);
        breaks
            .windows(2)
            .map(|w| rule.integrate(w[0], w[1], integrand))
            .sum()
    };
    let mut m = 64;
    let mut prev = panel_sum(m);
    while m < 1024 {
        m *= 2;
        let next = panel_sum(m);
        if (next - prev).abs() <= 1e-12 * next.abs().max(1e-300) {
            return next;
        }
        prev = next;
    }
    prev
}

/// ∫₀^{π/2} (2 sin φ)^{a} ... closed form of I₁ at s = 1 for exponent `q`.
fn i1_at_one(n: usize, q: f64) -> f64 {
    let nf = n as f64;
    2f64.powf(q + nf - 3.0) * 0.5 * beta(0.5 * (q + nf - 3.0), 0.5 * (nf - 1.0))
}

/// I₁(s) = ∫₀^π (1+s²−2s cosθ)^{q/2−1} sin^{n−2}θ dθ.
pub fn eval_i1(s: f64, n: usize, q: f64) -> Result<f64, KernelError> {
    check_angular(s, n)?;
    if s == 1.0 {
        if q <= 3.0 - n as f64 {
            return Err(KernelError::Divergent { n, q });
        }
        return Ok(i1_at_one(n, q));
    }
    Ok(angular_integral(s, n, q, |_| 1.0))
}

/// I₂(s): I₁ with the extra factor (1 − s cosθ).
pub fn eval_i2(s: f64, n: usize, q: f64) -> Result<f64, KernelError> {
    check_angular(s, n)?;
    if s == 1.0 {
        return Ok(0.5 * i1_at_one(n, q + 2.0));
    }
    Ok(angular_integral(s, n, q, |sh2| (1.0 - s) + 2.0 * s * sh2))
}

/// I₃(s): I₁ with the extra factor (s − cosθ).
pub fn eval_i3(s: f64, n: usize, q: f64) -> Result<f64, KernelError> {
    check_angular(s, n)?;
    if s == 1.0 {
        return Ok(0.5 * i1_at_one(n, q + 2.0));
    }
    Ok(angular_integral(s, n, q, |sh2| (s - 1.0) + 2.0 * sh2))
}

/// ((r+r′)^q − |r−r′|^q)/(q r r′), the logarithmic form for q = 0 and 2·max^{q−2} on the axis.
pub fn eval_i_explicit_3d(r: f64, rp: f64, q: f64) -> Result<f64, KernelError> {
    let hi = r.max(rp);
    let lo = r.min(rp);
    if lo == 0.0 {
        if hi == 0.0 && q < 2.0 {
            return Err(KernelError::Singular { r: 0.0, q });
        }
        return Ok(2.0 * hi.powf(q - 2.0));
    }
    let a = r + rp;
    let b = hi - lo;
    if b == 0.0 && q <= 0.0 {
        return Err(KernelError::Singular { r, q });
    }
    if q == 0.0 {
        Ok((a / b).ln() / (r * rp))
    } else {
        Ok((a.powf(q) - b.powf(q)) / (q * r * rp))
    }
}

/// Radial component of the averaged attraction, J(r,r′) = max^{q−1}·(I₂ or I₃)(s), for n = 3.
pub fn eval_j_explicit_3d(r: f64, rp: f64, q: f64) -> f64 {
    if rp == 0.0 {
        return 2.0 * r.powf(q - 1.0);
    }
    if r == 0.0 {
        return 0.0;
    }
    let a = r + rp;
    let b = (r - rp).abs();
    if b == 0.0 {
        return 2f64.powf(q + 1.0) * r.powf(q - 1.0) / (q + 2.0);
    }
    let (aq, bq) = (a.powf(q), b.powf(q));
    let log_part = if q == 0.0 { 2.0 * (a / b).ln() } else { 2.0 * (aq - bq) / q };
    ((r * r - rp * rp) * log_part + 2.0 * (aq * a * a - bq * b * b) / (q + 2.0)) / (4.0 * r * r * rp)
}

/// I(r, r′) = max(r,r′)^{q−2}·I₁(min/max). Uses the explicit formula for n = 3 and the
/// folded kernel |r−r′|^{q−2} + (r+r′)^{q−2} for n = 1.
pub fn eval_i(r: f64, rp: f64, n: usize, q: f64) -> Result<f64, KernelError> {
    match n {
        1 => {
            let b = (r - rp).abs();
            if b == 0.0 && q <= 2.0 {
                return Err(KernelError::Singular { r, q });
            }
            Ok(b.powf(q - 2.0) + (r + rp).powf(q - 2.0))
        }
        3 => eval_i_explicit_3d(r, rp, q),
        _ => {
            let hi = r.max(rp);
            let lo = r.min(rp);
            if hi == 0.0 {
                if q < 2.0 {
                    return Err(KernelError::Singular { r: 0.0, q });
                }
                return Ok(if q == 2.0 { eval_i1(0.0, n, q)? } else { 0.0 });
            }
            let s = lo / hi;
            match eval_i1(s, n, q) {
                Ok(v) => Ok(hi.powf(q - 2.0) * v),
                Err(KernelError::Divergent { .. }) => Err(KernelError::Singular { r, q }),
                Err(e) => Err(e),
            }
        }
    }
}

/// Tabulated I₁, I₂, I₃ on [0, 1] with cubic interpolation.
#[derive(Debug, Clone)]
pub struct AngularTable {
    pub n: usize,
    pub q: f64,
    pub s_nodes: Vec<f64>,
    pub i1_vals: Vec<f64>,
    pub i2_vals: Vec<f64>,
    pub i3_vals: Vec<f64>,
}

const TABLE_INTERVALS: usize = 2048;
const TABLE_CLUSTER: i32 = 30;

impl AngularTable {
    pub fn build(n: usize, q: f64) -> Result<Self, KernelError> {
        if n < 2 {
            return Err(KernelError::Dimension(n));
        }
        let mut s_nodes: Vec<f64> = (0..=TABLE_INTERVALS)
            .map(|k| k as f64 / TABLE_INTERVALS as f64)
            .collect();
        let last = 1.0 / TABLE_INTERVALS as f64;
        s_nodes.extend((1..=TABLE_CLUSTER).map(|k| 1.0 - last * 0.5f64.powi(k)));
        s_nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        s_nodes.dedup();
        let mut i1_vals = Vec::with_capacity(s_nodes.len());
        let mut i2_vals = Vec::with_capacity(s_nodes.len());
        let mut i3_vals = Vec::with_capacity(s_nodes.len());
        for &s in &s_nodes {
            i1_vals.push(eval_i1(s, n, q).unwrap_or(f64::INFINITY));
            i2_vals.push(eval_i2(s, n, q)?);
            i3_vals.push(eval_i3(s, n, q)?);
        }
        Ok(Self { n, q, s_nodes, i1_vals, i2_vals, i3_vals })
    }

    fn interp(&self, vals: &[f64], s: f64) -> f64 {
        let m = self.s_nodes.len();
        let k = self.s_nodes.partition_point(|&x| x <= s).clamp(1, m - 1) - 1;
        if s == self.s_nodes[k] {
            return vals[k];
        }
        let lo = k.saturating_sub(1).min(m - 4);
        let xs = &self.s_nodes[lo..lo + 4];
        let ys = &vals[lo..lo + 4];
        if ys.iter().any(|y| !y.is_finite()) {
            let t = (s - self.s_nodes[k]) / (self.s_nodes[k + 1] - self.s_nodes[k]);
            return vals[k] * (1.0 - t) + vals[k + 1] * t;
        }
        let mut acc = 0.0;
        for i in 0..4 {
            let mut l = 1.0;
            for j in 0..4 {
                if i != j {
                    l *= (s - xs[j]) / (xs[i] - xs[j]);
                }
            }
            acc += l * ys[i];
        }
        acc
    }

    pub fn i1(&self, s: f64) -> f64 {
        self.interp(&self.i1_vals, s)
    }

    pub fn i2(&self, s: f64) -> f64 {
        self.interp(&self.i2_vals, s)
    }

    pub fn i3(&self, s: f64) -> f64 {
        self.interp(&self.i3_vals, s)
    }

    /// I(r, r′) from the table.
    pub fn kernel(&self, r: f64, rp: f64) -> f64 {
        let hi = r.max(rp);
        let lo = r.min(rp);
        if hi == 0.0 {
            return if self.q == 2.0 { self.i1_vals[0] } else { 0.0 };
        }
        hi.powf(self.q - 2.0) * self.i1(lo / hi)
    }

    /// J(r, r′) from the table.
    pub fn velocity_kernel(&self, r: f64, rp: f64) -> f64 {
        let hi = r.max(rp);
        if hi == 0.0 {
            return 0.0;
        }
        let s = r.min(rp) / hi;
        let f = if r >= rp { self.i2(s) } else { self.i3(s) };
        hi.powf(self.q - 1.0) * f
    }
}

/// Weakly singular factor of a split kernel, coef·S(|r′−rᵢ|)·(c0 + c1·r′).
#[derive(Debug, Clone, Copy)]
struct SingularTerm {
    coef: f64,
    log: bool,
    power: f64,
    c0: f64,
    c1: f64,
}

/// r′^{n−1}·I(r, r′) for the radial operator, with its smooth/singular split.
#[derive(Debug, Clone)]
pub enum RadialKernel {
    /// Folded 1D kernel |r−r′|^{q−2} + (r+r′)^{q−2}.
    OneD { q: f64 },
    /// Explicit 3D kernel times r′².
    ThreeD { q: f64 },
    /// Tabulated I₁ for the remaining dimensions (regular regime only).
    Tabulated { table: Box<AngularTable> },
}

impl RadialKernel {
    pub fn new(params: &ModelParams) -> Result<Self, KernelError> {
        let (n, q) = (params.n(), params.q());
        match n {
            1 => Ok(RadialKernel::OneD { q }),
            3 => Ok(RadialKernel::ThreeD { q }),
            _ => {
                if params.regime() == Regime::Singular {
                    return Err(KernelError::Unsupported {
                        n,
                        q,
                        reason: "no explicit kernel in the singular regime",
                    });
                }
                Ok(RadialKernel::Tabulated { table: Box::new(AngularTable::build(n, q)?) })
            }
        }
    }

    pub fn n(&self) -> usize {
        match self {
            RadialKernel::OneD { .. } => 1,
            RadialKernel::ThreeD { .. } => 3,
            RadialKernel::Tabulated { table } => table.n,
        }
    }

    /// r′^{n−1} I(r, r′); infinite on a singular diagonal.
    pub fn weighted(&self, r: f64, rp: f64) -> f64 {
        match self {
            RadialKernel::OneD { q } => {
                let b = (r - rp).abs();
                b.powf(q - 2.0) + (r + rp).powf(q - 2.0)
            }
            RadialKernel::ThreeD { q } => {
                if r == 0.0 {
                    return 2.0 * rp.powf(*q);
                }
                if rp == 0.0 {
                    return 0.0;
                }
                rp * rp * eval_i_explicit_3d(r, rp, *q).unwrap_or(f64::INFINITY)
            }
            RadialKernel::Tabulated { table } => {
                rp.powi(table.n as i32 - 1) * table.kernel(r, rp)
            }
        }
    }

    fn smooth(&self, ri: f64, rp: f64) -> f64 {
        match self {
            RadialKernel::OneD { q } => {
                if ri == 0.0 {
                    0.0
                } else {
                    (ri + rp).powf(q - 2.0)
                }
            }
            RadialKernel::ThreeD { q } => {
                if ri == 0.0 {
                    0.0
                } else if *q == 0.0 {
                    rp / ri * (ri + rp).ln()
                } else {
                    rp * (ri + rp).powf(*q) / (q * ri)
                }
            }
            RadialKernel::Tabulated { .. } => self.weighted(ri, rp),
        }
    }

    fn singular(&self, ri: f64) -> Option<SingularTerm> {
        match self {
            RadialKernel::OneD { q } => Some(SingularTerm {
                coef: if ri == 0.0 { 2.0 } else { 1.0 },
                log: false,
                power: q - 2.0,
                c0: 1.0,
                c1: 0.0,
            }),
            RadialKernel::ThreeD { q } => {
                if ri == 0.0 {
                    Some(SingularTerm { coef: 2.0, log: false, power: *q, c0: 1.0, c1: 0.0 })
                } else if *q == 0.0 {
                    Some(SingularTerm { coef: -1.0 / ri, log: true, power: 0.0, c0: 0.0, c1: 1.0 })
                } else {
                    Some(SingularTerm { coef: -1.0 / (q * ri), log: false, power: *q, c0: 0.0, c1: 1.0 })
                }
            }
            RadialKernel::Tabulated { .. } => None,
        }
    }

    /// Weights (left, right) of ∫_a^b r′^{n−1}I(rᵢ,r′)ρ(r′)dr′ for linear ρ on [a, b].
    pub fn interval_weights(&self, ri: f64, a: f64, b: f64) -> (f64, f64) {
        let h = b - a;
        let adjacent = ri == a || ri == b;
        if !adjacent {
            let mut wl = 0.0;
            let mut wr = 0.0;
            for (x, w) in gl16().points(a, b) {
                let k = w * self.weighted(ri, x);
                let t = (x - a) / h;
                wl += k * (1.0 - t);
                wr += k * t;
            }
            return (wl, wr);
        }
        let near_left = ri == a;
        match self.singular(ri) {
            Some(term) => {
                let mut wl = 0.0;
                let mut wr = 0.0;
                for (x, w) in gl16().points(a, b) {
                    let k = w * self.smooth(ri, x);
                    let t = (x - a) / h;
                    wl += k * (1.0 - t);
                    wr += k * t;
                }
                let sigma = if near_left { 1.0 } else { -1.0 };
                let p0 = term.c0 + term.c1 * ri;
                let p1 = term.c1 * sigma;
                let mom = |k: i32| singular_moment(&term, h, k);
                let (m0, m1, m2) = (mom(0), mom(1), mom(2));
                let near = term.coef * (p0 * m0 + (p1 - p0 / h) * m1 - p1 / h * m2);
                let far = term.coef * (p0 / h * m1 + p1 / h * m2);
                if near_left {
                    (wl + near, wr + far)
                } else {
                    (wl + far, wr + near)
                }
            }
            None => {
                let (start, sign) = if near_left { (a, 1.0) } else { (b, -1.0) };
                let mut wl = 0.0;
                let mut wr = 0.0;
                let rule = gl16();
                for (t, w) in rule.points(0.0, 1.0) {
                    let t2 = t * t;
                    let u = h * t2 * t2;
                    let x = start + sign * u;
                    let k = 4.0 * h * t2 * t * w * self.weighted(ri, x);
                    let tt = (x - a) / h;
                    wl += k * (1.0 - tt);
                    wr += k * tt;
                }
                (wl, wr)
            }
        }
    }

    /// Row i of the product-integration matrix on arbitrary increasing nodes.
    pub fn row_weights(&self, nodes: &[f64], i: usize) -> Vec<f64> {
        let ri = nodes[i];
        let mut row = vec![0.0; nodes.len()];
        for k in 0..nodes.len() - 1 {
            let (wl, wr) = self.interval_weights(ri, nodes[k], nodes[k + 1]);
            row[k] += wl;
            row[k + 1] += wr;
        }
        row
    }
}

fn singular_moment(term: &SingularTerm, h: f64, k: i32) -> f64 {
    let kp = (k + 1) as f64;
    if term.log {
        h.powi(k + 1) * (h.ln() / kp - 1.0 / (kp * kp))
    } else {
        let e = term.power + kp;
        h.powf(e) / e
    }
}

/// Product-integration weights of row `i` for the singular regime, n ∈ {1, 3}.
pub fn singular_row_weights(grid: &RadialGrid, i: usize, n: usize, q: f64) -> Result<Vec<f64>, KernelError> {
    if n != 1 && n != 3 {
        return Err(KernelError::Unsupported { n, q, reason: "singular weights exist for n = 1 and n = 3 only" });
    }
    if !(q > 2.0 - n as f64 && q <= 3.0 - n as f64) {
        return Err(KernelError::Unsupported { n, q, reason: "q is outside the singular range (2-n, 3-n]" });
    }
    if i >= grid.len() {
        return Err(KernelError::Model(ModelError::InvalidGrid(format!("row {i} out of range"))));
    }
    let params = ModelParams::new(n, q, 1.0)?;
    Ok(RadialKernel::new(&params)?.row_weights(grid.nodes(), i))
}

/// Velocity and divergence kernels (I(r,r′), J(r,r′), J(r′,r)) for a particle pair.
#[derive(Debug, Clone)]
pub enum PairKernel {
    OneD { pm2: FastPow, pm1: FastPow, q: f64 },
    ThreeD { pq: FastPow, q: f64 },
    Tabulated { table: Box<AngularTable> },
}

impl PairKernel {
    pub fn new(params: &ModelParams) -> Result<Self, KernelError> {
        let q = params.q();
        Ok(match params.n() {
            1 => PairKernel::OneD { pm2: FastPow::new(q - 2.0), pm1: FastPow::new(q - 1.0), q },
            3 => PairKernel::ThreeD { pq: FastPow::new(q), q },
            n => PairKernel::Tabulated { table: Box::new(AngularTable::build(n, q)?) },
        })
    }

    /// Returns (I, J(r, r′), J(r′, r)) for r, r′ > 0. I is infinite on a singular diagonal.
    #[inline]
    pub fn pair(&self, r: f64, rp: f64) -> (f64, f64, f64) {
        self.pair_with_gap(r, rp, (r - rp).abs())
    }

    /// `pair` with |r − r′| supplied as `gap`, which keeps full precision for nearly equal radii.
    #[inline]
    pub fn pair_with_gap(&self, r: f64, rp: f64, gap: f64) -> (f64, f64, f64) {
        match self {
            PairKernel::OneD { pm2, pm1, q } => {
                let a = r + rp;
                let b = gap;
                let ia = pm2.pow(a);
                let i = if b > 0.0 {
                    ia + pm2.pow(b)
                } else if *q > 2.0 {
                    ia
                } else if *q == 2.0 {
                    2.0
                } else {
                    f64::INFINITY
                };
                let ja = pm1.pow(a);
                let jb = if b == 0.0 { 0.0 } else { pm1.pow(b) };
                let sign = if r >= rp { 1.0 } else { -1.0 };
                (i, ja + sign * jb, ja - sign * jb)
            }
            PairKernel::ThreeD { pq, q } => {
                let a = r + rp;
                let b = gap;
                let aq = pq.pow(a);
                let bq = if b == 0.0 { if *q > 0.0 { 0.0 } else { f64::INFINITY } } else { pq.pow(b) };
                let (diff, log_part) = if *q == 0.0 {
                    let l = if b == 0.0 { f64::INFINITY } else { (a / b).ln() };
                    (l, 2.0 * l)
                } else {
                    let d = (aq - bq) / q;
                    (d, 2.0 * d)
                };
                let i = diff / (r * rp);
                let cubic = if b == 0.0 { 2.0 * aq * a * a / (q + 2.0) } else { 2.0 * (aq * a * a - bq * b * b) / (q + 2.0) };
                let d2 = r * r - rp * rp;
                let jr = if d2 == 0.0 { cubic / (4.0 * r * r * rp) } else { (d2 * log_part + cubic) / (4.0 * r * r * rp) };
                let jrp = if d2 == 0.0 { cubic / (4.0 * rp * rp * r) } else { (-d2 * log_part + cubic) / (4.0 * rp * rp * r) };
                (i, jr, jrp)
            }
            PairKernel::Tabulated { table } => {
                (table.kernel(r, rp), table.velocity_kernel(r, rp), table.velocity_kernel(rp, r))
            }
        }
    }

    /// r′^{n−1}·I(0, r′) for the particle at the origin.
    pub fn axis_weighted(&self, rp: f64) -> f64 {
        match self {
            PairKernel::OneD { pm2, .. } => 2.0 * pm2.pow(rp),
            PairKernel::ThreeD { q, .. } => 2.0 * rp.powf(*q),
            PairKernel::Tabulated { table } => {
                rp.powi(table.n as i32 - 1) * rp.powf(table.q - 2.0) * table.i1_vals[0]
            }
        }
    }

    /// J(r, 0).
    pub fn axis_velocity(&self, r: f64) -> f64 {
        match self {
            PairKernel::OneD { pm1, .. } => 2.0 * pm1.pow(r),
            PairKernel::ThreeD { q, .. } => 2.0 * r.powf(q - 1.0),
            PairKernel::Tabulated { table } => r.powf(table.q - 1.0) * table.i2_vals[0],
        }
    }
}
