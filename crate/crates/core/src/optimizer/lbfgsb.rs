//! Limited-memory BFGS with box constraints.
//!
//! Follows the compact-representation algorithm of Byrd, Lu, Nocedal and Zhu:
//! each iteration finds the generalized Cauchy point along the projected
//! steepest-descent path, minimizes the quadratic model over the variables
//! that are still free, and runs a backtracking line search inside the box.
//! Gradients come from central differences whose probes are clamped to the
//! box.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    /// Central-difference step `h`.
    pub gradient_step: f64,
    /// Stop when the infinity norm of the projected gradient falls below this.
    pub convergence_tolerance: f64,
    /// Stop when an iteration lowers the objective by less than this
    /// fraction of `max(|f|, 1)`.
    pub f_tolerance: f64,
    pub restarts: usize,
    pub rng_seed: u64,
    pub memory_pairs: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iterations: 200,
            gradient_step: 1e-4,
            convergence_tolerance: 1e-6,
            f_tolerance: 1e-10,
            restarts: 10,
            rng_seed: 0,
            memory_pairs: 10,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gradient_step > 0.0) {
            return Err(Error::InvalidConfig(
                "gradient_step must be positive".into(),
            ));
        }
        if self.restarts < 1 {
            return Err(Error::InvalidConfig("restarts must be >= 1".into()));
        }
        if !(self.convergence_tolerance > 0.0) || self.f_tolerance < 0.0 {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        if self.memory_pairs < 1 {
            return Err(Error::InvalidConfig("memory_pairs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    ProjectedGradient,
    FunctionChange,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub projected_gradient_norm: f64,
    pub termination: Termination,
}

/// Per-coordinate box `[lower_i, upper_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                actual: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::InvalidConfig(
                "every lower bound must be <= its upper bound".into(),
            ));
        }
        Ok(Bounds { lower, upper })
    }

    pub fn uniform(n: usize, lower: f64, upper: f64) -> Self {
        Bounds {
            lower: vec![lower; n],
            upper: vec![upper; n],
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn project(&self, x: &mut [f64]) {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = xi.clamp(self.lower[i], self.upper[i]);
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(i, &v)| self.lower[i] <= v && v <= self.upper[i])
    }

    /// `‖P(x − g) − x‖_∞`.
    pub fn projected_gradient_norm(&self, x: &[f64], g: &[f64]) -> f64 {
        x.iter()
            .zip(g)
            .enumerate()
            .map(|(i, (&xi, &gi))| ((xi - gi).clamp(self.lower[i], self.upper[i]) - xi).abs())
            .fold(0.0, f64::max)
    }
}

/// Central differences with probes clamped to the box. A coordinate whose box
/// has zero width gets a zero derivative.
pub fn central_difference_gradient<F>(
    f: &F,
    x: &[f64],
    bounds: &Bounds,
    step: f64,
    grad: &mut [f64],
) where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let hi = (x[i] + step).min(bounds.upper[i]);
        let lo = (x[i] - step).max(bounds.lower[i]);
        if hi <= lo {
            grad[i] = 0.0;
            continue;
        }
        probe[i] = hi;
        let f_hi = f(&probe);
        probe[i] = lo;
        let f_lo = f(&probe);
        probe[i] = x[i];
        grad[i] = (f_hi - f_lo) / (hi - lo);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Limited-memory curvature pairs and the derived compact matrices
/// `W = [Y, θS]` and `M`.
struct Memory {
    capacity: usize,
    s: VecDeque<Vec<f64>>,
    y: VecDeque<Vec<f64>>,
    theta: f64,
    w: DMatrix<f64>,
    m: DMatrix<f64>,
}

impl Memory {
    fn new(capacity: usize, n: usize) -> Self {
        Memory {
            capacity,
            s: VecDeque::new(),
            y: VecDeque::new(),
            theta: 1.0,
            w: DMatrix::zeros(n, 0),
            m: DMatrix::zeros(0, 0),
        }
    }

    fn len(&self) -> usize {
        self.s.len()
    }

    fn reset(&mut self) {
        let n = self.w.nrows();
        *self = Memory::new(self.capacity, n);
    }

    /// Stores the pair if it has enough positive curvature. Returns whether
    /// it was accepted.
    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let sy = dot(&s, &y);
        let yy = dot(&y, &y);
        if !(sy > f64::EPSILON * yy) || yy == 0.0 {
            return false;
        }
        if self.s.len() == self.capacity {
            self.s.pop_front();
            self.y.pop_front();
        }
        self.s.push_back(s);
        self.y.push_back(y);
        self.theta = yy / sy;
        if !self.rebuild() {
            self.reset();
            return false;
        }
        true
    }

    fn rebuild(&mut self) -> bool {
        let k = self.len();
        let n = self.w.nrows();
        let mut w = DMatrix::zeros(n, 2 * k);
        for (j, (s, y)) in self.s.iter().zip(&self.y).enumerate() {
            for i in 0..n {
                w[(i, j)] = y[i];
                w[(i, k + j)] = self.theta * s[i];
            }
        }
        let mut middle = DMatrix::zeros(2 * k, 2 * k);
        for i in 0..k {
            for j in 0..k {
                let sy = dot(&self.s[i], &self.y[j]);
                if i == j {
                    middle[(i, i)] = -sy;
                } else if i > j {
                    // L (lower block) and its transpose (upper block)
                    middle[(k + i, j)] = sy;
                    middle[(j, k + i)] = sy;
                }
                middle[(k + i, k + j)] = self.theta * dot(&self.s[i], &self.s[j]);
            }
        }
        match middle.try_inverse() {
            Some(m) if m.iter().all(|v| v.is_finite()) => {
                self.w = w;
                self.m = m;
                true
            }
            _ => false,
        }
    }
}

/// Generalized Cauchy point: the first local minimizer of the quadratic model
/// along the projected steepest-descent path. Returns the point and the
/// vector `c = Wᵀ(x_cp − x)`.
fn cauchy_point(x: &[f64], g: &[f64], bounds: &Bounds, mem: &Memory) -> (Vec<f64>, DVector<f64>) {
    let n = x.len();
    let k2 = mem.w.ncols();
    let theta = mem.theta;
    let mut breakpoints = vec![f64::INFINITY; n];
    let mut d = vec![0.0; n];
    for i in 0..n {
        if g[i] < 0.0 {
            breakpoints[i] = (x[i] - bounds.upper[i]) / g[i];
        } else if g[i] > 0.0 {
            breakpoints[i] = (x[i] - bounds.lower[i]) / g[i];
        }
        if breakpoints[i] > 0.0 {
            d[i] = -g[i];
        } else {
            breakpoints[i] = 0.0;
        }
    }
    let mut order: Vec<usize> = (0..n)
        .filter(|&i| breakpoints[i] > 0.0 && breakpoints[i].is_finite())
        .collect();
    order.sort_by(|&a, &b| breakpoints[a].total_cmp(&breakpoints[b]).then(a.cmp(&b)));

    let mut xcp = x.to_vec();
    let dvec = DVector::from_column_slice(&d);
    let mut p: DVector<f64> = mem.w.tr_mul(&dvec);
    let mut c = DVector::zeros(k2);
    let mut fp = -dot(&d, &d);
    let fpp0 = -theta * fp;
    let mut fpp = if k2 > 0 {
        fpp0 - p.dot(&(&mem.m * &p))
    } else {
        fpp0
    };
    fpp = fpp.max(f64::EPSILON * fpp0);
    let mut dt_min = if fpp > 0.0 { -fp / fpp } else { 0.0 };
    let mut t_old = 0.0;

    for &b in &order {
        let t = breakpoints[b];
        let dt = t - t_old;
        if dt_min < dt {
            break;
        }
        let gb = g[b];
        xcp[b] = if d[b] > 0.0 {
            bounds.upper[b]
        } else {
            bounds.lower[b]
        };
        let zb = xcp[b] - x[b];
        c += &p * dt;
        if k2 > 0 {
            let wb: DVector<f64> = mem.w.row(b).transpose();
            let m_wb = &mem.m * &wb;
            fp += dt * fpp + gb * gb + theta * gb * zb - gb * m_wb.dot(&c);
            fpp += -theta * gb * gb - 2.0 * gb * m_wb.dot(&p) - gb * gb * m_wb.dot(&wb);
            p += wb * gb;
        } else {
            fp += dt * fpp + gb * gb + theta * gb * zb;
            fpp -= theta * gb * gb;
        }
        fpp = fpp.max(f64::EPSILON * fpp0);
        d[b] = 0.0;
        dt_min = if fpp > 0.0 { -fp / fpp } else { 0.0 };
        t_old = t;
    }

    let dt_min = dt_min.max(0.0);
    let t_final = t_old + dt_min;
    for i in 0..n {
        if d[i] != 0.0 {
            xcp[i] = (x[i] + t_final * d[i]).clamp(bounds.lower[i], bounds.upper[i]);
        }
    }
    c += &p * dt_min;
    (xcp, c)
}

/// Direct primal subspace minimization over the variables that are free at
/// the Cauchy point, truncated to stay inside the box.
fn subspace_minimization(
    x: &[f64],
    g: &[f64],
    bounds: &Bounds,
    mem: &Memory,
    xcp: &[f64],
    c: &DVector<f64>,
) -> Vec<f64> {
    let n = x.len();
    let free: Vec<usize> = (0..n)
        .filter(|&i| xcp[i] > bounds.lower[i] && xcp[i] < bounds.upper[i])
        .collect();
    if free.is_empty() {
        return xcp.to_vec();
    }
    let theta = mem.theta;
    let k2 = mem.w.ncols();

    let mc = if k2 > 0 {
        &mem.m * c
    } else {
        DVector::zeros(0)
    };
    let mut r_hat = DVector::zeros(free.len());
    for (a, &i) in free.iter().enumerate() {
        let wmc = if k2 > 0 {
            mem.w.row(i).transpose().dot(&mc)
        } else {
            0.0
        };
        r_hat[a] = g[i] + theta * (xcp[i] - x[i]) - wmc;
    }

    let mut d_hat = -&r_hat / theta;
    if k2 > 0 {
        let w_free = DMatrix::from_fn(free.len(), k2, |a, j| mem.w[(free[a], j)]);
        let v = &mem.m * w_free.tr_mul(&r_hat);
        let n_mat = DMatrix::identity(k2, k2) - (&mem.m * w_free.tr_mul(&w_free)) / theta;
        if let Some(v) = n_mat.lu().solve(&v) {
            d_hat -= (&w_free * v) / (theta * theta);
        }
    }

    let mut alpha: f64 = 1.0;
    for (a, &i) in free.iter().enumerate() {
        let di = d_hat[a];
        if di > 0.0 {
            alpha = alpha.min((bounds.upper[i] - xcp[i]) / di);
        } else if di < 0.0 {
            alpha = alpha.min((bounds.lower[i] - xcp[i]) / di);
        }
    }
    let mut xbar = xcp.to_vec();
    for (a, &i) in free.iter().enumerate() {
        xbar[i] = (xcp[i] + alpha * d_hat[a]).clamp(bounds.lower[i], bounds.upper[i]);
    }
    xbar
}

fn max_feasible_step(x: &[f64], d: &[f64], bounds: &Bounds) -> f64 {
    let mut step = f64::INFINITY;
    for i in 0..x.len() {
        if d[i] > 0.0 {
            step = step.min((bounds.upper[i] - x[i]) / d[i]);
        } else if d[i] < 0.0 {
            step = step.min((bounds.lower[i] - x[i]) / d[i]);
        }
    }
    step
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

/// Minimizes `f` over the box starting from `init` (projected into the box
/// first). The returned value never exceeds `f(init)`.
pub fn minimize<F>(
    f: &F,
    bounds: &Bounds,
    init: &[f64],
    config: &OptimizerConfig,
) -> Result<Minimum>
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    config.validate()?;
    let n = init.len();
    if bounds.len() != n {
        return Err(Error::DimensionMismatch {
            expected: bounds.len(),
            actual: n,
        });
    }
    let mut x = init.to_vec();
    bounds.project(&mut x);
    let mut fx = f(&x);
    if !fx.is_finite() {
        return Err(Error::NonFiniteObjective(fx));
    }
    let mut g = vec![0.0; n];
    central_difference_gradient(f, &x, bounds, config.gradient_step, &mut g);
    let mut mem = Memory::new(config.memory_pairs, n);
    let mut pg = bounds.projected_gradient_norm(&x, &g);
    let mut iterations = 0;

    let termination = loop {
        if pg < config.convergence_tolerance {
            break Termination::ProjectedGradient;
        }
        if iterations >= config.max_iterations {
            break Termination::MaxIterations;
        }

        let (xcp, c) = cauchy_point(&x, &g, bounds, &mem);
        let xbar = subspace_minimization(&x, &g, bounds, &mem, &xcp, &c);
        let mut d: Vec<f64> = xbar.iter().zip(&x).map(|(a, b)| a - b).collect();
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            // The model lost positive curvature; fall back to the projected
            // steepest-descent point.
            mem.reset();
            let (xcp, _) = cauchy_point(&x, &g, bounds, &mem);
            d = xcp.iter().zip(&x).map(|(a, b)| a - b).collect();
            slope = dot(&g, &d);
            if !(slope < 0.0) {
                break Termination::LineSearchFailed;
            }
        }

        let max_step = max_feasible_step(&x, &d, bounds);
        let d_norm = dot(&d, &d).sqrt();
        let mut step = if mem.len() == 0 && iterations == 0 {
            (1.0 / d_norm).min(1.0)
        } else {
            1.0
        }
        .min(max_step);

        let mut accepted = None;
        let mut trial = vec![0.0; n];
        for _ in 0..MAX_BACKTRACKS {
            for i in 0..n {
                trial[i] = (x[i] + step * d[i]).clamp(bounds.lower[i], bounds.upper[i]);
            }
            let f_trial = f(&trial);
            if !f_trial.is_finite() {
                return Err(Error::NonFiniteObjective(f_trial));
            }
            if f_trial <= fx + ARMIJO * step * slope {
                accepted = Some(f_trial);
                break;
            }
            // Quadratic interpolation of the step, safeguarded.
            let denom = 2.0 * (f_trial - fx - step * slope);
            let interp = if denom > 0.0 {
                -slope * step * step / denom
            } else {
                0.5 * step
            };
            step = interp.clamp(0.1 * step, 0.5 * step);
        }
        let Some(f_new) = accepted else {
            if mem.len() > 0 {
                mem.reset();
                continue;
            }
            break Termination::LineSearchFailed;
        };

        let mut g_new = vec![0.0; n];
        central_difference_gradient(f, &trial, bounds, config.gradient_step, &mut g_new);
        let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        mem.push(s, y);

        let reduction = fx - f_new;
        x.copy_from_slice(&trial);
        fx = f_new;
        g = g_new;
        pg = bounds.projected_gradient_norm(&x, &g);
        iterations += 1;

        if pg >= config.convergence_tolerance && reduction <= config.f_tolerance * fx.abs().max(1.0)
        {
            break Termination::FunctionChange;
        }
    };

    Ok(Minimum {
        x,
        value: fx,
        iterations,
        projected_gradient_norm: pg,
        termination,
    })
}
