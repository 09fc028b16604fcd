//! Total-variation reconstruction baseline.
//!
//! Minimizes
//!
//! ```text
//! F(x) = ‖Φx - y‖² + λ TV(x),   x ∈ [0, 1]^N
//! ```
//!
//! with anisotropic TV (sum of absolute vertical and horizontal neighbour
//! differences, no difference across the last row/column). `Φ` is never
//! materialized; it is applied block by block with the block matrix.
//!
//! The outer loop is monotone accelerated forward-backward splitting: a
//! gradient step on the data term, then the proximal map of `λ TV` plus the
//! box constraint, and the new iterate is the better of the proximal point
//! and the previous iterate, so `F` never increases. The proximal map is
//! solved approximately by a fixed number of fast projected-gradient steps
//! on its dual, warm-started across outer iterations.

use crate::error::{Error, Result};
use crate::image::ImagePlane;
use crate::sensing::{BlockMatrix, MeasurementTensor};

/// Number of dual iterations per proximal step.
const INNER_ITERS: usize = 20;
/// Power iterations used to estimate `‖A‖²`.
const POWER_ITERS: usize = 20;
/// Safety factor on the power-iteration estimate, which approaches from below.
const LIPSCHITZ_MARGIN: f64 = 1.05;
/// Consecutive rejected proximal points before giving up.
const MAX_REJECTIONS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvConfig {
    pub lambda: f64,
    pub max_iters: usize,
    /// Stop once the relative objective decrease of an accepted step drops
    /// below this.
    pub tol: f64,
    /// Adds `sqrt(d² + eps²) - eps` smoothing to the TV term of the
    /// reported objective; 0 gives plain absolute differences.
    pub smoothing_eps: f64,
}

impl Default for TvConfig {
    fn default() -> Self {
        Self { lambda: 0.01, max_iters: 2000, tol: 1e-5, smoothing_eps: 0.0 }
    }
}

impl TvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Argument(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Argument(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::Argument("max_iters must be at least 1".into()));
        }
        if !(self.smoothing_eps >= 0.0) {
            return Err(Error::Argument(format!("smoothing_eps must be non-negative, got {}", self.smoothing_eps)));
        }
        Ok(())
    }
}

/// Result of a solve, with the objective after every outer iteration.
#[derive(Debug, Clone)]
pub struct TvSolution {
    pub image: ImagePlane,
    /// `F(x_0), F(x_1), ...`; non-increasing.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

/// The measurement operator `Φ` for a fixed image size.
struct BlockOperator<'a> {
    matrix: &'a BlockMatrix,
    width: usize,
    height: usize,
}

impl<'a> BlockOperator<'a> {
    fn new(matrix: &'a BlockMatrix, tensor: &MeasurementTensor, width: usize, height: usize) -> Result<Self> {
        tensor.check_provenance(matrix.fingerprint())?;
        let b = matrix.block_size();
        if width % b != 0 || height % b != 0 {
            return Err(Error::Tiling { width, height, block: b });
        }
        if tensor.shape() != (height / b, width / b, matrix.rows()) {
            return Err(Error::Dimension(format!(
                "tensor {:?} does not match a {width}x{height} image with {} measurements per {b}x{b} block",
                tensor.shape(),
                matrix.rows()
            )));
        }
        Ok(Self { matrix, width, height })
    }

    fn grid(&self) -> (usize, usize) {
        let b = self.matrix.block_size();
        (self.height / b, self.width / b)
    }

    /// `Φ x` in tensor order.
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let b = self.matrix.block_size();
        let rows = self.matrix.rows();
        let (gh, gw) = self.grid();
        for bi in 0..gh {
            for bj in 0..gw {
                let cell = &mut out[(bi * gw + bj) * rows..(bi * gw + bj + 1) * rows];
                for (m, y) in cell.iter_mut().enumerate() {
                    let row = self.matrix.row(m);
                    let mut acc = 0.0;
                    for r in 0..b {
                        let base = (bi * b + r) * self.width + bj * b;
                        for c in 0..b {
                            if row[r * b + c] == 1 {
                                acc += x[base + c];
                            }
                        }
                    }
                    *y = acc;
                }
            }
        }
    }

    /// `Φᵀ r` as an image.
    fn adjoint(&self, r: &[f64], out: &mut [f64]) {
        let b = self.matrix.block_size();
        let rows = self.matrix.rows();
        let (gh, gw) = self.grid();
        out.iter_mut().for_each(|v| *v = 0.0);
        for bi in 0..gh {
            for bj in 0..gw {
                let cell = &r[(bi * gw + bj) * rows..(bi * gw + bj + 1) * rows];
                for (m, &res) in cell.iter().enumerate() {
                    let row = self.matrix.row(m);
                    for rr in 0..b {
                        let base = (bi * b + rr) * self.width + bj * b;
                        for c in 0..b {
                            if row[rr * b + c] == 1 {
                                out[base + c] += res;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Largest eigenvalue of `AᵀA` by power iteration from the all-ones vector.
/// Every block of `Φ` is `A`, so this is also `‖Φ‖²`.
fn spectral_norm_sq(matrix: &BlockMatrix) -> f64 {
    let n = matrix.cols();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut av = vec![0.0; matrix.rows()];
    let mut estimate = 0.0;
    for _ in 0..POWER_ITERS {
        for (m, y) in av.iter_mut().enumerate() {
            *y = matrix.row(m).iter().zip(&v).map(|(&b, x)| f64::from(b) * x).sum();
        }
        let mut w = vec![0.0; n];
        for (m, &y) in av.iter().enumerate() {
            for (wi, &b) in w.iter_mut().zip(matrix.row(m)) {
                *wi += f64::from(b) * y;
            }
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        estimate = w.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        v = w.into_iter().map(|x| x / norm).collect();
    }
    estimate
}

fn tv_term(x: &[f64], width: usize, height: usize, eps: f64) -> f64 {
    let penalty = |d: f64| if eps > 0.0 { (d * d + eps * eps).sqrt() - eps } else { d.abs() };
    let mut total = 0.0;
    for r in 0..height {
        for c in 0..width {
            let v = x[r * width + c];
            if r + 1 < height {
                total += penalty(x[(r + 1) * width + c] - v);
            }
            if c + 1 < width {
                total += penalty(x[r * width + c + 1] - v);
            }
        }
    }
    total
}

struct Objective<'a> {
    op: BlockOperator<'a>,
    y: &'a [f64],
    lambda: f64,
    eps: f64,
    scratch: Vec<f64>,
}

impl Objective<'_> {
    fn value(&mut self, x: &[f64]) -> f64 {
        self.op.apply(x, &mut self.scratch);
        let data: f64 = self.scratch.iter().zip(self.y).map(|(a, b)| (a - b) * (a - b)).sum();
        data + self.lambda * tv_term(x, self.op.width, self.op.height, self.eps)
    }

    /// `∇‖Φx - y‖² = 2 Φᵀ(Φx - y)`.
    fn gradient(&mut self, x: &[f64], out: &mut [f64]) {
        self.op.apply(x, &mut self.scratch);
        for (s, y) in self.scratch.iter_mut().zip(self.y) {
            *s = 2.0 * (*s - y);
        }
        self.op.adjoint(&self.scratch, out);
    }
}

/// `F(x)` for an image `x`.
pub fn objective_value(
    matrix: &BlockMatrix,
    tensor: &MeasurementTensor,
    x: &ImagePlane,
    config: &TvConfig,
) -> Result<f64> {
    let op = BlockOperator::new(matrix, tensor, x.width(), x.height())?;
    let mut obj = Objective {
        op,
        y: tensor.values(),
        lambda: config.lambda,
        eps: config.smoothing_eps,
        scratch: vec![0.0; tensor.len()],
    };
    Ok(obj.value(x.pixels()))
}

/// Dual state and buffers for the TV + box proximal map.
struct TvProx {
    width: usize,
    height: usize,
    /// Vertical dual, `(h-1) x w`.
    p: Vec<f64>,
    /// Horizontal dual, `h x (w-1)`.
    q: Vec<f64>,
    r: Vec<f64>,
    s: Vec<f64>,
    p_old: Vec<f64>,
    q_old: Vec<f64>,
    x: Vec<f64>,
}

impl TvProx {
    fn new(width: usize, height: usize) -> Self {
        let np = height.saturating_sub(1) * width;
        let nq = height * width.saturating_sub(1);
        Self {
            width,
            height,
            p: vec![0.0; np],
            q: vec![0.0; nq],
            r: vec![0.0; np],
            s: vec![0.0; nq],
            p_old: vec![0.0; np],
            q_old: vec![0.0; nq],
            x: vec![0.0; width * height],
        }
    }

    /// `out = P_[0,1](v - mu * L(p, q))` where `L` is the adjoint of the
    /// forward-difference operator.
    fn primal(&self, v: &[f64], p: &[f64], q: &[f64], mu: f64, out: &mut [f64]) {
        let (w, h) = (self.width, self.height);
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                let mut l = 0.0;
                if r + 1 < h {
                    l += p[i];
                }
                if r > 0 {
                    l -= p[i - w];
                }
                if c + 1 < w {
                    l += q[r * (w - 1) + c];
                }
                if c > 0 {
                    l -= q[r * (w - 1) + c - 1];
                }
                out[i] = (v[i] - mu * l).clamp(0.0, 1.0);
            }
        }
    }

    /// Approximately solves `min_x ½‖x - v‖² + mu TV(x)` over `[0,1]^N`.
    fn solve(&mut self, v: &[f64], mu: f64, out: &mut [f64]) {
        let (w, h) = (self.width, self.height);
        if mu <= 0.0 {
            out.iter_mut().zip(v).for_each(|(o, &x)| *o = x.clamp(0.0, 1.0));
            return;
        }
        self.r.copy_from_slice(&self.p);
        self.s.copy_from_slice(&self.q);
        let step = 1.0 / (8.0 * mu);
        let mut t = 1.0f64;
        let mut x = std::mem::take(&mut self.x);
        for _ in 0..INNER_ITERS {
            self.p_old.copy_from_slice(&self.p);
            self.q_old.copy_from_slice(&self.q);
            self.primal(v, &self.r, &self.s, mu, &mut x);
            // forward differences x_i - x_{i+1}, projected onto [-1, 1]
            for r in 0..h.saturating_sub(1) {
                for c in 0..w {
                    let i = r * w + c;
                    self.p[i] = (self.r[i] + step * (x[i] - x[i + w])).clamp(-1.0, 1.0);
                }
            }
            for r in 0..h {
                for c in 0..w.saturating_sub(1) {
                    let i = r * (w - 1) + c;
                    let xi = r * w + c;
                    self.q[i] = (self.s[i] + step * (x[xi] - x[xi + 1])).clamp(-1.0, 1.0);
                }
            }
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let beta = (t - 1.0) / t_next;
            for i in 0..self.p.len() {
                self.r[i] = self.p[i] + beta * (self.p[i] - self.p_old[i]);
            }
            for i in 0..self.q.len() {
                self.s[i] = self.q[i] + beta * (self.q[i] - self.q_old[i]);
            }
            t = t_next;
        }
        self.primal(v, &self.p, &self.q, mu, out);
        self.x = x;
    }
}

/// Reconstructs a `width x height` image from `tensor`, which must have been
/// sampled with `matrix`.
pub fn tv_reconstruct(
    matrix: &BlockMatrix,
    tensor: &MeasurementTensor,
    width: usize,
    height: usize,
    config: &TvConfig,
) -> Result<ImagePlane> {
    Ok(tv_reconstruct_traced(matrix, tensor, width, height, config)?.image)
}

pub fn tv_reconstruct_traced(
    matrix: &BlockMatrix,
    tensor: &MeasurementTensor,
    width: usize,
    height: usize,
    config: &TvConfig,
) -> Result<TvSolution> {
    config.validate()?;
    let op = BlockOperator::new(matrix, tensor, width, height)?;
    if tensor.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("measurements contain non-finite values".into()));
    }
    let n = width * height;
    let lipschitz = 2.0 * spectral_norm_sq(matrix) * LIPSCHITZ_MARGIN;
    let mut obj = Objective {
        op,
        y: tensor.values(),
        lambda: config.lambda,
        eps: config.smoothing_eps,
        scratch: vec![0.0; tensor.len()],
    };

    let mut x = vec![0.0; n];
    let mut f_x = obj.value(&x);
    let mut trace = vec![f_x];
    if !f_x.is_finite() {
        return Err(Error::Numerical("initial objective is not finite".into()));
    }
    if lipschitz == 0.0 || f_x == 0.0 {
        // all-zero matrix or data already explained by the zero image
        let image = ImagePlane::new(width, height, x)?;
        return Ok(TvSolution { image, objective_trace: trace, iterations: 0 });
    }

    let step = 1.0 / lipschitz;
    let mu = config.lambda * step;
    let mut prox = TvProx::new(width, height);
    let mut y = x.clone();
    let mut x_prev = x.clone();
    let mut z = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut t = 1.0f64;
    let mut rejections = 0;
    let mut iterations = 0;

    for _ in 0..config.max_iters {
        iterations += 1;
        obj.gradient(&y, &mut grad);
        for (g, &yi) in grad.iter_mut().zip(&y) {
            *g = yi - step * *g;
        }
        prox.solve(&grad, mu, &mut z);
        let f_z = obj.value(&z);
        if !f_z.is_finite() {
            return Err(Error::Numerical(format!("objective became {f_z} at iteration {iterations}")));
        }
        x_prev.copy_from_slice(&x);
        let f_prev = f_x;
        let accepted = f_z <= f_x;
        if accepted {
            x.copy_from_slice(&z);
            f_x = f_z;
            rejections = 0;
        } else {
            rejections += 1;
        }
        trace.push(f_x);

        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let a = t / t_next;
        let b = (t - 1.0) / t_next;
        for i in 0..n {
            y[i] = x[i] + a * (z[i] - x[i]) + b * (x[i] - x_prev[i]);
        }
        t = t_next;

        if accepted && (f_x == 0.0 || (f_prev - f_x) / f_prev < config.tol) {
            break;
        }
        if rejections >= MAX_REJECTIONS {
            break;
        }
    }

    let image = ImagePlane::from_clamped(width, height, x)?;
    Ok(TvSolution { image, objective_trace: trace, iterations })
}
