//! Linear degradation models `y = A x + noise`, the quadratic data term and
//! the regularized pseudo-inverse initializer.
//!
//! Mask operators are kept as index sets and never materialized as matrices;
//! their pseudo-inverse and the solvers' x-updates use the per-pixel closed
//! forms instead of an n×n system.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{conjugate_gradient, dot, Matrix};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub enum LinearOperator {
    Identity,
    /// Known-pixel index set (sorted, unique); `A` selects those pixels.
    Mask(Vec<usize>),
    /// Dense `m × n` measurement matrix.
    Dense(Matrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegradationModel {
    operator: LinearOperator,
    /// Noise standard deviation on the [0,1] pixel scale.
    pub sigma: f64,
    n: usize,
    /// Seed used to construct the operator (0 when none was involved).
    pub seed: u64,
}

impl DegradationModel {
    pub fn new(operator: LinearOperator, sigma: f64, n: usize, seed: u64) -> Result<Self> {
        if sigma <= 0.0 || !sigma.is_finite() {
            return Err(Error::param(format!("sigma must be > 0, got {sigma}")));
        }
        match &operator {
            LinearOperator::Identity => {}
            LinearOperator::Mask(idx) => {
                if idx.is_empty() {
                    return Err(Error::param("mask index set is empty"));
                }
                if !idx.windows(2).all(|w| w[0] < w[1]) {
                    return Err(Error::param("mask indices must be sorted and unique"));
                }
                if *idx.last().unwrap() >= n {
                    return Err(Error::param(format!(
                        "mask index {} out of range for n = {n}",
                        idx.last().unwrap()
                    )));
                }
            }
            LinearOperator::Dense(a) => {
                if a.cols() != n {
                    return Err(Error::shape(format!(
                        "dense operator has {} columns, expected {n}",
                        a.cols()
                    )));
                }
                if a.rows() == 0 {
                    return Err(Error::param("dense operator needs at least one row"));
                }
                if !a.is_finite() {
                    return Err(Error::numeric(
                        "dense operator has non-finite entries".to_string(),
                    ));
                }
            }
        }
        Ok(DegradationModel {
            operator,
            sigma,
            n,
            seed,
        })
    }

    /// Identity operator (pure denoising).
    pub fn denoise(n: usize, sigma: f64) -> Result<Self> {
        DegradationModel::new(LinearOperator::Identity, sigma, n, 0)
    }

    /// Compressed sensing: dense `m × n` matrix with i.i.d. `N(0, 1/m)`
    /// entries from the seeded generator.
    pub fn compressed_sensing(n: usize, m: usize, sigma: f64, seed: u64) -> Result<Self> {
        if m == 0 || m > n {
            return Err(Error::param(format!("need 1 ≤ m ≤ {n}, got m = {m}")));
        }
        let mut r = rng::seeded(seed);
        let scale = (1.0 / m as f64).sqrt();
        let mut a = Matrix::zeros(m, n);
        for v in a.data_mut() {
            let e: f64 = StandardNormal.sample(&mut r);
            *v = scale * e;
        }
        DegradationModel::new(LinearOperator::Dense(a), sigma, n, seed)
    }

    /// Inpainting with a uniformly random known-pixel set of the given size.
    pub fn inpainting_count(n: usize, known: usize, sigma: f64, seed: u64) -> Result<Self> {
        if known == 0 {
            return Err(Error::param("known-pixel set is empty"));
        }
        if known > n {
            return Err(Error::param(format!("known = {known} exceeds n = {n}")));
        }
        if known == n {
            return DegradationModel::new(LinearOperator::Identity, sigma, n, seed);
        }
        // Partial Fisher–Yates: the first `known` entries are a uniform sample.
        let mut r = rng::seeded(seed);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..known {
            let j = r.gen_range(i..n);
            pool.swap(i, j);
        }
        let mut idx: Vec<usize> = pool[..known].to_vec();
        idx.sort_unstable();
        DegradationModel::new(LinearOperator::Mask(idx), sigma, n, seed)
    }

    /// Inpainting keeping `round(fraction · n)` pixels.
    pub fn inpainting_fraction(n: usize, fraction: f64, sigma: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::param(format!(
                "known fraction must be in [0,1], got {fraction}"
            )));
        }
        let known = (fraction * n as f64).round() as usize;
        DegradationModel::inpainting_count(n, known, sigma, seed)
    }

    pub fn operator(&self) -> &LinearOperator {
        &self.operator
    }

    /// Image dimension (columns of `A`).
    pub fn n(&self) -> usize {
        self.n
    }

    /// Measurement count (rows of `A`).
    pub fn m(&self) -> usize {
        match &self.operator {
            LinearOperator::Identity => self.n,
            LinearOperator::Mask(idx) => idx.len(),
            LinearOperator::Dense(a) => a.rows(),
        }
    }

    /// `out = A x`.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.n, "apply: input length");
        assert_eq!(out.len(), self.m(), "apply: output length");
        match &self.operator {
            LinearOperator::Identity => out.copy_from_slice(x),
            LinearOperator::Mask(idx) => {
                for (o, &i) in out.iter_mut().zip(idx) {
                    *o = x[i];
                }
            }
            LinearOperator::Dense(a) => a.matvec(x, out),
        }
    }

    /// `out = Aᵀ v`.
    pub fn apply_t_into(&self, v: &[f64], out: &mut [f64]) {
        assert_eq!(v.len(), self.m(), "apply_t: input length");
        assert_eq!(out.len(), self.n, "apply_t: output length");
        match &self.operator {
            LinearOperator::Identity => out.copy_from_slice(v),
            LinearOperator::Mask(idx) => {
                out.fill(0.0);
                for (&vi, &i) in v.iter().zip(idx) {
                    out[i] = vi;
                }
            }
            LinearOperator::Dense(a) => a.matvec_t(v, out),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m()];
        self.apply_into(x, &mut out);
        out
    }

    pub fn apply_t(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.apply_t_into(v, &mut out);
        out
    }

    /// Replayable structured-text description (operator kind, seed, sizes,
    /// σ; mask index lists spelled out).
    pub fn config_text(&self) -> String {
        let mut s = String::new();
        let kind = match &self.operator {
            LinearOperator::Identity => "identity",
            LinearOperator::Mask(_) => "mask",
            LinearOperator::Dense(_) => "dense",
        };
        writeln!(s, "operator = {kind}").unwrap();
        writeln!(s, "n = {}", self.n).unwrap();
        writeln!(s, "m = {}", self.m()).unwrap();
        writeln!(s, "sigma = {}", self.sigma).unwrap();
        writeln!(s, "seed = {}", self.seed).unwrap();
        if let LinearOperator::Mask(idx) = &self.operator {
            let list: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
            writeln!(s, "mask = {}", list.join(",")).unwrap();
        }
        s
    }
}

/// One degraded observation with its provenance.
#[derive(Debug, Clone)]
pub struct Observation {
    pub y: Vec<f64>,
    pub model: DegradationModel,
    pub ground_truth: Option<Vec<f64>>,
    pub seed: u64,
}

/// `y = A x + σ ε` with `ε ~ N(0, I_m)` from the seeded generator.
pub fn degrade(model: &DegradationModel, x_true: &[f64], seed: u64) -> Observation {
    let mut y = model.apply(x_true);
    let mut r = rng::seeded(seed);
    for v in y.iter_mut() {
        let e: f64 = StandardNormal.sample(&mut r);
        *v += model.sigma * e;
    }
    Observation {
        y,
        model: model.clone(),
        ground_truth: Some(x_true.to_vec()),
        seed,
    }
}

/// Data term `F(x, y) = ‖A x − y‖² / (2σ²)`.
pub fn data_term(model: &DegradationModel, x: &[f64], y: &[f64]) -> f64 {
    let ax = model.apply(x);
    assert_eq!(ax.len(), y.len(), "data_term: y length");
    let mut acc = 0.0;
    for (a, b) in ax.iter().zip(y) {
        let d = a - b;
        acc += d * d;
    }
    acc / (2.0 * model.sigma * model.sigma)
}

/// Regularized pseudo-inverse `x0 = (AᵀA + εI)⁻¹ Aᵀ y`.
///
/// Identity and mask operators use the per-pixel closed form; dense
/// operators go through conjugate gradient on the `n × n` normal system.
pub fn pseudo_inverse_init(model: &DegradationModel, y: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    if epsilon <= 0.0 {
        return Err(Error::param(format!("epsilon must be > 0, got {epsilon}")));
    }
    assert_eq!(y.len(), model.m(), "pseudo_inverse_init: y length");
    match model.operator() {
        LinearOperator::Identity => Ok(y.iter().map(|v| v / (1.0 + epsilon)).collect()),
        LinearOperator::Mask(idx) => {
            let mut x = vec![0.0; model.n()];
            for (&yi, &i) in y.iter().zip(idx) {
                x[i] = yi / (1.0 + epsilon);
            }
            Ok(x)
        }
        LinearOperator::Dense(_) => {
            let b = model.apply_t(y);
            let mut t = vec![0.0; model.m()];
            let apply = move |v: &[f64], out: &mut [f64]| {
                model.apply_into(v, &mut t);
                model.apply_t_into(&t, out);
                for (o, vi) in out.iter_mut().zip(v) {
                    *o += epsilon * vi;
                }
            };
            let sol = conjugate_gradient(apply, &b, None, 1e-12, 10 * model.n())?;
            Ok(sol.x)
        }
    }
}

/// `⟨Ax, v⟩ − ⟨x, Aᵀv⟩`, for adjoint consistency checks.
pub fn adjoint_gap(model: &DegradationModel, x: &[f64], v: &[f64]) -> f64 {
    dot(&model.apply(x), v) - dot(x, &model.apply_t(v))
}
