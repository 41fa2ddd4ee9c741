//! Iterative restoration schemes over the joint energy.
//!
//! * [`gd_z`] — Adam descent of `z ↦ J1(x, z)` at fixed `x`, returning the
//!   best-seen iterate so the energy never increases.
//! * [`algorithm1`] — plain alternation `z ← μφ(x)`, `x ← argmin J1(·, z)`.
//!   Fast, but only guaranteed monotone when the encoder surrogate is exact;
//!   any energy increase is flagged in the report instead of hidden.
//! * [`algorithm2`] — per outer step builds three z-candidates (descent from
//!   the previous z, the encoder mean, descent from the encoder mean) and
//!   keeps the best under `J1`. Monotone by construction.
//! * [`algorithm3`] — takes the encoder mean as long as it keeps lowering
//!   `J1` and the iteration count is ≤ `n_min`; afterwards falls back to
//!   descent from the better of {previous z, encoder mean}.
//! * [`csgm`] — the no-encoder baseline: descend
//!   `F(μθ(z), y) + λ‖z‖²` from one or more restarts.
//! * [`multi_start_validation`] — descend `z ↦ J1(x0, z)` from many seeded
//!   starts and measure how often they reach the same minimum.

use std::time::{Duration, Instant};

use rand_distr::{Distribution, StandardNormal};

use crate::degradation::{data_term, DegradationModel};
use crate::energy::EnergyContext;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm2};
use crate::optim::{AdamConfig, AdamState};
use crate::report::sig17;
use crate::rng;
use crate::vae::VaeModel;

/// Inner gradient-descent budget for the z-minimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdConfig {
    pub lr: f64,
    pub max_iters: usize,
    /// Stop when `|J1_k − J1_{k−5}| / (1 + |J1_k|) < rel_tol`; 0 disables.
    pub rel_tol: f64,
}

impl Default for GdConfig {
    fn default() -> Self {
        GdConfig {
            lr: 0.01,
            max_iters: 200,
            rel_tol: 1e-6,
        }
    }
}

impl GdConfig {
    fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 {
            return Err(Error::param("gd learning rate must be > 0"));
        }
        if self.max_iters == 0 {
            return Err(Error::param("gd max_iters must be ≥ 1"));
        }
        if self.rel_tol < 0.0 {
            return Err(Error::param("gd rel_tol must be ≥ 0"));
        }
        Ok(())
    }
}

/// How the outer loop obtains its starting image.
#[derive(Debug, Clone, PartialEq)]
pub enum XInit {
    /// Regularized pseudo-inverse `(AᵀA + εI)⁻¹Aᵀy`.
    PseudoInverse { epsilon: f64 },
    Provided(Vec<f64>),
}

/// How the outer loop obtains its starting latent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZInit {
    Zeros,
    /// `z0 ~ N(0, I)` from the solver seed.
    Gaussian,
    /// `z0 = μφ(x0)`.
    EncoderOfX0,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Algorithm 3 takes the fast branch only while `n ≤ n_min`.
    pub n_min: usize,
    pub n_max: usize,
    pub gd: GdConfig,
    pub x_init: XInit,
    pub z_init: ZInit,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            n_min: 5,
            n_max: 30,
            gd: GdConfig::default(),
            x_init: XInit::PseudoInverse { epsilon: 1e-3 },
            z_init: ZInit::EncoderOfX0,
            seed: 0,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if self.n_min >= self.n_max {
            return Err(Error::param(format!(
                "need n_min < n_max, got {} ≥ {}",
                self.n_min, self.n_max
            )));
        }
        self.gd.validate()
    }

    /// Key/value echo of every knob, for report headers.
    pub fn config_text(&self) -> String {
        let x_init = match &self.x_init {
            XInit::PseudoInverse { epsilon } => format!("pseudo_inverse(eps={epsilon})"),
            XInit::Provided(_) => "provided".to_string(),
        };
        let z_init = match self.z_init {
            ZInit::Zeros => "zeros",
            ZInit::Gaussian => "gaussian",
            ZInit::EncoderOfX0 => "encoder_of_x0",
        };
        format!(
            "n_min = {}\nn_max = {}\ngd_lr = {}\ngd_max_iters = {}\ngd_rel_tol = {}\nx_init = {}\nz_init = {}\nseed = {}\n",
            self.n_min,
            self.n_max,
            self.gd.lr,
            self.gd.max_iters,
            self.gd.rel_tol,
            x_init,
            z_init,
            self.seed
        )
    }
}

/// Which z-step produced the accepted iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Algorithm 2: descent from the previous z won.
    Z0,
    /// Encoder mean won (also the unconditional z-step of Algorithm 1).
    Z1,
    /// Algorithm 2: descent from the encoder mean won.
    Z2,
    /// Algorithm 3: descent fallback.
    Gd,
    /// Algorithm 3: encoder mean taken without descent.
    Fast,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Z0 => "z0",
            Branch::Z1 => "z1",
            Branch::Z2 => "z2",
            Branch::Gd => "gd",
            Branch::Fast => "fast",
        }
    }
}

/// One outer iteration of any of the algorithms.
#[derive(Debug, Clone)]
pub struct IterRecord {
    pub n: usize,
    /// `J1(x_n, z_n)` before the z-step.
    pub j1_pre: f64,
    /// `J1(x_n, z_{n+1})` after the z-step.
    pub j1_post_z: f64,
    /// `J1(x_{n+1}, z_{n+1})` after the x-step.
    pub j1_post_x: f64,
    pub branch: Branch,
    /// `‖∇z J1(x_n, ·)‖` at the accepted z.
    pub grad_z_norm: f64,
    /// Inner descent iterations spent this outer step.
    pub gd_iters: usize,
    /// Algorithm 2 only: `J1(x_n, ·)` at the three candidates `[z⁰, z¹, z²]`.
    pub candidates: Option<[f64; 3]>,
    /// Algorithm 1 only: set when this step raised `J1`.
    pub increased: bool,
}

/// Full diagnostic trace of one restoration.
#[derive(Debug, Clone)]
pub struct SolverReport {
    pub algorithm: &'static str,
    pub iterations: Vec<IterRecord>,
    pub final_x: Vec<f64>,
    pub final_z: Vec<f64>,
    /// Measured, not serialized: files must be byte-stable across reruns.
    pub wall_time: Duration,
    pub config: SolverConfig,
}

impl SolverReport {
    pub fn final_j1(&self) -> f64 {
        self.iterations.last().map_or(f64::NAN, |r| r.j1_post_x)
    }

    /// Whether any step raised `J1` by more than the slack.
    pub fn any_increase(&self, slack: f64) -> bool {
        self.iterations
            .iter()
            .any(|r| r.j1_post_z > r.j1_pre + slack || r.j1_post_x > r.j1_post_z + slack)
    }

    /// `n,j1_pre,j1_post_z,j1_post_x,branch,grad_z_norm,gd_iters` per row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,j1_pre,j1_post_z,j1_post_x,branch,grad_z_norm,gd_iters\n");
        for r in &self.iterations {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.n,
                sig17(r.j1_pre),
                sig17(r.j1_post_z),
                sig17(r.j1_post_x),
                r.branch.as_str(),
                sig17(r.grad_z_norm),
                r.gd_iters
            ));
        }
        s
    }

    /// Structured text: config echo then one record per iteration
    /// (including Algorithm 2's candidate energies when present).
    pub fn to_text(&self) -> String {
        let mut s = format!("algorithm = {}\n", self.algorithm);
        s.push_str(&self.config.config_text());
        for r in &self.iterations {
            s.push_str(&format!(
                "iter n={} j1_pre={} j1_post_z={} j1_post_x={} branch={} grad_z_norm={} gd_iters={}",
                r.n,
                sig17(r.j1_pre),
                sig17(r.j1_post_z),
                sig17(r.j1_post_x),
                r.branch.as_str(),
                sig17(r.grad_z_norm),
                r.gd_iters
            ));
            if let Some(c) = r.candidates {
                s.push_str(&format!(
                    " cand_z0={} cand_z1={} cand_z2={}",
                    sig17(c[0]),
                    sig17(c[1]),
                    sig17(c[2])
                ));
            }
            if r.increased {
                s.push_str(" increased=1");
            }
            s.push('\n');
        }
        s.push_str(&format!("final_j1 = {}\n", sig17(self.final_j1())));
        s
    }
}

/// Outcome of one z-descent.
#[derive(Debug, Clone)]
pub struct GdResult {
    /// Best-seen iterate (lowest `J1`), not necessarily the last.
    pub z: Vec<f64>,
    pub j1_at_z: f64,
    /// `J1` along the trajectory, starting with the value at `z_init`.
    pub trace: Vec<f64>,
    /// The trajectory itself (same indexing as `trace`).
    pub z_trace: Vec<Vec<f64>>,
    /// Adam iterations actually run.
    pub iters: usize,
}

/// Adam descent of `z ↦ J1(x, z)` at fixed `x`; returns the best-seen
/// iterate, so `J1(x, result.z) ≤ J1(x, z_init)` always holds.
pub fn gd_z(ctx: &EnergyContext, x: &[f64], z_init: &[f64], cfg: &GdConfig) -> Result<GdResult> {
    cfg.validate()?;
    let f_const = data_term(ctx.deg, x, ctx.y);

    let mut z = z_init.to_vec();
    let (c0, mut grad) = ctx.coupling_and_grad_z(x, &z)?;
    let mut j1 = f_const + c0;
    if !j1.is_finite() {
        return Err(Error::numeric(format!("J1 at z_init is {j1}")));
    }

    let mut best_z = z.clone();
    let mut best_j1 = j1;
    let mut trace = Vec::with_capacity(cfg.max_iters + 1);
    let mut z_trace = Vec::with_capacity(cfg.max_iters + 1);
    trace.push(j1);
    z_trace.push(z.clone());

    let mut adam = AdamState::new(z.len(), AdamConfig::new(cfg.lr));
    let mut iters = 0;
    for k in 1..=cfg.max_iters {
        adam.step(&mut z, &grad)?;
        let (c, g) = ctx.coupling_and_grad_z(x, &z)?;
        j1 = f_const + c;
        grad = g;
        if !j1.is_finite() {
            return Err(Error::numeric(format!("J1 diverged at gd iteration {k}")));
        }
        trace.push(j1);
        z_trace.push(z.clone());
        if j1 < best_j1 {
            best_j1 = j1;
            best_z.copy_from_slice(&z);
        }
        iters = k;
        if cfg.rel_tol > 0.0 && k >= 5 {
            let prev = trace[k - 5];
            if (j1 - prev).abs() / (1.0 + j1.abs()) < cfg.rel_tol {
                break;
            }
        }
    }

    Ok(GdResult {
        z: best_z,
        j1_at_z: best_j1,
        trace,
        z_trace,
        iters,
    })
}

fn initial_state(ctx: &EnergyContext, cfg: &SolverConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let x0 = match &cfg.x_init {
        XInit::PseudoInverse { epsilon } => {
            crate::degradation::pseudo_inverse_init(ctx.deg, ctx.y, *epsilon)?
        }
        XInit::Provided(x) => {
            if x.len() != ctx.x_dim() {
                return Err(Error::shape(format!(
                    "provided x0 has length {}, expected {}",
                    x.len(),
                    ctx.x_dim()
                )));
            }
            x.clone()
        }
    };
    let z0 = match cfg.z_init {
        ZInit::Zeros => vec![0.0; ctx.z_dim()],
        ZInit::Gaussian => rng::normal_vec(&mut rng::seeded(cfg.seed), ctx.z_dim()),
        ZInit::EncoderOfX0 => ctx.vae.encode(&x0)?.0,
    };
    Ok((x0, z0))
}

/// Alternation assuming the encoder surrogate is exact: `z ← μφ(x)`,
/// `x ← argmin_x J1`. Energy increases are recorded, not errors.
pub fn algorithm1(ctx: &EnergyContext, cfg: &SolverConfig) -> Result<SolverReport> {
    cfg.validate()?;
    let start = Instant::now();
    let (mut x, mut z) = initial_state(ctx, cfg)?;
    let mut records = Vec::with_capacity(cfg.n_max);

    for n in 0..cfg.n_max {
        let j1_pre = ctx.j1(&x, &z)?;
        let (z_next, _) = ctx.vae.encode(&x)?;
        let j1_post_z = ctx.j1(&x, &z_next)?;
        let x_next = ctx.x_update_from(&z_next, Some(&x))?;
        let j1_post_x = ctx.j1(&x_next, &z_next)?;
        let grad_z_norm = norm2(&ctx.grad_z_j1(&x, &z_next)?);
        records.push(IterRecord {
            n,
            j1_pre,
            j1_post_z,
            j1_post_x,
            branch: Branch::Z1,
            grad_z_norm,
            gd_iters: 0,
            candidates: None,
            increased: j1_post_z > j1_pre || j1_post_x > j1_post_z,
        });
        x = x_next;
        z = z_next;
    }

    Ok(SolverReport {
        algorithm: "alg1",
        iterations: records,
        final_x: x,
        final_z: z,
        wall_time: start.elapsed(),
        config: cfg.clone(),
    })
}

/// Pick among candidate energies with ties resolved in the caller's
/// preference order (first index wins ties).
fn argmin_preferring(order: &[usize], values: &[f64]) -> usize {
    let mut best = order[0];
    for &i in &order[1..] {
        if values[i] < values[best] {
            best = i;
        }
    }
    best
}

/// Three-candidate alternation, monotone without any surrogate assumption.
pub fn algorithm2(ctx: &EnergyContext, cfg: &SolverConfig) -> Result<SolverReport> {
    cfg.validate()?;
    let start = Instant::now();
    let (mut x, mut z) = initial_state(ctx, cfg)?;
    let mut records = Vec::with_capacity(cfg.n_max);

    for n in 0..cfg.n_max {
        let j1_pre = ctx.j1(&x, &z)?;

        // z⁰: descend from the previous iterate.
        let r0 = gd_z(ctx, &x, &z, &cfg.gd)?;
        // z¹: surrogate minimizer.
        let (z1, _) = ctx.vae.encode(&x)?;
        let j1_z1 = ctx.j1(&x, &z1)?;
        // z²: descend from the surrogate minimizer.
        let r2 = gd_z(ctx, &x, &z1, &cfg.gd)?;

        let energies = [r0.j1_at_z, j1_z1, r2.j1_at_z];
        // Ties prefer the cheapest path: z¹, then z⁰, then z².
        let pick = argmin_preferring(&[1, 0, 2], &energies);
        let (z_next, j1_post_z, branch) = match pick {
            0 => (r0.z.clone(), r0.j1_at_z, Branch::Z0),
            1 => (z1.clone(), j1_z1, Branch::Z1),
            _ => (r2.z.clone(), r2.j1_at_z, Branch::Z2),
        };

        let x_next = ctx.x_update_from(&z_next, Some(&x))?;
        let j1_post_x = ctx.j1(&x_next, &z_next)?;
        let grad_z_norm = norm2(&ctx.grad_z_j1(&x, &z_next)?);
        records.push(IterRecord {
            n,
            j1_pre,
            j1_post_z,
            j1_post_x,
            branch,
            grad_z_norm,
            gd_iters: r0.iters + r2.iters,
            candidates: Some(energies),
            increased: false,
        });
        x = x_next;
        z = z_next;
    }

    Ok(SolverReport {
        algorithm: "alg2",
        iterations: records,
        final_x: x,
        final_z: z,
        wall_time: start.elapsed(),
        config: cfg.clone(),
    })
}

/// Faster variant: keep taking the encoder mean while it lowers the energy
/// and `n ≤ n_min`; otherwise descend from the better of the two.
pub fn algorithm3(ctx: &EnergyContext, cfg: &SolverConfig) -> Result<SolverReport> {
    cfg.validate()?;
    let start = Instant::now();
    let (mut x, mut z) = initial_state(ctx, cfg)?;
    let mut records = Vec::with_capacity(cfg.n_max);

    for n in 0..cfg.n_max {
        let j1_pre = ctx.j1(&x, &z)?;
        let (z1, _) = ctx.vae.encode(&x)?;
        let j1_z1 = ctx.j1(&x, &z1)?;

        let (z_next, j1_post_z, branch, gd_iters) = if j1_z1 > j1_pre || n > cfg.n_min {
            // z* = better of {z_n, z¹} (tie prefers z¹), then descend.
            let (z_star, j_star) = if j1_z1 <= j1_pre {
                (z1.clone(), j1_z1)
            } else {
                (z.clone(), j1_pre)
            };
            let r = gd_z(ctx, &x, &z_star, &cfg.gd)?;
            debug_assert!(r.j1_at_z <= j_star + 1e-12);
            (r.z, r.j1_at_z, Branch::Gd, r.iters)
        } else {
            (z1.clone(), j1_z1, Branch::Fast, 0)
        };

        let x_next = ctx.x_update_from(&z_next, Some(&x))?;
        let j1_post_x = ctx.j1(&x_next, &z_next)?;
        let grad_z_norm = norm2(&ctx.grad_z_j1(&x, &z_next)?);
        records.push(IterRecord {
            n,
            j1_pre,
            j1_post_z,
            j1_post_x,
            branch,
            grad_z_norm,
            gd_iters,
            candidates: None,
            increased: false,
        });
        x = x_next;
        z = z_next;
    }

    Ok(SolverReport {
        algorithm: "alg3",
        iterations: records,
        final_x: x,
        final_z: z,
        wall_time: start.elapsed(),
        config: cfg.clone(),
    })
}

/// One restart of the no-encoder baseline.
#[derive(Debug, Clone)]
pub struct CsgmRestart {
    pub z_init: Vec<f64>,
    /// `F(μθ(z), y) + λ‖z‖²` along the trajectory.
    pub trace: Vec<f64>,
    pub z: Vec<f64>,
    pub objective: f64,
    pub iters: usize,
}

#[derive(Debug, Clone)]
pub struct CsgmReport {
    pub lambda: f64,
    pub restarts: Vec<CsgmRestart>,
    /// Index of the restart with the lowest final objective.
    pub best: usize,
    pub wall_time: Duration,
}

/// Descend `z ↦ F(μθ(z), y) + λ‖z‖²` from `z_init` (restart 0) and
/// `restarts − 1` further Gaussian starts drawn from `seed`. Returns
/// `μθ(z_best)` of the best restart plus all traces.
pub fn csgm(
    ctx: &EnergyContext,
    lambda: f64,
    z_init: &[f64],
    cfg: &GdConfig,
    restarts: usize,
    seed: u64,
) -> Result<(Vec<f64>, CsgmReport)> {
    cfg.validate()?;
    if lambda < 0.0 {
        return Err(Error::param("lambda must be ≥ 0"));
    }
    if restarts == 0 {
        return Err(Error::param("need at least one restart"));
    }
    let start = Instant::now();
    let mut stream = rng::seeded(seed);
    let mut runs = Vec::with_capacity(restarts);

    for r in 0..restarts {
        let z0 = if r == 0 {
            z_init.to_vec()
        } else {
            rng::normal_vec(&mut stream, ctx.z_dim())
        };
        runs.push(csgm_descent(ctx, lambda, &z0, cfg)?);
    }

    let best = runs
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.objective.partial_cmp(&b.objective).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let x_hat = ctx.vae.decode(&runs[best].z)?;
    Ok((
        x_hat,
        CsgmReport {
            lambda,
            restarts: runs,
            best,
            wall_time: start.elapsed(),
        },
    ))
}

fn csgm_descent(
    ctx: &EnergyContext,
    lambda: f64,
    z_init: &[f64],
    cfg: &GdConfig,
) -> Result<CsgmRestart> {
    let mut z = z_init.to_vec();
    let (mut obj, mut grad) = csgm_objective_and_grad(ctx, lambda, &z)?;
    let mut best_z = z.clone();
    let mut best = obj;
    let mut trace = vec![obj];
    let mut adam = AdamState::new(z.len(), AdamConfig::new(cfg.lr));
    let mut iters = 0;
    for k in 1..=cfg.max_iters {
        adam.step(&mut z, &grad)?;
        let (o, g) = csgm_objective_and_grad(ctx, lambda, &z)?;
        obj = o;
        grad = g;
        if !obj.is_finite() {
            return Err(Error::numeric(format!("objective diverged at iteration {k}")));
        }
        trace.push(obj);
        if obj < best {
            best = obj;
            best_z.copy_from_slice(&z);
        }
        iters = k;
        if cfg.rel_tol > 0.0 && k >= 5 {
            let prev = trace[k - 5];
            if (obj - prev).abs() / (1.0 + obj.abs()) < cfg.rel_tol {
                break;
            }
        }
    }
    Ok(CsgmRestart {
        z_init: z_init.to_vec(),
        trace,
        z: best_z,
        objective: best,
        iters,
    })
}

fn csgm_objective_and_grad(
    ctx: &EnergyContext,
    lambda: f64,
    z: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let sigma2 = ctx.deg.sigma * ctx.deg.sigma;
    let (mu, tape) = ctx.vae.decode_with_tape(z)?;
    let mut am = vec![0.0; ctx.deg.m()];
    ctx.deg.apply_into(&mu, &mut am);
    let mut f = 0.0;
    for (a, yi) in am.iter_mut().zip(ctx.y) {
        *a -= yi;
        f += *a * *a;
    }
    f /= 2.0 * sigma2;
    // ∇μ F = Aᵀ(Aμ − y)/σ², then back through the decoder.
    let mut grad_mu = vec![0.0; ctx.x_dim()];
    ctx.deg.apply_t_into(&am, &mut grad_mu);
    for g in grad_mu.iter_mut() {
        *g /= sigma2;
    }
    let (_, mut grad_z) = ctx.vae.decoder().backward(&tape, &grad_mu)?;
    for (g, zi) in grad_z.iter_mut().zip(z) {
        *g += 2.0 * lambda * zi;
    }
    Ok((f + lambda * dot(z, z), grad_z))
}

/// Latent initialization scheme for [`multi_start_validation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartInit {
    /// `z0 ~ N(0, I)`.
    Gaussian,
    /// `z0 ~ N(μφ(x0), Σφ(x0))`.
    EncoderPosterior,
}

impl StartInit {
    pub fn as_str(self) -> &'static str {
        match self {
            StartInit::Gaussian => "gaussian",
            StartInit::EncoderPosterior => "encoder_posterior",
        }
    }
}

/// One trajectory of the validation experiment.
#[derive(Debug, Clone)]
pub struct StartRun {
    pub index: usize,
    pub z_init: Vec<f64>,
    pub energies: Vec<f64>,
    /// `‖z_k − z*‖` per iteration against the consensus `z*`.
    pub distances: Vec<f64>,
    pub final_z: Vec<f64>,
    pub final_energy: f64,
    pub success: bool,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub init: StartInit,
    pub starts: Vec<StartRun>,
    /// The run initialized exactly at `μφ(x0)` (the surrogate minimizer).
    pub encoder_run: StartRun,
    /// Componentwise median of the random starts' final iterates.
    pub z_star: Vec<f64>,
    pub median_final_energy: f64,
    /// `|e − median| ≤ tol · (1 + |median|)` counts as a success.
    pub success_tol: f64,
    pub success_fraction: f64,
    pub encoder_success: bool,
}

/// Minimize `z ↦ J1(x0, z)` from `n_starts` seeded initializations plus the
/// encoder initialization, and measure which fraction of starts reaches the
/// consensus energy.
///
/// `x0` is treated as a clean image: the internal context uses the identity
/// operator with `y = x0`, so the data term vanishes at `x0` and the energy
/// landscape over `z` is exactly `H(x0, z) + ½‖z‖²` up to that constant.
pub fn multi_start_validation(
    vae: &VaeModel,
    x0: &[f64],
    n_starts: usize,
    init: StartInit,
    cfg: &GdConfig,
    seed: u64,
) -> Result<ValidationReport> {
    if n_starts == 0 {
        return Err(Error::param("need at least one start"));
    }
    let deg = DegradationModel::denoise(vae.x_dim(), 1.0)?;
    let ctx = EnergyContext::new(vae, &deg, x0)?;

    let (mu_phi, logvar) = vae.encode(x0)?;
    let mut stream = rng::seeded(seed);
    let k = vae.z_dim();
    let success_tol = 1e-2;

    let mut runs: Vec<(StartRun, Vec<Vec<f64>>)> = Vec::with_capacity(n_starts + 1);
    for index in 0..n_starts {
        let mut z0 = vec![0.0; k];
        for i in 0..k {
            let e: f64 = StandardNormal.sample(&mut stream);
            z0[i] = match init {
                StartInit::Gaussian => e,
                StartInit::EncoderPosterior => mu_phi[i] + (0.5 * logvar[i]).exp() * e,
            };
        }
        let r = gd_z(&ctx, x0, &z0, cfg)?;
        runs.push((
            StartRun {
                index,
                z_init: z0,
                energies: r.trace,
                distances: Vec::new(),
                final_z: r.z,
                final_energy: r.j1_at_z,
                success: false,
            },
            r.z_trace,
        ));
    }
    let enc = gd_z(&ctx, x0, &mu_phi, cfg)?;
    let mut encoder_run = StartRun {
        index: n_starts,
        z_init: mu_phi.clone(),
        energies: enc.trace,
        distances: Vec::new(),
        final_z: enc.z,
        final_energy: enc.j1_at_z,
        success: false,
    };

    // Consensus latent: componentwise median over the random starts.
    let mut z_star = vec![0.0; k];
    let mut column = vec![0.0; n_starts];
    for i in 0..k {
        for (s, (run, _)) in runs.iter().enumerate() {
            column[s] = run.final_z[i];
        }
        z_star[i] = median(&mut column);
    }

    let mut finals: Vec<f64> = runs.iter().map(|(r, _)| r.final_energy).collect();
    let median_final_energy = median(&mut finals);
    let succeeds =
        |e: f64| (e - median_final_energy).abs() <= success_tol * (1.0 + median_final_energy.abs());

    let mut successes = 0;
    let mut starts = Vec::with_capacity(n_starts);
    for (mut run, z_trace) in runs {
        run.distances = z_trace
            .iter()
            .map(|z| {
                let mut d = 0.0;
                for i in 0..k {
                    let t = z[i] - z_star[i];
                    d += t * t;
                }
                d.sqrt()
            })
            .collect();
        run.success = succeeds(run.final_energy);
        successes += run.success as usize;
        starts.push(run);
    }
    encoder_run.distances = enc
        .z_trace
        .iter()
        .map(|z| {
            let mut d = 0.0;
            for i in 0..k {
                let t = z[i] - z_star[i];
                d += t * t;
            }
            d.sqrt()
        })
        .collect();
    encoder_run.success = succeeds(encoder_run.final_energy);

    Ok(ValidationReport {
        init,
        encoder_success: encoder_run.success,
        starts,
        encoder_run,
        z_star,
        median_final_energy,
        success_tol,
        success_fraction: successes as f64 / n_starts as f64,
    })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degradation::degrade;
    use crate::linalg::Matrix;
    use crate::nn::{Activation, Layer, MlpParams};
    use crate::vae::VaeModel;

    fn zero_decoder_model(x_dim: usize, z_dim: usize) -> VaeModel {
        let encoder = MlpParams::new(vec![Layer {
            weight: Matrix::zeros(2 * z_dim, x_dim),
            bias: vec![0.0; 2 * z_dim],
            activation: Activation::Identity,
        }])
        .unwrap();
        let decoder = MlpParams::new(vec![Layer {
            weight: Matrix::zeros(x_dim, z_dim),
            bias: vec![0.5; x_dim],
            activation: Activation::Identity,
        }])
        .unwrap();
        VaeModel::new(encoder, decoder, 0.0).unwrap()
    }

    /// Decoder x = Wz + b with WᵀW = c²I, plus the encoder that equals the
    /// true posterior of that linear-Gaussian model. Then J2's minimizer is
    /// the exact z-minimizer of J1, so alternation is exact coordinate
    /// minimization.
    fn exact_surrogate_model(seed: u64) -> VaeModel {
        let (x_dim, z_dim, c, gamma) = (5usize, 2usize, 0.8f64, 0.5f64);
        let mut r = rng::seeded(seed);
        // Two orthonormal columns scaled by c.
        let mut w1 = rng::normal_vec(&mut r, x_dim);
        let n1 = norm2(&w1);
        w1.iter_mut().for_each(|v| *v /= n1);
        let mut w2 = rng::normal_vec(&mut r, x_dim);
        let p = dot(&w1, &w2);
        for i in 0..x_dim {
            w2[i] -= p * w1[i];
        }
        let n2 = norm2(&w2);
        w2.iter_mut().for_each(|v| *v /= n2);

        let mut wdata = vec![0.0; x_dim * z_dim];
        for i in 0..x_dim {
            wdata[i * z_dim] = c * w1[i];
            wdata[i * z_dim + 1] = c * w2[i];
        }
        let b: Vec<f64> = rng::normal_vec(&mut r, x_dim).iter().map(|v| 0.3 * v).collect();
        let decoder = MlpParams::new(vec![Layer {
            weight: Matrix::from_vec(x_dim, z_dim, wdata.clone()),
            bias: b.clone(),
            activation: Activation::Identity,
        }])
        .unwrap();

        // Posterior: mean = Wᵀ(x − b)/(γ + c²), covariance s·I with
        // s = γ/(γ + c²).
        let s = gamma / (gamma + c * c);
        let mut edata = vec![0.0; 2 * z_dim * x_dim];
        let mut ebias = vec![0.0; 2 * z_dim];
        for j in 0..z_dim {
            for i in 0..x_dim {
                edata[j * x_dim + i] = wdata[i * z_dim + j] / (gamma + c * c);
                ebias[j] -= wdata[i * z_dim + j] * b[i] / (gamma + c * c);
            }
            ebias[z_dim + j] = s.ln();
        }
        let encoder = MlpParams::new(vec![Layer {
            weight: Matrix::from_vec(2 * z_dim, x_dim, edata),
            bias: ebias,
            activation: Activation::Identity,
        }])
        .unwrap();
        VaeModel::new(encoder, decoder, gamma.ln()).unwrap()
    }

    #[test]
    fn gd_z_on_a_quadratic_bowl_reaches_the_origin() {
        // Zero-weight decoder: the z-part of J1 is ½‖z‖² + const.
        let vae = zero_decoder_model(4, 2);
        let deg = DegradationModel::denoise(4, 0.3).unwrap();
        let y = vec![0.4; 4];
        let ctx = EnergyContext::new(&vae, &deg, &y).unwrap();
        // Adam moves at most lr per coordinate per step, so give the far
        // starts enough budget to cover the distance and settle.
        let cfg = GdConfig { max_iters: 1200, rel_tol: 0.0, ..GdConfig::default() };
        for z0 in [vec![2.0, -1.5], vec![-3.0, 0.5]] {
            let r = gd_z(&ctx, &[0.1, 0.2, 0.3, 0.4], &z0, &cfg).unwrap();
            assert!(norm2(&r.z) < 1e-2, "ended at {:?}", r.z);
            assert!(r.j1_at_z <= r.trace[0]);
        }
    }

    #[test]
    fn gd_z_matches_a_grid_search_on_a_toy_decoder() {
        let mut r = rng::seeded(33);
        let mut decoder = MlpParams::glorot(&[1, 4, 2], &mut r);
        for l in decoder.layers_mut() {
            for v in l.weight.data_mut() {
                *v *= 0.8;
            }
        }
        let encoder = MlpParams::glorot(&[2, 4, 2], &mut r);
        let vae = VaeModel::new(encoder, decoder, 0.0).unwrap();
        let deg = DegradationModel::denoise(2, 0.7).unwrap();
        let y = vec![0.6, -0.4];
        let ctx = EnergyContext::new(&vae, &deg, &y).unwrap();
        let x = vec![0.3, -0.1];

        let mut best_grid = (f64::INFINITY, 0.0);
        let mut t = -4.0;
        while t <= 4.0 {
            let v = ctx.j1(&x, &[t]).unwrap();
            if v < best_grid.0 {
                best_grid = (v, t);
            }
            t += 1e-3;
        }

        let cfg = GdConfig { lr: 0.02, max_iters: 1500, rel_tol: 0.0 };
        let mut best_gd = (f64::INFINITY, 0.0);
        for start in [-3.0, -1.0, 0.0, 1.0, 3.0] {
            let r = gd_z(&ctx, &x, &[start], &cfg).unwrap();
            if r.j1_at_z < best_gd.0 {
                best_gd = (r.j1_at_z, r.z[0]);
            }
        }
        assert!(
            (best_gd.1 - best_grid.1).abs() < 1e-2,
            "gd {} vs grid {}",
            best_gd.1,
            best_grid.1
        );
        assert!(best_gd.0 <= best_grid.0 + 1e-6);
    }

    fn small_restoration_ctx(seed: u64) -> (VaeModel, DegradationModel, Vec<f64>) {
        let vae = VaeModel::init(6, &[10], 2, seed);
        let deg = DegradationModel::compressed_sensing(6, 3, 0.2, seed ^ 1).unwrap();
        let truth = vec![0.3, 0.8, 0.1, 0.9, 0.5, 0.2];
        let obs = degrade(&deg, &truth, seed ^ 2);
        (vae, deg, obs.y)
    }

    #[test]
    fn algorithm1_holds_at_a_fixed_point() {
        // x0 chosen so that x_update(μφ(x0)) = x0; iterates must not move.
        let (vae, _, _) = small_restoration_ctx(3);
        let deg = DegradationModel::denoise(6, 0.4).unwrap();
        let seed_img = vec![0.2, 0.6, 0.4, 0.8, 0.1, 0.5];
        // Iterate the map a few times by hand to land on (a numerical)
        // fixed point, then start the solver there.
        let y = seed_img.clone();
        let ctx = EnergyContext::new(&vae, &deg, &y).unwrap();
        let mut x0 = seed_img;
        for _ in 0..200 {
            let (z, _) = vae.encode(&x0).unwrap();
            x0 = ctx.x_update(&z).unwrap();
        }
        let cfg = SolverConfig {
            n_min: 1,
            n_max: 4,
            x_init: XInit::Provided(x0.clone()),
            ..SolverConfig::default()
        };
        let report = algorithm1(&ctx, &cfg).unwrap();
        for (a, b) in report.final_x.iter().zip(&x0) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn algorithm1_first_iteration_is_encode_then_fuse() {
        let (vae, deg, y) = small_restoration_ctx(5);
        let ctx = EnergyContext::new(&vae, &deg, &y).unwrap();
        let x0 = crate::degradation::pseudo_inverse_init(&deg, &y, 1e-3).unwrap();
        let cfg = SolverConfig {
            n_min: 1,
            n_max: 2,
            ..SolverConfig::default()
        };
        let report = algorithm1(&ctx, &cfg).unwrap();

        // Manual composition of the first outer step.
        let (z1, _) = vae.encode(&x0).unwrap();
        let x1 = ctx.x_update(&z1).unwrap();
        let expect = ctx.j1(&x1, &z1).unwrap();
        assert!((report.iterations[0].j1_post_x - expect).abs() < 1e-9);
        assert_eq!(report.iterations[0].branch, Branch::Z1);
    }

    #[test]
    fn algorithm1_is_monotone_under_an_exact_surrogate() {
        let vae = exact_surrogate_model(7);
        let deg = DegradationModel::compressed_sensing(5, 3, 0.3, 4).unwrap();
        let truth = vec![0.4, -0.2, 0.7, 0.1, -0.5];
        let obs = degrade(&deg, &truth, 9);
        let ctx = EnergyContext::new(&vae, &deg, &obs.y).unwrap();
        let report = algorithm1(&ctx, &SolverConfig { n_max: 25, ..Default::default() }).unwrap();
        assert!(!report.any_increase(1e-9), "exact surrogate must alternate monotonically");
        for r in &report.iterations {
            assert!(!r.increased);
        }
    }

    #[test]
    fn algorithm2_is_monotone_and_labels_branches() {
        let (vae, deg, y) = small_restoration_ctx(11);
        let ctx = EnergyContext::new(&vae, &deg, &y).unwrap();
        let cfg = SolverConfig {
            n_max: 8,
            gd: GdConfig { max_iters: 60, ..GdConfig::default() },
            ..SolverConfig::default()
        };
        let report = algorithm2(&ctx, &cfg).unwrap();
        assert_eq!(report.iterations.len(), 8);
        assert!(!report.any_increase(1e-9));
        for r in &report.iterations {
            assert!(matches!(r.branch, Branch::Z0 | Branch::Z1 | Branch::Z2));
            let c = r.candidates.unwrap();
            let min = c.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!((r.j1_post_z - min).abs() < 1e-12);
            // If z¹ ties the minimum it must be the label.
            if c[1] <= c[0] && c[1] <= c[2] {
                assert_eq!(r.branch, Branch::Z1);
            }
            // The z⁰ candidate starts at z_n, so the accepted z never loses
            // to the previous iterate.
            assert!(r.j1_post_z <= r.j1_pre + 1e-9);
        }
        // Chained records: j1_pre of step n+1 equals j1_post_x of step n.
        for w in report.iterations.windows(2) {
            assert!((w[1].j1_pre - w[0].j1_post_x).abs() < 1e-9);
        }
    }

    #[test]
    fn algorithm3_branch_logic_follows_n_min() {
        let (vae, deg, y) = small_restoration_ctx(13);
        let ctx = EnergyContext::new(&vae, &deg, &y).unwrap();
        let cfg = SolverConfig {
            n_min: 2,
            n_max: 6,
            gd: GdConfig { max_iters: 40, ..GdConfig::default() },
            ..SolverConfig::default()
        };
        let report = algorithm3(&ctx, &cfg).unwrap();
        assert!(!report.any_increase(1e-9));
        for r in &report.iterations {
            if r.n > cfg.n_min {
                assert_eq!(r.branch, Branch::Gd, "n = {} must descend", r.n);
            }
            if r.branch == Branch::Fast {
                assert!(r.n <= cfg.n_min);
                assert!(r.j1_post_z <= r.j1_pre + 1e-12);
                assert_eq!(r.gd_iters, 0);
            }
        }
    }

    #[test]
    fn algorithm3_default_matches_the_operating_point() {
        let cfg = SolverConfig::default();
        assert_eq!(cfg.n_min, 5);
        assert!(cfg.n_min < cfg.n_max);
        assert_eq!(cfg.gd.lr, 0.01);
        assert!(SolverConfig { n_min: 30, n_max: 30, ..Default::default() }
            .validate()
            .is_err());
    }

    #[test]
    fn csgm_with_huge_lambda_collapses_to_the_prior_mean() {
        let (vae, deg, y) = small_restoration_ctx(17);
        let ctx = EnergyContext::new(&vae, &deg, &y).unwrap();
        let cfg = GdConfig { max_iters: 400, rel_tol: 0.0, ..GdConfig::default() };
        let (x_hat, report) = csgm(&ctx, 1e9, &[1.0, -1.0], &cfg, 1, 0).unwrap();
        let z_best = &report.restarts[report.best].z;
        assert!(norm2(z_best) < 1e-3, "z = {z_best:?}");
        let mu0 = vae.decode(&vec![0.0; 2]).unwrap();
        for (a, b) in x_hat.iter().zip(&mu0) {
            assert!((a - b).abs() < 1e-2);
        }
    }

    #[test]
    fn csgm_matches_a_grid_search_on_a_toy_decoder() {
        let mut r = rng::seeded(21);
        let mut decoder = MlpParams::glorot(&[1, 4, 2], &mut r);
        for l in decoder.layers_mut() {
            for v in l.weight.data_mut() {
                *v *= 0.8;
            }
        }
        let encoder = MlpParams::glorot(&[2, 4, 2], &mut r);
        let vae = VaeModel::new(encoder, decoder, 0.0).unwrap();
        let deg = DegradationModel::denoise(2, 0.7).unwrap();
        let y = vec![0.5, 0.1];
        let ctx = EnergyContext::new(&vae, &deg, &y).unwrap();
        let lambda = 0.1;

        let objective = |z: f64| {
            let mu = vae.decode(&[z]).unwrap();
            data_term(&deg, &mu, &y) + lambda * z * z
        };
        let mut best_grid = (f64::INFINITY, 0.0);
        let mut t = -4.0;
        while t <= 4.0 {
            let v = objective(t);
            if v < best_grid.0 {
                best_grid = (v, t);
            }
            t += 1e-3;
        }

        let cfg = GdConfig { lr: 0.02, max_iters: 1500, rel_tol: 0.0 };
        let (_, report) = csgm(&ctx, lambda, &[0.0], &cfg, 5, 3).unwrap();
        let best = &report.restarts[report.best];
        assert!(
            (best.z[0] - best_grid.1).abs() < 1e-2,
            "csgm {} vs grid {}",
            best.z[0],
            best_grid.1
        );
        assert!(best.objective <= best_grid.0 + 1e-6);
    }

    #[test]
    fn multi_start_with_one_start_succeeds_by_definition() {
        let vae = VaeModel::init(6, &[8], 2, 19);
        let x0 = vec![0.2, 0.7, 0.1, 0.9, 0.4, 0.6];
        let cfg = GdConfig { max_iters: 50, ..GdConfig::default() };
        let report =
            multi_start_validation(&vae, &x0, 1, StartInit::Gaussian, &cfg, 5).unwrap();
        assert_eq!(report.success_fraction, 1.0);
        assert_eq!(report.starts.len(), 1);
        assert_eq!(report.encoder_run.index, 1);
        assert_eq!(report.starts[0].energies.len(), report.starts[0].distances.len());
    }

    #[test]
    fn reports_are_bit_identical_for_a_fixed_seed() {
        let (vae, deg, y) = small_restoration_ctx(23);
        let ctx = EnergyContext::new(&vae, &deg, &y).unwrap();
        let cfg = SolverConfig {
            n_min: 2,
            n_max: 5,
            z_init: ZInit::Gaussian,
            seed: 77,
            gd: GdConfig { max_iters: 30, ..GdConfig::default() },
            ..SolverConfig::default()
        };
        let a = algorithm3(&ctx, &cfg).unwrap();
        let b = algorithm3(&ctx, &cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.to_text(), b.to_text());
        assert_eq!(a.final_x, b.final_x);
        assert_eq!(a.final_z, b.final_z);
    }

    #[test]
    fn solver_csv_has_the_documented_columns() {
        let (vae, deg, y) = small_restoration_ctx(29);
        let ctx = EnergyContext::new(&vae, &deg, &y).unwrap();
        let cfg = SolverConfig {
            n_min: 1,
            n_max: 2,
            gd: GdConfig { max_iters: 10, ..GdConfig::default() },
            ..SolverConfig::default()
        };
        let report = algorithm3(&ctx, &cfg).unwrap();
        let csv = report.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "n,j1_pre,j1_post_z,j1_post_x,branch,grad_z_norm,gd_iters"
        );
        assert_eq!(lines.count(), 2);
    }
}
