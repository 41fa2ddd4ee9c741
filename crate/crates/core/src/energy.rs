//! The joint energies and their partial minimizers.
//!
//! With a Gaussian decoder (`p(x|z) = N(μθ(z), γI)`) and encoder
//! (`q(z|x) = N(μφ(x), diag exp(logvar))`) the two energies are
//!
//! ```text
//! J1(x, z) = F(x, y) + H(x, z) + ½‖z‖²
//! H(x, z)  = ½(n ln 2π + n ln γ + ‖x − μθ(z)‖²/γ)
//! J2(x, z) = F(x, y) + K(x, z) + const(x)
//! K(x, z)  = ½(k ln 2π + Σ logvar + ‖(z − μφ(x))/σφ(x)‖²)
//! ```
//!
//! `J1` is quadratic in `x`, so its x-minimizer has a closed form
//! ([`EnergyContext::x_update`]); `J2` is quadratic in `z` with minimizer
//! `μφ(x)`. The z-gradient of `J1` goes through the decoder by backprop.
//!
//! The `ln det Σθ = n ln γ` term is constant in `z` (γ does not depend on
//! it), but it is kept inside `H` so energy traces are comparable across
//! models with different γ.

use crate::degradation::{data_term, DegradationModel, LinearOperator};
use crate::error::{Error, Result};
use crate::linalg::{conjugate_gradient, dot, norm2};
use crate::vae::{VaeModel, LN_2PI};

/// Read-only bundle of everything a restoration needs: the prior, the
/// degradation and the observation. Shareable across solver instances.
pub struct EnergyContext<'a> {
    pub vae: &'a VaeModel,
    pub deg: &'a DegradationModel,
    pub y: &'a [f64],
    /// Cached `Aᵀy` for the x-update right-hand side.
    aty: Vec<f64>,
}

impl<'a> EnergyContext<'a> {
    pub fn new(vae: &'a VaeModel, deg: &'a DegradationModel, y: &'a [f64]) -> Result<Self> {
        if vae.x_dim() != deg.n() {
            return Err(Error::shape(format!(
                "prior works on {}-pixel images but operator expects {}",
                vae.x_dim(),
                deg.n()
            )));
        }
        if y.len() != deg.m() {
            return Err(Error::shape(format!(
                "observation has {} entries, operator produces {}",
                y.len(),
                deg.m()
            )));
        }
        let aty = deg.apply_t(y);
        Ok(EnergyContext { vae, deg, y, aty })
    }

    pub fn x_dim(&self) -> usize {
        self.vae.x_dim()
    }

    pub fn z_dim(&self) -> usize {
        self.vae.z_dim()
    }

    /// Decoder coupling `H(x, z) = −ln p(x|z)`.
    pub fn coupling_h(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        let mu = self.vae.decode(z)?;
        Ok(coupling_h_decoded(self.vae, x, &mu))
    }

    /// Encoder coupling `K(x, z) = −ln q(z|x)`.
    pub fn coupling_k(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        let (mu, logvar) = self.vae.encode(x)?;
        Ok(coupling_k_encoded(z, &mu, &logvar))
    }

    /// Exact joint energy `J1 = F + H + ½‖z‖²`.
    pub fn j1(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        Ok(data_term(self.deg, x, self.y) + self.coupling_h(x, z)? + 0.5 * dot(z, z))
    }

    /// The z-dependent part of the surrogate: `F(x,y) + K(x,z)`.
    ///
    /// `J2` proper carries an extra `−ln p(x)` that has no computable form;
    /// it is constant in `z`, so this value is only meaningful for
    /// comparisons and minimization at fixed `x`.
    pub fn j2_z_part(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        Ok(data_term(self.deg, x, self.y) + self.coupling_k(x, z)?)
    }

    /// Gradient of `z ↦ J2` (same caveat as [`EnergyContext::j2_z_part`]):
    /// `Σφ(x)⁻¹ (z − μφ(x))`, exactly zero at `z = μφ(x)`.
    pub fn grad_z_j2_part(&self, x: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        let (mu, logvar) = self.vae.encode(x)?;
        Ok(z.iter()
            .zip(&mu)
            .zip(&logvar)
            .map(|((zi, mi), lvi)| (zi - mi) * (-lvi).exp())
            .collect())
    }

    /// Closed-form x-minimizer of `J1` at fixed `z`:
    /// `x = (AᵀA + (σ²/γ)I)⁻¹ (Aᵀy + (σ²/γ) μθ(z))`.
    pub fn x_update(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.x_update_from(z, None)
    }

    /// [`EnergyContext::x_update`] with a warm start for the dense-operator
    /// conjugate-gradient path (ignored by the closed-form paths).
    pub fn x_update_from(&self, z: &[f64], warm: Option<&[f64]>) -> Result<Vec<f64>> {
        let mu = self.vae.decode(z)?;
        self.x_update_decoded(&mu, warm)
    }

    /// x-update given an already-decoded `μθ(z)`.
    pub(crate) fn x_update_decoded(&self, mu: &[f64], warm: Option<&[f64]>) -> Result<Vec<f64>> {
        let c = self.deg.sigma * self.deg.sigma / self.vae.gamma();
        match self.deg.operator() {
            LinearOperator::Identity => Ok(self
                .y
                .iter()
                .zip(mu)
                .map(|(yi, mi)| (yi + c * mi) / (1.0 + c))
                .collect()),
            LinearOperator::Mask(idx) => {
                let mut x = mu.to_vec();
                for (&yi, &i) in self.y.iter().zip(idx) {
                    x[i] = (yi + c * mu[i]) / (1.0 + c);
                }
                Ok(x)
            }
            LinearOperator::Dense(_) => {
                let mut b = self.aty.clone();
                for (bi, mi) in b.iter_mut().zip(mu) {
                    *bi += c * mi;
                }
                let mut t = vec![0.0; self.deg.m()];
                let apply = |v: &[f64], out: &mut [f64]| {
                    // out = AᵀA v + c v
                    self.deg.apply_into(v, &mut t);
                    self.deg.apply_t_into(&t, out);
                    for (o, vi) in out.iter_mut().zip(v) {
                        *o += c * vi;
                    }
                };
                let sol = conjugate_gradient(apply, &b, warm, 1e-10, 20 * self.x_dim())?;
                Ok(sol.x)
            }
        }
    }

    /// `∇z J1 = Jac(μθ)(z)ᵀ (μθ(z) − x)/γ + z`, via decoder backprop.
    pub fn grad_z_j1(&self, x: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.coupling_and_grad_z(x, z)?.1)
    }

    /// Fused evaluation used by the descent loops: returns
    /// `(H(x,z) + ½‖z‖², ∇z[H + ½‖z‖²])` from a single decoder pass.
    pub(crate) fn coupling_and_grad_z(&self, x: &[f64], z: &[f64]) -> Result<(f64, Vec<f64>)> {
        let gamma = self.vae.gamma();
        let (mu, tape) = self.vae.decode_with_tape(z)?;
        if x.len() != mu.len() {
            return Err(Error::shape(format!(
                "x length {} != decoder output {}",
                x.len(),
                mu.len()
            )));
        }
        let mut residual = 0.0;
        let mut grad_mu = vec![0.0; mu.len()];
        for i in 0..mu.len() {
            let r = mu[i] - x[i];
            residual += r * r;
            grad_mu[i] = r / gamma;
        }
        let (_, mut grad_z) = self.vae.decoder().backward(&tape, &grad_mu)?;
        for (g, zi) in grad_z.iter_mut().zip(z) {
            *g += zi;
        }
        let n = self.x_dim() as f64;
        let value =
            0.5 * (n * (LN_2PI + self.vae.log_gamma()) + residual / gamma) + 0.5 * dot(z, z);
        Ok((value, grad_z))
    }

    /// `∇x J1 = Aᵀ(Ax − y)/σ² + (x − μθ(z))/γ`.
    pub fn grad_x_j1(&self, x: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        let mu = self.vae.decode(z)?;
        Ok(self.grad_x_j1_decoded(x, &mu))
    }

    pub(crate) fn grad_x_j1_decoded(&self, x: &[f64], mu: &[f64]) -> Vec<f64> {
        let sigma2 = self.deg.sigma * self.deg.sigma;
        let gamma = self.vae.gamma();
        let mut ax = vec![0.0; self.deg.m()];
        self.deg.apply_into(x, &mut ax);
        for (a, yi) in ax.iter_mut().zip(self.y) {
            *a -= yi;
        }
        let mut grad = vec![0.0; self.x_dim()];
        self.deg.apply_t_into(&ax, &mut grad);
        for i in 0..grad.len() {
            grad[i] = grad[i] / sigma2 + (x[i] - mu[i]) / gamma;
        }
        grad
    }

    /// Evaluate both couplings on a 2D affine slice of latent space:
    /// `z(a, b) = center + a·b1 + b·b2` over the grid, returning one sample
    /// per node in row-major `(a, b)` order.
    ///
    /// `j1_coupling = H(x,z) + ½‖z‖²` and `j2_coupling = K(x,z)`; the basis
    /// must be orthonormal to 1e-10.
    pub fn coupling_slice(
        &self,
        x: &[f64],
        center: &[f64],
        basis: (&[f64], &[f64]),
        a_values: &[f64],
        b_values: &[f64],
    ) -> Result<Vec<SliceSample>> {
        let (b1, b2) = basis;
        let k = self.z_dim();
        if b1.len() != k || b2.len() != k || center.len() != k {
            return Err(Error::shape("slice center/basis dimension mismatch".to_string()));
        }
        let tol = 1e-10;
        if (norm2(b1) - 1.0).abs() > tol || (norm2(b2) - 1.0).abs() > tol {
            return Err(Error::param("slice basis vectors must be unit length"));
        }
        if dot(b1, b2).abs() > tol {
            return Err(Error::param("slice basis vectors must be orthogonal"));
        }

        let (mu_phi, logvar) = self.vae.encode(x)?;
        let mut out = Vec::with_capacity(a_values.len() * b_values.len());
        let mut z = vec![0.0; k];
        for &a in a_values {
            for &b in b_values {
                for i in 0..k {
                    z[i] = center[i] + a * b1[i] + b * b2[i];
                }
                let mu = self.vae.decode(&z)?;
                let j1c = coupling_h_decoded(self.vae, x, &mu) + 0.5 * dot(&z, &z);
                let j2c = coupling_k_encoded(&z, &mu_phi, &logvar);
                out.push(SliceSample {
                    a,
                    b,
                    j1_coupling: j1c,
                    j2_coupling: j2c,
                });
            }
        }
        Ok(out)
    }
}

/// One node of a coupling slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceSample {
    pub a: f64,
    pub b: f64,
    pub j1_coupling: f64,
    pub j2_coupling: f64,
}

/// `H(x, z)` given the decoded mean `μθ(z)`.
pub fn coupling_h_decoded(vae: &VaeModel, x: &[f64], mu: &[f64]) -> f64 {
    assert_eq!(x.len(), mu.len(), "coupling_h: length mismatch");
    let gamma = vae.gamma();
    let mut residual = 0.0;
    for (xi, mi) in x.iter().zip(mu) {
        let d = xi - mi;
        residual += d * d;
    }
    let n = x.len() as f64;
    0.5 * (n * (LN_2PI + vae.log_gamma()) + residual / gamma)
}

/// `K(x, z)` given the encoded posterior parameters.
pub fn coupling_k_encoded(z: &[f64], mu_phi: &[f64], logvar: &[f64]) -> f64 {
    assert_eq!(z.len(), mu_phi.len(), "coupling_k: length mismatch");
    let mut acc = 0.0;
    let mut logdet = 0.0;
    for i in 0..z.len() {
        let d = z[i] - mu_phi[i];
        acc += d * d * (-logvar[i]).exp();
        logdet += logvar[i];
    }
    0.5 * (z.len() as f64 * LN_2PI + logdet + acc)
}
