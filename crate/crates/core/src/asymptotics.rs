//! Large-J limits of the BD sum rate and the primary rate.
//!
//! With `E[h_j h_jᴴ] = β_h I` and `E[g_j g_jᴴ] = β_g I` the aggregate BD
//! channel hardens, so both rates reduce to closed forms in `J β_h β_g`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{diag_real, eigh, identity, log2_abs_det, real, CMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymParams {
    pub j: usize,
    pub k: usize,
    pub m_t: usize,
    pub m_r: usize,
    pub pbar: f64,
    pub alpha: f64,
    pub beta_h: f64,
    pub beta_g: f64,
    pub beta_hd: f64,
}

impl AsymParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.m_t == 0 || self.m_r == 0 {
            return Err(Error::Config("K, M_t and M_r must be positive".into()));
        }
        let positive = [self.pbar, self.alpha, self.beta_h, self.beta_g];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("P̄, alpha, beta_h and beta_g must be positive".into()));
        }
        if !(self.beta_hd.is_finite() && self.beta_hd >= 0.0) {
            return Err(Error::Config("beta_hd must be non-negative".into()));
        }
        Ok(())
    }

    /// Per-antenna uplift `J α M_r β_g β_h` added to every eigenvalue of `H_dᴴH_d`.
    pub fn uplift(&self) -> f64 {
        self.j as f64 * self.alpha * self.m_r as f64 * self.beta_g * self.beta_h
    }

    /// `J K P̄ α β_h β_g`.
    pub fn bd_gain(&self) -> f64 {
        self.j as f64 * self.k as f64 * self.pbar * self.alpha * self.beta_h * self.beta_g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub p: Vec<f64>,
    pub mmse: Vec<f64>,
    pub iterations: usize,
}

/// `(M_r/K) log₂|I + J K P̄ α β_h β_g Q|`.
pub fn bd_sumrate_asym(q: &CMatrix, ap: &AsymParams) -> f64 {
    if ap.j == 0 {
        return 0.0;
    }
    let m = identity(q.nrows()) + q.scale(ap.bd_gain());
    ap.m_r as f64 / ap.k as f64 * log2_abs_det(&m)
}

const WF_DAMPING: f64 = 0.5;
const WF_MAX_ITER: usize = 10_000;
const WF_TOL: f64 = 1e-8;

fn mmse(eigs: &[f64], p: &[f64], pbar: f64, m_t: usize, uplift: f64) -> Vec<f64> {
    let s = pbar / m_t as f64;
    eigs.iter().zip(p).map(|(l, pi)| 1.0 / (1.0 + s * pi * (l + uplift))).collect()
}

/// One application of the fixed-point map `P_i ← (1 − MMSE_i) / mean(1 − MMSE)`.
pub fn waterfilling_map(eigs: &[f64], p: &[f64], pbar: f64, m_t: usize, uplift: f64) -> Option<Vec<f64>> {
    let gain: Vec<f64> = mmse(eigs, p, pbar, m_t, uplift).iter().map(|m| 1.0 - m).collect();
    let mean = gain.iter().sum::<f64>() / gain.len() as f64;
    if !(mean > 0.0) {
        return None;
    }
    Some(gain.iter().map(|g| g / mean).collect())
}

/// Residual `‖P − T(P)‖_∞` of the fixed-point equations.
pub fn waterfilling_residual(eigs: &[f64], p: &[f64], pbar: f64, m_t: usize, uplift: f64) -> f64 {
    match waterfilling_map(eigs, p, pbar, m_t, uplift) {
        Some(t) => p.iter().zip(&t).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
        None => f64::INFINITY,
    }
}

/// Damped fixed-point iteration from the uniform allocation.
pub fn waterfilling_fixed_point(eigs: &[f64], pbar: f64, m_t: usize, uplift: f64) -> Result<PowerAllocation> {
    if eigs.is_empty() {
        return Err(Error::DimensionMismatch("no eigenvalues".into()));
    }
    if eigs.iter().any(|l| !(l.is_finite() && *l >= -1e-12)) || !(uplift >= 0.0) {
        return Err(Error::NonFinite("eigenvalues must be finite and non-negative"));
    }
    let eigs: Vec<f64> = eigs.iter().map(|l| l.max(0.0)).collect();
    let mut p = vec![1.0; eigs.len()];
    for it in 0..WF_MAX_ITER {
        let Some(t) = waterfilling_map(&eigs, &p, pbar, m_t, uplift) else {
            // No stream carries any gain; every allocation is equally useless.
            let mmse = vec![1.0; eigs.len()];
            return Ok(PowerAllocation { p, mmse, iterations: it });
        };
        let res = p.iter().zip(&t).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if res <= WF_TOL {
            let mmse = mmse(&eigs, &p, pbar, m_t, uplift);
            return Ok(PowerAllocation { p, mmse, iterations: it });
        }
        for (pi, ti) in p.iter_mut().zip(&t) {
            *pi = WF_DAMPING * *pi + (1.0 - WF_DAMPING) * ti;
        }
    }
    Err(Error::NoConvergence { what: "waterfilling fixed point", iterations: WF_MAX_ITER })
}

/// Large-J primary rate for a given covariance `Q`:
/// `log₂|I + P̄ Q (H_dᴴH_d + J α M_r β_g β_h I)|`.
pub fn primary_rate_asym_given(h_d: &CMatrix, q: &CMatrix, ap: &AsymParams) -> f64 {
    let m_t = h_d.ncols();
    let r = h_d.adjoint() * h_d + identity(m_t).scale(ap.uplift());
    log2_abs_det(&(identity(m_t) + (q * r).scale(ap.pbar)))
}

/// Optimal large-J primary rate, the power allocation behind it and the
/// precoder `F = V P^{1/2} / √M_t` in the eigenbasis of `H_dᴴH_d`.
pub fn primary_rate_asym(h_d: &CMatrix, ap: &AsymParams) -> Result<(f64, PowerAllocation, CMatrix)> {
    let m_t = h_d.ncols();
    if m_t != ap.m_t {
        return Err(Error::DimensionMismatch(format!("H_d has {m_t} columns, M_t = {}", ap.m_t)));
    }
    let eig = eigh(&(h_d.adjoint() * h_d))?;
    let lambda: Vec<f64> = eig.values.iter().map(|l| l.max(0.0)).collect();
    let uplift = ap.uplift();
    let alloc = waterfilling_fixed_point(&lambda, ap.pbar, m_t, uplift)?;
    let s = ap.pbar / m_t as f64;
    let rate = lambda.iter().zip(&alloc.p).map(|(l, p)| (1.0 + s * p * (l + uplift)).log2()).sum();
    let roots: Vec<f64> = alloc.p.iter().map(|p| p.max(0.0).sqrt()).collect();
    let f = (&eig.vectors * diag_real(&roots)) * real(1.0 / (m_t as f64).sqrt());
    Ok((rate, alloc, f))
}

/// Single-antenna PT: `(r_bd, r_s)` with
/// `r_bd = (M_r/K) log₂(1 + J K P̄ α β_h β_g)` and
/// `r_s = log₂(1 + P̄(‖h_d‖² + J α M_r β_g β_h))`.
pub fn simo_asym(ap: &AsymParams, h_d_norm2: f64) -> Result<(f64, f64)> {
    if ap.m_t != 1 {
        return Err(Error::WrongMode(ap.m_t));
    }
    let r_bd = ap.m_r as f64 / ap.k as f64 * ap.bd_gain().ln_1p() / std::f64::consts::LN_2;
    let r_s = (ap.pbar * (h_d_norm2 + ap.uplift())).ln_1p() / std::f64::consts::LN_2;
    Ok((r_bd, r_s))
}

/// Primary rate as a function of the BD sum rate for a single-antenna PT:
/// `log₂(1 + P̄‖h_d‖² + (M_r/K)(2^{(K/M_r) r_bd} − 1))`.
pub fn rs_of_rbd(r_bd: f64, pbar: f64, h_d_norm2: f64, m_r: usize, k: usize) -> f64 {
    let b = m_r as f64 / k as f64;
    let a = 1.0 + pbar * h_d_norm2;
    let x = r_bd / b;
    if x < 40.0 {
        (pbar * h_d_norm2 + b * x.exp2_m1()).ln_1p() / std::f64::consts::LN_2
    } else {
        // a - b + b 2^x, with the exponential factored out.
        x + b.log2() + ((a - b) / b * (-x).exp2()).ln_1p() / std::f64::consts::LN_2
    }
}

trait Exp2M1 {
    fn exp2_m1(self) -> f64;
}

impl Exp2M1 for f64 {
    fn exp2_m1(self) -> f64 {
        (self * std::f64::consts::LN_2).exp_m1()
    }
}
