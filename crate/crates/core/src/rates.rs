//! Exact rate engine.
//!
//! The primary link sees the BDs as extra multipath: for BD symbols `c` the
//! equivalent channel is `H_eq(c) = H_d + Σ_j √α g_j h_jᴴ c_j`. After the
//! primary signal is removed and temporally matched-filtered, BD `j` appears
//! through the effective vector `x_j = vec(√(KPα) g_j h_jᴴ F)` of a SIMO
//! multiple-access channel decoded by MMSE-SIC.
//!
//! The BD sum rate is available in three algebraically equal forms: the SIC
//! sum of per-BD rates, the log-det of the aggregate covariance, and the
//! covariance-only form in `Q = F Fᴴ` ([`KronSumRate`]).

use serde::{Deserialize, Serialize};

use crate::channel::{domain, substream, ChannelSet, Constellation, SystemParams};
use crate::error::{Error, Result};
use crate::exec::{mean_stderr, Execution};
use crate::linalg::{
    self, hermitian_part, identity, inv, inv_hpd, kron, log2_abs_det, logdet_ipa, real, CMatrix, CVector, ZERO,
};
use num_complex::Complex64;
use rand::Rng;

/// Zero-mean unit-power BD symbols. Sample `s` is drawn from its own
/// substream, so Monte Carlo loops can run in any order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BdSymbolSource {
    pub constellation: Constellation,
    pub seed: u64,
    pub domain: u64,
}

impl BdSymbolSource {
    pub fn new(constellation: Constellation, seed: u64) -> Self {
        Self { constellation, seed, domain: domain::BD_SYMBOLS }
    }

    pub fn with_domain(mut self, domain: u64) -> Self {
        self.domain = domain;
        self
    }

    /// Symbol vector `c_s` of length `j`.
    pub fn draw(&self, sample: usize, j: usize) -> Vec<Complex64> {
        let mut rng = substream(self.seed, self.domain, sample as u64);
        (0..j).map(|_| draw_symbol(self.constellation, &mut rng)).collect()
    }
}

pub fn draw_symbol<R: Rng + ?Sized>(constellation: Constellation, rng: &mut R) -> Complex64 {
    match constellation {
        Constellation::Cscg => crate::channel::cscg(rng),
        Constellation::Qpsk => {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            let re = if rng.random::<bool>() { s } else { -s };
            let im = if rng.random::<bool>() { s } else { -s };
            Complex64::new(re, im)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub primary_rate_bits: f64,
    pub primary_rate_stderr: f64,
    pub bd_sum_rate_bits: f64,
    /// SINR of each BD, indexed by BD.
    pub per_bd_sinr: Vec<f64>,
    /// BD indices (0-based) in SIC decoding order.
    pub decode_order: Vec<usize>,
}

/// BD part of a [`RateReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct SicRates {
    pub sum_rate_bits: f64,
    pub per_bd_sinr: Vec<f64>,
    pub decode_order: Vec<usize>,
}

/// `H_d + Σ_j √α g_j h_jᴴ c_j`.
pub fn equivalent_channel(ch: &ChannelSet, symbols: &[Complex64], alpha: f64) -> Result<CMatrix> {
    if symbols.len() != ch.num_bds() {
        return Err(Error::DimensionMismatch(format!("{} symbols for {} BDs", symbols.len(), ch.num_bds())));
    }
    let mut h = ch.h_d.clone();
    let amp = alpha.sqrt();
    if amp == 0.0 {
        return Ok(h);
    }
    for ((g, hj), cj) in ch.g.iter().zip(&ch.h).zip(symbols) {
        let w = *cj * amp;
        for col in 0..h.ncols() {
            let hc = hj[col].conj() * w;
            for row in 0..h.nrows() {
                h[(row, col)] += g[row] * hc;
            }
        }
    }
    Ok(h)
}

/// `log₂|I + P̄ H Q Hᴴ|`.
pub fn primary_rate_instant(h_eq: &CMatrix, q: &CMatrix, pbar: f64) -> Result<f64> {
    check_covariance(q)?;
    let a = (h_eq * q * h_eq.adjoint()).scale(pbar);
    logdet_ipa(&a)
}

/// Monte Carlo estimate of the average primary rate over `samples` BD symbol
/// draws, with its standard error.
pub fn primary_rate_mc(
    ch: &ChannelSet,
    q: &CMatrix,
    params: &SystemParams,
    source: &BdSymbolSource,
    samples: usize,
) -> Result<(f64, f64)> {
    primary_rate_mc_with(Execution::Parallel, ch, q, params, source, samples)
}

pub fn primary_rate_mc_with(
    exec: Execution,
    ch: &ChannelSet,
    q: &CMatrix,
    params: &SystemParams,
    source: &BdSymbolSource,
    samples: usize,
) -> Result<(f64, f64)> {
    if samples == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    check_covariance(q)?;
    let pbar = params.pbar();
    let j = ch.num_bds();
    let values = exec.map(samples, |s| {
        let c = source.draw(s, j);
        let h = equivalent_channel(ch, &c, params.alpha)?;
        primary_rate_instant(&h, q, pbar)
    });
    let values = values.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(mean_stderr(&values))
}

fn check_covariance(q: &CMatrix) -> Result<()> {
    if !q.is_square() {
        return Err(Error::DimensionMismatch("covariance must be square".into()));
    }
    let tr = linalg::trace_re(q);
    if tr > 1.0 + 1e-9 {
        return Err(Error::Config(format!("covariance trace {tr} exceeds 1")));
    }
    Ok(())
}

/// `x_j = vec(√(KPα) g_j h_jᴴ F)` for every BD.
pub fn bd_effective_vectors(ch: &ChannelSet, f: &CMatrix, params: &SystemParams) -> Vec<CVector> {
    let amp = (params.k as f64 * params.p_watts() * params.alpha).sqrt();
    ch.g.iter()
        .zip(&ch.h)
        .map(|(g, h)| {
            let hf = h.adjoint() * f; // 1 × M_s
            let hj = (g * hf).scale(amp);
            CVector::from_column_slice(hj.as_slice())
        })
        .collect()
}

/// SIC decoding order: descending `‖x_j‖²`, ties by index.
pub fn sic_order(x: &[CVector]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[b].norm_squared().total_cmp(&x[a].norm_squared()));
    order
}

/// MMSE-SIC with the strongest-first decoding order.
pub fn mmse_sic(x: &[CVector], sigma2: f64, k: usize) -> Result<SicRates> {
    mmse_sic_ordered(x, sigma2, k, &sic_order(x))
}

/// MMSE-SIC with an explicit decoding order. BD `order[t]` sees the BDs
/// decoded after it as interference.
pub fn mmse_sic_ordered(x: &[CVector], sigma2: f64, k: usize, order: &[usize]) -> Result<SicRates> {
    let j = x.len();
    if order.len() != j {
        return Err(Error::DimensionMismatch("decode order length differs from J".into()));
    }
    let mut per_bd_sinr = vec![0.0; j];
    if j == 0 {
        return Ok(SicRates { sum_rate_bits: 0.0, per_bd_sinr, decode_order: vec![] });
    }
    let d = x[0].len();
    if x.iter().any(|v| v.len() != d) {
        return Err(Error::DimensionMismatch("effective vectors differ in length".into()));
    }
    // Interference-plus-noise covariance, grown from the last decoded BD back.
    let mut cov = identity(d).scale(sigma2);
    for &bd in order.iter().rev() {
        let xj = &x[bd];
        let inv_cov = inv_hpd(&cov)?;
        let sinr = (xj.adjoint() * &inv_cov * xj)[(0, 0)].re.max(0.0);
        per_bd_sinr[bd] = sinr;
        cov += xj * xj.adjoint();
    }
    let sum_rate_bits = order.iter().map(|&bd| (1.0 + per_bd_sinr[bd]).log2()).sum::<f64>() / k as f64;
    Ok(SicRates { sum_rate_bits, per_bd_sinr, decode_order: order.to_vec() })
}

/// `(1/K) log₂|I + (1/σ²) Σ_j x_j x_jᴴ|`, evaluated on the smaller Gram side.
pub fn bd_sumrate_logdet(x: &[CVector], sigma2: f64, k: usize) -> Result<f64> {
    if x.is_empty() {
        return Ok(0.0);
    }
    let d = x[0].len();
    let xm = CMatrix::from_fn(d, x.len(), |r, c| x[c][r]);
    let gram = if x.len() < d { xm.adjoint() * &xm } else { &xm * xm.adjoint() };
    Ok(logdet_ipa(&gram.scale(1.0 / sigma2))? / k as f64)
}

/// `(1/K) log₂|I + KP̄α Σ_j (Fᴴh_jh_jᴴF) ⊗ (g_jg_jᴴ)ᵀ|`, the precoder form.
pub fn bd_sumrate_precoder(f: &CMatrix, ch: &ChannelSet, params: &SystemParams) -> Result<f64> {
    let scale = params.k as f64 * params.pbar() * params.alpha;
    let dim = f.ncols() * ch.m_r();
    let mut acc = CMatrix::zeros(dim, dim);
    for (h, g) in ch.h.iter().zip(&ch.g) {
        let u = f.adjoint() * h;
        let a = &u * u.adjoint();
        let b = (g * g.adjoint()).transpose();
        acc += kron(&a, &b);
    }
    Ok(logdet_ipa(&acc.scale(scale))? / params.k as f64)
}

/// `H = [g_1h_1ᴴ, …, g_Jh_Jᴴ]`, `M_r × M_t J`.
pub fn cascade_stack(ch: &ChannelSet) -> CMatrix {
    let (m_r, m_t) = (ch.m_r(), ch.m_t());
    let mut out = CMatrix::zeros(m_r, m_t * ch.num_bds());
    for (j, (h, g)) in ch.h.iter().zip(&ch.g).enumerate() {
        let block = g * h.adjoint();
        out.view_mut((0, j * m_t), (m_r, m_t)).copy_from(&block);
    }
    out
}

/// Selection matrix `Ψ` (`M_t² J × J`) that picks `vec(I_{M_t})` out of each
/// BD's block of `Q ⊗ (HᴴH)ᵀ`. Row `(t, j, t)` of the Kronecker index
/// `t·M_tJ + j·M_t + t` is set in column `j`; this is the block-diagonal stack
/// of `vec(I)` under the column ordering of `Fᵀ ⊗ H`.
pub fn psi(m_t: usize, j: usize) -> CMatrix {
    let mut out = CMatrix::zeros(m_t * m_t * j, j);
    for col in 0..j {
        for t in 0..m_t {
            out[(t * m_t * j + col * m_t + t, col)] = real(1.0);
        }
    }
    out
}

/// Literal evaluation of `(1/K) log₂|I_J + KP̄α Ψᴴ(Q ⊗ (HᴴH)ᵀ)Ψ|` with every
/// Kronecker factor materialized. Quadratic memory in `M_t² J`; intended for
/// small instances and as a cross-check of [`KronSumRate`].
pub fn bd_sumrate_kron_explicit(q: &CMatrix, ch: &ChannelSet, params: &SystemParams) -> Result<f64> {
    let j = ch.num_bds();
    if j == 0 {
        return Ok(0.0);
    }
    let h = cascade_stack(ch);
    let g = (h.adjoint() * &h).transpose();
    let p = psi(ch.m_t(), j);
    let inner = p.adjoint() * kron(q, &g) * &p;
    let scale = params.k as f64 * params.pbar() * params.alpha;
    Ok(logdet_ipa(&inner.scale(scale))? / params.k as f64)
}

/// `(1/K) log₂|I_J + KP̄α Ψᴴ(Q ⊗ (HᴴH)ᵀ)Ψ|` without materializing the
/// Kronecker product.
pub fn bd_sumrate_kron(q: &CMatrix, ch: &ChannelSet, params: &SystemParams) -> Result<f64> {
    KronSumRate::new(ch, params).value(q)
}

/// Which side of the Weinstein–Aronszajn pair a [`KronSumRate`] evaluates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `J × J`: `I + c Γ ∘ (H_hᴴ Q H_h)` with `Γ_ab = g_bᴴ g_a`.
    Bd,
    /// `M_t M_r × M_t M_r`: `I + (Q ⊗ I) T` with `T = c Σ_j h_jh_jᴴ ⊗ (g_jg_jᴴ)ᵀ`.
    Antenna,
}

/// Precomputed structure of the BD sum rate as a function of `Q`.
///
/// Entry `(a, b)` of `Ψᴴ(Q ⊗ (HᴴH)ᵀ)Ψ` is `(g_bᴴ g_a)(h_aᴴ Q h_b)`, so the
/// `J × J` matrix is a Hadamard product of two Gram matrices. For large `J`
/// the equal antenna-side determinant is used instead.
#[derive(Debug, Clone)]
pub struct KronSumRate {
    side: Side,
    k: f64,
    scale: f64,
    m_t: usize,
    m_r: usize,
    /// `M_t × J`, columns `h_j`.
    hh: CMatrix,
    /// `Γ_ab = g_bᴴ g_a`.
    gamma: CMatrix,
    /// `c Σ_j h_jh_jᴴ ⊗ (g_jg_jᴴ)ᵀ`, built for the antenna side only.
    t: CMatrix,
}

impl KronSumRate {
    pub fn new(ch: &ChannelSet, params: &SystemParams) -> Self {
        let side = if ch.num_bds() <= ch.m_t() * ch.m_r() { Side::Bd } else { Side::Antenna };
        Self::with_side(ch, params, side)
    }

    pub fn with_side(ch: &ChannelSet, params: &SystemParams, side: Side) -> Self {
        let (m_t, m_r, j) = (ch.m_t(), ch.m_r(), ch.num_bds());
        let scale = params.k as f64 * params.pbar() * params.alpha;
        let hh = CMatrix::from_fn(m_t, j, |r, c| ch.h[c][r]);
        let (gamma, t) = match side {
            Side::Bd => {
                let gg = CMatrix::from_fn(m_r, j, |r, c| ch.g[c][r]);
                ((gg.adjoint() * gg).transpose(), CMatrix::zeros(0, 0))
            }
            Side::Antenna => {
                let dim = m_t * m_r;
                let mut t = CMatrix::zeros(dim, dim);
                for (h, g) in ch.h.iter().zip(&ch.g) {
                    let w = CVector::from_fn(dim, |i, _| h[i / m_r] * g[i % m_r].conj());
                    t += &w * w.adjoint();
                }
                (CMatrix::zeros(0, 0), t.scale(scale))
            }
        };
        Self { side, k: params.k as f64, scale, m_t, m_r, hh, gamma, t }
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn num_bds(&self) -> usize {
        self.hh.ncols()
    }

    fn bd_matrix(&self, q: &CMatrix) -> CMatrix {
        let a = self.hh.adjoint() * q * &self.hh;
        a.component_mul(&self.gamma).scale(self.scale)
    }

    fn antenna_matrix(&self, q: &CMatrix) -> CMatrix {
        let qi = kron(q, &identity(self.m_r));
        identity(self.m_t * self.m_r) + qi * &self.t
    }

    pub fn value(&self, q: &CMatrix) -> Result<f64> {
        if q.shape() != (self.m_t, self.m_t) {
            return Err(Error::DimensionMismatch(format!(
                "covariance is {}x{}, expected {}x{}",
                q.nrows(),
                q.ncols(),
                self.m_t,
                self.m_t
            )));
        }
        if self.num_bds() == 0 || self.scale == 0.0 {
            return Ok(0.0);
        }
        let bits = match self.side {
            Side::Bd => logdet_ipa(&self.bd_matrix(q))?,
            Side::Antenna => log2_abs_det(&self.antenna_matrix(q)),
        };
        Ok(bits / self.k)
    }

    /// Euclidean gradient with respect to Hermitian `Q` (so that the
    /// directional derivative along Hermitian `D` is `Re tr(∇ D)`).
    pub fn gradient(&self, q: &CMatrix) -> Result<CMatrix> {
        if self.num_bds() == 0 || self.scale == 0.0 {
            return Ok(CMatrix::zeros(self.m_t, self.m_t));
        }
        let norm = 1.0 / (self.k * std::f64::consts::LN_2);
        let d = match self.side {
            Side::Bd => {
                let mut m = self.bd_matrix(q);
                for i in 0..m.nrows() {
                    m[(i, i)] += real(1.0);
                }
                let minv = inv_hpd(&m)?;
                let w = minv.component_mul(&self.gamma.transpose());
                (&self.hh * w * self.hh.adjoint()).scale(self.scale)
            }
            Side::Antenna => {
                let dim = self.m_t * self.m_r;
                let qi = kron(q, &identity(self.m_r));
                let n = inv(&(identity(dim) + &self.t * qi))? * &self.t;
                let mut p = CMatrix::zeros(self.m_t, self.m_t);
                for a in 0..self.m_t {
                    for b in 0..self.m_t {
                        let mut s = ZERO;
                        for r in 0..self.m_r {
                            s += n[(a * self.m_r + r, b * self.m_r + r)];
                        }
                        p[(a, b)] = s;
                    }
                }
                p
            }
        };
        Ok(hermitian_part(&d.scale(norm)))
    }
}

/// Full rate report for precoder `F` on one realization: Monte Carlo primary
/// rate plus MMSE-SIC BD rates.
pub fn rate_report(
    ch: &ChannelSet,
    f: &CMatrix,
    params: &SystemParams,
    source: &BdSymbolSource,
    samples: usize,
) -> Result<RateReport> {
    let q = f * f.adjoint();
    let (primary, stderr) = primary_rate_mc(ch, &q, params, source, samples)?;
    let x = bd_effective_vectors(ch, f, params);
    let sic = mmse_sic(&x, params.sigma2_watts(), params.k)?;
    Ok(RateReport {
        primary_rate_bits: primary,
        primary_rate_stderr: stderr,
        bd_sum_rate_bits: sic.sum_rate_bits,
        per_bd_sinr: sic.per_bd_sinr,
        decode_order: sic.decode_order,
    })
}
