//! Scenario geometry, large-scale gains and fading realizations.
//!
//! Coordinates are meters in a 2-D plane. Both arrays are half-wavelength
//! uniform linear arrays laid along the y-axis, so a link along the x-axis is
//! broadside (zero steering phase).

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, CMatrix, CVector};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Identification of the generator and stream layout, written into every
/// experiment sidecar.
pub const PRNG_ID: &str = "ChaCha8Rng (rand_chacha 0.9); key = seed_from_u64(seed); \
stream id = (domain << 48) | index";

/// Substream domains. Each consumer of randomness owns one domain so that
/// draws never overlap.
pub mod domain {
    pub const BD_CHANNEL: u64 = 1;
    pub const BD_SYMBOLS: u64 = 2;
    pub const SOLVER_SAMPLES: u64 = 3;
    pub const EVAL_SAMPLES: u64 = 4;
    pub const SYNTHETIC: u64 = 5;
}

/// Independent ChaCha8 stream `(domain, index)` under key `seed`.
pub fn substream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    debug_assert!(index < (1 << 48));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((domain << 48) | index);
    rng
}

/// SplitMix64 finalizer, used to derive per-replication seeds.
pub fn mix_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub pt_position: [f64; 2],
    pub ap_position: [f64; 2],
    pub bd_center: [f64; 2],
    pub bd_radius: f64,
    pub carrier_hz: f64,
    pub gamma_ta: f64,
    pub gamma_tb: f64,
    pub rice_k_db: f64,
    /// Ratio `β_hg / β_h` of the cascaded PT-BD-AP gain.
    pub cascade_scale: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            pt_position: [0.0, 0.0],
            ap_position: [200.0, 0.0],
            bd_center: [180.0, 20.0],
            bd_radius: 5.0,
            carrier_hz: 3.5e9,
            gamma_ta: 2.0,
            gamma_tb: 2.7,
            rice_k_db: 10.0,
            cascade_scale: 0.01,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.bd_radius > 0.0) {
            return Err(Error::Config("bd_radius must be positive".into()));
        }
        if !(self.carrier_hz > 0.0) {
            return Err(Error::Config("carrier_hz must be positive".into()));
        }
        if !(self.gamma_ta >= 0.0 && self.gamma_tb >= 0.0) {
            return Err(Error::Config("path-loss exponents must be non-negative".into()));
        }
        if !(self.cascade_scale > 0.0) {
            return Err(Error::Config("cascade_scale must be positive".into()));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Direct-link gain `β_hd`.
    pub fn beta_hd(&self) -> f64 {
        pathloss(distance(self.pt_position, self.ap_position), self.gamma_ta, self.carrier_hz)
            .expect("PT and AP must not coincide")
    }

    /// PT-to-BD gain evaluated at the disc center.
    pub fn beta_h_center(&self) -> f64 {
        pathloss(distance(self.pt_position, self.bd_center), self.gamma_tb, self.carrier_hz)
            .expect("PT and BD center must not coincide")
    }

    /// BD-to-AP gain. The product `β_h β_g` equals `cascade_scale · β_h`.
    pub fn beta_g(&self) -> f64 {
        self.cascade_scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constellation {
    #[default]
    Cscg,
    Qpsk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemParams {
    pub m_t: usize,
    pub m_r: usize,
    pub j: usize,
    pub k: usize,
    pub p_dbm: f64,
    pub sigma2_dbm: f64,
    pub alpha: f64,
    pub constellation: Constellation,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            m_t: 4,
            m_r: 8,
            j: 50,
            k: 128,
            p_dbm: 0.0,
            sigma2_dbm: -110.0,
            alpha: 1.0,
            constellation: Constellation::Cscg,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        if self.m_t == 0 || self.m_r == 0 || self.k == 0 {
            return Err(Error::Config("m_t, m_r and k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !self.p_dbm.is_finite() || !self.sigma2_dbm.is_finite() {
            return Err(Error::Config("powers must be finite".into()));
        }
        Ok(())
    }

    pub fn p_watts(&self) -> f64 {
        dbm_to_watts(self.p_dbm)
    }

    pub fn sigma2_watts(&self) -> f64 {
        dbm_to_watts(self.sigma2_dbm)
    }

    /// Transmit SNR `P̄ = P / σ²`.
    pub fn pbar(&self) -> f64 {
        db_to_linear(self.p_dbm - self.sigma2_dbm)
    }
}

/// One realization of every channel in the system.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// `M_r × M_t` direct link.
    pub h_d: CMatrix,
    /// PT-to-BD channels, `M_t × 1` each.
    pub h: Vec<CVector>,
    /// BD-to-AP channels, `M_r × 1` each.
    pub g: Vec<CVector>,
    pub beta_h: Vec<f64>,
    pub beta_g: Vec<f64>,
    pub beta_hd: f64,
    pub bd_positions: Vec<[f64; 2]>,
}

impl ChannelSet {
    pub fn m_t(&self) -> usize {
        self.h_d.ncols()
    }

    pub fn m_r(&self) -> usize {
        self.h_d.nrows()
    }

    pub fn num_bds(&self) -> usize {
        self.h.len()
    }

    pub fn check(&self) -> Result<()> {
        if self.g.len() != self.h.len() {
            return Err(Error::DimensionMismatch("h and g lists differ in length".into()));
        }
        let (m_r, m_t) = self.h_d.shape();
        if self.h.iter().any(|h| h.len() != m_t) || self.g.iter().any(|g| g.len() != m_r) {
            return Err(Error::DimensionMismatch("BD channel length disagrees with H_d".into()));
        }
        Ok(())
    }

    /// Keeps the first `j` BDs.
    pub fn truncated(&self, j: usize) -> ChannelSet {
        let j = j.min(self.num_bds());
        ChannelSet {
            h_d: self.h_d.clone(),
            h: self.h[..j].to_vec(),
            g: self.g[..j].to_vec(),
            beta_h: self.beta_h[..j].to_vec(),
            beta_g: self.beta_g[..j].to_vec(),
            beta_hd: self.beta_hd,
            bd_positions: self.bd_positions[..j].to_vec(),
        }
    }
}

pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Large-scale gain `(λ/4π)² d^{-γ}`.
pub fn pathloss(d: f64, gamma: f64, carrier_hz: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::NonPositiveDistance(d));
    }
    let lambda = SPEED_OF_LIGHT / carrier_hz;
    Ok((lambda / (4.0 * PI)).powi(2) * d.powf(-gamma))
}

/// Half-wavelength ULA response `exp(-jπ m sinθ)`, where `sin_theta` is the
/// y-component of the unit vector towards the far end.
pub fn steering(n: usize, sin_theta: f64) -> CVector {
    CVector::from_fn(n, |m, _| {
        let phase = -PI * m as f64 * sin_theta;
        c(phase.cos(), phase.sin())
    })
}

fn sin_towards(from: [f64; 2], to: [f64; 2]) -> f64 {
    let d = distance(from, to);
    if d == 0.0 {
        0.0
    } else {
        (to[1] - from[1]) / d
    }
}

/// Rank-one line-of-sight direct link `√β_hd a_r a_tᴴ`.
pub fn los_channel(scenario: &Scenario, m_t: usize, m_r: usize) -> CMatrix {
    let beta = scenario.beta_hd();
    let a_t = steering(m_t, sin_towards(scenario.pt_position, scenario.ap_position));
    let a_r = steering(m_r, sin_towards(scenario.ap_position, scenario.pt_position));
    (a_r * a_t.adjoint()).scale(beta.sqrt())
}

/// One CSCG(0, 1) draw.
pub fn cscg<R: Rng + ?Sized>(rng: &mut R) -> num_complex::Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    c(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Rician vector `√β (√(κ/(1+κ)) los + √(1/(1+κ)) nlos)` with a unit-modulus
/// `los` response and i.i.d. CSCG scattering. `rice_k_db = +∞` gives pure LoS.
pub fn rician<R: Rng + ?Sized>(beta: f64, rice_k_db: f64, los: &CVector, rng: &mut R) -> CVector {
    let kappa = db_to_linear(rice_k_db);
    let (w_los, w_nlos) =
        if kappa.is_infinite() { (1.0, 0.0) } else { ((kappa / (1.0 + kappa)).sqrt(), (1.0 / (1.0 + kappa)).sqrt()) };
    let amp = beta.sqrt();
    CVector::from_fn(los.len(), |m, _| {
        let scatter = cscg(rng);
        (los[m] * w_los + scatter * w_nlos) * amp
    })
}

/// Uniform point in a disc by inverse-CDF radius `R√u`.
pub fn uniform_in_disc<R: Rng + ?Sized>(center: [f64; 2], radius: f64, rng: &mut R) -> [f64; 2] {
    let r = radius * rng.random::<f64>().sqrt();
    let phi = 2.0 * PI * rng.random::<f64>();
    [center[0] + r * phi.cos(), center[1] + r * phi.sin()]
}

/// Draws BD positions and fading for `params.j` devices. Each BD uses its own
/// substream, so the realization of BD `j` does not depend on how many BDs
/// are drawn.
pub fn sample_scenario(scenario: &Scenario, params: &SystemParams, seed: u64) -> ChannelSet {
    let h_d = los_channel(scenario, params.m_t, params.m_r);
    let beta_hd = scenario.beta_hd();
    let beta_g = scenario.beta_g();
    let mut out = ChannelSet {
        h_d,
        h: Vec::with_capacity(params.j),
        g: Vec::with_capacity(params.j),
        beta_h: Vec::with_capacity(params.j),
        beta_g: Vec::with_capacity(params.j),
        beta_hd,
        bd_positions: Vec::with_capacity(params.j),
    };
    for j in 0..params.j {
        let mut rng = substream(seed, domain::BD_CHANNEL, j as u64);
        let pos = uniform_in_disc(scenario.bd_center, scenario.bd_radius, &mut rng);
        let beta_h = pathloss(distance(scenario.pt_position, pos), scenario.gamma_tb, scenario.carrier_hz)
            .expect("BD disc must not contain the PT");
        let los_t = steering(params.m_t, sin_towards(scenario.pt_position, pos));
        let los_r = steering(params.m_r, sin_towards(scenario.ap_position, pos));
        out.h.push(rician(beta_h, scenario.rice_k_db, &los_t, &mut rng));
        out.g.push(rician(beta_g, scenario.rice_k_db, &los_r, &mut rng));
        out.beta_h.push(beta_h);
        out.beta_g.push(beta_g);
        out.bd_positions.push(pos);
    }
    out
}

/// Synthetic i.i.d. CSCG channels with `E[h hᴴ] = β_h I`, `E[g gᴴ] = β_g I`
/// and an i.i.d. CSCG(0, β_hd) direct link.
pub fn sample_iid(m_t: usize, m_r: usize, j: usize, beta_h: f64, beta_g: f64, beta_hd: f64, seed: u64) -> ChannelSet {
    let mut rng = substream(seed, domain::SYNTHETIC, 0);
    let h_d = CMatrix::from_fn(m_r, m_t, |_, _| cscg(&mut rng) * beta_hd.sqrt());
    let mut h = Vec::with_capacity(j);
    let mut g = Vec::with_capacity(j);
    for _ in 0..j {
        h.push(CVector::from_fn(m_t, |_, _| cscg(&mut rng) * beta_h.sqrt()));
        g.push(CVector::from_fn(m_r, |_, _| cscg(&mut rng) * beta_g.sqrt()));
    }
    ChannelSet {
        h_d,
        h,
        g,
        beta_h: vec![beta_h; j],
        beta_g: vec![beta_g; j],
        beta_hd,
        bd_positions: vec![[f64::NAN; 2]; j],
    }
}
