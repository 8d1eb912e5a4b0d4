//! Transmit covariance optimization.
//!
//! Maximize a primary-rate objective `f(Q)` subject to the BD sum-rate
//! constraint `g(Q) ≥ r_bd`, `tr Q = 1`, `Q ⪰ 0`. Both functions are concave in
//! `Q`, so the problem is solved through its Lagrangian `f + μ g`: bisection on
//! the multiplier outside, projected gradient ascent inside.
//!
//! Two objectives are available: the average over a frozen set of BD symbol
//! draws, and the Jensen upper bound `log₂|I + P̄ R^{1/2} Q R^{1/2}|` with
//! `R = H_dᴴH_d + α Σ_j ‖g_j‖² h_jh_jᴴ`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::channel::{domain, ChannelSet, SystemParams};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::{
    diag_real, eigh, hermitian_part, identity, inner_re, inv, log2_abs_det, logdet_ipa, project_psd_trace1, psd_sqrt,
    CMatrix,
};
use crate::rates::{equivalent_channel, BdSymbolSource, KronSumRate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    SampleAverage,
    #[default]
    UpperBound,
}

impl SolveMode {
    pub fn name(self) -> &'static str {
        match self {
            SolveMode::SampleAverage => "sample_average",
            SolveMode::UpperBound => "upper_bound",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub mode: SolveMode,
    /// BD sum-rate threshold in bits per primary symbol.
    pub r_bd: f64,
    /// Number of frozen BD symbol draws in sample-average mode.
    pub samples: usize,
    pub grad_tol: f64,
    pub slack_tol_bits: f64,
    pub mu_max: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub armijo_c: f64,
    pub backtrack: f64,
    pub execution: Execution,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            mode: SolveMode::UpperBound,
            r_bd: 0.0,
            samples: 1000,
            grad_tol: 1e-6,
            slack_tol_bits: 1e-4,
            mu_max: 1e6,
            max_outer: 60,
            max_inner: 5000,
            armijo_c: 1e-4,
            backtrack: 0.5,
            execution: Execution::Parallel,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.grad_tol, self.slack_tol_bits, self.mu_max, self.armijo_c];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::Config("backtrack ratio must lie in (0, 1)".into()));
        }
        if self.samples == 0 || self.max_inner == 0 || self.max_outer == 0 {
            return Err(Error::Config("sample and iteration counts must be positive".into()));
        }
        if self.r_bd.is_nan() {
            return Err(Error::Config("r_bd is NaN".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub objective_bits: f64,
    pub constraint_bits: f64,
    pub mu: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_s: f64,
}

/// `(1/K) log₂|I_J + KP̄α Ψᴴ(Q ⊗ (HᴴH)ᵀ)Ψ|`.
pub fn constraint_rate(q: &CMatrix, ch: &ChannelSet, params: &SystemParams) -> Result<f64> {
    KronSumRate::new(ch, params).value(q)
}

pub fn constraint_gradient(q: &CMatrix, ch: &ChannelSet, params: &SystemParams) -> Result<CMatrix> {
    KronSumRate::new(ch, params).gradient(q)
}

/// `R = H_dᴴH_d + α Σ_j ‖g_j‖² h_jh_jᴴ`, the symbol-averaged `E[H_eqᴴH_eq]`.
pub fn averaged_gram(ch: &ChannelSet, alpha: f64) -> CMatrix {
    let mut r = ch.h_d.adjoint() * &ch.h_d;
    for (h, g) in ch.h.iter().zip(&ch.g) {
        r += (h * h.adjoint()).scale(alpha * g.norm_squared());
    }
    hermitian_part(&r)
}

/// Jensen upper bound on the symbol-averaged primary rate.
#[derive(Debug, Clone)]
pub struct UpperBound {
    pbar: f64,
    r_half: CMatrix,
}

impl UpperBound {
    pub fn new(ch: &ChannelSet, params: &SystemParams) -> Result<Self> {
        let r = averaged_gram(ch, params.alpha);
        Ok(Self { pbar: params.pbar(), r_half: psd_sqrt(&r)? })
    }

    fn inner(&self, q: &CMatrix) -> CMatrix {
        (&self.r_half * q * &self.r_half).scale(self.pbar)
    }

    pub fn value(&self, q: &CMatrix) -> Result<f64> {
        logdet_ipa(&self.inner(q))
    }

    pub fn value_grad(&self, q: &CMatrix) -> Result<(f64, CMatrix)> {
        let a = self.inner(q);
        let v = logdet_ipa(&a)?;
        let m = identity(a.nrows()) + a;
        let g = &self.r_half * inv(&m)? * &self.r_half;
        Ok((v, hermitian_part(&g.scale(self.pbar / std::f64::consts::LN_2))))
    }
}

/// Average primary rate over a frozen set of BD symbol draws.
#[derive(Debug, Clone)]
pub struct SampleAverage {
    pbar: f64,
    /// `H_sᴴ H_s` per sample.
    grams: Vec<CMatrix>,
    execution: Execution,
}

impl SampleAverage {
    pub fn new(
        ch: &ChannelSet,
        params: &SystemParams,
        source: &BdSymbolSource,
        samples: usize,
        execution: Execution,
    ) -> Result<Self> {
        if samples == 0 {
            return Err(Error::Config("sample count must be at least 1".into()));
        }
        let j = ch.num_bds();
        let grams = execution
            .map(samples, |s| {
                let h = equivalent_channel(ch, &source.draw(s, j), params.alpha)?;
                Ok(hermitian_part(&(h.adjoint() * h)))
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { pbar: params.pbar(), grams, execution })
    }

    pub fn samples(&self) -> usize {
        self.grams.len()
    }

    pub fn value(&self, q: &CMatrix) -> Result<f64> {
        let n = q.nrows();
        let terms = self
            .execution
            .map(self.grams.len(), |s| log2_abs_det(&(identity(n) + (&self.grams[s] * q).scale(self.pbar))));
        Ok(terms.iter().sum::<f64>() / self.grams.len() as f64)
    }

    pub fn value_grad(&self, q: &CMatrix) -> Result<(f64, CMatrix)> {
        let n = q.nrows();
        let terms = self.execution.map(self.grams.len(), |s| {
            let a = &self.grams[s];
            let m = identity(n) + (a * q).scale(self.pbar);
            Ok::<_, Error>((log2_abs_det(&m), inv(&m)? * a))
        });
        let mut v = 0.0;
        let mut g = CMatrix::zeros(n, n);
        for t in terms {
            let (tv, tg) = t?;
            v += tv;
            g += tg;
        }
        let s = self.grams.len() as f64;
        let scale = self.pbar / (std::f64::consts::LN_2 * s);
        Ok((v / s, hermitian_part(&g.scale(scale))))
    }
}

pub fn objective_upper_bound(q: &CMatrix, ch: &ChannelSet, params: &SystemParams) -> Result<f64> {
    UpperBound::new(ch, params)?.value(q)
}

pub fn objective_upper_bound_grad(q: &CMatrix, ch: &ChannelSet, params: &SystemParams) -> Result<CMatrix> {
    Ok(UpperBound::new(ch, params)?.value_grad(q)?.1)
}

pub fn objective_sample_average(
    q: &CMatrix,
    ch: &ChannelSet,
    params: &SystemParams,
    source: &BdSymbolSource,
    samples: usize,
) -> Result<f64> {
    SampleAverage::new(ch, params, source, samples, Execution::Sequential)?.value(q)
}

pub fn objective_sample_average_grad(
    q: &CMatrix,
    ch: &ChannelSet,
    params: &SystemParams,
    source: &BdSymbolSource,
    samples: usize,
) -> Result<CMatrix> {
    Ok(SampleAverage::new(ch, params, source, samples, Execution::Sequential)?.value_grad(q)?.1)
}

/// Either primary-rate objective.
#[derive(Debug, Clone)]
pub enum Objective {
    UpperBound(UpperBound),
    SampleAverage(SampleAverage),
}

impl Objective {
    /// Objective for `opts.mode`. Sample-average draws come from
    /// `(seed, SOLVER_SAMPLES)` and stay frozen for the whole solve.
    pub fn build(ch: &ChannelSet, params: &SystemParams, opts: &SolveOptions, seed: u64) -> Result<Self> {
        Ok(match opts.mode {
            SolveMode::UpperBound => Objective::UpperBound(UpperBound::new(ch, params)?),
            SolveMode::SampleAverage => {
                let source = BdSymbolSource::new(params.constellation, seed).with_domain(domain::SOLVER_SAMPLES);
                Objective::SampleAverage(SampleAverage::new(ch, params, &source, opts.samples, opts.execution)?)
            }
        })
    }

    pub fn value(&self, q: &CMatrix) -> Result<f64> {
        match self {
            Objective::UpperBound(o) => o.value(q),
            Objective::SampleAverage(o) => o.value(q),
        }
    }

    pub fn value_grad(&self, q: &CMatrix) -> Result<(f64, CMatrix)> {
        match self {
            Objective::UpperBound(o) => o.value_grad(q),
            Objective::SampleAverage(o) => o.value_grad(q),
        }
    }
}

/// `‖Q − Proj(Q + ∇/‖∇‖_F)‖_F`, zero exactly at a maximizer of a concave
/// function over the unit-trace PSD set.
pub fn kkt_residual(q: &CMatrix, grad: &CMatrix) -> Result<f64> {
    let norm = grad.norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    let step = project_psd_trace1(&(q + grad.scale(1.0 / norm)))?;
    Ok((step - q).norm())
}

/// Weighted Lagrangian `w_f f + μ g` with its pieces.
struct Eval {
    value: f64,
    grad: CMatrix,
    f: f64,
    g: f64,
}

struct Problem<'a> {
    f: &'a Objective,
    g: &'a KronSumRate,
    opts: &'a SolveOptions,
}

struct Inner {
    q: CMatrix,
    f: f64,
    g: f64,
    iterations: usize,
    converged: bool,
}

impl Problem<'_> {
    fn eval(&self, q: &CMatrix, w_f: f64, mu: f64) -> Result<Eval> {
        let (f, gf) =
            if w_f > 0.0 { self.f.value_grad(q)? } else { (self.f.value(q)?, CMatrix::zeros(q.nrows(), q.nrows())) };
        let (g, gg) = if mu > 0.0 {
            (self.g.value(q)?, self.g.gradient(q)?)
        } else {
            (self.g.value(q)?, CMatrix::zeros(q.nrows(), q.nrows()))
        };
        Ok(Eval { value: w_f * f + mu * g, grad: gf.scale(w_f) + gg.scale(mu), f, g })
    }

    /// Projected gradient ascent on `w_f f + μ g` from `q0`.
    fn ascend(&self, q0: &CMatrix, w_f: f64, mu: f64) -> Result<Inner> {
        let opts = self.opts;
        let mut q = project_psd_trace1(q0)?;
        let mut cur = self.eval(&q, w_f, mu)?;
        let gnorm = cur.grad.norm();
        let mut step = if gnorm > 0.0 { 1.0 / (std::f64::consts::LN_2 * gnorm * gnorm) } else { 1.0 };
        for it in 0..opts.max_inner {
            if kkt_residual(&q, &cur.grad)? <= opts.grad_tol {
                return Ok(Inner { q, f: cur.f, g: cur.g, iterations: it, converged: true });
            }
            let slop = 8.0 * f64::EPSILON * cur.value.abs().max(1.0);
            let mut t = step;
            let mut accepted = None;
            for _ in 0..80 {
                let trial = project_psd_trace1(&(&q + cur.grad.scale(t)))?;
                let delta = &trial - &q;
                if delta.norm() == 0.0 {
                    break;
                }
                let next = self.eval(&trial, w_f, mu)?;
                let ascent = inner_re(&cur.grad, &delta);
                if next.value >= cur.value + opts.armijo_c * ascent - slop {
                    accepted = Some((trial, delta, next));
                    break;
                }
                t *= opts.backtrack;
            }
            let Some((trial, delta, next)) = accepted else {
                // No representable ascent step is left.
                let converged = kkt_residual(&q, &cur.grad)? <= opts.grad_tol.sqrt();
                return Ok(Inner { q, f: cur.f, g: cur.g, iterations: it, converged });
            };
            // Barzilai–Borwein trial step for the next iteration.
            let y = &next.grad - &cur.grad;
            let sy = inner_re(&delta, &y);
            step = if sy < 0.0 { delta.norm_squared() / -sy } else { t * 2.0 };
            if !step.is_finite() || step <= 0.0 {
                step = t;
            }
            q = trial;
            cur = next;
        }
        let converged = kkt_residual(&q, &cur.grad)? <= opts.grad_tol;
        Ok(Inner { q, f: cur.f, g: cur.g, iterations: opts.max_inner, converged })
    }
}

/// Largest achievable BD sum rate and a covariance achieving it.
pub fn max_constraint_rate(ch: &ChannelSet, params: &SystemParams, opts: &SolveOptions) -> Result<(f64, CMatrix)> {
    let g = KronSumRate::new(ch, params);
    let f = Objective::UpperBound(UpperBound::new(ch, params)?);
    let problem = Problem { f: &f, g: &g, opts };
    let m_t = ch.m_t();
    let inner = problem.ascend(&identity(m_t).scale(1.0 / m_t as f64), 0.0, 1.0)?;
    Ok((inner.g, inner.q))
}

/// Solves `max f(Q)` s.t. `g(Q) ≥ r_bd`, `tr Q = 1`, `Q ⪰ 0`.
pub fn solve_precoding(
    ch: &ChannelSet,
    params: &SystemParams,
    opts: &SolveOptions,
    seed: u64,
) -> Result<(CMatrix, SolveDiagnostics)> {
    let start = Instant::now();
    opts.validate()?;
    ch.check()?;
    let f = Objective::build(ch, params, opts, seed)?;
    let g = KronSumRate::new(ch, params);
    let problem = Problem { f: &f, g: &g, opts };
    let m_t = ch.m_t();
    let q0 = identity(m_t).scale(1.0 / m_t as f64);
    let target = opts.r_bd;
    let feasible = |inner: &Inner| inner.g >= target - opts.slack_tol_bits;
    let mut iterations = 0;

    let finish = |inner: Inner, mu: f64, iterations: usize, converged: bool| {
        let diag = SolveDiagnostics {
            objective_bits: inner.f,
            constraint_bits: inner.g,
            mu,
            iterations,
            converged,
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        (inner.q, diag)
    };

    let free = problem.ascend(&q0, 1.0, 0.0)?;
    iterations += free.iterations;
    if feasible(&free) {
        let converged = free.converged;
        return Ok(finish(free, 0.0, iterations, converged));
    }

    let best_g = problem.ascend(&q0, 0.0, 1.0)?;
    iterations += best_g.iterations;
    if !feasible(&best_g) {
        return Err(Error::Infeasible { target, max: best_g.g });
    }

    // Multiplier scale that balances the two gradients at the start point.
    let gf = problem.f.value_grad(&q0)?.1.norm();
    let gg = problem.g.gradient(&q0)?.norm();
    let mut hi = if gg > 0.0 { (gf / gg).clamp(1e-12, opts.mu_max) } else { 1.0 };
    let mut lo = 0.0;
    let mut warm = free.q.clone();
    let mut hi_sol = loop {
        let sol = problem.ascend(&warm, 1.0, hi)?;
        iterations += sol.iterations;
        warm = sol.q.clone();
        if feasible(&sol) {
            break sol;
        }
        lo = hi;
        if hi >= opts.mu_max {
            // The multiplier cap is reached: fall back to the feasibility maximizer.
            return Ok(finish(best_g, opts.mu_max, iterations, false));
        }
        hi = (hi * 10.0).min(opts.mu_max);
    };
    if (hi_sol.g - target).abs() <= opts.slack_tol_bits {
        let converged = hi_sol.converged;
        return Ok(finish(hi_sol, hi, iterations, converged));
    }

    for _ in 0..opts.max_outer {
        if lo > 0.0 && (hi - lo) / hi <= 1e-3 {
            let converged = hi_sol.converged;
            return Ok(finish(hi_sol, hi, iterations, converged));
        }
        let mid = if lo > 0.0 { (lo * hi).sqrt() } else { hi * 0.25 };
        let sol = problem.ascend(&hi_sol.q, 1.0, mid)?;
        iterations += sol.iterations;
        if feasible(&sol) {
            if (sol.g - target).abs() <= opts.slack_tol_bits {
                let converged = sol.converged;
                return Ok(finish(sol, mid, iterations, converged));
            }
            hi = mid;
            hi_sol = sol;
        } else {
            lo = mid;
        }
    }
    Err(Error::NoConvergence { what: "multiplier bisection", iterations: opts.max_outer })
}

/// Factors `Q = F Fᴴ` over the eigenvalues above `tol · λ_max`.
pub fn covariance_to_precoder(q: &CMatrix, tol: f64) -> Result<(CMatrix, usize)> {
    let e = eigh(q)?;
    let cutoff = tol * e.max_value().max(0.0);
    let keep: Vec<usize> = (0..e.values.len()).rev().filter(|&i| e.values[i] > cutoff).collect();
    let m_t = q.nrows();
    let mut f = CMatrix::zeros(m_t, keep.len());
    for (col, &i) in keep.iter().enumerate() {
        let s = e.values[i].sqrt();
        for r in 0..m_t {
            f[(r, col)] = e.vectors[(r, i)] * s;
        }
    }
    Ok((f, keep.len()))
}

/// Classical waterfilling: maximize `Σ log(1 + gains_i p_i)` with
/// `Σ p_i = total`, `p_i ≥ 0`.
pub fn waterfill(gains: &[f64], total: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..gains.len()).filter(|&i| gains[i] > 0.0).collect();
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]));
    let mut p = vec![0.0; gains.len()];
    if order.is_empty() {
        return p;
    }
    // Largest active set whose water level clears every member's floor.
    let mut level = 0.0;
    let mut active = 0;
    let mut inv_sum = 0.0;
    for (n, &i) in order.iter().enumerate() {
        inv_sum += 1.0 / gains[i];
        let nu = (total + inv_sum) / (n + 1) as f64;
        if nu > 1.0 / gains[i] {
            level = nu;
            active = n + 1;
        } else {
            break;
        }
    }
    for &i in &order[..active] {
        p[i] = level - 1.0 / gains[i];
    }
    p
}

/// Benchmark precoder aligned with the direct link only:
/// `F = V P^{1/2} / √M_t` with waterfilling over the eigenvalues of `H_dᴴH_d`.
pub fn direct_link_matching(h_d: &CMatrix, pbar: f64, m_t: usize) -> Result<CMatrix> {
    if h_d.ncols() != m_t {
        return Err(Error::DimensionMismatch(format!("H_d has {} columns, M_t = {m_t}", h_d.ncols())));
    }
    let e = eigh(&(h_d.adjoint() * h_d))?;
    let s = pbar / m_t as f64;
    let gains: Vec<f64> = e.values.iter().map(|l| s * l.max(0.0)).collect();
    let mut p = waterfill(&gains, m_t as f64);
    if p.iter().all(|v| *v == 0.0) {
        p = vec![1.0; m_t];
    }
    let roots: Vec<f64> = p.iter().map(|v| (v / m_t as f64).sqrt()).collect();
    Ok(&e.vectors * diag_real(&roots))
}
