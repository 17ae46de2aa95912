//! Physical-layer model of the active-IRS-aided SWIPT downlink.
//!
//! Conventions: channel vectors are stored as column vectors, so the row
//! channel from the AP to IU `i` is `h_d[i]^H`, and the IRS reflection matrix
//! is `Θ = diag(u)`. All powers are in watts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cr, outer, C64, CMat, CVec};

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Scalar parameters of one system instance.
///
/// `p_i = f64::INFINITY` disables the amplification budget; this is only
/// meaningful together with `sigma_z2 = 0` (passive-surface model).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub m: usize,
    pub n: usize,
    pub k_i: usize,
    pub k_e: usize,
    pub p_a: f64,
    pub p_i: f64,
    pub sigma_z2: f64,
    pub sigma_i2: Vec<f64>,
    pub gamma: Vec<f64>,
    pub e: Vec<f64>,
    pub alpha: Vec<f64>,
    pub mu: Vec<f64>,
}

impl SystemConfig {
    /// Configuration with identical per-user parameters and unit weights.
    #[allow(clippy::too_many_arguments)]
    pub fn uniform(
        m: usize,
        n: usize,
        k_i: usize,
        k_e: usize,
        p_a: f64,
        p_i: f64,
        sigma_z2: f64,
        sigma2: f64,
        gamma: f64,
        e: f64,
    ) -> Self {
        Self {
            m,
            n,
            k_i,
            k_e,
            p_a,
            p_i,
            sigma_z2,
            sigma_i2: vec![sigma2; k_i],
            gamma: vec![gamma; k_i],
            e: vec![e; k_e],
            alpha: vec![1.0; k_e],
            mu: vec![1.0; k_i],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.m == 0 || self.n == 0 {
            return bad(format!("M and N must be >= 1 (got M={}, N={})", self.m, self.n));
        }
        if self.k_e == 0 {
            return bad("K_E must be >= 1".into());
        }
        if self.sigma_i2.len() != self.k_i || self.gamma.len() != self.k_i || self.mu.len() != self.k_i {
            return bad("IU parameter lists must have length K_I".into());
        }
        if self.e.len() != self.k_e || self.alpha.len() != self.k_e {
            return bad("EU parameter lists must have length K_E".into());
        }
        if !(self.p_a > 0.0) || !(self.p_i > 0.0) {
            return bad("P_A and P_I must be positive".into());
        }
        let passive = self.p_i.is_infinite();
        if !(self.sigma_z2 > 0.0 || (passive && self.sigma_z2 == 0.0)) || !self.sigma_z2.is_finite() {
            return bad("sigma_z^2 must be positive and finite".into());
        }
        if self.sigma_i2.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return bad("sigma_i^2 must be positive".into());
        }
        if self.e.iter().any(|e| !(*e >= 0.0)) {
            return bad("E_j must be >= 0".into());
        }
        if self.alpha.iter().chain(self.mu.iter()).any(|w| !(*w >= 0.0)) {
            return bad("weights must be >= 0".into());
        }
        if self.gamma.iter().any(|g| !(*g >= 0.0)) {
            return bad("SINR targets must be >= 0".into());
        }
        Ok(())
    }

    pub fn has_amplification_budget(&self) -> bool {
        self.p_i.is_finite()
    }

    /// Same system seen through the passive-surface benchmark: no IRS noise,
    /// no amplification budget, and the AP gets the combined power `P_A + P_I`.
    pub fn passive_equivalent(&self) -> Self {
        let mut cfg = self.clone();
        cfg.p_a = self.p_a + if self.p_i.is_finite() { self.p_i } else { 0.0 };
        cfg.p_i = f64::INFINITY;
        cfg.sigma_z2 = 0.0;
        cfg
    }
}

/// All channel coefficients of one realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    /// AP -> IRS, `N x M`.
    pub f: CMat,
    pub h_d: Vec<CVec>,
    pub h_r: Vec<CVec>,
    pub g_d: Vec<CVec>,
    pub g_r: Vec<CVec>,
}

impl ChannelSet {
    pub fn m(&self) -> usize {
        self.f.ncols()
    }

    pub fn n(&self) -> usize {
        self.f.nrows()
    }

    pub fn check(&self, cfg: &SystemConfig) -> Result<()> {
        let (n, m) = self.f.shape();
        if n != cfg.n || m != cfg.m {
            return Err(Error::Dimension(format!("F is {n}x{m}, config expects {}x{}", cfg.n, cfg.m)));
        }
        if self.h_d.len() != cfg.k_i || self.h_r.len() != cfg.k_i {
            return Err(Error::Dimension("IU channel count differs from K_I".into()));
        }
        if self.g_d.len() != cfg.k_e || self.g_r.len() != cfg.k_e {
            return Err(Error::Dimension("EU channel count differs from K_E".into()));
        }
        let bad_len = self.h_d.iter().chain(&self.g_d).any(|v| v.len() != m)
            || self.h_r.iter().chain(&self.g_r).any(|v| v.len() != n);
        if bad_len {
            return Err(Error::Dimension("user channel vector length mismatch".into()));
        }
        let finite = self.f.iter().chain(self.h_d.iter().flat_map(|v| v.iter()))
            .chain(self.h_r.iter().flat_map(|v| v.iter()))
            .chain(self.g_d.iter().flat_map(|v| v.iter()))
            .chain(self.g_r.iter().flat_map(|v| v.iter()))
            .all(|z| z.re.is_finite() && z.im.is_finite());
        if !finite {
            return Err(Error::InvalidConfig("non-finite channel entry".into()));
        }
        Ok(())
    }

    /// Copy with the IRS->IU links removed.
    pub fn without_irs_iu_links(&self) -> Self {
        let mut out = self.clone();
        for h in &mut out.h_r {
            h.fill(cr(0.0));
        }
        out
    }
}

/// One problem instance: parameters plus a channel realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub cfg: SystemConfig,
    pub channels: ChannelSet,
}

impl Instance {
    pub fn new(cfg: SystemConfig, channels: ChannelSet) -> Result<Self> {
        cfg.validate()?;
        channels.check(&cfg)?;
        Ok(Self { cfg, channels })
    }
}

/// Reflection coefficients `u_n = β_n e^{jθ_n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionState {
    pub u: CVec,
}

impl ReflectionState {
    pub fn new(u: CVec) -> Self {
        Self { u }
    }

    pub fn off(n: usize) -> Self {
        Self { u: CVec::zeros(n) }
    }

    pub fn from_polar(beta: &[f64], theta: &[f64]) -> Self {
        assert_eq!(beta.len(), theta.len());
        let u = CVec::from_iterator(
            beta.len(),
            beta.iter().zip(theta).map(|(&b, &t)| C64::from_polar(b.max(0.0), t)),
        );
        Self { u }
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.u.iter().map(|z| z.norm()).collect()
    }

    /// Phases reduced to `[0, 2π)`.
    pub fn phases(&self) -> Vec<f64> {
        self.u.iter().map(|z| crate::linalg::wrap_phase(z.arg())).collect()
    }

    pub fn theta(&self) -> CMat {
        CMat::from_diagonal(&self.u)
    }

    /// `‖Θ‖_F^2`.
    pub fn frobenius_sq(&self) -> f64 {
        self.u.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Lifted vector `ū = [conj(u); 1]`, so that `ū^H G_j = g_{r,j}^H Θ F + g_{d,j}^H`.
    pub fn lifted(&self) -> CVec {
        let n = self.u.len();
        let mut ub = CVec::zeros(n + 1);
        for k in 0..n {
            ub[k] = self.u[k].conj();
        }
        ub[n] = cr(1.0);
        ub
    }

    /// Inverse of [`lifted`](Self::lifted); the vector is first normalized so
    /// that its last entry equals one.
    pub fn from_lifted(ub: &CVec) -> Result<Self> {
        let n = ub.len().checked_sub(1).ok_or_else(|| Error::Dimension("empty lifted vector".into()))?;
        let last = ub[n];
        if last.norm() < 1e-300 {
            return Err(Error::NumericalFailure("lifted vector has zero last entry".into()));
        }
        let u = CVec::from_iterator(n, (0..n).map(|k| (ub[k] / last).conj()));
        Ok(Self { u })
    }
}

/// Transmit precoder: information beams `w` and energy beams `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Precoder {
    pub w: Vec<CVec>,
    pub v: Vec<CVec>,
}

impl Precoder {
    pub fn zeros(m: usize, k_i: usize, k_e: usize) -> Self {
        Self { w: vec![CVec::zeros(m); k_i], v: vec![CVec::zeros(m); k_e] }
    }

    pub fn info_only(w: Vec<CVec>, m: usize, k_e: usize) -> Self {
        Self { w, v: vec![CVec::zeros(m); k_e] }
    }

    fn beams(&self) -> impl Iterator<Item = &CVec> {
        self.w.iter().chain(self.v.iter())
    }
}

fn check_refl(ch: &ChannelSet, refl: &ReflectionState) -> Result<()> {
    if refl.n() != ch.n() {
        return Err(Error::Dimension(format!("reflection has {} elements, channels expect {}", refl.n(), ch.n())));
    }
    Ok(())
}

fn check_prec(ch: &ChannelSet, prec: &Precoder) -> Result<()> {
    if prec.w.len() != ch.h_d.len() {
        return Err(Error::Dimension("precoder has wrong number of information beams".into()));
    }
    if prec.beams().any(|b| b.len() != ch.m()) {
        return Err(Error::Dimension("beam length differs from M".into()));
    }
    Ok(())
}

/// `h^H = r^H Θ F + d^H`, returned as the column vector `h`.
fn cascade(f: &CMat, u: &CVec, r: &CVec, d: &CVec) -> CVec {
    // r^H Θ has entries conj(r_n) u_n.
    let row = CVec::from_iterator(u.len(), u.iter().zip(r.iter()).map(|(un, rn)| rn.conj() * un));
    let hh = f.transpose() * row; // (row^T F)^T, entries of h^H
    let mut h = hh.map(|z| z.conj());
    h += d;
    h
}

/// End-to-end channels `h_i` (IUs) and `g_j` (EUs).
pub fn effective_channels(ch: &ChannelSet, refl: &ReflectionState) -> Result<(Vec<CVec>, Vec<CVec>)> {
    check_refl(ch, refl)?;
    let h = ch.h_r.iter().zip(&ch.h_d).map(|(r, d)| cascade(&ch.f, &refl.u, r, d)).collect();
    let g = ch.g_r.iter().zip(&ch.g_d).map(|(r, d)| cascade(&ch.f, &refl.u, r, d)).collect();
    Ok((h, g))
}

/// `‖r^H Θ‖^2`.
pub fn reflected_noise_gain(r: &CVec, refl: &ReflectionState) -> f64 {
    r.iter().zip(refl.u.iter()).map(|(a, b)| a.norm_sqr() * b.norm_sqr()).sum()
}

fn abs2_inner(h: &CVec, w: &CVec) -> f64 {
    h.dotc(w).norm_sqr()
}

/// Signal, interference-plus-noise, and the resulting SINR of IU `i`.
pub fn sinr_terms(
    i: usize,
    prec: &Precoder,
    refl: &ReflectionState,
    ch: &ChannelSet,
    cfg: &SystemConfig,
) -> Result<(f64, f64)> {
    check_prec(ch, prec)?;
    let (h, _) = effective_channels(ch, refl)?;
    let hi = h.get(i).ok_or_else(|| Error::Dimension(format!("IU index {i} out of range")))?;
    let signal = abs2_inner(hi, &prec.w[i]);
    let mut interf: f64 = prec.w.iter().enumerate().filter(|(k, _)| *k != i).map(|(_, w)| abs2_inner(hi, w)).sum();
    interf += prec.v.iter().map(|v| abs2_inner(hi, v)).sum::<f64>();
    interf += cfg.sigma_z2 * reflected_noise_gain(&ch.h_r[i], refl) + cfg.sigma_i2[i];
    Ok((signal, interf))
}

pub fn sinr(i: usize, prec: &Precoder, refl: &ReflectionState, ch: &ChannelSet, cfg: &SystemConfig) -> Result<f64> {
    let (s, d) = sinr_terms(i, prec, refl, ch, cfg)?;
    Ok(s / d)
}

/// Achievable rate in bps/Hz.
pub fn rate(i: usize, prec: &Precoder, refl: &ReflectionState, ch: &ChannelSet, cfg: &SystemConfig) -> Result<f64> {
    Ok((1.0 + sinr(i, prec, refl, ch, cfg)?).log2())
}

pub fn weighted_sum_rate(prec: &Precoder, refl: &ReflectionState, ch: &ChannelSet, cfg: &SystemConfig) -> Result<f64> {
    (0..cfg.k_i).map(|i| Ok(cfg.mu[i] * rate(i, prec, refl, ch, cfg)?)).sum()
}

/// RF power `Q_j` collected at EU `j`.
pub fn harvested_power(
    j: usize,
    prec: &Precoder,
    refl: &ReflectionState,
    ch: &ChannelSet,
    cfg: &SystemConfig,
) -> Result<f64> {
    check_prec(ch, prec)?;
    let (_, g) = effective_channels(ch, refl)?;
    let gj = g.get(j).ok_or_else(|| Error::Dimension(format!("EU index {j} out of range")))?;
    let beams: f64 = prec.beams().map(|b| abs2_inner(gj, b)).sum();
    Ok(beams + cfg.sigma_z2 * reflected_noise_gain(&ch.g_r[j], refl))
}

pub fn weighted_sum_power(prec: &Precoder, refl: &ReflectionState, ch: &ChannelSet, cfg: &SystemConfig) -> Result<f64> {
    (0..cfg.k_e).map(|j| Ok(cfg.alpha[j] * harvested_power(j, prec, refl, ch, cfg)?)).sum()
}

/// Power drawn by the IRS amplifiers, `Σ‖ΘF b‖² + σ_z²‖Θ‖_F²`.
pub fn amplification_power(prec: &Precoder, refl: &ReflectionState, ch: &ChannelSet, cfg: &SystemConfig) -> Result<f64> {
    check_prec(ch, prec)?;
    check_refl(ch, refl)?;
    let mut total = cfg.sigma_z2 * refl.frobenius_sq();
    for b in prec.beams() {
        let fb = &ch.f * b;
        total += fb.iter().zip(refl.u.iter()).map(|(x, u)| x.norm_sqr() * u.norm_sqr()).sum::<f64>();
    }
    Ok(total)
}

pub fn transmit_power(prec: &Precoder) -> f64 {
    prec.beams().map(|b| b.norm_squared()).sum()
}

/// Lifted operators that make every physical quantity a quadratic form in `ū`.
#[derive(Debug, Clone)]
pub struct LiftedOperators {
    /// `G_j = [diag(g_{r,j}^H) F; g_{d,j}^H]`, `(N+1) x M`.
    pub g: Vec<CMat>,
    pub h: Vec<CMat>,
    pub z: Vec<CMat>,
    pub t: Vec<CMat>,
    /// One per beam passed to [`build_lifted`].
    pub q: Vec<CMat>,
    pub p: CMat,
    /// WPT objective kernel for the energy beam, when one is given.
    pub a: Option<CMat>,
    pub phi: Option<CMat>,
}

/// `[diag(r^H) F; d^H]`.
pub fn lifted_channel(f: &CMat, r: &CVec, d: &CVec) -> CMat {
    let (n, m) = f.shape();
    let mut out = CMat::zeros(n + 1, m);
    for row in 0..n {
        let s = r[row].conj();
        for col in 0..m {
            out[(row, col)] = s * f[(row, col)];
        }
    }
    for col in 0..m {
        out[(n, col)] = d[col].conj();
    }
    out
}

/// `diag([|r|^2; 0])`.
pub fn lifted_noise_kernel(r: &CVec) -> CMat {
    let n = r.len();
    let mut out = CMat::zeros(n + 1, n + 1);
    for k in 0..n {
        out[(k, k)] = cr(r[k].norm_sqr());
    }
    out
}

/// `[(F W F^H) ⊙ I, 0; 0, 0]` for a transmit covariance `W`.
pub fn lifted_amp_kernel(f: &CMat, w: &CMat) -> CMat {
    let n = f.nrows();
    let fwf = f * w * f.adjoint();
    let mut out = CMat::zeros(n + 1, n + 1);
    for k in 0..n {
        out[(k, k)] = cr(fwf[(k, k)].re);
    }
    out
}

pub fn lifted_amp_kernel_beam(f: &CMat, w: &CVec) -> CMat {
    let fw = f * w;
    let n = f.nrows();
    let mut out = CMat::zeros(n + 1, n + 1);
    for k in 0..n {
        out[(k, k)] = cr(fw[k].norm_sqr());
    }
    out
}

pub fn lifted_projector(n: usize) -> CMat {
    let mut p = CMat::zeros(n + 1, n + 1);
    for k in 0..n {
        p[(k, k)] = cr(1.0);
    }
    p
}

/// WPT objective kernel `A = Σ α_j (G_j v v^H G_j^H + σ_z² Z_j)`.
pub fn wpt_kernel(g: &[CMat], z: &[CMat], v: &CVec, cfg: &SystemConfig) -> CMat {
    let n1 = z.first().map(|m| m.nrows()).unwrap_or(0);
    let mut a = CMat::zeros(n1, n1);
    for j in 0..g.len() {
        let gv = &g[j] * v;
        a += (outer(&gv, &gv) + &z[j] * cr(cfg.sigma_z2)) * cr(cfg.alpha[j]);
    }
    a
}

pub fn build_lifted(ch: &ChannelSet, beams: &[CVec], energy_beam: Option<&CVec>, cfg: &SystemConfig) -> Result<LiftedOperators> {
    ch.check(cfg)?;
    if beams.iter().chain(energy_beam).any(|b| b.len() != cfg.m) {
        return Err(Error::Dimension("beam length differs from M".into()));
    }
    let g: Vec<CMat> = ch.g_r.iter().zip(&ch.g_d).map(|(r, d)| lifted_channel(&ch.f, r, d)).collect();
    let h = ch.h_r.iter().zip(&ch.h_d).map(|(r, d)| lifted_channel(&ch.f, r, d)).collect();
    let z: Vec<CMat> = ch.g_r.iter().map(lifted_noise_kernel).collect();
    let t = ch.h_r.iter().map(lifted_noise_kernel).collect();
    let q = beams.iter().map(|w| lifted_amp_kernel_beam(&ch.f, w)).collect();
    let p = lifted_projector(cfg.n);
    let (a, phi) = match energy_beam {
        Some(v) => (Some(wpt_kernel(&g, &z, v, cfg)), Some(lifted_amp_kernel_beam(&ch.f, v))),
        None => (None, None),
    };
    Ok(LiftedOperators { g, h, z, t, q, p, a, phi })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProblemKind {
    /// Weighted sum-power maximization under SINR targets.
    SumPower,
    /// Weighted sum-rate maximization under EH targets.
    SumRate,
}

/// Signed, normalized constraint residuals; `<= 0` means satisfied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub ap_power: f64,
    pub irs_power: f64,
    pub sinr: Vec<f64>,
    pub eh: Vec<f64>,
}

impl FeasibilityReport {
    pub fn max_residual(&self) -> f64 {
        std::iter::once(self.ap_power)
            .chain(std::iter::once(self.irs_power))
            .chain(self.sinr.iter().copied())
            .chain(self.eh.iter().copied())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        self.max_residual() <= tol
    }
}

/// Residual of `lhs <= rhs` normalized to `[-1, 1]`.
pub fn normalized_residual(lhs: f64, rhs: f64) -> f64 {
    if rhs.is_infinite() && rhs > 0.0 {
        return -1.0;
    }
    let scale = lhs.abs().max(rhs.abs());
    if scale == 0.0 {
        0.0
    } else {
        (lhs - rhs) / scale
    }
}

pub fn feasibility_report(
    kind: ProblemKind,
    prec: &Precoder,
    refl: &ReflectionState,
    ch: &ChannelSet,
    cfg: &SystemConfig,
) -> Result<FeasibilityReport> {
    let ap_power = normalized_residual(transmit_power(prec), cfg.p_a);
    let irs_power = normalized_residual(amplification_power(prec, refl, ch, cfg)?, cfg.p_i);
    let mut sinr_res = Vec::new();
    let mut eh = Vec::new();
    match kind {
        ProblemKind::SumPower => {
            for i in 0..cfg.k_i {
                let (s, d) = sinr_terms(i, prec, refl, ch, cfg)?;
                // gamma * d <= s
                sinr_res.push(normalized_residual(cfg.gamma[i] * d, s));
            }
        }
        ProblemKind::SumRate => {
            for j in 0..cfg.k_e {
                eh.push(normalized_residual(cfg.e[j], harvested_power(j, prec, refl, ch, cfg)?));
            }
        }
    }
    Ok(FeasibilityReport { ap_power, irs_power, sinr: sinr_res, eh })
}
