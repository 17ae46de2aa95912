//! Weighted sum-rate maximization under energy-harvesting targets.
//!
//! The transmit covariances are updated by a minorize-maximize SDP that
//! keeps `ln` of the received power and linearizes `ln` of the interference.
//! The reflect vector is updated with a first-order lower bound on the
//! received powers and an upper bound on the interference through an
//! exponential slack per IU.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::ao::{relative_gain, Convergence, SolveSettings};
use crate::conic::{self, Affine, BlockKind, BlockValue, Coef, ConicProgram, Expr, LogTerm, Quadratic, Sense, SolverSettings};
use crate::error::{Error, Result};
use crate::linalg::{cr, herm_eig, outer, quad_form, re_trace_prod, CMat, CVec, RVec};
use crate::sdr::{gaussian_draws, rank_report, rank_one_extract, RANK_ONE_TOL};
use crate::sumpower::{solve_sum_power, ReflectConstraint};
use crate::system_model::{
    amplification_power, build_lifted, effective_channels, feasibility_report, harvested_power, lifted_amp_kernel,
    reflected_noise_gain, transmit_power, weighted_sum_rate, ChannelSet, FeasibilityReport, Instance, Precoder,
    ProblemKind, ReflectionState, SystemConfig,
};

/// Relative slack allowed on EH targets when scoring rank-one candidates.
pub const EH_SLACK: f64 = 1e-7;

/// Received power `S_i` (all blocks plus noise) and interference-plus-noise
/// `I_i` of every IU for covariances `w`.
pub fn rate_terms(ch: &ChannelSet, cfg: &SystemConfig, w: &[CMat], refl: &ReflectionState) -> Result<Vec<(f64, f64)>> {
    let (h, _) = effective_channels(ch, refl)?;
    Ok((0..cfg.k_i)
        .map(|i| {
            let noise = cfg.sigma_z2 * reflected_noise_gain(&ch.h_r[i], refl) + cfg.sigma_i2[i];
            let p: Vec<f64> = w.iter().map(|wk| quad_form(wk, &h[i])).collect();
            let total: f64 = p.iter().sum();
            (total + noise, total - p[i] + noise)
        })
        .collect())
}

/// Weighted sum rate of covariances `w`, in bps/Hz.
pub fn relaxed_rate(ch: &ChannelSet, cfg: &SystemConfig, w: &[CMat], refl: &ReflectionState) -> Result<f64> {
    Ok(rate_terms(ch, cfg, w, refl)?.iter().zip(&cfg.mu).map(|((s, i), mu)| mu * (s / i).log2()).sum())
}

/// Harvested power of every EU under covariances `w`.
pub fn relaxed_harvest(ch: &ChannelSet, cfg: &SystemConfig, w: &[CMat], refl: &ReflectionState) -> Result<Vec<f64>> {
    let (_, g) = effective_channels(ch, refl)?;
    Ok((0..cfg.k_e)
        .map(|j| w.iter().map(|wk| quad_form(wk, &g[j])).sum::<f64>() + cfg.sigma_z2 * reflected_noise_gain(&ch.g_r[j], refl))
        .collect())
}

fn relaxed_amp(ch: &ChannelSet, cfg: &SystemConfig, w: &[CMat], refl: &ReflectionState) -> f64 {
    let tf = refl.theta() * &ch.f;
    w.iter().map(|wk| re_trace_prod(&(&tf * wk * tf.adjoint()), &CMat::identity(cfg.n, cfg.n))).sum::<f64>()
        + cfg.sigma_z2 * refl.frobenius_sq()
}

/// Covariances satisfying EH, AP and amplification constraints up to `tol`.
pub fn relaxed_feasible(ch: &ChannelSet, cfg: &SystemConfig, w: &[CMat], refl: &ReflectionState, tol: f64) -> Result<bool> {
    let ap: f64 = w.iter().map(|x| x.trace().re).sum();
    if ap > cfg.p_a * (1.0 + tol) {
        return Ok(false);
    }
    if cfg.has_amplification_budget() && relaxed_amp(ch, cfg, w, refl) > cfg.p_i * (1.0 + tol) {
        return Ok(false);
    }
    let q = relaxed_harvest(ch, cfg, w, refl)?;
    Ok(q.iter().zip(&cfg.e).all(|(q, e)| *q >= e * (1.0 - tol)))
}

/// Transmit step: maximizes `Σ μ_i/ln2 [ln S_i(W) - I_i(W)/I_i(W_t)]`.
pub fn transmit_step(ch: &ChannelSet, cfg: &SystemConfig, w_t: &[CMat], refl: &ReflectionState, settings: &SolverSettings) -> Result<Vec<CMat>> {
    let m = cfg.m;
    let k_i = cfg.k_i;
    let (h, g) = effective_channels(ch, refl)?;
    let terms = rate_terms(ch, cfg, w_t, refl)?;
    let mut prog = ConicProgram::new();
    let ids: Vec<usize> =
        (0..k_i).map(|_| prog.add_scaled_block(BlockKind::HermitianPsd, m, vec![(cfg.p_a / m as f64).sqrt(); m])).collect();
    let hh: Vec<CMat> = h.iter().map(|x| outer(x, x)).collect();
    let mut lin = Affine::default();
    for i in 0..k_i {
        let noise = cfg.sigma_z2 * reflected_noise_gain(&ch.h_r[i], refl) + cfg.sigma_i2[i];
        let wgt = cfg.mu[i] / LN_2;
        let mut arg = Affine::constant(noise);
        for &b in &ids {
            arg = arg.term(b, Coef::Matrix(hh[i].clone()));
        }
        prog.objective.logs.push(LogTerm { weight: wgt, arg });
        let inv = 1.0 / terms[i].1;
        for (k, &b) in ids.iter().enumerate() {
            if k != i {
                lin = lin.term(b, Coef::Matrix(&hh[i] * cr(-wgt * inv)));
            }
        }
    }
    prog.objective.linear = lin;
    for j in 0..cfg.k_e {
        let gg = outer(&g[j], &g[j]);
        let mut a = Affine::default();
        for &b in &ids {
            a = a.term(b, Coef::Matrix(gg.clone()));
        }
        let rhs = cfg.e[j] - cfg.sigma_z2 * reflected_noise_gain(&ch.g_r[j], refl);
        prog.constrain_affine(format!("eh{j}"), a, Sense::Ge, rhs);
    }
    let mut ap = Affine::default();
    for &b in &ids {
        ap = ap.term(b, Coef::Matrix(CMat::identity(m, m)));
    }
    prog.constrain_affine("ap", ap, Sense::Le, cfg.p_a);
    if cfg.has_amplification_budget() {
        let tf = refl.theta() * &ch.f;
        let c = crate::linalg::hermitian_part(&(tf.adjoint() * tf));
        let mut a = Affine::default();
        for &b in &ids {
            a = a.term(b, Coef::Matrix(c.clone()));
        }
        prog.constrain_affine("amp", a, Sense::Le, cfg.p_i - cfg.sigma_z2 * refl.frobenius_sq());
    }
    let sol = conic::solve(&prog, settings)?.accept(1e-6)?;
    Ok(sol.values.iter().map(|v| v.as_matrix().clone()).collect())
}

/// Lifted kernels of the reflect step: received power, interference, EH and amplification.
pub struct ReflectKernels {
    pub signal: Vec<CMat>,
    pub interference: Vec<CMat>,
    pub harvest: Vec<CMat>,
    pub amp: CMat,
}

pub fn reflect_kernels(ch: &ChannelSet, cfg: &SystemConfig, w: &[CMat]) -> Result<ReflectKernels> {
    let ops = build_lifted(ch, &[], None, cfg)?;
    let m = cfg.m;
    let wsum = w.iter().fold(CMat::zeros(m, m), |acc, x| acc + x);
    let herm = crate::linalg::hermitian_part;
    let mut signal = Vec::new();
    let mut interference = Vec::new();
    for i in 0..cfg.k_i {
        let h = &ops.h[i];
        let noise = &ops.t[i] * cr(cfg.sigma_z2);
        signal.push(herm(&(h * &wsum * h.adjoint() + &noise)));
        interference.push(herm(&(h * (&wsum - &w[i]) * h.adjoint() + &noise)));
    }
    let harvest = (0..cfg.k_e)
        .map(|j| herm(&(&ops.g[j] * &wsum * ops.g[j].adjoint() + &ops.z[j] * cr(cfg.sigma_z2))))
        .collect();
    let mut amp = &ops.p * cr(cfg.sigma_z2);
    for wk in w {
        amp += lifted_amp_kernel(&ch.f, wk);
    }
    Ok(ReflectKernels { signal, interference, harvest, amp })
}

/// First-order lower bound of `ū^H B ū` around `ū_t` as an affine form.
pub fn linearized_quadratic(block: usize, b: &CMat, ub_t: &CVec) -> Affine {
    Affine::constant(-quad_form(b, ub_t)).term(block, Coef::Vector(b * ub_t * cr(2.0)))
}

/// Tangent `e^τ >= a τ + b` at `τ_t`, returned as `(a, b)`.
pub fn exp_tangent(tau_t: f64) -> (f64, f64) {
    let e = tau_t.exp();
    (e, e * (1.0 - tau_t))
}

/// Per-entry magnitude hint for the reflect vector.
fn reflect_scale(cfg: &SystemConfig, amp: &CMat) -> Vec<f64> {
    let n = cfg.n;
    let mut s: Vec<f64> = (0..n)
        .map(|k| {
            let x = if cfg.has_amplification_budget() { (cfg.p_i / (n as f64 * amp[(k, k)].re.max(1e-300))).sqrt() } else { 1.0 };
            if x.is_finite() && x > 0.0 {
                x
            } else {
                1.0
            }
        })
        .collect();
    s.push(1.0);
    s
}

/// Reflect step on the vector `ū` with interference slacks, started from `ū_t`.
pub fn reflect_step(ch: &ChannelSet, cfg: &SystemConfig, w: &[CMat], ub_t: &CVec, settings: &SolverSettings) -> Result<CVec> {
    let n = cfg.n;
    let k_i = cfg.k_i;
    let ker = reflect_kernels(ch, cfg, w)?;
    let tau_t: Vec<f64> = (0..k_i).map(|i| (quad_form(&ker.interference[i], ub_t) + cfg.sigma_i2[i]).ln()).collect();
    let mut prog = ConicProgram::new();
    let x = prog.add_scaled_block(BlockKind::ComplexVector, n + 1, reflect_scale(cfg, &ker.amp));
    let tau = prog.add_scaled_block(BlockKind::RealVector, k_i, tau_t.iter().map(|t| t.abs().max(1.0)).collect());
    prog.fix(x, n, cr(1.0));
    let mut obj = RVec::zeros(k_i);
    for i in 0..k_i {
        let wgt = cfg.mu[i] / LN_2;
        obj[i] = -wgt;
        prog.objective.logs.push(LogTerm { weight: wgt, arg: linearized_quadratic(x, &ker.signal[i], ub_t).plus(cfg.sigma_i2[i]) });
        let (slope, intercept) = exp_tangent(tau_t[i]);
        let mut e_i = RVec::zeros(k_i);
        e_i[i] = -slope;
        let affine = Affine::constant(cfg.sigma_i2[i] - intercept).term(tau, Coef::Real(e_i));
        prog.constrain(
            format!("interference{i}"),
            Expr::Quadratic(Quadratic { block: x, matrix: ker.interference[i].clone(), affine }),
            Sense::Le,
            0.0,
        );
    }
    prog.objective.linear = Affine::default().term(tau, Coef::Real(obj));
    for j in 0..cfg.k_e {
        prog.constrain_affine(format!("eh{j}"), linearized_quadratic(x, &ker.harvest[j], ub_t), Sense::Ge, cfg.e[j]);
    }
    if cfg.has_amplification_budget() {
        prog.constrain(
            "amp",
            Expr::Quadratic(Quadratic { block: x, matrix: ker.amp.clone(), affine: Affine::default() }),
            Sense::Le,
            cfg.p_i,
        );
    }
    prog.start = Some(vec![BlockValue::Vector(ub_t.clone()), BlockValue::Real(RVec::from_vec(tau_t.iter().map(|t| t + 1e-3).collect()))]);
    let settings = SolverSettings { engine: conic::Engine::Barrier, ..*settings };
    let sol = conic::solve(&prog, &settings)?.accept(1e-6)?;
    let mut out = sol.values[0].as_vector().clone();
    out[n] = cr(1.0);
    Ok(out)
}

/// Reflect step on the lifted matrix `U` for the benchmark constraint sets.
pub fn reflect_step_lifted(
    ch: &ChannelSet,
    cfg: &SystemConfig,
    w: &[CMat],
    u_t: &CMat,
    mode: ReflectConstraint,
    settings: &SolverSettings,
) -> Result<CMat> {
    let n1 = cfg.n + 1;
    let ker = reflect_kernels(ch, cfg, w)?;
    let mut prog = ConicProgram::new();
    let scale = match mode {
        ReflectConstraint::FixedDiagonal(b) => {
            let mut s = vec![b.max(1e-12); cfg.n];
            s.push(1.0);
            s
        }
        ReflectConstraint::UnitDiagonal => vec![1.0; n1],
        ReflectConstraint::Amplification => reflect_scale(cfg, &ker.amp),
    };
    let u = prog.add_scaled_block(BlockKind::HermitianPsd, n1, scale);
    let mut lin = Affine::default();
    for i in 0..cfg.k_i {
        let wgt = cfg.mu[i] / LN_2;
        let i_t = re_trace_prod(&ker.interference[i], u_t) + cfg.sigma_i2[i];
        prog.objective.logs.push(LogTerm {
            weight: wgt,
            arg: Affine::constant(cfg.sigma_i2[i]).term(u, Coef::Matrix(ker.signal[i].clone())),
        });
        lin = lin.term(u, Coef::Matrix(&ker.interference[i] * cr(-wgt / i_t)));
    }
    prog.objective.linear = lin;
    for j in 0..cfg.k_e {
        prog.constrain_affine(format!("eh{j}"), Affine::default().term(u, Coef::Matrix(ker.harvest[j].clone())), Sense::Ge, cfg.e[j]);
    }
    let unit = |k: usize| {
        let mut e = CMat::zeros(n1, n1);
        e[(k, k)] = cr(1.0);
        e
    };
    match mode {
        ReflectConstraint::Amplification => {
            if cfg.has_amplification_budget() {
                prog.constrain_affine("amp", Affine::default().term(u, Coef::Matrix(ker.amp.clone())), Sense::Le, cfg.p_i);
            }
            prog.constrain_affine("last", Affine::default().term(u, Coef::Matrix(unit(n1 - 1))), Sense::Eq, 1.0);
        }
        ReflectConstraint::UnitDiagonal | ReflectConstraint::FixedDiagonal(_) => {
            let b2 = if let ReflectConstraint::FixedDiagonal(b) = mode { b * b } else { 1.0 };
            for k in 0..n1 {
                let rhs = if k + 1 == n1 { 1.0 } else { b2 };
                prog.constrain_affine(format!("diag{k}"), Affine::default().term(u, Coef::Matrix(unit(k))), Sense::Eq, rhs);
            }
        }
    }
    let sol = conic::solve(&prog, settings)?.accept(1e-6)?;
    Ok(sol.values[0].as_matrix().clone())
}

/// Starting point meeting every EH target, from a sum-power run with
/// negligible SINR targets; retried with weights `1/E_j`.
pub fn feasible_start(instance: &Instance, settings: &SolveSettings) -> Result<(Vec<CMat>, ReflectionState)> {
    feasible_start_with(instance, |aux| {
        let s = solve_sum_power(aux, settings)?;
        Ok((s.precoder, s.refl))
    })
}

/// [`feasible_start`] with a caller-supplied sum-power solver.
pub fn feasible_start_with(
    instance: &Instance,
    solver: impl Fn(&Instance) -> Result<(Precoder, ReflectionState)>,
) -> Result<(Vec<CMat>, ReflectionState)> {
    let cfg = &instance.cfg;
    let mut best_ratio = 0.0f64;
    let weightings: [Vec<f64>; 2] = [vec![1.0; cfg.k_e], cfg.e.iter().map(|e| if *e > 0.0 { 1.0 / e } else { 1.0 }).collect()];
    for alpha in weightings {
        let mut aux = instance.clone();
        aux.cfg.alpha = alpha;
        aux.cfg.gamma = vec![1e-6; cfg.k_i];
        let (prec, refl) = match solver(&aux) {
            Ok(s) => s,
            Err(Error::SinrInfeasible { .. } | Error::NoFeasibleCandidate { .. } | Error::Infeasible(_)) => continue,
            Err(e) => return Err(e),
        };
        let ratio = (0..cfg.k_e)
            .map(|j| {
                let q = harvested_power(j, &prec, &refl, &instance.channels, cfg).unwrap_or(0.0);
                if cfg.e[j] > 0.0 {
                    q / cfg.e[j]
                } else {
                    f64::INFINITY
                }
            })
            .fold(f64::INFINITY, f64::min);
        best_ratio = best_ratio.max(ratio);
        if ratio >= 1.0 {
            let w = prec.w.iter().map(|b| outer(b, b)).collect();
            return Ok((w, refl));
        }
    }
    Err(Error::EnergyInfeasible { best_ratio })
}

/// How the rank-one solution was obtained from the relaxed covariances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Recovery {
    /// Every covariance was already rank one.
    RankOne,
    /// Block split with the remainder carried by energy beams.
    Split,
    /// Gaussian randomization on the merged block.
    Randomized,
}

/// Block split: rank-one `w̄_i = W_i h_i / sqrt(h_i^H W_i h_i)` for every
/// `i != m`, with everything else merged into block `m`.
#[derive(Debug, Clone)]
pub struct Split {
    pub m: usize,
    pub beams: Vec<CVec>,
    pub merged: CMat,
}

pub fn split_blocks(w: &[CMat], h: &[CVec]) -> Split {
    let m = (0..w.len())
        .max_by(|&a, &b| {
            let l = |x: &CMat| herm_eig(x).0.get(1).copied().unwrap_or(0.0);
            l(&w[a]).total_cmp(&l(&w[b]))
        })
        .unwrap_or(0);
    let dim = w.first().map(|x| x.nrows()).unwrap_or(0);
    let total = w.iter().fold(CMat::zeros(dim, dim), |acc, x| acc + x);
    let mut merged = total;
    let mut beams = vec![CVec::zeros(dim); w.len()];
    for i in 0..w.len() {
        if i == m {
            continue;
        }
        let wh = &w[i] * &h[i];
        let p = h[i].dotc(&wh).re;
        if p > 0.0 {
            beams[i] = wh / cr(p.sqrt());
        }
        merged -= outer(&beams[i], &beams[i]);
    }
    Split { m, beams, merged: crate::linalg::hermitian_part(&merged) }
}

/// Eigen-decomposition of a PSD matrix into beams, dropping tiny eigenvalues.
pub fn psd_beams(x: &CMat) -> Vec<CVec> {
    let (vals, vecs) = herm_eig(x);
    let lmax = vals.first().copied().unwrap_or(0.0);
    vals.iter()
        .enumerate()
        .filter(|(_, &l)| lmax > 0.0 && l > 1e-12 * lmax)
        .map(|(k, &l)| vecs.column(k) * cr(l.sqrt()))
        .collect()
}

/// True objective of a rank-one precoder, `None` when a constraint breaks.
pub fn score_sum_rate(prec: &Precoder, refl: &ReflectionState, ch: &ChannelSet, cfg: &SystemConfig) -> Option<f64> {
    if transmit_power(prec) > cfg.p_a * (1.0 + 1e-9) {
        return None;
    }
    if cfg.has_amplification_budget() && amplification_power(prec, refl, ch, cfg).ok()? > cfg.p_i * (1.0 + 1e-9) {
        return None;
    }
    for j in 0..cfg.k_e {
        if harvested_power(j, prec, refl, ch, cfg).ok()? < cfg.e[j] * (1.0 - EH_SLACK) {
            return None;
        }
    }
    weighted_sum_rate(prec, refl, ch, cfg).ok()
}

/// Rank-one precoder from relaxed covariances.
pub fn recover_precoder(
    ch: &ChannelSet,
    cfg: &SystemConfig,
    w: &[CMat],
    refl: &ReflectionState,
    draws: usize,
    seed: u64,
) -> Result<(Precoder, Recovery, f64)> {
    if w.iter().all(|x| rank_report(x, RANK_ONE_TOL).rank <= 1) {
        let beams: Vec<CVec> = w.iter().map(|x| rank_one_extract(x, RANK_ONE_TOL)).collect::<Result<_>>()?;
        let prec = Precoder { w: beams, v: Vec::new() };
        if let Some(v) = score_sum_rate(&prec, refl, ch, cfg) {
            return Ok((prec, Recovery::RankOne, v));
        }
    }
    let (h, _) = effective_channels(ch, refl)?;
    let split = split_blocks(w, &h);
    let wm = &split.merged;
    let hm = &h[split.m];
    let p = hm.dotc(&(wm * hm)).re;
    if p > 0.0 {
        let lead = wm * hm / cr(p.sqrt());
        let rest = crate::linalg::hermitian_part(&(wm - outer(&lead, &lead)));
        let mut beams = split.beams.clone();
        beams[split.m] = lead;
        let prec = Precoder { w: beams, v: psd_beams(&rest) };
        if let Some(v) = score_sum_rate(&prec, refl, ch, cfg) {
            return Ok((prec, Recovery::Split, v));
        }
    }
    // Randomization around the merged block.
    let tr = wm.trace().re.max(0.0);
    let amp_c = {
        let tf = refl.theta() * &ch.f;
        tf.adjoint() * tf
    };
    let mut cands = vec![crate::sdr::principal_component(wm)];
    cands.extend(gaussian_draws(wm, draws, seed));
    let mut best: Option<(Precoder, f64)> = None;
    for mut xi in cands {
        let nrm = xi.norm_squared();
        if nrm <= 0.0 {
            continue;
        }
        xi *= cr((tr / nrm).sqrt());
        let mut beams = split.beams.clone();
        beams[split.m] = xi;
        let mut prec = Precoder { w: beams, v: Vec::new() };
        if cfg.has_amplification_budget() {
            let load: f64 = prec.w.iter().map(|b| quad_form(&amp_c, b)).sum();
            let room = cfg.p_i - cfg.sigma_z2 * refl.frobenius_sq();
            if load > room && load > 0.0 {
                let s = (room.max(0.0) / load).sqrt();
                for b in prec.w.iter_mut() {
                    *b *= cr(s);
                }
            }
        }
        if let Some(v) = score_sum_rate(&prec, refl, ch, cfg) {
            if best.as_ref().is_none_or(|(_, b)| v > *b) {
                best = Some((prec, v));
            }
        }
    }
    best.map(|(p, v)| (p, Recovery::Randomized, v)).ok_or(Error::NoFeasibleCandidate { draws: draws + 1 })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SumRateSolution {
    pub precoder: Precoder,
    pub refl: ReflectionState,
    /// Relaxed weighted sum rate after each AO round.
    pub trace: Vec<f64>,
    /// Relaxed weighted sum rate after every block update.
    pub fine_trace: Vec<f64>,
    pub sdr_objective: f64,
    pub objective: f64,
    pub iterations: usize,
    pub status: Convergence,
    pub feasibility: FeasibilityReport,
    pub recovery: Recovery,
    pub w_blocks: Vec<CMat>,
}

/// Relaxed AO from a feasible start; every update is kept only if it does not
/// lower the relaxed rate.
pub fn relaxed_ao(
    instance: &Instance,
    w0: Vec<CMat>,
    refl0: ReflectionState,
    settings: &SolveSettings,
    mut reflect: impl FnMut(&[CMat], &ReflectionState) -> Result<Option<ReflectionState>>,
) -> Result<(Vec<CMat>, ReflectionState, Vec<f64>, Vec<f64>, usize, Convergence)> {
    let (cfg, ch) = (&instance.cfg, &instance.channels);
    let mut w = w0;
    let mut refl = refl0;
    let mut val = relaxed_rate(ch, cfg, &w, &refl)?;
    let mut trace = vec![val];
    let mut fine = vec![val];
    let mut status = Convergence::IterationLimit;
    let mut iterations = 0;
    for _ in 0..settings.max_outer {
        iterations += 1;
        let start = val;
        match transmit_step(ch, cfg, &w, &refl, &settings.conic) {
            Ok(w_new) => {
                let v = relaxed_rate(ch, cfg, &w_new, &refl)?;
                if v >= val && relaxed_feasible(ch, cfg, &w_new, &refl, 1e-6)? {
                    w = w_new;
                    val = v;
                }
            }
            Err(Error::NumericalFailure(_) | Error::IterationLimit(_)) => {}
            Err(e) => return Err(e),
        }
        fine.push(val);
        if let Some(r_new) = reflect(&w, &refl)? {
            let v = relaxed_rate(ch, cfg, &w, &r_new)?;
            if v >= val && relaxed_feasible(ch, cfg, &w, &r_new, 1e-6)? {
                refl = r_new;
                val = v;
            }
        }
        fine.push(val);
        trace.push(val);
        if relative_gain(start, val) < settings.outer_tol {
            status = Convergence::Converged;
            break;
        }
    }
    Ok((w, refl, trace, fine, iterations, status))
}

/// Runs `solve` without harvesting targets first and keeps that point when
/// it already meets them; otherwise solves the constrained instance. Makes
/// the result independent of targets that do not bind.
pub fn targets_last<T>(
    instance: &Instance,
    solve: impl Fn(&Instance) -> Result<T>,
    point: impl Fn(&T) -> (&Precoder, &ReflectionState),
) -> Result<T> {
    let (cfg, ch) = (&instance.cfg, &instance.channels);
    if cfg.e.iter().any(|&e| e > 0.0) {
        let mut free = instance.clone();
        free.cfg.e = vec![0.0; cfg.k_e];
        if let Ok(s) = solve(&free) {
            let (prec, refl) = point(&s);
            if feasibility_report(ProblemKind::SumRate, prec, refl, ch, cfg)?.max_residual() <= EH_SLACK {
                return Ok(s);
            }
        }
    }
    solve(instance)
}

pub fn solve_sum_rate(instance: &Instance, settings: &SolveSettings) -> Result<SumRateSolution> {
    if instance.cfg.k_i == 0 {
        return Err(Error::InvalidConfig("sum-rate problem needs at least one information user".into()));
    }
    let mut sol = targets_last(instance, |inst| solve_from_feasible_start(inst, settings), |s| (&s.precoder, &s.refl))?;
    sol.feasibility = feasibility_report(ProblemKind::SumRate, &sol.precoder, &sol.refl, &instance.channels, &instance.cfg)?;
    Ok(sol)
}

/// Start aimed at the information users: the sum-power solver run with the
/// IUs standing in as energy receivers, weighted by their rate weights.
pub fn rate_oriented_start(instance: &Instance, settings: &SolveSettings) -> Result<(Vec<CMat>, ReflectionState)> {
    let (cfg, ch) = (&instance.cfg, &instance.channels);
    let mut aux_cfg = cfg.clone();
    aux_cfg.k_e = cfg.k_i;
    aux_cfg.alpha = cfg.mu.clone();
    aux_cfg.e = vec![0.0; cfg.k_i];
    aux_cfg.gamma = vec![1e-6; cfg.k_i];
    let mut aux_ch = ch.clone();
    aux_ch.g_d = ch.h_d.clone();
    aux_ch.g_r = ch.h_r.clone();
    let s = solve_sum_power(&Instance::new(aux_cfg, aux_ch)?, settings)?;
    Ok((s.precoder.w.iter().map(|b| outer(b, b)).collect(), s.refl))
}

/// AO from the EH-oriented feasible start and from rate-oriented starts
/// (one per initial-phase seed) that meet the targets; the best recovered
/// solution wins.
fn solve_from_feasible_start(instance: &Instance, settings: &SolveSettings) -> Result<SumRateSolution> {
    let (cfg, ch) = (&instance.cfg, &instance.channels);
    let mut starts = vec![feasible_start(instance, settings)?];
    for k in 0..=settings.extra_starts as u64 {
        let seeded = SolveSettings { init_seed: settings.init_seed.wrapping_add(k.wrapping_mul(0x9E37_79B9)), ..*settings };
        if let Ok((w, refl)) = rate_oriented_start(instance, &seeded) {
            if relaxed_feasible(ch, cfg, &w, &refl, 1e-6)? {
                starts.push((w, refl));
            }
        }
    }
    let conic_settings = settings.conic;
    let mut best: Option<SumRateSolution> = None;
    for (w0, refl0) in starts {
        let (w, refl, trace, fine, iterations, status) = relaxed_ao(instance, w0, refl0, settings, |w, refl| {
            match reflect_step(ch, cfg, w, &refl.lifted(), &conic_settings) {
                Ok(ub) => Ok(Some(ReflectionState::from_lifted(&ub)?)),
                Err(Error::NumericalFailure(_) | Error::IterationLimit(_) | Error::Infeasible(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })?;
        let sol = finish(instance, w, refl, trace, fine, iterations, status, settings)?;
        if best.as_ref().is_none_or(|b| sol.objective > b.objective) {
            best = Some(sol);
        }
    }
    Ok(best.expect("at least one start"))
}

#[allow(clippy::too_many_arguments)]
pub fn finish(
    instance: &Instance,
    w: Vec<CMat>,
    refl: ReflectionState,
    trace: Vec<f64>,
    fine: Vec<f64>,
    iterations: usize,
    status: Convergence,
    settings: &SolveSettings,
) -> Result<SumRateSolution> {
    let (cfg, ch) = (&instance.cfg, &instance.channels);
    let (precoder, recovery, objective) =
        recover_precoder(ch, cfg, &w, &refl, settings.randomization.draws, settings.randomization.seed)?;
    let feasibility = feasibility_report(ProblemKind::SumRate, &precoder, &refl, ch, cfg)?;
    Ok(SumRateSolution {
        precoder,
        refl,
        sdr_objective: *trace.last().unwrap_or(&f64::NAN),
        trace,
        fine_trace: fine,
        objective,
        iterations,
        status,
        feasibility,
        recovery,
        w_blocks: w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_scenario, FadingConfig, Geometry};
    use crate::system_model::{db_to_linear, dbm_to_watts};

    fn desk(seed: u64, e_dbm: f64) -> Instance {
        let cfg = SystemConfig::uniform(
            4,
            8,
            2,
            2,
            dbm_to_watts(30.0),
            dbm_to_watts(10.0),
            dbm_to_watts(-80.0),
            dbm_to_watts(-80.0),
            db_to_linear(0.0),
            dbm_to_watts(e_dbm),
        );
        let geo = Geometry { d_irs: 8.0, d_e: 8.0, ..Geometry::default() };
        let ch = generate_scenario(&cfg, &geo, &FadingConfig::default(), seed).unwrap();
        Instance::new(cfg, ch).unwrap()
    }

    #[test]
    fn split_preserves_signals_and_sum() {
        let mut rng = <rand_chacha::ChaCha20Rng as rand::SeedableRng>::seed_from_u64(4);
        let mut rand_psd = |r: usize| {
            let a = CMat::from_fn(3, r, |_, _| crate::channel::complex_gaussian(&mut rng));
            &a * a.adjoint()
        };
        let w = vec![rand_psd(2), rand_psd(3), rand_psd(1)];
        let mut rng2 = <rand_chacha::ChaCha20Rng as rand::SeedableRng>::seed_from_u64(5);
        let h: Vec<CVec> = (0..3).map(|_| CVec::from_fn(3, |_, _| crate::channel::complex_gaussian(&mut rng2))).collect();
        let s = split_blocks(&w, &h);
        let total = w.iter().fold(CMat::zeros(3, 3), |a, x| a + x);
        let mut rebuilt = s.merged.clone();
        for (i, b) in s.beams.iter().enumerate() {
            if i != s.m {
                rebuilt += outer(b, b);
                assert!((quad_form(&outer(b, b), &h[i]) - quad_form(&w[i], &h[i])).abs() < 1e-10);
            }
        }
        assert!(crate::linalg::frob_norm(&(rebuilt - total)) < 1e-10);
        assert!(crate::linalg::min_eig(&s.merged) > -1e-10);
    }

    #[test]
    fn ao_is_monotone_and_recovery_feasible() {
        let inst = desk(1, -30.0);
        let sol = solve_sum_rate(&inst, &SolveSettings::default()).unwrap();
        assert!(crate::ao::max_relative_decrease(&sol.fine_trace) <= 1e-7);
        assert!(sol.feasibility.is_feasible(1e-6), "{:?}", sol.feasibility);
        assert!(sol.objective <= sol.sdr_objective * (1.0 + 1e-6) + 1e-9);
        assert!(sol.trace.last().unwrap() > sol.trace.first().unwrap());
    }

    #[test]
    fn unreachable_energy_target_is_reported() {
        let inst = desk(2, 20.0);
        assert!(matches!(solve_sum_rate(&inst, &SolveSettings::default()), Err(Error::EnergyInfeasible { .. })));
    }
}
