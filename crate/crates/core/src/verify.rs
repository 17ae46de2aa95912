//! Numerical checks of two structural properties of the relaxations:
//! energy beams are redundant in the sum-power SDR, and the block split
//! used for sum-rate recovery keeps every constraint and the objective.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::ao::SolveSettings;
use crate::channel::complex_gaussian;
use crate::conic::{self, Affine, BlockKind, Coef, ConicProgram, Sense, SolverSettings};
use crate::error::{Error, Result};
use crate::linalg::{cr, frob_norm, min_eig, outer, quad_form, re_trace_prod, CMat, CVec};
use crate::sdr::{rank_report, RANK_ONE_TOL};
use crate::sumpower::solve_sum_power;
use crate::sumrate::split_blocks;
use crate::system_model::{effective_channels, normalized_residual, reflected_noise_gain, ChannelSet, Instance, ReflectionState, SystemConfig};
use crate::wpt::{amp_gram, eu_kernel};

/// Optimal covariances of the sum-power SDR at a fixed reflection.
#[derive(Debug, Clone)]
pub struct FixedReflectionSdr {
    pub info: Vec<CMat>,
    pub energy: Option<CMat>,
    pub objective: f64,
}

/// Data of the sum-power SDR at fixed `refl`, on effective channels.
struct FixedData {
    hh: Vec<CMat>,
    s: CMat,
    c: CMat,
    noise_i: Vec<f64>,
    harvest_noise: f64,
    amp_budget: f64,
}

fn fixed_data(ch: &ChannelSet, cfg: &SystemConfig, refl: &ReflectionState) -> Result<FixedData> {
    let (h, g) = effective_channels(ch, refl)?;
    let noise_i = (0..cfg.k_i).map(|i| cfg.sigma_z2 * reflected_noise_gain(&ch.h_r[i], refl) + cfg.sigma_i2[i]).collect();
    let harvest_noise = (0..cfg.k_e).map(|j| cfg.alpha[j] * cfg.sigma_z2 * reflected_noise_gain(&ch.g_r[j], refl)).sum();
    Ok(FixedData {
        hh: h.iter().map(|x| outer(x, x)).collect(),
        s: eu_kernel(&g, &cfg.alpha),
        c: crate::linalg::hermitian_part(&amp_gram(&ch.f, refl)),
        noise_i,
        harvest_noise,
        amp_budget: cfg.p_i - cfg.sigma_z2 * refl.frobenius_sq(),
    })
}

/// Solves the SDR with (`with_energy`) or without an energy covariance.
pub fn fixed_reflection_sdr(
    ch: &ChannelSet,
    cfg: &SystemConfig,
    refl: &ReflectionState,
    with_energy: bool,
    settings: &SolverSettings,
) -> Result<FixedReflectionSdr> {
    let m = cfg.m;
    let d = fixed_data(ch, cfg, refl)?;
    let mut prog = ConicProgram::new();
    let nb = cfg.k_i + usize::from(with_energy);
    let ids: Vec<usize> =
        (0..nb).map(|_| prog.add_scaled_block(BlockKind::HermitianPsd, m, vec![(cfg.p_a / m as f64).sqrt(); m])).collect();
    let all = |c: &CMat| ids.iter().fold(Affine::default(), |a, &b| a.term(b, Coef::Matrix(c.clone())));
    prog.objective.linear = all(&d.s);
    for i in 0..cfg.k_i {
        let g = cfg.gamma[i];
        let mut a = Affine::default();
        for (k, &b) in ids.iter().enumerate() {
            a = a.term(b, Coef::Matrix(if k == i { d.hh[i].clone() } else { &d.hh[i] * cr(-g) }));
        }
        prog.constrain_affine(format!("sinr{i}"), a, Sense::Ge, g * d.noise_i[i]);
    }
    prog.constrain_affine("ap", all(&CMat::identity(m, m)), Sense::Le, cfg.p_a);
    if cfg.has_amplification_budget() {
        prog.constrain_affine("amp", all(&d.c), Sense::Le, d.amp_budget);
    }
    let sol = conic::solve(&prog, settings)?.accept(1e-6)?;
    let mut blocks: Vec<CMat> = sol.values.iter().map(|v| v.as_matrix().clone()).collect();
    let energy = if with_energy { blocks.pop() } else { None };
    let total = blocks.iter().chain(energy.iter()).fold(CMat::zeros(m, m), |a, x| a + x);
    let objective = re_trace_prod(&d.s, &total) + d.harvest_noise;
    Ok(FixedReflectionSdr { info: blocks, energy, objective })
}

/// Largest normalized violation of the energy-free SDR at `info`
/// (PSD violation relative to the largest eigenvalue included).
pub fn sdr_residual(ch: &ChannelSet, cfg: &SystemConfig, refl: &ReflectionState, info: &[CMat]) -> Result<f64> {
    let m = cfg.m;
    let d = fixed_data(ch, cfg, refl)?;
    let total = info.iter().fold(CMat::zeros(m, m), |a, x| a + x);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..cfg.k_i {
        let sig = re_trace_prod(&d.hh[i], &info[i]);
        let interf = re_trace_prod(&d.hh[i], &total) - sig + d.noise_i[i];
        worst = worst.max(normalized_residual(cfg.gamma[i] * interf, sig));
    }
    worst = worst.max(normalized_residual(total.trace().re, cfg.p_a));
    if cfg.has_amplification_budget() {
        worst = worst.max(normalized_residual(re_trace_prod(&d.c, &total), d.amp_budget));
    }
    for w in info {
        let top = rank_report(w, 0.0).eigenvalues.first().copied().unwrap_or(0.0).max(1e-300);
        worst = worst.max(-min_eig(w) / top);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyRedundancyReport {
    pub with_energy: f64,
    pub without_energy: f64,
    /// `|with - without| / max(|with|, tiny)`.
    pub relative_gap: f64,
    /// Worst residual of the merged covariances in the energy-free SDR.
    pub merged_residual: f64,
}

/// Freezes the reflection at the sum-power AO output, solves the SDR with and
/// without an energy covariance, and merges the energy covariance into the
/// first information block.
pub fn check_energy_redundancy(instance: &Instance, settings: &SolveSettings) -> Result<EnergyRedundancyReport> {
    let (cfg, ch) = (&instance.cfg, &instance.channels);
    if cfg.k_i == 0 {
        return Err(Error::InvalidConfig("needs at least one information user".into()));
    }
    let refl = solve_sum_power(instance, settings)?.refl;
    energy_redundancy_at(ch, cfg, &refl, &settings.conic)
}

/// The same comparison at a given reflection.
pub fn energy_redundancy_at(
    ch: &ChannelSet,
    cfg: &SystemConfig,
    refl: &ReflectionState,
    settings: &SolverSettings,
) -> Result<EnergyRedundancyReport> {
    let a = fixed_reflection_sdr(ch, cfg, refl, true, settings)?;
    let b = fixed_reflection_sdr(ch, cfg, refl, false, settings)?;
    let mut merged = a.info.clone();
    if let Some(e) = &a.energy {
        merged[0] += e;
    }
    Ok(EnergyRedundancyReport {
        with_energy: a.objective,
        without_energy: b.objective,
        relative_gap: (a.objective - b.objective).abs() / a.objective.abs().max(1e-300),
        merged_residual: sdr_residual(ch, cfg, refl, &merged)?,
    })
}

/// Synthetic PSD blocks of the given ranks and random channels.
pub fn synthetic_blocks(seed: u64, m: usize, ranks: &[usize]) -> (Vec<CMat>, Vec<CVec>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let w = ranks
        .iter()
        .map(|&r| {
            let a = CMat::from_fn(m, r, |_, _| complex_gaussian(&mut rng));
            &a * a.adjoint()
        })
        .collect();
    let h = ranks.iter().map(|_| CVec::from_fn(m, |_, _| complex_gaussian(&mut rng))).collect();
    (w, h)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitReport {
    pub min_eig: f64,
    pub trace_gap: f64,
    /// Frobenius distance between the summed covariances before and after.
    pub sum_gap: f64,
    /// Smallest eigenvalue of `W_i - w_i w_i^H` over the split-off blocks,
    /// relative to the largest eigenvalue of `W_i`.
    pub remainder_min_eig: f64,
    /// Largest change of the signal power of an untouched IU.
    pub signal_gap: f64,
    /// Largest interference increase over all IUs (<= 0 is good).
    pub interference_increase: f64,
    /// Largest change of any row depending only on the summed covariance.
    pub sum_row_gap: f64,
    pub rank_one_blocks: usize,
    /// Relaxed sum rate after minus before (>= 0 is good).
    pub rate_change: f64,
}

impl SplitReport {
    pub fn passes(&self, k_i: usize, tol: f64) -> bool {
        self.min_eig >= -tol
            && self.trace_gap <= tol
            && self.sum_gap <= tol
            && self.remainder_min_eig >= -tol
            && self.signal_gap <= tol
            && self.interference_increase <= tol
            && self.sum_row_gap <= tol
            && self.rank_one_blocks + 1 >= k_i
            && self.rate_change >= -tol
    }
}

/// Applies the block split and measures every preserved quantity, with all
/// gaps relative to the corresponding original value. `sum_rows` stand for
/// EH, AP and amplification kernels; `noise` is the per-IU noise floor.
pub fn check_split(w: &[CMat], h: &[CVec], sum_rows: &[CMat], noise: f64) -> SplitReport {
    let m = w[0].nrows();
    let split = split_blocks(w, h);
    let mut new_blocks: Vec<CMat> = split.beams.iter().map(|b| outer(b, b)).collect();
    new_blocks[split.m] = split.merged.clone();
    let total_old = w.iter().fold(CMat::zeros(m, m), |a, x| a + x);
    let total_new = new_blocks.iter().fold(CMat::zeros(m, m), |a, x| a + x);
    let scale = total_old.trace().re.max(1e-300);
    let top = rank_report(&split.merged, 0.0).eigenvalues.first().copied().unwrap_or(0.0).max(1e-300);
    let mut remainder_min_eig = 0.0f64;
    for i in (0..w.len()).filter(|&i| i != split.m) {
        let lmax = rank_report(&w[i], 0.0).eigenvalues.first().copied().unwrap_or(0.0).max(1e-300);
        remainder_min_eig = remainder_min_eig.min(min_eig(&(&w[i] - &new_blocks[i])) / lmax);
    }
    let mut signal_gap = 0.0f64;
    let mut interference_increase = f64::NEG_INFINITY;
    let mut rate_old = 0.0;
    let mut rate_new = 0.0;
    for i in 0..w.len() {
        let so = quad_form(&w[i], &h[i]);
        let sn = quad_form(&new_blocks[i], &h[i]);
        let io = quad_form(&total_old, &h[i]) - so;
        let inew = quad_form(&total_new, &h[i]) - sn;
        if i != split.m {
            signal_gap = signal_gap.max((sn - so).abs() / so.abs().max(1e-300));
        }
        interference_increase = interference_increase.max((inew - io) / io.abs().max(1e-300));
        rate_old += (1.0 + so / (io + noise)).log2();
        rate_new += (1.0 + sn / (inew + noise)).log2();
    }
    let sum_row_gap = sum_rows
        .iter()
        .map(|k| {
            let o = re_trace_prod(k, &total_old);
            (re_trace_prod(k, &total_new) - o).abs() / o.abs().max(1e-300)
        })
        .fold(0.0, f64::max);
    SplitReport {
        min_eig: min_eig(&split.merged) / top,
        trace_gap: (total_new.trace().re - total_old.trace().re).abs() / scale,
        sum_gap: frob_norm(&(&total_new - &total_old)) / frob_norm(&total_old).max(1e-300),
        remainder_min_eig,
        signal_gap,
        interference_increase,
        sum_row_gap,
        rank_one_blocks: new_blocks.iter().filter(|b| rank_report(b, RANK_ONE_TOL).rank <= 1).count(),
        rate_change: rate_new - rate_old,
    }
}
