//! Power transfer without information users: alternating between the
//! energy-beam SDP and successive convex approximation of the reflect step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::ao::{relative_gain, Convergence, SolveSettings};
use crate::conic::{self, Affine, BlockKind, Coef, ConicProgram, Expr, Quadratic, Sense, SolverSettings};
use crate::error::{Error, Result};
use crate::linalg::{cr, dominant_eig, outer, quad_form, CMat, CVec, RVec, C64};
use crate::sdr::{principal_component, rank_one_extract, rank_reduce, RANK_ONE_TOL};
use crate::system_model::{
    effective_channels, lifted_channel, lifted_noise_kernel, weighted_sum_power, wpt_kernel, ChannelSet, Instance, Precoder,
    ReflectionState, SystemConfig,
};

/// `S = Σ α_j g_j g_j^H`.
pub fn eu_kernel(g: &[CVec], alpha: &[f64]) -> CMat {
    let m = g.first().map(|v| v.len()).unwrap_or(0);
    let mut s = CMat::zeros(m, m);
    for (gj, a) in g.iter().zip(alpha) {
        s += outer(gj, gj) * cr(*a);
    }
    s
}

/// `C = F^H Θ^H Θ F`.
pub fn amp_gram(f: &CMat, refl: &ReflectionState) -> CMat {
    let tf = refl.theta() * f;
    tf.adjoint() * tf
}

/// Amplification budget left for the beams once the IRS noise is paid.
pub fn residual_amp_budget(refl: &ReflectionState, cfg: &SystemConfig) -> f64 {
    cfg.p_i - cfg.sigma_z2 * refl.frobenius_sq()
}

/// Random phases with a common amplitude that spends `0.9 P_I` on `beams`.
pub fn initial_reflection(ch: &ChannelSet, cfg: &SystemConfig, beams: &[CVec], seed: u64) -> ReflectionState {
    let n = cfg.n;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let theta: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * std::f64::consts::TAU).collect();
    let beta = if cfg.has_amplification_budget() {
        let load: f64 = beams.iter().map(|b| (&ch.f * b).norm_squared()).sum::<f64>() + cfg.sigma_z2 * n as f64;
        (0.9 * cfg.p_i / load).sqrt()
    } else {
        1.0
    };
    ReflectionState::from_polar(&vec![beta; n], &theta)
}

/// `√P_A v_S` for the kernel seen through the direct links only.
pub fn direct_link_beam(ch: &ChannelSet, cfg: &SystemConfig) -> CVec {
    let s = eu_kernel(&ch.g_d, &cfg.alpha);
    dominant_eig(&s).1 * cr(cfg.p_a.sqrt())
}

#[derive(Debug, Clone)]
pub struct EnergyBeam {
    pub w_e: CMat,
    pub v0: CVec,
    /// `true` when the principal-eigenvector fallback was needed.
    pub fallback: bool,
}

/// Transmit covariance maximizing `tr(S W)` under the AP budget and the
/// amplification budget left by `refl`, reduced to one beam.
pub fn energy_subproblem(ch: &ChannelSet, refl: &ReflectionState, cfg: &SystemConfig, settings: &SolverSettings) -> Result<EnergyBeam> {
    let m = cfg.m;
    let (_, g) = effective_channels(ch, refl)?;
    let s = eu_kernel(&g, &cfg.alpha);
    let c = amp_gram(&ch.f, refl);
    let budget = residual_amp_budget(refl, cfg);
    if budget <= 0.0 {
        return Err(Error::BudgetExhausted { remaining: budget });
    }
    let limited = cfg.has_amplification_budget() && c.iter().any(|z| z.norm() > 0.0);

    let mut prog = ConicProgram::new();
    let w = prog.add_scaled_block(BlockKind::HermitianPsd, m, vec![(cfg.p_a / m as f64).sqrt(); m]);
    prog.objective.linear = Affine::default().term(w, Coef::Matrix(s.clone()));
    prog.constrain_affine("ap", Affine::default().term(w, Coef::Matrix(CMat::identity(m, m))), Sense::Le, cfg.p_a);
    if limited {
        prog.constrain_affine("amp", Affine::default().term(w, Coef::Matrix(c.clone())), Sense::Le, budget);
    }
    let sol = conic::solve(&prog, settings)?.accept(1e-6)?;
    let raw = sol.values[0].as_matrix().clone();

    let mut rows = vec![vec![Some(CMat::identity(m, m))]];
    if limited {
        rows.push(vec![Some(c.clone())]);
    }
    let reduced = rank_reduce(std::slice::from_ref(&raw), &rows, Some(&vec![Some(s.clone())]))?.remove(0);
    let (v0, fallback) = match rank_one_extract(&reduced, RANK_ONE_TOL) {
        Ok(v) => (v, false),
        Err(_) => {
            let mut v = principal_component(&reduced);
            // Keep the fallback inside both budgets.
            let mut scale: f64 = 1.0;
            let p = v.norm_squared();
            if p > cfg.p_a {
                scale = scale.min(cfg.p_a / p);
            }
            if limited {
                let a = quad_form(&c, &v);
                if a > budget {
                    scale = scale.min(budget / a);
                }
            }
            v *= cr(scale.sqrt());
            (v, true)
        }
    };
    Ok(EnergyBeam { w_e: reduced, v0, fallback })
}

/// Reflect-step data for a fixed energy beam: objective kernel `A` and the
/// diagonal `D_n = |[F v]_n|² + σ_z²` of the amplification form.
pub struct ReflectData {
    pub a: CMat,
    pub d: Vec<f64>,
    pub budget: f64,
}

pub fn reflect_data(ch: &ChannelSet, v0: &CVec, cfg: &SystemConfig) -> ReflectData {
    let g: Vec<CMat> = ch.g_r.iter().zip(&ch.g_d).map(|(r, d)| lifted_channel(&ch.f, r, d)).collect();
    let z: Vec<CMat> = ch.g_r.iter().map(lifted_noise_kernel).collect();
    let a = wpt_kernel(&g, &z, v0, cfg);
    let fv = &ch.f * v0;
    let d = fv.iter().map(|x| x.norm_sqr() + cfg.sigma_z2).collect();
    ReflectData { a, d, budget: cfg.p_i }
}

/// First-order lower bound `2Re{ū^H A ū_l} - ū_l^H A ū_l`.
pub fn sca_surrogate(a: &CMat, ub_l: &CVec, ub: &CVec) -> f64 {
    2.0 * ub.dotc(&(a * ub_l)).re - quad_form(a, ub_l)
}

/// Closed-form maximizer of the surrogate over `Σ D_n |ū_n|² <= P_I`,
/// `ū_{N+1} = 1`: `ū_n = t a_n / D_n` with `a = A ū_l`.
pub fn sca_reflect_step(data: &ReflectData, ub_l: &CVec) -> CVec {
    let n = data.d.len();
    let av = &data.a * ub_l;
    let weight: f64 = (0..n).map(|k| av[k].norm_sqr() / data.d[k]).sum();
    if !(weight > 0.0) {
        return ub_l.clone();
    }
    let t = (data.budget / weight).sqrt();
    let mut out = CVec::zeros(n + 1);
    for k in 0..n {
        out[k] = av[k] * cr(t / data.d[k]);
    }
    out[n] = cr(1.0);
    out
}

/// Phases `arg([A ū_l]_n)` of the entries of `ū`; zero where that entry vanishes.
pub fn closed_form_phases(a: &CMat, ub_l: &CVec) -> Vec<f64> {
    let av = a * ub_l;
    (0..av.len() - 1).map(|k| if av[k].norm() > 0.0 { av[k].arg() } else { 0.0 }).collect()
}

/// Surrogate maximization through the generic backend, either over the full
/// complex vector or over magnitudes after fixing the phases in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReflectMode {
    FullComplex,
    PhaseThenMagnitude,
}

pub fn sca_reflect_step_conic(data: &ReflectData, ub_l: &CVec, mode: ReflectMode, settings: &SolverSettings) -> Result<CVec> {
    let n = data.d.len();
    let av = &data.a * ub_l;
    let scale: Vec<f64> = (0..n).map(|k| (data.budget / (n as f64 * data.d[k])).sqrt()).collect();
    let mut prog = ConicProgram::new();
    match mode {
        ReflectMode::FullComplex => {
            let mut sc = scale.clone();
            sc.push(1.0);
            let x = prog.add_scaled_block(BlockKind::ComplexVector, n + 1, sc);
            prog.objective.linear = Affine::default().term(x, Coef::Vector(&av * cr(2.0)));
            let mut dm = CMat::zeros(n + 1, n + 1);
            for k in 0..n {
                dm[(k, k)] = cr(data.d[k]);
            }
            prog.constrain("amp", Expr::Quadratic(Quadratic { block: x, matrix: dm, affine: Affine::default() }), Sense::Le, data.budget);
            prog.fix(x, n, cr(1.0));
            let mut start = ub_l.clone();
            for k in 0..n {
                start[k] *= cr(0.5);
            }
            prog.start = Some(vec![conic::BlockValue::Vector(start)]);
            let sol = conic::solve(&prog, settings)?.accept(1e-6)?;
            let mut out = sol.values[0].as_vector().clone();
            out[n] = cr(1.0);
            Ok(out)
        }
        ReflectMode::PhaseThenMagnitude => {
            let phases = closed_form_phases(&data.a, ub_l);
            let b = prog.add_scaled_block(BlockKind::Nonneg, n, scale);
            let c = RVec::from_fn(n, |k, _| 2.0 * av[k].norm());
            prog.objective.linear = Affine::default().term(b, Coef::Real(c));
            let dm = CMat::from_diagonal(&CVec::from_fn(n, |k, _| cr(data.d[k])));
            prog.constrain("amp", Expr::Quadratic(Quadratic { block: b, matrix: dm, affine: Affine::default() }), Sense::Le, data.budget);
            let sol = conic::solve(&prog, settings)?.accept(1e-6)?;
            let mag = sol.values[0].as_real();
            let mut out = CVec::zeros(n + 1);
            for k in 0..n {
                out[k] = C64::from_polar(mag[k].max(0.0), phases[k]);
            }
            out[n] = cr(1.0);
            Ok(out)
        }
    }
}

/// Inner SCA loop on the reflect vector for a fixed beam.
pub fn sca_reflect_loop(data: &ReflectData, ub0: &CVec, tol: f64, max_iter: usize, trace: &mut Vec<f64>) -> CVec {
    let mut ub = ub0.clone();
    let mut obj = quad_form(&data.a, &ub);
    for _ in 0..max_iter {
        let next = sca_reflect_step(data, &ub);
        let val = quad_form(&data.a, &next);
        if val < obj {
            break;
        }
        let gain = relative_gain(obj, val);
        ub = next;
        obj = val;
        trace.push(obj);
        if gain < tol {
            break;
        }
    }
    ub
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WptSolution {
    pub v0: CVec,
    pub refl: ReflectionState,
    /// True weighted sum power after each completed AO round.
    pub trace: Vec<f64>,
    /// Every intermediate objective value, including inner SCA steps.
    pub fine_trace: Vec<f64>,
    pub iterations: usize,
    pub status: Convergence,
    pub objective: f64,
}

impl WptSolution {
    pub fn precoder(&self, cfg: &SystemConfig) -> Precoder {
        let mut v = vec![CVec::zeros(cfg.m); cfg.k_e];
        v[0] = self.v0.clone();
        Precoder { w: Vec::new(), v }
    }
}

pub fn solve_wpt(instance: &Instance, settings: &SolveSettings) -> Result<WptSolution> {
    let (cfg, ch) = (&instance.cfg, &instance.channels);
    if cfg.k_i != 0 {
        return Err(Error::InvalidConfig("power-transfer solver expects no information users".into()));
    }
    if !cfg.has_amplification_budget() {
        return Err(Error::InvalidConfig("power-transfer solver needs a finite amplification budget".into()));
    }
    let v_init = direct_link_beam(ch, cfg);
    let refl0 = initial_reflection(ch, cfg, std::slice::from_ref(&v_init), settings.init_seed);
    solve_wpt_from(instance, refl0, settings)
}

/// AO starting from a given reflection state.
pub fn solve_wpt_from(instance: &Instance, refl0: ReflectionState, settings: &SolveSettings) -> Result<WptSolution> {
    let (cfg, ch) = (&instance.cfg, &instance.channels);
    let eval = |v: &CVec, refl: &ReflectionState| -> Result<f64> {
        let mut p = Precoder::zeros(cfg.m, 0, cfg.k_e);
        p.v[0] = v.clone();
        weighted_sum_power(&p, refl, ch, cfg)
    };
    let mut refl = refl0;
    let mut v0: Option<CVec> = None;
    let mut trace = Vec::new();
    let mut fine = Vec::new();
    let mut status = Convergence::IterationLimit;
    let mut iterations = 0;
    let mut obj = f64::NEG_INFINITY;
    for _ in 0..settings.max_outer {
        iterations += 1;
        let beam = energy_subproblem(ch, &refl, cfg, &settings.conic)?.v0;
        let cand = eval(&beam, &refl)?;
        let beam = match &v0 {
            Some(prev) if eval(prev, &refl)? > cand => prev.clone(),
            _ => beam,
        };
        fine.push(eval(&beam, &refl)?);
        let data = reflect_data(ch, &beam, cfg);
        let ub = sca_reflect_loop(&data, &refl.lifted(), settings.inner_tol, settings.max_inner, &mut fine);
        refl = ReflectionState::from_lifted(&ub)?;
        let val = eval(&beam, &refl)?;
        v0 = Some(beam);
        trace.push(val);
        let gain = relative_gain(obj, val);
        obj = val;
        if trace.len() > 1 && gain < settings.outer_tol {
            status = Convergence::Converged;
            break;
        }
    }
    let v0 = v0.unwrap_or_else(|| CVec::zeros(cfg.m));
    Ok(WptSolution { v0, refl, trace, fine_trace: fine, iterations, status, objective: obj })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    fn toy(seed: u64, m: usize, n: usize, k_e: usize) -> Instance {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut cv = |len: usize, s: f64| CVec::from_fn(len, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * cr(s));
        let f = CMat::from_fn(n, m, |_, _| c(0.3, -0.2));
        let f = f + CMat::from_fn(n, m, |i, j| c(((i * 7 + j * 3) % 5) as f64 * 0.1, ((i + 2 * j) % 3) as f64 * 0.1));
        let ch = ChannelSet {
            f,
            h_d: vec![],
            h_r: vec![],
            g_d: (0..k_e).map(|_| cv(m, 0.1)).collect(),
            g_r: (0..k_e).map(|_| cv(n, 1.0)).collect(),
        };
        let cfg = SystemConfig::uniform(m, n, 0, k_e, 1.0, 0.5, 0.01, 0.01, 1.0, 0.0);
        Instance::new(cfg, ch).unwrap()
    }

    #[test]
    fn surrogate_is_tight_and_below() {
        let inst = toy(1, 2, 3, 2);
        let data = reflect_data(&inst.channels, &CVec::from_vec(vec![c(0.5, 0.1), c(-0.2, 0.7)]), &inst.cfg);
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut rv = || CVec::from_fn(4, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let ul = rv();
        assert!((sca_surrogate(&data.a, &ul, &ul) - quad_form(&data.a, &ul)).abs() < 1e-12);
        for _ in 0..10 {
            let u = rv();
            assert!(sca_surrogate(&data.a, &ul, &u) <= quad_form(&data.a, &u) + 1e-12);
        }
    }

    #[test]
    fn zero_kernel_keeps_current_point() {
        let data = ReflectData { a: CMat::zeros(3, 3), d: vec![1.0, 1.0], budget: 1.0 };
        let ub = CVec::from_vec(vec![c(0.1, 0.2), c(0.3, 0.0), cr(1.0)]);
        assert_eq!(sca_reflect_step(&data, &ub), ub);
    }

    #[test]
    fn closed_form_step_matches_backend() {
        let inst = toy(2, 2, 4, 2);
        let data = reflect_data(&inst.channels, &CVec::from_vec(vec![c(0.5, 0.1), c(-0.2, 0.7)]), &inst.cfg);
        let ub = initial_reflection(&inst.channels, &inst.cfg, &[CVec::from_vec(vec![c(0.5, 0.1), c(-0.2, 0.7)])], 3).lifted();
        let closed = sca_reflect_step(&data, &ub);
        for mode in [ReflectMode::FullComplex, ReflectMode::PhaseThenMagnitude] {
            let num = sca_reflect_step_conic(&data, &ub, mode, &SolverSettings::default()).unwrap();
            let a = sca_surrogate(&data.a, &ub, &closed);
            let b = sca_surrogate(&data.a, &ub, &num);
            assert!((a - b).abs() <= 1e-6 * a.abs(), "{mode:?}: {a} vs {b}");
        }
    }

    #[test]
    fn zero_reflection_gives_dominant_direct_beam() {
        let inst = toy(3, 3, 2, 2);
        let sol = energy_subproblem(&inst.channels, &ReflectionState::off(2), &inst.cfg, &SolverSettings::default()).unwrap();
        let want = direct_link_beam(&inst.channels, &inst.cfg);
        let align = sol.v0.dotc(&want).norm() / (sol.v0.norm() * want.norm());
        assert!((align - 1.0).abs() < 1e-6);
        assert!((sol.v0.norm_squared() - inst.cfg.p_a).abs() < 1e-6);
    }

    #[test]
    fn ao_trace_is_monotone() {
        let inst = toy(4, 2, 4, 2);
        let sol = solve_wpt(&inst, &SolveSettings::default()).unwrap();
        assert!(crate::ao::max_relative_decrease(&sol.fine_trace) <= 1e-7, "{:?}", sol.fine_trace);
        let amp = crate::system_model::amplification_power(&sol.precoder(&inst.cfg), &sol.refl, &inst.channels, &inst.cfg).unwrap();
        assert!(amp <= inst.cfg.p_i * (1.0 + 1e-6));
    }
}
