//! Baseline schemes: passive surface, identical amplitudes, and no IRS->IU links.

use serde::{Deserialize, Serialize};

use crate::ao::{relative_gain, Convergence, SolveSettings};
use crate::error::{Error, Result};
use crate::linalg::{outer, quad_form, CMat, CVec};
use crate::sdr::{gaussian_randomize_u, Projection};
use crate::sumpower::{extract_beams, solve_sum_power, sinr_ok, LiftedProblem, ReflectConstraint};
use crate::sumrate::{self, reflect_step_lifted, relaxed_feasible, relaxed_rate};
use crate::system_model::{
    amplification_power, feasibility_report, weighted_sum_power, weighted_sum_rate, FeasibilityReport, Instance, Precoder,
    ProblemKind, ReflectionState, SystemConfig,
};
use crate::wpt::{closed_form_phases, direct_link_beam, initial_reflection, reflect_data, solve_wpt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    PowerTransfer,
    SumPower,
    SumRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Proposed,
    Passive,
    IdenticalAmplitude,
    NoIrsIu,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Proposed, Scheme::Passive, Scheme::IdenticalAmplitude, Scheme::NoIrsIu];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::Passive => "passive",
            Scheme::IdenticalAmplitude => "identical_amplitude",
            Scheme::NoIrsIu => "no_irs_iu",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| Error::Parse(format!("unknown scheme '{s}'")))
    }
}

/// Result of any scheme on any problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Outcome {
    pub objective: f64,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub status: Convergence,
    pub precoder: Precoder,
    pub refl: ReflectionState,
    pub feasibility: FeasibilityReport,
}

/// Maximizes `f` over `β in (0, β_max]`: 64 log-spaced probes, then golden
/// section between the neighbours of the best probe. `None` marks infeasible.
pub fn beta_search(beta_max: f64, f: impl Fn(f64) -> Option<f64>) -> Option<(f64, f64)> {
    if !(beta_max > 0.0) || !beta_max.is_finite() {
        return None;
    }
    let lo = beta_max * 1e-3;
    let grid: Vec<f64> = (0..64).map(|k| lo * (beta_max / lo).powf(k as f64 / 63.0)).collect();
    let vals: Vec<f64> = grid.iter().map(|&b| f(b).unwrap_or(f64::NEG_INFINITY)).collect();
    let (k, _) = vals.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    let mut best = (grid[k], vals[k]);
    let (mut a, mut b) = (grid[k.saturating_sub(1)], grid[(k + 1).min(63)]);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let g = |x: f64| f(x).unwrap_or(f64::NEG_INFINITY);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (g(c), g(d));
    for _ in 0..40 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = g(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = g(d);
        }
        for (x, v) in [(c, fc), (d, fd)] {
            if v > best.1 {
                best = (x, v);
            }
        }
    }
    best.1.is_finite().then_some(best)
}

/// Largest common amplitude the amplification budget allows for `prec`.
pub fn max_common_amplitude(prec: &Precoder, instance: &Instance) -> f64 {
    let (cfg, ch) = (&instance.cfg, &instance.channels);
    let load: f64 = prec.w.iter().chain(prec.v.iter()).map(|b| (&ch.f * b).norm_squared()).sum::<f64>() + cfg.sigma_z2 * cfg.n as f64;
    (cfg.p_i / load).sqrt()
}

fn power_score(prec: &Precoder, refl: &ReflectionState, instance: &Instance) -> Option<f64> {
    let (cfg, ch) = (&instance.cfg, &instance.channels);
    if cfg.has_amplification_budget() && amplification_power(prec, refl, ch, cfg).ok()? > cfg.p_i * (1.0 + 1e-9) {
        return None;
    }
    if !sinr_ok(prec, refl, ch, cfg).ok()? {
        return None;
    }
    weighted_sum_power(prec, refl, ch, cfg).ok()
}

fn precoder_from(cfg: &SystemConfig, beams: Vec<CVec>) -> Precoder {
    if cfg.k_i == 0 {
        Precoder { w: Vec::new(), v: beams }
    } else {
        Precoder::info_only(beams, cfg.m, cfg.k_e)
    }
}

fn block_covariances(prec: &Precoder) -> Vec<CMat> {
    let beams = if prec.w.is_empty() { &prec.v } else { &prec.w };
    beams.iter().map(|b| outer(b, b)).collect()
}

fn common_amplitude(refl: &ReflectionState) -> f64 {
    let a = refl.amplitudes();
    (a.iter().map(|x| x * x).sum::<f64>() / a.len().max(1) as f64).sqrt()
}

/// Repeated closed-form phase alignment `ū_n = β e^{j arg [A ū]_n}` for a
/// single energy beam, kept while the harvested power grows.
pub fn fixed_modulus_sca(instance: &Instance, beam: &CVec, start: &ReflectionState, beta: f64, max_iter: usize) -> ReflectionState {
    let data = reflect_data(&instance.channels, beam, &instance.cfg);
    let n = instance.cfg.n;
    let mut cur = start.clone();
    let mut val = quad_form(&data.a, &cur.lifted());
    for _ in 0..max_iter.max(1) {
        let next = ReflectionState::from_polar(&vec![beta; n], &closed_form_phases(&data.a, &cur.lifted()));
        let v = quad_form(&data.a, &next.lifted());
        if v <= val {
            break;
        }
        let gain = relative_gain(val, v);
        cur = next;
        val = v;
        if gain < 1e-9 {
            break;
        }
    }
    cur
}

/// Rank-one AO for the sum-power and power-transfer problems with a fixed
/// modulus per entry: unit (`identical = false`) or a common searched `β`.
/// Every update is kept only when the true objective does not drop.
pub fn power_ao(instance: &Instance, identical: bool, settings: &SolveSettings) -> Result<Outcome> {
    let (cfg, ch) = (&instance.cfg, &instance.channels);
    let prob = LiftedProblem::new(ch, cfg)?;
    let v_init = direct_link_beam(ch, cfg);
    let mut refl = initial_reflection(ch, cfg, std::slice::from_ref(&v_init), settings.init_seed);
    if cfg.k_i > 0 {
        let ub = refl.lifted();
        if let Err(Error::Infeasible(_) | Error::BudgetExhausted { .. }) = prob.w_step(&outer(&ub, &ub), None, &settings.conic) {
            let mode = if identical { ReflectConstraint::FixedDiagonal(common_amplitude(&refl)) } else { ReflectConstraint::UnitDiagonal };
            refl = prob.restore_sinr(&refl, mode, settings)?;
        }
    }
    let mut prec: Option<Precoder> = None;
    let mut val = f64::NEG_INFINITY;
    let mut trace = Vec::new();
    let mut status = Convergence::IterationLimit;
    let mut iterations = 0;
    for it in 0..settings.max_outer {
        iterations += 1;
        let start = val;
        let ub = refl.lifted();
        let u = outer(&ub, &ub);
        match prob.w_step(&u, None, &settings.conic) {
            Ok((w, _)) => {
                let (beams, _) = extract_beams(&prob, &w, &u)?;
                let cand = precoder_from(cfg, beams);
                if let Some(v) = power_score(&cand, &refl, instance) {
                    if v >= val {
                        val = v;
                        prec = Some(cand);
                    }
                }
            }
            Err(Error::Infeasible(_) | Error::BudgetExhausted { .. }) if it == 0 => {
                return Err(Error::SinrInfeasible { binding: prob.binding_set(&u, &settings.conic) });
            }
            Err(Error::NumericalFailure(_) | Error::IterationLimit(_)) if prec.is_some() => {}
            Err(e) => return Err(e),
        }
        let Some(p) = prec.clone() else {
            return Err(Error::NoFeasibleCandidate { draws: 1 });
        };
        trace.push(val);

        // Phases.
        let beta = if identical { common_amplitude(&refl) } else { 1.0 };
        let mode = if identical { ReflectConstraint::FixedDiagonal(beta) } else { ReflectConstraint::UnitDiagonal };
        let projection = if identical { Projection::FixedModulus(beta) } else { Projection::UnitModulus };
        let mut candidates: Vec<ReflectionState> = prob
            .u_step(&block_covariances(&p), mode, &settings.conic)
            .ok()
            .and_then(|(u_new, _)| {
                let score = |ub: &CVec| ReflectionState::from_lifted(ub).ok().and_then(|r| power_score(&p, &r, instance));
                gaussian_randomize_u(&u_new, &projection, score, &settings.randomization).ok()
            })
            .and_then(|best| ReflectionState::from_lifted(&best.u_bar).ok())
            .into_iter()
            .collect();
        if cfg.k_i == 0 {
            candidates.push(fixed_modulus_sca(instance, &p.v[0], &refl, beta, settings.max_inner));
        }
        let candidate = candidates
            .into_iter()
            .filter_map(|r| power_score(&p, &r, instance).map(|v| (r, v)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(r, _)| r);
        if let Some(r) = candidate {
            if let Some(v) = power_score(&p, &r, instance) {
                if v >= val {
                    val = v;
                    refl = r;
                }
            }
        }

        // Common amplitude.
        if identical {
            let phases = refl.phases();
            let found = beta_search(max_common_amplitude(&p, instance), |b| {
                power_score(&p, &ReflectionState::from_polar(&vec![b; cfg.n], &phases), instance)
            });
            if let Some((b, v)) = found {
                if v >= val {
                    val = v;
                    refl = ReflectionState::from_polar(&vec![b; cfg.n], &phases);
                }
            }
        }
        trace.push(val);
        if it > 0 && relative_gain(start, val) < settings.outer_tol {
            status = Convergence::Converged;
            break;
        }
    }
    let precoder = prec.expect("set in the first round");
    let feasibility = feasibility_report(ProblemKind::SumPower, &precoder, &refl, ch, cfg)?;
    Ok(Outcome { objective: val, trace, iterations, status, precoder, refl, feasibility })
}

/// Sum-rate AO with a fixed-modulus reflect update (lifted step plus
/// randomization, and a common-amplitude search when `identical`).
pub fn rate_ao(instance: &Instance, identical: bool, settings: &SolveSettings) -> Result<Outcome> {
    let mut o = sumrate::targets_last(instance, |inst| rate_ao_from_start(inst, identical, settings), |o| (&o.precoder, &o.refl))?;
    o.feasibility = feasibility_report(ProblemKind::SumRate, &o.precoder, &o.refl, &instance.channels, &instance.cfg)?;
    Ok(o)
}

fn rate_ao_from_start(instance: &Instance, identical: bool, settings: &SolveSettings) -> Result<Outcome> {
    let (cfg, ch) = (&instance.cfg, &instance.channels);
    let (w0, refl0) = sumrate::feasible_start_with(instance, |aux| {
        let o = power_ao(aux, identical, settings)?;
        Ok((o.precoder, o.refl))
    })?;
    let conic = settings.conic;
    let rand = settings.randomization;
    let (w, refl, trace, _fine, iterations, status) = sumrate::relaxed_ao(instance, w0, refl0, settings, |w, refl| {
        let beta = if identical { common_amplitude(refl) } else { 1.0 };
        let (mode, projection) = if identical {
            (ReflectConstraint::FixedDiagonal(beta), Projection::FixedModulus(beta))
        } else {
            (ReflectConstraint::UnitDiagonal, Projection::UnitModulus)
        };
        let ub = refl.lifted();
        let score = |r: &ReflectionState| -> Option<f64> {
            if !relaxed_feasible(ch, cfg, w, r, 1e-6).ok()? {
                return None;
            }
            relaxed_rate(ch, cfg, w, r).ok()
        };
        let mut best = refl.clone();
        let mut best_val = score(refl).unwrap_or(f64::NEG_INFINITY);
        if let Ok(u) = reflect_step_lifted(ch, cfg, w, &outer(&ub, &ub), mode, &conic) {
            let eval = |x: &CVec| ReflectionState::from_lifted(x).ok().and_then(|r| score(&r));
            if let Ok(r) = gaussian_randomize_u(&u, &projection, eval, &rand) {
                if r.objective >= best_val {
                    best_val = r.objective;
                    best = ReflectionState::from_lifted(&r.u_bar)?;
                }
            }
        }
        if identical {
            let phases = best.phases();
            let tf_load: f64 = {
                let wsum = w.iter().fold(CMat::zeros(cfg.m, cfg.m), |a, x| a + x);
                (&ch.f * wsum * ch.f.adjoint()).trace().re + cfg.sigma_z2 * cfg.n as f64
            };
            let found = beta_search((cfg.p_i / tf_load).sqrt(), |b| score(&ReflectionState::from_polar(&vec![b; cfg.n], &phases)));
            if let Some((b, v)) = found {
                if v >= best_val {
                    best = ReflectionState::from_polar(&vec![b; cfg.n], &phases);
                }
            }
        }
        Ok(Some(best))
    })?;
    let sol = sumrate::finish(instance, w, refl, trace.clone(), trace, iterations, status, settings)?;
    Ok(Outcome {
        objective: sol.objective,
        trace: sol.trace,
        iterations: sol.iterations,
        status: sol.status,
        precoder: sol.precoder,
        refl: sol.refl,
        feasibility: sol.feasibility,
    })
}

/// Runs `scheme` on `problem`. The passive scheme is evaluated on the
/// passive-equivalent system.
pub fn run_scheme(problem: Problem, scheme: Scheme, instance: &Instance, settings: &SolveSettings) -> Result<Outcome> {
    let inst = match scheme {
        Scheme::Passive => Instance { cfg: instance.cfg.passive_equivalent(), channels: instance.channels.clone() },
        Scheme::NoIrsIu => {
            if problem == Problem::PowerTransfer {
                return Err(Error::InvalidConfig("no information users to disconnect".into()));
            }
            Instance { cfg: instance.cfg.clone(), channels: instance.channels.without_irs_iu_links() }
        }
        _ => instance.clone(),
    };
    let (cfg, ch) = (&inst.cfg, &inst.channels);
    match (problem, scheme) {
        (Problem::PowerTransfer, Scheme::Proposed) => {
            let s = solve_wpt(&inst, settings)?;
            let precoder = s.precoder(cfg);
            let feasibility = feasibility_report(ProblemKind::SumPower, &precoder, &s.refl, ch, cfg)?;
            Ok(Outcome { objective: s.objective, trace: s.trace, iterations: s.iterations, status: s.status, precoder, refl: s.refl, feasibility })
        }
        (Problem::PowerTransfer | Problem::SumPower, Scheme::Passive) => power_ao(&inst, false, settings),
        (Problem::PowerTransfer | Problem::SumPower, Scheme::IdenticalAmplitude) => power_ao(&inst, true, settings),
        (Problem::SumPower, Scheme::Proposed | Scheme::NoIrsIu) => {
            let s = solve_sum_power(&inst, settings)?;
            let objective = weighted_sum_power(&s.precoder, &s.refl, ch, cfg)?;
            Ok(Outcome {
                objective,
                trace: s.sdr_trace,
                iterations: s.iterations,
                status: s.status,
                precoder: s.precoder,
                refl: s.refl,
                feasibility: s.feasibility,
            })
        }
        (Problem::SumRate, Scheme::Proposed | Scheme::NoIrsIu) => {
            let s = sumrate::solve_sum_rate(&inst, settings)?;
            let objective = weighted_sum_rate(&s.precoder, &s.refl, ch, cfg)?;
            Ok(Outcome {
                objective,
                trace: s.trace,
                iterations: s.iterations,
                status: s.status,
                precoder: s.precoder,
                refl: s.refl,
                feasibility: s.feasibility,
            })
        }
        (Problem::SumRate, Scheme::Passive) => rate_ao(&inst, false, settings),
        (Problem::SumRate, Scheme::IdenticalAmplitude) => rate_ao(&inst, true, settings),
        (Problem::PowerTransfer, Scheme::NoIrsIu) => unreachable!(),
    }
}
