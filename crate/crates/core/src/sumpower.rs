//! Weighted sum-power maximization under SINR targets, without energy beams,
//! by alternating between the transmit covariances `{W_i}` and the lifted
//! reflect matrix `U = ū ū^H`.

use serde::{Deserialize, Serialize};

use crate::ao::{relative_gain, Convergence, SolveSettings};
use crate::conic::{self, Affine, BlockKind, Coef, ConicProgram, Sense, SolverSettings, Status};
use crate::error::{Error, Result};
use crate::linalg::{cr, outer, re_trace_prod, CMat, CVec, RVec};
use crate::sdr::{
    gaussian_randomize_u, principal_component, rank_one_extract, rank_reduce, LinearRow, Projection, RandomizationSettings,
    RANK_ONE_TOL,
};
use crate::system_model::{
    amplification_power, build_lifted, feasibility_report, lifted_amp_kernel, sinr_terms, weighted_sum_power, ChannelSet,
    FeasibilityReport, Instance, LiftedOperators, Precoder, ProblemKind, ReflectionState, SystemConfig,
};
use crate::wpt::{direct_link_beam, initial_reflection};

/// Relative slack allowed on SINR targets when scoring rank-one candidates.
pub const SINR_SLACK: f64 = 1e-7;

/// Constraints placed on the reflect block `U`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReflectConstraint {
    /// Amplification budget and `U_{N+1,N+1} = 1`.
    Amplification,
    /// `U_{n,n} = 1` for every `n` (passive surface).
    UnitDiagonal,
    /// `U_{n,n} = β²` for the reflect entries and 1 for the last.
    FixedDiagonal(f64),
}

/// Lifted problem data shared by the sum-power solver and its benchmarks.
pub struct LiftedProblem<'a> {
    pub ch: &'a ChannelSet,
    pub cfg: &'a SystemConfig,
    pub ops: LiftedOperators,
    /// Number of transmit covariance blocks; the first `k_i` carry SINR rows.
    pub blocks: usize,
}

impl<'a> LiftedProblem<'a> {
    pub fn new(ch: &'a ChannelSet, cfg: &'a SystemConfig) -> Result<Self> {
        let ops = build_lifted(ch, &[], None, cfg)?;
        Ok(Self { ch, cfg, ops, blocks: cfg.k_i.max(1) })
    }

    fn n1(&self) -> usize {
        self.cfg.n + 1
    }

    /// `Σ_j α_j [Σ_i tr(G_j W_i G_j^H U) + σ_z² tr(Z_j U)]`.
    pub fn objective(&self, w: &[CMat], u: &CMat) -> f64 {
        let wsum = w.iter().fold(CMat::zeros(self.cfg.m, self.cfg.m), |acc, x| acc + x);
        re_trace_prod(&self.u_objective_kernel(&wsum), u)
    }

    fn u_objective_kernel(&self, wsum: &CMat) -> CMat {
        let n1 = self.n1();
        let mut k = CMat::zeros(n1, n1);
        for j in 0..self.cfg.k_e {
            let g = &self.ops.g[j];
            k += (g * wsum * g.adjoint() + &self.ops.z[j] * cr(self.cfg.sigma_z2)) * cr(self.cfg.alpha[j]);
        }
        crate::linalg::hermitian_part(&k)
    }

    fn w_objective_kernel(&self, u: &CMat) -> CMat {
        let m = self.cfg.m;
        let mut k = CMat::zeros(m, m);
        for j in 0..self.cfg.k_e {
            let g = &self.ops.g[j];
            k += g.adjoint() * u * g * cr(self.cfg.alpha[j]);
        }
        crate::linalg::hermitian_part(&k)
    }

    /// `F^H diag(U_nn) F` and the budget left after IRS noise.
    fn amp_row(&self, u: &CMat) -> (CMat, f64) {
        let n = self.cfg.n;
        let d = CMat::from_diagonal(&CVec::from_fn(n, |k, _| cr(u[(k, k)].re.max(0.0))));
        let c = self.ch.f.adjoint() * d * &self.ch.f;
        let noise: f64 = (0..n).map(|k| u[(k, k)].re).sum::<f64>() * self.cfg.sigma_z2;
        (crate::linalg::hermitian_part(&c), self.cfg.p_i - noise)
    }

    /// Rows of the transmit step at fixed `U`: SINR (first `k_i`), AP, amplification.
    pub fn w_rows(&self, u: &CMat, only: Option<usize>) -> (Vec<LinearRow>, Vec<Sense>, Vec<f64>) {
        let m = self.cfg.m;
        let mut rows = Vec::new();
        let mut senses = Vec::new();
        let mut rhs = Vec::new();
        for i in 0..self.cfg.k_i {
            if only.is_some_and(|o| o != i) {
                continue;
            }
            let h = &self.ops.h[i];
            let k = crate::linalg::hermitian_part(&(h.adjoint() * u * h));
            let g = self.cfg.gamma[i];
            let row = (0..self.blocks).map(|b| Some(if b == i { k.clone() } else { &k * cr(-g) })).collect();
            rows.push(row);
            senses.push(Sense::Ge);
            rhs.push(g * (self.cfg.sigma_z2 * re_trace_prod(&self.ops.t[i], u) + self.cfg.sigma_i2[i]));
        }
        rows.push(vec![Some(CMat::identity(m, m)); self.blocks]);
        senses.push(Sense::Le);
        rhs.push(self.cfg.p_a);
        if self.cfg.has_amplification_budget() {
            let (c, budget) = self.amp_row(u);
            rows.push(vec![Some(c); self.blocks]);
            senses.push(Sense::Le);
            rhs.push(budget);
        }
        (rows, senses, rhs)
    }

    /// Transmit step: optimal `{W_i}` for fixed `U`.
    pub fn w_step(&self, u: &CMat, only: Option<usize>, settings: &SolverSettings) -> Result<(Vec<CMat>, f64)> {
        let m = self.cfg.m;
        let (rows, senses, rhs) = self.w_rows(u, only);
        if self.cfg.has_amplification_budget() && *rhs.last().unwrap() <= 0.0 {
            return Err(Error::BudgetExhausted { remaining: *rhs.last().unwrap() });
        }
        let mut prog = ConicProgram::new();
        let scale = vec![(self.cfg.p_a / m as f64).sqrt(); m];
        let ids: Vec<usize> = (0..self.blocks).map(|_| prog.add_scaled_block(BlockKind::HermitianPsd, m, scale.clone())).collect();
        let obj = self.w_objective_kernel(u);
        let mut lin = Affine::default();
        for &b in &ids {
            lin = lin.term(b, Coef::Matrix(obj.clone()));
        }
        prog.objective.linear = lin;
        for (k, row) in rows.iter().enumerate() {
            let mut a = Affine::default();
            for (b, coef) in row.iter().enumerate() {
                if let Some(c) = coef {
                    a = a.term(ids[b], Coef::Matrix(c.clone()));
                }
            }
            prog.constrain_affine(format!("row{k}"), a, senses[k], rhs[k]);
        }
        let sol = conic::solve(&prog, settings)?;
        if sol.status == Status::Infeasible {
            return Err(Error::Infeasible(sol.message));
        }
        let sol = sol.accept(1e-6)?;
        let w: Vec<CMat> = sol.values.iter().map(|v| v.as_matrix().clone()).collect();
        let val = self.objective(&w, u);
        Ok((w, val))
    }

    /// Rows of the reflect step at fixed `{W_i}`.
    pub fn u_rows(&self, w: &[CMat], mode: ReflectConstraint) -> (Vec<CMat>, Vec<Sense>, Vec<f64>) {
        let n1 = self.n1();
        let mut rows = Vec::new();
        let mut senses = Vec::new();
        let mut rhs = Vec::new();
        for i in 0..self.cfg.k_i {
            let h = &self.ops.h[i];
            let g = self.cfg.gamma[i];
            let mut k = h * &w[i] * h.adjoint();
            for (kk, wk) in w.iter().enumerate() {
                if kk != i {
                    k -= h * wk * h.adjoint() * cr(g);
                }
            }
            k -= &self.ops.t[i] * cr(g * self.cfg.sigma_z2);
            rows.push(crate::linalg::hermitian_part(&k));
            senses.push(Sense::Ge);
            rhs.push(g * self.cfg.sigma_i2[i]);
        }
        let unit = |n: usize| {
            let mut e = CMat::zeros(n1, n1);
            e[(n, n)] = cr(1.0);
            e
        };
        match mode {
            ReflectConstraint::Amplification => {
                if self.cfg.has_amplification_budget() {
                    let mut k = &self.ops.p * cr(self.cfg.sigma_z2);
                    for wk in w {
                        k += lifted_amp_kernel(&self.ch.f, wk);
                    }
                    rows.push(k);
                    senses.push(Sense::Le);
                    rhs.push(self.cfg.p_i);
                }
                rows.push(unit(n1 - 1));
                senses.push(Sense::Eq);
                rhs.push(1.0);
            }
            ReflectConstraint::UnitDiagonal | ReflectConstraint::FixedDiagonal(_) => {
                let b2 = if let ReflectConstraint::FixedDiagonal(b) = mode { b * b } else { 1.0 };
                for n in 0..n1 {
                    rows.push(unit(n));
                    senses.push(Sense::Eq);
                    rhs.push(if n + 1 == n1 { 1.0 } else { b2 });
                }
            }
        }
        (rows, senses, rhs)
    }

    fn u_scale(&self, w: &[CMat], mode: ReflectConstraint) -> Vec<f64> {
        let n = self.cfg.n;
        let scale: Vec<f64> = match mode {
            ReflectConstraint::Amplification => {
                let wsum = w.iter().fold(CMat::zeros(self.cfg.m, self.cfg.m), |acc, x| acc + x);
                let fwf = &self.ch.f * wsum * self.ch.f.adjoint();
                let mut s: Vec<f64> =
                    (0..n).map(|k| (self.cfg.p_i / (n as f64 * (fwf[(k, k)].re.max(0.0) + self.cfg.sigma_z2))).sqrt()).collect();
                s.push(1.0);
                s
            }
            ReflectConstraint::UnitDiagonal => vec![1.0; n + 1],
            ReflectConstraint::FixedDiagonal(b) => {
                let mut s = vec![b.max(1e-12); n];
                s.push(1.0);
                s
            }
        };
        scale.into_iter().map(|x| if x.is_finite() && x > 0.0 { x } else { 1.0 }).collect()
    }

    /// Reflect step: optimal `U` for fixed `{W_i}`.
    pub fn u_step(&self, w: &[CMat], mode: ReflectConstraint, settings: &SolverSettings) -> Result<(CMat, f64)> {
        let n = self.cfg.n;
        let (rows, senses, rhs) = self.u_rows(w, mode);
        let mut prog = ConicProgram::new();
        let ub = prog.add_scaled_block(BlockKind::HermitianPsd, n + 1, self.u_scale(w, mode));
        let wsum = w.iter().fold(CMat::zeros(self.cfg.m, self.cfg.m), |acc, x| acc + x);
        prog.objective.linear = Affine::default().term(ub, Coef::Matrix(self.u_objective_kernel(&wsum)));
        for (k, row) in rows.into_iter().enumerate() {
            prog.constrain_affine(format!("row{k}"), Affine::default().term(ub, Coef::Matrix(row)), senses[k], rhs[k]);
        }
        let sol = conic::solve(&prog, settings)?.accept(1e-6)?;
        let u = sol.values[0].as_matrix().clone();
        let val = self.objective(w, &u);
        Ok((u, val))
    }

    /// Summed normalized SINR shortfall `Σ max(0, 1 - row_i / rhs_i)` of the
    /// reflect-step rows at fixed `{W_i}`.
    pub fn shortfall(&self, w: &[CMat], u: &CMat) -> f64 {
        let (rows, _, rhs) = self.u_rows(w, ReflectConstraint::Amplification);
        (0..self.cfg.k_i).map(|i| (1.0 - re_trace_prod(&rows[i], u) / rhs[i]).max(0.0)).sum()
    }

    /// Transmit step minimizing the summed shortfall at fixed `U`.
    fn w_shortfall_step(&self, u: &CMat, settings: &SolverSettings) -> Result<(Vec<CMat>, f64)> {
        let m = self.cfg.m;
        let (rows, senses, rhs) = self.w_rows(u, None);
        let mut prog = ConicProgram::new();
        let scale = vec![(self.cfg.p_a / m as f64).sqrt(); m];
        let ids: Vec<usize> = (0..self.blocks).map(|_| prog.add_scaled_block(BlockKind::HermitianPsd, m, scale.clone())).collect();
        let s = prog.add_block(BlockKind::Nonneg, self.cfg.k_i);
        prog.objective.linear = Affine::default().term(s, Coef::Real(RVec::from_element(self.cfg.k_i, -1.0)));
        for (k, row) in rows.iter().enumerate() {
            let mut a = Affine::default();
            for (b, coef) in row.iter().enumerate() {
                if let Some(c) = coef {
                    a = a.term(ids[b], Coef::Matrix(c.clone()));
                }
            }
            if k < self.cfg.k_i {
                a = a.term(s, Coef::Real(RVec::from_fn(self.cfg.k_i, |j, _| if j == k { rhs[k] } else { 0.0 })));
            }
            prog.constrain_affine(format!("row{k}"), a, senses[k], rhs[k]);
        }
        let sol = conic::solve(&prog, settings)?.accept(1e-6)?;
        let w: Vec<CMat> = sol.values[..self.blocks].iter().map(|v| v.as_matrix().clone()).collect();
        let short = self.shortfall(&w, u);
        Ok((w, short))
    }

    /// Reflect step minimizing the summed shortfall at fixed `{W_i}`.
    fn u_shortfall_step(&self, w: &[CMat], mode: ReflectConstraint, settings: &SolverSettings) -> Result<CMat> {
        let n = self.cfg.n;
        let (rows, senses, rhs) = self.u_rows(w, mode);
        let mut prog = ConicProgram::new();
        let ub = prog.add_scaled_block(BlockKind::HermitianPsd, n + 1, self.u_scale(w, mode));
        let s = prog.add_block(BlockKind::Nonneg, self.cfg.k_i);
        prog.objective.linear = Affine::default().term(s, Coef::Real(RVec::from_element(self.cfg.k_i, -1.0)));
        for (k, row) in rows.into_iter().enumerate() {
            let mut a = Affine::default().term(ub, Coef::Matrix(row));
            if k < self.cfg.k_i {
                a = a.term(s, Coef::Real(RVec::from_fn(self.cfg.k_i, |j, _| if j == k { rhs[k] } else { 0.0 })));
            }
            prog.constrain_affine(format!("row{k}"), a, senses[k], rhs[k]);
        }
        let sol = conic::solve(&prog, settings)?.accept(1e-6)?;
        Ok(sol.values[0].as_matrix().clone())
    }

    /// Phase-one AO on the SINR shortfall from `start`. Returns the first
    /// rank-one reflection at which the transmit step is feasible, or
    /// `SinrInfeasible` once the shortfall stops decreasing.
    pub fn restore_sinr(&self, start: &ReflectionState, mode: ReflectConstraint, settings: &SolveSettings) -> Result<ReflectionState> {
        let mut refl = start.clone();
        let mut best = f64::INFINITY;
        for _ in 0..settings.max_outer {
            let ub = refl.lifted();
            let u = outer(&ub, &ub);
            match self.w_step(&u, None, &settings.conic) {
                Ok(_) => return Ok(refl),
                Err(Error::Infeasible(_) | Error::BudgetExhausted { .. }) => {}
                Err(e) => return Err(e),
            }
            let (w, short) = self.w_shortfall_step(&u, &settings.conic)?;
            if short >= best * (1.0 - settings.outer_tol) {
                break;
            }
            best = short;
            let u_new = self.u_shortfall_step(&w, mode, &settings.conic)?;
            let projection = match mode {
                ReflectConstraint::Amplification => {
                    let (rows, _, rhs) = self.u_rows(&w, mode);
                    if self.cfg.has_amplification_budget() {
                        Projection::AmplitudeBackoff { kernel: rows[self.cfg.k_i].clone(), budget: rhs[self.cfg.k_i] }
                    } else {
                        Projection::None
                    }
                }
                ReflectConstraint::UnitDiagonal => Projection::UnitModulus,
                ReflectConstraint::FixedDiagonal(b) => Projection::FixedModulus(b),
            };
            let pick = gaussian_randomize_u(&u_new, &projection, |ub| Some(-self.shortfall(&w, &outer(ub, ub))), &settings.randomization)?;
            if -pick.objective < short {
                refl = ReflectionState::from_lifted(&pick.u_bar)?;
            } else {
                break;
            }
        }
        let ub = refl.lifted();
        Err(Error::SinrInfeasible { binding: self.binding_set(&outer(&ub, &ub), &settings.conic) })
    }

    /// IUs whose SINR target alone is unattainable at `U`; all IUs when
    /// only the joint set is infeasible.
    pub fn binding_set(&self, u: &CMat, settings: &SolverSettings) -> Vec<usize> {
        let alone: Vec<usize> = (0..self.cfg.k_i).filter(|&i| self.w_step(u, Some(i), settings).is_err()).collect();
        if alone.is_empty() {
            (0..self.cfg.k_i).collect()
        } else {
            alone
        }
    }
}

/// SINR targets met up to [`SINR_SLACK`].
pub fn sinr_ok(prec: &Precoder, refl: &ReflectionState, ch: &ChannelSet, cfg: &SystemConfig) -> Result<bool> {
    for i in 0..cfg.k_i {
        let (s, d) = sinr_terms(i, prec, refl, ch, cfg)?;
        if s < cfg.gamma[i] * d * (1.0 - SINR_SLACK) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Rank-one beams from transmit covariances after purification against the
/// transmit-step rows at `U`.
pub fn extract_beams(prob: &LiftedProblem, w: &[CMat], u: &CMat) -> Result<(Vec<CVec>, Vec<CMat>)> {
    let (rows, _, _) = prob.w_rows(u, None);
    let obj = vec![Some(prob.w_objective_kernel(u)); prob.blocks];
    let reduced = rank_reduce(w, &rows, Some(&obj))?;
    let beams = reduced.iter().map(|x| rank_one_extract(x, RANK_ONE_TOL).unwrap_or_else(|_| principal_component(x))).collect();
    Ok((beams, reduced))
}

/// Purifies `U` against the reflect-step rows at fixed `{W_i}`.
pub fn reduce_u(prob: &LiftedProblem, w: &[CMat], u: &CMat, mode: ReflectConstraint) -> Result<CMat> {
    let (rows, _, _) = prob.u_rows(w, mode);
    let rows: Vec<LinearRow> = rows.into_iter().map(|r| vec![Some(r)]).collect();
    let wsum = w.iter().fold(CMat::zeros(prob.cfg.m, prob.cfg.m), |acc, x| acc + x);
    let obj = vec![Some(prob.u_objective_kernel(&wsum))];
    Ok(rank_reduce(std::slice::from_ref(u), &rows, Some(&obj))?.remove(0))
}

/// Amplification kernel `Σ Q_i + σ_z² P` for rank-one beams.
pub fn amp_kernel_for_beams(ch: &ChannelSet, cfg: &SystemConfig, beams: &[CVec]) -> CMat {
    let n = cfg.n;
    let mut k = crate::system_model::lifted_projector(n) * cr(cfg.sigma_z2);
    for b in beams {
        k += crate::system_model::lifted_amp_kernel_beam(&ch.f, b);
    }
    k
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SumPowerSolution {
    pub precoder: Precoder,
    pub refl: ReflectionState,
    /// Relaxed objective after each AO round.
    pub sdr_trace: Vec<f64>,
    /// Relaxed objective after every block update.
    pub fine_trace: Vec<f64>,
    pub sdr_objective: f64,
    /// True weighted sum power of the recovered rank-one solution.
    pub objective: f64,
    pub iterations: usize,
    pub status: Convergence,
    pub feasibility: FeasibilityReport,
    pub w_blocks: Vec<CMat>,
    pub u: CMat,
    pub gr_candidate: usize,
}

/// Output of the relaxed AO before recovery.
pub struct RelaxedAo {
    pub w: Vec<CMat>,
    pub u: CMat,
    pub trace: Vec<f64>,
    pub fine: Vec<f64>,
    pub iterations: usize,
    pub status: Convergence,
}

/// Relaxed AO from `u0`. The first transmit step failing is reported with
/// the binding IU set.
pub fn relaxed_ao(prob: &LiftedProblem, u0: CMat, mode: ReflectConstraint, settings: &SolveSettings) -> Result<RelaxedAo> {
    let mut u = u0;
    let mut trace = Vec::new();
    let mut fine = Vec::new();
    let mut status = Convergence::IterationLimit;
    let mut iterations = 0;
    let mut w: Vec<CMat> = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for it in 0..settings.max_outer {
        iterations += 1;
        let step = prob.w_step(&u, None, &settings.conic);
        let (w_new, val_w) = match step {
            Ok(x) => x,
            Err(Error::Infeasible(_) | Error::BudgetExhausted { .. }) if it == 0 => {
                return Err(Error::SinrInfeasible { binding: prob.binding_set(&u, &settings.conic) });
            }
            Err(e) => return Err(e),
        };
        w = w_new;
        fine.push(val_w);
        let (u_new, val_u) = prob.u_step(&w, mode, &settings.conic)?;
        u = u_new;
        fine.push(val_u);
        trace.push(val_u);
        if it > 0 && relative_gain(prev, val_u) < settings.outer_tol {
            status = Convergence::Converged;
            break;
        }
        prev = val_u;
    }
    Ok(RelaxedAo { w, u, trace, fine, iterations, status })
}

/// Starting `U`: random phases with the amplitude heuristic; falls back to
/// the reflection-off point when that makes the first transmit step infeasible.
pub fn initial_u(ch: &ChannelSet, cfg: &SystemConfig, seed: u64) -> CMat {
    let v = direct_link_beam(ch, cfg);
    let ub = initial_reflection(ch, cfg, std::slice::from_ref(&v), seed).lifted();
    outer(&ub, &ub)
}

pub fn solve_sum_power(instance: &Instance, settings: &SolveSettings) -> Result<SumPowerSolution> {
    let (cfg, ch) = (&instance.cfg, &instance.channels);
    if cfg.k_i == 0 {
        return Err(Error::InvalidConfig("no information users; use the power-transfer solver".into()));
    }
    if let Some(i) = cfg.gamma.iter().position(|&g| !(g > 0.0)) {
        return Err(Error::HypothesisViolated(format!("SINR target of IU {i} must be positive")));
    }
    let prob = LiftedProblem::new(ch, cfg)?;
    let u0 = initial_u(ch, cfg, settings.init_seed);
    let ao = match relaxed_ao(&prob, u0.clone(), ReflectConstraint::Amplification, settings) {
        Ok(ao) => ao,
        Err(Error::SinrInfeasible { .. }) => {
            let off = ReflectionState::off(cfg.n).lifted();
            match relaxed_ao(&prob, outer(&off, &off), ReflectConstraint::Amplification, settings) {
                Ok(ao) => ao,
                Err(Error::SinrInfeasible { .. }) => {
                    let start = ReflectionState::from_lifted(&crate::sdr::principal_component(&u0))?;
                    let refl = prob.restore_sinr(&start, ReflectConstraint::Amplification, settings)?;
                    let ub = refl.lifted();
                    relaxed_ao(&prob, outer(&ub, &ub), ReflectConstraint::Amplification, settings)?
                }
                Err(e) => return Err(e),
            }
        }
        Err(e) => return Err(e),
    };
    recover_sum_power(instance, &prob, ao, settings)
}

/// Rank-one recovery: purify `{W_i}`, extract beams, purify `U`, then
/// Gaussian randomization with amplitude back-off.
pub fn recover_sum_power(instance: &Instance, prob: &LiftedProblem, ao: RelaxedAo, settings: &SolveSettings) -> Result<SumPowerSolution> {
    let (cfg, ch) = (&instance.cfg, &instance.channels);
    let (beams, w_red) = extract_beams(prob, &ao.w, &ao.u)?;
    let u_red = reduce_u(prob, &w_red, &ao.u, ReflectConstraint::Amplification)?;
    let precoder = Precoder::info_only(beams.clone(), cfg.m, cfg.k_e);
    let kernel = amp_kernel_for_beams(ch, cfg, &beams);
    let projection = Projection::AmplitudeBackoff { kernel, budget: cfg.p_i };
    let best = gaussian_randomize_u(&u_red, &projection, |ub| score_sum_power(&precoder, ub, ch, cfg), &settings.randomization)?;
    let refl = ReflectionState::from_lifted(&best.u_bar)?;
    let feasibility = feasibility_report(ProblemKind::SumPower, &precoder, &refl, ch, cfg)?;
    let sdr_objective = *ao.trace.last().unwrap_or(&f64::NAN);
    Ok(SumPowerSolution {
        precoder,
        refl,
        sdr_trace: ao.trace,
        fine_trace: ao.fine,
        sdr_objective,
        objective: best.objective,
        iterations: ao.iterations,
        status: ao.status,
        feasibility,
        w_blocks: w_red,
        u: u_red,
        gr_candidate: best.candidate,
    })
}

/// True objective of a rank-one candidate, `None` when it breaks a constraint.
pub fn score_sum_power(prec: &Precoder, ub: &CVec, ch: &ChannelSet, cfg: &SystemConfig) -> Option<f64> {
    let refl = ReflectionState::from_lifted(ub).ok()?;
    if cfg.has_amplification_budget() && amplification_power(prec, &refl, ch, cfg).ok()? > cfg.p_i * (1.0 + 1e-9) {
        return None;
    }
    if !sinr_ok(prec, &refl, ch, cfg).ok()? {
        return None;
    }
    weighted_sum_power(prec, &refl, ch, cfg).ok()
}

/// Default randomization settings tied to a trial seed.
pub fn randomization_for(seed: u64, draws: usize) -> RandomizationSettings {
    RandomizationSettings { draws, seed }
}
