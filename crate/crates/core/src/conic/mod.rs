//! Convex subproblem representation and the bundled solvers.
//!
//! A [`ConicProgram`] maximizes a real-linear objective (optionally plus
//! weighted logarithms of affine expressions) over Hermitian PSD matrices,
//! complex vectors, real vectors and nonnegative vectors, subject to affine
//! and convex quadratic constraints.
//!
//! Two engines are bundled:
//! * a primal-dual path-following method (HKM direction, Mehrotra
//!   predictor-corrector) for programs whose constraints are all affine and
//!   whose blocks are PSD or nonnegative;
//! * a primal log-barrier Newton method for everything else (vector blocks,
//!   quadratic constraints).
//!
//! Log terms `w ln(a(x))` stand in for exponential slack constraints
//! `e^ρ <= a(x)` whose slack only enters the objective: at any optimum
//! `ρ = ln a(x)`, so the slack is eliminated analytically.
//!
//! Before solving, each block is rescaled by its optional `scale` hint
//! (`X = D X' D` for matrices, `x = d ∘ x'` for vectors), then every constraint
//! row and the objective are divided by their largest coefficient. Tolerances
//! apply to this normalized data.

mod barrier;
mod dump;
mod pd;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cr, herm_eig, CMat, CVec, RVec, C64};

pub use dump::dump_program;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    HermitianPsd,
    ComplexVector,
    RealVector,
    Nonneg,
}

#[derive(Debug, Clone)]
pub struct Block {
    pub kind: BlockKind,
    pub dim: usize,
    /// Typical magnitude of each coordinate.
    pub scale: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub enum Coef {
    /// `Re tr(C X)` for a Hermitian block; `C` should be Hermitian.
    Matrix(CMat),
    /// `Re(c^H x)` for a complex vector block.
    Vector(CVec),
    /// `c^T x` for real or nonnegative blocks.
    Real(RVec),
}

#[derive(Debug, Clone, Default)]
pub struct Affine {
    pub terms: Vec<(usize, Coef)>,
    pub constant: f64,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn term(mut self, block: usize, coef: Coef) -> Self {
        self.terms.push((block, coef));
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn eval(&self, values: &[BlockValue]) -> f64 {
        let mut acc = self.constant;
        for (b, coef) in &self.terms {
            acc += eval_coef(coef, &values[*b]);
        }
        acc
    }

    fn max_coef(&self) -> f64 {
        self.terms.iter().map(|(_, c)| coef_max(c)).fold(0.0, f64::max)
    }

    fn scaled(&self, f: f64) -> Self {
        Self {
            terms: self.terms.iter().map(|(b, c)| (*b, coef_scale(c, f))).collect(),
            constant: self.constant * f,
        }
    }
}

/// `x^H B x + affine`, with `B` Hermitian PSD acting on a vector block.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub block: usize,
    pub matrix: CMat,
    pub affine: Affine,
}

impl Quadratic {
    pub fn eval(&self, values: &[BlockValue]) -> f64 {
        let x = values[self.block].as_complex_vector();
        x.dotc(&(&self.matrix * &x)).re + self.affine.eval(values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub enum Expr {
    Affine(Affine),
    Quadratic(Quadratic),
}

impl Expr {
    pub fn eval(&self, values: &[BlockValue]) -> f64 {
        match self {
            Expr::Affine(a) => a.eval(values),
            Expr::Quadratic(q) => q.eval(values),
        }
    }

    fn max_coef(&self) -> f64 {
        match self {
            Expr::Affine(a) => a.max_coef(),
            Expr::Quadratic(q) => q.affine.max_coef().max(crate::linalg::max_abs(&q.matrix)),
        }
    }

    fn scaled(&self, f: f64) -> Self {
        match self {
            Expr::Affine(a) => Expr::Affine(a.scaled(f)),
            Expr::Quadratic(q) => Expr::Quadratic(Quadratic {
                block: q.block,
                matrix: &q.matrix * cr(f),
                affine: q.affine.scaled(f),
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub label: String,
    pub expr: Expr,
    pub sense: Sense,
    pub rhs: f64,
}

/// `weight * ln(arg)` added to the maximized objective.
#[derive(Debug, Clone)]
pub struct LogTerm {
    pub weight: f64,
    pub arg: Affine,
}

#[derive(Debug, Clone, Default)]
pub struct Objective {
    pub linear: Affine,
    pub logs: Vec<LogTerm>,
}

impl Objective {
    pub fn eval(&self, values: &[BlockValue]) -> f64 {
        let mut acc = self.linear.eval(values);
        for l in &self.logs {
            let a = l.arg.eval(values);
            acc += if a > 0.0 { l.weight * a.ln() } else { f64::NEG_INFINITY };
        }
        acc
    }
}

/// Pins one entry of a vector block.
#[derive(Debug, Clone)]
pub struct FixedEntry {
    pub block: usize,
    pub index: usize,
    pub value: C64,
}

#[derive(Debug, Clone, Default)]
pub struct ConicProgram {
    pub blocks: Vec<Block>,
    pub objective: Objective,
    pub constraints: Vec<Constraint>,
    pub fixed: Vec<FixedEntry>,
    /// Optional starting point for the barrier engine.
    pub start: Option<Vec<BlockValue>>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_block(&mut self, kind: BlockKind, dim: usize) -> usize {
        self.blocks.push(Block { kind, dim, scale: None });
        self.blocks.len() - 1
    }

    pub fn add_scaled_block(&mut self, kind: BlockKind, dim: usize, scale: Vec<f64>) -> usize {
        assert_eq!(scale.len(), dim);
        self.blocks.push(Block { kind, dim, scale: Some(scale) });
        self.blocks.len() - 1
    }

    pub fn constrain(&mut self, label: impl Into<String>, expr: Expr, sense: Sense, rhs: f64) {
        self.constraints.push(Constraint { label: label.into(), expr, sense, rhs });
    }

    pub fn constrain_affine(&mut self, label: impl Into<String>, a: Affine, sense: Sense, rhs: f64) {
        self.constrain(label, Expr::Affine(a), sense, rhs);
    }

    pub fn fix(&mut self, block: usize, index: usize, value: C64) {
        self.fixed.push(FixedEntry { block, index, value });
    }

    fn check(&self) -> Result<()> {
        let check_coef = |b: usize, c: &Coef| -> Result<()> {
            let blk = self.blocks.get(b).ok_or_else(|| Error::Dimension(format!("block {b} does not exist")))?;
            let ok = match (c, blk.kind) {
                (Coef::Matrix(m), BlockKind::HermitianPsd) => m.nrows() == blk.dim && m.ncols() == blk.dim,
                (Coef::Vector(v), BlockKind::ComplexVector) => v.len() == blk.dim,
                (Coef::Real(v), BlockKind::RealVector | BlockKind::Nonneg) => v.len() == blk.dim,
                _ => false,
            };
            if ok {
                Ok(())
            } else {
                Err(Error::Dimension(format!("coefficient does not match block {b}")))
            }
        };
        let check_affine = |a: &Affine| a.terms.iter().try_for_each(|(b, c)| check_coef(*b, c));
        check_affine(&self.objective.linear)?;
        for l in &self.objective.logs {
            check_affine(&l.arg)?;
            if !(l.weight >= 0.0) {
                return Err(Error::InvalidConfig("log weights must be nonnegative".into()));
            }
        }
        for c in &self.constraints {
            match &c.expr {
                Expr::Affine(a) => check_affine(a)?,
                Expr::Quadratic(q) => {
                    check_affine(&q.affine)?;
                    let blk = self.blocks.get(q.block).ok_or_else(|| Error::Dimension("bad quadratic block".into()))?;
                    if !matches!(blk.kind, BlockKind::ComplexVector | BlockKind::RealVector | BlockKind::Nonneg)
                        || q.matrix.nrows() != blk.dim
                        || q.matrix.ncols() != blk.dim
                    {
                        return Err(Error::Dimension(format!("quadratic in '{}' does not match its block", c.label)));
                    }
                    if c.sense != Sense::Le {
                        return Err(Error::InvalidConfig(format!("quadratic constraint '{}' must be <=", c.label)));
                    }
                }
            }
        }
        for f in &self.fixed {
            let blk = self.blocks.get(f.block).ok_or_else(|| Error::Dimension("bad fixed block".into()))?;
            if blk.kind == BlockKind::HermitianPsd || f.index >= blk.dim {
                return Err(Error::Dimension("fixed entry must index a vector block".into()));
            }
        }
        Ok(())
    }

    fn is_sdp_form(&self) -> bool {
        self.blocks.iter().all(|b| matches!(b.kind, BlockKind::HermitianPsd | BlockKind::Nonneg))
            && self.constraints.iter().all(|c| matches!(c.expr, Expr::Affine(_)))
    }
}

/// Value of one variable block.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockValue {
    Matrix(CMat),
    Vector(CVec),
    Real(RVec),
}

impl BlockValue {
    pub fn as_matrix(&self) -> &CMat {
        match self {
            BlockValue::Matrix(m) => m,
            _ => panic!("block is not a matrix"),
        }
    }

    pub fn as_vector(&self) -> &CVec {
        match self {
            BlockValue::Vector(v) => v,
            _ => panic!("block is not a complex vector"),
        }
    }

    pub fn as_real(&self) -> &RVec {
        match self {
            BlockValue::Real(v) => v,
            _ => panic!("block is not a real vector"),
        }
    }

    fn as_complex_vector(&self) -> CVec {
        match self {
            BlockValue::Vector(v) => v.clone(),
            BlockValue::Real(v) => v.map(cr),
            BlockValue::Matrix(_) => panic!("quadratic form over a matrix block"),
        }
    }
}

fn eval_coef(coef: &Coef, value: &BlockValue) -> f64 {
    match (coef, value) {
        (Coef::Matrix(c), BlockValue::Matrix(x)) => crate::linalg::re_trace_prod(c, x),
        (Coef::Vector(c), BlockValue::Vector(x)) => c.dotc(x).re,
        (Coef::Real(c), BlockValue::Real(x)) => c.dot(x),
        _ => panic!("coefficient/value kind mismatch"),
    }
}

fn coef_max(c: &Coef) -> f64 {
    match c {
        Coef::Matrix(m) => crate::linalg::max_abs(m),
        Coef::Vector(v) => v.iter().map(|z| z.norm()).fold(0.0, f64::max),
        Coef::Real(v) => v.amax(),
    }
}

fn coef_scale(c: &Coef, f: f64) -> Coef {
    match c {
        Coef::Matrix(m) => Coef::Matrix(m * cr(f)),
        Coef::Vector(v) => Coef::Vector(v * cr(f)),
        Coef::Real(v) => Coef::Real(v * f),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    Infeasible,
    IterationLimit,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: Status,
    pub values: Vec<BlockValue>,
    /// Objective of the original (unscaled) program at `values`.
    pub objective: f64,
    /// Upper bound on the optimal value certified by the engine, if any.
    pub dual_bound: Option<f64>,
    /// Largest constraint violation on the normalized data.
    pub max_violation: f64,
    /// Relative duality gap reached on the normalized data.
    pub gap: f64,
    pub iterations: usize,
    pub message: String,
}

impl ConicSolution {
    /// Accepts `Optimal`, or an iteration-limited point whose residuals are
    /// within `loose`.
    pub fn accept(self, loose: f64) -> Result<Self> {
        match self.status {
            Status::Optimal => Ok(self),
            Status::IterationLimit if self.max_violation <= loose && self.gap <= loose => Ok(self),
            Status::Infeasible => Err(Error::Infeasible(self.message)),
            Status::IterationLimit => Err(Error::IterationLimit(self.iterations)),
            Status::NumericalFailure => Err(Error::NumericalFailure(self.message)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Engine {
    Auto,
    PrimalDual,
    Barrier,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub eps_feas: f64,
    pub eps_gap: f64,
    pub max_iter: usize,
    pub engine: Engine,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { eps_feas: 1e-8, eps_gap: 1e-8, max_iter: 200, engine: Engine::Auto }
    }
}

/// Scaled and normalized copy of a program.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    pub prog: ConicProgram,
    /// Original objective = `obj_scale * prepared objective + obj_offset`.
    pub obj_scale: f64,
    pub obj_offset: f64,
}

fn scale_coef(coef: &Coef, d: &[f64]) -> Coef {
    match coef {
        Coef::Matrix(m) => Coef::Matrix(CMat::from_fn(m.nrows(), m.ncols(), |p, q| m[(p, q)] * (d[p] * d[q]))),
        Coef::Vector(v) => Coef::Vector(CVec::from_fn(v.len(), |i, _| v[i] * d[i])),
        Coef::Real(v) => Coef::Real(RVec::from_fn(v.len(), |i, _| v[i] * d[i])),
    }
}

fn scales(prog: &ConicProgram) -> Vec<Vec<f64>> {
    prog.blocks
        .iter()
        .map(|b| match &b.scale {
            Some(s) => s.iter().map(|x| if *x > 0.0 && x.is_finite() { *x } else { 1.0 }).collect(),
            None => vec![1.0; b.dim],
        })
        .collect()
}

fn scale_affine(a: &Affine, d: &[Vec<f64>]) -> Affine {
    Affine { terms: a.terms.iter().map(|(b, c)| (*b, scale_coef(c, &d[*b]))).collect(), constant: a.constant }
}

fn prepare(prog: &ConicProgram) -> Prepared {
    let d = scales(prog);
    let mut out = ConicProgram {
        blocks: prog.blocks.iter().map(|b| Block { kind: b.kind, dim: b.dim, scale: None }).collect(),
        ..Default::default()
    };
    for c in &prog.constraints {
        let expr = match &c.expr {
            Expr::Affine(a) => Expr::Affine(scale_affine(a, &d)),
            Expr::Quadratic(q) => {
                let s = &d[q.block];
                let m = CMat::from_fn(q.matrix.nrows(), q.matrix.ncols(), |p, r| q.matrix[(p, r)] * (s[p] * s[r]));
                Expr::Quadratic(Quadratic { block: q.block, matrix: m, affine: scale_affine(&q.affine, &d) })
            }
        };
        let r = expr.max_coef();
        let f = if r > 0.0 { 1.0 / r } else { 1.0 };
        out.constraints.push(Constraint { label: c.label.clone(), expr: expr.scaled(f), sense: c.sense, rhs: c.rhs * f });
    }
    for fx in &prog.fixed {
        out.fixed.push(FixedEntry { block: fx.block, index: fx.index, value: fx.value / d[fx.block][fx.index] });
    }

    let lin = scale_affine(&prog.objective.linear, &d);
    let mut obj_scale = lin.max_coef();
    for l in &prog.objective.logs {
        obj_scale = obj_scale.max(l.weight);
    }
    if !(obj_scale > 0.0) {
        obj_scale = 1.0;
    }
    let mut obj_offset = 0.0;
    let mut logs = Vec::new();
    for l in &prog.objective.logs {
        let arg = scale_affine(&l.arg, &d);
        let r = arg.max_coef().max(arg.constant.abs());
        let r = if r > 0.0 { r } else { 1.0 };
        obj_offset += l.weight * r.ln();
        logs.push(LogTerm { weight: l.weight / obj_scale, arg: arg.scaled(1.0 / r) });
    }
    obj_offset += lin.constant;
    let mut lin = lin.scaled(1.0 / obj_scale);
    lin.constant = 0.0;
    out.objective = Objective { linear: lin, logs };
    out.start = prog.start.as_ref().map(|vals| unscale_values(vals, &d, true));
    Prepared { prog: out, obj_scale, obj_offset }
}

/// Maps between original and scaled coordinates; `inverse` divides.
fn unscale_values(values: &[BlockValue], d: &[Vec<f64>], inverse: bool) -> Vec<BlockValue> {
    let f = |x: f64| if inverse { 1.0 / x } else { x };
    values
        .iter()
        .zip(d)
        .map(|(v, s)| match v {
            BlockValue::Matrix(m) => BlockValue::Matrix(CMat::from_fn(m.nrows(), m.ncols(), |p, q| m[(p, q)] * (f(s[p]) * f(s[q])))),
            BlockValue::Vector(x) => BlockValue::Vector(CVec::from_fn(x.len(), |i, _| x[i] * f(s[i]))),
            BlockValue::Real(x) => BlockValue::Real(RVec::from_fn(x.len(), |i, _| x[i] * f(s[i]))),
        })
        .collect()
}

/// Largest violation of constraints, fixed entries and cone membership.
pub(crate) fn max_violation(prog: &ConicProgram, values: &[BlockValue]) -> f64 {
    let mut worst: f64 = 0.0;
    for c in &prog.constraints {
        let lhs = c.expr.eval(values);
        let v = match c.sense {
            Sense::Le => lhs - c.rhs,
            Sense::Ge => c.rhs - lhs,
            Sense::Eq => (lhs - c.rhs).abs(),
        };
        worst = worst.max(v);
    }
    for f in &prog.fixed {
        let got = match &values[f.block] {
            BlockValue::Vector(x) => x[f.index],
            BlockValue::Real(x) => cr(x[f.index]),
            BlockValue::Matrix(_) => continue,
        };
        worst = worst.max((got - f.value).norm());
    }
    for (b, v) in prog.blocks.iter().zip(values) {
        match (b.kind, v) {
            (BlockKind::HermitianPsd, BlockValue::Matrix(m)) if m.nrows() > 0 => {
                let (vals, _) = herm_eig(m);
                worst = worst.max(-vals[vals.len() - 1]);
            }
            (BlockKind::Nonneg, BlockValue::Real(x)) => {
                worst = worst.max(-x.min());
            }
            _ => {}
        }
    }
    worst
}

/// Solves `program` with the engine selected by `settings`.
pub fn solve(program: &ConicProgram, settings: &SolverSettings) -> Result<ConicSolution> {
    program.check()?;
    let prep = prepare(program);
    let engine = match settings.engine {
        Engine::Auto if program.is_sdp_form() && program.fixed.is_empty() => Engine::PrimalDual,
        Engine::Auto => Engine::Barrier,
        e => e,
    };
    let raw = match engine {
        Engine::PrimalDual => {
            if !program.is_sdp_form() {
                return Err(Error::InvalidConfig("primal-dual engine needs affine constraints on PSD/nonnegative blocks".into()));
            }
            pd::solve(&prep.prog, settings)?
        }
        _ => barrier::solve(&prep.prog, settings)?,
    };
    let d = scales(program);
    let values = unscale_values(&raw.values, &d, false);
    let objective = program.objective.eval(&values);
    let viol = max_violation(&prep.prog, &raw.values);
    let dual_bound = raw.dual_bound.map(|b| prep.obj_scale * b + prep.obj_offset);
    let mut status = raw.status;
    if status == Status::Optimal && viol > settings.eps_feas * 10.0 {
        status = Status::NumericalFailure;
    }
    Ok(ConicSolution {
        status,
        values,
        objective,
        dual_bound,
        max_violation: viol,
        gap: raw.gap,
        iterations: raw.iterations,
        message: raw.message,
    })
}

/// Engine output on the prepared program.
pub(crate) struct RawSolution {
    pub status: Status,
    pub values: Vec<BlockValue>,
    /// Bound on the prepared objective (same normalization as the objective).
    pub dual_bound: Option<f64>,
    pub gap: f64,
    pub iterations: usize,
    pub message: String,
}

/// Sparse Hermitian basis of `n x n` matrices, as real coordinates:
/// diagonal entries first, then `(Re, Im)` of each upper entry.
pub fn herm_basis(n: usize) -> Vec<Vec<(usize, usize, C64)>> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        out.push(vec![(i, i, cr(1.0))]);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(vec![(i, j, cr(1.0)), (j, i, cr(1.0))]);
            out.push(vec![(i, j, C64::new(0.0, 1.0)), (j, i, C64::new(0.0, -1.0))]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, dominant_eig, outer};

    fn rand_herm(seed: u64, n: usize) -> CMat {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b = CMat::from_fn(n, n, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        &b * b.adjoint()
    }

    fn trace_program(s: &CMat, p: f64) -> ConicProgram {
        let n = s.nrows();
        let mut prog = ConicProgram::new();
        let w = prog.add_block(BlockKind::HermitianPsd, n);
        prog.objective.linear = Affine::default().term(w, Coef::Matrix(s.clone()));
        prog.constrain_affine("power", Affine::default().term(w, Coef::Matrix(CMat::identity(n, n))), Sense::Le, p);
        prog
    }

    #[test]
    fn trace_constraint_gives_dominant_eigenvector() {
        for engine in [Engine::PrimalDual, Engine::Barrier] {
            let s = rand_herm(3, 4);
            let (lmax, v) = dominant_eig(&s);
            let sol = solve(&trace_program(&s, 2.5), &SolverSettings { engine, ..Default::default() }).unwrap();
            assert_eq!(sol.status, Status::Optimal, "{engine:?}");
            assert!((sol.objective - 2.5 * lmax).abs() < 1e-6 * lmax, "{engine:?}");
            let want = outer(&v, &v) * cr(2.5);
            assert!(crate::linalg::frob_norm(&(sol.values[0].as_matrix() - want)) < 1e-4);
        }
    }

    #[test]
    fn contradictory_traces_are_infeasible() {
        let n = 3;
        let mut prog = trace_program(&rand_herm(4, n), 1.0);
        prog.constrain_affine("floor", Affine::default().term(0, Coef::Matrix(CMat::identity(n, n))), Sense::Ge, 2.0);
        for engine in [Engine::PrimalDual, Engine::Barrier] {
            let sol = solve(&prog, &SolverSettings { engine, ..Default::default() }).unwrap();
            assert_eq!(sol.status, Status::Infeasible, "{engine:?}");
        }
    }

    #[test]
    fn dual_bound_dominates_objective() {
        let s = rand_herm(5, 3);
        let sol = solve(&trace_program(&s, 1.0), &SolverSettings::default()).unwrap();
        assert!(sol.objective <= sol.dual_bound.unwrap() + 1e-8);
    }

    #[test]
    fn log_objective_matches_closed_form() {
        // max ln(x0) + 2 ln(x1) s.t. x0 + x1 <= 3 -> x = (1, 2)
        for engine in [Engine::PrimalDual, Engine::Barrier] {
            let mut prog = ConicProgram::new();
            let x = prog.add_block(BlockKind::Nonneg, 2);
            prog.objective.logs.push(LogTerm { weight: 1.0, arg: Affine::default().term(x, Coef::Real(RVec::from_vec(vec![1.0, 0.0]))) });
            prog.objective.logs.push(LogTerm { weight: 2.0, arg: Affine::default().term(x, Coef::Real(RVec::from_vec(vec![0.0, 1.0]))) });
            prog.constrain_affine("sum", Affine::default().term(x, Coef::Real(RVec::from_vec(vec![1.0, 1.0]))), Sense::Le, 3.0);
            let sol = solve(&prog, &SolverSettings { engine, ..Default::default() }).unwrap();
            assert_eq!(sol.status, Status::Optimal, "{engine:?}");
            let v = sol.values[0].as_real();
            assert!((v[0] - 1.0).abs() < 1e-6 && (v[1] - 2.0).abs() < 1e-6, "{engine:?} {v}");
            assert!((sol.objective - 2.0 * 2f64.ln()).abs() < 1e-7);
        }
    }

    #[test]
    fn quadratic_ball_linear_objective() {
        // max Re(c^H x) s.t. ||x||^2 <= 4, x_2 fixed to 1 -> closed form
        let mut prog = ConicProgram::new();
        let x = prog.add_block(BlockKind::ComplexVector, 3);
        let cvec = CVec::from_vec(vec![c(1.0, 2.0), c(-0.5, 0.3), c(3.0, 0.0)]);
        prog.objective.linear = Affine::default().term(x, Coef::Vector(cvec.clone()));
        prog.constrain(
            "ball",
            Expr::Quadratic(Quadratic { block: x, matrix: CMat::identity(3, 3), affine: Affine::default() }),
            Sense::Le,
            4.0,
        );
        prog.fix(x, 2, cr(1.0));
        let sol = solve(&prog, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        let head = (cvec[0].norm_sqr() + cvec[1].norm_sqr()).sqrt();
        let want = 3f64.sqrt() * head + 3.0;
        assert!((sol.objective - want).abs() < 1e-6, "{} vs {want}", sol.objective);
    }

    #[test]
    fn scale_hints_do_not_change_the_answer() {
        let s = rand_herm(8, 3);
        let mut prog = trace_program(&s, 1e6);
        prog.blocks[0].scale = Some(vec![1e3; 3]);
        let sol = solve(&prog, &SolverSettings::default()).unwrap();
        let (lmax, _) = dominant_eig(&s);
        assert!((sol.objective / (1e6 * lmax) - 1.0).abs() < 1e-7);
    }
}
