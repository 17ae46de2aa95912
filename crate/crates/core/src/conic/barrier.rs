//! Primal log-barrier method with a phase-I search for a strictly feasible
//! start. All blocks are mapped to one real coordinate vector; equalities
//! (including pinned entries) are eliminated through a null-space basis.

use nalgebra::{Cholesky, SymmetricEigen};

use super::{herm_basis, BlockKind, BlockValue, Coef, ConicProgram, Expr, RawSolution, Sense, SolverSettings, Status};
use crate::error::Result;
use crate::linalg::{realify, CMat, CVec, RMat, RVec, C64};

struct PsdBlock {
    offset: usize,
    dim: usize,
    basis: Vec<Vec<(usize, usize, C64)>>,
}

struct QuadRow {
    idx: Vec<usize>,
    q: RMat,
    a: RVec,
    b: f64,
}

struct Model {
    n: usize,
    offsets: Vec<usize>,
    psd: Vec<PsdBlock>,
    nonneg: Vec<usize>,
    /// `a·z - b <= 0`
    lin: Vec<(RVec, f64)>,
    /// `v^T Q v + a·z - b <= 0`
    quad: Vec<QuadRow>,
    /// `w ln(a·z + c)`
    logs: Vec<(f64, RVec, f64)>,
    obj: RVec,
    eq_a: RMat,
    eq_b: RVec,
}

fn block_len(kind: BlockKind, dim: usize) -> usize {
    match kind {
        BlockKind::HermitianPsd => dim * dim,
        BlockKind::ComplexVector => 2 * dim,
        BlockKind::RealVector | BlockKind::Nonneg => dim,
    }
}

impl Model {
    fn new(prog: &ConicProgram) -> Self {
        let mut offsets = Vec::new();
        let mut n = 0;
        let mut psd = Vec::new();
        let mut nonneg = Vec::new();
        for b in &prog.blocks {
            offsets.push(n);
            match b.kind {
                BlockKind::HermitianPsd => psd.push(PsdBlock { offset: n, dim: b.dim, basis: herm_basis(b.dim) }),
                BlockKind::Nonneg => nonneg.extend(n..n + b.dim),
                _ => {}
            }
            n += block_len(b.kind, b.dim);
        }
        let mut m = Model {
            n,
            offsets,
            psd,
            nonneg,
            lin: Vec::new(),
            quad: Vec::new(),
            logs: Vec::new(),
            obj: RVec::zeros(n),
            eq_a: RMat::zeros(0, n),
            eq_b: RVec::zeros(0),
        };
        m.obj = m.affine_row(prog, &prog.objective.linear);
        for l in &prog.objective.logs {
            m.logs.push((l.weight, m.affine_row(prog, &l.arg), l.arg.constant));
        }
        let mut eq_rows: Vec<(RVec, f64)> = Vec::new();
        for c in &prog.constraints {
            match &c.expr {
                Expr::Affine(a) => {
                    let row = m.affine_row(prog, a);
                    let rhs = c.rhs - a.constant;
                    match c.sense {
                        Sense::Le => m.lin.push((row, rhs)),
                        Sense::Ge => m.lin.push((-row, -rhs)),
                        Sense::Eq => eq_rows.push((row, rhs)),
                    }
                }
                Expr::Quadratic(q) => {
                    let off = m.offsets[q.block];
                    let blk = &prog.blocks[q.block];
                    let (idx, qm) = match blk.kind {
                        BlockKind::ComplexVector => ((off..off + 2 * blk.dim).collect(), realify(&q.matrix)),
                        _ => ((off..off + blk.dim).collect(), q.matrix.map(|z| z.re)),
                    };
                    let qm = (&qm + qm.transpose()) * 0.5;
                    m.quad.push(QuadRow { idx, q: qm, a: m.affine_row(prog, &q.affine), b: c.rhs - q.affine.constant });
                }
            }
        }
        for f in &prog.fixed {
            let off = m.offsets[f.block];
            let mut row = RVec::zeros(n);
            row[off + f.index] = 1.0;
            eq_rows.push((row, f.value.re));
            if prog.blocks[f.block].kind == BlockKind::ComplexVector {
                let mut row = RVec::zeros(n);
                row[off + prog.blocks[f.block].dim + f.index] = 1.0;
                eq_rows.push((row, f.value.im));
            }
        }
        m.eq_a = RMat::from_fn(eq_rows.len(), n, |i, j| eq_rows[i].0[j]);
        m.eq_b = RVec::from_fn(eq_rows.len(), |i, _| eq_rows[i].1);
        m
    }

    fn affine_row(&self, prog: &ConicProgram, a: &super::Affine) -> RVec {
        let mut row = RVec::zeros(self.n);
        for (b, coef) in &a.terms {
            let off = self.offsets[*b];
            match coef {
                Coef::Matrix(cm) => {
                    for (k, e) in herm_basis(prog.blocks[*b].dim).iter().enumerate() {
                        row[off + k] += e.iter().map(|&(p, q, v)| (v * cm[(q, p)]).re).sum::<f64>();
                    }
                }
                Coef::Vector(cv) => {
                    let d = cv.len();
                    for i in 0..d {
                        row[off + i] += cv[i].re;
                        row[off + d + i] += cv[i].im;
                    }
                }
                Coef::Real(rv) => {
                    for i in 0..rv.len() {
                        row[off + i] += rv[i];
                    }
                }
            }
        }
        row
    }

    fn psd_matrix(&self, blk: &PsdBlock, z: &RVec, shift: f64) -> CMat {
        let mut x = CMat::identity(blk.dim, blk.dim) * C64::new(shift, 0.0);
        for (k, e) in blk.basis.iter().enumerate() {
            for &(p, q, v) in e {
                x[(p, q)] += v * z[blk.offset + k];
            }
        }
        x
    }

    fn to_values(&self, prog: &ConicProgram, z: &RVec) -> Vec<BlockValue> {
        let mut psd_iter = self.psd.iter();
        prog.blocks
            .iter()
            .enumerate()
            .map(|(b, blk)| {
                let off = self.offsets[b];
                match blk.kind {
                    BlockKind::HermitianPsd => BlockValue::Matrix(self.psd_matrix(psd_iter.next().unwrap(), z, 0.0)),
                    BlockKind::ComplexVector => {
                        BlockValue::Vector(CVec::from_fn(blk.dim, |i, _| C64::new(z[off + i], z[off + blk.dim + i])))
                    }
                    _ => BlockValue::Real(RVec::from_fn(blk.dim, |i, _| z[off + i])),
                }
            })
            .collect()
    }

    fn from_values(&self, prog: &ConicProgram, values: &[BlockValue]) -> RVec {
        let mut z = RVec::zeros(self.n);
        for (b, (blk, v)) in prog.blocks.iter().zip(values).enumerate() {
            let off = self.offsets[b];
            match v {
                BlockValue::Matrix(x) => {
                    for (k, e) in herm_basis(blk.dim).iter().enumerate() {
                        let (p, q, val) = e[0];
                        z[off + k] = if val.im == 0.0 { x[(p, q)].re } else { x[(p, q)].im };
                    }
                }
                BlockValue::Vector(x) => {
                    for i in 0..blk.dim {
                        z[off + i] = x[i].re;
                        z[off + blk.dim + i] = x[i].im;
                    }
                }
                BlockValue::Real(x) => {
                    for i in 0..blk.dim {
                        z[off + i] = x[i];
                    }
                }
            }
        }
        z
    }

    fn default_start(&self) -> RVec {
        let mut z = RVec::zeros(self.n);
        for blk in &self.psd {
            for i in 0..blk.dim {
                z[blk.offset + i] = 1.0;
            }
        }
        for &i in &self.nonneg {
            z[i] = 1.0;
        }
        z
    }

    fn quad_value(&self, r: &QuadRow, z: &RVec) -> f64 {
        let v = RVec::from_fn(r.idx.len(), |i, _| z[r.idx[i]]);
        v.dot(&(&r.q * &v)) + r.a.dot(&z.rows(0, self.n)) - r.b
    }

    fn barrier_count(&self, phase1: bool) -> usize {
        let base = self.psd.iter().map(|b| b.dim).sum::<usize>() + self.nonneg.len() + self.lin.len() + self.quad.len();
        if phase1 {
            base + self.logs.len() + 1
        } else {
            base
        }
    }

    /// Largest violation of strict feasibility (negative means interior).
    fn infeasibility(&self, z: &RVec) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for (a, b) in &self.lin {
            worst = worst.max(a.dot(z) - b);
        }
        for r in &self.quad {
            worst = worst.max(self.quad_value(r, z));
        }
        for blk in &self.psd {
            worst = worst.max(-crate::linalg::min_eig(&self.psd_matrix(blk, z, 0.0)));
        }
        for &i in &self.nonneg {
            worst = worst.max(-z[i]);
        }
        for (_, a, c) in &self.logs {
            worst = worst.max(-(a.dot(z) + c));
        }
        worst
    }

    /// Barrier value plus `t` times the (minimized) objective, with optional
    /// gradient and Hessian. `None` outside the domain. In phase I the last
    /// coordinate is the shift `s` and the objective is `s`.
    fn eval(&self, z: &RVec, t: f64, phase1: bool, derivs: bool) -> Option<(f64, RVec, RMat)> {
        let ne = z.len();
        let s = if phase1 { z[ne - 1] } else { 0.0 };
        let zz = z.rows(0, self.n).into_owned();
        let mut val = 0.0;
        let mut grad = RVec::zeros(if derivs { ne } else { 0 });
        let mut hess = RMat::zeros(if derivs { ne } else { 0 }, if derivs { ne } else { 0 });

        // -ln(u) for u = h(z) + s.
        let mut scalar = |u: f64, du: &dyn Fn(&mut RVec), d2u: Option<(&[usize], &RMat, f64)>| -> Option<()> {
            if !(u > 0.0) {
                return None;
            }
            val -= u.ln();
            if derivs {
                let mut g = RVec::zeros(ne);
                du(&mut g);
                if phase1 {
                    g[ne - 1] += 1.0;
                }
                grad.axpy(-1.0 / u, &g, 1.0);
                hess.ger(1.0 / (u * u), &g, &g, 1.0);
                if let Some((idx, q, f)) = d2u {
                    for (i, &ii) in idx.iter().enumerate() {
                        for (j, &jj) in idx.iter().enumerate() {
                            hess[(ii, jj)] -= f * q[(i, j)] / u;
                        }
                    }
                }
            }
            Some(())
        };

        for (a, b) in &self.lin {
            scalar(b - a.dot(&zz) + s, &|g| g.rows_mut(0, a.len()).axpy(-1.0, a, 1.0), None)?;
        }
        for r in &self.quad {
            let v = RVec::from_fn(r.idx.len(), |i, _| zz[r.idx[i]]);
            let qv = &r.q * &v;
            let u = -(v.dot(&qv) + r.a.dot(&zz) - r.b) + s;
            scalar(
                u,
                &|g| {
                    g.rows_mut(0, r.a.len()).axpy(-1.0, &r.a, 1.0);
                    for (i, &ii) in r.idx.iter().enumerate() {
                        g[ii] -= 2.0 * qv[i];
                    }
                },
                Some((&r.idx, &r.q, -2.0)),
            )?;
        }
        for &i in &self.nonneg {
            scalar(zz[i] + s, &|g| g[i] += 1.0, None)?;
        }
        if phase1 {
            for (_, a, c) in &self.logs {
                scalar(a.dot(&zz) + c + s, &|g| g.rows_mut(0, a.len()).axpy(1.0, a, 1.0), None)?;
            }
            scalar(s + 1.0, &|_| {}, None)?;
        }

        for blk in &self.psd {
            let x = self.psd_matrix(blk, &zz, s);
            let chol = Cholesky::new(x)?;
            let l = chol.l_dirty();
            let mut logdet = 0.0;
            for i in 0..blk.dim {
                logdet += 2.0 * l[(i, i)].re.ln();
            }
            val -= logdet;
            if derivs {
                let y = chol.inverse();
                let nb = blk.basis.len();
                let tr_ye = |e: &[(usize, usize, C64)]| e.iter().map(|&(p, q, v)| (v * y[(q, p)]).re).sum::<f64>();
                for (a, e) in blk.basis.iter().enumerate() {
                    grad[blk.offset + a] -= tr_ye(e);
                    for (b, f) in blk.basis.iter().enumerate().skip(a) {
                        let mut h = 0.0;
                        for &(p, q, v) in e {
                            for &(pp, qq, vv) in f {
                                h += (v * vv * y[(qq, p)] * y[(q, pp)]).re;
                            }
                        }
                        hess[(blk.offset + a, blk.offset + b)] += h;
                        if b != a {
                            hess[(blk.offset + b, blk.offset + a)] += h;
                        }
                    }
                }
                if phase1 {
                    let yy = &y * &y;
                    let mut tr_y = 0.0;
                    let mut tr_yy = 0.0;
                    for i in 0..blk.dim {
                        tr_y += y[(i, i)].re;
                        tr_yy += yy[(i, i)].re;
                    }
                    grad[ne - 1] -= tr_y;
                    hess[(ne - 1, ne - 1)] += tr_yy;
                    for a in 0..nb {
                        let h: f64 = blk.basis[a].iter().map(|&(p, q, v)| (v * yy[(q, p)]).re).sum();
                        hess[(blk.offset + a, ne - 1)] += h;
                        hess[(ne - 1, blk.offset + a)] += h;
                    }
                }
            }
        }

        if phase1 {
            val += t * s;
            if derivs {
                grad[ne - 1] += t;
            }
        } else {
            val -= t * self.obj.dot(&zz);
            if derivs {
                grad.rows_mut(0, self.n).axpy(-t, &self.obj, 1.0);
            }
            for (w, a, c) in &self.logs {
                let arg = a.dot(&zz) + c;
                if !(arg > 0.0) {
                    return None;
                }
                val -= t * w * arg.ln();
                if derivs {
                    grad.rows_mut(0, self.n).axpy(-t * w / arg, a, 1.0);
                    let mut hsub = hess.view_mut((0, 0), (self.n, self.n));
                    hsub.ger(t * w / (arg * arg), a, a, 1.0);
                }
            }
        }
        Some((val, grad, hess))
    }

    fn objective(&self, z: &RVec) -> f64 {
        let mut f = self.obj.dot(z);
        for (w, a, c) in &self.logs {
            f += w * (a.dot(z) + c).ln();
        }
        f
    }
}

/// Orthonormal basis of the null space of `a` (columns).
fn null_space(a: &RMat, n: usize) -> RMat {
    if a.nrows() == 0 {
        return RMat::identity(n, n);
    }
    let ata = a.transpose() * a;
    let eig = SymmetricEigen::new(ata);
    let lmax = eig.eigenvalues.amax().max(1e-300);
    let keep: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k] <= 1e-10 * lmax).collect();
    RMat::from_fn(n, keep.len(), |i, j| eig.eigenvectors[(i, keep[j])])
}

enum Centering {
    Done,
    /// Budget, iteration cap or line search ran out before the Newton
    /// decrement became small.
    Stalled,
    Failed,
}

/// Newton centering on `eval(., t)` restricted to `z + range(basis)`.
/// `stop` may end the loop early.
fn center(
    model: &Model,
    z: &mut RVec,
    t: f64,
    phase1: bool,
    basis: &RMat,
    budget: &mut usize,
    stop: &dyn Fn(&RVec) -> bool,
) -> Centering {
    for _ in 0..100 {
        if *budget == 0 {
            return Centering::Stalled;
        }
        *budget -= 1;
        let Some((f0, g, h)) = model.eval(z, t, phase1, true) else {
            return Centering::Failed;
        };
        let gr = basis.transpose() * &g;
        let mut hr = basis.transpose() * &h * basis;
        hr = (&hr + hr.transpose()) * 0.5;
        let dmax = (0..hr.nrows()).map(|i| hr[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
        let mut chol = Cholesky::new(hr.clone());
        let mut reg = 1e-14;
        while chol.is_none() && reg < 1e-4 {
            let mut hh = hr.clone();
            for i in 0..hh.nrows() {
                hh[(i, i)] += reg * dmax;
            }
            chol = Cholesky::new(hh);
            reg *= 100.0;
        }
        let Some(chol) = chol else {
            return Centering::Failed;
        };
        let dw = -chol.solve(&gr);
        let dec = -gr.dot(&dw);
        if dec / 2.0 <= 1e-10 {
            return Centering::Done;
        }
        let dz = basis * dw;
        let mut step = 1.0;
        let mut moved = false;
        while step > 1e-14 {
            let cand = &*z + &dz * step;
            if let Some((f1, _, _)) = model.eval(&cand, t, phase1, false) {
                if f1 <= f0 - 0.01 * step * dec {
                    *z = cand;
                    moved = true;
                    break;
                }
            }
            step *= 0.5;
        }
        // Rounding blocks the line search close to the center.
        if !moved || step < 1.0 {
            if dec / 2.0 <= 1e-7 {
                return Centering::Done;
            }
            if !moved {
                return Centering::Stalled;
            }
        }
        if stop(z) {
            return Centering::Done;
        }
    }
    Centering::Stalled
}

pub(crate) fn solve(prog: &ConicProgram, settings: &SolverSettings) -> Result<RawSolution> {
    let model = Model::new(prog);
    let n = model.n;
    let mut z = match &prog.start {
        Some(v) => model.from_values(prog, v),
        None => model.default_start(),
    };
    let finish = |status: Status, z: &RVec, bound: Option<f64>, gap: f64, iterations: usize, message: String| RawSolution {
        status,
        values: model.to_values(prog, z),
        dual_bound: bound,
        gap,
        iterations,
        message,
    };

    // Land on the equality set.
    if model.eq_a.nrows() > 0 {
        let r = &model.eq_b - &model.eq_a * &z;
        if r.amax() > 0.0 {
            let svd = model.eq_a.clone().svd(true, true);
            if let Ok(dz) = svd.solve(&r, 1e-12) {
                z += dz;
            }
        }
        let res = (&model.eq_b - &model.eq_a * &z).amax();
        if res > 1e-9 * (1.0 + model.eq_b.amax()) {
            return Ok(finish(Status::Infeasible, &z, None, f64::INFINITY, 0, "inconsistent equalities".into()));
        }
    }
    let basis = null_space(&model.eq_a, n);
    let mut budget = settings.max_iter * 10;
    let mut iterations = 0;

    // Phase I.
    // Data are normalized, so a start with slack below this is treated as
    // on the boundary.
    let margin = model.infeasibility(&z);
    if margin >= -1e-6 {
        let mut ze = RVec::zeros(n + 1);
        ze.rows_mut(0, n).copy_from(&z);
        ze[n] = margin.max(0.0) * 1.1 + 1.0;
        let mut be = RMat::zeros(n + 1, basis.ncols() + 1);
        be.view_mut((0, 0), (n, basis.ncols())).copy_from(&basis);
        be[(n, basis.ncols())] = 1.0;
        let nu = model.barrier_count(true) as f64;
        let mut t = 1.0;
        let mut found = false;
        loop {
            let before = budget;
            let res = center(&model, &mut ze, t, true, &be, &mut budget, &|p: &RVec| p[n] < 0.0);
            iterations += before - budget;
            if ze[n] < 0.0 && model.infeasibility(&ze.rows(0, n).into_owned()) < 0.0 {
                // A point that only just crossed the boundary leaves phase II
                // with a barrier too steep to step on; re-center for margin.
                let crossed = ze.clone();
                let before = budget;
                center(&model, &mut ze, t, true, &be, &mut budget, &|_| false);
                iterations += before - budget;
                if !(ze[n] < crossed[n] && model.infeasibility(&ze.rows(0, n).into_owned()) < 0.0) {
                    ze = crossed;
                }
                found = true;
                break;
            }
            if matches!(res, Centering::Failed) {
                return Ok(finish(Status::NumericalFailure, &z, None, f64::INFINITY, iterations, "phase I failed".into()));
            }
            if nu / t <= 1e-10 {
                break;
            }
            if budget == 0 {
                return Ok(finish(Status::IterationLimit, &z, None, f64::INFINITY, iterations, "phase I budget".into()));
            }
            t *= 20.0;
        }
        if !found {
            return Ok(finish(
                Status::Infeasible,
                &z,
                None,
                f64::INFINITY,
                iterations,
                format!("no strictly feasible point (min shift {:.3e})", ze[n]),
            ));
        }
        z = ze.rows(0, n).into_owned();
    }

    // Phase II.
    let nu = model.barrier_count(false) as f64;
    if nu == 0.0 {
        // Only equalities: the objective must be constant on the feasible set.
        let gr = basis.transpose() * &model.obj;
        let status = if gr.amax() <= 1e-12 && model.logs.is_empty() { Status::Optimal } else { Status::NumericalFailure };
        let f = model.objective(&z);
        return Ok(finish(status, &z, Some(f), 0.0, iterations, String::new()));
    }
    let mut t = 1.0;
    loop {
        let before = budget;
        let res = center(&model, &mut z, t, false, &basis, &mut budget, &|_| false);
        iterations += before - budget;
        if matches!(res, Centering::Failed) {
            return Ok(finish(Status::NumericalFailure, &z, None, nu / t, iterations, "centering failed".into()));
        }
        let gap = nu / t;
        if gap <= settings.eps_gap && matches!(res, Centering::Done) {
            let f = model.objective(&z);
            return Ok(finish(Status::Optimal, &z, Some(f + gap), gap, iterations, String::new()));
        }
        if budget == 0 || (gap <= settings.eps_gap && matches!(res, Centering::Stalled)) {
            return Ok(finish(Status::IterationLimit, &z, None, gap, iterations, "newton budget".into()));
        }
        t *= 20.0;
    }
}
