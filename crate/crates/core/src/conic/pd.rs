//! Infeasible-start primal-dual interior-point method for block SDPs.
//!
//! Standard form: minimize `<C, X> - Σ w_l ln x_l` subject to `A(X) = b`,
//! with `X` a direct sum of Hermitian PSD blocks and a nonnegative vector.
//! Coordinates carrying a log weight `w_l > 0` are driven to `x_l z_l = w_l`
//! instead of to zero complementarity.

use nalgebra::Cholesky;

use super::{BlockKind, BlockValue, Coef, ConicProgram, Expr, RawSolution, Sense, SolverSettings, Status};
use crate::error::Result;
use crate::linalg::{cr, herm_eig, herm_inner, hermitian_part, re_trace_prod, CMat, RMat, RVec};

struct StdForm {
    dims: Vec<usize>,
    nlp: usize,
    /// Per PSD block: rows touching it, with their coefficient matrix.
    psd_rows: Vec<Vec<(usize, CMat)>>,
    /// Per LP coordinate: rows touching it, with their coefficient.
    lp_cols: Vec<Vec<(usize, f64)>>,
    b: RVec,
    c_psd: Vec<CMat>,
    c_lp: RVec,
    logw: Vec<f64>,
    /// Program block -> (is_psd, index into psd blocks or first LP coordinate).
    block_map: Vec<(bool, usize)>,
}

fn build(prog: &ConicProgram) -> StdForm {
    let mut dims = Vec::new();
    let mut block_map = Vec::new();
    let mut nlp = 0;
    for b in &prog.blocks {
        match b.kind {
            BlockKind::HermitianPsd => {
                block_map.push((true, dims.len()));
                dims.push(b.dim);
            }
            _ => {
                block_map.push((false, nlp));
                nlp += b.dim;
            }
        }
    }
    let n_slack = prog.constraints.iter().filter(|c| c.sense != Sense::Eq).count();
    let n_log = prog.objective.logs.len();
    let total_lp = nlp + n_slack + n_log;
    let mut psd_rows: Vec<Vec<(usize, CMat)>> = vec![Vec::new(); dims.len()];
    let mut lp_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); total_lp];
    let mut b = Vec::new();
    let mut logw = vec![0.0; total_lp];

    let push_affine = |row: usize, a: &super::Affine, psd_rows: &mut Vec<Vec<(usize, CMat)>>, lp_cols: &mut Vec<Vec<(usize, f64)>>| {
        for (blk, coef) in &a.terms {
            let (is_psd, idx) = block_map[*blk];
            match coef {
                Coef::Matrix(m) if is_psd => psd_rows[idx].push((row, hermitian_part(m))),
                Coef::Real(v) if !is_psd => {
                    for (i, x) in v.iter().enumerate() {
                        if *x != 0.0 {
                            lp_cols[idx + i].push((row, *x));
                        }
                    }
                }
                _ => unreachable!("checked by ConicProgram::check"),
            }
        }
    };

    let mut slack = nlp;
    for c in &prog.constraints {
        let row = b.len();
        let Expr::Affine(a) = &c.expr else { unreachable!() };
        push_affine(row, a, &mut psd_rows, &mut lp_cols);
        match c.sense {
            Sense::Le => {
                lp_cols[slack].push((row, 1.0));
                slack += 1;
            }
            Sense::Ge => {
                lp_cols[slack].push((row, -1.0));
                slack += 1;
            }
            Sense::Eq => {}
        }
        b.push(c.rhs - a.constant);
    }
    for (k, l) in prog.objective.logs.iter().enumerate() {
        let row = b.len();
        let var = nlp + n_slack + k;
        push_affine(row, &l.arg, &mut psd_rows, &mut lp_cols);
        lp_cols[var].push((row, -1.0));
        logw[var] = l.weight;
        b.push(-l.arg.constant);
    }

    let mut c_psd: Vec<CMat> = dims.iter().map(|&n| CMat::zeros(n, n)).collect();
    let mut c_lp = RVec::zeros(total_lp);
    for (blk, coef) in &prog.objective.linear.terms {
        let (is_psd, idx) = block_map[*blk];
        match coef {
            Coef::Matrix(m) if is_psd => c_psd[idx] -= hermitian_part(m),
            Coef::Real(v) if !is_psd => {
                for (i, x) in v.iter().enumerate() {
                    c_lp[idx + i] -= x;
                }
            }
            _ => unreachable!(),
        }
    }
    StdForm { dims, nlp: total_lp, psd_rows, lp_cols, b: RVec::from_vec(b), c_psd, c_lp, logw, block_map }
}

struct Point {
    x: Vec<CMat>,
    z: Vec<CMat>,
    xl: RVec,
    zl: RVec,
    y: RVec,
}

impl StdForm {
    fn m(&self) -> usize {
        self.b.len()
    }

    fn a_op(&self, x: &[CMat], xl: &RVec) -> RVec {
        let mut out = RVec::zeros(self.m());
        for (blk, rows) in self.psd_rows.iter().enumerate() {
            for (k, a) in rows {
                out[*k] += re_trace_prod(a, &x[blk]);
            }
        }
        for (l, col) in self.lp_cols.iter().enumerate() {
            for (k, a) in col {
                out[*k] += a * xl[l];
            }
        }
        out
    }

    fn a_adj(&self, y: &RVec) -> (Vec<CMat>, RVec) {
        let mut mats: Vec<CMat> = self.dims.iter().map(|&n| CMat::zeros(n, n)).collect();
        for (blk, rows) in self.psd_rows.iter().enumerate() {
            for (k, a) in rows {
                mats[blk] += a * cr(y[*k]);
            }
        }
        let lp = RVec::from_fn(self.nlp, |l, _| self.lp_cols[l].iter().map(|(k, a)| a * y[*k]).sum());
        (mats, lp)
    }

    fn is_log(&self, l: usize) -> bool {
        self.logw[l] > 0.0
    }
}

fn norm_blocks(m: &[CMat], v: &RVec) -> f64 {
    (m.iter().map(|x| herm_inner(x, x)).sum::<f64>() + v.norm_squared()).sqrt()
}

/// Largest `α` with `X + α ΔX ⪰ 0`.
fn max_step_psd(x: &CMat, dx: &CMat) -> Option<f64> {
    let chol = Cholesky::new(x.clone())?;
    let l = chol.l();
    let li = l.clone().try_inverse()?;
    let s = &li * dx * li.adjoint();
    let (vals, _) = herm_eig(&s);
    let lmin = *vals.last().unwrap_or(&0.0);
    Some(if lmin < 0.0 { -1.0 / lmin } else { f64::INFINITY })
}

fn max_step_lp(x: &RVec, dx: &RVec) -> f64 {
    let mut a = f64::INFINITY;
    for i in 0..x.len() {
        if dx[i] < 0.0 {
            a = a.min(-x[i] / dx[i]);
        }
    }
    a
}

struct Direction {
    dy: RVec,
    dx: Vec<CMat>,
    dz: Vec<CMat>,
    dxl: RVec,
    dzl: RVec,
}

pub(crate) fn solve(prog: &ConicProgram, settings: &SolverSettings) -> Result<RawSolution> {
    let sf = build(prog);
    let m = sf.m();
    let n_total: usize = sf.dims.iter().sum::<usize>() + sf.nlp;

    // Starting point in the spirit of common SDP codes.
    let a_norms: Vec<f64> = (0..m)
        .map(|k| {
            let mut s = 0.0;
            for rows in &sf.psd_rows {
                for (kk, a) in rows {
                    if *kk == k {
                        s += herm_inner(a, a);
                    }
                }
            }
            for col in &sf.lp_cols {
                for (kk, a) in col {
                    if *kk == k {
                        s += a * a;
                    }
                }
            }
            s.sqrt()
        })
        .collect();
    let c_norm = norm_blocks(&sf.c_psd, &sf.c_lp);
    let sq = (n_total as f64).sqrt().max(1.0);
    let mut xi: f64 = 10f64.max(sq);
    for k in 0..m {
        xi = xi.max(sq * (1.0 + sf.b[k].abs()) / (1.0 + a_norms[k]));
    }
    let eta = 10f64.max(sq).max(a_norms.iter().cloned().fold(0.0, f64::max)).max(c_norm);
    let mut p = Point {
        x: sf.dims.iter().map(|&n| CMat::identity(n, n) * cr(xi)).collect(),
        z: sf.dims.iter().map(|&n| CMat::identity(n, n) * cr(eta)).collect(),
        xl: RVec::from_element(sf.nlp, xi),
        zl: RVec::from_element(sf.nlp, eta),
        y: RVec::zeros(m),
    };
    let nu = sf.dims.iter().sum::<usize>() + (0..sf.nlp).filter(|&l| !sf.is_log(l)).count();
    let b_norm = sf.b.norm();

    let mut iterations = 0;
    let mut status = Status::IterationLimit;
    let mut message = String::new();
    let mut gap_rel: f64;
    let mut small_steps = 0;
    // Last Farkas ratio ||A^* y + Z|| / b^T y seen while primal residual was large.
    let mut last_ray = f64::INFINITY;

    loop {
        // Residuals and objectives.
        let ax = sf.a_op(&p.x, &p.xl);
        let rp = &sf.b - ax;
        let (aty, atyl) = sf.a_adj(&p.y);
        let rd: Vec<CMat> = (0..sf.dims.len()).map(|b| &sf.c_psd[b] - &p.z[b] - &aty[b]).collect();
        let rdl = &sf.c_lp - &p.zl - &atyl;
        let mut pobj: f64 = (0..sf.dims.len()).map(|b| herm_inner(&sf.c_psd[b], &p.x[b])).sum::<f64>() + sf.c_lp.dot(&p.xl);
        let mut dobj = sf.b.dot(&p.y);
        for l in 0..sf.nlp {
            if sf.is_log(l) {
                let w = sf.logw[l];
                pobj -= w * p.xl[l].ln();
                dobj += w - w * (w / p.zl[l]).ln();
            }
        }
        let mut comp: f64 = (0..sf.dims.len()).map(|b| herm_inner(&p.x[b], &p.z[b])).sum();
        for l in 0..sf.nlp {
            if !sf.is_log(l) {
                comp += p.xl[l] * p.zl[l];
            }
        }
        let mu = if nu > 0 { comp / nu as f64 } else { 0.0 };
        let rel_p = rp.norm() / (1.0 + b_norm);
        let rel_d = norm_blocks(&rd, &rdl) / (1.0 + c_norm);
        gap_rel = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());

        if rel_p <= settings.eps_feas && rel_d <= settings.eps_feas && gap_rel <= settings.eps_gap {
            status = Status::Optimal;
            break;
        }
        // Farkas-type certificate: b^T y > 0 while A^* y + Z -> 0 relative to it.
        let by = sf.b.dot(&p.y);
        if by > 0.0 {
            let (cz, czl) = (
                (0..sf.dims.len()).map(|b| &aty[b] + &p.z[b]).collect::<Vec<_>>(),
                &atyl + &p.zl,
            );
            let ray = norm_blocks(&cz, &czl) / by;
            last_ray = if rel_p > settings.eps_feas { ray } else { f64::INFINITY };
            if ray <= 1e-8 && rel_p > settings.eps_feas {
                status = Status::Infeasible;
                message = "primal infeasible (dual ray found)".into();
                break;
            }
        }
        if iterations >= settings.max_iter {
            message = format!("iteration cap; rel_p {rel_p:.2e} rel_d {rel_d:.2e} gap {gap_rel:.2e}");
            break;
        }
        iterations += 1;

        // Schur complement.
        let mut zinv = Vec::with_capacity(sf.dims.len());
        for b in 0..sf.dims.len() {
            match p.z[b].clone().try_inverse() {
                Some(zi) => zinv.push(hermitian_part(&zi)),
                None => {
                    status = Status::NumericalFailure;
                    message = "dual block lost definiteness".into();
                    break;
                }
            }
        }
        if status == Status::NumericalFailure {
            break;
        }
        let mut mm = RMat::zeros(m, m);
        for (b, rows) in sf.psd_rows.iter().enumerate() {
            for (l, al) in rows {
                let t = &p.x[b] * al * &zinv[b];
                for (k, ak) in rows {
                    mm[(*k, *l)] += re_trace_prod(ak, &t);
                }
            }
        }
        for (l, col) in sf.lp_cols.iter().enumerate() {
            let r = p.xl[l] / p.zl[l];
            for (k, ak) in col {
                for (kk, akk) in col {
                    mm[(*k, *kk)] += ak * akk * r;
                }
            }
        }
        let mm = (&mm + mm.transpose()) * 0.5;
        let diag_max = (0..m).map(|k| mm[(k, k)].abs()).fold(0.0, f64::max).max(1e-300);
        let factor = match Cholesky::new(mm.clone()) {
            Some(f) => Some(f),
            None => {
                let mut reg = mm.clone();
                for k in 0..m {
                    reg[(k, k)] += 1e-13 * diag_max;
                }
                Cholesky::new(reg)
            }
        };
        let Some(factor) = factor else {
            status = Status::NumericalFailure;
            message = "Schur complement is singular".into();
            break;
        };

        let direction = |target: f64, corr: Option<(&Vec<CMat>, &RVec)>| -> Direction {
            let mut rc = Vec::with_capacity(sf.dims.len());
            let mut g = Vec::with_capacity(sf.dims.len());
            for b in 0..sf.dims.len() {
                let n = sf.dims[b];
                let mut r = CMat::identity(n, n) * cr(target) - &p.x[b] * &p.z[b];
                if let Some((cm, _)) = corr {
                    r -= &cm[b];
                }
                g.push((&r - &p.x[b] * &rd[b]) * &zinv[b]);
                rc.push(r);
            }
            let mut rcl = RVec::zeros(sf.nlp);
            let mut gl = RVec::zeros(sf.nlp);
            for l in 0..sf.nlp {
                let t = if sf.is_log(l) { sf.logw[l] } else { target };
                rcl[l] = t - p.xl[l] * p.zl[l] - corr.map(|(_, cl)| cl[l]).unwrap_or(0.0);
                gl[l] = (rcl[l] - p.xl[l] * rdl[l]) / p.zl[l];
            }
            let mut h = rp.clone();
            for (b, rows) in sf.psd_rows.iter().enumerate() {
                for (k, a) in rows {
                    h[*k] -= re_trace_prod(a, &g[b]);
                }
            }
            for (l, col) in sf.lp_cols.iter().enumerate() {
                for (k, a) in col {
                    h[*k] -= a * gl[l];
                }
            }
            let dy = factor.solve(&h);
            let (ady, adyl) = sf.a_adj(&dy);
            let dz: Vec<CMat> = (0..sf.dims.len()).map(|b| &rd[b] - &ady[b]).collect();
            let dzl = &rdl - adyl;
            let dx: Vec<CMat> = (0..sf.dims.len())
                .map(|b| hermitian_part(&((&rc[b] - &p.x[b] * &dz[b]) * &zinv[b])))
                .collect();
            let dxl = RVec::from_fn(sf.nlp, |l, _| (rcl[l] - p.xl[l] * dzl[l]) / p.zl[l]);
            Direction { dy, dx, dz, dxl, dzl }
        };

        let steps = |d: &Direction| -> Option<(f64, f64)> {
            let mut ap = max_step_lp(&p.xl, &d.dxl);
            let mut ad = max_step_lp(&p.zl, &d.dzl);
            for b in 0..sf.dims.len() {
                ap = ap.min(max_step_psd(&p.x[b], &d.dx[b])?);
                ad = ad.min(max_step_psd(&p.z[b], &d.dz[b])?);
            }
            Some((ap, ad))
        };

        let aff = direction(0.0, None);
        let Some((ap_aff, ad_aff)) = steps(&aff) else {
            status = Status::NumericalFailure;
            message = "lost positive definiteness".into();
            break;
        };
        let (ap_aff, ad_aff) = (ap_aff.min(1.0), ad_aff.min(1.0));
        let sigma = if nu > 0 && mu > 0.0 {
            let mut c_aff = 0.0;
            for b in 0..sf.dims.len() {
                let xa = &p.x[b] + &aff.dx[b] * cr(ap_aff);
                let za = &p.z[b] + &aff.dz[b] * cr(ad_aff);
                c_aff += herm_inner(&xa, &za);
            }
            for l in 0..sf.nlp {
                if !sf.is_log(l) {
                    c_aff += (p.xl[l] + ap_aff * aff.dxl[l]) * (p.zl[l] + ad_aff * aff.dzl[l]);
                }
            }
            ((c_aff / nu as f64) / mu).clamp(0.0, 1.0).powi(3)
        } else {
            0.0
        };
        let corr_m: Vec<CMat> = (0..sf.dims.len()).map(|b| &aff.dx[b] * &aff.dz[b]).collect();
        let corr_l = aff.dxl.component_mul(&aff.dzl);
        let dir = direction(sigma * mu, Some((&corr_m, &corr_l)));
        let Some((ap, ad)) = steps(&dir) else {
            status = Status::NumericalFailure;
            message = "lost positive definiteness".into();
            break;
        };
        let gamma = 0.9 + 0.09 * ap_aff.min(ad_aff);
        let ap = (gamma * ap).min(1.0);
        let ad = (gamma * ad).min(1.0);
        for b in 0..sf.dims.len() {
            p.x[b] = hermitian_part(&(&p.x[b] + &dir.dx[b] * cr(ap)));
            p.z[b] = hermitian_part(&(&p.z[b] + &dir.dz[b] * cr(ad)));
        }
        p.xl += &dir.dxl * ap;
        p.zl += &dir.dzl * ad;
        p.y += &dir.dy * ad;

        if ap.max(ad) < 1e-9 {
            small_steps += 1;
            if small_steps >= 3 {
                status = Status::NumericalFailure;
                message = format!("stalled; gap {gap_rel:.2e}");
                break;
            }
        } else {
            small_steps = 0;
        }
    }

    if status == Status::NumericalFailure && last_ray <= 1e-5 {
        status = Status::Infeasible;
        message = format!("primal infeasible (dual ray at breakdown, ratio {last_ray:.1e})");
    }

    let values = prog
        .blocks
        .iter()
        .zip(&sf.block_map)
        .map(|(b, &(is_psd, idx))| {
            if is_psd {
                BlockValue::Matrix(p.x[idx].clone())
            } else {
                BlockValue::Real(RVec::from_fn(b.dim, |i, _| p.xl[idx + i]))
            }
        })
        .collect();
    // Prepared objective is maximized; its bound is minus the dual objective.
    let mut dobj = sf.b.dot(&p.y);
    for l in 0..sf.nlp {
        if sf.is_log(l) {
            let w = sf.logw[l];
            dobj += w - w * (w / p.zl[l]).ln();
        }
    }
    let dual_bound = if status == Status::Optimal { Some(-dobj) } else { None };
    Ok(RawSolution { status, values, dual_bound, gap: gap_rel, iterations, message })
}
