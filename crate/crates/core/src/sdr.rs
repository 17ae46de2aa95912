//! Post-processing of relaxed solutions: numerical rank, rank reduction,
//! rank-one extraction and Gaussian randomization.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::channel::complex_gaussian;
use crate::conic::herm_basis;
use crate::error::{Error, Result};
use crate::linalg::{cr, herm_eig, psd_sqrt, re_trace_prod, CMat, CVec, RMat, RVec};

/// `λ2/λ1` at or below this declares a matrix rank one.
pub const RANK_ONE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub eigenvalues: Vec<f64>,
    pub rank: usize,
    pub trace: f64,
}

/// Eigenvalues and the number of them above `tol * λ_max`.
pub fn rank_report(w: &CMat, tol: f64) -> RankReport {
    let (eigenvalues, _) = herm_eig(w);
    let lmax = eigenvalues.first().copied().unwrap_or(0.0);
    let rank = if lmax <= 0.0 { 0 } else { eigenvalues.iter().filter(|&&l| l > tol * lmax).count() };
    let trace = (0..w.nrows()).map(|i| w[(i, i)].re).sum();
    RankReport { eigenvalues, rank, trace }
}

/// `√λ1 v1` when `W` is numerically rank one.
pub fn rank_one_extract(w: &CMat, tol: f64) -> Result<CVec> {
    let (vals, vecs) = herm_eig(w);
    if vals.is_empty() || vals[0] <= 0.0 {
        return Ok(CVec::zeros(w.nrows()));
    }
    let ratio = vals.get(1).copied().unwrap_or(0.0).max(0.0) / vals[0];
    if ratio > tol {
        return Err(Error::RankTooHigh { ratio });
    }
    Ok(vecs.column(0) * cr(vals[0].sqrt()))
}

/// Principal eigenvector scaled to carry the whole trace.
pub fn principal_component(w: &CMat) -> CVec {
    let (vals, vecs) = herm_eig(w);
    if vals.is_empty() {
        return CVec::zeros(0);
    }
    let tr: f64 = vals.iter().map(|l| l.max(0.0)).sum();
    vecs.column(0) * cr(tr.sqrt())
}

/// One trace-linear row across blocks: `Σ_b Re tr(A_b X_b)`; `None` skips a block.
pub type LinearRow = Vec<Option<CMat>>;

fn row_value(row: &LinearRow, blocks: &[CMat]) -> f64 {
    row.iter().zip(blocks).filter_map(|(a, x)| a.as_ref().map(|a| re_trace_prod(a, x))).sum()
}

/// Factor `X = V V^H` keeping eigenvalues above `floor`.
fn factor(x: &CMat, floor: f64) -> CMat {
    let (vals, vecs) = herm_eig(x);
    let keep: Vec<usize> = (0..vals.len()).filter(|&k| vals[k] > floor).collect();
    let mut v = CMat::zeros(x.nrows(), keep.len());
    for (j, &k) in keep.iter().enumerate() {
        v.set_column(j, &(vecs.column(k) * cr(vals[k].sqrt())));
    }
    v
}

/// Null vector of the rows restricted to the current faces, if one exists.
fn face_null_vector(rows: &[&LinearRow], vs: &[CMat]) -> Option<Vec<CMat>> {
    let ranks: Vec<usize> = vs.iter().map(|v| v.ncols()).collect();
    let dim: usize = ranks.iter().map(|r| r * r).sum();
    if dim == 0 {
        return None;
    }
    let bases: Vec<_> = ranks.iter().map(|&r| herm_basis(r)).collect();
    let mut mat = RMat::zeros(rows.len(), dim);
    for (k, row) in rows.iter().enumerate() {
        let mut off = 0;
        for (b, v) in vs.iter().enumerate() {
            if let Some(a) = &row[b] {
                let reduced = v.adjoint() * a * v;
                for (idx, e) in bases[b].iter().enumerate() {
                    mat[(k, off + idx)] = e.iter().map(|&(p, q, val)| (val * reduced[(q, p)]).re).sum();
                }
            }
            off += ranks[b] * ranks[b];
        }
    }
    // Normalize rows so the null-space test is scale free.
    for k in 0..mat.nrows() {
        let n = mat.row(k).norm();
        if n > 0.0 {
            mat.row_mut(k).scale_mut(1.0 / n);
        }
    }
    if rows.len() >= dim {
        let sv = mat.clone().singular_values();
        let smax = sv.max();
        if sv.min() > 1e-10 * smax {
            return None;
        }
    }
    let gram = mat.transpose() * &mat;
    let eig = nalgebra::SymmetricEigen::new(gram);
    let kmin = eig.eigenvalues.iter().enumerate().fold((0, f64::INFINITY), |acc, (k, &l)| if l < acc.1 { (k, l) } else { acc }).0;
    let coords: RVec = eig.eigenvectors.column(kmin).into_owned();
    let mut out = Vec::with_capacity(vs.len());
    let mut off = 0;
    for (b, &r) in ranks.iter().enumerate() {
        let mut d = CMat::zeros(r, r);
        for (idx, e) in bases[b].iter().enumerate() {
            for &(p, q, val) in e {
                d[(p, q)] += val * coords[off + idx];
            }
        }
        out.push(d);
        off += r * r;
    }
    Some(out)
}

/// Purification: moves an optimal point of a trace-linear program along its
/// optimal face until no further rank can be removed without changing a
/// constraint value. `rows` are the constraints to preserve; `objective`, when
/// given, is preserved exactly as well and dropped only if it blocks progress
/// and its value is stationary along the step.
pub fn rank_reduce(blocks: &[CMat], rows: &[LinearRow], objective: Option<&LinearRow>) -> Result<Vec<CMat>> {
    let mut x: Vec<CMat> = blocks.iter().map(crate::linalg::hermitian_part).collect();
    let total: usize = x.iter().map(|b| b.nrows()).sum();
    for _ in 0..=total {
        let lmax = x.iter().map(|b| herm_eig(b).0.first().copied().unwrap_or(0.0)).fold(0.0, f64::max);
        if lmax <= 0.0 {
            break;
        }
        let floor = 1e-12 * lmax;
        let vs: Vec<CMat> = x.iter().map(|b| factor(b, floor)).collect();
        let mut with_obj: Vec<&LinearRow> = rows.iter().collect();
        if let Some(o) = objective {
            with_obj.push(o);
        }
        let (delta, check_obj) = match face_null_vector(&with_obj, &vs) {
            Some(d) => (d, false),
            None if objective.is_some() => match face_null_vector(&rows.iter().collect::<Vec<_>>(), &vs) {
                Some(d) => (d, true),
                None => break,
            },
            None => break,
        };
        let mut dmax = f64::NEG_INFINITY;
        let mut dmin = f64::INFINITY;
        for d in &delta {
            let (vals, _) = herm_eig(d);
            if let (Some(&hi), Some(&lo)) = (vals.first(), vals.last()) {
                dmax = dmax.max(hi);
                dmin = dmin.min(lo);
            }
        }
        let (sign, top) = if dmax >= -dmin { (1.0, dmax) } else { (-1.0, -dmin) };
        if !(top > 1e-14) {
            return Err(Error::NumericalFailure("degenerate null-space step in rank reduction".into()));
        }
        let next: Vec<CMat> = vs
            .iter()
            .zip(&delta)
            .map(|(v, d)| {
                let r = v.ncols();
                let inner = CMat::identity(r, r) - d * cr(sign / top);
                crate::linalg::hermitian_part(&(v * inner * v.adjoint()))
            })
            .collect();
        if check_obj {
            let o = objective.unwrap();
            let before = row_value(o, &x);
            let after = row_value(o, &next);
            if (after - before).abs() > 1e-9 * before.abs().max(1e-300) {
                break;
            }
        }
        x = next;
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomizationSettings {
    pub draws: usize,
    pub seed: u64,
}

impl Default for RandomizationSettings {
    fn default() -> Self {
        Self { draws: 500, seed: 0 }
    }
}

/// How a normalized candidate `ū` is pulled back into the feasible region.
#[derive(Debug, Clone)]
pub enum Projection {
    /// Scale the reflect part by `ρ = min(1, √(budget / ū^H K ū))`; `K` must
    /// vanish on the last coordinate.
    AmplitudeBackoff { kernel: CMat, budget: f64 },
    /// Set every reflect entry to unit modulus.
    UnitModulus,
    /// Force every reflect entry to modulus `β`.
    FixedModulus(f64),
    None,
}

impl Projection {
    pub fn apply(&self, ub: &mut CVec) {
        let n = ub.len() - 1;
        match self {
            Projection::AmplitudeBackoff { kernel, budget } => {
                let amp = ub.dotc(&(kernel * &*ub)).re;
                if amp > *budget && amp > 0.0 {
                    let rho = (budget / amp).sqrt();
                    for k in 0..n {
                        ub[k] *= rho;
                    }
                }
            }
            Projection::UnitModulus | Projection::FixedModulus(_) => {
                let beta = if let Projection::FixedModulus(b) = self { *b } else { 1.0 };
                for k in 0..n {
                    let arg = ub[k].arg();
                    ub[k] = crate::linalg::C64::from_polar(beta, if ub[k].norm() > 0.0 { arg } else { 0.0 });
                }
            }
            Projection::None => {}
        }
    }
}

#[derive(Debug, Clone)]
pub struct Randomized {
    pub u_bar: CVec,
    pub objective: f64,
    /// 0 for the principal-eigenvector candidate, `r` for draw `r`.
    pub candidate: usize,
}

/// Draw `count` vectors `X^{1/2} g`, one ChaCha20 substream per draw.
pub fn gaussian_draws(x: &CMat, count: usize, seed: u64) -> Vec<CVec> {
    let root = psd_sqrt(x);
    let n = x.nrows();
    (0..count)
        .map(|r| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(r as u64 + 1);
            let g = CVec::from_fn(n, |_, _| complex_gaussian(&mut rng));
            &root * g
        })
        .collect()
}

/// Best feasible rank-one candidate drawn around `U`. The evaluator returns
/// the objective of a feasible candidate and `None` otherwise.
pub fn gaussian_randomize_u<F>(u: &CMat, projection: &Projection, evaluator: F, settings: &RandomizationSettings) -> Result<Randomized>
where
    F: Fn(&CVec) -> Option<f64>,
{
    let n1 = u.nrows();
    let mut candidates = vec![herm_eig(u).1.column(0).into_owned()];
    candidates.extend(gaussian_draws(u, settings.draws, settings.seed));
    let mut best: Option<Randomized> = None;
    for (idx, mut r) in candidates.into_iter().enumerate() {
        let last = r[n1 - 1];
        if last.norm() < 1e-12 * r.norm().max(1e-300) {
            continue;
        }
        r /= last;
        r[n1 - 1] = cr(1.0);
        projection.apply(&mut r);
        if let Some(obj) = evaluator(&r) {
            if best.as_ref().is_none_or(|b| obj > b.objective) {
                best = Some(Randomized { u_bar: r, objective: obj, candidate: idx });
            }
        }
    }
    best.ok_or(Error::NoFeasibleCandidate { draws: settings.draws + 1 })
}
