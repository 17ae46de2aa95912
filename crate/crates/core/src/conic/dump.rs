//! Plain-text rendering of a program, for debugging failed subproblems.

use std::fmt::Write;

use super::{Affine, Coef, ConicProgram, Expr, Sense};

fn coef_text(c: &Coef) -> String {
    match c {
        Coef::Matrix(m) => {
            let rows: Vec<String> = m
                .row_iter()
                .map(|r| r.iter().map(|z| format!("{:.6e}{:+.6e}i", z.re, z.im)).collect::<Vec<_>>().join(" "))
                .collect();
            format!("[{}]", rows.join("; "))
        }
        Coef::Vector(v) => {
            format!("[{}]", v.iter().map(|z| format!("{:.6e}{:+.6e}i", z.re, z.im)).collect::<Vec<_>>().join(" "))
        }
        Coef::Real(v) => format!("[{}]", v.iter().map(|x| format!("{x:.6e}")).collect::<Vec<_>>().join(" ")),
    }
}

fn affine_text(a: &Affine) -> String {
    let mut s = String::new();
    for (b, c) in &a.terms {
        let _ = write!(s, "<{}, x{}> + ", coef_text(c), b);
    }
    let _ = write!(s, "{:.6e}", a.constant);
    s
}

pub fn dump_program(p: &ConicProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "program: {} blocks, {} constraints, {} fixed", p.blocks.len(), p.constraints.len(), p.fixed.len());
    for (i, b) in p.blocks.iter().enumerate() {
        let _ = writeln!(out, "block x{i}: {:?} dim {} scale {:?}", b.kind, b.dim, b.scale);
    }
    let _ = writeln!(out, "maximize {}", affine_text(&p.objective.linear));
    for l in &p.objective.logs {
        let _ = writeln!(out, "  + {:.6e} ln({})", l.weight, affine_text(&l.arg));
    }
    for c in &p.constraints {
        let op = match c.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "==",
        };
        let lhs = match &c.expr {
            Expr::Affine(a) => affine_text(a),
            Expr::Quadratic(q) => format!("x{}^H {} x{} + {}", q.block, coef_text(&Coef::Matrix(q.matrix.clone())), q.block, affine_text(&q.affine)),
        };
        let _ = writeln!(out, "{}: {} {} {:.6e}", c.label, lhs, op, c.rhs);
    }
    for f in &p.fixed {
        let _ = writeln!(out, "fix x{}[{}] = {:.6e}{:+.6e}i", f.block, f.index, f.value.re, f.value.im);
    }
    out
}
