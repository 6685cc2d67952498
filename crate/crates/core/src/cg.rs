//! Conjugate gradients on flat coefficient vectors.
//!
//! Every reduced optimality system in this crate is `I + (compact positive
//! part)` under a uniform inner-product weight, so plain CG with an
//! absolute residual threshold converges in a handful of iterations and
//! needs no preconditioning. The weight only affects how the residual is
//! reported, not the iteration itself.

use crate::error::{invalid, Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgReport<S> {
    pub iterations: usize,
    pub residual: S,
}

fn dot<S: Real>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

/// Solve `apply(x) = rhs` for a self-adjoint positive definite map.
///
/// `weight` scales the squared Euclidean norm into the problem's inner
/// product; the iteration stops once the weighted residual norm drops to
/// `tol_abs`. `trace`, when given, receives every accepted iterate
/// (including the initial guess).
pub fn solve<S: Real>(
    mut apply: impl FnMut(&[S]) -> Vec<S>,
    rhs: &[S],
    x0: Vec<S>,
    weight: S,
    tol_abs: S,
    max_iter: usize,
    mut trace: Option<&mut Vec<Vec<S>>>,
) -> Result<(Vec<S>, CgReport<S>)> {
    if x0.len() != rhs.len() {
        return Err(invalid("initial guess and right-hand side differ in length"));
    }
    if !(weight > S::zero()) || !(tol_abs > S::zero()) {
        return Err(invalid("weight and tolerance must be positive"));
    }
    let mut x = x0;
    let ax = apply(&x);
    let mut r: Vec<S> = rhs.iter().zip(&ax).map(|(b, a)| *b - *a).collect();
    let mut p = r.clone();
    let mut rs = dot(&r, &r);
    if let Some(t) = trace.as_deref_mut() {
        t.push(x.clone());
    }
    for iteration in 0..max_iter {
        let residual = (weight * rs).sqrt();
        if residual <= tol_abs {
            return Ok((
                x,
                CgReport {
                    iterations: iteration,
                    residual,
                },
            ));
        }
        let ap = apply(&p);
        let curvature = dot(&p, &ap);
        if !(curvature > S::zero()) {
            return Err(invalid(
                "reduced operator lost positive definiteness during CG",
            ));
        }
        let alpha = rs / curvature;
        for ((xi, pi), (ri, api)) in x.iter_mut().zip(&p).zip(r.iter_mut().zip(&ap)) {
            *xi += alpha * *pi;
            *ri -= alpha * *api;
        }
        let rs_next = dot(&r, &r);
        let beta = rs_next / rs;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = *ri + beta * *pi;
        }
        rs = rs_next;
        if let Some(t) = trace.as_deref_mut() {
            t.push(x.clone());
        }
    }
    let residual = (weight * rs).sqrt();
    if residual <= tol_abs {
        return Ok((
            x,
            CgReport {
                iterations: max_iter,
                residual,
            },
        ));
    }
    Err(Error::NonConvergence {
        what: "cg".into(),
        iterations: max_iter,
        residual: residual.as_f64(),
    })
}
