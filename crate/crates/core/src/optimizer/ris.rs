//! RIS phase design: the quadratic form of the objective in `φ` and the
//! majorization-minimization iteration over the unit-modulus set.
//!
//! With `P = V Vᴴ`, `Q = Fᴴ W F` and `C = H_ib P H_ibᴴ`, the `φ`-dependent
//! part of `Tr(E_SI) + Tr(W E)` is `φᴴ Λ φ + 2 Re{dᵀ φ}` where
//!
//! ```text
//! Λ = (H_biᴴ H_bi) ⊙ Cᵀ + (H_jiᴴ Q H_ji) ⊙ Cᵀ
//! d = diag(H_ib P (H_bb^lᴴ H_bi + H_jbᴴ Q H_ji)) − diag(H_ib V W F H_ji)
//! ```

use num_complex::Complex64;

use crate::channels::ChannelSet;
use crate::linalg::{max_eigenvalue, CMat, CVec};
use crate::optimizer::RisPhase;

/// `(Λ, d)` of the RIS-restricted objective.
pub fn ris_quadratics(v: &CMat, f: &CMat, w: &CMat, channels: &ChannelSet, include_si: bool) -> (CMat, CVec) {
    let q = f.adjoint() * w * f;
    let l = &channels.h_ib * v;
    let c_t = (&l * l.adjoint()).transpose();

    let user_gram = channels.h_ji.adjoint() * &q * &channels.h_ji;
    let mut lambda = user_gram.component_mul(&c_t);
    if include_si {
        let si_gram = channels.h_bi.adjoint() * &channels.h_bi;
        lambda += si_gram.component_mul(&c_t);
    }

    let mut cross = channels.h_jb.adjoint() * &q * &channels.h_ji;
    if include_si {
        cross += channels.h_bb_los.adjoint() * &channels.h_bi;
    }
    let y = v.adjoint() * cross - w * f * &channels.h_ji;
    let d = CVec::from_iterator(
        l.nrows(),
        (0..l.nrows()).map(|i| (0..l.ncols()).map(|k| l[(i, k)] * y[(k, i)]).sum()),
    );
    (lambda, d)
}

/// `f(φ) = φᴴ Λ φ + 2 Re{dᵀ φ}`.
pub fn ris_objective(phi: &CVec, lambda: &CMat, d: &CVec) -> f64 {
    let quad = phi.dotc(&(lambda * phi)).re;
    let lin: Complex64 = d.iter().zip(phi.iter()).map(|(a, b)| a * b).sum();
    quad + 2.0 * lin.re
}

/// One MM step: `q = (λ_max I − Λ) φ − d*`, `φ⁺ = exp(i ∠q)`.
/// Elements with `q_i = 0` keep their previous phase.
pub fn mm_step(phi: &CVec, lambda: &CMat, d: &CVec, lambda_max: f64) -> CVec {
    let q = phi * Complex64::new(lambda_max, 0.0) - lambda * phi - d.conjugate();
    CVec::from_iterator(
        phi.len(),
        q.iter().zip(phi.iter()).map(|(qi, pi)| {
            let m = qi.norm();
            if m > 0.0 && m.is_finite() {
                qi / m
            } else {
                *pi
            }
        }),
    )
}

/// Result of [`ris_optimize`].
#[derive(Clone, Debug)]
pub struct RisOptimization {
    pub phase: RisPhase,
    /// `f` at the starting point followed by `f` after each step.
    pub objective: Vec<f64>,
    /// Every iterate including the starting point, kept when requested.
    pub iterates: Vec<CVec>,
}

impl RisOptimization {
    pub fn iterations(&self) -> usize {
        self.objective.len() - 1
    }
}

/// Repeats [`mm_step`] until `|f⁺ − f| / |f⁺| ≤ tol` (absolute when `f⁺ = 0`)
/// or `max_iter` steps.
pub fn ris_optimize(phi0: &RisPhase, lambda: &CMat, d: &CVec, tol: f64, max_iter: usize) -> RisOptimization {
    ris_optimize_offset(phi0, lambda, d, 0.0, tol, max_iter, false)
}

/// [`ris_optimize`] with the stopping test taken on `f + offset`.
///
/// `f` leaves out every `φ`-independent term of the objective it was built
/// from, so its magnitude carries no meaning and a relative test on it can
/// stop far too early or too late. Passing that constant as `offset` makes
/// the test relative to the full objective. With `keep_iterates` every
/// iterate is returned, starting point included.
pub fn ris_optimize_offset(
    phi0: &RisPhase,
    lambda: &CMat,
    d: &CVec,
    offset: f64,
    tol: f64,
    max_iter: usize,
    keep_iterates: bool,
) -> RisOptimization {
    let lambda_max = max_eigenvalue(lambda);
    let mut phi = phi0.as_vector().clone();
    let mut f = ris_objective(&phi, lambda, d);
    let mut objective = vec![f];
    let mut iterates = if keep_iterates { vec![phi.clone()] } else { Vec::new() };
    for _ in 0..max_iter {
        let next = mm_step(&phi, lambda, d, lambda_max);
        let f_next = ris_objective(&next, lambda, d);
        phi = next;
        objective.push(f_next);
        if keep_iterates {
            iterates.push(phi.clone());
        }
        let change = (f_next - f).abs();
        let scale = (f_next + offset).abs();
        let done = if scale == 0.0 { change <= tol } else { change / scale <= tol };
        f = f_next;
        if done {
            break;
        }
    }
    RisOptimization {
        phase: RisPhase::from_unit_vector(phi),
        objective,
        iterates,
    }
}
