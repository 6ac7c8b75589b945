//! Precoder update under the sum-power and CRB constraints.
//!
//! For multipliers `(λ0, μ)` the stationary precoder is
//! `V = (G − 2μ J + λ0 I)⁻¹ Hᴴ Fᴴ W` with
//! `G = Hᴴ Fᴴ W F H + H_siᴴ H_si` and `J = Āᴴ Σ⁻¹ Ā`. The CRB constraint
//! `1/ζ ≤ 2 Tr(Vᴴ J V)` is a lower bound on Fisher information, hence the
//! minus sign on its multiplier. `λ0` is found by bisection on the power
//! (secular) equation for each trial `μ`, and `μ` by an outer bisection on
//! the CRB residual.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{JcasError, Result};
use crate::linalg::{eigh_desc, max_eigenvalue, trace_re, CMat};
use crate::sensing_crb::crb_from_trace;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BisectionSettings {
    /// Relative tolerance on the active constraint.
    pub tol: f64,
    pub max_steps: usize,
    /// Largest CRB multiplier tried before declaring infeasibility.
    pub mu_max: f64,
}

impl Default for BisectionSettings {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_steps: 200,
            mu_max: 1e12,
        }
    }
}

/// Inputs of one precoder update.
pub struct PrecoderProblem<'a> {
    pub h_eff: &'a CMat,
    /// Effective SI channel; `None` drops the SI term (communications only).
    pub h_si: Option<&'a CMat>,
    pub combiner: &'a CMat,
    pub weight: &'a CMat,
    /// `Āᴴ Σ⁻¹ Ā`; required when `crb_threshold` is set.
    pub fisher_kernel: Option<&'a CMat>,
    pub power: f64,
    pub crb_threshold: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct PrecoderSolution {
    pub v: CMat,
    pub lambda0: f64,
    pub mu: f64,
    /// Single-snapshot CRB at `v` when a Fisher kernel was supplied.
    pub crb: Option<f64>,
}

impl<'a> PrecoderProblem<'a> {
    /// `G` and the right-hand side `Hᴴ Fᴴ W`.
    pub fn normal_equations(&self) -> (CMat, CMat) {
        let fh = self.combiner * self.h_eff;
        let rhs = self.h_eff.adjoint() * self.combiner.adjoint() * self.weight;
        let mut g = fh.adjoint() * self.weight * &fh;
        if let Some(hsi) = self.h_si {
            g += hsi.adjoint() * hsi;
        }
        (g, rhs)
    }
}

/// Spectral form of `M0 = G − 2μJ` projected onto the right-hand side.
struct Secular {
    eig: Vec<f64>,
    basis: CMat,
    proj: CMat,
    row_weight: Vec<f64>,
    scale: f64,
    null_tol: f64,
}

impl Secular {
    fn new(m0: &CMat, rhs: &CMat) -> Self {
        let (eig, basis) = eigh_desc(m0);
        let proj = basis.adjoint() * rhs;
        let row_weight = (0..proj.nrows()).map(|i| proj.row(i).norm_squared()).collect();
        let scale = eig.iter().fold(0.0f64, |a, e| a.max(e.abs())).max(f64::MIN_POSITIVE);
        Self {
            eig,
            basis,
            proj,
            row_weight,
            scale,
            null_tol: 1e-10 * scale,
        }
    }

    fn min_eig(&self) -> f64 {
        *self.eig.last().unwrap()
    }

    /// Denominator `e_i + λ`, or `None` for directions dropped as numerically null.
    fn denom(&self, i: usize, lambda: f64) -> Option<f64> {
        let den = self.eig[i] + lambda;
        (den.abs() > self.null_tol).then_some(den)
    }

    fn power(&self, lambda: f64) -> f64 {
        (0..self.eig.len())
            .filter_map(|i| self.denom(i, lambda).map(|d| self.row_weight[i] / (d * d)))
            .sum()
    }

    /// Weight of the right-hand side on directions where `e_i + λ` vanishes.
    fn null_weight(&self, lambda: f64) -> f64 {
        (0..self.eig.len())
            .filter(|&i| self.denom(i, lambda).is_none())
            .map(|i| self.row_weight[i])
            .sum()
    }

    fn precoder(&self, lambda: f64) -> CMat {
        let mut scaled = self.proj.clone();
        for i in 0..self.eig.len() {
            let s = self.denom(i, lambda).map_or(0.0, |d| 1.0 / d);
            scaled.row_mut(i).scale_mut(s);
        }
        &self.basis * scaled
    }
}

/// Solves the power-constrained problem for a fixed `μ`.
fn solve_power(
    g: &CMat,
    rhs: &CMat,
    kernel: Option<&CMat>,
    mu: f64,
    power: f64,
    settings: &BisectionSettings,
) -> (CMat, f64) {
    let m0 = match kernel {
        Some(j) if mu > 0.0 => g - j * Complex64::new(2.0 * mu, 0.0),
        _ => g.clone(),
    };
    let sec = Secular::new(&m0, rhs);
    let total: f64 = sec.row_weight.iter().sum();
    let shift = if sec.min_eig() < -sec.null_tol { -sec.min_eig() } else { 0.0 };

    // unconstrained (minimum-norm) solution when M0 is PSD and the power fits
    if shift == 0.0 && sec.null_weight(0.0) <= 1e-20 * total.max(f64::MIN_POSITIVE) {
        let p0 = sec.power(0.0);
        if p0 <= power {
            return (sec.precoder(0.0), 0.0);
        }
    }

    // power(λ) decreases on (shift, ∞); find the crossing with `power`
    let lo_edge = shift + 1e-12 * sec.scale;
    if shift > 0.0 && sec.power(lo_edge) < power && sec.null_weight(shift) <= 1e-20 * total {
        // hard case: fill the remaining power along the bottom eigenvector
        let mut v = sec.precoder(shift);
        let rest = (power - trace_re(&(v.adjoint() * &v))).max(0.0);
        let bottom = sec.basis.column(sec.eig.len() - 1).into_owned();
        let mut col = v.column(0).into_owned();
        col += bottom * Complex64::new(rest.sqrt(), 0.0);
        v.set_column(0, &col);
        return (v, shift);
    }
    let mut lo = shift;
    let mut hi = shift + sec.eig[0].abs().max(1.0);
    while sec.power(hi) > power {
        hi = shift + 2.0 * (hi - shift);
    }
    let mut lambda = hi;
    for _ in 0..settings.max_steps.max(1) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let p = sec.power(mid);
        if p > power {
            lo = mid;
        } else {
            hi = mid;
        }
        lambda = hi;
        if (p - power).abs() <= 1e-12 * power {
            lambda = mid;
            break;
        }
    }
    (sec.precoder(lambda), lambda)
}

fn fisher(v: &CMat, kernel: &CMat) -> f64 {
    trace_re(&(v.adjoint() * kernel * v))
}

/// Precoder update with the multiplier searches.
pub fn precoder_update(problem: &PrecoderProblem, settings: &BisectionSettings) -> Result<PrecoderSolution> {
    if !(problem.power > 0.0) {
        return Err(JcasError::InvalidArgument("transmit power must be positive".into()));
    }
    let (g, rhs) = problem.normal_equations();
    let kernel = problem.fisher_kernel;
    let crb_of = |v: &CMat| kernel.map(|j| crb_from_trace(fisher(v, j)).unwrap_or(f64::INFINITY));

    let (v0, l0) = solve_power(&g, &rhs, None, 0.0, problem.power, settings);
    let zeta = match (problem.crb_threshold, kernel) {
        (Some(z), Some(_)) => z,
        (Some(_), None) => {
            return Err(JcasError::InvalidArgument("CRB threshold needs a Fisher kernel".into()))
        }
        _ => {
            let crb = crb_of(&v0);
            return Ok(PrecoderSolution { v: v0, lambda0: l0, mu: 0.0, crb });
        }
    };
    let j = kernel.unwrap();
    let crb0 = crb_of(&v0).unwrap();
    if crb0 <= zeta {
        return Ok(PrecoderSolution { v: v0, lambda0: l0, mu: 0.0, crb: Some(crb0) });
    }

    // best CRB any precoder of this power can reach
    let best = 0.5 / (problem.power * max_eigenvalue(j)).max(f64::MIN_POSITIVE);
    if best > zeta {
        return Err(JcasError::CrbInfeasible { achieved: best, zeta });
    }

    let scale = (trace_re(&g).abs() / trace_re(j).abs().max(f64::MIN_POSITIVE)).max(1e-300);
    let mut mu_lo = 0.0;
    let mut mu_hi = 1e-8 * scale;
    let mut hi_sol = loop {
        let (v, l) = solve_power(&g, &rhs, Some(j), mu_hi, problem.power, settings);
        let crb = crb_of(&v).unwrap();
        if crb <= zeta {
            break (v, l, crb);
        }
        if mu_hi > settings.mu_max {
            return Err(JcasError::CrbInfeasible { achieved: crb, zeta });
        }
        mu_lo = mu_hi;
        mu_hi *= 2.0;
    };
    for _ in 0..settings.max_steps {
        if (zeta - hi_sol.2) <= 1e-3 * settings.tol * zeta {
            break;
        }
        let mid = 0.5 * (mu_lo + mu_hi);
        if mid <= mu_lo || mid >= mu_hi {
            break;
        }
        let (v, l) = solve_power(&g, &rhs, Some(j), mid, problem.power, settings);
        let crb = crb_of(&v).unwrap();
        if crb <= zeta {
            mu_hi = mid;
            hi_sol = (v, l, crb);
        } else {
            mu_lo = mid;
        }
    }
    Ok(PrecoderSolution {
        v: hi_sol.0,
        lambda0: hi_sol.1,
        mu: mu_hi,
        crb: Some(hi_sol.2),
    })
}

/// `Tr(V Vᴴ)`.
pub fn total_power(v: &CMat) -> f64 {
    v.norm_squared()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{cn_sample, seeded_rng};
    use crate::linalg::{c, identity};

    fn random_mat(rows: usize, cols: usize, seed: u64) -> CMat {
        let mut rng = seeded_rng(seed, 77);
        CMat::from_fn(rows, cols, |_, _| cn_sample(&mut rng, 1.0))
    }

    struct Fixture {
        h: CMat,
        hsi: CMat,
        f: CMat,
        w: CMat,
        j: CMat,
    }

    fn fixture(seed: u64) -> Fixture {
        let h = random_mat(5, 15, seed);
        let v = random_mat(15, 2, seed + 1);
        let f = crate::optimizer::wmmse::mmse_combiner(&h, &v, 1.0).unwrap();
        let e = crate::optimizer::wmmse::mse_matrix(&h, &v, 1.0).unwrap();
        let w = crate::optimizer::wmmse::weight_matrix(&e, 1.0).unwrap();
        let abar = random_mat(10, 15, seed + 2);
        Fixture { h, hsi: random_mat(10, 15, seed + 3), f, w, j: abar.adjoint() * abar }
    }

    #[test]
    fn unconstrained_solution_is_stationary() {
        let fx = fixture(1);
        let p = PrecoderProblem {
            h_eff: &fx.h,
            h_si: Some(&fx.hsi),
            combiner: &fx.f,
            weight: &fx.w,
            fisher_kernel: Some(&fx.j),
            power: 1e12,
            crb_threshold: Some(f64::INFINITY),
        };
        let sol = precoder_update(&p, &BisectionSettings::default()).unwrap();
        assert_eq!(sol.mu, 0.0);
        assert_eq!(sol.lambda0, 0.0);
        let (g, rhs) = p.normal_equations();
        assert!((&g * &sol.v - rhs).norm() < 1e-8);
    }

    #[test]
    fn active_power_constraint_is_met() {
        let fx = fixture(2);
        let p = PrecoderProblem {
            h_eff: &fx.h,
            h_si: Some(&fx.hsi),
            combiner: &fx.f,
            weight: &fx.w,
            fisher_kernel: None,
            power: 1e-3,
            crb_threshold: None,
        };
        let sol = precoder_update(&p, &BisectionSettings::default()).unwrap();
        assert!(sol.lambda0 > 0.0);
        assert!((total_power(&sol.v) - 1e-3).abs() / 1e-3 < 1e-6);
    }

    #[test]
    fn power_decreases_with_lambda() {
        let fx = fixture(3);
        let p = PrecoderProblem {
            h_eff: &fx.h,
            h_si: Some(&fx.hsi),
            combiner: &fx.f,
            weight: &fx.w,
            fisher_kernel: None,
            power: 1.0,
            crb_threshold: None,
        };
        let (g, rhs) = p.normal_equations();
        let mut last = f64::INFINITY;
        for k in 0..40 {
            let lambda = 1e-4 * 1.5f64.powi(k);
            let m = &g + identity(15) * c(lambda, 0.0);
            let v = m.try_inverse().unwrap() * &rhs;
            let pw = total_power(&v);
            assert!(pw < last);
            last = pw;
        }
    }

    #[test]
    fn crb_constraint_is_enforced() {
        let fx = fixture(4);
        let base = PrecoderProblem {
            h_eff: &fx.h,
            h_si: Some(&fx.hsi),
            combiner: &fx.f,
            weight: &fx.w,
            fisher_kernel: Some(&fx.j),
            power: 1.0,
            crb_threshold: None,
        };
        let free = precoder_update(&base, &BisectionSettings::default()).unwrap();
        let zeta = free.crb.unwrap() * 0.5;
        let p = PrecoderProblem { crb_threshold: Some(zeta), ..base };
        let sol = precoder_update(&p, &BisectionSettings::default()).unwrap();
        assert!(sol.mu > 0.0);
        assert!(sol.crb.unwrap() <= zeta * (1.0 + 1e-3));
        assert!(total_power(&sol.v) <= 1.0 * (1.0 + 1e-6));
    }

    #[test]
    fn unreachable_crb_reports_infeasibility() {
        let fx = fixture(5);
        let p = PrecoderProblem {
            h_eff: &fx.h,
            h_si: Some(&fx.hsi),
            combiner: &fx.f,
            weight: &fx.w,
            fisher_kernel: Some(&fx.j),
            power: 1.0,
            crb_threshold: Some(1e-12),
        };
        let err = precoder_update(&p, &BisectionSettings::default()).unwrap_err();
        assert!(err.is_crb_infeasible());
    }
}
