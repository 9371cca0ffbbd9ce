//! The doubly regularized trace, rdsTr, the cusp eta invariant with its
//! identities, the Dirac model family and spectral oracles for η.
//!
//! η(A) = (1/2πi)·Tr̿(A⁻¹∂_tA + ∂_tA·A⁻¹) + μ(Ĩ(A)). The doubly regularized
//! trace Tr̿ has a symbolic path for resolvent sums, a plain integral when the
//! integrand decays, and otherwise the finite part of the p-fold iterated
//! integral g_p(T), read off by an asymptotic fit.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cuspmodel::{btr_of_product, compose, inverse, trace_defect, CircleSymbol, CssSymbols, ModelCuspOperator};
use crate::error::{Error, Result};
use crate::groups::{Sampler, SuspendedFamily};
use crate::linalg::{c, eye, fro, hermitian_eigenvalues, inv, is_hermitian, smallest_singular_value, trace, CMat, C64, I};
use crate::numerics::{asymptotic_fit_resolving, gauss_legendre, geometric_grid, pairwise_sum, quad, AsymptoticBasis, QuadSpec, Rule};
use crate::psorders::{BigradedOrder, PSFamily};
use crate::star::{itilde, tilde_inv, tilde_mul, Grid2, TildeElement};
use crate::susdet::{lifted_det, mu};

// ---------------------------------------------------------------------------
// scalar trace families

/// Scalar function of the suspension parameter, typically t ↦ bTr(…).
pub trait TraceFamily: Sync {
    fn value(&self, t: f64) -> C64;

    /// d^p/dt^p. The default is a central difference improved by two
    /// Richardson steps.
    fn derivative(&self, t: f64, p: usize) -> C64 {
        fd_derivative(|x| self.value(x), t, p, 0.04)
    }

    /// Symbol order m: f(t) = O(|t|^m) at infinity.
    fn order(&self) -> f64;
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// p-th derivative from centred p-th differences at steps h, h/2, h/4,
/// extrapolated to O(h⁶).
pub fn fd_derivative(f: impl Fn(f64) -> C64, t: f64, p: usize, h: f64) -> C64 {
    if p == 0 {
        return f(t);
    }
    let stencil = |h: f64| -> C64 {
        let mut s = C64::new(0.0, 0.0);
        for k in 0..=p {
            let x = t + (0.5 * p as f64 - k as f64) * h;
            let w = binomial(p, k) * if k % 2 == 0 { 1.0 } else { -1.0 };
            s += f(x) * w;
        }
        s / h.powi(p as i32)
    };
    let (d0, d1, d2) = (stencil(h), stencil(0.5 * h), stencil(0.25 * h));
    let e1 = (d1 * 4.0 - d0) / 3.0;
    let e2 = (d2 * 4.0 - d1) / 3.0;
    (e2 * 16.0 - e1) / 15.0
}

/// A trace family given by a closure; derivatives by finite differences.
#[derive(Clone)]
pub struct ClosureTrace {
    f: Arc<dyn Fn(f64) -> C64 + Send + Sync>,
    order: f64,
}

impl ClosureTrace {
    pub fn new(order: f64, f: impl Fn(f64) -> C64 + Send + Sync + 'static) -> Self {
        ClosureTrace { f: Arc::new(f), order }
    }
}

impl TraceFamily for ClosureTrace {
    fn value(&self, t: f64) -> C64 {
        (self.f)(t)
    }
    fn order(&self) -> f64 {
        self.order
    }
}

/// d^p/dt^p (λ + it)⁻¹ = (−1)^p p! i^p (λ + it)^{−p−1}.
fn resolvent_derivative(lambda: C64, t: f64, p: usize) -> C64 {
    let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
    I.powi(p as i32) * (sign * factorial(p)) * (lambda + I * t).powi(-(p as i32) - 1)
}

/// Σ_k w_k (λ_k + it)⁻¹ with Re λ_k ≠ 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolventSum {
    /// (weight, λ) pairs.
    pub terms: Vec<(C64, C64)>,
}

impl ResolventSum {
    pub fn new(terms: Vec<(C64, C64)>) -> Result<Self> {
        if terms.iter().any(|(_, l)| l.re == 0.0) {
            return Err(Error::ZeroMode);
        }
        Ok(ResolventSum { terms })
    }

    pub fn scalar(lambda: f64) -> Result<Self> {
        Self::new(vec![(c(1.0, 0.0), c(lambda, 0.0))])
    }

    /// Tr (P + it)⁻¹ for Hermitian P, via its eigenvalues.
    pub fn from_hermitian(p: &CMat, weight: C64) -> Result<Self> {
        let defect = is_hermitian(p, 0.0);
        if defect > 1e-12 {
            return Err(Error::NotSelfAdjoint(defect));
        }
        let eig = hermitian_eigenvalues(p);
        if eig.iter().any(|l| l.abs() < 1e-12) {
            return Err(Error::ZeroMode);
        }
        Self::new(eig.into_iter().map(|l| (weight, c(l, 0.0))).collect())
    }

    /// Closed form: the finite part of ∫_{−T}^{T} (λ + it)⁻¹ dt is π·sgn(Re λ).
    pub fn ddtr_symbolic(&self) -> C64 {
        self.terms.iter().map(|(w, l)| w * PI * l.re.signum()).sum()
    }
}

impl TraceFamily for ResolventSum {
    fn value(&self, t: f64) -> C64 {
        self.terms.iter().map(|(w, l)| w / (l + I * t)).sum()
    }
    fn derivative(&self, t: f64, p: usize) -> C64 {
        self.terms.iter().map(|(w, l)| w * resolvent_derivative(*l, t, p)).sum()
    }
    fn order(&self) -> f64 {
        -1.0
    }
}

// ---------------------------------------------------------------------------
// the doubly regularized trace

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DdtrPath {
    /// Partial fractions: exact for resolvent sums.
    Symbolic,
    /// The integrand decays; Tr̿ is the plain integral.
    Integral,
    /// Finite part of g_p(T) from an asymptotic fit.
    Fit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ddtr {
    pub value: C64,
    pub path: DdtrPath,
    /// Number of derivatives taken (0 off the fit path).
    pub p: usize,
    /// Relative RMS fit residual, or the quadrature error estimate.
    pub residual: f64,
}

/// What is fitted on the fit path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitForm {
    /// g_p(T) against a polynomial of degree p plus inverse powers.
    Iterated,
    /// M_p(T) = ∫_{−T}^{T} r^p h_p(r) dr against inverse powers only. Applying
    /// Π_{k=1..p}(T d/dT − k) to g_p gives M_p, which removes the polynomial
    /// part and with it the T^p growth that swamps the constant for p ≥ 3.
    Moment,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub form: FitForm,
    /// First sample point of the geometric T grid.
    pub t0: f64,
    pub ratio: f64,
    /// Powers T⁻¹ … T^{−k} in the fit basis.
    pub inverse_powers: usize,
    pub gl_order: usize,
    /// Width of the first Gauss–Legendre panel; later panels double.
    pub first_panel: f64,
    pub max_residual: f64,
    /// Nodes for the plain-integral path.
    pub integral_nodes: usize,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            form: FitForm::Moment,
            t0: 8.0,
            ratio: 1.25,
            inverse_powers: 8,
            gl_order: 20,
            first_panel: 1.0 / 16.0,
            max_residual: 1e-9,
            integral_nodes: 128,
        }
    }
}

/// Smallest admissible number of derivatives: p > m + 1 and p ≥ 1.
pub fn default_p(order: f64) -> usize {
    ((order + 1.0).floor() as i64 + 1).max(1) as usize
}

/// ∫₀ᵀ k(T, r) [h_p(r) + (−1)^p h_p(−r)] dr at each T, on doubling
/// Gauss–Legendre panels shared between the T values.
fn panel_integrals(f: &dyn TraceFamily, p: usize, ts: &[f64], s: &FitSettings, kernel: impl Fn(f64, f64) -> f64 + Sync) -> Result<Vec<C64>> {
    let tmax = ts.iter().cloned().fold(0.0, f64::max);
    let mut bounds = vec![0.0, s.first_panel];
    while *bounds.last().unwrap() < tmax {
        let b = 2.0 * bounds.last().unwrap();
        bounds.push(b);
    }
    let (x, w) = gauss_legendre(s.gl_order);
    let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
    let h_sym = |r: f64| f.derivative(r, p) + f.derivative(-r, p) * sign;
    let panel_nodes = |a: f64, b: f64| -> Vec<(f64, f64)> {
        (0..x.len()).map(|k| (a + 0.5 * (b - a) * (x[k] + 1.0), 0.5 * (b - a) * w[k])).collect()
    };
    // cached values on the full doubling panels
    let cached: Vec<Vec<(f64, f64, C64)>> = bounds
        .windows(2)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|ab| panel_nodes(ab[0], ab[1]).into_iter().map(|(r, wr)| (r, wr, h_sym(r))).collect())
        .collect();
    let out: Vec<Result<C64>> = ts
        .par_iter()
        .map(|&tt| {
            let mut terms = Vec::new();
            let mut last = 0.0;
            for (k, ab) in bounds.windows(2).enumerate() {
                if ab[1] > tt {
                    break;
                }
                for &(r, wr, h) in &cached[k] {
                    terms.push(h * (wr * kernel(tt, r)));
                }
                last = ab[1];
            }
            if tt > last {
                for (r, wr) in panel_nodes(last, tt) {
                    terms.push(h_sym(r) * (wr * kernel(tt, r)));
                }
            }
            let v = pairwise_sum(&terms).unwrap_or_default();
            if !v.is_finite() {
                return Err(Error::NonFinite { at: format!("p = {p}, T = {tt}") });
            }
            Ok(v)
        })
        .collect();
    out.into_iter().collect()
}

/// g_p(T) = (1/p!) ∫₀ᵀ (T − r)^p [h_p(r) + (−1)^p h_p(−r)] dr with h_p = f^{(p)}.
/// This equals ∫_{−T}^{T} f minus a polynomial in T without constant term.
pub fn iterated_integrals(f: &dyn TraceFamily, p: usize, ts: &[f64], s: &FitSettings) -> Result<Vec<C64>> {
    let pf = factorial(p);
    panel_integrals(f, p, ts, s, |tt, r| (tt - r).powi(p as i32) / pf)
}

/// M_p(T) = ∫_{−T}^{T} r^p h_p(r) dr; its limit is (−1)^p p! times the finite part.
pub fn moment_integrals(f: &dyn TraceFamily, p: usize, ts: &[f64], s: &FitSettings) -> Result<Vec<C64>> {
    panel_integrals(f, p, ts, s, |_, r| r.powi(p as i32))
}

/// Finite part of g_p(T) at T → ∞ by least squares on a geometric grid.
pub fn ddtr_fit(f: &dyn TraceFamily, p: usize, s: &FitSettings) -> Result<Ddtr> {
    let m = f.order();
    if !(p as f64 > m + 1.0) {
        return Err(Error::Invalid(format!("p = {p} must exceed m + 1 = {}", m + 1.0)));
    }
    let powers: Vec<f64> = (1..=s.inverse_powers).map(|k| -(k as f64)).collect();
    let (degree, scale) = match s.form {
        FitForm::Iterated => (p, 1.0),
        FitForm::Moment => (0, if p % 2 == 0 { 1.0 } else { -1.0 } / factorial(p)),
    };
    let basis = AsymptoticBasis::new(powers, Some(degree as u32), false);
    let count = 3 * (degree + 1 + s.inverse_powers);
    let ts = geometric_grid(s.t0, s.ratio, count);
    let gs = match s.form {
        FitForm::Iterated => iterated_integrals(f, p, &ts, s)?,
        FitForm::Moment => moment_integrals(f, p, &ts, s)?,
    };
    let samples: Vec<(f64, C64)> = ts.into_iter().zip(gs).collect();
    let fit = asymptotic_fit_resolving(&samples, &basis)?;
    if fit.residual > s.max_residual {
        return Err(Error::FitResidual { residual: fit.residual, threshold: s.max_residual });
    }
    Ok(Ddtr { value: fit.constant * scale, path: DdtrPath::Fit, p, residual: fit.residual })
}

fn integral_path(f: &dyn TraceFamily, s: &FitSettings) -> Result<Ddtr> {
    let order = f.order();
    let rule = if order == f64::NEG_INFINITY { Rule::Trapezoid } else { Rule::GaussLegendre { order: 16 } };
    let spec = QuadSpec::new(1, s.integral_nodes, order.min(-1.5)).with_rule(rule);
    let r = quad(|t: &[f64]| f.value(t[0]), &spec)?;
    Ok(Ddtr { value: r.value, path: DdtrPath::Integral, p: 0, residual: r.error })
}

/// Tr̿ of a scalar family: the plain integral for integrable families,
/// otherwise the fit path with the smallest admissible p.
pub fn ddtr(f: &dyn TraceFamily, s: &FitSettings) -> Result<Ddtr> {
    if f.order() < -1.0 {
        integral_path(f, s)
    } else {
        ddtr_fit(f, default_p(f.order()), s)
    }
}

/// Results at p and p + 1 on the fit path; their difference is the
/// p-stability increment.
pub fn ddtr_p_stability(f: &dyn TraceFamily, p: usize, s: &FitSettings) -> Result<(Ddtr, Ddtr)> {
    Ok((ddtr_fit(f, p, s)?, ddtr_fit(f, p + 1, s)?))
}

// ---------------------------------------------------------------------------
// spectral models

/// Spectrum {n + a : n ∈ ℤ} (when `progression` is set) with eigenvalues
/// removed and added: the model of −i∂_θ + a with finite-rank changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralModel {
    pub progression: Option<f64>,
    pub removed: Vec<f64>,
    pub added: Vec<f64>,
}

impl SpectralModel {
    pub fn circle(shift: f64) -> Self {
        SpectralModel { progression: Some(shift), removed: vec![], added: vec![] }
    }

    pub fn finite(eigenvalues: Vec<f64>) -> Self {
        SpectralModel { progression: None, removed: vec![], added: eigenvalues }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(a) = self.progression {
            if !a.is_finite() || (a - a.round()).abs() < 1e-12 {
                return Err(Error::ZeroMode);
            }
            for &r in &self.removed {
                let k = r - a;
                if (k - k.round()).abs() > 1e-12 {
                    return Err(Error::Invalid(format!("removed eigenvalue {r} is not in the progression")));
                }
            }
        } else if !self.removed.is_empty() {
            return Err(Error::Invalid("nothing to remove from a finite spectrum".into()));
        }
        if self.added.iter().any(|l| !l.is_finite() || *l == 0.0) {
            return Err(Error::ZeroMode);
        }
        Ok(())
    }

    fn corrections(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.added.iter().map(|&l| (1.0, l)).chain(self.removed.iter().map(|&l| (-1.0, l)))
    }

    fn order(&self) -> f64 {
        if self.progression.is_some() {
            0.0
        } else {
            -1.0
        }
    }
}

/// cot w, stable for large |Im w|.
fn cot(w: C64) -> C64 {
    if w.im >= 0.0 {
        let e = (I * w * 2.0).exp();
        I * (e + 1.0) / (e - 1.0)
    } else {
        let e = (-I * w * 2.0).exp();
        I * (1.0 + e) / (1.0 - e)
    }
}

/// Polynomials P_k with d^k/dw^k cot w = P_k(cot w).
fn cot_polynomials(kmax: usize) -> Vec<Vec<f64>> {
    let mut ps = vec![vec![0.0, 1.0]];
    for _ in 0..kmax {
        let p = ps.last().unwrap();
        let dp: Vec<f64> = (1..p.len()).map(|j| j as f64 * p[j]).collect();
        // multiply by −(1 + c²)
        let mut q = vec![0.0; dp.len() + 2];
        for (j, &a) in dp.iter().enumerate() {
            q[j] -= a;
            q[j + 2] -= a;
        }
        ps.push(q);
    }
    ps
}

fn horner(p: &[f64], x: C64) -> C64 {
    p.iter().rev().fold(C64::new(0.0, 0.0), |acc, &a| acc * x + a)
}

/// Tr (D + it)⁻¹ = π cot(π(a + it)) + finite corrections, with derivatives
/// from the cotangent polynomials.
#[derive(Debug, Clone)]
pub struct CotangentTrace {
    model: SpectralModel,
    polys: Vec<Vec<f64>>,
}

impl CotangentTrace {
    pub fn new(model: &SpectralModel) -> Result<Self> {
        model.validate()?;
        Ok(CotangentTrace { model: model.clone(), polys: cot_polynomials(8) })
    }
}

impl TraceFamily for CotangentTrace {
    fn value(&self, t: f64) -> C64 {
        self.derivative(t, 0)
    }
    fn derivative(&self, t: f64, p: usize) -> C64 {
        let mut s = C64::new(0.0, 0.0);
        if let Some(a) = self.model.progression {
            let w = (c(a, 0.0) + I * t) * PI;
            // d/dt = iπ d/dw
            s += horner(&self.polys[p], cot(w)) * (I * PI).powi(p as i32) * PI;
        }
        for (sgn, l) in self.model.corrections() {
            s += resolvent_derivative(c(l, 0.0), t, p) * sgn;
        }
        s
    }
    fn order(&self) -> f64 {
        self.model.order()
    }
}

const BERNOULLI: [f64; 4] = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0];

/// Euler–Maclaurin remainder −F(N)/2 − Σ_k B_{2k}/(2k)! F^{(2k−1)}(N) for
/// F(x) = (x + z)^{−q}.
fn em_corrections(x: C64, q: i32) -> C64 {
    let mut s = -x.powi(-q) * 0.5;
    for (k, b) in BERNOULLI.iter().enumerate() {
        let j = 2 * k as i32 + 1;
        let falling: f64 = (0..j).map(|i| (-q - i) as f64).product();
        s -= x.powi(-q - j) * (b / factorial(2 * k + 2) * falling);
    }
    s
}

/// Σ_{n>N} (n + z)^{−q}, q ≥ 2.
fn power_tail(n0: f64, z: C64, q: i32) -> C64 {
    let x = z + n0;
    x.powi(1 - q) / (q - 1) as f64 + em_corrections(x, q)
}

/// Σ_{n>N} [(n + z)⁻¹ + (z − n)⁻¹].
fn symmetric_tail(n0: f64, z: C64) -> C64 {
    let (xp, xm) = (z + n0, -z + n0);
    // ∫_N^∞ ((x + z)⁻¹ − (x − z)⁻¹) dx = −log((N + z)/(N − z)), arguments kept apart
    let integral = -(c(xp.norm().ln() - xm.norm().ln(), xp.arg() - xm.arg()));
    integral + em_corrections(xp, 1) - em_corrections(xm, 1)
}

/// Tr (D + it)⁻¹ by explicit summation over |n| ≤ N₀ with Euler–Maclaurin
/// tails; independent of the cotangent closed form.
#[derive(Debug, Clone)]
pub struct SummedResolvent {
    model: SpectralModel,
    cutoff: usize,
}

impl SummedResolvent {
    pub fn new(model: &SpectralModel, cutoff: usize) -> Result<Self> {
        model.validate()?;
        Ok(SummedResolvent { model: model.clone(), cutoff })
    }
}

impl TraceFamily for SummedResolvent {
    fn value(&self, t: f64) -> C64 {
        self.derivative(t, 0)
    }
    fn derivative(&self, t: f64, p: usize) -> C64 {
        let mut s = C64::new(0.0, 0.0);
        if let Some(a) = self.model.progression {
            let z = c(a, t);
            let n0 = self.cutoff as i64;
            let q = p as i32 + 1;
            let head: Vec<C64> = (-n0..=n0).map(|n| (z + n as f64).powi(-q)).collect();
            let mut sum = pairwise_sum(&head).unwrap_or_default();
            sum += if q == 1 {
                symmetric_tail(n0 as f64, z)
            } else {
                let sign = if q % 2 == 0 { 1.0 } else { -1.0 };
                power_tail(n0 as f64, z, q) + power_tail(n0 as f64, -z, q) * sign
            };
            let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
            s += sum * I.powi(p as i32) * (sign * factorial(p));
        }
        for (sgn, l) in self.model.corrections() {
            s += resolvent_derivative(c(l, 0.0), t, p) * sgn;
        }
        s
    }
    fn order(&self) -> f64 {
        self.model.order()
    }
}

/// Hurwitz ζ(s, a) = Σ_{n≥0} (n + a)^{−s}, continued to all real s ≠ 1 by
/// Euler–Maclaurin at n = N.
pub fn hurwitz_zeta(s: f64, a: f64) -> Result<f64> {
    if a <= 0.0 || (s - 1.0).abs() < 1e-12 {
        return Err(Error::Invalid(format!("ζ({s}, {a}) is outside the supported range")));
    }
    let n = 32usize;
    let head: f64 = (0..n).map(|k| (k as f64 + a).powf(-s)).sum();
    let x = n as f64 + a;
    let mut v = head + x.powf(1.0 - s) / (s - 1.0) + 0.5 * x.powf(-s);
    // + Σ B_{2k}/(2k)! · s(s+1)…(s+2k−2) · x^{−s−2k+1}
    for (k, b) in BERNOULLI.iter().enumerate() {
        let j = 2 * k + 1;
        let rising: f64 = (0..j).map(|i| s + i as f64).product();
        v += b / factorial(2 * k + 2) * rising * x.powf(-s - j as f64);
    }
    Ok(v)
}

/// η(0) from Σ sgn(λ)|λ|^{−s}: ζ(0, a) − ζ(0, 1 − a) for the progression plus
/// the signs of the finite changes.
pub fn spectral_eta_oracle(model: &SpectralModel) -> Result<f64> {
    model.validate()?;
    let mut eta = 0.0;
    if let Some(a) = model.progression {
        let frac = a - a.floor();
        eta += hurwitz_zeta(0.0, frac)? - hurwitz_zeta(0.0, 1.0 - frac)?;
    }
    for (sgn, l) in model.corrections() {
        eta += sgn * l.signum();
    }
    Ok(eta)
}

// ---------------------------------------------------------------------------
// η for self-adjoint models

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaResult {
    pub eta: C64,
    /// (1/2πi)·Tr̿(A⁻¹Ȧ + ȦA⁻¹).
    pub trace_part: C64,
    /// μ(Ĩ(A)).
    pub mu_part: C64,
    pub ddtr: Ddtr,
    /// Independent evaluation of the same Tr̿, when one exists.
    pub cross_check: Option<Ddtr>,
}

impl EtaResult {
    fn from_trace(d: Ddtr, cross: Option<Ddtr>) -> Self {
        let tp = d.value / (2.0 * PI * I);
        EtaResult { eta: tp, trace_part: tp, mu_part: C64::new(0.0, 0.0), ddtr: d, cross_check: cross }
    }
}

/// η(P + it) for Hermitian P: Tr(A⁻¹Ȧ + ȦA⁻¹) = 2i·Tr(P + it)⁻¹ is a
/// resolvent sum. The symbolic path is primary; the fit path is attached.
pub fn eta_affine(p: &CMat, s: &FitSettings) -> Result<EtaResult> {
    let f = ResolventSum::from_hermitian(p, c(0.0, 2.0))?;
    let sym = Ddtr { value: f.ddtr_symbolic(), path: DdtrPath::Symbolic, p: 0, residual: 0.0 };
    let numeric = ddtr_fit(&f, 1, s).ok();
    Ok(EtaResult::from_trace(sym, numeric))
}

/// η of (−i∂_θ + a) + it (with finite changes) from the cotangent closed form
/// of Tr(A⁻¹Ȧ + ȦA⁻¹) = 2i·π cot(π(a + it)) + …; no boundary data, μ = 0.
pub fn eta_circle(model: &SpectralModel, s: &FitSettings) -> Result<EtaResult> {
    let f = CotangentTrace::new(model)?;
    let d = ddtr(&f, s)?;
    let scaled = Ddtr { value: d.value * c(0.0, 2.0), ..d };
    Ok(EtaResult::from_trace(scaled, None))
}

/// η = (1/π)·Tr̿((D + it)⁻¹) with p = 2, the resolvent trace summed over the
/// spectrum with closed-form tails.
pub fn eta_via_resolvent(model: &SpectralModel, s: &FitSettings) -> Result<EtaResult> {
    let f = SummedResolvent::new(model, 64)?;
    let d = ddtr_fit(&f, 2, s)?;
    let scaled = Ddtr { value: d.value * c(0.0, 2.0), ..d };
    Ok(EtaResult::from_trace(scaled, None))
}

// ---------------------------------------------------------------------------
// cusp suspended families in the Toeplitz model

/// Interior K(t) with ∂_tK(t).
pub type InteriorFn = Arc<dyn Fn(f64) -> (CMat, CMat) + Send + Sync>;

/// One css operator family: T(a₀(t, ·)) + K(t), with boundary data for Ĩ.
#[derive(Clone)]
pub struct CssOperator {
    pub symbols: CssSymbols,
    pub interior: Option<InteriorFn>,
    /// Order of the family in t (0 for the css group, 1 for P + it).
    pub order: f64,
    /// Decay order of bTr(A⁻¹Ȧ + ȦA⁻¹) in t.
    pub trace_decay: f64,
}

/// t ↦ A(t) as a product tree of css operators and inverses.
#[derive(Clone)]
pub enum CuspSuspendedFamily {
    Leaf(Arc<CssOperator>),
    Product(Box<CuspSuspendedFamily>, Box<CuspSuspendedFamily>),
    Inverse(Box<CuspSuspendedFamily>),
}

impl std::fmt::Debug for CuspSuspendedFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CuspSuspendedFamily::Leaf(op) => write!(f, "Leaf(size {}, order {})", op.symbols.size, op.order),
            CuspSuspendedFamily::Product(a, b) => write!(f, "({a:?} ∘ {b:?})"),
            CuspSuspendedFamily::Inverse(a) => write!(f, "({a:?})⁻¹"),
        }
    }
}

/// A(t) and ∂_tA(t) at one truncation.
#[derive(Debug, Clone)]
pub struct OpJet {
    pub value: ModelCuspOperator,
    pub dt: ModelCuspOperator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaResolution {
    /// Fourier modes kept in the Toeplitz truncation.
    pub blocks: usize,
    /// θ samples of each circle symbol.
    pub samples: usize,
    pub t_nodes: usize,
    /// Nodes per axis of the (t, τ) grid for μ and rdsTr.
    pub plane_nodes: usize,
    pub fit: FitSettings,
}

impl Default for EtaResolution {
    fn default() -> Self {
        EtaResolution { blocks: 24, samples: 256, t_nodes: 96, plane_nodes: 64, fit: FitSettings::default() }
    }
}

impl EtaResolution {
    pub fn low() -> Self {
        EtaResolution { blocks: 16, samples: 128, t_nodes: 64, plane_nodes: 48, fit: FitSettings::default() }
    }

    pub fn high() -> Self {
        EtaResolution { blocks: 96, samples: 1024, t_nodes: 160, plane_nodes: 96, fit: FitSettings::default() }
    }
}

fn nan_matrix(n: usize) -> CMat {
    CMat::from_element(n, n, C64::new(f64::NAN, f64::NAN))
}

impl CuspSuspendedFamily {
    pub fn leaf(op: CssOperator) -> Self {
        CuspSuspendedFamily::Leaf(Arc::new(op))
    }

    /// Element of the css group: order 0, Schwartz t-derivative.
    pub fn css(symbols: CssSymbols, interior: Option<InteriorFn>) -> Self {
        Self::leaf(CssOperator { symbols, interior, order: 0.0, trace_decay: f64::NEG_INFINITY })
    }

    pub fn identity(size: usize) -> Self {
        Self::css(CssSymbols::identity(size), None)
    }

    /// Id + K(t): the once-suspended smoothing group inside the css group.
    pub fn interior_only(size: usize, k: InteriorFn) -> Self {
        Self::css(CssSymbols::identity(size), Some(k))
    }

    pub fn mul(&self, o: &CuspSuspendedFamily) -> Self {
        CuspSuspendedFamily::Product(Box::new(self.clone()), Box::new(o.clone()))
    }

    pub fn inverse(&self) -> Self {
        CuspSuspendedFamily::Inverse(Box::new(self.clone()))
    }

    pub fn size(&self) -> usize {
        match self {
            CuspSuspendedFamily::Leaf(op) => op.symbols.size,
            CuspSuspendedFamily::Product(a, _) | CuspSuspendedFamily::Inverse(a) => a.size(),
        }
    }

    /// Order in t; inverses of order-k families have order −k.
    pub fn order(&self) -> f64 {
        match self {
            CuspSuspendedFamily::Leaf(op) => op.order,
            CuspSuspendedFamily::Product(a, b) => a.order() + b.order(),
            CuspSuspendedFamily::Inverse(a) => -a.order(),
        }
    }

    /// Decay order of the η integrand: the slowest leaf.
    pub fn trace_decay(&self) -> f64 {
        match self {
            CuspSuspendedFamily::Leaf(op) => op.trace_decay,
            CuspSuspendedFamily::Product(a, b) => a.trace_decay().max(b.trace_decay()),
            CuspSuspendedFamily::Inverse(a) => a.trace_decay(),
        }
    }

    pub fn jet(&self, t: f64, res: &EtaResolution) -> Result<OpJet> {
        match self {
            CuspSuspendedFamily::Leaf(op) => {
                let a0 = op.symbols.a0.clone();
                let a0d = op.symbols.a0.clone();
                let r = op.symbols.size;
                let sym = CircleSymbol::from_tau(r, res.samples, move |tau| a0.eval(&[t, tau]));
                let dsym = CircleSymbol::from_tau(r, res.samples, move |tau| a0d.deriv(0, &[t, tau]));
                let mut value = ModelCuspOperator::toeplitz(sym, res.blocks)?;
                let mut dt = ModelCuspOperator::toeplitz(dsym, res.blocks)?;
                if let Some(k) = &op.interior {
                    let (kv, kd) = k(t);
                    value = value.with_interior(&kv)?;
                    dt = dt.with_interior(&kd)?;
                }
                Ok(OpJet { value, dt })
            }
            CuspSuspendedFamily::Product(a, b) => {
                let (ja, jb) = (a.jet(t, res)?, b.jet(t, res)?);
                let value = compose(&ja.value, &jb.value)?;
                let dt = compose(&ja.dt, &jb.value)?.add(&compose(&ja.value, &jb.dt)?)?;
                Ok(OpJet { value, dt })
            }
            CuspSuspendedFamily::Inverse(a) => {
                let ja = a.jet(t, res)?;
                let value = inverse(&ja.value).map_err(|_| Error::Singular { at: format!("t = {t:.6}") })?;
                let dt = compose(&compose(&value, &ja.dt)?, &value)?.scale(c(-1.0, 0.0));
                Ok(OpJet { value, dt })
            }
        }
    }

    /// Ĩ(A) on the grid: leaves lift their symbols, products and inverses
    /// are taken in the tilde algebra.
    pub fn itilde(&self, grid: &Arc<Grid2>) -> Result<TildeElement> {
        match self {
            CuspSuspendedFamily::Leaf(op) => itilde(&op.symbols, grid),
            CuspSuspendedFamily::Product(a, b) => tilde_mul(&a.itilde(grid)?, &b.itilde(grid)?),
            CuspSuspendedFamily::Inverse(a) => tilde_inv(&a.itilde(grid)?),
        }
    }

    /// The indicial family I(A)(t, τ) with analytic derivatives.
    pub fn indicial(&self) -> SuspendedFamily {
        match self {
            CuspSuspendedFamily::Leaf(op) => op.symbols.a0.clone(),
            CuspSuspendedFamily::Product(a, b) => a.indicial().mul(&b.indicial()),
            CuspSuspendedFamily::Inverse(a) => {
                let f = a.indicial();
                let n = f.size;
                let g = f.clone();
                let ds: Vec<Sampler> = (0..2)
                    .map(|ax| {
                        let f = f.clone();
                        Arc::new(move |p: &[f64]| match inv(&f.eval(p), String::new) {
                            Ok(u) => -(&u * f.deriv(ax, p) * &u),
                            Err(_) => nan_matrix(n),
                        }) as Sampler
                    })
                    .collect();
                let lim = inv(&f.at_infinity, String::new).unwrap_or_else(|_| nan_matrix(n));
                SuspendedFamily::new(2, n, f.decay_order, move |p| inv(&g.eval(p), String::new).unwrap_or_else(|_| nan_matrix(n)))
                    .with_derivatives(ds)
                    .with_limit(lim)
            }
        }
    }

    /// bTr(A⁻¹Ȧ + ȦA⁻¹) at t.
    pub fn eta_integrand(&self, t: f64, res: &EtaResolution) -> Result<C64> {
        let j = self.jet(t, res)?;
        let u = inverse(&j.value).map_err(|_| Error::Singular { at: format!("t = {t:.6}") })?;
        Ok(btr_of_product(&u, &j.dt)? + btr_of_product(&j.dt, &u)?)
    }
}

/// Tr̿ of t ↦ F(t) where F may fail; failures become non-finite samples and
/// are reported with their t.
fn ddtr_of_fallible(order: f64, f: impl Fn(f64) -> Result<C64> + Send + Sync + 'static, s: &FitSettings, nodes: usize) -> Result<Ddtr> {
    let f = Arc::new(f);
    let first_err: Arc<std::sync::Mutex<Option<Error>>> = Arc::new(std::sync::Mutex::new(None));
    let fe = first_err.clone();
    let g = f.clone();
    let tf = ClosureTrace::new(order, move |t| match g(t) {
        Ok(v) => v,
        Err(e) => {
            fe.lock().unwrap().get_or_insert(e);
            C64::new(f64::NAN, f64::NAN)
        }
    });
    let settings = FitSettings { integral_nodes: nodes, ..*s };
    let out = ddtr(&tf, &settings);
    if let Some(e) = first_err.lock().unwrap().take() {
        return Err(e);
    }
    out
}

/// η(A) = (1/2πi)·Tr̿(A⁻¹Ȧ + ȦA⁻¹) + μ(Ĩ(A)).
pub fn eta_cusp(a: &CuspSuspendedFamily, res: &EtaResolution) -> Result<EtaResult> {
    let fam = a.clone();
    let r = *res;
    let d = ddtr_of_fallible(a.trace_decay(), move |t| fam.eta_integrand(t, &r), &res.fit, res.t_nodes)?;
    let grid = Arc::new(Grid2::new(res.plane_nodes, res.plane_nodes, 1.0));
    let mu_part = mu(&a.itilde(&grid)?.to_star2())?;
    let trace_part = d.value / (2.0 * PI * I);
    Ok(EtaResult { eta: trace_part + mu_part, trace_part, mu_part, ddtr: d, cross_check: None })
}

/// (η(A∘B), η(A) + η(B)).
pub fn eta_additivity_check(a: &CuspSuspendedFamily, b: &CuspSuspendedFamily, res: &EtaResolution) -> Result<(C64, C64)> {
    let ab = eta_cusp(&a.mul(b), res)?.eta;
    let sum = eta_cusp(a, res)?.eta + eta_cusp(b, res)?.eta;
    Ok((ab, sum))
}

/// (det Ĩ(A), exp(iπη(A))) for A in the css group.
pub fn det_eq_exp_eta(a: &CuspSuspendedFamily, res: &EtaResolution) -> Result<(C64, C64)> {
    let grid = Arc::new(Grid2::new(res.plane_nodes, res.plane_nodes, 1.0));
    let d = lifted_det(&a.itilde(&grid)?)?.value;
    let eta = eta_cusp(a, res)?.eta;
    Ok((d, (I * PI * eta).exp()))
}

// ---------------------------------------------------------------------------
// rdsTr and the suspended trace defect

/// Doubly regularized trace of a two-parameter family: the τ-integral of the
/// trace, then Tr̿ in t. `order` is the order of ∫Tr a dτ in t.
pub fn rds_tr(a: &SuspendedFamily, order: f64, res: &EtaResolution) -> Result<Ddtr> {
    if a.arity != 2 {
        return Err(Error::Invalid("rdsTr needs a two-parameter family".into()));
    }
    let fam = a.clone();
    let taus = Grid2::new(8, 4 * res.plane_nodes, 1.0).tau;
    let f = move |t: f64| -> Result<C64> {
        let vals: Vec<C64> = taus.iter().map(|&(tau, w)| trace(&fam.eval(&[t, tau])) * w).collect();
        let v = pairwise_sum(&vals).unwrap_or_default();
        if !v.is_finite() {
            return Err(Error::NonFinite { at: format!("t = {t:.6}") });
        }
        Ok(v)
    };
    ddtr_of_fallible(order, f, &res.fit, res.t_nodes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SusTraceDefect {
    /// ∫ bTr([A, B]) dt, each bTr extrapolated from N and 2N modes.
    pub lhs: C64,
    /// (1/2πi) rdsTr(I(A) ∂_τ I(B)).
    pub rhs1: C64,
    /// −(1/2πi) rdsTr(I(B) ∂_τ I(A)).
    pub rhs2: C64,
}

fn tau_product(a: &SuspendedFamily, b: &SuspendedFamily) -> SuspendedFamily {
    let (a, b) = (a.clone(), b.clone());
    let n = a.size;
    SuspendedFamily::new(2, n, a.decay_order.max(b.decay_order), move |p| a.eval(p) * b.deriv(1, p))
}

pub fn sus_trace_defect(a: &CuspSuspendedFamily, b: &CuspSuspendedFamily, res: &EtaResolution) -> Result<SusTraceDefect> {
    let order = a.order() + b.order();
    if order >= -1.0 && order.is_finite() {
        return Err(Error::Invalid(format!("orders sum to {order}; the commutator is not integrable in t")));
    }
    let (fa, fb) = (a.clone(), b.clone());
    let r = *res;
    let lhs = ddtr_of_fallible(
        order,
        move |t| {
            let (ja, jb) = (fa.jet(t, &r)?, fb.jet(t, &r)?);
            Ok(trace_defect(&ja.value, &jb.value)?.lhs)
        },
        &res.fit,
        res.t_nodes,
    )?;
    let (ia, ib) = (a.indicial(), b.indicial());
    let rhs1 = rds_tr(&tau_product(&ia, &ib), order, res)?.value / (2.0 * PI * I);
    let rhs2 = -rds_tr(&tau_product(&ib, &ia), order, res)?.value / (2.0 * PI * I);
    Ok(SusTraceDefect { lhs: lhs.value, rhs1, rhs2 })
}

// ---------------------------------------------------------------------------
// the Dirac model

/// Model of a Dirac operator near the boundary: the boundary operator
/// m: E⁺ → E⁻ with adjoint m*, the suspended family D̂(t) = it + [[0, m*], [m, 0]]
/// and the indicial family Ê(t, τ) = [[it − τ, m*], [m, it + τ]].
#[derive(Debug, Clone)]
pub struct DiracModel {
    pub m: CMat,
    pub m_adj: CMat,
    /// [[0, m*], [m, 0]].
    pub boundary: CMat,
}

pub fn dirac_build(m: &CMat) -> Result<DiracModel> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::Shape("the boundary operator must be square".into()));
    }
    if smallest_singular_value(m) < 1e-12 {
        return Err(Error::Singular { at: "boundary operator m (indicial family singular at t = τ = 0)".into() });
    }
    let k = m.nrows();
    let m_adj = m.adjoint();
    let mut boundary = CMat::zeros(2 * k, 2 * k);
    boundary.view_mut((0, k), (k, k)).copy_from(&m_adj);
    boundary.view_mut((k, 0), (k, k)).copy_from(m);
    Ok(DiracModel { m: m.clone(), m_adj, boundary })
}

impl DiracModel {
    pub fn half(&self) -> usize {
        self.m.nrows()
    }

    pub fn size(&self) -> usize {
        2 * self.half()
    }

    /// Ê(t, τ).
    pub fn indicial(&self, t: f64, tau: f64) -> CMat {
        let k = self.half();
        let mut e = self.boundary.clone();
        for i in 0..k {
            e[(i, i)] = c(-tau, t);
            e[(k + i, k + i)] = c(tau, t);
        }
        e
    }

    /// D̂(t) = it + [[0, m*], [m, 0]].
    pub fn suspended(&self, t: f64) -> CMat {
        &self.boundary + eye(self.size()) * (I * t)
    }

    /// Largest deviation of Ê*Ê from (t² + τ²)Id + diag(m*m, mm*) over the points.
    pub fn invariant_defect(&self, points: &[(f64, f64)]) -> f64 {
        let k = self.half();
        let mut d = CMat::zeros(2 * k, 2 * k);
        d.view_mut((0, 0), (k, k)).copy_from(&(&self.m_adj * &self.m));
        d.view_mut((k, k), (k, k)).copy_from(&(&self.m * &self.m_adj));
        points
            .iter()
            .map(|&(t, tau)| {
                let e = self.indicial(t, tau);
                let want = &d + eye(2 * k) * c(t * t + tau * tau, 0.0);
                fro(&(e.adjoint() * e - want))
            })
            .fold(0.0, f64::max)
    }

    /// Ê as a product-suspended family of order (1, 1) in (t, τ).
    pub fn indicial_family(&self) -> PSFamily {
        let me = self.clone();
        PSFamily::new(BigradedOrder::new(1.0, 1.0), 2, self.size(), move |p| me.indicial(p[0], p[1]))
    }

    /// η(D̂): the suspended family is P + it with P = [[0, m*], [m, 0]].
    pub fn suspended_eta(&self, s: &FitSettings) -> Result<EtaResult> {
        eta_affine(&self.boundary, s)
    }

    /// The model cusp family t ↦ T(Ê_c(t, ·)): Ê with τ replaced by the
    /// bounded coordinate φ(τ) = 2τ/(1 + τ²) = −sin θ, so the Toeplitz symbol
    /// is a trigonometric polynomial of degree one.
    pub fn css_family(&self) -> CuspSuspendedFamily {
        let k = self.half();
        let n = self.size();
        let me = self.clone();
        let sampler = move |p: &[f64]| me.indicial(p[0], compact_tau(p[1]));
        let me_tau = self.clone();
        let dt: Sampler = Arc::new(move |_: &[f64]| eye(n) * I);
        let dtau: Sampler = Arc::new(move |p: &[f64]| {
            let _ = &me_tau;
            let d = compact_tau_derivative(p[1]);
            let mut m = CMat::zeros(n, n);
            for i in 0..k {
                m[(i, i)] = c(-d, 0.0);
                m[(k + i, k + i)] = c(d, 0.0);
            }
            m
        });
        let a0 = SuspendedFamily::new(2, n, 1.0, sampler).with_derivatives(vec![dt, dtau]).with_limit(self.boundary.clone());
        CuspSuspendedFamily::leaf(CssOperator {
            symbols: CssSymbols { size: n, a0, e: None, a1: None },
            interior: None,
            order: 1.0,
            // only the Hankel part of T(S)² survives in the interior: O(t⁻³)
            trace_decay: -3.0,
        })
    }
}

/// φ(τ) = 2τ/(1 + τ²).
pub fn compact_tau(tau: f64) -> f64 {
    2.0 * tau / (1.0 + tau * tau)
}

fn compact_tau_derivative(tau: f64) -> f64 {
    let d = 1.0 + tau * tau;
    2.0 * (1.0 - tau * tau) / (d * d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{random_cusp_family, random_hermitian, schwartz_packets};
    use crate::groups::{cayley_generator, odd_index};
    use crate::linalg::outer;
    use crate::psorders::{full_elliptic_check, SweepResolution};

    fn fit() -> FitSettings {
        FitSettings::default()
    }

    #[test]
    fn scalar_resolvent_both_paths() {
        for lambda in [1.0, -0.7, 2.5] {
            let f = ResolventSum::scalar(lambda).unwrap();
            let want = PI * lambda.signum();
            assert!((f.ddtr_symbolic() - want).norm() < 1e-14);
            let d = ddtr(&f, &fit()).unwrap();
            assert_eq!(d.path, DdtrPath::Fit);
            assert!((d.value - want).norm() < 1e-6, "λ = {lambda}: {}", d.value);
        }
    }

    #[test]
    fn p_stability() {
        let f = ResolventSum::scalar(1.3).unwrap();
        let (a, b) = ddtr_p_stability(&f, 1, &fit()).unwrap();
        assert!((a.value - b.value).norm() < 1e-6, "{} vs {}", a.value, b.value);
        let (a, b) = ddtr_p_stability(&f, 2, &fit()).unwrap();
        assert!((a.value - b.value).norm() < 1e-6);
    }

    #[test]
    fn trace_class_and_odd_families() {
        let g = ClosureTrace::new(f64::NEG_INFINITY, |t| c((-t * t).exp(), 0.0));
        let d = ddtr(&g, &fit()).unwrap();
        assert_eq!(d.path, DdtrPath::Integral);
        assert!((d.value.re - PI.sqrt()).abs() < 1e-10);
        let odd = ClosureTrace::new(f64::NEG_INFINITY, |t| c(t * (-t * t).exp(), 0.0));
        assert!(ddtr(&odd, &fit()).unwrap().value.norm() < 1e-12);
    }

    #[test]
    fn fit_path_agrees_with_integral_on_decaying_data() {
        // (1 + t²)⁻¹ has order −2; forcing the fit path must reproduce π
        let f = ClosureTrace::new(-2.0, |t| c(1.0 / (1.0 + t * t), 0.0));
        let d = ddtr_fit(&f, 1, &fit()).unwrap();
        assert!((d.value.re - PI).abs() < 1e-6, "{}", d.value);
    }

    #[test]
    fn p_must_exceed_order_plus_one() {
        let f = CotangentTrace::new(&SpectralModel::circle(0.25)).unwrap();
        assert!(matches!(ddtr_fit(&f, 1, &fit()), Err(Error::Invalid(_))));
    }

    #[test]
    fn hurwitz_values() {
        assert!((hurwitz_zeta(2.0, 1.0).unwrap() - PI * PI / 6.0).abs() < 1e-12);
        for a in [0.1, 0.25, 0.5, 0.9] {
            assert!((hurwitz_zeta(0.0, a).unwrap() - (0.5 - a)).abs() < 1e-13);
            // ζ(−1, a) = −B₂(a)/2
            let b2 = a * a - a + 1.0 / 6.0;
            assert!((hurwitz_zeta(-1.0, a).unwrap() + 0.5 * b2).abs() < 1e-10);
        }
    }

    #[test]
    fn circle_model_three_routes() {
        for a in [0.1, 0.25, 0.4] {
            let m = SpectralModel::circle(a);
            let want = 1.0 - 2.0 * a;
            let oracle = spectral_eta_oracle(&m).unwrap();
            let cusp = eta_circle(&m, &fit()).unwrap().eta;
            let res = eta_via_resolvent(&m, &fit()).unwrap().eta;
            assert!((oracle - want).abs() < 1e-12);
            assert!((cusp - want).norm() < 1e-6, "a = {a}: {cusp}");
            assert!((res - want).norm() < 1e-6, "a = {a}: {res}");
        }
    }

    #[test]
    fn spectral_changes() {
        // removing the eigenvalue 1/4 and adding −1/4 flips one sign
        let m = SpectralModel { progression: Some(0.25), removed: vec![0.25], added: vec![-0.25] };
        let want = 0.5 - 2.0;
        assert!((spectral_eta_oracle(&m).unwrap() - want).abs() < 1e-12);
        assert!((eta_via_resolvent(&m, &fit()).unwrap().eta - want).norm() < 1e-6);
        assert!((eta_circle(&m, &fit()).unwrap().eta - want).norm() < 1e-6);
    }

    #[test]
    fn finite_spectra() {
        let sym = SpectralModel::finite((1..=5).flat_map(|k| [k as f64, -(k as f64)]).collect());
        assert!(spectral_eta_oracle(&sym).unwrap().abs() < 1e-15);
        assert!(eta_via_resolvent(&sym, &fit()).unwrap().eta.norm() < 1e-6);
        let single = SpectralModel::finite(vec![-1.5]);
        assert!((eta_via_resolvent(&single, &fit()).unwrap().eta.re + 1.0).abs() < 1e-6);
        assert!((spectral_eta_oracle(&single).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_modes_rejected() {
        assert_eq!(SpectralModel::circle(0.0).validate(), Err(Error::ZeroMode));
        assert_eq!(SpectralModel::finite(vec![1.0, 0.0]).validate(), Err(Error::ZeroMode));
        assert!(matches!(eta_affine(&CMat::from_diagonal_element(2, 2, c(0.0, 0.0)), &fit()), Err(Error::ZeroMode)));
    }

    #[test]
    fn summed_and_closed_form_traces_agree() {
        let m = SpectralModel::circle(0.3);
        let (a, b) = (CotangentTrace::new(&m).unwrap(), SummedResolvent::new(&m, 64).unwrap());
        for t in [0.0, 0.7, -3.0, 40.0] {
            for p in 0..4 {
                let (x, y) = (a.derivative(t, p), b.derivative(t, p));
                assert!((x - y).norm() < 1e-10 * (1.0 + x.norm()), "t = {t}, p = {p}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn fd_derivative_matches_analytic() {
        let f = ResolventSum::scalar(0.8).unwrap();
        let g = ClosureTrace::new(-1.0, move |t| c(1.0, 0.0) / c(0.8, t));
        for p in 1..4 {
            let (x, y) = (f.derivative(0.3, p), g.derivative(0.3, p));
            assert!((x - y).norm() < 1e-7 * x.norm(), "p = {p}");
        }
    }

    #[test]
    fn affine_eta_is_the_signature() {
        for seed in 0..10u64 {
            let a = random_hermitian(4, seed);
            let sig: f64 = hermitian_eigenvalues(&a).iter().map(|l| l.signum()).sum();
            let r = eta_affine(&a, &fit()).unwrap();
            assert!((r.eta - sig).norm() < 1e-12);
            if let Some(x) = r.cross_check {
                // the fit path needs a spectral gap well above its panel width
                if hermitian_eigenvalues(&a).iter().all(|l| l.abs() > 0.1) {
                    assert!((x.value / (2.0 * PI * I) - sig).norm() < 1e-5, "seed {seed}");
                }
            }
        }
    }

    fn res() -> EtaResolution {
        EtaResolution::default()
    }

    fn cayley_interior() -> InteriorFn {
        let g = cayley_generator(CMat::from_diagonal_element(1, 1, c(1.0, 0.0)));
        Arc::new(move |t| {
            let v = g.eval(&[t]) - eye(1);
            (v, g.deriv(0, &[t]))
        })
    }

    #[test]
    fn residual_group_eta_is_twice_the_odd_index() {
        let a = CuspSuspendedFamily::interior_only(1, cayley_interior());
        let ind = odd_index(&cayley_generator(CMat::from_diagonal_element(1, 1, c(1.0, 0.0)))).unwrap();
        let mut r = res();
        r.t_nodes = 256;
        let eta = eta_cusp(&a, &r).unwrap();
        assert!((eta.eta - 2.0 * ind.rounded as f64).norm() < 1e-5, "{:?}", eta);
    }

    fn random_family(seed: u64) -> CuspSuspendedFamily {
        random_cusp_family(2, seed, 0.4)
    }

    #[test]
    fn identity_has_zero_eta() {
        let e = eta_cusp(&CuspSuspendedFamily::identity(2), &res()).unwrap();
        assert_eq!(e.eta, C64::new(0.0, 0.0));
    }

    #[test]
    fn eta_is_additive_and_odd() {
        let r = res();
        let (a, b) = (random_family(3), random_family(4));
        let (ab, sum) = eta_additivity_check(&a, &b, &r).unwrap();
        assert!((ab - sum).norm() < 1e-5 * (1.0 + sum.norm()), "{ab} vs {sum}");
        let (x, y) = (eta_cusp(&a, &r).unwrap().eta, eta_cusp(&a.inverse(), &r).unwrap().eta);
        assert!((x + y).norm() < 1e-5, "{x} + {y}");
    }

    #[test]
    fn lifted_determinant_is_exp_i_pi_eta() {
        let r = res();
        let a = random_family(11);
        let (d, e) = det_eq_exp_eta(&a, &r).unwrap();
        assert!((d - e).norm() < 1e-5 * d.norm(), "{d} vs {e}");
        // the kernel of Ĩ: interior-only families give even η
        let k = CuspSuspendedFamily::interior_only(1, cayley_interior());
        let (d, e) = det_eq_exp_eta(&k, &r).unwrap();
        assert!((d - 1.0).norm() < 1e-12 && (e - 1.0).norm() < 1e-5);
    }

    #[test]
    fn rds_tr_properties() {
        let r = res();
        let b = schwartz_packets(2, 5, 0.8);
        let cc = schwartz_packets(2, 6, 0.8);
        let dtau = {
            let b = b.clone();
            SuspendedFamily::new(2, 2, f64::NEG_INFINITY, move |p| b.deriv(1, p))
        };
        let v = rds_tr(&dtau, f64::NEG_INFINITY, &r).unwrap().value;
        assert!(v.norm() < 1e-8, "{v}");
        let comm = {
            let (b, cc) = (b.clone(), cc.clone());
            SuspendedFamily::new(2, 2, f64::NEG_INFINITY, move |p| {
                let (x, y) = (b.eval(p), cc.eval(p));
                &x * &y - &y * &x
            })
        };
        assert!(rds_tr(&comm, f64::NEG_INFINITY, &r).unwrap().value.norm() < 1e-8);
        // Schwartz input reduces to the plain double integral
        let g = SuspendedFamily::new(2, 1, f64::NEG_INFINITY, |p| CMat::from_element(1, 1, c((-p[0] * p[0] - p[1] * p[1]).exp(), 0.0)));
        let v = rds_tr(&g, f64::NEG_INFINITY, &r).unwrap().value;
        assert!((v.re - PI).abs() < 1e-10, "{v}");
    }

    #[test]
    fn rds_tr_finite_part_in_t() {
        // ∫ e^{−τ²} dτ · Tr̿ (λ + it)⁻¹ = √π · π
        let r = res();
        let a = SuspendedFamily::new(2, 1, -1.0, |p| CMat::from_element(1, 1, c((-p[1] * p[1]).exp(), 0.0) / c(0.6, p[0])));
        let d = rds_tr(&a, -1.0, &r).unwrap();
        assert_eq!(d.path, DdtrPath::Fit);
        assert!((d.value.re - PI.sqrt() * PI).abs() < 1e-5, "{}", d.value);
    }

    fn gaussian_cutoff(symbol: impl Fn(f64) -> CMat + Send + Sync + 'static, size: usize) -> CuspSuspendedFamily {
        let s = Arc::new(symbol);
        let (s0, s1, s2) = (s.clone(), s.clone(), s.clone());
        let a0 = SuspendedFamily::new(2, size, f64::NEG_INFINITY, move |p| s0(p[1]) * c((-p[0] * p[0]).exp(), 0.0))
            .with_derivatives(vec![
                Arc::new(move |p: &[f64]| s1(p[1]) * c(-2.0 * p[0] * (-p[0] * p[0]).exp(), 0.0)),
                Arc::new(move |p: &[f64]| {
                    let h = 1e-4 * (1.0 + p[1].abs());
                    (s2(p[1] + h) - s2(p[1] - h)) * c((-p[0] * p[0]).exp() / (2.0 * h), 0.0)
                }),
            ]);
        CuspSuspendedFamily::leaf(CssOperator {
            symbols: CssSymbols { size, a0, e: None, a1: None },
            interior: None,
            order: f64::NEG_INFINITY,
            trace_decay: f64::NEG_INFINITY,
        })
    }

    #[test]
    fn suspended_trace_defect_monomials() {
        let z = |tau: f64| CMat::from_element(1, 1, c(tau, -1.0) / c(tau, 1.0));
        let zi = |tau: f64| CMat::from_element(1, 1, c(tau, 1.0) / c(tau, -1.0));
        let (a, b) = (gaussian_cutoff(z, 1), gaussian_cutoff(zi, 1));
        let d = sus_trace_defect(&a, &b, &res()).unwrap();
        // e^{−2t²} integrates to √(π/2); the monomial defect is −1
        let want = -(PI / 2.0).sqrt();
        assert!((d.lhs - want).norm() < 1e-3, "{:?}", d);
        assert!((d.rhs1 - want).norm() < 1e-3, "{:?}", d);
        assert!((d.rhs1 - d.rhs2).norm() < 1e-8, "{:?}", d);
    }

    #[test]
    fn trace_class_defect_vanishes() {
        let k1: InteriorFn = Arc::new(|t| {
            let m = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]) * c(0.3 * (-t * t).exp(), 0.0);
            (m.clone(), m * c(-2.0 * t, 0.0))
        });
        let k2: InteriorFn = Arc::new(|t| {
            let m = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]) * c(0.3 * (-t * t).exp(), 0.0);
            (m.clone(), m * c(-2.0 * t, 0.0))
        });
        let mk = |k: InteriorFn| {
            CuspSuspendedFamily::leaf(CssOperator {
                symbols: CssSymbols::identity(1),
                interior: Some(k),
                order: f64::NEG_INFINITY,
                trace_decay: f64::NEG_INFINITY,
            })
        };
        let d = sus_trace_defect(&mk(k1), &mk(k2), &res()).unwrap();
        assert!(d.lhs.norm() < 1e-12 && d.rhs1.norm() < 1e-12 && d.rhs2.norm() < 1e-12);
    }

    #[test]
    fn dirac_model_invariants() {
        let one = CMat::from_element(1, 1, c(1.0, 0.0));
        let d = dirac_build(&one).unwrap();
        let e = d.indicial(0.4, -1.1);
        let det = e[(0, 0)] * e[(1, 1)] - e[(0, 1)] * e[(1, 0)];
        assert!((det + (0.16 + 1.21 + 1.0)).norm() < 1e-14);
        let pts: Vec<(f64, f64)> = (0..25).map(|k| ((k % 5) as f64 - 2.0, (k / 5) as f64 * 0.7 - 1.4)).collect();
        assert!(d.invariant_defect(&pts) < 1e-12);
        assert!(matches!(dirac_build(&CMat::zeros(1, 1)), Err(Error::Singular { .. })));
        // unitary m: Ê*Ê = (t² + τ² + 1)Id
        let u = CMat::from_row_slice(2, 2, &[c(0.0, 1.0), c(0.0, 0.0), c(0.0, 0.0), c(0.6, 0.8)]);
        let du = dirac_build(&u).unwrap();
        let e = du.indicial(0.5, 2.0);
        assert!(fro(&(e.adjoint() * e - eye(4) * c(0.25 + 4.0 + 1.0, 0.0))) < 1e-13);
        let rep = full_elliptic_check(&d.indicial_family(), SweepResolution::default());
        assert!(rep.all_pass(), "{rep:?}");
        assert!(d.suspended_eta(&fit()).unwrap().eta.norm() < 1e-12);
    }

    #[test]
    fn dirac_css_family_is_invertible_and_eta_is_real() {
        let m = CMat::from_element(1, 1, C64::from_polar(1.0, 0.7));
        let a = dirac_build(&m).unwrap().css_family();
        let r = res();
        let j = a.jet(0.0, &r).unwrap();
        assert!(inverse(&j.value).is_ok());
        let e = eta_cusp(&a, &r).unwrap();
        assert!(e.eta.im.abs() < 1e-8, "{e:?}");
        // rotating m by a phase is a unitary conjugation and leaves η fixed
        let m2 = CMat::from_element(1, 1, C64::from_polar(1.0, 2.1));
        let e2 = eta_cusp(&dirac_build(&m2).unwrap().css_family(), &r).unwrap();
        assert!((e.eta - e2.eta).norm() < 1e-8);
    }

    #[test]
    fn rank_one_interior_fits_the_truncation() {
        let v = [c(1.0, 0.0), c(0.0, 1.0)];
        let k: InteriorFn = Arc::new(move |t| (outer(&v, &v) * c(0.1 * (-t * t).exp(), 0.0), outer(&v, &v) * c(-0.2 * t * (-t * t).exp(), 0.0)));
        let a = CuspSuspendedFamily::interior_only(1, k);
        let j = a.jet(0.0, &res()).unwrap();
        assert!((trace(&j.value.interior) - c(0.2, 0.0)).norm() < 1e-14);
    }
}
