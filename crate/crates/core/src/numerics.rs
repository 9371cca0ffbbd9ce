//! Quadrature on unbounded domains, asymptotic-expansion fitting and
//! discretized paths with 1-form integration.
//!
//! Every reduction goes through [`pairwise_sum`] over the canonical grid
//! order, so results do not depend on the rayon thread count.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{fro, CMat, C64};

/// Values that can be accumulated by the quadrature and path routines.
pub trait Linear: Clone + Send + Sync {
    fn scaled(&self, w: f64) -> Self;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self {
        self.add(&other.scaled(-1.0))
    }
    fn all_finite(&self) -> bool;
    fn magnitude(&self) -> f64;
}

impl Linear for f64 {
    fn scaled(&self, w: f64) -> Self {
        self * w
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl Linear for C64 {
    fn scaled(&self, w: f64) -> Self {
        self * w
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

impl Linear for CMat {
    fn scaled(&self, w: f64) -> Self {
        self * C64::new(w, 0.0)
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn all_finite(&self) -> bool {
        self.iter().all(|z| z.is_finite())
    }
    fn magnitude(&self) -> f64 {
        fro(self)
    }
}

/// Pairwise (cascade) summation in the given order.
pub fn pairwise_sum<T: Linear>(items: &[T]) -> Option<T> {
    const BLOCK: usize = 8;
    match items.len() {
        0 => None,
        n if n <= BLOCK => {
            let mut acc = items[0].clone();
            for x in &items[1..] {
                acc = acc.add(x);
            }
            Some(acc)
        }
        n => {
            let (a, b) = items.split_at(n / 2);
            let sa = pairwise_sum(a)?;
            let sb = pairwise_sum(b)?;
            Some(sa.add(&sb))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rule {
    /// Midpoint/trapezoid rule on θ ∈ (−π/2, π/2) after t = tan θ.
    Trapezoid,
    /// Gauss–Legendre panels on the same substituted axis.
    GaussLegendre { order: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadSpec {
    pub dimension: usize,
    pub node_count: usize,
    /// Symbol order of the integrand along each axis.
    pub tail_decay_order: f64,
    pub rule: Rule,
    /// Allow a non-integrable declared order; the caller extracts a finite part.
    pub finite_part: bool,
    /// Length scale L of the substitution t = L·tan θ.
    pub scale: f64,
}

impl QuadSpec {
    pub fn new(dimension: usize, node_count: usize, tail_decay_order: f64) -> Self {
        QuadSpec {
            dimension,
            node_count,
            tail_decay_order,
            rule: Rule::Trapezoid,
            finite_part: false,
            scale: 1.0,
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_rule(mut self, rule: Rule) -> Self {
        self.rule = rule;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dimension) {
            return Err(Error::Invalid(format!("dimension {} not in 1..=3", self.dimension)));
        }
        if self.node_count < 8 {
            return Err(Error::TooFewNodes(self.node_count));
        }
        if self.tail_decay_order >= -1.0 && !self.finite_part {
            return Err(Error::DecayTooSlow { axis: 0, order: self.tail_decay_order });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct QuadResult<T> {
    pub value: T,
    /// |Q(n) − Q(n/2)|, a conservative estimate for spectrally convergent rules.
    pub error: f64,
}

/// Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        if n == 1 {
            x[0] = 0.0;
            w[0] = 2.0;
            return (x, w);
        }
        // recompute derivative at the converged root
        let (mut p0, mut p1) = (1.0, z);
        for k in 2..=n {
            let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Composite Gauss–Legendre nodes on [a, b].
pub fn gl_panels(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for k in 0..order {
            out.push((lo + 0.5 * h * (x[k] + 1.0), 0.5 * h * w[k]));
        }
    }
    out
}

/// Nodes and weights on ℝ from the tan substitution, canonical ascending order.
pub fn real_line_nodes(n: usize, rule: Rule) -> Vec<(f64, f64)> {
    let thetas: Vec<(f64, f64)> = match rule {
        Rule::Trapezoid => {
            let h = PI / n as f64;
            (0..n).map(|j| (-PI / 2.0 + (j as f64 + 0.5) * h, h)).collect()
        }
        Rule::GaussLegendre { order } => {
            let order = order.max(2);
            let panels = n.div_ceil(order).max(1);
            gl_panels(-PI / 2.0, PI / 2.0, panels, order)
        }
    };
    thetas
        .into_iter()
        .map(|(th, w)| {
            let c = th.cos();
            (th.tan(), w / (c * c))
        })
        .collect()
}

fn quad_once<T, F>(f: &F, spec: &QuadSpec, n: usize) -> Result<T>
where
    T: Linear,
    F: Fn(&[f64]) -> T + Sync,
{
    let nodes: Vec<(f64, f64)> = real_line_nodes(n, spec.rule)
        .into_iter()
        .map(|(x, w)| (spec.scale * x, spec.scale * w))
        .collect();
    let m = nodes.len();
    let total = m.pow(spec.dimension as u32);
    let samples: Vec<Result<T>> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let mut pt = [0.0; 3];
            let mut w = 1.0;
            let mut r = idx;
            for d in (0..spec.dimension).rev() {
                let (x, wx) = nodes[r % m];
                pt[d] = x;
                w *= wx;
                r /= m;
            }
            let v = f(&pt[..spec.dimension]);
            if !v.all_finite() {
                return Err(Error::NonFinite { at: format!("{:?}", &pt[..spec.dimension]) });
            }
            Ok(v.scaled(w))
        })
        .collect();
    let samples: Vec<T> = samples.into_iter().collect::<Result<_>>()?;
    Ok(pairwise_sum(&samples).expect("nonempty grid"))
}

/// Integrate f over ℝ^d (d = spec.dimension).
pub fn quad<T, F>(f: F, spec: &QuadSpec) -> Result<QuadResult<T>>
where
    T: Linear,
    F: Fn(&[f64]) -> T + Sync,
{
    spec.validate()?;
    let fine = quad_once(&f, spec, spec.node_count)?;
    let coarse = quad_once(&f, spec, (spec.node_count / 2).max(4))?;
    let error = fine.sub(&coarse).magnitude();
    Ok(QuadResult { value: fine, error })
}

/// Tensor-product grid on ℝ^d, useful for repeated integration of stored samples.
pub fn grid_nodes(n: usize, rule: Rule) -> Vec<(f64, f64)> {
    real_line_nodes(n, rule)
}

/// Fourth-order central difference.
pub fn central_diff4<T: Linear>(f: impl Fn(f64) -> T, x: f64, h: f64) -> T {
    let a = f(x + h).sub(&f(x - h)).scaled(8.0);
    let b = f(x + 2.0 * h).sub(&f(x - 2.0 * h));
    a.sub(&b).scaled(1.0 / (12.0 * h))
}

// ---------------------------------------------------------------------------
// asymptotic fitting

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BasisTerm {
    Power(f64),
    /// t^k log t
    LogPower(u32),
}

impl BasisTerm {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            BasisTerm::Power(e) => t.powf(e),
            BasisTerm::LogPower(k) => t.powi(k as i32) * t.ln(),
        }
    }

    fn exponent(&self) -> f64 {
        match *self {
            BasisTerm::Power(e) => e,
            BasisTerm::LogPower(k) => k as f64,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            BasisTerm::Power(e) => format!("t^{e}"),
            BasisTerm::LogPower(0) => "log t".to_string(),
            BasisTerm::LogPower(k) => format!("t^{k} log t"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticBasis {
    /// Non-polynomial exponents, strictly decreasing.
    pub power_exponents: Vec<f64>,
    /// Polynomial part t^0, …, t^p; `None` means no polynomial part.
    pub polynomial_degree: Option<u32>,
    /// Adds t^k log t for every polynomial degree k.
    pub include_log: bool,
}

impl AsymptoticBasis {
    pub fn new(power_exponents: Vec<f64>, polynomial_degree: Option<u32>, include_log: bool) -> Self {
        AsymptoticBasis { power_exponents, polynomial_degree, include_log }
    }

    pub fn terms(&self) -> Result<Vec<BasisTerm>> {
        for w in self.power_exponents.windows(2) {
            if !(w[0] > w[1]) {
                return Err(Error::InvalidBasis(format!(
                    "exponents must be strictly decreasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        let mut terms: Vec<BasisTerm> = Vec::new();
        if let Some(p) = self.polynomial_degree {
            for k in 0..=p {
                terms.push(BasisTerm::Power(k as f64));
                if self.include_log {
                    terms.push(BasisTerm::LogPower(k));
                }
            }
        } else if self.include_log {
            terms.push(BasisTerm::LogPower(0));
        }
        for &e in &self.power_exponents {
            if terms.iter().any(|t| matches!(t, BasisTerm::Power(x) if *x == e)) {
                return Err(Error::InvalidBasis(format!("exponent {e} listed twice")));
            }
            terms.push(BasisTerm::Power(e));
        }
        let constants = terms.iter().filter(|t| matches!(t, BasisTerm::Power(x) if *x == 0.0)).count();
        if constants != 1 {
            return Err(Error::InvalidBasis(format!(
                "need exactly one constant term, found {constants}"
            )));
        }
        Ok(terms)
    }
}

/// t_k = t0 · ratio^k.
pub fn geometric_grid(t0: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| t0 * ratio.powi(k as i32)).collect()
}

#[derive(Debug, Clone)]
pub struct AsymptoticFit {
    pub terms: Vec<(BasisTerm, C64)>,
    /// The t⁰ coefficient: the finite part.
    pub constant: C64,
    /// Relative RMS residual.
    pub residual: f64,
    pub condition: f64,
}

impl AsymptoticFit {
    pub fn coefficient(&self, term: BasisTerm) -> Option<C64> {
        self.terms.iter().find(|(t, _)| *t == term).map(|(_, c)| *c)
    }
}

const MAX_COND: f64 = 1e12;

/// Least-squares fit of samples to the basis; the t⁰ coefficient is the finite part.
pub fn asymptotic_fit(samples: &[(f64, C64)], basis: &AsymptoticBasis) -> Result<AsymptoticFit> {
    let terms = basis.terms()?;
    fit_terms(samples, &terms)
}

/// As [`asymptotic_fit`], but near-degenerate exponent pairs are resolved by
/// dropping the smaller coefficient and refitting.
pub fn asymptotic_fit_resolving(samples: &[(f64, C64)], basis: &AsymptoticBasis) -> Result<AsymptoticFit> {
    let mut terms = basis.terms()?;
    loop {
        match fit_terms(samples, &terms) {
            Err(Error::IllConditioned { first, second, .. }) => {
                // fit without the condition gate to compare magnitudes
                let loose = solve_ls(samples, &terms)?;
                let i = terms.iter().position(|t| t.label() == first).unwrap();
                let j = terms.iter().position(|t| t.label() == second).unwrap();
                let drop = if loose.0[i].norm() < loose.0[j].norm() { i } else { j };
                let drop = if is_constant(&terms[drop]) { i + j - drop } else { drop };
                terms.remove(drop);
            }
            other => return other,
        }
    }
}

fn is_constant(t: &BasisTerm) -> bool {
    matches!(t, BasisTerm::Power(x) if *x == 0.0)
}

fn design(samples: &[(f64, C64)], terms: &[BasisTerm]) -> (DMatrix<f64>, Vec<f64>) {
    let m = samples.len();
    let n = terms.len();
    let mut a = DMatrix::<f64>::zeros(m, n);
    for (i, (t, _)) in samples.iter().enumerate() {
        for (j, term) in terms.iter().enumerate() {
            a[(i, j)] = term.eval(*t);
        }
    }
    let mut scales = vec![1.0; n];
    for j in 0..n {
        let s = a.column(j).amax();
        if s > 0.0 {
            scales[j] = s;
            a.column_mut(j).scale_mut(1.0 / s);
        }
    }
    (a, scales)
}

fn solve_ls(samples: &[(f64, C64)], terms: &[BasisTerm]) -> Result<(Vec<C64>, f64)> {
    let (a, scales) = design(samples, terms);
    let re = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.1.re));
    let im = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.1.im));
    let ata = a.transpose() * &a;
    let solve = |b: &DVector<f64>| -> Option<DVector<f64>> {
        let atb = a.transpose() * b;
        if let Some(ch) = ata.clone().cholesky() {
            let x = ch.solve(&atb);
            // accept the normal-equation solution only if it is as good as QR
            let r = &a * &x - b;
            if r.norm() <= 1e-13 * b.norm().max(1e-300) || cond_of(&a) < 1e5 {
                return Some(x);
            }
        }
        let qr = a.clone().qr();
        let qtb = qr.q().transpose() * b;
        qr.r().solve_upper_triangular(&qtb)
    };
    let xr = solve(&re).ok_or_else(|| Error::Singular { at: "fit design matrix".into() })?;
    let xi = solve(&im).ok_or_else(|| Error::Singular { at: "fit design matrix".into() })?;
    let coeffs: Vec<C64> = (0..terms.len()).map(|j| C64::new(xr[j], xi[j]) / scales[j]).collect();
    Ok((coeffs, cond_of(&a)))
}

fn cond_of(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn fit_terms(samples: &[(f64, C64)], terms: &[BasisTerm]) -> Result<AsymptoticFit> {
    if samples.len() < 3 * terms.len() {
        return Err(Error::InvalidBasis(format!(
            "{} samples for {} basis elements; need at least 3 per element",
            samples.len(),
            terms.len()
        )));
    }
    if samples.iter().any(|(t, v)| !t.is_finite() || *t <= 0.0 || !v.is_finite()) {
        return Err(Error::NonFinite { at: "fit samples".into() });
    }
    let (a, _) = design(samples, terms);
    let cond = cond_of(&a);
    if cond > MAX_COND {
        let (i, j) = most_collinear(&a);
        return Err(Error::IllConditioned {
            cond,
            first: terms[i].label(),
            second: terms[j].label(),
        });
    }
    let (coeffs, condition) = solve_ls(samples, terms)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, v) in samples {
        let model: C64 = terms.iter().zip(&coeffs).map(|(term, c)| c * term.eval(*t)).sum();
        num += (model - v).norm_sqr();
        den += v.norm_sqr();
    }
    let residual = if den > 0.0 { (num / den).sqrt() } else { num.sqrt() };
    let constant = terms
        .iter()
        .zip(&coeffs)
        .find(|(t, _)| is_constant(t))
        .map(|(_, c)| *c)
        .unwrap_or_default();
    let _ = terms.iter().map(|t| t.exponent());
    Ok(AsymptoticFit { terms: terms.iter().copied().zip(coeffs).collect(), constant, residual, condition })
}

fn most_collinear(a: &DMatrix<f64>) -> (usize, usize) {
    let n = a.ncols();
    let mut best = (0, 1.min(n - 1), -1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let ci = a.column(i);
            let cj = a.column(j);
            let cos = ci.dot(&cj).abs() / (ci.norm() * cj.norm()).max(1e-300);
            if cos > best.2 {
                best = (i, j, cos);
            }
        }
    }
    (best.0, best.1)
}

// ---------------------------------------------------------------------------
// paths

/// Path or loop values on the uniform grid s_k = k / (len − 1).
#[derive(Debug, Clone)]
pub struct SampledPath<T> {
    pub values: Vec<T>,
    pub closed: bool,
    pub refinement_level: u32,
}

impl<T: Linear> SampledPath<T> {
    pub fn new(values: Vec<T>, closed: bool, refinement_level: u32) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidPath("need at least two samples".into()));
        }
        if closed {
            let first = &values[0];
            let last = values.last().unwrap();
            let gap = last.sub(first).magnitude();
            if gap > 1e-12 * first.magnitude().max(1.0) {
                return Err(Error::InvalidPath(format!("loop endpoints differ by {gap:.3e}")));
            }
        }
        for (k, w) in values.windows(2).enumerate() {
            let step = w[1].sub(&w[0]).magnitude();
            if !(step < 0.5 * w[0].magnitude()) {
                return Err(Error::InvalidPath(format!(
                    "step {k} too large ({step:.3e} vs value {:.3e})",
                    w[0].magnitude()
                )));
            }
        }
        Ok(SampledPath { values, closed, refinement_level })
    }

    /// Sample `f` at `segments + 1` uniform parameters.
    pub fn from_fn(f: impl Fn(f64) -> T + Sync, segments: usize, closed: bool) -> Result<Self> {
        let values: Vec<T> = (0..=segments)
            .into_par_iter()
            .map(|k| f(k as f64 / segments as f64))
            .collect();
        let mut values = values;
        if closed {
            values[segments] = values[0].clone();
        }
        Self::new(values, closed, 0)
    }

    pub fn segments(&self) -> usize {
        self.values.len() - 1
    }

    pub fn concat(&self, other: &Self) -> Result<Self> {
        let mut values = self.values.clone();
        values.extend(other.values[1..].iter().cloned());
        Self::new(values, false, self.refinement_level.max(other.refinement_level))
    }
}

/// Midpoint line integral Σ form(midpoint, Δv); the form sees the chord as tangent.
pub fn integrate_form<T, F>(path: &SampledPath<T>, form: F) -> Result<C64>
where
    T: Linear,
    F: Fn(&T, &T) -> Result<C64> + Sync,
{
    let n = path.segments();
    let terms: Vec<Result<C64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let a = &path.values[k];
            let b = &path.values[k + 1];
            let mid = a.add(b).scaled(0.5);
            let tangent = b.sub(a);
            form(&mid, &tangent).map_err(|e| match e {
                Error::Singular { .. } => Error::Singular { at: format!("s = {:.6}", (k as f64 + 0.5) / n as f64) },
                other => other,
            })
        })
        .collect();
    let terms: Vec<C64> = terms.into_iter().collect::<Result<_>>()?;
    Ok(pairwise_sum(&terms).unwrap_or_default())
}

#[derive(Debug, Clone)]
pub struct RefinedIntegral {
    pub value: C64,
    /// Richardson combination (4·I(4n) − I(2n)) / 3.
    pub extrapolated: C64,
    /// |I(4n) − I(2n)|
    pub change: f64,
    /// log2 of successive change ratios over n, 2n, 4n.
    pub observed_order: f64,
}

/// Integrate over a path sampled at n, 2n and 4n segments and check convergence.
pub fn integrate_form_refined<T, P, F>(sampler: P, segments: usize, closed: bool, form: F, tol: f64) -> Result<RefinedIntegral>
where
    T: Linear,
    P: Fn(f64) -> T + Sync,
    F: Fn(&T, &T) -> Result<C64> + Sync,
{
    let i1 = integrate_form(&SampledPath::from_fn(&sampler, segments, closed)?, &form)?;
    let i2 = integrate_form(&SampledPath::from_fn(&sampler, 2 * segments, closed)?, &form)?;
    let i4 = integrate_form(&SampledPath::from_fn(&sampler, 4 * segments, closed)?, &form)?;
    let d1 = (i2 - i1).norm();
    let d2 = (i4 - i2).norm();
    let observed_order = if d2 > 0.0 && d1 > 0.0 { (d1 / d2).log2() } else { f64::INFINITY };
    if d2 > tol {
        return Err(Error::UnderResolved { raw: i4.re, distance: d2 });
    }
    Ok(RefinedIntegral { value: i4, extrapolated: (4.0 * i4 - i2) / 3.0, change: d2, observed_order })
}
