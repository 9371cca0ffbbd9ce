//! Toeplitz model of the cusp calculus. After the Cayley transform
//! τ ↦ (τ − i)/(τ + i) the cylindrical end becomes the Hardy space of the
//! circle; an operator is T(a₀) plus a finite interior matrix, and truncation
//! to N Fourier modes gives ordinary block Toeplitz matrices.
//!
//! Block layout: row i·r + p is Fourier mode i, component p, with r the
//! matrix size of the symbol. T(a) has blocks a_{i−j}.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::groups::SuspendedFamily;
use crate::linalg::{c, eye, fro, inv, trace, trace_prod, CMat, C64, I};
use crate::numerics::{central_diff4, pairwise_sum};
use crate::star::{tilde_mul, Grid2, TildeElement};

/// Symbol data of an element A + εA′ of the css algebra: the indicial family
/// a₀(t, τ), its x-coefficient and the εx part.
#[derive(Debug, Clone)]
pub struct CssSymbols {
    pub size: usize,
    pub a0: SuspendedFamily,
    pub e: Option<SuspendedFamily>,
    pub a1: Option<SuspendedFamily>,
}

impl CssSymbols {
    pub fn identity(size: usize) -> Self {
        CssSymbols { size, a0: SuspendedFamily::constant(2, eye(size)), e: None, a1: None }
    }
}

pub type ThetaFn = Arc<dyn Fn(f64) -> CMat + Send + Sync>;

/// τ = −cot(θ/2); θ ∈ (0, 2π) covers the real line with θ = 0 at τ = ±∞.
pub fn tau_of_theta(theta: f64) -> f64 {
    -1.0 / (0.5 * theta).tan()
}

pub fn theta_of_tau(tau: f64) -> f64 {
    2.0 * 1.0f64.atan2(-tau)
}

/// Midpoint nodes θ_k = 2π(k + ½)/m.
pub fn theta_nodes(m: usize) -> Vec<f64> {
    (0..m).map(|k| 2.0 * PI * (k as f64 + 0.5) / m as f64).collect()
}

pub const DEFAULT_SAMPLES: usize = 4096;

/// Matrix symbol on the circle, stored as midpoint samples with their Fourier
/// coefficients. The generating function is kept when known.
#[derive(Clone)]
pub struct CircleSymbol {
    pub size: usize,
    pub samples: Arc<Vec<CMat>>,
    coeffs: Arc<Vec<CMat>>,
    source: Option<ThetaFn>,
}

impl std::fmt::Debug for CircleSymbol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CircleSymbol")
            .field("size", &self.size)
            .field("samples", &self.samples.len())
            .field("analytic", &self.source.is_some())
            .finish()
    }
}

fn fourier_coefficients(size: usize, samples: &[CMat]) -> Vec<CMat> {
    let m = samples.len();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(m);
    let mut out = vec![CMat::zeros(size, size); m];
    for p in 0..size {
        for q in 0..size {
            let mut buf: Vec<C64> = samples.iter().map(|s| s[(p, q)]).collect();
            fft.process(&mut buf);
            for (idx, x) in buf.into_iter().enumerate() {
                // index idx stands for j = idx or idx − m
                let j = if idx < m / 2 { idx as f64 } else { idx as f64 - m as f64 };
                out[idx][(p, q)] = x * C64::from_polar(1.0 / m as f64, -PI * j / m as f64);
            }
        }
    }
    out
}

impl CircleSymbol {
    pub fn from_theta(size: usize, m: usize, f: impl Fn(f64) -> CMat + Send + Sync + 'static) -> Self {
        let f: ThetaFn = Arc::new(f);
        let samples: Vec<CMat> = theta_nodes(m).into_par_iter().map(|th| f(th)).collect();
        Self::from_samples(size, samples, Some(f))
    }

    /// Symbol given as a function of τ.
    pub fn from_tau(size: usize, m: usize, f: impl Fn(f64) -> CMat + Send + Sync + 'static) -> Self {
        Self::from_theta(size, m, move |th| f(tau_of_theta(th)))
    }

    pub fn constant(m_samples: usize, value: CMat) -> Self {
        let size = value.nrows();
        Self::from_theta(size, m_samples, move |_| value.clone())
    }

    fn from_samples(size: usize, samples: Vec<CMat>, source: Option<ThetaFn>) -> Self {
        let coeffs = fourier_coefficients(size, &samples);
        CircleSymbol { size, samples: Arc::new(samples), coeffs: Arc::new(coeffs), source }
    }

    pub fn resolution(&self) -> usize {
        self.samples.len()
    }

    /// Fourier coefficient a_j; zero beyond the Nyquist range.
    pub fn coeff(&self, j: i64) -> CMat {
        let m = self.resolution() as i64;
        if 2 * j.abs() >= m {
            return CMat::zeros(self.size, self.size);
        }
        self.coeffs[j.rem_euclid(m) as usize].clone()
    }

    pub fn eval(&self, theta: f64) -> CMat {
        if let Some(f) = &self.source {
            return f(theta);
        }
        let half = self.resolution() as i64 / 2;
        let mut s = CMat::zeros(self.size, self.size);
        for j in (1 - half)..half {
            s += self.coeff(j) * C64::from_polar(1.0, j as f64 * theta);
        }
        s
    }

    /// dσ/dθ by central differences on the generating function, else spectrally.
    pub fn theta_derivative(&self, theta: f64) -> CMat {
        if let Some(f) = &self.source {
            let h = (0.25 * PI / self.resolution() as f64).min(1e-4);
            return central_diff4(|x| f(x), theta, h);
        }
        let half = self.resolution() as i64 / 2;
        let mut s = CMat::zeros(self.size, self.size);
        for j in (1 - half)..half {
            s += self.coeff(j) * (I * j as f64 * C64::from_polar(1.0, j as f64 * theta));
        }
        s
    }

    fn zip(&self, o: &CircleSymbol, op: impl Fn(&CMat, &CMat) -> CMat + Send + Sync + Copy + 'static) -> Result<CircleSymbol> {
        if self.size != o.size || self.resolution() != o.resolution() {
            return Err(Error::Shape("circle symbols differ in size or resolution".into()));
        }
        let samples: Vec<CMat> = self.samples.par_iter().zip(o.samples.par_iter()).map(|(a, b)| op(a, b)).collect();
        let source = match (&self.source, &o.source) {
            (Some(f), Some(g)) => {
                let (f, g) = (f.clone(), g.clone());
                Some(Arc::new(move |th: f64| op(&f(th), &g(th))) as ThetaFn)
            }
            _ => None,
        };
        Ok(Self::from_samples(self.size, samples, source))
    }

    pub fn mul(&self, o: &CircleSymbol) -> Result<CircleSymbol> {
        self.zip(o, |a, b| a * b)
    }

    pub fn add(&self, o: &CircleSymbol) -> Result<CircleSymbol> {
        self.zip(o, |a, b| a + b)
    }

    pub fn scale(&self, z: C64) -> CircleSymbol {
        let samples: Vec<CMat> = self.samples.iter().map(|a| a * z).collect();
        let source = self.source.clone().map(|f| Arc::new(move |th: f64| f(th) * z) as ThetaFn);
        Self::from_samples(self.size, samples, source)
    }

    pub fn inv(&self) -> Result<CircleSymbol> {
        let m = self.resolution();
        let samples: Vec<Result<CMat>> = self
            .samples
            .par_iter()
            .enumerate()
            .map(|(k, a)| inv(a, || format!("θ = {:.6}", 2.0 * PI * (k as f64 + 0.5) / m as f64)))
            .collect();
        let samples: Vec<CMat> = samples.into_iter().collect::<Result<_>>()?;
        let source = self.source.clone().map(|f| {
            Arc::new(move |th: f64| inv(&f(th), String::new).unwrap_or_else(|_| f(th) * C64::new(f64::NAN, 0.0))) as ThetaFn
        });
        Ok(Self::from_samples(self.size, samples, source))
    }

    pub fn is_zero(&self) -> bool {
        self.samples.iter().all(|a| a.iter().all(|z| *z == C64::new(0.0, 0.0)))
    }
}

/// N×N block Toeplitz truncation T_N(a), blocks a_{i−j}.
pub fn toeplitz_matrix(a: &CircleSymbol, n: usize) -> CMat {
    block_matrix(a, n, |i, j| i as i64 - j as i64)
}

/// Block Hankel H_N(a) with blocks a_{i+j+1}, or a_{−(i+j+1)} when `reflected`.
pub fn hankel_matrix(a: &CircleSymbol, n: usize, reflected: bool) -> CMat {
    let s = if reflected { -1 } else { 1 };
    block_matrix(a, n, |i, j| s * (i + j + 1) as i64)
}

fn block_matrix(a: &CircleSymbol, n: usize, index: impl Fn(usize, usize) -> i64) -> CMat {
    let r = a.size;
    let mut m = CMat::zeros(r * n, r * n);
    for i in 0..n {
        for j in 0..n {
            let blk = a.coeff(index(i, j));
            m.view_mut((i * r, j * r), (r, r)).copy_from(&blk);
        }
    }
    m
}

/// Model operator T(a₀) + K with optional boundary x-coefficient and εx part.
#[derive(Debug, Clone)]
pub struct ModelCuspOperator {
    pub size: usize,
    /// Truncation size N in Fourier modes.
    pub blocks: usize,
    pub symbol: CircleSymbol,
    pub x_part: Option<CircleSymbol>,
    /// rN × rN interior matrix.
    pub interior: CMat,
    pub eps_part: Option<Box<ModelCuspOperator>>,
}

/// The N×N realization T_N(a₀) + K.
#[derive(Debug, Clone)]
pub struct ToeplitzTruncation {
    pub blocks: usize,
    pub matrix: CMat,
}

impl ModelCuspOperator {
    pub fn toeplitz(symbol: CircleSymbol, blocks: usize) -> Result<Self> {
        if 4 * blocks > symbol.resolution() {
            return Err(Error::Shape(format!(
                "{} samples cannot resolve the Hankel range of {} modes",
                symbol.resolution(),
                blocks
            )));
        }
        let r = symbol.size;
        Ok(ModelCuspOperator { size: r, blocks, symbol, x_part: None, interior: CMat::zeros(r * blocks, r * blocks), eps_part: None })
    }

    pub fn identity(size: usize, blocks: usize, samples: usize) -> Result<Self> {
        Self::toeplitz(CircleSymbol::constant(samples, eye(size)), blocks)
    }

    /// Embed a small interior matrix in the leading modes. The declared rank
    /// r·N/4 bounds the support.
    pub fn with_interior(mut self, k: &CMat) -> Result<Self> {
        let n = self.size * self.blocks;
        if k.nrows() != k.ncols() || 4 * k.nrows() > n {
            return Err(Error::Shape(format!("interior of size {} exceeds a quarter of {n}", k.nrows())));
        }
        self.interior.view_mut((0, 0), (k.nrows(), k.ncols())).copy_from(k);
        Ok(self)
    }

    pub fn with_x_part(mut self, e: CircleSymbol) -> Self {
        self.x_part = Some(e);
        self
    }

    pub fn with_eps_part(mut self, eps: ModelCuspOperator) -> Self {
        self.eps_part = Some(Box::new(eps));
        self
    }

    /// Same operator at another truncation, padding or cropping the interior.
    pub fn with_blocks(&self, blocks: usize) -> Result<Self> {
        let r = self.size;
        let mut k = CMat::zeros(r * blocks, r * blocks);
        let keep = (r * blocks).min(r * self.blocks);
        k.view_mut((0, 0), (keep, keep)).copy_from(&self.interior.view((0, 0), (keep, keep)));
        let mut out = ModelCuspOperator::toeplitz(self.symbol.clone(), blocks)?;
        out.interior = k;
        out.x_part = self.x_part.clone();
        out.eps_part = match &self.eps_part {
            Some(e) => Some(Box::new(e.with_blocks(blocks)?)),
            None => None,
        };
        Ok(out)
    }

    pub fn realize(&self) -> ToeplitzTruncation {
        ToeplitzTruncation { blocks: self.blocks, matrix: toeplitz_matrix(&self.symbol, self.blocks) + &self.interior }
    }

    fn check(&self, o: &ModelCuspOperator) -> Result<()> {
        if self.size != o.size || self.blocks != o.blocks || self.symbol.resolution() != o.symbol.resolution() {
            return Err(Error::Shape("model operators differ in size, truncation or resolution".into()));
        }
        Ok(())
    }

    pub fn add(&self, o: &ModelCuspOperator) -> Result<ModelCuspOperator> {
        self.check(o)?;
        let x_part = match (&self.x_part, &o.x_part) {
            (Some(a), Some(b)) => Some(a.add(b)?),
            (Some(a), None) | (None, Some(a)) => Some(a.clone()),
            (None, None) => None,
        };
        let eps_part = match (&self.eps_part, &o.eps_part) {
            (Some(a), Some(b)) => Some(Box::new(a.add(b)?)),
            (Some(a), None) | (None, Some(a)) => Some(a.clone()),
            (None, None) => None,
        };
        Ok(ModelCuspOperator {
            size: self.size,
            blocks: self.blocks,
            symbol: self.symbol.add(&o.symbol)?,
            x_part,
            interior: &self.interior + &o.interior,
            eps_part,
        })
    }

    pub fn scale(&self, z: C64) -> ModelCuspOperator {
        ModelCuspOperator {
            size: self.size,
            blocks: self.blocks,
            symbol: self.symbol.scale(z),
            x_part: self.x_part.as_ref().map(|s| s.scale(z)),
            interior: &self.interior * z,
            eps_part: self.eps_part.as_ref().map(|e| Box::new(e.scale(z))),
        }
    }

    fn without_eps(&self) -> ModelCuspOperator {
        ModelCuspOperator { eps_part: None, ..self.clone() }
    }
}

fn is_zero(m: &CMat) -> bool {
    m.iter().all(|z| *z == C64::new(0.0, 0.0))
}

/// Interior part of T(a)T(b) − T(ab) together with the cross terms:
/// −H(a)H(b̃) + T(a)K_B + K_A T(b) + K_A K_B.
fn interior_product(a: &ModelCuspOperator, b: &ModelCuspOperator) -> CMat {
    let n = a.blocks;
    let mut k = -(hankel_matrix(&a.symbol, n, false) * hankel_matrix(&b.symbol, n, true));
    if !is_zero(&b.interior) {
        k += toeplitz_matrix(&a.symbol, n) * &b.interior;
    }
    if !is_zero(&a.interior) {
        k += &a.interior * toeplitz_matrix(&b.symbol, n);
        if !is_zero(&b.interior) {
            k += &a.interior * &b.interior;
        }
    }
    k
}

/// Composition. The indicial symbol multiplies, the x-coefficient obeys the
/// Leibniz rule and the interior collects the Hankel defect. The εx part is
/// A∘B′ + A′∘B; the bracket correction needs t-derivatives and is added at the
/// symbol level (see `realize_css_product`).
pub fn compose(a: &ModelCuspOperator, b: &ModelCuspOperator) -> Result<ModelCuspOperator> {
    a.check(b)?;
    let x_part = match (&a.x_part, &b.x_part) {
        (None, None) => None,
        (ea, eb) => {
            let mut s = CircleSymbol::constant(a.symbol.resolution(), CMat::zeros(a.size, a.size));
            if let Some(f) = eb {
                s = s.add(&a.symbol.mul(f)?)?;
            }
            if let Some(e) = ea {
                s = s.add(&e.mul(&b.symbol)?)?;
            }
            Some(s)
        }
    };
    let eps_part = match (&a.eps_part, &b.eps_part) {
        (None, None) => None,
        (ea, eb) => {
            let mut parts = Vec::new();
            if let Some(eb) = eb {
                parts.push(compose(&a.without_eps(), eb)?);
            }
            if let Some(ea) = ea {
                parts.push(compose(ea, &b.without_eps())?);
            }
            let mut it = parts.into_iter();
            let first = it.next().unwrap();
            Some(Box::new(it.try_fold(first, |acc, p| acc.add(&p))?))
        }
    };
    Ok(ModelCuspOperator {
        size: a.size,
        blocks: a.blocks,
        symbol: a.symbol.mul(&b.symbol)?,
        x_part,
        interior: interior_product(a, b),
        eps_part,
    })
}

/// bTr(A∘B) from traces of block products, without forming the product.
pub fn btr_of_product(a: &ModelCuspOperator, b: &ModelCuspOperator) -> Result<C64> {
    a.check(b)?;
    let n = a.blocks;
    let mut s = -trace_prod(&hankel_matrix(&a.symbol, n, false), &hankel_matrix(&b.symbol, n, true));
    if !is_zero(&b.interior) {
        s += trace_prod(&toeplitz_matrix(&a.symbol, n), &b.interior);
    }
    if !is_zero(&a.interior) {
        s += trace_prod(&a.interior, &toeplitz_matrix(&b.symbol, n));
        s += trace_prod(&a.interior, &b.interior);
    }
    Ok(s)
}

/// (T(a) + K)⁻¹ = T(a⁻¹) − (I + R)⁻¹R T(a⁻¹) with R = −H(a⁻¹)H(ã) + T(a⁻¹)K.
pub fn inverse(a: &ModelCuspOperator) -> Result<ModelCuspOperator> {
    let n = a.blocks;
    let ainv = a.symbol.inv()?;
    let t_inv = toeplitz_matrix(&ainv, n);
    let mut r = -(hankel_matrix(&ainv, n, false) * hankel_matrix(&a.symbol, n, true));
    if !is_zero(&a.interior) {
        r += &t_inv * &a.interior;
    }
    let dim = r.nrows();
    let lu = (CMat::identity(dim, dim) + &r).lu();
    let rt = &r * &t_inv;
    let k = -lu.solve(&rt).ok_or_else(|| Error::Singular { at: "interior of the model operator".into() })?;
    if !k.iter().all(|z| z.is_finite()) || fro(&k) > 1e12 {
        return Err(Error::Singular { at: "interior of the model operator".into() });
    }
    let x_part = match &a.x_part {
        Some(e) => Some(ainv.mul(e)?.mul(&ainv)?.scale(c(-1.0, 0.0))),
        None => None,
    };
    Ok(ModelCuspOperator { size: a.size, blocks: n, symbol: ainv, x_part, interior: k, eps_part: None })
}

/// Regularized trace: the finite-part constant of the Toeplitz diagonal is
/// set to zero, leaving the trace of the interior.
pub fn btr(a: &ModelCuspOperator) -> C64 {
    trace(&a.interior)
}

/// (1/2π) ∫ Tr I₁(A)(τ) dτ, by the midpoint rule in θ with dτ = dθ / (2 sin²(θ/2)).
pub fn rtr_boundary(a: &ModelCuspOperator) -> Result<C64> {
    let e = a.x_part.as_ref().ok_or_else(|| Error::Missing("boundary x-coefficient".into()))?;
    let m = e.resolution();
    let h = 2.0 * PI / m as f64;
    let terms: Vec<C64> = theta_nodes(m)
        .iter()
        .zip(e.samples.iter())
        .map(|(&th, s)| {
            let sn = (0.5 * th).sin();
            trace(s) * (h / (2.0 * sn * sn))
        })
        .collect();
    Ok(pairwise_sum(&terms).unwrap_or_default() / (2.0 * PI))
}

/// (1/2πi) ∫ Tr(a ∂_τb) dτ = (1/2πi) ∮ Tr(a ∂_θb) dθ, evaluated exactly on the
/// trigonometric interpolants as Σ_j j·Tr(a_{−j} b_j). Antisymmetry in (a, b)
/// then holds to rounding.
pub fn defect_integral(a: &CircleSymbol, b: &CircleSymbol) -> C64 {
    let half = a.resolution().min(b.resolution()) as i64 / 2;
    let terms: Vec<C64> = ((1 - half)..half)
        .into_par_iter()
        .map(|j| trace_prod(&a.coeff(-j), &b.coeff(j)) * j as f64)
        .collect();
    pairwise_sum(&terms).unwrap_or_default()
}

/// The same integral by the midpoint rule on the generating functions, with
/// θ-derivatives by central differences. Independent of the Fourier data.
pub fn defect_quadrature(a: &CircleSymbol, b: &CircleSymbol) -> C64 {
    let m = a.resolution().max(b.resolution());
    let h = 2.0 * PI / m as f64;
    let terms: Vec<C64> = theta_nodes(m)
        .into_par_iter()
        .map(|th| trace_prod(&a.eval(th), &b.theta_derivative(th)) * h)
        .collect();
    pairwise_sum(&terms).unwrap_or_default() / (2.0 * PI * I)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceDefect {
    /// bTr([A, B]) at N₀ and 2N₀.
    pub lhs_coarse: C64,
    pub lhs_fine: C64,
    /// Richardson step 2·L(2N₀) − L(N₀).
    pub lhs: C64,
    pub rhs: C64,
    /// log₂ of the error ratio between N₀ and 2N₀; infinite when both vanish.
    pub observed_order: f64,
}

fn commutator_btr(a: &ModelCuspOperator, b: &ModelCuspOperator) -> Result<C64> {
    Ok(btr_of_product(a, b)? - btr_of_product(b, a)?)
}

/// bTr(A∘B − B∘A) at the operators' truncation and its double, against
/// (1/2πi)∫Tr(a₀∂_τb₀)dτ.
pub fn trace_defect(a: &ModelCuspOperator, b: &ModelCuspOperator) -> Result<TraceDefect> {
    a.check(b)?;
    let n = a.blocks;
    let coarse = commutator_btr(a, b)?;
    let fine = commutator_btr(&a.with_blocks(2 * n)?, &b.with_blocks(2 * n)?)?;
    let rhs = defect_integral(&a.symbol, &b.symbol);
    let (e1, e2) = ((coarse - rhs).norm(), (fine - rhs).norm());
    let observed_order = if e2 > 0.0 && e1 > 0.0 { (e1 / e2).log2() } else { f64::INFINITY };
    Ok(TraceDefect { lhs_coarse: coarse, lhs_fine: fine, lhs: 2.0 * fine - coarse, rhs, observed_order })
}

/// Symbols with algebraically decaying Fourier coefficients: (1 + τ²)^{−1/2}
/// = |sin(θ/2)| has a kink at τ = ∞.
pub fn smooth_symbol_pair(samples: usize) -> (CircleSymbol, CircleSymbol) {
    let a = CircleSymbol::from_tau(2, samples, |tau| {
        let s = 1.0 / (1.0 + tau * tau).sqrt();
        CMat::from_row_slice(2, 2, &[c(1.0 + 0.5 * s, 0.0), c(0.3 * (-(tau - 0.5).powi(2)).exp(), 0.0), c(0.0, 0.4 * s * tau / (1.0 + tau * tau).sqrt()), c(1.0, 0.2 * s)])
    });
    let b = CircleSymbol::from_tau(2, samples, |tau| {
        let s = 1.0 / (1.0 + tau * tau).sqrt();
        CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.6 * s), c(0.5 * s * s, 0.0), c(1.0 - 0.3 * s, 0.1 * tau * s * s)])
    });
    (a, b)
}

/// Classical order-0 symbols, smooth in τ: a = 1 + ½(1 + τ²)^{−1/2} has a
/// kink at τ = ∞ and b = 1 + 0.3τ(1 + τ²)^{−1/2} has different limits at
/// ±∞. Their coefficient products decay like 1/j³, so the truncated defect
/// converges like 1/N.
pub fn classical_symbol_pair(samples: usize) -> (CircleSymbol, CircleSymbol) {
    let a = CircleSymbol::from_tau(2, samples, |tau| {
        let s = 1.0 / (1.0 + tau * tau).sqrt();
        CMat::from_row_slice(2, 2, &[c(1.0 + 0.5 * s, 0.0), c(0.3 * (-(tau - 0.5).powi(2)).exp(), 0.0), c(0.0, 0.0), c(1.0, 0.0)])
    });
    let b = CircleSymbol::from_tau(2, samples, |tau| {
        let s = 1.0 / (1.0 + tau * tau).sqrt();
        CMat::from_row_slice(2, 2, &[c(1.0 + 0.3 * tau * s, 0.0), c(0.0, 0.0), c(0.2 * s, 0.0), c(1.0, 0.0)])
    });
    (a, b)
}

/// The monomials z and z⁻¹ with z = e^{iθ} = (τ − i)/(τ + i).
pub fn monomial_pair(samples: usize) -> (CircleSymbol, CircleSymbol) {
    (
        CircleSymbol::from_theta(1, samples, |th| CMat::from_element(1, 1, C64::from_polar(1.0, th))),
        CircleSymbol::from_theta(1, samples, |th| CMat::from_element(1, 1, C64::from_polar(1.0, -th))),
    )
}

// ---------------------------------------------------------------------------
// realizing css products by matrix algebra

/// Symbol of a row of a block Toeplitz-like matrix, read from mode `row`:
/// Σ_j M_{row, row−j} e^{ijθ}.
pub fn row_symbol(m: &CMat, size: usize, row: usize, theta: f64) -> CMat {
    let n = m.nrows() / size;
    let mut s = CMat::zeros(size, size);
    for col in 0..n {
        let j = row as f64 - col as f64;
        s += m.view((row * size, col * size), (size, size)) * C64::from_polar(1.0, j * theta);
    }
    s
}

fn slice_symbol(f: &SuspendedFamily, t: f64, samples: usize, which: Option<usize>) -> CircleSymbol {
    let f = f.clone();
    CircleSymbol::from_tau(f.size, samples, move |tau| match which {
        None => f.eval(&[t, tau]),
        Some(ax) => f.deriv(ax, &[t, tau]),
    })
}

/// The three slots (1, x, εx) of A∘B at fixed t, realized as products of N×N
/// Toeplitz matrices; the εx slot includes −(iε/2)(D_tA D_{log x}B − D_{log x}A D_tB).
#[derive(Debug, Clone)]
pub struct RealizedCss {
    pub size: usize,
    pub x0: CMat,
    pub x1: CMat,
    pub eps: CMat,
}

pub fn realize_css_product(a: &CssSymbols, b: &CssSymbols, t: f64, blocks: usize, samples: usize) -> Result<RealizedCss> {
    if a.size != b.size {
        return Err(Error::Shape("css symbols differ in size".into()));
    }
    let r = a.size;
    let tm = |f: Option<&SuspendedFamily>, which: Option<usize>| -> CMat {
        match f {
            Some(f) => toeplitz_matrix(&slice_symbol(f, t, samples, which), blocks),
            None => CMat::zeros(r * blocks, r * blocks),
        }
    };
    let (ta, tb) = (tm(Some(&a.a0), None), tm(Some(&b.a0), None));
    let (te, tf) = (tm(a.e.as_ref(), None), tm(b.e.as_ref(), None));
    let (ta1, tb1) = (tm(a.a1.as_ref(), None), tm(b.a1.as_ref(), None));
    let (dta, dtaua) = (tm(Some(&a.a0), Some(0)), tm(Some(&a.a0), Some(1)));
    let (dtb, dtaub) = (tm(Some(&b.a0), Some(0)), tm(Some(&b.a0), Some(1)));
    // D = −i∂ on both factors gives (−i)² = −1 in front of the derivative products
    let bracket_term = (&dta * &dtaub - &dtaua * &dtb) * (I * 0.5);
    Ok(RealizedCss {
        size: r,
        x0: &ta * &tb,
        x1: &ta * &tf + &te * &tb,
        eps: &ta * &tb1 + &ta1 * &tb + bracket_term,
    })
}

/// Largest deviation between the bulk-row symbols of the realized product and
/// Ĩ(A)⋆̃Ĩ(B), over the τ nodes of a single-t grid.
pub fn itilde_homomorphism_residual(a: &CssSymbols, b: &CssSymbols, t: f64, blocks: usize, samples: usize, taus: &[f64]) -> Result<f64> {
    let realized = realize_css_product(a, b, t, blocks, samples)?;
    let grid = Arc::new(Grid2 { t: vec![(t, 1.0)], tau: taus.iter().map(|&x| (x, 1.0)).collect() });
    let prod: TildeElement = tilde_mul(&crate::star::itilde(a, &grid)?, &crate::star::itilde(b, &grid)?)?;
    let row = blocks / 2;
    let mut worst: f64 = 0.0;
    for (k, &tau) in taus.iter().enumerate() {
        let th = theta_of_tau(tau);
        let r = a.size;
        worst = worst
            .max(fro(&(row_symbol(&realized.x0, r, row, th) - &prod.a0[k].v)))
            .max(fro(&(row_symbol(&realized.x1, r, row, th) - &prod.e[k])))
            .max(fro(&(row_symbol(&realized.eps, r, row, th) - &prod.a1[k])));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::random_css;
    use crate::linalg::re;
    use proptest::prelude::*;

    #[test]
    fn fourier_coefficients_of_monomials() {
        let (z, zi) = monomial_pair(64);
        assert!((z.coeff(1)[(0, 0)] - 1.0).norm() < 1e-14);
        assert!(z.coeff(0)[(0, 0)].norm() < 1e-14 && z.coeff(-1)[(0, 0)].norm() < 1e-14);
        assert!((zi.coeff(-1)[(0, 0)] - 1.0).norm() < 1e-14);
    }

    #[test]
    fn cayley_coordinates_agree() {
        for &tau in &[-3.0, -0.2, 0.0, 1.7] {
            let th = theta_of_tau(tau);
            assert!((tau_of_theta(th) - tau).abs() < 1e-12);
            let z = (c(tau, -1.0)) / c(tau, 1.0);
            assert!((z - C64::from_polar(1.0, th)).norm() < 1e-12);
        }
    }

    #[test]
    fn identity_composition_and_finite_rank() {
        let (a, _) = smooth_symbol_pair(512);
        let k = crate::fixtures::random_perturbation(6, 1, 1.0);
        let op = ModelCuspOperator::toeplitz(a, 32).unwrap().with_interior(&k).unwrap();
        let id = ModelCuspOperator::identity(2, 32, 512).unwrap();
        let p = compose(&op, &id).unwrap();
        assert!(fro(&(&p.interior - &op.interior)) < 1e-12);
        let p = compose(&id, &op).unwrap();
        assert!(fro(&(&p.interior - &op.interior)) < 1e-12);

        let k2 = crate::fixtures::random_perturbation(6, 2, 1.0);
        let zero = CircleSymbol::constant(512, CMat::zeros(2, 2));
        let fa = ModelCuspOperator::toeplitz(zero.clone(), 32).unwrap().with_interior(&k).unwrap();
        let fb = ModelCuspOperator::toeplitz(zero, 32).unwrap().with_interior(&k2).unwrap();
        let p = compose(&fa, &fb).unwrap();
        let direct = &fa.interior * &fb.interior;
        assert!(fro(&(&p.interior - direct)) < 1e-13);
        assert!((btr(&fa) - trace(&k)).norm() < 1e-12);
    }

    #[test]
    fn btr_examples() {
        let (a, _) = smooth_symbol_pair(512);
        assert_eq!(btr(&ModelCuspOperator::toeplitz(a, 16).unwrap()), C64::new(0.0, 0.0));
        let mut k = CMat::zeros(2, 2);
        k[(0, 0)] = c(1.0, 2.0);
        k[(1, 1)] = c(2.0, 0.0);
        let op = ModelCuspOperator::identity(1, 16, 128).unwrap().with_interior(&k).unwrap();
        assert!((btr(&op) - c(3.0, 2.0)).norm() < 1e-15);
    }

    #[test]
    fn monomial_defect_is_exactly_minus_one() {
        let (z, zi) = monomial_pair(64);
        for n in [2, 8] {
            let a = ModelCuspOperator::toeplitz(z.clone(), n).unwrap();
            let b = ModelCuspOperator::toeplitz(zi.clone(), n).unwrap();
            let ab = compose(&a, &b).unwrap();
            // the interior defect is minus the projector onto the first mode
            let mut p0 = CMat::zeros(n, n);
            p0[(0, 0)] = re(1.0);
            assert!(fro(&(&ab.interior + p0)) < 1e-14);
            let d = trace_defect(&a, &b).unwrap();
            assert!((d.lhs_coarse + 1.0).norm() < 1e-13);
            assert!((d.rhs + 1.0).norm() < 1e-9, "{}", d.rhs);
        }
    }

    #[test]
    fn finite_rank_defect_vanishes() {
        let zero = CircleSymbol::constant(256, CMat::zeros(2, 2));
        let fa = ModelCuspOperator::toeplitz(zero.clone(), 16)
            .unwrap()
            .with_interior(&crate::fixtures::random_perturbation(8, 3, 1.0))
            .unwrap();
        let fb = ModelCuspOperator::toeplitz(zero, 16)
            .unwrap()
            .with_interior(&crate::fixtures::random_perturbation(8, 4, 1.0))
            .unwrap();
        let d = trace_defect(&fa, &fb).unwrap();
        assert!(d.lhs.norm() < 1e-12 && d.rhs.norm() < 1e-14);
    }

    #[test]
    fn rtr_boundary_gaussian() {
        let e = CircleSymbol::from_tau(2, 1024, |tau| eye(2) * re((-tau * tau).exp()));
        let op = ModelCuspOperator::identity(2, 16, 1024).unwrap().with_x_part(e.clone());
        let v = rtr_boundary(&op).unwrap();
        assert!((v - re(PI.sqrt() / PI)).norm() < 1e-12, "{v}");
        let op2 = ModelCuspOperator::identity(2, 16, 1024).unwrap().with_x_part(e.scale(re(2.0)));
        assert!((rtr_boundary(&op2).unwrap() - 2.0 * v).norm() < 1e-14);
        let zero = ModelCuspOperator::identity(2, 16, 1024).unwrap().with_x_part(CircleSymbol::constant(1024, CMat::zeros(2, 2)));
        assert_eq!(rtr_boundary(&zero).unwrap(), C64::new(0.0, 0.0));
        assert!(rtr_boundary(&ModelCuspOperator::identity(2, 16, 1024).unwrap()).is_err());
    }

    #[test]
    fn defect_antisymmetry() {
        let (a, b) = smooth_symbol_pair(2048);
        let ab = defect_integral(&a, &b);
        let ba = defect_integral(&b, &a);
        assert!((ab + ba).norm() < 1e-10);
        assert!(ab.norm() > 1e-2);
        // quadrature on the generating functions sees the kink at τ = ∞ only at O(h²)
        assert!((defect_quadrature(&a, &b) - ab).norm() < 1e-4);
    }

    #[test]
    fn classical_defect_converges_at_first_order() {
        let (a, b) = classical_symbol_pair(2048);
        let d = trace_defect(&ModelCuspOperator::toeplitz(a, 64).unwrap(), &ModelCuspOperator::toeplitz(b, 64).unwrap()).unwrap();
        assert!(d.observed_order > 0.9, "{d:?}");
        assert!((d.lhs_coarse - d.rhs).norm() > 1e-5);
        assert!((d.lhs - d.rhs).norm() < 1e-4);
    }

    #[test]
    fn inverse_round_trip() {
        let css = random_css(2, 4, 0.5);
        let a0 = css.a0.clone();
        let sym = CircleSymbol::from_tau(2, 512, move |tau| a0.eval(&[0.3, tau]));
        let op = ModelCuspOperator::toeplitz(sym, 48)
            .unwrap()
            .with_interior(&crate::fixtures::random_perturbation(6, 5, 0.4))
            .unwrap();
        let oi = inverse(&op).unwrap();
        let p = compose(&op, &oi).unwrap().realize().matrix;
        let q = compose(&oi, &op).unwrap().realize().matrix;
        // compare the leading block, away from the truncation corner
        let lead = 2 * 16;
        let id = CMat::identity(lead, lead);
        assert!(fro(&(p.view((0, 0), (lead, lead)) - &id)) < 1e-9);
        assert!(fro(&(q.view((0, 0), (lead, lead)) - &id)) < 1e-9);
    }

    #[test]
    fn itilde_matches_realized_product() {
        let a = random_css(2, 1, 0.5);
        let b = random_css(2, 2, 0.5);
        let taus = [-2.0, -0.7, 0.0, 0.4, 1.3];
        let r = itilde_homomorphism_residual(&a, &b, 0.2, 128, 1024, &taus).unwrap();
        assert!(r < 1e-8, "{r}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(6))]
        #[test]
        fn compose_is_associative_on_realizations(seed in 0u64..1000) {
            let mk = |s: u64| {
                let f = crate::fixtures::gaussian_packet_family(2, s, 0.5);
                let sym = CircleSymbol::from_tau(2, 512, move |tau| f.eval(&[0.0, tau]));
                ModelCuspOperator::toeplitz(sym, 32).unwrap()
                    .with_interior(&crate::fixtures::random_perturbation(4, s, 0.5)).unwrap()
            };
            let (a, b, cc) = (mk(seed), mk(seed + 1), mk(seed + 2));
            let l = compose(&compose(&a, &b).unwrap(), &cc).unwrap();
            let r = compose(&a, &compose(&b, &cc).unwrap()).unwrap();
            prop_assert!(fro(&(&l.interior - &r.interior)) < 1e-8);
        }
    }
}
