//! Bigraded orders of product-suspended families, the P + it constructor and
//! full-ellipticity sweeps.

use std::ops::Add;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groups::Sampler;
use crate::linalg::{c, eye, fro, hermitian_eigenvalues, inv, is_hermitian, smallest_singular_value, CMat, I};
use crate::numerics::central_diff4;

/// (k, k′): symbol order and order at the new boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BigradedOrder {
    pub k: f64,
    pub k_prime: f64,
}

impl BigradedOrder {
    pub const ZERO: BigradedOrder = BigradedOrder { k: 0.0, k_prime: 0.0 };

    pub fn new(k: f64, k_prime: f64) -> Self {
        BigradedOrder { k, k_prime }
    }

    /// A suspended operator of order m has bigraded order (m, m).
    pub fn from_suspended(m: f64) -> Self {
        BigradedOrder { k: m, k_prime: m }
    }

    pub fn lowered(self) -> Self {
        BigradedOrder { k: self.k - 1.0, k_prime: self.k_prime - 1.0 }
    }
}

impl Add for BigradedOrder {
    type Output = BigradedOrder;
    fn add(self, o: BigradedOrder) -> BigradedOrder {
        BigradedOrder { k: self.k + o.k, k_prime: self.k_prime + o.k_prime }
    }
}

pub fn order_mul(a: BigradedOrder, b: BigradedOrder) -> BigradedOrder {
    a + b
}

/// Matrix family over ℝᵖ with its bigraded order and, when known, analytic
/// partial derivatives as families one order lower.
#[derive(Clone)]
pub struct PSFamily {
    pub order: BigradedOrder,
    pub arity: usize,
    pub size: usize,
    pub sampler: Sampler,
    pub derivatives: Option<Vec<PSFamily>>,
}

impl std::fmt::Debug for PSFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PSFamily")
            .field("order", &self.order)
            .field("arity", &self.arity)
            .field("size", &self.size)
            .field("analytic", &self.derivatives.is_some())
            .finish()
    }
}

impl PSFamily {
    pub fn new(order: BigradedOrder, arity: usize, size: usize, f: impl Fn(&[f64]) -> CMat + Send + Sync + 'static) -> Self {
        PSFamily { order, arity, size, sampler: Arc::new(f), derivatives: None }
    }

    pub fn constant(order: BigradedOrder, arity: usize, m: CMat) -> Self {
        let size = m.nrows();
        let zero = PSFamily::zero(order.lowered(), arity, size);
        let mut f = PSFamily::new(order, arity, size, move |_| m.clone());
        f.derivatives = Some(vec![zero; arity]);
        f
    }

    fn zero(order: BigradedOrder, arity: usize, size: usize) -> Self {
        PSFamily::new(order, arity, size, move |_| CMat::zeros(size, size))
    }

    pub fn eval(&self, p: &[f64]) -> CMat {
        (self.sampler)(p)
    }

    /// Pointwise product with orders adding.
    pub fn mul(&self, o: &PSFamily) -> Result<PSFamily> {
        if self.arity != o.arity || self.size != o.size {
            return Err(Error::Shape("families differ in arity or size".into()));
        }
        let (a, b) = (self.sampler.clone(), o.sampler.clone());
        Ok(PSFamily::new(order_mul(self.order, o.order), self.arity, self.size, move |p| a(p) * b(p)))
    }

    pub fn is_zero_at(&self, p: &[f64]) -> bool {
        fro(&self.eval(p)) == 0.0
    }
}

/// A self-adjoint operator: a Hermitian matrix, or −i∂_θ + a on the circle
/// truncated to the modes |n| ≤ modes.
#[derive(Debug, Clone)]
pub enum SelfAdjoint {
    Matrix(CMat),
    Circle { shift: f64, modes: usize },
}

impl SelfAdjoint {
    pub fn matrix(&self) -> CMat {
        match self {
            SelfAdjoint::Matrix(m) => m.clone(),
            SelfAdjoint::Circle { shift, modes } => {
                let n = 2 * modes + 1;
                CMat::from_fn(n, n, |i, j| if i == j { c(i as f64 - *modes as f64 + shift, 0.0) } else { c(0.0, 0.0) })
            }
        }
    }
}

/// t ↦ P + it, order (1, 1). Rejects non-self-adjoint input.
pub fn p_plus_it(p: &SelfAdjoint) -> Result<PSFamily> {
    let m = p.matrix();
    if m.nrows() != m.ncols() {
        return Err(Error::Shape("P must be square".into()));
    }
    let defect = is_hermitian(&m, 0.0);
    if defect > 1e-12 {
        return Err(Error::NotSelfAdjoint(defect));
    }
    let n = m.nrows();
    let order = BigradedOrder::new(1.0, 1.0);
    let mut f = PSFamily::new(order, 1, n, move |t| &m + eye(n) * (I * t[0]));
    f.derivatives = Some(vec![PSFamily::constant(order.lowered(), 1, eye(n) * I)]);
    Ok(f)
}

/// ∂/∂t_axis with the order lowered by (1, 1).
pub fn order_deriv(f: &PSFamily, axis: usize) -> Result<PSFamily> {
    if axis >= f.arity {
        return Err(Error::Invalid(format!("axis {axis} out of range for arity {}", f.arity)));
    }
    if let Some(d) = &f.derivatives {
        return Ok(d[axis].clone());
    }
    let s = f.sampler.clone();
    Ok(PSFamily::new(f.order.lowered(), f.arity, f.size, move |p| {
        let h = 1e-4 * (1.0 + p[axis].abs());
        central_diff4(
            |x| {
                let mut q = p.to_vec();
                q[axis] = x;
                s(&q)
            },
            p[axis],
            h,
        )
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCheck {
    pub pass: bool,
    /// Smallest singular value seen (of the normalized family for the symbol sweep).
    pub margin: f64,
    /// Points where invertibility failed.
    pub witnesses: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticReport {
    pub symbol: SweepCheck,
    pub base_family: SweepCheck,
    pub indicial: SweepCheck,
    /// max/min over the ring of ‖A⁻¹‖·(1 + R)^k; None unless all sweeps pass.
    pub inverse_growth_ratio: Option<f64>,
}

impl EllipticReport {
    pub fn all_pass(&self) -> bool {
        self.symbol.pass && self.base_family.pass && self.indicial.pass && self.inverse_growth_ratio.is_some_and(|r| r <= 4.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SweepResolution {
    pub points: usize,
    pub r_max: f64,
}

impl Default for SweepResolution {
    fn default() -> Self {
        SweepResolution { points: 41, r_max: 1e3 }
    }
}

fn grid_points(arity: usize, res: SweepResolution, extent: f64) -> Vec<Vec<f64>> {
    let n = res.points | 1; // odd so that 0 is a node
    let axis: Vec<f64> = (0..n).map(|j| extent * (2.0 * j as f64 / (n - 1) as f64 - 1.0)).collect();
    match arity {
        1 => axis.iter().map(|&x| vec![x]).collect(),
        _ => axis.iter().flat_map(|&x| axis.iter().map(move |&y| vec![x, y])).collect(),
    }
}

fn ring_points(arity: usize, radius: f64) -> Vec<Vec<f64>> {
    match arity {
        1 => vec![vec![-radius], vec![radius]],
        _ => (0..32)
            .map(|j| {
                let a = 2.0 * std::f64::consts::PI * j as f64 / 32.0;
                vec![radius * a.cos(), radius * a.sin()]
            })
            .collect(),
    }
}

fn sweep(points: &[Vec<f64>], value: impl Fn(&[f64]) -> CMat, tol: f64) -> SweepCheck {
    let mut margin = f64::INFINITY;
    let mut witnesses = Vec::new();
    for p in points {
        let s = smallest_singular_value(&value(p));
        margin = margin.min(s);
        if !(s > tol) {
            witnesses.push(p.clone());
        }
    }
    SweepCheck { pass: witnesses.is_empty(), margin, witnesses }
}

/// Invertibility sweeps. The symbol sweep normalizes by (1 + |p|)^k on the
/// ring |p| = R_max; the base family is the family itself on a grid through
/// the origin; for two-parameter (indicial) families the indicial sweep covers
/// the (t, τ) grid, and for one-parameter families it is the large-|t| ring.
pub fn full_elliptic_check(f: &PSFamily, res: SweepResolution) -> EllipticReport {
    let tol = 1e-9;
    let k = f.order.k;
    let norm = |p: &[f64]| {
        let r = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        f.eval(p) * c((1.0 + r).powf(-k), 0.0)
    };
    let ring = ring_points(f.arity, res.r_max);
    let symbol = sweep(&ring, norm, tol);
    let base_family = sweep(&grid_points(f.arity, res, 4.0), |p| f.eval(p), tol);
    let indicial = if f.arity >= 2 {
        let mut pts = grid_points(f.arity, res, 8.0);
        pts.extend(ring_points(f.arity, res.r_max / 4.0));
        sweep(&pts, |p| f.eval(p), tol)
    } else {
        sweep(&ring_points(1, res.r_max / 4.0), |p| f.eval(p), tol)
    };
    let inverse_growth_ratio = if symbol.pass && base_family.pass && indicial.pass {
        let mut scaled = Vec::new();
        for r in [res.r_max / 4.0, res.r_max / 2.0, res.r_max] {
            for p in ring_points(f.arity, r) {
                if let Ok(ai) = inv(&f.eval(&p), String::new) {
                    scaled.push(spectral_norm(&ai) * (1.0 + r).powf(k));
                }
            }
        }
        let hi = scaled.iter().cloned().fold(0.0, f64::max);
        let lo = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
        (lo > 0.0).then_some(hi / lo)
    } else {
        None
    };
    EllipticReport { symbol, base_family, indicial, inverse_growth_ratio }
}

fn spectral_norm(m: &CMat) -> f64 {
    hermitian_eigenvalues(&(m.adjoint() * m)).last().copied().unwrap_or(0.0).max(0.0).sqrt()
}
