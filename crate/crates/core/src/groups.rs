//! Perturbation groups of the identity, the Fredholm determinant by path
//! integration, the odd index and the degree-three Chern integral.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{c, eye, fro, inv, trace, trace_prod, CMat, C64, I};
use crate::numerics::{central_diff4, pairwise_sum, quad, QuadSpec, SampledPath};

pub type Sampler = Arc<dyn Fn(&[f64]) -> CMat + Send + Sync>;

/// `Id + K` on the span of the first n basis vectors of the model space.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingPerturbation {
    pub k: CMat,
}

impl SmoothingPerturbation {
    pub fn new(k: CMat) -> Result<Self> {
        if k.nrows() != k.ncols() || k.nrows() == 0 {
            return Err(Error::Shape(format!("{}x{} block", k.nrows(), k.ncols())));
        }
        Ok(SmoothingPerturbation { k })
    }

    pub fn dim(&self) -> usize {
        self.k.nrows()
    }

    pub fn element(&self) -> CMat {
        eye(self.dim()) + &self.k
    }

    /// Group product (Id + K)(Id + L) = Id + (K + L + KL).
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::Shape("dimension mismatch".into()));
        }
        Self::new(&self.k + &other.k + &self.k * &other.k)
    }

    pub fn check_invertible(&self) -> Result<()> {
        inv(&self.element(), || "group element".into()).map(|_| ())
    }
}

/// Matrix-valued family of one or two real parameters.
#[derive(Clone)]
pub struct SuspendedFamily {
    pub arity: usize,
    pub size: usize,
    pub sampler: Sampler,
    /// Symbol order of A(t) − A(∞).
    pub decay_order: f64,
    /// Optional analytic ∂/∂t_i, one per axis.
    pub derivatives: Option<Vec<Sampler>>,
    pub at_infinity: CMat,
    /// Length scale for finite-difference steps.
    pub scale: f64,
}

impl std::fmt::Debug for SuspendedFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SuspendedFamily")
            .field("arity", &self.arity)
            .field("size", &self.size)
            .field("decay_order", &self.decay_order)
            .field("analytic", &self.derivatives.is_some())
            .finish()
    }
}

impl SuspendedFamily {
    pub fn new(arity: usize, size: usize, decay_order: f64, sampler: impl Fn(&[f64]) -> CMat + Send + Sync + 'static) -> Self {
        SuspendedFamily {
            arity,
            size,
            sampler: Arc::new(sampler),
            decay_order,
            derivatives: None,
            at_infinity: eye(size),
            scale: 1.0,
        }
    }

    pub fn with_derivatives(mut self, d: Vec<Sampler>) -> Self {
        assert_eq!(d.len(), self.arity);
        self.derivatives = Some(d);
        self
    }

    pub fn with_limit(mut self, at_infinity: CMat) -> Self {
        self.at_infinity = at_infinity;
        self
    }

    pub fn constant(arity: usize, m: CMat) -> Self {
        let size = m.nrows();
        let lim = m.clone();
        let zero = CMat::zeros(size, size);
        let ds: Vec<Sampler> = (0..arity)
            .map(|_| {
                let z = zero.clone();
                Arc::new(move |_: &[f64]| z.clone()) as Sampler
            })
            .collect();
        SuspendedFamily::new(arity, size, f64::NEG_INFINITY, move |_| m.clone())
            .with_derivatives(ds)
            .with_limit(lim)
    }

    pub fn eval(&self, t: &[f64]) -> CMat {
        (self.sampler)(t)
    }

    /// ∂/∂t_axis, analytic when available, else 4th-order central difference
    /// with step 10⁻⁴·scale.
    pub fn deriv(&self, axis: usize, t: &[f64]) -> CMat {
        if let Some(d) = &self.derivatives {
            return d[axis](t);
        }
        let h = 1e-4 * self.scale * (1.0 + t[axis].abs());
        central_diff4(
            |x| {
                let mut p = t.to_vec();
                p[axis] = x;
                self.eval(&p)
            },
            t[axis],
            h,
        )
    }

    /// Pointwise product (composition of group elements).
    pub fn mul(&self, other: &SuspendedFamily) -> SuspendedFamily {
        let (a, b) = (self.clone(), other.clone());
        let sampler = {
            let (a, b) = (a.clone(), b.clone());
            move |t: &[f64]| a.eval(t) * b.eval(t)
        };
        let ds: Vec<Sampler> = (0..self.arity)
            .map(|ax| {
                let (a, b) = (a.clone(), b.clone());
                Arc::new(move |t: &[f64]| a.deriv(ax, t) * b.eval(t) + a.eval(t) * b.deriv(ax, t)) as Sampler
            })
            .collect();
        SuspendedFamily::new(self.arity, self.size, self.decay_order.max(other.decay_order), sampler)
            .with_derivatives(ds)
            .with_limit(&self.at_infinity * &other.at_infinity)
    }

    /// Check ‖A(t) − A(∞)‖ ≲ (1+|t|)^{decay_order} on a ring of large radii.
    pub fn verify_decay(&self) -> Result<()> {
        if self.decay_order == f64::NEG_INFINITY {
            return Ok(());
        }
        let mut ratios = Vec::new();
        for &r in &[30.0, 300.0, 3000.0] {
            let mut worst: f64 = 0.0;
            for axis in 0..self.arity {
                for sign in [-1.0, 1.0] {
                    let mut p = vec![0.0; self.arity];
                    p[axis] = sign * r;
                    let dev = fro(&(self.eval(&p) - &self.at_infinity));
                    if !dev.is_finite() {
                        return Err(Error::NonFinite { at: format!("{p:?}") });
                    }
                    worst = worst.max(dev);
                }
            }
            ratios.push(worst / (1.0f64 + r).powf(self.decay_order));
        }
        if ratios[2] > 10.0 * ratios[0].max(1e-300) && ratios[2] > 1e-12 {
            return Err(Error::DecayTooSlow { axis: 0, order: self.decay_order });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Fredholm determinant

/// Tr log(Id + M) for ‖M‖ < 1 by the Mercator series.
fn trace_log1p(m: &CMat) -> C64 {
    let mut pow = m.clone();
    let mut sum = C64::new(0.0, 0.0);
    for j in 1..=80 {
        let term = trace(&pow) / j as f64;
        sum += if j % 2 == 1 { term } else { -term };
        // traces of powers can cancel, so stop on the power itself
        if fro(&pow) < 1e-18 {
            break;
        }
        pow = &pow * m;
    }
    sum
}

/// exp ∫ Tr(A⁻¹ dA) along a polygonal path of group elements. Each chord is
/// integrated exactly, so the only error is rounding.
pub fn fredholm_det_path(path: &SampledPath<CMat>) -> Result<C64> {
    let n = path.segments();
    let logs: Vec<Result<C64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let a = &path.values[k];
            let at = || format!("s = {:.6}", k as f64 / n as f64);
            let ainv = inv(a, at)?;
            let m = &ainv * (&path.values[k + 1] - a);
            if fro(&m) >= 0.9 {
                return Err(Error::InvalidPath(format!("segment {k} too coarse for the chord rule")));
            }
            Ok(trace_log1p(&m))
        })
        .collect();
    let logs: Vec<C64> = logs.into_iter().collect::<Result<_>>()?;
    Ok(pairwise_sum(&logs).unwrap_or_default().exp())
}

#[derive(Debug, Clone)]
pub struct FredholmDet {
    pub value: C64,
    /// Arc bulge κ of the scalar path z(s) = s + iκ s(1 − s); 0 for the straight line.
    pub detour: f64,
    pub segments: usize,
}

fn scalar_path(kappa: f64) -> impl Fn(f64) -> C64 {
    move |s| c(s, kappa * s * (1.0 - s))
}

/// Refine a parameter grid until every chord satisfies ‖A_k⁻¹ΔA‖ ≤ 1/4.
fn adaptive_path(k: &CMat, kappa: f64) -> Result<(Vec<CMat>, f64)> {
    let n = k.nrows();
    let z = scalar_path(kappa);
    let elem = |s: f64| eye(n) + k * z(s);
    let mut params: Vec<f64> = (0..=16).map(|j| j as f64 / 16.0).collect();
    let mut min_sv = f64::INFINITY;
    for _round in 0..24 {
        let mut next = vec![params[0]];
        let mut refined = false;
        for w in params.windows(2) {
            let a = elem(w[0]);
            let ainv = inv(&a, || format!("s = {:.6}", w[0]))?;
            min_sv = min_sv.min(1.0 / fro(&ainv));
            let m = &ainv * (elem(w[1]) - &a);
            if fro(&m) > 0.25 {
                next.push(0.5 * (w[0] + w[1]));
                refined = true;
            }
            next.push(w[1]);
        }
        params = next;
        if !refined {
            inv(&elem(1.0), || "s = 1".into())?;
            return Ok((params.into_iter().map(elem).collect(), min_sv));
        }
        if params.len() > 1 << 16 {
            break;
        }
    }
    Err(Error::Singular { at: "path refinement did not terminate".into() })
}

/// det(Id + K) by integrating Tr(A⁻¹dA) along Id + z(s)K, detouring around
/// singular points with a complex arc in z.
pub fn fredholm_det(b: &SmoothingPerturbation) -> Result<FredholmDet> {
    let scale = 1.0 + fro(&b.k);
    let mut best: Option<(Vec<CMat>, f64, f64)> = None;
    for kappa in [0.0, 0.4, -0.4, 0.8, -0.8] {
        match adaptive_path(&b.k, kappa) {
            Ok((vals, sv)) => {
                let good = sv > 1e-6 * scale;
                let better = best.as_ref().map_or(true, |(_, bsv, _)| sv > *bsv);
                if better {
                    best = Some((vals, sv, kappa));
                }
                if good {
                    break;
                }
            }
            Err(_) => continue,
        }
    }
    let (vals, _, kappa) = best.ok_or_else(|| Error::Singular { at: "every candidate path".into() })?;
    let segments = vals.len() - 1;
    let path = SampledPath { values: vals, closed: false, refinement_level: 0 };
    Ok(FredholmDet { value: fredholm_det_path(&path)?, detour: kappa, segments })
}

// ---------------------------------------------------------------------------
// odd index

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IntegerReading {
    pub raw: C64,
    pub rounded: i64,
    /// Distance of the raw value from the rounded integer.
    pub distance: f64,
    /// Within 10⁻³ of an integer.
    pub resolved: bool,
}

pub fn integer_reading(raw: C64) -> Result<IntegerReading> {
    let rounded = raw.re.round();
    let distance = (raw - rounded).norm();
    if !(distance <= 1e-2) {
        return Err(Error::UnderResolved { raw: raw.re, distance });
    }
    Ok(IntegerReading { raw, rounded: rounded as i64, distance, resolved: distance <= 1e-3 })
}

pub const ODD_INDEX_NODES: usize = 256;

/// (1/2πi) ∫ Tr(A′(t)A(t)⁻¹) dt.
pub fn odd_index(a: &SuspendedFamily) -> Result<IntegerReading> {
    odd_index_with(a, ODD_INDEX_NODES)
}

pub fn odd_index_with(a: &SuspendedFamily, nodes: usize) -> Result<IntegerReading> {
    if a.arity != 1 {
        return Err(Error::Invalid("odd index needs a one-parameter family".into()));
    }
    a.verify_decay()?;
    let order = (a.decay_order - 1.0).min(-1.5);
    let spec = QuadSpec::new(1, nodes, order).with_scale(a.scale);
    let integrand = |t: &[f64]| -> C64 {
        match inv(&a.eval(t), || String::new()) {
            Ok(ai) => trace_prod(&a.deriv(0, t), &ai),
            Err(_) => C64::new(f64::NAN, 0.0),
        }
    };
    let r = quad(integrand, &spec).map_err(|e| match e {
        Error::NonFinite { at } => Error::Singular { at: format!("t = {at}") },
        other => other,
    })?;
    integer_reading(r.value / (2.0 * PI * I))
}

/// Id + ((t − i)/(t + i) − 1)P for an orthogonal projection P.
pub fn cayley_generator(p: CMat) -> SuspendedFamily {
    let n = p.nrows();
    let (p1, p2) = (p.clone(), p.clone());
    SuspendedFamily::new(1, n, -1.0, move |t| {
        let u = (c(t[0], -1.0)) / c(t[0], 1.0);
        eye(n) + &p1 * (u - 1.0)
    })
    .with_derivatives(vec![Arc::new(move |t: &[f64]| {
        let d = 2.0 * I / (c(t[0], 1.0) * c(t[0], 1.0));
        &p2 * d
    })])
}

// ---------------------------------------------------------------------------
// degree-three Chern integral

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum S3Chart {
    /// (η, ξ₁, ξ₂) ∈ (0, π/2) × [0, 2π)², α = e^{iξ₁}cos η, β = e^{iξ₂}sin η.
    Hopf,
    /// (s, t, τ) ∈ [0,1) × ℝ², the suspension of a based loop.
    Suspension,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Coordinate order as listed in the chart.
    Standard,
    Reversed,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Standard => 1.0,
            Orientation::Reversed => -1.0,
        }
    }
}

/// 1D node set (point, weight, periodic-length or 0) for a chart axis.
fn chart_axis(chart: S3Chart, axis: usize, n: usize) -> Vec<(f64, f64)> {
    match (chart, axis) {
        (S3Chart::Hopf, 0) => {
            let h = (PI / 2.0) / n as f64;
            (0..n).map(|j| ((j as f64 + 0.5) * h, h)).collect()
        }
        (S3Chart::Hopf, _) => {
            let h = 2.0 * PI / n as f64;
            (0..n).map(|j| (j as f64 * h, h)).collect()
        }
        (S3Chart::Suspension, 0) => {
            let h = 1.0 / n as f64;
            (0..n).map(|j| (j as f64 * h, h)).collect()
        }
        (S3Chart::Suspension, _) => crate::numerics::real_line_nodes(n, crate::numerics::Rule::Trapezoid),
    }
}

/// ∫ (1/(6(2πi)²)) Tr((g⁻¹dg)³) over S³ on an n³ product grid.
pub fn chern3(
    g: &(dyn Fn([f64; 3]) -> CMat + Sync),
    chart: S3Chart,
    n: usize,
    orientation: Option<Orientation>,
) -> Result<C64> {
    let orientation = orientation.ok_or(Error::MissingOrientation)?;
    if n < 8 {
        return Err(Error::TooFewNodes(n));
    }
    let axes: Vec<Vec<(f64, f64)>> = (0..3).map(|a| chart_axis(chart, a, n)).collect();
    let step = [1e-3, 1e-3, 1e-3];
    let total = n * n * n;
    let terms: Vec<Result<C64>> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let (i, j, k) = (idx / (n * n), (idx / n) % n, idx % n);
            let p = [axes[0][i].0, axes[1][j].0, axes[2][k].0];
            let w = axes[0][i].1 * axes[1][j].1 * axes[2][k].1;
            let gp = g(p);
            let gi = inv(&gp, || format!("{p:?}"))?;
            let mc: Vec<CMat> = (0..3)
                .map(|a| {
                    let h = step[a] * (1.0 + p[a].abs());
                    let d = central_diff4(
                        |x| {
                            let mut q = p;
                            q[a] = x;
                            g(q)
                        },
                        p[a],
                        h,
                    );
                    &gi * d
                })
                .collect();
            let comm = &mc[1] * &mc[2] - &mc[2] * &mc[1];
            let v = trace_prod(&mc[0], &comm) * w;
            if !v.is_finite() {
                return Err(Error::NonFinite { at: format!("{p:?}") });
            }
            Ok(v)
        })
        .collect();
    let terms: Vec<C64> = terms.into_iter().collect::<Result<_>>()?;
    let s = pairwise_sum(&terms).unwrap_or_default();
    // 3·Tr(A₁[A₂,A₃]) / (6(2πi)²)
    Ok(orientation.sign() * s / (2.0 * (2.0 * PI * I) * (2.0 * PI * I)))
}

/// The identity map of SU(2) in Hopf coordinates.
pub fn su2_hopf(p: [f64; 3]) -> CMat {
    let (eta, x1, x2) = (p[0], p[1], p[2]);
    let alpha = C64::from_polar(eta.cos(), x1);
    let beta = C64::from_polar(eta.sin(), x2);
    CMat::from_row_slice(2, 2, &[alpha, -beta.conj(), beta, alpha.conj()])
}

// ---------------------------------------------------------------------------
// loops in the doubly suspended group

/// s ↦ f(s), each f(s) a two-parameter family; f(0) = f(1) = Id.
#[derive(Clone)]
pub struct GroupLoop {
    pub size: usize,
    pub map: Arc<dyn Fn(f64, f64, f64) -> CMat + Send + Sync>,
}

impl GroupLoop {
    pub fn new(size: usize, map: impl Fn(f64, f64, f64) -> CMat + Send + Sync + 'static) -> Result<Self> {
        let l = GroupLoop { size, map: Arc::new(map) };
        for &(t, tau) in &[(0.0, 0.0), (0.7, -1.3), (-2.0, 0.4)] {
            for s in [0.0, 1.0] {
                let d = fro(&((l.map)(s, t, tau) - eye(size)));
                if d > 1e-12 {
                    return Err(Error::InvalidPath(format!("loop not based at Id (s = {s}, deviation {d:.3e})")));
                }
            }
        }
        Ok(l)
    }

    pub fn constant(size: usize) -> Self {
        GroupLoop { size, map: Arc::new(move |_, _, _| eye(size)) }
    }

    /// Pointwise square s ↦ f(s)².
    pub fn squared(&self) -> Self {
        let m = self.map.clone();
        GroupLoop {
            size: self.size,
            map: Arc::new(move |s, t, tau| {
                let v = m(s, t, tau);
                &v * &v
            }),
        }
    }

    pub fn family_at(&self, s: f64) -> SuspendedFamily {
        let m = self.map.clone();
        SuspendedFamily::new(2, self.size, -2.0, move |p| m(s, p[0], p[1]))
    }

    pub fn s_derivative_at(&self, s: f64) -> SuspendedFamily {
        let m = self.map.clone();
        SuspendedFamily::new(2, self.size, -2.0, move |p| central_diff4(|x| m(x, p[0], p[1]), s, 1e-4))
    }
}

/// The degree-one loop: f(s) = exp(−2πisP)·exp(2πisP_∞), P = (Id + n·σ)/2 with
/// n sweeping the sphere once as (t, τ) covers the plane. The direction of s is
/// chosen so that the winding is +1.
pub fn su2_generator_loop() -> GroupLoop {
    let sigma = crate::linalg::pauli();
    GroupLoop {
        size: 2,
        map: Arc::new(move |s, t, tau| {
            let r2 = t * t + tau * tau;
            let chi = PI * (-r2).exp();
            let phi = tau.atan2(t);
            let nvec = [chi.sin() * phi.cos(), chi.sin() * phi.sin(), chi.cos()];
            let mut p = eye(2);
            for a in 0..3 {
                p += &sigma[a] * C64::new(nvec[a], 0.0);
            }
            p *= C64::new(0.5, 0.0);
            let e = (-2.0 * PI * I * s).exp() - 1.0;
            let em = (2.0 * PI * I * s).exp() - 1.0;
            let mut p_inf = CMat::zeros(2, 2);
            p_inf[(0, 0)] = C64::new(1.0, 0.0);
            let left = eye(2) + p * e;
            let right = eye(2) + p_inf * em;
            left * right
        }),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LoopResolution {
    pub s_nodes: usize,
    pub plane_nodes: usize,
}

impl Default for LoopResolution {
    fn default() -> Self {
        LoopResolution { s_nodes: 48, plane_nodes: 48 }
    }
}

/// (1/2πi) ∮ f*α₂.
pub fn winding_phi(f: &GroupLoop, res: LoopResolution) -> Result<IntegerReading> {
    let grid = Arc::new(crate::star::Grid2::new(res.plane_nodes, res.plane_nodes, 1.0));
    let n = res.s_nodes;
    let vals: Vec<Result<C64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let s = k as f64 / n as f64;
            let a = crate::star::Star2Element::from_families(&grid, &f.family_at(s), None)?;
            let da = crate::star::Star2Element::values_only(&grid, &f.s_derivative_at(s), None);
            crate::susdet::alpha2(&a, &da).map(|v| v / n as f64)
        })
        .collect();
    let vals: Vec<C64> = vals.into_iter().collect::<Result<_>>()?;
    integer_reading(pairwise_sum(&vals).unwrap_or_default() / (2.0 * PI * I))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{det, outer, re};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rank_one(n: usize) -> CMat {
        let mut v = vec![C64::new(0.0, 0.0); n];
        v[0] = re(1.0);
        outer(&v, &v)
    }

    // Frozen from the quadrature oracle: the Cayley generator has index +1.
    const CAYLEY_INDEX: i64 = 1;

    #[test]
    fn fredholm_examples() {
        let id = SmoothingPerturbation::new(CMat::zeros(3, 3)).unwrap();
        assert!((fredholm_det(&id).unwrap().value - 1.0).norm() < 1e-14);
        let b = SmoothingPerturbation::new(rank_one(4)).unwrap();
        assert!((fredholm_det(&b).unwrap().value - 2.0).norm() < 1e-12);
        let phi = 2.3;
        let path = SampledPath::from_fn(
            |s| {
                let mut m = eye(3);
                m[(0, 0)] = C64::from_polar(1.0, s * phi);
                m
            },
            64,
            false,
        )
        .unwrap();
        assert!((fredholm_det_path(&path).unwrap() - C64::from_polar(1.0, phi)).norm() < 1e-13);
        // Tr M² vanishes on the first chord
        let mut k = CMat::zeros(2, 2);
        k[(0, 0)] = c(1.0, 0.0);
        k[(1, 1)] = c(0.0, 1.0);
        let d = fredholm_det(&SmoothingPerturbation::new(k).unwrap()).unwrap();
        assert!((d.value - c(2.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn fredholm_detours_around_singular_segment() {
        // eigenvalue −2 puts a zero of det(Id + sK) at s = 1/2
        let k = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![re(-2.0), re(0.5)]));
        let b = SmoothingPerturbation::new(k.clone()).unwrap();
        let r = fredholm_det(&b).unwrap();
        assert!(r.detour != 0.0);
        assert!((r.value - det(&b.element())).norm() < 1e-12);
    }

    #[test]
    fn odd_index_of_cayley_generator() {
        let p = rank_one(3);
        let a = cayley_generator(p);
        let r = odd_index(&a).unwrap();
        assert!(r.resolved);
        assert_eq!(r.rounded, CAYLEY_INDEX);
        let r2 = odd_index(&a.mul(&a)).unwrap();
        assert_eq!(r2.rounded, 2 * CAYLEY_INDEX);
        let coarse = odd_index_with(&a, 128).unwrap();
        assert!((coarse.raw - r.raw).norm() < 1e-4);
        let id = SuspendedFamily::constant(1, eye(3));
        assert_eq!(odd_index(&id).unwrap().rounded, 0);
    }

    #[test]
    fn odd_index_flags_unresolved() {
        // a winding concentrated on |t| ≲ 0.05 is invisible to 16 nodes
        let delta = 0.05;
        let p = rank_one(1);
        let a = SuspendedFamily::new(1, 1, -1.0, move |t| {
            let u = c(t[0], -delta) / c(t[0], delta);
            eye(1) + &p * (u - 1.0)
        });
        assert!(matches!(odd_index_with(&a, 16), Err(Error::UnderResolved { .. })));
        assert_eq!(odd_index_with(&a, 512).unwrap().rounded, CAYLEY_INDEX);
    }

    #[test]
    fn chern3_needs_orientation() {
        assert!(matches!(chern3(&su2_hopf, S3Chart::Hopf, 16, None), Err(Error::MissingOrientation)));
    }

    #[test]
    fn chern3_constant_is_zero() {
        let v = chern3(&|_| eye(2), S3Chart::Hopf, 12, Some(Orientation::Standard)).unwrap();
        assert!(v.norm() < 1e-14);
    }

    #[test]
    fn su2_identity_and_inverse() {
        let v = chern3(&su2_hopf, S3Chart::Hopf, 24, Some(Orientation::Standard)).unwrap();
        assert!((v - 1.0).norm() < 1e-2, "{v}");
        let inv_map = |p: [f64; 3]| su2_hopf(p).adjoint();
        let w = chern3(&inv_map, S3Chart::Hopf, 24, Some(Orientation::Standard)).unwrap();
        assert!((w + 1.0).norm() < 1e-2, "{w}");
    }

    #[test]
    fn generator_loop_is_based() {
        let f = su2_generator_loop();
        assert!(GroupLoop::new(2, move |s, t, tau| (f.map)(s, t, tau)).is_ok());
        assert!(GroupLoop::new(1, |s, _, _| CMat::from_element(1, 1, re(1.0 + s))).is_err());
    }

    #[test]
    fn generator_loop_windings() {
        let res = LoopResolution::default();
        let f = su2_generator_loop();
        let one = winding_phi(&f, res).unwrap();
        assert!(one.resolved && one.rounded == 1, "{one:?}");
        let two = winding_phi(&f.squared(), res).unwrap();
        assert!(two.resolved && two.rounded == 2, "{two:?}");
        let zero = winding_phi(&GroupLoop::constant(2), res).unwrap();
        assert_eq!(zero.rounded, 0);
        // the inverse loop runs the other way
        let m = f.map.clone();
        let back = GroupLoop::new(2, move |s, t, tau| m(1.0 - s, t, tau)).unwrap();
        assert_eq!(winding_phi(&back, res).unwrap().rounded, -1);
    }

    #[test]
    fn winding_equals_chern3_on_the_suspension_chart() {
        let f = su2_generator_loop();
        let g = move |p: [f64; 3]| (f.map)(p[0], p[1], p[2]);
        let v = chern3(&g, S3Chart::Suspension, 40, Some(Orientation::Reversed)).unwrap();
        assert!((v - 1.0).norm() < 1e-2, "{v}");
    }

    proptest! {
        #[test]
        fn fredholm_matches_direct_determinant(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(1..=6);
            let k = CMat::from_fn(n, n, |_, _| c(rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6)));
            let b = SmoothingPerturbation::new(k).unwrap();
            let d = det(&b.element());
            prop_assume!(d.norm() > 1e-3);
            let f = fredholm_det(&b).unwrap().value;
            prop_assert!((f - d).norm() <= 1e-8 * d.norm());
        }

        #[test]
        fn fredholm_multiplicative(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 3;
            let mut draw = || CMat::from_fn(n, n, |_, _| c(rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4)));
            let a = SmoothingPerturbation::new(draw()).unwrap();
            let b = SmoothingPerturbation::new(draw()).unwrap();
            let ab = a.compose(&b).unwrap();
            // path to A followed by A·(path to B)
            let ka = a.k.clone();
            let kb = b.k.clone();
            let ea = a.element();
            let p1 = SampledPath::from_fn(move |s| eye(n) + &ka * re(s), 64, false).unwrap();
            let p2 = SampledPath::from_fn(move |s| &ea * (eye(n) + &kb * re(s)), 64, false).unwrap();
            let through = fredholm_det_path(&p1.concat(&p2).unwrap()).unwrap();
            let prod = fredholm_det(&a).unwrap().value * fredholm_det(&b).unwrap().value;
            prop_assert!((through - prod).norm() <= 1e-8 * prod.norm());
            prop_assert!((fredholm_det(&ab).unwrap().value - prod).norm() <= 1e-8 * prod.norm());
        }
    }
}
