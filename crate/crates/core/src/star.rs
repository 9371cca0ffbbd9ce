//! The ε-truncated star product on doubly suspended families, the tilde
//! algebra in (x, εx), cusp x-jets and the lift Ĩ.
//!
//! Conventions: D = −i∂, variables ordered (t, τ), J = [[0, −1], [1, 0]].
//! With {a, b} = ∂_τa ∂_tb − ∂_ta ∂_τb the first-order term of the product is
//! −(i/2){a₀, b₀}.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;

use crate::cuspmodel::CssSymbols;
use crate::error::{Error, Result};
use crate::groups::SuspendedFamily;
use crate::linalg::{fro, inv, CMat, C64, I};
use crate::numerics::{pairwise_sum, real_line_nodes, Linear, Rule};

/// Tensor grid on ℝ² from the tan substitution in both variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2 {
    pub t: Vec<(f64, f64)>,
    pub tau: Vec<(f64, f64)>,
}

impl Grid2 {
    pub fn new(nt: usize, ntau: usize, scale: f64) -> Self {
        let axis = |n| {
            real_line_nodes(n, Rule::Trapezoid)
                .into_iter()
                .map(|(x, w)| (scale * x, scale * w))
                .collect()
        };
        Grid2 { t: axis(nt), tau: axis(ntau) }
    }

    pub fn len(&self) -> usize {
        self.t.len() * self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, k: usize) -> (f64, f64) {
        let n = self.tau.len();
        (self.t[k / n].0, self.tau[k % n].0)
    }

    pub fn weight(&self, k: usize) -> f64 {
        let n = self.tau.len();
        self.t[k / n].1 * self.tau[k % n].1
    }

    /// Σ w_k v_k in canonical order.
    pub fn integrate(&self, vals: &[C64]) -> C64 {
        let weighted: Vec<C64> = vals.iter().enumerate().map(|(k, v)| v * self.weight(k)).collect();
        pairwise_sum(&weighted).unwrap_or_default()
    }
}

/// Value with its first derivatives in t and τ.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub v: CMat,
    pub dt: CMat,
    pub dtau: CMat,
}

impl Jet {
    pub fn constant(v: CMat) -> Self {
        let z = CMat::zeros(v.nrows(), v.ncols());
        Jet { v, dt: z.clone(), dtau: z }
    }

    pub fn mul(&self, o: &Jet) -> Jet {
        Jet {
            v: &self.v * &o.v,
            dt: &self.dt * &o.v + &self.v * &o.dt,
            dtau: &self.dtau * &o.v + &self.v * &o.dtau,
        }
    }

    pub fn inv(&self, at: impl FnOnce() -> String) -> Result<Jet> {
        let u = inv(&self.v, at)?;
        Ok(Jet {
            dt: -(&u * &self.dt * &u),
            dtau: -(&u * &self.dtau * &u),
            v: u,
        })
    }

    pub fn add(&self, o: &Jet) -> Jet {
        Jet { v: &self.v + &o.v, dt: &self.dt + &o.dt, dtau: &self.dtau + &o.dtau }
    }

    pub fn scale(&self, z: C64) -> Jet {
        Jet { v: &self.v * z, dt: &self.dt * z, dtau: &self.dtau * z }
    }

    pub fn from_family(f: &SuspendedFamily, t: f64, tau: f64) -> Jet {
        let p = [t, tau];
        Jet { v: f.eval(&p), dt: f.deriv(0, &p), dtau: f.deriv(1, &p) }
    }
}

/// {a, b} = ∂_τa ∂_tb − ∂_ta ∂_τb.
pub fn bracket(a: &Jet, b: &Jet) -> CMat {
    &a.dtau * &b.dt - &a.dt * &b.dtau
}

fn same_grid(a: &Arc<Grid2>, b: &Arc<Grid2>) -> Result<()> {
    if Arc::ptr_eq(a, b) || a == b {
        Ok(())
    } else {
        Err(Error::Shape("grid mismatch".into()))
    }
}

fn at_node(grid: &Grid2, k: usize) -> String {
    let (t, tau) = grid.point(k);
    format!("(t, τ) = ({t:.4}, {tau:.4})")
}

/// a₀ + εa₁ with ε² = 0.
#[derive(Debug, Clone)]
pub struct Star2Element {
    pub grid: Arc<Grid2>,
    pub size: usize,
    pub a0: Vec<Jet>,
    pub a1: Vec<CMat>,
}

impl Star2Element {
    pub fn identity(grid: &Arc<Grid2>, size: usize) -> Self {
        let id = Jet::constant(CMat::identity(size, size));
        Star2Element {
            grid: grid.clone(),
            size,
            a0: vec![id; grid.len()],
            a1: vec![CMat::zeros(size, size); grid.len()],
        }
    }

    /// Sample a₀ with derivatives and a₁ on the grid.
    pub fn from_families(grid: &Arc<Grid2>, a0: &SuspendedFamily, a1: Option<&SuspendedFamily>) -> Result<Self> {
        if a0.arity != 2 || a1.is_some_and(|f| f.arity != 2 || f.size != a0.size) {
            return Err(Error::Shape("star elements need matching two-parameter families".into()));
        }
        let n = a0.size;
        let (j0, j1): (Vec<Jet>, Vec<CMat>) = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                let (t, tau) = grid.point(k);
                let jet = Jet::from_family(a0, t, tau);
                let v1 = a1.map_or_else(|| CMat::zeros(n, n), |f| f.eval(&[t, tau]));
                (jet, v1)
            })
            .unzip();
        Ok(Star2Element { grid: grid.clone(), size: n, a0: j0, a1: j1 })
    }

    /// Sample values only; derivative slots are zero. Used for tangent vectors.
    pub fn values_only(grid: &Arc<Grid2>, a0: &SuspendedFamily, a1: Option<&SuspendedFamily>) -> Self {
        let n = a0.size;
        let (j0, j1): (Vec<Jet>, Vec<CMat>) = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                let (t, tau) = grid.point(k);
                let v1 = a1.map_or_else(|| CMat::zeros(n, n), |f| f.eval(&[t, tau]));
                (Jet::constant(a0.eval(&[t, tau])), v1)
            })
            .unzip();
        Star2Element { grid: grid.clone(), size: n, a0: j0, a1: j1 }
    }

    pub fn from_jets(grid: &Arc<Grid2>, a0: Vec<Jet>, a1: Vec<CMat>) -> Result<Self> {
        if a0.len() != grid.len() || a1.len() != grid.len() {
            return Err(Error::Shape("sample count differs from grid".into()));
        }
        let size = a0.first().map_or(0, |j| j.v.nrows());
        Ok(Star2Element { grid: grid.clone(), size, a0, a1 })
    }

    /// Largest pointwise Frobenius deviation over both components.
    pub fn max_deviation(&self, other: &Star2Element) -> f64 {
        let d0 = self.a0.iter().zip(&other.a0).map(|(a, b)| fro(&(&a.v - &b.v))).fold(0.0, f64::max);
        let d1 = self.a1.iter().zip(&other.a1).map(|(a, b)| fro(&(a - b))).fold(0.0, f64::max);
        d0.max(d1)
    }
}

impl Linear for Star2Element {
    fn scaled(&self, w: f64) -> Self {
        let z = C64::new(w, 0.0);
        Star2Element {
            grid: self.grid.clone(),
            size: self.size,
            a0: self.a0.iter().map(|j| j.scale(z)).collect(),
            a1: self.a1.iter().map(|m| m * z).collect(),
        }
    }
    fn add(&self, o: &Self) -> Self {
        Star2Element {
            grid: self.grid.clone(),
            size: self.size,
            a0: self.a0.iter().zip(&o.a0).map(|(a, b)| a.add(b)).collect(),
            a1: self.a1.iter().zip(&o.a1).map(|(a, b)| a + b).collect(),
        }
    }
    fn all_finite(&self) -> bool {
        self.a0.iter().all(|j| j.v.iter().chain(j.dt.iter()).chain(j.dtau.iter()).all(|z| z.is_finite()))
            && self.a1.iter().all(|m| m.iter().all(|z| z.is_finite()))
    }
    fn magnitude(&self) -> f64 {
        let s: f64 = self.a0.iter().map(|j| fro(&j.v).powi(2)).sum::<f64>() + self.a1.iter().map(|m| fro(m).powi(2)).sum::<f64>();
        (s / self.a0.len().max(1) as f64).sqrt()
    }
}

pub fn star2_mul(a: &Star2Element, b: &Star2Element) -> Result<Star2Element> {
    same_grid(&a.grid, &b.grid)?;
    if a.size != b.size {
        return Err(Error::Shape("matrix size mismatch".into()));
    }
    let half_i = I * 0.5;
    let (a0, a1): (Vec<Jet>, Vec<CMat>) = (0..a.grid.len())
        .into_par_iter()
        .map(|k| {
            let (x, y) = (&a.a0[k], &b.a0[k]);
            let first = &x.v * &b.a1[k] + &a.a1[k] * &y.v - bracket(x, y) * half_i;
            (x.mul(y), first)
        })
        .unzip();
    Ok(Star2Element { grid: a.grid.clone(), size: a.size, a0, a1 })
}

/// a₀⁻¹ − ε(a₀⁻¹a₁a₀⁻¹ − (i/2){a₀⁻¹, a₀}a₀⁻¹).
pub fn star2_inv(a: &Star2Element) -> Result<Star2Element> {
    let half_i = I * 0.5;
    let out: Vec<Result<(Jet, CMat)>> = (0..a.grid.len())
        .into_par_iter()
        .map(|k| {
            let j = &a.a0[k];
            let u = j.inv(|| at_node(&a.grid, k))?;
            let first = -(&u.v * &a.a1[k] * &u.v) + bracket(&u, j) * &u.v * half_i;
            Ok((u, first))
        })
        .collect();
    let (a0, a1): (Vec<Jet>, Vec<CMat>) = out.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    Ok(Star2Element { grid: a.grid.clone(), size: a.size, a0, a1 })
}

/// a₀ + x·e + εx·a₁ with x² = x·εx = (εx)² = 0.
#[derive(Debug, Clone)]
pub struct TildeElement {
    pub grid: Arc<Grid2>,
    pub size: usize,
    pub a0: Vec<Jet>,
    pub e: Vec<CMat>,
    pub a1: Vec<CMat>,
}

impl TildeElement {
    pub fn identity(grid: &Arc<Grid2>, size: usize) -> Self {
        let z = vec![CMat::zeros(size, size); grid.len()];
        TildeElement {
            grid: grid.clone(),
            size,
            a0: vec![Jet::constant(CMat::identity(size, size)); grid.len()],
            e: z.clone(),
            a1: z,
        }
    }

    /// Quotient by x: the εx part becomes the ε part.
    pub fn to_star2(&self) -> Star2Element {
        Star2Element { grid: self.grid.clone(), size: self.size, a0: self.a0.clone(), a1: self.a1.clone() }
    }

    pub fn max_deviation(&self, other: &TildeElement) -> f64 {
        let de = self.e.iter().zip(&other.e).map(|(a, b)| fro(&(a - b))).fold(0.0, f64::max);
        self.to_star2().max_deviation(&other.to_star2()).max(de)
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        self.max_deviation(&TildeElement::identity(&self.grid, self.size)) <= tol
    }
}

/// a₀⋆̃b₀ = a₀b₀ − εx(i/2)(D_ta₀D_τb₀ − D_τa₀D_tb₀), extended over x and εx.
pub fn tilde_mul(a: &TildeElement, b: &TildeElement) -> Result<TildeElement> {
    same_grid(&a.grid, &b.grid)?;
    if a.size != b.size {
        return Err(Error::Shape("matrix size mismatch".into()));
    }
    let half_i = I * 0.5;
    let parts: Vec<(Jet, CMat, CMat)> = (0..a.grid.len())
        .into_par_iter()
        .map(|k| {
            let (x, y) = (&a.a0[k], &b.a0[k]);
            let e = &x.v * &b.e[k] + &a.e[k] * &y.v;
            let first = &x.v * &b.a1[k] + &a.a1[k] * &y.v - bracket(x, y) * half_i;
            (x.mul(y), e, first)
        })
        .collect();
    let mut out = TildeElement {
        grid: a.grid.clone(),
        size: a.size,
        a0: Vec::with_capacity(parts.len()),
        e: Vec::with_capacity(parts.len()),
        a1: Vec::with_capacity(parts.len()),
    };
    for (j, e, f) in parts {
        out.a0.push(j);
        out.e.push(e);
        out.a1.push(f);
    }
    Ok(out)
}

/// Two-sided inverse in the tilde algebra: x-part −a₀⁻¹ea₀⁻¹, εx-part
/// −a₀⁻¹a₁a₀⁻¹ + (i/2){a₀⁻¹, a₀}a₀⁻¹.
pub fn tilde_inv(a: &TildeElement) -> Result<TildeElement> {
    let half_i = I * 0.5;
    let out: Vec<Result<(Jet, CMat, CMat)>> = (0..a.grid.len())
        .into_par_iter()
        .map(|k| {
            let j = &a.a0[k];
            let u = j.inv(|| at_node(&a.grid, k))?;
            let e = -(&u.v * &a.e[k] * &u.v);
            let first = -(&u.v * &a.a1[k] * &u.v) + bracket(&u, j) * &u.v * half_i;
            Ok((u, e, first))
        })
        .collect();
    let parts = out.into_iter().collect::<Result<Vec<_>>>()?;
    let mut r = TildeElement { grid: a.grid.clone(), size: a.size, a0: vec![], e: vec![], a1: vec![] };
    for (j, e, f) in parts {
        r.a0.push(j);
        r.e.push(e);
        r.a1.push(f);
    }
    Ok(r)
}

/// Boundary x-jet I₀ + xI₁ with an optional εx part.
#[derive(Debug, Clone)]
pub struct CuspJet {
    pub grid: Arc<Grid2>,
    pub size: usize,
    pub i0: Vec<Jet>,
    pub i1: Vec<CMat>,
    pub eps: Option<Vec<CMat>>,
}

impl CuspJet {
    pub fn identity(grid: &Arc<Grid2>, size: usize) -> Self {
        CuspJet {
            grid: grid.clone(),
            size,
            i0: vec![Jet::constant(CMat::identity(size, size)); grid.len()],
            i1: vec![CMat::zeros(size, size); grid.len()],
            eps: None,
        }
    }

    fn as_tilde(&self) -> TildeElement {
        let z = || vec![CMat::zeros(self.size, self.size); self.grid.len()];
        TildeElement {
            grid: self.grid.clone(),
            size: self.size,
            a0: self.i0.clone(),
            e: self.i1.clone(),
            a1: self.eps.clone().unwrap_or_else(z),
        }
    }
}

/// Product of cusp jets. The j = 1 term of the x-jet product carries x² and
/// drops out; the surviving first-order correction −(i/2){I₀(A), I₀(B)} is
/// recorded in the εx slot.
pub fn jet_mul(a: &CuspJet, b: &CuspJet) -> Result<CuspJet> {
    let p = tilde_mul(&a.as_tilde(), &b.as_tilde())?;
    Ok(CuspJet { grid: p.grid, size: p.size, i0: p.a0, i1: p.e, eps: Some(p.a1) })
}

/// Ĩ(A) = I(A₀) + x·I₁(A) + εx·I(A′/x), sampled on the grid.
pub fn itilde(a: &CssSymbols, grid: &Arc<Grid2>) -> Result<TildeElement> {
    let n = a.size;
    let parts: Vec<(Jet, CMat, CMat)> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let (t, tau) = grid.point(k);
            let j = Jet::from_family(&a.a0, t, tau);
            let e = a.e.as_ref().map_or_else(|| CMat::zeros(n, n), |f| f.eval(&[t, tau]));
            let f = a.a1.as_ref().map_or_else(|| CMat::zeros(n, n), |f| f.eval(&[t, tau]));
            (j, e, f)
        })
        .collect();
    let mut r = TildeElement { grid: grid.clone(), size: n, a0: vec![], e: vec![], a1: vec![] };
    for (j, e, f) in parts {
        if !j.v.iter().all(|z| z.is_finite()) {
            return Err(Error::Missing("non-finite indicial data".into()));
        }
        r.a0.push(j);
        r.e.push(e);
        r.a1.push(f);
    }
    Ok(r)
}

/// ∫∫ Tr({a₀⁻¹, ∂a₀}) for a direction given as a second jet; vanishes for
/// Schwartz perturbations by integration by parts.
pub fn poisson_trace(a: &Star2Element, da: &[Jet]) -> Result<C64> {
    let vals: Vec<Result<C64>> = (0..a.grid.len())
        .into_par_iter()
        .map(|k| {
            let u = a.a0[k].inv(|| at_node(&a.grid, k))?;
            Ok(crate::linalg::trace(&bracket(&u, &da[k])))
        })
        .collect();
    let vals: Vec<C64> = vals.into_iter().collect::<Result<_>>()?;
    Ok(a.grid.integrate(&vals) / (2.0 * PI))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, eye, re};
    use crate::fixtures::{gaussian_packet_family, random_star2};
    use proptest::prelude::*;

    fn grid() -> Arc<Grid2> {
        Arc::new(Grid2::new(24, 24, 1.0))
    }

    #[test]
    fn identity_is_neutral() {
        let g = grid();
        let b = random_star2(&g, 2, 7, 0.4);
        let id = Star2Element::identity(&g, 2);
        assert!(star2_mul(&id, &b).unwrap().max_deviation(&b) < 1e-15);
        assert!(star2_mul(&b, &id).unwrap().max_deviation(&b) < 1e-15);
    }

    // Frozen from direct evaluation of the bracket for a₀ = e^{−t²}, b₀ = e^{−τ²}
    // at (t, τ) = (1, 1): −(i/2){a₀, b₀} = (i/2)·∂_ta₀·∂_τb₀ = 2i e^{−2}.
    const SCALAR_BRACKET_AT_11: C64 = C64 { re: 0.0, im: 0.2706705664732254 };

    #[test]
    fn scalar_bracket_regression() {
        let g = Arc::new(Grid2 { t: vec![(1.0, 1.0)], tau: vec![(1.0, 1.0)] });
        let fa = SuspendedFamily::new(2, 1, -10.0, |p| CMat::from_element(1, 1, re((-p[0] * p[0]).exp())));
        let fb = SuspendedFamily::new(2, 1, -10.0, |p| CMat::from_element(1, 1, re((-p[1] * p[1]).exp())));
        let a = Star2Element::from_families(&g, &fa, None).unwrap();
        let b = Star2Element::from_families(&g, &fb, None).unwrap();
        let p = star2_mul(&a, &b).unwrap();
        assert!((p.a1[0][(0, 0)] - SCALAR_BRACKET_AT_11).norm() < 1e-9);
    }

    #[test]
    fn inverse_of_constant_leading_part() {
        let g = grid();
        let mut a = Star2Element::identity(&g, 2);
        for (k, m) in a.a1.iter_mut().enumerate() {
            let (t, tau) = g.point(k);
            *m = eye(2) * re((-t * t - tau * tau).exp());
        }
        let ai = star2_inv(&a).unwrap();
        for k in 0..g.len() {
            assert!(fro(&(&ai.a1[k] + &a.a1[k])) < 1e-15);
        }
    }

    #[test]
    fn phase_family_inverse_round_trip() {
        let g = grid();
        let lam = 0.7;
        let f = SuspendedFamily::new(2, 1, -1.0, move |p| {
            CMat::from_element(1, 1, c(lam - p[1], p[0]) / c(lam + p[1], p[0]))
        });
        let a = Star2Element::from_families(&g, &f, None).unwrap();
        let ai = star2_inv(&a).unwrap();
        // ε-part is exactly the bracket term since a₁ = 0
        for k in 0..g.len() {
            let u = &ai.a0[k];
            let expect = bracket(u, &a.a0[k]) * &u.v * (I * 0.5);
            assert!(fro(&(&ai.a1[k] - expect)) < 1e-14);
        }
        let id = Star2Element::identity(&g, 1);
        assert!(star2_mul(&a, &ai).unwrap().max_deviation(&id) < 1e-9);
        assert!(star2_mul(&ai, &a).unwrap().max_deviation(&id) < 1e-9);
    }

    #[test]
    fn jet_product_with_identity_and_bracket_only() {
        let g = grid();
        let t1 = itilde(&crate::fixtures::random_css(2, 3, 0.3), &g).unwrap();
        let a = CuspJet { grid: g.clone(), size: 2, i0: t1.a0.clone(), i1: t1.e.clone(), eps: None };
        let id = CuspJet::identity(&g, 2);
        let p = jet_mul(&a, &id).unwrap();
        for k in 0..g.len() {
            assert!(fro(&(&p.i0[k].v - &a.i0[k].v)) < 1e-15);
            assert!(fro(&(&p.i1[k] - &a.i1[k])) < 1e-15);
        }
        let t2 = itilde(&crate::fixtures::random_css(2, 4, 0.3), &g).unwrap();
        let zero = vec![CMat::zeros(2, 2); g.len()];
        let a = CuspJet { grid: g.clone(), size: 2, i0: t1.a0.clone(), i1: zero.clone(), eps: None };
        let b = CuspJet { grid: g.clone(), size: 2, i0: t2.a0.clone(), i1: zero, eps: None };
        let p = jet_mul(&a, &b).unwrap();
        let eps = p.eps.unwrap();
        for k in 0..g.len() {
            assert!(fro(&p.i1[k]) == 0.0);
            let expect = bracket(&t1.a0[k], &t2.a0[k]) * (-I * 0.5);
            assert!(fro(&(&eps[k] - expect)) < 1e-15);
        }
    }

    #[test]
    fn itilde_of_bare_symbol_and_eps_linearity() {
        let g = grid();
        let mut css = crate::fixtures::random_css(2, 5, 0.3);
        css.e = None;
        css.a1 = None;
        let t = itilde(&css, &g).unwrap();
        assert!(t.e.iter().chain(&t.a1).all(|m| fro(m) == 0.0));
        let mut with_eps = css.clone();
        with_eps.a1 = Some(gaussian_packet_family(2, 9, 0.5));
        let t2 = itilde(&with_eps, &g).unwrap();
        for k in 0..g.len() {
            assert_eq!(t.a0[k], t2.a0[k]);
            assert_eq!(t.e[k], t2.e[k]);
        }
        assert!(t2.a1.iter().any(|m| fro(m) > 1e-3));
    }

    #[test]
    fn lifted_inverse_round_trip() {
        let g = grid();
        let a = itilde(&crate::fixtures::random_css(2, 11, 0.4), &g).unwrap();
        let ai = tilde_inv(&a).unwrap();
        assert!(tilde_mul(&a, &ai).unwrap().is_identity(1e-12));
        assert!(tilde_mul(&ai, &a).unwrap().is_identity(1e-12));
    }

    #[test]
    fn poisson_trace_vanishes() {
        let g = Arc::new(Grid2::new(64, 64, 1.0));
        let a = random_star2(&g, 2, 3, 0.4);
        let da = random_star2(&g, 2, 4, 0.4);
        let v = poisson_trace(&a, &da.a0).unwrap();
        assert!(v.norm() < 1e-8, "{v}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn associative(seed in 0u64..10_000) {
            let g = grid();
            let a = random_star2(&g, 2, seed, 0.5);
            let b = random_star2(&g, 2, seed + 1, 0.5);
            let cc = random_star2(&g, 2, seed + 2, 0.5);
            let l = star2_mul(&star2_mul(&a, &b).unwrap(), &cc).unwrap();
            let r = star2_mul(&a, &star2_mul(&b, &cc).unwrap()).unwrap();
            prop_assert!(l.max_deviation(&r) < 1e-10);
        }

        #[test]
        fn two_sided_inverse(seed in 0u64..10_000) {
            let g = grid();
            let a = random_star2(&g, 2, seed, 0.5);
            let ai = star2_inv(&a).unwrap();
            let id = Star2Element::identity(&g, 2);
            prop_assert!(star2_mul(&a, &ai).unwrap().max_deviation(&id) < 1e-9);
            prop_assert!(star2_mul(&ai, &a).unwrap().max_deviation(&id) < 1e-9);
        }
    }
}
