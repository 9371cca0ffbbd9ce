//! μ, α₂, the suspended determinant by path integration, determinant-line
//! cocycles over a discretized base and the ℤ-bundle connection h = ½η + m.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groups::{integer_reading, IntegerReading};
use crate::linalg::{c, det, inv, trace, CMat, C64, I};
use crate::numerics::{gl_panels, integrate_form, pairwise_sum, SampledPath};
use crate::star::{star2_inv, star2_mul, Grid2, Jet, Star2Element, TildeElement};

fn node_label(grid: &Grid2, k: usize) -> String {
    let (t, tau) = grid.point(k);
    format!("(t, τ) = ({t:.4}, {tau:.4})")
}

fn integrate_density(grid: &Grid2, vals: Vec<Result<C64>>) -> Result<C64> {
    let vals: Vec<C64> = vals.into_iter().collect::<Result<_>>()?;
    Ok(grid.integrate(&vals))
}

/// μ(a) = (1/2π²i) ∫∫ Tr(a₀⁻¹a₁) dt dτ.
pub fn mu(a: &Star2Element) -> Result<C64> {
    let vals: Vec<Result<C64>> = (0..a.grid.len())
        .into_par_iter()
        .map(|k| {
            let u = inv(&a.a0[k].v, || node_label(&a.grid, k))?;
            Ok(crate::linalg::trace_prod(&u, &a.a1[k]))
        })
        .collect();
    Ok(integrate_density(&a.grid, vals)? / (2.0 * PI * PI * I))
}

/// Directional derivative of μ at `a` along `da`.
pub fn dmu(a: &Star2Element, da: &Star2Element) -> Result<C64> {
    check_tangent(a, da)?;
    let vals: Vec<Result<C64>> = (0..a.grid.len())
        .into_par_iter()
        .map(|k| {
            let u = inv(&a.a0[k].v, || node_label(&a.grid, k))?;
            let ud0 = &u * &da.a0[k].v;
            Ok(trace(&(&u * &da.a1[k] - &ud0 * &u * &a.a1[k])))
        })
        .collect();
    Ok(integrate_density(&a.grid, vals)? / (2.0 * PI * PI * I))
}

fn check_tangent(a: &Star2Element, da: &Star2Element) -> Result<()> {
    if a.grid.len() != da.grid.len() || a.size != da.size {
        return Err(Error::Shape("tangent sampled on a different grid".into()));
    }
    Ok(())
}

/// α₂(a)(da) = iπ dμ(a)(da) − (1/4πi) ∫∫ Tr(u a_t u a_τ u da₀ − u a_τ u a_t u da₀),
/// u = a₀⁻¹, with Lebesgue measure dt dτ.
pub fn alpha2(a: &Star2Element, da: &Star2Element) -> Result<C64> {
    check_tangent(a, da)?;
    let vals: Vec<Result<(C64, C64)>> = (0..a.grid.len())
        .into_par_iter()
        .map(|k| {
            let j = &a.a0[k];
            let u = inv(&j.v, || node_label(&a.grid, k))?;
            let d0 = &da.a0[k].v;
            let ud0 = &u * d0;
            let lin = trace(&(&u * &da.a1[k] - &ud0 * &u * &a.a1[k]));
            let ut = &u * &j.dt;
            let utau = &u * &j.dtau;
            let curv = trace(&((&ut * &utau - &utau * &ut) * &ud0));
            Ok((lin, curv))
        })
        .collect();
    let vals: Vec<(C64, C64)> = vals.into_iter().collect::<Result<_>>()?;
    let lin: Vec<C64> = vals.iter().map(|v| v.0).collect();
    let curv: Vec<C64> = vals.iter().map(|v| v.1).collect();
    let lin = a.grid.integrate(&lin);
    let curv = a.grid.integrate(&curv);
    // iπ · (1/2π²i) = 1/2π
    Ok(lin / (2.0 * PI) - curv / (4.0 * PI * I))
}

/// exp ∫ γ*α₂ by the midpoint rule on a sampled path from the identity.
pub fn sus_det_path(path: &SampledPath<Star2Element>) -> Result<C64> {
    let start = &path.values[0];
    let id = Star2Element::identity(&start.grid, start.size);
    if start.max_deviation(&id) > 1e-12 {
        return Err(Error::InvalidPath("path does not start at the identity".into()));
    }
    Ok(integrate_form(path, alpha2)?.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SusDet {
    pub value: C64,
    /// |log det| change between the two panel counts.
    pub error: f64,
    /// Arc bulge κ of z(s) = s + iκs(1 − s); 0 for the straight line.
    pub detour: f64,
}

/// Id + z(a − Id) with its first-order part z·a₁.
fn affine_point(a: &Star2Element, z: C64) -> Star2Element {
    let id = CMat::identity(a.size, a.size);
    Star2Element {
        grid: a.grid.clone(),
        size: a.size,
        a0: a
            .a0
            .iter()
            .map(|j| Jet { v: &id + (&j.v - &id) * z, dt: &j.dt * z, dtau: &j.dtau * z })
            .collect(),
        a1: a.a1.iter().map(|m| m * z).collect(),
    }
}

fn affine_tangent(a: &Star2Element, dz: C64) -> Star2Element {
    let id = CMat::identity(a.size, a.size);
    Star2Element {
        grid: a.grid.clone(),
        size: a.size,
        a0: a.a0.iter().map(|j| Jet::constant((&j.v - &id) * dz)).collect(),
        a1: a.a1.iter().map(|m| m * dz).collect(),
    }
}

/// Smallest 1/‖a₀⁻¹‖_F over the grid along the path, or None if singular.
fn path_margin(a: &Star2Element, kappa: f64) -> Option<f64> {
    let samples = 65;
    let margins: Vec<Option<f64>> = (0..samples)
        .into_par_iter()
        .map(|j| {
            let s = j as f64 / (samples - 1) as f64;
            let z = c(s, kappa * s * (1.0 - s));
            let p = affine_point(a, z);
            let mut m = f64::INFINITY;
            for k in 0..p.grid.len() {
                let u = inv(&p.a0[k].v, String::new).ok()?;
                m = m.min(1.0 / crate::linalg::fro(&u));
            }
            Some(m)
        })
        .collect();
    margins.into_iter().try_fold(f64::INFINITY, |acc, m| m.map(|m| acc.min(m)))
}

fn log_det_along(a: &Star2Element, kappa: f64, panels: usize) -> Result<C64> {
    let nodes = gl_panels(0.0, 1.0, panels, 12);
    let terms: Vec<Result<C64>> = nodes
        .par_iter()
        .map(|&(s, w)| {
            let z = c(s, kappa * s * (1.0 - s));
            let dz = c(1.0, kappa * (1.0 - 2.0 * s));
            let p = affine_point(a, z);
            Ok(alpha2(&p, &affine_tangent(a, dz))? * w)
        })
        .collect();
    let terms: Vec<C64> = terms.into_iter().collect::<Result<_>>()?;
    Ok(pairwise_sum(&terms).unwrap_or_default())
}

/// Suspended determinant along Id + z(s)(a − Id), Gauss–Legendre in s. If the
/// straight line meets a singular element the scalar parameter detours through
/// a complex arc; α₂ is complex-linear in the tangent, so the integral is the
/// same for every path in the class.
pub fn sus_det(a: &Star2Element) -> Result<SusDet> {
    // a barely invertible path is under-resolved by the s-quadrature, so keep
    // the best-conditioned candidate unless one is comfortably invertible
    let mut chosen = None;
    let mut best = 0.0;
    for kappa in [0.0, 0.4, -0.4, 0.8, -0.8] {
        if let Some(m) = path_margin(a, kappa) {
            if m > best {
                best = m;
                chosen = Some(kappa);
            }
            if m > 0.25 {
                break;
            }
        }
    }
    let kappa = chosen.ok_or_else(|| Error::Singular { at: "every candidate path".into() })?;
    let coarse = log_det_along(a, kappa, 8)?;
    let fine = log_det_along(a, kappa, 16)?;
    Ok(SusDet { value: fine.exp(), error: (fine - coarse).norm(), detour: kappa })
}

/// Lifted determinant of a tilde element: the εx coefficient of the log, which
/// ignores the x part.
pub fn lifted_det(a: &TildeElement) -> Result<SusDet> {
    sus_det(&a.to_star2())
}

// ---------------------------------------------------------------------------
// determinant line cocycles

/// Group elements carrying a multiplicative determinant.
pub trait DetElement: Clone + Send + Sync {
    fn star(&self, other: &Self) -> Result<Self>;
    fn inverse(&self) -> Result<Self>;
    fn det(&self) -> Result<C64>;
}

impl DetElement for CMat {
    fn star(&self, other: &Self) -> Result<Self> {
        if self.ncols() != other.nrows() {
            return Err(Error::Shape("matrix sizes differ".into()));
        }
        Ok(self * other)
    }
    fn inverse(&self) -> Result<Self> {
        inv(self, || "section".into())
    }
    fn det(&self) -> Result<C64> {
        Ok(det(self))
    }
}

impl DetElement for Star2Element {
    fn star(&self, other: &Self) -> Result<Self> {
        star2_mul(self, other)
    }
    fn inverse(&self) -> Result<Self> {
        star2_inv(self)
    }
    fn det(&self) -> Result<C64> {
        Ok(sus_det(self)?.value)
    }
}

/// Sections of one patch at the base points it covers.
#[derive(Debug, Clone)]
pub struct PatchSections<E> {
    pub name: String,
    pub points: Vec<usize>,
    pub sections: Vec<E>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    pub point: usize,
    pub value: C64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetLineCocycle {
    pub base_points: usize,
    pub patches: Vec<String>,
    pub transitions: Vec<Transition>,
    /// Worst relative failure of det g_ij · det g_jl = det g_il.
    pub cocycle_defect: f64,
}

impl DetLineCocycle {
    /// det g_{from,to} over the shared points, in base order.
    pub fn transition_values(&self, from: usize, to: usize) -> Vec<C64> {
        let mut v: Vec<&Transition> = self.transitions.iter().filter(|t| t.from == from && t.to == to).collect();
        v.sort_by_key(|t| t.point);
        v.into_iter().map(|t| t.value).collect()
    }

    /// Winding of det g_{from,to} around the base circle.
    pub fn chern_number(&self, from: usize, to: usize) -> Result<IntegerReading> {
        let vals = self.transition_values(from, to);
        if vals.len() != self.base_points {
            return Err(Error::Missing(format!("patches {from} and {to} do not overlap along the whole base")));
        }
        integer_reading(re_of(crate::linalg::winding_of(&vals)))
    }
}

fn re_of(x: f64) -> C64 {
    c(x, 0.0)
}

/// Transitions g_ij = σ_i⁻¹⋆σ_j on every overlap, valued by det, with the
/// cocycle identity checked on triple overlaps.
pub fn det_cocycle<E: DetElement>(base_points: usize, patches: &[PatchSections<E>]) -> Result<DetLineCocycle> {
    if patches.is_empty() {
        return Err(Error::Missing("no patches".into()));
    }
    for p in patches {
        if p.points.len() != p.sections.len() {
            return Err(Error::Shape(format!("patch {} has {} points but {} sections", p.name, p.points.len(), p.sections.len())));
        }
        if p.points.iter().any(|&k| k >= base_points) {
            return Err(Error::Shape(format!("patch {} covers a point outside the base", p.name)));
        }
    }
    let section = |i: usize, k: usize| -> Option<&E> {
        let p = &patches[i];
        p.points.iter().position(|&q| q == k).map(|j| &p.sections[j])
    };
    let mut jobs = Vec::new();
    for i in 0..patches.len() {
        for j in 0..patches.len() {
            if i == j {
                continue;
            }
            for &k in &patches[i].points {
                if section(j, k).is_some() {
                    jobs.push((i, j, k));
                }
            }
        }
    }
    let transitions: Vec<Result<Transition>> = jobs
        .par_iter()
        .map(|&(i, j, k)| {
            let si = section(i, k).unwrap();
            let sj = section(j, k).unwrap();
            let g = si.inverse()?.star(sj)?;
            let value = g.det()?;
            if value.norm() == 0.0 || !value.is_finite() {
                return Err(Error::Singular { at: format!("transition ({i}, {j}) at base point {k}") });
            }
            Ok(Transition { from: i, to: j, point: k, value })
        })
        .collect();
    let transitions: Vec<Transition> = transitions.into_iter().collect::<Result<_>>()?;
    let lookup = |i: usize, j: usize, k: usize| {
        transitions.iter().find(|t| t.from == i && t.to == j && t.point == k).map(|t| t.value)
    };
    let mut defect: f64 = 0.0;
    for t in &transitions {
        for l in 0..patches.len() {
            if l == t.from || l == t.to {
                continue;
            }
            if let (Some(b), Some(direct)) = (lookup(t.to, l, t.point), lookup(t.from, l, t.point)) {
                defect = defect.max((t.value * b - direct).norm() / direct.norm());
            }
        }
        if let Some(back) = lookup(t.to, t.from, t.point) {
            defect = defect.max((t.value * back - 1.0).norm());
        }
    }
    Ok(DetLineCocycle {
        base_points,
        patches: patches.iter().map(|p| p.name.clone()).collect(),
        transitions,
        cocycle_defect: defect,
    })
}

// ---------------------------------------------------------------------------
// ℤ-bundle data

/// One patch of (A, m) data: η(A_b) at the covered points and the integer m.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZPatch {
    pub name: String,
    pub points: Vec<usize>,
    pub eta: Vec<f64>,
    pub m: i64,
}

impl ZPatch {
    pub fn evaluate(name: &str, points: Vec<usize>, m: i64, eta: impl Fn(usize) -> Result<f64> + Sync) -> Result<Self> {
        let eta: Vec<Result<f64>> = points.par_iter().map(|&k| eta(k)).collect();
        Ok(ZPatch { name: name.into(), points, eta: eta.into_iter().collect::<Result<_>>()?, m })
    }

    pub fn h(&self) -> Vec<f64> {
        self.eta.iter().map(|e| 0.5 * e + self.m as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZBundleData {
    pub base_points: usize,
    pub patches: Vec<ZPatch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZConnection {
    /// exp(2πih) at each base point.
    pub values: Vec<C64>,
    /// Largest disagreement of exp(2πih) between patches at a shared point.
    pub patch_defect: f64,
    /// Largest distance of an overlap jump h_i − h_j from an integer.
    pub jump_defect: f64,
}

impl ZConnection {
    pub fn winding(&self) -> f64 {
        crate::linalg::winding_of(&self.values)
    }
}

pub fn z_connection(data: &ZBundleData) -> Result<ZConnection> {
    let mut values: Vec<Option<C64>> = vec![None; data.base_points];
    let mut h_at: Vec<Vec<f64>> = vec![Vec::new(); data.base_points];
    for p in &data.patches {
        if p.eta.len() != p.points.len() {
            return Err(Error::Shape(format!("patch {} has mismatched η samples", p.name)));
        }
        for (&k, h) in p.points.iter().zip(p.h()) {
            if k >= data.base_points {
                return Err(Error::Shape(format!("patch {} covers a point outside the base", p.name)));
            }
            h_at[k].push(h);
        }
    }
    let mut patch_defect: f64 = 0.0;
    let mut jump_defect: f64 = 0.0;
    for (k, hs) in h_at.iter().enumerate() {
        let first = *hs.first().ok_or_else(|| Error::Missing(format!("base point {k} is not covered")))?;
        let v0 = (2.0 * PI * I * first).exp();
        for &h in &hs[1..] {
            patch_defect = patch_defect.max(((2.0 * PI * I * h).exp() - v0).norm());
            let jump = h - first;
            jump_defect = jump_defect.max((jump - jump.round()).abs());
        }
        values[k] = Some(v0);
    }
    Ok(ZConnection { values: values.into_iter().map(Option::unwrap).collect(), patch_defect, jump_defect })
}

/// Shared grid helper for callers building Star2 sections on one grid.
pub fn shared_grid(n: usize) -> Arc<Grid2> {
    Arc::new(Grid2::new(n, n, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::random_star2;
    use crate::linalg::{eye, re};
    use crate::numerics::Linear;
    use proptest::prelude::*;

    fn gaussian_eps(grid: &Arc<Grid2>, amp: f64) -> Star2Element {
        let mut a = Star2Element::identity(grid, 2);
        for (k, m) in a.a1.iter_mut().enumerate() {
            let (t, tau) = grid.point(k);
            m[(0, 0)] = re(amp * (-t * t - tau * tau).exp());
        }
        a
    }

    #[test]
    fn mu_examples() {
        let g = shared_grid(64);
        assert_eq!(mu(&Star2Element::identity(&g, 2)).unwrap(), C64::new(0.0, 0.0));
        let a = gaussian_eps(&g, 1.0);
        let m = mu(&a).unwrap();
        assert!((m - 1.0 / (2.0 * PI * I)).norm() < 1e-9, "{m}");
        let m2 = mu(&gaussian_eps(&g, 2.0)).unwrap();
        assert!((m2 - 2.0 * m).norm() < 1e-14);
    }

    #[test]
    fn alpha2_constant_leading_part_is_ipi_dmu() {
        let g = shared_grid(32);
        let a = random_star2(&g, 2, 3, 0.5);
        let a = Star2Element { a0: Star2Element::identity(&g, 2).a0, ..a };
        let da = random_star2(&g, 2, 4, 0.5);
        let lhs = alpha2(&a, &da).unwrap();
        let rhs = I * PI * dmu(&a, &da).unwrap();
        assert!((lhs - rhs).norm() < 1e-13);
    }

    #[test]
    fn alpha2_is_linear_in_the_direction() {
        let g = shared_grid(32);
        let a = random_star2(&g, 2, 5, 0.5);
        let d1 = random_star2(&g, 2, 6, 0.5);
        let d2 = random_star2(&g, 2, 7, 0.5);
        let sum = d1.scaled(2.0).add(&d2);
        let lhs = alpha2(&a, &sum).unwrap();
        let rhs = alpha2(&a, &d1).unwrap() * 2.0 + alpha2(&a, &d2).unwrap();
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn constant_path_gives_one() {
        let g = shared_grid(16);
        let id = Star2Element::identity(&g, 2);
        let path = SampledPath::new(vec![id.clone(), id], false, 0).unwrap();
        assert_eq!(sus_det_path(&path).unwrap(), C64::new(1.0, 0.0));
        assert!((sus_det(&Star2Element::identity(&g, 2)).unwrap().value - 1.0).norm() < 1e-15);
    }

    #[test]
    fn gaussian_path_gives_root_e() {
        let g = shared_grid(64);
        let d = sus_det(&gaussian_eps(&g, 1.0)).unwrap();
        assert!((d.value - re(0.5f64.exp())).norm() < 1e-8, "{:?}", d);
        // midpoint rule on the sampled path agrees since α₂ is constant along it
        let a = gaussian_eps(&g, 1.0);
        let path = SampledPath::from_fn(|s| affine_point(&a, re(s)), 8, false).unwrap();
        assert!((sus_det_path(&path).unwrap() - d.value).norm() < 1e-12);
    }

    #[test]
    fn singular_straight_line_detours() {
        let g = shared_grid(16);
        let mut a = Star2Element::identity(&g, 2);
        for j in a.a0.iter_mut() {
            j.v = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![re(-1.0), re(1.0)]));
        }
        let d = sus_det(&a).unwrap();
        assert!(d.detour != 0.0);
        assert!(d.value.is_finite());
    }

    #[test]
    fn closed_loop_integrality() {
        let g = shared_grid(24);
        let base = random_star2(&g, 2, 21, 0.4);
        // loop s ↦ base rotated by a scalar phase that returns to itself
        let path = SampledPath::from_fn(
            |s| {
                let mut x = base.clone();
                let ph = (2.0 * PI * I * s).exp();
                for j in x.a0.iter_mut() {
                    *j = j.scale(ph);
                }
                for m in x.a1.iter_mut() {
                    *m *= ph;
                }
                x
            },
            256,
            true,
        )
        .unwrap();
        let v = integrate_form(&path, alpha2).unwrap() / (2.0 * PI * I);
        assert!((v - v.re.round()).norm() < 1e-3, "{v}");
    }

    #[test]
    fn single_patch_is_trivial() {
        let secs: Vec<CMat> = (0..8).map(|k| eye(2) * re(1.0 + k as f64)).collect();
        let p = PatchSections { name: "U".into(), points: (0..8).collect(), sections: secs };
        let cocycle = det_cocycle(8, &[p]).unwrap();
        assert!(cocycle.transitions.is_empty());
        assert_eq!(cocycle.cocycle_defect, 0.0);
    }

    fn clutching(k_points: usize, degree: i32) -> DetLineCocycle {
        let north: Vec<CMat> = (0..k_points).map(|_| eye(2)).collect();
        let south: Vec<CMat> = (0..k_points)
            .map(|k| {
                let b = 2.0 * PI * k as f64 / k_points as f64;
                let mut m = eye(2);
                m[(0, 0)] = (I * b * degree as f64).exp();
                m
            })
            .collect();
        let third: Vec<CMat> = south.iter().enumerate().map(|(k, m)| m * (eye(2) * re(2.0 + (k as f64).sin()))).collect();
        let pts: Vec<usize> = (0..k_points).collect();
        det_cocycle(
            k_points,
            &[
                PatchSections { name: "N".into(), points: pts.clone(), sections: north },
                PatchSections { name: "S".into(), points: pts.clone(), sections: south },
                PatchSections { name: "S'".into(), points: pts, sections: third },
            ],
        )
        .unwrap()
    }

    #[test]
    fn clutching_chern_number_and_refinement() {
        for degree in [-2, 1, 3] {
            let c16 = clutching(16, degree);
            let c32 = clutching(32, degree);
            assert!(c16.cocycle_defect < 1e-12);
            assert_eq!(c16.chern_number(0, 1).unwrap().rounded, degree as i64);
            assert_eq!(c32.chern_number(0, 1).unwrap().rounded, degree as i64);
            assert_eq!(c32.chern_number(0, 2).unwrap().rounded, degree as i64);
        }
    }

    #[test]
    fn star2_cocycle_identity() {
        let g = shared_grid(64);
        let pts: Vec<usize> = (0..3).collect();
        let mk = |seed: u64| -> Vec<Star2Element> { (0..3).map(|k| random_star2(&g, 2, seed * 10 + k, 0.4)).collect() };
        let patches: Vec<PatchSections<Star2Element>> = (0..3)
            .map(|i| PatchSections { name: format!("U{i}"), points: pts.clone(), sections: mk(i as u64 + 1) })
            .collect();
        let cocycle = det_cocycle(3, &patches).unwrap();
        assert!(cocycle.cocycle_defect < 1e-8, "{}", cocycle.cocycle_defect);
    }

    #[test]
    fn z_connection_constant_and_gauge_shift() {
        let pts: Vec<usize> = (0..8).collect();
        let flat = ZPatch::evaluate("U", pts.clone(), 0, |_| Ok(0.3)).unwrap();
        let shifted = ZPatch::evaluate("V", pts, 0, |_| Ok(2.3)).unwrap();
        let z = z_connection(&ZBundleData { base_points: 8, patches: vec![flat, shifted] }).unwrap();
        assert!(z.patch_defect < 1e-12 && z.jump_defect < 1e-12);
        assert!(z.values.iter().all(|v| (v - z.values[0]).norm() < 1e-15));
        assert!(z.winding().abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn multiplicative(seed in 0u64..10_000) {
            let g = shared_grid(40);
            let a = random_star2(&g, 2, seed, 0.6);
            let b = random_star2(&g, 2, seed + 5000, 0.6);
            let ab = sus_det(&star2_mul(&a, &b).unwrap()).unwrap().value;
            let da = sus_det(&a).unwrap().value;
            let db = sus_det(&b).unwrap().value;
            prop_assert!((ab - da * db).norm() / (da * db).norm() < 1e-6);
        }
    }
}
