//! Families over a base circle: invertible sections, τ = exp(iπη) along the
//! base, its equivariance under gauges, the winding comparison against the
//! determinant line cocycle, and the comparison of Det(m) with the
//! determinant line of the suspended indicial family.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cuspmodel::{inverse, theta_nodes, CssSymbols};
use crate::error::{Error, Result};
use crate::eta::{dirac_build, eta_cusp, CssOperator, CuspSuspendedFamily, EtaResolution, EtaResult, InteriorFn};
use crate::fixtures::random_cusp_family;
use crate::groups::{integer_reading, IntegerReading, Sampler, SuspendedFamily};
use crate::linalg::{c, eye, fro, outer, singular_values, winding_of, CMat, C64, I};
use crate::psorders::{full_elliptic_check, PSFamily, SweepResolution};
use crate::star::{Grid2, Star2Element};
use crate::numerics::{pairwise_sum, Linear};
use crate::susdet::{alpha2, det_cocycle, lifted_det, shared_grid, PatchSections};

pub type MemberFn = Arc<dyn Fn(f64) -> CuspSuspendedFamily + Send + Sync>;
pub type IndicialFn = Arc<dyn Fn(f64) -> PSFamily + Send + Sync>;

/// b ↦ P_b on K equally spaced base points b_k = 2πk/K.
#[derive(Clone)]
pub struct FamilySpec {
    pub name: String,
    pub points: usize,
    pub member: MemberFn,
    /// Indicial family for the ellipticity precheck, when the model has one.
    pub indicial: Option<IndicialFn>,
}

impl FamilySpec {
    pub fn base(&self) -> Vec<f64> {
        (0..self.points).map(|k| 2.0 * PI * k as f64 / self.points as f64).collect()
    }

    /// Dirac model with boundary operator m(b) = e^{ib}.
    pub fn dirac_circle(points: usize) -> Self {
        let model = |b: f64| dirac_build(&CMat::from_element(1, 1, C64::from_polar(1.0, b))).expect("|m| = 1");
        FamilySpec {
            name: "dirac m(b) = exp(ib)".into(),
            points,
            member: Arc::new(move |b| model(b).css_family()),
            indicial: Some(Arc::new(move |b| model(b).indicial_family())),
        }
    }

    pub fn constant(points: usize, family: CuspSuspendedFamily) -> Self {
        FamilySpec { name: "constant".into(), points, member: Arc::new(move |_| family.clone()), indicial: None }
    }

    /// Id + κ(b)e^{−t²}E₀₀ with κ(b) = −(1 + cos b)/2: singular exactly at
    /// b = 0, t = 0.
    pub fn singular_at_origin(points: usize) -> Self {
        let member = move |b: f64| {
            let kappa = -0.5 * (1.0 + b.cos());
            let k: InteriorFn = Arc::new(move |t| {
                let g = (-t * t).exp();
                (CMat::from_element(1, 1, c(kappa * g, 0.0)), CMat::from_element(1, 1, c(-2.0 * t * kappa * g, 0.0)))
            });
            CuspSuspendedFamily::interior_only(1, k)
        };
        FamilySpec { name: "interior singular at b = 0".into(), points, member: Arc::new(member), indicial: None }
    }
}

/// Finite-rank interior perturbation ρ(t)·Σ_k u_k v_k* in the two leading
/// modes, ρ(t) = e^{−t²}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub u: Vec<Vec<C64>>,
    pub v: Vec<Vec<C64>>,
}

fn pad(m: &CMat, d: usize) -> CMat {
    let mut out = CMat::zeros(d, d);
    out.view_mut((0, 0), (m.nrows(), m.ncols())).copy_from(m);
    out
}

impl Perturbation {
    pub fn rank(&self) -> usize {
        self.u.len()
    }

    pub fn matrix(&self) -> CMat {
        let d = self.u.first().map_or(0, |u| u.len());
        self.u.iter().zip(&self.v).fold(CMat::zeros(d, d), |acc, (u, v)| acc + outer(u, v))
    }

    fn random(rank: usize, dim: usize, scale: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut vec = || (0..dim).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale).collect::<Vec<_>>();
        let u = (0..rank).map(|_| vec()).collect();
        let v = (0..rank).map(|_| vec()).collect();
        Perturbation { u, v }
    }

    /// P + ρ·Σ u_k v_k*; only single css operators can be perturbed.
    pub fn apply(&self, fam: &CuspSuspendedFamily) -> Result<CuspSuspendedFamily> {
        let CuspSuspendedFamily::Leaf(op) = fam else {
            return Err(Error::Invalid("perturbations apply to single css operators".into()));
        };
        let m = self.matrix();
        let old = op.interior.clone();
        let interior: InteriorFn = Arc::new(move |t| {
            let rho = (-t * t).exp();
            let (k, dk) = match &old {
                Some(f) => f(t),
                None => (CMat::zeros(0, 0), CMat::zeros(0, 0)),
            };
            let d = k.nrows().max(m.nrows());
            (pad(&k, d) + pad(&m, d) * c(rho, 0.0), pad(&dk, d) + pad(&m, d) * c(-2.0 * t * rho, 0.0))
        });
        Ok(CuspSuspendedFamily::leaf(CssOperator { interior: Some(interior), ..(**op).clone() }))
    }
}

/// Lower bound 1/(sup‖a⁻¹‖ + ‖K_inv‖) for ‖A(t)⁻¹‖⁻¹, minimized over the t
/// samples; 0 when an inversion fails.
pub fn invertibility_margin(fam: &CuspSuspendedFamily, ts: &[f64], res: &EtaResolution) -> f64 {
    let thetas = theta_nodes(64);
    ts.par_iter()
        .map(|&t| {
            let Ok(j) = fam.jet(t, res) else { return 0.0 };
            let Ok(u) = inverse(&j.value) else { return 0.0 };
            let sup = thetas.iter().map(|&th| singular_values(&u.symbol.eval(th))[0]).fold(0.0, f64::max);
            1.0 / (sup + fro(&u.interior))
        })
        .reduce(|| f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchBudget {
    pub max_rank: usize,
    pub draws_per_rank: usize,
    pub seed: u64,
    /// Sections with a smaller invertibility margin are rejected.
    pub min_margin: f64,
    pub t_samples: Vec<f64>,
}

impl Default for SearchBudget {
    fn default() -> Self {
        let mut t_samples = vec![0.0];
        for x in [0.125, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 8.0, 16.0] {
            t_samples.push(x);
            t_samples.push(-x);
        }
        SearchBudget { max_rank: 8, draws_per_rank: 16, seed: 0, min_margin: 1e-3, t_samples }
    }
}

#[derive(Clone)]
pub struct Section {
    pub b: f64,
    pub family: CuspSuspendedFamily,
    pub perturbation: Option<Perturbation>,
    pub margin: f64,
}

#[derive(Clone)]
pub struct FamilyOverBase {
    pub name: String,
    pub base: Vec<f64>,
    pub members: Vec<CuspSuspendedFamily>,
    pub sections: Vec<Section>,
    /// One perturbation that works at every base point, when found.
    pub global: Option<Perturbation>,
}

impl FamilyOverBase {
    /// Sections σ_b = P_b without perturbation; fails if any is not invertible.
    pub fn unperturbed(name: &str, base: Vec<f64>, members: Vec<CuspSuspendedFamily>, budget: &SearchBudget, res: &EtaResolution) -> Result<Self> {
        let sections = base
            .par_iter()
            .zip(members.par_iter())
            .map(|(&b, m)| {
                let margin = invertibility_margin(m, &budget.t_samples, res);
                if margin < budget.min_margin {
                    return Err(Error::Singular { at: format!("section at b = {b:.4}") });
                }
                Ok(Section { b, family: m.clone(), perturbation: None, margin })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FamilyOverBase { name: name.into(), base, members, sections, global: Some(Perturbation { u: vec![], v: vec![] }) })
    }
}

fn search_at(member: &CuspSuspendedFamily, b_index: usize, budget: &SearchBudget, res: &EtaResolution) -> Option<(Perturbation, f64)> {
    let dim = 2 * member.size();
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed ^ (b_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    for rank in 1..=budget.max_rank.min(dim) {
        for _ in 0..budget.draws_per_rank {
            let p = Perturbation::random(rank, dim, 0.5, &mut rng);
            let Ok(fam) = p.apply(member) else { return None };
            let margin = invertibility_margin(&fam, &budget.t_samples, res);
            if margin >= budget.min_margin {
                return Some((p, margin));
            }
        }
    }
    None
}

/// Invertible sections at every base point: the member itself when it is
/// invertible, otherwise the first finite-rank perturbation found by a
/// seeded search of increasing rank.
pub fn build_sections(spec: &FamilySpec, budget: &SearchBudget, res: &EtaResolution) -> Result<FamilyOverBase> {
    let base = spec.base();
    if let Some(ind) = &spec.indicial {
        for &b in &base {
            let rep = full_elliptic_check(&ind(b), SweepResolution::default());
            if !rep.all_pass() {
                return Err(Error::Invalid(format!("indicial family not fully elliptic at b = {b:.4}")));
            }
        }
    }
    let members: Vec<CuspSuspendedFamily> = base.iter().map(|&b| (spec.member)(b)).collect();
    let sections = (0..base.len())
        .into_par_iter()
        .map(|k| {
            let m = &members[k];
            let margin = invertibility_margin(m, &budget.t_samples, res);
            if margin >= budget.min_margin {
                return Ok(Section { b: base[k], family: m.clone(), perturbation: None, margin });
            }
            let (p, margin) = search_at(m, k, budget, res)
                .ok_or_else(|| Error::SearchFailed(format!("no invertible perturbation of rank ≤ {} at b = {:.4}", budget.max_rank, base[k])))?;
            Ok(Section { b: base[k], family: p.apply(m)?, perturbation: Some(p), margin })
        })
        .collect::<Result<Vec<_>>>()?;
    // a perturbation that already works everywhere gives a global section
    let candidates: Vec<Perturbation> = {
        let mut v = vec![Perturbation { u: vec![], v: vec![] }];
        v.extend(sections.iter().filter_map(|s| s.perturbation.clone()));
        v
    };
    let global = candidates.into_iter().find(|p| {
        members.par_iter().all(|m| {
            let fam = if p.rank() == 0 { Ok(m.clone()) } else { p.apply(m) };
            fam.map(|f| invertibility_margin(&f, &budget.t_samples, res) >= budget.min_margin).unwrap_or(false)
        })
    });
    Ok(FamilyOverBase { name: spec.name.clone(), base, members, sections, global })
}

// ---------------------------------------------------------------------------
// τ along the base

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TauSection {
    pub base: Vec<f64>,
    pub tau: Vec<C64>,
    pub eta: Vec<EtaResult>,
    pub winding: f64,
    pub min_abs: f64,
    /// max_k |τ(b_{k+1}) − τ(b_k)|, a smoothness proxy.
    pub max_step: f64,
}

impl TauSection {
    fn from_eta(base: Vec<f64>, eta: Vec<EtaResult>) -> Self {
        let tau: Vec<C64> = eta.iter().map(|e| (I * PI * e.eta).exp()).collect();
        let n = tau.len();
        let max_step = (0..n).map(|k| (tau[(k + 1) % n] - tau[k]).norm()).fold(0.0, f64::max);
        let min_abs = tau.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
        TauSection { winding: winding_of(&tau), base, tau, eta, min_abs, max_step }
    }

    /// (b, Re τ, Im τ, Re η, fit residual) rows.
    pub fn rows(&self) -> Vec<(f64, f64, f64, f64, f64)> {
        (0..self.base.len()).map(|k| (self.base[k], self.tau[k].re, self.tau[k].im, self.eta[k].eta.re, self.eta[k].ddtr.residual)).collect()
    }
}

fn tau_of(base: &[f64], fams: &[CuspSuspendedFamily], res: &EtaResolution) -> Result<TauSection> {
    let eta = fams
        .par_iter()
        .zip(base.par_iter())
        .map(|(f, &b)| eta_cusp(f, res).map_err(|e| Error::Invalid(format!("η failed at b = {b:.4}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(TauSection::from_eta(base.to_vec(), eta))
}

/// τ(b) = exp(iπ·η(σ_b)) for the stored sections.
pub fn tau_section(f: &FamilyOverBase, res: &EtaResolution) -> Result<TauSection> {
    let fams: Vec<CuspSuspendedFamily> = f.sections.iter().map(|s| s.family.clone()).collect();
    let t = tau_of(&f.base, &fams, res)?;
    if t.min_abs == 0.0 || !t.min_abs.is_finite() {
        return Err(Error::Singular { at: "τ vanishes".into() });
    }
    Ok(t)
}

// ---------------------------------------------------------------------------
// gauges

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaugeCheck {
    pub label: String,
    pub point: usize,
    /// τ(σ·g)/τ(σ).
    pub ratio: C64,
    /// det Ĩ(g).
    pub det: C64,
    /// |ratio − det| / |det|.
    pub deviation: f64,
}

/// A gauge g applied at one base point.
#[derive(Clone)]
pub struct Gauge {
    pub label: String,
    pub point: usize,
    pub g: CuspSuspendedFamily,
}

/// Compares τ(σ_b·g)/τ(σ_b) with det Ĩ(g) for every gauge.
pub fn equivariance_check(f: &FamilyOverBase, tau: &TauSection, gauges: &[Gauge], res: &EtaResolution) -> Result<Vec<GaugeCheck>> {
    let grid = Arc::new(Grid2::new(res.plane_nodes, res.plane_nodes, 1.0));
    gauges
        .par_iter()
        .map(|g| {
            let s = f.sections.get(g.point).ok_or_else(|| Error::Shape(format!("no base point {}", g.point)))?;
            let moved = (I * PI * eta_cusp(&s.family.mul(&g.g), res)?.eta).exp();
            let ratio = moved / tau.tau[g.point];
            let det = lifted_det(&g.g.itilde(&grid)?)?.value;
            Ok(GaugeCheck { label: g.label.clone(), point: g.point, ratio, det, deviation: (ratio - det).norm() / det.norm() })
        })
        .collect()
}

/// Random css-group gauges, gauge k at base point (k·stride) mod K.
pub fn random_gauges(count: usize, size: usize, points: usize, stride: usize, seed: u64) -> Vec<Gauge> {
    (0..count)
        .map(|k| Gauge {
            label: format!("random {k}"),
            point: (k * stride) % points,
            g: random_cusp_family(size, seed.wrapping_add(1000 + k as u64), 0.4),
        })
        .collect()
}

fn embed_top_left(m: CMat, size: usize) -> CMat {
    pad(&m, size.max(m.nrows()))
}

/// Gauges with Ĩ(g) = Id: an interior Cayley loop (odd index 1, η = 2) and a
/// Schwartz interior of odd index 0.
pub fn kernel_gauges(size: usize, point: usize) -> Vec<Gauge> {
    let cay: InteriorFn = Arc::new(move |t| {
        let u = c(t, -1.0) / c(t, 1.0);
        let du = c(0.0, 2.0) / (c(t, 1.0) * c(t, 1.0));
        (embed_top_left(CMat::from_element(1, 1, u - 1.0), size), embed_top_left(CMat::from_element(1, 1, du), size))
    });
    let bump: InteriorFn = Arc::new(move |t| {
        let g = (-t * t).exp();
        let m = CMat::from_fn(2 * size, 2 * size, |i, j| c(0.1 / (1.0 + (i + j) as f64), 0.05 * (i as f64 - j as f64)));
        (&m * c(g, 0.0), &m * c(-2.0 * t * g, 0.0))
    });
    vec![
        Gauge { label: "kernel cayley".into(), point, g: CuspSuspendedFamily::interior_only(size, cay) },
        Gauge { label: "kernel schwartz".into(), point, g: CuspSuspendedFamily::interior_only(size, bump) },
    ]
}

/// a₀ = Id with εx part e^{−t²−τ²}E₀₀: det Ĩ(g) = e^{1/2}.
pub fn gaussian_eps_gauge(size: usize, point: usize) -> Gauge {
    let mut e00 = CMat::zeros(size, size);
    e00[(0, 0)] = c(1.0, 0.0);
    let a1 = SuspendedFamily::new(2, size, f64::NEG_INFINITY, move |p| &e00 * c((-p[0] * p[0] - p[1] * p[1]).exp(), 0.0));
    let sym = CssSymbols { size, a0: SuspendedFamily::constant(2, eye(size)), e: None, a1: Some(a1) };
    Gauge { label: "gaussian eps".into(), point, g: CuspSuspendedFamily::css(sym, None) }
}

// ---------------------------------------------------------------------------
// the gauge path and the cocycle comparison

/// G_s, s ∈ [0, 1]: a path in the css group from Id to an element with
/// Ĩ = Id and odd index 1.
///
/// G_s(t) = T(g) + E₀ ⊗ (v e₂ᵀ) with g = (z̄P + Q)(zP∞ + Q∞), z = (τ − i)/(τ + i),
/// P∞ = E₁₁, P the projection orthogonal to
/// w(t) = (sin(πs)e^{−t²}, cos²(πs/2) + sin²(πs/2)e^{iθ(t)}), θ = π(1 + erf t),
/// Q = 1 − P and v = w − e₂. It is invertible for all s since Q(e₂ + v) = w ≠ 0.
pub fn gauge_path(s: f64) -> CuspSuspendedFamily {
    let w = move |t: f64| -> ([C64; 2], [C64; 2]) {
        let (sn, c2, s2) = ((PI * s).sin(), (0.5 * PI * s).cos().powi(2), (0.5 * PI * s).sin().powi(2));
        let g = (-t * t).exp();
        let th = PI * (1.0 + libm::erf(t));
        let e = C64::from_polar(1.0, th);
        let dth = 2.0 * PI.sqrt() * g;
        ([c(sn * g, 0.0), e * s2 + c2], [c(-2.0 * t * sn * g, 0.0), I * e * (s2 * dth)])
    };
    let proj = move |t: f64| -> (CMat, CMat) {
        let (w, dw) = w(t);
        let wv = CMat::from_column_slice(2, 1, &w);
        let dwv = CMat::from_column_slice(2, 1, &dw);
        let n = (wv.adjoint() * &wv)[(0, 0)].re;
        let dn = 2.0 * (wv.adjoint() * &dwv)[(0, 0)].re;
        let ww = &wv * wv.adjoint();
        let p = eye(2) - &ww * c(1.0 / n, 0.0);
        let dp = -((&dwv * wv.adjoint() + &wv * dwv.adjoint()) * c(1.0 / n, 0.0)) + &ww * c(dn / (n * n), 0.0);
        (p, dp)
    };
    let pinf = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]));
    let qinf = eye(2) - &pinf;
    let z = |tau: f64| c(tau, -1.0) / c(tau, 1.0);
    let dz = |tau: f64| c(0.0, 2.0) / (c(tau, 1.0) * c(tau, 1.0));
    let (pi1, qi1) = (pinf.clone(), qinf.clone());
    let value = move |p: &[f64]| {
        let (pp, _) = proj(p[0]);
        let q = eye(2) - &pp;
        let zz = z(p[1]);
        &pp * &pi1 + &q * &qi1 + &pp * &qi1 * zz.conj() + &q * &pi1 * zz
    };
    let (pi2, qi2) = (pinf.clone(), qinf.clone());
    let dt: Sampler = Arc::new(move |p: &[f64]| {
        let (_, dp) = proj(p[0]);
        let zz = z(p[1]);
        &dp * (&pi2 - &qi2 + &qi2 * zz.conj() - &pi2 * zz)
    });
    let (pi3, qi3) = (pinf, qinf);
    let dtau: Sampler = Arc::new(move |p: &[f64]| {
        let (pp, _) = proj(p[0]);
        let q = eye(2) - &pp;
        let (zz, d) = (z(p[1]), dz(p[1]));
        // z̄ = 1/z on the real line
        &pp * &qi3 * (-d / (zz * zz)) + &q * &pi3 * d
    });
    let a0 = SuspendedFamily::new(2, 2, f64::NEG_INFINITY, value).with_derivatives(vec![dt, dtau]);
    let interior: InteriorFn = Arc::new(move |t| {
        let (w, dw) = w(t);
        let mut k = CMat::zeros(2, 2);
        let mut dk = CMat::zeros(2, 2);
        for i in 0..2 {
            k[(i, 1)] = w[i] - if i == 1 { 1.0 } else { 0.0 };
            dk[(i, 1)] = dw[i];
        }
        (k, dk)
    });
    CuspSuspendedFamily::css(CssSymbols { size: 2, a0, e: None, a1: None }, Some(interior))
}

/// log det Ĩ(G_s) at s = k/K by integrating α₂ along the gauge path itself
/// (midpoint rule at m and 2m steps per base interval, Richardson
/// combined). Affine paths from Id leave the group near s = 1/2, so the
/// pointwise determinant is not reliable there.
pub fn gauge_path_log_dets(points: usize, steps: usize, grid: &Arc<Grid2>) -> Result<(Vec<C64>, f64)> {
    let run = |m: usize| -> Result<Vec<C64>> {
        let n = points * m;
        let vals: Vec<Star2Element> = (0..=n)
            .into_par_iter()
            .map(|j| Ok(gauge_path(j as f64 / n as f64).itilde(grid)?.to_star2()))
            .collect::<Result<_>>()?;
        let terms: Vec<C64> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mid = vals[j].add(&vals[j + 1]).scaled(0.5);
                alpha2(&mid, &vals[j + 1].sub(&vals[j]))
            })
            .collect::<Result<_>>()?;
        let mut out = vec![C64::new(0.0, 0.0)];
        for k in 0..points {
            let seg = pairwise_sum(&terms[k * m..(k + 1) * m]).unwrap_or_default();
            out.push(out[k] + seg);
        }
        Ok(out)
    };
    let (coarse, fine) = (run(steps)?, run(2 * steps)?);
    let change = coarse.iter().zip(&fine).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    Ok((coarse.iter().zip(&fine).map(|(a, b)| (b * 4.0 - a) / 3.0).collect(), change))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrivializationReport {
    pub points: usize,
    pub tau_north: TauSection,
    pub tau_south: TauSection,
    /// det Ĩ(g_b) for the transition g_b = σ_N⁻¹σ_S.
    pub transition_det: Vec<C64>,
    /// Change of log det between the two path step sizes.
    pub det_path_change: f64,
    /// Winding of the determinant line cocycle.
    pub det_chern: IntegerReading,
    /// winding(τ_S) − winding(τ_N).
    pub tau_winding: IntegerReading,
    pub min_abs_tau: f64,
    pub max_step: f64,
}

impl TrivializationReport {
    /// τ is a global linear function on Det when its winding cancels the cocycle.
    pub fn cancels(&self) -> bool {
        self.tau_winding.rounded == self.det_chern.rounded
    }
}

/// Two patches over the base circle for the Dirac family m(b) = e^{ib}:
/// σ_N(b) = A_b and σ_S(b) = A_b∘G_{b/2π}, whose transition G has a winding
/// determinant; τ is evaluated independently on both.
pub fn trivialization_experiment(points: usize, res: &EtaResolution) -> Result<TrivializationReport> {
    let spec = FamilySpec::dirac_circle(points);
    let budget = SearchBudget::default();
    let north = build_sections(&spec, &budget, res)?;
    let gauges: Vec<CuspSuspendedFamily> = north.base.iter().map(|&b| gauge_path(b / (2.0 * PI))).collect();
    let south: Vec<CuspSuspendedFamily> = north.sections.iter().zip(&gauges).map(|(s, g)| s.family.mul(g)).collect();
    let tau_north = tau_section(&north, res)?;
    let tau_south = tau_of(&north.base, &south, res)?;
    let grid = Arc::new(Grid2::new(res.plane_nodes, res.plane_nodes, 1.0));
    let (logs, det_path_change) = gauge_path_log_dets(points, (256 / points).max(8), &grid)?;
    let transition_det: Vec<C64> = logs[..points].iter().map(|l| l.exp()).collect();
    // G_1 lies in the kernel of Ĩ, so the total is 2πi times the winding
    let det_chern = integer_reading(logs[points] / (2.0 * PI * I))?;
    let tau_winding = integer_reading(c(tau_south.winding - tau_north.winding, 0.0))?;
    Ok(TrivializationReport {
        points,
        min_abs_tau: tau_north.min_abs.min(tau_south.min_abs),
        max_step: tau_north.max_step.max(tau_south.max_step),
        tau_north,
        tau_south,
        transition_det,
        det_path_change,
        det_chern,
        tau_winding,
    })
}

// ---------------------------------------------------------------------------
// periodicity

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodicityReport {
    /// Winding of det m / det(m + λ) around the equator.
    pub finite: IntegerReading,
    /// Winding of sus_det(Ê(m + λρ)⁻¹ ⋆ Ê(m)) around the equator.
    pub suspended: IntegerReading,
    pub lambda: f64,
}

impl PeriodicityReport {
    pub fn agree(&self) -> bool {
        self.finite.rounded == self.suspended.rounded
    }
}

/// Ê(M)(t, τ) = [[(it − τ)Id, M*], [M, (it + τ)Id]] for M = m + λρ(t, τ)Id,
/// ρ = e^{−t²−τ²}.
fn indicial_of(m: &CMat, lambda: f64) -> SuspendedFamily {
    let k = m.nrows();
    let build = move |m: &CMat, p: &[f64]| {
        let rho = (-p[0] * p[0] - p[1] * p[1]).exp();
        let mm = m + eye(k) * c(lambda * rho, 0.0);
        let mut e = CMat::zeros(2 * k, 2 * k);
        e.view_mut((0, k), (k, k)).copy_from(&mm.adjoint());
        e.view_mut((k, 0), (k, k)).copy_from(&mm);
        for i in 0..k {
            e[(i, i)] = c(-p[1], p[0]);
            e[(k + i, k + i)] = c(p[1], p[0]);
        }
        e
    };
    let deriv = move |ax: usize| -> Sampler {
        Arc::new(move |p: &[f64]| {
            let rho = (-p[0] * p[0] - p[1] * p[1]).exp();
            let dm = -2.0 * p[ax] * lambda * rho;
            let mut e = CMat::zeros(2 * k, 2 * k);
            for i in 0..k {
                e[(i, k + i)] = c(dm, 0.0);
                e[(k + i, i)] = c(dm, 0.0);
                let (a, b) = if ax == 0 { (I, I) } else { (c(-1.0, 0.0), c(1.0, 0.0)) };
                e[(i, i)] = a;
                e[(k + i, k + i)] = b;
            }
            e
        })
    };
    let m = m.clone();
    SuspendedFamily::new(2, 2 * k, 1.0, move |p| build(&m, p)).with_derivatives(vec![deriv(0), deriv(1)])
}

/// Chern data of Det(m) and of the determinant line of the suspended
/// indicial family, for m given on the equator ζ = e^{ib} of the sphere.
/// The north patch uses m + λ (λ = 1 + max‖m‖, invertible on the disc), the
/// south patch m itself.
pub fn periodicity_compare(m: &(dyn Fn(C64) -> CMat + Sync), points: usize, res: &EtaResolution) -> Result<PeriodicityReport> {
    // half-step offset: at ζ = −1 the transition for m = ζ equals −Id at the
    // origin and every affine path from Id to it is singular
    let zs: Vec<C64> = (0..points).map(|k| C64::from_polar(1.0, 2.0 * PI * (k as f64 + 0.5) / points as f64)).collect();
    let ms: Vec<CMat> = zs.iter().map(|&z| m(z)).collect();
    if ms.iter().any(|x| x.nrows() != x.ncols()) {
        return Err(Error::Invalid("non-square boundary operator: index obstruction".into()));
    }
    let lambda = 1.0 + ms.iter().map(|x| singular_values(x)[0]).fold(0.0, f64::max);
    let all: Vec<usize> = (0..points).collect();
    let finite = det_cocycle(
        points,
        &[
            PatchSections { name: "north".into(), points: all.clone(), sections: ms.iter().map(|x| x + eye(x.nrows()) * c(lambda, 0.0)).collect() },
            PatchSections { name: "south".into(), points: all.clone(), sections: ms.clone() },
        ],
    )?
    .chern_number(0, 1)?;
    let grid = shared_grid(res.plane_nodes);
    let star = |lam: f64| -> Result<Vec<Star2Element>> {
        ms.par_iter().map(|x| Star2Element::from_families(&grid, &indicial_of(x, lam), None)).collect()
    };
    let suspended = det_cocycle(
        points,
        &[
            PatchSections { name: "north".into(), points: all.clone(), sections: star(lambda)? },
            PatchSections { name: "south".into(), points: all, sections: star(0.0)? },
        ],
    )?
    .chern_number(0, 1)?;
    Ok(PeriodicityReport { finite, suspended, lambda })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn res() -> EtaResolution {
        EtaResolution::default()
    }

    #[test]
    fn gauge_path_endpoints_and_invertibility() {
        let r = res();
        let ts = SearchBudget::default().t_samples;
        let id = gauge_path(0.0);
        assert!(invertibility_margin(&id, &ts, &r) > 0.99);
        for s in [0.1, 0.3, 0.5, 0.7, 0.9, 1.0] {
            let m = invertibility_margin(&gauge_path(s), &ts, &r);
            assert!(m > 1e-2, "s = {s}: margin {m}");
        }
        // the end point has trivial indicial part
        let grid = Arc::new(Grid2::new(32, 32, 1.0));
        assert!(gauge_path(1.0).itilde(&grid).unwrap().is_identity(1e-12));
    }

    #[test]
    fn gauge_path_derivatives_match_differences() {
        let g = gauge_path(0.37);
        let CuspSuspendedFamily::Leaf(op) = &g else { panic!() };
        let a0 = &op.symbols.a0;
        for p in [[0.3, -0.8], [-1.2, 2.0]] {
            for ax in 0..2 {
                let h = 1e-5;
                let mut q = p;
                q[ax] += h;
                let mut r = p;
                r[ax] -= h;
                let fd = (a0.eval(&q) - a0.eval(&r)) * c(0.5 / h, 0.0);
                assert!(fro(&(fd - a0.deriv(ax, &p))) < 1e-8);
            }
        }
    }

    #[test]
    fn sections_and_search() {
        let r = res();
        let budget = SearchBudget::default();
        let d = build_sections(&FamilySpec::dirac_circle(8), &budget, &r).unwrap();
        assert!(d.sections.iter().all(|s| s.perturbation.is_none()));
        assert!(d.global.as_ref().is_some_and(|p| p.rank() == 0));
        let s = build_sections(&FamilySpec::singular_at_origin(8), &budget, &r).unwrap();
        assert_eq!(s.sections[0].perturbation.as_ref().map(|p| p.rank()), Some(1));
        assert!(s.sections[1..].iter().all(|x| x.perturbation.is_none()));
        let c0 = build_sections(&FamilySpec::constant(4, CuspSuspendedFamily::identity(1)), &budget, &r).unwrap();
        let t = tau_section(&c0, &r).unwrap();
        assert!(t.tau.iter().all(|z| (z - 1.0).norm() < 1e-14));
    }

    #[test]
    fn periodicity_constant_and_winding() {
        let r = EtaResolution { plane_nodes: 48, ..res() };
        let one = |_: C64| CMat::from_element(1, 1, c(1.0, 0.0));
        let p = periodicity_compare(&one, 16, &r).unwrap();
        assert_eq!((p.finite.rounded, p.suspended.rounded), (0, 0));
        let wind = |z: C64| CMat::from_element(1, 1, z);
        let p = periodicity_compare(&wind, 16, &r).unwrap();
        assert_eq!(p.finite.rounded, 1);
        assert!(p.agree(), "{p:?}");
    }

    #[test]
    fn default_resolution_matches_high_on_model_family() {
        let a = (FamilySpec::dirac_circle(8).member)(2.0).mul(&gauge_path(0.45));
        let hi = eta_cusp(&a, &EtaResolution::high()).unwrap().eta;
        let lo = eta_cusp(&a, &res()).unwrap().eta;
        assert!((hi - lo).norm() < 1e-8, "{hi} vs {lo}");
    }

    #[test]
    fn transition_dets_follow_gauge_eta() {
        let grid = Arc::new(Grid2::new(64, 64, 1.0));
        let (logs, change) = gauge_path_log_dets(4, 64, &grid).unwrap();
        assert!(change < 1e-3, "{change}");
        assert_eq!(logs[0], C64::new(0.0, 0.0));
        assert!((logs[4] - 2.0 * PI * I).norm() < 1e-5, "{}", logs[4]);
        // log det Ĩ(G_s) = iπη(G_s) along the path
        let r = res();
        let eta = eta_cusp(&gauge_path(0.5), &r).unwrap().eta;
        assert!((logs[2] - I * PI * eta).norm() < 1e-5, "{} vs {}", logs[2], eta);
    }

    #[test]
    fn experiment_winding_cancels() {
        let r = res();
        let rep = trivialization_experiment(8, &r).unwrap();
        assert!(rep.min_abs_tau > 0.5);
        assert_eq!(rep.det_chern.rounded, 1);
        assert!(rep.det_chern.distance < 1e-5);
        assert!(rep.cancels(), "{:?} {:?}", rep.det_chern, rep.tau_winding);
        for (t, d) in rep.tau_south.tau.iter().zip(&rep.transition_det) {
            assert!((t - d).norm() < 1e-5);
        }

        let north = build_sections(&FamilySpec::dirac_circle(8), &SearchBudget::default(), &r).unwrap();
        let mut gauges = random_gauges(3, 2, 8, 3, 11);
        gauges.extend(kernel_gauges(2, 1));
        gauges.push(gaussian_eps_gauge(2, 2));
        let checks = equivariance_check(&north, &rep.tau_north, &gauges, &r).unwrap();
        for ch in &checks {
            assert!(ch.deviation < 1e-5, "{ch:?}");
        }
        let kernel: Vec<_> = checks.iter().filter(|c| c.label.starts_with("kernel")).collect();
        assert_eq!(kernel.len(), 2);
        assert!(kernel.iter().all(|c| (c.ratio - 1.0).norm() < 1e-5));
        let gauss = checks.iter().find(|c| c.label == "gaussian eps").unwrap();
        assert!((gauss.det - 0.5f64.exp()).norm() < 1e-6);
    }
}
