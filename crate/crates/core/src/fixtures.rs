//! Seeded random inputs shared by unit tests, integration tests and the
//! verify suites: Schwartz Gaussian-packet perturbations of the identity.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cuspmodel::CssSymbols;
use crate::eta::{CuspSuspendedFamily, InteriorFn};
use crate::groups::{Sampler, SuspendedFamily};
use crate::linalg::{c, eye, fro, CMat, C64};
use crate::star::{Grid2, Star2Element};

#[derive(Debug, Clone)]
struct Packet {
    centre: [f64; 2],
    width: f64,
    coeff: CMat,
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    let m = CMat::from_fn(n, n, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let f = fro(&m).max(1e-12);
    m / c(f, 0.0)
}

fn packets(size: usize, seed: u64, amp: f64) -> Vec<Packet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = 3;
    (0..count)
        .map(|_| Packet {
            centre: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            width: rng.gen_range(0.7..1.3),
            coeff: random_matrix(&mut rng, size) * c(amp / count as f64, 0.0),
        })
        .collect()
}

/// Sum of packets and its analytic partial derivatives.
fn packet_sum(ps: &[Packet], size: usize, p: &[f64]) -> [CMat; 3] {
    let mut out = [CMat::zeros(size, size), CMat::zeros(size, size), CMat::zeros(size, size)];
    for q in ps {
        let dx = p[0] - q.centre[0];
        let dy = p[1] - q.centre[1];
        let w2 = q.width * q.width;
        let g = (-(dx * dx + dy * dy) / w2).exp();
        out[0] += &q.coeff * c(g, 0.0);
        out[1] += &q.coeff * c(-2.0 * dx / w2 * g, 0.0);
        out[2] += &q.coeff * c(-2.0 * dy / w2 * g, 0.0);
    }
    out
}

fn packet_family(size: usize, seed: u64, amp: f64, base: CMat) -> SuspendedFamily {
    let ps = Arc::new(packets(size, seed, amp));
    let (p0, p1, p2) = (ps.clone(), ps.clone(), ps);
    let b = base.clone();
    let d: Vec<Sampler> = vec![
        Arc::new(move |p: &[f64]| packet_sum(&p1, size, p)[1].clone()),
        Arc::new(move |p: &[f64]| packet_sum(&p2, size, p)[2].clone()),
    ];
    SuspendedFamily::new(2, size, f64::NEG_INFINITY, move |p| &b + &packet_sum(&p0, size, p)[0])
        .with_derivatives(d)
        .with_limit(base)
}

/// Id plus Gaussian packets of total Frobenius weight at most `amp`; for
/// `amp < 1` the family is invertible everywhere.
pub fn gaussian_packet_family(size: usize, seed: u64, amp: f64) -> SuspendedFamily {
    packet_family(size, seed, amp, eye(size))
}

/// Gaussian packets alone (a Schwartz family vanishing at infinity).
pub fn schwartz_packets(size: usize, seed: u64, amp: f64) -> SuspendedFamily {
    packet_family(size, seed, amp, CMat::zeros(size, size))
}

pub fn random_star2(grid: &Arc<Grid2>, size: usize, seed: u64, amp: f64) -> Star2Element {
    let a0 = gaussian_packet_family(size, seed, amp);
    let a1 = schwartz_packets(size, seed.wrapping_mul(7919).wrapping_add(1), amp);
    Star2Element::from_families(grid, &a0, Some(&a1)).expect("packet families share shape")
}

pub fn random_css(size: usize, seed: u64, amp: f64) -> CssSymbols {
    let k = seed.wrapping_mul(104_729);
    CssSymbols {
        size,
        a0: gaussian_packet_family(size, seed, amp),
        e: Some(schwartz_packets(size, k.wrapping_add(1), amp)),
        a1: Some(schwartz_packets(size, k.wrapping_add(2), amp)),
    }
}

/// Element of the css group with Schwartz symbols and a Schwartz interior in
/// the two leading Fourier modes.
pub fn random_cusp_family(size: usize, seed: u64, amp: f64) -> CuspSuspendedFamily {
    let k = schwartz_packets(size, seed.wrapping_add(77), 0.5 * amp);
    let interior: InteriorFn = Arc::new(move |t| {
        let embed = |m: CMat| {
            let mut out = CMat::zeros(2 * size, 2 * size);
            out.view_mut((0, 0), (size, size)).copy_from(&m);
            out.view_mut((size, size), (size, size)).copy_from(&(&m * c(0.5, 0.0)));
            out
        };
        (embed(k.eval(&[t, 0.3])), embed(k.deriv(0, &[t, 0.3])))
    });
    CuspSuspendedFamily::css(random_css(size, seed, amp), Some(interior))
}

/// Random Hermitian matrix with entries of order one.
pub fn random_hermitian(size: usize, seed: u64) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = CMat::from_fn(size, size, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    (&m + m.adjoint()) * c(0.5, 0.0)
}

/// Random matrix with Frobenius norm `norm`.
pub fn random_perturbation(size: usize, seed: u64, norm: f64) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_matrix(&mut rng, size) * c(norm, 0.0)
}

pub fn random_unit_vector(size: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
    let v: Vec<C64> = (0..size).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|z| z / n).collect()
}
