//! Closed-form expectation values of the circuit state.
//!
//! Finite-size quantities sum over the even-sector momenta `NS₊` and, for the
//! `|0…0⟩` start, the odd-sector momenta `R₊`; the odd sector has two unpaired
//! modes, `k = 0` (always occupied) and `k = -π` (always empty). Thermodynamic
//! quantities integrate over `[0, π]` with Gauss–Legendre rules.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coherent::{
    g_transform, project, AmplitudeSource, AngleSchedule, CircuitAmplitude, GateSequence,
    InitialState, PairMap, PreparedSequence, ProjectiveAmplitude,
};
use crate::model::{
    bogoliubov_half_angle, dispersion, ns_positive, r_positive, smooth_dispersion, Field,
};
use crate::quadrature::GaussLegendre;

/// Default node count for the thermodynamic-limit integrals.
pub const DEFAULT_NODES: usize = 512;

/// A quadrature value with its doubling check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub nodes: usize,
    /// `|value(n) - value(2n)| < tol`.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableReport {
    pub field: f64,
    /// Energy density at the given size (equal to the infinite chain once `L ≥ 4p`).
    pub energy: f64,
    pub sites: usize,
    pub overlap: Complex64,
    pub m_x: f64,
    pub m_xx: BTreeMap<usize, f64>,
    pub m_z: Option<f64>,
    pub nodes: usize,
    pub m_x_converged: bool,
    pub m_xx_converged: bool,
    pub m_z_converged: bool,
    pub m_z_singular: bool,
}

fn pair_energy(h: Field, k: f64, w: f64) -> f64 {
    smooth_dispersion(h.value(), k) * (w - 0.5)
}

/// Constant offset from the unpaired odd-sector modes `k = 0` (occupied) and
/// `k = -π` (empty), per site.
fn unpaired_energy(h: Field, l: usize) -> f64 {
    (dispersion(h, 0.0) - dispersion(h, PI)) / (4.0 * l as f64)
}

fn momenta(l: usize, init: InitialState) -> (Vec<f64>, Vec<f64>) {
    let ns = ns_positive(l);
    let r = if init.has_odd_sector() {
        r_positive(l)
    } else {
        Vec::new()
    };
    (ns, r)
}

/// Energy density `⟨H(h)⟩/L` of the circuit state on `L` sites.
pub fn energy_density(seq: &GateSequence, h: Field, l: usize, init: InitialState) -> f64 {
    let prep = PreparedSequence::new(seq);
    let (ns, r) = momenta(l, init);
    let scale = if init.has_odd_sector() { 1.0 } else { 2.0 };
    let sum: f64 = ns
        .iter()
        .chain(&r)
        .map(|&k| pair_energy(h, k, project(prep.evolve(init, k), h, k).weight()))
        .sum();
    let offset = if init.has_odd_sector() {
        unpaired_energy(h, l)
    } else {
        0.0
    };
    scale * sum / l as f64 + offset
}

/// Pair occupation in the frame of `h` and its derivative with respect to
/// every layer angle, by reverse accumulation through the layer maps.
fn weight_and_grad(
    prep: &PreparedSequence,
    init: InitialState,
    h: Field,
    k: f64,
) -> (f64, Vec<f64>) {
    let maps = prep.maps(k);
    let mut states = Vec::with_capacity(maps.len() + 1);
    let mut a = init.amplitude(k);
    states.push(a);
    for (m, _) in &maps {
        a = m.apply(a);
        states.push(a);
    }
    let frame = PairMap::basis_change(bogoliubov_half_angle(h.value(), 0.0, k));
    let b = frame.apply(a);
    let norm = b.norm_sqr();
    let w = b.num.norm_sqr() / norm;
    // λ = R† |1⟩⟨1| R ψ
    let mut lambda = frame
        .adjoint()
        .apply(ProjectiveAmplitude::new(b.num, Complex64::new(0.0, 0.0)));
    let mut grad = vec![0.0; maps.len()];
    for j in (0..maps.len()).rev() {
        let (m, n) = &maps[j];
        let psi = states[j + 1];
        let npsi = PairMap(*n).apply(psi);
        let inner = lambda.den.conj() * npsi.den + lambda.num.conj() * npsi.num;
        grad[j] = 4.0 * inner.re / norm;
        lambda = m.adjoint().apply(lambda);
    }
    (w, grad)
}

/// Energy density and its gradient with respect to the flattened layer angles.
pub fn energy_and_gradient(
    seq: &GateSequence,
    h: Field,
    l: usize,
    init: InitialState,
) -> (f64, Vec<f64>) {
    let prep = PreparedSequence::new(seq);
    let (ns, r) = momenta(l, init);
    let ks: Vec<f64> = ns.into_iter().chain(r).collect();
    let scale = if init.has_odd_sector() { 1.0 } else { 2.0 } / l as f64;
    let n = prep.len();
    let (e, g) = ks
        .par_iter()
        .map(|&k| {
            let (w, dw) = weight_and_grad(&prep, init, h, k);
            let eps = smooth_dispersion(h.value(), k);
            (
                eps * (w - 0.5),
                dw.into_iter().map(|d| eps * d).collect::<Vec<f64>>(),
            )
        })
        .reduce(
            || (0.0, vec![0.0; n]),
            |(ea, mut ga), (eb, gb)| {
                ga.iter_mut().zip(&gb).for_each(|(x, y)| *x += y);
                (ea + eb, ga)
            },
        );
    let offset = if init.has_odd_sector() {
        unpaired_energy(h, l)
    } else {
        0.0
    };
    (
        scale * e + offset,
        g.into_iter().map(|x| scale * x).collect(),
    )
}

pub fn energy_gradient(seq: &GateSequence, h: Field, l: usize, init: InitialState) -> Vec<f64> {
    energy_and_gradient(seq, h, l, init).1
}

/// Thermodynamic-limit energy density `(1/π) ∫_0^π ε_h(k) (w(k) - ½) dk`,
/// valid for the `|0…0⟩` start (the plus start gives the same integral).
pub fn energy_density_inf(seq: &GateSequence, h: Field, init: InitialState, nodes: usize) -> f64 {
    let prep = PreparedSequence::new(seq);
    let rule = GaussLegendre::on_interval(nodes, 0.0, PI);
    rule.integrate(|k| pair_energy(h, k, project(prep.evolve(init, k), h, k).weight())) / PI
}

fn vacuum_product(prep: &PreparedSequence, init: InitialState, h: Field, ks: &[f64]) -> Complex64 {
    ks.iter()
        .map(|&k| project(prep.evolve(init, k), h, k).den)
        .product()
}

/// Overlap of the circuit state with the ground state at `h`.
///
/// Without symmetry breaking the reference is the even-sector ground state.
/// With it, the reference is `(|even⟩ + |odd⟩)/√2`, the odd vacuum carrying
/// the relative phase `e^{2iΣ(ZZ, YY angles)}` of the odd sector.
pub fn overlap(
    seq: &GateSequence,
    h: Field,
    l: usize,
    init: InitialState,
    symmetry_broken: bool,
) -> Complex64 {
    let prep = PreparedSequence::new(seq);
    let a_ns = vacuum_product(&prep, init, h, &ns_positive(l));
    let even = match init {
        InitialState::AllZero => a_ns * FRAC_1_SQRT_2,
        InitialState::AllPlus => a_ns,
    };
    if !symmetry_broken {
        return even;
    }
    match init {
        InitialState::AllPlus => even * FRAC_1_SQRT_2,
        InitialState::AllZero => {
            let a_r = vacuum_product(&prep, init, h, &r_positive(l))
                * Complex64::from_polar(1.0, 2.0 * seq.bond_angle_sum());
            0.5 * (a_ns + a_r)
        }
    }
}

/// `m_X` on `L` sites, exact finite-size sum.
pub fn magnetization_x_finite(seq: &GateSequence, l: usize, init: InitialState) -> f64 {
    let (ns, r) = momenta(l, init);
    let prep = PreparedSequence::new(seq);
    let occ = |k: f64| g_transform(prep.evolve(init, k), k).weight();
    let lf = l as f64;
    match init {
        InitialState::AllPlus => 1.0 - 4.0 / lf * ns.iter().map(|&k| occ(k)).sum::<f64>(),
        InitialState::AllZero => {
            let s: f64 = ns.iter().chain(&r).map(|&k| occ(k)).sum();
            1.0 - (2.0 * s + 1.0) / lf
        }
    }
}

/// Per-sector density and pairing sums in the `h = ∞` frame:
/// `G(ℓ) = (1/L) Σ_k n_k e^{ikℓ}`, `F(ℓ) = (1/L) Σ_k a_k e^{ikℓ}`.
fn sector_correlators(
    prep: &PreparedSequence,
    init: InitialState,
    ks: &[f64],
    zero_mode: bool,
    l: usize,
    ell: usize,
) -> (f64, f64, Complex64) {
    let lf = l as f64;
    let ellf = ell as f64;
    let mut g0 = 0.0;
    let mut gl = 0.0;
    let mut fl = Complex64::new(0.0, 0.0);
    for &k in ks {
        let b = g_transform(prep.evolve(init, k), k);
        let norm = b.norm_sqr();
        let n = b.num.norm_sqr() / norm;
        let a = b.num * b.den.conj() / norm;
        g0 += 2.0 * n;
        gl += 2.0 * n * (k * ellf).cos();
        fl += 2.0 * Complex64::new(0.0, 1.0) * a * (k * ellf).sin();
    }
    if zero_mode {
        g0 += 1.0;
        gl += 1.0;
    }
    (g0 / lf, gl / lf, fl / lf)
}

/// Connected `⟨X_j X_{j+ℓ}⟩ - ⟨X⟩²` on `L` sites, exact finite-size sum.
pub fn correlation_xx_finite(seq: &GateSequence, ell: usize, l: usize, init: InitialState) -> f64 {
    let prep = PreparedSequence::new(seq);
    let (ns, r) = momenta(l, init);
    let sector = |ks: &[f64], zero: bool| {
        let (g0, gl, fl) = sector_correlators(&prep, init, ks, zero, l, ell);
        let mx = 1.0 - 2.0 * g0;
        (mx, mx * mx - 4.0 * gl * gl + 4.0 * fl.norm_sqr())
    };
    let (mx_e, xx_e) = sector(&ns, false);
    if !init.has_odd_sector() {
        return xx_e - mx_e * mx_e;
    }
    let (mx_o, xx_o) = sector(&r, true);
    let mx = 0.5 * (mx_e + mx_o);
    0.5 * (xx_e + xx_o) - mx * mx
}

fn with_doubling<F: Fn(&GaussLegendre) -> f64>(nodes: usize, tol: f64, f: F) -> Estimate {
    let a = f(&GaussLegendre::on_interval(nodes, 0.0, PI));
    let b = f(&GaussLegendre::on_interval(2 * nodes, 0.0, PI));
    Estimate {
        value: b,
        nodes: 2 * nodes,
        converged: (a - b).abs() < tol,
    }
}

/// `m_X = 1 - (2/π) ∫_0^π |g|²/(1+|g|²) dk` in the thermodynamic limit.
pub fn magnetization_x<S: AmplitudeSource + ?Sized>(src: &S, nodes: usize) -> Estimate {
    with_doubling(nodes, 1e-10, |rule| {
        let occ: Vec<f64> = rule
            .nodes
            .par_iter()
            .map(|&k| g_transform(src.amplitude(k), k).weight())
            .collect();
        1.0 - 2.0 / PI
            * occ
                .iter()
                .zip(&rule.weights)
                .map(|(o, w)| o * w)
                .sum::<f64>()
    })
}

/// Connected `m_XX(ℓ) = |I₁|² - |I₂|²` in the thermodynamic limit.
pub fn correlation_xx<S: AmplitudeSource + ?Sized>(src: &S, ell: usize, nodes: usize) -> Estimate {
    let nodes = nodes.max(16 * ell);
    with_doubling(nodes, 1e-10, |rule| correlation_xx_on(src, &[ell], rule)[0])
}

/// `m_XX` for several distances on one rule, sharing the amplitude evaluations.
fn correlation_xx_on<S: AmplitudeSource + ?Sized>(
    src: &S,
    ells: &[usize],
    rule: &GaussLegendre,
) -> Vec<f64> {
    let vals: Vec<(f64, Complex64)> = rule
        .nodes
        .par_iter()
        .map(|&k| {
            let b = g_transform(src.amplitude(k), k);
            let norm = b.norm_sqr();
            (b.num.norm_sqr() / norm, b.num * b.den.conj() / norm)
        })
        .collect();
    ells.iter()
        .map(|&ell| {
            let ellf = ell as f64;
            let mut i1 = Complex64::new(0.0, 0.0);
            let mut i2 = 0.0;
            for ((&k, &w), &(n, a)) in rule.nodes.iter().zip(&rule.weights).zip(&vals) {
                i1 += w * a * (k * ellf).sin();
                i2 += w * n * (k * ellf).cos();
            }
            let i1 = Complex64::new(0.0, -2.0 / PI) * i1;
            let i2 = 2.0 / PI * i2;
            i1.norm_sqr() - i2 * i2
        })
        .collect()
}

/// `m_XX(ℓ)` for every `ℓ` in `ells`, with a single doubling check.
pub fn correlation_xx_many<S: AmplitudeSource + ?Sized>(
    src: &S,
    ells: &[usize],
    nodes: usize,
) -> (BTreeMap<usize, f64>, bool) {
    let max_ell = ells.iter().copied().max().unwrap_or(1);
    let nodes = nodes.max(16 * max_ell);
    let a = correlation_xx_on(src, ells, &GaussLegendre::on_interval(nodes, 0.0, PI));
    let b = correlation_xx_on(src, ells, &GaussLegendre::on_interval(2 * nodes, 0.0, PI));
    let converged = a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-10);
    (ells.iter().copied().zip(b).collect(), converged)
}

/// Central difference of the optimized `m_X` in the field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Susceptibility {
    pub value: f64,
    pub m_x_minus: f64,
    pub m_x_plus: f64,
    pub delta_h: f64,
    /// Both side optimizations converged.
    pub converged: bool,
}

/// `χ_X(h;p) = ∂_h m_X` from re-optimizations at `h ± δh`, each warm-started
/// from `center` (the optimum at `h`) so both sides stay on its branch.
pub fn susceptibility_x(
    h: Field,
    init: InitialState,
    center: &AngleSchedule,
    delta_h: f64,
) -> crate::error::Result<Susceptibility> {
    if !(delta_h > 0.0) || h.value() - delta_h < 0.0 {
        return Err(crate::error::Error::InvalidArgument(format!(
            "field step {delta_h} must be positive and keep h - δh >= 0"
        )));
    }
    let p = center.depth();
    let side = |hv: f64| -> crate::error::Result<(f64, bool)> {
        let r = crate::optimizer::minimize_warm(Field::new(hv)?, p, init, center)?;
        let seq = r.schedule.to_sequence();
        let mx = magnetization_x(&CircuitAmplitude::new(&seq, init), DEFAULT_NODES).value;
        Ok((mx, r.converged))
    };
    let (lo, lo_ok) = side(h.value() - delta_h)?;
    let (hi, hi_ok) = side(h.value() + delta_h)?;
    Ok(Susceptibility {
        value: (hi - lo) / (2.0 * delta_h),
        m_x_minus: lo,
        m_x_plus: hi,
        delta_h,
        converged: lo_ok && hi_ok,
    })
}

/// Energy, overlap, `m_X`, `m_XX(ℓ)` and optionally `m_Z` of a circuit.
pub fn report(
    seq: &GateSequence,
    h: Field,
    l: usize,
    init: InitialState,
    ells: &[usize],
    nodes: usize,
    with_mz: bool,
) -> ObservableReport {
    let src = CircuitAmplitude::new(seq, init);
    let mx = magnetization_x(&src, nodes);
    let (m_xx, m_xx_converged) = correlation_xx_many(&src, ells, nodes);
    let mz = with_mz.then(|| crate::fredholm::magnetization_z(&src));
    ObservableReport {
        field: h.value(),
        energy: energy_density(seq, h, l, init),
        sites: l,
        overlap: overlap(seq, h, l, init, false),
        m_x: mx.value,
        m_xx,
        m_z: mz.as_ref().map(|m| m.value),
        nodes,
        m_x_converged: mx.converged,
        m_xx_converged,
        m_z_converged: mz.as_ref().is_none_or(|m| m.converged),
        m_z_singular: mz.as_ref().is_some_and(|m| m.singular),
    }
}
