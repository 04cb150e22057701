//! Order parameter `m_Z` as a Fredholm determinant `det(Id - J)` on `[0, π]`.
//!
//! The kernel is
//! `J(λ,μ) = (2/π) (ρ/f)(λ) sin λ [P(λ) - P(μ)] / (cos λ - cos μ)` with
//! `P(x) = ⨍_0^π f(k) sin k / (cos x - cos k) dk` and `ρ/f = conj f / (2π(1+|f|²))`.
//! The determinant alone fixes `|m_Z|`; its sign comes from the relative phase
//! of the even and odd sector vacua, see [`crate::coherent::sector_phase`].

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coherent::{sector_phase, AmplitudeSource};
use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// Largest `|f|` on the grid before the result is flagged as singular.
pub const SINGULAR_THRESHOLD: f64 = 1e6;
pub const DEFAULT_GRID: usize = 200;
pub const MAX_GRID: usize = 1600;
pub const GRID_TOLERANCE: f64 = 1e-8;

/// Gauss–Legendre nodes and weights on `[0, π]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureGrid {
    pub fn gauss_legendre(n: usize) -> Self {
        let r = GaussLegendre::on_interval(n, 0.0, PI);
        Self {
            nodes: r.nodes,
            weights: r.weights,
        }
    }

    /// Composite rule: `per_panel(a, b)` Gauss–Legendre nodes on each
    /// interval between consecutive sorted `breaks`.
    pub fn composite(breaks: &[f64], per_panel: impl Fn(f64, f64) -> usize) -> Self {
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for w in breaks.windows(2) {
            let r = GaussLegendre::on_interval(per_panel(w[0], w[1]), w[0], w[1]);
            nodes.extend(r.nodes);
            weights.extend(r.weights);
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagnetizationZ {
    pub value: f64,
    pub determinant: Complex64,
    /// Even/odd sector phase `Φ`; `value = Re(e^{iΦ} det)`.
    pub phase: f64,
    pub nodes: usize,
    pub converged: bool,
    /// `|f|` exceeded [`SINGULAR_THRESHOLD`] somewhere on the grid.
    pub singular: bool,
}

/// `f` sampled on a grid, for repeated principal-value evaluations.
struct PvTable<'a> {
    grid: &'a QuadratureGrid,
    f: Vec<Complex64>,
}

impl PvTable<'_> {
    /// `⨍ f(k) sin k / (cos x - cos k) dk` by subtracting `f(x)` in the `k`
    /// variable; the remainder is smooth and `∫ sin k/(cos x - cos k) dk` is
    /// `ln((1 + cos x)/(1 - cos x))`.
    fn pv(&self, x: f64, fx: Complex64, dfx: impl Fn() -> Complex64) -> Complex64 {
        let cx = x.cos();
        let mut acc = Complex64::new(0.0, 0.0);
        for ((&k, &w), &fk) in self.grid.nodes.iter().zip(&self.grid.weights).zip(&self.f) {
            if (k - x).abs() < 1e-10 {
                acc += w * dfx();
            } else {
                acc += w * (fk - fx) * k.sin() / (cx - k.cos());
            }
        }
        acc + fx * ((1.0 + cx) / (1.0 - cx)).ln()
    }
}

fn check_interior(x: f64) -> Result<()> {
    if x < 1e-12 || x > PI - 1e-12 {
        Err(Error::PoleAtEndpoint(x))
    } else {
        Ok(())
    }
}

/// `scale` bounds the step where `f` varies on a short length scale.
fn central_derivative<F: Fn(f64) -> Complex64>(f: &F, x: f64, scale: f64) -> Complex64 {
    let h = 1e-5 * x.min(PI - x).min(1.0).min(scale);
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// `⨍_0^π f(k) sin k / (cos λ - cos k) dk` for a smooth `f`.
pub fn pv_integral<F>(f: F, lambda: f64, grid: &QuadratureGrid) -> Result<Complex64>
where
    F: Fn(f64) -> Complex64,
{
    check_interior(lambda)?;
    let table = PvTable {
        grid,
        f: grid.nodes.iter().map(|&k| f(k)).collect(),
    };
    Ok(table.pv(lambda, f(lambda), || central_derivative(&f, lambda, 1.0)))
}

fn f_of<S: AmplitudeSource + ?Sized>(src: &S, k: f64) -> Complex64 {
    src.amplitude(k).value()
}

fn rho_over_f<S: AmplitudeSource + ?Sized>(src: &S, k: f64) -> Complex64 {
    src.amplitude(k).conj_weight_ratio() / (2.0 * PI)
}

fn diag_step(lambda: f64, scale: f64) -> f64 {
    1e-3f64
        .min(lambda / 4.0)
        .min((PI - lambda) / 4.0)
        .min(scale / 4.0)
}

/// `d/dx P(x)` at `x = λ` from a five-point stencil.
fn pv_derivative<S: AmplitudeSource + ?Sized>(
    src: &S,
    table: &PvTable,
    lambda: f64,
    scale: f64,
) -> Complex64 {
    let h = diag_step(lambda, scale);
    let f = |k: f64| f_of(src, k);
    let p = |x: f64| table.pv(x, f(x), || central_derivative(&f, x, scale));
    (-p(lambda + 2.0 * h) + 8.0 * p(lambda + h) - 8.0 * p(lambda - h) + p(lambda - 2.0 * h))
        / (12.0 * h)
}

/// One entry `J(λ, μ)`; the principal values use `grid`.
pub fn kernel_j<S: AmplitudeSource + ?Sized>(
    src: &S,
    lambda: f64,
    mu: f64,
    grid: &QuadratureGrid,
) -> Result<Complex64> {
    check_interior(lambda)?;
    check_interior(mu)?;
    let f = |k: f64| f_of(src, k);
    let table = PvTable {
        grid,
        f: grid.nodes.iter().map(|&k| f(k)).collect(),
    };
    let pre = 2.0 / PI * rho_over_f(src, lambda);
    if (lambda - mu).abs() < 1e-9 {
        return Ok(-pre * pv_derivative(src, &table, lambda, 1.0));
    }
    let pl = table.pv(lambda, f(lambda), || central_derivative(&f, lambda, 1.0));
    let pm = table.pv(mu, f(mu), || central_derivative(&f, mu, 1.0));
    Ok(pre * lambda.sin() * (pl - pm) / (lambda.cos() - mu.cos()))
}

/// Nyström value of `det(Id - K)` on `grid`, for an arbitrary kernel.
pub fn fredholm_det<K>(kernel: K, grid: &QuadratureGrid) -> Complex64
where
    K: Fn(f64, f64) -> Complex64 + Sync,
{
    let n = grid.len();
    let sw: Vec<f64> = grid.weights.iter().map(|w| w.sqrt()).collect();
    let rows: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    let d = if i == j { 1.0 } else { 0.0 };
                    d - sw[i] * kernel(grid.nodes[i], grid.nodes[j]) * sw[j]
                })
                .collect()
        })
        .collect();
    determinant(rows)
}

fn determinant(rows: Vec<Vec<Complex64>>) -> Complex64 {
    let n = rows.len();
    if n == 0 {
        return Complex64::new(1.0, 0.0);
    }
    let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    m.lu().determinant()
}

/// A narrow dip of the vacuum weight `|u(k)|² = 1/(1+|f|²)`, where `f` has a
/// sharp peak of the given width.
#[derive(Debug, Clone, Copy)]
struct NearPole {
    k: f64,
    width: f64,
}

const POLE_SCAN: usize = 4096;
/// Dips shallower or wider than this are left to the plain rule.
const POLE_DEPTH: f64 = 0.05;

fn vacuum_weight<S: AmplitudeSource + ?Sized>(src: &S, k: f64) -> f64 {
    let a = src.amplitude(k);
    let d = a.den.norm_sqr();
    d / (d + a.num.norm_sqr())
}

fn golden_min(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut gc, mut gd) = (g(c), g(d));
    for _ in 0..80 {
        if gc < gd {
            b = d;
            d = c;
            gd = gc;
            c = b - r * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + r * (b - a);
            gd = g(d);
        }
    }
    0.5 * (a + b)
}

fn near_poles<S: AmplitudeSource + ?Sized>(src: &S) -> Vec<NearPole> {
    let dk = PI / POLE_SCAN as f64;
    let ks: Vec<f64> = (0..POLE_SCAN).map(|i| (i as f64 + 0.5) * dk).collect();
    let w: Vec<f64> = ks.par_iter().map(|&k| vacuum_weight(src, k)).collect();
    let g = |k: f64| vacuum_weight(src, k);
    let mut poles: Vec<NearPole> = Vec::new();
    for i in 1..POLE_SCAN - 1 {
        if w[i] > POLE_DEPTH * POLE_DEPTH || w[i] > w[i - 1] || w[i] > w[i + 1] {
            continue;
        }
        let k = golden_min(g, ks[i - 1], ks[i + 1]);
        let depth = g(k).max(0.0);
        // |u|² ≈ depth + a² (k - k*)² near the minimum.
        let mut width = dk;
        for _ in 0..3 {
            let d = width.max(1e-9);
            let a2 = ((g(k + d) + g(k - d) - 2.0 * depth) / (2.0 * d * d)).max(1e-300);
            width = (depth / a2).sqrt().max(1e-12);
        }
        if width < POLE_DEPTH && poles.iter().all(|p| (p.k - k).abs() > p.width.max(width)) {
            poles.push(NearPole { k, width });
        }
    }
    poles
}

/// Length scale of `f` at `x`; 1 away from any near-pole.
fn local_scale(x: f64, poles: &[NearPole]) -> f64 {
    poles
        .iter()
        .map(|p| (x - p.k).abs().max(p.width))
        .fold(1.0, f64::min)
}

/// Plain `n`-node rule, or a composite rule graded geometrically towards
/// each near-pole when there are any.
fn grid_for(n: usize, poles: &[NearPole]) -> QuadratureGrid {
    if poles.is_empty() {
        return QuadratureGrid::gauss_legendre(n);
    }
    let mut breaks = vec![0.0, PI];
    for p in poles {
        breaks.push(p.k);
        let mut d = p.width;
        while d < 0.5 {
            breaks.extend([p.k - d, p.k + d]);
            d *= 2.0;
        }
    }
    breaks.retain(|&b| (0.0..=PI).contains(&b));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    let q_min = (n / 50).max(6);
    QuadratureGrid::composite(&breaks, |a, b| {
        q_min.max((n as f64 * (b - a) / PI).ceil() as usize)
    })
}

/// `det(Id - J)` for the amplitude `src` on an `n`-node grid.
fn determinant_on<S: AmplitudeSource + ?Sized>(
    src: &S,
    n: usize,
    poles: &[NearPole],
) -> (Complex64, bool) {
    let grid = grid_for(n, poles);
    let n = grid.len();
    let scale: Vec<f64> = grid.nodes.iter().map(|&k| local_scale(k, poles)).collect();
    let amps: Vec<_> = grid.nodes.par_iter().map(|&k| src.amplitude(k)).collect();
    let singular = amps
        .iter()
        .any(|a| a.num.norm() > SINGULAR_THRESHOLD * a.den.norm());
    let f: Vec<Complex64> = amps.iter().map(|a| a.value()).collect();
    let table = PvTable {
        grid: &grid,
        f: f.clone(),
    };
    let fun = |k: f64| f_of(src, k);
    let pv: Vec<Complex64> = (0..n)
        .into_par_iter()
        .map(|i| {
            table.pv(grid.nodes[i], f[i], || {
                central_derivative(&fun, grid.nodes[i], scale[i])
            })
        })
        .collect();
    let pre: Vec<Complex64> = amps
        .iter()
        .map(|a| 2.0 / PI * a.conj_weight_ratio() / (2.0 * PI))
        .collect();
    let diag: Vec<Complex64> = (0..n)
        .into_par_iter()
        .map(|i| -pre[i] * pv_derivative(src, &table, grid.nodes[i], scale[i]))
        .collect();
    let sw: Vec<f64> = grid.weights.iter().map(|w| w.sqrt()).collect();
    let cosn: Vec<f64> = grid.nodes.iter().map(|k| k.cos()).collect();
    let rows: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = grid.nodes[i].sin();
            (0..n)
                .map(|j| {
                    let jij = if i == j {
                        diag[i]
                    } else {
                        pre[i] * s * (pv[i] - pv[j]) / (cosn[i] - cosn[j])
                    };
                    let d = if i == j { 1.0 } else { 0.0 };
                    d - sw[i] * jij * sw[j]
                })
                .collect()
        })
        .collect();
    (determinant(rows), singular)
}

/// Thermodynamic-limit `⟨Z_j⟩` of the symmetry-broken state built from `src`.
///
/// The grid starts at [`DEFAULT_GRID`] nodes and doubles until the determinant
/// changes by less than [`GRID_TOLERANCE`], up to [`MAX_GRID`].
pub fn magnetization_z<S: AmplitudeSource + ?Sized>(src: &S) -> MagnetizationZ {
    magnetization_z_from(src, DEFAULT_GRID)
}

pub fn magnetization_z_from<S: AmplitudeSource + ?Sized>(src: &S, start: usize) -> MagnetizationZ {
    if !src.has_odd_sector() {
        return MagnetizationZ {
            value: 0.0,
            determinant: Complex64::new(0.0, 0.0),
            phase: 0.0,
            nodes: 0,
            converged: true,
            singular: false,
        };
    }
    let poles = near_poles(src);
    let mut n = start.max(8);
    let (mut det, mut singular) = determinant_on(src, n, &poles);
    let mut converged = false;
    while 2 * n <= MAX_GRID {
        let (next, sing) = determinant_on(src, 2 * n, &poles);
        n *= 2;
        singular |= sing;
        let delta = (next - det).norm();
        det = next;
        if delta < GRID_TOLERANCE {
            converged = true;
            break;
        }
    }
    let phase = sector_phase(|k| src.amplitude(k), src.bond_sum());
    let value = (Complex64::from_polar(1.0, phase) * det).re;
    MagnetizationZ {
        value,
        determinant: det,
        phase,
        nodes: n,
        converged,
        singular,
    }
}

/// Determinant on a fixed grid, no doubling; for convergence studies.
pub fn magnetization_z_fixed<S: AmplitudeSource + ?Sized>(src: &S, n: usize) -> MagnetizationZ {
    let (det, singular) = determinant_on(src, n, &near_poles(src));
    let phase = sector_phase(|k| src.amplitude(k), src.bond_sum());
    let value = if src.has_odd_sector() {
        (Complex64::from_polar(1.0, phase) * det).re
    } else {
        0.0
    };
    MagnetizationZ {
        value,
        determinant: det,
        phase,
        nodes: n,
        converged: false,
        singular,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherent::{
        AngleSchedule, CircuitAmplitude, GateSequence, InitialState, QuenchAmplitude,
    };
    use crate::model::Field;
    use crate::oracle::{self, Observable};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn c(x: f64) -> Complex64 {
        Complex64::from(x)
    }

    #[test]
    fn pv_of_constant_and_cosine() {
        let grid = QuadratureGrid::gauss_legendre(200);
        for &l in &[0.3f64, 1.0, 2.2, 3.0] {
            let log = ((1.0 + l.cos()) / (1.0 - l.cos())).ln();
            let one = pv_integral(|_| c(1.0), l, &grid).unwrap();
            assert_abs_diff_eq!(one.re, log, epsilon = 1e-12);
            let cos = pv_integral(|k| c(k.cos()), l, &grid).unwrap();
            assert_abs_diff_eq!(cos.re, l.cos() * log - 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn pv_on_a_node_uses_the_limit() {
        let grid = QuadratureGrid::gauss_legendre(64);
        let l = grid.nodes[20];
        let got = pv_integral(|k| c(k.sin()), l, &grid).unwrap();
        let near = pv_integral(|k| c(k.sin()), l + 1e-6, &grid).unwrap();
        assert!((got - near).norm() < 1e-5);
    }

    #[test]
    fn pv_rejects_endpoint_pole() {
        let grid = QuadratureGrid::gauss_legendre(16);
        assert!(matches!(
            pv_integral(|_| c(1.0), 0.0, &grid),
            Err(Error::PoleAtEndpoint(_))
        ));
        assert!(pv_integral(|_| c(1.0), PI, &grid).is_err());
    }

    #[test]
    fn pv_converges_and_is_linear() {
        let f = |k: f64| Complex64::new((2.0 * k).sin() * k.exp(), k.cos().powi(3));
        let g = |k: f64| Complex64::new(1.0 / (2.0 + k.cos()), 0.0);
        let a = QuadratureGrid::gauss_legendre(200);
        let b = QuadratureGrid::gauss_legendre(400);
        for &l in &[0.7, 1.9] {
            let pa = pv_integral(f, l, &a).unwrap();
            let pb = pv_integral(f, l, &b).unwrap();
            assert!((pa - pb).norm() < 1e-10);
            let lin = pv_integral(|k| 2.0 * f(k) - 3.0 * g(k), l, &a).unwrap();
            let sep = 2.0 * pa - 3.0 * pv_integral(g, l, &a).unwrap();
            assert!((lin - sep).norm() < 1e-12);
        }
    }

    #[test]
    fn separable_kernel_determinant() {
        let grid = QuadratureGrid::gauss_legendre(64);
        let d = fredholm_det(|l, m| c(l.sin() * m.cos()), &grid);
        // 1 - ∫_0^π sin k cos k dk = 1
        assert_abs_diff_eq!(d.re, 1.0, epsilon = 1e-12);
        let d = fredholm_det(|l, m| c(0.3 * l.sin() * m.sin()), &grid);
        assert_abs_diff_eq!(d.re, 1.0 - 0.3 * FRAC_PI_2, epsilon = 1e-12);
        assert_eq!(fredholm_det(|_, _| c(0.0), &grid), c(1.0));
    }

    #[test]
    fn determinant_matches_trace_series() {
        let grid = QuadratureGrid::gauss_legendre(40);
        let kernel = |l: f64, m: f64| Complex64::new(0.1 * (l - m).cos(), 0.05 * (l * m).sin());
        let det = fredholm_det(kernel, &grid);
        let n = grid.len();
        let a = DMatrix::from_fn(n, n, |i, j| {
            grid.weights[i].sqrt() * kernel(grid.nodes[i], grid.nodes[j]) * grid.weights[j].sqrt()
        });
        let mut power = a.clone();
        let mut log = Complex64::new(0.0, 0.0);
        for m in 1..=20 {
            log -= power.trace() / m as f64;
            power = &power * &a;
        }
        assert!((det.ln() - log).norm() < 1e-6);
    }

    #[test]
    fn empty_circuit_has_unit_order() {
        let seq = GateSequence::default();
        let src = CircuitAmplitude::new(&seq, InitialState::AllZero);
        let m = magnetization_z(&src);
        assert_abs_diff_eq!(m.value, 1.0, epsilon = 1e-12);
        assert!(m.converged && !m.singular);
        let plus = CircuitAmplitude::new(&seq, InitialState::AllPlus);
        assert_eq!(magnetization_z(&plus).value, 0.0);
    }

    #[test]
    fn constant_amplitude_reduces_to_log_kernel() {
        struct Constant;
        impl AmplitudeSource for Constant {
            fn amplitude(&self, _k: f64) -> crate::coherent::ProjectiveAmplitude {
                crate::coherent::ProjectiveAmplitude::new(Complex64::new(0.4, 0.2), c(1.0))
            }
            fn bond_sum(&self) -> f64 {
                0.0
            }
            fn has_odd_sector(&self) -> bool {
                true
            }
        }
        // P(x) = f ln((1 + cos x)/(1 - cos x)) for constant f.
        let grid = QuadratureGrid::gauss_legendre(100);
        let f = Complex64::new(0.4, 0.2);
        let pre = 2.0 / PI * f.conj() / (1.0 + f.norm_sqr()) / (2.0 * PI);
        let log = |x: f64| ((1.0 + x.cos()) / (1.0 - x.cos())).ln();
        for &(l, m) in &[(0.5f64, 2.0f64), (2.9, 0.1)] {
            let want = pre * l.sin() * f * (log(l) - log(m)) / (l.cos() - m.cos());
            assert!((kernel_j(&Constant, l, m, &grid).unwrap() - want).norm() < 1e-10);
        }
        // diagonal: -(2/π)(ρ/f) f d/dx ln(...) = (2/π)(ρ/f) f · 2/sin x
        let l = 1.2f64;
        let want = pre * f * 2.0 / l.sin();
        assert!((kernel_j(&Constant, l, l, &grid).unwrap() - want).norm() < 1e-8);
    }

    #[test]
    fn kernel_matches_brute_force_principal_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = AngleSchedule::new(vec![rng.gen_range(0.2..1.3)], vec![rng.gen_range(0.2..1.3)]);
        let seq = s.to_sequence();
        let src = CircuitAmplitude::new(&seq, InitialState::AllZero);
        let grid = QuadratureGrid::gauss_legendre(200);
        let f = |k: f64| src.amplitude(k).value();
        // Simpson away from the pole, a midpoint rule symmetric about it nearby.
        let brute = |x: f64| {
            let integrand = |k: f64| f(k) * k.sin() / (x.cos() - k.cos());
            let simpson = |a: f64, b: f64, n: usize| {
                let h = (b - a) / n as f64;
                let mut acc = integrand(a) + integrand(b);
                for i in 1..n {
                    acc += integrand(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
                }
                acc * h / 3.0
            };
            let d = 0.5 * x.min(PI - x);
            let m = 5000;
            let h = d / m as f64;
            let mut mid = Complex64::new(0.0, 0.0);
            for i in 0..m {
                let o = (i as f64 + 0.5) * h;
                mid += (integrand(x - o) + integrand(x + o)) * h;
            }
            simpson(1e-300, x - d, 4000) + mid + simpson(x + d, PI, 4000)
        };
        let (l, m) = (0.9, 2.1);
        let pre = 2.0 / PI * src.amplitude(l).conj_weight_ratio() / (2.0 * PI);
        let want = pre * l.sin() * (brute(l) - brute(m)) / (l.cos() - m.cos());
        let got = kernel_j(&src, l, m, &grid).unwrap();
        assert!(
            (got - want).norm() < 1e-6 * want.norm().max(1e-3),
            "{got} vs {want}"
        );
    }

    #[test]
    fn diagonal_is_continuous() {
        let s = AngleSchedule::new(vec![0.4, 1.1], vec![0.8, 0.3]);
        let seq = s.to_sequence();
        let src = CircuitAmplitude::new(&seq, InitialState::AllZero);
        let grid = QuadratureGrid::gauss_legendre(200);
        for &l in &[0.5, 1.6, 2.7] {
            let d = kernel_j(&src, l, l, &grid).unwrap();
            let up = kernel_j(&src, l, l + 1e-4, &grid).unwrap();
            let dn = kernel_j(&src, l, l - 1e-4, &grid).unwrap();
            let off = 0.5 * (up + dn);
            assert!((d - off).norm() < 1e-6 * d.norm().max(1e-2), "{d} vs {off}");
        }
    }

    #[test]
    fn shallow_circuit_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..3 {
            let s = AngleSchedule::new(
                vec![rng.gen_range(0.0..FRAC_PI_2)],
                vec![rng.gen_range(0.0..FRAC_PI_2)],
            );
            let seq = s.to_sequence();
            let state = oracle::simulate(12, &seq, InitialState::AllZero).unwrap();
            let want = oracle::expectation(&state, Observable::Z);
            let got = magnetization_z(&CircuitAmplitude::new(&seq, InitialState::AllZero));
            assert!(got.converged);
            assert!((got.value - want).abs() < 2e-3, "{} vs {want}", got.value);
        }
    }

    #[test]
    fn sharp_amplitude_peak_is_resolved() {
        // |u(k)| dips to 7e-4 near k = 1.164.
        let s = AngleSchedule::new(vec![2.812, 1.011], vec![1.325, 1.989]);
        let seq = s.to_sequence();
        let src = CircuitAmplitude::new(&seq, InitialState::AllZero);
        assert_eq!(near_poles(&src).len(), 1);
        let state = oracle::simulate(12, &seq, InitialState::AllZero).unwrap();
        let want = oracle::expectation(&state, Observable::Z);
        let got = magnetization_z_fixed(&src, 400).value;
        assert!((got - want).abs() < 2e-4, "{got} vs {want}");
    }

    #[test]
    fn unquenched_order_parameter_is_static() {
        let h = Field::new(0.6).unwrap();
        let reference = crate::model::exact_mz_reference(h);
        for &t in &[0.0, 0.7] {
            let m = magnetization_z(&QuenchAmplitude { h0: h, h, t });
            assert_abs_diff_eq!(m.value, reference, epsilon = 1e-6);
        }
    }
}
