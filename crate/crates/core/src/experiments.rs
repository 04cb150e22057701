//! Reproduction pipelines: field sweeps, residual scaling fits, scaling
//! collapse of the order parameter, correlation length, exact preparation and
//! quench series.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{DMatrix, DVector, Dyn, Owned};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coherent::{
    evolve_with_grad, project, AmplitudeSource, AngleSchedule, CircuitAmplitude, Gate, GateKind,
    GateSequence, InitialState, PairMap, QuenchAmplitude,
};
use crate::error::{Error, Result};
use crate::fredholm::{magnetization_z, MagnetizationZ, DEFAULT_GRID, MAX_GRID};
use crate::model::{bogoliubov_half_angle, ground_energy_density_inf, ns_positive, Field};
use crate::observables::{
    correlation_xx_many, magnetization_x, overlap, susceptibility_x, DEFAULT_NODES,
};
use crate::optimizer::{depth_continuation, minimize_warm, OptimizationResult};
use crate::oracle;

// ---------------------------------------------------------------------------
// Residual scaling

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Same phase as the initial state: `A e^{-λp}`.
    Sub,
    /// `c/p²` at the critical point.
    Critical,
    /// Across the transition: `B p^s` with `s ≈ -1`.
    Super,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Sub => "sub",
            Regime::Critical => "critical",
            Regime::Super => "super",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ScalingLaw {
    Exponential {
        amplitude: f64,
        rate: f64,
    },
    /// `c p⁻² (1 + a/p + b/p²)`. `leading_only` is the bare `c p⁻²` fit.
    InverseSquare {
        coefficient: f64,
        corrections: [f64; 2],
        leading_only: f64,
    },
    Power {
        amplitude: f64,
        exponent: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub regime: Regime,
    pub law: ScalingLaw,
    /// Coefficient of determination in the fit coordinates.
    pub r_squared: f64,
    pub depths: Vec<usize>,
}

fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn r_squared(y: &[f64], model: &[f64]) -> f64 {
    let n = y.len() as f64;
    let my = y.iter().sum::<f64>() / n;
    let ss_res: f64 = y.iter().zip(model).map(|(a, b)| (a - b).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|a| (a - my).powi(2)).sum();
    if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    }
}

/// Least-squares fit of optimized energy residuals `F(p) - F_∞` to the law of
/// `regime`. Exponential fits use `(p, ln r)`, the others `(ln p, ln r)`.
///
/// The critical law carries two subleading corrections; their absence biases
/// the coefficient at moderate depth (the residual is close to
/// `c/(p+1)²`).
pub fn fit_energy_scaling(series: &[(usize, f64)], regime: Regime) -> Result<ScalingFit> {
    if series.len() < 6 {
        return Err(Error::InvalidArgument(format!(
            "scaling fit needs at least 6 depths, got {}",
            series.len()
        )));
    }
    if let Some(&(p, r)) = series.iter().find(|(p, r)| *p == 0 || !(*r > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "residuals must be positive at positive depth, got r({p}) = {r}"
        )));
    }
    let p: Vec<f64> = series.iter().map(|&(p, _)| p as f64).collect();
    let lnp: Vec<f64> = p.iter().map(|x| x.ln()).collect();
    let lnr: Vec<f64> = series.iter().map(|&(_, r)| r.ln()).collect();
    let (law, r2) = match regime {
        Regime::Sub => {
            let (slope, icpt) = linear_fit(&p, &lnr);
            let model: Vec<f64> = p.iter().map(|x| icpt + slope * x).collect();
            (
                ScalingLaw::Exponential {
                    amplitude: icpt.exp(),
                    rate: -slope,
                },
                r_squared(&lnr, &model),
            )
        }
        Regime::Super => {
            let (slope, icpt) = linear_fit(&lnp, &lnr);
            let model: Vec<f64> = lnp.iter().map(|x| icpt + slope * x).collect();
            (
                ScalingLaw::Power {
                    amplitude: icpt.exp(),
                    exponent: slope,
                },
                r_squared(&lnr, &model),
            )
        }
        Regime::Critical => {
            let n = series.len();
            let a = DMatrix::from_fn(n, 3, |i, j| p[i].powi(-(j as i32)));
            let b = DVector::from_iterator(n, series.iter().map(|&(p, r)| r * (p * p) as f64));
            let sol = a
                .svd(true, true)
                .solve(&b, 1e-14)
                .map_err(|e| Error::Fit(e.to_string()))?;
            let c = sol[0];
            let model: Vec<f64> = p
                .iter()
                .map(|&x| {
                    ((sol[0] + sol[1] / x + sol[2] / (x * x)) / (x * x))
                        .abs()
                        .ln()
                })
                .collect();
            let leading_only =
                (lnr.iter().zip(&lnp).map(|(r, l)| r + 2.0 * l).sum::<f64>() / n as f64).exp();
            (
                ScalingLaw::InverseSquare {
                    coefficient: c,
                    corrections: [sol[1] / c, sol[2] / c],
                    leading_only,
                },
                r_squared(&lnr, &model),
            )
        }
    };
    if !(r2 >= 0.99) {
        return Err(Error::RegimeMismatch {
            regime: regime.name(),
            r_squared: r2,
        });
    }
    Ok(ScalingFit {
        regime,
        law,
        r_squared: r2,
        depths: series.iter().map(|&(p, _)| p).collect(),
    })
}

// ---------------------------------------------------------------------------
// Scaling collapse

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CollapseSide {
    #[default]
    Below,
    Above,
    Both,
}

/// `p → [(h, m_Z)]`.
pub type Curves = BTreeMap<usize, Vec<(f64, f64)>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseFit {
    pub h_c: f64,
    pub beta: f64,
    pub nu: f64,
    /// Mean squared distance to the master curve at `(beta, nu)`.
    pub objective: f64,
    pub window: (f64, f64),
    pub p_list: Vec<usize>,
    pub side: CollapseSide,
    pub points: usize,
}

pub const BETA_RANGE: (f64, f64) = (0.05, 0.3);
pub const NU_RANGE: (f64, f64) = (0.5, 2.0);

struct Point {
    p: usize,
    h: f64,
    m: f64,
}

fn select(curves: &Curves, h_c: f64, side: CollapseSide) -> Result<Vec<Point>> {
    if curves.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "collapse needs at least 3 depths, got {}",
            curves.len()
        )));
    }
    let keep = |h: f64| match side {
        CollapseSide::Below => h <= h_c + 1e-12,
        CollapseSide::Above => h >= h_c - 1e-12,
        CollapseSide::Both => true,
    };
    let pts: Vec<Point> = curves
        .iter()
        .flat_map(|(&p, c)| {
            c.iter()
                .filter(|(h, _)| keep(*h))
                .map(move |&(h, m)| Point { p, h, m })
        })
        .collect();
    if pts.len() < 10 {
        return Err(Error::DegenerateWindow(pts.len()));
    }
    Ok(pts)
}

/// Weighted mean squared vertical distance between each rescaled point and a
/// local-linear fit through the points of the other depths.
///
/// Neighbours carry biweight weights of half-width twice the bandwidth (the
/// bandwidth is 1.5× the median abscissa spacing), the slope is lightly
/// ridge-regularised, and each point's residual is weighted by `W/(W + ½)`
/// with `W` its total neighbour weight. Every piece is continuous in the
/// exponents, so points entering or leaving a neighbourhood do not make the
/// objective jump. `None` when fewer than 10 points have neighbours.
fn objective_on(pts: &[Point], h_c: f64, beta: f64, nu: f64) -> Option<f64> {
    let xs: Vec<f64> = pts
        .iter()
        .map(|q| (q.h - h_c) * (q.p as f64).powf(1.0 / nu))
        .collect();
    let ys: Vec<f64> = pts
        .iter()
        .map(|q| q.m * (q.p as f64).powf(beta / nu))
        .collect();
    let mut sorted = xs.clone();
    sorted.sort_by(f64::total_cmp);
    let mut gaps: Vec<f64> = sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|g| *g > 0.0)
        .collect();
    if gaps.is_empty() {
        return None;
    }
    gaps.sort_by(f64::total_cmp);
    let half_width = 2.0 * 1.5 * gaps[gaps.len() / 2];
    let (mut acc, mut norm) = (0.0, 0.0);
    let mut used = 0usize;
    for (i, q) in pts.iter().enumerate() {
        let (mut n, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (j, r) in pts.iter().enumerate() {
            let dx = xs[j] - xs[i];
            if r.p == q.p || dx.abs() >= half_width {
                continue;
            }
            let w = (1.0 - (dx / half_width).powi(2)).powi(2);
            n += w;
            sx += w * dx;
            sy += w * ys[j];
            sxx += w * dx * dx;
            sxy += w * dx * ys[j];
        }
        if n == 0.0 {
            continue;
        }
        let ridge = 1e-6 * n * n * half_width * half_width;
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx + ridge);
        let fit = (sy - slope * sx) / n;
        let c = n / (n + 0.5);
        acc += c * (ys[i] - fit).powi(2);
        norm += c;
        used += 1;
    }
    (used >= 10).then(|| acc / norm)
}

/// Collapse objective at fixed exponents.
pub fn collapse_objective(
    curves: &Curves,
    h_c: f64,
    side: CollapseSide,
    beta: f64,
    nu: f64,
) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "nu must be positive, got {nu}"
        )));
    }
    let pts = select(curves, h_c, side)?;
    objective_on(&pts, h_c, beta, nu).ok_or(Error::DegenerateWindow(0))
}

struct CollapseCost<'a> {
    pts: &'a [Point],
    /// `None`: fit `h_c` as the third parameter.
    h_c: Option<f64>,
}

const PENALTY: f64 = 1e300;

/// The simplex works in `(β/ν, 1/ν)`, the exponents that enter the scaling
/// variables directly; the valley of the objective is far less tilted there.
fn to_search(x: &[f64]) -> Vec<f64> {
    let mut y = vec![x[0] / x[1], 1.0 / x[1]];
    y.extend_from_slice(&x[2..]);
    y
}

fn from_search(y: &[f64]) -> Vec<f64> {
    let mut x = vec![y[0] / y[1], 1.0 / y[1]];
    x.extend_from_slice(&y[2..]);
    x
}

impl CollapseCost<'_> {
    fn eval(&self, x: &[f64]) -> f64 {
        let (beta, nu) = (x[0], x[1]);
        if beta < BETA_RANGE.0 || beta > BETA_RANGE.1 || nu < NU_RANGE.0 || nu > NU_RANGE.1 {
            return PENALTY;
        }
        let h_c = self.h_c.unwrap_or_else(|| x[2]);
        objective_on(self.pts, h_c, beta, nu).unwrap_or(PENALTY)
    }
}

impl CostFunction for CollapseCost<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, y: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        if y[1] <= 0.0 {
            return Ok(PENALTY);
        }
        Ok(self.eval(&from_search(y)))
    }
}

fn nelder_mead(cost: CollapseCost<'_>, start: Vec<Vec<f64>>) -> Result<(Vec<f64>, f64)> {
    let solver = NelderMead::new(start)
        .with_sd_tolerance(1e-13)
        .map_err(|e| Error::Fit(e.to_string()))?;
    let res = Executor::new(cost, solver)
        .configure(|s| s.max_iters(1000))
        .run()
        .map_err(|e| Error::Fit(e.to_string()))?;
    let best = res
        .state
        .best_param
        .clone()
        .ok_or_else(|| Error::Fit("no best point".into()))?;
    Ok((from_search(&best), res.state.best_cost))
}

/// The `count` best points of a coarse grid over the exponent box.
fn coarse_starts(cost: &CollapseCost<'_>, tail: &[f64], count: usize) -> Vec<Vec<f64>> {
    let mut all: Vec<(f64, Vec<f64>)> = Vec::new();
    for i in 0..=25 {
        for j in 0..=30 {
            let b = BETA_RANGE.0 + (BETA_RANGE.1 - BETA_RANGE.0) * i as f64 / 25.0;
            let n = NU_RANGE.0 + (NU_RANGE.1 - NU_RANGE.0) * j as f64 / 30.0;
            let mut x = vec![b, n];
            x.extend_from_slice(tail);
            all.push((cost.eval(&x), x));
        }
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    all.into_iter().take(count).map(|(_, x)| x).collect()
}

/// Nelder–Mead from each start, restarted with a fresh simplex around the
/// incumbent until a restart stops improving (the moving-window objective is
/// piecewise smooth and can stall a single simplex).
fn polish(pts: &[Point], h_c: Option<f64>, starts: Vec<Vec<f64>>) -> Result<(Vec<f64>, f64)> {
    let steps = [0.01, 0.05, 0.005];
    let mut best: (Vec<f64>, f64) = (starts[0].clone(), f64::INFINITY);
    for x0 in starts {
        let mut cur = (x0, f64::INFINITY);
        for _ in 0..20 {
            let y0 = to_search(&cur.0);
            let mut simplex = vec![y0.clone()];
            for d in 0..y0.len() {
                let mut v = y0.clone();
                v[d] += steps[d];
                simplex.push(v);
            }
            let (x, f) = nelder_mead(CollapseCost { pts, h_c }, simplex)?;
            if f >= cur.1 * (1.0 - 1e-9) {
                break;
            }
            cur = (x, f);
        }
        if cur.1 < best.1 {
            best = cur;
        }
    }
    Ok(best)
}

fn window(pts: &[Point]) -> (f64, f64) {
    pts.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), q| {
            (lo.min(q.h), hi.max(q.h))
        })
}

/// Exponents `(β, ν)` minimizing the collapse objective with `h_c` fixed,
/// by Nelder–Mead inside `[0.05, 0.3] × [0.5, 2]` from the best point of a
/// coarse grid.
pub fn collapse_fit(curves: &Curves, h_c: f64, side: CollapseSide) -> Result<CollapseFit> {
    let pts = select(curves, h_c, side)?;
    let cost = CollapseCost {
        pts: &pts,
        h_c: Some(h_c),
    };
    let (x, f) = polish(&pts, Some(h_c), coarse_starts(&cost, &[], 5))?;
    if f >= PENALTY {
        return Err(Error::DegenerateWindow(0));
    }
    Ok(CollapseFit {
        h_c,
        beta: x[0],
        nu: x[1],
        objective: f,
        window: window(&pts),
        p_list: curves.keys().copied().collect(),
        side,
        points: pts.len(),
    })
}

/// As [`collapse_fit`] with `h_c` as a third free parameter started at
/// `h_c_guess`; the side selection uses the guess.
pub fn collapse_fit_free_hc(
    curves: &Curves,
    h_c_guess: f64,
    side: CollapseSide,
) -> Result<CollapseFit> {
    let pts = select(curves, h_c_guess, side)?;
    let cost = CollapseCost {
        pts: &pts,
        h_c: None,
    };
    let fixed = collapse_fit(curves, h_c_guess, side)?;
    let mut starts = vec![vec![fixed.beta, fixed.nu, h_c_guess]];
    starts.extend(coarse_starts(&cost, &[h_c_guess], 5));
    let (x, f) = polish(&pts, None, starts)?;
    if f >= PENALTY {
        return Err(Error::DegenerateWindow(0));
    }
    Ok(CollapseFit {
        h_c: x[2],
        beta: x[0],
        nu: x[1],
        objective: f,
        window: window(&pts),
        p_list: curves.keys().copied().collect(),
        side,
        points: pts.len(),
    })
}

// ---------------------------------------------------------------------------
// Correlation length

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationLength {
    pub xi: f64,
    /// Inclusive `ℓ` range of the exponential fit.
    pub window: (usize, usize),
    /// `m_XX(ℓ)` for `ℓ = 1, 2, …`.
    pub correlations: Vec<f64>,
    /// A curvature change was found before the light-cone tail; otherwise the
    /// fit covers the second half of the monotone range and is only indicative.
    pub tail_found: bool,
}

/// Decay length of the connected `XX` correlation of a depth-`p` state.
///
/// `ln m_XX` is convex while the power law dominates; the crossover is the
/// first `ℓ` where its discrete curvature turns non-positive. The fit runs
/// from there to the last point before the correlation stops decreasing
/// monotonically (light-cone oscillations).
pub fn correlation_length<S: AmplitudeSource + ?Sized>(
    src: &S,
    p: usize,
) -> Result<CorrelationLength> {
    if p == 0 {
        return Err(Error::InvalidArgument("depth must be at least 1".into()));
    }
    let ell_max = 2 * p;
    let ells: Vec<usize> = (1..=ell_max).collect();
    let (map, _) = correlation_xx_many(src, &ells, (32 * ell_max).max(DEFAULT_NODES));
    let m: Vec<f64> = map.values().copied().collect();
    let mut end = m.len();
    for i in 1..m.len() {
        if m[i] <= 0.0 || m[i] >= m[i - 1] {
            end = i;
            break;
        }
    }
    if m[0] <= 0.0 || end < 4 {
        return Err(Error::Fit(
            "correlation is not positive and decreasing".into(),
        ));
    }
    let lnm: Vec<f64> = m[..end].iter().map(|x| x.ln()).collect();
    // index i ↔ ℓ = i + 1
    let crossover = (1..end - 1).find(|&i| lnm[i + 1] - 2.0 * lnm[i] + lnm[i - 1] <= 0.0);
    let (start, tail_found) = match crossover {
        Some(i) if end - i >= 3 => (i, true),
        _ => (end / 2, false),
    };
    let x: Vec<f64> = (start..end).map(|i| (i + 1) as f64).collect();
    let (slope, _) = linear_fit(&x, &lnm[start..end]);
    Ok(CorrelationLength {
        xi: -1.0 / slope,
        window: (start + 1, end),
        correlations: m,
        tail_found,
    })
}

// ---------------------------------------------------------------------------
// Exact preparation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactPreparation {
    pub sites: usize,
    pub field: f64,
    pub success: bool,
    /// Best schedule found, wrapped into `[0, π/2)`.
    pub schedule: AngleSchedule,
    /// `max_k |f_proj(k)|` over `NS₊` at `schedule`.
    pub residual: f64,
    /// `|φ|` from the closed-form overlap.
    pub overlap: f64,
    /// `|⟨GS|ψ⟩|` from the dense oracle, when `L` is small enough.
    pub oracle_overlap: Option<f64>,
    pub starts_tried: usize,
}

/// Circuit used for exact preparation from `|+…+⟩`: the Ising layer of each
/// step comes first. With the transverse layer first, `γ_1` would only
/// rotate the `X` eigenstate by a global phase.
pub fn preparation_sequence(schedule: &AngleSchedule) -> GateSequence {
    GateSequence::new(
        schedule
            .gammas
            .iter()
            .zip(&schedule.betas)
            .flat_map(|(&g, &b)| [Gate::new(GateKind::ZZ, b), Gate::new(GateKind::X, g)])
            .collect(),
    )
}

/// `[β_1, γ_1, β_2, …]`, the gate order of [`preparation_sequence`].
fn schedule_from_gate_order(x: &[f64]) -> AngleSchedule {
    AngleSchedule::new(
        x.iter().skip(1).step_by(2).copied().collect(),
        x.iter().step_by(2).copied().collect(),
    )
}

/// `f_proj(k)` on `NS₊` for the `|+…+⟩` start.
pub fn preparation_residual(schedule: &AngleSchedule, h: Field, l: usize) -> Vec<Complex64> {
    let seq = preparation_sequence(schedule);
    ns_positive(l)
        .into_iter()
        .map(|k| {
            project(
                crate::coherent::evolve_final(&seq, InitialState::AllPlus, k),
                h,
                k,
            )
            .value()
        })
        .collect()
}

struct PreparationProblem {
    h: Field,
    momenta: Vec<f64>,
    x: DVector<f64>,
}

impl PreparationProblem {
    /// `(f_proj(k), ∂f_proj/∂x_j)` per momentum.
    fn evaluate(&self) -> Vec<(Complex64, Vec<Complex64>)> {
        let seq = preparation_sequence(&schedule_from_gate_order(self.x.as_slice()));
        self.momenta
            .iter()
            .map(|&k| {
                let (traj, grad) = evolve_with_grad(&seq, InitialState::AllPlus, k);
                let a = traj.last();
                let m = PairMap::basis_change(bogoliubov_half_angle(self.h.value(), 0.0, k)).0;
                // f ↦ (m10 + m11 f)/(m00 + m01 f) has unit determinant
                let f = a.value();
                let d = m[0][0] + m[0][1] * f;
                let fp = (m[1][0] + m[1][1] * f) / d;
                (fp, grad.iter().map(|g| g / (d * d)).collect())
            })
            .collect()
    }
}

impl LeastSquaresProblem<f64, Dyn, Dyn> for PreparationProblem {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.x.copy_from(x);
    }

    fn params(&self) -> DVector<f64> {
        self.x.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let vals = self.evaluate();
        let out: Vec<f64> = vals.iter().flat_map(|(f, _)| [f.re, f.im]).collect();
        out.iter()
            .all(|v| v.is_finite())
            .then(|| DVector::from_vec(out))
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let vals = self.evaluate();
        let n = self.x.len();
        let mut jac = DMatrix::zeros(2 * vals.len(), n);
        for (i, (_, g)) in vals.iter().enumerate() {
            for (j, d) in g.iter().enumerate() {
                jac[(2 * i, j)] = d.re;
                jac[(2 * i + 1, j)] = d.im;
            }
        }
        jac.iter().all(|v| v.is_finite()).then_some(jac)
    }
}

/// Search for a depth-`L/2` schedule that maps `|+…+⟩` exactly onto the
/// finite-size ground state at `h`: the `L` real equations `f_proj(k) = 0`, `k ∈ NS₊`, in
/// `L` angles, solved by Levenberg–Marquardt from up to `starts` seeded random
/// points. A failure report carries the best residual.
pub fn solve_exact_preparation(
    l: usize,
    h: Field,
    seed: u64,
    starts: usize,
) -> Result<ExactPreparation> {
    if l < 2 || l % 2 != 0 || l > 16 {
        return Err(Error::InvalidSize(l));
    }
    let p = l / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, AngleSchedule)> = None;
    let mut tried = 0;
    for _ in 0..starts.max(1) {
        tried += 1;
        let x0: Vec<f64> = (0..2 * p).map(|_| rng.gen_range(0.0..FRAC_PI_2)).collect();
        let problem = PreparationProblem {
            h,
            momenta: ns_positive(l),
            x: DVector::from_vec(x0),
        };
        let (solved, _) = LevenbergMarquardt::new()
            .with_ftol(1e-30)
            .with_xtol(1e-30)
            .with_gtol(1e-30)
            .with_patience(200)
            .minimize(problem);
        let schedule = schedule_from_gate_order(solved.x.as_slice()).wrapped();
        let res = preparation_residual(&schedule, h, l)
            .iter()
            .map(|f| f.norm())
            .fold(0.0, f64::max);
        if res.is_finite() && best.as_ref().is_none_or(|(b, _)| res < *b) {
            best = Some((res, schedule));
        }
        if res < 1e-10 {
            break;
        }
    }
    let (residual, schedule) = best.ok_or_else(|| Error::Fit("no finite residual".into()))?;
    let seq = preparation_sequence(&schedule);
    let phi = overlap(&seq, h, l, InitialState::AllPlus, false).norm();
    let oracle_overlap = if l <= oracle::MAX_EIGEN_SITES {
        let gs = oracle::ground_state(l, h.value())?;
        let psi = oracle::simulate(l, &seq, InitialState::AllPlus)?;
        Some(gs.even.inner(&psi).norm())
    } else {
        None
    };
    Ok(ExactPreparation {
        sites: l,
        field: h.value(),
        success: residual < 1e-10,
        schedule,
        residual,
        overlap: phi,
        oracle_overlap,
        starts_tried: tried,
    })
}

// ---------------------------------------------------------------------------
// Quench

/// `m_Z(t)` after preparing the ground state at `h0` and evolving with the
/// Hamiltonian at `h`, in the thermodynamic limit.
pub fn quench_magnetization(h0: Field, h: Field, times: &[f64]) -> Result<Vec<MagnetizationZ>> {
    if h0.value() == 1.0 {
        return Err(Error::InvalidArgument(
            "initial field must not be critical".into(),
        ));
    }
    if let Some(t) = times.iter().find(|t| !(**t >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "times must be non-negative, got {t}"
        )));
    }
    Ok(times
        .iter()
        .map(|&t| magnetization_z(&QuenchAmplitude { h0, h, t }))
        .collect())
}

// ---------------------------------------------------------------------------
// Sweeps

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Random restarts at depth one, seeding the depth continuation.
    pub restarts: usize,
    pub with_mz: bool,
    pub with_chi: bool,
    pub delta_h: f64,
    pub nodes: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            restarts: 16,
            with_mz: true,
            with_chi: true,
            delta_h: 1e-3,
            nodes: DEFAULT_NODES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub h: f64,
    pub p: usize,
    pub energy: f64,
    /// `F - F_∞(h)`.
    pub residual: f64,
    pub m_x: f64,
    pub m_z: Option<f64>,
    pub chi_x: Option<f64>,
    pub branch_key: u64,
    pub total_time: f64,
    pub converged: bool,
    /// `ok`, or a `;`-separated list of raised flags.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub seed: u64,
    pub init: InitialState,
    pub restarts: usize,
    pub nodes: usize,
    pub fredholm_grid: (usize, usize),
    pub delta_h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    /// Sorted by `(p, h)`.
    pub rows: Vec<SweepRow>,
    pub provenance: Provenance,
}

/// Seed of one sweep cell.
pub fn cell_seed(seed: u64, h_index: usize, p_index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((p_index as u64) << 32) | h_index as u64);
    rng.gen()
}

fn row_for(h: Field, r: &OptimizationResult, init: InitialState, opts: &SweepOptions) -> SweepRow {
    let seq = r.schedule.to_sequence();
    let src = CircuitAmplitude::new(&seq, init);
    let mut flags: Vec<String> = Vec::new();
    if !r.converged {
        flags.push("optimizer".into());
    }
    let mx = magnetization_x(&src, opts.nodes);
    if !mx.converged {
        flags.push("m_x_grid".into());
    }
    let m_z = opts.with_mz.then(|| {
        let mz = magnetization_z(&src);
        if !mz.converged {
            flags.push("m_z_grid".into());
        }
        if mz.singular {
            flags.push("m_z_singular".into());
        }
        mz.value
    });
    let chi_x = if opts.with_chi {
        match susceptibility_x(h, init, &r.schedule, opts.delta_h) {
            Ok(s) => {
                if !s.converged {
                    flags.push("chi_optimizer".into());
                }
                Some(s.value)
            }
            Err(e) => {
                flags.push(format!("chi: {e}"));
                None
            }
        }
    } else {
        None
    };
    SweepRow {
        h: h.value(),
        p: r.depth,
        energy: r.energy,
        residual: r.energy - ground_energy_density_inf(h),
        m_x: mx.value,
        m_z,
        chi_x,
        branch_key: r.branch_key,
        total_time: r.total_time,
        converged: r.converged,
        status: if flags.is_empty() {
            "ok".into()
        } else {
            flags.join(";")
        },
    }
}

fn failed_row(h: f64, p: usize, e: &Error) -> SweepRow {
    SweepRow {
        h,
        p,
        energy: f64::NAN,
        residual: f64::NAN,
        m_x: f64::NAN,
        m_z: None,
        chi_x: None,
        branch_key: 0,
        total_time: f64::NAN,
        converged: false,
        status: format!("failed: {e}"),
    }
}

/// Optimized observables on an `h × p` grid. For each depth the first field
/// is reached by depth continuation (seeded per cell) and every following
/// field, in the order given, is warm-started from its predecessor so a row
/// of the grid stays on one branch. Depths run in parallel.
pub fn sweep(
    h_grid: &[f64],
    p_list: &[usize],
    init: InitialState,
    seed: u64,
    opts: &SweepOptions,
) -> Result<SweepTable> {
    if h_grid.is_empty() || p_list.is_empty() {
        return Err(Error::InvalidArgument(
            "sweep grids must be non-empty".into(),
        ));
    }
    if let Some(&p) = p_list.iter().find(|&&p| p == 0) {
        return Err(Error::InvalidArgument(format!(
            "depth must be at least 1, got {p}"
        )));
    }
    let fields: Vec<Field> = h_grid
        .iter()
        .map(|&h| Field::new(h))
        .collect::<Result<_>>()?;
    let per_p: Vec<Vec<SweepRow>> = p_list
        .par_iter()
        .enumerate()
        .map(|(pi, &p)| {
            let mut rows = Vec::with_capacity(fields.len());
            let start =
                depth_continuation(fields[0], p, init, cell_seed(seed, 0, pi), opts.restarts)
                    .map(|mut v| v.pop().expect("continuation returns p results"));
            let mut prev = match start {
                Ok(r) => r,
                Err(e) => {
                    return fields
                        .iter()
                        .map(|h| failed_row(h.value(), p, &e))
                        .collect();
                }
            };
            rows.push(row_for(fields[0], &prev, init, opts));
            for &h in &fields[1..] {
                match minimize_warm(h, p, init, &prev.schedule) {
                    Ok(r) => {
                        rows.push(row_for(h, &r, init, opts));
                        prev = r;
                    }
                    Err(e) => rows.push(failed_row(h.value(), p, &e)),
                }
            }
            rows
        })
        .collect();
    let mut rows: Vec<SweepRow> = per_p.into_iter().flatten().collect();
    rows.sort_by(|a, b| a.p.cmp(&b.p).then(a.h.total_cmp(&b.h)));
    Ok(SweepTable {
        rows,
        provenance: Provenance {
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            init,
            restarts: opts.restarts,
            nodes: opts.nodes,
            fredholm_grid: (DEFAULT_GRID, MAX_GRID),
            delta_h: opts.delta_h,
        },
    })
}

/// `p → [(h, |m_Z|)]` from the rows of a sweep that carry a finite `m_Z`.
pub fn curves_from(table: &SweepTable) -> Curves {
    curves_from_rows(&table.rows)
}

/// `p → [(h, |m_Z|)]`; the sign of `m_Z` depends on the branch, not the physics.
pub fn curves_from_rows(rows: &[SweepRow]) -> Curves {
    let mut out = Curves::new();
    for r in rows {
        if let Some(m) = r.m_z.filter(|m| m.is_finite()) {
            out.entry(r.p).or_default().push((r.h, m.abs()));
        }
    }
    out
}
