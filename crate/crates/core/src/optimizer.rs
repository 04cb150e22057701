//! Angle optimization: BFGS with Armijo backtracking, multi-start search,
//! depth continuation, branch census and preparation time.

use std::collections::hash_map::DefaultHasher;
use std::f64::consts::{FRAC_PI_2, PI};
use std::hash::{Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coherent::{project, AngleSchedule, CircuitAmplitude, InitialState, PreparedSequence};
use crate::error::{Error, Result};
use crate::fredholm::magnetization_z;
use crate::model::{ns_positive, Field};
use crate::observables::{energy_and_gradient, magnetization_x, DEFAULT_NODES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Stop once `max_j |∂F/∂x_j|` falls below this.
    pub grad_tol: f64,
    pub armijo: f64,
    pub shrink: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            grad_tol: 1e-10,
            armijo: 1e-4,
            shrink: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Quasi-Newton minimisation with an inverse-Hessian BFGS update. Accepted
/// steps never increase the objective.
pub fn bfgs<F>(mut objective: F, x0: &[f64], opts: &BfgsOptions) -> BfgsOutcome
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut g) = objective(&x);
    let identity = |scale: f64| {
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            m[i * n + i] = scale;
        }
        m
    };
    let mut hinv = identity(1.0);
    let mut fresh = true;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        if max_norm(&g) < opts.grad_tol {
            return BfgsOutcome {
                x,
                value: fx,
                grad: g,
                iterations,
                converged: true,
            };
        }
        let mut d: Vec<f64> = (0..n)
            .map(|i| -(0..n).map(|j| hinv[i * n + j] * g[j]).sum::<f64>())
            .collect();
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            hinv = identity(1.0);
            fresh = true;
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        // Keep the trial step within one radian per angle.
        let dmax = max_norm(&d);
        let mut alpha = if dmax > 1.0 { 1.0 / dmax } else { 1.0 };
        let mut accepted = None;
        while alpha > 1e-20 {
            let xt: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            let (ft, gt) = objective(&xt);
            if ft <= fx + opts.armijo * alpha * slope {
                accepted = Some((xt, ft, gt));
                break;
            }
            alpha *= opts.shrink;
        }
        let Some((xn, fnew, gn)) = accepted else {
            if fresh {
                break;
            }
            hinv = identity(1.0);
            fresh = true;
            iterations += 1;
            continue;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if fresh {
                hinv = identity(sy / dot(&y, &y));
            }
            let hy: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| hinv[i * n + j] * y[j]).sum::<f64>())
                .collect();
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            let coef = (1.0 + yhy * rho) * rho;
            for i in 0..n {
                for j in 0..n {
                    hinv[i * n + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
            fresh = false;
        }
        x = xn;
        fx = fnew;
        g = gn;
        iterations += 1;
    }
    let converged = max_norm(&g) < opts.grad_tol;
    BfgsOutcome {
        x,
        value: fx,
        grad: g,
        iterations,
        converged,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub field: f64,
    pub depth: usize,
    pub sites: usize,
    pub init: InitialState,
    /// Optimal angles wrapped into `[0, π/2)`.
    pub schedule: AngleSchedule,
    pub energy: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `Σγ + Σβ` of the wrapped angles.
    pub total_time: f64,
    pub branch_key: u64,
}

/// Chain length at which depth `p` reproduces the infinite chain exactly.
pub fn light_cone_sites(p: usize) -> usize {
    (4 * p).max(2)
}

fn finish(
    h: Field,
    init: InitialState,
    out: BfgsOutcome,
    opts: &BfgsOptions,
) -> OptimizationResult {
    let raw = AngleSchedule::from_flat(&out.x);
    let p = raw.depth();
    let schedule = raw.wrapped();
    let l = light_cone_sites(p);
    let (energy, grad) = energy_and_gradient(&schedule.to_sequence(), h, l, init);
    let grad_norm = max_norm(&grad);
    OptimizationResult {
        field: h.value(),
        depth: p,
        sites: l,
        init,
        total_time: total_time(&schedule).0,
        branch_key: branch_key(&schedule, h, init),
        schedule,
        energy,
        grad_norm,
        iterations: out.iterations,
        converged: grad_norm < opts.grad_tol.max(1e-12) * 10.0 || out.converged,
    }
}

/// One BFGS run from `start`.
pub fn minimize_warm_with(
    h: Field,
    init: InitialState,
    start: &AngleSchedule,
    opts: &BfgsOptions,
) -> OptimizationResult {
    let p = start.depth();
    let l = light_cone_sites(p);
    let template = start.to_sequence();
    let out = bfgs(
        |x| energy_and_gradient(&template.with_angles(x), h, l, init),
        &start.to_flat(),
        opts,
    );
    finish(h, init, out, opts)
}

pub fn minimize_warm(
    h: Field,
    p: usize,
    init: InitialState,
    warm_start: &AngleSchedule,
) -> Result<OptimizationResult> {
    if warm_start.depth() != p {
        return Err(Error::InvalidArgument(format!(
            "warm start has depth {}, expected {p}",
            warm_start.depth()
        )));
    }
    Ok(minimize_warm_with(
        h,
        init,
        warm_start,
        &BfgsOptions::default(),
    ))
}

fn random_start(rng: &mut ChaCha8Rng, p: usize) -> AngleSchedule {
    AngleSchedule::new(
        (0..p).map(|_| rng.gen_range(0.0..FRAC_PI_2)).collect(),
        (0..p).map(|_| rng.gen_range(0.0..FRAC_PI_2)).collect(),
    )
}

/// Order used to pick "the" optimum among candidates: energy, then smaller
/// preparation time, then lexicographic angles.
fn better(a: &OptimizationResult, b: &OptimizationResult) -> bool {
    if (a.energy - b.energy).abs() > 1e-12 {
        return a.energy < b.energy;
    }
    if (a.total_time - b.total_time).abs() > 1e-12 {
        return a.total_time < b.total_time;
    }
    a.schedule.to_flat() < b.schedule.to_flat()
}

fn pick_best(results: Vec<OptimizationResult>) -> OptimizationResult {
    let converged: Vec<&OptimizationResult> = results.iter().filter(|r| r.converged).collect();
    let pool: Vec<&OptimizationResult> = if converged.is_empty() {
        results.iter().collect()
    } else {
        converged
    };
    let mut best = pool[0];
    for r in &pool[1..] {
        if better(r, best) {
            best = r;
        }
    }
    best.clone()
}

/// Best of `restarts` BFGS runs from uniform random angles in `[0, π/2)`.
/// The result is flagged non-converged when no restart converged.
pub fn minimize(
    h: Field,
    p: usize,
    init: InitialState,
    seed: u64,
    restarts: usize,
) -> Result<OptimizationResult> {
    minimize_with(h, p, init, seed, restarts, &BfgsOptions::default())
}

pub fn minimize_with(
    h: Field,
    p: usize,
    init: InitialState,
    seed: u64,
    restarts: usize,
    opts: &BfgsOptions,
) -> Result<OptimizationResult> {
    if p == 0 {
        return Err(Error::InvalidArgument("depth must be at least 1".into()));
    }
    let restarts = restarts.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<AngleSchedule> = (0..restarts).map(|_| random_start(&mut rng, p)).collect();
    let results: Vec<OptimizationResult> = starts
        .par_iter()
        .map(|s| minimize_warm_with(h, init, s, opts))
        .collect();
    Ok(pick_best(results))
}

/// Depth-`p+1` start from a depth-`p` solution by linear interpolation of the
/// angle profiles.
pub fn interpolate_schedule(s: &AngleSchedule) -> AngleSchedule {
    let p = s.depth();
    let lift = |v: &[f64]| -> Vec<f64> {
        (0..=p)
            .map(|i| {
                let a = if i == 0 { 0.0 } else { v[i - 1] };
                let b = if i == p { 0.0 } else { v[i] };
                (i as f64 / p as f64) * a + ((p - i) as f64 / p as f64) * b
            })
            .collect()
    };
    AngleSchedule::new(lift(&s.gammas), lift(&s.betas))
}

/// Depth-`p+1` start that reproduces the depth-`p` state exactly.
pub fn pad_schedule(s: &AngleSchedule) -> AngleSchedule {
    let mut g = s.gammas.clone();
    let mut b = s.betas.clone();
    g.push(0.0);
    b.push(0.0);
    AngleSchedule::new(g, b)
}

/// Optima for every depth `1..=p_max`, each depth started from the
/// interpolated and the zero-padded previous optimum (unwrapped angles).
pub fn depth_continuation(
    h: Field,
    p_max: usize,
    init: InitialState,
    seed: u64,
    restarts: usize,
) -> Result<Vec<OptimizationResult>> {
    depth_continuation_with(h, p_max, init, seed, restarts, &BfgsOptions::default())
}

pub fn depth_continuation_with(
    h: Field,
    p_max: usize,
    init: InitialState,
    seed: u64,
    restarts: usize,
    opts: &BfgsOptions,
) -> Result<Vec<OptimizationResult>> {
    if p_max == 0 {
        return Err(Error::InvalidArgument("depth must be at least 1".into()));
    }
    let mut out: Vec<OptimizationResult> = Vec::with_capacity(p_max);
    let mut raw = minimize(h, 1, init, seed, restarts)?.schedule;
    out.push(minimize_warm_with(h, init, &raw, opts));
    for _p in 2..=p_max {
        let candidates = [interpolate_schedule(&raw), pad_schedule(&raw)];
        let runs: Vec<(AngleSchedule, OptimizationResult)> = candidates
            .par_iter()
            .map(|s| {
                let (x, r) = minimize_raw(h, init, s, opts);
                (x, r)
            })
            .collect();
        let mut best = 0;
        for i in 1..runs.len() {
            if runs[i].1.energy < runs[best].1.energy - 1e-14 {
                best = i;
            }
        }
        raw = runs[best].0.clone();
        out.push(runs[best].1.clone());
    }
    Ok(out)
}

/// BFGS returning both the unwrapped optimum and the reported result.
fn minimize_raw(
    h: Field,
    init: InitialState,
    start: &AngleSchedule,
    opts: &BfgsOptions,
) -> (AngleSchedule, OptimizationResult) {
    let p = start.depth();
    let l = light_cone_sites(p);
    let template = start.to_sequence();
    let out = bfgs(
        |x| energy_and_gradient(&template.with_angles(x), h, l, init),
        &start.to_flat(),
        opts,
    );
    let raw = AngleSchedule::from_flat(&out.x);
    (raw, finish(h, init, out, opts))
}

/// `(T, min(T, πp - T))` with `T = Σγ + Σβ`.
pub fn total_time(schedule: &AngleSchedule) -> (f64, f64) {
    let t: f64 = schedule.gammas.iter().chain(&schedule.betas).sum();
    let p = schedule.depth() as f64;
    (t, t.min(PI * p - t))
}

/// Phases of `f_proj` on the 16 momenta `NS₊` of `L = 32`.
pub fn phase_profile(schedule: &AngleSchedule, h: Field, init: InitialState) -> Vec<f64> {
    let prep = PreparedSequence::new(&schedule.to_sequence());
    ns_positive(32)
        .into_iter()
        .map(|k| {
            let a = project(prep.evolve(init, k), h, k);
            (a.num * a.den.conj()).arg()
        })
        .collect()
}

/// Hash of the `f_proj` phase profile rounded to `1e-4`.
pub fn branch_key(schedule: &AngleSchedule, h: Field, init: InitialState) -> u64 {
    let mut hasher = DefaultHasher::new();
    for ph in phase_profile(schedule, h, init) {
        let q = (ph / 1e-4).round() as i64;
        // -π and π are the same phase
        let period = (2.0 * PI / 1e-4).round() as i64;
        q.rem_euclid(period).hash(&mut hasher);
    }
    hasher.finish()
}

fn profile_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = (x - y).rem_euclid(2.0 * PI);
            d.min(2.0 * PI - d)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub schedule: AngleSchedule,
    pub energy: f64,
    pub m_z: f64,
    pub m_x: f64,
    pub total_time: f64,
    pub branch_key: u64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchCensus {
    pub field: f64,
    pub depth: usize,
    pub samples: usize,
    /// Converged runs whose energy is within `1e-9` of the minimum.
    pub accepted: usize,
    pub branches: Vec<Branch>,
}

impl BranchCensus {
    pub fn energy_spread(&self) -> f64 {
        spread(self.branches.iter().map(|b| b.energy))
    }

    pub fn m_x_spread(&self) -> f64 {
        spread(self.branches.iter().map(|b| b.m_x))
    }

    pub fn m_z_spread(&self) -> f64 {
        spread(self.branches.iter().map(|b| b.m_z))
    }

    pub fn mean_total_time(&self) -> f64 {
        let n: usize = self.branches.iter().map(|b| b.count).sum();
        self.branches
            .iter()
            .map(|b| b.total_time * b.count as f64)
            .sum::<f64>()
            / n.max(1) as f64
    }
}

fn spread(it: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| {
        (l.min(x), h.max(x))
    });
    if lo.is_finite() {
        hi - lo
    } else {
        0.0
    }
}

/// Multi-start census of degenerate optima, clustered by the `f_proj` phase
/// profile. Each branch carries `m_X` and the order parameter of its
/// representative.
pub fn enumerate_branches(h: Field, p: usize, samples: usize, seed: u64) -> Result<BranchCensus> {
    enumerate_branches_with(h, p, InitialState::AllZero, samples, seed, true)
}

pub fn enumerate_branches_with(
    h: Field,
    p: usize,
    init: InitialState,
    samples: usize,
    seed: u64,
    with_mz: bool,
) -> Result<BranchCensus> {
    if p == 0 || samples == 0 {
        return Err(Error::InvalidArgument(
            "census needs p >= 1 and samples >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<AngleSchedule> = (0..samples).map(|_| random_start(&mut rng, p)).collect();
    let opts = BfgsOptions::default();
    let runs: Vec<OptimizationResult> = starts
        .par_iter()
        .map(|s| minimize_warm_with(h, init, s, &opts))
        .filter(|r| r.converged)
        .collect();
    let emin = runs.iter().map(|r| r.energy).fold(f64::INFINITY, f64::min);
    let good: Vec<&OptimizationResult> = runs.iter().filter(|r| r.energy - emin < 1e-9).collect();
    let mut clusters: Vec<(Vec<f64>, OptimizationResult, usize)> = Vec::new();
    for r in &good {
        let prof = phase_profile(&r.schedule, h, init);
        match clusters
            .iter_mut()
            .find(|(c, _, _)| profile_distance(c, &prof) < 1e-3)
        {
            Some(c) => {
                c.2 += 1;
                if better(r, &c.1) {
                    c.1 = (*r).clone();
                }
            }
            None => clusters.push((prof, (*r).clone(), 1)),
        }
    }
    let branches: Vec<Branch> = clusters
        .into_par_iter()
        .map(|(_, r, count)| {
            let seq = r.schedule.to_sequence();
            let src = CircuitAmplitude::new(&seq, init);
            Branch {
                m_x: magnetization_x(&src, DEFAULT_NODES).value,
                m_z: if with_mz {
                    magnetization_z(&src).value
                } else {
                    f64::NAN
                },
                energy: r.energy,
                total_time: r.total_time,
                branch_key: r.branch_key,
                schedule: r.schedule,
                count,
            }
        })
        .collect();
    let mut branches = branches;
    branches.sort_by(|a, b| a.total_time.total_cmp(&b.total_time));
    Ok(BranchCensus {
        field: h.value(),
        depth: p,
        samples,
        accepted: good.len(),
        branches,
    })
}
