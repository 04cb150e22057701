//! Per-momentum evolution of the coherent-state amplitude.
//!
//! For each momentum `k ∈ (0, π)` the state restricted to the pair `(k, -k)`
//! is `den·|vac⟩ + num·|pair⟩`, written in the Bogoliubov basis of the `h = 0`
//! Hamiltonian. Every layer `exp(i t Σ Γ)` with `Γ ∈ {X, ZZ, YY}` acts on that
//! doublet as the 2×2 unitary `cos 2t · I + sin 2t · N_Γ(k)` with `N_Γ² = -I`.
//! The amplitude function of the state is `f = num/den`; carrying the
//! normalised pair rather than the ratio keeps poles of `f` harmless and
//! preserves the vacuum amplitude, which the overlap and the order parameter
//! need.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::model::{bogoliubov_angle_limit, bogoliubov_half_angle, dispersion, Field};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `f = num/den` kept as a pair; `den = 0` encodes a pole of `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectiveAmplitude {
    pub num: Complex64,
    pub den: Complex64,
}

impl ProjectiveAmplitude {
    pub const VACUUM: Self = Self {
        num: ZERO,
        den: ONE,
    };

    pub fn new(num: Complex64, den: Complex64) -> Self {
        Self { num, den }
    }

    pub fn from_value(f: Complex64) -> Self {
        Self::new(f, ONE)
    }

    /// `num/den`; infinite at a pole.
    pub fn value(&self) -> Complex64 {
        if self.den == ZERO {
            Complex64::new(f64::INFINITY, f64::INFINITY)
        } else {
            self.num / self.den
        }
    }

    /// `|f|²/(1+|f|²)`, the pair occupation.
    pub fn weight(&self) -> f64 {
        let n = self.num.norm_sqr();
        n / (n + self.den.norm_sqr())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.num.norm_sqr() + self.den.norm_sqr()
    }

    pub fn normalized(&self) -> Self {
        let s = self.norm_sqr().sqrt();
        Self::new(self.num / s, self.den / s)
    }

    /// `conj(f)/(1+|f|²)` without dividing by `den`, finite at poles.
    pub fn conj_weight_ratio(&self) -> Complex64 {
        self.num.conj() * self.den / self.norm_sqr()
    }
}

/// 2×2 complex matrix acting on `(den, num)`; as a map on `f` it is the Möbius
/// transformation `f ↦ (m10 + m11 f)/(m00 + m01 f)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMap(pub [[Complex64; 2]; 2]);

impl PairMap {
    pub const IDENTITY: Self = Self([[ONE, ZERO], [ZERO, ONE]]);

    /// `cos 2t · I + sin 2t · n`.
    fn rotation(n: [[Complex64; 2]; 2], t: f64) -> Self {
        let (s, c) = (2.0 * t).sin_cos();
        Self::rotation_sc(n, s, c)
    }

    /// [`PairMap::rotation`] with `(sin 2t, cos 2t)` supplied.
    pub(crate) fn rotation_sc(n: [[Complex64; 2]; 2], s: f64, c: f64) -> Self {
        Self([
            [c + s * n[0][0], s * n[0][1]],
            [s * n[1][0], c + s * n[1][1]],
        ])
    }

    /// Change of Bogoliubov frame by the angle `2·half`.
    pub fn basis_change(half: f64) -> Self {
        let (s, c) = half.sin_cos();
        let c = Complex64::from(c);
        Self([[c, I * s], [I * s, c]])
    }

    pub fn apply(&self, a: ProjectiveAmplitude) -> ProjectiveAmplitude {
        let m = &self.0;
        ProjectiveAmplitude {
            den: m[0][0] * a.den + m[0][1] * a.num,
            num: m[1][0] * a.den + m[1][1] * a.num,
        }
    }

    /// Matrix product `self · rhs` (apply `rhs` first).
    pub fn compose(&self, rhs: &Self) -> Self {
        let a = &self.0;
        let b = &rhs.0;
        let mut out = [[ZERO; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Self(out)
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.0;
        Self([
            [m[0][0].conj(), m[1][0].conj()],
            [m[0][1].conj(), m[1][1].conj()],
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    /// `exp(i t Σ_j X_j)`.
    X,
    /// `exp(i t Σ_j Z_j Z_{j+1})`.
    ZZ,
    /// `exp(i t Σ_j Y_j Y_{j+1})`.
    YY,
}

impl GateKind {
    /// Generator `N_Γ(k)` with `d/dt U = 2 N U` and `N² = -I`.
    pub fn generator(self, k: f64) -> [[Complex64; 2]; 2] {
        match self {
            GateKind::ZZ => [[I, ZERO], [ZERO, -I]],
            GateKind::X => {
                let (s, c) = k.sin_cos();
                [[-I * c, (-s).into()], [s.into(), I * c]]
            }
            GateKind::YY => {
                let (s, c) = (2.0 * k).sin_cos();
                [[I * c, s.into()], [(-s).into(), -I * c]]
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::X => "X",
            GateKind::ZZ => "ZZ",
            GateKind::YY => "YY",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    pub angle: f64,
}

impl Gate {
    pub fn new(kind: GateKind, angle: f64) -> Self {
        Self { kind, angle }
    }

    pub fn map(&self, k: f64) -> PairMap {
        PairMap::rotation(self.kind.generator(k), self.angle)
    }
}

/// Variational angles of the alternating circuit: `gammas[j]` drives the
/// transverse-field layer `exp(i γ_j Σ X)`, applied first in each round, and
/// `betas[j]` the Ising layer `exp(i β_j Σ ZZ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleSchedule {
    pub gammas: Vec<f64>,
    pub betas: Vec<f64>,
}

impl AngleSchedule {
    pub fn new(gammas: Vec<f64>, betas: Vec<f64>) -> Self {
        assert_eq!(gammas.len(), betas.len(), "one gamma per beta");
        Self { gammas, betas }
    }

    pub fn zeros(p: usize) -> Self {
        Self::new(vec![0.0; p], vec![0.0; p])
    }

    /// Inverse of [`AngleSchedule::to_flat`].
    pub fn from_flat(x: &[f64]) -> Self {
        assert!(x.len() % 2 == 0, "flat angle vector must have even length");
        let gammas = x.iter().step_by(2).copied().collect();
        let betas = x.iter().skip(1).step_by(2).copied().collect();
        Self { gammas, betas }
    }

    /// `[γ_1, β_1, γ_2, β_2, …]`, the order the gates are applied in.
    pub fn to_flat(&self) -> Vec<f64> {
        self.gammas
            .iter()
            .zip(&self.betas)
            .flat_map(|(&g, &b)| [g, b])
            .collect()
    }

    pub fn depth(&self) -> usize {
        self.gammas.len()
    }

    /// Angles reduced into `[0, π/2)`.
    pub fn wrapped(&self) -> Self {
        Self {
            gammas: self.gammas.iter().map(|&a| wrap_angle(a)).collect(),
            betas: self.betas.iter().map(|&a| wrap_angle(a)).collect(),
        }
    }

    /// `γ → π/2 - γ`, `β → π/2 - β`, which leaves the energy invariant.
    pub fn dual(&self) -> Self {
        Self {
            gammas: self.gammas.iter().map(|&a| FRAC_PI_2 - a).collect(),
            betas: self.betas.iter().map(|&a| FRAC_PI_2 - a).collect(),
        }
    }

    pub fn to_sequence(&self) -> GateSequence {
        GateSequence::vqcs(self)
    }
}

/// Reduce an angle into `[0, π/2)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(FRAC_PI_2);
    if w >= FRAC_PI_2 {
        0.0
    } else {
        w
    }
}

/// Ordered list of layers, first element applied first.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GateSequence {
    pub gates: Vec<Gate>,
}

impl GateSequence {
    pub fn new(gates: Vec<Gate>) -> Self {
        Self { gates }
    }

    /// `X(γ_1), ZZ(β_1), …, X(γ_p), ZZ(β_p)`.
    pub fn vqcs(schedule: &AngleSchedule) -> Self {
        let gates = schedule
            .gammas
            .iter()
            .zip(&schedule.betas)
            .flat_map(|(&g, &b)| [Gate::new(GateKind::X, g), Gate::new(GateKind::ZZ, b)])
            .collect();
        Self { gates }
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn angles(&self) -> Vec<f64> {
        self.gates.iter().map(|g| g.angle).collect()
    }

    pub fn with_angles(&self, angles: &[f64]) -> Self {
        assert_eq!(angles.len(), self.gates.len());
        Self {
            gates: self
                .gates
                .iter()
                .zip(angles)
                .map(|(g, &a)| Gate::new(g.kind, a))
                .collect(),
        }
    }

    pub fn concat(&self, other: &Self) -> Self {
        let mut gates = self.gates.clone();
        gates.extend_from_slice(&other.gates);
        Self { gates }
    }

    /// `Σ` of the `ZZ` and `YY` angles; these layers shift the relative phase
    /// of the two parity sectors.
    pub fn bond_angle_sum(&self) -> f64 {
        self.gates
            .iter()
            .filter(|g| g.kind != GateKind::X)
            .map(|g| g.angle)
            .sum()
    }

    /// Product of all layer maps at momentum `k`.
    pub fn total_map(&self, k: f64) -> PairMap {
        self.gates
            .iter()
            .fold(PairMap::IDENTITY, |acc, g| g.map(k).compose(&acc))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InitialState {
    /// `|0…0⟩`, the `h = 0` ground state; both parity sectors contribute.
    AllZero,
    /// `|+…+⟩`, which lies entirely in the even sector.
    AllPlus,
}

impl InitialState {
    /// Normalised `(den, num)` at momentum `k`; `f_0 = 1/(i tan(k/2))` for the
    /// plus state.
    pub fn amplitude(self, k: f64) -> ProjectiveAmplitude {
        match self {
            InitialState::AllZero => ProjectiveAmplitude::VACUUM,
            InitialState::AllPlus => {
                let (s, c) = (0.5 * k).sin_cos();
                ProjectiveAmplitude::new(Complex64::new(0.0, -c), Complex64::from(s))
            }
        }
    }

    pub fn has_odd_sector(self) -> bool {
        matches!(self, InitialState::AllZero)
    }
}

/// The amplitude after every layer, `trajectory[0]` being the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeTrajectory {
    pub k: f64,
    pub amplitudes: Vec<ProjectiveAmplitude>,
}

impl AmplitudeTrajectory {
    pub fn last(&self) -> ProjectiveAmplitude {
        *self
            .amplitudes
            .last()
            .expect("trajectory holds the initial state")
    }
}

/// Amplitude after `seq`, in the `h = 0` frame.
pub fn evolve_final(seq: &GateSequence, init: InitialState, k: f64) -> ProjectiveAmplitude {
    seq.gates
        .iter()
        .fold(init.amplitude(k), |a, g| g.map(k).apply(a))
}

pub fn evolve(seq: &GateSequence, init: InitialState, k: f64) -> AmplitudeTrajectory {
    let mut amplitudes = Vec::with_capacity(seq.len() + 1);
    let mut a = init.amplitude(k);
    amplitudes.push(a);
    for g in &seq.gates {
        a = g.map(k).apply(a);
        amplitudes.push(a);
    }
    AmplitudeTrajectory { k, amplitudes }
}

/// Trajectory plus `∂f_final/∂angle_j` for every layer, by forward-mode
/// propagation of the doublet derivatives (cost quadratic in the length).
pub fn evolve_with_grad(
    seq: &GateSequence,
    init: InitialState,
    k: f64,
) -> (AmplitudeTrajectory, Vec<Complex64>) {
    let n = seq.len();
    let mut amplitudes = Vec::with_capacity(n + 1);
    let mut a = init.amplitude(k);
    amplitudes.push(a);
    let mut da: Vec<ProjectiveAmplitude> = Vec::with_capacity(n);
    for g in &seq.gates {
        let u = g.map(k);
        for d in da.iter_mut() {
            *d = u.apply(*d);
        }
        a = u.apply(a);
        // dU/dt · a_prev = 2 N U a_prev = 2 N a
        let nmat = PairMap(g.kind.generator(k));
        let mut d = nmat.apply(a);
        d.num *= 2.0;
        d.den *= 2.0;
        da.push(d);
        amplitudes.push(a);
    }
    let den2 = a.den * a.den;
    let grad = da
        .iter()
        .map(|d| (d.num * a.den - a.num * d.den) / den2)
        .collect();
    (AmplitudeTrajectory { k, amplitudes }, grad)
}

/// Re-express an `h = 0` frame amplitude in the Bogoliubov frame of field `h`:
/// `f_proj = (iK + f)/(1 + iK f)` with `K = K_{h0}(k)`.
pub fn project(f: ProjectiveAmplitude, h: Field, k: f64) -> ProjectiveAmplitude {
    PairMap::basis_change(bogoliubov_half_angle(h.value(), 0.0, k)).apply(f)
}

/// Amplitude in the `h = ∞` frame, `g = (1 - iτ f)/(f - iτ)`, `τ = tan(k/2)`.
/// At `k = π` this is `g = f`.
pub fn g_transform(f: ProjectiveAmplitude, k: f64) -> ProjectiveAmplitude {
    PairMap::basis_change(bogoliubov_half_angle(f64::INFINITY, 0.0, k)).apply(f)
}

/// Amplitude in the `h = 0` frame at time `t` after preparing the ground state
/// at `h0` and evolving with the Hamiltonian at `h`.
pub fn quench_amplitude(h0: Field, h: Field, t: f64, k: f64) -> ProjectiveAmplitude {
    let into_h = PairMap::basis_change(bogoliubov_half_angle(h.value(), h0.value(), k));
    let back = PairMap::basis_change(bogoliubov_half_angle(0.0, h.value(), k));
    let mut a = into_h.apply(ProjectiveAmplitude::VACUUM);
    let phase = Complex64::from_polar(1.0, t * dispersion(h, k));
    a.den *= phase;
    a.num *= phase.conj();
    back.apply(a)
}

/// Quench amplitude in the frame of the final Hamiltonian,
/// `f_t = i K_{h h0} e^{-2 i t ε_h(k)}`.
pub fn quench_amplitude_eigenframe(h0: Field, h: Field, t: f64, k: f64) -> ProjectiveAmplitude {
    let kk = bogoliubov_half_angle(h.value(), h0.value(), k).tan();
    ProjectiveAmplitude::from_value(
        I * kk * Complex64::from_polar(1.0, -2.0 * t * dispersion(h, k)),
    )
}

/// Gate sequence with the angle trigonometry hoisted out of momentum loops.
#[derive(Debug, Clone)]
pub(crate) struct PreparedSequence {
    kinds: Vec<GateKind>,
    sc: Vec<(f64, f64)>,
}

impl PreparedSequence {
    pub(crate) fn new(seq: &GateSequence) -> Self {
        Self {
            kinds: seq.gates.iter().map(|g| g.kind).collect(),
            sc: seq
                .gates
                .iter()
                .map(|g| (2.0 * g.angle).sin_cos())
                .collect(),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.kinds.len()
    }

    /// Layer maps at momentum `k`.
    pub(crate) fn maps(&self, k: f64) -> Vec<(PairMap, [[Complex64; 2]; 2])> {
        let gens = [
            GateKind::X.generator(k),
            GateKind::ZZ.generator(k),
            GateKind::YY.generator(k),
        ];
        self.kinds
            .iter()
            .zip(&self.sc)
            .map(|(kind, &(s, c))| {
                let n = gens[match kind {
                    GateKind::X => 0,
                    GateKind::ZZ => 1,
                    GateKind::YY => 2,
                }];
                (PairMap::rotation_sc(n, s, c), n)
            })
            .collect()
    }

    pub(crate) fn evolve(&self, init: InitialState, k: f64) -> ProjectiveAmplitude {
        self.maps(k)
            .iter()
            .fold(init.amplitude(k), |a, (m, _)| m.apply(a))
    }
}

/// A family of `h = 0` frame amplitudes over `k ∈ [0, π]` evolved from `|0…0⟩`
/// or `|+…+⟩`, consumed by the thermodynamic-limit observables.
pub trait AmplitudeSource: Sync {
    fn amplitude(&self, k: f64) -> ProjectiveAmplitude;

    /// Total `ZZ`/`YY` angle (time, for a quench) entering the sector phase.
    fn bond_sum(&self) -> f64;

    /// Whether the state has an odd-parity component.
    fn has_odd_sector(&self) -> bool;
}

/// Output amplitude of a gate sequence.
#[derive(Debug, Clone)]
pub struct CircuitAmplitude<'a> {
    pub seq: &'a GateSequence,
    pub init: InitialState,
}

impl<'a> CircuitAmplitude<'a> {
    pub fn new(seq: &'a GateSequence, init: InitialState) -> Self {
        Self { seq, init }
    }
}

impl AmplitudeSource for CircuitAmplitude<'_> {
    fn amplitude(&self, k: f64) -> ProjectiveAmplitude {
        evolve_final(self.seq, self.init, k)
    }

    fn bond_sum(&self) -> f64 {
        self.seq.bond_angle_sum()
    }

    fn has_odd_sector(&self) -> bool {
        self.init.has_odd_sector()
    }
}

/// Ground state at `h0` evolved for time `t` with the Hamiltonian at `h`.
#[derive(Debug, Clone, Copy)]
pub struct QuenchAmplitude {
    pub h0: Field,
    pub h: Field,
    pub t: f64,
}

impl AmplitudeSource for QuenchAmplitude {
    fn amplitude(&self, k: f64) -> ProjectiveAmplitude {
        quench_amplitude(self.h0, self.h, self.t, k)
    }

    fn bond_sum(&self) -> f64 {
        self.t
    }

    /// Only an ordered initial state has a degenerate odd partner.
    fn has_odd_sector(&self) -> bool {
        self.h0.value() < 1.0
    }
}

/// Continuous branch of `arg den(k)` along `k` from `π` down to `k_min`,
/// refined by bisection wherever the principal value jumps by more than 0.5.
/// Returns `(arg den(k_min), arg den(π))`.
pub fn unwrapped_den_phase<F>(amp: F, k_min: f64) -> (f64, f64)
where
    F: Fn(f64) -> ProjectiveAmplitude,
{
    let coarse = 512;
    let start = amp(PI).den.arg();
    let mut phase = start;
    let mut k_prev = PI;
    let mut arg_prev = start;
    let step_arg = |from: f64, to: f64| {
        let mut d = to - from;
        d -= 2.0 * PI * (d / (2.0 * PI)).round();
        d
    };
    // Geometric spacing near k_min resolves fast phase winding close to 0.
    let targets: Vec<f64> = (1..=coarse)
        .map(|i| {
            let s = i as f64 / coarse as f64;
            PI * (k_min / PI).powf(s)
        })
        .collect();
    for &k_target in &targets {
        let mut stack = vec![k_target];
        while let Some(k) = stack.pop() {
            let a = amp(k).den.arg();
            let d = step_arg(arg_prev, a);
            if d.abs() > 0.5 && (k_prev - k).abs() > 1e-13 {
                stack.push(k);
                stack.push(0.5 * (k + k_prev));
                continue;
            }
            phase += d;
            arg_prev = a;
            k_prev = k;
        }
    }
    (phase, start)
}

/// Relative phase `Φ` between the odd- and even-sector vacuum amplitudes in the
/// thermodynamic limit, for an amplitude source evolving from `|0…0⟩` in the
/// `h = 0` frame: `Φ = ½[arg den(0⁺) + arg den(π)] - 2·bond_sum`.
pub fn sector_phase<F>(amp: F, bond_sum: f64) -> f64
where
    F: Fn(f64) -> ProjectiveAmplitude,
{
    let (a0, api) = unwrapped_den_phase(amp, 1e-6);
    0.5 * (a0 + api) - 2.0 * bond_sum
}

/// Frame angle used by [`project`] at the endpoints `k ∈ {0, π}`.
pub fn endpoint_angle(h: f64, k: f64) -> f64 {
    bogoliubov_angle_limit(h, k)
}
