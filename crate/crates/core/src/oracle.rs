//! Brute-force reference: dense statevector simulation of the circuit and
//! Lanczos ground states of the periodic chain, for small `L`.
//!
//! Basis index bit `j` is qubit `j`; bit value 0 is `Z = +1`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::coherent::{Gate, GateKind, GateSequence, InitialState};
use crate::error::{Error, Result};

pub const MAX_STATEVECTOR_SITES: usize = 20;
pub const MAX_EIGEN_SITES: usize = 14;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    pub sites: usize,
    pub amps: Vec<Complex64>,
}

impl DenseState {
    pub fn basis_zero(sites: usize) -> Result<Self> {
        check_sites(sites, MAX_STATEVECTOR_SITES)?;
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << sites];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { sites, amps })
    }

    pub fn all_plus(sites: usize) -> Result<Self> {
        check_sites(sites, MAX_STATEVECTOR_SITES)?;
        let n = 1usize << sites;
        let a = Complex64::new(1.0 / (n as f64).sqrt(), 0.0);
        Ok(Self {
            sites,
            amps: vec![a; n],
        })
    }

    pub fn initial(sites: usize, init: InitialState) -> Result<Self> {
        match init {
            InitialState::AllZero => Self::basis_zero(sites),
            InitialState::AllPlus => Self::all_plus(sites),
        }
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn apply(&mut self, gate: &Gate) {
        match gate.kind {
            GateKind::ZZ => {
                let bonds = bond_sums(self.sites);
                for (a, &b) in self.amps.iter_mut().zip(&bonds) {
                    *a *= Complex64::from_polar(1.0, gate.angle * b as f64);
                }
            }
            GateKind::X => {
                let (s, c) = gate.angle.sin_cos();
                for j in 0..self.sites {
                    let bit = 1usize << j;
                    for i in 0..self.amps.len() {
                        if i & bit == 0 {
                            let a0 = self.amps[i];
                            let a1 = self.amps[i | bit];
                            self.amps[i] = c * a0 + Complex64::new(0.0, s) * a1;
                            self.amps[i | bit] = c * a1 + Complex64::new(0.0, s) * a0;
                        }
                    }
                }
            }
            GateKind::YY => {
                let (s, c) = gate.angle.sin_cos();
                let l = self.sites;
                for j in 0..l {
                    let jj = (j + 1) % l;
                    let mask = (1usize << j) | (1usize << jj);
                    let old = self.amps.clone();
                    for (i, a) in self.amps.iter_mut().enumerate() {
                        // Y_j Y_jj |b⟩ = -(-1)^{b_j + b_jj} |b ⊕ mask⟩
                        let src = i ^ mask;
                        let parity = ((src >> j) & 1) + ((src >> jj) & 1);
                        let sign = if parity % 2 == 0 { -1.0 } else { 1.0 };
                        *a = c * old[i] + Complex64::new(0.0, s * sign) * old[src];
                    }
                }
            }
        }
    }

    fn expect_x(&self, j: usize) -> f64 {
        let bit = 1usize << j;
        self.amps
            .iter()
            .enumerate()
            .map(|(i, a)| (a.conj() * self.amps[i ^ bit]).re)
            .sum()
    }

    fn expect_xx(&self, a: usize, b: usize) -> f64 {
        let mask = (1usize << a) ^ (1usize << b);
        self.amps
            .iter()
            .enumerate()
            .map(|(i, x)| (x.conj() * self.amps[i ^ mask]).re)
            .sum()
    }

    fn expect_z(&self, j: usize) -> f64 {
        self.amps
            .iter()
            .enumerate()
            .map(|(i, a)| {
                if (i >> j) & 1 == 0 {
                    a.norm_sqr()
                } else {
                    -a.norm_sqr()
                }
            })
            .sum()
    }

    /// `⟨Σ_j Z_j Z_{j+1}⟩`.
    fn expect_bonds(&self) -> f64 {
        let bonds = bond_sums(self.sites);
        self.amps
            .iter()
            .zip(&bonds)
            .map(|(a, &b)| a.norm_sqr() * b as f64)
            .sum()
    }

    /// Expectation of a single-site or two-site observable anchored at `site`.
    pub fn expectation_at(&self, observable: Observable, site: usize) -> f64 {
        let l = self.sites;
        match observable {
            Observable::Energy(h) => {
                -self.expect_bonds() - h * (0..l).map(|j| self.expect_x(j)).sum::<f64>()
            }
            Observable::Z => self.expect_z(site % l),
            Observable::X => self.expect_x(site % l),
            Observable::XX(d) => self.expect_xx(site % l, (site + d) % l),
        }
    }
}

fn check_sites(sites: usize, max: usize) -> Result<()> {
    if sites == 0 {
        Err(Error::InvalidSize(0))
    } else if sites > max {
        Err(Error::OracleTooLarge { got: sites, max })
    } else {
        Ok(())
    }
}

/// `Σ_j z_j z_{j+1}` for every basis state, computed once per call.
fn bond_sums(sites: usize) -> Vec<i32> {
    (0..1usize << sites)
        .map(|i| {
            let rotated = ((i >> 1) | ((i & 1) << (sites - 1))) & ((1 << sites) - 1);
            let differ = (i ^ rotated).count_ones() as i32;
            sites as i32 - 2 * differ
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observable {
    /// Total energy `⟨H(h)⟩`.
    Energy(f64),
    Z,
    X,
    /// `⟨X_j X_{j+ℓ}⟩`, not connected.
    XX(usize),
}

/// Circuit state `seq |init⟩` on `sites` qubits.
pub fn simulate(sites: usize, seq: &GateSequence, init: InitialState) -> Result<DenseState> {
    let mut state = DenseState::initial(sites, init)?;
    for g in &seq.gates {
        state.apply(g);
    }
    Ok(state)
}

/// Expectation value; site observables are averaged over the chain.
pub fn expectation(state: &DenseState, observable: Observable) -> f64 {
    match observable {
        Observable::Energy(_) => state.expectation_at(observable, 0),
        _ => {
            let l = state.sites;
            (0..l)
                .map(|j| state.expectation_at(observable, j))
                .sum::<f64>()
                / l as f64
        }
    }
}

/// Lowest eigenpairs of the two `Π X_j` parity sectors.
#[derive(Debug, Clone)]
pub struct GroundState {
    pub sites: usize,
    pub field: f64,
    /// Lowest energy with `Π X = +1`; the global ground state.
    pub even_energy: f64,
    pub even: DenseState,
    /// Lowest energy with `Π X = -1`; degenerate with the even one for `h < 1`
    /// as `L → ∞`.
    pub odd_energy: f64,
    pub odd: DenseState,
}

impl GroundState {
    pub fn energy(&self) -> f64 {
        self.even_energy.min(self.odd_energy)
    }

    /// `(|even⟩ + |odd⟩)/√2` with the relative sign fixed by `⟨Z⟩ > 0`.
    pub fn symmetry_broken(&self) -> DenseState {
        let z = cross_z(&self.even, &self.odd);
        let sign = if z < 0.0 { -1.0 } else { 1.0 };
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let amps = self
            .even
            .amps
            .iter()
            .zip(&self.odd.amps)
            .map(|(e, o)| (e + o * sign) * r)
            .collect();
        DenseState {
            sites: self.sites,
            amps,
        }
    }
}

fn cross_z(a: &DenseState, b: &DenseState) -> f64 {
    a.amps
        .iter()
        .zip(&b.amps)
        .enumerate()
        .map(|(i, (x, y))| {
            let z = if i & 1 == 0 { 1.0 } else { -1.0 };
            (x.conj() * y).re * z
        })
        .sum()
}

/// Sector-resolved ground states of `H(h) = -Σ ZZ - h Σ X` by Lanczos.
pub fn ground_state(sites: usize, h: f64) -> Result<GroundState> {
    check_sites(sites, MAX_EIGEN_SITES)?;
    if sites < 2 {
        return Err(Error::InvalidSize(sites));
    }
    let op = IsingOperator::new(sites, h);
    let (even_energy, even) = lanczos_lowest(&op, 1.0);
    let (odd_energy, odd) = lanczos_lowest(&op, -1.0);
    let wrap = |v: Vec<f64>| DenseState {
        sites,
        amps: v.into_iter().map(Complex64::from).collect(),
    };
    Ok(GroundState {
        sites,
        field: h,
        even_energy,
        even: wrap(even),
        odd_energy,
        odd: wrap(odd),
    })
}

/// Full spectrum by dense diagonalisation, for cross-checks at `L ≤ 10`.
pub fn dense_spectrum(sites: usize, h: f64) -> Result<Vec<f64>> {
    check_sites(sites, 10)?;
    let op = IsingOperator::new(sites, h);
    let n = 1usize << sites;
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|x| *x = 0.0);
        e[j] = 1.0;
        op.apply(&e, &mut col);
        for i in 0..n {
            m[(i, j)] = col[i];
        }
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    Ok(ev)
}

struct IsingOperator {
    sites: usize,
    h: f64,
    bonds: Vec<i32>,
}

impl IsingOperator {
    fn new(sites: usize, h: f64) -> Self {
        Self {
            sites,
            h,
            bonds: bond_sums(sites),
        }
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = -(self.bonds[i] as f64) * v[i];
            for j in 0..self.sites {
                acc -= self.h * v[i ^ (1 << j)];
            }
            *o = acc;
        }
    }

    fn project_parity(&self, v: &mut [f64], parity: f64) {
        let all = v.len() - 1;
        for i in 0..v.len() {
            let j = i ^ all;
            if i < j {
                let a = 0.5 * (v[i] + parity * v[j]);
                v[i] = a;
                v[j] = parity * a;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    n
}

/// Lowest eigenpair in a parity sector: Lanczos with full reorthogonalisation,
/// restarted from the Ritz vector until the residual is below `1e-11`.
fn lanczos_lowest(op: &IsingOperator, parity: f64) -> (f64, Vec<f64>) {
    let n = 1usize << op.sites;
    let sector_dim = n / 2;
    let krylov = sector_dim.clamp(1, 120);
    // Deterministic start with overlap on every sector state.
    let mut start: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.1 * ((i as f64 * 0.618_033_988_75).fract() - 0.5))
        .collect();
    op.project_parity(&mut start, parity);
    normalize(&mut start);
    let mut best = (f64::INFINITY, start.clone());
    let mut w = vec![0.0; n];
    for _restart in 0..50 {
        let mut basis: Vec<Vec<f64>> = vec![start.clone()];
        let mut alpha = Vec::new();
        let mut beta = Vec::new();
        for m in 0..krylov {
            op.apply(&basis[m], &mut w);
            op.project_parity(&mut w, parity);
            let a = dot(&w, &basis[m]);
            alpha.push(a);
            for _ in 0..2 {
                for b in &basis {
                    let c = dot(&w, b);
                    w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                }
            }
            let bnorm = dot(&w, &w).sqrt();
            if m + 1 == krylov || bnorm < 1e-12 {
                break;
            }
            beta.push(bnorm);
            basis.push(w.iter().map(|x| x / bnorm).collect());
        }
        let k = alpha.len();
        let mut t = DMatrix::<f64>::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = alpha[i];
            if i + 1 < k {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let (imin, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty tridiagonal");
        let mut ritz = vec![0.0; n];
        for (i, b) in basis.iter().enumerate().take(k) {
            let c = eig.eigenvectors[(i, imin)];
            ritz.iter_mut().zip(b).for_each(|(x, y)| *x += c * y);
        }
        op.project_parity(&mut ritz, parity);
        normalize(&mut ritz);
        op.apply(&ritz, &mut w);
        let rq = dot(&ritz, &w);
        let resid = w
            .iter()
            .zip(&ritz)
            .map(|(a, b)| (a - rq * b).powi(2))
            .sum::<f64>()
            .sqrt();
        best = (rq, ritz.clone());
        if resid < 1e-11 * rq.abs().max(1.0) || k < krylov {
            break;
        }
        start = ritz;
    }
    // Fix the overall sign: first significant component positive.
    let pivot = best
        .1
        .iter()
        .copied()
        .find(|x| x.abs() > 1e-8)
        .unwrap_or(1.0);
    if pivot < 0.0 {
        best.1.iter_mut().for_each(|x| *x = -*x);
    }
    best
}

/// Strang-split real-time evolution `exp(-i H(h) t)`: half `ZZ` steps around a
/// full `X` step, `steps` times.
pub fn evolve_hamiltonian(state: &DenseState, h: f64, t: f64, steps: usize) -> DenseState {
    let mut out = state.clone();
    if steps == 0 || t == 0.0 {
        return out;
    }
    let dt = t / steps as f64;
    // exp(-iHt) = exp(i t Σ ZZ + i h t Σ X)
    out.apply(&Gate::new(GateKind::ZZ, 0.5 * dt));
    for s in 0..steps {
        out.apply(&Gate::new(GateKind::X, h * dt));
        let zz = if s + 1 == steps { 0.5 * dt } else { dt };
        out.apply(&Gate::new(GateKind::ZZ, zz));
    }
    out
}

/// `⟨Z⟩(t)` after preparing the symmetry-broken ground state at `h0` and
/// evolving with `H(h)`; time step `dt`.
pub fn quench_magnetization(
    sites: usize,
    h0: f64,
    h: f64,
    times: &[f64],
    dt: f64,
) -> Result<Vec<f64>> {
    let gs = ground_state(sites, h0)?;
    let mut state = gs.symmetry_broken();
    let mut now = 0.0;
    let mut out = Vec::with_capacity(times.len());
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut values = vec![0.0; times.len()];
    for idx in order {
        let target = times[idx];
        let span = target - now;
        if span > 0.0 {
            let steps = (span / dt).ceil() as usize;
            state = evolve_hamiltonian(&state, h, span, steps);
            now = target;
        }
        values[idx] = expectation(&state, Observable::Z);
    }
    out.extend(values);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherent::AngleSchedule;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn empty_circuit_is_basis_state() {
        let s = simulate(6, &GateSequence::default(), InitialState::AllZero).unwrap();
        assert_eq!(s.amps[0], Complex64::new(1.0, 0.0));
        assert_eq!(expectation(&s, Observable::Z), 1.0);
        assert_eq!(expectation(&s, Observable::X), 0.0);
        assert_abs_diff_eq!(
            expectation(&s, Observable::Energy(0.7)) / 6.0,
            -1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn plus_state_expectations() {
        let s = DenseState::all_plus(5).unwrap();
        assert_abs_diff_eq!(expectation(&s, Observable::X), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(expectation(&s, Observable::Z), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn quarter_period_angles_act_trivially() {
        // exp(iπ/2 ΣX) is the global spin flip, so an odd total of X quarter
        // turns lands on |1…1⟩.
        let even = AngleSchedule::new(vec![FRAC_PI_2, PI / 2.0], vec![3.0 * FRAC_PI_2, FRAC_PI_2]);
        let s = simulate(6, &even.to_sequence(), InitialState::AllZero).unwrap();
        assert_abs_diff_eq!(s.amps[0].norm(), 1.0, epsilon = 1e-13);
        let odd = AngleSchedule::new(vec![FRAC_PI_2, PI], vec![3.0 * FRAC_PI_2, FRAC_PI_2]);
        let s = simulate(6, &odd.to_sequence(), InitialState::AllZero).unwrap();
        assert_abs_diff_eq!(s.amps[63].norm(), 1.0, epsilon = 1e-13);
        let plus = simulate(6, &odd.to_sequence(), InitialState::AllPlus).unwrap();
        assert_abs_diff_eq!(
            plus.inner(&DenseState::all_plus(6).unwrap()).norm(),
            1.0,
            epsilon = 1e-13
        );
    }

    #[test]
    fn unitarity_and_translation_invariance() {
        let seq = GateSequence::new(vec![
            Gate::new(GateKind::X, 0.3),
            Gate::new(GateKind::ZZ, 0.7),
            Gate::new(GateKind::YY, 0.45),
            Gate::new(GateKind::X, 1.1),
        ]);
        for init in [InitialState::AllZero, InitialState::AllPlus] {
            let s = simulate(8, &seq, init).unwrap();
            assert_abs_diff_eq!(s.norm(), 1.0, epsilon = 1e-12);
            for obs in [Observable::Z, Observable::X, Observable::XX(2)] {
                let v0 = s.expectation_at(obs, 0);
                for j in 1..8 {
                    assert_abs_diff_eq!(s.expectation_at(obs, j), v0, epsilon = 1e-12);
                }
            }
            if init == InitialState::AllPlus {
                assert_abs_diff_eq!(expectation(&s, Observable::Z), 0.0, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn too_large_is_rejected() {
        assert!(matches!(
            simulate(21, &GateSequence::default(), InitialState::AllZero),
            Err(Error::OracleTooLarge { got: 21, max: 20 })
        ));
        assert!(ground_state(15, 1.0).is_err());
    }

    #[test]
    fn classical_ground_state_is_degenerate() {
        let gs = ground_state(8, 0.0).unwrap();
        assert_abs_diff_eq!(gs.even_energy, -8.0, epsilon = 1e-10);
        assert_abs_diff_eq!(gs.odd_energy, -8.0, epsilon = 1e-10);
        let sb = gs.symmetry_broken();
        assert_abs_diff_eq!(expectation(&sb, Observable::Z), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn lanczos_agrees_with_dense_spectrum() {
        for &h in &[0.3, 1.0, 1.8] {
            for l in [4usize, 6, 8] {
                let gs = ground_state(l, h).unwrap();
                let spec = dense_spectrum(l, h).unwrap();
                assert_abs_diff_eq!(gs.energy(), spec[0], epsilon = 1e-10);
                assert!(gs.even_energy <= gs.odd_energy + 1e-12);
            }
        }
    }

    #[test]
    fn large_field_ground_state_is_polarised() {
        let gs = ground_state(8, 50.0).unwrap();
        let plus = DenseState::all_plus(8).unwrap();
        assert!(gs.even.inner(&plus).norm() > 0.999);
    }

    #[test]
    fn critical_energy_density_has_conformal_correction() {
        let l = 12;
        let gs = ground_state(l, 1.0).unwrap();
        let lf = l as f64;
        // v = 2, c = 1/2
        let estimate = -4.0 / PI - PI * 2.0 * 0.5 / (6.0 * lf * lf);
        assert!((gs.energy() / lf - estimate).abs() < 1e-3);
    }

    #[test]
    fn hamiltonian_evolution_preserves_energy() {
        let gs = ground_state(6, 0.3).unwrap();
        let s0 = gs.symmetry_broken();
        let e0 = expectation(&s0, Observable::Energy(0.9));
        let s1 = evolve_hamiltonian(&s0, 0.9, 1.0, 1000);
        assert_abs_diff_eq!(s1.norm(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            expectation(&s1, Observable::Energy(0.9)),
            e0,
            epsilon = 1e-5
        );
    }
}
