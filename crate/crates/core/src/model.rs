//! Transverse field Ising chain `H(h) = -Σ Z_j Z_{j+1} - h Σ X_j` with periodic
//! boundary conditions: single-particle dispersion, Bogoliubov angles and the
//! momentum quantisations of its two fermion-parity sectors.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// Dimensionless transverse field `h >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Field(f64);

impl Field {
    pub fn new(h: f64) -> Result<Self> {
        if h.is_finite() && h >= 0.0 {
            Ok(Self(h))
        } else {
            Err(Error::InvalidField(h))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Fermion-parity sector of the Jordan–Wigner fermions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sector {
    /// Antiperiodic momenta `2π(n + 1/2)/L` (even fermion number).
    NeveuSchwarz,
    /// Periodic momenta `2πn/L` (odd fermion number).
    Ramond,
    /// Gauss–Legendre nodes on `[0, π]` standing in for the thermodynamic limit.
    Continuum,
}

/// Momenta of one sector, with quadrature weights for the continuum grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumGrid {
    pub sector: Sector,
    /// `L` for the finite sectors, node count for the continuum.
    pub size: usize,
    pub momenta: Vec<f64>,
    /// Empty for finite sectors.
    pub weights: Vec<f64>,
}

impl MomentumGrid {
    pub fn neveu_schwarz(l: usize) -> Result<Self> {
        check_size(l)?;
        let lf = l as f64;
        let half = (l / 2) as i64;
        let momenta = (-half..half)
            .map(|n| 2.0 * PI * (n as f64 + 0.5) / lf)
            .collect();
        Ok(Self {
            sector: Sector::NeveuSchwarz,
            size: l,
            momenta,
            weights: Vec::new(),
        })
    }

    pub fn ramond(l: usize) -> Result<Self> {
        check_size(l)?;
        let lf = l as f64;
        let half = (l / 2) as i64;
        let momenta = (-half..half).map(|n| 2.0 * PI * n as f64 / lf).collect();
        Ok(Self {
            sector: Sector::Ramond,
            size: l,
            momenta,
            weights: Vec::new(),
        })
    }

    /// Gauss–Legendre grid on `[0, π]`; weights sum to `π`.
    pub fn continuum(nodes: usize) -> Self {
        let rule = GaussLegendre::on_interval(nodes, 0.0, PI);
        Self {
            sector: Sector::Continuum,
            size: nodes,
            momenta: rule.nodes,
            weights: rule.weights,
        }
    }

    /// Strictly positive momenta (`NS₊`, `R₊`); `π` never occurs in either set.
    pub fn positive(&self) -> Vec<f64> {
        self.momenta.iter().copied().filter(|&k| k > 0.0).collect()
    }
}

fn check_size(l: usize) -> Result<()> {
    if l >= 2 && l % 2 == 0 {
        Ok(())
    } else {
        Err(Error::InvalidSize(l))
    }
}

/// Momenta `k ∈ NS₊` for size `l`.
pub(crate) fn ns_positive(l: usize) -> Vec<f64> {
    let lf = l as f64;
    (0..l / 2)
        .map(|n| 2.0 * PI * (n as f64 + 0.5) / lf)
        .collect()
}

/// Momenta `k ∈ R₊` for size `l`.
pub(crate) fn r_positive(l: usize) -> Vec<f64> {
    let lf = l as f64;
    (1..l / 2).map(|n| 2.0 * PI * n as f64 / lf).collect()
}

/// Single-particle energy. At `k = 0` the signed value `-2(1-h)` is returned,
/// which is the energy carried by the always-occupied Ramond zero mode.
pub fn dispersion(h: Field, k: f64) -> f64 {
    let h = h.value();
    if k == 0.0 {
        -2.0 * (1.0 - h)
    } else {
        smooth_dispersion(h, k)
    }
}

pub(crate) fn smooth_dispersion(h: f64, k: f64) -> f64 {
    2.0 * (1.0 + h * h - 2.0 * h * k.cos()).max(0.0).sqrt()
}

/// Phase `θ_k^h` of `h - e^{ik}`. `h = ∞` (the pure transverse-field frame) is
/// accepted and gives 0. On `(0, π)` the value lies in `(-π, 0)` and is
/// continuous in `k`.
pub fn bogoliubov_angle(h: f64, k: f64) -> f64 {
    if h.is_infinite() {
        0.0
    } else {
        (-k.sin()).atan2(h - k.cos())
    }
}

/// Continuous extension of `θ_k^h` to the endpoints `k = 0⁺` and `k = π`.
pub fn bogoliubov_angle_limit(h: f64, k: f64) -> f64 {
    if k <= 0.0 {
        if h.is_infinite() || h > 1.0 {
            0.0
        } else if h == 1.0 {
            -PI / 2.0
        } else {
            -PI
        }
    } else if k >= PI {
        0.0
    } else {
        bogoliubov_angle(h, k)
    }
}

/// Half the rotation angle `(θ_k^{to} - θ_k^{from}) / 2` relating the Bogoliubov
/// fermions at two fields. Continuous on `[0, π]` with explicit endpoint limits.
pub fn bogoliubov_half_angle(h_to: f64, h_from: f64, k: f64) -> f64 {
    let (a, b) = if k <= 0.0 || k >= PI {
        (
            bogoliubov_angle_limit(h_to, k),
            bogoliubov_angle_limit(h_from, k),
        )
    } else {
        (bogoliubov_angle(h_to, k), bogoliubov_angle(h_from, k))
    };
    0.5 * (a - b)
}

/// `K_{to,from}(k) = tan((θ^{to} - θ^{from})/2)` for `k ∈ (0, π)`.
pub fn bogoliubov_kernel(h_to: Field, h_from: Field, k: f64) -> Result<f64> {
    let half = bogoliubov_half_angle(h_to.value(), h_from.value(), k);
    if half.cos().abs() < 1e-14 {
        return Err(Error::KernelPole(k));
    }
    Ok(half.tan())
}

/// `F_∞(h) = -(1/2π) ∫_0^π ε_h(k) dk` with a 256-node Gauss–Legendre rule.
pub fn ground_energy_density_inf(h: Field) -> f64 {
    ground_energy_density_with_nodes(h, 256)
}

pub(crate) fn ground_energy_density_with_nodes(h: Field, nodes: usize) -> f64 {
    let h = h.value();
    let rule = GaussLegendre::on_interval(nodes, 0.0, PI);
    -rule.integrate(|k| smooth_dispersion(h, k)) / (2.0 * PI)
}

/// Thermodynamic-limit ground-state order parameter `(1-h²)^{1/8}` (0 for `h > 1`).
pub fn exact_mz_reference(h: Field) -> f64 {
    let h = h.value();
    if h <= 1.0 {
        (1.0 - h * h).powf(0.125)
    } else {
        0.0
    }
}

/// Thermodynamic-limit ground-state `⟨X⟩ = -∂F_∞/∂h`.
pub fn exact_mx_reference(h: Field) -> f64 {
    let h = h.value();
    let rule = GaussLegendre::on_interval(512, 0.0, PI);
    // ∂ε/∂h = 2 (h - cos k)/sqrt(1 + h² - 2h cos k)
    rule.integrate(|k| {
        let e = (1.0 + h * h - 2.0 * h * k.cos()).sqrt();
        if e == 0.0 {
            0.0
        } else {
            2.0 * (h - k.cos()) / e
        }
    }) / (2.0 * PI)
}
