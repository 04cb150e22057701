//! Gauss–Legendre rules.

use std::f64::consts::PI;

/// Nodes and weights of an `n`-point Gauss–Legendre rule mapped to `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Rule on the reference interval `[-1, 1]`, nodes in increasing order.
    pub fn reference(n: usize) -> Self {
        assert!(n > 0, "a quadrature rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let theta = PI * (i as f64 + 0.75) / (n as f64 + 0.5);
            let mut x = theta.cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d.is_finite() {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[n - 1 - i] = x;
            nodes[i] = -x;
            weights[n - 1 - i] = w;
            weights[i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn on_interval(n: usize, a: f64, b: f64) -> Self {
        let reference = Self::reference(n);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        Self {
            nodes: reference.nodes.iter().map(|x| mid + half * x).collect(),
            weights: reference.weights.iter().map(|w| half * w).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_polynomials_below_degree_2n() {
        for n in [1usize, 2, 5, 16, 33] {
            let rule = GaussLegendre::on_interval(n, 0.0, PI);
            for deg in 0..(2 * n).min(20) {
                let got = rule.integrate(|x| x.powi(deg as i32));
                let exact = PI.powi(deg as i32 + 1) / (deg as f64 + 1.0);
                assert!(
                    (got - exact).abs() < 1e-12 * exact.max(1.0),
                    "n={n} deg={deg}: {got} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn weights_sum_to_interval_length_for_large_rules() {
        for n in [200usize, 512, 1600] {
            let rule = GaussLegendre::on_interval(n, 0.0, PI);
            let s: f64 = rule.weights.iter().sum();
            assert!((s - PI).abs() < 1e-12, "n={n}: {s}");
            assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
            assert!(rule.nodes[0] > 0.0 && rule.nodes[n - 1] < PI);
        }
    }

    #[test]
    fn smooth_integrand_converges() {
        let rule = GaussLegendre::on_interval(64, 0.0, PI);
        let got = rule.integrate(|k| (3.0 * k).cos() * k.exp());
        // ∫_0^π e^k cos 3k dk = (e^π cos 3π + 3 e^π sin 3π - 1)/10
        let exact = (-(PI.exp()) - 1.0) / 10.0;
        assert!((got - exact).abs() < 1e-12);
    }
}
