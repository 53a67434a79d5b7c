//! Gauss–Legendre rules, a product rule on the unit sphere, and the ball
//! quadrature built from them.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::Vec3;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
///
/// Newton iteration on the three-term recurrence; accurate to roundoff for
/// the orders used here (a few hundred at most).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre order must be positive");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
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
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
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

/// Gauss–Legendre rule mapped onto `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|&t| mid + half * t).collect(),
        w.iter().map(|&t| half * t).collect(),
    )
}

/// Integrate `f` over `[a, b]` with `panels` composite Gauss–Legendre panels
/// of `order` nodes each.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, order: usize, panels: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (x, w) = gauss_legendre(order);
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let mid = lo + 0.5 * width;
        let mut acc = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            acc += wi * f(mid + 0.5 * width * xi);
        }
        total += 0.5 * width * acc;
    }
    total
}

/// Product rule on the unit sphere: Gauss–Legendre in `cos θ` times the
/// trapezoidal rule in `φ`. Exact for spherical harmonics of degree up to
/// the declared order.
#[derive(Debug, Clone)]
pub struct SphereRule {
    order: usize,
    nodes: Vec<Vec3>,
    /// Fractions of the total solid angle; they sum to one.
    weights: Vec<f64>,
}

impl SphereRule {
    pub fn new(order: usize) -> Result<Self> {
        if order < 1 {
            return Err(Error::param("sphere rule order must be >= 1"));
        }
        let n_theta = (order + 2) / 2;
        let n_phi = order + 1;
        let (mu, wmu) = gauss_legendre(n_theta);
        let mut nodes = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        for (m, wm) in mu.iter().zip(&wmu) {
            let s = (1.0 - m * m).max(0.0).sqrt();
            for j in 0..n_phi {
                let phi = 2.0 * PI * (j as f64 + 0.5) / n_phi as f64;
                nodes.push([s * phi.cos(), s * phi.sin(), *m]);
                weights.push(0.5 * wm / n_phi as f64);
            }
        }
        Ok(SphereRule {
            order,
            nodes,
            weights,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Average of `f` over the unit sphere.
    pub fn mean<F: Fn(Vec3) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(n, w)| w * f(*n))
            .sum()
    }
}

/// Tensor rule on a ball (or spherical shell) about the origin.
#[derive(Debug, Clone)]
pub struct BallQuadrature {
    pub radial_nodes: Vec<f64>,
    /// Radial weights including the `r²` Jacobian.
    pub radial_weights: Vec<f64>,
    pub sphere: SphereRule,
}

impl BallQuadrature {
    pub fn new(radius: f64, radial_order: usize, sphere_order: usize) -> Result<Self> {
        Self::shell(0.0, radius, radial_order, sphere_order)
    }

    /// Rule over `inner < |y| < outer`.
    pub fn shell(inner: f64, outer: f64, radial_order: usize, sphere_order: usize) -> Result<Self> {
        if radial_order < 1 {
            return Err(Error::param("radial order must be >= 1"));
        }
        if !(inner >= 0.0 && outer > inner) {
            return Err(Error::param(format!(
                "shell radii must satisfy 0 <= inner < outer, got [{inner}, {outer}]"
            )));
        }
        let sphere = SphereRule::new(sphere_order)?;
        let (r, w) = gauss_legendre_on(radial_order, inner, outer);
        let radial_weights = r.iter().zip(&w).map(|(r, w)| w * r * r).collect();
        Ok(BallQuadrature {
            radial_nodes: r,
            radial_weights,
            sphere,
        })
    }

    pub fn node_count(&self) -> usize {
        self.radial_nodes.len() * self.sphere.len()
    }

    pub fn integrate<F: Fn(Vec3) -> f64>(&self, f: F) -> f64 {
        let mut total = 0.0;
        for (r, wr) in self.radial_nodes.iter().zip(&self.radial_weights) {
            let shell: f64 = self
                .sphere
                .nodes()
                .iter()
                .zip(self.sphere.weights())
                .map(|(n, wn)| wn * f([r * n[0], r * n[1], r * n[2]]))
                .sum();
            total += wr * 4.0 * PI * shell;
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn double_factorial(n: i64) -> f64 {
        if n <= 0 {
            1.0
        } else {
            (n as f64) * double_factorial(n - 2)
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(7);
        for deg in 0..=13 {
            let num: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((num - exact).abs() < 1e-14, "deg {deg}: {num} vs {exact}");
        }
        assert!(w.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn sphere_rule_is_exact_to_declared_order() {
        for order in [1usize, 5, 17, 30] {
            let rule = SphereRule::new(order).unwrap();
            assert!(rule.weights().iter().all(|&w| w > 0.0));
            for a in 0..=order {
                for b in 0..=(order - a) {
                    for c in 0..=(order - a - b) {
                        let num = rule.mean(|n| n[0].powi(a as i32) * n[1].powi(b as i32) * n[2].powi(c as i32));
                        let exact = if a % 2 == 1 || b % 2 == 1 || c % 2 == 1 {
                            0.0
                        } else {
                            double_factorial(a as i64 - 1) * double_factorial(b as i64 - 1) * double_factorial(c as i64 - 1)
                                / double_factorial((a + b + c) as i64 + 1)
                        };
                        assert!((num - exact).abs() < 1e-13, "order {order} x^{a} y^{b} z^{c}: {num} vs {exact}");
                    }
                }
            }
        }
    }

    #[test]
    fn ball_volume_and_moments() {
        let q = BallQuadrature::new(1.0, 4, 3).unwrap();
        let vol = q.integrate(|_| 1.0);
        assert!((vol / (4.0 * PI / 3.0) - 1.0).abs() < 1e-12);
        let second = q.integrate(|y| y[0] * y[0] + y[1] * y[1] + y[2] * y[2]);
        assert!((second / (4.0 * PI / 5.0) - 1.0).abs() < 1e-10);
        let q2 = BallQuadrature::new(2.0, 4, 3).unwrap();
        let newton = q2.integrate(|y| 1.0 / (4.0 * PI * (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt()));
        assert!((newton / 2.0 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_orders() {
        assert!(BallQuadrature::new(1.0, 0, 3).is_err());
        assert!(SphereRule::new(0).is_err());
    }
}
