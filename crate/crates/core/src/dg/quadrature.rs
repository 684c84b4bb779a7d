//! Gauss rules on the unit interval, reference square, and reference triangle.

use crate::mesh::ElementKind;

/// Gauss–Legendre nodes and weights on [0, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        // Newton on P_n starting from the Chebyshev-like guess
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { t } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (t * p - pm1) / (t * t - 1.0);
            let dt = p / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        x[n - 1 - i] = 0.5 * (1.0 + t);
        w[n - 1 - i] = 1.0 / ((1.0 - t * t) * dp * dp);
    }
    (x, w)
}

#[derive(Clone, Debug)]
pub struct Rule2d {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl Rule2d {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Tensor Gauss rule on [0,1]² exact for polynomials of degree `degree` in each variable.
pub fn square_rule(degree: usize) -> Rule2d {
    let n = degree / 2 + 1;
    let (x, w) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            points.push([x[i], x[j]]);
            weights.push(w[i] * w[j]);
        }
    }
    Rule2d { points, weights }
}

/// Collapsed (Duffy) Gauss rule on the reference triangle, exact for total degree `degree`.
pub fn triangle_rule(degree: usize) -> Rule2d {
    // the collapse adds one degree in the second variable
    let n = (degree + 1) / 2 + 1;
    let (x, w) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let eta = x[j];
            points.push([x[i] * (1.0 - eta), eta]);
            weights.push(w[i] * w[j] * (1.0 - eta));
        }
    }
    Rule2d { points, weights }
}

pub fn element_rule(kind: ElementKind, degree: usize) -> Rule2d {
    match kind {
        ElementKind::Triangle => triangle_rule(degree),
        ElementKind::Quad => square_rule(degree),
    }
}

/// Gauss rule on [0, 1] exact for degree `degree`.
pub fn edge_rule(degree: usize) -> (Vec<f64>, Vec<f64>) {
    gauss_legendre(degree / 2 + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beta(a: u32, b: u32) -> f64 {
        // ∫_T ξ^a η^b = a! b! / (a+b+2)!
        let f = |n: u32| (1..=n).map(|k| k as f64).product::<f64>();
        f(a) * f(b) / f(a + b + 2)
    }

    #[test]
    fn interval_exactness() {
        for n in 1..8 {
            let (x, w) = gauss_legendre(n);
            for p in 0..(2 * n) as i32 {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum();
                assert!((q - 1.0 / (p + 1) as f64).abs() < 1e-14, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn triangle_exactness() {
        for d in 0..=12 {
            let r = triangle_rule(d);
            for a in 0..=d as u32 {
                for b in 0..=(d as u32 - a) {
                    let q: f64 = r.points.iter().zip(&r.weights).map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32)).sum();
                    assert!((q - beta(a, b)).abs() < 1e-14, "d={d} a={a} b={b}");
                }
            }
        }
    }

    #[test]
    fn square_exactness() {
        for d in 0..=12 {
            let r = square_rule(d);
            for a in 0..=d as i32 {
                for b in 0..=d as i32 {
                    let q: f64 = r.points.iter().zip(&r.weights).map(|(p, w)| w * p[0].powi(a) * p[1].powi(b)).sum();
                    assert!((q - 1.0 / ((a + 1) * (b + 1)) as f64).abs() < 1e-14);
                }
            }
        }
    }
}
