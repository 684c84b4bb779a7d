//! Target metrics and analytic immersions.

use std::fmt;
use std::sync::Arc;

use crate::error::{LdgError, Result};

/// Symmetric 2×2 matrix `[[a11, a12], [a12, a22]]`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Sym2 {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

impl Sym2 {
    pub const IDENTITY: Sym2 = Sym2 { a11: 1.0, a12: 0.0, a22: 1.0 };

    pub fn new(a11: f64, a12: f64, a22: f64) -> Self {
        Sym2 { a11, a12, a22 }
    }

    pub fn diag(a: f64, b: f64) -> Self {
        Sym2 { a11: a, a12: 0.0, a22: b }
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a12
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let m = 0.5 * self.trace();
        let r = (0.25 * (self.a11 - self.a22).powi(2) + self.a12 * self.a12).sqrt();
        m - r
    }

    pub fn inverse(&self) -> Sym2 {
        let d = self.det();
        Sym2 { a11: self.a22 / d, a12: -self.a12 / d, a22: self.a11 / d }
    }

    /// Principal square root of an SPD matrix: `(A + √det A · I) / √(tr A + 2√det A)`.
    pub fn sqrt(&self) -> Sym2 {
        let s = self.det().sqrt();
        let t = (self.trace() + 2.0 * s).sqrt();
        Sym2 { a11: (self.a11 + s) / t, a12: self.a12 / t, a22: (self.a22 + s) / t }
    }

    pub fn inv_sqrt(&self) -> Sym2 {
        self.sqrt().inverse()
    }

    pub fn to_array(&self) -> [[f64; 2]; 2] {
        [[self.a11, self.a12], [self.a12, self.a22]]
    }

    pub fn mul(&self, o: &Sym2) -> [[f64; 2]; 2] {
        let a = self.to_array();
        let b = o.to_array();
        let mut c = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        c
    }

    pub fn frobenius(&self) -> f64 {
        (self.a11 * self.a11 + 2.0 * self.a12 * self.a12 + self.a22 * self.a22).sqrt()
    }
}

pub type Point = [f64; 2];

/// Smooth map `Ω → ℝ³` with first and second derivatives.
#[derive(Clone)]
pub struct Immersion {
    pub name: String,
    pub value: Arc<dyn Fn(Point) -> [f64; 3] + Send + Sync>,
    /// `jac[m][i] = ∂_i y_m`.
    pub jacobian: Arc<dyn Fn(Point) -> [[f64; 2]; 3] + Send + Sync>,
    /// `hess[m] = (∂₁₁ y_m, ∂₁₂ y_m, ∂₂₂ y_m)`.
    pub hessian: Arc<dyn Fn(Point) -> [[f64; 3]; 3] + Send + Sync>,
}

impl fmt::Debug for Immersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Immersion({})", self.name)
    }
}

impl Immersion {
    /// First fundamental form `∇yᵀ∇y`.
    pub fn first_form(&self, x: Point) -> Sym2 {
        let j = (self.jacobian)(x);
        let dot = |a: usize, b: usize| (0..3).map(|m| j[m][a] * j[m][b]).sum::<f64>();
        Sym2::new(dot(0, 0), dot(0, 1), dot(1, 1))
    }

    /// Unit normal `∂₁y × ∂₂y / |∂₁y × ∂₂y|`.
    pub fn normal(&self, x: Point) -> [f64; 3] {
        let j = (self.jacobian)(x);
        let a = [j[0][0], j[1][0], j[2][0]];
        let b = [j[0][1], j[1][1], j[2][1]];
        let c = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
        let n = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
        [c[0] / n, c[1] / n, c[2] / n]
    }

    /// Second fundamental form `(∂_ij y · ν)`.
    pub fn second_form(&self, x: Point) -> Sym2 {
        let h = (self.hessian)(x);
        let nu = self.normal(x);
        let c = |i: usize| (0..3).map(|m| h[m][i] * nu[m]).sum::<f64>();
        Sym2::new(c(0), c(1), c(2))
    }

    pub fn new(
        name: &str,
        value: impl Fn(Point) -> [f64; 3] + Send + Sync + 'static,
        jacobian: impl Fn(Point) -> [[f64; 2]; 3] + Send + Sync + 'static,
        hessian: impl Fn(Point) -> [[f64; 3]; 3] + Send + Sync + 'static,
    ) -> Immersion {
        Immersion { name: name.into(), value: Arc::new(value), jacobian: Arc::new(jacobian), hessian: Arc::new(hessian) }
    }

    pub fn plane() -> Immersion {
        Immersion {
            name: "plane".into(),
            value: Arc::new(|x| [x[0], x[1], 0.0]),
            jacobian: Arc::new(|_| [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]),
            hessian: Arc::new(|_| [[0.0; 3]; 3]),
        }
    }

    /// `(sin x₁, x₂, cos x₁)`.
    pub fn cylinder() -> Immersion {
        Immersion {
            name: "cylinder".into(),
            value: Arc::new(|x| [x[0].sin(), x[1], x[0].cos()]),
            jacobian: Arc::new(|x| [[x[0].cos(), 0.0], [0.0, 1.0], [-x[0].sin(), 0.0]]),
            hessian: Arc::new(|x| [[-x[0].sin(), 0.0, 0.0], [0.0; 3], [-x[0].cos(), 0.0, 0.0]]),
        }
    }

    /// `(cosh x₁ cos x₂, cosh x₁ sin x₂, x₁)`, conformal with factor `cosh² x₁`.
    pub fn catenoid() -> Immersion {
        Immersion {
            name: "catenoid".into(),
            value: Arc::new(|x| [x[0].cosh() * x[1].cos(), x[0].cosh() * x[1].sin(), x[0]]),
            jacobian: Arc::new(|x| {
                let (ch, sh, c, s) = (x[0].cosh(), x[0].sinh(), x[1].cos(), x[1].sin());
                [[sh * c, -ch * s], [sh * s, ch * c], [1.0, 0.0]]
            }),
            hessian: Arc::new(|x| {
                let (ch, sh, c, s) = (x[0].cosh(), x[0].sinh(), x[1].cos(), x[1].sin());
                [[ch * c, -sh * s, -ch * c], [ch * s, sh * c, -ch * s], [0.0; 3]]
            }),
        }
    }
}

/// Metric `x ↦ g(x)` with an optional immersion realizing it.
#[derive(Clone)]
pub struct MetricField {
    pub name: String,
    pub g: Arc<dyn Fn(Point) -> Sym2 + Send + Sync>,
    pub immersion: Option<Immersion>,
}

impl fmt::Debug for MetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MetricField({})", self.name)
    }
}

impl MetricField {
    pub fn new(name: &str, g: impl Fn(Point) -> Sym2 + Send + Sync + 'static) -> Self {
        MetricField { name: name.into(), g: Arc::new(g), immersion: None }
    }

    pub fn identity() -> Self {
        MetricField { immersion: Some(Immersion::plane()), ..Self::new("identity", |_| Sym2::IDENTITY) }
    }

    /// Identity metric paired with the cylinder immersion.
    pub fn cylinder() -> Self {
        MetricField { immersion: Some(Immersion::cylinder()), ..Self::new("cylinder", |_| Sym2::IDENTITY) }
    }

    pub fn catenoid() -> Self {
        let g = |x: Point| {
            let c = x[0].cosh().powi(2);
            Sym2::diag(c, c)
        };
        MetricField { immersion: Some(Immersion::catenoid()), ..Self::new("catenoid", g) }
    }

    /// `diag(1 + β x₂², 1)`; no immersion is supplied.
    pub fn stretched(beta: f64) -> Self {
        Self::new("stretched", move |x| Sym2::diag(1.0 + beta * x[1] * x[1], 1.0))
    }

    pub fn is_identity(&self) -> bool {
        self.name == "identity" || self.name == "cylinder"
    }

    pub fn eval(&self, x: Point) -> Sym2 {
        (self.g)(x)
    }

    /// Evaluates and checks positive definiteness.
    pub fn eval_checked(&self, x: Point) -> Result<Sym2> {
        let g = self.eval(x);
        let lam = g.min_eigenvalue();
        if !(lam > 0.0) || !g.a12.is_finite() {
            return Err(LdgError::MetricNotSpd { x: x[0], y: x[1], bound: lam });
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_root() {
        for g in [Sym2::new(2.0, 0.3, 1.5), Sym2::new(1.0, 0.0, 1.0), Sym2::new(4.0, -1.9, 1.0), Sym2::diag(1e-3, 7.0)] {
            let s = g.inv_sqrt();
            let s2 = s.mul(&s);
            let p = Sym2::new(s2[0][0], s2[0][1], s2[1][1]).mul(&g);
            assert!((p[0][0] - 1.0).abs() < 1e-12 && p[0][1].abs() < 1e-12 && (p[1][1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn immersions_realize_their_metrics() {
        for m in [MetricField::identity(), MetricField::cylinder(), MetricField::catenoid()] {
            let imm = m.immersion.clone().unwrap();
            for x in [[0.1, 0.2], [0.7, -0.4], [1.3, 0.9]] {
                let a = imm.first_form(x);
                let g = m.eval(x);
                assert!((a.a11 - g.a11).abs() + (a.a12 - g.a12).abs() + (a.a22 - g.a22).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn immersion_derivatives_match_differences() {
        let h = 1e-5;
        for imm in [Immersion::cylinder(), Immersion::catenoid()] {
            let x = [0.4, 0.3];
            let j = (imm.jacobian)(x);
            let hs = (imm.hessian)(x);
            for i in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[i] += h;
                xm[i] -= h;
                let (vp, vm) = ((imm.value)(xp), (imm.value)(xm));
                let (jp, jm) = ((imm.jacobian)(xp), (imm.jacobian)(xm));
                for m in 0..3 {
                    assert!(((vp[m] - vm[m]) / (2.0 * h) - j[m][i]).abs() < 1e-8);
                    let d = (jp[m][i] - jm[m][i]) / (2.0 * h);
                    let e = if i == 0 { hs[m][0] } else { hs[m][2] };
                    assert!((d - e).abs() < 1e-8);
                    let mixed = (jp[m][1 - i] - jm[m][1 - i]) / (2.0 * h);
                    assert!((mixed - hs[m][1]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn non_spd_rejected() {
        let m = MetricField::new("bad", |_| Sym2::new(1.0, 2.0, 1.0));
        assert!(matches!(m.eval_checked([0.0, 0.0]), Err(LdgError::MetricNotSpd { .. })));
    }
}
