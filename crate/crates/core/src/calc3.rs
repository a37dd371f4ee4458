//! Vector algebra and exterior calculus on R^3 for a single constraint form.
//!
//! Two-forms are represented by their axial vector with respect to the
//! standard volume form, so `beta ^ d beta` is the triple product
//! `V_beta . curl(V_beta)`.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::expr::{Expr, ExprError};

pub type Vec3 = Vector3<f64>;

/// Relative tolerance for algebraic identities.
pub const ALGEBRAIC_TOL: f64 = 1e-10;

pub fn to_array(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

/// Scalar triple product `a . (b x c)`, i.e. `det[a; b; c]`.
#[inline]
pub fn triple(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    a.dot(&b.cross(c))
}

/// A differential one-form `b1 dx1 + b2 dx2 + b3 dx3` with expression coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct OneForm {
    pub coeffs: [Expr; 3],
}

impl OneForm {
    pub fn new(coeffs: [Expr; 3]) -> Self {
        Self { coeffs }
    }

    pub fn parse(coeffs: [&str; 3]) -> Result<Self, ExprError> {
        Ok(Self { coeffs: [Expr::parse(coeffs[0])?, Expr::parse(coeffs[1])?, Expr::parse(coeffs[2])?] })
    }

    /// The exact form `dF`.
    pub fn exact(f: &Expr) -> ExactForm<'_> {
        ExactForm(f)
    }

    /// Riesz dual `V_beta(p)`: the coefficient vector.
    pub fn riesz(&self, p: &Vec3) -> Result<Vec3> {
        let q = to_array(p);
        Ok(Vec3::new(self.coeffs[0].eval(q)?, self.coeffs[1].eval(q)?, self.coeffs[2].eval(q)?))
    }

    /// `V_beta(p)` together with the Jacobian whose row `i` is `grad b_i`.
    pub fn jet(&self, p: &Vec3) -> Result<(Vec3, Matrix3<f64>)> {
        let q = to_array(p);
        let mut v = Vec3::zeros();
        let mut jac = Matrix3::zeros();
        for (i, c) in self.coeffs.iter().enumerate() {
            let (val, grad) = c.eval_grad(q)?;
            v[i] = val;
            for j in 0..3 {
                jac[(i, j)] = grad[j];
            }
        }
        Ok((v, jac))
    }

    /// `beta(w)` at `p`.
    pub fn apply(&self, p: &Vec3, w: &Vec3) -> Result<f64> {
        Ok(self.riesz(p)?.dot(w))
    }

    pub fn exterior_derivative(&self, p: &Vec3) -> Result<TwoFormAt> {
        let (_, jac) = self.jet(p)?;
        Ok(TwoFormAt::from_jacobian(&jac))
    }

    /// `lambda_beta` with `beta ^ d beta = lambda_beta dx1 ^ dx2 ^ dx3`.
    pub fn lambda(&self, p: &Vec3) -> Result<f64> {
        let (v, jac) = self.jet(p)?;
        Ok(v.dot(&curl_from_jacobian(&jac)))
    }

    pub fn negated(&self) -> Self {
        Self { coeffs: self.coeffs.clone().map(|c| Expr::Neg(Box::new(c))) }
    }
}

/// Borrowed view of `dF` for an expression `F`.
#[derive(Debug, Clone, Copy)]
pub struct ExactForm<'a>(&'a Expr);

impl ExactForm<'_> {
    pub fn riesz(&self, p: &Vec3) -> Result<Vec3> {
        let (_, g) = self.0.eval_grad(to_array(p))?;
        Ok(Vec3::from(g))
    }
}

fn curl_from_jacobian(jac: &Matrix3<f64>) -> Vec3 {
    Vec3::new(jac[(2, 1)] - jac[(1, 2)], jac[(0, 2)] - jac[(2, 0)], jac[(1, 0)] - jac[(0, 1)])
}

/// A two-form evaluated at a point: `matrix[(i, j)] = d beta(e_i, e_j)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoFormAt {
    pub matrix: Matrix3<f64>,
}

impl TwoFormAt {
    /// From the Jacobian of the coefficients (row `i` = `grad b_i`):
    /// `d beta_{ij} = d_i b_j - d_j b_i`.
    pub fn from_jacobian(jac: &Matrix3<f64>) -> Self {
        Self { matrix: jac.transpose() - jac }
    }

    pub fn from_axial(a: &Vec3) -> Self {
        Self { matrix: Matrix3::new(0.0, a.z, -a.y, -a.z, 0.0, a.x, a.y, -a.x, 0.0) }
    }

    /// Axial vector `w` with `d beta(u, v) = w . (u x v)`; equals `curl V_beta`.
    pub fn axial(&self) -> Vec3 {
        Vec3::new(self.matrix[(1, 2)], self.matrix[(2, 0)], self.matrix[(0, 1)])
    }

    pub fn apply(&self, u: &Vec3, v: &Vec3) -> f64 {
        (u.transpose() * self.matrix * v)[(0, 0)]
    }
}

/// Vector dual of `tau1 ^ tau2` from its coefficient vectors.
#[inline]
pub fn wedge_dual(v1: &Vec3, v2: &Vec3) -> Vec3 {
    v1.cross(v2)
}

/// `X_sigma` for `sigma = tau1 ^ tau2`, characterised by
/// `alpha ^ sigma = alpha(X_sigma) dx1 ^ dx2 ^ dx3` for every one-form `alpha`.
pub fn dual_of_wedge(tau1: &OneForm, tau2: &OneForm, p: &Vec3) -> Result<Vec3> {
    Ok(wedge_dual(&tau1.riesz(p)?, &tau2.riesz(p)?))
}

/// Given `X` in `ker beta`, the vector `V_tau` with `V_beta x V_tau = X`.
pub fn factor_tau_at(v_beta: &Vec3, x: &Vec3, tol: f64) -> Result<Vec3> {
    let n2 = v_beta.norm_squared();
    if n2.sqrt() < tol {
        return Err(Error::DegenerateForm { norm: n2.sqrt() });
    }
    let residual = v_beta.dot(x);
    if residual.abs() > tol * x.norm() * n2.sqrt() {
        return Err(Error::NotTangent { residual });
    }
    Ok(x.cross(v_beta) / n2)
}

pub fn factor_tau(beta: &OneForm, x: &Vec3, p: &Vec3) -> Result<Vec3> {
    factor_tau_at(&beta.riesz(p)?, x, ALGEBRAIC_TOL)
}

/// `c(p) * (V_beta x grad F)(p)`: tangent to `ker beta` and conserving `F`.
pub fn conserving_field(beta: &OneForm, conserved: &Expr, scale: &Expr, p: &Vec3) -> Result<Vec3> {
    let q = to_array(p);
    let (_, grad) = conserved.eval_grad(q)?;
    let c = scale.eval(q)?;
    Ok(beta.riesz(p)?.cross(&Vec3::from(grad)) * c)
}
