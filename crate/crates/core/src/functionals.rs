//! The Sobolev quotient
//!
//! ```text
//! Q_q(u) = (A ‖∇u‖² + B ‖u‖²) / ‖u‖_q²
//! ```
//!
//! on the constraint set `{‖u‖_q = 1}`, its tangent projection, and its
//! first and second variations.
//!
//! For `u` on the constraint set and `φ, η` tangent at `u`
//! (`∫ u^{q-1} φ = 0`):
//!
//! ```text
//! ∇Q(u)[φ]     = 2 ∫ A ∇u·∇φ + B u φ
//! ∇²Q(u)[φ, η] = 2 ∫ A ∇φ·∇η + B φ η  -  2 (q-1) Q(u) ∫ u^{q-2} φ η
//! ```
//!
//! Non-tangent arguments are first mapped through
//! `π(φ) = φ - (∫ u^{q-1} φ) u`. Powers of `u` are taken as `|u|^{q-2} u`
//! so signed functions are handled consistently.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::discretization::{DiscreteFunction, Discretization};
use crate::error::{LabError, Result};

/// Tolerance on `|‖u‖_q - 1|` for functions assumed normalized.
pub const NORMALIZATION_TOL: f64 = 1e-8;
/// Floor applied to `|u|` inside `|u|^{q-2}`.
pub const POWER_FLOOR: f64 = 1e-300;
/// Below this `min |u|` the Hessian is flagged as ill-conditioned.
pub const VANISHING_THRESHOLD: f64 = 1e-8;

/// The triple `(A, B, q)` on a discretization.
#[derive(Debug, Clone)]
pub struct QuotientSpec {
    a: f64,
    b: f64,
    q: f64,
    disc: Arc<Discretization>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SignFlag {
    Nonnegative,
    /// Input was nonpositive and got sign-flipped.
    Flipped,
    /// Input changes sign; normalized without flipping.
    Mixed,
}

#[derive(Debug, Clone)]
pub struct Normalized {
    pub function: DiscreteFunction,
    pub flag: SignFlag,
}

/// Deflated second-variation matrix in the quadrature-orthonormal frame.
#[derive(Debug, Clone)]
pub struct HessianMatrix {
    /// `P H P`, with `P` removing `normal`.
    pub matrix: DMatrix<f64>,
    /// Unit normal of the tangent space in the orthonormal frame.
    pub normal: DVector<f64>,
    /// Set when `u` nearly vanishes somewhere.
    pub ill_conditioned: bool,
}

/// `|x|^{p}` with `|x|` floored away from zero.
fn abs_pow(x: f64, p: f64) -> f64 {
    x.abs().max(POWER_FLOOR).powf(p)
}

/// `|x|^{p-1} x`.
fn signed_pow(x: f64, p: f64) -> f64 {
    x.signum() * x.abs().powf(p)
}

impl QuotientSpec {
    /// Requires `A, B > 0` and `q ∈ (2, 2*]`.
    pub fn new(a: f64, b: f64, q: f64, disc: Arc<Discretization>) -> Result<Self> {
        if !(a > 0.0 && a.is_finite() && b > 0.0 && b.is_finite()) {
            return Err(LabError::InvalidParameter(format!(
                "A = {a}, B = {b} must be finite and positive"
            )));
        }
        let critical = disc.model().critical_exponent();
        if !(q > 2.0 && q <= critical * (1.0 + 1e-12)) {
            return Err(LabError::InvalidParameter(format!(
                "q = {q} outside (2, {critical}]"
            )));
        }
        Ok(Self { a, b, q, disc })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn disc(&self) -> &Arc<Discretization> {
        &self.disc
    }

    /// Copy with a different `A`.
    pub fn with_a(&self, a: f64) -> Result<Self> {
        Self::new(a, self.b, self.q, self.disc.clone())
    }

    fn check(&self, u: &DiscreteFunction) -> Result<()> {
        if !self.disc.same_grid(u.disc()) {
            return Err(LabError::Mismatch);
        }
        if u.is_zero() {
            return Err(LabError::ZeroFunction);
        }
        Ok(())
    }

    fn numerator_of(&self, u: &DVector<f64>) -> f64 {
        let grad = self.disc.stiffness_form(u, u);
        let l2 = self.disc.integrate(u.iter().map(|v| v * v));
        self.a * grad + self.b * l2
    }

    fn lq_pow_q(&self, u: &DVector<f64>) -> f64 {
        self.disc.integrate(u.iter().map(|v| v.abs().powf(self.q)))
    }

    pub(crate) fn quotient_of(&self, u: &DVector<f64>) -> f64 {
        self.numerator_of(u) / self.lq_pow_q(u).powf(2.0 / self.q)
    }

    pub(crate) fn deficit_of(&self, u: &DVector<f64>) -> f64 {
        let denom = self.lq_pow_q(u).powf(2.0 / self.q);
        (self.numerator_of(u) - denom) / denom
    }

    /// `Q_q(u)`.
    pub fn quotient(&self, u: &DiscreteFunction) -> Result<f64> {
        self.check(u)?;
        Ok(self.quotient_of(u.values()))
    }

    /// `Q_q(u) - 1`, evaluated as `(A‖∇u‖² + B‖u‖² - ‖u‖_q²) / ‖u‖_q²`.
    pub fn deficit(&self, u: &DiscreteFunction) -> Result<f64> {
        self.check(u)?;
        Ok(self.deficit_of(u.values()))
    }

    /// Whether `|u|^{q-2}` is evaluated near a zero of `u`.
    pub fn ill_conditioned(&self, u: &DiscreteFunction) -> bool {
        u.values().iter().any(|v| v.abs() < VANISHING_THRESHOLD)
    }

    fn require_normalized(&self, u: &DiscreteFunction) -> Result<()> {
        self.check(u)?;
        let norm = self.lq_pow_q(u.values()).powf(1.0 / self.q);
        if (norm - 1.0).abs() > NORMALIZATION_TOL {
            return Err(LabError::NotNormalized { norm });
        }
        Ok(())
    }

    /// L²-Riesz representative of the constrained gradient at a normalized `u`:
    /// `g = 2 (-A Δu + B u - Q(u) |u|^{q-2} u)`.
    pub fn gradient(&self, u: &DiscreteFunction) -> Result<DiscreteFunction> {
        self.require_normalized(u)?;
        let values = u.values();
        let qv = self.quotient_of(values);
        let lap = self.disc.laplacian(values);
        let g = DVector::from_fn(values.len(), |i, _| {
            2.0 * (self.a * lap[i] + self.b * values[i] - qv * signed_pow(values[i], self.q - 1.0))
        });
        Ok(u.with_values(g))
    }

    /// Second variation `∇²Q(u)[π φ, π η]` at a normalized `u`.
    pub fn hessian_form(
        &self,
        u: &DiscreteFunction,
        phi: &DiscreteFunction,
        eta: &DiscreteFunction,
    ) -> Result<f64> {
        self.require_normalized(u)?;
        let pphi = project_tangent(u, phi, self.q)?;
        let peta = project_tangent(u, eta, self.q)?;
        let (p, e, uv) = (pphi.values(), peta.values(), u.values());
        let qv = self.quotient_of(uv);
        let energy = self.a * self.disc.stiffness_form(p, e)
            + self.b * self.disc.integrate(p.iter().zip(e.iter()).map(|(x, y)| x * y));
        let potential = self.disc.integrate(
            (0..uv.len()).map(|i| abs_pow(uv[i], self.q - 2.0) * p[i] * e[i]),
        );
        Ok(2.0 * energy - 2.0 * (self.q - 1.0) * qv * potential)
    }

    /// Matrix of the second variation on the tangent space, in the frame
    /// `e_i = δ_i / √W_i`, deflated along the constraint normal.
    pub fn hessian_matrix(&self, u: &DiscreteFunction) -> Result<HessianMatrix> {
        self.require_normalized(u)?;
        let uv = u.values();
        let n = uv.len();
        let w = self.disc.quad_weights();
        let sqrt_w: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
        let qv = self.quotient_of(uv);
        let k = self.disc.stiffness();
        let mut h = DMatrix::from_fn(n, n, |i, j| 2.0 * self.a * k[(i, j)] / (sqrt_w[i] * sqrt_w[j]));
        for i in 0..n {
            h[(i, i)] += 2.0 * self.b - 2.0 * (self.q - 1.0) * qv * abs_pow(uv[i], self.q - 2.0);
        }
        let mut normal = DVector::from_fn(n, |i, _| sqrt_w[i] * signed_pow(uv[i], self.q - 1.0));
        normal /= normal.norm();
        let hn = &h * &normal;
        let nhn = normal.dot(&hn);
        // P H P = H - n (Hn)ᵀ - (Hn) nᵀ + (nᵀHn) n nᵀ
        let matrix = &h - &normal * hn.transpose() - &hn * normal.transpose()
            + &normal * normal.transpose() * nhn;
        Ok(HessianMatrix {
            matrix: (&matrix + matrix.transpose()) * 0.5,
            normal,
            ill_conditioned: self.ill_conditioned(u),
        })
    }

    /// Unconstrained Euclidean gradient of the nodal map `u ↦ Q_q(u)`.
    pub(crate) fn euclidean_gradient(&self, u: &DVector<f64>) -> (f64, DVector<f64>) {
        let parts = self.parts(u);
        let grad = &parts.grad_n / parts.denom - &parts.grad_d * (parts.num / parts.denom.powi(2));
        (parts.num / parts.denom, grad)
    }

    /// Unconstrained Euclidean Hessian of the nodal map `u ↦ Q_q(u)`.
    pub(crate) fn euclidean_hessian(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let n = u.len();
        let parts = self.parts(u);
        let w = self.disc.quad_weights();
        let q = self.q;
        let (num, den) = (parts.num, parts.denom);
        let i_q = parts.lq_pow_q;
        let mut hess_n = self.disc.stiffness() * (2.0 * self.a);
        let mut hess_d = DMatrix::zeros(n, n);
        for i in 0..n {
            hess_n[(i, i)] += 2.0 * self.b * w[i];
            hess_d[(i, i)] = 2.0 * (q - 1.0) * i_q.powf(2.0 / q - 1.0) * w[i] * abs_pow(u[i], q - 2.0);
        }
        // ∇I = q W |u|^{q-2} u, and ∇D = (2/q) I^{2/q-1} ∇I
        let grad_i = DVector::from_fn(n, |i, _| q * w[i] * signed_pow(u[i], q - 1.0));
        hess_d += &grad_i * grad_i.transpose() * ((2.0 / q) * (2.0 / q - 1.0) * i_q.powf(2.0 / q - 2.0));
        let gn = &parts.grad_n;
        let gd = &parts.grad_d;
        let cross = gn * gd.transpose();
        let hess = hess_n / den - (&cross + cross.transpose()) / den.powi(2) - hess_d * (num / den.powi(2))
            + gd * gd.transpose() * (2.0 * num / den.powi(3));
        (&hess + hess.transpose()) * 0.5
    }

    fn parts(&self, u: &DVector<f64>) -> QuotientParts {
        let n = u.len();
        let w = self.disc.quad_weights();
        let q = self.q;
        let lq_pow_q = self.lq_pow_q(u);
        let denom = lq_pow_q.powf(2.0 / q);
        let lap = self.disc.laplacian(u);
        let grad_n = DVector::from_fn(n, |i, _| 2.0 * w[i] * (self.a * lap[i] + self.b * u[i]));
        let grad_d = DVector::from_fn(n, |i, _| {
            2.0 * lq_pow_q.powf(2.0 / q - 1.0) * w[i] * signed_pow(u[i], q - 1.0)
        });
        QuotientParts {
            num: self.numerator_of(u),
            denom,
            lq_pow_q,
            grad_n,
            grad_d,
        }
    }
}

struct QuotientParts {
    num: f64,
    denom: f64,
    lq_pow_q: f64,
    grad_n: DVector<f64>,
    grad_d: DVector<f64>,
}

/// `u / ‖u‖_q`, flipping the sign of nonpositive inputs.
pub fn normalize(u: &DiscreteFunction, q: f64) -> Result<Normalized> {
    if u.is_zero() {
        return Err(LabError::ZeroFunction);
    }
    let norm = u.disc().lp_norm(u, q)?;
    let (has_pos, has_neg) = u
        .values()
        .iter()
        .fold((false, false), |(p, n), v| (p || *v > 0.0, n || *v < 0.0));
    let (sign, flag) = match (has_pos, has_neg) {
        (_, false) => (1.0, SignFlag::Nonnegative),
        (false, true) => (-1.0, SignFlag::Flipped),
        (true, true) => (1.0, SignFlag::Mixed),
    };
    Ok(Normalized {
        function: u.scaled(sign / norm),
        flag,
    })
}

/// `π(φ) = φ - (∫ |u|^{q-2} u φ) u` at a normalized `u`.
pub fn project_tangent(u: &DiscreteFunction, phi: &DiscreteFunction, q: f64) -> Result<DiscreteFunction> {
    let disc = u.disc();
    if !disc.same_grid(phi.disc()) {
        return Err(LabError::Mismatch);
    }
    let norm = disc.lp_norm(u, q)?;
    if (norm - 1.0).abs() > NORMALIZATION_TOL {
        return Err(LabError::NotNormalized { norm });
    }
    let pairing = tangent_pairing(u, phi, q);
    phi.add_scaled(-pairing, u)
}

/// `∫ |u|^{q-2} u φ dVol`.
pub fn tangent_pairing(u: &DiscreteFunction, phi: &DiscreteFunction, q: f64) -> f64 {
    let (uv, pv) = (u.values(), phi.values());
    u.disc()
        .integrate((0..uv.len()).map(|i| signed_pow(uv[i], q - 1.0) * pv[i]))
}

/// Criticality residual
/// `max_j |∫ A∇u·∇e_j + B u e_j - Q(u) ∫ |u|^{q-2} u e_j|` over the
/// quadrature-orthonormal frame `e_j = δ_j / √W_j`.
pub fn criticality_residual(spec: &QuotientSpec, u: &DiscreteFunction) -> Result<f64> {
    spec.check(u)?;
    let uv = u.values();
    let w = spec.disc.quad_weights();
    let qv = spec.quotient_of(uv);
    let lap = spec.disc.laplacian(uv);
    Ok((0..uv.len())
        .map(|j| {
            let r = spec.a * lap[j] + spec.b * uv[j] - qv * signed_pow(uv[j], spec.q - 1.0);
            (w[j].sqrt() * r).abs()
        })
        .fold(0.0, f64::max))
}

/// `‖f‖_{L²}` with compensated summation over nodal values.
#[cfg(test)]
pub(crate) fn l2_norm(disc: &Discretization, f: &DVector<f64>) -> f64 {
    crate::quadrature::compensated_sum(disc.quad_weights().iter().zip(f.iter()).map(|(w, v)| w * v * v)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ManifoldModel;
    use crate::rng::{random_positive_field, random_smooth_field, stream};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn s3(n: usize) -> Arc<Discretization> {
        Discretization::build(&ManifoldModel::sphere(3).unwrap(), n).unwrap()
    }

    /// Optimal sub-critical spec on S³: A = (q-2)/3 · Vol^{2/q-1}, B = Vol^{2/q-1}.
    fn optimal_s3(q: f64, n: usize) -> QuotientSpec {
        let vol: f64 = 2.0 * PI * PI;
        let b = vol.powf(2.0 / q - 1.0);
        QuotientSpec::new((q - 2.0) / 3.0 * b, b, q, s3(n)).unwrap()
    }

    #[test]
    fn rejects_bad_specs() {
        let disc = s3(32);
        assert!(QuotientSpec::new(1.0, 1.0, 2.0, disc.clone()).is_err());
        assert!(QuotientSpec::new(1.0, 1.0, 6.5, disc.clone()).is_err());
        assert!(QuotientSpec::new(-1.0, 1.0, 4.0, disc.clone()).is_err());
        assert!(QuotientSpec::new(1.0, 1.0, 6.0, disc).is_ok());
    }

    #[test]
    fn constants_are_extremal_for_optimal_spec() {
        let spec = optimal_s3(4.0, 64);
        let c = DiscreteFunction::constant(spec.disc(), 3.7);
        assert_relative_eq!(spec.quotient(&c).unwrap(), 1.0, max_relative = 1e-14);
        assert!(spec.deficit(&c).unwrap().abs() < 1e-14);
        assert!(matches!(
            spec.quotient(&DiscreteFunction::constant(spec.disc(), 0.0)),
            Err(LabError::ZeroFunction)
        ));
    }

    #[test]
    fn zero_homogeneity() {
        let spec = optimal_s3(3.0, 64);
        let mut rng = stream(5, 0);
        let u = random_smooth_field(spec.disc(), &mut rng, 6).unwrap();
        let q1 = spec.quotient(&u).unwrap();
        for s in [7.3, -0.01, 1e5] {
            assert_relative_eq!(spec.quotient(&u.scaled(s)).unwrap(), q1, max_relative = 1e-12);
        }
    }

    #[test]
    fn normalize_cases() {
        let disc = s3(64);
        let five = DiscreteFunction::constant(&disc, 5.0);
        let n = normalize(&five, 4.0).unwrap();
        let c = (2.0 * PI * PI).powf(-0.25);
        assert!(n.function.values().iter().all(|v| (v - c).abs() < 1e-14));
        assert_eq!(n.flag, SignFlag::Nonnegative);
        let again = normalize(&n.function, 4.0).unwrap();
        assert!((again.function.values() - n.function.values()).amax() < 1e-14);

        let phi = DiscreteFunction::from_fn(&disc, |t| 1.5 + t.cos()).unwrap();
        let neg = normalize(&phi.scaled(-2.0), 4.0).unwrap();
        assert_eq!(neg.flag, SignFlag::Flipped);
        let pos = normalize(&phi, 4.0).unwrap();
        assert!((neg.function.values() - pos.function.values()).amax() < 1e-14);

        let mixed = DiscreteFunction::from_fn(&disc, f64::cos).unwrap();
        assert_eq!(normalize(&mixed, 4.0).unwrap().flag, SignFlag::Mixed);
        assert!(normalize(&DiscreteFunction::constant(&disc, 0.0), 4.0).is_err());
    }

    #[test]
    fn projection_properties() {
        let disc = s3(64);
        let q = 4.0;
        let c = normalize(&DiscreteFunction::constant(&disc, 1.0), q).unwrap().function;
        let phi = DiscreteFunction::from_fn(&disc, f64::cos).unwrap();
        let p = project_tangent(&c, &phi, q).unwrap();
        assert!((p.values() - phi.values()).amax() < 1e-14);
        let zero = project_tangent(&c, &c, q).unwrap();
        assert!(zero.values().amax() < 1e-14);

        let mut rng = stream(9, 1);
        let u = normalize(&random_positive_field(&disc, &mut rng, 5, 0.5).unwrap(), q)
            .unwrap()
            .function;
        let v = random_smooth_field(&disc, &mut rng, 8).unwrap();
        let once = project_tangent(&u, &v, q).unwrap();
        let twice = project_tangent(&u, &once, q).unwrap();
        assert!((once.values() - twice.values()).amax() < 1e-12);
        assert!(tangent_pairing(&u, &once, q).abs() < 1e-12);
        assert!(matches!(
            project_tangent(&u.scaled(2.0), &v, q),
            Err(LabError::NotNormalized { .. })
        ));
    }

    #[test]
    fn gradient_vanishes_at_constants() {
        let spec = optimal_s3(4.0, 128);
        let c = normalize(&DiscreteFunction::constant(spec.disc(), 1.0), 4.0).unwrap().function;
        let g = spec.gradient(&c).unwrap();
        assert!(l2_norm(spec.disc(), g.values()) < 1e-10);
        assert!(criticality_residual(&spec, &c).unwrap() < 1e-12);
    }

    #[test]
    fn gradient_matches_forward_difference() {
        let spec = optimal_s3(3.5, 64);
        let mut rng = stream(21, 0);
        for _ in 0..10 {
            let u = normalize(&random_positive_field(spec.disc(), &mut rng, 6, 0.6).unwrap(), spec.q())
                .unwrap()
                .function;
            let phi = random_smooth_field(spec.disc(), &mut rng, 6).unwrap();
            let g = spec.gradient(&u).unwrap();
            let pairing = spec.disc().inner(&g, &phi).unwrap();
            let eps = 1e-6;
            let shifted = normalize(&u.add_scaled(eps, &phi).unwrap(), spec.q()).unwrap().function;
            let fd = (spec.quotient(&shifted).unwrap() - spec.quotient(&u).unwrap()) / eps;
            assert!((fd - pairing).abs() < 1e-5 * pairing.abs().max(1e-3), "{fd} vs {pairing}");
        }
    }

    #[test]
    fn hessian_at_constants_on_eigenfunctions() {
        let q = 4.0;
        let spec = optimal_s3(q, 64);
        let disc = spec.disc().clone();
        let c = normalize(&DiscreteFunction::constant(&disc, 1.0), q).unwrap().function;
        let eig = disc.laplace_eigenpairs(5).unwrap();
        let h1 = spec.hessian_form(&c, &eig.eigenfunctions[1], &eig.eigenfunctions[1]).unwrap();
        assert!(h1.abs() < 1e-10);
        for k in 2..5 {
            let phi = &eig.eigenfunctions[k];
            let h = spec.hessian_form(&c, phi, phi).unwrap();
            let expected = 2.0 * (q - 2.0) * spec.b() * (eig.eigenvalues[k] / 3.0 - 1.0);
            assert_relative_eq!(h, expected, max_relative = 1e-10);
        }
    }

    #[test]
    fn hessian_form_symmetric() {
        let spec = optimal_s3(5.0, 64);
        let mut rng = stream(3, 3);
        let u = normalize(&random_positive_field(spec.disc(), &mut rng, 4, 0.4).unwrap(), spec.q())
            .unwrap()
            .function;
        let phi = random_smooth_field(spec.disc(), &mut rng, 5).unwrap();
        let eta = random_smooth_field(spec.disc(), &mut rng, 5).unwrap();
        let a = spec.hessian_form(&u, &phi, &eta).unwrap();
        let b = spec.hessian_form(&u, &eta, &phi).unwrap();
        assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn hessian_matrix_agrees_with_form_on_tangent_vectors() {
        let spec = optimal_s3(4.0, 48);
        let mut rng = stream(4, 4);
        let u = normalize(&random_positive_field(spec.disc(), &mut rng, 4, 0.4).unwrap(), 4.0)
            .unwrap()
            .function;
        let hm = spec.hessian_matrix(&u).unwrap();
        let sqrt_w = DVector::from_iterator(48, spec.disc().quad_weights().iter().map(|w| w.sqrt()));
        let phi = project_tangent(&u, &random_smooth_field(spec.disc(), &mut rng, 5).unwrap(), 4.0).unwrap();
        let eta = project_tangent(&u, &random_smooth_field(spec.disc(), &mut rng, 5).unwrap(), 4.0).unwrap();
        let yp = phi.values().component_mul(&sqrt_w);
        let ye = eta.values().component_mul(&sqrt_w);
        let from_matrix = yp.dot(&(&hm.matrix * &ye));
        let from_form = spec.hessian_form(&u, &phi, &eta).unwrap();
        assert_relative_eq!(from_matrix, from_form, max_relative = 1e-9, epsilon = 1e-10);
        assert!((&hm.matrix * &hm.normal).amax() < 1e-9 * hm.matrix.amax());
        assert!(!hm.ill_conditioned);
    }

    #[test]
    fn euclidean_derivatives_match_finite_differences() {
        let spec = optimal_s3(3.0, 32);
        let mut rng = stream(8, 0);
        let u = random_positive_field(spec.disc(), &mut rng, 5, 0.5).unwrap().scaled(1.7);
        let dir = random_smooth_field(spec.disc(), &mut rng, 5).unwrap();
        let (uv, dv) = (u.values(), dir.values());
        let (_, grad) = spec.euclidean_gradient(uv);
        let hess = spec.euclidean_hessian(uv);
        let h = 1e-4;
        let f = |s: f64| spec.quotient_of(&(uv + dv * s));
        let d1 = (f(h) - f(-h)) / (2.0 * h);
        let d2 = (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h);
        assert_relative_eq!(grad.dot(dv), d1, max_relative = 1e-7);
        assert_relative_eq!(dv.dot(&(&hess * dv)), d2, max_relative = 1e-5);
    }
}
