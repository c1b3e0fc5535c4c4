//! Constrained minimization of `Q_q` on `{‖u‖_q = 1}`, certification of
//! critical points, Hessian spectra and kernels, and a discrete
//! Lyapunov–Schmidt reduction onto the Hessian kernel.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::{fix_sign, symmetric_eigen_sorted, DiscreteFunction, SpectralData};
use crate::error::{LabError, Result};
use crate::functionals::{criticality_residual, normalize, QuotientSpec};
use crate::geometry::ModelKind;
use crate::rng;
use crate::stability::bubble;

/// Relative kernel threshold: `|λ| < τ · max(1, spectral radius)`.
pub const DEFAULT_KERNEL_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimizeOptions {
    pub max_iter: usize,
    /// Certification tolerance on the criticality residual.
    pub grad_tol: f64,
    /// Residual below which Newton steps are attempted.
    pub newton_switch: f64,
    pub kernel_threshold: f64,
    /// Number of Hessian eigenpairs kept in the report.
    pub spectrum_size: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-10,
            newton_switch: 1e-2,
            kernel_threshold: DEFAULT_KERNEL_THRESHOLD,
            spectrum_size: 8,
        }
    }
}

/// A normalized function with certification data.
#[derive(Debug, Clone)]
pub struct CriticalPoint {
    pub u: DiscreteFunction,
    pub value: f64,
    pub grad_residual: f64,
    pub hessian_spectrum: SpectralData,
    pub kernel_dim: usize,
    pub kernel_basis: Vec<DiscreteFunction>,
    pub kernel_ambiguous: bool,
    pub converged: bool,
    pub iterations: usize,
    /// `Q_q` after every accepted step, starting with the initial value.
    pub history: Vec<f64>,
}

/// Criticality residual of a normalized `u`; `<= tol` means certified.
pub fn certify(spec: &QuotientSpec, u: &DiscreteFunction) -> Result<f64> {
    criticality_residual(spec, u)
}

/// Full eigendecomposition of the second variation on `T_u B`.
#[derive(Debug, Clone)]
pub struct TangentSpectrum {
    /// Ascending eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// Quadrature-orthonormal, tangent eigenfunctions.
    pub eigenfunctions: Vec<DiscreteFunction>,
    pub residuals: Vec<f64>,
    pub spectral_radius: f64,
    pub ill_conditioned: bool,
}

/// Householder basis of the orthogonal complement of the unit vector `normal`.
fn complement_basis(normal: &DVector<f64>) -> DMatrix<f64> {
    let n = normal.len();
    let mut v = normal.clone();
    let sign = if normal[0] >= 0.0 { 1.0 } else { -1.0 };
    v[0] += sign;
    let vv = v.dot(&v);
    // H = I - 2 v vᵀ / vᵀv maps `normal` to -sign e_0; its other columns span normal^⊥.
    DMatrix::from_fn(n, n - 1, |i, j| {
        let col = j + 1;
        let delta = if i == col { 1.0 } else { 0.0 };
        delta - 2.0 * v[i] * v[col] / vv
    })
}

/// Eigendecomposition of the Hessian compressed to the tangent space.
pub fn tangent_spectrum(spec: &QuotientSpec, u: &DiscreteFunction) -> Result<TangentSpectrum> {
    let hm = spec.hessian_matrix(u)?;
    let basis = complement_basis(&hm.normal);
    let compressed = basis.transpose() * &hm.matrix * &basis;
    let compressed = (&compressed + compressed.transpose()) * 0.5;
    let m = compressed.nrows();
    let pairs = symmetric_eigen_sorted(compressed.clone(), m);
    let sqrt_w: Vec<f64> = spec.disc().quad_weights().iter().map(|w| w.sqrt()).collect();
    let spectral_radius = pairs.iter().fold(0.0f64, |r, (l, _)| r.max(l.abs()));
    let mut eigenvalues = Vec::with_capacity(m);
    let mut eigenfunctions = Vec::with_capacity(m);
    let mut residuals = Vec::with_capacity(m);
    for (lambda, z) in pairs {
        residuals.push((&compressed * &z - &z * lambda).norm());
        let mut y = &basis * z;
        fix_sign(&mut y);
        let values = DVector::from_fn(y.len(), |i, _| y[i] / sqrt_w[i]);
        eigenvalues.push(lambda);
        eigenfunctions.push(u.with_values(values));
    }
    Ok(TangentSpectrum {
        eigenvalues,
        eigenfunctions,
        residuals,
        spectral_radius,
        ill_conditioned: hm.ill_conditioned,
    })
}

/// Bottom `k` eigenpairs of the deflated Hessian on `T_u B`.
pub fn hessian_spectrum_at(spec: &QuotientSpec, u: &DiscreteFunction, k: usize) -> Result<SpectralData> {
    let full = tangent_spectrum(spec, u)?;
    let k = k.min(full.eigenvalues.len());
    Ok(SpectralData::from_parts(
        full.eigenvalues[..k].to_vec(),
        full.residuals[..k].to_vec(),
        full.eigenfunctions[..k].to_vec(),
    ))
}

#[derive(Debug, Clone)]
pub struct KernelInfo {
    pub basis: Vec<DiscreteFunction>,
    pub eigenvalues: Vec<f64>,
    /// Absolute threshold actually applied.
    pub threshold: f64,
    /// Some eigenvalue lies within a factor 10 of the threshold.
    pub ambiguous: bool,
}

impl KernelInfo {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }
}

fn kernel_from_spectrum(full: &TangentSpectrum, threshold: f64) -> KernelInfo {
    let abs = threshold * full.spectral_radius.max(1.0);
    let mut basis = Vec::new();
    let mut eigenvalues = Vec::new();
    let mut ambiguous = false;
    for (l, f) in full.eigenvalues.iter().zip(&full.eigenfunctions) {
        if l.abs() < abs {
            basis.push(f.clone());
            eigenvalues.push(*l);
        }
        if l.abs() >= abs / 10.0 && l.abs() < abs * 10.0 {
            ambiguous = true;
        }
    }
    KernelInfo {
        basis,
        eigenvalues,
        threshold: abs,
        ambiguous,
    }
}

/// Eigenfunctions of the tangent Hessian with `|λ| < threshold · max(1, ρ)`.
pub fn kernel_basis_at(spec: &QuotientSpec, u: &DiscreteFunction, threshold: f64) -> Result<KernelInfo> {
    Ok(kernel_from_spectrum(&tangent_spectrum(spec, u)?, threshold))
}

/// `[H cᵀ; c 0] [s; μ] = [-g; 0]` for each constraint row in `constraints`.
fn bordered_newton_step(
    hess: &DMatrix<f64>,
    grad: &DVector<f64>,
    constraints: &[DVector<f64>],
) -> Option<DVector<f64>> {
    let n = grad.len();
    let m = constraints.len();
    let mut kkt = DMatrix::zeros(n + m, n + m);
    kkt.view_mut((0, 0), (n, n)).copy_from(hess);
    for (k, c) in constraints.iter().enumerate() {
        // rescale rows so the border is comparable to the Hessian block
        let scale = hess.amax().max(1e-300) / c.amax().max(1e-300);
        for i in 0..n {
            kkt[(i, n + k)] = c[i] * scale;
            kkt[(n + k, i)] = c[i] * scale;
        }
    }
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&(-grad));
    let sol = kkt.lu().solve(&rhs)?;
    let step = sol.rows(0, n).into_owned();
    step.iter().all(|v| v.is_finite()).then_some(step)
}

fn constraint_row(spec: &QuotientSpec, u: &DVector<f64>) -> DVector<f64> {
    let w = spec.disc().quad_weights();
    let q = spec.q();
    DVector::from_fn(u.len(), |i, _| w[i] * u[i].signum() * u[i].abs().powf(q - 1.0))
}

/// Projected-gradient descent with backtracking on renormalized iterates,
/// switching to bordered Newton steps once the residual is small.
///
/// Iterates are kept nonnegative by reflection `u ↦ |u|`, which never
/// increases `Q_q`.
pub fn minimize(spec: &QuotientSpec, init: &DiscreteFunction, opts: &MinimizeOptions) -> Result<CriticalPoint> {
    let q = spec.q();
    let mut u = normalize(&init.map(f64::abs), q)?.function.into_values();
    let disc = spec.disc().clone();
    let mut precond_matrix = disc.stiffness() * spec.a();
    for (i, w) in disc.quad_weights().iter().enumerate() {
        precond_matrix[(i, i)] += spec.b() * w;
    }
    let precond: Cholesky<f64, Dyn> = Cholesky::new(precond_matrix)
        .ok_or_else(|| LabError::InvalidParameter("energy matrix not positive definite".into()))?;

    let renormalize = |v: DVector<f64>| -> Option<DVector<f64>> {
        let v = v.map(f64::abs);
        let norm = disc.integrate(v.iter().map(|x| x.powf(q))).powf(1.0 / q);
        (norm > 0.0 && norm.is_finite()).then(|| v / norm)
    };
    let residual_of = |v: &DVector<f64>| criticality_residual(spec, &init.with_values(v.clone()));

    let mut deficit = spec.deficit_of(&u);
    let mut history = vec![deficit + 1.0];
    let mut residual = residual_of(&u)?;
    let mut iterations = 0;
    let mut step = 1.0;
    while residual > opts.grad_tol && iterations < opts.max_iter {
        iterations += 1;
        let (_, grad) = spec.euclidean_gradient(&u);
        let mut accepted = false;
        if residual < opts.newton_switch {
            let hess = spec.euclidean_hessian(&u);
            if let Some(s) = bordered_newton_step(&hess, &grad, &[constraint_row(spec, &u)]) {
                if let Some(trial) = renormalize(&u + s) {
                    let td = spec.deficit_of(&trial);
                    let tr = residual_of(&trial)?;
                    if td <= deficit + 1e-14 && tr < residual {
                        u = trial;
                        deficit = td;
                        residual = tr;
                        accepted = true;
                    }
                }
            }
        }
        if !accepted {
            let dir = precond.solve(&grad);
            let slope = grad.dot(&dir);
            if !(slope > 0.0) {
                break;
            }
            let scale = u.norm() / dir.norm().max(1e-300);
            for _ in 0..60 {
                let Some(trial) = renormalize(&u - &dir * (step * scale)) else {
                    step *= 0.5;
                    continue;
                };
                let td = spec.deficit_of(&trial);
                if td <= deficit - 1e-4 * step * scale * slope {
                    u = trial;
                    deficit = td;
                    residual = residual_of(&u)?;
                    accepted = true;
                    step = (step * 2.0).min(1.0);
                    break;
                }
                step *= 0.5;
            }
        }
        if !accepted {
            break;
        }
        history.push(deficit + 1.0);
    }
    let u = init.with_values(u);
    let converged = residual <= opts.grad_tol;
    finish_critical_point(spec, u, residual, converged, iterations, history, opts)
}

fn finish_critical_point(
    spec: &QuotientSpec,
    u: DiscreteFunction,
    grad_residual: f64,
    converged: bool,
    iterations: usize,
    history: Vec<f64>,
    opts: &MinimizeOptions,
) -> Result<CriticalPoint> {
    let full = tangent_spectrum(spec, &u)?;
    let kernel = kernel_from_spectrum(&full, opts.kernel_threshold);
    let k = opts.spectrum_size.min(full.eigenvalues.len());
    Ok(CriticalPoint {
        value: spec.quotient(&u)?,
        u,
        grad_residual,
        hessian_spectrum: SpectralData::from_parts(
            full.eigenvalues[..k].to_vec(),
            full.residuals[..k].to_vec(),
            full.eigenfunctions[..k].to_vec(),
        ),
        kernel_dim: kernel.dim(),
        kernel_basis: kernel.basis,
        kernel_ambiguous: kernel.ambiguous,
        converged,
        iterations,
        history,
    })
}

/// Wraps an already-critical normalized `u` (e.g. a constant) without iterating.
pub fn critical_point_at(spec: &QuotientSpec, u: &DiscreteFunction, opts: &MinimizeOptions) -> Result<CriticalPoint> {
    let u = normalize(u, spec.q())?.function;
    let residual = certify(spec, &u)?;
    let value = spec.quotient(&u)?;
    finish_critical_point(spec, u, residual, residual <= opts.grad_tol, 0, vec![value], opts)
}

/// Deterministic start set: constants, ± first eigenfunction perturbations,
/// bubbles (sphere only), then `random` seeded fields.
pub fn multistart_inits(spec: &QuotientSpec, random: usize, seed: u64) -> Result<Vec<DiscreteFunction>> {
    let disc = spec.disc();
    let mut inits = vec![DiscreteFunction::constant(disc, 1.0)];
    let eig = disc.laplace_eigenpairs(2)?;
    let c = 1.0 / disc.total_volume().sqrt();
    for s in [0.5, -0.5] {
        inits.push(DiscreteFunction::constant(disc, c).add_scaled(s * c, &eig.eigenfunctions[1].scaled(1.0 / eig.eigenfunctions[1].values().amax()))?);
    }
    if disc.model().kind == ModelKind::SphereRadial {
        for b in [0.3, 0.6, 0.9] {
            inits.push(bubble(disc, 1.0, b)?);
        }
    }
    for k in 0..random {
        let mut g = rng::stream(seed, k as u64);
        inits.push(rng::random_positive_field(disc, &mut g, 8, 0.8)?);
    }
    Ok(inits)
}

/// Runs [`minimize`] from every start in parallel; the best certified value
/// wins, ties broken by lower residual, then by lower start index.
pub fn minimize_multistart(
    spec: &QuotientSpec,
    inits: &[DiscreteFunction],
    opts: &MinimizeOptions,
) -> Result<(usize, CriticalPoint)> {
    let results: Vec<Result<CriticalPoint>> = inits.par_iter().map(|u| minimize(spec, u, opts)).collect();
    let mut best: Option<(usize, CriticalPoint)> = None;
    for (i, r) in results.into_iter().enumerate() {
        let cp = r?;
        let better = match &best {
            None => true,
            Some((_, b)) => match (cp.converged, b.converged) {
                (true, false) => true,
                (false, true) => false,
                _ => {
                    cp.value < b.value - 1e-12
                        || ((cp.value - b.value).abs() <= 1e-12 && cp.grad_residual < b.grad_residual)
                }
            },
        };
        if better {
            best = Some((i, cp));
        }
    }
    best.ok_or_else(|| LabError::InvalidParameter("no starting points".into()))
}

/// One evaluation of the reduced functional `𝔮`.
#[derive(Debug, Clone)]
pub struct ReducedFunctionalSample {
    pub coords: Vec<f64>,
    /// `𝔮(coords) = Q_q(v + φ + F(φ))`.
    pub value: f64,
    /// `𝔮(coords) - 𝔮(0)`, from cancellation-stable deficits.
    pub excess: f64,
    /// `v + φ + F(φ)`.
    pub minimizer_perp: DiscreteFunction,
    /// `F(φ)`, the `K^⊥` completion.
    pub graph_map: DiscreteFunction,
    pub inner_converged: bool,
    /// The inner Newton iteration blew up or became singular.
    pub diverged: bool,
    pub inner_iterations: usize,
    pub inner_residual: f64,
}

/// Lyapunov–Schmidt setup at a critical point with nontrivial kernel.
#[derive(Debug, Clone)]
pub struct Reduction {
    spec: QuotientSpec,
    v: DiscreteFunction,
    base_deficit: f64,
    kernel: Vec<DiscreteFunction>,
    constraints: Vec<DVector<f64>>,
    trust_radius: f64,
    pub inner_tol: f64,
    pub max_inner: usize,
}

impl Reduction {
    /// Trust radius defaults to `0.1 ‖v‖_{W^{1,2}}`.
    pub fn new(spec: &QuotientSpec, v: &CriticalPoint) -> Result<Self> {
        if v.kernel_dim == 0 {
            return Err(LabError::Precondition("critical point has trivial Hessian kernel".into()));
        }
        let disc = spec.disc();
        let vw = disc.sobolev_norm_sq(&v.u)?.sqrt();
        let w = disc.quad_weights();
        let mut constraints = vec![constraint_row(spec, v.u.values())];
        for phi in &v.kernel_basis {
            constraints.push(DVector::from_fn(w.len(), |i, _| w[i] * phi.values()[i]));
        }
        Ok(Self {
            spec: spec.clone(),
            v: v.u.clone(),
            base_deficit: spec.deficit(&v.u)?,
            kernel: v.kernel_basis.clone(),
            constraints,
            trust_radius: 0.1 * vw,
            inner_tol: 1e-13,
            max_inner: 40,
        })
    }

    pub fn kernel_dim(&self) -> usize {
        self.kernel.len()
    }

    pub fn kernel_basis(&self) -> &[DiscreteFunction] {
        &self.kernel
    }

    pub fn trust_radius(&self) -> f64 {
        self.trust_radius
    }

    pub fn shrink_trust_radius(&mut self) {
        self.trust_radius *= 0.5;
    }

    /// Fixes the kernel component to `coords` and solves the `K^⊥`
    /// stationarity equations by bordered Newton.
    pub fn evaluate(&self, coords: &[f64]) -> Result<ReducedFunctionalSample> {
        if coords.len() != self.kernel.len() {
            return Err(LabError::InvalidParameter(format!(
                "{} coordinates for a {}-dimensional kernel",
                coords.len(),
                self.kernel.len()
            )));
        }
        let mut base = self.v.values().clone();
        for (c, phi) in coords.iter().zip(&self.kernel) {
            base += phi.values() * *c;
        }
        let radius = coords.iter().map(|c| c * c).sum::<f64>().sqrt();
        let mut w = DVector::zeros(base.len());
        let mut u = base.clone();
        let grad_norm = |g: &DVector<f64>| -> f64 {
            // gradient restricted to the complement, in the dual L² norm
            let wts = self.spec.disc().quad_weights();
            let mut r = g.clone();
            for c in &self.constraints {
                let cc: f64 = c.iter().zip(wts).map(|(x, w)| x * x / w).sum();
                let gc: f64 = g.iter().zip(c.iter()).zip(wts).map(|((a, b), w)| a * b / w).sum();
                r -= c * (gc / cc);
            }
            r.iter().zip(wts).map(|(x, w)| x * x / w).sum::<f64>().sqrt()
        };
        let (_, mut grad) = self.spec.euclidean_gradient(&u);
        let mut residual = grad_norm(&grad);
        let scale = self.spec.quotient_of(&u).abs().max(1.0) * u.norm().max(1e-300).recip();
        let mut iterations = 0;
        let mut diverged = false;
        while residual > self.inner_tol * scale.max(1.0) && iterations < self.max_inner {
            iterations += 1;
            let hess = self.spec.euclidean_hessian(&u);
            let Some(step) = bordered_newton_step(&hess, &grad, &self.constraints) else {
                diverged = true;
                break;
            };
            let trial_w = &w + &step;
            let trial_u = &base + &trial_w;
            let (_, trial_grad) = self.spec.euclidean_gradient(&trial_u);
            let trial_res = grad_norm(&trial_grad);
            if !trial_res.is_finite() || trial_res > 10.0 * residual.max(1e-300) {
                diverged = true;
                break;
            }
            w = trial_w;
            u = trial_u;
            grad = trial_grad;
            if trial_res >= residual && iterations > 3 {
                residual = trial_res;
                break;
            }
            residual = trial_res;
        }
        let converged = !diverged && residual <= 1e-9 * scale.max(1.0) && radius <= self.trust_radius;
        let deficit = self.spec.deficit_of(&u);
        let full = self.v.with_values(u);
        Ok(ReducedFunctionalSample {
            coords: coords.to_vec(),
            value: deficit + 1.0,
            excess: deficit - self.base_deficit,
            minimizer_perp: full,
            graph_map: self.v.with_values(w),
            inner_converged: converged,
            diverged,
            inner_iterations: iterations,
            inner_residual: residual,
        })
    }
}

/// `𝔮(coords)` at the critical point `v`.
pub fn reduced_functional(spec: &QuotientSpec, v: &CriticalPoint, coords: &[f64]) -> Result<ReducedFunctionalSample> {
    Reduction::new(spec, v)?.evaluate(coords)
}
