//! Quadrature, differentiation and the reduced Laplace–Beltrami operator.
//!
//! Sphere-radial models are discretized in `x = cos t`: nodes are the Gauss
//! points of the weight `(1 - x^2)^{(d-2)/2}`, functions are represented by
//! their polynomial interpolant of degree `n - 1`, and the stiffness matrix
//! `∫ |f'|^2 w` is assembled with the same rule. Because `(1 - x^2) p'^2`
//! has degree `2n - 2` for such interpolants, mass and stiffness are exact
//! and the discrete spectrum is the Gegenbauer spectrum `k(k + d - 1)`.
//!
//! Product-circle models use uniform periodic nodes with Fourier
//! differentiation.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::geometry::{unit_sphere_volume, ManifoldModel, ModelKind};
use crate::quadrature::{compensated_sum, differentiation_matrix, gauss_gegenbauer};

/// Smallest accepted number of nodes.
pub const MIN_NODES: usize = 16;
/// Largest accepted number of nodes; beyond this dense eigensolves get slow.
pub const MAX_NODES: usize = 1024;

#[derive(Debug, Clone)]
pub struct Discretization {
    model: ManifoldModel,
    n: usize,
    nodes: Vec<f64>,
    quad_weights: Vec<f64>,
    diff_matrix: DMatrix<f64>,
    /// `R` with `RᵀR = K`; rows carry the square-root quadrature weights.
    root: DMatrix<f64>,
    stiffness: DMatrix<f64>,
    laplace_matrix: DMatrix<f64>,
}

impl Discretization {
    /// Builds the discretization of `model` with `n` nodes.
    pub fn build(model: &ManifoldModel, n: usize) -> Result<Arc<Self>> {
        if n < MIN_NODES || n > MAX_NODES {
            return Err(LabError::Resolution(format!(
                "n = {n} outside {MIN_NODES}..={MAX_NODES}"
            )));
        }
        let disc = match model.kind {
            ModelKind::SphereRadial => Self::build_sphere(model, n),
            ModelKind::ProductCircle => {
                if n % 2 != 0 {
                    return Err(LabError::Resolution(format!(
                        "periodic discretization needs an even node count, got {n}"
                    )));
                }
                Self::build_periodic(model, n)
            }
        };
        Ok(Arc::new(disc))
    }

    fn build_sphere(model: &ManifoldModel, n: usize) -> Self {
        let d = model.dim;
        let (x_asc, w_asc) = gauss_gegenbauer(n, (d as f64 - 2.0) / 2.0);
        // t = acos x ascending <=> x descending
        let x: Vec<f64> = x_asc.iter().rev().copied().collect();
        let cross = unit_sphere_volume(d - 1);
        let quad_weights: Vec<f64> = w_asc.iter().rev().map(|w| cross * w).collect();
        let nodes: Vec<f64> = x.iter().map(|x| x.acos()).collect();
        // d/dt = -sin t d/dx
        let mut diff = differentiation_matrix(&x);
        for i in 0..n {
            let s = (1.0 - x[i] * x[i]).sqrt();
            diff.row_mut(i).scale_mut(-s);
        }
        let mut root = diff.clone();
        for i in 0..n {
            root.row_mut(i).scale_mut(quad_weights[i].sqrt());
        }
        Self::assemble(model.clone(), nodes, quad_weights, diff, root)
    }

    fn build_periodic(model: &ManifoldModel, n: usize) -> Self {
        let length = model.length;
        let h = length / n as f64;
        let nodes: Vec<f64> = (0..n).map(|j| j as f64 * h).collect();
        let weight = model.weight(0.0) * h;
        let quad_weights = vec![weight; n];
        let scale = 2.0 * PI / length;
        let hh = 2.0 * PI / n as f64;
        let diff = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                0.0
            } else {
                let k = i as isize - j as isize;
                let sign = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                0.5 * sign / (k as f64 * hh / 2.0).tan() * scale
            }
        });
        // The Fourier derivative annihilates the Nyquist mode (-1)^j; the
        // extra row restores its eigenvalue (n/2)^2 in the stiffness RᵀR.
        let nyquist = (n as f64 / 2.0) * scale * (weight / n as f64).sqrt();
        let root = DMatrix::from_fn(n + 1, n, |i, j| {
            if i < n {
                diff[(i, j)] * weight.sqrt()
            } else if j % 2 == 0 {
                nyquist
            } else {
                -nyquist
            }
        });
        Self::assemble(model.clone(), nodes, quad_weights, diff, root)
    }

    fn assemble(
        model: ManifoldModel,
        nodes: Vec<f64>,
        quad_weights: Vec<f64>,
        diff_matrix: DMatrix<f64>,
        root: DMatrix<f64>,
    ) -> Self {
        let n = nodes.len();
        let k = root.transpose() * &root;
        let stiffness = (&k + k.transpose()) * 0.5;
        let mut laplace_matrix = stiffness.clone();
        for i in 0..n {
            laplace_matrix.row_mut(i).scale_mut(1.0 / quad_weights[i]);
        }
        Self {
            model,
            n,
            nodes,
            quad_weights,
            diff_matrix,
            root,
            stiffness,
            laplace_matrix,
        }
    }

    pub fn model(&self) -> &ManifoldModel {
        &self.model
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Collocation points in the reduced domain.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Positive quadrature weights including the volume density.
    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_weights
    }

    /// `d/dt` collocation matrix.
    pub fn diff_matrix(&self) -> &DMatrix<f64> {
        &self.diff_matrix
    }

    /// Discrete `-Δ`, self-adjoint in the quadrature inner product.
    pub fn laplace_matrix(&self) -> &DMatrix<f64> {
        &self.laplace_matrix
    }

    /// Symmetric stiffness matrix, `fᵀ K g = ∫ ∇f·∇g dVol`.
    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.stiffness
    }

    pub fn total_volume(&self) -> f64 {
        compensated_sum(self.quad_weights.iter().copied())
    }

    /// Whether two discretizations describe the same grid.
    pub fn same_grid(&self, other: &Discretization) -> bool {
        std::ptr::eq(self, other) || (self.n == other.n && self.model == other.model)
    }

    pub(crate) fn integrate(&self, values: impl Iterator<Item = f64>) -> f64 {
        compensated_sum(self.quad_weights.iter().zip(values).map(|(w, v)| w * v))
    }

    /// Quadrature mean `∫ f / Vol`.
    pub(crate) fn mean(&self, f: &DVector<f64>) -> f64 {
        self.integrate(f.iter().copied()) / self.total_volume()
    }

    /// `R (f - f̄)`; removing the mean keeps constants exactly in the kernel.
    fn root_apply(&self, f: &DVector<f64>) -> DVector<f64> {
        let mean = self.mean(f);
        &self.root * f.map(|v| v - mean)
    }

    /// `fᵀ K g`.
    pub(crate) fn stiffness_form(&self, f: &DVector<f64>, g: &DVector<f64>) -> f64 {
        let rf = self.root_apply(f);
        if std::ptr::eq(f, g) {
            return compensated_sum(rf.iter().map(|a| a * a));
        }
        let rg = self.root_apply(g);
        compensated_sum(rf.iter().zip(rg.iter()).map(|(a, b)| a * b))
    }

    /// Discrete `-Δ f`.
    pub(crate) fn laplacian(&self, f: &DVector<f64>) -> DVector<f64> {
        let mut out = self.root.transpose() * self.root_apply(f);
        for (o, w) in out.iter_mut().zip(&self.quad_weights) {
            *o /= w;
        }
        out
    }

    /// k smallest eigenpairs of the reduced Laplacian.
    pub fn laplace_eigenpairs(self: &Arc<Self>, k: usize) -> Result<SpectralData> {
        if k == 0 || k > self.n {
            return Err(LabError::InvalidParameter(format!(
                "requested {k} eigenpairs from an operator of size {}",
                self.n
            )));
        }
        let sqrt_w: Vec<f64> = self.quad_weights.iter().map(|w| w.sqrt()).collect();
        let sym = DMatrix::from_fn(self.n, self.n, |i, j| {
            self.stiffness[(i, j)] / (sqrt_w[i] * sqrt_w[j])
        });
        let frame_vectors = symmetric_eigen_sorted(sym, k);
        let mut eigenvalues = Vec::with_capacity(k);
        let mut eigenfunctions = Vec::with_capacity(k);
        for (lambda, y) in frame_vectors {
            let values = DVector::from_fn(self.n, |i, _| y[i] / sqrt_w[i]);
            eigenvalues.push(lambda);
            eigenfunctions.push(DiscreteFunction::from_vector(self.clone(), values)?);
        }
        let data = SpectralData::new(self, eigenvalues, eigenfunctions);
        let scale = data.eigenvalues.iter().fold(1.0f64, |m, l| m.max(l.abs()));
        let worst = data.residuals.iter().fold(0.0f64, |m, r| m.max(*r));
        if !(worst < 1e-6 * scale) {
            return Err(LabError::Eigen { residual: worst });
        }
        Ok(data)
    }

    /// `∫ |∇f|^2 dVol`.
    pub fn gradient_norm_sq(&self, f: &DiscreteFunction) -> Result<f64> {
        self.check(f)?;
        Ok(self.stiffness_form(&f.values, &f.values))
    }

    /// `(∫ |f|^p dVol)^{1/p}`.
    pub fn lp_norm(&self, f: &DiscreteFunction, p: f64) -> Result<f64> {
        self.check(f)?;
        if !(p >= 1.0 && p.is_finite()) {
            return Err(LabError::InvalidParameter(format!("p = {p} not in [1, ∞)")));
        }
        Ok(self.integrate(f.values.iter().map(|v| v.abs().powf(p))).powf(1.0 / p))
    }

    /// `∫ f g dVol`.
    pub fn inner(&self, f: &DiscreteFunction, g: &DiscreteFunction) -> Result<f64> {
        self.check(f)?;
        self.check(g)?;
        Ok(self.integrate(f.values.iter().zip(g.values.iter()).map(|(a, b)| a * b)))
    }

    /// `∫ f dVol`.
    pub fn integral(&self, f: &DiscreteFunction) -> Result<f64> {
        self.check(f)?;
        Ok(self.integrate(f.values.iter().copied()))
    }

    /// Squared `W^{1,2}` norm `‖∇f‖² + ‖f‖²`.
    pub fn sobolev_norm_sq(&self, f: &DiscreteFunction) -> Result<f64> {
        Ok(self.gradient_norm_sq(f)? + self.inner(f, f)?)
    }

    fn check(&self, f: &DiscreteFunction) -> Result<()> {
        if self.same_grid(&f.disc) {
            Ok(())
        } else {
            Err(LabError::Mismatch)
        }
    }
}

/// Ascending eigenpairs of a symmetric matrix; keeps the lowest `k`.
pub(crate) fn symmetric_eigen_sorted(sym: DMatrix<f64>, k: usize) -> Vec<(f64, DVector<f64>)> {
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    order
        .into_iter()
        .take(k)
        .map(|i| {
            let mut v = eig.eigenvectors.column(i).into_owned();
            fix_sign(&mut v);
            (eig.eigenvalues[i], v)
        })
        .collect()
}

/// Sign convention: the first entry of non-negligible magnitude is positive.
pub(crate) fn fix_sign(v: &mut DVector<f64>) {
    let max = v.amax();
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-8 * max) {
        if *first < 0.0 {
            v.neg_mut();
        }
    }
}

/// Nodal values of a function on a discretization.
#[derive(Debug, Clone)]
pub struct DiscreteFunction {
    disc: Arc<Discretization>,
    values: DVector<f64>,
}

impl DiscreteFunction {
    pub fn new(disc: Arc<Discretization>, values: Vec<f64>) -> Result<Self> {
        Self::from_vector(disc, DVector::from_vec(values))
    }

    pub fn from_vector(disc: Arc<Discretization>, values: DVector<f64>) -> Result<Self> {
        if values.len() != disc.n {
            return Err(LabError::InvalidParameter(format!(
                "{} values for a discretization with {} nodes",
                values.len(),
                disc.n
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LabError::InvalidParameter("non-finite nodal value".into()));
        }
        Ok(Self { disc, values })
    }

    /// Samples `f` at the nodes.
    pub fn from_fn(disc: &Arc<Discretization>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = disc.nodes.iter().map(|&t| f(t)).collect();
        Self::new(disc.clone(), values)
    }

    pub fn constant(disc: &Arc<Discretization>, c: f64) -> Self {
        Self {
            disc: disc.clone(),
            values: DVector::from_element(disc.n, c),
        }
    }

    pub fn disc(&self) -> &Arc<Discretization> {
        &self.disc
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            disc: self.disc.clone(),
            values: &self.values * s,
        }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, s: f64, other: &DiscreteFunction) -> Result<Self> {
        if !self.disc.same_grid(&other.disc) {
            return Err(LabError::Mismatch);
        }
        Ok(Self {
            disc: self.disc.clone(),
            values: &self.values + &other.values * s,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            disc: self.disc.clone(),
            values: self.values.map(f),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    pub fn min(&self) -> f64 {
        self.values.min()
    }

    pub fn max(&self) -> f64 {
        self.values.max()
    }

    pub(crate) fn with_values(&self, values: DVector<f64>) -> Self {
        Self {
            disc: self.disc.clone(),
            values,
        }
    }
}

/// Bottom of a spectrum with quadrature-orthonormal eigenfunctions.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralData {
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    #[serde(skip)]
    pub eigenfunctions: Vec<DiscreteFunction>,
}

impl SpectralData {
    fn new(disc: &Discretization, eigenvalues: Vec<f64>, eigenfunctions: Vec<DiscreteFunction>) -> Self {
        let residuals = eigenvalues
            .iter()
            .zip(&eigenfunctions)
            .map(|(l, f)| (&disc.laplace_matrix * &f.values - &f.values * *l).norm())
            .collect();
        Self {
            eigenvalues,
            residuals,
            eigenfunctions,
        }
    }

    /// Builds spectral data for an operator other than the Laplacian.
    pub(crate) fn from_parts(
        eigenvalues: Vec<f64>,
        residuals: Vec<f64>,
        eigenfunctions: Vec<DiscreteFunction>,
    ) -> Self {
        Self {
            eigenvalues,
            residuals,
            eigenfunctions,
        }
    }
}
