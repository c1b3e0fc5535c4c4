//! Optimal constants of the AB-program.
//!
//! * `S_d`, the sharp Euclidean Sobolev constant, with `α(M) = S_d²`;
//! * `β(M) = Vol(M)^{-2/d}`;
//! * `A_opt_q(M)`, either from the spectral gap `(q-2)/λ(M) · Vol^{2/q-1}`
//!   (valid only when constants are the only extremals) or from closed forms;
//! * lower bounds for `B_opt_{2*}(M)`.

use std::sync::Arc;

use nalgebra::{Cholesky, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::{DiscreteFunction, Discretization};
use crate::error::{LabError, Result};
use crate::geometry::{critical_exponent, unit_sphere_volume, ManifoldModel, ModelKind};
use crate::rng;
use crate::stability::bubble;

/// `S_d = ((2* - 2)/d)^{1/2} Vol(S^d)^{-1/d}`.
pub fn euclidean_sobolev_constant(d: usize) -> Result<f64> {
    if d < 3 {
        return Err(LabError::Dimension { d, min: 3, max: usize::MAX });
    }
    let ratio = (critical_exponent(d) - 2.0) / d as f64;
    Ok(ratio.sqrt() * unit_sphere_volume(d).powf(-1.0 / d as f64))
}

/// `β(M) = Vol(M)^{-2/d}`.
pub fn beta_constant(model: &ManifoldModel) -> f64 {
    model.total_volume.powf(-2.0 / model.dim as f64)
}

/// `Vol(M)^{2/q - 1}`, the `B` that makes constants extremal at exponent `q`.
pub fn constant_extremal_b(model: &ManifoldModel, q: f64) -> f64 {
    model.total_volume.powf(2.0 / q - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ClosedFormSphere,
    SpectralGap,
    ProductCritical,
}

/// Whether the caller vouches that constants are the only extremals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtremalAssumption {
    ConstantsOnly,
    Unverified,
}

/// Value of the spectral-gap formula together with what it may be claimed to be.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SpectralGapConstant {
    pub value: f64,
    pub lambda: f64,
    /// True only under [`ExtremalAssumption::ConstantsOnly`].
    pub claimed_optimal: bool,
}

fn check_exponent(model: &ManifoldModel, q: f64) -> Result<()> {
    let crit = model.critical_exponent();
    if !(q > 2.0 && q <= crit * (1.0 + 1e-12)) {
        return Err(LabError::InvalidParameter(format!("q = {q} outside (2, {crit}]")));
    }
    Ok(())
}

/// `(q-2)/λ(M) · Vol^{2/q-1}` with `λ(M)` from the discrete spectrum.
pub fn a_opt_spectral_gap(
    disc: &Arc<Discretization>,
    q: f64,
    assumption: ExtremalAssumption,
) -> Result<SpectralGapConstant> {
    let model = disc.model();
    check_exponent(model, q)?;
    let spectrum = disc.laplace_eigenpairs(2)?;
    let lambda = spectrum.eigenvalues[1];
    Ok(SpectralGapConstant {
        value: (q - 2.0) / lambda * constant_extremal_b(model, q),
        lambda,
        claimed_optimal: assumption == ExtremalAssumption::ConstantsOnly,
    })
}

/// `A_opt_q(S^d) = (q-2)/d · Vol(S^d)^{2/q-1}`.
pub fn a_opt_sphere_closed_form(d: usize, q: f64) -> Result<f64> {
    let model = ManifoldModel::sphere(d)?;
    check_exponent(&model, q)?;
    Ok((q - 2.0) / d as f64 * constant_extremal_b(&model, q))
}

/// `A_opt_{2*}(M*) = 4/(d-2)² · Vol(M*)^{-2/d}` on `S^1(1/√(d-2)) × S^{d-1}`.
pub fn a_opt_product_critical(d: usize) -> Result<f64> {
    let model = ManifoldModel::product(d)?;
    let dm2 = d as f64 - 2.0;
    Ok(4.0 / (dm2 * dm2) * beta_constant(&model))
}

/// `Y(M*) = (d-2)²/4 · Vol(M*)^{2/d}`.
pub fn yamabe_product(d: usize) -> Result<f64> {
    let model = ManifoldModel::product(d)?;
    let dm2 = d as f64 - 2.0;
    Ok(dm2 * dm2 / 4.0 * model.total_volume.powf(2.0 / d as f64))
}

/// `S_d² < A_opt_{2*}(M*)`, from the closed forms.
pub fn check_strict_binding(d: usize) -> Result<bool> {
    let s = euclidean_sobolev_constant(d)?;
    Ok(s * s < a_opt_product_critical(d)?)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BLowerBound {
    pub value: f64,
    /// The bound is only established for `d >= 4`.
    pub dimension_caveat: bool,
}

/// `(d-2)/(4(d-1)) · S_d² · max R_g`.
pub fn b_lower_bound(model: &ManifoldModel) -> Result<BLowerBound> {
    let d = model.dim as f64;
    let s = euclidean_sobolev_constant(model.dim)?;
    Ok(BLowerBound {
        value: (d - 2.0) / (4.0 * (d - 1.0)) * s * s * model.scalar_curvature,
        dimension_caveat: model.dim < 4,
    })
}

/// Best lower bound for `B_opt_{2*}` found by multistart ascent.
#[derive(Debug, Clone, Serialize)]
pub struct BOptEstimate {
    pub value: f64,
    pub best_start: usize,
    pub starts: usize,
    pub start_values: Vec<f64>,
}

/// Ascent iterations per start in [`estimate_b_opt`].
const B_ASCENT_ITERS: usize = 60;

/// Lower bound for `B_opt_{2*}(M) = sup_u (‖u‖²_{2*} - S_d² ‖∇u‖²) / ‖u‖²`.
///
/// Every evaluated function yields a valid lower bound, so the result is the
/// best value seen over `budget` starts (constants, eigenfunction
/// perturbations, bubbles on the sphere, then seeded random fields), each
/// improved by a preconditioned ascent. Starts run in parallel; the maximum
/// is reduced deterministically with ties going to the lowest start index.
pub fn estimate_b_opt(disc: &Arc<Discretization>, budget: usize, seed: u64) -> Result<BOptEstimate> {
    let budget = budget.max(1);
    let ratio = SobolevRatio::new(disc)?;
    let starts = b_opt_starts(disc, budget, seed)?;
    let values: Vec<f64> = starts
        .par_iter()
        .map(|u| ratio.ascend(u.values().clone(), B_ASCENT_ITERS))
        .collect();
    let (best_start, value) = values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, v)| if *v > bv { (i, *v) } else { (bi, bv) });
    Ok(BOptEstimate {
        value,
        best_start,
        starts: values.len(),
        start_values: values,
    })
}

fn b_opt_starts(disc: &Arc<Discretization>, budget: usize, seed: u64) -> Result<Vec<DiscreteFunction>> {
    let mut starts = vec![DiscreteFunction::constant(disc, 1.0)];
    let eig = disc.laplace_eigenpairs(4.min(disc.n()))?;
    let c = 1.0 / disc.total_volume().sqrt();
    for phi in eig.eigenfunctions.iter().skip(1) {
        for s in [0.3, -0.3] {
            starts.push(DiscreteFunction::constant(disc, c).add_scaled(s, phi)?);
        }
    }
    if disc.model().kind == ModelKind::SphereRadial {
        for b in [0.3, 0.6, 0.9] {
            starts.push(bubble(disc, 1.0, b)?);
        }
    }
    let mut k = 0;
    while starts.len() < budget {
        let mut g = rng::stream(seed, k);
        starts.push(rng::random_positive_field(disc, &mut g, 8, 0.8)?);
        k += 1;
    }
    starts.truncate(budget);
    Ok(starts)
}

/// `R(u) = (‖u‖²_{2*} - S_d² ‖∇u‖²) / ‖u‖²_{L²}`.
struct SobolevRatio {
    disc: Arc<Discretization>,
    s_sq: f64,
    p: f64,
    precond: Cholesky<f64, Dyn>,
}

impl SobolevRatio {
    fn new(disc: &Arc<Discretization>) -> Result<Self> {
        let d = disc.model().dim;
        let s = euclidean_sobolev_constant(d)?;
        let mut h1 = disc.stiffness().clone();
        for (i, w) in disc.quad_weights().iter().enumerate() {
            h1[(i, i)] += w;
        }
        let precond = Cholesky::new(h1)
            .ok_or_else(|| LabError::InvalidParameter("H¹ Gram matrix not positive definite".into()))?;
        Ok(Self {
            disc: disc.clone(),
            s_sq: s * s,
            p: critical_exponent(d),
            precond,
        })
    }

    fn value_and_gradient(&self, u: &DVector<f64>) -> (f64, DVector<f64>) {
        let w = self.disc.quad_weights();
        let p = self.p;
        let ip = self.disc.integrate(u.iter().map(|v| v.abs().powf(p)));
        let lp = ip.powf(2.0 / p);
        let grad = self.disc.stiffness_form(u, u);
        let l2 = self.disc.integrate(u.iter().map(|v| v * v));
        let r = (lp - self.s_sq * grad) / l2;
        let lap = self.disc.laplacian(u);
        let g = DVector::from_fn(u.len(), |i, _| {
            let d_lp = 2.0 * ip.powf(2.0 / p - 1.0) * w[i] * u[i].signum() * u[i].abs().powf(p - 1.0);
            let d_grad = 2.0 * w[i] * lap[i];
            let d_l2 = 2.0 * w[i] * u[i];
            (d_lp - self.s_sq * d_grad) / l2 - r * d_l2 / l2
        });
        (r, g)
    }

    fn value(&self, u: &DVector<f64>) -> f64 {
        let ip = self.disc.integrate(u.iter().map(|v| v.abs().powf(self.p)));
        let grad = self.disc.stiffness_form(u, u);
        let l2 = self.disc.integrate(u.iter().map(|v| v * v));
        (ip.powf(2.0 / self.p) - self.s_sq * grad) / l2
    }

    /// Preconditioned ascent with backtracking; returns the best value seen.
    fn ascend(&self, mut u: DVector<f64>, iters: usize) -> f64 {
        let (mut best, _) = self.value_and_gradient(&u);
        let mut step = 1.0;
        for _ in 0..iters {
            let (r, g) = self.value_and_gradient(&u);
            let dir = self.precond.solve(&g);
            let slope = g.dot(&dir);
            if !(slope > 0.0) || !slope.is_finite() {
                break;
            }
            let scale = u.norm() / dir.norm().max(1e-300);
            let mut accepted = false;
            for _ in 0..40 {
                let trial = &u + &dir * (step * scale);
                let rt = self.value(&trial);
                if rt.is_finite() && rt >= r + 1e-4 * step * scale * slope {
                    u = trial;
                    best = best.max(rt);
                    accepted = true;
                    step = (step * 2.0).min(1.0);
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        best
    }
}

/// Everything the constants table reports for one `(model, q)`.
#[derive(Debug, Clone, Serialize)]
pub struct ConstantsReport {
    pub schema_version: u32,
    pub model: ManifoldModel,
    pub q: f64,
    pub n: usize,
    pub s_d: f64,
    pub alpha: f64,
    pub beta: f64,
    pub a_opt: f64,
    pub a_opt_provenance: Provenance,
    pub a_opt_claimed_optimal: bool,
    pub spectral_gap_value: f64,
    pub lambda: f64,
    pub b_lower: f64,
    pub b_lower_dimension_caveat: bool,
    pub b_opt_estimate: Option<f64>,
    pub strict_binding: bool,
    pub yamabe: Option<f64>,
}

/// Builds the constants table for `model` at exponent `q` (default `2*`).
pub fn constants_report(
    model: &ManifoldModel,
    q: Option<f64>,
    n: usize,
    b_budget: Option<(usize, u64)>,
) -> Result<ConstantsReport> {
    let d = model.dim;
    let crit = model.critical_exponent();
    let q = q.unwrap_or(crit);
    check_exponent(model, q)?;
    let critical = (q - crit).abs() <= 1e-12 * crit;
    let disc = Discretization::build(model, n)?;
    let s_d = euclidean_sobolev_constant(d)?;
    let (a_opt, provenance, claimed, gap) = match model.kind {
        ModelKind::SphereRadial => {
            let gap = a_opt_spectral_gap(&disc, q, ExtremalAssumption::ConstantsOnly)?;
            (a_opt_sphere_closed_form(d, q)?, Provenance::ClosedFormSphere, true, gap)
        }
        ModelKind::ProductCircle if critical => {
            let gap = a_opt_spectral_gap(&disc, q, ExtremalAssumption::ConstantsOnly)?;
            (a_opt_product_critical(d)?, Provenance::ProductCritical, true, gap)
        }
        ModelKind::ProductCircle => {
            let gap = a_opt_spectral_gap(&disc, q, ExtremalAssumption::Unverified)?;
            (gap.value, Provenance::SpectralGap, false, gap)
        }
    };
    let b_low = b_lower_bound(model)?;
    let b_opt_estimate = match b_budget {
        Some((budget, seed)) => Some(estimate_b_opt(&disc, budget, seed)?.value),
        None => None,
    };
    Ok(ConstantsReport {
        schema_version: 1,
        model: model.clone(),
        q,
        n,
        s_d,
        alpha: s_d * s_d,
        beta: beta_constant(model),
        a_opt,
        a_opt_provenance: provenance,
        a_opt_claimed_optimal: claimed,
        spectral_gap_value: gap.value,
        lambda: gap.lambda,
        b_lower: b_low.value,
        b_lower_dimension_caveat: b_low.dimension_caveat,
        b_opt_estimate,
        strict_binding: check_strict_binding(d)?,
        yamabe: match model.kind {
            ModelKind::ProductCircle => Some(yamabe_product(d)?),
            ModelKind::SphereRadial => None,
        },
    })
}

impl ConstantsReport {
    /// Aligned two-column text table.
    pub fn to_table(&self) -> String {
        let kind = match self.model.kind {
            ModelKind::SphereRadial => "sphere",
            ModelKind::ProductCircle => "product",
        };
        let provenance = match self.a_opt_provenance {
            Provenance::ClosedFormSphere => "closed-form-sphere",
            Provenance::SpectralGap => "spectral-gap",
            Provenance::ProductCritical => "product-critical",
        };
        let mut rows: Vec<(String, String)> = vec![
            ("model".into(), kind.into()),
            ("d".into(), self.model.dim.to_string()),
            ("q".into(), format!("{:.12}", self.q)),
            ("n".into(), self.n.to_string()),
            ("volume".into(), format!("{:.15e}", self.model.total_volume)),
            ("scalar_curvature".into(), format!("{:.15e}", self.model.scalar_curvature)),
            ("S_d".into(), format!("{:.15e}", self.s_d)),
            ("alpha = S_d^2".into(), format!("{:.15e}", self.alpha)),
            ("beta".into(), format!("{:.15e}", self.beta)),
            ("A_opt".into(), format!("{:.15e}", self.a_opt)),
            ("A_opt provenance".into(), provenance.into()),
            ("A_opt claimed optimal".into(), self.a_opt_claimed_optimal.to_string()),
            ("spectral-gap A".into(), format!("{:.15e}", self.spectral_gap_value)),
            ("lambda".into(), format!("{:.15e}", self.lambda)),
            ("B lower bound".into(), format!("{:.15e}", self.b_lower)),
            ("B bound needs d>=4".into(), self.b_lower_dimension_caveat.to_string()),
            ("strict_binding".into(), self.strict_binding.to_string()),
        ];
        if let Some(b) = self.b_opt_estimate {
            rows.push(("B_opt estimate (lower)".into(), format!("{b:.15e}")));
        }
        if let Some(y) = self.yamabe {
            rows.push(("Yamabe constant".into(), format!("{y:.15e}")));
        }
        let width = rows.iter().map(|r| r.0.chars().count()).max().unwrap_or(0);
        rows.iter()
            .map(|(k, v)| format!("{k:<width$}  {v}\n"))
            .collect()
    }
}

/// Matrix used by tests to cross-check the spectral gap independently.
#[cfg(test)]
fn dense_gap(disc: &Discretization) -> f64 {
    let n = disc.n();
    let l = disc.laplace_matrix();
    let dense = nalgebra::DMatrix::from_fn(n, n, |i, j| l[(i, j)]);
    let mut ev: Vec<f64> = dense.complex_eigenvalues().iter().map(|z| z.re).collect();
    ev.sort_by(f64::total_cmp);
    ev[1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn sobolev_constant_values() {
        let s3 = euclidean_sobolev_constant(3).unwrap();
        assert_relative_eq!(s3, (4.0f64 / 3.0).sqrt() * (2.0 * PI * PI).powf(-1.0 / 3.0), max_relative = 1e-14);
        let s4 = euclidean_sobolev_constant(4).unwrap();
        assert_relative_eq!(s4, 0.5f64.sqrt() * (8.0 * PI * PI / 3.0).powf(-0.25), max_relative = 1e-14);
        for d in 3..=10 {
            assert!(euclidean_sobolev_constant(d).unwrap() > 0.0);
        }
        assert!(euclidean_sobolev_constant(2).is_err());
    }

    #[test]
    fn beta_values() {
        let s3 = ManifoldModel::sphere(3).unwrap();
        assert_relative_eq!(beta_constant(&s3), (2.0 * PI * PI).powf(-2.0 / 3.0), max_relative = 1e-14);
        let p4 = ManifoldModel::product(4).unwrap();
        assert_relative_eq!(
            beta_constant(&p4),
            (2.0f64.sqrt() * PI * 2.0 * PI * PI).powf(-0.5),
            max_relative = 1e-14
        );
        let mut doubled = p4.clone();
        doubled.total_volume *= 2.0;
        assert_relative_eq!(beta_constant(&doubled), beta_constant(&p4) * 2.0f64.powf(-0.5), max_relative = 1e-14);
    }

    #[test]
    fn spectral_gap_on_s3() {
        let disc = Discretization::build(&ManifoldModel::sphere(3).unwrap(), 64).unwrap();
        let gap = a_opt_spectral_gap(&disc, 4.0, ExtremalAssumption::ConstantsOnly).unwrap();
        assert_relative_eq!(gap.value, 2.0 / 3.0 * (2.0 * PI * PI).powf(-0.5), max_relative = 1e-10);
        assert!(gap.claimed_optimal);
        assert_relative_eq!(gap.lambda, dense_gap(&disc), max_relative = 1e-8);
        let unverified = a_opt_spectral_gap(&disc, 4.0, ExtremalAssumption::Unverified).unwrap();
        assert!(!unverified.claimed_optimal);
        assert!(a_opt_spectral_gap(&disc, 7.0, ExtremalAssumption::Unverified).is_err());
    }

    #[test]
    fn product_critical_agrees_with_spectral_gap() {
        for d in [3, 4, 6] {
            let model = ManifoldModel::product(d).unwrap();
            let disc = Discretization::build(&model, 64).unwrap();
            let gap = a_opt_spectral_gap(&disc, model.critical_exponent(), ExtremalAssumption::ConstantsOnly).unwrap();
            assert_relative_eq!(gap.value, a_opt_product_critical(d).unwrap(), max_relative = 1e-10);
        }
        let p4 = ManifoldModel::product(4).unwrap();
        assert_relative_eq!(a_opt_product_critical(4).unwrap(), p4.total_volume.powf(-0.5), max_relative = 1e-14);
        let p3 = ManifoldModel::product(3).unwrap();
        assert_relative_eq!(a_opt_product_critical(3).unwrap(), 4.0 * p3.total_volume.powf(-2.0 / 3.0), max_relative = 1e-14);
        for d in 3..=8 {
            assert_relative_eq!(yamabe_product(d).unwrap() * a_opt_product_critical(d).unwrap(), 1.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn strict_binding_holds() {
        for d in 3..=10 {
            assert!(check_strict_binding(d).unwrap(), "d = {d}");
            // reduced form 4/(d(d-2)) < 4/(d-2)^2 (d-2)^{1/d}
            let df = d as f64;
            assert!(4.0 / (df * (df - 2.0)) < 4.0 / (df - 2.0).powi(2) * (df - 2.0).powf(1.0 / df));
        }
    }

    #[test]
    fn b_lower_bounds() {
        let s4 = euclidean_sobolev_constant(4).unwrap();
        let p4 = b_lower_bound(&ManifoldModel::product(4).unwrap()).unwrap();
        assert_relative_eq!(p4.value, s4 * s4, max_relative = 1e-14);
        assert!(!p4.dimension_caveat);
        let sph = b_lower_bound(&ManifoldModel::sphere(4).unwrap()).unwrap();
        assert_relative_eq!(sph.value, 2.0 * s4 * s4, max_relative = 1e-14);
        assert!(b_lower_bound(&ManifoldModel::sphere(3).unwrap()).unwrap().dimension_caveat);
        let mut flat = ManifoldModel::product(4).unwrap();
        flat.scalar_curvature = -1.0;
        assert!(b_lower_bound(&flat).unwrap().value <= 0.0);
    }

    #[test]
    fn b_estimate_is_monotone_in_budget() {
        let disc = Discretization::build(&ManifoldModel::product(4).unwrap(), 32).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for budget in [1, 3, 6, 10] {
            let est = estimate_b_opt(&disc, budget, 42).unwrap();
            assert!(est.value >= prev);
            prev = est.value;
        }
        assert!(prev >= beta_constant(disc.model()) - 1e-10);
    }

    #[test]
    fn report_table_mentions_binding() {
        let report = constants_report(&ManifoldModel::product(4).unwrap(), None, 32, None).unwrap();
        assert!(report.strict_binding);
        assert_eq!(report.a_opt_provenance, Provenance::ProductCritical);
        assert!(report.to_table().contains("strict_binding"));
        let sphere = constants_report(&ManifoldModel::sphere(3).unwrap(), Some(4.0), 32, None).unwrap();
        assert_relative_eq!(sphere.a_opt, 2.0 / 3.0 * (2.0 * PI * PI).powf(-0.5), max_relative = 1e-14);
    }
}
