//! The acceptance suite: every check runs independently, records what it
//! measured and how long it took, and never aborts the remaining checks.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::constants::{
    a_opt_product_critical, a_opt_spectral_gap, a_opt_sphere_closed_form, beta_constant, check_strict_binding,
    constant_extremal_b, estimate_b_opt, euclidean_sobolev_constant, ExtremalAssumption,
};
use crate::discretization::{DiscreteFunction, Discretization};
use crate::error::{LabError, Result};
use crate::functionals::{normalize, project_tangent, QuotientSpec};
use crate::geometry::ManifoldModel;
use crate::optimize::{critical_point_at, minimize, tangent_spectrum, MinimizeOptions};
use crate::rng;
use crate::stability::{
    bubble, lojasiewicz_estimate, ray_scan, Classification, ExtremalFamily, LojasiewiczSampling, Ray,
};

pub const DEFAULT_N: usize = 256;
pub const DEFAULT_SEED: u64 = 20240917;

#[derive(Debug, Clone)]
pub struct ReproduceOptions {
    /// Resolution override; `None` runs at the documented resolution.
    pub n: Option<usize>,
    /// Restricts the run to these groups or numeric ids.
    pub only: Vec<String>,
    pub seed: u64,
}

impl Default for ReproduceOptions {
    fn default() -> Self {
        Self {
            n: None,
            only: Vec::new(),
            seed: DEFAULT_SEED,
        }
    }
}

impl ReproduceOptions {
    fn n(&self) -> usize {
        self.n.unwrap_or(DEFAULT_N)
    }

    /// Slope tolerances are widened below the documented resolution:
    /// ×1 at `n >= 256`, ×2 at `128 <= n < 256`, ×4 below.
    pub fn slope_tolerance_factor(&self) -> f64 {
        match self.n() {
            n if n >= 256 => 1.0,
            n if n >= 128 => 2.0,
            _ => 4.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionOutcome {
    pub id: u32,
    pub group: &'static str,
    pub name: &'static str,
    pub measured: String,
    pub tolerance: String,
    pub elapsed_s: f64,
    pub budget_s: f64,
    pub pass: bool,
    pub error: Option<String>,
}

impl CriterionOutcome {
    pub fn line(&self) -> String {
        format!(
            "{} [{:>2}] {:<34} measured: {}  tolerance: {}  time: {:.2}s/{:.0}s{}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.measured,
            self.tolerance,
            self.elapsed_s,
            self.budget_s,
            self.error.as_ref().map(|e| format!("  error: {e}")).unwrap_or_default()
        )
    }
}

struct Measurement {
    measured: String,
    tolerance: String,
    pass: bool,
}

type Check = fn(&ReproduceOptions) -> Result<Measurement>;

struct Criterion {
    id: u32,
    group: &'static str,
    name: &'static str,
    budget_s: f64,
    run: Check,
}

const CRITERIA: &[Criterion] = &[
    Criterion { id: 1, group: "spectrum", name: "sphere spectral gap", budget_s: 3.0, run: spectral_gap },
    Criterion { id: 2, group: "constants", name: "spectral-gap constant vs closed form", budget_s: 9.0, run: constant_consistency },
    Criterion { id: 3, group: "constants", name: "strict binding on product", budget_s: 1.0, run: strict_binding },
    Criterion { id: 4, group: "bubbles", name: "bubble extremality", budget_s: 5.0, run: bubble_extremality },
    Criterion { id: 5, group: "variations", name: "finite-difference variations", budget_s: 30.0, run: variation_formulas },
    Criterion { id: 6, group: "variations", name: "second-variation cancellation", budget_s: 5.0, run: second_variation },
    Criterion { id: 7, group: "scan", name: "quartic exponent on sphere", budget_s: 30.0, run: sphere_ray },
    Criterion { id: 8, group: "scan", name: "quartic exponent on product", budget_s: 30.0, run: product_ray },
    Criterion { id: 9, group: "scan", name: "nondegenerate control", budget_s: 30.0, run: control_ray },
    Criterion { id: 10, group: "lojasiewicz", name: "reduced-functional exponent", budget_s: 120.0, run: lojasiewicz },
    Criterion { id: 11, group: "constants", name: "B estimator soundness", budget_s: 120.0, run: b_estimator },
    Criterion { id: 12, group: "deficit", name: "deficit nonnegativity sweep", budget_s: 120.0, run: deficit_sweep },
];

/// Names accepted by `only`.
pub fn groups() -> Vec<&'static str> {
    let mut g: Vec<&'static str> = CRITERIA.iter().map(|c| c.group).collect();
    g.dedup();
    g.sort_unstable();
    g.dedup();
    g
}

fn selected(opts: &ReproduceOptions, c: &Criterion) -> bool {
    opts.only.is_empty() || opts.only.iter().any(|s| s == c.group || s.parse::<u32>().ok() == Some(c.id))
}

/// Validates `only` against the known groups and ids.
pub fn validate_selection(only: &[String]) -> Result<()> {
    for s in only {
        let known = CRITERIA.iter().any(|c| c.group == s || s.parse::<u32>().ok() == Some(c.id));
        if !known {
            return Err(LabError::InvalidParameter(format!(
                "unknown criterion '{s}' (groups: {}, ids 1..={})",
                groups().join(", "),
                CRITERIA.len()
            )));
        }
    }
    Ok(())
}

/// Runs the selected criteria in order. A check passes only if it meets its
/// tolerance within its time budget.
pub fn run(opts: &ReproduceOptions, mut on_outcome: impl FnMut(&CriterionOutcome)) -> Vec<CriterionOutcome> {
    let mut out = Vec::new();
    for c in CRITERIA.iter().filter(|c| selected(opts, c)) {
        let start = Instant::now();
        let result = (c.run)(opts);
        let elapsed_s = start.elapsed().as_secs_f64();
        let outcome = match result {
            Ok(m) => CriterionOutcome {
                id: c.id,
                group: c.group,
                name: c.name,
                measured: m.measured,
                tolerance: m.tolerance,
                elapsed_s,
                budget_s: c.budget_s,
                pass: m.pass && elapsed_s <= c.budget_s,
                error: (elapsed_s > c.budget_s).then(|| "time budget exceeded".to_string()),
            },
            Err(e) => CriterionOutcome {
                id: c.id,
                group: c.group,
                name: c.name,
                measured: "-".into(),
                tolerance: "-".into(),
                elapsed_s,
                budget_s: c.budget_s,
                pass: false,
                error: Some(e.to_string()),
            },
        };
        on_outcome(&outcome);
        out.push(outcome);
    }
    out
}

fn sphere(d: usize, n: usize) -> Result<Arc<Discretization>> {
    Discretization::build(&ManifoldModel::sphere(d)?, n)
}

fn optimal_sphere_spec(d: usize, q: f64, inflate: f64, n: usize) -> Result<QuotientSpec> {
    let disc = sphere(d, n)?;
    let b = constant_extremal_b(disc.model(), q);
    QuotientSpec::new(a_opt_sphere_closed_form(d, q)? * inflate, b, q, disc)
}

fn product_critical_spec(d: usize, n: usize) -> Result<QuotientSpec> {
    let model = ManifoldModel::product(d)?;
    let disc = Discretization::build(&model, n)?;
    QuotientSpec::new(a_opt_product_critical(d)?, beta_constant(&model), model.critical_exponent(), disc)
}

fn spectral_gap(opts: &ReproduceOptions) -> Result<Measurement> {
    let mut worst = 0.0f64;
    for d in [3, 4, 5] {
        let disc = sphere(d, opts.n())?;
        let lambda = disc.laplace_eigenpairs(2)?.eigenvalues[1];
        worst = worst.max((lambda - d as f64).abs() / d as f64);
    }
    Ok(Measurement {
        measured: format!("max rel err {worst:.2e}"),
        tolerance: "< 1e-8".into(),
        pass: worst < 1e-8,
    })
}

fn constant_consistency(opts: &ReproduceOptions) -> Result<Measurement> {
    let mut worst = 0.0f64;
    for d in [3, 4, 5] {
        let disc = sphere(d, opts.n())?;
        for q in [2.5, 3.0, 4.0] {
            let err = if q <= disc.model().critical_exponent() {
                let gap = a_opt_spectral_gap(&disc, q, ExtremalAssumption::ConstantsOnly)?;
                (gap.value - a_opt_sphere_closed_form(d, q)?).abs()
            } else {
                // above 2*, compare the two formulas directly
                let lambda = disc.laplace_eigenpairs(2)?.eigenvalues[1];
                let b = constant_extremal_b(disc.model(), q);
                ((q - 2.0) / lambda * b - (q - 2.0) / d as f64 * b).abs()
            };
            worst = worst.max(err);
        }
    }
    Ok(Measurement {
        measured: format!("max abs err {worst:.2e}"),
        tolerance: "< 1e-10".into(),
        pass: worst < 1e-10,
    })
}

fn strict_binding(_: &ReproduceOptions) -> Result<Measurement> {
    let failing: Vec<usize> = (3..=10)
        .filter(|&d| !check_strict_binding(d).unwrap_or(false))
        .collect();
    Ok(Measurement {
        measured: if failing.is_empty() {
            "true for d = 3..10".into()
        } else {
            format!("false for d in {failing:?}")
        },
        tolerance: "all true".into(),
        pass: failing.is_empty(),
    })
}

fn bubble_extremality(opts: &ReproduceOptions) -> Result<Measurement> {
    let disc = sphere(3, opts.n())?;
    let s = euclidean_sobolev_constant(3)?;
    let q = disc.model().critical_exponent();
    let spec = QuotientSpec::new(s * s, beta_constant(disc.model()), q, disc.clone())?;
    let mut worst = 0.0f64;
    for b in [0.3, 0.6, 0.9] {
        worst = worst.max(spec.deficit(&bubble(&disc, 1.0, b)?)?.abs());
    }
    Ok(Measurement {
        measured: format!("max |Q-1| {worst:.2e}"),
        tolerance: "< 1e-6".into(),
        pass: worst < 1e-6,
    })
}

/// Relative errors of the first and second variation against central
/// differences of `Q` along tangent directions.
fn fd_errors(spec: &QuotientSpec, seed: u64, index: u64) -> Result<(f64, f64)> {
    let disc = spec.disc();
    let q = spec.q();
    let mut g = rng::stream(seed, index);
    let u = normalize(&rng::random_positive_field(disc, &mut g, 6, 0.6)?, q)?.function;
    let phi_raw = rng::random_smooth_field(disc, &mut g, 6)?;
    let eta_raw = rng::random_smooth_field(disc, &mut g, 6)?;
    let quot = |f: &DiscreteFunction| spec.quotient(f);

    let grad = spec.gradient(&u)?;
    let analytic = disc.inner(&grad, &phi_raw)?;
    let h = 1e-5;
    let fd = (quot(&u.add_scaled(h, &phi_raw)?)? - quot(&u.add_scaled(-h, &phi_raw)?)?) / (2.0 * h);
    let grad_scale = analytic.abs().max(disc.inner(&grad.map(f64::abs), &phi_raw.map(f64::abs))?);
    let grad_err = (fd - analytic).abs() / grad_scale;

    let phi = project_tangent(&u, &phi_raw, q)?;
    let eta = project_tangent(&u, &eta_raw, q)?;
    let analytic = spec.hessian_form(&u, &phi, &eta)?;
    let h = 1e-3;
    let at = |s: f64, t: f64| -> Result<f64> { quot(&u.add_scaled(s, &phi)?.add_scaled(t, &eta)?) };
    let fd = (at(h, h)? - at(h, -h)? - at(-h, h)? + at(-h, -h)?) / (4.0 * h * h);
    let energy = 2.0 * (spec.a() * disc.gradient_norm_sq(&phi)?.sqrt() * disc.gradient_norm_sq(&eta)?.sqrt()
        + spec.b() * disc.lp_norm(&phi, 2.0)? * disc.lp_norm(&eta, 2.0)?);
    let hess_err = (fd - analytic).abs() / analytic.abs().max(energy);
    Ok((grad_err, hess_err))
}

fn variation_formulas(opts: &ReproduceOptions) -> Result<Measurement> {
    let n = opts.n().min(128);
    let specs = [
        optimal_sphere_spec(3, 4.0, 1.0, n)?,
        product_critical_spec(4, n - n % 2)?,
    ];
    let mut worst = (0.0f64, 0.0f64);
    for (k, spec) in specs.iter().enumerate() {
        let errs: Vec<Result<(f64, f64)>> = (0..50u64)
            .into_par_iter()
            .map(|i| fd_errors(spec, opts.seed, 1000 * k as u64 + i))
            .collect();
        for e in errs {
            let (g, h) = e?;
            worst = (worst.0.max(g), worst.1.max(h));
        }
    }
    Ok(Measurement {
        measured: format!("grad {:.2e}, hess {:.2e}", worst.0, worst.1),
        tolerance: "grad < 1e-5, hess < 1e-4".into(),
        pass: worst.0 < 1e-5 && worst.1 < 1e-4,
    })
}

fn second_variation(opts: &ReproduceOptions) -> Result<Measurement> {
    let spec = optimal_sphere_spec(3, 4.0, 1.0, opts.n())?;
    let disc = spec.disc();
    let c = normalize(&DiscreteFunction::constant(disc, 1.0), spec.q())?.function;
    let phi1 = disc.laplace_eigenpairs(2)?.eigenfunctions[1].clone();
    let ts = tangent_spectrum(&spec, &c)?;
    let overlaps: Vec<f64> = ts
        .eigenfunctions
        .iter()
        .map(|f| disc.inner(f, &phi1).map(f64::abs))
        .collect::<Result<_>>()?;
    let k = overlaps
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| LabError::Precondition("empty spectrum".into()))?;
    let on_phi = ts.eigenvalues[k].abs();
    let next = ts
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != k)
        .map(|(_, l)| *l)
        .fold(f64::INFINITY, f64::min);
    Ok(Measurement {
        measured: format!("|λ(φ1)| {on_phi:.2e}, next {next:.3e}"),
        tolerance: "< 1e-8, next > 1e-2".into(),
        pass: on_phi < 1e-8 && next > 1e-2,
    })
}

fn slope_measurement(slope: Option<f64>, target: f64, tol: f64) -> Measurement {
    Measurement {
        measured: slope.map_or("no fit".into(), |s| format!("slope {s:.4}")),
        tolerance: format!("{target:.2} ± {tol:.2}"),
        pass: slope.is_some_and(|s| (s - target).abs() <= tol),
    }
}

fn sphere_ray(opts: &ReproduceOptions) -> Result<Measurement> {
    let spec = optimal_sphere_spec(3, 4.0, 1.0, opts.n())?;
    let ray = Ray::from_constants(spec.disc(), spec.q(), 1)?;
    let report = ray_scan(&spec, &ray, ExtremalFamily::Constants, Some(opts.seed))?;
    Ok(slope_measurement(report.fitted_slope, 4.0, 0.05 * opts.slope_tolerance_factor()))
}

fn product_ray(opts: &ReproduceOptions) -> Result<Measurement> {
    let n = opts.n();
    let spec = product_critical_spec(4, n - n % 2)?;
    let ray = Ray::from_constants(spec.disc(), spec.q(), 1)?;
    let report = ray_scan(&spec, &ray, ExtremalFamily::Constants, Some(opts.seed))?;
    Ok(slope_measurement(report.fitted_slope, 4.0, 0.05 * opts.slope_tolerance_factor()))
}

fn control_ray(opts: &ReproduceOptions) -> Result<Measurement> {
    let spec = optimal_sphere_spec(3, 4.0, 1.1, opts.n())?;
    let ray = Ray::from_constants(spec.disc(), spec.q(), 1)?;
    let report = ray_scan(&spec, &ray, ExtremalFamily::Constants, Some(opts.seed))?;
    let mut g = rng::stream(opts.seed, 0);
    let init = rng::random_positive_field(spec.disc(), &mut g, 8, 0.5)?;
    let cp = minimize(&spec, &init, &MinimizeOptions::default())?;
    let mut m = slope_measurement(report.fitted_slope, 2.0, 0.05 * opts.slope_tolerance_factor());
    m.measured = format!("{}, kernel_dim {}, converged {}", m.measured, cp.kernel_dim, cp.converged);
    m.tolerance = format!("{}, kernel_dim 0", m.tolerance);
    m.pass &= cp.kernel_dim == 0 && cp.converged && report.classification == Classification::Nondegenerate;
    Ok(m)
}

fn lojasiewicz(opts: &ReproduceOptions) -> Result<Measurement> {
    let spec = optimal_sphere_spec(3, 4.0, 1.0, opts.n())?;
    let c = DiscreteFunction::constant(spec.disc(), 1.0);
    let cp = critical_point_at(&spec, &c, &MinimizeOptions::default())?;
    let est = lojasiewicz_estimate(&spec, &cp, &LojasiewiczSampling::default())?;
    let used = est.samples.iter().filter(|s| s.used).count();
    let mut m = slope_measurement(est.exponent, 4.0, 0.1 * opts.slope_tolerance_factor());
    m.measured = format!("{} ({used} samples)", m.measured.replace("slope", "exponent"));
    Ok(m)
}

fn b_estimator(opts: &ReproduceOptions) -> Result<Measurement> {
    let n = opts.n();
    let sphere_disc = sphere(3, n)?;
    let product_disc = Discretization::build(&ManifoldModel::product(4)?, n - n % 2)?;
    let s = estimate_b_opt(&sphere_disc, 16, opts.seed)?;
    let p = estimate_b_opt(&product_disc, 16, opts.seed)?;
    let beta_s = beta_constant(sphere_disc.model());
    let beta_p = beta_constant(product_disc.model());
    let sphere_gap = s.value - beta_s;
    let product_gap = p.value - beta_p;
    Ok(Measurement {
        measured: format!("S3: est-β {sphere_gap:.2e}; M*: est-β {product_gap:.2e}"),
        tolerance: "est ≥ β-1e-10; |est-β| < 1e-6 on S3".into(),
        pass: sphere_gap >= -1e-10 && product_gap >= -1e-10 && sphere_gap.abs() < 1e-6,
    })
}

fn deficit_sweep(opts: &ReproduceOptions) -> Result<Measurement> {
    const SAMPLES: u64 = 10_000;
    let spec = optimal_sphere_spec(3, 4.0, 1.0, opts.n())?;
    let disc = spec.disc();
    let deficits: Vec<Result<f64>> = (0..SAMPLES)
        .into_par_iter()
        .map(|i| {
            let mut g = rng::stream(opts.seed ^ 0x5eed, i);
            let modes = 2 + (i % 15) as usize;
            let u = if i % 2 == 0 {
                rng::random_positive_field(disc, &mut g, modes, 0.95)?
            } else {
                rng::random_smooth_field(disc, &mut g, modes)?
            };
            spec.deficit(&u)
        })
        .collect();
    let mut min = f64::INFINITY;
    for d in deficits {
        min = min.min(d?);
    }
    Ok(Measurement {
        measured: format!("min deficit {min:.3e} over {SAMPLES}"),
        tolerance: "≥ -1e-8".into(),
        pass: min >= -1e-8,
    })
}
