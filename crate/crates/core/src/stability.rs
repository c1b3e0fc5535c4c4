//! Deficit versus distance experiments near extremal functions.

use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::{DiscreteFunction, Discretization};
use crate::error::{LabError, Result};
use crate::functionals::{normalize, project_tangent, tangent_pairing, QuotientSpec};
use crate::geometry::{ManifoldModel, ModelKind};
use crate::optimize::{CriticalPoint, Reduction};

/// Fitted exponents above `2 + CLASSIFY_MARGIN` count as degenerate.
pub const CLASSIFY_MARGIN: f64 = 0.5;
/// Points with deficit below this multiple of the noise floor are not fitted.
pub const NOISE_MULTIPLE: f64 = 100.0;
/// Minimum number of points for a fit.
pub const MIN_FIT_POINTS: usize = 5;
const BUBBLE_B_MAX: f64 = 1.0 - 1e-6;

/// `a (1 - b cos t)^{(2-d)/2}` on the radial sphere model, pole at `t = 0`.
pub fn bubble(disc: &Arc<Discretization>, a: f64, b: f64) -> Result<DiscreteFunction> {
    if disc.model().kind != ModelKind::SphereRadial {
        return Err(LabError::Precondition("bubbles are defined on the sphere model".into()));
    }
    if !(b > 0.0 && b < 1.0) {
        return Err(LabError::InvalidParameter(format!("bubble parameter b = {b} not in (0, 1)")));
    }
    if a == 0.0 || !a.is_finite() {
        return Err(LabError::InvalidParameter(format!("bubble amplitude a = {a}")));
    }
    Ok(bubble_profile(disc, b).scaled(a))
}

/// `(1 - b cos t)^{(2-d)/2}` for any `|b| < 1`; negative `b` moves the pole to `t = π`.
fn bubble_profile(disc: &Arc<Discretization>, b: f64) -> DiscreteFunction {
    let p = (2.0 - disc.model().dim as f64) / 2.0;
    let values = DVector::from_iterator(disc.n(), disc.nodes().iter().map(|t| (1.0 - b * t.cos()).powf(p)));
    DiscreteFunction::from_vector(disc.clone(), values).expect("grid sized vector")
}

/// `Q_q(u) - 1`.
pub fn deficit(spec: &QuotientSpec, u: &DiscreteFunction) -> Result<f64> {
    spec.deficit(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremalFamily {
    Constants,
    /// Nonzero multiples of constants; identical to [`ExtremalFamily::Constants`].
    ConstantsAndScalings,
    /// Bubbles `a (1 - b cos t)^{(2-d)/2}` together with constants (sphere only).
    BubblesAndConstants,
}

fn w12_inner(disc: &Discretization, f: &DVector<f64>, g: &DVector<f64>) -> f64 {
    disc.stiffness_form(f, g) + disc.integrate(f.iter().zip(g.iter()).map(|(a, b)| a * b))
}

/// `inf_v ‖u - v‖_{W^{1,2}} / ‖u‖_{W^{1,2}}` over the family.
pub fn distance_to_extremals(u: &DiscreteFunction, family: ExtremalFamily) -> Result<f64> {
    if u.is_zero() {
        return Err(LabError::ZeroFunction);
    }
    let disc = u.disc();
    let norm = w12_inner(disc, u.values(), u.values()).sqrt();
    let to_constants = {
        let mean = disc.mean(u.values());
        let centered = u.values().map(|v| v - mean);
        (disc.stiffness_form(u.values(), u.values()) + disc.integrate(centered.iter().map(|v| v * v))).sqrt()
    };
    match family {
        ExtremalFamily::Constants | ExtremalFamily::ConstantsAndScalings => Ok(to_constants / norm),
        ExtremalFamily::BubblesAndConstants => {
            if disc.model().kind != ModelKind::SphereRadial {
                return Err(LabError::Precondition("bubble family requires the sphere model".into()));
            }
            let best = bubble_distance(disc, u.values());
            Ok(best.min(to_constants) / norm)
        }
    }
}

fn bubble_residual(disc: &Arc<Discretization>, u: &DVector<f64>, b: f64) -> f64 {
    let g = bubble_profile(disc, b).into_values();
    let a = w12_inner(disc, u, &g) / w12_inner(disc, &g, &g);
    let r = u - g * a;
    w12_inner(disc, &r, &r).max(0.0).sqrt()
}

/// Least squares in `a`, coarse grid plus golden section in `b`.
fn bubble_distance(disc: &Arc<Discretization>, u: &DVector<f64>) -> f64 {
    const GRID: usize = 80;
    let f = |b: f64| bubble_residual(disc, u, b);
    let grid: Vec<f64> = (0..=GRID)
        .map(|i| -BUBBLE_B_MAX + 2.0 * BUBBLE_B_MAX * i as f64 / GRID as f64)
        .collect();
    let values: Vec<f64> = grid.iter().map(|&b| f(b)).collect();
    let (imin, _) = values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) });
    let mut lo = grid[imin.saturating_sub(1)];
    let mut hi = grid[(imin + 1).min(GRID)];
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    let mut best = values[imin];
    for _ in 0..200 {
        if hi - lo < 1e-15 {
            break;
        }
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        }
        best = best.min(f1).min(f2);
    }
    best
}

/// `base + ε direction` for a grid of `ε`.
#[derive(Debug, Clone)]
pub struct Ray {
    base: DiscreteFunction,
    direction: DiscreteFunction,
    epsilons: Vec<f64>,
    signed: bool,
}

/// `m` log-spaced points in `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    if m == 1 {
        return vec![lo];
    }
    (0..m)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (m - 1) as f64).exp())
        .collect()
}

impl Ray {
    pub const DEFAULT_EPS_LO: f64 = 1e-3;
    pub const DEFAULT_EPS_HI: f64 = 1e-1;
    pub const DEFAULT_EPS_COUNT: usize = 25;

    /// Validates a normalized base and a unit, tangent direction.
    pub fn new(
        base: DiscreteFunction,
        direction: DiscreteFunction,
        epsilons: Vec<f64>,
        signed: bool,
        q: f64,
    ) -> Result<Self> {
        if !base.disc().same_grid(direction.disc()) {
            return Err(LabError::Mismatch);
        }
        let pairing = tangent_pairing(&base, &direction, q);
        if pairing.abs() > 1e-10 {
            return Err(LabError::Precondition(format!("direction not tangent: pairing {pairing:e}")));
        }
        let norm = base.disc().sobolev_norm_sq(&direction)?.sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(LabError::Precondition(format!("direction W^{{1,2}} norm {norm}")));
        }
        if epsilons.is_empty() || epsilons.iter().any(|e| !(*e > 0.0)) || epsilons.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LabError::InvalidParameter("epsilons must be positive and increasing".into()));
        }
        Ok(Self {
            base,
            direction,
            epsilons,
            signed,
        })
    }

    /// Normalizes `base`, projects `direction` to the tangent space and scales it
    /// to unit `W^{1,2}` norm.
    pub fn through(base: &DiscreteFunction, direction: &DiscreteFunction, q: f64, epsilons: Vec<f64>) -> Result<Self> {
        let base = normalize(base, q)?.function;
        let tangent = project_tangent(&base, direction, q)?;
        let norm = base.disc().sobolev_norm_sq(&tangent)?.sqrt();
        if !(norm > 0.0) {
            return Err(LabError::ZeroFunction);
        }
        Self::new(base, tangent.scaled(1.0 / norm), epsilons, false, q)
    }

    /// From the normalized constant along the `k`-th Laplace eigenfunction
    /// (`k = 1` is the first nonconstant mode), default grid.
    pub fn from_constants(disc: &Arc<Discretization>, q: f64, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(LabError::InvalidParameter("mode 0 is constant".into()));
        }
        let eig = disc.laplace_eigenpairs(k + 1)?;
        Self::through(
            &DiscreteFunction::constant(disc, 1.0),
            &eig.eigenfunctions[k],
            q,
            log_grid(Self::DEFAULT_EPS_LO, Self::DEFAULT_EPS_HI, Self::DEFAULT_EPS_COUNT),
        )
    }

    pub fn with_epsilons(mut self, epsilons: Vec<f64>) -> Result<Self> {
        if epsilons.is_empty() || epsilons.iter().any(|e| !(*e > 0.0)) || epsilons.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LabError::InvalidParameter("epsilons must be positive and increasing".into()));
        }
        self.epsilons = epsilons;
        Ok(self)
    }

    pub fn signed(mut self, signed: bool) -> Self {
        self.signed = signed;
        self
    }

    pub fn reversed(&self) -> Self {
        Self {
            direction: self.direction.scaled(-1.0),
            ..self.clone()
        }
    }

    pub fn base(&self) -> &DiscreteFunction {
        &self.base
    }

    pub fn direction(&self) -> &DiscreteFunction {
        &self.direction
    }

    pub fn epsilons(&self) -> &[f64] {
        &self.epsilons
    }

    pub fn is_signed(&self) -> bool {
        self.signed
    }

    /// Signed parameters actually scanned, in output order.
    fn parameters(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        if self.signed {
            out.extend(self.epsilons.iter().rev().map(|e| -e));
        }
        out.extend(self.epsilons.iter().copied());
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Degenerate,
    Nondegenerate,
    Inconclusive,
}

impl Classification {
    /// Classification of a single fitted exponent.
    pub fn of_exponent(exponent: Option<f64>) -> Self {
        match exponent {
            Some(s) if s > 2.0 + CLASSIFY_MARGIN => Self::Degenerate,
            Some(s) if (s - 2.0).abs() <= CLASSIFY_MARGIN => Self::Nondegenerate,
            _ => Self::Inconclusive,
        }
    }
}

/// Degenerate or nondegenerate only if every exponent agrees.
pub fn classify(exponents: &[Option<f64>]) -> Classification {
    let classes: Vec<Classification> = exponents.iter().map(|e| Classification::of_exponent(*e)).collect();
    match classes.first() {
        Some(&first) if classes.iter().all(|c| *c == first) => first,
        _ => Classification::Inconclusive,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScanRow {
    pub epsilon: f64,
    pub deficit: f64,
    pub distance: f64,
    pub q_value: f64,
    pub in_fit_window: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReportProvenance {
    pub a: f64,
    pub b: f64,
    pub q: f64,
    pub model: ManifoldModel,
    pub n: usize,
    pub seed: Option<u64>,
    pub family: ExtremalFamily,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub rows: Vec<ScanRow>,
    pub fitted_slope: Option<f64>,
    pub slope_stderr: Option<f64>,
    pub fit_window: Option<[f64; 2]>,
    pub intercept: Option<f64>,
    /// Largest `|log deficit - fit|` inside the window.
    pub max_log_residual: Option<f64>,
    pub noise_floor: f64,
    pub classification: Classification,
    pub provenance: ReportProvenance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub max_residual: f64,
}

/// Ordinary least squares of `ln y` against `ln x`.
pub fn fit_loglog(x: &[f64], y: &[f64]) -> Result<LogLogFit> {
    if x.len() != y.len() {
        return Err(LabError::Mismatch);
    }
    if x.len() < 2 {
        return Err(LabError::InvalidParameter("need at least two points".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(LabError::InvalidParameter("log-log fit needs positive finite data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(LabError::InvalidParameter("abscissae are all equal".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = lx.iter().zip(&ly).map(|(a, b)| b - (intercept + slope * a)).collect();
    let ssr: f64 = residuals.iter().map(|r| r * r).sum();
    let stderr = if lx.len() > 2 {
        (ssr / (m - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LogLogFit {
        slope,
        intercept,
        stderr,
        max_residual: residuals.iter().fold(0.0f64, |a, r| a.max(r.abs())),
    })
}

/// Deficit and distance along `ray`, with a log-log fit over the points
/// whose deficit clears `NOISE_MULTIPLE` times the noise floor
/// `max(|deficit(base)|, machine epsilon)`.
pub fn ray_scan(spec: &QuotientSpec, ray: &Ray, family: ExtremalFamily, seed: Option<u64>) -> Result<ExperimentReport> {
    let disc = spec.disc();
    if !disc.same_grid(ray.base.disc()) {
        return Err(LabError::Mismatch);
    }
    let noise_floor = spec.deficit(&ray.base)?.abs().max(f64::EPSILON);
    let threshold = NOISE_MULTIPLE * noise_floor;
    let params = ray.parameters();
    let rows: Vec<Result<ScanRow>> = params
        .par_iter()
        .map(|&eps| {
            let u = ray.base.add_scaled(eps, &ray.direction)?;
            let deficit = spec.deficit(&u)?;
            let distance = distance_to_extremals(&u, family)?;
            Ok(ScanRow {
                epsilon: eps,
                deficit,
                distance,
                q_value: spec.quotient(&u)?,
                in_fit_window: deficit.is_finite() && deficit >= threshold && distance > 0.0,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let provenance = ReportProvenance {
        a: spec.a(),
        b: spec.b(),
        q: spec.q(),
        model: disc.model().clone(),
        n: disc.n(),
        seed,
        family,
    };
    Ok(report_from_rows(rows, noise_floor, provenance))
}

fn report_from_rows(rows: Vec<ScanRow>, noise_floor: f64, provenance: ReportProvenance) -> ExperimentReport {
    let window: Vec<&ScanRow> = rows.iter().filter(|r| r.in_fit_window).collect();
    let fit = if window.len() >= MIN_FIT_POINTS {
        let x: Vec<f64> = window.iter().map(|r| r.distance).collect();
        let y: Vec<f64> = window.iter().map(|r| r.deficit).collect();
        fit_loglog(&x, &y).ok()
    } else {
        None
    };
    let fit_window = fit.map(|_| {
        let lo = window.iter().map(|r| r.epsilon.abs()).fold(f64::INFINITY, f64::min);
        let hi = window.iter().map(|r| r.epsilon.abs()).fold(0.0, f64::max);
        [lo, hi]
    });
    ExperimentReport {
        schema_version: 1,
        fitted_slope: fit.map(|f| f.slope),
        slope_stderr: fit.map(|f| f.stderr),
        intercept: fit.map(|f| f.intercept),
        max_log_residual: fit.map(|f| f.max_residual),
        fit_window,
        noise_floor,
        classification: Classification::of_exponent(fit.map(|f| f.slope)),
        provenance,
        rows,
    }
}

impl ExperimentReport {
    /// Refits after dropping the `lo` smallest and `hi` largest in-window points.
    pub fn refit_trimmed(&self, lo: usize, hi: usize) -> Option<LogLogFit> {
        let mut window: Vec<&ScanRow> = self.rows.iter().filter(|r| r.in_fit_window).collect();
        window.sort_by(|a, b| a.distance.total_cmp(&b.distance));
        if window.len() < lo + hi + MIN_FIT_POINTS {
            return None;
        }
        let kept = &window[lo..window.len() - hi];
        let x: Vec<f64> = kept.iter().map(|r| r.distance).collect();
        let y: Vec<f64> = kept.iter().map(|r| r.deficit).collect();
        fit_loglog(&x, &y).ok()
    }

    /// Recomputes the fit from the stored rows (used when re-fitting a saved report).
    pub fn refit(&self) -> Self {
        report_from_rows(self.rows.clone(), self.noise_floor, self.provenance.clone())
    }
}

/// Kernel-coordinate magnitudes for [`lojasiewicz_estimate`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LojasiewiczSampling {
    pub magnitudes: Vec<f64>,
    /// Also sample `-t` for every `t`.
    pub symmetric: bool,
}

impl Default for LojasiewiczSampling {
    fn default() -> Self {
        Self {
            magnitudes: log_grid(1e-3, 1e-1, 12),
            symmetric: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LojasiewiczSample {
    pub coords: Vec<f64>,
    pub excess: f64,
    pub inner_converged: bool,
    /// Converged, inside the (possibly shrunk) trust region and above the noise floor.
    pub used: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LojasiewiczEstimate {
    /// Estimated `2 + γ`.
    pub exponent: Option<f64>,
    pub stderr: Option<f64>,
    pub samples: Vec<LojasiewiczSample>,
    /// Trust radius after any shrinking.
    pub trust_radius: f64,
    pub classification: Classification,
}

/// Fits `ln(𝔮(z) - 𝔮(0))` against `ln |z|` along each kernel axis.
pub fn lojasiewicz_estimate(
    spec: &QuotientSpec,
    v: &CriticalPoint,
    sampling: &LojasiewiczSampling,
) -> Result<LojasiewiczEstimate> {
    let mut reduction = Reduction::new(spec, v)?;
    let dim = reduction.kernel_dim();
    let mut coords = Vec::new();
    for axis in 0..dim {
        for &t in &sampling.magnitudes {
            let signs: &[f64] = if sampling.symmetric { &[1.0, -1.0] } else { &[1.0] };
            for s in signs {
                let mut c = vec![0.0; dim];
                c[axis] = s * t;
                coords.push(c);
            }
        }
    }
    let evaluated = coords
        .par_iter()
        .map(|c| reduction.evaluate(c))
        .collect::<Result<Vec<_>>>()?;
    // shrink the trust region below the smallest diverged sample
    let norm = |c: &[f64]| c.iter().map(|x| x * x).sum::<f64>().sqrt();
    while let Some(bad) = evaluated
        .iter()
        .filter(|s| s.diverged && norm(&s.coords) <= reduction.trust_radius())
        .map(|s| norm(&s.coords))
        .reduce(f64::min)
    {
        while reduction.trust_radius() >= bad {
            reduction.shrink_trust_radius();
        }
    }
    let threshold = NOISE_MULTIPLE * f64::EPSILON * v.value.abs().max(1.0);
    let mut samples = Vec::with_capacity(coords.len());
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for s in evaluated {
        let used = s.inner_converged
            && norm(&s.coords) <= reduction.trust_radius()
            && s.excess.is_finite()
            && s.excess > threshold;
        if used {
            x.push(norm(&s.coords));
            y.push(s.excess);
        }
        samples.push(LojasiewiczSample {
            coords: s.coords,
            excess: s.excess,
            inner_converged: s.inner_converged,
            used,
        });
    }
    let fit = if x.len() >= MIN_FIT_POINTS { fit_loglog(&x, &y).ok() } else { None };
    Ok(LojasiewiczEstimate {
        exponent: fit.map(|f| f.slope),
        stderr: fit.map(|f| f.stderr),
        samples,
        trust_radius: reduction.trust_radius(),
        classification: Classification::of_exponent(fit.map(|f| f.slope)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{a_opt_product_critical, a_opt_sphere_closed_form, beta_constant, constant_extremal_b};
    use crate::optimize::{critical_point_at, MinimizeOptions};

    fn sphere_disc(n: usize) -> Arc<Discretization> {
        Discretization::build(&ManifoldModel::sphere(3).unwrap(), n).unwrap()
    }

    fn s3_spec(q: f64, inflate: f64, n: usize) -> QuotientSpec {
        let disc = sphere_disc(n);
        let a = a_opt_sphere_closed_form(3, q).unwrap() * inflate;
        QuotientSpec::new(a, constant_extremal_b(disc.model(), q), q, disc).unwrap()
    }

    #[test]
    fn bubble_values() {
        let disc = sphere_disc(32);
        let f = bubble(&disc, 1.0, 0.5).unwrap();
        for (t, v) in disc.nodes().iter().zip(f.values().iter()) {
            assert!((v - (1.0 - 0.5 * t.cos()).powf(-0.5)).abs() < 1e-15);
        }
        let near = bubble(&disc, 2.0, 1e-12).unwrap();
        assert!(near.values().iter().all(|v| (v - 2.0).abs() < 1e-10));
        assert!(bubble(&disc, 1.0, 1.0).is_err());
        assert!(bubble(&disc, 1.0, 0.0).is_err());
        assert!(bubble(&disc, 0.0, 0.5).is_err());
    }

    #[test]
    fn bubbles_are_extremal() {
        let disc = sphere_disc(256);
        let model = disc.model().clone();
        let q = model.critical_exponent();
        let spec = QuotientSpec::new(
            crate::constants::euclidean_sobolev_constant(3).unwrap().powi(2),
            beta_constant(&model),
            q,
            disc.clone(),
        )
        .unwrap();
        for b in [0.3, 0.6, 0.9] {
            let d = deficit(&spec, &bubble(&disc, 1.0, b).unwrap()).unwrap();
            assert!(d.abs() < 1e-6, "b={b}: {d}");
        }
    }

    #[test]
    fn distances() {
        let disc = sphere_disc(64);
        let c = DiscreteFunction::constant(&disc, 0.7);
        assert!(distance_to_extremals(&c, ExtremalFamily::Constants).unwrap() < 1e-14);
        let phi = disc.laplace_eigenpairs(2).unwrap().eigenfunctions[1].clone();
        let phi_norm = disc.sobolev_norm_sq(&phi).unwrap().sqrt();
        let eps = 1e-3;
        let u = c.add_scaled(eps, &phi).unwrap();
        let expected = eps * phi_norm / disc.sobolev_norm_sq(&u).unwrap().sqrt();
        let got = distance_to_extremals(&u, ExtremalFamily::ConstantsAndScalings).unwrap();
        assert!((got - expected).abs() < 1e-12 * expected.max(1.0) + 1e-14, "{got} vs {expected}");
        let bub = bubble(&disc, 1.0, 0.5).unwrap();
        assert!(distance_to_extremals(&bub, ExtremalFamily::BubblesAndConstants).unwrap() < 1e-8);
        assert!(distance_to_extremals(&bub, ExtremalFamily::Constants).unwrap() > 1e-2);
        let south = bubble_profile(&disc, -0.4).scaled(3.0);
        assert!(distance_to_extremals(&south, ExtremalFamily::BubblesAndConstants).unwrap() < 1e-8);
    }

    #[test]
    fn bubble_family_rejected_on_product() {
        let disc = Discretization::build(&ManifoldModel::product(4).unwrap(), 32).unwrap();
        let c = DiscreteFunction::constant(&disc, 1.0);
        assert!(matches!(
            distance_to_extremals(&c, ExtremalFamily::BubblesAndConstants),
            Err(LabError::Precondition(_))
        ));
    }

    #[test]
    fn fit_recovers_power_law() {
        let x = log_grid(1e-3, 1e-1, 10);
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v.powf(3.5)).collect();
        let f = fit_loglog(&x, &y).unwrap();
        assert!((f.slope - 3.5).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-10);
        assert!(f.stderr < 1e-10);
        assert!(fit_loglog(&[1.0], &[1.0]).is_err());
        assert!(fit_loglog(&[1.0, 2.0], &[1.0, -1.0]).is_err());
    }

    #[test]
    fn quartic_deficit_on_sphere() {
        let spec = s3_spec(4.0, 1.0, 128);
        let ray = Ray::from_constants(spec.disc(), 4.0, 1).unwrap();
        let report = ray_scan(&spec, &ray, ExtremalFamily::Constants, None).unwrap();
        let slope = report.fitted_slope.unwrap();
        assert!((slope - 4.0).abs() < 0.05, "slope {slope}");
        assert_eq!(report.classification, Classification::Degenerate);
        assert!(report.rows.iter().all(|r| r.deficit > 0.0));
        assert!(report.max_log_residual.unwrap() < 0.1);
        for (lo, hi) in [(1, 0), (0, 1)] {
            let s = report.refit_trimmed(lo, hi).unwrap().slope;
            assert!((s - slope).abs() < 0.02);
        }
        let mirrored = ray_scan(&spec, &ray.reversed(), ExtremalFamily::Constants, None).unwrap();
        for (a, b) in report.rows.iter().zip(&mirrored.rows) {
            assert!((a.deficit - b.deficit).abs() <= 1e-8 * a.deficit.abs() + 1e-14, "{} vs {}", a.deficit, b.deficit);
        }
    }

    #[test]
    fn quadratic_deficit_for_control() {
        let spec = s3_spec(4.0, 1.1, 128);
        let ray = Ray::from_constants(spec.disc(), 4.0, 1).unwrap();
        let report = ray_scan(&spec, &ray, ExtremalFamily::Constants, None).unwrap();
        let slope = report.fitted_slope.unwrap();
        assert!((slope - 2.0).abs() < 0.05, "slope {slope}");
        assert_eq!(report.classification, Classification::Nondegenerate);
    }

    #[test]
    fn quartic_deficit_on_product() {
        let model = ManifoldModel::product(4).unwrap();
        let disc = Discretization::build(&model, 128).unwrap();
        let spec = QuotientSpec::new(a_opt_product_critical(4).unwrap(), beta_constant(&model), 4.0, disc.clone()).unwrap();
        let ray = Ray::from_constants(&disc, 4.0, 1).unwrap();
        let report = ray_scan(&spec, &ray, ExtremalFamily::Constants, Some(1)).unwrap();
        let slope = report.fitted_slope.unwrap();
        assert!((slope - 4.0).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn all_noise_is_inconclusive() {
        let spec = s3_spec(4.0, 1.0, 64);
        let ray = Ray::from_constants(spec.disc(), 4.0, 1)
            .unwrap()
            .with_epsilons(log_grid(1e-9, 1e-8, 6))
            .unwrap();
        let report = ray_scan(&spec, &ray, ExtremalFamily::Constants, None).unwrap();
        assert!(report.fitted_slope.is_none());
        assert_eq!(report.classification, Classification::Inconclusive);
    }

    #[test]
    fn classify_rules() {
        assert_eq!(classify(&[Some(4.0), Some(3.9)]), Classification::Degenerate);
        assert_eq!(classify(&[Some(2.01)]), Classification::Nondegenerate);
        assert_eq!(classify(&[Some(4.0), Some(2.0)]), Classification::Inconclusive);
        assert_eq!(classify(&[None]), Classification::Inconclusive);
        assert_eq!(classify(&[]), Classification::Inconclusive);
    }

    #[test]
    fn lojasiewicz_quartic() {
        let spec = s3_spec(4.0, 1.0, 64);
        let c = DiscreteFunction::constant(spec.disc(), 1.0);
        let cp = critical_point_at(&spec, &c, &MinimizeOptions::default()).unwrap();
        let est = lojasiewicz_estimate(&spec, &cp, &LojasiewiczSampling::default()).unwrap();
        let e = est.exponent.unwrap();
        assert!((e - 4.0).abs() < 0.1, "exponent {e}");
        for pair in est.samples.chunks(2) {
            assert!((pair[0].excess - pair[1].excess).abs() <= 1e-6 * pair[0].excess.abs() + 1e-14, "{:?}", pair);
        }
    }

    #[test]
    fn lojasiewicz_ignores_samples_outside_trust_region() {
        let spec = s3_spec(4.0, 1.0, 48);
        let c = DiscreteFunction::constant(spec.disc(), 1.0);
        let cp = critical_point_at(&spec, &c, &MinimizeOptions::default()).unwrap();
        let mut sampling = LojasiewiczSampling::default();
        sampling.magnitudes.extend([1.0, 5.0]);
        let est = lojasiewicz_estimate(&spec, &cp, &sampling).unwrap();
        assert!((est.exponent.unwrap() - 4.0).abs() < 0.1);
        for s in &est.samples {
            if s.coords[0].abs() > est.trust_radius {
                assert!(!s.used);
            }
        }
    }

    #[test]
    fn lojasiewicz_needs_kernel() {
        let spec = s3_spec(4.0, 1.1, 64);
        let c = DiscreteFunction::constant(spec.disc(), 1.0);
        let cp = critical_point_at(&spec, &c, &MinimizeOptions::default()).unwrap();
        assert!(lojasiewicz_estimate(&spec, &cp, &LojasiewiczSampling::default()).is_err());
    }
}
