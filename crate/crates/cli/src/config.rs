use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use sobolev_lab::constants::{
    a_opt_product_critical, a_opt_spectral_gap, a_opt_sphere_closed_form, constant_extremal_b,
    ExtremalAssumption,
};
use sobolev_lab::stability::{ExtremalFamily, Ray};
use sobolev_lab::{Discretization, ManifoldModel, ModelKind, QuotientSpec};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelArg {
    Sphere,
    Product,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum InitArg {
    Constant,
    Random,
    Multistart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FamilyArg {
    Constants,
    ConstantsAndScalings,
    BubblesAndConstants,
}

impl From<FamilyArg> for ExtremalFamily {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Constants => ExtremalFamily::Constants,
            FamilyArg::ConstantsAndScalings => ExtremalFamily::ConstantsAndScalings,
            FamilyArg::BubblesAndConstants => ExtremalFamily::BubblesAndConstants,
        }
    }
}

/// Every tunable parameter. Each field is optional so that flags and a
/// JSON config file can be layered; the file wins over flags.
#[derive(Debug, Clone, Default, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Manifold model [default: sphere]
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    /// Dimension d [default: 3]
    #[arg(long)]
    pub d: Option<usize>,
    /// Exponent q [default: 2d/(d-2)]
    #[arg(long)]
    pub q: Option<f64>,
    /// Number of collocation nodes [default: 256]
    #[arg(long)]
    pub n: Option<usize>,
    /// Override for A [default: optimal A for the model and q]
    #[arg(long)]
    pub a: Option<f64>,
    /// Override for B [default: Vol^(2/q-1)]
    #[arg(long)]
    pub b: Option<f64>,
    /// Multiplier applied to the default A [default: 1]
    #[arg(long)]
    pub a_scale: Option<f64>,
    /// Random seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of eigenpairs [default: 8]
    #[arg(long)]
    pub k: Option<usize>,
    /// Initial guess for minimize [default: constant]
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
    /// Random starts for multistart [default: 8]
    #[arg(long)]
    pub starts: Option<usize>,
    /// Iteration cap for minimize [default: 500]
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Certification tolerance [default: 1e-10]
    #[arg(long)]
    pub grad_tol: Option<f64>,
    /// Relative Hessian kernel threshold [default: 1e-8]
    #[arg(long)]
    pub kernel_threshold: Option<f64>,
    /// Ray as `constants:phiK` [default: constants:phi1]
    #[arg(long)]
    pub ray: Option<String>,
    /// Smallest ray parameter [default: 1e-3]
    #[arg(long)]
    pub eps_lo: Option<f64>,
    /// Largest ray parameter [default: 1e-1]
    #[arg(long)]
    pub eps_hi: Option<f64>,
    /// Number of ray parameters [default: 25]
    #[arg(long)]
    pub eps_count: Option<usize>,
    /// Also scan negative parameters [default: false]
    #[arg(long)]
    pub signed: Option<bool>,
    /// Extremal family for distances [default: constants]
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    /// Starts for the B_opt estimate; 0 disables it [default: 0]
    #[arg(long)]
    pub b_budget: Option<usize>,
    /// Output directory [default: sobolev-lab-out]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($field:ident),*) => {
        Settings { $($field: $top.$field.or($base.$field)),* }
    };
}

impl Settings {
    /// Reads a settings file, or the settings embedded in a saved report.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let bad = |e: serde_json::Error| CliError::Config(format!("{}: {e}", path.display()));
        let value: serde_json::Value = serde_json::from_str(&text).map_err(bad)?;
        // a saved report carries its resolved settings under "config"
        let value = match value.get("config") {
            Some(embedded) if value.get("schema_version").is_some() => embedded.clone(),
            _ => value,
        };
        serde_json::from_value(value).map_err(bad)
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(self, top: Settings) -> Settings {
        overlay!(
            self, top, model, d, q, n, a, b, a_scale, seed, k, init, starts, max_iter, grad_tol,
            kernel_threshold, ray, eps_lo, eps_hi, eps_count, signed, family, b_budget, out
        )
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let model_arg = self.model.unwrap_or(ModelArg::Sphere);
        let d = self.d.unwrap_or(3);
        let kind = match model_arg {
            ModelArg::Sphere => ModelKind::SphereRadial,
            ModelArg::Product => ModelKind::ProductCircle,
        };
        let model = ManifoldModel::new(kind, d).map_err(|e| CliError::Config(e.to_string()))?;
        let q = self.q.unwrap_or_else(|| model.critical_exponent());
        let crit = model.critical_exponent();
        if !(q > 2.0 && q <= crit * (1.0 + 1e-12)) {
            return Err(CliError::Config(format!("q = {q} outside (2, {crit}]")));
        }
        let n = self.n.unwrap_or(256);
        positive("a_scale", self.a_scale)?;
        positive("a", self.a)?;
        positive("b", self.b)?;
        positive("grad_tol", self.grad_tol)?;
        positive("kernel_threshold", self.kernel_threshold)?;
        positive("eps_lo", self.eps_lo)?;
        positive("eps_hi", self.eps_hi)?;
        let eps_lo = self.eps_lo.unwrap_or(Ray::DEFAULT_EPS_LO);
        let eps_hi = self.eps_hi.unwrap_or(Ray::DEFAULT_EPS_HI);
        let eps_count = self.eps_count.unwrap_or(Ray::DEFAULT_EPS_COUNT);
        if eps_count < 2 || eps_hi <= eps_lo {
            return Err(CliError::Config("ray grid needs eps_lo < eps_hi and eps_count >= 2".into()));
        }
        let ray = self.ray.clone().unwrap_or_else(|| "constants:phi1".into());
        let ray_mode = parse_ray(&ray)?;
        Ok(Resolved {
            model: model_arg,
            d,
            q,
            n,
            a: self.a,
            b: self.b,
            a_scale: self.a_scale.unwrap_or(1.0),
            seed: self.seed.unwrap_or(0),
            k: self.k.unwrap_or(8),
            init: self.init.unwrap_or(InitArg::Constant),
            starts: self.starts.unwrap_or(8),
            max_iter: self.max_iter.unwrap_or(500),
            grad_tol: self.grad_tol.unwrap_or(1e-10),
            kernel_threshold: self.kernel_threshold.unwrap_or(sobolev_lab::optimize::DEFAULT_KERNEL_THRESHOLD),
            ray,
            ray_mode,
            eps_lo,
            eps_hi,
            eps_count,
            signed: self.signed.unwrap_or(false),
            family: self.family.unwrap_or(FamilyArg::Constants),
            b_budget: self.b_budget.unwrap_or(0),
            out: self.out.clone().unwrap_or_else(|| PathBuf::from("sobolev-lab-out")),
        })
    }
}

fn positive(name: &str, v: Option<f64>) -> Result<(), CliError> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(CliError::Config(format!("{name} must be positive"))),
        _ => Ok(()),
    }
}

fn parse_ray(s: &str) -> Result<usize, CliError> {
    s.strip_prefix("constants:phi")
        .and_then(|k| k.parse::<usize>().ok())
        .filter(|k| *k >= 1)
        .ok_or_else(|| CliError::Config(format!("ray '{s}' is not of the form constants:phiK with K >= 1")))
}

/// Fully resolved parameters; embedded in every JSON report.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub model: ModelArg,
    pub d: usize,
    pub q: f64,
    pub n: usize,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub a_scale: f64,
    pub seed: u64,
    pub k: usize,
    pub init: InitArg,
    pub starts: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub kernel_threshold: f64,
    pub ray: String,
    #[serde(skip)]
    pub ray_mode: usize,
    pub eps_lo: f64,
    pub eps_hi: f64,
    pub eps_count: usize,
    pub signed: bool,
    pub family: FamilyArg,
    pub b_budget: usize,
    pub out: PathBuf,
}

impl Resolved {
    /// The settings that reproduce this resolution; the output directory is
    /// left out so reports do not depend on where they were written.
    pub fn as_settings(&self) -> Settings {
        Settings {
            model: Some(self.model),
            d: Some(self.d),
            q: Some(self.q),
            n: Some(self.n),
            a: self.a,
            b: self.b,
            a_scale: Some(self.a_scale),
            seed: Some(self.seed),
            k: Some(self.k),
            init: Some(self.init),
            starts: Some(self.starts),
            max_iter: Some(self.max_iter),
            grad_tol: Some(self.grad_tol),
            kernel_threshold: Some(self.kernel_threshold),
            ray: Some(self.ray.clone()),
            eps_lo: Some(self.eps_lo),
            eps_hi: Some(self.eps_hi),
            eps_count: Some(self.eps_count),
            signed: Some(self.signed),
            family: Some(self.family),
            b_budget: Some(self.b_budget),
            out: None,
        }
    }

    pub fn manifold(&self) -> Result<ManifoldModel, CliError> {
        let kind = match self.model {
            ModelArg::Sphere => ModelKind::SphereRadial,
            ModelArg::Product => ModelKind::ProductCircle,
        };
        Ok(ManifoldModel::new(kind, self.d)?)
    }

    pub fn discretization(&self) -> Result<std::sync::Arc<Discretization>, CliError> {
        Discretization::build(&self.manifold()?, self.n).map_err(|e| CliError::Config(e.to_string()))
    }

    /// `(A, B, q)` with defaults at the optimal constants of the model.
    pub fn spec(&self) -> Result<QuotientSpec, CliError> {
        let disc = self.discretization()?;
        let model = disc.model().clone();
        let critical = (self.q - model.critical_exponent()).abs() <= 1e-12 * self.q;
        let a = match self.a {
            Some(a) => a,
            None => {
                let base = match model.kind {
                    ModelKind::SphereRadial => a_opt_sphere_closed_form(self.d, self.q)?,
                    ModelKind::ProductCircle if critical => a_opt_product_critical(self.d)?,
                    ModelKind::ProductCircle => a_opt_spectral_gap(&disc, self.q, ExtremalAssumption::Unverified)?.value,
                };
                base * self.a_scale
            }
        };
        let b = self.b.unwrap_or_else(|| constant_extremal_b(&model, self.q));
        Ok(QuotientSpec::new(a, b, self.q, disc)?)
    }
}
