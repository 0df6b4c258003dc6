//! Bounded Levenberg-Marquardt fitting of the ensemble fringe model and the
//! staged fixed/free parameter workflow.
//!
//! Free physical parameters are optimised in an unbounded space through a
//! logistic map onto their bounds; the amplitude scale is optimised as its
//! logarithm. The Jacobian is taken by central differences in that space and
//! the covariance is mapped back to natural units.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{InputConfig, SourceParams};
use crate::error::{Error, Result};
use crate::fringe::{contrast, phase_grid, FringeModel, ModelOptions, DEFAULT_POINTS};
use crate::network::Efficiencies;
use crate::propagator::DetectionScheme;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    G2,
    Indist,
    EtaC,
    EtaD,
    EtaE,
    EtaF,
}

impl ParamKind {
    pub const ALL: [ParamKind; 6] =
        [ParamKind::G2, ParamKind::Indist, ParamKind::EtaC, ParamKind::EtaD, ParamKind::EtaE, ParamKind::EtaF];

    pub fn name(self) -> &'static str {
        match self {
            ParamKind::G2 => "g2",
            ParamKind::Indist => "indist",
            ParamKind::EtaC => "eta_c",
            ParamKind::EtaD => "eta_d",
            ParamKind::EtaE => "eta_e",
            ParamKind::EtaF => "eta_f",
        }
    }

    pub fn get(self, p: &SourceParams) -> f64 {
        match self {
            ParamKind::G2 => p.g2,
            ParamKind::Indist => p.indist,
            ParamKind::EtaC => p.eta.eta_c,
            ParamKind::EtaD => p.eta.eta_d,
            ParamKind::EtaE => p.eta.eta_e,
            ParamKind::EtaF => p.eta.eta_f,
        }
    }

    pub fn set(self, p: &mut SourceParams, v: f64) {
        match self {
            ParamKind::G2 => p.g2 = v,
            ParamKind::Indist => p.indist = v,
            ParamKind::EtaC => p.eta.eta_c = v,
            ParamKind::EtaD => p.eta.eta_d = v,
            ParamKind::EtaE => p.eta.eta_e = v,
            ParamKind::EtaF => p.eta.eta_f = v,
        }
    }
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ParamKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        ParamKind::ALL
            .into_iter()
            .find(|k| k.name() == t || k.name().replace('_', "") == t)
            .ok_or_else(|| Error::Parse(format!("unknown parameter `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeParam {
    pub kind: ParamKind,
    pub lower: f64,
    pub upper: f64,
    /// Starting value; the midpoint of the bounds when absent.
    pub initial: Option<f64>,
}

impl FreeParam {
    pub fn new(kind: ParamKind) -> Self {
        FreeParam { kind, lower: 0.0, upper: 1.0, initial: None }
    }

    pub fn bounded(kind: ParamKind, lower: f64, upper: f64) -> Self {
        FreeParam { kind, lower, upper, initial: None }
    }

    pub fn with_initial(mut self, initial: f64) -> Self {
        self.initial = Some(initial);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lower) || !(0.0..=1.0).contains(&self.upper) || self.lower >= self.upper {
            return Err(Error::param("bounds", format!("{}: need 0 <= lower < upper <= 1", self.kind)));
        }
        if let Some(x) = self.initial {
            if !(self.lower..=self.upper).contains(&x) {
                return Err(Error::param("initial", format!("{}: {x} outside bounds", self.kind)));
            }
        }
        Ok(())
    }

    // Logistic map between the unbounded optimiser variable and the bounds.
    fn to_natural(self, u: f64) -> f64 {
        self.lower + (self.upper - self.lower) / (1.0 + (-u).exp())
    }

    fn d_natural(&self, u: f64) -> f64 {
        let s = 1.0 / (1.0 + (-u).exp());
        (self.upper - self.lower) * s * (1.0 - s)
    }

    fn to_internal(self, x: f64) -> f64 {
        let w = self.upper - self.lower;
        let t = ((x - self.lower) / w).clamp(1e-9, 1.0 - 1e-9);
        (t / (1.0 - t)).ln()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub phi: f64,
    pub value: f64,
    pub sigma: f64,
}

impl DataPoint {
    pub fn new(phi: f64, value: f64, sigma: f64) -> Self {
        DataPoint { phi, value, sigma }
    }

    /// Counting data with Poisson σ = √counts (at least 1).
    pub fn counts(phi: f64, counts: f64) -> Self {
        DataPoint { phi, value: counts, sigma: counts.max(1.0).sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitProblem {
    pub config: InputConfig,
    pub scheme: DetectionScheme,
    pub data: Vec<DataPoint>,
    /// Values of all parameters. Free ones start from their `initial` value,
    /// or the middle of their bounds, and are replaced by the fit.
    pub params: SourceParams,
    pub free: Vec<FreeParam>,
    /// Starting scale; a linear least-squares estimate when absent.
    pub scale_initial: Option<f64>,
    pub offset: f64,
    pub offset_free: bool,
    pub model: ModelOptions,
}

impl FitProblem {
    pub fn new(config: InputConfig, data: Vec<DataPoint>, params: SourceParams) -> Self {
        FitProblem {
            config,
            scheme: config.default_scheme(),
            data,
            params,
            free: Vec::new(),
            scale_initial: None,
            offset: 0.0,
            offset_free: false,
            model: ModelOptions::default(),
        }
    }

    pub fn with_free(mut self, free: FreeParam) -> Self {
        self.free.push(free);
        self
    }

    pub fn with_scheme(mut self, scheme: DetectionScheme) -> Self {
        self.scheme = scheme;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.data.is_empty() {
            return Err(Error::param("data", "empty"));
        }
        if self.data.iter().any(|d| d.sigma.is_nan() || d.sigma <= 0.0 || !d.value.is_finite() || !d.phi.is_finite()) {
            return Err(Error::param("data", "values must be finite and sigmas positive"));
        }
        for (i, f) in self.free.iter().enumerate() {
            f.validate()?;
            if self.free[..i].iter().any(|g| g.kind == f.kind) {
                return Err(Error::param("free", format!("{} listed twice", f.kind)));
            }
        }
        let nfree = self.free.len() + 1 + usize::from(self.offset_free);
        if self.data.len() <= nfree {
            return Err(Error::param("data", format!("{} points for {nfree} free parameters", self.data.len())));
        }
        self.params.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Relative reduction of χ² below which the fit has converged.
    pub ftol: f64,
    /// Step size (relative) below which the fit has converged.
    pub xtol: f64,
    /// Gradient norm below which the fit has converged.
    pub gtol: f64,
    /// Central-difference step in the internal variables.
    pub diff_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { max_iterations: 500, ftol: 1e-10, xtol: 1e-10, gtol: 1e-10, diff_step: 1e-5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimate {
    pub name: String,
    pub value: f64,
    /// Total standard error: this fit's own plus, in a staged fit, the
    /// spread inherited from parameters that earlier stages determined.
    pub sigma: Option<f64>,
    /// Standard error from this fit's curvature alone.
    pub sigma_stat: Option<f64>,
    pub fixed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub config: InputConfig,
    pub scheme: DetectionScheme,
    pub params: SourceParams,
    pub scale: f64,
    pub scale_sigma: f64,
    pub offset: f64,
    pub offset_sigma: Option<f64>,
    /// One row per physical parameter, in the order g2, ℐ, η_c..η_f.
    pub estimates: Vec<ParamEstimate>,
    pub chi2: f64,
    pub reduced_chi2: f64,
    pub dof: usize,
    pub residual_norm: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
}

impl FitResult {
    pub fn estimate(&self, kind: ParamKind) -> &ParamEstimate {
        &self.estimates[ParamKind::ALL.iter().position(|k| *k == kind).expect("all kinds listed")]
    }

    pub fn value(&self, kind: ParamKind) -> f64 {
        self.estimate(kind).value
    }

    pub fn sigma(&self, kind: ParamKind) -> Option<f64> {
        self.estimate(kind).sigma
    }
}

struct Objective<'a> {
    problem: &'a FitProblem,
    phis: Vec<f64>,
    nphys: usize,
}

impl Objective<'_> {
    fn nvars(&self) -> usize {
        self.nphys + 1 + usize::from(self.problem.offset_free)
    }

    fn params_at(&self, u: &DVector<f64>) -> SourceParams {
        let mut p = self.problem.params;
        for (j, f) in self.problem.free.iter().enumerate() {
            f.kind.set(&mut p, f.to_natural(u[j]));
        }
        p
    }

    fn model(&self, u: &DVector<f64>) -> Result<Vec<f64>> {
        let pb = self.problem;
        FringeModel::with_options(pb.config, self.params_at(u), pb.scheme.clone(), pb.model)?.probabilities(&self.phis)
    }

    fn scale(&self, u: &DVector<f64>) -> f64 {
        u[self.nphys].exp()
    }

    fn offset(&self, u: &DVector<f64>) -> f64 {
        if self.problem.offset_free {
            u[self.nphys + 1]
        } else {
            self.problem.offset
        }
    }

    fn residuals(&self, u: &DVector<f64>, model: &[f64]) -> DVector<f64> {
        let (s, o) = (self.scale(u), self.offset(u));
        DVector::from_iterator(
            model.len(),
            self.problem.data.iter().zip(model).map(|(d, m)| (d.value - s * m - o) / d.sigma),
        )
    }

    fn jacobian(&self, u: &DVector<f64>, model: &[f64], h: f64) -> Result<DMatrix<f64>> {
        let n = model.len();
        let s = self.scale(u);
        let mut jac = DMatrix::zeros(n, self.nvars());
        for j in 0..self.nphys {
            let (mut up, mut dn) = (u.clone(), u.clone());
            up[j] += h;
            dn[j] -= h;
            let (mp, mm) = (self.model(&up)?, self.model(&dn)?);
            for i in 0..n {
                jac[(i, j)] = -s * (mp[i] - mm[i]) / (2.0 * h) / self.problem.data[i].sigma;
            }
        }
        for i in 0..n {
            let sig = self.problem.data[i].sigma;
            jac[(i, self.nphys)] = -s * model[i] / sig;
            if self.problem.offset_free {
                jac[(i, self.nphys + 1)] = -1.0 / sig;
            }
        }
        Ok(jac)
    }

    fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.problem.free.iter().map(|f| f.kind.name().to_string()).collect();
        names.push("scale".into());
        if self.problem.offset_free {
            names.push("offset".into());
        }
        names
    }

    /// Parameters spanning a (numerically) null direction of the Jacobian.
    fn singular_subset(&self, jac: &DMatrix<f64>) -> Option<Vec<String>> {
        let names = self.names();
        let zero: Vec<String> =
            (0..jac.ncols()).filter(|&j| jac.column(j).norm() == 0.0).map(|j| names[j].clone()).collect();
        if !zero.is_empty() {
            return Some(zero);
        }
        let mut scaled = jac.clone();
        for mut col in scaled.column_iter_mut() {
            let norm = col.norm();
            col /= norm;
        }
        let svd = scaled.svd(false, true);
        let sv = &svd.singular_values;
        let (imin, smin) = sv.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty");
        if *smin > 1e-8 * sv.max() {
            return None;
        }
        let v_t = svd.v_t.expect("requested");
        let row = v_t.row(imin);
        Some((0..row.len()).filter(|&j| row[j].abs() > 0.1).map(|j| names[j].clone()).collect())
    }
}

fn solve_damped(jtj: &DMatrix<f64>, grad: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
    let dmax = jtj.diagonal().max();
    let mut a = jtj.clone();
    for k in 0..a.nrows() {
        a[(k, k)] += lambda * jtj[(k, k)].max(1e-12 * dmax);
    }
    a.cholesky().map(|c| -c.solve(grad))
}

/// Minimises Σ ((value − scale·model − offset)/σ)² over the free parameters
/// and the scale.
pub fn fit(problem: &FitProblem, options: &FitOptions) -> Result<FitResult> {
    problem.validate()?;
    let obj = Objective { problem, phis: problem.data.iter().map(|d| d.phi).collect(), nphys: problem.free.len() };
    let nvars = obj.nvars();

    let mut u = DVector::zeros(nvars);
    for (j, f) in problem.free.iter().enumerate() {
        u[j] = match f.initial {
            Some(x) => f.to_internal(x),
            None => 0.0,
        };
    }
    if problem.offset_free {
        u[obj.nphys + 1] = problem.offset;
    }
    let mut model = obj.model(&u)?;
    let scale0 = problem.scale_initial.unwrap_or_else(|| {
        let o = obj.offset(&u);
        let (mut num, mut den) = (0.0, 0.0);
        for (d, m) in problem.data.iter().zip(&model) {
            let w = 1.0 / (d.sigma * d.sigma);
            num += w * m * (d.value - o);
            den += w * m * m;
        }
        if den > 0.0 && num > 0.0 {
            num / den
        } else {
            1.0
        }
    });
    if !(scale0 > 0.0 && scale0.is_finite()) {
        return Err(Error::param("scale", "initial scale must be positive"));
    }
    u[obj.nphys] = scale0.ln();

    let mut r = obj.residuals(&u, &model);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut jac = obj.jacobian(&u, &model, options.diff_step)?;
    if let Some(params) = obj.singular_subset(&jac) {
        return Err(Error::SingularJacobian { params });
    }
    let mut iterations = 0;
    let mut converged = false;
    let mut grad = jac.transpose() * &r;

    while iterations < options.max_iterations {
        iterations += 1;
        if grad.amax() <= options.gtol {
            converged = true;
            break;
        }
        let jtj = jac.transpose() * &jac;
        let mut accepted = false;
        while lambda <= 1e12 {
            let Some(step) = solve_damped(&jtj, &grad, lambda) else {
                lambda *= 10.0;
                continue;
            };
            let trial = &u + &step;
            let trial_model = obj.model(&trial)?;
            let trial_r = obj.residuals(&trial, &trial_model);
            let trial_cost = trial_r.norm_squared();
            if trial_cost.is_finite() && trial_cost < cost {
                let reduction = (cost - trial_cost) / cost.max(f64::MIN_POSITIVE);
                let small_step = step.norm() <= options.xtol * (u.norm() + options.xtol);
                u = trial;
                model = trial_model;
                r = trial_r;
                cost = trial_cost;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                converged = reduction <= options.ftol || small_step;
                break;
            }
            lambda *= 10.0;
        }
        jac = obj.jacobian(&u, &model, options.diff_step)?;
        grad = jac.transpose() * &r;
        if !accepted {
            // No descent direction left at machine precision.
            converged = true;
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { iterations });
    }
    if let Some(params) = obj.singular_subset(&jac) {
        return Err(Error::SingularJacobian { params });
    }

    let n = problem.data.len();
    let dof = n - nvars;
    let reduced_chi2 = cost / dof as f64;
    let jtj = jac.transpose() * &jac;
    let cov_u = jtj.try_inverse().ok_or_else(|| Error::SingularJacobian { params: obj.names() })? * reduced_chi2;

    // Delta method back to natural units.
    let mut dx = DVector::zeros(nvars);
    for (j, f) in problem.free.iter().enumerate() {
        dx[j] = f.d_natural(u[j]);
    }
    let scale = obj.scale(&u);
    dx[obj.nphys] = scale;
    if problem.offset_free {
        dx[obj.nphys + 1] = 1.0;
    }
    let sigma = |j: usize| (cov_u[(j, j)] * dx[j] * dx[j]).max(0.0).sqrt();

    let params = obj.params_at(&u);
    let estimates = ParamKind::ALL
        .iter()
        .map(|&kind| {
            let free_idx = problem.free.iter().position(|f| f.kind == kind);
            ParamEstimate {
                name: kind.name().to_string(),
                value: kind.get(&params),
                sigma: free_idx.map(sigma),
                sigma_stat: free_idx.map(sigma),
                fixed: free_idx.is_none(),
            }
        })
        .collect();

    Ok(FitResult {
        config: problem.config,
        scheme: problem.scheme.clone(),
        params,
        scale,
        scale_sigma: sigma(obj.nphys),
        offset: obj.offset(&u),
        offset_sigma: problem.offset_free.then(|| sigma(obj.nphys + 1)),
        estimates,
        chi2: cost,
        reduced_chi2,
        dof,
        residual_norm: cost.sqrt(),
        iterations,
        gradient_norm: grad.norm(),
    })
}

/// Poisson-noise fringe data with the model peak scaled to `peak_counts`.
/// σ is the square root of the expected count, not of the drawn one, so the
/// weights carry no noise of their own.
pub fn synthesize(
    config: InputConfig,
    params: &SourceParams,
    scheme: &DetectionScheme,
    phis: &[f64],
    peak_counts: f64,
    seed: u64,
) -> Result<Vec<DataPoint>> {
    if !(peak_counts > 0.0 && peak_counts.is_finite()) {
        return Err(Error::param("peak_counts", "must be positive"));
    }
    let probs = FringeModel::new(config, *params, scheme.clone())?.probabilities(phis)?;
    let peak = probs.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::param("params", "model fringe is identically zero"));
    }
    let scale = peak_counts / peak;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(phis
        .iter()
        .zip(&probs)
        .map(|(&phi, &p)| {
            let mean = scale * p;
            let counts = if mean > 0.0 { Poisson::new(mean).map(|d| d.sample(&mut rng)).unwrap_or(mean) } else { 0.0 };
            DataPoint::new(phi, counts, mean.max(1.0).sqrt())
        })
        .collect())
}

/// Mean |1,1⟩ contrast against g²(0) with the other parameters held.
/// Values above 0.1 are accepted with a warning; above 0.2 the truncated
/// model no longer applies and the grid is rejected.
pub fn contrast_vs_g2_curve(params: &SourceParams, g2_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if let Some(&g) = g2_grid.iter().find(|&&g| !(0.0..=0.2).contains(&g)) {
        return Err(Error::param("g2", format!("{g} outside the model's range [0, 0.2]")));
    }
    if g2_grid.iter().any(|&g| g > 0.1) {
        log::warn!("g2 grid extends beyond 0.1, where the model loses accuracy");
    }
    let phis = phase_grid(0.0, std::f64::consts::TAU, DEFAULT_POINTS);
    g2_grid
        .par_iter()
        .map(|&g2| {
            let p = SourceParams { g2, ..*params };
            let model = FringeModel::new(InputConfig::Ket11, p, DetectionScheme::at_least(1, 1))?;
            let scan = model.scan(&phis)?;
            Ok((g2, contrast(&scan)?.mean_contrast))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StagedOptions {
    /// Fixed arm transmission from component losses.
    pub eta_c: f64,
    /// Independently measured g²(0) used from the second stage on.
    pub g2: f64,
    /// η_e held in the |2,0⟩ stage so that η_e ≈ η_f.
    pub eta_e_stage2: f64,
    /// Upper bound on g²(0) in the cross-check fit.
    pub g2_upper: f64,
    pub cross_check: bool,
    /// Add the uncertainty of parameters carried from earlier stages to
    /// each later stage's standard errors.
    pub propagate_carried: bool,
    pub fit: FitOptions,
}

impl Default for StagedOptions {
    fn default() -> Self {
        StagedOptions {
            eta_c: 0.8034,
            g2: 0.018,
            eta_e_stage2: 0.32,
            g2_upper: 0.1,
            cross_check: true,
            propagate_carried: true,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StagedResult {
    pub stages: BTreeMap<InputConfig, FitResult>,
    /// |1,1⟩ refit with ℐ fixed and g²(0) free.
    pub cross_check: Option<FitResult>,
    /// The consistent parameter set carried through the stages.
    pub params: SourceParams,
}

fn require(datasets: &BTreeMap<InputConfig, Vec<DataPoint>>, stage: InputConfig, needs: InputConfig) -> Result<()> {
    if datasets.contains_key(&stage) && !datasets.contains_key(&needs) {
        return Err(Error::StageDependency { stage: stage.to_string(), requires: needs.to_string() });
    }
    Ok(())
}

/// Refits with each carried parameter moved by ±σ and adds the resulting
/// shifts of the free parameters to their standard errors in quadrature.
fn fit_with_carried(problem: &FitProblem, carried: &[(ParamKind, f64)], options: &StagedOptions) -> Result<FitResult> {
    let mut result = fit(problem, &options.fit)?;
    if !options.propagate_carried {
        return Ok(result);
    }
    let mut extra = vec![0.0; result.estimates.len()];
    for &(kind, s) in carried.iter().filter(|(_, s)| *s > 0.0) {
        let v = kind.get(&problem.params);
        let (hi, lo) = ((v + s).min(1.0), (v - s).max(0.0));
        if hi <= lo {
            continue;
        }
        let refit = |x: f64| {
            let mut p = problem.clone();
            kind.set(&mut p.params, x);
            for f in &mut p.free {
                f.initial = Some(result.value(f.kind).clamp(f.lower, f.upper));
            }
            p.scale_initial = Some(result.scale);
            fit(&p, &options.fit)
        };
        let (up, down) = (refit(hi)?, refit(lo)?);
        for i in (0..extra.len()).filter(|&i| !result.estimates[i].fixed) {
            let slope = (up.estimates[i].value - down.estimates[i].value) / (hi - lo);
            extra[i] += (slope * s).powi(2);
        }
    }
    for (e, x) in result.estimates.iter_mut().zip(extra) {
        e.sigma = e.sigma_stat.map(|s| (s * s + x).sqrt());
    }
    Ok(result)
}

/// Fits |1,0⟩, |2,0⟩, |1,1⟩ and |2,2⟩ data in sequence, each stage fixing
/// what earlier stages determined. Stages without data are skipped, but a
/// stage may not run without the one before it.
pub fn staged_workflow(
    datasets: &BTreeMap<InputConfig, Vec<DataPoint>>,
    options: &StagedOptions,
) -> Result<StagedResult> {
    use InputConfig::*;
    if !datasets.contains_key(&Ket10) {
        return Err(Error::StageDependency { stage: "10".into(), requires: "10 (data)".into() });
    }
    require(datasets, Ket20, Ket10)?;
    require(datasets, Ket11, Ket20)?;
    require(datasets, Ket22, Ket11)?;

    let mut stages = BTreeMap::new();
    let fo = &options.fit;

    let p1 = SourceParams::new(0.0, 1.0, Efficiencies::new(options.eta_c, 1.0, 1.0, 1.0));
    let r1 = fit(&FitProblem::new(Ket10, datasets[&Ket10].clone(), p1).with_free(FreeParam::new(ParamKind::EtaD)), fo)?;
    let mut current = SourceParams { eta: Efficiencies { eta_d: r1.params.eta.eta_d, ..p1.eta }, ..p1 };
    stages.insert(Ket10, r1);

    let mut cross_check = None;
    // Parameters fixed at an earlier stage's estimate, with that stage's σ.
    let mut carried: Vec<(ParamKind, f64)> = Vec::new();
    if let Some(data) = datasets.get(&Ket20) {
        let p2 = SourceParams::new(
            options.g2,
            1.0,
            Efficiencies::new(options.eta_c, current.eta.eta_d, options.eta_e_stage2, 1.0),
        );
        let problem = FitProblem::new(Ket20, data.clone(), p2)
            .with_free(FreeParam::new(ParamKind::EtaD))
            .with_free(FreeParam::new(ParamKind::EtaF));
        let r2 = fit(&problem, fo)?;
        current = r2.params;
        for kind in [ParamKind::EtaD, ParamKind::EtaF] {
            carried.push((kind, r2.sigma(kind).unwrap_or(0.0)));
        }
        stages.insert(Ket20, r2);
    }
    if let Some(data) = datasets.get(&Ket11) {
        let problem = FitProblem::new(Ket11, data.clone(), current).with_free(FreeParam::new(ParamKind::Indist));
        let r3 = fit_with_carried(&problem, &carried, options)?;
        current.indist = r3.params.indist;
        carried.push((ParamKind::Indist, r3.sigma(ParamKind::Indist).unwrap_or(0.0)));
        if options.cross_check {
            let problem = FitProblem::new(Ket11, data.clone(), current).with_free(FreeParam::bounded(
                ParamKind::G2,
                0.0,
                options.g2_upper,
            ));
            cross_check = Some(fit_with_carried(&problem, &carried, options)?);
        }
        stages.insert(Ket11, r3);
    }
    if let Some(data) = datasets.get(&Ket22) {
        let problem = FitProblem::new(Ket22, data.clone(), current).with_free(FreeParam::new(ParamKind::EtaE));
        let r4 = fit_with_carried(&problem, &carried, options)?;
        current.eta.eta_e = r4.params.eta.eta_e;
        stages.insert(Ket22, r4);
    }
    Ok(StagedResult { stages, cross_check, params: current })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid() -> Vec<f64> {
        phase_grid(-PI, PI, 101)
    }

    fn exact_data(config: InputConfig, p: &SourceParams, scale: f64) -> Vec<DataPoint> {
        let model = FringeModel::new(config, *p, config.default_scheme()).unwrap();
        grid().into_iter().map(|phi| DataPoint::new(phi, scale * model.probability(phi).unwrap(), 1.0)).collect()
    }

    #[test]
    fn scale_only_fit_is_exact() {
        let p = SourceParams::fitted();
        let data = exact_data(InputConfig::Ket11, &p, 2500.0);
        let r = fit(&FitProblem::new(InputConfig::Ket11, data, p), &FitOptions::default()).unwrap();
        assert!((r.scale - 2500.0).abs() < 1e-8);
        assert!(r.chi2 < 1e-12);
        assert!(r.estimates.iter().all(|e| e.fixed && e.sigma.is_none()));
    }

    #[test]
    fn recovers_single_parameter_from_noiseless_data() {
        let truth = SourceParams::fitted();
        let data = exact_data(InputConfig::Ket11, &truth, 1e4);
        let start = SourceParams { indist: 0.5, ..truth };
        let pb = FitProblem::new(InputConfig::Ket11, data, start).with_free(FreeParam::new(ParamKind::Indist));
        let r = fit(&pb, &FitOptions::default()).unwrap();
        assert!((r.value(ParamKind::Indist) - 0.974).abs() < 1e-6);
        assert!(r.params.indist >= 0.0 && r.params.indist <= 1.0);
    }

    #[test]
    fn zero_influence_parameter_is_singular() {
        let p = SourceParams::ideal();
        let data = exact_data(InputConfig::Ket10, &p, 100.0);
        let pb = FitProblem::new(InputConfig::Ket10, data, p).with_free(FreeParam::new(ParamKind::EtaF));
        match fit(&pb, &FitOptions::default()) {
            Err(Error::SingularJacobian { params }) => assert_eq!(params, vec!["eta_f".to_string()]),
            other => panic!("expected singular Jacobian, got {other:?}"),
        }
    }

    #[test]
    fn invalid_problems_rejected() {
        let p = SourceParams::ideal();
        let data = exact_data(InputConfig::Ket10, &p, 100.0);
        let pb = FitProblem::new(InputConfig::Ket10, data.clone(), p).with_free(FreeParam::bounded(
            ParamKind::EtaD,
            0.5,
            0.4,
        ));
        assert!(fit(&pb, &FitOptions::default()).is_err());
        let pb = FitProblem::new(InputConfig::Ket10, data[..1].to_vec(), p);
        assert!(fit(&pb, &FitOptions::default()).is_err());
    }

    #[test]
    fn synthetic_data_is_seeded() {
        let p = SourceParams::fitted();
        let s = InputConfig::Ket11.default_scheme();
        let a = synthesize(InputConfig::Ket11, &p, &s, &grid(), 1e5, 7).unwrap();
        let b = synthesize(InputConfig::Ket11, &p, &s, &grid(), 1e5, 7).unwrap();
        let c = synthesize(InputConfig::Ket11, &p, &s, &grid(), 1e5, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let max = a.iter().map(|d| d.value).fold(0.0, f64::max);
        assert!((max - 1e5).abs() < 2e3);
    }

    #[test]
    fn g2_curve_limits() {
        let r = contrast_vs_g2_curve(&SourceParams::ideal(), &[0.0]).unwrap();
        assert!((r[0].1 - 1.0).abs() < 1e-12);
        assert!(contrast_vs_g2_curve(&SourceParams::ideal(), &[0.25]).is_err());
    }

    #[test]
    fn staged_requires_predecessors() {
        let mut sets = BTreeMap::new();
        sets.insert(InputConfig::Ket11, Vec::new());
        assert!(matches!(staged_workflow(&sets, &StagedOptions::default()), Err(Error::StageDependency { .. })));
        sets.insert(InputConfig::Ket10, Vec::new());
        assert!(matches!(staged_workflow(&sets, &StagedOptions::default()), Err(Error::StageDependency { .. })));
    }

    #[test]
    fn param_names_parse() {
        assert_eq!("eta_d".parse::<ParamKind>().unwrap(), ParamKind::EtaD);
        assert_eq!("etad".parse::<ParamKind>().unwrap(), ParamKind::EtaD);
        assert!("eta_x".parse::<ParamKind>().is_err());
    }
}
