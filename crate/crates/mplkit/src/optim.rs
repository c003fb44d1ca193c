//! Nested maximization for the GEV AFT model and generic 1-D curve
//! maximization, plus finite-difference validation utilities.
//!
//! The inner problem maximizes the censored log likelihood over
//! `(phi, ln sigma)` at fixed shape with the analytic score and a
//! backtracking quasi-Newton method; infeasible trial points evaluate to
//! negative infinity and are rejected by the line search. A simplex search
//! takes over when the quasi-Newton iteration stalls. The outer problem
//! sweeps the shape over a log-spaced grid and refines the best interior
//! point by golden section with a final parabolic polish.
//!
//! Grid points whose inner fit fails to converge are dropped from the curve
//! (counted in the diagnostics) rather than contributing unreliable values;
//! at large shape values the likelihood develops near-boundary ridges that
//! no finite-precision optimizer can resolve, and the estimator is defined
//! as the interior mode.

use crate::aft::{mp_loglik, nuisance_score, profile_loglik, vhat, CensoredDataset, GevAftParams};
use crate::error::Error;
use crate::Result;
use nalgebra::{DMatrix, DVector};

/// Result of one inner (nuisance) maximization at fixed shape.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerFit {
    /// Maximizing parameters (phi, sigma) bundled with the fixed shape.
    pub params: GevAftParams,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Gradient norm in the optimized `(phi, ln sigma)` coordinates.
    pub grad_norm: f64,
}

/// Options for the nested GEV fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Search bracket for the shape parameter.
    pub bracket: (f64, f64),
    /// Log-spaced grid size for the outer sweep.
    pub grid_points: usize,
    /// Outer refinement tolerance on the shape.
    pub outer_tol: f64,
    /// Inner gradient tolerance, relative to `max(1, |loglik|)`.
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    /// Warm-start each grid point from the previous converged fit.
    pub warm_start: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            bracket: (0.05, 10.0),
            grid_points: 41,
            outer_tol: 1e-6,
            inner_tol: 1e-8,
            inner_max_iter: 200,
            warm_start: true,
        }
    }
}

/// Which curve the outer maximization targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitKind {
    Profile,
    ModifiedProfile,
}

impl std::fmt::Display for FitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FitKind::Profile => write!(f, "profile"),
            FitKind::ModifiedProfile => write!(f, "modified-profile"),
        }
    }
}

/// Diagnostics accumulated by the outer sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    pub bracket: (f64, f64),
    /// Grid points dropped: inner non-convergence, or an undefined
    /// modification factor for the modified-profile curve.
    pub grid_failures: usize,
    /// Curve evaluations spent in refinement.
    pub refinement_evals: usize,
    /// Maximum landed on a bracket endpoint.
    pub boundary: bool,
    /// Last modification-factor error message, if any occurred.
    pub last_mp_error: Option<String>,
}

/// Outer maximization result for one interest-parameter curve.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileFit {
    pub kind: FitKind,
    /// Estimated shape.
    pub psi_hat: f64,
    pub value_at_max: f64,
    /// Inner maximizer at `psi_hat`.
    pub params_at_max: GevAftParams,
    /// Unconstrained MLE located by the profile pass.
    pub full_mle: GevAftParams,
    /// Grid curve; dropped points carry negative infinity.
    pub curve: Vec<(f64, f64)>,
    pub inner_fits: Vec<InnerFit>,
    pub diagnostics: FitDiagnostics,
    /// Usable estimate: interior maximum with a converged inner fit.
    pub converged: bool,
}

// ---------------------------------------------------------------------------
// Inner maximization
// ---------------------------------------------------------------------------

struct InnerProblem<'a> {
    d: &'a CensoredDataset,
    xi: f64,
}

impl InnerProblem<'_> {
    fn params(&self, theta: &DVector<f64>) -> Option<GevAftParams> {
        let p = self.d.p();
        let sigma = theta[p].exp();
        if !sigma.is_finite() || sigma <= 0.0 {
            return None;
        }
        let phi = DVector::from_iterator(p, theta.iter().take(p).copied());
        GevAftParams::new(phi, sigma, self.xi).ok()
    }

    fn value(&self, theta: &DVector<f64>) -> f64 {
        match self.params(theta) {
            Some(pp) => profile_loglik(&pp, self.d),
            None => f64::NEG_INFINITY,
        }
    }

    /// Gradient in `(phi, ln sigma)`; `None` off the feasible set.
    fn gradient(&self, theta: &DVector<f64>) -> Option<DVector<f64>> {
        let pp = self.params(theta)?;
        let mut g = nuisance_score(&pp, self.d).ok()?;
        let p = self.d.p();
        g[p] *= pp.sigma; // chain rule through sigma = exp(theta_p)
        if g.iter().all(|v| v.is_finite()) {
            Some(g)
        } else {
            None
        }
    }
}

/// Raises sigma until every observation satisfies `m_j > 0` at the given
/// coefficients, leaving already-feasible starts untouched.
fn repair_sigma(d: &CensoredDataset, xi: f64, phi: &DVector<f64>, sigma: f64) -> f64 {
    let eta = d.design() * phi;
    let mut need = 0.0f64;
    for (j, &y) in d.y().iter().enumerate() {
        need = need.max(-xi * (y - eta[j]));
    }
    if need > 0.0 {
        sigma.max(1.3 * need + 1e-6)
    } else {
        sigma
    }
}

/// Least-squares starting values from the uncensored rows.
pub fn ols_start(d: &CensoredDataset) -> (DVector<f64>, f64) {
    let rows: Vec<usize> = (0..d.n()).filter(|&j| d.delta()[j]).collect();
    let p = d.p();
    let mut x = DMatrix::zeros(rows.len(), p);
    let mut y = DVector::zeros(rows.len());
    for (i, &j) in rows.iter().enumerate() {
        for s in 0..p {
            x[(i, s)] = d.design()[(j, s)];
        }
        y[i] = d.y()[j];
    }
    let svd = x.clone().svd(true, true);
    let phi = svd.solve(&y, 1e-12).unwrap_or_else(|_| DVector::zeros(p));
    let resid = y - x * &phi;
    let scale = if rows.len() > p {
        (resid.norm_squared() / (rows.len() - p) as f64).sqrt()
    } else {
        1.0
    };
    (phi, scale.max(1e-2))
}

/// Maximizes the censored log likelihood over the nuisance block at fixed
/// shape. The provided start and the cold least-squares start are both
/// tried; the inner surface can hold several stationary points, and the
/// profile value is the best one found. Non-convergence is flagged, never
/// thrown.
pub fn maximize_inner(
    xi: f64,
    d: &CensoredDataset,
    start: &GevAftParams,
    opts: &FitOptions,
) -> InnerFit {
    let (phi0, sigma0) = ols_start(d);
    let mut best = run_inner_from(xi, d, &start.phi, start.sigma, opts);
    if (&phi0, sigma0) != (&start.phi, start.sigma) {
        let alt = run_inner_from(xi, d, &phi0, sigma0, opts);
        let better = match (alt.converged, best.converged) {
            (true, false) => true,
            (false, true) => false,
            _ => alt.loglik > best.loglik,
        };
        if better {
            best = alt;
        }
    }
    best
}

fn run_inner_from(
    xi: f64,
    d: &CensoredDataset,
    phi: &DVector<f64>,
    sigma: f64,
    opts: &FitOptions,
) -> InnerFit {
    let problem = InnerProblem { d, xi };
    let p = d.p();
    let sigma0 = repair_sigma(d, xi, phi, sigma);
    let mut theta = DVector::zeros(p + 1);
    for s in 0..p {
        theta[s] = phi[s];
    }
    theta[p] = sigma0.ln();

    let (theta, f, iters) = bfgs_max(&problem, theta, opts.inner_tol, opts.inner_max_iter);
    let gn = problem.gradient(&theta).map_or(f64::INFINITY, |g| g.norm());
    let tol_at = |v: f64| opts.inner_tol * v.abs().max(1.0);
    let (theta, f, iters, gn) = if gn <= tol_at(f) {
        (theta, f, iters, gn)
    } else {
        // simplex fallback, then a quasi-Newton polish
        let (t2, _) = nelder_mead_min(|t| -problem.value(t), theta.clone(), 400);
        let (t3, f3, it3) = bfgs_max(&problem, t2, opts.inner_tol, opts.inner_max_iter);
        let gn3 = problem.gradient(&t3).map_or(f64::INFINITY, |g| g.norm());
        if f3 >= f || gn3 < gn {
            (t3, f3, iters + it3, gn3)
        } else {
            (theta, f, iters, gn)
        }
    };

    let converged = f.is_finite() && gn <= tol_at(f);
    let params = problem.params(&theta).unwrap_or_else(|| {
        GevAftParams::new(phi.clone(), sigma0, xi).expect("repaired start is valid")
    });
    InnerFit { params, loglik: f, converged, iterations: iters, grad_norm: gn }
}

/// Quasi-Newton ascent with backtracking; returns the best point, its
/// value, and the iteration count.
fn bfgs_max(
    problem: &InnerProblem<'_>,
    mut theta: DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> (DVector<f64>, f64, usize) {
    let k = theta.len();
    let mut f = problem.value(&theta);
    if !f.is_finite() {
        return (theta, f, 0);
    }
    let mut g = match problem.gradient(&theta) {
        Some(g) => g,
        None => return (theta, f, 0),
    };
    let mut hinv = DMatrix::<f64>::identity(k, k);
    for iter in 1..=max_iter {
        if g.norm() <= tol * f.abs().max(1.0) {
            return (theta, f, iter);
        }
        let mut dir = &hinv * &g;
        if !dir.iter().all(|v| v.is_finite()) || dir.dot(&g) <= 0.0 {
            hinv = DMatrix::identity(k, k);
            dir = g.clone();
        }
        let slope = g.dot(&dir);
        let mut step = 1.0f64;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &theta + step * &dir;
            let fc = problem.value(&cand);
            if fc.is_finite() && fc >= f + 1e-4 * step * slope {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        let (theta_new, f_new) = match accepted {
            Some(v) => v,
            None => return (theta, f, iter),
        };
        let g_new = match problem.gradient(&theta_new) {
            Some(g) => g,
            None => return (theta_new, f_new, iter),
        };
        // inverse-Hessian update in minimization form on -f
        let s = &theta_new - &theta;
        let yv = -(&g_new - &g);
        let sy = s.dot(&yv);
        if sy > 1e-12 * s.norm() * yv.norm() {
            let rho = 1.0 / sy;
            let hy = &hinv * &yv;
            let yhy = yv.dot(&hy);
            // BFGS: H += (sy + yHy) rho^2 s s' - rho (H y s' + s y' H)
            for i in 0..k {
                for j in 0..k {
                    hinv[(i, j)] += (sy + yhy) * rho * rho * s[i] * s[j]
                        - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }
        theta = theta_new;
        f = f_new;
        g = g_new;
    }
    (theta, f, max_iter)
}

/// Nelder-Mead minimization; returns the best vertex and its value.
fn nelder_mead_min<F: Fn(&DVector<f64>) -> f64>(
    f: F,
    start: DVector<f64>,
    max_iter: usize,
) -> (DVector<f64>, f64) {
    let k = start.len();
    let mut simplex: Vec<(DVector<f64>, f64)> = Vec::with_capacity(k + 1);
    simplex.push((start.clone(), f(&start)));
    for i in 0..k {
        let mut v = start.clone();
        v[i] += 0.1 * v[i].abs().max(0.25);
        let fv = f(&v);
        simplex.push((v, fv));
    }
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let best = simplex[0].1;
        let worst = simplex[k].1;
        if worst.is_finite() && (worst - best).abs() <= 1e-12 * (1.0 + best.abs()) {
            break;
        }
        let mut centroid = DVector::zeros(k);
        for (v, _) in simplex.iter().take(k) {
            centroid += v;
        }
        centroid /= k as f64;
        let reflect = &centroid + (&centroid - &simplex[k].0);
        let fr = f(&reflect);
        if fr < simplex[0].1 {
            let expand = &centroid + 2.0 * (&centroid - &simplex[k].0);
            let fe = f(&expand);
            simplex[k] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[k - 1].1 {
            simplex[k] = (reflect, fr);
        } else {
            let contract = if fr < simplex[k].1 {
                &centroid + 0.5 * (&reflect - &centroid)
            } else {
                &centroid + 0.5 * (&simplex[k].0 - &centroid)
            };
            let fc = f(&contract);
            if fc < simplex[k].1.min(fr) {
                simplex[k] = (contract, fc);
            } else {
                let best_v = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    entry.0 = &best_v + 0.5 * (&entry.0 - &best_v);
                    entry.1 = f(&entry.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    simplex.swap_remove(0)
}

// ---------------------------------------------------------------------------
// Outer maximization
// ---------------------------------------------------------------------------

/// Result of the generic 1-D maximization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterMax {
    pub psi_hat: f64,
    pub value: f64,
    pub boundary: bool,
    pub evaluations: usize,
}

/// Grid values for a bracket: log-spaced when the bracket is positive,
/// linear otherwise.
pub fn bracket_grid(bracket: (f64, f64), points: usize) -> Vec<f64> {
    let (lo, hi) = bracket;
    let n = points.max(2);
    if lo > 0.0 {
        let (a, b) = (lo.ln(), hi.ln());
        (0..n)
            .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
            .collect()
    } else {
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

/// Maximizes a curve over a bracket: grid scan, golden-section refinement
/// around the best interior point, and a final parabolic polish. The curve
/// may return negative infinity for infeasible points; it must be finite
/// somewhere in the bracket.
pub fn maximize_outer<F: FnMut(f64) -> f64>(
    mut f: F,
    bracket: (f64, f64),
    grid_points: usize,
    tol: f64,
) -> Result<OuterMax> {
    let (lo, hi) = bracket;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::NoFeasiblePoint { lo, hi });
    }
    let grid = bracket_grid(bracket, grid_points);
    let values: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let mut out = refine_from_grid(&mut f, &grid, &values, tol)?;
    out.evaluations += grid.len();
    Ok(out)
}

/// Refinement half of the outer maximization: locate the best finite grid
/// value, return the endpoint with a boundary flag when it is not interior,
/// otherwise golden-section between its neighbors and polish parabolically.
fn refine_from_grid<F: FnMut(f64) -> f64>(
    f: &mut F,
    grid: &[f64],
    values: &[f64],
    tol: f64,
) -> Result<OuterMax> {
    let k = match argmax_finite(values) {
        Some(k) => k,
        None => {
            return Err(Error::NoFeasiblePoint { lo: grid[0], hi: grid[grid.len() - 1] })
        }
    };
    if k == 0 || k == grid.len() - 1 {
        return Ok(OuterMax { psi_hat: grid[k], value: values[k], boundary: true, evaluations: 0 });
    }
    let mut evaluations = 0;

    // golden section in the transformed coordinate
    let logspace = grid[0] > 0.0;
    let to_t = |x: f64| if logspace { x.ln() } else { x };
    let from_t = |t: f64| if logspace { t.exp() } else { t };
    let (mut a, mut b) = (to_t(grid[k - 1]), to_t(grid[k + 1]));
    let gr = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = b - gr * (b - a);
    let mut dd = a + gr * (b - a);
    let mut fc = f(from_t(c));
    let mut fd = f(from_t(dd));
    evaluations += 2;
    while from_t(b) - from_t(a) > tol || (b - a) > tol {
        if fc > fd {
            b = dd;
            dd = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = f(from_t(c));
        } else {
            a = c;
            c = dd;
            fc = fd;
            dd = a + gr * (b - a);
            fd = f(from_t(dd));
        }
        evaluations += 1;
        if evaluations > 500 {
            break;
        }
    }
    let (mut t_best, mut f_best) = if fc > fd { (c, fc) } else { (dd, fd) };
    if !f_best.is_finite() || f_best < values[k] {
        // refinement never beat the grid value; keep the grid point
        t_best = to_t(grid[k]);
        f_best = values[k];
    }

    // parabolic polish through the bracketing triple
    let (t1, t2, t3) = (a, t_best, b);
    if t2 > t1 && t2 < t3 {
        let (f1, f2, f3) = (f(from_t(t1)), f_best, f(from_t(t3)));
        evaluations += 2;
        let denom = (t2 - t1) * (f2 - f3) - (t2 - t3) * (f2 - f1);
        if denom.abs() > 0.0 && f1.is_finite() && f3.is_finite() {
            let t_vertex = t2
                - 0.5 * ((t2 - t1).powi(2) * (f2 - f3) - (t2 - t3).powi(2) * (f2 - f1))
                    / denom;
            if t_vertex.is_finite() && t_vertex > t1 && t_vertex < t3 {
                let fv = f(from_t(t_vertex));
                evaluations += 1;
                if fv >= f_best {
                    t_best = t_vertex;
                    f_best = fv;
                }
            }
        }
    }
    Ok(OuterMax { psi_hat: from_t(t_best), value: f_best, boundary: false, evaluations })
}

fn argmax_finite(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_finite() && best.map_or(true, |b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Nested GEV fit
// ---------------------------------------------------------------------------

/// Fits the shape parameter by the requested likelihood curve. The
/// modified-profile fit runs the profile pass first to locate the full MLE
/// that anchors the sample-space matrix.
pub fn fit_gev(d: &CensoredDataset, kind: FitKind, opts: &FitOptions) -> Result<ProfileFit> {
    let profile = profile_pass(d, opts)?;
    match kind {
        FitKind::Profile => Ok(profile),
        FitKind::ModifiedProfile => modified_pass(d, opts, profile),
    }
}

/// Profile and modified-profile fits of the same dataset, sharing one
/// profile pass (and so one set of inner fits).
pub fn fit_gev_pair(d: &CensoredDataset, opts: &FitOptions) -> Result<(ProfileFit, ProfileFit)> {
    let profile = profile_pass(d, opts)?;
    let modified = modified_pass(d, opts, profile.clone())?;
    Ok((profile, modified))
}

/// Pool of converged inner fits used to warm-start nearby evaluations.
struct AnchorPool {
    cold: GevAftParams,
    anchors: Vec<(f64, GevAftParams)>,
    warm_start: bool,
}

impl AnchorPool {
    /// Start for a fit at `xi`: the converged fit closest in log-shape, or
    /// the cold least-squares start when none exists (or warm starts are
    /// disabled).
    fn start_for(&self, xi: f64) -> GevAftParams {
        if !self.warm_start {
            return self.cold.clone();
        }
        self.anchors
            .iter()
            .min_by(|a, b| {
                let da = (a.0.ln() - xi.ln()).abs();
                let db = (b.0.ln() - xi.ln()).abs();
                da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
            })
            .map(|(_, p)| p.clone())
            .unwrap_or_else(|| self.cold.clone())
    }

    fn insert(&mut self, xi: f64, params: GevAftParams) {
        self.anchors.push((xi, params));
    }
}

fn profile_pass(d: &CensoredDataset, opts: &FitOptions) -> Result<ProfileFit> {
    let grid = bracket_grid(opts.bracket, opts.grid_points);
    let (phi0, sigma0) = ols_start(d);
    let cold = GevAftParams::new(phi0, sigma0, grid[0])
        .expect("least-squares start is structurally valid");
    let mut pool = AnchorPool { cold, anchors: Vec::new(), warm_start: opts.warm_start };

    let mut inner_fits = Vec::with_capacity(grid.len());
    let mut curve = Vec::with_capacity(grid.len());
    let mut grid_failures = 0;
    for &xi in &grid {
        let fit = maximize_inner(xi, d, &pool.start_for(xi), opts);
        if fit.converged {
            pool.insert(xi, fit.params.clone());
            curve.push((xi, fit.loglik));
        } else {
            grid_failures += 1;
            curve.push((xi, f64::NEG_INFINITY));
        }
        inner_fits.push(fit);
    }

    let values: Vec<f64> = curve.iter().map(|&(_, v)| v).collect();
    let mut refinement_evals = 0;
    let refined = {
        let mut eval = |xi: f64| {
            refinement_evals += 1;
            let fit = maximize_inner(xi, d, &pool.start_for(xi), opts);
            if fit.converged {
                let v = fit.loglik;
                pool.insert(xi, fit.params);
                v
            } else {
                f64::NEG_INFINITY
            }
        };
        refine_from_grid(&mut eval, &grid, &values, opts.outer_tol)?
    };

    let at_max = maximize_inner(refined.psi_hat, d, &pool.start_for(refined.psi_hat), opts);
    let converged = !refined.boundary && at_max.converged && refined.value.is_finite();
    let params_at_max = at_max.params.clone();
    Ok(ProfileFit {
        kind: FitKind::Profile,
        psi_hat: refined.psi_hat,
        value_at_max: refined.value.max(at_max.loglik),
        full_mle: params_at_max.clone(),
        params_at_max,
        curve,
        inner_fits,
        diagnostics: FitDiagnostics {
            bracket: opts.bracket,
            grid_failures,
            refinement_evals,
            boundary: refined.boundary,
            last_mp_error: None,
        },
        converged,
    })
}

fn modified_pass(
    d: &CensoredDataset,
    opts: &FitOptions,
    profile: ProfileFit,
) -> Result<ProfileFit> {
    if !profile.converged {
        // the sample-space matrix needs a trustworthy full MLE
        return Ok(ProfileFit { kind: FitKind::ModifiedProfile, converged: false, ..profile });
    }
    let v = vhat(d, &profile.full_mle);
    let mut grid_failures = 0;
    let mut last_mp_error = None;
    let curve: Vec<(f64, f64)> = profile
        .inner_fits
        .iter()
        .map(|fit| {
            let xi = fit.params.xi;
            if !fit.converged {
                grid_failures += 1;
                return (xi, f64::NEG_INFINITY);
            }
            match mp_loglik(&fit.params, d, &v) {
                Ok(val) => (xi, val),
                Err(e) => {
                    grid_failures += 1;
                    last_mp_error = Some(e.to_string());
                    (xi, f64::NEG_INFINITY)
                }
            }
        })
        .collect();

    let (phi0, sigma0) = ols_start(d);
    let cold = GevAftParams::new(phi0, sigma0, opts.bracket.0)
        .expect("least-squares start is structurally valid");
    let mut pool = AnchorPool { cold, anchors: Vec::new(), warm_start: opts.warm_start };
    for fit in profile.inner_fits.iter().filter(|f| f.converged) {
        pool.insert(fit.params.xi, fit.params.clone());
    }

    let grid: Vec<f64> = curve.iter().map(|&(x, _)| x).collect();
    let values: Vec<f64> = curve.iter().map(|&(_, v)| v).collect();
    let mut refinement_evals = 0;
    let refined = {
        let mut eval = |xi: f64| {
            refinement_evals += 1;
            let fit = maximize_inner(xi, d, &pool.start_for(xi), opts);
            if !fit.converged {
                return f64::NEG_INFINITY;
            }
            let params = fit.params;
            let out = mp_loglik(&params, d, &v).unwrap_or(f64::NEG_INFINITY);
            pool.insert(xi, params);
            out
        };
        refine_from_grid(&mut eval, &grid, &values, opts.outer_tol)?
    };

    let at_max = maximize_inner(refined.psi_hat, d, &pool.start_for(refined.psi_hat), opts);
    let value_check = if at_max.converged {
        mp_loglik(&at_max.params, d, &v).unwrap_or(f64::NEG_INFINITY)
    } else {
        f64::NEG_INFINITY
    };
    let converged = !refined.boundary
        && at_max.converged
        && refined.value.is_finite()
        && value_check.is_finite();
    Ok(ProfileFit {
        kind: FitKind::ModifiedProfile,
        psi_hat: refined.psi_hat,
        value_at_max: refined.value,
        params_at_max: at_max.params,
        full_mle: profile.full_mle,
        curve,
        inner_fits: profile.inner_fits,
        diagnostics: FitDiagnostics {
            bracket: opts.bracket,
            grid_failures,
            refinement_evals,
            boundary: refined.boundary,
            last_mp_error,
        },
        converged,
    })
}

// ---------------------------------------------------------------------------
// Finite-difference validation utilities
// ---------------------------------------------------------------------------

/// Central-difference gradient with per-coordinate steps scaled to the
/// point.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut work = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-6 * x[i].abs().max(1.0);
        work[i] = x[i] + h;
        let up = f(&work);
        work[i] = x[i] - h;
        let dn = f(&work);
        work[i] = x[i];
        g[i] = (up - dn) / (2.0 * h);
    }
    g
}

/// Richardson-extrapolated central second differences; accurate to roughly
/// 1e-5 relative on smooth targets.
pub fn fd_hessian<F: Fn(&[f64]) -> f64>(f: F, x: &[f64]) -> DMatrix<f64> {
    let k = x.len();
    let at = |h_scale: f64| {
        let mut hess = DMatrix::zeros(k, k);
        let mut work = x.to_vec();
        for i in 0..k {
            for j in 0..k {
                let hi = h_scale * x[i].abs().max(1.0);
                let hj = h_scale * x[j].abs().max(1.0);
                let mut probe = |si: f64, sj: f64| {
                    work[i] = x[i] + si * hi;
                    work[j] += sj * hj; // accumulate handles i == j
                    let v = f(&work);
                    work[i] = x[i];
                    work[j] = x[j];
                    v
                };
                hess[(i, j)] = (probe(1.0, 1.0) - probe(1.0, -1.0) - probe(-1.0, 1.0)
                    + probe(-1.0, -1.0))
                    / (4.0 * hi * hj);
            }
        }
        hess
    };
    let coarse = at(1e-3);
    let fine = at(5e-4);
    fine.map(|v| v * 4.0 / 3.0) - coarse.map(|v| v / 3.0)
}

/// Compares an analytic gradient against central finite differences with an
/// adaptive step, shrinking the step when the stencil leaves the feasible
/// set. Returns the worst relative discrepancy across coordinates.
pub fn fd_check<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], analytic: &[f64]) -> Result<f64> {
    assert_eq!(x.len(), analytic.len());
    let mut worst = 0.0f64;
    let mut work = x.to_vec();
    for i in 0..x.len() {
        let mut h = 1e-6 * x[i].abs().max(1.0);
        let mut fd = None;
        for _ in 0..=5 {
            work[i] = x[i] + h;
            let up = f(&work);
            work[i] = x[i] - h;
            let dn = f(&work);
            work[i] = x[i];
            if up.is_finite() && dn.is_finite() {
                fd = Some((up - dn) / (2.0 * h));
                break;
            }
            h *= 0.5;
        }
        let fd = fd.ok_or(Error::StencilInfeasible { shrinks: 5 })?;
        worst = worst.max((analytic[i] - fd).abs() / fd.abs().max(1e-6));
    }
    Ok(worst)
}
