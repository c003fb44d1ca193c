//! Monte Carlo harness comparing the profile and modified profile
//! estimators over a grid of sample sizes, with summary statistics, CSV and
//! Markdown rendering, and deterministic parallel execution.
//!
//! Common random numbers: both estimators in a replicate are computed from
//! the identical dataset. Replicate `k` of a cell is a pure function of
//! `(master_seed, model, n, k)`, so results do not depend on worker count
//! or replicate order. Replicates whose fit fails to converge are excluded
//! from the summaries and counted per estimator.

use crate::error::Error;
use crate::ig::fit_ig;
use crate::optim::{fit_gev_pair, FitOptions};
use crate::sim::{
    calibrate_censoring, gen_gev_aft_with_shift, gen_ig, substream, SimConfigGev, SimConfigIg,
};
use crate::Result;
use rayon::prelude::*;

/// Model-specific truth and generator settings for one experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelConfig {
    /// Uncensored inverse Gaussian sample; interest parameter `lambda`.
    Ig { mu: f64, lambda: f64 },
    /// Censored GEV regression; interest parameter `xi`.
    Gev {
        phi: (f64, f64),
        sigma: f64,
        xi: f64,
        censor_rate: f64,
        fit: FitOptions,
    },
}

impl ModelConfig {
    /// True value of the interest parameter.
    pub fn truth(&self) -> f64 {
        match self {
            ModelConfig::Ig { lambda, .. } => *lambda,
            ModelConfig::Gev { xi, .. } => *xi,
        }
    }

    fn stream_tag(&self) -> u64 {
        match self {
            ModelConfig::Ig { .. } => 1,
            ModelConfig::Gev { .. } => 2,
        }
    }
}

/// Experiment plan: replication count, sample-size grid, model, seed.
#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub replications: usize,
    pub sample_sizes: Vec<usize>,
    pub model: ModelConfig,
    pub master_seed: u64,
}

/// One replicate's estimates; `None` marks an excluded (failed) fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateOutcome {
    pub dataset_fingerprint: u64,
    pub profile: Option<f64>,
    pub modified: Option<f64>,
}

/// All replicate outcomes for one `(model, n)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub n: usize,
    pub truth: f64,
    pub outcomes: Vec<ReplicateOutcome>,
}

/// Summary statistics for one `(estimator, n)` cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSummary {
    pub mean: f64,
    /// Sample variance (denominator `R - 1`); undefined for one replicate.
    pub variance: Option<f64>,
    pub bias: f64,
    /// Mean of squared errors about the true value.
    pub mse: f64,
    pub rb_percent: f64,
    pub n_converged: usize,
    pub n_failed: usize,
}

/// Runs every replicate of one cell; individual failures are recorded,
/// never propagated.
pub fn run_cell(cfg: &McConfig, n: usize) -> Result<CellResult> {
    if cfg.replications < 1 {
        return Err(Error::EmptyEstimates);
    }
    let truth = cfg.model.truth();
    let tag = cfg.model.stream_tag();
    let outcomes: Vec<ReplicateOutcome> = match &cfg.model {
        ModelConfig::Ig { mu, lambda } => (0..cfg.replications as u64)
            .into_par_iter()
            .map(|rep| {
                let sim = SimConfigIg {
                    n,
                    mu: *mu,
                    lambda: *lambda,
                    seed: substream(cfg.master_seed, &[tag, n as u64, rep]),
                };
                match gen_ig(&sim).and_then(|s| fit_ig(&s).map(|f| (s.fingerprint(), f))) {
                    Ok((fp, fit)) => ReplicateOutcome {
                        dataset_fingerprint: fp,
                        profile: Some(fit.lambda_hat_p),
                        modified: Some(fit.lambda_hat_mp),
                    },
                    Err(_) => ReplicateOutcome {
                        dataset_fingerprint: 0,
                        profile: None,
                        modified: None,
                    },
                }
            })
            .collect(),
        ModelConfig::Gev { phi, sigma, xi, censor_rate, fit } => {
            let sim0 = SimConfigGev {
                n,
                phi: *phi,
                sigma: *sigma,
                xi: *xi,
                target_censor_rate: *censor_rate,
                seed: 0,
            };
            let shift = if *censor_rate == 0.0 {
                f64::INFINITY
            } else {
                calibrate_censoring(*censor_rate, &sim0)?.shift
            };
            (0..cfg.replications as u64)
                .into_par_iter()
                .map(|rep| {
                    let sim = SimConfigGev {
                        seed: substream(cfg.master_seed, &[tag, n as u64, rep]),
                        ..sim0
                    };
                    let data = match gen_gev_aft_with_shift(&sim, shift) {
                        Ok(d) => d,
                        Err(_) => {
                            return ReplicateOutcome {
                                dataset_fingerprint: 0,
                                profile: None,
                                modified: None,
                            }
                        }
                    };
                    let fp = data.fingerprint();
                    match fit_gev_pair(&data, fit) {
                        Ok((p, mp)) => ReplicateOutcome {
                            dataset_fingerprint: fp,
                            profile: p.converged.then_some(p.psi_hat),
                            modified: mp.converged.then_some(mp.psi_hat),
                        },
                        Err(_) => ReplicateOutcome {
                            dataset_fingerprint: fp,
                            profile: None,
                            modified: None,
                        },
                    }
                })
                .collect()
        }
    };
    Ok(CellResult { n, truth, outcomes })
}

/// Mean, sample variance, bias, mean squared error, and relative bias of a
/// set of converged estimates.
pub fn summarize(estimates: &[f64], true_value: f64) -> Result<McSummary> {
    if estimates.is_empty() {
        return Err(Error::EmptyEstimates);
    }
    let r = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / r;
    let variance = if estimates.len() > 1 {
        Some(estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (r - 1.0))
    } else {
        None
    };
    let bias = mean - true_value;
    let mse = estimates.iter().map(|e| (e - true_value).powi(2)).sum::<f64>() / r;
    Ok(McSummary {
        mean,
        variance,
        bias,
        mse,
        rb_percent: 100.0 * bias / true_value,
        n_converged: estimates.len(),
        n_failed: 0,
    })
}

fn summarize_cell(cell: &CellResult, pick: impl Fn(&ReplicateOutcome) -> Option<f64>) -> Result<McSummary> {
    let estimates: Vec<f64> = cell.outcomes.iter().filter_map(&pick).collect();
    let mut summary = summarize(&estimates, cell.truth)?;
    summary.n_failed = cell.outcomes.len() - summary.n_converged;
    Ok(summary)
}

/// Which published table layout to reproduce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableId {
    One,
    Two,
}

impl TableId {
    /// Display rounding used by the Markdown rendering.
    pub fn decimals(&self) -> usize {
        match self {
            TableId::One => 3,
            TableId::Two => 4,
        }
    }

    pub fn sample_sizes(&self) -> Vec<usize> {
        match self {
            TableId::One => vec![3, 5, 7, 9, 11, 13, 15, 17, 19, 25, 30, 50],
            TableId::Two => vec![20, 50],
        }
    }

    pub fn model(&self) -> ModelConfig {
        match self {
            TableId::One => ModelConfig::Ig { mu: 2.0, lambda: 4.0 },
            TableId::Two => ModelConfig::Gev {
                phi: (1.0, 1.0),
                sigma: 1.0,
                xi: 2.0,
                censor_rate: 0.25,
                fit: FitOptions::default(),
            },
        }
    }
}

/// One row of a rendered table: both estimators' summaries at one n.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub n: usize,
    pub p: McSummary,
    pub mp: McSummary,
}

/// Fully computed table, ready for rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct TableArtifact {
    pub table: TableId,
    pub truth: f64,
    pub replications: usize,
    pub master_seed: u64,
    pub rows: Vec<TableRow>,
}

/// Runs every cell of the requested table.
pub fn replicate_table(
    which: TableId,
    replications: usize,
    master_seed: u64,
) -> Result<TableArtifact> {
    let cfg = McConfig {
        replications,
        sample_sizes: which.sample_sizes(),
        model: which.model(),
        master_seed,
    };
    let mut rows = Vec::with_capacity(cfg.sample_sizes.len());
    for &n in &cfg.sample_sizes {
        let cell = run_cell(&cfg, n)?;
        rows.push(TableRow {
            n,
            p: summarize_cell(&cell, |o| o.profile)?,
            mp: summarize_cell(&cell, |o| o.modified)?,
        });
    }
    Ok(TableArtifact {
        table: which,
        truth: cfg.model.truth(),
        replications,
        master_seed,
        rows,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => "NA".to_string(),
    }
}

/// Long-format CSV, one row per `(n, estimator)`, full precision.
pub fn render_csv(artifact: &TableArtifact) -> String {
    let mut out = String::from("n,estimator,mean,variance,bias,mse,rb_percent,n_converged,n_failed\n");
    for row in &artifact.rows {
        for (label, s) in [("p", &row.p), ("mp", &row.mp)] {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                row.n,
                label,
                s.mean,
                fmt_opt(s.variance),
                s.bias,
                s.mse,
                s.rb_percent,
                s.n_converged,
                s.n_failed
            ));
        }
    }
    out
}

/// Paper-shaped Markdown table, one row per sample size, rounded for
/// display; failure counts go in the footer.
pub fn render_markdown(artifact: &TableArtifact) -> String {
    let d = artifact.table.decimals();
    let fmt = |v: f64| format!("{v:.d$}");
    let fmt_var = |v: Option<f64>| v.map_or("NA".to_string(), &fmt);
    let mut out = String::new();
    out.push_str(
        "| n | mean p | mean mp | variance p | variance mp | bias p | bias mp | MSE p | MSE mp | RB% p | RB% mp |\n",
    );
    out.push_str("|---|---|---|---|---|---|---|---|---|---|---|\n");
    for row in &artifact.rows {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |\n",
            row.n,
            fmt(row.p.mean),
            fmt(row.mp.mean),
            fmt_var(row.p.variance),
            fmt_var(row.mp.variance),
            fmt(row.p.bias),
            fmt(row.mp.bias),
            fmt(row.p.mse),
            fmt(row.mp.mse),
            fmt(row.p.rb_percent),
            fmt(row.mp.rb_percent),
        ));
    }
    let failed: Vec<String> = artifact
        .rows
        .iter()
        .filter(|r| r.p.n_failed > 0 || r.mp.n_failed > 0)
        .map(|r| format!("n={}: p={}, mp={}", r.n, r.p.n_failed, r.mp.n_failed))
        .collect();
    out.push('\n');
    out.push_str(&format!(
        "{} replications, master seed {}.",
        artifact.replications, artifact.master_seed
    ));
    if failed.is_empty() {
        out.push_str(" No excluded replicates.\n");
    } else {
        out.push_str(&format!(" Excluded non-convergent replicates: {}.\n", failed.join("; ")));
    }
    out
}
