//! Experiment runners. Each returns the files it would write; writing them is
//! left to the caller.

use std::time::Instant;

use serde::Serialize;
use serde_json::json;
use spikedet_core::eta::{grf_lower_bound, sample_grf_cloud};
use spikedet_core::mc::MCEstimate;
use spikedet_core::moment::{
    default_epsilon, e1_e2_split, roc_experiment, second_moment_direct_mc, second_moment_haar_mc,
    xi_empirical_tail, xi_tail_probability,
};
use spikedet_core::rng::SeedSpec;
use spikedet_core::thresholds::threshold_report;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, ExperimentKind, MomentMethod, OutputFormat};
use crate::output::{csv, json_file, Artifact, Cell, Provenance};

/// Slack on the cloud bound check.
pub const CLOUD_BOUND_TOL: f64 = 1e-9;

/// Work limits; anything larger is refused rather than left running for hours.
pub mod limits {
    pub const MAX_N_HAAR: usize = 64;
    pub const MAX_HAAR_SAMPLES: usize = 10_000_000;
    pub const MAX_CLOUD_POINTS: usize = 5_000_000;
    pub const MAX_BINS: usize = 100_000;
    /// Bound on `outer · inner · nᵈ` (or `trials · inner · nᵈ`) for the
    /// nested estimators, which form dense tensors.
    pub const MAX_NESTED_WORK: f64 = 5e9;
    pub const MAX_TENSOR_ENTRIES: usize = 4096;
    /// Bound on `samples · n` for the sphere sampler.
    pub const MAX_XI_WORK: f64 = 1e9;
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("refused: {0}")]
    Limit(String),
    #[error("{0}")]
    Core(#[from] spikedet_core::Error),
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub artifacts: Vec<Artifact>,
    /// Invariant breaches seen during the run; non-empty means exit code 2.
    pub violations: Vec<String>,
    pub duration_seconds: f64,
}

/// Runs `cfg.experiment`. With `timing` the wall-clock duration is embedded in
/// the files, which then are no longer byte-reproducible.
pub fn run(cfg: &ExperimentConfig, timing: bool) -> Result<RunOutput, RunError> {
    let kind = cfg
        .experiment
        .ok_or_else(|| ConfigError::new("experiment", "no experiment selected"))?;
    cfg.gram_set()?;
    if cfg.n.is_empty() || cfg.n.contains(&0) {
        return Err(ConfigError::new("n", "need at least one positive dimension").into());
    }
    let start = Instant::now();
    let results = match kind {
        ExperimentKind::Threshold => Results::Threshold(threshold(cfg)?),
        ExperimentKind::Cloud => Results::Cloud(cloud(cfg)?),
        ExperimentKind::Moment => Results::Moment(moment(cfg)?),
        ExperimentKind::Split => Results::Split(split(cfg)?),
        ExperimentKind::XiTail => Results::XiTail(xi_tail(cfg)?),
        ExperimentKind::Roc => Results::Roc(roc(cfg)?),
    };
    let duration_seconds = start.elapsed().as_secs_f64();
    let prov = Provenance::new(cfg, timing.then_some(duration_seconds));
    let (artifacts, violations) = results.render(&prov, cfg.format);
    Ok(RunOutput {
        artifacts,
        violations,
        duration_seconds,
    })
}

enum Results {
    Threshold(spikedet_core::thresholds::ThresholdReport),
    Cloud(CloudResult),
    Moment(Vec<MomentRow>),
    Split(Vec<SplitRow>),
    XiTail(Vec<XiRow>),
    Roc(Vec<RocRow>),
}

fn seed_cells(s: &SeedSpec) -> [Cell; 2] {
    [s.master_seed.into(), s.stream_id.into()]
}

impl Results {
    fn render(self, prov: &Provenance, format: OutputFormat) -> (Vec<Artifact>, Vec<String>) {
        let json = format == OutputFormat::Json;
        match self {
            Results::Threshold(r) => {
                let a = if json {
                    json_file(prov, "threshold.json", &r)
                } else {
                    let opt = |v: Option<f64>| v.map_or(Cell::Text(String::new()), Cell::Float);
                    let rows = vec![
                        vec!["d".into(), r.d.into()],
                        vec!["beta_d".into(), r.beta_d.into()],
                        vec!["critical_amplitude".into(), r.critical_amplitude.into()],
                        vec!["sum_lambda".into(), r.sum_lambda.into()],
                        vec!["eta_max".into(), r.eta_max.into()],
                        vec!["hoelder_ok".into(), r.hoelder_ok.into()],
                        vec!["hoelder_margin".into(), r.hoelder_margin.into()],
                        vec!["main_ok".into(), r.main_ok.into()],
                        vec!["main_margin".into(), r.main_margin.into()],
                        vec!["conclusive".into(), r.conclusive.into()],
                        vec!["d2_mu_max".into(), opt(r.d2_mu_max)],
                        vec!["d2_ok".into(), r.d2_ok.map_or(Cell::Text(String::new()), Cell::from)],
                    ];
                    csv(prov, "threshold.csv", &["field", "value"], rows)
                };
                (vec![a], vec![])
            }
            Results::Cloud(c) => c.render(prov),
            Results::Moment(rows) => {
                let a = if json {
                    json_file(prov, "moment.json", &rows)
                } else {
                    let cells = rows
                        .iter()
                        .map(|r| {
                            let mut v: Vec<Cell> = vec![
                                r.n.into(),
                                r.method.as_str().into(),
                                r.estimate.count.into(),
                                r.estimate.mean.into(),
                                r.estimate.stderr.into(),
                                r.estimate.log_domain_max.unwrap_or(f64::NEG_INFINITY).into(),
                            ];
                            v.extend(seed_cells(&r.estimate.seed));
                            v
                        })
                        .collect();
                    csv(
                        prov,
                        "moment.csv",
                        &["n", "method", "count", "mean", "stderr", "log_domain_max", "master_seed", "stream_id"],
                        cells,
                    )
                };
                (vec![a], vec![])
            }
            Results::Split(rows) => {
                let a = if json {
                    json_file(prov, "split.json", &rows)
                } else {
                    let cells = rows
                        .iter()
                        .map(|r| {
                            let s = &r.split;
                            let mut v: Vec<Cell> = vec![
                                r.n.into(),
                                s.epsilon.into(),
                                s.total.count.into(),
                                s.e1.mean.into(),
                                s.e1.stderr.into(),
                                s.e2.mean.into(),
                                s.e2.stderr.into(),
                                s.total.mean.into(),
                                s.total.stderr.into(),
                            ];
                            v.extend(seed_cells(&s.total.seed));
                            v
                        })
                        .collect();
                    csv(
                        prov,
                        "split.csv",
                        &[
                            "n", "epsilon", "count", "e1_mean", "e1_stderr", "e2_mean", "e2_stderr", "total_mean",
                            "total_stderr", "master_seed", "stream_id",
                        ],
                        cells,
                    )
                };
                (vec![a], vec![])
            }
            Results::XiTail(rows) => {
                let a = if json {
                    json_file(prov, "xi_tail.json", &rows)
                } else {
                    let cells = rows
                        .iter()
                        .map(|r| {
                            let mut v: Vec<Cell> = vec![
                                r.n.into(),
                                r.t.into(),
                                r.empirical.count.into(),
                                r.empirical.mean.into(),
                                r.empirical.stderr.into(),
                                r.analytic.into(),
                            ];
                            v.extend(seed_cells(&r.empirical.seed));
                            v
                        })
                        .collect();
                    csv(
                        prov,
                        "xi_tail.csv",
                        &["n", "t", "samples", "empirical", "stderr", "analytic", "master_seed", "stream_id"],
                        cells,
                    )
                };
                (vec![a], vec![])
            }
            Results::Roc(rows) => {
                if json {
                    return (vec![json_file(prov, "roc.json", &rows)], vec![]);
                }
                let mut out: Vec<Artifact> = rows
                    .iter()
                    .map(|r| {
                        let cells = r
                            .curve
                            .points
                            .iter()
                            .map(|p| vec![p.threshold.into(), p.fpr.into(), p.tpr.into()])
                            .collect();
                        csv(prov, &format!("roc_n{}.csv", r.n), &["threshold", "fpr", "tpr"], cells)
                    })
                    .collect();
                let summary = rows
                    .iter()
                    .map(|r| {
                        let mut v: Vec<Cell> = vec![r.n.into(), r.curve.trials.into(), r.curve.tv_proxy.into()];
                        v.extend(seed_cells(&r.seed));
                        v
                    })
                    .collect();
                out.push(csv(
                    prov,
                    "roc_summary.csv",
                    &["n", "trials", "tv_proxy", "master_seed", "stream_id"],
                    summary,
                ));
                (out, vec![])
            }
        }
    }
}

fn threshold(cfg: &ExperimentConfig) -> Result<spikedet_core::thresholds::ThresholdReport, RunError> {
    Ok(threshold_report(&cfg.lambdas, &cfg.gram_set()?)?)
}

fn limit(ok: bool, msg: impl FnOnce() -> String) -> Result<(), RunError> {
    if ok {
        Ok(())
    } else {
        Err(RunError::Limit(msg()))
    }
}

/// Seed of the `i`-th sub-run (one per `n`, or per `(n, t)` pair).
fn sub_seed(cfg: &ExperimentConfig, i: usize) -> SeedSpec {
    SeedSpec::new(cfg.seed, i as u64)
}

fn tensor_entries(n: usize, d: usize) -> Option<usize> {
    n.checked_pow(d as u32)
}

struct CloudResult {
    points: Vec<(f64, f64)>,
    envelope: Vec<(f64, f64, f64)>,
    bound: Vec<(f64, f64)>,
    eta_max: f64,
    bound_violations: usize,
    per_matrix_violations: usize,
}

impl CloudResult {
    fn render(self, prov: &Provenance) -> (Vec<Artifact>, Vec<String>) {
        let mut violations = Vec::new();
        if self.bound_violations > 0 {
            violations.push(format!("{} cloud points lie above the bound", self.bound_violations));
        }
        if self.per_matrix_violations > 0 {
            violations.push(format!(
                "{} samples break log det(I - psi* psi) <= log(1 - |psi|^2)",
                self.per_matrix_violations
            ));
        }
        let cloud = csv(
            prov,
            "cloud.csv",
            &["x", "y"],
            self.points.iter().map(|&(x, y)| vec![x.into(), y.into()]).collect(),
        );
        let envelope = csv(
            prov,
            "envelope.csv",
            &["bin_center", "max_y", "bound_value"],
            self.envelope.iter().map(|&(c, m, b)| vec![c.into(), m.into(), b.into()]).collect(),
        );
        let bound = csv(
            prov,
            "bound.csv",
            &["bin_center", "bound_value"],
            self.bound.iter().map(|&(c, b)| vec![c.into(), b.into()]).collect(),
        );
        let summary = json_file(
            prov,
            "cloud_summary.json",
            &json!({
                "points": self.points.len(),
                "eta_max": self.eta_max,
                "bound_violations": self.bound_violations,
                "per_matrix_violations": self.per_matrix_violations,
            }),
        );
        (vec![cloud, envelope, bound, summary], violations)
    }
}

fn cloud(cfg: &ExperimentConfig) -> Result<CloudResult, RunError> {
    let [n] = cfg.n[..] else {
        return Err(ConfigError::new("n", "cloud takes a single n").into());
    };
    limit(n <= limits::MAX_N_HAAR, || format!("cloud n = {n} exceeds {}", limits::MAX_N_HAAR))?;
    limit(cfg.samples <= limits::MAX_CLOUD_POINTS, || {
        format!("cloud samples = {} exceeds {}", cfg.samples, limits::MAX_CLOUD_POINTS)
    })?;
    limit(cfg.bins <= limits::MAX_BINS, || format!("bins = {} exceeds {}", cfg.bins, limits::MAX_BINS))?;
    let spec = cfg.spike(n)?;
    let c = sample_grf_cloud(&spec, cfg.samples, sub_seed(cfg, 0), cfg.bins)?;
    let (eta_max, d) = (c.eta_max, c.d);
    // Bound curve on every bin center, populated or not.
    let width = 2.0 * eta_max / cfg.bins as f64;
    let bound = (0..cfg.bins)
        .map(|b| {
            let center = -eta_max + (b as f64 + 0.5) * width;
            (center, -grf_lower_bound(center, eta_max, d))
        })
        .collect();
    Ok(CloudResult {
        points: c.points.iter().map(|p| (p.x, p.y)).collect(),
        envelope: c.envelope.iter().map(|b| (b.center, b.max_y, b.bound)).collect(),
        bound,
        eta_max,
        bound_violations: c.bound_violations(CLOUD_BOUND_TOL),
        per_matrix_violations: c.generous_bound_violations,
    })
}

#[derive(Serialize)]
struct MomentRow {
    n: usize,
    method: String,
    estimate: MCEstimate,
}

fn moment(cfg: &ExperimentConfig) -> Result<Vec<MomentRow>, RunError> {
    cfg.n
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let spec = cfg.spike(n)?;
            let seed = sub_seed(cfg, i);
            let estimate = match cfg.method {
                MomentMethod::Haar => {
                    check_haar(n, cfg.samples)?;
                    second_moment_haar_mc(&spec, cfg.samples, seed)?
                }
                MomentMethod::Direct => {
                    check_nested(n, cfg.d, cfg.outer, cfg.inner, "outer")?;
                    second_moment_direct_mc(&spec, cfg.outer, cfg.inner, cfg.prior, seed)?
                }
            };
            Ok(MomentRow {
                n,
                method: cfg.method.to_string(),
                estimate,
            })
        })
        .collect()
}

fn check_haar(n: usize, samples: usize) -> Result<(), RunError> {
    limit(n <= limits::MAX_N_HAAR, || format!("n = {n} exceeds {} for Haar sampling", limits::MAX_N_HAAR))?;
    limit(samples <= limits::MAX_HAAR_SAMPLES, || {
        format!("samples = {samples} exceeds {}", limits::MAX_HAAR_SAMPLES)
    })
}

fn check_nested(n: usize, d: usize, outer: usize, inner: usize, what: &str) -> Result<(), RunError> {
    let entries = tensor_entries(n, d).filter(|&e| e <= limits::MAX_TENSOR_ENTRIES);
    let Some(entries) = entries else {
        return Err(RunError::Limit(format!(
            "n^d = {n}^{d} exceeds {} tensor entries",
            limits::MAX_TENSOR_ENTRIES
        )));
    };
    let work = outer as f64 * inner as f64 * entries as f64;
    limit(work <= limits::MAX_NESTED_WORK, || {
        format!("{what} x inner x n^d = {work:e} exceeds {:e}", limits::MAX_NESTED_WORK)
    })
}

#[derive(Serialize)]
struct SplitRow {
    n: usize,
    split: spikedet_core::moment::SplitEstimate,
}

fn split(cfg: &ExperimentConfig) -> Result<Vec<SplitRow>, RunError> {
    cfg.n
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            check_haar(n, cfg.samples)?;
            let spec = cfg.spike(n)?;
            let epsilon = cfg.epsilon.unwrap_or_else(|| default_epsilon(&spec));
            let split = e1_e2_split(&spec, epsilon, cfg.samples, sub_seed(cfg, i))?;
            Ok(SplitRow { n, split })
        })
        .collect()
}

#[derive(Serialize)]
struct XiRow {
    n: usize,
    t: f64,
    analytic: f64,
    empirical: MCEstimate,
}

fn xi_tail(cfg: &ExperimentConfig) -> Result<Vec<XiRow>, RunError> {
    let pairs: Vec<(usize, f64)> = cfg.n.iter().flat_map(|&n| cfg.t.iter().map(move |&t| (n, t))).collect();
    pairs
        .iter()
        .enumerate()
        .map(|(i, &(n, t))| {
            let work = cfg.samples as f64 * n as f64;
            limit(work <= limits::MAX_XI_WORK, || {
                format!("samples x n = {work:e} exceeds {:e}", limits::MAX_XI_WORK)
            })?;
            Ok(XiRow {
                n,
                t,
                analytic: xi_tail_probability(t, n)?,
                empirical: xi_empirical_tail(n, t, cfg.samples, sub_seed(cfg, i))?,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct RocRow {
    n: usize,
    seed: SeedSpec,
    curve: spikedet_core::moment::RocCurve,
}

fn roc(cfg: &ExperimentConfig) -> Result<Vec<RocRow>, RunError> {
    cfg.n
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            check_nested(n, cfg.d, cfg.trials, cfg.inner, "trials")?;
            let spec = cfg.spike(n)?;
            let seed = sub_seed(cfg, i);
            Ok(RocRow {
                n,
                seed,
                curve: roc_experiment(&spec, cfg.trials, cfg.inner, seed)?,
            })
        })
        .collect()
}
