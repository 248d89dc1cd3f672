//! Runs one configured experiment and persists every iteration.
//!
//! Layout of the output directory:
//!
//! ```text
//! config.toml          resolved configuration
//! data.csv             sensors, noise-free and noisy data
//! truth_field.csv      channel truth on the inversion grid
//! iter_000/            prior ensemble
//! iter_001/ ...        one directory per update
//!   ensemble.csv       parameter rows × member columns
//!   predictions.csv    sensor rows × member columns
//!   weights.csv        importance weights, one row per mixture component
//!   diagnostics.json   scalar diagnostics, intervals, histograms, mixture
//!   field.csv          mean fields (channel)
//!   state_std.csv      state standard deviation (prior and final iteration)
//! summary.json         per-iteration error series and final estimate
//! ```
//!
//! Wall-clock times are logged and returned but never written, so reruns
//! produce byte-identical directories.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use iesis_core::dct::DctBasis;
use iesis_core::diagnostics::{
    ensemble_percentiles, marginal_histogram, prediction_intervals, relative_error, state_std_field, Histogram,
    IntervalSummary, SensorInterval,
};
use iesis_core::forward::{arctan_map, Grid2D, Sensors};
use iesis_core::gmm::{GaussianMixture, SmemConfig};
use iesis_core::ies::{
    point_estimate, run_dct_ies_is, run_gaussian_ies_is, run_gmm_ies_is, DctSetup, FieldProjection, GmmSettings,
    IesSettings, InversionResult, IterationRecord, PriorSpec,
};
use iesis_core::oracle::{linear_gmm_posterior, LinearModel};
use iesis_core::postprocess::{FaciesScale, PostProcessSpec};
use iesis_core::rng::{Stream, Streams};
use iesis_core::{DMatrix, DVector};
use log::info;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ExperimentKind, LinearDriver};
use crate::error::{ExperimentError, Result};
use crate::models::{fracture_endpoints, grids, sensors, ChannelModel, FractureModel, SourceModel};
use crate::persist::{self, fmt};
use crate::synthetic::{generate_synthetic_data, SyntheticData};

/// Top-level files written by a run.
pub const RUN_FILES: [&str; 4] = ["config.toml", "data.csv", "truth_field.csv", "summary.json"];

/// Mixture parameters with covariances stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureRecord {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<f64>>,
}

impl From<&GaussianMixture> for MixtureRecord {
    fn from(m: &GaussianMixture) -> Self {
        Self {
            weights: m.weights().to_vec(),
            means: m.means().iter().map(|v| v.as_slice().to_vec()).collect(),
            covariances: m.covariances().iter().map(|c| c.transpose().as_slice().to_vec()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationDiagnostics {
    pub iteration: usize,
    pub lambda: f64,
    pub step_norm: f64,
    pub ess: Vec<f64>,
    pub hessian_repaired: Vec<bool>,
    pub components: Option<usize>,
    pub smoothing: Option<f64>,
    pub retained_dimension: Option<usize>,
    /// Point estimate in physical parameters.
    pub estimate: Option<Vec<f64>>,
    pub theta_error: Option<f64>,
    pub endpoint_error: Option<f64>,
    /// Distance between the estimated and true fracture midpoints.
    pub midpoint_distance: Option<f64>,
    /// Relative L2 error of the post-processed mean field.
    pub field_error: Option<f64>,
    /// Relative L2 error of the field of the mean coefficients.
    pub field_error_raw: Option<f64>,
    /// Relative error of the ensemble mean against the exact posterior mean.
    pub oracle_mean_error: Option<f64>,
    pub parameter_intervals: Vec<IntervalSummary>,
    pub prediction_intervals: Vec<SensorInterval>,
    pub histograms: Vec<Histogram>,
    pub map_points: Vec<Vec<f64>>,
    pub mixture: Option<MixtureRecord>,
}

/// Scalar series entry of [`RunSummary`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesEntry {
    pub iteration: usize,
    pub lambda: f64,
    pub step_norm: f64,
    pub min_ess: f64,
    pub components: Option<usize>,
    pub retained_dimension: Option<usize>,
    pub theta_error: Option<f64>,
    pub endpoint_error: Option<f64>,
    pub midpoint_distance: Option<f64>,
    pub field_error: Option<f64>,
    pub field_error_raw: Option<f64>,
    pub oracle_mean_error: Option<f64>,
}

impl From<&IterationDiagnostics> for SeriesEntry {
    fn from(d: &IterationDiagnostics) -> Self {
        Self {
            iteration: d.iteration,
            lambda: d.lambda,
            step_norm: d.step_norm,
            min_ess: d.ess.iter().copied().fold(f64::INFINITY, f64::min),
            components: d.components,
            retained_dimension: d.retained_dimension,
            theta_error: d.theta_error,
            endpoint_error: d.endpoint_error,
            midpoint_distance: d.midpoint_distance,
            field_error: d.field_error,
            field_error_raw: d.field_error_raw,
            oracle_mean_error: d.oracle_mean_error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub converged: bool,
    /// Number of updates performed.
    pub iterations: usize,
    pub truth: Option<Vec<f64>>,
    pub final_estimate: Option<Vec<f64>>,
    pub series: Vec<SeriesEntry>,
}

impl RunSummary {
    pub fn entry(&self, iteration: usize) -> Option<&SeriesEntry> {
        self.series.iter().find(|e| e.iteration == iteration)
    }

    pub fn last(&self) -> &SeriesEntry {
        self.series.last().expect("series holds at least the prior")
    }
}

/// Everything a run produced, in memory.
#[derive(Debug)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub diagnostics: Vec<IterationDiagnostics>,
    pub result: InversionResult,
    pub data: SyntheticData,
    pub output: PathBuf,
    /// Wall clock of data generation plus the prior (index 0) and of each update.
    pub timings: Vec<Duration>,
}

impl RunOutcome {
    pub fn total_time(&self) -> Duration {
        self.timings.iter().sum()
    }
}

enum Problem {
    Source(SourceModel),
    Channel {
        model: ChannelModel,
        setup: DctSetup,
        grid: Grid2D,
    },
    Fracture(FractureModel),
    Linear(LinearModel),
}

#[derive(Default)]
struct Assessment {
    estimate: Option<Vec<f64>>,
    theta_error: Option<f64>,
    endpoint_error: Option<f64>,
    midpoint_distance: Option<f64>,
    field_error: Option<f64>,
    field_error_raw: Option<f64>,
    oracle_mean_error: Option<f64>,
    /// Members in physical parameters, for intervals and histograms.
    physical: Option<DMatrix<f64>>,
    /// Raw and post-processed mean fields.
    fields: Option<(Vec<f64>, Vec<f64>)>,
}

fn mixture_or_mean(rec: &IterationRecord) -> DVector<f64> {
    rec.mixture.as_ref().map(point_estimate).unwrap_or_else(|| rec.mean.clone())
}

impl Problem {
    fn build(cfg: &ExperimentConfig, data: &SyntheticData) -> Result<Self> {
        Ok(match cfg.experiment {
            ExperimentKind::SourceLocation => {
                let (grid, _) = grids(cfg)?;
                let src = cfg.source.as_ref().expect("validated");
                let obs = cfg.observation.as_ref().expect("validated");
                Problem::Source(SourceModel::new(grid, sensors(obs)?, src.strength, src.width)?)
            }
            ExperimentKind::ChannelDct => {
                let (grid, _) = grids(cfg)?;
                let obs = cfg.observation.as_ref().expect("validated");
                let time = cfg.time.as_ref().expect("validated");
                let ch = cfg.channel.as_ref().expect("validated");
                let dct = cfg.dct.as_ref().expect("validated");
                let setup = DctSetup {
                    basis: DctBasis::build(grid.nx(), grid.ny(), dct.n_c, dct.ordering)?,
                    reduce_alpha: dct.alpha,
                    projection: Some(FieldProjection {
                        spec: PostProcessSpec::new(dct.tau, dct.b, dct.lower, dct.upper)?,
                        scale: FaciesScale::new(ch.facies_low, ch.facies_high)?,
                    }),
                    project_forward: dct.project_forward,
                };
                Problem::Channel {
                    model: ChannelModel::new(grid, sensors(obs)?, ch.source, time.dt, time.horizon),
                    setup,
                    grid,
                }
            }
            ExperimentKind::FractureFractional => {
                let (grid, _) = grids(cfg)?;
                let obs = cfg.observation.as_ref().expect("validated");
                let time = cfg.time.as_ref().expect("validated");
                let fr = cfg.fracture.as_ref().expect("validated");
                Problem::Fracture(FractureModel::new(grid, sensors(obs)?, fr, time.dt, time.horizon))
            }
            ExperimentKind::CustomLinear => Problem::Linear(data.linear.clone().expect("linear data carry G")),
        })
    }

    fn n_params(&self) -> usize {
        match self {
            Problem::Source(_) => 2,
            Problem::Channel { setup, .. } => setup.basis.n_retained(),
            Problem::Fracture(_) => 4,
            Problem::Linear(m) => m.g().ncols(),
        }
    }

    fn channel_basis(&self, rec: &IterationRecord) -> Result<DctBasis> {
        match self {
            Problem::Channel { grid, .. } => {
                let retained = rec
                    .retained
                    .clone()
                    .ok_or_else(|| iesis_core::Error::validation("cosine run without retained columns"))?;
                Ok(DctBasis::with_columns(grid.nx(), grid.ny(), retained)?)
            }
            _ => unreachable!("only the channel problem has a basis"),
        }
    }

    fn assess(&self, rec: &IterationRecord, data: &SyntheticData, oracle_mean: Option<&DVector<f64>>) -> Result<Assessment> {
        let truth = data.truth.as_deref();
        let mut a = Assessment::default();
        match self {
            Problem::Source(_) | Problem::Linear(_) => {
                let est = mixture_or_mean(rec);
                if let Some(t) = truth {
                    a.theta_error = Some(relative_error(est.as_slice(), t)?);
                }
                if let Some(m) = oracle_mean {
                    a.oracle_mean_error = Some(relative_error(rec.mean.as_slice(), m.as_slice())?);
                }
                a.estimate = Some(est.as_slice().to_vec());
                a.physical = Some(rec.ensemble.samples().clone());
            }
            Problem::Fracture(_) => {
                let est = arctan_map(mixture_or_mean(rec).as_slice())?;
                if let Some(t) = truth {
                    a.theta_error = Some(relative_error(&est, t)?);
                    a.endpoint_error = Some(relative_error(&fracture_endpoints(&est), &fracture_endpoints(t))?);
                    a.midpoint_distance = Some(((est[1] - t[1]).powi(2) + (est[2] - t[2]).powi(2)).sqrt());
                }
                a.estimate = Some(est);
                let s = rec.ensemble.samples();
                let mut phys = DMatrix::zeros(s.nrows(), s.ncols());
                for (j, c) in s.column_iter().enumerate() {
                    phys.set_column(j, &DVector::from_vec(arctan_map(c.as_slice())?));
                }
                a.physical = Some(phys);
            }
            Problem::Channel { setup, .. } => {
                let basis = self.channel_basis(rec)?;
                let projection = setup.projection.expect("channel runs project");
                let raw = basis.synthesize(rec.mean.as_slice())?;
                let ne = rec.ensemble.n_members();
                let mut post = vec![0.0; raw.len()];
                for c in rec.ensemble.samples().column_iter() {
                    let f = projection.apply(&basis.synthesize(c.as_slice())?);
                    for (p, v) in post.iter_mut().zip(f) {
                        *p += v / ne as f64;
                    }
                }
                if let Some(t) = &data.truth_field {
                    a.field_error_raw = Some(relative_error(&raw, t)?);
                    a.field_error = Some(relative_error(&post, t)?);
                }
                a.fields = Some((raw, post));
            }
        }
        Ok(a)
    }

    /// Final-time lattice state of member `j`.
    fn member_state(&self, rec: &IterationRecord, basis: Option<&DctBasis>, j: usize) -> Result<Vec<f64>> {
        let theta = rec.ensemble.member(j);
        let state = match self {
            Problem::Source(m) => m.state(&theta)?,
            Problem::Fracture(m) => m.state(&theta)?,
            Problem::Channel { model, setup, .. } => {
                model.state(&setup.forward_field(basis.expect("channel basis"), &theta)?)?
            }
            Problem::Linear(_) => unreachable!("linear problems have no state"),
        };
        Ok(state.last().to_vec())
    }

    fn state_grid(&self) -> Option<Grid2D> {
        match self {
            Problem::Source(m) => Some(m.grid()),
            Problem::Fracture(m) => Some(m.grid()),
            Problem::Channel { grid, .. } => Some(*grid),
            Problem::Linear(_) => None,
        }
    }
}

struct Recorder<'a> {
    cfg: &'a ExperimentConfig,
    problem: &'a Problem,
    data: &'a SyntheticData,
    oracle_mean: Option<DVector<f64>>,
    root: PathBuf,
    streams: Streams,
    diagnostics: Vec<IterationDiagnostics>,
    timings: Vec<Duration>,
    clock: Instant,
}

impl Recorder<'_> {
    fn record(&mut self, rec: &IterationRecord) -> Result<()> {
        let dir = persist::iteration_dir(&self.root, rec.iteration);
        persist::create_dir(&dir)?;
        persist::write_matrix(&dir.join("ensemble.csv"), "component", rec.ensemble.samples())?;
        persist::write_matrix(&dir.join("predictions.csv"), "sensor", &rec.predictions)?;
        let n_w = rec.weights.first().map(|w| w.values().len()).unwrap_or(0);
        let weights = DMatrix::from_fn(rec.weights.len(), n_w, |i, j| rec.weights[i].values()[j]);
        persist::write_matrix(&dir.join("weights.csv"), "model", &weights)?;

        let a = self.problem.assess(rec, self.data, self.oracle_mean.as_ref())?;
        let diag_cfg = &self.cfg.diagnostics;
        let (parameter_intervals, histograms) = match &a.physical {
            Some(p) => (
                ensemble_percentiles(p)?,
                p.row_iter()
                    .map(|r| marginal_histogram(&r.iter().copied().collect::<Vec<_>>(), diag_cfg.histogram_bins))
                    .collect::<iesis_core::Result<Vec<_>>>()?,
            ),
            None => (Vec::new(), Vec::new()),
        };
        let mut rng = self.streams.get(Stream::Diagnostics, rec.iteration, 0);
        let intervals = prediction_intervals(&rec.predictions, self.data.sigma, diag_cfg.prediction_replicates, &mut rng)?;
        if let Some((raw, post)) = &a.fields {
            self.write_fields(&dir.join("field.csv"), raw, post)?;
        }
        if rec.iteration == 0 {
            self.write_state_std(rec)?;
        }
        let d = IterationDiagnostics {
            iteration: rec.iteration,
            lambda: rec.lambda,
            step_norm: rec.step_norm,
            ess: rec.weights.iter().map(|w| w.effective_sample_size()).collect(),
            hessian_repaired: rec.hessian_repaired.clone(),
            components: rec.mixture.as_ref().map(|m| m.k()),
            smoothing: rec.smoothing,
            retained_dimension: rec.retained.as_ref().map(|r| r.len()),
            estimate: a.estimate,
            theta_error: a.theta_error,
            endpoint_error: a.endpoint_error,
            midpoint_distance: a.midpoint_distance,
            field_error: a.field_error,
            field_error_raw: a.field_error_raw,
            oracle_mean_error: a.oracle_mean_error,
            parameter_intervals,
            prediction_intervals: intervals,
            histograms,
            map_points: rec.map_points.iter().map(|m| m.as_slice().to_vec()).collect(),
            mixture: rec.mixture.as_ref().map(MixtureRecord::from),
        };
        persist::write_json(&dir.join("diagnostics.json"), &d)?;
        let elapsed = self.clock.elapsed();
        self.clock = Instant::now();
        info!(
            "iteration {} recorded in {:.1}s (theta error {:?}, field error {:?})",
            rec.iteration,
            elapsed.as_secs_f64(),
            d.theta_error,
            d.field_error
        );
        self.timings.push(elapsed);
        self.diagnostics.push(d);
        Ok(())
    }

    fn write_fields(&self, path: &Path, raw: &[f64], post: &[f64]) -> Result<()> {
        let Problem::Channel { grid, .. } = self.problem else {
            unreachable!("fields exist only for the channel problem")
        };
        let truth = self.data.truth_field.as_deref();
        let rows = grid.centers().map(|(k, x, y)| {
            let mut r = vec![k.to_string(), fmt(x), fmt(y), fmt(raw[k]), fmt(post[k])];
            if let Some(t) = truth {
                r.push(fmt(t[k]));
            }
            r
        });
        let mut header: Vec<String> = ["cell", "x", "y", "raw_mean", "post_mean"].map(String::from).to_vec();
        if truth.is_some() {
            header.push("truth".into());
        }
        persist::write_rows(path, &header, rows)
    }

    fn write_state_std(&self, rec: &IterationRecord) -> Result<()> {
        let n = self.cfg.diagnostics.state_members.min(rec.ensemble.n_members());
        let Some(grid) = self.problem.state_grid() else {
            return Ok(());
        };
        let (xs, ys) = (grid.lattice_x(), grid.lattice_y());
        if n < 2 {
            return Ok(());
        }
        let basis = match self.problem {
            Problem::Channel { .. } => Some(self.problem.channel_basis(rec)?),
            _ => None,
        };
        let states = (0..n)
            .map(|j| self.problem.member_state(rec, basis.as_ref(), j))
            .collect::<Result<Vec<_>>>()?;
        let std = state_std_field(&states)?;
        let rows = xs
            .iter()
            .flat_map(|&x| ys.iter().map(move |&y| (x, y)))
            .zip(&std)
            .map(|((x, y), s)| vec![fmt(x), fmt(y), fmt(*s)]);
        let dir = persist::iteration_dir(&self.root, rec.iteration);
        persist::write_rows(&dir.join("state_std.csv"), &["x", "y", "std"].map(String::from), rows)
    }
}

fn inversion_settings(cfg: &ExperimentConfig) -> IesSettings {
    let i = &cfg.inversion;
    IesSettings {
        n_ensemble: i.n_ensemble,
        lambda0: i.lambda0,
        nu: i.nu,
        rho: i.rho,
        eps_stop: i.eps_stop,
        max_iter: i.max_iter,
    }
}

fn gmm_settings(cfg: &ExperimentConfig) -> Result<GmmSettings> {
    let g = cfg
        .gmm
        .as_ref()
        .ok_or_else(|| ExperimentError::config("mixture driver needs a [gmm] section"))?;
    Ok(GmmSettings {
        k_max: g.k_max,
        smem: SmemConfig {
            k_min: g.k_min,
            eps_screen: g.eps_screen,
            eta: None,
            max_inner: g.max_inner,
            prune_by_criterion: true,
        },
        fd_step: g.fd_step,
    })
}

/// Exact posterior mean of the linear problem under its standard-normal prior.
pub fn linear_posterior_mean(model: &LinearModel, data: &DVector<f64>) -> Result<DVector<f64>> {
    let n = model.g().ncols();
    let prior = GaussianMixture::gaussian(DVector::zeros(n), DMatrix::identity(n, n))?;
    Ok(linear_gmm_posterior(model, data, &prior)?.mean())
}

fn write_data(root: &Path, data: &SyntheticData, sensors: Option<&Sensors>) -> Result<()> {
    let rows = (0..data.data.len()).map(|i| {
        let (x, y) = match sensors {
            Some(s) => (fmt(s.points()[i][0]), fmt(s.points()[i][1])),
            None => (String::new(), String::new()),
        };
        vec![i.to_string(), x, y, fmt(data.noiseless[i]), fmt(data.data[i])]
    });
    persist::write_rows(
        &root.join("data.csv"),
        &["sensor", "x", "y", "noiseless", "data"].map(String::from),
        rows,
    )
}

/// Runs `cfg` and writes its artifacts under `cfg.output`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let clock = Instant::now();
    let root = cfg.output.clone();
    persist::create_dir(&root)?;
    persist::clear_previous(&root)?;
    persist::write_text(&root.join("config.toml"), &cfg.to_toml_string())?;

    let data = generate_synthetic_data(cfg)?;
    let obs = data.observation()?;
    let problem = Problem::build(cfg, &data)?;
    let sensor_list = cfg.observation.as_ref().map(sensors).transpose()?;
    write_data(&root, &data, sensor_list.as_ref())?;
    if let (Some(t), Problem::Channel { grid, .. }) = (&data.truth_field, &problem) {
        let rows = grid.centers().map(|(k, x, y)| vec![k.to_string(), fmt(x), fmt(y), fmt(t[k])]);
        persist::write_rows(&root.join("truth_field.csv"), &["cell", "x", "y", "truth"].map(String::from), rows)?;
    }
    let oracle_mean = match &problem {
        Problem::Linear(m) => Some(linear_posterior_mean(m, &data.data)?),
        _ => None,
    };

    let streams = Streams::new(cfg.seed);
    let settings = inversion_settings(cfg);
    let prior = PriorSpec::standard(problem.n_params())?;
    let mut recorder = Recorder {
        cfg,
        problem: &problem,
        data: &data,
        oracle_mean,
        root: root.clone(),
        streams,
        diagnostics: Vec::new(),
        timings: Vec::new(),
        clock,
    };
    let mut failure: Option<ExperimentError> = None;
    let mut observer = |rec: &IterationRecord| -> iesis_core::Result<()> {
        recorder.record(rec).map_err(|e| {
            let msg = e.to_string();
            failure = Some(e);
            iesis_core::Error::Solver(msg)
        })
    };
    let outcome = match &problem {
        Problem::Source(m) => run_gmm_ies_is(m, &prior, &obs, &settings, &gmm_settings(cfg)?, &streams, &mut observer),
        Problem::Fracture(m) => run_gmm_ies_is(m, &prior, &obs, &settings, &gmm_settings(cfg)?, &streams, &mut observer),
        Problem::Channel { model, setup, .. } => {
            run_dct_ies_is(model, setup, &prior, &obs, &settings, &streams, &mut observer)
        }
        Problem::Linear(m) => match cfg.linear.as_ref().expect("validated").driver {
            LinearDriver::Gaussian => run_gaussian_ies_is(m, &prior, &obs, &settings, &streams, &mut observer),
            LinearDriver::Mixture => {
                run_gmm_ies_is(m, &prior, &obs, &settings, &gmm_settings(cfg)?, &streams, &mut observer)
            }
        },
    };
    let result = match (outcome, failure) {
        (_, Some(e)) => return Err(e),
        (r, None) => r?,
    };
    if let Some(last) = result.iterations.last() {
        recorder.write_state_std(last)?;
    }

    let diagnostics = recorder.diagnostics;
    let summary = RunSummary {
        experiment: cfg.experiment,
        seed: cfg.seed,
        converged: result.converged,
        iterations: result.iterations.len(),
        truth: data.truth.clone(),
        final_estimate: diagnostics.last().and_then(|d| d.estimate.clone()),
        series: diagnostics.iter().map(SeriesEntry::from).collect(),
    };
    persist::write_json(&root.join("summary.json"), &summary)?;
    let mut timings = recorder.timings;
    if let Some(t) = timings.last_mut() {
        *t += recorder.clock.elapsed();
    }
    Ok(RunOutcome {
        summary,
        diagnostics,
        result,
        data,
        output: root,
        timings,
    })
}

/// Exact posterior of a linear configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub truth: Vec<f64>,
    pub data: Vec<f64>,
    pub posterior_mean: Vec<f64>,
    pub posterior_variance: Vec<f64>,
}

pub fn oracle_report(cfg: &ExperimentConfig) -> Result<OracleReport> {
    if cfg.experiment != ExperimentKind::CustomLinear {
        return Err(ExperimentError::config(format!(
            "the oracle needs a custom_linear experiment, got {}",
            cfg.experiment.name()
        )));
    }
    let data = generate_synthetic_data(cfg)?;
    let model = data.linear.as_ref().expect("linear data carry G");
    let n = model.g().ncols();
    let prior = GaussianMixture::gaussian(DVector::zeros(n), DMatrix::identity(n, n))?;
    let post = linear_gmm_posterior(model, &data.data, &prior)?;
    Ok(OracleReport {
        truth: data.truth.clone().unwrap_or_default(),
        data: data.data.as_slice().to_vec(),
        posterior_mean: post.mean().as_slice().to_vec(),
        posterior_variance: post.covariance().diagonal().as_slice().to_vec(),
    })
}
