//! Training loop with periodic certification and estimator-based stopping.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use super::config::{LossKind, RunConfig};
use super::studies::reference_value;
use crate::dwr::{estimate_laplace, estimate_stokes, EstimatorReport};
use crate::error::{Error, Result};
use crate::fem::{
    build_mesh, eval_functional, solve_adjoint_laplace, solve_stokes_stabilized, FeFunction, GoalFunctional, Mesh,
    StokesRhs,
};
use crate::field::Field;
use crate::loss::{EnergyObjective, SharedField, StrongResidualObjective};
use crate::network::{objective_value, param_gradient, Network};
use crate::optim::AdamState;
use crate::sampling::{sample, SampleSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    EstimatorBelowTol,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::MaxEpochs => "MaxEpochs",
            StopReason::EstimatorBelowTol => "EstimatorBelowTol",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub report: EstimatorReport,
    pub wall_ms: u128,
}

#[derive(Clone, Debug)]
pub struct TrainingLog {
    pub config: RunConfig,
    pub rows: Vec<LogRow>,
    pub stop_reason: StopReason,
    /// Adam steps taken.
    pub epochs_run: usize,
    /// Certification of the returned network.
    pub final_report: EstimatorReport,
    pub network: Network,
    pub adjoint_solves: usize,
}

enum Adjoint {
    Laplace(FeFunction),
    Stokes { z: FeFunction, q: FeFunction },
}

/// Adjoint solution and reference value for one configuration; computes
/// the estimator for any candidate solution.
pub struct Certifier {
    goal: GoalFunctional,
    adjoint: Adjoint,
    mesh: Arc<Mesh>,
    f: SharedField,
    j_ref: Option<f64>,
    level: usize,
}

impl Certifier {
    /// Solves the adjoint problem once. The reference value comes from
    /// `cfg.j_ref` or, when absent, from [`reference_value`].
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let problem = cfg.problem;
        let mesh = Arc::new(build_mesh(problem.domain(), cfg.adjoint_level));
        let goal = problem.goal(cfg.mollifier_radius);
        let adjoint = if problem.is_stokes() {
            let s = solve_stokes_stabilized(&mesh, StokesRhs::Goal(&goal), true)?;
            Adjoint::Stokes { z: s.velocity, q: s.pressure }
        } else {
            Adjoint::Laplace(solve_adjoint_laplace(&mesh, &goal)?)
        };
        let j_ref = match cfg.j_ref {
            Some(v) => Some(v),
            None => Some(reference_value(problem)?),
        };
        Ok(Certifier { goal, adjoint, mesh, f: problem.forcing(), j_ref, level: cfg.adjoint_level })
    }

    pub fn j_ref(&self) -> Option<f64> {
        self.j_ref
    }

    pub fn adjoint_mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    /// The scalar adjoint `z_H` (Laplace problems only).
    pub fn laplace_adjoint(&self) -> Option<&FeFunction> {
        match &self.adjoint {
            Adjoint::Laplace(z) => Some(z),
            Adjoint::Stokes { .. } => None,
        }
    }

    pub fn eta(&self, u: &dyn Field) -> Result<f64> {
        match &self.adjoint {
            Adjoint::Laplace(z) => estimate_laplace(u, z, self.f.as_ref()),
            Adjoint::Stokes { z, q } => estimate_stokes(u, z, q, self.f.as_ref()),
        }
    }

    pub fn j(&self, u: &dyn Field) -> Result<f64> {
        eval_functional(&self.goal, u, &self.mesh)
    }

    pub fn report(&self, epoch: usize, loss: f64, u: &dyn Field) -> Result<EstimatorReport> {
        Ok(EstimatorReport::new(epoch, loss, self.eta(u)?, self.j(u)?, self.j_ref, self.level))
    }
}

/// The training loss on one node set.
pub enum TrainingObjective {
    Energy(EnergyObjective),
    Strong(StrongResidualObjective),
}

impl TrainingObjective {
    pub fn new(cfg: &RunConfig, s: &SampleSet) -> Result<Self> {
        let data = cfg.problem.data();
        Ok(match cfg.loss_kind {
            LossKind::DeepRitz if cfg.problem.is_stokes() => {
                TrainingObjective::Energy(EnergyObjective::stokes(s, &data, cfg.penalty)?)
            }
            LossKind::DeepRitz => TrainingObjective::Energy(EnergyObjective::laplace(s, &data, cfg.penalty)?),
            LossKind::StrongForm => TrainingObjective::Strong(StrongResidualObjective::new(s, &data, cfg.penalty)?),
        })
    }

    pub fn loss_and_gradient(&self, net: &Network) -> Result<(f64, Vec<f64>)> {
        match self {
            TrainingObjective::Energy(o) => o.loss_and_gradient(net),
            TrainingObjective::Strong(o) => Ok((objective_value(net, o), param_gradient(net, o))),
        }
    }

    pub fn loss(&self, net: &Network) -> Result<f64> {
        match self {
            TrainingObjective::Energy(o) => o.value_of_field(net),
            TrainingObjective::Strong(o) => o.value_of_field(net),
        }
    }
}

/// Seed of the node set drawn at `epoch` when resampling.
fn sample_seed(seed: u64, epoch: usize) -> u64 {
    if epoch == 0 {
        seed
    } else {
        seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }
}

pub fn train(cfg: &RunConfig) -> Result<TrainingLog> {
    train_with(cfg, |_| {})
}

/// Runs the training loop, calling `on_checkpoint` after every estimate.
///
/// Checkpoints are taken before the Adam step of every epoch divisible by
/// `estimate_every`, so a run of `epochs_max` epochs logs
/// `ceil(epochs_max / estimate_every)` rows.
pub fn train_with(cfg: &RunConfig, mut on_checkpoint: impl FnMut(&LogRow)) -> Result<TrainingLog> {
    cfg.validate()?;
    let start = Instant::now();
    let certifier = Certifier::new(cfg)?;
    let mut net = Network::init(cfg.arch, cfg.seed)?;
    let mut samples = sample(cfg.problem.domain(), cfg.n_in, cfg.n_bnd, cfg.seed)?;
    let mut objective = TrainingObjective::new(cfg, &samples)?;
    let mut adam = AdamState::new(net.params().len(), cfg.adam);
    let mut rows = Vec::new();
    let mut stop = None;
    let mut epoch = 0;
    while epoch < cfg.epochs_max {
        if let Some(k) = cfg.resample_every {
            if epoch > 0 && epoch % k == 0 {
                samples = sample(cfg.problem.domain(), cfg.n_in, cfg.n_bnd, sample_seed(cfg.seed, epoch))?;
                objective = TrainingObjective::new(cfg, &samples)?;
            }
        }
        let (loss, grad) = objective.loss_and_gradient(&net)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss(epoch));
        }
        if epoch % cfg.estimate_every == 0 {
            let row = LogRow { report: certifier.report(epoch, loss, &net)?, wall_ms: start.elapsed().as_millis() };
            on_checkpoint(&row);
            let below = cfg.stop_tol.is_some_and(|tol| row.report.eta.abs() < tol);
            rows.push(row);
            if below {
                stop = Some(StopReason::EstimatorBelowTol);
                break;
            }
        }
        adam.step(net.params_mut(), &grad)?;
        epoch += 1;
    }
    let final_report = match stop {
        Some(_) => rows.last().expect("stopping happens at a checkpoint").report.clone(),
        None => {
            let loss = objective.loss(&net)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss(epoch));
            }
            certifier.report(epoch, loss, &net)?
        }
    };
    Ok(TrainingLog {
        config: cfg.clone(),
        rows,
        stop_reason: stop.unwrap_or(StopReason::MaxEpochs),
        epochs_run: epoch,
        final_report,
        network: net,
        adjoint_solves: 1,
    })
}

/// Certifies a saved network against `cfg`; the loss is evaluated on the
/// configuration's initial node set.
pub fn estimate_checkpoint(net: &Network, cfg: &RunConfig, epoch: usize) -> Result<EstimatorReport> {
    cfg.validate()?;
    if net.arch() != &cfg.arch {
        return Err(Error::Config(format!("checkpoint is {}, configuration expects {}", net.arch(), cfg.arch)));
    }
    let certifier = Certifier::new(cfg)?;
    let samples = sample(cfg.problem.domain(), cfg.n_in, cfg.n_bnd, cfg.seed)?;
    let loss = TrainingObjective::new(cfg, &samples)?.loss(net)?;
    certifier.report(epoch, loss, net)
}

pub const LOG_FILE: &str = "log.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.dat";
pub const SUMMARY_FILE: &str = "summary.txt";

impl TrainingLog {
    /// `log.csv`: the configuration as `#` comment lines, then one row per
    /// checkpoint with a trailing wall-time column.
    pub fn write_log<W: Write>(&self, mut w: W) -> Result<()> {
        for line in self.config.to_text().lines() {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "{},wall_ms", EstimatorReport::CSV_HEADER)?;
        for row in &self.rows {
            writeln!(w, "{},{}", row.report.csv_row(), row.wall_ms)?;
        }
        Ok(())
    }

    pub fn write_summary<W: Write>(&self, mut w: W) -> Result<()> {
        let r = &self.final_report;
        let opt = |v: Option<f64>| v.map_or_else(|| crate::dwr::UNDEFINED.to_string(), |v| format!("{v:?}"));
        writeln!(w, "problem = {}", self.config.problem)?;
        writeln!(w, "architecture = {}", self.network.arch())?;
        writeln!(w, "parameters = {}", self.network.params().len())?;
        writeln!(w, "stop_reason = {}", self.stop_reason)?;
        writeln!(w, "epochs_run = {}", self.epochs_run)?;
        writeln!(w, "checkpoints = {}", self.rows.len())?;
        writeln!(w, "adjoint_solves = {}", self.adjoint_solves)?;
        writeln!(w, "loss = {:?}", r.loss)?;
        writeln!(w, "J_net = {:?}", r.j_net)?;
        writeln!(w, "J_ref = {}", opt(r.j_ref))?;
        writeln!(w, "true_error = {}", opt(r.true_error))?;
        writeln!(w, "eta = {:?}", r.eta)?;
        writeln!(w, "eff_eq = {}", opt(r.eff_eq))?;
        writeln!(w, "eff_table = {}", opt(r.eff_table))?;
        Ok(())
    }

    /// Writes `log.csv`, `checkpoint.dat` and `summary.txt` into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut log = BufWriter::new(fs::File::create(dir.join(LOG_FILE))?);
        self.write_log(&mut log)?;
        log.flush()?;
        let mut ck = BufWriter::new(fs::File::create(dir.join(CHECKPOINT_FILE))?);
        self.network.write_checkpoint(&mut ck)?;
        ck.flush()?;
        let mut summary = BufWriter::new(fs::File::create(dir.join(SUMMARY_FILE))?);
        self.write_summary(&mut summary)?;
        summary.flush()?;
        Ok(())
    }
}

/// Reads `key = value` pairs from a summary file.
pub fn read_summary(text: &str) -> Vec<(String, String)> {
    text.lines().filter_map(|l| l.split_once('=').map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))).collect()
}
