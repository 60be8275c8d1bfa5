//! Run configuration: flat `key = value` files with `#` comments.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use super::problems::Problem;
use crate::error::{Error, Result};
use crate::loss::PenaltyParams;
use crate::network::{Activation, ArchKind, Architecture};
use crate::optim::{AdamConfig, LrDecay};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    DeepRitz,
    StrongForm,
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "deepritz" => Ok(LossKind::DeepRitz),
            "strongform" => Ok(LossKind::StrongForm),
            _ => Err(Error::Config(format!("unknown loss `{s}`"))),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::DeepRitz => "DeepRitz",
            LossKind::StrongForm => "StrongForm",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub problem: Problem,
    pub arch: Architecture,
    pub penalty: PenaltyParams,
    pub n_in: usize,
    pub n_bnd: usize,
    pub seed: u64,
    pub epochs_max: usize,
    pub estimate_every: usize,
    pub adjoint_level: usize,
    pub stop_tol: Option<f64>,
    pub loss_kind: LossKind,
    pub adam: AdamConfig,
    /// Draw a fresh node set every this many epochs; fixed nodes when `None`.
    pub resample_every: Option<usize>,
    /// Average the point functional over a disc of this radius.
    pub mollifier_radius: Option<f64>,
    /// Reference value; computed from the problem when absent.
    pub j_ref: Option<f64>,
    pub output_dir: PathBuf,
}

const KEYS: &[&str] = &[
    "problem",
    "arch",
    "width",
    "depth",
    "activation",
    "lambda",
    "alpha",
    "n_in",
    "n_bnd",
    "seed",
    "epochs",
    "estimate_every",
    "adjoint_level",
    "stop_tol",
    "loss",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "lr_decay_gamma",
    "lr_decay_every",
    "resample_every",
    "mollifier_radius",
    "j_ref",
    "output_dir",
];

impl RunConfig {
    /// Defaults for `problem`.
    pub fn new(problem: Problem) -> Self {
        RunConfig {
            problem,
            arch: problem.default_arch(),
            penalty: problem.default_penalty(),
            n_in: 4096,
            n_bnd: 1024,
            seed: 0,
            epochs_max: problem.default_epochs(),
            estimate_every: 100,
            adjoint_level: problem.default_adjoint_level(),
            stop_tol: None,
            loss_kind: LossKind::DeepRitz,
            adam: AdamConfig::default(),
            resample_every: None,
            mollifier_radius: None,
            j_ref: None,
            output_dir: PathBuf::from("out"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if self.arch.input_dim != 2 || self.arch.output_dim != self.problem.components() {
            return Err(Error::Config(format!(
                "{} needs a network R² → R^{}",
                self.problem,
                self.problem.components()
            )));
        }
        if self.estimate_every == 0 || self.epochs_max == 0 {
            return Err(Error::Config("epochs and estimate_every must be at least 1".into()));
        }
        if self.n_in == 0 || self.n_bnd == 0 {
            return Err(Error::Config("n_in and n_bnd must be at least 1".into()));
        }
        if self.loss_kind == LossKind::StrongForm && self.problem.is_stokes() {
            return Err(Error::Config("the strong-form loss is only available for Laplace problems".into()));
        }
        if self.penalty.lambda <= 0.0 || (self.problem.is_stokes() && self.penalty.alpha <= 0.0) {
            return Err(Error::Config("penalties must be positive".into()));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::Config("lr must be positive".into()));
        }
        if self.resample_every == Some(0) {
            return Err(Error::Config("resample_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Parses a config file. `problem` may appear anywhere; all other keys
    /// override that problem's defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: i + 1, msg: format!("expected `key = value`, got `{line}`") })?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(Error::Parse { line: i + 1, msg: format!("unknown key `{k}`") });
            }
            if pairs.iter().any(|(_, key, _): &(usize, &str, &str)| *key == k) {
                return Err(Error::Parse { line: i + 1, msg: format!("duplicate key `{k}`") });
            }
            pairs.push((i + 1, k, v));
        }
        let problem = match pairs.iter().find(|p| p.1 == "problem") {
            Some(&(line, _, v)) => v.parse().map_err(|e: Error| Error::Parse { line, msg: e.to_string() })?,
            None => return Err(Error::Config("missing key `problem`".into())),
        };
        let mut cfg = RunConfig::new(problem);
        let mut decay = (None, None);
        for (line, k, v) in pairs {
            cfg.set(k, v, &mut decay).map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        }
        cfg.adam.decay = match decay {
            (None, None) => None,
            (Some(gamma), Some(every)) => Some(LrDecay { gamma, every }),
            _ => return Err(Error::Config("lr_decay_gamma and lr_decay_every must be given together".into())),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str, decay: &mut (Option<f64>, Option<usize>)) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`")))
        }
        let opt_f = |v: &str| -> Result<Option<f64>> {
            if v.eq_ignore_ascii_case("none") {
                Ok(None)
            } else {
                num(key, v).map(Some)
            }
        };
        match key {
            "problem" => {}
            "arch" => self.arch.kind = v.parse::<ArchKind>()?,
            "width" => self.arch.width = num(key, v)?,
            "depth" => self.arch.depth = num(key, v)?,
            "activation" => self.arch.activation = v.parse::<Activation>()?,
            "lambda" => self.penalty.lambda = num(key, v)?,
            "alpha" => self.penalty.alpha = num(key, v)?,
            "n_in" => self.n_in = num(key, v)?,
            "n_bnd" => self.n_bnd = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "epochs" => self.epochs_max = num(key, v)?,
            "estimate_every" => self.estimate_every = num(key, v)?,
            "adjoint_level" => self.adjoint_level = num(key, v)?,
            "stop_tol" => self.stop_tol = opt_f(v)?,
            "loss" => self.loss_kind = v.parse()?,
            "lr" => self.adam.lr = num(key, v)?,
            "beta1" => self.adam.beta1 = num(key, v)?,
            "beta2" => self.adam.beta2 = num(key, v)?,
            "eps" => self.adam.eps = num(key, v)?,
            "lr_decay_gamma" => decay.0 = Some(num(key, v)?),
            "lr_decay_every" => decay.1 = Some(num(key, v)?),
            "resample_every" => {
                self.resample_every = if v.eq_ignore_ascii_case("none") { None } else { Some(num(key, v)?) }
            }
            "mollifier_radius" => self.mollifier_radius = opt_f(v)?,
            "j_ref" => self.j_ref = opt_f(v)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            _ => unreachable!("key list and setter disagree on `{key}`"),
        }
        Ok(())
    }

    /// Every key with its resolved value, in a form [`parse`](Self::parse) accepts.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |v| format!("{v:?}"));
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("problem", self.problem.to_string());
        kv("arch", self.arch.kind.to_string());
        kv("width", self.arch.width.to_string());
        kv("depth", self.arch.depth.to_string());
        kv("activation", self.arch.activation.to_string());
        kv("lambda", format!("{:?}", self.penalty.lambda));
        kv("alpha", format!("{:?}", self.penalty.alpha));
        kv("n_in", self.n_in.to_string());
        kv("n_bnd", self.n_bnd.to_string());
        kv("seed", self.seed.to_string());
        kv("epochs", self.epochs_max.to_string());
        kv("estimate_every", self.estimate_every.to_string());
        kv("adjoint_level", self.adjoint_level.to_string());
        kv("stop_tol", opt(self.stop_tol));
        kv("loss", self.loss_kind.to_string());
        kv("lr", format!("{:?}", self.adam.lr));
        kv("beta1", format!("{:?}", self.adam.beta1));
        kv("beta2", format!("{:?}", self.adam.beta2));
        kv("eps", format!("{:?}", self.adam.eps));
        if let Some(d) = self.adam.decay {
            kv("lr_decay_gamma", format!("{:?}", d.gamma));
            kv("lr_decay_every", d.every.to_string());
        }
        kv("resample_every", self.resample_every.map_or_else(|| "none".into(), |k| k.to_string()));
        kv("mollifier_radius", opt(self.mollifier_radius));
        kv("j_ref", opt(self.j_ref));
        kv("output_dir", self.output_dir.display().to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_problem() {
        let cfg = RunConfig::parse("problem = LaplaceLShape\n").unwrap();
        assert_eq!(cfg.arch.param_count(), 921);
        assert_eq!(cfg.penalty.lambda, 500.0);
        assert_eq!((cfg.n_in, cfg.n_bnd, cfg.estimate_every, cfg.adjoint_level), (4096, 1024, 100, 2));
        let cfg = RunConfig::parse("# comment\nepochs = 7 # trailing\nproblem = StokesDisc").unwrap();
        assert_eq!((cfg.epochs_max, cfg.adjoint_level, cfg.penalty.alpha), (7, 3, 100.0));
    }

    #[test]
    fn unknown_and_malformed_keys() {
        assert!(matches!(RunConfig::parse("problem = LaplaceLShape\nfoo = 1"), Err(Error::Parse { line: 2, .. })));
        assert!(RunConfig::parse("problem = LaplaceLShape\nlr").is_err());
        assert!(RunConfig::parse("lr = 1").is_err());
        assert!(RunConfig::parse("problem = LaplaceLShape\nestimate_every = 0").is_err());
        assert!(RunConfig::parse("problem = LaplaceLShape\nlr_decay_gamma = 0.5").is_err());
        assert!(RunConfig::parse("problem = StokesDisc\nloss = StrongForm").is_err());
        assert!(RunConfig::parse("problem = LaplaceLShape\nseed = 1\nseed = 2").is_err());
    }

    #[test]
    fn text_roundtrip() {
        let mut cfg = RunConfig::new(Problem::StokesDisc);
        cfg.stop_tol = Some(0.02);
        cfg.adam.decay = Some(LrDecay { gamma: 0.5, every: 1000 });
        cfg.resample_every = Some(10);
        cfg.j_ref = Some(-0.3);
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }
}
