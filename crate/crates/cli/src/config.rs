//! JSON run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use paradjoint::{
    Algorithm, Dynamics, Grid2D, IterationConfig, LejaConfig, LoopConfig, Problem, ProblemKind, ProblemSpec, RkConfig,
    Storage,
};
use serde::{Deserialize, Deserializer, Serialize};

use crate::CliError;

/// Spatial shape of a forcing field, repeated on every state field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldShape {
    Zero,
    Ones,
    /// `sin(x) sin(y)`
    SinSin,
    /// Explicit values, one per state component.
    Values(Vec<f64>),
}

impl FieldShape {
    pub fn sample(&self, problem: &Problem) -> Vec<f64> {
        match self {
            FieldShape::Zero => vec![0.0; problem.dim()],
            FieldShape::Ones => vec![1.0; problem.dim()],
            FieldShape::SinSin => problem.sample_field(|x, y| x.sin() * y.sin()),
            FieldShape::Values(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    #[serde(default = "default_grid")]
    pub nx: usize,
    #[serde(default = "default_grid")]
    pub ny: usize,
    #[serde(default = "unit")]
    pub advection: f64,
    pub diffusion: f64,
    #[serde(default = "unit")]
    pub omega: f64,
    pub final_time: f64,
    /// Initial guess of the control.
    #[serde(default = "ones")]
    pub forcing: FieldShape,
    /// Forcing that generates the tracked trajectory.
    #[serde(default = "sin_sin")]
    pub truth_forcing: FieldShape,
}

fn default_grid() -> usize {
    32
}

fn unit() -> f64 {
    1.0
}

fn ones() -> FieldShape {
    FieldShape::Ones
}

fn sin_sin() -> FieldShape {
    FieldShape::SinSin
}

/// Either a fixed adjoint to direct cost ratio or `"auto"` for a pilot
/// estimate before the first loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HybridK {
    Fixed(f64),
    Auto(AutoTag),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoTag {
    Auto,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescentConfig {
    pub steps: usize,
    pub learning_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub algorithm: Algorithm,
    #[serde(default = "default_workers", deserialize_with = "one_or_many")]
    pub workers: Vec<usize>,
    #[serde(default)]
    pub checkpoints: usize,
    #[serde(default)]
    pub storage: Storage,
    #[serde(default = "loose")]
    pub rtol: f64,
    #[serde(default = "loose")]
    pub leja_tol: f64,
    /// Tolerance of the serial reference used for the truth and by
    /// `verify-gradient`.
    #[serde(default = "tight")]
    pub reference_rtol: f64,
    #[serde(default = "loose")]
    pub eps: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_k")]
    pub hybrid_k: HybridK,
    /// Fraction of the horizon covered by each timing pilot.
    #[serde(default = "default_pilot")]
    pub pilot_fraction: f64,
    #[serde(default = "default_probe")]
    pub probe_nodes: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub descent: Option<DescentConfig>,
}

fn default_workers() -> Vec<usize> {
    vec![1, 2, 4, 8, 16]
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<usize>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Workers {
        One(usize),
        Many(Vec<usize>),
    }
    Ok(match Workers::deserialize(d)? {
        Workers::One(n) => vec![n],
        Workers::Many(v) => v,
    })
}

fn loose() -> f64 {
    1e-3
}

fn tight() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    IterationConfig::default().max_iter
}

fn default_k() -> HybridK {
    HybridK::Fixed(LoopConfig::default().hybrid_k)
}

fn default_pilot() -> f64 {
    0.1
}

fn default_probe() -> usize {
    200
}

fn default_repeats() -> usize {
    3
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

/// Command-line overrides applied on top of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
    pub repeats: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut de = serde_json::Deserializer::from_str(&text);
        let mut cfg: RunConfig = serde_path_to_error::deserialize(&mut de)
            .map_err(|e| CliError::Config(format!("{}: field `{}`: {}", path.display(), e.path(), e.inner())))?;
        if let Some(n) = overrides.workers {
            cfg.workers = vec![n];
        }
        if let Some(out) = &overrides.output {
            cfg.output = out.clone();
        }
        if let Some(r) = overrides.repeats {
            cfg.repeats = r;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.workers.is_empty() || self.workers.contains(&0) {
            return bad(format!("workers must be positive, got {:?}", self.workers));
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1".into());
        }
        if !(self.pilot_fraction > 0.0 && self.pilot_fraction <= 0.1) {
            return bad(format!("pilot_fraction must lie in (0, 0.1], got {}", self.pilot_fraction));
        }
        if !(self.reference_rtol > 0.0) {
            return bad(format!("reference_rtol must be positive, got {}", self.reference_rtol));
        }
        if self.algorithm == Algorithm::Linear && self.problem.kind == ProblemKind::Burgers {
            return bad("the linear algorithm needs a linear problem; use nonlinear or hybrid for burgers".into());
        }
        if let HybridK::Fixed(k) = self.hybrid_k {
            if !(k > 0.0 && k.is_finite()) {
                return bad(format!("hybrid_k must be positive, got {k}"));
            }
        }
        if let Some(d) = &self.descent {
            if !(d.learning_rate > 0.0) {
                return bad(format!("descent learning_rate must be positive, got {}", d.learning_rate));
            }
        }
        let problem = self.problem().map_err(|e| CliError::Config(e.to_string()))?;
        for shape in [&self.problem.forcing, &self.problem.truth_forcing] {
            if let FieldShape::Values(v) = shape {
                if v.len() != problem.dim() {
                    return bad(format!("forcing values need {} entries, got {}", problem.dim(), v.len()));
                }
            }
        }
        for &n in &self.workers {
            self.loop_config(n, 1.0)
                .validate()
                .map_err(|e| CliError::Config(format!("{} workers: {e}", n)))?;
        }
        Ok(())
    }

    /// The testbed with zero forcing; shapes are applied by the commands.
    pub fn problem(&self) -> paradjoint::Result<Problem> {
        let p = &self.problem;
        let grid = Grid2D::new(p.nx, p.ny)?;
        let spec = ProblemSpec {
            kind: p.kind,
            advection: p.advection,
            diffusion: p.diffusion,
            omega: p.omega,
            final_time: p.final_time,
            f_spatial: vec![0.0; p.kind.fields() * grid.points()],
        };
        Problem::new(grid, spec)
    }

    pub fn loop_config(&self, workers: usize, hybrid_k: f64) -> LoopConfig {
        LoopConfig {
            algorithm: self.algorithm,
            workers,
            rk: RkConfig::with_rtol(self.rtol),
            leja: LejaConfig::with_tol(self.leja_tol),
            iteration: IterationConfig {
                eps: self.eps,
                max_iter: self.max_iter,
                ..IterationConfig::default()
            },
            hybrid_k,
            checkpoints: self.checkpoints,
            storage: self.storage,
            probe_nodes: self.probe_nodes,
        }
    }

    /// Serial loop at `rtol`, same checkpoints and quadrature.
    pub fn serial_config(&self, rtol: f64) -> LoopConfig {
        LoopConfig {
            algorithm: Algorithm::Serial,
            workers: 1,
            rk: RkConfig::with_rtol(rtol),
            leja: LejaConfig::with_tol(rtol),
            ..self.loop_config(1, 1.0)
        }
    }
}
