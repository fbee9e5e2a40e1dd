//! Declarative experiment configuration: a TOML key/value tree that
//! round-trips losslessly and is fully validated (file references, grid
//! divisibility, cross-module width algebra, schedule invariants) before
//! any work starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autoencoder::{AeSpec, AutoencoderModel};
use crate::decomp::{NeighborPolicy, NormStats};
use crate::error::{Error, Result};
use crate::field::GridSpec;
use crate::integrator::{CurriculumSchedule, LossSpace, RosterField, TiSpec, TimeIntegratorModel};
use crate::nn::Activation;

fn default_one() -> usize {
    1
}
fn default_lr() -> f64 {
    1e-3
}
fn default_val_fraction() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Output directory; the CLI `--out` flag overrides it.
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub dataset: DatasetConfig,
    pub ae: AeConfig,
    pub ti: TiConfig,
    #[serde(default)]
    pub rollout: RolloutConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// diffusion-reaction | swe | heat-laser | constant
    pub kind: String,
    /// Read samples from this directory instead of generating.
    #[serde(default)]
    pub path: Option<PathBuf>,
    pub extents: Vec<usize>,
    pub lengths: Vec<f64>,
    pub dt: f64,
    /// Stored frames per sample.
    pub steps: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    #[serde(default = "default_one")]
    pub store_every: usize,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default)]
    pub diffusion: DiffusionConfig,
    #[serde(default)]
    pub swe: SweConfig,
    #[serde(default)]
    pub heat: HeatConfig,
    #[serde(default)]
    pub constant: ConstantConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionConfig {
    pub du: f64,
    pub dv: f64,
    pub k: f64,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        let p = crate::datagen::DiffusionReactionParams::default();
        DiffusionConfig {
            du: p.du,
            dv: p.dv,
            k: p.k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweConfig {
    pub gravity: f64,
    /// Fixed dam radius; absent draws from U(0.3, 0.7).
    #[serde(default)]
    pub r_c: Option<f64>,
}

impl Default for SweConfig {
    fn default() -> Self {
        SweConfig {
            gravity: 1.0,
            r_c: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatConfig {
    pub q0: f64,
    pub sigma: f64,
    pub conductivity: f64,
    pub density: f64,
    pub heat_capacity: f64,
    #[serde(default)]
    pub initial_temp: f64,
    /// Serpentine raster passes per sample.
    pub raster_lines: usize,
}

impl Default for HeatConfig {
    fn default() -> Self {
        HeatConfig {
            q0: 50.0,
            sigma: 0.08,
            conductivity: 1.0,
            density: 1.0,
            heat_capacity: 1.0,
            initial_temp: 0.0,
            raster_lines: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantConfig {
    pub modes: usize,
    pub amplitude: f64,
    pub offset: f64,
}

impl Default for ConstantConfig {
    fn default() -> Self {
        let p = crate::datagen::ConstantParams::default();
        ConstantConfig {
            modes: p.modes,
            amplitude: p.amplitude,
            offset: p.offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AeConfig {
    pub patch: usize,
    pub latent: usize,
    pub widths: Vec<usize>,
    pub activation: String,
    pub epochs: usize,
    pub batch: usize,
    #[serde(default)]
    pub steps_per_epoch: Option<usize>,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
}

impl Default for AeConfig {
    fn default() -> Self {
        AeConfig {
            patch: 8,
            latent: 16,
            widths: vec![16, 32],
            activation: "tanh".into(),
            epochs: 20,
            batch: 64,
            steps_per_epoch: None,
            lr: default_lr(),
            val_fraction: default_val_fraction(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TiConfig {
    pub history: usize,
    pub gamma: usize,
    /// Timesteps accumulated per weight update.
    pub unroll: usize,
    pub spatial_hidden: Vec<usize>,
    pub temporal_hidden: Vec<usize>,
    pub activation: String,
    /// Per-axis missing-neighbor policy: zero | replicate | periodic.
    pub neighbor_policy: Vec<String>,
    pub epochs: usize,
    #[serde(default)]
    pub windows_per_epoch: Option<usize>,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    /// Restrict training windows to timesteps [a, b).
    #[serde(default)]
    pub train_window: Option<[usize; 2]>,
    #[serde(default = "default_loss_space")]
    pub loss_space: String,
    pub schedule: ScheduleConfig,
}

fn default_loss_space() -> String {
    "latent".into()
}

impl Default for TiConfig {
    fn default() -> Self {
        TiConfig {
            history: 10,
            gamma: 64,
            unroll: 10,
            spatial_hidden: vec![128, 128],
            temporal_hidden: vec![128, 128],
            activation: "relu".into(),
            neighbor_policy: vec!["zero".into(), "zero".into()],
            epochs: 20,
            windows_per_epoch: None,
            lr: default_lr(),
            val_fraction: default_val_fraction(),
            train_window: None,
            loss_space: default_loss_space(),
            schedule: ScheduleConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub warmup: usize,
    /// Epoch at which the teacher-forcing probability reaches eps_min;
    /// defaults to the training epoch count.
    #[serde(default)]
    pub total: Option<usize>,
    pub eps_min: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            warmup: 5,
            total: None,
            eps_min: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RolloutConfig {
    /// Predicted steps; defaults to steps - history.
    #[serde(default)]
    pub horizon: Option<usize>,
    /// Per-axis directive: free | periodic | dirichlet:<value>.
    #[serde(default)]
    pub boundary: Vec<String>,
    /// Decode every step ("all") or a comma-separated list of timesteps.
    #[serde(default)]
    pub decode: Option<String>,
    #[serde(default)]
    pub dump_pgm: bool,
    #[serde(default)]
    pub dump_z: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Melting threshold; enables the melt-pool depth report on 3-D data.
    #[serde(default)]
    pub melt_temp: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// latent | history | train-window
    pub axis: String,
    pub values: Vec<SweepValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SweepValue {
    Size(usize),
    Window([usize; 2]),
}

impl std::fmt::Display for SweepValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepValue::Size(v) => write!(f, "{v}"),
            SweepValue::Window([a, b]) => write!(f, "{a}-{b}"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("config parse error: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid(format!("cannot read config `{}`: {e}", path.display())))?;
        let cfg = Self::from_toml(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Field rosters implied by the dataset kind: (solution, condition).
    pub fn rosters(&self) -> Result<(Vec<RosterField>, Vec<RosterField>)> {
        let l = self.ae.latent;
        match self.dataset.kind.as_str() {
            "diffusion-reaction" => Ok((
                vec![RosterField::new("u", l), RosterField::new("v", l)],
                vec![],
            )),
            "swe" => Ok((vec![RosterField::new("h", l)], vec![])),
            "heat-laser" => Ok((
                vec![RosterField::new("T", l)],
                vec![RosterField::new("Q", l)],
            )),
            "constant" => Ok((vec![RosterField::new("phi", l)], vec![])),
            other => Err(Error::invalid(format!("unknown dataset kind `{other}`"))),
        }
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(
            self.dataset.extents.clone(),
            self.dataset.lengths.clone(),
            self.dataset.dt,
            self.dataset.steps,
        )
    }

    pub fn ae_spec(&self, field: &str) -> Result<AeSpec> {
        Ok(AeSpec {
            field: field.to_string(),
            dims: self.dataset.extents.len(),
            patch: self.ae.patch,
            latent: self.ae.latent,
            widths: self.ae.widths.clone(),
            activation: Activation::parse(&self.ae.activation)?,
        })
    }

    pub fn ti_spec(&self) -> Result<TiSpec> {
        let (solution, condition) = self.rosters()?;
        let policy = NeighborPolicy::decode(&self.ti.neighbor_policy.join(","))?;
        Ok(TiSpec {
            dims: self.dataset.extents.len(),
            history: self.ti.history,
            gamma_width: self.ti.gamma,
            unroll: self.ti.unroll,
            policy,
            solution,
            condition,
            activation: Activation::parse(&self.ti.activation)?,
            spatial_hidden: self.ti.spatial_hidden.clone(),
            temporal_hidden: self.ti.temporal_hidden.clone(),
            schedule: CurriculumSchedule {
                warmup: self.ti.schedule.warmup,
                total: self.ti.schedule.total.unwrap_or(self.ti.epochs),
                eps_min: self.ti.schedule.eps_min,
            },
            loss_space: LossSpace::parse(&self.ti.loss_space)?,
        })
    }

    pub fn horizon(&self) -> usize {
        self.rollout
            .horizon
            .unwrap_or_else(|| self.dataset.steps.saturating_sub(self.ti.history))
    }

    /// Everything that can be checked before any work starts. A config that
    /// passes never fails later on width or shape algebra.
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        let dims = grid.dims();
        match self.dataset.kind.as_str() {
            "diffusion-reaction" | "swe" => {
                if dims != 2 {
                    return Err(Error::invalid(format!(
                        "dataset kind `{}` needs a 2-D grid",
                        self.dataset.kind
                    )));
                }
            }
            "heat-laser" => {
                if dims != 3 {
                    return Err(Error::invalid("dataset kind `heat-laser` needs a 3-D grid"));
                }
            }
            "constant" => {}
            other => return Err(Error::invalid(format!("unknown dataset kind `{other}`"))),
        }
        if let Some(path) = &self.dataset.path {
            if !path.is_dir() {
                return Err(Error::invalid(format!(
                    "dataset path `{}` does not exist",
                    path.display()
                )));
            }
        } else if self.dataset.train_samples == 0 || self.dataset.test_samples == 0 {
            return Err(Error::invalid("train_samples and test_samples must be >= 1"));
        }
        if self.dataset.store_every == 0 {
            return Err(Error::invalid("store_every must be >= 1"));
        }
        for &e in &grid.extents {
            if e % self.ae.patch != 0 {
                return Err(Error::NotDivisible {
                    extent: e,
                    patch: self.ae.patch,
                    remainder: e % self.ae.patch,
                });
            }
        }
        // constructing the models performs the full width-algebra check
        let (solution, condition) = self.rosters()?;
        for rf in solution.iter().chain(&condition) {
            AutoencoderModel::new(self.ae_spec(&rf.name)?, NormStats::identity(), 0)?;
        }
        TimeIntegratorModel::new(self.ti_spec()?, 0)?;
        let need = self.ti.history + self.ti.unroll;
        let (lo, hi) = match self.ti.train_window {
            Some([a, b]) => (a, b.min(self.dataset.steps)),
            None => (0, self.dataset.steps),
        };
        if hi < lo + need {
            return Err(Error::invalid(format!(
                "training window [{lo}, {hi}) cannot fit history + unroll = {need} timesteps"
            )));
        }
        if self.horizon() == 0 {
            return Err(Error::invalid("rollout horizon must be >= 1"));
        }
        if !self.rollout.boundary.is_empty() && self.rollout.boundary.len() != dims {
            return Err(Error::invalid(format!(
                "rollout.boundary must list one directive per axis ({dims})"
            )));
        }
        for b in &self.rollout.boundary {
            parse_directive(b)?;
        }
        if let Some(d) = &self.rollout.decode {
            parse_decode(d, self.ti.history + self.horizon())?;
        }
        if let Some(sweep) = &self.sweep {
            match sweep.axis.as_str() {
                "latent" | "history" => {
                    if sweep.values.iter().any(|v| matches!(v, SweepValue::Window(_))) {
                        return Err(Error::invalid("latent/history sweeps take integer values"));
                    }
                }
                "train-window" => {
                    if sweep.values.iter().any(|v| matches!(v, SweepValue::Size(_))) {
                        return Err(Error::invalid("train-window sweeps take [start, end] pairs"));
                    }
                }
                other => return Err(Error::invalid(format!("unknown sweep axis `{other}`"))),
            }
            if sweep.values.is_empty() {
                return Err(Error::invalid("sweep.values must not be empty"));
            }
        }
        Ok(())
    }
}

/// "free" | "periodic" | "dirichlet:<value>" -> parsed directive.
pub fn parse_directive(text: &str) -> Result<Directive> {
    match text {
        "free" => Ok(Directive::Free),
        "periodic" => Ok(Directive::Periodic),
        other => {
            if let Some(v) = other.strip_prefix("dirichlet:") {
                let value: f64 = v
                    .parse()
                    .map_err(|_| Error::invalid(format!("bad dirichlet value in `{other}`")))?;
                Ok(Directive::Dirichlet(value))
            } else {
                Err(Error::invalid(format!("unknown boundary directive `{other}`")))
            }
        }
    }
}

/// Physical-space boundary directive; the pipeline encodes dirichlet
/// values to latents through the solution encoders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Directive {
    Free,
    Periodic,
    Dirichlet(f64),
}

/// "all" or a comma-separated timestep list.
pub fn parse_decode(text: &str, produced: usize) -> Result<crate::rollout::DecodeSet> {
    if text == "all" {
        return Ok(crate::rollout::DecodeSet::All);
    }
    let steps = text
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::invalid(format!("bad decode list `{text}`")))?;
    if let Some(&bad) = steps.iter().find(|&&t| t >= produced) {
        return Err(Error::invalid(format!(
            "decode step {bad} outside the produced range 0..{produced}"
        )));
    }
    Ok(crate::rollout::DecodeSet::Steps(steps))
}
