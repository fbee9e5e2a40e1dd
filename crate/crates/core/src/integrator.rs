//! The latent-space time stepper and its curriculum trainer.
//!
//! Two MLPs advance each subdomain: a fusion network maps the concatenated
//! latents of the center and its 2d face neighbors (solution and condition
//! fields) at one timestep to a fused vector, and a temporal network maps
//! the fused vectors of the `th` most recent timesteps to the next solution
//! latent. Every subdomain is updated from previous-step state only
//! (synchronous Jacobi update), so results do not depend on iteration
//! order.
//!
//! Training unrolls `unroll` steps per weight update and accumulates the
//! latent-space MSE across them. Scheduled sampling decides per appended
//! timestep (shared across subdomains) whether the window keeps the
//! ground-truth latent frame or the model's own prediction; the
//! teacher-forcing probability follows the linear curriculum schedule.

use std::path::Path;
use std::rc::Rc;

use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autoencoder::{AutoencoderModel, LatentFrame};
use crate::container::Container;
use crate::datagen::Dataset;
use crate::decomp::{fusion_table, NeighborPolicy};
use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, AdamConfig, Mlp, NeighborTable, ParamStore, Tape, VarId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RosterField {
    pub name: String,
    pub latent: usize,
}

impl RosterField {
    pub fn new(name: impl Into<String>, latent: usize) -> Self {
        RosterField {
            name: name.into(),
            latent,
        }
    }
}

/// Teacher-forcing probability schedule: 1 during warmup, then linear decay
/// to `eps_min` at `total`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurriculumSchedule {
    pub warmup: usize,
    pub total: usize,
    pub eps_min: f64,
}

impl CurriculumSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.warmup > self.total {
            return Err(Error::invalid("curriculum warmup cannot exceed total epochs"));
        }
        if !(0.0..1.0).contains(&self.eps_min) {
            return Err(Error::invalid("curriculum eps_min must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Probability of feeding the ground-truth latent at `epoch`.
    pub fn probability(&self, epoch: usize) -> f64 {
        if epoch < self.warmup || self.total == self.warmup {
            return 1.0;
        }
        let e = epoch.min(self.total);
        let f = (e - self.warmup) as f64 / (self.total - self.warmup) as f64;
        1.0 - (1.0 - self.eps_min) * f
    }
}

impl Default for CurriculumSchedule {
    fn default() -> Self {
        CurriculumSchedule {
            warmup: 5,
            total: 20,
            eps_min: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossSpace {
    Latent,
    Decoded,
}

impl LossSpace {
    pub fn name(&self) -> &'static str {
        match self {
            LossSpace::Latent => "latent",
            LossSpace::Decoded => "decoded",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "latent" => Ok(LossSpace::Latent),
            "decoded" => Ok(LossSpace::Decoded),
            other => Err(Error::invalid(format!("unknown loss space `{other}`"))),
        }
    }
}

/// Structural hyperparameters of the integrator.
#[derive(Debug, Clone, PartialEq)]
pub struct TiSpec {
    pub dims: usize,
    pub history: usize,
    pub gamma_width: usize,
    /// Timesteps accumulated per weight update (K).
    pub unroll: usize,
    pub policy: NeighborPolicy,
    pub solution: Vec<RosterField>,
    pub condition: Vec<RosterField>,
    pub activation: Activation,
    pub spatial_hidden: Vec<usize>,
    pub temporal_hidden: Vec<usize>,
    pub schedule: CurriculumSchedule,
    pub loss_space: LossSpace,
}

impl TiSpec {
    pub fn solution_width(&self) -> usize {
        self.solution.iter().map(|f| f.latent).sum()
    }

    pub fn condition_width(&self) -> usize {
        self.condition.iter().map(|f| f.latent).sum()
    }

    pub fn members(&self) -> usize {
        2 * self.dims + 1
    }

    pub fn fusion_input_width(&self) -> usize {
        self.members() * (self.solution_width() + self.condition_width())
    }
}

#[derive(Debug, Clone)]
pub struct TimeIntegratorModel {
    pub spec: TiSpec,
    pub store: ParamStore,
    pub f_spatial: Mlp,
    pub f_temporal: Mlp,
}

/// Ground-truth latent sequence of one sample: per timestep, all solution
/// (and condition) latents concatenated in roster order, [N x width]
/// row-major over subdomains.
#[derive(Debug, Clone)]
pub struct EncodedSample {
    pub lattice: Vec<usize>,
    pub solution: Vec<Vec<f64>>,
    pub condition: Vec<Vec<f64>>,
}

impl EncodedSample {
    pub fn steps(&self) -> usize {
        self.solution.len()
    }
}

impl TimeIntegratorModel {
    /// Builds both MLPs; all width algebra is checked here, never at first
    /// forward.
    pub fn new(spec: TiSpec, seed: u64) -> Result<Self> {
        if !(2..=3).contains(&spec.dims) {
            return Err(Error::invalid("integrator dims must be 2 or 3"));
        }
        if spec.history == 0 {
            return Err(Error::invalid("time history must be >= 1"));
        }
        if spec.unroll == 0 {
            return Err(Error::invalid("unroll length must be >= 1"));
        }
        if spec.gamma_width == 0 {
            return Err(Error::invalid("fused width must be >= 1"));
        }
        if spec.solution.is_empty() {
            return Err(Error::invalid("at least one solution field is required"));
        }
        if spec.solution.iter().chain(&spec.condition).any(|f| f.latent == 0) {
            return Err(Error::invalid("latent sizes must be >= 1"));
        }
        if spec.policy.modes.len() != spec.dims {
            return Err(Error::invalid("neighbor policy must cover every axis"));
        }
        spec.schedule.validate()?;

        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sw = vec![spec.fusion_input_width()];
        sw.extend(&spec.spatial_hidden);
        sw.push(spec.gamma_width);
        let f_spatial = Mlp::new(&mut store, "spatial", &sw, spec.activation, &mut rng)?;
        let mut tw = vec![spec.history * spec.gamma_width];
        tw.extend(&spec.temporal_hidden);
        tw.push(spec.solution_width());
        let f_temporal = Mlp::new(&mut store, "temporal", &tw, spec.activation, &mut rng)?;
        Ok(TimeIntegratorModel {
            spec,
            store,
            f_spatial,
            f_temporal,
        })
    }

    /// Fuse one timestep: `members` is [center, -x, +x, -y, +y (, -z, +z)],
    /// each the concatenated solution+condition latents of that subdomain;
    /// `None` is the zero-latent sentinel.
    pub fn fuse_spatial(&self, members: &[Option<&[f64]>]) -> Result<Vec<f64>> {
        let w = self.spec.solution_width() + self.spec.condition_width();
        if members.len() != self.spec.members() {
            return Err(Error::WidthMismatch {
                context: "fuse_spatial member count".into(),
                expected: self.spec.members(),
                actual: members.len(),
            });
        }
        let mut input = vec![0.0; self.spec.fusion_input_width()];
        for (m, entry) in members.iter().enumerate() {
            if let Some(v) = entry {
                if v.len() != w {
                    return Err(Error::WidthMismatch {
                        context: format!("fuse_spatial member {m}"),
                        expected: w,
                        actual: v.len(),
                    });
                }
                input[m * w..(m + 1) * w].copy_from_slice(v);
            }
        }
        let mut tape = Tape::new();
        let x = tape.input_owned(crate::nn::Tensor::new(vec![1, input.len()], input));
        let g = self.f_spatial.forward(&mut tape, &self.store, x)?;
        Ok(tape.values(g).to_vec())
    }

    /// Next solution latent from the fused history, oldest first.
    pub fn predict_next(&self, gammas: &[Vec<f64>]) -> Result<Vec<f64>> {
        if gammas.len() != self.spec.history {
            return Err(Error::HistoryLength {
                expected: self.spec.history,
                actual: gammas.len(),
            });
        }
        let dg = self.spec.gamma_width;
        let mut input = Vec::with_capacity(self.spec.history * dg);
        for g in gammas {
            if g.len() != dg {
                return Err(Error::WidthMismatch {
                    context: "predict_next fused width".into(),
                    expected: dg,
                    actual: g.len(),
                });
            }
            input.extend_from_slice(g);
        }
        let mut tape = Tape::new();
        let x = tape.input_owned(crate::nn::Tensor::new(vec![1, input.len()], input));
        let y = self.f_temporal.forward(&mut tape, &self.store, x)?;
        Ok(tape.values(y).to_vec())
    }

    fn check_window(&self, window: &WindowMatrices) -> Result<usize> {
        let th = self.spec.history;
        if window.solution.len() != th {
            return Err(Error::HistoryLength {
                expected: th,
                actual: window.solution.len(),
            });
        }
        let n: usize = window.lattice.iter().product();
        if window.lattice.len() != self.spec.dims {
            return Err(Error::invalid("lattice dimensionality does not match the model"));
        }
        let sw = self.spec.solution_width();
        for m in window.solution.iter() {
            if m.len() != n * sw {
                return Err(Error::WidthMismatch {
                    context: "solution latent matrix".into(),
                    expected: n * sw,
                    actual: m.len(),
                });
            }
        }
        let cw = self.spec.condition_width();
        if cw > 0 {
            if window.condition.len() != th {
                return Err(Error::HistoryLength {
                    expected: th,
                    actual: window.condition.len(),
                });
            }
            for m in window.condition.iter() {
                if m.len() != n * cw {
                    return Err(Error::WidthMismatch {
                        context: "condition latent matrix".into(),
                        expected: n * cw,
                        actual: m.len(),
                    });
                }
            }
        }
        Ok(n)
    }

    /// Synchronous update of every subdomain from a matrix-form window
    /// (oldest first). Returns the next [N x solution_width] matrix.
    pub fn step_matrices(&self, window: &WindowMatrices) -> Result<Vec<f64>> {
        let n = self.check_window(window)?;
        let table = fusion_table(&window.lattice, &self.spec.policy);
        let mut tape = Tape::new();
        let gammas = self.fuse_window(&mut tape, window, n, &table)?;
        let cat = tape.concat_cols(&gammas)?;
        let pred = self.f_temporal.forward(&mut tape, &self.store, cat)?;
        Ok(tape.values(pred).to_vec())
    }

    /// Tape-level window fusion shared by inference and training. Solution
    /// entries may be live nodes (model feedback) or constants.
    fn fuse_window_nodes(
        &self,
        tape: &mut Tape,
        sol_nodes: &[VarId],
        cond_nodes: &[Option<VarId>],
        table: &Rc<NeighborTable>,
    ) -> Result<Vec<VarId>> {
        let mut gammas = Vec::with_capacity(sol_nodes.len());
        for (t, &s) in sol_nodes.iter().enumerate() {
            let full = match cond_nodes[t] {
                Some(c) => tape.concat_cols(&[s, c])?,
                None => s,
            };
            let gathered = tape.gather_rows(full, Rc::clone(table))?;
            let g = self.f_spatial.forward(tape, &self.store, gathered)?;
            gammas.push(g);
        }
        Ok(gammas)
    }

    fn fuse_window(
        &self,
        tape: &mut Tape,
        window: &WindowMatrices,
        n: usize,
        table: &Rc<NeighborTable>,
    ) -> Result<Vec<VarId>> {
        let sw = self.spec.solution_width();
        let cw = self.spec.condition_width();
        let mut sol_nodes = Vec::new();
        let mut cond_nodes = Vec::new();
        for t in 0..self.spec.history {
            sol_nodes.push(tape.input_owned(crate::nn::Tensor::new(
                vec![n, sw],
                window.solution[t].clone(),
            )));
            cond_nodes.push(if cw > 0 {
                Some(tape.input_owned(crate::nn::Tensor::new(
                    vec![n, cw],
                    window.condition[t].clone(),
                )))
            } else {
                None
            });
        }
        self.fuse_window_nodes(tape, &sol_nodes, &cond_nodes, table)
    }

    /// [`step_matrices`] with per-field [`LatentFrame`] inputs and outputs.
    pub fn step_all(&self, window: &[FrameSet]) -> Result<Vec<LatentFrame>> {
        let mats = WindowMatrices::from_frames(&self.spec, window)?;
        let out = self.step_matrices(&mats)?;
        let last_t = window.last().map(|f| f.timestep()).unwrap_or(0);
        Ok(split_solution_matrix(
            &self.spec,
            &mats.lattice,
            &out,
            last_t + 1,
        ))
    }

    /// Row-at-a-time variant taking an explicit iteration order; the Jacobi
    /// contract makes the result bit-identical for any permutation.
    pub fn step_all_with_order(&self, window: &[FrameSet], order: &[usize]) -> Result<Vec<LatentFrame>> {
        let mats = WindowMatrices::from_frames(&self.spec, window)?;
        let n = self.check_window(&mats)?;
        if order.len() != n {
            return Err(Error::invalid("iteration order must list every subdomain once"));
        }
        let table = fusion_table(&mats.lattice, &self.spec.policy);
        let sw = self.spec.solution_width();
        let cw = self.spec.condition_width();
        let full_w = sw + cw;
        let mut out = vec![0.0; n * sw];
        for &row in order {
            let mut gammas = Vec::with_capacity(self.spec.history);
            for t in 0..self.spec.history {
                let mut members: Vec<Option<Vec<f64>>> = Vec::with_capacity(table.members);
                for refm in &table.rows[row] {
                    members.push(refm.map(|src| {
                        let mut v = Vec::with_capacity(full_w);
                        v.extend_from_slice(&mats.solution[t][src * sw..(src + 1) * sw]);
                        if cw > 0 {
                            v.extend_from_slice(&mats.condition[t][src * cw..(src + 1) * cw]);
                        }
                        v
                    }));
                }
                let refs: Vec<Option<&[f64]>> =
                    members.iter().map(|m| m.as_deref()).collect();
                gammas.push(self.fuse_spatial(&refs)?);
            }
            let pred = self.predict_next(&gammas)?;
            out[row * sw..(row + 1) * sw].copy_from_slice(&pred);
        }
        let last_t = window.last().map(|f| f.timestep()).unwrap_or(0);
        Ok(split_solution_matrix(&self.spec, &mats.lattice, &out, last_t + 1))
    }

    pub fn save(&self, path: &Path, opt: Option<&Adam>) -> Result<()> {
        let mut c = Container::new();
        let s = &self.spec;
        c.set("kind", "time-integrator");
        c.set("dims", s.dims);
        c.set("history", s.history);
        c.set("gamma", s.gamma_width);
        c.set("unroll", s.unroll);
        c.set("policy", s.policy.encode());
        c.set("solution", encode_roster(&s.solution));
        c.set("condition", encode_roster(&s.condition));
        c.set("activation", s.activation.name());
        c.set("spatial_hidden", join(&s.spatial_hidden));
        c.set("temporal_hidden", join(&s.temporal_hidden));
        c.set("schedule.warmup", s.schedule.warmup);
        c.set("schedule.total", s.schedule.total);
        c.set("schedule.eps_min", s.schedule.eps_min);
        c.set("loss_space", s.loss_space.name());
        c.push_param_store(&self.store);
        if let Some(opt) = opt {
            c.push_adam(opt);
        }
        c.write(path)
    }

    pub fn load(path: &Path, opt_cfg: Option<AdamConfig>) -> Result<(Self, Option<Adam>)> {
        let c = Container::read(path)?;
        if c.get("kind") != Some("time-integrator") {
            return Err(Error::format(format!(
                "`{}` is not a time-integrator checkpoint",
                path.display()
            )));
        }
        let spec = TiSpec {
            dims: c.require_parsed("dims")?,
            history: c.require_parsed("history")?,
            gamma_width: c.require_parsed("gamma")?,
            unroll: c.require_parsed("unroll")?,
            policy: NeighborPolicy::decode(c.require("policy")?)?,
            solution: decode_roster(c.require("solution")?)?,
            condition: decode_roster(c.require("condition")?)?,
            activation: Activation::parse(c.require("activation")?)?,
            spatial_hidden: c.require_list("spatial_hidden")?,
            temporal_hidden: c.require_list("temporal_hidden")?,
            schedule: CurriculumSchedule {
                warmup: c.require_parsed("schedule.warmup")?,
                total: c.require_parsed("schedule.total")?,
                eps_min: c.require_parsed("schedule.eps_min")?,
            },
            loss_space: LossSpace::parse(c.require("loss_space")?)?,
        };
        let mut model = TimeIntegratorModel::new(spec, 0)?;
        c.read_param_store_into(&mut model.store)?;
        let opt = match opt_cfg {
            Some(cfg) => c.read_adam(cfg, model.store.len())?,
            None => None,
        };
        Ok((model, opt))
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items
        .iter()
        .map(|e| e.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn encode_roster(fields: &[RosterField]) -> String {
    fields
        .iter()
        .map(|f| format!("{}:{}", f.name, f.latent))
        .collect::<Vec<_>>()
        .join(",")
}

fn decode_roster(s: &str) -> Result<Vec<RosterField>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|item| {
            let (name, latent) = item
                .split_once(':')
                .ok_or_else(|| Error::format(format!("bad roster entry `{item}`")))?;
            Ok(RosterField {
                name: name.to_string(),
                latent: latent
                    .parse()
                    .map_err(|_| Error::format(format!("bad roster entry `{item}`")))?,
            })
        })
        .collect()
}

/// One timestep of latent frames for every roster field.
#[derive(Debug, Clone)]
pub struct FrameSet {
    pub solution: Vec<LatentFrame>,
    pub condition: Vec<LatentFrame>,
}

impl FrameSet {
    fn timestep(&self) -> usize {
        self.solution.first().map(|f| f.timestep).unwrap_or(0)
    }
}

/// Matrix-form history window, oldest first.
#[derive(Debug, Clone)]
pub struct WindowMatrices {
    pub lattice: Vec<usize>,
    pub solution: Vec<Vec<f64>>,
    pub condition: Vec<Vec<f64>>,
}

impl WindowMatrices {
    pub fn from_frames(spec: &TiSpec, window: &[FrameSet]) -> Result<WindowMatrices> {
        if window.is_empty() {
            return Err(Error::HistoryLength {
                expected: spec.history,
                actual: 0,
            });
        }
        let lattice = window[0]
            .solution
            .first()
            .map(|f| f.lattice.clone())
            .ok_or_else(|| Error::invalid("frame set has no solution frames"))?;
        let mut solution = Vec::with_capacity(window.len());
        let mut condition = Vec::with_capacity(window.len());
        for fs in window {
            solution.push(concat_frames(&spec.solution, &fs.solution, &lattice)?);
            if !spec.condition.is_empty() {
                condition.push(concat_frames(&spec.condition, &fs.condition, &lattice)?);
            }
        }
        Ok(WindowMatrices {
            lattice,
            solution,
            condition,
        })
    }
}

/// Concatenate per-field frames into one [N x total width] matrix in roster
/// order, validating names, widths, and lattices.
pub fn concat_frames(
    roster: &[RosterField],
    frames: &[LatentFrame],
    lattice: &[usize],
) -> Result<Vec<f64>> {
    let n: usize = lattice.iter().product();
    let total: usize = roster.iter().map(|f| f.latent).sum();
    let mut out = vec![0.0; n * total];
    let mut off = 0;
    for rf in roster {
        let frame = frames
            .iter()
            .find(|f| f.field == rf.name)
            .ok_or_else(|| Error::invalid(format!("missing latent frame for field `{}`", rf.name)))?;
        if frame.latent != rf.latent {
            return Err(Error::WidthMismatch {
                context: format!("latent frame `{}`", rf.name),
                expected: rf.latent,
                actual: frame.latent,
            });
        }
        if frame.lattice != lattice {
            return Err(Error::invalid(format!(
                "latent frame `{}` lattice {:?} does not match {:?}",
                rf.name, frame.lattice, lattice
            )));
        }
        for i in 0..n {
            out[i * total + off..i * total + off + rf.latent]
                .copy_from_slice(frame.vector(i));
        }
        off += rf.latent;
    }
    Ok(out)
}

/// Split a [N x solution_width] matrix back into per-field frames.
pub fn split_solution_matrix(
    spec: &TiSpec,
    lattice: &[usize],
    matrix: &[f64],
    timestep: usize,
) -> Vec<LatentFrame> {
    let n: usize = lattice.iter().product();
    let total = spec.solution_width();
    let mut out = Vec::with_capacity(spec.solution.len());
    let mut off = 0;
    for rf in &spec.solution {
        let mut data = Vec::with_capacity(n * rf.latent);
        for i in 0..n {
            data.extend_from_slice(&matrix[i * total + off..i * total + off + rf.latent]);
        }
        out.push(LatentFrame {
            lattice: lattice.to_vec(),
            latent: rf.latent,
            field: rf.name.clone(),
            timestep,
            data,
        });
        off += rf.latent;
    }
    out
}

/// Encode every frame of a dataset through the per-field autoencoders,
/// producing the latent ground truth used for integrator training.
pub fn encode_sample(
    spec: &TiSpec,
    aes: &[AutoencoderModel],
    ds: &Dataset,
) -> Result<EncodedSample> {
    let find = |name: &str| -> Result<&AutoencoderModel> {
        aes.iter()
            .find(|m| m.spec.field == name)
            .ok_or_else(|| Error::invalid(format!("no autoencoder for field `{name}`")))
    };
    let steps = ds.grid.steps;
    let mut lattice: Option<Vec<usize>> = None;
    let mut encode_roster = |roster: &[RosterField]| -> Result<Vec<Vec<f64>>> {
        let mut frames_by_field = Vec::new();
        for rf in roster {
            let ae = find(&rf.name)?;
            let series = ds.series_by_name(&rf.name)?;
            let mut field_frames = Vec::with_capacity(steps);
            for t in 0..steps {
                let frame = ae.encode_field(&series.field(t), t)?;
                if let Some(l) = &lattice {
                    if l != &frame.lattice {
                        return Err(Error::invalid("fields disagree on the subdomain lattice"));
                    }
                } else {
                    lattice = Some(frame.lattice.clone());
                }
                field_frames.push(frame);
            }
            frames_by_field.push(field_frames);
        }
        let lat = lattice.clone().unwrap();
        (0..steps)
            .map(|t| {
                let frames: Vec<LatentFrame> =
                    frames_by_field.iter().map(|ff| ff[t].clone()).collect();
                concat_frames(roster, &frames, &lat)
            })
            .collect()
    };
    let solution = encode_roster(&spec.solution)?;
    let condition = if spec.condition.is_empty() {
        Vec::new()
    } else {
        encode_roster(&spec.condition)?
    };
    Ok(EncodedSample {
        lattice: lattice.ok_or_else(|| Error::invalid("dataset has no roster fields"))?,
        solution,
        condition,
    })
}

// ------------------------------------------------------------- training --

#[derive(Debug, Clone)]
pub struct TiTrainConfig {
    pub epochs: usize,
    /// Cap on windows (= weight updates) per epoch; None uses every window.
    pub windows_per_epoch: Option<usize>,
    pub optimizer: AdamConfig,
    /// Fraction of samples held out for validation.
    pub val_fraction: f64,
    /// Restrict training windows to timesteps [start, end).
    pub train_window: Option<(usize, usize)>,
    pub seed: u64,
}

impl Default for TiTrainConfig {
    fn default() -> Self {
        TiTrainConfig {
            epochs: 20,
            windows_per_epoch: None,
            optimizer: AdamConfig::default(),
            val_fraction: 0.1,
            train_window: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TiEpochStats {
    pub epoch: usize,
    pub epsilon: f64,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TiTrainReport {
    pub epochs: Vec<TiEpochStats>,
    /// Scheduled-sampling decisions (true = ground truth kept), one list
    /// per epoch in draw order; used to verify seeded determinism.
    pub cl_draws: Vec<Vec<bool>>,
    pub best_epoch: usize,
    pub best_val: f64,
    pub diverged_at: Option<usize>,
}

/// Decoder weights and normalized patch targets for the decoded-space loss.
pub struct DecodedLoss<'a> {
    /// One decoder per solution field, roster order.
    pub decoders: Vec<&'a AutoencoderModel>,
    /// [sample][timestep][field] -> flat [N * patch_len] normalized patches.
    pub targets: Vec<Vec<Vec<Vec<f64>>>>,
}

struct Unrolled {
    loss: VarId,
    loss_value: f64,
    draws: Vec<bool>,
}

/// What decides whether an appended window entry keeps the ground truth.
enum DrawSource<'a> {
    /// Bernoulli(epsilon) per appended timestep, shared across subdomains.
    Rng(&'a mut ChaCha8Rng, f64),
    /// Fixed decisions (true = ground truth), for verification.
    Fixed(&'a [bool]),
    /// Pure teacher forcing.
    Teacher,
}

/// Build the K-step unrolled loss for one window starting at `start`:
/// at each step the next-frame prediction is scored against the encoded
/// ground truth, and the window slides forward over either the ground
/// truth or the prediction per the draw source.
fn unroll_window(
    model: &TimeIntegratorModel,
    sample: &EncodedSample,
    start: usize,
    table: &Rc<NeighborTable>,
    draw: &mut DrawSource<'_>,
    decoded: Option<(&DecodedLoss<'_>, usize)>,
    tape: &mut Tape,
) -> Result<Unrolled> {
    let spec = &model.spec;
    let (th, k_steps) = (spec.history, spec.unroll);
    let n: usize = sample.lattice.iter().product();
    let sw = spec.solution_width();
    let cw = spec.condition_width();

    // window entries: ground-truth constants at first, model nodes later
    let mut sol_nodes: Vec<VarId> = (0..th)
        .map(|t| {
            tape.input_owned(crate::nn::Tensor::new(
                vec![n, sw],
                sample.solution[start + t].clone(),
            ))
        })
        .collect();
    let cond_node = |tape: &mut Tape, t: usize| -> Option<VarId> {
        if cw > 0 {
            Some(tape.input_owned(crate::nn::Tensor::new(
                vec![n, cw],
                sample.condition[start + t].clone(),
            )))
        } else {
            None
        }
    };
    let mut cond_nodes: Vec<Option<VarId>> = (0..th).map(|t| cond_node(tape, t)).collect();

    let mut total: Option<VarId> = None;
    let mut draws = Vec::new();
    for k in 0..k_steps {
        let window_sol = &sol_nodes[k..k + th];
        let window_cond = &cond_nodes[k..k + th];
        let gammas = model.fuse_window_nodes(tape, window_sol, window_cond, table)?;
        let cat = tape.concat_cols(&gammas)?;
        let pred = model.f_temporal.forward(tape, &model.store, cat)?;

        let target_t = start + th + k;
        let step_loss = match decoded {
            None => tape.mse_vs(pred, &sample.solution[target_t])?,
            Some((dl, sample_idx)) => {
                let mut acc: Option<VarId> = None;
                let mut off = 0;
                for (fi, rf) in spec.solution.iter().enumerate() {
                    let dec = dl.decoders[fi];
                    let z = tape.slice_cols(pred, off, rf.latent)?;
                    let y = dec.decoder.forward_frozen(tape, &dec.store, z)?;
                    let l = tape.mse_vs(y, &dl.targets[sample_idx][target_t][fi])?;
                    acc = Some(match acc {
                        None => l,
                        Some(a) => tape.add(a, l)?,
                    });
                    off += rf.latent;
                }
                acc.expect("at least one solution field")
            }
        };
        total = Some(match total {
            None => step_loss,
            Some(t) => tape.add(t, step_loss)?,
        });

        // scheduled sampling: decide what the next window sees at this step
        if k + 1 < k_steps {
            let teacher = match draw {
                DrawSource::Rng(r, eps) => {
                    let t = r.gen::<f64>() < *eps;
                    draws.push(t);
                    t
                }
                DrawSource::Fixed(d) => *d
                    .get(k)
                    .ok_or_else(|| Error::invalid("fixed draw list shorter than unroll - 1"))?,
                DrawSource::Teacher => true,
            };
            let next = if teacher {
                tape.input_owned(crate::nn::Tensor::new(
                    vec![n, sw],
                    sample.solution[target_t].clone(),
                ))
            } else {
                pred
            };
            sol_nodes.push(next);
            cond_nodes.push(cond_node(tape, th + k));
        }
    }
    let loss = total.expect("unroll >= 1");
    Ok(Unrolled {
        loss,
        loss_value: tape.values(loss)[0],
        draws,
    })
}

/// The full K-step unrolled training loss as a recorded tape, with fixed
/// scheduled-sampling decisions (`feedback[k]` = keep ground truth after
/// step k). This is the loss surface `train_ti` optimizes; exposed so its
/// gradient can be verified against finite differences.
pub fn unrolled_loss(
    model: &TimeIntegratorModel,
    sample: &EncodedSample,
    start: usize,
    feedback: &[bool],
) -> Result<(Tape, VarId)> {
    let table = fusion_table(&sample.lattice, &model.spec.policy);
    let mut tape = Tape::new();
    let out = unroll_window(
        model,
        sample,
        start,
        &table,
        &mut DrawSource::Fixed(feedback),
        None,
        &mut tape,
    )?;
    Ok((tape, out.loss))
}

pub fn train_ti(
    model: &mut TimeIntegratorModel,
    data: &[EncodedSample],
    decoded: Option<&DecodedLoss<'_>>,
    cfg: &TiTrainConfig,
    opt: &mut Adam,
    epoch_offset: usize,
) -> Result<TiTrainReport> {
    let spec = model.spec.clone();
    if data.is_empty() {
        return Err(Error::invalid("integrator training needs at least one sample"));
    }
    if spec.loss_space == LossSpace::Decoded && decoded.is_none() {
        return Err(Error::invalid("decoded-space loss needs decoder targets"));
    }
    let need = spec.history + spec.unroll;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // sample split: validation gets the tail of a seeded shuffle
    let mut sample_order: Vec<usize> = (0..data.len()).collect();
    sample_order.shuffle(&mut rng);
    let n_val = ((data.len() as f64 * cfg.val_fraction).ceil() as usize).min(data.len() - 1);
    let (train_samples, val_samples) = sample_order.split_at(data.len() - n_val);

    let window_list = |samples: &[usize]| -> Vec<(usize, usize)> {
        let mut windows = Vec::new();
        for &s in samples {
            let steps = data[s].steps();
            let (lo, hi) = match cfg.train_window {
                Some((a, b)) => (a, b.min(steps)),
                None => (0, steps),
            };
            if hi >= lo + need {
                for start in lo..=(hi - need) {
                    windows.push((s, start));
                }
            }
        }
        windows
    };
    let train_windows_all = window_list(train_samples);
    let val_windows = window_list(val_samples);
    if train_windows_all.is_empty() {
        return Err(Error::invalid(format!(
            "no training windows: need history + unroll = {need} timesteps"
        )));
    }

    let tables: Vec<Rc<NeighborTable>> = data
        .iter()
        .map(|s| fusion_table(&s.lattice, &spec.policy))
        .collect();

    let mut report = TiTrainReport {
        epochs: Vec::new(),
        cl_draws: Vec::new(),
        best_epoch: epoch_offset,
        best_val: f64::INFINITY,
        diverged_at: None,
    };
    let mut best_params: Vec<Vec<f64>> =
        model.store.iter().map(|p| p.value.data.clone()).collect();

    'epochs: for e in 0..cfg.epochs {
        let epoch = epoch_offset + e;
        let epsilon = spec.schedule.probability(epoch);
        let mut windows = train_windows_all.clone();
        windows.shuffle(&mut rng);
        if let Some(cap) = cfg.windows_per_epoch {
            windows.truncate(cap);
        }

        let mut train_loss = 0.0;
        let mut epoch_draws = Vec::new();
        for &(s, start) in &windows {
            let mut tape = Tape::new();
            let out = unroll_window(
                model,
                &data[s],
                start,
                &tables[s],
                &mut DrawSource::Rng(&mut rng, epsilon),
                decoded.map(|d| (d, s)),
                &mut tape,
            )?;
            if !out.loss_value.is_finite() {
                report.diverged_at = Some(epoch);
                break 'epochs;
            }
            model.store.zero_grad();
            tape.backward(out.loss, &mut model.store)?;
            opt.step(&mut model.store)?;
            train_loss += out.loss_value;
            epoch_draws.extend(out.draws);
        }
        train_loss /= windows.len().max(1) as f64;

        // teacher-forced validation loss
        let val_loss = if val_windows.is_empty() {
            train_loss
        } else {
            let mut acc = 0.0;
            for &(s, start) in &val_windows {
                let mut tape = Tape::new();
                let out = unroll_window(
                    model,
                    &data[s],
                    start,
                    &tables[s],
                    &mut DrawSource::Teacher,
                    decoded.map(|d| (d, s)),
                    &mut tape,
                )?;
                acc += out.loss_value;
            }
            acc / val_windows.len() as f64
        };
        if !val_loss.is_finite() {
            report.diverged_at = Some(epoch);
            break;
        }
        if val_loss < report.best_val {
            report.best_val = val_loss;
            report.best_epoch = epoch;
            for (dst, p) in best_params.iter_mut().zip(model.store.iter()) {
                dst.copy_from_slice(&p.value.data);
            }
        }
        report.epochs.push(TiEpochStats {
            epoch,
            epsilon,
            train_loss,
            val_loss,
        });
        report.cl_draws.push(epoch_draws);
    }

    for (src, p) in best_params.iter().zip(model.store.iter_mut()) {
        p.value.data.copy_from_slice(src);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::AxisPolicy;

    fn toy_spec(dims: usize, latent: usize, th: usize, unroll: usize) -> TiSpec {
        TiSpec {
            dims,
            history: th,
            gamma_width: 6,
            unroll,
            policy: NeighborPolicy::uniform(AxisPolicy::Zero, dims),
            solution: vec![RosterField::new("u", latent)],
            condition: vec![],
            activation: Activation::Tanh,
            spatial_hidden: vec![8],
            temporal_hidden: vec![8],
            schedule: CurriculumSchedule::default(),
            loss_space: LossSpace::Latent,
        }
    }

    fn toy_sample(lattice: Vec<usize>, width: usize, steps: usize, seed: u64) -> EncodedSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n: usize = lattice.iter().product();
        EncodedSample {
            lattice,
            solution: (0..steps)
                .map(|_| (0..n * width).map(|_| rng.gen::<f64>() - 0.5).collect())
                .collect(),
            condition: Vec::new(),
        }
    }

    #[test]
    fn curriculum_schedule_matches_the_linear_law() {
        let s = CurriculumSchedule {
            warmup: 10,
            total: 110,
            eps_min: 0.0,
        };
        assert_eq!(s.probability(0), 1.0);
        assert_eq!(s.probability(9), 1.0);
        assert_eq!(s.probability(60), 0.5);
        assert_eq!(s.probability(110), 0.0);
        // non-increasing everywhere, clamped past the end
        let mut prev = 1.0;
        for e in 0..130 {
            let p = s.probability(e);
            assert!(p <= prev + 1e-15);
            prev = p;
        }
        assert_eq!(s.probability(200), 0.0);
    }

    #[test]
    fn degenerate_pure_teacher_forcing_schedule_is_valid() {
        let s = CurriculumSchedule {
            warmup: 5,
            total: 5,
            eps_min: 0.0,
        };
        s.validate().unwrap();
        for e in 0..10 {
            assert_eq!(s.probability(e), 1.0);
        }
    }

    #[test]
    fn fusion_input_width_follows_the_topology() {
        // 2-D, one solution field l = 16, no condition: (2*2+1) * 16 = 80
        let spec = TiSpec {
            solution: vec![RosterField::new("h", 16)],
            ..toy_spec(2, 16, 10, 10)
        };
        assert_eq!(spec.fusion_input_width(), 80);
        let model = TimeIntegratorModel::new(spec, 0).unwrap();
        assert_eq!(model.f_spatial.input_width(), 80);
        assert_eq!(model.f_temporal.input_width(), 10 * model.spec.gamma_width);
    }

    #[test]
    fn history_lengths_5_10_20_are_supported() {
        for th in [5usize, 10, 20] {
            let model = TimeIntegratorModel::new(toy_spec(2, 4, th, 2), 0).unwrap();
            let gammas = vec![vec![0.0; model.spec.gamma_width]; th];
            assert!(model.predict_next(&gammas).is_ok());
            let err = model.predict_next(&gammas[1..]).unwrap_err();
            assert!(matches!(err, Error::HistoryLength { .. }));
        }
    }

    #[test]
    fn zero_weight_fusion_returns_its_bias() {
        let mut model = TimeIntegratorModel::new(toy_spec(2, 3, 2, 2), 1).unwrap();
        for p in model.store.iter_mut() {
            if p.name.starts_with("spatial") {
                p.value.fill(0.0);
            }
        }
        let bias_len = model.spec.gamma_width;
        let last = model.f_spatial.net.layers.last().unwrap().params[1];
        let bias: Vec<f64> = (0..bias_len).map(|i| i as f64 * 0.1).collect();
        model.store.get_mut(last).value.data.copy_from_slice(&bias);
        let v = vec![0.7; 3];
        let members = vec![Some(v.as_slice()); 5];
        assert_eq!(model.fuse_spatial(&members).unwrap(), bias);
        let other = vec![Some(v.as_slice()), None, None, None, None];
        assert_eq!(model.fuse_spatial(&other).unwrap(), bias);
    }

    #[test]
    fn zero_weight_temporal_head_predicts_zero() {
        let mut model = TimeIntegratorModel::new(toy_spec(2, 3, 4, 2), 2).unwrap();
        for p in model.store.iter_mut() {
            if p.name.starts_with("temporal") {
                p.value.fill(0.0);
            }
        }
        let gammas = vec![vec![0.3; model.spec.gamma_width]; 4];
        assert!(model.predict_next(&gammas).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn neighbor_order_is_semantic() {
        let model = TimeIntegratorModel::new(toy_spec(2, 3, 2, 2), 3).unwrap();
        let a = vec![0.9, -0.2, 0.4];
        let b = vec![-0.5, 0.8, 0.1];
        let c = vec![0.2; 3];
        let m1 = vec![
            Some(c.as_slice()),
            Some(a.as_slice()),
            Some(b.as_slice()),
            None,
            None,
        ];
        let m2 = vec![
            Some(c.as_slice()),
            Some(b.as_slice()),
            Some(a.as_slice()),
            None,
            None,
        ];
        assert_ne!(model.fuse_spatial(&m1).unwrap(), model.fuse_spatial(&m2).unwrap());
    }

    #[test]
    fn step_all_predicts_one_latent_per_subdomain() {
        let model = TimeIntegratorModel::new(toy_spec(2, 2, 3, 2), 4).unwrap();
        let sample = toy_sample(vec![16, 16], 2, 3, 5);
        let window = WindowMatrices {
            lattice: sample.lattice.clone(),
            solution: sample.solution.clone(),
            condition: Vec::new(),
        };
        let out = model.step_matrices(&window).unwrap();
        assert_eq!(out.len(), 256 * 2);
    }

    #[test]
    fn single_subdomain_step_reduces_to_fuse_then_predict() {
        let model = TimeIntegratorModel::new(toy_spec(2, 3, 2, 2), 6).unwrap();
        let sample = toy_sample(vec![1, 1], 3, 2, 7);
        let window = WindowMatrices {
            lattice: vec![1, 1],
            solution: sample.solution.clone(),
            condition: Vec::new(),
        };
        let stepped = model.step_matrices(&window).unwrap();
        let mut gammas = Vec::new();
        for t in 0..2 {
            let members = vec![Some(sample.solution[t].as_slice()), None, None, None, None];
            gammas.push(model.fuse_spatial(&members).unwrap());
        }
        let manual = model.predict_next(&gammas).unwrap();
        assert_eq!(stepped, manual);
    }

    #[test]
    fn iteration_order_does_not_change_the_update() {
        let model = TimeIntegratorModel::new(toy_spec(2, 2, 2, 2), 8).unwrap();
        let sample = toy_sample(vec![4, 4], 2, 2, 9);
        let frames = |t: usize| FrameSet {
            solution: split_solution_matrix(&model.spec, &sample.lattice, &sample.solution[t], t),
            condition: vec![],
        };
        let window = vec![frames(0), frames(1)];
        let forward: Vec<usize> = (0..16).collect();
        let reverse: Vec<usize> = (0..16).rev().collect();
        let a = model.step_all_with_order(&window, &forward).unwrap();
        let b = model.step_all_with_order(&window, &reverse).unwrap();
        assert_eq!(a, b);
        let batched = model.step_all(&window).unwrap();
        assert_eq!(a, batched);
    }

    #[test]
    fn prediction_depends_only_on_the_face_neighborhood() {
        let model = TimeIntegratorModel::new(toy_spec(2, 2, 2, 2), 10).unwrap();
        let sample = toy_sample(vec![4, 4], 2, 2, 11);
        let window = WindowMatrices {
            lattice: sample.lattice.clone(),
            solution: sample.solution.clone(),
            condition: Vec::new(),
        };
        let base = model.step_matrices(&window).unwrap();
        // perturb subdomain (3,3); subdomain (0,0) is outside its face
        // neighborhood, so its prediction must not move at all
        let mut perturbed = window.clone();
        let far = 3 * 4 + 3;
        for t in 0..2 {
            perturbed.solution[t][far * 2] += 10.0;
            perturbed.solution[t][far * 2 + 1] -= 3.0;
        }
        let out = model.step_matrices(&perturbed).unwrap();
        assert_eq!(&base[0..2], &out[0..2]);
        // but (3,2), a face neighbor, does move
        let nb = 3 * 4 + 2;
        assert_ne!(&base[nb * 2..nb * 2 + 2], &out[nb * 2..nb * 2 + 2]);
    }

    #[test]
    fn construction_rejects_inconsistent_specs() {
        let mut spec = toy_spec(2, 4, 10, 10);
        spec.policy = NeighborPolicy::uniform(AxisPolicy::Zero, 3);
        assert!(TimeIntegratorModel::new(spec, 0).is_err());
        let mut spec = toy_spec(2, 4, 10, 10);
        spec.solution.clear();
        assert!(TimeIntegratorModel::new(spec, 0).is_err());
        let mut spec = toy_spec(2, 4, 10, 10);
        spec.schedule.eps_min = 1.0;
        assert!(TimeIntegratorModel::new(spec, 0).is_err());
    }

    #[test]
    fn checkpoint_round_trip_preserves_spec_and_params() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ti.cmls");
        let model = TimeIntegratorModel::new(toy_spec(2, 4, 5, 3), 12).unwrap();
        model.save(&path, None).unwrap();
        let (back, _) = TimeIntegratorModel::load(&path, None).unwrap();
        assert_eq!(back.spec, model.spec);
        for (a, b) in back.store.iter().zip(model.store.iter()) {
            for (x, y) in a.value.data.iter().zip(&b.value.data) {
                assert_eq!(*x, *y as f32 as f64);
            }
        }
    }

    #[test]
    fn training_replays_bit_identically_under_a_seed() {
        let run = || {
            let mut spec = toy_spec(2, 2, 2, 3);
            spec.schedule = CurriculumSchedule {
                warmup: 1,
                total: 4,
                eps_min: 0.0,
            };
            let mut model = TimeIntegratorModel::new(spec, 13).unwrap();
            let data = vec![toy_sample(vec![2, 2], 2, 12, 14)];
            let cfg = TiTrainConfig {
                epochs: 4,
                seed: 15,
                val_fraction: 0.0,
                ..TiTrainConfig::default()
            };
            let mut opt = Adam::new(cfg.optimizer);
            let report = train_ti(&mut model, &data, None, &cfg, &mut opt, 0).unwrap();
            assert!(report.diverged_at.is_none());
            let flat: Vec<f64> = model.store.iter().flat_map(|p| p.value.data.clone()).collect();
            (report.cl_draws, flat)
        };
        let (draws_a, params_a) = run();
        let (draws_b, params_b) = run();
        assert_eq!(draws_a, draws_b);
        assert_eq!(params_a, params_b);
        // past warmup with eps_min = 0 some non-teacher draws must occur
        assert!(draws_a.iter().flatten().any(|&d| !d));
    }

    #[test]
    fn unrolled_loss_gradient_matches_finite_differences() {
        // tiny config: 2x2 lattice, l = 2, th = 2, K = 2, feedback on
        let mut model = TimeIntegratorModel::new(toy_spec(2, 2, 2, 2), 16).unwrap();
        let sample = toy_sample(vec![2, 2], 2, 4, 17);
        let rel = crate::nn::grad_check(
            &mut model.store.clone(),
            |store| {
                let mut m = model.clone();
                m.store = store.clone();
                unrolled_loss(&m, &sample, 0, &[false])
            },
            48,
            1e-5,
            18,
        )
        .unwrap();
        assert!(rel < 1e-4, "rel err {rel}");
    }
}

