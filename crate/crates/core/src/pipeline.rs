//! Batch orchestration: dataset generation, training, rollout, evaluation,
//! and ablation sweeps, all driven by one [`ExperimentConfig`]. The CLI is
//! a thin wrapper over these functions; tests drive them directly.
//!
//! Output layout under the experiment directory:
//! - `data/train_XXX.cmls`, `data/test_XXX.cmls`, `data/manifest.toml`
//! - `models/ae_<field>.cmls`, `models/ti.cmls`, per-model loss CSVs
//! - `pred/pred_XXX.cmls`, optional `pred/frames/*.pgm`
//! - `eval/report.csv`, `eval/per_timestep.csv`, optional `eval/melt_depth.csv`

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::autoencoder::{
    collect_patches, train_autoencoder, AeTrainConfig, AeTrainReport, AutoencoderModel,
};
use crate::config::{Directive, ExperimentConfig};
use crate::datagen::{
    self, gen_constant, gen_diffusion_reaction, gen_heat_laser, gen_swe_dam_break, raster_path,
    ConstantParams, Dataset, DiffusionReactionParams, HeatParams, RadiusSpec, SweParams,
};
use crate::decomp::NormStats;
use crate::error::{Error, Result};
use crate::eval::{
    melt_pool_depth, nrmse, persistence_baseline, write_per_timestep_csv, write_report_csv,
    EvalReport,
};
use crate::field::FieldSeries;
use crate::integrator::{
    encode_sample, train_ti, EncodedSample, TiTrainConfig, TiTrainReport, TimeIntegratorModel,
};
use crate::nn::{Adam, AdamConfig};
use crate::rollout::{
    encode_boundary_patch, prediction_series, rollout, AxisDirective, DecodeSet, RolloutPlan,
};

pub struct Pipeline {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
}

#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub model: EvalReport,
    pub baseline: EvalReport,
}

impl Pipeline {
    pub fn new(cfg: ExperimentConfig, out: impl Into<PathBuf>) -> Result<Self> {
        cfg.validate()?;
        Ok(Pipeline {
            cfg,
            out: out.into(),
        })
    }

    pub fn data_dir(&self) -> PathBuf {
        self.cfg
            .dataset
            .path
            .clone()
            .unwrap_or_else(|| self.out.join("data"))
    }

    fn models_dir(&self) -> PathBuf {
        self.out.join("models")
    }

    fn pred_dir(&self) -> PathBuf {
        self.out.join("pred")
    }

    fn ae_path(&self, field: &str) -> PathBuf {
        self.models_dir().join(format!("ae_{field}.cmls"))
    }

    fn ti_path(&self) -> PathBuf {
        self.models_dir().join("ti.cmls")
    }

    fn sample_path(&self, split: &str, index: usize) -> PathBuf {
        self.data_dir().join(format!("{split}_{index:03}.cmls"))
    }

    // ------------------------------------------------------------ generate --

    fn generate_one(&self, seed: u64) -> Result<Dataset> {
        let grid = self.cfg.grid()?;
        let d = &self.cfg.dataset;
        match d.kind.as_str() {
            "diffusion-reaction" => gen_diffusion_reaction(
                &grid,
                &DiffusionReactionParams {
                    du: d.diffusion.du,
                    dv: d.diffusion.dv,
                    k: d.diffusion.k,
                    store_every: d.store_every,
                    burn_in: d.burn_in,
                },
                seed,
            ),
            "swe" => gen_swe_dam_break(
                &grid,
                &SweParams {
                    gravity: d.swe.gravity,
                    radius: match d.swe.r_c {
                        Some(r) => RadiusSpec::Fixed(r),
                        None => RadiusSpec::Sampled,
                    },
                    store_every: d.store_every,
                    burn_in: d.burn_in,
                },
                seed,
            ),
            "heat-laser" => {
                let total = d.burn_in + (d.steps - 1) * d.store_every;
                let path = raster_path(
                    &grid,
                    d.heat.raster_lines,
                    total.max(d.heat.raster_lines),
                    d.heat.q0,
                    d.heat.sigma,
                    (d.heat.conductivity, d.heat.density, d.heat.heat_capacity),
                    seed,
                );
                gen_heat_laser(
                    &grid,
                    &path,
                    &HeatParams {
                        initial_temp: d.heat.initial_temp,
                        store_every: d.store_every,
                        burn_in: d.burn_in,
                    },
                )
            }
            "constant" => gen_constant(
                &grid,
                &ConstantParams {
                    modes: d.constant.modes,
                    amplitude: d.constant.amplitude,
                    offset: d.constant.offset,
                },
                seed,
            ),
            other => Err(Error::invalid(format!("unknown dataset kind `{other}`"))),
        }
    }

    /// Generate the train/test splits and a manifest. Per-sample seeds are
    /// `seed + i` (train) and `seed + 10000 + i` (test).
    pub fn generate(&self) -> Result<(usize, usize)> {
        let dir = self.data_dir();
        std::fs::create_dir_all(&dir)?;
        let d = &self.cfg.dataset;
        let mut manifest = String::new();
        manifest.push_str(&format!(
            "kind = \"{}\"\nseed = {}\ntrain = {}\ntest = {}\n\n",
            d.kind, self.cfg.seed, d.train_samples, d.test_samples
        ));
        for i in 0..d.train_samples {
            let ds = self.generate_one(self.cfg.seed + i as u64)?;
            let path = self.sample_path("train", i);
            datagen::write_dataset(&ds, &path)?;
            manifest.push_str(&format!("[[sample]]\nsplit = \"train\"\nfile = \"{}\"\n", file_name(&path)));
        }
        for i in 0..d.test_samples {
            let ds = self.generate_one(self.cfg.seed + 10_000 + i as u64)?;
            let path = self.sample_path("test", i);
            datagen::write_dataset(&ds, &path)?;
            manifest.push_str(&format!("[[sample]]\nsplit = \"test\"\nfile = \"{}\"\n", file_name(&path)));
        }
        std::fs::write(dir.join("manifest.toml"), manifest)?;
        Ok((d.train_samples, d.test_samples))
    }

    pub fn load_split(&self, split: &str) -> Result<Vec<Dataset>> {
        let count = match split {
            "train" => self.cfg.dataset.train_samples,
            "test" => self.cfg.dataset.test_samples,
            other => return Err(Error::invalid(format!("unknown split `{other}`"))),
        };
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            let path = self.sample_path(split, i);
            if !path.is_file() {
                return Err(Error::invalid(format!(
                    "missing dataset `{}`; run `generate` first",
                    path.display()
                )));
            }
            out.push(datagen::read_dataset(&path)?);
        }
        Ok(out)
    }

    // ------------------------------------------------------------ train-ae --

    /// Train one autoencoder per roster field (normalization statistics
    /// come from the training split only). Checkpoints include the
    /// optimizer state so `resume` continues the loss curve.
    pub fn train_ae(&self, resume: bool) -> Result<Vec<(String, AeTrainReport)>> {
        let train = self.load_split("train")?;
        let refs: Vec<&Dataset> = train.iter().collect();
        std::fs::create_dir_all(self.models_dir())?;
        let (solution, condition) = self.cfg.rosters()?;
        let mut reports = Vec::new();
        for (fi, rf) in solution.iter().chain(&condition).enumerate() {
            let path = self.ae_path(&rf.name);
            let opt_cfg = AdamConfig::with_lr(self.cfg.ae.lr);
            let (mut model, mut opt, epoch_offset) = if resume && path.is_file() {
                let (model, opt) = AutoencoderModel::load(&path, Some(opt_cfg))?;
                let offset = csv_epochs(&self.loss_csv_path(&rf.name))?;
                (model, opt.unwrap_or_else(|| Adam::new(opt_cfg)), offset)
            } else {
                let series: Vec<&FieldSeries> = refs
                    .iter()
                    .map(|d| d.series_by_name(&rf.name))
                    .collect::<Result<_>>()?;
                let norm = NormStats::compute(&series);
                let model =
                    AutoencoderModel::new(self.cfg.ae_spec(&rf.name)?, norm, self.cfg.seed + fi as u64)?;
                (model, Adam::new(opt_cfg), 0)
            };
            let patches = collect_patches(&refs, &rf.name, &model.norm, self.cfg.ae.patch)?;
            let cfg = AeTrainConfig {
                epochs: self.cfg.ae.epochs,
                batch: self.cfg.ae.batch,
                steps_per_epoch: self.cfg.ae.steps_per_epoch,
                optimizer: opt_cfg,
                val_fraction: self.cfg.ae.val_fraction,
                seed: self.cfg.seed + 100 + fi as u64 + epoch_offset as u64,
            };
            let report = train_autoencoder(&mut model, &patches, &cfg, &mut opt, epoch_offset)?;
            model.save(&path, Some(&opt))?;
            self.append_ae_loss_csv(&rf.name, &report, epoch_offset == 0)?;
            if let Some(epoch) = report.diverged_at {
                return Err(Error::Diverged { epoch });
            }
            reports.push((rf.name.clone(), report));
        }
        Ok(reports)
    }

    fn loss_csv_path(&self, field: &str) -> PathBuf {
        self.models_dir().join(format!("ae_{field}_loss.csv"))
    }

    fn append_ae_loss_csv(&self, field: &str, report: &AeTrainReport, fresh: bool) -> Result<()> {
        let path = self.loss_csv_path(field);
        let mut w = open_csv(&path, fresh, "epoch,train_loss,val_loss")?;
        for e in &report.epochs {
            writeln!(w, "{},{},{}", e.epoch, e.train_loss, e.val_loss)?;
        }
        Ok(())
    }

    // ------------------------------------------------------------ train-ti --

    pub fn load_autoencoders(&self) -> Result<Vec<AutoencoderModel>> {
        let (solution, condition) = self.cfg.rosters()?;
        let mut models = Vec::new();
        for rf in solution.iter().chain(&condition) {
            let path = self.ae_path(&rf.name);
            if !path.is_file() {
                return Err(Error::invalid(format!(
                    "missing autoencoder checkpoint `{}`; run `train-ae` before `train-ti`",
                    path.display()
                )));
            }
            models.push(AutoencoderModel::load(&path, None)?.0);
        }
        Ok(models)
    }

    pub fn encode_split(&self, aes: &[AutoencoderModel], split: &str) -> Result<Vec<EncodedSample>> {
        let spec = self.cfg.ti_spec()?;
        self.load_split(split)?
            .iter()
            .map(|ds| encode_sample(&spec, aes, ds))
            .collect()
    }

    /// Train the time integrator on the frozen autoencoders' latents.
    pub fn train_ti(&self, resume: bool) -> Result<TiTrainReport> {
        let aes = self.load_autoencoders()?;
        let encoded = self.encode_split(&aes, "train")?;
        let opt_cfg = AdamConfig::with_lr(self.cfg.ti.lr);
        let path = self.ti_path();
        let (mut model, mut opt, epoch_offset) = if resume && path.is_file() {
            let (model, opt) = TimeIntegratorModel::load(&path, Some(opt_cfg))?;
            let offset = csv_epochs(&self.models_dir().join("ti_loss.csv"))?;
            (model, opt.unwrap_or_else(|| Adam::new(opt_cfg)), offset)
        } else {
            let model = TimeIntegratorModel::new(self.cfg.ti_spec()?, self.cfg.seed + 500)?;
            (model, Adam::new(opt_cfg), 0)
        };
        let cfg = TiTrainConfig {
            epochs: self.cfg.ti.epochs,
            windows_per_epoch: self.cfg.ti.windows_per_epoch,
            optimizer: opt_cfg,
            val_fraction: self.cfg.ti.val_fraction,
            train_window: self.cfg.ti.train_window.map(|[a, b]| (a, b)),
            seed: self.cfg.seed + 900 + epoch_offset as u64,
        };
        let report = train_ti(&mut model, &encoded, None, &cfg, &mut opt, epoch_offset)?;
        model.save(&path, Some(&opt))?;
        let mut w = open_csv(
            &self.models_dir().join("ti_loss.csv"),
            epoch_offset == 0,
            "epoch,epsilon,train_loss,val_loss",
        )?;
        for e in &report.epochs {
            writeln!(w, "{},{},{},{}", e.epoch, e.epsilon, e.train_loss, e.val_loss)?;
        }
        drop(w);
        if let Some(epoch) = report.diverged_at {
            return Err(Error::Diverged { epoch });
        }
        Ok(report)
    }

    // ------------------------------------------------------------- rollout --

    pub fn load_integrator(&self) -> Result<TimeIntegratorModel> {
        let path = self.ti_path();
        if !path.is_file() {
            return Err(Error::invalid(format!(
                "missing integrator checkpoint `{}`; run `train-ti` first",
                path.display()
            )));
        }
        Ok(TimeIntegratorModel::load(&path, None)?.0)
    }

    fn build_plan(
        &self,
        aes: &[AutoencoderModel],
        ti: &TimeIntegratorModel,
        ds: &Dataset,
    ) -> Result<RolloutPlan> {
        let horizon = self.cfg.horizon();
        let boundary: Vec<AxisDirective> = if self.cfg.rollout.boundary.is_empty() {
            vec![AxisDirective::Free; ds.grid.dims()]
        } else {
            self.cfg
                .rollout
                .boundary
                .iter()
                .map(|text| {
                    Ok(match crate::config::parse_directive(text)? {
                        Directive::Free => AxisDirective::Free,
                        Directive::Periodic => AxisDirective::Periodic,
                        Directive::Dirichlet(value) => {
                            let mut etas = Vec::new();
                            for rf in &ti.spec.solution {
                                let ae = aes
                                    .iter()
                                    .find(|m| m.spec.field == rf.name)
                                    .ok_or_else(|| {
                                        Error::invalid(format!("no autoencoder for `{}`", rf.name))
                                    })?;
                                etas.push(encode_boundary_patch(ae, value)?);
                            }
                            AxisDirective::Dirichlet(etas)
                        }
                    })
                })
                .collect::<Result<_>>()?
        };
        let decode = match &self.cfg.rollout.decode {
            None => DecodeSet::All,
            Some(d) => crate::config::parse_decode(d, ti.spec.history + horizon)?,
        };
        Ok(RolloutPlan {
            initial: ds.solutions().into_iter().cloned().collect(),
            conditions: ds.conditions().into_iter().cloned().collect(),
            horizon,
            boundary,
            decode,
        })
    }

    /// Roll out every test sample and write prediction containers (and
    /// optional PGM frames).
    pub fn rollout(&self) -> Result<usize> {
        let aes = self.load_autoencoders()?;
        let ti = self.load_integrator()?;
        let tests = self.load_split("test")?;
        let dir = self.pred_dir();
        std::fs::create_dir_all(&dir)?;
        for (i, ds) in tests.iter().enumerate() {
            let plan = self.build_plan(&aes, &ti, ds)?;
            let result = rollout(&aes, &ti, &plan)?;
            debug_assert_eq!(result.decode_calls_during_stepping, 0);
            let mut series = Vec::new();
            for rf in &ti.spec.solution {
                series.push(prediction_series(&plan, &result, &rf.name, ti.spec.history)?);
            }
            let grid = series[0].grid.clone();
            let pred = Dataset {
                grid,
                series,
                meta: vec![("generator".into(), "rollout".into())],
            };
            datagen::write_dataset(&pred, &dir.join(format!("pred_{i:03}.cmls")))?;
            if self.cfg.rollout.dump_pgm {
                let frames = dir.join("frames");
                std::fs::create_dir_all(&frames)?;
                for (t, fields) in &result.decoded {
                    for f in fields {
                        crate::pgm::dump_field(
                            f,
                            self.cfg.rollout.dump_z,
                            &frames.join(format!("{}_{i:03}_t{t:04}.pgm", f.name)),
                        )?;
                    }
                }
            }
        }
        Ok(tests.len())
    }

    // ---------------------------------------------------------------- eval --

    /// nRMSE of the stored predictions against ground truth, side by side
    /// with the persistence baseline; writes the CSV reports.
    pub fn eval(&self) -> Result<EvalSummary> {
        let th = self.cfg.ti.history;
        let tests = self.load_split("test")?;
        let dir = self.pred_dir();
        let mut preds = Vec::with_capacity(tests.len());
        for i in 0..tests.len() {
            let path = dir.join(format!("pred_{i:03}.cmls"));
            if !path.is_file() {
                return Err(Error::invalid(format!(
                    "missing prediction `{}`; run `rollout` first",
                    path.display()
                )));
            }
            preds.push(datagen::read_dataset(&path)?);
        }
        // compare on the common window
        let common = preds
            .iter()
            .zip(&tests)
            .map(|(p, g)| p.grid.steps.min(g.grid.steps))
            .min()
            .unwrap_or(0);
        let cut = |samples: &[Dataset]| -> Vec<Vec<FieldSeries>> {
            samples
                .iter()
                .map(|d| d.solutions().into_iter().map(|s| s.truncated(common)).collect())
                .collect()
        };
        let pred_cut = cut(&preds);
        let gt_cut = cut(&tests);
        fn as_refs(v: &[Vec<FieldSeries>]) -> Vec<Vec<&FieldSeries>> {
            v.iter().map(|s| s.iter().collect()).collect()
        }
        let model = nrmse(&as_refs(&pred_cut), &as_refs(&gt_cut), th)?;
        let baseline = persistence_baseline(&as_refs(&gt_cut), th)?;

        let edir = self.out.join("eval");
        std::fs::create_dir_all(&edir)?;
        write_report_csv(&edir.join("report.csv"), &model, Some(&baseline))?;
        write_per_timestep_csv(&edir.join("per_timestep.csv"), &model, Some(&baseline))?;
        if let Some(t_melt) = self.cfg.eval.melt_temp {
            if self.cfg.dataset.extents.len() == 3 {
                let mut w = open_csv(&edir.join("melt_depth.csv"), true, "sample,timestep,gt_depth,pred_depth")?;
                for (i, (g, p)) in gt_cut.iter().zip(&pred_cut).enumerate() {
                    let gd = melt_pool_depth(&g[0], t_melt)?;
                    let pd = melt_pool_depth(&p[0], t_melt)?;
                    for (t, (a, b)) in gd.iter().zip(&pd).enumerate() {
                        writeln!(w, "{i},{t},{a},{b}")?;
                    }
                }
            }
        }
        Ok(EvalSummary { model, baseline })
    }

    // --------------------------------------------------------------- sweep --

    /// Run the configured ablation axis end to end and write a comparison
    /// CSV; each value gets its own subdirectory and checkpoints.
    pub fn sweep(&self) -> Result<Vec<(String, f64, f64)>> {
        let sweep = self
            .cfg
            .sweep
            .clone()
            .ok_or_else(|| Error::invalid("config has no [sweep] section"))?;
        // data is shared across values: generate once into the base dir
        if self.cfg.dataset.path.is_none() && !self.sample_path("train", 0).is_file() {
            self.generate()?;
        }
        let mut rows = Vec::new();
        for value in &sweep.values {
            let mut cfg = self.cfg.clone();
            cfg.dataset.path = Some(self.data_dir());
            match (sweep.axis.as_str(), value) {
                ("latent", crate::config::SweepValue::Size(v)) => cfg.ae.latent = *v,
                ("history", crate::config::SweepValue::Size(v)) => cfg.ti.history = *v,
                ("train-window", crate::config::SweepValue::Window(w)) => {
                    cfg.ti.train_window = Some(*w)
                }
                _ => return Err(Error::invalid("sweep axis/value mismatch")),
            }
            let sub = Pipeline::new(cfg, self.out.join("sweep").join(format!("{}_{value}", sweep.axis)))?;
            sub.train_ae(false)?;
            sub.train_ti(false)?;
            sub.rollout()?;
            let summary = sub.eval()?;
            rows.push((
                value.to_string(),
                summary.model.aggregate,
                summary.baseline.aggregate,
            ));
        }
        let mut w = open_csv(
            &self.out.join("sweep").join("sweep.csv"),
            true,
            &format!("{},nrmse,baseline_nrmse", sweep.axis),
        )?;
        for (v, m, b) in &rows {
            writeln!(w, "{v},{m},{b}")?;
        }
        Ok(rows)
    }
}

fn file_name(path: &Path) -> String {
    path.file_name().unwrap_or_default().to_string_lossy().into_owned()
}

/// Open a CSV for writing; `fresh` truncates and writes the header,
/// otherwise appends (creating the header if the file is new).
fn open_csv(path: &Path, fresh: bool, header: &str) -> Result<std::io::BufWriter<std::fs::File>> {
    let existed = path.is_file();
    let file = if fresh {
        std::fs::File::create(path)?
    } else {
        std::fs::OpenOptions::new().create(true).append(true).open(path)?
    };
    let mut w = std::io::BufWriter::new(file);
    if fresh || !existed {
        writeln!(w, "{header}")?;
    }
    Ok(w)
}

/// Number of epoch rows already in a loss CSV (for resume bookkeeping).
fn csv_epochs(path: &Path) -> Result<usize> {
    if !path.is_file() {
        return Ok(0);
    }
    let text = std::fs::read_to_string(path)?;
    Ok(text.lines().skip(1).filter(|l| !l.is_empty()).count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{
        AeConfig, ConstantConfig, DatasetConfig, DiffusionConfig, EvalConfig, HeatConfig,
        RolloutConfig, ScheduleConfig, SweConfig, TiConfig,
    };

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            seed: 7,
            out: None,
            dataset: DatasetConfig {
                kind: "diffusion-reaction".into(),
                path: None,
                extents: vec![16, 16],
                lengths: vec![1.0, 1.0],
                dt: 0.01,
                steps: 10,
                train_samples: 2,
                test_samples: 1,
                store_every: 2,
                burn_in: 0,
                diffusion: DiffusionConfig::default(),
                swe: SweConfig::default(),
                heat: HeatConfig::default(),
                constant: ConstantConfig::default(),
            },
            ae: AeConfig {
                latent: 4,
                widths: vec![4, 8],
                epochs: 2,
                batch: 16,
                steps_per_epoch: Some(8),
                ..AeConfig::default()
            },
            ti: TiConfig {
                history: 3,
                gamma: 8,
                unroll: 2,
                spatial_hidden: vec![8],
                temporal_hidden: vec![8],
                epochs: 2,
                windows_per_epoch: Some(8),
                schedule: ScheduleConfig {
                    warmup: 1,
                    total: None,
                    eps_min: 0.0,
                },
                ..TiConfig::default()
            },
            rollout: RolloutConfig::default(),
            eval: EvalConfig::default(),
            sweep: None,
        }
    }

    #[test]
    fn full_pipeline_runs_end_to_end_and_is_deterministic() {
        let run = |dir: &Path| -> (f64, f64) {
            let p = Pipeline::new(tiny_config(), dir).unwrap();
            p.generate().unwrap();
            p.train_ae(false).unwrap();
            p.train_ti(false).unwrap();
            p.rollout().unwrap();
            let s = p.eval().unwrap();
            (s.model.aggregate, s.baseline.aggregate)
        };
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let a = run(d1.path());
        let b = run(d2.path());
        assert_eq!(a, b);
        assert!(a.0.is_finite() && a.1.is_finite());
        // artifacts exist
        assert!(d1.path().join("models/ae_u.cmls").is_file());
        assert!(d1.path().join("models/ae_v.cmls").is_file());
        assert!(d1.path().join("models/ti.cmls").is_file());
        assert!(d1.path().join("pred/pred_000.cmls").is_file());
        assert!(d1.path().join("eval/report.csv").is_file());
        assert!(d1.path().join("eval/per_timestep.csv").is_file());
        assert!(d1.path().join("data/manifest.toml").is_file());
    }

    #[test]
    fn train_ti_requires_autoencoders_first() {
        let dir = tempfile::tempdir().unwrap();
        let p = Pipeline::new(tiny_config(), dir.path()).unwrap();
        p.generate().unwrap();
        let err = p.train_ti(false).unwrap_err();
        assert!(err.to_string().contains("train-ae"), "got: {err}");
    }

    #[test]
    fn resume_continues_the_loss_curve_monotonically() {
        let dir = tempfile::tempdir().unwrap();
        let p = Pipeline::new(tiny_config(), dir.path()).unwrap();
        p.generate().unwrap();
        p.train_ae(false).unwrap();
        p.train_ae(true).unwrap();
        let text = std::fs::read_to_string(dir.path().join("models/ae_u_loss.csv")).unwrap();
        let epochs: Vec<usize> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').next().unwrap().parse().unwrap())
            .collect();
        assert_eq!(epochs, vec![0, 1, 2, 3]);

        p.train_ti(false).unwrap();
        p.train_ti(true).unwrap();
        let text = std::fs::read_to_string(dir.path().join("models/ti_loss.csv")).unwrap();
        let epochs: Vec<usize> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').next().unwrap().parse().unwrap())
            .collect();
        assert_eq!(epochs, vec![0, 1, 2, 3]);
    }

    #[test]
    fn sweep_emits_checkpoints_and_comparison_csv() {
        let mut cfg = tiny_config();
        cfg.sweep = Some(crate::config::SweepConfig {
            axis: "history".into(),
            values: vec![
                crate::config::SweepValue::Size(2),
                crate::config::SweepValue::Size(3),
                crate::config::SweepValue::Size(4),
            ],
        });
        let dir = tempfile::tempdir().unwrap();
        let p = Pipeline::new(cfg, dir.path()).unwrap();
        let rows = p.sweep().unwrap();
        assert_eq!(rows.len(), 3);
        for th in [2, 3, 4] {
            assert!(dir
                .path()
                .join(format!("sweep/history_{th}/models/ti.cmls"))
                .is_file());
        }
        let text = std::fs::read_to_string(dir.path().join("sweep/sweep.csv")).unwrap();
        assert!(text.starts_with("history,nrmse,baseline_nrmse\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
