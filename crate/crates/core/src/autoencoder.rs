//! Per-field subdomain autoencoders.
//!
//! One model instance per physical field. The encoder compresses a
//! normalized patch (extent `patch` per axis) through stride-2 conv stages
//! to a latent vector of length `latent`; the decoder mirrors it with
//! transposed convolutions. No activation bounds the latent: the time
//! integrator consumes raw latent vectors.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{seq::SliceRandom, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::container::Container;
use crate::decomp::{self, NormStats, SubdomainLattice};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::nn::{
    Activation, Adam, AdamConfig, ConvSpec, LayerSpec, Network, ParamStore, Tape, Tensor,
};

/// Per-subdomain latent vectors for one field at one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentFrame {
    pub lattice: Vec<usize>,
    pub latent: usize,
    pub field: String,
    pub timestep: usize,
    /// Row-major [patch count x latent].
    pub data: Vec<f64>,
}

impl LatentFrame {
    pub fn count(&self) -> usize {
        self.lattice.iter().product()
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.data[i * self.latent..(i + 1) * self.latent]
    }

    pub fn vector_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.latent..(i + 1) * self.latent]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Structural hyperparameters of one autoencoder.
#[derive(Debug, Clone, PartialEq)]
pub struct AeSpec {
    pub field: String,
    pub dims: usize,
    pub patch: usize,
    pub latent: usize,
    /// Channel widths of the stride-2 conv stages.
    pub widths: Vec<usize>,
    pub activation: Activation,
}

impl Default for AeSpec {
    fn default() -> Self {
        AeSpec {
            field: String::new(),
            dims: 2,
            patch: 8,
            latent: 16,
            widths: vec![16, 32],
            activation: Activation::Tanh,
        }
    }
}

#[derive(Debug)]
pub struct AutoencoderModel {
    pub spec: AeSpec,
    pub norm: NormStats,
    pub store: ParamStore,
    pub encoder: Network,
    pub decoder: Network,
    decode_calls: AtomicU64,
}

impl Clone for AutoencoderModel {
    fn clone(&self) -> Self {
        AutoencoderModel {
            spec: self.spec.clone(),
            norm: self.norm,
            store: self.store.clone(),
            encoder: self.encoder.clone(),
            decoder: self.decoder.clone(),
            decode_calls: AtomicU64::new(self.decode_calls.load(Ordering::Relaxed)),
        }
    }
}

impl AutoencoderModel {
    pub fn new(spec: AeSpec, norm: NormStats, seed: u64) -> Result<Self> {
        let stages = spec.widths.len();
        if stages == 0 {
            return Err(Error::invalid("autoencoder needs at least one conv stage"));
        }
        let shrink = 1usize << stages;
        if spec.patch % shrink != 0 || spec.patch / shrink == 0 {
            return Err(Error::invalid(format!(
                "patch extent {} cannot pass {} stride-2 stages",
                spec.patch, stages
            )));
        }
        let bottleneck = spec.patch / shrink;
        let flat = spec.widths[stages - 1] * bottleneck.pow(spec.dims as u32);

        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let mut enc = Vec::new();
        let mut c_prev = 1;
        for &w in &spec.widths {
            enc.push(LayerSpec::Conv(ConvSpec {
                dims: spec.dims,
                c_in: c_prev,
                c_out: w,
                kernel: 3,
                stride: 2,
            }));
            enc.push(LayerSpec::Activation(spec.activation));
            c_prev = w;
        }
        enc.push(LayerSpec::Reshape { shape: vec![flat] });
        enc.push(LayerSpec::Dense {
            input: flat,
            output: spec.latent,
        });
        let mut input_shape = vec![1];
        input_shape.extend(vec![spec.patch; spec.dims]);
        let encoder = Network::new(&mut store, "enc", &input_shape, enc, &mut rng)?;

        let mut dec = vec![
            LayerSpec::Dense {
                input: spec.latent,
                output: flat,
            },
            LayerSpec::Activation(spec.activation),
        ];
        let mut bshape = vec![spec.widths[stages - 1]];
        bshape.extend(vec![bottleneck; spec.dims]);
        dec.push(LayerSpec::Reshape { shape: bshape });
        for s in (0..stages).rev() {
            let c_out = if s == 0 { 1 } else { spec.widths[s - 1] };
            dec.push(LayerSpec::ConvTranspose(ConvSpec {
                dims: spec.dims,
                c_in: spec.widths[s],
                c_out,
                kernel: 3,
                stride: 2,
            }));
            if s > 0 {
                dec.push(LayerSpec::Activation(spec.activation));
            }
        }
        let decoder = Network::new(&mut store, "dec", &[spec.latent], dec, &mut rng)?;
        debug_assert_eq!(decoder.output_shape, input_shape);

        Ok(AutoencoderModel {
            spec,
            norm,
            store,
            encoder,
            decoder,
            decode_calls: AtomicU64::new(0),
        })
    }

    pub fn patch_len(&self) -> usize {
        self.spec.patch.pow(self.spec.dims as u32)
    }

    /// How many times `decode` ran on this instance; rollout uses this to
    /// assert the time loop never leaves latent space.
    pub fn decode_calls(&self) -> u64 {
        self.decode_calls.load(Ordering::Relaxed)
    }

    fn patches_tensor(&self, patches: &[Vec<f64>]) -> Tensor {
        let plen = self.patch_len();
        let mut shape = vec![patches.len(), 1];
        shape.extend(vec![self.spec.patch; self.spec.dims]);
        let mut data = Vec::with_capacity(patches.len() * plen);
        for p in patches {
            debug_assert_eq!(p.len(), plen);
            data.extend_from_slice(p);
        }
        Tensor::new(shape, data)
    }

    /// Encode a lattice of normalized patches to one latent vector each.
    pub fn encode(&self, lattice: &SubdomainLattice) -> Result<LatentFrame> {
        if lattice.patch != self.spec.patch || lattice.dims != self.spec.dims {
            return Err(Error::WidthMismatch {
                context: format!("encode `{}` patch extent", self.spec.field),
                expected: self.spec.patch,
                actual: lattice.patch,
            });
        }
        let mut tape = Tape::new();
        let x = tape.input_owned(self.patches_tensor(&lattice.patches));
        let z = self.encoder.forward(&mut tape, &self.store, x)?;
        Ok(LatentFrame {
            lattice: lattice.lattice.clone(),
            latent: self.spec.latent,
            field: self.spec.field.clone(),
            timestep: lattice.timestep,
            data: tape.values(z).to_vec(),
        })
    }

    /// Decode latent vectors back to patches; `denormalize` restores
    /// physical units via the stored statistics.
    pub fn decode(&self, frame: &LatentFrame, denormalize: bool) -> Result<SubdomainLattice> {
        if frame.latent != self.spec.latent {
            return Err(Error::WidthMismatch {
                context: format!("decode `{}` latent length", self.spec.field),
                expected: self.spec.latent,
                actual: frame.latent,
            });
        }
        self.decode_calls.fetch_add(1, Ordering::Relaxed);
        let n = frame.count();
        let mut tape = Tape::new();
        let z = tape.input(&Tensor::new(vec![n, self.spec.latent], frame.data.clone()));
        let y = self.decoder.forward(&mut tape, &self.store, z)?;
        let plen = self.patch_len();
        let out = tape.values(y);
        let mut patches = Vec::with_capacity(n);
        for i in 0..n {
            let mut p = out[i * plen..(i + 1) * plen].to_vec();
            if denormalize {
                for v in &mut p {
                    *v = self.norm.denormalize(*v);
                }
            }
            patches.push(p);
        }
        Ok(SubdomainLattice {
            patch: self.spec.patch,
            dims: self.spec.dims,
            lattice: frame.lattice.clone(),
            field: frame.field.clone(),
            timestep: frame.timestep,
            patches,
        })
    }

    /// Normalize, decompose, and encode one physical-space field.
    pub fn encode_field(&self, field: &Field, timestep: usize) -> Result<LatentFrame> {
        let normed = self.norm.normalize_field(field);
        let mut lat = decomp::decompose(&normed, self.spec.patch)?;
        lat.timestep = timestep;
        let mut frame = self.encode(&lat)?;
        frame.timestep = timestep;
        Ok(frame)
    }

    /// Decode and reassemble to a physical-space field.
    pub fn decode_to_field(&self, frame: &LatentFrame) -> Result<Field> {
        let lat = self.decode(frame, true)?;
        decomp::reassemble(&lat)
    }

    /// Relative L2 reconstruction error over a set of normalized patches.
    pub fn reconstruction_error(&self, patches: &[Vec<f64>]) -> Result<f64> {
        let mut num = 0.0;
        let mut den = 0.0;
        for chunk in patches.chunks(256) {
            let mut tape = Tape::new();
            let x = tape.input_owned(self.patches_tensor(chunk));
            let z = self.encoder.forward(&mut tape, &self.store, x)?;
            let y = self.decoder.forward(&mut tape, &self.store, z)?;
            let out = tape.values(y);
            let plen = self.patch_len();
            for (i, p) in chunk.iter().enumerate() {
                for (a, b) in out[i * plen..(i + 1) * plen].iter().zip(p) {
                    num += (a - b) * (a - b);
                    den += b * b;
                }
            }
        }
        Ok((num / den.max(1e-300)).sqrt())
    }

    pub fn save(&self, path: &Path, opt: Option<&Adam>) -> Result<()> {
        let mut c = Container::new();
        c.set("kind", "autoencoder");
        c.set("field", &self.spec.field);
        c.set("dims", self.spec.dims);
        c.set("patch", self.spec.patch);
        c.set("latent", self.spec.latent);
        c.set(
            "widths",
            self.spec
                .widths
                .iter()
                .map(|w| w.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        c.set("activation", self.spec.activation.name());
        c.set("norm.mean", self.norm.mean);
        c.set("norm.std", self.norm.std);
        c.set("norm.clamped", if self.norm.clamped { 1 } else { 0 });
        for (i, layer) in self.encoder.layers.iter().chain(&self.decoder.layers).enumerate() {
            c.set(format!("layer.{i}"), layer.spec.encode());
        }
        c.push_param_store(&self.store);
        if let Some(opt) = opt {
            c.push_adam(opt);
        }
        c.write(path)
    }

    pub fn load(path: &Path, opt_cfg: Option<AdamConfig>) -> Result<(Self, Option<Adam>)> {
        let c = Container::read(path)?;
        if c.get("kind") != Some("autoencoder") {
            return Err(Error::format(format!(
                "`{}` is not an autoencoder checkpoint",
                path.display()
            )));
        }
        let spec = AeSpec {
            field: c.require("field")?.to_string(),
            dims: c.require_parsed("dims")?,
            patch: c.require_parsed("patch")?,
            latent: c.require_parsed("latent")?,
            widths: c.require_list("widths")?,
            activation: Activation::parse(c.require("activation")?)?,
        };
        let norm = NormStats {
            mean: c.require_parsed("norm.mean")?,
            std: c.require_parsed("norm.std")?,
            clamped: c.get("norm.clamped") == Some("1"),
        };
        let mut model = AutoencoderModel::new(spec, norm, 0)?;
        c.read_param_store_into(&mut model.store)?;
        let opt = match opt_cfg {
            Some(cfg) => c.read_adam(cfg, model.store.len())?,
            None => None,
        };
        Ok((model, opt))
    }
}

/// Normalize and decompose every frame of every sample of one field,
/// returning the flat patch pool used for training.
pub fn collect_patches(
    samples: &[&crate::datagen::Dataset],
    field: &str,
    norm: &NormStats,
    patch: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut patches = Vec::new();
    for ds in samples {
        let s = ds.series_by_name(field)?;
        for t in 0..s.steps() {
            let f = norm.normalize_field(&s.field(t));
            let lat = decomp::decompose(&f, patch)?;
            patches.extend(lat.patches);
        }
    }
    Ok(patches)
}

#[derive(Debug, Clone)]
pub struct AeTrainConfig {
    pub epochs: usize,
    pub batch: usize,
    /// Cap on optimizer steps per epoch; None uses every batch.
    pub steps_per_epoch: Option<usize>,
    pub optimizer: AdamConfig,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for AeTrainConfig {
    fn default() -> Self {
        AeTrainConfig {
            epochs: 20,
            batch: 64,
            steps_per_epoch: None,
            optimizer: AdamConfig::default(),
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AeEpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct AeTrainReport {
    pub epochs: Vec<AeEpochStats>,
    pub best_epoch: usize,
    pub best_val: f64,
    /// Set when training hit a non-finite loss; the model was rolled back
    /// to the best checkpoint seen before the failure.
    pub diverged_at: Option<usize>,
}

/// MSE reconstruction training over a pool of normalized patches. Keeps the
/// best-on-validation parameters; on a non-finite loss the model is rolled
/// back and the report records the epoch.
pub fn train_autoencoder(
    model: &mut AutoencoderModel,
    patches: &[Vec<f64>],
    cfg: &AeTrainConfig,
    opt: &mut Adam,
    epoch_offset: usize,
) -> Result<AeTrainReport> {
    if patches.len() < 2 {
        return Err(Error::invalid("autoencoder training needs at least two patches"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..patches.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((patches.len() as f64 * cfg.val_fraction) as usize).min(patches.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let val_idx = val_idx.to_vec();
    let mut train_idx = train_idx.to_vec();

    let eval_loss = |model: &AutoencoderModel, idx: &[usize]| -> Result<f64> {
        let mut total = 0.0;
        let mut count = 0usize;
        for chunk in idx.chunks(cfg.batch.max(1)) {
            let batch: Vec<Vec<f64>> = chunk.iter().map(|&i| patches[i].clone()).collect();
            let t = model.patches_tensor(&batch);
            let mut tape = Tape::new();
            let x = tape.input(&t);
            let z = model.encoder.forward(&mut tape, &model.store, x)?;
            let y = model.decoder.forward(&mut tape, &model.store, z)?;
            let loss = tape.mse_vs(y, &t.data)?;
            total += tape.values(loss)[0] * chunk.len() as f64;
            count += chunk.len();
        }
        Ok(total / count.max(1) as f64)
    };

    let mut report = AeTrainReport {
        epochs: Vec::new(),
        best_epoch: epoch_offset,
        best_val: f64::INFINITY,
        diverged_at: None,
    };
    let mut best_params: Vec<Vec<f64>> =
        model.store.iter().map(|p| p.value.data.clone()).collect();

    'epochs: for e in 0..cfg.epochs {
        let epoch = epoch_offset + e;
        train_idx.shuffle(&mut rng);
        let mut steps = 0usize;
        let mut train_loss = 0.0;
        for chunk in train_idx.chunks(cfg.batch.max(1)) {
            if let Some(cap) = cfg.steps_per_epoch {
                if steps >= cap {
                    break;
                }
            }
            let batch: Vec<Vec<f64>> = chunk.iter().map(|&i| patches[i].clone()).collect();
            let t = model.patches_tensor(&batch);
            let mut tape = Tape::new();
            let x = tape.input(&t);
            let z = model.encoder.forward(&mut tape, &model.store, x)?;
            let y = model.decoder.forward(&mut tape, &model.store, z)?;
            let loss = tape.mse_vs(y, &t.data)?;
            let loss_val = tape.values(loss)[0];
            if !loss_val.is_finite() {
                report.diverged_at = Some(epoch);
                break 'epochs;
            }
            model.store.zero_grad();
            tape.backward(loss, &mut model.store)?;
            opt.step(&mut model.store)?;
            train_loss += loss_val;
            steps += 1;
        }
        train_loss /= steps.max(1) as f64;

        let val_loss = if val_idx.is_empty() {
            train_loss
        } else {
            eval_loss(model, &val_idx)?
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
        report.epochs.push(AeEpochStats {
            epoch,
            train_loss,
            val_loss,
        });
    }

    // retain the best-on-validation checkpoint
    for (src, p) in best_params.iter().zip(model.store.iter_mut()) {
        p.value.data.copy_from_slice(src);
    }
    Ok(report)
}
