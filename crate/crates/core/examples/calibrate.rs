// Scratch throughput calibration for acceptance budgets (not part of the
// deliverable test suite).

use std::time::Instant;

use patchflow_core::autoencoder::*;
use patchflow_core::config::*;
use patchflow_core::decomp::NormStats;
use patchflow_core::integrator::*;
use patchflow_core::nn::*;
use patchflow_core::pipeline::Pipeline;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "all".into());

    if which == "ae" || which == "all" {
        // AE training throughput: batch 64, p=8, widths 16/32, l=16
        let spec = AeSpec {
            field: "u".into(),
            dims: 2,
            patch: 8,
            latent: 16,
            widths: vec![16, 32],
            activation: Activation::Tanh,
        };
        let mut model = AutoencoderModel::new(spec, NormStats::identity(), 0).unwrap();
        let patches: Vec<Vec<f64>> = (0..512)
            .map(|i| (0..64).map(|j| ((i * 64 + j) as f64 * 0.37).sin()).collect())
            .collect();
        let cfg = AeTrainConfig {
            epochs: 4,
            batch: 64,
            steps_per_epoch: Some(50),
            optimizer: AdamConfig::default(),
            val_fraction: 0.0,
            seed: 0,
        };
        let mut opt = Adam::new(cfg.optimizer);
        let t0 = Instant::now();
        train_autoencoder(&mut model, &patches, &cfg, &mut opt, 0).unwrap();
        let dt = t0.elapsed().as_secs_f64();
        println!("AE: 200 steps of batch 64 in {dt:.2}s -> {:.1} steps/s", 200.0 / dt);
    }

    if which == "ti" || which == "all" {
        // TI window throughput: N=16, th=10, K=10, sol 32, hidden 64/64
        let spec = TiSpec {
            dims: 2,
            history: 10,
            gamma_width: 32,
            unroll: 10,
            policy: patchflow_core::decomp::NeighborPolicy::uniform(
                patchflow_core::decomp::AxisPolicy::Zero,
                2,
            ),
            solution: vec![RosterField::new("u", 16), RosterField::new("v", 16)],
            condition: vec![],
            activation: Activation::Relu,
            spatial_hidden: vec![64, 64],
            temporal_hidden: vec![64, 64],
            schedule: CurriculumSchedule {
                warmup: 1,
                total: 4,
                eps_min: 0.0,
            },
            loss_space: LossSpace::Latent,
        };
        let mut model = TimeIntegratorModel::new(spec, 0).unwrap();
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let data = vec![EncodedSample {
            lattice: vec![4, 4],
            solution: (0..60)
                .map(|_| (0..16 * 32).map(|_| rng.gen::<f64>() - 0.5).collect())
                .collect(),
            condition: vec![],
        }];
        let cfg = TiTrainConfig {
            epochs: 2,
            windows_per_epoch: Some(40),
            optimizer: AdamConfig::default(),
            val_fraction: 0.0,
            train_window: None,
            seed: 2,
        };
        let mut opt = Adam::new(cfg.optimizer);
        let t0 = Instant::now();
        train_ti(&mut model, &data, None, &cfg, &mut opt, 0).unwrap();
        let dt = t0.elapsed().as_secs_f64();
        println!("TI: 80 window updates in {dt:.2}s -> {:.1} windows/s", 80.0 / dt);
    }

    if which == "overfit" || which == "all" {
        // criterion-5 style: 32 smooth patches to rel L2 < 1e-2
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let patches: Vec<Vec<f64>> = (0..32)
            .map(|_| {
                let c: Vec<f64> = (0..9).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
                (0..64)
                    .map(|p| {
                        let (i, j) = (p / 8, p % 8);
                        let (x, y) = ((i as f64 + 0.5) / 8.0, (j as f64 + 0.5) / 8.0);
                        let mut acc = 0.0;
                        for k1 in 0..3 {
                            for k2 in 0..3 {
                                acc += c[k1 * 3 + k2]
                                    * (std::f64::consts::PI * k1 as f64 * x).cos()
                                    * (std::f64::consts::PI * k2 as f64 * y).cos();
                            }
                        }
                        acc
                    })
                    .collect()
            })
            .collect();
        let spec = AeSpec {
            field: "u".into(),
            dims: 2,
            patch: 8,
            latent: 16,
            widths: vec![16, 32],
            activation: Activation::Tanh,
        };
        let mut model = AutoencoderModel::new(spec, NormStats::identity(), 7).unwrap();
        let mut opt = Adam::new(AdamConfig::with_lr(3e-3));
        let t0 = Instant::now();
        for step in 0..5000 {
            let cfg = AeTrainConfig {
                epochs: 1,
                batch: 32,
                steps_per_epoch: Some(1),
                optimizer: AdamConfig::with_lr(3e-3),
                val_fraction: 0.0,
                seed: step,
            };
            train_autoencoder(&mut model, &patches, &cfg, &mut opt, 0).unwrap();
            if step % 250 == 0 || step == 4999 {
                let err = model.reconstruction_error(&patches).unwrap();
                println!(
                    "overfit step {}: rel L2 {err:.3e} ({:.0}s)",
                    step + 1,
                    t0.elapsed().as_secs_f64()
                );
                if err < 1e-2 {
                    println!("overfit reached 1e-2 at step {} in {:.0}s", step + 1, t0.elapsed().as_secs_f64());
                    break;
                }
            }
        }
    }

    if which == "desk" {
        // shortened criterion-7 pipeline probe
        let cfg = ExperimentConfig {
            seed: 42,
            out: None,
            dataset: DatasetConfig {
                kind: "diffusion-reaction".into(),
                path: None,
                extents: vec![32, 32],
                lengths: vec![1.0, 1.0],
                dt: 0.02,
                steps: 60,
                train_samples: 20,
                test_samples: 5,
                store_every: 5,
                burn_in: 40,
                diffusion: DiffusionConfig::default(),
                swe: SweConfig::default(),
                heat: HeatConfig::default(),
                constant: ConstantConfig::default(),
            },
            ae: AeConfig {
                patch: 8,
                latent: 16,
                widths: vec![16, 32],
                activation: "tanh".into(),
                epochs: 16,
                batch: 64,
                steps_per_epoch: Some(200),
                lr: 2e-3,
                val_fraction: 0.05,
            },
            ti: TiConfig {
                history: 10,
                gamma: 48,
                unroll: 10,
                spatial_hidden: vec![96, 96],
                temporal_hidden: vec![96, 96],
                activation: "relu".into(),
                neighbor_policy: vec!["zero".into(), "zero".into()],
                epochs: 30,
                windows_per_epoch: Some(150),
                lr: 1.5e-3,
                val_fraction: 0.1,
                train_window: None,
                loss_space: "latent".into(),
                schedule: ScheduleConfig {
                    warmup: 18,
                    total: None,
                    eps_min: 0.2,
                },
            },
            rollout: RolloutConfig::default(),
            eval: EvalConfig::default(),
            sweep: None,
        };
        let dir = std::env::temp_dir().join(format!("pf_desk_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = Pipeline::new(cfg, &dir).unwrap();
        let t0 = Instant::now();
        p.generate().unwrap();
        println!("generate: {:.1}s", t0.elapsed().as_secs_f64());
        let t1 = Instant::now();
        let reports = p.train_ae(false).unwrap();
        for (f, r) in &reports {
            println!("ae {f}: best val {:.3e}", r.best_val);
        }
        println!("train-ae: {:.1}s", t1.elapsed().as_secs_f64());
        let t2 = Instant::now();
        let r = p.train_ti(false).unwrap();
        println!(
            "train-ti: {:.1}s, best val {:.3e}, last train {:.3e}",
            t2.elapsed().as_secs_f64(),
            r.best_val,
            r.epochs.last().map(|e| e.train_loss).unwrap_or(f64::NAN)
        );
        // ---- diagnostics ----
        let aes = p.load_autoencoders().unwrap();
        let ti = p.load_integrator().unwrap();
        let tests = p.load_split("test").unwrap();
        // AE floor: encode-decode every test frame, score vs gt
        let mut floor_pred = Vec::new();
        for ds in &tests {
            let mut series = Vec::new();
            for s in ds.solutions() {
                let ae = aes.iter().find(|m| m.spec.field == s.name).unwrap();
                let mut values = Vec::new();
                for t in 0..s.steps() {
                    let frame = ae.encode_field(&s.field(t), t).unwrap();
                    let back = ae.decode_to_field(&frame).unwrap();
                    values.extend(back.values.iter().map(|&v| v as f32));
                }
                series.push(
                    patchflow_core::field::FieldSeries::new(
                        s.name.clone(),
                        s.role,
                        s.grid.clone(),
                        s.units.clone(),
                        values,
                    )
                    .unwrap(),
                );
            }
            floor_pred.push(series);
        }
        let gt_refs: Vec<Vec<&patchflow_core::field::FieldSeries>> =
            tests.iter().map(|d| d.solutions()).collect();
        let floor_refs: Vec<Vec<&patchflow_core::field::FieldSeries>> =
            floor_pred.iter().map(|s| s.iter().collect()).collect();
        let floor = patchflow_core::eval::nrmse(&floor_refs, &gt_refs, 10).unwrap();
        println!("AE-floor nRMSE (encode-decode only): {:.4e}", floor.aggregate);
        // latent scale + teacher-forced one-step error
        let spec = p.cfg.ti_spec().unwrap();
        let encoded = p.encode_split(&aes, "test").unwrap();
        let mut lat_sq = 0.0;
        let mut lat_n = 0usize;
        let mut step_err = 0.0;
        let mut step_ref = 0.0;
        let mut steps = 0;
        for es in &encoded {
            for v in &es.solution {
                lat_sq += v.iter().map(|x| x * x).sum::<f64>();
                lat_n += v.len();
            }
            for start in (0..es.steps() - spec.history).step_by(7) {
                let window = patchflow_core::integrator::WindowMatrices {
                    lattice: es.lattice.clone(),
                    solution: es.solution[start..start + spec.history].to_vec(),
                    condition: vec![],
                };
                let pred = ti.step_matrices(&window).unwrap();
                let gt = &es.solution[start + spec.history];
                step_err += pred.iter().zip(gt).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                step_ref += gt.iter().map(|x| x * x).sum::<f64>();
                steps += 1;
            }
        }
        // identity baseline: predict the window's newest frame
        let mut id_err = 0.0;
        for es in &encoded {
            for start in (0..es.steps() - spec.history).step_by(7) {
                let prev = &es.solution[start + spec.history - 1];
                let gt = &es.solution[start + spec.history];
                id_err += prev.iter().zip(gt).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            }
        }
        println!(
            "latent RMS {:.3}, one-step latent rel err {:.3e} (identity {:.3e}) over {steps} windows",
            (lat_sq / lat_n as f64).sqrt(),
            (step_err / step_ref).sqrt(),
            (id_err / step_ref).sqrt()
        );

        let t3 = Instant::now();
        p.rollout().unwrap();
        println!("rollout: {:.1}s", t3.elapsed().as_secs_f64());
        let s = p.eval().unwrap();
        println!(
            "eval: model {:.4e} baseline {:.4e} (total {:.0}s)",
            s.model.aggregate,
            s.baseline.aggregate,
            t0.elapsed().as_secs_f64()
        );
        for (i, (m, b)) in s.model.per_sample.iter().zip(&s.baseline.per_sample).enumerate() {
            println!("  sample {i}: model {m:.4e} baseline {b:.4e} -> {}", if m < b { "BEATS" } else { "LOSES" });
        }
        std::fs::remove_dir_all(&dir).ok();
    }
}
