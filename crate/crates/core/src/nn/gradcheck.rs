//! Central finite-difference verification of analytic gradients.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tape::{Tape, VarId};
use super::tensor::ParamStore;
use crate::error::Result;

/// Compares analytic gradients against central differences on up to
/// `samples` parameter entries chosen with `seed`. `build` must construct
/// the full forward pass to a scalar loss from the current parameter
/// values; the finite-difference side only reads the loss value, so it is
/// independent of the backward implementation it checks.
///
/// Returns max over sampled entries of
/// |analytic - cd| / max(|analytic|, |cd|, 1e-8).
pub fn grad_check<F>(
    store: &mut ParamStore,
    mut build: F,
    samples: usize,
    h: f64,
    seed: u64,
) -> Result<f64>
where
    F: FnMut(&ParamStore) -> Result<(Tape, VarId)>,
{
    assert!(h > 0.0 && h <= 1e-2, "h must be in (0, 1e-2], got {h}");

    store.zero_grad();
    let (tape, loss) = build(store)?;
    tape.backward(loss, store)?;
    let analytic: Vec<Vec<f64>> = store.iter().map(|p| p.grad.data.clone()).collect();

    let mut coords: Vec<(usize, usize)> = Vec::new();
    for (pi, p) in store.iter().enumerate() {
        for ei in 0..p.value.numel() {
            coords.push((pi, ei));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    coords.shuffle(&mut rng);
    coords.truncate(samples.max(1));

    let mut max_rel: f64 = 0.0;
    for (pi, ei) in coords {
        let orig = store.iter().nth(pi).unwrap().value.data[ei];
        let mut eval_at = |v: f64, store: &mut ParamStore| -> Result<f64> {
            store.iter_mut().nth(pi).unwrap().value.data[ei] = v;
            let (tape, loss) = build(store)?;
            Ok(tape.values(loss)[0])
        };
        let lp = eval_at(orig + h, store)?;
        let lm = eval_at(orig - h, store)?;
        store.iter_mut().nth(pi).unwrap().value.data[ei] = orig;
        let cd = (lp - lm) / (2.0 * h);
        let a = analytic[pi][ei];
        let rel = (a - cd).abs() / a.abs().max(cd.abs()).max(1e-8);
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Mlp, ParamStore, Tape, Tensor};
    use rand::Rng;

    #[test]
    fn linear_model_is_exact_to_rounding() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mlp = Mlp::new(&mut store, "lin", &[3, 2], Activation::Identity, &mut rng).unwrap();
        let x = Tensor::new(vec![1, 3], vec![0.3, -0.8, 1.1]);
        let target = vec![0.5, -0.25];
        let rel = grad_check(
            &mut store,
            |store| {
                let mut tape = Tape::new();
                let xin = tape.input(&x);
                let y = mlp.forward(&mut tape, store, xin)?;
                let loss = tape.mse_vs(y, &target)?;
                Ok((tape, loss))
            },
            64,
            1e-5,
            0,
        )
        .unwrap();
        assert!(rel < 1e-8, "rel err {rel}");
    }

    #[test]
    fn two_layer_tanh_network_matches_finite_differences() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mlp = Mlp::new(&mut store, "net", &[4, 8, 3], Activation::Tanh, &mut rng).unwrap();
        let x = Tensor::new(vec![2, 4], (0..8).map(|i| (i as f64) * 0.17 - 0.5).collect());
        let target: Vec<f64> = (0..6).map(|i| (i as f64) * 0.1).collect();
        let rel = grad_check(
            &mut store,
            |store| {
                let mut tape = Tape::new();
                let xin = tape.input(&x);
                let y = mlp.forward(&mut tape, store, xin)?;
                let loss = tape.mse_vs(y, &target)?;
                Ok((tape, loss))
            },
            64,
            1e-5,
            1,
        )
        .unwrap();
        assert!(rel < 1e-4, "rel err {rel}");
    }

    #[test]
    fn conv_stack_matches_finite_differences() {
        use crate::nn::{ConvSpec, LayerSpec, Network};
        for dims in [2usize, 3] {
            let mut store = ParamStore::new();
            let mut rng = ChaCha8Rng::seed_from_u64(11 + dims as u64);
            let ext = if dims == 2 { vec![1, 4, 4] } else { vec![1, 4, 4, 4] };
            let flat = if dims == 2 { 2 * 2 * 2 } else { 2 * 8 };
            let net = Network::new(
                &mut store,
                "ae",
                &ext,
                vec![
                    LayerSpec::Conv(ConvSpec { dims, c_in: 1, c_out: 2, kernel: 3, stride: 2 }),
                    LayerSpec::Activation(Activation::Tanh),
                    LayerSpec::Reshape { shape: vec![flat] },
                    LayerSpec::Dense { input: flat, output: 3 },
                    LayerSpec::Activation(Activation::Tanh),
                    LayerSpec::Dense { input: 3, output: flat },
                    LayerSpec::Reshape { shape: if dims == 2 { vec![2, 2, 2] } else { vec![2, 2, 2, 2] } },
                    LayerSpec::ConvTranspose(ConvSpec { dims, c_in: 2, c_out: 1, kernel: 3, stride: 2 }),
                ],
                &mut rng,
            )
            .unwrap();
            let n: usize = ext.iter().product::<usize>() * 2;
            let x = Tensor::new(
                {
                    let mut s = vec![2];
                    s.extend(&ext);
                    s
                },
                (0..n).map(|i| ((i * 37 % 17) as f64) * 0.1 - 0.8).collect(),
            );
            let target: Vec<f64> = (0..n).map(|i| ((i * 13 % 7) as f64) * 0.15).collect();
            let rel = grad_check(
                &mut store,
                |store| {
                    let mut tape = Tape::new();
                    let xin = tape.input(&x);
                    let y = net.forward(&mut tape, store, xin)?;
                    let loss = tape.mse_vs(y, &target)?;
                    Ok((tape, loss))
                },
                64,
                1e-5,
                3,
            )
            .unwrap();
            assert!(rel < 1e-4, "dims {dims}: rel err {rel}");
        }
    }

    #[test]
    fn relu_network_matches_away_from_kinks() {
        // Probe with inputs/weights whose pre-activations stay away from 0.
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mlp = Mlp::new(&mut store, "net", &[3, 6, 2], Activation::Relu, &mut rng).unwrap();
        // Bias the first layer so |z| > 1e-3 at the probe point.
        let x = Tensor::new(vec![1, 3], vec![0.9, -0.4, 0.6]);
        loop {
            let mut tape = Tape::new();
            let xin = tape.input(&x);
            let pre = mlp.net.layers[0].forward(&mut tape, &store, xin).unwrap();
            if tape.values(pre).iter().all(|z| z.abs() > 1e-2) {
                break;
            }
            for p in store.iter_mut() {
                if p.name.ends_with(".b") {
                    for b in &mut p.value.data {
                        *b += rng.gen::<f64>() * 0.2 + 0.05;
                    }
                }
            }
        }
        let target = vec![0.2, -0.1];
        let rel = grad_check(
            &mut store,
            |store| {
                let mut tape = Tape::new();
                let xin = tape.input(&x);
                let y = mlp.forward(&mut tape, store, xin)?;
                let loss = tape.mse_vs(y, &target)?;
                Ok((tape, loss))
            },
            64,
            1e-6,
            2,
        )
        .unwrap();
        assert!(rel < 1e-4, "rel err {rel}");
    }
}
