//! Layer specifications, sequential networks, and MLP helpers.

use rand::Rng;

use super::tape::{Tape, VarId};
use super::tensor::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::invalid(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub dims: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// One layer of a sequential network. Shapes below exclude the batch axis.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Dense { input: usize, output: usize },
    Conv(ConvSpec),
    ConvTranspose(ConvSpec),
    Activation(Activation),
    /// Pure shape bookkeeping between conv stacks and dense heads.
    Reshape { shape: Vec<usize> },
}

impl LayerSpec {
    fn validate(&self) -> Result<()> {
        match self {
            LayerSpec::Dense { input, output } => {
                if *input == 0 || *output == 0 {
                    return Err(Error::invalid("dense widths must be >= 1"));
                }
            }
            LayerSpec::Conv(s) | LayerSpec::ConvTranspose(s) => {
                if !(2..=3).contains(&s.dims) {
                    return Err(Error::invalid("conv dims must be 2 or 3"));
                }
                if s.kernel < 1 || s.kernel % 2 == 0 {
                    return Err(Error::invalid("conv kernel extent must be odd and >= 1"));
                }
                if s.stride < 1 {
                    return Err(Error::invalid("conv stride must be >= 1"));
                }
                if matches!(self, LayerSpec::ConvTranspose(_)) && s.kernel < s.stride {
                    return Err(Error::invalid(
                        "conv_transpose kernel must be >= stride to cover the output",
                    ));
                }
            }
            LayerSpec::Activation(_) => {}
            LayerSpec::Reshape { shape } => {
                if shape.is_empty() || shape.iter().any(|&e| e == 0) {
                    return Err(Error::invalid("reshape target must have positive extents"));
                }
            }
        }
        Ok(())
    }

    /// Statically computed output shape for a given input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mismatch = |expected: Vec<usize>| Error::ShapeMismatch {
            context: format!("{self:?}"),
            expected,
            actual: input.to_vec(),
        };
        match self {
            LayerSpec::Dense { input: iw, output } => {
                if input != [*iw] {
                    return Err(mismatch(vec![*iw]));
                }
                Ok(vec![*output])
            }
            LayerSpec::Conv(s) => {
                if input.len() != s.dims + 1 || input[0] != s.c_in {
                    return Err(mismatch(vec![s.c_in]));
                }
                let mut out = vec![s.c_out];
                out.extend(
                    input[1..]
                        .iter()
                        .map(|&e| super::kernels::conv_out_extent(e, s.kernel, s.stride)),
                );
                Ok(out)
            }
            LayerSpec::ConvTranspose(s) => {
                if input.len() != s.dims + 1 || input[0] != s.c_in {
                    return Err(mismatch(vec![s.c_in]));
                }
                let mut out = vec![s.c_out];
                out.extend(input[1..].iter().map(|&e| e * s.stride));
                Ok(out)
            }
            LayerSpec::Activation(_) => Ok(input.to_vec()),
            LayerSpec::Reshape { shape } => {
                let n: usize = input.iter().product();
                let m: usize = shape.iter().product();
                if n != m {
                    return Err(mismatch(shape.clone()));
                }
                Ok(shape.clone())
            }
        }
    }

    /// Compact text form used in checkpoint metadata.
    pub fn encode(&self) -> String {
        match self {
            LayerSpec::Dense { input, output } => format!("dense:{input}:{output}"),
            LayerSpec::Conv(s) => format!(
                "conv:{}:{}:{}:{}:{}",
                s.dims, s.c_in, s.c_out, s.kernel, s.stride
            ),
            LayerSpec::ConvTranspose(s) => format!(
                "convt:{}:{}:{}:{}:{}",
                s.dims, s.c_in, s.c_out, s.kernel, s.stride
            ),
            LayerSpec::Activation(a) => format!("act:{}", a.name()),
            LayerSpec::Reshape { shape } => format!(
                "reshape:{}",
                shape.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(",")
            ),
        }
    }

    pub fn decode(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        let usize_at = |i: usize| -> Result<usize> {
            parts
                .get(i)
                .and_then(|p| p.parse().ok())
                .ok_or_else(|| Error::format(format!("bad layer spec `{text}`")))
        };
        match parts[0] {
            "dense" => Ok(LayerSpec::Dense {
                input: usize_at(1)?,
                output: usize_at(2)?,
            }),
            "conv" | "convt" => {
                let s = ConvSpec {
                    dims: usize_at(1)?,
                    c_in: usize_at(2)?,
                    c_out: usize_at(3)?,
                    kernel: usize_at(4)?,
                    stride: usize_at(5)?,
                };
                if parts[0] == "conv" {
                    Ok(LayerSpec::Conv(s))
                } else {
                    Ok(LayerSpec::ConvTranspose(s))
                }
            }
            "act" => Ok(LayerSpec::Activation(Activation::parse(
                parts.get(1).copied().unwrap_or(""),
            )?)),
            "reshape" => {
                let shape = parts
                    .get(1)
                    .copied()
                    .unwrap_or("")
                    .split(',')
                    .map(|e| e.parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::format(format!("bad layer spec `{text}`")))?;
                Ok(LayerSpec::Reshape { shape })
            }
            _ => Err(Error::format(format!("unknown layer kind in `{text}`"))),
        }
    }
}

/// Glorot-uniform init tensor: U(-s, s) with s = sqrt(6 / (fan_in + fan_out)).
pub fn glorot_uniform(
    rng: &mut impl Rng,
    fan_in: usize,
    fan_out: usize,
    shape: Vec<usize>,
) -> Tensor {
    let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen::<f64>() * 2.0 * s - s).collect();
    Tensor::new(shape, data)
}

#[derive(Debug, Clone)]
pub struct Layer {
    pub name: String,
    pub spec: LayerSpec,
    pub params: Vec<ParamId>, // [weight, bias] for dense/conv kinds
}

impl Layer {
    fn forward_impl(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: VarId,
        frozen: bool,
    ) -> Result<VarId> {
        let wrap = |e: Error| match e {
            Error::ShapeMismatch {
                context,
                expected,
                actual,
            } => Error::ShapeMismatch {
                context: format!("{} ({})", self.name, context),
                expected,
                actual,
            },
            other => other,
        };
        let pnode = |tape: &mut Tape, i: usize| {
            if frozen {
                tape.input(store.value(self.params[i]))
            } else {
                tape.param(store, self.params[i])
            }
        };
        match &self.spec {
            LayerSpec::Dense { .. } => {
                let w = pnode(tape, 0);
                let b = pnode(tape, 1);
                tape.dense(x, w, b).map_err(wrap)
            }
            LayerSpec::Conv(s) => {
                let w = pnode(tape, 0);
                let b = pnode(tape, 1);
                tape.conv(x, w, b, s).map_err(wrap)
            }
            LayerSpec::ConvTranspose(s) => {
                let w = pnode(tape, 0);
                let b = pnode(tape, 1);
                tape.conv_transpose(x, w, b, s).map_err(wrap)
            }
            LayerSpec::Activation(a) => Ok(tape.activation(x, *a)),
            LayerSpec::Reshape { shape } => {
                let batch = tape.shape(x)[0];
                let mut full = vec![batch];
                full.extend_from_slice(shape);
                tape.reshape(x, full).map_err(wrap)
            }
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: VarId) -> Result<VarId> {
        self.forward_impl(tape, store, x, false)
    }

    /// Parameters enter as constants: gradients flow through the layer to
    /// its input but never into `store`. Used when a frozen model (e.g. a
    /// trained decoder) participates in another model's loss.
    pub fn forward_frozen(&self, tape: &mut Tape, store: &ParamStore, x: VarId) -> Result<VarId> {
        self.forward_impl(tape, store, x, true)
    }
}

/// A sequential network with a statically checked shape chain.
#[derive(Debug, Clone)]
pub struct Network {
    pub layers: Vec<Layer>,
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
}

impl Network {
    /// Builds the network, validating each layer and precomputing the shape
    /// chain; parameters are registered in declaration order.
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        input_shape: &[usize],
        specs: Vec<LayerSpec>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut shape = input_shape.to_vec();
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.into_iter().enumerate() {
            spec.validate()?;
            let out = spec.output_shape(&shape)?;
            let name = format!("{prefix}.{i}");
            let params = match &spec {
                LayerSpec::Dense { input, output } => {
                    let w = store.add(
                        format!("{name}.w"),
                        glorot_uniform(rng, *input, *output, vec![*input, *output]),
                    );
                    let b = store.add(format!("{name}.b"), Tensor::zeros(vec![*output]));
                    vec![w, b]
                }
                LayerSpec::Conv(s) => {
                    let kd = s.kernel.pow(s.dims as u32);
                    let w = store.add(
                        format!("{name}.w"),
                        glorot_uniform(rng, s.c_in * kd, s.c_out * kd, vec![s.c_out, s.c_in * kd]),
                    );
                    let b = store.add(format!("{name}.b"), Tensor::zeros(vec![s.c_out]));
                    vec![w, b]
                }
                LayerSpec::ConvTranspose(s) => {
                    let kd = s.kernel.pow(s.dims as u32);
                    let w = store.add(
                        format!("{name}.w"),
                        glorot_uniform(rng, s.c_in * kd, s.c_out * kd, vec![s.c_in, s.c_out * kd]),
                    );
                    let b = store.add(format!("{name}.b"), Tensor::zeros(vec![s.c_out]));
                    vec![w, b]
                }
                _ => vec![],
            };
            layers.push(Layer { name, spec, params });
            shape = out;
        }
        Ok(Network {
            layers,
            input_shape: input_shape.to_vec(),
            output_shape: shape,
        })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: VarId) -> Result<VarId> {
        let got = &tape.shape(x)[1..];
        if got != self.input_shape.as_slice() {
            return Err(Error::ShapeMismatch {
                context: self
                    .layers
                    .first()
                    .map(|l| l.name.clone())
                    .unwrap_or_else(|| "network".into()),
                expected: self.input_shape.clone(),
                actual: got.to_vec(),
            });
        }
        let mut v = x;
        for layer in &self.layers {
            v = layer.forward(tape, store, v)?;
        }
        Ok(v)
    }

    /// [`Network::forward`] with every parameter entering as a constant.
    pub fn forward_frozen(&self, tape: &mut Tape, store: &ParamStore, x: VarId) -> Result<VarId> {
        let mut v = x;
        for layer in &self.layers {
            v = layer.forward_frozen(tape, store, v)?;
        }
        Ok(v)
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.layers.iter().flat_map(|l| l.params.iter().copied())
    }
}

/// Dense stack with the given widths: activations between hidden layers,
/// linear output.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub net: Network,
    pub widths: Vec<usize>,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        widths: &[usize],
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::invalid("mlp needs at least input and output widths"));
        }
        let mut specs = Vec::new();
        for i in 0..widths.len() - 1 {
            specs.push(LayerSpec::Dense {
                input: widths[i],
                output: widths[i + 1],
            });
            if i + 2 < widths.len() {
                specs.push(LayerSpec::Activation(activation));
            }
        }
        let net = Network::new(store, prefix, &[widths[0]], specs, rng)?;
        Ok(Mlp {
            net,
            widths: widths.to_vec(),
        })
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: VarId) -> Result<VarId> {
        self.net.forward(tape, store, x)
    }
}
