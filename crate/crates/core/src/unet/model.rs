use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{LayerKind, UNetConfig};
use crate::engine::{ConvLayer, Element, Tensor};
use crate::{Error, Result};

/// All learnable parameters of a network, in build order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights<T = f32> {
    pub config: UNetConfig,
    pub layers: Vec<ConvLayer<T>>,
}

/// He-normal weights (std `sqrt(2 / fan_in)`) and zero biases, from `seed`.
pub fn build_model(config: UNetConfig, seed: u64) -> Result<ModelWeights<f32>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = config
        .layer_specs()
        .iter()
        .map(|spec| {
            let k = spec.kernel();
            // each output of a stride-2 up-convolution sees one tap per input channel
            let fan_in = match spec.kind {
                LayerKind::UpConv2x2 => spec.in_channels,
                _ => spec.in_channels * k * k,
            };
            let std = (2.0 / fan_in as f64).sqrt();
            ConvLayer {
                weights: Tensor::random_normal([spec.out_channels, spec.in_channels, k, k], std, &mut rng),
                bias: vec![0.0; spec.out_channels],
                stride: spec.stride(),
                padding: spec.padding(),
            }
        })
        .collect();
    Ok(ModelWeights { config, layers })
}

impl<T: Element> ModelWeights<T> {
    /// Rebuilds a model from a flat parameter vector in build order
    /// (each layer's weights, then its biases).
    pub fn from_flat(config: UNetConfig, params: &[T]) -> Result<Self> {
        config.validate()?;
        let specs = config.layer_specs();
        let expected: usize = specs.iter().map(|s| s.param_count()).sum();
        if params.len() != expected {
            return Err(Error::Parameter(format!(
                "{} parameters given, config needs {expected}",
                params.len()
            )));
        }
        let mut rest = params;
        let layers = specs
            .iter()
            .map(|spec| {
                let k = spec.kernel();
                let nw = spec.out_channels * spec.in_channels * k * k;
                let (w, tail) = rest.split_at(nw);
                let (b, tail) = tail.split_at(spec.out_channels);
                rest = tail;
                Ok(ConvLayer {
                    weights: Tensor::from_vec([spec.out_channels, spec.in_channels, k, k], w.to_vec())?,
                    bias: b.to_vec(),
                    stride: spec.stride(),
                    padding: spec.padding(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(ModelWeights { config, layers })
    }

    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weights.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(ConvLayer::param_count).sum()
    }

    pub fn cast<U: Element>(&self) -> ModelWeights<U> {
        ModelWeights {
            config: self.config,
            layers: self
                .layers
                .iter()
                .map(|l| ConvLayer {
                    weights: l.weights.cast(),
                    bias: l.bias.iter().map(|b| U::from_f64_lossy(b.as_f64())).collect(),
                    stride: l.stride,
                    padding: l.padding,
                })
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    /// L2 norm of each layer's weights and biases together.
    pub fn layer_norms(&self) -> Vec<f64> {
        self.layers
            .iter()
            .map(|l| {
                let b: f64 = l.bias.iter().map(|v| v.as_f64().powi(2)).sum();
                (l.weights.l2_norm().powi(2) + b).sqrt()
            })
            .collect()
    }

    /// Checks that the layer list matches what the config prescribes.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let specs = self.config.layer_specs();
        if specs.len() != self.layers.len() {
            return Err(Error::Config(format!(
                "{} layers for a config that needs {}",
                self.layers.len(),
                specs.len()
            )));
        }
        for (i, (spec, layer)) in specs.iter().zip(&self.layers).enumerate() {
            let k = spec.kernel();
            if layer.weights.shape().dims() != [spec.out_channels, spec.in_channels, k, k]
                || layer.stride != spec.stride()
                || layer.padding != spec.padding()
            {
                return Err(Error::Config(format!("layer {i} does not match {spec:?}")));
            }
            layer.validate()?;
        }
        Ok(())
    }
}
