use crate::engine::{Element, Tensor};
use crate::unet::{LayerGrad, ModelGradients, ModelWeights};
use crate::{Error, Result};

/// Hyper-parameters of the optimiser.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, shaped like the model's layers.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T = f32> {
    /// Updates applied so far.
    pub step: u64,
    pub m: Vec<LayerGrad<T>>,
    pub v: Vec<LayerGrad<T>>,
}

impl<T: Element> AdamState<T> {
    pub fn new(weights: &ModelWeights<T>) -> Self {
        let zeros = ModelGradients::zeros_like(weights).layers;
        AdamState {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn param_count(&self) -> usize {
        self.m.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub(crate) fn flat(&self) -> (Vec<T>, Vec<T>) {
        let flat = |ls: &[LayerGrad<T>]| {
            ls.iter()
                .flat_map(|l| l.weights.data().iter().chain(&l.bias).copied())
                .collect()
        };
        (flat(&self.m), flat(&self.v))
    }

    pub(crate) fn from_flat(weights: &ModelWeights<T>, step: u64, m: &[T], v: &[T]) -> Result<Self> {
        let mut state = AdamState::new(weights);
        state.step = step;
        if m.len() != state.param_count() || v.len() != m.len() {
            return Err(Error::Format(format!(
                "optimizer state has {}/{} moments for {} parameters",
                m.len(),
                v.len(),
                state.param_count()
            )));
        }
        for (moments, src) in [(&mut state.m, m), (&mut state.v, v)] {
            let mut offset = 0;
            for l in moments.iter_mut() {
                let n = l.weights.len();
                l.weights.data_mut().copy_from_slice(&src[offset..offset + n]);
                offset += n;
                let nb = l.bias.len();
                l.bias.copy_from_slice(&src[offset..offset + nb]);
                offset += nb;
            }
        }
        Ok(state)
    }
}

fn update_slice<T: Element>(p: &mut [T], g: &[T], m: &mut [T], v: &mut [T], cfg: &AdamConfig, bc1: f64, bc2: f64) {
    for i in 0..p.len() {
        let gi = g[i].as_f64();
        let mi = cfg.beta1 * m[i].as_f64() + (1.0 - cfg.beta1) * gi;
        let vi = cfg.beta2 * v[i].as_f64() + (1.0 - cfg.beta2) * gi * gi;
        m[i] = T::from_f64_lossy(mi);
        v[i] = T::from_f64_lossy(vi);
        let delta = cfg.learning_rate * (mi / bc1) / ((vi / bc2).sqrt() + cfg.eps);
        p[i] = T::from_f64_lossy(p[i].as_f64() - delta);
    }
}

fn same_shape<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op: "adam",
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

/// One bias-corrected Adam step. Parameters only ever move by
/// `lr * m_hat / (sqrt(v_hat) + eps)`; there is no decay term.
pub fn adam_update<T: Element>(
    weights: &mut ModelWeights<T>,
    grads: &ModelGradients<T>,
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.layers.len() != weights.layers.len() || state.m.len() != weights.layers.len() {
        return Err(Error::Parameter(format!(
            "{} layers, {} gradients, {} moment sets",
            weights.layers.len(),
            grads.layers.len(),
            state.m.len()
        )));
    }
    for ((layer, g), m) in weights.layers.iter().zip(&grads.layers).zip(&state.m) {
        same_shape(&layer.weights, &g.weights)?;
        same_shape(&layer.weights, &m.weights)?;
        if g.bias.len() != layer.bias.len() {
            return Err(Error::Parameter("bias gradient length".into()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (i, layer) in weights.layers.iter_mut().enumerate() {
        let (g, m, v) = (&grads.layers[i], &mut state.m[i], &mut state.v[i]);
        update_slice(
            layer.weights.data_mut(),
            g.weights.data(),
            m.weights.data_mut(),
            v.weights.data_mut(),
            cfg,
            bc1,
            bc2,
        );
        update_slice(&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias, cfg, bc1, bc2);
    }
    Ok(())
}
