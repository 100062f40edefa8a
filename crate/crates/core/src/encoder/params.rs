use rand_distr::{Distribution, Normal};

use super::config::EncoderConfig;
use crate::error::{Error, Result};
use crate::numcore::{ParamStore, StreamRng, Tensor};

pub const INIT_STD: f64 = 0.02;
const TENSORS_PER_LAYER: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Normal,
    Zeros,
    Ones,
}

/// Named slots inside one transformer layer.
#[derive(Debug, Clone, Copy)]
pub enum LayerSlot {
    Query = 0,
    Key,
    Value,
    Output,
    AttnNormGain,
    AttnNormBias,
    FfIn,
    FfInBias,
    FfOut,
    FfOutBias,
    FfNormGain,
    FfNormBias,
}

/// Learnable state of the encoder, stored in a fixed order:
/// token table, position table, each layer's twelve tensors, MLM bias.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub store: ParamStore,
}

impl EncoderParams {
    pub const TOKEN_EMBEDDING: usize = 0;
    pub const POSITION_EMBEDDING: usize = 1;

    pub fn layer_index(layer: usize, slot: LayerSlot) -> usize {
        2 + layer * TENSORS_PER_LAYER + slot as usize
    }

    pub fn mlm_bias_index(&self) -> usize {
        2 + self.config.num_layers * TENSORS_PER_LAYER
    }

    /// Names, shapes, and initializers of every tensor, in storage order.
    pub fn layout(config: &EncoderConfig) -> Vec<(String, Vec<usize>, Init)> {
        let (v, d, f) = (config.vocab_size, config.hidden, config.ff);
        let mut out = vec![
            ("embeddings.token".to_string(), vec![v, d], Init::Normal),
            ("embeddings.position".to_string(), vec![config.max_len, d], Init::Normal),
        ];
        for l in 0..config.num_layers {
            let entries = [
                ("attn.query", vec![d, d], Init::Normal),
                ("attn.key", vec![d, d], Init::Normal),
                ("attn.value", vec![d, d], Init::Normal),
                ("attn.output", vec![d, d], Init::Normal),
                ("attn_norm.gain", vec![d], Init::Ones),
                ("attn_norm.bias", vec![d], Init::Zeros),
                ("ff.in", vec![d, f], Init::Normal),
                ("ff.in_bias", vec![f], Init::Zeros),
                ("ff.out", vec![f, d], Init::Normal),
                ("ff.out_bias", vec![d], Init::Zeros),
                ("ff_norm.gain", vec![d], Init::Ones),
                ("ff_norm.bias", vec![d], Init::Zeros),
            ];
            out.extend(entries.into_iter().map(|(n, s, i)| (format!("layer{l}.{n}"), s, i)));
        }
        out.push(("mlm.bias".to_string(), vec![v], Init::Zeros));
        out
    }

    /// Weights ~ N(0, 0.02²), biases 0, layer-norm gains 1.
    pub fn init(config: &EncoderConfig, rng: &mut StreamRng) -> Result<Self> {
        config.validate()?;
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut store = ParamStore::new();
        for (name, shape, init) in Self::layout(config) {
            let tensor = match init {
                Init::Normal => {
                    let n = shape.iter().product();
                    let mut values: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
                    config.precision.round(&mut values);
                    Tensor::new(shape, values)?
                }
                Init::Zeros => Tensor::zeros(shape),
                Init::Ones => Tensor::filled(shape, 1.0),
            };
            store.push(name, tensor);
        }
        debug_assert_eq!(store.numel(), config.param_count());
        Ok(EncoderParams {
            config: config.clone(),
            store,
        })
    }

    /// Reassembles parameters from a store, checking names and shapes.
    pub fn from_store(config: &EncoderConfig, store: ParamStore) -> Result<Self> {
        config.validate()?;
        let layout = Self::layout(config);
        if layout.len() != store.len() {
            return Err(Error::Integrity(format!(
                "expected {} parameter tensors, found {}",
                layout.len(),
                store.len()
            )));
        }
        for ((en, es, _), (an, at)) in layout.iter().zip(store.iter()) {
            if en != an || es.as_slice() != at.shape() {
                return Err(Error::Integrity(format!(
                    "parameter {an} {:?} does not match expected {en} {es:?}",
                    at.shape()
                )));
            }
        }
        Ok(EncoderParams {
            config: config.clone(),
            store,
        })
    }

    pub fn numel(&self) -> usize {
        self.store.numel()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{stream, SeedPurpose};

    #[test]
    fn count_is_a_function_of_config() {
        let mut c = EncoderConfig::desk(57);
        c.max_len = 16;
        let p = EncoderParams::init(&c, &mut stream(1, 0, SeedPurpose::Init)).unwrap();
        assert_eq!(p.numel(), c.param_count());
        let q = EncoderParams::init(&c, &mut stream(2, 0, SeedPurpose::Init)).unwrap();
        assert_eq!(q.numel(), p.numel());
        assert_ne!(p.store, q.store);
    }

    #[test]
    fn init_layout() {
        let c = EncoderConfig::desk(20);
        let p = EncoderParams::init(&c, &mut stream(1, 0, SeedPurpose::Init)).unwrap();
        let gain = p.store.tensor(EncoderParams::layer_index(1, LayerSlot::FfNormGain));
        assert!(gain.values().iter().all(|&x| x == 1.0));
        assert_eq!(p.store.names()[p.mlm_bias_index()], "mlm.bias");
        let tok = p.store.tensor(EncoderParams::TOKEN_EMBEDDING).values();
        let std = (tok.iter().map(|x| x * x).sum::<f64>() / tok.len() as f64).sqrt();
        assert!((std - INIT_STD).abs() < 0.003, "{std}");
    }
}
