//! Model configuration, parameter layout and initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bag_encoder::AttentionConfig;
use crate::dataset::DISTANCE_ROWS;
use crate::diff::{ParamId, ParameterSet, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Word vector dimension (taken from the pretrained vectors).
    pub d_w: usize,
    pub d_pos: usize,
    pub filter_widths: Vec<usize>,
    /// Filters per width.
    pub filters: usize,
    /// Sentence encoding size.
    pub d_s: usize,
    pub exist_hidden: usize,
    pub attn_hidden: usize,
    pub out_hidden: usize,
    pub n_relations: usize,
    pub dropout: f64,
    pub attention: AttentionConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_w: 300,
            d_pos: 5,
            filter_widths: vec![2, 3, 4, 5],
            filters: 230,
            d_s: 230,
            exist_hidden: 64,
            attn_hidden: 64,
            out_hidden: 230,
            n_relations: 52,
            dropout: 0.1,
            attention: AttentionConfig::default(),
        }
    }
}

impl ModelConfig {
    /// Size of one input vector `[word; e1 distance; e2 distance]`.
    pub fn input_dim(&self) -> usize {
        self.d_w + 2 * self.d_pos
    }

    pub fn max_width(&self) -> usize {
        self.filter_widths.iter().copied().max().unwrap_or(1)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_w", self.d_w),
            ("d_pos", self.d_pos),
            ("filters", self.filters),
            ("d_s", self.d_s),
            ("exist_hidden", self.exist_hidden),
            ("attn_hidden", self.attn_hidden),
            ("out_hidden", self.out_hidden),
            ("n_relations", self.n_relations),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be positive")));
        }
        if self.filter_widths.is_empty() || self.filter_widths.contains(&0) {
            return Err(Error::InvalidArgument("filter widths must be positive".into()));
        }
        let mut widths = self.filter_widths.clone();
        widths.sort();
        widths.dedup();
        if widths.len() != self.filter_widths.len() {
            return Err(Error::InvalidArgument("filter widths must be distinct".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvIds {
    pub width: usize,
    pub kernel: ParamId,
    pub bias: ParamId,
}

/// Where each named tensor lives in the [`ParameterSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub conv: Vec<ConvIds>,
    pub dist_e1: ParamId,
    pub dist_e2: ParamId,
    /// Sentence projection.
    pub w1: ParamId,
    pub b1: ParamId,
    /// Existence head.
    pub w2: ParamId,
    pub b2: ParamId,
    pub w3: ParamId,
    pub b3: ParamId,
    /// Output layer.
    pub w4: ParamId,
    pub b4: ParamId,
    pub w5: ParamId,
    pub b5: ParamId,
    /// Attention logit head.
    pub w6: ParamId,
    pub b6: ParamId,
    pub w7: ParamId,
    pub b7: ParamId,
}

fn shapes(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let d_in = cfg.input_dim();
    let mut out = Vec::new();
    for &w in &cfg.filter_widths {
        out.push((format!("conv{w}.kernel"), vec![cfg.filters, w * d_in]));
        out.push((format!("conv{w}.bias"), vec![cfg.filters]));
    }
    let conv_out = cfg.filters * cfg.filter_widths.len();
    out.extend([
        ("dist_e1".to_string(), vec![DISTANCE_ROWS, cfg.d_pos]),
        ("dist_e2".to_string(), vec![DISTANCE_ROWS, cfg.d_pos]),
        ("W1".to_string(), vec![cfg.d_s, conv_out]),
        ("b1".to_string(), vec![cfg.d_s]),
        ("W2".to_string(), vec![cfg.exist_hidden, cfg.d_s]),
        ("b2".to_string(), vec![cfg.exist_hidden]),
        ("W3".to_string(), vec![1, cfg.exist_hidden]),
        ("b3".to_string(), vec![1]),
        ("W4".to_string(), vec![cfg.out_hidden, cfg.d_s + cfg.d_w]),
        ("b4".to_string(), vec![cfg.out_hidden]),
        ("W5".to_string(), vec![cfg.n_relations, cfg.out_hidden]),
        ("b5".to_string(), vec![cfg.n_relations]),
        ("W6".to_string(), vec![cfg.attn_hidden, 1]),
        ("b6".to_string(), vec![cfg.attn_hidden]),
        ("W7".to_string(), vec![1, cfg.attn_hidden]),
        ("b7".to_string(), vec![1]),
    ]);
    out
}

impl Layout {
    pub fn resolve(cfg: &ModelConfig, params: &ParameterSet) -> Result<Self> {
        for (name, shape) in shapes(cfg) {
            let t = params
                .by_name(&name)
                .ok_or_else(|| Error::InvalidArgument(format!("missing parameter `{name}`")))?;
            if t.shape() != shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    left: t.shape().to_vec(),
                    right: shape,
                });
            }
        }
        let id = |n: &str| params.id_of(n).expect("checked above");
        Ok(Layout {
            conv: cfg
                .filter_widths
                .iter()
                .map(|&w| ConvIds {
                    width: w,
                    kernel: id(&format!("conv{w}.kernel")),
                    bias: id(&format!("conv{w}.bias")),
                })
                .collect(),
            dist_e1: id("dist_e1"),
            dist_e2: id("dist_e2"),
            w1: id("W1"),
            b1: id("b1"),
            w2: id("W2"),
            b2: id("b2"),
            w3: id("W3"),
            b3: id("b3"),
            w4: id("W4"),
            b4: id("b4"),
            w5: id("W5"),
            b5: id("b5"),
            w6: id("W6"),
            b6: id("b6"),
            w7: id("W7"),
            b7: id("b7"),
        })
    }
}

/// Read-only view used by every forward and backward pass.
#[derive(Clone, Copy, Debug)]
pub struct Net<'a> {
    pub cfg: &'a ModelConfig,
    pub layout: &'a Layout,
    pub params: &'a ParameterSet,
}

impl Net<'_> {
    pub fn t(&self, id: ParamId) -> &Tensor {
        &self.params[id]
    }
}

/// All learned tensors. Word vectors are not part of the model.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub cfg: ModelConfig,
    pub layout: Layout,
    pub params: ParameterSet,
}

impl Model {
    /// Glorot-uniform weights, zero biases.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterSet::new();
        for (name, shape) in shapes(&cfg) {
            let is_bias = shape.len() == 1;
            let t = if is_bias {
                Tensor::zeros(shape)
            } else {
                let limit = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                Tensor::from_fn(shape, |_| rng.random_range(-limit..limit))
            };
            params.push(name, t)?;
        }
        let layout = Layout::resolve(&cfg, &params)?;
        Ok(Model { cfg, layout, params })
    }

    pub fn from_params(cfg: ModelConfig, params: ParameterSet) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::resolve(&cfg, &params)?;
        if params.len() != shapes(&cfg).len() {
            return Err(Error::InvalidArgument("unexpected extra parameters".into()));
        }
        Ok(Model { cfg, layout, params })
    }

    pub fn net(&self) -> Net<'_> {
        Net {
            cfg: &self.cfg,
            layout: &self.layout,
            params: &self.params,
        }
    }

    /// The same architecture evaluated with different parameter values.
    pub fn net_with<'a>(&'a self, params: &'a ParameterSet) -> Net<'a> {
        Net {
            cfg: &self.cfg,
            layout: &self.layout,
            params,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_has_every_named_tensor() {
        let cfg = ModelConfig {
            d_w: 8,
            d_pos: 3,
            filters: 4,
            d_s: 8,
            n_relations: 3,
            ..ModelConfig::default()
        };
        let m = Model::new(cfg.clone(), 1).unwrap();
        assert_eq!(m.params.len(), 2 * 4 + 16);
        assert_eq!(m.params.by_name("conv3.kernel").unwrap().shape(), &[4, 3 * 14]);
        assert_eq!(m.params.by_name("dist_e1").unwrap().shape(), &[61, 3]);
        assert_eq!(m.params.by_name("W4").unwrap().shape(), &[cfg.out_hidden, 16]);
        let again = Model::from_params(cfg, m.params.clone()).unwrap();
        assert_eq!(again.layout, m.layout);
    }

    #[test]
    fn invalid_configs_rejected() {
        let cfg = ModelConfig {
            filter_widths: vec![2, 2],
            ..ModelConfig::default()
        };
        assert!(Model::new(cfg, 0).is_err());
        let cfg = ModelConfig {
            dropout: 1.0,
            ..ModelConfig::default()
        };
        assert!(Model::new(cfg, 0).is_err());
    }
}
