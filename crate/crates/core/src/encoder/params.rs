use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::EncoderConfig;
use crate::tensor::{Tape, Tensor, Var};
use crate::{Error, Result};

/// Which of the two lockstep stacks a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Helix {
    /// Message passing over the molecule itself.
    Graph,
    /// Message passing over its line graph.
    Line,
}

impl Helix {
    pub fn prefix(self) -> &'static str {
        match self {
            Helix::Graph => "graph",
            Helix::Line => "line",
        }
    }

    /// Vocabulary sizes of (node field 0, node field 1, edge field 0, edge field 1).
    fn vocab(self, cfg: &EncoderConfig) -> [usize; 4] {
        let v = &cfg.vocab;
        match self {
            Helix::Graph => [v.atom, v.chirality, v.bond, v.direction],
            Helix::Line => [v.bond, v.direction, v.atom, v.chirality],
        }
    }
}

pub(crate) fn node_table(h: Helix, field: usize) -> String {
    format!("{}.node_emb.{field}", h.prefix())
}

pub(crate) fn edge_table(h: Helix, layer: usize, field: usize) -> String {
    format!("{}.edge_emb.{layer}.{field}", h.prefix())
}

pub(crate) fn self_loop(h: Helix, layer: usize) -> String {
    format!("{}.self_loop.{layer}", h.prefix())
}

pub(crate) fn layer_mlp(h: Helix, layer: usize, part: &str) -> String {
    format!("{}.mlp.{layer}.{part}", h.prefix())
}

/// Name, shape and uniform-init bound of every parameter, in storage order.
pub fn layout(cfg: &EncoderConfig) -> Vec<(String, [usize; 2], f64)> {
    let d = cfg.hidden;
    let bound = |fan_in: usize| (1.0 / fan_in as f64).sqrt();
    let mut out = Vec::new();
    for helix in [Helix::Graph, Helix::Line] {
        let [n0, n1, e0, e1] = helix.vocab(cfg);
        out.push((node_table(helix, 0), [n0, d], bound(d)));
        out.push((node_table(helix, 1), [n1, d], bound(d)));
        // With fusion only layer 0 embeds raw edge categories; later layers
        // take the other helix's node states instead.
        let embedded_layers = if cfg.edge_fusion { 1 } else { cfg.depth };
        for layer in 0..embedded_layers {
            out.push((edge_table(helix, layer, 0), [e0, d], bound(d)));
            out.push((edge_table(helix, layer, 1), [e1, d], bound(d)));
        }
        for layer in 0..cfg.depth {
            out.push((self_loop(helix, layer), [1, d], bound(d)));
            out.push((layer_mlp(helix, layer, "w1"), [d, 2 * d], bound(d)));
            out.push((layer_mlp(helix, layer, "b1"), [1, 2 * d], bound(d)));
            out.push((layer_mlp(helix, layer, "w2"), [2 * d, d], bound(2 * d)));
            out.push((layer_mlp(helix, layer, "b2"), [1, d], bound(2 * d)));
        }
    }
    out.push(("head.w1".into(), [d, d], bound(d)));
    out.push(("head.w2".into(), [d, d], bound(d)));
    out.push(("edge_mlp.w1".into(), [2 * d, d], bound(2 * d)));
    out.push(("edge_mlp.b1".into(), [1, d], bound(2 * d)));
    out.push(("edge_mlp.w2".into(), [d, d], bound(d)));
    out.push(("edge_mlp.b2".into(), [1, d], bound(d)));
    out
}

/// Every trainable tensor of the dual-helix encoder, projection head and
/// edge-pair MLP, addressed by name.
#[derive(Debug, Clone, PartialEq)]
pub struct DualHelixParams {
    config: EncoderConfig,
    seed: u64,
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl DualHelixParams {
    /// Uniform initialization in `[-√(1/fan_in), √(1/fan_in)]`, drawn in
    /// layout order from a ChaCha stream seeded with `seed`.
    pub fn init(config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let parts = layout(&config)
            .into_iter()
            .map(|(name, [r, c], bound)| {
                let data = (0..r * c).map(|_| rng.gen_range(-bound..=bound)).collect();
                (name, Tensor::matrix(r, c, data).expect("layout shape"))
            })
            .collect();
        Self::from_parts(config, seed, parts)
    }

    /// Reassembles parameters (e.g. from a checkpoint), checking names and
    /// shapes against the layout implied by `config`.
    pub fn from_parts(
        config: EncoderConfig,
        seed: u64,
        parts: Vec<(String, Tensor)>,
    ) -> Result<Self> {
        config.validate()?;
        let expected = layout(&config);
        if expected.len() != parts.len() {
            return Err(Error::ConfigMismatch(format!(
                "expected {} parameters, found {}",
                expected.len(),
                parts.len()
            )));
        }
        for ((name, shape, _), (got, t)) in expected.iter().zip(&parts) {
            if name != got || t.shape() != shape {
                return Err(Error::ConfigMismatch(format!(
                    "parameter {got} {:?} does not match expected {name} {shape:?}",
                    t.shape()
                )));
            }
        }
        let (names, tensors): (Vec<String>, Vec<Tensor>) = parts.into_iter().unzip();
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        Ok(Self {
            config,
            seed,
            names,
            tensors,
            index,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Records every parameter on `tape`, as differentiable leaves when
    /// `trainable`, otherwise as constants.
    pub fn bind<'a>(&'a self, tape: &Tape, trainable: bool) -> BoundParams<'a> {
        let vars = self
            .tensors
            .iter()
            .map(|t| {
                if trainable {
                    tape.leaf(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect();
        BoundParams { params: self, vars }
    }
}

/// Parameters recorded on one tape.
pub struct BoundParams<'a> {
    params: &'a DualHelixParams,
    vars: Vec<Var>,
}

impl<'a> BoundParams<'a> {
    /// Wraps vars already on a tape, in storage order.
    pub fn from_vars(params: &'a DualHelixParams, vars: Vec<Var>) -> Self {
        assert_eq!(vars.len(), params.tensors.len(), "one var per parameter");
        BoundParams { params, vars }
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.params.config
    }

    pub fn var(&self, name: &str) -> Var {
        let i = *self
            .params
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        self.vars[i]
    }

    /// Vars in storage order, aligned with [`DualHelixParams::tensors`].
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}
