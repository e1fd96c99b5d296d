//! Policy parameters stored as one flat vector with a named tensor layout.
//!
//! Tensors in declaration order (`F = 8` node features, `D = 6` dynamic node
//! features, `G = 2` global scalars, `d` embedding width, `f` feed-forward width):
//!
//! | tensor                         | shape        |
//! |--------------------------------|--------------|
//! | `enc.input.weight`             | `F × d`      |
//! | `enc.input.bias`               | `d`          |
//! | per layer `l`: `q`, `k`, `v`, `o` | `d × d` each |
//! | per layer: `norm1.gain`, `norm1.bias` | `d` each |
//! | per layer: `ff1.weight`, `ff1.bias` | `d × f`, `f` |
//! | per layer: `ff2.weight`, `ff2.bias` | `f × d`, `d` |
//! | per layer: `norm2.gain`, `norm2.bias` | `d` each |
//! | `dec.context`                  | `(d + G) × d`|
//! | `dec.glimpse_key`, `dec.glimpse_value`, `dec.logit_key` | `d × d` each |
//! | `dec.glimpse_key_dyn`, `dec.glimpse_value_dyn`, `dec.logit_key_dyn` | `D × d` each |
//! | `dec.glimpse_out`              | `d × d`      |
//!
//! Parameter count: `F·d + d + L·(4d² + 2d·f + f + 5d) + (d + G)·d + 4d² + 3D·d`.
//! For `d = 128, f = 128, L = 3` that is 382,848.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NODE_FEATURES: usize = 8;
pub const DYN_FEATURES: usize = 6;
pub const GLOBAL_FEATURES: usize = 2;

/// Which side of the game a policy plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Location,
    Interdiction,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Location => "location",
            Role::Interdiction => "interdiction",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDims {
    pub embed: usize,
    pub heads: usize,
    pub layers: usize,
    pub ff_hidden: usize,
}

impl PolicyDims {
    pub fn new(embed: usize, heads: usize, layers: usize, ff_hidden: usize) -> Result<Self> {
        let d = PolicyDims { embed, heads, layers, ff_hidden };
        d.validate()?;
        Ok(d)
    }

    /// Desk-scale defaults: d=32, h=4, L=2, f=64.
    pub fn toy() -> Self {
        PolicyDims { embed: 32, heads: 4, layers: 2, ff_hidden: 64 }
    }

    /// Full-scale settings: d=128, h=8, L=3, f=128.
    pub fn full() -> Self {
        PolicyDims { embed: 128, heads: 8, layers: 3, ff_hidden: 128 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed == 0 || self.heads == 0 || self.ff_hidden == 0 {
            return Err(Error::Dims("dimensions must be positive".into()));
        }
        if self.embed % self.heads != 0 {
            return Err(Error::Dims(format!(
                "embedding dim {} is not divisible by head count {}",
                self.embed, self.heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed / self.heads
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        let (d, f, l) = (self.embed, self.ff_hidden, self.layers);
        NODE_FEATURES * d + d + l * (4 * d * d + 2 * d * f + f + 5 * d) + (d + GLOBAL_FEATURES) * d + 4 * d * d + 3 * DYN_FEATURES * d
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerLayout {
    pub q: Range<usize>,
    pub k: Range<usize>,
    pub v: Range<usize>,
    pub o: Range<usize>,
    pub norm1_gain: Range<usize>,
    pub norm1_bias: Range<usize>,
    pub ff1_w: Range<usize>,
    pub ff1_b: Range<usize>,
    pub ff2_w: Range<usize>,
    pub ff2_b: Range<usize>,
    pub norm2_gain: Range<usize>,
    pub norm2_bias: Range<usize>,
}

/// Offsets of every tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub input_w: Range<usize>,
    pub input_b: Range<usize>,
    pub layers: Vec<LayerLayout>,
    pub context: Range<usize>,
    pub glimpse_key: Range<usize>,
    pub glimpse_value: Range<usize>,
    pub logit_key: Range<usize>,
    pub glimpse_key_dyn: Range<usize>,
    pub glimpse_value_dyn: Range<usize>,
    pub logit_key_dyn: Range<usize>,
    pub glimpse_out: Range<usize>,
    pub total: usize,
    /// `(name, shape, range, fan_in)` in declaration order.
    pub tensors: Vec<TensorInfo>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    #[serde(skip)]
    pub range: Range<usize>,
    #[serde(skip)]
    pub fan_in: usize,
    #[serde(skip)]
    pub init: InitKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitKind {
    #[default]
    Uniform,
    Ones,
    Zeros,
}

impl Layout {
    pub fn new(dims: &PolicyDims) -> Self {
        let (d, f) = (dims.embed, dims.ff_hidden);
        let mut tensors = Vec::new();
        let mut at = 0usize;
        let mut take = |name: String, shape: Vec<usize>, fan_in: usize, init: InitKind| {
            let len: usize = shape.iter().product();
            let range = at..at + len;
            at += len;
            tensors.push(TensorInfo { name, shape, range: range.clone(), fan_in, init });
            range
        };
        let input_w = take("enc.input.weight".into(), vec![NODE_FEATURES, d], NODE_FEATURES, InitKind::Uniform);
        let input_b = take("enc.input.bias".into(), vec![d], NODE_FEATURES, InitKind::Uniform);
        let mut layers = Vec::with_capacity(dims.layers);
        for l in 0..dims.layers {
            let p = |s: &str| format!("enc.layer{l}.{s}");
            layers.push(LayerLayout {
                q: take(p("attn.q"), vec![d, d], d, InitKind::Uniform),
                k: take(p("attn.k"), vec![d, d], d, InitKind::Uniform),
                v: take(p("attn.v"), vec![d, d], d, InitKind::Uniform),
                o: take(p("attn.o"), vec![d, d], d, InitKind::Uniform),
                norm1_gain: take(p("norm1.gain"), vec![d], d, InitKind::Ones),
                norm1_bias: take(p("norm1.bias"), vec![d], d, InitKind::Zeros),
                ff1_w: take(p("ff1.weight"), vec![d, f], d, InitKind::Uniform),
                ff1_b: take(p("ff1.bias"), vec![f], d, InitKind::Uniform),
                ff2_w: take(p("ff2.weight"), vec![f, d], f, InitKind::Uniform),
                ff2_b: take(p("ff2.bias"), vec![d], f, InitKind::Uniform),
                norm2_gain: take(p("norm2.gain"), vec![d], d, InitKind::Ones),
                norm2_bias: take(p("norm2.bias"), vec![d], d, InitKind::Zeros),
            });
        }
        let context = take("dec.context".into(), vec![d + GLOBAL_FEATURES, d], d + GLOBAL_FEATURES, InitKind::Uniform);
        let glimpse_key = take("dec.glimpse_key".into(), vec![d, d], d, InitKind::Uniform);
        let glimpse_value = take("dec.glimpse_value".into(), vec![d, d], d, InitKind::Uniform);
        let logit_key = take("dec.logit_key".into(), vec![d, d], d, InitKind::Uniform);
        let glimpse_key_dyn = take("dec.glimpse_key_dyn".into(), vec![DYN_FEATURES, d], DYN_FEATURES, InitKind::Uniform);
        let glimpse_value_dyn = take("dec.glimpse_value_dyn".into(), vec![DYN_FEATURES, d], DYN_FEATURES, InitKind::Uniform);
        let logit_key_dyn = take("dec.logit_key_dyn".into(), vec![DYN_FEATURES, d], DYN_FEATURES, InitKind::Uniform);
        let glimpse_out = take("dec.glimpse_out".into(), vec![d, d], d, InitKind::Uniform);
        Layout {
            input_w,
            input_b,
            layers,
            context,
            glimpse_key,
            glimpse_value,
            logit_key,
            glimpse_key_dyn,
            glimpse_value_dyn,
            logit_key_dyn,
            glimpse_out,
            total: at,
            tensors,
        }
    }
}

/// All learnable tensors of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub role: Role,
    pub dims: PolicyDims,
    pub layout: Layout,
    pub values: Vec<f64>,
    /// Incremented on every optimizer step.
    pub version: u64,
}

impl PolicyParams {
    pub fn zeros(role: Role, dims: PolicyDims) -> Result<Self> {
        dims.validate()?;
        let layout = Layout::new(&dims);
        let values = vec![0.0; layout.total];
        Ok(PolicyParams { role, dims, layout, values, version: 0 })
    }

    /// Uniform `±1/sqrt(fan_in)` weights and biases, unit gains, zero norm
    /// biases. Values are rounded to f32 so checkpoints are lossless.
    pub fn init(role: Role, dims: PolicyDims, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(role, dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in &p.layout.tensors {
            let bound = 1.0 / (t.fan_in as f64).sqrt();
            for v in &mut p.values[t.range.clone()] {
                *v = match t.init {
                    InitKind::Uniform => rng.random_range(-bound..bound) as f32 as f64,
                    InitKind::Ones => 1.0,
                    InitKind::Zeros => 0.0,
                };
            }
        }
        Ok(p)
    }

    pub fn param_count(&self) -> usize {
        self.values.len()
    }

    pub fn tensor(&self, r: &Range<usize>) -> &[f64] {
        &self.values[r.clone()]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &PolicyParams) -> bool {
        self.dims == other.dims && self.values.len() == other.values.len()
    }
}

pub fn init_params(role: Role, dims: PolicyDims, seed: u64) -> Result<PolicyParams> {
    PolicyParams::init(role, dims, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_init() {
        let dims = PolicyDims::new(32, 4, 2, 64).unwrap();
        let a = init_params(Role::Location, dims, 7).unwrap();
        let b = init_params(Role::Location, dims, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.is_finite());
        let c = init_params(Role::Location, dims, 8).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn divisibility_is_checked() {
        assert!(PolicyDims::new(33, 4, 2, 64).is_err());
        assert!(init_params(Role::Location, PolicyDims { embed: 33, heads: 4, layers: 2, ff_hidden: 64 }, 7).is_err());
    }

    #[test]
    fn closed_form_count_matches_layout() {
        // hand count for d=128, f=128, L=3:
        // input 8*128+128 = 1,152
        // per layer 4*16384 + 2*16384 + 128 + 5*128 = 99,072; x3 = 297,216
        // context 130*128 = 16,640; four d×d decoder maps 65,536; dynamic 3*6*128 = 2,304
        let dims = PolicyDims::full();
        assert_eq!(dims.param_count(), 1_152 + 297_216 + 16_640 + 65_536 + 2_304);
        assert_eq!(dims.param_count(), 382_848);
        assert_eq!(Layout::new(&dims).total, dims.param_count());
        for dims in [PolicyDims::toy(), PolicyDims::new(8, 2, 1, 8).unwrap(), PolicyDims::new(16, 4, 0, 4).unwrap()] {
            assert_eq!(Layout::new(&dims).total, dims.param_count());
        }
    }

    #[test]
    fn init_bounds_follow_fan_in() {
        let dims = PolicyDims::toy();
        let p = init_params(Role::Interdiction, dims, 1).unwrap();
        for t in &p.layout.tensors {
            let vals = &p.values[t.range.clone()];
            match t.init {
                InitKind::Uniform => {
                    let b = 1.0 / (t.fan_in as f64).sqrt();
                    assert!(vals.iter().all(|v| v.abs() <= b), "{}", t.name);
                }
                InitKind::Ones => assert!(vals.iter().all(|&v| v == 1.0)),
                InitKind::Zeros => assert!(vals.iter().all(|&v| v == 0.0)),
            }
            assert!(vals.iter().all(|&v| v == v as f32 as f64));
        }
    }
}
