use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One named parameter tensor, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// All trainable tensors of a model in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub blocks: Vec<ParamBlock>,
}

impl ParamSet {
    pub fn zeros_like(&self) -> Self {
        Self {
            blocks: self
                .blocks
                .iter()
                .map(|b| ParamBlock {
                    name: b.name.clone(),
                    shape: b.shape.clone(),
                    data: vec![0.0; b.data.len()],
                })
                .collect(),
        }
    }

    pub fn num_values(&self) -> usize {
        self.blocks.iter().map(|b| b.data.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.blocks
            .iter()
            .all(|b| b.data.iter().all(|v| v.is_finite()))
    }
}

/// Block indices of one prediction head.
#[derive(Debug, Clone)]
pub(crate) struct HeadLayout {
    /// `(weight, bias)` per kernel-3 convolution; weight is `[3][H][H]`.
    pub convs: Vec<(usize, usize)>,
    /// `(weight, bias)` of the final map; weight is `[out][H]`.
    pub out: (usize, usize),
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub proj: (usize, usize),
    pub cls: HeadLayout,
    pub reg: HeadLayout,
}

impl Layout {
    pub fn new(head_layers: usize) -> Self {
        let mut next = 0;
        let mut pair = || {
            let p = (next, next + 1);
            next += 2;
            p
        };
        let proj = pair();
        let cls = HeadLayout {
            convs: (0..head_layers).map(|_| pair()).collect(),
            out: pair(),
        };
        let reg = HeadLayout {
            convs: (0..head_layers).map(|_| pair()).collect(),
            out: pair(),
        };
        Self { proj, cls, reg }
    }
}

/// Block names, shapes and fan-in in declaration order.
pub(crate) fn block_specs(
    input_dim: usize,
    hidden: usize,
    head_layers: usize,
    num_fg: usize,
) -> Vec<(String, Vec<usize>, usize)> {
    let mut specs = vec![
        ("proj.weight".to_string(), vec![hidden, input_dim], input_dim),
        ("proj.bias".to_string(), vec![hidden], input_dim),
    ];
    for (head, out) in [("cls", num_fg), ("reg", 2)] {
        for i in 0..head_layers {
            specs.push((format!("{head}.conv{i}.weight"), vec![3, hidden, hidden], 3 * hidden));
            specs.push((format!("{head}.conv{i}.bias"), vec![hidden], 3 * hidden));
        }
        specs.push((format!("{head}.out.weight"), vec![out, hidden], hidden));
        specs.push((format!("{head}.out.bias"), vec![out], hidden));
    }
    specs
}

/// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` initialization from a seed.
pub(crate) fn init_params(specs: &[(String, Vec<usize>, usize)], seed: u64) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks = specs
        .iter()
        .map(|(name, shape, fan_in)| {
            let bound = 1.0 / (*fan_in as f64).sqrt();
            let n: usize = shape.iter().product();
            ParamBlock {
                name: name.clone(),
                shape: shape.clone(),
                data: (0..n).map(|_| rng.random_range(-bound..=bound)).collect(),
            }
        })
        .collect();
    ParamSet { blocks }
}
