use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub d_hidden: usize,
    pub n_levels: usize,
    pub max_len: usize,
}

impl ModelConfig {
    pub fn new(vocab_size: usize, d_model: usize, n_levels: usize, max_len: usize) -> Self {
        ModelConfig {
            vocab_size,
            d_model,
            d_hidden: 2 * d_model,
            n_levels,
            max_len,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size <= super::UNK + 1 {
            return Err(Error::Config(format!("vocab_size {} leaves no words", self.vocab_size)));
        }
        if self.d_model == 0 || self.d_hidden == 0 || self.n_levels == 0 || self.max_len == 0 {
            return Err(Error::Config(format!("degenerate model config {self:?}")));
        }
        Ok(())
    }
}

/// Named parameter blocks, in storage order. Matrices are row-major;
/// `(rows, cols)` from [`ParamGroup::shape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    WordEmb,
    LevelEmb,
    PosEmb,
    ImageProj,
    Query,
    Key,
    Value,
    AttnOut,
    FfnIn,
    FfnInBias,
    FfnOut,
    FfnOutBias,
    OutProj,
    OutBias,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 14] = [
        ParamGroup::WordEmb,
        ParamGroup::LevelEmb,
        ParamGroup::PosEmb,
        ParamGroup::ImageProj,
        ParamGroup::Query,
        ParamGroup::Key,
        ParamGroup::Value,
        ParamGroup::AttnOut,
        ParamGroup::FfnIn,
        ParamGroup::FfnInBias,
        ParamGroup::FfnOut,
        ParamGroup::FfnOutBias,
        ParamGroup::OutProj,
        ParamGroup::OutBias,
    ];

    pub fn shape(self, cfg: &ModelConfig) -> (usize, usize) {
        let (v, d, h) = (cfg.vocab_size, cfg.d_model, cfg.d_hidden);
        match self {
            ParamGroup::WordEmb => (v, d),
            ParamGroup::LevelEmb => (cfg.n_levels, d),
            ParamGroup::PosEmb => (cfg.max_len, d),
            ParamGroup::ImageProj | ParamGroup::Query | ParamGroup::Key | ParamGroup::Value | ParamGroup::AttnOut => {
                (d, d)
            }
            ParamGroup::FfnIn => (h, d),
            ParamGroup::FfnInBias => (h, 1),
            ParamGroup::FfnOut => (d, h),
            ParamGroup::FfnOutBias => (d, 1),
            // row per output token, i.e. the transpose of a d x |V| projection
            ParamGroup::OutProj => (v, d),
            ParamGroup::OutBias => (v, 1),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::WordEmb => "word_emb",
            ParamGroup::LevelEmb => "level_emb",
            ParamGroup::PosEmb => "pos_emb",
            ParamGroup::ImageProj => "image_proj",
            ParamGroup::Query => "query",
            ParamGroup::Key => "key",
            ParamGroup::Value => "value",
            ParamGroup::AttnOut => "attn_out",
            ParamGroup::FfnIn => "ffn_in",
            ParamGroup::FfnInBias => "ffn_in_bias",
            ParamGroup::FfnOut => "ffn_out",
            ParamGroup::FfnOutBias => "ffn_out_bias",
            ParamGroup::OutProj => "out_proj",
            ParamGroup::OutBias => "out_bias",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    offsets: [usize; 14],
    total: usize,
}

impl Layout {
    fn new(cfg: &ModelConfig) -> Self {
        let mut offsets = [0; 14];
        let mut total = 0;
        for (i, g) in ParamGroup::ALL.iter().enumerate() {
            offsets[i] = total;
            let (r, c) = g.shape(cfg);
            total += r * c;
        }
        Layout { offsets, total }
    }

    fn range(&self, cfg: &ModelConfig, g: ParamGroup) -> std::ops::Range<usize> {
        let start = self.offsets[g as usize];
        let (r, c) = g.shape(cfg);
        start..start + r * c
    }
}

/// All trainable weights in one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    cfg: ModelConfig,
    layout: Layout,
    data: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::new(&cfg);
        let data = vec![0.0; layout.total];
        Ok(PolicyParams { cfg, layout, data })
    }

    /// Uniform(-0.1, 0.1) everywhere.
    pub fn init(cfg: ModelConfig, rng: &mut Rng) -> Result<Self> {
        let mut p = Self::zeros(cfg)?;
        for x in &mut p.data {
            *x = rng.gen_range(-0.1..0.1);
        }
        Ok(p)
    }

    pub fn from_groups(cfg: ModelConfig, groups: &[(ParamGroup, Vec<f64>)]) -> Result<Self> {
        let mut p = Self::zeros(cfg)?;
        for g in ParamGroup::ALL {
            let (_, values) = groups
                .iter()
                .find(|(h, _)| *h == g)
                .ok_or_else(|| Error::Format(format!("missing parameter group {}", g.name())))?;
            let dst = p.group_mut(g);
            if dst.len() != values.len() {
                return Err(Error::Format(format!(
                    "parameter group {} has {} values, expected {}",
                    g.name(),
                    values.len(),
                    dst.len()
                )));
            }
            dst.copy_from_slice(values);
        }
        Ok(p)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn group(&self, g: ParamGroup) -> &[f64] {
        &self.data[self.layout.range(&self.cfg, g)]
    }

    pub fn group_mut(&mut self, g: ParamGroup) -> &mut [f64] {
        let r = self.layout.range(&self.cfg, g);
        &mut self.data[r]
    }

    /// Row `i` of a matrix group.
    pub fn row(&self, g: ParamGroup, i: usize) -> &[f64] {
        let (_, c) = g.shape(&self.cfg);
        &self.group(g)[i * c..(i + 1) * c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Which group owns flat index `i`.
    pub fn group_of(&self, i: usize) -> ParamGroup {
        ParamGroup::ALL
            .into_iter()
            .find(|g| self.layout.range(&self.cfg, *g).contains(&i))
            .expect("index within parameter buffer")
    }

    pub fn zeroed_gradients(&self) -> Gradients {
        Gradients {
            data: vec![0.0; self.data.len()],
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub(crate) fn layout_range(&self, g: ParamGroup) -> std::ops::Range<usize> {
        self.layout.range(&self.cfg, g)
    }
}

/// Gradient buffer laid out like [`PolicyParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    data: Vec<f64>,
}

impl Gradients {
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn group<'a>(&'a self, params: &PolicyParams, g: ParamGroup) -> &'a [f64] {
        &self.data[params.layout_range(g)]
    }

    pub fn zero_group(&mut self, params: &PolicyParams, g: ParamGroup) {
        for x in &mut self.data[params.layout_range(g)] {
            *x = 0.0;
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }
}
