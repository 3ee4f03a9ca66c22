//! The DViT classifier: convolutional stem, four deformable stages, patch
//! embedding with CLS token, transformer encoder and linear head.

use dvit_nn::{
    drop_path, dropout, init::trunc_normal, init::INIT_STD, BatchNorm2d, Conv2d, Ctx, Dcnv4Block, Dcnv4Config, Decay,
    LayerNorm, Linear, Mlp, Module, MultiHeadAttention,
};
use dvit_tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Names of the spatial layers exposed for Grad-CAM, in forward order.
pub const LAYER_NAMES: [&str; 5] = ["stem", "stage1", "stage2", "stage3", "stage4"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub input_size: usize,
    pub stage_channels: Vec<usize>,
    pub stage_depths: Vec<usize>,
    pub offset_scale: f64,
    pub backbone_droppath_max: f64,
    pub embed_dim: usize,
    pub encoder_depth: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub mlp_dim: usize,
    pub attn_dropout: f64,
    pub embed_dropout: f64,
    pub encoder_droppath_max: f64,
    pub num_classes: usize,
    /// Channels per deformable group; groups = max(C / this, 1).
    pub dcn_group_channels: usize,
    pub dcn_kernel_points: usize,
    pub dcn_mlp_ratio: f64,
    pub layer_scale_init: Option<f64>,
    pub mlp_dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::paper(8)
    }
}

impl ModelConfig {
    pub fn paper(num_classes: usize) -> Self {
        ModelConfig {
            in_channels: 3,
            input_size: 512,
            stage_channels: vec![80, 160, 320, 640],
            stage_depths: vec![3, 4, 16, 6],
            offset_scale: 1.0,
            backbone_droppath_max: 0.20,
            embed_dim: 384,
            encoder_depth: 7,
            heads: 8,
            head_dim: 48,
            mlp_dim: 1536,
            attn_dropout: 0.1,
            embed_dropout: 0.1,
            encoder_droppath_max: 0.15,
            num_classes,
            dcn_group_channels: 16,
            dcn_kernel_points: 9,
            dcn_mlp_ratio: 4.0,
            layer_scale_init: Some(1e-5),
            mlp_dropout: 0.0,
        }
    }

    /// Reduced configuration for desk-scale experiments.
    pub fn tiny(num_classes: usize) -> Self {
        ModelConfig {
            input_size: 32,
            stage_channels: vec![16, 32, 64, 128],
            stage_depths: vec![1, 1, 2, 1],
            embed_dim: 64,
            encoder_depth: 2,
            heads: 2,
            head_dim: 32,
            mlp_dim: 256,
            ..ModelConfig::paper(num_classes)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoreError::Config(m));
        if self.stage_channels.len() != 4 || self.stage_depths.len() != 4 {
            return bad("stage_channels and stage_depths need exactly 4 entries".into());
        }
        if self.stage_channels.iter().any(|&c| c < 2) || self.stage_depths.iter().any(|&d| d == 0) {
            return bad("stage channels must be >= 2 and depths >= 1".into());
        }
        if self.stage_channels[0] % 2 != 0 {
            return bad(format!("first stage width {} must be even", self.stage_channels[0]));
        }
        if self.input_size == 0 || self.input_size % 32 != 0 {
            return bad(format!("input_size {} is not a positive multiple of 32", self.input_size));
        }
        if self.heads == 0 || self.head_dim == 0 || self.heads * self.head_dim != self.embed_dim {
            return bad(format!(
                "heads × head_dim = {}×{} does not equal embed_dim {}",
                self.heads, self.head_dim, self.embed_dim
            ));
        }
        if self.in_channels == 0 || self.num_classes == 0 || self.encoder_depth == 0 || self.mlp_dim == 0 {
            return bad("in_channels, num_classes, encoder_depth and mlp_dim must be positive".into());
        }
        for (name, r) in [
            ("backbone_droppath_max", self.backbone_droppath_max),
            ("encoder_droppath_max", self.encoder_droppath_max),
            ("attn_dropout", self.attn_dropout),
            ("embed_dropout", self.embed_dropout),
            ("mlp_dropout", self.mlp_dropout),
        ] {
            if !(0.0..1.0).contains(&r) {
                return bad(format!("{name} = {r} outside [0, 1)"));
            }
        }
        if self.dcn_group_channels == 0 {
            return bad("dcn_group_channels must be positive".into());
        }
        for (i, &c) in self.stage_channels.iter().enumerate() {
            self.dcn_config(i, 0.0).validate()?;
            if c % self.groups(c) != 0 {
                return bad(format!("stage {} width {c} not divisible into groups", i + 1));
            }
        }
        Ok(())
    }

    fn groups(&self, c: usize) -> usize {
        (c / self.dcn_group_channels).max(1)
    }

    pub fn dcn_config(&self, stage: usize, droppath_rate: f64) -> Dcnv4Config {
        let c = self.stage_channels[stage];
        Dcnv4Config {
            channels: c,
            groups: self.groups(c),
            kernel_points: self.dcn_kernel_points,
            offset_scale: self.offset_scale,
            layer_scale_init: self.layer_scale_init,
            droppath_rate,
            mlp_ratio: self.dcn_mlp_ratio,
        }
    }

    /// Side of the final feature map.
    pub fn grid(&self) -> usize {
        self.input_size / 32
    }

    /// Encoder sequence length including the CLS token.
    pub fn tokens(&self) -> usize {
        self.grid() * self.grid() + 1
    }
}

/// `n` rates spaced evenly from 0 to `max` inclusive.
pub fn linspace_rates(max: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| max * i as f64 / (n - 1) as f64).collect(),
    }
}

fn nchw_to_nhwc(x: &Tensor) -> Result<Tensor> {
    Ok(x.permute(&[0, 2, 3, 1])?)
}

fn nhwc_to_nchw(x: &Tensor) -> Result<Tensor> {
    Ok(x.permute(&[0, 3, 1, 2])?)
}

#[derive(Debug, Clone)]
pub struct Stem {
    pub conv1: Conv2d,
    pub bn1: BatchNorm2d,
    pub conv2: Conv2d,
    pub bn2: BatchNorm2d,
}

impl Stem {
    fn forward(&self, x: &Tensor, ctx: &Ctx) -> Result<Tensor> {
        let h = self.bn1.forward(&self.conv1.forward(x)?, ctx.training)?.gelu();
        Ok(self.bn2.forward(&self.conv2.forward(&h)?, ctx.training)?.gelu())
    }
}

#[derive(Debug, Clone)]
pub struct Downsample {
    pub conv: Conv2d,
    pub norm: LayerNorm,
}

#[derive(Debug, Clone)]
pub struct Stage {
    pub down: Option<Downsample>,
    pub blocks: Vec<Dcnv4Block>,
}

impl Stage {
    /// NCHW in, NCHW out.
    fn forward(&self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        let mut h = match &self.down {
            Some(d) => d.norm.forward(&nchw_to_nhwc(&d.conv.forward(x)?)?)?,
            None => nchw_to_nhwc(x)?,
        };
        for b in &self.blocks {
            h = b.forward(&h, ctx)?;
        }
        nhwc_to_nchw(&h)
    }
}

#[derive(Debug, Clone)]
pub struct EncoderBlock {
    pub norm1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub mlp: Mlp,
    pub droppath_rate: f64,
}

impl EncoderBlock {
    fn forward(&self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        let a = self.attn.forward(&self.norm1.forward(x)?, ctx)?;
        let x = x.add(&drop_path(&a, self.droppath_rate, ctx)?)?;
        let m = self.mlp.forward(&self.norm2.forward(&x)?, ctx)?;
        Ok(x.add(&drop_path(&m, self.droppath_rate, ctx)?)?)
    }
}

/// Intermediate results of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `(name, NCHW activation)` for each entry of [`LAYER_NAMES`].
    pub layers: Vec<(&'static str, Tensor)>,
    /// Encoder input, `(N, T, D)`.
    pub tokens: Tensor,
    pub logits: Tensor,
}

impl Trace {
    pub fn layer(&self, name: &str) -> Option<&Tensor> {
        self.layers.iter().find(|(n, _)| *n == name).map(|(_, t)| t)
    }
}

#[derive(Debug, Clone)]
pub struct Dvit {
    pub cfg: ModelConfig,
    pub stem: Stem,
    pub stages: Vec<Stage>,
    pub embed: Linear,
    pub cls_token: Tensor,
    pub pos_embed: Tensor,
    pub encoder: Vec<EncoderBlock>,
    pub norm: LayerNorm,
    pub head: Linear,
}

impl Dvit {
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rng = &mut rng;
        let ch = &cfg.stage_channels;
        let half = ch[0] / 2;
        let stem = Stem {
            conv1: Conv2d::new(cfg.in_channels, half, 3, 2, 1, rng)?,
            bn1: BatchNorm2d::new(half)?,
            conv2: Conv2d::new(half, ch[0], 3, 2, 1, rng)?,
            bn2: BatchNorm2d::new(ch[0])?,
        };
        let total: usize = cfg.stage_depths.iter().sum();
        let rates = linspace_rates(cfg.backbone_droppath_max, total);
        let mut next = 0;
        let mut stages = Vec::with_capacity(4);
        for i in 0..4 {
            let down = if i == 0 {
                None
            } else {
                Some(Downsample {
                    conv: Conv2d::new(ch[i - 1], ch[i], 3, 2, 1, rng)?,
                    norm: LayerNorm::new(ch[i])?,
                })
            };
            let mut blocks = Vec::with_capacity(cfg.stage_depths[i]);
            for _ in 0..cfg.stage_depths[i] {
                blocks.push(Dcnv4Block::new(&cfg.dcn_config(i, rates[next]), rng)?);
                next += 1;
            }
            stages.push(Stage { down, blocks });
        }
        let d = cfg.embed_dim;
        let embed = Linear::new(ch[3], d, rng)?;
        let cls_token = Tensor::param(trunc_normal(rng, d, INIT_STD), &[1, 1, d])?;
        let pos_embed = Tensor::param(vec![0.0; cfg.tokens() * d], &[1, cfg.tokens(), d])?;
        let enc_rates = linspace_rates(cfg.encoder_droppath_max, cfg.encoder_depth);
        let mut encoder = Vec::with_capacity(cfg.encoder_depth);
        for &rate in &enc_rates {
            encoder.push(EncoderBlock {
                norm1: LayerNorm::new(d)?,
                attn: MultiHeadAttention::new(d, cfg.heads, cfg.head_dim, cfg.attn_dropout, rng)?,
                norm2: LayerNorm::new(d)?,
                mlp: Mlp::new(d, cfg.mlp_dim, cfg.mlp_dropout, rng)?,
                droppath_rate: rate,
            });
        }
        Ok(Dvit {
            cfg: cfg.clone(),
            stem,
            stages,
            embed,
            cls_token,
            pos_embed,
            encoder,
            norm: LayerNorm::new(d)?,
            head: Linear::new(d, cfg.num_classes, rng)?,
        })
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let s = x.shape();
        let n = self.cfg.input_size;
        if s.len() != 4 || s[1] != self.cfg.in_channels || s[2] != n || s[3] != n {
            return Err(CoreError::Config(format!(
                "expected input N×{}×{n}×{n}, got {s:?}",
                self.cfg.in_channels
            )));
        }
        Ok(())
    }

    /// Stem and stage activations, all NCHW.
    pub fn forward_backbone(&self, x: &Tensor, ctx: &mut Ctx) -> Result<Vec<(&'static str, Tensor)>> {
        self.check_input(x)?;
        let mut layers = Vec::with_capacity(5);
        let mut h = self.stem.forward(x, ctx)?;
        layers.push((LAYER_NAMES[0], h.clone()));
        for (i, stage) in self.stages.iter().enumerate() {
            h = stage.forward(&h, ctx)?;
            layers.push((LAYER_NAMES[i + 1], h.clone()));
        }
        Ok(layers)
    }

    /// One token per final-map location, CLS first, plus positions.
    pub fn patch_embed(&self, fmap: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        let s = fmap.shape();
        let (c, g) = (self.cfg.stage_channels[3], self.cfg.grid());
        if s.len() != 4 || s[1] != c || s[2] != g || s[3] != g {
            return Err(CoreError::Config(format!("expected feature map N×{c}×{g}×{g}, got {s:?}")));
        }
        let n = s[0];
        let flat = nchw_to_nhwc(fmap)?.reshape(&[n, g * g, c])?;
        let patches = self.embed.forward(&flat)?;
        let d = self.cfg.embed_dim;
        let cls = self.cls_token.broadcast_to(&[n, 1, d])?;
        let tokens = Tensor::concat(&[cls, patches], 1)?.add(&self.pos_embed)?;
        Ok(dropout(&tokens, self.cfg.embed_dropout, ctx)?)
    }

    pub fn encode(&self, tokens: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        let mut h = tokens.clone();
        for b in &self.encoder {
            h = b.forward(&h, ctx)?;
        }
        Ok(h)
    }

    /// Logits from the normalized CLS output.
    pub fn classify(&self, encoded: &Tensor) -> Result<Tensor> {
        let cls = encoded.select(1, 0)?;
        Ok(self.head.forward(&self.norm.forward(&cls)?)?)
    }

    /// Normalized CLS representation, `N×D`; the input to the head.
    pub fn features(&self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        let layers = self.forward_backbone(x, ctx)?;
        let encoded = self.encode(&self.patch_embed(&layers[4].1, ctx)?, ctx)?;
        Ok(self.norm.forward(&encoded.select(1, 0)?)?)
    }

    pub fn forward_traced(&self, x: &Tensor, ctx: &mut Ctx) -> Result<Trace> {
        let layers = self.forward_backbone(x, ctx)?;
        let tokens = self.patch_embed(&layers[4].1, ctx)?;
        let logits = self.classify(&self.encode(&tokens, ctx)?)?;
        Ok(Trace { layers, tokens, logits })
    }

    pub fn forward(&self, x: &Tensor, ctx: &mut Ctx) -> Result<Tensor> {
        Ok(self.forward_traced(x, ctx)?.logits)
    }
}

macro_rules! visit_model {
    ($self:ident, $prefix:ident, $f:ident, $visit:ident, $param:tt) => {{
        let p = |s: &str| dvit_nn::module::join($prefix, s);
        $self.stem.conv1.$visit(&p("stem.conv1"), $f);
        $self.stem.bn1.$visit(&p("stem.bn1"), $f);
        $self.stem.conv2.$visit(&p("stem.conv2"), $f);
        $self.stem.bn2.$visit(&p("stem.bn2"), $f);
        for (i, st) in visit_model!(@iter $self.stages, $param).enumerate() {
            if let Some(d) = visit_model!(@opt st.down, $param) {
                d.conv.$visit(&p(&format!("stages.{i}.down.conv")), $f);
                d.norm.$visit(&p(&format!("stages.{i}.down.norm")), $f);
            }
            for (j, b) in visit_model!(@iter st.blocks, $param).enumerate() {
                b.$visit(&p(&format!("stages.{i}.blocks.{j}")), $f);
            }
        }
        $self.embed.$visit(&p("embed"), $f);
        visit_model!(@leaf $f, p("cls_token"), $self.cls_token, $param);
        visit_model!(@leaf $f, p("pos_embed"), $self.pos_embed, $param);
        for (i, b) in visit_model!(@iter $self.encoder, $param).enumerate() {
            let q = p(&format!("encoder.{i}"));
            b.norm1.$visit(&dvit_nn::module::join(&q, "norm1"), $f);
            b.attn.$visit(&dvit_nn::module::join(&q, "attn"), $f);
            b.norm2.$visit(&dvit_nn::module::join(&q, "norm2"), $f);
            b.mlp.$visit(&dvit_nn::module::join(&q, "mlp"), $f);
        }
        $self.norm.$visit(&p("norm"), $f);
        $self.head.$visit(&p("head"), $f);
    }};
    (@iter $e:expr, ref) => { $e.iter() };
    (@iter $e:expr, mut) => { $e.iter_mut() };
    (@opt $e:expr, ref) => { $e.as_ref() };
    (@opt $e:expr, mut) => { $e.as_mut() };
    (@leaf $f:ident, $name:expr, $t:expr, ref) => { $f(&$name, &$t, Decay::Skip) };
    (@leaf $f:ident, $name:expr, $t:expr, mut) => { $f(&$name, &mut $t) };
    (@leaf $f:ident, $name:expr, $t:expr, buf) => { };
    (@leaf $f:ident, $name:expr, $t:expr, bufmut) => { };
    (@iter $e:expr, buf) => { $e.iter() };
    (@iter $e:expr, bufmut) => { $e.iter_mut() };
    (@opt $e:expr, buf) => { $e.as_ref() };
    (@opt $e:expr, bufmut) => { $e.as_mut() };
}

impl Module for Dvit {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor, Decay)) {
        visit_model!(self, prefix, f, visit, ref)
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        visit_model!(self, prefix, f, visit_mut, mut)
    }

    fn visit_buffers(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        visit_model!(self, prefix, f, visit_buffers, buf)
    }

    fn visit_buffers_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        visit_model!(self, prefix, f, visit_buffers_mut, bufmut)
    }
}
