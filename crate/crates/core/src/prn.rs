//! Progressive refinement network: a guidance-conditioned encoder–decoder
//! with alpha side outputs at output strides 8, 4 and 1, fused coarse to
//! fine. Each finer level only replaces the pixels its predecessor left
//! uncertain (`0 < alpha < 1`, slightly dilated). Also hosts the foreground
//! colour network, which shares the backbone family.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, ModelKind};
use crate::error::{shape_err, MatteError, Result};
use crate::guidance::dilate;
use crate::matte::{ensure_same, AlphaMatte, ImagePlane, RegionMask};
use crate::nn::{ConvSpec, ParamId, ParamStore, Tape, Tensor, Var};

/// Output stride of each prediction level, coarse to fine.
pub const OUTPUT_STRIDES: [usize; 3] = [8, 4, 1];

/// Spatial sizes fed to the backbone must be multiples of this.
pub const SIZE_MULTIPLE: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackboneConfig {
    pub input_channels: usize,
    /// Channel widths at strides 1, 2, 4 and 8.
    pub encoder_widths: Vec<usize>,
    /// Multi-rate dilated context block at the stride-8 bottleneck.
    pub use_context_pooling: bool,
    pub context_rates: Vec<usize>,
    /// Concatenate the raw network input into the stride-1 decoder stage.
    pub input_shortcut: bool,
    /// Conv-Norm-ReLU layers in the stride-1 decoder stage.
    pub fine_decoder_depth: usize,
    /// Channels per normalization group.
    pub norm_group_size: usize,
    pub init_seed: u64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            input_channels: 4,
            encoder_widths: vec![16, 32, 64, 128],
            use_context_pooling: true,
            context_rates: vec![1, 2, 4],
            input_shortcut: true,
            fine_decoder_depth: 2,
            norm_group_size: 4,
            init_seed: 0,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_channels != 4 {
            return Err(MatteError::Config(format!(
                "the backbone takes 4 input channels, got {}",
                self.input_channels
            )));
        }
        if self.encoder_widths.len() != 4 {
            return Err(MatteError::Config(
                "encoder_widths needs one width per stride 1, 2, 4, 8".into(),
            ));
        }
        if self.fine_decoder_depth == 0 {
            return Err(MatteError::Config("fine_decoder_depth must be >= 1".into()));
        }
        if self.norm_group_size == 0 {
            return Err(MatteError::Config("norm_group_size must be >= 1".into()));
        }
        for &w in &self.encoder_widths {
            if w == 0 || w % self.norm_group_size != 0 {
                return Err(MatteError::Config(format!(
                    "width {w} is not a positive multiple of norm_group_size {}",
                    self.norm_group_size
                )));
            }
        }
        if self.use_context_pooling && (self.context_rates.is_empty() || self.context_rates.contains(&0)) {
            return Err(MatteError::Config(
                "context_rates must be non-empty and positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrnConfig {
    pub backbone: BackboneConfig,
    /// Hidden width of the Conv-Norm-ReLU-Conv side heads.
    pub head_channels: usize,
    /// Self-guidance dilation `(K1, K2)` used at inference.
    pub test_dilation: (usize, usize),
}

impl Default for PrnConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneConfig::default(),
            head_channels: 32,
            test_dilation: (15, 7),
        }
    }
}

impl PrnConfig {
    /// Narrow variant for quick experiments and tests.
    pub fn tiny() -> Self {
        Self {
            backbone: BackboneConfig {
                encoder_widths: vec![8, 16, 32, 64],
                ..Default::default()
            },
            head_channels: 16,
            test_dilation: (15, 7),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        if self.head_channels == 0 || !self.head_channels.is_multiple_of(self.backbone.norm_group_size) {
            return Err(MatteError::Config(
                "head_channels must be a multiple of norm_group_size".into(),
            ));
        }
        let (k1, k2) = self.test_dilation;
        if k1 % 2 == 0 || k2 % 2 == 0 {
            return Err(MatteError::Config("test dilation kernels must be odd".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct ConvNormRelu {
    w: ParamId,
    gamma: ParamId,
    beta: ParamId,
    groups: usize,
    spec: ConvSpec,
}

impl ConvNormRelu {
    fn new(
        p: &mut ParamStore,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        spec: ConvSpec,
        group_size: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            w: p.add_conv(&format!("{name}.conv"), cout, cin, k, 1.0, rng),
            gamma: p.add_const(&format!("{name}.norm.weight"), cout, 1.0),
            beta: p.add_const(&format!("{name}.norm.bias"), cout, 0.0),
            groups: cout / group_size,
            spec,
        }
    }

    fn apply(&self, t: &mut Tape<'_>, x: Var) -> Var {
        let y = t.conv2d(x, self.w, None, self.spec);
        let y = t.group_norm(y, self.gamma, self.beta, self.groups);
        t.relu(y)
    }
}

/// Conv-Norm-ReLU-Conv prediction head.
#[derive(Clone, Copy, Debug)]
struct Head {
    hidden: ConvNormRelu,
    out_w: ParamId,
    out_b: ParamId,
}

impl Head {
    fn new(
        p: &mut ParamStore,
        name: &str,
        cin: usize,
        hidden: usize,
        cout: usize,
        group_size: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let h = ConvNormRelu::new(
            p,
            &format!("{name}.0"),
            cin,
            hidden,
            3,
            ConvSpec::same(3),
            group_size,
            rng,
        );
        Self {
            hidden: h,
            out_w: p.add_conv(&format!("{name}.1.conv"), cout, hidden, 1, 0.5, rng),
            out_b: p.add_const(&format!("{name}.1.bias"), cout, 0.5),
        }
    }

    fn apply(&self, t: &mut Tape<'_>, x: Var) -> Var {
        let h = self.hidden.apply(t, x);
        let y = t.conv2d(h, self.out_w, Some(self.out_b), ConvSpec::same(1));
        t.clamp01(y)
    }
}

#[derive(Clone, Debug)]
struct Backbone {
    enc: [ConvNormRelu; 4],
    context: Option<(Vec<ConvNormRelu>, ConvNormRelu)>,
    dec4: ConvNormRelu,
    dec2: ConvNormRelu,
    dec1: Vec<ConvNormRelu>,
    input_shortcut: bool,
}

/// Decoder features at output strides 8, 4 and 1.
struct Features {
    s8: Var,
    s4: Var,
    s1: Var,
}

impl Backbone {
    fn new(cfg: &BackboneConfig, p: &mut ParamStore, rng: &mut ChaCha8Rng) -> Self {
        let w = &cfg.encoder_widths;
        let gs = cfg.norm_group_size;
        let s3 = ConvSpec::same(3);
        let shortcut = if cfg.input_shortcut { cfg.input_channels } else { 0 };
        let enc = [
            ConvNormRelu::new(p, "enc0", cfg.input_channels, w[0], 3, s3, gs, rng),
            ConvNormRelu::new(p, "enc1", w[0], w[1], 3, s3, gs, rng),
            ConvNormRelu::new(p, "enc2", w[1], w[2], 3, s3, gs, rng),
            ConvNormRelu::new(p, "enc3", w[2], w[3], 3, s3, gs, rng),
        ];
        let context = cfg.use_context_pooling.then(|| {
            let branches: Vec<_> = cfg
                .context_rates
                .iter()
                .map(|&r| {
                    ConvNormRelu::new(
                        p,
                        &format!("context.rate{r}"),
                        w[3],
                        w[3],
                        3,
                        ConvSpec::dilated(3, r),
                        gs,
                        rng,
                    )
                })
                .collect();
            let fuse = ConvNormRelu::new(
                p,
                "context.fuse",
                w[3] * cfg.context_rates.len(),
                w[3],
                1,
                ConvSpec::same(1),
                gs,
                rng,
            );
            (branches, fuse)
        });
        Self {
            enc,
            context,
            dec4: ConvNormRelu::new(p, "dec4", w[3] + w[2], w[2], 3, s3, gs, rng),
            dec2: ConvNormRelu::new(p, "dec2", w[2] + w[1], w[1], 3, s3, gs, rng),
            dec1: (0..cfg.fine_decoder_depth)
                .map(|i| {
                    let cin = if i == 0 { w[1] + w[0] + shortcut } else { w[0] };
                    let name = if i == 0 {
                        "dec1".to_string()
                    } else {
                        format!("dec1.{i}")
                    };
                    ConvNormRelu::new(p, &name, cin, w[0], 3, s3, gs, rng)
                })
                .collect(),
            input_shortcut: cfg.input_shortcut,
        }
    }

    fn apply(&self, t: &mut Tape<'_>, x: Var) -> Features {
        let e0 = self.enc[0].apply(t, x);
        let p = t.avg_pool2(e0);
        let e1 = self.enc[1].apply(t, p);
        let p = t.avg_pool2(e1);
        let e2 = self.enc[2].apply(t, p);
        let p = t.avg_pool2(e2);
        let e3 = self.enc[3].apply(t, p);
        let s8 = match &self.context {
            Some((branches, fuse)) => {
                let mut cat = branches[0].apply(t, e3);
                for b in &branches[1..] {
                    let y = b.apply(t, e3);
                    cat = t.concat(cat, y);
                }
                let fused = fuse.apply(t, cat);
                t.add(fused, e3)
            }
            None => e3,
        };
        let up = |t: &mut Tape<'_>, v: Var, like: Var| {
            let (h, w) = (t.value(like).height, t.value(like).width);
            t.upsample(v, h, w)
        };
        let u = up(t, s8, e2);
        let c = t.concat(u, e2);
        let s4 = self.dec4.apply(t, c);
        let u = up(t, s4, e1);
        let c = t.concat(u, e1);
        let s2 = self.dec2.apply(t, c);
        let u = up(t, s2, e0);
        let mut c = t.concat(u, e0);
        if self.input_shortcut {
            c = t.concat(c, x);
        }
        let s1 = self.dec1.iter().fold(c, |v, layer| layer.apply(t, v));
        Features { s8, s4, s1 }
    }
}

fn input_tensor(image: &ImagePlane, extra: &AlphaMatte) -> Result<Tensor> {
    ensure_same(image, extra, "network input")?;
    if image.channels() != 3 {
        return shape_err("network image input must be RGB");
    }
    let mut data = Vec::with_capacity(4 * extra.data().len());
    data.extend_from_slice(image.data());
    data.extend_from_slice(extra.data());
    Ok(Tensor::new(4, image.height(), image.width(), data))
}

fn check_trainable_size(h: usize, w: usize) -> Result<()> {
    if !h.is_multiple_of(SIZE_MULTIPLE) || !w.is_multiple_of(SIZE_MULTIPLE) {
        return shape_err(format!("{h}x{w} is not a multiple of {SIZE_MULTIPLE}"));
    }
    Ok(())
}

fn tensor_to_matte(t: &Tensor) -> AlphaMatte {
    AlphaMatte::new(t.height, t.width, t.data.clone()).expect("network output plane")
}

/// Where the finer levels' guidance masks come from.
#[derive(Clone, Debug, PartialEq)]
pub enum SelfGuidance {
    /// Computed from the previous level's fused output, dilated by `(k1, k2)`.
    Computed { k1: usize, k2: usize },
    /// Externally supplied `g1`, `g2`.
    Override([RegionMask; 2]),
}

/// Per-level raw and fused mattes plus the self-guidance masks; all at full
/// input resolution. `self_guidance[0]` is all ones.
#[derive(Clone, Debug, PartialEq)]
pub struct PyramidPrediction {
    pub raw: [AlphaMatte; 3],
    pub fused: [AlphaMatte; 3],
    pub self_guidance: [RegionMask; 3],
}

impl PyramidPrediction {
    /// The network's final output.
    pub fn alpha(&self) -> &AlphaMatte {
        &self.fused[2]
    }

    fn crop(&self, h: usize, w: usize) -> Result<Self> {
        let c = |a: &AlphaMatte| a.crop(0, 0, h, w);
        let m = |g: &RegionMask| g.crop(0, 0, h, w);
        Ok(Self {
            raw: [c(&self.raw[0])?, c(&self.raw[1])?, c(&self.raw[2])?],
            fused: [c(&self.fused[0])?, c(&self.fused[1])?, c(&self.fused[2])?],
            self_guidance: [
                m(&self.self_guidance[0])?,
                m(&self.self_guidance[1])?,
                m(&self.self_guidance[2])?,
            ],
        })
    }
}

/// Tape handles for one recorded pyramid.
pub struct PyramidVars {
    pub raw: [Var; 3],
    pub fused: [Var; 3],
    pub masks: [RegionMask; 3],
}

/// `g = 1` where `0 < alpha_prev < 1`, then dilated by a `k x k` square.
pub fn self_guidance_from(alpha_prev: &AlphaMatte, dilation_k: usize) -> Result<RegionMask> {
    dilate(&alpha_prev.transition_region(), dilation_k)
}

/// `alpha = raw * g + prev * (1 - g)`, evaluated as an exact per-pixel selection.
pub fn prm_fuse(alpha_raw: &AlphaMatte, alpha_prev: &AlphaMatte, g: &RegionMask) -> Result<AlphaMatte> {
    ensure_same(alpha_raw, alpha_prev, "prm_fuse")?;
    ensure_same(alpha_raw, g, "prm_fuse mask")?;
    let data = alpha_raw
        .data()
        .iter()
        .zip(alpha_prev.data())
        .zip(g.data())
        .map(|((&r, &p), &m)| if m == 1 { r } else { p })
        .collect();
    AlphaMatte::new(alpha_raw.height(), alpha_raw.width(), data)
}

fn pad_plane(p: &ImagePlane, h: usize, w: usize) -> ImagePlane {
    if (p.height(), p.width()) == (h, w) {
        return p.clone();
    }
    let mut data = Vec::with_capacity(h * w * p.channels());
    for c in 0..p.channels() {
        for y in 0..h {
            for x in 0..w {
                data.push(p.get(c, y.min(p.height() - 1), x.min(p.width() - 1)));
            }
        }
    }
    ImagePlane::new(h, w, p.channels(), data).expect("padded plane")
}

fn pad_matte(a: &AlphaMatte, h: usize, w: usize) -> AlphaMatte {
    AlphaMatte::from_plane(&pad_plane(&a.to_plane(), h, w)).expect("padded matte")
}

fn pad_mask(m: &RegionMask, h: usize, w: usize) -> RegionMask {
    RegionMask::from_fn(h, w, |y, x| y < m.height() && x < m.width() && m.get(y, x))
}

fn round_up(v: usize) -> usize {
    v.div_ceil(SIZE_MULTIPLE) * SIZE_MULTIPLE
}

#[derive(Clone, Debug)]
pub struct PrnModel {
    config: PrnConfig,
    params: ParamStore,
    backbone: Backbone,
    heads: [Head; 3],
}

impl PrnModel {
    pub fn new(config: PrnConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.backbone.init_seed);
        let mut params = ParamStore::new();
        let backbone = Backbone::new(&config.backbone, &mut params, &mut rng);
        let w = &config.backbone.encoder_widths;
        let (hc, gs) = (config.head_channels, config.backbone.norm_group_size);
        let heads = [
            Head::new(&mut params, "head.os8", w[3], hc, 1, gs, &mut rng),
            Head::new(&mut params, "head.os4", w[2], hc, 1, gs, &mut rng),
            Head::new(&mut params, "head.os1", w[0], w[0], 1, gs, &mut rng),
        ];
        Ok(Self {
            config,
            params,
            backbone,
            heads,
        })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.kind != ModelKind::Prn {
            return Err(MatteError::Checkpoint(format!(
                "expected a matting checkpoint, found {:?}",
                ckpt.kind
            )));
        }
        let config: PrnConfig = serde_json::from_value(ckpt.model_config.clone())
            .map_err(|e| MatteError::Checkpoint(format!("model config: {e}")))?;
        let mut model = Self::new(config)?;
        model.params.load_from(&ckpt.params)?;
        Ok(model)
    }

    pub fn config(&self) -> &PrnConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Records a forward pass on `tape`; sizes must be multiples of 8.
    pub fn record(
        &self,
        tape: &mut Tape<'_>,
        image: &ImagePlane,
        guidance: &AlphaMatte,
        mode: &SelfGuidance,
    ) -> Result<PyramidVars> {
        let (h, w) = (image.height(), image.width());
        check_trainable_size(h, w)?;
        let x = tape.input(input_tensor(image, guidance)?);
        let f = self.backbone.apply(tape, x);
        let r8 = self.heads[0].apply(tape, f.s8);
        let r4 = self.heads[1].apply(tape, f.s4);
        let raw2 = self.heads[2].apply(tape, f.s1);
        let raw0 = tape.upsample(r8, h, w);
        let raw1 = tape.upsample(r4, h, w);

        let fused0 = raw0;
        let g1 = match mode {
            SelfGuidance::Computed { k1, .. } => self_guidance_from(&tensor_to_matte(tape.value(fused0)), *k1)?,
            SelfGuidance::Override([g1, _]) => g1.clone(),
        };
        ensure_same(image, &g1, "guidance override")?;
        let fused1 = tape.select(raw1, fused0, g1.data());
        let g2 = match mode {
            SelfGuidance::Computed { k2, .. } => self_guidance_from(&tensor_to_matte(tape.value(fused1)), *k2)?,
            SelfGuidance::Override([_, g2]) => g2.clone(),
        };
        ensure_same(image, &g2, "guidance override")?;
        let fused2 = tape.select(raw2, fused1, g2.data());
        Ok(PyramidVars {
            raw: [raw0, raw1, raw2],
            fused: [fused0, fused1, fused2],
            masks: [RegionMask::ones(h, w), g1, g2],
        })
    }

    /// Inference forward pass. Inputs of any size are edge-padded to a
    /// multiple of 8 and the outputs cropped back.
    pub fn forward_with(
        &self,
        image: &ImagePlane,
        guidance: &AlphaMatte,
        mode: &SelfGuidance,
    ) -> Result<PyramidPrediction> {
        ensure_same(image, guidance, "forward")?;
        let (h, w) = (image.height(), image.width());
        let (ph, pw) = (round_up(h), round_up(w));
        let padded_mode = match mode {
            SelfGuidance::Override([g1, g2]) => {
                ensure_same(image, g1, "guidance override")?;
                ensure_same(image, g2, "guidance override")?;
                SelfGuidance::Override([pad_mask(g1, ph, pw), pad_mask(g2, ph, pw)])
            }
            m => m.clone(),
        };
        let img = pad_plane(image, ph, pw);
        let gd = pad_matte(guidance, ph, pw);
        let mut tape = Tape::new(&self.params);
        let vars = self.record(&mut tape, &img, &gd, &padded_mode)?;
        let m = |v: Var| tensor_to_matte(tape.value(v));
        let pred = PyramidPrediction {
            raw: vars.raw.map(m),
            fused: vars.fused.map(m),
            self_guidance: vars.masks,
        };
        pred.crop(h, w)
    }

    /// Forward pass with inference dilation, optionally overriding `g1`, `g2`.
    pub fn forward(
        &self,
        image: &ImagePlane,
        guidance: &AlphaMatte,
        guidance_override: Option<[RegionMask; 2]>,
    ) -> Result<PyramidPrediction> {
        let mode = match guidance_override {
            Some(g) => SelfGuidance::Override(g),
            None => {
                let (k1, k2) = self.config.test_dilation;
                SelfGuidance::Computed { k1, k2 }
            }
        };
        self.forward_with(image, guidance, &mode)
    }

    /// Final refined matte for any guidance encoding.
    pub fn refine(&self, image: &ImagePlane, guidance: &AlphaMatte) -> Result<AlphaMatte> {
        Ok(self.forward(image, guidance, None)?.fused[2].clone())
    }
}

/// Free-function form of [`PrnModel::forward`].
pub fn forward(
    image: &ImagePlane,
    guidance: &AlphaMatte,
    model: &PrnModel,
    guidance_override: Option<[RegionMask; 2]>,
) -> Result<PyramidPrediction> {
    model.forward(image, guidance, guidance_override)
}

/// Loads a matting checkpoint and refines one image.
pub fn refine(image: &ImagePlane, guidance: &AlphaMatte, checkpoint: &std::path::Path) -> Result<AlphaMatte> {
    let model = PrnModel::from_checkpoint(&Checkpoint::load(checkpoint)?)?;
    model.refine(image, guidance)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct ColorNetConfig {
    pub backbone: BackboneConfig,
}

impl ColorNetConfig {
    pub fn tiny() -> Self {
        Self {
            backbone: BackboneConfig {
                encoder_widths: vec![8, 16, 32, 64],
                ..Default::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()
    }
}

/// Foreground colour estimator taking RGB plus alpha.
#[derive(Clone, Debug)]
pub struct ColorNet {
    config: ColorNetConfig,
    params: ParamStore,
    backbone: Backbone,
    out_w: ParamId,
    out_b: ParamId,
}

impl ColorNet {
    pub fn new(config: ColorNetConfig) -> Result<Self> {
        config.backbone.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.backbone.init_seed);
        let mut params = ParamStore::new();
        let backbone = Backbone::new(&config.backbone, &mut params, &mut rng);
        let w0 = config.backbone.encoder_widths[0];
        let out_w = params.add_conv("color.out.conv", 3, w0, 3, 0.5, &mut rng);
        let out_b = params.add_const("color.out.bias", 3, 0.5);
        Ok(Self {
            config,
            params,
            backbone,
            out_w,
            out_b,
        })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.kind != ModelKind::Color {
            return Err(MatteError::Checkpoint(format!(
                "expected a colour checkpoint, found {:?}",
                ckpt.kind
            )));
        }
        let config: ColorNetConfig = serde_json::from_value(ckpt.model_config.clone())
            .map_err(|e| MatteError::Checkpoint(format!("model config: {e}")))?;
        let mut model = Self::new(config)?;
        model.params.load_from(&ckpt.params)?;
        Ok(model)
    }

    pub fn config(&self) -> &ColorNetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn record(&self, tape: &mut Tape<'_>, image: &ImagePlane, alpha: &AlphaMatte) -> Result<Var> {
        check_trainable_size(image.height(), image.width())?;
        let x = tape.input(input_tensor(image, alpha)?);
        let f = self.backbone.apply(tape, x);
        let y = tape.conv2d(f.s1, self.out_w, Some(self.out_b), ConvSpec::same(3));
        Ok(tape.clamp01(y))
    }

    pub fn predict(&self, image: &ImagePlane, alpha: &AlphaMatte) -> Result<ImagePlane> {
        ensure_same(image, alpha, "predict_foreground")?;
        let (h, w) = (image.height(), image.width());
        let (ph, pw) = (round_up(h), round_up(w));
        let mut tape = Tape::new(&self.params);
        let out = self.record(&mut tape, &pad_plane(image, ph, pw), &pad_matte(alpha, ph, pw))?;
        let t = tape.value(out);
        ImagePlane::new(ph, pw, 3, t.data.clone())?.crop(0, 0, h, w)
    }
}

pub fn predict_foreground(image: &ImagePlane, alpha: &AlphaMatte, model: &ColorNet) -> Result<ImagePlane> {
    model.predict(image, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_inputs(h: usize, w: usize, seed: u64) -> (ImagePlane, AlphaMatte) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = ImagePlane::new(h, w, 3, (0..3 * h * w).map(|_| rng.random::<f64>()).collect()).unwrap();
        let g = AlphaMatte::new(h, w, (0..h * w).map(|_| rng.random_bool(0.5) as u8 as f64).collect()).unwrap();
        (img, g)
    }

    #[test]
    fn self_guidance_cases() {
        let bin = AlphaMatte::new(2, 3, vec![0.0, 1.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(self_guidance_from(&bin, 7).unwrap().is_empty());
        assert_eq!(
            self_guidance_from(&AlphaMatte::filled(3, 3, 0.5), 3).unwrap(),
            RegionMask::ones(3, 3)
        );
        let row = AlphaMatte::new(1, 5, vec![0.0, 0.0, 0.5, 1.0, 1.0]).unwrap();
        assert_eq!(self_guidance_from(&row, 1).unwrap().data(), &[0, 0, 1, 0, 0]);
        assert_eq!(self_guidance_from(&row, 3).unwrap().data(), &[0, 1, 1, 1, 0]);
    }

    #[test]
    fn prm_fuse_selects() {
        let raw = AlphaMatte::from_fn(4, 4, |y, x| (y * 4 + x) as f64 / 16.0);
        let prev = AlphaMatte::from_fn(4, 4, |y, _| (y % 2) as f64);
        assert_eq!(prm_fuse(&raw, &prev, &RegionMask::ones(4, 4)).unwrap(), raw);
        assert_eq!(prm_fuse(&raw, &prev, &RegionMask::zeros(4, 4)).unwrap(), prev);
        assert!(prm_fuse(&raw, &prev, &RegionMask::ones(4, 5)).is_err());
    }

    #[test]
    fn override_passthrough_and_replacement() {
        let model = PrnModel::new(PrnConfig::tiny()).unwrap();
        let (img, g) = random_inputs(16, 24, 1);
        let zeros = [RegionMask::zeros(16, 24), RegionMask::zeros(16, 24)];
        let p = model.forward(&img, &g, Some(zeros)).unwrap();
        assert_eq!(p.fused[2], p.raw[0]);
        assert_eq!(p.fused[2], p.fused[0]);
        let ones = [RegionMask::ones(16, 24), RegionMask::ones(16, 24)];
        let p = model.forward(&img, &g, Some(ones)).unwrap();
        assert_eq!(p.fused[2], p.raw[2]);
        assert_eq!(p.self_guidance[0], RegionMask::ones(16, 24));
    }

    #[test]
    fn forward_is_deterministic_and_pads_odd_sizes() {
        let model = PrnModel::new(PrnConfig::tiny()).unwrap();
        let (img, g) = random_inputs(13, 21, 2);
        let a = model.forward(&img, &g, None).unwrap();
        let b = model.forward(&img, &g, None).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.alpha().height(), a.alpha().width()), (13, 21));
        for m in a.raw.iter().chain(&a.fused) {
            assert!(m.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn fusion_preserves_confident_pixels() {
        let model = PrnModel::new(PrnConfig::tiny()).unwrap();
        let (img, g) = random_inputs(16, 16, 3);
        let p = model.forward(&img, &g, None).unwrap();
        for l in 1..3 {
            for i in 0..256 {
                if p.self_guidance[l].data()[i] == 0 {
                    assert_eq!(p.fused[l].data()[i], p.fused[l - 1].data()[i]);
                } else {
                    assert_eq!(p.fused[l].data()[i], p.raw[l].data()[i]);
                }
            }
        }
    }

    #[test]
    fn channel_and_size_mismatch_errors() {
        let model = PrnModel::new(PrnConfig::tiny()).unwrap();
        let (img, _) = random_inputs(16, 16, 4);
        assert!(model.forward(&img, &AlphaMatte::filled(8, 16, 0.0), None).is_err());
        let gray = ImagePlane::filled(16, 16, 1, 0.5);
        assert!(model.forward(&gray, &AlphaMatte::filled(16, 16, 0.0), None).is_err());
        let bad = PrnConfig {
            backbone: BackboneConfig {
                input_channels: 3,
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(PrnModel::new(bad).is_err());
    }

    #[test]
    fn refine_accepts_constant_and_own_output_guidance() {
        let model = PrnModel::new(PrnConfig::tiny()).unwrap();
        let (img, g) = random_inputs(16, 16, 6);
        for guide in [AlphaMatte::filled(16, 16, 0.0), AlphaMatte::filled(16, 16, 1.0), g] {
            let once = model.refine(&img, &guide).unwrap();
            let twice = model.refine(&img, &once).unwrap();
            for m in [&once, &twice] {
                assert!(m.data().iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn color_net_output_range_and_determinism() {
        let net = ColorNet::new(ColorNetConfig::tiny()).unwrap();
        let (img, a) = random_inputs(16, 16, 5);
        let f = net.predict(&img, &a).unwrap();
        assert_eq!(f.channels(), 3);
        assert!(f.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(f, net.predict(&img, &a).unwrap());
    }
}
