//! Full architecture assembly: expansion layer, attention, classifier
//! network, softmax head — plus the named ablation variants.
//!
//! The expansion layer lifts a `T x C` window to `T x E` feature channels
//! (E = 128 by default); attention collapses time into an `E`-length context
//! vector; the classifier is a 500-500-2000 fully connected stack feeding a
//! softmax over classes. Layer normalization sits after each activation when
//! enabled, and dropout separates the classifier layers during training.

use crate::attention::{self, AttendCache, AttentionParams, RaffelCache, RaffelParams};
use crate::error::{Error, Result};
use crate::nn::{self, LayerNormCache};
use crate::rng;
use crate::tensor::Tensor2;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const LAYERNORM_EPS: f64 = 1e-8;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExpansionKind {
    /// Fully connected `C -> E` applied per timestep.
    Dense,
    /// 1-D convolution, kernel size 3, same padding.
    Conv1dK3,
    /// Randomly initialized dense layer that never receives updates.
    FrozenDense,
    /// Feed the raw window straight into attention.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttentionKind {
    /// Channel-wise temporal attention (shared `T x T` map).
    Paper,
    /// Scalar score per timestep through a tanh projection.
    Raffel,
    /// Parameter-free sum across time.
    TemporalSum,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassifierKind {
    /// Two 500-node layers and one 2000-node layer.
    Full,
    /// Single 500-node layer.
    Small,
    /// Context vector feeds the softmax head directly.
    None,
    /// Explicit hidden widths, for desk-scale tests.
    Custom(Vec<usize>),
}

impl ClassifierKind {
    pub fn widths(&self) -> Vec<usize> {
        match self {
            ClassifierKind::Full => vec![500, 500, 2000],
            ClassifierKind::Small => vec![500],
            ClassifierKind::None => Vec::new(),
            ClassifierKind::Custom(w) => w.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActivationKind {
    Mish,
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Post-smoothing window length (38 for the 200 Hz defaults).
    pub input_timesteps: usize,
    pub input_channels: usize,
    pub expansion: ExpansionKind,
    pub expanded_channels: usize,
    pub attention: AttentionKind,
    pub classifier: ClassifierKind,
    pub layernorm: bool,
    pub activation: ActivationKind,
    pub dropout_rate: f64,
    pub num_classes: usize,
    /// Widen the attention score bias from a scalar to one value per timestep.
    pub per_timestep_attention_bias: bool,
}

impl ModelConfig {
    /// The reference architecture at full width.
    pub fn full(input_timesteps: usize, input_channels: usize, num_classes: usize) -> Self {
        Self {
            input_timesteps,
            input_channels,
            expansion: ExpansionKind::Dense,
            expanded_channels: 128,
            attention: AttentionKind::Paper,
            classifier: ClassifierKind::Full,
            layernorm: true,
            activation: ActivationKind::Mish,
            dropout_rate: 0.36,
            num_classes,
            per_timestep_attention_bias: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_timesteps < 2 {
            return Err(Error::Config("need at least 2 timesteps".into()));
        }
        if self.input_channels == 0 {
            return Err(Error::Config("need at least 1 channel".into()));
        }
        if self.expanded_channels == 0 {
            return Err(Error::Config("expanded_channels must be >= 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("need at least 2 classes".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if self.classifier.widths().iter().any(|&w| w == 0) {
            return Err(Error::Config("classifier widths must be >= 1".into()));
        }
        Ok(())
    }

    /// Channel count entering attention: E, or C when there is no expansion.
    pub fn attention_channels(&self) -> usize {
        match self.expansion {
            ExpansionKind::None => self.input_channels,
            _ => self.expanded_channels,
        }
    }

}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Weight/bias pair with gradient slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Tensor2,
    pub b: Tensor2,
    pub dw: Tensor2,
    pub db: Tensor2,
}

impl Dense {
    fn new(w: Tensor2, b: Tensor2) -> Self {
        let dw = Tensor2::zeros(w.rows(), w.cols());
        let db = Tensor2::zeros(b.rows(), b.cols());
        Self { w, b, dw, db }
    }
}

/// Layer-norm gain/shift with gradient slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Norm {
    pub gain: Tensor2,
    pub shift: Tensor2,
    pub dgain: Tensor2,
    pub dshift: Tensor2,
}

impl Norm {
    fn new(width: usize) -> Self {
        Self {
            gain: Tensor2::filled(1, width, 1.0),
            shift: Tensor2::zeros(1, width),
            dgain: Tensor2::zeros(1, width),
            dshift: Tensor2::zeros(1, width),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttnParams {
    Paper {
        p: AttentionParams,
        dw: Tensor2,
        db: Tensor2,
    },
    Raffel {
        p: RaffelParams,
        dw: Tensor2,
        db: Tensor2,
    },
    Sum,
}

/// All learnable state of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub expansion: Option<Dense>,
    pub norm_expansion: Option<Norm>,
    pub attention: AttnParams,
    pub norm_context: Option<Norm>,
    pub classifier: Vec<(Dense, Option<Norm>)>,
    pub output: Dense,
}

/// Initializes parameters for a configuration. Weights are fan-in-scaled
/// uniform, biases zero, norm gains one; the same seed reproduces the same
/// parameters bit for bit.
pub fn build(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = rng::seed_rng(seed);
    let t_len = config.input_timesteps;
    let c_in = config.input_channels;
    let e = config.expanded_channels;
    let a = config.attention_channels();

    let expansion = match config.expansion {
        ExpansionKind::Dense | ExpansionKind::FrozenDense => Some(Dense::new(
            nn::init_uniform(c_in, e, c_in, &mut rng),
            Tensor2::zeros(1, e),
        )),
        ExpansionKind::Conv1dK3 => Some(Dense::new(
            nn::init_uniform(3 * c_in, e, 3 * c_in, &mut rng),
            Tensor2::zeros(1, e),
        )),
        ExpansionKind::None => None,
    };
    let norm_expansion = (config.layernorm && expansion.is_some()).then(|| Norm::new(e));

    let attention = match config.attention {
        AttentionKind::Paper => {
            let bias_cols = if config.per_timestep_attention_bias {
                t_len
            } else {
                1
            };
            AttnParams::Paper {
                p: AttentionParams {
                    w_time: nn::init_uniform(t_len, t_len, t_len, &mut rng),
                    bias: Tensor2::zeros(1, bias_cols),
                },
                dw: Tensor2::zeros(t_len, t_len),
                db: Tensor2::zeros(1, bias_cols),
            }
        }
        AttentionKind::Raffel => AttnParams::Raffel {
            p: RaffelParams {
                w: nn::init_uniform(a, 1, a, &mut rng),
                b: Tensor2::zeros(1, 1),
            },
            dw: Tensor2::zeros(a, 1),
            db: Tensor2::zeros(1, 1),
        },
        AttentionKind::TemporalSum => AttnParams::Sum,
    };
    let norm_context = config.layernorm.then(|| Norm::new(a));

    let mut classifier = Vec::new();
    let mut prev = a;
    for width in config.classifier.widths() {
        let dense = Dense::new(
            nn::init_uniform(prev, width, prev, &mut rng),
            Tensor2::zeros(1, width),
        );
        let norm = config.layernorm.then(|| Norm::new(width));
        classifier.push((dense, norm));
        prev = width;
    }

    let output = Dense::new(
        nn::init_uniform(prev, config.num_classes, prev, &mut rng),
        Tensor2::zeros(1, config.num_classes),
    );

    Ok(ModelParams {
        config: config.clone(),
        expansion,
        norm_expansion,
        attention,
        norm_context,
        classifier,
        output,
    })
}

impl ModelParams {
    /// Visits every parameter tensor with its gradient slot, in checkpoint
    /// order. `trainable` is false only for the frozen expansion.
    pub fn for_each_tensor_mut(
        &mut self,
        f: &mut dyn FnMut(&str, bool, &mut Tensor2, &mut Tensor2),
    ) {
        let trainable_expansion = !matches!(self.config.expansion, ExpansionKind::FrozenDense);
        if let Some(d) = &mut self.expansion {
            f("expansion.w", trainable_expansion, &mut d.w, &mut d.dw);
            f("expansion.b", trainable_expansion, &mut d.b, &mut d.db);
        }
        if let Some(n) = &mut self.norm_expansion {
            f("norm_expansion.gain", true, &mut n.gain, &mut n.dgain);
            f("norm_expansion.shift", true, &mut n.shift, &mut n.dshift);
        }
        match &mut self.attention {
            AttnParams::Paper { p, dw, db } => {
                f("attention.w", true, &mut p.w_time, dw);
                f("attention.b", true, &mut p.bias, db);
            }
            AttnParams::Raffel { p, dw, db } => {
                f("attention.w", true, &mut p.w, dw);
                f("attention.b", true, &mut p.b, db);
            }
            AttnParams::Sum => {}
        }
        if let Some(n) = &mut self.norm_context {
            f("norm_context.gain", true, &mut n.gain, &mut n.dgain);
            f("norm_context.shift", true, &mut n.shift, &mut n.dshift);
        }
        for (i, (dense, norm)) in self.classifier.iter_mut().enumerate() {
            f(
                &format!("classifier{}.w", i),
                true,
                &mut dense.w,
                &mut dense.dw,
            );
            f(
                &format!("classifier{}.b", i),
                true,
                &mut dense.b,
                &mut dense.db,
            );
            if let Some(n) = norm {
                f(
                    &format!("classifier{}.gain", i),
                    true,
                    &mut n.gain,
                    &mut n.dgain,
                );
                f(
                    &format!("classifier{}.shift", i),
                    true,
                    &mut n.shift,
                    &mut n.dshift,
                );
            }
        }
        f("output.w", true, &mut self.output.w, &mut self.output.dw);
        f("output.b", true, &mut self.output.b, &mut self.output.db);
    }

    /// Read-only visitor over parameter values, same order as
    /// [`Self::for_each_tensor_mut`].
    pub fn for_each_tensor(&self, f: &mut dyn FnMut(&str, bool, &Tensor2)) {
        let trainable_expansion = !matches!(self.config.expansion, ExpansionKind::FrozenDense);
        if let Some(d) = &self.expansion {
            f("expansion.w", trainable_expansion, &d.w);
            f("expansion.b", trainable_expansion, &d.b);
        }
        if let Some(n) = &self.norm_expansion {
            f("norm_expansion.gain", true, &n.gain);
            f("norm_expansion.shift", true, &n.shift);
        }
        match &self.attention {
            AttnParams::Paper { p, .. } => {
                f("attention.w", true, &p.w_time);
                f("attention.b", true, &p.bias);
            }
            AttnParams::Raffel { p, .. } => {
                f("attention.w", true, &p.w);
                f("attention.b", true, &p.b);
            }
            AttnParams::Sum => {}
        }
        if let Some(n) = &self.norm_context {
            f("norm_context.gain", true, &n.gain);
            f("norm_context.shift", true, &n.shift);
        }
        for (i, (dense, norm)) in self.classifier.iter().enumerate() {
            f(&format!("classifier{}.w", i), true, &dense.w);
            f(&format!("classifier{}.b", i), true, &dense.b);
            if let Some(n) = norm {
                f(&format!("classifier{}.gain", i), true, &n.gain);
                f(&format!("classifier{}.shift", i), true, &n.shift);
            }
        }
        f("output.w", true, &self.output.w);
        f("output.b", true, &self.output.b);
    }

    pub fn zero_grads(&mut self) {
        self.for_each_tensor_mut(&mut |_, _, _, grad| grad.fill(0.0));
    }

    /// Trainable parameter count (frozen expansion excluded, matching how
    /// ablation rows are reported).
    pub fn trainable_param_count(&mut self) -> usize {
        let mut count = 0;
        self.for_each_tensor_mut(&mut |_, trainable, value, _| {
            if trainable {
                count += value.len();
            }
        });
        count
    }

    /// Total parameter count including frozen tensors.
    pub fn total_param_count(&mut self) -> usize {
        let mut count = 0;
        self.for_each_tensor_mut(&mut |_, _, value, _| count += value.len());
        count
    }
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

struct ClsStage {
    input: Tensor2,
    pre: Tensor2,
    act: Tensor2,
    norm: Option<LayerNormCache>,
    mask: Option<Tensor2>,
}

/// Everything the backward pass needs from one forward evaluation.
pub struct ForwardCache {
    input: Tensor2,
    exp_pre: Option<Tensor2>,
    exp_norm: Option<LayerNormCache>,
    attn_input: Tensor2,
    attn_paper: Option<AttendCache>,
    attn_raffel: Option<RaffelCache>,
    ctx_norm: Option<LayerNormCache>,
    cls: Vec<ClsStage>,
    head_input: Tensor2,
    /// Class probabilities (softmax of the logits).
    pub probs: Tensor2,
}

fn activate(kind: ActivationKind, x: &Tensor2) -> Tensor2 {
    match kind {
        ActivationKind::Mish => nn::mish(x),
        ActivationKind::Relu => nn::relu(x),
    }
}

fn activate_backward(kind: ActivationKind, pre: &Tensor2, dy: &Tensor2) -> Tensor2 {
    match kind {
        ActivationKind::Mish => nn::mish_backward(pre, dy),
        ActivationKind::Relu => nn::relu_backward(pre, dy),
    }
}

/// Runs the network on one window (`T x C`).
///
/// Returns the class-probability vector (rows sum to 1) and the cache for
/// [`backward`]. Dropout masks are drawn from `rng` only when `training`.
/// A NaN or infinity at any stage aborts with the stage name.
pub fn forward(
    params: &ModelParams,
    window: &Tensor2,
    training: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(Tensor2, ForwardCache)> {
    let cfg = &params.config;
    if window.shape() != (cfg.input_timesteps, cfg.input_channels) {
        return Err(Error::Dimension(format!(
            "window {}x{} vs configured {}x{}",
            window.rows(),
            window.cols(),
            cfg.input_timesteps,
            cfg.input_channels
        )));
    }

    // Expansion.
    let mut exp_pre = None;
    let mut exp_norm = None;
    let attn_input = match (&params.expansion, cfg.expansion) {
        (None, _) => window.clone(),
        (Some(d), kind) => {
            let pre = match kind {
                ExpansionKind::Conv1dK3 => nn::conv1d_forward(window, &d.w, 3, &d.b)?,
                _ => nn::dense_forward(window, &d.w, &d.b)?,
            };
            let act = activate(cfg.activation, &pre);
            exp_pre = Some(pre);
            let out = match &params.norm_expansion {
                Some(n) => {
                    let (y, cache) = nn::layernorm_forward(&act, &n.gain, &n.shift, LAYERNORM_EPS)?;
                    exp_norm = Some(cache);
                    y
                }
                None => act,
            };
            out.check_finite("expansion")?;
            out
        }
    };

    // Attention.
    let mut attn_paper = None;
    let mut attn_raffel = None;
    let ctx = match &params.attention {
        AttnParams::Paper { p, .. } => {
            let (ctx, cache) = attention::attend(&attn_input, p)?;
            attn_paper = Some(cache);
            ctx
        }
        AttnParams::Raffel { p, .. } => {
            let (ctx, cache) = attention::attend_raffel(&attn_input, p)?;
            attn_raffel = Some(cache);
            ctx
        }
        AttnParams::Sum => attention::attend_sum(&attn_input),
    };
    ctx.check_finite("attention")?;

    let mut ctx_norm = None;
    let mut hidden = match &params.norm_context {
        Some(n) => {
            let (y, cache) = nn::layernorm_forward(&ctx, &n.gain, &n.shift, LAYERNORM_EPS)?;
            ctx_norm = Some(cache);
            y.check_finite("context-norm")?;
            y
        }
        None => ctx,
    };

    // Classifier stack.
    let mut cls = Vec::with_capacity(params.classifier.len());
    for (i, (dense, norm)) in params.classifier.iter().enumerate() {
        let input = hidden;
        let pre = nn::dense_forward(&input, &dense.w, &dense.b)?;
        let act = activate(cfg.activation, &pre);
        let mut norm_cache = None;
        let post = match norm {
            Some(n) => {
                let (y, cache) = nn::layernorm_forward(&act, &n.gain, &n.shift, LAYERNORM_EPS)?;
                norm_cache = Some(cache);
                y
            }
            None => act.clone(),
        };
        let (dropped, mask) = nn::dropout_forward(&post, cfg.dropout_rate, rng, training)?;
        dropped.check_finite(&format!("classifier{}", i))?;
        cls.push(ClsStage {
            input,
            pre,
            act,
            norm: norm_cache,
            mask,
        });
        hidden = dropped;
    }

    let head_input = hidden;
    let logits = nn::dense_forward(&head_input, &params.output.w, &params.output.b)?;
    logits.check_finite("output")?;
    let probs = nn::softmax_rows(&logits);

    Ok((
        probs.clone(),
        ForwardCache {
            input: window.clone(),
            exp_pre,
            exp_norm,
            attn_input,
            attn_paper,
            attn_raffel,
            ctx_norm,
            cls,
            head_input,
            probs,
        },
    ))
}

/// Accumulates parameter gradients from `dlogits` (the loss gradient with
/// respect to the pre-softmax logits). Frozen expansions accumulate nothing.
pub fn backward(params: &mut ModelParams, cache: &ForwardCache, dlogits: &Tensor2) -> Result<()> {
    let cfg = params.config.clone();

    let mut d = nn::dense_backward(
        &cache.head_input,
        &params.output.w,
        dlogits,
        &mut params.output.dw,
        &mut params.output.db,
    );

    for (stage, (dense, norm)) in cache.cls.iter().zip(params.classifier.iter_mut()).rev() {
        d = nn::dropout_backward(stage.mask.as_ref(), &d);
        if let (Some(n), Some(norm_cache)) = (norm.as_mut(), stage.norm.as_ref()) {
            d = nn::layernorm_backward(norm_cache, &n.gain, &d, &mut n.dgain, &mut n.dshift);
        }
        let _ = &stage.act;
        d = activate_backward(cfg.activation, &stage.pre, &d);
        d = nn::dense_backward(&stage.input, &dense.w, &d, &mut dense.dw, &mut dense.db);
    }

    if let (Some(n), Some(norm_cache)) = (params.norm_context.as_mut(), cache.ctx_norm.as_ref()) {
        d = nn::layernorm_backward(norm_cache, &n.gain, &d, &mut n.dgain, &mut n.dshift);
    }

    let mut d_attn_input = match &mut params.attention {
        AttnParams::Paper { p, dw, db } => attention::attend_backward(
            &cache.attn_input,
            p,
            cache.attn_paper.as_ref().expect("paper cache"),
            &d,
            dw,
            db,
        ),
        AttnParams::Raffel { p, dw, db } => attention::attend_raffel_backward(
            &cache.attn_input,
            p,
            cache.attn_raffel.as_ref().expect("raffel cache"),
            &d,
            dw,
            db,
        ),
        AttnParams::Sum => attention::attend_sum_backward(cache.attn_input.rows(), &d),
    };

    if let Some(dense) = &mut params.expansion {
        if let (Some(n), Some(norm_cache)) = (params.norm_expansion.as_mut(), cache.exp_norm.as_ref())
        {
            d_attn_input =
                nn::layernorm_backward(norm_cache, &n.gain, &d_attn_input, &mut n.dgain, &mut n.dshift);
        }
        let pre = cache.exp_pre.as_ref().expect("expansion pre-activation");
        let d_pre = activate_backward(cfg.activation, pre, &d_attn_input);
        match cfg.expansion {
            ExpansionKind::FrozenDense => {
                // Frozen layer: no parameter gradients, and nothing upstream
                // needs the input gradient.
            }
            ExpansionKind::Conv1dK3 => {
                nn::conv1d_backward(
                    &cache.input,
                    &dense.w,
                    3,
                    &d_pre,
                    &mut dense.dw,
                    &mut dense.db,
                );
            }
            _ => {
                nn::dense_backward(&cache.input, &dense.w, &d_pre, &mut dense.dw, &mut dense.db);
            }
        }
    }
    Ok(())
}

/// Class probabilities for one window, inference mode.
pub fn infer(params: &ModelParams, window: &Tensor2) -> Result<Tensor2> {
    let mut rng = rng::seed_rng(0); // unused: no dropout outside training
    Ok(forward(params, window, false, &mut rng)?.0)
}

/// Argmax prediction; ties resolve to the lowest class index.
pub fn predict(params: &ModelParams, window: &Tensor2) -> Result<usize> {
    let probs = infer(params, window)?;
    Ok(argmax(probs.row(0)))
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in row.iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

/// The attention matrix (`C x T`) produced for one window, for inspection
/// dumps. Empty for the temporal-sum variant (it has no mask).
pub fn attention_matrix(params: &ModelParams, window: &Tensor2) -> Result<Tensor2> {
    let mut rng = rng::seed_rng(0);
    let (_, cache) = forward(params, window, false, &mut rng)?;
    if let Some(c) = cache.attn_paper {
        Ok(c.alpha)
    } else if let Some(c) = cache.attn_raffel {
        Ok(c.alpha)
    } else {
        Ok(Tensor2::zeros(0, 0))
    }
}

// ---------------------------------------------------------------------------
// Ablation registry
// ---------------------------------------------------------------------------

/// The ten studied configurations, one per ablation-table row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationVariant {
    FullyConnected,
    Conv1d,
    FrozenDense,
    NoExpansion,
    RaffelAttention,
    TemporalSum,
    SmallClassifier,
    NoClassifier,
    NoLayernorm,
    ReluActivation,
}

impl AblationVariant {
    pub fn all() -> [AblationVariant; 10] {
        use AblationVariant::*;
        [
            FullyConnected,
            Conv1d,
            FrozenDense,
            NoExpansion,
            RaffelAttention,
            TemporalSum,
            SmallClassifier,
            NoClassifier,
            NoLayernorm,
            ReluActivation,
        ]
    }

    pub fn name(self) -> &'static str {
        use AblationVariant::*;
        match self {
            FullyConnected => "full",
            Conv1d => "conv1d",
            FrozenDense => "frozen",
            NoExpansion => "no-expansion",
            RaffelAttention => "raffel",
            TemporalSum => "temporal-sum",
            SmallClassifier => "small-classifier",
            NoClassifier => "no-classifier",
            NoLayernorm => "no-layernorm",
            ReluActivation => "relu",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::all().into_iter().find(|v| v.name() == name)
    }

    /// Applies this variant's single modification to a base configuration.
    pub fn apply(self, base: &ModelConfig) -> ModelConfig {
        use AblationVariant::*;
        let mut cfg = base.clone();
        match self {
            FullyConnected => cfg.expansion = ExpansionKind::Dense,
            Conv1d => cfg.expansion = ExpansionKind::Conv1dK3,
            FrozenDense => cfg.expansion = ExpansionKind::FrozenDense,
            NoExpansion => cfg.expansion = ExpansionKind::None,
            RaffelAttention => cfg.attention = AttentionKind::Raffel,
            TemporalSum => cfg.attention = AttentionKind::TemporalSum,
            SmallClassifier => cfg.classifier = ClassifierKind::Small,
            NoClassifier => cfg.classifier = ClassifierKind::None,
            NoLayernorm => cfg.layernorm = false,
            ReluActivation => cfg.activation = ActivationKind::Relu,
        }
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::focal_loss;

    fn toy_config() -> ModelConfig {
        ModelConfig {
            input_timesteps: 6,
            input_channels: 4,
            expansion: ExpansionKind::Dense,
            expanded_channels: 8,
            attention: AttentionKind::Paper,
            classifier: ClassifierKind::Custom(vec![10, 10, 12]),
            layernorm: true,
            activation: ActivationKind::Mish,
            dropout_rate: 0.0,
            num_classes: 3,
            per_timestep_attention_bias: false,
        }
    }

    fn random_window(t: usize, c: usize, seed: u64) -> Tensor2 {
        use rand::Rng;
        let mut rng = rng::seed_rng(seed);
        Tensor2::from_fn(t, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn db5_parameter_counts_per_variant() {
        // Exact trainable counts for the reference architecture at
        // T=38, C=16, E=128, K=54. Kept as frozen documentation.
        let base = ModelConfig::full(38, 16, 54);
        let expected = [
            ("full", 1_435_187usize),
            ("conv1d", 1_439_283),
            ("frozen", 1_433_011),
            ("no-expansion", 1_376_531),
            ("raffel", 1_433_871),
            ("temporal-sum", 1_433_742),
            ("small-classifier", 96_687),
            ("no-classifier", 11_099),
            ("no-layernorm", 1_428_675),
            ("relu", 1_435_187),
        ];
        for (variant, (name, count)) in AblationVariant::all().into_iter().zip(expected) {
            assert_eq!(variant.name(), name);
            let cfg = variant.apply(&base);
            let mut params = build(&cfg, 0).unwrap();
            assert_eq!(
                params.trainable_param_count(),
                count,
                "variant {}",
                name
            );
        }
        // Full configuration sits within 3% of 1.44e6.
        let mut params = build(&base, 0).unwrap();
        let n = params.trainable_param_count() as f64;
        assert!((n - 1.44e6).abs() / 1.44e6 < 0.03);
    }

    #[test]
    fn build_is_deterministic() {
        let cfg = toy_config();
        let a = build(&cfg, 42).unwrap();
        let b = build(&cfg, 42).unwrap();
        assert_eq!(a, b);
        let c = build(&cfg, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn forward_probabilities_sum_to_one() {
        let cfg = toy_config();
        let params = build(&cfg, 1).unwrap();
        let window = random_window(6, 4, 2);
        let probs = infer(&params, &window).unwrap();
        assert_eq!(probs.shape(), (1, 3));
        let sum: f64 = probs.row(0).iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inference_is_deterministic() {
        let cfg = toy_config();
        let params = build(&cfg, 1).unwrap();
        let window = random_window(6, 4, 3);
        assert_eq!(
            infer(&params, &window).unwrap(),
            infer(&params, &window).unwrap()
        );
    }

    #[test]
    fn no_expansion_feeds_raw_channels_to_attention() {
        let mut cfg = toy_config();
        cfg.expansion = ExpansionKind::None;
        assert_eq!(cfg.attention_channels(), 4);
        let params = build(&cfg, 1).unwrap();
        let window = random_window(6, 4, 4);
        let probs = infer(&params, &window).unwrap();
        assert_eq!(probs.cols(), 3);
        // Attention mask is C x T with C the raw channel count.
        let alpha = attention_matrix(&params, &window).unwrap();
        assert_eq!(alpha.shape(), (4, 6));
    }

    #[test]
    fn nan_parameter_is_reported_with_layer_name() {
        let cfg = toy_config();
        let mut params = build(&cfg, 1).unwrap();
        params.expansion.as_mut().unwrap().w[(0, 0)] = f64::NAN;
        let window = random_window(6, 4, 5);
        match infer(&params, &window) {
            Err(Error::Numeric { layer, .. }) => assert_eq!(layer, "expansion"),
            other => panic!("expected numeric error, got {:?}", other),
        }
    }

    #[test]
    fn wrong_window_shape_is_dimension_error() {
        let params = build(&toy_config(), 1).unwrap();
        let window = random_window(5, 4, 6);
        assert!(matches!(
            infer(&params, &window),
            Err(Error::Dimension(_))
        ));
    }

    /// Central-difference check of every parameter gradient against the
    /// focal loss at gamma = 2.
    fn gradcheck_config(cfg: &ModelConfig, seed: u64, tol: f64) {
        let mut params = build(cfg, seed).unwrap();
        let window = random_window(cfg.input_timesteps, cfg.input_channels, seed ^ 0xabcd);
        let target = (seed as usize) % cfg.num_classes;

        let loss_of = |params: &ModelParams| -> f64 {
            let probs = infer(params, &window).unwrap();
            focal_loss(&probs, target, 2.0).unwrap().0
        };

        params.zero_grads();
        let mut rng = rng::seed_rng(0);
        let (probs, cache) = forward(&params, &window, true, &mut rng).unwrap();
        let (_, dlogits, _) = focal_loss(&probs, target, 2.0).unwrap();
        backward(&mut params, &cache, &dlogits).unwrap();

        // Freeze analytic grads, then probe each trainable entry.
        let mut grads: Vec<(String, bool, Tensor2)> = Vec::new();
        params.for_each_tensor_mut(&mut |name, trainable, _, grad| {
            grads.push((name.to_string(), trainable, grad.clone()));
        });

        let h = 1e-4;
        for (slot, (name, trainable, analytic)) in grads.iter().enumerate() {
            if !trainable {
                for v in analytic.as_slice() {
                    assert_eq!(*v, 0.0, "frozen tensor {} has nonzero grad", name);
                }
                continue;
            }
            for idx in 0..analytic.len() {
                let mut probe = |delta: f64| -> f64 {
                    let mut i = 0;
                    params.for_each_tensor_mut(&mut |_, _, value, _| {
                        if i == slot {
                            value.as_mut_slice()[idx] += delta;
                        }
                        i += 1;
                    });
                    let l = loss_of(&params);
                    let mut i = 0;
                    params.for_each_tensor_mut(&mut |_, _, value, _| {
                        if i == slot {
                            value.as_mut_slice()[idx] -= delta;
                        }
                        i += 1;
                    });
                    l
                };
                let numeric = (probe(h) - probe(-h)) / (2.0 * h);
                let got = analytic.as_slice()[idx];
                let denom = numeric.abs().max(got.abs()).max(1e-6);
                assert!(
                    (numeric - got).abs() / denom < tol,
                    "{}[{}]: numeric {} vs analytic {}",
                    name,
                    idx,
                    numeric,
                    got
                );
            }
        }
    }

    #[test]
    fn full_toy_model_gradients_match_finite_differences() {
        for seed in 0..3 {
            gradcheck_config(&toy_config(), seed, 1e-3);
        }
    }

    #[test]
    fn every_ablation_variant_passes_gradient_check() {
        let base = toy_config();
        for variant in AblationVariant::all() {
            let cfg = variant.apply(&base);
            gradcheck_config(&cfg, 7, 1e-3);
        }
    }

    #[test]
    fn per_timestep_bias_variant_passes_gradient_check() {
        let mut cfg = toy_config();
        cfg.per_timestep_attention_bias = true;
        gradcheck_config(&cfg, 9, 1e-3);
    }

    #[test]
    fn frozen_expansion_gets_zero_gradients_and_no_updates() {
        let mut cfg = toy_config();
        cfg.expansion = ExpansionKind::FrozenDense;
        let mut params = build(&cfg, 11).unwrap();
        let window = random_window(6, 4, 12);

        params.zero_grads();
        let mut rng = rng::seed_rng(0);
        let (probs, cache) = forward(&params, &window, true, &mut rng).unwrap();
        let (_, dlogits, _) = focal_loss(&probs, 1, 2.0).unwrap();
        backward(&mut params, &cache, &dlogits).unwrap();

        let exp = params.expansion.as_ref().unwrap();
        assert!(exp.dw.as_slice().iter().all(|&v| v == 0.0));
        assert!(exp.db.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_batch_gradient_descent_reduces_loss() {
        // Overfit sanity: 50 plain gradient-descent steps on one batch.
        let cfg = toy_config();
        let mut params = build(&cfg, 21).unwrap();
        let windows: Vec<(Tensor2, usize)> = (0..6)
            .map(|i| (random_window(6, 4, 500 + i as u64), i % 3))
            .collect();

        let batch_loss = |params: &ModelParams| -> f64 {
            windows
                .iter()
                .map(|(w, t)| {
                    let probs = infer(params, w).unwrap();
                    focal_loss(&probs, *t, 2.0).unwrap().0
                })
                .sum::<f64>()
                / windows.len() as f64
        };

        let initial = batch_loss(&params);
        let lr = 0.05;
        let mut rng = rng::seed_rng(0);
        for _ in 0..50 {
            params.zero_grads();
            for (w, t) in &windows {
                let (probs, cache) = forward(&params, w, true, &mut rng).unwrap();
                let (_, mut dlogits, _) = focal_loss(&probs, *t, 2.0).unwrap();
                for v in dlogits.as_mut_slice() {
                    *v /= windows.len() as f64;
                }
                backward(&mut params, &cache, &dlogits).unwrap();
            }
            params.for_each_tensor_mut(&mut |_, trainable, value, grad| {
                if trainable {
                    value.add_scaled(grad, -lr);
                }
            });
        }
        let final_loss = batch_loss(&params);
        assert!(
            final_loss < initial * 0.5,
            "loss {} -> {}",
            initial,
            final_loss
        );
    }
}
