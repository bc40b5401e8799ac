//! Network families over a five-stage residual backbone.
//!
//! * `Basic`: one classification module on top of stage 5.
//! * `Dsn`: classification modules on all five stages, sliced concatenation
//!   and a K-grouped 1x1 fusion, six supervised outputs.
//! * `CaseNet`: single-channel feature modules on stages 1-3, classification
//!   on stage 5, shared concatenation and the same grouped fusion.
//!
//! `CaseNetMinus` and `CaseNetEdge` share CASENet's graph; they only differ
//! in which outputs the trainer attaches losses to.

mod checkpoint;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{Conv2d, ConvSpec, ParamStore, ResidualBlock, Scalar, Tape, Tensor, Var, WeightInit};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

/// Cumulative stride of each backbone stage's output.
pub const STAGE_STRIDES: [usize; 5] = [1, 2, 4, 8, 8];
const LOCAL_STRIDES: [usize; 5] = [1, 2, 2, 2, 1];
pub const INPUT_CHANNELS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchVariant {
    Basic,
    Dsn,
    #[serde(rename = "casenet")]
    CaseNet,
    #[serde(rename = "casenet-minus")]
    CaseNetMinus,
    #[serde(rename = "casenet-edge")]
    CaseNetEdge,
}

impl ArchVariant {
    pub const ALL: [ArchVariant; 5] = [
        ArchVariant::Basic,
        ArchVariant::Dsn,
        ArchVariant::CaseNet,
        ArchVariant::CaseNetMinus,
        ArchVariant::CaseNetEdge,
    ];

    pub fn id(self) -> u8 {
        match self {
            ArchVariant::Basic => 0,
            ArchVariant::Dsn => 1,
            ArchVariant::CaseNet => 2,
            ArchVariant::CaseNetMinus => 3,
            ArchVariant::CaseNetEdge => 4,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ArchVariant::Basic => "basic",
            ArchVariant::Dsn => "dsn",
            ArchVariant::CaseNet => "casenet",
            ArchVariant::CaseNetMinus => "casenet-minus",
            ArchVariant::CaseNetEdge => "casenet-edge",
        }
    }

    pub fn is_casenet_family(self) -> bool {
        matches!(
            self,
            ArchVariant::CaseNet | ArchVariant::CaseNetMinus | ArchVariant::CaseNetEdge
        )
    }
}

impl std::str::FromStr for ArchVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::config(format!("unknown architecture variant {s:?}")))
    }
}

/// Output non-linearity the network is trained for.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Head {
    /// K independent sigmoid channels (multi-label).
    #[default]
    Sigmoid,
    /// K + 1 softmax channels, channel 0 being non-edge (multi-class baseline).
    Softmax,
}

impl Head {
    pub fn id(self) -> u8 {
        match self {
            Head::Sigmoid => 0,
            Head::Softmax => 1,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(Head::Sigmoid),
            1 => Some(Head::Softmax),
            _ => None,
        }
    }

    pub fn channels(self, k: usize) -> usize {
        match self {
            Head::Sigmoid => k,
            Head::Softmax => k + 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub stage_channels: [usize; 5],
    pub blocks_per_stage: usize,
    pub stage5_dilation: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            stage_channels: [16, 32, 64, 128, 128],
            blocks_per_stage: 1,
            stage5_dilation: 2,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stage_channels.contains(&0) || self.blocks_per_stage == 0 || self.stage5_dilation == 0 {
            return Err(Error::config(format!("invalid backbone config {self:?}")));
        }
        Ok(())
    }

    pub fn stage_dilation(&self, stage: usize) -> usize {
        if stage == 4 {
            self.stage5_dilation
        } else {
            1
        }
    }
}

/// A 1x1 convolution to `channels` maps followed by fixed bilinear up-sampling
/// back to input resolution. With `channels == K` this is the classification
/// module; with `channels == 1` the side feature module.
#[derive(Clone, Debug)]
pub struct SideModule {
    pub stage: usize,
    pub conv: Conv2d,
    pub factor: usize,
}

impl SideModule {
    fn new<T: Scalar>(store: &mut ParamStore<T>, seed: u64, name: &str, stage: usize, in_channels: usize, channels: usize) -> Self {
        let conv = Conv2d::new(
            store,
            seed,
            name,
            in_channels,
            channels,
            1,
            ConvSpec::pointwise(),
            WeightInit::HeNormal,
        );
        SideModule {
            stage,
            conv,
            factor: STAGE_STRIDES[stage],
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let a = self.conv.forward(tape, store, x)?;
        tape.upsample_bilinear(a, self.factor)
    }
}

/// Executable graph for one variant: backbone, side modules and fusion layer,
/// owning its parameters.
#[derive(Clone, Debug)]
pub struct NetworkGraph<T = f32> {
    pub variant: ArchVariant,
    pub head: Head,
    pub k: usize,
    pub backbone: BackboneConfig,
    pub params: ParamStore<T>,
    stages: Vec<Vec<ResidualBlock>>,
    /// Classification modules, one per tapped stage.
    classifiers: Vec<SideModule>,
    /// Single-channel feature modules (CASENet family only).
    features: Vec<SideModule>,
    fusion: Option<Conv2d>,
}

/// Named taps of one forward pass. All are at input resolution.
#[derive(Clone, Debug)]
pub struct Outputs {
    /// `(side number 1..=5, K-channel activation)`.
    pub side_activations: Vec<(usize, Var)>,
    /// `(side number 1..=3, 1-channel feature)`.
    pub side_features: Vec<(usize, Var)>,
    /// Fused activation A^(6); for Basic, the single output.
    pub fused: Var,
}

impl Outputs {
    pub fn side(&self, number: usize) -> Option<Var> {
        self.side_activations
            .iter()
            .find(|(n, _)| *n == number)
            .map(|&(_, v)| v)
    }
}

/// Output position `k * 5 + j` takes flat channel `j * K + k`.
pub fn sliced_order(k: usize) -> Vec<usize> {
    let mut order = Vec::with_capacity(5 * k);
    for class in 0..k {
        for side in 0..5 {
            order.push(side * k + class);
        }
    }
    order
}

/// Group `g` is `F1, F2, F3, A5_g` as `(input, channel)` sources over inputs `[F1, F2, F3, A5]`.
pub fn shared_map(k: usize) -> Vec<(usize, usize)> {
    (0..k)
        .flat_map(|g| [(0, 0), (1, 0), (2, 0), (3, g)])
        .collect()
}

/// Interleaves five K-channel side activations class by class.
pub fn sliced_concat<T: Scalar>(tape: &mut Tape<T>, sides: &[Var], k: usize) -> Result<Var> {
    if sides.len() != 5 {
        return Err(Error::config(format!("sliced concatenation needs 5 sides, got {}", sides.len())));
    }
    for &s in sides {
        if tape.shape(s).c != k {
            return Err(Error::config(format!(
                "sliced concatenation expects {k}-channel sides, got {}",
                tape.shape(s)
            )));
        }
    }
    tape.concat_channels(sides, &sliced_order(k))
}

/// Replicates the three bottom features in front of every top activation channel.
pub fn shared_concat<T: Scalar>(tape: &mut Tape<T>, features: &[Var], top: Var) -> Result<Var> {
    if features.len() != 3 || features.iter().any(|&f| tape.shape(f).c != 1) {
        return Err(Error::config("shared concatenation needs three 1-channel features"));
    }
    let k = tape.shape(top).c;
    let inputs = [features[0], features[1], features[2], top];
    tape.gather_channels(&inputs, &shared_map(k))
}

/// K-grouped 1x1 convolution whose class `k` output reads only group `k`.
/// Starts as the per-group average with zero bias.
pub fn fused_classifier<T: Scalar>(
    store: &mut ParamStore<T>,
    seed: u64,
    in_channels: usize,
    k: usize,
) -> Result<Conv2d> {
    if k == 0 || !in_channels.is_multiple_of(k) {
        return Err(Error::config(format!(
            "fused classification: {in_channels} channels not divisible into {k} groups"
        )));
    }
    let per_group = in_channels / k;
    Ok(Conv2d::new(
        store,
        seed,
        "fuse",
        in_channels,
        k,
        1,
        ConvSpec::new(1, 1, k, 0),
        WeightInit::Constant(1.0 / per_group as f64),
    ))
}

impl<T: Scalar> NetworkGraph<T> {
    /// Wires the graph for `variant` and initializes parameters from `seed`.
    pub fn build(variant: ArchVariant, head: Head, k: usize, backbone: BackboneConfig, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::config("number of classes K must be at least 1"));
        }
        if head == Head::Softmax && variant != ArchVariant::Basic {
            return Err(Error::config("the softmax head is only wired for the Basic architecture"));
        }
        backbone.validate()?;
        let out_ch = head.channels(k);
        let mut store = ParamStore::new();
        let mut stages = Vec::with_capacity(5);
        let mut cin = INPUT_CHANNELS;
        for s in 0..5 {
            let cout = backbone.stage_channels[s];
            let blocks = (0..backbone.blocks_per_stage)
                .map(|b| {
                    let block = ResidualBlock::new(
                        &mut store,
                        seed,
                        &format!("res{}.{}", s + 1, b),
                        if b == 0 { cin } else { cout },
                        cout,
                        if b == 0 { LOCAL_STRIDES[s] } else { 1 },
                        backbone.stage_dilation(s),
                    );
                    block
                })
                .collect();
            stages.push(blocks);
            cin = cout;
        }
        let ch = |s: usize| backbone.stage_channels[s];
        let mut classifiers = Vec::new();
        let mut features = Vec::new();
        let fusion = match variant {
            ArchVariant::Basic => {
                classifiers.push(SideModule::new(&mut store, seed, "side5.cls", 4, ch(4), out_ch));
                None
            }
            ArchVariant::Dsn => {
                for s in 0..5 {
                    classifiers.push(SideModule::new(&mut store, seed, &format!("side{}.cls", s + 1), s, ch(s), k));
                }
                Some(fused_classifier(&mut store, seed, 5 * k, k)?)
            }
            ArchVariant::CaseNet | ArchVariant::CaseNetMinus | ArchVariant::CaseNetEdge => {
                for s in 0..3 {
                    features.push(SideModule::new(&mut store, seed, &format!("side{}.feat", s + 1), s, ch(s), 1));
                }
                classifiers.push(SideModule::new(&mut store, seed, "side5.cls", 4, ch(4), k));
                Some(fused_classifier(&mut store, seed, 4 * k, k)?)
            }
        };
        Ok(NetworkGraph {
            variant,
            head,
            k,
            backbone,
            params: store,
            stages,
            classifiers,
            features,
            fusion,
        })
    }

    /// Channels of the trained output (K, or K + 1 for the softmax head).
    pub fn output_channels(&self) -> usize {
        self.head.channels(self.k)
    }

    /// Records a forward pass of `image` (N x 3 x H x W, H and W multiples of 8).
    pub fn forward(&self, tape: &mut Tape<T>, image: Tensor<T>) -> Result<Outputs> {
        let s = image.shape();
        if s.c != INPUT_CHANNELS {
            return Err(Error::config(format!("expected {INPUT_CHANNELS}-channel input, got {s}")));
        }
        let stride = STAGE_STRIDES[4];
        if s.h == 0 || s.w == 0 || !s.h.is_multiple_of(stride) || !s.w.is_multiple_of(stride) {
            return Err(Error::config(format!(
                "input {}x{} is not a positive multiple of the backbone stride {stride}",
                s.h, s.w
            )));
        }
        let store = &self.params;
        let mut x = tape.input(image)?;
        let mut taps = Vec::with_capacity(5);
        for blocks in &self.stages {
            for block in blocks {
                x = block.forward(tape, store, x)?;
            }
            taps.push(x);
        }
        let mut side_activations = Vec::new();
        for m in &self.classifiers {
            let a = m.forward(tape, store, taps[m.stage])?;
            side_activations.push((m.stage + 1, a));
        }
        let mut side_features = Vec::new();
        for m in &self.features {
            let f = m.forward(tape, store, taps[m.stage])?;
            side_features.push((m.stage + 1, f));
        }
        let fused = match (&self.fusion, self.variant) {
            (None, _) => side_activations[0].1,
            (Some(fuse), ArchVariant::Dsn) => {
                let sides: Vec<Var> = side_activations.iter().map(|&(_, v)| v).collect();
                let af = sliced_concat(tape, &sides, self.k)?;
                fuse.forward(tape, store, af)?
            }
            (Some(fuse), _) => {
                let feats: Vec<Var> = side_features.iter().map(|&(_, v)| v).collect();
                let af = shared_concat(tape, &feats, side_activations[0].1)?;
                fuse.forward(tape, store, af)?
            }
        };
        Ok(Outputs {
            side_activations,
            side_features,
            fused,
        })
    }

    pub fn cast<U: Scalar>(&self) -> NetworkGraph<U> {
        NetworkGraph {
            variant: self.variant,
            head: self.head,
            k: self.k,
            backbone: self.backbone.clone(),
            params: self.params.cast(),
            stages: self.stages.clone(),
            classifiers: self.classifiers.clone(),
            features: self.features.clone(),
            fusion: self.fusion.clone(),
        }
    }
}
