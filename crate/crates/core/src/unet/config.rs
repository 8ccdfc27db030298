use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Architecture hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UNetConfig {
    /// Number of downsampling stages.
    pub depth: usize,
    /// Feature maps in the first stage; doubled at every stage below it.
    pub base_channels: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        UNetConfig {
            depth: 4,
            base_channels: 64,
            in_channels: 3,
            out_channels: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    /// 3x3 convolution, stride 1, padding 1, followed by ReLU.
    Conv3x3,
    /// 2x2 transposed convolution, stride 2.
    UpConv2x2,
    /// 1x1 convolution to the output channels, followed by sigmoid.
    Project1x1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl LayerSpec {
    pub fn kernel(&self) -> usize {
        match self.kind {
            LayerKind::Conv3x3 => 3,
            LayerKind::UpConv2x2 => 2,
            LayerKind::Project1x1 => 1,
        }
    }

    pub fn stride(&self) -> usize {
        match self.kind {
            LayerKind::UpConv2x2 => 2,
            _ => 1,
        }
    }

    pub fn padding(&self) -> usize {
        match self.kind {
            LayerKind::Conv3x3 => 1,
            _ => 0,
        }
    }

    pub fn param_count(&self) -> usize {
        let k = self.kernel();
        self.out_channels * self.in_channels * k * k + self.out_channels
    }
}

impl UNetConfig {
    /// Small configuration used for CPU-scale experiments.
    pub const fn desk() -> Self {
        UNetConfig {
            depth: 3,
            base_channels: 16,
            in_channels: 3,
            out_channels: 3,
        }
    }

    pub fn new(depth: usize, base_channels: usize) -> Result<Self> {
        let cfg = UNetConfig {
            depth,
            base_channels,
            ..UNetConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::Config("depth must be at least 1".into()));
        }
        if self.depth > 12 {
            return Err(Error::Config(format!("depth {} is unreasonably large", self.depth)));
        }
        if self.base_channels == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Config(format!("channel counts must be positive: {self:?}")));
        }
        if self.base_channels.checked_shl(self.depth as u32).is_none_or(|c| c > 1 << 16) {
            return Err(Error::Config(format!("bottleneck width overflows: {self:?}")));
        }
        Ok(())
    }

    /// Feature maps of encoder stage `stage` (1-based); `depth + 1` is the bottleneck.
    pub fn stage_channels(&self, stage: usize) -> usize {
        self.base_channels << (stage - 1)
    }

    /// Input height and width must be multiples of this.
    pub fn size_multiple(&self) -> usize {
        1 << self.depth
    }

    /// Every learnable layer in build order.
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let conv = |i, o| LayerSpec {
            kind: LayerKind::Conv3x3,
            in_channels: i,
            out_channels: o,
        };
        let mut specs = Vec::new();
        let mut prev = self.in_channels;
        for stage in 1..=self.depth + 1 {
            let c = self.stage_channels(stage);
            specs.push(conv(prev, c));
            specs.push(conv(c, c));
            prev = c;
        }
        for stage in (1..=self.depth).rev() {
            let c = self.stage_channels(stage);
            specs.push(LayerSpec {
                kind: LayerKind::UpConv2x2,
                in_channels: prev,
                out_channels: c,
            });
            specs.push(conv(2 * c, c));
            specs.push(conv(c, c));
            specs.push(conv(c, c));
            prev = c;
        }
        specs.push(LayerSpec {
            kind: LayerKind::Project1x1,
            in_channels: prev,
            out_channels: self.out_channels,
        });
        specs
    }

    pub fn param_count(&self) -> usize {
        self.layer_specs().iter().map(LayerSpec::param_count).sum()
    }
}
