//! Synthetic underwater degradation and paired dataset generation.
//!
//! A clean image is attenuated per channel toward an ambient colour,
//! flattened toward its mean and perturbed with seeded Gaussian noise.

mod dataset;
mod resize;
mod scene;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::engine::{Element, Tensor};
use crate::{Error, Result};

pub use dataset::{
    build_dataset, load_manifest, load_split, split_of, DatasetManifest, ImagePair, ManifestEntry, SkippedInput, Split,
    MANIFEST_FILE, MANIFEST_VERSION,
};
pub use resize::resize_area;
pub use scene::procedural_scene;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationParams {
    /// Attenuation per unit depth, R, G, B.
    pub beta: [f64; 3],
    /// Background light, R, G, B.
    pub ambient: [f64; 3],
    pub depth_scale: f64,
    /// 0 keeps contrast, 1 flattens each channel to its mean.
    pub contrast_loss: f64,
    pub noise_sigma: f64,
    /// Seeds the noise field.
    pub seed: u64,
}

impl DegradationParams {
    /// Leaves images untouched.
    pub fn identity() -> Self {
        DegradationParams {
            beta: [0.0; 3],
            ambient: [0.0; 3],
            depth_scale: 1.0,
            contrast_loss: 0.0,
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Parameter(format!("{what} out of range in {self:?}")));
        if self.beta.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return bad("beta");
        }
        if self.ambient.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return bad("ambient");
        }
        if !(self.depth_scale.is_finite() && self.depth_scale > 0.0) {
            return bad("depth_scale");
        }
        if !(0.0..=1.0).contains(&self.contrast_loss) {
            return bad("contrast_loss");
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad("noise_sigma");
        }
        Ok(())
    }

    /// Transmission `exp(-beta_c * depth)` per channel.
    pub fn transmission(&self) -> [f64; 3] {
        self.beta.map(|b| (-b * self.depth_scale).exp())
    }
}

/// Applies the degradation to every image of a `B x 3 x H x W` batch.
pub fn degrade<T: Element>(clean: &Tensor<T>, params: &DegradationParams) -> Result<Tensor<T>> {
    params.validate()?;
    let s = clean.shape();
    if s.channels != 3 {
        return Err(Error::Format(format!("degradation needs RGB input, got {s}")));
    }
    let t = params.transmission();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let noise = Normal::new(0.0, params.noise_sigma).map_err(|e| Error::Parameter(e.to_string()))?;
    let mut out = Vec::with_capacity(clean.len());
    for b in 0..s.batch {
        for (c, (&tc, &ac)) in t.iter().zip(&params.ambient).enumerate() {
            let lit: Vec<f64> = clean
                .plane(b, c)
                .iter()
                .map(|v| v.as_f64() * tc + ac * (1.0 - tc))
                .collect();
            let mean = lit.iter().sum::<f64>() / lit.len().max(1) as f64;
            let k = params.contrast_loss;
            out.extend(lit.into_iter().map(|v| v * (1.0 - k) + mean * k));
        }
    }
    if params.noise_sigma > 0.0 {
        out.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
    }
    let data = out.into_iter().map(|v| T::from_f64_lossy(v.clamp(0.0, 1.0))).collect();
    Tensor::from_vec(s, data)
}

/// Families of water conditions for [`sample_params`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Greenish,
    Bluish,
    Turbid,
    Mixed,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Greenish, Preset::Bluish, Preset::Turbid, Preset::Mixed];

    /// Sampling ranges; `None` for [`Preset::Mixed`].
    pub fn ranges(self) -> Option<&'static PresetRanges> {
        match self {
            Preset::Greenish => Some(&GREENISH),
            Preset::Bluish => Some(&BLUISH),
            Preset::Turbid => Some(&TURBID),
            Preset::Mixed => None,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Greenish => "greenish",
            Preset::Bluish => "bluish",
            Preset::Turbid => "turbid",
            Preset::Mixed => "mixed",
        })
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.to_string() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Parameter(format!("unknown preset {s:?}")))
    }
}

/// Closed intervals from which each parameter is drawn uniformly.
#[derive(Clone, Debug, PartialEq)]
pub struct PresetRanges {
    pub beta: [(f64, f64); 3],
    pub ambient: [(f64, f64); 3],
    pub depth_scale: (f64, f64),
    pub contrast_loss: (f64, f64),
    pub noise_sigma: (f64, f64),
}

impl PresetRanges {
    pub fn contains(&self, p: &DegradationParams) -> bool {
        let within = |v: f64, (lo, hi): (f64, f64)| (lo..=hi).contains(&v);
        (0..3).all(|c| within(p.beta[c], self.beta[c]) && within(p.ambient[c], self.ambient[c]))
            && within(p.depth_scale, self.depth_scale)
            && within(p.contrast_loss, self.contrast_loss)
            && within(p.noise_sigma, self.noise_sigma)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> DegradationParams {
        let mut draw = |(lo, hi): (f64, f64)| rng.random_range(lo..=hi);
        let beta = self.beta.map(&mut draw);
        let ambient = self.ambient.map(&mut draw);
        DegradationParams {
            beta,
            ambient,
            depth_scale: draw(self.depth_scale),
            contrast_loss: draw(self.contrast_loss),
            noise_sigma: draw(self.noise_sigma),
            seed: rng.random(),
        }
    }
}

pub const GREENISH: PresetRanges = PresetRanges {
    beta: [(0.6, 1.2), (0.05, 0.25), (0.2, 0.5)],
    ambient: [(0.0, 0.1), (0.3, 0.55), (0.2, 0.4)],
    depth_scale: (0.5, 1.5),
    contrast_loss: (0.1, 0.4),
    noise_sigma: (0.0, 0.02),
};

pub const BLUISH: PresetRanges = PresetRanges {
    beta: [(0.7, 1.4), (0.2, 0.45), (0.02, 0.15)],
    ambient: [(0.0, 0.08), (0.2, 0.4), (0.4, 0.65)],
    depth_scale: (0.5, 1.5),
    contrast_loss: (0.1, 0.4),
    noise_sigma: (0.0, 0.02),
};

pub const TURBID: PresetRanges = PresetRanges {
    beta: [(0.7, 1.1), (0.4, 0.7), (0.35, 0.65)],
    ambient: [(0.2, 0.35), (0.35, 0.5), (0.3, 0.45)],
    depth_scale: (0.5, 1.5),
    contrast_loss: (0.3, 0.6),
    noise_sigma: (0.0, 0.02),
};

/// Draws parameters for `preset`; the mixed preset first picks one of the
/// other three.
pub fn sample_params(seed: u64, preset: Preset) -> DegradationParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ranges = match preset.ranges() {
        Some(r) => r,
        None => [&GREENISH, &BLUISH, &TURBID][rng.random_range(0..3)],
    };
    ranges.sample(&mut rng)
}

/// Independent child seed for item `index` (SplitMix64 finaliser).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
