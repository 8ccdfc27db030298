//! Test-set evaluation, batch restoration and throughput measurement.

mod bench;
mod restore;

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::degrade::ImagePair;
use crate::engine::Tensor;
use crate::metrics::{composite_loss, mse, ssim, LossConfig, SsimParams};
use crate::unet::{checkpoint_id, infer, ModelWeights};
use crate::{par, Error, Result};

pub use bench::{bench_throughput, hardware_description, BenchReport};
pub use restore::{reflect_pad, restore_batch, restore_image, RestoreIndex};

/// Anything that maps a distorted `B x 3 x H x W` batch to a restored one.
pub trait Restorer: Sync {
    fn restore(&self, input: &Tensor) -> Result<Tensor>;
    /// Height and width must be multiples of this.
    fn size_multiple(&self) -> usize;
    fn id(&self) -> String;
}

impl Restorer for ModelWeights<f32> {
    fn restore(&self, input: &Tensor) -> Result<Tensor> {
        infer(self, input)
    }

    fn size_multiple(&self) -> usize {
        self.config.size_multiple()
    }

    fn id(&self) -> String {
        checkpoint_id(self)
    }
}

/// Returns its input; scores the distorted images themselves.
#[derive(Clone, Copy, Debug, Default)]
pub struct Identity;

impl Restorer for Identity {
    fn restore(&self, input: &Tensor) -> Result<Tensor> {
        Ok(input.clone())
    }

    fn size_multiple(&self) -> usize {
        1
    }

    fn id(&self) -> String {
        "identity".into()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub id: String,
    pub mse: f64,
    pub ssim: f64,
    /// Composite loss at the report's alpha; 0 for a perfect restoration.
    pub ms_ssim_l1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedImage {
    pub id: String,
    pub reason: String,
}

/// Forward-pass timing gathered during evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalTiming {
    pub mean_seconds_per_image: f64,
    pub fps: f64,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model_id: String,
    /// `[height, width]` of the evaluated images, when all share one size.
    pub image_size: Option<[usize; 2]>,
    pub alpha: f64,
    pub count: usize,
    pub mean_mse: f64,
    pub mean_ssim: f64,
    pub mean_ms_ssim_l1: f64,
    pub rows: Vec<ImageMetrics>,
    pub skipped: Vec<SkippedImage>,
    /// Present only when requested, so default reports are reproducible byte for byte.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timing: Option<EvalTiming>,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Per-image rows: `id, mse, ssim, ms_ssim_l1`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn write(&self, json: Option<&Path>, csv: Option<&Path>) -> Result<()> {
        for (path, text) in [(json, self.to_json()?), (csv, self.to_csv()?)] {
            if let Some(path) = path {
                if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                }
                std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
#[derive(Default)]
pub struct EvalOptions {
    pub loss: LossConfig,
    pub ssim: SsimParams,
    /// Record forward-pass wall-clock time in the report.
    pub timing: bool,
}


fn score(model: &dyn Restorer, pair: &ImagePair, opts: &EvalOptions) -> Result<(ImageMetrics, f64)> {
    let (c, d) = (pair.clean.shape(), pair.distorted.shape());
    if c != d {
        return Err(Error::ShapeMismatch {
            op: "evaluate",
            left: d,
            right: c,
        });
    }
    let m = model.size_multiple();
    if d.height % m != 0 || d.width % m != 0 {
        return Err(Error::Indivisible {
            op: "evaluate",
            shape: d,
            divisor: m,
        });
    }
    let start = Instant::now();
    let restored = model.restore(&pair.distorted)?;
    let seconds = start.elapsed().as_secs_f64();
    Ok((
        ImageMetrics {
            id: pair.id.clone(),
            mse: mse(&restored, &pair.clean)?,
            ssim: ssim(&restored, &pair.clean, &opts.ssim)?,
            ms_ssim_l1: composite_loss(&restored, &pair.clean, &opts.loss, &opts.ssim)?.value,
        },
        seconds,
    ))
}

/// Restores every distorted image and scores it against its clean version.
/// Pairs that cannot be scored are listed in `skipped`.
pub fn evaluate(model: &dyn Restorer, pairs: &[ImagePair], opts: &EvalOptions) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(Error::Empty("evaluation set".into()));
    }
    let results = par::map_slice(pairs, |p| score(model, p, opts));
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let mut seconds = 0.0;
    for (pair, r) in pairs.iter().zip(results) {
        match r {
            Ok((row, t)) => {
                rows.push(row);
                seconds += t;
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", pair.id);
                skipped.push(SkippedImage {
                    id: pair.id.clone(),
                    reason: e.to_string(),
                });
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Empty(format!("all {} pairs were skipped", pairs.len())));
    }
    let n = rows.len() as f64;
    let mean = |f: fn(&ImageMetrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let sizes: Vec<[usize; 2]> = pairs
        .iter()
        .filter(|p| rows.iter().any(|r| r.id == p.id))
        .map(|p| [p.clean.shape().height, p.clean.shape().width])
        .collect();
    let image_size = sizes.first().copied().filter(|s| sizes.iter().all(|o| o == s));
    Ok(MetricsReport {
        model_id: model.id(),
        image_size,
        alpha: opts.loss.alpha,
        count: rows.len(),
        mean_mse: mean(|r| r.mse),
        mean_ssim: mean(|r| r.ssim),
        mean_ms_ssim_l1: mean(|r| r.ms_ssim_l1),
        timing: opts.timing.then(|| EvalTiming {
            mean_seconds_per_image: seconds / n,
            fps: n / seconds,
            note: "forward pass only; excludes decoding, disk I/O and metric computation".into(),
        }),
        rows,
        skipped,
    })
}
