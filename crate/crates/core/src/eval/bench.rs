use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::Restorer;
use crate::engine::Tensor;
use crate::{par, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub model_id: String,
    pub image_size: [usize; 2],
    pub images: usize,
    pub warmup: usize,
    pub repeat: usize,
    pub timed_forwards: usize,
    /// Mean seconds per image within each repeat.
    pub run_seconds_per_image: Vec<f64>,
    pub mean_seconds_per_image: f64,
    pub median_seconds_per_image: f64,
    pub fps: f64,
    /// Standard deviation over mean of `run_seconds_per_image`.
    pub coefficient_of_variation: f64,
    pub threads: usize,
    pub hardware: String,
    pub note: String,
}

impl BenchReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Best-effort description of the host: CPU model, architecture, threads.
pub fn hardware_description() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| "unknown CPU".into());
    format!(
        "{cpu}; {} {}; {} worker threads",
        std::env::consts::OS,
        std::env::consts::ARCH,
        par::current_num_threads()
    )
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Times single-image forward passes: `warmup` untimed passes, then
/// `repeat` runs over every image. Decoding and I/O are not included.
pub fn bench_throughput(
    model: &dyn Restorer,
    images: &[Tensor],
    warmup: usize,
    repeat: usize,
    hardware: &str,
) -> Result<BenchReport> {
    if images.is_empty() {
        return Err(Error::Empty("benchmark image list".into()));
    }
    if repeat < 3 {
        return Err(Error::Parameter(format!("repeat must be at least 3, got {repeat}")));
    }
    let s = images[0].shape();
    if let Some(other) = images.iter().find(|t| t.shape() != s) {
        return Err(Error::ShapeMismatch {
            op: "bench",
            left: s,
            right: other.shape(),
        });
    }
    for i in 0..warmup {
        model.restore(&images[i % images.len()])?;
    }
    let mut all = Vec::with_capacity(repeat * images.len());
    let mut runs = Vec::with_capacity(repeat);
    for _ in 0..repeat {
        let mut total = 0.0;
        for img in images {
            let start = Instant::now();
            let out = model.restore(img)?;
            let t = start.elapsed().as_secs_f64();
            std::hint::black_box(out);
            all.push(t);
            total += t;
        }
        runs.push(total / images.len() as f64);
    }
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let run_mean = runs.iter().sum::<f64>() / runs.len() as f64;
    let var = runs.iter().map(|r| (r - run_mean).powi(2)).sum::<f64>() / (runs.len() - 1) as f64;
    Ok(BenchReport {
        model_id: model.id(),
        image_size: [s.height, s.width],
        images: images.len(),
        warmup,
        repeat,
        timed_forwards: all.len(),
        run_seconds_per_image: runs,
        mean_seconds_per_image: mean,
        median_seconds_per_image: median(&mut all),
        fps: 1.0 / mean,
        coefficient_of_variation: var.sqrt() / run_mean,
        threads: par::current_num_threads(),
        hardware: hardware.to_string(),
        note: "pure forward-pass time on the CPU, batch size 1".into(),
    })
}
