use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Restorer;
use crate::degrade::SkippedInput;
use crate::engine::{Element, Tensor};
use crate::image_io::{from_tensor, is_image_file, read_image, to_tensor, write_png};
use crate::{Error, Result};

/// Record of a [`restore_batch`] run, written as `index.json`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RestoreIndex {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub skipped: Vec<SkippedInput>,
}

/// Mirror index without repeating the edge sample (`-1 -> 1`).
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m < n as isize { m } else { period - m }) as usize
}

/// Extends the bottom and right edges by reflection to `height x width`.
pub fn reflect_pad<T: Element>(t: &Tensor<T>, height: usize, width: usize) -> Result<Tensor<T>> {
    let s = t.shape();
    if height < s.height || width < s.width {
        return Err(Error::Parameter(format!("cannot pad {s} down to {height}x{width}")));
    }
    Ok(Tensor::from_fn([s.batch, s.channels, height, width], |b, c, y, x| {
        t.at(b, c, reflect(y as isize, s.height), reflect(x as isize, s.width))
    }))
}

fn crop<T: Element>(t: &Tensor<T>, height: usize, width: usize) -> Tensor<T> {
    let s = t.shape();
    Tensor::from_fn([s.batch, s.channels, height, width], |b, c, y, x| t.at(b, c, y, x))
}

/// Restores an image of any size: reflect-pad to the model's size multiple,
/// run, crop back.
pub fn restore_image(model: &dyn Restorer, input: &Tensor) -> Result<Tensor> {
    let s = input.shape();
    let m = model.size_multiple();
    let (h, w) = (s.height.div_ceil(m) * m, s.width.div_ceil(m) * m);
    if (h, w) == (s.height, s.width) {
        return model.restore(input);
    }
    let out = model.restore(&reflect_pad(input, h, w)?)?;
    Ok(crop(&out, s.height, s.width))
}

/// Restores every PNG/JPEG in `input_dir` into `output_dir` as
/// `<stem>.png`, plus `index.json`. Unreadable files are skipped and listed.
pub fn restore_batch(model: &dyn Restorer, input_dir: &Path, output_dir: &Path) -> Result<RestoreIndex> {
    let mut files: Vec<_> = std::fs::read_dir(input_dir)
        .map_err(|e| Error::io(input_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image_file(p))
        .collect();
    files.sort();
    std::fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
    let mut index = RestoreIndex::default();
    for path in files {
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let result = read_image(&path).and_then(|img| {
            let restored = restore_image(model, &to_tensor(&img))?;
            let stem = path.file_stem().unwrap_or_default().to_string_lossy();
            let mut out_name = format!("{stem}.png");
            if index.outputs.contains(&out_name) {
                // a.png and a.jpg would otherwise collide
                let ext = path.extension().unwrap_or_default().to_string_lossy();
                out_name = format!("{stem}_{ext}.png");
            }
            write_png(&from_tensor(&restored, 0)?, output_dir.join(&out_name))?;
            Ok(out_name)
        });
        match result {
            Ok(out) => {
                index.inputs.push(name);
                index.outputs.push(out);
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                index.skipped.push(SkippedInput {
                    file: name,
                    reason: e.to_string(),
                });
            }
        }
    }
    let path = output_dir.join("index.json");
    let json = serde_json::to_string_pretty(&index)? + "\n";
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(index)
}
