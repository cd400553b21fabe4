//! Dataset ingestion and file formats: Middlebury `.flo` flow files, PNG/PPM
//! images normalized to `[-1, 1]`, the FlyingChairs and Sintel directory
//! layouts, and the seeded synthetic generator.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use neuflow_core::flow::{FlowField, FlowScale};
use neuflow_core::image::ImageTensor;
use neuflow_core::synthetic::{generate_synthetic, Motion};
use neuflow_core::tensor::{Shape, Tensor};
use neuflow_core::FlowSample;

/// Middlebury sanity magic; reads as "PIEH" in ASCII.
pub const FLO_MAGIC: f32 = 202021.25;
const MAX_FLO_DIM: i32 = 100_000;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not a .flo file (bad magic)")]
    BadMagic { path: PathBuf },
    #[error("{path}: corrupt flow file: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("{path}: image decode failed: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("non-finite flow value at pixel {index}; refusing to write")]
    NonFinite { index: usize },
    #[error("dataset root {0} does not exist")]
    MissingRoot(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a Middlebury `.flo` file: little-endian f32 magic, i32 width, i32
/// height, then `h*w*2` interleaved `(u, v)` f32 values, row-major.
pub fn read_flo(path: &Path) -> Result<FlowField<f32>, DataError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let corrupt = |reason: &str| DataError::Corrupt {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < 12 {
        return Err(corrupt("shorter than the 12-byte header"));
    }
    let magic = f32::from_le_bytes(bytes[0..4].try_into().unwrap());
    if magic.to_bits() != FLO_MAGIC.to_bits() {
        return Err(DataError::BadMagic {
            path: path.to_path_buf(),
        });
    }
    let w = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let h = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if w <= 0 || h <= 0 || w > MAX_FLO_DIM || h > MAX_FLO_DIM {
        return Err(corrupt(&format!("implausible dimensions {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let expected = 12 + h * w * 2 * 4;
    if bytes.len() < expected {
        return Err(corrupt(&format!(
            "payload truncated: {} bytes, need {expected}",
            bytes.len()
        )));
    }
    if bytes.len() > expected {
        return Err(corrupt("trailing bytes after payload"));
    }
    let mut data = Vec::with_capacity(h * w * 2);
    for chunk in bytes[12..].chunks_exact(4) {
        data.push(f32::from_le_bytes(chunk.try_into().unwrap()));
    }
    Ok(FlowField::new(
        Tensor::from_vec(Shape::d3(h, w, 2), data),
        FlowScale::Full,
    ))
}

/// Writes a `.flo` file atomically (temp file + rename). Non-finite values
/// are rejected before anything touches the disk.
pub fn write_flo(path: &Path, flow: &FlowField<f32>) -> Result<(), DataError> {
    let data = flow.tensor().data();
    if let Some(index) = data.iter().position(|v| !v.is_finite()) {
        return Err(DataError::NonFinite { index });
    }
    let (h, w) = (flow.height(), flow.width());
    let mut bytes = Vec::with_capacity(12 + data.len() * 4);
    bytes.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    bytes.extend_from_slice(&(w as i32).to_le_bytes());
    bytes.extend_from_slice(&(h as i32).to_le_bytes());
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let tmp = path.with_extension("flo.tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(&bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))?;
    Ok(())
}

/// Decodes a PNG/PPM image to float RGB in `[-1, 1]` (fixed constants, no
/// dataset statistics).
pub fn load_image(path: &Path) -> Result<ImageTensor<f32>, DataError> {
    let img = image::open(path)
        .map_err(|source| DataError::Image {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = Vec::with_capacity(h * w * 3);
    for px in img.pixels() {
        for c in 0..3 {
            data.push(px.0[c] as f32 / 127.5 - 1.0);
        }
    }
    Ok(ImageTensor::new(Tensor::from_vec(Shape::d3(h, w, 3), data)))
}

/// Encodes a `[-1, 1]` image to 8-bit and saves it; the format follows the
/// file extension (`.png`, `.ppm`).
pub fn save_image(path: &Path, img: &ImageTensor<f32>) -> Result<(), DataError> {
    let (h, w) = (img.height(), img.width());
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    let data = img.tensor().data();
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) * 3;
            let to_byte =
                |v: f32| -> u8 { (((v + 1.0) * 127.5).round().clamp(0.0, 255.0)) as u8 };
            buf.put_pixel(
                x as u32,
                y as u32,
                image::Rgb([to_byte(data[i]), to_byte(data[i + 1]), to_byte(data[i + 2])]),
            );
        }
    }
    buf.save(path).map_err(|source| DataError::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Directory convention of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// `NNNNN_img1.ppm`, `NNNNN_img2.ppm`, `NNNNN_flow.flo` triples.
    Chairs,
    /// `clean/<scene>/frame_NNNN.png` + `flow/<scene>/frame_NNNN.flo`.
    SintelClean,
    /// Same as [`Layout::SintelClean`] but with the `final` pass.
    SintelFinal,
}

#[derive(Debug, Clone)]
pub enum DatasetSpec {
    OnDisk {
        root: PathBuf,
        layout: Layout,
        limit: Option<usize>,
    },
    Synthetic {
        seed: u64,
        count: usize,
        size: usize,
        motion: Motion,
    },
}

impl DatasetSpec {
    /// Short label for reports.
    pub fn label(&self) -> String {
        match self {
            DatasetSpec::OnDisk { root, layout, .. } => {
                format!("{:?}:{}", layout, root.display()).to_lowercase()
            }
            DatasetSpec::Synthetic { seed, count, size, .. } => {
                format!("synthetic:seed={seed},count={count},size={size}")
            }
        }
    }

    /// Guesses the on-disk layout from the directory structure.
    pub fn detect_layout(root: &Path) -> Layout {
        if root.join("clean").is_dir() {
            Layout::SintelClean
        } else if root.join("final").is_dir() {
            Layout::SintelFinal
        } else {
            Layout::Chairs
        }
    }
}

/// Samples plus the list of incomplete records that were skipped.
pub struct LoadedDataset {
    pub samples: Vec<FlowSample<f32>>,
    pub skipped: Vec<String>,
}

/// Loads a dataset with deterministic (lexicographic by id) ordering.
/// Chairs/Sintel samples carry all-valid masks; incomplete triples are
/// reported and skipped; an empty root yields an empty set.
pub fn load_dataset(spec: &DatasetSpec) -> Result<LoadedDataset, DataError> {
    match spec {
        DatasetSpec::Synthetic {
            seed,
            count,
            size,
            motion,
        } => Ok(LoadedDataset {
            samples: generate_synthetic(*seed, *count, *size, *motion),
            skipped: Vec::new(),
        }),
        DatasetSpec::OnDisk { root, layout, limit } => {
            if !root.exists() {
                return Err(DataError::MissingRoot(root.clone()));
            }
            let mut loaded = match layout {
                Layout::Chairs => load_chairs(root)?,
                Layout::SintelClean => load_sintel(root, "clean")?,
                Layout::SintelFinal => load_sintel(root, "final")?,
            };
            if loaded.samples.is_empty() {
                log::warn!("dataset at {} is empty", root.display());
            }
            if let Some(limit) = limit {
                loaded.samples.truncate(*limit);
            }
            Ok(loaded)
        }
    }
}

fn all_valid(h: usize, w: usize) -> Tensor<f32> {
    Tensor::full(Shape::d3(h, w, 1), 1.0)
}

fn load_chairs(root: &Path) -> Result<LoadedDataset, DataError> {
    let mut ids: Vec<String> = Vec::new();
    for entry in fs::read_dir(root).map_err(io_err(root))? {
        let entry = entry.map_err(io_err(root))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(id) = name.strip_suffix("_img1.ppm") {
            ids.push(id.to_string());
        }
    }
    ids.sort();
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for id in ids {
        let img1 = root.join(format!("{id}_img1.ppm"));
        let img2 = root.join(format!("{id}_img2.ppm"));
        let flo = root.join(format!("{id}_flow.flo"));
        if !img2.exists() || !flo.exists() {
            skipped.push(format!("{id}: missing counterpart file"));
            continue;
        }
        let img1 = load_image(&img1)?;
        let img2 = load_image(&img2)?;
        let gt_flow = read_flo(&flo)?;
        let (h, w) = (img1.height(), img1.width());
        if (gt_flow.height(), gt_flow.width()) != (h, w)
            || (img2.height(), img2.width()) != (h, w)
        {
            skipped.push(format!("{id}: inconsistent sizes"));
            continue;
        }
        samples.push(FlowSample {
            img1,
            img2,
            gt_flow,
            valid: all_valid(h, w),
            id,
        });
    }
    Ok(LoadedDataset { samples, skipped })
}

fn load_sintel(root: &Path, pass: &str) -> Result<LoadedDataset, DataError> {
    let pass_dir = root.join(pass);
    let flow_dir = root.join("flow");
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    if !pass_dir.is_dir() {
        return Ok(LoadedDataset { samples, skipped });
    }
    let mut scenes: Vec<PathBuf> = fs::read_dir(&pass_dir)
        .map_err(io_err(&pass_dir))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    scenes.sort();
    for scene in scenes {
        let scene_name = scene.file_name().unwrap().to_string_lossy().into_owned();
        let mut frames: Vec<String> = fs::read_dir(&scene)
            .map_err(io_err(&scene))?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".png"))
            .collect();
        frames.sort();
        for pair in frames.windows(2) {
            let stem = pair[0].trim_end_matches(".png");
            let id = format!("{scene_name}/{stem}");
            let flo = flow_dir.join(&scene_name).join(format!("{stem}.flo"));
            if !flo.exists() {
                skipped.push(format!("{id}: missing flow file"));
                continue;
            }
            let img1 = load_image(&scene.join(&pair[0]))?;
            let img2 = load_image(&scene.join(&pair[1]))?;
            let gt_flow = read_flo(&flo)?;
            let (h, w) = (img1.height(), img1.width());
            if (gt_flow.height(), gt_flow.width()) != (h, w) {
                skipped.push(format!("{id}: flow size mismatch"));
                continue;
            }
            samples.push(FlowSample {
                img1,
                img2,
                gt_flow,
                valid: all_valid(h, w),
                id,
            });
        }
    }
    samples.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(LoadedDataset { samples, skipped })
}

/// Writes samples as FlyingChairs-layout triples under `dir`.
pub fn write_chairs_layout(dir: &Path, samples: &[FlowSample<f32>]) -> Result<(), DataError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (i, s) in samples.iter().enumerate() {
        let id = format!("{i:05}");
        save_image(&dir.join(format!("{id}_img1.ppm")), &s.img1)?;
        save_image(&dir.join(format!("{id}_img2.ppm")), &s.img2)?;
        write_flo(&dir.join(format!("{id}_flow.flo")), &s.gt_flow)?;
    }
    Ok(())
}
