//! On-disk dataset format.
//!
//! Manifest (`<name>`, UTF-8, `#` comments, one record per line):
//!
//! ```text
//! version 1
//! dim 64
//! classes 10
//! images 400
//! patches 4800
//! image <image_id> <scene_label> <train|test> <holistic_offset>
//! patch <patch_id> <image_id> <cx> <cy> <w> <h> <top|bottom> <offset>
//! ```
//!
//! Binary companion (`<name>.bin`): magic "MOBJ", u32 version, u32 d, u32 C,
//! u64 patch count, u64 image count, then raw little-endian f32 records.
//! Offsets count f32 values from the end of the 32-byte header and must be
//! strictly increasing, one record of exactly d values each.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::types::{
    validate_dataset, BBox, Dataset, FeatureVector, ImageRecord, PatchLevel, PatchRecord, Split,
};

const MAGIC: &[u8; 4] = b"MOBJ";
const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 32;

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    /// L2-normalize all features at ingestion (the pipeline convention).
    /// Raw-scale mode is an escape hatch for externally normalized data.
    pub normalize: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { normalize: true }
    }
}

fn binary_path(manifest_path: &Path) -> PathBuf {
    let mut os = manifest_path.as_os_str().to_owned();
    os.push(".bin");
    PathBuf::from(os)
}

pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<Dataset> {
    load_dataset_with_options(manifest_path, LoadOptions::default())
}

pub fn load_dataset_with_options(
    manifest_path: impl AsRef<Path>,
    options: LoadOptions,
) -> Result<Dataset> {
    let manifest_path = manifest_path.as_ref();
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: manifest_path.to_path_buf(),
        line,
        msg,
    };

    let text = fs::read_to_string(manifest_path)
        .map_err(|e| Error::io(manifest_path.to_path_buf(), e))?;

    let bin_path = binary_path(manifest_path);
    let bin = fs::read(&bin_path).map_err(|e| Error::io(bin_path.clone(), e))?;
    if bin.len() < HEADER_LEN {
        return Err(parse_err(0, format!("binary {} shorter than header", bin_path.display())));
    }
    if &bin[0..4] != MAGIC {
        return Err(parse_err(0, format!("binary {}: bad magic", bin_path.display())));
    }
    let bin_version = u32::from_le_bytes(bin[4..8].try_into().unwrap());
    if bin_version != FORMAT_VERSION {
        return Err(parse_err(0, format!("unsupported binary version {bin_version}")));
    }
    let bin_dim = u32::from_le_bytes(bin[8..12].try_into().unwrap()) as usize;
    let bin_classes = u32::from_le_bytes(bin[12..16].try_into().unwrap()) as usize;
    let bin_patches = u64::from_le_bytes(bin[16..24].try_into().unwrap()) as usize;
    let bin_images = u64::from_le_bytes(bin[24..32].try_into().unwrap()) as usize;
    let value_count = (bin.len() - HEADER_LEN) / 4;

    let read_record = |offset: usize, dim: usize, what: &str, line: usize| -> Result<Vec<f64>> {
        if offset + dim > value_count {
            return Err(parse_err(
                line,
                format!(
                    "binary truncated: {what} needs values [{offset}, {}) but file holds {value_count}",
                    offset + dim
                ),
            ));
        }
        let start = HEADER_LEN + 4 * offset;
        let mut out = Vec::with_capacity(dim);
        for i in 0..dim {
            let b = &bin[start + 4 * i..start + 4 * i + 4];
            out.push(f32::from_le_bytes(b.try_into().unwrap()) as f64);
        }
        Ok(out)
    };

    let mut header_version = None;
    let mut dim = None;
    let mut classes = None;
    let mut n_images = None;
    let mut n_patches = None;
    let mut images: Vec<ImageRecord> = Vec::new();
    let mut patches: Vec<PatchRecord> = Vec::new();
    let mut last_offset: Option<usize> = None;

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let key = fields[0];

        let want = |n: usize| -> Result<()> {
            if fields.len() != n + 1 {
                Err(parse_err(
                    line_no,
                    format!("`{key}` record needs {n} fields, got {}", fields.len() - 1),
                ))
            } else {
                Ok(())
            }
        };
        let int = |s: &str| -> Result<u64> {
            s.parse::<u64>()
                .map_err(|_| parse_err(line_no, format!("expected integer, got `{s}`")))
        };
        let real = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| parse_err(line_no, format!("expected real, got `{s}`")))
        };

        match key {
            "version" => {
                want(1)?;
                header_version = Some(int(fields[1])? as u32);
            }
            "dim" => {
                want(1)?;
                dim = Some(int(fields[1])? as usize);
            }
            "classes" => {
                want(1)?;
                classes = Some(int(fields[1])? as usize);
            }
            "images" => {
                want(1)?;
                n_images = Some(int(fields[1])? as usize);
            }
            "patches" => {
                want(1)?;
                n_patches = Some(int(fields[1])? as usize);
            }
            "image" => {
                want(4)?;
                let d = dim.ok_or_else(|| parse_err(line_no, "image record before dim header".into()))?;
                let offset = int(fields[4])? as usize;
                if let Some(prev) = last_offset {
                    if offset <= prev {
                        return Err(parse_err(
                            line_no,
                            format!("offset {offset} not strictly increasing (previous {prev})"),
                        ));
                    }
                }
                last_offset = Some(offset);
                let values = read_record(offset, d, &format!("image {}", fields[1]), line_no)?;
                images.push(ImageRecord {
                    image_id: int(fields[1])?,
                    scene_label: int(fields[2])? as usize,
                    split: Split::parse(fields[3])
                        .ok_or_else(|| parse_err(line_no, format!("bad split `{}`", fields[3])))?,
                    patches: Vec::new(),
                    holistic: FeatureVector::new(values)
                        .map_err(|e| parse_err(line_no, e.to_string()))?,
                });
            }
            "patch" => {
                want(8)?;
                let d = dim.ok_or_else(|| parse_err(line_no, "patch record before dim header".into()))?;
                let offset = int(fields[8])? as usize;
                if let Some(prev) = last_offset {
                    if offset <= prev {
                        return Err(parse_err(
                            line_no,
                            format!("offset {offset} not strictly increasing (previous {prev})"),
                        ));
                    }
                }
                last_offset = Some(offset);
                let values =
                    read_record(offset, d, &format!("patch {}", fields[1]), line_no)?;
                patches.push(PatchRecord {
                    patch_id: int(fields[1])?,
                    image_id: int(fields[2])?,
                    feature: FeatureVector::new(values)
                        .map_err(|e| parse_err(line_no, e.to_string()))?,
                    bbox: BBox {
                        cx: real(fields[3])?,
                        cy: real(fields[4])?,
                        w: real(fields[5])?,
                        h: real(fields[6])?,
                    },
                    level: PatchLevel::parse(fields[7])
                        .ok_or_else(|| parse_err(line_no, format!("bad level `{}`", fields[7])))?,
                });
            }
            other => {
                return Err(parse_err(line_no, format!("unknown record `{other}`")));
            }
        }
    }

    match header_version {
        Some(FORMAT_VERSION) => {}
        Some(v) => return Err(parse_err(0, format!("unsupported manifest version {v}"))),
        None => return Err(parse_err(0, "missing version header".into())),
    }
    let dim = dim.ok_or_else(|| parse_err(0, "missing dim header".into()))?;
    let classes = classes.ok_or_else(|| parse_err(0, "missing classes header".into()))?;
    if images.is_empty() {
        return Err(parse_err(0, "empty dataset (no image records)".into()));
    }
    if n_images != Some(images.len()) {
        return Err(parse_err(
            0,
            format!("header says {n_images:?} images, manifest lists {}", images.len()),
        ));
    }
    if n_patches != Some(patches.len()) {
        return Err(parse_err(
            0,
            format!("header says {n_patches:?} patches, manifest lists {}", patches.len()),
        ));
    }
    if bin_dim != dim || bin_classes != classes || bin_patches != patches.len() || bin_images != images.len() {
        return Err(parse_err(
            0,
            format!(
                "binary header (d={bin_dim}, C={bin_classes}, {bin_patches} patches, {bin_images} images) \
                 disagrees with manifest (d={dim}, C={classes}, {} patches, {} images)",
                patches.len(),
                images.len()
            ),
        ));
    }

    // rebuild image -> patch lists from patch back-references
    images.sort_by_key(|im| im.image_id);
    for p in &patches {
        if let Ok(i) = images.binary_search_by_key(&p.image_id, |im| im.image_id) {
            images[i].patches.push(p.patch_id);
        }
    }
    for im in &mut images {
        im.patches.sort_unstable();
    }

    let mut ds = Dataset::new(images, patches, classes, dim);
    if options.normalize {
        for p in &mut ds.patches {
            p.feature = p.feature.l2_normalized();
        }
        for im in &mut ds.images {
            im.holistic = im.holistic.l2_normalized();
        }
    }

    let report = validate_dataset(&ds);
    if !report.is_empty() {
        return Err(Error::Validation(format!(
            "{}: {}",
            manifest_path.display(),
            report
        )));
    }
    Ok(ds)
}

/// Writes `ds` as manifest + binary. Byte-stable: identical datasets produce
/// identical files.
pub fn save_dataset(ds: &Dataset, manifest_path: impl AsRef<Path>) -> Result<()> {
    let manifest_path = manifest_path.as_ref();
    if let Some(parent) = manifest_path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent.to_path_buf(), e))?;
        }
    }

    let mut images: Vec<&ImageRecord> = ds.images.iter().collect();
    images.sort_by_key(|im| im.image_id);
    let mut patches: Vec<&PatchRecord> = ds.patches.iter().collect();
    patches.sort_by_key(|p| p.patch_id);

    let mut manifest = String::new();
    manifest.push_str("# meta-object dataset manifest\n");
    manifest.push_str(&format!("version {FORMAT_VERSION}\n"));
    manifest.push_str(&format!("dim {}\n", ds.feature_dim));
    manifest.push_str(&format!("classes {}\n", ds.num_classes));
    manifest.push_str(&format!("images {}\n", images.len()));
    manifest.push_str(&format!("patches {}\n", patches.len()));

    let mut bin: Vec<u8> = Vec::with_capacity(
        HEADER_LEN + 4 * ds.feature_dim * (images.len() + patches.len()),
    );
    bin.extend_from_slice(MAGIC);
    bin.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bin.extend_from_slice(&(ds.feature_dim as u32).to_le_bytes());
    bin.extend_from_slice(&(ds.num_classes as u32).to_le_bytes());
    bin.extend_from_slice(&(patches.len() as u64).to_le_bytes());
    bin.extend_from_slice(&(images.len() as u64).to_le_bytes());

    let mut offset = 0usize;
    let mut push_record = |bin: &mut Vec<u8>, values: &[f64]| -> usize {
        let at = offset;
        for &v in values {
            bin.extend_from_slice(&(v as f32).to_le_bytes());
        }
        offset += values.len();
        at
    };

    for im in &images {
        let at = push_record(&mut bin, im.holistic.values());
        manifest.push_str(&format!(
            "image {} {} {} {}\n",
            im.image_id,
            im.scene_label,
            im.split.as_str(),
            at
        ));
    }
    for p in &patches {
        let at = push_record(&mut bin, p.feature.values());
        manifest.push_str(&format!(
            "patch {} {} {} {} {} {} {} {}\n",
            p.patch_id,
            p.image_id,
            p.bbox.cx,
            p.bbox.cy,
            p.bbox.w,
            p.bbox.h,
            p.level.as_str(),
            at
        ));
    }

    let bin_path = binary_path(manifest_path);
    let mut f =
        fs::File::create(manifest_path).map_err(|e| Error::io(manifest_path.to_path_buf(), e))?;
    f.write_all(manifest.as_bytes())
        .map_err(|e| Error::io(manifest_path.to_path_buf(), e))?;
    let mut fb = fs::File::create(&bin_path).map_err(|e| Error::io(bin_path.clone(), e))?;
    fb.write_all(&bin).map_err(|e| Error::io(bin_path.clone(), e))?;
    Ok(())
}
