//! On-disk MPI directories and PNG helpers.
//!
//! A directory holds a `manifest` of `key=value` lines and one RGBA file per
//! plane: `plane_0000.png` (8-bit) or `plane_0000.raw` (little-endian f32,
//! `H·H·4` values, row-major RGBA).

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, Rgb, RgbImage, Rgba, RgbaImage};
use nalgebra::{Matrix3, Vector3};

use super::camera::{CameraPose, Intrinsics};
use super::types::{Mpi, PlaneColors};
use crate::diffcore::Tensor;
use crate::kv::KeyValues;
use crate::{Error, Result};

pub const MANIFEST_FORMAT: &str = "mpivdr-mpi-1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlaneEncoding {
    #[default]
    Png8,
    Raw32,
}

impl PlaneEncoding {
    fn name(self) -> &'static str {
        match self {
            PlaneEncoding::Png8 => "png8",
            PlaneEncoding::Raw32 => "raw32",
        }
    }

    fn extension(self) -> &'static str {
        match self {
            PlaneEncoding::Png8 => "png",
            PlaneEncoding::Raw32 => "raw",
        }
    }
}

pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn plane_path(dir: &Path, plane: usize, encoding: PlaneEncoding) -> PathBuf {
    dir.join(format!("plane_{plane:04}.{}", encoding.extension()))
}

fn image_err(path: &Path) -> impl FnOnce(image::ImageError) -> Error + '_ {
    move |source| Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes an `[H, W, 3]` image in `[0, 1]` as an 8-bit RGB PNG.
pub fn save_rgb_png(path: &Path, image: &Tensor) -> Result<()> {
    let s = image.shape();
    if s.len() != 3 || s[2] != 3 {
        return Err(Error::invalid("save_rgb_png", format!("expected [H, W, 3], got {s:?}")));
    }
    let (h, w) = (s[0], s[1]);
    let d = image.data();
    let img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let i = (y as usize * w + x as usize) * 3;
        Rgb([to_u8(d[i]), to_u8(d[i + 1]), to_u8(d[i + 2])])
    });
    img.save(path).map_err(image_err(path))
}

/// Reads an 8-bit PNG into `[H, W, 3]` values in `[0, 1]`.
pub fn load_rgb_png(path: &Path) -> Result<Tensor> {
    let img = image::open(path).map_err(image_err(path))?.to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.pixels().flat_map(|p| p.0.map(|c| c as f64 / 255.0)).collect();
    Tensor::from_vec(&[h as usize, w as usize, 3], data)
}

/// Writes a boolean mask as a black/white PNG.
pub fn save_mask_png(path: &Path, mask: &[bool], height: usize, width: usize) -> Result<()> {
    if mask.len() != height * width {
        return Err(Error::shape("save_mask_png", &[height * width], &[mask.len()]));
    }
    let img = GrayImage::from_fn(width as u32, height as u32, |x, y| {
        image::Luma([if mask[y as usize * width + x as usize] { 255 } else { 0 }])
    });
    img.save(path).map_err(image_err(path))
}

/// Writes `mpi` and its capture pose to `dir`, creating the directory.
pub fn write_mpi_dir(dir: &Path, mpi: &Mpi, capture: &CameraPose, encoding: PlaneEncoding) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (l, h) = (mpi.planes(), mpi.size());
    let mut kv = KeyValues::new();
    kv.set("format", MANIFEST_FORMAT);
    kv.set("planes", l);
    kv.set("resolution", h);
    kv.set("near", mpi.near());
    kv.set("far", mpi.far());
    kv.set_list("depths", mpi.depths());
    kv.set("far_opaque", mpi.far_plane_opaque());
    kv.set("shared_texture", mpi.is_shared_texture());
    kv.set("encoding", encoding.name());
    kv.set_list("capture_rotation", capture.rotation().transpose().as_slice());
    kv.set_list("capture_translation", capture.translation().as_slice());
    let k = capture.intrinsics();
    kv.set_list("capture_intrinsics", &[k.fx, k.fy, k.cx, k.cy]);
    let manifest = dir.join("manifest");
    fs::write(&manifest, kv.to_text()).map_err(|e| Error::io(&manifest, e))?;

    for plane in 0..l {
        let rgb = mpi.plane_rgb(plane);
        let alpha = mpi.plane_alpha(plane);
        let path = plane_path(dir, plane, encoding);
        match encoding {
            PlaneEncoding::Png8 => {
                let img = RgbaImage::from_fn(h as u32, h as u32, |x, y| {
                    let p = y as usize * h + x as usize;
                    Rgba([to_u8(rgb[p * 3]), to_u8(rgb[p * 3 + 1]), to_u8(rgb[p * 3 + 2]), to_u8(alpha[p])])
                });
                img.save(&path).map_err(image_err(&path))?;
            }
            PlaneEncoding::Raw32 => {
                let mut bytes = Vec::with_capacity(h * h * 16);
                for p in 0..h * h {
                    for v in [rgb[p * 3], rgb[p * 3 + 1], rgb[p * 3 + 2], alpha[p]] {
                        bytes.extend_from_slice(&(v as f32).to_le_bytes());
                    }
                }
                fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            }
        }
    }
    Ok(())
}

fn read_plane(path: &Path, encoding: PlaneEncoding, h: usize) -> Result<Vec<[f64; 4]>> {
    match encoding {
        PlaneEncoding::Png8 => {
            let img = image::open(path).map_err(image_err(path))?.to_rgba8();
            if img.dimensions() != (h as u32, h as u32) {
                return Err(Error::format("plane image", path, format!("expected {h}x{h}, got {:?}", img.dimensions())));
            }
            Ok(img.pixels().map(|p| p.0.map(|c| c as f64 / 255.0)).collect())
        }
        PlaneEncoding::Raw32 => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            if bytes.len() != h * h * 16 {
                return Err(Error::format("raw plane", path, format!("expected {} bytes, got {}", h * h * 16, bytes.len())));
            }
            let vals: Vec<f64> = bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect();
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("raw plane"));
            }
            Ok(vals.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect())
        }
    }
}

/// Reads an MPI directory written by [`write_mpi_dir`].
pub fn read_mpi_dir(dir: &Path) -> Result<(Mpi, CameraPose)> {
    let manifest = dir.join("manifest");
    let kv = KeyValues::read(&manifest)?;
    let format = kv.require("format", &manifest)?;
    if format != MANIFEST_FORMAT {
        return Err(Error::format("manifest", &manifest, format!("unknown format {format:?}")));
    }
    let l: usize = kv.parse_value("planes", &manifest)?;
    let h: usize = kv.parse_value("resolution", &manifest)?;
    let near: f64 = kv.parse_value("near", &manifest)?;
    let far: f64 = kv.parse_value("far", &manifest)?;
    let depths: Vec<f64> = kv.parse_list("depths", &manifest)?;
    let far_opaque: bool = kv.parse_value("far_opaque", &manifest)?;
    let shared: bool = kv.parse_value("shared_texture", &manifest)?;
    let encoding = match kv.require("encoding", &manifest)? {
        "png8" => PlaneEncoding::Png8,
        "raw32" => PlaneEncoding::Raw32,
        other => return Err(Error::format("manifest", &manifest, format!("unknown encoding {other:?}"))),
    };
    if l == 0 || h == 0 || depths.len() != l {
        return Err(Error::format("manifest", &manifest, "planes, resolution and depths disagree"));
    }
    let rot: Vec<f64> = kv.parse_list("capture_rotation", &manifest)?;
    let trans: Vec<f64> = kv.parse_list("capture_translation", &manifest)?;
    let intr: Vec<f64> = kv.parse_list("capture_intrinsics", &manifest)?;
    if rot.len() != 9 || trans.len() != 3 || intr.len() != 4 {
        return Err(Error::format("manifest", &manifest, "capture pose needs 9 + 3 + 4 values"));
    }
    let capture = CameraPose::new(
        Matrix3::from_row_slice(&rot),
        Vector3::from_column_slice(&trans),
        Intrinsics {
            fx: intr[0],
            fy: intr[1],
            cx: intr[2],
            cy: intr[3],
        },
    )
    .map_err(|e| Error::format("manifest", &manifest, e.to_string()))?;

    let n = h * h;
    let mut rgb = Vec::with_capacity(if shared { n * 3 } else { l * n * 3 });
    let mut alpha = Vec::with_capacity(l * n);
    for plane in 0..l {
        let px = read_plane(&plane_path(dir, plane, encoding), encoding, h)?;
        if !shared || plane == 0 {
            rgb.extend(px.iter().flat_map(|p| [p[0], p[1], p[2]]));
        }
        alpha.extend(px.iter().map(|p| p[3]));
    }
    let colors = if shared {
        PlaneColors::Shared(Tensor::from_vec(&[h, h, 3], rgb)?)
    } else {
        PlaneColors::PerPlane(Tensor::from_vec(&[l, h, h, 3], rgb)?)
    };
    let mpi = Mpi::with_range(colors, Tensor::from_vec(&[l, h, h], alpha)?, depths, near, far)
        .map_err(|e| Error::format("MPI directory", dir, e.to_string()))?;
    let mpi = if far_opaque { mpi.with_far_plane_opaque() } else { mpi };
    Ok((mpi, capture))
}
