//! Persisted mask format: an 8-bit indexed PNG whose sample value is the
//! component label, plus a `<basename>.mask.json` sidecar.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bank::{MethodDescriptor, Polarity};
use crate::fsutil::write_atomic;

use super::overlay::component_color;
use super::{EditOp, MaskError, MaskResult, SegMask};

pub const SIDECAR_VERSION: u32 = 1;
pub const MAX_COMPONENTS: u32 = 255;

/// Annotation context stored next to a mask.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MaskMeta {
    pub polarity: Polarity,
    pub method: Option<MethodDescriptor>,
    pub edits: Vec<EditOp>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    version: u32,
    width: usize,
    height: usize,
    component_count: u32,
    polarity: Polarity,
    method: Option<MethodDescriptor>,
    edits: Vec<EditOp>,
}

/// `dir/name.png` -> `dir/name.mask.json`.
pub fn sidecar_path(mask_path: &Path) -> PathBuf {
    let stem = mask_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    mask_path.with_file_name(format!("{stem}.mask.json"))
}

/// Encode labels as an indexed PNG. Palette entry 0 is black, entry k the
/// overlay colour of component k.
pub fn encode_mask_png(mask: &SegMask) -> MaskResult<Vec<u8>> {
    if mask.component_count() > MAX_COMPONENTS {
        return Err(MaskError::TooManyComponents(mask.component_count()));
    }
    let mut palette = vec![0u8; 3];
    for k in 1..=mask.component_count().max(1) {
        palette.extend_from_slice(&component_color(k));
    }
    let data: Vec<u8> = mask.labels().iter().map(|&l| l as u8).collect();
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, mask.width() as u32, mask.height() as u32);
        encoder.set_color(png::ColorType::Indexed);
        encoder.set_depth(png::BitDepth::Eight);
        encoder.set_palette(palette);
        let mut writer = encoder.write_header().map_err(|e| MaskError::Encode(e.to_string()))?;
        writer
            .write_image_data(&data)
            .map_err(|e| MaskError::Encode(e.to_string()))?;
    }
    Ok(out)
}

/// Raw 8-bit samples of an indexed or grayscale PNG, without palette expansion.
fn decode_label_png(bytes: &[u8]) -> MaskResult<(usize, usize, Vec<u8>)> {
    let corrupt = |e: png::DecodingError| MaskError::Corrupt(format!("PNG decode: {e}"));
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(corrupt)?;
    let info = reader.info();
    let (w, h) = (info.width as usize, info.height as usize);
    match (info.color_type, info.bit_depth) {
        (png::ColorType::Indexed | png::ColorType::Grayscale, png::BitDepth::Eight) => {}
        (ct, bd) => {
            return Err(MaskError::Corrupt(format!(
                "expected 8-bit indexed PNG, found {ct:?} at {bd:?}"
            )))
        }
    }
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| MaskError::Corrupt("PNG too large".into()))?];
    let frame = reader.next_frame(&mut buf).map_err(corrupt)?;
    buf.truncate(frame.buffer_size());
    if buf.len() != w * h {
        return Err(MaskError::Corrupt(format!("{} samples for {w}x{h}", buf.len())));
    }
    Ok((w, h, buf))
}

pub fn save_mask(mask: &SegMask, meta: &MaskMeta, path: impl AsRef<Path>) -> MaskResult<()> {
    let path = path.as_ref();
    let png = encode_mask_png(mask)?;
    let sidecar = Sidecar {
        version: SIDECAR_VERSION,
        width: mask.width(),
        height: mask.height(),
        component_count: mask.component_count(),
        polarity: meta.polarity,
        method: meta.method.clone(),
        edits: meta.edits.clone(),
    };
    let json = serde_json::to_vec_pretty(&sidecar).expect("sidecar serializes");
    write_atomic(path, &png).map_err(|e| MaskError::io(path, e))?;
    let side = sidecar_path(path);
    write_atomic(&side, &json).map_err(|e| MaskError::io(&side, e))?;
    Ok(())
}

pub fn load_mask(path: impl AsRef<Path>) -> MaskResult<SegMask> {
    load_mask_with_meta(path).map(|(m, _)| m)
}

pub fn load_mask_with_meta(path: impl AsRef<Path>) -> MaskResult<(SegMask, MaskMeta)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| MaskError::io(path, e))?;
    let side = sidecar_path(path);
    let json = fs::read(&side).map_err(|e| MaskError::io(&side, e))?;
    let sidecar: Sidecar = serde_json::from_slice(&json)
        .map_err(|e| MaskError::Corrupt(format!("{}: {e}", side.display())))?;
    if sidecar.version != SIDECAR_VERSION {
        return Err(MaskError::Corrupt(format!(
            "unsupported sidecar version {}",
            sidecar.version
        )));
    }
    let (w, h, samples) = decode_label_png(&bytes)?;
    if (w, h) != (sidecar.width, sidecar.height) {
        return Err(MaskError::Corrupt(format!(
            "PNG is {w}x{h} but sidecar says {}x{}",
            sidecar.width, sidecar.height
        )));
    }
    let mask = SegMask::from_labels(w, h, samples.into_iter().map(u32::from).collect())?;
    if mask.component_count() != sidecar.component_count {
        return Err(MaskError::Corrupt(format!(
            "{} components in PNG but sidecar says {}",
            mask.component_count(),
            sidecar.component_count
        )));
    }
    super::check_sequence(&sidecar.edits).map_err(|e| MaskError::Corrupt(e.to_string()))?;
    Ok((
        mask,
        MaskMeta {
            polarity: sidecar.polarity,
            method: sidecar.method,
            edits: sidecar.edits,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{label_components, EditKind, Polygon};
    use crate::raster::{encode_gray_png, BinaryMask};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_with_meta() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let seg = label_components(&BinaryMask::from_fn(17, 9, |_, _| rng.random_bool(0.3)));
        let meta = MaskMeta {
            polarity: Polarity::Inverted,
            method: Some("otsu:L:t=88".parse().unwrap()),
            edits: vec![EditOp {
                kind: EditKind::Add,
                polygon: Polygon::rect(1.0, 1.0, 4.0, 3.0).unwrap(),
                sequence: 1,
            }],
        };
        let path = dir.path().join("w1.png");
        save_mask(&seg, &meta, &path).unwrap();
        assert!(dir.path().join("w1.mask.json").exists());
        let (back, back_meta) = load_mask_with_meta(&path).unwrap();
        assert_eq!(back, seg);
        assert_eq!(back_meta, meta);
    }

    #[test]
    fn label_gap_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gap.png");
        fs::write(&path, encode_gray_png(5, 1, &[1, 0, 3, 0, 0])).unwrap();
        let side = r#"{"version":1,"width":5,"height":1,"component_count":2,"polarity":"normal","method":null,"edits":[]}"#;
        fs::write(sidecar_path(&path), side).unwrap();
        assert!(matches!(load_mask(&path), Err(MaskError::Corrupt(_))));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dims.png");
        let seg = label_components(&BinaryMask::from_fn(4, 3, |x, _| x == 1));
        save_mask(&seg, &MaskMeta::default(), &path).unwrap();
        let side = r#"{"version":1,"width":3,"height":4,"component_count":1,"polarity":"normal","method":null,"edits":[]}"#;
        fs::write(sidecar_path(&path), side).unwrap();
        assert!(matches!(load_mask(&path), Err(MaskError::Corrupt(_))));
    }

    #[test]
    fn too_many_components_rejected() {
        // 256 isolated pixels
        let seg = label_components(&BinaryMask::from_fn(64, 16, |x, y| x % 2 == 0 && y % 2 == 0));
        assert_eq!(seg.component_count(), 256);
        assert!(matches!(encode_mask_png(&seg), Err(MaskError::TooManyComponents(256))));
    }

    #[test]
    fn missing_sidecar_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lonely.png");
        fs::write(&path, encode_gray_png(1, 1, &[0])).unwrap();
        assert!(matches!(load_mask(&path), Err(MaskError::Io { .. })));
    }
}
