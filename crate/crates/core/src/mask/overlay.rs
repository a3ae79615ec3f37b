use crate::raster::WordImage;

use super::{MaskError, MaskResult, SegMask};

/// Tint colours, cycled by component label.
pub const COMPONENT_COLORS: [[u8; 3]; 10] = [
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 190],
    [0, 128, 128],
];

pub fn component_color(label: u32) -> [u8; 3] {
    debug_assert!(label > 0);
    COMPONENT_COLORS[(label as usize - 1) % COMPONENT_COLORS.len()]
}

fn blend(p: [u8; 3], c: [u8; 3]) -> [u8; 3] {
    [0, 1, 2].map(|i| (p[i] as u16 + c[i] as u16).div_ceil(2) as u8)
}

/// 50% blend of each labelled pixel with its component colour.
pub fn overlay(img: &WordImage, mask: &SegMask) -> MaskResult<WordImage> {
    if img.width() != mask.width() || img.height() != mask.height() {
        return Err(MaskError::DimensionMismatch {
            expected: (img.width(), img.height()),
            actual: (mask.width(), mask.height()),
        });
    }
    let pixels = img
        .pixels()
        .iter()
        .zip(mask.labels())
        .map(|(&p, &l)| if l == 0 { p } else { blend(p, component_color(l)) })
        .collect();
    Ok(img.with_pixels(pixels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::label_components;
    use crate::raster::BinaryMask;

    fn gray_image(w: usize, h: usize) -> WordImage {
        let px = (0..w * h).map(|i| [(i * 7 % 200) as u8, 100, (i * 3 % 90) as u8]).collect();
        WordImage::new("o", w, h, px).unwrap()
    }

    #[test]
    fn empty_mask_is_identity() {
        let img = gray_image(6, 4);
        let seg = label_components(&BinaryMask::empty(6, 4));
        assert_eq!(overlay(&img, &seg).unwrap(), img);
    }

    #[test]
    fn full_mask_blends_every_pixel_with_first_color() {
        let img = gray_image(5, 3);
        let seg = label_components(&BinaryMask::full(5, 3));
        let out = overlay(&img, &seg).unwrap();
        for (o, p) in out.pixels().iter().zip(img.pixels()) {
            assert_eq!(*o, blend(*p, COMPONENT_COLORS[0]));
        }
    }

    #[test]
    fn checkerboard_changes_foreground_half() {
        let img = gray_image(8, 6);
        let seg = label_components(&BinaryMask::from_fn(8, 6, |x, y| (x + y) % 2 == 0));
        let out = overlay(&img, &seg).unwrap();
        let changed = out.pixels().iter().zip(img.pixels()).filter(|(a, b)| a != b).count();
        assert_eq!(changed, 24);
        for i in 0..48 {
            assert_eq!(out.pixels()[i] != img.pixels()[i], seg.labels()[i] != 0);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let img = gray_image(5, 3);
        let seg = label_components(&BinaryMask::empty(3, 5));
        assert!(matches!(overlay(&img, &seg), Err(MaskError::DimensionMismatch { .. })));
    }
}
