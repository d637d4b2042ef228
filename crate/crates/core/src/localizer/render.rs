use std::io::Cursor;

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ImageEncoder, Rgb, RgbImage};

use super::{BBox, ChangeRegion, LocalizerError};
use crate::ingest::Frame;

pub const RED: Rgb<u8> = Rgb([255, 0, 0]);
pub const YELLOW: Rgb<u8> = Rgb([255, 255, 0]);
const SEPARATOR_PX: u32 = 3;

/// PNG bytes with pinned encoder settings (default compression, adaptive
/// filtering, no interlacing) so renderings are byte-stable.
pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    PngEncoder::new_with_quality(&mut buf, CompressionType::Default, FilterType::Adaptive)
        .write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::Rgb8)
        .expect("in-memory PNG encoding");
    buf.into_inner()
}

/// Draws a rectangle outline of the given thickness inside `bbox`, clipped
/// to the image.
pub fn draw_rect(img: &mut RgbImage, bbox: BBox, color: Rgb<u8>, thickness: u32) {
    let maxr = bbox.maxr.min(img.height());
    let maxc = bbox.maxc.min(img.width());
    if bbox.minr >= maxr || bbox.minc >= maxc {
        return;
    }
    for r in bbox.minr..maxr {
        for c in bbox.minc..maxc {
            let edge = r < bbox.minr + thickness
                || r + thickness >= maxr
                || c < bbox.minc + thickness
                || c + thickness >= maxc;
            if edge {
                img.put_pixel(c, r, color);
            }
        }
    }
}

fn check_bounds(frame: &Frame, bbox: BBox) -> Result<(), LocalizerError> {
    if bbox.fits(frame.height(), frame.width()) {
        Ok(())
    } else {
        Err(LocalizerError::RegionOutOfBounds {
            bbox,
            width: frame.width(),
            height: frame.height(),
        })
    }
}

fn crop(frame: &Frame, bbox: BBox) -> RgbImage {
    image::imageops::crop_imm(&*frame.image, bbox.minc, bbox.minr, bbox.width(), bbox.height()).to_image()
}

/// `[old crop | 3 px black | new crop]`, with a 1 px red outline around
/// every component box in both halves.
pub fn render_region_comparison(prev: &Frame, curr: &Frame, region: &ChangeRegion) -> Result<RgbImage, LocalizerError> {
    check_bounds(prev, region.bbox)?;
    check_bounds(curr, region.bbox)?;
    let (h, w) = (region.bbox.height(), region.bbox.width());
    let mut out = RgbImage::new(2 * w + SEPARATOR_PX, h);
    let halves = [(crop(prev, region.bbox), 0), (crop(curr, region.bbox), w + SEPARATOR_PX)];
    for (mut half, offset) in halves {
        for comp in &region.component_bboxes {
            let local = BBox::new(
                comp.minr.saturating_sub(region.bbox.minr),
                comp.minc.saturating_sub(region.bbox.minc),
                comp.maxr.saturating_sub(region.bbox.minr),
                comp.maxc.saturating_sub(region.bbox.minc),
            );
            draw_rect(&mut half, local, RED, 1);
        }
        image::imageops::replace(&mut out, &half, offset as i64, 0);
    }
    Ok(out)
}

/// Copy of `curr` with a 2 px yellow outline at the region box.
pub fn annotate_screenshot(curr: &Frame, region: &ChangeRegion) -> Result<RgbImage, LocalizerError> {
    check_bounds(curr, region.bbox)?;
    let mut out = (*curr.image).clone();
    draw_rect(&mut out, region.bbox, YELLOW, 2);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: u32, h: u32) -> Frame {
        Frame::from_image(0, 0.0, RgbImage::from_pixel(w, h, Rgb([128, 128, 128])))
    }

    fn region(bbox: BBox, comps: Vec<BBox>) -> ChangeRegion {
        ChangeRegion {
            frame: 1,
            index: 0,
            bbox,
            component_bboxes: comps,
        }
    }

    #[test]
    fn comparison_dimensions() {
        let f = gray(100, 80);
        let r = region(BBox::new(10, 20, 40, 70), vec![]);
        let img = render_region_comparison(&f, &f, &r).unwrap();
        assert_eq!((img.height(), img.width()), (30, 2 * 50 + 3));
        for row in 0..30 {
            for col in 50..53 {
                assert_eq!(*img.get_pixel(col, row), Rgb([0, 0, 0]));
            }
        }
    }

    #[test]
    fn degenerate_region_still_renders() {
        let f = gray(10, 10);
        let img = render_region_comparison(&f, &f, &region(BBox::new(4, 4, 5, 5), vec![])).unwrap();
        assert_eq!((img.height(), img.width()), (1, 5));
    }

    #[test]
    fn two_components_draw_two_rectangles_per_half() {
        let f = gray(200, 200);
        let comps = vec![BBox::new(10, 10, 20, 20), BBox::new(30, 40, 45, 60)];
        let r = region(BBox::new(0, 0, 100, 100), comps.clone());
        let img = render_region_comparison(&f, &f, &r).unwrap();
        for offset in [0u32, 103] {
            let mut outlines = 0;
            for b in &comps {
                let corners = [(b.minr, b.minc), (b.minr, b.maxc - 1), (b.maxr - 1, b.minc), (b.maxr - 1, b.maxc - 1)];
                if corners.iter().all(|&(r, c)| *img.get_pixel(c + offset, r) == RED) {
                    outlines += 1;
                }
                // interior untouched
                assert_ne!(*img.get_pixel(b.minc + 2 + offset, b.minr + 2), RED);
            }
            assert_eq!(outlines, 2);
        }
        let red_px = img.pixels().filter(|p| **p == RED).count();
        // perimeters: 2*(10+10)-4 = 36 and 2*(15+20)-4 = 66, twice each
        assert_eq!(red_px, 2 * (36 + 66));
    }

    #[test]
    fn annotation_keeps_size_and_clips_at_edges() {
        let f = gray(50, 40);
        let r = region(BBox::new(0, 0, 40, 50), vec![]);
        let img = annotate_screenshot(&f, &r).unwrap();
        assert_eq!(img.dimensions(), (50, 40));
        assert_eq!(*img.get_pixel(0, 0), YELLOW);
        assert_eq!(*img.get_pixel(49, 39), YELLOW);
        assert_eq!(*img.get_pixel(48, 38), YELLOW);
        assert_eq!(*img.get_pixel(47, 37), Rgb([128, 128, 128]));
    }

    #[test]
    fn out_of_bounds_region_is_an_error() {
        let f = gray(50, 40);
        let r = region(BBox::new(0, 0, 41, 50), vec![]);
        assert!(matches!(annotate_screenshot(&f, &r), Err(LocalizerError::RegionOutOfBounds { .. })));
        assert!(render_region_comparison(&f, &f, &r).is_err());
    }

    #[test]
    fn png_encoding_is_stable() {
        let mut img = RgbImage::from_fn(64, 32, |x, y| Rgb([x as u8 * 4, y as u8 * 8, 90]));
        draw_rect(&mut img, BBox::new(4, 4, 20, 30), YELLOW, 2);
        let a = encode_png(&img);
        assert_eq!(a, encode_png(&img));
        let back = image::load_from_memory(&a).unwrap().to_rgb8();
        assert_eq!(back, img);
    }
}
