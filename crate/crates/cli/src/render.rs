//! Image loading, colormaps and PNG output.

use std::path::Path;

use dclose::{DiffMap, ImageBuffer, SaliencyMap};

use crate::error::{CliError, CliResult};

pub const OVERLAY_ALPHA: f32 = 0.5;

/// Sequential, perceptually uniform (viridis stops).
const SEQUENTIAL: [[f32; 3]; 9] = [
    [68.0, 1.0, 84.0],
    [71.0, 44.0, 122.0],
    [59.0, 81.0, 139.0],
    [44.0, 113.0, 142.0],
    [33.0, 144.0, 141.0],
    [39.0, 173.0, 129.0],
    [92.0, 200.0, 99.0],
    [170.0, 220.0, 50.0],
    [253.0, 231.0, 37.0],
];

/// Divergent blue-white-red; the middle stop is zero.
const DIVERGENT: [[f32; 3]; 3] = [[33.0, 102.0, 172.0], [247.0, 247.0, 247.0], [178.0, 24.0, 43.0]];

fn ramp(stops: &[[f32; 3]], t: f64) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) as f32 } else { 0.0 };
    let pos = t * (stops.len() - 1) as f32;
    let i = (pos.floor() as usize).min(stops.len() - 2);
    let f = pos - i as f32;
    let (a, b) = (stops[i], stops[i + 1]);
    [0, 1, 2].map(|c| (a[c] + (b[c] - a[c]) * f).round().clamp(0.0, 255.0) as u8)
}

/// Colors a map in `[0, 1]`.
pub fn heatmap_rgb(m: &SaliencyMap) -> Vec<u8> {
    m.values().iter().flat_map(|&v| ramp(&SEQUENTIAL, v)).collect()
}

/// Colors a signed map symmetrically around zero.
pub fn diff_rgb(d: &DiffMap) -> Vec<u8> {
    let scale = d.max_abs();
    d.values
        .iter()
        .flat_map(|&v| {
            let t = if scale > 0.0 { 0.5 + 0.5 * v / scale } else { 0.5 };
            ramp(&DIVERGENT, t)
        })
        .collect()
}

pub fn blend(img: &ImageBuffer, colors: &[u8], alpha: f32) -> Vec<u8> {
    img.to_rgb8()
        .iter()
        .zip(colors)
        .map(|(&p, &c)| ((1.0 - alpha) * p as f32 + alpha * c as f32).round() as u8)
        .collect()
}

pub fn load_image(path: &Path) -> CliResult<ImageBuffer> {
    let img = image::open(path)
        .map_err(|e| CliError::input(format!("cannot read image {}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    ImageBuffer::from_rgb8(w as usize, h as usize, img.as_raw())
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn save_png(path: &Path, width: usize, height: usize, rgb: Vec<u8>) -> CliResult<()> {
    let buf = image::RgbImage::from_raw(width as u32, height as u32, rgb)
        .ok_or_else(|| CliError::output(path, "pixel buffer does not match dimensions"))?;
    buf.save_with_format(path, image::ImageFormat::Png).map_err(|e| CliError::output(path, e))
}

pub fn save_image(path: &Path, img: &ImageBuffer) -> CliResult<()> {
    save_png(path, img.width(), img.height(), img.to_rgb8())
}

/// Writes `<stem>_heatmap.png` and `<stem>_overlay.png` into `dir`.
pub fn write_heatmaps(dir: &Path, stem: &str, img: &ImageBuffer, m: &SaliencyMap) -> CliResult<Vec<String>> {
    check_dims(img, m.dims())?;
    let colors = heatmap_rgb(m);
    let heat = format!("{stem}_heatmap.png");
    let over = format!("{stem}_overlay.png");
    save_png(&dir.join(&heat), m.width(), m.height(), colors.clone())?;
    save_png(&dir.join(&over), m.width(), m.height(), blend(img, &colors, OVERLAY_ALPHA))?;
    Ok(vec![heat, over])
}

pub fn write_diff_overlay(dir: &Path, stem: &str, img: &ImageBuffer, d: &DiffMap) -> CliResult<Vec<String>> {
    check_dims(img, (d.width, d.height))?;
    let colors = diff_rgb(d);
    let heat = format!("{stem}_heatmap.png");
    let over = format!("{stem}_overlay.png");
    save_png(&dir.join(&heat), d.width, d.height, colors.clone())?;
    save_png(&dir.join(&over), d.width, d.height, blend(img, &colors, OVERLAY_ALPHA))?;
    Ok(vec![heat, over])
}

fn check_dims(img: &ImageBuffer, dims: (usize, usize)) -> CliResult<()> {
    if img.dims() != dims {
        return Err(CliError::input(format!("map is {:?} but image is {:?}", dims, img.dims())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_endpoints() {
        assert_eq!(ramp(&SEQUENTIAL, 0.0), [68, 1, 84]);
        assert_eq!(ramp(&SEQUENTIAL, 1.0), [253, 231, 37]);
        assert_eq!(ramp(&SEQUENTIAL, f64::NAN), [68, 1, 84]);
        assert_eq!(ramp(&DIVERGENT, 0.5), [247, 247, 247]);
    }

    #[test]
    fn diff_colors_are_symmetric() {
        let d = DiffMap { width: 3, height: 1, values: vec![-2.0, 0.0, 2.0] };
        let c = diff_rgb(&d);
        assert_eq!(&c[0..3], &[33, 102, 172]);
        assert_eq!(&c[3..6], &[247, 247, 247]);
        assert_eq!(&c[6..9], &[178, 24, 43]);
        let flat = DiffMap { width: 1, height: 1, values: vec![0.0] };
        assert_eq!(diff_rgb(&flat), vec![247, 247, 247]);
    }

    #[test]
    fn half_alpha_blend() {
        let img = ImageBuffer::filled(1, 1, [0.0, 1.0, 0.0]).unwrap();
        assert_eq!(blend(&img, &[200, 100, 50], 0.5), vec![100, 178, 25]);
    }
}
