use super::SceneError;
use crate::render::DepthMap;
use std::path::Path;

/// Reads a 16-bit grayscale depth PNG; `depth_mm = value * scale`, with 0
/// marking invalid pixels.
pub fn load_depth_png(path: &Path, scale: f64) -> Result<DepthMap, SceneError> {
    let img = image::open(path).map_err(|e| SceneError::parse(path, e))?;
    let img = img.into_luma16();
    let (width, height) = img.dimensions();
    let data = img
        .pixels()
        .map(|p|p.0[0] as f64 * scale)
        .map(|d| d as f32)
        .collect();
    Ok(DepthMap::from_raw(width, height, data))
}

/// Writes a depth map as a 16-bit grayscale PNG with `value = depth / scale`
/// rounded to nearest (saturating at the u16 range).
pub fn save_depth_png(depth: &DepthMap, scale: f64, path: &Path) -> Result<(), SceneError> {
    let mut img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(
        depth.width(),
        depth.height(),
    );
    for (x, y, pixel) in img.enumerate_pixels_mut() {
        let d = depth.get(x, y) as f64;
        let value = if d <= 0.0 {
            0
        } else {
            (d / scale).round().clamp(0.0, u16::MAX as f64) as u16
        };
        *pixel = image::Luma([value]);
    }
    img.save(path).map_err(|e| SceneError::parse(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_round_trip_at_tenth_millimeter() {
        let dir = std::env::temp_dir().join("mvpose_depth_io");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("d.png");
        let mut depth = DepthMap::new(8, 6);
        depth.set(3, 2, 512.34);
        depth.set(0, 0, 1000.0);
        save_depth_png(&depth, 0.1, &path).unwrap();
        let loaded = load_depth_png(&path, 0.1).unwrap();
        assert!((loaded.get(3, 2) - 512.34).abs() < 0.05 + 1e-6);
        assert!((loaded.get(0, 0) - 1000.0).abs() < 0.05 + 1e-6);
        assert_eq!(loaded.get(1, 1), 0.0);
    }
}
