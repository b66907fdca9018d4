use std::io::Write;
use std::path::Path;

use crate::error::Result;

use super::types::{Scene, SceneObject, Shape};

pub const BACKGROUND: [u8; 3] = [255, 255, 255];

/// 8-bit RGB raster, row-major from the top-left.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Image {
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let pixels = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self { width, height, pixels }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn count(&self, rgb: [u8; 3]) -> usize {
        self.pixels.chunks_exact(3).filter(|p| *p == rgb).count()
    }

    /// Binary PPM (P6).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_ppm())?;
        Ok(())
    }
}

fn inside(o: &SceneObject, x: f64, y: f64) -> bool {
    let dx = x - o.center[0];
    let dy = y - o.center[1];
    let h = o.size / 2.0;
    match o.shape {
        Shape::Circle => dx * dx + dy * dy <= h * h,
        Shape::Square => dx.abs() <= h && dy.abs() <= h,
        // apex up, base at the bottom edge of the bounding box
        Shape::Triangle => dy.abs() <= h && dx.abs() <= (dy + h) / 2.0,
        Shape::Diamond => dx.abs() + dy.abs() <= h,
        Shape::Cross => {
            let arm = o.size / 6.0;
            (dx.abs() <= h && dy.abs() <= arm) || (dy.abs() <= h && dx.abs() <= arm)
        }
    }
}

/// Square rasterization at `resolution` pixels per side. Each pixel takes the
/// color of the last object containing its center; there is no anti-aliasing.
pub fn render(scene: &Scene, resolution: usize) -> Image {
    let mut img = Image::filled(resolution, resolution, BACKGROUND);
    let res = resolution as f64;
    for o in &scene.objects {
        let rgb = o.color.rgb();
        let h = o.size / 2.0;
        // only visit the bounding box
        let lo = |c: f64| (((c - h) * res).floor().max(0.0)) as usize;
        let hi = |c: f64| ((((c + h) * res).ceil()) as usize).min(resolution);
        for py in lo(o.center[1])..hi(o.center[1]) {
            let y = (py as f64 + 0.5) / res;
            for px in lo(o.center[0])..hi(o.center[0]) {
                let x = (px as f64 + 0.5) / res;
                if inside(o, x, y) {
                    let i = (py * resolution + px) * 3;
                    img.pixels[i..i + 3].copy_from_slice(&rgb);
                }
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene2ds::types::Color;

    fn single(shape: Shape, size: f64) -> Scene {
        Scene {
            id: 0,
            objects: vec![SceneObject {
                shape,
                color: Color::Red,
                center: [0.5, 0.5],
                size,
            }],
        }
    }

    #[test]
    fn empty_canvas_is_background() {
        let img = render(&Scene { id: 0, objects: vec![] }, 32);
        assert_eq!(img.count(BACKGROUND), 32 * 32);
    }

    #[test]
    fn centered_square_pixel_count() {
        for (size, res) in [(0.25, 64usize), (0.5, 32), (0.1, 100), (0.08, 250)] {
            let img = render(&single(Shape::Square, size), res);
            let want = (size * size * (res * res) as f64).round() as usize;
            assert_eq!(img.count(Color::Red.rgb()), want, "size {size} res {res}");
        }
    }

    #[test]
    fn shapes_are_distinguishable() {
        let counts: Vec<usize> = Shape::ALL
            .iter()
            .map(|&s| render(&single(s, 0.5), 64).count(Color::Red.rgb()))
            .collect();
        let mut sorted = counts.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), counts.len(), "{counts:?}");
        // areas relative to the bounding box
        let box_area = 32.0 * 32.0;
        let circle = counts[0] as f64 / box_area;
        assert!((circle - std::f64::consts::PI / 4.0).abs() < 0.03);
        let diamond = counts[3] as f64 / box_area;
        assert!((diamond - 0.5).abs() < 0.05);
    }

    #[test]
    fn ppm_header_and_determinism() {
        let s = single(Shape::Triangle, 0.3);
        let a = render(&s, 40).to_ppm();
        assert!(a.starts_with(b"P6\n40 40\n255\n"));
        assert_eq!(a.len(), "P6\n40 40\n255\n".len() + 40 * 40 * 3);
        assert_eq!(a, render(&s, 40).to_ppm());
    }

    #[test]
    fn triangle_apex_points_up() {
        let img = render(&single(Shape::Triangle, 0.5), 64);
        let width_at = |py: usize| (0..64).filter(|&px| img.pixel(px, py) != BACKGROUND).count();
        assert!(width_at(18) < width_at(44));
    }
}
