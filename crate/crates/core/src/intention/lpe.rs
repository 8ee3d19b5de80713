//! LPE rendering: a 224x224 heading-aligned crop of the local map with the
//! recently traversed path in red and the planned path ahead in blue; the
//! robot sits at the center pixel where the two paths meet.

use image::{Rgb, RgbImage};

use crate::mapsys::FloorplanGrid;

pub const LPE_SIDE: u32 = 224;
/// Default window side, metres.
pub const DEFAULT_LPE_WINDOW_M: f64 = 10.0;

pub struct LPEImage {
    pub raster: RgbImage,
    pub window_m: f64,
}

impl LPEImage {
    pub fn save_png(&self, path: &std::path::Path) -> Result<(), image::ImageError> {
        self.raster.save(path)
    }
}

/// World position and heading (radians, x-axis zero, counter-clockwise).
#[derive(Debug, Clone, Copy)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

/// World point -> pixel. The crop is heading-aligned: forward is up.
fn world_to_pixel(pose: &Pose2D, window_m: f64, p: (f64, f64)) -> Option<(u32, u32)> {
    let (dx, dy) = (p.0 - pose.x, p.1 - pose.y);
    let (sin, cos) = pose.heading.sin_cos();
    // Robot frame: u right, v forward.
    let v = dx * cos + dy * sin;
    let u = dx * sin - dy * cos;
    let scale = LPE_SIDE as f64 / window_m;
    let col = (LPE_SIDE as f64 / 2.0 + u * scale).floor();
    let row = (LPE_SIDE as f64 / 2.0 - v * scale).floor();
    if col < 0.0 || row < 0.0 || col >= LPE_SIDE as f64 || row >= LPE_SIDE as f64 {
        None
    } else {
        Some((col as u32, row as u32))
    }
}

fn draw_polyline(
    img: &mut RgbImage,
    pose: &Pose2D,
    window_m: f64,
    polyline: &[(f64, f64)],
    channel: usize,
) {
    // Dense sampling along each segment; cheaper than clipping Bresenham
    // against the window.
    let step = window_m / LPE_SIDE as f64 / 2.0;
    let mut stamp = |p: (f64, f64)| {
        if let Some((c, r)) = world_to_pixel(pose, window_m, p) {
            img.get_pixel_mut(c, r)[channel] = 255;
        }
    };
    match polyline {
        [] => {}
        [p] => stamp(*p),
        _ => {
            for seg in polyline.windows(2) {
                let len = ((seg[1].0 - seg[0].0).powi(2) + (seg[1].1 - seg[0].1).powi(2)).sqrt();
                let n = (len / step).ceil().max(1.0) as usize;
                for i in 0..=n {
                    let t = i as f64 / n as f64;
                    stamp((
                        seg[0].0 + t * (seg[1].0 - seg[0].0),
                        seg[0].1 + t * (seg[1].1 - seg[0].1),
                    ));
                }
            }
        }
    }
}

/// Render the LPE intention image. Off-map regions render occupied.
pub fn render_lpe(
    grid: &FloorplanGrid,
    history: &[(f64, f64)],
    future: &[(f64, f64)],
    pose: &Pose2D,
    window_m: f64,
) -> LPEImage {
    let mut raster = RgbImage::new(LPE_SIDE, LPE_SIDE);
    let scale = window_m / LPE_SIDE as f64;
    let (sin, cos) = pose.heading.sin_cos();
    for row in 0..LPE_SIDE {
        for col in 0..LPE_SIDE {
            // Pixel center in robot frame.
            let u = (col as f64 + 0.5 - LPE_SIDE as f64 / 2.0) * scale;
            let v = (LPE_SIDE as f64 / 2.0 - row as f64 - 0.5) * scale;
            let wx = pose.x + v * cos + u * sin;
            let wy = pose.y + v * sin - u * cos;
            let (cx, cy) = grid.world_to_cell(wx, wy);
            let occupied = !grid.is_free(cx, cy);
            if occupied {
                raster.put_pixel(col, row, Rgb([0, 255, 0]));
            }
        }
    }
    draw_polyline(&mut raster, pose, window_m, history, 0);
    draw_polyline(&mut raster, pose, window_m, future, 2);
    // The paths meet at the robot's position: the center pixel.
    let c = LPE_SIDE / 2;
    if !history.is_empty() {
        raster.get_pixel_mut(c, c)[0] = 255;
    }
    if !future.is_empty() {
        raster.get_pixel_mut(c, c)[2] = 255;
    }
    LPEImage { raster, window_m }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open_grid() -> FloorplanGrid {
        FloorplanGrid::filled("g", 200, 200, 0.3, true)
    }

    #[test]
    fn straight_paths_form_vertical_line() {
        let grid = open_grid();
        let pose = Pose2D {
            x: 30.0,
            y: 30.0,
            heading: std::f64::consts::FRAC_PI_2,
        };
        // History behind (below in image), future ahead (above).
        let history: Vec<(f64, f64)> = (0..10).map(|i| (30.0, 30.0 - i as f64 * 0.4)).collect();
        let future: Vec<(f64, f64)> = (0..10).map(|i| (30.0, 30.0 + i as f64 * 0.4)).collect();
        let lpe = render_lpe(&grid, &history, &future, &pose, 10.0);
        let c = LPE_SIDE / 2;
        // Red below center, blue above center, meeting at the center pixel.
        assert_eq!(lpe.raster.get_pixel(c, c + 40)[0], 255);
        assert_eq!(lpe.raster.get_pixel(c, c - 40)[2], 255);
        assert_eq!(lpe.raster.get_pixel(c, c)[0], 255);
        assert_eq!(lpe.raster.get_pixel(c, c)[2], 255);
    }

    #[test]
    fn zero_length_history_only_center() {
        let grid = open_grid();
        let pose = Pose2D {
            x: 30.0,
            y: 30.0,
            heading: 0.0,
        };
        let lpe = render_lpe(&grid, &[], &[(30.0, 30.0), (35.0, 30.0)], &pose, 10.0);
        let red_pixels: usize = lpe
            .raster
            .pixels()
            .filter(|p| p[0] == 255 && p[1] != 255)
            .count();
        assert_eq!(red_pixels, 0);
    }

    #[test]
    fn rotation_equivariance() {
        // Rotating the pose by 90 degrees matches rotating the rendering,
        // up to nearest-pixel resampling.
        let mut grid = open_grid();
        for y in 110..130 {
            for x in 90..140 {
                grid.set(x, y, false);
            }
        }
        let base = Pose2D {
            x: 30.0,
            y: 30.0,
            heading: 0.0,
        };
        let rotated = Pose2D {
            x: 30.0,
            y: 30.0,
            heading: std::f64::consts::FRAC_PI_2,
        };
        let a = render_lpe(&grid, &[], &[], &base, 10.0);
        let b = render_lpe(&grid, &[], &[], &rotated, 10.0);
        // b should equal a rotated by 90 degrees counter-clockwise about
        // the center (headings differ by +90).
        let n = LPE_SIDE as i64;
        let mut agree = 0usize;
        let mut total = 0usize;
        for row in 0..n {
            for col in 0..n {
                // Rotating the world +90 about the robot maps pixel
                // (row, col) of `a` to (col, n-1-row) of `b`.
                let (r2, c2) = (col, n - 1 - row);
                total += 1;
                let pa = a.raster.get_pixel(col as u32, row as u32)[1];
                let pb = b.raster.get_pixel(c2 as u32, r2 as u32)[1];
                if pa == pb {
                    agree += 1;
                }
            }
        }
        assert!(
            agree as f64 / total as f64 >= 0.99,
            "agreement {}",
            agree as f64 / total as f64
        );
    }
}
