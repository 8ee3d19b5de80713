//! Egocentric observation rendering: a ray-cast range raster standing in
//! for the robot's forward camera.
//!
//! Columns sweep the field of view left to right; rows are range bins with
//! the nearest range at the bottom row. Each ray marches outward until it
//! hits an obstacle; the hit bin receives a class intensity (wall 1.0,
//! prop 0.85, dynamic agent 0.6), visible free bins receive a range-falloff
//! shade, and everything behind the first hit stays 0 (occluded).

use super::{RobotState, World};
use crate::decision::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct CameraConfig {
    /// Square raster side; must match the controller's input side.
    pub side: usize,
    pub fov_rad: f64,
    pub max_range_m: f64,
    /// Low props closer than this are invisible (camera blind cone).
    pub blind_range_m: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            side: 56,
            fov_rad: 70f64.to_radians(),
            max_range_m: 8.0,
            blind_range_m: 0.6,
        }
    }
}

pub const WALL_INTENSITY: f64 = 1.0;
pub const PROP_INTENSITY: f64 = 0.85;
pub const AGENT_INTENSITY: f64 = 0.6;

enum Hit {
    Wall,
    Prop,
    Agent,
}

fn sample(world: &World, px: f64, py: f64, range: f64, cfg: &CameraConfig) -> Option<Hit> {
    let (cx, cy) = world.grid.world_to_cell(px, py);
    if !world.grid.is_free(cx, cy) {
        return Some(Hit::Wall);
    }
    for a in &world.adversaries {
        if ((a.x - px).powi(2) + (a.y - py).powi(2)).sqrt() <= a.radius() {
            return Some(Hit::Agent);
        }
    }
    for p in &world.props {
        if p.low && range < cfg.blind_range_m {
            continue;
        }
        if ((p.x - px).powi(2) + (p.y - py).powi(2)).sqrt() <= p.radius {
            return Some(Hit::Prop);
        }
    }
    None
}

/// Renders the (1, side, side) observation tensor for the robot's current
/// pose. Deterministic: a pure function of the world state.
pub fn render_observation(world: &World, robot: &RobotState, cfg: &CameraConfig) -> Tensor {
    let side = cfg.side;
    let mut data = vec![0.0; side * side];
    let march = cfg.max_range_m / (side as f64 * 2.0);
    let steps = side * 2;
    for col in 0..side {
        let ang = robot.heading + cfg.fov_rad * (0.5 - (col as f64 + 0.5) / side as f64);
        let (dx, dy) = (ang.cos(), ang.sin());
        for k in 0..steps {
            let r = (k as f64 + 0.5) * march;
            let px = robot.x + r * dx;
            let py = robot.y + r * dy;
            let bin = ((r / cfg.max_range_m) * side as f64) as usize;
            let row = side - 1 - bin.min(side - 1);
            let idx = row * side + col;
            match sample(world, px, py, r, cfg) {
                Some(hit) => {
                    data[idx] = match hit {
                        Hit::Wall => WALL_INTENSITY,
                        Hit::Prop => PROP_INTENSITY,
                        Hit::Agent => AGENT_INTENSITY,
                    };
                    break;
                }
                None => {
                    let shade = 0.4 * (1.0 - 0.5 * r / cfg.max_range_m);
                    if data[idx] < shade {
                        data[idx] = shade;
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[1, side, side], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapsys::FloorplanGrid;
    use crate::sim::Prop;

    fn camera(side: usize) -> CameraConfig {
        CameraConfig {
            side,
            ..CameraConfig::default()
        }
    }

    fn robot() -> RobotState {
        RobotState {
            x: 10.0,
            y: 10.0,
            heading: 0.0,
        }
    }

    #[test]
    fn open_space_is_uniform_free_with_falloff() {
        let world = World::new(FloorplanGrid::filled("w", 400, 400, 0.1, true));
        let cfg = camera(16);
        let obs = render_observation(&world, &robot(), &cfg);
        for row in 0..16 {
            let base = obs.data[row * 16];
            assert!(base > 0.0);
            // Uniform across columns at a given range.
            for col in 1..16 {
                assert!((obs.data[row * 16 + col] - base).abs() < 1e-12);
            }
        }
        // Falloff: nearer rows (larger row index) are brighter.
        assert!(obs.data[15 * 16] > obs.data[0]);
    }

    #[test]
    fn wall_ahead_fills_the_matching_range_row() {
        let mut world = World::new(FloorplanGrid::filled("w", 400, 400, 0.1, true));
        // Wall plane at x = 11.0: one metre ahead of the robot.
        for y in 0..400 {
            for x in 110..113 {
                world.grid.set(x, y, false);
            }
        }
        let cfg = camera(32);
        let obs = render_observation(&world, &robot(), &cfg);
        // Centre column: the ray hits at range 1.0 m → bin = side/8.
        let bin = ((1.0 / cfg.max_range_m) * 32.0) as usize;
        let row = 31 - bin;
        let center = 16;
        assert_eq!(obs.data[row * 32 + center], WALL_INTENSITY);
        // Occlusion: everything beyond the wall on that column is unseen.
        for r in 0..row {
            assert_eq!(obs.data[r * 32 + center], 0.0);
        }
    }

    #[test]
    fn low_prop_inside_blind_cone_is_invisible() {
        let mut world = World::new(FloorplanGrid::filled("w", 400, 400, 0.1, true));
        world.props.push(Prop {
            x: 10.4,
            y: 10.0,
            radius: 0.1,
            low: true,
        });
        let cfg = camera(32);
        let near = render_observation(&world, &robot(), &cfg);
        assert!(
            near.data.iter().all(|&v| v != PROP_INTENSITY),
            "prop visible inside the blind cone"
        );
        // The same prop further away is visible.
        world.props[0].x = 11.5;
        let far = render_observation(&world, &robot(), &cfg);
        assert!(far.data.iter().any(|&v| v == PROP_INTENSITY));
    }

    #[test]
    fn tall_prop_is_visible_at_close_range() {
        let mut world = World::new(FloorplanGrid::filled("w", 400, 400, 0.1, true));
        world.props.push(Prop {
            x: 10.4,
            y: 10.0,
            radius: 0.1,
            low: false,
        });
        let obs = render_observation(&world, &robot(), &camera(32));
        assert!(obs.data.iter().any(|&v| v == PROP_INTENSITY));
    }

    #[test]
    fn rendering_is_deterministic() {
        let mut world = World::new(FloorplanGrid::filled("w", 200, 200, 0.1, true));
        world.props.push(Prop {
            x: 12.0,
            y: 10.5,
            radius: 0.2,
            low: false,
        });
        let a = render_observation(&world, &robot(), &camera(24));
        let b = render_observation(&world, &robot(), &camera(24));
        assert_eq!(a.data, b.data);
    }
}
