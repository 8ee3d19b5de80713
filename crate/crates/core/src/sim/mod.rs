//! Deterministic 2D simulation world: unicycle robot, drifting odometry
//! with landmark re-anchoring, ray-cast egocentric observations, a scripted
//! expert, and scenario scripting for demonstration collection and
//! closed-loop evaluation.

pub mod expert;
pub mod fixtures;
pub mod observe;
pub mod scenario;

pub use scenario::TrajectoryLog;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::mapsys::{ExitNode, FloorplanGrid};

pub const DEFAULT_V_MAX: f64 = 1.0;
pub const DEFAULT_THETA_MAX: f64 = 1.0;
pub const DEFAULT_DT: f64 = 0.1;
/// A collision is counted when clearance drops below this (metres).
pub const SAFE_CLEARANCE_M: f64 = 0.20;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("no feasible control: every sampled command collides")]
    NoFeasibleControl,
    #[error("scenario is malformed: {0}")]
    BadScenario(String),
    #[error("planning failed: {0}")]
    Plan(#[from] crate::planner::PlanError),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Small cylindrical obstacle. `low` props model floor-level objects a
/// forward camera loses inside its blind cone.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Prop {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    #[serde(default)]
    pub low: bool,
}

/// Pose in world coordinates; heading wrapped to (-π, π].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a.rem_euclid(2.0 * std::f64::consts::PI);
    if a > std::f64::consts::PI {
        a -= 2.0 * std::f64::consts::PI;
    }
    a
}

/// Moving blocker that steps into the robot's path: it targets the point
/// 1-1.2 m ahead of the robot along its heading and yields once the robot
/// has adjusted its direction or a collision was counted, for a fixed
/// number of blocks.
#[derive(Debug, Clone)]
pub struct AdversaryAgent {
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    pub blocks_remaining: usize,
    pub trigger_range: f64,
    /// Robot heading at the start of the active block.
    block_heading: Option<f64>,
    /// Ticks to stay out of the way between blocks.
    cooldown: usize,
}

impl AdversaryAgent {
    pub fn new(x: f64, y: f64, speed: f64, blocks: usize, trigger_range: f64) -> Self {
        AdversaryAgent {
            x,
            y,
            speed,
            blocks_remaining: blocks,
            trigger_range,
            block_heading: None,
            cooldown: 0,
        }
    }

    pub fn radius(&self) -> f64 {
        0.25
    }

    /// True while the agent is actively blocking.
    pub fn active(&self) -> bool {
        self.block_heading.is_some()
    }

    fn advance(&mut self, robot: &RobotState, collided: bool, dt: f64) -> bool {
        if self.cooldown > 0 {
            self.cooldown -= 1;
            return false;
        }
        match self.block_heading {
            None => {
                if self.blocks_remaining == 0 {
                    return false;
                }
                let d = ((robot.x - self.x).powi(2) + (robot.y - self.y).powi(2)).sqrt();
                if d <= self.trigger_range {
                    self.block_heading = Some(robot.heading);
                }
                false
            }
            Some(h0) => {
                // Target: 1.1 m in the robot's heading direction.
                let tx = robot.x + 1.1 * robot.heading.cos();
                let ty = robot.y + 1.1 * robot.heading.sin();
                let dx = tx - self.x;
                let dy = ty - self.y;
                let d = (dx * dx + dy * dy).sqrt();
                let step = (self.speed * dt).min(d);
                if d > 1e-9 {
                    self.x += step * dx / d;
                    self.y += step * dy / d;
                }
                let adjusted = wrap_angle(robot.heading - h0).abs() > 0.6;
                if adjusted || collided {
                    // Block resolved; step aside and rearm after a pause.
                    self.block_heading = None;
                    self.blocks_remaining -= 1;
                    self.cooldown = 20;
                    self.x += 1.5 * (robot.heading + std::f64::consts::FRAC_PI_2).cos();
                    self.y += 1.5 * (robot.heading + std::f64::consts::FRAC_PI_2).sin();
                    true
                } else {
                    false
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct World {
    pub grid: FloorplanGrid,
    pub props: Vec<Prop>,
    pub adversaries: Vec<AdversaryAgent>,
    pub dt: f64,
    pub v_max: f64,
    pub theta_max: f64,
}

impl World {
    pub fn new(grid: FloorplanGrid) -> World {
        World {
            grid,
            props: Vec::new(),
            adversaries: Vec::new(),
            dt: DEFAULT_DT,
            v_max: DEFAULT_V_MAX,
            theta_max: DEFAULT_THETA_MAX,
        }
    }

    /// Distance from a point to the nearest obstacle surface: occupied cells
    /// (as axis-aligned squares), props, and adversaries. The static-grid
    /// search is limited to a 1 m neighbourhood (far beyond the collision
    /// threshold); anything farther reads as unobstructed.
    pub fn clearance(&self, x: f64, y: f64) -> f64 {
        let mut best = f64::INFINITY;
        let res = self.grid.resolution;
        let (cx, cy) = self.grid.world_to_cell(x, y);
        let radius_cells = (1.0 / res).ceil() as i64;
        for gy in (cy - radius_cells)..=(cy + radius_cells) {
            for gx in (cx - radius_cells)..=(cx + radius_cells) {
                if self.grid.is_free(gx, gy) {
                    continue;
                }
                let x0 = self.grid.origin.0 + gx as f64 * res;
                let y0 = self.grid.origin.1 + gy as f64 * res;
                let ddx = (x0 - x).max(0.0).max(x - (x0 + res));
                let ddy = (y0 - y).max(0.0).max(y - (y0 + res));
                best = best.min((ddx * ddx + ddy * ddy).sqrt());
            }
        }
        for p in &self.props {
            let d = ((p.x - x).powi(2) + (p.y - y).powi(2)).sqrt() - p.radius;
            best = best.min(d.max(0.0));
        }
        for a in &self.adversaries {
            let d = ((a.x - x).powi(2) + (a.y - y).powi(2)).sqrt() - a.radius();
            best = best.min(d.max(0.0));
        }
        best
    }

    pub fn is_free_point(&self, x: f64, y: f64) -> bool {
        let (cx, cy) = self.grid.world_to_cell(x, y);
        self.grid.is_free(cx, cy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SimEvent {
    /// Clearance dropped below the safe distance.
    Collision,
    /// Robot was reset onto the planned path.
    Intervention,
    /// Position estimate snapped to an exit.
    Anchored,
}

/// Advances the robot one tick under unicycle kinematics with normalized
/// controls (scaled by v_max / θ_max), then advances dynamic agents.
/// Returns emitted events; a step into an occupied cell is refused.
pub fn step_world(
    world: &mut World,
    robot: &mut RobotState,
    control: crate::decision::VelocityCommand,
    dt: f64,
) -> Vec<SimEvent> {
    assert!(dt > 0.0);
    let v = control.linear.clamp(-1.0, 1.0) * world.v_max;
    let w = control.angular.clamp(-1.0, 1.0) * world.theta_max;
    robot.heading = wrap_angle(robot.heading + w * dt);
    let nx = robot.x + v * robot.heading.cos() * dt;
    let ny = robot.y + v * robot.heading.sin() * dt;
    let mut events = Vec::new();
    if world.is_free_point(nx, ny) {
        robot.x = nx;
        robot.y = ny;
    } else {
        events.push(SimEvent::Collision);
    }
    if world.clearance(robot.x, robot.y) < SAFE_CLEARANCE_M
        && !events.contains(&SimEvent::Collision)
    {
        events.push(SimEvent::Collision);
    }
    let collided = events.contains(&SimEvent::Collision);
    let snapshot = *robot;
    for a in &mut world.adversaries {
        a.advance(&snapshot, collided, dt);
    }
    events
}

/// Odometry delta in the robot frame: forward distance and heading change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdomDelta {
    pub forward_m: f64,
    pub rotation_rad: f64,
}

/// Drift model for the visual-odometry stand-in: a per-run systematic scale
/// bias (drawn once from N(0, σ)) plus per-step white noise, both scaled by
/// the motion magnitude. Zero sigmas reproduce ground truth exactly.
#[derive(Debug, Clone)]
pub struct OdometryModel {
    pub sigma_t: f64,
    pub sigma_r: f64,
    scale_bias_t: f64,
    scale_bias_r: f64,
    rng: ChaCha8Rng,
}

impl OdometryModel {
    pub fn new(sigma_t: f64, sigma_r: f64, seed: u64) -> OdometryModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let scale_bias_t = sigma_t * unit.sample(&mut rng);
        let scale_bias_r = sigma_r * unit.sample(&mut rng);
        OdometryModel {
            sigma_t,
            sigma_r,
            scale_bias_t,
            scale_bias_r,
            rng,
        }
    }

    /// Exact odometry.
    pub fn ideal() -> OdometryModel {
        OdometryModel::new(0.0, 0.0, 0)
    }

    pub fn read(&mut self, true_delta: OdomDelta) -> OdomDelta {
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let d = true_delta.forward_m;
        let r = true_delta.rotation_rad;
        let nd = if self.sigma_t > 0.0 && d != 0.0 {
            d * (1.0 + self.scale_bias_t) + self.sigma_t * d * unit.sample(&mut self.rng)
        } else {
            d
        };
        let nr = if self.sigma_r > 0.0 && r != 0.0 {
            r * (1.0 + self.scale_bias_r) + self.sigma_r * r.abs() * unit.sample(&mut self.rng)
        } else {
            r
        };
        OdomDelta {
            forward_m: nd,
            rotation_rad: nr,
        }
    }
}

pub fn integrate_odometry(pose_est: &mut RobotState, delta: OdomDelta) {
    pose_est.heading = wrap_angle(pose_est.heading + delta.rotation_rad);
    pose_est.x += delta.forward_m * pose_est.heading.cos();
    pose_est.y += delta.forward_m * pose_est.heading.sin();
}

/// Snaps the position estimate to the exit's metric position on detection;
/// the heading estimate is left unchanged. Exit positions are stored in
/// pixels and scaled by the exit's resolution.
pub fn re_anchor(pose_est: &mut RobotState, exit: &ExitNode, detected: bool) -> bool {
    if detected {
        pose_est.x = exit.position.0 * exit.resolution;
        pose_est.y = exit.position.1 * exit.resolution;
    }
    detected
}

/// Occupancy sketch: '#' occupied, anything else free. One cell per
/// character, row 0 at the top (highest y).
pub fn grid_from_sketch(id: &str, rows: &[&str], resolution: f64) -> FloorplanGrid {
    let height = rows.len();
    let width = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let mut grid = FloorplanGrid::filled(id, width, height, resolution, true);
    for (ri, row) in rows.iter().enumerate() {
        let y = height - 1 - ri;
        for (x, ch) in row.chars().enumerate() {
            if ch == '#' {
                grid.set(x, y, false);
            }
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::VelocityCommand;

    fn open_world(side: usize) -> World {
        World::new(FloorplanGrid::filled("w", side, side, 0.1, true))
    }

    #[test]
    fn straight_motion_advances_along_heading() {
        let mut world = open_world(100);
        let mut robot = RobotState {
            x: 5.0,
            y: 5.0,
            heading: 0.0,
        };
        let ev = step_world(
            &mut world,
            &mut robot,
            VelocityCommand {
                linear: 1.0,
                angular: 0.0,
            },
            0.1,
        );
        assert!(ev.is_empty());
        assert!((robot.x - 5.1).abs() < 1e-12);
        assert!((robot.y - 5.0).abs() < 1e-12);
    }

    #[test]
    fn pure_rotation_keeps_position() {
        let mut world = open_world(100);
        let mut robot = RobotState {
            x: 5.0,
            y: 5.0,
            heading: 0.3,
        };
        step_world(
            &mut world,
            &mut robot,
            VelocityCommand {
                linear: 0.0,
                angular: 1.0,
            },
            0.1,
        );
        assert!((robot.heading - 0.4).abs() < 1e-12);
        assert_eq!((robot.x, robot.y), (5.0, 5.0));
    }

    #[test]
    fn near_wall_motion_emits_collision() {
        let mut world = open_world(100);
        // Occupy a column just ahead of the robot.
        for y in 0..100 {
            world.grid.set(52, y, false);
        }
        let mut robot = RobotState {
            x: 5.05,
            y: 5.0,
            heading: 0.0,
        };
        // 0.15 m from the wall face at x = 5.2, moving toward it.
        let ev = step_world(
            &mut world,
            &mut robot,
            VelocityCommand {
                linear: 0.5,
                angular: 0.0,
            },
            0.1,
        );
        assert!(ev.contains(&SimEvent::Collision));
    }

    #[test]
    fn heading_stays_wrapped() {
        let mut world = open_world(50);
        let mut robot = RobotState {
            x: 2.0,
            y: 2.0,
            heading: std::f64::consts::PI - 0.01,
        };
        step_world(
            &mut world,
            &mut robot,
            VelocityCommand {
                linear: 0.0,
                angular: 1.0,
            },
            0.1,
        );
        assert!(robot.heading <= std::f64::consts::PI);
        assert!(robot.heading > -std::f64::consts::PI);
    }

    #[test]
    fn ideal_odometry_tracks_ground_truth() {
        let mut model = OdometryModel::ideal();
        let mut est = RobotState {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
        };
        let mut truth = est;
        for i in 0..500 {
            let delta = OdomDelta {
                forward_m: 0.1,
                rotation_rad: if i % 7 == 0 { 0.05 } else { 0.0 },
            };
            integrate_odometry(&mut truth, delta);
            let noisy = model.read(delta);
            assert_eq!(noisy, delta);
            integrate_odometry(&mut est, noisy);
        }
        assert_eq!((est.x, est.y, est.heading), (truth.x, truth.y, truth.heading));
    }

    #[test]
    fn translational_drift_grows_over_distance() {
        // 100 m straight run at σ_t = 0.05/m: mean terminal error over 100
        // seeds must exceed 1 m (the systematic scale bias dominates).
        let mut total = 0.0;
        for seed in 0..100 {
            let mut model = OdometryModel::new(0.05, 0.0, seed);
            let mut est = RobotState {
                x: 0.0,
                y: 0.0,
                heading: 0.0,
            };
            for _ in 0..1000 {
                let noisy = model.read(OdomDelta {
                    forward_m: 0.1,
                    rotation_rad: 0.0,
                });
                integrate_odometry(&mut est, noisy);
            }
            total += (est.x - 100.0).hypot(est.y);
        }
        let mean = total / 100.0;
        assert!(mean > 1.0, "mean terminal error {mean} m");
    }

    #[test]
    fn pure_rotation_has_no_position_error() {
        let mut model = OdometryModel::new(0.05, 0.0, 3);
        let mut est = RobotState {
            x: 1.0,
            y: 2.0,
            heading: 0.0,
        };
        for _ in 0..100 {
            let noisy = model.read(OdomDelta {
                forward_m: 0.0,
                rotation_rad: 0.1,
            });
            integrate_odometry(&mut est, noisy);
        }
        assert_eq!((est.x, est.y), (1.0, 2.0));
    }

    #[test]
    fn anchoring_snaps_position_only() {
        use crate::mapsys::{ExitNode, ExitType};
        let exit = ExitNode {
            id: "e1".to_string(),
            floorplan_id: "f".to_string(),
            exit_type: ExitType::Indoor,
            margin: 30,
            position: (100.0, 200.0),
            gps: None,
            connection: None,
            resolution: 0.1,
        };
        let mut est = RobotState {
            x: 11.5,
            y: 19.0,
            heading: 0.7,
        };
        assert!(!re_anchor(&mut est, &exit, false));
        assert_eq!((est.x, est.y), (11.5, 19.0));
        assert!(re_anchor(&mut est, &exit, true));
        assert_eq!((est.x, est.y), (10.0, 20.0));
        assert_eq!(est.heading, 0.7);
    }

    #[test]
    fn sketch_grid_round_trip() {
        let grid = grid_from_sketch("s", &["###", "#.#", "###"], 0.5);
        assert_eq!(grid.width, 3);
        assert_eq!(grid.height, 3);
        assert!(grid.is_free(1, 1));
        assert!(!grid.is_free(0, 0));
        assert!(!grid.is_free(2, 2));
    }

    #[test]
    fn adversary_blocks_until_robot_turns() {
        let robot = RobotState {
            x: 5.0,
            y: 5.0,
            heading: 0.0,
        };
        let mut agent = AdversaryAgent::new(7.0, 5.0, 1.5, 1, 3.0);
        agent.advance(&robot, false, 0.1);
        assert!(agent.active());
        // Robot turns past the adjustment threshold: block resolves.
        let turned = RobotState {
            heading: 0.8,
            ..robot
        };
        let resolved = agent.advance(&turned, false, 0.1);
        assert!(resolved);
        assert_eq!(agent.blocks_remaining, 0);
        assert!(!agent.active());
    }
}
