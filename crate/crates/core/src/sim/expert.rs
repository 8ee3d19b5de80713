//! Scripted demonstration expert: pure-pursuit path tracking with sampled
//! velocity candidates screened for collisions over a short rollout horizon
//! (a simplified dynamic-window scoring of progress minus clearance
//! penalty).

use super::{wrap_angle, RobotState, SimError, World};
use crate::decision::VelocityCommand;

#[derive(Debug, Clone)]
pub struct ExpertConfig {
    pub lookahead_m: f64,
    pub horizon_steps: usize,
    /// Candidates whose rollout clearance drops below this are rejected.
    pub min_clearance_m: f64,
    pub v_candidates: Vec<f64>,
    pub theta_candidates: Vec<f64>,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        ExpertConfig {
            lookahead_m: 0.9,
            horizon_steps: 6,
            min_clearance_m: 0.25,
            v_candidates: vec![0.0, 0.3, 0.6, 1.0],
            theta_candidates: vec![-1.0, -0.6, -0.3, 0.0, 0.3, 0.6, 1.0],
        }
    }
}

/// Index of the polyline point nearest to the pose.
pub fn nearest_path_index(path: &[(f64, f64)], x: f64, y: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, &(px, py)) in path.iter().enumerate() {
        let d = (px - x).powi(2) + (py - y).powi(2);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Point `lookahead` metres further along the path from the nearest point.
pub fn lookahead_point(path: &[(f64, f64)], x: f64, y: f64, lookahead: f64) -> (f64, f64) {
    let start = nearest_path_index(path, x, y);
    let mut acc = 0.0;
    for i in start..path.len() - 1 {
        let (ax, ay) = path[i];
        let (bx, by) = path[i + 1];
        acc += ((bx - ax).powi(2) + (by - ay).powi(2)).sqrt();
        if acc >= lookahead {
            return path[i + 1];
        }
    }
    *path.last().expect("non-empty path")
}

/// Pure pursuit without any perception: steers toward the lookahead point at
/// a fixed cruise speed, ignoring obstacles. Used as the baseline tracker.
pub fn pure_pursuit(path: &[(f64, f64)], robot: &RobotState, lookahead: f64) -> VelocityCommand {
    let (tx, ty) = lookahead_point(path, robot.x, robot.y, lookahead);
    let bearing = (ty - robot.y).atan2(tx - robot.x);
    let err = wrap_angle(bearing - robot.heading);
    VelocityCommand {
        linear: (1.0 - 0.8 * (err.abs() / std::f64::consts::PI)).clamp(0.2, 1.0),
        angular: (2.0 * err).clamp(-1.0, 1.0),
    }
}

/// One expert control for the current tick, or `NoFeasibleControl` when
/// every candidate's rollout collides.
pub fn scripted_expert(
    world: &World,
    path: &[(f64, f64)],
    robot: &RobotState,
    cfg: &ExpertConfig,
) -> Result<VelocityCommand, SimError> {
    // Track a path point at least `lookahead` ahead, skipping points pinched
    // by unmapped obstacles so the target always pulls past them.
    let start = nearest_path_index(path, robot.x, robot.y);
    let mut acc = 0.0;
    let mut target = path.len() - 1;
    for i in start..path.len() - 1 {
        let (ax, ay) = path[i];
        let (bx, by) = path[i + 1];
        acc += ((bx - ax).powi(2) + (by - ay).powi(2)).sqrt();
        let pinched = world.props.iter().any(|p| {
            ((bx - p.x).powi(2) + (by - p.y).powi(2)).sqrt()
                < p.radius + cfg.min_clearance_m + 0.2
        });
        if acc >= cfg.lookahead_m && !pinched {
            target = i + 1;
            break;
        }
    }
    let (mut tx, mut ty) = path[target];
    // Displace the target away from props pinching the straight line to it,
    // so alignment steers the robot around unmapped obstacles rather than
    // leaving it boxed in with the carrot hidden behind the prop.
    let seg_len = ((tx - robot.x).powi(2) + (ty - robot.y).powi(2)).sqrt();
    if seg_len > 1e-6 {
        let ux = (tx - robot.x) / seg_len;
        let uy = (ty - robot.y) / seg_len;
        for prop in &world.props {
            let rx = prop.x - robot.x;
            let ry = prop.y - robot.y;
            let along = rx * ux + ry * uy;
            if along <= 0.0 || along >= seg_len + prop.radius {
                continue;
            }
            let cross = ux * ry - uy * rx; // positive: prop left of the segment
            let needed = prop.radius + cfg.min_clearance_m + 0.2;
            if cross.abs() >= needed {
                continue;
            }
            // Shift far enough that the segment's closest approach clears.
            let shift = (needed - cross.abs()) * seg_len / along.max(0.3);
            let (nx, ny) = if cross >= 0.0 { (uy, -ux) } else { (-uy, ux) };
            tx += nx * shift;
            ty += ny * shift;
        }
    }
    let mut best: Option<(f64, VelocityCommand)> = None;
    for &v in &cfg.v_candidates {
        for &th in &cfg.theta_candidates {
            if v == 0.0 && th == 0.0 {
                continue;
            }
            // Roll the unicycle forward and track the worst clearance.
            let mut pose = *robot;
            let mut min_clear = world.clearance(pose.x, pose.y);
            let mut ok = true;
            for _ in 0..cfg.horizon_steps {
                pose.heading = wrap_angle(pose.heading + th * world.theta_max * world.dt);
                let nx = pose.x + v * world.v_max * pose.heading.cos() * world.dt;
                let ny = pose.y + v * world.v_max * pose.heading.sin() * world.dt;
                if !world.is_free_point(nx, ny) {
                    ok = false;
                    break;
                }
                pose.x = nx;
                pose.y = ny;
                min_clear = min_clear.min(world.clearance(pose.x, pose.y));
                if min_clear < cfg.min_clearance_m {
                    ok = false;
                    break;
                }
            }
            if !ok {
                continue;
            }
            let dist = ((tx - pose.x).powi(2) + (ty - pose.y).powi(2)).sqrt();
            let bearing = (ty - pose.y).atan2(tx - pose.x);
            let align = wrap_angle(bearing - pose.heading).abs();
            // Progress toward (and alignment with) the target dominates;
            // rotate-in-place candidates carry a standstill penalty so the
            // expert only waits when every moving candidate collides.
            let score =
                -dist - 0.3 * align + 0.2 * min_clear.min(1.0) - if v == 0.0 { 2.0 } else { 0.0 };
            if best.map_or(true, |(s, _)| score > s) {
                best = Some((
                    score,
                    VelocityCommand {
                        linear: v,
                        angular: th,
                    },
                ));
            }
        }
    }
    best.map(|(_, c)| c).ok_or(SimError::NoFeasibleControl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapsys::FloorplanGrid;
    use crate::sim::{step_world, Prop, SimEvent};

    fn open_world() -> World {
        World::new(FloorplanGrid::filled("w", 300, 300, 0.1, true))
    }

    fn straight_path() -> Vec<(f64, f64)> {
        (0..200).map(|i| (5.0 + i as f64 * 0.1, 15.0)).collect()
    }

    #[test]
    fn straight_path_tracks_straight_and_fast() {
        let world = open_world();
        let robot = RobotState {
            x: 6.0,
            y: 15.0,
            heading: 0.0,
        };
        let c = scripted_expert(&world, &straight_path(), &robot, &ExpertConfig::default())
            .unwrap();
        assert!(c.angular.abs() < 0.05, "steering {}", c.angular);
        assert!(c.linear >= 0.9, "speed {}", c.linear);
    }

    #[test]
    fn expert_avoids_prop_on_path() {
        let mut world = open_world();
        world.props.push(Prop {
            x: 10.0,
            y: 15.0,
            radius: 0.15,
            low: false,
        });
        let path = straight_path();
        let mut robot = RobotState {
            x: 6.0,
            y: 15.0,
            heading: 0.0,
        };
        let cfg = ExpertConfig::default();
        let mut collisions = 0;
        for _ in 0..400 {
            let c = scripted_expert(&world, &path, &robot, &cfg).unwrap();
            let events = step_world(&mut world, &mut robot, c, 0.1);
            if events.contains(&SimEvent::Collision) {
                collisions += 1;
            }
            if robot.x > 14.0 {
                break;
            }
        }
        assert_eq!(collisions, 0, "expert collided with the prop");
        assert!(robot.x > 14.0, "expert never passed the prop (x={})", robot.x);
    }

    #[test]
    fn fully_blocked_corridor_has_no_feasible_control() {
        // A one-cell-wide corridor sealed ahead and behind.
        let mut grid = FloorplanGrid::filled("w", 60, 60, 0.1, false);
        for x in 25..35 {
            grid.set(x, 30, true);
        }
        let world = World::new(grid);
        let robot = RobotState {
            x: 3.0,
            y: 3.05,
            heading: 0.0,
        };
        let path = vec![(3.0, 3.05), (3.5, 3.05)];
        let r = scripted_expert(&world, &path, &robot, &ExpertConfig::default());
        assert!(matches!(r, Err(SimError::NoFeasibleControl)));
    }

    #[test]
    fn pure_pursuit_steers_toward_the_path() {
        let robot = RobotState {
            x: 6.0,
            y: 16.0,
            heading: 0.0,
        };
        // Path below the robot: expect a right turn (negative angular).
        let c = pure_pursuit(&straight_path(), &robot, 0.9);
        assert!(c.angular < 0.0);
        assert!(c.linear > 0.0);
    }
}
