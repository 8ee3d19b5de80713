//! The planner-to-controller interface: DLM symbols derived from signed
//! curvature at RDP control points with metric trigger radii, and LPE
//! image rendering.

mod lpe;
mod rdp;

pub use lpe::{render_lpe, LPEImage, DEFAULT_LPE_WINDOW_M};
pub use rdp::{rdp_simplify, rdp_simplify_indices};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mapsys::{EdgeKind, ExitType};
use crate::planner::GridPath;

/// Minimum influence radius around a control point, metres.
pub const MIN_INFLUENCE_RADIUS_M: f64 = 5.0;
/// Influence radius of the terminal Stop point, metres. Stop is a hard
/// command override, so its disk must stay close to the goal; a turn-sized
/// disk would halt the robot several metres short.
pub const STOP_INFLUENCE_RADIUS_M: f64 = 1.0;
/// Default curvature threshold separating corridor corners from bends, 1/m.
pub const DEFAULT_CURVATURE_THRESHOLD: f64 = 0.25;
/// Curvature estimation window, polyline vertices per side.
pub const CURVATURE_WINDOW: usize = 3;

#[derive(Debug, Error)]
pub enum IntentionError {
    #[error("polyline has {0} points, need at least 2")]
    TooFewPoints(usize),
    #[error("degenerate curvature window (coincident points)")]
    DegenerateWindow,
    #[error("no transition intention for {kind:?} edge to {exit_type:?} exit")]
    UnknownTransition {
        kind: EdgeKind,
        exit_type: ExitType,
    },
}

/// Discretized local move. The first four values are the core
/// control-conditioning set; the rest arise only from topological
/// transitions, never from curvature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub enum Dlm {
    TurnLeft,
    TurnRight,
    GoForward,
    Stop,
    Upstairs,
    Linkway,
    TakeElevator,
}

impl Dlm {
    pub fn code(self) -> u8 {
        match self {
            Dlm::TurnLeft => 0,
            Dlm::TurnRight => 1,
            Dlm::GoForward => 2,
            Dlm::Stop => 3,
            Dlm::Upstairs => 4,
            Dlm::Linkway => 5,
            Dlm::TakeElevator => 6,
        }
    }

    pub fn from_code(code: u8) -> Option<Dlm> {
        Some(match code {
            0 => Dlm::TurnLeft,
            1 => Dlm::TurnRight,
            2 => Dlm::GoForward,
            3 => Dlm::Stop,
            4 => Dlm::Upstairs,
            5 => Dlm::Linkway,
            6 => Dlm::TakeElevator,
            _ => return None,
        })
    }
}

/// Signed curvature at an arc-length position; left turns are positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedCurvatureSample {
    pub s: f64,
    pub kappa: f64,
}

/// Discrete signed curvature via the circumscribed circle of
/// (p[i-w], p[i], p[i+w]); sign from the cross product of the incoming and
/// outgoing directions.
pub fn signed_curvature(
    path: &[(f64, f64)],
    index: usize,
    window: usize,
) -> Result<SignedCurvatureSample, IntentionError> {
    if window == 0 || index < window || index + window >= path.len() {
        return Err(IntentionError::DegenerateWindow);
    }
    let a = path[index - window];
    let b = path[index];
    let c = path[index + window];
    let u = (b.0 - a.0, b.1 - a.1);
    let v = (c.0 - b.0, c.1 - b.1);
    let w = (c.0 - a.0, c.1 - a.1);
    let lu = (u.0 * u.0 + u.1 * u.1).sqrt();
    let lv = (v.0 * v.0 + v.1 * v.1).sqrt();
    let lw = (w.0 * w.0 + w.1 * w.1).sqrt();
    if lu < 1e-12 || lv < 1e-12 || lw < 1e-12 {
        return Err(IntentionError::DegenerateWindow);
    }
    let cross = u.0 * v.1 - u.1 * v.0;
    let kappa = 2.0 * cross / (lu * lv * lw);
    let s = path[..=index]
        .windows(2)
        .map(|p| ((p[1].0 - p[0].0).powi(2) + (p[1].1 - p[0].1).powi(2)).sqrt())
        .sum();
    Ok(SignedCurvatureSample { s, kappa })
}

/// Map a curvature sample to a DLM symbol.
pub fn dlm_from_curvature(sample: &SignedCurvatureSample, threshold: f64, at_goal: bool) -> Dlm {
    if at_goal {
        Dlm::Stop
    } else if sample.kappa.abs() < threshold {
        Dlm::GoForward
    } else if sample.kappa > 0.0 {
        Dlm::TurnLeft
    } else {
        Dlm::TurnRight
    }
}

/// Extended intention for a cross-map transition. Stairs climb, linkways
/// connect, and indoor-to-indoor inter edges are elevator shafts; intra
/// edges have no transition semantics.
pub fn transition_intention(kind: EdgeKind, exit_type: ExitType) -> Result<Dlm, IntentionError> {
    match (kind, exit_type) {
        (EdgeKind::Inter, ExitType::Stairs) => Ok(Dlm::Upstairs),
        (EdgeKind::Inter, ExitType::Linkway) => Ok(Dlm::Linkway),
        (EdgeKind::Inter, ExitType::Indoor) => Ok(Dlm::TakeElevator),
        (EdgeKind::Layer, ExitType::Outdoor) => Ok(Dlm::GoForward),
        (kind, exit_type) => Err(IntentionError::UnknownTransition { kind, exit_type }),
    }
}

/// A control point of an intention plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPoint {
    pub position: (f64, f64),
    pub dlm: Dlm,
    /// Influence radius, metres.
    pub radius: f64,
}

/// RDP control points with DLM labels and influence radii; the last point
/// carries Stop at the goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentionPlan {
    pub points: Vec<ControlPoint>,
    /// Midpoints between adjacent control points (radius cap geometry).
    pub midpoints: Vec<(f64, f64)>,
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Build an intention plan from a metric polyline. Control points are the
/// RDP vertices; interior points are labeled by signed curvature on the
/// original path; the influence radius is floored at 5 m (1 m for the
/// terminal Stop) but never crosses the midpoint toward an adjacent
/// control point.
pub fn build_intention_plan(
    polyline: &[(f64, f64)],
    rdp_epsilon: f64,
    curvature_threshold: f64,
) -> Result<IntentionPlan, IntentionError> {
    let indices = rdp_simplify_indices(polyline, rdp_epsilon)?;
    let control: Vec<(f64, f64)> = indices.iter().map(|&i| polyline[i]).collect();
    let midpoints: Vec<(f64, f64)> = control
        .windows(2)
        .map(|w| ((w[0].0 + w[1].0) / 2.0, (w[0].1 + w[1].1) / 2.0))
        .collect();

    let mut points = Vec::with_capacity(control.len());
    for (k, &idx) in indices.iter().enumerate() {
        let at_goal = k == indices.len() - 1;
        let dlm = if at_goal {
            Dlm::Stop
        } else {
            let w = CURVATURE_WINDOW.min(idx).min(polyline.len() - 1 - idx);
            match (w > 0).then(|| signed_curvature(polyline, idx, w)) {
                Some(Ok(sample)) => dlm_from_curvature(&sample, curvature_threshold, false),
                _ => Dlm::GoForward,
            }
        };
        let nearest_mid = midpoints
            .iter()
            .enumerate()
            .filter(|(j, _)| *j + 1 == k || *j == k)
            .map(|(_, m)| dist(control[k], *m))
            .fold(f64::INFINITY, f64::min);
        let floor = if at_goal {
            STOP_INFLUENCE_RADIUS_M
        } else {
            MIN_INFLUENCE_RADIUS_M
        };
        let radius = floor.min(nearest_mid);
        points.push(ControlPoint {
            position: control[k],
            dlm,
            radius,
        });
    }
    Ok(IntentionPlan { points, midpoints })
}

/// Convenience: intention plan straight from a grid path.
pub fn intention_plan_for_grid_path(
    path: &GridPath,
    grid: &crate::mapsys::FloorplanGrid,
    rdp_epsilon: f64,
    curvature_threshold: f64,
) -> Result<IntentionPlan, IntentionError> {
    build_intention_plan(&path.metric_polyline(grid), rdp_epsilon, curvature_threshold)
}

/// Consumes control points monotonically along the plan; owned by a single
/// executive loop.
#[derive(Debug, Clone)]
pub struct IntentionScheduler {
    plan: IntentionPlan,
    cursor: usize,
    active: Option<usize>,
}

impl IntentionScheduler {
    pub fn new(plan: IntentionPlan) -> Self {
        IntentionScheduler {
            plan,
            cursor: 0,
            active: None,
        }
    }

    pub fn plan(&self) -> &IntentionPlan {
        &self.plan
    }

    /// The DLM of the nearest not-yet-consumed control point whose
    /// influence disk contains the pose; GoForward when inside no disk.
    pub fn current_intention(&mut self, pose: (f64, f64)) -> Dlm {
        if let Some(active) = self.active {
            let p = &self.plan.points[active];
            if dist(pose, p.position) <= p.radius {
                return p.dlm;
            }
            self.cursor = active + 1;
            self.active = None;
        }
        let candidate = self
            .plan
            .points
            .iter()
            .enumerate()
            .skip(self.cursor)
            .filter(|(_, p)| dist(pose, p.position) <= p.radius)
            .min_by(|(_, a), (_, b)| {
                dist(pose, a.position)
                    .partial_cmp(&dist(pose, b.position))
                    .unwrap()
            })
            .map(|(i, _)| i);
        match candidate {
            Some(i) => {
                self.cursor = i;
                self.active = Some(i);
                self.plan.points[i].dlm
            }
            None => Dlm::GoForward,
        }
    }
}
