//! Global planning: shortest paths over the Exit graph, A* over occupancy
//! grids, stitching into per-floorplan metric routes, and per-step
//! replanning.

mod astar;
mod topo;

pub use astar::{plan_grid, plan_grid_with, GridPlanConfig};
pub use topo::{brute_force_min_path, plan_topological, PlanEndpoint};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mapsys::{EdgeKind, FloorplanGrid, FramedPoint, MapBundle, TopoEdge};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("unknown id {0}")]
    UnknownId(String),
    #[error("goal unreachable from start")]
    Unreachable,
    #[error("start cell ({0}, {1}) is occupied")]
    StartOccupied(i64, i64),
    #[error("goal cell ({0}, {1}) is occupied")]
    GoalOccupied(i64, i64),
    #[error("no grid path{}", segment.as_ref().map(|s| format!(" on segment {s}")).unwrap_or_default())]
    NoPath { segment: Option<String> },
}

/// Shortest path at the topological level: a sequence of Exits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopoPath {
    pub exits: Vec<String>,
    pub hops: Vec<TopoEdge>,
    /// Metres, including any grid-attachment cost for free-position endpoints.
    pub total_weight: f64,
}

/// An 8-connected path across one floorplan grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPath {
    pub floorplan_id: String,
    pub cells: Vec<(usize, usize)>,
    /// Metres.
    pub cost: f64,
}

impl GridPath {
    /// Metric polyline through cell centers.
    pub fn metric_polyline(&self, grid: &FloorplanGrid) -> Vec<(f64, f64)> {
        self.cells
            .iter()
            .map(|&(x, y)| grid.cell_to_world(x, y))
            .collect()
    }
}

/// A cross-map transition between two directly connected exits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub from_exit: String,
    pub to_exit: String,
    pub kind: EdgeKind,
}

/// Alternating grid segments and cross-map transitions;
/// `transitions.len() == segments.len() - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutePlan {
    pub segments: Vec<GridPath>,
    pub transitions: Vec<Transition>,
    pub goal: FramedPoint,
}

#[derive(Debug, Clone, Copy)]
pub struct PlanConfig {
    pub grid: GridPlanConfig,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            grid: GridPlanConfig::default(),
        }
    }
}

fn edge_between<'a>(bundle: &'a MapBundle, a: &str, b: &str) -> Option<&'a TopoEdge> {
    bundle
        .edges
        .iter()
        .find(|e| (e.a == a && e.b == b) || (e.a == b && e.b == a))
}

/// Expand a topological path into per-floorplan grid paths and recorded
/// transitions. Waypoints within one floorplan are planned leg by leg and
/// concatenated, so intra milestones stay on the metric path.
pub fn stitch(
    bundle: &MapBundle,
    topo_path: &TopoPath,
    start_pose: &FramedPoint,
    goal_pose: &FramedPoint,
    cfg: &PlanConfig,
) -> Result<RoutePlan, PlanError> {
    // Waypoint list per floorplan: (floorplan id, cell).
    struct Waypoint {
        floorplan_id: String,
        cell: (i64, i64),
        exit_id: Option<String>,
    }
    let mut waypoints = Vec::new();
    let start_grid = bundle
        .floorplan(&start_pose.floorplan_id)
        .ok_or_else(|| PlanError::UnknownId(start_pose.floorplan_id.clone()))?;
    waypoints.push(Waypoint {
        floorplan_id: start_pose.floorplan_id.clone(),
        cell: start_grid.world_to_cell(start_pose.x_m, start_pose.y_m),
        exit_id: None,
    });
    for id in &topo_path.exits {
        let exit = bundle
            .exit(id)
            .ok_or_else(|| PlanError::UnknownId(id.clone()))?;
        waypoints.push(Waypoint {
            floorplan_id: exit.floorplan_id.clone(),
            cell: (exit.position.0 as i64, exit.position.1 as i64),
            exit_id: Some(id.clone()),
        });
    }
    let goal_grid = bundle
        .floorplan(&goal_pose.floorplan_id)
        .ok_or_else(|| PlanError::UnknownId(goal_pose.floorplan_id.clone()))?;
    waypoints.push(Waypoint {
        floorplan_id: goal_pose.floorplan_id.clone(),
        cell: goal_grid.world_to_cell(goal_pose.x_m, goal_pose.y_m),
        exit_id: None,
    });

    let mut segments: Vec<GridPath> = Vec::new();
    let mut transitions: Vec<Transition> = Vec::new();
    let mut current: Option<GridPath> = None;

    for pair in waypoints.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.floorplan_id == b.floorplan_id {
            let grid = bundle.floorplan(&a.floorplan_id).unwrap();
            let leg = plan_grid_with(grid, a.cell, b.cell, &cfg.grid).map_err(|e| match e {
                PlanError::NoPath { .. } => PlanError::NoPath {
                    segment: Some(a.floorplan_id.clone()),
                },
                other => other,
            })?;
            match current.as_mut() {
                None => current = Some(leg),
                Some(seg) => {
                    seg.cost += leg.cost;
                    seg.cells.extend_from_slice(&leg.cells[1..]);
                }
            }
        } else {
            // Cross-map transition between two directly connected exits.
            let (from, to) = match (&a.exit_id, &b.exit_id) {
                (Some(f), Some(t)) => (f.clone(), t.clone()),
                _ => return Err(PlanError::Unreachable),
            };
            let kind = edge_between(bundle, &from, &to)
                .map(|e| e.kind)
                .unwrap_or(EdgeKind::Inter);
            // A transition with no preceding leg still contributes a
            // single-cell segment so segments and transitions alternate.
            let seg = current.take().unwrap_or_else(|| GridPath {
                floorplan_id: a.floorplan_id.clone(),
                cells: vec![(a.cell.0 as usize, a.cell.1 as usize)],
                cost: 0.0,
            });
            segments.push(seg);
            transitions.push(Transition {
                from_exit: from,
                to_exit: to,
                kind,
            });
        }
    }
    let last = current.take().unwrap_or_else(|| {
        let w = waypoints.last().unwrap();
        GridPath {
            floorplan_id: w.floorplan_id.clone(),
            cells: vec![(w.cell.0 as usize, w.cell.1 as usize)],
            cost: 0.0,
        }
    });
    segments.push(last);

    Ok(RoutePlan {
        segments,
        transitions,
        goal: goal_pose.clone(),
    })
}

/// One planning tick: a fresh route from the current pose estimate.
pub fn replan(
    bundle: &MapBundle,
    current_pose: &FramedPoint,
    goal: &PlanEndpoint,
    cfg: &PlanConfig,
) -> Result<RoutePlan, PlanError> {
    let topo = plan_topological(
        bundle,
        &PlanEndpoint::Position(current_pose.clone()),
        goal,
        cfg,
    )?;
    let goal_pose = match goal {
        PlanEndpoint::Position(p) => p.clone(),
        PlanEndpoint::Exit(id) => {
            let exit = bundle
                .exit(id)
                .ok_or_else(|| PlanError::UnknownId(id.clone()))?;
            let grid = bundle
                .floorplan(&exit.floorplan_id)
                .ok_or_else(|| PlanError::UnknownId(exit.floorplan_id.clone()))?;
            let (x_m, y_m) =
                grid.cell_to_world(exit.position.0 as usize, exit.position.1 as usize);
            FramedPoint {
                floorplan_id: exit.floorplan_id.clone(),
                x_m,
                y_m,
            }
        }
    };
    stitch(bundle, &topo, current_pose, &goal_pose, cfg)
}
