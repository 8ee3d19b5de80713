//! Two-level map representation: an Exit-graph topology over floorplan
//! occupancy grids and a pruned outdoor road network.

mod io;
mod roads;
mod types;
mod validate;

pub use io::{binarize_floorplan, load_bundle, load_road_network, save_bundle, luminance_free};
pub use roads::prune_road_network;
pub use types::{
    EdgeKind, ExitNode, ExitType, FloorplanGrid, FramedPoint, MapBundle, RoadNetwork, RoadNode,
    RoadWay, TopoEdge,
};
pub use validate::{validate_bundle, Violation};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("empty image")]
    EmptyImage,
    #[error("invalid resolution {0} (must be > 0)")]
    InvalidResolution(f64),
    #[error("exits span multiple floorplans: {0} and {1}")]
    MixedFloorplans(String, String),
    #[error("implausible measurement {measured} m below straight-line bound {bound} m")]
    ImplausibleMeasurement { measured: f64, bound: f64 },
    #[error("pose frame {pose_frame} does not match exit floorplan {exit_frame}")]
    FrameMismatch {
        pose_frame: String,
        exit_frame: String,
    },
    #[error("way {way} references missing node {node}")]
    DanglingWayReference { way: u64, node: u64 },
    #[error("unknown id {0}")]
    UnknownId(String),
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Euclidean pixel distance between two exits scaled to metres.
pub fn exit_distance_m(a: &ExitNode, b: &ExitNode) -> f64 {
    let dx = a.position.0 - b.position.0;
    let dy = a.position.1 - b.position.1;
    (dx * dx + dy * dy).sqrt() * a.resolution
}

/// All intra-floorplan edges for a set of exits sharing one floorplan:
/// the complete simple graph on N exits, C(N,2) edges, Euclidean weights.
pub fn complete_intra_edges(exits: &[ExitNode]) -> Result<Vec<TopoEdge>, MapError> {
    if let Some(first) = exits.first() {
        for e in exits {
            if e.floorplan_id != first.floorplan_id {
                return Err(MapError::MixedFloorplans(
                    first.floorplan_id.clone(),
                    e.floorplan_id.clone(),
                ));
            }
        }
    }
    let mut edges = Vec::new();
    for i in 0..exits.len() {
        for j in i + 1..exits.len() {
            edges.push(TopoEdge {
                a: exits[i].id.clone(),
                b: exits[j].id.clone(),
                weight: exit_distance_m(&exits[i], &exits[j]),
                kind: EdgeKind::Intra,
            });
        }
    }
    Ok(edges)
}

/// Replace an edge weight with a traversal measurement (latest wins).
/// `lower_bound_m` is the straight-line distance between the endpoints;
/// measurements below it are rejected.
pub fn update_edge_weight(
    edge: &TopoEdge,
    lower_bound_m: f64,
    measured_m: f64,
) -> Result<TopoEdge, MapError> {
    if measured_m <= 0.0 || measured_m < lower_bound_m {
        return Err(MapError::ImplausibleMeasurement {
            measured: measured_m,
            bound: lower_bound_m,
        });
    }
    let mut out = edge.clone();
    out.weight = measured_m;
    Ok(out)
}

/// True iff the pose lies within the exit's margin disk
/// (margin pixels x resolution metres).
pub fn exit_reached(pose: &FramedPoint, exit: &ExitNode) -> Result<bool, MapError> {
    if pose.floorplan_id != exit.floorplan_id {
        return Err(MapError::FrameMismatch {
            pose_frame: pose.floorplan_id.clone(),
            exit_frame: exit.floorplan_id.clone(),
        });
    }
    let ex = exit.position.0 * exit.resolution;
    let ey = exit.position.1 * exit.resolution;
    let d = ((pose.x_m - ex).powi(2) + (pose.y_m - ey).powi(2)).sqrt();
    Ok(d <= exit.margin as f64 * exit.resolution)
}
