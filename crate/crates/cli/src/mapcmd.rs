//! Map commands: bundle building from floorplan rasters and annotations,
//! bundle validation, and route planning.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use mapnav_core::mapsys::{
    binarize_floorplan, complete_intra_edges, load_bundle, load_road_network, luminance_free,
    prune_road_network, save_bundle, validate_bundle, EdgeKind, ExitNode, FramedPoint, MapBundle,
    RoadNetwork, TopoEdge,
};
use mapnav_core::planner::{plan_topological, replan, PlanConfig, PlanEndpoint, PlanError};

use crate::Failure;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FloorplanSpec {
    id: String,
    /// Raster path, relative to the spec file.
    image: String,
    /// Metres per pixel.
    resolution: f64,
}

/// Map description document consumed by `map build`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MapSpec {
    floorplans: Vec<FloorplanSpec>,
    exits: Vec<ExitNode>,
    /// Optional road-network export (JSON), relative to the spec file.
    #[serde(default)]
    roads: Option<String>,
}

pub fn build(spec_path: &Path, bundle_path: &Path) -> Result<(), Failure> {
    let text = std::fs::read_to_string(spec_path)
        .map_err(|e| Failure::io(format!("{}: {e}", spec_path.display())))?;
    let spec: MapSpec = serde_json::from_str(&text)
        .map_err(|e| Failure::io(format!("{}: {e}", spec_path.display())))?;
    let base = spec_path.parent().unwrap_or(Path::new("."));

    let mut floorplans = Vec::new();
    for fp in &spec.floorplans {
        let img_path = base.join(&fp.image);
        let img = image::open(&img_path)
            .map_err(|e| Failure::io(format!("{}: {e}", img_path.display())))?;
        floorplans.push(
            binarize_floorplan(&fp.id, &img, &luminance_free, fp.resolution)
                .map_err(|e| Failure::io(format!("{}: {e}", fp.id)))?,
        );
    }

    // Intra edges: the complete graph over each floorplan's exits.
    let mut by_floorplan: BTreeMap<&str, Vec<ExitNode>> = BTreeMap::new();
    for exit in &spec.exits {
        by_floorplan
            .entry(exit.floorplan_id.as_str())
            .or_default()
            .push(exit.clone());
    }
    let mut edges: Vec<TopoEdge> = Vec::new();
    for group in by_floorplan.values() {
        edges.extend(complete_intra_edges(group).map_err(|e| Failure::io(e.to_string()))?);
    }
    // Inter edges from mutual connection annotations, one per pair.
    for exit in &spec.exits {
        if let Some(other) = &exit.connection {
            if exit.id.as_str() < other.as_str() {
                edges.push(TopoEdge {
                    a: exit.id.clone(),
                    b: other.clone(),
                    weight: 0.0,
                    kind: EdgeKind::Inter,
                });
            }
        }
    }

    let roads = match &spec.roads {
        Some(rel) => {
            let path = base.join(rel);
            let raw = load_road_network(&path)
                .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
            prune_road_network(&raw).map_err(|e| Failure::io(e.to_string()))?
        }
        None => RoadNetwork::default(),
    };

    let bundle = MapBundle {
        floorplans,
        exits: spec.exits,
        edges,
        roads,
        provenance: BTreeMap::new(),
    };
    let violations = validate_bundle(&bundle);
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("violation: {v}");
        }
        return Err(Failure::validation(format!(
            "{} validation violation(s)",
            violations.len()
        )));
    }
    save_bundle(&bundle, bundle_path).map_err(|e| Failure::io(e.to_string()))?;
    println!(
        "bundle written: {} floorplans, {} exits, {} edges",
        bundle.floorplans.len(),
        bundle.exits.len(),
        bundle.edges.len()
    );
    Ok(())
}

pub fn validate(bundle_path: &Path) -> Result<(), Failure> {
    let bundle = load_bundle(bundle_path).map_err(|e| Failure::io(e.to_string()))?;
    let violations = validate_bundle(&bundle);
    if violations.is_empty() {
        println!("ok");
        Ok(())
    } else {
        for v in &violations {
            println!("violation: {v}");
        }
        Err(Failure::validation(format!(
            "{} validation violation(s)",
            violations.len()
        )))
    }
}

/// Parses `exit:<id>` or `<floorplan>:<x_m>:<y_m>`.
fn parse_endpoint(bundle: &MapBundle, text: &str) -> Result<PlanEndpoint, Failure> {
    if let Some(id) = text.strip_prefix("exit:") {
        return Ok(PlanEndpoint::Exit(id.to_string()));
    }
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(Failure::io(format!(
            "bad endpoint {text:?}: expected exit:<id> or <floorplan>:<x>:<y>"
        )));
    }
    let (x_m, y_m) = (
        parts[1]
            .parse::<f64>()
            .map_err(|e| Failure::io(format!("bad endpoint {text:?}: {e}")))?,
        parts[2]
            .parse::<f64>()
            .map_err(|e| Failure::io(format!("bad endpoint {text:?}: {e}")))?,
    );
    if bundle.floorplan(parts[0]).is_none() {
        return Err(Failure::io(format!("unknown floorplan {:?}", parts[0])));
    }
    Ok(PlanEndpoint::Position(FramedPoint {
        floorplan_id: parts[0].to_string(),
        x_m,
        y_m,
    }))
}

/// A metric pose for a plan endpoint (exits sit at their annotated pixel
/// position scaled to metres).
fn endpoint_pose(bundle: &MapBundle, ep: &PlanEndpoint) -> Result<FramedPoint, Failure> {
    match ep {
        PlanEndpoint::Position(p) => Ok(p.clone()),
        PlanEndpoint::Exit(id) => {
            let exit = bundle
                .exit(id)
                .ok_or_else(|| Failure::io(format!("unknown exit {id:?}")))?;
            Ok(FramedPoint {
                floorplan_id: exit.floorplan_id.clone(),
                x_m: exit.position.0 * exit.resolution,
                y_m: exit.position.1 * exit.resolution,
            })
        }
    }
}

pub fn plan(bundle_path: &Path, start: &str, goal: &str) -> Result<(), Failure> {
    let bundle = load_bundle(bundle_path).map_err(|e| Failure::io(e.to_string()))?;
    let start_ep = parse_endpoint(&bundle, start)?;
    let goal_ep = parse_endpoint(&bundle, goal)?;
    let cfg = PlanConfig::default();
    let topo = match plan_topological(&bundle, &start_ep, &goal_ep, &cfg) {
        Ok(t) => t,
        Err(PlanError::Unreachable) => {
            return Err(Failure::io("goal unreachable from start"));
        }
        Err(e) => return Err(Failure::io(e.to_string())),
    };
    println!("exits: [{}]", topo.exits.join(", "));
    println!("topological weight: {:.2} m", topo.total_weight);

    let start_pose = endpoint_pose(&bundle, &start_ep)?;
    let goal_pose = endpoint_pose(&bundle, &goal_ep)?;
    let route = match replan(&bundle, &start_pose, &goal_ep, &cfg) {
        Ok(r) => r,
        Err(PlanError::Unreachable) => {
            return Err(Failure::io("goal unreachable from start"));
        }
        Err(e) => return Err(Failure::io(e.to_string())),
    };
    let _ = goal_pose;
    for (i, seg) in route.segments.iter().enumerate() {
        println!(
            "segment {i}: floorplan {} ({} cells, {:.2} m)",
            seg.floorplan_id,
            seg.cells.len(),
            seg.cost
        );
        if i < route.transitions.len() {
            let t = &route.transitions[i];
            println!(
                "transition {i}: {} -> {} ({:?})",
                t.from_exit, t.to_exit, t.kind
            );
        }
    }
    Ok(())
}
