//! Dijkstra over the Exit graph. Free-position endpoints are attached to
//! every exit on their floorplan by grid A* distance, so unreachable exits
//! are never selected as attachment points; the cheapest combination wins.

use std::collections::BTreeMap;

use crate::mapsys::{FramedPoint, MapBundle, TopoEdge};

use super::astar::plan_grid_with;
use super::{PlanConfig, PlanError, TopoPath};

#[derive(Debug, Clone, PartialEq)]
pub enum PlanEndpoint {
    Exit(String),
    Position(FramedPoint),
}

// Virtual node names; '\u{0}' cannot collide with user exit ids because it
// sorts before everything and exit ids come from JSON text.
const START_NODE: &str = "\u{0}start";
const GOAL_NODE: &str = "\u{0}goal";

struct Graph {
    adj: BTreeMap<String, Vec<(String, f64)>>,
}

impl Graph {
    fn add_edge(&mut self, a: &str, b: &str, w: f64) {
        self.adj
            .entry(a.to_string())
            .or_default()
            .push((b.to_string(), w));
        self.adj
            .entry(b.to_string())
            .or_default()
            .push((a.to_string(), w));
    }
}

/// Attachment edges from a free position to each reachable exit on its
/// floorplan, weighted by grid A* distance.
fn attachment_edges(
    bundle: &MapBundle,
    pose: &FramedPoint,
    cfg: &PlanConfig,
) -> Result<Vec<(String, f64)>, PlanError> {
    let grid = bundle
        .floorplan(&pose.floorplan_id)
        .ok_or_else(|| PlanError::UnknownId(pose.floorplan_id.clone()))?;
    let cell = grid.world_to_cell(pose.x_m, pose.y_m);
    let mut out = Vec::new();
    for exit in bundle.exits_on(&pose.floorplan_id) {
        let target = (exit.position.0 as i64, exit.position.1 as i64);
        if let Ok(path) = plan_grid_with(grid, cell, target, &cfg.grid) {
            out.push((exit.id.clone(), path.cost));
        }
    }
    Ok(out)
}

pub fn plan_topological(
    bundle: &MapBundle,
    start: &PlanEndpoint,
    goal: &PlanEndpoint,
    cfg: &PlanConfig,
) -> Result<TopoPath, PlanError> {
    let mut graph = Graph {
        adj: BTreeMap::new(),
    };
    for exit in &bundle.exits {
        graph.adj.entry(exit.id.clone()).or_default();
    }
    for edge in &bundle.edges {
        graph.add_edge(&edge.a, &edge.b, edge.weight);
    }

    let resolve = |ep: &PlanEndpoint, node: &str, graph: &mut Graph| -> Result<String, PlanError> {
        match ep {
            PlanEndpoint::Exit(id) => {
                if bundle.exit(id).is_none() {
                    return Err(PlanError::UnknownId(id.clone()));
                }
                Ok(id.clone())
            }
            PlanEndpoint::Position(pose) => {
                for (exit_id, cost) in attachment_edges(bundle, pose, cfg)? {
                    graph.add_edge(node, &exit_id, cost);
                }
                Ok(node.to_string())
            }
        }
    };
    let start_node = resolve(start, START_NODE, &mut graph)?;
    let goal_node = resolve(goal, GOAL_NODE, &mut graph)?;

    // Direct same-floorplan connection between two free positions.
    if let (PlanEndpoint::Position(sp), PlanEndpoint::Position(gp)) = (start, goal) {
        if sp.floorplan_id == gp.floorplan_id {
            let grid = bundle
                .floorplan(&sp.floorplan_id)
                .ok_or_else(|| PlanError::UnknownId(sp.floorplan_id.clone()))?;
            if let Ok(path) = plan_grid_with(
                grid,
                grid.world_to_cell(sp.x_m, sp.y_m),
                grid.world_to_cell(gp.x_m, gp.y_m),
                &cfg.grid,
            ) {
                graph.add_edge(START_NODE, GOAL_NODE, path.cost);
            }
        }
    }

    // Dijkstra with lexicographic tie-breaking on node id.
    let mut dist: BTreeMap<String, f64> = BTreeMap::new();
    let mut prev: BTreeMap<String, String> = BTreeMap::new();
    let mut visited: BTreeMap<String, bool> = BTreeMap::new();
    dist.insert(start_node.clone(), 0.0);
    loop {
        // Smallest (dist, id) among unvisited.
        let next = dist
            .iter()
            .filter(|(id, _)| !visited.get(*id).copied().unwrap_or(false))
            .min_by(|(ida, da), (idb, db)| da.partial_cmp(db).unwrap().then(ida.cmp(idb)))
            .map(|(id, d)| (id.clone(), *d));
        let Some((node, d)) = next else {
            return Err(PlanError::Unreachable);
        };
        if node == goal_node {
            break;
        }
        visited.insert(node.clone(), true);
        if let Some(neighbors) = graph.adj.get(&node) {
            for (m, w) in neighbors {
                let cand = d + w;
                let better = match dist.get(m) {
                    None => true,
                    Some(&old) => {
                        cand < old
                            || (cand == old
                                && prev.get(m).map(|p| node < *p).unwrap_or(false))
                    }
                };
                if better {
                    dist.insert(m.clone(), cand);
                    prev.insert(m.clone(), node.clone());
                }
            }
        }
    }

    let total_weight = dist[&goal_node];
    let mut chain = vec![goal_node.clone()];
    let mut cur = goal_node.clone();
    while let Some(p) = prev.get(&cur) {
        chain.push(p.clone());
        cur = p.clone();
    }
    chain.reverse();

    let exits: Vec<String> = chain
        .iter()
        .filter(|id| id.as_str() != START_NODE && id.as_str() != GOAL_NODE)
        .cloned()
        .collect();
    let mut hops = Vec::new();
    for pair in chain.windows(2) {
        if let Some(edge) = bundle
            .edges
            .iter()
            .find(|e| (e.a == pair[0] && e.b == pair[1]) || (e.a == pair[1] && e.b == pair[0]))
        {
            hops.push(edge.clone());
        }
    }
    let _ = &hops;
    Ok(TopoPath {
        exits,
        hops,
        total_weight,
    })
}

/// Brute-force minimum over all simple paths. Test oracle; exponential.
pub fn brute_force_min_path(
    edges: &[TopoEdge],
    start: &str,
    goal: &str,
) -> Option<f64> {
    let mut adj: BTreeMap<&str, Vec<(&str, f64)>> = BTreeMap::new();
    for e in edges {
        adj.entry(&e.a).or_default().push((&e.b, e.weight));
        adj.entry(&e.b).or_default().push((&e.a, e.weight));
    }
    fn dfs(
        adj: &BTreeMap<&str, Vec<(&str, f64)>>,
        node: &str,
        goal: &str,
        seen: &mut Vec<String>,
        cost: f64,
        best: &mut Option<f64>,
    ) {
        if node == goal {
            if best.map(|b| cost < b).unwrap_or(true) {
                *best = Some(cost);
            }
            return;
        }
        if let Some(ns) = adj.get(node) {
            for (m, w) in ns {
                if !seen.iter().any(|s| s == m) {
                    seen.push(m.to_string());
                    dfs(adj, m, goal, seen, cost + w, best);
                    seen.pop();
                }
            }
        }
    }
    let mut best = None;
    let mut seen = vec![start.to_string()];
    dfs(&adj, start, goal, &mut seen, 0.0, &mut best);
    best
}
