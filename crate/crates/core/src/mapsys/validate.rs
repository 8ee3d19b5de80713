//! Bundle invariant checking. Violations are data, not errors.

use std::collections::BTreeSet;

use super::types::{EdgeKind, ExitType, MapBundle};

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub subject: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

/// Check every type invariant of the bundle; empty result means clean.
pub fn validate_bundle(bundle: &MapBundle) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |subject: &str, message: String| {
        out.push(Violation {
            subject: subject.to_string(),
            message,
        })
    };

    let mut seen_fp = BTreeSet::new();
    for fp in &bundle.floorplans {
        if !seen_fp.insert(&fp.id) {
            push(&fp.id, "duplicate floorplan id".into());
        }
        if fp.resolution <= 0.0 {
            push(&fp.id, format!("non-positive resolution {}", fp.resolution));
        }
        if fp.cells.len() != fp.width * fp.height {
            push(
                &fp.id,
                format!(
                    "cell count {} does not match {}x{}",
                    fp.cells.len(),
                    fp.width,
                    fp.height
                ),
            );
        }
    }

    let mut seen_exit = BTreeSet::new();
    for exit in &bundle.exits {
        if !seen_exit.insert(&exit.id) {
            push(&exit.id, "duplicate exit id".into());
        }
        if exit.resolution <= 0.0 {
            push(&exit.id, format!("non-positive resolution {}", exit.resolution));
        }
        if exit.exit_type == ExitType::Outdoor && exit.gps.is_none() {
            push(&exit.id, "outdoor exit is missing gps".into());
        }
        match bundle.floorplan(&exit.floorplan_id) {
            None => push(
                &exit.id,
                format!("references missing floorplan {}", exit.floorplan_id),
            ),
            Some(fp) => {
                if (fp.resolution - exit.resolution).abs() > 1e-12 {
                    push(
                        &exit.id,
                        format!(
                            "resolution {} differs from floorplan resolution {}",
                            exit.resolution, fp.resolution
                        ),
                    );
                }
                let (x, y) = exit.position;
                if x < 0.0 || y < 0.0 || x >= fp.width as f64 || y >= fp.height as f64 {
                    push(
                        &exit.id,
                        format!("position ({x}, {y}) outside floorplan bounds"),
                    );
                }
            }
        }
        if let Some(conn) = &exit.connection {
            match bundle.exit(conn) {
                None => push(&exit.id, format!("dangling connection id {conn}")),
                Some(other) => {
                    if other.floorplan_id == exit.floorplan_id {
                        push(
                            &exit.id,
                            format!("connection {conn} is on the same floorplan"),
                        );
                    }
                    if other.connection.as_deref() != Some(exit.id.as_str()) {
                        push(
                            &exit.id,
                            format!("connection {conn} does not back-reference this exit"),
                        );
                    }
                }
            }
        }
    }

    for edge in &bundle.edges {
        let subject = format!("edge {}-{}", edge.a, edge.b);
        let (ea, eb) = (bundle.exit(&edge.a), bundle.exit(&edge.b));
        if ea.is_none() {
            push(&subject, format!("endpoint {} does not exist", edge.a));
        }
        if eb.is_none() {
            push(&subject, format!("endpoint {} does not exist", edge.b));
        }
        if edge.weight < 0.0 {
            push(&subject, format!("negative weight {}", edge.weight));
        }
        if let (Some(ea), Some(eb)) = (ea, eb) {
            let same = ea.floorplan_id == eb.floorplan_id;
            match edge.kind {
                EdgeKind::Intra => {
                    if !same {
                        push(&subject, "intra edge joins different floorplans".into());
                    } else {
                        let straight = super::exit_distance_m(ea, eb);
                        if edge.weight < straight - 1e-9 {
                            push(
                                &subject,
                                format!(
                                    "weight {} below straight-line distance {straight}",
                                    edge.weight
                                ),
                            );
                        }
                    }
                }
                EdgeKind::Inter => {
                    if same {
                        push(&subject, "inter edge joins exits on the same floorplan".into());
                    }
                }
                EdgeKind::Layer => {}
            }
        }
    }

    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapsys::{ExitNode, FloorplanGrid, RoadNetwork, TopoEdge};

    fn two_floorplan_bundle() -> MapBundle {
        let fp1 = FloorplanGrid::filled("fp1", 10, 10, 0.3, true);
        let fp2 = FloorplanGrid::filled("fp2", 10, 10, 0.3, true);
        let mk = |id: &str, fp: &str, pos: (f64, f64), conn: Option<&str>| ExitNode {
            id: id.into(),
            floorplan_id: fp.into(),
            exit_type: ExitType::Stairs,
            margin: 5,
            position: pos,
            gps: None,
            connection: conn.map(String::from),
            resolution: 0.3,
        };
        let exits = vec![
            mk("a1", "fp1", (1.0, 1.0), Some("b1")),
            mk("a2", "fp1", (8.0, 8.0), None),
            mk("b1", "fp2", (2.0, 2.0), Some("a1")),
        ];
        let mut edges = crate::mapsys::complete_intra_edges(&exits[..2]).unwrap();
        edges.push(TopoEdge {
            a: "a1".into(),
            b: "b1".into(),
            weight: 0.0,
            kind: EdgeKind::Inter,
        });
        MapBundle {
            floorplans: vec![fp1, fp2],
            exits,
            edges,
            roads: RoadNetwork::default(),
            provenance: Default::default(),
        }
    }

    #[test]
    fn clean_bundle_validates() {
        assert_eq!(validate_bundle(&two_floorplan_bundle()), vec![]);
    }

    #[test]
    fn dangling_connection_reported() {
        let mut bundle = two_floorplan_bundle();
        bundle.exits[0].connection = Some("nope".into());
        let violations = validate_bundle(&bundle);
        assert!(violations
            .iter()
            .any(|v| v.subject == "a1" && v.message.contains("nope")));
    }

    #[test]
    fn same_floorplan_inter_edge_reported() {
        let mut bundle = two_floorplan_bundle();
        bundle.edges.push(TopoEdge {
            a: "a1".into(),
            b: "a2".into(),
            weight: 0.0,
            kind: EdgeKind::Inter,
        });
        let violations = validate_bundle(&bundle);
        assert!(violations
            .iter()
            .any(|v| v.message.contains("inter edge joins exits on the same floorplan")));
    }
}
