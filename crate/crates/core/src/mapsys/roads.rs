//! Road-network pruning: collapse curved-street geometry down to
//! dead-ends, intersections, self-loop anchors, and street-id boundaries,
//! while keeping polyline geometry (and hence accumulated length) on the
//! surviving edges.

use std::collections::{BTreeMap, BTreeSet};

use super::types::{RoadNetwork, RoadWay};
use super::MapError;

/// One directed traversal slot: (neighbor node, way index).
type Adjacency = BTreeMap<u64, Vec<(u64, usize)>>;

fn build_adjacency(raw: &RoadNetwork) -> Result<Adjacency, MapError> {
    let ids: BTreeSet<u64> = raw.nodes.iter().map(|n| n.id).collect();
    let mut adj: Adjacency = BTreeMap::new();
    for (wi, way) in raw.ways.iter().enumerate() {
        for n in &way.nodes {
            if !ids.contains(n) {
                return Err(MapError::DanglingWayReference {
                    way: way.id,
                    node: *n,
                });
            }
        }
        for seg in way.nodes.windows(2) {
            adj.entry(seg[0]).or_default().push((seg[1], wi));
            adj.entry(seg[1]).or_default().push((seg[0], wi));
        }
    }
    Ok(adj)
}

fn retained_nodes(raw: &RoadNetwork, adj: &Adjacency) -> BTreeSet<u64> {
    let mut keep = BTreeSet::new();
    for (&node, slots) in adj {
        match slots.len() {
            0 | 1 => {
                keep.insert(node); // dead-end
            }
            2 => {
                let sa = &raw.ways[slots[0].1].street_id;
                let sb = &raw.ways[slots[1].1].street_id;
                if sa != sb {
                    keep.insert(node); // street-id boundary
                }
            }
            _ => {
                keep.insert(node); // intersection
            }
        }
    }
    // Self-loop start points.
    for way in &raw.ways {
        if way.nodes.len() > 1 && way.nodes.first() == way.nodes.last() {
            keep.insert(way.nodes[0]);
        }
    }
    keep
}

/// Prune a raw way-list graph down to junction structure. Retained nodes
/// are exactly: dead-ends, self-loop start points, intersections of three
/// or more street segments, and degree-2 nodes where the adjacent ways
/// carry different street ids. Each output way spans two retained nodes
/// and keeps the full intermediate polyline.
pub fn prune_road_network(raw: &RoadNetwork) -> Result<RoadNetwork, MapError> {
    let adj = build_adjacency(raw)?;
    let mut keep = retained_nodes(raw, &adj);

    // Cycles with no retained node anchor at their smallest node id.
    let mut seen: BTreeSet<u64> = BTreeSet::new();
    for (&start, _) in &adj {
        if seen.contains(&start) || keep.contains(&start) {
            continue;
        }
        let mut component = vec![start];
        let mut stack = vec![start];
        seen.insert(start);
        let mut anchored = false;
        while let Some(n) = stack.pop() {
            for &(m, _) in &adj[&n] {
                if keep.contains(&m) {
                    anchored = true;
                } else if seen.insert(m) {
                    component.push(m);
                    stack.push(m);
                }
            }
        }
        if !anchored {
            keep.insert(*component.iter().min().unwrap());
        }
    }

    // Walk every segment occurrence once, starting from retained nodes,
    // merging degree-2 chains into single ways. Multiplicity counts (rather
    // than a visited set) let the same undirected edge appear several times
    // within one way, e.g. a previously collapsed two-node cycle [a, b, a].
    let key = |a: u64, b: u64, w: usize| (a.min(b), a.max(b), w);
    let mut remaining: BTreeMap<(u64, u64, usize), usize> = BTreeMap::new();
    for (wi, way) in raw.ways.iter().enumerate() {
        for seg in way.nodes.windows(2) {
            *remaining.entry(key(seg[0], seg[1], wi)).or_insert(0) += 1;
        }
    }
    let mut out_ways: Vec<RoadWay> = Vec::new();
    let mut next_id: u64 = 0;
    for &start in &keep {
        let Some(slots) = adj.get(&start) else {
            continue;
        };
        for &(first_next, first_way) in slots {
            {
                let cnt = remaining.get_mut(&key(start, first_next, first_way)).unwrap();
                if *cnt == 0 {
                    continue;
                }
                *cnt -= 1;
            }
            let mut polyline = vec![start];
            let mut cur = first_next;
            loop {
                polyline.push(cur);
                if keep.contains(&cur) {
                    break;
                }
                // Unretained nodes have exactly two slot occurrences; exactly
                // one of them still has an unconsumed edge occurrence.
                let &(next, next_way) = adj[&cur]
                    .iter()
                    .find(|&&(m, w)| remaining[&key(cur, m, w)] > 0)
                    .expect("degree-2 chain");
                *remaining.get_mut(&key(cur, next, next_way)).unwrap() -= 1;
                cur = next;
            }
            out_ways.push(RoadWay {
                id: next_id,
                street_id: raw.ways[first_way].street_id.clone(),
                nodes: polyline,
            });
            next_id += 1;
        }
    }

    // Keep every node still referenced by some way (as junction or geometry),
    // plus isolated originals that had no segments at all.
    let referenced: BTreeSet<u64> = out_ways.iter().flat_map(|w| w.nodes.clone()).collect();
    let nodes = raw
        .nodes
        .iter()
        .filter(|n| referenced.contains(&n.id) || !adj.contains_key(&n.id))
        .cloned()
        .collect();

    Ok(RoadNetwork {
        nodes,
        ways: out_ways,
        pruned: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapsys::RoadNode;

    fn node(id: u64, x: f64, y: f64) -> RoadNode {
        RoadNode {
            id,
            lat: y,
            lon: x,
        }
    }

    #[test]
    fn straight_way_collapses_to_endpoints() {
        let raw = RoadNetwork {
            nodes: (0..5).map(|i| node(i, i as f64, 0.0)).collect(),
            ways: vec![RoadWay {
                id: 0,
                street_id: "s1".into(),
                nodes: vec![0, 1, 2, 3, 4],
            }],
            pruned: false,
        };
        let pruned = prune_road_network(&raw).unwrap();
        assert_eq!(pruned.junction_nodes(), vec![0, 4]);
        assert_eq!(pruned.ways.len(), 1);
        assert!((pruned.total_length() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn t_junction_retains_crossing() {
        // One street along x crossed mid-way by another along y.
        let raw = RoadNetwork {
            nodes: vec![
                node(0, 0.0, 0.0),
                node(1, 1.0, 0.0),
                node(2, 2.0, 0.0),
                node(3, 1.0, 1.0),
            ],
            ways: vec![
                RoadWay {
                    id: 0,
                    street_id: "x".into(),
                    nodes: vec![0, 1, 2],
                },
                RoadWay {
                    id: 1,
                    street_id: "y".into(),
                    nodes: vec![1, 3],
                },
            ],
            pruned: false,
        };
        let pruned = prune_road_network(&raw).unwrap();
        assert_eq!(pruned.junction_nodes(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn street_id_boundary_retained() {
        // Two ways with different street ids meeting end-to-end at node 2.
        let raw = RoadNetwork {
            nodes: (0..5).map(|i| node(i, i as f64, 0.0)).collect(),
            ways: vec![
                RoadWay {
                    id: 0,
                    street_id: "a".into(),
                    nodes: vec![0, 1, 2],
                },
                RoadWay {
                    id: 1,
                    street_id: "b".into(),
                    nodes: vec![2, 3, 4],
                },
            ],
            pruned: false,
        };
        let pruned = prune_road_network(&raw).unwrap();
        assert!(pruned.junction_nodes().contains(&2));
    }

    #[test]
    fn same_street_chain_not_retained() {
        let raw = RoadNetwork {
            nodes: (0..5).map(|i| node(i, i as f64, 0.0)).collect(),
            ways: vec![
                RoadWay {
                    id: 0,
                    street_id: "a".into(),
                    nodes: vec![0, 1, 2],
                },
                RoadWay {
                    id: 1,
                    street_id: "a".into(),
                    nodes: vec![2, 3, 4],
                },
            ],
            pruned: false,
        };
        let pruned = prune_road_network(&raw).unwrap();
        assert_eq!(pruned.junction_nodes(), vec![0, 4]);
        assert!((pruned.total_length() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn dangling_way_reference_rejected() {
        let raw = RoadNetwork {
            nodes: vec![node(0, 0.0, 0.0)],
            ways: vec![RoadWay {
                id: 7,
                street_id: "a".into(),
                nodes: vec![0, 99],
            }],
            pruned: false,
        };
        assert!(matches!(
            prune_road_network(&raw),
            Err(MapError::DanglingWayReference { way: 7, node: 99 })
        ));
    }

    #[test]
    fn self_loop_anchor_retained() {
        let raw = RoadNetwork {
            nodes: vec![
                node(0, 0.0, 0.0),
                node(1, 1.0, 0.0),
                node(2, 1.0, 1.0),
                node(3, 0.0, 1.0),
            ],
            ways: vec![RoadWay {
                id: 0,
                street_id: "loop".into(),
                nodes: vec![0, 1, 2, 3, 0],
            }],
            pruned: false,
        };
        let pruned = prune_road_network(&raw).unwrap();
        assert_eq!(pruned.junction_nodes(), vec![0]);
        assert!((pruned.total_length() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn prune_is_idempotent() {
        let raw = RoadNetwork {
            nodes: vec![
                node(0, 0.0, 0.0),
                node(1, 1.0, 0.0),
                node(2, 2.0, 0.0),
                node(3, 1.0, 1.0),
                node(4, 1.0, 2.0),
            ],
            ways: vec![
                RoadWay {
                    id: 0,
                    street_id: "x".into(),
                    nodes: vec![0, 1, 2],
                },
                RoadWay {
                    id: 1,
                    street_id: "y".into(),
                    nodes: vec![1, 3, 4],
                },
            ],
            pruned: false,
        };
        let once = prune_road_network(&raw).unwrap();
        let twice = prune_road_network(&once).unwrap();
        assert_eq!(once.junction_nodes(), twice.junction_nodes());
        assert!((once.total_length() - twice.total_length()).abs() < 1e-9);
    }

    #[test]
    fn collapsed_two_node_cycle_reprunes() {
        // Two parallel ways over the same edge collapse into a single way
        // [0, 2, 0]; re-pruning that way must keep both edge occurrences.
        let raw = RoadNetwork {
            nodes: vec![node(0, 0.0, 0.0), node(2, 1.0, 0.0)],
            ways: vec![
                RoadWay {
                    id: 0,
                    street_id: "a".into(),
                    nodes: vec![0, 2],
                },
                RoadWay {
                    id: 1,
                    street_id: "a".into(),
                    nodes: vec![0, 2],
                },
            ],
            pruned: false,
        };
        let once = prune_road_network(&raw).unwrap();
        assert!((once.total_length() - 2.0).abs() < 1e-9);
        let twice = prune_road_network(&once).unwrap();
        assert!((twice.total_length() - 2.0).abs() < 1e-9);
        assert_eq!(once.junction_nodes(), twice.junction_nodes());
    }
}
