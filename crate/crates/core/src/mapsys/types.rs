use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExitType {
    Indoor,
    Outdoor,
    Stairs,
    Linkway,
}

/// An annotated landmark node of the topological map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitNode {
    pub id: String,
    #[serde(rename = "floorplanId")]
    pub floorplan_id: String,
    #[serde(rename = "type")]
    pub exit_type: ExitType,
    /// Detection tolerance, in pixels of the owning floorplan.
    pub margin: u32,
    /// Pixel position on the owning floorplan.
    pub position: (f64, f64),
    /// (latitude, longitude) degrees; required for outdoor exits.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gps: Option<(f64, f64)>,
    /// Id of the directly connected exit on another floorplan.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub connection: Option<String>,
    /// Metres per pixel of the owning floorplan.
    pub resolution: f64,
}

/// A metric position expressed in a specific floorplan frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramedPoint {
    pub floorplan_id: String,
    pub x_m: f64,
    pub y_m: f64,
}

/// Binarized occupancy raster with metric resolution. `true` cells are free.
#[derive(Debug, Clone, PartialEq)]
pub struct FloorplanGrid {
    pub id: String,
    pub width: usize,
    pub height: usize,
    /// Metres per cell.
    pub resolution: f64,
    /// World offset of cell (0, 0), in metres.
    pub origin: (f64, f64),
    /// Row-major, `true` = free.
    pub cells: Vec<bool>,
}

impl FloorplanGrid {
    pub fn filled(id: &str, width: usize, height: usize, resolution: f64, free: bool) -> Self {
        FloorplanGrid {
            id: id.to_string(),
            width,
            height,
            resolution,
            origin: (0.0, 0.0),
            cells: vec![free; width * height],
        }
    }

    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    /// Out-of-bounds cells read as occupied.
    pub fn is_free(&self, x: i64, y: i64) -> bool {
        self.in_bounds(x, y) && self.cells[y as usize * self.width + x as usize]
    }

    pub fn set(&mut self, x: usize, y: usize, free: bool) {
        self.cells[y * self.width + x] = free;
    }

    /// Metric position of a cell center.
    pub fn cell_to_world(&self, x: usize, y: usize) -> (f64, f64) {
        (
            self.origin.0 + (x as f64 + 0.5) * self.resolution,
            self.origin.1 + (y as f64 + 0.5) * self.resolution,
        )
    }

    pub fn world_to_cell(&self, x_m: f64, y_m: f64) -> (i64, i64) {
        (
            ((x_m - self.origin.0) / self.resolution).floor() as i64,
            ((y_m - self.origin.1) / self.resolution).floor() as i64,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    /// Same floorplan.
    Intra,
    /// Cross-floorplan (stairs, linkways, elevators).
    Inter,
    /// Floorplan to road network.
    Layer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopoEdge {
    pub a: String,
    pub b: String,
    /// Metres.
    pub weight: f64,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadNode {
    pub id: u64,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadWay {
    pub id: u64,
    pub street_id: String,
    pub nodes: Vec<u64>,
}

/// A way-list road graph, raw or pruned to junction structure.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoadNetwork {
    pub nodes: Vec<RoadNode>,
    pub ways: Vec<RoadWay>,
    #[serde(default)]
    pub pruned: bool,
}

impl RoadNetwork {
    pub fn node(&self, id: u64) -> Option<&RoadNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Polyline length of one way, planar metres over (lon, lat).
    pub fn way_length(&self, way: &RoadWay) -> f64 {
        way.nodes
            .windows(2)
            .map(|w| {
                let a = self.node(w[0]).expect("way node");
                let b = self.node(w[1]).expect("way node");
                ((a.lon - b.lon).powi(2) + (a.lat - b.lat).powi(2)).sqrt()
            })
            .sum()
    }

    pub fn total_length(&self) -> f64 {
        self.ways.iter().map(|w| self.way_length(w)).sum()
    }

    /// Graph nodes of the pruned view: way endpoints.
    pub fn junction_nodes(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self
            .ways
            .iter()
            .flat_map(|w| [*w.nodes.first().unwrap(), *w.nodes.last().unwrap()])
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// The whole two-level map: floorplans, exits, edges, and the road layer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MapBundle {
    pub floorplans: Vec<FloorplanGrid>,
    pub exits: Vec<ExitNode>,
    pub edges: Vec<TopoEdge>,
    pub roads: RoadNetwork,
    pub provenance: std::collections::BTreeMap<String, String>,
}

impl MapBundle {
    pub fn floorplan(&self, id: &str) -> Option<&FloorplanGrid> {
        self.floorplans.iter().find(|f| f.id == id)
    }

    pub fn exit(&self, id: &str) -> Option<&ExitNode> {
        self.exits.iter().find(|e| e.id == id)
    }

    pub fn exits_on(&self, floorplan_id: &str) -> Vec<&ExitNode> {
        self.exits
            .iter()
            .filter(|e| e.floorplan_id == floorplan_id)
            .collect()
    }

    /// New bundle version with one edge weight replaced by a traversal
    /// measurement. Bundles stay immutable; mutation yields a copy.
    pub fn with_updated_edge(
        &self,
        a: &str,
        b: &str,
        measured_m: f64,
    ) -> Result<MapBundle, super::MapError> {
        let idx = self
            .edges
            .iter()
            .position(|e| (e.a == a && e.b == b) || (e.a == b && e.b == a))
            .ok_or_else(|| super::MapError::UnknownId(format!("{a}-{b}")))?;
        let bound = if self.edges[idx].kind == EdgeKind::Intra {
            let ea = self
                .exit(&self.edges[idx].a)
                .ok_or_else(|| super::MapError::UnknownId(self.edges[idx].a.clone()))?;
            let eb = self
                .exit(&self.edges[idx].b)
                .ok_or_else(|| super::MapError::UnknownId(self.edges[idx].b.clone()))?;
            super::exit_distance_m(ea, eb)
        } else {
            0.0
        };
        let updated = super::update_edge_weight(&self.edges[idx], bound, measured_m)?;
        let mut out = self.clone();
        out.edges[idx] = updated;
        Ok(out)
    }
}
