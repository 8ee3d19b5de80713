//! Bundle persistence (single JSON document, run-length-encoded rasters)
//! and floorplan image ingestion.

use std::collections::BTreeMap;
use std::path::Path;

use image::DynamicImage;
use serde::{Deserialize, Serialize};

use super::types::{ExitNode, FloorplanGrid, MapBundle, RoadNetwork, TopoEdge};
use super::MapError;

/// Default free-space rule: luminance above 50%.
pub fn luminance_free(rgb: [u8; 3]) -> bool {
    let lum = 0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64;
    lum > 127.5
}

/// Convert a floorplan raster into an occupancy grid: a cell is free iff
/// its source pixel satisfies the color predicate.
pub fn binarize_floorplan(
    id: &str,
    image: &DynamicImage,
    free_rule: &dyn Fn([u8; 3]) -> bool,
    resolution: f64,
) -> Result<FloorplanGrid, MapError> {
    if image.width() == 0 || image.height() == 0 {
        return Err(MapError::EmptyImage);
    }
    if resolution <= 0.0 {
        return Err(MapError::InvalidResolution(resolution));
    }
    let rgb = image.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut cells = vec![false; w * h];
    for (x, y, p) in rgb.enumerate_pixels() {
        cells[y as usize * w + x as usize] = free_rule([p[0], p[1], p[2]]);
    }
    Ok(FloorplanGrid {
        id: id.to_string(),
        width: w,
        height: h,
        resolution,
        origin: (0.0, 0.0),
        cells,
    })
}

fn rle_encode(cells: &[bool]) -> String {
    let mut out = String::new();
    let mut iter = cells.iter();
    let Some(mut cur) = iter.next().copied() else {
        return out;
    };
    let mut run = 1usize;
    for &c in iter {
        if c == cur {
            run += 1;
        } else {
            out.push_str(&format!("{}{}", run, if cur { 'f' } else { 'o' }));
            cur = c;
            run = 1;
        }
    }
    out.push_str(&format!("{}{}", run, if cur { 'f' } else { 'o' }));
    out
}

fn rle_decode(s: &str, expected: usize, location: &str) -> Result<Vec<bool>, MapError> {
    let mut out = Vec::with_capacity(expected);
    let mut digits = String::new();
    for ch in s.chars() {
        match ch {
            '0'..='9' => digits.push(ch),
            'f' | 'o' => {
                let count: usize = digits.parse().map_err(|_| MapError::Parse {
                    location: location.to_string(),
                    message: "run without count".into(),
                })?;
                out.extend(std::iter::repeat(ch == 'f').take(count));
                digits.clear();
            }
            _ => {
                return Err(MapError::Parse {
                    location: location.to_string(),
                    message: format!("unexpected character {ch:?} in cell string"),
                })
            }
        }
    }
    if !digits.is_empty() || out.len() != expected {
        return Err(MapError::Parse {
            location: location.to_string(),
            message: format!("cell string decodes to {} cells, expected {expected}", out.len()),
        });
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct FloorplanDoc {
    id: String,
    width: usize,
    height: usize,
    resolution: f64,
    origin: (f64, f64),
    cells: String,
}

#[derive(Serialize, Deserialize)]
struct BundleDoc {
    floorplans: Vec<FloorplanDoc>,
    exits: Vec<ExitNode>,
    edges: Vec<TopoEdge>,
    roads: RoadNetwork,
    #[serde(default)]
    provenance: BTreeMap<String, String>,
}

pub fn save_bundle(bundle: &MapBundle, path: &Path) -> Result<(), MapError> {
    let doc = BundleDoc {
        floorplans: bundle
            .floorplans
            .iter()
            .map(|f| FloorplanDoc {
                id: f.id.clone(),
                width: f.width,
                height: f.height,
                resolution: f.resolution,
                origin: f.origin,
                cells: rle_encode(&f.cells),
            })
            .collect(),
        exits: bundle.exits.clone(),
        edges: bundle.edges.clone(),
        roads: bundle.roads.clone(),
        provenance: bundle.provenance.clone(),
    };
    let json = serde_json::to_string_pretty(&doc).expect("bundle serialization");
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_bundle(path: &Path) -> Result<MapBundle, MapError> {
    let text = std::fs::read_to_string(path)?;
    let doc: BundleDoc = serde_json::from_str(&text).map_err(|e| MapError::Parse {
        location: format!("{}:{}:{}", path.display(), e.line(), e.column()),
        message: e.to_string(),
    })?;
    let mut floorplans = Vec::new();
    for f in doc.floorplans {
        let cells = rle_decode(
            &f.cells,
            f.width * f.height,
            &format!("{} floorplan {}", path.display(), f.id),
        )?;
        floorplans.push(FloorplanGrid {
            id: f.id,
            width: f.width,
            height: f.height,
            resolution: f.resolution,
            origin: f.origin,
            cells,
        });
    }
    Ok(MapBundle {
        floorplans,
        exits: doc.exits,
        edges: doc.edges,
        roads: doc.roads,
        provenance: doc.provenance,
    })
}

/// Road networks arrive as a JSON export with `nodes` and `ways`.
pub fn load_road_network(path: &Path) -> Result<RoadNetwork, MapError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| MapError::Parse {
        location: format!("{}:{}:{}", path.display(), e.line(), e.column()),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapsys::ExitType;
    use image::{Rgb, RgbImage};

    #[test]
    fn binarize_uniform() {
        let white = DynamicImage::ImageRgb8(RgbImage::from_pixel(4, 4, Rgb([255, 255, 255])));
        let black = DynamicImage::ImageRgb8(RgbImage::from_pixel(4, 4, Rgb([0, 0, 0])));
        let g = binarize_floorplan("fp", &white, &luminance_free, 0.3).unwrap();
        assert_eq!(g.cells.iter().filter(|&&c| c).count(), 16);
        let g = binarize_floorplan("fp", &black, &luminance_free, 0.3).unwrap();
        assert_eq!(g.cells.iter().filter(|&&c| c).count(), 0);
    }

    #[test]
    fn binarize_checker() {
        let mut img = RgbImage::from_pixel(2, 2, Rgb([0, 0, 0]));
        img.put_pixel(0, 0, Rgb([255, 255, 255]));
        img.put_pixel(1, 1, Rgb([255, 255, 255]));
        let g = binarize_floorplan("fp", &DynamicImage::ImageRgb8(img), &luminance_free, 0.3)
            .unwrap();
        assert!(g.is_free(0, 0));
        assert!(g.is_free(1, 1));
        assert!(!g.is_free(1, 0));
        assert!(!g.is_free(0, 1));
    }

    #[test]
    fn binarize_errors() {
        let img = DynamicImage::ImageRgb8(RgbImage::new(0, 0));
        assert!(matches!(
            binarize_floorplan("fp", &img, &luminance_free, 0.3),
            Err(MapError::EmptyImage)
        ));
        let img = DynamicImage::ImageRgb8(RgbImage::from_pixel(2, 2, Rgb([0, 0, 0])));
        assert!(matches!(
            binarize_floorplan("fp", &img, &luminance_free, 0.0),
            Err(MapError::InvalidResolution(_))
        ));
    }

    fn sample_bundle() -> MapBundle {
        let mut grid = FloorplanGrid::filled("fp1", 8, 6, 0.3, true);
        grid.set(3, 3, false);
        let exits = vec![
            ExitNode {
                id: "e1".into(),
                floorplan_id: "fp1".into(),
                exit_type: ExitType::Indoor,
                margin: 5,
                position: (1.0, 1.0),
                gps: None,
                connection: None,
                resolution: 0.3,
            },
            ExitNode {
                id: "e2".into(),
                floorplan_id: "fp1".into(),
                exit_type: ExitType::Outdoor,
                margin: 5,
                position: (6.0, 4.0),
                gps: Some((1.29, 103.77)),
                connection: None,
                resolution: 0.3,
            },
        ];
        let edges = crate::mapsys::complete_intra_edges(&exits).unwrap();
        MapBundle {
            floorplans: vec![grid],
            exits,
            edges,
            roads: RoadNetwork::default(),
            provenance: BTreeMap::from([("source".to_string(), "test".to_string())]),
        }
    }

    #[test]
    fn bundle_round_trip() {
        let bundle = sample_bundle();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bundle.json");
        save_bundle(&bundle, &path).unwrap();
        let loaded = load_bundle(&path).unwrap();
        assert_eq!(bundle, loaded);
    }

    #[test]
    fn truncated_file_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bundle.json");
        save_bundle(&sample_bundle(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_bundle(&path), Err(MapError::Parse { .. })));
    }

    #[test]
    fn rle_round_trip() {
        let cells = vec![true, true, false, true, false, false, false];
        let enc = rle_encode(&cells);
        assert_eq!(enc, "2f1o1f3o");
        assert_eq!(rle_decode(&enc, 7, "t").unwrap(), cells);
    }
}
