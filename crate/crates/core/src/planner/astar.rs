//! 8-connected grid A* with Euclidean step costs and an admissible
//! Euclidean heuristic. Ties break on the smallest (f, h, node-id) triple
//! so identical inputs always produce identical paths.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::mapsys::FloorplanGrid;

use super::{GridPath, PlanError};

pub const SQRT_2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy)]
pub struct GridPlanConfig {
    /// Chebyshev obstacle inflation radius, in cells.
    pub inflate_cells: usize,
}

impl Default for GridPlanConfig {
    fn default() -> Self {
        GridPlanConfig { inflate_cells: 1 }
    }
}

struct QueueEntry {
    f: f64,
    h: f64,
    node: (usize, usize),
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for QueueEntry {}
impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert for smallest-first.
        other
            .f
            .partial_cmp(&self.f)
            .unwrap()
            .then(other.h.partial_cmp(&self.h).unwrap())
            .then(other.node.1.cmp(&self.node.1))
            .then(other.node.0.cmp(&self.node.0))
    }
}

/// Free-cell mask after Chebyshev inflation of occupied cells. Cells beyond
/// the border are occupied but are not inflated inward.
pub fn inflate(grid: &FloorplanGrid, radius: usize) -> Vec<bool> {
    let mut free: Vec<bool> = grid.cells.clone();
    if radius == 0 {
        return free;
    }
    let r = radius as i64;
    for y in 0..grid.height as i64 {
        for x in 0..grid.width as i64 {
            if grid.cells[y as usize * grid.width + x as usize] {
                continue;
            }
            for dy in -r..=r {
                for dx in -r..=r {
                    let (nx, ny) = (x + dx, y + dy);
                    if grid.in_bounds(nx, ny) {
                        free[ny as usize * grid.width + nx as usize] = false;
                    }
                }
            }
        }
    }
    free
}

const NEIGHBORS: [(i64, i64, bool); 8] = [
    (-1, -1, true),
    (0, -1, false),
    (1, -1, true),
    (-1, 0, false),
    (1, 0, false),
    (-1, 1, true),
    (0, 1, false),
    (1, 1, true),
];

pub fn plan_grid(
    grid: &FloorplanGrid,
    start: (i64, i64),
    goal: (i64, i64),
) -> Result<GridPath, PlanError> {
    plan_grid_with(grid, start, goal, &GridPlanConfig::default())
}

pub fn plan_grid_with(
    grid: &FloorplanGrid,
    start: (i64, i64),
    goal: (i64, i64),
    cfg: &GridPlanConfig,
) -> Result<GridPath, PlanError> {
    let free = inflate(grid, cfg.inflate_cells);
    let is_free = |x: i64, y: i64| grid.in_bounds(x, y) && free[y as usize * grid.width + x as usize];
    if !is_free(start.0, start.1) {
        return Err(PlanError::StartOccupied(start.0, start.1));
    }
    if !is_free(goal.0, goal.1) {
        return Err(PlanError::GoalOccupied(goal.0, goal.1));
    }
    let (sw, gw) = (
        (start.0 as usize, start.1 as usize),
        (goal.0 as usize, goal.1 as usize),
    );
    let idx = |(x, y): (usize, usize)| y * grid.width + x;
    let heuristic = |(x, y): (usize, usize)| {
        let dx = x as f64 - gw.0 as f64;
        let dy = y as f64 - gw.1 as f64;
        (dx * dx + dy * dy).sqrt()
    };

    let mut g = vec![f64::INFINITY; grid.width * grid.height];
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; grid.width * grid.height];
    let mut closed = vec![false; grid.width * grid.height];
    let mut heap = BinaryHeap::new();
    g[idx(sw)] = 0.0;
    heap.push(QueueEntry {
        f: heuristic(sw),
        h: heuristic(sw),
        node: sw,
    });

    while let Some(QueueEntry { node, .. }) = heap.pop() {
        if closed[idx(node)] {
            continue;
        }
        closed[idx(node)] = true;
        if node == gw {
            let mut cells = vec![node];
            let mut cur = node;
            while let Some(p) = parent[idx(cur)] {
                cells.push(p);
                cur = p;
            }
            cells.reverse();
            // Cost from step composition for an order-independent float value.
            let mut straight = 0u64;
            let mut diagonal = 0u64;
            for w in cells.windows(2) {
                if w[0].0 != w[1].0 && w[0].1 != w[1].1 {
                    diagonal += 1;
                } else {
                    straight += 1;
                }
            }
            return Ok(GridPath {
                floorplan_id: grid.id.clone(),
                cells,
                cost: (straight as f64 + diagonal as f64 * SQRT_2) * grid.resolution,
            });
        }
        for &(dx, dy, diag) in &NEIGHBORS {
            let (nx, ny) = (node.0 as i64 + dx, node.1 as i64 + dy);
            if !is_free(nx, ny) {
                continue;
            }
            let n = (nx as usize, ny as usize);
            let step = if diag { SQRT_2 } else { 1.0 };
            let cand = g[idx(node)] + step;
            if cand < g[idx(n)] {
                g[idx(n)] = cand;
                parent[idx(n)] = Some(node);
                heap.push(QueueEntry {
                    f: cand + heuristic(n),
                    h: heuristic(n),
                    node: n,
                });
            }
        }
    }
    Err(PlanError::NoPath { segment: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open_grid(w: usize, h: usize) -> FloorplanGrid {
        FloorplanGrid::filled("g", w, h, 1.0, true)
    }

    #[test]
    fn diagonal_across_empty_grid() {
        let g = open_grid(3, 3);
        let p = plan_grid_with(&g, (0, 0), (2, 2), &GridPlanConfig { inflate_cells: 0 }).unwrap();
        assert!((p.cost - 2.0 * SQRT_2).abs() < 1e-12);
        assert_eq!(p.cells.first(), Some(&(0, 0)));
        assert_eq!(p.cells.last(), Some(&(2, 2)));
    }

    #[test]
    fn degenerate_start_equals_goal() {
        let g = open_grid(3, 3);
        let p = plan_grid_with(&g, (1, 1), (1, 1), &GridPlanConfig { inflate_cells: 0 }).unwrap();
        assert_eq!(p.cells, vec![(1, 1)]);
        assert_eq!(p.cost, 0.0);
    }

    #[test]
    fn walled_off_goal() {
        let mut g = open_grid(5, 5);
        for y in 0..5 {
            g.set(2, y, false);
        }
        let r = plan_grid_with(&g, (0, 0), (4, 4), &GridPlanConfig { inflate_cells: 0 });
        assert!(matches!(r, Err(PlanError::NoPath { .. })));
    }

    #[test]
    fn occupied_endpoints_rejected() {
        let mut g = open_grid(3, 3);
        g.set(0, 0, false);
        g.set(2, 2, false);
        assert!(matches!(
            plan_grid_with(&g, (0, 0), (1, 1), &GridPlanConfig { inflate_cells: 0 }),
            Err(PlanError::StartOccupied(0, 0))
        ));
        assert!(matches!(
            plan_grid_with(&g, (1, 1), (2, 2), &GridPlanConfig { inflate_cells: 0 }),
            Err(PlanError::GoalOccupied(2, 2))
        ));
    }

    #[test]
    fn inflation_blocks_adjacent_cells() {
        let mut g = open_grid(7, 3);
        g.set(3, 0, false);
        g.set(3, 1, false);
        // Without inflation the path can squeeze along y=2.
        let p0 = plan_grid_with(&g, (0, 1), (6, 1), &GridPlanConfig { inflate_cells: 0 }).unwrap();
        // With 1-cell inflation y=2 next to the wall is blocked too.
        let p1 = plan_grid_with(&g, (0, 1), (6, 1), &GridPlanConfig { inflate_cells: 1 });
        assert!(p0.cost > 0.0);
        assert!(matches!(p1, Err(PlanError::NoPath { .. })));
    }

    /// Plain Dijkstra over the same 8-connected movement model, with the
    /// same composed-cost evaluation. Test-only oracle.
    pub fn dijkstra_cost(grid: &FloorplanGrid, start: (i64, i64), goal: (i64, i64)) -> Option<f64> {
        let is_free = |x: i64, y: i64| grid.is_free(x, y);
        if !is_free(start.0, start.1) || !is_free(goal.0, goal.1) {
            return None;
        }
        let idx = |x: usize, y: usize| y * grid.width + x;
        let mut dist = vec![f64::INFINITY; grid.width * grid.height];
        let mut steps: Vec<(u64, u64)> = vec![(0, 0); grid.width * grid.height];
        let mut heap = BinaryHeap::new();
        let s = (start.0 as usize, start.1 as usize);
        dist[idx(s.0, s.1)] = 0.0;
        heap.push(QueueEntry {
            f: 0.0,
            h: 0.0,
            node: s,
        });
        let mut closed = vec![false; grid.width * grid.height];
        while let Some(QueueEntry { node, .. }) = heap.pop() {
            if closed[idx(node.0, node.1)] {
                continue;
            }
            closed[idx(node.0, node.1)] = true;
            for &(dx, dy, diag) in &NEIGHBORS {
                let (nx, ny) = (node.0 as i64 + dx, node.1 as i64 + dy);
                if !is_free(nx, ny) {
                    continue;
                }
                let n = (nx as usize, ny as usize);
                let step = if diag { SQRT_2 } else { 1.0 };
                let cand = dist[idx(node.0, node.1)] + step;
                if cand < dist[idx(n.0, n.1)] {
                    dist[idx(n.0, n.1)] = cand;
                    let (st, di) = steps[idx(node.0, node.1)];
                    steps[idx(n.0, n.1)] = if diag { (st, di + 1) } else { (st + 1, di) };
                    heap.push(QueueEntry {
                        f: cand,
                        h: 0.0,
                        node: n,
                    });
                }
            }
        }
        let gidx = idx(goal.0 as usize, goal.1 as usize);
        if dist[gidx].is_finite() {
            let (st, di) = steps[gidx];
            Some((st as f64 + di as f64 * SQRT_2) * grid.resolution)
        } else {
            None
        }
    }

    #[test]
    fn astar_matches_dijkstra_on_random_grids() {
        use rand::{Rng, SeedableRng};
        let cfg = GridPlanConfig { inflate_cells: 0 };
        for seed in 0..100u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let w = rng.gen_range(4..=20);
            let h = rng.gen_range(4..=20);
            let mut grid = FloorplanGrid::filled("r", w, h, 1.0, true);
            for y in 0..h {
                for x in 0..w {
                    if rng.gen_bool(0.25) {
                        grid.set(x, y, false);
                    }
                }
            }
            grid.set(0, 0, true);
            grid.set(w - 1, h - 1, true);
            let start = (0i64, 0i64);
            let goal = (w as i64 - 1, h as i64 - 1);
            let oracle = dijkstra_cost(&grid, start, goal);
            let astar = plan_grid_with(&grid, start, goal, &cfg);
            match (oracle, astar) {
                (Some(c), Ok(p)) => assert_eq!(p.cost, c, "seed {seed}"),
                (None, Err(_)) => {}
                (o, a) => panic!("seed {seed}: oracle {o:?} vs astar {a:?}"),
            }
        }
    }
}
