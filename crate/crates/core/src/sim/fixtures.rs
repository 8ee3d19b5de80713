//! Built-in scenario fixtures: five navigation task maps (A–E), the
//! blind-spot corridor with low obstacles, and the L-corridor used for
//! demonstration collection. All maps are hand-sketched occupancy grids at
//! 0.2 m resolution.

use super::scenario::Scenario;
use super::Prop;

const RES: f64 = 0.2;

fn filled(width: usize, height: usize) -> Vec<Vec<u8>> {
    vec![vec![b'#'; width]; height]
}

/// Carves rows `r0..r1` × cols `c0..c1` free.
fn carve(rows: &mut [Vec<u8>], r0: usize, r1: usize, c0: usize, c1: usize) {
    for row in rows.iter_mut().take(r1).skip(r0) {
        for cell in row.iter_mut().take(c1).skip(c0) {
            *cell = b'.';
        }
    }
}

fn finish(mut rows: Vec<Vec<u8>>) -> Vec<String> {
    // Row index above counts up from y = 0; sketches list the top row
    // first, so flip before rendering.
    rows.reverse();
    rows.into_iter()
        .map(|r| String::from_utf8(r).expect("ascii sketch"))
        .collect()
}

fn corridor_sketch(length_cells: usize, width_cells: usize) -> Vec<String> {
    let mut rows = filled(length_cells, width_cells + 2);
    carve(&mut rows, 1, width_cells + 1, 1, length_cells - 1);
    finish(rows)
}

fn scenario(name: &str, sketch: Vec<String>, start: (f64, f64, f64), goal: (f64, f64)) -> Scenario {
    Scenario {
        name: name.to_string(),
        sketch,
        resolution: RES,
        start,
        goal,
        props: Vec::new(),
        adversary: None,
        step_markers: Vec::new(),
        marker_radius: 0.75,
        goal_radius: 0.5,
        max_ticks: 1500,
        odometry_sigma: None,
    }
}

/// Task A: straight 30 m corridor.
pub fn task_a() -> Scenario {
    scenario(
        "task_a_corridor",
        corridor_sketch(150, 18),
        (2.0, 2.0, 0.0),
        (28.0, 2.0),
    )
}

/// Task B: L-shaped corridor with one 90° turn.
pub fn task_b() -> Scenario {
    // Horizontal arm along the top, vertical arm descending on the right.
    let mut rows = filled(100, 75);
    carve(&mut rows, 1, 14, 1, 94);
    carve(&mut rows, 1, 74, 81, 94);
    scenario(
        "task_b_l_corridor",
        finish(rows),
        (1.6, 1.5, 0.0),
        (17.5, 14.0),
    )
}

/// Task C: corridor with two unmapped props to slalom around.
pub fn task_c() -> Scenario {
    let mut s = scenario(
        "task_c_slalom",
        corridor_sketch(150, 18),
        (2.0, 2.0, 0.0),
        (28.0, 2.0),
    );
    s.props = vec![
        Prop {
            x: 10.0,
            y: 1.7,
            radius: 0.18,
            low: false,
        },
        Prop {
            x: 18.0,
            y: 2.3,
            radius: 0.18,
            low: false,
        },
    ];
    s
}

fn zigzag_sketch() -> Vec<String> {
    // Three horizontal arms joined by two vertical arms: an S-shaped route
    // with four 90° turns.
    let mut rows = filled(100, 100);
    carve(&mut rows, 4, 14, 4, 96); // top arm, eastbound
    carve(&mut rows, 4, 54, 84, 96); // right arm, southbound
    carve(&mut rows, 44, 54, 4, 96); // middle arm, westbound
    carve(&mut rows, 44, 96, 4, 16); // left arm, southbound
    carve(&mut rows, 86, 96, 4, 96); // bottom arm, eastbound
    finish(rows)
}

/// Task D: S-shaped corridor with four turns.
pub fn task_d() -> Scenario {
    scenario(
        "task_d_zigzag",
        zigzag_sketch(),
        (1.8, 1.8, 0.0),
        (18.4, 18.2),
    )
}

/// Task E: the same maze with unmapped props at the first and third inside
/// corners — the perception-free path tracker cuts those corners straight
/// into them, while a perceptive controller swings wide.
pub fn task_e() -> Scenario {
    let mut s = scenario("task_e_maze", zigzag_sketch(), (1.8, 1.8, 0.0), (18.4, 18.2));
    s.name = "task_e_maze".to_string();
    s.props = vec![
        // Inside corner of the top-arm → right-arm turn.
        Prop {
            x: 17.2,
            y: 2.9,
            radius: 0.45,
            low: false,
        },
        // Inside corner of the middle-arm → left-arm turn.
        Prop {
            x: 3.2,
            y: 10.9,
            radius: 0.45,
            low: false,
        },
    ];
    s
}

/// Blind-spot corridor: low props on a straight run. Low props vanish from
/// the camera inside its blind range, so memoryless controllers lose them
/// exactly when avoidance matters. Each prop sits between two of the five
/// step markers.
pub fn blind_spot() -> Scenario {
    let mut s = scenario(
        "blind_spot_corridor",
        corridor_sketch(150, 18),
        (2.0, 2.0, 0.0),
        (28.5, 2.0),
    );
    s.props = [8.0, 14.0, 20.0]
        .iter()
        .map(|&x| Prop {
            x,
            y: 2.0,
            radius: 0.3,
            low: true,
        })
        .collect();
    s.step_markers = vec![(5.0, 2.0), (11.0, 2.0), (17.0, 2.0), (23.0, 2.0), (27.5, 2.0)];
    s
}

/// L-corridor used for demonstration collection (forward plus one turn).
pub fn l_corridor() -> Scenario {
    let mut s = task_b();
    s.name = "l_corridor".to_string();
    s
}

/// The five task fixtures in order.
pub fn all_tasks() -> Vec<Scenario> {
    vec![task_a(), task_b(), task_c(), task_d(), task_e()]
}

/// Looks up a built-in scenario by name.
pub fn builtin(name: &str) -> Option<Scenario> {
    match name {
        "task_a_corridor" | "task_a" => Some(task_a()),
        "task_b_l_corridor" | "task_b" => Some(task_b()),
        "task_c_slalom" | "task_c" => Some(task_c()),
        "task_d_zigzag" | "task_d" => Some(task_d()),
        "task_e_maze" | "task_e" => Some(task_e()),
        "blind_spot_corridor" | "blind_spot" => Some(blind_spot()),
        "l_corridor" => Some(l_corridor()),
        _ => None,
    }
}

/// Names accepted by [`builtin`] (canonical forms).
pub const BUILTIN_NAMES: &[&str] = &[
    "task_a_corridor",
    "task_b_l_corridor",
    "task_c_slalom",
    "task_d_zigzag",
    "task_e_maze",
    "blind_spot_corridor",
    "l_corridor",
];
