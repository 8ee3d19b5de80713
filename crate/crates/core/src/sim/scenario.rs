//! Scenario scripting and closed-loop episodes: plan → intention → policy →
//! step, with interventions, step-outcome bookkeeping, and demonstration
//! collection.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::expert::{nearest_path_index, pure_pursuit, scripted_expert, ExpertConfig};
use super::observe::{render_observation, CameraConfig};
use super::{
    integrate_odometry, step_world, wrap_angle, AdversaryAgent, OdomDelta, OdometryModel, Prop,
    RobotState, SimError, SimEvent, World, SAFE_CLEARANCE_M,
};
use crate::decision::dataset::{Dataset, DemoRecord};
use crate::decision::net::{DecisionNet, DropoutCtx, NetState};
use crate::decision::tensor::Tensor;
use crate::decision::{CommandIntention, VelocityCommand};
use crate::intention::{intention_plan_for_grid_path, Dlm, IntentionScheduler};
use crate::planner::plan_grid;

pub fn dlm_to_command(dlm: Dlm) -> CommandIntention {
    match dlm {
        Dlm::GoForward => CommandIntention::GoForward,
        Dlm::TurnLeft => CommandIntention::TurnLeft,
        Dlm::TurnRight => CommandIntention::TurnRight,
        Dlm::Stop => CommandIntention::Stop,
        Dlm::Upstairs => CommandIntention::Upstairs,
        Dlm::Linkway => CommandIntention::Linkway,
        Dlm::TakeElevator => CommandIntention::TakeElevator,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdversaryCfg {
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    pub blocks: usize,
    pub trigger_range: f64,
}

fn default_marker_radius() -> f64 {
    0.75
}

fn default_goal_radius() -> f64 {
    0.5
}

/// Scenario description, loadable from JSON. The map is an inline occupancy
/// sketch ('#' occupied); props and agents are placed in metric coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub sketch: Vec<String>,
    /// Metres per sketch cell.
    pub resolution: f64,
    /// x, y, heading.
    pub start: (f64, f64, f64),
    pub goal: (f64, f64),
    #[serde(default)]
    pub props: Vec<Prop>,
    #[serde(default)]
    pub adversary: Option<AdversaryCfg>,
    /// Positions defining the scenario's n steps; empty means a single
    /// reach-the-goal step.
    #[serde(default)]
    pub step_markers: Vec<(f64, f64)>,
    #[serde(default = "default_marker_radius")]
    pub marker_radius: f64,
    #[serde(default = "default_goal_radius")]
    pub goal_radius: f64,
    pub max_ticks: usize,
    /// (σ_t per metre, σ_r per radian); omitted means ideal odometry.
    #[serde(default)]
    pub odometry_sigma: Option<(f64, f64)>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario, SimError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| SimError::BadScenario(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        std::fs::write(path, serde_json::to_string_pretty(self).expect("scenario json"))?;
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        self.step_markers.len().max(1)
    }

    pub fn build_world(&self) -> World {
        let rows: Vec<&str> = self.sketch.iter().map(|s| s.as_str()).collect();
        let mut world = World::new(super::grid_from_sketch(&self.name, &rows, self.resolution));
        world.props = self.props.clone();
        if let Some(a) = &self.adversary {
            world
                .adversaries
                .push(AdversaryAgent::new(a.x, a.y, a.speed, a.blocks, a.trigger_range));
        }
        world
    }
}

/// Everything a policy may look at on one tick. Learned controllers must
/// only use `observation`, `intention`, and the estimated pose; the expert
/// and oracle baselines read the ground-truth fields.
pub struct ControlContext<'a> {
    pub observation: &'a Tensor,
    pub intention: CommandIntention,
    pub pose_est: &'a RobotState,
    pub world: &'a World,
    pub robot: &'a RobotState,
    pub path: &'a [(f64, f64)],
}

pub trait Controller {
    fn act(&mut self, ctx: &ControlContext) -> Result<VelocityCommand, SimError>;
    /// Called at episode start.
    fn reset(&mut self) {}
    fn name(&self) -> &str;
}

/// Ground-truth scripted expert (demonstration source).
pub struct ExpertController {
    pub cfg: ExpertConfig,
}

impl Default for ExpertController {
    fn default() -> Self {
        ExpertController {
            cfg: ExpertConfig::default(),
        }
    }
}

impl Controller for ExpertController {
    fn act(&mut self, ctx: &ControlContext) -> Result<VelocityCommand, SimError> {
        scripted_expert(ctx.world, ctx.path, ctx.robot, &self.cfg)
    }

    fn name(&self) -> &str {
        "expert"
    }
}

/// Pure-pursuit path tracker with no perception at all: follows the planned
/// path and never reacts to unmapped obstacles.
pub struct PathTrackerController {
    pub lookahead_m: f64,
}

impl Default for PathTrackerController {
    fn default() -> Self {
        PathTrackerController { lookahead_m: 0.9 }
    }
}

impl Controller for PathTrackerController {
    fn act(&mut self, ctx: &ControlContext) -> Result<VelocityCommand, SimError> {
        Ok(pure_pursuit(ctx.path, ctx.pose_est, self.lookahead_m))
    }

    fn name(&self) -> &str {
        "path_tracker"
    }
}

/// Learned controller: observation + intention through a trained network,
/// with the Stop override.
pub struct NetController {
    pub net: DecisionNet,
    state: NetState,
    dropout: DropoutCtx,
    label: String,
}

impl NetController {
    pub fn new(net: DecisionNet) -> NetController {
        let state = net.zero_state();
        let label = net.config.kind.name().to_string();
        NetController {
            net,
            state,
            dropout: DropoutCtx::eval(),
            label,
        }
    }
}

impl Controller for NetController {
    fn act(&mut self, ctx: &ControlContext) -> Result<VelocityCommand, SimError> {
        let Some(mode) = ctx.intention.control_mode() else {
            return Ok(VelocityCommand::STOP);
        };
        let (cmd, _) = self
            .net
            .forward(&mut self.state, ctx.observation, mode, &mut self.dropout);
        Ok(cmd)
    }

    fn reset(&mut self) {
        self.state = self.net.zero_state();
    }

    fn name(&self) -> &str {
        &self.label
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: usize,
    pub truth: RobotState,
    pub estimate: RobotState,
    pub control: VelocityCommand,
    pub intention: u8,
    pub events: Vec<SimEvent>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub scenario: String,
    pub policy: String,
    pub seed: u64,
    pub n: usize,
    /// Successful steps.
    pub s: usize,
    pub interventions: usize,
    pub reached_goal: bool,
    pub sim_time_s: f64,
    pub ticks: Vec<TickRecord>,
}

impl TrajectoryLog {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "tick,x,y,heading,est_x,est_y,est_heading,v,theta,intention,events"
        )?;
        for t in &self.ticks {
            let events: Vec<&str> = t
                .events
                .iter()
                .map(|e| match e {
                    SimEvent::Collision => "collision",
                    SimEvent::Intervention => "intervention",
                    SimEvent::Anchored => "anchored",
                })
                .collect();
            writeln!(
                w,
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}",
                t.tick,
                t.truth.x,
                t.truth.y,
                t.truth.heading,
                t.estimate.x,
                t.estimate.y,
                t.estimate.heading,
                t.control.linear,
                t.control.angular,
                t.intention,
                events.join("|"),
            )?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "scenario": self.scenario,
            "policy": self.policy,
            "seed": self.seed,
            "n": self.n,
            "s": self.s,
            "interventions": self.interventions,
            "reached_goal": self.reached_goal,
            "sim_time_s": self.sim_time_s,
            "ticks": self.ticks.len(),
        })
    }

    /// Ground-truth positions, one per tick.
    pub fn positions(&self) -> Vec<(f64, f64)> {
        self.ticks.iter().map(|t| (t.truth.x, t.truth.y)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeOptions {
    pub seed: u64,
    pub camera: CameraConfig,
    /// Record per-tick demonstrations (observation + control).
    pub record_demos: bool,
}

impl EpisodeOptions {
    pub fn new(seed: u64) -> EpisodeOptions {
        EpisodeOptions {
            seed,
            camera: CameraConfig::default(),
            record_demos: false,
        }
    }
}

pub struct EpisodeResult {
    pub log: TrajectoryLog,
    pub demos: Vec<DemoRecord>,
}

/// Runs one closed-loop episode: plan on the static map, schedule
/// intentions along the path, and loop policy → step. A collision triggers
/// an intervention: the step fails and the robot is reset onto the planned
/// path past the obstruction.
pub fn run_episode(
    scenario: &Scenario,
    policy: &mut dyn Controller,
    opts: &EpisodeOptions,
) -> Result<EpisodeResult, SimError> {
    let mut world = scenario.build_world();
    let (sx, sy, sh) = scenario.start;
    let start_cell = world.grid.world_to_cell(sx, sy);
    let goal_cell = world.grid.world_to_cell(scenario.goal.0, scenario.goal.1);
    let grid_path = plan_grid(&world.grid, start_cell, goal_cell)?;
    let path = grid_path.metric_polyline(&world.grid);
    let plan = intention_plan_for_grid_path(
        &grid_path,
        &world.grid,
        3.0 * world.grid.resolution,
        crate::intention::DEFAULT_CURVATURE_THRESHOLD,
    )
    .map_err(|e| SimError::BadScenario(format!("intention planning failed: {e}")))?;
    let mut scheduler = IntentionScheduler::new(plan);

    let mut robot = RobotState {
        x: sx,
        y: sy,
        heading: sh,
    };
    let mut pose_est = robot;
    let mut odometry = match scenario.odometry_sigma {
        Some((st, sr)) => OdometryModel::new(st, sr, opts.seed),
        None => OdometryModel::ideal(),
    };
    policy.reset();

    let mut ticks = Vec::new();
    let mut demos = Vec::new();
    let mut interventions = 0usize;
    let mut interventions_this_step = 0usize;
    let mut s = 0usize;
    let mut next_marker = 0usize;
    let mut reached_goal = false;
    let dt = world.dt;

    for tick in 0..scenario.max_ticks {
        let observation = render_observation(&world, &robot, &opts.camera);
        let dlm = scheduler.current_intention((pose_est.x, pose_est.y));
        let intention = dlm_to_command(dlm);
        let ctx = ControlContext {
            observation: &observation,
            intention,
            pose_est: &pose_est,
            world: &world,
            robot: &robot,
            path: &path,
        };
        let control = policy.act(&ctx)?;
        if opts.record_demos {
            demos.push(DemoRecord {
                timestamp: tick as f64 * dt,
                intention,
                control,
                observation: observation.clone(),
            });
        }
        let before = robot;
        let mut events = step_world(&mut world, &mut robot, control, dt);
        let forward =
            ((robot.x - before.x).powi(2) + (robot.y - before.y).powi(2)).sqrt();
        let rotation = wrap_angle(robot.heading - before.heading);
        let noisy = odometry.read(OdomDelta {
            forward_m: forward,
            rotation_rad: rotation,
        });
        integrate_odometry(&mut pose_est, noisy);

        if events.contains(&SimEvent::Collision) {
            // Intervention: reset onto the planned path, advanced past the
            // obstruction, heading aligned with the path.
            interventions += 1;
            interventions_this_step += 1;
            let mut idx = nearest_path_index(&path, robot.x, robot.y);
            while idx + 1 < path.len()
                && world.clearance(path[idx].0, path[idx].1) < SAFE_CLEARANCE_M + 0.1
            {
                idx += 1;
            }
            let (px, py) = path[idx];
            let heading = if idx + 1 < path.len() {
                let (nx, ny) = path[idx + 1];
                (ny - py).atan2(nx - px)
            } else {
                robot.heading
            };
            robot = RobotState {
                x: px,
                y: py,
                heading,
            };
            // The operator re-localizes the robot during the teleoperation.
            pose_est = robot;
            events.push(SimEvent::Intervention);
        }

        // Step-marker bookkeeping.
        if next_marker < scenario.step_markers.len() {
            let (mx, my) = scenario.step_markers[next_marker];
            if ((robot.x - mx).powi(2) + (robot.y - my).powi(2)).sqrt()
                <= scenario.marker_radius
            {
                if interventions_this_step == 0 {
                    s += 1;
                }
                interventions_this_step = 0;
                next_marker += 1;
            }
        }

        let goal_dist = ((robot.x - scenario.goal.0).powi(2)
            + (robot.y - scenario.goal.1).powi(2))
        .sqrt();
        ticks.push(TickRecord {
            tick,
            truth: robot,
            estimate: pose_est,
            control,
            intention: intention.code(),
            events,
        });
        if goal_dist <= scenario.goal_radius {
            reached_goal = true;
            break;
        }
    }

    // Markerless scenarios have a single reach-the-goal step.
    if scenario.step_markers.is_empty() {
        s = usize::from(reached_goal && interventions == 0);
    }
    let sim_time_s = ticks.len() as f64 * dt;
    Ok(EpisodeResult {
        log: TrajectoryLog {
            scenario: scenario.name.clone(),
            policy: policy.name().to_string(),
            seed: opts.seed,
            n: scenario.n_steps(),
            s,
            interventions,
            reached_goal,
            sim_time_s,
            ticks,
        },
        demos,
    })
}

/// Expert episodes over scenarios × seeds, turned into a demonstration
/// dataset; one sequence per successful episode. Failed or empty episodes
/// are skipped and reported in the returned list.
pub fn collect_demonstrations(
    scenarios: &[Scenario],
    seeds: &[u64],
    camera: &CameraConfig,
) -> Result<(Dataset, Vec<String>), SimError> {
    let side = camera.side;
    let mut dataset = Dataset::new(1, side);
    let mut skipped = Vec::new();
    for scenario in scenarios {
        for &seed in seeds {
            let mut expert = ExpertController::default();
            let opts = EpisodeOptions {
                seed,
                camera: camera.clone(),
                record_demos: true,
            };
            match run_episode(scenario, &mut expert, &opts) {
                Ok(result) => {
                    if result.demos.is_empty() || !result.log.reached_goal {
                        skipped.push(format!(
                            "{} seed {seed}: expert failed to reach the goal",
                            scenario.name
                        ));
                        continue;
                    }
                    dataset.push_sequence(result.demos);
                }
                Err(e) => {
                    skipped.push(format!("{} seed {seed}: {e}", scenario.name));
                }
            }
        }
    }
    Ok((dataset, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corridor_scenario() -> Scenario {
        // 30 m x 4 m free corridor with walls.
        let mut sketch = vec!["#".repeat(150)];
        for _ in 0..18 {
            sketch.push(format!("#{}#", ".".repeat(148)));
        }
        sketch.push("#".repeat(150));
        Scenario {
            name: "corridor".to_string(),
            sketch,
            resolution: 0.2,
            start: (2.0, 2.0, 0.0),
            goal: (28.0, 2.0),
            props: Vec::new(),
            adversary: None,
            step_markers: Vec::new(),
            marker_radius: default_marker_radius(),
            goal_radius: default_goal_radius(),
            max_ticks: 800,
            odometry_sigma: None,
        }
    }

    fn l_corridor_scenario() -> Scenario {
        // Corridor heading east then turning north.
        let mut sketch = Vec::new();
        // Vertical arm occupies columns 80..95 above the horizontal arm.
        sketch.push("#".repeat(100));
        for _ in 0..60 {
            let mut row = vec!['#'; 100];
            for c in 81..94 {
                row[c] = '.';
            }
            sketch.push(row.into_iter().collect());
        }
        for _ in 0..13 {
            sketch.push(format!("#{}#", ".".repeat(98)));
        }
        sketch.push("#".repeat(100));
        Scenario {
            name: "l_corridor".to_string(),
            sketch,
            resolution: 0.2,
            start: (2.0, 1.5, 0.0),
            goal: (17.5, 13.0),
            props: Vec::new(),
            adversary: None,
            step_markers: Vec::new(),
            marker_radius: default_marker_radius(),
            goal_radius: default_goal_radius(),
            max_ticks: 1500,
            odometry_sigma: None,
        }
    }

    #[test]
    fn expert_reaches_goal_without_interventions() {
        let scenario = corridor_scenario();
        let mut expert = ExpertController::default();
        let result = run_episode(&scenario, &mut expert, &EpisodeOptions::new(1)).unwrap();
        assert!(result.log.reached_goal, "expert did not reach the goal");
        assert_eq!(result.log.interventions, 0);
        assert_eq!(result.log.s, 1);
        assert_eq!(result.log.n, 1);
    }

    #[test]
    fn episode_is_deterministic() {
        let scenario = corridor_scenario();
        let run = || {
            let mut expert = ExpertController::default();
            let r = run_episode(&scenario, &mut expert, &EpisodeOptions::new(7)).unwrap();
            let mut buf = Vec::new();
            r.log.write_csv(&mut buf).unwrap();
            buf
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn unmapped_prop_forces_tracker_intervention_but_not_expert() {
        let mut scenario = corridor_scenario();
        scenario.props.push(Prop {
            x: 15.0,
            y: 2.0,
            radius: 0.2,
            low: false,
        });
        let mut tracker = PathTrackerController::default();
        let tracked = run_episode(&scenario, &mut tracker, &EpisodeOptions::new(3)).unwrap();
        assert!(
            tracked.log.interventions >= 1,
            "blind tracker drove through the prop without a collision"
        );
        assert!(tracked.log.reached_goal);
        let mut expert = ExpertController::default();
        let run = run_episode(&scenario, &mut expert, &EpisodeOptions::new(3)).unwrap();
        assert_eq!(run.log.interventions, 0, "expert hit the unmapped prop");
        assert!(run.log.reached_goal);
    }

    #[test]
    fn l_corridor_demonstrations_contain_turns() {
        let camera = CameraConfig {
            side: 24,
            ..CameraConfig::default()
        };
        let (dataset, skipped) =
            collect_demonstrations(&[l_corridor_scenario()], &[1], &camera).unwrap();
        assert!(skipped.is_empty(), "skipped: {skipped:?}");
        assert_eq!(dataset.sequences.len(), 1);
        let counts = dataset.mode_counts();
        assert!(counts.contains_key(&CommandIntention::GoForward.code()));
        assert!(
            counts.contains_key(&CommandIntention::TurnLeft.code()),
            "no turn records; counts {counts:?}"
        );
    }

    #[test]
    fn scenario_json_round_trip() {
        let scenario = corridor_scenario();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        scenario.save(&path).unwrap();
        let back = Scenario::load(&path).unwrap();
        assert_eq!(back.name, scenario.name);
        assert_eq!(back.sketch, scenario.sketch);
        assert_eq!(back.goal, scenario.goal);
    }

    #[test]
    fn step_marker_bookkeeping_counts_failures() {
        let mut scenario = corridor_scenario();
        scenario.step_markers = vec![(10.0, 2.0), (20.0, 2.0), (28.0, 2.0)];
        scenario.props.push(Prop {
            x: 15.0,
            y: 2.0,
            radius: 0.2,
            low: false,
        });
        let mut tracker = PathTrackerController::default();
        let r = run_episode(&scenario, &mut tracker, &EpisodeOptions::new(5)).unwrap();
        assert_eq!(r.log.n, 3);
        assert!(r.log.s < 3, "the blocked step should have failed");
        assert!(r.log.s >= 1, "unobstructed steps should still succeed");
    }
}
