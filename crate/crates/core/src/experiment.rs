//! Flight loop, reward, test phases, metrics and the training schedule.

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::agent::{Agent, AgentError, GreedyPolicy, StepOutcome, Transition};
use crate::config::{FlightConfig, RunConfig};
use crate::nav::{bearing, combine_turn, heading_to_goal};
use crate::nn::{Architecture, NnError};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::sim::{
    apply_action, distance_to_goal, preprocess, reached_goal, render_depth, segment_collides, spawn_start, ActionId,
    ActionSet, CameraModel, FrameStack, Maneuver, MotionConfig, QuadState, Vec3, World,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

/// Progress toward the goal minus the collision penalty.
pub fn reward(d_last: f64, d_now: f64, collided: bool, penalty: f64) -> f64 {
    let r = d_last - d_now;
    if collided {
        r - penalty
    } else {
        r
    }
}

/// Everything a flight needs besides the world and the controller.
#[derive(Debug, Clone)]
pub struct FlightEnv {
    pub actions: ActionSet,
    pub motion: MotionConfig,
    pub camera: CameraModel,
    pub flight: FlightConfig,
    pub frame_size: usize,
    pub stack_depth: usize,
}

impl FlightEnv {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            actions: cfg.actions.clone(),
            motion: cfg.motion,
            camera: cfg.camera,
            flight: cfg.flight,
            frame_size: cfg.network.frame_size,
            stack_depth: cfg.network.stack_depth,
        }
    }

    fn observe(&self, world: &World, state: &QuadState) -> crate::sim::Frame {
        preprocess(&render_depth(world, state, &self.camera), self.frame_size)
    }
}

/// Chooses actions during a flight and optionally learns from the outcome.
pub trait Controller {
    fn select(&mut self, state: &FrameStack, rng: &mut ChaCha8Rng) -> Result<ActionId>;

    fn record(&mut self, _transition: Transition) -> Result<()> {
        Ok(())
    }
}

impl Controller for GreedyPolicy {
    fn select(&mut self, state: &FrameStack, _rng: &mut ChaCha8Rng) -> Result<ActionId> {
        Ok(self.act(state)?)
    }
}

/// Uniformly random actions.
#[derive(Debug, Clone, Copy)]
pub struct RandomController {
    pub num_actions: usize,
}

impl Controller for RandomController {
    fn select(&mut self, _state: &FrameStack, rng: &mut ChaCha8Rng) -> Result<ActionId> {
        Ok(ActionId(rng.random_range(0..self.num_actions)))
    }
}

/// The same action every step.
#[derive(Debug, Clone, Copy)]
pub struct ConstantController(pub ActionId);

impl Controller for ConstantController {
    fn select(&mut self, _state: &FrameStack, _rng: &mut ChaCha8Rng) -> Result<ActionId> {
        Ok(self.0)
    }
}

/// ε-greedy agent that stores every transition and trains on schedule.
pub struct Learner<'a> {
    pub agent: &'a mut Agent,
    pub outcomes: Vec<StepOutcome>,
}

impl<'a> Learner<'a> {
    pub fn new(agent: &'a mut Agent) -> Self {
        Self { agent, outcomes: Vec::new() }
    }
}

impl Controller for Learner<'_> {
    fn select(&mut self, state: &FrameStack, rng: &mut ChaCha8Rng) -> Result<ActionId> {
        Ok(self.agent.act(state, rng)?)
    }

    fn record(&mut self, transition: Transition) -> Result<()> {
        self.outcomes.push(self.agent.observe(transition)?);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlightRecord {
    pub steps: usize,
    pub total_reward: f64,
    pub collided: bool,
    pub reached_goal: bool,
    pub truncated: bool,
    pub rewards: Vec<f64>,
    /// Distance to the goal at spawn and after every step.
    pub distances: Vec<f64>,
    pub final_state: QuadState,
}

impl FlightRecord {
    pub fn reward_per_step(&self) -> f64 {
        self.total_reward / self.steps as f64
    }
}

/// Spawns from `rng` and flies until collision, arrival or the step limit.
pub fn run_flight(env: &FlightEnv, world: &World, ctrl: &mut dyn Controller, rng: &mut ChaCha8Rng) -> Result<FlightRecord> {
    let start = spawn_start(&world.spawn, rng);
    run_flight_from(env, world, ctrl, start, rng)
}

/// Flight from a given start, initially facing the goal.
pub fn run_flight_from(
    env: &FlightEnv,
    world: &World,
    ctrl: &mut dyn Controller,
    start: Vec3,
    rng: &mut ChaCha8Rng,
) -> Result<FlightRecord> {
    let f = &env.flight;
    let mut state = QuadState::new(start, bearing(start, world.goal));
    let mut stack = FrameStack::init(env.observe(world, &state), env.stack_depth);
    let mut d_last = distance_to_goal(state.position, world.goal);
    let mut rewards = Vec::new();
    let mut distances = vec![d_last];
    loop {
        let action = ctrl.select(&stack, rng)?;
        let maneuver = env.actions.decode(action);
        let turn = combine_turn(heading_to_goal(state.position, state.yaw, world.goal), &maneuver);
        let next = apply_action(&state, Maneuver { turn_deg: turn.degrees(), ..maneuver }, 0.0, &env.motion);
        let collided = segment_collides(world, state.position, next.position, f.collision_radius);
        let d_now = distance_to_goal(next.position, world.goal);
        let r = reward(d_last, d_now, collided, f.collision_penalty);
        let arrived = !collided && reached_goal(&next, world, f.goal_threshold);
        rewards.push(r);
        distances.push(d_now);
        let steps = rewards.len();
        let terminal = collided || arrived;
        let truncated = !terminal && steps >= f.max_steps;
        // a terminal next state never feeds a target, so skip rendering it
        let next_stack = if terminal { stack.clone() } else { stack.push(env.observe(world, &next)) };
        ctrl.record(Transition { state: stack, action, reward: r, next_state: next_stack.clone(), terminal })?;
        state = next;
        stack = next_stack;
        d_last = d_now;
        if terminal || truncated {
            return Ok(FlightRecord {
                steps,
                total_reward: rewards.iter().sum(),
                collided,
                reached_goal: arrived,
                truncated,
                rewards,
                distances,
                final_state: state,
            });
        }
    }
}

/// Aggregate of one test phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseMetrics {
    pub flights_trained: usize,
    pub test_flights: usize,
    pub collision_pct: f64,
    pub avg_reward_per_step: f64,
    pub reward_stderr: f64,
}

impl PhaseMetrics {
    /// Panics on an empty slice; a phase always has at least one flight.
    pub fn from_records(flights_trained: usize, records: &[FlightRecord]) -> Self {
        assert!(!records.is_empty(), "test phase needs at least one flight");
        let n = records.len();
        let collisions = records.iter().filter(|r| r.collided).count();
        let means: Vec<f64> = records.iter().map(FlightRecord::reward_per_step).collect();
        let avg = means.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = means.iter().map(|m| (m - avg).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self {
            flights_trained,
            test_flights: n,
            collision_pct: 100.0 * collisions as f64 / n as f64,
            avg_reward_per_step: avg,
            reward_stderr: stderr,
        }
    }
}

pub const CSV_HEADER: &str = "phase,flights_trained,test_flights,collision_pct,avg_reward_per_step,reward_stderr,seed";

pub fn csv_row(phase: usize, m: &PhaseMetrics, seed: u64) -> String {
    format!(
        "{phase},{},{},{},{},{},{seed}",
        m.flights_trained, m.test_flights, m.collision_pct, m.avg_reward_per_step, m.reward_stderr
    )
}

/// Test flights draw their spawn and layout from held-out streams indexed by
/// flight number, so every phase (and every baseline) sees the same flights.
#[derive(Debug, Clone)]
pub struct TestBench {
    pub env: FlightEnv,
    pub world: World,
    pub seed: u64,
    pub layout_shift: f64,
}

impl TestBench {
    pub fn from_config(cfg: &RunConfig, world: World) -> Self {
        Self { env: FlightEnv::from_config(cfg), world, seed: cfg.seed, layout_shift: cfg.experiment.test_layout_shift }
    }

    pub fn world_for(&self, flight: usize) -> World {
        if self.layout_shift == 0.0 {
            return self.world.clone();
        }
        let mut rng = stream_rng(self.seed, Stream::TestLayout, flight as u64);
        self.world.shifted_layout(rng.random_range(-self.layout_shift..=self.layout_shift))
    }

    pub fn flight(&self, ctrl: &mut dyn Controller, flight: usize) -> Result<FlightRecord> {
        let world = self.world_for(flight);
        let mut rng = stream_rng(self.seed, Stream::TestFlight, flight as u64);
        run_flight(&self.env, &world, ctrl, &mut rng)
    }

    pub fn run(&self, ctrl: &mut dyn Controller, flights: usize) -> Result<Vec<FlightRecord>> {
        (0..flights).map(|i| self.flight(ctrl, i)).collect()
    }

    /// Greedy evaluation of a frozen policy; nothing is learned or stored.
    pub fn test_phase(&self, policy: &GreedyPolicy, flights_trained: usize, flights: usize) -> Result<PhaseMetrics> {
        let mut ctrl = policy.clone();
        Ok(PhaseMetrics::from_records(flights_trained, &self.run(&mut ctrl, flights)?))
    }
}

/// Result of a test phase handed to the caller of [`Trainer::run`].
pub struct PhaseReport<'a> {
    pub phase: usize,
    pub metrics: PhaseMetrics,
    pub agent: &'a Agent,
}

/// Sequential training on one world with periodic greedy test phases.
pub struct Trainer {
    cfg: RunConfig,
    world: World,
    env: FlightEnv,
    bench: TestBench,
    agent: Agent,
    flights: usize,
}

impl Trainer {
    pub fn new(cfg: RunConfig, world: World) -> std::result::Result<Self, NnError> {
        let arch: Architecture = cfg.architecture()?;
        let agent = Agent::new(
            arch,
            cfg.agent,
            cfg.epsilon,
            derive_seed(cfg.seed, Stream::Init, 0),
            derive_seed(cfg.seed, Stream::Replay, 0),
        );
        Ok(Self { env: FlightEnv::from_config(&cfg), bench: TestBench::from_config(&cfg, world.clone()), cfg, world, agent, flights: 0 })
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn bench(&self) -> &TestBench {
        &self.bench
    }

    pub fn flights_trained(&self) -> usize {
        self.flights
    }

    /// One learning flight on the training world.
    pub fn train_flight(&mut self) -> Result<(FlightRecord, Vec<StepOutcome>)> {
        let mut rng = stream_rng(self.cfg.seed, Stream::TrainFlight, self.flights as u64);
        let mut learner = Learner::new(&mut self.agent);
        let record = run_flight(&self.env, &self.world, &mut learner, &mut rng)?;
        let outcomes = learner.outcomes;
        self.flights += 1;
        Ok((record, outcomes))
    }

    pub fn test_phase(&self) -> Result<PhaseMetrics> {
        self.bench.test_phase(&self.agent.policy(), self.flights, self.cfg.experiment.test_flights_per_phase)
    }

    /// Trains up to `total_train_flights`, pausing for a test phase after
    /// every `train_flights_per_phase` flights.
    pub fn run<E>(&mut self, mut on_phase: impl FnMut(PhaseReport<'_>) -> std::result::Result<(), E>) -> std::result::Result<(), E>
    where
        E: From<ExperimentError>,
    {
        let x = self.cfg.experiment;
        while self.flights < x.total_train_flights {
            self.train_flight()?;
            if self.flights.is_multiple_of(x.train_flights_per_phase) || self.flights == x.total_train_flights {
                let metrics = self.test_phase()?;
                let phase = self.flights.div_ceil(x.train_flights_per_phase);
                on_phase(PhaseReport { phase, metrics, agent: &self.agent })?;
            }
        }
        Ok(())
    }
}

/// Metrics CSV text for a list of `(phase, metrics)` rows.
pub fn metrics_csv(rows: &[(usize, PhaseMetrics)], seed: u64) -> String {
    let mut out = String::new();
    writeln!(out, "{CSV_HEADER}").unwrap();
    for (phase, m) in rows {
        writeln!(out, "{}", csv_row(*phase, m, seed)).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Aabb, SpawnSpec};
    use rand::SeedableRng;

    fn open_world(goal: Vec3) -> World {
        World {
            ground_z: 0.0,
            far_clip: 100.0,
            goal,
            spawn: SpawnSpec { x: 0.0, y_sigma: 0.0, z: -2.0 },
            boxes: vec![],
        }
    }

    fn small_env() -> FlightEnv {
        let mut cfg = RunConfig::default();
        cfg.camera.width = 16;
        cfg.camera.height = 9;
        cfg.network.frame_size = 8;
        FlightEnv::from_config(&cfg)
    }

    #[test]
    fn reward_examples() {
        assert_eq!(reward(10.0, 7.0, false, 50.0), 3.0);
        assert_eq!(reward(7.0, 10.0, false, 50.0), -3.0);
        assert_eq!(reward(10.0, 9.5, true, 50.0), -49.5);
    }

    #[test]
    fn straight_flight_to_goal() {
        let mut env = small_env();
        // threshold below one step so the flight must cover all three meters
        env.flight.goal_threshold = 0.5;
        let world = open_world(Vec3::new(3.0, 0.0, -2.0));
        let mut ctrl = ConstantController(env.actions.forward());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = run_flight(&env, &world, &mut ctrl, &mut rng).unwrap();
        assert!(r.reached_goal && !r.collided && !r.truncated);
        assert_eq!(r.steps, 3);
        assert!((r.total_reward - 3.0).abs() < 1e-9);
    }

    #[test]
    fn spawn_inside_obstacle_collides_first_step() {
        let env = small_env();
        let mut world = open_world(Vec3::new(30.0, 0.0, -2.0));
        world.boxes.push(Aabb::new(Vec3::new(-5.0, -5.0, -5.0), Vec3::new(5.0, 5.0, -0.5)));
        let mut ctrl = ConstantController(env.actions.forward());
        let r = run_flight(&env, &world, &mut ctrl, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(r.collided && r.steps == 1 && r.total_reward <= -49.0);
    }

    #[test]
    fn step_limit_truncates() {
        let mut env = small_env();
        env.flight.max_steps = 10;
        let world = open_world(Vec3::new(1000.0, 0.0, -2.0));
        let mut ctrl = ConstantController(env.actions.forward());
        let r = run_flight(&env, &world, &mut ctrl, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(r.truncated && !r.collided && !r.reached_goal);
        assert_eq!(r.steps, 10);
    }

    #[test]
    fn random_flights_telescope_and_stay_bounded() {
        let mut env = small_env();
        env.flight.max_steps = 60;
        let world = crate::sim::CorridorSpec::default().build();
        let mut ctrl = RandomController { num_actions: env.actions.len() };
        let hi = env.motion.forward_step + env.motion.climb_step;
        for seed in 0..30 {
            let r = run_flight(&env, &world, &mut ctrl, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!([r.collided, r.reached_goal, r.truncated].iter().filter(|b| **b).count(), 1);
            assert!(r.steps <= 60);
            if !r.collided {
                let telescoped = r.distances[0] - r.distances[r.steps];
                assert!((r.total_reward - telescoped).abs() < 1e-6);
            }
            let per_step = r.reward_per_step();
            assert!(per_step <= hi && per_step >= -50.0 - hi, "{per_step}");
        }
    }

    #[test]
    fn metrics_examples() {
        let rec = |collided: bool, reward: f64, steps: usize| FlightRecord {
            steps,
            total_reward: reward,
            collided,
            reached_goal: !collided,
            truncated: false,
            rewards: vec![],
            distances: vec![],
            final_state: QuadState::new(Vec3::default(), 0.0),
        };
        let clean: Vec<_> = (0..5).map(|_| rec(false, 4.0, 2)).collect();
        let m = PhaseMetrics::from_records(100, &clean);
        assert_eq!((m.collision_pct, m.avg_reward_per_step, m.reward_stderr), (0.0, 2.0, 0.0));

        let mixed: Vec<_> = (0..1000).map(|i| rec(i < 140, 1.0, 1)).collect();
        assert_eq!(PhaseMetrics::from_records(500, &mixed).collision_pct, 14.0);

        let single = PhaseMetrics::from_records(0, &[rec(true, -49.0, 7)]);
        assert_eq!((single.test_flights, single.reward_stderr), (1, 0.0));

        // sample sd of [1, 3] is sqrt(2); stderr = sqrt(2)/sqrt(2) = 1
        let pair = PhaseMetrics::from_records(0, &[rec(false, 1.0, 1), rec(false, 3.0, 1)]);
        assert!((pair.reward_stderr - 1.0).abs() < 1e-15);
    }

    #[test]
    fn csv_layout() {
        let m = PhaseMetrics {
            flights_trained: 100,
            test_flights: 1000,
            collision_pct: 14.0,
            avg_reward_per_step: 0.5,
            reward_stderr: 0.01,
        };
        assert_eq!(metrics_csv(&[(1, m)], 7), format!("{CSV_HEADER}\n1,100,1000,14,0.5,0.01,7\n"));
    }

    #[test]
    fn test_layouts_are_shifted_and_reproducible() {
        let cfg = RunConfig { seed: 5, ..Default::default() };
        let world = crate::sim::CorridorSpec::default().build();
        let bench = TestBench::from_config(&cfg, world.clone());
        assert_eq!(bench.world_for(3), bench.world_for(3));
        assert_ne!(bench.world_for(3), world);
        let moved: Vec<f64> = (0..20)
            .map(|i| bench.world_for(i).boxes.iter().zip(&world.boxes).map(|(a, b)| a.min.x - b.min.x).sum())
            .collect();
        assert!(moved.iter().all(|d| d.abs() <= 2.0 * cfg.experiment.test_layout_shift + 1e-12));
    }
}
