use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EpsilonSchedule, ReplayBuffer, Transition};
use crate::nn::{
    self, backward, forward, init_params, sgd_step, Architecture, GradientSet, NetworkParams, NnError, ParamTensor,
    Scalar, Tensor3,
};
use crate::sim::{ActionId, FrameStack};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("training diverged at step {step}: loss {loss}")]
    Divergence { step: u64, loss: f64 },
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    /// Discount rate γ.
    pub gamma: f64,
    /// SGD learning rate α.
    pub lr: f64,
    pub batch_size: usize,
    /// Environment steps between training steps.
    pub train_every: u64,
    /// Environment steps between target-network copies.
    pub sync_every: u64,
    pub replay_capacity: usize,
    pub min_replay_before_training: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lr: 1e-4,
            batch_size: 32,
            train_every: 50,
            sync_every: 500,
            replay_capacity: 50_000,
            min_replay_before_training: 1_000,
        }
    }
}

/// Online network and its delayed copy used only for targets.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetworkPair {
    pub value_net: NetworkParams<f32>,
    pub target_net: NetworkParams<f32>,
}

impl QNetworkPair {
    /// Both networks start identical.
    pub fn new(params: NetworkParams<f32>) -> Self {
        Self { target_net: params.clone(), value_net: params }
    }
}

pub fn sync_target(pair: &mut QNetworkPair) {
    pair.target_net.clone_from(&pair.value_net);
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// ε-greedy: a uniform random action with probability `eps`, otherwise the
/// greedy one.
pub fn select_action<R: Rng + ?Sized>(
    arch: &Architecture,
    params: &NetworkParams<f32>,
    state: &FrameStack,
    eps: f64,
    rng: &mut R,
) -> Result<ActionId, NnError> {
    if eps > 0.0 && rng.random::<f64>() < eps {
        return Ok(ActionId(rng.random_range(0..arch.output_len())));
    }
    let q = forward(arch, params, &state.to_tensor(), false)?.output;
    Ok(ActionId(argmax(&q)))
}

/// TD targets from the target network only: `r` for terminal transitions,
/// `r + γ max_a Q_target(s', a)` otherwise.
pub fn compute_targets(
    batch: &[&Transition],
    arch: &Architecture,
    target_net: &NetworkParams<f32>,
    gamma: f64,
) -> Result<Vec<f32>, NnError> {
    batch
        .iter()
        .map(|t| {
            if t.terminal {
                return Ok(t.reward as f32);
            }
            let q = forward(arch, target_net, &t.next_state.to_tensor(), false)?.output;
            let best = q.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            Ok(t.reward as f32 + gamma as f32 * best)
        })
        .collect()
}

/// Mean squared TD error over a batch and its gradient. Only the taken
/// action's output receives gradient.
pub fn batch_loss_and_grad<T: Scalar>(
    arch: &Architecture,
    params: &NetworkParams<T>,
    samples: &[(Tensor3<T>, ActionId, T)],
) -> Result<(T, GradientSet<T>), NnError> {
    let n = T::from(samples.len()).unwrap();
    let two = T::one() + T::one();
    let mut grads = GradientSet::zeros_like(params);
    let mut loss = T::zero();
    for (state, action, target) in samples {
        let fwd = forward(arch, params, state, true)?;
        let diff = fwd.output[action.0] - *target;
        loss += diff * diff;
        let mut og = vec![T::zero(); fwd.output.len()];
        og[action.0] = two * diff / n;
        grads.accumulate(&backward(arch, params, &fwd, &og)?)?;
    }
    Ok((loss / n, grads))
}

/// One SGD step of the value network toward targets from the frozen target
/// network. Returns the batch loss before the update.
pub fn train_step(
    arch: &Architecture,
    pair: &mut QNetworkPair,
    batch: &[&Transition],
    cfg: &AgentConfig,
    step: u64,
) -> Result<f32, AgentError> {
    let targets = compute_targets(batch, arch, &pair.target_net, cfg.gamma)?;
    let samples: Vec<_> = batch.iter().zip(targets).map(|(t, y)| (t.state.to_tensor(), t.action, y)).collect();
    let (loss, grads) = batch_loss_and_grad(arch, &pair.value_net, &samples)?;
    if !loss.is_finite() || !grads.is_finite() {
        return Err(AgentError::Divergence { step, loss: loss as f64 });
    }
    sgd_step(&mut pair.value_net, &grads, cfg.lr as f32)?;
    if !pair.value_net.is_finite() {
        return Err(AgentError::Divergence { step, loss: loss as f64 });
    }
    Ok(loss)
}

/// Read-only greedy policy over a parameter snapshot.
#[derive(Debug, Clone)]
pub struct GreedyPolicy {
    pub arch: Architecture,
    pub params: Arc<NetworkParams<f32>>,
}

impl GreedyPolicy {
    pub fn q_values(&self, state: &FrameStack) -> Result<Vec<f32>, NnError> {
        Ok(forward(&self.arch, &self.params, &state.to_tensor(), false)?.output)
    }

    pub fn act(&self, state: &FrameStack) -> Result<ActionId, NnError> {
        Ok(ActionId(argmax(&self.q_values(state)?)))
    }
}

/// What happened on one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub step: u64,
    pub loss: Option<f32>,
    pub synced: bool,
}

/// Learning agent: networks, replay memory, schedule, and the global step
/// counter that drives training and target syncs.
#[derive(Debug, Clone)]
pub struct Agent {
    arch: Architecture,
    cfg: AgentConfig,
    schedule: EpsilonSchedule,
    pair: QNetworkPair,
    replay: ReplayBuffer,
    global_step: u64,
    sampler: ChaCha8Rng,
}

const TARGET_PREFIX: &str = "target.";
const STEP_TENSOR: &str = "global_step";

impl Agent {
    pub fn new(arch: Architecture, cfg: AgentConfig, schedule: EpsilonSchedule, init_seed: u64, replay_seed: u64) -> Self {
        let params = init_params::<f32>(&arch, init_seed);
        Self {
            arch,
            cfg,
            schedule,
            pair: QNetworkPair::new(params),
            replay: ReplayBuffer::new(cfg.replay_capacity),
            global_step: 0,
            sampler: ChaCha8Rng::seed_from_u64(replay_seed),
        }
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn networks(&self) -> &QNetworkPair {
        &self.pair
    }

    pub fn networks_mut(&mut self) -> &mut QNetworkPair {
        &mut self.pair
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn global_step(&self) -> u64 {
        self.global_step
    }

    pub fn epsilon(&self) -> f64 {
        self.schedule.epsilon_at(self.global_step)
    }

    pub fn act<R: Rng + ?Sized>(&self, state: &FrameStack, rng: &mut R) -> Result<ActionId, NnError> {
        select_action(&self.arch, &self.pair.value_net, state, self.epsilon(), rng)
    }

    pub fn policy(&self) -> GreedyPolicy {
        GreedyPolicy { arch: self.arch.clone(), params: Arc::new(self.pair.value_net.clone()) }
    }

    /// Stores a transition and advances the global step. Trains on every
    /// `train_every`-th step once the buffer is warm, and copies the value
    /// network into the target on every `sync_every`-th step.
    pub fn observe(&mut self, t: Transition) -> Result<StepOutcome, AgentError> {
        self.replay.push(t);
        self.global_step += 1;
        let step = self.global_step;
        let mut loss = None;
        if step.is_multiple_of(self.cfg.train_every) {
            if let Ok(batch) =
                self.replay.sample(self.cfg.batch_size, self.cfg.min_replay_before_training, &mut self.sampler)
            {
                loss = Some(train_step(&self.arch, &mut self.pair, &batch, &self.cfg, step)?);
            }
        }
        let synced = step.is_multiple_of(self.cfg.sync_every);
        if synced {
            sync_target(&mut self.pair);
        }
        Ok(StepOutcome { step, loss, synced })
    }

    /// Value network under its plain names, the target under `target.`, and
    /// the global step as four 16-bit limbs (exact in `f32`).
    pub fn checkpoint_tensors(&self) -> Vec<ParamTensor<f32>> {
        let mut out: Vec<_> = self.pair.value_net.tensors().to_vec();
        out.extend(self.pair.target_net.tensors().iter().map(|t| ParamTensor {
            name: format!("{TARGET_PREFIX}{}", t.name),
            ..t.clone()
        }));
        let limbs = (0..4).map(|i| ((self.global_step >> (16 * i)) & 0xFFFF) as f32).collect();
        out.push(ParamTensor { name: STEP_TENSOR.into(), shape: vec![4], data: limbs });
        out
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<(), NnError> {
        let mut buf = Vec::new();
        nn::write_params(&mut buf, &self.checkpoint_tensors())?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    /// Restores networks and step counter. The replay memory is not part of
    /// a checkpoint.
    pub fn restore(&mut self, path: &Path) -> Result<(), NnError> {
        let (value, target, step) = split_checkpoint(path, &self.arch)?;
        self.pair = QNetworkPair { value_net: value, target_net: target.ok_or_else(|| {
            NnError::Format("checkpoint has no target network".into())
        })? };
        self.global_step = step.unwrap_or(0);
        Ok(())
    }
}

type Split = (NetworkParams<f32>, Option<NetworkParams<f32>>, Option<u64>);

fn split_checkpoint(path: &Path, arch: &Architecture) -> Result<Split, NnError> {
    let bytes = std::fs::read(path)?;
    let tensors = nn::read_params(bytes.as_slice())?;
    let (mut value, mut target, mut step) = (Vec::new(), Vec::new(), None);
    for t in tensors {
        if t.name == STEP_TENSOR {
            if t.data.len() != 4 {
                return Err(NnError::Format("malformed global_step tensor".into()));
            }
            step = Some(t.data.iter().enumerate().fold(0u64, |acc, (i, v)| acc | ((*v as u64) << (16 * i))));
        } else if let Some(name) = t.name.strip_prefix(TARGET_PREFIX) {
            target.push(ParamTensor { name: name.to_string(), ..t });
        } else {
            value.push(t);
        }
    }
    let check = |tensors: Vec<ParamTensor<f32>>| -> Result<NetworkParams<f32>, NnError> {
        let params = NetworkParams::new(tensors)?;
        params.check_layout(arch).map_err(|e| NnError::Format(format!("incompatible checkpoint: {e}")))?;
        Ok(params)
    };
    let value = check(value)?;
    let target = if target.is_empty() { None } else { Some(check(target)?) };
    Ok((value, target, step))
}

/// Loads the value network of a checkpoint (or a bare parameter file) as a
/// greedy policy.
pub fn load_policy(path: &Path, arch: &Architecture) -> Result<GreedyPolicy, NnError> {
    let (value, _, _) = split_checkpoint(path, arch)?;
    Ok(GreedyPolicy { arch: arch.clone(), params: Arc::new(value) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerSpec, Shape3};
    use crate::sim::Frame;

    fn stack(values: &[f32]) -> FrameStack {
        // one 2x2 frame per depth slot would need four values each; tiny nets
        // use a single-channel stack
        FrameStack::init(Frame { size: 2, data: values.to_vec().into() }, 1)
    }

    fn tiny_arch(outputs: usize) -> Architecture {
        Architecture::new(
            Shape3::new(2, 2, 1),
            &[LayerSpec::Flatten, LayerSpec::Dense { out: 6 }, LayerSpec::Relu, LayerSpec::Dense { out: outputs }],
        )
        .unwrap()
    }

    fn linear_arch() -> Architecture {
        Architecture::new(Shape3::new(2, 2, 1), &[LayerSpec::Flatten, LayerSpec::Dense { out: 1 }]).unwrap()
    }

    fn transition(state: &[f32], action: usize, reward: f64, terminal: bool) -> Transition {
        Transition {
            state: stack(state),
            action: ActionId(action),
            reward,
            next_state: stack(&[0.5, 0.25, 0.75, 1.0]),
            terminal,
        }
    }

    /// A 13-output network whose output is exactly its bias vector.
    fn bias_only(q: &[f32]) -> (Architecture, NetworkParams<f32>) {
        let arch = Architecture::new(Shape3::new(2, 2, 1), &[LayerSpec::Flatten, LayerSpec::Dense { out: q.len() }])
            .unwrap();
        let mut p = NetworkParams::zeros(&arch);
        p.tensors_mut()[1].data.copy_from_slice(q);
        (arch, p)
    }

    #[test]
    fn greedy_picks_unique_max_and_lowest_tie() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut q = vec![0.0f32; 13];
        q[7] = 3.0;
        let (arch, p) = bias_only(&q);
        let s = stack(&[0.0; 4]);
        assert_eq!(select_action(&arch, &p, &s, 0.0, &mut rng).unwrap(), ActionId(7));
        let mut q = vec![0.0f32; 13];
        q[2] = 1.0;
        q[5] = 1.0;
        let (arch, p) = bias_only(&q);
        assert_eq!(select_action(&arch, &p, &s, 0.0, &mut rng).unwrap(), ActionId(2));
    }

    #[test]
    fn greedy_choice_ignores_constant_shift() {
        let q: Vec<f32> = (0..13).map(|i| ((i * 7) % 13) as f32 * 0.5).collect();
        let shifted: Vec<f32> = q.iter().map(|v| v + 100.0).collect();
        assert_eq!(argmax(&q), argmax(&shifted));
    }

    #[test]
    fn full_exploration_is_uniform() {
        // n = 13000, p = 1/13: sd = sqrt(n p (1 - p)) ~ 30.4, so +-150 is ~5 sd
        let (arch, p) = bias_only(&[0.0; 13]);
        let s = stack(&[0.0; 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut counts = [0usize; 13];
        for _ in 0..13_000 {
            counts[select_action(&arch, &p, &s, 1.0, &mut rng).unwrap().0] += 1;
        }
        for c in counts {
            assert!((850..=1150).contains(&c), "{counts:?}");
        }
    }

    #[test]
    fn target_examples() {
        let arch = linear_arch();
        let mut target = NetworkParams::zeros(&arch);
        let t_term = transition(&[0.0; 4], 0, -49.5, true);
        assert_eq!(compute_targets(&[&t_term], &arch, &target, 0.99).unwrap(), vec![-49.5]);
        // max next Q = bias = 2
        target.tensors_mut()[1].data[0] = 2.0;
        let t = transition(&[0.0; 4], 0, 1.0, false);
        assert_eq!(compute_targets(&[&t], &arch, &target, 0.0).unwrap(), vec![1.0]);
        let y = compute_targets(&[&t], &arch, &target, 0.9).unwrap()[0];
        assert!((y - 2.8).abs() < 1e-6);
    }

    #[test]
    fn exact_predictions_give_zero_loss_and_no_change() {
        let arch = linear_arch();
        let mut pair = QNetworkPair::new(NetworkParams::zeros(&arch));
        pair.value_net.tensors_mut()[1].data[0] = -49.5;
        let t = transition(&[0.3, 0.1, 0.2, 0.9], 0, -49.5, true);
        let before = pair.clone();
        let loss = train_step(&arch, &mut pair, &[&t], &AgentConfig::default(), 1).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(pair, before);
    }

    #[test]
    fn one_step_moves_prediction_toward_target() {
        let arch = linear_arch();
        let mut pair = QNetworkPair::new(init_params(&arch, 3));
        let t = transition(&[0.3, 0.1, 0.2, 0.9], 0, 5.0, true);
        let predict = |p: &NetworkParams<f32>| forward(&arch, p, &t.state.to_tensor(), false).unwrap().output[0];
        let before = (predict(&pair.value_net) - 5.0).abs();
        let cfg = AgentConfig { lr: 0.05, ..AgentConfig::default() };
        train_step(&arch, &mut pair, &[&t], &cfg, 1).unwrap();
        let after = (predict(&pair.value_net) - 5.0).abs();
        assert!(after < before, "{after} !< {before}");
        // the analytic one-dimensional step: e' = e (1 - 2 lr |x|^2) with |x|^2 incl. bias input
        let x2: f32 = [0.3f32, 0.1, 0.2, 0.9].iter().map(|v| v * v).sum::<f32>() + 1.0;
        assert!((after - before * (1.0 - 2.0 * 0.05 * x2)).abs() < 1e-5);
    }

    #[test]
    fn train_step_leaves_target_untouched() {
        let arch = tiny_arch(3);
        let mut pair = QNetworkPair::new(init_params(&arch, 9));
        let target = pair.target_net.clone();
        let t = transition(&[0.3, 0.1, 0.2, 0.9], 1, 1.0, false);
        train_step(&arch, &mut pair, &[&t, &t], &AgentConfig { lr: 0.1, ..Default::default() }, 1).unwrap();
        assert_eq!(pair.target_net, target);
        assert_ne!(pair.value_net, target);
        sync_target(&mut pair);
        assert_eq!(pair.target_net, pair.value_net);
        sync_target(&mut pair);
        assert_eq!(pair.target_net, pair.value_net);
    }

    #[test]
    fn batch_gradient_matches_finite_differences() {
        let arch = tiny_arch(3);
        let mut params = init_params::<f64>(&arch, 21);
        for (i, v) in params.tensors_mut()[1].data.iter_mut().enumerate() {
            *v = 0.05 * i as f64 - 0.1;
        }
        let mk = |v: [f64; 4]| Tensor3::from_vec(Shape3::new(2, 2, 1), v.to_vec()).unwrap();
        let samples = vec![
            (mk([0.3, 0.1, 0.2, 0.9]), ActionId(0), 1.5),
            (mk([0.7, 0.4, 0.05, 0.2]), ActionId(2), -0.5),
            (mk([0.1, 0.9, 0.6, 0.3]), ActionId(1), 0.25),
        ];
        let (_, grads) = batch_loss_and_grad(&arch, &params, &samples).unwrap();
        let h = 1e-4;
        for ti in 0..params.tensors().len() {
            for i in 0..params.tensors()[ti].data.len() {
                let orig = params.tensors()[ti].data[i];
                params.tensors_mut()[ti].data[i] = orig + h;
                let lp = batch_loss_and_grad(&arch, &params, &samples).unwrap().0;
                params.tensors_mut()[ti].data[i] = orig - h;
                let lm = batch_loss_and_grad(&arch, &params, &samples).unwrap().0;
                params.tensors_mut()[ti].data[i] = orig;
                let numeric = (lp - lm) / (2.0 * h);
                let analytic = grads.tensors()[ti].data[i];
                let rel = nn::gradcheck::relative_error(analytic, numeric);
                assert!(rel < 1e-4, "{}[{i}]: {analytic} vs {numeric}", params.tensors()[ti].name);
            }
        }
    }

    #[test]
    fn repeated_transition_loss_never_increases() {
        let arch = tiny_arch(3);
        let mut pair = QNetworkPair::new(init_params(&arch, 4));
        let t = transition(&[0.3, 0.1, 0.2, 0.9], 2, 3.0, true);
        let cfg = AgentConfig { lr: 1e-3, ..Default::default() };
        let mut last = f32::INFINITY;
        for step in 0..100 {
            let loss = train_step(&arch, &mut pair, &[&t], &cfg, step).unwrap();
            assert!(loss <= last, "step {step}: {loss} > {last}");
            last = loss;
        }
    }

    #[test]
    fn divergence_is_reported() {
        let arch = linear_arch();
        let mut pair = QNetworkPair::new(init_params(&arch, 1));
        let t = transition(&[0.3, 0.1, 0.2, 0.9], 0, f64::INFINITY, true);
        let err = train_step(&arch, &mut pair, &[&t], &AgentConfig::default(), 7).unwrap_err();
        assert!(matches!(err, AgentError::Divergence { step: 7, .. }));
    }

    #[test]
    fn observe_trains_and_syncs_on_schedule() {
        let arch = tiny_arch(3);
        let cfg = AgentConfig { train_every: 5, sync_every: 20, min_replay_before_training: 12, batch_size: 2, ..Default::default() };
        let mut agent = Agent::new(arch, cfg, EpsilonSchedule::default(), 1, 2);
        let mut trained = Vec::new();
        for i in 0..60 {
            let out = agent.observe(transition(&[0.1, 0.2, 0.3, 0.4], i % 3, 1.0, false)).unwrap();
            if out.loss.is_some() {
                trained.push(out.step);
            }
            assert_eq!(out.synced, out.step.is_multiple_of(20));
            if out.synced {
                assert_eq!(agent.networks().target_net, agent.networks().value_net);
            }
        }
        assert_eq!(trained, vec![15, 20, 25, 30, 35, 40, 45, 50, 55, 60]);
    }

    #[test]
    fn checkpoint_restores_networks_and_step() {
        let arch = tiny_arch(3);
        let cfg = AgentConfig { train_every: 1, min_replay_before_training: 1, batch_size: 1, lr: 0.1, ..Default::default() };
        let mut agent = Agent::new(arch.clone(), cfg, EpsilonSchedule::default(), 1, 2);
        for _ in 0..3 {
            agent.observe(transition(&[0.1, 0.2, 0.3, 0.4], 1, 1.0, false)).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.dqnav");
        agent.save_checkpoint(&path).unwrap();
        let mut fresh = Agent::new(arch.clone(), cfg, EpsilonSchedule::default(), 99, 2);
        fresh.restore(&path).unwrap();
        assert_eq!(fresh.networks(), agent.networks());
        assert_eq!(fresh.global_step(), 3);
        let policy = load_policy(&path, &arch).unwrap();
        assert_eq!(*policy.params, agent.networks().value_net);
        assert!(matches!(load_policy(&path, &tiny_arch(4)), Err(NnError::Format(_))));
    }
}
