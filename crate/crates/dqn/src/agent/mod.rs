//! Deep Q-learning control: epsilon-greedy action selection with linear
//! annealing, reward clipping, frame skipping, Bellman target construction,
//! and the per-decision minibatch update.
//!
//! Targets are bootstrapped from the current parameters but held fixed when
//! differentiating — no gradient flows through the target side of the
//! squared error.

pub mod tabular;

use crate::env::{Environment, StepResult};
use crate::error::{Error, Result};
use crate::nn::{qnet_backward, qnet_forward, QNetParams};
use crate::optim::{rmsprop_step, RmsPropState};
use crate::preprocess::PhiState;
use crate::replay::{ReplayMemory, Transition};
use crate::tensor::{Scalar, Tensor};
use rand::Rng;

/// Exploration anneal length used with the full-scale profile.
pub const FULL_SCALE_ANNEAL_FRAMES: u64 = 1_000_000;

/// Linear anneal of the exploration rate from `start` to `end` over
/// `anneal_frames` emulator frames, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub anneal_frames: u64,
}

impl Default for EpsilonSchedule {
    /// Desk-scale defaults: 1 → 0.1 over 100k frames.
    fn default() -> Self {
        EpsilonSchedule {
            start: 1.0,
            end: 0.1,
            anneal_frames: 100_000,
        }
    }
}

impl EpsilonSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.end && self.end <= self.start && self.start <= 1.0) {
            return Err(Error::Config(format!(
                "epsilon schedule must satisfy 0 <= end <= start <= 1, got start {} end {}",
                self.start, self.end
            )));
        }
        if self.anneal_frames == 0 {
            return Err(Error::Config("anneal_frames must be positive".into()));
        }
        Ok(())
    }
}

/// Exploration rate after `frame_count` emulator frames.
pub fn epsilon_at(schedule: &EpsilonSchedule, frame_count: u64) -> f64 {
    if frame_count >= schedule.anneal_frames {
        schedule.end
    } else {
        let t = frame_count as f64 / schedule.anneal_frames as f64;
        schedule.start + (schedule.end - schedule.start) * t
    }
}

/// Maps a reward to its sign: positive → 1, negative → −1, zero stays 0.
pub fn clip_reward(r: f64) -> f64 {
    if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Control settings of the training loop.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub gamma: f64,
    pub frame_skip: u32,
    pub clip_rewards: bool,
    pub batch_size: usize,
    pub warmup_size: usize,
    pub schedule: EpsilonSchedule,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 0.99,
            frame_skip: 4,
            clip_rewards: true,
            batch_size: 32,
            warmup_size: 1000,
            schedule: EpsilonSchedule::default(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            problems.push(format!("gamma must be in (0,1], got {}", self.gamma));
        }
        if self.frame_skip == 0 {
            problems.push("frame_skip must be at least 1".to_string());
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be at least 1".to_string());
        }
        if self.warmup_size == 0 {
            problems.push("warmup_size must be at least 1".to_string());
        }
        if let Err(e) = self.schedule.validate() {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// Index of the largest value; ties break to the lowest index.
pub fn argmax_tie_low<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Packs stacked observations into a `[B,C,H,W]` network batch.
pub fn phi_batch<T: Scalar>(
    phis: &[&PhiState],
    params: &QNetParams<T>,
) -> Result<Tensor<T>> {
    let g = params.geometry();
    if phis.is_empty() {
        return Err(Error::Input("cannot build an empty batch".into()));
    }
    for phi in phis {
        if phi.depth() != g.input_channels
            || phi.height() != g.input_height
            || phi.width() != g.input_width
        {
            return Err(Error::Shape(format!(
                "observation stack {}x{}x{} does not match network input {}x{}x{}",
                phi.depth(),
                phi.height(),
                phi.width(),
                g.input_channels,
                g.input_height,
                g.input_width
            )));
        }
    }
    let n = g.input_channels * g.input_height * g.input_width;
    let mut data = vec![T::zero(); phis.len() * n];
    for (i, phi) in phis.iter().enumerate() {
        phi.write_normalized(&mut data[i * n..(i + 1) * n]);
    }
    Tensor::from_vec([phis.len(), g.input_channels, g.input_height, g.input_width], data)
}

/// Epsilon-greedy action choice: with probability `eps` a uniform action
/// (without evaluating the network), otherwise the argmax of the Q-row with
/// ties broken toward the lowest action index.
pub fn select_action<T: Scalar, R: Rng>(
    params: &QNetParams<T>,
    phi: &PhiState,
    eps: f64,
    rng: &mut R,
) -> Result<usize> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::Input(format!("epsilon must be in [0,1], got {eps}")));
    }
    let num_actions = params.geometry().num_actions;
    if rng.gen::<f64>() < eps {
        return Ok(rng.gen_range(0..num_actions));
    }
    let q = qnet_forward(params, &phi_batch(&[phi], params)?)?;
    Ok(argmax_tie_low(q.data()))
}

/// Repeats `action` for up to `k` environment ticks, stopping early on
/// terminal. Per-tick rewards are summed and, when `clip` is set, clipped
/// once at the end. Returns the final tick's result and the number of ticks
/// executed.
pub fn skip_step(
    env: &mut dyn Environment,
    action: usize,
    k: u32,
    clip: bool,
) -> Result<(StepResult, u32)> {
    assert!(k >= 1, "frame skip must be at least 1");
    let mut total = 0.0;
    let mut ticks = 0;
    let mut last = None;
    for _ in 0..k {
        let r = env.step(action)?;
        ticks += 1;
        total += r.reward;
        let done = r.terminal;
        last = Some(r);
        if done {
            break;
        }
    }
    let mut result = last.expect("at least one tick executed");
    result.reward = if clip { clip_reward(total) } else { total };
    Ok((result, ticks))
}

/// The two-case target rule: a terminal transition is worth its reward, a
/// non-terminal one bootstraps from the best next-state value.
pub fn bellman_target(reward: f64, terminal: bool, gamma: f64, max_next_q: f64) -> f64 {
    if terminal {
        reward
    } else {
        reward + gamma * max_next_q
    }
}

/// Targets `y_j` for a minibatch, bootstrapped from the current parameters.
pub fn compute_targets<T: Scalar>(
    params: &QNetParams<T>,
    batch: &[Transition],
    gamma: f64,
) -> Result<Tensor<T>> {
    if batch.is_empty() {
        return Err(Error::Input("target batch must be nonempty".into()));
    }
    let after: Vec<&PhiState> = batch.iter().map(|t| &t.phi_after).collect();
    let q_next = qnet_forward(params, &phi_batch(&after, params)?)?;
    let a_n = params.geometry().num_actions;
    let mut targets = Vec::with_capacity(batch.len());
    for (j, t) in batch.iter().enumerate() {
        let row = &q_next.data()[j * a_n..(j + 1) * a_n];
        let max_next = row[argmax_tie_low(row)].to_f64().unwrap();
        targets.push(T::from_f64(bellman_target(
            t.reward, t.terminal, gamma, max_next,
        )));
    }
    Tensor::from_vec([batch.len()], targets)
}

/// One minibatch update per the replay-driven loop: skipped (`None`) while
/// the memory holds fewer than `warmup_size` transitions, otherwise samples
/// a batch, builds targets, backpropagates, and applies RMSProp. Returns the
/// minibatch loss.
pub fn train_step<T: Scalar, R: Rng>(
    params: &mut QNetParams<T>,
    rms: &mut RmsPropState<T>,
    memory: &ReplayMemory<Transition>,
    config: &AgentConfig,
    rng: &mut R,
) -> Result<Option<T>> {
    if memory.len() < config.warmup_size {
        return Ok(None);
    }
    let batch = memory.sample(config.batch_size, rng)?;
    let targets = compute_targets(params, &batch, config.gamma)?;
    let before: Vec<&PhiState> = batch.iter().map(|t| &t.phi_before).collect();
    let inputs = phi_batch(&before, params)?;
    let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
    let (loss, grads) = qnet_backward(params, &inputs, &actions, &targets)?;
    rmsprop_step(params, &grads, rms)?;
    Ok(Some(loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Catch, TinyMdp, TinyMdpEnv};
    use crate::nn::{finite_diff_grad, init_params, max_relative_error, ConvSpec, Geometry};
    use crate::optim::RmsPropHyper;
    use crate::preprocess::{phi_append, PreprocConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn full_scale_schedule() -> EpsilonSchedule {
        EpsilonSchedule {
            start: 1.0,
            end: 0.1,
            anneal_frames: FULL_SCALE_ANNEAL_FRAMES,
        }
    }

    fn tiny_geometry() -> Geometry {
        Geometry {
            input_channels: 2,
            input_height: 6,
            input_width: 6,
            conv1: ConvSpec {
                out_channels: 2,
                kernel: 3,
                stride: 1,
            },
            conv2: ConvSpec {
                out_channels: 1,
                kernel: 2,
                stride: 1,
            },
            hidden: 6,
            num_actions: 3,
        }
    }

    fn phi_of(bytes: &[u8], side: usize, depth: usize) -> PhiState {
        let mut cfg = PreprocConfig::identity(side, side);
        cfg.stack_depth = depth;
        let frame =
            crate::env::Frame::new(side, side, 1, bytes.to_vec()).unwrap();
        phi_append(None, &frame, &cfg).unwrap()
    }

    fn random_phi(side: usize, depth: usize, rng: &mut ChaCha8Rng) -> PhiState {
        let mut cfg = PreprocConfig::identity(side, side);
        cfg.stack_depth = depth;
        let mut state: Option<PhiState> = None;
        for _ in 0..depth {
            let frame = crate::env::Frame::new(
                side,
                side,
                1,
                (0..side * side).map(|_| rng.gen::<u8>()).collect(),
            )
            .unwrap();
            state = Some(phi_append(state.as_ref(), &frame, &cfg).unwrap());
        }
        state.unwrap()
    }

    fn random_transition(
        side: usize,
        depth: usize,
        actions: usize,
        terminal: bool,
        rng: &mut ChaCha8Rng,
    ) -> Transition {
        Transition {
            phi_before: random_phi(side, depth, rng),
            action: rng.gen_range(0..actions),
            reward: [0.0, 1.0, -1.0][rng.gen_range(0..3)],
            phi_after: random_phi(side, depth, rng),
            terminal,
        }
    }

    #[test]
    fn epsilon_anneals_linearly_then_holds() {
        let s = full_scale_schedule();
        assert_eq!(epsilon_at(&s, 0), 1.0);
        assert!((epsilon_at(&s, 500_000) - 0.55).abs() < 1e-12);
        assert_eq!(epsilon_at(&s, 1_000_000), 0.1);
        assert_eq!(epsilon_at(&s, 2_000_000), 0.1);
    }

    #[test]
    fn epsilon_is_non_increasing() {
        let s = EpsilonSchedule::default();
        let mut prev = f64::INFINITY;
        for f in (0..200_000).step_by(997) {
            let e = epsilon_at(&s, f);
            assert!(e <= prev);
            prev = e;
        }
    }

    #[test]
    fn reward_clipping_maps_to_signs_and_is_idempotent() {
        assert_eq!(clip_reward(7.0), 1.0);
        assert_eq!(clip_reward(0.0), 0.0);
        assert_eq!(clip_reward(-100.0), -1.0);
        for r in [-3.5, -1.0, -1e-9, 0.0, 1e-9, 0.2, 1.0, 99.0] {
            assert_eq!(clip_reward(clip_reward(r)), clip_reward(r));
        }
    }

    #[test]
    fn argmax_breaks_ties_toward_the_lowest_index() {
        assert_eq!(argmax_tie_low(&[0.1, 0.9, 0.3]), 1);
        assert_eq!(argmax_tie_low(&[0.5, 0.5, 0.1]), 0);
        assert_eq!(argmax_tie_low(&[2.0]), 0);
    }

    #[test]
    fn argmax_is_invariant_to_shifts_and_positive_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let row: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let base = argmax_tie_low(&row);
            let shifted: Vec<f64> = row.iter().map(|v| v + 17.25).collect();
            let scaled: Vec<f64> = row.iter().map(|v| v * 3.5).collect();
            assert_eq!(argmax_tie_low(&shifted), base);
            assert_eq!(argmax_tie_low(&scaled), base);
        }
    }

    #[test]
    fn greedy_selection_is_deterministic_and_uses_the_argmax() {
        let g = tiny_geometry();
        let params = init_params::<f32>(g, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let phi = random_phi(6, 2, &mut rng);
        let q = qnet_forward(&params, &phi_batch(&[&phi], &params).unwrap()).unwrap();
        let expect = argmax_tie_low(q.data());
        for _ in 0..10 {
            assert_eq!(select_action(&params, &phi, 0.0, &mut rng).unwrap(), expect);
        }
    }

    #[test]
    fn full_exploration_is_uniform_within_five_sigma() {
        let g = tiny_geometry();
        let params = init_params::<f32>(g, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let phi = random_phi(6, 2, &mut rng);
        let draws = 100_000;
        let mut counts = [0u32; 3];
        for _ in 0..draws {
            counts[select_action(&params, &phi, 1.0, &mut rng).unwrap()] += 1;
        }
        let p = 1.0 / 3.0;
        let expect = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for &c in &counts {
            assert!((c as f64 - expect).abs() <= 5.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn invalid_epsilon_is_an_input_error() {
        let g = tiny_geometry();
        let params = init_params::<f32>(g, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let phi = random_phi(6, 2, &mut rng);
        assert!(matches!(
            select_action(&params, &phi, 1.5, &mut rng),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn skip_one_equals_a_single_clipped_step() {
        let mut a = Catch::new();
        let mut b = Catch::new();
        a.reset(11);
        b.reset(11);
        loop {
            let (skip, ticks) = skip_step(&mut a, 2, 1, true).unwrap();
            let plain = b.step(2).unwrap();
            assert_eq!(ticks, 1);
            assert_eq!(skip.frame, plain.frame);
            assert_eq!(skip.terminal, plain.terminal);
            assert_eq!(skip.reward, clip_reward(plain.reward));
            if skip.terminal {
                break;
            }
        }
    }

    #[test]
    fn skip_stops_early_on_terminal() {
        // two steps to the absorbing state, then the skip must stop
        let mdp = TinyMdp::new(
            3,
            2,
            vec![1, 1, 2, 2, 2, 2],
            vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0],
            &[2],
            0.9,
        )
        .unwrap();
        let mut env = TinyMdpEnv::new(mdp, Some(0), 50).unwrap();
        env.reset(0);
        let (result, ticks) = skip_step(&mut env, 0, 4, true).unwrap();
        assert_eq!(ticks, 2);
        assert!(result.terminal);
        assert_eq!(result.reward, 1.0);
    }

    #[test]
    fn skip_sums_rewards_then_clips_once() {
        // per-tick rewards 0,0,1,0 along a five-state corridor
        let mdp = TinyMdp::new(
            5,
            2,
            vec![1, 1, 2, 2, 3, 3, 4, 4, 4, 4],
            vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            &[],
            0.9,
        )
        .unwrap();
        let mut env = TinyMdpEnv::new(mdp, Some(0), 50).unwrap();
        env.reset(0);
        let (clipped, ticks) = skip_step(&mut env, 0, 4, true).unwrap();
        assert_eq!(ticks, 4);
        assert_eq!(clipped.reward, 1.0);

        env.reset(0);
        let (raw, _) = skip_step(&mut env, 0, 4, false).unwrap();
        assert_eq!(raw.reward, 1.0);
    }

    #[test]
    fn terminal_targets_ignore_the_successor_state() {
        let g = tiny_geometry();
        let params = init_params::<f64>(g, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut t = random_transition(6, 2, 3, true, &mut rng);
        t.reward = 1.0;
        let y1 = compute_targets(&params, std::slice::from_ref(&t), 0.9).unwrap();
        t.phi_after = random_phi(6, 2, &mut rng);
        let y2 = compute_targets(&params, std::slice::from_ref(&t), 0.9).unwrap();
        assert_eq!(y1.data(), &[1.0]);
        assert_eq!(y2.data(), &[1.0]);
    }

    #[test]
    fn bellman_target_hand_example_and_degenerate_gamma() {
        assert!((bellman_target(0.0, false, 0.9, 0.5) - 0.45).abs() < 1e-15);
        assert_eq!(bellman_target(0.7, false, 0.0, 123.0), 0.7);
        assert_eq!(bellman_target(-1.0, true, 0.9, 123.0), -1.0);
    }

    #[test]
    fn targets_bootstrap_from_the_best_next_action() {
        let g = tiny_geometry();
        let params = init_params::<f64>(g, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let batch: Vec<Transition> = (0..5)
            .map(|i| random_transition(6, 2, 3, i == 2, &mut rng))
            .collect();
        let gamma = 0.9;
        let targets = compute_targets(&params, &batch, gamma).unwrap();
        for (j, t) in batch.iter().enumerate() {
            let q = qnet_forward(&params, &phi_batch(&[&t.phi_after], &params).unwrap()).unwrap();
            let max_next = q.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let expect = if t.terminal {
                t.reward
            } else {
                t.reward + gamma * max_next
            };
            assert!((targets.data()[j] - expect).abs() < 1e-12);
        }
        let zero_gamma = compute_targets(&params, &batch, 0.0).unwrap();
        for (j, t) in batch.iter().enumerate() {
            assert_eq!(zero_gamma.data()[j], t.reward);
        }
    }

    #[test]
    fn gradients_treat_targets_as_constants() {
        // Perturbing a successor state changes the target, but gradients
        // remain the exact derivative of the loss with that target frozen.
        let g = tiny_geometry();
        let params = init_params::<f64>(g, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut t = random_transition(6, 2, 3, false, &mut rng);
        let y1 = compute_targets(&params, std::slice::from_ref(&t), 0.9).unwrap();
        t.phi_after = random_phi(6, 2, &mut rng);
        let y2 = compute_targets(&params, std::slice::from_ref(&t), 0.9).unwrap();
        assert_ne!(y1.data(), y2.data());

        let inputs = phi_batch(&[&t.phi_before], &params).unwrap();
        let actions = [t.action];
        let (_, analytic) = qnet_backward(&params, &inputs, &actions, &y2).unwrap();
        let numeric = finite_diff_grad(&params, &inputs, &actions, &y2, 1e-5).unwrap();
        assert!(max_relative_error(&analytic, &numeric) < 1e-4);
    }

    #[test]
    fn train_step_skips_below_warmup_without_touching_anything() {
        let g = tiny_geometry();
        let mut params = init_params::<f32>(g, 14).unwrap();
        let before = params.clone();
        let mut rms = RmsPropState::new(&g, RmsPropHyper::default()).unwrap();
        let mut memory = ReplayMemory::new(100).unwrap();
        let mut fill_rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..5 {
            memory.push(random_transition(6, 2, 3, false, &mut fill_rng));
        }
        let config = AgentConfig {
            warmup_size: 10,
            batch_size: 4,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let rng_before = rng.clone();
        let out = train_step(&mut params, &mut rms, &memory, &config, &mut rng).unwrap();
        assert!(out.is_none());
        assert_eq!(params, before);
        assert_eq!(rng, rng_before);
    }

    #[test]
    fn train_step_is_deterministic() {
        let g = tiny_geometry();
        let mut fill_rng = ChaCha8Rng::seed_from_u64(17);
        let mut memory = ReplayMemory::new(100).unwrap();
        for i in 0..20 {
            memory.push(random_transition(6, 2, 3, i % 7 == 0, &mut fill_rng));
        }
        let config = AgentConfig {
            warmup_size: 10,
            batch_size: 8,
            ..Default::default()
        };
        let mut pa = init_params::<f32>(g, 18).unwrap();
        let mut pb = pa.clone();
        let mut ra = RmsPropState::new(&g, RmsPropHyper::default()).unwrap();
        let mut rb = ra.clone();
        let mut rng_a = ChaCha8Rng::seed_from_u64(19);
        let mut rng_b = ChaCha8Rng::seed_from_u64(19);
        let la = train_step(&mut pa, &mut ra, &memory, &config, &mut rng_a).unwrap();
        let lb = train_step(&mut pb, &mut rb, &memory, &config, &mut rng_b).unwrap();
        assert_eq!(la, lb);
        assert_eq!(pa, pb);
        assert_eq!(ra, rb);
    }

    #[test]
    fn phi_batch_rejects_mismatched_stacks() {
        let g = tiny_geometry();
        let params = init_params::<f32>(g, 20).unwrap();
        let phi = phi_of(&vec![0u8; 25], 5, 2);
        assert!(matches!(
            phi_batch(&[&phi], &params),
            Err(Error::Shape(_))
        ));
    }
}
