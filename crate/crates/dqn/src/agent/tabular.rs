//! The replay-driven Q-learning loop instantiated with a lookup table
//! instead of the conv net: states arrive as one-hot frames from a
//! [`TinyMdpEnv`], pass through the same observation pipeline and replay
//! memory, targets use the same two-case rule, and updates use the same
//! RMSProp kernel. With this exact representation the learned table must
//! converge to the value-iteration solution, which makes the loop's wiring
//! testable end to end.

use super::{argmax_tie_low, bellman_target};
use crate::env::{Environment, TinyMdpEnv};
use crate::error::{Error, Result};
use crate::optim::RmsPropHyper;
use crate::preprocess::{phi_append, PhiState, PreprocConfig};
use crate::replay::{ReplayMemory, Transition};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Settings of the tabular loop.
#[derive(Debug, Clone)]
pub struct TabularConfig {
    /// Behavior-policy exploration rate (1.0 gives uniform behavior).
    pub epsilon: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub warmup_size: usize,
    pub replay_capacity: usize,
    /// Total environment steps to run.
    pub steps: u64,
    pub hyper: RmsPropHyper,
    pub seed: u64,
}

impl Default for TabularConfig {
    fn default() -> Self {
        TabularConfig {
            epsilon: 1.0,
            gamma: 0.9,
            batch_size: 32,
            warmup_size: 100,
            replay_capacity: 10_000,
            steps: 200_000,
            hyper: RmsPropHyper {
                learning_rate: 1e-2,
                ..Default::default()
            },
            seed: 0,
        }
    }
}

/// Lookup-table Q-function over one-hot observations: row `s` holds the
/// Q-values of state `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularQ {
    num_states: usize,
    num_actions: usize,
    table: Tensor<f64>,
}

impl TabularQ {
    pub fn zeros(num_states: usize, num_actions: usize) -> TabularQ {
        TabularQ {
            num_states,
            num_actions,
            table: Tensor::zeros([num_states, num_actions]),
        }
    }

    pub fn table(&self) -> &Tensor<f64> {
        &self.table
    }

    /// Reads the state id back out of a one-hot observation stack (the
    /// newest plane).
    pub fn state_of(&self, phi: &PhiState) -> Result<usize> {
        let plane = phi.plane(phi.depth() - 1);
        if plane.len() != self.num_states {
            return Err(Error::Shape(format!(
                "one-hot plane of {} values does not match {} states",
                plane.len(),
                self.num_states
            )));
        }
        Ok(argmax_tie_low(plane))
    }

    pub fn q_row(&self, state: usize) -> &[f64] {
        &self.table.data()[state * self.num_actions..(state + 1) * self.num_actions]
    }

    pub fn max_q(&self, state: usize) -> f64 {
        let row = self.q_row(state);
        row[argmax_tie_low(row)]
    }
}

/// Runs the full replay-driven loop on a table MDP and returns the learned
/// Q-table `[S×A]`. Rewards are not clipped here; the oracle compares
/// against value iteration on the MDP's own rewards.
pub fn run_tabular_q_learning(env: &mut TinyMdpEnv, config: &TabularConfig) -> Result<TabularQ> {
    if !(0.0..=1.0).contains(&config.epsilon) {
        return Err(Error::Config(format!(
            "epsilon must be in [0,1], got {}",
            config.epsilon
        )));
    }
    let num_states = env.mdp().num_states();
    let num_actions = env.mdp().num_actions();
    let mut q = TabularQ::zeros(num_states, num_actions);
    let mut mean_square = Tensor::<f64>::zeros([num_states, num_actions]);
    let mut grads = Tensor::<f64>::zeros([num_states, num_actions]);
    let mut memory: ReplayMemory<Transition> = ReplayMemory::new(config.replay_capacity)?;

    let preproc = PreprocConfig {
        stack_depth: 1,
        ..PreprocConfig::identity(num_states, 1)
    };
    let mut action_rng = ChaCha8Rng::seed_from_u64(config.seed);
    action_rng.set_stream(1);
    let mut sample_rng = ChaCha8Rng::seed_from_u64(config.seed);
    sample_rng.set_stream(2);

    let mut episode = 0u64;
    let mut phi = phi_append(None, &env.reset(config.seed ^ episode), &preproc)?;
    for _ in 0..config.steps {
        let state = q.state_of(&phi)?;
        let action = if action_rng.gen::<f64>() < config.epsilon {
            action_rng.gen_range(0..num_actions)
        } else {
            argmax_tie_low(q.q_row(state))
        };
        let step = env.step(action)?;
        let phi_next = phi_append(Some(&phi), &step.frame, &preproc)?;
        memory.push(Transition {
            phi_before: phi.clone(),
            action,
            reward: step.reward,
            phi_after: phi_next.clone(),
            terminal: step.terminal,
        });

        if memory.len() >= config.warmup_size {
            let batch = memory.sample(config.batch_size, &mut sample_rng)?;
            grads.fill(0.0);
            let scale = 2.0 / config.batch_size as f64;
            for t in &batch {
                let s = q.state_of(&t.phi_before)?;
                let sp = q.state_of(&t.phi_after)?;
                let y = bellman_target(t.reward, t.terminal, config.gamma, q.max_q(sp));
                let predicted = q.q_row(s)[t.action];
                grads.data_mut()[s * num_actions + t.action] -= scale * (y - predicted);
            }
            crate::optim::rmsprop_update_slice(
                q.table.data_mut(),
                grads.data(),
                mean_square.data_mut(),
                &config.hyper,
            );
        }

        phi = if step.terminal {
            episode += 1;
            phi_append(None, &env.reset(config.seed ^ episode), &preproc)?
        } else {
            phi_next
        };
    }
    Ok(q)
}
