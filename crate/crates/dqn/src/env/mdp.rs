//! A small explicit MDP defined by transition and reward tables, a value
//! iteration solver for it, and an environment wrapper that exposes its
//! states as one-hot frames. Together they form the exact-representation
//! oracle the learning loop is checked against.

use super::{check_step_preconditions, EnvSpec, Environment, Frame, StepResult};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deterministic finite MDP: `transition[s*A + a]` is the successor state,
/// `reward[s*A + a]` the reward for taking `a` in `s`. Terminal states are
/// absorbing; the constructor rewrites their rows to self-loops with zero
/// reward so the invariant holds by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyMdp {
    num_states: usize,
    num_actions: usize,
    transition: Vec<usize>,
    reward: Vec<f64>,
    terminal: Vec<bool>,
    gamma: f64,
}

impl TinyMdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transition: Vec<usize>,
        reward: Vec<f64>,
        terminal_states: &[usize],
        gamma: f64,
    ) -> Result<TinyMdp> {
        let mut problems = Vec::new();
        if num_states == 0 {
            problems.push("MDP needs at least one state".to_string());
        }
        if num_actions == 0 {
            problems.push("MDP needs at least one action".to_string());
        }
        if transition.len() != num_states * num_actions {
            problems.push(format!(
                "transition table needs {} entries, got {}",
                num_states * num_actions,
                transition.len()
            ));
        }
        if reward.len() != num_states * num_actions {
            problems.push(format!(
                "reward table needs {} entries, got {}",
                num_states * num_actions,
                reward.len()
            ));
        }
        if let Some(bad) = transition.iter().find(|&&s| s >= num_states) {
            problems.push(format!("transition target {bad} out of range"));
        }
        if let Some(bad) = terminal_states.iter().find(|&&s| s >= num_states) {
            problems.push(format!("terminal state {bad} out of range"));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            problems.push(format!("gamma must be in (0,1), got {gamma}"));
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems.join("; ")));
        }
        let mut terminal = vec![false; num_states];
        for &s in terminal_states {
            terminal[s] = true;
        }
        let mut mdp = TinyMdp {
            num_states,
            num_actions,
            transition,
            reward,
            terminal,
            gamma,
        };
        for s in 0..num_states {
            if mdp.terminal[s] {
                for a in 0..num_actions {
                    mdp.transition[s * num_actions + a] = s;
                    mdp.reward[s * num_actions + a] = 0.0;
                }
            }
        }
        Ok(mdp)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn is_terminal(&self, state: usize) -> bool {
        self.terminal[state]
    }

    pub fn next_state(&self, state: usize, action: usize) -> usize {
        self.transition[state * self.num_actions + action]
    }

    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.reward[state * self.num_actions + action]
    }
}

/// Solves the MDP by repeated Bellman backups until the sup-norm change of a
/// sweep drops below `tolerance`. Returns the Q-table as `[S×A]` row-major.
/// Terminal states keep Q ≡ 0.
pub fn value_iteration(mdp: &TinyMdp, tolerance: f64) -> Vec<f64> {
    assert!(tolerance > 0.0);
    let (s_n, a_n) = (mdp.num_states, mdp.num_actions);
    let mut q = vec![0.0f64; s_n * a_n];
    loop {
        let mut next = vec![0.0f64; s_n * a_n];
        let mut delta = 0.0f64;
        for s in 0..s_n {
            if mdp.terminal[s] {
                continue;
            }
            for a in 0..a_n {
                let sp = mdp.next_state(s, a);
                let future = if mdp.terminal[sp] {
                    0.0
                } else {
                    max_over_actions(&q, sp, a_n)
                };
                let v = mdp.reward(s, a) + mdp.gamma * future;
                next[s * a_n + a] = v;
                delta = delta.max((v - q[s * a_n + a]).abs());
            }
        }
        q = next;
        if delta < tolerance {
            return q;
        }
    }
}

/// Largest one-step Bellman violation of a Q-table:
/// `max |Q(s,a) − (r + γ·max_a' Q(s',a'))|` over non-terminal states.
pub fn bellman_residual(mdp: &TinyMdp, q: &[f64]) -> f64 {
    let a_n = mdp.num_actions;
    let mut worst = 0.0f64;
    for s in 0..mdp.num_states {
        if mdp.terminal[s] {
            continue;
        }
        for a in 0..a_n {
            let sp = mdp.next_state(s, a);
            let future = if mdp.terminal[sp] {
                0.0
            } else {
                max_over_actions(q, sp, a_n)
            };
            let backed_up = mdp.reward(s, a) + mdp.gamma * future;
            worst = worst.max((q[s * a_n + a] - backed_up).abs());
        }
    }
    worst
}

fn max_over_actions(q: &[f64], state: usize, num_actions: usize) -> f64 {
    q[state * num_actions..(state + 1) * num_actions]
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Environment wrapper for a [`TinyMdp`]. The current state is rendered as a
/// one-hot single-row frame (`width = num_states`). Reset starts from the
/// configured start state, or uniformly at random over non-terminal states.
pub struct TinyMdpEnv {
    mdp: TinyMdp,
    spec: EnvSpec,
    start_state: Option<usize>,
    state: usize,
    steps: u32,
    terminal: bool,
    needs_reset: bool,
}

impl TinyMdpEnv {
    pub fn new(
        mdp: TinyMdp,
        start_state: Option<usize>,
        max_episode_steps: u32,
    ) -> Result<TinyMdpEnv> {
        if mdp.num_actions < 2 {
            return Err(Error::Config(
                "tinymdp environment needs at least 2 actions".into(),
            ));
        }
        if let Some(s) = start_state {
            if s >= mdp.num_states {
                return Err(Error::Config(format!("start state {s} out of range")));
            }
        } else if (0..mdp.num_states).all(|s| mdp.terminal[s]) {
            return Err(Error::Config(
                "tinymdp has no non-terminal state to start from".into(),
            ));
        }
        if max_episode_steps == 0 {
            return Err(Error::Config("max_episode_steps must be positive".into()));
        }
        let spec = EnvSpec {
            name: "tinymdp".into(),
            num_actions: mdp.num_actions,
            frame_width: mdp.num_states,
            frame_height: 1,
            frame_channels: 1,
            max_episode_steps,
        };
        Ok(TinyMdpEnv {
            mdp,
            spec,
            start_state,
            state: 0,
            steps: 0,
            terminal: false,
            needs_reset: true,
        })
    }

    pub fn mdp(&self) -> &TinyMdp {
        &self.mdp
    }

    pub fn state(&self) -> usize {
        self.state
    }

    fn render(&self) -> Frame {
        let mut pixels = vec![0u8; self.mdp.num_states];
        pixels[self.state] = 255;
        Frame::new(self.mdp.num_states, 1, 1, pixels).expect("one-hot frame is consistent")
    }
}

impl Environment for TinyMdpEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Frame {
        self.state = match self.start_state {
            Some(s) => s,
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                loop {
                    let s = rng.gen_range(0..self.mdp.num_states);
                    if !self.mdp.terminal[s] {
                        break s;
                    }
                }
            }
        };
        self.steps = 0;
        self.terminal = false;
        self.needs_reset = false;
        self.render()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        check_step_preconditions(&self.spec, self.needs_reset, self.terminal, action)?;
        let reward = self.mdp.reward(self.state, action);
        self.state = self.mdp.next_state(self.state, action);
        self.steps += 1;
        self.terminal =
            self.mdp.terminal[self.state] || self.steps >= self.spec.max_episode_steps;
        Ok(StepResult {
            frame: self.render(),
            reward,
            terminal: self.terminal,
        })
    }
}
