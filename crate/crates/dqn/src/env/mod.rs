//! Built-in environments behind one stepping interface.
//!
//! An environment produces pixel frames, accepts integer actions, and hands
//! back per-step rewards (the change in score) plus a terminal flag. All
//! stochasticity lives in `reset`; stepping is deterministic, so a seed and
//! an action sequence fully determine a trajectory. Every episode terminates
//! within `max_episode_steps`, by truncation if the dynamics have not ended
//! it earlier.

mod catch;
mod gridworld;
mod mdp;

pub use catch::Catch;
pub use gridworld::GridWorld;
pub use mdp::{bellman_residual, value_iteration, TinyMdp, TinyMdpEnv};

use crate::error::{Error, Result};

/// Raw pixel image emitted by an environment, row-major, one or three bytes
/// per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Input(format!(
                "frame channels must be 1 or 3, got {channels}"
            )));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::Input(format!(
                "frame of {width}x{height}x{channels} needs {} bytes, got {}",
                width * height * channels,
                pixels.len()
            )));
        }
        Ok(Frame {
            width,
            height,
            channels,
            pixels,
        })
    }
}

/// One environment tick: the next frame, the reward for the tick, and
/// whether the episode ended.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub frame: Frame,
    pub reward: f64,
    pub terminal: bool,
}

/// Static description of an environment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvSpec {
    pub name: String,
    pub num_actions: usize,
    pub frame_width: usize,
    pub frame_height: usize,
    pub frame_channels: usize,
    pub max_episode_steps: u32,
}

/// The interaction loop: reset to a start frame, then step with actions
/// until terminal. Stepping a terminal (or never-reset) environment is a
/// protocol error; an action outside `0..num_actions` is an input error.
pub trait Environment {
    fn spec(&self) -> &EnvSpec;

    /// Puts the environment in a legal initial state and returns the first
    /// frame. Deterministic per seed.
    fn reset(&mut self, seed: u64) -> Frame;

    /// Advances one tick.
    fn step(&mut self, action: usize) -> Result<StepResult>;
}

pub(crate) fn check_step_preconditions(
    spec: &EnvSpec,
    needs_reset: bool,
    terminal: bool,
    action: usize,
) -> Result<()> {
    if needs_reset {
        return Err(Error::Protocol(
            "environment must be reset before stepping".into(),
        ));
    }
    if terminal {
        return Err(Error::Protocol(
            "episode is terminal; reset before stepping again".into(),
        ));
    }
    if action >= spec.num_actions {
        return Err(Error::Input(format!(
            "action {action} out of range (num_actions = {})",
            spec.num_actions
        )));
    }
    Ok(())
}

/// Builds a default-geometry environment from its config name.
pub fn env_by_name(name: &str) -> Result<Box<dyn Environment>> {
    match name {
        "catch" => Ok(Box::new(Catch::new())),
        "gridworld" => Ok(Box::new(GridWorld::new())),
        other => Err(Error::Config(format!(
            "unknown environment {other:?} (expected \"catch\" or \"gridworld\"; \
             \"tinymdp\" requires explicit tables)"
        ))),
    }
}
