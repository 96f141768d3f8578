//! Run configuration: every hyperparameter in one record, parsed from a
//! flat `key = value` text format with `#` comment lines and dotted keys.
//!
//! An empty file yields the desk-scale Catch profile. Unknown keys are
//! rejected, and a malformed file reports every violation at once rather
//! than the first.

use crate::agent::{AgentConfig, EpsilonSchedule};
use crate::env::{Catch, EnvSpec, Environment, GridWorld, TinyMdp, TinyMdpEnv};
use crate::error::{Error, Result};
use crate::nn::{ConvSpec, Geometry};
use crate::optim::RmsPropHyper;
use crate::preprocess::{CropRect, PreprocConfig, LUMA_WEIGHTS};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

/// Which environment to train on, with its geometry.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvConfig {
    Catch {
        width: usize,
        height: usize,
        paddle_width: usize,
        max_episode_steps: u32,
    },
    GridWorld {
        max_episode_steps: u32,
    },
    TinyMdp {
        num_states: usize,
        num_actions: usize,
        gamma: f64,
        transitions: Vec<usize>,
        rewards: Vec<f64>,
        terminals: Vec<usize>,
        start: Option<usize>,
        max_episode_steps: u32,
    },
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::Catch {
            width: 24,
            height: 24,
            paddle_width: 3,
            max_episode_steps: 24,
        }
    }
}

impl EnvConfig {
    pub fn name(&self) -> &'static str {
        match self {
            EnvConfig::Catch { .. } => "catch",
            EnvConfig::GridWorld { .. } => "gridworld",
            EnvConfig::TinyMdp { .. } => "tinymdp",
        }
    }

    pub fn build(&self) -> Result<Box<dyn Environment>> {
        match self {
            EnvConfig::Catch {
                width,
                height,
                paddle_width,
                max_episode_steps,
            } => Ok(Box::new(Catch::with_geometry(
                *width,
                *height,
                *paddle_width,
                *max_episode_steps,
            )?)),
            EnvConfig::GridWorld { max_episode_steps } => {
                Ok(Box::new(GridWorld::with_max_steps(*max_episode_steps)))
            }
            EnvConfig::TinyMdp {
                num_states,
                num_actions,
                gamma,
                transitions,
                rewards,
                terminals,
                start,
                max_episode_steps,
            } => {
                let mdp = TinyMdp::new(
                    *num_states,
                    *num_actions,
                    transitions.clone(),
                    rewards.clone(),
                    terminals,
                    *gamma,
                )?;
                Ok(Box::new(TinyMdpEnv::new(mdp, *start, *max_episode_steps)?))
            }
        }
    }

    pub fn spec(&self) -> Result<EnvSpec> {
        Ok(self.build()?.spec().clone())
    }
}

/// Trainable layer widths; the input side of the geometry comes from the
/// preprocessing output and the action count from the environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetConfig {
    pub conv1: ConvSpec,
    pub conv2: ConvSpec,
    pub hidden: usize,
}

impl Default for NetConfig {
    /// Desk-scale network: 8 3×3 stride-1 filters, 16 3×3 stride-2 filters,
    /// 64 hidden units.
    fn default() -> Self {
        NetConfig {
            conv1: ConvSpec {
                out_channels: 8,
                kernel: 3,
                stride: 1,
            },
            conv2: ConvSpec {
                out_channels: 16,
                kernel: 3,
                stride: 2,
            },
            hidden: 64,
        }
    }
}

/// Everything a training run needs, resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub env: EnvConfig,
    pub preproc: PreprocConfig,
    pub net: NetConfig,
    pub agent: AgentConfig,
    pub replay_capacity: usize,
    pub rmsprop: RmsPropHyper,
    pub total_frames: u64,
    pub eval_every_frames: u64,
    pub eval_episodes: usize,
    pub eval_epsilon: f64,
    pub heldout_size: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            env: EnvConfig::default(),
            preproc: PreprocConfig::identity(24, 24),
            net: NetConfig::default(),
            agent: AgentConfig::default(),
            replay_capacity: 50_000,
            rmsprop: RmsPropHyper::default(),
            total_frames: 500_000,
            eval_every_frames: 10_000,
            eval_episodes: 100,
            eval_epsilon: 0.05,
            heldout_size: 500,
            seed: 1,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl TrainConfig {
    /// Network geometry implied by the preprocessing output and the
    /// environment's action set.
    pub fn geometry(&self) -> Result<Geometry> {
        let spec = self.env.spec()?;
        let g = Geometry {
            input_channels: self.preproc.stack_depth,
            input_height: self.preproc.crop.height,
            input_width: self.preproc.crop.width,
            conv1: self.net.conv1,
            conv2: self.net.conv2,
            hidden: self.net.hidden,
            num_actions: spec.num_actions,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut check = |r: Result<()>| {
            if let Err(e) = r {
                problems.push(e.to_string());
            }
        };
        check(self.env.build().map(|_| ()));
        check(self.preproc.validate());
        check(self.agent.validate());
        check(self.rmsprop.validate());
        check(self.geometry().map(|_| ()));
        if self.total_frames == 0 {
            problems.push("total_frames must be at least 1".into());
        }
        if self.eval_every_frames == 0 {
            problems.push("eval_every_frames must be at least 1".into());
        }
        if self.eval_episodes == 0 {
            problems.push("eval_episodes must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.eval_epsilon) {
            problems.push(format!(
                "eval_epsilon must be in [0,1], got {}",
                self.eval_epsilon
            ));
        }
        if self.heldout_size == 0 {
            problems.push("heldout_size must be at least 1".into());
        }
        if self.replay_capacity == 0 {
            problems.push("replay.capacity must be at least 1".into());
        }
        if self.agent.warmup_size > self.replay_capacity {
            problems.push(format!(
                "warmup_size {} exceeds replay capacity {}, training would never start",
                self.agent.warmup_size, self.replay_capacity
            ));
        }
        if let Ok(spec) = self.env.spec() {
            if spec.frame_width < self.preproc.target_width
                || spec.frame_height < self.preproc.target_height
            {
                problems.push(format!(
                    "downsample target {}x{} exceeds the {}x{} environment frame",
                    self.preproc.target_width,
                    self.preproc.target_height,
                    spec.frame_width,
                    spec.frame_height
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Parses the `key = value` format and validates the result.
    pub fn parse(text: &str) -> Result<TrainConfig> {
        let mut problems = Vec::new();
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                problems.push(format!("line {}: expected `key = value`", lineno + 1));
                continue;
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if map.insert(key.clone(), value).is_some() {
                problems.push(format!("duplicate key {key:?}"));
            }
        }

        let mut reader = Reader {
            map,
            problems: &mut problems,
        };
        let config = read_config(&mut reader);
        for key in reader.map.keys() {
            problems.push(format!("unknown key {key:?}"));
        }
        if let Err(e) = config.validate() {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(config)
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Serializes the fully-resolved configuration; `parse` of the output
    /// reproduces this config.
    pub fn to_config_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "env.name = {}", self.env.name());
        match &self.env {
            EnvConfig::Catch {
                width,
                height,
                paddle_width,
                max_episode_steps,
            } => {
                let _ = writeln!(s, "env.catch.width = {width}");
                let _ = writeln!(s, "env.catch.height = {height}");
                let _ = writeln!(s, "env.catch.paddle_width = {paddle_width}");
                let _ = writeln!(s, "env.catch.max_episode_steps = {max_episode_steps}");
            }
            EnvConfig::GridWorld { max_episode_steps } => {
                let _ = writeln!(s, "env.gridworld.max_episode_steps = {max_episode_steps}");
            }
            EnvConfig::TinyMdp {
                num_states,
                num_actions,
                gamma,
                transitions,
                rewards,
                terminals,
                start,
                max_episode_steps,
            } => {
                let _ = writeln!(s, "env.tinymdp.num_states = {num_states}");
                let _ = writeln!(s, "env.tinymdp.num_actions = {num_actions}");
                let _ = writeln!(s, "env.tinymdp.gamma = {gamma}");
                let _ = writeln!(
                    s,
                    "env.tinymdp.transitions = {}",
                    table_text(transitions, *num_actions)
                );
                let _ = writeln!(
                    s,
                    "env.tinymdp.rewards = {}",
                    table_text(rewards, *num_actions)
                );
                let _ = writeln!(
                    s,
                    "env.tinymdp.terminals = {}",
                    terminals
                        .iter()
                        .map(|t| t.to_string())
                        .collect::<Vec<_>>()
                        .join(",")
                );
                let _ = writeln!(
                    s,
                    "env.tinymdp.start = {}",
                    start.map_or("random".to_string(), |v| v.to_string())
                );
                let _ = writeln!(s, "env.tinymdp.max_episode_steps = {max_episode_steps}");
            }
        }
        let p = &self.preproc;
        let _ = writeln!(s, "preproc.target_width = {}", p.target_width);
        let _ = writeln!(s, "preproc.target_height = {}", p.target_height);
        let _ = writeln!(s, "preproc.crop_x = {}", p.crop.x);
        let _ = writeln!(s, "preproc.crop_y = {}", p.crop.y);
        let _ = writeln!(s, "preproc.crop_width = {}", p.crop.width);
        let _ = writeln!(s, "preproc.crop_height = {}", p.crop.height);
        let _ = writeln!(s, "preproc.stack_depth = {}", p.stack_depth);
        let _ = writeln!(
            s,
            "preproc.grayscale_weights = {},{},{}",
            p.grayscale_weights[0], p.grayscale_weights[1], p.grayscale_weights[2]
        );
        let _ = writeln!(s, "net.conv1_filters = {}", self.net.conv1.out_channels);
        let _ = writeln!(s, "net.conv1_kernel = {}", self.net.conv1.kernel);
        let _ = writeln!(s, "net.conv1_stride = {}", self.net.conv1.stride);
        let _ = writeln!(s, "net.conv2_filters = {}", self.net.conv2.out_channels);
        let _ = writeln!(s, "net.conv2_kernel = {}", self.net.conv2.kernel);
        let _ = writeln!(s, "net.conv2_stride = {}", self.net.conv2.stride);
        let _ = writeln!(s, "net.hidden = {}", self.net.hidden);
        let a = &self.agent;
        let _ = writeln!(s, "agent.gamma = {}", a.gamma);
        let _ = writeln!(s, "agent.frame_skip = {}", a.frame_skip);
        let _ = writeln!(s, "agent.clip_rewards = {}", a.clip_rewards);
        let _ = writeln!(s, "agent.batch_size = {}", a.batch_size);
        let _ = writeln!(s, "agent.warmup_size = {}", a.warmup_size);
        let _ = writeln!(s, "agent.eps_start = {}", a.schedule.start);
        let _ = writeln!(s, "agent.eps_end = {}", a.schedule.end);
        let _ = writeln!(s, "agent.eps_anneal_frames = {}", a.schedule.anneal_frames);
        let _ = writeln!(s, "replay.capacity = {}", self.replay_capacity);
        let _ = writeln!(s, "rmsprop.decay = {}", self.rmsprop.decay);
        let _ = writeln!(s, "rmsprop.epsilon = {}", self.rmsprop.epsilon_denom);
        let _ = writeln!(s, "rmsprop.learning_rate = {}", self.rmsprop.learning_rate);
        let _ = writeln!(s, "total_frames = {}", self.total_frames);
        let _ = writeln!(s, "eval_every_frames = {}", self.eval_every_frames);
        let _ = writeln!(s, "eval_episodes = {}", self.eval_episodes);
        let _ = writeln!(s, "eval_epsilon = {}", self.eval_epsilon);
        let _ = writeln!(s, "heldout_size = {}", self.heldout_size);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "output_dir = {}", self.output_dir.display());
        s
    }
}

fn table_text<T: std::fmt::Display>(values: &[T], row_len: usize) -> String {
    values
        .chunks(row_len.max(1))
        .map(|row| {
            row.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join(";")
}

struct Reader<'a> {
    map: BTreeMap<String, String>,
    problems: &'a mut Vec<String>,
}

impl Reader<'_> {
    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str, default: T) -> T {
        match self.take(key) {
            None => default,
            Some(raw) => match raw.parse() {
                Ok(v) => v,
                Err(_) => {
                    self.problems.push(format!(
                        "key {key:?}: cannot parse {raw:?} as {}",
                        std::any::type_name::<T>()
                    ));
                    default
                }
            },
        }
    }

    fn parse_list<T: std::str::FromStr>(&mut self, key: &str, raw: &str) -> Vec<T> {
        let mut out = Vec::new();
        for item in raw.split([',', ';']) {
            let item = item.trim();
            if item.is_empty() {
                continue;
            }
            match item.parse() {
                Ok(v) => out.push(v),
                Err(_) => {
                    self.problems
                        .push(format!("key {key:?}: cannot parse element {item:?}"));
                }
            }
        }
        out
    }
}

fn read_config(r: &mut Reader) -> TrainConfig {
    let mut config = TrainConfig::default();

    let env_name = r.take("env.name").unwrap_or_else(|| "catch".into());
    config.env = match env_name.as_str() {
        "catch" => EnvConfig::Catch {
            width: r.parse("env.catch.width", 24),
            height: r.parse("env.catch.height", 24),
            paddle_width: r.parse("env.catch.paddle_width", 3),
            max_episode_steps: r.parse("env.catch.max_episode_steps", 24),
        },
        "gridworld" => EnvConfig::GridWorld {
            max_episode_steps: r.parse("env.gridworld.max_episode_steps", 200),
        },
        "tinymdp" => {
            let num_states = r.parse("env.tinymdp.num_states", 0usize);
            let num_actions = r.parse("env.tinymdp.num_actions", 0usize);
            let transitions = match r.take("env.tinymdp.transitions") {
                Some(raw) => r.parse_list("env.tinymdp.transitions", &raw),
                None => {
                    r.problems
                        .push("env.tinymdp.transitions is required".into());
                    Vec::new()
                }
            };
            let rewards = match r.take("env.tinymdp.rewards") {
                Some(raw) => r.parse_list("env.tinymdp.rewards", &raw),
                None => {
                    r.problems.push("env.tinymdp.rewards is required".into());
                    Vec::new()
                }
            };
            let terminals = match r.take("env.tinymdp.terminals") {
                Some(raw) => r.parse_list("env.tinymdp.terminals", &raw),
                None => Vec::new(),
            };
            let start = match r.take("env.tinymdp.start") {
                None => None,
                Some(raw) if raw == "random" => None,
                Some(raw) => match raw.parse() {
                    Ok(v) => Some(v),
                    Err(_) => {
                        r.problems.push(format!(
                            "key \"env.tinymdp.start\": cannot parse {raw:?} (state id or \"random\")"
                        ));
                        None
                    }
                },
            };
            EnvConfig::TinyMdp {
                num_states,
                num_actions,
                gamma: r.parse("env.tinymdp.gamma", 0.9),
                transitions,
                rewards,
                terminals,
                start,
                max_episode_steps: r.parse("env.tinymdp.max_episode_steps", 100),
            }
        }
        other => {
            r.problems.push(format!(
                "env.name {other:?} is not one of catch, gridworld, tinymdp"
            ));
            EnvConfig::default()
        }
    };

    let (frame_w, frame_h) = match config.env.spec() {
        Ok(spec) => (spec.frame_width, spec.frame_height),
        Err(_) => (24, 24), // env errors surface in validate()
    };
    let target_width = r.parse("preproc.target_width", frame_w);
    let target_height = r.parse("preproc.target_height", frame_h);
    config.preproc = PreprocConfig {
        target_width,
        target_height,
        crop: CropRect {
            x: r.parse("preproc.crop_x", 0),
            y: r.parse("preproc.crop_y", 0),
            width: r.parse("preproc.crop_width", target_width),
            height: r.parse("preproc.crop_height", target_height),
        },
        stack_depth: r.parse("preproc.stack_depth", 4),
        grayscale_weights: match r.take("preproc.grayscale_weights") {
            None => LUMA_WEIGHTS,
            Some(raw) => {
                let values: Vec<f64> = r.parse_list("preproc.grayscale_weights", &raw);
                if values.len() == 3 {
                    [values[0], values[1], values[2]]
                } else {
                    r.problems.push(format!(
                        "preproc.grayscale_weights needs exactly 3 values, got {}",
                        values.len()
                    ));
                    LUMA_WEIGHTS
                }
            }
        },
    };

    config.net = NetConfig {
        conv1: ConvSpec {
            out_channels: r.parse("net.conv1_filters", 8),
            kernel: r.parse("net.conv1_kernel", 3),
            stride: r.parse("net.conv1_stride", 1),
        },
        conv2: ConvSpec {
            out_channels: r.parse("net.conv2_filters", 16),
            kernel: r.parse("net.conv2_kernel", 3),
            stride: r.parse("net.conv2_stride", 2),
        },
        hidden: r.parse("net.hidden", 64),
    };

    config.agent = AgentConfig {
        gamma: r.parse("agent.gamma", 0.99),
        frame_skip: r.parse("agent.frame_skip", 4),
        clip_rewards: r.parse("agent.clip_rewards", true),
        batch_size: r.parse("agent.batch_size", 32),
        warmup_size: r.parse("agent.warmup_size", 1000),
        schedule: EpsilonSchedule {
            start: r.parse("agent.eps_start", 1.0),
            end: r.parse("agent.eps_end", 0.1),
            anneal_frames: r.parse("agent.eps_anneal_frames", 100_000),
        },
    };

    config.replay_capacity = r.parse("replay.capacity", 50_000);
    config.rmsprop = RmsPropHyper {
        decay: r.parse("rmsprop.decay", crate::optim::DEFAULT_DECAY),
        epsilon_denom: r.parse("rmsprop.epsilon", crate::optim::DEFAULT_EPSILON),
        learning_rate: r.parse("rmsprop.learning_rate", crate::optim::DEFAULT_LEARNING_RATE),
    };
    config.total_frames = r.parse("total_frames", 500_000);
    config.eval_every_frames = r.parse("eval_every_frames", 10_000);
    config.eval_episodes = r.parse("eval_episodes", 100);
    config.eval_epsilon = r.parse("eval_epsilon", 0.05);
    config.heldout_size = r.parse("heldout_size", 500);
    config.seed = r.parse("seed", 1);
    if let Some(dir) = r.take("output_dir") {
        config.output_dir = PathBuf::from(dir);
    }
    config
}

/// Reads and parses a config file; a missing path is an io error with
/// context.
pub fn parse_config_file(path: impl AsRef<std::path::Path>) -> Result<TrainConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    TrainConfig::parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_the_desk_scale_profile() {
        let config = TrainConfig::parse("").unwrap();
        assert_eq!(config, TrainConfig::default());
        assert_eq!(config.eval_epsilon, 0.05);
        assert_eq!(config.agent.batch_size, 32);
        assert_eq!(config.replay_capacity, 50_000);
        assert_eq!(config.total_frames, 500_000);
        assert_eq!(config.agent.schedule.anneal_frames, 100_000);
        let g = config.geometry().unwrap();
        assert_eq!(g.num_actions, 3);
        assert_eq!(g.input_channels, 4);
    }

    #[test]
    fn comments_blanks_and_overrides_parse() {
        let text = "\n# a comment\nagent.gamma = 0.95\n\nseed = 9\nenv.name = gridworld\n";
        let config = TrainConfig::parse(text).unwrap();
        assert_eq!(config.agent.gamma, 0.95);
        assert_eq!(config.seed, 9);
        assert_eq!(config.env.name(), "gridworld");
        // preproc defaults follow the environment frame
        assert_eq!(config.preproc.target_width, 24);
        let g = config.geometry().unwrap();
        assert_eq!(g.num_actions, 4);
    }

    #[test]
    fn zero_batch_size_is_a_configuration_error() {
        let err = TrainConfig::parse("agent.batch_size = 0").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("batch_size"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = TrainConfig::parse("agent.gama = 0.9").unwrap_err();
        assert!(err.to_string().contains("unknown key"));
        assert!(err.to_string().contains("agent.gama"));
    }

    #[test]
    fn every_violation_is_listed() {
        let text = "agent.batch_size = 0\nagent.gamma = 7\nbogus = 1\neval_epsilon = 2";
        let err = TrainConfig::parse(text).unwrap_err();
        let msg = err.to_string();
        for needle in ["batch_size", "gamma", "bogus", "eval_epsilon"] {
            assert!(msg.contains(needle), "missing {needle} in {msg}");
        }
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let err = TrainConfig::parse("seed = 1\nseed = 2").unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn malformed_lines_are_reported_with_numbers() {
        let err = TrainConfig::parse("this is not a pair").unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }

    #[test]
    fn resolved_config_round_trips_through_text() {
        let config = TrainConfig::default();
        let text = config.to_config_text();
        let parsed = TrainConfig::parse(&text).unwrap();
        assert_eq!(parsed, config);
    }

    #[test]
    fn tinymdp_tables_parse_and_round_trip() {
        let text = "\
env.name = tinymdp
env.tinymdp.num_states = 3
env.tinymdp.num_actions = 2
env.tinymdp.gamma = 0.9
env.tinymdp.transitions = 1,0;2,1;2,2
env.tinymdp.rewards = 0,0;1,0;0,0
env.tinymdp.terminals = 2
env.tinymdp.start = 0
preproc.stack_depth = 1
net.conv1_kernel = 1
net.conv2_kernel = 1
";
        // 1x1 kernels chain over a 3x1 one-hot frame, so this is trainable
        let parsed = TrainConfig::parse(text).unwrap();
        assert_eq!(parsed.geometry().unwrap().num_actions, 2);
        let reparsed = TrainConfig::parse(&parsed.to_config_text()).unwrap();
        assert_eq!(reparsed, parsed);

        // default 3x3 kernels cannot fit the 3x1 frame
        let bad = text.replace("net.conv1_kernel = 1\nnet.conv2_kernel = 1\n", "");
        let err = TrainConfig::parse(&bad).unwrap_err();
        assert!(err.to_string().contains("geometry"), "{err}");

        let config = TrainConfig {
            env: EnvConfig::TinyMdp {
                num_states: 3,
                num_actions: 2,
                gamma: 0.9,
                transitions: vec![1, 0, 2, 1, 2, 2],
                rewards: vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
                terminals: vec![2],
                start: Some(0),
                max_episode_steps: 100,
            },
            ..Default::default()
        };
        let env = config.env.build().unwrap();
        assert_eq!(env.spec().num_actions, 2);
        assert_eq!(env.spec().frame_width, 3);
    }

    #[test]
    fn warmup_larger_than_capacity_is_rejected() {
        let err = TrainConfig::parse("replay.capacity = 10\nagent.warmup_size = 20").unwrap_err();
        assert!(err.to_string().contains("warmup"));
    }

    #[test]
    fn written_config_text_lists_every_key_it_parses() {
        // guards against a serializer/parser drift: text → parse → text fixpoint
        let config = TrainConfig::parse("env.name = gridworld\nseed = 5").unwrap();
        let text = config.to_config_text();
        let reparsed = TrainConfig::parse(&text).unwrap();
        assert_eq!(reparsed, config);
        assert_eq!(reparsed.to_config_text(), text);
    }
}
