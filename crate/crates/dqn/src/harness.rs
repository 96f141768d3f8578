//! The operational shell: the outer training loop over episodes, periodic
//! evaluation and held-out-Q tracking, metrics CSV output, checkpointing,
//! and greedy value traces.
//!
//! Every random draw descends from the run seed through fixed stream ids,
//! so a `(config, seed)` pair reproduces the metrics file and checkpoints
//! byte for byte (wall-clock column aside).

use crate::agent::{epsilon_at, select_action, skip_step, train_step, argmax_tie_low, phi_batch};
use crate::checkpoint::{save_checkpoint, Checkpoint};
use crate::config::TrainConfig;
use crate::env::{EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::nn::{init_params, qnet_forward, Geometry, QNetParams};
use crate::optim::RmsPropState;
use crate::preprocess::{phi_append, PhiState, PreprocConfig};
use crate::replay::{ReplayMemory, Transition};
use crate::tensor::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

// Seed streams; disjoint consumers of the run seed.
const STREAM_INIT: u64 = 1;
const STREAM_ACTIONS: u64 = 2;
const STREAM_REPLAY: u64 = 3;
const STREAM_HELDOUT: u64 = 4;
const STREAM_EPISODES: u64 = 5;
const STREAM_EVAL: u64 = 6;

/// Decision states visited per held-out slot before the reservoir closes.
const HELDOUT_STREAM_FACTOR: usize = 20;

/// splitmix64; derives child seeds from the run seed.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e3779b97f4a7c15);
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One row of the periodic training metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub epoch: u64,
    pub frames_seen: u64,
    pub avg_episode_reward: f64,
    pub episodes_evaluated: usize,
    pub avg_max_q: f64,
    pub train_loss_mean: f64,
    pub epsilon_current: f64,
    pub wall_clock_seconds: f64,
}

impl MetricsRow {
    pub const CSV_HEADER: &'static str = "epoch,frames_seen,avg_episode_reward,\
episodes_evaluated,avg_max_q,train_loss_mean,epsilon_current,wall_clock_seconds";

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.epoch,
            self.frames_seen,
            self.avg_episode_reward,
            self.episodes_evaluated,
            self.avg_max_q,
            self.train_loss_mean,
            self.epsilon_current,
            self.wall_clock_seconds
        )
    }
}

/// Infers the (identity) preprocessing settings a checkpoint expects when
/// only the environment is known: the stack depth comes from the network's
/// input channels, and the spatial dims must match the frame exactly.
pub fn preproc_for(geometry: &Geometry, spec: &EnvSpec) -> Result<PreprocConfig> {
    if geometry.input_height != spec.frame_height || geometry.input_width != spec.frame_width {
        return Err(Error::Format(format!(
            "network input {}x{} does not match the {}x{} frames of {}; \
             evaluate with the training config instead",
            geometry.input_height,
            geometry.input_width,
            spec.frame_height,
            spec.frame_width,
            spec.name
        )));
    }
    let mut preproc = PreprocConfig::identity(spec.frame_width, spec.frame_height);
    preproc.stack_depth = geometry.input_channels;
    Ok(preproc)
}

/// Collects `size` observation stacks visited by a uniform-random policy,
/// uniformly via reservoir sampling over a fixed-length stream of decision
/// states. Deterministic per seed.
pub fn collect_heldout(
    env: &mut dyn Environment,
    preproc: &PreprocConfig,
    size: usize,
    frame_skip: u32,
    seed: u64,
) -> Result<Vec<PhiState>> {
    if size == 0 {
        return Err(Error::Input("held-out size must be at least 1".into()));
    }
    let mut rng = stream_rng(seed, STREAM_HELDOUT);
    let stream_len = size * HELDOUT_STREAM_FACTOR;
    let mut reservoir: Vec<PhiState> = Vec::with_capacity(size);
    let num_actions = env.spec().num_actions;
    let mut episode = 0u64;
    let mut phi = phi_append(None, &env.reset(mix_seed(seed, STREAM_HELDOUT ^ episode)), preproc)?;
    for index in 0..stream_len {
        if reservoir.len() < size {
            reservoir.push(phi.clone());
        } else {
            let j = rng.gen_range(0..=index);
            if j < size {
                reservoir[j] = phi.clone();
            }
        }
        let action = rng.gen_range(0..num_actions);
        let (step, _) = skip_step(env, action, frame_skip, false)?;
        phi = if step.terminal {
            episode += 1;
            phi_append(
                None,
                &env.reset(mix_seed(seed, STREAM_HELDOUT ^ episode)),
                preproc,
            )?
        } else {
            phi_append(Some(&phi), &step.frame, preproc)?
        };
    }
    Ok(reservoir)
}

/// Mean over the held-out states of the best predicted action value.
pub fn avg_max_q<T: Scalar>(params: &QNetParams<T>, heldout: &[PhiState]) -> Result<f64> {
    if heldout.is_empty() {
        return Err(Error::Input("held-out set must be nonempty".into()));
    }
    let actions = params.geometry().num_actions;
    let mut total = 0.0f64;
    for chunk in heldout.chunks(64) {
        let refs: Vec<&PhiState> = chunk.iter().collect();
        let q = qnet_forward(params, &phi_batch(&refs, params)?)?;
        for row in q.data().chunks(actions) {
            total += row[argmax_tie_low(row)].to_f64().unwrap();
        }
    }
    Ok(total / heldout.len() as f64)
}

/// Evaluation scores: the mean and per-episode returns in raw (unclipped)
/// environment reward.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub avg_reward: f64,
    pub per_episode: Vec<f64>,
}

/// Runs full episodes under an arbitrary policy over observation stacks,
/// scoring raw environment reward. The policy sees the current stack and an
/// rng for its own draws.
pub fn evaluate_policy(
    env: &mut dyn Environment,
    preproc: &PreprocConfig,
    episodes: usize,
    frame_skip: u32,
    seed: u64,
    mut policy: impl FnMut(&PhiState, &mut ChaCha8Rng) -> Result<usize>,
) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(Error::Input("episode count must be at least 1".into()));
    }
    let mut rng = stream_rng(seed, STREAM_EVAL);
    let mut per_episode = Vec::with_capacity(episodes);
    for episode in 0..episodes as u64 {
        let frame = env.reset(mix_seed(seed, STREAM_EVAL ^ (episode + 1)));
        let mut phi = phi_append(None, &frame, preproc)?;
        let mut ret = 0.0;
        loop {
            let action = policy(&phi, &mut rng)?;
            let (step, _) = skip_step(env, action, frame_skip, false)?;
            ret += step.reward;
            if step.terminal {
                break;
            }
            phi = phi_append(Some(&phi), &step.frame, preproc)?;
        }
        per_episode.push(ret);
    }
    let avg_reward = per_episode.iter().sum::<f64>() / episodes as f64;
    Ok(EvalReport {
        avg_reward,
        per_episode,
    })
}

/// Scores a parameter snapshot with an epsilon-greedy policy. Never mutates
/// the parameters.
pub fn evaluate<T: Scalar>(
    params: &QNetParams<T>,
    env: &mut dyn Environment,
    preproc: &PreprocConfig,
    episodes: usize,
    eval_epsilon: f64,
    frame_skip: u32,
    seed: u64,
) -> Result<EvalReport> {
    evaluate_policy(env, preproc, episodes, frame_skip, seed, |phi, rng| {
        select_action(params, phi, eval_epsilon, rng)
    })
}

/// One row of a greedy value trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: u64,
    pub max_q: f64,
    pub chosen_action: usize,
    pub reward: f64,
}

pub const TRACE_CSV_HEADER: &str = "step,max_q,chosen_action,reward";

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut s = String::from(TRACE_CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{}\n",
            r.step, r.max_q, r.chosen_action, r.reward
        ));
    }
    s
}

/// Plays one greedy episode and logs the best predicted value, the action
/// taken, and the raw reward at every decision step.
pub fn trace_values<T: Scalar>(
    params: &QNetParams<T>,
    env: &mut dyn Environment,
    preproc: &PreprocConfig,
    frame_skip: u32,
    seed: u64,
    max_steps: u64,
) -> Result<Vec<TraceRow>> {
    let mut phi = phi_append(None, &env.reset(seed), preproc)?;
    let mut rows = Vec::new();
    for step in 0..max_steps {
        let q = qnet_forward(params, &phi_batch(&[&phi], params)?)?;
        let action = argmax_tie_low(q.data());
        let max_q = q.data()[action].to_f64().unwrap();
        let (result, _) = skip_step(env, action, frame_skip, false)?;
        rows.push(TraceRow {
            step,
            max_q,
            chosen_action: action,
            reward: result.reward,
        });
        if result.terminal {
            break;
        }
        phi = phi_append(Some(&phi), &result.frame, preproc)?;
    }
    Ok(rows)
}

/// Result of a training run: where the artifacts went and the metric rows
/// that were written.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub frames_seen: u64,
    pub episodes: u64,
    pub metrics: Vec<MetricsRow>,
    pub metrics_path: PathBuf,
    pub final_checkpoint_path: PathBuf,
}

/// Runs the full training loop per the replay-driven algorithm: per decision
/// an epsilon-greedy action at the current anneal, a frame-skipped step,
/// stack update, transition store, then one minibatch update. Every
/// `eval_every_frames` frames a metrics row and a checkpoint are written;
/// the final parameters land in `final.dqnc`. A non-finite training error
/// aborts with a diagnostic checkpoint.
pub fn train(config: &TrainConfig) -> Result<TrainOutcome> {
    train_with_progress(config, |_| {})
}

/// [`train`] with a callback invoked on every metrics row as it is written.
pub fn train_with_progress(
    config: &TrainConfig,
    mut progress: impl FnMut(&MetricsRow),
) -> Result<TrainOutcome> {
    config.validate()?;
    let start = Instant::now();
    let out_dir = &config.output_dir;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    std::fs::write(out_dir.join("config.txt"), config.to_config_text())
        .map_err(|e| Error::io(out_dir.join("config.txt"), e))?;

    let geometry = config.geometry()?;
    let seed = config.seed;
    let mut params: QNetParams<f32> = init_params(geometry, mix_seed(seed, STREAM_INIT))?;
    let mut rms: RmsPropState<f32> = RmsPropState::new(&geometry, config.rmsprop)?;
    let mut memory: ReplayMemory<Transition> = ReplayMemory::new(config.replay_capacity)?;

    let mut heldout_env = config.env.build()?;
    let heldout = collect_heldout(
        heldout_env.as_mut(),
        &config.preproc,
        config.heldout_size,
        config.agent.frame_skip,
        seed,
    )?;
    drop(heldout_env);

    let metrics_path = out_dir.join("metrics.csv");
    let metrics_file =
        std::fs::File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    let mut metrics_out = std::io::BufWriter::new(metrics_file);
    writeln!(metrics_out, "{}", MetricsRow::CSV_HEADER)
        .map_err(|e| Error::io(&metrics_path, e))?;

    let mut env = config.env.build()?;
    let mut action_rng = stream_rng(seed, STREAM_ACTIONS);
    let mut replay_rng = stream_rng(seed, STREAM_REPLAY);

    let mut frames_seen: u64 = 0;
    let mut episodes: u64 = 0;
    let mut epoch: u64 = 0;
    let mut next_eval = config.eval_every_frames;
    let mut loss_sum = 0.0f64;
    let mut loss_count = 0u64;
    let mut metrics: Vec<MetricsRow> = Vec::new();

    let mut emit_metrics = |params: &QNetParams<f32>,
                            rms: &RmsPropState<f32>,
                            epoch: u64,
                            frames_seen: u64,
                            loss_sum: &mut f64,
                            loss_count: &mut u64,
                            metrics: &mut Vec<MetricsRow>,
                            metrics_out: &mut std::io::BufWriter<std::fs::File>|
     -> Result<()> {
        let mut eval_env = config.env.build()?;
        let report = evaluate(
            params,
            eval_env.as_mut(),
            &config.preproc,
            config.eval_episodes,
            config.eval_epsilon,
            config.agent.frame_skip,
            mix_seed(seed, STREAM_EVAL ^ (epoch << 20)),
        )?;
        let row = MetricsRow {
            epoch,
            frames_seen,
            avg_episode_reward: report.avg_reward,
            episodes_evaluated: report.per_episode.len(),
            avg_max_q: avg_max_q(params, &heldout)?,
            train_loss_mean: if *loss_count > 0 {
                *loss_sum / *loss_count as f64
            } else {
                0.0
            },
            epsilon_current: epsilon_at(&config.agent.schedule, frames_seen),
            wall_clock_seconds: start.elapsed().as_secs_f64(),
        };
        *loss_sum = 0.0;
        *loss_count = 0;
        writeln!(metrics_out, "{}", row.to_csv_line()).map_err(|e| Error::io(&metrics_path, e))?;
        metrics_out.flush().map_err(|e| Error::io(&metrics_path, e))?;
        let ckpt = out_dir.join(format!("checkpoint_{frames_seen:09}.dqnc"));
        save_checkpoint(params, rms, &ckpt)?;
        progress(&row);
        metrics.push(row);
        Ok(())
    };

    'training: while frames_seen < config.total_frames {
        episodes += 1;
        let frame = env.reset(mix_seed(seed, STREAM_EPISODES ^ episodes));
        let mut phi = phi_append(None, &frame, &config.preproc)?;
        loop {
            let eps = epsilon_at(&config.agent.schedule, frames_seen);
            let action = select_action(&params, &phi, eps, &mut action_rng)?;
            let (step, ticks) =
                skip_step(env.as_mut(), action, config.agent.frame_skip, config.agent.clip_rewards)?;
            frames_seen += ticks as u64;
            let phi_next = phi_append(Some(&phi), &step.frame, &config.preproc)?;
            memory.push(Transition {
                phi_before: phi,
                action,
                reward: step.reward,
                phi_after: phi_next.clone(),
                terminal: step.terminal,
            });
            match train_step(&mut params, &mut rms, &memory, &config.agent, &mut replay_rng) {
                Ok(Some(loss)) => {
                    loss_sum += loss as f64;
                    loss_count += 1;
                }
                Ok(None) => {}
                Err(e) => {
                    let diag = out_dir.join("diagnostic.dqnc");
                    save_checkpoint(&params, &rms, &diag)?;
                    return Err(Error::Training(format!(
                        "{e} at frame {frames_seen}; diagnostic checkpoint written to {}",
                        diag.display()
                    )));
                }
            }
            phi = phi_next;

            if frames_seen >= next_eval {
                epoch += 1;
                emit_metrics(
                    &params,
                    &rms,
                    epoch,
                    frames_seen,
                    &mut loss_sum,
                    &mut loss_count,
                    &mut metrics,
                    &mut metrics_out,
                )?;
                next_eval = (frames_seen / config.eval_every_frames + 1)
                    * config.eval_every_frames;
            }
            if frames_seen >= config.total_frames {
                break 'training;
            }
            if step.terminal {
                break;
            }
        }
    }

    if metrics.last().map(|r| r.frames_seen) != Some(frames_seen) {
        epoch += 1;
        emit_metrics(
            &params,
            &rms,
            epoch,
            frames_seen,
            &mut loss_sum,
            &mut loss_count,
            &mut metrics,
            &mut metrics_out,
        )?;
    }

    let final_path = out_dir.join("final.dqnc");
    save_checkpoint(&params, &rms, &final_path)?;
    Ok(TrainOutcome {
        frames_seen,
        episodes,
        metrics,
        metrics_path,
        final_checkpoint_path: final_path,
    })
}

/// Loads a checkpoint and scores it on a named environment with inferred
/// identity preprocessing.
pub fn evaluate_checkpoint(
    checkpoint: &Checkpoint,
    env: &mut dyn Environment,
    episodes: usize,
    eval_epsilon: f64,
    frame_skip: u32,
    seed: u64,
) -> Result<EvalReport> {
    let preproc = preproc_for(checkpoint.params.geometry(), env.spec())?;
    evaluate(
        &checkpoint.params,
        env,
        &preproc,
        episodes,
        eval_epsilon,
        frame_skip,
        seed,
    )
}
