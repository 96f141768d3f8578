//! Catch: a ball falls one row per tick in a fixed column; a paddle on the
//! bottom row moves one pixel per tick. The episode ends when the ball
//! reaches the bottom row, scoring +1 if a paddle pixel shares its column
//! and −1 otherwise. That terminal step carries the only nonzero reward.

use super::{check_step_preconditions, EnvSpec, Environment, Frame, StepResult};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ON: u8 = 255;

/// Actions: 0 moves the paddle left, 1 stays, 2 moves right.
pub struct Catch {
    spec: EnvSpec,
    paddle_half: usize,
    ball_row: usize,
    ball_col: usize,
    paddle_center: usize,
    steps: u32,
    terminal: bool,
    needs_reset: bool,
}

impl Catch {
    /// The default 24×24 single-channel geometry with a 3-pixel paddle.
    pub fn new() -> Catch {
        Catch::with_geometry(24, 24, 3, 24).expect("default geometry is valid")
    }

    /// Custom geometry. The paddle width must be odd and fit in the frame,
    /// and the step bound must allow the ball to reach the bottom row.
    pub fn with_geometry(
        width: usize,
        height: usize,
        paddle_width: usize,
        max_episode_steps: u32,
    ) -> Result<Catch> {
        let mut problems = Vec::new();
        if width < 2 || height < 2 {
            problems.push(format!("frame must be at least 2x2, got {width}x{height}"));
        }
        if paddle_width % 2 == 0 || paddle_width == 0 {
            problems.push(format!("paddle width must be odd, got {paddle_width}"));
        }
        if paddle_width > width {
            problems.push(format!(
                "paddle width {paddle_width} exceeds frame width {width}"
            ));
        }
        if (max_episode_steps as usize) < height - 1 {
            problems.push(format!(
                "max_episode_steps {max_episode_steps} would truncate before the ball lands \
                 (needs at least {})",
                height - 1
            ));
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems.join("; ")));
        }
        Ok(Catch {
            spec: EnvSpec {
                name: "catch".into(),
                num_actions: 3,
                frame_width: width,
                frame_height: height,
                frame_channels: 1,
                max_episode_steps,
            },
            paddle_half: paddle_width / 2,
            ball_row: 0,
            ball_col: 0,
            paddle_center: width / 2,
            steps: 0,
            terminal: false,
            needs_reset: true,
        })
    }

    fn width(&self) -> usize {
        self.spec.frame_width
    }

    fn height(&self) -> usize {
        self.spec.frame_height
    }

    fn paddle_range(&self) -> (usize, usize) {
        (self.paddle_half, self.width() - 1 - self.paddle_half)
    }

    fn render(&self) -> Frame {
        let (w, h) = (self.width(), self.height());
        let mut pixels = vec![0u8; w * h];
        pixels[self.ball_row * w + self.ball_col] = ON;
        let bottom = (h - 1) * w;
        for c in self.paddle_center - self.paddle_half..=self.paddle_center + self.paddle_half {
            pixels[bottom + c] = ON;
        }
        Frame::new(w, h, 1, pixels).expect("catch frame is consistent")
    }

    fn caught(&self) -> bool {
        self.ball_col.abs_diff(self.paddle_center) <= self.paddle_half
    }

    /// Expected return of an optimal player: 1.0 exactly when, for every
    /// start column, some covering paddle position is reachable within the
    /// ball's fall time; misses count −1. Exhaustive over start columns.
    pub fn optimal_return(&self) -> f64 {
        let (lo, hi) = self.paddle_range();
        let start = (self.width() / 2).clamp(lo, hi);
        let fall_time = self.height() - 1;
        let mut total = 0.0;
        for ball in 0..self.width() {
            // Paddle centers covering this column; never empty for a paddle
            // that fits the frame.
            let c_lo = ball.saturating_sub(self.paddle_half).max(lo);
            let c_hi = (ball + self.paddle_half).min(hi);
            let moves = if start < c_lo {
                c_lo - start
            } else if start > c_hi {
                start - c_hi
            } else {
                0
            };
            total += if moves <= fall_time { 1.0 } else { -1.0 };
        }
        total / self.width() as f64
    }

    /// Expected return of the uniform-random policy, computed exactly by
    /// propagating the paddle-position distribution through every decision
    /// block (actions repeat for `frame_skip` ticks, clamped at the walls)
    /// and averaging over the uniform start column.
    pub fn random_policy_return(&self, frame_skip: u32) -> f64 {
        assert!(frame_skip >= 1);
        let (lo, hi) = self.paddle_range();
        let w = self.width();
        let mut dist = vec![0.0f64; w];
        dist[(w / 2).clamp(lo, hi)] = 1.0;
        let mut remaining = self.height() - 1;
        while remaining > 0 {
            let block = remaining.min(frame_skip as usize);
            let mut next = vec![0.0f64; w];
            for (c, &p) in dist.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let third = p / 3.0;
                next[c.saturating_sub(block).clamp(lo, hi)] += third;
                next[c] += third;
                next[(c + block).clamp(lo, hi)] += third;
            }
            dist = next;
            remaining -= block;
        }
        let mut total = 0.0;
        for ball in 0..w {
            let p_catch: f64 = dist
                .iter()
                .enumerate()
                .filter(|(c, _)| c.abs_diff(ball) <= self.paddle_half)
                .map(|(_, p)| p)
                .sum();
            total += 2.0 * p_catch - 1.0;
        }
        total / w as f64
    }
}

impl Default for Catch {
    fn default() -> Self {
        Catch::new()
    }
}

impl Environment for Catch {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.ball_row = 0;
        self.ball_col = rng.gen_range(0..self.width());
        self.paddle_center = self.width() / 2;
        let (lo, hi) = self.paddle_range();
        self.paddle_center = self.paddle_center.clamp(lo, hi);
        self.steps = 0;
        self.terminal = false;
        self.needs_reset = false;
        self.render()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        check_step_preconditions(&self.spec, self.needs_reset, self.terminal, action)?;
        let (lo, hi) = self.paddle_range();
        self.paddle_center = match action {
            0 => self.paddle_center.saturating_sub(1).clamp(lo, hi),
            1 => self.paddle_center,
            _ => (self.paddle_center + 1).clamp(lo, hi),
        };
        self.ball_row += 1;
        self.steps += 1;
        let mut reward = 0.0;
        if self.ball_row == self.height() - 1 {
            self.terminal = true;
            reward = if self.caught() { 1.0 } else { -1.0 };
        } else if self.steps >= self.spec.max_episode_steps {
            self.terminal = true;
        }
        Ok(StepResult {
            frame: self.render(),
            reward,
            terminal: self.terminal,
        })
    }
}
