//! GridWorld: a 12×12 cell grid rendered at 2×2 pixels per cell. The agent
//! starts at (1,1) and moves up/down/left/right with wall clamping. Reaching
//! the goal at (10,10) pays +1, falling in the pit at (5,5) pays −1; both
//! end the episode. Every other step pays 0.

use super::{check_step_preconditions, EnvSpec, Environment, Frame, StepResult};
use crate::error::Result;

const CELLS: usize = 12;
const CELL_PX: usize = 2;
const START: (usize, usize) = (1, 1);
const GOAL: (usize, usize) = (10, 10);
const PIT: (usize, usize) = (5, 5);

const EMPTY_PX: u8 = 0;
const PIT_PX: u8 = 85;
const GOAL_PX: u8 = 170;
const AGENT_PX: u8 = 255;

/// Actions: 0 up, 1 down, 2 left, 3 right. Coordinates are (x, y) with y
/// growing downward.
pub struct GridWorld {
    spec: EnvSpec,
    x: usize,
    y: usize,
    steps: u32,
    terminal: bool,
    needs_reset: bool,
}

impl GridWorld {
    pub fn new() -> GridWorld {
        GridWorld::with_max_steps(200)
    }

    pub fn with_max_steps(max_episode_steps: u32) -> GridWorld {
        GridWorld {
            spec: EnvSpec {
                name: "gridworld".into(),
                num_actions: 4,
                frame_width: CELLS * CELL_PX,
                frame_height: CELLS * CELL_PX,
                frame_channels: 1,
                max_episode_steps,
            },
            x: START.0,
            y: START.1,
            steps: 0,
            terminal: false,
            needs_reset: true,
        }
    }

    fn render(&self) -> Frame {
        let side = CELLS * CELL_PX;
        let mut pixels = vec![EMPTY_PX; side * side];
        let mut paint = |cell: (usize, usize), value: u8| {
            for dy in 0..CELL_PX {
                let row = cell.1 * CELL_PX + dy;
                for dx in 0..CELL_PX {
                    pixels[row * side + cell.0 * CELL_PX + dx] = value;
                }
            }
        };
        paint(PIT, PIT_PX);
        paint(GOAL, GOAL_PX);
        paint((self.x, self.y), AGENT_PX);
        Frame::new(side, side, 1, pixels).expect("gridworld frame is consistent")
    }
}

impl Default for GridWorld {
    fn default() -> Self {
        GridWorld::new()
    }
}

impl Environment for GridWorld {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// The start configuration is fixed; the seed is accepted for interface
    /// uniformity.
    fn reset(&mut self, _seed: u64) -> Frame {
        self.x = START.0;
        self.y = START.1;
        self.steps = 0;
        self.terminal = false;
        self.needs_reset = false;
        self.render()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        check_step_preconditions(&self.spec, self.needs_reset, self.terminal, action)?;
        match action {
            0 => self.y = self.y.saturating_sub(1),
            1 => self.y = (self.y + 1).min(CELLS - 1),
            2 => self.x = self.x.saturating_sub(1),
            _ => self.x = (self.x + 1).min(CELLS - 1),
        }
        self.steps += 1;
        let mut reward = 0.0;
        if (self.x, self.y) == GOAL {
            reward = 1.0;
            self.terminal = true;
        } else if (self.x, self.y) == PIT {
            reward = -1.0;
            self.terminal = true;
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

#[cfg(test)]
mod tests {
    use super::*;

    fn cell_value(frame: &Frame, cell: (usize, usize)) -> u8 {
        frame.pixels[cell.1 * CELL_PX * frame.width + cell.0 * CELL_PX]
    }

    #[test]
    fn reset_places_agent_goal_and_pit() {
        let mut env = GridWorld::new();
        let frame = env.reset(0);
        assert_eq!(frame.width, 24);
        assert_eq!(frame.height, 24);
        assert_eq!(cell_value(&frame, START), AGENT_PX);
        assert_eq!(cell_value(&frame, GOAL), GOAL_PX);
        assert_eq!(cell_value(&frame, PIT), PIT_PX);
        // each cell paints its full 2x2 block
        assert_eq!(frame.pixels.iter().filter(|&&p| p == AGENT_PX).count(), 4);
    }

    #[test]
    fn plain_moves_pay_zero_and_continue() {
        let mut env = GridWorld::new();
        env.reset(0);
        let r = env.step(3).unwrap();
        assert_eq!(r.reward, 0.0);
        assert!(!r.terminal);
    }

    #[test]
    fn walls_clamp_movement() {
        let mut env = GridWorld::new();
        env.reset(0);
        // walk into the top-left corner and keep pushing
        env.step(0).unwrap();
        env.step(2).unwrap();
        let r = env.step(0).unwrap();
        assert_eq!(cell_value(&r.frame, (0, 0)), AGENT_PX);
        let r = env.step(2).unwrap();
        assert_eq!(cell_value(&r.frame, (0, 0)), AGENT_PX);
    }

    #[test]
    fn reaching_the_goal_pays_one_and_terminates() {
        let mut env = GridWorld::new();
        env.reset(0);
        let mut last = None;
        for _ in 0..9 {
            last = Some(env.step(3).unwrap());
        }
        assert_eq!(last.as_ref().unwrap().reward, 0.0);
        for _ in 0..9 {
            last = Some(env.step(1).unwrap());
        }
        let last = last.unwrap();
        assert!(last.terminal);
        assert_eq!(last.reward, 1.0);
    }

    #[test]
    fn stepping_into_the_pit_pays_minus_one() {
        let mut env = GridWorld::new();
        env.reset(0);
        for _ in 0..4 {
            env.step(3).unwrap();
        }
        let mut last = None;
        for _ in 0..4 {
            last = Some(env.step(1).unwrap());
        }
        let last = last.unwrap();
        assert!(last.terminal);
        assert_eq!(last.reward, -1.0);
    }

    #[test]
    fn truncation_ends_the_episode_with_zero_reward() {
        let mut env = GridWorld::with_max_steps(5);
        env.reset(0);
        for i in 1..=5 {
            let r = env.step(0).unwrap();
            assert_eq!(r.terminal, i == 5);
            assert_eq!(r.reward, 0.0);
        }
    }
}
