//! Episodic environments: a memory corridor POMDP and classic cart-pole.

use rand::{Rng, RngCore};

use crate::{Error, Result};

/// Feature vector handed to the agent. Fixed length per environment.
pub type Observation = Vec<f64>;

/// One transition. `done` is a terminal state (no bootstrapping); `truncated`
/// is a time-limit cut where the episode could have continued (bootstrap from
/// `obs`). The two are mutually exclusive.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    pub truncated: bool,
}

pub trait Env: Send {
    fn obs_dim(&self) -> usize;
    fn n_actions(&self) -> usize;
    /// Upper bound on episode length; every episode ends (done or truncated)
    /// within this many steps.
    fn max_episode_len(&self) -> usize;
    fn reset(&mut self, rng: &mut dyn RngCore) -> Observation;
    fn step(&mut self, action: usize, rng: &mut dyn RngCore) -> Result<StepResult>;
}

/// Construct an environment by config name.
pub fn make_env(name: &str, corridor_length: usize) -> Result<Box<dyn Env>> {
    match name {
        "corridor" => Ok(Box::new(Corridor::new(corridor_length)?)),
        "cartpole" => Ok(Box::new(CartPole::new())),
        other => Err(Error::Config(format!("unknown environment '{other}'"))),
    }
}

/// Memory corridor of length `L`: the start cell is colored blue or red
/// (50/50) and every later cell looks identical ("neutral"). Both actions
/// walk right; the final action picks the top or bottom terminal cell, paying
/// +1 when it matches the start color (blue → up, red → down) and −1
/// otherwise. Episodes last exactly `L` steps, so the return is ±1 and a
/// memoryless agent earns 0 in expectation.
///
/// Observations are a 3-way one-hot over {blue, red, neutral}; actions are
/// `0 = up`, `1 = down`.
#[derive(Debug, Clone)]
pub struct Corridor {
    length: usize,
    pos: usize,
    start_blue: bool,
    active: bool,
}

pub const CORRIDOR_UP: usize = 0;
pub const CORRIDOR_DOWN: usize = 1;

const OBS_BLUE: [f64; 3] = [1.0, 0.0, 0.0];
const OBS_RED: [f64; 3] = [0.0, 1.0, 0.0];
const OBS_NEUTRAL: [f64; 3] = [0.0, 0.0, 1.0];

impl Corridor {
    pub fn new(length: usize) -> Result<Self> {
        if length < 2 {
            return Err(Error::Config(format!("corridor length must be ≥ 2, got {length}")));
        }
        Ok(Self { length, pos: 0, start_blue: false, active: false })
    }

    pub fn length(&self) -> usize {
        self.length
    }
}

impl Env for Corridor {
    fn obs_dim(&self) -> usize {
        3
    }

    fn n_actions(&self) -> usize {
        2
    }

    fn max_episode_len(&self) -> usize {
        self.length
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Observation {
        self.pos = 0;
        self.start_blue = rng.gen_bool(0.5);
        self.active = true;
        if self.start_blue { OBS_BLUE } else { OBS_RED }.to_vec()
    }

    fn step(&mut self, action: usize, _rng: &mut dyn RngCore) -> Result<StepResult> {
        if !self.active {
            return Err(Error::Usage("corridor stepped after episode end".into()));
        }
        if action > 1 {
            return Err(Error::InvalidInput(format!("corridor action must be 0 or 1, got {action}")));
        }
        if self.pos < self.length - 1 {
            self.pos += 1;
            Ok(StepResult { obs: OBS_NEUTRAL.to_vec(), reward: 0.0, done: false, truncated: false })
        } else {
            self.active = false;
            let rewarded = if self.start_blue { CORRIDOR_UP } else { CORRIDOR_DOWN };
            let reward = if action == rewarded { 1.0 } else { -1.0 };
            Ok(StepResult { obs: OBS_NEUTRAL.to_vec(), reward, done: true, truncated: false })
        }
    }
}

/// Classic cart-pole balancing with Euler integration: gravity 9.8, cart
/// mass 1.0, pole mass 0.1, pole half-length 0.5, force ±10, dt 0.02.
/// Terminal when |angle| exceeds 12° or |position| exceeds 2.4; truncated
/// after 500 steps; +1 reward per step. Actions: `0 = push left`,
/// `1 = push right`.
#[derive(Debug, Clone)]
pub struct CartPole {
    x: f64,
    x_dot: f64,
    theta: f64,
    theta_dot: f64,
    steps: usize,
    active: bool,
}

const GRAVITY: f64 = 9.8;
const MASS_CART: f64 = 1.0;
const MASS_POLE: f64 = 0.1;
const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
const POLE_HALF_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = MASS_POLE * POLE_HALF_LENGTH;
const FORCE_MAG: f64 = 10.0;
const DT: f64 = 0.02;
const THETA_THRESHOLD: f64 = 12.0 * std::f64::consts::PI / 180.0;
const X_THRESHOLD: f64 = 2.4;
const MAX_STEPS: usize = 500;

impl CartPole {
    pub fn new() -> Self {
        Self { x: 0.0, x_dot: 0.0, theta: 0.0, theta_dot: 0.0, steps: 0, active: false }
    }

    fn obs(&self) -> Observation {
        vec![self.x, self.x_dot, self.theta, self.theta_dot]
    }
}

impl Default for CartPole {
    fn default() -> Self {
        Self::new()
    }
}

impl Env for CartPole {
    fn obs_dim(&self) -> usize {
        4
    }

    fn n_actions(&self) -> usize {
        2
    }

    fn max_episode_len(&self) -> usize {
        MAX_STEPS
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Observation {
        self.x = rng.gen_range(-0.05..0.05);
        self.x_dot = rng.gen_range(-0.05..0.05);
        self.theta = rng.gen_range(-0.05..0.05);
        self.theta_dot = rng.gen_range(-0.05..0.05);
        self.steps = 0;
        self.active = true;
        self.obs()
    }

    fn step(&mut self, action: usize, _rng: &mut dyn RngCore) -> Result<StepResult> {
        if !self.active {
            return Err(Error::Usage("cart-pole stepped after episode end".into()));
        }
        if action > 1 {
            return Err(Error::InvalidInput(format!("cart-pole action must be 0 or 1, got {action}")));
        }
        let force = if action == 1 { FORCE_MAG } else { -FORCE_MAG };
        let (sin, cos) = self.theta.sin_cos();
        let temp = (force + POLE_MASS_LENGTH * self.theta_dot * self.theta_dot * sin) / TOTAL_MASS;
        let theta_acc = (GRAVITY * sin - cos * temp)
            / (POLE_HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos * cos / TOTAL_MASS));
        let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;

        self.x += DT * self.x_dot;
        self.x_dot += DT * x_acc;
        self.theta += DT * self.theta_dot;
        self.theta_dot += DT * theta_acc;
        self.steps += 1;

        let done = self.x.abs() > X_THRESHOLD || self.theta.abs() > THETA_THRESHOLD;
        let truncated = !done && self.steps >= MAX_STEPS;
        if done || truncated {
            self.active = false;
        }
        Ok(StepResult { obs: self.obs(), reward: 1.0, done, truncated })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Reset until the start color matches, scanning seeds deterministically.
    fn reset_with_color(env: &mut Corridor, blue: bool) -> Observation {
        for seed in 0..64 {
            let obs = env.reset(&mut rng(seed));
            if env.start_blue == blue {
                return obs;
            }
        }
        unreachable!("no seed among 64 produced the requested color");
    }

    #[test]
    fn corridor_reset_one_hot_colors() {
        let mut env = Corridor::new(3).unwrap();
        assert_eq!(reset_with_color(&mut env, true), vec![1.0, 0.0, 0.0]);
        assert_eq!(reset_with_color(&mut env, false), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn corridor_reset_color_is_balanced() {
        let mut env = Corridor::new(3).unwrap();
        let mut r = rng(0);
        let blue = (0..10_000).filter(|_| matches!(env.reset(&mut r)[0], b if b == 1.0)).count();
        let frac = blue as f64 / 10_000.0;
        assert!((0.48..=0.52).contains(&frac), "blue fraction {frac}");
    }

    #[test]
    fn corridor_blue_up_rewards() {
        let mut env = Corridor::new(3).unwrap();
        reset_with_color(&mut env, true);
        let mut r = rng(0);
        let rewards: Vec<f64> = (0..3).map(|_| env.step(CORRIDOR_UP, &mut r).unwrap().reward).collect();
        assert_eq!(rewards, vec![0.0, 0.0, 1.0]);

        reset_with_color(&mut env, true);
        for _ in 0..2 {
            let s = env.step(CORRIDOR_DOWN, &mut r).unwrap();
            assert!(!s.done);
            assert_eq!(s.obs, vec![0.0, 0.0, 1.0]);
        }
        let last = env.step(CORRIDOR_DOWN, &mut r).unwrap();
        assert!(last.done);
        assert_eq!(last.reward, -1.0);
    }

    #[test]
    fn corridor_red_down_rewards() {
        let mut env = Corridor::new(4).unwrap();
        reset_with_color(&mut env, false);
        let mut r = rng(0);
        for _ in 0..3 {
            assert_eq!(env.step(CORRIDOR_DOWN, &mut r).unwrap().reward, 0.0);
        }
        assert_eq!(env.step(CORRIDOR_DOWN, &mut r).unwrap().reward, 1.0);
    }

    #[test]
    fn corridor_episode_length_is_exactly_l() {
        let mut r = rng(3);
        for length in [2usize, 3, 7, 20] {
            let mut env = Corridor::new(length).unwrap();
            for _ in 0..10 {
                env.reset(&mut r);
                let mut steps = 0;
                loop {
                    let a = if r.gen_bool(0.5) { 0 } else { 1 };
                    let s = env.step(a, &mut r).unwrap();
                    steps += 1;
                    assert!(s.reward == 0.0 || steps == length);
                    if s.done {
                        break;
                    }
                }
                assert_eq!(steps, length);
            }
        }
    }

    #[test]
    fn corridor_memoryless_policy_earns_zero() {
        // constant-up is the best memoryless strategy; its return is ±1 with
        // equal probability, so the mean over many episodes is ≈ 0
        let mut env = Corridor::new(3).unwrap();
        let mut r = rng(11);
        let mut total = 0.0;
        for _ in 0..10_000 {
            env.reset(&mut r);
            for _ in 0..3 {
                total += env.step(CORRIDOR_UP, &mut r).unwrap().reward;
            }
        }
        assert!((total / 10_000.0).abs() <= 0.05);
    }

    #[test]
    fn corridor_step_after_done_is_usage_error() {
        let mut env = Corridor::new(2).unwrap();
        let mut r = rng(0);
        env.reset(&mut r);
        env.step(0, &mut r).unwrap();
        env.step(0, &mut r).unwrap();
        assert!(matches!(env.step(0, &mut r), Err(Error::Usage(_))));
    }

    #[test]
    fn cartpole_equilibrium_survives_alternating_pushes() {
        let mut env = CartPole::new();
        let mut r = rng(0);
        env.reset(&mut r);
        (env.x, env.x_dot, env.theta, env.theta_dot) = (0.0, 0.0, 0.0, 0.0);
        let a = env.step(1, &mut r).unwrap();
        assert!(!a.done);
        let b = env.step(0, &mut r).unwrap();
        assert!(!b.done);
        assert!(env.theta.abs() < 0.02);
    }

    #[test]
    fn cartpole_constant_force_falls_within_200_steps() {
        // independent Euler simulation of the same equations, then the env
        let mut th = 0.0f64;
        let mut th_dot = 0.0f64;
        let mut cart_x = 0.0f64;
        let mut cart_v = 0.0f64;
        let mut fail_step = None;
        for t in 1..=200 {
            let temp = (10.0 + 0.05 * th_dot * th_dot * th.sin()) / 1.1;
            let th_acc = (9.8 * th.sin() - th.cos() * temp) / (0.5 * (4.0 / 3.0 - 0.1 * th.cos() * th.cos() / 1.1));
            let x_acc = temp - 0.05 * th_acc * th.cos() / 1.1;
            cart_x += 0.02 * cart_v;
            cart_v += 0.02 * x_acc;
            th += 0.02 * th_dot;
            th_dot += 0.02 * th_acc;
            if cart_x.abs() > 2.4 || th.abs() > 12.0 * std::f64::consts::PI / 180.0 {
                fail_step = Some(t);
                break;
            }
        }
        let fail_step = fail_step.expect("constant force should topple the pole within 200 steps");

        let mut env = CartPole::new();
        let mut r = rng(0);
        env.reset(&mut r);
        (env.x, env.x_dot, env.theta, env.theta_dot) = (0.0, 0.0, 0.0, 0.0);
        let mut env_fail = None;
        for t in 1..=200 {
            if env.step(1, &mut r).unwrap().done {
                env_fail = Some(t);
                break;
            }
        }
        assert_eq!(env_fail, Some(fail_step));
    }

    #[test]
    fn cartpole_full_episode_returns_500() {
        // simple linear feedback keeps the pole up from any start draw
        let mut env = CartPole::new();
        let mut r = rng(17);
        for _ in 0..5 {
            env.reset(&mut r);
            let mut ret = 0.0;
            loop {
                let u = 0.8 * env.x + 1.9 * env.x_dot + 15.0 * env.theta + 3.1 * env.theta_dot;
                let s = env.step(if u > 0.0 { 1 } else { 0 }, &mut r).unwrap();
                ret += s.reward;
                assert!(!s.done, "controller lost the pole after {ret} steps");
                if s.truncated {
                    break;
                }
            }
            assert_eq!(ret, 500.0);
        }
    }

    #[test]
    fn cartpole_observations_stay_finite() {
        let mut env = CartPole::new();
        let mut r = rng(5);
        for _ in 0..50 {
            env.reset(&mut r);
            loop {
                let a = usize::from(r.gen_bool(0.5));
                let s = env.step(a, &mut r).unwrap();
                assert!(s.obs.iter().all(|v| v.is_finite()));
                if s.done || s.truncated {
                    break;
                }
            }
        }
    }

    #[test]
    fn envs_are_deterministic_given_seed() {
        for name in ["corridor", "cartpole"] {
            let mut a = make_env(name, 5).unwrap();
            let mut b = make_env(name, 5).unwrap();
            let (mut ra, mut rb) = (rng(9), rng(9));
            assert_eq!(a.reset(&mut ra), b.reset(&mut rb));
            for _ in 0..40 {
                let act = usize::from(ra.gen_bool(0.5));
                assert!(rb.gen_bool(0.5) == (act == 1));
                let sa = a.step(act, &mut ra).unwrap();
                let sb = b.step(act, &mut rb).unwrap();
                assert_eq!(sa.obs, sb.obs);
                assert_eq!(sa.reward, sb.reward);
                if sa.done || sa.truncated {
                    assert!(sb.done || sb.truncated);
                    a.reset(&mut ra);
                    b.reset(&mut rb);
                }
            }
        }
    }
}
