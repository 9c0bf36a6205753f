//! Multi-UAV pursuit-evasion simulation with double-DQN training.
//!
//! Modules build bottom-up: [`dynamics`] integrates the point-mass model,
//! [`engagement`] turns pairs of states into geometry and observations,
//! [`rewards`] scores them, [`qnet`] and [`replay`] hold the learner,
//! [`opponents`] supplies non-learning blue policies, [`arena`] runs
//! engagements and [`trainer`] drives learning.

pub mod arena;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod engagement;
pub mod error;
pub mod opponents;
pub mod qnet;
pub mod replay;
pub mod rewards;
pub mod seeding;
pub mod trainer;

pub use error::{Error, Result};
