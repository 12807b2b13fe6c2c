//! Autonomous cyber defense lab: a 13-host attack/defense simulator,
//! scripted attackers, a PPO defender trainer, and the statistics and
//! experiment harness used to study training and deployment pitfalls.

pub mod agents;
pub mod cli;
pub mod env;
pub mod experiments;
pub mod ppo;
pub mod seeding;
pub mod selftest;
pub mod stats;
