//! Change-detection bandits for piecewise-stationary reward environments.
//!
//! The crate bundles four layers:
//!
//! - [`mod@env`] — piecewise-constant Bernoulli reward schedules (flipping,
//!   hazard-driven switching, trace replay) and their structural summaries
//!   (breakpoint counts, per-arm gaps, grid gap `lambda`).
//! - [`detect`] — online change detectors (two-sided CUSUM with burn-in
//!   estimation, Page-Hinkley test), detection-delay/false-alarm bound
//!   calculators, and Monte-Carlo detector evaluation.
//! - [`policy`] — the CD-UCB family (CUSUM-UCB with countdown timers,
//!   PHT-UCB) plus the usual non-stationary baselines (UCB, D-UCB, SW-UCB,
//!   Exp3.S, Rexp3, Exp3.R).
//! - [`mod@bench`] — seeded multi-trial rollouts, pseudo-regret traces, and
//!   `a*t^b + c` power-law curve fitting.
//!
//! The [`cli`] module wires everything into the `cdbandit` binary.
//!
//! Determinism is a hard contract throughout: every random quantity is
//! driven by a ChaCha8 stream derived from an explicit seed, trials reduce
//! in index order, and output files are byte-stable for a fixed
//! (config, seed) pair regardless of worker count.

pub mod bench;
pub mod cli;
pub mod detect;
pub mod env;
pub mod policy;
pub mod seeding;
