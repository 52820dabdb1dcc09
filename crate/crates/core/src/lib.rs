//! Derivative-free worst-case (min–max) optimization toolkit.
//!
//! Minimizes F(x) = max_s f(x, s) over a finite scenario set with CMA-ES,
//! either brute-force (every scenario per candidate) or with adaptive
//! scenario subset selection, which learns per-scenario sampling
//! probabilities from the observed support structure and evaluates
//! candidates only on a sampled subset.
//!
//! - [`cma`] — the (μ/μ_w, λ)-CMA-ES engine with restart control.
//! - [`as3`] — subset-selection probabilities, sampling, and updates.
//! - [`worstcase`] — worst-case evaluation, f-call accounting, rank
//!   correlation, and a brute-force support-scenario oracle.
//! - [`problems`] — five analytic benchmark families and a grid-based
//!   well-placement objective.
//! - [`harness`] — algorithm runners, multi-trial experiments, summary
//!   statistics, and trace export.

pub mod as3;
pub mod cma;
pub mod harness;
pub mod problems;
pub mod special;
pub mod worstcase;
