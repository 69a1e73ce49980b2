//! Experiment harness (placeholder).
