//! Experiment runner shared by the CLI.
