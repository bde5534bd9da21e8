//! Heterogeneity mechanism harness.
