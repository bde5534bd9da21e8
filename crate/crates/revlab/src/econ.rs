//! Welfare layer: certainty equivalents, value of information, acquisition.
