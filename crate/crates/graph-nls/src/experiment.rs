//! Placeholder — implemented in a later pass.
