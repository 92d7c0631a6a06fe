//! Empty library; the acceptance suite lives in `tests/acceptance.rs`.
