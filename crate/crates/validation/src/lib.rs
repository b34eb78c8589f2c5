//! Acceptance checks for the identification pipeline live in
//! `tests/acceptance.rs`; this crate has no library code.
