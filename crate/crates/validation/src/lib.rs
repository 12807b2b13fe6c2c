//! Holds the workspace acceptance suite (`tests/acceptance.rs`). It lives in
//! its own package so that cargo runs it after the `acd-core` test suites.
