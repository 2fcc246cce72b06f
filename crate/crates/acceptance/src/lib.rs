//! Holds the `acceptance` test target, which prints one PASS/FAIL line per
//! criterion and exits non-zero if any fails. Run it with
//! `cargo test -p dpm-acceptance --test acceptance`.
