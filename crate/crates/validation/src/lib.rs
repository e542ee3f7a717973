//! Holds the `acceptance` test target, which checks the solver and the
//! experiment pipeline against fixed pass/fail criteria. Run it with
//! `cargo test -p iosim-validation --test acceptance`.
