//! Holds the `acceptance` test target; run it with
//! `cargo test -p she-moments-suite --test acceptance`.
