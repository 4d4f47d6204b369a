//! Heading arithmetic on the circle.

use std::f64::consts::{PI, TAU};

/// Wraps an angle to the half-open interval (-π, π].
pub fn wrap_to_pi(angle: f64) -> f64 {
    let a = angle.rem_euclid(TAU);
    if a > PI {
        a - TAU
    } else {
        a
    }
}

/// Shortest signed rotation taking `from` onto `to`, in (-π, π].
pub fn angle_diff(to: f64, from: f64) -> f64 {
    wrap_to_pi(to - from)
}
