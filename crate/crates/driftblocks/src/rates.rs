//! Power-law sampling schedules `h = n^{-0.05 l}`, `c = n^{0.05 k}` and the
//! admissibility rules that make the estimator's asymptotics valid:
//!
//! * rule `a`: `n h^2 c -> 0`, i.e. `k <= 2l - 20`;
//! * rule `b`: `sqrt(n h) / c -> 0`, i.e. `k >= max(1, 10 - l/2)`;
//! * rule `c`: `n^3 h^5 -> 0`, i.e. `l > 12`;
//! * `range`: the combined admissible window `13 <= l <= 19`.
//!
//! Rule `a` is applied with an inclusive upper bound: the reference error
//! grids populate the `k = 2l - 20` cells, so the boundary is treated as
//! admissible even though the limit statement alone would exclude it.

use serde::{Deserialize, Serialize};

/// Identifier of a violated admissibility rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateRule {
    A,
    B,
    C,
    Range,
}

/// Concrete `(h, c)` for a sample size together with validity diagnostics.
#[derive(Debug, Clone)]
pub struct RateSchedule {
    pub l: i64,
    pub k: i64,
    pub h: f64,
    pub c: usize,
    pub valid: bool,
    pub violated: Vec<RateRule>,
}

/// Check the combined admissibility of an `(l, k)` exponent pair:
/// `13 <= l <= 19` and `max(1, 10 - l/2) <= k <= 2l - 20`.
pub fn check_rate_conditions(l: i64, k: i64) -> (bool, Vec<RateRule>) {
    let mut violated = Vec::new();
    if k > 2 * l - 20 {
        violated.push(RateRule::A);
    }
    // 10 - l/2 in real arithmetic; k is an integer
    if (k as f64) < (10.0 - l as f64 / 2.0).max(1.0) {
        violated.push(RateRule::B);
    }
    if l <= 12 {
        violated.push(RateRule::C);
    }
    if !(13..=19).contains(&l) {
        violated.push(RateRule::Range);
    }
    (violated.is_empty(), violated)
}

/// Map `(n, l, k)` to the concrete step and block size. `c` is rounded to
/// the nearest integer with a floor of 2 (a single-interval block has a
/// rank-deficient realized covariance whenever `d_y > 1`).
pub fn schedule(n: usize, l: i64, k: i64) -> RateSchedule {
    let nf = n as f64;
    let h = nf.powf(-0.05 * l as f64);
    let c = (nf.powf(0.05 * k as f64).round() as usize).max(2);
    let (valid, violated) = check_rate_conditions(l, k);
    RateSchedule {
        l,
        k,
        h,
        c,
        valid,
        violated,
    }
}

/// Row/column ranges of the reference validity grid.
pub const K_RANGE: std::ops::RangeInclusive<i64> = 1..=18;
pub const L_RANGE: std::ops::RangeInclusive<i64> = 13..=19;

/// CSV rendering of the validity grid: rows `k = 1..18`, columns
/// `l = 13..19`, cells 0/1.
pub fn validity_grid_csv() -> String {
    let mut out = String::from("k");
    for l in L_RANGE {
        out.push_str(&format!(",{l}"));
    }
    out.push('\n');
    for k in K_RANGE {
        out.push_str(&k.to_string());
        for l in L_RANGE {
            let (ok, _) = check_rate_conditions(l, k);
            out.push_str(if ok { ",1" } else { ",0" });
        }
        out.push('\n');
    }
    out
}

/// Number of valid cells in the `k = 1..18`, `l = 13..19` grid.
pub fn valid_cell_count() -> usize {
    let mut count = 0;
    for k in K_RANGE {
        for l in L_RANGE {
            if check_rate_conditions(l, k).0 {
                count += 1;
            }
        }
    }
    count
}
