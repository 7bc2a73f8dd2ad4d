//! Block partition of the observation grid and realized block covariances.
//!
//! The `n` sampling intervals are split into `L = floor(n / c)` consecutive
//! blocks of `c` intervals. Block `l` spans global indices
//! `c*l .. c*(l+1)`, and its realized covariance
//!
//! ```text
//! Zhat_l = (1 / (c h)) sum_{m=1..c} (Y_{t^l_m} - Y_{t^l_{m-1}})(...)^T
//! ```
//!
//! is the nonparametric proxy for the quadratic covariation `V V^T` used to
//! weight the next block's drift residual.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::linalg;
use crate::sim::ObservationRecord;

/// Index arithmetic for the block partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockScheme {
    pub n: usize,
    pub c: usize,
    pub blocks: usize,
}

impl BlockScheme {
    /// Global index of the block anchor `t^l_0`.
    pub fn anchor(&self, l: usize) -> usize {
        self.c * l
    }

    /// Global index of `t^l_m`.
    pub fn within(&self, l: usize, m: usize) -> usize {
        m + self.c * l
    }
}

/// Build the partition. Requires `c >= 2` and `n >= 2c` so that the
/// likelihood sum over blocks `1..L-1` is nonempty.
pub fn build_blocks(n: usize, c: usize) -> Result<BlockScheme> {
    if c < 2 {
        return Err(Error::Config(format!("block size c must be >= 2, got {c}")));
    }
    if n < 2 * c {
        return Err(Error::InsufficientData { n, c });
    }
    Ok(BlockScheme {
        n,
        c,
        blocks: n / c,
    })
}

/// Realized covariance of one block together with its degeneracy status.
#[derive(Debug, Clone)]
pub struct RealizedBlockCov {
    pub l: usize,
    pub z_hat: Array2<f64>,
    pub degenerate: bool,
    /// Lower Cholesky factor; present exactly when not degenerate.
    pub chol_factor: Option<Array2<f64>>,
}

/// Numerical reading of the indicator `1{det Zhat > 0}`: a block counts as
/// degenerate when the Cholesky factorization fails or when
/// `det Zhat < 1e-12 * (trace(Zhat)/d_y)^{d_y}` (a scale-free threshold).
pub fn realized_block_cov(
    obs: &ObservationRecord,
    scheme: &BlockScheme,
    l: usize,
) -> Result<RealizedBlockCov> {
    if l >= scheme.blocks {
        return Err(Error::IndexOutOfRange {
            index: l,
            blocks: scheme.blocks,
        });
    }
    let d = obs.d_y();
    let mut z = Array2::<f64>::zeros((d, d));
    for m in 1..=scheme.c {
        let hi = obs.y_path.row(scheme.within(l, m));
        let lo = obs.y_path.row(scheme.within(l, m - 1));
        for i in 0..d {
            let di = hi[i] - lo[i];
            for j in 0..d {
                z[[i, j]] += di * (hi[j] - lo[j]);
            }
        }
    }
    z /= scheme.c as f64 * obs.h;

    let (degenerate, chol_factor) = classify(&z, d);
    Ok(RealizedBlockCov {
        l,
        z_hat: z,
        degenerate,
        chol_factor,
    })
}

fn classify(z: &Array2<f64>, d: usize) -> (bool, Option<Array2<f64>>) {
    match linalg::cholesky(z.view()) {
        Some(l) => {
            let det = linalg::det_from_cholesky(&l);
            let scale = (z.diag().sum() / d as f64).powi(d as i32);
            if det < 1e-12 * scale {
                (true, None)
            } else {
                (false, Some(l))
            }
        }
        None => (true, None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, Array2};

    fn obs_from_y(y: Array2<f64>, h: f64) -> ObservationRecord {
        let n = y.nrows() - 1;
        ObservationRecord {
            n,
            h,
            x_path: Array2::zeros((n + 1, 0)),
            y_path: y,
            seed: 0,
            scenario_name: "test".into(),
        }
    }

    #[test]
    fn build_blocks_index_arithmetic() {
        let s = build_blocks(100, 10).unwrap();
        assert_eq!(s.blocks, 10);
        assert_eq!(s.anchor(3), 30);
        assert_eq!(s.within(3, 7), 37);
        // blocks are contiguous
        assert_eq!(s.within(4, 10), s.within(5, 0));
    }

    #[test]
    fn build_blocks_floors_and_leaves_tail_unused() {
        let s = build_blocks(105, 10).unwrap();
        assert_eq!(s.blocks, 10);
        assert!(s.within(s.blocks - 1, s.c) <= s.n);
    }

    #[test]
    fn build_blocks_insufficient_data() {
        assert!(matches!(
            build_blocks(15, 10),
            Err(Error::InsufficientData { .. })
        ));
        assert!(matches!(build_blocks(10, 1), Err(Error::Config(_))));
    }

    #[test]
    fn realized_cov_scalar_hand_value() {
        // increments +1, -1 over c=2, h=0.5: (1 + 1) / (2 * 0.5) = 2
        let y = arr2(&[[0.0], [1.0], [0.0]]);
        let obs = obs_from_y(y, 0.5);
        let scheme = BlockScheme { n: 2, c: 2, blocks: 1 };
        let rc = realized_block_cov(&obs, &scheme, 0).unwrap();
        assert!((rc.z_hat[[0, 0]] - 2.0).abs() < 1e-15);
        assert!(!rc.degenerate);
    }

    #[test]
    fn realized_cov_two_dim_orthogonal_increments() {
        let y = arr2(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]);
        let obs = obs_from_y(y, 1.0);
        let scheme = BlockScheme { n: 2, c: 2, blocks: 1 };
        let rc = realized_block_cov(&obs, &scheme, 0).unwrap();
        let expect = arr2(&[[0.5, 0.0], [0.0, 0.5]]);
        assert_eq!(rc.z_hat, expect);
        assert!(!rc.degenerate);
    }

    #[test]
    fn single_increment_is_rank_deficient_for_two_dims() {
        let y = arr2(&[[0.0, 0.0], [1.0, 2.0]]);
        let obs = obs_from_y(y, 1.0);
        let scheme = BlockScheme { n: 1, c: 1, blocks: 1 };
        let rc = realized_block_cov(&obs, &scheme, 0).unwrap();
        assert!(rc.degenerate);
        assert!(rc.chol_factor.is_none());
    }

    #[test]
    fn index_out_of_range() {
        let y = arr2(&[[0.0], [1.0], [0.0]]);
        let obs = obs_from_y(y, 0.5);
        let scheme = BlockScheme { n: 2, c: 2, blocks: 1 };
        assert!(matches!(
            realized_block_cov(&obs, &scheme, 1),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn z_hat_is_exactly_symmetric_and_near_psd() {
        let mut rng = crate::rng::GaussianStream::new(17);
        for d in [1usize, 2, 3] {
            let n = 60;
            let mut flat = vec![0.0];
            let mut y = vec![0.0; d];
            flat.clear();
            flat.extend(y.iter());
            for _ in 0..n {
                for v in y.iter_mut() {
                    *v += 0.1 * rng.next_normal();
                }
                flat.extend(y.iter());
            }
            let obs = obs_from_y(Array2::from_shape_vec((n + 1, d), flat).unwrap(), 0.01);
            let scheme = build_blocks(n, 10).unwrap();
            for l in 0..scheme.blocks {
                let rc = realized_block_cov(&obs, &scheme, l).unwrap();
                for i in 0..d {
                    for j in 0..d {
                        assert_eq!(
                            rc.z_hat[[i, j]].to_bits(),
                            rc.z_hat[[j, i]].to_bits(),
                            "exact symmetry"
                        );
                    }
                }
                // eigenvalues >= -1e-14 * trace: shifting by that much must
                // give a positive definite matrix
                let trace = rc.z_hat.diag().sum();
                let mut shifted = rc.z_hat.clone();
                for i in 0..d {
                    shifted[[i, i]] += 1e-14 * trace.abs() + f64::MIN_POSITIVE;
                }
                if !rc.degenerate {
                    assert!(linalg::cholesky(shifted.view()).is_some());
                }
            }
        }
    }
}
