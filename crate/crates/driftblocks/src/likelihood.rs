//! Quasi-log-likelihood of the drift parameter.
//!
//! With `Delta_l Y = Y_{t^{l+1}_0} - Y_{t^l_0}` and `psihat_l(theta) =
//! psi(X_{t^l_0}, Y_{t^l_0}, Zhat_{l-1}, theta)`,
//!
//! ```text
//! H_n(theta) = -1/2 sum_{l=1..L-1} (Delta_l Y - c h psihat_l)^T
//!              [Zhat_{l-1}^{-1} / (c h)] (Delta_l Y - c h psihat_l)
//!              * 1{det Zhat_{l-1} > 0}
//! ```
//!
//! Block `l` borrows its covariance weight from block `l-1`, so the drift
//! residual and the volatility proxy never share data. Degenerate blocks
//! contribute exactly zero and are counted, never interpolated.

use ndarray::{Array1, Array2, ArrayView1};

use crate::blocks::{realized_block_cov, BlockScheme};
use crate::driver::DriverSpec;
use crate::error::{Error, Result};
use crate::linalg;
use crate::sim::ObservationRecord;

/// Value and derivatives of `H_n` at one parameter point.
#[derive(Debug, Clone)]
pub struct QuasiLikEval {
    pub value: f64,
    pub gradient: Option<Array1<f64>>,
    pub hessian: Option<Array2<f64>>,
    pub dropped_blocks: usize,
    pub used_blocks: usize,
}

struct BlockTerm {
    x: Array1<f64>,
    y: Array1<f64>,
    delta_y: Array1<f64>,
    z_hat: Array2<f64>,
    /// Lower Cholesky factor of `Zhat_{l-1}`; `None` marks a dropped block.
    chol: Option<Array2<f64>>,
}

/// Prepared per-block data for repeated evaluations of `H_n` at different
/// parameter values (realized covariances are independent of `theta`).
pub struct QuasiLikProblem<'d> {
    driver: &'d DriverSpec,
    terms: Vec<BlockTerm>,
    c_h: f64,
    n_h: f64,
    dropped: usize,
}

impl<'d> QuasiLikProblem<'d> {
    pub fn prepare(
        obs: &ObservationRecord,
        scheme: &BlockScheme,
        driver: &'d DriverSpec,
    ) -> Result<Self> {
        if driver.d_y() != obs.d_y() {
            return Err(Error::Dim(format!(
                "driver d_y={} but observations have d_y={}",
                driver.d_y(),
                obs.d_y()
            )));
        }
        if driver.d_x() != obs.d_x() {
            return Err(Error::Dim(format!(
                "driver d_x={} but observations have d_x={}",
                driver.d_x(),
                obs.d_x()
            )));
        }
        if scheme.n != obs.n {
            return Err(Error::Dim(format!(
                "block scheme built for n={} but observations have n={}",
                scheme.n, obs.n
            )));
        }
        let blocks = scheme.blocks;
        let mut terms = Vec::with_capacity(blocks.saturating_sub(1));
        let mut dropped = 0usize;
        for l in 1..blocks {
            let rc = realized_block_cov(obs, scheme, l - 1)?;
            if rc.degenerate {
                dropped += 1;
            }
            let a0 = scheme.anchor(l);
            let a1 = scheme.anchor(l + 1);
            let delta_y = &obs.y_path.row(a1) - &obs.y_path.row(a0);
            terms.push(BlockTerm {
                x: obs.x_path.row(a0).to_owned(),
                y: obs.y_path.row(a0).to_owned(),
                delta_y,
                z_hat: rc.z_hat,
                chol: rc.chol_factor,
            });
        }
        Ok(Self {
            driver,
            terms,
            c_h: scheme.c as f64 * obs.h,
            n_h: obs.n as f64 * obs.h,
            dropped,
        })
    }

    pub fn dropped_blocks(&self) -> usize {
        self.dropped
    }

    pub fn used_blocks(&self) -> usize {
        self.terms.len() - self.dropped
    }

    /// Observation horizon `n * h`; scales the variance of the estimator.
    pub fn horizon(&self) -> f64 {
        self.n_h
    }

    fn check_theta(&self, theta: ArrayView1<f64>) -> Result<()> {
        if theta.len() != self.driver.d_theta() {
            return Err(Error::Dim(format!(
                "theta has length {} but driver d_theta={}",
                theta.len(),
                self.driver.d_theta()
            )));
        }
        Ok(())
    }

    /// Evaluate `H_n` and, when requested, its analytic gradient and a
    /// Hessian whose second-order driver term is obtained by central finite
    /// differences of the analytic Jacobian.
    pub fn eval(&self, theta: ArrayView1<f64>, want_derivs: bool) -> Result<QuasiLikEval> {
        self.check_theta(theta)?;
        if self.used_blocks() == 0 {
            return Err(Error::AllDegenerate);
        }
        let d_theta = self.driver.d_theta();
        let c_h = self.c_h;
        let mut value = 0.0;
        let mut gradient = want_derivs.then(|| Array1::<f64>::zeros(d_theta));
        let mut first_order = want_derivs.then(|| Array2::<f64>::zeros((d_theta, d_theta)));
        // residual solves kept for the curvature correction pass
        let mut solves: Vec<Array1<f64>> = Vec::new();
        let needs_curvature = want_derivs && self.driver.linear_form().is_none();

        for term in &self.terms {
            let Some(chol) = &term.chol else { continue };
            let psi = self
                .driver
                .eval(term.x.view(), term.y.view(), term.z_hat.view(), theta)?;
            let r = &term.delta_y - &(psi * c_h);
            let u = linalg::cholesky_solve(chol, r.view());
            value -= 0.5 / c_h * r.dot(&u);
            if want_derivs {
                let jac =
                    self.driver
                        .jacobian_theta(term.x.view(), term.y.view(), term.z_hat.view(), theta)?;
                let g = gradient.as_mut().expect("gradient allocated");
                *g += &jac.t().dot(&u);
                let zinv_j = linalg::cholesky_solve_mat(chol, jac.view());
                let fo = first_order.as_mut().expect("hessian allocated");
                *fo -= &(jac.t().dot(&zinv_j) * c_h);
                if needs_curvature {
                    solves.push(u);
                }
            }
        }

        let hessian = if want_derivs {
            let mut hess = first_order.expect("hessian allocated");
            if needs_curvature {
                hess += &self.curvature_correction(theta, &solves)?;
            }
            Some(linalg::symmetrize(&hess))
        } else {
            None
        };

        Ok(QuasiLikEval {
            value,
            gradient,
            hessian,
            dropped_blocks: self.dropped,
            used_blocks: self.used_blocks(),
        })
    }

    /// `sum_l (d^2 psi / d theta_i d theta_j)^T Zhat^{-1} r_l`, with the
    /// second driver derivative replaced by a central difference of the
    /// analytic Jacobian (step `1e-6 (1 + |theta_j|)` per coordinate).
    fn curvature_correction(
        &self,
        theta: ArrayView1<f64>,
        solves: &[Array1<f64>],
    ) -> Result<Array2<f64>> {
        let d_theta = self.driver.d_theta();
        let mut corr = Array2::<f64>::zeros((d_theta, d_theta));
        let mut th = theta.to_owned();
        for j in 0..d_theta {
            let step = 1e-6 * (1.0 + theta[j].abs());
            let orig = th[j];
            let mut used_idx = 0usize;
            for term in &self.terms {
                if term.chol.is_none() {
                    continue;
                }
                th[j] = orig + step;
                let jp = self.driver.jacobian_theta(
                    term.x.view(),
                    term.y.view(),
                    term.z_hat.view(),
                    th.view(),
                )?;
                th[j] = orig - step;
                let jm = self.driver.jacobian_theta(
                    term.x.view(),
                    term.y.view(),
                    term.z_hat.view(),
                    th.view(),
                )?;
                th[j] = orig;
                let u = &solves[used_idx];
                used_idx += 1;
                for i in 0..d_theta {
                    let mut s = 0.0;
                    for row in 0..self.driver.d_y() {
                        s += (jp[[row, i]] - jm[[row, i]]) / (2.0 * step) * u[row];
                    }
                    corr[[i, j]] += s;
                }
            }
        }
        Ok(corr)
    }

    /// Empirical plug-in for the asymptotic information matrix:
    /// block average of `J^T Zhat^{-1} J` over non-degenerate blocks.
    pub fn gamma(&self, theta: ArrayView1<f64>) -> Result<Array2<f64>> {
        self.check_theta(theta)?;
        if self.used_blocks() == 0 {
            return Err(Error::AllDegenerate);
        }
        let d_theta = self.driver.d_theta();
        let mut gamma = Array2::<f64>::zeros((d_theta, d_theta));
        for term in &self.terms {
            let Some(chol) = &term.chol else { continue };
            let jac = self
                .driver
                .jacobian_theta(term.x.view(), term.y.view(), term.z_hat.view(), theta)?;
            let zinv_j = linalg::cholesky_solve_mat(chol, jac.view());
            gamma += &jac.t().dot(&zinv_j);
        }
        gamma /= self.used_blocks() as f64;
        Ok(linalg::symmetrize(&gamma))
    }

    /// Closed-form weighted least squares for drivers affine in theta,
    /// `psi = G(x,y,z) theta + b(x,y,z)`:
    ///
    /// ```text
    /// theta = (sum c h G^T Zhat^{-1} G)^{-1} sum G^T Zhat^{-1} (Delta Y - c h b)
    /// ```
    pub fn linear_solution(&self) -> Result<Array1<f64>> {
        let form = self
            .driver
            .linear_form()
            .ok_or_else(|| Error::NotLinear(self.driver.name().to_string()))?;
        if self.used_blocks() == 0 {
            return Err(Error::AllDegenerate);
        }
        let d_theta = self.driver.d_theta();
        let c_h = self.c_h;
        let mut normal = Array2::<f64>::zeros((d_theta, d_theta));
        let mut rhs = Array1::<f64>::zeros(d_theta);
        for term in &self.terms {
            let Some(chol) = &term.chol else { continue };
            let g = (form.regressor)(term.x.view(), term.y.view(), term.z_hat.view())?;
            let mut resid = term.delta_y.clone();
            if let Some(b) = &form.offset {
                let off = b(term.x.view(), term.y.view(), term.z_hat.view())?;
                resid -= &(off * c_h);
            }
            let zinv_g = linalg::cholesky_solve_mat(chol, g.view());
            normal += &(g.t().dot(&zinv_g) * c_h);
            rhs += &zinv_g.t().dot(&resid);
        }
        let chol = linalg::cholesky(normal.view()).ok_or(Error::SingularSystem)?;
        Ok(linalg::cholesky_solve(&chol, rhs.view()))
    }
}

/// Evaluate the quasi-log-likelihood at a single point. For repeated
/// evaluations prepare a [`QuasiLikProblem`] once instead.
pub fn quasi_loglik(
    obs: &ObservationRecord,
    scheme: &BlockScheme,
    driver: &DriverSpec,
    theta: ArrayView1<f64>,
    want_derivs: bool,
) -> Result<QuasiLikEval> {
    QuasiLikProblem::prepare(obs, scheme, driver)?.eval(theta, want_derivs)
}

/// Plug-in information matrix at `theta_hat`.
pub fn gamma_plugin(
    obs: &ObservationRecord,
    scheme: &BlockScheme,
    driver: &DriverSpec,
    theta_hat: ArrayView1<f64>,
) -> Result<Array2<f64>> {
    QuasiLikProblem::prepare(obs, scheme, driver)?.gamma(theta_hat)
}

/// Closed-form weighted least-squares estimate for affine drivers; serves
/// as an independent oracle for the iterative maximizer.
pub fn closed_form_linear(
    obs: &ObservationRecord,
    scheme: &BlockScheme,
    driver: &DriverSpec,
) -> Result<Array1<f64>> {
    QuasiLikProblem::prepare(obs, scheme, driver)?.linear_solution()
}
