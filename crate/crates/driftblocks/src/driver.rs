//! Driver functions.
//!
//! A driver is the drift map `psi(x, y, z, theta)` of the observed process:
//! `x` is the auxiliary factor (possibly absent), `y` the observed state,
//! `z` a symmetric positive definite matrix standing in for the unobserved
//! quadratic covariation `V V^T`, and `theta` the parameter to estimate.
//! During estimation `z` is a realized-covariance estimate, so z-dependent
//! drivers must accept any SPD matrix, not just values the true model can
//! attain.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg;

type EvalFn = Arc<
    dyn Fn(ArrayView1<f64>, ArrayView1<f64>, ArrayView2<f64>, ArrayView1<f64>) -> Result<Array1<f64>>
        + Send
        + Sync,
>;
type JacobianFn = Arc<
    dyn Fn(ArrayView1<f64>, ArrayView1<f64>, ArrayView2<f64>, ArrayView1<f64>) -> Result<Array2<f64>>
        + Send
        + Sync,
>;
type RegressorFn =
    Arc<dyn Fn(ArrayView1<f64>, ArrayView1<f64>, ArrayView2<f64>) -> Result<Array2<f64>> + Send + Sync>;
type OffsetFn =
    Arc<dyn Fn(ArrayView1<f64>, ArrayView1<f64>, ArrayView2<f64>) -> Result<Array1<f64>> + Send + Sync>;

/// Affine-in-theta structure `psi = G(x,y,z) theta + b(x,y,z)`, exposed by
/// drivers that have one so the closed-form weighted least-squares route can
/// use it.
#[derive(Clone)]
pub struct LinearForm {
    pub regressor: RegressorFn,
    pub offset: Option<OffsetFn>,
}

/// A driver together with its dimension metadata and derivatives.
#[derive(Clone)]
pub struct DriverSpec {
    name: String,
    d_x: usize,
    d_y: usize,
    d_theta: usize,
    depends_on_y: bool,
    fixed_params: BTreeMap<String, f64>,
    eval: EvalFn,
    jacobian: Option<JacobianFn>,
    linear: Option<LinearForm>,
}

impl fmt::Debug for DriverSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriverSpec")
            .field("name", &self.name)
            .field("d_x", &self.d_x)
            .field("d_y", &self.d_y)
            .field("d_theta", &self.d_theta)
            .field("depends_on_y", &self.depends_on_y)
            .field("fixed_params", &self.fixed_params)
            .finish()
    }
}

impl DriverSpec {
    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn d_x(&self) -> usize {
        self.d_x
    }
    pub fn d_y(&self) -> usize {
        self.d_y
    }
    pub fn d_theta(&self) -> usize {
        self.d_theta
    }
    pub fn depends_on_y(&self) -> bool {
        self.depends_on_y
    }
    pub fn fixed_params(&self) -> &BTreeMap<String, f64> {
        &self.fixed_params
    }
    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }
    pub fn linear_form(&self) -> Option<&LinearForm> {
        self.linear.as_ref()
    }

    fn check_dims(
        &self,
        x: ArrayView1<f64>,
        y: ArrayView1<f64>,
        z: ArrayView2<f64>,
        theta: ArrayView1<f64>,
    ) -> Result<()> {
        if x.len() != self.d_x {
            return Err(Error::Dim(format!(
                "driver `{}` expects d_x={}, got {}",
                self.name,
                self.d_x,
                x.len()
            )));
        }
        if y.len() != self.d_y {
            return Err(Error::Dim(format!(
                "driver `{}` expects d_y={}, got {}",
                self.name,
                self.d_y,
                y.len()
            )));
        }
        if z.nrows() != self.d_y || z.ncols() != self.d_y {
            return Err(Error::Dim(format!(
                "driver `{}` expects z of shape {d}x{d}, got {}x{}",
                self.name,
                z.nrows(),
                z.ncols(),
                d = self.d_y
            )));
        }
        if theta.len() != self.d_theta {
            return Err(Error::Dim(format!(
                "driver `{}` expects d_theta={}, got {}",
                self.name,
                self.d_theta,
                theta.len()
            )));
        }
        Ok(())
    }

    /// Evaluate `psi(x, y, z, theta)`.
    pub fn eval(
        &self,
        x: ArrayView1<f64>,
        y: ArrayView1<f64>,
        z: ArrayView2<f64>,
        theta: ArrayView1<f64>,
    ) -> Result<Array1<f64>> {
        self.check_dims(x, y, z, theta)?;
        (self.eval)(x, y, z, theta)
    }

    /// Jacobian of `psi` with respect to `theta`, shape `d_y x d_theta`.
    ///
    /// Uses the analytic Jacobian when the driver carries one, otherwise a
    /// central finite difference with per-coordinate step
    /// `1e-6 * (1 + |theta_j|)`.
    pub fn jacobian_theta(
        &self,
        x: ArrayView1<f64>,
        y: ArrayView1<f64>,
        z: ArrayView2<f64>,
        theta: ArrayView1<f64>,
    ) -> Result<Array2<f64>> {
        self.check_dims(x, y, z, theta)?;
        if let Some(jac) = &self.jacobian {
            return jac(x, y, z, theta);
        }
        let mut out = Array2::<f64>::zeros((self.d_y, self.d_theta));
        let mut th = theta.to_owned();
        for j in 0..self.d_theta {
            let step = 1e-6 * (1.0 + theta[j].abs());
            let orig = th[j];
            th[j] = orig + step;
            let plus = (self.eval)(x, y, z, th.view())?;
            th[j] = orig - step;
            let minus = (self.eval)(x, y, z, th.view())?;
            th[j] = orig;
            for i in 0..self.d_y {
                out[[i, j]] = (plus[i] - minus[i]) / (2.0 * step);
            }
        }
        Ok(out)
    }

    /// Driver constructed directly from closures; used for bespoke test
    /// drivers that are not part of the built-in registry.
    pub fn from_parts(
        name: &str,
        d_x: usize,
        d_y: usize,
        d_theta: usize,
        depends_on_y: bool,
        eval: EvalFn,
        jacobian: Option<JacobianFn>,
    ) -> Self {
        Self {
            name: name.to_string(),
            d_x,
            d_y,
            d_theta,
            depends_on_y,
            fixed_params: BTreeMap::new(),
            eval,
            jacobian,
            linear: None,
        }
    }

    /// Driver of the form `psi = G(x,y,z) theta` (plus optional offset
    /// `b(x,y,z)`) for an arbitrary regressor function.
    pub fn linear_from_fn(
        name: &str,
        d_x: usize,
        d_y: usize,
        d_theta: usize,
        depends_on_y: bool,
        regressor: RegressorFn,
        offset: Option<OffsetFn>,
    ) -> Self {
        let reg_eval = regressor.clone();
        let off_eval = offset.clone();
        let eval: EvalFn = Arc::new(move |x, y, z, theta| {
            let g = reg_eval(x, y, z)?;
            let mut v = g.dot(&theta);
            if let Some(b) = &off_eval {
                v = v + b(x, y, z)?;
            }
            Ok(v)
        });
        let reg_jac = regressor.clone();
        let jacobian: JacobianFn = Arc::new(move |x, y, z, _theta| reg_jac(x, y, z));
        Self {
            name: name.to_string(),
            d_x,
            d_y,
            d_theta,
            depends_on_y,
            fixed_params: BTreeMap::new(),
            eval,
            jacobian: Some(jacobian),
            linear: Some(LinearForm { regressor, offset }),
        }
    }
}

/// Bounded open parameter box; the optimizer searches its closure.
#[derive(Debug, Clone)]
pub struct ThetaBox {
    lower: Array1<f64>,
    upper: Array1<f64>,
}

impl ThetaBox {
    pub fn new(lower: Array1<f64>, upper: Array1<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dim(
                "theta box bounds have different lengths".into(),
            ));
        }
        for (lo, hi) in lower.iter().zip(upper.iter()) {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Config("theta box must be bounded".into()));
            }
            if lo >= hi {
                return Err(Error::Config(format!(
                    "theta box requires lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }
    pub fn lower(&self) -> ArrayView1<'_, f64> {
        self.lower.view()
    }
    pub fn upper(&self) -> ArrayView1<'_, f64> {
        self.upper.view()
    }

    pub fn center(&self) -> Array1<f64> {
        (&self.lower + &self.upper) * 0.5
    }

    pub fn contains(&self, theta: ArrayView1<f64>) -> bool {
        theta
            .iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(t, (lo, hi))| *t >= *lo && *t <= *hi)
    }

    /// Clamp a point onto the closed box.
    pub fn project(&self, theta: ArrayView1<f64>) -> Array1<f64> {
        let mut out = theta.to_owned();
        for (v, (lo, hi)) in out.iter_mut().zip(self.lower.iter().zip(self.upper.iter())) {
            *v = v.max(*lo).min(*hi);
        }
        out
    }

    /// True when a component sits on a bound (within absolute slack `tol`).
    pub fn on_boundary(&self, theta: ArrayView1<f64>, tol: f64) -> bool {
        theta
            .iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .any(|(t, (lo, hi))| (t - lo).abs() <= tol || (t - hi).abs() <= tol)
    }

    /// Coarse multi-start grid: `points` interior fractions per coordinate,
    /// full cartesian product.
    pub fn grid(&self, points: usize) -> Vec<Array1<f64>> {
        let d = self.dim();
        let fracs: Vec<f64> = (0..points)
            .map(|i| (i as f64 + 0.5) / points as f64)
            .collect();
        let total = points.pow(d as u32);
        let mut out = Vec::with_capacity(total);
        for idx in 0..total {
            let mut theta = Array1::<f64>::zeros(d);
            let mut rem = idx;
            for j in 0..d {
                let f = fracs[rem % points];
                rem /= points;
                theta[j] = self.lower[j] + f * (self.upper[j] - self.lower[j]);
            }
            out.push(theta);
        }
        out
    }
}

fn param(params: &BTreeMap<String, f64>, key: &str) -> Result<f64> {
    params
        .get(key)
        .copied()
        .ok_or_else(|| Error::Config(format!("missing required driver parameter `{key}`")))
}

/// Construct one of the registered drivers.
///
/// Names: `zero`, `linear`, `vasicek_sqrt`, `heston_price`.
///
/// * `vasicek_sqrt`: scalar `psi = theta * sqrt(|x| + offset)` with
///   `offset` defaulting to 0.1; ignores `y` and `z`.
/// * `heston_price`: two asset prices driven by a square-root factor,
///   `psi = mu * y + sqrt(max(x, 0)) * chol(z) * theta`; requires `mu`.
/// * `linear`: `psi = G theta` for a constant matrix `G` given through
///   params `g_<i>_<j>` (1-based) together with `d_y` and `d_theta`
///   (optionally `d_x`). Arbitrary regressor functions go through
///   [`DriverSpec::linear_from_fn`] instead.
/// * `zero`: `psi = 0`; params may set `d_x`, `d_y`, `d_theta`.
pub fn builtin_driver(name: &str, params: &BTreeMap<String, f64>) -> Result<DriverSpec> {
    match name {
        "zero" => {
            let d_x = params.get("d_x").copied().unwrap_or(0.0) as usize;
            let d_y = params.get("d_y").copied().unwrap_or(1.0) as usize;
            let d_theta = params.get("d_theta").copied().unwrap_or(1.0) as usize;
            if d_y == 0 || d_theta == 0 {
                return Err(Error::Config("zero driver needs d_y, d_theta >= 1".into()));
            }
            let eval: EvalFn = Arc::new(move |_x, _y, _z, _t| Ok(Array1::zeros(d_y)));
            let jac: JacobianFn = Arc::new(move |_x, _y, _z, _t| Ok(Array2::zeros((d_y, d_theta))));
            let mut spec = DriverSpec::from_parts("zero", d_x, d_y, d_theta, false, eval, Some(jac));
            let g = Array2::<f64>::zeros((d_y, d_theta));
            spec.linear = Some(LinearForm {
                regressor: Arc::new(move |_x, _y, _z| Ok(g.clone())),
                offset: None,
            });
            Ok(spec)
        }
        "vasicek_sqrt" => {
            let offset = params.get("offset").copied().unwrap_or(0.1);
            if offset <= 0.0 {
                return Err(Error::Config("vasicek_sqrt offset must be positive".into()));
            }
            let regressor: RegressorFn = Arc::new(move |x, _y, _z| {
                let mut g = Array2::<f64>::zeros((1, 1));
                g[[0, 0]] = (x[0].abs() + offset).sqrt();
                Ok(g)
            });
            let mut spec =
                DriverSpec::linear_from_fn("vasicek_sqrt", 1, 1, 1, false, regressor, None);
            spec.fixed_params.insert("offset".into(), offset);
            Ok(spec)
        }
        "heston_price" => {
            let mu = param(params, "mu")?;
            let regressor: RegressorFn = Arc::new(move |x, _y, z| {
                let l = linalg::cholesky(z).ok_or(Error::DegenerateZ)?;
                Ok(l * x[0].max(0.0).sqrt())
            });
            let offset: Option<OffsetFn> = if mu != 0.0 {
                Some(Arc::new(move |_x, y, _z| Ok(y.to_owned() * mu)))
            } else {
                None
            };
            let mut spec = DriverSpec::linear_from_fn(
                "heston_price",
                1,
                2,
                2,
                mu != 0.0,
                regressor,
                offset,
            );
            spec.fixed_params.insert("mu".into(), mu);
            Ok(spec)
        }
        "linear" => {
            let d_y = param(params, "d_y")? as usize;
            let d_theta = param(params, "d_theta")? as usize;
            let d_x = params.get("d_x").copied().unwrap_or(0.0) as usize;
            if d_y == 0 || d_theta == 0 {
                return Err(Error::Config("linear driver needs d_y, d_theta >= 1".into()));
            }
            let mut g = Array2::<f64>::zeros((d_y, d_theta));
            for i in 0..d_y {
                for j in 0..d_theta {
                    g[[i, j]] = param(params, &format!("g_{}_{}", i + 1, j + 1))?;
                }
            }
            let mut spec = DriverSpec::linear_from_fn(
                "linear",
                d_x,
                d_y,
                d_theta,
                false,
                Arc::new(move |_x, _y, _z| Ok(g.clone())),
                None,
            );
            spec.fixed_params = params.clone();
            Ok(spec)
        }
        other => Err(Error::UnknownDriver(other.to_string())),
    }
}
