//! Synthetic data generation.
//!
//! Scenarios pair a factor process, a volatility rule and a driver into the
//! data-generating model
//!
//! ```text
//! dY_t = psi(X_t, Y_t, V_t V_t^T, theta0) dt + V_t dW_t
//! ```
//!
//! integrated by Euler steps on a grid refined by `substeps`, with the
//! factor simulated exactly (Vasicek) or by full-truncation Euler (CIR).
//! Every path is a pure function of `(spec, n, h, seed)`.

use ndarray::{arr2, Array1, Array2, ArrayView1};

use crate::driver::{builtin_driver, DriverSpec};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, GaussianStream};

/// Discrete observations `{(X_{kh}, Y_{kh})}_{k=0..n}` on a uniform grid.
#[derive(Debug, Clone)]
pub struct ObservationRecord {
    pub n: usize,
    pub h: f64,
    /// `(n+1) x d_x`; zero columns when there is no factor.
    pub x_path: Array2<f64>,
    /// `(n+1) x d_y`.
    pub y_path: Array2<f64>,
    pub seed: u64,
    pub scenario_name: String,
}

impl ObservationRecord {
    pub fn d_x(&self) -> usize {
        self.x_path.ncols()
    }

    pub fn d_y(&self) -> usize {
        self.y_path.ncols()
    }

    /// CSV rendering: header `k,t,x_1..x_dx,y_1..y_dy`, one row per grid
    /// point, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity((self.n + 2) * 32);
        out.push('k');
        out.push_str(",t");
        for j in 0..self.d_x() {
            out.push_str(&format!(",x_{}", j + 1));
        }
        for j in 0..self.d_y() {
            out.push_str(&format!(",y_{}", j + 1));
        }
        out.push('\n');
        for k in 0..=self.n {
            out.push_str(&format!("{k},{:.16e}", k as f64 * self.h));
            for j in 0..self.d_x() {
                out.push_str(&format!(",{:.16e}", self.x_path[[k, j]]));
            }
            for j in 0..self.d_y() {
                out.push_str(&format!(",{:.16e}", self.y_path[[k, j]]));
            }
            out.push('\n');
        }
        out
    }
}

/// Parameters of the mean-reverting Gaussian factor
/// `dX = a (b - X) dt + sigma dW`.
#[derive(Debug, Clone, Copy)]
pub struct VasicekParams {
    pub speed: f64,
    pub level: f64,
    pub sigma: f64,
    pub x0: f64,
}

/// Parameters of the square-root factor
/// `d nu = L (beta - nu) dt + sigma sqrt(nu) dW`.
#[derive(Debug, Clone, Copy)]
pub struct CirParams {
    pub speed: f64,
    pub level: f64,
    pub sigma: f64,
    pub nu0: f64,
}

#[derive(Debug, Clone)]
pub enum FactorModel {
    /// No auxiliary factor; `d_x = 0`.
    None,
    Vasicek(VasicekParams),
    Cir(CirParams),
}

impl FactorModel {
    pub fn d_x(&self) -> usize {
        match self {
            FactorModel::None => 0,
            _ => 1,
        }
    }
}

/// Rule mapping the current factor value to the volatility matrix `V_t`.
#[derive(Debug, Clone)]
pub enum VolatilityRule {
    /// Scalar `V = sqrt(|x| + offset)`.
    SqrtAbsShift { offset: f64 },
    /// Constant `d_y x d_w` matrix.
    Constant(Array2<f64>),
}

impl VolatilityRule {
    pub fn d_y(&self) -> usize {
        match self {
            VolatilityRule::SqrtAbsShift { .. } => 1,
            VolatilityRule::Constant(m) => m.nrows(),
        }
    }

    pub fn d_w(&self) -> usize {
        match self {
            VolatilityRule::SqrtAbsShift { .. } => 1,
            VolatilityRule::Constant(m) => m.ncols(),
        }
    }
}

/// Full description of a data-generating process.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub name: String,
    pub factor: FactorModel,
    pub volatility: VolatilityRule,
    pub driver: DriverSpec,
    pub theta0: Array1<f64>,
    pub y0: Array1<f64>,
    /// Integration substeps per observation interval.
    pub substeps: usize,
    /// Drive the factor with the same Wiener increments as `Y` (only
    /// meaningful for a one-dimensional Vasicek factor).
    pub shared_noise: bool,
}

impl ScenarioSpec {
    /// One-dimensional mean-reverting factor with `dY = theta sqrt(|X|+0.1) dt
    /// + sqrt(|X|+0.1) dW`; `a=2, b=0.3, sigma=0.025, X0=0.3, theta0=1, Y0=1`.
    pub fn vasicek_1d() -> Self {
        Self {
            name: "vasicek_1d".into(),
            factor: FactorModel::Vasicek(VasicekParams {
                speed: 2.0,
                level: 0.3,
                sigma: 0.025,
                x0: 0.3,
            }),
            volatility: VolatilityRule::SqrtAbsShift { offset: 0.1 },
            driver: builtin_driver("vasicek_sqrt", &Default::default())
                .expect("builtin vasicek_sqrt"),
            theta0: Array1::from_vec(vec![1.0]),
            y0: Array1::from_vec(vec![1.0]),
            substeps: 1,
            shared_noise: false,
        }
    }

    /// Two-dimensional price pair with constant volatility matrix
    /// `[[0.4, 0], [0.4, 0.4]]` and a square-root variance factor
    /// `L=1, beta=1.5, sigma=0.5, nu0=1.5`; `theta0=(5,5)`.
    pub fn heston_2d(mu: f64) -> Self {
        let mut params = std::collections::BTreeMap::new();
        params.insert("mu".to_string(), mu);
        Self {
            name: "heston_2d".into(),
            factor: FactorModel::Cir(CirParams {
                speed: 1.0,
                level: 1.5,
                sigma: 0.5,
                nu0: 1.5,
            }),
            volatility: VolatilityRule::Constant(arr2(&[[0.4, 0.0], [0.4, 0.4]])),
            driver: builtin_driver("heston_price", &params).expect("builtin heston_price"),
            theta0: Array1::from_vec(vec![5.0, 5.0]),
            y0: Array1::from_vec(vec![1.0, 1.0]),
            substeps: 1,
            shared_noise: false,
        }
    }

    /// Constant volatility matrix, no factor unless the driver needs one.
    pub fn constant_vol(
        matrix: Array2<f64>,
        driver: DriverSpec,
        theta0: Array1<f64>,
        y0: Array1<f64>,
    ) -> Self {
        Self {
            name: "constant_vol".into(),
            factor: FactorModel::None,
            volatility: VolatilityRule::Constant(matrix),
            driver,
            theta0,
            y0,
            substeps: 1,
            shared_noise: false,
        }
    }

    pub fn d_x(&self) -> usize {
        self.factor.d_x()
    }

    pub fn d_y(&self) -> usize {
        self.volatility.d_y()
    }

    /// Known asymptotic information matrix for the built-in scenarios.
    ///
    /// For `vasicek_1d` the integrand `(d_theta psi)^2 / z` is identically 1;
    /// for `heston_2d` whitening by the Cholesky factor reduces the integrand
    /// to `x I`, whose stationary mean is the factor level `beta = 1.5`.
    pub fn analytic_gamma(&self) -> Option<Array2<f64>> {
        match self.name.as_str() {
            "vasicek_1d" => Some(arr2(&[[1.0]])),
            "heston_2d" => {
                if let FactorModel::Cir(p) = &self.factor {
                    Some(Array2::eye(2) * p.level)
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d_y = self.d_y();
        if self.driver.d_y() != d_y {
            return Err(Error::Dim(format!(
                "driver d_y={} but volatility is {d_y}-dimensional",
                self.driver.d_y()
            )));
        }
        if self.driver.d_x() != self.d_x() {
            return Err(Error::Dim(format!(
                "driver d_x={} but factor is {}-dimensional",
                self.driver.d_x(),
                self.d_x()
            )));
        }
        if self.y0.len() != d_y {
            return Err(Error::Dim(format!(
                "y0 has length {} but d_y={d_y}",
                self.y0.len()
            )));
        }
        if self.theta0.len() != self.driver.d_theta() {
            return Err(Error::Dim(format!(
                "theta0 has length {} but driver d_theta={}",
                self.theta0.len(),
                self.driver.d_theta()
            )));
        }
        if self.substeps == 0 {
            return Err(Error::Config("substeps must be positive".into()));
        }
        if self.shared_noise {
            let vasicek = matches!(self.factor, FactorModel::Vasicek(_));
            if !vasicek || self.volatility.d_w() != 1 {
                return Err(Error::Config(
                    "shared_noise requires a Vasicek factor and a one-dimensional Wiener process"
                        .into(),
                ));
            }
        }
        Ok(())
    }
}

/// Sample an exact Gaussian transition path of the Vasicek model.
///
/// `X_{t+h} = b + (X_t - b) e^{-ah} + sigma sqrt((1 - e^{-2ah}) / (2a)) xi`.
pub fn simulate_vasicek_exact(
    speed: f64,
    level: f64,
    sigma: f64,
    x0: f64,
    n: usize,
    h: f64,
    rng: &mut GaussianStream,
) -> Result<Vec<f64>> {
    if speed <= 0.0 || h <= 0.0 {
        return Err(Error::Config(format!(
            "vasicek transition needs a > 0 and h > 0, got a={speed}, h={h}"
        )));
    }
    if sigma < 0.0 {
        return Err(Error::Config("vasicek sigma must be nonnegative".into()));
    }
    let decay = (-speed * h).exp();
    let noise_sd = sigma * ((1.0 - decay * decay) / (2.0 * speed)).sqrt();
    let mut path = Vec::with_capacity(n + 1);
    path.push(x0);
    let mut x = x0;
    for _ in 0..n {
        x = level + (x - level) * decay + noise_sd * rng.next_normal();
        path.push(x);
    }
    Ok(path)
}

/// Full-truncation Euler path of the square-root process: the positive part
/// of the state enters both drift and diffusion, so square roots stay real
/// while the state itself may make small negative excursions.
pub fn simulate_cir_full_truncation(
    speed: f64,
    level: f64,
    sigma: f64,
    nu0: f64,
    n: usize,
    h: f64,
    rng: &mut GaussianStream,
) -> Result<Vec<f64>> {
    if speed <= 0.0 || level <= 0.0 || h <= 0.0 {
        return Err(Error::Config(format!(
            "cir scheme needs L > 0, beta > 0, h > 0, got L={speed}, beta={level}, h={h}"
        )));
    }
    if sigma < 0.0 {
        return Err(Error::Config("cir sigma must be nonnegative".into()));
    }
    if nu0 < 0.0 {
        return Err(Error::Config("cir initial value must be nonnegative".into()));
    }
    let sqrt_h = h.sqrt();
    let mut path = Vec::with_capacity(n + 1);
    path.push(nu0);
    let mut nu = nu0;
    for _ in 0..n {
        let pos = nu.max(0.0);
        nu += speed * (level - pos) * h + sigma * pos.sqrt() * sqrt_h * rng.next_normal();
        path.push(nu);
    }
    Ok(path)
}

/// Simulate a full observation record for the scenario.
pub fn simulate_scenario(
    spec: &ScenarioSpec,
    n: usize,
    h: f64,
    seed: u64,
) -> Result<ObservationRecord> {
    spec.validate()?;
    if n == 0 || h <= 0.0 {
        return Err(Error::Config(format!(
            "simulation needs n >= 1 and h > 0, got n={n}, h={h}"
        )));
    }
    let substeps = spec.substeps;
    let m = n
        .checked_mul(substeps)
        .ok_or_else(|| Error::Config("n * substeps overflows".into()))?;
    let delta = h / substeps as f64;
    let d_y = spec.d_y();
    let d_w = spec.volatility.d_w();
    let d_x = spec.d_x();

    let mut y_rng = GaussianStream::new(derive_seed(seed, &[1]));

    // Factor path on the fine grid. With shared noise the factor consumes
    // the same increments as Y, so it is advanced inside the main loop.
    let factor_fine: Option<Vec<f64>> = if spec.shared_noise {
        None
    } else {
        let mut f_rng = GaussianStream::new(derive_seed(seed, &[2]));
        match &spec.factor {
            FactorModel::None => None,
            FactorModel::Vasicek(p) => Some(simulate_vasicek_exact(
                p.speed, p.level, p.sigma, p.x0, m, delta, &mut f_rng,
            )?),
            FactorModel::Cir(p) => Some(simulate_cir_full_truncation(
                p.speed, p.level, p.sigma, p.nu0, m, delta, &mut f_rng,
            )?),
        }
    };

    let mut x_flat = Vec::with_capacity((n + 1) * d_x);
    let mut y_flat = Vec::with_capacity((n + 1) * d_y);

    let mut y = spec.y0.clone();
    let mut x_shared = match &spec.factor {
        FactorModel::Vasicek(p) => p.x0,
        FactorModel::Cir(p) => p.nu0,
        FactorModel::None => 0.0,
    };

    // Constant-volatility fast path: V and z never change.
    let (const_v, const_z) = match &spec.volatility {
        VolatilityRule::Constant(v) => {
            let z = v.dot(&v.t());
            (Some(v.clone()), Some(z))
        }
        _ => (None, None),
    };

    let mut dw = vec![0.0_f64; d_w];
    let mut z1 = Array2::<f64>::zeros((1, 1));
    let sqrt_delta = delta.sqrt();

    let record = |x_flat: &mut Vec<f64>, y_flat: &mut Vec<f64>, x: f64, y: &Array1<f64>| {
        if d_x == 1 {
            x_flat.push(x);
        }
        y_flat.extend(y.iter().copied());
    };

    let factor_at = |step: usize| -> f64 {
        match &factor_fine {
            Some(path) => path[step],
            None => 0.0,
        }
    };

    let x_now = |step: usize, shared: f64| -> f64 {
        if spec.shared_noise || d_x == 0 {
            shared
        } else {
            factor_at(step)
        }
    };

    record(&mut x_flat, &mut y_flat, x_now(0, x_shared), &y);

    for step in 0..m {
        let x_t = x_now(step, x_shared);
        y_rng.fill_normals(&mut dw);
        for v in dw.iter_mut() {
            *v *= sqrt_delta;
        }

        let x_view = if d_x == 1 {
            ArrayView1::from(std::slice::from_ref(&x_t))
        } else {
            ArrayView1::from(&[] as &[f64])
        };

        let psi = match (&const_v, &const_z) {
            (Some(_), Some(z)) => spec
                .driver
                .eval(x_view, y.view(), z.view(), spec.theta0.view())?,
            _ => {
                let offset = match &spec.volatility {
                    VolatilityRule::SqrtAbsShift { offset } => *offset,
                    _ => unreachable!(),
                };
                z1[[0, 0]] = x_t.abs() + offset;
                spec.driver
                    .eval(x_view, y.view(), z1.view(), spec.theta0.view())?
            }
        };

        match (&const_v, &spec.volatility) {
            (Some(v), _) => {
                for i in 0..d_y {
                    let mut diff = 0.0;
                    for j in 0..d_w {
                        diff += v[[i, j]] * dw[j];
                    }
                    y[i] += psi[i] * delta + diff;
                }
            }
            (None, VolatilityRule::SqrtAbsShift { offset }) => {
                let vol = (x_t.abs() + offset).sqrt();
                y[0] += psi[0] * delta + vol * dw[0];
            }
            _ => unreachable!(),
        }

        if spec.shared_noise {
            if let FactorModel::Vasicek(p) = &spec.factor {
                // Euler update on the common increment.
                x_shared += p.speed * (p.level - x_shared) * delta + p.sigma * dw[0];
            }
        }

        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::SimulationBlowup { step });
        }

        if (step + 1) % substeps == 0 {
            record(&mut x_flat, &mut y_flat, x_now(step + 1, x_shared), &y);
        }
    }

    let x_path = Array2::from_shape_vec((n + 1, d_x), x_flat)
        .map_err(|e| Error::Config(format!("x path shape: {e}")))?;
    let y_path = Array2::from_shape_vec((n + 1, d_y), y_flat)
        .map_err(|e| Error::Config(format!("y path shape: {e}")))?;

    if !x_path.iter().all(|v| v.is_finite()) {
        return Err(Error::SimulationBlowup { step: m });
    }

    Ok(ObservationRecord {
        n,
        h,
        x_path,
        y_path,
        seed,
        scenario_name: spec.name.clone(),
    })
}
