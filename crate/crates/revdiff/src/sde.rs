//! Noise schedules and Euler–Maruyama simulation of controlled diffusions.
//!
//! Inference (noising) process on [0, T], variance-preserving (VP):
//!   dY = f(Y, t) dt + σ(t) dB,  f(x, t) = -β(t) x,  σ(t) = η √(2β(t)),
//! with the linear schedule β(t) = ½((1 - t/T) σ_min + (t/T) σ_max). Its
//! transition kernel is Gaussian: Y_t | Y_0 ~ N(e^{-α(t)} Y_0, η²(1 - e^{-2α(t)}) I)
//! with α(t) = ∫₀ᵗ β.
//!
//! The generative process runs in reversed time s = T - t with reversed
//! coefficients ǧ(x, s) = g(x, T - s):
//!   dX = (σ̌(s) ǔ(X, s) - f̌(X, s)) ds + σ̌(s) dB,
//! discretized by Euler–Maruyama on the uniform grid s_n = n·Δt, Δt = T/N.
//! Along the way we accumulate the running cost
//!   R = Σ_n (div f̌(s_n) + ½‖ǔ(X_n, s_n)‖²) Δt
//! and the Itô integral S = Σ_n ǔ(X_n, s_n)·ΔB_n (left-point rules), which
//! together with the prior and target log-densities form every objective and
//! log Z estimator in this crate.
//!
//! A second process type starts from a Dirac at the origin with constant σ
//! and zero drift (the half-bridge setup used by the `pis` objective).

use ndarray::{Array1, Array2, Array3, ArrayView2, ArrayViewMut2, Axis};

use crate::error::{Error, Result};
use crate::quad;
use crate::rng::{self, tag};

const LN_2PI: f64 = 1.8378770664093453;

/// Arithmetic precision of simulated values. `F32` emulates single-precision
/// storage: every state/functional update is rounded to f32 (accumulations
/// still happen in f64 before rounding). Gradients and optimizer state always
/// stay in f64.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F64,
    F32,
}

impl Precision {
    /// Rounds one value to the storage precision.
    #[inline]
    pub fn q(self, x: f64) -> f64 {
        match self {
            Precision::F64 => x,
            Precision::F32 => x as f32 as f64,
        }
    }

    /// Rounds a slice in place.
    #[inline]
    pub fn q_slice(self, xs: &mut [f64]) {
        if self == Precision::F32 {
            for x in xs.iter_mut() {
                *x = *x as f32 as f64;
            }
        }
    }
}

/// Variance-preserving noise schedule on [0, t_end].
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub t_end: f64,
    pub eta: f64,
}

impl Default for NoiseSchedule {
    /// Benchmark defaults: σ_min = 0.1, σ_max = 10, T = 1, η = 1.
    fn default() -> Self {
        NoiseSchedule { sigma_min: 0.1, sigma_max: 10.0, t_end: 1.0, eta: 1.0 }
    }
}

impl NoiseSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_min > 0.0)
            || !(self.sigma_max >= self.sigma_min)
            || !(self.t_end > 0.0)
            || !(self.eta > 0.0)
        {
            return Err(Error::InvalidInput(format!(
                "schedule needs 0 < sigma_min <= sigma_max, t_end > 0, eta > 0 \
                 (got sigma_min={}, sigma_max={}, T={}, eta={})",
                self.sigma_min, self.sigma_max, self.t_end, self.eta
            )));
        }
        Ok(())
    }

    /// β(t) = ½((1 - t/T) σ_min + (t/T) σ_max).
    #[inline]
    pub fn beta(&self, t: f64) -> f64 {
        let r = t / self.t_end;
        0.5 * ((1.0 - r) * self.sigma_min + r * self.sigma_max)
    }

    /// α(t) = ∫₀ᵗ β = ½(σ_min t + (σ_max - σ_min) t²/(2T)).
    #[inline]
    pub fn alpha(&self, t: f64) -> f64 {
        0.5 * (self.sigma_min * t + (self.sigma_max - self.sigma_min) * t * t / (2.0 * self.t_end))
    }

    /// Diffusion coefficient σ(t) = η √(2β(t)).
    #[inline]
    pub fn sigma(&self, t: f64) -> f64 {
        self.eta * (2.0 * self.beta(t)).sqrt()
    }

    /// Drift f(x, t) = -β(t) x of the inference process (per coordinate).
    #[inline]
    pub fn drift(&self, x: f64, t: f64) -> f64 {
        -self.beta(t) * x
    }

    /// Divergence of the drift: div f(·, t) = -d·β(t) on R^d.
    #[inline]
    pub fn div_drift(&self, t: f64, dim: usize) -> f64 {
        -(dim as f64) * self.beta(t)
    }

    /// Mean coefficient and per-coordinate variance of the transition kernel
    /// Y_t | Y_0 ~ N(c(t)·Y_0, v(t)·I): c = e^{-α(t)}, v = η²(1 - e^{-2α(t)}).
    pub fn vp_transition(&self, t: f64) -> (f64, f64) {
        let a = self.alpha(t);
        let c = (-a).exp();
        (c, self.eta * self.eta * (1.0 - (-2.0 * a).exp()))
    }
}

/// Dirac-start reference process: zero drift, constant diffusion σ on [0, T].
#[derive(Debug, Clone, PartialEq)]
pub struct PinnedBrownian {
    pub sigma: f64,
    pub t_end: f64,
}

impl Default for PinnedBrownian {
    /// Benchmark defaults: σ = √0.2, T = 5, so σ²T = 1 and the uncontrolled
    /// terminal law is standard normal.
    fn default() -> Self {
        PinnedBrownian { sigma: 0.2f64.sqrt(), t_end: 5.0 }
    }
}

/// The generative process being simulated.
#[derive(Debug, Clone, PartialEq)]
pub enum Process {
    /// Reverse of the VP inference diffusion, started from a truncated
    /// standard normal prior.
    Vp(NoiseSchedule),
    /// Controlled Brownian motion from a Dirac at the origin (`pis` setup).
    Pis(PinnedBrownian),
}

impl Process {
    pub fn t_end(&self) -> f64 {
        match self {
            Process::Vp(s) => s.t_end,
            Process::Pis(p) => p.t_end,
        }
    }

    /// σ̌(s) = σ(T - s) at generative time s, written in terms of the
    /// inference time t = T - s that the control also receives.
    #[inline]
    pub fn sigma_at_inference_time(&self, t_inf: f64) -> f64 {
        match self {
            Process::Vp(s) => s.sigma(t_inf),
            Process::Pis(p) => p.sigma,
        }
    }

    /// β̌(s) as above; the generative drift contribution is -f̌ = +β̌·x.
    #[inline]
    pub fn beta_at_inference_time(&self, t_inf: f64) -> f64 {
        match self {
            Process::Vp(s) => s.beta(t_inf),
            Process::Pis(_) => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Process::Vp(s) => s.validate(),
            Process::Pis(p) => {
                if !(p.sigma > 0.0) || !(p.t_end > 0.0) {
                    return Err(Error::InvalidInput("pis process needs sigma > 0, T > 0".into()));
                }
                Ok(())
            }
        }
    }
}

/// A drift control ǔ evaluated in inference-time coordinates: the simulator
/// calls `eval_batch(x, T - s)` at generative time s. `out` receives one row
/// per trajectory row in `x`.
pub trait Control: Sync {
    fn eval_batch(&self, x: ArrayView2<f64>, t_inf: f64, out: ArrayViewMut2<f64>);
}

/// The zero control: simulates the uncontrolled generative process.
pub struct ZeroControl;

impl Control for ZeroControl {
    fn eval_batch(&self, _x: ArrayView2<f64>, _t_inf: f64, mut out: ArrayViewMut2<f64>) {
        out.fill(0.0);
    }
}

impl<F> Control for F
where
    F: Fn(ArrayView2<f64>, f64, ArrayViewMut2<f64>) + Sync,
{
    fn eval_batch(&self, x: ArrayView2<f64>, t_inf: f64, out: ArrayViewMut2<f64>) {
        self(x, t_inf, out)
    }
}

/// Optimal control for an isotropic Gaussian target N(m·1, ν² I) under the VP
/// schedule: the marginal of the inference process stays Gaussian, so
///   u*(x, t) = σ(t) ∇log p_t(x) = σ(t) (e^{-α(t)} m - x) / (η² + e^{-2α(t)}(ν² - η²)).
pub struct AnalyticGaussianControl {
    pub schedule: NoiseSchedule,
    pub nu: f64,
    pub mean: f64,
    /// Scales u* (1 = optimal); used to build deliberately suboptimal
    /// policies in diagnostics.
    pub damping: f64,
}

impl AnalyticGaussianControl {
    pub fn new(schedule: NoiseSchedule, nu: f64, mean: f64) -> Result<Self> {
        if !(nu > 0.0) {
            return Err(Error::InvalidInput("gaussian control needs nu > 0".into()));
        }
        schedule.validate()?;
        Ok(AnalyticGaussianControl { schedule, nu, mean, damping: 1.0 })
    }

    /// Marginal variance per coordinate at inference time t.
    fn marginal(&self, t_inf: f64) -> (f64, f64) {
        let (c, v) = self.schedule.vp_transition(t_inf);
        (c, v + c * c * self.nu * self.nu)
    }
}

impl Control for AnalyticGaussianControl {
    fn eval_batch(&self, x: ArrayView2<f64>, t_inf: f64, mut out: ArrayViewMut2<f64>) {
        let (c, var) = self.marginal(t_inf);
        let sig = self.schedule.sigma(t_inf);
        let scale = self.damping * sig / var;
        let shift = c * self.mean;
        for (mut orow, xrow) in out.rows_mut().into_iter().zip(x.rows()) {
            for (o, &xi) in orow.iter_mut().zip(xrow) {
                *o = scale * (shift - xi);
            }
        }
    }
}

/// Full generative drift σ̌ǔ* - f̌ of the optimal Gaussian control at
/// generative time s (per coordinate). For η = 1 this reduces to
/// σ̌²(s)(e^{-α̌}m - x)/(1 + e^{-2α̌}(ν² - 1)) + ½σ̌²(s)x with α̌(s) = α(T-s).
pub fn optimal_gaussian_drift(
    schedule: &NoiseSchedule,
    nu: f64,
    mean: f64,
    x: f64,
    s_gen: f64,
) -> f64 {
    let t_inf = schedule.t_end - s_gen;
    let (c, v) = schedule.vp_transition(t_inf);
    let var = v + c * c * nu * nu;
    let sig = schedule.sigma(t_inf);
    sig * sig * (c * mean - x) / var + schedule.beta(t_inf) * x
}

/// A recorded batch of generative trajectories.
#[derive(Debug, Clone)]
pub struct PathBatch {
    pub process: Process,
    pub dim: usize,
    /// States X̂_n, shape [n_traj, n_steps + 1, dim]; `states[:, 0, :]` is the
    /// prior draw.
    pub states: Array3<f64>,
    /// Noise increments ΔB_n ~ N(0, Δt·I), shape [n_traj, n_steps, dim].
    pub noise: Array3<f64>,
    /// R per trajectory (left-point Riemann sum).
    pub running_cost: Array1<f64>,
    /// S = Σ ǔ·ΔB per trajectory (left-point Itô sum).
    pub stoch_int: Array1<f64>,
    /// log-density of the prior draw (untruncated standard normal for VP
    /// processes, 0 for Dirac starts).
    pub log_prior: Array1<f64>,
    pub dt: f64,
    pub n_steps: usize,
}

impl PathBatch {
    pub fn n_traj(&self) -> usize {
        self.states.shape()[0]
    }

    /// Terminal states X̂_N, shape [n_traj, dim].
    pub fn terminal(&self) -> ArrayView2<f64> {
        self.states.index_axis(Axis(1), self.n_steps)
    }
}

/// Mass retained by the truncated prior.
pub const PRIOR_MASS: f64 = 0.9999;

/// Draws one truncated standard normal vector: rejection-samples N(0, I)
/// until ‖x‖ <= the radius containing `PRIOR_MASS` of the mass.
pub fn sample_prior_row(rng: &mut rand_chacha::ChaCha8Rng, radius: f64, out: &mut [f64]) {
    loop {
        rng::fill_standard_normal(rng, out);
        let sq: f64 = out.iter().map(|v| v * v).sum();
        if sq.sqrt() <= radius {
            return;
        }
    }
}

/// log N(x; 0, I) of the untruncated standard normal.
pub fn log_standard_normal(x: &[f64]) -> f64 {
    let sq: f64 = x.iter().map(|v| v * v).sum();
    -0.5 * sq - 0.5 * x.len() as f64 * LN_2PI
}

enum NoiseSource<'a> {
    /// Fresh draws from per-(trajectory, step) substreams; trajectory indices
    /// are offset so chunked callers reproduce unchunked runs.
    Seeded { seed: u64, traj_offset: u64 },
    /// Replay of recorded increments.
    Given(&'a Array3<f64>),
}

/// Simulates the controlled generative process with fresh noise.
///
/// `traj_offset` shifts the trajectory indices used for the RNG substreams,
/// so splitting a population of trajectories into consecutive chunks yields
/// bit-identical results to one big call.
pub fn simulate_controlled(
    process: &Process,
    dim: usize,
    control: &dyn Control,
    n_traj: usize,
    n_steps: usize,
    seed: u64,
    traj_offset: u64,
    precision: Precision,
) -> Result<PathBatch> {
    process.validate()?;
    if n_traj == 0 || n_steps == 0 || dim == 0 {
        return Err(Error::InvalidInput(format!(
            "simulation needs n_traj, n_steps, dim >= 1 (got {n_traj}, {n_steps}, {dim})"
        )));
    }
    let x0 = draw_initial_states(process, dim, n_traj, seed, traj_offset);
    run_euler_maruyama(
        process,
        control,
        x0,
        n_steps,
        NoiseSource::Seeded { seed, traj_offset },
        precision,
    )
}

/// Re-runs the Euler–Maruyama recursion from given initial states and noise;
/// with a batch's own `states[:,0,:]` and `noise` this reproduces its
/// trajectory bit-for-bit.
pub fn replay(
    process: &Process,
    control: &dyn Control,
    x0: Array2<f64>,
    noise: &Array3<f64>,
    precision: Precision,
) -> Result<PathBatch> {
    process.validate()?;
    let n_steps = noise.shape()[1];
    if noise.shape()[0] != x0.nrows() || noise.shape()[2] != x0.ncols() || n_steps == 0 {
        return Err(Error::InvalidInput(format!(
            "replay shapes mismatch: x0 {:?} vs noise {:?}",
            x0.shape(),
            noise.shape()
        )));
    }
    run_euler_maruyama(process, control, x0, n_steps, NoiseSource::Given(noise), precision)
}

fn draw_initial_states(
    process: &Process,
    dim: usize,
    n_traj: usize,
    seed: u64,
    traj_offset: u64,
) -> Array2<f64> {
    let mut x0 = Array2::zeros((n_traj, dim));
    if let Process::Vp(_) = process {
        let radius = quad::normal_ball_radius(dim, PRIOR_MASS);
        for (i, mut row) in x0.rows_mut().into_iter().enumerate() {
            let mut stream = rng::substream(seed, tag::PRIOR, traj_offset + i as u64, 0);
            sample_prior_row(&mut stream, radius, row.as_slice_mut().unwrap());
        }
    }
    x0
}

fn run_euler_maruyama(
    process: &Process,
    control: &dyn Control,
    x0: Array2<f64>,
    n_steps: usize,
    noise_source: NoiseSource,
    precision: Precision,
) -> Result<PathBatch> {
    let n_traj = x0.nrows();
    let dim = x0.ncols();
    let t_end = process.t_end();
    let dt = t_end / n_steps as f64;
    let sqrt_dt = dt.sqrt();

    let mut states = Array3::zeros((n_traj, n_steps + 1, dim));
    let mut noise = Array3::zeros((n_traj, n_steps, dim));
    let mut running_cost = Array1::zeros(n_traj);
    let mut stoch_int = Array1::zeros(n_traj);
    let mut log_prior = Array1::zeros(n_traj);

    if let Process::Vp(_) = process {
        for (lp, row) in log_prior.iter_mut().zip(x0.rows()) {
            *lp = precision.q(log_standard_normal(row.as_slice().unwrap()));
        }
    }

    let mut x = x0;
    precision.q_slice(x.as_slice_mut().unwrap());
    states.index_axis_mut(Axis(1), 0).assign(&x);
    let mut u = Array2::zeros((n_traj, dim));

    for n in 0..n_steps {
        let s_gen = n as f64 * dt;
        let t_inf = t_end - s_gen;
        let sig = process.sigma_at_inference_time(t_inf);
        let beta = process.beta_at_inference_time(t_inf);
        let div_f = -(dim as f64) * beta;

        control.eval_batch(x.view(), t_inf, u.view_mut());

        // Draw or take ΔB_n for this step.
        {
            let mut step_noise = noise.index_axis_mut(Axis(1), n);
            match &noise_source {
                NoiseSource::Seeded { seed, traj_offset } => {
                    for (i, mut row) in step_noise.rows_mut().into_iter().enumerate() {
                        let mut stream =
                            rng::substream(*seed, tag::NOISE, traj_offset + i as u64, n as u64);
                        rng::fill_standard_normal(&mut stream, row.as_slice_mut().unwrap());
                        for v in row.iter_mut() {
                            *v *= sqrt_dt;
                        }
                    }
                }
                NoiseSource::Given(arr) => {
                    step_noise.assign(&arr.index_axis(Axis(1), n));
                }
            }
        }

        let step_noise = noise.index_axis(Axis(1), n);
        for i in 0..n_traj {
            let urow = u.row(i);
            let brow = step_noise.row(i);
            let mut xrow = x.row_mut(i);
            let mut usq = 0.0;
            let mut udb = 0.0;
            for j in 0..dim {
                let uj = urow[j];
                usq += uj * uj;
                udb += uj * brow[j];
                // X̂_{n+1} = X̂_n + (σ̌ ǔ - f̌) Δt + σ̌ ΔB, with -f̌ = β̌ x.
                xrow[j] =
                    precision.q(xrow[j] + (sig * uj + beta * xrow[j]) * dt + sig * brow[j]);
            }
            running_cost[i] = precision.q(running_cost[i] + (div_f + 0.5 * usq) * dt);
            stoch_int[i] = precision.q(stoch_int[i] + udb);
            if !xrow.iter().all(|v| v.is_finite()) {
                return Err(Error::Simulation {
                    step: n,
                    msg: format!("non-finite state in trajectory {i}"),
                });
            }
        }
        states.index_axis_mut(Axis(1), n + 1).assign(&x);
    }

    Ok(PathBatch {
        process: process.clone(),
        dim,
        states,
        noise,
        running_cost,
        stoch_int,
        log_prior,
        dt,
        n_steps,
    })
}

/// Simulates the *inference* (noising) diffusion forward from given starts
/// and returns the states at the requested step indices (0 = the input).
/// Used to check the transition kernel and prior convergence empirically.
pub fn simulate_inference(
    schedule: &NoiseSchedule,
    x0: Array2<f64>,
    n_steps: usize,
    seed: u64,
    record_at: &[usize],
) -> Result<Vec<Array2<f64>>> {
    schedule.validate()?;
    if n_steps == 0 {
        return Err(Error::InvalidInput("n_steps >= 1".into()));
    }
    let dt = schedule.t_end / n_steps as f64;
    let sqrt_dt = dt.sqrt();
    let n_traj = x0.nrows();
    let dim = x0.ncols();
    let mut x = x0;
    let mut recorded = Vec::with_capacity(record_at.len());
    if record_at.contains(&0) {
        recorded.push(x.clone());
    }
    let mut buf = vec![0.0; dim];
    for n in 0..n_steps {
        let t = n as f64 * dt;
        let beta = schedule.beta(t);
        let sig = schedule.sigma(t);
        for (i, mut row) in x.rows_mut().into_iter().enumerate() {
            let mut stream = rng::substream(seed, tag::NOISE, i as u64, n as u64);
            rng::fill_standard_normal(&mut stream, &mut buf);
            for j in 0..dim {
                row[j] += -beta * row[j] * dt + sig * sqrt_dt * buf[j];
            }
            if !row.iter().all(|v| v.is_finite()) {
                return Err(Error::Simulation {
                    step: n,
                    msg: format!("non-finite state in trajectory {i}"),
                });
            }
        }
        if record_at.contains(&(n + 1)) {
            recorded.push(x.clone());
        }
    }
    Ok(recorded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    #[test]
    fn schedule_endpoint_coefficients() {
        let s = NoiseSchedule::default();
        assert!((s.beta(0.0) - 0.05).abs() < 1e-15);
        assert!((s.beta(1.0) - 5.0).abs() < 1e-15);
        assert!((s.alpha(1.0) - 2.525).abs() < 1e-15);
        assert!((s.sigma(0.0) - 0.1f64.sqrt()).abs() < 1e-15);
        // Midpoint: β linear between endpoints.
        assert!((s.beta(0.5) - 0.5 * (0.05 + 5.0)).abs() < 1e-15);
        // α is the exact antiderivative of β.
        let h = 1e-6;
        for t in [0.1, 0.4, 0.9] {
            let fd = (s.alpha(t + h) - s.alpha(t - h)) / (2.0 * h);
            assert!((fd - s.beta(t)).abs() < 1e-9);
        }
    }

    #[test]
    fn drift_and_divergence() {
        let s = NoiseSchedule::default();
        assert!((s.drift(1.0, 1.0) + 5.0).abs() < 1e-15);
        assert!((s.div_drift(1.0, 1) + 5.0).abs() < 1e-15);
        assert!((s.div_drift(0.0, 3) + 3.0 * 0.05).abs() < 1e-15);
    }

    #[test]
    fn vp_transition_endpoints() {
        let s = NoiseSchedule::default();
        let (c0, v0) = s.vp_transition(0.0);
        assert_eq!((c0, v0), (1.0, 0.0));
        let (ct, vt) = s.vp_transition(1.0);
        assert!((ct - (-2.525f64).exp()).abs() < 1e-15);
        assert!((vt - (1.0 - (-5.05f64).exp())).abs() < 1e-15);
        assert!((ct - 0.0800737).abs() < 1e-7);
        assert!((vt - 0.99359).abs() < 1e-5);
    }

    #[test]
    fn single_zero_control_step_from_known_state() {
        // One step, Δt = 1, zero control, zero noise, x0 = 1 (d = 1):
        // X̂₁ = X̂₀ + β(T)·X̂₀·Δt = 1 + 5 = 6; R = div f̌·Δt = -5.
        let process = Process::Vp(NoiseSchedule::default());
        let x0 = Array2::from_shape_vec((1, 1), vec![1.0]).unwrap();
        let noise = Array3::zeros((1, 1, 1));
        let batch = replay(&process, &ZeroControl, x0, &noise, Precision::F64).unwrap();
        assert!((batch.states[[0, 1, 0]] - 6.0).abs() < 1e-15);
        assert!((batch.running_cost[0] + 5.0).abs() < 1e-15);
        assert_eq!(batch.stoch_int[0], 0.0);
    }

    #[test]
    fn zero_control_running_cost_is_deterministic_riemann_sum() {
        // R = -d·Δt·Σ_n β(T - s_n) for every trajectory, converging to
        // -d·α(T) = -5.05 (d = 2) as N grows.
        let sched = NoiseSchedule::default();
        let process = Process::Vp(sched.clone());
        for (n_steps, tol) in [(100usize, 0.06), (800, 0.0075)] {
            let batch = simulate_controlled(
                &process,
                2,
                &ZeroControl,
                16,
                n_steps,
                9,
                0,
                Precision::F64,
            )
            .unwrap();
            let dt = sched.t_end / n_steps as f64;
            let formula: f64 = -2.0
                * dt
                * (0..n_steps).map(|n| sched.beta(sched.t_end - n as f64 * dt)).sum::<f64>();
            for i in 0..batch.n_traj() {
                assert!((batch.running_cost[i] - formula).abs() < 1e-12);
                assert_eq!(batch.stoch_int[i], 0.0);
            }
            assert!(
                (formula + 5.05).abs() < tol,
                "N={n_steps}: {formula} vs -5.05 (tol {tol})"
            );
        }
    }

    #[test]
    fn prior_draws_respect_truncation_and_density() {
        let process = Process::Vp(NoiseSchedule::default());
        let batch =
            simulate_controlled(&process, 10, &ZeroControl, 2000, 1, 3, 0, Precision::F64)
                .unwrap();
        let radius = quad::normal_ball_radius(10, PRIOR_MASS);
        let x0 = batch.states.index_axis(Axis(1), 0);
        let mut mean = 0.0;
        let mut var = 0.0;
        for row in x0.rows() {
            let norm = row.dot(&row).sqrt();
            assert!(norm <= radius + 1e-12);
            mean += row.sum();
            var += row.dot(&row);
        }
        mean /= (2000 * 10) as f64;
        var /= (2000 * 10) as f64;
        assert!(mean.abs() < 0.02, "{mean}");
        assert!((var - 1.0).abs() < 0.05, "{var}");
        // log_prior is the UNtruncated standard normal density.
        for i in 0..5 {
            let row = x0.row(i);
            let want = log_standard_normal(row.as_slice().unwrap());
            assert_eq!(batch.log_prior[i], want);
        }
    }

    #[test]
    fn pis_process_starts_at_origin_with_flat_drift() {
        let process = Process::Pis(PinnedBrownian::default());
        let batch =
            simulate_controlled(&process, 3, &ZeroControl, 64, 50, 11, 0, Precision::F64)
                .unwrap();
        assert!(batch.states.index_axis(Axis(1), 0).iter().all(|&v| v == 0.0));
        assert!(batch.log_prior.iter().all(|&v| v == 0.0));
        // Zero control, zero drift: R = 0 exactly.
        assert!(batch.running_cost.iter().all(|&v| v == 0.0));
        // Terminal variance ~ σ²T = 1 per coordinate.
        let term = batch.terminal();
        let var = term.iter().map(|v| v * v).sum::<f64>() / term.len() as f64;
        assert!((var - 1.0).abs() < 0.15, "{var}");
    }

    #[test]
    fn analytic_gaussian_control_formulas() {
        let sched = NoiseSchedule::default();
        // ν = 1, m = 0: marginal stays N(0, I) so u*(x, t) = -σ(t)·x.
        let ctrl = AnalyticGaussianControl::new(sched.clone(), 1.0, 0.0).unwrap();
        let x = Array2::from_shape_vec((1, 2), vec![0.7, -1.2]).unwrap();
        let mut u = Array2::zeros((1, 2));
        for t in [0.0, 0.3, 1.0] {
            ctrl.eval_batch(x.view(), t, u.view_mut());
            let sig = sched.sigma(t);
            assert!((u[[0, 0]] + sig * 0.7).abs() < 1e-14);
            assert!((u[[0, 1]] - sig * 1.2).abs() < 1e-14);
        }
        // At t = 0 the control is σ(0)(m - x)/ν² for any (m, ν).
        let ctrl = AnalyticGaussianControl::new(sched.clone(), 2.0, 1.5).unwrap();
        ctrl.eval_batch(x.view(), 0.0, u.view_mut());
        let sig0 = sched.sigma(0.0);
        assert!((u[[0, 0]] - sig0 * (1.5 - 0.7) / 4.0).abs() < 1e-14);

        // Full generative drift σ̌ǔ* - f̌ equals the η=1 closed form
        // σ̌²(e^{-α̌}m - x)/(1 + e^{-2α̌}(ν² - 1)) + ½σ̌²x.
        let (nu, m) = (2.0, 1.5);
        let ctrl = AnalyticGaussianControl::new(sched.clone(), nu, m).unwrap();
        for s_gen in [0.0, 0.25, 0.75, 1.0] {
            let t_inf = sched.t_end - s_gen;
            let xv = -0.8;
            let xarr = Array2::from_shape_vec((1, 1), vec![xv]).unwrap();
            let mut uarr = Array2::zeros((1, 1));
            ctrl.eval_batch(xarr.view(), t_inf, uarr.view_mut());
            let got =
                sched.sigma(t_inf) * uarr[[0, 0]] + sched.beta(t_inf) * xv;
            let a = sched.alpha(t_inf);
            let sig2 = sched.sigma(t_inf).powi(2);
            let want = sig2 * ((-a).exp() * m - xv) / (1.0 + (-2.0 * a).exp() * (nu * nu - 1.0))
                + 0.5 * sig2 * xv;
            assert!(
                (got - want).abs() < 1e-12,
                "s={s_gen}: {got} vs {want}"
            );
            assert!((optimal_gaussian_drift(&sched, nu, m, xv, s_gen) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn replay_reproduces_states_bit_for_bit() {
        let process = Process::Vp(NoiseSchedule::default());
        let ctrl = AnalyticGaussianControl::new(NoiseSchedule::default(), 1.0, 0.0).unwrap();
        let batch =
            simulate_controlled(&process, 2, &ctrl, 32, 25, 17, 0, Precision::F64).unwrap();
        let x0 = batch.states.index_axis(Axis(1), 0).to_owned();
        let replayed = replay(&process, &ctrl, x0, &batch.noise, Precision::F64).unwrap();
        assert_eq!(batch.states, replayed.states);
        assert_eq!(batch.running_cost, replayed.running_cost);
        assert_eq!(batch.stoch_int, replayed.stoch_int);
    }

    #[test]
    fn chunked_simulation_matches_monolithic() {
        // Trajectory-offset substreams: chunks [0,8) + [8,20) == one call.
        let process = Process::Vp(NoiseSchedule::default());
        let ctrl = AnalyticGaussianControl::new(NoiseSchedule::default(), 1.0, 0.0).unwrap();
        let whole =
            simulate_controlled(&process, 2, &ctrl, 20, 10, 23, 0, Precision::F64).unwrap();
        let lo = simulate_controlled(&process, 2, &ctrl, 8, 10, 23, 0, Precision::F64).unwrap();
        let hi = simulate_controlled(&process, 2, &ctrl, 12, 10, 23, 8, Precision::F64).unwrap();
        for i in 0..8 {
            assert_eq!(whole.states.index_axis(Axis(0), i), lo.states.index_axis(Axis(0), i));
        }
        for i in 0..12 {
            assert_eq!(
                whole.states.index_axis(Axis(0), 8 + i),
                hi.states.index_axis(Axis(0), i)
            );
            assert_eq!(whole.running_cost[8 + i], hi.running_cost[i]);
        }
    }

    #[test]
    fn same_seed_same_batch_different_seed_different_batch() {
        let process = Process::Vp(NoiseSchedule::default());
        let a = simulate_controlled(&process, 2, &ZeroControl, 8, 12, 5, 0, Precision::F64)
            .unwrap();
        let b = simulate_controlled(&process, 2, &ZeroControl, 8, 12, 5, 0, Precision::F64)
            .unwrap();
        let c = simulate_controlled(&process, 2, &ZeroControl, 8, 12, 6, 0, Precision::F64)
            .unwrap();
        assert_eq!(a.states, b.states);
        assert_ne!(a.states, c.states);
    }

    #[test]
    fn diverging_control_reports_step_index() {
        let blowup = |x: ArrayView2<f64>, _t: f64, mut out: ArrayViewMut2<f64>| {
            for (mut o, xr) in out.rows_mut().into_iter().zip(x.rows()) {
                for (ov, &xv) in o.iter_mut().zip(xr) {
                    *ov = xv * 1e200;
                }
            }
        };
        let process = Process::Vp(NoiseSchedule::default());
        let err = simulate_controlled(&process, 2, &blowup, 4, 10, 1, 0, Precision::F64);
        match err {
            Err(Error::Simulation { step, .. }) => assert!(step < 10),
            other => panic!("expected simulation error, got {other:?}"),
        }
    }

    #[test]
    fn f32_precision_rounds_states() {
        let process = Process::Vp(NoiseSchedule::default());
        let batch =
            simulate_controlled(&process, 2, &ZeroControl, 4, 6, 2, 0, Precision::F32).unwrap();
        for v in batch.states.iter() {
            assert_eq!(*v, *v as f32 as f64);
        }
        // And f32 stays close to f64 on a short horizon.
        let b64 =
            simulate_controlled(&process, 2, &ZeroControl, 4, 6, 2, 0, Precision::F64).unwrap();
        for (a, b) in batch.states.iter().zip(b64.states.iter()) {
            assert!((a - b).abs() < 1e-4 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn inference_sde_matches_transition_kernel_moments() {
        // Start all mass at y0 and integrate the noising SDE; the empirical
        // mean/var at T must match the closed-form OU transition.
        let sched = NoiseSchedule::default();
        let n = 4000;
        let y0 = 1.8;
        let x0 = Array2::from_elem((n, 1), y0);
        let rec = simulate_inference(&sched, x0, 800, 31, &[800]).unwrap();
        let xt = &rec[0];
        let mean = xt.sum() / n as f64;
        let var = xt.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        let (c, vref) = sched.vp_transition(sched.t_end);
        let mean_se = (vref / n as f64).sqrt();
        assert!(
            (mean - c * y0).abs() < 4.0 * mean_se + 2e-2 * (c * y0).abs(),
            "mean {mean} vs {}",
            c * y0
        );
        let var_se = vref * (2.0 / (n as f64 - 1.0)).sqrt();
        assert!(
            (var - vref).abs() < 4.0 * var_se + 2e-2 * vref,
            "var {var} vs {vref}"
        );
    }
}
