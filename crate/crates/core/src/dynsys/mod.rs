//! The Lorenz'63 system: vector field, RK4 integration, fixed points,
//! Jacobian, eigen-directions and Lyapunov diagnostics.
//!
//! All numerics here are 64-bit.

mod eigen;
pub mod io;
mod lyapunov;

use std::ops::{Add, Mul, Sub};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub use eigen::{eigen_decomposition, eigen_directions, EigenDecomposition};
pub use lyapunov::{kaplan_yorke, lyapunov_spectrum, LyapunovReport};

/// Default time step of the sampled trajectories.
pub const DEFAULT_DT: f64 = 0.01;

/// Steps discarded before sampling so that trajectories sit on the attractor.
pub const DEFAULT_TRANSIENT: usize = 5000;

/// Axis-aligned box enclosing the attractor at the classical parameters:
/// `|x| <= 25`, `|y| <= 35`, `0 <= z <= 55`.
pub const ATTRACTOR_BOX: ([f64; 3], [f64; 3]) = ([-25.0, -35.0, 0.0], [25.0, 35.0, 55.0]);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl Default for LorenzParams {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
        }
    }
}

impl LorenzParams {
    pub fn new(sigma: f64, rho: f64, beta: f64) -> Result<Self> {
        let p = Self { sigma, rho, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma", self.sigma), ("rho", self.rho), ("beta", self.beta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Divergence of the vector field, `-(sigma + 1 + beta)`. Independent of
    /// the state, so it is also the sum of the Lyapunov exponents.
    pub fn divergence(&self) -> f64 {
        -(self.sigma + 1.0 + self.beta)
    }
}

/// A point `(x, y, z)` in phase space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl State {
    pub const ORIGIN: State = State {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, o: &State) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn distance(&self, o: &State) -> f64 {
        (*self - *o).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for State {
    type Output = State;
    fn add(self, o: State) -> State {
        State::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for State {
    type Output = State;
    fn sub(self, o: State) -> State {
        State::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for State {
    type Output = State;
    fn mul(self, k: f64) -> State {
        State::new(self.x * k, self.y * k, self.z * k)
    }
}

/// Uniformly sampled sequence of states: sample `k` sits at `t0 + k * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    samples: Vec<State>,
    dt: f64,
    t0: f64,
}

impl Trajectory {
    pub fn new(samples: Vec<State>, dt: f64, t0: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("trajectory has no samples".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
        }
        if !t0.is_finite() {
            return Err(Error::InvalidArgument(format!("t0 must be finite, got {t0}")));
        }
        Ok(Self { samples, dt, t0 })
    }

    pub fn samples(&self) -> &[State] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<State> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn first(&self) -> State {
        self.samples[0]
    }

    pub fn last(&self) -> State {
        self.samples[self.samples.len() - 1]
    }

    /// Samples `range` as a new trajectory with a shifted start time.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Trajectory> {
        if range.end > self.len() || range.start >= range.end {
            return Err(Error::InvalidArgument(format!(
                "slice {range:?} out of bounds for length {}",
                self.len()
            )));
        }
        Trajectory::new(
            self.samples[range.clone()].to_vec(),
            self.dt,
            self.time(range.start),
        )
    }

    /// Keeps every `stride`-th sample.
    pub fn subsample(&self, stride: usize) -> Trajectory {
        let stride = stride.max(1);
        Trajectory {
            samples: self.samples.iter().step_by(stride).copied().collect(),
            dt: self.dt * stride as f64,
            t0: self.t0,
        }
    }
}

/// Time derivative of the Lorenz system at `s`.
pub fn lorenz_rhs(s: State, p: &LorenzParams) -> State {
    State::new(
        p.sigma * (s.y - s.x),
        p.rho * s.x - s.y - s.x * s.z,
        s.x * s.y - p.beta * s.z,
    )
}

/// One classical fourth-order Runge-Kutta step.
pub fn rk4_step(s: State, p: &LorenzParams, dt: f64) -> State {
    let k1 = lorenz_rhs(s, p);
    let k2 = lorenz_rhs(s + k1 * (0.5 * dt), p);
    let k3 = lorenz_rhs(s + k2 * (0.5 * dt), p);
    let k4 = lorenz_rhs(s + k3 * dt, p);
    s + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// Integrates from `s0` and returns `n_steps` samples after discarding the
/// first `transient` states. With `transient == 0` the first sample is `s0`
/// itself, so runs with different transients from the same `s0` are suffixes
/// of one another.
pub fn integrate(
    s0: State,
    p: &LorenzParams,
    dt: f64,
    n_steps: usize,
    transient: usize,
) -> Result<Trajectory> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be >= 1".into()));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    if !s0.is_finite() {
        return Err(Error::NonFinite(format!("initial state {s0:?}")));
    }
    let mut s = s0;
    for k in 0..transient {
        s = rk4_step(s, p, dt);
        if !s.is_finite() {
            return Err(Error::NonFinite(format!("state overflow at transient step {k}")));
        }
    }
    let mut samples = Vec::with_capacity(n_steps);
    samples.push(s);
    for k in 1..n_steps {
        s = rk4_step(s, p, dt);
        if !s.is_finite() {
            return Err(Error::NonFinite(format!(
                "state overflow at step {}",
                transient + k
            )));
        }
        samples.push(s);
    }
    Trajectory::new(samples, dt, transient as f64 * dt)
}

/// Uniform random point in [`ATTRACTOR_BOX`].
pub fn random_box_point(rng: &mut seed::Rng) -> State {
    let (lo, hi) = ATTRACTOR_BOX;
    State::new(
        rng.random_range(lo[0]..hi[0]),
        rng.random_range(lo[1]..hi[1]),
        rng.random_range(lo[2]..hi[2]),
    )
}

/// A state on the attractor: a random box point pushed through `transient`
/// steps of the flow.
pub fn random_attractor_state(
    p: &LorenzParams,
    dt: f64,
    transient: usize,
    rng: &mut seed::Rng,
) -> Result<State> {
    let s0 = random_box_point(rng);
    Ok(integrate(s0, p, dt, 1, transient)?.first())
}

pub fn in_attractor_box(s: &State) -> bool {
    let (lo, hi) = ATTRACTOR_BOX;
    s.to_array()
        .iter()
        .zip(lo.iter().zip(hi.iter()))
        .all(|(v, (l, h))| *v >= *l && *v <= *h)
}

/// The fixed points `[F+, F-, F0]`.
pub fn fixed_points(p: &LorenzParams) -> Result<[State; 3]> {
    if p.rho <= 1.0 {
        return Err(Error::RhoTooSmall(p.rho));
    }
    let c = (p.beta * (p.rho - 1.0)).sqrt();
    Ok([
        State::new(c, c, p.rho - 1.0),
        State::new(-c, -c, p.rho - 1.0),
        State::ORIGIN,
    ])
}

pub type Matrix3 = [[f64; 3]; 3];

/// Jacobian of [`lorenz_rhs`] at `s`, row `i` holding the partials of
/// component `i`.
pub fn jacobian(s: State, p: &LorenzParams) -> Matrix3 {
    [
        [-p.sigma, p.sigma, 0.0],
        [p.rho - s.z, -1.0, -s.x],
        [s.y, s.x, -p.beta],
    ]
}

pub(crate) fn mat_vec(m: &Matrix3, v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn rhs_at_origin_and_unit_point() {
        let p = LorenzParams::default();
        assert_eq!(lorenz_rhs(State::ORIGIN, &p), State::ORIGIN);
        let d = lorenz_rhs(State::new(1.0, 1.0, 1.0), &p);
        assert_eq!(d.x, 0.0);
        assert_eq!(d.y, 26.0);
        assert!(close(d.z, -5.0 / 3.0, 1e-15));
    }

    #[test]
    fn rhs_vanishes_at_fixed_points() {
        let p = LorenzParams::default();
        let fps = fixed_points(&p).unwrap();
        let r72 = 72f64.sqrt();
        assert!(close(fps[0].x, r72, 1e-14) && close(fps[0].y, r72, 1e-14));
        assert_eq!(fps[0].z, 27.0);
        assert!(close(fps[0].x, 8.48528, 1e-5));
        assert_eq!(fps[2], State::ORIGIN);
        for fp in fps {
            assert!(lorenz_rhs(fp, &p).norm() < 1e-12);
        }
    }

    #[test]
    fn fixed_points_need_rho_above_one() {
        let p = LorenzParams {
            rho: 0.5,
            ..Default::default()
        };
        assert!(matches!(fixed_points(&p), Err(Error::RhoTooSmall(_))));
        assert!(LorenzParams::new(10.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn rk4_keeps_origin_fixed() {
        let p = LorenzParams::default();
        for dt in [1e-3, 0.01, 0.1] {
            assert_eq!(rk4_step(State::ORIGIN, &p, dt), State::ORIGIN);
        }
    }

    #[test]
    fn jacobian_at_origin_and_trace() {
        let p = LorenzParams::default();
        let j = jacobian(State::ORIGIN, &p);
        assert_eq!(j[0], [-10.0, 10.0, 0.0]);
        assert_eq!(j[1], [28.0, -1.0, 0.0]);
        assert_eq!(j[2], [0.0, 0.0, -8.0 / 3.0]);
        let j = jacobian(State::new(3.0, -7.0, 40.0), &p);
        assert!(close(j[0][0] + j[1][1] + j[2][2], -41.0 / 3.0, 1e-14));
    }

    #[test]
    fn integrate_origin_and_suffix_relation() {
        let p = LorenzParams::default();
        let t = integrate(State::ORIGIN, &p, 0.01, 100, 0).unwrap();
        assert_eq!(t.len(), 100);
        assert!(t.samples().iter().all(|s| *s == State::ORIGIN));

        let s0 = State::new(1.0, 2.0, 20.0);
        let long = integrate(s0, &p, 0.01, 1500, 0).unwrap();
        let short = integrate(s0, &p, 0.01, 1000, 500).unwrap();
        assert_eq!(&long.samples()[500..], short.samples());
        assert!(close(short.t0(), 5.0, 1e-12));
        assert_eq!(long.first(), s0);
    }

    #[test]
    fn integrate_rejects_bad_input() {
        let p = LorenzParams::default();
        assert!(integrate(State::ORIGIN, &p, 0.01, 0, 0).is_err());
        assert!(integrate(State::ORIGIN, &p, -0.01, 10, 0).is_err());
        let blow = integrate(State::new(1e200, 1e200, 1e200), &p, 0.01, 10, 0);
        assert!(matches!(blow, Err(Error::NonFinite(_))));
    }

    #[test]
    fn trajectory_invariants() {
        assert!(Trajectory::new(vec![], 0.01, 0.0).is_err());
        assert!(Trajectory::new(vec![State::ORIGIN], 0.0, 0.0).is_err());
        let t = Trajectory::new(vec![State::ORIGIN; 10], 0.5, 1.0).unwrap();
        assert_eq!(t.time(4), 3.0);
        let s = t.slice(2..6).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s.t0(), 2.0);
        let sub = t.subsample(3);
        assert_eq!(sub.len(), 4);
        assert_eq!(sub.dt(), 1.5);
    }
}
