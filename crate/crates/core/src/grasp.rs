//! Limit-surface grasp-force control.
//!
//! The contact between a soft fingertip pad and a flat object face can
//! transmit a tangential force `ft` and a torsional moment `tau` about the
//! contact normal, bounded jointly by the limit surface, approximated here
//! as the ellipse
//!
//! ```text
//!     (ft / (mu fn))^2 + (tau / tau_max(fn))^2 <= 1
//!     tau_max(fn) = c0 * mu * pad_k * fn^(1 + gamma)
//! ```
//!
//! where `pad_k` and `gamma` describe how the contact radius of the pad
//! grows with the grasp force. Two control modalities come out of this:
//!
//! * *slipping avoidance* (SA): the smallest grasp force that keeps the full
//!   measured wrench inside the ellipse, plus a dynamic term driven by the
//!   estimated wrench rate so fast load changes are met early;
//! * *gripper pivoting* (GP): the same law with zero torque input, enough to
//!   prevent translational slip while the object rotates freely about the
//!   gripper axis and hangs into its gravity equilibrium.

use alloc::vec::Vec;

use nalgebra::Vector2;
use thiserror::Error;

/// Friction and pad parameters defining the torsional capacity, plus the
/// actuator force window.
#[derive(Clone, Copy, Debug)]
pub struct LimitSurfaceParams {
    /// Object/pad friction coefficient.
    pub mu: f64,
    /// Contact-radius coefficient of the soft pad (m * N^-gamma).
    pub pad_k: f64,
    /// Contact-radius exponent, in (0, 1].
    pub pad_gamma: f64,
    /// Torsional shape coefficient of the pressure distribution, in (0, 1].
    pub torsion_c0: f64,
    /// Minimum commanded grasp force (keeps the fingers engaged).
    pub fn_min: f64,
    /// Actuator limit.
    pub fn_max: f64,
}

impl LimitSurfaceParams {
    pub fn validate(&self) -> Result<(), GraspError> {
        if !(self.mu > 0.0) {
            return Err(GraspError::BadParams("mu must be positive"));
        }
        if !(self.pad_k > 0.0) {
            return Err(GraspError::BadParams("pad_k must be positive"));
        }
        if !(self.pad_gamma > 0.0 && self.pad_gamma <= 1.0) {
            return Err(GraspError::BadParams("pad_gamma must be in (0, 1]"));
        }
        if !(self.torsion_c0 > 0.0 && self.torsion_c0 <= 1.0) {
            return Err(GraspError::BadParams("torsion_c0 must be in (0, 1]"));
        }
        if !(self.fn_min > 0.0 && self.fn_min < self.fn_max) {
            return Err(GraspError::BadParams("must have 0 < fn_min < fn_max"));
        }
        Ok(())
    }

    /// Pad parameters of the shipped sensor; `mu` is object dependent.
    /// `pad_k` and `torsion_c0` come from the pad calibration and are not
    /// object specific.
    pub fn with_mu(mu: f64) -> Self {
        Self {
            mu,
            pad_k: 0.0068,
            pad_gamma: 1.0 / 3.0,
            torsion_c0: 0.6,
            fn_min: 0.5,
            fn_max: 20.0,
        }
    }
}

/// Safety margin applied on top of the minimal containing force.
pub const SAFETY_FACTOR: f64 = 1.2;

/// Gain (seconds) on the estimated requirement rate in the dynamic term.
pub const K_DYN: f64 = 0.1;

/// Resolution of the bisection for the minimal grasp force.
pub const FORCE_TOLERANCE: f64 = 1e-4;

/// Tangential force and torsional moment magnitudes seen at the contact.
#[derive(Clone, Copy, Debug)]
pub struct ContactWrench {
    pub ft: f64,
    pub tau: f64,
    pub timestamp: f64,
}

impl ContactWrench {
    pub fn new(ft: f64, tau: f64, timestamp: f64) -> Result<Self, GraspError> {
        if ft < 0.0 || tau < 0.0 {
            return Err(GraspError::NegativeWrench);
        }
        Ok(Self { ft, tau, timestamp })
    }
}

/// Which grasp-force law drives the commanded force.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Modality {
    SlippingAvoidance,
    GripperPivoting,
}

/// Grasp force requirement with its saturation status.
#[derive(Clone, Copy, Debug)]
pub struct ForceDemand {
    /// Commanded force, clamped into `[fn_min, fn_max]`.
    pub newtons: f64,
    /// The safety-factored requirement exceeded `fn_max`; the object is at
    /// risk and the caller should log it.
    pub saturated: bool,
}

/// Output of one control step.
#[derive(Clone, Copy, Debug)]
pub struct GraspForceOutput {
    pub fn_sa: f64,
    pub fn_gp: f64,
    pub fn_commanded: f64,
    pub active_modality: Modality,
    pub saturated: bool,
}

#[derive(Clone, Debug, Error)]
pub enum GraspError {
    #[error("invalid limit-surface parameters: {0}")]
    BadParams(&'static str),
    #[error("wrench magnitudes must be non-negative")]
    NegativeWrench,
}

/// Torsional friction capacity at grasp force `fn_force`.
///
/// Strictly increasing in the force and zero at zero force.
pub fn tau_max(fn_force: f64, params: &LimitSurfaceParams) -> f64 {
    debug_assert!(fn_force >= 0.0);
    params.torsion_c0 * params.mu * params.pad_k * libm::pow(fn_force, 1.0 + params.pad_gamma)
}

/// Ellipse residual: <= 1 means the wrench is inside the limit surface.
fn containment(ft: f64, tau: f64, fn_force: f64, params: &LimitSurfaceParams) -> f64 {
    if fn_force <= 0.0 {
        return if ft == 0.0 && tau == 0.0 { 0.0 } else { f64::INFINITY };
    }
    let t1 = ft / (params.mu * fn_force);
    let t2 = tau / tau_max(fn_force, params);
    t1 * t1 + t2 * t2
}

/// Smallest grasp force containing `(ft, tau)`, before safety and clamping.
fn minimal_containing_force(ft: f64, tau: f64, params: &LimitSurfaceParams) -> f64 {
    if ft <= 0.0 && tau <= 0.0 {
        return 0.0;
    }
    // Each load alone gives a lower bound; their sum is an upper bound
    // because a^2 + b^2 <= (a + b)^2 for non-negative terms.
    let lo_ft = ft / params.mu;
    let lo_tau = libm::pow(
        tau / (params.torsion_c0 * params.mu * params.pad_k),
        1.0 / (1.0 + params.pad_gamma),
    );
    let mut lo = lo_ft.max(lo_tau);
    let mut hi = lo_ft + lo_tau;
    if containment(ft, tau, lo, params) <= 1.0 {
        return lo;
    }
    while hi - lo > FORCE_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if containment(ft, tau, mid, params) <= 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn demand_from_requirement(required: f64, params: &LimitSurfaceParams) -> ForceDemand {
    let with_safety = SAFETY_FACTOR * required;
    ForceDemand {
        newtons: with_safety.clamp(params.fn_min, params.fn_max),
        saturated: with_safety > params.fn_max,
    }
}

/// Slipping-avoidance force: minimal ellipse containment of the full wrench,
/// times the safety factor, clamped to the actuator window.
pub fn required_fn_sa(w: &ContactWrench, params: &LimitSurfaceParams) -> ForceDemand {
    demand_from_requirement(minimal_containing_force(w.ft, w.tau, params), params)
}

/// Gripper-pivoting force: the same law with zero torque input, so only the
/// translational slip is prevented and the object may rotate.
pub fn required_fn_gp(w: &ContactWrench, params: &LimitSurfaceParams) -> ForceDemand {
    demand_from_requirement(minimal_containing_force(w.ft, 0.0, params), params)
}

/// One-dimensional constant-velocity Kalman filter tracking a wrench channel
/// and its rate at the 500 Hz sensor cadence.
#[derive(Clone, Copy, Debug)]
struct RateFilter {
    value: f64,
    rate: f64,
    p: [[f64; 2]; 2],
    initialized: bool,
}

/// Acceleration spectral density of the process model. Together with the
/// measurement variance this puts the filter bandwidth near 20 rad/s, fast
/// enough to settle well inside half a second.
const PROCESS_NOISE: f64 = 400.0;
const MEASUREMENT_VARIANCE: f64 = 2.5e-3;

impl RateFilter {
    fn new() -> Self {
        Self {
            value: 0.0,
            rate: 0.0,
            p: [[1.0, 0.0], [0.0, 1.0]],
            initialized: false,
        }
    }

    fn update(&mut self, measurement: f64, dt: f64) {
        if !self.initialized {
            self.value = measurement;
            self.rate = 0.0;
            self.initialized = true;
            return;
        }
        let dt = dt.max(1e-6);
        // Predict.
        self.value += self.rate * dt;
        let (p00, p01, p10, p11) = (self.p[0][0], self.p[0][1], self.p[1][0], self.p[1][1]);
        let q = PROCESS_NOISE;
        let n00 = p00 + dt * (p10 + p01) + dt * dt * p11 + q * dt * dt * dt / 3.0;
        let n01 = p01 + dt * p11 + q * dt * dt / 2.0;
        let n10 = p10 + dt * p11 + q * dt * dt / 2.0;
        let n11 = p11 + q * dt;
        // Update with the scalar measurement of the value state.
        let s = n00 + MEASUREMENT_VARIANCE;
        let k0 = n00 / s;
        let k1 = n10 / s;
        let innovation = measurement - self.value;
        self.value += k0 * innovation;
        self.rate += k1 * innovation;
        self.p = [
            [n00 - k0 * n00, n01 - k0 * n01],
            [n10 - k1 * n00, n11 - k1 * n01],
        ];
    }
}

/// Wrench-rate estimator feeding the dynamic force component.
#[derive(Clone, Debug)]
pub struct WrenchRateFilter {
    ft: RateFilter,
    tau: RateFilter,
    last_timestamp: Option<f64>,
    samples: usize,
}

impl WrenchRateFilter {
    pub fn new() -> Self {
        Self {
            ft: RateFilter::new(),
            tau: RateFilter::new(),
            last_timestamp: None,
            samples: 0,
        }
    }

    pub fn update(&mut self, w: &ContactWrench) {
        let dt = match self.last_timestamp {
            Some(t) => (w.timestamp - t).max(0.0),
            None => 0.0,
        };
        self.ft.update(w.ft, dt);
        self.tau.update(w.tau, dt);
        self.last_timestamp = Some(w.timestamp);
        self.samples += 1;
    }

    /// Estimated (ft, tau) rates; zero until two samples have arrived.
    pub fn rates(&self) -> Vector2<f64> {
        if self.samples < 2 {
            Vector2::zeros()
        } else {
            Vector2::new(self.ft.rate, self.tau.rate)
        }
    }

    pub fn samples(&self) -> usize {
        self.samples
    }
}

impl Default for WrenchRateFilter {
    fn default() -> Self {
        Self::new()
    }
}

/// Dynamic force component: the estimated wrench rate mapped through the
/// gradient of the safety-factored slipping-avoidance requirement, scaled by
/// [`K_DYN`]. Non-negative, and decays to zero for constant wrenches.
pub fn dynamic_component(
    filter: &WrenchRateFilter,
    w: &ContactWrench,
    params: &LimitSurfaceParams,
) -> f64 {
    let rates = filter.rates();
    if rates == Vector2::zeros() {
        return 0.0;
    }
    let base = SAFETY_FACTOR * minimal_containing_force(w.ft, w.tau, params);
    let dft = 1e-4;
    let dtau = 1e-6;
    let grad_ft =
        (SAFETY_FACTOR * minimal_containing_force(w.ft + dft, w.tau, params) - base) / dft;
    let grad_tau =
        (SAFETY_FACTOR * minimal_containing_force(w.ft, w.tau + dtau, params) - base) / dtau;
    K_DYN * libm::fabs(grad_ft * rates[0] + grad_tau * rates[1])
}

/// Stateful grasp-force controller: one instance per grasped object, fed
/// with the wrench stream in timestamp order.
#[derive(Clone, Debug)]
pub struct GraspController {
    pub params: LimitSurfaceParams,
    filter: WrenchRateFilter,
}

impl GraspController {
    pub fn new(params: LimitSurfaceParams) -> Result<Self, GraspError> {
        params.validate()?;
        Ok(Self {
            params,
            filter: WrenchRateFilter::new(),
        })
    }

    /// Consume one wrench sample and command a grasp force.
    ///
    /// The SA output carries the dynamic component; the GP output does not,
    /// which is what lets the object rotate under torsional load.
    pub fn compute(&mut self, w: &ContactWrench, modality: Modality) -> GraspForceOutput {
        self.filter.update(w);
        let sa = required_fn_sa(w, &self.params);
        let dyn_term = dynamic_component(&self.filter, w, &self.params);
        let fn_sa_raw =
            SAFETY_FACTOR * minimal_containing_force(w.ft, w.tau, &self.params) + dyn_term;
        let fn_sa = fn_sa_raw.clamp(self.params.fn_min, self.params.fn_max);
        let gp = required_fn_gp(w, &self.params);
        let (fn_commanded, saturated) = match modality {
            Modality::SlippingAvoidance => (fn_sa, sa.saturated || fn_sa_raw > self.params.fn_max),
            Modality::GripperPivoting => (gp.newtons, gp.saturated),
        };
        GraspForceOutput {
            fn_sa,
            fn_gp: gp.newtons,
            fn_commanded,
            active_modality: modality,
            saturated,
        }
    }

    pub fn filter(&self) -> &WrenchRateFilter {
        &self.filter
    }
}

/// Run a full wrench history through a fresh controller.
pub fn run_history(
    params: LimitSurfaceParams,
    history: &[ContactWrench],
    modality: Modality,
) -> Result<Vec<GraspForceOutput>, GraspError> {
    let mut ctrl = GraspController::new(params)?;
    Ok(history.iter().map(|w| ctrl.compute(w, modality)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use approx::assert_relative_eq;

    fn params() -> LimitSurfaceParams {
        LimitSurfaceParams {
            mu: 0.5,
            pad_k: 0.01,
            pad_gamma: 1.0 / 3.0,
            torsion_c0: 0.6,
            fn_min: 0.5,
            fn_max: 20.0,
        }
    }

    #[test]
    fn tau_max_reference_value() {
        // 0.6 * 0.5 * 8 * 0.01 * 8^(1/3) = 0.048
        let p = params();
        assert_relative_eq!(tau_max(8.0, &p), 0.048, epsilon = 1e-12);
    }

    #[test]
    fn tau_max_zero_force_no_capacity() {
        assert_eq!(tau_max(0.0, &params()), 0.0);
    }

    #[test]
    fn tau_max_power_law_homogeneity() {
        let p = params();
        let f = 3.7;
        let ratio = tau_max(2.0 * f, &p) / tau_max(f, &p);
        assert_relative_eq!(ratio, libm::pow(2.0, 1.0 + p.pad_gamma), epsilon = 1e-12);
    }

    #[test]
    fn zero_wrench_commands_fn_min() {
        let p = params();
        let d = required_fn_sa(&ContactWrench::new(0.0, 0.0, 0.0).unwrap(), &p);
        assert_relative_eq!(d.newtons, p.fn_min, epsilon = 1e-12);
        assert!(!d.saturated);
    }

    #[test]
    fn pure_torsion_matches_closed_form() {
        let p = params();
        let tau = 0.03;
        let d = required_fn_sa(&ContactWrench::new(0.0, tau, 0.0).unwrap(), &p);
        let closed = libm::pow(
            tau / (p.torsion_c0 * p.mu * p.pad_k),
            1.0 / (1.0 + p.pad_gamma),
        );
        assert_relative_eq!(d.newtons, SAFETY_FACTOR * closed, epsilon = 2e-4);
    }

    #[test]
    fn pure_tangential_matches_closed_form() {
        let p = params();
        // ft = 1 N, mu = 0.5: 1.2 * 1 / 0.5 = 2.4 N, torque ignored.
        let d = required_fn_gp(&ContactWrench::new(1.0, 0.5, 0.0).unwrap(), &p);
        assert_relative_eq!(d.newtons, 2.4, epsilon = 1e-9);
    }

    #[test]
    fn gp_never_exceeds_sa() {
        let p = params();
        let mut state = 0x2545f4914f6cdd1du64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..1000 {
            let ft = 6.0 * next();
            let tau = 0.08 * next();
            let w = ContactWrench::new(ft, tau, 0.0).unwrap();
            let sa = required_fn_sa(&w, &p);
            let gp = required_fn_gp(&w, &p);
            assert!(gp.newtons <= sa.newtons + 1e-9);
            if tau > 1e-6 && !sa.saturated && sa.newtons > p.fn_min + 1e-6 {
                assert!(gp.newtons < sa.newtons);
            }
        }
    }

    #[test]
    fn saturation_is_flagged() {
        let p = params();
        let d = required_fn_sa(&ContactWrench::new(40.0, 0.0, 0.0).unwrap(), &p);
        assert!(d.saturated);
        assert_relative_eq!(d.newtons, p.fn_max, epsilon = 1e-12);
    }

    #[test]
    fn constant_wrench_dynamic_term_settles() {
        let p = params();
        let mut ctrl = GraspController::new(p).unwrap();
        let mut last = None;
        for i in 0..250 {
            let t = i as f64 * 0.002;
            let w = ContactWrench::new(2.0, 0.01, t).unwrap();
            last = Some(ctrl.compute(&w, Modality::SlippingAvoidance));
        }
        let steady = required_fn_sa(&ContactWrench::new(2.0, 0.01, 0.0).unwrap(), &p).newtons;
        // Constant input: within 0.5 s the dynamic addition is below 0.1 N.
        assert!((last.unwrap().fn_sa - steady).abs() < 0.1);
    }

    #[test]
    fn ramp_steady_state_addition() {
        // ft ramp of 2 N/s with zero torque: requirement gradient is
        // SAFETY_FACTOR / mu, so the addition settles at k_dyn * 1.2 * 2 / mu.
        let p = params();
        let mut ctrl = GraspController::new(p).unwrap();
        let rate = 2.0;
        let mut out = None;
        let mut t_end = 0.0;
        for i in 0..1500 {
            let t = i as f64 * 0.002;
            let w = ContactWrench::new(1.0 + rate * t, 0.0, t).unwrap();
            out = Some(ctrl.compute(&w, Modality::SlippingAvoidance));
            t_end = t;
        }
        let static_part = SAFETY_FACTOR * (1.0 + rate * t_end) / p.mu;
        let addition = out.unwrap().fn_sa - static_part;
        let expected = K_DYN * SAFETY_FACTOR * rate / p.mu;
        assert_relative_eq!(addition, expected, epsilon = 0.05 * expected);
    }

    #[test]
    fn step_input_transient_decays() {
        let p = params();
        let mut ctrl = GraspController::new(p).unwrap();
        let mut additions: Vec<f64> = Vec::new();
        for i in 0..750 {
            let t = i as f64 * 0.002;
            let ft = if t < 0.5 { 1.0 } else { 3.0 };
            let w = ContactWrench::new(ft, 0.0, t).unwrap();
            let out = ctrl.compute(&w, Modality::SlippingAvoidance);
            let static_part = SAFETY_FACTOR * ft / p.mu;
            additions.push(out.fn_sa - static_part);
        }
        // Strictly positive right after the step...
        assert!(additions[251] > 0.05);
        // ...and decayed well before the end of the window.
        let peak = additions[250..].iter().cloned().fold(0.0f64, f64::max);
        let tail = additions[700..].iter().cloned().fold(0.0f64, f64::max);
        assert!(tail < 0.05 * peak);
        // Envelope decays monotonically up to the mild filter ringing.
        let peak_idx = 250
            + additions[250..]
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
        let mut envelope = f64::INFINITY;
        for chunk in additions[peak_idx..].chunks(25) {
            let m = chunk.iter().cloned().fold(0.0f64, f64::max);
            assert!(m <= envelope * 1.05 + 1e-9);
            envelope = envelope.min(m.max(1e-12));
        }
    }

    #[test]
    fn gp_commanded_in_pivoting_modality() {
        let p = params();
        let mut ctrl = GraspController::new(p).unwrap();
        let w = ContactWrench::new(1.0, 0.05, 0.0).unwrap();
        let out = ctrl.compute(&w, Modality::GripperPivoting);
        assert_eq!(out.active_modality, Modality::GripperPivoting);
        assert_relative_eq!(out.fn_commanded, out.fn_gp, epsilon = 1e-12);
        assert!(out.fn_gp < out.fn_sa);
    }
}
