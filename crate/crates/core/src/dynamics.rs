//! Pitch-plane plant: surrogate aerodynamics, fin mixing, the saturated
//! second-order actuator and the non-nominal perturbations.
//!
//! The airframe is a linear-in-(α, q, η) coefficient model. Slopes are given
//! at the nominal Mach number and rescaled with a Prandtl-Glauert style factor
//! `β(M_nom)/β(M)`, `β(M) = √|M²−1|` (floored near M = 1). Density follows an
//! exponential atmosphere and the speed of sound the ISA troposphere.
//!
//! ```text
//! α̇ = q − q̄·S·C_z / (m·V)
//! q̇ = q̄·S·d·C_m / I_yy
//! a_z = q̄·S·C_z / (m·g₀)
//! ```

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STANDARD_GRAVITY: f64 = 9.806_65;
const GAS_CONSTANT_AIR: f64 = 287.052_87;
const HEAT_CAPACITY_RATIO: f64 = 1.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AeroConfig {
    /// kg
    pub mass: f64,
    /// kg·m²
    pub pitch_inertia: f64,
    /// m²
    pub ref_area: f64,
    /// m
    pub ref_length: f64,
    pub cz_alpha: f64,
    pub cz_eta: f64,
    pub cm_alpha: f64,
    pub cm_q: f64,
    pub cm_eta: f64,
    pub mach_nominal: f64,
    /// m
    pub height_nominal: f64,
    /// kg/m³
    pub sea_level_density: f64,
    /// m
    pub density_scale_height: f64,
    /// Lower bound on `√|M²−1|` in the compressibility factor.
    pub compressibility_floor: f64,
    /// |α| above this is treated as a diverged episode (rad).
    pub alpha_limit: f64,
}

impl Default for AeroConfig {
    fn default() -> Self {
        Self {
            mass: 150.0,
            pitch_inertia: 100.0,
            ref_area: 0.0314,
            ref_length: 0.2,
            cz_alpha: 30.0,
            cz_eta: 2.0,
            cm_alpha: -15.0,
            cm_q: -300.0,
            cm_eta: -20.0,
            mach_nominal: 2.0,
            height_nominal: 5000.0,
            sea_level_density: 1.225,
            density_scale_height: 8500.0,
            compressibility_floor: 0.3,
            alpha_limit: 40f64.to_radians(),
        }
    }
}

impl AeroConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("pitch_inertia", self.pitch_inertia),
            ("ref_area", self.ref_area),
            ("ref_length", self.ref_length),
            ("mach_nominal", self.mach_nominal),
            ("sea_level_density", self.sea_level_density),
            ("density_scale_height", self.density_scale_height),
            ("compressibility_floor", self.compressibility_floor),
            ("alpha_limit", self.alpha_limit),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("aero.{name} must be > 0, got {v}")));
            }
        }
        if !(self.cm_q < 0.0) {
            return Err(Error::Config(format!(
                "aero.cm_q must be negative (pitch damping), got {}",
                self.cm_q
            )));
        }
        if !(self.height_nominal.is_finite() && self.height_nominal >= 0.0) {
            return Err(Error::Config("aero.height_nominal must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuatorConfig {
    /// rad/s
    pub natural_frequency: f64,
    pub damping: f64,
    /// rad
    pub deflection_limit: f64,
}

impl Default for ActuatorConfig {
    fn default() -> Self {
        Self {
            natural_frequency: 150.0,
            damping: 0.7,
            deflection_limit: 30f64.to_radians(),
        }
    }
}

impl ActuatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.natural_frequency > 0.0) {
            return Err(Error::Config("actuator.natural_frequency must be > 0".into()));
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::Config("actuator.damping must be in (0, 1)".into()));
        }
        if !(self.deflection_limit > 0.0) {
            return Err(Error::Config("actuator.deflection_limit must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantState {
    pub alpha: f64,
    pub pitch_rate: f64,
    pub eta: f64,
    pub eta_rate: f64,
    pub time: f64,
}

impl PlantState {
    pub fn is_finite(&self) -> bool {
        self.alpha.is_finite()
            && self.pitch_rate.is_finite()
            && self.eta.is_finite()
            && self.eta_rate.is_finite()
            && self.time.is_finite()
    }
}

/// Why a plant step could not be completed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fault {
    NonFiniteCommand,
    Diverged { alpha: f64 },
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fault::NonFiniteCommand => write!(f, "non-finite actuator command"),
            Fault::Diverged { alpha } => write!(f, "angle of attack {alpha} rad left the validity cone"),
        }
    }
}

// ---------------------------------------------------------------------------
// Non-nominal environments

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NonNominalKind {
    #[default]
    None,
    Latency,
    Estimation,
    Parametric,
}

impl NonNominalKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NonNominalKind::None => "none",
            NonNominalKind::Latency => "latency",
            NonNominalKind::Estimation => "estimation",
            NonNominalKind::Parametric => "parametric",
        }
    }
}

impl fmt::Display for NonNominalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NonNominalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "nominal" => Ok(NonNominalKind::None),
            "latency" => Ok(NonNominalKind::Latency),
            "estimation" => Ok(NonNominalKind::Estimation),
            "parametric" => Ok(NonNominalKind::Parametric),
            _ => Err(Error::UnknownKind(s.to_string())),
        }
    }
}

/// One episode's concrete non-nominality. Held constant for the whole episode.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Perturbation {
    #[default]
    Nominal,
    Latency { ms: u32 },
    Estimation { delta_mach: f64, delta_height: f64 },
    Parametric { delta_cz: f64, delta_cm: f64 },
}

impl Perturbation {
    pub fn kind(&self) -> NonNominalKind {
        match self {
            Perturbation::Nominal => NonNominalKind::None,
            Perturbation::Latency { .. } => NonNominalKind::Latency,
            Perturbation::Estimation { .. } => NonNominalKind::Estimation,
            Perturbation::Parametric { .. } => NonNominalKind::Parametric,
        }
    }

    pub fn latency_ms(&self) -> u32 {
        match self {
            Perturbation::Latency { ms } => *ms,
            _ => 0,
        }
    }

    /// The same perturbation magnitude applied jointly to both affected
    /// quantities, as used by the robustness sweeps. Latency is rounded to
    /// whole milliseconds.
    pub fn joint(kind: NonNominalKind, value: f64) -> Self {
        match kind {
            NonNominalKind::None => Perturbation::Nominal,
            NonNominalKind::Latency => Perturbation::Latency {
                ms: value.round().max(0.0) as u32,
            },
            NonNominalKind::Estimation => Perturbation::Estimation {
                delta_mach: value,
                delta_height: value,
            },
            NonNominalKind::Parametric => Perturbation::Parametric {
                delta_cz: value,
                delta_cm: value,
            },
        }
    }

    /// Scalar summary for logs: latency in ms or the first delta.
    pub fn primary_value(&self) -> f64 {
        match *self {
            Perturbation::Nominal => 0.0,
            Perturbation::Latency { ms } => ms as f64,
            Perturbation::Estimation { delta_mach, .. } => delta_mach,
            Perturbation::Parametric { delta_cz, .. } => delta_cz,
        }
    }

    pub fn secondary_value(&self) -> f64 {
        match *self {
            Perturbation::Estimation { delta_height, .. } => delta_height,
            Perturbation::Parametric { delta_cm, .. } => delta_cm,
            _ => 0.0,
        }
    }
}

/// Which perturbation family applies and its bound: `l_max` in whole ms for
/// latency, the 3σ fraction for the uncertainties.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NonNominalSpec {
    pub kind: NonNominalKind,
    pub bound: f64,
}

impl NonNominalSpec {
    pub fn nominal() -> Self {
        Self::default()
    }

    pub fn new(kind: NonNominalKind, bound: f64) -> Result<Self> {
        let spec = Self { kind, bound };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bound.is_finite() && self.bound >= 0.0) {
            return Err(Error::Config(format!("non-nominal bound must be >= 0, got {}", self.bound)));
        }
        match self.kind {
            NonNominalKind::Latency if self.bound.fract() != 0.0 => Err(Error::Config(format!(
                "latency bound must be a whole number of ms, got {}",
                self.bound
            ))),
            NonNominalKind::Estimation | NonNominalKind::Parametric if self.bound >= 1.0 => {
                Err(Error::Config(format!("uncertainty bound must be < 1, got {}", self.bound)))
            }
            _ => Ok(()),
        }
    }

    /// Uniform draw over the domain: `{0..=l_max}` for latency,
    /// `[−3σ, +3σ]` per component for the uncertainties.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Perturbation {
        let b = self.bound;
        match self.kind {
            NonNominalKind::None => Perturbation::Nominal,
            NonNominalKind::Latency => Perturbation::Latency {
                ms: rng.random_range(0..=b as u32),
            },
            NonNominalKind::Estimation => Perturbation::Estimation {
                delta_mach: symmetric(rng, b),
                delta_height: symmetric(rng, b),
            },
            NonNominalKind::Parametric => Perturbation::Parametric {
                delta_cz: symmetric(rng, b),
                delta_cm: symmetric(rng, b),
            },
        }
    }
}

fn symmetric<R: Rng + ?Sized>(rng: &mut R, bound: f64) -> f64 {
    if bound == 0.0 {
        0.0
    } else {
        rng.random_range(-bound..=bound)
    }
}

/// Where an estimation uncertainty acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimationPlacement {
    /// Only the Mach/height estimates reported to the agent are wrong.
    #[default]
    Observation,
    /// The physical flight condition differs; the agent sees nominal values.
    Plant,
}

/// `(1 + Δ)·nominal`
pub fn apply_uncertainty(nominal: f64, delta: f64) -> f64 {
    (1.0 + delta) * nominal
}

// ---------------------------------------------------------------------------
// Fin mixing

/// Four fin deflections to the (roll, pitch, yaw) equivalent controls.
pub fn fins_to_aero(fins: [f64; 4]) -> Result<[f64; 3]> {
    if fins.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite("fin deflections"));
    }
    let [d1, d2, d3, d4] = fins;
    // Pairwise grouping keeps the η row exact for mirrored inputs.
    let xi = 0.25 * ((d1 + d2) + (d3 + d4));
    let eta = 0.25 * ((d1 - d2) + (d4 - d3));
    let zeta = 0.25 * ((d1 + d2) - (d3 + d4));
    Ok([xi, eta, zeta])
}

/// Longitudinal fin allocation with ξ = ζ = 0.
pub fn aero_to_fins(eta: f64) -> Result<[f64; 4]> {
    if !eta.is_finite() {
        return Err(Error::NonFinite("pitch control"));
    }
    Ok([eta, -eta, -eta, eta])
}

// ---------------------------------------------------------------------------
// Atmosphere and airframe

fn speed_of_sound(height: f64) -> f64 {
    let temperature = if height < 11_000.0 {
        288.15 - 0.0065 * height
    } else {
        216.65
    };
    (HEAT_CAPACITY_RATIO * GAS_CONSTANT_AIR * temperature).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlightCondition {
    pub mach: f64,
    pub height: f64,
    pub speed: f64,
    pub dynamic_pressure: f64,
    /// Multiplier applied to every coefficient slope.
    pub slope_scale: f64,
}

impl FlightCondition {
    pub fn new(aero: &AeroConfig, mach: f64, height: f64) -> Self {
        let beta = |m: f64| (m * m - 1.0).abs().sqrt().max(aero.compressibility_floor);
        let speed = mach * speed_of_sound(height);
        let density = aero.sea_level_density * (-height / aero.density_scale_height).exp();
        Self {
            mach,
            height,
            speed,
            dynamic_pressure: 0.5 * density * speed * speed,
            slope_scale: beta(aero.mach_nominal) / beta(mach),
        }
    }
}

/// Airframe prepared for one episode: flight condition and coefficient
/// scalings are fixed, only the state evolves.
#[derive(Debug, Clone)]
pub struct Airframe {
    aero: AeroConfig,
    condition: FlightCondition,
    cz_scale: f64,
    cm_scale: f64,
    mach_estimate: f64,
    height_estimate: f64,
}

impl Airframe {
    pub fn new(aero: &AeroConfig, perturbation: &Perturbation, placement: EstimationPlacement) -> Self {
        let mut mach = aero.mach_nominal;
        let mut height = aero.height_nominal;
        let mut mach_estimate = mach;
        let mut height_estimate = height;
        let (mut cz_scale, mut cm_scale) = (1.0, 1.0);
        match *perturbation {
            Perturbation::Estimation {
                delta_mach,
                delta_height,
            } => {
                let m = apply_uncertainty(aero.mach_nominal, delta_mach);
                let h = apply_uncertainty(aero.height_nominal, delta_height);
                match placement {
                    EstimationPlacement::Observation => {
                        mach_estimate = m;
                        height_estimate = h;
                    }
                    EstimationPlacement::Plant => {
                        mach = m;
                        height = h;
                    }
                }
            }
            Perturbation::Parametric { delta_cz, delta_cm } => {
                cz_scale = apply_uncertainty(1.0, delta_cz);
                cm_scale = apply_uncertainty(1.0, delta_cm);
            }
            Perturbation::Nominal | Perturbation::Latency { .. } => {}
        }
        Self {
            aero: aero.clone(),
            condition: FlightCondition::new(aero, mach, height),
            cz_scale,
            cm_scale,
            mach_estimate,
            height_estimate,
        }
    }

    pub fn nominal(aero: &AeroConfig) -> Self {
        Self::new(aero, &Perturbation::Nominal, EstimationPlacement::Observation)
    }

    pub fn aero(&self) -> &AeroConfig {
        &self.aero
    }

    pub fn condition(&self) -> &FlightCondition {
        &self.condition
    }

    /// (Mach, height in m) as reported to the agent.
    pub fn estimates(&self) -> (f64, f64) {
        (self.mach_estimate, self.height_estimate)
    }

    pub fn cz(&self, alpha: f64, eta: f64) -> f64 {
        let k = self.condition.slope_scale;
        self.cz_scale * k * (self.aero.cz_alpha * alpha + self.aero.cz_eta * eta)
    }

    pub fn cm(&self, alpha: f64, pitch_rate: f64, eta: f64) -> f64 {
        let k = self.condition.slope_scale;
        let a = &self.aero;
        let q_hat = pitch_rate * a.ref_length / (2.0 * self.condition.speed);
        self.cm_scale * k * (a.cm_alpha * alpha + a.cm_q * q_hat + a.cm_eta * eta)
    }

    /// Normal acceleration in g.
    pub fn normal_accel(&self, alpha: f64, eta: f64) -> f64 {
        let qs = self.condition.dynamic_pressure * self.aero.ref_area;
        qs * self.cz(alpha, eta) / (self.aero.mass * STANDARD_GRAVITY)
    }

    /// (α̇, q̇) with η held.
    pub fn derivatives(&self, alpha: f64, pitch_rate: f64, eta: f64) -> (f64, f64) {
        let a = &self.aero;
        let qs = self.condition.dynamic_pressure * a.ref_area;
        let alpha_dot = pitch_rate - qs * self.cz(alpha, eta) / (a.mass * self.condition.speed);
        let q_dot = qs * a.ref_length * self.cm(alpha, pitch_rate, eta) / a.pitch_inertia;
        (alpha_dot, q_dot)
    }
}

// ---------------------------------------------------------------------------
// Integrators

fn actuator_accel(cfg: &ActuatorConfig, eta: f64, eta_rate: f64, eta_com: f64) -> f64 {
    let wn = cfg.natural_frequency;
    wn * wn * (eta_com - eta) - 2.0 * cfg.damping * wn * eta_rate
}

fn saturate(state: &mut PlantState, limit: f64) {
    if state.eta.abs() > limit {
        state.eta = limit.copysign(state.eta);
        state.eta_rate = 0.0;
    }
}

/// One RK4 step of the closed-loop actuator, then clamp-and-zero-rate at the
/// deflection stop.
pub fn actuator_step(state: &PlantState, cfg: &ActuatorConfig, eta_com: f64, dt: f64) -> Result<PlantState> {
    if !eta_com.is_finite() {
        return Err(Error::NonFinite("actuator command"));
    }
    let f = |eta: f64, rate: f64| (rate, actuator_accel(cfg, eta, rate, eta_com));
    let (e, r) = (state.eta, state.eta_rate);
    let k1 = f(e, r);
    let k2 = f(e + 0.5 * dt * k1.0, r + 0.5 * dt * k1.1);
    let k3 = f(e + 0.5 * dt * k2.0, r + 0.5 * dt * k2.1);
    let k4 = f(e + dt * k3.0, r + dt * k3.1);
    let mut next = *state;
    next.eta = e + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
    next.eta_rate = r + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    next.time += dt;
    saturate(&mut next, cfg.deflection_limit);
    Ok(next)
}

/// One RK4 step of (α, q) with the control surface held at `state.eta`.
/// Returns the new state and the normal acceleration (g) there.
pub fn plant_step(state: &PlantState, airframe: &Airframe, dt: f64) -> Result<(PlantState, f64), Fault> {
    let eta = state.eta;
    let f = |a: f64, q: f64| airframe.derivatives(a, q, eta);
    let (a, q) = (state.alpha, state.pitch_rate);
    let k1 = f(a, q);
    let k2 = f(a + 0.5 * dt * k1.0, q + 0.5 * dt * k1.1);
    let k3 = f(a + 0.5 * dt * k2.0, q + 0.5 * dt * k2.1);
    let k4 = f(a + dt * k3.0, q + dt * k3.1);
    let mut next = *state;
    next.alpha = a + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
    next.pitch_rate = q + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    next.time += dt;
    check_cone(&next, airframe)?;
    Ok((next, airframe.normal_accel(next.alpha, next.eta)))
}

fn check_cone(state: &PlantState, airframe: &Airframe) -> Result<(), Fault> {
    if !state.alpha.is_finite() || state.alpha.abs() > airframe.aero.alpha_limit || !state.is_finite() {
        return Err(Fault::Diverged { alpha: state.alpha });
    }
    Ok(())
}

/// Joint RK4 step of actuator and airframe (four states). The airframe sees
/// the deflection clipped to the stop inside the stages.
pub fn coupled_step(
    state: &PlantState,
    airframe: &Airframe,
    actuator: &ActuatorConfig,
    eta_com: f64,
    dt: f64,
) -> Result<(PlantState, f64), Fault> {
    if !eta_com.is_finite() {
        return Err(Fault::NonFiniteCommand);
    }
    let limit = actuator.deflection_limit;
    let f = |x: [f64; 4]| -> [f64; 4] {
        let [alpha, q, eta, rate] = x;
        let (da, dq) = airframe.derivatives(alpha, q, eta.clamp(-limit, limit));
        [da, dq, rate, actuator_accel(actuator, eta, rate, eta_com)]
    };
    let x0 = [state.alpha, state.pitch_rate, state.eta, state.eta_rate];
    let add = |x: [f64; 4], k: [f64; 4], h: f64| std::array::from_fn::<f64, 4, _>(|i| x[i] + h * k[i]);
    let k1 = f(x0);
    let k2 = f(add(x0, k1, 0.5 * dt));
    let k3 = f(add(x0, k2, 0.5 * dt));
    let k4 = f(add(x0, k3, dt));
    let x1: [f64; 4] =
        std::array::from_fn(|i| x0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    let mut next = PlantState {
        alpha: x1[0],
        pitch_rate: x1[1],
        eta: x1[2],
        eta_rate: x1[3],
        time: state.time + dt,
    };
    saturate(&mut next, limit);
    check_cone(&next, airframe)?;
    Ok((next, airframe.normal_accel(next.alpha, next.eta)))
}

/// Pure transport delay of whole steps, pre-filled with zeros.
#[derive(Debug, Clone)]
pub struct DelayLine {
    queue: VecDeque<f64>,
}

impl DelayLine {
    pub fn new(latency_steps: usize) -> Self {
        Self {
            queue: std::iter::repeat_n(0.0, latency_steps).collect(),
        }
    }

    pub fn latency(&self) -> usize {
        self.queue.len()
    }

    /// Pushes the newest command and returns the one that is due now.
    pub fn delay(&mut self, eta_com: f64) -> f64 {
        if self.queue.is_empty() {
            return eta_com;
        }
        self.queue.push_back(eta_com);
        self.queue.pop_front().unwrap_or(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn mixing_examples() {
        assert_eq!(fins_to_aero([0.0; 4]).unwrap(), [0.0, 0.0, 0.0]);
        let r = fins_to_aero([0.1, 0.1, 0.1, 0.1]).unwrap();
        assert!((r[0] - 0.1).abs() < 1e-15 && r[1] == 0.0 && r[2] == 0.0);
        let r = fins_to_aero([0.1, -0.1, -0.1, 0.1]).unwrap();
        assert!(r[0] == 0.0 && (r[1] - 0.1).abs() < 1e-15 && r[2] == 0.0);
        assert_eq!(aero_to_fins(0.0).unwrap(), [0.0; 4]);
        assert_eq!(aero_to_fins(0.1).unwrap(), [0.1, -0.1, -0.1, 0.1]);
        assert!(fins_to_aero([f64::NAN, 0.0, 0.0, 0.0]).is_err());
        assert!(aero_to_fins(f64::INFINITY).is_err());
    }

    proptest! {
        #[test]
        fn mixing_round_trip_is_exact(eta in -1e3f64..1e3) {
            let back = fins_to_aero(aero_to_fins(eta).unwrap()).unwrap();
            prop_assert_eq!(back, [0.0, eta, 0.0]);
        }

        #[test]
        fn actuator_never_exceeds_stop(cmd in -3.0f64..3.0, steps in 1usize..400) {
            let cfg = ActuatorConfig::default();
            let mut s = PlantState::default();
            for _ in 0..steps {
                s = actuator_step(&s, &cfg, cmd, 1e-3).unwrap();
                prop_assert!(s.eta.abs() <= cfg.deflection_limit);
            }
        }
    }

    #[test]
    fn actuator_rest_is_equilibrium() {
        let s = actuator_step(&PlantState::default(), &ActuatorConfig::default(), 0.0, 1e-3).unwrap();
        assert_eq!((s.eta, s.eta_rate), (0.0, 0.0));
    }

    #[test]
    fn actuator_step_response_matches_second_order() {
        let cfg = ActuatorConfig::default();
        let cmd = 1f64.to_radians();
        let mut s = PlantState::default();
        let mut peak = (0.0, 0.0);
        for k in 1..=200 {
            s = actuator_step(&s, &cfg, cmd, 1e-3).unwrap();
            if s.eta > peak.0 {
                peak = (s.eta, k as f64 * 1e-3);
            }
        }
        let zeta: f64 = cfg.damping;
        let expected = (-std::f64::consts::PI * zeta / (1.0 - zeta * zeta).sqrt()).exp();
        let overshoot = peak.0 / cmd - 1.0;
        assert!((overshoot - expected).abs() < 0.005, "overshoot {overshoot}");
        let tp = std::f64::consts::PI / (cfg.natural_frequency * (1.0 - zeta * zeta).sqrt());
        assert!((peak.1 - tp).abs() <= 1e-3);
    }

    #[test]
    fn actuator_saturates_at_stop() {
        let cfg = ActuatorConfig::default();
        let mut s = PlantState::default();
        for _ in 0..500 {
            s = actuator_step(&s, &cfg, 60f64.to_radians(), 1e-3).unwrap();
        }
        assert_eq!(s.eta, cfg.deflection_limit);
        assert_eq!(s.eta_rate, 0.0);
        assert!(actuator_step(&s, &cfg, f64::NAN, 1e-3).is_err());
    }

    #[test]
    fn null_state_is_fixed_point() {
        let af = Airframe::nominal(&AeroConfig::default());
        let (s, az) = plant_step(&PlantState::default(), &af, 1e-3).unwrap();
        assert_eq!((s.alpha, s.pitch_rate, az), (0.0, 0.0, 0.0));
        let (s, az) =
            coupled_step(&PlantState::default(), &af, &ActuatorConfig::default(), 0.0, 1e-3).unwrap();
        assert_eq!((s.alpha, s.pitch_rate, s.eta, az), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn cz_annihilated_by_full_negative_delta() {
        let p = Perturbation::Parametric {
            delta_cz: -1.0,
            delta_cm: 0.0,
        };
        let af = Airframe::new(&AeroConfig::default(), &p, EstimationPlacement::Observation);
        let mut s = PlantState {
            alpha: 0.1,
            pitch_rate: 0.3,
            eta: 0.05,
            ..Default::default()
        };
        for _ in 0..10 {
            let (n, az) = plant_step(&s, &af, 1e-3).unwrap();
            assert_eq!(az, 0.0);
            s = n;
        }
    }

    #[test]
    fn uncertainty_scaling() {
        assert_eq!(apply_uncertainty(3.5, 0.0), 3.5);
        assert!((apply_uncertainty(2.0, 0.03) - 2.06).abs() < 1e-15);
        assert!((apply_uncertainty(5.0, -0.4) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_perturbations_match_nominal_bit_for_bit() {
        let aero = AeroConfig::default();
        let act = ActuatorConfig::default();
        let nominal = Airframe::nominal(&aero);
        let zeroed = [
            Perturbation::Latency { ms: 0 },
            Perturbation::Estimation {
                delta_mach: 0.0,
                delta_height: 0.0,
            },
            Perturbation::Parametric {
                delta_cz: 0.0,
                delta_cm: 0.0,
            },
        ];
        for p in zeroed {
            for placement in [EstimationPlacement::Observation, EstimationPlacement::Plant] {
                let af = Airframe::new(&aero, &p, placement);
                let (mut a, mut b) = (PlantState::default(), PlantState::default());
                for k in 0..300 {
                    let cmd = if k > 10 { -0.05 } else { 0.0 };
                    let (na, za) = coupled_step(&a, &nominal, &act, cmd, 1e-3).unwrap();
                    let (nb, zb) = coupled_step(&b, &af, &act, cmd, 1e-3).unwrap();
                    assert_eq!(na, nb);
                    assert_eq!(za.to_bits(), zb.to_bits());
                    a = na;
                    b = nb;
                }
            }
        }
    }

    #[test]
    fn estimation_placement_moves_estimate_or_physics() {
        let aero = AeroConfig::default();
        let p = Perturbation::Estimation {
            delta_mach: 0.05,
            delta_height: -0.1,
        };
        let obs = Airframe::new(&aero, &p, EstimationPlacement::Observation);
        assert!((obs.estimates().0 - 2.1).abs() < 1e-12);
        assert!((obs.estimates().1 - 4500.0).abs() < 1e-9);
        assert_eq!(obs.condition().mach, 2.0);
        let phys = Airframe::new(&aero, &p, EstimationPlacement::Plant);
        assert_eq!(phys.estimates(), (2.0, 5000.0));
        assert!((phys.condition().mach - 2.1).abs() < 1e-12);
    }

    #[test]
    fn divergence_flagged_outside_cone() {
        let af = Airframe::nominal(&AeroConfig::default());
        let s = PlantState {
            alpha: 41f64.to_radians(),
            ..Default::default()
        };
        assert!(matches!(plant_step(&s, &af, 1e-3), Err(Fault::Diverged { .. })));
    }

    #[test]
    fn delay_line_fifo() {
        let mut d = DelayLine::new(0);
        assert_eq!(d.delay(1.5), 1.5);
        let mut d = DelayLine::new(5);
        let out: Vec<f64> = (0..8).map(|_| d.delay(2.0)).collect();
        assert_eq!(out, vec![0.0, 0.0, 0.0, 0.0, 0.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn latency_draws_cover_domain() {
        let spec = NonNominalSpec::new(NonNominalKind::Latency, 5.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut seen = [false; 6];
        for _ in 0..1000 {
            let ms = spec.sample(&mut rng).latency_ms() as usize;
            seen[ms] = true;
        }
        assert!(seen.iter().all(|&s| s));
        assert!(NonNominalSpec::new(NonNominalKind::Latency, 2.5).is_err());
        assert!(NonNominalSpec::new(NonNominalKind::Parametric, 1.5).is_err());
        assert_eq!("Latency".parse::<NonNominalKind>().unwrap(), NonNominalKind::Latency);
        assert!("wind".parse::<NonNominalKind>().is_err());
    }

    #[test]
    fn default_configs_validate() {
        AeroConfig::default().validate().unwrap();
        ActuatorConfig::default().validate().unwrap();
        let bad = AeroConfig {
            cm_q: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
