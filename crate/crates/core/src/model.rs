//! Switched load dynamics.
//!
//! Each load has two unity-DC-gain transfer functions, one active while the
//! load is switched on (driven by its size) and one while it is off (driven
//! by its resting level). Both are realized in controllable canonical form
//! with the output as the first state, discretized exactly under a
//! zero-order hold, and stitched together at every switch by re-initializing
//! the incoming model so that the power output is continuous.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Poles with real part above this are rejected as not strictly stable.
pub const STABILITY_MARGIN: f64 = -1e-12;

const CONJUGATE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Poles {
    Single(f64),
    RealPair(f64, f64),
    /// `re ± j·im` with `im > 0`.
    Conjugate {
        re: f64,
        im: f64,
    },
}

/// Continuous-time load dynamics `G(s) = k / ∏(s - p)` with `k` chosen so
/// that `G(0) = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContinuousDynamics {
    poles: Poles,
}

/// Builds unity-DC-gain dynamics from one or two stable poles.
pub fn make_dynamics(poles: &[Complex64]) -> Result<ContinuousDynamics> {
    for p in poles {
        if !(p.re <= STABILITY_MARGIN) || !p.im.is_finite() {
            return Err(Error::UnstablePole(*p));
        }
    }
    let poles = match *poles {
        [p] if p.im == 0.0 => Poles::Single(p.re),
        [p] => return Err(Error::UnpairedComplexPole(p)),
        [p, q] if p.im == 0.0 && q.im == 0.0 => Poles::RealPair(p.re, q.re),
        [p, q] => {
            let lone = if p.im != 0.0 { p } else { q };
            let scale = p.norm().max(1.0);
            if p.im == 0.0 || q.im == 0.0 || (q - p.conj()).norm() > CONJUGATE_TOL * scale {
                return Err(Error::UnpairedComplexPole(lone));
            }
            Poles::Conjugate {
                re: 0.5 * (p.re + q.re),
                im: p.im.abs(),
            }
        }
        _ => return Err(Error::PoleCount(poles.len())),
    };
    Ok(ContinuousDynamics { poles })
}

impl ContinuousDynamics {
    pub fn first_order(pole: f64) -> Result<Self> {
        make_dynamics(&[Complex64::new(pole, 0.0)])
    }

    pub fn order(&self) -> usize {
        match self.poles {
            Poles::Single(_) => 1,
            _ => 2,
        }
    }

    pub fn poles(&self) -> Vec<Complex64> {
        match self.poles {
            Poles::Single(p) => vec![Complex64::new(p, 0.0)],
            Poles::RealPair(p, q) => vec![Complex64::new(p, 0.0), Complex64::new(q, 0.0)],
            Poles::Conjugate { re, im } => vec![Complex64::new(re, im), Complex64::new(re, -im)],
        }
    }

    /// Monic denominator coefficients, highest power first: `[1, a0]` or
    /// `[1, a1, a0]`.
    pub fn denominator(&self) -> Vec<f64> {
        match self.poles {
            Poles::Single(p) => vec![1.0, -p],
            Poles::RealPair(p, q) => vec![1.0, -(p + q), p * q],
            Poles::Conjugate { re, im } => vec![1.0, -2.0 * re, re * re + im * im],
        }
    }

    /// Constant numerator; equals the denominator's constant term.
    pub fn numerator(&self) -> f64 {
        *self.denominator().last().expect("non-empty denominator")
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        let den = self
            .denominator()
            .iter()
            .fold(Complex64::new(0.0, 0.0), |acc, c| acc * s + c);
        Complex64::new(self.numerator(), 0.0) / den
    }

    pub fn dc_gain(&self) -> f64 {
        self.eval(Complex64::new(0.0, 0.0)).re
    }

    /// Slowest time constant `1 / min |Re p|`.
    pub fn time_constant(&self) -> f64 {
        self.poles().iter().map(|p| -1.0 / p.re).fold(0.0, f64::max)
    }
}

/// Exact zero-order-hold equivalent: `x' = A x + B u`, `y = x[0]`.
///
/// First-order models only use the top-left entry of `A` and `B[0]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscreteDynamics {
    order: usize,
    a: [[f64; 2]; 2],
    b: [f64; 2],
    sample_time: f64,
}

pub fn zoh_discretize(dynamics: &ContinuousDynamics, dt: f64) -> Result<DiscreteDynamics> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::NonPositiveSampleTime(dt));
    }
    if let Poles::Single(p) = dynamics.poles {
        return Ok(DiscreteDynamics {
            order: 1,
            a: [[(p * dt).exp(), 0.0], [0.0, 0.0]],
            b: [-(p * dt).exp_m1(), 0.0],
            sample_time: dt,
        });
    }

    // e^{A t} = c0 I + c1 A for the 2x2 companion matrix A = [[0, 1], [-a0, -a1]].
    let (c0, c1) = match dynamics.poles {
        Poles::Conjugate { re, im } => {
            let decay = (re * dt).exp();
            let sinc = (im * dt).sin() / im;
            (decay * ((im * dt).cos() - re * sinc), decay * sinc)
        }
        Poles::RealPair(l1, l2) if l1 == l2 => {
            let decay = (l1 * dt).exp();
            (decay * (1.0 - l1 * dt), dt * decay)
        }
        Poles::RealPair(l1, l2) => {
            let c1 = (l2 * dt).exp() * ((l1 - l2) * dt).exp_m1() / (l1 - l2);
            ((l2 * dt).exp() - l2 * c1, c1)
        }
        Poles::Single(_) => unreachable!(),
    };
    let den = dynamics.denominator();
    let (a1, a0) = (den[1], den[2]);
    // Held-input integral A^{-1} (e^{A t} - I) B with B = [0, a0].
    Ok(DiscreteDynamics {
        order: 2,
        a: [[c0, c1], [-a0 * c1, c0 - a1 * c1]],
        b: [1.0 - c0, a0 * c1],
        sample_time: dt,
    })
}

impl DiscreteDynamics {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn sample_time(&self) -> f64 {
        self.sample_time
    }

    /// State-update matrix (top-left 1x1 block for first-order models).
    pub fn update_matrix(&self) -> [[f64; 2]; 2] {
        self.a
    }

    pub fn input_vector(&self) -> [f64; 2] {
        self.b
    }

    pub fn output_vector(&self) -> [f64; 2] {
        [1.0, 0.0]
    }

    #[inline]
    pub fn step(&self, x: &mut [f64; 2], u: f64) {
        let x0 = self.a[0][0] * x[0] + self.a[0][1] * x[1] + self.b[0] * u;
        let x1 = self.a[1][0] * x[0] + self.a[1][1] * x[1] + self.b[1] * u;
        *x = [x0, x1];
    }

    /// Steady-state output for a constant unit input, `C (I - A)^{-1} B`.
    pub fn dc_gain(&self) -> f64 {
        if self.order == 1 {
            return self.b[0] / (1.0 - self.a[0][0]);
        }
        let m = [
            [1.0 - self.a[0][0], -self.a[0][1]],
            [-self.a[1][0], 1.0 - self.a[1][1]],
        ];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        (m[1][1] * self.b[0] - m[0][1] * self.b[1]) / det
    }

    pub fn spectral_radius(&self) -> f64 {
        if self.order == 1 {
            return self.a[0][0].abs();
        }
        let tr = self.a[0][0] + self.a[1][1];
        let det = self.a[0][0] * self.a[1][1] - self.a[0][1] * self.a[1][0];
        let disc = Complex64::new(tr * tr - 4.0 * det, 0.0).sqrt();
        let l1 = (Complex64::new(tr, 0.0) + disc) * 0.5;
        let l2 = (Complex64::new(tr, 0.0) - disc) * 0.5;
        l1.norm().max(l2.norm())
    }
}

/// One schedulable load. Minimum dwell times are in samples.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadSpec {
    pub index: usize,
    /// Steady-state demand as a fraction of normalized peak power.
    pub size: f64,
    pub on_dynamics: ContinuousDynamics,
    pub off_dynamics: ContinuousDynamics,
    pub min_on: u32,
    pub min_off: u32,
    /// Resting power while off; zero unless configured.
    pub off_level: f64,
}

impl LoadSpec {
    pub fn new(
        index: usize,
        size: f64,
        on_dynamics: ContinuousDynamics,
        off_dynamics: ContinuousDynamics,
        min_on: u32,
        min_off: u32,
    ) -> Result<Self> {
        let spec = LoadSpec {
            index,
            size,
            on_dynamics,
            off_dynamics,
            min_on,
            min_off,
            off_level: 0.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_off_level(mut self, off_level: f64) -> Result<Self> {
        self.off_level = off_level;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let fail = |reason: String| {
            Err(Error::InvalidLoad {
                index: self.index,
                reason,
            })
        };
        if !(self.size > 0.0) || !self.size.is_finite() {
            return fail(format!("size must be positive, got {}", self.size));
        }
        if self.min_on < 1 || self.min_off < 1 {
            return fail("minimum on/off sample counts must be at least 1".into());
        }
        if !(self.off_level >= 0.0) || !self.off_level.is_finite() {
            return fail(format!(
                "off level must be non-negative, got {}",
                self.off_level
            ));
        }
        Ok(())
    }
}

/// The full set of loads on a common sample grid over one day.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadBank {
    loads: Vec<LoadSpec>,
    dt: f64,
    day_length: f64,
    day_samples: u32,
}

impl LoadBank {
    pub fn new(loads: Vec<LoadSpec>, dt: f64, day_length: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::NonPositiveSampleTime(dt));
        }
        for (pos, load) in loads.iter().enumerate() {
            if load.index != pos + 1 {
                return Err(Error::InvalidLoad {
                    index: load.index,
                    reason: format!("expected index {} (indices run 1..n in order)", pos + 1),
                });
            }
        }
        let ratio = day_length / dt;
        let day_samples = ratio.round();
        if !(day_samples >= 1.0) || (ratio - day_samples).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidGrid(format!(
                "day length {day_length} s is not a positive multiple of the sample time {dt} s"
            )));
        }
        let day_samples = day_samples as u32;
        if let Some(load) = loads
            .iter()
            .find(|l| l.min_on > day_samples || l.min_off > day_samples)
        {
            return Err(Error::InvalidLoad {
                index: load.index,
                reason: format!("minimum dwell exceeds the {day_samples}-sample day"),
            });
        }
        Ok(LoadBank {
            loads,
            dt,
            day_length,
            day_samples,
        })
    }

    /// Three-load reference bank at 1 s sampling over a 24 h day.
    pub fn reference() -> Self {
        let c = |re: f64, im: f64| Complex64::new(re, im);
        let loads = vec![
            LoadSpec::new(
                1,
                0.60,
                make_dynamics(&[c(-0.01, 0.0)]).unwrap(),
                make_dynamics(&[c(-0.04, 0.0)]).unwrap(),
                180,
                180,
            ),
            LoadSpec::new(
                2,
                0.2586,
                make_dynamics(&[c(-0.05, 0.06), c(-0.05, -0.06)]).unwrap(),
                make_dynamics(&[c(-0.05, 0.0)]).unwrap(),
                240,
                240,
            ),
            LoadSpec::new(
                3,
                0.1222,
                make_dynamics(&[c(-0.02, 0.0)]).unwrap(),
                make_dynamics(&[c(-0.02, 0.0)]).unwrap(),
                300,
                300,
            ),
        ];
        LoadBank::new(
            loads.into_iter().map(Result::unwrap).collect(),
            1.0,
            86_400.0,
        )
        .expect("reference bank is valid")
    }

    pub fn loads(&self) -> &[LoadSpec] {
        &self.loads
    }

    pub fn len(&self) -> usize {
        self.loads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loads.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn day_length(&self) -> f64 {
        self.day_length
    }

    pub fn day_samples(&self) -> u32 {
        self.day_samples
    }
}

/// Which model is active and its internal state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DynamicState {
    pub on: bool,
    pub x: [f64; 2],
}

impl DynamicState {
    /// Off model holding a constant output.
    pub fn resting(power: f64) -> Self {
        DynamicState {
            on: false,
            x: [power, 0.0],
        }
    }

    pub fn power(&self) -> f64 {
        self.x[0]
    }
}

/// A load with both of its models discretized on the bank's sample grid.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadModel {
    pub size: f64,
    pub off_level: f64,
    pub on: DiscreteDynamics,
    pub off: DiscreteDynamics,
}

impl LoadModel {
    pub fn new(spec: &LoadSpec, dt: f64) -> Result<Self> {
        Ok(LoadModel {
            size: spec.size,
            off_level: spec.off_level,
            on: zoh_discretize(&spec.on_dynamics, dt)?,
            off: zoh_discretize(&spec.off_dynamics, dt)?,
        })
    }

    pub fn for_bank(bank: &LoadBank) -> Result<Vec<Self>> {
        bank.loads()
            .iter()
            .map(|l| LoadModel::new(l, bank.dt()))
            .collect()
    }

    /// Advances one sample with switch input `on` held, returning the new
    /// power. A change of `on` hands the current output over to the other
    /// model with zero output slope.
    #[inline]
    pub fn step(&self, state: &mut DynamicState, on: bool) -> f64 {
        if state.on != on {
            state.on = on;
            state.x = [state.x[0], 0.0];
        }
        if on {
            self.on.step(&mut state.x, self.size);
        } else {
            self.off.step(&mut state.x, self.off_level);
        }
        state.x[0]
    }

    /// Runs `signal` from `state`, writing `signal.len()` powers into `out`.
    pub fn run(
        &self,
        state: &mut DynamicState,
        signal: impl IntoIterator<Item = bool>,
        out: &mut Vec<f64>,
    ) {
        out.extend(signal.into_iter().map(|w| self.step(state, w)));
    }
}

/// Simulates one load from rest at `initial_power` under switch signal `w`.
///
/// Returns `w.len() + 1` samples; sample `k + 1` is the power after `w[k]`
/// has been held for one sample time.
pub fn simulate_load(load: &LoadSpec, dt: f64, w: &[u8], initial_power: f64) -> Result<Vec<f64>> {
    if let Some((index, &value)) = w.iter().enumerate().find(|(_, &v)| v > 1) {
        return Err(Error::NonBinarySignal { index, value });
    }
    if !(initial_power >= 0.0) || !initial_power.is_finite() {
        return Err(Error::InvalidLoad {
            index: load.index,
            reason: format!("initial power must be non-negative, got {initial_power}"),
        });
    }
    let model = LoadModel::new(load, dt)?;
    let mut state = DynamicState::resting(initial_power);
    let mut out = Vec::with_capacity(w.len() + 1);
    out.push(initial_power);
    model.run(&mut state, w.iter().map(|&v| v == 1), &mut out);
    Ok(out)
}

/// Turn-on transient of a load starting from its resting level.
#[derive(Clone, Debug, PartialEq)]
pub struct StepResponse {
    pub peak: f64,
    pub peak_sample: usize,
    /// Percent above the load size; zero when the response never exceeds it.
    pub overshoot_pct: f64,
    /// First sample after which the power stays within 2% of the size.
    pub settling_samples: Option<usize>,
}

pub fn on_step_response(load: &LoadSpec, dt: f64, samples: usize) -> Result<StepResponse> {
    let p = simulate_load(load, dt, &vec![1; samples], load.off_level)?;
    let (peak_sample, peak) =
        p.iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, v)| {
                if v > best.1 {
                    (k, v)
                } else {
                    best
                }
            });
    let band = 0.02 * load.size;
    let settling_samples = match p.iter().rposition(|v| (v - load.size).abs() > band) {
        Some(k) if k + 1 < p.len() => Some(k + 1),
        Some(_) => None,
        None => Some(0),
    };
    Ok(StepResponse {
        peak,
        peak_sample,
        overshoot_pct: ((peak - load.size) / load.size * 100.0).max(0.0),
        settling_samples,
    })
}
