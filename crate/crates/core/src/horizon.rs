//! Tracking cost and the receding-horizon scheduling loop.
//!
//! Every decision epoch the admissible schedule set is enumerated from the
//! live switch state, each candidate is simulated at the sample rate, and
//! the cheapest one (earliest in canonical order on ties) has its first
//! epoch committed.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{DynamicState, LoadBank, LoadModel};
use crate::switching::{
    admissible_actions, DecisionGrid, LoadSwitchState, ScheduleMatrix, ScheduleSpace, Semantics,
    SwitchLimits,
};

/// Target power sampled uniformly from `start_time` (seconds of day).
#[derive(Clone, Debug, PartialEq)]
pub struct PowerProfile {
    samples: Vec<f64>,
    dt: f64,
    start_time: f64,
}

impl PowerProfile {
    pub fn new(samples: Vec<f64>, dt: f64, start_time: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySeries);
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::NonPositiveSampleTime(dt));
        }
        if let Some(k) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Csv(format!("profile sample {k} is not finite")));
        }
        Ok(PowerProfile {
            samples,
            dt,
            start_time,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
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

    pub fn start_time(&self) -> f64 {
        self.start_time
    }
}

/// `e[k] = P[k] - Σ p_i[k]`.
pub fn tracking_error<T: AsRef<[f64]>>(target: &[f64], trajectories: &[T]) -> Result<Vec<f64>> {
    for t in trajectories {
        if t.as_ref().len() != target.len() {
            return Err(Error::LengthMismatch {
                what: "load trajectory vs target window",
                expected: target.len(),
                actual: t.as_ref().len(),
            });
        }
    }
    Ok(target
        .iter()
        .enumerate()
        .map(|(k, p)| p - trajectories.iter().map(|t| t.as_ref()[k]).sum::<f64>())
        .collect())
}

/// How the log barrier is applied over a window.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum BarrierForm {
    /// `Σ e² - ln(min(1, min e))`: one barrier term on the smallest margin.
    #[default]
    Window,
    /// `Σ (e² - ln e)`: a barrier term at every sample.
    PerSample,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Criterion {
    LeastSquares,
    /// Quadratic tracking with a log barrier enforcing `e > 0`.
    Barrier(BarrierForm),
}

impl Default for Criterion {
    fn default() -> Self {
        Criterion::Barrier(BarrierForm::Window)
    }
}

/// Which window samples are priced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum CostSamples {
    #[default]
    Every,
    /// Only the last sample of each decision epoch.
    EpochEnds,
}

#[derive(Clone, Copy, Debug)]
struct CostAccumulator {
    sum_sq: f64,
    sum_neg_log: f64,
    min_e: f64,
    violation: f64,
    count: usize,
}

impl CostAccumulator {
    fn new() -> Self {
        CostAccumulator {
            sum_sq: 0.0,
            sum_neg_log: 0.0,
            min_e: f64::INFINITY,
            violation: 0.0,
            count: 0,
        }
    }

    #[inline]
    fn push(&mut self, e: f64, per_sample_log: bool) {
        self.sum_sq += e * e;
        if per_sample_log && e > 0.0 {
            self.sum_neg_log -= e.ln();
        }
        if e < self.min_e {
            self.min_e = e;
        }
        if e < 0.0 {
            self.violation += e * e;
        }
        self.count += 1;
    }

    fn finish(&self, criterion: Criterion) -> f64 {
        match criterion {
            Criterion::LeastSquares => self.sum_sq,
            Criterion::Barrier(_) if self.count == 0 => 0.0,
            Criterion::Barrier(_) if self.min_e <= 0.0 => f64::INFINITY,
            Criterion::Barrier(BarrierForm::Window) => self.sum_sq - self.min_e.min(1.0).ln(),
            Criterion::Barrier(BarrierForm::PerSample) => self.sum_sq + self.sum_neg_log,
        }
    }
}

/// Cost of an error trace; `+inf` when a barrier constraint is violated.
pub fn cost(e: &[f64], criterion: Criterion) -> f64 {
    let per_sample = criterion == Criterion::Barrier(BarrierForm::PerSample);
    let mut acc = CostAccumulator::new();
    for &v in e {
        acc.push(v, per_sample);
    }
    acc.finish(criterion)
}

/// `Σ max(-e, 0)²`, the fall-back objective when no candidate is feasible.
pub fn violation(e: &[f64]) -> f64 {
    e.iter().filter(|&&v| v < 0.0).map(|v| v * v).sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackingConfig {
    pub criterion: Criterion,
    pub grid: DecisionGrid,
    pub semantics: Semantics,
    pub cost_samples: CostSamples,
}

impl TrackingConfig {
    pub fn new(grid: DecisionGrid) -> Self {
        TrackingConfig {
            criterion: Criterion::default(),
            grid,
            semantics: Semantics::default(),
            cost_samples: CostSamples::default(),
        }
    }

    pub fn with_criterion(mut self, criterion: Criterion) -> Self {
        self.criterion = criterion;
        self
    }

    /// 1 s sampling, 60 s decisions, 6-epoch (360 s) horizon.
    pub fn reference() -> Self {
        TrackingConfig::new(DecisionGrid::new(1.0, 60, 6).expect("valid grid"))
    }
}

/// A simulated candidate schedule over one window.
#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleEvaluation {
    pub schedule: ScheduleMatrix,
    pub cost: f64,
    /// Error at every window sample, priced or not.
    pub error: Vec<f64>,
    pub trajectories: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub candidates: usize,
    /// Canonical rank of the chosen schedule.
    pub rank: usize,
    /// Every candidate violated the barrier; the least-violation one was taken.
    pub fallback: bool,
    pub violation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub action: Vec<bool>,
    pub best: ScheduleEvaluation,
    pub diagnostics: StepDiagnostics,
}

/// Everything the loop carries from one decision epoch to the next.
#[derive(Clone, Debug, PartialEq)]
pub struct RecedingHorizonState {
    pub switch: Vec<LoadSwitchState>,
    pub dynamics: Vec<DynamicState>,
    /// Sample index of the next decision.
    pub sample: usize,
    /// Committed action per decision epoch so far.
    pub history: Vec<Vec<bool>>,
}

impl RecedingHorizonState {
    /// All loads off and resting, before any decision of the day.
    pub fn day_start(bank: &LoadBank) -> Self {
        RecedingHorizonState {
            switch: vec![LoadSwitchState::rested(); bank.len()],
            dynamics: bank
                .loads()
                .iter()
                .map(|l| DynamicState::resting(l.off_level))
                .collect(),
            sample: 0,
            history: Vec::new(),
        }
    }
}

/// Per-sample record of a full-day run. Every vector has `T/Δt + 1`
/// entries; `switching[i][k]` is the input held over `[t_k, t_{k+1})`, and
/// the final sample's switching is off.
#[derive(Clone, Debug, PartialEq)]
pub struct DayRecord {
    pub dt: f64,
    pub start_time: f64,
    pub decision_samples: u32,
    pub target: Vec<f64>,
    pub error: Vec<f64>,
    pub switching: Vec<Vec<bool>>,
    pub power: Vec<Vec<f64>>,
    /// Decision epochs where the barrier fall-back chose the action.
    pub fallback_epochs: Vec<usize>,
    pub metrics: DayMetrics,
}

impl DayRecord {
    /// Assembles a record from committed trajectories, computing the error
    /// and metrics.
    pub fn from_parts(
        dt: f64,
        start_time: f64,
        decision_samples: u32,
        target: Vec<f64>,
        switching: Vec<Vec<bool>>,
        power: Vec<Vec<f64>>,
        fallback_epochs: Vec<usize>,
    ) -> Result<DayRecord> {
        if let Some(w) = switching.iter().find(|w| w.len() != target.len()) {
            return Err(Error::LengthMismatch {
                what: "switching record vs target",
                expected: target.len(),
                actual: w.len(),
            });
        }
        if switching.len() != power.len() {
            return Err(Error::LengthMismatch {
                what: "switching vs power load count",
                expected: power.len(),
                actual: switching.len(),
            });
        }
        let error = tracking_error(&target, &power)?;
        let mut record = DayRecord {
            dt,
            start_time,
            decision_samples,
            target,
            error,
            switching,
            power,
            fallback_epochs,
            metrics: DayMetrics::default(),
        };
        record.metrics = DayMetrics::compute(&record);
        Ok(record)
    }

    pub fn samples(&self) -> usize {
        self.target.len()
    }

    pub fn loads(&self) -> usize {
        self.power.len()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.start_time + k as f64 * self.dt
    }

    pub fn in_fallback(&self, k: usize) -> bool {
        // Sample k + 1 is the first one shaped by the decision at sample k.
        let epoch = k.saturating_sub(1) / self.decision_samples as usize;
        self.fallback_epochs.binary_search(&epoch).is_ok()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DayMetrics {
    pub rmse: f64,
    pub load_energy: f64,
    pub supply_energy: f64,
    /// Load over supply energy; zero when there is no supply.
    pub utilization: f64,
    pub negative_error_samples: usize,
    pub negative_error_samples_outside_fallback: usize,
    pub fallback_epochs: usize,
    pub switch_counts: Vec<usize>,
}

impl DayMetrics {
    fn compute(record: &DayRecord) -> DayMetrics {
        let n = record.samples();
        let trapezoid = |v: &dyn Fn(usize) -> f64| -> f64 {
            (1..n).map(|k| 0.5 * (v(k - 1) + v(k)) * record.dt).sum()
        };
        let demand = |k: usize| record.power.iter().map(|p| p[k]).sum::<f64>();
        let load_energy = trapezoid(&demand);
        let supply_energy = trapezoid(&|k| record.target[k]);
        let negative: Vec<usize> = (0..n).filter(|&k| record.error[k] < 0.0).collect();
        DayMetrics {
            rmse: (record.error.iter().map(|e| e * e).sum::<f64>() / n as f64).sqrt(),
            load_energy,
            supply_energy,
            utilization: if supply_energy > 0.0 {
                load_energy / supply_energy
            } else {
                0.0
            },
            negative_error_samples: negative.len(),
            negative_error_samples_outside_fallback: negative
                .iter()
                .filter(|&&k| !record.in_fallback(k))
                .count(),
            fallback_epochs: record.fallback_epochs.len(),
            switch_counts: record
                .switching
                .iter()
                .map(|w| w.windows(2).filter(|p| p[0] != p[1]).count() + w[0] as usize)
                .collect(),
        }
    }
}

/// Discretized bank plus configuration, reusable across steps.
#[derive(Clone, Debug)]
pub struct Scheduler {
    bank: LoadBank,
    models: Vec<LoadModel>,
    limits: Vec<SwitchLimits>,
    cfg: TrackingConfig,
}

impl Scheduler {
    pub fn new(bank: LoadBank, cfg: TrackingConfig) -> Result<Self> {
        let rel = (cfg.grid.dt() - bank.dt()).abs() / bank.dt();
        if rel > 1e-12 {
            return Err(Error::InvalidGrid(format!(
                "decision grid sample time {} differs from the load bank's {}",
                cfg.grid.dt(),
                bank.dt()
            )));
        }
        if !bank
            .day_samples()
            .is_multiple_of(cfg.grid.decision_samples())
        {
            return Err(Error::InvalidGrid(format!(
                "day of {} samples is not a whole number of {}-sample decision epochs",
                bank.day_samples(),
                cfg.grid.decision_samples()
            )));
        }
        let models = LoadModel::for_bank(&bank)?;
        let limits = SwitchLimits::from_bank(&bank, &cfg.grid)?;
        Ok(Scheduler {
            bank,
            models,
            limits,
            cfg,
        })
    }

    pub fn bank(&self) -> &LoadBank {
        &self.bank
    }

    pub fn config(&self) -> &TrackingConfig {
        &self.cfg
    }

    pub fn limits(&self) -> &[SwitchLimits] {
        &self.limits
    }

    fn epochs_to_day_end(&self, sample: usize) -> u32 {
        (self.bank.day_samples() as usize).saturating_sub(sample) as u32
            / self.cfg.grid.decision_samples()
    }

    /// Chooses the next epoch's action for `window`, the target at the
    /// samples following the decision. A window shorter than the horizon
    /// shrinks it to the whole epochs it covers.
    pub fn optimize_step(
        &self,
        state: &RecedingHorizonState,
        window: &[f64],
    ) -> Result<StepOutcome> {
        let nd = self.cfg.grid.decision_samples() as usize;
        let epochs = (window.len() / nd).min(self.cfg.grid.horizon_epochs() as usize);
        if epochs == 0 {
            return Err(Error::LengthMismatch {
                what: "forecast window shorter than one decision epoch",
                expected: nd,
                actual: window.len(),
            });
        }
        let window = &window[..epochs * nd];
        let space = ScheduleSpace::new(state.switch.clone(), self.limits.clone(), epochs)?
            .with_day_end(Some(self.epochs_to_day_end(state.sample)))
            .with_semantics(self.cfg.semantics);

        // Rows are independent, so each load's distinct rows are simulated once.
        let mut row_index: Vec<HashMap<u64, usize>> = Vec::with_capacity(self.models.len());
        let mut row_traj: Vec<Vec<Vec<f64>>> = Vec::with_capacity(self.models.len());
        for (i, model) in self.models.iter().enumerate() {
            let mut index = HashMap::new();
            let mut trajs = Vec::new();
            for row in space.single_load(i).enumerate() {
                let bits = row.row(0);
                let mut dyn_state = state.dynamics[i];
                let mut out = Vec::with_capacity(window.len());
                model.run(
                    &mut dyn_state,
                    (0..window.len()).map(|s| bits >> (s / nd) & 1 == 1),
                    &mut out,
                );
                index.insert(bits, trajs.len());
                trajs.push(out);
            }
            row_index.push(index);
            row_traj.push(trajs);
        }

        let schedules: Vec<ScheduleMatrix> = space.enumerate().collect();
        assert!(!schedules.is_empty(), "holding is always admissible");
        let picks: Vec<Vec<usize>> = schedules
            .iter()
            .map(|m| (0..m.loads()).map(|i| row_index[i][&m.row(i)]).collect())
            .collect();

        let priced: Vec<usize> = match self.cfg.cost_samples {
            CostSamples::Every => (0..window.len()).collect(),
            CostSamples::EpochEnds => (1..=epochs).map(|m| m * nd - 1).collect(),
        };
        let criterion = self.cfg.criterion;
        let per_sample = criterion == Criterion::Barrier(BarrierForm::PerSample);
        let evaluate = |pick: &[usize]| -> CostAccumulator {
            let mut acc = CostAccumulator::new();
            for &s in &priced {
                let demand: f64 = pick
                    .iter()
                    .enumerate()
                    .map(|(i, &r)| row_traj[i][r][s])
                    .sum();
                acc.push(window[s] - demand, per_sample);
            }
            acc
        };
        let better =
            |a: (f64, usize), b: (f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).is_lt();
        let argmin = |score: &(dyn Fn(&CostAccumulator) -> f64 + Sync)| -> (f64, usize) {
            picks
                .par_iter()
                .enumerate()
                .map(|(rank, pick)| (score(&evaluate(pick)), rank))
                .reduce(
                    || (f64::INFINITY, usize::MAX),
                    |a, b| if better(b, a) { b } else { a },
                )
        };

        let (mut best_cost, mut rank) = argmin(&|acc| acc.finish(criterion));
        let mut fallback = false;
        let mut least_violation = 0.0;
        if best_cost.is_infinite() {
            let (v, r) = argmin(&|acc| acc.violation);
            fallback = true;
            least_violation = v;
            rank = r;
            best_cost = f64::INFINITY;
        }

        let schedule = schedules[rank].clone();
        let trajectories: Vec<Vec<f64>> = picks[rank]
            .iter()
            .enumerate()
            .map(|(i, &r)| row_traj[i][r].clone())
            .collect();
        let error = tracking_error(window, &trajectories)?;
        Ok(StepOutcome {
            action: schedule.first_action(),
            best: ScheduleEvaluation {
                schedule,
                cost: best_cost,
                error,
                trajectories,
            },
            diagnostics: StepDiagnostics {
                candidates: schedules.len(),
                rank,
                fallback,
                violation: least_violation,
            },
        })
    }

    pub fn run(&self, profile: &PowerProfile) -> Result<DayRecord> {
        self.run_with_progress(profile, |_| {})
    }

    /// Runs the whole day; `progress` receives each completed hour.
    pub fn run_with_progress(
        &self,
        profile: &PowerProfile,
        mut progress: impl FnMut(u32),
    ) -> Result<DayRecord> {
        let bank = &self.bank;
        let k_day = bank.day_samples() as usize;
        if profile.len() < k_day + 1 {
            return Err(Error::ProfileTooShort {
                required: k_day + 1,
                actual: profile.len(),
            });
        }
        if (profile.dt() - bank.dt()).abs() > 1e-12 * bank.dt() {
            return Err(Error::InvalidGrid(format!(
                "profile sample time {} differs from the load bank's {}",
                profile.dt(),
                bank.dt()
            )));
        }
        let target = &profile.samples()[..=k_day];
        let nd = self.cfg.grid.decision_samples() as usize;
        let horizon = self.cfg.grid.horizon_samples();
        let n = bank.len();

        let mut state = RecedingHorizonState::day_start(bank);
        let mut power: Vec<Vec<f64>> = bank
            .loads()
            .iter()
            .map(|l| {
                let mut v = Vec::with_capacity(k_day + 1);
                v.push(l.off_level);
                v
            })
            .collect();
        let mut switching = vec![vec![false; k_day + 1]; n];
        let mut fallback_epochs = Vec::new();
        let mut last_hour = 0u32;

        for epoch in 0..k_day / nd {
            let k0 = epoch * nd;
            let end = (k0 + horizon).min(k_day);
            let outcome = self.optimize_step(&state, &target[k0 + 1..=end])?;
            debug_assert!(admissible_actions(
                &state.switch,
                Some(self.epochs_to_day_end(k0)),
                &self.limits,
                &self.cfg.semantics
            )?
            .contains(&outcome.action));
            if outcome.diagnostics.fallback {
                fallback_epochs.push(epoch);
            }
            for (i, model) in self.models.iter().enumerate() {
                let on = outcome.action[i];
                let dyn_state = &mut state.dynamics[i];
                switching[i][k0..k0 + nd].fill(on);
                for _ in 0..nd {
                    power[i].push(model.step(dyn_state, on));
                }
                state.switch[i] = state.switch[i].advance(on);
            }
            state.sample = k0 + nd;
            state.history.push(outcome.action);

            let hour = (state.sample as f64 * bank.dt() / 3600.0).floor() as u32;
            if hour > last_hour {
                last_hour = hour;
                progress(hour);
            }
        }

        DayRecord::from_parts(
            bank.dt(),
            profile.start_time(),
            self.cfg.grid.decision_samples(),
            target.to_vec(),
            switching,
            power,
            fallback_epochs,
        )
    }
}

pub fn optimize_step(
    state: &RecedingHorizonState,
    window: &PowerProfile,
    bank: &LoadBank,
    cfg: &TrackingConfig,
) -> Result<StepOutcome> {
    Scheduler::new(bank.clone(), *cfg)?.optimize_step(state, window.samples())
}

pub fn run_receding(
    profile: &PowerProfile,
    bank: &LoadBank,
    cfg: &TrackingConfig,
) -> Result<DayRecord> {
    Scheduler::new(bank.clone(), *cfg)?.run(profile)
}

/// A committed run that broke a minimum dwell or the day-end rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DwellViolation {
    pub load: usize,
    pub start_sample: usize,
    pub length: usize,
    pub on: bool,
}

/// Checks the committed switching of a day record against every load's
/// minimum on/off samples. Loads start the day off with unconstrained
/// history and are off again after the last sample.
pub fn audit_dwell(record: &DayRecord, bank: &LoadBank) -> Vec<DwellViolation> {
    let k_day = record.samples() - 1;
    let mut out = Vec::new();
    for (i, load) in bank.loads().iter().enumerate() {
        let w = &record.switching[i][..k_day];
        let mut prev = false;
        let mut run_start: Option<usize> = None;
        let close = |start: Option<usize>, end: usize, on: bool, out: &mut Vec<DwellViolation>| {
            if let Some(s) = start {
                let min = if on { load.min_on } else { load.min_off } as usize;
                if end - s < min {
                    out.push(DwellViolation {
                        load: load.index,
                        start_sample: s,
                        length: end - s,
                        on,
                    });
                }
            }
        };
        for (k, &on) in w.iter().enumerate() {
            if on != prev {
                close(run_start, k, prev, &mut out);
                run_start = Some(k);
                prev = on;
            }
        }
        // An on-run must finish before the day does; an off-run may be cut short.
        if prev {
            close(run_start, k_day, true, &mut out);
        }
    }
    out
}
