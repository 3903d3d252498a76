//! Admissible on/off schedules over a horizon of decision epochs.
//!
//! A schedule is an `n x H` binary matrix. Rows are independent: a load may
//! flip only once its current run (including history carried in
//! [`LoadSwitchState`]) has lasted its minimum number of epochs, and an off
//! load may not turn on when fewer than its minimum on-epochs remain before
//! the end of the day. Enumeration is depth-first in canonical order: epoch
//! by epoch, and within an epoch lexicographically over loads with 0 before 1.

use std::fmt;

use crate::error::{Error, Result};
use crate::model::LoadBank;

/// Dwell counter value for a load that has been in its state "forever".
pub const SATURATED_DWELL: u32 = u32::MAX;

/// Longest horizon a [`ScheduleMatrix`] row can hold.
pub const MAX_HORIZON_EPOCHS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LoadSwitchState {
    pub on: bool,
    /// Consecutive epochs spent in the current state, saturating.
    pub dwell_epochs: u32,
}

impl LoadSwitchState {
    pub fn new(on: bool, dwell_epochs: u32) -> Self {
        LoadSwitchState { on, dwell_epochs }
    }

    /// Off since before the start of the day.
    pub fn rested() -> Self {
        LoadSwitchState::new(false, SATURATED_DWELL)
    }

    /// State after one more epoch with the load commanded to `on`.
    pub fn advance(self, on: bool) -> Self {
        if on == self.on {
            LoadSwitchState::new(on, self.dwell_epochs.saturating_add(1))
        } else {
            LoadSwitchState::new(on, 1)
        }
    }
}

/// Minimum dwell times of one load expressed in decision epochs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SwitchLimits {
    pub min_on_epochs: u32,
    pub min_off_epochs: u32,
}

impl SwitchLimits {
    pub fn new(min_on_epochs: u32, min_off_epochs: u32) -> Self {
        SwitchLimits {
            min_on_epochs,
            min_off_epochs,
        }
    }

    /// Converts every load's sample minimums to epochs; each minimum must be
    /// an exact multiple of the decision period.
    pub fn from_bank(bank: &LoadBank, grid: &DecisionGrid) -> Result<Vec<SwitchLimits>> {
        let nd = grid.decision_samples();
        bank.loads()
            .iter()
            .map(|load| {
                for (name, value) in [("min_on", load.min_on), ("min_off", load.min_off)] {
                    if !value.is_multiple_of(nd) {
                        return Err(Error::InvalidLoad {
                            index: load.index,
                            reason: format!(
                                "{name} of {value} samples is not a multiple of the {nd}-sample decision period"
                            ),
                        });
                    }
                }
                Ok(SwitchLimits::new(load.min_on / nd, load.min_off / nd))
            })
            .collect()
    }
}

/// Simulation samples grouped into decision epochs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecisionGrid {
    dt: f64,
    decision_samples: u32,
    horizon_epochs: u32,
}

impl DecisionGrid {
    pub fn new(dt: f64, decision_samples: u32, horizon_epochs: u32) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::NonPositiveSampleTime(dt));
        }
        if decision_samples == 0 {
            return Err(Error::InvalidGrid(
                "decision period must be at least one sample".into(),
            ));
        }
        if horizon_epochs == 0 || horizon_epochs as usize > MAX_HORIZON_EPOCHS {
            return Err(Error::InvalidGrid(format!(
                "horizon must be 1..={MAX_HORIZON_EPOCHS} epochs, got {horizon_epochs}"
            )));
        }
        Ok(DecisionGrid {
            dt,
            decision_samples,
            horizon_epochs,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn decision_samples(&self) -> u32 {
        self.decision_samples
    }

    pub fn horizon_epochs(&self) -> u32 {
        self.horizon_epochs
    }

    pub fn horizon_samples(&self) -> usize {
        self.decision_samples as usize * self.horizon_epochs as usize
    }
}

/// Treatment of a run that starts inside the horizon and is still going at
/// its last epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum FinalRun {
    /// The run may be shorter than its minimum; later steps can finish it.
    #[default]
    Allow,
    /// The run must already have reached its minimum.
    Forbid,
}

/// How the dwell counter is compared against a minimum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum DwellCount {
    /// A run must last the full minimum before a flip.
    #[default]
    Strict,
    /// The switching epoch itself counts toward the previous run, so a flip
    /// is allowed one epoch earlier.
    Lenient,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Semantics {
    pub truncate_final_run: FinalRun,
    pub dwell_count: DwellCount,
}

impl Semantics {
    fn threshold(&self, min: u32) -> u32 {
        match self.dwell_count {
            DwellCount::Strict => min,
            DwellCount::Lenient => min.saturating_sub(1),
        }
    }

    /// Every flag combination, in a fixed order.
    pub fn all() -> [Semantics; 4] {
        let mut out = [Semantics::default(); 4];
        let mut k = 0;
        for truncate_final_run in [FinalRun::Allow, FinalRun::Forbid] {
            for dwell_count in [DwellCount::Strict, DwellCount::Lenient] {
                out[k] = Semantics {
                    truncate_final_run,
                    dwell_count,
                };
                k += 1;
            }
        }
        out
    }
}

impl FinalRun {
    pub fn as_str(self) -> &'static str {
        match self {
            FinalRun::Allow => "allow",
            FinalRun::Forbid => "forbid",
        }
    }
}

impl DwellCount {
    pub fn as_str(self) -> &'static str {
        match self {
            DwellCount::Strict => "strict",
            DwellCount::Lenient => "lenient",
        }
    }
}

impl fmt::Display for Semantics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "truncate_final_run={} dwell_count={}",
            self.truncate_final_run.as_str(),
            self.dwell_count.as_str()
        )
    }
}

/// Whether the horizon's first column is a decision or the given initial
/// combination.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum FirstEpoch {
    #[default]
    Free,
    /// Column 0 equals the initial on/off combination; the initial dwell
    /// counters already include it.
    Pinned,
}

/// Per-epoch constraints that depend on position in the horizon.
#[derive(Clone, Copy, Debug)]
struct EpochContext {
    epochs_to_day_end: Option<u32>,
    /// Epochs from this one to the end of the horizon, when final runs must
    /// complete inside it.
    epochs_left_in_horizon: Option<u32>,
}

/// Which values load `i` may take in the next epoch: `[hold]` or both, in
/// 0-before-1 order.
fn load_options(
    state: LoadSwitchState,
    limits: SwitchLimits,
    sem: &Semantics,
    ctx: EpochContext,
) -> ([bool; 2], usize) {
    let can_flip = if state.on {
        state.dwell_epochs >= sem.threshold(limits.min_on_epochs)
            && ctx
                .epochs_left_in_horizon
                .is_none_or(|left| left >= sem.threshold(limits.min_off_epochs))
    } else {
        state.dwell_epochs >= sem.threshold(limits.min_off_epochs)
            && ctx
                .epochs_to_day_end
                .is_none_or(|left| left >= limits.min_on_epochs)
            && ctx
                .epochs_left_in_horizon
                .is_none_or(|left| left >= sem.threshold(limits.min_on_epochs))
    };
    if can_flip {
        ([false, true], 2)
    } else {
        ([state.on, state.on], 1)
    }
}

/// Action masks have load 1 in the most significant of the `n` bits, so
/// numeric order is the canonical lexicographic order.
fn action_masks(
    states: &[LoadSwitchState],
    limits: &[SwitchLimits],
    sem: &Semantics,
    ctx: EpochContext,
) -> Vec<u64> {
    let mut masks = vec![0u64];
    for (&state, &lim) in states.iter().zip(limits) {
        let (opts, len) = load_options(state, lim, sem, ctx);
        masks = masks
            .iter()
            .flat_map(|&m| opts[..len].iter().map(move |&b| (m << 1) | b as u64))
            .collect();
    }
    masks
}

fn check_lengths(states: &[LoadSwitchState], limits: &[SwitchLimits]) -> Result<()> {
    if states.len() != limits.len() {
        return Err(Error::LengthMismatch {
            what: "switch states vs loads",
            expected: limits.len(),
            actual: states.len(),
        });
    }
    if states.is_empty() || states.len() > 63 {
        return Err(Error::InvalidGrid(format!(
            "schedules need 1..=63 loads, got {}",
            states.len()
        )));
    }
    Ok(())
}

/// All on/off vectors the loads may take in the next epoch, canonical order.
pub fn admissible_actions(
    states: &[LoadSwitchState],
    epochs_to_day_end: Option<u32>,
    limits: &[SwitchLimits],
    semantics: &Semantics,
) -> Result<Vec<Vec<bool>>> {
    check_lengths(states, limits)?;
    let ctx = EpochContext {
        epochs_to_day_end,
        epochs_left_in_horizon: None,
    };
    let n = states.len();
    Ok(action_masks(states, limits, semantics, ctx)
        .into_iter()
        .map(|m| unpack(m, n))
        .collect())
}

fn unpack(mask: u64, n: usize) -> Vec<bool> {
    (0..n).map(|i| mask >> (n - 1 - i) & 1 == 1).collect()
}

/// An `n x H` on/off matrix; bit `m` of row `i` is load `i` at epoch `m`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ScheduleMatrix {
    rows: Vec<u64>,
    epochs: usize,
}

impl ScheduleMatrix {
    pub fn from_rows(rows: Vec<u64>, epochs: usize) -> Self {
        assert!((1..=MAX_HORIZON_EPOCHS).contains(&epochs));
        let mask = if epochs == 64 {
            u64::MAX
        } else {
            (1u64 << epochs) - 1
        };
        assert!(
            rows.iter().all(|r| r & !mask == 0),
            "row bits beyond horizon"
        );
        ScheduleMatrix { rows, epochs }
    }

    pub fn from_columns(columns: &[Vec<bool>]) -> Self {
        let n = columns.first().map_or(0, Vec::len);
        let mut rows = vec![0u64; n];
        for (m, col) in columns.iter().enumerate() {
            for (i, &b) in col.iter().enumerate() {
                rows[i] |= (b as u64) << m;
            }
        }
        ScheduleMatrix::from_rows(rows, columns.len())
    }

    pub fn loads(&self) -> usize {
        self.rows.len()
    }

    pub fn epochs(&self) -> usize {
        self.epochs
    }

    pub fn get(&self, load: usize, epoch: usize) -> bool {
        self.rows[load] >> epoch & 1 == 1
    }

    pub fn row(&self, load: usize) -> u64 {
        self.rows[load]
    }

    pub fn rows(&self) -> &[u64] {
        &self.rows
    }

    pub fn column(&self, epoch: usize) -> Vec<bool> {
        (0..self.loads()).map(|i| self.get(i, epoch)).collect()
    }

    pub fn first_action(&self) -> Vec<bool> {
        self.column(0)
    }

    /// Sorting by this key gives canonical enumeration order.
    pub fn canonical_key(&self) -> Vec<Vec<bool>> {
        (0..self.epochs).map(|m| self.column(m)).collect()
    }
}

impl fmt::Display for ScheduleMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, _) in self.rows.iter().enumerate() {
            if i > 0 {
                f.write_str("/")?;
            }
            for m in 0..self.epochs {
                f.write_str(if self.get(i, m) { "1" } else { "0" })?;
            }
        }
        Ok(())
    }
}

/// The admissible set from one starting point.
#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleSpace {
    initial: Vec<LoadSwitchState>,
    limits: Vec<SwitchLimits>,
    horizon_epochs: usize,
    epochs_to_day_end: Option<u32>,
    first_epoch: FirstEpoch,
    semantics: Semantics,
}

/// Leaf and node counts of the schedule tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TreeCount {
    /// Complete schedules, i.e. the size of the admissible set.
    pub leaves: u128,
    /// Distinct non-empty prefixes of branching columns.
    pub nodes: u128,
}

impl ScheduleSpace {
    pub fn new(
        initial: Vec<LoadSwitchState>,
        limits: Vec<SwitchLimits>,
        horizon_epochs: usize,
    ) -> Result<Self> {
        check_lengths(&initial, &limits)?;
        if !(1..=MAX_HORIZON_EPOCHS).contains(&horizon_epochs) {
            return Err(Error::InvalidGrid(format!(
                "horizon must be 1..={MAX_HORIZON_EPOCHS} epochs, got {horizon_epochs}"
            )));
        }
        Ok(ScheduleSpace {
            initial,
            limits,
            horizon_epochs,
            epochs_to_day_end: None,
            first_epoch: FirstEpoch::Free,
            semantics: Semantics::default(),
        })
    }

    /// Epochs from the first column to the end of the day; `None` is unbounded.
    pub fn with_day_end(mut self, epochs_to_day_end: Option<u32>) -> Self {
        self.epochs_to_day_end = epochs_to_day_end;
        self
    }

    pub fn with_first_epoch(mut self, first_epoch: FirstEpoch) -> Self {
        self.first_epoch = first_epoch;
        self
    }

    pub fn with_semantics(mut self, semantics: Semantics) -> Self {
        self.semantics = semantics;
        self
    }

    pub fn initial(&self) -> &[LoadSwitchState] {
        &self.initial
    }

    pub fn limits(&self) -> &[SwitchLimits] {
        &self.limits
    }

    pub fn horizon_epochs(&self) -> usize {
        self.horizon_epochs
    }

    pub fn epochs_to_day_end(&self) -> Option<u32> {
        self.epochs_to_day_end
    }

    pub fn first_epoch(&self) -> FirstEpoch {
        self.first_epoch
    }

    pub fn semantics(&self) -> Semantics {
        self.semantics
    }

    /// The same space restricted to one load.
    pub fn single_load(&self, load: usize) -> ScheduleSpace {
        ScheduleSpace {
            initial: vec![self.initial[load]],
            limits: vec![self.limits[load]],
            ..self.clone()
        }
    }

    fn first_branching_column(&self) -> usize {
        match self.first_epoch {
            FirstEpoch::Free => 0,
            FirstEpoch::Pinned => 1,
        }
    }

    fn context(&self, column: usize) -> EpochContext {
        let column = column as u32;
        EpochContext {
            epochs_to_day_end: self.epochs_to_day_end.map(|d| d.saturating_sub(column)),
            epochs_left_in_horizon: match self.semantics.truncate_final_run {
                FinalRun::Allow => None,
                FinalRun::Forbid => Some(self.horizon_epochs as u32 - column),
            },
        }
    }

    pub fn enumerate(&self) -> Schedules<'_> {
        Schedules::new(self)
    }

    /// Size of the admissible set, without materializing it.
    pub fn count(&self) -> Result<u128> {
        Ok(self.count_tree()?.leaves)
    }

    pub fn count_tree(&self) -> Result<TreeCount> {
        let start = self.first_branching_column();
        let depth = self.horizon_epochs - start;
        // prefixes[i][d] = number of admissible row prefixes of load i with
        // d + 1 branching columns.
        let per_load: Vec<Vec<u128>> = (0..self.initial.len())
            .map(|i| self.row_prefix_counts(i, start, depth))
            .collect::<Result<_>>()?;
        let product_at = |d: usize| -> Result<u128> {
            per_load
                .iter()
                .try_fold(1u128, |acc, counts| acc.checked_mul(counts[d]))
                .ok_or(Error::CountOverflow)
        };
        if depth == 0 {
            return Ok(TreeCount {
                leaves: 1,
                nodes: 0,
            });
        }
        let mut nodes = 0u128;
        for d in 0..depth {
            nodes = nodes
                .checked_add(product_at(d)?)
                .ok_or(Error::CountOverflow)?;
        }
        Ok(TreeCount {
            leaves: product_at(depth - 1)?,
            nodes,
        })
    }

    fn row_prefix_counts(&self, load: usize, start: usize, depth: usize) -> Result<Vec<u128>> {
        let lim = self.limits[load];
        let sem = self.semantics;
        // Dwell beyond the largest threshold never changes admissibility.
        let cap = lim.min_on_epochs.max(lim.min_off_epochs).max(1);
        let clamp = |s: LoadSwitchState| LoadSwitchState::new(s.on, s.dwell_epochs.min(cap));

        let mut frontier: Vec<(LoadSwitchState, u128)> = vec![(clamp(self.initial[load]), 1)];
        let mut out = Vec::with_capacity(depth);
        for column in start..start + depth {
            let ctx = self.context(column);
            let mut next: Vec<(LoadSwitchState, u128)> = Vec::new();
            for &(state, count) in &frontier {
                let (opts, len) = load_options(state, lim, &sem, ctx);
                for &on in &opts[..len] {
                    let s = clamp(state.advance(on));
                    match next.iter_mut().find(|(k, _)| *k == s) {
                        Some((_, c)) => *c = c.checked_add(count).ok_or(Error::CountOverflow)?,
                        None => next.push((s, count)),
                    }
                }
            }
            let total = next
                .iter()
                .try_fold(0u128, |acc, (_, c)| acc.checked_add(*c))
                .ok_or(Error::CountOverflow)?;
            out.push(total);
            frontier = next;
        }
        Ok(out)
    }
}

/// Enumerates a space in canonical order.
pub fn enumerate_schedules(space: &ScheduleSpace) -> Schedules<'_> {
    space.enumerate()
}

pub fn count_schedules(space: &ScheduleSpace) -> Result<u128> {
    space.count()
}

struct Frame {
    states: Vec<LoadSwitchState>,
    actions: Vec<u64>,
    next: usize,
}

/// Lazy depth-first traversal of a [`ScheduleSpace`].
pub struct Schedules<'a> {
    space: &'a ScheduleSpace,
    stack: Vec<Frame>,
    /// Action masks chosen so far, one per branching column.
    path: Vec<u64>,
    pinned_done: bool,
}

impl<'a> Schedules<'a> {
    fn new(space: &'a ScheduleSpace) -> Self {
        let mut it = Schedules {
            space,
            stack: Vec::new(),
            path: Vec::new(),
            pinned_done: false,
        };
        let start = space.first_branching_column();
        if start < space.horizon_epochs {
            it.push_frame(space.initial.clone(), start);
        }
        it
    }

    fn push_frame(&mut self, states: Vec<LoadSwitchState>, column: usize) {
        let sp = self.space;
        let actions = action_masks(&states, &sp.limits, &sp.semantics, sp.context(column));
        self.stack.push(Frame {
            states,
            actions,
            next: 0,
        });
    }

    fn build(&self) -> ScheduleMatrix {
        let sp = self.space;
        let n = sp.initial.len();
        let mut rows = vec![0u64; n];
        let mut columns: Vec<u64> = Vec::with_capacity(sp.horizon_epochs);
        if sp.first_epoch == FirstEpoch::Pinned {
            columns.push(sp.initial.iter().fold(0u64, |m, s| (m << 1) | s.on as u64));
        }
        columns.extend_from_slice(&self.path);
        for (m, col) in columns.iter().enumerate() {
            for (i, row) in rows.iter_mut().enumerate() {
                *row |= (col >> (n - 1 - i) & 1) << m;
            }
        }
        ScheduleMatrix::from_rows(rows, sp.horizon_epochs)
    }
}

impl Iterator for Schedules<'_> {
    type Item = ScheduleMatrix;

    fn next(&mut self) -> Option<ScheduleMatrix> {
        let sp = self.space;
        let start = sp.first_branching_column();
        if start >= sp.horizon_epochs {
            // Pinned single-epoch horizon: the initial column is the only schedule.
            if self.pinned_done {
                return None;
            }
            self.pinned_done = true;
            return Some(self.build());
        }
        let n = sp.initial.len();
        loop {
            let depth = self.stack.len();
            let frame = self.stack.last_mut()?;
            if frame.next == frame.actions.len() {
                self.stack.pop();
                self.path.pop();
                continue;
            }
            let action = frame.actions[frame.next];
            frame.next += 1;
            self.path.truncate(depth - 1);
            self.path.push(action);
            let column = start + depth - 1;
            if column + 1 == sp.horizon_epochs {
                return Some(self.build());
            }
            let states = frame
                .states
                .iter()
                .enumerate()
                .map(|(i, s)| s.advance(action >> (n - 1 - i) & 1 == 1))
                .collect();
            self.push_frame(states, column + 1);
        }
    }
}
