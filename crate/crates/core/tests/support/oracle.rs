//! Brute-force admissibility oracle for schedule enumeration.
//!
//! Rules are checked run by run on a complete matrix, rather than
//! branch by branch as the enumerator does.

#![allow(dead_code)]

use loadtrack_core::{
    DwellCount, FinalRun, FirstEpoch, LoadSwitchState, ScheduleMatrix, Semantics, SwitchLimits,
};
use rand::Rng;

#[derive(Clone, Debug)]
pub struct Instance {
    pub initial: Vec<LoadSwitchState>,
    pub limits: Vec<SwitchLimits>,
    pub horizon: usize,
    pub day_end: Option<u32>,
    pub first_epoch: FirstEpoch,
    pub semantics: Semantics,
}

fn threshold(min: u32, sem: &Semantics) -> u64 {
    match sem.dwell_count {
        DwellCount::Strict => min as u64,
        DwellCount::Lenient => min.saturating_sub(1) as u64,
    }
}

/// Whether one row (epoch `m` at `row[m]`) satisfies every rule.
pub fn row_admissible(inst: &Instance, load: usize, row: &[bool]) -> bool {
    let init = inst.initial[load];
    let lim = inst.limits[load];
    let sem = &inst.semantics;
    let h = inst.horizon;
    let start = match inst.first_epoch {
        FirstEpoch::Free => 0,
        FirstEpoch::Pinned => {
            if row[0] != init.on {
                return false;
            }
            1
        }
    };
    // Length of the run in progress just before `start`, counting history.
    let mut run_len: u64 = init.dwell_epochs as u64;
    let mut current = init.on;
    for (j, &value) in row.iter().enumerate().take(h).skip(start) {
        if value != current {
            let needed = threshold(
                if current {
                    lim.min_on_epochs
                } else {
                    lim.min_off_epochs
                },
                sem,
            );
            if run_len < needed {
                return false;
            }
            if value {
                if let Some(e) = inst.day_end {
                    if (e as i64 - j as i64) < lim.min_on_epochs as i64 {
                        return false;
                    }
                }
            }
            if sem.truncate_final_run == FinalRun::Forbid {
                let new_min = if value {
                    lim.min_on_epochs
                } else {
                    lim.min_off_epochs
                };
                if ((h - j) as u64) < threshold(new_min, sem) {
                    return false;
                }
            }
            current = value;
            run_len = 1;
        } else {
            run_len += 1;
        }
    }
    true
}

/// Every admissible matrix, in canonical order: the code's top `n` bits are
/// column 0 with load 1 most significant, the next `n` bits column 1, and so on.
pub fn brute_force(inst: &Instance) -> Vec<ScheduleMatrix> {
    let n = inst.limits.len();
    let h = inst.horizon;
    let bits = n * h;
    assert!(bits <= 24, "brute force is for small instances");
    let mut out = Vec::new();
    for code in 0u64..(1u64 << bits) {
        let bit = |load: usize, epoch: usize| code >> (bits - 1 - (epoch * n + load)) & 1 == 1;
        let ok = (0..n).all(|i| {
            let row: Vec<bool> = (0..h).map(|m| bit(i, m)).collect();
            row_admissible(inst, i, &row)
        });
        if ok {
            let columns: Vec<Vec<bool>> = (0..h)
                .map(|m| (0..n).map(|i| bit(i, m)).collect())
                .collect();
            out.push(ScheduleMatrix::from_columns(&columns));
        }
    }
    out
}

pub fn random_instance(rng: &mut impl Rng) -> Instance {
    let n = rng.random_range(1..=2);
    let horizon = rng.random_range(1..=8);
    let limits = (0..n)
        .map(|_| SwitchLimits::new(rng.random_range(1..=5), rng.random_range(1..=5)))
        .collect();
    let initial = (0..n)
        .map(|_| {
            let dwell = if rng.random_bool(0.3) {
                loadtrack_core::switching::SATURATED_DWELL
            } else {
                rng.random_range(1..=6)
            };
            LoadSwitchState::new(rng.random_bool(0.5), dwell)
        })
        .collect();
    let day_end = rng.random_bool(0.3).then(|| rng.random_range(0..=10));
    let first_epoch = if rng.random_bool(0.5) {
        FirstEpoch::Free
    } else {
        FirstEpoch::Pinned
    };
    let semantics = Semantics {
        truncate_final_run: if rng.random_bool(0.5) {
            FinalRun::Allow
        } else {
            FinalRun::Forbid
        },
        dwell_count: if rng.random_bool(0.5) {
            DwellCount::Strict
        } else {
            DwellCount::Lenient
        },
    };
    Instance {
        initial,
        limits,
        horizon,
        day_end,
        first_epoch,
        semantics,
    }
}

impl Instance {
    pub fn space(&self) -> loadtrack_core::ScheduleSpace {
        loadtrack_core::ScheduleSpace::new(self.initial.clone(), self.limits.clone(), self.horizon)
            .unwrap()
            .with_day_end(self.day_end)
            .with_first_epoch(self.first_epoch)
            .with_semantics(self.semantics)
    }
}
