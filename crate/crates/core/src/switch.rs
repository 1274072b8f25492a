//! Control-modality switch scheduling.
//!
//! A planned trajectory is post-processed into timestamped activation events
//! for the grasp controller: wherever the virtual joint moves faster than a
//! small threshold the gripper-pivoting mode is required, everywhere else
//! slipping avoidance keeps the grasp firm. The threshold (0.01 rad/s by
//! default) exists to keep numerical noise in the planned velocities from
//! producing spurious switches.

use alloc::vec::Vec;

use thiserror::Error;

use crate::grasp::Modality;
use crate::planner::Trajectory;

/// Default virtual-joint speed separating the two modalities.
pub const DEFAULT_THRESHOLD: f64 = 0.01;

/// One timestamped modality command.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwitchEvent {
    pub time: f64,
    pub command: Modality,
}

/// Ordered, alternating modality commands covering a trajectory.
#[derive(Clone, Debug)]
pub struct SwitchSchedule {
    pub events: Vec<SwitchEvent>,
    pub threshold: f64,
}

impl SwitchSchedule {
    /// Modality active at time `t` (the last event at or before `t`).
    pub fn modality_at(&self, t: f64) -> Modality {
        let mut current = Modality::SlippingAvoidance;
        for e in &self.events {
            if e.time <= t {
                current = e.command;
            } else {
                break;
            }
        }
        current
    }

    /// Closed intervals during which gripper pivoting is active.
    pub fn pivoting_intervals(&self, end_time: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut open: Option<f64> = None;
        for e in &self.events {
            match (e.command, open) {
                (Modality::GripperPivoting, None) => open = Some(e.time),
                (Modality::SlippingAvoidance, Some(start)) => {
                    out.push((start, e.time));
                    open = None;
                }
                _ => {}
            }
        }
        if let Some(start) = open {
            out.push((start, end_time));
        }
        out
    }

    fn validate(&self) -> Result<(), SwitchError> {
        for w in self.events.windows(2) {
            if !(w[1].time > w[0].time) {
                return Err(SwitchError::NonMonotonicEvents);
            }
            if w[1].command == w[0].command {
                return Err(SwitchError::DuplicateCommands);
            }
        }
        Ok(())
    }
}

/// Optional chatter suppression for noisy trajectories.
#[derive(Clone, Copy, Debug)]
pub struct Hysteresis {
    /// Speed that engages gripper pivoting.
    pub enter: f64,
    /// Speed below which pivoting disengages (smaller than `enter`).
    pub exit: f64,
}

impl Hysteresis {
    pub fn with_threshold(threshold: f64) -> Self {
        Self {
            enter: threshold,
            exit: 0.5 * threshold,
        }
    }
}

#[derive(Clone, Debug, Error)]
pub enum SwitchError {
    #[error("trajectory has no virtual joint")]
    NoPivotJoint,
    #[error("trajectory must have a uniform, positive timestep")]
    BadTimestep,
    #[error("event times must be strictly increasing")]
    NonMonotonicEvents,
    #[error("consecutive events must alternate")]
    DuplicateCommands,
}

/// Per-sample virtual-joint speed by central finite differences (one-sided
/// at the ends).
pub fn pivot_speeds(times: &[f64], positions: &[f64]) -> Result<Vec<f64>, SwitchError> {
    let n = positions.len();
    if n < 2 || times.len() != n {
        return Err(SwitchError::BadTimestep);
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        return Err(SwitchError::BadTimestep);
    }
    for w in times.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-9 {
            return Err(SwitchError::BadTimestep);
        }
    }
    let mut v = Vec::with_capacity(n);
    for i in 0..n {
        let vi = if i == 0 {
            (positions[1] - positions[0]) / dt
        } else if i == n - 1 {
            (positions[n - 1] - positions[n - 2]) / dt
        } else {
            (positions[i + 1] - positions[i - 1]) / (2.0 * dt)
        };
        v.push(vi);
    }
    Ok(v)
}

/// Requirement per sample: speeds at or above the threshold demand
/// gripper pivoting (deterministic tie-break at the boundary).
fn requirements(speeds: &[f64], threshold: f64, hysteresis: Option<Hysteresis>) -> Vec<Modality> {
    match hysteresis {
        None => speeds
            .iter()
            .map(|v| {
                if v.abs() >= threshold {
                    Modality::GripperPivoting
                } else {
                    Modality::SlippingAvoidance
                }
            })
            .collect(),
        Some(h) => {
            let mut current = Modality::SlippingAvoidance;
            speeds
                .iter()
                .map(|v| {
                    current = match current {
                        Modality::SlippingAvoidance if v.abs() >= h.enter => {
                            Modality::GripperPivoting
                        }
                        Modality::GripperPivoting if v.abs() < h.exit => {
                            Modality::SlippingAvoidance
                        }
                        same => same,
                    };
                    current
                })
                .collect()
        }
    }
}

/// Merge runs shorter than `min_len` samples into their predecessor until
/// every region satisfies the dwell requirement.
fn enforce_min_dwell(reqs: &mut [Modality], min_len: usize) {
    loop {
        let mut changed = false;
        let n = reqs.len();
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && reqs[j + 1] == reqs[i] {
                j += 1;
            }
            let run = j - i + 1;
            if run < min_len && i > 0 {
                let fill = reqs[i - 1];
                for r in reqs.iter_mut().take(j + 1).skip(i) {
                    *r = fill;
                }
                changed = true;
            }
            i = j + 1;
        }
        if !changed {
            break;
        }
    }
}

/// Compute the switch schedule of a trajectory from the speed of its
/// virtual joint.
///
/// With `hysteresis` engaged, a dwell of at least two samples per region is
/// enforced on top of the enter/exit band, so no schedule can chatter.
pub fn compute_schedule(
    trajectory: &Trajectory,
    threshold: f64,
    hysteresis: Option<Hysteresis>,
) -> Result<SwitchSchedule, SwitchError> {
    let positions = trajectory.pivot_positions();
    if positions.is_empty() {
        return Err(SwitchError::NoPivotJoint);
    }
    if positions.len() == 1 {
        // Degenerate single-sample trajectory: slipping avoidance from t0.
        return Ok(SwitchSchedule {
            events: alloc::vec![SwitchEvent {
                time: trajectory.times[0],
                command: Modality::SlippingAvoidance,
            }],
            threshold,
        });
    }
    let speeds = pivot_speeds(&trajectory.times, &positions)?;
    let mut reqs = requirements(&speeds, threshold, hysteresis);
    if hysteresis.is_some() {
        enforce_min_dwell(&mut reqs, 2);
    }
    let mut events = Vec::new();
    for (i, req) in reqs.iter().enumerate() {
        if events.is_empty() || events.last().map(|e: &SwitchEvent| e.command) != Some(*req) {
            events.push(SwitchEvent {
                time: trajectory.times[i],
                command: *req,
            });
        }
    }
    let schedule = SwitchSchedule { events, threshold };
    schedule.validate()?;
    Ok(schedule)
}

/// One observed execution sample: time and virtual-joint position.
#[derive(Clone, Copy, Debug)]
pub struct ExecSample {
    pub time: f64,
    pub pivot_position: f64,
}

/// A command delivery performed by [`dispatch`].
#[derive(Clone, Copy, Debug)]
pub struct DeliveredEvent {
    pub command: Modality,
    pub scheduled_time: f64,
    pub delivered_time: f64,
}

/// Dispatch report: which commands went out and whether the execution
/// covered the whole schedule.
#[derive(Clone, Debug)]
pub struct DispatchReport {
    pub delivered: Vec<DeliveredEvent>,
    /// `None` when every event was delivered; otherwise the time at which
    /// the execution stream ended early.
    pub aborted_at: Option<f64>,
}

impl DispatchReport {
    pub fn completed(&self) -> bool {
        self.aborted_at.is_none()
    }
}

/// Walks a schedule against an execution timeline, emitting each command
/// once the observed time passes its timestamp.
#[derive(Clone, Debug)]
pub struct ScheduleCursor<'a> {
    schedule: &'a SwitchSchedule,
    next: usize,
}

impl<'a> ScheduleCursor<'a> {
    pub fn new(schedule: &'a SwitchSchedule) -> Self {
        Self { schedule, next: 0 }
    }

    /// Command due at observed time `t`, if any.
    pub fn advance(&mut self, t: f64) -> Option<SwitchEvent> {
        let e = self.schedule.events.get(self.next)?;
        if t >= e.time {
            self.next += 1;
            Some(*e)
        } else {
            None
        }
    }

    pub fn exhausted(&self) -> bool {
        self.next >= self.schedule.events.len()
    }
}

/// Deliver the schedule against a stream of observed joint states, sending
/// each command through `send` as its timestamp is passed. An execution
/// stream that ends early yields a partial report.
pub fn dispatch<I, F>(schedule: &SwitchSchedule, samples: I, mut send: F) -> DispatchReport
where
    I: IntoIterator<Item = ExecSample>,
    F: FnMut(Modality, f64),
{
    let mut cursor = ScheduleCursor::new(schedule);
    let mut delivered = Vec::new();
    let mut last_time = schedule.events.first().map(|e| e.time).unwrap_or(0.0);
    for sample in samples {
        last_time = sample.time;
        while let Some(event) = cursor.advance(sample.time) {
            send(event.command, sample.time);
            delivered.push(DeliveredEvent {
                command: event.command,
                scheduled_time: event.time,
                delivered_time: sample.time,
            });
        }
        if cursor.exhausted() {
            break;
        }
    }
    DispatchReport {
        aborted_at: if cursor.exhausted() {
            None
        } else {
            Some(last_time)
        },
        delivered,
    }
}
