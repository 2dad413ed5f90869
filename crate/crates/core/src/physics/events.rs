//! Segmentation of a recorded trial into contact events.

use super::{BodyRef, TrialRecord};
use crate::kinematics::{classify_contact, ContactType};
use serde::{Deserialize, Serialize};

/// Non-bounce runs shorter than this are absorbed by a neighbour.
pub const DEBOUNCE_STEPS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub start: usize,
    /// Inclusive.
    pub end: usize,
    pub kind: ContactType,
    pub object: Option<BodyRef>,
}

impl Event {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

pub type StepLabel = (ContactType, Option<BodyRef>);

/// Per-step label: the deepest ball contact of the step, classified with the
/// velocity the ball had before the step. Step 0 copies step 1.
pub fn step_labels(tr: &TrialRecord) -> Vec<StepLabel> {
    let n = tr.trajectory.len();
    let mut labels = Vec::with_capacity(n);
    for k in 1..n {
        let deepest = tr
            .ball_contacts(k)
            .max_by(|x, y| x.penetration.total_cmp(&y.penetration));
        labels.push(match deepest {
            Some(c) => (
                classify_contact(tr.trajectory[k - 1].vel, c.normal, c.corner),
                Some(c.a),
            ),
            None => (ContactType::FreeFall, None),
        });
    }
    let first = labels.first().copied().unwrap_or((ContactType::FreeFall, None));
    labels.insert(0, first);
    labels
}

fn coalesce(runs: &mut Vec<Event>) {
    let mut i = 1;
    while i < runs.len() {
        if runs[i].kind == runs[i - 1].kind && runs[i].object == runs[i - 1].object {
            runs[i - 1].end = runs[i].end;
            runs.remove(i);
        } else {
            i += 1;
        }
    }
}

/// Maximal runs of equal labels, with short non-bounce runs merged into the
/// previous run (or the next one when they come first).
pub fn segment(labels: &[StepLabel]) -> Vec<Event> {
    let mut runs: Vec<Event> = labels
        .iter()
        .enumerate()
        .map(|(k, &(kind, object))| Event { start: k, end: k, kind, object })
        .collect();
    coalesce(&mut runs);
    loop {
        let short = runs
            .iter()
            .position(|e| e.len() < DEBOUNCE_STEPS && !e.kind.is_bounce());
        match short {
            Some(i) if runs.len() > 1 => {
                let e = runs.remove(i);
                if i > 0 {
                    runs[i - 1].end = e.end;
                } else {
                    runs[0].start = e.start;
                }
                coalesce(&mut runs);
            }
            _ => break,
        }
    }
    runs
}

pub fn detect_events(tr: &TrialRecord) -> Vec<Event> {
    segment(&step_labels(tr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::level::Placement;
    use crate::physics::simulate;
    use crate::physics::tests::floor_level;
    use ContactType::*;

    #[test]
    fn pure_free_fall_is_one_event() {
        let level = floor_level([400.0, 100.0, 0.0, 0.0], [400.0, 300.0]);
        let rec = simulate(&level, &Placement::empty()).unwrap();
        let ev = detect_events(&rec);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind, FreeFall);
        assert_eq!((ev[0].start, ev[0].end), (0, rec.last_step()));
        assert_eq!(ev[0].object, None);
    }

    #[test]
    fn drop_then_roll() {
        let level = floor_level([100.0, 400.0, 60.0, 0.0], [790.0, 20.0]);
        let rec = simulate(&level, &Placement::empty()).unwrap();
        let ev = detect_events(&rec);
        assert_eq!(ev[0].kind, FreeFall);
        assert!(ev.iter().any(|e| e.kind == BounceOffSegment));
        let last = ev.last().unwrap();
        assert_eq!(last.kind, RollOnSegment);
        assert_eq!(last.object, Some(BodyRef::Env(0)));
        // the ball ends up rolling along the floor
        let end = rec.trajectory[last.end];
        assert!((end.pos.y - 565.0).abs() < 1.0);
        assert!(end.vel.x >= 0.0 && end.vel.x < 60.0);
    }

    #[test]
    fn flicker_is_merged() {
        let floor = Some(BodyRef::Env(0));
        let mut labels = vec![(RollOnSegment, floor); 10];
        labels[4] = (FreeFall, None);
        labels[5] = (FreeFall, None);
        labels.extend([(FreeFall, None); 5]);
        let ev = segment(&labels);
        assert_eq!(ev.len(), 2);
        assert_eq!((ev[0].kind, ev[0].start, ev[0].end), (RollOnSegment, 0, 9));
        assert_eq!((ev[1].kind, ev[1].start, ev[1].end), (FreeFall, 10, 14));
    }

    #[test]
    fn single_step_bounce_survives() {
        let floor = Some(BodyRef::Env(0));
        let mut labels = vec![(FreeFall, None); 7];
        labels[3] = (BounceOffSegment, floor);
        let ev = segment(&labels);
        assert_eq!(ev.len(), 3);
        assert_eq!(ev[1].kind, BounceOffSegment);
        assert_eq!((ev[1].start, ev[1].end), (3, 3));
    }

    #[test]
    fn short_leading_run_joins_next() {
        let floor = Some(BodyRef::Env(0));
        let mut labels = vec![(RollOnSegment, floor); 8];
        labels[0] = (FreeFall, None);
        let ev = segment(&labels);
        assert_eq!(ev.len(), 1);
        assert_eq!((ev[0].start, ev[0].end), (0, 7));
    }
}
