use std::io::Write;

use serde::{Deserialize, Serialize};

use super::events::RewardEvent;
use crate::environment::TaskId;

/// One line of the reward audit log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: u64,
    pub task: TaskId,
    pub events: Vec<RewardEvent>,
    pub reward: f64,
}

pub struct TraceWriter<W: Write> {
    out: W,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn write(&mut self, record: &TraceRecord) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rewards::EventTag;

    #[test]
    fn one_line_per_record() {
        let mut w = TraceWriter::new(Vec::new());
        for step in 0..3 {
            w.write(&TraceRecord {
                step,
                task: TaskId::Task1,
                events: vec![RewardEvent::new(EventTag::DirectionApproach, 0.25)],
                reward: 0.025,
            })
            .unwrap();
        }
        let text = String::from_utf8(w.into_inner()).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        let back: TraceRecord = serde_json::from_str(lines[2]).unwrap();
        assert_eq!(back.step, 2);
    }
}
