use std::time::{Duration, Instant};

use monosim_core::pipeline::{Stage, StageObserver};

/// Wall-clock time spent in each pipeline stage, accumulated over repeats.
#[derive(Debug, Default)]
pub struct StageTimer {
    open: Option<(Stage, Instant)>,
    pub spent: Vec<(Stage, Duration)>,
}

impl StageTimer {
    pub fn total(&self, stage: Stage) -> Duration {
        self.spent.iter().filter(|(s, _)| *s == stage).map(|(_, d)| *d).sum()
    }
}

impl StageObserver for StageTimer {
    fn begin(&mut self, stage: Stage) {
        self.open = Some((stage, Instant::now()));
    }

    fn end(&mut self, stage: Stage) {
        if let Some((s, t)) = self.open.take() {
            if s == stage {
                self.spent.push((stage, t.elapsed()));
            }
        }
    }
}
