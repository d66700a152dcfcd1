use std::io::Write;

use super::{RewardComponents, StepResult};
use crate::error::Result;

/// `step,obs_0..,action_0..,reward_raw,component_*,done,cause`
pub fn trace_header(obs_dim: usize, act_dim: usize) -> String {
    let mut cols = vec!["step".to_string()];
    cols.extend((0..obs_dim).map(|i| format!("obs_{i}")));
    cols.extend((0..act_dim).map(|i| format!("action_{i}")));
    cols.push("reward_raw".into());
    cols.extend(RewardComponents::NAMES.iter().map(|n| format!("component_{n}")));
    cols.push("done".into());
    cols.push("cause".into());
    cols.join(",")
}

/// One row; `obs` is the observation the action was taken from.
pub fn write_trace_row<W: Write>(out: &mut W, step: usize, obs: &[f64], action: &[f64], r: &StepResult) -> Result<()> {
    let mut row = vec![step.to_string()];
    row.extend(obs.iter().chain(action).map(f64::to_string));
    row.push(r.reward_raw.to_string());
    row.extend(r.components.values().iter().map(f64::to_string));
    row.push(u8::from(r.done).to_string());
    row.push(r.cause.to_string());
    writeln!(out, "{}", row.join(","))?;
    Ok(())
}

/// Streams an episode trace as CSV, writing the header on creation.
pub struct TraceWriter<W: Write> {
    out: W,
    step: usize,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, obs_dim: usize, act_dim: usize) -> Result<Self> {
        writeln!(out, "{}", trace_header(obs_dim, act_dim))?;
        Ok(Self { out, step: 0 })
    }

    pub fn record(&mut self, obs: &[f64], action: &[f64], r: &StepResult) -> Result<()> {
        write_trace_row(&mut self.out, self.step, obs, action, r)?;
        self.step += 1;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Environment, StopGo1D, StopGoConfig};

    #[test]
    fn header_and_rows_align() {
        assert_eq!(
            trace_header(1, 1),
            "step,obs_0,action_0,reward_raw,component_base,component_time_penalty,component_bomb_penalty,\
             component_shaping,component_stuck,component_fall,done,cause"
        );
        let mut env = StopGo1D::new(StopGoConfig::default()).unwrap();
        let obs = env.reset(0).unwrap();
        let r = env.step(&[0.5]).unwrap();
        let mut w = TraceWriter::new(Vec::new(), 4, 1).unwrap();
        w.record(&obs, &[0.5], &r).unwrap();
        let text = String::from_utf8(w.into_inner()).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
        assert!(lines[1].ends_with(",0,running"));
    }
}
