use std::io::Write;

use serde::{Deserialize, Serialize};

/// A thinning candidate. `state` is the pre-jump state the acceptance test
/// used, so `accepted == (u < γ(t, mark, state))` can be replayed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    /// 1-based layer number.
    pub layer: usize,
    pub mark: Vec<f64>,
    /// Thinning uniform on `[0, cap]` in rate units.
    pub u: f64,
    pub accepted: bool,
    pub state: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub dim_state: usize,
    pub dim_mark: usize,
    pub times: Vec<f64>,
    /// Row-major, `dim_state` entries per time.
    pub states: Vec<f64>,
    pub events: Vec<JumpEvent>,
    pub seed: u64,
    pub stream: u64,
}

impl PathRecord {
    pub fn new(dim_state: usize, dim_mark: usize, seed: u64, stream: u64) -> Self {
        PathRecord {
            dim_state,
            dim_mark,
            times: Vec::new(),
            states: Vec::new(),
            events: Vec::new(),
            seed,
            stream,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim_state..(i + 1) * self.dim_state]
    }

    pub fn terminal(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn accepted(&self) -> impl Iterator<Item = &JumpEvent> {
        self.events.iter().filter(|e| e.accepted)
    }

    pub fn times_increasing(&self) -> bool {
        self.times.windows(2).all(|w| w[0] < w[1])
    }

    pub(crate) fn push_state(&mut self, t: f64, x: &[f64]) {
        if self.times.last() == Some(&t) {
            let n = self.len() - 1;
            self.states[n * self.dim_state..].copy_from_slice(x);
            return;
        }
        self.times.push(t);
        self.states.extend_from_slice(x);
    }

    /// CSV with columns `t,x_1..x_d,event_layer,z_1..z_m,u,accepted`. Grid
    /// rows leave the event fields empty; event rows carry the pre-jump state.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim_state).map(|i| format!("x_{i}")));
        header.push("event_layer".into());
        header.extend((1..=self.dim_mark).map(|i| format!("z_{i}")));
        header.push("u".into());
        header.push("accepted".into());
        out.write_record(&header)?;
        let blank = self.dim_mark + 3;
        let mut ev = self.events.iter().peekable();
        for i in 0..self.len() {
            let t = self.times[i];
            while let Some(e) = ev.next_if(|e| e.time < t) {
                write_event(&mut out, e)?;
            }
            let mut row: Vec<String> = vec![t.to_string()];
            row.extend(self.state(i).iter().map(|v| v.to_string()));
            row.extend(std::iter::repeat_n(String::new(), blank));
            out.write_record(&row)?;
        }
        for e in ev {
            write_event(&mut out, e)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn write_event<W: Write>(out: &mut csv::Writer<W>, e: &JumpEvent) -> csv::Result<()> {
    let mut row: Vec<String> = vec![e.time.to_string()];
    row.extend(e.state.iter().map(|v| v.to_string()));
    row.push(e.layer.to_string());
    row.extend(e.mark.iter().map(|v| v.to_string()));
    row.push(e.u.to_string());
    row.push(if e.accepted { "1" } else { "0" }.into());
    out.write_record(&row)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_interleaves_events() {
        let mut p = PathRecord::new(1, 1, 0, 0);
        p.push_state(0.0, &[1.0]);
        p.push_state(1.0, &[2.0]);
        p.events.push(JumpEvent {
            time: 0.5,
            layer: 2,
            mark: vec![0.25],
            u: 0.125,
            accepted: true,
            state: vec![1.5],
        });
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "t,x_1,event_layer,z_1,u,accepted\n0,1,,,,\n0.5,1.5,2,0.25,0.125,1\n1,2,,,,\n"
        );
    }
}
