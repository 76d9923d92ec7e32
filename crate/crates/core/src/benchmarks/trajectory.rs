use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::System;
use crate::error::{Error, Result};

/// Recorded states and inputs at a fixed sample time. The successor of
/// `states[t]` is `states[t + 1]`, so a trajectory of length `T` holds `T - 1`
/// transitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub dt: f64,
}

/// One `(x, u, x⁺)` transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub next: Vec<f64>,
}

impl Trajectory {
    pub fn new(states: Vec<Vec<f64>>, inputs: Vec<Vec<f64>>, dt: f64) -> Result<Self> {
        let traj = Self { states, inputs, dt };
        traj.validate()?;
        Ok(traj)
    }

    pub fn validate(&self) -> Result<()> {
        if self.states.len() != self.inputs.len() {
            return Err(Error::Dimension(format!(
                "{} states but {} inputs",
                self.states.len(),
                self.inputs.len()
            )));
        }
        if self.states.len() < 2 {
            return Err(Error::Dimension(
                "trajectory needs at least 2 samples".into(),
            ));
        }
        let n = self.states[0].len();
        let m = self.inputs[0].len();
        if self.states.iter().any(|x| x.len() != n) || self.inputs.iter().any(|u| u.len() != m) {
            return Err(Error::Dimension("ragged trajectory".into()));
        }
        if self
            .states
            .iter()
            .chain(&self.inputs)
            .flatten()
            .any(|v| !v.is_finite())
        {
            return Err(Error::Domain(
                "trajectory contains non-finite values".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn num_transitions(&self) -> usize {
        self.len().saturating_sub(1)
    }

    pub fn transitions(&self) -> impl Iterator<Item = Transition> + '_ {
        (0..self.num_transitions()).map(move |t| Transition {
            x: self.states[t].clone(),
            u: self.inputs[t].clone(),
            next: self.states[t + 1].clone(),
        })
    }

    /// State increments `x_{t+1} - x_t`.
    pub fn deltas(&self) -> Vec<Vec<f64>> {
        self.states
            .windows(2)
            .map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect())
            .collect()
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(&mut out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.state_dim()).map(|i| format!("x{i}")));
        header.extend((1..=self.input_dim()).map(|i| format!("u{i}")));
        w.write_record(&header)?;
        for (t, (x, u)) in self.states.iter().zip(&self.inputs).enumerate() {
            let mut rec = vec![t.to_string()];
            rec.extend(x.iter().chain(u).map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(input: impl Read, dt: f64) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        let n = headers.iter().filter(|h| h.starts_with('x')).count();
        let m = headers.iter().filter(|h| h.starts_with('u')).count();
        if headers.len() != 1 + n + m || headers.get(0) != Some("t") {
            return Err(Error::Parameter(format!(
                "unexpected trajectory header {headers:?}"
            )));
        }
        let mut states = Vec::new();
        let mut inputs = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let vals = rec
                .iter()
                .skip(1)
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parameter(format!("bad number {s:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            states.push(vals[..n].to_vec());
            inputs.push(vals[n..].to_vec());
        }
        Self::new(states, inputs, dt)
    }

    /// Writes `<path>` as CSV and `<path>.json` as the metadata sidecar.
    pub fn save(&self, path: &Path, meta: &TrajectoryMeta) -> Result<()> {
        self.write_csv(File::create(path)?)?;
        let f = File::create(sidecar_path(path))?;
        serde_json::to_writer_pretty(f, meta)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, TrajectoryMeta)> {
        let meta: TrajectoryMeta = serde_json::from_reader(File::open(sidecar_path(path))?)?;
        let traj = Self::read_csv(File::open(path)?, meta.dt)?;
        Ok((traj, meta))
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// JSON sidecar accompanying a trajectory CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub dt: f64,
    pub state_dim: usize,
    pub input_dim: usize,
    pub system: Option<System>,
    pub seed: Option<u64>,
    pub noise_scale: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trajectory {
        Trajectory::new(
            vec![vec![0.0, 1.0], vec![0.5, -0.25], vec![1e-17, 3.0]],
            vec![vec![1.0], vec![0.1], vec![-2.0]],
            0.1,
        )
        .unwrap()
    }

    #[test]
    fn csv_header_and_roundtrip() {
        let traj = sample();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x1,x2,u1\n"));
        let back = Trajectory::read_csv(buf.as_slice(), 0.1).unwrap();
        assert_eq!(back, traj);
    }

    #[test]
    fn transitions_and_deltas() {
        let traj = sample();
        assert_eq!(traj.num_transitions(), 2);
        let tr: Vec<_> = traj.transitions().collect();
        assert_eq!(tr[1].x, vec![0.5, -0.25]);
        assert_eq!(tr[1].next, vec![1e-17, 3.0]);
        assert_eq!(traj.deltas()[0], vec![0.5, -1.25]);
    }

    #[test]
    fn invalid_trajectories() {
        assert!(Trajectory::new(vec![vec![0.0]], vec![vec![0.0]], 0.1).is_err());
        assert!(Trajectory::new(vec![vec![0.0]; 3], vec![vec![0.0]; 2], 0.1).is_err());
        assert!(Trajectory::new(vec![vec![f64::NAN]; 2], vec![vec![0.0]; 2], 0.1).is_err());
    }

    #[test]
    fn save_and_load_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        let traj = sample();
        let meta = TrajectoryMeta {
            dt: 0.1,
            state_dim: 2,
            input_dim: 1,
            system: None,
            seed: Some(3),
            noise_scale: 0.0,
        };
        traj.save(&path, &meta).unwrap();
        assert!(dir.path().join("traj.csv.json").exists());
        let (back, back_meta) = Trajectory::load(&path).unwrap();
        assert_eq!(back, traj);
        assert_eq!(back_meta, meta);
    }
}
