use std::io::Write;

use num_complex::Complex64;
use rand::Rng as _;

use super::DynamicsModel;
use crate::benchmarks::{System, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::eigenvalues;
use crate::rng;

/// Half-width multiplier applied to the reference trajectory's bounding box.
pub const BOX_MARGIN: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenSource {
    Learned,
    True,
}

impl EigenSource {
    pub fn name(self) -> &'static str {
        match self {
            EigenSource::Learned => "learned",
            EigenSource::True => "true",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumEntry {
    pub point: usize,
    pub source: EigenSource,
    pub eigenvalue: Complex64,
}

/// Eigenvalues of learned and true state Jacobians at sampled points.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpectrumReport {
    pub entries: Vec<SpectrumEntry>,
    /// Points dropped because an eigenvalue computation failed.
    pub skipped: Vec<(usize, String)>,
}

impl SpectrumReport {
    pub fn eigenvalues(&self, point: usize, source: EigenSource) -> Vec<Complex64> {
        self.entries
            .iter()
            .filter(|e| e.point == point && e.source == source)
            .map(|e| e.eigenvalue)
            .collect()
    }

    pub fn points(&self) -> Vec<usize> {
        let mut p: Vec<usize> = self.entries.iter().map(|e| e.point).collect();
        p.dedup();
        p
    }

    /// Mean eigenvalue modulus over all points for `source`.
    pub fn mean_modulus(&self, source: EigenSource) -> f64 {
        let mods: Vec<f64> = self
            .entries
            .iter()
            .filter(|e| e.source == source)
            .map(|e| e.eigenvalue.norm())
            .collect();
        mods.iter().sum::<f64>() / mods.len() as f64
    }

    /// Mean over learned eigenvalues of the distance to the nearest true
    /// eigenvalue at the same point.
    pub fn mean_distance_to_truth(&self) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for p in self.points() {
            let truth = self.eigenvalues(p, EigenSource::True);
            for l in self.eigenvalues(p, EigenSource::Learned) {
                total += truth
                    .iter()
                    .map(|t| (l - t).norm())
                    .fold(f64::INFINITY, f64::min);
                count += 1;
            }
        }
        total / count as f64
    }

    /// CSV with header `point,source,re,im`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["point", "source", "re", "im"])?;
        for e in &self.entries {
            w.write_record([
                e.point.to_string(),
                e.source.name().to_string(),
                format!("{:?}", e.eigenvalue.re),
                format!("{:?}", e.eigenvalue.im),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn sample_in_box(rows: &[Vec<f64>], r: &mut rng::Rng) -> Vec<f64> {
    (0..rows[0].len())
        .map(|j| {
            let lo = rows.iter().map(|v| v[j]).fold(f64::INFINITY, f64::min);
            let hi = rows.iter().map(|v| v[j]).fold(f64::NEG_INFINITY, f64::max);
            let center = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo) * BOX_MARGIN;
            center + half * (2.0 * r.random::<f64>() - 1.0)
        })
        .collect()
}

/// Samples `num_points` state/input pairs uniformly in the enlarged bounding
/// box of `reference` and records the eigenvalues of the state block of the
/// model Jacobian and of the true Jacobian at each.
pub fn spectrum_report(
    model: &impl DynamicsModel,
    system: &System,
    reference: &Trajectory,
    num_points: usize,
    seed: u64,
) -> Result<SpectrumReport> {
    reference.validate()?;
    if num_points == 0 {
        return Err(Error::Parameter(
            "spectrum report needs at least one point".into(),
        ));
    }
    if model.state_dim() != system.state_dim() || reference.state_dim() != system.state_dim() {
        return Err(Error::Dimension(
            "model, system and reference disagree on state size".into(),
        ));
    }
    let mut r = rng::seeded(seed);
    let mut report = SpectrumReport::default();
    for point in 0..num_points {
        let x = sample_in_box(&reference.states, &mut r);
        let u = sample_in_box(&reference.inputs, &mut r);
        let learned = eigenvalues(&model.jacobian(&x, &u)?.state_block());
        let truth = eigenvalues(&system.true_jacobian(&x, &u)?.state_block());
        match (learned, truth) {
            (Ok(l), Ok(t)) => {
                for (source, vals) in [(EigenSource::Learned, l), (EigenSource::True, t)] {
                    report
                        .entries
                        .extend(vals.into_iter().map(|eigenvalue| SpectrumEntry {
                            point,
                            source,
                            eigenvalue,
                        }));
                }
            }
            (Err(e), _) | (_, Err(e)) => report.skipped.push((point, e.to_string())),
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::{lowpass_random_input, random_linear_system};
    use crate::neural::{Activation, Mlp, ObjectiveForm};

    fn setup() -> (System, Trajectory) {
        let sys = System::Linear(random_linear_system(4, 1, 0.1, 6).unwrap());
        let u = lowpass_random_input(60, 1, 0.5, 1.0, 2).unwrap();
        let traj = sys.rollout(&[1.0, 0.5, 0.0, -1.0], &u, 0.0, 0).unwrap();
        (sys, traj)
    }

    #[test]
    fn exact_model_matches_truth() {
        let (sys, traj) = setup();
        let report = spectrum_report(&sys, &sys, &traj, 5, 1).unwrap();
        for p in 0..5 {
            let mut l = report.eigenvalues(p, EigenSource::Learned);
            let mut t = report.eigenvalues(p, EigenSource::True);
            assert_eq!(l.len(), 4);
            let key = |c: &Complex64| (c.re, c.im);
            l.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
            t.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
            for (a, b) in l.iter().zip(&t) {
                assert!((a - b).norm() < 1e-6);
            }
        }
        assert!(report.mean_distance_to_truth() < 1e-6);
    }

    #[test]
    fn true_spectrum_lies_on_the_law_circle() {
        let (sys, traj) = setup();
        let report = spectrum_report(&sys, &sys, &traj, 3, 1).unwrap();
        let radius = (-0.01f64).exp();
        for e in report
            .entries
            .iter()
            .filter(|e| e.source == EigenSource::True)
        {
            assert!((e.eigenvalue.norm() - radius).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_g_model_has_unit_eigenvalues() {
        let (sys, traj) = setup();
        let model = Mlp::zeros(4, 1, &[6], Activation::Tanh, ObjectiveForm::G).unwrap();
        let report = spectrum_report(&model, &sys, &traj, 4, 3).unwrap();
        for e in report
            .entries
            .iter()
            .filter(|e| e.source == EigenSource::Learned)
        {
            assert_eq!(e.eigenvalue, Complex64::new(1.0, 0.0));
        }
        assert_eq!(report.mean_modulus(EigenSource::Learned), 1.0);
    }

    #[test]
    fn csv_has_one_row_per_eigenvalue() {
        let (sys, traj) = setup();
        let report = spectrum_report(&sys, &sys, &traj, 2, 1).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "point,source,re,im");
        assert_eq!(lines.len(), 1 + 2 * 2 * 4);
    }
}
