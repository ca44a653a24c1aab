use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Domain, Rng};

use super::law::{Law, Resolved};
use super::shift::gaussian_change_mean_shift;

/// What happens at the change point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PostChange {
    /// Switch to another law.
    Law { phi1: Law },
    /// Gaussian mean shift with symmetric KL divergence `skl`.
    MeanShift { skl: f64 },
    /// Add `scale · z`, `z` standard normal, drawn once per stream.
    /// `scale` defaults to the total variance of `φ0`.
    RandomShift {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scale: Option<f64>,
    },
}

/// A change at sample `tau`: `x_t ∼ φ0` for `t < tau`, `φ1` after.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Change {
    pub tau: u64,
    #[serde(flatten)]
    pub after: PostChange,
}

/// A stream description: pre-change law, optional change, length and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSpec {
    pub d: usize,
    pub phi0: Law,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub change: Option<Change>,
    pub length: usize,
    #[serde(default)]
    pub seed: u64,
}

impl StreamSpec {
    pub fn stationary(phi0: Law, d: usize, length: usize, seed: u64) -> Self {
        StreamSpec {
            d,
            phi0,
            change: None,
            length,
            seed,
        }
    }

    pub fn with_change(mut self, tau: u64, after: PostChange) -> Self {
        self.change = Some(Change { tau, after });
        self
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: StreamSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("stream spec serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("dimension must be at least 1".into()));
        }
        if let Some(change) = &self.change {
            if change.tau < 1 || change.tau as usize >= self.length.max(1) {
                return Err(Error::Config(format!(
                    "change point {} must lie in [1, {})",
                    change.tau, self.length
                )));
            }
            match &change.after {
                PostChange::MeanShift { skl } if !(*skl > 0.0 && skl.is_finite()) => {
                    return Err(Error::Config(format!("target sKL must be positive, got {skl}")));
                }
                PostChange::MeanShift { .. } if !matches!(self.phi0, Law::Gaussian { .. }) => {
                    return Err(Error::Config("mean_shift requires a gaussian phi0".into()));
                }
                PostChange::RandomShift { scale: Some(s) } if !(*s >= 0.0 && s.is_finite()) => {
                    return Err(Error::Config(format!("shift scale must be non-negative, got {s}")));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Resolve laws once (factorizations, CSV loading) for many realizations.
    pub fn prepare(&self) -> Result<PreparedSpec> {
        self.validate()?;
        let phi0 = Arc::new(self.phi0.resolve(self.d)?);
        let after = match &self.change {
            None => None,
            Some(c) => Some((
                c.tau,
                match &c.after {
                    PostChange::Law { phi1 } => After::Law(Arc::new(phi1.resolve(self.d)?)),
                    PostChange::MeanShift { skl } => After::MeanShift(*skl),
                    PostChange::RandomShift { scale } => {
                        After::RandomShift(scale.unwrap_or_else(|| phi0.total_variance()))
                    }
                },
            )),
        };
        Ok(PreparedSpec {
            d: self.d,
            length: self.length,
            seed: self.seed,
            phi0,
            after,
        })
    }

    /// A training set of `n_train` samples from `φ0` and the stream that
    /// goes with it.
    pub fn realize(&self, n_train: usize) -> Result<Scenario> {
        self.prepare()?.realize(self.seed, n_train)
    }
}

#[derive(Debug, Clone)]
enum After {
    Law(Arc<Resolved>),
    MeanShift(f64),
    RandomShift(f64),
}

/// A [`StreamSpec`] with its laws resolved; cheap to clone.
#[derive(Debug, Clone)]
pub struct PreparedSpec {
    d: usize,
    length: usize,
    seed: u64,
    phi0: Arc<Resolved>,
    after: Option<(u64, After)>,
}

/// One training set and one stream drawn from the same `φ0`.
#[derive(Debug)]
pub struct Scenario {
    pub training: Vec<Vec<f64>>,
    pub stream: StreamGenerator,
}

impl PreparedSpec {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tau(&self) -> Option<u64> {
        self.after.as_ref().map(|(tau, _)| *tau)
    }

    /// Draw a realization under `seed`; the spec's own seed is ignored, so
    /// one prepared spec serves many independent runs.
    ///
    /// CSV-backed laws are sampled without replacement: training rows and
    /// stream rows never coincide.
    pub fn realize(&self, seed: u64, n_train: usize) -> Result<Scenario> {
        let mut rows0 = None;
        let training = match &*self.phi0 {
            Resolved::Rows(data) => {
                let needed = n_train + self.length;
                if needed > data.len() {
                    return Err(Error::Exhausted {
                        needed,
                        available: data.len(),
                    });
                }
                let mut order: Vec<usize> = (0..data.len()).collect();
                order.shuffle(&mut substream(seed, Domain::Split, 0));
                let training = order[..n_train].iter().map(|&i| data.row(i).to_vec()).collect();
                rows0 = Some(RowCursor { order, next: n_train });
                training
            }
            law => {
                let mut rng = substream(seed, Domain::Training, 0);
                (0..n_train)
                    .map(|_| {
                        let mut x = vec![0.0; self.d];
                        law.fill(&mut rng, &mut x);
                        x
                    })
                    .collect()
            }
        };

        let mut shift_rng = substream(seed, Domain::Stream, 1);
        let (tau, after) = match &self.after {
            None => (u64::MAX, GenAfter::Same),
            Some((tau, After::MeanShift(skl))) => {
                let Resolved::Gaussian { mean, cov, .. } = &*self.phi0 else {
                    unreachable!("validated: mean shift needs a gaussian phi0")
                };
                let shifted = gaussian_change_mean_shift(mean.as_slice(), cov, *skl, &mut shift_rng)?;
                let v = shifted.iter().zip(mean.iter()).map(|(a, b)| a - b).collect();
                (*tau, GenAfter::Shift(v))
            }
            Some((tau, After::RandomShift(scale))) => {
                let v = (0..self.d)
                    .map(|_| scale * shift_rng.sample::<f64, _>(StandardNormal))
                    .collect();
                (*tau, GenAfter::Shift(v))
            }
            Some((tau, After::Law(law))) => {
                let cursor = match &**law {
                    Resolved::Rows(data) => {
                        let needed = self.length - (*tau as usize - 1);
                        if needed > data.len() {
                            return Err(Error::Exhausted {
                                needed,
                                available: data.len(),
                            });
                        }
                        let mut order: Vec<usize> = (0..data.len()).collect();
                        order.shuffle(&mut substream(seed, Domain::Split, 1));
                        Some(RowCursor { order, next: 0 })
                    }
                    _ => None,
                };
                (*tau, GenAfter::Law(law.clone(), cursor))
            }
        };

        Ok(Scenario {
            training,
            stream: StreamGenerator {
                d: self.d,
                length: self.length,
                t: 0,
                tau,
                rng: substream(seed, Domain::Stream, 0),
                phi0: self.phi0.clone(),
                rows0,
                after,
            },
        })
    }
}

#[derive(Debug)]
struct RowCursor {
    order: Vec<usize>,
    next: usize,
}

#[derive(Debug)]
enum GenAfter {
    Same,
    Shift(Vec<f64>),
    Law(Arc<Resolved>, Option<RowCursor>),
}

fn draw(law: &Resolved, rows: &mut Option<RowCursor>, rng: &mut Rng, out: &mut [f64]) {
    match (law, rows) {
        (Resolved::Rows(data), Some(cursor)) => {
            out.copy_from_slice(data.row(cursor.order[cursor.next]));
            cursor.next += 1;
        }
        (law, _) => law.fill(rng, out),
    }
}

/// Samples `x_1..x_L` of one stream.
#[derive(Debug)]
pub struct StreamGenerator {
    d: usize,
    length: usize,
    t: usize,
    tau: u64,
    rng: Rng,
    phi0: Arc<Resolved>,
    rows0: Option<RowCursor>,
    after: GenAfter,
}

impl StreamGenerator {
    pub fn dim(&self) -> usize {
        self.d
    }

    /// Samples produced so far.
    pub fn position(&self) -> usize {
        self.t
    }

    /// Write the next sample into `out`; `false` once the stream is over.
    pub fn fill_next(&mut self, out: &mut [f64]) -> bool {
        if self.t >= self.length {
            return false;
        }
        self.t += 1;
        if (self.t as u64) < self.tau {
            draw(&self.phi0, &mut self.rows0, &mut self.rng, out);
            return true;
        }
        match &mut self.after {
            GenAfter::Same => draw(&self.phi0, &mut self.rows0, &mut self.rng, out),
            GenAfter::Shift(v) => {
                draw(&self.phi0, &mut self.rows0, &mut self.rng, out);
                for (o, s) in out.iter_mut().zip(v.iter()) {
                    *o += s;
                }
            }
            GenAfter::Law(law, rows) => draw(law, rows, &mut self.rng, out),
        }
        true
    }
}

impl Iterator for StreamGenerator {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        let mut x = vec![0.0; self.d];
        self.fill_next(&mut x).then_some(x)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.length - self.t;
        (left, Some(left))
    }
}

impl ExactSizeIterator for StreamGenerator {}

/// The stream of `spec` under its own seed, without a training set.
pub fn generate_stream(spec: &StreamSpec) -> Result<StreamGenerator> {
    Ok(spec.realize(0)?.stream)
}
