use std::cmp::Ordering;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hexfloat;
use crate::rng::{substream, Domain};
use crate::scalar::{Precision, Scalar};

const FORMAT: &str = "qtewma-partition";
const VERSION: u32 = 1;

/// Which tail of the surviving data a cut isolates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `x[dim] <= threshold`
    Lower,
    /// `x[dim] >= threshold`
    Upper,
}

/// One axis-aligned half-space test. Cut `j` carves bin `j` out of whatever
/// the earlier cuts left over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cut<F> {
    pub dim: usize,
    pub direction: Direction,
    pub threshold: F,
}

impl<F: Scalar> Cut<F> {
    #[inline]
    pub fn contains(&self, x: &[F]) -> bool {
        match self.direction {
            Direction::Lower => x[self.dim] <= self.threshold,
            Direction::Upper => x[self.dim] >= self.threshold,
        }
    }
}

/// A fitted QuantTree histogram. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantTreePartition<F> {
    cuts: Vec<Cut<F>>,
    bin_counts: Vec<usize>,
    target_probs: Vec<f64>,
    pi_tilde: Vec<F>,
    n_train: usize,
    dim: usize,
    seed: u64,
}

/// Checks that `target_probs` is a usable probability vector with `K >= 2`.
pub fn validate_target_probs(target_probs: &[f64]) -> Result<()> {
    if target_probs.len() < 2 {
        return Err(Error::Config(format!(
            "need at least 2 bins, got {}",
            target_probs.len()
        )));
    }
    if target_probs.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(Error::Config("target probabilities must be positive".into()));
    }
    let total: f64 = target_probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "target probabilities sum to {total}, not 1"
        )));
    }
    Ok(())
}

/// Training points per bin: largest-remainder rounding of `πⱼN`. Ties in the
/// fractional part go to the later bin, so the last bin absorbs any residue
/// first.
pub fn allocate_counts(target_probs: &[f64], n: usize) -> Vec<usize> {
    let exact: Vec<f64> = target_probs.iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut residue = n.saturating_sub(assigned);
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap_or(Ordering::Equal).then(b.cmp(&a))
    });
    for &j in order.iter().cycle() {
        if residue == 0 {
            break;
        }
        counts[j] += 1;
        residue -= 1;
    }
    counts
}

/// Expected bin probabilities under the Dirichlet law of the bin masses:
/// `πⱼN/(N+1)` for `j < K`, and the last bin takes the remainder, which equals
/// `(π_KN + 1)/(N+1)`.
pub fn pi_tilde(target_probs: &[f64], n: usize) -> Vec<f64> {
    let k = target_probs.len();
    let denom = n as f64 + 1.0;
    let mut out: Vec<f64> = target_probs[..k - 1]
        .iter()
        .map(|p| p * n as f64 / denom)
        .collect();
    let head: f64 = out.iter().sum();
    out.push(1.0 - head);
    out
}

impl<F: Scalar> QuantTreePartition<F> {
    /// Fit a partition on `train` (N rows of dimension d).
    ///
    /// Cut `j` picks a dimension uniformly at random and a tail (lower or
    /// upper) with probability ½, sorts the surviving points along that
    /// dimension and places the threshold on the order statistic that isolates
    /// exactly `Lⱼ` points, the boundary point belonging to the bin.
    pub fn build<R: AsRef<[F]>>(train: &[R], target_probs: &[f64], seed: u64) -> Result<Self> {
        validate_target_probs(target_probs)?;
        let k = target_probs.len();
        let n = train.len();
        if n < k {
            return Err(Error::InvalidTraining(format!(
                "{n} training points for {k} bins"
            )));
        }
        let dim = train[0].as_ref().len();
        if dim == 0 {
            return Err(Error::InvalidTraining("zero-dimensional data".into()));
        }
        for row in train {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::Shape {
                    expected: dim,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidTraining("non-finite coordinate".into()));
            }
        }
        let bin_counts = allocate_counts(target_probs, n);
        if let Some(j) = bin_counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidTraining(format!(
                "bin {j} receives no training points (N={n} too small for its target probability)"
            )));
        }

        let mut rng = substream(seed, Domain::Partition, 0);
        let mut alive: Vec<usize> = (0..n).collect();
        let mut cuts = Vec::with_capacity(k - 1);
        for &lj in &bin_counts[..k - 1] {
            let d = rng.random_range(0..dim);
            let direction = if rng.random::<bool>() {
                Direction::Upper
            } else {
                Direction::Lower
            };
            let coord = |i: usize| train[i].as_ref()[d];
            alive.sort_by(|&a, &b| {
                coord(a)
                    .partial_cmp(&coord(b))
                    .unwrap_or(Ordering::Equal)
                    .then(a.cmp(&b))
            });
            let m = alive.len();
            let threshold = match direction {
                Direction::Lower => {
                    let thr = coord(alive[lj - 1]);
                    if coord(alive[lj]) == thr {
                        return Err(Error::DegenerateCut { dim: d, value: thr.widen() });
                    }
                    alive.drain(..lj);
                    thr
                }
                Direction::Upper => {
                    let thr = coord(alive[m - lj]);
                    if coord(alive[m - lj - 1]) == thr {
                        return Err(Error::DegenerateCut { dim: d, value: thr.widen() });
                    }
                    alive.truncate(m - lj);
                    thr
                }
            };
            cuts.push(Cut {
                dim: d,
                direction,
                threshold,
            });
        }
        debug_assert_eq!(alive.len(), bin_counts[k - 1]);

        Ok(QuantTreePartition {
            cuts,
            bin_counts,
            target_probs: target_probs.to_vec(),
            pi_tilde: pi_tilde(target_probs, n).into_iter().map(F::of).collect(),
            n_train: n,
            dim,
            seed,
        })
    }

    /// Bin index of `x`: the first cut that contains it, else the last bin.
    #[inline]
    pub fn lookup(&self, x: &[F]) -> Result<usize> {
        if x.len() != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(self.lookup_counted(x).0)
    }

    /// Lookup that also reports the number of scalar comparisons made.
    pub fn lookup_counted(&self, x: &[F]) -> (usize, usize) {
        for (j, cut) in self.cuts.iter().enumerate() {
            if cut.contains(x) {
                return (j, j + 1);
            }
        }
        (self.cuts.len(), self.cuts.len())
    }

    pub fn k(&self) -> usize {
        self.target_probs.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn cuts(&self) -> &[Cut<F>] {
        &self.cuts
    }

    pub fn bin_counts(&self) -> &[usize] {
        &self.bin_counts
    }

    pub fn target_probs(&self) -> &[f64] {
        &self.target_probs
    }

    pub fn pi_tilde(&self) -> &[F] {
        &self.pi_tilde
    }

    /// Each bin as an axis-aligned box `[(lo, hi); d]`, possibly unbounded.
    /// Boundary membership is ignored; the boxes are meant for mass
    /// computations under continuous laws.
    pub fn bin_boxes(&self) -> Vec<Vec<(f64, f64)>> {
        let mut remaining = vec![(f64::NEG_INFINITY, f64::INFINITY); self.dim];
        let mut boxes = Vec::with_capacity(self.k());
        for cut in &self.cuts {
            let thr = cut.threshold.widen();
            let mut bin = remaining.clone();
            let (lo, hi) = remaining[cut.dim];
            match cut.direction {
                Direction::Lower => {
                    bin[cut.dim] = (lo, thr.min(hi));
                    remaining[cut.dim] = (thr.max(lo), hi);
                }
                Direction::Upper => {
                    bin[cut.dim] = (thr.max(lo), hi);
                    remaining[cut.dim] = (lo, thr.min(hi));
                }
            }
            boxes.push(bin);
        }
        boxes.push(remaining);
        boxes
    }

    /// True bin masses when the data are uniform on the box `[low, high]`.
    pub fn uniform_bin_masses(&self, low: &[f64], high: &[f64]) -> Vec<f64> {
        self.bin_boxes()
            .iter()
            .map(|b| {
                b.iter()
                    .zip(low.iter().zip(high))
                    .map(|(&(lo, hi), (&l, &h))| {
                        let width = hi.min(h) - lo.max(l);
                        (width / (h - l)).max(0.0)
                    })
                    .product()
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        let file = PartitionFile {
            format: FORMAT.into(),
            version: VERSION,
            precision: Precision::of::<F>(),
            dim: self.dim,
            n_train: self.n_train,
            seed: self.seed,
            target_probs: self.target_probs.clone(),
            pi_tilde: self.pi_tilde.iter().map(|v| v.widen()).collect(),
            bin_counts: self.bin_counts.clone(),
            cuts: self
                .cuts
                .iter()
                .map(|c| CutRecord {
                    dim: c.dim,
                    direction: c.direction,
                    threshold: c.threshold.widen(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("partition serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PartitionFile =
            serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if file.format != FORMAT || file.version != VERSION {
            return Err(Error::Format(format!(
                "expected {FORMAT} v{VERSION}, found {} v{}",
                file.format, file.version
            )));
        }
        validate_target_probs(&file.target_probs)?;
        let k = file.target_probs.len();
        if file.cuts.len() + 1 != k || file.pi_tilde.len() != k || file.bin_counts.len() != k {
            return Err(Error::Format("inconsistent bin count".into()));
        }
        if file.cuts.iter().any(|c| c.dim >= file.dim) {
            return Err(Error::Format("cut dimension out of range".into()));
        }
        Ok(QuantTreePartition {
            cuts: file
                .cuts
                .iter()
                .map(|c| Cut {
                    dim: c.dim,
                    direction: c.direction,
                    threshold: F::of(c.threshold),
                })
                .collect(),
            bin_counts: file.bin_counts,
            target_probs: file.target_probs,
            pi_tilde: file.pi_tilde.into_iter().map(F::of).collect(),
            n_train: file.n_train,
            dim: file.dim,
            seed: file.seed,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartitionFile {
    format: String,
    version: u32,
    precision: Precision,
    dim: usize,
    n_train: usize,
    seed: u64,
    #[serde(with = "hexfloat::serde_vec")]
    target_probs: Vec<f64>,
    #[serde(with = "hexfloat::serde_vec")]
    pi_tilde: Vec<f64>,
    bin_counts: Vec<usize>,
    cuts: Vec<CutRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CutRecord {
    dim: usize,
    direction: Direction,
    #[serde(with = "hexfloat::serde_f64")]
    threshold: f64,
}
