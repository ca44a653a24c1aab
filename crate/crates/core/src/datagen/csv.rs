use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{substream, Domain};

/// Options for [`ingest_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct IngestOptions {
    /// Rescale every column to zero mean and unit variance.
    pub standardize: bool,
    /// Gaussian jitter scale. `None` uses `1e-6` times each column's
    /// standard deviation; `Some(0.0)` disables jitter.
    pub jitter_sigma: Option<f64>,
    pub seed: u64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            standardize: true,
            jitter_sigma: None,
            seed: 0,
        }
    }
}

/// A rectangular numeric dataset held row-major in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    values: Vec<f64>,
    header: Option<Vec<String>>,
}

impl Dataset {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::Shape { expected: dim, got: r.len() });
            }
            values.extend_from_slice(r);
        }
        Ok(Dataset { dim, values, header: None })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.values.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn header(&self) -> Option<&[String]> {
        self.header.as_deref()
    }

    fn column_moments(&self, c: usize) -> (f64, f64) {
        let n = self.len() as f64;
        let mean = (0..self.len()).map(|i| self.values[i * self.dim + c]).sum::<f64>() / n;
        let var = (0..self.len())
            .map(|i| (self.values[i * self.dim + c] - mean).powi(2))
            .sum::<f64>()
            / n;
        (mean, var)
    }

    /// Sum of column variances.
    pub fn total_variance(&self) -> f64 {
        (0..self.dim).map(|c| self.column_moments(c).1).sum()
    }

    /// A random permutation of row indices; its first `n_train` entries are
    /// the training rows, the rest are for streaming. The two parts are
    /// disjoint by construction.
    pub fn shuffled_indices(&self, seed: u64) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut substream(seed, Domain::Split, 0));
        idx
    }

    /// Disjoint random training and test index sets.
    pub fn split(&self, n_train: usize, n_test: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
        let needed = n_train + n_test;
        if needed > self.len() {
            return Err(Error::Exhausted {
                needed,
                available: self.len(),
            });
        }
        let mut idx = self.shuffled_indices(seed);
        idx.truncate(needed);
        let test = idx.split_off(n_train);
        Ok((idx, test))
    }
}

/// Read a numeric CSV file with an optional header row.
///
/// The first record is taken as a header when any of its fields fails to
/// parse as a number.
pub fn ingest_csv(path: impl AsRef<Path>, options: &IngestOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, options)
}

pub(crate) fn read_csv<R: std::io::Read>(input: R, options: &IngestOptions) -> Result<Dataset> {
    if let Some(s) = options.jitter_sigma {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::Config(format!("jitter sigma must be non-negative, got {s}")));
        }
    }
    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(::csv::Trim::All)
        .from_reader(input);
    let mut header = None;
    let mut values = Vec::new();
    let mut dim = 0;
    let mut record = ::csv::StringRecord::new();
    let mut row = 0usize;
    loop {
        let more = reader.read_record(&mut record).map_err(|e| Error::Parse {
            row: e.position().map_or(row + 1, |p| p.record() as usize + 1),
            column: 0,
            message: e.to_string(),
        })?;
        if !more {
            break;
        }
        row += 1;
        if row == 1 {
            dim = record.len();
            if record.iter().any(|f| f.parse::<f64>().is_err()) {
                header = Some(record.iter().map(str::to_string).collect());
                continue;
            }
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row,
                column: c + 1,
                message: format!("not a number: {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: c + 1,
                    message: format!("non-finite value {field:?}"),
                });
            }
            values.push(v);
        }
    }
    let mut data = Dataset { dim, values, header };
    if data.is_empty() {
        return Err(Error::Config("CSV contains no data rows".into()));
    }
    let moments: Vec<(f64, f64)> = (0..dim).map(|c| data.column_moments(c)).collect();
    if options.standardize {
        for (c, &(mean, var)) in moments.iter().enumerate() {
            if !(var > 0.0) {
                return Err(Error::ZeroVariance { column: c + 1 });
            }
            let sd = var.sqrt();
            for i in 0..data.len() {
                let v = &mut data.values[i * dim + c];
                *v = (*v - mean) / sd;
            }
        }
        // Second pass removes the rounding left by the first.
        for c in 0..dim {
            let (mean, var) = data.column_moments(c);
            let sd = var.sqrt();
            for i in 0..data.len() {
                let v = &mut data.values[i * dim + c];
                *v = (*v - mean) / sd;
            }
        }
    }
    let sigmas: Vec<f64> = match options.jitter_sigma {
        Some(s) => vec![s; dim],
        None if options.standardize => vec![1e-6; dim],
        None => moments.iter().map(|&(_, var)| 1e-6 * var.sqrt()).collect(),
    };
    if sigmas.iter().any(|&s| s > 0.0) {
        let mut rng = substream(options.seed, Domain::Jitter, 0);
        for (i, v) in data.values.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            *v += sigmas[i % dim] * z;
        }
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str, options: &IngestOptions) -> Result<Dataset> {
        read_csv(text.as_bytes(), options)
    }

    const RAW: IngestOptions = IngestOptions {
        standardize: false,
        jitter_sigma: Some(0.0),
        seed: 0,
    };

    #[test]
    fn header_is_detected() {
        let d = read("a,b\n1,2\n3,4\n", &RAW).unwrap();
        assert_eq!(d.header().unwrap(), ["a", "b"]);
        assert_eq!(d.len(), 2);
        assert_eq!(d.row(1), [3.0, 4.0]);
        let d = read("1,2\n3,4\n", &RAW).unwrap();
        assert!(d.header().is_none());
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn parse_error_names_the_cell() {
        let err = read("x,y\n1,2\n3,oops\n", &RAW).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 3, column: 2, .. }), "{err:?}");
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(matches!(read("1,2\n3\n", &RAW), Err(Error::Parse { .. })));
    }

    #[test]
    fn standardized_columns() {
        let text: String = (0..500).map(|i| format!("{},{}\n", i * i, (i as f64).sin() * 7.0 + 3.0)).collect();
        let d = read(&text, &IngestOptions { jitter_sigma: Some(0.0), ..Default::default() }).unwrap();
        for c in 0..2 {
            let (m, v) = d.column_moments(c);
            assert!(m.abs() < 1e-9, "mean {m}");
            assert!((v - 1.0).abs() < 1e-9, "var {v}");
        }
    }

    #[test]
    fn constant_column_under_standardize() {
        let err = read("1,5\n2,5\n3,5\n", &IngestOptions::default()).unwrap_err();
        assert!(matches!(err, Error::ZeroVariance { column: 2 }));
        assert!(read("1,5\n2,5\n3,5\n", &RAW).is_ok());
    }

    #[test]
    fn jitter_breaks_ties_imperceptibly() {
        let text = "1,1\n1,2\n2,1\n2,2\n".repeat(10);
        let d = read(&text, &IngestOptions { standardize: false, jitter_sigma: None, seed: 4 }).unwrap();
        let mut col: Vec<f64> = (0..d.len()).map(|i| d.row(i)[0]).collect();
        col.sort_by(f64::total_cmp);
        col.dedup();
        assert_eq!(col.len(), d.len());
        assert!(col.iter().all(|v| (v - v.round()).abs() < 1e-4));
    }

    #[test]
    fn split_is_disjoint() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let d = Dataset::from_rows(&rows).unwrap();
        let (train, test) = d.split(30, 50, 9).unwrap();
        assert_eq!((train.len(), test.len()), (30, 50));
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 80);
        assert!(all.iter().all(|&i| i < 100));
        assert!(matches!(d.split(60, 50, 9), Err(Error::Exhausted { needed: 110, available: 100 })));
    }
}
