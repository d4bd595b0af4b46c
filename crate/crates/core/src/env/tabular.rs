use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::{Path, PathBuf};

use super::EnvError;
use crate::domain::{ActionId, ContextVector, Example};

/// Columns below this variance are treated as constant and mapped to zero.
const VARIANCE_FLOOR: f64 = 1e-8;

/// Heldout size used by [`load_tabular`] when the pool allows it.
pub const DEFAULT_HELDOUT: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularOptions {
    pub label_column: String,
    /// Feature columns by header name; every non-label column when absent.
    #[serde(default)]
    pub feature_columns: Option<Vec<String>>,
    /// Field delimiter, `,` or `\t`.
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
}

fn default_delimiter() -> char {
    ','
}

impl TabularOptions {
    pub fn new(label_column: impl Into<String>) -> Self {
        Self {
            label_column: label_column.into(),
            feature_columns: None,
            delimiter: ',',
        }
    }
}

/// A fully loaded and standardized table of expert-labelled examples.
#[derive(Debug, Clone)]
pub struct TabularPool {
    pub examples: Vec<Example>,
    pub m: usize,
    pub feature_dim: usize,
    pub feature_names: Vec<String>,
    /// Original label strings, indexed by class id.
    pub label_names: Vec<String>,
}

/// The per-run view of a tabular pool: a streamed sample plus a disjoint heldout set.
#[derive(Debug, Clone)]
pub struct TabularEnvironment {
    pub examples: Vec<Example>,
    pub heldout: Vec<Example>,
    pub m: usize,
    pub feature_dim: usize,
}

impl TabularPool {
    pub fn load(path: &Path, opts: &TabularOptions) -> Result<Self, EnvError> {
        if !path.exists() {
            return Err(EnvError::MissingFile(path.to_path_buf()));
        }
        let read_err = |source| EnvError::Read {
            path: path.to_path_buf(),
            source,
        };
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(opts.delimiter as u8)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(read_err)?;
        let headers: Vec<String> = reader.headers().map_err(read_err)?.iter().map(str::to_owned).collect();

        let label_idx = headers
            .iter()
            .position(|h| *h == opts.label_column)
            .ok_or_else(|| EnvError::UnknownLabelColumn(opts.label_column.clone()))?;
        let feature_idx: Vec<usize> = match &opts.feature_columns {
            Some(cols) => cols
                .iter()
                .map(|c| {
                    headers
                        .iter()
                        .position(|h| h == c)
                        .ok_or_else(|| EnvError::UnknownFeatureColumn(c.clone()))
                })
                .collect::<Result<_, _>>()?,
            None => (0..headers.len()).filter(|&i| i != label_idx).collect(),
        };

        let mut label_ids: HashMap<String, usize> = HashMap::new();
        let mut label_names = Vec::new();
        let mut raw: Vec<(ContextVector, ActionId)> = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(read_err)?;
            let label = record.get(label_idx).unwrap_or("").to_owned();
            let next = label_ids.len();
            let id = *label_ids.entry(label.clone()).or_insert_with(|| {
                label_names.push(label);
                next
            });
            let mut x = Vec::with_capacity(feature_idx.len());
            for &j in &feature_idx {
                let cell = record.get(j).unwrap_or("");
                let v: f64 = cell.parse().map_err(|_| EnvError::InvalidFeature {
                    row,
                    column: headers[j].clone(),
                    value: cell.to_owned(),
                })?;
                if !v.is_finite() {
                    return Err(EnvError::NonFiniteFeature {
                        row,
                        column: headers[j].clone(),
                    });
                }
                x.push(v);
            }
            raw.push((x, ActionId(id)));
        }
        if label_names.len() < 2 {
            return Err(EnvError::TooFewClasses(label_names.len()));
        }

        standardize(&mut raw, feature_idx.len());
        Ok(Self {
            m: label_names.len(),
            feature_dim: feature_idx.len(),
            feature_names: feature_idx.iter().map(|&j| headers[j].clone()).collect(),
            label_names,
            examples: raw,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Draw `sample_n` streamed examples and `heldout_n` disjoint heldout
    /// examples without replacement.
    pub fn draw_run<R: Rng + ?Sized>(
        &self,
        sample_n: usize,
        heldout_n: usize,
        rng: &mut R,
    ) -> Result<TabularEnvironment, EnvError> {
        let needed = sample_n + heldout_n;
        if needed > self.len() {
            return Err(EnvError::InsufficientExamples {
                needed,
                available: self.len(),
            });
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(rng);
        let pick = |ix: &[usize]| ix.iter().map(|&i| self.examples[i].clone()).collect();
        Ok(TabularEnvironment {
            examples: pick(&order[..sample_n]),
            heldout: pick(&order[sample_n..needed]),
            m: self.m,
            feature_dim: self.feature_dim,
        })
    }
}

/// Load a delimited table and draw one run's sample plus a heldout set of up
/// to 2000 examples from what remains.
pub fn load_tabular<R: Rng + ?Sized>(
    path: impl AsRef<Path>,
    label_column: &str,
    sample_n: usize,
    rng: &mut R,
) -> Result<TabularEnvironment, EnvError> {
    let path: PathBuf = path.as_ref().to_path_buf();
    let pool = TabularPool::load(&path, &TabularOptions::new(label_column))?;
    if sample_n >= pool.len() {
        return Err(EnvError::InsufficientExamples {
            needed: sample_n + 1,
            available: pool.len(),
        });
    }
    let heldout_n = DEFAULT_HELDOUT.min(pool.len() - sample_n);
    pool.draw_run(sample_n, heldout_n, rng)
}

fn standardize(rows: &mut [Example], dim: usize) {
    let n = rows.len() as f64;
    if rows.is_empty() {
        return;
    }
    for j in 0..dim {
        let mean = rows.iter().map(|(x, _)| x[j]).sum::<f64>() / n;
        let var = rows.iter().map(|(x, _)| (x[j] - mean).powi(2)).sum::<f64>() / n;
        for (x, _) in rows.iter_mut() {
            x[j] = if var < VARIANCE_FLOOR {
                0.0
            } else {
                (x[j] - mean) / var.sqrt()
            };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::{SeedSpec, StreamTag};
    use std::io::Write;

    fn write_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn labels_follow_first_appearance() {
        let f = write_csv("x,y,label\n1,2,b\n3,4,a\n5,6,b\n7,8,a\n");
        let pool = TabularPool::load(f.path(), &TabularOptions::new("label")).unwrap();
        assert_eq!(pool.m, 2);
        assert_eq!(pool.label_names, vec!["b", "a"]);
        let labels: Vec<usize> = pool.examples.iter().map(|e| e.1 .0).collect();
        assert_eq!(labels, vec![0, 1, 0, 1]);
        assert_eq!(pool.feature_dim, 2);
    }

    #[test]
    fn features_are_standardized() {
        let f = write_csv("x,c,label\n1,5,a\n2,5,b\n3,5,a\n4,5,b\n");
        let pool = TabularPool::load(f.path(), &TabularOptions::new("label")).unwrap();
        let xs: Vec<f64> = pool.examples.iter().map(|e| e.0[0]).collect();
        let mean = xs.iter().sum::<f64>() / 4.0;
        let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
        // constant column maps to zero
        assert!(pool.examples.iter().all(|e| e.0[1] == 0.0));
    }

    #[test]
    fn sample_larger_than_pool_is_rejected() {
        let f = write_csv("x,label\n1,a\n2,b\n3,a\n4,b\n");
        let mut rng = SeedSpec::new(0, 0).rng(StreamTag::Environment);
        let err = load_tabular(f.path(), "label", 10, &mut rng).unwrap_err();
        assert!(matches!(err, EnvError::InsufficientExamples { .. }));
        assert!(err.to_string().contains("insufficient examples"));
    }

    #[test]
    fn distinct_errors() {
        let mut rng = SeedSpec::new(0, 0).rng(StreamTag::Environment);
        let missing = load_tabular("/nonexistent/file.csv", "label", 1, &mut rng).unwrap_err();
        assert!(matches!(missing, EnvError::MissingFile(_)));

        let f = write_csv("x,label\n1,a\n2,b\n");
        let err = TabularPool::load(f.path(), &TabularOptions::new("nope")).unwrap_err();
        assert!(matches!(err, EnvError::UnknownLabelColumn(_)));

        let f = write_csv("x,label\n1,a\nNaN,b\n");
        let err = TabularPool::load(f.path(), &TabularOptions::new("label")).unwrap_err();
        assert!(matches!(err, EnvError::NonFiniteFeature { row: 1, .. }));

        let f = write_csv("x,label\n1,a\nfoo,b\n");
        let err = TabularPool::load(f.path(), &TabularOptions::new("label")).unwrap_err();
        assert!(matches!(err, EnvError::InvalidFeature { .. }));
    }

    #[test]
    fn tab_delimited_with_column_selection() {
        let f = write_csv("a\tb\tc\tlabel\n1\t9\t0\tx\n2\t8\t1\ty\n3\t7\t0\tx\n");
        let opts = TabularOptions {
            label_column: "label".into(),
            feature_columns: Some(vec!["c".into(), "a".into()]),
            delimiter: '\t',
        };
        let pool = TabularPool::load(f.path(), &opts).unwrap();
        assert_eq!(pool.feature_names, vec!["c", "a"]);
        assert_eq!(pool.feature_dim, 2);
    }

    #[test]
    fn heldout_is_disjoint_from_stream() {
        let mut body = String::from("id,label\n");
        for i in 0..50 {
            body.push_str(&format!("{i},{}\n", i % 3));
        }
        let f = write_csv(&body);
        let pool = TabularPool::load(f.path(), &TabularOptions::new("label")).unwrap();
        let mut rng = SeedSpec::new(4, 1).rng(StreamTag::Environment);
        let run = pool.draw_run(30, 20, &mut rng).unwrap();
        let key = |e: &Example| e.0[0].to_bits();
        let stream: std::collections::HashSet<u64> = run.examples.iter().map(key).collect();
        assert_eq!(stream.len(), 30);
        assert!(run.heldout.iter().all(|e| !stream.contains(&key(e))));
        assert!(pool.draw_run(31, 20, &mut rng).is_err());
    }
}
