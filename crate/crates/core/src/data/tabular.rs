use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use super::{DataError, Dataset};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Index(usize),
    Last,
    /// Header name; requires a header row.
    Named(String),
}

impl FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "last" | "-1" => LabelColumn::Last,
            _ => match s.parse() {
                Ok(i) => LabelColumn::Index(i),
                Err(_) => LabelColumn::Named(s.to_string()),
            },
        })
    }
}

pub fn load_csv(path: &Path, label_column: &LabelColumn, has_header: bool) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    let mut ds = parse_csv(file, &path.display().to_string(), label_column, has_header)?;
    if let Some(stem) = path.file_stem() {
        ds.name = stem.to_string_lossy().into_owned();
    }
    Ok(ds)
}

/// Features are z-scored per dimension; a constant column maps to zeros.
pub fn parse_csv(
    input: impl Read,
    source: &str,
    label_column: &LabelColumn,
    has_header: bool,
) -> Result<Dataset, DataError> {
    let err = |line: Option<u64>, detail: String| DataError::Csv {
        path: source.to_string(),
        line,
        detail,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let headers = if has_header {
        Some(
            reader
                .headers()
                .map_err(|e| err(Some(1), e.to_string()))?
                .clone(),
        )
    } else {
        None
    };

    let mut width: Option<usize> = headers.as_ref().map(|h| h.len());
    let mut label_idx: Option<usize> = None;
    let mut features: Vec<f64> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();

    for row in reader.records() {
        let row = row.map_err(|e| err(e.position().map(|p| p.line()), e.to_string()))?;
        let line = row.position().map(|p| p.line());
        if row.len() == 1 && row[0].is_empty() {
            continue;
        }
        let w = *width.get_or_insert(row.len());
        if row.len() != w {
            return Err(err(line, format!("expected {w} fields, found {}", row.len())));
        }
        let li = match label_idx {
            Some(i) => i,
            None => {
                let i = match label_column {
                    LabelColumn::Index(i) => *i,
                    LabelColumn::Last => w.saturating_sub(1),
                    LabelColumn::Named(name) => headers
                        .as_ref()
                        .and_then(|h| h.iter().position(|c| c == name))
                        .ok_or_else(|| err(None, format!("no column named {name:?}")))?,
                };
                if i >= w || w < 2 {
                    return Err(err(line, format!("label column {i} out of range for {w} fields")));
                }
                *label_idx.insert(i)
            }
        };
        for (c, cell) in row.iter().enumerate() {
            if c == li {
                raw_labels.push(cell.to_string());
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| err(line, format!("non-numeric value {cell:?} in column {c}")))?;
            if !v.is_finite() {
                return Err(err(line, format!("non-finite value {cell:?} in column {c}")));
            }
            features.push(v);
        }
    }

    let n = raw_labels.len();
    if n == 0 {
        return Err(err(None, "no data rows".into()));
    }
    let d = features.len() / n;
    let mut x = Matrix::from_col_major(d, n, features).expect("rows are rectangular");

    for i in 0..d {
        let mean = (0..n).map(|j| x[(i, j)]).sum::<f64>() / n as f64;
        let var = (0..n).map(|j| (x[(i, j)] - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for j in 0..n {
            x[(i, j)] = (x[(i, j)] - mean) / sd;
        }
    }

    let mut vocab: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let labels = raw_labels
        .into_iter()
        .map(|l| {
            *index.entry(l.clone()).or_insert_with(|| {
                vocab.push(l);
                vocab.len() - 1
            })
        })
        .collect();

    let mut metadata = BTreeMap::new();
    metadata.insert("format".into(), "csv".into());
    metadata.insert("normalization".into(), "zscore".into());
    metadata.insert(
        "label_vocabulary".into(),
        serde_json::to_string(&vocab).expect("strings serialize"),
    );
    metadata.insert("source".into(), source.to_string());
    Ok(Dataset {
        x,
        labels,
        classes: vocab.len(),
        name: source.to_string(),
        metadata,
    })
}
