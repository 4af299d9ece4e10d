use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::sbm::LabelRule;
use crate::error::{Error, Result};
use crate::graph::{row_normalize, DenseMatrix, Graph};

pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const META_FILE: &str = "meta.json";

/// Contents of `meta.json`. Unknown keys are ignored on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub multilabel: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_rule: Option<LabelRule>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub graph: Graph,
    /// `N×F`, rows L1-normalized.
    pub features: DenseMatrix,
    /// `N×L` of 0/1.
    pub labels: DenseMatrix,
}

impl Dataset {
    /// Validates shapes and label rows. Features are stored as given.
    pub fn new(meta: DatasetMeta, graph: Graph, features: DenseMatrix, labels: DenseMatrix) -> Result<Self> {
        let n = graph.num_nodes();
        if features.rows() != n || labels.rows() != n {
            return Err(Error::shape(
                "Dataset",
                format!(
                    "graph has {n} nodes, features {} rows, labels {} rows",
                    features.rows(),
                    labels.rows()
                ),
            ));
        }
        if !features.is_finite() {
            return Err(Error::NonFinite("dataset features".into()));
        }
        for i in 0..n {
            check_label_row(labels.row(i), meta.multilabel).map_err(|msg| Error::Invalid(format!("label row {i}: {msg}")))?;
        }
        Ok(Self {
            meta,
            graph,
            features,
            labels,
        })
    }

    pub fn name(&self) -> &str {
        &self.meta.name
    }

    pub fn multilabel(&self) -> bool {
        self.meta.multilabel
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn num_labels(&self) -> usize {
        self.labels.cols()
    }
}

fn check_label_row(row: &[f64], multilabel: bool) -> std::result::Result<(), String> {
    if let Some(v) = row.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(format!("label value {v} is not 0 or 1"));
    }
    let ones = row.iter().filter(|&&v| v == 1.0).count();
    if !multilabel && ones != 1 {
        return Err(format!("multi-class row has {ones} positive labels"));
    }
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile {
            path: path.to_path_buf(),
        },
        _ => Error::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })
}

fn write(path: PathBuf, contents: &str) -> Result<()> {
    fs::write(&path, contents).map_err(|source| Error::Io { path, source })
}

/// Reads a matrix file: a `rows,cols` header, then one comma-separated row
/// per line. `check` validates each value.
fn read_matrix(path: &Path, check: impl Fn(f64) -> std::result::Result<(), String>) -> Result<DenseMatrix> {
    let text = read(path)?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = records
        .next()
        .ok_or_else(|| parse_err(1, "empty file, expected a `rows,cols` header".into()))?
        .map_err(|e| parse_err(1, e.to_string()))?;
    let dims: Vec<usize> = header
        .iter()
        .map(|f| f.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| parse_err(1, format!("bad header: {e}")))?;
    let [rows, cols] = dims[..] else {
        return Err(parse_err(1, format!("header has {} fields, expected 2", dims.len())));
    };
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for record in records {
        let record = record.map_err(|e| parse_err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if seen == rows {
            return Err(parse_err(line, format!("more than the {rows} rows declared in the header")));
        }
        if record.len() != cols {
            return Err(parse_err(line, format!("{} values, expected {cols}", record.len())));
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("cannot parse {field:?} as a number")))?;
            check(v).map_err(|msg| parse_err(line, msg))?;
            data.push(v);
        }
        seen += 1;
    }
    if seen != rows {
        return Err(Error::Data {
            path: path.to_path_buf(),
            msg: format!("header declares {rows} rows, found {seen}"),
        });
    }
    DenseMatrix::from_vec(rows, cols, data)
}

/// Loads `edges.tsv`, `features.csv`, `labels.csv` and `meta.json` from
/// `dir`. Feature rows are L1-normalized.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let meta_path = dir.join(META_FILE);
    let meta: DatasetMeta = serde_json::from_str(&read(&meta_path)?).map_err(|e| Error::Parse {
        path: meta_path.clone(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    let features_path = dir.join(FEATURES_FILE);
    let features = read_matrix(&features_path, |v| {
        if v.is_finite() {
            Ok(())
        } else {
            Err(format!("non-finite feature {v}"))
        }
    })?;
    let labels_path = dir.join(LABELS_FILE);
    let labels = read_matrix(&labels_path, |v| {
        if v == 0.0 || v == 1.0 {
            Ok(())
        } else {
            Err(format!("label value {v} is not 0 or 1"))
        }
    })?;
    if labels.rows() != features.rows() {
        return Err(Error::Data {
            path: labels_path,
            msg: format!("{} rows but {FEATURES_FILE} has {}", labels.rows(), features.rows()),
        });
    }
    for i in 0..labels.rows() {
        check_label_row(labels.row(i), meta.multilabel).map_err(|msg| Error::Parse {
            path: labels_path.clone(),
            line: i + 2,
            msg,
        })?;
    }
    let graph = Graph::read_edge_file(&dir.join(EDGES_FILE), features.rows())?;
    Dataset::new(meta, graph, row_normalize(&features), labels)
}

fn matrix_to_csv(m: &DenseMatrix) -> String {
    let mut out = format!("{},{}\n", m.rows(), m.cols());
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Writes `ds` in the directory format read by [`load_dataset`], creating
/// `dir` if needed.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write(dir.join(EDGES_FILE), &ds.graph.to_edge_list_string())?;
    write(dir.join(FEATURES_FILE), &matrix_to_csv(&ds.features))?;
    write(dir.join(LABELS_FILE), &matrix_to_csv(&ds.labels))?;
    let meta = serde_json::to_string_pretty(&ds.meta).map_err(|e| Error::Invalid(e.to_string()))?;
    write(dir.join(META_FILE), &(meta + "\n"))
}
