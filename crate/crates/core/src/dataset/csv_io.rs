use super::{Dataset, DatasetError, VariableKind, VariableMeta};
use std::collections::HashMap;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub label_column: String,
    /// Optional column of observation identifiers, excluded from features.
    pub id_column: Option<String>,
    /// Per-column kind overrides; unlisted columns are inferred (a column
    /// holding only 0 and 1 is binary).
    pub kind_hints: HashMap<String, VariableKind>,
}

impl LoadOptions {
    pub fn new(label_column: impl Into<String>) -> Self {
        LoadOptions {
            label_column: label_column.into(),
            id_column: None,
            kind_hints: HashMap::new(),
        }
    }
}

/// Parses `name = kind` lines. Blank lines and `#` comments are ignored.
pub fn parse_kind_hints(text: &str) -> Result<HashMap<String, VariableKind>, DatasetError> {
    let mut hints = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (name, kind) = line
            .split_once('=')
            .ok_or_else(|| DatasetError::BadHint(format!("line {}: missing `=`", lineno + 1)))?;
        hints.insert(name.trim().to_string(), kind.parse()?);
    }
    Ok(hints)
}

pub fn read_kind_hints(path: &Path) -> Result<HashMap<String, VariableKind>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_kind_hints(&text)
}

/// Loads a labelled CSV file. Constant feature columns are removed and the
/// removal is logged.
pub fn load_csv(path: &Path, opts: &LoadOptions) -> Result<Dataset, DatasetError> {
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let label_pos = header
        .iter()
        .position(|h| *h == opts.label_column)
        .ok_or_else(|| DatasetError::MissingLabelColumn(opts.label_column.clone()))?;
    let id_pos = match &opts.id_column {
        Some(id) => Some(
            header
                .iter()
                .position(|h| h == id)
                .ok_or_else(|| DatasetError::MissingColumn(id.clone()))?,
        ),
        None => None,
    };
    let feature_pos: Vec<usize> = (0..header.len())
        .filter(|&j| j != label_pos && Some(j) != id_pos)
        .collect();
    for name in opts.kind_hints.keys() {
        if !feature_pos.iter().any(|&j| header[j] == *name) {
            return Err(DatasetError::MissingColumn(name.clone()));
        }
    }

    let mut labels = Vec::new();
    let mut ids = Vec::new();
    let mut features: Vec<Vec<f64>> = vec![Vec::new(); feature_pos.len()];
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() != header.len() {
            return Err(DatasetError::RaggedRow {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        let raw_label = &record[label_pos];
        let label = match raw_label.parse::<f64>() {
            Ok(0.0) => 0,
            Ok(1.0) => 1,
            _ => {
                return Err(DatasetError::BadLabel {
                    row,
                    value: raw_label.to_string(),
                })
            }
        };
        labels.push(label);
        if let Some(p) = id_pos {
            ids.push(record[p].to_string());
        }
        for (k, &j) in feature_pos.iter().enumerate() {
            let raw = &record[j];
            let v: f64 = raw.parse().map_err(|_| DatasetError::BadValue {
                row,
                column: header[j].clone(),
                value: raw.to_string(),
            })?;
            if !v.is_finite() {
                return Err(DatasetError::BadValue {
                    row,
                    column: header[j].clone(),
                    value: raw.to_string(),
                });
            }
            features[k].push(v);
        }
    }
    if labels.is_empty() {
        return Err(DatasetError::Empty);
    }

    let metas: Vec<VariableMeta> = feature_pos
        .iter()
        .enumerate()
        .map(|(k, &j)| {
            let name = header[j].clone();
            let kind = opts.kind_hints.get(&name).copied().unwrap_or_else(|| {
                if features[k].iter().all(|&v| v == 0.0 || v == 1.0) {
                    VariableKind::Binary
                } else {
                    VariableKind::Continuous
                }
            });
            VariableMeta {
                name,
                kind,
                original_index: k,
            }
        })
        .collect();

    let (ds, dropped) = Dataset::from_columns_dropping_constant(labels, features, metas)?;
    if !dropped.is_empty() {
        log::info!(
            "removed {} constant column(s): {}",
            dropped.len(),
            dropped.join(", ")
        );
    }
    let ds = ds.with_label_name(opts.label_column.clone());
    if id_pos.is_some() {
        ds.with_ids(ids)
    } else {
        Ok(ds)
    }
}

/// Writes the dataset in the format [`load_csv`] reads. An `id` column is
/// written first when the dataset carries identifiers.
pub fn write_csv(ds: &Dataset, path: &Path) -> Result<(), DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let mut header: Vec<&str> = Vec::new();
    if ds.ids().is_some() {
        header.push("id");
    }
    header.push(ds.label_name());
    header.extend(ds.names());
    w.write_record(&header)?;
    let mut fields: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..ds.n_obs() {
        fields.clear();
        if let Some(ids) = ds.ids() {
            fields.push(ids[i].clone());
        }
        fields.push(ds.labels()[i].to_string());
        fields.extend(ds.features().iter().map(|col| format!("{}", col[i])));
        w.write_record(&fields)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_tmp(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        let mut f = std::fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn constant_column_is_removed() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(
            &dir,
            "a.csv",
            "y,a,const,b\n1,1,5,0.5\n0,0,5,1.5\n0,1,5,2.5\n1,0,5,0.5\n",
        );
        let ds = load_csv(&p, &LoadOptions::new("y")).unwrap();
        assert_eq!(ds.names(), vec!["a", "b"]);
        assert_eq!(ds.columns()[0].kind, VariableKind::Binary);
        assert_eq!(ds.columns()[1].kind, VariableKind::Continuous);
        assert_eq!(ds.columns()[1].original_index, 2);
        assert_eq!(ds.n_active(), 2);
    }

    #[test]
    fn label_two_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "a.csv", "y,a\n1,1\n2,0\n0,1\n");
        let err = load_csv(&p, &LoadOptions::new("y")).unwrap_err();
        assert!(matches!(err, DatasetError::BadLabel { row: 2, .. }), "{err}");
    }

    #[test]
    fn malformed_row_names_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "a.csv", "y,a,b\n1,1,0\n0,0\n");
        let err = load_csv(&p, &LoadOptions::new("y")).unwrap_err();
        assert!(matches!(err, DatasetError::RaggedRow { row: 2, .. }), "{err}");
        let p = write_tmp(&dir, "b.csv", "y,a\n1,x\n0,0\n");
        let err = load_csv(&p, &LoadOptions::new("y")).unwrap_err();
        assert!(err.to_string().contains("column `a`"), "{err}");
    }

    #[test]
    fn all_constant_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "a.csv", "y,a,b\n1,1,3\n0,1,3\n");
        assert!(matches!(
            load_csv(&p, &LoadOptions::new("y")),
            Err(DatasetError::AllConstant)
        ));
    }

    #[test]
    fn hints_override_inference() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "a.csv", "id,y,a\nm1,1,1\nm2,0,0\nm3,0,1\n");
        let mut opts = LoadOptions::new("y");
        opts.id_column = Some("id".into());
        opts.kind_hints = parse_kind_hints("# kinds\na = continuous\n").unwrap();
        let ds = load_csv(&p, &opts).unwrap();
        assert_eq!(ds.columns()[0].kind, VariableKind::Continuous);
        assert_eq!(ds.ids().unwrap()[2], "m3");
    }

    #[test]
    fn write_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(
            &dir,
            "a.csv",
            "id,y,a,b\nx1,1,1,0.1\nx2,0,0,-2.75\nx3,0,1,1e-7\nx4,1,0,3\n",
        );
        let mut opts = LoadOptions::new("y");
        opts.id_column = Some("id".into());
        let ds = load_csv(&p, &opts).unwrap();
        let out = dir.path().join("b.csv");
        write_csv(&ds, &out).unwrap();
        let again = load_csv(&out, &opts).unwrap();
        assert_eq!(ds, again);
    }
}
