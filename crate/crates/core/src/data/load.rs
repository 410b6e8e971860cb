//! Reading phenotype tables and imaging files into a validated [`Cohort`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use super::cohort::{AttributeKind, AttributeSchema, Cohort, PhenotypeValue, Schema, SubjectRecord};
use super::fc::{compute_fc_vector, looks_like_fc_matrix, n_roi_for_len, upper_triangle};
use crate::error::{Error, Result};
use crate::io::read_matrix;

/// One phenotype row before encoding. `values` follows the schema order;
/// `None` marks an empty cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPhenotypeRow {
    pub subject_id: String,
    pub label: String,
    pub values: Vec<Option<String>>,
}

/// Maps raw label strings to {0, 1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMap(pub BTreeMap<String, u8>);

impl Default for LabelMap {
    fn default() -> Self {
        Self(BTreeMap::from([("0".to_string(), 0), ("1".to_string(), 1)]))
    }
}

impl LabelMap {
    /// Parses `"raw:code,raw:code"`, e.g. `"1:1,2:0"`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (raw, code) = part
                .split_once(':')
                .ok_or_else(|| Error::config(format!("label map entry {part:?} is not raw:code")))?;
            let code: u8 = code
                .trim()
                .parse()
                .ok()
                .filter(|c| *c <= 1)
                .ok_or_else(|| Error::config(format!("label map entry {part:?} must map to 0 or 1")))?;
            map.insert(raw.trim().to_string(), code);
        }
        if map.is_empty() {
            return Err(Error::config("empty label map"));
        }
        Ok(Self(map))
    }

    pub fn get(&self, raw: &str) -> Option<u8> {
        self.0.get(raw.trim()).copied()
    }
}

/// Reads a delimited phenotype table with a header row. Tab-delimited when
/// the extension is `.tsv`, comma-delimited otherwise.
pub fn read_phenotype_table(path: &Path, attribute_names: &[&str]) -> Result<Vec<RawPhenotypeRow>> {
    let delimiter = match path.extension().and_then(|e| e.to_str()) {
        Some("tsv") | Some("tab") => b'\t',
        _ => b',',
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let column = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            detail: format!("missing required column {name:?}"),
        })
    };
    let id_col = column("subject_id")?;
    let label_col = column("label")?;
    let attr_cols = attribute_names.iter().map(|n| column(n)).collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let cell = |i: usize| record.get(i).map(str::to_string).filter(|s| !s.is_empty());
        rows.push(RawPhenotypeRow {
            subject_id: cell(id_col).unwrap_or_default(),
            label: cell(label_col).unwrap_or_default(),
            values: attr_cols.iter().map(|&c| cell(c)).collect(),
        });
    }
    Ok(rows)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        detail: e.to_string(),
    }
}

/// Fills empty categorical vocabularies with the sorted distinct values seen
/// in `rows`.
pub fn infer_vocabularies(schema: &Schema, rows: &[RawPhenotypeRow]) -> Schema {
    let attributes = schema
        .attributes
        .iter()
        .enumerate()
        .map(|(u, attr)| match &attr.kind {
            AttributeKind::Categorical { vocabulary } if vocabulary.is_empty() => {
                let seen: Vec<String> = rows.iter().filter_map(|r| r.values[u].clone()).collect();
                AttributeSchema::categorical(attr.name.clone(), seen)
            }
            _ => attr.clone(),
        })
        .collect();
    Schema::new(attributes)
}

/// Encodes raw attribute values: categorical values become their index in
/// the sorted vocabulary, continuous values are parsed as-is. Every failing
/// subject is named in the error.
pub fn encode_phenotypes(rows: &[RawPhenotypeRow], schema: &Schema) -> Result<Vec<Vec<PhenotypeValue>>> {
    let mut out = Vec::with_capacity(rows.len());
    let mut failures = Vec::new();
    for row in rows {
        match encode_row(row, schema) {
            Ok(values) => out.push(values),
            Err(msg) => failures.push(format!("{}: {msg}", row.subject_id)),
        }
    }
    if failures.is_empty() {
        Ok(out)
    } else {
        Err(Error::validation(format!("phenotype encoding failed for {}", failures.join("; "))))
    }
}

fn encode_row(row: &RawPhenotypeRow, schema: &Schema) -> std::result::Result<Vec<PhenotypeValue>, String> {
    if row.values.len() != schema.len() {
        return Err(format!("{} values for {} attributes", row.values.len(), schema.len()));
    }
    schema
        .attributes
        .iter()
        .zip(&row.values)
        .map(|(attr, value)| {
            let raw = value.as_deref().ok_or_else(|| format!("missing attribute {}", attr.name))?;
            match &attr.kind {
                AttributeKind::Categorical { vocabulary } => vocabulary
                    .binary_search_by(|v| v.as_str().cmp(raw))
                    .map(PhenotypeValue::Category)
                    .map_err(|_| format!("value {raw:?} not in vocabulary of {}", attr.name)),
                AttributeKind::Continuous { .. } => raw
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .map(PhenotypeValue::Real)
                    .ok_or_else(|| format!("attribute {} value {raw:?} is not a finite number", attr.name)),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ImagingSource {
    /// One matrix file per subject, named `<subject_id>.<ext>`. Each file is
    /// either an ROI x T time series, an ROI x ROI connectivity matrix, or a
    /// single already-flattened row.
    PerSubject { dir: PathBuf },
    /// One `N x d1` matrix plus an index file listing one subject id per line.
    Stacked { matrix: PathBuf, index: PathBuf },
}

impl ImagingSource {
    pub fn paths(&self) -> Vec<PathBuf> {
        match self {
            Self::PerSubject { dir } => vec![dir.clone()],
            Self::Stacked { matrix, index } => vec![matrix.clone(), index.clone()],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub label_map: LabelMap,
    /// Drop subjects that lack a modality instead of failing.
    pub drop_missing: bool,
}

#[derive(Debug, Clone)]
pub struct LoadedCohort {
    pub cohort: Cohort,
    pub warnings: Vec<String>,
}

/// Converts one imaging matrix into a flattened connectivity vector.
pub fn imaging_vector(m: &ndarray::Array2<f64>) -> Result<Vec<f64>> {
    if m.nrows() == 1 {
        let v = m.row(0).to_vec();
        if n_roi_for_len(v.len()).is_none() {
            return Err(Error::shape(format!("flattened vector length {} is not n(n-1)/2", v.len())));
        }
        return Ok(v);
    }
    if looks_like_fc_matrix(m) {
        upper_triangle(m)
    } else {
        compute_fc_vector(m.view())
    }
}

fn read_imaging(source: &ImagingSource) -> Result<HashMap<String, Vec<f64>>> {
    match source {
        ImagingSource::PerSubject { dir } => {
            let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
            let mut out = HashMap::new();
            let mut paths: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            paths.sort();
            for path in paths {
                let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
                let m = read_matrix(&path)?;
                let v = imaging_vector(&m).map_err(|e| Error::Parse {
                    path: path.clone(),
                    detail: e.to_string(),
                })?;
                out.insert(stem.to_string(), v);
            }
            Ok(out)
        }
        ImagingSource::Stacked { matrix, index } => {
            let m = read_matrix(matrix)?;
            let ids: Vec<String> = fs::read_to_string(index)
                .map_err(|e| Error::io(index, e))?
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_string)
                .collect();
            if ids.len() != m.nrows() {
                return Err(Error::validation(format!(
                    "index lists {} subjects but matrix has {} rows",
                    ids.len(),
                    m.nrows()
                )));
            }
            Ok(ids.into_iter().zip(m.rows()).map(|(id, row)| (id, row.to_vec())).collect())
        }
    }
}

/// Joins phenotype rows with imaging entries on subject id.
pub fn load_cohort(imaging: &ImagingSource, phenotype_path: &Path, schema: &Schema, options: &LoadOptions) -> Result<LoadedCohort> {
    let names: Vec<&str> = schema.attributes.iter().map(|a| a.name.as_str()).collect();
    let rows = read_phenotype_table(phenotype_path, &names)?;
    let images = read_imaging(imaging)?;
    assemble_cohort(rows, images, schema, options)
}

/// Join and validation step of [`load_cohort`], separated from file access.
pub fn assemble_cohort(
    rows: Vec<RawPhenotypeRow>,
    mut images: HashMap<String, Vec<f64>>,
    schema: &Schema,
    options: &LoadOptions,
) -> Result<LoadedCohort> {
    let mut warnings = Vec::new();
    let mut note = |msg: String| {
        warn!("{msg}");
        warnings.push(msg);
    };

    let mut seen = HashSet::new();
    for row in &rows {
        if !seen.insert(row.subject_id.clone()) {
            return Err(Error::validation(format!("duplicate subject_id {:?}", row.subject_id)));
        }
    }

    // Drop incomplete rows first so vocabularies come from usable subjects.
    let mut kept = Vec::with_capacity(rows.len());
    for row in rows {
        if !images.contains_key(&row.subject_id) {
            if options.drop_missing {
                note(format!("dropping subject {}: no imaging data", row.subject_id));
                continue;
            }
            return Err(Error::validation(format!("subject {} has phenotypes but no imaging data", row.subject_id)));
        }
        if options.drop_missing && row.values.iter().any(Option::is_none) {
            note(format!("dropping subject {}: missing phenotype attribute", row.subject_id));
            continue;
        }
        kept.push(row);
    }
    let mut orphans: Vec<&String> = images.keys().filter(|id| !seen.contains(*id)).collect();
    orphans.sort();
    if !orphans.is_empty() {
        if options.drop_missing {
            note(format!("ignoring {} imaging entries without phenotypes", orphans.len()));
        } else {
            return Err(Error::validation(format!("imaging entries without phenotype rows: {orphans:?}")));
        }
    }

    let schema = infer_vocabularies(schema, &kept);
    let encoded = encode_phenotypes(&kept, &schema)?;

    let mut records = Vec::with_capacity(kept.len());
    let mut n_roi = None;
    for (row, phenotypes) in kept.into_iter().zip(encoded) {
        let label = options
            .label_map
            .get(&row.label)
            .ok_or_else(|| Error::validation(format!("subject {}: label {:?} not in label map", row.subject_id, row.label)))?;
        let imaging_raw = images.remove(&row.subject_id).expect("presence checked above");
        let this_roi = n_roi_for_len(imaging_raw.len())
            .ok_or_else(|| Error::shape(format!("subject {}: imaging length {}", row.subject_id, imaging_raw.len())))?;
        match n_roi {
            None => n_roi = Some(this_roi),
            Some(n) if n != this_roi => {
                return Err(Error::shape(format!(
                    "subject {} has {this_roi} ROIs, earlier subjects have {n}",
                    row.subject_id
                )))
            }
            _ => {}
        }
        records.push(SubjectRecord {
            subject_id: row.subject_id,
            imaging_raw,
            phenotypes,
            label,
        });
    }
    let n_roi = n_roi.ok_or_else(|| Error::validation("no subjects with complete data"))?;
    let cohort = Cohort::new(records, schema, n_roi)?;
    Ok(LoadedCohort { cohort, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn row(id: &str, label: &str, site: Option<&str>, age: Option<&str>) -> RawPhenotypeRow {
        RawPhenotypeRow {
            subject_id: id.into(),
            label: label.into(),
            values: vec![site.map(Into::into), age.map(Into::into)],
        }
    }

    fn schema() -> Schema {
        Schema::new(vec![
            AttributeSchema::categorical("site", ["KKI", "NYU", "PKU"]),
            AttributeSchema::continuous("age", 2.0),
        ])
    }

    #[test]
    fn ordinal_and_continuous_encoding() {
        let enc = encode_phenotypes(&[row("s1", "0", Some("NYU"), Some("12.4"))], &schema()).unwrap();
        assert_eq!(enc[0], vec![PhenotypeValue::Category(1), PhenotypeValue::Real(12.4)]);
    }

    #[test]
    fn unknown_category_names_subject() {
        let err = encode_phenotypes(
            &[row("good", "0", Some("KKI"), Some("10")), row("bad-7", "1", Some("XYZ"), Some("10"))],
            &schema(),
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad-7") && msg.contains("XYZ"), "{msg}");
        assert!(!msg.contains("good"));
    }

    #[test]
    fn missing_attribute_is_an_error() {
        let err = encode_phenotypes(&[row("s9", "0", Some("KKI"), None)], &schema()).unwrap_err();
        assert!(err.to_string().contains("s9"));
    }

    #[test]
    fn encoding_is_order_stable() {
        let rows = vec![
            row("a", "0", Some("PKU"), Some("1")),
            row("b", "1", Some("KKI"), Some("2")),
            row("c", "0", Some("NYU"), Some("3")),
        ];
        let forward = encode_phenotypes(&rows, &schema()).unwrap();
        let reversed: Vec<_> = rows.iter().rev().cloned().collect();
        let backward = encode_phenotypes(&reversed, &schema()).unwrap();
        let mut back_fixed = backward.clone();
        back_fixed.reverse();
        assert_eq!(forward, back_fixed);
    }

    fn images(ids: &[&str]) -> HashMap<String, Vec<f64>> {
        ids.iter().map(|id| (id.to_string(), vec![0.1, 0.2, 0.3])).collect()
    }

    #[test]
    fn single_subject_rejected() {
        let err = assemble_cohort(vec![row("a", "0", Some("KKI"), Some("3"))], images(&["a"]), &schema(), &LoadOptions::default())
            .unwrap_err();
        assert!(err.to_string().contains("both labels"));
    }

    #[test]
    fn drop_missing_removes_subject_with_warning() {
        let rows = vec![
            row("a", "0", Some("KKI"), Some("3")),
            row("b", "1", Some("NYU"), Some("4")),
            row("c", "1", Some("NYU"), Some("5")),
        ];
        let strict = assemble_cohort(rows.clone(), images(&["a", "b"]), &schema(), &LoadOptions::default());
        assert!(strict.is_err());
        let opts = LoadOptions {
            drop_missing: true,
            ..Default::default()
        };
        let loaded = assemble_cohort(rows, images(&["a", "b"]), &schema(), &opts).unwrap();
        assert_eq!(loaded.cohort.len(), 2);
        assert_eq!(loaded.warnings.len(), 1);
        assert!(loaded.warnings[0].contains('c'));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut imgs = images(&["a"]);
        imgs.insert("b".into(), vec![0.0; 6]);
        let rows = vec![row("a", "0", Some("KKI"), Some("3")), row("b", "1", Some("NYU"), Some("4"))];
        assert!(matches!(assemble_cohort(rows, imgs, &schema(), &LoadOptions::default()), Err(Error::Shape(_))));
    }

    #[test]
    fn vocabulary_inferred_when_empty() {
        let s = Schema::new(vec![
            AttributeSchema {
                name: "site".into(),
                kind: AttributeKind::Categorical { vocabulary: vec![] },
            },
            AttributeSchema::continuous("age", 2.0),
        ]);
        let rows = vec![row("a", "0", Some("PKU"), Some("3")), row("b", "1", Some("KKI"), Some("4"))];
        let loaded = assemble_cohort(rows, images(&["a", "b"]), &s, &LoadOptions::default()).unwrap();
        assert_eq!(loaded.cohort.records[0].phenotypes[0], PhenotypeValue::Category(1));
    }

    #[test]
    fn label_map_parsing() {
        let m = LabelMap::parse("1:1, 2:0").unwrap();
        assert_eq!(m.get("2"), Some(0));
        assert!(LabelMap::parse("1:3").is_err());
    }

    #[test]
    fn loads_files_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let pheno = dir.path().join("pheno.csv");
        let mut f = fs::File::create(&pheno).unwrap();
        writeln!(f, "subject_id,label,site,age").unwrap();
        writeln!(f, "s1,1,NYU,10.5").unwrap();
        writeln!(f, "s2,2,KKI,11").unwrap();
        let img_dir = dir.path().join("img");
        fs::create_dir(&img_dir).unwrap();
        // time series, 3 ROIs x 4 time points
        fs::write(img_dir.join("s1.txt"), "1 2 3 4\n4 3 2 1\n1 3 2 4\n").unwrap();
        // connectivity matrix
        fs::write(img_dir.join("s2.txt"), "1 0.5 0.1\n0.5 1 0.2\n0.1 0.2 1\n").unwrap();
        let opts = LoadOptions {
            label_map: LabelMap::parse("1:1,2:0").unwrap(),
            drop_missing: false,
        };
        let loaded = load_cohort(&ImagingSource::PerSubject { dir: img_dir }, &pheno, &schema(), &opts).unwrap();
        let c = loaded.cohort;
        assert_eq!(c.n_roi, 3);
        assert_eq!(c.records[1].imaging_raw, vec![0.5, 0.1, 0.2]);
        assert!((c.records[0].imaging_raw[0] + 1.0).abs() < 1e-12);
        assert_eq!(c.labels(), vec![1, 0]);

        let stacked = dir.path().join("stack.txt");
        fs::write(&stacked, "0.1 0.2 0.3\n0.4 0.5 0.6\n").unwrap();
        let index = dir.path().join("index.txt");
        fs::write(&index, "s2\ns1\n").unwrap();
        let loaded = load_cohort(&ImagingSource::Stacked { matrix: stacked, index }, &pheno, &schema(), &opts).unwrap();
        assert_eq!(loaded.cohort.records[0].imaging_raw, vec![0.4, 0.5, 0.6]);
    }

    #[test]
    fn missing_phenotype_file_is_io_error() {
        let err = load_cohort(
            &ImagingSource::PerSubject { dir: "/nonexistent".into() },
            Path::new("/nonexistent/pheno.csv"),
            &schema(),
            &LoadOptions::default(),
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
