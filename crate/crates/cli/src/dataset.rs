//! Dataset descriptor files: where the phenotype table and imaging data live
//! and how attributes are typed.

use std::fs;
use std::path::{Path, PathBuf};

use mmgt_core::data::{load_cohort, AttributeSchema, ImagingSource, LabelMap, LoadOptions, LoadedCohort, Schema};
use mmgt_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum AttributeSpec {
    Categorical {
        name: String,
        /// Inferred from the table when empty.
        #[serde(default)]
        vocabulary: Vec<String>,
    },
    Continuous {
        name: String,
        #[serde(default = "default_tolerance")]
        tolerance: f64,
    },
}

fn default_tolerance() -> f64 {
    2.0
}

impl AttributeSpec {
    fn schema(&self) -> AttributeSchema {
        match self {
            Self::Categorical { name, vocabulary } => AttributeSchema::categorical(name.clone(), vocabulary.clone()),
            Self::Continuous { name, tolerance } => AttributeSchema::continuous(name.clone(), *tolerance),
        }
    }
}

/// Paths are relative to the descriptor file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub phenotypes: PathBuf,
    /// One matrix file per subject, named after its subject id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imaging_dir: Option<PathBuf>,
    /// Stacked `N x d` connectivity rows with a subject-id index file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imaging_matrix: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imaging_index: Option<PathBuf>,
    /// `raw:code` pairs, e.g. `"1:1,2:0"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_map: Option<String>,
    #[serde(default)]
    pub drop_missing: bool,
    pub attributes: Vec<AttributeSpec>,
}

/// A descriptor with its paths resolved against the descriptor location.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub descriptor: PathBuf,
    pub phenotypes: PathBuf,
    pub imaging: ImagingSource,
    pub schema: Schema,
    pub options: LoadOptions,
}

impl Dataset {
    pub fn open(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: DatasetSpec = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let imaging = match (&spec.imaging_dir, &spec.imaging_matrix, &spec.imaging_index) {
            (Some(dir), None, None) => ImagingSource::PerSubject { dir: base.join(dir) },
            (None, Some(matrix), Some(index)) => ImagingSource::Stacked {
                matrix: base.join(matrix),
                index: base.join(index),
            },
            _ => {
                return Err(Error::config(format!(
                    "{}: give either imaging_dir or both imaging_matrix and imaging_index",
                    path.display()
                )))
            }
        };
        let label_map = spec.label_map.as_deref().map(LabelMap::parse).transpose()?.unwrap_or_default();
        Ok(Self {
            descriptor: path.to_path_buf(),
            phenotypes: base.join(&spec.phenotypes),
            imaging,
            schema: Schema::new(spec.attributes.iter().map(AttributeSpec::schema).collect()),
            options: LoadOptions {
                label_map,
                drop_missing: spec.drop_missing,
            },
        })
    }

    /// Every file the run reads, for digests.
    pub fn input_paths(&self) -> Vec<PathBuf> {
        let mut paths = vec![self.descriptor.clone(), self.phenotypes.clone()];
        paths.extend(self.imaging.paths());
        paths
    }

    pub fn load(&self) -> Result<LoadedCohort> {
        load_cohort(&self.imaging, &self.phenotypes, &self.schema, &self.options)
    }
}
