//! Run configuration: file paths, CSV column maps and pipeline knobs.
//!
//! Everything lives in one TOML file; CLI flags override individual
//! fields. Column names are configuration because the published
//! datasets rename their headers between releases.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RegisterColumns {
    pub title: String,
    pub address: String,
    pub country: String,
    pub price: String,
    pub region: String,
}

impl Default for RegisterColumns {
    fn default() -> Self {
        RegisterColumns {
            title: "Title Number".into(),
            address: "Property Address".into(),
            country: "Country Incorporated (1)".into(),
            price: "Price Paid".into(),
            region: "Region".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OnspdColumns {
    pub postcode: String,
    pub oa: String,
    pub lsoa: String,
    pub msoa: String,
    pub lad: String,
}

impl Default for OnspdColumns {
    fn default() -> Self {
        OnspdColumns {
            postcode: "pcds".into(),
            oa: "oa11".into(),
            lsoa: "lsoa11".into(),
            msoa: "msoa11".into(),
            lad: "oslaua".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GazetteerColumns {
    pub street_number: String,
    pub street_name: String,
    pub postcode: String,
}

impl Default for GazetteerColumns {
    fn default() -> Self {
        GazetteerColumns {
            street_number: "paon".into(),
            street_name: "street".into(),
            postcode: "postcode".into(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Columns {
    pub register: RegisterColumns,
    pub onspd: OnspdColumns,
    pub pricepaid: GazetteerColumns,
    pub voa: GazetteerColumns,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub register: Option<PathBuf>,
    pub onspd: Option<PathBuf>,
    pub pricepaid: Option<PathBuf>,
    pub voa: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub class_steps: Option<PathBuf>,
    pub report_dir: Option<PathBuf>,
}

/// Which overlap resolver produces the final labelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolver {
    Largest,
    Hmm,
}

/// Which classification pass feeds the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabels {
    Type1,
    Type2,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineSettings {
    pub seed: u64,
    pub replicates: usize,
    /// Ranges spanning more than this many units are flagged, not expanded.
    pub range_cap: u32,
    pub resolver: Resolver,
    pub class_labels: ClassLabels,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineSettings {
            seed: 42,
            replicates: 501,
            range_cap: 500,
            resolver: Resolver::Largest,
            class_labels: ClassLabels::Type2,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub paths: Paths,
    pub columns: Columns,
    pub pipeline: PipelineSettings,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        if !path.exists() {
            return Err(Error::MissingInput { path: path.into() });
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}
