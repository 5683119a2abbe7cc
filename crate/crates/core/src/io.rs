//! JSON model files.
//!
//! Single-matrix models store `W` row-major (`W[j*c + k]` is feature `j`,
//! class `k`) and `b`. One-vs-rest and one-vs-one models store a `members`
//! array instead, each member being one binary hyperplane.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::baselines::{BinaryModel, OvOMember, OvOModel, OvRModel};
use crate::cv::{Classifier, Method, MethodConfig, Pipeline};
use crate::data::StandardizationStats;
use crate::error::{check_dim, Error, Result};
use crate::model::LinearModel;
use crate::objective::ObjectiveConfig;
use crate::optim::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedMember {
    /// Positive class.
    pub k: usize,
    /// Negative class for one-vs-one; absent for one-vs-rest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    pub w: Vec<f64>,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedStandardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub method: Method,
    pub d: usize,
    pub c: usize,
    #[serde(rename = "W", default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub members: Option<Vec<SavedMember>>,
    pub class_names: Vec<String>,
    pub objective_config: ObjectiveConfig,
    pub train_config: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardization: Option<SavedStandardization>,
}

fn member(k: usize, l: Option<usize>, m: &BinaryModel) -> SavedMember {
    SavedMember {
        k,
        l,
        w: m.w.to_vec(),
        b: m.b,
    }
}

impl SavedModel {
    pub fn from_pipeline(
        pipeline: &Pipeline,
        method: &MethodConfig,
        train_config: &TrainConfig,
        class_names: &[String],
    ) -> Self {
        let classifier = &pipeline.classifier;
        let (weights, b, members) = match classifier {
            Classifier::Linear { model, .. } => (
                Some(model.weights.iter().copied().collect()),
                Some(model.bias.to_vec()),
                None,
            ),
            Classifier::Ovr(m) => (
                None,
                None,
                Some(m.members.iter().enumerate().map(|(k, b)| member(k, None, b)).collect()),
            ),
            Classifier::Ovo(m) => (
                None,
                None,
                Some(m.members.iter().map(|p| member(p.k, Some(p.l), &p.model)).collect()),
            ),
        };
        SavedModel {
            method: classifier.method(),
            d: classifier.d(),
            c: classifier.c(),
            weights,
            b,
            members,
            class_names: class_names.to_vec(),
            objective_config: method.objective,
            train_config: *train_config,
            standardization: pipeline.standardizer.as_ref().map(|s| SavedStandardization {
                mean: s.mean.to_vec(),
                std: s.std.to_vec(),
            }),
        }
    }

    pub fn to_pipeline(&self) -> Result<Pipeline> {
        let (d, c) = (self.d, self.c);
        if c < 2 {
            return Err(Error::TooFewClasses);
        }
        check_dim("class name count", c, self.class_names.len())?;
        let classifier = match self.method {
            Method::Ovr | Method::Ovo => {
                let members = self
                    .members
                    .as_ref()
                    .ok_or_else(|| Error::Config(format!("{} model without members", self.method)))?;
                let binary = |m: &SavedMember| -> Result<BinaryModel> {
                    check_dim("member weight length", d, m.w.len())?;
                    Ok(BinaryModel {
                        w: Array1::from(m.w.clone()),
                        b: m.b,
                    })
                };
                if self.method == Method::Ovr {
                    check_dim("member count", c, members.len())?;
                    for (k, m) in members.iter().enumerate() {
                        if m.k != k || m.l.is_some() {
                            return Err(Error::Config(format!("member {k} is not class {k} vs rest")));
                        }
                    }
                    Classifier::Ovr(OvRModel {
                        members: members.iter().map(binary).collect::<Result<_>>()?,
                    })
                } else {
                    check_dim("member count", c * (c - 1) / 2, members.len())?;
                    let pairs = (0..c).flat_map(|k| (k + 1..c).map(move |l| (k, l)));
                    let mut out = Vec::with_capacity(members.len());
                    for (m, (k, l)) in members.iter().zip(pairs) {
                        if m.k != k || m.l != Some(l) {
                            return Err(Error::Config(format!("member for pair ({k}, {l}) out of order")));
                        }
                        out.push(OvOMember {
                            k,
                            l,
                            model: binary(m)?,
                        });
                    }
                    Classifier::Ovo(OvOModel { c, members: out })
                }
            }
            method => {
                let missing = || Error::Config(format!("{method} model without W and b"));
                let w = self.weights.clone().ok_or_else(missing)?;
                let b = self.b.clone().ok_or_else(missing)?;
                check_dim("W length", d * c, w.len())?;
                check_dim("b length", c, b.len())?;
                let weights = Array2::from_shape_vec((d, c), w).expect("length checked");
                let mut model = LinearModel::new(weights, Array1::from(b));
                model.class_names = self.class_names.clone();
                Classifier::Linear { method, model }
            }
        };
        let standardizer = match &self.standardization {
            None => None,
            Some(s) => {
                check_dim("standardization mean length", d, s.mean.len())?;
                check_dim("standardization std length", d, s.std.len())?;
                Some(StandardizationStats {
                    mean: Array1::from(s.mean.clone()),
                    std: Array1::from(s.std.clone()),
                })
            }
        };
        Ok(Pipeline {
            standardizer,
            classifier,
        })
    }

    pub fn method_config(&self) -> MethodConfig {
        MethodConfig::new(self.method, self.objective_config)
    }
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n").map_err(io_err)?;
    out.flush().map_err(io_err)
}

pub fn save_model(path: impl AsRef<Path>, model: &SavedModel) -> Result<()> {
    write_json(path, model)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SavedModel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}
