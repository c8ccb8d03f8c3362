//! Plain-text model files: architecture, full topology and parameters.

use std::path::Path;

use super::layers::{Activation, Conv1d, Dense, Elman, Layer};
use super::model::{ArchKind, NetModel, Sparsity};
use super::NetError;
use crate::artifact::{write_atomic, FormatError, KvDoc, KvWriter};
use crate::dataio::{dataset_stats_reader, dataset_stats_writer};
use crate::powercurve::TurbineSpec;

const MODEL_FORMAT: &str = "turbine-net-model";
const MODEL_VERSION: u32 = 1;

fn bad_value(key: &str, msg: impl Into<String>) -> FormatError {
    FormatError::BadValue {
        key: key.into(),
        msg: msg.into(),
    }
}

impl NetModel {
    pub fn to_text(&self) -> String {
        let mut w = KvWriter::new(MODEL_FORMAT, MODEL_VERSION);
        w.str("arch", self.kind.short());
        w.int("window", self.window as i64);
        w.int("input_width", self.input_width as i64);
        w.flag("has_sparsity", self.sparsity.is_some());
        if let Some(sp) = self.sparsity {
            w.num("rho", sp.rho);
            w.num("beta", sp.beta);
        }
        w.flag("has_spec", self.spec.is_some());
        if let Some(spec) = &self.spec {
            w.num("cut_in", spec.cut_in);
            w.num("rated_speed", spec.rated_speed);
            w.num("cut_out", spec.cut_out);
            w.num("rated_power", spec.rated_power);
        }
        w.flag("has_stats", self.stats.is_some());
        if let Some(stats) = &self.stats {
            dataset_stats_writer(&mut w, stats);
        }
        w.int("layers", self.layers.len() as i64);
        for (i, layer) in self.layers.iter().enumerate() {
            let key = |k: &str| format!("layer{i}.{k}");
            w.str(&key("kind"), layer.kind_str());
            let (input, output) = layer.widths();
            w.int(&key("input"), input as i64);
            w.int(&key("output"), output as i64);
            w.str(&key("activation"), layer.activation().as_str());
            if let Layer::Conv1d(c) = layer {
                w.int(&key("width"), c.width as i64);
            }
            w.array(&key("params"), layer.params());
        }
        w.finish()
    }

    pub fn from_text(text: &str) -> Result<NetModel, NetError> {
        let doc = KvDoc::parse(text, MODEL_FORMAT, MODEL_VERSION)?;
        let arch = doc.str("arch")?;
        let kind = ArchKind::from_short(arch).ok_or_else(|| bad_value("arch", format!("unknown architecture {arch:?}")))?;
        let sparsity = if doc.bool("has_sparsity")? {
            Some(Sparsity {
                rho: doc.f64("rho")?,
                beta: doc.f64("beta")?,
            })
        } else {
            None
        };
        let spec = if doc.bool("has_spec")? {
            let spec = TurbineSpec::new(
                doc.f64("cut_in")?,
                doc.f64("rated_speed")?,
                doc.f64("cut_out")?,
                doc.f64("rated_power")?,
            )
            .map_err(|e| bad_value("cut_in", e.to_string()))?;
            Some(spec)
        } else {
            None
        };
        let stats = if doc.bool("has_stats")? {
            Some(dataset_stats_reader(&doc)?)
        } else {
            None
        };
        let n_layers = doc.usize("layers")?;
        let mut layers = Vec::with_capacity(n_layers);
        for i in 0..n_layers {
            let key = |k: &str| format!("layer{i}.{k}");
            let input = doc.usize(&key("input"))?;
            let output = doc.usize(&key("output"))?;
            let act_key = key("activation");
            let activation = Activation::parse(doc.str(&act_key)?).ok_or_else(|| bad_value(&act_key, "unknown activation"))?;
            let params_key = key("params");
            let layer = match doc.str(&key("kind"))? {
                "dense" => Layer::Dense(Dense {
                    input,
                    output,
                    activation,
                    params: doc.array_len(&params_key, Dense::param_count(input, output))?,
                }),
                "elman" => Layer::Elman(Elman {
                    input,
                    hidden: output,
                    params: doc.array_len(&params_key, Elman::param_count(input, output))?,
                }),
                "conv1d" => {
                    let width = doc.usize(&key("width"))?;
                    Layer::Conv1d(Conv1d {
                        channels: input,
                        filters: output,
                        width,
                        activation,
                        params: doc.array_len(&params_key, Conv1d::param_count(input, output, width))?,
                    })
                }
                other => return Err(bad_value(&key("kind"), format!("unknown layer kind {other:?}")).into()),
            };
            layers.push(layer);
        }
        let model = NetModel {
            kind,
            layers,
            window: doc.usize("window")?,
            input_width: doc.usize("input_width")?,
            sparsity,
            stats,
            spec,
        };
        model.check_topology()?;
        if !model.params_finite() {
            return Err(bad_value("params", "non-finite parameter").into());
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), NetError> {
        write_atomic(path, self.to_text().as_bytes()).map_err(|source| NetError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<NetModel, NetError> {
        let text = std::fs::read_to_string(path).map_err(|source| NetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_text(&text)
    }
}
