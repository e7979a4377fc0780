//! Parameter sets: built-in presets and the JSON parameter-file format.
//!
//! A parameter file is a JSON object with sections `ach`, `channel`,
//! optional `response`, optional `environment`, and one `drug:<name>`
//! section per drug. Keys inside each section are the field names of the
//! corresponding type (`k_dissA1`, `K_D1`, `A_init`, ...); concentrations are
//! molar and rates are 1/s.

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::kinetics::{AChKinetics, ChannelKinetics, DrugKinetics, Environment, ModelKind};
use crate::response::{ModelParams, MuscleResponseParams};

pub const DRUGS: [&str; 3] = ["cisatracurium", "vecuronium", "rocuronium"];

pub const PRESETS: [&str; 4] = ["table1", "table3-two-site", "table3-reciprocal", "table3-cyclic"];

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    pub ach: AChKinetics,
    pub channel: ChannelKinetics,
    pub response: MuscleResponseParams,
    pub drugs: Vec<(String, DrugKinetics)>,
    pub environment: Option<Environment>,
}

fn tied_drug(kd1: f64, kd2: f64, k_diss: f64) -> DrugKinetics {
    DrugKinetics {
        kd1,
        kd2,
        k_diss1: k_diss,
        k_diss2: k_diss,
    }
}

/// Literature receptor constants.
pub fn nominal_ach() -> AChKinetics {
    AChKinetics::tied(1.8e4, 1.6e-4)
}

pub fn nominal_channel() -> ChannelKinetics {
    ChannelKinetics {
        k_open: 5.0e4,
        k_close: 1.2e3,
        k_d_plus: 26.0,
        k_d_minus: 0.13,
    }
}

pub fn nominal_response() -> MuscleResponseParams {
    MuscleResponseParams {
        r_star_50: 9.7e-9,
        gamma_a: 4.8,
    }
}

/// Literature constants of a reference blocker (distinct site rates).
pub fn nominal_drug() -> DrugKinetics {
    DrugKinetics {
        kd1: 7.0e-8,
        kd2: 6.3e-7,
        k_diss1: 12.6,
        k_diss2: 113.0,
    }
}

fn named(drugs: [DrugKinetics; 3]) -> Vec<(String, DrugKinetics)> {
    DRUGS.iter().map(|s| s.to_string()).zip(drugs).collect()
}

impl ParameterSet {
    pub fn preset(name: &str) -> Option<Self> {
        let channel_with = |k_open, k_close| ChannelKinetics {
            k_open,
            k_close,
            ..nominal_channel()
        };
        let set = match name {
            "table1" => Self {
                ach: nominal_ach(),
                channel: nominal_channel(),
                response: nominal_response(),
                drugs: named([nominal_drug(); 3]),
                environment: None,
            },
            // Drug off-rates play no part in the equilibrium model.
            "table3-two-site" => Self {
                ach: nominal_ach(),
                channel: nominal_channel(),
                response: MuscleResponseParams {
                    r_star_50: 1.33e-6,
                    gamma_a: 4.17,
                },
                drugs: named([
                    tied_drug(2.19e-8, 2.12e-8, 1.0),
                    tied_drug(2.09e-8, 9.29e-8, 1.0),
                    tied_drug(1.88e-8, 1.28e-4, 1.0),
                ]),
                environment: None,
            },
            "table3-reciprocal" => Self {
                ach: AChKinetics::tied(4.43e2, 1.58e-8),
                channel: channel_with(1.48e10, 2.22e7),
                response: MuscleResponseParams {
                    r_star_50: 2.08e-7,
                    gamma_a: 9.14,
                },
                drugs: named([
                    tied_drug(9.57e-9, 6.75e-6, 2.6),
                    tied_drug(1.58e-8, 2.76e-6, 1.9),
                    tied_drug(1.23e-8, 1.37e-7, 64.0),
                ]),
                environment: None,
            },
            "table3-cyclic" => Self {
                ach: AChKinetics {
                    k_diss_open: 1.70e4,
                    kd_open: 1.84e-8,
                    ..AChKinetics::tied(2.62e3, 4.44e-7)
                },
                channel: channel_with(1.06e4, 4.24e4),
                response: MuscleResponseParams {
                    r_star_50: 1.82e-8,
                    gamma_a: 9.04,
                },
                drugs: named([
                    tied_drug(1.02e-8, 3.60e-5, 4.0),
                    tied_drug(1.63e-8, 1.58e-6, 5.4),
                    tied_drug(1.22e-8, 1.76e-7, 61.5),
                ]),
                environment: None,
            },
            _ => return None,
        };
        Some(set)
    }

    /// The preset holding fitted estimates for `model`.
    pub fn table3(model: ModelKind) -> Self {
        let name = match model {
            ModelKind::TwoSite => "table3-two-site",
            ModelKind::Reciprocal => "table3-reciprocal",
            ModelKind::Cyclic => "table3-cyclic",
        };
        Self::preset(name).expect("built-in preset")
    }

    pub fn drug(&self, name: &str) -> Option<&DrugKinetics> {
        self.drugs.iter().find(|(n, _)| n == name).map(|(_, d)| d)
    }

    pub fn model_params(&self, kind: ModelKind, drug: &DrugKinetics) -> ModelParams {
        ModelParams {
            kind,
            ach: self.ach,
            channel: self.channel,
            drug: *drug,
            response: self.response,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ach.validate()?;
        self.channel.validate()?;
        self.response.validate()?;
        for (_, d) in &self.drugs {
            d.validate()?;
        }
        if let Some(env) = &self.environment {
            env.validate()?;
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let root: Value = serde_json::from_str(text).map_err(|e| Error::ParamFile(e.to_string()))?;
        let obj = root
            .as_object()
            .ok_or_else(|| Error::ParamFile("top level must be an object".into()))?;

        fn section<T: DeserializeOwned>(obj: &Map<String, Value>, key: &str) -> Result<Option<T>> {
            obj.get(key)
                .map(|v| {
                    serde_json::from_value(v.clone()).map_err(|e| Error::ParamFile(format!("section `{key}`: {e}")))
                })
                .transpose()
        }

        let mut drugs = Vec::new();
        for (key, value) in obj {
            match key.as_str() {
                "ach" | "channel" | "response" | "environment" => {}
                k if k.starts_with("drug:") && k.len() > 5 => {
                    let d: DrugKinetics = serde_json::from_value(value.clone())
                        .map_err(|e| Error::ParamFile(format!("section `{k}`: {e}")))?;
                    drugs.push((k[5..].to_string(), d));
                }
                other => return Err(Error::ParamFile(format!("unknown section `{other}`"))),
            }
        }
        // Known drugs first in their usual order, then the rest by name.
        let rank = |n: &str| DRUGS.iter().position(|d| *d == n).unwrap_or(DRUGS.len());
        drugs.sort_by(|a, b| (rank(&a.0), &a.0).cmp(&(rank(&b.0), &b.0)));
        let set = Self {
            ach: section(obj, "ach")?.ok_or_else(|| Error::ParamFile("missing section `ach`".into()))?,
            channel: section(obj, "channel")?.ok_or_else(|| Error::ParamFile("missing section `channel`".into()))?,
            response: section(obj, "response")?.unwrap_or_else(nominal_response),
            drugs,
            environment: section(obj, "environment")?,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn to_json(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("ach".into(), serde_json::to_value(self.ach).expect("plain struct"));
        obj.insert(
            "channel".into(),
            serde_json::to_value(self.channel).expect("plain struct"),
        );
        obj.insert(
            "response".into(),
            serde_json::to_value(self.response).expect("plain struct"),
        );
        for (name, d) in &self.drugs {
            obj.insert(format!("drug:{name}"), serde_json::to_value(d).expect("plain struct"));
        }
        if let Some(env) = &self.environment {
            obj.insert("environment".into(), serde_json::to_value(env).expect("plain struct"));
        }
        Value::Object(obj)
    }
}
