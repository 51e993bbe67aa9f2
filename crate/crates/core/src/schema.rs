//! JSON input documents for spectra and targets.
//!
//! Parsing walks the `serde_json::Value` tree by hand so that every violation
//! is reported with the JSON pointer of the offending node.
//!
//! Spectrum: `{"family": "power_law", "alpha": 2.0}` and friends, with an
//! optional `"truncation": {"horizon": 1000000, "tail_rel_tol": 1e-10}`.
//!
//! Target: `{"coeffs": [..], "sigma2": 1.0}`, or
//! `{"coeffs_family": {"power": 2.0, "count": 50}, "sigma2": 1.0}` for
//! `v_i = i^{-power/2}`, or just `{"sigma2": 1.0}` for the zero target.

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::risk::Target;
use crate::spectrum::{Family, Spectrum, Truncation};

fn escape(key: &str) -> String {
    key.replace('~', "~0").replace('/', "~1")
}

fn violation(pointer: &str, message: impl Into<String>) -> Error {
    Error::Schema {
        pointer: pointer.to_string(),
        message: message.into(),
    }
}

/// An object node together with its pointer.
struct Node<'a> {
    map: &'a Map<String, Value>,
    pointer: String,
}

impl<'a> Node<'a> {
    fn object(value: &'a Value, pointer: String) -> Result<Self> {
        match value {
            Value::Object(map) => Ok(Self { map, pointer }),
            _ => Err(violation(&pointer, "expected an object")),
        }
    }

    fn path(&self, key: &str) -> String {
        format!("{}/{}", self.pointer, escape(key))
    }

    fn only(&self, allowed: &[&str]) -> Result<()> {
        match self.map.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(violation(
                &self.path(k),
                format!("unknown field; expected one of {allowed:?}"),
            )),
            None => Ok(()),
        }
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.map.get(key)
    }

    fn require(&self, key: &str) -> Result<&'a Value> {
        self.get(key)
            .ok_or_else(|| violation(&self.path(key), "missing required field"))
    }

    fn number(&self, key: &str) -> Result<f64> {
        as_number(self.require(key)?, &self.path(key))
    }

    fn count(&self, key: &str) -> Result<u64> {
        as_count(self.require(key)?, &self.path(key))
    }
}

fn as_number(v: &Value, pointer: &str) -> Result<f64> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| violation(pointer, "expected a finite number"))
}

fn as_count(v: &Value, pointer: &str) -> Result<u64> {
    v.as_u64()
        .ok_or_else(|| violation(pointer, "expected a non-negative integer"))
}

fn as_array<'a>(v: &'a Value, pointer: &str) -> Result<&'a Vec<Value>> {
    v.as_array()
        .ok_or_else(|| violation(pointer, "expected an array"))
}

fn number_list(v: &Value, pointer: &str, what: &str) -> Result<Vec<f64>> {
    as_array(v, pointer)?
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let p = format!("{pointer}/{i}");
            let x = as_number(x, &p)?;
            if x < 0.0 {
                return Err(violation(&p, format!("{what} must be non-negative")));
            }
            Ok(x)
        })
        .collect()
}

fn alpha(node: &Node) -> Result<f64> {
    let a = node.number("alpha")?;
    if a <= 1.0 {
        return Err(violation(
            &node.path("alpha"),
            "alpha must exceed 1 for a summable spectrum",
        ));
    }
    Ok(a)
}

fn positive_count(node: &Node, key: &str) -> Result<u64> {
    let c = node.count(key)?;
    if c == 0 {
        return Err(violation(&node.path(key), "must be at least 1"));
    }
    Ok(c)
}

/// Parse a spectrum document.
pub fn parse_spectrum(doc: &Value) -> Result<Spectrum> {
    let node = Node::object(doc, String::new())?;
    let family_name = node
        .require("family")?
        .as_str()
        .ok_or_else(|| violation("/family", "expected a string"))?;
    let (family, fields): (Family, &[&str]) = match family_name {
        "explicit" => {
            let eig = number_list(node.require("eigenvalues")?, "/eigenvalues", "eigenvalues")?;
            (Family::Explicit { eigenvalues: eig }, &["eigenvalues"])
        }
        "power_law" => (
            Family::PowerLaw {
                alpha: alpha(&node)?,
            },
            &["alpha"],
        ),
        "log_power" => (
            Family::LogPower {
                alpha: alpha(&node)?,
            },
            &["alpha"],
        ),
        "exponential" => (Family::Exponential, &[]),
        "junk" => (
            Family::Junk {
                d_s: positive_count(&node, "d_s")?,
                d_j: positive_count(&node, "d_j")?,
            },
            &["d_s", "d_j"],
        ),
        "isotropic" => (
            Family::Isotropic {
                d: positive_count(&node, "d")?,
            },
            &["d"],
        ),
        "blocks" => {
            let list = as_array(node.require("blocks")?, "/blocks")?;
            let blocks = list
                .iter()
                .enumerate()
                .map(|(i, b)| {
                    let p = format!("/blocks/{i}");
                    match as_array(b, &p)?.as_slice() {
                        [eig, mult] => {
                            let e = as_number(eig, &format!("{p}/0"))?;
                            if e < 0.0 {
                                return Err(violation(
                                    &format!("{p}/0"),
                                    "eigenvalue must be non-negative",
                                ));
                            }
                            Ok((e, as_count(mult, &format!("{p}/1"))?))
                        }
                        _ => Err(violation(&p, "expected [eigenvalue, multiplicity]")),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            (Family::Blocks { blocks }, &["blocks"])
        }
        other => {
            return Err(violation(
                "/family",
                format!(
                    "unknown family '{other}'; expected explicit, power_law, log_power, \
                     exponential, junk, isotropic or blocks"
                ),
            ))
        }
    };
    let mut allowed = vec!["family", "truncation"];
    allowed.extend_from_slice(fields);
    node.only(&allowed)?;

    let truncation = match node.get("truncation") {
        None => Truncation::default(),
        Some(t) => {
            let t = Node::object(t, "/truncation".into())?;
            t.only(&["horizon", "tail_rel_tol"])?;
            let mut trunc = Truncation::default();
            if t.get("horizon").is_some() {
                let h = t.count("horizon")?;
                if h < 2 {
                    return Err(violation("/truncation/horizon", "must be at least 2"));
                }
                trunc.horizon = h as usize;
            }
            if t.get("tail_rel_tol").is_some() {
                let tol = t.number("tail_rel_tol")?;
                if !(tol > 0.0 && tol < 1.0) {
                    return Err(violation("/truncation/tail_rel_tol", "must lie in (0, 1)"));
                }
                trunc.tail_rel_tol = tol;
            }
            trunc
        }
    };
    Spectrum::new(family, truncation)
}

/// Parse a target document.
pub fn parse_target(doc: &Value) -> Result<Target> {
    let node = Node::object(doc, String::new())?;
    node.only(&["coeffs", "coeffs_family", "sigma2"])?;
    let sigma2 = match node.get("sigma2") {
        Some(_) => {
            let s = node.number("sigma2")?;
            if s < 0.0 {
                return Err(violation("/sigma2", "noise variance must be non-negative"));
            }
            s
        }
        None => 0.0,
    };
    match (node.get("coeffs"), node.get("coeffs_family")) {
        (Some(_), Some(_)) => Err(violation(
            "/coeffs_family",
            "give either coeffs or coeffs_family, not both",
        )),
        (Some(c), None) => {
            let coeffs = as_array(c, "/coeffs")?
                .iter()
                .enumerate()
                .map(|(i, x)| as_number(x, &format!("/coeffs/{i}")))
                .collect::<Result<Vec<_>>>()?;
            Target::new(coeffs, sigma2)
        }
        (None, Some(f)) => {
            let f = Node::object(f, "/coeffs_family".into())?;
            f.only(&["power", "count"])?;
            let power = f.number("power")?;
            let count = f.count("count")?;
            Target::power_family(power, count as usize, sigma2)
        }
        (None, None) => Target::zero(sigma2),
    }
}

pub fn parse_spectrum_str(text: &str) -> Result<Spectrum> {
    parse_spectrum(&parse_json(text)?)
}

pub fn parse_target_str(text: &str) -> Result<Target> {
    parse_target(&parse_json(text)?)
}

fn parse_json(text: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| violation("", format!("malformed JSON: {e}")))
}
