//! JSON rule documents.
//!
//! ```json
//! {"dimension": 2, "q": 2, "r": 1, "form": "additive",
//!  "additive": [{"coord": [1, 0], "coef": 1}]}
//! ```
//!
//! `form` is one of `table`, `additive`, `builtin` or `extension`; the
//! matching payload key carries the data (`table`: letters in canonical
//! pattern-index order; `builtin`: `{"name": ...}`; `extension`: a nested
//! one-dimensional document). One-dimensional documents accept `table` and
//! `additive` (with one-element coordinates `[k]`) and are normalised to
//! tables. Builtins are normalised to their additive form.

use serde_json::{json, Map, Value};

use super::{Builtin, LocalRule1D, LocalRule2D, RuleError, RuleForm};
use crate::geometry::{Coord, Letter};

/// A parsed rule document of either dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuleSpec {
    TwoD(LocalRule2D),
    OneD(LocalRule1D),
}

impl RuleSpec {
    pub fn q(&self) -> u32 {
        match self {
            RuleSpec::TwoD(r) => r.q(),
            RuleSpec::OneD(r) => r.q(),
        }
    }

    pub fn r(&self) -> u32 {
        match self {
            RuleSpec::TwoD(r) => r.r(),
            RuleSpec::OneD(r) => r.r(),
        }
    }
}

fn malformed(msg: impl Into<String>) -> RuleError {
    RuleError::Malformed(msg.into())
}

fn get_u32(obj: &Map<String, Value>, key: &str) -> Result<u32, RuleError> {
    let v = obj
        .get(key)
        .ok_or_else(|| malformed(format!("missing field '{key}'")))?;
    v.as_u64()
        .and_then(|n| u32::try_from(n).ok())
        .ok_or_else(|| malformed(format!("field '{key}' must be a non-negative integer")))
}

fn get_str<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a str, RuleError> {
    obj.get(key)
        .ok_or_else(|| malformed(format!("missing field '{key}'")))?
        .as_str()
        .ok_or_else(|| malformed(format!("field '{key}' must be a string")))
}

fn get_table(obj: &Map<String, Value>) -> Result<Vec<Letter>, RuleError> {
    let arr = obj
        .get("table")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("form 'table' needs an array field 'table'"))?;
    arr.iter()
        .enumerate()
        .map(|(index, v)| {
            let n = v
                .as_u64()
                .ok_or_else(|| malformed(format!("table entry {index} is not an integer")))?;
            Letter::try_from(n).map_err(|_| RuleError::TableEntryOutOfRange {
                index,
                letter: u32::try_from(n).unwrap_or(u32::MAX),
                q: 0,
            })
        })
        .collect()
}

fn get_terms(obj: &Map<String, Value>, dims: usize) -> Result<Vec<(Vec<i32>, u32)>, RuleError> {
    let arr = obj
        .get("additive")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("form 'additive' needs an array field 'additive'"))?;
    arr.iter()
        .enumerate()
        .map(|(k, term)| {
            let term = term
                .as_object()
                .ok_or_else(|| malformed(format!("additive term {k} is not an object")))?;
            let coord = term
                .get("coord")
                .and_then(Value::as_array)
                .filter(|c| c.len() == dims)
                .ok_or_else(|| {
                    malformed(format!(
                        "additive term {k}: 'coord' must hold {dims} integers"
                    ))
                })?
                .iter()
                .map(|c| c.as_i64().and_then(|c| i32::try_from(c).ok()))
                .collect::<Option<Vec<i32>>>()
                .ok_or_else(|| malformed(format!("additive term {k}: non-integer coordinate")))?;
            let coef = get_u32(term, "coef")?;
            Ok((coord, coef))
        })
        .collect()
}

fn parse_value(v: &Value) -> Result<RuleSpec, RuleError> {
    let obj = v
        .as_object()
        .ok_or_else(|| malformed("a rule document must be a JSON object"))?;
    let dimension = get_u32(obj, "dimension")?;
    let q = get_u32(obj, "q")?;
    let form = get_str(obj, "form")?;
    match dimension {
        2 => {
            if form == "extension" {
                let nested = obj
                    .get("extension")
                    .ok_or_else(|| malformed("form 'extension' needs a nested rule 'extension'"))?;
                return match parse_value(nested)? {
                    RuleSpec::OneD(inner) => {
                        let r = get_u32(obj, "r")?;
                        if inner.q() != q || inner.r() != r {
                            return Err(malformed(
                                "extension q and r must match the nested one-dimensional rule",
                            ));
                        }
                        Ok(RuleSpec::TwoD(LocalRule2D::extension(inner)))
                    }
                    RuleSpec::TwoD(_) => Err(malformed(
                        "the nested extension rule must be one-dimensional",
                    )),
                };
            }
            let r = get_u32(obj, "r")?;
            let rule = match form {
                "table" => LocalRule2D::table(q, r, get_table(obj)?).map_err(|e| with_q(e, q))?,
                "additive" => {
                    let terms = get_terms(obj, 2)?
                        .into_iter()
                        .map(|(c, coef)| (Coord::new(c[0], c[1]), coef));
                    LocalRule2D::additive(q, r, terms)?
                }
                "builtin" => {
                    let name = obj
                        .get("builtin")
                        .and_then(Value::as_object)
                        .ok_or_else(|| malformed("form 'builtin' needs an object field 'builtin'"))
                        .and_then(|b| get_str(b, "name"))?;
                    let b = Builtin::from_name(name)?;
                    if q != 2 {
                        return Err(malformed(format!("builtin {b} is defined over q = 2 only")));
                    }
                    b.rule(r)?
                }
                other => return Err(malformed(format!("unknown form '{other}'"))),
            };
            Ok(RuleSpec::TwoD(rule))
        }
        1 => {
            let r = get_u32(obj, "r")?;
            let rule = match form {
                "table" => LocalRule1D::table(q, r, get_table(obj)?).map_err(|e| with_q(e, q))?,
                "additive" => {
                    let terms: Vec<(i32, u32)> = get_terms(obj, 1)?
                        .into_iter()
                        .map(|(c, coef)| (c[0], coef))
                        .collect();
                    LocalRule1D::additive(q, r, &terms)?
                }
                other => {
                    return Err(malformed(format!(
                        "form '{other}' is not available for one-dimensional rules"
                    )))
                }
            };
            Ok(RuleSpec::OneD(rule))
        }
        d => Err(malformed(format!("dimension must be 1 or 2, got {d}"))),
    }
}

fn with_q(e: RuleError, q: u32) -> RuleError {
    match e {
        RuleError::TableEntryOutOfRange { index, letter, .. } => {
            RuleError::TableEntryOutOfRange { index, letter, q }
        }
        e => e,
    }
}

pub fn parse_rule(text: &str) -> Result<RuleSpec, RuleError> {
    let v: Value = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
    parse_value(&v)
}

fn one_d_value(rule: &LocalRule1D) -> Value {
    json!({
        "dimension": 1,
        "q": rule.q(),
        "r": rule.r(),
        "form": "table",
        "table": rule.entries(),
    })
}

/// Normalised JSON value of a rule.
pub fn rule_value(spec: &RuleSpec) -> Value {
    match spec {
        RuleSpec::OneD(rule) => one_d_value(rule),
        RuleSpec::TwoD(rule) => {
            let mut v = json!({"dimension": 2, "q": rule.q(), "r": rule.r()});
            let obj = v.as_object_mut().expect("object literal");
            match rule.form() {
                RuleForm::Table(t) => {
                    obj.insert("form".into(), json!("table"));
                    obj.insert("table".into(), json!(t));
                }
                RuleForm::Additive(terms) => {
                    obj.insert("form".into(), json!("additive"));
                    let terms: Vec<Value> = terms
                        .iter()
                        .map(|(c, k)| json!({"coord": [c.i, c.j], "coef": k}))
                        .collect();
                    obj.insert("additive".into(), Value::Array(terms));
                }
                RuleForm::Extension(inner) => {
                    obj.insert("form".into(), json!("extension"));
                    obj.insert("extension".into(), one_d_value(inner));
                }
            }
            v
        }
    }
}

pub fn serialize_rule(spec: &RuleSpec) -> String {
    rule_value(spec).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::builtin;

    #[test]
    fn builtin_document() {
        let doc =
            r#"{"dimension": 2, "q": 2, "r": 1, "form": "builtin", "builtin": {"name": "F1"}}"#;
        let spec = parse_rule(doc).unwrap();
        assert_eq!(spec, RuleSpec::TwoD(builtin("F1", 1).unwrap()));
        assert_eq!(
            serialize_rule(&spec),
            r#"{"additive":[{"coef":1,"coord":[1,0]}],"dimension":2,"form":"additive","q":2,"r":1}"#
        );
    }

    #[test]
    fn table_lengths() {
        let mk = |n: usize| {
            let table = vec![0; n];
            json!({"dimension": 2, "q": 2, "r": 1, "form": "table", "table": table}).to_string()
        };
        assert!(parse_rule(&mk(512)).is_ok());
        assert_eq!(
            parse_rule(&mk(511)),
            Err(RuleError::WrongTableLength {
                expected: 512,
                found: 511
            })
        );
    }

    #[test]
    fn distinct_diagnostics() {
        let additive = |q: u32, coord: [i32; 2], coef: u32| {
            json!({"dimension": 2, "q": q, "r": 1, "form": "additive",
                   "additive": [{"coord": coord, "coef": coef}]})
            .to_string()
        };
        assert_eq!(
            parse_rule(&additive(4, [1, 0], 1)),
            Err(RuleError::NonPrimeField(4))
        );
        assert!(matches!(
            parse_rule(&additive(3, [1, 0], 0)),
            Err(RuleError::BadCoefficient { coef: 0, .. })
        ));
        assert!(matches!(
            parse_rule(&additive(3, [1, 0], 3)),
            Err(RuleError::BadCoefficient { coef: 3, .. })
        ));
        assert!(matches!(
            parse_rule(&additive(3, [0, 2], 1)),
            Err(RuleError::CoordOutsideNeighborhood { .. })
        ));
        assert!(matches!(
            parse_rule("{not json"),
            Err(RuleError::Malformed(_))
        ));
        assert!(matches!(
            parse_rule(r#"{"dimension": 3, "q": 2, "r": 1, "form": "table"}"#),
            Err(RuleError::Malformed(_))
        ));
        assert_eq!(
            parse_rule(r#"{"dimension":2,"q":2,"r":1,"form":"builtin","builtin":{"name":"F13"}}"#),
            Err(RuleError::AmbiguousBuiltin)
        );
        let bad_entry = json!({"dimension": 1, "q": 2, "r": 1, "form": "table",
                               "table": [0, 1, 2, 0, 0, 0, 0, 0]})
        .to_string();
        assert_eq!(
            parse_rule(&bad_entry),
            Err(RuleError::TableEntryOutOfRange {
                index: 2,
                letter: 2,
                q: 2
            })
        );
    }

    #[test]
    fn extension_round_trip() {
        let doc = r#"{"dimension": 2, "q": 2, "r": 1, "form": "extension",
            "extension": {"dimension": 1, "q": 2, "r": 1, "form": "additive",
                          "additive": [{"coord": [-1], "coef": 1}, {"coord": [1], "coef": 1}]}}"#;
        let spec = parse_rule(doc).unwrap();
        let text = serialize_rule(&spec);
        assert_eq!(parse_rule(&text).unwrap(), spec);
        assert_eq!(serialize_rule(&parse_rule(&text).unwrap()), text);
    }

    #[test]
    fn additive_serialisation_is_canonical() {
        let doc = r#"{"dimension": 2, "q": 3, "r": 1, "form": "additive",
            "additive": [{"coord": [1, 1], "coef": 2}, {"coord": [-1, 0], "coef": 1}]}"#;
        let text = serialize_rule(&parse_rule(doc).unwrap());
        assert!(text.find("[-1,0]").unwrap() < text.find("[1,1]").unwrap());
    }
}
