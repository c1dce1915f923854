//! Shared pieces of the JSON report schema.

use serde::{Deserialize, Serialize};

/// Version stamped into every JSON report and trace header.
pub const SCHEMA_VERSION: u32 = 1;

/// Serde adapter for `f64` fields that may legitimately be `±inf`.
///
/// Finite values are plain JSON numbers; `inf`, `-inf` and `nan` become strings.
pub mod extended_float {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: serde::Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a number: {other:?}"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize, Deserialize, Debug, PartialEq)]
    struct Holder {
        #[serde(with = "extended_float")]
        v: f64,
    }

    #[test]
    fn non_finite_values_survive_json() {
        for v in [0.5, f64::INFINITY, f64::NEG_INFINITY] {
            let s = serde_json::to_string(&Holder { v }).unwrap();
            assert_eq!(serde_json::from_str::<Holder>(&s).unwrap(), Holder { v });
        }
        assert_eq!(serde_json::to_string(&Holder { v: f64::INFINITY }).unwrap(), r#"{"v":"inf"}"#);
        assert!(serde_json::from_str::<Holder>(r#"{"v":"big"}"#).is_err());
    }
}
