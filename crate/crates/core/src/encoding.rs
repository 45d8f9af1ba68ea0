//! Canonical JSON and the byte-field codecs shared by every wire type.
//!
//! Canonical form: object keys sorted by byte order, no insignificant
//! whitespace, numbers in serde_json's shortest round-trip form. Byte fields
//! are standard base64 (padded); digests and key fingerprints are lowercase
//! hex. Decoders are strict so that one encoded value has exactly one
//! textual form.

use std::io::Write;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::Serialize;
use serde_json::Value;

/// Serializes `value` into its canonical JSON bytes.
pub fn canonical_encode<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let tree = serde_json::to_value(value).expect("wire types always serialize to JSON");
    let mut out = Vec::with_capacity(256);
    write_canonical(&tree, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut Vec<u8>) {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            entries.sort_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
            out.push(b'{');
            for (i, (k, v)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                serde_json::to_writer(&mut *out, k).expect("string keys serialize");
                out.push(b':');
                write_canonical(v, out);
            }
            out.push(b'}');
        }
        Value::Array(items) => {
            out.push(b'[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_canonical(v, out);
            }
            out.push(b']');
        }
        scalar => {
            out.write_all(serde_json::to_string(scalar).expect("scalar").as_bytes())
                .expect("vec write");
        }
    }
}

pub fn b64_encode(bytes: &[u8]) -> String {
    STANDARD.encode(bytes)
}

pub fn b64_decode(text: &str) -> Result<Vec<u8>, base64::DecodeError> {
    STANDARD.decode(text)
}

/// Lowercase hex.
pub fn hex_encode(bytes: &[u8]) -> String {
    hex::encode(bytes)
}

/// Decodes lowercase hex only; uppercase digits are rejected so that a
/// single changed character always changes the decoded bytes.
pub fn hex_decode(text: &str) -> Result<Vec<u8>, String> {
    if let Some(c) = text.chars().find(|c| c.is_ascii_uppercase()) {
        return Err(format!("uppercase hex digit {c:?}"));
    }
    hex::decode(text).map_err(|e| e.to_string())
}

/// `#[serde(with = "b64")]` for `Vec<u8>` fields.
pub mod b64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::b64_encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        super::b64_decode(&text).map_err(serde::de::Error::custom)
    }
}

/// `#[serde(with = "b64_array")]` for fixed-size byte arrays.
pub mod b64_array {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer, const N: usize>(bytes: &[u8; N], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::b64_encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(d: D) -> Result<[u8; N], D::Error> {
        let text = String::deserialize(d)?;
        let raw = super::b64_decode(&text).map_err(serde::de::Error::custom)?;
        raw.as_slice()
            .try_into()
            .map_err(|_| serde::de::Error::custom(format!("expected {N} bytes, got {}", raw.len())))
    }
}

/// `#[serde(with = "hex_bytes")]` for variable-length hex fields.
pub mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::hex_encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        super::hex_decode(&text).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_are_sorted_and_compact() {
        let v = json!({"b": 1, "a": {"z": [1, 2], "y": "s"}, "c": null});
        assert_eq!(canonical_encode(&v), br#"{"a":{"y":"s","z":[1,2]},"b":1,"c":null}"#);
    }

    #[test]
    fn field_order_does_not_matter() {
        #[derive(Serialize)]
        struct A {
            x: u8,
            y: u8,
        }
        #[derive(Serialize)]
        struct B {
            y: u8,
            x: u8,
        }
        assert_eq!(canonical_encode(&A { x: 1, y: 2 }), canonical_encode(&B { y: 2, x: 1 }));
    }

    #[test]
    fn floats_use_shortest_form() {
        assert_eq!(canonical_encode(&json!({"v": 36.6})), br#"{"v":36.6}"#);
        assert_eq!(canonical_encode(&json!({"v": 0.1_f64 + 0.2})), br#"{"v":0.30000000000000004}"#);
    }

    #[test]
    fn hex_rejects_uppercase() {
        assert_eq!(hex_decode("0aff").unwrap(), vec![0x0a, 0xff]);
        assert!(hex_decode("0aFF").is_err());
    }

    #[test]
    fn base64_rejects_noncanonical_trailing_bits() {
        assert_eq!(b64_decode("AA==").unwrap(), vec![0]);
        assert!(b64_decode("AB==").is_err());
    }
}
