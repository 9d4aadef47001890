//! `f64` fields that may be NaN: written as JSON `null` and read back as NaN.

use serde::{Deserialize, Deserializer, Serializer};

pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_none()
    }
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[cfg(test)]
mod tests {
    use serde::{Deserialize, Serialize};

    #[derive(Serialize, Deserialize)]
    struct Row {
        #[serde(with = "super")]
        x: f64,
    }

    #[test]
    fn nan_round_trips_through_null() {
        let text = serde_json::to_string(&Row { x: f64::NAN }).unwrap();
        assert_eq!(text, r#"{"x":null}"#);
        assert!(serde_json::from_str::<Row>(&text).unwrap().x.is_nan());
        assert_eq!(serde_json::from_str::<Row>(r#"{"x":1.5}"#).unwrap().x, 1.5);
    }
}
