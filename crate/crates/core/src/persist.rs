//! Number formatting shared by every CSV/JSON writer: 17 significant
//! digits, so that files round-trip to the same `f64`.

use serde::ser::{Serialize, Serializer};
use serde_json::value::RawValue;

pub(crate) fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// An `f64` that serializes with 17 significant digits, or `null` when not finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct F17(pub f64);

impl Serialize for F17 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return serializer.serialize_none();
        }
        let raw = RawValue::from_string(fmt17(self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(serializer)
    }
}

pub(crate) fn f17_vec(v: &[f64]) -> Vec<F17> {
    v.iter().copied().map(F17).collect()
}

pub(crate) fn f17_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<F17>> {
    m.row_iter()
        .map(|r| r.iter().copied().map(F17).collect())
        .collect()
}
