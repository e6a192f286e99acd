use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::Polygon;

/// Objects drawn on one image. Predictions use the same shape with `confidence` set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub image: String,
    pub width: usize,
    pub height: usize,
    pub objects: Vec<AnnotatedObject>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedObject {
    pub label: String,
    pub polygon: Polygon,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    /// Difficult truths are neither required nor penalized.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficult: Option<bool>,
}

impl AnnotatedObject {
    pub fn is_difficult(&self) -> bool {
        self.difficult.unwrap_or(false)
    }

    /// Ranking score; objects without one rank as certain.
    pub fn score(&self) -> f64 {
        self.confidence.unwrap_or(1.0)
    }
}

impl Annotation {
    pub fn empty(image: impl Into<String>, width: usize, height: usize) -> Self {
        Annotation {
            image: image.into(),
            width,
            height,
            objects: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("annotation serializes")
    }

    /// Validates a parsed JSON value against the schema, naming the offending field.
    pub fn from_value(v: &Value) -> std::result::Result<Self, String> {
        let obj = v.as_object().ok_or("annotation: expected a JSON object")?;
        let image = obj
            .get("image")
            .ok_or("image: missing field")?
            .as_str()
            .ok_or("image: expected a string")?
            .to_string();
        let width = dim(obj.get("width"), "width")?;
        let height = dim(obj.get("height"), "height")?;
        let items = obj
            .get("objects")
            .ok_or("objects: missing field")?
            .as_array()
            .ok_or("objects: expected an array")?;
        let mut objects = Vec::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            let o = item
                .as_object()
                .ok_or_else(|| format!("objects[{i}]: expected an object"))?;
            let label = o
                .get("label")
                .ok_or_else(|| format!("objects[{i}].label: missing field"))?
                .as_str()
                .ok_or_else(|| format!("objects[{i}].label: expected a string"))?;
            if label.is_empty() {
                return Err(format!("objects[{i}].label: must not be empty"));
            }
            let pts = o
                .get("polygon")
                .ok_or_else(|| format!("objects[{i}].polygon: missing field"))?
                .as_array()
                .ok_or_else(|| {
                    format!("objects[{i}].polygon: expected an array of [x, y] pairs")
                })?;
            if pts.len() < 3 {
                return Err(format!(
                    "objects[{i}].polygon: needs at least 3 points, got {}",
                    pts.len()
                ));
            }
            let mut points = Vec::with_capacity(pts.len());
            for (j, p) in pts.iter().enumerate() {
                let pair = p
                    .as_array()
                    .filter(|a| a.len() == 2)
                    .ok_or_else(|| format!("objects[{i}].polygon[{j}]: expected an [x, y] pair"))?;
                let x = pair[0]
                    .as_f64()
                    .ok_or_else(|| format!("objects[{i}].polygon[{j}][0]: expected a number"))?;
                let y = pair[1]
                    .as_f64()
                    .ok_or_else(|| format!("objects[{i}].polygon[{j}][1]: expected a number"))?;
                if x < 0.0 || y < 0.0 || x > width as f64 || y > height as f64 {
                    return Err(format!(
                        "objects[{i}].polygon[{j}]: point ({x}, {y}) outside the {width}x{height} image"
                    ));
                }
                points.push([x, y]);
            }
            let confidence = match o.get("confidence") {
                None | Some(Value::Null) => None,
                Some(c) => {
                    let c = c
                        .as_f64()
                        .ok_or_else(|| format!("objects[{i}].confidence: expected a number"))?;
                    if !c.is_finite() {
                        return Err(format!("objects[{i}].confidence: must be finite"));
                    }
                    Some(c)
                }
            };
            let difficult = match o.get("difficult") {
                None | Some(Value::Null) => None,
                Some(d) => Some(
                    d.as_bool()
                        .ok_or_else(|| format!("objects[{i}].difficult: expected a boolean"))?,
                ),
            };
            objects.push(AnnotatedObject {
                label: label.to_string(),
                polygon: Polygon::new(points),
                confidence,
                difficult,
            });
        }
        Ok(Annotation {
            image,
            width,
            height,
            objects,
        })
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let v: Value =
            serde_json::from_str(text).map_err(|e| Error::format(path, e.to_string()))?;
        Annotation::from_value(&v).map_err(|reason| Error::format(path, reason))
    }

    /// Reads a file holding one annotation object or an array of them.
    pub fn load_all(path: &Path) -> Result<Vec<Annotation>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let v: Value =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        match &v {
            Value::Array(items) => items
                .iter()
                .enumerate()
                .map(|(i, item)| {
                    Annotation::from_value(item)
                        .map_err(|r| Error::format(path, format!("[{i}] {r}")))
                })
                .collect(),
            _ => Ok(vec![
                Annotation::from_value(&v).map_err(|r| Error::format(path, r))?
            ]),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    /// Same annotation with every label replaced by `label`.
    pub fn relabeled(&self, label: &str) -> Annotation {
        let mut out = self.clone();
        for o in &mut out.objects {
            o.label = label.to_string();
        }
        out
    }
}

fn dim(v: Option<&Value>, name: &str) -> std::result::Result<usize, String> {
    let v = v.ok_or_else(|| format!("{name}: missing field"))?;
    v.as_u64()
        .filter(|&d| d > 0)
        .map(|d| d as usize)
        .ok_or_else(|| format!("{name}: expected a positive integer"))
}
