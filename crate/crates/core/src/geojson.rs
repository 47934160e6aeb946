//! Minimal GeoJSON reading and writing on top of `serde_json`.

use std::path::Path;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::synth::Polygon;

/// Polygon exteriors from a FeatureCollection (or a single Feature).
/// `MultiPolygon` features contribute one polygon per part; the optional
/// string property `class` is carried over. Other geometries are skipped.
pub fn parse_polygons(text: &str) -> Result<Vec<Polygon>> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::Format(format!("geojson: {e}")))?;
    let features: Vec<&Value> = match doc.get("type").and_then(Value::as_str) {
        Some("FeatureCollection") => doc
            .get("features")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Format("geojson: FeatureCollection without features".into()))?
            .iter()
            .collect(),
        Some("Feature") => vec![&doc],
        other => return Err(Error::Format(format!("geojson: unsupported root type {other:?}"))),
    };
    let mut out = Vec::new();
    for f in features {
        let class = f
            .get("properties")
            .and_then(|p| p.get("class"))
            .and_then(Value::as_str)
            .map(str::to_owned);
        let Some(geom) = f.get("geometry").filter(|g| !g.is_null()) else {
            continue;
        };
        let coords = geom.get("coordinates");
        let rings: Vec<&Value> = match geom.get("type").and_then(Value::as_str) {
            Some("Polygon") => coords.and_then(Value::as_array).and_then(|r| r.first()).into_iter().collect(),
            Some("MultiPolygon") => coords
                .and_then(Value::as_array)
                .map(|parts| parts.iter().filter_map(|p| p.as_array().and_then(|r| r.first())).collect())
                .unwrap_or_default(),
            _ => continue,
        };
        for ring in rings {
            let mut pts = parse_ring(ring)?;
            if pts.len() > 1 && pts.first() == pts.last() {
                pts.pop();
            }
            out.push(Polygon {
                exterior: pts,
                class: class.clone(),
            });
        }
    }
    Ok(out)
}

fn parse_ring(ring: &Value) -> Result<Vec<[f64; 2]>> {
    ring.as_array()
        .ok_or_else(|| Error::Format("geojson: ring is not an array".into()))?
        .iter()
        .map(|p| {
            let xy = p.as_array().filter(|a| a.len() >= 2);
            match xy.and_then(|a| Some([a[0].as_f64()?, a[1].as_f64()?])) {
                Some(v) => Ok(v),
                None => Err(Error::Format(format!("geojson: bad position {p}"))),
            }
        })
        .collect()
}

pub fn load_polygons(path: impl AsRef<Path>) -> Result<Vec<Polygon>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_polygons(&text)
}

/// Polygon feature; the ring is closed on output.
pub fn polygon_feature(ring: &[[f64; 2]], properties: Map<String, Value>) -> Value {
    let mut coords: Vec<Value> = ring.iter().map(|p| json!([p[0], p[1]])).collect();
    if let (Some(a), Some(b)) = (ring.first(), ring.last()) {
        if a != b {
            coords.push(json!([a[0], a[1]]));
        }
    }
    feature(json!({"type": "Polygon", "coordinates": [coords]}), properties)
}

pub fn point_feature(p: [f64; 2], properties: Map<String, Value>) -> Value {
    feature(json!({"type": "Point", "coordinates": [p[0], p[1]]}), properties)
}

pub fn line_feature(line: &[[f64; 2]], properties: Map<String, Value>) -> Value {
    let coords: Vec<Value> = line.iter().map(|p| json!([p[0], p[1]])).collect();
    feature(json!({"type": "LineString", "coordinates": coords}), properties)
}

fn feature(geometry: Value, properties: Map<String, Value>) -> Value {
    json!({"type": "Feature", "geometry": geometry, "properties": properties})
}

pub fn feature_collection(features: Vec<Value>) -> Value {
    json!({"type": "FeatureCollection", "features": features})
}

pub fn write_collection(path: impl AsRef<Path>, features: Vec<Value>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&feature_collection(features))
        .map_err(|e| Error::Format(format!("geojson: {e}")))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
