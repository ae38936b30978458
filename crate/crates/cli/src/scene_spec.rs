//! JSON scene descriptions with lengths in wavelengths.
//!
//! ```json
//! {"shapes": [{"kind": "disc", "center_wavelengths": [1.5, 2.0], "size_wavelengths": 1.2}]}
//! ```

use std::path::Path;

use efie_core::geometry::{DoiConfig, Point, Scene, ShapePrimitive};
use efie_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecKind {
    Disc,
    Square,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeSpec {
    pub kind: SpecKind,
    pub center_wavelengths: [f64; 2],
    /// Disc diameter or square width.
    pub size_wavelengths: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default)]
    pub shapes: Vec<ShapeSpec>,
}

impl SceneSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("scene spec {}: {e}", path.display())))
    }

    /// The three conductors of the reference field map: a square and two
    /// discs, each 1.2 wavelengths across.
    pub fn fig2() -> Self {
        let shape = |kind, x, y| ShapeSpec { kind, center_wavelengths: [x, y], size_wavelengths: 1.2 };
        SceneSpec {
            shapes: vec![
                shape(SpecKind::Square, -2.0, 1.5),
                shape(SpecKind::Disc, 1.5, 2.0),
                shape(SpecKind::Disc, 0.5, -2.0),
            ],
        }
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "fig2" => Ok(SceneSpec::fig2()),
            "empty" => Ok(SceneSpec { shapes: Vec::new() }),
            other => Err(Error::Config(format!("unknown built-in scene {other:?} (expected fig2 or empty)"))),
        }
    }

    pub fn to_scene(&self, doi: DoiConfig) -> Result<Scene> {
        let l = doi.wavelength;
        let shapes = self
            .shapes
            .iter()
            .map(|s| {
                let center = Point::new(s.center_wavelengths[0] * l, s.center_wavelengths[1] * l);
                let size = s.size_wavelengths * l;
                match s.kind {
                    SpecKind::Disc => ShapePrimitive::Disc { center, diameter: size },
                    SpecKind::Square => ShapePrimitive::Square { center, width: size },
                }
            })
            .collect();
        Scene::from_shapes(doi, shapes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_wavelength_units() {
        let spec: SceneSpec = serde_json::from_str(
            r#"{"shapes": [{"kind": "square", "center_wavelengths": [1.0, -1.0], "size_wavelengths": 0.5}]}"#,
        )
        .unwrap();
        let scene = spec.to_scene(DoiConfig::new(0.125)).unwrap();
        assert_eq!(scene.shapes, vec![ShapePrimitive::Square { center: Point::new(0.125, -0.125), width: 0.0625 }]);
    }

    #[test]
    fn rejects_unknown_fields() {
        assert!(serde_json::from_str::<SceneSpec>(r#"{"shapes": [], "radius": 3}"#).is_err());
    }

    #[test]
    fn fig2_objects_are_disjoint_and_inside() {
        let scene = SceneSpec::fig2().to_scene(DoiConfig::new(0.125)).unwrap();
        assert_eq!(scene.shapes.len(), 3);
        for (i, a) in scene.shapes.iter().enumerate() {
            for b in &scene.shapes[i + 1..] {
                assert!(a.gap(b) > 0.0);
            }
        }
    }
}
