//! Placing a recovered human mesh into the world frame.
//!
//! Mesh files are expected to have their origin at the body's waist (root
//! joint), with the y and z axes flipped relative to the world.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{rot_x, rotation_error, PoseSE3};

/// Rotation about the mesh x axis that aligns the body frame with the world.
pub const BODY_FLIP_DEG: f64 = 180.0;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mesh {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let m = Mesh { vertices, faces };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if let Some(f) = self.faces.iter().find(|f| f.iter().any(|&i| i >= n)) {
            return Err(Error::InvalidInput(format!(
                "face {f:?} references a vertex beyond {n}"
            )));
        }
        Ok(())
    }

    pub fn centroid(&self) -> Option<Vector3<f64>> {
        if self.vertices.is_empty() {
            return None;
        }
        let sum: Vector3<f64> = self.vertices.iter().sum();
        Some(sum / self.vertices.len() as f64)
    }
}

/// Human-to-world transform: rotation `camera_rotation * Rx(180)`,
/// translation at the human's world center point.
pub fn human_to_world(camera_rotation: &Matrix3<f64>, center_world: &Vector3<f64>) -> Result<PoseSE3> {
    let err = rotation_error(camera_rotation);
    if !(err < 1e-6) {
        return Err(Error::InvalidRotation(err));
    }
    Ok(PoseSE3::new(
        camera_rotation * rot_x(BODY_FLIP_DEG),
        *center_world,
    ))
}

pub fn transform_mesh(mesh: &Mesh, pose: &PoseSE3) -> Mesh {
    Mesh {
        vertices: mesh.vertices.iter().map(|v| pose.transform(v)).collect(),
        faces: mesh.faces.clone(),
    }
}
