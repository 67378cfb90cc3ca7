use super::SceneError;
use crate::geom::{Camera, Mat3, RigidTransform};
use crate::ViewId;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// On-disk camera record: row-major `K` (9 values) and row-major 4x4
/// world-to-camera matrix with last row `0 0 0 1`.
#[derive(Debug, Serialize, Deserialize)]
struct CameraFile {
    #[serde(rename = "K")]
    k: [f64; 9],
    #[serde(rename = "T_world_to_cam")]
    t_world_to_cam: Vec<f64>,
    width: u32,
    height: u32,
    view_id: u32,
}

pub fn load_camera(path: &Path) -> Result<Camera, SceneError> {
    let text = std::fs::read_to_string(path).map_err(|e| SceneError::io(path, e))?;
    let file: CameraFile =
        serde_json::from_str(&text).map_err(|e| SceneError::parse(path, e))?;
    if file.t_world_to_cam.len() != 16 {
        return Err(SceneError::parse(
            path,
            format!("T_world_to_cam has {} entries, expected 16", file.t_world_to_cam.len()),
        ));
    }
    let bottom = &file.t_world_to_cam[12..16];
    if bottom != [0.0, 0.0, 0.0, 1.0] {
        return Err(SceneError::parse(path, "last row of T_world_to_cam must be 0 0 0 1"));
    }
    let mut m = [0.0f64; 16];
    m.copy_from_slice(&file.t_world_to_cam);
    let k = Mat3::new(
        file.k[0], file.k[1], file.k[2], file.k[3], file.k[4], file.k[5], file.k[6], file.k[7],
        file.k[8],
    );
    Camera::new(
        k,
        RigidTransform::from_mat4_row_major(&m),
        file.width,
        file.height,
        ViewId(file.view_id),
    )
    .map_err(|e| SceneError::Geom {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn save_camera(camera: &Camera, path: &Path) -> Result<(), SceneError> {
    let k = &camera.intrinsics;
    let file = CameraFile {
        k: [
            k[(0, 0)],
            k[(0, 1)],
            k[(0, 2)],
            k[(1, 0)],
            k[(1, 1)],
            k[(1, 2)],
            k[(2, 0)],
            k[(2, 1)],
            k[(2, 2)],
        ],
        t_world_to_cam: camera.world_to_cam.to_mat4_row_major().to_vec(),
        width: camera.width,
        height: camera.height,
        view_id: camera.view_id.0,
    };
    let text = serde_json::to_string_pretty(&file).expect("camera serializes");
    std::fs::write(path, text).map_err(|e| SceneError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;

    #[test]
    fn camera_round_trip() {
        let dir = std::env::temp_dir().join("mvpose_cam_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("cam.json");
        let pose = crate::synth::look_at(Vec3::new(100.0, -200.0, 300.0), Vec3::zeros());
        let camera = Camera::simple(444.0, 640, 480, pose, ViewId(7)).unwrap();
        save_camera(&camera, &path).unwrap();
        let loaded = load_camera(&path).unwrap();
        assert_eq!(loaded.view_id, ViewId(7));
        assert_eq!(loaded.width, 640);
        assert!((loaded.intrinsics - camera.intrinsics).norm() < 1e-12);
        assert!(
            (loaded.world_to_cam.rotation - camera.world_to_cam.rotation).norm() < 1e-12
        );
    }

    #[test]
    fn bad_bottom_row_is_rejected() {
        let dir = std::env::temp_dir().join("mvpose_cam_io_test2");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.json");
        std::fs::write(
            &path,
            r#"{"K":[100,0,50,0,100,50,0,0,1],"T_world_to_cam":[1,0,0,0,0,1,0,0,0,0,1,0,0,0,0,2],"width":10,"height":10,"view_id":0}"#,
        )
        .unwrap();
        assert!(load_camera(&path).is_err());
    }
}
