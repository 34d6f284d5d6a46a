use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;

use dynscene_core::placement::{human_to_world, transform_mesh};
use dynscene_core::Mesh;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn placement_preserves_vertex_distances(
        verts in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 3..30),
        euler in prop::array::uniform3(-3.0f64..3.0),
        center in prop::array::uniform3(-10.0f64..10.0),
    ) {
        let n = verts.len();
        let mesh = Mesh::new(verts.into_iter().map(Vector3::from).collect(), (0..n - 2).map(|i| [i, i + 1, i + 2]).collect()).unwrap();
        let r = UnitQuaternion::from_euler_angles(euler[0], euler[1], euler[2]).to_rotation_matrix().into_inner();
        let pose = human_to_world(&r, &Vector3::from(center)).unwrap();
        let placed = transform_mesh(&mesh, &pose);
        prop_assert_eq!(&placed.faces, &mesh.faces);
        for i in 0..n {
            for j in i + 1..n {
                let before = (mesh.vertices[i] - mesh.vertices[j]).norm();
                let after = (placed.vertices[i] - placed.vertices[j]).norm();
                prop_assert!((before - after).abs() < 1e-9);
            }
        }
        prop_assert!((pose.rotation.determinant() - 1.0).abs() < 1e-9);
    }
}
