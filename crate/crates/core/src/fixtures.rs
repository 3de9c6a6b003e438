//! Small reference networks used by tests, benches and the bundled configs.

use std::f64::consts::PI;

use crate::beam::BeamSpec;
use crate::interp::Series;
use crate::kinematics::*;
use crate::network::{End, NetworkSpec, NodeKind, NodeRecord};

/// Rotation about e₃ taking e₁ to the direction at angle `theta` in the (e₁, e₂) plane.
pub fn planar(theta: f64) -> Mat3 {
    exp_so3(&Vec3::new(0.0, 0.0, theta))
}

pub fn unit_beam(rotation: Mat3) -> BeamSpec {
    BeamSpec::uniform(1.0, Mat6::identity(), Mat6::identity(), rotation)
}

/// A-shaped topology: beams 1, 2 leave node 1 for nodes 2, 3; beam 3 joins 2 → 3;
/// beams 4, 5 run from nodes 2, 3 to the free nodes 4, 5. Zero nodal data.
pub fn a_network(beams: Vec<BeamSpec>) -> NetworkSpec {
    assert_eq!(beams.len(), 5, "the A-network has five beams");
    let z = Series::zeros;
    use End::*;
    NetworkSpec {
        beams,
        nodes: vec![
            NodeRecord::new(NodeKind::MultipleKirchhoff, &[(0, Start), (1, Start)], z()),
            NodeRecord::new(NodeKind::MultipleKirchhoff, &[(0, Finish), (2, Start), (3, Start)], z()),
            NodeRecord::new(NodeKind::MultipleKirchhoff, &[(1, Finish), (2, Finish), (4, Start)], z()),
            NodeRecord::new(NodeKind::SimpleNeumann, &[(3, Finish)], z()),
            NodeRecord::new(NodeKind::SimpleNeumann, &[(4, Finish)], z()),
        ],
    }
}

/// Undeformed directions of the planar A-network with unit beams (equilateral upper triangle).
pub fn a_network_angles() -> [f64; 5] {
    [-2.0 * PI / 3.0, -PI / 3.0, 0.0, -2.0 * PI / 3.0, -PI / 3.0]
}

/// A-network of unit beams with 𝐌 = 𝐂 = I (all speeds ±1).
pub fn unit_a_network() -> NetworkSpec {
    a_network(a_network_angles().iter().map(|&t| unit_beam(planar(t))).collect())
}

/// Chain of `edges` straight unit beams along e₁ with free ends.
pub fn path_network(edges: usize) -> NetworkSpec {
    let z = Series::zeros;
    let beams = vec![unit_beam(Mat3::identity()); edges];
    let mut nodes = vec![NodeRecord::new(NodeKind::SimpleNeumann, &[(0, End::Start)], z())];
    for i in 1..edges {
        nodes.push(NodeRecord::new(NodeKind::MultipleKirchhoff, &[(i - 1, End::Finish), (i, End::Start)], z()));
    }
    nodes.push(NodeRecord::new(NodeKind::SimpleNeumann, &[(edges - 1, End::Finish)], z()));
    NetworkSpec { beams, nodes }
}

/// `k` unit beams leaving a common center (node 1) towards free leaves.
pub fn star_network(k: usize) -> NetworkSpec {
    let z = Series::zeros;
    let beams = (0..k).map(|i| unit_beam(planar(2.0 * PI * i as f64 / k as f64))).collect();
    let center: Vec<(usize, End)> = (0..k).map(|i| (i, End::Start)).collect();
    let mut nodes = vec![NodeRecord::new(NodeKind::MultipleKirchhoff, &center, z())];
    nodes.extend((0..k).map(|i| NodeRecord::new(NodeKind::SimpleNeumann, &[(i, End::Finish)], z())));
    NetworkSpec { beams, nodes }
}
