//! Euler angles, rigid transforms and trajectory accumulation.
//!
//! cargo run --example geometry_basics

use freehand_recon::geometry::{
    accumulate_trajectory, chain_poses, compose_poses, euler_to_rotation, invert_pose, pose_to_matrix,
    rotation_to_euler, EulerAngles, Pose6,
};

fn main() {
    let e = EulerAngles::new(30.0, -45.0, 120.0);
    let back = rotation_to_euler(&euler_to_rotation(e));
    println!("euler {e:?} -> matrix -> {back:?}");

    // near the singularity the decomposition pins rz to zero
    let g = rotation_to_euler(&euler_to_rotation(EulerAngles::new(10.0, 90.0, 25.0)));
    println!("gimbal case decomposes to {g:?}");

    let step = Pose6::new(0.1, 0.0, 0.5, 0.0, 0.0, 2.0);
    let poses = vec![step; 45];
    let traj = accumulate_trajectory(&poses);
    let end = traj.positions.last().unwrap();
    println!("45 steps of {step:?}");
    println!("  end position ({:.3}, {:.3}, {:.3})", end.x, end.y, end.z);
    println!("  chained pose {:?}", chain_poses(&poses));

    let round = compose_poses(&step, &invert_pose(&step));
    println!("step composed with its inverse: {:?}", round.to_array());
    println!("step as a matrix:\n{}", pose_to_matrix(&step).0);
}
