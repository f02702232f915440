//! Mesh and camera types, OBJ ingestion, synthetic hands, and the six-view
//! vertex/camera transforms.

mod camera;
mod linalg;
mod mesh;
pub mod obj;
pub mod synth;
mod view;

pub use camera::{CameraPose, Projection};
pub use linalg::{rot_x, rot_y, rot_z, Mat3, Vec3};
pub use mesh::{HandMesh, Handedness, KEYPOINT_COUNT, MANO_VERTEX_COUNT};
pub use obj::{load_obj, parse_obj, save_obj};
pub use synth::{synth_hand, synth_hand_detailed, SynthHand};
pub use view::{transform_to_view, ViewId};
