//! Deterministic synthetic world and sensor streams.

pub mod route;
pub mod sensor;
pub mod trajectory;
pub mod world;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use route::Route;
pub use sensor::{sense, DetectorConfig, HeightStep};
pub use trajectory::{generate_drive, generate_trajectory, DriveConfig};
pub use world::{generate_world, BirthEvent, Corridor, DeathEvent, Occluder, Stretch, TruthFeature, WorldConfig, WorldTimeline};

/// Independent random streams derived from one scenario seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    World = 1,
    Occluders = 2,
    Trajectory = 3,
    Sensor = 4,
    Gnss = 5,
    InitialMap = 6,
}

/// A generator for one `(seed, week, purpose)` combination. Streams never
/// overlap, so adding draws to one purpose leaves the others untouched.
pub fn stream_rng(seed: u64, week: u32, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((week as u64) << 8) | purpose as u64);
    rng
}
