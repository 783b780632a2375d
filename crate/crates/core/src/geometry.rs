use serde::{Deserialize, Serialize};

use crate::num::Scalar;

/// Position in meters. Deployments are planar so `z` stays zero, but it is
/// carried through messages.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Scalar> Point<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn planar(x: T, y: T) -> Self {
        Self { x, y, z: T::zero() }
    }

    pub fn distance_sq(&self, other: &Self) -> T {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }

    pub fn distance(&self, other: &Self) -> T {
        self.distance_sq(other).sqrt()
    }
}
