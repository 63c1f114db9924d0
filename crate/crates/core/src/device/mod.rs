//! The hands: the nine-action toolbox executed against a simulated world
//! or a real handset over ADB, behind one [`Device`] interface.

mod action;
mod adb;
mod clock;
mod sim;

pub use action::{ActionKind, ActionParseError, ActorCommand, AtomicAction};
pub use adb::{escape_input_text, load_package_map, AdbDevice, AdbTransport, ProcessTransport, ADB_SERIAL_VAR};
pub use clock::{Clock, SystemClock, VirtualClock};
pub use sim::SimDevice;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::condition::WorldFacts;

/// How long `Wait()` pauses.
pub const WAIT_DURATION: Duration = Duration::from_secs(10);
/// Default pause after each action on a real handset, letting the UI settle.
pub const DEFAULT_SETTLE: Duration = Duration::from_secs(2);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DeviceError {
    #[error("device unavailable: {0}")]
    DeviceGone(String),
    #[error("coordinates ({x}, {y}) are outside the {width}x{height} screen")]
    InvalidCoordinates { x: i32, y: i32, width: u32, height: u32 },
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("no package known for app {0:?}")]
    UnknownApp(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceObservation {
    #[serde(skip)]
    pub screenshot: Vec<u8>,
    pub foreground_app: Option<String>,
    /// Milliseconds on the device clock.
    pub timestamp_ms: u64,
}

pub trait Device {
    fn execute(&mut self, action: &AtomicAction) -> Result<(), DeviceError>;
    fn observe(&mut self) -> Result<DeviceObservation, DeviceError>;
    fn screen_size(&self) -> (u32, u32);

    /// Machine-checkable world state; only simulated devices have one.
    fn facts(&self) -> Option<WorldFacts> {
        None
    }
}

/// Structural validation plus the screen-bounds check shared by backends.
pub fn check_action(action: &AtomicAction, (width, height): (u32, u32)) -> Result<(), DeviceError> {
    let outside = |x: i32, y: i32| x < 0 || y < 0 || x as u32 >= width || y as u32 >= height;
    let points: Vec<(i32, i32)> = match *action {
        AtomicAction::Tap { x, y } => vec![(x, y)],
        AtomicAction::Swipe { x1, y1, x2, y2 } => vec![(x1, y1), (x2, y2)],
        _ => Vec::new(),
    };
    if let Some(&(x, y)) = points.iter().find(|(x, y)| outside(*x, *y)) {
        return Err(DeviceError::InvalidCoordinates { x, y, width, height });
    }
    action.validate().map_err(DeviceError::InvalidAction)
}
