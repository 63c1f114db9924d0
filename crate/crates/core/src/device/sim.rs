use std::sync::Arc;

use super::{check_action, AtomicAction, Clock, Device, DeviceError, DeviceObservation, VirtualClock, WAIT_DURATION};
use crate::condition::WorldFacts;
use crate::simenv::{FaultPolicy, World, WorldSpec};

/// A device backed by the simulated world. Waits advance the clock instead
/// of blocking when it is virtual (the default).
pub struct SimDevice {
    world: World,
    clock: Arc<dyn Clock>,
}

impl SimDevice {
    pub fn new(spec: WorldSpec, policy: FaultPolicy) -> Self {
        SimDevice { world: World::new(spec, policy), clock: Arc::new(VirtualClock::new()) }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn world(&self) -> &World {
        &self.world
    }
}

impl Device for SimDevice {
    fn execute(&mut self, action: &AtomicAction) -> Result<(), DeviceError> {
        check_action(action, self.screen_size())?;
        if let AtomicAction::Wait = action {
            self.clock.sleep(WAIT_DURATION);
        }
        self.world.step(action);
        Ok(())
    }

    fn observe(&mut self) -> Result<DeviceObservation, DeviceError> {
        Ok(DeviceObservation {
            screenshot: self.world.render().png,
            foreground_app: Some(self.world.foreground_app().to_string()),
            timestamp_ms: self.clock.now_ms(),
        })
    }

    fn screen_size(&self) -> (u32, u32) {
        self.world.spec().screen_size
    }

    fn facts(&self) -> Option<WorldFacts> {
        Some(self.world.facts())
    }
}
