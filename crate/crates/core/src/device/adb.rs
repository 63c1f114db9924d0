//! Real handsets, driven by spawning the `adb` executable.

use std::collections::BTreeMap;
use std::process::Command;
use std::sync::Arc;
use std::time::Duration;

use super::{check_action, AtomicAction, Clock, Device, DeviceError, DeviceObservation, SystemClock, DEFAULT_SETTLE, WAIT_DURATION};

/// Environment variable naming the device serial.
pub const ADB_SERIAL_VAR: &str = "MAPLE_ADB_SERIAL";

/// Runs one adb invocation (arguments after `adb`) and returns its stdout.
pub trait AdbTransport: Send + Sync {
    fn run(&self, args: &[String]) -> Result<Vec<u8>, DeviceError>;
}

#[derive(Debug, Clone)]
pub struct ProcessTransport {
    program: String,
}

impl Default for ProcessTransport {
    fn default() -> Self {
        ProcessTransport { program: "adb".into() }
    }
}

impl ProcessTransport {
    pub fn with_program(program: impl Into<String>) -> Self {
        ProcessTransport { program: program.into() }
    }
}

impl AdbTransport for ProcessTransport {
    fn run(&self, args: &[String]) -> Result<Vec<u8>, DeviceError> {
        let out = Command::new(&self.program)
            .args(args)
            .output()
            .map_err(|e| DeviceError::DeviceGone(format!("cannot run {}: {e}", self.program)))?;
        if !out.status.success() {
            return Err(DeviceError::DeviceGone(format!(
                "adb {} exited with {}: {}",
                args.join(" "),
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        Ok(out.stdout)
    }
}

/// Escapes text for `input text`: spaces become `%s`, shell
/// metacharacters are backslash-escaped.
pub fn escape_input_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            ' ' => out.push_str("%s"),
            '\\' | '"' | '\'' | '`' | '$' | '&' | '|' | ';' | '<' | '>' | '(' | ')' | '*' | '~' | '#' | '%' | '?' | '!' | '[' | ']' | '{' | '}' => {
                out.push('\\');
                out.push(c);
            }
            _ => out.push(c),
        }
    }
    out
}

/// Reads an app-name → package JSON object.
pub fn load_package_map(doc: &str) -> Result<BTreeMap<String, String>, DeviceError> {
    serde_json::from_str(doc).map_err(|e| DeviceError::InvalidAction(format!("package map: {e}")))
}

pub struct AdbDevice {
    transport: Box<dyn AdbTransport>,
    serial: Option<String>,
    packages: BTreeMap<String, String>,
    clock: Arc<dyn Clock>,
    settle: Duration,
    size: (u32, u32),
}

fn parse_wm_size(out: &str) -> Option<(u32, u32)> {
    // "Physical size: 1080x2400", possibly followed by "Override size: ..."
    let line = out.lines().rev().find(|l| l.contains("size:"))?;
    let (w, h) = line.rsplit(':').next()?.trim().split_once('x')?;
    Some((w.trim().parse().ok()?, h.trim().parse().ok()?))
}

impl AdbDevice {
    /// Opens a session: queries the screen size through the transport.
    pub fn connect(
        transport: impl AdbTransport + 'static,
        serial: Option<String>,
        packages: BTreeMap<String, String>,
    ) -> Result<Self, DeviceError> {
        let mut dev = AdbDevice {
            transport: Box::new(transport),
            serial,
            packages,
            clock: Arc::new(SystemClock),
            settle: DEFAULT_SETTLE,
            size: (0, 0),
        };
        let out = dev.adb(&["shell", "wm", "size"])?;
        dev.size = parse_wm_size(&String::from_utf8_lossy(&out))
            .ok_or_else(|| DeviceError::DeviceGone("cannot read screen size".into()))?;
        Ok(dev)
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_settle(mut self, settle: Duration) -> Self {
        self.settle = settle;
        self
    }

    fn adb(&self, args: &[&str]) -> Result<Vec<u8>, DeviceError> {
        let mut full: Vec<String> = Vec::new();
        if let Some(s) = &self.serial {
            full.extend(["-s".to_string(), s.clone()]);
        }
        full.extend(args.iter().map(|a| a.to_string()));
        self.transport.run(&full)
    }

    /// The adb arguments (after any `-s <serial>`) for an action; `None` for Wait.
    pub fn command_for(&self, action: &AtomicAction) -> Result<Option<Vec<String>>, DeviceError> {
        let s = |v: &[&str]| Some(v.iter().map(|a| a.to_string()).collect::<Vec<_>>());
        Ok(match action {
            AtomicAction::Tap { x, y } => s(&["shell", "input", "tap", &x.to_string(), &y.to_string()]),
            AtomicAction::Type { text } => s(&["shell", "input", "text", &escape_input_text(text)]),
            AtomicAction::Enter => s(&["shell", "input", "keyevent", "66"]),
            AtomicAction::Back => s(&["shell", "input", "keyevent", "4"]),
            AtomicAction::Home => s(&["shell", "input", "keyevent", "3"]),
            AtomicAction::SwitchApp => s(&["shell", "input", "keyevent", "187"]),
            AtomicAction::Swipe { x1, y1, x2, y2 } => s(&[
                "shell",
                "input",
                "swipe",
                &x1.to_string(),
                &y1.to_string(),
                &x2.to_string(),
                &y2.to_string(),
                "300",
            ]),
            AtomicAction::OpenApp { name } => {
                let package = self
                    .packages
                    .iter()
                    .find(|(k, _)| k.eq_ignore_ascii_case(name.trim()))
                    .map(|(_, v)| v.clone())
                    .ok_or_else(|| DeviceError::UnknownApp(name.clone()))?;
                s(&["shell", "monkey", "-p", &package, "-c", "android.intent.category.LAUNCHER", "1"])
            }
            AtomicAction::Wait => None,
        })
    }

    fn foreground(&self) -> Option<String> {
        let out = self.adb(&["shell", "dumpsys", "window"]).ok()?;
        let text = String::from_utf8_lossy(&out);
        let line = text.lines().find(|l| l.contains("mCurrentFocus"))?;
        let package = line.split_whitespace().find_map(|w| w.split_once('/').map(|(p, _)| p.to_string()))?;
        let name = self.packages.iter().find(|(_, p)| **p == package).map(|(n, _)| n.clone());
        Some(name.unwrap_or(package))
    }
}

impl Device for AdbDevice {
    fn execute(&mut self, action: &AtomicAction) -> Result<(), DeviceError> {
        check_action(action, self.size)?;
        match self.command_for(action)? {
            Some(args) => {
                let args: Vec<&str> = args.iter().map(String::as_str).collect();
                self.adb(&args)?;
            }
            None => self.clock.sleep(WAIT_DURATION),
        }
        self.clock.sleep(self.settle);
        Ok(())
    }

    fn observe(&mut self) -> Result<DeviceObservation, DeviceError> {
        let screenshot = self.adb(&["exec-out", "screencap", "-p"])?;
        if screenshot.is_empty() {
            return Err(DeviceError::DeviceGone("empty screenshot".into()));
        }
        Ok(DeviceObservation { screenshot, foreground_app: self.foreground(), timestamp_ms: self.clock.now_ms() })
    }

    fn screen_size(&self) -> (u32, u32) {
        self.size
    }
}
