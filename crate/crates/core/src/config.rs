//! Run configuration: a TOML file with `[device]`, `[scan]`, `[numerics]`
//! and `[outputs]` sections. Lengths and wavelengths in μm.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::bendmode::BendGeometry;
use crate::coupler::CouplerNumerics;
use crate::resonator::{wavelength_grid, GridSpec, ResonatorConfig};
use crate::waveguide::SlabGeometry;

pub const DEFAULT_LAMBDA_START: f64 = 1.015;
pub const DEFAULT_LAMBDA_STOP: f64 = 1.060;
pub const DEFAULT_LAMBDA_STEP: f64 = 2.5e-4;

const DEVICE_KEYS: [&str; 8] = ["n_c", "n_s", "n_b", "w_c", "w_s", "radius", "g1", "g2"];
const SCAN_KEYS: [&str; 3] = ["lambda_start", "lambda_stop", "lambda_step"];
const NUMERICS_KEYS: [&str; 9] = [
    "x_step",
    "z_step",
    "window_inner",
    "window_outer",
    "window_half_length",
    "n_bend_modes",
    "n_straight_modes",
    "bend_orders",
    "workers",
];
const OUTPUT_KEYS: [&str; 10] = [
    "spectrum",
    "fieldmap",
    "modes",
    "coupler",
    "grid_x_min",
    "grid_x_max",
    "grid_nx",
    "grid_z_min",
    "grid_z_max",
    "grid_nz",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    pub lambda_start: f64,
    pub lambda_stop: f64,
    pub lambda_step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub spectrum: PathBuf,
    pub fieldmap: PathBuf,
    pub modes: PathBuf,
    pub coupler: PathBuf,
    pub grid: GridSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub device: ResonatorConfig,
    pub scan: ScanConfig,
    pub outputs: OutputConfig,
    /// Worker threads; 0 lets the pool pick.
    pub workers: usize,
}

/// Every problem found in a config file, one per line.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub messages: Vec<String>,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.messages.join("\n"))
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    fn single(message: String) -> Self {
        ConfigError { messages: vec![message] }
    }

    /// True if some message mentions `key`.
    pub fn names(&self, key: &str) -> bool {
        self.messages.iter().any(|m| m.contains(&format!("`{key}`")))
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::single(format!("{}: cannot read: {e}", path.display())))?;
    parse_config(&text).map_err(|mut e| {
        for m in &mut e.messages {
            *m = format!("{}:{m}", path.display());
        }
        e
    })
}

/// Line number (1-based) of `key` inside `[section]`, for messages.
fn line_of(text: &str, section: &str, key: Option<&str>) -> usize {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if key.is_none() && current == section {
                return i + 1;
            }
            continue;
        }
        if let Some(key) = key {
            if current == section {
                let lhs = line.split('=').next().unwrap_or("").trim();
                if lhs == key {
                    return i + 1;
                }
            }
        }
    }
    0
}

struct Reader<'a> {
    text: &'a str,
    root: Table,
    errors: Vec<String>,
}

impl<'a> Reader<'a> {
    fn at(&self, section: &str, key: Option<&str>) -> String {
        match line_of(self.text, section, key) {
            0 => String::new(),
            n => format!("{n}: "),
        }
    }

    fn error(&mut self, section: &str, key: &str, message: impl std::fmt::Display) {
        let at = self.at(section, Some(key));
        self.errors.push(format!("{at}[{section}] `{key}`: {message}"));
    }

    fn section(&mut self, name: &str, known: &[&str]) -> Table {
        let table = match self.root.remove(name) {
            None => Table::new(),
            Some(Value::Table(t)) => t,
            Some(_) => {
                let at = self.at(name, None);
                self.errors.push(format!("{at}`{name}` must be a section"));
                Table::new()
            }
        };
        for key in table.keys() {
            if !known.contains(&key.as_str()) {
                let at = self.at(name, Some(key));
                self.errors.push(format!("{at}[{name}] unknown key `{key}`"));
            }
        }
        table
    }

    fn real(&mut self, table: &Table, section: &str, key: &str, default: Option<f64>) -> Option<f64> {
        match table.get(key) {
            None => {
                if default.is_none() {
                    self.errors.push(format!("[{section}] missing required key `{key}`"));
                }
                default
            }
            Some(Value::Float(v)) => Some(*v),
            Some(Value::Integer(v)) => Some(*v as f64),
            Some(other) => {
                self.error(section, key, format!("expected a number, found {}", other.type_str()));
                None
            }
        }
    }

    fn count(&mut self, table: &Table, section: &str, key: &str, default: usize) -> usize {
        match table.get(key) {
            None => default,
            Some(Value::Integer(v)) if *v >= 0 => *v as usize,
            Some(_) => {
                self.error(section, key, "expected a non-negative integer");
                default
            }
        }
    }

    fn path(&mut self, table: &Table, section: &str, key: &str, default: &str) -> PathBuf {
        match table.get(key) {
            None => PathBuf::from(default),
            Some(Value::String(s)) if !s.is_empty() => PathBuf::from(s),
            Some(_) => {
                self.error(section, key, "expected a non-empty string");
                PathBuf::from(default)
            }
        }
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::single(format!("syntax error: {e}")))?;
    let mut r = Reader { text, root, errors: Vec::new() };

    let device = r.section("device", &DEVICE_KEYS);
    let scan = r.section("scan", &SCAN_KEYS);
    let numerics = r.section("numerics", &NUMERICS_KEYS);
    let outputs = r.section("outputs", &OUTPUT_KEYS);
    let extra: Vec<String> = r.root.keys().cloned().collect();
    for key in extra {
        r.errors.push(format!("unknown top-level key or section `{key}`"));
    }

    let n_c = r.real(&device, "device", "n_c", None);
    let n_s = r.real(&device, "device", "n_s", None);
    let n_b = r.real(&device, "device", "n_b", None);
    let w_c = r.real(&device, "device", "w_c", None);
    let w_s = r.real(&device, "device", "w_s", None);
    let radius = r.real(&device, "device", "radius", None);
    let g1 = r.real(&device, "device", "g1", None);
    let g2 = r.real(&device, "device", "g2", None);

    let lambda_start = r.real(&scan, "scan", "lambda_start", Some(DEFAULT_LAMBDA_START));
    let lambda_stop = r.real(&scan, "scan", "lambda_stop", Some(DEFAULT_LAMBDA_STOP));
    let lambda_step = r.real(&scan, "scan", "lambda_step", Some(DEFAULT_LAMBDA_STEP));

    let defaults = CouplerNumerics::default();
    let x_step = r.real(&numerics, "numerics", "x_step", Some(defaults.x_step));
    let z_step = r.real(&numerics, "numerics", "z_step", Some(defaults.z_step));
    let window_inner = r.real(&numerics, "numerics", "window_inner", radius.or(Some(f64::NAN)));
    let window_outer = r.real(&numerics, "numerics", "window_outer", Some(defaults.window_outer));
    let window_half_length = r.real(&numerics, "numerics", "window_half_length", radius.map(|v| 0.6 * v).or(Some(f64::NAN)));
    let n_bend_modes = r.count(&numerics, "numerics", "n_bend_modes", 3);
    let n_straight_modes = r.count(&numerics, "numerics", "n_straight_modes", 1);
    let workers = r.count(&numerics, "numerics", "workers", 0);
    let bend_orders = match numerics.get("bend_orders") {
        None => None,
        Some(Value::Array(items)) => {
            let parsed: Option<Vec<usize>> = items
                .iter()
                .map(|v| v.as_integer().filter(|&i| i >= 0).map(|i| i as usize))
                .collect();
            if parsed.is_none() {
                r.error("numerics", "bend_orders", "expected a list of non-negative integers");
            }
            parsed
        }
        Some(_) => {
            r.error("numerics", "bend_orders", "expected a list of non-negative integers");
            None
        }
    };
    let n_bend_modes = match (&bend_orders, numerics.contains_key("n_bend_modes")) {
        (Some(orders), false) => orders.len(),
        _ => n_bend_modes,
    };

    // Default map: the whole device, capped at ±8 μm.
    let half = match (radius, g1, g2, w_s, window_outer) {
        (Some(rad), Some(a), Some(b), Some(w), Some(o)) => (rad + a.max(b) + w + o + 2.0).min(8.0),
        _ => 8.0f64,
    };
    let spectrum = r.path(&outputs, "outputs", "spectrum", "spectrum.csv");
    let fieldmap = r.path(&outputs, "outputs", "fieldmap", "fieldmap.csv");
    let modes = r.path(&outputs, "outputs", "modes", "modes.csv");
    let coupler = r.path(&outputs, "outputs", "coupler", "coupler.csv");
    let grid_x_min = r.real(&outputs, "outputs", "grid_x_min", Some(-half));
    let grid_x_max = r.real(&outputs, "outputs", "grid_x_max", Some(half));
    let grid_z_min = r.real(&outputs, "outputs", "grid_z_min", Some(-half));
    let grid_z_max = r.real(&outputs, "outputs", "grid_z_max", Some(half));
    let grid_nx = r.count(&outputs, "outputs", "grid_nx", 161);
    let grid_nz = r.count(&outputs, "outputs", "grid_nz", 161);

    if !r.errors.is_empty() {
        return Err(ConfigError { messages: r.errors });
    }
    // All numbers present from here on.
    let (n_c, n_s, n_b, w_c, w_s, radius, g1, g2) = (
        n_c.unwrap(),
        n_s.unwrap(),
        n_b.unwrap(),
        w_c.unwrap(),
        w_s.unwrap(),
        radius.unwrap(),
        g1.unwrap(),
        g2.unwrap(),
    );

    let device_error = |r: &mut Reader, e: crate::error::Error, slab: bool| {
        let key = match &e {
            crate::error::Error::Validation { field, .. } => device_key(field, slab),
            _ => "device",
        };
        let section = if NUMERICS_KEYS.contains(&key) { "numerics" } else { "device" };
        r.error(section, key, e);
    };
    let bend_geometry = if w_c == 0.0 {
        BendGeometry::disk(radius, n_c, n_b)
    } else {
        BendGeometry::ring(radius, n_c, n_b, w_c)
    };
    let slab_geometry = SlabGeometry::new(n_s, n_b, w_s);
    let (bend_geometry, slab_geometry) = match (bend_geometry, slab_geometry) {
        (Ok(b), Ok(s)) => (b, s),
        (b, s) => {
            if let Err(e) = b {
                device_error(&mut r, e, false);
            }
            if let Err(e) = s {
                device_error(&mut r, e, true);
            }
            return Err(ConfigError { messages: r.errors });
        }
    };
    let device = ResonatorConfig {
        bend_geometry,
        slab_geometry,
        gap1: g1,
        gap2: g2,
        coupler_numerics: CouplerNumerics {
            window_inner: window_inner.unwrap(),
            window_outer: window_outer.unwrap(),
            window_half_length: window_half_length,
            x_step: x_step.unwrap(),
            z_step: z_step.unwrap(),
        },
        n_bend_modes,
        n_straight_modes,
        bend_orders,
    };
    if let Err(e) = device.validate() {
        device_error(&mut r, e, false);
    }
    let scan = ScanConfig {
        lambda_start: lambda_start.unwrap(),
        lambda_stop: lambda_stop.unwrap(),
        lambda_step: lambda_step.unwrap(),
    };
    if let Err(crate::error::Error::Validation { field, reason }) =
        wavelength_grid(scan.lambda_start, scan.lambda_stop, scan.lambda_step)
    {
        r.error("scan", &field, reason);
    }
    let grid = GridSpec {
        x_min: grid_x_min.unwrap(),
        x_max: grid_x_max.unwrap(),
        nx: grid_nx,
        z_min: grid_z_min.unwrap(),
        z_max: grid_z_max.unwrap(),
        nz: grid_nz,
    };
    if let Err(e) = grid.validate() {
        let key = if grid.nx == 0 { "grid_nx" } else if grid.nz == 0 { "grid_nz" } else { "grid_x_max" };
        r.error("outputs", key, e);
    }
    if !r.errors.is_empty() {
        return Err(ConfigError { messages: r.errors });
    }
    Ok(RunConfig {
        device,
        scan,
        outputs: OutputConfig {
            spectrum,
            fieldmap,
            modes,
            coupler,
            grid,
        },
        workers,
    })
}

/// Config key for a validation field reported by the library.
fn device_key(field: &str, slab: bool) -> &'static str {
    match field {
        "core_index" if slab => "n_s",
        "width" | "core_width" if slab => "w_s",
        "g1" => "g1",
        "g2" => "g2",
        "radius" => "radius",
        "core_index" => "n_c",
        "background_index" => "n_b",
        "core_width" => "w_c",
        "window_inner" => "window_inner",
        "window_outer" => "window_outer",
        "window_half_length" | "z_o" => "window_half_length",
        "x_step" => "x_step",
        "z_step" => "z_step",
        "n_bend_modes" => "n_bend_modes",
        "n_straight_modes" => "n_straight_modes",
        "bend_orders" => "bend_orders",
        _ => "device",
    }
}

fn quote(path: &Path) -> String {
    toml::Value::String(path.display().to_string()).to_string()
}

impl RunConfig {
    /// The effective configuration, every default spelled out. Reloading it
    /// reproduces this config exactly.
    pub fn to_toml(&self) -> String {
        let d = &self.device;
        let n = &d.coupler_numerics;
        let radius = d.bend_geometry.radius;
        let mut s = String::new();
        let _ = writeln!(s, "[device]");
        let _ = writeln!(s, "n_c = {:?}", d.bend_geometry.core_index);
        let _ = writeln!(s, "n_s = {:?}", d.slab_geometry.core_index);
        let _ = writeln!(s, "n_b = {:?}", d.bend_geometry.background_index);
        let _ = writeln!(s, "w_c = {:?}", d.bend_geometry.core_width);
        let _ = writeln!(s, "w_s = {:?}", d.slab_geometry.width);
        let _ = writeln!(s, "radius = {radius:?}");
        let _ = writeln!(s, "g1 = {:?}", d.gap1);
        let _ = writeln!(s, "g2 = {:?}", d.gap2);
        let _ = writeln!(s, "\n[scan]");
        let _ = writeln!(s, "lambda_start = {:?}", self.scan.lambda_start);
        let _ = writeln!(s, "lambda_stop = {:?}", self.scan.lambda_stop);
        let _ = writeln!(s, "lambda_step = {:?}", self.scan.lambda_step);
        let _ = writeln!(s, "\n[numerics]");
        let _ = writeln!(s, "x_step = {:?}", n.x_step);
        let _ = writeln!(s, "z_step = {:?}", n.z_step);
        let _ = writeln!(s, "window_inner = {:?}", n.inner(radius));
        let _ = writeln!(s, "window_outer = {:?}", n.window_outer);
        let _ = writeln!(s, "window_half_length = {:?}", n.half_length(radius));
        let _ = writeln!(s, "n_bend_modes = {}", d.n_bend_modes);
        let _ = writeln!(s, "n_straight_modes = {}", d.n_straight_modes);
        if let Some(orders) = &d.bend_orders {
            let list: Vec<String> = orders.iter().map(|o| o.to_string()).collect();
            let _ = writeln!(s, "bend_orders = [{}]", list.join(", "));
        }
        let _ = writeln!(s, "workers = {}", self.workers);
        let o = &self.outputs;
        let _ = writeln!(s, "\n[outputs]");
        let _ = writeln!(s, "spectrum = {}", quote(&o.spectrum));
        let _ = writeln!(s, "fieldmap = {}", quote(&o.fieldmap));
        let _ = writeln!(s, "modes = {}", quote(&o.modes));
        let _ = writeln!(s, "coupler = {}", quote(&o.coupler));
        let _ = writeln!(s, "grid_x_min = {:?}", o.grid.x_min);
        let _ = writeln!(s, "grid_x_max = {:?}", o.grid.x_max);
        let _ = writeln!(s, "grid_nx = {}", o.grid.nx);
        let _ = writeln!(s, "grid_z_min = {:?}", o.grid.z_min);
        let _ = writeln!(s, "grid_z_max = {:?}", o.grid.z_max);
        let _ = writeln!(s, "grid_nz = {}", o.grid.nz);
        s
    }
}
