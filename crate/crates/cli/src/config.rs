//! INI-style run configuration with `--section.key=value` overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use maxtomo::ddm::SchwarzVariant;
use maxtomo::fem::PhysicsParams;
use maxtomo::inverse::{InverseConfig, SolverConfig};
use maxtomo::mesh::{ChamberSpec, PartitionStrategy};
use maxtomo::phantom::{Ellipsoid, Inclusion, PhantomSpec, Stroke, StrokeRule, EPS_BLOOD, EPS_GEL};
use maxtomo::C64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Every accepted `(section, key)`.
const KEYS: &[(&str, &[&str])] = &[
    ("mesh", &["file", "radius", "height", "rings", "antennas", "size"]),
    ("physics", &["frequency", "eps_ceramic", "a", "b", "amplitude"]),
    (
        "material",
        &[
            "source",
            "eps",
            "file",
            "head_center",
            "head_axes",
            "head_euler",
            "head_eps",
            "stroke_center",
            "stroke_axes",
            "stroke_euler",
            "stroke_rule",
            "stroke_eps",
        ],
    ),
    (
        "solver",
        &["subdomains", "overlap", "variant", "partition", "tol", "max_iter", "restart", "solver_groups", "rhs_per_group", "threads"],
    ),
    (
        "inverse",
        &[
            "alpha",
            "normalize",
            "memory",
            "max_iter",
            "relative_tol",
            "absolute_tol",
            "initial_step",
            "ring",
            "measured",
            "empty",
            "background",
            "initial",
        ],
    ),
    ("synth", &["noise", "seed"]),
    ("bench", &["subdomains", "threads"]),
    ("output", &["dir"]),
];

/// Raw `section.key = value` pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Ini {
    values: BTreeMap<(String, String), String>,
}

impl Ini {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut ini = Ini::default();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let Some(name) = name.strip_suffix(']') else {
                    return err(format!("line {}: unterminated section header", i + 1));
                };
                let name = name.trim();
                if !KEYS.iter().any(|(s, _)| *s == name) {
                    return err(format!("line {}: unknown section [{name}]", i + 1));
                }
                section = Some(name.to_string());
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return err(format!("line {}: expected key = value", i + 1));
            };
            let Some(s) = &section else {
                return err(format!("line {}: key outside any section", i + 1));
            };
            ini.set(s, k.trim(), v.trim())?;
        }
        Ok(ini)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<(), ConfigError> {
        let Some((_, keys)) = KEYS.iter().find(|(s, _)| *s == section) else {
            return err(format!("unknown section [{section}]"));
        };
        if !keys.contains(&key) {
            return err(format!("unknown key {section}.{key}"));
        }
        self.values.insert((section.to_string(), key.to_string()), value.to_string());
        Ok(())
    }

    /// Apply one `section.key=value` override.
    pub fn apply_override(&mut self, arg: &str) -> Result<(), ConfigError> {
        let Some((path, value)) = arg.split_once('=') else {
            return err(format!("override '{arg}' is not section.key=value"));
        };
        let Some((section, key)) = path.split_once('.') else {
            return err(format!("override '{arg}' is not section.key=value"));
        };
        self.set(section, key, value.trim())
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.values.get(&(section.to_string(), key.to_string())).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, section: &str, key: &str, default: T) -> Result<T, ConfigError> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| ConfigError(format!("{section}.{key}: cannot parse '{v}'"))),
        }
    }

    fn complex(&self, section: &str, key: &str, default: C64) -> Result<C64, ConfigError> {
        self.get(section, key).map_or(Ok(default), |v| parse_complex(v).map_err(|e| ConfigError(format!("{section}.{key}: {}", e.0))))
    }

    fn vec3(&self, section: &str, key: &str) -> Result<Option<[f64; 3]>, ConfigError> {
        let Some(v) = self.get(section, key) else { return Ok(None) };
        let parts: Vec<f64> = parse_list(v).map_err(|e| ConfigError(format!("{section}.{key}: {}", e.0)))?;
        match parts[..] {
            [x, y, z] => Ok(Some([x, y, z])),
            _ => err(format!("{section}.{key}: expected three comma-separated numbers")),
        }
    }

    fn path(&self, section: &str, key: &str) -> Option<PathBuf> {
        self.get(section, key).filter(|v| !v.is_empty()).map(PathBuf::from)
    }
}

/// Parse `a`, `bi`, `a+bi`, `a-bi` or `(a,b)`.
pub fn parse_complex(text: &str) -> Result<C64, ConfigError> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || ConfigError(format!("cannot parse complex number '{text}'"));
    if let Some(inner) = s.strip_prefix('(').and_then(|r| r.strip_suffix(')')) {
        let (a, b) = inner.split_once(',').ok_or_else(bad)?;
        return Ok(C64::new(a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?));
    }
    let Some(body) = s.strip_suffix(['i', 'j']) else {
        return s.parse::<f64>().map(|re| C64::new(re, 0.0)).map_err(|_| bad());
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len()).rev().find(|&k| matches!(bytes[k], b'+' | b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(k) => (&body[..k], &body[k..]),
        None => ("0", body),
    };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        v => v.parse().map_err(|_| bad())?,
    };
    Ok(C64::new(re.parse().map_err(|_| bad())?, im))
}

fn parse_list<T: std::str::FromStr>(text: &str) -> Result<Vec<T>, ConfigError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| ConfigError(format!("cannot parse '{s}' in list '{text}'"))))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum MeshSource {
    File(PathBuf),
    Generated(ChamberSpec),
}

#[derive(Clone, Debug, PartialEq)]
pub enum MaterialSource {
    Uniform(C64),
    Phantom(PhantomSpec),
    Csv(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RingSelection {
    /// The whole chamber at once.
    Whole,
    /// One zero-based ring.
    Ring(usize),
    /// Every ring in turn, each starting from the previous result.
    All,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InverseSettings {
    pub config: InverseConfig,
    pub ring: RingSelection,
    pub measured: Option<PathBuf>,
    pub empty: Option<PathBuf>,
    /// Homogeneous initial guess and empty-chamber filling.
    pub background: C64,
    /// Nodal CSV replacing the homogeneous initial guess.
    pub initial: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mesh: MeshSource,
    pub physics: PhysicsParams,
    pub material: MaterialSource,
    pub solver: SolverConfig,
    /// Transmitter groups solved concurrently.
    pub solver_groups: usize,
    /// Right-hand sides per pseudo-block solve; `0` puts every transmitter in one block.
    pub rhs_per_group: usize,
    pub threads: Option<usize>,
    pub inverse: InverseSettings,
    pub noise: f64,
    pub seed: u64,
    pub bench_subdomains: Vec<usize>,
    pub bench_threads: Vec<usize>,
    pub output: PathBuf,
}

impl RunConfig {
    pub fn from_ini(ini: &Ini) -> Result<Self, ConfigError> {
        let physics = PhysicsParams {
            frequency: ini.parsed("physics", "frequency", 1.0e9)?,
            eps_ceramic: ini.complex("physics", "eps_ceramic", C64::new(59.0, 0.0))?,
            port_width: ini.parsed("physics", "a", 0.024)?,
            port_height: ini.parsed("physics", "b", 0.012)?,
            amplitude: ini.parsed("physics", "amplitude", 1.0)?,
        };
        let mesh = match ini.path("mesh", "file") {
            Some(p) => MeshSource::File(p),
            None => MeshSource::Generated(ChamberSpec {
                radius: ini.parsed("mesh", "radius", 0.075)?,
                height: ini.parsed("mesh", "height", 0.03)?,
                n_rings: ini.parsed("mesh", "rings", 1)?,
                antennas_per_ring: ini.parsed("mesh", "antennas", 8)?,
                port_width: physics.port_width,
                port_height: physics.port_height,
                mesh_size: ini.parsed("mesh", "size", 0.0045)?,
            }),
        };
        let material = material_source(ini)?;

        let variant = match ini.get("solver", "variant").unwrap_or("oras") {
            "oras" => SchwarzVariant::Oras,
            "ras" => SchwarzVariant::Ras,
            v => return err(format!("solver.variant: expected oras or ras, got '{v}'")),
        };
        let partition = match ini.get("solver", "partition").unwrap_or("bisection") {
            "bisection" => PartitionStrategy::CoordinateBisection,
            "greedy" => PartitionStrategy::GreedyGraph,
            v => return err(format!("solver.partition: expected bisection or greedy, got '{v}'")),
        };
        let restart = match ini.get("solver", "restart") {
            None | Some("none") => None,
            Some(_) => Some(ini.parsed("solver", "restart", 0usize)?),
        };
        let solver = SolverConfig {
            n_subdomains: ini.parsed("solver", "subdomains", 4)?,
            overlap: ini.parsed("solver", "overlap", 2)?,
            variant,
            partition,
            tol: ini.parsed("solver", "tol", 1e-8)?,
            max_iter: ini.parsed("solver", "max_iter", 500)?,
            restart,
        };
        let threads = match ini.get("solver", "threads") {
            None => None,
            Some(_) => Some(ini.parsed("solver", "threads", 1usize)?),
        };

        let defaults = InverseConfig::default();
        let ring = match ini.get("inverse", "ring").unwrap_or("none") {
            "none" => RingSelection::Whole,
            "all" => RingSelection::All,
            v => match v.parse::<usize>() {
                Ok(r) if r >= 1 => RingSelection::Ring(r - 1),
                _ => return err(format!("inverse.ring: expected none, all or a 1-based ring number, got '{v}'")),
            },
        };
        let inverse = InverseSettings {
            config: InverseConfig {
                alpha: ini.parsed("inverse", "alpha", defaults.alpha)?,
                normalize: ini.parsed("inverse", "normalize", defaults.normalize)?,
                memory: ini.parsed("inverse", "memory", defaults.memory)?,
                max_iter: ini.parsed("inverse", "max_iter", defaults.max_iter)?,
                relative_tol: ini.parsed("inverse", "relative_tol", defaults.relative_tol)?,
                absolute_tol: ini.parsed("inverse", "absolute_tol", defaults.absolute_tol)?,
                initial_step: ini.parsed("inverse", "initial_step", defaults.initial_step)?,
                ..defaults
            },
            ring,
            measured: ini.path("inverse", "measured"),
            empty: ini.path("inverse", "empty"),
            background: ini.complex("inverse", "background", EPS_GEL)?,
            initial: ini.path("inverse", "initial"),
        };

        let bench_threads = match ini.get("bench", "threads") {
            Some(v) => parse_list(v)?,
            None => {
                let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
                (1..=cores).collect()
            }
        };
        let config = RunConfig {
            mesh,
            physics,
            material,
            solver,
            solver_groups: ini.parsed("solver", "solver_groups", 1)?,
            rhs_per_group: ini.parsed("solver", "rhs_per_group", 0)?,
            threads,
            inverse,
            noise: ini.parsed("synth", "noise", 0.1)?,
            seed: ini.parsed("synth", "seed", 42)?,
            bench_subdomains: parse_list(ini.get("bench", "subdomains").unwrap_or("1,2,4,8"))?,
            bench_threads,
            output: ini.path("output", "dir").unwrap_or_else(|| PathBuf::from("out")),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.solver;
        if !(s.tol > 0.0 && s.tol < 1.0) {
            return err(format!("solver.tol must lie in (0, 1), got {}", s.tol));
        }
        if s.n_subdomains == 0 || s.max_iter == 0 || s.restart == Some(0) {
            return err("solver.subdomains, solver.max_iter and solver.restart must be positive");
        }
        if self.threads == Some(0) || self.solver_groups == 0 {
            return err("solver.threads and solver.solver_groups must be at least 1");
        }
        if self.bench_subdomains.is_empty() || self.bench_subdomains.contains(&0) {
            return err("bench.subdomains must list positive counts");
        }
        if self.bench_threads.is_empty() || self.bench_threads.contains(&0) {
            return err("bench.threads must list positive counts");
        }
        if !(self.noise >= 0.0) {
            return err(format!("synth.noise must be non-negative, got {}", self.noise));
        }
        if !(self.physics.frequency > 0.0 && self.physics.port_width > 0.0 && self.physics.port_height > 0.0) {
            return err("physics.frequency, physics.a and physics.b must be positive");
        }
        if let MeshSource::Generated(spec) = &self.mesh {
            spec.validate().map_err(|e| ConfigError(format!("mesh: {e}")))?;
        }
        if self.inverse.ring != RingSelection::Whole && matches!(self.mesh, MeshSource::File(_)) {
            return err("inverse.ring needs a generated chamber mesh");
        }
        self.inverse.config.validate().map_err(|e| ConfigError(format!("inverse: {e}")))?;
        let files = [
            match &self.mesh {
                MeshSource::File(p) => Some(("mesh.file", p)),
                _ => None,
            },
            match &self.material {
                MaterialSource::Csv(p) => Some(("material.file", p)),
                _ => None,
            },
            self.inverse.measured.as_ref().map(|p| ("inverse.measured", p)),
            self.inverse.empty.as_ref().map(|p| ("inverse.empty", p)),
            self.inverse.initial.as_ref().map(|p| ("inverse.initial", p)),
        ];
        for (key, p) in files.into_iter().flatten() {
            if !p.is_file() {
                return err(format!("{key}: file {} does not exist", p.display()));
            }
        }
        Ok(())
    }
}

fn material_source(ini: &Ini) -> Result<MaterialSource, ConfigError> {
    let background = ini.complex("material", "eps", EPS_GEL)?;
    match ini.get("material", "source").unwrap_or("uniform") {
        "uniform" => Ok(MaterialSource::Uniform(background)),
        "csv" => match ini.path("material", "file") {
            Some(p) => Ok(MaterialSource::Csv(p)),
            None => err("material.source = csv needs material.file"),
        },
        "phantom" => {
            let ellipsoid = |prefix: &str| -> Result<Option<Ellipsoid>, ConfigError> {
                let center = ini.vec3("material", &format!("{prefix}_center"))?;
                let axes = ini.vec3("material", &format!("{prefix}_axes"))?;
                let euler = ini.vec3("material", &format!("{prefix}_euler"))?.unwrap_or([0.0; 3]);
                match (center, axes) {
                    (Some(center), Some(semi_axes)) => Ok(Some(Ellipsoid { center, semi_axes, euler })),
                    (None, None) => Ok(None),
                    _ => err(format!("material: {prefix}_center and {prefix}_axes go together")),
                }
            };
            let head = match ellipsoid("head")? {
                Some(shape) => Some(Inclusion { shape, eps: ini.complex("material", "head_eps", background)? }),
                None => None,
            };
            let stroke = match ellipsoid("stroke")? {
                Some(shape) => {
                    let value = ini.complex("material", "stroke_eps", EPS_BLOOD)?;
                    let rule = match ini.get("material", "stroke_rule").unwrap_or("mean") {
                        "mean" => StrokeRule::MeanWithBlood(value),
                        "absolute" => StrokeRule::Absolute(value),
                        v => return err(format!("material.stroke_rule: expected mean or absolute, got '{v}'")),
                    };
                    Some(Stroke { shape, rule })
                }
                None => None,
            };
            Ok(MaterialSource::Phantom(PhantomSpec { background, head, stroke }))
        }
        v => err(format!("material.source: expected uniform, phantom or csv, got '{v}'")),
    }
}
