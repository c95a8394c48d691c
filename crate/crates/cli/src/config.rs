use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nnem::problem::{builtin, BUILTIN_PROBLEMS};
use nnem::{Activation, BoundaryCondition, EnvelopeFamily, Mesh, NetConfig, TrainConfig, TriangleRule};
use toml::Value;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Every accepted key with its default.
pub const KEYS: &[(&str, &str)] = &[
    ("mesh.kind", "\"unit_square\""),
    ("mesh.n", "2"),
    ("mesh.path", "\"\""),
    ("envelope.kind", "\"lagrange\""),
    ("envelope.order", "2"),
    ("envelope.bubbles", "true"),
    ("net.hidden_layers", "2"),
    ("net.width", "16"),
    ("net.activation", "\"sine\""),
    ("space.augment_constant", "true"),
    ("space.bc", "\"auto\""),
    ("train.steps", "0"),
    ("train.lr", "0.0003"),
    ("train.seed", "0"),
    ("train.log_every", "100"),
    ("train.tau", "1e-12"),
    ("quad.triangle_points", "36"),
    ("quad.edge_points", "6"),
    ("problem.name", "\"laplace_sine\""),
    ("output.dir", "\"out\""),
    ("threads", "0"),
    ("study.sizes", "[2, 4, 8, 16, 32]"),
    ("study.nnem_sizes", "[2, 4, 8]"),
    ("study.methods", "[\"fem\"]"),
];

/// Keys that may change between a checkpoint and its resumption.
const UNHASHED: &[&str] = &["train.steps", "train.log_every", "output.dir", "threads"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshSpec {
    UnitSquare,
    LShape,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mesh_kind: Option<MeshSpec>,
    pub mesh_n: usize,
    pub mesh_path: Option<PathBuf>,
    pub family: EnvelopeFamily,
    pub net: NetConfig,
    pub augment: bool,
    pub bc: BoundaryCondition,
    pub train: TrainConfig,
    pub triangle_points: usize,
    pub problem: String,
    pub output_dir: PathBuf,
    pub study_sizes: Vec<usize>,
    pub study_nnem_sizes: Vec<usize>,
    pub study_methods: Vec<String>,
    values: BTreeMap<String, Value>,
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            _ => {
                out.insert(key, v.clone());
            }
        }
    }
}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(p) = &cfg.mesh_path {
            if p.is_relative() {
                cfg.mesh_path = Some(path.parent().unwrap_or(Path::new(".")).join(p));
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e| ConfigError(format!("config is not valid TOML: {e}")))?;
        let mut given = BTreeMap::new();
        flatten("", &table, &mut given);
        for key in given.keys() {
            if !KEYS.iter().any(|(k, _)| k == key) {
                return err(format!("unknown config key `{key}`"));
            }
        }
        let mut values = BTreeMap::new();
        for (k, default) in KEYS {
            let v = match given.remove(*k) {
                Some(v) => v,
                None => format!("v = {default}").parse::<toml::Table>().expect("valid default")["v"].clone(),
            };
            values.insert(k.to_string(), v);
        }
        Self::from_values(values)
    }

    fn from_values(values: BTreeMap<String, Value>) -> Result<Self, ConfigError> {
        let get = |k: &str| &values[k];
        let int = |k: &str, lo: i64, hi: i64| -> Result<usize, ConfigError> {
            match get(k) {
                Value::Integer(i) if (lo..=hi).contains(i) => Ok(*i as usize),
                Value::Integer(i) => err(format!("`{k}` must be in {lo}..={hi}, got {i}")),
                other => err(format!("`{k}` must be an integer, got {other}")),
            }
        };
        let float = |k: &str| -> Result<f64, ConfigError> {
            match get(k) {
                Value::Float(f) => Ok(*f),
                Value::Integer(i) => Ok(*i as f64),
                other => err(format!("`{k}` must be a number, got {other}")),
            }
        };
        let boolean = |k: &str| -> Result<bool, ConfigError> {
            get(k).as_bool().ok_or_else(|| ConfigError(format!("`{k}` must be true or false, got {}", get(k))))
        };
        let string = |k: &str| -> Result<String, ConfigError> {
            get(k).as_str().map(str::to_string).ok_or_else(|| ConfigError(format!("`{k}` must be a string, got {}", get(k))))
        };
        let sizes = |k: &str| -> Result<Vec<usize>, ConfigError> {
            let arr = get(k).as_array().ok_or_else(|| ConfigError(format!("`{k}` must be a list of integers")))?;
            arr.iter()
                .map(|v| match v.as_integer() {
                    Some(i) if (1..=256).contains(&i) => Ok(i as usize),
                    _ => err(format!("`{k}` entries must be integers in 1..=256, got {v}")),
                })
                .collect()
        };

        let (mesh_kind, mesh_path) = match string("mesh.kind")?.as_str() {
            "unit_square" => (Some(MeshSpec::UnitSquare), None),
            "l_shape" => (Some(MeshSpec::LShape), None),
            "file" => {
                let p = string("mesh.path")?;
                if p.is_empty() {
                    return err("`mesh.path` is required when `mesh.kind` is \"file\"");
                }
                (None, Some(PathBuf::from(p)))
            }
            other => return err(format!("`mesh.kind` must be unit_square, l_shape or file, got \"{other}\"")),
        };
        let mesh_n = int("mesh.n", 1, 256)?;

        let family = match string("envelope.kind")?.as_str() {
            "lagrange" => EnvelopeFamily::Lagrange { order: int("envelope.order", 1, 3)? },
            "hierarchical" => EnvelopeFamily::Hierarchical { bubbles: boolean("envelope.bubbles")? },
            other => return err(format!("`envelope.kind` must be lagrange or hierarchical, got \"{other}\"")),
        };

        let activation: Activation =
            string("net.activation")?.parse().map_err(|e: nnem::Error| ConfigError(format!("`net.activation`: {e}")))?;
        let net = NetConfig { hidden_layers: int("net.hidden_layers", 1, 16)?, width: int("net.width", 1, 1024)?, activation };

        let problem = string("problem.name")?;
        let p = builtin(&problem).map_err(|_| {
            ConfigError(format!("`problem.name` \"{problem}\" is not one of {}", BUILTIN_PROBLEMS.join(", ")))
        })?;
        let bc = match string("space.bc")?.as_str() {
            "homogeneous" => BoundaryCondition::Homogeneous,
            "nonhomogeneous" => BoundaryCondition::Nonhomogeneous,
            "auto" => {
                if matches!(problem.as_str(), "linear_xy" | "sine_plus_x") {
                    BoundaryCondition::Nonhomogeneous
                } else {
                    BoundaryCondition::Homogeneous
                }
            }
            other => return err(format!("`space.bc` must be auto, homogeneous or nonhomogeneous, got \"{other}\"")),
        };
        if bc == BoundaryCondition::Nonhomogeneous && p.dirichlet.is_none() {
            return err(format!("problem \"{problem}\" has no boundary data for `space.bc` = nonhomogeneous"));
        }

        let lr = float("train.lr")?;
        if !(lr > 0.0 && lr <= 1.0) {
            return err(format!("`train.lr` must be in (0, 1], got {lr}"));
        }
        let tau = float("train.tau")?;
        if !(0.0..1e-2).contains(&tau) {
            return err(format!("`train.tau` must be in [0, 0.01), got {tau}"));
        }
        let train = TrainConfig {
            max_steps: int("train.steps", 0, 10_000_000)?,
            learning_rate: lr,
            seed: int("train.seed", 0, i64::MAX)? as u64,
            log_every: int("train.log_every", 1, 10_000_000)?,
            tau,
            edge_points: int("quad.edge_points", 1, 64)?,
            ..TrainConfig::default()
        };

        // accepted for compatibility; computations are single-threaded
        int("threads", 0, 4096)?;

        let triangle_points = int("quad.triangle_points", 1, 4096)?;
        let root = (triangle_points as f64).sqrt().round() as usize;
        if root * root != triangle_points || root > 64 {
            return err(format!("`quad.triangle_points` must be a square k*k with k <= 64, got {triangle_points}"));
        }

        let study_methods: Vec<String> = get("study.methods")
            .as_array()
            .ok_or_else(|| ConfigError("`study.methods` must be a list of strings".into()))?
            .iter()
            .map(|v| match v.as_str() {
                Some(s @ ("fem" | "nnem")) => Ok(s.to_string()),
                _ => err(format!("`study.methods` entries must be \"fem\" or \"nnem\", got {v}")),
            })
            .collect::<Result<_, _>>()?;

        Ok(RunConfig {
            mesh_kind,
            mesh_n,
            mesh_path,
            family,
            net,
            augment: boolean("space.augment_constant")?,
            bc,
            train,
            triangle_points,
            problem,
            output_dir: PathBuf::from(string("output.dir")?),
            study_sizes: sizes("study.sizes")?,
            study_nnem_sizes: sizes("study.nnem_sizes")?,
            study_methods,
            values,
        })
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
        self.values.insert("train.seed".into(), Value::Integer(seed as i64));
    }

    pub fn set_output_dir(&mut self, dir: PathBuf) {
        self.values.insert("output.dir".into(), Value::String(dir.display().to_string()));
        self.output_dir = dir;
    }

    /// Sorted `key = value` lines of every key that determines a training
    /// trajectory.
    pub fn canonical_text(&self) -> String {
        self.values
            .iter()
            .filter(|(k, _)| !UNHASHED.contains(&k.as_str()))
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn rule(&self) -> TriangleRule {
        let k = (self.triangle_points as f64).sqrt().round() as usize;
        TriangleRule::collapsed_gauss(k).expect("validated point count")
    }

    pub fn problem(&self) -> nnem::EllipticProblem {
        builtin(&self.problem).expect("validated problem name")
    }

    /// Mesh for the configured kind at size `n` (ignored for file meshes).
    pub fn mesh(&self, n: usize) -> Result<Arc<Mesh>, String> {
        match (self.mesh_kind, &self.mesh_path) {
            (Some(MeshSpec::UnitSquare), _) => Mesh::unit_square(n).map(Arc::new).map_err(|e| e.to_string()),
            (Some(MeshSpec::LShape), _) => Mesh::l_shape(n).map(Arc::new).map_err(|e| e.to_string()),
            (None, Some(p)) => {
                let text = std::fs::read_to_string(p).map_err(|e| format!("cannot read mesh {}: {e}", p.display()))?;
                Mesh::load(&text).map(Arc::new).map_err(|e| format!("{}: {e}", p.display()))
            }
            (None, None) => unreachable!("validated mesh kind"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c.family, EnvelopeFamily::Lagrange { order: 2 });
        assert_eq!(c.net, NetConfig::default());
        assert_eq!(c.triangle_points, 36);
        assert_eq!(c.train.learning_rate, 3e-4);
        assert_eq!(c.bc, BoundaryCondition::Homogeneous);
        assert_eq!(c.rule().len(), 36);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = RunConfig::parse("[train]\nlrr = 0.1\n").unwrap_err();
        assert!(e.0.contains("train.lrr"), "{e}");
        let e = RunConfig::parse("train.lrr = 0.1\n").unwrap_err();
        assert!(e.0.contains("train.lrr"), "{e}");
    }

    #[test]
    fn ranges_are_checked() {
        assert!(RunConfig::parse("train.lr = -1.0").is_err());
        assert!(RunConfig::parse("envelope.order = 4").is_err());
        assert!(RunConfig::parse("quad.triangle_points = 35").is_err());
        assert!(RunConfig::parse("net.activation = \"relu\"").is_err());
        assert!(RunConfig::parse("mesh.kind = \"file\"").is_err());
        assert!(RunConfig::parse("problem.name = \"nope\"").is_err());
        assert!(RunConfig::parse("study.methods = [\"fe\"]").is_err());
        assert!(RunConfig::parse("mesh.n = \"4\"").is_err());
    }

    #[test]
    fn canonical_text_ignores_run_length() {
        let a = RunConfig::parse("train.steps = 10\noutput.dir = \"a\"").unwrap();
        let b = RunConfig::parse("train.steps = 20\noutput.dir = \"b\"").unwrap();
        assert_eq!(a.canonical_text(), b.canonical_text());
        let c = RunConfig::parse("train.lr = 0.001").unwrap();
        let keys = nnem::solver::differing_keys(&a.canonical_text(), &c.canonical_text());
        assert_eq!(keys, vec!["train.lr".to_string()]);
    }

    #[test]
    fn auto_boundary_condition() {
        let c = RunConfig::parse("problem.name = \"linear_xy\"").unwrap();
        assert_eq!(c.bc, BoundaryCondition::Nonhomogeneous);
    }
}
