use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{MethodConfig, RunOptions, DEFAULT_DIVERGE_BOUND};
use crate::error::{Error, Result};
use crate::game::{Game, JointPoint};
use crate::games::{g2_game, random_bilinear, scalar_bilinear, BilinearGame, QuadraticGame};
use crate::io::{read_matrix_csv, read_vector_csv};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GameSpec {
    ScalarBilinear,
    G2,
    RandomBilinear {
        n: usize,
        seed: u64,
        #[serde(default)]
        cond: Option<f64>,
    },
    /// `theta^T A phi + theta^T b + c^T phi` from CSV files; `b`, `c` default to zero.
    BilinearCsv {
        a: PathBuf,
        #[serde(default)]
        b: Option<PathBuf>,
        #[serde(default)]
        c: Option<PathBuf>,
    },
    QuadraticCsv {
        p: PathBuf,
        q: PathBuf,
        r: PathBuf,
    },
}

/// Either an explicit point or a seeded standard-normal draw.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_seed: Option<u64>,
}

impl InitSpec {
    pub fn point(theta: &[f64], phi: &[f64]) -> Self {
        Self {
            theta: Some(theta.to_vec()),
            phi: Some(phi.to_vec()),
            random_seed: None,
        }
    }

    pub fn random(seed: u64) -> Self {
        Self {
            random_seed: Some(seed),
            ..Self::default()
        }
    }
}

fn default_max_iters() -> usize {
    10_000
}
fn default_tol() -> f64 {
    1e-6
}
fn default_diverge_bound() -> f64 {
    DEFAULT_DIVERGE_BOUND
}
fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub game: GameSpec,
    pub method: MethodConfig,
    pub init: InitSpec,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_diverge_bound")]
    pub diverge_bound: f64,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_path: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(game: GameSpec, method: MethodConfig, init: InitSpec) -> Self {
        Self {
            game,
            method,
            init,
            max_iters: default_max_iters(),
            tol: default_tol(),
            diverge_bound: default_diverge_bound(),
            stride: default_stride(),
            out_path: None,
        }
    }

    /// Parses a JSON document. Relative file paths are resolved against
    /// `base_dir` and must exist.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.resolve_paths(base_dir)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is plain data")
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            max_iters: self.max_iters,
            tol: self.tol,
            diverge_bound: self.diverge_bound,
            stride: self.stride,
        }
    }

    fn resolve_paths(&mut self, base: &Path) -> Result<()> {
        let fix = |key: &str, p: &mut PathBuf| -> Result<()> {
            if p.is_relative() {
                *p = base.join(&*p);
            }
            if !p.is_file() {
                return Err(Error::Config(format!(
                    "game.{key}: file {} does not exist",
                    p.display()
                )));
            }
            Ok(())
        };
        match &mut self.game {
            GameSpec::BilinearCsv { a, b, c } => {
                fix("a", a)?;
                if let Some(b) = b {
                    fix("b", b)?;
                }
                if let Some(c) = c {
                    fix("c", c)?;
                }
            }
            GameSpec::QuadraticCsv { p, q, r } => {
                fix("p", p)?;
                fix("q", q)?;
                fix("r", r)?;
            }
            _ => {}
        }
        if let Some(out) = &mut self.out_path {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        Ok(())
    }

    /// Key-level checks that do not need the game built.
    pub fn check(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Config(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if let GameSpec::RandomBilinear { n, cond, .. } = self.game {
            if n == 0 {
                return Err(Error::Config("game.n must be at least 1".into()));
            }
            if let Some(c) = cond {
                if !(c >= 1.0 && c.is_finite()) {
                    return Err(Error::Config(format!("game.cond must be >= 1, got {c}")));
                }
            }
        }
        match (&self.init.theta, &self.init.phi, self.init.random_seed) {
            (Some(_), Some(_), None) | (None, None, Some(_)) => {}
            _ => {
                return Err(Error::Config(
                    "init: give either both `theta` and `phi` or only `random_seed`".into(),
                ))
            }
        }
        self.method
            .validate()
            .map_err(|e| Error::Config(format!("method: {e}")))
    }
}

/// A constructed game of either builtin family.
#[derive(Debug, Clone)]
pub enum BuiltGame {
    Bilinear(BilinearGame),
    Quadratic(QuadraticGame),
}

impl BuiltGame {
    pub fn as_game(&self) -> &dyn Game {
        match self {
            BuiltGame::Bilinear(g) => g,
            BuiltGame::Quadratic(g) => g,
        }
    }

    pub fn bilinear(&self) -> Option<&BilinearGame> {
        match self {
            BuiltGame::Bilinear(g) => Some(g),
            BuiltGame::Quadratic(_) => None,
        }
    }
}

fn read_or_zeros(path: &Option<PathBuf>, len: usize) -> Result<DVector<f64>> {
    match path {
        Some(p) => read_vector_csv(p),
        None => Ok(DVector::zeros(len)),
    }
}

fn matrix(path: &Path) -> Result<DMatrix<f64>> {
    read_matrix_csv(path)
}

pub fn build_game(spec: &GameSpec) -> Result<BuiltGame> {
    Ok(match spec {
        GameSpec::ScalarBilinear => BuiltGame::Bilinear(scalar_bilinear()),
        GameSpec::G2 => BuiltGame::Quadratic(g2_game()),
        GameSpec::RandomBilinear { n, seed, cond } => {
            if *n == 0 {
                return Err(Error::Config("game.n must be at least 1".into()));
            }
            if let Some(c) = cond {
                if !(*c >= 1.0 && c.is_finite()) {
                    return Err(Error::Config(format!("game.cond must be >= 1, got {c}")));
                }
            }
            BuiltGame::Bilinear(random_bilinear(*n, *seed, *cond))
        }
        GameSpec::BilinearCsv { a, b, c } => {
            let a = matrix(a)?;
            let b = read_or_zeros(b, a.nrows())?;
            let c = read_or_zeros(c, a.ncols())?;
            BuiltGame::Bilinear(BilinearGame::new(a, b, c)?)
        }
        GameSpec::QuadraticCsv { p, q, r } => {
            BuiltGame::Quadratic(QuadraticGame::new(matrix(p)?, matrix(q)?, matrix(r)?)?)
        }
    })
}

/// Standard-normal point drawn from `ChaCha8Rng::seed_from_u64(seed)`,
/// theta coordinates first.
pub fn random_point(m: usize, n: usize, seed: u64) -> JointPoint {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |k: usize| DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
    let theta = draw(m);
    let phi = draw(n);
    JointPoint::new(theta, phi)
}

pub fn build_init(spec: &InitSpec, game: &dyn Game) -> Result<JointPoint> {
    let (m, n) = (game.dim_theta(), game.dim_phi());
    let z = match (&spec.theta, &spec.phi, spec.random_seed) {
        (Some(t), Some(p), None) => JointPoint::from_slices(t, p),
        (None, None, Some(seed)) => random_point(m, n, seed),
        _ => {
            return Err(Error::Config(
                "init: give either both `theta` and `phi` or only `random_seed`".into(),
            ))
        }
    };
    game.check_dims(&z)
        .map_err(|e| Error::Config(format!("init: {e}")))?;
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Method;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::from_json(text, Path::new("."))
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse(
            r#"{"game": {"kind": "scalar_bilinear"},
                "method": {"method": "ppca", "gamma": 1.0, "alpha": 0.1, "beta": 0.3},
                "init": {"theta": [1.0], "phi": [1.0]}}"#,
        )
        .unwrap();
        assert_eq!(cfg.max_iters, 10_000);
        assert_eq!(cfg.tol, 1e-6);
        assert_eq!(cfg.stride, 1);
        assert_eq!(cfg.method.method, Method::Ppca);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = parse(
            r#"{"game": {"kind": "g2"}, "method": {"method": "gda", "alpha": 0.1},
                "init": {"random_seed": 1}, "max_iter": 5}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("max_iter"), "{err}");

        let err = parse(
            r#"{"game": {"kind": "random_bilinear", "n": 2, "seed": 1, "size": 3},
                "method": {"method": "gda", "alpha": 0.1}, "init": {"random_seed": 1}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("size"), "{err}");

        let err = parse(
            r#"{"game": {"kind": "g2"}, "method": {"method": "gda", "alpa": 0.1},
                "init": {"random_seed": 1}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("alpa"), "{err}");
    }

    #[test]
    fn rejects_bad_values() {
        let base = |extra: &str| {
            format!(
                r#"{{"game": {{"kind": "g2"}}, "method": {{"method": "gda", "alpha": 0.1}},
                    "init": {{"theta": [1.0], "phi": [1.0]}}{extra}}}"#
            )
        };
        assert!(parse(&base("")).is_ok());
        assert!(parse(&base(r#", "max_iters": 0"#))
            .unwrap_err()
            .to_string()
            .contains("max_iters"));
        assert!(parse(&base(r#", "stride": 0"#)).is_err());
        assert!(parse(&base(r#", "tol": -1.0"#)).is_err());
        let err = parse(
            r#"{"game": {"kind": "g2"}, "method": {"method": "gda", "alpha": 0.1},
                "init": {"theta": [1.0], "random_seed": 3}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("init"));
    }

    #[test]
    fn missing_csv_is_a_config_error() {
        let err = parse(
            r#"{"game": {"kind": "bilinear_csv", "a": "/nonexistent/A.csv"},
                "method": {"method": "gda", "alpha": 0.1}, "init": {"random_seed": 1}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("game.a"), "{err}");
    }

    #[test]
    fn csv_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("A.csv"), "1,0\n0,2\n").unwrap();
        std::fs::write(dir.path().join("b.csv"), "1\n1\n").unwrap();
        let cfg = ExperimentConfig::from_json(
            r#"{"game": {"kind": "bilinear_csv", "a": "A.csv", "b": "b.csv"},
                "method": {"method": "gda", "alpha": 0.1}, "init": {"random_seed": 1}}"#,
            dir.path(),
        )
        .unwrap();
        let game = build_game(&cfg.game).unwrap();
        let bil = game.bilinear().unwrap();
        assert_eq!(bil.a()[(1, 1)], 2.0);
        assert_eq!(bil.b()[0], 1.0);
        assert_eq!(bil.c().len(), 2);
    }

    #[test]
    fn init_dimensions_are_checked() {
        let game = build_game(&GameSpec::RandomBilinear {
            n: 3,
            seed: 1,
            cond: None,
        })
        .unwrap();
        assert!(build_init(&InitSpec::point(&[1.0], &[1.0]), game.as_game()).is_err());
        let z = build_init(&InitSpec::random(5), game.as_game()).unwrap();
        assert_eq!(z.dims(), (3, 3));
        assert_eq!(z, build_init(&InitSpec::random(5), game.as_game()).unwrap());
    }

    #[test]
    fn json_round_trip() {
        let mut cfg = ExperimentConfig::new(
            GameSpec::RandomBilinear {
                n: 4,
                seed: 9,
                cond: Some(3.0),
            },
            MethodConfig::appca(1.0, 0.1, 0.3),
            InitSpec::random(2),
        );
        cfg.stride = 5;
        let back = parse(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }
}
