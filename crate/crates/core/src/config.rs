//! Declarative run configuration: a strict line-oriented `key = value`
//! format with `#` comments. Unknown or duplicate keys are rejected with
//! their line numbers. Command-line overrides use the same keys.
//!
//! Recognized keys (defaults in parentheses):
//!
//! ```text
//! mesh.type            square | torus | file        (required)
//! mesh.n               elements per side, square    (64)
//! mesh.n_u  mesh.n_v   torus elements minor/major   (16 / 64)
//! mesh.degree          spline degree >= 2           (2)
//! mesh.R  mesh.r       torus radii                  (2.0 / 0.5)
//! mesh.file            extraction file path (type = file)
//! material.K0 .K1 .G0 .G1 .c0 .c1 .eta0 .eta1      (standard two-phase set)
//! material.rho_sh      mixture shift                (1.25)
//! material.n_omega     mixing energy scale          (1.0)
//! material.n_kb_t      thermal energy               (1/3)
//! material.rho_hat     reference areal density      (1.0)
//! phase.phi_bar        mean concentration           (1/3; square 0.63)
//! phase.amplitude      perturbation amplitude       (0.05)
//! phase.seed           RNG seed                     (1)
//! phase.lambda         interface parameter          (0.075; square 1/9000)
//! phase.D              mobility constant            (4.0; square 1.0)
//! load.p_int           internal pressure            (0.1; square 0.0)
//! time.dt0             initial step                 (1e-4)
//! time.dt_max          step ceiling                 (2.5)
//! time.dt_min          abort floor                  (1e-12)
//! time.t_end           end time                     (required)
//! time.rho_inf         spectral radius              (0.5)
//! time.tol_newton      Newton tolerance             (1e-4)
//! time.tol_p time.tol_d controller targets          (7.5e-5)
//! time.err_reject      rejection threshold          (1e-4)
//! time.max_newton      iteration cap                (12)
//! time.max_retries     per-step retry cap           (8)
//! sim.rigid            freeze mechanics             (square: true, else false)
//! sim.constraints      auto | none | n:c,n:c,...    (auto; file meshes only)
//! solver.tangent       analytic | fd                (analytic)
//! output.series        CSV file name                (series.csv)
//! output.snapshot_every   accepted steps, 0 = off   (0)
//! output.checkpoint_every accepted steps, 0 = off   (0)
//! output.steady_stop   stop at steady state         (false)
//! output.steady_tol    rate-norm threshold          (1e-6)
//! ```

use crate::material::MaterialParams;
use crate::scenario::{self, Scenario};
use crate::spline::file::load_extraction_mesh;
use crate::timeint::IntegratorConfig;
use crate::{Error, Result};
use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};

/// Raw parsed key/value pairs with source line numbers.
#[derive(Debug, Default, Clone)]
pub struct KeyValues {
    map: BTreeMap<String, (Option<usize>, String)>,
    consumed: std::cell::RefCell<Vec<String>>,
    base_dir: PathBuf,
}

impl KeyValues {
    pub fn parse<R: BufRead>(reader: R, base_dir: &Path) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(Error::Config {
                    line: Some(i + 1),
                    msg: format!("expected `key = value`, found `{body}`"),
                });
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if map.insert(key.clone(), (Some(i + 1), value)).is_some() {
                return Err(Error::Config {
                    line: Some(i + 1),
                    msg: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(KeyValues {
            map,
            consumed: Default::default(),
            base_dir: base_dir.to_path_buf(),
        })
    }

    /// Applies `key=value` overrides (these carry no line numbers).
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for ov in overrides {
            let Some((key, value)) = ov.split_once('=') else {
                return Err(Error::Config {
                    line: None,
                    msg: format!("override `{ov}` is not of the form key=value"),
                });
            };
            self.map
                .insert(key.trim().to_string(), (None, value.trim().to_string()));
        }
        Ok(())
    }

    fn take(&self, key: &str) -> Option<&(Option<usize>, String)> {
        let v = self.map.get(key);
        if v.is_some() {
            self.consumed.borrow_mut().push(key.to_string());
        }
        v
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.take(key) {
            None => Ok(default),
            Some((line, v)) => v.parse().map_err(|_| Error::Config {
                line: *line,
                msg: format!("`{key}` expects a real number, found `{v}`"),
            }),
        }
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.take(key) {
            None => Ok(default),
            Some((line, v)) => v.parse().map_err(|_| Error::Config {
                line: *line,
                msg: format!("`{key}` expects an integer, found `{v}`"),
            }),
        }
    }

    fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.take(key) {
            None => Ok(default),
            Some((line, v)) => v.parse().map_err(|_| Error::Config {
                line: *line,
                msg: format!("`{key}` expects an integer, found `{v}`"),
            }),
        }
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.take(key) {
            None => Ok(default),
            Some((line, v)) => match v.as_str() {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(Error::Config {
                    line: *line,
                    msg: format!("`{key}` expects a boolean, found `{v}`"),
                }),
            },
        }
    }

    fn string_or(&self, key: &str, default: &str) -> String {
        self.take(key)
            .map(|(_, v)| v.clone())
            .unwrap_or_else(|| default.to_string())
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.take(key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| Error::Config {
                line: None,
                msg: format!("missing required key `{key}`"),
            })
    }

    /// Strict mode: every provided key must have been consumed.
    fn reject_unknown(&self) -> Result<()> {
        let consumed = self.consumed.borrow();
        for (key, (line, _)) in &self.map {
            if !consumed.contains(key) {
                return Err(Error::Config {
                    line: *line,
                    msg: format!("unknown key `{key}`"),
                });
            }
        }
        Ok(())
    }
}

/// Output and driver settings that are not part of the scenario itself.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub series_name: String,
    pub snapshot_every: usize,
    pub checkpoint_every: usize,
    pub steady_stop: bool,
    pub steady_tol: f64,
    pub fd_tangent: bool,
}

/// Parses a configuration file plus overrides into a scenario and run
/// settings.
pub fn parse_config(path: &Path, overrides: &[String]) -> Result<(Scenario, RunSettings)> {
    let file = std::fs::File::open(path).map_err(|e| Error::Config {
        line: None,
        msg: format!("cannot open {}: {e}", path.display()),
    })?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut kv = KeyValues::parse(std::io::BufReader::new(file), &base)?;
    kv.apply_overrides(overrides)?;
    build_scenario(&kv)
}

pub fn build_scenario(kv: &KeyValues) -> Result<(Scenario, RunSettings)> {
    let mesh_type = kv.require("mesh.type")?.to_string();
    let degree = kv.usize_or("mesh.degree", 2)?;

    // scenario-dependent defaults
    let (lambda_default, d_default, p_default, phi_default, rigid_default) =
        match mesh_type.as_str() {
            "square" => (1.0 / 9000.0, 1.0, 0.0, 0.63, true),
            _ => (0.075, 4.0, 0.1, 1.0 / 3.0, false),
        };

    let lambda = kv.f64_or("phase.lambda", lambda_default)?;
    let mobility_d = kv.f64_or("phase.D", d_default)?;
    let mut params = MaterialParams::two_phase_defaults(lambda, mobility_d);
    params.k0 = kv.f64_or("material.K0", params.k0)?;
    params.k1 = kv.f64_or("material.K1", params.k1)?;
    params.g0 = kv.f64_or("material.G0", params.g0)?;
    params.g1 = kv.f64_or("material.G1", params.g1)?;
    params.c0 = kv.f64_or("material.c0", params.c0)?;
    params.c1 = kv.f64_or("material.c1", params.c1)?;
    params.eta0 = kv.f64_or("material.eta0", params.eta0)?;
    params.eta1 = kv.f64_or("material.eta1", params.eta1)?;
    params.rho_sh = kv.f64_or("material.rho_sh", params.rho_sh)?;
    params.n_omega = kv.f64_or("material.n_omega", params.n_omega)?;
    params.n_kb_t = kv.f64_or("material.n_kb_t", params.n_kb_t)?;
    params.rho_hat = kv.f64_or("material.rho_hat", params.rho_hat)?;

    let phi_bar = kv.f64_or("phase.phi_bar", phi_default)?;
    let amplitude = kv.f64_or("phase.amplitude", 0.05)?;
    let seed = kv.u64_or("phase.seed", 1)?;
    let p_int = kv.f64_or("load.p_int", p_default)?;

    let t_end = kv
        .require("time.t_end")?
        .parse::<f64>()
        .map_err(|_| Error::Config {
            line: None,
            msg: "time.t_end expects a real number".into(),
        })?;
    let dt0 = kv.f64_or("time.dt0", 1e-4)?;
    let dt_max = kv.f64_or("time.dt_max", 2.5)?;
    let mut integrator = IntegratorConfig::standard(dt0, dt_max);
    integrator.dt_min = kv.f64_or("time.dt_min", integrator.dt_min)?;
    integrator.rho_inf = kv.f64_or("time.rho_inf", integrator.rho_inf)?;
    integrator.tol_newton = kv.f64_or("time.tol_newton", integrator.tol_newton)?;
    integrator.tol_p = kv.f64_or("time.tol_p", integrator.tol_p)?;
    integrator.tol_d = kv.f64_or("time.tol_d", integrator.tol_d)?;
    integrator.reject_threshold = kv.f64_or("time.err_reject", integrator.reject_threshold)?;
    integrator.max_newton = kv.usize_or("time.max_newton", integrator.max_newton)?;
    integrator.max_retries = kv.usize_or("time.max_retries", integrator.max_retries)?;

    let rigid = kv.bool_or("sim.rigid", rigid_default)?;
    let constraints = kv.string_or("sim.constraints", "auto");

    let mut scenario = match mesh_type.as_str() {
        "square" => {
            let n = kv.usize_or("mesh.n", 64)?;
            scenario::build_square(n, degree, params, phi_bar, seed, integrator, t_end)?
        }
        "torus" => {
            let n_u = kv.usize_or("mesh.n_u", 16)?;
            let n_v = kv.usize_or("mesh.n_v", 64)?;
            let big_r = kv.f64_or("mesh.R", 2.0)?;
            let small_r = kv.f64_or("mesh.r", 0.5)?;
            scenario::build_torus(
                big_r, small_r, n_u, n_v, degree, params, phi_bar, p_int, seed, integrator, t_end,
            )?
        }
        "file" => {
            let file = kv.require("mesh.file")?.to_string();
            let path = kv.base_dir.join(&file);
            let f = std::fs::File::open(&path).map_err(|e| Error::Config {
                line: None,
                msg: format!("cannot open mesh file {}: {e}", path.display()),
            })?;
            let mesh = load_extraction_mesh(std::io::BufReader::new(f))?;
            let explicit = parse_constraints(&constraints)?;
            scenario::load_external_scenario(
                mesh, params, phi_bar, p_int, seed, rigid, explicit, integrator, t_end,
            )?
        }
        other => {
            return Err(Error::Config {
                line: None,
                msg: format!("mesh.type must be square, torus or file, got `{other}`"),
            });
        }
    };
    scenario.amplitude = amplitude;
    scenario.rigid = rigid;
    if rigid {
        scenario.fixed.clear();
    }

    let settings = RunSettings {
        series_name: kv.string_or("output.series", "series.csv"),
        snapshot_every: kv.usize_or("output.snapshot_every", 0)?,
        checkpoint_every: kv.usize_or("output.checkpoint_every", 0)?,
        steady_stop: kv.bool_or("output.steady_stop", false)?,
        steady_tol: kv.f64_or("output.steady_tol", 1e-6)?,
        fd_tangent: match kv.string_or("solver.tangent", "analytic").as_str() {
            "analytic" => false,
            "fd" => true,
            other => {
                return Err(Error::Config {
                    line: None,
                    msg: format!("solver.tangent must be analytic or fd, got `{other}`"),
                })
            }
        },
    };
    kv.reject_unknown()?;
    scenario.validate()?;
    Ok((scenario, settings))
}

/// Constraint syntax: `auto`, `none`, or comma-separated `node:component`.
fn parse_constraints(s: &str) -> Result<Option<Vec<(usize, usize)>>> {
    match s {
        "auto" => Ok(None),
        "none" => Ok(Some(Vec::new())),
        list => {
            let mut out = Vec::new();
            for item in list.split(',') {
                let Some((n, c)) = item.split_once(':') else {
                    return Err(Error::Config {
                        line: None,
                        msg: format!("constraint `{item}` is not of the form node:component"),
                    });
                };
                let node = n.trim().parse().map_err(|_| Error::Config {
                    line: None,
                    msg: format!("bad constraint node `{n}`"),
                })?;
                let comp: usize = c.trim().parse().map_err(|_| Error::Config {
                    line: None,
                    msg: format!("bad constraint component `{c}`"),
                })?;
                if comp > 2 {
                    return Err(Error::Config {
                        line: None,
                        msg: "constraint component must be 0, 1 or 2".into(),
                    });
                }
                out.push((node, comp));
            }
            Ok(Some(out))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::BufReader;

    fn kv(text: &str) -> Result<KeyValues> {
        KeyValues::parse(BufReader::new(text.as_bytes()), Path::new("."))
    }

    #[test]
    fn parses_square_config() {
        let text = "\
# test configuration
mesh.type = square
mesh.n = 8
phase.phi_bar = 0.63
time.t_end = 1.0
";
        let kv = kv(text).unwrap();
        let (sc, settings) = build_scenario(&kv).unwrap();
        assert!(sc.rigid);
        assert_eq!(sc.mesh.space.n_elems(), 64);
        assert!((sc.phi_bar - 0.63).abs() < 1e-15);
        assert!((sc.params.lambda - 1.0 / 9000.0).abs() < 1e-18);
        assert_eq!(settings.snapshot_every, 0);
    }

    #[test]
    fn unknown_key_reported_with_line() {
        let text = "mesh.type = square\ntime.t_end = 1\nmesh.bogus = 3\n";
        let kv = kv(text).unwrap();
        match build_scenario(&kv) {
            Err(Error::Config { line, msg }) => {
                assert_eq!(line, Some(3));
                assert!(msg.contains("bogus"));
            }
            other => panic!("expected config error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn duplicate_key_rejected() {
        assert!(kv("a = 1\na = 2\n").is_err());
    }

    #[test]
    fn override_wins() {
        let text = "mesh.type = square\nmesh.n = 8\ntime.t_end = 1.0\n";
        let mut k = kv(text).unwrap();
        k.apply_overrides(&["mesh.n=4".to_string()]).unwrap();
        let (sc, _) = build_scenario(&k).unwrap();
        assert_eq!(sc.mesh.space.n_elems(), 16);
    }

    #[test]
    fn bad_value_type_reported() {
        let text = "mesh.type = square\nmesh.n = few\ntime.t_end = 1.0\n";
        let k = kv(text).unwrap();
        match build_scenario(&k) {
            Err(Error::Config { line, .. }) => assert_eq!(line, Some(2)),
            other => panic!("expected config error, got {:?}", other.map(|_| ())),
        }
    }
}
