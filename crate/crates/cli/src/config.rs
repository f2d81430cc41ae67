//! Flat key = value run configuration.
//!
//! Sections in brackets, `#` comments, explicit defaults report. Unknown and
//! duplicate keys are errors; every module invariant is re-validated when the
//! typed blocks are built.

use std::collections::BTreeMap;
use std::fmt;

use magnetoplate_core::fields::read_field2_csv;
use magnetoplate_core::{
    Field2, Grid2, Grid3, LoadSchedule, Loads, Material, SolveOptions,
};

#[derive(Debug)]
pub struct ConfigError {
    pub key: String,
    pub msg: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            write!(f, "config error: {}", self.msg)
        } else {
            write!(f, "config error at `{}`: {}", self.key, self.msg)
        }
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(key: &str, msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError {
        key: key.into(),
        msg: msg.into(),
    })
}

const KNOWN_KEYS: &[&str] = &[
    "material.mu",
    "material.lambda",
    "material.cp",
    "material.pexp",
    "material.beta",
    "grid.nx",
    "grid.ny",
    "grid.lx",
    "grid.ly",
    "grid.nz",
    "solver.grad_tol",
    "solver.max_outer_iters",
    "solver.cg_tol",
    "solver.cg_max_iters",
    "solver.restarts",
    "solver.seed",
    "solver.freeze_zeta",
    "solver.freeze_uv",
    "evolve.nsteps",
    "evolve.times",
    "evolve.t_end",
    "evolve.sigma",
    "evolve.huber_eps",
    "evolve.balance_constant",
    "run.scenario",
    "run.out",
    "run.seed",
    "gamma.spec",
    "gamma.h",
    "magstat.profile",
    "magstat.h",
    "magstat.oracle",
    "magstat.oracle_lz",
    "magstat.oracle_cells",
];

// schedule.* keys are dynamic (indexed); validated separately.
fn is_schedule_key(key: &str) -> bool {
    if !key.starts_with("schedule.") {
        return false;
    }
    let rest = &key["schedule.".len()..];
    if rest == "times" {
        return true;
    }
    for prefix in ["f.", "g.", "h.", "f_file.", "g_file.", "h_file."] {
        if let Some(idx) = rest.strip_prefix(prefix) {
            return idx.parse::<usize>().is_ok();
        }
    }
    false
}

/// Parsed and validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    /// Keys that fell back to their defaults, with the default used.
    pub defaults_report: Vec<(String, String)>,
}

impl RunConfig {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    fn lookup(&mut self, key: &str, default: &str) -> String {
        match self.values.get(key) {
            Some(v) => v.clone(),
            None => {
                self.defaults_report
                    .push((key.to_string(), default.to_string()));
                default.to_string()
            }
        }
    }

    fn f64_key(&mut self, key: &str, default: &str) -> Result<f64, ConfigError> {
        let raw = self.lookup(key, default);
        raw.trim()
            .parse::<f64>()
            .map_err(|e| ConfigError {
                key: key.into(),
                msg: format!("bad number `{raw}`: {e}"),
            })
    }

    fn usize_key(&mut self, key: &str, default: &str) -> Result<usize, ConfigError> {
        let raw = self.lookup(key, default);
        raw.trim().parse::<usize>().map_err(|e| ConfigError {
            key: key.into(),
            msg: format!("bad integer `{raw}`: {e}"),
        })
    }

    fn bool_key(&mut self, key: &str, default: &str) -> Result<bool, ConfigError> {
        let raw = self.lookup(key, default);
        match raw.trim() {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => err(key, format!("bad boolean `{other}`")),
        }
    }

    fn f64_list(&mut self, key: &str, default: &str) -> Result<Vec<f64>, ConfigError> {
        let raw = self.lookup(key, default);
        raw.split(',')
            .map(|p| {
                p.trim().parse::<f64>().map_err(|e| ConfigError {
                    key: key.into(),
                    msg: format!("bad number `{p}`: {e}"),
                })
            })
            .collect()
    }

    /// Override a key programmatically (command-line flags).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !KNOWN_KEYS.contains(&key) && !is_schedule_key(key) {
            return err(key, "unknown key");
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn material(&mut self) -> Result<Material, ConfigError> {
        let mu = self.f64_key("material.mu", "1.0")?;
        let lambda = self.f64_key("material.lambda", "1.0")?;
        let cp = self.f64_key("material.cp", "1.0")?;
        let pexp = self.f64_key("material.pexp", "4.0")?;
        let beta = self.f64_key("material.beta", "8.0")?;
        Material::new(mu, lambda, cp, pexp, beta).map_err(|e| ConfigError {
            key: "material".into(),
            msg: e.to_string(),
        })
    }

    pub fn grid2(&mut self) -> Result<Grid2, ConfigError> {
        let nx = self.usize_key("grid.nx", "17")?;
        let ny = self.usize_key("grid.ny", "17")?;
        let lx = self.f64_key("grid.lx", "1.0")?;
        let ly = self.f64_key("grid.ly", "1.0")?;
        Grid2::new(nx, ny, lx, ly).map_err(|e| ConfigError {
            key: "grid".into(),
            msg: e.to_string(),
        })
    }

    pub fn grid3(&mut self) -> Result<Grid3, ConfigError> {
        let section = self.grid2()?;
        let nz = self.usize_key("grid.nz", "9")?;
        Grid3::new(section, nz).map_err(|e| ConfigError {
            key: "grid.nz".into(),
            msg: e.to_string(),
        })
    }

    pub fn seed(&mut self) -> Result<u64, ConfigError> {
        let raw = self.lookup("run.seed", "42");
        raw.trim().parse::<u64>().map_err(|e| ConfigError {
            key: "run.seed".into(),
            msg: format!("bad seed `{raw}`: {e}"),
        })
    }

    pub fn solve_options(&mut self) -> Result<SolveOptions, ConfigError> {
        let run_seed = self.seed()?;
        let mut opts = SolveOptions {
            grad_tol: self.f64_key("solver.grad_tol", "1e-6")?,
            max_outer_iters: self.usize_key("solver.max_outer_iters", "200")?,
            cg_tol: self.f64_key("solver.cg_tol", "1e-10")?,
            cg_max_iters: self.usize_key("solver.cg_max_iters", "2000")?,
            restarts: self.usize_key("solver.restarts", "4")?,
            freeze_zeta: self.bool_key("solver.freeze_zeta", "false")?,
            freeze_uv: self.bool_key("solver.freeze_uv", "false")?,
            ..SolveOptions::default()
        };
        let solver_seed = self.lookup("solver.seed", &run_seed.to_string());
        opts.seed = solver_seed.trim().parse::<u64>().map_err(|e| ConfigError {
            key: "solver.seed".into(),
            msg: format!("bad seed: {e}"),
        })?;
        opts.validate().map_err(|e| ConfigError {
            key: "solver".into(),
            msg: e.to_string(),
        })?;
        Ok(opts)
    }

    pub fn scenario(&mut self, default: &str) -> String {
        self.lookup("run.scenario", default)
    }

    pub fn out_dir(&mut self) -> String {
        self.lookup("run.out", "out")
    }

    pub fn evolve_t_end(&mut self) -> Result<f64, ConfigError> {
        let t = self.f64_key("evolve.t_end", "1.0")?;
        if !(t > 0.0) {
            return err("evolve.t_end", format!("must be positive, got {t}"));
        }
        Ok(t)
    }

    pub fn evolve_partition(&mut self) -> Result<magnetoplate_core::quasistatic::Partition, ConfigError> {
        if self.values.contains_key("evolve.times") {
            let times = self.f64_list("evolve.times", "")?;
            magnetoplate_core::quasistatic::Partition::new(times).map_err(|e| ConfigError {
                key: "evolve.times".into(),
                msg: e.to_string(),
            })
        } else {
            let t_end = self.evolve_t_end()?;
            let nsteps = self.usize_key("evolve.nsteps", "8")?;
            magnetoplate_core::quasistatic::Partition::uniform(t_end, nsteps).map_err(|e| {
                ConfigError {
                    key: "evolve.nsteps".into(),
                    msg: e.to_string(),
                }
            })
        }
    }

    pub fn sigma(&mut self) -> Result<f64, ConfigError> {
        let s = self.f64_key("evolve.sigma", "1e-3")?;
        if !(s > 0.0) {
            return err("evolve.sigma", format!("must be positive, got {s}"));
        }
        Ok(s)
    }

    pub fn huber_eps(&mut self) -> Result<f64, ConfigError> {
        let e = self.f64_key("evolve.huber_eps", "1e-4")?;
        if !(e > 0.0) {
            return err("evolve.huber_eps", format!("must be positive, got {e}"));
        }
        Ok(e)
    }

    pub fn balance_constant(&mut self) -> Result<f64, ConfigError> {
        self.f64_key("evolve.balance_constant", "1.0")
    }

    pub fn gamma_spec(&mut self) -> String {
        self.lookup("gamma.spec", "zero_e3")
    }

    pub fn gamma_hs(&mut self) -> Result<Vec<f64>, ConfigError> {
        self.f64_list("gamma.h", "0.2, 0.1, 0.05, 0.025")
    }

    pub fn magstat_profile(&mut self) -> String {
        self.lookup("magstat.profile", "cos_mode")
    }

    pub fn magstat_hs(&mut self) -> Result<Vec<f64>, ConfigError> {
        self.f64_list("magstat.h", "0.2, 0.1, 0.05, 0.025, 0.01")
    }

    pub fn magstat_oracle(&mut self) -> Result<bool, ConfigError> {
        self.bool_key("magstat.oracle", "false")
    }

    pub fn magstat_oracle_params(&mut self) -> Result<(f64, usize), ConfigError> {
        let lz = self.f64_key("magstat.oracle_lz", "2.0")?;
        let cells = self.usize_key("magstat.oracle_cells", "3")?;
        Ok((lz, cells))
    }

    fn uniform_loads(
        &self,
        key: &str,
        grid: &Grid2,
        d: usize,
    ) -> Result<Option<Field2>, ConfigError> {
        let Some(raw) = self.values.get(key) else {
            return Ok(None);
        };
        let parts: Vec<f64> = raw
            .split(',')
            .map(|p| {
                p.trim().parse::<f64>().map_err(|e| ConfigError {
                    key: key.into(),
                    msg: format!("bad number `{p}`: {e}"),
                })
            })
            .collect::<Result<_, _>>()?;
        if parts.len() != d {
            return err(key, format!("expected {d} components, got {}", parts.len()));
        }
        Ok(Some(Field2::constant(grid, &parts)))
    }

    fn file_loads(&self, key: &str, grid: &Grid2, d: usize) -> Result<Option<Field2>, ConfigError> {
        let Some(path) = self.values.get(key) else {
            return Ok(None);
        };
        let file = std::fs::File::open(path.trim()).map_err(|e| ConfigError {
            key: key.into(),
            msg: format!("cannot open `{path}`: {e}"),
        })?;
        let mut reader = std::io::BufReader::new(file);
        let (g, field) = read_field2_csv(&mut reader).map_err(|e| ConfigError {
            key: key.into(),
            msg: e.to_string(),
        })?;
        if g != *grid {
            return err(key, "field dump grid does not match the run grid");
        }
        if field.d() != d {
            return err(key, format!("expected {d} components, got {}", field.d()));
        }
        Ok(Some(field))
    }

    /// Build the load schedule. With no `[schedule]` keys a zero schedule on
    /// `[0, t_end]` is produced.
    pub fn schedule(&mut self, grid: &Grid2, t_end: f64) -> Result<LoadSchedule, ConfigError> {
        let has_any = self.values.keys().any(|k| k.starts_with("schedule."));
        if !has_any {
            self.defaults_report
                .push(("schedule".into(), "zero loads".into()));
            return Ok(LoadSchedule::zero(grid, t_end));
        }
        if !self.values.contains_key("schedule.times") {
            return err("schedule.times", "missing required key");
        }
        let times = self.f64_list("schedule.times", "")?;
        let mut samples = Vec::with_capacity(times.len());
        for i in 0..times.len() {
            let mut loads = Loads::zero(grid);
            if let Some(f) = self.uniform_loads(&format!("schedule.f.{i}"), grid, 2)? {
                loads.f = f;
            } else if let Some(f) = self.file_loads(&format!("schedule.f_file.{i}"), grid, 2)? {
                loads.f = f;
            }
            if let Some(g) = self.uniform_loads(&format!("schedule.g.{i}"), grid, 1)? {
                loads.g = g;
            } else if let Some(g) = self.file_loads(&format!("schedule.g_file.{i}"), grid, 1)? {
                loads.g = g;
            }
            if let Some(h) = self.uniform_loads(&format!("schedule.h.{i}"), grid, 3)? {
                loads.hfield = h;
            } else if let Some(h) = self.file_loads(&format!("schedule.h_file.{i}"), grid, 3)? {
                loads.hfield = h;
            }
            samples.push(loads);
        }
        // Indexed keys beyond the knot list are configuration mistakes.
        for key in self.values.keys() {
            for prefix in [
                "schedule.f.",
                "schedule.g.",
                "schedule.h.",
                "schedule.f_file.",
                "schedule.g_file.",
                "schedule.h_file.",
            ] {
                if let Some(idx) = key.strip_prefix(prefix) {
                    let idx: usize = idx.parse().unwrap();
                    if idx >= times.len() {
                        return err(key, format!("knot index {idx} out of range"));
                    }
                }
            }
        }
        LoadSchedule::new(times, samples, grid).map_err(|e| ConfigError {
            key: "schedule".into(),
            msg: e.to_string(),
        })
    }
}

/// Parse the key = value text into a validated configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut values = BTreeMap::new();
    let mut section = String::new();
    for (lineno, raw_line) in text.lines().enumerate() {
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            if !line.ends_with(']') {
                return err("", format!("line {}: malformed section `{line}`", lineno + 1));
            }
            section = line[1..line.len() - 1].trim().to_string();
            continue;
        }
        let Some(eq) = line.find('=') else {
            return err("", format!("line {}: expected key = value, got `{line}`", lineno + 1));
        };
        let key_part = line[..eq].trim();
        let value = line[eq + 1..].trim();
        let full_key = if section.is_empty() {
            key_part.to_string()
        } else {
            format!("{section}.{key_part}")
        };
        if !KNOWN_KEYS.contains(&full_key.as_str()) && !is_schedule_key(&full_key) {
            return err(&full_key, "unknown key");
        }
        if values.contains_key(&full_key) {
            return err(&full_key, "duplicate key");
        }
        values.insert(full_key, value.to_string());
    }
    let mut cfg = RunConfig {
        values,
        defaults_report: Vec::new(),
    };
    // Validate the typed blocks eagerly so bad values fail at load time.
    cfg.material()?;
    cfg.grid3()?;
    cfg.solve_options()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let mut cfg = parse_config("[grid]\nnx = 9\nny = 9\n").unwrap();
        let g = cfg.grid2().unwrap();
        assert_eq!(g.nx(), 9);
        let m = cfg.material().unwrap();
        assert_eq!(m.mu, 1.0);
        assert!(cfg
            .defaults_report
            .iter()
            .any(|(k, _)| k == "material.mu"));
    }

    #[test]
    fn rejects_bad_material() {
        let e = parse_config("[material]\nmu = -1\n").unwrap_err();
        assert!(e.to_string().contains("mu"), "{e}");
    }

    #[test]
    fn rejects_duplicate_key() {
        let e = parse_config("[grid]\nnx = 9\nnx = 11\n").unwrap_err();
        assert_eq!(e.key, "grid.nx");
        assert!(e.msg.contains("duplicate"));
    }

    #[test]
    fn rejects_unknown_key() {
        let e = parse_config("[grid]\nnq = 9\n").unwrap_err();
        assert!(e.msg.contains("unknown key"));
    }

    #[test]
    fn schedule_requires_times() {
        let mut cfg = parse_config("[schedule]\nh.0 = 0, 0, 1\n").unwrap();
        let g = cfg.grid2().unwrap();
        let e = cfg.schedule(&g, 1.0).unwrap_err();
        assert_eq!(e.key, "schedule.times");
        assert!(e.msg.contains("missing required key"));
    }

    #[test]
    fn schedule_uniform_values() {
        let text = "[schedule]\ntimes = 0, 1\nh.1 = 2, 0, 0\ng.0 = 0.5\n";
        let mut cfg = parse_config(text).unwrap();
        let g = cfg.grid2().unwrap();
        let sched = cfg.schedule(&g, 1.0).unwrap();
        let at_end = sched.loads_at(1.0).unwrap();
        assert_eq!(at_end.hfield.node(3, 3), &[2.0, 0.0, 0.0]);
        assert_eq!(at_end.g.at(0, 0, 0), 0.0);
        let at_start = sched.loads_at(0.0).unwrap();
        assert_eq!(at_start.g.at(0, 0, 0), 0.5);
    }

    #[test]
    fn schedule_rejects_out_of_range_knot() {
        let text = "[schedule]\ntimes = 0, 1\nh.7 = 1, 0, 0\n";
        let mut cfg = parse_config(text).unwrap();
        let g = cfg.grid2().unwrap();
        let e = cfg.schedule(&g, 1.0).unwrap_err();
        assert!(e.msg.contains("out of range"));
    }

    #[test]
    fn comments_and_blank_lines() {
        let text = "# heading\n[material]\nmu = 2.0 # inline\n\n";
        let mut cfg = parse_config(text).unwrap();
        assert_eq!(cfg.material().unwrap().mu, 2.0);
    }
}
