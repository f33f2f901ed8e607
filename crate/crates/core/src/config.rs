//! Scenario files: `key = value` lines under `[model]`, `[scenario]` and
//! `[test]` headers. Blank lines and lines starting with `#` or `;` are
//! ignored; unknown sections, unknown keys and repeated keys are errors.
//!
//! ```text
//! [model]
//! kind = bbm
//! bbm_drift = -1.5
//!
//! [scenario]
//! lambda = max_root
//! n_gens = 20
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::analytics::find_roots;
use crate::error::{Error, Result};
use crate::model::{ClusterModel, CountLaw, DisplacementLaw};
use crate::simulator::{Engine, ScenarioConfig, DEFAULT_BINS, DEFAULT_POPULATION_CAP};

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Iid { count: CountLaw, disp: DisplacementLaw },
    /// Unit-time BBM; `drift` is the drift of the Brownian motion as written.
    Bbm { drift: f64 },
}

impl ModelSpec {
    pub fn build(&self) -> Result<ClusterModel> {
        match self {
            ModelSpec::Iid { count, disp } => ClusterModel::iid(*count, disp.clone()),
            ModelSpec::Bbm { drift } => ClusterModel::unit_time_bbm(*drift),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSpec {
    Value(f64),
    MaxRoot,
    MinRoot,
}

impl LambdaSpec {
    pub fn resolve(&self, model: &ClusterModel) -> Result<f64> {
        match self {
            LambdaSpec::Value(v) => Ok(*v),
            LambdaSpec::MaxRoot | LambdaSpec::MinRoot => {
                let roots = find_roots(model)?;
                let pick = if *self == LambdaSpec::MaxRoot { roots.last() } else { roots.first() };
                pick.copied().ok_or_else(|| Error::Infeasible("phi has no root: no exponential equilibrium intensity".into()))
            }
        }
    }
}

impl fmt::Display for LambdaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaSpec::Value(v) => write!(f, "{v}"),
            LambdaSpec::MaxRoot => f.write_str("max_root"),
            LambdaSpec::MinRoot => f.write_str("min_root"),
        }
    }
}

/// Per-command settings from the `[test]` section.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSpec {
    pub engine: Engine,
    pub bins: usize,
    pub population_cap: usize,
    /// Backward-tree depth.
    pub depth: u32,
    /// Target level for the backward tree, in the generation-n frame.
    pub a: f64,
    pub reps: u64,
    pub n_list: Vec<u32>,
    /// Tilt for c_n(t); lambda when unset.
    pub t: Option<f64>,
    pub u1: f64,
    pub u2: f64,
    pub burn_in: u32,
}

impl Default for TestSpec {
    fn default() -> Self {
        TestSpec {
            engine: Engine::Auto,
            bins: DEFAULT_BINS,
            population_cap: DEFAULT_POPULATION_CAP,
            depth: 20,
            a: -8.0,
            reps: 400,
            n_list: vec![5, 10, 15, 20, 25],
            t: None,
            u1: 0.0,
            u2: 0.0,
            burn_in: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub model: ModelSpec,
    pub lambda: LambdaSpec,
    pub c_mult: f64,
    pub n_gens: u32,
    pub obs_lo: f64,
    pub obs_hi: f64,
    pub eps_trunc: f64,
    pub eps_prune: f64,
    pub seed: u64,
    pub replicates: u32,
    pub test: TestSpec,
}

impl Config {
    pub fn with_model(model: ModelSpec) -> Self {
        let d = ScenarioConfig::new(ClusterModel::unit_time_bbm(0.0).expect("finite drift"), 1.0);
        Config {
            model,
            lambda: LambdaSpec::MaxRoot,
            c_mult: d.c_mult,
            n_gens: d.n_gens,
            obs_lo: d.obs_window.0,
            obs_hi: d.obs_window.1,
            eps_trunc: d.eps_trunc,
            eps_prune: d.eps_prune,
            seed: d.rng_seed,
            replicates: d.replicates,
            test: TestSpec::default(),
        }
    }

    /// The simulator scenario with lambda resolved, before `prepare`.
    pub fn scenario(&self) -> Result<ScenarioConfig> {
        let model = self.model.build()?;
        let lambda = self.lambda.resolve(&model)?;
        let mut s = ScenarioConfig::new(model, lambda);
        s.c_mult = self.c_mult;
        s.n_gens = self.n_gens;
        s.obs_window = (self.obs_lo, self.obs_hi);
        s.eps_trunc = self.eps_trunc;
        s.eps_prune = self.eps_prune;
        s.rng_seed = self.seed;
        s.replicates = self.replicates;
        s.bins = self.test.bins;
        s.population_cap = self.test.population_cap;
        s.engine = self.test.engine;
        Ok(s)
    }
}

struct Entry {
    line: usize,
    value: String,
    used: bool,
}

struct Table {
    entries: BTreeMap<String, Entry>,
}

impl Table {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.get_mut(key).map(|e| {
            e.used = true;
            (e.line, e.value.clone())
        })
    }

    /// Every entry, with non-finite numbers rejected up front.
    fn check_finite(&self) -> Result<()> {
        for (key, e) in &self.entries {
            if e.value.split(',').any(|p| p.trim().parse::<f64>().is_ok_and(|x| !x.is_finite())) {
                return Err(Error::config(e.line, format!("{key} must be finite")));
            }
        }
        Ok(())
    }

    fn parse<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::config(line, format!("cannot parse {key} = {v:?}"))),
        }
    }

    fn require(&mut self, key: &str) -> Result<(usize, String)> {
        self.take(key).ok_or_else(|| Error::config(0, format!("missing key {key}")))
    }
}

fn number_list<T: FromStr>(line: usize, key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(|s| s.trim().parse().map_err(|_| Error::config(line, format!("cannot parse {key} entry {s:?}"))))
        .collect()
}

const KEYS: &[&str] = &[
    "model.kind",
    "model.count",
    "model.count_param",
    "model.disp",
    "model.disp_params",
    "model.bbm_drift",
    "scenario.lambda",
    "scenario.c_mult",
    "scenario.n_gens",
    "scenario.obs_lo",
    "scenario.obs_hi",
    "scenario.eps_trunc",
    "scenario.eps_prune",
    "scenario.seed",
    "scenario.replicates",
    "test.engine",
    "test.bins",
    "test.population_cap",
    "test.depth",
    "test.a",
    "test.reps",
    "test.n_list",
    "test.t",
    "test.u1",
    "test.u2",
    "test.burn_in",
];

impl FromStr for Config {
    type Err = Error;

    fn from_str(text: &str) -> Result<Config> {
        let mut section: Option<&str> = None;
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = raw.trim();
            if s.is_empty() || s.starts_with('#') || s.starts_with(';') {
                continue;
            }
            if let Some(name) = s.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| Error::config(line, "unterminated section header"))?
                    .trim();
                if !["model", "scenario", "test"].contains(&name) {
                    return Err(Error::config(line, format!("unknown section [{name}]")));
                }
                section = Some(name);
                continue;
            }
            let (k, v) = s.split_once('=').ok_or_else(|| Error::config(line, "expected key = value"))?;
            let sec = section.ok_or_else(|| Error::config(line, "key outside of a section"))?;
            let key = format!("{sec}.{}", k.trim());
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::config(line, format!("unknown key {key}")));
            }
            let entry = Entry { line, value: v.trim().to_string(), used: false };
            if entries.insert(key.clone(), entry).is_some() {
                return Err(Error::config(line, format!("repeated key {key}")));
            }
        }
        let mut t = Table { entries };
        t.check_finite()?;
        let model = parse_model(&mut t)?;
        let mut cfg = Config::with_model(model);
        if let Some((line, v)) = t.take("scenario.lambda") {
            cfg.lambda = match v.as_str() {
                "max_root" => LambdaSpec::MaxRoot,
                "min_root" => LambdaSpec::MinRoot,
                _ => LambdaSpec::Value(
                    v.parse().map_err(|_| Error::config(line, format!("cannot parse scenario.lambda = {v:?}")))?,
                ),
            };
        }
        macro_rules! set {
            ($field:expr, $key:literal) => {
                if let Some(v) = t.parse($key)? {
                    $field = v;
                }
            };
        }
        set!(cfg.c_mult, "scenario.c_mult");
        set!(cfg.n_gens, "scenario.n_gens");
        set!(cfg.obs_lo, "scenario.obs_lo");
        set!(cfg.obs_hi, "scenario.obs_hi");
        set!(cfg.eps_trunc, "scenario.eps_trunc");
        set!(cfg.eps_prune, "scenario.eps_prune");
        set!(cfg.seed, "scenario.seed");
        set!(cfg.replicates, "scenario.replicates");
        set!(cfg.test.engine, "test.engine");
        set!(cfg.test.bins, "test.bins");
        set!(cfg.test.population_cap, "test.population_cap");
        set!(cfg.test.depth, "test.depth");
        set!(cfg.test.a, "test.a");
        set!(cfg.test.reps, "test.reps");
        set!(cfg.test.u1, "test.u1");
        set!(cfg.test.u2, "test.u2");
        set!(cfg.test.burn_in, "test.burn_in");
        if let Some(v) = t.parse("test.t")? {
            cfg.test.t = Some(v);
        }
        if let Some((line, v)) = t.take("test.n_list") {
            cfg.test.n_list = number_list(line, "test.n_list", &v)?;
        }
        if let Some((key, e)) = t.entries.iter().find(|(_, e)| !e.used) {
            return Err(Error::config(e.line, format!("key {key} does not apply to this model")));
        }
        Ok(cfg)
    }
}

fn parse_model(t: &mut Table) -> Result<ModelSpec> {
    let (line, kind) = t.require("model.kind")?;
    match kind.as_str() {
        "bbm" => {
            let drift = t.parse("model.bbm_drift")?.ok_or_else(|| Error::config(line, "bbm needs model.bbm_drift"))?;
            Ok(ModelSpec::Bbm { drift })
        }
        "iid" => {
            let (cl, count) = t.require("model.count")?;
            let (pl, param) = t.require("model.count_param")?;
            let bad = |what: &str| Error::config(pl, format!("cannot parse model.count_param = {param:?} as {what}"));
            let count = match count.as_str() {
                "fixed" => CountLaw::Fixed(param.parse().map_err(|_| bad("an integer"))?),
                "poisson" => CountLaw::Poisson(param.parse().map_err(|_| bad("a number"))?),
                "geometric" => CountLaw::Geometric(param.parse().map_err(|_| bad("a number"))?),
                other => return Err(Error::config(cl, format!("unknown count law {other:?}"))),
            };
            let (dl, disp) = t.require("model.disp")?;
            let (ql, params) = t.require("model.disp_params")?;
            let p: Vec<f64> = number_list(ql, "model.disp_params", &params)?;
            let arity = |n: usize| {
                if p.len() == n {
                    Ok(())
                } else {
                    Err(Error::config(ql, format!("{disp} takes {n} parameters, got {}", p.len())))
                }
            };
            let disp = match disp.as_str() {
                "gaussian" => {
                    arity(2)?;
                    DisplacementLaw::Gaussian { mean: p[0], var: p[1] }
                }
                "two_point" => {
                    arity(3)?;
                    DisplacementLaw::TwoPoint { a: p[0], b: p[1], p: p[2] }
                }
                "atoms" => {
                    if p.is_empty() || p.len() % 2 != 0 {
                        return Err(Error::config(ql, "atoms take value, weight pairs"));
                    }
                    DisplacementLaw::Atoms(p.chunks(2).map(|c| (c[0], c[1])).collect())
                }
                other => return Err(Error::config(dl, format!("unknown displacement law {other:?}"))),
            };
            Ok(ModelSpec::Iid { count, disp })
        }
        other => Err(Error::config(line, format!("unknown model kind {other:?}"))),
    }
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// Canonical form; parses back to an equal `Config`.
impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[model]")?;
        match &self.model {
            ModelSpec::Bbm { drift } => {
                writeln!(f, "kind = bbm")?;
                writeln!(f, "bbm_drift = {drift}")?;
            }
            ModelSpec::Iid { count, disp } => {
                writeln!(f, "kind = iid")?;
                match count {
                    CountLaw::Fixed(k) => writeln!(f, "count = fixed\ncount_param = {k}")?,
                    CountLaw::Poisson(m) => writeln!(f, "count = poisson\ncount_param = {m}")?,
                    CountLaw::Geometric(p) => writeln!(f, "count = geometric\ncount_param = {p}")?,
                }
                match disp {
                    DisplacementLaw::Gaussian { mean, var } => {
                        writeln!(f, "disp = gaussian\ndisp_params = {mean}, {var}")?
                    }
                    DisplacementLaw::TwoPoint { a, b, p } => {
                        writeln!(f, "disp = two_point\ndisp_params = {a}, {b}, {p}")?
                    }
                    DisplacementLaw::Atoms(list) => {
                        let flat: Vec<f64> = list.iter().flat_map(|&(v, w)| [v, w]).collect();
                        writeln!(f, "disp = atoms\ndisp_params = {}", join(&flat))?
                    }
                }
            }
        }
        writeln!(f, "\n[scenario]")?;
        writeln!(f, "lambda = {}", self.lambda)?;
        writeln!(f, "c_mult = {}", self.c_mult)?;
        writeln!(f, "n_gens = {}", self.n_gens)?;
        writeln!(f, "obs_lo = {}", self.obs_lo)?;
        writeln!(f, "obs_hi = {}", self.obs_hi)?;
        writeln!(f, "eps_trunc = {}", self.eps_trunc)?;
        writeln!(f, "eps_prune = {}", self.eps_prune)?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "replicates = {}", self.replicates)?;
        let t = &self.test;
        writeln!(f, "\n[test]")?;
        writeln!(f, "engine = {}", t.engine)?;
        writeln!(f, "bins = {}", t.bins)?;
        writeln!(f, "population_cap = {}", t.population_cap)?;
        writeln!(f, "depth = {}", t.depth)?;
        writeln!(f, "a = {}", t.a)?;
        writeln!(f, "reps = {}", t.reps)?;
        writeln!(f, "n_list = {}", join(&t.n_list))?;
        if let Some(x) = t.t {
            writeln!(f, "t = {x}")?;
        }
        writeln!(f, "u1 = {}", t.u1)?;
        writeln!(f, "u2 = {}", t.u2)?;
        writeln!(f, "burn_in = {}", t.burn_in)
    }
}
